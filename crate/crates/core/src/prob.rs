//! Exact finite probability over three dichotomous observables.
//!
//! The sample space is the eight joint outcomes of three ±1-valued
//! observables `a`, `b`, `c`. Everything in this module is a pure
//! function of an explicit probability mass function; there is no
//! randomness and no shared state.
//!
//! Atom indexing is fixed so serialized pmfs are portable: atoms are
//! ordered lexicographically over `(a, b, c)` with `+1` before `-1`,
//! i.e. index `0` is `(+,+,+)`, index `1` is `(+,+,-)`, ... index `7`
//! is `(-,-,-)`. Equivalently `index = 4*bit(a) + 2*bit(b) + bit(c)`
//! with `bit(+1) = 0` and `bit(-1) = 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for identities that hold exactly in real arithmetic and are
/// only perturbed by double-precision accumulation over at most 8 terms.
pub const EXACT_TOL: f64 = 1e-12;

/// Tolerance applied to user-supplied data (marginal symmetry checks,
/// witness round-trips).
pub const DATA_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbError {
    #[error("invalid pmf: {0}")]
    InvalidPmf(String),
    #[error("the same observable ({0:?}) was used for both sides of a pair")]
    SameObservable(ObservableId),
    #[error("conditioning event {observable:?}={outcome} has probability zero")]
    ZeroConditioningEvent {
        observable: ObservableId,
        outcome: Outcome,
    },
    #[error("marginals {0:?} are not all 1/2; the symmetric-distribution premise fails")]
    AsymmetricMarginals([f64; 3]),
    #[error("outcome must be encoded +1 or -1, got {0}")]
    InvalidOutcome(i64),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
}

/// A dichotomous answer, encoded +1 ("yes") or -1 ("no"). No other
/// encoding is accepted at any boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub const BOTH: [Outcome; 2] = [Outcome::Plus, Outcome::Minus];

    pub fn value(self) -> i8 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    pub fn from_value(v: i64) -> Result<Self, ProbError> {
        match v {
            1 => Ok(Outcome::Plus),
            -1 => Ok(Outcome::Minus),
            other => Err(ProbError::InvalidOutcome(other)),
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Outcome::Plus => Outcome::Minus,
            Outcome::Minus => Outcome::Plus,
        }
    }

    fn bit(self) -> usize {
        match self {
            Outcome::Plus => 0,
            Outcome::Minus => 1,
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Outcome::Plus => write!(f, "+1"),
            Outcome::Minus => write!(f, "-1"),
        }
    }
}

impl Serialize for Outcome {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i8(self.value())
    }
}

impl<'de> Deserialize<'de> for Outcome {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Outcome::from_value(v).map_err(serde::de::Error::custom)
    }
}

/// One of the three questions. The ordering A < B < C is fixed and is
/// what the atom indexing of [`JointPMF`] is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ObservableId {
    A,
    B,
    C,
}

impl ObservableId {
    pub const ALL: [ObservableId; 3] = [ObservableId::A, ObservableId::B, ObservableId::C];

    pub fn index(self) -> usize {
        match self {
            ObservableId::A => 0,
            ObservableId::B => 1,
            ObservableId::C => 2,
        }
    }
}

/// Probability mass function on the eight joint outcomes of `(a, b, c)`:
/// the finite Kolmogorov space carrying all three observables at once.
///
/// Invariants, enforced at every construction site including
/// deserialization: all atoms nonnegative, atoms sum to 1 within
/// [`EXACT_TOL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PmfAtoms", into = "PmfAtoms")]
pub struct JointPMF {
    atoms: [f64; 8],
}

#[derive(Serialize, Deserialize)]
struct PmfAtoms {
    atoms: [f64; 8],
}

impl TryFrom<PmfAtoms> for JointPMF {
    type Error = ProbError;
    fn try_from(raw: PmfAtoms) -> Result<Self, Self::Error> {
        JointPMF::new(raw.atoms)
    }
}

impl From<JointPMF> for PmfAtoms {
    fn from(pmf: JointPMF) -> Self {
        PmfAtoms { atoms: pmf.atoms }
    }
}

/// Atom index of the joint outcome `(a, b, c)`.
pub fn atom_index(a: Outcome, b: Outcome, c: Outcome) -> usize {
    4 * a.bit() + 2 * b.bit() + c.bit()
}

/// Joint outcome at an atom index; inverse of [`atom_index`].
pub fn atom_outcomes(index: usize) -> (Outcome, Outcome, Outcome) {
    debug_assert!(index < 8);
    let pick = |bit: usize| if bit == 0 { Outcome::Plus } else { Outcome::Minus };
    (pick((index >> 2) & 1), pick((index >> 1) & 1), pick(index & 1))
}

impl JointPMF {
    pub fn new(atoms: [f64; 8]) -> Result<Self, ProbError> {
        for (i, &p) in atoms.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(ProbError::InvalidPmf(format!(
                    "atom {i} is {p}, expected a nonnegative probability"
                )));
            }
        }
        let total: f64 = atoms.iter().sum();
        if (total - 1.0).abs() > EXACT_TOL {
            return Err(ProbError::InvalidPmf(format!(
                "atoms sum to {total}, expected 1 within {EXACT_TOL}"
            )));
        }
        Ok(JointPMF { atoms })
    }

    pub fn uniform() -> Self {
        JointPMF { atoms: [0.125; 8] }
    }

    pub fn point_mass(a: Outcome, b: Outcome, c: Outcome) -> Self {
        let mut atoms = [0.0; 8];
        atoms[atom_index(a, b, c)] = 1.0;
        JointPMF { atoms }
    }

    /// Builds a pmf from `(triple outcome, mass)` pairs; unlisted atoms get 0.
    pub fn from_masses(masses: &[((Outcome, Outcome, Outcome), f64)]) -> Result<Self, ProbError> {
        let mut atoms = [0.0; 8];
        for &((a, b, c), m) in masses {
            atoms[atom_index(a, b, c)] += m;
        }
        JointPMF::new(atoms)
    }

    pub fn atoms(&self) -> &[f64; 8] {
        &self.atoms
    }

    pub fn atom(&self, a: Outcome, b: Outcome, c: Outcome) -> f64 {
        self.atoms[atom_index(a, b, c)]
    }

    /// P(which = +1): sum of the four atoms where the selected observable
    /// answers +1.
    pub fn marginal(&self, which: ObservableId) -> f64 {
        self.event_probability(&[(which, Outcome::Plus)])
    }

    pub fn marginals(&self) -> MarginalVector {
        MarginalVector {
            p_plus: [
                self.marginal(ObservableId::A),
                self.marginal(ObservableId::B),
                self.marginal(ObservableId::C),
            ],
        }
    }

    /// Sum of atoms consistent with every `(observable, outcome)` pin.
    fn event_probability(&self, pins: &[(ObservableId, Outcome)]) -> f64 {
        let mut total = 0.0;
        for (index, &mass) in self.atoms.iter().enumerate() {
            let (a, b, c) = atom_outcomes(index);
            let outcome_of = |o: ObservableId| match o {
                ObservableId::A => a,
                ObservableId::B => b,
                ObservableId::C => c,
            };
            if pins.iter().all(|&(obs, out)| outcome_of(obs) == out) {
                total += mass;
            }
        }
        total
    }

    /// P(u = x, v = y) for two distinct observables.
    pub fn pair_probability(
        &self,
        u: ObservableId,
        x: Outcome,
        v: ObservableId,
        y: Outcome,
    ) -> Result<f64, ProbError> {
        if u == v {
            return Err(ProbError::SameObservable(u));
        }
        Ok(self.event_probability(&[(u, x), (v, y)]))
    }

    /// Bayes conditioning: P(target | given) = P(target, given) / P(given).
    ///
    /// Fails with [`ProbError::ZeroConditioningEvent`] when the
    /// conditioning event carries no mass (within [`EXACT_TOL`]).
    pub fn bayes_conditional(
        &self,
        target: (ObservableId, Outcome),
        given: (ObservableId, Outcome),
    ) -> Result<f64, ProbError> {
        if target.0 == given.0 {
            return Err(ProbError::SameObservable(target.0));
        }
        let p_given = self.event_probability(&[given]);
        if p_given <= EXACT_TOL {
            return Err(ProbError::ZeroConditioningEvent {
                observable: given.0,
                outcome: given.1,
            });
        }
        Ok(self.event_probability(&[target, given]) / p_given)
    }

    /// Evaluates P(a=+1, b=+1) + P(b=-1, c=+1) >= P(a=+1, c=+1), which
    /// holds for any three ±1 random variables on one probability space.
    pub fn wigner_check(&self) -> WignerCheck {
        use ObservableId::*;
        use Outcome::*;
        let lhs = self.event_probability(&[(A, Plus), (B, Plus)])
            + self.event_probability(&[(B, Minus), (C, Plus)]);
        let rhs = self.event_probability(&[(A, Plus), (C, Plus)]);
        WignerCheck {
            lhs,
            rhs,
            holds: lhs >= rhs - EXACT_TOL,
        }
    }

    /// The three conditionals entering the conditional-probability
    /// inequality: P(a=+1|b=+1), P(c=+1|b=-1), P(a=+1|c=+1).
    pub fn conditionals_from_joint(&self) -> Result<ConditionalTriple, ProbError> {
        use ObservableId::*;
        use Outcome::*;
        Ok(ConditionalTriple {
            p_a_given_b_plus: self.bayes_conditional((A, Plus), (B, Plus))?,
            p_c_given_b_minus: self.bayes_conditional((C, Plus), (B, Minus))?,
            p_a_given_c_plus: self.bayes_conditional((A, Plus), (C, Plus))?,
        })
    }

    /// Checks the proof identities that turn pair probabilities into
    /// conditionals under symmetric marginals: P(a+|b+) = 2 P(a+,b+),
    /// P(c+|b-) = 2 P(c+,b-) and P(a+|c+) = 2 P(a+,c+).
    ///
    /// Requires every marginal to equal 1/2 within [`DATA_TOL`];
    /// otherwise the premise fails and [`ProbError::AsymmetricMarginals`]
    /// is returned.
    pub fn halving_identity_check(&self) -> Result<bool, ProbError> {
        use ObservableId::*;
        use Outcome::*;
        let marginals = self.marginals();
        if !marginals.is_symmetric() {
            return Err(ProbError::AsymmetricMarginals(marginals.p_plus));
        }
        let pairs = [
            ((A, Plus), (B, Plus)),
            ((C, Plus), (B, Minus)),
            ((A, Plus), (C, Plus)),
        ];
        for (target, given) in pairs {
            let conditional = self.bayes_conditional(target, given)?;
            let joint = self.event_probability(&[target, given]);
            if (conditional - 2.0 * joint).abs() > EXACT_TOL {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Result of evaluating the pair-probability inequality on a pmf.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WignerCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// The three conditional probabilities the experiment estimates.
/// Each lies in [0, 1]; enforced on construction and deserialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TripleRaw", into = "TripleRaw")]
pub struct ConditionalTriple {
    pub p_a_given_b_plus: f64,
    pub p_c_given_b_minus: f64,
    pub p_a_given_c_plus: f64,
}

#[derive(Serialize, Deserialize)]
struct TripleRaw {
    p_a_given_b_plus: f64,
    p_c_given_b_minus: f64,
    p_a_given_c_plus: f64,
}

impl TryFrom<TripleRaw> for ConditionalTriple {
    type Error = ProbError;
    fn try_from(raw: TripleRaw) -> Result<Self, Self::Error> {
        ConditionalTriple::new(raw.p_a_given_b_plus, raw.p_c_given_b_minus, raw.p_a_given_c_plus)
    }
}

impl From<ConditionalTriple> for TripleRaw {
    fn from(t: ConditionalTriple) -> Self {
        TripleRaw {
            p_a_given_b_plus: t.p_a_given_b_plus,
            p_c_given_b_minus: t.p_c_given_b_minus,
            p_a_given_c_plus: t.p_a_given_c_plus,
        }
    }
}

impl ConditionalTriple {
    pub fn new(
        p_a_given_b_plus: f64,
        p_c_given_b_minus: f64,
        p_a_given_c_plus: f64,
    ) -> Result<Self, ProbError> {
        for p in [p_a_given_b_plus, p_c_given_b_minus, p_a_given_c_plus] {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(ProbError::InvalidProbability(p));
            }
        }
        Ok(ConditionalTriple {
            p_a_given_b_plus,
            p_c_given_b_minus,
            p_a_given_c_plus,
        })
    }
}

/// Verdict of the conditional-probability inequality on a triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondBellDelta {
    pub delta: f64,
    pub violated: bool,
}

/// Delta = P(a+|c+) - P(a+|b+) - P(c+|b-). Positive delta means the
/// conditional-probability inequality is violated; any triple obtained
/// from a single symmetric-marginal pmf has delta <= 0.
pub fn cond_bell_delta(t: &ConditionalTriple) -> CondBellDelta {
    let delta = t.p_a_given_c_plus - t.p_a_given_b_plus - t.p_c_given_b_minus;
    CondBellDelta {
        delta,
        violated: delta > EXACT_TOL,
    }
}

/// The +1 marginal of each observable, in A, B, C order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalVector {
    pub p_plus: [f64; 3],
}

impl MarginalVector {
    pub fn new(p_plus: [f64; 3]) -> Result<Self, ProbError> {
        for p in p_plus {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(ProbError::InvalidProbability(p));
            }
        }
        Ok(MarginalVector { p_plus })
    }

    pub fn symmetric() -> Self {
        MarginalVector { p_plus: [0.5; 3] }
    }

    /// True iff every marginal equals 1/2 within [`DATA_TOL`]. This is
    /// the homogeneity premise of the whole test.
    pub fn is_symmetric(&self) -> bool {
        self.p_plus.iter().all(|p| (p - 0.5).abs() <= DATA_TOL)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use ObservableId::*;
    use Outcome::*;

    fn perfect_correlation() -> JointPMF {
        JointPMF::from_masses(&[((Plus, Plus, Plus), 0.5), ((Minus, Minus, Minus), 0.5)]).unwrap()
    }

    fn anti_block() -> JointPMF {
        JointPMF::from_masses(&[((Plus, Minus, Minus), 0.5), ((Minus, Plus, Plus), 0.5)]).unwrap()
    }

    #[test]
    fn atom_indexing_is_lexicographic_plus_first() {
        assert_eq!(atom_index(Plus, Plus, Plus), 0);
        assert_eq!(atom_index(Plus, Plus, Minus), 1);
        assert_eq!(atom_index(Plus, Minus, Plus), 2);
        assert_eq!(atom_index(Plus, Minus, Minus), 3);
        assert_eq!(atom_index(Minus, Plus, Plus), 4);
        assert_eq!(atom_index(Minus, Plus, Minus), 5);
        assert_eq!(atom_index(Minus, Minus, Plus), 6);
        assert_eq!(atom_index(Minus, Minus, Minus), 7);
        for i in 0..8 {
            let (a, b, c) = atom_outcomes(i);
            assert_eq!(atom_index(a, b, c), i);
        }
    }

    #[test]
    fn marginal_examples() {
        assert_eq!(JointPMF::uniform().marginal(A), 0.5);
        assert_eq!(JointPMF::point_mass(Plus, Plus, Plus).marginal(B), 1.0);
        assert_eq!(perfect_correlation().marginal(C), 0.5);
    }

    #[test]
    fn pair_probability_examples() {
        let u = JointPMF::uniform();
        assert_eq!(u.pair_probability(A, Plus, B, Plus).unwrap(), 0.25);
        assert_eq!(
            perfect_correlation().pair_probability(A, Plus, C, Plus).unwrap(),
            0.5
        );
        assert_eq!(anti_block().pair_probability(B, Minus, C, Plus).unwrap(), 0.0);
    }

    #[test]
    fn pair_probability_rejects_same_observable() {
        let err = JointPMF::uniform().pair_probability(B, Plus, B, Minus).unwrap_err();
        assert_eq!(err, ProbError::SameObservable(B));
    }

    #[test]
    fn bayes_conditional_examples() {
        let u = JointPMF::uniform();
        assert_eq!(u.bayes_conditional((A, Plus), (B, Plus)).unwrap(), 0.5);
        assert_eq!(
            perfect_correlation().bayes_conditional((A, Plus), (C, Plus)).unwrap(),
            1.0
        );
        let err = JointPMF::point_mass(Plus, Plus, Plus)
            .bayes_conditional((A, Plus), (B, Minus))
            .unwrap_err();
        assert_eq!(
            err,
            ProbError::ZeroConditioningEvent {
                observable: B,
                outcome: Minus
            }
        );
    }

    #[test]
    fn wigner_check_examples() {
        let w = JointPMF::uniform().wigner_check();
        assert_eq!(w.lhs, 0.5);
        assert_eq!(w.rhs, 0.25);
        assert!(w.holds);

        let w = perfect_correlation().wigner_check();
        assert_eq!(w.lhs, 0.5);
        assert_eq!(w.rhs, 0.5);
        assert!(w.holds);
    }

    #[test]
    fn conditionals_from_joint_examples() {
        let t = JointPMF::uniform().conditionals_from_joint().unwrap();
        assert_eq!(
            (t.p_a_given_b_plus, t.p_c_given_b_minus, t.p_a_given_c_plus),
            (0.5, 0.5, 0.5)
        );

        let t = perfect_correlation().conditionals_from_joint().unwrap();
        assert_eq!(
            (t.p_a_given_b_plus, t.p_c_given_b_minus, t.p_a_given_c_plus),
            (1.0, 0.0, 1.0)
        );

        let t = anti_block().conditionals_from_joint().unwrap();
        assert_eq!(
            (t.p_a_given_b_plus, t.p_c_given_b_minus, t.p_a_given_c_plus),
            (0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn cond_bell_delta_examples() {
        let d = cond_bell_delta(&ConditionalTriple::new(0.5, 0.5, 0.5).unwrap());
        assert_eq!(d.delta, -0.5);
        assert!(!d.violated);

        let d = cond_bell_delta(&ConditionalTriple::new(1.0, 0.0, 1.0).unwrap());
        assert_eq!(d.delta, 0.0);
        assert!(!d.violated);

        // Value realized by the sequential qubit model at directions
        // 120deg / 0deg / 60deg; see the quantum module's oracle tests.
        let d = cond_bell_delta(&ConditionalTriple::new(0.25, 0.25, 0.75).unwrap());
        assert_eq!(d.delta, 0.25);
        assert!(d.violated);
    }

    #[test]
    fn halving_identity_examples() {
        assert!(JointPMF::uniform().halving_identity_check().unwrap());
        assert!(perfect_correlation().halving_identity_check().unwrap());
        let err = JointPMF::point_mass(Plus, Plus, Plus)
            .halving_identity_check()
            .unwrap_err();
        assert!(matches!(err, ProbError::AsymmetricMarginals(_)));
    }

    #[test]
    fn pmf_validation_rejects_bad_input() {
        assert!(JointPMF::new([0.2; 8]).is_err()); // sums to 1.6
        let mut atoms = [0.125; 8];
        atoms[0] = -0.125;
        atoms[1] = 0.375;
        assert!(JointPMF::new(atoms).is_err());
        assert!(JointPMF::new([f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn pmf_json_round_trip() {
        let pmf = perfect_correlation();
        let json = serde_json::to_string(&pmf).unwrap();
        assert_eq!(json, r#"{"atoms":[0.5,0.0,0.0,0.0,0.0,0.0,0.0,0.5]}"#);
        let back: JointPMF = serde_json::from_str(&json).unwrap();
        assert_eq!(back, pmf);

        let bad: Result<JointPMF, _> = serde_json::from_str(r#"{"atoms":[1,1,0,0,0,0,0,0]}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn outcome_serde_rejects_other_encodings() {
        assert_eq!(serde_json::to_string(&Outcome::Plus).unwrap(), "1");
        assert_eq!(serde_json::from_str::<Outcome>("-1").unwrap(), Outcome::Minus);
        assert!(serde_json::from_str::<Outcome>("0").is_err());
        assert!(serde_json::from_str::<Outcome>("\"yes\"").is_err());
    }

    prop_compose! {
        /// Arbitrary valid pmf: eight nonnegative weights, normalized.
        fn arb_pmf()(raw in prop::array::uniform8(0.0f64..1.0)) -> JointPMF {
            let total: f64 = raw.iter().sum();
            if total <= 0.0 {
                return JointPMF::uniform();
            }
            let mut atoms = raw;
            for a in &mut atoms {
                *a /= total;
            }
            // Guard against normalization drift before constructing.
            let sum: f64 = atoms.iter().sum();
            atoms[7] += 1.0 - sum;
            if atoms[7] < 0.0 {
                atoms[7] = 0.0;
            }
            JointPMF::new(atoms).unwrap()
        }
    }

    proptest! {
        #[test]
        fn wigner_holds_for_every_pmf(pmf in arb_pmf()) {
            prop_assert!(pmf.wigner_check().holds);
        }

        #[test]
        fn bayes_consistency(pmf in arb_pmf(), target_plus in any::<bool>(), given_plus in any::<bool>()) {
            let target = (A, if target_plus { Plus } else { Minus });
            let given = (C, if given_plus { Plus } else { Minus });
            let p_given = pmf.pair_probability(B, Plus, given.0, given.1).unwrap()
                + pmf.pair_probability(B, Minus, given.0, given.1).unwrap();
            match pmf.bayes_conditional(target, given) {
                Ok(cond) => {
                    let joint = pmf.pair_probability(target.0, target.1, given.0, given.1).unwrap();
                    prop_assert!((cond * p_given - joint).abs() <= EXACT_TOL);
                }
                Err(ProbError::ZeroConditioningEvent { .. }) => {
                    prop_assert!(p_given <= EXACT_TOL);
                }
                Err(e) => return Err(TestCaseError::fail(format!("unexpected error {e}"))),
            }
        }
    }
}
