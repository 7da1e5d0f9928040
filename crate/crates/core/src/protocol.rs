//! Simulator of the four-step splitting experiment.
//!
//! A population of identically prepared agents is split at random into
//! two equal halves U and V. Question b goes to U and question c goes
//! to V. The +1 answerers of U get question a, the -1 answerers of U
//! get question c, and the +1 answerers of V get question a; the -1
//! answerers of V are recorded but asked nothing further. The output is
//! exactly the count table an experimenter would write down.
//!
//! Every subject draws from its own random stream derived from
//! `(seed, subject index)`, so results are bitwise reproducible and
//! independent of evaluation order.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classical::sample_latent_triple;
use crate::prob::{ConditionalTriple, JointPMF, MarginalVector, ObservableId, Outcome};
use crate::quantum::{sequential_conditional, QuantumError, QubitExperiment};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("population size {0} is odd; the protocol needs an even split")]
    OddPopulation(u64),
    #[error("population size {0} is too small; at least 4 subjects are needed")]
    PopulationTooSmall(u64),
    #[error(
        "branch {branch} received no subjects; resimulate with a larger population than {n_total}"
    )]
    ZeroBranch { branch: &'static str, n_total: u64 },
    #[error("classical agent pmf has asymmetric marginals {0:?}; the ensemble is not homogeneous")]
    AsymmetricClassical([f64; 3]),
    #[error("table agent marginals {0:?} are not symmetric")]
    AsymmetricTable([f64; 3]),
    #[error("quantum agent is unusable: {0}")]
    Quantum(#[from] QuantumError),
}

/// The population model the protocol runs against.
///
/// `Classical` agents carry a latent answer triple drawn once from a
/// joint pmf. `Quantum` agents answer the first question by the Born
/// rule and the second from the post-measurement state. `Table` agents
/// answer straight from specified marginals and conditionals, which may
/// be non-realizable; that is the point of having them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AgentModel {
    Classical { pmf: JointPMF },
    Quantum { experiment: QubitExperiment },
    Table {
        triple: ConditionalTriple,
        marginals: MarginalVector,
    },
}

impl AgentModel {
    pub fn classical(pmf: JointPMF) -> Self {
        AgentModel::Classical { pmf }
    }

    pub fn quantum(experiment: QubitExperiment) -> Self {
        AgentModel::Quantum { experiment }
    }

    pub fn table(triple: ConditionalTriple, marginals: MarginalVector) -> Self {
        AgentModel::Table { triple, marginals }
    }

    /// Homogeneity gate: classical and table populations must have
    /// symmetric marginals. Quantum experiments are allowed through
    /// even when inhomogeneous; the analysis stage reports that.
    pub fn validate(&self) -> Result<(), ProtocolError> {
        match self {
            AgentModel::Classical { pmf } => {
                let m = pmf.marginals();
                if !m.is_symmetric() {
                    return Err(ProtocolError::AsymmetricClassical(m.p_plus));
                }
            }
            AgentModel::Table { marginals, .. } => {
                if !marginals.is_symmetric() {
                    return Err(ProtocolError::AsymmetricTable(marginals.p_plus));
                }
            }
            AgentModel::Quantum { .. } => {}
        }
        Ok(())
    }
}

/// Which half of the split a subject landed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    U,
    V,
}

/// One subject's trace through the protocol. Subjects in V who answered
/// -1 have no second answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject: u64,
    pub branch: Branch,
    pub first_answer: Outcome,
    pub second_answer: Option<Outcome>,
}

impl SubjectRecord {
    /// The question asked first in this subject's branch.
    pub fn first_question(&self) -> ObservableId {
        match self.branch {
            Branch::U => ObservableId::B,
            Branch::V => ObservableId::C,
        }
    }

    /// The question asked second, if any.
    pub fn second_question(&self) -> Option<ObservableId> {
        match (self.branch, self.first_answer) {
            (Branch::U, Outcome::Plus) => Some(ObservableId::A),
            (Branch::U, Outcome::Minus) => Some(ObservableId::C),
            (Branch::V, Outcome::Plus) => Some(ObservableId::A),
            (Branch::V, Outcome::Minus) => None,
        }
    }
}

/// Raw counts of a protocol run. `seed` is present for simulated data
/// and absent for ingested field data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub n_total: u64,
    pub n_u: u64,
    pub n_v: u64,
    pub u_b_plus: u64,
    pub u_b_minus: u64,
    pub v_c_plus: u64,
    pub v_c_minus: u64,
    pub a_plus_given_b_plus: u64,
    pub c_plus_given_b_minus: u64,
    pub a_plus_given_c_plus: u64,
    pub seed: Option<u64>,
}

impl ProtocolResult {
    /// Aggregates per-subject records into the count table.
    pub fn from_records(records: &[SubjectRecord], seed: Option<u64>) -> Self {
        let mut result = ProtocolResult {
            n_total: records.len() as u64,
            n_u: 0,
            n_v: 0,
            u_b_plus: 0,
            u_b_minus: 0,
            v_c_plus: 0,
            v_c_minus: 0,
            a_plus_given_b_plus: 0,
            c_plus_given_b_minus: 0,
            a_plus_given_c_plus: 0,
            seed,
        };
        for r in records {
            match (r.branch, r.first_answer) {
                (Branch::U, Outcome::Plus) => {
                    result.n_u += 1;
                    result.u_b_plus += 1;
                    if r.second_answer == Some(Outcome::Plus) {
                        result.a_plus_given_b_plus += 1;
                    }
                }
                (Branch::U, Outcome::Minus) => {
                    result.n_u += 1;
                    result.u_b_minus += 1;
                    if r.second_answer == Some(Outcome::Plus) {
                        result.c_plus_given_b_minus += 1;
                    }
                }
                (Branch::V, Outcome::Plus) => {
                    result.n_v += 1;
                    result.v_c_plus += 1;
                    if r.second_answer == Some(Outcome::Plus) {
                        result.a_plus_given_c_plus += 1;
                    }
                }
                (Branch::V, Outcome::Minus) => {
                    result.n_v += 1;
                    result.v_c_minus += 1;
                }
            }
        }
        result
    }

    /// Denominators of the three estimated conditionals.
    pub fn branch_sizes(&self) -> (u64, u64, u64) {
        (self.u_b_plus, self.u_b_minus, self.v_c_plus)
    }
}

/// Per-agent answer probabilities, resolved once per run.
enum Behavior<'a> {
    Latent(&'a JointPMF),
    Probabilities {
        first_plus_u: f64,
        first_plus_v: f64,
        a_plus_given_b_plus: f64,
        c_plus_given_b_minus: f64,
        a_plus_given_c_plus: f64,
    },
}

impl<'a> Behavior<'a> {
    fn resolve(agents: &'a AgentModel) -> Result<Self, ProtocolError> {
        use ObservableId::*;
        use Outcome::*;
        match agents {
            AgentModel::Classical { pmf } => Ok(Behavior::Latent(pmf)),
            AgentModel::Quantum { experiment } => {
                let marginals = experiment.first_marginals();
                Ok(Behavior::Probabilities {
                    first_plus_u: marginals[1],
                    first_plus_v: marginals[2],
                    a_plus_given_b_plus: sequential_conditional(experiment, B, Plus, A)?,
                    c_plus_given_b_minus: sequential_conditional(experiment, B, Minus, C)?,
                    a_plus_given_c_plus: sequential_conditional(experiment, C, Plus, A)?,
                })
            }
            AgentModel::Table { triple, marginals } => Ok(Behavior::Probabilities {
                first_plus_u: marginals.p_plus[1],
                first_plus_v: marginals.p_plus[2],
                a_plus_given_b_plus: triple.p_a_given_b_plus,
                c_plus_given_b_minus: triple.p_c_given_b_minus,
                a_plus_given_c_plus: triple.p_a_given_c_plus,
            }),
        }
    }

    fn answer(&self, subject_rng: &mut ChaCha12Rng, branch: Branch) -> (Outcome, Option<Outcome>) {
        let draw = |rng: &mut ChaCha12Rng, p: f64| {
            if rng.random::<f64>() < p {
                Outcome::Plus
            } else {
                Outcome::Minus
            }
        };
        match self {
            Behavior::Latent(pmf) => {
                let (a, b, c) = sample_latent_triple(pmf, subject_rng);
                match branch {
                    Branch::U => match b {
                        Outcome::Plus => (b, Some(a)),
                        Outcome::Minus => (b, Some(c)),
                    },
                    Branch::V => match c {
                        Outcome::Plus => (c, Some(a)),
                        Outcome::Minus => (c, None),
                    },
                }
            }
            Behavior::Probabilities {
                first_plus_u,
                first_plus_v,
                a_plus_given_b_plus,
                c_plus_given_b_minus,
                a_plus_given_c_plus,
            } => {
                let (first_p, after_plus, after_minus) = match branch {
                    Branch::U => (
                        *first_plus_u,
                        Some(*a_plus_given_b_plus),
                        Some(*c_plus_given_b_minus),
                    ),
                    Branch::V => (*first_plus_v, Some(*a_plus_given_c_plus), None),
                };
                let first = draw(subject_rng, first_p);
                let second = match first {
                    Outcome::Plus => after_plus,
                    Outcome::Minus => after_minus,
                }
                .map(|p| draw(subject_rng, p));
                (first, second)
            }
        }
    }
}

fn subject_rng(seed: u64, subject: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(subject.wrapping_add(1));
    rng
}

/// Runs the protocol and keeps the per-subject trail (for CSV export).
///
/// The population is shuffled with a dedicated stream of `seed`, the
/// first half becomes U and the second half V, and each subject then
/// answers from its own `(seed, subject)` stream.
pub fn run_protocol_with_records(
    agents: &AgentModel,
    n_total: u64,
    seed: u64,
) -> Result<(ProtocolResult, Vec<SubjectRecord>), ProtocolError> {
    if !n_total.is_multiple_of(2) {
        return Err(ProtocolError::OddPopulation(n_total));
    }
    if n_total < 4 {
        return Err(ProtocolError::PopulationTooSmall(n_total));
    }
    agents.validate()?;
    let behavior = Behavior::resolve(agents)?;

    let mut ids: Vec<u64> = (0..n_total).collect();
    let mut split_rng = ChaCha12Rng::seed_from_u64(seed); // stream 0
    ids.shuffle(&mut split_rng);
    let half = (n_total / 2) as usize;

    let mut records = Vec::with_capacity(n_total as usize);
    for (position, &subject) in ids.iter().enumerate() {
        let branch = if position < half { Branch::U } else { Branch::V };
        let mut rng = subject_rng(seed, subject);
        let (first_answer, second_answer) = behavior.answer(&mut rng, branch);
        records.push(SubjectRecord {
            subject,
            branch,
            first_answer,
            second_answer,
        });
    }
    records.sort_by_key(|r| r.subject);

    let result = ProtocolResult::from_records(&records, Some(seed));
    for (branch, size) in [
        ("U_b_plus", result.u_b_plus),
        ("U_b_minus", result.u_b_minus),
        ("V_c_plus", result.v_c_plus),
    ] {
        if size == 0 {
            return Err(ProtocolError::ZeroBranch { branch, n_total });
        }
    }
    Ok((result, records))
}

/// Runs the protocol and returns the count table only.
pub fn run_protocol(
    agents: &AgentModel,
    n_total: u64,
    seed: u64,
) -> Result<ProtocolResult, ProtocolError> {
    run_protocol_with_records(agents, n_total, seed).map(|(result, _)| result)
}

/// An estimated conditional: successes over trials in one branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frequency {
    pub successes: u64,
    pub trials: u64,
}

impl Frequency {
    pub fn value(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

/// The three estimated conditionals with their denominators kept for
/// downstream variance estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyTriple {
    pub nu_a_given_b_plus: Frequency,
    pub nu_c_given_b_minus: Frequency,
    pub nu_a_given_c_plus: Frequency,
}

impl FrequencyTriple {
    pub fn values(&self) -> [f64; 3] {
        [
            self.nu_a_given_b_plus.value(),
            self.nu_c_given_b_minus.value(),
            self.nu_a_given_c_plus.value(),
        ]
    }

    pub fn trials(&self) -> [u64; 3] {
        [
            self.nu_a_given_b_plus.trials,
            self.nu_c_given_b_minus.trials,
            self.nu_a_given_c_plus.trials,
        ]
    }

    /// Point estimates as a conditional triple.
    pub fn point_triple(&self) -> ConditionalTriple {
        let [v1, v2, v3] = self.values();
        ConditionalTriple::new(v1, v2, v3).expect("frequencies lie in [0, 1]")
    }
}

/// The three observed frequencies of a run.
pub fn frequencies(r: &ProtocolResult) -> Result<FrequencyTriple, ProtocolError> {
    let (n1, n2, n3) = r.branch_sizes();
    for (branch, size) in [("U_b_plus", n1), ("U_b_minus", n2), ("V_c_plus", n3)] {
        if size == 0 {
            return Err(ProtocolError::ZeroBranch {
                branch,
                n_total: r.n_total,
            });
        }
    }
    Ok(FrequencyTriple {
        nu_a_given_b_plus: Frequency {
            successes: r.a_plus_given_b_plus,
            trials: n1,
        },
        nu_c_given_b_minus: Frequency {
            successes: r.c_plus_given_b_minus,
            trials: n2,
        },
        nu_a_given_c_plus: Frequency {
            successes: r.a_plus_given_c_plus,
            trials: n3,
        },
    })
}

/// Pearson goodness-of-fit of the first answers against the 50/50
/// homogeneity premise, one degree of freedom per branch, combined into
/// a two-degree-of-freedom statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityCheck {
    pub chi2_u: f64,
    pub chi2_v: f64,
    pub chi2: f64,
    pub dof: u32,
    pub threshold: f64,
    pub pass: bool,
}

/// Tests whether the first answers in both branches are consistent with
/// P(+1) = 1/2; `pass` is true when the combined statistic stays below
/// the (1 - alpha) quantile of chi-squared with 2 degrees of freedom.
pub fn homogeneity_check(r: &ProtocolResult, alpha: f64) -> HomogeneityCheck {
    let branch_chi2 = |plus: u64, total: u64| -> f64 {
        if total == 0 {
            return 0.0;
        }
        let expected = total as f64 / 2.0;
        let plus = plus as f64;
        let minus = total as f64 - plus;
        (plus - expected).powi(2) / expected + (minus - expected).powi(2) / expected
    };
    let chi2_u = branch_chi2(r.u_b_plus, r.n_u);
    let chi2_v = branch_chi2(r.v_c_plus, r.n_v);
    let chi2 = chi2_u + chi2_v;
    // Chi-squared with 2 dof has closed-form quantile -2 ln(alpha).
    let threshold = -2.0 * alpha.ln();
    HomogeneityCheck {
        chi2_u,
        chi2_v,
        chi2,
        dof: 2,
        threshold,
        pass: chi2 < threshold,
    }
}
