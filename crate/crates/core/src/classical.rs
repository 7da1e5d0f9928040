//! Realizability: can a measured triple of conditionals come from a
//! single joint distribution with symmetric marginals?
//!
//! A triple is declared feasible exactly when some pmf on the eight
//! atoms satisfies all of: atoms sum to 1, each marginal is 1/2, and
//! the three measured pair probabilities match the conditionals halved
//! (P(u|v) = 2 P(u,v) under 1/2 marginals). Only the three measured
//! quantities constrain the joint; the unmeasured pair probabilities
//! stay free. Infeasibility of the triple is what "quantum-like" means
//! for this experiment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::prob::{ConditionalTriple, JointPMF, Outcome, EXACT_TOL};

/// Outcome of the feasibility decision. When `feasible`, `witness` is a
/// joint pmf reproducing the triple and the symmetric marginals; when
/// not, `max_violation` is the smallest slack by which one equality
/// constraint would have to move for a witness to exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizabilityVerdict {
    pub feasible: bool,
    pub witness: Option<JointPMF>,
    pub max_violation: f64,
}

/// Decides whether `t` is reproducible by a symmetric-marginal joint.
///
/// The equality constraints (total mass, three marginals, three pair
/// probabilities) have rank 7 on the 8 atoms, so their solution set is
/// the one-parameter family below, parametrized by the mass `s` of the
/// `(+,+,+)` atom with `alpha = P(a+,b+)`, `beta = P(c+,b-)`,
/// `gamma = P(a+,c+)`:
///
/// ```text
/// p(+,+,+) = s                 p(-,+,+) = 1/2 - beta - s
/// p(+,+,-) = alpha - s         p(-,+,-) = beta - alpha + s
/// p(+,-,+) = gamma - s         p(-,-,+) = beta - gamma + s
/// p(+,-,-) = 1/2 - alpha - gamma + s
///                              p(-,-,-) = alpha - beta + gamma - s
/// ```
///
/// Nonnegativity of the eight atoms intersects to an interval in `s`;
/// the triple is feasible iff that interval is nonempty, and the
/// witness takes `s` at the interval midpoint so it sits in the
/// relative interior of the feasible segment. The function is fully
/// deterministic: equal inputs give bitwise-equal verdicts.
pub fn realize(t: &ConditionalTriple) -> RealizabilityVerdict {
    let alpha = t.p_a_given_b_plus / 2.0;
    let beta = t.p_c_given_b_minus / 2.0;
    let gamma = t.p_a_given_c_plus / 2.0;

    let lower = [0.0, alpha + gamma - 0.5, gamma - beta, alpha - beta]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let upper = [alpha, gamma, 0.5 - beta, alpha - beta + gamma]
        .into_iter()
        .fold(f64::INFINITY, f64::min);

    if lower <= upper + EXACT_TOL {
        let s = 0.5 * (lower + upper);
        let witness = atoms_for(alpha, beta, gamma, s);
        RealizabilityVerdict {
            feasible: true,
            witness: Some(witness),
            max_violation: 0.0,
        }
    } else {
        RealizabilityVerdict {
            feasible: false,
            witness: None,
            max_violation: lower - upper,
        }
    }
}

fn atoms_for(alpha: f64, beta: f64, gamma: f64, s: f64) -> JointPMF {
    let mut atoms = [
        s,
        alpha - s,
        gamma - s,
        0.5 - alpha - gamma + s,
        0.5 - beta - s,
        beta - alpha + s,
        beta - gamma + s,
        alpha - beta + gamma - s,
    ];
    // The interval arithmetic keeps every atom >= -EXACT_TOL; clamp the
    // residue and take the clamped mass back out of the largest atom so
    // the total stays at 1.
    for a in &mut atoms {
        if *a < 0.0 {
            debug_assert!(*a >= -EXACT_TOL, "atom {a} below interval bound");
            *a = 0.0;
        }
    }
    let residual = atoms.iter().sum::<f64>() - 1.0;
    if residual != 0.0 {
        let largest = (0..8).max_by(|&i, &j| atoms[i].total_cmp(&atoms[j])).unwrap();
        atoms[largest] -= residual;
    }
    JointPMF::new(atoms).expect("parametrized atoms form a valid pmf")
}

/// Deterministic generator of joints whose three marginals are each
/// exactly 1/2: mass is drawn on the four orbit pairs
/// `{(x,y,z), (-x,-y,-z)}` and split equally inside each pair, which
/// forces every marginal to one half.
pub fn random_symmetric_joint(seed: u64) -> JointPMF {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut orbit = [0.0f64; 4];
    loop {
        for q in &mut orbit {
            *q = rng.random();
        }
        let total: f64 = orbit.iter().sum();
        if total > 1e-300 {
            for q in &mut orbit {
                *q /= total;
            }
            break;
        }
    }
    let mut atoms = [0.0; 8];
    for (k, &q) in orbit.iter().enumerate() {
        atoms[k] = q / 2.0;
        atoms[7 - k] = q / 2.0; // index complement = sign-flipped outcome
    }
    JointPMF::new(atoms).expect("orbit construction yields a valid pmf")
}

/// Draws one latent answer triple from the joint: the classical agent
/// carries pre-existing answers to all three questions at once.
pub fn sample_latent_triple<R: Rng + ?Sized>(
    pmf: &JointPMF,
    rng: &mut R,
) -> (Outcome, Outcome, Outcome) {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (index, &mass) in pmf.atoms().iter().enumerate() {
        if mass > 0.0 {
            last_positive = index;
        }
        cumulative += mass;
        if u < cumulative {
            return crate::prob::atom_outcomes(index);
        }
    }
    // u landed in the rounding sliver past the last atom.
    crate::prob::atom_outcomes(last_positive)
}
