//! Sequential projective measurement on a qubit.
//!
//! Three questions are modeled as spin projections along coplanar
//! directions (angles on a great circle of the Bloch sphere, degrees at
//! every interface). Asking a question projects the state onto the
//! answer's eigenspace and renormalizes; asking a second question to
//! the post-selected subensemble then follows the Born rule on the
//! updated state. With the maximally mixed initial state every single
//! question answers +1 with probability exactly 1/2, and the resulting
//! conditional triple violates the conditional-probability inequality
//! for suitable angles.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prob::{cond_bell_delta, ConditionalTriple, ObservableId, Outcome, DATA_TOL, EXACT_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("grid step {0} degrees outside (0, 30]")]
    InvalidGridStep(f64),
    #[error("first and second question must differ, both were {0:?}")]
    SameObservable(ObservableId),
    #[error("post-selected branch {observable:?}={outcome} has probability zero")]
    ZeroConditioningEvent {
        observable: ObservableId,
        outcome: Outcome,
    },
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("bloch vector ({0}, {1}, {2}) has norm > 1")]
    InvalidBloch(f64, f64, f64),
}

/// A measurement direction in the great-circle plane, stored in degrees
/// normalized to [0, 360). Physics depends only on the angle mod 360.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "f64", into = "f64")]
pub struct PlanarObservable {
    theta_deg: f64,
}

impl PlanarObservable {
    pub fn from_degrees(theta_deg: f64) -> Self {
        let mut t = theta_deg.rem_euclid(360.0);
        if t >= 360.0 {
            // rem_euclid can return exactly 360.0 for tiny negatives.
            t = 0.0;
        }
        PlanarObservable { theta_deg: t }
    }

    pub fn degrees(self) -> f64 {
        self.theta_deg
    }

    pub fn radians(self) -> f64 {
        self.theta_deg.to_radians()
    }
}

impl From<f64> for PlanarObservable {
    fn from(deg: f64) -> Self {
        PlanarObservable::from_degrees(deg)
    }
}

impl From<PlanarObservable> for f64 {
    fn from(p: PlanarObservable) -> f64 {
        p.theta_deg
    }
}

/// Complex 2x2 matrix with just the operations the model needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matrix2 {
    pub entries: [[Complex64; 2]; 2],
}

impl Matrix2 {
    pub fn identity() -> Self {
        Matrix2 {
            entries: [
                [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
                [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
            ],
        }
    }

    pub fn mul(&self, other: &Matrix2) -> Matrix2 {
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.entries[i][0] * other.entries[0][j]
                    + self.entries[i][1] * other.entries[1][j];
            }
        }
        Matrix2 { entries: out }
    }

    pub fn scale(&self, k: f64) -> Matrix2 {
        let mut out = self.entries;
        for row in &mut out {
            for cell in row {
                *cell *= k;
            }
        }
        Matrix2 { entries: out }
    }

    pub fn trace(&self) -> Complex64 {
        self.entries[0][0] + self.entries[1][1]
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.entries[0][0].im.abs() <= tol
            && self.entries[1][1].im.abs() <= tol
            && (self.entries[0][1] - self.entries[1][0].conj()).norm() <= tol
    }
}

/// Qubit density matrix: Hermitian, unit trace, positive semidefinite
/// (all within tight tolerances, enforced at construction).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix2 {
    matrix: Matrix2,
}

impl DensityMatrix2 {
    pub fn from_matrix(matrix: Matrix2) -> Result<Self, QuantumError> {
        if !matrix.is_hermitian(EXACT_TOL) {
            return Err(QuantumError::InvalidState("matrix is not Hermitian".into()));
        }
        let trace = matrix.trace().re;
        if (trace - 1.0).abs() > EXACT_TOL {
            return Err(QuantumError::InvalidState(format!(
                "trace is {trace}, expected 1"
            )));
        }
        // For a Hermitian matrix with unit trace the eigenvalues are
        // (1 +- sqrt((r00 - r11)^2 + 4|r01|^2)) / 2.
        let d = matrix.entries[0][0].re - matrix.entries[1][1].re;
        let off = matrix.entries[0][1].norm_sqr();
        let min_eigenvalue = 0.5 * (1.0 - (d * d + 4.0 * off).sqrt());
        if min_eigenvalue < -EXACT_TOL {
            return Err(QuantumError::InvalidState(format!(
                "smallest eigenvalue {min_eigenvalue} is negative"
            )));
        }
        Ok(DensityMatrix2 { matrix })
    }

    /// diag(1/2, 1/2): the state with no answer bias for any direction.
    pub fn maximally_mixed() -> Self {
        DensityMatrix2 {
            matrix: Matrix2::identity().scale(0.5),
        }
    }

    /// State with Bloch vector `(x, y, z)`, `|r| <= 1`.
    pub fn from_bloch(x: f64, y: f64, z: f64) -> Result<Self, QuantumError> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || norm > 1.0 + DATA_TOL {
            return Err(QuantumError::InvalidBloch(x, y, z));
        }
        let m = Matrix2 {
            entries: [
                [
                    Complex64::new((1.0 + z) / 2.0, 0.0),
                    Complex64::new(x / 2.0, -y / 2.0),
                ],
                [
                    Complex64::new(x / 2.0, y / 2.0),
                    Complex64::new((1.0 - z) / 2.0, 0.0),
                ],
            ],
        };
        DensityMatrix2::from_matrix(m)
    }

    pub fn matrix(&self) -> &Matrix2 {
        &self.matrix
    }
}

/// Rank-1 projector onto the ±1 eigenvector of the spin operator along
/// the planar direction `obs`. The pair of projectors for the two
/// outcomes resolves the identity.
pub fn projector(obs: PlanarObservable, outcome: Outcome) -> Matrix2 {
    let theta = obs.radians();
    let sign = f64::from(outcome.value());
    // (I + sign * sigma(theta)) / 2 with
    // sigma(theta) = cos(theta) sigma_z + sin(theta) sigma_x.
    Matrix2 {
        entries: [
            [
                Complex64::new((1.0 + sign * theta.cos()) / 2.0, 0.0),
                Complex64::new(sign * theta.sin() / 2.0, 0.0),
            ],
            [
                Complex64::new(sign * theta.sin() / 2.0, 0.0),
                Complex64::new((1.0 - sign * theta.cos()) / 2.0, 0.0),
            ],
        ],
    }
}

/// Three question directions plus the initial state of every subject.
///
/// Wire form: `{"theta_a": deg, "theta_b": deg, "theta_c": deg,
/// "state": "mixed" | {"bloch": [x, y, z]}}` with `|(x,y,z)| <= 1`;
/// `state` defaults to `"mixed"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExperimentSpec", into = "ExperimentSpec")]
pub struct QubitExperiment {
    pub theta_a: PlanarObservable,
    pub theta_b: PlanarObservable,
    pub theta_c: PlanarObservable,
    initial_state: DensityMatrix2,
}

#[derive(Serialize, Deserialize)]
struct ExperimentSpec {
    theta_a: f64,
    theta_b: f64,
    theta_c: f64,
    #[serde(default)]
    state: StateSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum StateSpec {
    Named(MixedTag),
    Bloch { bloch: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum MixedTag {
    #[serde(rename = "mixed")]
    Mixed,
}

impl Default for StateSpec {
    fn default() -> Self {
        StateSpec::Named(MixedTag::Mixed)
    }
}

impl TryFrom<ExperimentSpec> for QubitExperiment {
    type Error = QuantumError;
    fn try_from(spec: ExperimentSpec) -> Result<Self, Self::Error> {
        let state = match spec.state {
            StateSpec::Named(MixedTag::Mixed) => DensityMatrix2::maximally_mixed(),
            StateSpec::Bloch { bloch: [x, y, z] } => DensityMatrix2::from_bloch(x, y, z)?,
        };
        Ok(QubitExperiment::with_state(
            spec.theta_a,
            spec.theta_b,
            spec.theta_c,
            state,
        ))
    }
}

impl From<QubitExperiment> for ExperimentSpec {
    fn from(exp: QubitExperiment) -> Self {
        let m = exp.initial_state.matrix();
        let x = 2.0 * m.entries[1][0].re;
        let y = 2.0 * m.entries[1][0].im;
        let z = m.entries[0][0].re - m.entries[1][1].re;
        let state = if x == 0.0 && y == 0.0 && z == 0.0 {
            StateSpec::Named(MixedTag::Mixed)
        } else {
            StateSpec::Bloch { bloch: [x, y, z] }
        };
        ExperimentSpec {
            theta_a: exp.theta_a.degrees(),
            theta_b: exp.theta_b.degrees(),
            theta_c: exp.theta_c.degrees(),
            state,
        }
    }
}

impl QubitExperiment {
    /// Directions in degrees, maximally mixed initial state.
    pub fn mixed(theta_a: f64, theta_b: f64, theta_c: f64) -> Self {
        QubitExperiment {
            theta_a: PlanarObservable::from_degrees(theta_a),
            theta_b: PlanarObservable::from_degrees(theta_b),
            theta_c: PlanarObservable::from_degrees(theta_c),
            initial_state: DensityMatrix2::maximally_mixed(),
        }
    }

    pub fn with_state(
        theta_a: f64,
        theta_b: f64,
        theta_c: f64,
        state: DensityMatrix2,
    ) -> Self {
        QubitExperiment {
            theta_a: PlanarObservable::from_degrees(theta_a),
            theta_b: PlanarObservable::from_degrees(theta_b),
            theta_c: PlanarObservable::from_degrees(theta_c),
            initial_state: state,
        }
    }

    /// The canonical maximal-violation configuration: directions
    /// 120deg, 0deg, 60deg with the mixed state; its exact conditional
    /// triple is (1/4, 1/4, 3/4).
    pub fn canonical() -> Self {
        QubitExperiment::mixed(120.0, 0.0, 60.0)
    }

    pub fn initial_state(&self) -> &DensityMatrix2 {
        &self.initial_state
    }

    pub fn direction(&self, which: ObservableId) -> PlanarObservable {
        match which {
            ObservableId::A => self.theta_a,
            ObservableId::B => self.theta_b,
            ObservableId::C => self.theta_c,
        }
    }

    /// P(answer = +1) for a single question asked first, per direction.
    pub fn first_marginals(&self) -> [f64; 3] {
        [ObservableId::A, ObservableId::B, ObservableId::C].map(|o| {
            projector(self.direction(o), Outcome::Plus)
                .mul(self.initial_state.matrix())
                .trace()
                .re
        })
    }

    /// True iff every first-question marginal is 1/2, the homogeneity
    /// premise. Always true for the mixed state; pure states usually
    /// break it, in which case the inequality test does not apply.
    pub fn is_homogeneous(&self) -> bool {
        self.first_marginals().iter().all(|p| (p - 0.5).abs() <= DATA_TOL)
    }
}

/// P(second = +1 | first = first_outcome): measure `first`, keep the
/// subensemble that answered `first_outcome` (project and renormalize),
/// then measure `second` on the updated state.
pub fn sequential_conditional(
    exp: &QubitExperiment,
    first: ObservableId,
    first_outcome: Outcome,
    second: ObservableId,
) -> Result<f64, QuantumError> {
    if first == second {
        return Err(QuantumError::SameObservable(first));
    }
    let p_first = projector(exp.direction(first), first_outcome);
    let rho = exp.initial_state.matrix();
    let branch_probability = p_first.mul(rho).trace().re;
    if branch_probability <= EXACT_TOL {
        return Err(QuantumError::ZeroConditioningEvent {
            observable: first,
            outcome: first_outcome,
        });
    }
    let post = p_first.mul(rho).mul(&p_first).scale(1.0 / branch_probability);
    let p_second_plus = projector(exp.direction(second), Outcome::Plus);
    Ok(p_second_plus.mul(&post).trace().re.clamp(0.0, 1.0))
}

/// The three conditionals of the experiment, computed sequentially:
/// P(a+|b+), P(c+|b-), P(a+|c+).
pub fn exact_conditional_triple(exp: &QubitExperiment) -> Result<ConditionalTriple, QuantumError> {
    use ObservableId::*;
    use Outcome::*;
    let t = ConditionalTriple::new(
        sequential_conditional(exp, B, Plus, A)?,
        sequential_conditional(exp, B, Minus, C)?,
        sequential_conditional(exp, C, Plus, A)?,
    )
    .expect("sequential conditionals are probabilities");
    Ok(t)
}

/// Best violation found by the search, with the directions that attain
/// it (theta_b pinned to 0 by rotation invariance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxViolation {
    pub theta_a: PlanarObservable,
    pub theta_b: PlanarObservable,
    pub theta_c: PlanarObservable,
    pub delta_max: f64,
}

/// Searches for the direction triple maximizing delta under the mixed
/// state: a coarse grid over the two angle differences (theta_a and
/// theta_c relative to theta_b) followed by coordinate-descent
/// refinement with a halving step. Deterministic: grid ties within
/// 1e-12 go to the lexicographically smallest angle pair.
pub fn maximize_violation(
    grid_step_deg: f64,
    refine_iterations: u32,
) -> Result<MaxViolation, QuantumError> {
    if !grid_step_deg.is_finite() || grid_step_deg <= 0.0 || grid_step_deg > 30.0 {
        return Err(QuantumError::InvalidGridStep(grid_step_deg));
    }

    let delta_at = |x: f64, y: f64| -> f64 {
        let exp = QubitExperiment::mixed(x, 0.0, y);
        let triple =
            exact_conditional_triple(&exp).expect("mixed state gives nonzero branch probabilities");
        cond_bell_delta(&triple).delta
    };

    let steps = (360.0 / grid_step_deg).ceil() as usize;
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..steps {
        let x = (i as f64 * grid_step_deg).rem_euclid(360.0);
        for j in 0..steps {
            let y = (j as f64 * grid_step_deg).rem_euclid(360.0);
            let d = delta_at(x, y);
            if d > best.0 + EXACT_TOL
                || ((d - best.0).abs() <= EXACT_TOL && (x, y) < (best.1, best.2))
            {
                best = (d, x, y);
            }
        }
    }

    let (mut best_delta, mut bx, mut by) = best;
    let mut step = grid_step_deg;
    for _ in 0..refine_iterations {
        let mut moved = false;
        for coord in 0..2 {
            for dir in [1.0, -1.0] {
                let (cx, cy) = if coord == 0 {
                    ((bx + dir * step).rem_euclid(360.0), by)
                } else {
                    (bx, (by + dir * step).rem_euclid(360.0))
                };
                let d = delta_at(cx, cy);
                if d > best_delta {
                    best_delta = d;
                    bx = cx;
                    by = cy;
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }

    Ok(MaxViolation {
        theta_a: PlanarObservable::from_degrees(bx),
        theta_b: PlanarObservable::from_degrees(0.0),
        theta_c: PlanarObservable::from_degrees(by),
        delta_max: best_delta,
    })
}
