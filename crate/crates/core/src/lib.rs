//! Conditional-probability Bell test toolkit.
//!
//! A test for quantum-like probabilistic behaviour of three ±1-valued
//! questions `a`, `b`, `c` asked to members of one homogeneous
//! population. If every question's answer probability is 1/2, then any
//! description of the population by a single classical joint
//! distribution forces
//!
//! ```text
//! P(a=+1|b=+1) + P(c=+1|b=-1) >= P(a=+1|c=+1)
//! ```
//!
//! so a significantly positive
//! `delta = P(a=+1|c=+1) - P(a=+1|b=+1) - P(c=+1|b=-1)` certifies that
//! no such joint exists. Sequential projective measurements on a qubit
//! violate the inequality with delta up to 1/4, which the crate both
//! evaluates exactly and reproduces by simulation.
//!
//! Modules, bottom up:
//!
//! - [`prob`]: exact finite probability on the 8-atom space, both
//!   inequalities as pure evaluations.
//! - [`classical`]: the realizability decision procedure (existence of
//!   a joint reproducing measured conditionals) plus seeded generators
//!   of classical models.
//! - [`quantum`]: sequential measurement on a qubit and the numerical
//!   search for the maximal violation.
//! - [`protocol`]: simulator of the ensemble-splitting experiment,
//!   producing the count tables an experimenter would record.
//! - [`stats`]: estimation of delta, hypothesis tests, calibration and
//!   sample-size planning.
//! - [`io`]: response CSV ingestion/export, run manifests, reports.
//! - [`cli`]: the `condbell` command-line tool.

pub mod classical;
pub mod cli;
pub mod io;
pub mod prob;
pub mod protocol;
pub mod quantum;
pub mod stats;

pub use classical::{realize, random_symmetric_joint, RealizabilityVerdict};
pub use prob::{
    cond_bell_delta, ConditionalTriple, JointPMF, MarginalVector, ObservableId, Outcome,
};
pub use protocol::{
    frequencies, homogeneity_check, run_protocol, AgentModel, FrequencyTriple, ProtocolResult,
};
pub use quantum::{
    exact_conditional_triple, maximize_violation, sequential_conditional, QubitExperiment,
};
pub use stats::{analyze, delta_hat, required_sample_size, test_quantum_like, TestConfig,
    TestMethod, TestReport, Verdict};
