//! C ABI for the condbell library.
//!
//! Conventions:
//! - heap objects are opaque handles created by `cb_*_new`-style
//!   constructors and released by the matching `cb_*_free`; freeing a
//!   null pointer is a no-op;
//! - every fallible call returns a [`CbStatus`] and writes results
//!   through out-pointers, which are left untouched on failure;
//! - outcomes are encoded +1/-1, angles are degrees;
//! - strings returned through `char **` are UTF-8, NUL-terminated and
//!   owned by the caller, to be released with [`cb_string_free`].
//!
//! The C header `condbell.h` is generated at build time (see the
//! build script; a copy lands in `<target>/include/`).

use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use condbell::classical::{random_symmetric_joint, realize};
use condbell::prob::{cond_bell_delta, ConditionalTriple, JointPMF, MarginalVector, ObservableId, Outcome, ProbError};
use condbell::protocol::{frequencies, run_protocol, AgentModel, ProtocolError, ProtocolResult};
use condbell::quantum::{
    exact_conditional_triple, maximize_violation, sequential_conditional, DensityMatrix2,
    QuantumError, QubitExperiment,
};
use condbell::stats::{analyze, TestConfig, TestMethod};

/// Status code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument failed validation (probabilities, angles, sizes...).
    InvalidArgument = 2,
    /// A conditioning event has probability zero.
    ZeroConditioningEvent = 3,
    /// A protocol branch received no subjects.
    ZeroBranch = 4,
    /// The population cannot be split into two equal halves.
    OddPopulation = 5,
    /// Unexpected internal failure.
    Internal = 6,
}

/// One of the three questions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbObservable {
    A = 0,
    B = 1,
    C = 2,
}

impl From<CbObservable> for ObservableId {
    fn from(o: CbObservable) -> Self {
        match o {
            CbObservable::A => ObservableId::A,
            CbObservable::B => ObservableId::B,
            CbObservable::C => ObservableId::C,
        }
    }
}

/// Test method selector for `cb_analyze_json`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbMethod {
    ZTest = 0,
    Chi2Fit = 1,
}

/// The three conditional probabilities, by value.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbTriple {
    pub p_a_given_b_plus: f64,
    pub p_c_given_b_minus: f64,
    pub p_a_given_c_plus: f64,
}

/// Count table of one protocol run, by value.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CbCounts {
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
}

/// Opaque joint distribution over the eight answer triples.
pub struct CbPmf(JointPMF);
/// Opaque qubit experiment (directions + initial state).
pub struct CbExperiment(QubitExperiment);
/// Opaque population model for the protocol simulator.
pub struct CbModel(AgentModel);
/// Opaque protocol run result.
pub struct CbProtocolResult(ProtocolResult);

fn outcome_from_int(value: i32) -> Result<Outcome, CbStatus> {
    match value {
        1 => Ok(Outcome::Plus),
        -1 => Ok(Outcome::Minus),
        _ => Err(CbStatus::InvalidArgument),
    }
}

fn status_of_prob(e: &ProbError) -> CbStatus {
    match e {
        ProbError::ZeroConditioningEvent { .. } => CbStatus::ZeroConditioningEvent,
        _ => CbStatus::InvalidArgument,
    }
}

fn status_of_quantum(e: &QuantumError) -> CbStatus {
    match e {
        QuantumError::ZeroConditioningEvent { .. } => CbStatus::ZeroConditioningEvent,
        _ => CbStatus::InvalidArgument,
    }
}

fn status_of_protocol(e: &ProtocolError) -> CbStatus {
    match e {
        ProtocolError::OddPopulation(_) => CbStatus::OddPopulation,
        ProtocolError::ZeroBranch { .. } => CbStatus::ZeroBranch,
        ProtocolError::Quantum(q) => status_of_quantum(q),
        _ => CbStatus::InvalidArgument,
    }
}

/// Runs `f`, converting panics into `CbStatus::Internal`.
fn guarded(f: impl FnOnce() -> CbStatus) -> CbStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(CbStatus::Internal)
}

unsafe fn write_out<T>(out: *mut T, value: T) -> CbStatus {
    if out.is_null() {
        return CbStatus::NullPointer;
    }
    unsafe { out.write(value) };
    CbStatus::Ok
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must be a pointer previously returned through a `char **` out
/// parameter of this library, not yet freed; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn cb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Builds a pmf from eight atom probabilities in the documented order
/// (lexicographic over (a, b, c), +1 before -1).
///
/// # Safety
/// `atoms` must point to 8 readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_pmf_new(atoms: *const f64, out: *mut *mut CbPmf) -> CbStatus {
    if atoms.is_null() || out.is_null() {
        return CbStatus::NullPointer;
    }
    let values: [f64; 8] = unsafe { std::slice::from_raw_parts(atoms, 8) }
        .try_into()
        .expect("slice of length 8");
    guarded(|| match JointPMF::new(values) {
        Ok(pmf) => unsafe { write_out(out, Box::into_raw(Box::new(CbPmf(pmf)))) },
        Err(_) => CbStatus::InvalidArgument,
    })
}

/// The uniform pmf (every atom 1/8).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_pmf_uniform(out: *mut *mut CbPmf) -> CbStatus {
    guarded(|| unsafe { write_out(out, Box::into_raw(Box::new(CbPmf(JointPMF::uniform())))) })
}

/// Seeded random pmf with all three marginals equal to 1/2.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_pmf_random_symmetric(seed: u64, out: *mut *mut CbPmf) -> CbStatus {
    guarded(|| unsafe {
        write_out(out, Box::into_raw(Box::new(CbPmf(random_symmetric_joint(seed)))))
    })
}

/// # Safety
/// `pmf` must come from this library and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn cb_pmf_free(pmf: *mut CbPmf) {
    if !pmf.is_null() {
        drop(unsafe { Box::from_raw(pmf) });
    }
}

/// Copies the eight atoms out of a pmf.
///
/// # Safety
/// `pmf` must be a live handle; `atoms_out` must point to 8 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cb_pmf_atoms(pmf: *const CbPmf, atoms_out: *mut f64) -> CbStatus {
    if pmf.is_null() || atoms_out.is_null() {
        return CbStatus::NullPointer;
    }
    let atoms = unsafe { &(*pmf).0 }.atoms();
    unsafe { std::ptr::copy_nonoverlapping(atoms.as_ptr(), atoms_out, 8) };
    CbStatus::Ok
}

/// P(observable = +1).
///
/// # Safety
/// `pmf` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_pmf_marginal(
    pmf: *const CbPmf,
    observable: CbObservable,
    out: *mut f64,
) -> CbStatus {
    if pmf.is_null() {
        return CbStatus::NullPointer;
    }
    let value = unsafe { &(*pmf).0 }.marginal(observable.into());
    unsafe { write_out(out, value) }
}

/// Evaluates the pair-probability inequality
/// P(a+,b+) + P(b-,c+) >= P(a+,c+) on the pmf.
///
/// # Safety
/// `pmf` must be a live handle; `lhs`, `rhs`, `holds` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_pmf_wigner(
    pmf: *const CbPmf,
    lhs: *mut f64,
    rhs: *mut f64,
    holds: *mut bool,
) -> CbStatus {
    if pmf.is_null() || lhs.is_null() || rhs.is_null() || holds.is_null() {
        return CbStatus::NullPointer;
    }
    let check = unsafe { &(*pmf).0 }.wigner_check();
    unsafe {
        lhs.write(check.lhs);
        rhs.write(check.rhs);
        holds.write(check.holds);
    }
    CbStatus::Ok
}

/// The three conditionals P(a+|b+), P(c+|b-), P(a+|c+) of the pmf.
///
/// # Safety
/// `pmf` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_pmf_conditionals(pmf: *const CbPmf, out: *mut CbTriple) -> CbStatus {
    if pmf.is_null() || out.is_null() {
        return CbStatus::NullPointer;
    }
    guarded(|| match unsafe { &(*pmf).0 }.conditionals_from_joint() {
        Ok(t) => unsafe {
            write_out(
                out,
                CbTriple {
                    p_a_given_b_plus: t.p_a_given_b_plus,
                    p_c_given_b_minus: t.p_c_given_b_minus,
                    p_a_given_c_plus: t.p_a_given_c_plus,
                },
            )
        },
        Err(e) => status_of_prob(&e),
    })
}

fn domain_triple(t: &CbTriple) -> Result<ConditionalTriple, CbStatus> {
    ConditionalTriple::new(t.p_a_given_b_plus, t.p_c_given_b_minus, t.p_a_given_c_plus)
        .map_err(|_| CbStatus::InvalidArgument)
}

/// delta = P(a+|c+) - P(a+|b+) - P(c+|b-); `violated` is delta > 0.
///
/// # Safety
/// `delta` and `violated` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_delta(
    triple: CbTriple,
    delta: *mut f64,
    violated: *mut bool,
) -> CbStatus {
    if delta.is_null() || violated.is_null() {
        return CbStatus::NullPointer;
    }
    let t = match domain_triple(&triple) {
        Ok(t) => t,
        Err(status) => return status,
    };
    let verdict = cond_bell_delta(&t);
    unsafe {
        delta.write(verdict.delta);
        violated.write(verdict.violated);
    }
    CbStatus::Ok
}

/// Decides whether a symmetric-marginal joint reproduces the triple.
/// On success writes `feasible` and `max_violation`; when feasible and
/// `witness` is non-null, also writes a fresh pmf handle there (null
/// when infeasible).
///
/// # Safety
/// `feasible` and `max_violation` must be writable; `witness` may be
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn cb_realize(
    triple: CbTriple,
    feasible: *mut bool,
    max_violation: *mut f64,
    witness: *mut *mut CbPmf,
) -> CbStatus {
    if feasible.is_null() || max_violation.is_null() {
        return CbStatus::NullPointer;
    }
    let t = match domain_triple(&triple) {
        Ok(t) => t,
        Err(status) => return status,
    };
    guarded(|| {
        let verdict = realize(&t);
        unsafe {
            feasible.write(verdict.feasible);
            max_violation.write(verdict.max_violation);
            if !witness.is_null() {
                witness.write(match verdict.witness {
                    Some(pmf) => Box::into_raw(Box::new(CbPmf(pmf))),
                    None => ptr::null_mut(),
                });
            }
        }
        CbStatus::Ok
    })
}

/// Experiment with directions in degrees and the maximally mixed state.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_experiment_mixed(
    theta_a: f64,
    theta_b: f64,
    theta_c: f64,
    out: *mut *mut CbExperiment,
) -> CbStatus {
    if !(theta_a.is_finite() && theta_b.is_finite() && theta_c.is_finite()) {
        return CbStatus::InvalidArgument;
    }
    guarded(|| unsafe {
        write_out(
            out,
            Box::into_raw(Box::new(CbExperiment(QubitExperiment::mixed(
                theta_a, theta_b, theta_c,
            )))),
        )
    })
}

/// Experiment with an explicit initial state given by a Bloch vector.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_experiment_bloch(
    theta_a: f64,
    theta_b: f64,
    theta_c: f64,
    x: f64,
    y: f64,
    z: f64,
    out: *mut *mut CbExperiment,
) -> CbStatus {
    if !(theta_a.is_finite() && theta_b.is_finite() && theta_c.is_finite()) {
        return CbStatus::InvalidArgument;
    }
    guarded(|| match DensityMatrix2::from_bloch(x, y, z) {
        Ok(state) => unsafe {
            write_out(
                out,
                Box::into_raw(Box::new(CbExperiment(QubitExperiment::with_state(
                    theta_a, theta_b, theta_c, state,
                )))),
            )
        },
        Err(_) => CbStatus::InvalidArgument,
    })
}

/// # Safety
/// `exp` must come from this library and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn cb_experiment_free(exp: *mut CbExperiment) {
    if !exp.is_null() {
        drop(unsafe { Box::from_raw(exp) });
    }
}

/// The experiment's exact conditional triple under sequential
/// measurement.
///
/// # Safety
/// `exp` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_exact_triple(exp: *const CbExperiment, out: *mut CbTriple) -> CbStatus {
    if exp.is_null() || out.is_null() {
        return CbStatus::NullPointer;
    }
    guarded(|| match exact_conditional_triple(unsafe { &(*exp).0 }) {
        Ok(t) => unsafe {
            write_out(
                out,
                CbTriple {
                    p_a_given_b_plus: t.p_a_given_b_plus,
                    p_c_given_b_minus: t.p_c_given_b_minus,
                    p_a_given_c_plus: t.p_a_given_c_plus,
                },
            )
        },
        Err(e) => status_of_quantum(&e),
    })
}

/// P(second = +1 | first = first_outcome), measuring `first` then
/// `second`. `first_outcome` is encoded +1/-1.
///
/// # Safety
/// `exp` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_sequential_conditional(
    exp: *const CbExperiment,
    first: CbObservable,
    first_outcome: i32,
    second: CbObservable,
    out: *mut f64,
) -> CbStatus {
    if exp.is_null() || out.is_null() {
        return CbStatus::NullPointer;
    }
    let outcome = match outcome_from_int(first_outcome) {
        Ok(o) => o,
        Err(status) => return status,
    };
    guarded(
        || match sequential_conditional(unsafe { &(*exp).0 }, first.into(), outcome, second.into())
        {
            Ok(p) => unsafe { write_out(out, p) },
            Err(e) => status_of_quantum(&e),
        },
    )
}

/// Grid search plus refinement for the maximal delta under the mixed
/// state. Writes the three directions (degrees) and the best delta.
///
/// # Safety
/// All out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_maximize_violation(
    grid_step_deg: f64,
    refine_iterations: u32,
    theta_a: *mut f64,
    theta_b: *mut f64,
    theta_c: *mut f64,
    delta_max: *mut f64,
) -> CbStatus {
    if theta_a.is_null() || theta_b.is_null() || theta_c.is_null() || delta_max.is_null() {
        return CbStatus::NullPointer;
    }
    guarded(|| match maximize_violation(grid_step_deg, refine_iterations) {
        Ok(found) => {
            unsafe {
                theta_a.write(found.theta_a.degrees());
                theta_b.write(found.theta_b.degrees());
                theta_c.write(found.theta_c.degrees());
                delta_max.write(found.delta_max);
            }
            CbStatus::Ok
        }
        Err(e) => status_of_quantum(&e),
    })
}

/// Population of classical agents answering from latent triples drawn
/// from the pmf (copied into the model).
///
/// # Safety
/// `pmf` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_model_classical(
    pmf: *const CbPmf,
    out: *mut *mut CbModel,
) -> CbStatus {
    if pmf.is_null() || out.is_null() {
        return CbStatus::NullPointer;
    }
    guarded(|| {
        let model = AgentModel::classical(unsafe { &(*pmf).0 }.clone());
        match model.validate() {
            Ok(()) => unsafe { write_out(out, Box::into_raw(Box::new(CbModel(model)))) },
            Err(e) => status_of_protocol(&e),
        }
    })
}

/// Population of quantum agents (experiment copied into the model).
///
/// # Safety
/// `exp` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_model_quantum(
    exp: *const CbExperiment,
    out: *mut *mut CbModel,
) -> CbStatus {
    if exp.is_null() || out.is_null() {
        return CbStatus::NullPointer;
    }
    guarded(|| unsafe {
        write_out(
            out,
            Box::into_raw(Box::new(CbModel(AgentModel::quantum((*exp).0)))),
        )
    })
}

/// Population answering from a fixed conditional table. `marginals`
/// points to the three +1 marginals (a, b, c), all required to be 1/2.
///
/// # Safety
/// `marginals` must point to 3 readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_model_table(
    triple: CbTriple,
    marginals: *const f64,
    out: *mut *mut CbModel,
) -> CbStatus {
    if marginals.is_null() || out.is_null() {
        return CbStatus::NullPointer;
    }
    let t = match domain_triple(&triple) {
        Ok(t) => t,
        Err(status) => return status,
    };
    let m = unsafe { std::slice::from_raw_parts(marginals, 3) };
    guarded(|| {
        let marginals = match MarginalVector::new([m[0], m[1], m[2]]) {
            Ok(m) => m,
            Err(_) => return CbStatus::InvalidArgument,
        };
        let model = AgentModel::table(t, marginals);
        match model.validate() {
            Ok(()) => unsafe { write_out(out, Box::into_raw(Box::new(CbModel(model)))) },
            Err(e) => status_of_protocol(&e),
        }
    })
}

/// # Safety
/// `model` must come from this library and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn cb_model_free(model: *mut CbModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Runs the splitting protocol: `n_total` must be even and >= 4.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_run_protocol(
    model: *const CbModel,
    n_total: u64,
    seed: u64,
    out: *mut *mut CbProtocolResult,
) -> CbStatus {
    if model.is_null() || out.is_null() {
        return CbStatus::NullPointer;
    }
    guarded(|| match run_protocol(unsafe { &(*model).0 }, n_total, seed) {
        Ok(result) => unsafe {
            write_out(out, Box::into_raw(Box::new(CbProtocolResult(result))))
        },
        Err(e) => status_of_protocol(&e),
    })
}

/// # Safety
/// `result` must come from this library and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn cb_protocol_result_free(result: *mut CbProtocolResult) {
    if !result.is_null() {
        drop(unsafe { Box::from_raw(result) });
    }
}

/// Copies the count table of a run.
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_protocol_counts(
    result: *const CbProtocolResult,
    out: *mut CbCounts,
) -> CbStatus {
    if result.is_null() || out.is_null() {
        return CbStatus::NullPointer;
    }
    let r = unsafe { &(*result).0 };
    unsafe {
        write_out(
            out,
            CbCounts {
                n_total: r.n_total,
                n_u: r.n_u,
                n_v: r.n_v,
                u_b_plus: r.u_b_plus,
                u_b_minus: r.u_b_minus,
                v_c_plus: r.v_c_plus,
                v_c_minus: r.v_c_minus,
                a_plus_given_b_plus: r.a_plus_given_b_plus,
                c_plus_given_b_minus: r.c_plus_given_b_minus,
                a_plus_given_c_plus: r.a_plus_given_c_plus,
            },
        )
    }
}

/// The three observed frequencies and their denominators.
///
/// # Safety
/// `result` must be a live handle; `values` and `trials` must point to
/// 3 writable elements each.
#[no_mangle]
pub unsafe extern "C" fn cb_frequencies(
    result: *const CbProtocolResult,
    values: *mut f64,
    trials: *mut u64,
) -> CbStatus {
    if result.is_null() || values.is_null() || trials.is_null() {
        return CbStatus::NullPointer;
    }
    match frequencies(unsafe { &(*result).0 }) {
        Ok(f) => {
            let v = f.values();
            let n = f.trials();
            unsafe {
                std::ptr::copy_nonoverlapping(v.as_ptr(), values, 3);
                std::ptr::copy_nonoverlapping(n.as_ptr(), trials, 3);
            }
            CbStatus::Ok
        }
        Err(e) => status_of_protocol(&e),
    }
}

/// Full analysis of a run; the report is returned as a JSON document
/// (the same shape the CLI emits under `"result"`).
///
/// # Safety
/// `result` must be a live handle; `json_out` must be writable. The
/// returned string must be released with [`cb_string_free`].
#[no_mangle]
pub unsafe extern "C" fn cb_analyze_json(
    result: *const CbProtocolResult,
    delta_threshold: f64,
    alpha: f64,
    confidence: f64,
    method: CbMethod,
    json_out: *mut *mut c_char,
) -> CbStatus {
    if result.is_null() || json_out.is_null() {
        return CbStatus::NullPointer;
    }
    guarded(|| {
        let method = match method {
            CbMethod::ZTest => TestMethod::ZTest,
            CbMethod::Chi2Fit => TestMethod::Chi2Fit,
        };
        let config = match TestConfig::new(delta_threshold, alpha, confidence, method) {
            Ok(c) => c,
            Err(_) => return CbStatus::InvalidArgument,
        };
        let report = match analyze(unsafe { &(*result).0 }, &config) {
            Ok(r) => r,
            Err(condbell::stats::StatsError::ZeroBranch) => return CbStatus::ZeroBranch,
            Err(condbell::stats::StatsError::Protocol(p)) => return status_of_protocol(&p),
            Err(_) => return CbStatus::InvalidArgument,
        };
        let json = match serde_json::to_string(&report) {
            Ok(j) => j,
            Err(_) => return CbStatus::Internal,
        };
        match CString::new(json) {
            Ok(c_string) => unsafe { write_out(json_out, c_string.into_raw()) },
            Err(_) => CbStatus::Internal,
        }
    })
}
