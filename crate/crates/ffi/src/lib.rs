//! C ABI for `linbandit`.
//!
//! Every fallible function returns an [`LbStatus`]. On failure a message is
//! kept per thread and can be read with [`lb_last_error`] until the next
//! failing call on that thread. Handles are opaque; release each with its
//! `_free` function. Panics never cross the boundary and surface as
//! `LB_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use linbandit::density::PiecewiseDensity;
use linbandit::policy::{GreedyGate, PolicyConfig, PolicyKind, PolicyState};
use linbandit::reward::{build_point_series, DocId, PointSeries, RewardLabel, RewardSample};
use linbandit::situation::Ontology;
use linbandit::utility::{optimize_threshold, PopulationCounts, UtilityParams, UtilityVariant};
use linbandit::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InsufficientData = 3,
    Degenerate = 4,
    UnknownConcept = 5,
    Io = 6,
    Parse = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbPolicyKind {
    Linearized = 0,
    Egreedy = 1,
    Ebeginning = 2,
    Edecreasing = 3,
    Eg = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbUtilityVariant {
    Difference = 0,
    Mixture = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbGate {
    Literal = 0,
    Conventional = 1,
}

/// Policy settings. Enum-valued fields are plain integers holding one of
/// the matching `LB_*` constants.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LbPolicyParams {
    /// `LbPolicyKind`
    pub kind: u32,
    pub epsilon: f64,
    pub epsilon0: f64,
    pub horizon: u64,
    pub batch: usize,
    pub a: f64,
    pub b: f64,
    /// `LbUtilityVariant`
    pub variant: u32,
    pub threshold_error: f64,
    /// `LbGate`
    pub gate: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LbTradeoff {
    pub threshold: f64,
    pub epsilon: f64,
    pub utility: f64,
}

pub struct LbPolicy {
    inner: PolicyState,
}

pub struct LbDensity {
    inner: PiecewiseDensity,
}

pub struct LbOntology {
    inner: Ontology,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

impl Fail {
    fn status(&self) -> LbStatus {
        match self {
            Fail::Null(_) => LbStatus::NullPointer,
            Fail::Arg(_) => LbStatus::InvalidArgument,
            Fail::Lib(e) => match e {
                Error::InvalidParameter { .. }
                | Error::Config(_)
                | Error::Ontology(_)
                | Error::UnorderedClasses(_)
                | Error::Unnormalized => LbStatus::InvalidArgument,
                Error::UndefinedCtr(_)
                | Error::EmptySample
                | Error::InsufficientData(_)
                | Error::EmptyPool => LbStatus::InsufficientData,
                Error::DegenerateFit | Error::DegenerateDensity(_) => LbStatus::Degenerate,
                Error::UnknownConcept(_) => LbStatus::UnknownConcept,
                Error::Io { .. } => LbStatus::Io,
                Error::Parse { .. } | Error::Json(_) => LbStatus::Parse,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            Fail::Null(what) => format!("`{what}` is NULL"),
            Fail::Arg(msg) => msg.clone(),
            Fail::Lib(e) => e.to_string(),
        }
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', "?")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LbStatus::Ok,
        Ok(Err(fail)) => {
            set_error(fail.message());
            fail.status()
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| payload.downcast_ref::<&str>().copied())
                .unwrap_or("unknown panic");
            set_error(format!("panic: {msg}"));
            LbStatus::Panic
        }
    }
}

fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    // SAFETY: callers pass pointers that are either NULL or valid for reads.
    unsafe { p.as_ref() }.ok_or(Fail::Null(what))
}

fn non_null_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    // SAFETY: callers pass pointers that are either NULL or valid and unaliased.
    unsafe { p.as_mut() }.ok_or(Fail::Null(what))
}

fn c_str<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    // SAFETY: non-null and NUL-terminated per the API contract.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Fail::Arg(format!("`{what}` is not valid UTF-8")))
}

fn slice<'a, T>(p: *const T, n: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    // SAFETY: non-null and valid for `n` reads per the API contract.
    Ok(unsafe { std::slice::from_raw_parts(p, n) })
}

fn policy_kind(v: u32) -> Result<PolicyKind, Fail> {
    Ok(match v {
        0 => PolicyKind::Linearized,
        1 => PolicyKind::Egreedy,
        2 => PolicyKind::Ebeginning,
        3 => PolicyKind::Edecreasing,
        4 => PolicyKind::Eg,
        _ => return Err(Fail::Arg(format!("unknown policy kind {v}"))),
    })
}

fn utility_variant(v: u32) -> Result<UtilityVariant, Fail> {
    match v {
        0 => Ok(UtilityVariant::Difference),
        1 => Ok(UtilityVariant::Mixture),
        _ => Err(Fail::Arg(format!("unknown utility variant {v}"))),
    }
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lb_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Fills `out` with the defaults for `kind`.
///
/// # Safety
/// `out` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lb_policy_params_default(kind: u32, out: *mut LbPolicyParams) -> LbStatus {
    guard(|| {
        let out = non_null_mut(out, "out")?;
        let cfg = PolicyConfig::new(policy_kind(kind)?);
        *out = LbPolicyParams {
            kind,
            epsilon: cfg.epsilon,
            epsilon0: cfg.epsilon0,
            horizon: cfg.horizon,
            batch: cfg.batch,
            a: cfg.utility.a,
            b: cfg.utility.b,
            variant: LbUtilityVariant::Difference as u32,
            threshold_error: cfg.threshold_error,
            gate: LbGate::Literal as u32,
        };
        Ok(())
    })
}

/// Creates a policy seeded with `seed`. Free it with [`lb_policy_free`].
///
/// # Safety
/// `params` must be NULL or point to an initialized `LbPolicyParams`; `out`
/// must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lb_policy_new(
    params: *const LbPolicyParams,
    seed: u64,
    out: *mut *mut LbPolicy,
) -> LbStatus {
    guard(|| {
        let p = non_null(params, "params")?;
        let out = non_null_mut(out, "out")?;
        let mut cfg = PolicyConfig::new(policy_kind(p.kind)?);
        cfg.epsilon = p.epsilon;
        cfg.epsilon0 = p.epsilon0;
        cfg.horizon = p.horizon;
        cfg.batch = p.batch;
        cfg.utility = UtilityParams {
            a: p.a,
            b: p.b,
            variant: utility_variant(p.variant)?,
        };
        cfg.threshold_error = p.threshold_error;
        cfg.gate = match p.gate {
            0 => GreedyGate::Literal,
            1 => GreedyGate::Conventional,
            g => return Err(Fail::Arg(format!("unknown gate {g}"))),
        };
        let inner = PolicyState::new(cfg, seed)?;
        *out = Box::into_raw(Box::new(LbPolicy { inner }));
        Ok(())
    })
}

/// # Safety
/// `policy` must be NULL or a handle from [`lb_policy_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lb_policy_free(policy: *mut LbPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Picks one of `n` candidate ids and writes its position to `out_index`
/// and the ε in force to `out_epsilon` (which may be NULL).
///
/// # Safety
/// `candidates` must hold `n` NUL-terminated strings; other pointers must be
/// NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn lb_policy_select(
    policy: *mut LbPolicy,
    candidates: *const *const c_char,
    n: usize,
    out_index: *mut usize,
    out_epsilon: *mut f64,
) -> LbStatus {
    guard(|| {
        let policy = non_null_mut(policy, "policy")?;
        let out_index = non_null_mut(out_index, "out_index")?;
        let ids = slice(candidates, n, "candidates")?
            .iter()
            .map(|&p| c_str(p, "candidates[i]").map(DocId::new))
            .collect::<Result<Vec<_>, _>>()?;
        let decision = policy.inner.refresh_and_select(&ids)?;
        *out_index = ids
            .iter()
            .position(|d| *d == decision.doc)
            .expect("decision comes from the candidates");
        if let Some(eps) = unsafe { out_epsilon.as_mut() } {
            *eps = decision.epsilon_used;
        }
        Ok(())
    })
}

/// Records whether the displayed document `doc` was clicked.
///
/// # Safety
/// `policy` must be a live handle and `doc` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lb_policy_observe(
    policy: *mut LbPolicy,
    doc: *const c_char,
    clicked: bool,
) -> LbStatus {
    guard(|| {
        let policy = non_null_mut(policy, "policy")?;
        let doc = DocId::new(c_str(doc, "doc")?);
        policy.inner.observe(&doc, clicked);
        Ok(())
    })
}

/// Observed CTR of `doc`; `LB_STATUS_INSUFFICIENT_DATA` if never displayed.
///
/// # Safety
/// `policy` must be a live handle, `doc` a NUL-terminated string and `out`
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lb_policy_ctr(
    policy: *const LbPolicy,
    doc: *const c_char,
    out: *mut f64,
) -> LbStatus {
    guard(|| {
        let policy = non_null(policy, "policy")?;
        let out = non_null_mut(out, "out")?;
        *out = policy.inner.store().ctr(&DocId::new(c_str(doc, "doc")?))?;
        Ok(())
    })
}

fn fit_points(points: Vec<(f64, f64)>, threshold_error: f64) -> Result<PiecewiseDensity, Fail> {
    let series = PointSeries::from_points(points)?;
    Ok(PiecewiseDensity::fit(&series, threshold_error)?)
}

/// Linearizes the points `(s[i], p[i])` (strictly increasing `s`) and
/// normalizes the result to unit area.
///
/// # Safety
/// `s` and `p` must each hold `n` doubles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lb_density_fit(
    s: *const f64,
    p: *const f64,
    n: usize,
    threshold_error: f64,
    out: *mut *mut LbDensity,
) -> LbStatus {
    guard(|| {
        let out = non_null_mut(out, "out")?;
        let s = slice(s, n, "s")?;
        let p = slice(p, n, "p")?;
        let inner = fit_points(s.iter().copied().zip(p.iter().copied()).collect(), threshold_error)?;
        *out = Box::into_raw(Box::new(LbDensity { inner }));
        Ok(())
    })
}

/// Bins `n` rewards in `[0, 1]` into a point series, then fits it as
/// [`lb_density_fit`] does.
///
/// # Safety
/// `rewards` must hold `n` doubles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lb_density_from_rewards(
    rewards: *const f64,
    n: usize,
    threshold_error: f64,
    out: *mut *mut LbDensity,
) -> LbStatus {
    guard(|| {
        let out = non_null_mut(out, "out")?;
        let sample = RewardSample::from_rewards(
            RewardLabel::Clicked,
            slice(rewards, n, "rewards")?.iter().copied(),
        )?;
        let series = build_point_series(&sample)?;
        let inner = fit_points(series.points().to_vec(), threshold_error)?;
        *out = Box::into_raw(Box::new(LbDensity { inner }));
        Ok(())
    })
}

/// # Safety
/// `density` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lb_density_free(density: *mut LbDensity) {
    if !density.is_null() {
        drop(Box::from_raw(density));
    }
}

/// # Safety
/// `density` must be a live handle; `lo` and `hi` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lb_density_domain(
    density: *const LbDensity,
    lo: *mut f64,
    hi: *mut f64,
) -> LbStatus {
    guard(|| {
        let d = non_null(density, "density")?;
        let (l, h) = d.inner.domain();
        *non_null_mut(lo, "lo")? = l;
        *non_null_mut(hi, "hi")? = h;
        Ok(())
    })
}

/// Number of linear pieces (classes and liaisons).
///
/// # Safety
/// `density` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lb_density_segment_count(
    density: *const LbDensity,
    out: *mut usize,
) -> LbStatus {
    guard(|| {
        *non_null_mut(out, "out")? = non_null(density, "density")?.inner.segments().len();
        Ok(())
    })
}

/// Density value at `x`, zero outside the domain.
///
/// # Safety
/// `density` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lb_density_evaluate(
    density: *const LbDensity,
    x: f64,
    out: *mut f64,
) -> LbStatus {
    guard(|| {
        *non_null_mut(out, "out")? = non_null(density, "density")?.inner.evaluate(x);
        Ok(())
    })
}

/// Probability mass above `o`.
///
/// # Safety
/// `density` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lb_density_tail(
    density: *const LbDensity,
    o: f64,
    out: *mut f64,
) -> LbStatus {
    guard(|| {
        *non_null_mut(out, "out")? = non_null(density, "density")?.inner.tail_probability(o);
        Ok(())
    })
}

/// Threshold maximizing the utility for the given clicked / non-clicked
/// densities; `variant` is an `LbUtilityVariant`.
///
/// # Safety
/// Both densities must be live handles; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lb_optimize_threshold(
    clicked: *const LbDensity,
    non_clicked: *const LbDensity,
    a: f64,
    b: f64,
    variant: u32,
    clicked_count: u64,
    non_clicked_count: u64,
    grid_size: usize,
    out: *mut LbTradeoff,
) -> LbStatus {
    guard(|| {
        let dc = &non_null(clicked, "clicked")?.inner;
        let dn = &non_null(non_clicked, "non_clicked")?.inner;
        let out = non_null_mut(out, "out")?;
        let params = UtilityParams::new(a, b, utility_variant(variant)?)?;
        let counts = PopulationCounts::new(clicked_count, non_clicked_count);
        let r = optimize_threshold(Some(dc), Some(dn), &params, &counts, grid_size)?;
        *out = LbTradeoff {
            threshold: r.threshold,
            epsilon: r.epsilon,
            utility: r.utility,
        };
        Ok(())
    })
}

fn ontology_out(out: *mut *mut LbOntology, inner: Ontology) -> Result<(), Fail> {
    *non_null_mut(out, "out")? = Box::into_raw(Box::new(LbOntology { inner }));
    Ok(())
}

/// Reads a `child<TAB>parent` file, with `-` as the root's parent.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lb_ontology_load(path: *const c_char, out: *mut *mut LbOntology) -> LbStatus {
    guard(|| ontology_out(out, Ontology::load(c_str(path, "path")?)?))
}

/// Same format as [`lb_ontology_load`], from memory.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lb_ontology_parse(text: *const c_char, out: *mut *mut LbOntology) -> LbStatus {
    guard(|| ontology_out(out, Ontology::parse(c_str(text, "text")?, "<memory>")?))
}

/// # Safety
/// `ontology` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lb_ontology_free(ontology: *mut LbOntology) {
    if !ontology.is_null() {
        drop(Box::from_raw(ontology));
    }
}

/// Wu-Palmer similarity of two concepts.
///
/// # Safety
/// `ontology` must be a live handle, `x` and `y` NUL-terminated strings and
/// `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lb_ontology_similarity(
    ontology: *const LbOntology,
    x: *const c_char,
    y: *const c_char,
    out: *mut f64,
) -> LbStatus {
    guard(|| {
        let o = &non_null(ontology, "ontology")?.inner;
        *non_null_mut(out, "out")? = o.wu_palmer(c_str(x, "x")?, c_str(y, "y")?)?;
        Ok(())
    })
}
