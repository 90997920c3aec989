//! C ABI over `mabi`.
//!
//! Objects are exposed as opaque handles created by `*_new` functions and
//! released by the matching `*_free`. Every fallible function returns a
//! [`MabiStatus`]; on failure a message is available from
//! [`mabi_last_error_message`] until the next call on the same thread.
//! Panics never cross the boundary: they are caught and reported as
//! [`MabiStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mabi::environment::AssignmentVector;
use mabi::estimator::{exposure_prob_analytic, ht_ix_estimate, ArmDistribution, Exposed, ExposureReport};
use mabi::geometry::{sup_distance, Point, UnitUniverse};
use mabi::metrics::quantile;
use mabi::partition::{containment_probability, PartitionSpec};
use mabi::policy::Exp3State;
use mabi::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MabiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfRange = 3,
    Precondition = 4,
    Unsupported = 5,
    Internal = 6,
    Panic = 7,
}

impl From<&Error> for MabiStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Config(_) => MabiStatus::InvalidArgument,
            Error::InvalidUnit { .. } | Error::OutsideBox { .. } | Error::RoundOutOfRange { .. } => {
                MabiStatus::OutOfRange
            }
            Error::Precondition(_) => MabiStatus::Precondition,
            Error::Unsupported(_) => MabiStatus::Unsupported,
            _ => MabiStatus::Internal,
        }
    }
}

/// Opaque set of unit locations.
pub struct MabiUniverse(UnitUniverse);

/// Opaque partition geometry.
pub struct MabiPartitionSpec(PartitionSpec);

/// Opaque EXP3 learner state.
pub struct MabiExp3(Exp3State);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type Outcome = Result<(), Failure>;

/// Runs `body`, translating errors and panics into a status code.
fn guard(body: impl FnOnce() -> Outcome) -> MabiStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => MabiStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            MabiStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            let status = MabiStatus::from(&e);
            set_error(e.to_string());
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            MabiStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn write<T>(out: *mut T, value: T, what: &'static str) -> Outcome {
    if out.is_null() {
        return Err(Failure::Null(what));
    }
    out.write(value);
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn mabi_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mabi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Sup-norm distance between `(ax, ay)` and `(bx, by)`.
#[no_mangle]
pub extern "C" fn mabi_sup_distance(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    sup_distance(Point::new(ax, ay), Point::new(bx, by))
}

/// Unit-spaced `side × side` lattice centred at the origin.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn mabi_universe_lattice_new(side: usize, out: *mut *mut MabiUniverse) -> MabiStatus {
    guard(|| {
        if side == 0 {
            return Err(Error::InvalidArgument("lattice side must be positive".into()).into());
        }
        let handle = Box::into_raw(Box::new(MabiUniverse(UnitUniverse::lattice_with_side(side))));
        write(out, handle, "out")
    })
}

/// Universe from `len` points given as interleaved `x, y` pairs inside
/// `[-half_width, half_width]²`.
///
/// # Safety
/// `xy` must point to `2 * len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mabi_universe_new(
    xy: *const f64,
    len: usize,
    half_width: f64,
    out: *mut *mut MabiUniverse,
) -> MabiStatus {
    guard(|| {
        let coords = slice(xy, 2 * len, "xy")?;
        let points = coords.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect();
        let universe = UnitUniverse::new(points, half_width)?;
        write(out, Box::into_raw(Box::new(MabiUniverse(universe))), "out")
    })
}

/// Number of units, or 0 for a null handle.
///
/// # Safety
/// `universe` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mabi_universe_len(universe: *const MabiUniverse) -> usize {
    universe.as_ref().map_or(0, |u| u.0.len())
}

/// # Safety
/// `universe` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mabi_universe_free(universe: *mut MabiUniverse) {
    if !universe.is_null() {
        drop(Box::from_raw(universe));
    }
}

/// Partition geometry with cell side `cell_side` and margin `margin` over
/// the universe's bounding box.
///
/// # Safety
/// `universe` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mabi_partition_spec_new(
    universe: *const MabiUniverse,
    cell_side: f64,
    margin: f64,
    out: *mut *mut MabiPartitionSpec,
) -> MabiStatus {
    guard(|| {
        let universe = deref(universe, "universe")?;
        let spec = PartitionSpec::for_universe(&universe.0, cell_side, margin)?;
        write(out, Box::into_raw(Box::new(MabiPartitionSpec(spec))), "out")
    })
}

/// # Safety
/// `spec` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mabi_partition_spec_free(spec: *mut MabiPartitionSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Exact probability that the radius-`r` ball around `unit` lies in one
/// cluster.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mabi_containment_probability(
    spec: *const MabiPartitionSpec,
    universe: *const MabiUniverse,
    unit: usize,
    r: f64,
    out: *mut f64,
) -> MabiStatus {
    guard(|| {
        let spec = deref(spec, "spec")?;
        let universe = deref(universe, "universe")?;
        let p = containment_probability(&spec.0, &universe.0, unit, r)?;
        write(out, p, "out")
    })
}

/// Exact probability that `unit` is exposed to `arm` when each cluster draws
/// its arm from `probs[0..arms]`.
///
/// # Safety
/// Handles must be live, `probs` must hold `arms` doubles, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mabi_exposure_probability(
    spec: *const MabiPartitionSpec,
    universe: *const MabiUniverse,
    unit: usize,
    arm: usize,
    r: f64,
    probs: *const f64,
    arms: usize,
    out: *mut f64,
) -> MabiStatus {
    guard(|| {
        let spec = deref(spec, "spec")?;
        let universe = deref(universe, "universe")?;
        let dist = ArmDistribution::new(slice(probs, arms, "probs")?.to_vec())?;
        let q = exposure_prob_analytic(&spec.0, &universe.0, unit, arm, r, &dist)?;
        write(out, q, "out")
    })
}

/// Exposure marker for a unit exposed to no arm.
pub const MABI_EXPOSED_NONE: i64 = -1;
/// Exposure marker for a unit exposed to every arm.
pub const MABI_EXPOSED_ALL: i64 = -2;

/// HT-IX estimate of arm `arm`'s mean reward.
///
/// `exposed[u]` is the arm unit `u` was exposed to, or one of
/// `MABI_EXPOSED_NONE` / `MABI_EXPOSED_ALL`; `q` is row-major `units × arms`.
///
/// # Safety
/// `rewards` and `exposed` must hold `units` entries, `q` `units * arms`.
#[no_mangle]
pub unsafe extern "C" fn mabi_ht_ix_estimate(
    rewards: *const f64,
    exposed: *const i64,
    q: *const f64,
    units: usize,
    arms: usize,
    arm: usize,
    beta: f64,
    out: *mut f64,
) -> MabiStatus {
    guard(|| {
        let rewards = slice(rewards, units, "rewards")?;
        let marks = slice(exposed, units, "exposed")?
            .iter()
            .map(|&m| match m {
                MABI_EXPOSED_NONE => Ok(Exposed::None),
                MABI_EXPOSED_ALL => Ok(Exposed::All),
                a if a >= 0 && (a as usize) < arms => Ok(Exposed::Arm(a as usize)),
                a => Err(Error::InvalidArgument(format!("exposure marker {a} out of range"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let q = slice(q, units.saturating_mul(arms), "q")?.to_vec();
        let report = ExposureReport::new(arms, marks, q)?;
        write(out, ht_ix_estimate(rewards, &report, arm, beta)?, "out")
    })
}

/// EXP3 learner over `arms` arms with uniform initial weights.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mabi_exp3_new(arms: usize, eta: f64, beta: f64, out: *mut *mut MabiExp3) -> MabiStatus {
    guard(|| {
        let state = Exp3State::new(arms, eta, beta)?;
        write(out, Box::into_raw(Box::new(MabiExp3(state))), "out")
    })
}

/// Number of arms, or 0 for a null handle.
///
/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mabi_exp3_arms(state: *const MabiExp3) -> usize {
    state.as_ref().map_or(0, |s| s.0.arms())
}

/// Writes the current sampling distribution into `probs[0..arms]`.
///
/// # Safety
/// `state` must be live and `probs` hold `arms` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mabi_exp3_probs(state: *const MabiExp3, probs: *mut f64, arms: usize) -> MabiStatus {
    guard(|| {
        let state = deref(state, "state")?;
        if arms != state.0.arms() {
            return Err(Error::InvalidArgument(format!("buffer of {arms} for {} arms", state.0.arms())).into());
        }
        let dst = slice_mut(probs, arms, "probs")?;
        dst.copy_from_slice(state.0.probs().probs());
        Ok(())
    })
}

/// Applies one exponential-weights step with reward estimates
/// `estimates[0..arms]`.
///
/// # Safety
/// `state` must be live and `estimates` hold `arms` doubles.
#[no_mangle]
pub unsafe extern "C" fn mabi_exp3_update(state: *mut MabiExp3, estimates: *const f64, arms: usize) -> MabiStatus {
    guard(|| {
        let state = deref_mut(state, "state")?;
        state.0.update(slice(estimates, arms, "estimates")?)?;
        Ok(())
    })
}

/// # Safety
/// `state` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mabi_exp3_free(state: *mut MabiExp3) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Share of units on each arm of the assignment `arms_of_units[0..units]`.
///
/// # Safety
/// `arms_of_units` must hold `units` entries and `shares` `arm_count`.
#[no_mangle]
pub unsafe extern "C" fn mabi_arm_shares(
    arms_of_units: *const usize,
    units: usize,
    arm_count: usize,
    shares: *mut f64,
) -> MabiStatus {
    guard(|| {
        let z = AssignmentVector::new(slice(arms_of_units, units, "arms_of_units")?.to_vec(), arm_count)?;
        slice_mut(shares, arm_count, "shares")?.copy_from_slice(&z.arm_shares());
        Ok(())
    })
}

/// Type-7 sample quantile of `values[0..len]` at level `q` in `[0, 1]`.
///
/// # Safety
/// `values` must hold `len` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn mabi_quantile(values: *const f64, len: usize, q: f64, out: *mut f64) -> MabiStatus {
    guard(|| {
        let v = quantile(slice(values, len, "values")?, q)?;
        write(out, v, "out")
    })
}
