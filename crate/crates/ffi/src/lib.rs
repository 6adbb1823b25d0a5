//! C ABI over `fastrings`.
//!
//! Every function returns an [`FrStatus`]. Handles are opaque and owned by the
//! caller until passed to their `*_free` function. Output buffers are written
//! only on success; when a buffer is too small the required length is stored in
//! `out_len` and `FR_STATUS_BUFFER_TOO_SMALL` is returned.

use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fastrings::apsp::{apsp_approx, Matrix, WeightMatrix};
use fastrings::maxconv::{fast_max_convolution, NonNegVector};
use fastrings::norm_projection::{EstimatorConfig, PStarSchedule, Projection};
use fastrings::topk::{fast_topk_with_indices, Matching, NormQueue};
use fastrings::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidValue = 3,
    ShapeMismatch = 4,
    Exhausted = 5,
    Underflow = 6,
    BufferTooSmall = 7,
    Internal = 8,
}

impl From<&Error> for FrStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidSchedule(_) | Error::InvalidArgument(_) | Error::Empty => FrStatus::InvalidArgument,
            Error::InvalidValue { .. } | Error::AllZero(_) => FrStatus::InvalidValue,
            Error::ShapeMismatch(_) => FrStatus::ShapeMismatch,
            Error::Exhausted => FrStatus::Exhausted,
            Error::AllUnderflow => FrStatus::Underflow,
            _ => FrStatus::Internal,
        }
    }
}

/// An exponent schedule together with the projection it was built for.
pub struct FrSchedule {
    schedule: PStarSchedule,
    projection: Projection,
}

pub struct FrNormQueue(NormQueue);

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FrTopKItem {
    pub value: f64,
    pub log_value: f64,
    pub m_star: usize,
    /// -1 when not recovered.
    pub i: i64,
    /// -1 when not recovered.
    pub j: i64,
    pub verified: bool,
}

fn guard(f: impl FnOnce() -> Result<(), FrStatus>) -> FrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FrStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => FrStatus::Internal,
    }
}

fn lift<T>(r: fastrings::Result<T>) -> Result<T, FrStatus> {
    r.map_err(|e| FrStatus::from(&e))
}

unsafe fn slice<'a, T>(p: *const T, len: usize) -> Result<&'a [T], FrStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(FrStatus::NullPointer);
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_buf<T: Copy>(src: &[T], out: *mut T, cap: usize, out_len: *mut usize) -> Result<(), FrStatus> {
    if out_len.is_null() {
        return Err(FrStatus::NullPointer);
    }
    *out_len = src.len();
    if cap < src.len() {
        return Err(FrStatus::BufferTooSmall);
    }
    if !src.is_empty() {
        if out.is_null() {
            return Err(FrStatus::NullPointer);
        }
        ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    }
    Ok(())
}

unsafe fn schedule_ref<'a>(s: *const FrSchedule) -> Result<&'a FrSchedule, FrStatus> {
    s.as_ref().ok_or(FrStatus::NullPointer)
}

fn estimator(s: &FrSchedule, tau: f64) -> Result<EstimatorConfig, FrStatus> {
    let config = EstimatorConfig {
        projection: s.projection,
        tau,
        bias_correct: false,
    };
    lift(config.validate())?;
    Ok(config)
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn fr_status_message(status: FrStatus) -> *const c_char {
    let msg: &'static [u8] = match status {
        FrStatus::Ok => b"ok\0",
        FrStatus::NullPointer => b"null pointer\0",
        FrStatus::InvalidArgument => b"invalid argument\0",
        FrStatus::InvalidValue => b"negative, non-finite or all-zero input\0",
        FrStatus::ShapeMismatch => b"shape mismatch\0",
        FrStatus::Exhausted => b"queue exhausted\0",
        FrStatus::Underflow => b"every norm power underflowed\0",
        FrStatus::BufferTooSmall => b"output buffer too small\0",
        FrStatus::Internal => b"internal error\0",
    };
    msg.as_ptr().cast()
}

/// Schedule for exponents up to `p_max` and projection order `r` (0 raw, 1, 2).
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn fr_schedule_new(p_max: u32, r: u32, out: *mut *mut FrSchedule) -> FrStatus {
    guard(|| {
        if out.is_null() {
            return Err(FrStatus::NullPointer);
        }
        let projection = lift(Projection::from_order(r))?;
        let schedule = lift(PStarSchedule::for_projection(p_max, projection))?;
        *out = Box::into_raw(Box::new(FrSchedule { schedule, projection }));
        Ok(())
    })
}

/// # Safety
/// `s` must come from [`fr_schedule_new`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn fr_schedule_free(s: *mut FrSchedule) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Copies the exponents into `out` (capacity `cap`); `*out_len` gets their count.
///
/// # Safety
/// `s` must be a live schedule, `out` valid for `cap` writes, `out_len` for one.
#[no_mangle]
pub unsafe extern "C" fn fr_schedule_exponents(
    s: *const FrSchedule,
    out: *mut u32,
    cap: usize,
    out_len: *mut usize,
) -> FrStatus {
    guard(|| write_buf(schedule_ref(s)?.schedule.exponents(), out, cap, out_len))
}

/// Approximate max-convolution; writes `nx + ny - 1` values.
///
/// # Safety
/// `x`, `y` must hold `nx`, `ny` readable values, `out` `cap` writable ones.
#[no_mangle]
pub unsafe extern "C" fn fr_max_convolution(
    x: *const f64,
    nx: usize,
    y: *const f64,
    ny: usize,
    s: *const FrSchedule,
    tau: f64,
    out: *mut f64,
    cap: usize,
    out_len: *mut usize,
) -> FrStatus {
    guard(|| {
        let s = schedule_ref(s)?;
        let x = lift(NonNegVector::new(slice(x, nx)?.to_vec()))?;
        let y = lift(NonNegVector::new(slice(y, ny)?.to_vec()))?;
        let z = lift(fast_max_convolution(&x, &y, &s.schedule, &estimator(s, tau)?))?;
        write_buf(&z, out, cap, out_len)
    })
}

/// Approximate all-pairs shortest path distances of a row-major `n x n`
/// weight matrix (diagonal 0, `INFINITY` for absent edges) into `out`.
///
/// # Safety
/// `weights` and `out` must each hold `n * n` values.
#[no_mangle]
pub unsafe extern "C" fn fr_apsp(
    weights: *const f64,
    n: usize,
    s: *const FrSchedule,
    tau: f64,
    out: *mut f64,
) -> FrStatus {
    guard(|| {
        let s = schedule_ref(s)?;
        let cells = n.checked_mul(n).ok_or(FrStatus::InvalidArgument)?;
        let w = lift(Matrix::new(n, slice(weights, cells)?.to_vec()).and_then(WeightMatrix::new))?;
        let d = lift(apsp_approx(&w, &s.schedule, &estimator(s, tau)?))?.distances;
        let mut len = 0;
        write_buf(d.as_slice(), out, cells, &mut len)
    })
}

/// Approximate top `k` of `x_i + y_j` with indices recovered from a run on
/// reversed `y`. Writes up to `k` items; `*out_len` gets the count.
///
/// # Safety
/// `x`, `y` must hold `nx`, `ny` values; `out` must hold `k` items.
#[no_mangle]
pub unsafe extern "C" fn fr_topk(
    x: *const f64,
    nx: usize,
    y: *const f64,
    ny: usize,
    k: usize,
    s: *const FrSchedule,
    tau: f64,
    verify_tolerance: f64,
    out: *mut FrTopKItem,
    out_len: *mut usize,
) -> FrStatus {
    guard(|| {
        let s = schedule_ref(s)?;
        let r = lift(fast_topk_with_indices(
            slice(x, nx)?,
            slice(y, ny)?,
            k,
            &s.schedule,
            &estimator(s, tau)?,
            verify_tolerance,
            Matching::default(),
        ))?;
        let items: Vec<FrTopKItem> = r
            .items
            .iter()
            .map(|it| FrTopKItem {
                value: it.value,
                log_value: it.log_value,
                m_star: it.m_star,
                i: it.i.map_or(-1, |v| v as i64),
                j: it.j.map_or(-1, |v| v as i64),
                verified: it.verified,
            })
            .collect();
        write_buf(&items, out, k, out_len)
    })
}

/// Empty queue over the exponents of `s`.
///
/// # Safety
/// `s` must be a live schedule; `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn fr_norm_queue_new(s: *const FrSchedule, tau: f64, out: *mut *mut FrNormQueue) -> FrStatus {
    guard(|| {
        if out.is_null() {
            return Err(FrStatus::NullPointer);
        }
        let s = schedule_ref(s)?;
        let q = lift(NormQueue::new(&s.schedule, estimator(s, tau)?))?;
        *out = Box::into_raw(Box::new(FrNormQueue(q)));
        Ok(())
    })
}

/// # Safety
/// `q` must come from [`fr_norm_queue_new`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn fr_norm_queue_free(q: *mut FrNormQueue) {
    if !q.is_null() {
        drop(Box::from_raw(q));
    }
}

/// Adds `v >= 0` to every stored norm power.
///
/// # Safety
/// `q` must be a live queue.
#[no_mangle]
pub unsafe extern "C" fn fr_norm_queue_push(q: *mut FrNormQueue, v: f64) -> FrStatus {
    guard(|| {
        let q = q.as_mut().ok_or(FrStatus::NullPointer)?;
        lift(q.0.push(v))
    })
}

/// Estimates and removes the largest value.
///
/// # Safety
/// `q` must be a live queue and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fr_norm_queue_pop_max(q: *mut FrNormQueue, out: *mut f64) -> FrStatus {
    guard(|| {
        let q = q.as_mut().ok_or(FrStatus::NullPointer)?;
        if out.is_null() {
            return Err(FrStatus::NullPointer);
        }
        *out = lift(q.0.pop_max())?;
        Ok(())
    })
}

/// Estimates the largest value without removing it.
///
/// # Safety
/// `q` must be a live queue and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fr_norm_queue_peek_max(q: *const FrNormQueue, out: *mut f64) -> FrStatus {
    guard(|| {
        let q = q.as_ref().ok_or(FrStatus::NullPointer)?;
        if out.is_null() {
            return Err(FrStatus::NullPointer);
        }
        let est = q.0.peek_max();
        if est.is_underflow() {
            return Err(FrStatus::Exhausted);
        }
        *out = est.value;
        Ok(())
    })
}
