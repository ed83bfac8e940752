//! C ABI over the rugsim engine.
//!
//! Amounts cross the boundary as `int64_t` counts of 10^-9 units. Every
//! fallible call returns a [`RugsimStatus`]; the message for the last
//! non-OK status on the calling thread is available from
//! [`rugsim_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use rugsim::fixed::FixedAmount;
use rugsim::harness::{load_scenario, Engine, Trace};
use rugsim::rng::fnv1a64;
use rugsim::tokenomics::target_supply;
use rugsim::vault::{anticoin_value, cumulative_penalty, whale_penalty};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RugsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Load = 3,
    Arithmetic = 4,
    Finished = 5,
    NotFinished = 6,
    Io = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(status: RugsimStatus, message: impl Into<String>) -> RugsimStatus {
    let msg = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
    status
}

fn guard(f: impl FnOnce() -> RugsimStatus) -> RugsimStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| set_error(RugsimStatus::Panic, "panic inside rugsim"))
}

/// Message for the last failed call on this thread, or NULL.
///
/// The pointer stays valid until the next rugsim call on the same thread.
#[no_mangle]
pub extern "C" fn rugsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rugsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Opaque simulation handle.
pub struct RugsimSim {
    engine: Option<Engine>,
    trace: Option<Trace>,
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, RugsimStatus> {
    if p.is_null() {
        return Err(set_error(RugsimStatus::NullPointer, "null string argument"));
    }
    // SAFETY: non-null and NUL-terminated per the caller contract.
    unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| set_error(RugsimStatus::InvalidUtf8, "string is not UTF-8"))
}

/// Loads a scenario document and builds a simulation at height 0.
///
/// # Safety
/// `scenario_json` must be a NUL-terminated string and `out` a writable
/// pointer. The handle written to `out` must be released with
/// [`rugsim_sim_free`].
#[no_mangle]
pub unsafe extern "C" fn rugsim_sim_new(scenario_json: *const c_char, out: *mut *mut RugsimSim) -> RugsimStatus {
    guard(|| {
        if out.is_null() {
            return set_error(RugsimStatus::NullPointer, "out is null");
        }
        // SAFETY: forwarded caller contract.
        let doc = match unsafe { str_arg(scenario_json) } {
            Ok(s) => s,
            Err(status) => return status,
        };
        match load_scenario(doc).and_then(Engine::new) {
            Ok(engine) => {
                let sim = Box::new(RugsimSim { engine: Some(engine), trace: None });
                // SAFETY: checked non-null above.
                unsafe { *out = Box::into_raw(sim) };
                RugsimStatus::Ok
            }
            Err(e) => set_error(RugsimStatus::Load, e.to_string()),
        }
    })
}

/// # Safety
/// `sim` must come from [`rugsim_sim_new`] and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn rugsim_sim_free(sim: *mut RugsimSim) {
    if !sim.is_null() {
        // SAFETY: ownership returns to Rust exactly once per the contract.
        drop(unsafe { Box::from_raw(sim) });
    }
}

unsafe fn sim_mut<'a>(sim: *mut RugsimSim) -> Result<&'a mut RugsimSim, RugsimStatus> {
    // SAFETY: a live handle from rugsim_sim_new per the caller contract.
    unsafe { sim.as_mut() }.ok_or_else(|| set_error(RugsimStatus::NullPointer, "sim is null"))
}

/// Advances one height. Returns `Finished` once every chain is done or the
/// simulation has been run to completion.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rugsim_sim_step(sim: *mut RugsimSim) -> RugsimStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let sim = match unsafe { sim_mut(sim) } {
            Ok(s) => s,
            Err(status) => return status,
        };
        match sim.engine.as_mut() {
            Some(e) if !e.is_finished() => {
                e.step();
                RugsimStatus::Ok
            }
            _ => RugsimStatus::Finished,
        }
    })
}

/// Current height, or the final height after a run. 0 for NULL.
///
/// # Safety
/// `sim` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn rugsim_sim_height(sim: *const RugsimSim) -> u64 {
    // SAFETY: forwarded caller contract.
    match unsafe { sim.as_ref() } {
        Some(RugsimSim { engine: Some(e), .. }) => e.height(),
        Some(RugsimSim { trace: Some(t), .. }) => t.telemetry.last().map_or(0, |r| r.height),
        _ => 0,
    }
}

/// Runs every chain up to height `n_blocks` (0 means each chain's own
/// block count) and finalizes the trace. Writes the trace hash to `hash_out` if non-NULL.
///
/// # Safety
/// `sim` must be a live handle; `hash_out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn rugsim_sim_run(sim: *mut RugsimSim, n_blocks: u64, hash_out: *mut u64) -> RugsimStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let sim = match unsafe { sim_mut(sim) } {
            Ok(s) => s,
            Err(status) => return status,
        };
        let Some(engine) = sim.engine.take() else {
            return set_error(RugsimStatus::Finished, "simulation already finished");
        };
        let trace = if n_blocks == 0 {
            let mut engine = engine;
            while !engine.is_finished() {
                engine.step();
            }
            engine.finish()
        } else {
            engine.run(Some(n_blocks))
        };
        if !hash_out.is_null() {
            // SAFETY: non-null and writable per the contract.
            unsafe { *hash_out = trace.trace_hash };
        }
        sim.trace = Some(trace);
        RugsimStatus::Ok
    })
}

/// Writes events.jsonl, telemetry.csv, state.json and hash.txt into `dir`.
///
/// # Safety
/// `sim` must be a live handle; `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn rugsim_sim_write_trace(sim: *const RugsimSim, dir: *const c_char) -> RugsimStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let Some(sim) = (unsafe { sim.as_ref() }) else {
            return set_error(RugsimStatus::NullPointer, "sim is null");
        };
        // SAFETY: forwarded caller contract.
        let dir = match unsafe { str_arg(dir) } {
            Ok(s) => s,
            Err(status) => return status,
        };
        let Some(trace) = &sim.trace else {
            return set_error(RugsimStatus::NotFinished, "run the simulation before writing its trace");
        };
        match trace.write(Path::new(dir)) {
            Ok(()) => RugsimStatus::Ok,
            Err(e) => set_error(RugsimStatus::Io, e.to_string()),
        }
    })
}

fn raw_in(v: i64) -> FixedAmount {
    FixedAmount::from_raw(v as i128)
}

unsafe fn raw_out(out: *mut i64, r: Result<FixedAmount, String>) -> RugsimStatus {
    if out.is_null() {
        return set_error(RugsimStatus::NullPointer, "out is null");
    }
    match r {
        Ok(v) => match i64::try_from(v.raw()) {
            Ok(x) => {
                // SAFETY: non-null and writable per the caller contract.
                unsafe { *out = x };
                RugsimStatus::Ok
            }
            Err(_) => set_error(RugsimStatus::Arithmetic, "result does not fit in int64"),
        },
        Err(m) => set_error(RugsimStatus::Arithmetic, m),
    }
}

/// `max(0, ln(p0 / price))`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rugsim_anticoin_value(p0: i64, price: i64, out: *mut i64) -> RugsimStatus {
    // SAFETY: forwarded caller contract.
    guard(|| unsafe { raw_out(out, anticoin_value(raw_in(p0), raw_in(price)).map_err(|e| e.to_string())) })
}

/// Target protocol-token supply for a vaulted value.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rugsim_target_supply(vaulted_value: i64, s0: i64, out: *mut i64) -> RugsimStatus {
    // SAFETY: forwarded caller contract.
    guard(|| unsafe { raw_out(out, target_supply(raw_in(vaulted_value), raw_in(s0)).map_err(|e| e.to_string())) })
}

/// `k · H^λ`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rugsim_whale_penalty(holdings: i64, k: i64, lambda: i64, out: *mut i64) -> RugsimStatus {
    // SAFETY: forwarded caller contract.
    guard(|| unsafe {
        raw_out(out, whale_penalty(raw_in(holdings), raw_in(k), raw_in(lambda)).map_err(|e| e.to_string()))
    })
}

/// Total penalty for withdrawing `holdings` in `n` equal parts.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rugsim_cumulative_penalty(
    holdings: i64,
    n: u64,
    gamma: i64,
    delta_gamma: i64,
    out: *mut i64,
) -> RugsimStatus {
    // SAFETY: forwarded caller contract.
    guard(|| unsafe {
        raw_out(
            out,
            cumulative_penalty(raw_in(holdings), n, raw_in(gamma), raw_in(delta_gamma)).map_err(|e| e.to_string()),
        )
    })
}

/// FNV-1a 64 of a byte buffer, the hash used for traces.
///
/// # Safety
/// `data` must point to `len` readable bytes, or be NULL with `len` 0.
#[no_mangle]
pub unsafe extern "C" fn rugsim_fnv1a64(data: *const u8, len: usize) -> u64 {
    if data.is_null() {
        return fnv1a64(&[]);
    }
    // SAFETY: forwarded caller contract.
    fnv1a64(unsafe { std::slice::from_raw_parts(data, len) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_out_is_reported() {
        let s = unsafe { rugsim_anticoin_value(1, 1, ptr::null_mut()) };
        assert_eq!(s, RugsimStatus::NullPointer);
        assert!(!rugsim_last_error().is_null());
    }

    #[test]
    fn error_clears_on_success() {
        let mut v = 0;
        unsafe { rugsim_anticoin_value(0, 1, &mut v) };
        assert!(!rugsim_last_error().is_null());
        assert_eq!(unsafe { rugsim_anticoin_value(2_000_000_000, 1_000_000_000, &mut v) }, RugsimStatus::Ok);
        assert!(rugsim_last_error().is_null());
        assert_eq!(v, 693_147_181);
    }
}
