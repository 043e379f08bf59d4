//! C ABI for the ringlab traceability library.
//!
//! Chains are held behind opaque handles created by [`ringlab_chain_load`]
//! and released with [`ringlab_chain_free`]. Every fallible function returns
//! an [`RlStatus`] code and writes its result through an out-pointer; no
//! Rust panics or types cross the boundary. The matching C header is
//! generated into `include/ringlab.h` at build time.

use std::ffi::{c_char, CStr};
use std::ptr;

use ringlab::deduction::{closure_deduce, fixpoint_deduce, DeductionError};
use ringlab::temporal::{bge_min, effective_untraceability, ge_min, guessing_entropy};
use ringlab::Chain;

/// Result codes for all fallible entry points.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// The chain file could not be read or parsed.
    LoadFailed = 3,
    /// Two inputs are forced to spend the same output.
    ConflictingChain = 4,
    InvalidArgument = 5,
    InternalError = 6,
}

/// An opaque, immutable chain handle.
pub struct RlChain {
    chain: Chain,
}

/// Summary of one deduction run.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RlDeductionSummary {
    pub total_inputs: u64,
    pub deduced: u64,
    /// Inputs with at least one ruled-out reference but no verdict.
    pub partial: u64,
    pub components_skipped: u64,
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ringlab_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Short static description of a status code.
#[no_mangle]
pub extern "C" fn ringlab_status_message(status: RlStatus) -> *const c_char {
    let msg: &'static str = match status {
        RlStatus::Ok => "ok\0",
        RlStatus::NullPointer => "null pointer argument\0",
        RlStatus::InvalidUtf8 => "path is not valid UTF-8\0",
        RlStatus::LoadFailed => "failed to read or parse the chain file\0",
        RlStatus::ConflictingChain => "conflicting chain: forced double spend\0",
        RlStatus::InvalidArgument => "invalid argument\0",
        RlStatus::InternalError => "internal error\0",
    };
    msg.as_ptr() as *const c_char
}

/// Load a chain from a JSON Lines file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
/// On success `*out` owns the chain; release it with [`ringlab_chain_free`].
#[no_mangle]
pub unsafe extern "C" fn ringlab_chain_load(
    path: *const c_char,
    out: *mut *mut RlChain,
) -> RlStatus {
    if path.is_null() || out.is_null() {
        return RlStatus::NullPointer;
    }
    *out = ptr::null_mut();
    let Ok(path) = CStr::from_ptr(path).to_str() else {
        return RlStatus::InvalidUtf8;
    };
    match std::panic::catch_unwind(|| Chain::read_jsonl(path)) {
        Ok(Ok(chain)) => {
            *out = Box::into_raw(Box::new(RlChain { chain }));
            RlStatus::Ok
        }
        Ok(Err(_)) => RlStatus::LoadFailed,
        Err(_) => RlStatus::InternalError,
    }
}

/// Release a chain handle. Passing NULL is a no-op.
///
/// # Safety
/// `chain` must be NULL or a pointer obtained from [`ringlab_chain_load`],
/// and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ringlab_chain_free(chain: *mut RlChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}

/// Number of blocks in the chain.
///
/// # Safety
/// `chain` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ringlab_chain_num_blocks(
    chain: *const RlChain,
    out: *mut u64,
) -> RlStatus {
    let (Some(chain), false) = (chain.as_ref(), out.is_null()) else {
        return RlStatus::NullPointer;
    };
    *out = chain.chain.blocks().len() as u64;
    RlStatus::Ok
}

/// Number of ring inputs in the chain.
///
/// # Safety
/// `chain` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ringlab_chain_num_inputs(
    chain: *const RlChain,
    out: *mut u64,
) -> RlStatus {
    let (Some(chain), false) = (chain.as_ref(), out.is_null()) else {
        return RlStatus::NullPointer;
    };
    *out = chain.chain.num_inputs() as u64;
    RlStatus::Ok
}

fn summarize(
    chain: &Chain,
    result: Result<ringlab::deduction::DeductionResult, DeductionError>,
    out: &mut RlDeductionSummary,
) -> RlStatus {
    match result {
        Ok(r) => {
            out.total_inputs = chain.num_inputs() as u64;
            out.deduced = r.deduced.len() as u64;
            out.partial = r
                .ruled_out
                .keys()
                .filter(|id| !r.deduced.contains_key(*id))
                .count() as u64;
            out.components_skipped = r.stats.components_skipped;
            RlStatus::Ok
        }
        Err(DeductionError::ConflictingChain(_)) => RlStatus::ConflictingChain,
        Err(_) => RlStatus::InternalError,
    }
}

/// Run the iterative fixpoint attack and write a summary.
///
/// # Safety
/// `chain` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ringlab_fixpoint_deduce(
    chain: *const RlChain,
    out: *mut RlDeductionSummary,
) -> RlStatus {
    let (Some(handle), Some(out)) = (chain.as_ref(), out.as_mut()) else {
        return RlStatus::NullPointer;
    };
    *out = RlDeductionSummary::default();
    match std::panic::catch_unwind(|| fixpoint_deduce(&handle.chain)) {
        Ok(result) => summarize(&handle.chain, result, out),
        Err(_) => RlStatus::InternalError,
    }
}

/// Run the complete closure attack and write a summary.
///
/// # Safety
/// `chain` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ringlab_closure_deduce(
    chain: *const RlChain,
    component_size_limit: u64,
    out: *mut RlDeductionSummary,
) -> RlStatus {
    let (Some(handle), Some(out)) = (chain.as_ref(), out.as_mut()) else {
        return RlStatus::NullPointer;
    };
    if component_size_limit < 1 {
        return RlStatus::InvalidArgument;
    }
    *out = RlDeductionSummary::default();
    match std::panic::catch_unwind(|| {
        closure_deduce(&handle.chain, component_size_limit as usize)
    }) {
        Ok(result) => summarize(&handle.chain, result, out),
        Err(_) => RlStatus::InternalError,
    }
}

/// Guessing entropy of a probability vector (sum must be 1 within 1e-6).
///
/// # Safety
/// `probs` must point to `len` readable f64 values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ringlab_guessing_entropy(
    probs: *const f64,
    len: usize,
    out: *mut f64,
) -> RlStatus {
    if probs.is_null() || out.is_null() || len == 0 {
        return RlStatus::NullPointer;
    }
    let probs = std::slice::from_raw_parts(probs, len);
    match guessing_entropy(probs) {
        Ok(v) => {
            *out = v;
            RlStatus::Ok
        }
        Err(_) => RlStatus::InvalidArgument,
    }
}

/// Effective untraceability (1 + 2·Ge) of a probability vector.
///
/// # Safety
/// `probs` must point to `len` readable f64 values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ringlab_effective_untraceability(
    probs: *const f64,
    len: usize,
    out: *mut f64,
) -> RlStatus {
    if probs.is_null() || out.is_null() || len == 0 {
        return RlStatus::NullPointer;
    }
    let probs = std::slice::from_raw_parts(probs, len);
    match effective_untraceability(probs) {
        Ok(v) => {
            *out = v;
            RlStatus::Ok
        }
        Err(_) => RlStatus::InvalidArgument,
    }
}

/// Worst-case guessing entropy of an (m+1)-ring at divergence epsilon.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ringlab_ge_min(m: u64, epsilon: f64, out: *mut f64) -> RlStatus {
    if out.is_null() {
        return RlStatus::NullPointer;
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return RlStatus::InvalidArgument;
    }
    *out = ge_min(m, epsilon);
    RlStatus::Ok
}

/// Worst-case guessing entropy of a binned ring.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ringlab_bge_min(
    bin_size: u64,
    num_bins: u64,
    epsilon: f64,
    out: *mut f64,
) -> RlStatus {
    if out.is_null() {
        return RlStatus::NullPointer;
    }
    if bin_size < 1 || num_bins < 1 || !(0.0..=1.0).contains(&epsilon) {
        return RlStatus::InvalidArgument;
    }
    *out = bge_min(bin_size, num_bins, epsilon);
    RlStatus::Ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;
    use std::ptr;

    fn write_fixture_chain(dir: &std::path::Path) -> std::path::PathBuf {
        // Two outputs at height 0; B spends output 0 openly, C rings {0,1}.
        let seed = "11".repeat(32);
        let lines = [
            format!(
                r#"{{"height":0,"timestamp":0,"header_seed":"{seed}","txs":[{{"tx_id":"c0","coinbase":true,"inputs":[],"outputs":[{{"denom":7}},{{"denom":7}}]}}]}}"#
            ),
            format!(
                r#"{{"height":1,"timestamp":120,"header_seed":"{seed}","txs":[{{"tx_id":"b","coinbase":false,"inputs":[{{"input_id":"b-in","denom":7,"refs":[0]}}],"outputs":[{{"denom":7}}]}},{{"tx_id":"c","coinbase":false,"inputs":[{{"input_id":"c-in","denom":7,"refs":[0,1]}}],"outputs":[{{"denom":7}}]}}]}}"#
            ),
        ];
        let path = dir.join("fixture.chain.jsonl");
        std::fs::write(&path, lines.join("\n") + "\n").unwrap();
        path
    }

    #[test]
    fn version_is_non_empty() {
        let v = unsafe { CStr::from_ptr(ringlab_version()) };
        assert!(!v.to_str().unwrap().is_empty());
    }

    #[test]
    fn load_query_deduce_free() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture_chain(dir.path());
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        let mut handle: *mut RlChain = ptr::null_mut();
        assert_eq!(
            unsafe { ringlab_chain_load(cpath.as_ptr(), &mut handle) },
            RlStatus::Ok
        );
        assert!(!handle.is_null());
        let mut n = 0u64;
        assert_eq!(
            unsafe { ringlab_chain_num_blocks(handle, &mut n) },
            RlStatus::Ok
        );
        assert_eq!(n, 2);
        assert_eq!(
            unsafe { ringlab_chain_num_inputs(handle, &mut n) },
            RlStatus::Ok
        );
        assert_eq!(n, 2);
        let mut summary = RlDeductionSummary::default();
        assert_eq!(
            unsafe { ringlab_fixpoint_deduce(handle, &mut summary) },
            RlStatus::Ok
        );
        assert_eq!(summary.total_inputs, 2);
        assert_eq!(summary.deduced, 2);
        let mut closure = RlDeductionSummary::default();
        assert_eq!(
            unsafe { ringlab_closure_deduce(handle, 100, &mut closure) },
            RlStatus::Ok
        );
        assert_eq!(closure.deduced, 2);
        unsafe { ringlab_chain_free(handle) };
    }

    #[test]
    fn load_errors_are_reported() {
        let cpath = CString::new("/nonexistent/chain.jsonl").unwrap();
        let mut handle: *mut RlChain = ptr::null_mut();
        assert_eq!(
            unsafe { ringlab_chain_load(cpath.as_ptr(), &mut handle) },
            RlStatus::LoadFailed
        );
        assert!(handle.is_null());
        assert_eq!(
            unsafe { ringlab_chain_load(ptr::null(), &mut handle) },
            RlStatus::NullPointer
        );
    }

    #[test]
    fn metric_entry_points() {
        let probs = [0.80, 0.17, 0.02, 0.01];
        let mut v = 0.0;
        assert_eq!(
            unsafe { ringlab_guessing_entropy(probs.as_ptr(), probs.len(), &mut v) },
            RlStatus::Ok
        );
        assert!((v - 0.24).abs() < 1e-12);
        assert_eq!(
            unsafe { ringlab_effective_untraceability(probs.as_ptr(), probs.len(), &mut v) },
            RlStatus::Ok
        );
        assert!((v - 1.48).abs() < 1e-12);
        assert_eq!(unsafe { ringlab_ge_min(5, 0.0, &mut v) }, RlStatus::Ok);
        assert!((v - 2.5).abs() < 1e-12);
        assert_eq!(unsafe { ringlab_bge_min(2, 3, 0.5, &mut v) }, RlStatus::Ok);
        assert!((v - 1.5).abs() < 1e-12);
        assert_eq!(
            unsafe { ringlab_ge_min(5, 1.5, &mut v) },
            RlStatus::InvalidArgument
        );
        let bad = [0.5, 0.4];
        assert_eq!(
            unsafe { ringlab_guessing_entropy(bad.as_ptr(), bad.len(), &mut v) },
            RlStatus::InvalidArgument
        );
    }

    #[test]
    fn header_is_generated() {
        let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("include")
            .join("ringlab.h");
        let text = std::fs::read_to_string(header).expect("header generated at build time");
        for symbol in [
            "ringlab_chain_load",
            "ringlab_chain_free",
            "ringlab_fixpoint_deduce",
            "ringlab_closure_deduce",
            "ringlab_ge_min",
            "ringlab_bge_min",
            "RlStatus",
            "RlDeductionSummary",
        ] {
            assert!(text.contains(symbol), "header missing {symbol}");
        }
    }
}
