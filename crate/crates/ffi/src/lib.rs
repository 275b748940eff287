//! C interface to the experiment harness.
//!
//! The header (`include/mvcca.h`, regenerated by the build script) exposes
//! two opaque handles: a parsed experiment config and a completed run
//! record. Every fallible call returns a status code; on failure a
//! human-readable message is stored per thread and can be read back with
//! [`mvcca_last_error_message`]. Strings handed out by this library are
//! heap-allocated NUL-terminated copies and must be released with
//! [`mvcca_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mvcca_core::harness::{run_experiment, ExperimentConfig, RunRecord};
use mvcca_core::Error;

/// Opaque parsed experiment configuration.
pub struct MvccaConfig {
    inner: ExperimentConfig,
}

/// Opaque completed experiment run: per-trial table plus summary.
pub struct MvccaRecord {
    inner: RunRecord,
}

/// Status code returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MvccaStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The config or another input was rejected.
    ConfigError = 3,
    /// The computation failed numerically.
    NumericError = 4,
    /// A bug: an internal invariant broke or a panic was caught.
    Internal = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn clear_error() {
    LAST_ERROR.with(|slot| slot.borrow_mut().take());
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("NUL bytes replaced");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_for(err: &Error) -> MvccaStatus {
    match err.exit_code() {
        2 => MvccaStatus::ConfigError,
        _ => MvccaStatus::NumericError,
    }
}

fn fail(err: Error) -> MvccaStatus {
    let status = status_for(&err);
    set_error(err.to_string());
    status
}

fn null_arg() -> MvccaStatus {
    set_error("required pointer argument is null".into());
    MvccaStatus::NullPointer
}

fn guarded<F: FnOnce() -> MvccaStatus>(body: F) -> MvccaStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic".into());
            MvccaStatus::Internal
        }
    }
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> MvccaStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            MvccaStatus::Ok
        }
        Err(_) => {
            set_error("produced string contains an interior NUL byte".into());
            MvccaStatus::Internal
        }
    }
}

/// Library version as a static NUL-terminated string; never freed.
#[no_mangle]
pub extern "C" fn mvcca_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message describing the most recent failure on the calling thread, or
/// null when the last call on this thread succeeded. The pointer is
/// invalidated by the next mvcca_* call on the same thread.
#[no_mangle]
pub extern "C" fn mvcca_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(ptr::null(), |message| message.as_ptr())
    })
}

/// Parse and validate a JSON experiment config.
///
/// # Safety
/// `json` must point to a NUL-terminated string and `out` must be valid
/// for writes. On success `*out` owns a config that must be released with
/// [`mvcca_config_free`]; on failure `*out` is null.
#[no_mangle]
pub unsafe extern "C" fn mvcca_config_parse(
    json: *const c_char,
    out: *mut *mut MvccaConfig,
) -> MvccaStatus {
    guarded(|| {
        clear_error();
        if json.is_null() || out.is_null() {
            return null_arg();
        }
        *out = ptr::null_mut();
        let text = match CStr::from_ptr(json).to_str() {
            Ok(text) => text,
            Err(_) => {
                set_error("config JSON is not valid UTF-8".into());
                return MvccaStatus::InvalidUtf8;
            }
        };
        match ExperimentConfig::from_json_str(text) {
            Ok(config) => {
                *out = Box::into_raw(Box::new(MvccaConfig { inner: config }));
                MvccaStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Release a config handle. Null is accepted and ignored.
///
/// # Safety
/// `config` must have come from [`mvcca_config_parse`] and must not be
/// used again afterwards.
#[no_mangle]
pub unsafe extern "C" fn mvcca_config_free(config: *mut MvccaConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Replace the config's seed, which changes its hash and its outputs.
///
/// # Safety
/// `config` must be a live handle from [`mvcca_config_parse`].
#[no_mangle]
pub unsafe extern "C" fn mvcca_config_set_seed(
    config: *mut MvccaConfig,
    seed: u64,
) -> MvccaStatus {
    guarded(|| {
        clear_error();
        if config.is_null() {
            return null_arg();
        }
        (*config).inner.seed = seed;
        MvccaStatus::Ok
    })
}

/// Hex SHA-256 hash of the config's canonical JSON form.
///
/// # Safety
/// `config` must be a live handle and `out` valid for writes. On success
/// `*out` owns a string to release with [`mvcca_string_free`].
#[no_mangle]
pub unsafe extern "C" fn mvcca_config_hash(
    config: *const MvccaConfig,
    out: *mut *mut c_char,
) -> MvccaStatus {
    guarded(|| {
        clear_error();
        if config.is_null() || out.is_null() {
            return null_arg();
        }
        *out = ptr::null_mut();
        match (*config).inner.config_hash() {
            Ok(hash) => write_string(out, hash),
            Err(err) => fail(err),
        }
    })
}

/// Run the experiment the config selects, blocking until it finishes.
///
/// # Safety
/// `config` must be a live handle and `out` valid for writes. On success
/// `*out` owns a record to release with [`mvcca_record_free`]; on failure
/// `*out` is null.
#[no_mangle]
pub unsafe extern "C" fn mvcca_run(
    config: *const MvccaConfig,
    out: *mut *mut MvccaRecord,
) -> MvccaStatus {
    guarded(|| {
        clear_error();
        if config.is_null() || out.is_null() {
            return null_arg();
        }
        *out = ptr::null_mut();
        match run_experiment(&(*config).inner) {
            Ok(record) => {
                *out = Box::into_raw(Box::new(MvccaRecord { inner: record }));
                MvccaStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Release a run record. Null is accepted and ignored.
///
/// # Safety
/// `record` must have come from [`mvcca_run`] and must not be used again
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn mvcca_record_free(record: *mut MvccaRecord) {
    if !record.is_null() {
        drop(Box::from_raw(record));
    }
}

/// Number of data rows in the record's table; 0 for a null handle.
///
/// # Safety
/// `record` must be null or a live handle from [`mvcca_run`].
#[no_mangle]
pub unsafe extern "C" fn mvcca_record_num_rows(record: *const MvccaRecord) -> usize {
    if record.is_null() {
        0
    } else {
        (*record).inner.rows.len()
    }
}

/// Number of columns in the record's table; 0 for a null handle.
///
/// # Safety
/// `record` must be null or a live handle from [`mvcca_run`].
#[no_mangle]
pub unsafe extern "C" fn mvcca_record_num_columns(record: *const MvccaRecord) -> usize {
    if record.is_null() {
        0
    } else {
        (*record).inner.columns.len()
    }
}

/// Whether the run's acceptance condition held: 1 yes, 0 no, -1 when the
/// record carries no acceptance flag or the handle is null.
///
/// # Safety
/// `record` must be null or a live handle from [`mvcca_run`].
#[no_mangle]
pub unsafe extern "C" fn mvcca_record_assert_ok(record: *const MvccaRecord) -> i32 {
    if record.is_null() {
        return -1;
    }
    match (*record).inner.assert_ok() {
        Some(true) => 1,
        Some(false) => 0,
        None => -1,
    }
}

/// Render the record as CSV (header row plus one line per trial).
///
/// # Safety
/// `record` must be a live handle and `out` valid for writes. On success
/// `*out` owns a string to release with [`mvcca_string_free`].
#[no_mangle]
pub unsafe extern "C" fn mvcca_record_csv(
    record: *const MvccaRecord,
    out: *mut *mut c_char,
) -> MvccaStatus {
    guarded(|| {
        clear_error();
        if record.is_null() || out.is_null() {
            return null_arg();
        }
        *out = ptr::null_mut();
        write_string(out, (*record).inner.to_csv_string())
    })
}

/// Render the record as canonical JSON (sorted keys, newline-terminated).
///
/// # Safety
/// `record` must be a live handle and `out` valid for writes. On success
/// `*out` owns a string to release with [`mvcca_string_free`].
#[no_mangle]
pub unsafe extern "C" fn mvcca_record_json(
    record: *const MvccaRecord,
    out: *mut *mut c_char,
) -> MvccaStatus {
    guarded(|| {
        clear_error();
        if record.is_null() || out.is_null() {
            return null_arg();
        }
        *out = ptr::null_mut();
        write_string(out, (*record).inner.to_json_string())
    })
}

/// Release a string produced by this library. Null is accepted and
/// ignored.
///
/// # Safety
/// `s` must have come from an mvcca_* out-parameter and must not be used
/// again afterwards.
#[no_mangle]
pub unsafe extern "C" fn mvcca_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPECTRUM_CONFIG: &str = r#"{
        "experiment": "construct-spectrum",
        "seed": 7,
        "targets": {"r": 1, "t12": [0.8], "t13": [0.8], "t23": [0.8], "dS": [2, 2, 2]}
    }"#;

    fn c(text: &str) -> CString {
        CString::new(text).unwrap()
    }

    unsafe fn parse(text: &str) -> *mut MvccaConfig {
        let mut config = ptr::null_mut();
        let status = mvcca_config_parse(c(text).as_ptr(), &mut config);
        assert_eq!(status, MvccaStatus::Ok);
        assert!(!config.is_null());
        config
    }

    unsafe fn take_string(s: *mut c_char) -> String {
        assert!(!s.is_null());
        let owned = CStr::from_ptr(s).to_str().unwrap().to_string();
        mvcca_string_free(s);
        owned
    }

    #[test]
    fn version_is_a_static_string() {
        let version = unsafe { CStr::from_ptr(mvcca_version()) };
        assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn parse_run_and_render_match_the_library() {
        unsafe {
            let config = parse(SPECTRUM_CONFIG);

            let mut hash_out = ptr::null_mut();
            assert_eq!(
                mvcca_config_hash(config, &mut hash_out),
                MvccaStatus::Ok
            );
            let hash = take_string(hash_out);

            let mut record_out = ptr::null_mut();
            assert_eq!(mvcca_run(config, &mut record_out), MvccaStatus::Ok);
            let mut csv_out = ptr::null_mut();
            assert_eq!(mvcca_record_csv(record_out, &mut csv_out), MvccaStatus::Ok);
            let csv = take_string(csv_out);
            let mut json_out = ptr::null_mut();
            assert_eq!(
                mvcca_record_json(record_out, &mut json_out),
                MvccaStatus::Ok
            );
            let json = take_string(json_out);
            let rows = mvcca_record_num_rows(record_out);
            let cols = mvcca_record_num_columns(record_out);
            assert_eq!(mvcca_record_assert_ok(record_out), 1);
            mvcca_record_free(record_out);
            mvcca_config_free(config);

            let reference_config = ExperimentConfig::from_json_str(SPECTRUM_CONFIG).unwrap();
            assert_eq!(hash, reference_config.config_hash().unwrap());
            let reference = run_experiment(&reference_config).unwrap();
            assert_eq!(csv, reference.to_csv_string());
            assert_eq!(json, reference.to_json_string());
            assert_eq!(rows, reference.rows.len());
            assert_eq!(cols, reference.columns.len());
        }
    }

    #[test]
    fn null_arguments_are_reported() {
        unsafe {
            let mut out = ptr::null_mut();
            assert_eq!(
                mvcca_config_parse(ptr::null(), &mut out),
                MvccaStatus::NullPointer
            );
            assert!(!mvcca_last_error_message().is_null());
            assert_eq!(
                mvcca_run(ptr::null(), &mut (ptr::null_mut())),
                MvccaStatus::NullPointer
            );
            assert_eq!(mvcca_record_num_rows(ptr::null()), 0);
            assert_eq!(mvcca_record_assert_ok(ptr::null()), -1);
        }
    }

    #[test]
    fn invalid_utf8_is_reported() {
        unsafe {
            let bytes: [c_char; 3] = [-1i8 as c_char, -2i8 as c_char, 0];
            let mut out = ptr::null_mut();
            assert_eq!(
                mvcca_config_parse(bytes.as_ptr(), &mut out),
                MvccaStatus::InvalidUtf8
            );
            assert!(out.is_null());
        }
    }

    #[test]
    fn malformed_json_maps_to_config_error() {
        unsafe {
            let mut out = ptr::null_mut();
            let status = mvcca_config_parse(c("{\"experiment\":").as_ptr(), &mut out);
            assert_eq!(status, MvccaStatus::ConfigError);
            assert!(out.is_null());
            let message = CStr::from_ptr(mvcca_last_error_message())
                .to_str()
                .unwrap();
            assert!(message.contains("config"), "{message}");
        }
    }

    #[test]
    fn infeasible_model_maps_to_config_error() {
        let text = r#"{
            "experiment": "construct-spectrum",
            "seed": 7,
            "targets": {"r": 1, "t12": [0.9], "t13": [0.9], "t23": [0.405], "dS": [2, 2, 2]}
        }"#;
        unsafe {
            let config = parse(text);
            let mut record = ptr::null_mut();
            assert_eq!(mvcca_run(config, &mut record), MvccaStatus::ConfigError);
            assert!(record.is_null());
            mvcca_config_free(config);
        }
    }

    #[test]
    fn status_mapping_follows_error_class() {
        assert_eq!(
            status_for(&Error::Config("bad".into())),
            MvccaStatus::ConfigError
        );
        assert_eq!(
            status_for(&Error::Numerical("off".into())),
            MvccaStatus::NumericError
        );
        assert_eq!(
            status_for(&Error::NonFinite("x".into())),
            MvccaStatus::NumericError
        );
    }

    #[test]
    fn seed_override_changes_the_hash() {
        unsafe {
            let config = parse(SPECTRUM_CONFIG);
            let mut first = ptr::null_mut();
            mvcca_config_hash(config, &mut first);
            assert_eq!(mvcca_config_set_seed(config, 99), MvccaStatus::Ok);
            let mut second = ptr::null_mut();
            mvcca_config_hash(config, &mut second);
            assert_ne!(take_string(first), take_string(second));
            mvcca_config_free(config);
        }
    }

    #[test]
    fn frees_accept_null() {
        unsafe {
            mvcca_config_free(ptr::null_mut());
            mvcca_record_free(ptr::null_mut());
            mvcca_string_free(ptr::null_mut());
        }
    }

    #[test]
    fn success_clears_the_error_message() {
        unsafe {
            let mut out = ptr::null_mut();
            let _ = mvcca_config_parse(c("not json").as_ptr(), &mut out);
            assert!(!mvcca_last_error_message().is_null());
            let config = parse(SPECTRUM_CONFIG);
            assert!(mvcca_last_error_message().is_null());
            mvcca_config_free(config);
        }
    }

    #[test]
    fn generated_header_declares_the_api() {
        let header = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/include/mvcca.h"
        ))
        .expect("header generated at build time");
        for needle in [
            "typedef struct MvccaConfig MvccaConfig;",
            "typedef struct MvccaRecord MvccaRecord;",
            "MVCCA_STATUS_OK = 0",
            "mvcca_config_parse",
            "mvcca_run",
            "mvcca_record_csv",
            "mvcca_string_free",
            "mvcca_last_error_message",
        ] {
            assert!(header.contains(needle), "header lacks {needle:?}");
        }
    }
}
