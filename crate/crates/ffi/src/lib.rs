//! C ABI over `hqam-mimo`.
//!
//! Objects are handed out as opaque pointers and released with the matching
//! `*_free` function. Every fallible call returns an [`HqamStatus`]; on
//! failure a description is available from [`hqam_last_error`] on the same
//! thread until the next failing call.
//!
//! Strings crossing the boundary are NUL-terminated UTF-8. Strings returned
//! by the library are owned by the caller and released with
//! [`hqam_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hqam_mimo::cli::{self, config_to_text, parse_config};
use hqam_mimo::hqam::{build_hqam, HqamParams, LayeredConstellation};
use hqam_mimo::sim::{run_sweep, SimConfig, SimResult};
use hqam_mimo::wimax_ldpc::{load_code, DecoderKind, QcLdpcCode, RateId};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HqamStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Simulation = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// A hierarchical constellation.
pub struct HqamConstellation(LayeredConstellation);

/// An expanded WiMAX LDPC code.
pub struct HqamLdpcCode(QcLdpcCode);

/// A validated simulation configuration.
pub struct HqamSimConfig(SimConfig);

/// Rows produced by a sweep.
pub struct HqamResults(Vec<SimResult>);

/// Numeric fields of one result row. Missing optional values are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HqamResultRow {
    pub ebn0_db: f64,
    pub frames: u64,
    pub frame_errors: u64,
    pub fer: f64,
    pub fer_ci_lo: f64,
    pub fer_ci_hi: f64,
    pub bit_errors: u64,
    pub bits: u64,
    pub ber: f64,
    pub avg_iters: f64,
    pub metric_evals: u64,
    pub seconds: f64,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(HqamStatus, String);

impl Failure {
    fn null(what: &str) -> Self {
        Failure(HqamStatus::NullPointer, format!("{what} is null"))
    }

    fn arg(msg: impl Into<String>) -> Self {
        Failure(HqamStatus::InvalidArgument, msg.into())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HqamStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HqamStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            HqamStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure::arg(format!("{what} is not valid UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        unsafe { str_arg(p, what) }.map(Some)
    }
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::null(what));
    }
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::null(what));
    }
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    unsafe { p.as_ref() }.ok_or_else(|| Failure::null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    unsafe { p.as_mut() }.ok_or_else(|| Failure::null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null("out"));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null("out"));
    }
    let c = CString::new(s).map_err(|_| Failure::arg("string contains NUL"))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(unsafe { Box::from_raw(p) });
    }
}

/// Description of the last failure on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hqam_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a string obtained from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hqam_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

// ------------------------------------------------------------ constellation

/// Builds a constellation with `layers` QPSK layers and `layers - 1`
/// distance ratios (base first).
///
/// # Safety
/// `ratios` must point to `n_ratios` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hqam_constellation_new(
    layers: usize,
    ratios: *const f64,
    n_ratios: usize,
    out: *mut *mut HqamConstellation,
) -> HqamStatus {
    guard(|| {
        let ratios = unsafe { slice_arg(ratios, n_ratios, "ratios") }?.to_vec();
        let params = HqamParams::new(layers, ratios).map_err(|e| Failure::arg(e.to_string()))?;
        unsafe { put(out, HqamConstellation(build_hqam(&params))) }
    })
}

/// # Safety
/// `c` must be NULL or a live constellation handle.
#[no_mangle]
pub unsafe extern "C" fn hqam_constellation_free(c: *mut HqamConstellation) {
    unsafe { free(c) }
}

/// Number of points, `4^layers`. Zero for a NULL handle.
///
/// # Safety
/// `c` must be NULL or a live constellation handle.
#[no_mangle]
pub unsafe extern "C" fn hqam_constellation_size(c: *const HqamConstellation) -> usize {
    unsafe { c.as_ref() }.map_or(0, |c| c.0.points().len())
}

/// Writes the point with bit label `label` (MSB is the first base bit).
///
/// # Safety
/// `c` must be a live handle; `re` and `im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hqam_constellation_point(
    c: *const HqamConstellation,
    label: usize,
    re: *mut f64,
    im: *mut f64,
) -> HqamStatus {
    guard(|| {
        let c = unsafe { handle(c, "constellation") }?;
        if re.is_null() || im.is_null() {
            return Err(Failure::null("re/im"));
        }
        let p =
            *c.0.points()
                .get(label)
                .ok_or_else(|| Failure::arg(format!("label {label} out of range")))?;
        unsafe {
            *re = p.re;
            *im = p.im;
        }
        Ok(())
    })
}

/// Writes the per-layer energies into `out` (length at least `layers`).
///
/// # Safety
/// `c` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hqam_constellation_layer_energy(
    c: *const HqamConstellation,
    out: *mut f64,
    len: usize,
) -> HqamStatus {
    guard(|| {
        let c = unsafe { handle(c, "constellation") }?;
        let e = c.0.layer_energy();
        if len < e.len() {
            return Err(Failure(
                HqamStatus::BufferTooSmall,
                format!("need {} entries", e.len()),
            ));
        }
        unsafe { slice_out(out, len, "out") }?[..e.len()].copy_from_slice(e);
        Ok(())
    })
}

// ------------------------------------------------------------ LDPC

/// Loads a WiMAX code. `rate` is one of "1/2", "2/3A", "3/4A", "5/6".
///
/// # Safety
/// `rate` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hqam_ldpc_new(
    rate: *const c_char,
    n: usize,
    out: *mut *mut HqamLdpcCode,
) -> HqamStatus {
    guard(|| {
        let rate: RateId = unsafe { str_arg(rate, "rate") }?
            .parse()
            .map_err(|e: hqam_mimo::wimax_ldpc::LdpcError| Failure::arg(e.to_string()))?;
        let code = load_code(rate, n).map_err(|e| Failure::arg(e.to_string()))?;
        unsafe { put(out, HqamLdpcCode(code)) }
    })
}

/// # Safety
/// `c` must be NULL or a live code handle.
#[no_mangle]
pub unsafe extern "C" fn hqam_ldpc_free(c: *mut HqamLdpcCode) {
    unsafe { free(c) }
}

/// Codeword length, zero for a NULL handle.
///
/// # Safety
/// `c` must be NULL or a live code handle.
#[no_mangle]
pub unsafe extern "C" fn hqam_ldpc_n(c: *const HqamLdpcCode) -> usize {
    unsafe { c.as_ref() }.map_or(0, |c| c.0.n())
}

/// Number of information bits, zero for a NULL handle.
///
/// # Safety
/// `c` must be NULL or a live code handle.
#[no_mangle]
pub unsafe extern "C" fn hqam_ldpc_k(c: *const HqamLdpcCode) -> usize {
    unsafe { c.as_ref() }.map_or(0, |c| c.0.k())
}

/// Systematic encoding of `k` bits (0/1 bytes) into `n` bytes.
///
/// # Safety
/// `info` must hold `info_len` bytes and `codeword` `codeword_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn hqam_ldpc_encode(
    c: *const HqamLdpcCode,
    info: *const u8,
    info_len: usize,
    codeword: *mut u8,
    codeword_len: usize,
) -> HqamStatus {
    guard(|| {
        let c = unsafe { handle(c, "code") }?;
        let info = unsafe { slice_arg(info, info_len, "info") }?;
        if codeword_len < c.0.n() {
            return Err(Failure(
                HqamStatus::BufferTooSmall,
                format!("need {} codeword bytes", c.0.n()),
            ));
        }
        let cw = c.0.encode(info).map_err(|e| Failure::arg(e.to_string()))?;
        unsafe { slice_out(codeword, codeword_len, "codeword") }?[..cw.len()].copy_from_slice(&cw);
        Ok(())
    })
}

/// Belief-propagation decoding of `n` channel LLRs (positive favours 0).
/// `min_sum_scale <= 0` selects sum-product, otherwise normalised min-sum.
/// Writes `k` information bits; `iterations` and `converged` may be NULL.
///
/// # Safety
/// Buffers must have the stated lengths; out pointers may be NULL.
#[no_mangle]
pub unsafe extern "C" fn hqam_ldpc_decode(
    c: *const HqamLdpcCode,
    llrs: *const f64,
    llr_len: usize,
    max_iterations: usize,
    min_sum_scale: f64,
    info: *mut u8,
    info_len: usize,
    iterations: *mut usize,
    converged: *mut bool,
) -> HqamStatus {
    guard(|| {
        let c = unsafe { handle(c, "code") }?;
        let llrs = unsafe { slice_arg(llrs, llr_len, "llrs") }?;
        if info_len < c.0.k() {
            return Err(Failure(
                HqamStatus::BufferTooSmall,
                format!("need {} info bytes", c.0.k()),
            ));
        }
        let kind = if min_sum_scale > 0.0 {
            DecoderKind::MinSum(min_sum_scale)
        } else {
            DecoderKind::SumProduct
        };
        let res =
            c.0.decode(llrs, max_iterations, kind)
                .map_err(|e| Failure::arg(e.to_string()))?;
        unsafe { slice_out(info, info_len, "info") }?[..res.info_bits.len()]
            .copy_from_slice(&res.info_bits);
        unsafe {
            if let Some(it) = iterations.as_mut() {
                *it = res.iterations;
            }
            if let Some(cv) = converged.as_mut() {
                *cv = res.converged;
            }
        }
        Ok(())
    })
}

// ------------------------------------------------------------ simulation

/// Configuration of a named preset; `series` may be NULL for the first one.
///
/// # Safety
/// `name` must be a NUL-terminated string, `series` NULL or one.
#[no_mangle]
pub unsafe extern "C" fn hqam_config_from_preset(
    name: *const c_char,
    series: *const c_char,
    out: *mut *mut HqamSimConfig,
) -> HqamStatus {
    guard(|| {
        let name = unsafe { str_arg(name, "name") }?;
        let series = unsafe { opt_str_arg(series, "series") }?;
        let cfg =
            cli::preset(name, series).map_err(|e| Failure(HqamStatus::Config, e.to_string()))?;
        unsafe { put(out, HqamSimConfig(cfg)) }
    })
}

/// Parses configuration text in the `key = value` file format.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hqam_config_parse(
    text: *const c_char,
    out: *mut *mut HqamSimConfig,
) -> HqamStatus {
    guard(|| {
        let text = unsafe { str_arg(text, "text") }?;
        let cfg = parse_config(text).map_err(|e| Failure(HqamStatus::Config, e.to_string()))?;
        unsafe { put(out, HqamSimConfig(cfg)) }
    })
}

/// # Safety
/// `c` must be NULL or a live config handle.
#[no_mangle]
pub unsafe extern "C" fn hqam_config_free(c: *mut HqamSimConfig) {
    unsafe { free(c) }
}

/// Renders the configuration in file form into a new string.
///
/// # Safety
/// `c` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hqam_config_to_text(
    c: *const HqamSimConfig,
    out: *mut *mut c_char,
) -> HqamStatus {
    guard(|| {
        let c = unsafe { handle(c, "config") }?;
        unsafe { put_string(out, config_to_text(&c.0)) }
    })
}

fn revalidate(cfg: &mut SimConfig, apply: impl FnOnce(&mut SimConfig)) -> Result<(), Failure> {
    let mut next = cfg.clone();
    apply(&mut next);
    next.validate()
        .map_err(|e| Failure(HqamStatus::Config, e.to_string()))?;
    *cfg = next;
    Ok(())
}

/// Replaces the Eb/N0 grid (dB).
///
/// # Safety
/// `c` must be a live handle; `ebn0_db` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hqam_config_set_ebn0(
    c: *mut HqamSimConfig,
    ebn0_db: *const f64,
    len: usize,
) -> HqamStatus {
    guard(|| {
        let c = unsafe { handle_mut(c, "config") }?;
        let grid = unsafe { slice_arg(ebn0_db, len, "ebn0_db") }?.to_vec();
        revalidate(&mut c.0, |cfg| cfg.ebn0_db = grid)
    })
}

/// # Safety
/// `c` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hqam_config_set_seed(c: *mut HqamSimConfig, seed: u64) -> HqamStatus {
    guard(|| {
        let c = unsafe { handle_mut(c, "config") }?;
        revalidate(&mut c.0, |cfg| cfg.master_seed = seed)
    })
}

/// Worker threads (at least 1).
///
/// # Safety
/// `c` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hqam_config_set_workers(
    c: *mut HqamSimConfig,
    workers: usize,
) -> HqamStatus {
    guard(|| {
        let c = unsafe { handle_mut(c, "config") }?;
        revalidate(&mut c.0, |cfg| cfg.workers = workers)
    })
}

/// Frame budget per point; 0 restores the default.
///
/// # Safety
/// `c` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hqam_config_set_max_frames(
    c: *mut HqamSimConfig,
    max_frames: u64,
) -> HqamStatus {
    guard(|| {
        let c = unsafe { handle_mut(c, "config") }?;
        revalidate(&mut c.0, |cfg| {
            cfg.max_frames = (max_frames > 0).then_some(max_frames)
        })
    })
}

/// Runs the configured sweep.
///
/// # Safety
/// `c` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hqam_run(
    c: *const HqamSimConfig,
    out: *mut *mut HqamResults,
) -> HqamStatus {
    guard(|| {
        let c = unsafe { handle(c, "config") }?;
        let rows = run_sweep(&c.0).map_err(|e| Failure(HqamStatus::Simulation, e.to_string()))?;
        unsafe { put(out, HqamResults(rows)) }
    })
}

/// # Safety
/// `r` must be NULL or a live results handle.
#[no_mangle]
pub unsafe extern "C" fn hqam_results_free(r: *mut HqamResults) {
    unsafe { free(r) }
}

/// Number of rows, zero for a NULL handle.
///
/// # Safety
/// `r` must be NULL or a live results handle.
#[no_mangle]
pub unsafe extern "C" fn hqam_results_len(r: *const HqamResults) -> usize {
    unsafe { r.as_ref() }.map_or(0, |r| r.0.len())
}

/// Numeric fields of row `index`.
///
/// # Safety
/// `r` must be a live handle; `row` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hqam_results_row(
    r: *const HqamResults,
    index: usize,
    row: *mut HqamResultRow,
) -> HqamStatus {
    guard(|| {
        let r = unsafe { handle(r, "results") }?;
        let s =
            r.0.get(index)
                .ok_or_else(|| Failure::arg(format!("row {index} out of range")))?;
        let row = unsafe { row.as_mut() }.ok_or_else(|| Failure::null("row"))?;
        let (lo, hi) = s.fer_ci.unwrap_or((f64::NAN, f64::NAN));
        *row = HqamResultRow {
            ebn0_db: s.ebn0_db,
            frames: s.frames,
            frame_errors: s.frame_errors,
            fer: s.fer,
            fer_ci_lo: lo,
            fer_ci_hi: hi,
            bit_errors: s.bit_errors,
            bits: s.bits,
            ber: s.ber,
            avg_iters: s.avg_iters.unwrap_or(f64::NAN),
            metric_evals: s.metric_evals,
            seconds: s.seconds.unwrap_or(f64::NAN),
            seed: s.seed,
        };
        Ok(())
    })
}

/// Layer name of row `index` ("base", "enh1", "overall", "single", ...)
/// as a new string.
///
/// # Safety
/// `r` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hqam_results_layer(
    r: *const HqamResults,
    index: usize,
    out: *mut *mut c_char,
) -> HqamStatus {
    guard(|| {
        let r = unsafe { handle(r, "results") }?;
        let s =
            r.0.get(index)
                .ok_or_else(|| Failure::arg(format!("row {index} out of range")))?;
        unsafe { put_string(out, s.layer.clone()) }
    })
}

/// The whole table in the CLI's CSV format, as a new string.
///
/// # Safety
/// `r` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hqam_results_csv(
    r: *const HqamResults,
    out: *mut *mut c_char,
) -> HqamStatus {
    guard(|| {
        let r = unsafe { handle(r, "results") }?;
        unsafe { put_string(out, cli::csv::to_csv_string(&r.0)) }
    })
}
