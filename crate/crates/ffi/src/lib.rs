//! C ABI over the `dsotfs` simulation library.
//!
//! Frames and channels are opaque handles created and released through this
//! interface. Every fallible call returns a [`DsotfsStatus`]; the message of
//! the most recent failure on the calling thread is available from
//! [`dsotfs_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dsotfs::analysis::{optimize_pilot_power, papr_db};
use dsotfs::baselines::{modulate, WaveformKind};
use dsotfs::channel::{CddsOperator, ChannelSpec, PathParams, SensingMode};
use dsotfs::fft;
use dsotfs::sensing::{tpe_estimate, TpeConfig};
use dsotfs::{Error, FrameParams, PilotConfig, QamAlphabet};
use num_complex::Complex64;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsotfsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    LengthMismatch = 3,
    BufferTooSmall = 4,
    Unsupported = 5,
    Numerical = 6,
    Panic = 7,
}

/// Waveform selector for `dsotfs_modulate`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsotfsWaveform {
    Ofdm = 0,
    DftSOfdm = 1,
    Otfs = 2,
    DftSOtfs = 3,
}

fn waveform_kind(w: u32) -> Result<WaveformKind, Failure> {
    Ok(match w {
        x if x == DsotfsWaveform::Ofdm as u32 => WaveformKind::Ofdm,
        x if x == DsotfsWaveform::DftSOfdm as u32 => WaveformKind::DftSOfdm,
        x if x == DsotfsWaveform::Otfs as u32 => WaveformKind::Otfs,
        x if x == DsotfsWaveform::DftSOtfs as u32 => WaveformKind::DftSOtfs,
        _ => return Err(Failure(DsotfsStatus::InvalidArgument, format!("unknown waveform {w}"))),
    })
}

/// Complex sample with the same layout as `double _Complex`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DsotfsComplex {
    pub re: f64,
    pub im: f64,
}

impl From<DsotfsComplex> for Complex64 {
    fn from(c: DsotfsComplex) -> Self {
        Complex64::new(c.re, c.im)
    }
}

impl From<Complex64> for DsotfsComplex {
    fn from(c: Complex64) -> Self {
        DsotfsComplex { re: c.re, im: c.im }
    }
}

/// One estimated target.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DsotfsTarget {
    pub alpha: DsotfsComplex,
    /// Seconds.
    pub tau: f64,
    /// Hertz.
    pub nu: f64,
    /// Metres.
    pub range: f64,
    /// Metres per second.
    pub velocity: f64,
}

/// Opaque frame description.
pub struct DsotfsFrame {
    params: FrameParams,
}

/// Opaque multipath channel bound to a frame.
pub struct DsotfsChannel {
    op: CddsOperator,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> DsotfsStatus {
    match err {
        Error::LengthMismatch { .. } | Error::DimensionMismatch { .. } => DsotfsStatus::LengthMismatch,
        Error::Unsupported(_) | Error::UnsupportedOrder(_) => DsotfsStatus::Unsupported,
        Error::SingularEstimate | Error::ModelBreakdown(_) | Error::ZeroSignal => DsotfsStatus::Numerical,
        _ => DsotfsStatus::InvalidArgument,
    }
}

struct Failure(DsotfsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(DsotfsStatus::NullPointer, format!("{what} is null"))
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> DsotfsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DsotfsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            DsotfsStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn frame_ref<'a>(frame: *const DsotfsFrame) -> Result<&'a FrameParams, Failure> {
    frame.as_ref().map(|f| &f.params).ok_or_else(|| null("frame"))
}

fn to_complex(v: &[DsotfsComplex]) -> Vec<Complex64> {
    v.iter().map(|&c| c.into()).collect()
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dsotfs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates an `m x n` frame with subcarrier spacing `delta_f` (Hz), prefix
/// length `cp_len` (samples) and carrier `f_c` (Hz).
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn dsotfs_frame_new(
    m: usize,
    n: usize,
    delta_f: f64,
    cp_len: usize,
    f_c: f64,
    out: *mut *mut DsotfsFrame,
) -> DsotfsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let params = FrameParams::new(m, n, delta_f)?.with_cp_len(cp_len)?.with_carrier(f_c)?;
        *out = Box::into_raw(Box::new(DsotfsFrame { params }));
        Ok(())
    })
}

/// Releases a frame. NULL is ignored.
///
/// # Safety
/// `frame` must come from `dsotfs_frame_new` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn dsotfs_frame_free(frame: *mut DsotfsFrame) {
    if !frame.is_null() {
        drop(Box::from_raw(frame));
    }
}

/// Number of samples `m * n` in one frame, or 0 for NULL.
///
/// # Safety
/// `frame` must be NULL or a live frame handle.
#[no_mangle]
pub unsafe extern "C" fn dsotfs_frame_len(frame: *const DsotfsFrame) -> usize {
    frame.as_ref().map_or(0, |f| f.params.len())
}

/// Builds a channel of `count` paths with delays `taus` (s), Doppler shifts
/// `nus` (Hz) and gains `gains`. `active` selects two-way geometry.
///
/// # Safety
/// `frame` must be a live frame handle; the three arrays must hold `count`
/// elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsotfs_channel_new(
    frame: *const DsotfsFrame,
    taus: *const f64,
    nus: *const f64,
    gains: *const DsotfsComplex,
    count: usize,
    active: bool,
    out: *mut *mut DsotfsChannel,
) -> DsotfsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let params = frame_ref(frame)?;
        if count == 0 {
            return Err(Failure(DsotfsStatus::InvalidArgument, "channel needs at least one path".into()));
        }
        let taus = slice(taus, count, "taus")?;
        let nus = slice(nus, count, "nus")?;
        let gains = slice(gains, count, "gains")?;
        let paths: Vec<PathParams> = (0..count)
            .map(|i| PathParams::new(gains[i].into(), taus[i], nus[i]))
            .collect();
        let sigma_h2 = paths.iter().map(|p| p.alpha.norm_sqr()).sum();
        let mode = if active { SensingMode::Active } else { SensingMode::Passive };
        let spec = ChannelSpec::new(params, paths, sigma_h2, mode)?;
        let op = CddsOperator::new(params, &spec)?;
        *out = Box::into_raw(Box::new(DsotfsChannel { op }));
        Ok(())
    })
}

/// Releases a channel. NULL is ignored.
///
/// # Safety
/// `channel` must come from `dsotfs_channel_new` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn dsotfs_channel_free(channel: *mut DsotfsChannel) {
    if !channel.is_null() {
        drop(Box::from_raw(channel));
    }
}

/// Applies the channel to one prefix-free frame of `len` time samples.
///
/// # Safety
/// `channel` must be live; `input` and `output` must each hold `len`
/// elements and may not overlap.
#[no_mangle]
pub unsafe extern "C" fn dsotfs_channel_apply(
    channel: *const DsotfsChannel,
    input: *const DsotfsComplex,
    output: *mut DsotfsComplex,
    len: usize,
) -> DsotfsStatus {
    guard(|| {
        let ch = channel.as_ref().ok_or_else(|| null("channel"))?;
        let input = to_complex(slice(input, len, "input")?);
        let r = ch.op.apply(&input)?;
        let output = slice_mut(output, len, "output")?;
        for (o, v) in output.iter_mut().zip(r) {
            *o = v.into();
        }
        Ok(())
    })
}

/// Modulates `m * n * log2(qam_order)` bits (one bit per byte) into a
/// prefix-free frame of `m * n` time samples. `waveform` is a
/// `DsotfsWaveform` value. `sigma_p2` is the
/// superimposed pilot share; it must be 0 for the OFDM waveforms.
///
/// # Safety
/// `frame` must be live; `bits` must hold `n_bits` bytes and `samples`
/// must hold `capacity` elements.
#[no_mangle]
pub unsafe extern "C" fn dsotfs_modulate(
    frame: *const DsotfsFrame,
    waveform: u32,
    bits: *const u8,
    n_bits: usize,
    qam_order: usize,
    sigma_p2: f64,
    samples: *mut DsotfsComplex,
    capacity: usize,
) -> DsotfsStatus {
    guard(|| {
        let params = frame_ref(frame)?;
        if capacity < params.len() {
            return Err(Failure(
                DsotfsStatus::BufferTooSmall,
                format!("sample buffer holds {capacity}, frame needs {}", params.len()),
            ));
        }
        let alphabet = QamAlphabet::new(qam_order)?;
        let bits = slice(bits, n_bits, "bits")?;
        let pilot = PilotConfig::centered(params, sigma_p2);
        let kind = waveform_kind(waveform)?;
        let pilot = (sigma_p2 != 0.0 || kind.is_otfs_family()).then_some(&pilot);
        let tx = modulate(kind, params, bits, &alphabet, pilot)?;
        let out = slice_mut(samples, params.len(), "samples")?;
        for (o, v) in out.iter_mut().zip(tx.samples.samples()) {
            *o = (*v).into();
        }
        Ok(())
    })
}

/// Active-sensing estimate of `targets` paths from a known transmitted
/// frame `tx` and its echo `rx`, both prefix-free with `len = m * n`
/// samples. Results go to `out[0..targets]`. `resolution_divisor` sets the
/// refinement resolution as a fraction of one bin; pass 0 for the default.
///
/// # Safety
/// `frame` must be live; `tx` and `rx` must hold `len` elements; `out` must
/// hold `targets` elements.
#[no_mangle]
pub unsafe extern "C" fn dsotfs_estimate_active(
    frame: *const DsotfsFrame,
    tx: *const DsotfsComplex,
    rx: *const DsotfsComplex,
    len: usize,
    targets: usize,
    resolution_divisor: f64,
    out: *mut DsotfsTarget,
) -> DsotfsStatus {
    guard(|| {
        let params = frame_ref(frame)?;
        let mut x = to_complex(slice(tx, len, "tx")?);
        let mut y = to_complex(slice(rx, len, "rx")?);
        if len != params.len() {
            return Err(Error::LengthMismatch {
                expected: params.len(),
                actual: len,
            }
            .into());
        }
        let out = slice_mut(out, targets, "out")?;
        fft::dft_rows(&mut x, params.m, params.n, false);
        fft::dft_rows(&mut y, params.m, params.n, false);
        let mut cfg = TpeConfig::default();
        if resolution_divisor != 0.0 {
            cfg.resolution_divisor = resolution_divisor;
        }
        let est = tpe_estimate(params, &y, &x, targets, &cfg)?;
        for (o, t) in out.iter_mut().zip(&est.targets) {
            *o = DsotfsTarget {
                alpha: t.alpha.into(),
                tau: t.tau,
                nu: t.nu,
                range: t.range,
                velocity: t.velocity,
            };
        }
        Ok(())
    })
}

/// Pilot share maximising the closed-form SINR. Writes the share and the
/// linear SINR.
///
/// # Safety
/// `sigma_p2` and `sinr` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsotfs_optimize_pilot_power(
    sigma_h2: f64,
    sigma_w2: f64,
    paths: usize,
    m: usize,
    n: usize,
    sigma_p2: *mut f64,
    sinr: *mut f64,
) -> DsotfsStatus {
    guard(|| {
        if sigma_p2.is_null() || sinr.is_null() {
            return Err(null("output"));
        }
        let alloc = optimize_pilot_power(sigma_h2, sigma_w2, paths, m, n)?;
        *sigma_p2 = alloc.sigma_p2;
        *sinr = alloc.sinr;
        Ok(())
    })
}

/// Peak-to-average power ratio of `len` samples in dB.
///
/// # Safety
/// `samples` must hold `len` elements and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsotfs_papr_db(samples: *const DsotfsComplex, len: usize, out: *mut f64) -> DsotfsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let v = to_complex(slice(samples, len, "samples")?);
        *out = papr_db(&v)?;
        Ok(())
    })
}
