//! Reference waveforms (OFDM, DFT-s-OFDM, OTFS) sharing the channel,
//! metric and sensing harness with DFT-s-OTFS.
//!
//! OFDM-family frames carry one CP per symbol and are sensed with the
//! classic 2D-FFT periodogram of the element-wise TF channel quotient,
//! which ignores inter-carrier interference by construction.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{CddsOperator, ChannelSpec};
use crate::error::{Error, Result};
use crate::fft;
use crate::lattice::{build_pilot_grid, dft_spread, qam_demap, qam_map, superimpose, Domain, FrameParams, Grid, PilotConfig, QamAlphabet};
use crate::modem::{self, Layout, TimeSignal};
use crate::sensing::{golden_2d, tpe_estimate, to_range_velocity, EstimationResult, SearchRegion, TargetEstimate, TpeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum WaveformKind {
    Ofdm,
    DftSOfdm,
    Otfs,
    DftSOtfs,
}

impl WaveformKind {
    pub const ALL: [WaveformKind; 4] = [
        WaveformKind::Ofdm,
        WaveformKind::DftSOfdm,
        WaveformKind::Otfs,
        WaveformKind::DftSOtfs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WaveformKind::Ofdm => "ofdm",
            WaveformKind::DftSOfdm => "dft-s-ofdm",
            WaveformKind::Otfs => "otfs",
            WaveformKind::DftSOtfs => "dft-s-otfs",
        }
    }

    pub fn is_otfs_family(self) -> bool {
        matches!(self, WaveformKind::Otfs | WaveformKind::DftSOtfs)
    }
}

impl fmt::Display for WaveformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WaveformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WaveformKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown waveform '{s}'")))
    }
}

/// A modulated frame and everything a receiver with full knowledge needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Modulated {
    pub kind: WaveformKind,
    pub params: FrameParams,
    /// QAM symbols before any precoding.
    pub data: Grid,
    /// Data power scale applied by the mapper.
    pub sigma_d2: f64,
    /// Delay-Doppler pilot vector (all zeros without a pilot).
    pub pilot_dd: Vec<Complex64>,
    /// Transmitted DD vector for the OTFS family.
    pub x_dd: Option<Vec<Complex64>>,
    /// Time-frequency grid for every kind.
    pub x_tf: Grid,
    /// Critically sampled frame without any prefix.
    pub samples: TimeSignal,
}

/// Maps bits onto a frame of the given waveform.
///
/// Pilots are only defined for the OTFS family; the data power is
/// `1 - sigma_p2` there and 1 otherwise.
pub fn modulate(
    kind: WaveformKind,
    params: &FrameParams,
    bits: &[u8],
    alphabet: &QamAlphabet,
    pilot: Option<&PilotConfig>,
) -> Result<Modulated> {
    let sigma_p2 = pilot.map(|p| p.sigma_p2).unwrap_or(0.0);
    if !kind.is_otfs_family() && sigma_p2 > 0.0 {
        return Err(Error::Unsupported(format!("{kind} frames carry no delay-Doppler pilot")));
    }
    let sigma_d2 = 1.0 - sigma_p2;
    let data = qam_map(params, bits, alphabet, sigma_d2)?;
    let (m, n) = (params.m, params.n);
    let pilot_grid = match pilot {
        Some(p) => build_pilot_grid(params, p)?,
        None => Grid::zeros(m, n, Domain::DelayDoppler),
    };
    match kind {
        WaveformKind::Otfs | WaveformKind::DftSOtfs => {
            let spread = if kind == WaveformKind::DftSOtfs {
                dft_spread(&data)?
            } else {
                Grid::from_vec(m, n, Domain::DelayDoppler, data.as_slice().to_vec())?
            };
            let x = superimpose(&spread, &pilot_grid)?;
            let x_tf = modem::isfft(&x)?;
            let samples = modem::heisenberg(&x_tf)?;
            Ok(Modulated {
                kind,
                params: *params,
                data,
                sigma_d2,
                pilot_dd: pilot_grid.into_vec(),
                x_dd: Some(x.into_vec()),
                x_tf,
                samples,
            })
        }
        WaveformKind::Ofdm | WaveformKind::DftSOfdm => {
            let mut tf = data.as_slice().to_vec();
            if kind == WaveformKind::DftSOfdm {
                fft::dft_columns(&mut tf, m, false);
            }
            let x_tf = Grid::from_vec(m, n, Domain::TimeFrequency, tf)?;
            let samples = modem::heisenberg(&x_tf)?;
            Ok(Modulated {
                kind,
                params: *params,
                data,
                sigma_d2,
                pilot_dd: pilot_grid.into_vec(),
                x_dd: None,
                x_tf,
                samples,
            })
        }
    }
}

impl Modulated {
    /// Frame as transmitted: one CP per frame (OTFS family) or per symbol.
    pub fn with_cp(&self) -> Result<TimeSignal> {
        let cp = self.params.cp_len;
        if self.kind.is_otfs_family() {
            modem::add_cp(&self.samples, cp)
        } else {
            let (m, n) = (self.params.m, self.params.n);
            let s = self.samples.samples();
            let mut out = Vec::with_capacity((m + cp) * n);
            for col in s.chunks(m) {
                out.extend_from_slice(&col[m - cp..]);
                out.extend_from_slice(col);
            }
            TimeSignal::new(&self.params, Layout::SymbolCp(cp), out)
        }
    }

    /// Per-symbol subcarrier sums at `l` points per sample, without prefixes.
    pub fn oversampled(&self, l: usize) -> Result<TimeSignal> {
        modem::oversample(&self.samples, l)
    }

    /// Continuous-time frame at `l` points per sample, prefixes included.
    pub fn oversampled_with_cp(&self, l: usize) -> Result<Vec<Complex64>> {
        let over = self.oversampled(l)?;
        let s = over.samples();
        let cp = self.params.cp_len * l;
        if self.kind.is_otfs_family() {
            let mut out = Vec::with_capacity(s.len() + cp);
            out.extend_from_slice(&s[s.len() - cp..]);
            out.extend_from_slice(s);
            Ok(out)
        } else {
            let sym = self.params.m * l;
            let mut out = Vec::with_capacity(s.len() + cp * self.params.n);
            for col in s.chunks(sym) {
                out.extend_from_slice(&col[sym - cp..]);
                out.extend_from_slice(col);
            }
            Ok(out)
        }
    }
}

/// Noiseless received samples after prefix removal.
///
/// The OTFS family uses the frame-level operator directly. OFDM symbols
/// each see the delay circularly (the prefix covers it) and the Doppler
/// phase at the true sample instants, including the prefix durations.
pub fn propagate(modulated: &Modulated, spec: &ChannelSpec) -> Result<Vec<Complex64>> {
    let params = &modulated.params;
    if modulated.kind.is_otfs_family() {
        let op = CddsOperator::new(params, spec)?;
        return op.apply(modulated.samples.samples());
    }
    let (m, n, cp) = (params.m, params.n, params.cp_len);
    let ts = params.symbol_duration() / m as f64;
    let mut out = vec![Complex64::new(0.0, 0.0); m * n];
    for path in &spec.paths {
        path.validate(params)?;
        if path.tau > cp as f64 * ts + 1e-15 {
            return Err(Error::InvalidParams(format!(
                "path delay {} exceeds the symbol prefix {}",
                path.tau,
                cp as f64 * ts
            )));
        }
        let mut tf = modulated.samples.samples().to_vec();
        fft::dft_columns(&mut tf, m, false);
        for col in tf.chunks_mut(m) {
            for (mm, v) in col.iter_mut().enumerate() {
                *v *= Complex64::cis(-2.0 * PI * mm as f64 * path.tau * params.delta_f);
            }
        }
        fft::dft_columns(&mut tf, m, true);
        for k in 0..n {
            for l in 0..m {
                let t = (k * (m + cp) + l) as f64 * ts;
                out[l + m * k] += path.alpha * Complex64::cis(2.0 * PI * path.nu * t) * tf[l + m * k];
            }
        }
    }
    Ok(out)
}

/// Inverts the transmit chain (no equalization) and slices to bits.
pub fn demodulate(
    kind: WaveformKind,
    params: &FrameParams,
    rx: &TimeSignal,
    alphabet: &QamAlphabet,
    sigma_d2: f64,
    pilot_dd: &[Complex64],
) -> Result<Vec<u8>> {
    let (m, n) = (params.m, params.n);
    let r = match rx.layout() {
        Layout::Critical => rx.samples().to_vec(),
        Layout::FrameCp(_) => modem::remove_cp(rx)?.into_samples(),
        Layout::SymbolCp(cp) => rx.samples().chunks(m + cp).flat_map(|c| c[cp..].to_vec()).collect(),
        Layout::Oversampled(_) => {
            return Err(Error::Unsupported("cannot demodulate an oversampled frame".into()));
        }
    };
    if r.len() != m * n {
        return Err(Error::LengthMismatch {
            expected: m * n,
            actual: r.len(),
        });
    }
    let mut v = r;
    match kind {
        WaveformKind::Otfs | WaveformKind::DftSOtfs => {
            fft::dft_rows(&mut v, m, n, false);
            for (a, b) in v.iter_mut().zip(pilot_dd) {
                *a -= b;
            }
            if kind == WaveformKind::DftSOtfs {
                fft::dft_rows(&mut v, m, n, true);
            }
        }
        WaveformKind::Ofdm => {
            fft::dft_columns(&mut v, m, false);
        }
        WaveformKind::DftSOfdm => {}
    }
    let grid = Grid::from_vec(m, n, Domain::Data, v)?;
    Ok(qam_demap(&grid, alphabet, sigma_d2))
}

/// Settings for the OFDM periodogram estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodogramConfig {
    /// Added to `|X|^2` in the TF quotient.
    pub regularizer: f64,
    pub iterations: usize,
}

/// Senses `p` targets from prefix-free received samples `r`.
pub fn sense_with(
    modulated: &Modulated,
    r: &[Complex64],
    p: usize,
    cfg: &TpeConfig,
    regularizer: f64,
) -> Result<EstimationResult> {
    let params = &modulated.params;
    if r.len() != params.len() {
        return Err(Error::LengthMismatch {
            expected: params.len(),
            actual: r.len(),
        });
    }
    if modulated.kind.is_otfs_family() {
        let mut y = r.to_vec();
        fft::dft_rows(&mut y, params.m, params.n, false);
        let x = modulated.x_dd.as_ref().expect("OTFS family always carries x_dd");
        return tpe_estimate(params, &y, x, p, cfg);
    }
    periodogram_estimate(
        modulated,
        r,
        p,
        cfg,
        &PeriodogramConfig {
            regularizer,
            iterations: cfg.golden_iterations(),
        },
    )
}

/// 2D-FFT periodogram with golden-section refinement and cancellation.
pub fn periodogram_estimate(
    modulated: &Modulated,
    r: &[Complex64],
    p: usize,
    cfg: &TpeConfig,
    pcfg: &PeriodogramConfig,
) -> Result<EstimationResult> {
    let params = &modulated.params;
    let (m, n) = (params.m, params.n);
    let mut y_tf = r.to_vec();
    fft::dft_columns(&mut y_tf, m, false);
    let mut h: Vec<Complex64> = y_tf
        .iter()
        .zip(modulated.x_tf.as_slice())
        .map(|(y, x)| {
            let d = x.norm_sqr() + pcfg.regularizer;
            if d == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                y * x.conj() / d
            }
        })
        .collect();
    let t_sym = params.symbol_duration() * (m + params.cp_len) as f64 / m as f64;
    let dt = params.delay_resolution();
    let dn = 1.0 / (n as f64 * t_sym);
    let mut targets = Vec::with_capacity(p);
    for _ in 0..p {
        // delay: inverse DFT over subcarriers, Doppler: forward DFT over symbols
        let mut prof = h.clone();
        fft::dft_columns(&mut prof, m, true);
        fft::dft_rows(&mut prof, m, n, false);
        let half = (n / 2) as i64;
        let mut best = (0usize, -half, f64::NEG_INFINITY);
        let mut total = 0.0;
        for l in 0..m {
            for k in -half..(n as i64 - half) {
                let v = prof[l + m * k.rem_euclid(n as i64) as usize].norm_sqr();
                total += v;
                if v > best.2 {
                    best = (l, k, v);
                }
            }
        }
        let mean = total / (m * n) as f64;
        let peak_ratio = if mean > 0.0 { best.2 / mean } else { 1.0 };
        let region = SearchRegion {
            tau_lo: (best.0 as f64 - 1.0) * dt,
            tau_hi: (best.0 as f64 + 1.0) * dt,
            nu_lo: (best.1 as f64 - 1.0) * dn,
            nu_hi: (best.1 as f64 + 1.0) * dn,
        };
        let hh = &h;
        let last = golden_2d(region, pcfg.iterations, |tau, nu| {
            steering_inner(hh, m, n, params.delta_f, t_sym, tau, nu).norm_sqr()
        });
        let (tau, nu) = last.midpoint();
        let tau = tau.clamp(0.0, params.symbol_duration() * (1.0 - f64::EPSILON));
        let nu = nu.clamp(-params.delta_f / 2.0, params.delta_f / 2.0 * (1.0 - f64::EPSILON));
        let alpha = steering_inner(&h, m, n, params.delta_f, t_sym, tau, nu) / (m * n) as f64;
        for nn in 0..n {
            let dop = Complex64::cis(2.0 * PI * nu * nn as f64 * t_sym);
            for mm in 0..m {
                let del = Complex64::cis(-2.0 * PI * mm as f64 * params.delta_f * tau);
                h[mm + m * nn] -= alpha * del * dop;
            }
        }
        let (range, velocity) = to_range_velocity(tau, nu, params.f_c, cfg.mode);
        targets.push(TargetEstimate {
            alpha,
            tau,
            nu,
            range,
            velocity,
            peak_ratio,
        });
    }
    Ok(EstimationResult {
        targets,
        mode: cfg.mode,
    })
}

/// `sum_{m,n} H[m,n] exp(j2pi m df tau) exp(-j2pi nu n T_sym)`.
fn steering_inner(h: &[Complex64], m: usize, n: usize, delta_f: f64, t_sym: f64, tau: f64, nu: f64) -> Complex64 {
    let step_m = Complex64::cis(2.0 * PI * delta_f * tau);
    let step_n = Complex64::cis(-2.0 * PI * nu * t_sym);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut wn = Complex64::new(1.0, 0.0);
    for col in h.chunks(m).take(n) {
        let mut inner = Complex64::new(0.0, 0.0);
        let mut wm = Complex64::new(1.0, 0.0);
        for v in col {
            inner += v * wm;
            wm *= step_m;
        }
        acc += inner * wn;
        wn *= step_n;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::papr;
    use crate::channel::{PathParams, SensingMode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bits(rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
        (0..len).map(|_| rng.random_range(0..2u8)).collect()
    }

    #[test]
    fn loopback_for_every_kind() {
        let p = FrameParams::new(16, 8, 1.0e5).unwrap().with_cp_len(3).unwrap();
        let a = QamAlphabet::new(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in WaveformKind::ALL {
            let b = bits(&mut rng, p.len() * 4);
            let pilot = kind.is_otfs_family().then(|| PilotConfig::centered(&p, 0.05));
            let tx = modulate(kind, &p, &b, &a, pilot.as_ref()).unwrap();
            assert!((tx.samples.mean_power() - 1.0).abs() < 0.3);
            let rx = tx.with_cp().unwrap();
            let back = demodulate(kind, &p, &rx, &a, tx.sigma_d2, &tx.pilot_dd).unwrap();
            assert_eq!(back, b, "{kind}");
        }
    }

    #[test]
    fn otfs_plus_spreading_is_dft_s_otfs() {
        let p = FrameParams::new(8, 4, 1.0).unwrap();
        let a = QamAlphabet::new(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = bits(&mut rng, 64);
        let d = modulate(WaveformKind::DftSOtfs, &p, &b, &a, None).unwrap();
        let data = qam_map(&p, &b, &a, 1.0).unwrap();
        let x = dft_spread(&data).unwrap();
        let s = modem::heisenberg(&modem::isfft(&x).unwrap()).unwrap();
        assert_eq!(d.samples, s);
        assert!(modulate(WaveformKind::Ofdm, &p, &b, &a, Some(&PilotConfig::centered(&p, 0.1))).is_err());
    }

    #[test]
    fn dft_s_ofdm_samples_are_the_symbols() {
        let p = FrameParams::new(8, 4, 1.0).unwrap();
        let a = QamAlphabet::new(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = bits(&mut rng, 128);
        let tx = modulate(WaveformKind::DftSOfdm, &p, &b, &a, None).unwrap();
        for (s, d) in tx.samples.samples().iter().zip(tx.data.as_slice()) {
            assert!((s - d).norm() < 1e-12);
        }
        let single = modulate(WaveformKind::Ofdm, &p, &[0; 128], &a, None).unwrap();
        assert!(papr(single.samples.samples()).unwrap() > 1.0);
    }

    #[test]
    fn static_target_within_one_bin_for_every_kind() {
        let p = FrameParams::new(64, 16, 1.92e6).unwrap().with_cp_len(8).unwrap();
        let a = QamAlphabet::new(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let tau = 3.3 * p.delay_resolution();
        let spec = ChannelSpec::new(&p, vec![PathParams::new(Complex64::new(1.0, 0.0), tau, 0.0)], 1.0, SensingMode::Active).unwrap();
        for kind in WaveformKind::ALL {
            let tx = modulate(kind, &p, &bits(&mut rng, p.len() * 2), &a, None).unwrap();
            let r = propagate(&tx, &spec).unwrap();
            let est = sense_with(&tx, &r, 1, &TpeConfig::default(), 1e-3).unwrap();
            assert!((est.targets[0].tau - tau).abs() < p.delay_resolution(), "{kind}");
        }
    }

    #[test]
    fn with_cp_lengths() {
        let p = FrameParams::new(8, 4, 1.0).unwrap().with_cp_len(2).unwrap();
        let a = QamAlphabet::new(4).unwrap();
        let tx = modulate(WaveformKind::Ofdm, &p, &[1; 64], &a, None).unwrap();
        assert_eq!(tx.with_cp().unwrap().len(), 40);
        assert_eq!(tx.oversampled_with_cp(4).unwrap().len(), 160);
        let tx = modulate(WaveformKind::Otfs, &p, &[1; 64], &a, None).unwrap();
        assert_eq!(tx.with_cp().unwrap().len(), 34);
        assert_eq!(tx.oversampled_with_cp(4).unwrap().len(), 136);
    }
}
