//! Analytic SINR and pilot-power allocation, plus the measured metrics:
//! PAPR, amplifier efficiency, spectra, BER and RMSE.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{CddsOperator, ChannelSpec};
use crate::error::{Error, Result};
use crate::fft;
use crate::lattice::FrameParams;
use crate::sensing::GOLDEN;

/// Inputs of the closed-form SINR after data-aided channel estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinrModel {
    pub sigma_h2: f64,
    pub sigma_w2: f64,
    pub sigma_d2: f64,
    pub sigma_p2: f64,
    pub paths: usize,
    pub m: usize,
    pub n: usize,
}

/// Intermediate terms of the closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrTerms {
    /// MSE of the pilot-only channel estimate.
    pub sigma_0_2: f64,
    /// Error power of the equalized data.
    pub sigma_xe2: f64,
    /// MSE of the data-aided channel estimate.
    pub sigma_e2: f64,
    pub sinr: f64,
}

impl SinrModel {
    /// Splits unit transmit power into `sigma_p2` pilot and `1 - sigma_p2` data.
    pub fn new(sigma_h2: f64, sigma_w2: f64, sigma_p2: f64, paths: usize, m: usize, n: usize) -> Result<Self> {
        let model = Self {
            sigma_h2,
            sigma_w2,
            sigma_d2: 1.0 - sigma_p2,
            sigma_p2,
            paths,
            m,
            n,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let powers = [self.sigma_h2, self.sigma_w2, self.sigma_d2, self.sigma_p2];
        if powers.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParams(format!("powers must be finite and non-negative: {powers:?}")));
        }
        if ((self.sigma_p2 + self.sigma_d2) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams("pilot and data powers must sum to 1".into()));
        }
        if self.paths == 0 || self.m == 0 || self.n == 0 {
            return Err(Error::InvalidParams("P, M and N must be positive".into()));
        }
        Ok(())
    }
}

/// SINR for a given data-aided channel MSE `sigma_e2`.
pub fn sinr_given_error(model: &SinrModel, sigma_e2: f64) -> f64 {
    let m = model;
    m.sigma_d2 * (m.sigma_h2 - sigma_e2) / ((m.sigma_d2 + m.sigma_p2) * sigma_e2 + m.sigma_w2)
}

/// Evaluates `sigma_0^2 -> sigma_xe^2 -> sigma_e^2 -> SINR` in order.
pub fn sinr_terms(model: &SinrModel) -> Result<SinrTerms> {
    model.validate()?;
    let m = model;
    if m.sigma_p2 == 0.0 {
        return Err(Error::NoPilot);
    }
    let p = m.paths as f64;
    let mn = (m.m * m.n) as f64;
    let total = m.sigma_d2 + m.sigma_p2;
    let sigma_0_2 = p * (m.sigma_h2 * m.sigma_d2 + m.sigma_w2) / (mn * m.sigma_p2);
    let inner = (m.sigma_h2 - sigma_0_2) / (sigma_0_2 * total + m.sigma_w2);
    let sigma_xe2 = p / (1.0 / m.sigma_d2 + inner);
    if !(sigma_xe2 >= 0.0) || !sigma_xe2.is_finite() {
        return Err(Error::ModelBreakdown(format!("equalized-data error power {sigma_xe2} is not positive")));
    }
    if total <= sigma_xe2 {
        return Err(Error::ModelBreakdown(format!(
            "equalized-data error power {sigma_xe2} exceeds the transmit power {total}"
        )));
    }
    let sigma_e2 = p * (m.sigma_h2 * sigma_xe2 + m.sigma_w2) / (mn * (total - sigma_xe2));
    if !(sigma_e2 >= 0.0) {
        return Err(Error::ModelBreakdown(format!("channel MSE {sigma_e2} is negative")));
    }
    Ok(SinrTerms {
        sigma_0_2,
        sigma_xe2,
        sigma_e2,
        sinr: sinr_given_error(model, sigma_e2),
    })
}

/// Closed-form SINR (linear).
pub fn sinr_closed_form(model: &SinrModel) -> Result<f64> {
    sinr_terms(model).map(|t| t.sinr)
}

/// SINR as a function of the pilot share, `-inf` where the model breaks down.
pub fn sinr_objective(sigma_h2: f64, sigma_w2: f64, paths: usize, m: usize, n: usize, sigma_p2: f64) -> f64 {
    SinrModel::new(sigma_h2, sigma_w2, sigma_p2, paths, m, n)
        .and_then(|model| sinr_closed_form(&model))
        .unwrap_or(f64::NEG_INFINITY)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerAllocation {
    pub sigma_p2: f64,
    pub sinr: f64,
    /// The objective was flat over the scan; `sigma_p2` is the midpoint.
    pub flat: bool,
}

/// Pilot share in `(0, 1)` maximising the closed-form SINR.
///
/// A uniform scan brackets the best feasible point, then golden-section
/// search refines it inside the bracket.
pub fn optimize_pilot_power(sigma_h2: f64, sigma_w2: f64, paths: usize, m: usize, n: usize) -> Result<PowerAllocation> {
    if !(sigma_h2 > 0.0 && sigma_w2 > 0.0) {
        return Err(Error::InvalidParams("sigma_h2 and sigma_w2 must be positive".into()));
    }
    let f = |p: f64| sinr_objective(sigma_h2, sigma_w2, paths, m, n, p);
    const SCAN: usize = 4096;
    let step = 1.0 / SCAN as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    let mut lo_val = f64::INFINITY;
    for i in 1..SCAN {
        let v = f(i as f64 * step);
        if v > best.1 {
            best = (i, v);
        }
        if v.is_finite() {
            lo_val = lo_val.min(v);
        }
    }
    if !best.1.is_finite() {
        return Err(Error::ModelBreakdown(
            "no pilot share gives a valid SINR at this operating point".into(),
        ));
    }
    if best.1 == lo_val {
        return Ok(PowerAllocation {
            sigma_p2: 0.5,
            sinr: f(0.5),
            flat: true,
        });
    }
    let mut a = (best.0 as f64 - 1.0) * step;
    let mut b = (best.0 as f64 + 1.0) * step;
    a = a.max(f64::EPSILON);
    b = b.min(1.0 - f64::EPSILON);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-9 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    let x = (a + b) / 2.0;
    let fx = f(x);
    let (sigma_p2, sinr) = if fx >= best.1 { (x, fx) } else { (best.0 as f64 * step, best.1) };
    Ok(PowerAllocation {
        sigma_p2,
        sinr,
        flat: false,
    })
}

/// `max |s|^2 / mean |s|^2`.
pub fn papr(samples: &[Complex64]) -> Result<f64> {
    let mut peak = 0.0f64;
    let mut sum = 0.0;
    for v in samples {
        let p = v.norm_sqr();
        peak = peak.max(p);
        sum += p;
    }
    if sum == 0.0 || samples.is_empty() {
        return Err(Error::ZeroSignal);
    }
    Ok(peak / (sum / samples.len() as f64))
}

pub fn papr_db(samples: &[Complex64]) -> Result<f64> {
    papr(samples).map(|v| 10.0 * v.log10())
}

/// `P(PAPR > gamma)` for each threshold, from per-frame PAPR values in dB.
pub fn papr_ccdf(papr_db: &[f64], thresholds_db: &[f64]) -> Vec<f64> {
    let n = papr_db.len().max(1) as f64;
    thresholds_db
        .iter()
        .map(|g| papr_db.iter().filter(|v| **v > *g).count() as f64 / n)
        .collect()
}

/// Smallest PAPR `gamma` with `P(PAPR > gamma) <= prob`.
pub fn ccdf_quantile(papr_db: &[f64], prob: f64) -> f64 {
    let mut v = papr_db.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let exceed = (prob * v.len() as f64).floor() as usize;
    let idx = v.len().saturating_sub(exceed + 1);
    v[idx]
}

/// Ideal amplifier efficiency law `eta = G exp(-g gamma_dB)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaModel {
    /// Efficiency at 0 dB PAPR, in percent.
    pub peak: f64,
    /// Decay per dB of PAPR.
    pub decay: f64,
}

impl PaModel {
    pub fn new(peak: f64, decay: f64) -> Result<Self> {
        let model = Self { peak, decay };
        model.validate()?;
        Ok(model)
    }

    /// Ideal class A: 50 % efficiency falling as `1/PAPR`.
    pub fn class_a() -> Self {
        Self {
            peak: 50.0,
            decay: std::f64::consts::LN_10 / 10.0,
        }
    }

    /// Ideal class B: `pi/4` efficiency falling as `1/sqrt(PAPR)`.
    pub fn class_b() -> Self {
        Self {
            peak: 25.0 * std::f64::consts::PI,
            decay: std::f64::consts::LN_10 / 20.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.peak > 0.0 && self.peak <= 100.0 && self.decay > 0.0) {
            return Err(Error::InvalidParams(format!(
                "PA model needs G in (0, 100] and g > 0, got G={} g={}",
                self.peak, self.decay
            )));
        }
        Ok(())
    }
}

/// Efficiency in percent at the given PAPR.
pub fn pa_efficiency(papr_db: f64, model: &PaModel) -> f64 {
    model.peak * (-model.decay * papr_db).exp()
}

/// Welch settings for [`oobe_psd`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WelchConfig {
    pub nfft: usize,
    /// Segment overlap as a fraction of `nfft`.
    pub overlap: f64,
}

impl Default for WelchConfig {
    fn default() -> Self {
        Self {
            nfft: 1024,
            overlap: 0.5,
        }
    }
}

/// Hann-windowed averaged periodogram of a sample stream.
///
/// Bin `i` sits at `i / nfft` cycles per sample (FFT order). The result is
/// linear power normalized so its peak is 1.
pub fn welch_psd(stream: &[Complex64], cfg: &WelchConfig) -> Result<Vec<f64>> {
    let nfft = cfg.nfft;
    if nfft < 2 || stream.len() < nfft {
        return Err(Error::InvalidParams(format!(
            "Welch needs nfft >= 2 and at least nfft samples (nfft={nfft}, len={})",
            stream.len()
        )));
    }
    if !(0.0..1.0).contains(&cfg.overlap) {
        return Err(Error::InvalidParams("overlap must lie in [0, 1)".into()));
    }
    let hop = ((nfft as f64) * (1.0 - cfg.overlap)).round().max(1.0) as usize;
    let window: Vec<f64> = (0..nfft)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / nfft as f64).cos())
        .collect();
    let plan = fft::plan(nfft, rustfft::FftDirection::Forward);
    let mut acc = vec![0.0; nfft];
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    let mut start = 0;
    let mut segments = 0;
    while start + nfft <= stream.len() {
        for i in 0..nfft {
            buf[i] = stream[start + i] * window[i];
        }
        plan.process(&mut buf);
        for (a, v) in acc.iter_mut().zip(&buf) {
            *a += v.norm_sqr();
        }
        segments += 1;
        start += hop;
    }
    let peak = acc.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 || segments == 0 {
        return Err(Error::ZeroSignal);
    }
    Ok(acc.into_iter().map(|v| v / peak).collect())
}

/// Welch PSD of an ensemble of frames played back to back, in dB.
pub fn oobe_psd(frames: &[Vec<Complex64>], cfg: &WelchConfig) -> Result<Vec<f64>> {
    let stream: Vec<Complex64> = frames.iter().flatten().copied().collect();
    Ok(welch_psd(&stream, cfg)?.into_iter().map(|v| 10.0 * v.max(1e-300).log10()).collect())
}

/// Mean PSD level (dB) just outside an occupied band.
///
/// The band covers subcarriers `0..m` on a stream oversampled by `l`, i.e.
/// normalized frequencies `[-0.5, m - 0.5] / (l m)`. The shoulder averages the
/// linear PSD from `lo` to `hi` subcarrier spacings beyond either edge.
pub fn band_edge_level(psd_db: &[f64], m: usize, l: usize, lo: f64, hi: f64) -> f64 {
    let nfft = psd_db.len();
    let sub = 1.0 / (l * m) as f64;
    let upper = (m as f64 - 0.5) * sub;
    let lower = -0.5 * sub;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, v) in psd_db.iter().enumerate() {
        let mut f = i as f64 / nfft as f64;
        if f >= 0.5 {
            f -= 1.0;
        }
        let above = (f - upper) / sub;
        let below = (lower - f) / sub;
        let wrap_above = (f + 1.0 - upper) / sub;
        if (above >= lo && above <= hi) || (below >= lo && below <= hi) || (wrap_above >= lo && wrap_above <= hi) {
            sum += 10f64.powf(v / 10.0);
            count += 1;
        }
    }
    if count == 0 {
        return f64::NAN;
    }
    10.0 * (sum / count as f64).log10()
}

/// Greedy nearest-value assignment: `out[i]` is the estimate paired with
/// `truth[i]`.
pub fn assign_nearest(truth: &[f64], est: &[f64]) -> Result<Vec<usize>> {
    if truth.len() != est.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: est.len(),
        });
    }
    let n = truth.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (i, t) in truth.iter().enumerate() {
        for (j, e) in est.iter().enumerate() {
            pairs.push(((t - e).abs(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for (_, i, j) in pairs {
        if out[i] == usize::MAX && !used[j] {
            out[i] = j;
            used[j] = true;
        }
    }
    Ok(out)
}

/// RMSE over trials, pairing targets to estimates by nearest value.
pub fn rmse(truth: &[Vec<f64>], est: &[Vec<f64>]) -> Result<f64> {
    if truth.len() != est.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: est.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::InvalidParams("rmse needs at least one trial".into()));
    }
    let mut acc = 0.0;
    for (t, e) in truth.iter().zip(est) {
        let pairing = assign_nearest(t, e)?;
        let per: f64 = t.iter().enumerate().map(|(i, v)| (v - e[pairing[i]]).powi(2)).sum();
        acc += per / t.len().max(1) as f64;
    }
    Ok((acc / truth.len() as f64).sqrt())
}

/// Per-trial mean squared range and velocity errors with range-based pairing.
pub fn paired_squared_errors(
    truth_range: &[f64],
    est_range: &[f64],
    truth_velocity: &[f64],
    est_velocity: &[f64],
) -> Result<(f64, f64)> {
    if truth_velocity.len() != truth_range.len() || est_velocity.len() != est_range.len() {
        return Err(Error::LengthMismatch {
            expected: truth_range.len(),
            actual: truth_velocity.len(),
        });
    }
    let pairing = assign_nearest(truth_range, est_range)?;
    let p = truth_range.len().max(1) as f64;
    let mut r = 0.0;
    let mut v = 0.0;
    for (i, &j) in pairing.iter().enumerate() {
        r += (truth_range[i] - est_range[j]).powi(2);
        v += (truth_velocity[i] - est_velocity[j]).powi(2);
    }
    Ok((r / p, v / p))
}

/// Bistatic reflection-point distance from the receiver.
///
/// `r_l` is the direct-path length, `r_n` the reflected-path length and
/// `theta` the angle at the receiver between the two arrivals.
pub fn passive_target_range(r_l: f64, r_n: f64, theta: f64) -> Result<f64> {
    let denom = 2.0 * r_n - 2.0 * r_l * theta.cos();
    if denom.abs() < 1e-12 * (r_n.abs() + r_l.abs()).max(1e-300) {
        return Err(Error::DegenerateGeometry(format!(
            "2 r_N = 2 r_L cos(theta) (r_L={r_l}, r_N={r_n}, theta={theta})"
        )));
    }
    Ok((r_n * r_n - r_l * r_l) / denom)
}

/// Fraction of differing bits.
pub fn ber(tx: &[u8], rx: &[u8]) -> Result<f64> {
    if tx.len() != rx.len() {
        return Err(Error::LengthMismatch {
            expected: tx.len(),
            actual: rx.len(),
        });
    }
    if tx.is_empty() {
        return Ok(0.0);
    }
    Ok(bit_errors(tx, rx) as f64 / tx.len() as f64)
}

pub fn bit_errors(tx: &[u8], rx: &[u8]) -> usize {
    tx.iter().zip(rx).filter(|(a, b)| (*a & 1) != (*b & 1)).count()
}

/// Received-sample SINR after removing the pilot with an estimated channel.
///
/// Signal is `H_hat s_d`; impairment is `(H - H_hat)(s_d + s_p) + w`.
pub fn measured_sinr(
    params: &FrameParams,
    truth: &ChannelSpec,
    estimate: &ChannelSpec,
    s_data: &[Complex64],
    s_pilot: &[Complex64],
    noise: &[Complex64],
) -> Result<(f64, f64)> {
    let h = CddsOperator::new_unchecked(params, truth);
    let h_hat = CddsOperator::new_unchecked(params, estimate);
    let s: Vec<Complex64> = s_data.iter().zip(s_pilot).map(|(a, b)| a + b).collect();
    let signal = h_hat.apply(s_data)?;
    let true_out = h.apply(&s)?;
    let est_out = h_hat.apply(&s)?;
    let mut sig = 0.0;
    let mut imp = 0.0;
    for i in 0..s.len() {
        sig += signal[i].norm_sqr();
        imp += (true_out[i] - est_out[i] + noise[i]).norm_sqr();
    }
    Ok((sig, imp))
}

/// Mergeable mean/variance accumulator (Welford / Chan).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Accumulator {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n;
        self.m2 += other.m2 + d * d * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        self.m2 / (self.count - 1) as f64
    }

    /// Half-width of the normal-approximation 95 % interval of the mean.
    pub fn ci95(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        1.96 * (self.variance() / self.count as f64).sqrt()
    }
}

impl FromIterator<f64> for Accumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::new();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

/// Mergeable bit-error counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ErrorCounter {
    pub errors: u64,
    pub total: u64,
}

impl ErrorCounter {
    pub fn add(&mut self, errors: usize, total: usize) {
        self.errors += errors as u64;
        self.total += total as u64;
    }

    pub fn merge(&mut self, other: &ErrorCounter) {
        self.errors += other.errors;
        self.total += other.total;
    }

    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.errors as f64 / self.total as f64
    }

    pub fn ci95(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let p = self.rate();
        1.96 * (p * (1.0 - p) / self.total as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_estimate_limit_and_noise_limit() {
        let model = SinrModel::new(1.0, 0.1, 0.05, 3, 64, 16).unwrap();
        assert!((sinr_given_error(&model, 0.0) - 0.95 / 0.1).abs() < 1e-12);
        let loud = SinrModel::new(1.0, 1e12, 0.05, 3, 64, 16).unwrap();
        assert!(sinr_closed_form(&loud).map(|v| v < 1e-9).unwrap_or(true));
        let none = SinrModel::new(1.0, 0.1, 0.0, 3, 64, 16).unwrap();
        assert_eq!(sinr_closed_form(&none), Err(Error::NoPilot));
        assert!(SinrModel {
            sigma_d2: 0.5,
            ..model
        }
        .validate()
        .is_err());
    }

    #[test]
    fn reference_allocations() {
        let at = |snr_db: f64| {
            optimize_pilot_power(1.0, 10f64.powf(-snr_db / 10.0), 3, 64, 16)
                .unwrap()
                .sigma_p2
        };
        assert!((at(15.0) - 0.0403).abs() < 5e-4, "{}", at(15.0));
        assert!((at(21.0) - 0.0633).abs() < 5e-4, "{}", at(21.0));
    }

    #[test]
    fn optimizer_matches_grid_scan() {
        let sw = 10f64.powf(-1.2);
        let got = optimize_pilot_power(1.0, sw, 2, 32, 8).unwrap();
        let mut best = (0.0, f64::NEG_INFINITY);
        for i in 1..100_000 {
            let p = i as f64 / 100_000.0;
            let v = sinr_objective(1.0, sw, 2, 32, 8, p);
            if v > best.1 {
                best = (p, v);
            }
        }
        assert!((got.sigma_p2 - best.0).abs() < 2e-5);
        for d in [-1e-3, 1e-3] {
            assert!(sinr_objective(1.0, sw, 2, 32, 8, got.sigma_p2 + d) <= got.sinr);
        }
    }

    #[test]
    fn papr_basics() {
        let flat: Vec<Complex64> = (0..64).map(|i| Complex64::cis(i as f64)).collect();
        assert!((papr(&flat).unwrap() - 1.0).abs() < 1e-12);
        let mut imp = vec![Complex64::new(0.0, 0.0); 64];
        imp[5] = Complex64::new(2.0, 0.0);
        assert!((papr(&imp).unwrap() - 64.0).abs() < 1e-12);
        assert_eq!(papr(&[Complex64::new(0.0, 0.0); 4]), Err(Error::ZeroSignal));
        let ccdf = papr_ccdf(&[0.0; 10], &[-1.0, 0.0, 1.0]);
        assert_eq!(ccdf, vec![1.0, 0.0, 0.0]);
        let values: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(ccdf_quantile(&values, 1e-2), 989.0);
    }

    #[test]
    fn pa_law() {
        let a = PaModel::class_a();
        assert_eq!(pa_efficiency(0.0, &a), 50.0);
        assert!((pa_efficiency(3.0103, &a) - 25.0).abs() < 1e-3);
        assert!(pa_efficiency(5.0, &a) < pa_efficiency(4.0, &a));
        assert!(PaModel::new(0.0, 0.1).is_err());
    }

    #[test]
    fn welch_finds_a_tone() {
        let stream: Vec<Complex64> = (0..8192)
            .map(|i| Complex64::cis(2.0 * std::f64::consts::PI * 100.0 * i as f64 / 1024.0))
            .collect();
        let psd = welch_psd(&stream, &WelchConfig::default()).unwrap();
        let peak = psd.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(peak, 100);
        assert!(psd[300] < 1e-10);
    }

    #[test]
    fn rmse_and_pairing() {
        let truth = vec![vec![10.0, 30.0, 50.0]; 4];
        assert_eq!(rmse(&truth, &truth).unwrap(), 0.0);
        let shifted: Vec<Vec<f64>> = truth.iter().map(|t| t.iter().rev().map(|v| v + 0.25).collect()).collect();
        assert!((rmse(&truth, &shifted).unwrap() - 0.25).abs() < 1e-12);
        assert!(rmse(&truth, &truth[..2]).is_err());
    }

    #[test]
    fn bistatic_geometry() {
        assert!((passive_target_range(3.0, 5.0, std::f64::consts::FRAC_PI_2).unwrap() - 1.6).abs() < 1e-12);
        assert_eq!(passive_target_range(4.0, 4.0, 0.3).unwrap(), 0.0);
        assert!(matches!(passive_target_range(4.0, 4.0, 0.0), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn ber_counts() {
        assert_eq!(ber(&[0, 1, 1], &[0, 1, 1]).unwrap(), 0.0);
        assert_eq!(ber(&[0, 1, 1], &[1, 0, 0]).unwrap(), 1.0);
        assert!(ber(&[0], &[]).is_err());
    }

    #[test]
    fn accumulator_merge_matches_sequential() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.7).sin()).collect();
        let whole: Accumulator = xs.iter().copied().collect();
        let mut a: Accumulator = xs[..37].iter().copied().collect();
        let b: Accumulator = xs[37..].iter().copied().collect();
        a.merge(&b);
        assert_eq!(a.count, whole.count);
        assert!((a.mean - whole.mean).abs() < 1e-12);
        assert!((a.variance() - whole.variance()).abs() < 1e-12);
    }
}
