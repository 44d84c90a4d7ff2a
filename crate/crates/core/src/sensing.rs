//! Two-phase delay/Doppler/gain estimation with successive interference
//! cancellation.
//!
//! Phase I correlates the received delay-Doppler grid against every 2D
//! circular shift of the transmitted grid. Phase II refines the winning bin
//! with a 2D golden-section search over the exact continuous-parameter
//! operator, evaluated in the time domain.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{PathKernel, SensingMode, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::fft;
use crate::lattice::FrameParams;

/// `(sqrt(5) - 1) / 2`.
pub const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// How the path gain is recovered once `(tau, nu)` is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaRule {
    /// `(Gamma x)^H y / ||Gamma x||^2`.
    #[default]
    LeastSquares,
    /// `||Gamma x||^2 / ((Gamma x)^H y)`.
    Reciprocal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TpeConfig {
    /// Target Phase-II resolution as a fraction of one grid bin, in both axes.
    pub resolution_divisor: f64,
    /// Fixed Phase-II iteration count; derived from the resolution when unset.
    pub iterations: Option<usize>,
    pub alpha_rule: AlphaRule,
    pub mode: SensingMode,
    /// Extra cyclic passes that re-refine each target with all the others
    /// cancelled. Zero gives the plain single-pass cancellation.
    pub refine_sweeps: usize,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self {
            resolution_divisor: 200.0,
            iterations: None,
            alpha_rule: AlphaRule::LeastSquares,
            mode: SensingMode::Active,
            refine_sweeps: 0,
        }
    }
}

impl TpeConfig {
    /// `ceil(ln(resolution / width) / ln(eta))` with the initial width of two bins.
    pub fn golden_iterations(&self) -> usize {
        if let Some(k) = self.iterations {
            return k;
        }
        let ratio = 1.0 / (2.0 * self.resolution_divisor);
        (ratio.ln() / GOLDEN.ln()).ceil().max(0.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resolution_divisor.is_finite() && self.resolution_divisor > 0.5) {
            return Err(Error::Config(format!(
                "resolution_divisor must exceed 0.5, got {}",
                self.resolution_divisor
            )));
        }
        Ok(())
    }
}

/// Rectangular Phase-II search region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchRegion {
    pub tau_lo: f64,
    pub tau_hi: f64,
    pub nu_lo: f64,
    pub nu_hi: f64,
}

impl SearchRegion {
    /// One bin either side of a continuous estimate.
    pub fn around(params: &FrameParams, tau: f64, nu: f64) -> Self {
        let dt = params.delay_resolution();
        let dn = params.doppler_resolution();
        Self {
            tau_lo: tau - dt,
            tau_hi: tau + dt,
            nu_lo: nu - dn,
            nu_hi: nu + dn,
        }
    }

    /// One bin either side of the Phase-I winner, deliberately unclamped.
    pub fn around_bin(params: &FrameParams, l: usize, k: i64) -> Self {
        let dt = params.delay_resolution();
        let dn = params.doppler_resolution();
        Self {
            tau_lo: (l as f64 - 1.0) * dt,
            tau_hi: (l as f64 + 1.0) * dt,
            nu_lo: (k as f64 - 1.0) * dn,
            nu_hi: (k as f64 + 1.0) * dn,
        }
    }

    pub fn tau_width(&self) -> f64 {
        self.tau_hi - self.tau_lo
    }

    pub fn nu_width(&self) -> f64 {
        self.nu_hi - self.nu_lo
    }

    pub fn midpoint(&self) -> (f64, f64) {
        ((self.tau_lo + self.tau_hi) / 2.0, (self.nu_lo + self.nu_hi) / 2.0)
    }
}

/// One estimated target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetEstimate {
    pub alpha: Complex64,
    pub tau: f64,
    pub nu: f64,
    pub range: f64,
    pub velocity: f64,
    /// Phase-I peak power over the mean correlation power; values near 1
    /// mean there was no clear peak.
    pub peak_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub targets: Vec<TargetEstimate>,
    pub mode: SensingMode,
}

impl EstimationResult {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn taus(&self) -> Vec<f64> {
        self.targets.iter().map(|t| t.tau).collect()
    }

    pub fn nus(&self) -> Vec<f64> {
        self.targets.iter().map(|t| t.nu).collect()
    }

    pub fn alphas(&self) -> Vec<Complex64> {
        self.targets.iter().map(|t| t.alpha).collect()
    }

    pub fn ranges(&self) -> Vec<f64> {
        self.targets.iter().map(|t| t.range).collect()
    }

    pub fn velocities(&self) -> Vec<f64> {
        self.targets.iter().map(|t| t.velocity).collect()
    }
}

/// Converts `(tau, nu)` to range and radial velocity.
pub fn to_range_velocity(tau: f64, nu: f64, f_c: f64, mode: SensingMode) -> (f64, f64) {
    let f = match mode {
        SensingMode::Active => 2.0,
        SensingMode::Passive => 1.0,
    };
    (tau * SPEED_OF_LIGHT / f, nu * SPEED_OF_LIGHT / (f * f_c))
}

fn check_len(params: &FrameParams, v: &[Complex64]) -> Result<()> {
    if v.len() != params.len() {
        return Err(Error::LengthMismatch {
            expected: params.len(),
            actual: v.len(),
        });
    }
    Ok(())
}

/// Phase-I on-grid search.
///
/// Returns `(l, k, peak_ratio)` maximising `|vec(shift(X, l, k))^H y|^2`
/// with `k` the signed Doppler bin. Ties go to the smallest `l`, then the
/// smallest signed `k`.
pub fn phase1_ongrid(params: &FrameParams, x: &[Complex64], y_res: &[Complex64]) -> Result<(usize, i64, f64)> {
    check_len(params, x)?;
    check_len(params, y_res)?;
    let corr = correlation_surface(params, x, y_res);
    let (m, n) = (params.m, params.n);
    let half = (n / 2) as i64;
    let mut best = (0usize, -half, f64::NEG_INFINITY);
    let mut total = 0.0;
    for l in 0..m {
        for k in -half..(n as i64 - half) {
            let v = corr[l + m * params.doppler_column(k)];
            total += v;
            if v > best.2 {
                best = (l, k, v);
            }
        }
    }
    let mean = total / (m * n) as f64;
    let ratio = if mean > 0.0 { best.2 / mean } else { 1.0 };
    Ok((best.0, best.1, ratio))
}

/// `|c(l, k)|^2` for every 2D circular shift, via the FFT correlation theorem.
pub fn correlation_surface(params: &FrameParams, x: &[Complex64], y: &[Complex64]) -> Vec<f64> {
    let (m, n) = (params.m, params.n);
    let mut fx = x.to_vec();
    let mut fy = y.to_vec();
    fft::dft2_raw(&mut fx, m, n, false);
    fft::dft2_raw(&mut fy, m, n, false);
    for (a, b) in fy.iter_mut().zip(&fx) {
        *a *= b.conj();
    }
    fft::dft2_raw(&mut fy, m, n, true);
    let scale = 1.0 / (m * n) as f64;
    fy.iter().map(|v| (v * scale).norm_sqr()).collect()
}

/// Brute-force reference for [`correlation_surface`]: builds every shift.
pub fn correlation_brute_force(params: &FrameParams, x: &[Complex64], y: &[Complex64]) -> Vec<f64> {
    let (m, n) = (params.m, params.n);
    let mut out = vec![0.0; m * n];
    for l in 0..m {
        for k in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for b in 0..n {
                for a in 0..m {
                    let shifted = x[(a + m - l) % m + m * ((b + n - k) % n)];
                    acc += shifted.conj() * y[a + m * b];
                }
            }
            out[l + m * k] = acc.norm_sqr();
        }
    }
    out
}

/// Phase-II objective `|(Gamma(tau, nu) x)^H y|^2`, evaluated in time.
///
/// `Gamma` is unitarily similar to `Theta`, so the inner product equals
/// `(Theta s)^H r` with `s`, `r` the time-domain images of `x`, `y`.
pub struct Phase2Objective {
    params: FrameParams,
    s_tf: Vec<Complex64>,
    r: Vec<Complex64>,
    scratch_u: Vec<Complex64>,
    scratch_t: Vec<Complex64>,
}

impl Phase2Objective {
    pub fn new(params: &FrameParams, x: &[Complex64], y_res: &[Complex64]) -> Result<Self> {
        check_len(params, x)?;
        check_len(params, y_res)?;
        let (m, n) = (params.m, params.n);
        let mut s_tf = x.to_vec();
        fft::dft_rows(&mut s_tf, m, n, true);
        fft::dft_columns(&mut s_tf, m, false);
        let mut r = y_res.to_vec();
        fft::dft_rows(&mut r, m, n, true);
        Ok(Self {
            params: *params,
            s_tf,
            r,
            scratch_u: vec![Complex64::new(0.0, 0.0); m * n],
            scratch_t: vec![Complex64::new(0.0, 0.0); m * n],
        })
    }

    /// `(Gamma(tau, nu) x)^H y`.
    pub fn inner(&mut self, tau: f64, nu: f64) -> Complex64 {
        let kernel = PathKernel::new(&self.params, tau, nu);
        kernel.ramp_from_tf(&self.s_tf, &mut self.scratch_u);
        kernel.shift_doppler(&self.scratch_u, &mut self.scratch_t);
        self.scratch_t
            .iter()
            .zip(&self.r)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn eval(&mut self, tau: f64, nu: f64) -> f64 {
        self.inner(tau, nu).norm_sqr()
    }
}

/// Four-probe 2D golden-section maximisation.
///
/// Every iteration shrinks both widths by exactly `GOLDEN`. If all four
/// probes tie the objective carries no information and the search stops.
pub fn golden_2d<F: FnMut(f64, f64) -> f64>(region: SearchRegion, iterations: usize, mut f: F) -> SearchRegion {
    let mut r = region;
    let eta = GOLDEN;
    for _ in 0..iterations {
        let ia = r.tau_hi - r.tau_lo;
        let ib = r.nu_hi - r.nu_lo;
        let a1 = r.tau_lo + (1.0 - eta) * ia;
        let a2 = r.tau_lo + eta * ia;
        let b1 = r.nu_lo + (1.0 - eta) * ib;
        let b2 = r.nu_lo + eta * ib;
        let probes = [f(a1, b1), f(a1, b2), f(a2, b1), f(a2, b2)];
        let mut best = 0;
        for (i, v) in probes.iter().enumerate() {
            if *v > probes[best] {
                best = i;
            }
        }
        let lo = probes.iter().copied().fold(f64::INFINITY, f64::min);
        if probes[best] == lo {
            break;
        }
        let (new_a, new_b) = (r.tau_lo + eta * ia, r.nu_lo + eta * ib);
        match best {
            0 => {
                r.tau_hi = new_a;
                r.nu_hi = new_b;
            }
            1 => {
                r.tau_hi = new_a;
                r.nu_lo = r.nu_hi - eta * ib;
            }
            2 => {
                r.tau_lo = r.tau_hi - eta * ia;
                r.nu_hi = new_b;
            }
            _ => {
                r.tau_lo = r.tau_hi - eta * ia;
                r.nu_lo = r.nu_hi - eta * ib;
            }
        }
    }
    r
}

/// Phase-II refinement; returns the final interval midpoints.
pub fn phase2_golden(
    params: &FrameParams,
    x: &[Complex64],
    y_res: &[Complex64],
    region: SearchRegion,
    iterations: usize,
) -> Result<(f64, f64)> {
    let mut obj = Phase2Objective::new(params, x, y_res)?;
    let last = golden_2d(region, iterations, |t, v| obj.eval(t, v));
    Ok(last.midpoint())
}

/// Path gain for fixed `(tau, nu)` under the chosen rule.
pub fn estimate_alpha(
    params: &FrameParams,
    tau: f64,
    nu: f64,
    x: &[Complex64],
    y_res: &[Complex64],
    rule: AlphaRule,
) -> Result<Complex64> {
    check_len(params, x)?;
    check_len(params, y_res)?;
    let gx = PathKernel::new(params, tau, nu).apply_dd(x);
    let energy: f64 = gx.iter().map(|v| v.norm_sqr()).sum();
    let proj: Complex64 = gx.iter().zip(y_res).map(|(a, b)| a.conj() * b).sum();
    match rule {
        AlphaRule::LeastSquares => {
            if energy == 0.0 {
                return Err(Error::SingularEstimate);
            }
            Ok(proj / energy)
        }
        AlphaRule::Reciprocal => {
            if proj.norm() == 0.0 {
                return Err(Error::SingularEstimate);
            }
            Ok(Complex64::new(energy, 0.0) / proj)
        }
    }
}

fn clamp_tau(params: &FrameParams, tau: f64) -> f64 {
    let t = params.symbol_duration();
    tau.clamp(0.0, t * (1.0 - f64::EPSILON))
}

fn clamp_nu(params: &FrameParams, nu: f64) -> f64 {
    let half = params.delta_f / 2.0;
    nu.clamp(-half, half * (1.0 - f64::EPSILON))
}

/// Full two-phase estimation of `p` targets from the delay-Doppler received
/// vector `y` and known transmitted vector `x`.
pub fn tpe_estimate(
    params: &FrameParams,
    y: &[Complex64],
    x: &[Complex64],
    p: usize,
    cfg: &TpeConfig,
) -> Result<EstimationResult> {
    tpe_estimate_with_residual(params, y, x, p, cfg).map(|(r, _)| r)
}

/// [`tpe_estimate`] that also returns the final cancellation residual.
pub fn tpe_estimate_with_residual(
    params: &FrameParams,
    y: &[Complex64],
    x: &[Complex64],
    p: usize,
    cfg: &TpeConfig,
) -> Result<(EstimationResult, Vec<Complex64>)> {
    check_len(params, y)?;
    check_len(params, x)?;
    cfg.validate()?;
    if p == 0 {
        return Err(Error::InvalidParams("target count must be at least 1".into()));
    }
    let iterations = cfg.golden_iterations();
    let mut residual = y.to_vec();
    let mut targets = Vec::with_capacity(p);
    for _ in 0..p {
        let (l, k, peak_ratio) = phase1_ongrid(params, x, &residual)?;
        let region = SearchRegion::around_bin(params, l, k);
        let (tau, nu) = phase2_golden(params, x, &residual, region, iterations)?;
        let tau = clamp_tau(params, tau);
        let nu = clamp_nu(params, nu);
        let alpha = estimate_alpha(params, tau, nu, x, &residual, cfg.alpha_rule)?;
        let gx = PathKernel::new(params, tau, nu).apply_dd(x);
        for (r, g) in residual.iter_mut().zip(&gx) {
            *r -= alpha * g;
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
    for _ in 0..cfg.refine_sweeps {
        for t in targets.iter_mut() {
            let old = PathKernel::new(params, t.tau, t.nu).apply_dd(x);
            for (r, g) in residual.iter_mut().zip(&old) {
                *r += t.alpha * g;
            }
            let region = SearchRegion::around(params, t.tau, t.nu);
            let (tau, nu) = phase2_golden(params, x, &residual, region, iterations)?;
            t.tau = clamp_tau(params, tau);
            t.nu = clamp_nu(params, nu);
            t.alpha = estimate_alpha(params, t.tau, t.nu, x, &residual, cfg.alpha_rule)?;
            let gx = PathKernel::new(params, t.tau, t.nu).apply_dd(x);
            for (r, g) in residual.iter_mut().zip(&gx) {
                *r -= t.alpha * g;
            }
            let (range, velocity) = to_range_velocity(t.tau, t.nu, params.f_c, cfg.mode);
            t.range = range;
            t.velocity = velocity;
        }
    }
    Ok((
        EstimationResult {
            targets,
            mode: cfg.mode,
        },
        residual,
    ))
}
