//! Continuous delay and Doppler shift (CDDS) channel as a matrix-free operator.
//!
//! A path with delay `tau` and Doppler `nu` acts on the critically sampled
//! frame `s` as `Theta = Delta^nu Pi^l (I_N kron F_M^H B_tau F_M)`, where
//! `l = ceil(tau M delta_f)`, `B_tau = diag(b^m)` with
//! `b = exp(j 2 pi (l/M - tau delta_f))`, `Pi` is the forward cyclic shift of
//! the whole `M*N` vector and `Delta^nu = diag(delta^p)` with
//! `delta = exp(j 2 pi nu T / M)`. `Gamma` is the same operator seen from the
//! delay-Doppler domain.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::lattice::{Domain, FrameParams, Grid};
use crate::modem::TimeSignal;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Largest `M*N` accepted by dense constructions.
pub const DENSE_LIMIT: usize = 64;

/// Round-trip (monostatic echo) or one-way propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensingMode {
    Active,
    Passive,
}

impl SensingMode {
    fn factor(self) -> f64 {
        match self {
            SensingMode::Active => 2.0,
            SensingMode::Passive => 1.0,
        }
    }
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    pub alpha: Complex64,
    /// Delay in seconds, in `[0, T)`.
    pub tau: f64,
    /// Doppler in Hz, in `[-1/(2T), 1/(2T))`.
    pub nu: f64,
}

impl PathParams {
    pub fn new(alpha: Complex64, tau: f64, nu: f64) -> Self {
        Self { alpha, tau, nu }
    }

    /// Path sitting exactly on delay bin `l` and signed Doppler bin `k`.
    pub fn on_grid(params: &FrameParams, alpha: Complex64, l: usize, k: i64) -> Self {
        Self {
            alpha,
            tau: l as f64 * params.delay_resolution(),
            nu: k as f64 * params.doppler_resolution(),
        }
    }

    pub fn validate(&self, params: &FrameParams) -> Result<()> {
        let t = params.symbol_duration();
        if !(self.tau >= 0.0 && self.tau < t) {
            return Err(Error::Ambiguous {
                quantity: "tau",
                value: self.tau,
                min: 0.0,
                max: t,
            });
        }
        let half = params.delta_f / 2.0;
        if !(self.nu >= -half && self.nu < half) {
            return Err(Error::Ambiguous {
                quantity: "nu",
                value: self.nu,
                min: -half,
                max: half,
            });
        }
        if !(self.alpha.re.is_finite() && self.alpha.im.is_finite()) {
            return Err(Error::InvalidParams("path gain must be finite".into()));
        }
        Ok(())
    }
}

/// A resolvable set of paths.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub paths: Vec<PathParams>,
    /// Average total path gain `E{alpha^H alpha}`.
    pub sigma_h2: f64,
    pub mode: SensingMode,
}

/// Monte Carlo channel generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomChannel {
    pub paths: usize,
    #[serde(default = "one")]
    pub sigma_h2: f64,
    /// Delays are drawn uniformly from `[0, tau_max)`.
    pub tau_max: f64,
    /// Doppler shifts are drawn uniformly from `[-nu_max, nu_max]`.
    pub nu_max: f64,
    /// Snap the draws to the nearest grid bins.
    #[serde(default)]
    pub on_grid: bool,
}

fn one() -> f64 {
    1.0
}

impl ChannelSpec {
    pub fn new(params: &FrameParams, paths: Vec<PathParams>, sigma_h2: f64, mode: SensingMode) -> Result<Self> {
        for p in &paths {
            p.validate(params)?;
        }
        let spec = Self { paths, sigma_h2, mode };
        spec.check_resolvable(params)?;
        Ok(spec)
    }

    /// Single path with unit gain and no delay or Doppler.
    pub fn identity() -> Self {
        Self {
            paths: vec![PathParams::new(Complex64::new(1.0, 0.0), 0.0, 0.0)],
            sigma_h2: 1.0,
            mode: SensingMode::Passive,
        }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn check_resolvable(&self, params: &FrameParams) -> Result<()> {
        let dt = params.delay_resolution() * (1.0 - 1e-9);
        let dn = params.doppler_resolution() * (1.0 - 1e-9);
        for i in 0..self.paths.len() {
            for j in i + 1..self.paths.len() {
                let (a, b) = (&self.paths[i], &self.paths[j]);
                if (a.tau - b.tau).abs() < dt && (a.nu - b.nu).abs() < dn {
                    return Err(Error::Unresolvable { first: i, second: j });
                }
            }
        }
        Ok(())
    }

    /// Draws gains `CN(0, sigma_h2/P)` with uniform delays and Doppler,
    /// rejecting unresolvable sets.
    pub fn random<R: Rng + ?Sized>(
        params: &FrameParams,
        gen: &RandomChannel,
        mode: SensingMode,
        rng: &mut R,
    ) -> Result<Self> {
        if gen.paths == 0 {
            return Err(Error::InvalidParams("random channel needs at least one path".into()));
        }
        let t = params.symbol_duration();
        if !(gen.tau_max > 0.0 && gen.tau_max <= t) {
            return Err(Error::InvalidParams(format!("tau_max must lie in (0, T], got {}", gen.tau_max)));
        }
        let half = params.delta_f / 2.0;
        if !(gen.nu_max >= 0.0 && gen.nu_max < half) {
            return Err(Error::InvalidParams(format!(
                "nu_max must lie in [0, delta_f/2), got {}",
                gen.nu_max
            )));
        }
        let gain_std = (gen.sigma_h2 / gen.paths as f64 / 2.0).sqrt();
        let tau_dist = Uniform::new(0.0, gen.tau_max).map_err(|e| Error::InvalidParams(e.to_string()))?;
        let nu_dist =
            Uniform::new_inclusive(-gen.nu_max, gen.nu_max).map_err(|e| Error::InvalidParams(e.to_string()))?;
        for _ in 0..10_000 {
            let paths: Vec<PathParams> = (0..gen.paths)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    let mut tau = tau_dist.sample(rng);
                    let mut nu = nu_dist.sample(rng);
                    if gen.on_grid {
                        let l = (tau / params.delay_resolution()).round().min(params.m as f64 - 1.0);
                        tau = l * params.delay_resolution();
                        let k = (nu / params.doppler_resolution()).round();
                        let k = k.clamp(-(params.n as f64 / 2.0), params.n as f64 / 2.0 - 1.0);
                        nu = k * params.doppler_resolution();
                    }
                    PathParams::new(Complex64::new(re, im) * gain_std, tau, nu)
                })
                .collect();
            let spec = Self {
                paths,
                sigma_h2: gen.sigma_h2,
                mode,
            };
            if spec.check_resolvable(params).is_ok() && spec.paths.iter().all(|p| p.validate(params).is_ok()) {
                return Ok(spec);
            }
        }
        Err(Error::InvalidParams(
            "could not draw a resolvable channel; widen tau_max or nu_max".into(),
        ))
    }

    pub fn max_delay(&self) -> f64 {
        self.paths.iter().map(|p| p.tau).fold(0.0, f64::max)
    }
}

/// Maps a target at range `r` (m) moving at `v` (m/s) to `(tau, nu)`.
pub fn geometry_to_path(
    params: &FrameParams,
    range: f64,
    velocity: f64,
    mode: SensingMode,
) -> Result<(f64, f64)> {
    let f = mode.factor();
    let tau = f * range / SPEED_OF_LIGHT;
    let nu = f * params.f_c * velocity / SPEED_OF_LIGHT;
    let probe = PathParams::new(Complex64::new(1.0, 0.0), tau, nu);
    probe.validate(params)?;
    Ok((tau, nu))
}

/// Precomputed factors of a single `Theta(tau, nu)`.
#[derive(Debug, Clone)]
pub struct PathKernel {
    m: usize,
    n: usize,
    shift: usize,
    ramp: Vec<Complex64>,
    doppler: Vec<Complex64>,
    identity_ramp: bool,
}

/// Integer part of the delay in samples, snapped so exact bins collapse.
pub fn integer_delay(params: &FrameParams, tau: f64) -> usize {
    (tau * params.m as f64 * params.delta_f - 1e-9).ceil().max(0.0) as usize
}

impl PathKernel {
    pub fn new(params: &FrameParams, tau: f64, nu: f64) -> Self {
        let (m, n) = (params.m, params.n);
        let shift = integer_delay(params, tau);
        let frac = shift as f64 / m as f64 - tau * params.delta_f;
        let identity_ramp = frac.abs() < 1e-15;
        let ramp = (0..m).map(|k| Complex64::cis(2.0 * PI * frac * k as f64)).collect();
        let w = 2.0 * PI * nu * params.symbol_duration() / m as f64;
        let within: Vec<Complex64> = (0..m).map(|l| Complex64::cis(w * l as f64)).collect();
        let mut doppler = Vec::with_capacity(m * n);
        for k in 0..n {
            let base = Complex64::cis(w * (m * k) as f64);
            doppler.extend(within.iter().map(|d| base * d));
        }
        Self {
            m,
            n,
            shift,
            ramp,
            doppler,
            identity_ramp,
        }
    }

    pub fn len(&self) -> usize {
        self.m * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shift(&self) -> usize {
        self.shift
    }

    /// `I_N kron F_M^H B F_M` in place.
    pub(crate) fn apply_ramp(&self, v: &mut [Complex64], conj: bool) {
        if self.identity_ramp {
            return;
        }
        fft::dft_columns(v, self.m, false);
        for col in v.chunks_mut(self.m) {
            for (x, b) in col.iter_mut().zip(&self.ramp) {
                *x *= if conj { b.conj() } else { *b };
            }
        }
        fft::dft_columns(v, self.m, true);
    }

    /// Applies the ramp to a vector already in the column-frequency domain
    /// and returns to time.
    pub(crate) fn ramp_from_tf(&self, tf: &[Complex64], out: &mut [Complex64]) {
        for (col_out, col_in) in out.chunks_mut(self.m).zip(tf.chunks(self.m)) {
            for ((o, x), b) in col_out.iter_mut().zip(col_in).zip(&self.ramp) {
                *o = x * b;
            }
        }
        fft::dft_columns(out, self.m, true);
    }

    /// `Delta Pi u`, written to `out`.
    pub(crate) fn shift_doppler(&self, u: &[Complex64], out: &mut [Complex64]) {
        let len = self.len();
        let s = self.shift % len;
        for (p, (o, d)) in out.iter_mut().zip(&self.doppler).enumerate() {
            *o = u[(p + len - s) % len] * d;
        }
    }

    /// `Pi^H Delta^H r`, written to `out`.
    pub(crate) fn unshift_doppler(&self, r: &[Complex64], out: &mut [Complex64]) {
        let len = self.len();
        let s = self.shift % len;
        for (p, (v, d)) in r.iter().zip(&self.doppler).enumerate() {
            out[(p + len - s) % len] = v * d.conj();
        }
    }

    /// `Theta s`.
    pub fn apply(&self, s: &[Complex64]) -> Vec<Complex64> {
        let mut u = s.to_vec();
        self.apply_ramp(&mut u, false);
        let mut out = vec![Complex64::new(0.0, 0.0); u.len()];
        self.shift_doppler(&u, &mut out);
        out
    }

    /// `Theta^H r`.
    pub fn adjoint(&self, r: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); r.len()];
        self.unshift_doppler(r, &mut out);
        self.apply_ramp(&mut out, true);
        out
    }

    /// `Gamma x = (F_N kron I_M) Theta (F_N^H kron I_M) x`.
    pub fn apply_dd(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut s = x.to_vec();
        fft::dft_rows(&mut s, self.m, self.n, true);
        let mut out = self.apply(&s);
        fft::dft_rows(&mut out, self.m, self.n, false);
        out
    }

    /// `Gamma^H y`.
    pub fn adjoint_dd(&self, y: &[Complex64]) -> Vec<Complex64> {
        let mut r = y.to_vec();
        fft::dft_rows(&mut r, self.m, self.n, true);
        let mut out = self.adjoint(&r);
        fft::dft_rows(&mut out, self.m, self.n, false);
        out
    }
}

/// Matrix-free `H = sum_i alpha_i Theta_i` and its delay-Doppler image `A`.
#[derive(Debug, Clone)]
pub struct CddsOperator {
    params: FrameParams,
    spec: ChannelSpec,
    kernels: Vec<PathKernel>,
}

impl CddsOperator {
    pub fn new(params: &FrameParams, spec: &ChannelSpec) -> Result<Self> {
        for p in &spec.paths {
            p.validate(params)?;
        }
        Ok(Self::new_unchecked(params, spec))
    }

    /// Builds the operator without range checks (estimates may sit on the
    /// edge of the unambiguous region).
    pub fn new_unchecked(params: &FrameParams, spec: &ChannelSpec) -> Self {
        let kernels = spec
            .paths
            .iter()
            .map(|p| PathKernel::new(params, p.tau, p.nu))
            .collect();
        Self {
            params: *params,
            spec: spec.clone(),
            kernels,
        }
    }

    pub fn params(&self) -> &FrameParams {
        &self.params
    }

    pub fn spec(&self) -> &ChannelSpec {
        &self.spec
    }

    pub fn kernel(&self, i: usize) -> &PathKernel {
        &self.kernels[i]
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.params.len() {
            return Err(Error::LengthMismatch {
                expected: self.params.len(),
                actual: len,
            });
        }
        Ok(())
    }

    /// `Theta_i s` (unit gain).
    pub fn apply_theta(&self, i: usize, s: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(s.len())?;
        Ok(self.kernels[i].apply(s))
    }

    /// `Gamma_i x` (unit gain).
    pub fn apply_gamma(&self, i: usize, x: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(x.len())?;
        Ok(self.kernels[i].apply_dd(x))
    }

    /// `H s`.
    pub fn apply(&self, s: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(s.len())?;
        let mut out = vec![Complex64::new(0.0, 0.0); s.len()];
        for (k, path) in self.kernels.iter().zip(&self.spec.paths) {
            for (o, v) in out.iter_mut().zip(k.apply(s)) {
                *o += path.alpha * v;
            }
        }
        Ok(out)
    }

    /// `H^H r`.
    pub fn adjoint(&self, r: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(r.len())?;
        let mut out = vec![Complex64::new(0.0, 0.0); r.len()];
        for (k, path) in self.kernels.iter().zip(&self.spec.paths) {
            let a = path.alpha.conj();
            for (o, v) in out.iter_mut().zip(k.adjoint(r)) {
                *o += a * v;
            }
        }
        Ok(out)
    }

    /// `A x = (F_N kron I_M) H (F_N^H kron I_M) x`.
    pub fn apply_dd(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(x.len())?;
        let (m, n) = (self.params.m, self.params.n);
        let mut s = x.to_vec();
        fft::dft_rows(&mut s, m, n, true);
        let mut out = self.apply(&s)?;
        fft::dft_rows(&mut out, m, n, false);
        Ok(out)
    }

    /// `A^H y`.
    pub fn adjoint_dd(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(y.len())?;
        let (m, n) = (self.params.m, self.params.n);
        let mut r = y.to_vec();
        fft::dft_rows(&mut r, m, n, true);
        let mut out = self.adjoint(&r)?;
        fft::dft_rows(&mut out, m, n, false);
        Ok(out)
    }
}

/// `Theta_i s` for path `i` of `spec`.
pub fn apply_theta(params: &FrameParams, spec: &ChannelSpec, i: usize, s: &TimeSignal) -> Result<TimeSignal> {
    s.expect_critical()?;
    let path = spec
        .paths
        .get(i)
        .ok_or_else(|| Error::InvalidParams(format!("path index {i} out of range")))?;
    let k = PathKernel::new(params, path.tau, path.nu);
    TimeSignal::critical(params, k.apply(s.samples()))
}

/// `Gamma_i x` for path `i` of `spec`, on a delay-Doppler grid.
pub fn apply_gamma(params: &FrameParams, spec: &ChannelSpec, i: usize, x: &Grid) -> Result<Grid> {
    x.expect_domain(Domain::DelayDoppler)?;
    let path = spec
        .paths
        .get(i)
        .ok_or_else(|| Error::InvalidParams(format!("path index {i} out of range")))?;
    let k = PathKernel::new(params, path.tau, path.nu);
    Grid::from_vec(params.m, params.n, Domain::DelayDoppler, k.apply_dd(x.as_slice()))
}

/// `H s` without noise.
pub fn apply_channel(params: &FrameParams, spec: &ChannelSpec, s: &TimeSignal) -> Result<TimeSignal> {
    s.expect_critical()?;
    let op = CddsOperator::new(params, spec)?;
    TimeSignal::critical(params, op.apply(s.samples())?)
}

/// `H^H r`.
pub fn apply_channel_adjoint(params: &FrameParams, spec: &ChannelSpec, r: &TimeSignal) -> Result<TimeSignal> {
    r.expect_critical()?;
    let op = CddsOperator::new(params, spec)?;
    TimeSignal::critical(params, op.adjoint(r.samples())?)
}

/// Small row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub dim: usize,
    pub data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim)
            .map(|r| (0..self.dim).map(|c| self.get(r, c) * v[c]).sum())
            .collect()
    }
}

/// Dense `Delta^k Pi^l` for an on-grid path (delay bin `l`, signed Doppler bin `k`).
pub fn integer_reference_channel(params: &FrameParams, l: usize, k: i64) -> Result<DenseMatrix> {
    let dim = params.len();
    if dim > DENSE_LIMIT {
        return Err(Error::SizeGuard {
            limit: DENSE_LIMIT,
            requested: dim,
        });
    }
    let mut data = vec![Complex64::new(0.0, 0.0); dim * dim];
    for p in 0..dim {
        let src = (p + dim - l % dim) % dim;
        data[p * dim + src] = Complex64::cis(2.0 * PI * k as f64 * p as f64 / dim as f64);
    }
    Ok(DenseMatrix { dim, data })
}

/// Adds circularly symmetric Gaussian noise of per-sample variance `sigma_w2`.
pub fn add_awgn<R: Rng + ?Sized>(s: &TimeSignal, sigma_w2: f64, rng: &mut R) -> Result<TimeSignal> {
    let mut out = s.clone();
    add_awgn_in_place(out.samples_mut(), sigma_w2, rng)?;
    Ok(out)
}

pub fn add_awgn_in_place<R: Rng + ?Sized>(v: &mut [Complex64], sigma_w2: f64, rng: &mut R) -> Result<()> {
    if !(sigma_w2 >= 0.0) {
        return Err(Error::NegativeVariance(sigma_w2));
    }
    if sigma_w2 == 0.0 {
        return Ok(());
    }
    let sd = (sigma_w2 / 2.0).sqrt();
    for x in v.iter_mut() {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *x += Complex64::new(re, im) * sd;
    }
    Ok(())
}

fn check_shift(x: &Grid, l_i: usize, k_i: i64) -> Result<()> {
    x.expect_domain(Domain::DelayDoppler)?;
    let n = x.cols() as i64;
    if l_i >= x.rows() || k_i < -n / 2 || k_i >= n - n / 2 {
        return Err(Error::IndexOutOfRange {
            row: l_i,
            col: k_i.rem_euclid(n) as usize,
            rows: x.rows(),
            cols: x.cols(),
        });
    }
    Ok(())
}

/// 2D circular shift prediction for an on-grid path, with the phase and
/// closed-form wrap factor:
/// `exp(j2pi (l - l_i) k_i / (MN)) beta(l, k) X[[l - l_i]_M, [k - k_i]_N]`
/// where `beta = (N-1)/N exp(-j2pi [k - k_i]_N / N)` on the wrapped rows.
pub fn dd_circular_shift_model(x: &Grid, l_i: usize, k_i: i64) -> Result<Grid> {
    check_shift(x, l_i, k_i)?;
    let (m, n) = (x.rows(), x.cols());
    let mut out = Grid::zeros(m, n, Domain::DelayDoppler);
    for k in 0..n {
        let kk = (k as i64 - k_i).rem_euclid(n as i64) as usize;
        for l in 0..m {
            let ll = (l + m - l_i) % m;
            let phase = Complex64::cis(2.0 * PI * (l as f64 - l_i as f64) * k_i as f64 / (m * n) as f64);
            let beta = if l >= l_i {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::cis(-2.0 * PI * kk as f64 / n as f64) * ((n as f64 - 1.0) / n as f64)
            };
            out.set(l, k, phase * beta * x.get(ll, kk));
        }
    }
    Ok(out)
}

/// Exact delay-Doppler response of `Delta^k Pi^l`.
///
/// Differs from [`dd_circular_shift_model`] by the constant phase
/// `exp(j2pi l_i k_i / (MN))` and by the absent `(N-1)/N` factor.
pub fn dd_circular_shift_exact(x: &Grid, l_i: usize, k_i: i64) -> Result<Grid> {
    check_shift(x, l_i, k_i)?;
    let (m, n) = (x.rows(), x.cols());
    let mut out = Grid::zeros(m, n, Domain::DelayDoppler);
    for k in 0..n {
        let kk = (k as i64 - k_i).rem_euclid(n as i64) as usize;
        for l in 0..m {
            let ll = (l + m - l_i) % m;
            let mut v = Complex64::cis(2.0 * PI * l as f64 * k_i as f64 / (m * n) as f64) * x.get(ll, kk);
            if l < l_i {
                v *= Complex64::cis(-2.0 * PI * kk as f64 / n as f64);
            }
            out.set(l, k, v);
        }
    }
    Ok(out)
}
