//! Communication receiver: pilot-aided channel estimation, conjugate-gradient
//! equalization and the iterative estimation/detection loop.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{CddsOperator, ChannelSpec, PathParams};
use crate::error::{Error, Result};
use crate::fft;
use crate::lattice::{qam_slice, Domain, FrameParams, Grid, QamAlphabet};
use crate::sensing::{tpe_estimate, EstimationResult, TpeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CgConfig {
    /// Regularizer, the inverse SNR.
    pub lambda: f64,
    /// Stop once `sqrt(gamma_t / gamma_0)` drops below this.
    pub tol: f64,
    pub max_iters: usize,
}

impl CgConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            tol: 1e-6,
            max_iters: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !(self.tol > 0.0) || self.max_iters < 1 {
            return Err(Error::Config(format!(
                "CG needs lambda >= 0, tol > 0 and max_iters >= 1 (got {}, {}, {})",
                self.lambda, self.tol, self.max_iters
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub solution: Vec<Complex64>,
    pub iterations: usize,
    pub converged: bool,
    /// `||H s_t - r||^2 + lambda ||s_t||^2` for `t = 0..=iterations`.
    pub objective: Vec<f64>,
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// Conjugate gradients on `(H^H H + lambda I) s = H^H r` for any operator
/// pair.
pub fn cg_solve<A, B>(apply: A, adjoint: B, r: &[Complex64], cfg: &CgConfig) -> Result<CgOutcome>
where
    A: Fn(&[Complex64]) -> Vec<Complex64>,
    B: Fn(&[Complex64]) -> Vec<Complex64>,
{
    cfg.validate()?;
    let len = r.len();
    let mut s = vec![Complex64::new(0.0, 0.0); len];
    let mut res = r.to_vec();
    let mut x = adjoint(&res);
    let mut p = x.clone();
    let gamma0 = norm_sqr(&x);
    let mut gamma = gamma0;
    let mut objective = vec![norm_sqr(&res)];
    if gamma0 == 0.0 {
        return Ok(CgOutcome {
            solution: s,
            iterations: 0,
            converged: true,
            objective,
        });
    }
    let mut t = 0;
    let mut converged = false;
    while t < cfg.max_iters {
        let q = apply(&p);
        let denom = norm_sqr(&q) + cfg.lambda * norm_sqr(&p);
        if denom == 0.0 {
            break;
        }
        let beta = gamma / denom;
        for i in 0..len {
            s[i] += p[i] * beta;
            res[i] -= q[i] * beta;
        }
        x = adjoint(&res);
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi -= si * cfg.lambda;
        }
        let gamma_next = norm_sqr(&x);
        let ratio = gamma_next / gamma;
        for (pi, xi) in p.iter_mut().zip(&x) {
            *pi = xi + *pi * ratio;
        }
        gamma = gamma_next;
        t += 1;
        objective.push(norm_sqr(&res) + cfg.lambda * norm_sqr(&s));
        if (gamma / gamma0).sqrt() < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(CgOutcome {
        solution: s,
        iterations: t,
        converged,
        objective,
    })
}

/// Regularized time-domain equalizer for the channel in `op`.
pub fn cg_equalize(op: &CddsOperator, r: &[Complex64], cfg: &CgConfig) -> Result<CgOutcome> {
    if r.len() != op.params().len() {
        return Err(Error::LengthMismatch {
            expected: op.params().len(),
            actual: r.len(),
        });
    }
    cg_solve(
        |v| op.apply(v).expect("length checked"),
        |v| op.adjoint(v).expect("length checked"),
        r,
        cfg,
    )
}

/// Channel estimate as an operator specification.
pub fn estimate_to_spec(est: &EstimationResult) -> ChannelSpec {
    ChannelSpec {
        paths: est
            .targets
            .iter()
            .map(|t| PathParams::new(t.alpha, t.tau, t.nu))
            .collect(),
        sigma_h2: est.targets.iter().map(|t| t.alpha.norm_sqr()).sum(),
        mode: est.mode,
    }
}

/// Pilot-only two-phase estimation; the data acts as interference.
pub fn coarse_ce(
    params: &FrameParams,
    y: &[Complex64],
    x_p: &[Complex64],
    p: usize,
    cfg: &TpeConfig,
) -> Result<EstimationResult> {
    if x_p.iter().all(|v| v.norm_sqr() == 0.0) {
        return Err(Error::NoPilot);
    }
    tpe_estimate(params, y, x_p, p, cfg)
}

/// Pilot removal and de-spreading of an equalized frame, followed by hard
/// decisions. Returns `(soft, hard)` data grids.
pub fn recover_symbols(
    params: &FrameParams,
    s_hat: &[Complex64],
    x_p: &[Complex64],
    alphabet: &QamAlphabet,
    sigma_d2: f64,
) -> Result<(Grid, Grid)> {
    if s_hat.len() != params.len() || x_p.len() != params.len() {
        return Err(Error::LengthMismatch {
            expected: params.len(),
            actual: if s_hat.len() != params.len() { s_hat.len() } else { x_p.len() },
        });
    }
    let (m, n) = (params.m, params.n);
    let mut v = s_hat.to_vec();
    fft::dft_rows(&mut v, m, n, false);
    for (a, b) in v.iter_mut().zip(x_p) {
        *a -= b;
    }
    fft::dft_rows(&mut v, m, n, true);
    let soft = Grid::from_vec(m, n, Domain::Data, v)?;
    let hard = qam_slice(&soft, alphabet, sigma_d2);
    Ok((soft, hard))
}

/// `vec(X_d F_N) + x_p`.
pub fn rebuild_x(x_d: &Grid, x_p: &[Complex64]) -> Result<Vec<Complex64>> {
    x_d.expect_domain(Domain::Data)?;
    if x_p.len() != x_d.as_slice().len() {
        return Err(Error::LengthMismatch {
            expected: x_d.as_slice().len(),
            actual: x_p.len(),
        });
    }
    let mut v = x_d.as_slice().to_vec();
    fft::dft_rows(&mut v, x_d.rows(), x_d.cols(), false);
    for (a, b) in v.iter_mut().zip(x_p) {
        *a += b;
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub paths: usize,
    pub sigma_d2: f64,
    pub cg: CgConfig,
    pub tpe: TpeConfig,
    pub max_outer: usize,
}

impl DetectorConfig {
    pub fn new(paths: usize, sigma_d2: f64, lambda: f64) -> Self {
        Self {
            paths,
            sigma_d2,
            cg: CgConfig::new(lambda),
            tpe: TpeConfig {
                mode: crate::channel::SensingMode::Passive,
                ..TpeConfig::default()
            },
            max_outer: 10,
        }
    }
}

/// Snapshot after one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorState {
    pub iteration: usize,
    pub estimate: EstimationResult,
    pub symbols: Grid,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorOutcome {
    pub symbols: Grid,
    /// Soft symbol estimates from the last equalization.
    pub soft: Grid,
    pub estimate: EstimationResult,
    /// Estimate the last equalization used.
    pub equalizer_estimate: EstimationResult,
    pub iterations: usize,
    pub converged: bool,
    pub coarse: EstimationResult,
}

/// Iterative channel estimation and data detection from the CP-free time
/// samples `r`.
pub fn iterative_ce_dd(
    params: &FrameParams,
    r: &[Complex64],
    x_p: &[Complex64],
    alphabet: &QamAlphabet,
    cfg: &DetectorConfig,
) -> Result<DetectorOutcome> {
    let y = time_to_dd_vec(params, r)?;
    let coarse = coarse_ce(params, &y, x_p, cfg.paths, &cfg.tpe)?;
    iterate_from(params, r, &y, x_p, alphabet, cfg, coarse)
}

/// [`iterative_ce_dd`] starting from a supplied channel estimate.
pub fn iterative_ce_dd_from(
    params: &FrameParams,
    r: &[Complex64],
    x_p: &[Complex64],
    alphabet: &QamAlphabet,
    cfg: &DetectorConfig,
    initial: EstimationResult,
) -> Result<DetectorOutcome> {
    let y = time_to_dd_vec(params, r)?;
    iterate_from(params, r, &y, x_p, alphabet, cfg, initial)
}

fn time_to_dd_vec(params: &FrameParams, r: &[Complex64]) -> Result<Vec<Complex64>> {
    if r.len() != params.len() {
        return Err(Error::LengthMismatch {
            expected: params.len(),
            actual: r.len(),
        });
    }
    let mut y = r.to_vec();
    fft::dft_rows(&mut y, params.m, params.n, false);
    Ok(y)
}

fn iterate_from(
    params: &FrameParams,
    r: &[Complex64],
    y: &[Complex64],
    x_p: &[Complex64],
    alphabet: &QamAlphabet,
    cfg: &DetectorConfig,
    initial: EstimationResult,
) -> Result<DetectorOutcome> {
    if cfg.max_outer < 1 {
        return Err(Error::Config("max_outer must be at least 1".into()));
    }
    let mut estimate = initial.clone();
    let mut previous: Option<Grid> = None;
    let mut t = 0;
    loop {
        t += 1;
        let used = estimate.clone();
        let op = CddsOperator::new_unchecked(params, &estimate_to_spec(&estimate));
        let eq = cg_equalize(&op, r, &cfg.cg)?;
        let (soft, hard) = recover_symbols(params, &eq.solution, x_p, alphabet, cfg.sigma_d2)?;
        let x_hat = rebuild_x(&hard, x_p)?;
        estimate = tpe_estimate(params, y, &x_hat, cfg.paths, &cfg.tpe)?;
        let converged = previous.as_ref() == Some(&hard);
        if converged || t >= cfg.max_outer {
            return Ok(DetectorOutcome {
                symbols: hard,
                soft,
                estimate,
                equalizer_estimate: used,
                iterations: t,
                converged,
                coarse: initial,
            });
        }
        previous = Some(hard);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{PathKernel, SensingMode};
    use crate::lattice::{build_pilot_grid, dft_spread, qam_map, superimpose, PilotConfig};
    use crate::modem;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_channel_solves_in_one_step() {
        let p = FrameParams::new(8, 4, 1.0).unwrap();
        let op = CddsOperator::new(&p, &ChannelSpec::identity()).unwrap();
        let r: Vec<Complex64> = (0..32).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let out = cg_equalize(&op, &r, &CgConfig::new(0.0)).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.converged);
        assert!(out.solution.iter().zip(&r).all(|(a, b)| (a - b).norm() < 1e-12));
        let zero = vec![Complex64::new(0.0, 0.0); 32];
        let out = cg_equalize(&op, &zero, &CgConfig::new(0.1)).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.solution.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn objective_is_monotone() {
        let p = FrameParams::new(16, 8, 1.0e3).unwrap();
        let spec = ChannelSpec {
            paths: vec![
                PathParams::new(Complex64::new(0.8, 0.1), 1.3e-4, 37.0),
                PathParams::new(Complex64::new(-0.2, 0.4), 3.7e-4, -90.0),
            ],
            sigma_h2: 1.0,
            mode: SensingMode::Passive,
        };
        let op = CddsOperator::new(&p, &spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r: Vec<Complex64> = (0..p.len())
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let out = cg_equalize(&op, &r, &CgConfig { lambda: 0.05, tol: 1e-10, max_iters: 200 }).unwrap();
        for w in out.objective.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    fn frame(p: &FrameParams, rng: &mut ChaCha8Rng, sigma_p2: f64) -> (Vec<u8>, Grid, Vec<Complex64>, Vec<Complex64>) {
        let alphabet = QamAlphabet::new(4).unwrap();
        let bits: Vec<u8> = (0..p.len() * 2).map(|_| rng.random_range(0..2u8)).collect();
        let xd = qam_map(p, &bits, &alphabet, 1.0 - sigma_p2).unwrap();
        let pilot = build_pilot_grid(p, &PilotConfig::centered(p, sigma_p2)).unwrap();
        let x = superimpose(&dft_spread(&xd).unwrap(), &pilot).unwrap();
        let s = modem::dd_to_time(&x).unwrap().into_samples();
        (bits, xd, pilot.into_vec(), s)
    }

    #[test]
    fn recover_and_rebuild_invert_the_transmitter() {
        let p = FrameParams::new(8, 4, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let alphabet = QamAlphabet::new(4).unwrap();
        let (_, xd, xp, s) = frame(&p, &mut rng, 0.1);
        let (soft, hard) = recover_symbols(&p, &s, &xp, &alphabet, 0.9).unwrap();
        assert!(soft.as_slice().iter().zip(xd.as_slice()).all(|(a, b)| (a - b).norm() < 1e-12));
        assert_eq!(hard.as_slice().len(), 32);
        let x = rebuild_x(&xd, &xp).unwrap();
        let mut want = s.clone();
        fft::dft_rows(&mut want, 8, 4, false);
        assert!(x.iter().zip(&want).all(|(a, b)| (a - b).norm() < 1e-12));
        let zero = Grid::zeros(8, 4, Domain::Data);
        assert_eq!(rebuild_x(&zero, &xp).unwrap(), xp);
    }

    #[test]
    fn noiseless_loop_converges_quickly() {
        let p = FrameParams::new(64, 16, 1.92e6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let alphabet = QamAlphabet::new(4).unwrap();
        let (_, xd, xp, s) = frame(&p, &mut rng, 0.06);
        let tau = 3.4 * p.delay_resolution();
        let nu = 1.3 * p.doppler_resolution();
        let r = PathKernel::new(&p, tau, nu).apply(&s);
        let cfg = DetectorConfig::new(1, 0.94, 1e-4);
        let out = iterative_ce_dd(&p, &r, &xp, &alphabet, &cfg).unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 3, "iterations {}", out.iterations);
        let want = qam_slice(&xd, &alphabet, 0.94);
        assert_eq!(out.symbols, want);
        assert!((out.estimate.targets[0].tau - tau).abs() < 1e-3 * p.delay_resolution());
    }

    #[test]
    fn missing_pilot_is_rejected() {
        let p = FrameParams::new(8, 4, 1.0).unwrap();
        let zero = vec![Complex64::new(0.0, 0.0); 32];
        assert_eq!(
            coarse_ce(&p, &zero, &zero, 1, &TpeConfig::default()),
            Err(Error::NoPilot)
        );
    }
}
