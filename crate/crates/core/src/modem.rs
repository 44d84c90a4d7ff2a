//! Transforms between the delay-Doppler, time-frequency and time domains.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::lattice::{Domain, FrameParams, Grid};

/// Sample arrangement of a [`TimeSignal`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// `M*N` samples at rate `M/T`.
    Critical,
    /// `L*M*N` samples; sample `p` sits at `t = p T / (L M)`.
    Oversampled(usize),
    /// One prefix of the given length per frame.
    FrameCp(usize),
    /// One prefix of the given length before every symbol.
    SymbolCp(usize),
}

/// Time-domain samples of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    samples: Vec<Complex64>,
    m: usize,
    n: usize,
    layout: Layout,
}

impl TimeSignal {
    pub fn new(params: &FrameParams, layout: Layout, samples: Vec<Complex64>) -> Result<Self> {
        let (m, n) = (params.m, params.n);
        let expected = match layout {
            Layout::Critical => m * n,
            Layout::Oversampled(l) => l * m * n,
            Layout::FrameCp(cp) => m * n + cp,
            Layout::SymbolCp(cp) => (m + cp) * n,
        };
        if samples.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: samples.len(),
            });
        }
        Ok(Self { samples, m, n, layout })
    }

    /// Critically sampled frame.
    pub fn critical(params: &FrameParams, samples: Vec<Complex64>) -> Result<Self> {
        Self::new(params, Layout::Critical, samples)
    }

    pub fn zeros(params: &FrameParams) -> Self {
        Self {
            samples: vec![Complex64::new(0.0, 0.0); params.len()],
            m: params.m,
            n: params.n,
            layout: Layout::Critical,
        }
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub(crate) fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    pub(crate) fn expect_critical(&self) -> Result<()> {
        if self.layout != Layout::Critical {
            return Err(Error::LengthMismatch {
                expected: self.m * self.n,
                actual: self.samples.len(),
            });
        }
        Ok(())
    }

    /// Reshape into the M x N sample matrix `S` (critical layout only).
    pub fn to_grid(&self) -> Result<Grid> {
        self.expect_critical()?;
        Grid::from_vec(self.m, self.n, Domain::Time, self.samples.clone())
    }

    pub fn from_grid(grid: &Grid) -> Result<Self> {
        grid.expect_domain(Domain::Time)?;
        Ok(Self {
            samples: grid.as_slice().to_vec(),
            m: grid.rows(),
            n: grid.cols(),
            layout: Layout::Critical,
        })
    }
}

/// `X_TF = F_M X F_N^H`.
pub fn isfft(x: &Grid) -> Result<Grid> {
    x.expect_domain(Domain::DelayDoppler)?;
    let (m, n) = (x.rows(), x.cols());
    let mut out = x.clone().retag(Domain::TimeFrequency);
    fft::dft_columns(out.values_mut(), m, false);
    fft::dft_rows(out.values_mut(), m, n, true);
    Ok(out)
}

/// `Y = F_M^H Y_TF F_N`.
pub fn sfft(y_tf: &Grid) -> Result<Grid> {
    y_tf.expect_domain(Domain::TimeFrequency)?;
    let (m, n) = (y_tf.rows(), y_tf.cols());
    let mut out = y_tf.clone().retag(Domain::DelayDoppler);
    fft::dft_columns(out.values_mut(), m, true);
    fft::dft_rows(out.values_mut(), m, n, false);
    Ok(out)
}

/// `s = vec(F_M^H X_TF)`.
pub fn heisenberg(x_tf: &Grid) -> Result<TimeSignal> {
    x_tf.expect_domain(Domain::TimeFrequency)?;
    let (m, n) = (x_tf.rows(), x_tf.cols());
    let mut samples = x_tf.as_slice().to_vec();
    fft::dft_columns(&mut samples, m, true);
    Ok(TimeSignal {
        samples,
        m,
        n,
        layout: Layout::Critical,
    })
}

/// `Y_TF = F_M vec^-1(r)`.
pub fn wigner(r: &TimeSignal) -> Result<Grid> {
    r.expect_critical()?;
    let mut values = r.samples.clone();
    fft::dft_columns(&mut values, r.m, false);
    Grid::from_vec(r.m, r.n, Domain::TimeFrequency, values)
}

/// DD grid straight to time samples: `vec(X F_N^H)`.
pub fn dd_to_time(x: &Grid) -> Result<TimeSignal> {
    x.expect_domain(Domain::DelayDoppler)?;
    let (m, n) = (x.rows(), x.cols());
    let mut samples = x.as_slice().to_vec();
    fft::dft_rows(&mut samples, m, n, true);
    Ok(TimeSignal {
        samples,
        m,
        n,
        layout: Layout::Critical,
    })
}

/// Time samples straight to the DD grid: `R F_N`.
pub fn time_to_dd(r: &TimeSignal) -> Result<Grid> {
    r.expect_critical()?;
    let mut values = r.samples.clone();
    fft::dft_rows(&mut values, r.m, r.n, false);
    Grid::from_vec(r.m, r.n, Domain::DelayDoppler, values)
}

/// Prepends the last `cp_len` samples of the frame.
pub fn add_cp(s: &TimeSignal, cp_len: usize) -> Result<TimeSignal> {
    s.expect_critical()?;
    if cp_len >= s.samples.len() {
        return Err(Error::InvalidParams(format!(
            "cp_len {cp_len} must be below the frame length {}",
            s.samples.len()
        )));
    }
    let len = s.samples.len();
    let mut samples = Vec::with_capacity(len + cp_len);
    samples.extend_from_slice(&s.samples[len - cp_len..]);
    samples.extend_from_slice(&s.samples);
    Ok(TimeSignal {
        samples,
        m: s.m,
        n: s.n,
        layout: Layout::FrameCp(cp_len),
    })
}

/// Drops the frame prefix.
pub fn remove_cp(s: &TimeSignal) -> Result<TimeSignal> {
    let cp = match s.layout {
        Layout::FrameCp(cp) => cp,
        Layout::Critical => 0,
        _ => {
            return Err(Error::Unsupported(
                "remove_cp expects a frame with one prefix".into(),
            ))
        }
    };
    Ok(TimeSignal {
        samples: s.samples[cp..].to_vec(),
        m: s.m,
        n: s.n,
        layout: Layout::Critical,
    })
}

/// Per-symbol subcarrier sum evaluated at `L` points per sample.
///
/// Stream `q` is the frame advanced by `q/L` of a sample inside each symbol,
/// produced by a phase ramp on the subcarriers of every column.
pub fn oversample(s: &TimeSignal, factor: usize) -> Result<TimeSignal> {
    s.expect_critical()?;
    if factor < 1 {
        return Err(Error::InvalidParams("oversampling factor must be >= 1".into()));
    }
    let (m, n) = (s.m, s.n);
    let mut out = vec![Complex64::new(0.0, 0.0); factor * m * n];
    let mut tf = s.samples.clone();
    fft::dft_columns(&mut tf, m, false);
    let mut stream = vec![Complex64::new(0.0, 0.0); m * n];
    for q in 0..factor {
        let step = Complex64::cis(2.0 * std::f64::consts::PI * q as f64 / (factor * m) as f64);
        for k in 0..n {
            let mut w = Complex64::new(1.0, 0.0);
            for mm in 0..m {
                stream[mm + m * k] = tf[mm + m * k] * w;
                w *= step;
            }
        }
        fft::dft_columns(&mut stream, m, true);
        for (idx, v) in stream.iter().enumerate() {
            out[idx * factor + q] = *v;
        }
    }
    Ok(TimeSignal {
        samples: out,
        m,
        n,
        layout: Layout::Oversampled(factor),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn params() -> FrameParams {
        FrameParams::new(8, 4, 1.0).unwrap()
    }

    fn ramp(len: usize) -> Vec<Complex64> {
        (0..len)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()))
            .collect()
    }

    fn close(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).norm() < tol)
    }

    #[test]
    fn isfft_of_impulse_is_flat() {
        let mut x = Grid::zeros(8, 4, Domain::DelayDoppler);
        x.set(0, 0, Complex64::new(1.0, 0.0));
        let tf = isfft(&x).unwrap();
        let c = 1.0 / 32f64.sqrt();
        assert!(tf.as_slice().iter().all(|v| (v - c).norm() < 1e-14));
        let back = sfft(&tf).unwrap();
        assert!(close(back.as_slice(), x.as_slice(), 1e-14));
    }

    #[test]
    fn isfft_matches_double_sum() {
        let (m, n) = (8usize, 4usize);
        let x = Grid::from_vec(m, n, Domain::DelayDoppler, ramp(m * n)).unwrap();
        let tf = isfft(&x).unwrap();
        for mm in 0..m {
            for nn in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    for l in 0..m {
                        let ph = 2.0 * PI * ((nn * k) as f64 / n as f64 - (mm * l) as f64 / m as f64);
                        acc += x.get(l, k) * Complex64::cis(ph);
                    }
                }
                acc /= ((m * n) as f64).sqrt();
                assert!((tf.get(mm, nn) - acc).norm() < 1e-12);
            }
        }
        assert!((tf.norm() - x.norm()).abs() < 1e-12);
    }

    #[test]
    fn heisenberg_shortcut_and_wigner_inverse() {
        let p = params();
        let x = Grid::from_vec(8, 4, Domain::DelayDoppler, ramp(32)).unwrap();
        let s = heisenberg(&isfft(&x).unwrap()).unwrap();
        let direct = dd_to_time(&x).unwrap();
        assert!(close(s.samples(), direct.samples(), 1e-12));
        let tf = wigner(&s).unwrap();
        assert!(close(tf.as_slice(), isfft(&x).unwrap().as_slice(), 1e-12));
        assert!(close(time_to_dd(&s).unwrap().as_slice(), x.as_slice(), 1e-12));
        let zero = wigner(&TimeSignal::zeros(&p)).unwrap();
        assert_eq!(zero.norm(), 0.0);
    }

    #[test]
    fn cp_insertion_and_removal() {
        let p = params();
        let s = TimeSignal::critical(&p, (0..32).map(|i| Complex64::new(i as f64, 0.0)).collect()).unwrap();
        let with = add_cp(&s, 4).unwrap();
        let prefix: Vec<f64> = with.samples()[..4].iter().map(|v| v.re).collect();
        assert_eq!(prefix, vec![28.0, 29.0, 30.0, 31.0]);
        assert_eq!(remove_cp(&with).unwrap(), s);
        assert_eq!(remove_cp(&add_cp(&s, 0).unwrap()).unwrap(), s);
        assert!(TimeSignal::critical(&p, vec![Complex64::new(0.0, 0.0); 31]).is_err());
    }

    #[test]
    fn oversampling_matches_subcarrier_sum() {
        let p = params();
        let (m, n, l) = (8usize, 4usize, 4usize);
        let s = TimeSignal::critical(&p, ramp(32)).unwrap();
        let tf = wigner(&s).unwrap();
        let over = oversample(&s, l).unwrap();
        for (p_idx, v) in over.samples().iter().enumerate() {
            let t = p_idx as f64 / (l * m) as f64;
            let sym = (t.floor() as usize).min(n - 1);
            let local = t - sym as f64;
            let mut acc = Complex64::new(0.0, 0.0);
            for mm in 0..m {
                acc += tf.get(mm, sym) * Complex64::cis(2.0 * PI * mm as f64 * local);
            }
            acc /= (m as f64).sqrt();
            assert!((v - acc).norm() < 1e-12);
        }
        let decimated: Vec<Complex64> = over.samples().iter().step_by(l).copied().collect();
        assert!(close(&decimated, s.samples(), 1e-12));
        assert!(close(oversample(&s, 1).unwrap().samples(), s.samples(), 1e-12));
        assert!(oversample(&s, 0).is_err());
    }

    #[test]
    fn single_tone_stays_constant_envelope() {
        let mut tf = Grid::zeros(8, 4, Domain::TimeFrequency);
        for k in 0..4 {
            tf.set(3, k, Complex64::cis(k as f64));
        }
        let over = oversample(&heisenberg(&tf).unwrap(), 4).unwrap();
        let mag0 = over.samples()[0].norm();
        assert!(over.samples().iter().all(|v| (v.norm() - mag0).abs() < 1e-12));
    }
}
