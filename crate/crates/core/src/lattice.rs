//! Frame numerology, delay-Doppler grids, QAM alphabets, DFT spreading and
//! superimposed pilots.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;

/// Frame numerology.
///
/// The symbol duration is always derived as `1 / delta_f`; it is never stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameParams {
    /// Delay bins / subcarriers.
    pub m: usize,
    /// Doppler bins / symbols per frame.
    pub n: usize,
    /// Subcarrier spacing in Hz.
    pub delta_f: f64,
    /// Cyclic prefix length in samples of period T/M.
    pub cp_len: usize,
    /// Carrier frequency in Hz.
    pub f_c: f64,
    /// Oversampling factor used for continuous-time PAPR measurements.
    pub oversampling: usize,
}

impl FrameParams {
    /// Frame with no cyclic prefix, a 0.3 THz carrier and 4x oversampling.
    pub fn new(m: usize, n: usize, delta_f: f64) -> Result<Self> {
        let params = Self {
            m,
            n,
            delta_f,
            cp_len: 0,
            f_c: 0.3e12,
            oversampling: 4,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_cp_len(mut self, cp_len: usize) -> Result<Self> {
        self.cp_len = cp_len;
        self.validate()?;
        Ok(self)
    }

    pub fn with_carrier(mut self, f_c: f64) -> Result<Self> {
        self.f_c = f_c;
        self.validate()?;
        Ok(self)
    }

    pub fn with_oversampling(mut self, l: usize) -> Result<Self> {
        self.oversampling = l;
        self.validate()?;
        Ok(self)
    }

    /// Sets the CP to cover `tau_max`: `ceil(tau_max * M * delta_f)` samples.
    pub fn with_cp_for_delay(self, tau_max: f64) -> Result<Self> {
        let cp = (tau_max * self.m as f64 * self.delta_f).ceil().max(0.0) as usize;
        self.with_cp_len(cp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 || self.n < 2 {
            return Err(Error::InvalidParams(format!(
                "M and N must be at least 2 (got M={}, N={})",
                self.m, self.n
            )));
        }
        if !(self.delta_f.is_finite() && self.delta_f > 0.0) {
            return Err(Error::InvalidParams(format!(
                "subcarrier spacing must be positive, got {}",
                self.delta_f
            )));
        }
        if self.cp_len >= self.m * self.n {
            return Err(Error::InvalidParams(format!(
                "cp_len {} must be below M*N = {}",
                self.cp_len,
                self.m * self.n
            )));
        }
        if !(self.f_c.is_finite() && self.f_c > 0.0) {
            return Err(Error::InvalidParams(format!(
                "carrier frequency must be positive, got {}",
                self.f_c
            )));
        }
        if self.oversampling < 1 {
            return Err(Error::InvalidParams("oversampling factor must be >= 1".into()));
        }
        Ok(())
    }

    /// Symbol duration T = 1 / delta_f.
    pub fn symbol_duration(&self) -> f64 {
        1.0 / self.delta_f
    }

    /// Frame duration N T.
    pub fn frame_duration(&self) -> f64 {
        self.n as f64 / self.delta_f
    }

    /// Occupied bandwidth M delta_f.
    pub fn bandwidth(&self) -> f64 {
        self.m as f64 * self.delta_f
    }

    /// Delay resolution 1 / (M delta_f).
    pub fn delay_resolution(&self) -> f64 {
        1.0 / self.bandwidth()
    }

    /// Doppler resolution 1 / (N T).
    pub fn doppler_resolution(&self) -> f64 {
        self.delta_f / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.m * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Signed Doppler bin stored in grid column `k` (FFT ordering).
    pub fn signed_doppler_bin(&self, k: usize) -> i64 {
        let n = self.n as i64;
        let k = k as i64;
        if k < n / 2 {
            k
        } else {
            k - n
        }
    }

    /// Grid column holding signed Doppler bin `k`.
    pub fn doppler_column(&self, k: i64) -> usize {
        k.rem_euclid(self.n as i64) as usize
    }
}

/// Domain tag carried by every [`Grid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    /// Information symbols before DFT spreading.
    Data,
    DelayDoppler,
    TimeFrequency,
    Time,
}

/// Column-major M x N complex array tagged with its domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    domain: Domain,
    values: Vec<Complex64>,
}

impl Grid {
    pub fn zeros(rows: usize, cols: usize, domain: Domain) -> Self {
        Self {
            rows,
            cols,
            domain,
            values: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    /// Wraps a column-major buffer (`values[l + rows * k]`).
    pub fn from_vec(rows: usize, cols: usize, domain: Domain, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                actual: values.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            domain,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn get(&self, l: usize, k: usize) -> Complex64 {
        self.values[l + self.rows * k]
    }

    pub fn set(&mut self, l: usize, k: usize, v: Complex64) {
        self.values[l + self.rows * k] = v;
    }

    /// `vec(X)`: columns stacked.
    pub fn as_slice(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.values
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub(crate) fn expect_domain(&self, expected: Domain) -> Result<()> {
        if self.domain != expected {
            return Err(Error::DomainMismatch {
                expected,
                actual: self.domain,
            });
        }
        Ok(())
    }

    pub(crate) fn retag(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }
}

/// Square Gray-labelled QAM constellation with unit average energy.
#[derive(Debug, Clone, PartialEq)]
pub struct QamAlphabet {
    order: usize,
    bits_per_axis: usize,
    levels: usize,
    scale: f64,
    points: Vec<Complex64>,
}

impl QamAlphabet {
    pub fn new(order: usize) -> Result<Self> {
        let bits_per_axis = match order {
            4 => 1,
            16 => 2,
            64 => 3,
            _ => return Err(Error::UnsupportedOrder(order)),
        };
        let levels = 1usize << bits_per_axis;
        // mean |c|^2 of the odd-integer grid is 2(Q-1)/3
        let scale = 1.0 / (2.0 * (order as f64 - 1.0) / 3.0).sqrt();
        let mut alphabet = Self {
            order,
            bits_per_axis,
            levels,
            scale,
            points: Vec::with_capacity(order),
        };
        alphabet.points = (0..order).map(|label| alphabet.point(label)).collect();
        Ok(alphabet)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_axis
    }

    /// Points indexed by their bit label (MSB first, in-phase bits first).
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Minimum Euclidean distance between unit-energy points.
    pub fn min_distance(&self) -> f64 {
        2.0 * self.scale
    }

    fn axis_amplitude(&self, gray: usize) -> f64 {
        let index = gray_to_binary(gray);
        (self.levels as f64 - 1.0 - 2.0 * index as f64) * self.scale
    }

    fn axis_label(&self, value: f64) -> usize {
        let half = (self.levels as f64 - 1.0) / 2.0;
        let idx = (half - value / (2.0 * self.scale)).round();
        let idx = idx.clamp(0.0, self.levels as f64 - 1.0) as usize;
        idx ^ (idx >> 1)
    }

    /// Constellation point for a bit label.
    pub fn point(&self, label: usize) -> Complex64 {
        let i_bits = label >> self.bits_per_axis;
        let q_bits = label & (self.levels - 1);
        Complex64::new(self.axis_amplitude(i_bits), self.axis_amplitude(q_bits))
    }

    /// Label of the nearest constellation point (per-axis slicing).
    pub fn decide(&self, v: Complex64) -> usize {
        (self.axis_label(v.re) << self.bits_per_axis) | self.axis_label(v.im)
    }
}

fn gray_to_binary(mut g: usize) -> usize {
    let mut b = 0;
    while g != 0 {
        b ^= g;
        g >>= 1;
    }
    b
}

/// Superimposed pilot placement and power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotConfig {
    pub l_p: usize,
    pub k_p: usize,
    /// Average pilot power over the grid.
    pub sigma_p2: f64,
}

impl PilotConfig {
    /// Pilot at the grid centre `(M/2, N/2)`.
    pub fn centered(params: &FrameParams, sigma_p2: f64) -> Self {
        Self {
            l_p: params.m / 2,
            k_p: params.n / 2,
            sigma_p2,
        }
    }

    pub fn amplitude(&self, params: &FrameParams) -> f64 {
        (params.len() as f64 * self.sigma_p2).sqrt()
    }
}

/// Maps bits to `M*N` Gray-coded QAM symbols with power `sigma_d2`.
///
/// Symbols fill the grid in column-major order; each symbol consumes
/// `log2(Q)` bits, MSB first.
pub fn qam_map(params: &FrameParams, bits: &[u8], alphabet: &QamAlphabet, sigma_d2: f64) -> Result<Grid> {
    let bps = alphabet.bits_per_symbol();
    let expected = params.len() * bps;
    if bits.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            actual: bits.len(),
        });
    }
    let amp = sigma_d2.sqrt();
    let values = bits
        .chunks(bps)
        .map(|chunk| {
            let label = chunk.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize);
            alphabet.point(label) * amp
        })
        .collect();
    Grid::from_vec(params.m, params.n, Domain::Data, values)
}

/// Nearest-point decision followed by inverse Gray mapping.
pub fn qam_demap(symbols: &Grid, alphabet: &QamAlphabet, sigma_d2: f64) -> Vec<u8> {
    let bps = alphabet.bits_per_symbol();
    let inv = if sigma_d2 > 0.0 { 1.0 / sigma_d2.sqrt() } else { 0.0 };
    let mut bits = Vec::with_capacity(symbols.as_slice().len() * bps);
    for v in symbols.as_slice() {
        let label = alphabet.decide(v * inv);
        for b in (0..bps).rev() {
            bits.push(((label >> b) & 1) as u8);
        }
    }
    bits
}

/// Hard decisions onto the scaled alphabet, kept as symbols.
pub fn qam_slice(symbols: &Grid, alphabet: &QamAlphabet, sigma_d2: f64) -> Grid {
    let amp = sigma_d2.sqrt();
    let inv = if amp > 0.0 { 1.0 / amp } else { 0.0 };
    let values = symbols
        .as_slice()
        .iter()
        .map(|v| alphabet.point(alphabet.decide(v * inv)) * amp)
        .collect();
    Grid {
        rows: symbols.rows,
        cols: symbols.cols,
        domain: symbols.domain,
        values,
    }
}

/// N-point unitary DFT of each delay row: `X_dd = X_d F_N`.
pub fn dft_spread(data: &Grid) -> Result<Grid> {
    data.expect_domain(Domain::Data)?;
    let mut out = data.clone().retag(Domain::DelayDoppler);
    let (m, n) = (out.rows, out.cols);
    fft::dft_rows(out.values_mut(), m, n, false);
    Ok(out)
}

/// Inverse of [`dft_spread`]: `X_d = X_dd F_N^H`.
pub fn dft_despread(dd: &Grid) -> Result<Grid> {
    dd.expect_domain(Domain::DelayDoppler)?;
    let mut out = dd.clone().retag(Domain::Data);
    let (m, n) = (out.rows, out.cols);
    fft::dft_rows(out.values_mut(), m, n, true);
    Ok(out)
}

/// Single-impulse pilot grid with amplitude `sqrt(M N sigma_p2)`.
pub fn build_pilot_grid(params: &FrameParams, pilot: &PilotConfig) -> Result<Grid> {
    if pilot.l_p >= params.m || pilot.k_p >= params.n {
        return Err(Error::IndexOutOfRange {
            row: pilot.l_p,
            col: pilot.k_p,
            rows: params.m,
            cols: params.n,
        });
    }
    if !(pilot.sigma_p2 >= 0.0 && pilot.sigma_p2 < 1.0) {
        return Err(Error::InvalidParams(format!(
            "pilot power must lie in [0, 1), got {}",
            pilot.sigma_p2
        )));
    }
    let mut grid = Grid::zeros(params.m, params.n, Domain::DelayDoppler);
    if pilot.sigma_p2 > 0.0 {
        grid.set(pilot.l_p, pilot.k_p, Complex64::new(pilot.amplitude(params), 0.0));
    }
    Ok(grid)
}

/// Elementwise sum of spread data and pilot grids.
pub fn superimpose(data_dd: &Grid, pilot: &Grid) -> Result<Grid> {
    data_dd.expect_domain(Domain::DelayDoppler)?;
    pilot.expect_domain(Domain::DelayDoppler)?;
    if data_dd.rows != pilot.rows || data_dd.cols != pilot.cols {
        return Err(Error::DimensionMismatch {
            left_rows: data_dd.rows,
            left_cols: data_dd.cols,
            right_rows: pilot.rows,
            right_cols: pilot.cols,
        });
    }
    let mut out = data_dd.clone();
    for (o, p) in out.values.iter_mut().zip(&pilot.values) {
        *o += p;
    }
    Ok(out)
}
