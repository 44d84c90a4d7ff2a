//! Dense reference constructions built entry by entry from their matrix
//! definitions, with no use of the library's FFT paths.

#![allow(dead_code)]

use std::f64::consts::PI;

use dsotfs::FrameParams;
use num_complex::Complex64;

pub type C = Complex64;

/// Row-major square complex matrix.
#[derive(Debug, Clone)]
pub struct Mat {
    pub n: usize,
    pub a: Vec<C>,
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            a: vec![C::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i * n + i] = C::new(1.0, 0.0);
        }
        m
    }

    pub fn diag(d: &[C]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, v) in d.iter().enumerate() {
            m.a[i * d.len() + i] = *v;
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> C {
        self.a[i * self.n + j]
    }

    pub fn mul(&self, o: &Mat) -> Mat {
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let v = self.a[i * n + k];
                if v == C::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out.a[i * n + j] += v * o.a[k * n + j];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[C]) -> Vec<C> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.a[i * self.n + j] * x[j]).sum())
            .collect()
    }

    pub fn adjoint(&self) -> Mat {
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.a[j * n + i] = self.a[i * n + j].conj();
            }
        }
        out
    }

    pub fn add_scaled(&mut self, s: C, o: &Mat) {
        for (a, b) in self.a.iter_mut().zip(&o.a) {
            *a += s * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_diff(&self, o: &Mat) -> f64 {
        self.a.iter().zip(&o.a).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Builds a matrix from its action on the standard basis.
    pub fn from_operator(n: usize, f: impl Fn(&[C]) -> Vec<C>) -> Mat {
        let mut m = Mat::zeros(n);
        for j in 0..n {
            let mut e = vec![C::new(0.0, 0.0); n];
            e[j] = C::new(1.0, 0.0);
            let col = f(&e);
            for (i, v) in col.into_iter().enumerate() {
                m.a[i * n + j] = v;
            }
        }
        m
    }

    /// Solves `self x = b` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &[C]) -> Vec<C> {
        let n = self.n;
        let mut a = self.a.clone();
        let mut x = b.to_vec();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i * n + col].norm().partial_cmp(&a[j * n + col].norm()).unwrap())
                .unwrap();
            if piv != col {
                for k in 0..n {
                    a.swap(col * n + k, piv * n + k);
                }
                x.swap(col, piv);
            }
            let d = a[col * n + col];
            for row in col + 1..n {
                let f = a[row * n + col] / d;
                if f == C::new(0.0, 0.0) {
                    continue;
                }
                for k in col..n {
                    let v = a[col * n + k];
                    a[row * n + k] -= f * v;
                }
                let v = x[col];
                x[row] -= f * v;
            }
        }
        for col in (0..n).rev() {
            let mut s = x[col];
            for k in col + 1..n {
                s -= a[col * n + k] * x[k];
            }
            x[col] = s / a[col * n + col];
        }
        x
    }
}

/// Unitary DFT matrix `F[j][k] = exp(-j 2 pi j k / n) / sqrt(n)`.
pub fn dft_matrix(n: usize) -> Mat {
    let mut m = Mat::zeros(n);
    let s = 1.0 / (n as f64).sqrt();
    for j in 0..n {
        for k in 0..n {
            m.a[j * n + k] = C::from_polar(s, -2.0 * PI * (j * k) as f64 / n as f64);
        }
    }
    m
}

/// `A kron B`.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let n = a.n * b.n;
    let mut out = Mat::zeros(n);
    for i in 0..a.n {
        for j in 0..a.n {
            let v = a.get(i, j);
            for k in 0..b.n {
                for l in 0..b.n {
                    out.a[(i * b.n + k) * n + j * b.n + l] = v * b.get(k, l);
                }
            }
        }
    }
    out
}

/// Cyclic delay `Pi^l`: `(Pi^l s)[p] = s[p - l mod n]`.
pub fn cyclic_shift(n: usize, l: usize) -> Mat {
    let mut m = Mat::zeros(n);
    for p in 0..n {
        m.a[p * n + (p + n - l % n) % n] = C::new(1.0, 0.0);
    }
    m
}

/// Doppler diagonal `diag(exp(j 2 pi nu p T / M))` over the frame samples.
pub fn doppler_diag(params: &FrameParams, nu: f64) -> Mat {
    let mn = params.m * params.n;
    let ts = 1.0 / (params.m as f64 * params.delta_f);
    Mat::diag(&(0..mn).map(|p| C::cis(2.0 * PI * nu * p as f64 * ts)).collect::<Vec<_>>())
}

/// Integer delay index `ceil(tau M delta_f)`.
pub fn delay_index(params: &FrameParams, tau: f64) -> usize {
    (tau * params.m as f64 * params.delta_f - 1e-9).ceil() as usize
}

/// `Theta = Delta_nu Pi^l (I_N kron F_M^H B_tau F_M)`.
pub fn theta(params: &FrameParams, tau: f64, nu: f64) -> Mat {
    let (m, n) = (params.m, params.n);
    let l = delay_index(params, tau);
    let b = C::cis(2.0 * PI * (l as f64 / m as f64 - tau * params.delta_f));
    let ramp = Mat::diag(&(0..m).map(|k| b.powi(k as i32)).collect::<Vec<_>>());
    let f = dft_matrix(m);
    let block = f.adjoint().mul(&ramp).mul(&f);
    let frac = kron(&Mat::identity(n), &block);
    doppler_diag(params, nu).mul(&cyclic_shift(m * n, l)).mul(&frac)
}

/// `F_N kron I_M`: forward DFT along every delay row.
pub fn row_dft(params: &FrameParams) -> Mat {
    kron(&dft_matrix(params.n), &Mat::identity(params.m))
}

/// `Gamma = (F_N kron I_M) Theta (F_N^H kron I_M)`.
pub fn gamma(params: &FrameParams, tau: f64, nu: f64) -> Mat {
    let w = row_dft(params);
    w.mul(&theta(params, tau, nu)).mul(&w.adjoint())
}

/// `Delta^k Pi^l` with `Delta = diag(exp(j 2 pi p / (M N)))`.
pub fn integer_channel(params: &FrameParams, l: usize, k: i64) -> Mat {
    let mn = params.m * params.n;
    let d: Vec<C> = (0..mn)
        .map(|p| C::cis(2.0 * PI * k as f64 * p as f64 / mn as f64))
        .collect();
    Mat::diag(&d).mul(&cyclic_shift(mn, l))
}

pub fn rel_err(a: &[C], b: &[C]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den.max(1e-300)).sqrt()
}

pub fn inner(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Deterministic complex Gaussian vector.
pub fn gaussian_vec<R: rand::Rng>(rng: &mut R, n: usize) -> Vec<C> {
    use rand_distr::{Distribution, StandardNormal};
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            C::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        })
        .collect()
}

/// Prints the per-criterion verdict line and returns the verdict.
pub fn report(id: u32, name: &str, pass: bool, detail: &str) -> bool {
    println!("criterion {id:>2} [{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}
