//! Mixed Hölder test functions: fractional Brownian motion paths sampled on
//! a dyadic grid, interpolated linearly, and their tensor products.
//!
//! Node values `B(t_1), ..., B(t_n)` at `t_i = i 2^-J` are drawn as `L z`,
//! where `L` is the lower Cholesky factor of the node covariance
//!
//! ```text
//! E[B(t) B(s)] = (t^2h + s^2h - |t - s|^2h) / 2
//! ```
//!
//! and `z` is a vector of independent standard normals from a
//! `ChaCha8Rng` seeded with the path seed (`rand_distr::StandardNormal`).
//! `B(0) = 0` exactly.
//!
//! Two routes compute the same factor. [`FbmMethod::DenseCholesky`] factors
//! the `n x n` node covariance directly (O(n^3), limited to small grids).
//! [`FbmMethod::Levinson`] runs the Durbin-Levinson recursion on the
//! stationary increments; the recursion yields the Cholesky factor of the
//! increment covariance row by row, and partial sums of increments turn it
//! into the node factor. It needs O(n^2) time and O(n) memory.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dyadic::{check_point, pow2};
use crate::error::{Error, Result};

/// Largest supported grid exponent `J` (`2^J + 1` nodes).
pub const MAX_FBM_LEVELS: u32 = 14;
/// Largest grid exponent accepted by the dense factorization.
pub const MAX_DENSE_LEVELS: u32 = 11;
/// Relative diagonal jitter tried, in order, when a factorization breaks down.
pub const JITTER_SCHEDULE: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// Continuous piecewise-linear function on `2^J + 1` equispaced nodes of `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    values: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidParameter(
                "a piecewise-linear function needs at least two nodes".into(),
            ));
        }
        Ok(PiecewiseLinear { values })
    }

    pub fn constant(c: f64) -> Self {
        PiecewiseLinear { values: vec![c, c] }
    }

    /// `t -> slope t + intercept`.
    pub fn affine(slope: f64, intercept: f64) -> Self {
        PiecewiseLinear {
            values: vec![intercept, intercept + slope],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn intervals(&self) -> usize {
        self.values.len() - 1
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.intervals() as f64
    }

    /// Linear interpolation; exact node values at nodes.
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.intervals();
        let pos = t * n as f64;
        let i = pos as usize;
        if i >= n {
            return self.values[n];
        }
        let frac = pos - i as f64;
        if frac == 0.0 {
            self.values[i]
        } else {
            self.values[i] + frac * (self.values[i + 1] - self.values[i])
        }
    }

    /// Trapezoid sum, exact for piecewise-linear functions.
    pub fn integral(&self) -> f64 {
        let n = self.intervals();
        let inner: f64 = self.values[1..n].iter().sum();
        (inner + 0.5 * (self.values[0] + self.values[n])) / n as f64
    }
}

/// One fractional Brownian motion path on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmPath {
    pub hurst: f64,
    pub levels: u32,
    pub path: PiecewiseLinear,
}

impl FbmPath {
    pub fn eval(&self, t: f64) -> f64 {
        self.path.eval(t)
    }

    /// Writes `t,value` rows, one per node.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,value")?;
        for (i, v) in self.path.values().iter().enumerate() {
            writeln!(out, "{},{}", self.path.node(i), v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FbmMethod {
    #[default]
    Levinson,
    DenseCholesky,
}

/// Generates fBm paths for a fixed Hurst parameter and grid.
#[derive(Debug, Clone)]
pub struct FbmGenerator {
    hurst: f64,
    levels: u32,
    method: FbmMethod,
}

impl FbmGenerator {
    pub fn new(hurst: f64, levels: u32) -> Result<Self> {
        Self::with_method(hurst, levels, FbmMethod::default())
    }

    pub fn with_method(hurst: f64, levels: u32, method: FbmMethod) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "Hurst parameter must lie in (0, 1), got {hurst}"
            )));
        }
        let cap = match method {
            FbmMethod::Levinson => MAX_FBM_LEVELS,
            FbmMethod::DenseCholesky => MAX_DENSE_LEVELS,
        };
        if levels > cap {
            return Err(Error::ResourceLimit(format!(
                "fBm grid 2^{levels} exceeds 2^{cap} for {method:?}"
            )));
        }
        Ok(FbmGenerator {
            hurst,
            levels,
            method,
        })
    }

    fn nodes(&self) -> usize {
        1usize << self.levels
    }

    fn normals(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.nodes())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect()
    }

    fn wrap(&self, interior: Vec<f64>) -> Result<FbmPath> {
        let mut values = Vec::with_capacity(interior.len() + 1);
        values.push(0.0);
        values.extend(interior);
        Ok(FbmPath {
            hurst: self.hurst,
            levels: self.levels,
            path: PiecewiseLinear::new(values)?,
        })
    }

    pub fn generate(&self, seed: u64) -> Result<FbmPath> {
        Ok(self.generate_batch(&[seed])?.remove(0))
    }

    /// One path per seed; the factorization is shared across the batch.
    pub fn generate_batch(&self, seeds: &[u64]) -> Result<Vec<FbmPath>> {
        let z: Vec<Vec<f64>> = seeds.iter().map(|&s| self.normals(s)).collect();
        let nodes = match self.method {
            FbmMethod::Levinson => with_jitter(|j| levinson_nodes(self.hurst, self.levels, j, &z))?,
            FbmMethod::DenseCholesky => {
                let n = self.nodes();
                let l = with_jitter(|j| {
                    let mut c = node_covariance(self.hurst, self.levels);
                    let scale = c[(n - 1) * n + n - 1];
                    for i in 0..n {
                        c[i * n + i] += j * scale;
                    }
                    cholesky_in_place(&mut c, n)?;
                    Ok(c)
                })?;
                z.iter()
                    .map(|zi| {
                        (0..n)
                            .map(|i| (0..=i).map(|k| l[i * n + k] * zi[k]).sum())
                            .collect()
                    })
                    .collect()
            }
        };
        nodes.into_iter().map(|v| self.wrap(v)).collect()
    }
}

fn with_jitter<T>(mut attempt: impl FnMut(f64) -> Result<T>) -> Result<T> {
    let mut last = None;
    for &j in &JITTER_SCHEDULE {
        match attempt(j) {
            Ok(v) => return Ok(v),
            Err(e @ Error::NotPositiveDefinite { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("jitter schedule is nonempty"))
}

/// Path with `2^levels` grid intervals (`fbm_generate`).
pub fn fbm_generate(hurst: f64, levels: u32, seed: u64) -> Result<FbmPath> {
    FbmGenerator::new(hurst, levels)?.generate(seed)
}

/// Covariance of `B(t_1..t_n)`, `t_i = i 2^-levels`, row-major.
pub fn node_covariance(hurst: f64, levels: u32) -> Vec<f64> {
    let n = 1usize << levels;
    let dt = pow2(-(levels as i32));
    let two_h = 2.0 * hurst;
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        let t = (i + 1) as f64 * dt;
        for j in 0..n {
            let s = (j + 1) as f64 * dt;
            c[i * n + j] = 0.5 * (t.powf(two_h) + s.powf(two_h) - (t - s).abs().powf(two_h));
        }
    }
    c
}

/// In-place lower Cholesky factorization; the strict upper triangle is zeroed.
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<()> {
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if diag.is_nan() || diag <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                index: j,
                pivot: diag,
            });
        }
        let diag = diag.sqrt();
        a[j * n + j] = diag;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / diag;
        }
        for k in j + 1..n {
            a[j * n + k] = 0.0;
        }
    }
    Ok(())
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
fn fgn_autocov(hurst: f64, k: usize) -> f64 {
    let two_h = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
}

/// Node values via the Durbin-Levinson recursion on the increments.
fn levinson_nodes(hurst: f64, levels: u32, jitter: f64, z: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = 1usize << levels;
    let step_scale = pow2(-(levels as i32)).powf(hurst);
    let gamma: Vec<f64> = (0..n)
        .map(|k| {
            let g = fgn_autocov(hurst, k);
            if k == 0 {
                g * (1.0 + jitter)
            } else {
                g
            }
        })
        .collect();
    let mut incr: Vec<Vec<f64>> = z.iter().map(|_| vec![0.0; n]).collect();
    // phi[j - 1] holds the order-t prediction coefficient of lag j.
    let mut phi: Vec<f64> = Vec::with_capacity(n);
    let mut v = gamma[0];
    for (x, zi) in incr.iter_mut().zip(z) {
        x[0] = v.sqrt() * zi[0];
    }
    for t in 1..n {
        let mut acc = gamma[t];
        for j in 1..t {
            acc -= phi[j - 1] * gamma[t - j];
        }
        let reflection = acc / v;
        // phi_{t,j} = phi_{t-1,j} - reflection * phi_{t-1,t-j}, updated in pairs.
        for j in 1..=(t - 1) / 2 {
            let a = phi[j - 1];
            let b = phi[t - j - 1];
            phi[j - 1] = a - reflection * b;
            phi[t - j - 1] = b - reflection * a;
        }
        if t % 2 == 0 {
            let mid = t / 2 - 1;
            phi[mid] -= reflection * phi[mid];
        }
        phi.push(reflection);
        v *= 1.0 - reflection * reflection;
        if v.is_nan() || v <= 0.0 {
            return Err(Error::NotPositiveDefinite { index: t, pivot: v });
        }
        let sd = v.sqrt();
        for (x, zi) in incr.iter_mut().zip(z) {
            let mut pred = 0.0;
            for j in 1..=t {
                pred += phi[j - 1] * x[t - j];
            }
            x[t] = pred + sd * zi[t];
        }
    }
    Ok(incr
        .into_iter()
        .map(|x| {
            let mut sum = 0.0;
            x.into_iter()
                .map(|dx| {
                    sum += dx * step_scale;
                    sum
                })
                .collect()
        })
        .collect())
}

/// `f(x) = prod_j g_j(x_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductFunction {
    pub factors: Vec<PiecewiseLinear>,
}

impl ProductFunction {
    pub fn new(factors: Vec<PiecewiseLinear>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidParameter(
                "a product needs at least one factor".into(),
            ));
        }
        Ok(ProductFunction { factors })
    }

    /// Product of `d` independent fBm paths; factor `j` uses the seed
    /// `derive_seed(seed, j)`.
    pub fn fbm(d: usize, hurst: f64, levels: u32, seed: u64) -> Result<Self> {
        let seeds: Vec<u64> = (0..d as u64)
            .map(|j| crate::sampling::derive_seed(seed, j))
            .collect();
        let paths = FbmGenerator::new(hurst, levels)?.generate_batch(&seeds)?;
        Self::new(paths.into_iter().map(|p| p.path).collect())
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    /// `product_eval`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_point(x, self.dim())?;
        Ok(self.eval_unchecked(x))
    }

    #[inline]
    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.factors
            .iter()
            .zip(x)
            .map(|(g, &t)| g.eval(t))
            .product()
    }

    /// `exact_integral`: product of the factor integrals.
    pub fn exact_integral(&self) -> f64 {
        self.factors.iter().map(PiecewiseLinear::integral).product()
    }
}
