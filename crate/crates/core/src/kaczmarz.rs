//! Randomized Kaczmarz fitting of embedding weights from random samples.
//!
//! Every embedded row `Psi(x)` has the same squared norm and the rows of the
//! full cell system have equal singular values, so sampling points uniformly
//! is the same as sampling rows with probability proportional to their norm.
//! In expectation the squared error contracts by `1 - 1/p` per step.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::dyadic::{check_grid, check_point, Point};
use crate::embedding::{SparseEmbedding, TripleIndex, GRID_LIMIT};
use crate::error::{Error, Result};

/// One observation `(X_i, f(X_i))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub point: Point,
    pub value: f64,
}

impl Sample {
    pub fn new(coords: Vec<f64>, value: f64) -> Result<Self> {
        Ok(Sample {
            point: Point::new(coords)?,
            value,
        })
    }

    /// Caller guarantees `coords` lies in the unit cube.
    pub(crate) fn from_raw(coords: Vec<f64>, value: f64) -> Self {
        debug_assert!(coords.iter().all(|t| (0.0..=1.0).contains(t)));
        Sample {
            point: Point::new(coords).expect("unit-cube point"),
            value,
        }
    }
}

/// Base of the logarithm in the sample count `ceil(c1 p log(2^m))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogBase {
    #[default]
    Natural,
    Two,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Oversampling constant, must be positive.
    pub c1: f64,
    /// Exact number of Kaczmarz steps; overrides the formula.
    pub n_override: Option<u64>,
    /// Seed of the sample stream when the library draws the samples itself.
    pub seed: u64,
    pub log_base: LogBase,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            c1: 3.5,
            n_override: None,
            seed: 0,
            log_base: LogBase::Natural,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c1.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "c1 must be positive, got {}",
                self.c1
            )));
        }
        if self.n_override == Some(0) {
            return Err(Error::InvalidParameter(
                "sample count must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Number of Kaczmarz steps for an embedding of dimension `p` at scale `m`.
    pub fn sample_count(&self, p: usize, m: u32) -> Result<u64> {
        self.validate()?;
        Ok(match self.n_override {
            Some(n) => n,
            None => required_samples(self.c1, p, m, self.log_base)?,
        })
    }
}

/// `ceil(c1 p log(2^m))`, at least 1.
pub fn required_samples(c1: f64, p: usize, m: u32, base: LogBase) -> Result<u64> {
    let log = match base {
        LogBase::Natural => m as f64 * std::f64::consts::LN_2,
        LogBase::Two => m as f64,
    };
    let n = (c1 * p as f64 * log).ceil();
    if n.is_nan() || n >= u64::MAX as f64 {
        return Err(Error::Overflow("sample count"));
    }
    Ok((n as u64).max(1))
}

/// Projects `w` onto `{v : <row, v> = b}`; `norm_sq` must be `|row|^2`.
/// Returns the residual `b - <row, w>` before the update.
#[inline]
pub fn kaczmarz_step(w: &mut [f64], row: &SparseEmbedding, b: f64, norm_sq: f64) -> Result<f64> {
    if norm_sq.is_nan() || norm_sq <= 0.0 {
        return Err(Error::DegenerateRow(norm_sq));
    }
    let residual = b - row.dot(w);
    row.axpy_into(residual / norm_sq, w);
    Ok(residual)
}

/// Kaczmarz iterate with operation counters.
#[derive(Debug, Clone)]
pub struct KaczmarzSolver {
    weights: Vec<f64>,
    steps: u64,
    entry_ops: u64,
}

impl KaczmarzSolver {
    pub fn new(p: usize) -> Self {
        Self::from_weights(vec![0.0; p])
    }

    pub fn from_weights(weights: Vec<f64>) -> Self {
        KaczmarzSolver {
            weights,
            steps: 0,
            entry_ops: 0,
        }
    }

    pub fn step(&mut self, row: &SparseEmbedding, b: f64, norm_sq: f64) -> Result<f64> {
        let r = kaczmarz_step(&mut self.weights, row, b, norm_sq)?;
        self.steps += 1;
        // One read in the dot product and one update per stored entry.
        self.entry_ops += 2 * row.nnz() as u64;
        Ok(r)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Sparse entries touched so far.
    pub fn entry_ops(&self) -> u64 {
        self.entry_ops
    }
}

/// Fitted model `x -> <w, Psi(x)> + centering`.
#[derive(Debug, Clone)]
pub struct Approximant {
    pub weights: Vec<f64>,
    pub centering: f64,
    pub c1: f64,
    pub seed: u64,
    index: TripleIndex,
}

/// Counters from one call to [`fit_with_stats`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitStats {
    pub steps: u64,
    pub entry_ops: u64,
}

/// Runs `n` Kaczmarz steps over the first `n` samples of the stream.
pub fn fit<I>(samples: I, d: usize, m: u32, config: &FitConfig) -> Result<Approximant>
where
    I: IntoIterator<Item = Sample>,
{
    fit_with_stats(samples, d, m, config).map(|(a, _)| a)
}

pub fn fit_with_stats<I>(
    samples: I,
    d: usize,
    m: u32,
    config: &FitConfig,
) -> Result<(Approximant, FitStats)>
where
    I: IntoIterator<Item = Sample>,
{
    let index = TripleIndex::new(d, m)?;
    let n = config.sample_count(index.len(), m)?;
    let norm_sq = index.norm_sq();
    let mut solver = KaczmarzSolver::new(index.len());
    let mut row = SparseEmbedding::with_capacity(index.nnz());
    let mut centering = None;
    for sample in samples.into_iter().take(n as usize) {
        if sample.point.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: sample.point.dim(),
            });
        }
        let c = *centering.get_or_insert(sample.value);
        index.embed_unchecked(sample.point.coords(), &mut row);
        solver.step(&row, sample.value - c, norm_sq)?;
    }
    if solver.steps() < n {
        return Err(Error::InsufficientSamples {
            needed: n,
            got: solver.steps(),
        });
    }
    let stats = FitStats {
        steps: solver.steps(),
        entry_ops: solver.entry_ops(),
    };
    let model = Approximant {
        weights: solver.into_weights(),
        centering: centering.unwrap_or(0.0),
        c1: config.c1,
        seed: config.seed,
        index,
    };
    Ok((model, stats))
}

/// Fits `f` from its own uniform sample stream seeded with `config.seed`.
pub fn fit_function<F>(f: F, d: usize, m: u32, config: &FitConfig) -> Result<Approximant>
where
    F: Fn(&[f64]) -> f64,
{
    fit(
        crate::sampling::uniform_samples(f, d, config.seed),
        d,
        m,
        config,
    )
}

const MAGIC: &[u8; 4] = b"MHKZ";
const FORMAT_VERSION: u16 = 1;
/// Tag of the canonical triple order (k, live axes, levels, offsets).
const LAYOUT_TAG: u16 = 1;

impl Approximant {
    pub fn from_parts(d: usize, m: u32, weights: Vec<f64>, centering: f64) -> Result<Self> {
        let index = TripleIndex::new(d, m)?;
        if weights.len() != index.len() {
            return Err(Error::PlanSizeMismatch {
                expected: index.len(),
                actual: weights.len(),
            });
        }
        Ok(Approximant {
            weights,
            centering,
            c1: 0.0,
            seed: 0,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.index.dim()
    }

    pub fn scale(&self) -> u32 {
        self.index.scale()
    }

    pub fn index(&self) -> &TripleIndex {
        &self.index
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let mut row = SparseEmbedding::with_capacity(self.index.nnz());
        self.evaluate_with(x, &mut row)
    }

    /// [`Approximant::evaluate`] with a caller-owned embedding buffer.
    pub fn evaluate_with(&self, x: &[f64], row: &mut SparseEmbedding) -> Result<f64> {
        check_point(x, self.dim())?;
        Ok(self.evaluate_unchecked(x, row))
    }

    #[inline]
    pub(crate) fn evaluate_unchecked(&self, x: &[f64], row: &mut SparseEmbedding) -> f64 {
        self.index.embed_unchecked(x, row);
        row.dot(&self.weights) + self.centering
    }

    /// Evaluates a batch of points in parallel.
    pub fn evaluate_many(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        points
            .par_iter()
            .map_init(
                || SparseEmbedding::with_capacity(self.index.nnz()),
                |row, x| self.evaluate_with(x, row),
            )
            .collect()
    }

    /// Integral over the unit cube. Only the `2^m` indicator coordinates
    /// (k = 0) have nonzero mean, each equal to `2^-m`.
    pub fn integrate(&self) -> f64 {
        let block = self.index.indicator_block_len();
        let sum: f64 = self.weights[..block].iter().sum();
        sum / block as f64 + self.centering
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let p = self.weights.len() as u64;
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&LAYOUT_TAG.to_le_bytes())?;
        out.write_all(&(self.dim() as u32).to_le_bytes())?;
        out.write_all(&self.scale().to_le_bytes())?;
        out.write_all(&self.c1.to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        out.write_all(&self.centering.to_le_bytes())?;
        out.write_all(&p.to_le_bytes())?;
        for w in &self.weights {
            out.write_all(&w.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
            let mut buf = [0u8; N];
            r.read_exact(&mut buf)
                .map_err(|e| Error::Format(format!("truncated model file: {e}")))?;
            Ok(buf)
        }
        if &take::<4>(&mut input)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes(take(&mut input)?);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let layout = u16::from_le_bytes(take(&mut input)?);
        if layout != LAYOUT_TAG {
            return Err(Error::Format(format!("unknown layout tag {layout}")));
        }
        let d = u32::from_le_bytes(take(&mut input)?) as usize;
        let m = u32::from_le_bytes(take(&mut input)?);
        let c1 = f64::from_le_bytes(take(&mut input)?);
        let seed = u64::from_le_bytes(take(&mut input)?);
        let centering = f64::from_le_bytes(take(&mut input)?);
        let p = u64::from_le_bytes(take(&mut input)?);
        let index = TripleIndex::new(d, m)?;
        if p != index.len() as u64 {
            return Err(Error::Format(format!(
                "header declares {p} weights, layout (d={d}, m={m}) has {}",
                index.len()
            )));
        }
        let mut weights = Vec::with_capacity(index.len());
        for _ in 0..p {
            weights.push(f64::from_le_bytes(take(&mut input)?));
        }
        if input.read(&mut [0u8; 1])? != 0 {
            return Err(Error::Format("trailing bytes after weights".into()));
        }
        Ok(Approximant {
            weights,
            centering,
            c1,
            seed,
            index,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }
}

/// `x + gamma` on the torus. Coordinates that land above 1 wrap around;
/// 1 itself is kept, so a zero shift is the identity.
#[inline]
pub fn torus_shift(x: &[f64], gamma: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend(x.iter().zip(gamma).map(|(&t, &g)| {
        let y = t + g;
        if y > 1.0 {
            y - 1.0
        } else {
            y
        }
    }));
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinConfig {
    /// Shifts `gamma_i`, each coordinate in `[0, 1)`.
    pub shifts: Vec<Vec<f64>>,
}

impl SpinConfig {
    pub fn zero(d: usize) -> Self {
        SpinConfig {
            shifts: vec![vec![0.0; d]],
        }
    }

    /// The zero shift followed by `s - 1` uniform random shifts.
    pub fn random(d: usize, s: usize, seed: u64) -> Self {
        let mut shifts = vec![vec![0.0; d]];
        shifts.extend(crate::sampling::UniformPoints::new(d, seed).take(s.saturating_sub(1)));
        SpinConfig { shifts }
    }
}

/// Average of models fitted on shifted copies of one sample set.
#[derive(Debug, Clone)]
pub struct SpinCycled {
    pub shifts: Vec<Vec<f64>>,
    pub models: Vec<Approximant>,
}

impl SpinCycled {
    pub fn dim(&self) -> usize {
        self.models[0].dim()
    }

    /// `(1/s) sum_i f_i(x + gamma_i)`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check_point(x, self.dim())?;
        let mut row = SparseEmbedding::with_capacity(self.models[0].index.nnz());
        let mut shifted = Vec::with_capacity(x.len());
        Ok(self.evaluate_unchecked(x, &mut row, &mut shifted))
    }

    pub(crate) fn evaluate_unchecked(
        &self,
        x: &[f64],
        row: &mut SparseEmbedding,
        shifted: &mut Vec<f64>,
    ) -> f64 {
        let mut total = 0.0;
        for (gamma, model) in self.shifts.iter().zip(&self.models) {
            torus_shift(x, gamma, shifted);
            total += model.evaluate_unchecked(shifted, row);
        }
        total / self.models.len() as f64
    }

    /// Mean of the member integrals; shifting on the torus preserves the integral.
    pub fn integrate(&self) -> f64 {
        self.models.iter().map(Approximant::integrate).sum::<f64>() / self.models.len() as f64
    }
}

/// Fits one model per shift on `{(X_j + gamma_i, f(X_j))}`; no new function
/// values are needed.
pub fn spin_cycle(
    samples: &[Sample],
    d: usize,
    m: u32,
    config: &FitConfig,
    spin: &SpinConfig,
) -> Result<SpinCycled> {
    if spin.shifts.is_empty() {
        return Err(Error::InvalidParameter(
            "spin cycling needs at least one shift".into(),
        ));
    }
    for gamma in &spin.shifts {
        if gamma.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: gamma.len(),
            });
        }
        if let Some(&g) = gamma.iter().find(|g| !(0.0..1.0).contains(*g)) {
            return Err(Error::InvalidParameter(format!(
                "shift coordinate {g} outside [0, 1)"
            )));
        }
    }
    let models = spin
        .shifts
        .par_iter()
        .map(|gamma| {
            let mut shifted = Vec::with_capacity(d);
            let stream = samples.iter().map(|s| {
                torus_shift(s.point.coords(), gamma, &mut shifted);
                Sample::from_raw(shifted.clone(), s.value)
            });
            fit(stream, d, m, config)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpinCycled {
        shifts: spin.shifts.clone(),
        models,
    })
}

/// Per-step record of the noise decomposition `w*_n = w_n + e_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerStep {
    /// Largest `|w*_n - w_n - e_n|` over all coordinates up to this step.
    pub identity_residual: f64,
    /// `|e_n|^2`.
    pub noise_norm_sq: f64,
    /// `sum_{j <= n} eps_j^2 / |Psi(X_j)|^2`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseLedger {
    pub steps: Vec<LedgerStep>,
}

impl NoiseLedger {
    pub fn max_identity_residual(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.identity_residual)
            .fold(0.0, f64::max)
    }

    /// First step (zero-based) where `|e_n|^2` exceeds the bound by more
    /// than the relative tolerance.
    pub fn first_violation(&self, rel_tol: f64) -> Option<usize> {
        self.steps
            .iter()
            .position(|s| s.noise_norm_sq > s.bound * (1.0 + rel_tol) + f64::MIN_POSITIVE)
    }
}

/// Runs the fit together with the noiseless iteration toward `reference`
/// (weights of the target, usually [`crate::smolyak::best_linear_weights`])
/// and the pure-noise iteration, all on the same rows.
///
/// With centering `c = f(X_1)`, the noiseless right-hand side is
/// `<reference, Psi(X_j)> - c` and the noise is
/// `eps_j = f(X_j) - <reference, Psi(X_j)>`.
pub fn noise_ledger(
    samples: &[Sample],
    d: usize,
    m: u32,
    reference: &[f64],
    config: &FitConfig,
) -> Result<NoiseLedger> {
    check_grid(d, m, GRID_LIMIT)?;
    let index = TripleIndex::new(d, m)?;
    let p = index.len();
    if reference.len() != p {
        return Err(Error::PlanSizeMismatch {
            expected: p,
            actual: reference.len(),
        });
    }
    let n = config.sample_count(p, m)?;
    if (samples.len() as u64) < n {
        return Err(Error::InsufficientSamples {
            needed: n,
            got: samples.len() as u64,
        });
    }
    let mut full = vec![0.0; p];
    let mut clean = vec![0.0; p];
    let mut noise = vec![0.0; p];
    let mut row = SparseEmbedding::with_capacity(index.nnz());
    let centering = samples.first().map_or(0.0, |s| s.value);
    let mut noise_norm_sq = 0.0;
    let mut bound = 0.0;
    let mut identity_residual: f64 = 0.0;
    let mut steps = Vec::with_capacity(n as usize);
    for s in &samples[..n as usize] {
        check_point(s.point.coords(), d)?;
        index.embed_unchecked(s.point.coords(), &mut row);
        let norm_sq = row.norm_sq();
        let target = row.dot(reference);
        let eps = s.value - target;
        let before: f64 = row.iter().map(|(i, _)| noise[i] * noise[i]).sum();
        kaczmarz_step(&mut full, &row, s.value - centering, norm_sq)?;
        kaczmarz_step(&mut clean, &row, target - centering, norm_sq)?;
        kaczmarz_step(&mut noise, &row, eps, norm_sq)?;
        let after: f64 = row.iter().map(|(i, _)| noise[i] * noise[i]).sum();
        noise_norm_sq += after - before;
        bound += eps * eps / norm_sq;
        for (i, _) in row.iter() {
            identity_residual = identity_residual.max((full[i] - clean[i] - noise[i]).abs());
        }
        steps.push(LedgerStep {
            identity_residual,
            noise_norm_sq,
            bound,
        });
    }
    Ok(NoiseLedger { steps })
}
