//! Error study on fBm product functions: fit at each scale, then measure
//! relative L2, max, and integral errors on a fresh uniform test set.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{embedding_dim, SparseEmbedding};
use crate::error::{Error, Result};
use crate::kaczmarz::{fit, spin_cycle, FitConfig, LogBase, Sample, SpinConfig};
use crate::sampling::{derive_seed, uniform_samples, UniformPoints};
use crate::testfn::{PiecewiseLinear, ProductFunction};

/// Scales run by `--full`.
pub const FULL_SCALES: [u32; 2] = [5, 18];

/// Function whose samples are fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunction {
    /// Product of `dim` independent fBm paths with Hurst parameter `hurst`.
    Fbm,
    Constant {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: usize,
    /// Inclusive scale range `[first, last]`.
    pub m_range: [u32; 2],
    pub c1: f64,
    pub hurst: f64,
    /// Exponent of the reference curves.
    pub alpha: f64,
    pub seed: u64,
    pub test_points: usize,
    /// Number of spin-cycling shifts; 1 disables spin cycling.
    pub shifts: usize,
    /// fBm grid exponent `J`.
    pub fbm_levels: u32,
    pub function: TestFunction,
    pub max_p: u64,
    pub max_n: u64,
    /// Fill the `seconds` column; off by default so that reruns are byte-identical.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dim: 3,
            m_range: [5, 12],
            c1: 3.5,
            hurst: 0.8,
            alpha: 0.79,
            seed: 0,
            test_points: 1_000_000,
            shifts: 1,
            fbm_levels: crate::testfn::MAX_FBM_LEVELS,
            function: TestFunction::Fbm,
            max_p: 1 << 26,
            max_n: 2_000_000_000,
            timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn scales(&self) -> std::ops::RangeInclusive<u32> {
        self.m_range[0]..=self.m_range[1]
    }

    fn fit_config(&self, m: u32) -> FitConfig {
        FitConfig {
            c1: self.c1,
            n_override: None,
            seed: derive_seed(self.seed, 1000 + m as u64),
            log_base: LogBase::Natural,
        }
    }

    /// Checks parameters and resource ceilings; returns `(m, n, p)` per scale.
    pub fn plan(&self) -> Result<Vec<(u32, u64, usize)>> {
        if self.dim == 0 {
            return Err(Error::InvalidParameter("dim must be at least 1".into()));
        }
        if self.m_range[0] == 0 || self.m_range[0] > self.m_range[1] {
            return Err(Error::InvalidParameter(format!(
                "scale range {}..{} must be nonempty and start at 1 or later",
                self.m_range[0], self.m_range[1]
            )));
        }
        if self.test_points == 0 {
            return Err(Error::InvalidParameter("test set must be nonempty".into()));
        }
        if self.shifts == 0 {
            return Err(Error::InvalidParameter("shifts must be at least 1".into()));
        }
        self.scales()
            .map(|m| {
                let p = embedding_dim(self.dim, m)?;
                if p > self.max_p as u128 {
                    return Err(Error::ResourceLimit(format!(
                        "p = {p} at m = {m} exceeds max_p = {}",
                        self.max_p
                    )));
                }
                let p = p as usize;
                let n = self.fit_config(m).sample_count(p, m)?;
                if n > self.max_n {
                    return Err(Error::ResourceLimit(format!(
                        "n = {n} at m = {m} exceeds max_n = {}",
                        self.max_n
                    )));
                }
                Ok((m, n, p))
            })
            .collect()
    }

    pub fn test_function(&self) -> Result<ProductFunction> {
        match self.function {
            TestFunction::Fbm => ProductFunction::fbm(
                self.dim,
                self.hurst,
                self.fbm_levels,
                derive_seed(self.seed, 0),
            ),
            TestFunction::Constant { value } => {
                ProductFunction::new(vec![PiecewiseLinear::constant(value); self.dim])
            }
        }
    }
}

/// One row of the error table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub m: u32,
    pub n: u64,
    pub p: u64,
    pub err2: f64,
    pub err_inf: f64,
    pub err_int: f64,
    #[serde(rename = "seconds")]
    pub wall_seconds: f64,
}

fn relative(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Runs every scale of the configuration; records are ordered by `m`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    let plan = config.plan()?;
    let f = config.test_function()?;
    let d = config.dim;
    let exact = f.exact_integral();
    let points: Vec<f64> = UniformPoints::new(d, derive_seed(config.seed, 1))
        .take(config.test_points)
        .flatten()
        .collect();
    let truth: Vec<f64> = points.par_chunks(d).map(|x| f.eval_unchecked(x)).collect();
    let truth_l2 = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
    let truth_max = truth.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    plan.into_par_iter()
        .map(|(m, n, p)| {
            let start = Instant::now();
            let cfg = config.fit_config(m);
            let samples = uniform_samples(|x| f.eval_unchecked(x), d, cfg.seed);
            let (approx, integral): (Vec<f64>, f64) = if config.shifts == 1 {
                let model = fit(samples, d, m, &cfg)?;
                let values = points
                    .par_chunks(d)
                    .map_init(
                        || SparseEmbedding::with_capacity(model.index().nnz()),
                        |row, x| model.evaluate_unchecked(x, row),
                    )
                    .collect();
                (values, model.integrate())
            } else {
                let samples: Vec<Sample> = samples.take(n as usize).collect();
                let spin =
                    SpinConfig::random(d, config.shifts, derive_seed(config.seed, 2000 + m as u64));
                let model = spin_cycle(&samples, d, m, &cfg, &spin)?;
                let values = points
                    .par_chunks(d)
                    .map_init(
                        || {
                            (
                                SparseEmbedding::with_capacity(model.models[0].index().nnz()),
                                Vec::new(),
                            )
                        },
                        |(row, buf), x| model.evaluate_unchecked(x, row, buf),
                    )
                    .collect();
                (values, model.integrate())
            };
            let diff_l2 = truth
                .iter()
                .zip(&approx)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let diff_max = truth
                .iter()
                .zip(&approx)
                .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
            Ok(ExperimentRecord {
                m,
                n,
                p: p as u64,
                err2: relative(diff_l2, truth_l2),
                err_inf: relative(diff_max, truth_max),
                err_int: relative((exact - integral).abs(), exact.abs()),
                wall_seconds: if config.timing {
                    start.elapsed().as_secs_f64()
                } else {
                    0.0
                },
            })
        })
        .collect()
}

/// Reference rates at scale `m` (`eps = 2^-m`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferencePoint {
    pub m: u32,
    /// `eps^alpha`.
    pub lower: f64,
    /// `eps^alpha log(1/eps)^(5/2)`.
    pub upper: f64,
    /// `eps^(alpha + 1/2)`, the heuristic integral rate.
    pub integral: f64,
}

pub fn reference_curves(scales: impl IntoIterator<Item = u32>, alpha: f64) -> Vec<ReferencePoint> {
    scales
        .into_iter()
        .map(|m| {
            let eps = 0.5f64.powi(m as i32);
            ReferencePoint {
                m,
                lower: eps.powf(alpha),
                upper: eps.powf(alpha) * (-eps.ln()).powf(2.5),
                integral: eps.powf(alpha + 0.5),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(TableFormat::Csv),
            "json" => Ok(TableFormat::Json),
            other => Err(Error::InvalidParameter(format!("unknown format {other:?}"))),
        }
    }
}

pub const CSV_HEADER: &str = "m,n,p,err2,err_inf,err_int,seconds";

/// JSON Schema (draft 2020-12) of the JSON table.
pub const RECORDS_SCHEMA: &str = r#"{
  "$schema": "https://json-schema.org/draft/2020-12/schema",
  "title": "experiment records",
  "type": "array",
  "minItems": 1,
  "items": {
    "type": "object",
    "additionalProperties": false,
    "required": ["m", "n", "p", "err2", "err_inf", "err_int", "seconds"],
    "properties": {
      "m": { "type": "integer", "minimum": 1 },
      "n": { "type": "integer", "minimum": 1 },
      "p": { "type": "integer", "minimum": 1 },
      "err2": { "type": "number", "minimum": 0 },
      "err_inf": { "type": "number", "minimum": 0 },
      "err_int": { "type": "number", "minimum": 0 },
      "seconds": { "type": "number", "minimum": 0 }
    }
  }
}"#;

/// Shortest round-trip scientific notation, padded to at least five
/// significant digits, with a signed two-digit exponent: `2.1515E-01`.
pub fn format_sci(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let s = format!("{v:e}");
    let (mantissa, exp) = s.split_once('e').expect("`{:e}` always has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, digits) = mantissa
        .strip_prefix('-')
        .map_or(("", mantissa), |d| ("-", d));
    let (lead, frac) = digits.split_once('.').unwrap_or((digits, ""));
    let mut out = format!("{sign}{lead}.{frac:0<4}");
    let _ = write!(out, "E{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    out
}

pub fn write_table<W: Write>(
    records: &[ExperimentRecord],
    format: TableFormat,
    mut out: W,
) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidParameter("no records to write".into()));
    }
    match format {
        TableFormat::Csv => {
            writeln!(out, "{CSV_HEADER}")?;
            for r in records {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    r.m,
                    r.n,
                    r.p,
                    format_sci(r.err2),
                    format_sci(r.err_inf),
                    format_sci(r.err_int),
                    format_sci(r.wall_seconds)
                )?;
            }
        }
        TableFormat::Json => {
            serde_json::to_writer_pretty(&mut out, records)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes the table to `path`; I/O errors carry the path.
pub fn emit_table(
    records: &[ExperimentRecord],
    format: TableFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_table(records, format, BufWriter::new(file)).map_err(|e| match e {
        Error::Stream(source) => Error::io(path, source),
        other => other,
    })
}

pub fn read_table<R: Read>(format: TableFormat, input: R) -> Result<Vec<ExperimentRecord>> {
    match format {
        TableFormat::Json => Ok(serde_json::from_reader(input)?),
        TableFormat::Csv => {
            let mut reader = csv::Reader::from_reader(input);
            let header = reader
                .headers()
                .map_err(|e| Error::Format(e.to_string()))?
                .iter()
                .collect::<Vec<_>>()
                .join(",");
            if header != CSV_HEADER {
                return Err(Error::Format(format!("unexpected header {header:?}")));
            }
            reader
                .deserialize()
                .map(|r| r.map_err(|e| Error::Format(e.to_string())))
                .collect()
        }
    }
}
