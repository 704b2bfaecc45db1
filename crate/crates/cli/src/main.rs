use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use haarfit::experiment::{
    emit_table, reference_curves, run_experiment, write_table, ExperimentConfig, TableFormat,
    FULL_SCALES,
};
use haarfit::kaczmarz::{fit, Approximant, FitConfig, Sample};
use haarfit::testfn::FbmGenerator;

#[derive(Parser)]
#[command(
    name = "haarfit",
    version,
    about = "Fit mixed Hölder functions from random samples"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Error table for fBm product functions across scales.
    Experiment(ExperimentArgs),
    /// Fit a model to samples from a CSV file (coordinate columns, then value).
    Fit(FitArgs),
    /// Evaluate a model at points from a CSV file.
    Eval(EvalArgs),
    /// Print the integral of a model over the unit cube.
    Integrate(IntegrateArgs),
    /// Write one fBm path as `t,value` CSV.
    Fbm(FbmArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON configuration; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    /// Single scale m.
    #[arg(long, conflicts_with = "scales")]
    scale: Option<u32>,
    /// Inclusive scale range `a..b`.
    #[arg(long, value_parser = parse_scales)]
    scales: Option<[u32; 2]>,
    /// Run scales 5..18.
    #[arg(long, conflicts_with_all = ["scale", "scales"])]
    full: bool,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    hurst: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    test_points: Option<usize>,
    /// Number of spin-cycling shifts (1 = none).
    #[arg(long)]
    shifts: Option<usize>,
    /// fBm grid exponent J (2^J intervals).
    #[arg(long)]
    fbm_levels: Option<u32>,
    /// Record wall time per scale (output is then no longer reproducible).
    #[arg(long)]
    timing: bool,
    #[arg(long, default_value = "csv")]
    format: TableFormat,
    /// Output file; standard output if omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write the reference curves as CSV to this file.
    #[arg(long)]
    references: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    /// Number of coordinate columns; defaults to all columns but the last.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    scale: u32,
    #[arg(long, default_value_t = 3.5)]
    c1: f64,
    /// Exact number of Kaczmarz steps instead of ceil(c1 p ln 2^m).
    #[arg(long, conflicts_with = "use_all")]
    samples: Option<u64>,
    /// Use every row of the input as one step.
    #[arg(long)]
    use_all: bool,
    /// Recorded in the model file.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV of points with one column per coordinate.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct IntegrateArgs {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct FbmArgs {
    #[arg(long, default_value_t = 0.8)]
    hurst: f64,
    #[arg(long, default_value_t = 14)]
    levels: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_scales(s: &str) -> std::result::Result<[u32; 2], String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected a..b, got {s:?}"))?;
    let a: u32 = a
        .trim()
        .parse()
        .map_err(|e| format!("bad scale {a:?}: {e}"))?;
    let b: u32 = b
        .trim()
        .parse()
        .map_err(|e| format!("bad scale {b:?}: {e}"))?;
    Ok([a, b])
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header = reader.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        let row = record
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .with_context(|| format!("{}: row {} is not numeric", path.display(), i + 1))?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let mut text = String::new();
            File::open(path)
                .and_then(|mut f| f.read_to_string(&mut text))
                .with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::from_json(&text)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(v) = args.dim {
        cfg.dim = v;
    }
    if let Some(m) = args.scale {
        cfg.m_range = [m, m];
    }
    if let Some(r) = args.scales {
        cfg.m_range = r;
    }
    if args.full {
        cfg.m_range = FULL_SCALES;
    }
    if let Some(v) = args.c1 {
        cfg.c1 = v;
    }
    if let Some(v) = args.hurst {
        cfg.hurst = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.test_points {
        cfg.test_points = v;
    }
    if let Some(v) = args.shifts {
        cfg.shifts = v;
    }
    if let Some(v) = args.fbm_levels {
        cfg.fbm_levels = v;
    }
    cfg.timing |= args.timing;

    let records = run_experiment(&cfg)?;
    match &args.output {
        Some(path) => emit_table(&records, args.format, path)?,
        None => write_table(&records, args.format, open_output(None)?)?,
    }
    if let Some(path) = &args.references {
        let mut out = open_output(Some(path))?;
        writeln!(out, "m,lower,upper,integral")?;
        for r in reference_curves(cfg.scales(), cfg.alpha) {
            writeln!(out, "{},{:e},{:e},{:e}", r.m, r.lower, r.upper, r.integral)?;
        }
        out.flush()?;
    }
    Ok(())
}

fn fit_cmd(args: FitArgs) -> Result<()> {
    let (header, rows) = read_rows(&args.input)?;
    let d = match args.dim {
        Some(d) => d,
        None if header.len() >= 2 => header.len() - 1,
        None => bail!(
            "{}: need at least one coordinate column and a value column",
            args.input.display()
        ),
    };
    if rows.is_empty() {
        bail!("{}: no samples", args.input.display());
    }
    let n_override = if args.use_all {
        Some(rows.len() as u64)
    } else {
        args.samples
    };
    let config = FitConfig {
        c1: args.c1,
        n_override,
        seed: args.seed,
        ..FitConfig::default()
    };
    let samples = rows
        .into_iter()
        .enumerate()
        .map(|(i, mut row)| {
            if row.len() != d + 1 {
                bail!(
                    "row {}: expected {} columns, found {}",
                    i + 1,
                    d + 1,
                    row.len()
                );
            }
            let value = row.pop().expect("nonempty row");
            Sample::new(row, value).with_context(|| format!("row {}", i + 1))
        })
        .collect::<Result<Vec<_>>>()?;
    let model = fit(samples, d, args.scale, &config).context("fitting")?;
    model.save(&args.output)?;
    eprintln!(
        "fitted d={} m={} p={} to {}",
        d,
        args.scale,
        model.weights.len(),
        args.output.display()
    );
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let model = Approximant::load(&args.model)?;
    let (header, rows) = read_rows(&args.input)?;
    if header.len() != model.dim() {
        bail!(
            "{} has {} columns, model expects {}",
            args.input.display(),
            header.len(),
            model.dim()
        );
    }
    let values = model.evaluate_many(&rows)?;
    let mut out = open_output(args.output.as_deref())?;
    writeln!(out, "{},value", header.join(","))?;
    for (row, v) in rows.iter().zip(values) {
        let coords: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(out, "{},{}", coords.join(","), v)?;
    }
    out.flush()?;
    Ok(())
}

fn fbm_cmd(args: FbmArgs) -> Result<()> {
    let path = FbmGenerator::new(args.hurst, args.levels)?.generate(args.seed)?;
    let mut out = open_output(args.output.as_deref())?;
    path.write_csv(&mut out)?;
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Experiment(a) => experiment(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Integrate(a) => {
            let model = Approximant::load(&a.model)?;
            println!("{}", model.integrate());
            Ok(())
        }
        Command::Fbm(a) => fbm_cmd(a),
    }
}
