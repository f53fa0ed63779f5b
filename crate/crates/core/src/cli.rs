//! `avr analyze | sweep | generate`.
//!
//! Exit status: 0 on success (including a quiet report), 2 parse error,
//! 3 configuration error, 4 degenerate data, 1 I/O failure.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::detect::{self, DetectionPolicy, NoiseReference};
use crate::engine::{self, AnalysisConfig, WindowResult};
use crate::error::{Error, Result};
use crate::ingest::{
    generate_synthetic, parse_series, write_series, MomentSource, PriceSeries, SeriesFormat,
    SyntheticKind, SyntheticSpec, Table,
};
use crate::mfcore::QGrid;
use crate::report::Report;

#[derive(Debug, Parser)]
#[command(
    name = "avr",
    version,
    about = "Multifractal area-variation-rate crash indicator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one configuration and write the zeta trace, spectra, noise reference and report.
    Analyze(AnalyzeArgs),
    /// Run the (N, T, l) robustness sweep and classify events.
    Sweep(SweepArgs),
    /// Write a seeded synthetic series.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Plain,
}

impl From<FormatArg> for SeriesFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => SeriesFormat::CsvTwoColumn,
            FormatArg::Plain => SeriesFormat::PlainValues,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
enum KindArg {
    WhiteNoise,
    WhiteNoiseWithCrash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum)]
enum Emit {
    Trace,
    Spectra,
    Noise,
    Report,
}

#[derive(Debug, Clone, Args)]
struct SyntheticArgs {
    /// Number of values.
    #[arg(long)]
    length: Option<usize>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    mean: f64,
    #[arg(long, default_value_t = 1.0)]
    variance: f64,
    #[arg(long)]
    crash_index: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    crash_magnitude: Option<f64>,
}

impl SyntheticArgs {
    fn spec(&self, kind: KindArg, seed: u64) -> Result<SyntheticSpec> {
        let length = self
            .length
            .ok_or_else(|| Error::InvalidSpec("--length is required for synthetic input".into()))?;
        let spec = SyntheticSpec {
            kind: match kind {
                KindArg::WhiteNoise => SyntheticKind::WhiteNoise,
                KindArg::WhiteNoiseWithCrash => SyntheticKind::WhiteNoiseWithCrash,
            },
            length,
            mean: self.mean,
            variance: self.variance,
            seed,
            crash_index: self.crash_index,
            crash_magnitude: self.crash_magnitude,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Args)]
struct InputArgs {
    /// Series file to analyse.
    #[arg(long, conflicts_with = "synthetic")]
    input: Option<PathBuf>,
    /// Input file layout.
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Analyse a generated series instead of a file.
    #[arg(long, value_enum)]
    synthetic: Option<KindArg>,
    /// Seed of the generated input series.
    #[arg(long, default_value_t = 1)]
    input_seed: u64,
    #[command(flatten)]
    synth: SyntheticArgs,
}

impl InputArgs {
    fn load(&self) -> Result<PriceSeries> {
        match (&self.input, self.synthetic) {
            (Some(path), None) => {
                let file = File::open(path)?;
                let series = parse_series(file, self.format.into())?;
                let name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
                PriceSeries::with_labels(
                    name.unwrap_or_default(),
                    series.labels().map(<[String]>::to_vec),
                    series.values().to_vec(),
                )
            }
            (None, Some(kind)) => generate_synthetic(&self.synth.spec(kind, self.input_seed)?),
            _ => Err(Error::InvalidConfig(
                "exactly one of --input or --synthetic is required".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Args)]
struct ConfigArgs {
    /// Window size N (increments per window).
    #[arg(long, default_value_t = 1000)]
    window: usize,
    /// Increment lag T.
    #[arg(long, default_value_t = 1)]
    lag: usize,
    /// Window shift l.
    #[arg(long, default_value_t = 1)]
    shift: usize,
    #[arg(long, default_value_t = -5.0, allow_negative_numbers = true)]
    qmin: f64,
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    qmax: f64,
    #[arg(long, default_value_t = 0.1)]
    dq: f64,
    /// First series index used.
    #[arg(long, default_value_t = 0)]
    t0: usize,
    /// Windows without a zeta value at the start.
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    /// Exponential forgetting factor for the running mean area.
    #[arg(long)]
    forgetting: Option<f64>,
    /// Seed of the white-noise reference.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    noise_floor: f64,
    #[arg(long, default_value_t = 10.0)]
    jump_factor: f64,
    #[arg(long, default_value_t = 0.05)]
    lobe_prominence: f64,
    #[arg(long, default_value_t = 0.8)]
    persistence: f64,
    /// Use the noise reference's maximum zeta as the noise floor.
    #[arg(long)]
    measured_floor: bool,
    /// Match the noise reference to lag-one increments instead of levels.
    #[arg(long)]
    match_increments: bool,
    /// Date label for lead-time reporting.
    #[arg(long)]
    reference_date: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

impl ConfigArgs {
    fn analysis(&self) -> Result<AnalysisConfig> {
        Ok(AnalysisConfig {
            window: self.window,
            lag: self.lag,
            shift: self.shift,
            grid: QGrid::new(self.qmin, self.qmax, self.dq)?,
            t0: self.t0,
            warmup: self.warmup,
            forgetting: self.forgetting,
            keep_spectra: false,
        })
    }

    fn policy(&self) -> DetectionPolicy {
        DetectionPolicy {
            noise_floor: self.noise_floor,
            jump_factor: self.jump_factor,
            lobe_prominence: self.lobe_prominence,
            sweep_persistence: self.persistence,
            moment_source: if self.match_increments {
                MomentSource::Increments
            } else {
                MomentSource::Levels
            },
            ..DetectionPolicy::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Outputs to write.
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "trace,spectra,noise,report"
    )]
    emit: Vec<Emit>,
}

#[derive(Debug, Clone, Args)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_delimiter = ',', default_value = "500,1000,1500")]
    sweep_windows: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,5")]
    sweep_lags: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,5")]
    sweep_shifts: Vec<usize>,
}

#[derive(Debug, Clone, Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "white-noise")]
    kind: KindArg,
    #[command(flatten)]
    synth: SyntheticArgs,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value = "plain")]
    format: FormatArg,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 3 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Generate(a) => cmd_generate(&a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match workers {
        Some(w) => engine::with_workers(w, f),
        None => f(),
    }
}

fn write_table(dir: &Path, name: &str, table: &Table) -> Result<()> {
    table.write(BufWriter::new(File::create(dir.join(name))?))
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let series = args.input.load()?;
    let c = &args.config;
    let mut config = c.analysis()?;
    config.keep_spectra = args.emit.contains(&Emit::Spectra);
    let mut policy = c.policy();
    policy.validate()?;
    config.validate(series.len())?;
    fs::create_dir_all(&c.out)?;

    let (results, noise) = with_workers(c.workers, || -> Result<_> {
        let results = engine::run(&series, &config)?;
        let noise = if args.emit.contains(&Emit::Noise) || c.measured_floor {
            detect::noise_run(&series, &config, &policy, c.seed)?
        } else {
            None
        };
        Ok((results, noise))
    })?;

    let reference = noise
        .as_ref()
        .map(|n| detect::summarize(n).map_or(NoiseReference::Undefined, NoiseReference::Measured));
    let needs_noise = args.emit.contains(&Emit::Noise) || c.measured_floor;
    let reference = match (needs_noise, reference) {
        (true, None) => Some(NoiseReference::Degenerate),
        (_, r) => r,
    };
    if c.measured_floor {
        if let Some(r) = &reference {
            policy = policy.with_measured_floor(r);
        }
    }

    if args.emit.contains(&Emit::Trace) {
        write_table(&c.out, "zeta_trace.csv", &engine::trace_table(&results))?;
    }
    if args.emit.contains(&Emit::Spectra) {
        if let Some(t) = engine::accumulated_spectra_table(&results) {
            write_table(&c.out, "spectra.csv", &t)?;
        }
    }
    if args.emit.contains(&Emit::Noise) {
        write_table(
            &c.out,
            "noise_reference.csv",
            &noise_table(&results, noise.as_deref()),
        )?;
    }

    let events = detect::detect_events(&series, &config, &results, &policy)?;
    if args.emit.contains(&Emit::Spectra) {
        for e in &events {
            if let Some(n) = e.base_window {
                if let Some(s) = &results[n - 1].spectrum {
                    write_table(&c.out, &format!("spectrum_n{n}.csv"), &s.to_table())?;
                }
            }
        }
    }
    if args.emit.contains(&Emit::Report) {
        let mut report = Report::new(
            &series,
            &results,
            events,
            &policy,
            c.reference_date.as_deref(),
        );
        report.noise = reference;
        fs::write(c.out.join("report.txt"), report.to_text())?;
    }
    Ok(())
}

/// Columns `n, t_prime, zeta, zeta_noise`; the noise column is blank when the reference is degenerate.
fn noise_table(results: &[WindowResult], noise: Option<&[WindowResult]>) -> Table {
    let mut t = Table::new(["n", "t_prime", "zeta", "zeta_noise"]);
    for (i, r) in results.iter().enumerate() {
        let nz = noise.and_then(|n| n.get(i)).and_then(|w| w.zeta);
        t.push(vec![
            r.n.to_string(),
            r.t_prime.to_string(),
            r.zeta.map(|z| z.to_string()).unwrap_or_default(),
            nz.map(|z| z.to_string()).unwrap_or_default(),
        ]);
    }
    t
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let series = args.input.load()?;
    let c = &args.config;
    let config = c.analysis()?;
    let mut policy = DetectionPolicy {
        sweep_windows: args.sweep_windows.clone(),
        sweep_lags: args.sweep_lags.clone(),
        sweep_shifts: args.sweep_shifts.clone(),
        ..c.policy()
    };
    policy.validate()?;
    config.validate(series.len())?;
    fs::create_dir_all(&c.out)?;

    let (outcome, reference) = with_workers(c.workers, || -> Result<_> {
        let reference = if c.measured_floor {
            Some(detect::noise_reference(&series, &config, &policy, c.seed)?)
        } else {
            None
        };
        if let Some(r) = &reference {
            policy = policy.clone().with_measured_floor(r);
        }
        Ok((detect::sweep(&series, &config, &policy)?, reference))
    })?;

    for (key, trace) in &outcome.traces {
        write_table(
            &c.out,
            &format!("trace_{key}.csv"),
            &engine::trace_table(trace),
        )?;
    }
    let mut report = Report::new(
        &series,
        &outcome.base,
        outcome.events.clone(),
        &policy,
        c.reference_date.as_deref(),
    );
    report.noise = reference;
    report.configurations = outcome.traces.iter().map(|(k, _)| *k).collect();
    report.skipped = outcome.skipped.clone();
    fs::write(c.out.join("report.txt"), report.to_text())?;
    Ok(())
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let spec = args.synth.spec(args.kind, args.seed)?;
    let series = generate_synthetic(&spec)?;
    let file = BufWriter::new(File::create(&args.out)?);
    write_series(&series, args.format.into(), file)
}
