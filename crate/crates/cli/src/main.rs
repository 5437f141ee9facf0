//! `sicrx` command-line front end.
//!
//! Exit codes: 0 clean or recovered, 2 spoofing detected and not recovered,
//! 3 runtime error, 64 usage error.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sicrx::receiver::{
    benchmark, run, sweep, write_sweep_csv, IqFileSource, ReceiverConfig, RectifierMode, RunReport,
    ScenarioSource, SweepKind, SweepParams,
};
use sicrx::scenario::{Scenario, ScenarioConfig};
use sicrx::{Error, Execution};

const EXIT_ERROR: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "sicrx", version, about = "GPS L1 C/A receiver with spoofing recovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a scenario description and/or its IQ samples.
    GenScenario(GenArgs),
    /// Run the receiver over a scenario or an IQ file.
    Run(RunArgs),
    /// Run batches of static attacks over a parameter grid.
    Sweep(SweepArgs),
    /// Time acquisition and cancellation iterations on an IQ file.
    Benchmark(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Clean,
    Static,
    Seamless,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rectifier {
    Auto,
    On,
    Off,
}

impl From<Rectifier> for RectifierMode {
    fn from(r: Rectifier) -> Self {
        match r {
            Rectifier::Auto => RectifierMode::Auto,
            Rectifier::On => RectifierMode::On,
            Rectifier::Off => RectifierMode::Off,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Label {
    Adversarial,
    Legitimate,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    PeakSeparation,
    PowerAdvantage,
}

#[derive(clap::Args)]
struct GenArgs {
    /// Start from this scenario file instead of a preset.
    #[arg(long, conflicts_with = "preset")]
    from: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "static")]
    preset: Preset,
    /// Spoofed displacement, m.
    #[arg(long, default_value_t = 1500.0)]
    offset: f64,
    /// Attacker power advantage, dB.
    #[arg(long, default_value_t = 3.0)]
    advantage: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Seconds of samples.
    #[arg(long)]
    duration: Option<f64>,
    /// Hz.
    #[arg(long)]
    sample_rate: Option<f64>,
    /// Scenario TOML output; printed to stdout when neither output is given.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// IQ sample output.
    #[arg(long)]
    iq: Option<PathBuf>,
    #[arg(long)]
    sequential: bool,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario TOML (composed on the fly) or IQ file.
    input: PathBuf,
    /// Scenario the IQ file was generated from, for accuracy against truth.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Receiver settings TOML.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    rectifier: Option<Rectifier>,
    /// Peak label from an external maneuver check.
    #[arg(long, value_enum)]
    label: Option<Label>,
    /// Seed of the simulated maneuver.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON report output.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-epoch track CSV output.
    #[arg(long)]
    track: Option<PathBuf>,
    /// Print the JSON report instead of the text summary.
    #[arg(long)]
    json: bool,
    #[arg(long)]
    sequential: bool,
}

#[derive(clap::Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Comma-separated grid; an empty string gives an empty table.
    #[arg(long)]
    values: Option<String>,
    /// Comma-separated scenario seeds.
    #[arg(long, default_value = "1,2,3")]
    seeds: String,
    /// Displacement of a power sweep, m.
    #[arg(long)]
    offset: Option<f64>,
    /// Advantage of a separation sweep, dB.
    #[arg(long)]
    advantage: Option<f64>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    sample_rate: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    rectifier: Option<Rectifier>,
    /// CSV output; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    sequential: bool,
}

#[derive(clap::Args)]
struct BenchArgs {
    iq: PathBuf,
    #[arg(long, default_value_t = 5)]
    iterations: usize,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    sequential: bool,
}

fn exec(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn is_toml(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, Error> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().map_err(|_| Error::InvalidArgument(format!("bad {what} {v:?}"))))
        .collect()
}

fn receiver_config(path: Option<&Path>) -> Result<ReceiverConfig, Error> {
    let Some(path) = path else {
        return Ok(ReceiverConfig::default());
    };
    let text = std::fs::read_to_string(path)?;
    let cfg: ReceiverConfig =
        toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

fn gen_scenario(a: GenArgs) -> Result<u8, Error> {
    let mut cfg = match (&a.from, a.preset) {
        (Some(p), _) => ScenarioConfig::load(p)?,
        (None, Preset::Clean) => ScenarioConfig::default(),
        (None, Preset::Static) => ScenarioConfig::static_attack(a.offset, a.advantage),
        (None, Preset::Seamless) => ScenarioConfig::seamless(a.advantage, a.offset),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(d) = a.duration {
        cfg.duration = d;
    }
    if let Some(r) = a.sample_rate {
        cfg.sample_rate = r;
    }
    let scenario = cfg.clone().build()?;
    if let Some(p) = &a.output {
        cfg.save(p)?;
    }
    if let Some(p) = &a.iq {
        scenario.write_iq(p, exec(a.sequential))?;
    }
    if a.output.is_none() && a.iq.is_none() {
        print!("{}", cfg.to_toml_string()?);
    }
    Ok(0)
}

fn summary(r: &RunReport, out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "final mode: {}", r.final_mode)?;
    writeln!(out, "duration: {:.1} s at {:.0} Hz", r.duration, r.sample_rate)?;
    for t in &r.transitions {
        writeln!(out, "  {:7.2} s  {} -> {}", t.time, t.from, t.to)?;
    }
    for e in &r.epochs {
        let fix = e.fix.as_ref();
        let err = fix
            .and_then(|f| f.horizontal_error())
            .map(|h| format!("{h:.1} m"))
            .unwrap_or_else(|| "-".into());
        writeln!(
            out,
            "epoch {:3} t {:6.2} {:14} fix {:10} error {}",
            e.epoch,
            e.time,
            e.mode.as_str(),
            fix.map(|f| f.kind.as_str()).unwrap_or("none"),
            err
        )?;
    }
    for rec in &r.recovery {
        writeln!(
            out,
            "recovery PRN {:2}: {} iteration(s), {:.1} dB attenuation, {}",
            rec.prn,
            rec.iterations,
            rec.total_attenuation_db(),
            if rec.recovered_peak.is_some() { "recovered" } else { "failed" }
        )?;
    }
    if !r.rectified_prns.is_empty() {
        writeln!(out, "rectified PRNs: {:?}", r.rectified_prns)?;
    }
    let acc = |name: &str, a: Option<sicrx::receiver::Accuracy>, out: &mut dyn Write| -> io::Result<()> {
        if let Some(a) = a {
            writeln!(
                out,
                "{name}: {} fixes, mean offset {:.2} m (east {:.2}, north {:.2}), max {:.2} m",
                a.fixes, a.mean_offset, a.mean_east, a.mean_north, a.max_offset
            )?;
        }
        Ok(())
    };
    acc("clean accuracy", r.clean_accuracy, out)?;
    acc("recovered accuracy", r.accuracy, out)?;
    acc("spoofed accuracy", r.spoofed_accuracy, out)?;
    let t = &r.timing;
    writeln!(
        out,
        "timing: {:.2} s total, {:.2} s acquisition, {} cancellation iteration(s), {:.3e} samples/s",
        t.total,
        t.acquisition,
        t.cancellation_iterations.len(),
        t.samples_per_second
    )
}

fn run_cmd(a: RunArgs) -> Result<u8, Error> {
    let mut config = receiver_config(a.config.as_deref())?;
    if let Some(r) = a.rectifier {
        config.rectifier = r.into();
    }
    if let Some(l) = a.label {
        config.external_label = Some(matches!(l, Label::Adversarial));
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    config.sequential = a.sequential;
    let report = if is_toml(&a.input) {
        let s = Scenario::new(ScenarioConfig::load(&a.input)?)?;
        run(&mut ScenarioSource::new(&s, config.execution()), Some(&s), &config)?
    } else {
        let truth = a
            .truth
            .as_ref()
            .map(|p| ScenarioConfig::load(p).and_then(Scenario::new))
            .transpose()?;
        run(&mut IqFileSource::open(&a.input)?, truth.as_ref(), &config)?
    };
    if let Some(p) = &a.report {
        report.save_json(p)?;
    }
    if let Some(p) = &a.track {
        report.save_track_csv(p)?;
    }
    if a.json {
        println!("{}", report.to_json()?);
    } else {
        summary(&report, &mut io::stdout().lock())?;
    }
    Ok(report.exit_code() as u8)
}

fn sweep_cmd(a: SweepArgs) -> Result<u8, Error> {
    let kind = match a.kind {
        Kind::PeakSeparation => SweepKind::PeakSeparation,
        Kind::PowerAdvantage => SweepKind::PowerAdvantage,
    };
    let mut params = SweepParams::new(kind);
    if let Some(v) = &a.values {
        params.values = parse_list(v, "grid value")?;
    }
    params.seeds = parse_list(&a.seeds, "seed")?;
    if let Some(o) = a.offset {
        params.offset_m = o;
    }
    if let Some(adv) = a.advantage {
        params.advantage_db = adv;
    }
    if let Some(d) = a.duration {
        params.duration = d;
    }
    if let Some(r) = a.sample_rate {
        params.sample_rate = r;
    }
    let mut config = receiver_config(a.config.as_deref())?;
    if let Some(r) = a.rectifier {
        config.rectifier = r.into();
    }
    config.sequential = a.sequential;
    let rows = sweep(&params, &config);
    match &a.output {
        Some(p) => write_sweep_csv(&rows, File::create(p)?)?,
        None => write_sweep_csv(&rows, io::stdout().lock())?,
    }
    Ok(0)
}

fn bench_cmd(a: BenchArgs) -> Result<u8, Error> {
    let r = benchmark(&a.iq, a.iterations, exec(a.sequential))?;
    if a.json {
        let text = serde_json::to_string_pretty(&r).map_err(|e| Error::Format(e.to_string()))?;
        println!("{text}");
    } else {
        println!("samples: {} at {:.0} Hz", r.samples, r.sample_rate);
        println!("acquisition (32 PRNs): {:.3} s, {:.3e} samples/s", r.acquisition, r.samples_per_second);
        println!(
            "cancellation iteration on PRN {}: median {:.2} ms over {}",
            r.prn,
            1e3 * r.median_iteration,
            r.iterations.len()
        );
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let out = match cli.command {
        Command::GenScenario(a) => gen_scenario(a),
        Command::Run(a) => run_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Benchmark(a) => bench_cmd(a),
    };
    match out {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
