use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use passband_core::energy::{energy_total, rates_from_spike_csv, EnergyModel, LayerProfile};
use passband_core::io::{decode_tensor, encode_tensor, Tensor};
use passband_core::lif::LifParams;
use passband_core::pbo::{
    cutoff_3db, endpoint_gains, init_params, prefilter_apply, tilt_classify, Boundary, Cutoff,
    TiltClass,
};
use passband_core::signal::{uniform_grid, FrameClip};
use passband_core::spectral::figure1_report;
use passband_core::trainer::{gen_dataset, spike_report, train, FilterMode, SyntheticTaskSpec, TrainConfig};
use passband_core::verify::{run_suite, Suite};
use passband_core::{Error, PboParams};

/// Seed used when neither `--seed` nor a config file provides one.
pub const DEFAULT_SEED: u64 = 0;

const EXIT_USAGE: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "passband", version, about = "Spectral analysis and training for LIF pre-filters")]
struct Cli {
    /// RNG seed; overrides seeds in config files.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: runs/<subcommand>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON config for the subcommand; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean per-pixel spectra of the three processing chains.
    Spectra(SpectraArgs),
    /// Apply the pre-filter to a PBT1 tensor and report its cascade shape.
    Filter(FilterArgs),
    /// Train the pre-filter on the synthetic task.
    Train(TrainArgs),
    /// Run an analytic-vs-simulation suite.
    Verify(VerifyArgs),
    /// Energy estimate from a layer profile.
    Energy(EnergyArgs),
}

#[derive(Args)]
struct SpectraArgs {
    /// Synthetic task spec (JSON) to generate clips from.
    #[arg(long)]
    synth: Option<PathBuf>,
    /// PBT1 clip files; may be repeated.
    #[arg(long = "clip")]
    clips: Vec<PathBuf>,
    /// Number of evenly spaced frequencies on [0, pi].
    #[arg(long)]
    grid_points: Option<usize>,
    /// LIF leak rate.
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Args)]
struct FilterArgs {
    /// Input PBT1 tensor; the first axis is time.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Constant coefficient; without it the modulated schedule is used.
    #[arg(long)]
    lambda: Option<f64>,
    /// LIF leak used for the cascade report.
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Overrides the configured epoch count.
    #[arg(long)]
    epochs: Option<usize>,
    /// Ablation; only `A=0` is recognized.
    #[arg(long)]
    ablate: Option<String>,
    /// Comparison run; only `lif-only` is recognized.
    #[arg(long)]
    baseline: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    /// lif-gain, cascade, sidebands, full-psd, equilibrium, gradients, energy or all.
    suite: String,
}

#[derive(Args)]
struct EnergyArgs {
    /// Layer profile JSON.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Spike CSV from a train run; its per-layer mean rates replace the
    /// profile's rates for layers of the same name.
    #[arg(long)]
    rates_from: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Diverged(String),
    Verify(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Diverged { .. } => Failure::Diverged(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

#[derive(Serialize)]
struct RunManifest<'a> {
    subcommand: &'a str,
    version: &'a str,
    seed: u64,
    config: Value,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

struct Run {
    out: PathBuf,
    outputs: Vec<String>,
}

impl Run {
    fn new(out: PathBuf) -> Outcome<Self> {
        std::fs::create_dir_all(&out)?;
        Ok(Self { out, outputs: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Outcome<()> {
        std::fs::write(self.out.join(name), bytes)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn finish(mut self, subcommand: &str, seed: u64, config: Value, inputs: &[PathBuf]) -> Outcome<()> {
        self.outputs.sort();
        let m = RunManifest {
            subcommand,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: self.outputs,
        };
        std::fs::write(self.out.join("manifest.json"), serde_json::to_string_pretty(&m)? + "\n")?;
        Ok(())
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Outcome<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("cannot parse {}: {e}", path.display())))
}

fn load_config<T: Default + for<'de> Deserialize<'de>>(path: Option<&Path>) -> Outcome<T> {
    path.map_or_else(|| Ok(T::default()), read_json)
}

fn pretty(v: &impl Serialize) -> Outcome<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
struct SpectraConfig {
    synth: Option<SyntheticTaskSpec>,
    clips: Vec<PathBuf>,
    lif: LifParams,
    /// Defaults to the initialization for the clip length.
    pbo: Option<PboParams>,
    grid_points: usize,
}

impl Default for SpectraConfig {
    fn default() -> Self {
        Self {
            synth: None,
            clips: Vec::new(),
            lif: LifParams::default(),
            pbo: None,
            grid_points: 129,
        }
    }
}

fn cmd_spectra(cli: &Cli, args: &SpectraArgs, out: PathBuf) -> Outcome<()> {
    let mut cfg: SpectraConfig = load_config(cli.config.as_deref())?;
    let mut inputs: Vec<PathBuf> = cli.config.iter().cloned().collect();
    if let Some(p) = &args.synth {
        cfg.synth = Some(read_json(p)?);
        inputs.push(p.clone());
    }
    if !args.clips.is_empty() {
        cfg.clips = args.clips.clone();
    }
    if let Some(n) = args.grid_points {
        cfg.grid_points = n;
    }
    if let Some(tau) = args.tau {
        cfg.lif.tau = tau;
    }
    if let (Some(seed), Some(spec)) = (cli.seed, cfg.synth.as_mut()) {
        spec.seed = seed;
    }
    let seed = cfg.synth.as_ref().map_or(cli.seed.unwrap_or(DEFAULT_SEED), |s| s.seed);

    let mut clips: Vec<FrameClip> = Vec::new();
    for p in &cfg.clips {
        if !p.exists() {
            return Err(Failure::Usage(format!("missing input {}", p.display())));
        }
        clips.push(passband_core::io::read_clip(p)?);
        inputs.push(p.clone());
    }
    if let Some(spec) = &cfg.synth {
        let d = gen_dataset(spec)?;
        clips.extend(d.train.into_iter().chain(d.val).map(|c| c.clip));
    }
    if clips.is_empty() {
        return Err(Failure::Usage("no clips: pass --synth, --clip or a config with either".into()));
    }
    if cfg.grid_points < 2 {
        return Err(Failure::Usage("grid_points must be at least 2".into()));
    }
    let pbo = match cfg.pbo {
        Some(p) => p,
        None => init_params(clips[0].t_len())?,
    };
    cfg.pbo = Some(pbo);
    let report = figure1_report(&clips, &cfg.lif, &pbo, &uniform_grid(cfg.grid_points))?;
    let mut run = Run::new(out)?;
    report.write_to_dir(&run.out, &cfg.lif, &pbo)?;
    for chain in passband_core::spectral::Chain::ALL {
        run.outputs.push(chain.file_name().to_string());
    }
    run.outputs.push("figure1.json".into());
    run.finish("spectra", seed, serde_json::to_value(&cfg)?, &inputs)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
struct FilterConfig {
    input: Option<PathBuf>,
    lambda: Option<f64>,
    /// Modulated schedule used when `lambda` is absent; defaults to the
    /// initialization for the clip length.
    pbo: Option<PboParams>,
    tau: f64,
    boundary: Boundary,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            input: None,
            lambda: None,
            pbo: None,
            tau: LifParams::default().tau,
            boundary: Boundary::ReplicateFirst,
        }
    }
}

fn cmd_filter(cli: &Cli, args: &FilterArgs, out: PathBuf) -> Outcome<()> {
    let mut cfg: FilterConfig = load_config(cli.config.as_deref())?;
    if args.input.is_some() {
        cfg.input = args.input.clone();
    }
    if args.lambda.is_some() {
        cfg.lambda = args.lambda;
    }
    if let Some(t) = args.tau {
        cfg.tau = t;
    }
    let input = cfg.input.clone().ok_or_else(|| Failure::Usage("filter needs --input".into()))?;
    if !input.exists() {
        return Err(Failure::Usage(format!("missing input {}", input.display())));
    }
    let tensor = decode_tensor(&std::fs::read(&input)?)?;
    if tensor.dims.is_empty() {
        return Err(Failure::Usage("tensor has no time axis".into()));
    }
    let t_len = tensor.dims[0];
    let frame_len: usize = tensor.dims[1..].iter().product();
    let clip = FrameClip::new([t_len, 1, 1, frame_len], tensor.data.iter().map(|&v| f64::from(v)).collect())?;
    let alpha = LifParams::new(cfg.tau, f64::INFINITY, 0.0)?.alpha();

    let (lambdas, report_lambda) = match cfg.lambda {
        Some(l) => (vec![l; t_len], l),
        None => {
            let p = match cfg.pbo {
                Some(p) => p,
                None => init_params(t_len)?,
            };
            p.validate()?;
            cfg.pbo = Some(p);
            (p.lambdas(t_len), p.mu())
        }
    };
    let y = prefilter_apply(&clip, &lambdas, cfg.boundary)?;
    let out_tensor = Tensor {
        dims: tensor.dims.clone(),
        data: y.data().iter().map(|&v| v as f32).collect(),
    };

    let (g0, gpi) = endpoint_gains(report_lambda, alpha);
    let mut report = json!({
        "lambda": report_lambda,
        "schedule": if cfg.lambda.is_some() { "constant" } else { "modulated" },
        "alpha": alpha,
        "tilt": tilt_classify(report_lambda, alpha),
        "endpoint_gains": { "dc": g0, "nyquist": gpi },
    });
    if tilt_classify(report_lambda, alpha) != TiltClass::Flat {
        match cutoff_3db(report_lambda, alpha)? {
            Cutoff::Attained { omega, .. } => report["cutoff"] = json!(omega),
            Cutoff::NotAttained { .. } => report["cutoff_attained"] = json!(false),
        }
    }

    let mut run = Run::new(out)?;
    run.write("filtered.pbt", encode_tensor(&out_tensor)?)?;
    run.write("filter_report.json", pretty(&report)?)?;
    let mut inputs = vec![input];
    inputs.extend(cli.config.iter().cloned());
    run.finish("filter", cli.seed.unwrap_or(DEFAULT_SEED), serde_json::to_value(&cfg)?, &inputs)
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct TrainRunConfig {
    task: SyntheticTaskSpec,
    train: TrainConfig,
}

fn cmd_train(cli: &Cli, args: &TrainArgs, out: PathBuf) -> Outcome<()> {
    let mut cfg: TrainRunConfig = load_config(cli.config.as_deref())?;
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
        cfg.task.seed = seed;
    }
    match args.ablate.as_deref() {
        None => {}
        Some("A=0") => cfg.train.amplitude = 0.0,
        Some(other) => return Err(Failure::Usage(format!("unknown ablation {other:?}; expected A=0"))),
    }
    match args.baseline.as_deref() {
        None => {}
        Some("lif-only") => cfg.train.filter = FilterMode::Identity,
        Some(other) => return Err(Failure::Usage(format!("unknown baseline {other:?}; expected lif-only"))),
    }
    let report = train(&cfg.train, &cfg.task)?;
    let m = &report.model;
    let params = json!({
        "filter": m.filter,
        "pbo": m.pbo,
        "readout_w": m.readout_w,
        "readout_b": m.readout_b,
        "final": report.final_metrics(),
        "lambda_trajectory": report.lambda_trajectory,
    });
    let mut run = Run::new(out)?;
    run.write("metrics.jsonl", report.metrics_jsonl()?)?;
    run.write("spikes.csv", spike_report(&report.spike_stats))?;
    run.write("params.json", pretty(&params)?)?;
    let inputs: Vec<PathBuf> = cli.config.iter().cloned().collect();
    run.finish("train", cfg.train.seed, serde_json::to_value(&cfg)?, &inputs)
}

fn cmd_verify(cli: &Cli, args: &VerifyArgs, out: PathBuf) -> Outcome<()> {
    let suites: Vec<Suite> = if args.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![args.suite.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?]
    };
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let mut run = Run::new(out)?;
    let mut failed = Vec::new();
    for s in suites {
        let report = run_suite(s, seed)?;
        println!("{}: {}", s, if report.passed { "PASS" } else { "FAIL" });
        for c in report.checks.iter().filter(|c| !c.passed) {
            println!("  failed {}: error {:e} > limit {:e}", c.name, c.error, c.limit);
        }
        if !report.passed {
            failed.push(s.name());
        }
        run.write(&format!("verify_{s}.json"), pretty(&report)?)?;
    }
    run.finish("verify", seed, json!({ "suite": args.suite }), &[])?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verify(format!("failed suites: {}", failed.join(", "))))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct PboDims {
    t: u64,
    h: u64,
    w: u64,
    c: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct EnergyConfig {
    layers: Vec<LayerProfile>,
    t_steps: u64,
    #[serde(default)]
    model: EnergyModel,
    #[serde(default)]
    pbo: Option<PboDims>,
}

fn cmd_energy(cli: &Cli, args: &EnergyArgs, out: PathBuf) -> Outcome<()> {
    let path = args
        .profile
        .as_deref()
        .or(cli.config.as_deref())
        .ok_or_else(|| Failure::Usage("energy needs --profile or --config".into()))?;
    let mut cfg: EnergyConfig = read_json(path)?;
    let mut inputs = vec![path.to_path_buf()];
    if let Some(csv) = &args.rates_from {
        let text = std::fs::read_to_string(csv)
            .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", csv.display())))?;
        for (name, rate) in rates_from_spike_csv(&text)? {
            for l in cfg.layers.iter_mut().filter(|l| l.name == name) {
                l.spike_rate = rate;
            }
        }
        inputs.push(csv.clone());
    }
    let mut report = energy_total(&cfg.layers, cfg.t_steps, &cfg.model)?;
    if let Some(d) = &cfg.pbo {
        report = report.with_pbo_overhead(d.t, d.h, d.w, d.c)?;
    }
    println!("total {} pJ", report.total_pj);
    let mut run = Run::new(out)?;
    run.write("energy_report.json", pretty(&report)?)?;
    run.finish("energy", cli.seed.unwrap_or(DEFAULT_SEED), serde_json::to_value(&cfg)?, &inputs)
}

fn run(cli: &Cli) -> Outcome<()> {
    let name = match &cli.command {
        Command::Spectra(_) => "spectra",
        Command::Filter(_) => "filter",
        Command::Train(_) => "train",
        Command::Verify(_) => "verify",
        Command::Energy(_) => "energy",
    };
    let out = cli.out.clone().unwrap_or_else(|| Path::new("runs").join(name));
    match &cli.command {
        Command::Spectra(a) => cmd_spectra(cli, a, out),
        Command::Filter(a) => cmd_filter(cli, a, out),
        Command::Train(a) => cmd_train(cli, a, out),
        Command::Verify(a) => cmd_verify(cli, a, out),
        Command::Energy(a) => cmd_energy(cli, a, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Diverged(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_DIVERGED)
        }
        Err(Failure::Verify(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_VERIFY)
        }
    }
}
