mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eakd::config::RunConfig;
use eakd::Error;

#[derive(Parser, Debug)]
#[command(name = "eakd", version, about = "Entropy-weighted knowledge distillation at desk scale")]
struct Cli {
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic blob dataset (train.csv, val.csv, manifest) to --out.
    GenData,
    /// Train a teacher with cross-entropy on --data.
    TrainTeacher,
    /// Distill a student from --teacher on --data.
    Distill,
    /// Evaluate a checkpoint on the validation split of --data.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run an experiment grid against --teacher.
    Ablate {
        #[arg(long, value_enum)]
        study: Option<Study>,
        /// Number of consecutive seeds starting at --seed.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Reshape a training log into `epoch,quartile,share` rows.
    QuartileReport {
        #[arg(long)]
        log: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Study {
    Weighting,
    Tprime,
    Beta,
}

impl Study {
    fn as_str(self) -> &'static str {
        match self {
            Study::Weighting => "weighting",
            Study::Tprime => "tprime",
            Study::Beta => "beta",
        }
    }
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// Flat `key = value` file applied over the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    temperature: Option<f64>,
    #[arg(long, global = true)]
    entropy_temperature: Option<f64>,
    #[arg(long, global = true)]
    weighting_mode: Option<String>,
    #[arg(long, global = true)]
    loss_kind: Option<String>,
    #[arg(long, global = true)]
    dkd_alpha: Option<f64>,
    #[arg(long, global = true)]
    dkd_beta: Option<f64>,
    #[arg(long, global = true)]
    kd_weight: Option<f64>,
    #[arg(long, global = true)]
    teacher: Option<PathBuf>,
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, env = "EAKD_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true)]
    class_count: Option<usize>,
    #[arg(long, global = true)]
    dims: Option<usize>,
    #[arg(long, global = true)]
    samples_per_class: Option<usize>,
    #[arg(long, global = true)]
    spread: Option<f64>,
    #[arg(long, global = true)]
    center_scale: Option<f64>,
    /// Any other configuration key, as KEY=VALUE. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Flags {
    fn overrides(&self) -> Vec<(String, String)> {
        fn put<T: ToString>(out: &mut Vec<(String, String)>, key: &str, v: &Option<T>) {
            if let Some(v) = v {
                out.push((key.to_string(), v.to_string()));
            }
        }
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let mut out = Vec::new();
        put(&mut out, "seed", &self.seed);
        put(&mut out, "epochs", &self.epochs);
        put(&mut out, "batch_size", &self.batch_size);
        put(&mut out, "learning_rate", &self.lr);
        put(&mut out, "temperature", &self.temperature);
        put(&mut out, "entropy_temperature", &self.entropy_temperature);
        put(&mut out, "weighting_mode", &self.weighting_mode);
        put(&mut out, "loss_kind", &self.loss_kind);
        put(&mut out, "dkd_alpha", &self.dkd_alpha);
        put(&mut out, "dkd_beta", &self.dkd_beta);
        put(&mut out, "kd_weight", &self.kd_weight);
        put(&mut out, "teacher", &path(&self.teacher));
        put(&mut out, "data", &path(&self.data));
        put(&mut out, "out", &path(&self.out));
        put(&mut out, "threads", &self.threads);
        put(&mut out, "class_count", &self.class_count);
        put(&mut out, "dims", &self.dims);
        put(&mut out, "samples_per_class", &self.samples_per_class);
        put(&mut out, "spread", &self.spread);
        put(&mut out, "center_scale", &self.center_scale);
        out
    }

    /// defaults ← config file ← flags
    fn resolve(&self) -> eakd::Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for (key, value) in self.overrides() {
            cfg.set(&key, &value)?;
        }
        for kv in &self.set {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(key.trim(), value)?;
        }
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Input(_) | Error::Dimension(_) => 2,
        Error::Io { .. } | Error::Format { .. } | Error::Record { .. } => 3,
        Error::Divergence { .. } => 4,
        Error::Contract(_) => 1,
    }
}

fn run(cli: Cli) -> eakd::Result<()> {
    let mut cfg = cli.flags.resolve()?;
    match cli.command {
        Command::GenData => commands::gen_data(&cfg),
        Command::TrainTeacher => commands::train_teacher(&mut cfg),
        Command::Distill => commands::distill(&mut cfg),
        Command::Eval { checkpoint } => commands::eval(&mut cfg, &checkpoint),
        Command::Ablate { study, seeds } => {
            if let Some(s) = study {
                cfg.set("study", s.as_str())?;
            }
            if let Some(n) = seeds {
                cfg.seeds = n;
            }
            commands::ablate(&mut cfg)
        }
        Command::QuartileReport { log } => commands::quartile_report(&cfg, &log),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
