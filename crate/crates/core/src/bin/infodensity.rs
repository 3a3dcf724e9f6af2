use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use infodensity::cli::{self, InputFormat, Measure, RunConfig};
use infodensity::select::Method;
use infodensity::{Error, Result};

#[derive(Parser)]
#[command(name = "infodensity", version, about = "Information-density sensor selection and virtual sensing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Load, align and normalize readings
    Ingest,
    /// Pairwise information-density field
    Idfield {
        #[arg(long, default_value = "angle")]
        measure: String,
    },
    /// Rank sensors and pick the top k
    Select,
    /// Train the virtual-sensor model on the selected sensors
    Train,
    /// Score the trained model on held-out rows
    Evaluate,
    /// Select, train and evaluate, optionally over a k sweep
    Pipeline,
    /// Cross-modality measures and estimates
    Cmi,
    /// Write a synthetic planted-cluster field
    Synth,
}

/// Flags overriding keys of the config file.
#[derive(Args)]
struct Overrides {
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = cli::OUT_DIR_ENV)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// wide or long
    #[arg(long, global = true)]
    input_format: Option<String>,
    /// angle, mi, random, variance or correlation
    #[arg(long, global = true)]
    method: Option<String>,
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Comma-separated list, e.g. 1,3,5
    #[arg(long, global = true, value_delimiter = ',')]
    k_sweep: Option<Vec<usize>>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    interval_secs: Option<i64>,
    #[arg(long, global = true)]
    frame_len: Option<usize>,
    #[arg(long, global = true)]
    stride: Option<usize>,
    #[arg(long, global = true)]
    bins: Option<usize>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    max_epochs: Option<usize>,
    #[arg(long, global = true)]
    patience: Option<usize>,
}

fn build_config(o: &Overrides) -> Result<RunConfig> {
    let mut c = match &o.config {
        Some(path) => RunConfig::from_json_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &o.output_dir {
        c.output_dir = v.clone();
    }
    if let Some(v) = &o.input {
        c.input = Some(v.clone());
    }
    if let Some(v) = &o.input_format {
        c.input_format = match v.as_str() {
            "wide" => InputFormat::Wide,
            "long" => InputFormat::Long,
            other => return Err(Error::Config(format!("unknown input format `{other}`"))),
        };
    }
    if let Some(v) = &o.method {
        c.method = v.parse::<Method>()?;
    }
    if let Some(v) = &o.k_sweep {
        c.k_sweep = v.clone();
    }
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = o.$field { c.$field = v.into(); })* };
    }
    set!(k, seed, interval_secs, frame_len, stride, bins, epsilon);
    if let Some(v) = o.max_epochs {
        c.train.max_epochs = v;
    }
    if let Some(v) = o.patience {
        c.train.patience = v;
    }
    c.validate()?;
    Ok(c)
}

fn run(cli: Cli) -> Result<String> {
    let c = build_config(&cli.overrides)?;
    let dir = c.resolved_output_dir().display().to_string();
    Ok(match cli.command {
        Command::Ingest => {
            let (m, log) = cli::cmd_ingest(&c)?;
            format!("{} rows x {} sensors ({} rejected) -> {dir}", m.n_rows(), m.n_sensors(), log.rejected)
        }
        Command::Idfield { measure } => {
            cli::cmd_idfield(&c, measure.parse::<Measure>()?)?;
            format!("{measure} field -> {dir}")
        }
        Command::Select => format!("selected {:?}", cli::cmd_select(&c)?.selected),
        Command::Train => {
            let (_, report) = cli::cmd_train(&c)?;
            format!("stopped at epoch {}, best {:?} -> {dir}", report.stopping_epoch, report.best_epoch)
        }
        Command::Evaluate => format!("average NMAE {:.6}", cli::cmd_evaluate(&c)?.average.nmae),
        Command::Pipeline => {
            let report = cli::cmd_pipeline(&c)?;
            let mut lines: Vec<String> =
                report.sweep.iter().map(|p| format!("k={} NMAE {:.6}", p.k, p.mean_nmae)).collect();
            if let Some(s) = report.sufficiency {
                lines.push(format!("sufficient: {} (max divergence {:.6})", s.sufficient, s.max_divergence));
            }
            lines.join("\n")
        }
        Command::Cmi => {
            let report = cli::cmd_cmi(&c)?;
            report
                .measures
                .iter()
                .map(|m| format!("{} vs {}: omega {:.2} tau {:.6} gamma {:.6}", m.modality_a, m.modality_b, m.omega_deg, m.tau, m.gamma_nats))
                .collect::<Vec<_>>()
                .join("\n")
        }
        Command::Synth => {
            let (m, _) = cli::cmd_synth(&c)?;
            format!("{} rows x {} sensors -> {dir}", m.n_rows(), m.n_sensors())
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
