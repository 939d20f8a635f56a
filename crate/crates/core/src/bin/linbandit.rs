use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use linbandit::density::{PiecewiseDensity, DEFAULT_THRESHOLD_ERROR};
use linbandit::harness::{
    load_event_log, read_points_csv, replay_evaluate, simulate_evaluate, stream_rng, write_log,
    write_report, Recommender, ReportFormat, RunReport, SituationalPolicy, SyntheticConfig,
    SyntheticStream, POLICY_STREAM,
};
use linbandit::policy::{GreedyGate, PolicyConfig, PolicyKind, PolicyState};
use linbandit::reward::PointSeries;
use linbandit::situation::{SituationSpace, DEFAULT_SIMILARITY_FLOOR};
use linbandit::utility::UtilityVariant;
use linbandit::{Error, Result};

#[derive(Parser)]
#[command(name = "linbandit", version, about = "Adaptive ε-greedy bandits: offline replay, simulation and density fitting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a policy on an event log (rejection replay) or a synthetic stream.
    Run(RunArgs),
    /// Write a synthetic event log.
    Gen(GenArgs),
    /// Fit a piecewise-linear density to `s,p` points.
    Fit(FitArgs),
}

#[derive(Args)]
struct RunArgs {
    /// linearized, egreedy, ebeginning, edecreasing or eg.
    #[arg(long, default_value = "linearized")]
    policy: PolicyKind,
    /// Line-delimited JSON event log to replay.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    log: Option<PathBuf>,
    /// TOML synthetic stream config.
    #[arg(long)]
    synthetic: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed ε for egreedy and ebeginning [default: 0.1].
    #[arg(long)]
    epsilon: Option<f64>,
    /// ε0 of the edecreasing schedule min(1, ε0/t) [default: 1].
    #[arg(long)]
    epsilon0: Option<f64>,
    /// Round count T for ebeginning [default: 1000].
    #[arg(long)]
    horizon: Option<u64>,
    /// Rounds between ε refreshes of the linearized policy [default: 100].
    #[arg(long)]
    batch: Option<usize>,
    /// Utility weight on the clicked tail [default: 1].
    #[arg(long)]
    a: Option<f64>,
    /// Utility weight on the non-clicked tail [default: 1].
    #[arg(long)]
    b: Option<f64>,
    /// difference (a·T_r − b·T_s) or mixture (mixture-weighted sum) [default: difference].
    #[arg(long, value_parser = parse_variant)]
    utility_variant: Option<UtilityVariant>,
    /// Linearizer segmentation threshold [default: 1e-4].
    #[arg(long)]
    threshold_error: Option<f64>,
    /// literal (q ≤ ε exploits) or conventional (q < ε explores) [default: literal].
    #[arg(long, value_parser = parse_gate)]
    gate: Option<GreedyGate>,
    /// Minimum situation similarity (out of 3) for reusing a stored policy.
    #[arg(long, default_value_t = DEFAULT_SIMILARITY_FLOOR)]
    similarity_floor: f64,
    /// Directory with location.tsv, time.tsv and social.tsv; enables per-situation policies.
    #[arg(long)]
    ontology_dir: Option<PathBuf>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long, default_value = "csv")]
    format: ReportFormat,
}

#[derive(Args)]
struct GenArgs {
    /// TOML synthetic stream config.
    #[arg(long)]
    synthetic: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the ontologies the generated situations use.
    #[arg(long)]
    ontology_out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// CSV of `s,p` rows; a header line is skipped.
    #[arg(long)]
    points: PathBuf,
    /// Segment table path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD_ERROR)]
    threshold_error: f64,
}

fn parse_variant(s: &str) -> std::result::Result<UtilityVariant, String> {
    match s {
        "difference" => Ok(UtilityVariant::Difference),
        "mixture" => Ok(UtilityVariant::Mixture),
        _ => Err(format!("expected `difference` or `mixture`, got `{s}`")),
    }
}

fn parse_gate(s: &str) -> std::result::Result<GreedyGate, String> {
    match s {
        "literal" => Ok(GreedyGate::Literal),
        "conventional" => Ok(GreedyGate::Conventional),
        _ => Err(format!("expected `literal` or `conventional`, got `{s}`")),
    }
}

impl RunArgs {
    fn policy_config(&self) -> PolicyConfig {
        let mut cfg = PolicyConfig::new(self.policy);
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = self.epsilon0 {
            cfg.epsilon0 = v;
        }
        if let Some(v) = self.horizon {
            cfg.horizon = v;
        }
        if let Some(v) = self.batch {
            cfg.batch = v;
        }
        if let Some(v) = self.a {
            cfg.utility.a = v;
        }
        if let Some(v) = self.b {
            cfg.utility.b = v;
        }
        if let Some(v) = self.utility_variant {
            cfg.utility.variant = v;
        }
        if let Some(v) = self.threshold_error {
            cfg.threshold_error = v;
        }
        if let Some(v) = self.gate {
            cfg.gate = v;
        }
        cfg
    }
}

fn write_output(out: Option<&Path>, body: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, body).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => std::io::stdout()
            .write_all(body.as_bytes())
            .map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            }),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let config = args.policy_config();
    let mut policy: Box<dyn Recommender> = match &args.ontology_dir {
        Some(dir) => Box::new(SituationalPolicy::new(
            SituationSpace::load_dir(dir)?,
            config.clone(),
            args.seed,
            args.similarity_floor,
        )?),
        None => Box::new(PolicyState::with_rng(
            config.clone(),
            stream_rng(args.seed, POLICY_STREAM),
        )?),
    };

    let report: RunReport = match (&args.log, &args.synthetic) {
        (Some(log), _) => replay_evaluate(policy.as_mut(), load_event_log(log)?)?,
        (None, Some(path)) => {
            let mut synth = SyntheticConfig::load(path)?;
            synth.seed = args.seed;
            simulate_evaluate(policy.as_mut(), SyntheticStream::new(synth)?, args.seed)?
        }
        (None, None) => unreachable!("clap requires --log or --synthetic"),
    };
    let report = report.with_echo(config, args.seed);

    if report.no_overlap {
        eprintln!("warning: no round matched the logged display (no-overlap); CTR is undefined");
    }
    match &args.out {
        Some(path) => write_report(&report, path, args.format),
        None => write_output(
            None,
            &match args.format {
                ReportFormat::Csv => report.to_csv(),
                ReportFormat::Json => report.to_json(),
            },
        ),
    }
}

fn gen(args: GenArgs) -> Result<()> {
    let mut cfg = SyntheticConfig::load(&args.synthetic)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let stream = SyntheticStream::new(cfg)?;
    if let Some(dir) = &args.ontology_out {
        stream.space().write_dir(dir)?;
    }
    let file = std::fs::File::create(&args.out).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    let records: Vec<_> = stream.map(|r| r.record).collect();
    write_log(&records, std::io::BufWriter::new(file)).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })
}

fn fit(args: FitArgs) -> Result<()> {
    let series = PointSeries::from_points(read_points_csv(&args.points)?)?;
    let density = PiecewiseDensity::fit(&series, args.threshold_error)?;
    write_output(args.out.as_deref(), &density.to_csv())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Gen(a) => gen(a),
        Command::Fit(a) => fit(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
