use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gaptron::abstention::{abstention_audit, random_rounds, AbstentionLearner};
use gaptron::baselines::{BaselineConfig, BaselineKind};
use gaptron::environments::{generate, load_stream, LabeledStream, StreamKind, StreamSpec};
use gaptron::harness::{self, Summary};
use gaptron::{Feedback, GaptronConfig, LossKind, NormPolicy, WeightMatrix};

#[derive(Parser)]
#[command(
    name = "gaptron",
    version,
    about = "Online multiclass classification experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a learner over a stream and report mistakes against the bound.
    Run(RunArgs),
    /// Tabulate the smooth-hinge surrogate-gap curves.
    Figure1 {
        #[arg(long, default_value_t = 0.125)]
        eta: f64,
        /// Grid step on z in [-1.5, 1.5].
        #[arg(long, default_value_t = 0.01)]
        grid: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Expert advice with an abstention option.
    Abstention {
        #[arg(long, default_value_t = 10)]
        experts: usize,
        #[arg(long, default_value_t = 10_000)]
        horizon: usize,
        #[arg(long, default_value_t = 0.4)]
        cost: f64,
        /// Probability of flipping each revealed label.
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run over a grid of class counts and horizons.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Logistic,
    Hinge,
    SmoothHinge,
}

#[derive(Clone, Copy, ValueEnum)]
enum FeedbackArg {
    Full,
    Bandit,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LearnerArg {
    Gaptron,
    Perceptron,
    Banditron,
}

#[derive(Args, Clone)]
struct LearnerArgs {
    #[arg(long, value_enum, default_value = "smooth-hinge")]
    loss: LossArg,
    /// Hinge threshold; defaults to 1/K.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_enum, default_value = "full")]
    feedback: FeedbackArg,
    #[arg(long, default_value_t = 10)]
    d: usize,
    #[arg(long, default_value_t = 1.0)]
    x_bound: f64,
    /// Radius D of the feasible ball.
    #[arg(long, default_value_t = 3.0)]
    radius: f64,
    #[arg(long, default_value_t = 32)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rescale features with norm above X instead of failing.
    #[arg(long)]
    rescale: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    learner_args: LearnerArgs,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 2000)]
    horizon: usize,
    /// A stream file, or `separable[:margin=M]` / `noise[:rate=R,margin=M]`
    /// with optional `unorm=` and `seed=` keys.
    #[arg(long, default_value = "separable")]
    stream: String,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, value_enum, default_value = "gaptron")]
    learner: LearnerArg,
    /// Round log (CSV). For bandit runs, the first seed's trajectory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the key=value summary here.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    learner_args: LearnerArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 3, 5, 10])]
    ks: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [500usize, 1000, 2000])]
    ts: Vec<usize>,
    #[arg(long, default_value = "separable")]
    stream: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl LearnerArgs {
    fn loss(&self, k: usize) -> LossKind {
        match self.loss {
            LossArg::Logistic => LossKind::Logistic,
            LossArg::Hinge => LossKind::Hinge {
                beta: self.beta.unwrap_or(1.0 / k as f64),
            },
            LossArg::SmoothHinge => LossKind::SmoothHinge,
        }
    }

    fn feedback(&self) -> Feedback {
        match self.feedback {
            FeedbackArg::Full => Feedback::FullInfo,
            FeedbackArg::Bandit => Feedback::Bandit,
        }
    }

    fn config(&self, k: usize, horizon: usize) -> GaptronConfig {
        let policy = if self.rescale {
            NormPolicy::Rescale
        } else {
            NormPolicy::Strict
        };
        GaptronConfig::new(
            self.loss(k),
            self.feedback(),
            k,
            self.d,
            self.radius,
            self.x_bound,
        )
        .with_horizon(horizon as u64)
        .with_seed(self.seed)
        .with_norm_policy(policy)
    }
}

fn parse_stream_spec(
    text: &str,
    k: usize,
    args: &LearnerArgs,
    horizon: usize,
) -> Result<Option<StreamSpec>> {
    let (name, rest) = text.split_once(':').unwrap_or((text, ""));
    if name != "separable" && name != "noise" {
        return Ok(None);
    }
    let (mut margin, mut rate, mut u_norm, mut seed) = (0.0, 0.1, args.radius, args.seed);
    for pair in rest.split(',').filter(|s| !s.is_empty()) {
        let (key, value) = pair
            .split_once('=')
            .with_context(|| format!("expected key=value, got {pair:?}"))?;
        let value: f64 = value
            .parse()
            .with_context(|| format!("bad number in {pair:?}"))?;
        match key {
            "margin" => margin = value,
            "rate" => rate = value,
            "unorm" => u_norm = value,
            "seed" => seed = value as u64,
            _ => bail!("unknown stream key {key:?}"),
        }
    }
    let kind = if name == "separable" {
        StreamKind::Separable { margin }
    } else {
        StreamKind::LabelNoise { rate, margin }
    };
    Ok(Some(StreamSpec {
        kind,
        classes: k,
        dim: args.d,
        x_bound: args.x_bound,
        u_norm,
        horizon,
        rng_seed: seed,
    }))
}

fn load(text: &str, k: usize, args: &LearnerArgs, horizon: usize) -> Result<LabeledStream> {
    match parse_stream_spec(text, k, args, horizon)? {
        Some(spec) => Ok(generate(&spec)?),
        None => {
            let policy = if args.rescale {
                NormPolicy::Rescale
            } else {
                NormPolicy::Strict
            };
            let mut stream = load_stream(Path::new(text), args.x_bound, policy)?;
            if stream.comparator.is_none() {
                log::warn!("stream file carries no comparator; comparing against U = 0");
                stream.comparator = Some(WeightMatrix::zeros(k, stream.dim, args.radius)?);
            }
            Ok(stream)
        }
    }
}

fn write_summary(summary: &Summary, path: Option<&Path>) -> Result<()> {
    print!("{summary}");
    if let Some(path) = path {
        harness::emit_summary(summary, path)?;
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let la = &args.learner_args;
    let stream = load(&args.stream, args.k, la, args.horizon)?;
    if stream.classes > args.k {
        bail!(
            "stream has {} classes but --k is {}",
            stream.classes,
            args.k
        );
    }
    match args.learner {
        LearnerArg::Gaptron => {}
        baseline => {
            let kind = match baseline {
                LearnerArg::Perceptron => BaselineKind::Perceptron,
                _ => BaselineKind::Banditron {
                    gamma: args.gamma.unwrap_or(0.1),
                },
            };
            let config = BaselineConfig {
                kind,
                classes: args.k,
                dim: stream.dim,
                rng_seed: la.seed,
            };
            let r = harness::run_baseline(config, &stream)?;
            println!("mistakes={}", r.mistakes);
            println!("expected_mistakes={}", r.expected_mistakes);
            println!("horizon={}", stream.len());
            return Ok(());
        }
    }
    let mut config = la.config(args.k, stream.len());
    config.dim = stream.dim;
    config.eta_override = args.eta;
    config.gamma_override = args.gamma;
    match config.feedback {
        Feedback::FullInfo => {
            let r = harness::run_full_info(&config, &stream, None)?;
            if let Some(out) = &args.out {
                harness::emit_csv(&r.rounds, out)?;
            }
            write_summary(&r.summary(), args.summary.as_deref())
        }
        Feedback::Bandit => {
            let r = harness::run_bandit(&config, &stream, None, la.seeds)?;
            if let Some(out) = &args.out {
                harness::emit_csv(&r.runs[0].rounds, out)?;
            }
            write_summary(&r.summary(), args.summary.as_deref())
        }
    }
}

fn sweep(args: SweepArgs) -> Result<()> {
    let la = &args.learner_args;
    let k0 = *args.ks.first().context("--ks is empty")?;
    let template = la.config(k0, 1);
    let rows = harness::sweep(&template, &args.ks, &args.ts, la.seeds, |k, t| {
        let spec = parse_stream_spec(&args.stream, k, la, t)
            .map_err(|e| gaptron::Error::InvalidConfig(e.to_string()))?
            .ok_or_else(|| {
                gaptron::Error::InvalidConfig("sweep needs a generated stream".into())
            })?;
        generate(&spec)
    })?;
    match &args.out {
        Some(path) => {
            let file = std::fs::File::create(path)
                .with_context(|| format!("creating {}", path.display()))?;
            harness::write_sweep_csv(file, &rows)?;
        }
        None => harness::write_sweep_csv(std::io::stdout().lock(), &rows)?,
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
        Command::Figure1 { eta, grid, out } => {
            let points = harness::figure1_curves(eta, grid)?;
            match out {
                Some(path) => harness::emit_figure1_csv(&points, &path)?,
                None => harness::write_figure1_csv(std::io::stdout().lock(), &points)?,
            }
            Ok(())
        }
        Command::Abstention {
            experts,
            horizon,
            cost,
            noise,
            seed,
            out,
        } => {
            let rounds = random_rounds(experts, horizon, cost, noise, seed);
            let outcomes = AbstentionLearner::new(experts, seed)?.run(&rounds)?;
            if let Some(path) = &out {
                harness::emit_abstention_csv(&harness::abstention_rows(&outcomes), path)?;
            }
            let report = abstention_audit(&outcomes)?;
            let mut stdout = std::io::stdout().lock();
            write!(stdout, "{report}")?;
            Ok(())
        }
    }
}
