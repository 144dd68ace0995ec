//! Experiment runs: drives learners over streams, evaluates the closed-form
//! mistake bounds, aggregates seeds, and writes round logs and summaries.

use std::f64::consts::LN_2;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::abstention::{AbstentionOutcome, AbstentionReport};
use crate::baselines::{Baseline, BaselineConfig};
use crate::environments::LabeledStream;
use crate::error::{Error, Result};
use crate::learner::{
    derive_hyperparams, Feedback, Gaptron, GaptronConfig, Hyperparams, RoundAudit,
};
use crate::linalg::{WeightMatrix, NORM_TOL};
use crate::losses::{smooth_hinge_of_margin, LossKind};

/// Per-round surrogate gaps above this count as violations.
pub const GAP_TOL: f64 = 1e-9;
/// Slack for the path-wise mistake and gradient-descent inequalities.
pub const BOUND_TOL: f64 = 1e-6;

pub const ROUND_COLUMNS: [&str; 10] = [
    "t",
    "a_t",
    "mix",
    "expected_mistake",
    "realized_mistake",
    "learner_loss",
    "comparator_loss",
    "grad_norm_sq",
    "surrogate_gap",
    "conditional_gap",
];

pub const ABSTENTION_COLUMNS: [&str; 6] = [
    "t",
    "b_t",
    "expected_loss",
    "cumulative_expected_loss",
    "best_expert_loss_so_far",
    "bound",
];

/// Closed-form regret term for a configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSpec {
    /// Which expression produced `value`.
    pub form: BoundForm,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundForm {
    /// `KX²‖U‖²/ln2`.
    FullLogistic,
    /// `K²X²‖U‖²/(2(K−1))`.
    FullHinge,
    /// `2KX²‖U‖²`.
    FullSmoothHinge,
    /// `KXD·min{max{2KXD/ln2, 2√(T/ln2)}, KXD/(e^{−2DX} ln2)}`.
    BanditLogistic,
    /// `max{K³X²D²/(K−1), 2KXD√(T/2)}`.
    BanditHinge,
    /// `max{4K²X²D², 2KXD√(2T)}`.
    BanditSmoothHinge,
    /// `‖U‖²/(2η) + γ(K−1)T/K`, used when hyperparameters are overridden.
    Generic,
}

impl BoundForm {
    pub fn name(&self) -> &'static str {
        match self {
            BoundForm::FullLogistic => "full_logistic",
            BoundForm::FullHinge => "full_hinge",
            BoundForm::FullSmoothHinge => "full_smooth_hinge",
            BoundForm::BanditLogistic => "bandit_logistic",
            BoundForm::BanditHinge => "bandit_hinge",
            BoundForm::BanditSmoothHinge => "bandit_smooth_hinge",
            BoundForm::Generic => "generic",
        }
    }
}

impl BoundSpec {
    /// Regret term against a comparator of norm `u_norm` over `horizon` rounds.
    pub fn for_config(
        config: &GaptronConfig,
        params: Hyperparams,
        u_norm: f64,
        horizon: u64,
    ) -> Self {
        let k = config.classes as f64;
        let (x, d, t) = (config.x_bound, config.radius, horizon as f64);
        let tuned = config.eta_override.is_none() && config.gamma_override.is_none();
        let default_beta = match config.loss {
            LossKind::Hinge { beta } => (beta - 1.0 / k).abs() < 1e-15,
            _ => true,
        };
        let u2 = u_norm * u_norm;
        let closed = match (tuned && default_beta, config.feedback, config.loss) {
            (false, _, _) => None,
            (true, Feedback::FullInfo, LossKind::Logistic) => {
                Some((BoundForm::FullLogistic, k * x * x * u2 / LN_2))
            }
            (true, Feedback::FullInfo, LossKind::Hinge { .. }) => {
                Some((BoundForm::FullHinge, k * k * x * x * u2 / (2.0 * (k - 1.0))))
            }
            (true, Feedback::FullInfo, LossKind::SmoothHinge) => {
                Some((BoundForm::FullSmoothHinge, 2.0 * k * x * x * u2))
            }
            (true, Feedback::Bandit, LossKind::Logistic) => {
                let kxd = k * x * d;
                let explore = f64::max(2.0 * kxd / LN_2, 2.0 * (t / LN_2).sqrt());
                let greedy = kxd / ((-2.0 * d * x).exp() * LN_2);
                Some((BoundForm::BanditLogistic, kxd * explore.min(greedy)))
            }
            (true, Feedback::Bandit, LossKind::Hinge { .. }) => Some((
                BoundForm::BanditHinge,
                f64::max(
                    k.powi(3) * x * x * d * d / (k - 1.0),
                    2.0 * k * x * d * (t / 2.0).sqrt(),
                ),
            )),
            (true, Feedback::Bandit, LossKind::SmoothHinge) => Some((
                BoundForm::BanditSmoothHinge,
                f64::max(
                    4.0 * k * k * x * x * d * d,
                    2.0 * k * x * d * (2.0 * t).sqrt(),
                ),
            )),
        };
        let (form, value) = closed.unwrap_or_else(|| {
            (
                BoundForm::Generic,
                u2 / (2.0 * params.eta) + params.gamma * (k - 1.0) / k * t,
            )
        });
        Self { form, value }
    }
}

/// Path-wise gradient-descent regret check:
/// `Σ(ℓ_t(W_t) − ℓ_t(U)) ≤ ‖U‖²/(2η) + Σ(η/2)‖g_t‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OgdAudit {
    pub regret: f64,
    pub bound: f64,
}

impl OgdAudit {
    pub fn holds(&self) -> bool {
        self.regret <= self.bound + BOUND_TOL
    }
}

/// One trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub config: GaptronConfig,
    pub params: Hyperparams,
    pub rounds: Vec<RoundAudit>,
    /// `M_T = Σ(1 − p'_t(y_t))`.
    pub expected_mistakes: f64,
    pub realized_mistakes: u64,
    /// `L_T = Σ ℓ_t(U)` with full-information losses.
    pub comparator_loss: f64,
    pub comparator_norm: f64,
    pub bound: BoundSpec,
    /// Rounds whose audited gap exceeded [`GAP_TOL`]: the path-wise surrogate
    /// gap in full information, the conditional gap under bandit feedback.
    pub gap_violations: usize,
    pub ogd: OgdAudit,
}

impl RunResult {
    /// `M_T ≤ L_T + bound + 1e-6`.
    pub fn bound_holds(&self) -> bool {
        self.expected_mistakes <= self.comparator_loss + self.bound.value + BOUND_TOL
    }

    pub fn max_surrogate_gap(&self) -> f64 {
        self.rounds
            .iter()
            .map(|r| r.surrogate_gap)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_conditional_gap(&self) -> Option<f64> {
        self.rounds
            .iter()
            .filter_map(|r| r.conditional_gap)
            .reduce(f64::max)
    }

    pub fn summary(&self) -> Summary {
        Summary {
            bound: self.bound,
            comparator_loss: self.comparator_loss,
            mistakes: self.expected_mistakes,
            mistakes_stderr: None,
            gap_violations: self.gap_violations,
            seeds: 1,
            config: config_echo(&self.config, self.params, self.rounds.len()),
        }
    }
}

fn comparator_for<'a>(
    config: &GaptronConfig,
    stream: &'a LabeledStream,
    comparator: Option<&'a WeightMatrix>,
) -> Result<&'a WeightMatrix> {
    let u = comparator.or(stream.comparator.as_ref()).ok_or_else(|| {
        Error::InvalidConfig("no comparator supplied and the stream carries none".into())
    })?;
    if u.classes() != config.classes || u.dim() != config.dim {
        return Err(Error::DimensionMismatch {
            expected: config.classes * config.dim,
            got: u.classes() * u.dim(),
        });
    }
    if u.norm() > config.radius + NORM_TOL {
        return Err(Error::ComparatorOutsideBall {
            norm: u.norm(),
            radius: config.radius,
        });
    }
    if stream.classes > config.classes || (!stream.is_empty() && stream.dim != config.dim) {
        return Err(Error::InvalidConfig(format!(
            "stream has K={} d={}, learner expects K={} d={}",
            stream.classes, stream.dim, config.classes, config.dim
        )));
    }
    Ok(u)
}

fn run_trajectory(
    config: GaptronConfig,
    stream: &LabeledStream,
    u: &WeightMatrix,
) -> Result<RunResult> {
    let mut learner = Gaptron::new(config.clone())?;
    let params = Hyperparams {
        eta: learner.eta(),
        gamma: learner.gamma(),
    };
    let mut rounds = Vec::with_capacity(stream.len());
    for example in &stream.examples {
        rounds.push(learner.step(example, Some(u))?);
    }
    let feedback = config.feedback;
    let mut expected_mistakes = 0.0;
    let mut realized = 0;
    let mut comparator_loss = 0.0;
    let mut fed_regret = 0.0;
    let mut grad_sum = 0.0;
    let mut gap_violations = 0;
    for r in &rounds {
        expected_mistakes += r.expected_mistake;
        realized += u64::from(r.realized_mistake);
        comparator_loss += r.comparator_loss.unwrap_or(0.0);
        fed_regret += r.fed_loss - r.comparator_fed_loss.unwrap_or(0.0);
        grad_sum += r.grad_norm_sq;
        let audited = match feedback {
            Feedback::FullInfo => r.surrogate_gap,
            Feedback::Bandit => r.conditional_gap.unwrap_or(f64::NEG_INFINITY),
        };
        if audited > GAP_TOL {
            gap_violations += 1;
        }
    }
    let u_norm = u.norm();
    let ogd = OgdAudit {
        regret: fed_regret,
        bound: u_norm * u_norm / (2.0 * params.eta) + 0.5 * params.eta * grad_sum,
    };
    let bound = BoundSpec::for_config(&config, params, u_norm, stream.len() as u64);
    Ok(RunResult {
        config,
        params,
        rounds,
        expected_mistakes,
        realized_mistakes: realized,
        comparator_loss,
        comparator_norm: u_norm,
        bound,
        gap_violations,
        ogd,
    })
}

/// Full-information run. The weight trajectory does not depend on the sampled
/// labels, so `M_T` is exact.
pub fn run_full_info(
    config: &GaptronConfig,
    stream: &LabeledStream,
    comparator: Option<&WeightMatrix>,
) -> Result<RunResult> {
    if config.feedback != Feedback::FullInfo {
        return Err(Error::InvalidConfig(
            "run_full_info needs a full-information configuration".into(),
        ));
    }
    let u = comparator_for(config, stream, comparator)?;
    let result = run_trajectory(config.clone(), stream, u)?;
    log::info!(
        "{}: M_T={:.4} L_T={:.4} bound={:.4} violations={}",
        config.loss.name(),
        result.expected_mistakes,
        result.comparator_loss,
        result.bound.value,
        result.gap_violations
    );
    Ok(result)
}

/// Seed-aggregated bandit runs.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditResult {
    /// Trajectories ordered by seed index.
    pub runs: Vec<RunResult>,
    pub mean_mistakes: f64,
    pub stderr_mistakes: f64,
    pub mean_comparator_loss: f64,
    pub bound: BoundSpec,
    pub gap_violations: usize,
}

impl BanditResult {
    /// Mean realized mistakes ≤ `L̄_T + bound + 3·stderr`.
    pub fn bound_holds(&self) -> bool {
        self.mean_mistakes
            <= self.mean_comparator_loss + self.bound.value + 3.0 * self.stderr_mistakes
    }

    pub fn summary(&self) -> Summary {
        let first = &self.runs[0];
        Summary {
            bound: self.bound,
            comparator_loss: self.mean_comparator_loss,
            mistakes: self.mean_mistakes,
            mistakes_stderr: Some(self.stderr_mistakes),
            gap_violations: self.gap_violations,
            seeds: self.runs.len(),
            config: config_echo(&first.config, first.params, first.rounds.len()),
        }
    }
}

/// Mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs `n_seeds` independent trajectories on the same stream, seeds
/// `config.rng_seed + i`, in parallel.
pub fn run_bandit(
    config: &GaptronConfig,
    stream: &LabeledStream,
    comparator: Option<&WeightMatrix>,
    n_seeds: usize,
) -> Result<BanditResult> {
    if n_seeds < 1 {
        return Err(Error::NoSeeds);
    }
    if config.feedback != Feedback::Bandit {
        return Err(Error::InvalidConfig(
            "run_bandit needs a bandit configuration".into(),
        ));
    }
    let config = match config.horizon {
        Some(_) => config.clone(),
        None => config.clone().with_horizon(stream.len() as u64),
    };
    let u = comparator_for(&config, stream, comparator)?;
    let runs = (0..n_seeds)
        .into_par_iter()
        .map(|i| {
            run_trajectory(
                config
                    .clone()
                    .with_seed(config.rng_seed.wrapping_add(i as u64)),
                stream,
                u,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mistakes: Vec<f64> = runs.iter().map(|r| r.realized_mistakes as f64).collect();
    let (mean_mistakes, stderr_mistakes) = mean_stderr(&mistakes);
    let mean_comparator_loss = runs.iter().map(|r| r.comparator_loss).sum::<f64>() / n_seeds as f64;
    let gap_violations = runs.iter().map(|r| r.gap_violations).sum();
    let bound = runs[0].bound;
    log::info!(
        "bandit {}: mistakes={mean_mistakes:.2}±{stderr_mistakes:.2} L={mean_comparator_loss:.2} bound={:.2}",
        config.loss.name(),
        bound.value
    );
    Ok(BanditResult {
        runs,
        mean_mistakes,
        stderr_mistakes,
        mean_comparator_loss,
        bound,
        gap_violations,
    })
}

/// Mistakes of a baseline learner over a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub mistakes: u64,
    /// `Σ(1 − p_t(y_t))` under the baseline's own distribution.
    pub expected_mistakes: f64,
    pub cumulative_mistakes: Vec<u64>,
}

pub fn run_baseline(config: BaselineConfig, stream: &LabeledStream) -> Result<BaselineResult> {
    let mut learner = Baseline::new(config)?;
    let mut mistakes = 0;
    let mut expected = 0.0;
    let mut cumulative = Vec::with_capacity(stream.len());
    for example in &stream.examples {
        let r = learner.step(example)?;
        mistakes += u64::from(r.mistake);
        expected += 1.0 - r.prob_true;
        cumulative.push(mistakes);
    }
    Ok(BaselineResult {
        mistakes,
        expected_mistakes: expected,
        cumulative_mistakes: cumulative,
    })
}

/// Key=value report of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub bound: BoundSpec,
    pub comparator_loss: f64,
    pub mistakes: f64,
    pub mistakes_stderr: Option<f64>,
    pub gap_violations: usize,
    pub seeds: usize,
    pub config: Vec<(String, String)>,
}

impl Summary {
    pub fn regret(&self) -> f64 {
        self.mistakes - self.comparator_loss
    }

    pub fn slack(&self) -> f64 {
        self.comparator_loss + self.bound.value + 3.0 * self.mistakes_stderr.unwrap_or(0.0)
            - self.mistakes
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "bound={}", self.bound.value)?;
        writeln!(f, "bound_form={}", self.bound.form.name())?;
        writeln!(f, "L_T={}", self.comparator_loss)?;
        writeln!(f, "M_T={}", self.mistakes)?;
        if let Some(se) = self.mistakes_stderr {
            writeln!(f, "M_T_stderr={se}")?;
        }
        writeln!(f, "regret_actual={}", self.regret())?;
        writeln!(f, "slack={}", self.slack())?;
        writeln!(f, "holds={}", self.slack() >= -BOUND_TOL)?;
        writeln!(f, "gap_violations={}", self.gap_violations)?;
        writeln!(f, "seeds={}", self.seeds)?;
        for (k, v) in &self.config {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

fn config_echo(
    config: &GaptronConfig,
    params: Hyperparams,
    horizon: usize,
) -> Vec<(String, String)> {
    vec![
        ("loss".into(), config.loss.to_string()),
        ("feedback".into(), config.feedback.name().into()),
        ("k".into(), config.classes.to_string()),
        ("d".into(), config.dim.to_string()),
        ("x_bound".into(), config.x_bound.to_string()),
        ("radius".into(), config.radius.to_string()),
        ("horizon".into(), horizon.to_string()),
        ("eta".into(), params.eta.to_string()),
        ("gamma".into(), params.gamma.to_string()),
        ("seed".into(), config.rng_seed.to_string()),
    ]
}

pub fn emit_summary(summary: &Summary, path: &Path) -> Result<()> {
    std::fs::write(path, summary.to_string()).map_err(|e| Error::io(path, e))
}

/// Parses `key=value` lines.
pub fn parse_summary(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes the 10-column round log.
pub fn write_round_csv<W: Write>(
    out: W,
    rounds: &[RoundAudit],
) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ROUND_COLUMNS)?;
    for r in rounds {
        w.write_record([
            r.t.to_string(),
            r.a_t.to_string(),
            r.mix.to_string(),
            r.expected_mistake.to_string(),
            u8::from(r.realized_mistake).to_string(),
            r.learner_loss.to_string(),
            opt(r.comparator_loss),
            r.grad_norm_sq.to_string(),
            r.surrogate_gap.to_string(),
            opt(r.conditional_gap),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(rounds: &[RoundAudit], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_round_csv(BufWriter::new(file), rounds).map_err(csv_err(path))
}

/// One parsed row of a round log.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRow {
    pub t: u64,
    pub a_t: f64,
    pub mix: f64,
    pub expected_mistake: f64,
    pub realized_mistake: bool,
    pub learner_loss: f64,
    pub comparator_loss: Option<f64>,
    pub grad_norm_sq: f64,
    pub surrogate_gap: f64,
    pub conditional_gap: Option<f64>,
}

/// Reads a round log, rejecting any other column layout.
pub fn read_round_csv(path: &Path) -> Result<Vec<RoundRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = reader.headers().map_err(csv_err(path))?.clone();
    if headers.iter().ne(ROUND_COLUMNS) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected round-log header {headers:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        let line = i + 2;
        let num = |j: usize| -> Result<f64> {
            record[j].parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad number {:?}", &record[j]),
            })
        };
        let maybe = |j: usize| -> Result<Option<f64>> {
            if record[j].is_empty() {
                Ok(None)
            } else {
                num(j).map(Some)
            }
        };
        rows.push(RoundRow {
            t: record[0].parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad round {:?}", &record[0]),
            })?,
            a_t: num(1)?,
            mix: num(2)?,
            expected_mistake: num(3)?,
            realized_mistake: num(4)? != 0.0,
            learner_loss: num(5)?,
            comparator_loss: maybe(6)?,
            grad_norm_sq: num(7)?,
            surrogate_gap: num(8)?,
            conditional_gap: maybe(9)?,
        });
    }
    Ok(rows)
}

/// One row of the abstention log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbstentionRow {
    pub t: usize,
    pub b: f64,
    pub expected_loss: f64,
    pub cumulative_expected_loss: f64,
    pub best_expert_loss: f64,
    /// Best expert loss so far plus the regret term evaluated on the prefix.
    pub bound: f64,
}

/// Running comparison of the learner's expected loss with the bound.
pub fn abstention_rows(outcomes: &[AbstentionOutcome]) -> Vec<AbstentionRow> {
    let experts = outcomes.first().map_or(1, |o| o.expert_losses.len());
    let ln_d = (experts as f64).ln();
    let mut totals = vec![0.0; experts];
    let (mut cum, mut sum_v, mut max_cost) = (0.0, 0.0, 0.0f64);
    outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| {
            cum += o.expected_loss;
            sum_v += o.v;
            max_cost = max_cost.max(o.cost);
            for (t, l) in totals.iter_mut().zip(&o.expert_losses) {
                *t += l;
            }
            let best = totals.iter().copied().fold(f64::INFINITY, f64::min);
            let fast = if max_cost < 0.5 {
                ln_d / (1.0 - 2.0 * max_cost)
            } else {
                f64::INFINITY
            };
            let regret = f64::min(fast, 2.0 * (ln_d * sum_v).sqrt()) + 4.0 / 3.0 * ln_d + 2.0;
            AbstentionRow {
                t: i + 1,
                b: o.b,
                expected_loss: o.expected_loss,
                cumulative_expected_loss: cum,
                best_expert_loss: best,
                bound: best + regret,
            }
        })
        .collect()
}

pub fn write_abstention_csv<W: Write>(
    out: W,
    rows: &[AbstentionRow],
) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ABSTENTION_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            r.b.to_string(),
            r.expected_loss.to_string(),
            r.cumulative_expected_loss.to_string(),
            r.best_expert_loss.to_string(),
            r.bound.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_abstention_csv(rows: &[AbstentionRow], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_abstention_csv(BufWriter::new(file), rows).map_err(csv_err(path))
}

impl fmt::Display for AbstentionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rounds={}", self.rounds)?;
        writeln!(f, "experts={}", self.experts)?;
        writeln!(f, "learner_loss={}", self.learner_loss)?;
        writeln!(f, "best_expert_loss={}", self.best_expert_loss)?;
        writeln!(f, "bound={}", self.regret_bound)?;
        writeln!(
            f,
            "regret_actual={}",
            self.learner_loss - self.best_expert_loss
        )?;
        writeln!(f, "holds={}", self.holds)?;
        writeln!(f, "max_abstention_gap={}", self.max_abstention_gap)?;
        writeln!(f, "adahedge_excess={}", self.adahedge_excess)?;
        writeln!(f, "fixed_rate_slack={}", self.fixed_rate_slack)
    }
}

/// A point on the smooth-hinge surrogate-gap picture for `K = 2`, `‖x‖ = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Figure1Point {
    pub z: f64,
    /// Smooth hinge loss at margin `z`.
    pub green: f64,
    /// `1[z ≤ 0] + (η/2)‖g‖²`: the argmax learner's side of the gap.
    pub red: f64,
    /// `(1 − a)1[z ≤ 0] + a/2 + (η/2)‖g‖²` with `a = (1 − min{1, |z|})²`.
    pub blue: f64,
}

/// `‖g‖²` of the smooth hinge at margin `z` for two classes and `‖x‖ = 1`.
fn figure1_grad_sq(z: f64) -> f64 {
    if z <= 0.0 {
        4.0
    } else if z < 1.0 {
        4.0 * (1.0 - z).powi(2)
    } else {
        0.0
    }
}

pub fn figure1_point(eta: f64, z: f64) -> Figure1Point {
    let wrong = if z <= 0.0 { 1.0 } else { 0.0 };
    let reg = 0.5 * eta * figure1_grad_sq(z);
    let a = (1.0 - z.abs().min(1.0)).powi(2);
    Figure1Point {
        z,
        green: smooth_hinge_of_margin(z),
        red: wrong + reg,
        blue: (1.0 - a) * wrong + 0.5 * a + reg,
    }
}

/// Curves on `z ∈ [−1.5, 1.5]` with the given step.
pub fn figure1_curves(eta: f64, step: f64) -> Result<Vec<Figure1Point>> {
    if !(eta > 0.0) || !(step > 0.0) {
        return Err(Error::InvalidConfig(
            "gap curves need a positive eta and grid step".into(),
        ));
    }
    let n = (3.0 / step).round() as usize;
    Ok((0..=n)
        .map(|i| figure1_point(eta, -1.5 + 3.0 * i as f64 / n as f64))
        .collect())
}

pub fn write_figure1_csv<W: Write>(
    out: W,
    points: &[Figure1Point],
) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["z", "green", "red", "blue"])?;
    for p in points {
        w.write_record([
            p.z.to_string(),
            p.green.to_string(),
            p.red.to_string(),
            p.blue.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_figure1_csv(points: &[Figure1Point], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_figure1_csv(BufWriter::new(file), points).map_err(csv_err(path))
}

/// One cell of a `(K, T)` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub classes: usize,
    pub horizon: usize,
    pub bound: f64,
    pub comparator_loss: f64,
    pub mistakes: f64,
    pub stderr: f64,
    pub gap_violations: usize,
}

/// Runs `template` on a fresh stream for every `(K, T)` pair. Streams come
/// from `make_stream(K, T)`; hinge losses are re-tuned to `β = 1/K`.
pub fn sweep<F>(
    template: &GaptronConfig,
    ks: &[usize],
    ts: &[usize],
    seeds: usize,
    make_stream: F,
) -> Result<Vec<SweepRow>>
where
    F: Fn(usize, usize) -> Result<LabeledStream>,
{
    let mut rows = Vec::with_capacity(ks.len() * ts.len());
    for &k in ks {
        for &t in ts {
            let stream = make_stream(k, t)?;
            let mut config = template.clone();
            config.classes = k;
            config.dim = stream.dim;
            if let LossKind::Hinge { .. } = config.loss {
                config.loss = LossKind::hinge_for(k);
            }
            config.horizon = Some(t as u64);
            derive_hyperparams(&config)?;
            let row = match config.feedback {
                Feedback::FullInfo => {
                    let r = run_full_info(&config, &stream, None)?;
                    SweepRow {
                        classes: k,
                        horizon: t,
                        bound: r.bound.value,
                        comparator_loss: r.comparator_loss,
                        mistakes: r.expected_mistakes,
                        stderr: 0.0,
                        gap_violations: r.gap_violations,
                    }
                }
                Feedback::Bandit => {
                    let r = run_bandit(&config, &stream, None, seeds)?;
                    SweepRow {
                        classes: k,
                        horizon: t,
                        bound: r.bound.value,
                        comparator_loss: r.mean_comparator_loss,
                        mistakes: r.mean_mistakes,
                        stderr: r.stderr_mistakes,
                        gap_violations: r.gap_violations,
                    }
                }
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "k",
        "t",
        "bound",
        "comparator_loss",
        "mistakes",
        "stderr",
        "gap_violations",
    ])?;
    for r in rows {
        w.write_record([
            r.classes.to_string(),
            r.horizon.to_string(),
            r.bound.to_string(),
            r.comparator_loss.to_string(),
            r.mistakes.to_string(),
            r.stderr.to_string(),
            r.gap_violations.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Example;

    fn tiny_stream(examples: Vec<Example>, k: usize, d: usize) -> LabeledStream {
        LabeledStream {
            examples,
            classes: k,
            dim: d,
            comparator: None,
            spec: None,
        }
    }

    #[test]
    fn empty_stream_gives_zero_totals() {
        let cfg = GaptronConfig::new(LossKind::Logistic, Feedback::FullInfo, 2, 2, 1.0, 1.0);
        let u = WeightMatrix::zeros(2, 2, 1.0).unwrap();
        let r = run_full_info(&cfg, &tiny_stream(vec![], 2, 2), Some(&u)).unwrap();
        assert_eq!(
            (r.expected_mistakes, r.comparator_loss, r.realized_mistakes),
            (0.0, 0.0, 0)
        );
        assert!(r.rounds.is_empty());
    }

    #[test]
    fn first_logistic_round_from_zero() {
        let cfg = GaptronConfig::new(LossKind::Logistic, Feedback::FullInfo, 2, 2, 1.0, 1.0);
        let u = WeightMatrix::zeros(2, 2, 1.0).unwrap();
        // the tie at W = 0 goes to class 0
        let hit = run_full_info(
            &cfg,
            &tiny_stream(vec![Example::new(vec![1.0, 0.0], 0)], 2, 2),
            Some(&u),
        )
        .unwrap();
        assert!((hit.expected_mistakes - 0.25).abs() < 1e-15);
        let miss = run_full_info(
            &cfg,
            &tiny_stream(vec![Example::new(vec![1.0, 0.0], 1)], 2, 2),
            Some(&u),
        )
        .unwrap();
        assert!((miss.expected_mistakes - 0.75).abs() < 1e-15);
    }

    #[test]
    fn comparator_outside_ball_is_rejected() {
        let cfg = GaptronConfig::new(LossKind::SmoothHinge, Feedback::FullInfo, 2, 1, 1.0, 1.0);
        let u = WeightMatrix::from_rows(&[vec![2.0], vec![0.0]], f64::INFINITY).unwrap();
        let err = run_full_info(&cfg, &tiny_stream(vec![], 2, 1), Some(&u)).unwrap_err();
        assert!(matches!(err, Error::ComparatorOutsideBall { .. }));
    }

    #[test]
    fn bandit_needs_a_seed() {
        let cfg = GaptronConfig::new(LossKind::SmoothHinge, Feedback::Bandit, 2, 1, 1.0, 1.0)
            .with_horizon(1);
        let u = WeightMatrix::zeros(2, 1, 1.0).unwrap();
        assert!(matches!(
            run_bandit(&cfg, &tiny_stream(vec![], 2, 1), Some(&u), 0),
            Err(Error::NoSeeds)
        ));
    }

    #[test]
    fn closed_forms_match_learning_rate_form() {
        for loss in [
            LossKind::Logistic,
            LossKind::hinge_for(5),
            LossKind::SmoothHinge,
        ] {
            let cfg = GaptronConfig::new(loss, Feedback::FullInfo, 5, 3, 3.0, 1.5);
            let p = derive_hyperparams(&cfg).unwrap();
            let b = BoundSpec::for_config(&cfg, p, 2.0, 100);
            assert!(
                (b.value - 4.0 / (2.0 * p.eta)).abs() < 1e-9 * b.value,
                "{loss:?}"
            );
            assert_ne!(b.form, BoundForm::Generic);
        }
    }

    #[test]
    fn overrides_fall_back_to_generic_bound() {
        let cfg = GaptronConfig::new(LossKind::SmoothHinge, Feedback::Bandit, 3, 2, 1.0, 1.0)
            .with_eta(0.1)
            .with_gamma(0.3);
        let p = derive_hyperparams(&cfg).unwrap();
        let b = BoundSpec::for_config(&cfg, p, 1.0, 100);
        assert_eq!(b.form, BoundForm::Generic);
        assert!((b.value - (5.0 + 0.3 * 2.0 / 3.0 * 100.0)).abs() < 1e-12);
    }

    #[test]
    fn figure1_at_zero_margin() {
        let p = figure1_point(0.125, 0.0);
        assert_eq!((p.red, p.blue, p.green), (1.25, 0.75, 1.0));
        let q = figure1_point(0.125, 1.0);
        assert_eq!((q.green, q.red), (0.0, 0.0));
    }

    #[test]
    fn figure1_grid_shape() {
        let pts = figure1_curves(0.125, 0.01).unwrap();
        assert_eq!(pts.len(), 301);
        assert_eq!(pts[0].z, -1.5);
        assert_eq!(pts[300].z, 1.5);
        assert!(figure1_curves(0.0, 0.01).is_err());
    }

    #[test]
    fn empty_round_log_is_header_only() {
        let mut buf = Vec::new();
        write_round_csv(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            format!("{}\n", ROUND_COLUMNS.join(","))
        );
    }

    #[test]
    fn summary_lists_required_keys() {
        let cfg = GaptronConfig::new(LossKind::Logistic, Feedback::FullInfo, 2, 2, 1.0, 1.0);
        let u = WeightMatrix::zeros(2, 2, 1.0).unwrap();
        let r = run_full_info(
            &cfg,
            &tiny_stream(vec![Example::new(vec![1.0, 0.0], 1)], 2, 2),
            Some(&u),
        )
        .unwrap();
        let keys: Vec<String> = parse_summary(&r.summary().to_string())
            .into_iter()
            .map(|(k, _)| k)
            .collect();
        for key in [
            "bound",
            "L_T",
            "M_T",
            "regret_actual",
            "gap_violations",
            "seeds",
            "loss",
            "eta",
        ] {
            assert!(keys.iter().any(|k| k == key), "{key}");
        }
    }

    #[test]
    fn mean_stderr_of_constant_is_zero() {
        assert_eq!(mean_stderr(&[2.0, 2.0, 2.0]), (2.0, 0.0));
        let (m, s) = mean_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}
