//! The Gaptron learner.
//!
//! Each round the learner computes `y* = argmax_k ⟨W^k, x⟩`, the gap map
//! `a = a(W, x)`, and predicts by sampling from
//!
//! ```text
//! p' = (1 − max{a, γ})·e_{y*} + max{a, γ}·(1/K)·1
//! ```
//!
//! It then takes one projected gradient step on the (full-information or
//! importance-weighted) surrogate loss. In the full-information regime the
//! weight trajectory never depends on the sampled label, so expected mistakes
//! can be summed exactly.

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{norm_sq, top2, Example, WeightMatrix, NORM_TOL};
use crate::losses::{
    self, comparator_loss, importance_weighted, loss_grad_from_scores, LossGrad, LossKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feedback {
    FullInfo,
    Bandit,
}

impl Feedback {
    pub fn name(&self) -> &'static str {
        match self {
            Feedback::FullInfo => "full",
            Feedback::Bandit => "bandit",
        }
    }
}

impl FromStr for Feedback {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" | "full-info" | "full_info" => Ok(Feedback::FullInfo),
            "bandit" => Ok(Feedback::Bandit),
            _ => Err(Error::InvalidConfig(format!("unknown feedback {s:?}"))),
        }
    }
}

/// What to do with a feature vector whose norm exceeds `X`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormPolicy {
    #[default]
    Strict,
    /// Multiply by `X/‖x‖` and log a warning.
    Rescale,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaptronConfig {
    pub loss: LossKind,
    pub feedback: Feedback,
    pub classes: usize,
    pub dim: usize,
    /// Radius `D` of the feasible Frobenius ball.
    pub radius: f64,
    /// Bound `X` on feature norms.
    pub x_bound: f64,
    /// Horizon `T`; required for bandit tuning.
    pub horizon: Option<u64>,
    pub eta_override: Option<f64>,
    pub gamma_override: Option<f64>,
    pub rng_seed: u64,
    pub norm_policy: NormPolicy,
}

impl GaptronConfig {
    pub fn new(
        loss: LossKind,
        feedback: Feedback,
        classes: usize,
        dim: usize,
        radius: f64,
        x_bound: f64,
    ) -> Self {
        Self {
            loss,
            feedback,
            classes,
            dim,
            radius,
            x_bound,
            horizon: None,
            eta_override: None,
            gamma_override: None,
            rng_seed: 0,
            norm_policy: NormPolicy::Strict,
        }
    }

    pub fn with_horizon(mut self, horizon: u64) -> Self {
        self.horizon = Some(horizon);
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta_override = Some(eta);
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma_override = Some(gamma);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_norm_policy(mut self, policy: NormPolicy) -> Self {
        self.norm_policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::TooFewClasses(self.classes));
        }
        if self.dim < 1 {
            return Err(Error::InvalidConfig(
                "feature dimension must be at least 1".into(),
            ));
        }
        if !(self.radius > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "radius D must be positive, got {}",
                self.radius
            )));
        }
        if !(self.x_bound > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "feature bound X must be positive, got {}",
                self.x_bound
            )));
        }
        self.loss.validate()?;
        if self.feedback == Feedback::Bandit && self.gamma_override.is_none() {
            match self.horizon {
                None => return Err(Error::MissingHorizon),
                Some(0) => return Err(Error::InvalidConfig("horizon T must be at least 1".into())),
                Some(_) => {}
            }
        }
        if let Some(g) = self.gamma_override {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::InvalidConfig(format!(
                    "gamma must lie in [0,1], got {g}"
                )));
            }
        }
        if let Some(eta) = self.eta_override {
            if !(eta > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "eta must be positive, got {eta}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub eta: f64,
    pub gamma: f64,
}

/// Regret of the bandit-logistic tuning for a given `γ`: `D²/(2η) + γT`.
fn bandit_logistic_regret(k: f64, x: f64, d: f64, t: f64, gamma: f64) -> f64 {
    let delta = (1.0 - gamma) * (-2.0 * d * x).exp() + gamma;
    k * k * x * x * d * d / (LN_2 * delta) + gamma * t
}

fn bandit_logistic_eta(k: f64, x: f64, d: f64, gamma: f64) -> f64 {
    let delta = (1.0 - gamma) * (-2.0 * d * x).exp() + gamma;
    LN_2 * delta / (2.0 * k * k * x * x)
}

/// Learning rate and exploration rate for a configuration.
///
/// Overrides bypass derivation; when only `γ` is overridden the learning rate
/// is still derived from it.
pub fn derive_hyperparams(config: &GaptronConfig) -> Result<Hyperparams> {
    config.validate()?;
    let k = config.classes as f64;
    let x2 = config.x_bound * config.x_bound;
    let (x, d) = (config.x_bound, config.radius);

    let gamma = match (config.gamma_override, config.feedback) {
        (Some(g), _) => g,
        (None, Feedback::FullInfo) => 0.0,
        (None, Feedback::Bandit) => {
            let t = config.horizon.ok_or(Error::MissingHorizon)? as f64;
            match config.loss {
                LossKind::Hinge { beta } => f64::min(
                    1.0,
                    (k.powi(3) * x2 * d * d / (2.0 * (1.0 - beta) * (k - 1.0) * t)).sqrt(),
                ),
                LossKind::SmoothHinge => f64::min(1.0, (2.0 * k * k * x2 * d * d / t).sqrt()),
                LossKind::Logistic => {
                    let explore = f64::min(1.0, (k * k * x2 * d * d / (LN_2 * t)).sqrt());
                    let greedy = bandit_logistic_regret(k, x, d, t, 0.0);
                    if bandit_logistic_regret(k, x, d, t, explore) < greedy {
                        explore
                    } else {
                        0.0
                    }
                }
            }
        }
    };

    let eta = match config.eta_override {
        Some(eta) => eta,
        None => match (config.feedback, config.loss) {
            (Feedback::FullInfo, LossKind::Logistic) => LN_2 / (2.0 * k * x2),
            (Feedback::FullInfo, LossKind::Hinge { beta }) => (1.0 - beta) / (k * x2),
            (Feedback::FullInfo, LossKind::SmoothHinge) => 1.0 / (4.0 * k * x2),
            (Feedback::Bandit, LossKind::Logistic) => bandit_logistic_eta(k, x, d, gamma),
            (Feedback::Bandit, LossKind::Hinge { beta }) => gamma * (1.0 - beta) / (k * k * x2),
            (Feedback::Bandit, LossKind::SmoothHinge) => gamma / (4.0 * k * k * x2),
        },
    };
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "learning rate must be positive and finite, got {eta}"
        )));
    }
    Ok(Hyperparams { eta, gamma })
}

/// The mixture `p'` the learner samples its prediction from.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionDistribution {
    pub probs: Vec<f64>,
    pub y_star: usize,
    /// Gap map value `a_t`.
    pub a_t: f64,
    /// `max{a_t, γ}`.
    pub mix: f64,
}

impl PredictionDistribution {
    pub fn new(y_star: usize, classes: usize, a_t: f64, gamma: f64) -> Self {
        let mix = a_t.max(gamma);
        let mut probs = vec![mix / classes as f64; classes];
        probs[y_star] += 1.0 - mix;
        Self {
            probs,
            y_star,
            a_t,
            mix,
        }
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.probs[k]
    }

    /// Inverse CDF in index order.
    pub fn sample(&self, u: f64) -> usize {
        let mut acc = 0.0;
        let mut last = self.y_star;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last = k;
                if u < acc {
                    return k;
                }
            }
        }
        last
    }
}

/// A prediction together with what the update step needs from it.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub dist: PredictionDistribution,
    pub label: usize,
    /// The (possibly rescaled) features the learner acted on.
    pub features: Vec<f64>,
    pub scores: Vec<f64>,
}

/// What the environment reveals after a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observation {
    /// Full information: the true label.
    Label(usize),
    /// Bandit: whether the prediction was correct.
    Correct(bool),
}

/// The loss and gradient the learner fed to its gradient step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateInfo {
    pub fed_loss: f64,
    pub grad_norm_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundAudit {
    /// One-based round index.
    pub t: u64,
    pub a_t: f64,
    pub mix: f64,
    pub y_star: usize,
    pub label: usize,
    pub predicted: usize,
    /// `1 − p'_t(y_t)`.
    pub expected_mistake: f64,
    pub realized_mistake: bool,
    /// Full-information surrogate loss at `W_t`.
    pub learner_loss: f64,
    /// Loss fed to the gradient step (importance weighted in the bandit regime).
    pub fed_loss: f64,
    pub grad_norm_sq: f64,
    /// `(1−a)1[y*≠y] + a(K−1)/K − ℓ_t(W_t) + (η/2)‖g_t‖²` with the fed loss and gradient.
    pub surrogate_gap: f64,
    /// Exact expectation of `surrogate_gap` over the sampled label (bandit only).
    pub conditional_gap: Option<f64>,
    /// Full-information loss of the comparator, if one was supplied.
    pub comparator_loss: Option<f64>,
    /// Loss fed at the comparator (importance weighted in the bandit regime).
    pub comparator_fed_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Gaptron {
    config: GaptronConfig,
    params: Hyperparams,
    weights: WeightMatrix,
    round: u64,
    rng: ChaCha8Rng,
}

impl Gaptron {
    pub fn new(config: GaptronConfig) -> Result<Self> {
        let params = derive_hyperparams(&config)?;
        let weights = WeightMatrix::zeros(config.classes, config.dim, config.radius)?;
        let rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        Ok(Self {
            config,
            params,
            weights,
            round: 0,
            rng,
        })
    }

    pub fn config(&self) -> &GaptronConfig {
        &self.config
    }

    pub fn eta(&self) -> f64 {
        self.params.eta
    }

    pub fn gamma(&self) -> f64 {
        self.params.gamma
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    /// Rounds completed so far.
    pub fn round(&self) -> u64 {
        self.round
    }

    /// Replaces the weights, e.g. to audit arbitrary states. Projects onto the ball.
    pub fn set_weights(&mut self, weights: WeightMatrix) -> Result<()> {
        if weights.classes() != self.config.classes || weights.dim() != self.config.dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.classes * self.config.dim,
                got: weights.classes() * weights.dim(),
            });
        }
        self.weights = weights.with_radius(self.config.radius);
        Ok(())
    }

    fn admit_features(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.config.dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.dim,
                got: x.len(),
            });
        }
        let norm = norm_sq(x).sqrt();
        let bound = self.config.x_bound;
        if norm <= bound + NORM_TOL {
            return Ok(x.to_vec());
        }
        match self.config.norm_policy {
            NormPolicy::Strict => Err(Error::FeatureNorm { norm, bound }),
            NormPolicy::Rescale => {
                log::warn!("feature norm {norm} exceeds bound {bound}; rescaling");
                Ok(x.iter().map(|v| v * bound / norm).collect())
            }
        }
    }

    /// The prediction distribution at the current weights, without sampling.
    pub fn distribution(&self, x: &[f64]) -> Result<(PredictionDistribution, Vec<f64>, Vec<f64>)> {
        let features = self.admit_features(x)?;
        let scores = self.weights.class_scores(&features)?;
        let y_star = top2(&scores)?.index;
        let a_t = losses::gap_map(self.config.loss, &scores)?;
        let dist = PredictionDistribution::new(y_star, self.config.classes, a_t, self.params.gamma);
        Ok((dist, features, scores))
    }

    /// Builds `p'_t` and samples a label with exactly one uniform draw.
    pub fn predict(&mut self, x: &[f64]) -> Result<Prediction> {
        let (dist, features, scores) = self.distribution(x)?;
        let u: f64 = self.rng.gen();
        let label = dist.sample(u);
        Ok(Prediction {
            dist,
            label,
            features,
            scores,
        })
    }

    /// Takes the gradient step for a round given what the environment revealed.
    pub fn update(
        &mut self,
        prediction: &Prediction,
        observation: Observation,
    ) -> Result<UpdateInfo> {
        let step = self.fed_loss_grad(prediction, observation)?;
        self.weights
            .apply_gradient_step(&step.grad, self.params.eta)?;
        self.round += 1;
        Ok(UpdateInfo {
            fed_loss: step.loss,
            grad_norm_sq: step.grad.norm_sq(),
        })
    }

    fn fed_loss_grad(&self, prediction: &Prediction, observation: Observation) -> Result<LossGrad> {
        let kind = self.config.loss;
        let (x, scores) = (&prediction.features, &prediction.scores);
        match (self.config.feedback, observation) {
            (Feedback::FullInfo, Observation::Label(y)) => {
                loss_grad_from_scores(kind, scores, x, y)
            }
            (Feedback::Bandit, Observation::Correct(true)) => {
                // a correct prediction reveals the label
                let y = prediction.label;
                let full = loss_grad_from_scores(kind, scores, x, y)?;
                importance_weighted(&full, y, y, prediction.dist.prob(y))
            }
            (Feedback::Bandit, Observation::Correct(false)) => Ok(LossGrad {
                loss: 0.0,
                grad: crate::linalg::RankedGradient::zero(self.config.classes, x),
            }),
            (Feedback::FullInfo, Observation::Correct(_)) => Err(Error::FeedbackMismatch(
                "full-information learner needs the true label",
            )),
            (Feedback::Bandit, Observation::Label(_)) => Err(Error::FeedbackMismatch(
                "bandit learner only accepts a correctness bit",
            )),
        }
    }

    /// One simulated round with a known label: predict, reveal what the
    /// regime allows, update, and audit.
    pub fn step(
        &mut self,
        example: &Example,
        comparator: Option<&WeightMatrix>,
    ) -> Result<RoundAudit> {
        let y = example.label;
        if y >= self.config.classes {
            return Err(Error::LabelOutOfRange {
                label: y + 1,
                classes: self.config.classes,
            });
        }
        let prediction = self.predict(&example.features)?;
        let kind = self.config.loss;
        let dist = &prediction.dist;
        let full = loss_grad_from_scores(kind, &prediction.scores, &prediction.features, y)?;
        let k = self.config.classes as f64;
        let eta = self.params.eta;
        let bias =
            (1.0 - dist.a_t) * if dist.y_star != y { 1.0 } else { 0.0 } + dist.a_t * (k - 1.0) / k;

        let (observation, conditional_gap) = match self.config.feedback {
            Feedback::FullInfo => (Observation::Label(y), None),
            Feedback::Bandit => (
                Observation::Correct(prediction.label == y),
                Some(expected_gap(&full, dist, y, eta)?),
            ),
        };

        let comparator_losses = match comparator {
            Some(u) => {
                let u_scores = u.class_scores(&prediction.features)?;
                let l = comparator_loss(kind, &prediction.scores, &u_scores, y)?;
                let fed = match self.config.feedback {
                    Feedback::FullInfo => l,
                    Feedback::Bandit if prediction.label == y => l / dist.prob(y),
                    Feedback::Bandit => 0.0,
                };
                Some((l, fed))
            }
            None => None,
        };

        let info = self.update(&prediction, observation)?;
        Ok(RoundAudit {
            t: self.round,
            a_t: dist.a_t,
            mix: dist.mix,
            y_star: dist.y_star,
            label: y,
            predicted: prediction.label,
            expected_mistake: 1.0 - dist.prob(y),
            realized_mistake: prediction.label != y,
            learner_loss: full.loss,
            fed_loss: info.fed_loss,
            grad_norm_sq: info.grad_norm_sq,
            surrogate_gap: bias - info.fed_loss + 0.5 * eta * info.grad_norm_sq,
            conditional_gap,
            comparator_loss: comparator_losses.map(|c| c.0),
            comparator_fed_loss: comparator_losses.map(|c| c.1),
        })
    }

    /// Exact expectation over `y' ~ p'` of the bandit surrogate gap at the
    /// current weights. Does not touch the learner's state.
    pub fn conditional_gap(&self, x: &[f64], y_true: usize) -> Result<f64> {
        if y_true >= self.config.classes {
            return Err(Error::LabelOutOfRange {
                label: y_true + 1,
                classes: self.config.classes,
            });
        }
        let (dist, features, scores) = self.distribution(x)?;
        let full = loss_grad_from_scores(self.config.loss, &scores, &features, y_true)?;
        expected_gap(&full, &dist, y_true, self.params.eta)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            classes: self.config.classes,
            dim: self.config.dim,
            radius: self.config.radius,
            loss: self.config.loss,
            feedback: self.config.feedback,
            eta: self.params.eta,
            gamma: self.params.gamma,
            round: self.round,
            weights: self.weights.as_slice().to_vec(),
        }
    }

    /// Resumes from a snapshot. The generator is re-seeded from `config` and
    /// advanced by one draw per completed round, so a resumed run samples the
    /// same labels as an uninterrupted one.
    pub fn restore(config: GaptronConfig, snapshot: &Snapshot) -> Result<Self> {
        let mut learner = Self::new(config)?;
        let c = &learner.config;
        if snapshot.classes != c.classes
            || snapshot.dim != c.dim
            || snapshot.radius != c.radius
            || snapshot.loss != c.loss
            || snapshot.feedback != c.feedback
        {
            return Err(Error::Snapshot(
                "snapshot does not match configuration".into(),
            ));
        }
        learner.params = Hyperparams {
            eta: snapshot.eta,
            gamma: snapshot.gamma,
        };
        learner.weights =
            WeightMatrix::from_flat(c.classes, c.dim, c.radius, snapshot.weights.clone())?;
        for _ in 0..snapshot.round {
            let _: f64 = learner.rng.gen();
        }
        learner.round = snapshot.round;
        Ok(learner)
    }
}

/// `Σ_{y'} p'(y')·[(1−a)1[y*≠y] + a(K−1)/K − ℓ̂(y') + (η/2)‖ĝ(y')‖²]`.
///
/// Outcomes with zero probability are never sampled and drop out of the sum.
pub fn expected_gap(
    full: &LossGrad,
    dist: &PredictionDistribution,
    y_true: usize,
    eta: f64,
) -> Result<f64> {
    let classes = dist.probs.len() as f64;
    let bias = (1.0 - dist.a_t) * if dist.y_star != y_true { 1.0 } else { 0.0 }
        + dist.a_t * (classes - 1.0) / classes;
    let mut expected_loss = 0.0;
    let mut expected_norm_sq = 0.0;
    for (y_pred, &p) in dist.probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let est = importance_weighted(full, y_true, y_pred, p)?;
        expected_loss += p * est.loss;
        expected_norm_sq += p * est.grad.norm_sq();
    }
    Ok(bias - expected_loss + 0.5 * eta * expected_norm_sq)
}

/// Flat text record of a learner's state.
///
/// One line, space separated: `K d D loss feedback η γ t` followed by the
/// `K·d` weights in row-major order. Reals carry 17 significant digits.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub classes: usize,
    pub dim: usize,
    pub radius: f64,
    pub loss: LossKind,
    pub feedback: Feedback,
    pub eta: f64,
    pub gamma: f64,
    pub round: u64,
    pub weights: Vec<f64>,
}

impl fmt::Display for Snapshot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {:.16e} {} {} {:.16e} {:.16e} {}",
            self.classes,
            self.dim,
            self.radius,
            self.loss,
            self.feedback.name(),
            self.eta,
            self.gamma,
            self.round
        )?;
        for w in &self.weights {
            write!(f, " {w:.16e}")?;
        }
        Ok(())
    }
}

impl FromStr for Snapshot {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut fields = s.split_whitespace();
        let mut next = |name: &str| {
            fields
                .next()
                .ok_or_else(|| Error::Snapshot(format!("missing {name}")))
        };
        fn num<T: FromStr>(v: &str, name: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Snapshot(format!("bad {name}: {v:?}")))
        }
        let classes: usize = num(next("K")?, "K")?;
        let dim: usize = num(next("d")?, "d")?;
        let radius: f64 = num(next("D")?, "D")?;
        let loss: LossKind = next("loss")?.parse()?;
        let feedback: Feedback = next("feedback")?.parse()?;
        let eta: f64 = num(next("eta")?, "eta")?;
        let gamma: f64 = num(next("gamma")?, "gamma")?;
        let round: u64 = num(next("t")?, "t")?;
        let weights = fields
            .map(|v| num(v, "weight"))
            .collect::<Result<Vec<f64>>>()?;
        if weights.len() != classes * dim {
            return Err(Error::Snapshot(format!(
                "expected {} weights, found {}",
                classes * dim,
                weights.len()
            )));
        }
        Ok(Self {
            classes,
            dim,
            radius,
            loss,
            feedback,
            eta,
            gamma,
            round,
            weights,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full(loss: LossKind, k: usize, d: usize) -> GaptronConfig {
        GaptronConfig::new(loss, Feedback::FullInfo, k, d, 10.0, 1.0)
    }

    #[test]
    fn full_info_learning_rates() {
        let p = derive_hyperparams(&full(LossKind::Logistic, 3, 2)).unwrap();
        assert!((p.eta - 0.115_524_530_093_324_2).abs() < 1e-15);
        assert_eq!(p.gamma, 0.0);
        let p = derive_hyperparams(&full(LossKind::hinge_for(2), 2, 2)).unwrap();
        assert_eq!((p.eta, p.gamma), (0.25, 0.0));
        let p = derive_hyperparams(&full(LossKind::SmoothHinge, 5, 2)).unwrap();
        assert!((p.eta - 0.05).abs() < 1e-15);
    }

    #[test]
    fn bandit_needs_horizon() {
        let cfg = GaptronConfig::new(LossKind::SmoothHinge, Feedback::Bandit, 3, 2, 1.0, 1.0);
        assert!(matches!(
            derive_hyperparams(&cfg),
            Err(Error::MissingHorizon)
        ));
    }

    #[test]
    fn bandit_rates_vanish_with_horizon() {
        let mut prev = f64::INFINITY;
        for t in [10u64, 1_000, 100_000, 10_000_000, 1_000_000_000] {
            let cfg = GaptronConfig::new(LossKind::SmoothHinge, Feedback::Bandit, 3, 2, 1.0, 1.0)
                .with_horizon(t);
            let p = derive_hyperparams(&cfg).unwrap();
            assert!(p.gamma <= prev);
            prev = p.gamma;
            assert!((p.eta - p.gamma / 36.0).abs() < 1e-15);
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn bandit_hinge_formula() {
        let (k, x, d, t) = (4.0f64, 2.0f64, 1.5f64, 1e6f64);
        let cfg = GaptronConfig::new(LossKind::hinge_for(4), Feedback::Bandit, 4, 3, d, x)
            .with_horizon(t as u64);
        let p = derive_hyperparams(&cfg).unwrap();
        let gamma = (k.powi(4) * x * x * d * d / (2.0 * (k - 1.0).powi(2) * t)).sqrt();
        assert!((p.gamma - gamma).abs() < 1e-15);
        assert!((p.eta - gamma * (k - 1.0) / (k.powi(3) * x * x)).abs() < 1e-15);
    }

    #[test]
    fn bandit_logistic_picks_cheaper_regime() {
        // small DX: exploring costs γT, greedy tuning is cheap
        let cfg = GaptronConfig::new(LossKind::Logistic, Feedback::Bandit, 2, 2, 0.1, 1.0)
            .with_horizon(1_000_000);
        assert_eq!(derive_hyperparams(&cfg).unwrap().gamma, 0.0);
        // large DX: e^{2DX} blows up the greedy regret
        let cfg = GaptronConfig::new(LossKind::Logistic, Feedback::Bandit, 2, 2, 5.0, 1.0)
            .with_horizon(1_000_000);
        let p = derive_hyperparams(&cfg).unwrap();
        assert!(p.gamma > 0.0);
        let delta = (1.0 - p.gamma) * (-10.0f64).exp() + p.gamma;
        assert!((p.eta - LN_2 * delta / 8.0).abs() < 1e-15);
    }

    #[test]
    fn overrides_bypass_derivation() {
        let cfg = full(LossKind::Logistic, 3, 2).with_eta(0.3).with_gamma(0.1);
        assert_eq!(
            derive_hyperparams(&cfg).unwrap(),
            Hyperparams {
                eta: 0.3,
                gamma: 0.1
            }
        );
    }

    #[test]
    fn mixture_at_zero_weights_logistic_binary() {
        let g = Gaptron::new(full(LossKind::Logistic, 2, 1)).unwrap();
        let (dist, _, _) = g.distribution(&[0.5]).unwrap();
        assert_eq!(dist.y_star, 0);
        assert_eq!(dist.a_t, 0.5);
        assert_eq!(dist.prob(0), 0.75);
        assert_eq!(dist.prob(1), 0.25);
    }

    #[test]
    fn mixture_extremes() {
        let d = PredictionDistribution::new(2, 4, 0.0, 0.0);
        assert_eq!(d.probs, vec![0.0, 0.0, 1.0, 0.0]);
        for u in [0.0, 0.3, 0.999_999] {
            assert_eq!(d.sample(u), 2);
        }
        let d = PredictionDistribution::new(2, 4, 1.0, 0.0);
        assert_eq!(d.probs, vec![0.25; 4]);
        assert_eq!(d.sample(0.1), 0);
        assert_eq!(d.sample(0.6), 2);
        let d = PredictionDistribution::new(1, 3, 0.2, 0.5);
        assert_eq!(d.mix, 0.5);
        assert!(d.probs.iter().all(|&p| p >= 0.5 / 3.0 - 1e-15));
    }

    #[test]
    fn strict_policy_rejects_long_features() {
        let mut g = Gaptron::new(full(LossKind::Logistic, 2, 2)).unwrap();
        assert!(matches!(
            g.predict(&[1.0, 1.0]),
            Err(Error::FeatureNorm { .. })
        ));
        let mut g =
            Gaptron::new(full(LossKind::Logistic, 2, 2).with_norm_policy(NormPolicy::Rescale))
                .unwrap();
        let p = g.predict(&[3.0, 4.0]).unwrap();
        assert!((p.features[0] - 0.6).abs() < 1e-15 && (p.features[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn hinge_first_step_by_hand() {
        let cfg = full(LossKind::hinge_for(3), 3, 2);
        let mut g = Gaptron::new(cfg).unwrap();
        let eta = g.eta();
        let x = [0.6, -0.8];
        let audit = g.step(&Example::new(x.to_vec(), 2), None).unwrap();
        // W = 0: y* = 0, runner-up for y = 2 is class 0
        let w = g.weights();
        assert_eq!(w.row(2), &[eta * 0.6, -eta * 0.8]);
        assert_eq!(w.row(0), &[-eta * 0.6, eta * 0.8]);
        assert_eq!(w.row(1), &[0.0, 0.0]);
        assert_eq!(audit.learner_loss, 1.0);
        assert!(audit.surrogate_gap <= 1e-9);
    }

    #[test]
    fn feedback_must_match_regime() {
        let mut g = Gaptron::new(full(LossKind::Logistic, 2, 1)).unwrap();
        let p = g.predict(&[0.5]).unwrap();
        assert!(matches!(
            g.update(&p, Observation::Correct(true)),
            Err(Error::FeedbackMismatch(_))
        ));
        let cfg = GaptronConfig::new(LossKind::Logistic, Feedback::Bandit, 2, 1, 1.0, 1.0)
            .with_horizon(100);
        let mut g = Gaptron::new(cfg).unwrap();
        let p = g.predict(&[0.5]).unwrap();
        assert!(matches!(
            g.update(&p, Observation::Label(0)),
            Err(Error::FeedbackMismatch(_))
        ));
    }

    #[test]
    fn bandit_miss_leaves_weights() {
        let cfg = GaptronConfig::new(LossKind::SmoothHinge, Feedback::Bandit, 3, 2, 1.0, 1.0)
            .with_horizon(100);
        let mut g = Gaptron::new(cfg).unwrap();
        let p = g.predict(&[0.6, 0.8]).unwrap();
        let before = g.weights().clone();
        let info = g.update(&p, Observation::Correct(false)).unwrap();
        assert_eq!(info.fed_loss, 0.0);
        assert_eq!(g.weights(), &before);
        assert_eq!(g.round(), 1);
    }

    #[test]
    fn pure_exploration_gap_is_finite() {
        for loss in [
            LossKind::Logistic,
            LossKind::hinge_for(4),
            LossKind::SmoothHinge,
        ] {
            let cfg = GaptronConfig::new(loss, Feedback::Bandit, 4, 2, 1.0, 1.0).with_gamma(1.0);
            let g = Gaptron::new(cfg).unwrap();
            let (dist, _, _) = g.distribution(&[0.6, 0.8]).unwrap();
            assert!(dist.probs.iter().all(|&p| (p - 0.25).abs() < 1e-15));
            assert!(g.conditional_gap(&[0.6, 0.8], 3).unwrap().is_finite());
        }
    }

    #[test]
    fn snapshot_text_round_trip_and_resume() {
        let cfg = GaptronConfig::new(LossKind::hinge_for(3), Feedback::Bandit, 3, 2, 2.0, 1.0)
            .with_horizon(50)
            .with_seed(9);
        let stream: Vec<Example> = (0..40)
            .map(|i| Example::new(vec![(i as f64).cos() * 0.9, (i as f64).sin() * 0.9], i % 3))
            .collect();

        let mut straight = Gaptron::new(cfg.clone()).unwrap();
        let mut picks = Vec::new();
        for e in &stream {
            picks.push(straight.step(e, None).unwrap().predicted);
        }

        let mut first = Gaptron::new(cfg.clone()).unwrap();
        for e in &stream[..17] {
            first.step(e, None).unwrap();
        }
        let text = first.snapshot().to_string();
        let snap: Snapshot = text.parse().unwrap();
        assert_eq!(snap, first.snapshot());
        let mut resumed = Gaptron::restore(cfg, &snap).unwrap();
        let mut resumed_picks: Vec<usize> = picks[..17].to_vec();
        for e in &stream[17..] {
            resumed_picks.push(resumed.step(e, None).unwrap().predicted);
        }
        assert_eq!(picks, resumed_picks);
        assert_eq!(resumed.weights(), straight.weights());
    }

    #[test]
    fn snapshot_rejects_short_record() {
        assert!("2 2 1 logistic full 0.1 0 3 0.0 0.0"
            .parse::<Snapshot>()
            .is_err());
        assert!("2 2 1 logistic sideways 0.1 0 3 0 0 0 0"
            .parse::<Snapshot>()
            .is_err());
    }
}
