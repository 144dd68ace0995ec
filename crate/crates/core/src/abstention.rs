//! Binary prediction with expert advice and an abstention option.
//!
//! Expert weights come from AdaHedge: `p̂_i ∝ exp(−η L_i)` with `η = ln(d)/Δ`, where `Δ` is the
//! cumulative mixability gap. While `Δ = 0` it follows the leader.
//!
//! Given `ŷ = ⟨p̂, y⟩` the learner predicts `sign(ŷ)` with probability `|ŷ|`
//! and abstains (at cost `c_t`) with probability `b = 1 − |ŷ|`. Losses are
//! `½(1 − y·y')`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertRound {
    /// Expert predictions in `[−1, 1]`.
    pub predictions: Vec<f64>,
    /// True label, `−1` or `+1`.
    pub label: i8,
    /// Abstention cost in `[0, 1]`.
    pub cost: f64,
}

impl ExpertRound {
    fn validate(&self, experts: usize) -> Result<()> {
        if self.predictions.len() != experts {
            return Err(Error::DimensionMismatch {
                expected: experts,
                got: self.predictions.len(),
            });
        }
        if self.predictions.iter().any(|p| !(-1.0..=1.0).contains(p)) {
            return Err(Error::InvalidConfig(
                "expert predictions must lie in [-1,1]".into(),
            ));
        }
        if self.label != 1 && self.label != -1 {
            return Err(Error::InvalidConfig(format!(
                "label must be ±1, got {}",
                self.label
            )));
        }
        if !(0.0..=1.0).contains(&self.cost) {
            return Err(Error::InvalidConfig(format!(
                "abstention cost must lie in [0,1], got {}",
                self.cost
            )));
        }
        Ok(())
    }
}

/// `½(1 − y·ŷ)`.
pub fn prediction_loss(label: i8, prediction: f64) -> f64 {
    0.5 * (1.0 - f64::from(label) * prediction)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaHedge {
    cum_losses: Vec<f64>,
    /// Cumulative mixability gap `Δ`.
    gap: f64,
}

impl AdaHedge {
    pub fn new(experts: usize) -> Result<Self> {
        if experts == 0 {
            return Err(Error::InvalidConfig("need at least one expert".into()));
        }
        Ok(Self {
            cum_losses: vec![0.0; experts],
            gap: 0.0,
        })
    }

    pub fn experts(&self) -> usize {
        self.cum_losses.len()
    }

    pub fn cumulative_losses(&self) -> &[f64] {
        &self.cum_losses
    }

    pub fn mixability_gap(&self) -> f64 {
        self.gap
    }

    /// `ln(d)/Δ`; infinite while `Δ = 0`.
    pub fn learning_rate(&self) -> f64 {
        let ln_d = (self.experts() as f64).ln();
        if self.gap > 0.0 {
            ln_d / self.gap
        } else {
            f64::INFINITY
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        hedge_weights(&self.cum_losses, self.learning_rate())
    }

    /// Feeds one round of expert losses; returns the round's mixability gap.
    pub fn update(&mut self, losses: &[f64]) -> f64 {
        let weights = self.weights();
        let delta = mixability_gap(&weights, losses, self.learning_rate());
        for (cum, l) in self.cum_losses.iter_mut().zip(losses) {
            *cum += l;
        }
        self.gap += delta;
        delta
    }
}

/// Exponential weights; `eta = ∞` (or a zero learning rate from `d = 1`)
/// puts uniform mass on the current leaders.
fn hedge_weights(cum_losses: &[f64], eta: f64) -> Vec<f64> {
    let min = cum_losses.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = if eta.is_finite() && eta > 0.0 {
        cum_losses
            .iter()
            .map(|l| (-eta * (l - min)).exp())
            .collect()
    } else {
        cum_losses
            .iter()
            .map(|&l| if l == min { 1.0 } else { 0.0 })
            .collect()
    };
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// `δ = ⟨w, ℓ⟩ + (1/η) ln⟨w, e^{−ηℓ}⟩`, clipped at zero against round-off.
fn mixability_gap(weights: &[f64], losses: &[f64], eta: f64) -> f64 {
    let hedge: f64 = weights.iter().zip(losses).map(|(w, l)| w * l).sum();
    let support_min = weights
        .iter()
        .zip(losses)
        .filter(|(w, _)| **w > 0.0)
        .map(|(_, &l)| l)
        .fold(f64::INFINITY, f64::min);
    let mix = if eta.is_finite() && eta > 0.0 {
        let s: f64 = weights
            .iter()
            .zip(losses)
            .map(|(w, l)| w * (-eta * (l - support_min)).exp())
            .sum();
        support_min - s.ln() / eta
    } else {
        support_min
    };
    (hedge - mix).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbstentionPrediction {
    Label(i8),
    Abstain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbstentionOutcome {
    pub prediction: AbstentionPrediction,
    /// `ŷ = ⟨p̂, y⟩`.
    pub y_hat: f64,
    /// `sign(ŷ)` with `sign(0) = +1`.
    pub y_star: i8,
    /// Abstention probability `1 − |ŷ|`.
    pub b: f64,
    pub realized_loss: f64,
    /// `(1 − b)·ℓ(y*) + b·c`.
    pub expected_loss: f64,
    /// `ℓ(ŷ)`, the loss AdaHedge's mixture suffers.
    pub hedge_loss: f64,
    pub expert_losses: Vec<f64>,
    /// `E_{i∼p̂}[(ℓ(ŷ) − ℓ(y^i))²]`.
    pub v: f64,
    pub cost: f64,
}

impl AbstentionOutcome {
    /// `(1−b)ℓ(y*) + c·b + η·v − ℓ(ŷ)`.
    pub fn abstention_gap(&self, eta: f64) -> f64 {
        self.expected_loss + eta * self.v - self.hedge_loss
    }

    /// The same gap with `v` replaced by its upper bound `½(1 − |ŷ|)`.
    pub fn abstention_gap_upper(&self, eta: f64) -> f64 {
        self.expected_loss + eta * 0.5 * (1.0 - self.y_hat.abs()) - self.hedge_loss
    }
}

/// Runs one round against `state`, sampling the abstention with one uniform draw.
pub fn abstention_round<R: Rng>(
    state: &mut AdaHedge,
    round: &ExpertRound,
    rng: &mut R,
) -> Result<AbstentionOutcome> {
    round.validate(state.experts())?;
    let weights = state.weights();
    let y_hat = weights
        .iter()
        .zip(&round.predictions)
        .map(|(w, p)| w * p)
        .sum::<f64>()
        .clamp(-1.0, 1.0);
    let y_star: i8 = if y_hat >= 0.0 { 1 } else { -1 };
    let b = (1.0 - y_hat.abs()).clamp(0.0, 1.0);

    let star_loss = prediction_loss(round.label, f64::from(y_star));
    let expected_loss = (1.0 - b) * star_loss + b * round.cost;
    let u: f64 = rng.gen();
    let (prediction, realized_loss) = if u < b {
        (AbstentionPrediction::Abstain, round.cost)
    } else {
        (AbstentionPrediction::Label(y_star), star_loss)
    };

    let expert_losses: Vec<f64> = round
        .predictions
        .iter()
        .map(|&p| prediction_loss(round.label, p))
        .collect();
    let hedge_loss = prediction_loss(round.label, y_hat);
    let v = weights
        .iter()
        .zip(&expert_losses)
        .map(|(w, l)| w * (hedge_loss - l).powi(2))
        .sum();
    state.update(&expert_losses);

    Ok(AbstentionOutcome {
        prediction,
        y_hat,
        y_star,
        b,
        realized_loss,
        expected_loss,
        hedge_loss,
        expert_losses,
        v,
        cost: round.cost,
    })
}

/// AdaHedge-with-abstention learner owning its generator.
#[derive(Debug, Clone)]
pub struct AbstentionLearner {
    hedge: AdaHedge,
    rng: ChaCha8Rng,
}

impl AbstentionLearner {
    pub fn new(experts: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            hedge: AdaHedge::new(experts)?,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn hedge(&self) -> &AdaHedge {
        &self.hedge
    }

    pub fn round(&mut self, round: &ExpertRound) -> Result<AbstentionOutcome> {
        abstention_round(&mut self.hedge, round, &mut self.rng)
    }

    pub fn run(&mut self, rounds: &[ExpertRound]) -> Result<Vec<AbstentionOutcome>> {
        rounds.iter().map(|r| self.round(r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbstentionReport {
    pub rounds: usize,
    pub experts: usize,
    /// `Σ (1−b_t)ℓ_t(y*_t) + b_t c_t`.
    pub learner_loss: f64,
    pub best_expert_loss: f64,
    pub sum_v: f64,
    pub max_cost: f64,
    /// `min{ln d/(1−2 max c), 2√(ln d Σv)} + (4/3) ln d + 2`.
    pub regret_bound: f64,
    pub holds: bool,
    /// Largest per-round abstention gap at `η_t = 1 − 2c_t`.
    pub max_abstention_gap: f64,
    /// Largest AdaHedge regret slack `Σ(ℓ(ŷ) − ℓ(y^i)) − (2√(ln d ΣV) + (4/3) ln d + 2)` over experts.
    pub adahedge_excess: f64,
    /// Best expert loss + ln(d)/η + Σ gaps + (4/3) ln d + 2 at the fixed `η = 1 − 2 max c`, minus the learner's loss.
    pub fixed_rate_slack: f64,
}

/// Checks the constant-regret guarantee on a completed trace using the exact
/// expected learner loss.
pub fn abstention_audit(outcomes: &[AbstentionOutcome]) -> Result<AbstentionReport> {
    for (t, o) in outcomes.iter().enumerate() {
        if !(o.cost < 0.5) {
            return Err(Error::AbstentionCost {
                round: t + 1,
                cost: o.cost,
            });
        }
    }
    let experts = outcomes.first().map_or(1, |o| o.expert_losses.len());
    let ln_d = (experts as f64).ln();
    let mut expert_totals = vec![0.0; experts];
    let (mut learner_loss, mut hedge_total, mut sum_v, mut max_cost) = (0.0, 0.0, 0.0, 0.0f64);
    let mut max_gap = f64::NEG_INFINITY;
    for o in outcomes {
        learner_loss += o.expected_loss;
        hedge_total += o.hedge_loss;
        sum_v += o.v;
        max_cost = max_cost.max(o.cost);
        for (tot, l) in expert_totals.iter_mut().zip(&o.expert_losses) {
            *tot += l;
        }
        max_gap = max_gap.max(o.abstention_gap(1.0 - 2.0 * o.cost));
    }
    let best_expert_loss = expert_totals.iter().copied().fold(f64::INFINITY, f64::min);
    let best_expert_loss = if outcomes.is_empty() {
        0.0
    } else {
        best_expert_loss
    };
    let constant = 4.0 / 3.0 * ln_d + 2.0;
    let variance_term = 2.0 * (ln_d * sum_v).sqrt();
    let regret_bound = f64::min(ln_d / (1.0 - 2.0 * max_cost), variance_term) + constant;

    let adahedge_excess = expert_totals
        .iter()
        .map(|l| hedge_total - l - (variance_term + constant))
        .fold(f64::NEG_INFINITY, f64::max);
    let eta = 1.0 - 2.0 * max_cost;
    let gap_sum: f64 = outcomes.iter().map(|o| o.abstention_gap(eta)).sum();
    let fixed_rate_slack = best_expert_loss + ln_d / eta + gap_sum + constant - learner_loss;

    Ok(AbstentionReport {
        rounds: outcomes.len(),
        experts,
        learner_loss,
        best_expert_loss,
        sum_v,
        max_cost,
        regret_bound,
        holds: learner_loss <= best_expert_loss + regret_bound + 1e-9,
        max_abstention_gap: if outcomes.is_empty() { 0.0 } else { max_gap },
        adahedge_excess: if outcomes.is_empty() {
            f64::NEG_INFINITY
        } else {
            adahedge_excess
        },
        fixed_rate_slack,
    })
}

/// Random expert rounds: expert `i` agrees with the clean label with
/// probability rising linearly from 0.5 to 0.9, with confidence drawn from
/// `[0.2, 1]`; the revealed label is flipped with probability `noise`.
pub fn random_rounds(
    experts: usize,
    horizon: usize,
    cost: f64,
    noise: f64,
    seed: u64,
) -> Vec<ExpertRound> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let accuracy = |i: usize| {
        if experts == 1 {
            0.7
        } else {
            0.5 + 0.4 * i as f64 / (experts - 1) as f64
        }
    };
    (0..horizon)
        .map(|_| {
            let clean: i8 = if rng.gen::<bool>() { 1 } else { -1 };
            let predictions = (0..experts)
                .map(|i| {
                    let agree = rng.gen::<f64>() < accuracy(i);
                    let confidence = rng.gen_range(0.2..=1.0);
                    let sign = if agree {
                        f64::from(clean)
                    } else {
                        -f64::from(clean)
                    };
                    sign * confidence
                })
                .collect();
            let label = if rng.gen::<f64>() < noise {
                -clean
            } else {
                clean
            };
            ExpertRound {
                predictions,
                label,
                cost,
            }
        })
        .collect()
}
