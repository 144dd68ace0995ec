//! Surrogate losses, their gradients, and the gap maps that pair with them.
//!
//! All three losses upper bound the zero-one loss of the argmax prediction and
//! have gradients of the form `c ⊗ x`. Logarithms are base 2.
//!
//! The multiclass hinge loss used here is zero when the learner is confidently
//! correct (`y* = y` and `m* > β`). That case is decided by the learner's
//! current weights, so evaluating the loss at a comparator needs the learner's
//! scores too; see [`comparator_loss`].

use std::f64::consts::LN_2;
use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{argmax_excluding, top2, RankedGradient, WeightMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Logistic,
    Hinge { beta: f64 },
    SmoothHinge,
}

impl LossKind {
    /// Hinge loss with the default margin threshold `β = 1/K`.
    pub fn hinge_for(classes: usize) -> Self {
        LossKind::Hinge {
            beta: 1.0 / classes as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LossKind::Hinge { beta } if !(beta > 0.0 && beta < 1.0) => Err(Error::InvalidConfig(
                format!("hinge beta must lie in (0,1), got {beta}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Logistic => "logistic",
            LossKind::Hinge { .. } => "hinge",
            LossKind::SmoothHinge => "smooth_hinge",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossKind::Hinge { beta } => write!(f, "hinge:{beta:.17e}"),
            other => f.write_str(other.name()),
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let kind = match s {
            "logistic" => LossKind::Logistic,
            "smooth_hinge" | "smooth-hinge" => LossKind::SmoothHinge,
            _ => match s.strip_prefix("hinge:") {
                Some(beta) => LossKind::Hinge {
                    beta: beta
                        .parse()
                        .map_err(|_| Error::InvalidConfig(format!("bad hinge beta {beta:?}")))?,
                },
                None => return Err(Error::InvalidConfig(format!("unknown loss {s:?}"))),
            },
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// Margins of a score vector with respect to a label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginInfo {
    pub y_star: usize,
    /// Top score minus runner-up score; equals `max_k m(W, k)`.
    pub m_star: f64,
    /// `m(W, y) = s_y − max_{k≠y} s_k`.
    pub margin: f64,
    /// `argmax_{k≠y} s_k`.
    pub runner_up: usize,
}

impl MarginInfo {
    pub fn new(scores: &[f64], label: usize) -> Result<Self> {
        let t = top2(scores)?;
        check_label(label, scores.len())?;
        let runner_up = argmax_excluding(scores, label);
        Ok(Self {
            y_star: t.index,
            m_star: t.top - t.second,
            margin: scores[label] - scores[runner_up],
            runner_up,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxInfo {
    pub probs: Vec<f64>,
    pub p_star: f64,
}

pub fn softmax(scores: &[f64]) -> SoftmaxInfo {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    let p_star = probs.iter().copied().fold(0.0, f64::max);
    SoftmaxInfo { probs, p_star }
}

fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

/// A surrogate loss value and its gradient at the evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: RankedGradient,
}

impl LossGrad {
    fn zero(classes: usize, x: &[f64]) -> Self {
        Self {
            loss: 0.0,
            grad: RankedGradient::zero(classes, x),
        }
    }
}

fn check_label(label: usize, classes: usize) -> Result<()> {
    if label >= classes {
        return Err(Error::LabelOutOfRange {
            label: label + 1,
            classes,
        });
    }
    Ok(())
}

fn runner_up_direction(classes: usize, runner_up: usize, label: usize, scale: f64) -> Vec<f64> {
    let mut c = vec![0.0; classes];
    c[runner_up] = scale;
    c[label] = -scale;
    c
}

/// `−log₂ σ(W, x, y)` and `(p̃ − e_y)/ln 2 ⊗ x`.
pub fn logistic_loss_grad(w: &WeightMatrix, x: &[f64], y: usize) -> Result<LossGrad> {
    let scores = w.class_scores(x)?;
    loss_grad_from_scores(LossKind::Logistic, &scores, x, y)
}

pub fn hinge_loss_grad(w: &WeightMatrix, x: &[f64], y: usize, beta: f64) -> Result<LossGrad> {
    let scores = w.class_scores(x)?;
    loss_grad_from_scores(LossKind::Hinge { beta }, &scores, x, y)
}

pub fn smooth_hinge_loss_grad(w: &WeightMatrix, x: &[f64], y: usize) -> Result<LossGrad> {
    let scores = w.class_scores(x)?;
    loss_grad_from_scores(LossKind::SmoothHinge, &scores, x, y)
}

/// Full-information loss and gradient at `W`.
pub fn loss_grad(kind: LossKind, w: &WeightMatrix, x: &[f64], y: usize) -> Result<LossGrad> {
    let scores = w.class_scores(x)?;
    loss_grad_from_scores(kind, &scores, x, y)
}

/// Same as [`loss_grad`], for callers that already hold `s = W x`.
pub fn loss_grad_from_scores(
    kind: LossKind,
    scores: &[f64],
    x: &[f64],
    y: usize,
) -> Result<LossGrad> {
    let classes = scores.len();
    check_label(y, classes)?;
    match kind {
        LossKind::Logistic => {
            let info = softmax(scores);
            let loss = ((log_sum_exp(scores) - scores[y]) / LN_2).max(0.0);
            let mut c: Vec<f64> = info.probs.iter().map(|p| p / LN_2).collect();
            c[y] -= 1.0 / LN_2;
            Ok(LossGrad {
                loss,
                grad: RankedGradient::new(c, x.to_vec()),
            })
        }
        LossKind::Hinge { beta } => {
            let m = MarginInfo::new(scores, y)?;
            if hinge_is_zero_case(&m, y, beta) {
                return Ok(LossGrad::zero(classes, x));
            }
            // m(W,y) ≤ m* ≤ β < 1 or m(W,y) ≤ 0, so the max never clips here
            let loss = (1.0 - m.margin).max(0.0);
            let c = runner_up_direction(classes, m.runner_up, y, 1.0);
            Ok(LossGrad {
                loss,
                grad: RankedGradient::new(c, x.to_vec()),
            })
        }
        LossKind::SmoothHinge => {
            let m = MarginInfo::new(scores, y)?;
            let (loss, scale) = smooth_hinge_value(m.margin);
            if scale == 0.0 {
                return Ok(LossGrad {
                    loss,
                    grad: RankedGradient::zero(classes, x),
                });
            }
            let c = runner_up_direction(classes, m.runner_up, y, scale);
            Ok(LossGrad {
                loss,
                grad: RankedGradient::new(c, x.to_vec()),
            })
        }
    }
}

fn hinge_is_zero_case(m: &MarginInfo, y: usize, beta: f64) -> bool {
    m.y_star == y && m.m_star > beta
}

/// Smooth hinge value and the gradient scale along `e_k̃ − e_y`.
fn smooth_hinge_value(margin: f64) -> (f64, f64) {
    if margin <= 0.0 {
        (1.0 - 2.0 * margin, 2.0)
    } else if margin <= 1.0 {
        ((1.0 - margin).powi(2), 2.0 * (1.0 - margin))
    } else {
        (0.0, 0.0)
    }
}

/// Smooth hinge loss as a function of the margin alone.
pub fn smooth_hinge_of_margin(margin: f64) -> f64 {
    smooth_hinge_value(margin).0
}

/// Full-information loss at a comparator `U` in a round where the learner's
/// scores were `learner_scores`. Only the hinge loss depends on the latter.
pub fn comparator_loss(
    kind: LossKind,
    learner_scores: &[f64],
    comparator_scores: &[f64],
    y: usize,
) -> Result<f64> {
    match kind {
        LossKind::Hinge { beta } => {
            let learner = MarginInfo::new(learner_scores, y)?;
            if hinge_is_zero_case(&learner, y, beta) {
                return Ok(0.0);
            }
            let m = MarginInfo::new(comparator_scores, y)?;
            Ok((1.0 - m.margin).max(0.0))
        }
        LossKind::Logistic => {
            Ok(((log_sum_exp(comparator_scores) - comparator_scores[y]) / LN_2).max(0.0))
        }
        LossKind::SmoothHinge => Ok(smooth_hinge_of_margin(
            MarginInfo::new(comparator_scores, y)?.margin,
        )),
    }
}

pub fn logistic_gap(p_star: f64) -> f64 {
    if p_star >= 0.5 {
        1.0 - p_star
    } else {
        1.0
    }
}

pub fn hinge_gap(m_star: f64, beta: f64) -> f64 {
    let confident = if m_star > beta { 1.0 } else { 0.0 };
    (1.0 - f64::max(confident, m_star)).clamp(0.0, 1.0)
}

pub fn smooth_hinge_gap(m_star: f64) -> f64 {
    (1.0 - m_star.min(1.0)).powi(2)
}

/// Uniform-exploration mass `a(W, x) ∈ [0, 1]` for the given scores.
pub fn gap_map(kind: LossKind, scores: &[f64]) -> Result<f64> {
    Ok(match kind {
        LossKind::Logistic => logistic_gap(softmax(scores).p_star),
        LossKind::Hinge { beta } => {
            let t = top2(scores)?;
            hinge_gap(t.top - t.second, beta)
        }
        LossKind::SmoothHinge => {
            let t = top2(scores)?;
            smooth_hinge_gap(t.top - t.second)
        }
    })
}

/// Importance-weighted estimate from the full-information pair: zero unless
/// the prediction was correct, otherwise scaled by `1/p_pred`.
pub fn importance_weighted(
    full: &LossGrad,
    y_true: usize,
    y_pred: usize,
    p_pred: f64,
) -> Result<LossGrad> {
    if !(p_pred > 0.0) {
        return Err(Error::NonPositiveProbability(p_pred));
    }
    if y_pred != y_true {
        return Ok(LossGrad::zero(full.grad.coeffs.len(), &full.grad.features));
    }
    let scale = 1.0 / p_pred;
    Ok(LossGrad {
        loss: full.loss * scale,
        grad: full.grad.clone().scaled(scale),
    })
}

/// Bandit loss and gradient estimate: `1[y' = y]/p'(y')` times the
/// full-information pair at the true label.
pub fn bandit_loss_grad(
    kind: LossKind,
    w: &WeightMatrix,
    x: &[f64],
    y_true: usize,
    y_pred: usize,
    p_pred: f64,
) -> Result<LossGrad> {
    if !(p_pred > 0.0) {
        return Err(Error::NonPositiveProbability(p_pred));
    }
    check_label(y_pred, w.classes())?;
    if y_pred != y_true {
        w.class_scores(x)?;
        check_label(y_true, w.classes())?;
        return Ok(LossGrad::zero(w.classes(), x));
    }
    let full = loss_grad(kind, w, x, y_true)?;
    importance_weighted(&full, y_true, y_pred, p_pred)
}
