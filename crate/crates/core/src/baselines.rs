//! Reference learners: the multiclass Perceptron and the Banditron.
//!
//! The Banditron explores with `p = (1−γ)e_{y*} + (γ/K)·1` and adds
//! `x ⊗ (1[y'=y]/p(y')·e_{y'} − e_{y*})`, an unbiased estimate of the
//! Perceptron-style update `x ⊗ (e_y − e_{y*})`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::learner::PredictionDistribution;
use crate::linalg::{top2, Example, WeightMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineKind {
    Perceptron,
    Banditron { gamma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub classes: usize,
    pub dim: usize,
    pub rng_seed: u64,
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if let BaselineKind::Banditron { gamma } = self.kind {
            if !(gamma > 0.0 && gamma < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "banditron gamma must lie in (0,1), got {gamma}"
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of one baseline round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineRound {
    pub predicted: usize,
    pub mistake: bool,
    /// Probability the learner's distribution put on the true label.
    pub prob_true: f64,
}

/// Perceptron step: on a mistake `W^y += x`, `W^{y*} −= x`. No projection.
pub fn perceptron_step(w: &mut WeightMatrix, example: &Example) -> Result<BaselineRound> {
    let scores = w.class_scores(&example.features)?;
    let y_star = top2(&scores)?.index;
    let y = example.label;
    if y >= w.classes() {
        return Err(Error::LabelOutOfRange {
            label: y + 1,
            classes: w.classes(),
        });
    }
    if y_star != y {
        let mut c = vec![0.0; w.classes()];
        c[y] = 1.0;
        c[y_star] = -1.0;
        w.add_outer(&c, &example.features);
    }
    Ok(BaselineRound {
        predicted: y_star,
        mistake: y_star != y,
        prob_true: if y_star == y { 1.0 } else { 0.0 },
    })
}

/// Coefficients of the Banditron update `x ⊗ (1[correct]/p(y')·e_{y'} − e_{y*})`.
pub fn banditron_coeffs(
    classes: usize,
    y_star: usize,
    y_pred: usize,
    correct: bool,
    p_pred: f64,
) -> Vec<f64> {
    let mut c = vec![0.0; classes];
    if correct {
        c[y_pred] += 1.0 / p_pred;
    }
    c[y_star] -= 1.0;
    c
}

/// Applies one Banditron update given the sampled label and the feedback bit.
pub fn banditron_step(
    w: &mut WeightMatrix,
    x: &[f64],
    dist: &PredictionDistribution,
    y_pred: usize,
    correct: bool,
) -> Result<()> {
    if x.len() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            got: x.len(),
        });
    }
    let c = banditron_coeffs(w.classes(), dist.y_star, y_pred, correct, dist.prob(y_pred));
    w.add_outer(&c, x);
    Ok(())
}

/// A baseline learner with its own weights and generator.
#[derive(Debug, Clone)]
pub struct Baseline {
    config: BaselineConfig,
    weights: WeightMatrix,
    rng: ChaCha8Rng,
}

impl Baseline {
    pub fn new(config: BaselineConfig) -> Result<Self> {
        config.validate()?;
        let weights = WeightMatrix::zeros(config.classes, config.dim, f64::INFINITY)?;
        let rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        Ok(Self {
            config,
            weights,
            rng,
        })
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    pub fn step(&mut self, example: &Example) -> Result<BaselineRound> {
        match self.config.kind {
            BaselineKind::Perceptron => perceptron_step(&mut self.weights, example),
            BaselineKind::Banditron { gamma } => {
                let scores = self.weights.class_scores(&example.features)?;
                let y_star = top2(&scores)?.index;
                let dist = PredictionDistribution::new(y_star, self.config.classes, 0.0, gamma);
                let u: f64 = self.rng.gen();
                let y_pred = dist.sample(u);
                let correct = y_pred == example.label;
                banditron_step(&mut self.weights, &example.features, &dist, y_pred, correct)?;
                Ok(BaselineRound {
                    predicted: y_pred,
                    mistake: !correct,
                    prob_true: dist.prob(example.label),
                })
            }
        }
    }
}
