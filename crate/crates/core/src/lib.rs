//! Randomized first-order online multiclass classification.
//!
//! The learner keeps a linear predictor `W ∈ ℝ^{K×d}` in a Frobenius ball,
//! updates it with projected online gradient descent on a surrogate loss, and
//! predicts by sampling from a mixture of its argmax label and the uniform
//! distribution. The uniform weight is set by a *gap map* chosen so that the
//! per-round surrogate gap is non-positive, which turns the gradient-descent
//! regret bound into an expected mistake bound.
//!
//! Modules:
//!
//! - [`linalg`]: weight matrices, scores, factored gradients, projection.
//! - [`losses`]: logistic / hinge / smooth-hinge losses, gradients, gap maps and
//!   importance-weighted bandit estimators.
//! - [`learner`]: the learner itself, hyperparameters and per-round audits.
//! - [`baselines`]: multiclass Perceptron and Banditron.
//! - [`environments`]: synthetic streams and the text stream format.
//! - [`harness`]: experiment runs, bounds, CSV and summary output.
//! - [`abstention`]: AdaHedge with an abstention option for binary labels.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abstention;
pub mod baselines;
pub mod environments;
pub mod error;
pub mod harness;
pub mod learner;
pub mod linalg;
pub mod losses;

pub use error::{Error, Result};
pub use learner::{
    Feedback, Gaptron, GaptronConfig, NormPolicy, PredictionDistribution, RoundAudit,
};
pub use linalg::{Example, RankedGradient, WeightMatrix};
pub use losses::LossKind;
