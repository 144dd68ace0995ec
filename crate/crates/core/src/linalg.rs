//! Weight matrices, class scores and Kronecker-factored gradients.
//!
//! Every gradient the learner sees has the form `c ⊗ x` with `c ∈ ℝ^K` and
//! `x ∈ ℝ^d`. It is kept in that factored form: updates touch each entry of
//! `W` once and norms are `‖c‖·‖x‖`.

use crate::error::{Error, Result};

/// Slack allowed on norm invariants.
pub const NORM_TOL: f64 = 1e-9;

/// Row-major `K × d` linear predictor constrained to `‖W‖_F ≤ radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    classes: usize,
    dim: usize,
    radius: f64,
    data: Vec<f64>,
}

impl WeightMatrix {
    pub fn zeros(classes: usize, dim: usize, radius: f64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::TooFewClasses(classes));
        }
        if dim < 1 {
            return Err(Error::InvalidConfig(
                "feature dimension must be at least 1".into(),
            ));
        }
        if !(radius >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "radius must be nonnegative, got {radius}"
            )));
        }
        Ok(Self {
            classes,
            dim,
            radius,
            data: vec![0.0; classes * dim],
        })
    }

    /// Builds a matrix from rows and projects it onto the ball.
    pub fn from_rows(rows: &[Vec<f64>], radius: f64) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut w = Self::zeros(rows.len(), dim, radius)?;
        for (k, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            w.row_mut(k).copy_from_slice(row);
        }
        Ok(w.projected())
    }

    /// Row-major values, `K·d` entries.
    pub fn from_flat(classes: usize, dim: usize, radius: f64, data: Vec<f64>) -> Result<Self> {
        let mut w = Self::zeros(classes, dim, radius)?;
        if data.len() != classes * dim {
            return Err(Error::DimensionMismatch {
                expected: classes * dim,
                got: data.len(),
            });
        }
        w.data = data;
        Ok(w.projected())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Returns a copy with a different radius, projected onto the new ball.
    pub fn with_radius(&self, radius: f64) -> Self {
        Self {
            radius,
            ..self.clone()
        }
        .projected()
    }

    /// Multiplies every entry by `factor` and re-projects.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut w = self.clone();
        w.data.iter_mut().for_each(|v| *v *= factor);
        w.projected()
    }

    /// `s_k = ⟨W^k, x⟩`.
    pub fn class_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self
            .data
            .chunks_exact(self.dim)
            .map(|row| dot(row, x))
            .collect())
    }

    /// Euclidean projection onto `{‖W‖ ≤ radius}`: radial scaling when outside.
    pub fn projected(mut self) -> Self {
        self.project();
        self
    }

    pub fn project(&mut self) {
        let norm = self.norm();
        if norm > self.radius {
            let scale = if norm > 0.0 { self.radius / norm } else { 0.0 };
            self.data.iter_mut().for_each(|v| *v *= scale);
        }
    }

    /// `W ← Π(W − η·(c ⊗ x))`, the minimiser of `η⟨g, W⟩ + ½‖W − W_t‖²` over the ball.
    pub fn apply_gradient_step(&mut self, grad: &RankedGradient, eta: f64) -> Result<()> {
        if grad.coeffs.len() != self.classes {
            return Err(Error::DimensionMismatch {
                expected: self.classes,
                got: grad.coeffs.len(),
            });
        }
        self.check_dim(&grad.features)?;
        for (k, &c) in grad.coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let step = eta * c;
            for (w, &xi) in self.row_mut(k).iter_mut().zip(&grad.features) {
                *w -= step * xi;
            }
        }
        self.project();
        Ok(())
    }

    /// Unprojected additive update `W^k += a_k·x`, used by the baselines.
    pub(crate) fn add_outer(&mut self, coeffs: &[f64], x: &[f64]) {
        for (k, &a) in coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (w, &xi) in self.row_mut(k).iter_mut().zip(x) {
                *w += a * xi;
            }
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// A gradient `c ⊗ x`, stored as its two factors.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedGradient {
    pub coeffs: Vec<f64>,
    pub features: Vec<f64>,
}

impl RankedGradient {
    pub fn new(coeffs: Vec<f64>, features: Vec<f64>) -> Self {
        Self { coeffs, features }
    }

    pub fn zero(classes: usize, features: &[f64]) -> Self {
        Self {
            coeffs: vec![0.0; classes],
            features: features.to_vec(),
        }
    }

    /// `‖c ⊗ x‖² = ‖c‖²·‖x‖²`.
    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.coeffs) * norm_sq(&self.features)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.coeffs.iter_mut().for_each(|c| *c *= factor);
        self
    }
}

/// A labelled feature vector. Labels are zero-based internally.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: usize,
}

impl Example {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Self { features, label }
    }

    pub fn norm(&self) -> f64 {
        norm_sq(&self.features).sqrt()
    }

    pub fn check(&self, classes: usize, dim: usize, bound: f64) -> Result<()> {
        if self.features.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.features.len(),
            });
        }
        if self.label >= classes {
            return Err(Error::LabelOutOfRange {
                label: self.label + 1,
                classes,
            });
        }
        let norm = self.norm();
        if norm > bound + NORM_TOL {
            return Err(Error::FeatureNorm { norm, bound });
        }
        Ok(())
    }
}

/// Argmax (lowest index on ties) with the top and runner-up values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Top2 {
    pub index: usize,
    pub top: f64,
    pub second: f64,
}

pub fn top2(scores: &[f64]) -> Result<Top2> {
    if scores.len() < 2 {
        return Err(Error::TooFewClasses(scores.len()));
    }
    let mut index = 0;
    let mut top = scores[0];
    let mut second = f64::NEG_INFINITY;
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s > top {
            second = top;
            top = s;
            index = k;
        } else if s > second {
            second = s;
        }
    }
    Ok(Top2 { index, top, second })
}

/// Index of the largest entry other than `skip`, lowest index on ties.
pub fn argmax_excluding(scores: &[f64], skip: usize) -> usize {
    let mut best = usize::MAX;
    for (k, &s) in scores.iter().enumerate() {
        if k != skip && (best == usize::MAX || s > scores[best]) {
            best = k;
        }
    }
    best
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, k: usize, d: usize, radius: f64) -> WeightMatrix {
        let data = (0..k * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        WeightMatrix::from_flat(k, d, radius, data).unwrap()
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()
    }

    #[test]
    fn scores_of_zero_matrix_vanish() {
        let w = WeightMatrix::zeros(3, 4, 1.0).unwrap();
        assert_eq!(
            w.class_scores(&[1.0, -2.0, 3.0, 0.5]).unwrap(),
            vec![0.0; 3]
        );
    }

    #[test]
    fn scores_of_basis_rows() {
        let w = WeightMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], 10.0).unwrap();
        assert_eq!(w.class_scores(&[3.0, -1.0]).unwrap(), vec![3.0, -1.0]);
    }

    #[test]
    fn scores_match_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let (k, d) = (rng.gen_range(2..8), rng.gen_range(1..12));
            let w = random_matrix(&mut rng, k, d, f64::INFINITY);
            let x = random_vec(&mut rng, d);
            let s = w.class_scores(&x).unwrap();
            for kk in 0..k {
                let mut acc = 0.0;
                for i in 0..d {
                    acc += w.as_slice()[kk * d + i] * x[i];
                }
                assert!((s[kk] - acc).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn scores_reject_wrong_dimension() {
        let w = WeightMatrix::zeros(2, 3, 1.0).unwrap();
        assert!(matches!(
            w.class_scores(&[1.0]),
            Err(Error::DimensionMismatch {
                expected: 3,
                got: 1
            })
        ));
    }

    #[test]
    fn construction_rejects_single_class() {
        assert!(matches!(
            WeightMatrix::zeros(1, 3, 1.0),
            Err(Error::TooFewClasses(1))
        ));
    }

    #[test]
    fn top2_ties_pick_lowest_index() {
        let t = top2(&[1.0, 1.0, 0.0]).unwrap();
        assert_eq!((t.index, t.top, t.second), (0, 1.0, 1.0));
        let t = top2(&[0.0, 5.0, 2.0]).unwrap();
        assert_eq!((t.index, t.top, t.second), (1, 5.0, 2.0));
        assert!(top2(&[1.0]).is_err());
    }

    #[test]
    fn top2_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let k = rng.gen_range(2..10);
            // coarse values so ties actually happen
            let s: Vec<f64> = (0..k).map(|_| rng.gen_range(0..4) as f64).collect();
            let t = top2(&s).unwrap();
            let mut idx = 0;
            for i in 0..k {
                if (0..k).all(|j| s[i] >= s[j]) && (0..i).all(|j| s[j] < s[i]) {
                    idx = i;
                    break;
                }
            }
            let second = (0..k)
                .filter(|&j| j != idx)
                .map(|j| s[j])
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(t.index, idx);
            assert_eq!(t.top, s[idx]);
            assert_eq!(t.second, second);
        }
    }

    #[test]
    fn projection_interior_and_radial() {
        let w = WeightMatrix::from_flat(2, 2, 10.0, vec![3.0, 0.0, 0.0, 4.0]).unwrap();
        assert_eq!(w.clone().with_radius(10.0), w);
        let mut outside = w.clone();
        outside.radius = 2.5;
        let p = outside.projected();
        assert_eq!(p.as_slice(), &[1.5, 0.0, 0.0, 2.0]);
        assert!((p.norm() - 2.5).abs() <= 1e-12);
    }

    #[test]
    fn projection_is_closest_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let mut w = random_matrix(&mut rng, 3, 4, f64::INFINITY);
            w.radius = 0.5 * w.norm();
            let p = w.clone().projected();
            assert!((p.norm() - w.radius).abs() <= 1e-12);
            // the closest point of the ball to W lies on the ray through W,
            // so a fine grid over feasible scalings cannot beat it
            let dist = |a: &WeightMatrix, s: f64| -> f64 {
                a.data
                    .iter()
                    .map(|v| (v - s * v).powi(2))
                    .sum::<f64>()
                    .sqrt()
            };
            let best_grid = (0..=1000)
                .map(|i| i as f64 / 1000.0 * w.radius / w.norm())
                .map(|s| dist(&w, s))
                .fold(f64::INFINITY, f64::min);
            let d_proj: f64 = w
                .data
                .iter()
                .zip(&p.data)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(d_proj <= best_grid + 1e-12);
        }
    }

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut w = random_matrix(&mut rng, 3, 2, 5.0);
        let before = w.clone();
        w.apply_gradient_step(&RankedGradient::zero(3, &[1.0, 2.0]), 0.7)
            .unwrap();
        assert_eq!(w, before);
    }

    #[test]
    fn single_entry_update() {
        let mut w = WeightMatrix::zeros(2, 3, 100.0).unwrap();
        let g = RankedGradient::new(vec![1.0, 0.0], vec![1.0, 0.0, 0.0]);
        w.apply_gradient_step(&g, 0.5).unwrap();
        assert_eq!(w.row(0), &[-0.5, 0.0, 0.0]);
        assert_eq!(w.row(1), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn gradient_step_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let (k, d) = (rng.gen_range(2..6), rng.gen_range(1..8));
            let radius = rng.gen_range(0.5..6.0);
            let mut w = random_matrix(&mut rng, k, d, radius);
            let g = RankedGradient::new(random_vec(&mut rng, k), random_vec(&mut rng, d));
            let eta = rng.gen_range(0.01..2.0);
            // dense oracle: materialise the Kronecker product, step, then scale
            let mut dense: Vec<f64> = w.as_slice().to_vec();
            for kk in 0..k {
                for i in 0..d {
                    dense[kk * d + i] -= eta * g.coeffs[kk] * g.features[i];
                }
            }
            let n = dense.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > radius {
                dense.iter_mut().for_each(|v| *v *= radius / n);
            }
            w.apply_gradient_step(&g, eta).unwrap();
            for (a, b) in w.as_slice().iter().zip(&dense) {
                assert!((a - b).abs() <= 1e-12);
            }
            assert!(w.norm() <= radius + NORM_TOL);
        }
    }

    #[test]
    fn gradient_step_rejects_mismatch() {
        let mut w = WeightMatrix::zeros(2, 3, 1.0).unwrap();
        let g = RankedGradient::new(vec![1.0, 0.0, 0.0], vec![0.0; 3]);
        assert!(w.apply_gradient_step(&g, 1.0).is_err());
        let g = RankedGradient::new(vec![1.0, 0.0], vec![0.0; 2]);
        assert!(w.apply_gradient_step(&g, 1.0).is_err());
    }

    #[test]
    fn example_norm_check() {
        let e = Example::new(vec![3.0, 4.0], 1);
        assert!(e.check(2, 2, 5.0).is_ok());
        assert!(matches!(e.check(2, 2, 4.9), Err(Error::FeatureNorm { .. })));
        assert!(matches!(
            e.check(1 + 0, 2, 5.0),
            Err(Error::LabelOutOfRange { .. })
        ));
    }
}
