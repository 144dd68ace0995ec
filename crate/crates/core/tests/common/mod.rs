#![allow(dead_code)]

use gaptron::linalg::{RankedGradient, WeightMatrix};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

pub fn scale_to(mut v: Vec<f64>, norm: f64) -> Vec<f64> {
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a *= norm / n);
    v
}

/// Features of norm `bound` half of the time, otherwise uniform in `(0, bound]`.
pub fn features(rng: &mut impl Rng, dim: usize, bound: f64) -> Vec<f64> {
    let norm = if rng.gen::<bool>() {
        bound
    } else {
        bound * rng.gen_range(0.01..=1.0)
    };
    scale_to(gaussian(rng, dim), norm)
}

/// A Gaussian matrix with Frobenius norm `norm`, inside a ball of `radius`.
pub fn weights(
    rng: &mut impl Rng,
    classes: usize,
    dim: usize,
    norm: f64,
    radius: f64,
) -> WeightMatrix {
    WeightMatrix::from_flat(
        classes,
        dim,
        radius,
        scale_to(gaussian(rng, classes * dim), norm),
    )
    .unwrap()
}

pub fn dense(g: &RankedGradient) -> Vec<f64> {
    g.coeffs
        .iter()
        .flat_map(|c| g.features.iter().map(move |x| c * x))
        .collect()
}

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}
