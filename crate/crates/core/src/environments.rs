//! Synthetic example streams with a known generating comparator, and the
//! plain-text stream format.
//!
//! File format: UTF-8, one example per line as `label,f1,...,fd` with labels
//! in `1..=K`. Lines starting with `#` and blank lines are skipped.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::learner::NormPolicy;
use crate::linalg::{norm_sq, top2, Example, WeightMatrix, NORM_TOL};

/// Attempts allowed per example before rejection sampling gives up.
pub const MAX_ATTEMPTS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StreamKind {
    /// Labels are the comparator's argmax; every kept example has `m* ≥ margin`.
    Separable { margin: f64 },
    /// As `Separable`, then each label is replaced with probability `rate`
    /// by a uniformly drawn other class.
    LabelNoise { rate: f64, margin: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSpec {
    pub kind: StreamKind,
    pub classes: usize,
    pub dim: usize,
    pub x_bound: f64,
    /// Frobenius norm of the generating matrix.
    pub u_norm: f64,
    pub horizon: usize,
    pub rng_seed: u64,
}

impl StreamSpec {
    pub fn validate(&self) -> Result<()> {
        let (margin, rate) = match self.kind {
            StreamKind::Separable { margin } => (margin, 0.0),
            StreamKind::LabelNoise { rate, margin } => (margin, rate),
        };
        if !(margin >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "margin must be nonnegative, got {margin}"
            )));
        }
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::InvalidConfig(format!(
                "noise rate must lie in [0,1], got {rate}"
            )));
        }
        if self.classes < 2 {
            return Err(Error::TooFewClasses(self.classes));
        }
        if self.dim < 1 || !(self.x_bound > 0.0) || !(self.u_norm > 0.0) {
            return Err(Error::InvalidConfig(
                "dimension, X and ‖U‖ must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledStream {
    pub examples: Vec<Example>,
    pub classes: usize,
    pub dim: usize,
    /// The generating matrix, when known.
    pub comparator: Option<WeightMatrix>,
    pub spec: Option<StreamSpec>,
}

impl LabeledStream {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn on_sphere(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Vec<f64> {
    loop {
        let v = gaussian_vec(rng, n);
        let norm = norm_sq(&v).sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x * radius / norm).collect();
        }
    }
}

pub fn generate(spec: &StreamSpec) -> Result<LabeledStream> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let raw = gaussian_vec(&mut rng, spec.classes * spec.dim);
    let raw_norm = norm_sq(&raw).sqrt();
    let scaled = raw
        .into_iter()
        .map(|v| v * spec.u_norm / raw_norm)
        .collect();
    let comparator = WeightMatrix::from_flat(spec.classes, spec.dim, spec.u_norm, scaled)?;

    let (margin, rate) = match spec.kind {
        StreamKind::Separable { margin } => (margin, 0.0),
        StreamKind::LabelNoise { rate, margin } => (margin, rate),
    };

    let mut examples = Vec::with_capacity(spec.horizon);
    for _ in 0..spec.horizon {
        let mut accepted = None;
        for _ in 0..MAX_ATTEMPTS {
            let x = on_sphere(&mut rng, spec.dim, spec.x_bound);
            let t = top2(&comparator.class_scores(&x)?)?;
            if t.top - t.second >= margin {
                accepted = Some((x, t.index));
                break;
            }
        }
        let (x, mut label) = accepted.ok_or(Error::RejectionFailed(MAX_ATTEMPTS))?;
        if rate > 0.0 && rng.gen::<f64>() < rate {
            let other = rng.gen_range(0..spec.classes - 1);
            label = if other < label { other } else { other + 1 };
        }
        examples.push(Example::new(x, label));
    }
    Ok(LabeledStream {
        examples,
        classes: spec.classes,
        dim: spec.dim,
        comparator: Some(comparator),
        spec: Some(spec.clone()),
    })
}

pub fn write_stream(path: &Path, stream: &LabeledStream) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_stream_to(&mut out, stream).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_stream_to<W: Write>(out: &mut W, stream: &LabeledStream) -> std::io::Result<()> {
    writeln!(
        out,
        "# K={} d={} T={}",
        stream.classes,
        stream.dim,
        stream.len()
    )?;
    if let Some(spec) = &stream.spec {
        writeln!(out, "# {:?}", spec)?;
    }
    for e in &stream.examples {
        write!(out, "{}", e.label + 1)?;
        for v in &e.features {
            // `{}` prints the shortest representation that parses back exactly
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn load_stream(path: &Path, x_bound: f64, policy: NormPolicy) -> Result<LabeledStream> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_stream(BufReader::new(file), x_bound, policy).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn parse_stream<R: BufRead>(
    reader: R,
    x_bound: f64,
    policy: NormPolicy,
) -> Result<LabeledStream> {
    let mut examples = Vec::new();
    let mut dim = None;
    let mut classes = 0;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io("<stream>", e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line: line_no, msg };
        let mut fields = trimmed.split(',').map(str::trim);
        let label_field = fields.next().unwrap_or_default();
        let label: usize = label_field
            .parse()
            .map_err(|_| parse_err(format!("bad label {label_field:?}")))?;
        if label < 1 {
            return Err(parse_err("labels start at 1".into()));
        }
        let mut features = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_err(format!("bad number {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if features.is_empty() {
            return Err(parse_err("no features".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(parse_err("non-finite feature".into()));
        }
        match dim {
            None => dim = Some(features.len()),
            Some(d) if d != features.len() => {
                return Err(parse_err(format!(
                    "expected {d} features, found {}",
                    features.len()
                )));
            }
            Some(_) => {}
        }
        let norm = norm_sq(&features).sqrt();
        if norm > x_bound + NORM_TOL {
            match policy {
                NormPolicy::Strict => {
                    return Err(parse_err(format!(
                        "feature norm {norm} exceeds bound {x_bound}"
                    )));
                }
                NormPolicy::Rescale => {
                    log::warn!(
                        "line {line_no}: feature norm {norm} exceeds bound {x_bound}; rescaling"
                    );
                    features.iter_mut().for_each(|v| *v *= x_bound / norm);
                }
            }
        }
        classes = classes.max(label);
        examples.push(Example::new(features, label - 1));
    }
    let dim = dim.ok_or(Error::EmptyStream)?;
    Ok(LabeledStream {
        examples,
        classes,
        dim,
        comparator: None,
        spec: None,
    })
}
