//! Shared domain types and the built-in 1D datasets.

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::invalid;
use crate::rng::RngStream;
use crate::{Error, Result};

/// Feature vector flowing through residual blocks and SDE paths.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureState(Vec<f64>);

impl FeatureState {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("feature state must have dimension >= 1"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: 0,
                context: format!("component {i} of initial state"),
            });
        }
        Ok(Self(values))
    }

    pub fn scalar(x: f64) -> Result<Self> {
        Self::new(vec![x])
    }

    pub(crate) fn from_checked(values: Vec<f64>, step: usize) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step,
                context: format!("component {i} = {}", values[i]),
            });
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

/// Multiplicative noise injected into each residual block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseScheme {
    Plain,
    /// Inverted Bernoulli dropout with survival probability `p`.
    Bernoulli { p: f64 },
    /// Gaussian dropout, mask ~ N(1, nu^2).
    Gaussian { nu: f64 },
    /// Uniform dropout, mask ~ 1 + U(-beta, beta).
    Uniform { beta: f64 },
    /// Two-branch blend with a U(0, 1) scalar weight per block.
    ShakeShake,
}

impl NoiseScheme {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseScheme::Bernoulli { p } if !(p > 0.0 && p <= 1.0) => {
                Err(invalid(format!("Bernoulli survival probability must be in (0, 1], got {p}")))
            }
            NoiseScheme::Gaussian { nu } if !(nu >= 0.0 && nu.is_finite()) => {
                Err(invalid(format!("Gaussian std-dev must be >= 0, got {nu}")))
            }
            NoiseScheme::Uniform { beta } if !(beta >= 0.0 && beta.is_finite()) => {
                Err(invalid(format!("uniform half-width must be >= 0, got {beta}")))
            }
            _ => Ok(()),
        }
    }

    /// Variance `nu^2` of the multiplicative mask around its mean.
    pub fn variance(&self) -> f64 {
        match *self {
            NoiseScheme::Plain => 0.0,
            NoiseScheme::Bernoulli { p } => (1.0 - p) / p,
            NoiseScheme::Gaussian { nu } => nu * nu,
            NoiseScheme::Uniform { beta } => beta * beta / 3.0,
            NoiseScheme::ShakeShake => 1.0 / 3.0,
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseScheme::Plain => "plain",
            NoiseScheme::Bernoulli { .. } => "bernoulli",
            NoiseScheme::Gaussian { .. } => "gaussian",
            NoiseScheme::Uniform { .. } => "uniform",
            NoiseScheme::ShakeShake => "shake",
        }
    }

    /// Number of residual branches the scheme consumes.
    pub fn branches(&self) -> usize {
        match self {
            NoiseScheme::ShakeShake => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for NoiseScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            NoiseScheme::Plain => write!(f, "plain"),
            NoiseScheme::Bernoulli { p } => write!(f, "bernoulli(p={p})"),
            NoiseScheme::Gaussian { nu } => write!(f, "gaussian(nu={nu})"),
            NoiseScheme::Uniform { beta } => write!(f, "uniform(beta={beta})"),
            NoiseScheme::ShakeShake => write!(f, "shake"),
        }
    }
}

/// Block count `K`, step `eta = 1/K`, and the effective noise level
/// `eps = sqrt(eta) * nu` of the continuous limit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DynamicsConfig {
    blocks: usize,
    eta: f64,
    epsilon: f64,
    scheme: NoiseScheme,
}

impl DynamicsConfig {
    pub fn new(blocks: usize, scheme: NoiseScheme) -> Result<Self> {
        if blocks == 0 {
            return Err(invalid("block count K must be positive"));
        }
        scheme.validate()?;
        let eta = 1.0 / blocks as f64;
        Ok(Self {
            blocks,
            eta,
            epsilon: (eta * scheme.variance()).sqrt(),
            scheme,
        })
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    /// Step size, also the time step `dt`.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn scheme(&self) -> NoiseScheme {
        self.scheme
    }

    /// Time of block `k`, computed as `k / K` so that `time(K) == 1` exactly.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 / self.blocks as f64
    }
}

/// A labeled scalar sample `(y, h(y))` with `h(y)` in {0, 1}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample1D {
    pub y: f64,
    label: u8,
}

impl Sample1D {
    pub fn new(y: f64, label: u8) -> Result<Self> {
        if label > 1 {
            return Err(invalid(format!("label must be 0 or 1, got {label}")));
        }
        if !y.is_finite() {
            return Err(invalid("sample position must be finite"));
        }
        Ok(Self { y, label })
    }

    pub fn label(&self) -> u8 {
        self.label
    }

    pub fn target(&self) -> f64 {
        self.label as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetKind {
    /// Alternating-label clusters; the plain landscape has several poor minima.
    Rugged,
    /// A broad valley next to a narrow one, separated by a barrier.
    DoubleWell,
    Custom(Vec<Sample1D>),
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "rugged" => Ok(DatasetKind::Rugged),
            "double_well" | "doublewell" => Ok(DatasetKind::DoubleWell),
            other => Err(Error::UnknownDatasetKind(other.to_string())),
        }
    }
}

impl DatasetKind {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetKind::Rugged => "rugged",
            DatasetKind::DoubleWell => "double_well",
            DatasetKind::Custom(_) => "custom",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub size: usize,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn new(kind: DatasetKind, size: usize, seed: u64) -> Self {
        Self { kind, size, seed }
    }
}

/// Jitter (standard deviation) applied around each cluster center.
pub const CLUSTER_JITTER: f64 = 0.15;

// Recipes, version 1. Each entry is (center y, label); samples cycle through
// the list in order, so every prefix is label-balanced within one sample.
// A label-1 sample at y contributes a descending step of J_0 near f = -y,
// a label-0 sample an ascending one; alternating them carves valleys.
const RUGGED_RECIPE: [(f64, u8); 8] = [
    (5.0, 1),
    (3.5, 0),
    (1.0, 1),
    (-0.5, 0),
    (-2.5, 1),
    (-3.2, 0),
    (-4.5, 1),
    (-5.5, 0),
];

// Broad valley near f = -0.7 (clusters A, B), narrow valley near f = 4.9
// (clusters C, D). Order: A B A B A B C D C D.
const DOUBLE_WELL_RECIPE: [(f64, u8); 10] = [
    (3.5, 1),
    (-1.75, 0),
    (3.5, 1),
    (-1.75, 0),
    (3.5, 1),
    (-1.75, 0),
    (-4.9, 1),
    (-5.75, 0),
    (-4.9, 1),
    (-5.75, 0),
];

/// Builds a 1D dataset. Built-in kinds are deterministic in `(kind, size, seed)`.
pub fn make_dataset_1d(spec: &DatasetSpec) -> Result<Vec<Sample1D>> {
    let recipe: &[(f64, u8)] = match &spec.kind {
        DatasetKind::Custom(samples) => {
            if samples.is_empty() {
                return Err(Error::EmptyDataset);
            }
            return Ok(samples.clone());
        }
        DatasetKind::Rugged => &RUGGED_RECIPE,
        DatasetKind::DoubleWell => &DOUBLE_WELL_RECIPE,
    };
    if spec.size == 0 {
        return Err(invalid("dataset size must be >= 1"));
    }
    let root = RngStream::new(spec.seed, 0x0da7_a5e7);
    (0..spec.size)
        .map(|i| {
            let (center, label) = recipe[i % recipe.len()];
            let jitter = root.split(i as u64).normal() * CLUSTER_JITTER;
            Sample1D::new(center + jitter, label)
        })
        .collect()
}

/// SHA-256 over the exact bit patterns of the samples, hex encoded.
pub fn dataset_digest(samples: &[Sample1D]) -> String {
    let mut h = Sha256::new();
    for s in samples {
        h.update(s.y.to_bits().to_le_bytes());
        h.update([s.label]);
    }
    hex_digest(h)
}

pub(crate) fn hex_digest(h: Sha256) -> String {
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn custom_is_passthrough() {
        let s = vec![Sample1D::new(1.0, 1).unwrap()];
        let out = make_dataset_1d(&DatasetSpec::new(DatasetKind::Custom(s.clone()), 1, 0)).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn builtin_kinds_are_deterministic() {
        for kind in [DatasetKind::Rugged, DatasetKind::DoubleWell] {
            let spec = DatasetSpec::new(kind, 64, 7);
            assert_eq!(make_dataset_1d(&spec).unwrap(), make_dataset_1d(&spec).unwrap());
        }
    }

    #[test]
    fn builtin_labels_balanced_for_every_size() {
        for kind in [DatasetKind::Rugged, DatasetKind::DoubleWell] {
            for size in 1..80 {
                let d = make_dataset_1d(&DatasetSpec::new(kind.clone(), size, 3)).unwrap();
                let ones = d.iter().filter(|s| s.label() == 1).count() as i64;
                let zeros = size as i64 - ones;
                assert!((ones - zeros).abs() <= 1, "{kind:?} size {size}");
            }
        }
    }

    #[test]
    fn unknown_kind_is_an_error() {
        assert!(matches!("spiral".parse::<DatasetKind>(), Err(Error::UnknownDatasetKind(_))));
        assert_eq!("double-well".parse::<DatasetKind>().unwrap(), DatasetKind::DoubleWell);
    }

    #[test]
    fn invalid_labels_and_schemes_rejected() {
        assert!(Sample1D::new(0.0, 2).is_err());
        assert!(NoiseScheme::Bernoulli { p: 0.0 }.validate().is_err());
        assert!(NoiseScheme::Bernoulli { p: 1.5 }.validate().is_err());
        assert!(NoiseScheme::Gaussian { nu: -0.1 }.validate().is_err());
        assert!(NoiseScheme::Uniform { beta: -1.0 }.validate().is_err());
        assert!(NoiseScheme::Bernoulli { p: 1.0 }.validate().is_ok());
    }

    #[test]
    fn derived_variances() {
        assert!((NoiseScheme::Bernoulli { p: 0.9 }.variance() - 0.1 / 0.9).abs() < 1e-15);
        assert_eq!(NoiseScheme::Gaussian { nu: 0.5 }.variance(), 0.25);
        assert!((NoiseScheme::Uniform { beta: 0.6 }.variance() - 0.12).abs() < 1e-15);
        assert_eq!(NoiseScheme::ShakeShake.variance(), 1.0 / 3.0);
    }

    #[test]
    fn dynamics_config_relations() {
        for k in [1usize, 3, 7, 10, 64, 100] {
            let cfg = DynamicsConfig::new(k, NoiseScheme::Bernoulli { p: 0.8 }).unwrap();
            assert_eq!(cfg.time(k), 1.0);
            let eps2 = cfg.epsilon() * cfg.epsilon();
            assert!((eps2 - cfg.eta() * 0.25).abs() < 1e-15);
        }
        assert!(DynamicsConfig::new(0, NoiseScheme::Plain).is_err());
    }

    #[test]
    fn digest_changes_with_data() {
        let a = make_dataset_1d(&DatasetSpec::new(DatasetKind::Rugged, 16, 1)).unwrap();
        let b = make_dataset_1d(&DatasetSpec::new(DatasetKind::Rugged, 16, 2)).unwrap();
        assert_ne!(dataset_digest(&a), dataset_digest(&b));
        assert_eq!(dataset_digest(&a).len(), 64);
    }
}
