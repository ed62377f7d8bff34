//! Sampling from `CSBM(n, p, q, μ, ν)` and the semi-supervised label mask.
//!
//! Labels are i.i.d. fair coins. Conditionally on the labels, each pair
//! `i < j` is an edge with probability `p` (same class) or `q` (different
//! classes), visited in row-major order; pairs with probability 0 or 1 draw
//! nothing from the edge stream. Row `i` of the features is
//! `mean(label_i) + sqrt(scale/d) · z` with `z` standard normal.
//!
//! Labels, edges, features and the mask each consume their own random
//! stream (see [`crate::rng`]).

use alloc::format;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicBool, Ordering};

use crate::error::{Error, Result};
use crate::graph::Adjacency;
use crate::math::norm2;
use crate::matrix::Matrix;
use crate::rng::{Stream, StreamRng};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CsbmParams {
    pub n: usize,
    pub d: usize,
    /// Intra-class edge probability.
    pub p: f64,
    /// Inter-class edge probability.
    pub q: f64,
    /// Mean of class 0.
    pub mu: Vec<f64>,
    /// Mean of class 1.
    pub nu: Vec<f64>,
    /// Feature covariance is `(feature_variance_scale / d) · I`.
    #[cfg_attr(feature = "serde", serde(default = "default_variance_scale"))]
    pub feature_variance_scale: f64,
}

#[cfg(feature = "serde")]
fn default_variance_scale() -> f64 {
    1.0
}

impl CsbmParams {
    pub fn new(n: usize, d: usize, p: f64, q: f64, mu: Vec<f64>, nu: Vec<f64>) -> Self {
        CsbmParams {
            n,
            d,
            p,
            q,
            mu,
            nu,
            feature_variance_scale: 1.0,
        }
    }

    /// Means at `∓(distance/2)·e₁`.
    pub fn symmetric(n: usize, d: usize, p: f64, q: f64, distance: f64) -> Self {
        let mut mu = alloc::vec![0.0; d];
        let mut nu = alloc::vec![0.0; d];
        if d > 0 {
            mu[0] = -distance / 2.0;
            nu[0] = distance / 2.0;
        }
        Self::new(n, d, p, q, mu, nu)
    }

    pub fn mean_distance(&self) -> f64 {
        crate::math::distance(&self.mu, &self.nu)
    }

    /// Checks hard invariants. Mean vectors outside the unit ball only log a
    /// warning, once per process so that sweeps do not flood the log.
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParams(format!("n = {} < 2", self.n)));
        }
        if self.d < 1 {
            return Err(Error::InvalidParams("d must be at least 1".into()));
        }
        for (name, v) in [("p", self.p), ("q", self.q)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParams(format!("{name} = {v} outside [0, 1]")));
            }
        }
        for (name, m) in [("mu", &self.mu), ("nu", &self.nu)] {
            if m.len() != self.d {
                return Err(Error::InvalidParams(format!(
                    "{name} has length {}, expected d = {}",
                    m.len(),
                    self.d
                )));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} is not finite")));
            }
            let norm = norm2(m);
            if norm > 1.0 && !NORM_WARNED.swap(true, Ordering::Relaxed) {
                log::warn!("‖{name}‖₂ = {norm} exceeds 1; further occurrences are not reported");
            }
        }
        if !(self.feature_variance_scale.is_finite() && self.feature_variance_scale > 0.0) {
            return Err(Error::InvalidParams(format!(
                "feature_variance_scale = {} must be positive",
                self.feature_variance_scale
            )));
        }
        Ok(())
    }
}

static NORM_WARNED: AtomicBool = AtomicBool::new(false);

/// One draw `(ε, A, X)` plus an optional label mask `S`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub params: CsbmParams,
    pub seed: u64,
    /// `ε_i ∈ {0, 1}`.
    pub labels: Vec<u8>,
    pub adjacency: Adjacency,
    pub features: Matrix,
    /// Sorted indices of nodes whose labels are visible.
    pub mask: Vec<usize>,
    /// Seed used by [`sample_mask`], if the mask was sampled.
    pub mask_seed: Option<u64>,
}

impl Sample {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// `(|C₀|, |C₁|)`.
    pub fn class_sizes(&self) -> (usize, usize) {
        class_sizes(&self.labels)
    }

    /// Number of masked nodes of each label.
    pub fn mask_counts(&self) -> (usize, usize) {
        let ones = self.mask.iter().filter(|&&i| self.labels[i] == 1).count();
        (self.mask.len() - ones, ones)
    }
}

pub(crate) fn class_sizes(labels: &[u8]) -> (usize, usize) {
    let ones = labels.iter().filter(|&&y| y == 1).count();
    (labels.len() - ones, ones)
}

pub fn sample_csbm(params: &CsbmParams, seed: u64) -> Result<Sample> {
    params.validate()?;
    let n = params.n;
    let d = params.d;

    let mut rng = StreamRng::new(seed, Stream::Labels);
    let labels: Vec<u8> = (0..n).map(|_| rng.bernoulli(0.5) as u8).collect();

    let mut rng = StreamRng::new(seed, Stream::Edges);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let prob = if labels[i] == labels[j] { params.p } else { params.q };
            // certain outcomes consume no randomness
            let present = if prob <= 0.0 {
                false
            } else if prob >= 1.0 {
                true
            } else {
                rng.bernoulli(prob)
            };
            if present {
                edges.push((i, j));
            }
        }
    }
    let adjacency = Adjacency::from_edges(n, edges)?;

    let mut rng = StreamRng::new(seed, Stream::Features);
    let sd = libm::sqrt(params.feature_variance_scale / d as f64);
    let mut features = Matrix::zeros(n, d);
    for (i, &y) in labels.iter().enumerate() {
        let mean = if y == 0 { &params.mu } else { &params.nu };
        for (x, m) in features.row_mut(i).iter_mut().zip(mean) {
            *x = m + sd * rng.standard_normal();
        }
    }

    Ok(Sample {
        params: params.clone(),
        seed,
        labels,
        adjacency,
        features,
        mask: Vec::new(),
        mask_seed: None,
    })
}

/// `round(β·n)` with halves rounded up.
pub fn mask_count(beta: f64, n: usize) -> usize {
    libm::floor(beta * n as f64 + 0.5) as usize
}

/// Draws `round(β₀·n)` label-0 and `round(β₁·n)` label-1 nodes uniformly
/// without replacement.
pub fn sample_mask(sample: &Sample, beta0: f64, beta1: f64, seed: u64) -> Result<Sample> {
    for (name, b) in [("beta0", beta0), ("beta1", beta1)] {
        if !(b > 0.0 && b <= 0.5) {
            return Err(Error::InvalidArgument(format!("{name} = {b} outside (0, 1/2]")));
        }
    }
    let n = sample.n();
    let counts = [mask_count(beta0, n), mask_count(beta1, n)];
    sample_mask_counts(sample, counts, seed)
}

/// Same as [`sample_mask`] but with explicit per-class counts.
pub fn sample_mask_counts(sample: &Sample, counts: [usize; 2], seed: u64) -> Result<Sample> {
    let mut members: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &y) in sample.labels.iter().enumerate() {
        members[y as usize].push(i);
    }
    for class in 0..2 {
        if counts[class] > members[class].len() {
            return Err(Error::Mask {
                class: class as u8,
                requested: counts[class],
                available: members[class].len(),
            });
        }
    }
    let mut rng = StreamRng::new(seed, Stream::Mask);
    let mut mask = rng.choose(&members[0], counts[0]);
    mask.extend(rng.choose(&members[1], counts[1]));
    mask.sort_unstable();

    let mut out = sample.clone();
    out.mask = mask;
    out.mask_seed = Some(seed);
    Ok(out)
}

/// Degree and class-size statistics of a sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ConcentrationReport {
    pub class0_fraction: f64,
    pub class1_fraction: f64,
    /// `D_ii`, row sums of `A + I`.
    pub degrees: Vec<usize>,
    pub min_degree: usize,
    pub max_degree: usize,
    /// `|C₀ ∩ N_i| / D_ii` where `N_i` includes `i`.
    pub class0_neighbor_fraction: Vec<f64>,
    /// `|C₁ ∩ N_i| / D_ii`.
    pub class1_neighbor_fraction: Vec<f64>,
    /// Whether the class-size, degree and neighbourhood bands all hold for
    /// the supplied `(δ, δ')`.
    pub event_holds: bool,
}

/// Computes the statistics and checks the event
///
/// ```text
/// n/2 (1-δ) ≤ |C₀|, |C₁| ≤ n/2 (1+δ)
/// n(p+q)/2 (1-δ') ≤ D_ii ≤ n(p+q)/2 (1+δ')                 for all i
/// r_c(i) (1-δ') ≤ |C_c ∩ N_i| / D_ii ≤ r_c(i) (1+δ')       for all i, c
/// ```
///
/// with `r_c(i) = p/(p+q)` when `c` is the class of `i` and `q/(p+q)`
/// otherwise. The event is false whenever `p + q = 0`.
pub fn concentration_report(sample: &Sample, delta: f64, delta_prime: f64) -> ConcentrationReport {
    let n = sample.n();
    let (c0, c1) = sample.class_sizes();
    let adj = &sample.adjacency;

    let mut degrees = Vec::with_capacity(n);
    let mut frac0 = Vec::with_capacity(n);
    let mut frac1 = Vec::with_capacity(n);
    for i in 0..n {
        let mut counts = [0usize; 2];
        counts[sample.labels[i] as usize] += 1;
        for j in adj.neighbors(i) {
            counts[sample.labels[j] as usize] += 1;
        }
        let deg = counts[0] + counts[1];
        degrees.push(deg);
        frac0.push(counts[0] as f64 / deg as f64);
        frac1.push(counts[1] as f64 / deg as f64);
    }

    let p = sample.params.p;
    let q = sample.params.q;
    let half_n = n as f64 / 2.0;
    let within = |x: f64, centre: f64, tol: f64| {
        centre * (1.0 - tol) <= x && x <= centre * (1.0 + tol)
    };
    let event_holds = p + q > 0.0
        && within(c0 as f64, half_n, delta)
        && within(c1 as f64, half_n, delta)
        && (0..n).all(|i| {
            let expected_deg = half_n * (p + q);
            let (own, other) = (p / (p + q), q / (p + q));
            let (r0, r1) = if sample.labels[i] == 0 { (own, other) } else { (other, own) };
            within(degrees[i] as f64, expected_deg, delta_prime)
                && within(frac0[i], r0, delta_prime)
                && within(frac1[i], r1, delta_prime)
        });

    ConcentrationReport {
        class0_fraction: c0 as f64 / n as f64,
        class1_fraction: c1 as f64 / n as f64,
        min_degree: degrees.iter().copied().min().unwrap_or(0),
        max_degree: degrees.iter().copied().max().unwrap_or(0),
        degrees,
        class0_neighbor_fraction: frac0,
        class1_neighbor_fraction: frac1,
        event_holds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn params(n: usize, p: f64, q: f64) -> CsbmParams {
        CsbmParams::symmetric(n, 4, p, q, 0.5)
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(sample_csbm(&params(1, 0.5, 0.1), 0).is_err());
        assert!(sample_csbm(&params(10, 1.5, 0.1), 0).is_err());
        assert!(sample_csbm(&params(10, 0.5, -0.1), 0).is_err());
        let mut bad = params(10, 0.5, 0.1);
        bad.d = 0;
        bad.mu.clear();
        bad.nu.clear();
        assert!(sample_csbm(&bad, 0).is_err());
    }

    #[test]
    fn extreme_probabilities() {
        let empty = sample_csbm(&params(30, 0.0, 0.0), 3).unwrap();
        assert_eq!(empty.adjacency.edge_count(), 0);
        let full = sample_csbm(&params(30, 1.0, 1.0), 3).unwrap();
        assert_eq!(full.adjacency.edge_count(), 30 * 29 / 2);
        for i in 0..30 {
            assert!(!full.adjacency.has_edge(i, i));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = sample_csbm(&params(60, 0.3, 0.1), 42).unwrap();
        let b = sample_csbm(&params(60, 0.3, 0.1), 42).unwrap();
        let c = sample_csbm(&params(60, 0.3, 0.1), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.features, c.features);
    }

    #[test]
    fn feature_moments_match_law_of_large_numbers() {
        let n = 10_000;
        let d = 4;
        let p = CsbmParams::new(n, d, 0.0, 0.0, vec![0.0; d], vec![0.0; d]);
        let s = sample_csbm(&p, 9).unwrap();
        let bound = 4.0 / libm::sqrt((d * n) as f64);
        for j in 0..d {
            let col: Vec<f64> = (0..n).map(|i| s.features.get(i, j)).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
            assert!(mean.abs() <= bound, "column {j} mean {mean}");
            assert!((var * d as f64 - 1.0).abs() <= 0.1, "column {j} var {var}");
        }
    }

    #[test]
    fn mask_counts_follow_rounding() {
        let s = sample_csbm(&params(400, 0.1, 0.05), 5).unwrap();
        let m = sample_mask(&s, 0.05, 0.05, 1).unwrap();
        assert_eq!(m.mask_counts(), (20, 20));
        assert!(m.mask.windows(2).all(|w| w[0] < w[1]));
        let again = sample_mask(&s, 0.05, 0.05, 1).unwrap();
        assert_eq!(m.mask, again.mask);
    }

    #[test]
    fn mask_count_rounds_half_up() {
        assert_eq!(mask_count(0.05, 410), 21);
        assert_eq!(mask_count(0.5, 7), 4);
        assert_eq!(mask_count(0.05, 400), 20);
    }

    #[test]
    fn full_mask_on_balanced_classes() {
        // find a seed with exactly balanced classes
        let base = params(20, 0.2, 0.1);
        let s = (0..1000)
            .map(|seed| sample_csbm(&base, seed).unwrap())
            .find(|s| s.class_sizes() == (10, 10))
            .unwrap();
        let m = sample_mask(&s, 0.5, 0.5, 0).unwrap();
        assert_eq!(m.mask, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn mask_too_large_is_an_error() {
        let base = params(20, 0.2, 0.1);
        let s = (0..1000)
            .map(|seed| sample_csbm(&base, seed).unwrap())
            .find(|s| s.class_sizes().0 < 10)
            .unwrap();
        assert!(matches!(
            sample_mask(&s, 0.5, 0.5, 0),
            Err(Error::Mask { class: 0, .. })
        ));
        assert!(sample_mask(&s, 0.0, 0.5, 0).is_err());
    }

    #[test]
    fn concentration_on_extreme_graphs() {
        let empty = sample_csbm(&params(50, 0.0, 0.0), 1).unwrap();
        let r = concentration_report(&empty, 0.5, 0.5);
        assert!(r.degrees.iter().all(|&d| d == 1));
        for i in 0..50 {
            let own = if empty.labels[i] == 0 {
                r.class0_neighbor_fraction[i]
            } else {
                r.class1_neighbor_fraction[i]
            };
            assert_eq!(own, 1.0);
        }
        assert!(!r.event_holds);

        let full = sample_csbm(&params(50, 1.0, 1.0), 1).unwrap();
        let r = concentration_report(&full, 0.5, 0.5);
        assert!(r.degrees.iter().all(|&d| d == 50));
        assert!(r
            .class0_neighbor_fraction
            .iter()
            .all(|&f| f == r.class0_fraction));
    }
}
