//! The averaging graph convolution `X̃ = D⁻¹(A + I)X` and inter-class edge
//! noise.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::csbm::{CsbmParams, Sample};
use crate::error::{Error, Result};
use crate::graph::Adjacency;
use crate::math::CompensatedSum;
use crate::matrix::Matrix;
use crate::rng::{Stream, StreamRng};

/// Above this many accumulated terms the neighbourhood sums are compensated.
const COMPENSATION_THRESHOLD: usize = 10_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct ConvolvedFeatures {
    pub values: Matrix,
    /// SHA-256 of the edge list the convolution was computed from.
    pub source_graph_hash: [u8; 32],
}

/// SHA-256 over `n` followed by every edge `(u, v)`, `u < v`, in sorted
/// order, all as little-endian `u64`.
pub fn graph_hash(adjacency: &Adjacency) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((adjacency.node_count() as u64).to_le_bytes());
    for (u, v) in adjacency.edges() {
        h.update((u as u64).to_le_bytes());
        h.update((v as u64).to_le_bytes());
    }
    h.finalize().into()
}

/// Row `i` of the output is the mean of the feature rows over
/// `N_i = {i} ∪ neighbours(i)`: the sum is formed first, then divided by
/// `D_ii = |N_i|`.
pub fn convolve(adjacency: &Adjacency, features: &Matrix) -> Result<ConvolvedFeatures> {
    let n = adjacency.node_count();
    if features.rows() != n {
        return Err(Error::Shape(format!(
            "features have {} rows, graph has {n} nodes",
            features.rows()
        )));
    }
    let d = features.cols();
    let terms = (2 * adjacency.edge_count() + n).saturating_mul(d);
    let compensated = terms > COMPENSATION_THRESHOLD;

    let mut out = Matrix::zeros(n, d);
    let mut acc = alloc::vec![CompensatedSum::default(); if compensated { d } else { 0 }];
    for i in 0..n {
        let degree = (adjacency.degree(i) + 1) as f64;
        if compensated {
            acc.iter_mut().for_each(|a| *a = CompensatedSum::default());
            for j in core::iter::once(i).chain(adjacency.neighbors(i)) {
                for (a, x) in acc.iter_mut().zip(features.row(j)) {
                    a.add(*x);
                }
            }
            for (o, a) in out.row_mut(i).iter_mut().zip(&acc) {
                *o = a.value() / degree;
            }
        } else {
            let row = out.row_mut(i);
            for j in core::iter::once(i).chain(adjacency.neighbors(i)) {
                for (o, x) in row.iter_mut().zip(features.row(j)) {
                    *o += x;
                }
            }
            row.iter_mut().for_each(|o| *o /= degree);
        }
    }
    Ok(ConvolvedFeatures {
        values: out,
        source_graph_hash: graph_hash(adjacency),
    })
}

/// Conditional means of the convolved features given the graph and labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalMeans {
    /// `m(i) = (|C₀ ∩ N_i|·μ + |C₁ ∩ N_i|·ν) / D_ii`, one row per node.
    pub per_node: Matrix,
    /// `(pμ + qν)/(p + q)`; `None` when `p + q = 0`.
    pub limit_class0: Option<Vec<f64>>,
    /// `(qμ + pν)/(p + q)`; `None` when `p + q = 0`.
    pub limit_class1: Option<Vec<f64>>,
}

impl ConditionalMeans {
    /// The idealised limit for a node of the given label.
    pub fn limit_for(&self, label: u8) -> Option<&[f64]> {
        if label == 0 {
            self.limit_class0.as_deref()
        } else {
            self.limit_class1.as_deref()
        }
    }
}

pub fn conditional_means(params: &CsbmParams, sample: &Sample) -> ConditionalMeans {
    let n = sample.n();
    let d = params.d;
    let mut per_node = Matrix::zeros(n, d);
    for i in 0..n {
        let mut counts = [0usize; 2];
        counts[sample.labels[i] as usize] += 1;
        for j in sample.adjacency.neighbors(i) {
            counts[sample.labels[j] as usize] += 1;
        }
        let deg = (counts[0] + counts[1]) as f64;
        let (w0, w1) = (counts[0] as f64 / deg, counts[1] as f64 / deg);
        for ((m, a), b) in per_node.row_mut(i).iter_mut().zip(&params.mu).zip(&params.nu) {
            *m = w0 * a + w1 * b;
        }
    }
    let s = params.p + params.q;
    let blend = |wa: f64, wb: f64| -> Vec<f64> {
        params
            .mu
            .iter()
            .zip(&params.nu)
            .map(|(a, b)| (wa * a + wb * b) / s)
            .collect()
    };
    let (limit_class0, limit_class1) = if s > 0.0 {
        (Some(blend(params.p, params.q)), Some(blend(params.q, params.p)))
    } else {
        (None, None)
    };
    ConditionalMeans {
        per_node,
        limit_class0,
        limit_class1,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseInjection {
    pub adjacency: Adjacency,
    /// Inter-class edges in the input graph.
    pub existing_inter: usize,
    /// `round(ρ · existing_inter)`.
    pub requested: usize,
    pub added: usize,
    /// `added / existing_inter`, or 0 when there were no inter-class edges.
    pub achieved_rho: f64,
    /// True when fewer absent inter-class pairs existed than requested.
    pub clamped: bool,
}

/// Adds `round(ρ·m)` new inter-class edges, `m` being the number of existing
/// ones, drawn uniformly without replacement from the absent inter-class
/// pairs. When fewer pairs are absent than requested, all of them are added.
///
/// Sampling uses rejection when at least 10% of inter-class pairs are absent
/// and at most half of the absent pairs are requested; otherwise it
/// enumerates the absent pairs and draws from the list.
pub fn inject_inter_class_noise(
    adjacency: &Adjacency,
    labels: &[u8],
    rho: f64,
    seed: u64,
) -> Result<NoiseInjection> {
    let n = adjacency.node_count();
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for {n} nodes",
            labels.len()
        )));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
    }
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(Error::InvalidArgument(format!("rho = {rho} must be >= 0")));
    }

    let existing_inter = adjacency
        .edges()
        .into_iter()
        .filter(|&(u, v)| labels[u] != labels[v])
        .count();
    let requested = libm::floor(rho * existing_inter as f64 + 0.5) as usize;
    let class0: Vec<usize> = (0..n).filter(|&i| labels[i] == 0).collect();
    let class1: Vec<usize> = (0..n).filter(|&i| labels[i] == 1).collect();
    let total_pairs = class0.len() * class1.len();
    let absent = total_pairs - existing_inter;
    let target = requested.min(absent);

    let mut rng = StreamRng::new(seed, Stream::Noise);
    let new_edges: Vec<(usize, usize)> = if target == 0 {
        Vec::new()
    } else if absent * 10 >= total_pairs && target * 2 <= absent {
        let mut chosen = BTreeSet::new();
        while chosen.len() < target {
            let a = class0[rng.below(class0.len() as u64) as usize];
            let b = class1[rng.below(class1.len() as u64) as usize];
            if !adjacency.has_edge(a, b) {
                chosen.insert((a.min(b), a.max(b)));
            }
        }
        chosen.into_iter().collect()
    } else {
        let mut candidates = Vec::with_capacity(absent);
        for &a in &class0 {
            for &b in &class1 {
                if !adjacency.has_edge(a, b) {
                    candidates.push((a.min(b), a.max(b)));
                }
            }
        }
        rng.choose(&candidates, target)
    };

    let out = if new_edges.is_empty() {
        adjacency.clone()
    } else {
        adjacency.with_added_edges(&new_edges)?
    };
    Ok(NoiseInjection {
        adjacency: out,
        existing_inter,
        requested,
        added: target,
        achieved_rho: if existing_inter == 0 {
            0.0
        } else {
            target as f64 / existing_inter as f64
        },
        clamped: target < requested,
    })
}
