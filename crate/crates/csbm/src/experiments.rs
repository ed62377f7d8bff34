//! Seeded sweeps over the CSBM and over fixed graphs, one CSV row per
//! (grid point, trial pairing).
//!
//! Every random draw is a pure function of the base seed and the row's grid
//! coordinates, so any row can be regenerated on its own and the output does
//! not depend on the number of worker threads. Rows are sorted canonically
//! before they are written.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use csbm_core::csbm::{mask_count, sample_mask_counts};
use csbm_core::rng::derive_seed;
use csbm_core::{
    ansatz_classifier, ansatz_loss_rate, bce_loss, certify_subset, convolve, gamma_snr,
    inject_inter_class_noise, ood_loss_rate, raw_loss_lower_bound, sample_csbm, solve_opt,
    thresholds, Classifier, CsbmParams, Matrix, Sample, Solution, StepMode, TheoryContext,
    TrainConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datasets::{binary_task, estimate_class_means, load_dataset_with, BinaryTask, LoadOptions};
use crate::error::{Error, Result};
use crate::io::{hex, prepare_output, write_file};

pub const RESULTS_FILE: &str = "results.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

// roles mixed into seed derivation
const TRAIN: u64 = 1;
const MASK: u64 = 2;
const TEST: u64 = 3;
const NOISE: u64 = 4;
const STANDIN: u64 = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    MeansSweep,
    DensitySweep,
    OodSweep,
    NoiseSweep,
    SeparabilityGrid,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::MeansSweep => "means_sweep",
            ExperimentKind::DensitySweep => "density_sweep",
            ExperimentKind::OodSweep => "ood_sweep",
            ExperimentKind::NoiseSweep => "noise_sweep",
            ExperimentKind::SeparabilityGrid => "separability_grid",
        }
    }
}

/// Model parameters without the means; those follow from the distance axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n: usize,
    pub d: usize,
    pub p: f64,
    pub q: f64,
    #[serde(default = "one")]
    pub feature_variance_scale: f64,
}

impl ModelConfig {
    /// `μ = -(δ/2)e₁`, `ν = +(δ/2)e₁`.
    pub fn params(&self, p: f64, q: f64, distance: f64) -> CsbmParams {
        let mut params = CsbmParams::symmetric(self.n, self.d, p, q, distance);
        params.feature_variance_scale = self.feature_variance_scale;
        params
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    /// The labelled nodes `S`.
    #[default]
    Mask,
    All,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorNodes {
    #[default]
    All,
    Unmasked,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    Fixed,
    Backtracking,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_step")]
    pub step_mode: StepRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: default_max_iterations(),
            tolerance: default_tolerance(),
            step_mode: default_step(),
        }
    }
}

/// Graph for the noise sweep: a dataset directory, or a CSBM sample standing
/// in for one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSource {
    Dataset {
        path: PathBuf,
        #[serde(default)]
        class_id: Option<u32>,
        #[serde(default)]
        normalize_rows: bool,
    },
    Standin {
        model: ModelConfig,
        distance: f64,
        beta0: f64,
        beta1: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Base model of the synthetic sweeps. Optional for the noise sweep,
    /// whose graph comes from `noise_source`.
    #[serde(default)]
    pub model: Option<ModelConfig>,
    /// Distances between the class means.
    #[serde(default)]
    pub distances: Vec<f64>,
    /// Density sweep: values of `p`, with `q = q_ratio·p`.
    #[serde(default)]
    pub p_values: Vec<f64>,
    #[serde(default)]
    pub q_ratio: Option<f64>,
    /// OOD sweep: training pairs `(p, q)`; defaults to the model's.
    #[serde(default)]
    pub train_pairs: Vec<[f64; 2]>,
    /// OOD sweep: test pairs `(p', q')` with `p' > q'`.
    #[serde(default)]
    pub test_pairs: Vec<[f64; 2]>,
    /// Noise sweep: added inter-class edges as a multiple of the existing ones.
    #[serde(default)]
    pub rhos: Vec<f64>,
    #[serde(default)]
    pub noise_source: Option<NoiseSource>,
    #[serde(default = "ten")]
    pub train_trials: usize,
    /// Test graphs per point, or noise draws per ρ in the noise sweep.
    #[serde(default = "ten")]
    pub test_trials: usize,
    /// Separability grid: CSBM examples per trial that must all be
    /// separable at once. Unset means a single example.
    #[serde(default)]
    pub joint_examples: Option<usize>,
    /// Norm bound; defaults to `d`.
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default = "half")]
    pub beta0: f64,
    #[serde(default = "half")]
    pub beta1: f64,
    #[serde(default)]
    pub seed: u64,
    /// Whether the synthetic sweeps certify separability of the training data.
    #[serde(default = "yes")]
    pub certify: bool,
    #[serde(default)]
    pub separability_subset: Subset,
    #[serde(default)]
    pub error_nodes: ErrorNodes,
    /// `K` of the raw threshold marker `K/√d`.
    #[serde(default = "one")]
    pub threshold_k: f64,
    /// Slack `t` in the raw-loss lower bound.
    #[serde(default)]
    pub lower_bound_t: f64,
    #[serde(default)]
    pub solver: SolverConfig,
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn ten() -> usize {
    10
}
fn yes() -> bool {
    true
}
fn default_max_iterations() -> usize {
    200_000
}
fn default_tolerance() -> f64 {
    1e-9
}
fn default_step() -> StepRule {
    StepRule::Backtracking
}

fn check_probability(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {x} is not a probability")))
    }
}

fn check_model(m: &ModelConfig) -> Result<()> {
    if m.n < 2 || m.d < 1 {
        return Err(Error::Config(format!("need n >= 2 and d >= 1, got n = {}, d = {}", m.n, m.d)));
    }
    check_probability("p", m.p)?;
    check_probability("q", m.q)?;
    if !(m.feature_variance_scale > 0.0) {
        return Err(Error::Config("feature_variance_scale must be positive".into()));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(e) => Error::parse(path, e.line(), e.to_string()),
            other => other,
        })
    }

    /// The base model. Validation guarantees it for synthetic sweeps.
    pub fn model(&self) -> &ModelConfig {
        self.model.as_ref().expect("validated config has a model")
    }

    /// The configured radius, or `d` of the base model.
    pub fn radius(&self) -> f64 {
        self.radius
            .or_else(|| self.model.as_ref().map(|m| m.d as f64))
            .unwrap_or(1.0)
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut config = TrainConfig::new(self.radius());
        config.max_iterations = self.solver.max_iterations;
        config.tolerance = self.solver.tolerance;
        config.with_step_mode(match self.solver.step_mode {
            StepRule::Fixed => StepMode::Fixed,
            StepRule::Backtracking => StepMode::Backtracking,
        })
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex(&Sha256::digest(json))
    }

    pub fn validate(&self) -> Result<()> {
        match &self.model {
            Some(m) => check_model(m)?,
            None if self.experiment == ExperimentKind::NoiseSweep => {}
            None => return Err(Error::Config(format!("{} needs a `model`", self.experiment.name()))),
        }
        if self.train_trials == 0 || self.test_trials == 0 {
            return Err(Error::Config("trial counts must be at least 1".into()));
        }
        if self.joint_examples == Some(0) {
            return Err(Error::Config("joint_examples must be at least 1".into()));
        }
        if !(self.radius() > 0.0 && self.radius().is_finite()) {
            return Err(Error::Config("radius must be positive".into()));
        }
        for (name, beta) in [("beta0", self.beta0), ("beta1", self.beta1)] {
            if !(beta > 0.0 && beta <= 0.5) {
                return Err(Error::Config(format!("{name} = {beta} must lie in (0, 1/2]")));
            }
        }
        if !(self.solver.tolerance > 0.0) {
            return Err(Error::Config("solver tolerance must be positive".into()));
        }
        if let Some(&bad) = self.distances.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::Config(format!("distance {bad} must be finite and >= 0")));
        }
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("{} needs {what}", self.experiment.name())))
            }
        };
        match self.experiment {
            ExperimentKind::MeansSweep | ExperimentKind::SeparabilityGrid => {
                need(!self.distances.is_empty(), "a nonempty `distances` grid")?;
            }
            ExperimentKind::DensitySweep => {
                need(!self.distances.is_empty(), "a nonempty `distances` grid")?;
                need(!self.p_values.is_empty(), "a nonempty `p_values` grid")?;
                let ratio = self.q_ratio.ok_or_else(|| Error::Config("density_sweep needs `q_ratio`".into()))?;
                for &p in &self.p_values {
                    check_probability("p", p)?;
                    check_probability("q", ratio * p)?;
                }
            }
            ExperimentKind::OodSweep => {
                need(!self.distances.is_empty(), "a nonempty `distances` grid")?;
                need(!self.test_pairs.is_empty(), "a nonempty `test_pairs` grid")?;
                for &[p, q] in self.train_pairs.iter().chain(&self.test_pairs) {
                    check_probability("p", p)?;
                    check_probability("q", q)?;
                }
                if let Some([p, q]) = self.test_pairs.iter().find(|[p, q]| p <= q) {
                    return Err(Error::Config(format!("test pair ({p}, {q}) needs p' > q'")));
                }
            }
            ExperimentKind::NoiseSweep => {
                need(!self.rhos.is_empty(), "a nonempty `rhos` grid")?;
                need(self.noise_source.is_some(), "a `noise_source`")?;
                if let Some(&bad) = self.rhos.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
                    return Err(Error::Config(format!("rho {bad} must be finite and >= 0")));
                }
                if let Some(NoiseSource::Standin { model, distance, beta0, beta1 }) = &self.noise_source {
                    check_model(model)?;
                    if !(distance.is_finite() && *distance >= 0.0) {
                        return Err(Error::Config(format!("stand-in distance {distance} must be finite and >= 0")));
                    }
                    if !(*beta0 > 0.0 && *beta0 <= 0.5 && *beta1 > 0.0 && *beta1 <= 0.5) {
                        return Err(Error::Config("stand-in betas must lie in (0, 1/2]".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// One output row. Columns that do not apply to an experiment are empty.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub experiment: String,
    pub distance: Option<f64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub p_test: Option<f64>,
    pub q_test: Option<f64>,
    pub rho: Option<f64>,
    pub train_trial: usize,
    pub test_trial: Option<usize>,
    pub train_seed: u64,
    pub mask_seed: Option<u64>,
    pub test_seed: Option<u64>,
    pub noise_seed: Option<u64>,
    pub train_loss_raw: Option<f64>,
    pub train_loss_conv: Option<f64>,
    pub test_loss_raw: Option<f64>,
    pub test_loss_conv: Option<f64>,
    pub train_error_raw: Option<f64>,
    pub train_error_conv: Option<f64>,
    pub test_error_raw: Option<f64>,
    pub test_error_conv: Option<f64>,
    pub separable_raw: Option<bool>,
    pub separable_conv: Option<bool>,
    pub margin_raw: Option<f64>,
    pub margin_conv: Option<f64>,
    pub all_separable_raw: Option<bool>,
    pub all_separable_conv: Option<bool>,
    pub w_norm_raw: Option<f64>,
    pub w_norm_conv: Option<f64>,
    pub converged_raw: Option<bool>,
    pub converged_conv: Option<bool>,
    pub ansatz_train_loss_conv: Option<f64>,
    pub gamma: Option<f64>,
    pub ansatz_rate: Option<f64>,
    pub ood_rate: Option<f64>,
    pub lower_bound: Option<f64>,
    pub raw_threshold: Option<f64>,
    pub conv_lower: Option<f64>,
    pub conv_lower_unhalved: Option<f64>,
    pub conv_upper: Option<f64>,
    pub conv_upper_unhalved: Option<f64>,
    pub density_reference: Option<f64>,
    pub achieved_rho: Option<f64>,
}

impl ExperimentRow {
    fn sort_key(&self) -> impl Ord {
        let f = |x: Option<f64>| {
            // total order on the bit patterns of non-negative floats
            x.map_or(0u64, |v| v.to_bits().wrapping_add(1))
        };
        (
            self.experiment.clone(),
            f(self.distance),
            f(self.p),
            f(self.q),
            f(self.p_test),
            f(self.q_test),
            f(self.rho),
            self.train_trial,
            self.test_trial,
        )
    }
}

pub fn sort_rows(rows: &mut [ExperimentRow]) {
    rows.sort_by_key(|r| r.sort_key());
}

fn bits(x: f64) -> u64 {
    x.to_bits()
}

fn all_nodes(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Labelled nodes for a training sample. Requested counts larger than a
/// class (as `β = 1/2` asks for whenever the classes are unequal) are
/// clamped to the class size.
fn masked(sample: &Sample, beta0: f64, beta1: f64, seed: u64) -> Result<Sample> {
    let n = sample.n();
    let (c0, c1) = sample.class_sizes();
    let want = [mask_count(beta0, n), mask_count(beta1, n)];
    let counts = [want[0].min(c0), want[1].min(c1)];
    if counts != want {
        log::debug!("mask counts {want:?} clamped to class sizes {counts:?}");
    }
    Ok(sample_mask_counts(sample, counts, seed)?)
}

fn error_rate(classifier: &Classifier, x: &Matrix, labels: &[u8], nodes: &[usize]) -> f64 {
    classifier.error_rate(x, labels, nodes)
}

fn loss(classifier: &Classifier, x: &Matrix, labels: &[u8], nodes: &[usize]) -> Result<f64> {
    Ok(bce_loss(x, labels, nodes, classifier)?.loss)
}

struct Pipelines {
    raw: Solution,
    conv: Solution,
}

fn train_both(raw: &Matrix, conv: &Matrix, labels: &[u8], nodes: &[usize], config: &TrainConfig) -> Result<Pipelines> {
    Ok(Pipelines {
        raw: solve_opt(raw, labels, nodes, config)?,
        conv: solve_opt(conv, labels, nodes, config)?,
    })
}

/// Theory overlay columns for a point of a synthetic sweep.
fn overlays(config: &ExperimentConfig, params: &CsbmParams, row: &mut ExperimentRow) {
    let ctx = TheoryContext::new(params.clone(), config.radius(), config.beta0, config.beta1);
    let t = thresholds(&ctx, config.threshold_k);
    row.gamma = gamma_snr(params.p, params.q).ok();
    row.ansatz_rate = ansatz_loss_rate(&ctx).ok();
    let k = params.mean_distance() * (params.d as f64).sqrt();
    row.lower_bound = Some(raw_loss_lower_bound(k, config.lower_bound_t, config.beta0, config.beta1));
    row.raw_threshold = Some(t.raw_scale);
    row.conv_lower = Some(t.convolved_lower);
    row.conv_lower_unhalved = Some(t.convolved_lower_unhalved);
    row.conv_upper = Some(t.convolved_upper);
    row.conv_upper_unhalved = Some(t.convolved_upper_unhalved);
}

/// A trained point of a means or density sweep.
struct TrainedTrial {
    row: ExperimentRow,
    raw: Classifier,
    conv: Classifier,
}

struct SweepPoint {
    distance: f64,
    p: f64,
    q: f64,
}

fn sweep_points(config: &ExperimentConfig) -> Vec<SweepPoint> {
    let mut points = Vec::new();
    for &distance in &config.distances {
        match config.experiment {
            ExperimentKind::DensitySweep => {
                let ratio = config.q_ratio.unwrap_or(1.0);
                points.extend(config.p_values.iter().map(|&p| SweepPoint { distance, p, q: ratio * p }));
            }
            _ => points.push(SweepPoint {
                distance,
                p: config.model().p,
                q: config.model().q,
            }),
        }
    }
    points
}

fn train_seed(config: &ExperimentConfig, distance: f64, p: f64, q: f64, trial: usize) -> u64 {
    derive_seed(config.seed, &[TRAIN, bits(distance), bits(p), bits(q), trial as u64])
}

fn test_seed(config: &ExperimentConfig, distance: f64, p: f64, q: f64, trial: usize) -> u64 {
    derive_seed(config.seed, &[TEST, bits(distance), bits(p), bits(q), trial as u64])
}

fn train_trial(config: &ExperimentConfig, point: &SweepPoint, trial: usize) -> Result<TrainedTrial> {
    let params = config.model().params(point.p, point.q, point.distance);
    let seed = train_seed(config, point.distance, point.p, point.q, trial);
    let mask_seed = derive_seed(seed, &[MASK]);
    let sample = masked(&sample_csbm(&params, seed)?, config.beta0, config.beta1, mask_seed)?;
    let conv = convolve(&sample.adjacency, &sample.features)?.values;
    let s = &sample.mask;
    let fit = train_both(&sample.features, &conv, &sample.labels, s, &config.train_config())?;

    let mut row = ExperimentRow {
        experiment: config.experiment.name().into(),
        distance: Some(point.distance),
        p: Some(point.p),
        q: Some(point.q),
        train_trial: trial,
        train_seed: seed,
        mask_seed: Some(mask_seed),
        train_loss_raw: Some(fit.raw.final_loss()),
        train_loss_conv: Some(fit.conv.final_loss()),
        train_error_raw: Some(error_rate(&fit.raw.classifier, &sample.features, &sample.labels, s)),
        train_error_conv: Some(error_rate(&fit.conv.classifier, &conv, &sample.labels, s)),
        w_norm_raw: Some(fit.raw.classifier.w_norm()),
        w_norm_conv: Some(fit.conv.classifier.w_norm()),
        converged_raw: Some(fit.raw.converged),
        converged_conv: Some(fit.conv.converged),
        ..ExperimentRow::default()
    };
    if let Ok(ansatz) = ansatz_classifier(&params.mu, &params.nu, config.radius()) {
        row.ansatz_train_loss_conv = Some(loss(&ansatz, &conv, &sample.labels, s)?);
    }
    if config.certify {
        let nodes = match config.separability_subset {
            Subset::Mask => s.clone(),
            Subset::All => all_nodes(sample.n()),
        };
        let raw_cert = certify_subset(&sample.features, &sample.labels, &nodes)?;
        let conv_cert = certify_subset(&conv, &sample.labels, &nodes)?;
        row.separable_raw = Some(raw_cert.separable);
        row.margin_raw = Some(raw_cert.margin);
        row.separable_conv = Some(conv_cert.separable);
        row.margin_conv = Some(conv_cert.margin);
    }
    overlays(config, &params, &mut row);
    if config.experiment == ExperimentKind::DensitySweep {
        let n = config.model().n as f64;
        row.density_reference = Some(n.ln().powi(2) / n);
    }
    Ok(TrainedTrial {
        row,
        raw: fit.raw.classifier,
        conv: fit.conv.classifier,
    })
}

/// A freshly drawn test graph with its convolved features.
struct TestGraph {
    seed: u64,
    sample: Sample,
    conv: Matrix,
}

fn test_graph(params: &CsbmParams, seed: u64) -> Result<TestGraph> {
    let sample = sample_csbm(params, seed)?;
    let conv = convolve(&sample.adjacency, &sample.features)?.values;
    Ok(TestGraph { seed, sample, conv })
}

/// Fills the test columns by evaluating both classifiers on every node of
/// the test graph.
fn evaluate(trained: &TrainedTrial, test: &TestGraph, trial: usize) -> Result<ExperimentRow> {
    let nodes = all_nodes(test.sample.n());
    let y = &test.sample.labels;
    let x = &test.sample.features;
    let mut row = trained.row.clone();
    row.test_trial = Some(trial);
    row.test_seed = Some(test.seed);
    row.test_loss_raw = Some(loss(&trained.raw, x, y, &nodes)?);
    row.test_loss_conv = Some(loss(&trained.conv, &test.conv, y, &nodes)?);
    row.test_error_raw = Some(error_rate(&trained.raw, x, y, &nodes));
    row.test_error_conv = Some(error_rate(&trained.conv, &test.conv, y, &nodes));
    Ok(row)
}

/// Means and density sweeps: every training trial is paired with every test
/// graph of its point.
fn run_synthetic_sweep(config: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    let points = sweep_points(config);
    let tasks: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|k| (0..config.train_trials).map(move |t| (k, t)))
        .collect();
    let trained: Vec<TrainedTrial> = tasks
        .par_iter()
        .map(|&(k, t)| train_trial(config, &points[k], t))
        .collect::<Result<_>>()?;

    let tests: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|k| (0..config.test_trials).map(move |s| (k, s)))
        .collect();
    let rows: Vec<Vec<ExperimentRow>> = tests
        .par_iter()
        .map(|&(k, s)| {
            let pt = &points[k];
            let params = config.model().params(pt.p, pt.q, pt.distance);
            let test = test_graph(&params, test_seed(config, pt.distance, pt.p, pt.q, s))?;
            trained[k * config.train_trials..(k + 1) * config.train_trials]
                .iter()
                .map(|tr| evaluate(tr, &test, s))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<ExperimentRow> = rows.into_iter().flatten().collect();
    sort_rows(&mut rows);
    Ok(rows)
}

pub fn run_means_sweep(config: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    expect_kind(config, ExperimentKind::MeansSweep)?;
    run_synthetic_sweep(config)
}

pub fn run_density_sweep(config: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    expect_kind(config, ExperimentKind::DensitySweep)?;
    run_synthetic_sweep(config)
}

fn expect_kind(config: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    config.validate()?;
    if config.experiment != kind {
        return Err(Error::Config(format!(
            "config is for {}, not {}",
            config.experiment.name(),
            kind.name()
        )));
    }
    Ok(())
}

/// Trains once per (distance, training pair, trial) and evaluates the same
/// classifiers on test graphs drawn at every `(p', q')` of the grid.
pub fn run_ood_sweep(config: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    expect_kind(config, ExperimentKind::OodSweep)?;
    let train_pairs = if config.train_pairs.is_empty() {
        vec![[config.model().p, config.model().q]]
    } else {
        config.train_pairs.clone()
    };
    let points: Vec<SweepPoint> = config
        .distances
        .iter()
        .flat_map(|&distance| train_pairs.iter().map(move |&[p, q]| SweepPoint { distance, p, q }))
        .collect();
    let tasks: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|k| (0..config.train_trials).map(move |t| (k, t)))
        .collect();
    let trained: Vec<TrainedTrial> = tasks
        .par_iter()
        .map(|&(k, t)| train_trial(config, &points[k], t))
        .collect::<Result<_>>()?;

    let tests: Vec<(usize, usize, usize)> = (0..config.distances.len())
        .flat_map(|k| {
            (0..config.test_pairs.len()).flat_map(move |j| (0..config.test_trials).map(move |s| (k, j, s)))
        })
        .collect();
    let rows: Vec<Vec<ExperimentRow>> = tests
        .par_iter()
        .map(|&(k, j, s)| {
            let distance = config.distances[k];
            let [pt, qt] = config.test_pairs[j];
            let params = config.model().params(pt, qt, distance);
            let test = test_graph(&params, test_seed(config, distance, pt, qt, s))?;
            let ood = ood_loss_rate(config.radius(), &params.mu, &params.nu, pt, qt)?;
            trained
                .iter()
                .filter(|tr| tr.row.distance == Some(distance))
                .map(|tr| {
                    let mut row = evaluate(tr, &test, s)?;
                    row.p_test = Some(pt);
                    row.q_test = Some(qt);
                    row.ood_rate = Some(ood);
                    Ok(row)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<ExperimentRow> = rows.into_iter().flatten().collect();
    sort_rows(&mut rows);
    Ok(rows)
}

/// Builds the noise sweep's fixed graph from its configured source.
pub fn noise_task(config: &ExperimentConfig) -> Result<(BinaryTask, Option<CsbmParams>)> {
    match &config.noise_source {
        None => Err(Error::Config("noise_sweep needs a `noise_source`".into())),
        Some(NoiseSource::Dataset {
            path,
            class_id,
            normalize_rows,
        }) => {
            let options = LoadOptions {
                normalize_rows: *normalize_rows,
            };
            let dataset = load_dataset_with(path, &options)?;
            Ok((binary_task(&dataset, *class_id)?, None))
        }
        Some(NoiseSource::Standin {
            model,
            distance,
            beta0,
            beta1,
        }) => {
            let params = model.params(model.p, model.q, *distance);
            let seed = derive_seed(config.seed, &[STANDIN]);
            let sample = masked(&sample_csbm(&params, seed)?, *beta0, *beta1, derive_seed(seed, &[MASK]))?;
            Ok((BinaryTask::from_sample(&sample), Some(params)))
        }
    }
}

/// Trains on the task's labelled nodes once, then re-evaluates both
/// classifiers on graphs with added inter-class edges. Features never
/// change, so the raw pipeline's error is the same in every row.
pub fn run_noise_sweep(config: &ExperimentConfig, task: &BinaryTask) -> Result<Vec<ExperimentRow>> {
    expect_kind(config, ExperimentKind::NoiseSweep)?;
    let means = estimate_class_means(task).map_err(|e| match e {
        Error::Core(core) => Error::Config(format!("degenerate mask: {core}")),
        other => other,
    })?;
    let nodes = match config.error_nodes {
        ErrorNodes::All => all_nodes(task.n()),
        ErrorNodes::Unmasked => {
            let mut keep = vec![true; task.n()];
            task.mask.iter().for_each(|&i| keep[i] = false);
            (0..task.n()).filter(|&i| keep[i]).collect()
        }
    };
    if nodes.is_empty() {
        return Err(Error::Config("no nodes left to evaluate".into()));
    }
    let y = &task.labels;
    let conv = convolve(&task.adjacency, &task.features)?.values;
    let mut train = config.train_config();
    if config.radius.is_none() {
        train.radius = task.features.cols() as f64;
    }
    let fit = train_both(&task.features, &conv, y, &task.mask, &train)?;
    let (raw_c, conv_c) = (&fit.raw.classifier, &fit.conv.classifier);

    let base = ExperimentRow {
        experiment: config.experiment.name().into(),
        distance: Some(means.distance),
        train_trial: 0,
        train_seed: config.seed,
        train_loss_raw: Some(fit.raw.final_loss()),
        train_loss_conv: Some(fit.conv.final_loss()),
        train_error_raw: Some(error_rate(raw_c, &task.features, y, &task.mask)),
        train_error_conv: Some(error_rate(conv_c, &conv, y, &task.mask)),
        w_norm_raw: Some(raw_c.w_norm()),
        w_norm_conv: Some(conv_c.w_norm()),
        converged_raw: Some(fit.raw.converged),
        converged_conv: Some(fit.conv.converged),
        ..ExperimentRow::default()
    };
    let tasks: Vec<(usize, usize)> = (0..config.rhos.len())
        .flat_map(|r| (0..config.test_trials).map(move |t| (r, t)))
        .collect();
    let mut rows: Vec<ExperimentRow> = tasks
        .par_iter()
        .map(|&(r, t)| {
            let rho = config.rhos[r];
            let seed = derive_seed(config.seed, &[NOISE, bits(rho), t as u64]);
            let noisy = inject_inter_class_noise(&task.adjacency, y, rho, seed)?;
            let noisy_conv = convolve(&noisy.adjacency, &task.features)?.values;
            let mut row = base.clone();
            row.rho = Some(rho);
            row.test_trial = Some(t);
            row.noise_seed = Some(seed);
            row.achieved_rho = Some(noisy.achieved_rho);
            row.test_loss_raw = Some(loss(raw_c, &task.features, y, &nodes)?);
            row.test_loss_conv = Some(loss(conv_c, &noisy_conv, y, &nodes)?);
            row.test_error_raw = Some(error_rate(raw_c, &task.features, y, &nodes));
            row.test_error_conv = Some(error_rate(conv_c, &noisy_conv, y, &nodes));
            Ok(row)
        })
        .collect::<Result<_>>()?;
    sort_rows(&mut rows);
    Ok(rows)
}

/// Per distance and trial, certifies separability of the raw and convolved
/// features. With `joint_examples = N` each trial draws N independent
/// examples and also reports whether all of them are separable.
pub fn run_separability_grid(config: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    expect_kind(config, ExperimentKind::SeparabilityGrid)?;
    let examples = config.joint_examples.unwrap_or(1);
    let (p, q) = (config.model().p, config.model().q);
    let tasks: Vec<(usize, usize)> = (0..config.distances.len())
        .flat_map(|k| (0..config.train_trials).map(move |t| (k, t)))
        .collect();
    let mut rows: Vec<ExperimentRow> = tasks
        .par_iter()
        .map(|&(k, t)| {
            let distance = config.distances[k];
            let params = config.model().params(p, q, distance);
            let seed = train_seed(config, distance, p, q, t);
            let mut verdicts = Vec::with_capacity(examples);
            let mut first = None;
            for e in 0..examples {
                let example_seed = if e == 0 { seed } else { derive_seed(seed, &[e as u64]) };
                let mask_seed = derive_seed(example_seed, &[MASK]);
                let sample = masked(&sample_csbm(&params, example_seed)?, config.beta0, config.beta1, mask_seed)?;
                let conv = convolve(&sample.adjacency, &sample.features)?.values;
                let nodes = match config.separability_subset {
                    Subset::Mask => sample.mask.clone(),
                    Subset::All => all_nodes(sample.n()),
                };
                let raw = certify_subset(&sample.features, &sample.labels, &nodes)?;
                let cv = certify_subset(&conv, &sample.labels, &nodes)?;
                verdicts.push((raw.separable, cv.separable));
                if first.is_none() {
                    first = Some((mask_seed, raw, cv));
                }
            }
            let (mask_seed, raw, cv) = first.expect("at least one example");
            let mut row = ExperimentRow {
                experiment: config.experiment.name().into(),
                distance: Some(distance),
                p: Some(p),
                q: Some(q),
                train_trial: t,
                train_seed: seed,
                mask_seed: Some(mask_seed),
                separable_raw: Some(raw.separable),
                separable_conv: Some(cv.separable),
                margin_raw: Some(raw.margin),
                margin_conv: Some(cv.margin),
                ..ExperimentRow::default()
            };
            if config.joint_examples.is_some() {
                row.all_separable_raw = Some(verdicts.iter().all(|v| v.0));
                row.all_separable_conv = Some(verdicts.iter().all(|v| v.1));
            }
            overlays(config, &params, &mut row);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    sort_rows(&mut rows);
    Ok(rows)
}

/// Runs whichever experiment the config names on the current rayon pool.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    config.validate()?;
    match config.experiment {
        ExperimentKind::MeansSweep => run_means_sweep(config),
        ExperimentKind::DensitySweep => run_density_sweep(config),
        ExperimentKind::OodSweep => run_ood_sweep(config),
        ExperimentKind::SeparabilityGrid => run_separability_grid(config),
        ExperimentKind::NoiseSweep => {
            let (task, _) = noise_task(config)?;
            run_noise_sweep(config, &task)
        }
    }
}

/// Runs on a dedicated pool of `jobs` threads (all cores when `None`).
pub fn run_with_jobs(config: &ExperimentConfig, jobs: Option<usize>) -> Result<Vec<ExperimentRow>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = jobs {
        builder = builder.num_threads(jobs.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_experiment(config))
}

pub fn rows_to_csv(rows: &[ExperimentRow]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        writer.write_record(header())?;
    }
    for row in rows {
        writer.serialize(row)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<ExperimentRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    Ok(reader.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Column names, in order.
pub fn header() -> Vec<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.serialize(ExperimentRow::default()).expect("default row serialises");
    let bytes = writer.into_inner().expect("in-memory writer");
    let text = String::from_utf8(bytes).expect("UTF-8");
    text.lines().next().unwrap_or("").split(',').map(String::from).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub rows: usize,
    pub wall_time_seconds: f64,
    pub results_sha256: String,
    pub effective_config: ExperimentConfig,
}

/// Runs the experiment and writes `results.csv` and `manifest.json` into
/// `out`.
pub fn run_to_dir(config: &ExperimentConfig, out: &Path, jobs: Option<usize>, force: bool) -> Result<Manifest> {
    config.validate()?;
    prepare_output(out, &[RESULTS_FILE, MANIFEST_FILE], force)?;
    let start = Instant::now();
    let rows = run_with_jobs(config, jobs)?;
    let csv = rows_to_csv(&rows)?;
    let manifest = Manifest {
        experiment: config.experiment.name().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: config.digest(),
        seed: config.seed,
        jobs,
        rows: rows.len(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        results_sha256: hex(&Sha256::digest(csv.as_bytes())),
        effective_config: config.clone(),
    };
    write_file(&out.join(RESULTS_FILE), &csv)?;
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    write_file(&out.join(MANIFEST_FILE), &json)?;
    Ok(manifest)
}
