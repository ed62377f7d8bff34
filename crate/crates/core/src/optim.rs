//! Binary cross-entropy on an index set and a projected-gradient solver for
//!
//! ```text
//! minimize   L(w, b) = (1/|S|) Σ_{i∈S} softplus((1 - 2y_i)(⟨x_i, w⟩ + b))
//! subject to ‖w‖₂ ≤ R,  b free.
//! ```

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{dot, norm2, sigmoid, softplus};
use crate::matrix::Matrix;

/// Slack allowed on `‖w‖ ≤ R` for rounding in the projection.
pub const FEASIBILITY_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Classifier {
    pub w: Vec<f64>,
    pub b: f64,
    /// Norm bound the classifier was trained under.
    pub radius: f64,
}

impl Classifier {
    pub fn zeros(d: usize, radius: f64) -> Self {
        Classifier {
            w: vec![0.0; d],
            b: 0.0,
            radius,
        }
    }

    #[inline]
    pub fn logit(&self, x: &[f64]) -> f64 {
        dot(x, &self.w) + self.b
    }

    /// Label 1 iff the logit is strictly positive.
    #[inline]
    pub fn predict(&self, x: &[f64]) -> u8 {
        (self.logit(x) > 0.0) as u8
    }

    pub fn w_norm(&self) -> f64 {
        norm2(&self.w)
    }

    pub fn is_feasible(&self) -> bool {
        self.w_norm() <= self.radius * (1.0 + FEASIBILITY_SLACK)
    }

    /// Fraction of `indices` whose predicted label differs from `labels`.
    pub fn error_rate(&self, features: &Matrix, labels: &[u8], indices: &[usize]) -> f64 {
        if indices.is_empty() {
            return 0.0;
        }
        let wrong = indices
            .iter()
            .filter(|&&i| self.predict(features.row(i)) != labels[i])
            .count();
        wrong as f64 / indices.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StepMode {
    /// Constant step `1/L` with `L = λ_max(G)/4`, `G` the second-moment
    /// matrix of the bias-augmented rows.
    Fixed,
    /// Starts from `1/L`, doubles after every accepted step and halves until
    /// the quadratic upper model holds. Much faster than `Fixed` once the
    /// margins are large and the local curvature is tiny.
    Backtracking,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Init {
    Zeros,
    Given { w: Vec<f64>, b: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub radius: f64,
    pub max_iterations: usize,
    /// Stop once the projected-gradient mapping has at most this norm.
    pub tolerance: f64,
    pub step_mode: StepMode,
    pub init: Init,
}

impl TrainConfig {
    pub fn new(radius: f64) -> Self {
        TrainConfig {
            radius,
            max_iterations: 200_000,
            tolerance: 1e-9,
            step_mode: StepMode::Backtracking,
            init: Init::Zeros,
        }
    }

    pub fn with_step_mode(mut self, mode: StepMode) -> Self {
        self.step_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "radius = {} must be positive",
                self.radius
            )));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance = {} must be positive",
                self.tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    /// Mean loss over `indices`.
    pub loss: f64,
    /// `⟨x_i, w⟩ + b` for each entry of `indices`, in the same order.
    pub logits: Vec<f64>,
    pub misclassified: usize,
    pub indices: Vec<usize>,
}

impl LossReport {
    pub fn error_rate(&self) -> f64 {
        self.misclassified as f64 / self.indices.len() as f64
    }
}

fn check_inputs(features: &Matrix, labels: &[u8], indices: &[usize], d: usize) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::InvalidArgument("empty index set".into()));
    }
    if labels.len() != features.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} feature rows",
            labels.len(),
            features.rows()
        )));
    }
    if features.cols() != d {
        return Err(Error::Shape(format!(
            "features have {} columns, weights have {d}",
            features.cols()
        )));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= labels.len()) {
        return Err(Error::InvalidArgument(format!(
            "index {bad} out of range for {} nodes",
            labels.len()
        )));
    }
    if let Some(&bad) = indices.iter().find(|&&i| labels[i] > 1) {
        return Err(Error::InvalidArgument(format!(
            "label of node {bad} is {}, expected 0 or 1",
            labels[bad]
        )));
    }
    Ok(())
}

pub fn bce_loss(
    features: &Matrix,
    labels: &[u8],
    indices: &[usize],
    classifier: &Classifier,
) -> Result<LossReport> {
    check_inputs(features, labels, indices, classifier.w.len())?;
    let mut total = 0.0;
    let mut misclassified = 0;
    let mut logits = Vec::with_capacity(indices.len());
    for &i in indices {
        let z = classifier.logit(features.row(i));
        let sign = 1.0 - 2.0 * labels[i] as f64;
        total += softplus(sign * z);
        if ((z > 0.0) as u8) != labels[i] {
            misclassified += 1;
        }
        logits.push(z);
    }
    Ok(LossReport {
        loss: total / indices.len() as f64,
        logits,
        misclassified,
        indices: indices.to_vec(),
    })
}

/// `(∇_w L, ∂L/∂b)`.
pub fn bce_gradient(
    features: &Matrix,
    labels: &[u8],
    indices: &[usize],
    classifier: &Classifier,
) -> Result<(Vec<f64>, f64)> {
    check_inputs(features, labels, indices, classifier.w.len())?;
    let problem = Problem {
        features,
        labels,
        indices,
    };
    let eval = problem.evaluate(&classifier.w, classifier.b);
    Ok((eval.grad_w, eval.grad_b))
}

/// Radial projection onto `{‖w‖₂ ≤ R}`.
pub fn project_to_ball(w: &[f64], radius: f64) -> Vec<f64> {
    let mut out = w.to_vec();
    project_in_place(&mut out, radius);
    out
}

fn project_in_place(w: &mut [f64], radius: f64) {
    let norm = norm2(w);
    if norm > radius {
        let s = radius / norm;
        w.iter_mut().for_each(|x| *x *= s);
    }
}

struct Problem<'a> {
    features: &'a Matrix,
    labels: &'a [u8],
    indices: &'a [usize],
}

struct Evaluation {
    loss: f64,
    grad_w: Vec<f64>,
    grad_b: f64,
}

impl Problem<'_> {
    fn evaluate(&self, w: &[f64], b: f64) -> Evaluation {
        let mut loss = 0.0;
        let mut grad_w = vec![0.0; w.len()];
        let mut grad_b = 0.0;
        for &i in self.indices {
            let x = self.features.row(i);
            let y = self.labels[i] as f64;
            let z = dot(x, w) + b;
            loss += softplus((1.0 - 2.0 * y) * z);
            let r = sigmoid(z) - y;
            grad_b += r;
            for (g, xi) in grad_w.iter_mut().zip(x) {
                *g += r * xi;
            }
        }
        let m = self.indices.len() as f64;
        grad_w.iter_mut().for_each(|g| *g /= m);
        Evaluation {
            loss: loss / m,
            grad_w,
            grad_b: grad_b / m,
        }
    }

    /// `λ_max(G)/4` for `G = (1/|S|) Σ x̃ x̃ᵀ`, `x̃ = (x, 1)`, by 100 steps of
    /// power iteration from the all-ones vector.
    fn lipschitz(&self) -> f64 {
        let d = self.features.cols();
        let mut v = vec![1.0; d + 1];
        let mut lambda = 1.0;
        for _ in 0..100 {
            let mut gv = vec![0.0; d + 1];
            for &i in self.indices {
                let x = self.features.row(i);
                let proj = dot(x, &v[..d]) + v[d];
                for (g, xi) in gv[..d].iter_mut().zip(x) {
                    *g += proj * xi;
                }
                gv[d] += proj;
            }
            let m = self.indices.len() as f64;
            gv.iter_mut().for_each(|g| *g /= m);
            let norm = norm2(&gv);
            if norm == 0.0 {
                break;
            }
            lambda = norm / norm2(&v);
            v = gv.into_iter().map(|g| g / norm).collect();
        }
        // the bias direction alone gives a Rayleigh quotient of 1
        lambda.max(1.0) / 4.0
    }
}

/// Estimated Lipschitz constant of `∇L` used for the fixed step.
pub fn lipschitz_estimate(features: &Matrix, labels: &[u8], indices: &[usize]) -> Result<f64> {
    check_inputs(features, labels, indices, features.cols())?;
    Ok(Problem {
        features,
        labels,
        indices,
    }
    .lipschitz())
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceEntry {
    pub iteration: usize,
    pub loss: f64,
    /// Norm of the projected-gradient mapping at this iterate.
    pub grad_norm: f64,
    pub w_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub classifier: Classifier,
    /// One entry per visited iterate, starting at the initial point.
    pub trace: Vec<TraceEntry>,
    /// The projected-gradient mapping fell below the tolerance.
    pub converged: bool,
}

impl Solution {
    pub fn final_loss(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |t| t.loss)
    }
}

/// Halvings allowed in one backtracking search before the solver gives up.
const MAX_HALVINGS: usize = 60;
/// Relative slack on the sufficient-decrease test.
const ROUNDOFF: f64 = 1e-15;

pub fn solve_opt(
    features: &Matrix,
    labels: &[u8],
    indices: &[usize],
    config: &TrainConfig,
) -> Result<Solution> {
    config.validate()?;
    let d = features.cols();
    check_inputs(features, labels, indices, d)?;
    if !features.is_finite() {
        return Err(Error::InvalidArgument("features are not finite".into()));
    }
    let problem = Problem {
        features,
        labels,
        indices,
    };
    let radius = config.radius;

    let (mut w, mut b) = match &config.init {
        Init::Zeros => (vec![0.0; d], 0.0),
        Init::Given { w, b } => {
            if w.len() != d {
                return Err(Error::Shape(format!(
                    "initial weights have length {}, expected {d}",
                    w.len()
                )));
            }
            (w.clone(), *b)
        }
    };
    project_in_place(&mut w, radius);

    let base_step = 1.0 / problem.lipschitz();
    let mut step = base_step;
    let mut current = problem.evaluate(&w, b);
    let mut trace = Vec::new();
    let mut converged = false;

    for iteration in 0..=config.max_iterations {
        if !current.loss.is_finite() {
            return Err(Error::Numerical {
                quantity: "loss",
                iteration,
            });
        }
        let mut halvings = 0;
        let mut stalled = false;
        let (w_next, b_next, moved_sq, next) = loop {
            let mut w_next: Vec<f64> = w
                .iter()
                .zip(&current.grad_w)
                .map(|(wi, gi)| wi - step * gi)
                .collect();
            project_in_place(&mut w_next, radius);
            let b_next = b - step * current.grad_b;
            let moved_sq: f64 = w_next
                .iter()
                .zip(&w)
                .map(|(a, c)| (a - c) * (a - c))
                .sum::<f64>()
                + (b_next - b) * (b_next - b);
            if config.step_mode == StepMode::Fixed {
                break (w_next, b_next, moved_sq, None);
            }
            let linear: f64 = w_next
                .iter()
                .zip(&w)
                .zip(&current.grad_w)
                .map(|((a, c), g)| (a - c) * g)
                .sum::<f64>()
                + (b_next - b) * current.grad_b;
            let model = current.loss + linear + moved_sq / (2.0 * step);
            let trial = problem.evaluate(&w_next, b_next);
            // the loss itself is only known to a few ulps
            if trial.loss <= model + ROUNDOFF * current.loss.abs() {
                break (w_next, b_next, moved_sq, Some(trial));
            }
            if halvings == MAX_HALVINGS {
                stalled = true;
                break (w_next, b_next, moved_sq, Some(trial));
            }
            step /= 2.0;
            halvings += 1;
        };

        let mapping_norm = libm::sqrt(moved_sq) / step;
        trace.push(TraceEntry {
            iteration,
            loss: current.loss,
            grad_norm: mapping_norm,
            w_norm: norm2(&w),
        });
        if stalled {
            break;
        }
        if mapping_norm <= config.tolerance {
            converged = true;
            break;
        }
        if iteration == config.max_iterations {
            break;
        }
        w = w_next;
        b = b_next;
        current = next.unwrap_or_else(|| problem.evaluate(&w, b));
        if config.step_mode == StepMode::Backtracking {
            step *= 2.0;
        }
    }

    Ok(Solution {
        classifier: Classifier { w, b, radius },
        trace,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(points: &[(f64, u8)]) -> (Matrix, Vec<u8>, Vec<usize>) {
        let rows: Vec<Vec<f64>> = points.iter().map(|&(x, _)| vec![x]).collect();
        let labels = points.iter().map(|&(_, y)| y).collect();
        (
            Matrix::from_rows(&rows).unwrap(),
            labels,
            (0..points.len()).collect(),
        )
    }

    #[test]
    fn zero_classifier_gives_log_two() {
        let (x, y, idx) = one_d(&[(0.3, 0), (-2.0, 1), (5.0, 1)]);
        let r = bce_loss(&x, &y, &idx, &Classifier::zeros(1, 1.0)).unwrap();
        assert!((r.loss - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(r.misclassified, 2);
    }

    #[test]
    fn single_confident_node() {
        let (x, y, idx) = one_d(&[(1.0, 1)]);
        let c = Classifier {
            w: vec![10.0],
            b: 0.0,
            radius: 10.0,
        };
        let r = bce_loss(&x, &y, &idx, &c).unwrap();
        assert!((r.loss - 4.539_889_921_686_465e-5).abs() < 1e-18);
        assert_eq!(r.logits, vec![10.0]);
    }

    #[test]
    fn huge_margins_do_not_underflow_to_garbage() {
        let (x, y, idx) = one_d(&[(1.0, 1), (-1.0, 0)]);
        let c = Classifier {
            w: vec![50.0],
            b: 0.0,
            radius: 50.0,
        };
        let r = bce_loss(&x, &y, &idx, &c).unwrap();
        assert!((r.loss - 1.928_749_847_963_918e-22).abs() < 1e-34);
    }

    #[test]
    fn empty_index_set_is_rejected() {
        let (x, y, _) = one_d(&[(1.0, 1)]);
        let c = Classifier::zeros(1, 1.0);
        assert!(matches!(
            bce_loss(&x, &y, &[], &c),
            Err(Error::InvalidArgument(_))
        ));
        assert!(bce_gradient(&x, &y, &[], &c).is_err());
        assert!(bce_loss(&x, &y, &[3], &c).is_err());
    }

    #[test]
    fn gradient_at_origin_single_node() {
        let x = Matrix::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
        let (gw, gb) = bce_gradient(&x, &[1], &[0], &Classifier::zeros(3, 1.0)).unwrap();
        assert_eq!(gw, vec![-0.5, 0.0, 0.0]);
        assert_eq!(gb, -0.5);
    }

    #[test]
    fn symmetric_data_has_zero_bias_gradient() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, -2.0], vec![0.5, -3.0], vec![-0.5, 3.0]])
            .unwrap();
        let (_, gb) =
            bce_gradient(&x, &[1, 0, 0, 1], &[0, 1, 2, 3], &Classifier::zeros(2, 1.0)).unwrap();
        assert_eq!(gb, 0.0);
    }

    #[test]
    fn projection_cases() {
        let w = project_to_ball(&[6.0, 8.0], 5.0);
        assert!((norm2(&w) - 5.0).abs() < 1e-15);
        assert!((w[0] / w[1] - 0.75).abs() < 1e-15);
        assert_eq!(project_to_ball(&[0.0, 0.0], 1.0), vec![0.0, 0.0]);
        assert_eq!(project_to_ball(&[3.0, 4.0], 10.0), vec![3.0, 4.0]);
    }

    #[test]
    fn separable_one_d_drives_norm_to_radius() {
        let (x, y, idx) = one_d(&[(-1.0, 0), (1.0, 1), (-1.0, 0), (1.0, 1)]);
        for mode in [StepMode::Fixed, StepMode::Backtracking] {
            let sol = solve_opt(&x, &y, &idx, &TrainConfig::new(10.0).with_step_mode(mode)).unwrap();
            let c = &sol.classifier;
            assert!(sol.final_loss() < softplus(-10.0 * 0.99), "{mode:?}");
            assert!((c.w_norm() - 10.0).abs() < 1e-9);
            assert!(c.b.abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let (x, y, idx) = one_d(&[(1.0, 1)]);
        assert!(solve_opt(&x, &y, &idx, &TrainConfig::new(0.0)).is_err());
        let mut c = TrainConfig::new(1.0);
        c.tolerance = 0.0;
        assert!(solve_opt(&x, &y, &idx, &c).is_err());
        let bad = Matrix::from_rows(&[vec![f64::NAN]]).unwrap();
        assert!(solve_opt(&bad, &y, &idx, &TrainConfig::new(1.0)).is_err());
    }
}
