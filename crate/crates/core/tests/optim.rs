use csbm_core::math::{norm2, softplus};
use csbm_core::optim::{lipschitz_estimate, Init};
use csbm_core::{
    bce_gradient, bce_loss, convolve, project_to_ball, sample_csbm, sample_mask, solve_opt,
    Classifier, CsbmParams, Error, Matrix, StepMode, TrainConfig,
};
use proptest::prelude::*;

/// Random problem with `n` points in `d` dimensions and a parameter vector.
fn instance(n: usize, d: usize) -> impl Strategy<Value = (Matrix, Vec<u8>, Vec<f64>, f64)> {
    (
        proptest::collection::vec(-2.0f64..2.0, n * d),
        proptest::collection::vec(0u8..2, n),
        proptest::collection::vec(-2.0f64..2.0, d),
        -2.0f64..2.0,
    )
        .prop_map(move |(x, y, w, b)| (Matrix::from_vec(n, d, x).unwrap(), y, w, b))
}

fn loss_at(x: &Matrix, y: &[u8], idx: &[usize], w: &[f64], b: f64) -> f64 {
    let c = Classifier { w: w.to_vec(), b, radius: f64::INFINITY };
    bce_loss(x, y, idx, &c).unwrap().loss
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn gradient_matches_central_differences((x, y, w, b) in instance(50, 10)) {
        let idx: Vec<usize> = (0..50).collect();
        let c = Classifier { w: w.clone(), b, radius: f64::INFINITY };
        let (gw, gb) = bce_gradient(&x, &y, &idx, &c).unwrap();
        let h = 1e-6;
        let mut fd = Vec::with_capacity(11);
        for j in 0..10 {
            let (mut plus, mut minus) = (w.clone(), w.clone());
            plus[j] += h;
            minus[j] -= h;
            fd.push((loss_at(&x, &y, &idx, &plus, b) - loss_at(&x, &y, &idx, &minus, b)) / (2.0 * h));
        }
        fd.push((loss_at(&x, &y, &idx, &w, b + h) - loss_at(&x, &y, &idx, &w, b - h)) / (2.0 * h));
        let analytic: Vec<f64> = gw.iter().copied().chain([gb]).collect();
        let err: Vec<f64> = analytic.iter().zip(&fd).map(|(a, f)| a - f).collect();
        let rel = norm2(&err) / norm2(&analytic);
        prop_assert!(rel < 1e-6, "relative error {rel}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn loss_is_convex(
        (x, y, w1, b1) in instance(30, 4),
        w2 in proptest::collection::vec(-5.0f64..5.0, 4),
        b2 in -5.0f64..5.0,
    ) {
        let idx: Vec<usize> = (0..30).collect();
        let l1 = loss_at(&x, &y, &idx, &w1, b1);
        let l2 = loss_at(&x, &y, &idx, &w2, b2);
        for lambda in [0.25, 0.5, 0.75] {
            let w: Vec<f64> = w1.iter().zip(&w2).map(|(a, c)| lambda * a + (1.0 - lambda) * c).collect();
            let b = lambda * b1 + (1.0 - lambda) * b2;
            let mid = loss_at(&x, &y, &idx, &w, b);
            prop_assert!(mid <= lambda * l1 + (1.0 - lambda) * l2 + 1e-10);
        }
    }

    #[test]
    fn projection_lands_in_the_ball(w in proptest::collection::vec(-100.0f64..100.0, 1..8), r in 0.1f64..50.0) {
        let p = project_to_ball(&w, r);
        let norm = norm2(&w);
        prop_assert!(norm2(&p) <= r * (1.0 + 1e-12));
        if norm <= r {
            prop_assert_eq!(p, w);
        } else {
            prop_assert!((norm2(&p) - r).abs() <= 1e-12 * r);
            for (a, c) in p.iter().zip(&w) {
                prop_assert!((a * norm - c * r).abs() <= 1e-9 * norm * r);
            }
        }
    }
}

#[test]
fn loss_examples() {
    let x = Matrix::from_rows(&[[1.0, -2.0], [0.5, 3.0], [-1.0, 0.0]]).unwrap();
    let y = [0, 1, 1];
    let idx = [0, 1, 2];
    let r = bce_loss(&x, &y, &idx, &Classifier::zeros(2, 1.0)).unwrap();
    assert!((r.loss - std::f64::consts::LN_2).abs() < 1e-15);
    assert_eq!(r.logits, vec![0.0; 3]);
    assert_eq!(r.misclassified, 2);

    let one = Matrix::from_rows(&[[1.0]]).unwrap();
    let c = Classifier { w: vec![10.0], b: 0.0, radius: 10.0 };
    let r = bce_loss(&one, &[1], &[0], &c).unwrap();
    assert!((r.loss - 4.539_889_921_686_465e-5).abs() < 1e-18);

    // every node on the correct side with logit magnitude 50
    let c = Classifier { w: vec![50.0], b: 0.0, radius: 50.0 };
    let pm = Matrix::from_rows(&[[-1.0], [1.0], [1.0]]).unwrap();
    let r = bce_loss(&pm, &[0, 1, 1], &[0, 1, 2], &c).unwrap();
    assert!((r.loss / 1.928_749_847_963_917_8e-22 - 1.0).abs() < 1e-12);
    assert_eq!(r.misclassified, 0);

    assert!(matches!(bce_loss(&x, &y, &[], &Classifier::zeros(2, 1.0)), Err(Error::InvalidArgument(_))));
    assert!(bce_loss(&x, &y, &[3], &Classifier::zeros(2, 1.0)).is_err());
}

#[test]
fn gradient_examples() {
    let e1 = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
    let (gw, gb) = bce_gradient(&e1, &[1], &[0], &Classifier::zeros(2, 1.0)).unwrap();
    assert_eq!(gw, vec![-0.5, 0.0]);
    assert_eq!(gb, -0.5);

    let sym = Matrix::from_rows(&[[1.0, 2.0], [-1.0, -2.0], [0.3, -0.7], [-0.3, 0.7]]).unwrap();
    let (_, gb) = bce_gradient(&sym, &[0, 1, 1, 0], &[0, 1, 2, 3], &Classifier::zeros(2, 1.0)).unwrap();
    assert_eq!(gb, 0.0);
}

#[test]
fn separated_line_drives_the_norm_to_the_radius() {
    let x = Matrix::from_rows(&[[-1.0], [-1.0], [1.0], [1.0]]).unwrap();
    let y = [0, 0, 1, 1];
    let sol = solve_opt(&x, &y, &[0, 1, 2, 3], &TrainConfig::new(10.0)).unwrap();
    assert!(sol.converged);
    assert!(sol.final_loss() < softplus(-10.0 * 0.99));
    assert!((sol.classifier.w_norm() - 10.0).abs() < 1e-6);
    // scalar oracle: by symmetry b* = 0 and the loss decreases in w
    assert!((sol.final_loss() - softplus(-10.0)).abs() < 1e-9);
    assert!(sol.classifier.b.abs() < 1e-6);
}

#[test]
fn uninformative_features_keep_the_loss_near_log_two() {
    let params = CsbmParams::symmetric(1000, 10, 0.0, 0.0, 0.0);
    let s = sample_csbm(&params, 5).unwrap();
    let idx: Vec<usize> = (0..1000).collect();
    let sol = solve_opt(&s.features, &s.labels, &idx, &TrainConfig::new(1.0)).unwrap();
    assert!(sol.final_loss() >= 0.6, "{}", sol.final_loss());
}

#[test]
fn descent_is_monotone_and_feasible() {
    for seed in 0..10 {
        let d = 20;
        let params = CsbmParams::symmetric(200, d, 0.5, 0.1, 2.0 / (d as f64).sqrt());
        let s = sample_mask(&sample_csbm(&params, seed).unwrap(), 0.25, 0.25, seed).unwrap();
        let conv = convolve(&s.adjacency, &s.features).unwrap().values;
        for x in [&s.features, &conv] {
            for mode in [StepMode::Fixed, StepMode::Backtracking] {
                let mut config = TrainConfig::new(d as f64).with_step_mode(mode);
                config.max_iterations = 3000;
                let sol = solve_opt(x, &s.labels, &s.mask, &config).unwrap();
                for pair in sol.trace.windows(2) {
                    assert!(pair[1].loss <= pair[0].loss + 1e-12, "seed {seed} {mode:?}");
                }
                assert!(sol.trace.iter().all(|t| t.w_norm <= d as f64 * (1.0 + 1e-12)));
                assert!(sol.classifier.is_feasible());
                assert!((sol.trace[0].loss - std::f64::consts::LN_2).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn solver_is_deterministic_and_validates() {
    let params = CsbmParams::symmetric(100, 5, 0.3, 0.1, 0.5);
    let s = sample_csbm(&params, 2).unwrap();
    let idx: Vec<usize> = (0..100).collect();
    let a = solve_opt(&s.features, &s.labels, &idx, &TrainConfig::new(5.0)).unwrap();
    let b = solve_opt(&s.features, &s.labels, &idx, &TrainConfig::new(5.0)).unwrap();
    assert_eq!(a, b);

    let warm = TrainConfig { init: Init::Given { w: a.classifier.w.clone(), b: a.classifier.b }, ..TrainConfig::new(5.0) };
    let again = solve_opt(&s.features, &s.labels, &idx, &warm).unwrap();
    assert!(again.trace.len() <= 2);

    assert!(solve_opt(&s.features, &s.labels, &idx, &TrainConfig::new(0.0)).is_err());
    let mut bad = s.features.clone();
    bad.row_mut(0)[0] = f64::NAN;
    assert!(solve_opt(&bad, &s.labels, &idx, &TrainConfig::new(5.0)).is_err());

    let l = lipschitz_estimate(&s.features, &s.labels, &idx).unwrap();
    assert!(l >= 0.25);
}
