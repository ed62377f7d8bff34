use csbm_core::math::{norm2, normal_cdf};
use csbm_core::{
    ansatz_classifier, ansatz_loss_rate, bce_loss, convolve, gamma_snr, ood_loss_rate,
    raw_loss_lower_bound, sample_csbm, thresholds, CsbmParams, Error, TheoryContext,
};
use proptest::prelude::*;

/// `Φ(x) = 1/2 + φ(x)·Σ_k x^(2k+1)/(2k+1)!!`, summed until the terms vanish.
fn phi_series(x: f64) -> f64 {
    let density = (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let (mut term, mut sum, mut k) = (x, x, 0.0);
    while term.abs() > 1e-30 * sum.abs().max(1e-300) {
        k += 1.0;
        term *= x * x / (2.0 * k + 1.0);
        sum += term;
    }
    0.5 + density * sum
}

#[test]
fn normal_cdf_matches_series() {
    for x in [-5.0, -2.0, -1.0, 0.0, 1.0, 2.0, 5.0] {
        let (ours, oracle) = (normal_cdf(x), phi_series(x));
        assert!((ours - oracle).abs() <= 1e-10, "Φ({x}) = {ours}, series {oracle}");
    }
    // tabulated values
    assert!((normal_cdf(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-15);
    assert!((normal_cdf(-5.0) - 2.866_515_718_791_939e-7).abs() < 1e-20);
}

#[test]
fn lower_bound_values() {
    let b = raw_loss_lower_bound(2.0, 0.0, 0.5, 0.5);
    assert!((b - phi_series(-1.0) * std::f64::consts::LN_2).abs() < 1e-12);
    assert!((b - 0.10998).abs() < 1e-5);
    let tiny_t = raw_loss_lower_bound(0.0, 1e-12, 0.5, 0.5);
    assert!((tiny_t - std::f64::consts::LN_2 / 2.0).abs() < 1e-12);
    assert_eq!(raw_loss_lower_bound(2.0, 0.1, 0.0, 0.5), 0.0);
}

#[test]
fn threshold_values() {
    let d = 60;
    let ctx = TheoryContext::new(CsbmParams::symmetric(400, d, 0.5, 0.1, 0.1), 60.0, 0.5, 0.5);
    let t = thresholds(&ctx, 2.0);
    assert!((t.convolved_upper - 400f64.ln() / (60.0 * 400.0 * 0.3f64).sqrt()).abs() < 1e-15);
    assert!((t.convolved_upper - 0.07061).abs() < 1e-5);
    assert!((t.convolved_upper_unhalved - 0.04993).abs() < 1e-5);
    assert!((t.raw_scale - 0.2582).abs() < 1e-4);
    assert!((t.convolved_lower - 1.0 / 84.852_813_742_385_7).abs() < 1e-12);

    let same = TheoryContext::new(CsbmParams::symmetric(400, d, 0.3, 0.3, 0.1), 60.0, 0.5, 0.5);
    let t = thresholds(&same, 2.0);
    assert!(t.convolved_lower.is_finite() && t.convolved_upper.is_finite());
}

#[test]
fn rate_values() {
    let d = 60.0f64;
    let dist = 2.0 / d.sqrt();
    let ctx = TheoryContext::new(CsbmParams::symmetric(400, 60, 0.5, 0.1, dist), 60.0, 0.5, 0.5);
    let rate = ansatz_loss_rate(&ctx).unwrap();
    assert!((rate - (-60.0 * (1.0 / d.sqrt()) * (2.0 / 3.0)).exp()).abs() < 1e-15);
    assert!((rate - 5.70e-3).abs() < 3e-5);

    let doubled = TheoryContext { radius: 120.0, ..ctx.clone() };
    assert!((ansatz_loss_rate(&doubled).unwrap() - rate * rate).abs() < 1e-15);

    let (mu, nu) = (&ctx.params.mu, &ctx.params.nu);
    assert!((ood_loss_rate(60.0, mu, nu, 0.5, 0.1).unwrap() - rate).abs() < 1e-15);
    assert_eq!(ood_loss_rate(60.0, mu, nu, 0.3, 0.3).unwrap(), 1.0);
    let ood = ood_loss_rate(60.0, mu, nu, 0.9, 0.1).unwrap();
    assert!((ood - (-6.196_773_353_931_867f64).exp()).abs() < 1e-15);
    assert!((ood - 2.03e-3).abs() < 1e-5);

    let flat = TheoryContext::new(CsbmParams::symmetric(400, 60, 0.1, 0.5, dist), 60.0, 0.5, 0.5);
    assert!(matches!(ansatz_loss_rate(&flat), Err(Error::Domain(_))));
    assert!(matches!(gamma_snr(0.0, 0.0), Err(Error::Domain(_))));
}

#[test]
fn ansatz_examples() {
    let c = ansatz_classifier(&[0.0, 0.0], &[0.2, 0.0], 60.0).unwrap();
    assert!((c.w[0] - 60.0).abs() < 1e-12 && c.w[1] == 0.0);
    assert!((c.b + 6.0).abs() < 1e-12);
    let sym = ansatz_classifier(&[0.1, -0.2], &[-0.1, 0.2], 3.0).unwrap();
    assert_eq!(sym.b, 0.0);
    assert!(matches!(ansatz_classifier(&[0.1], &[0.1], 1.0), Err(Error::DegenerateMeans)));
}

#[test]
fn ansatz_loss_tracks_its_rate() {
    let d = 60;
    let params = CsbmParams::symmetric(400, d, 0.5, 0.1, 2.0 / (d as f64).sqrt());
    let ctx = TheoryContext::new(params.clone(), 60.0, 0.5, 0.5);
    let rate = ansatz_loss_rate(&ctx).unwrap();
    let ansatz = ansatz_classifier(&params.mu, &params.nu, 60.0).unwrap();
    let all: Vec<usize> = (0..400).collect();
    for seed in 0..10 {
        let s = sample_csbm(&params, 100 + seed).unwrap();
        let conv = convolve(&s.adjacency, &s.features).unwrap().values;
        let loss = bce_loss(&conv, &s.labels, &all, &ansatz).unwrap().loss;
        assert!((1e-2 * rate..=1e2 * rate).contains(&loss), "seed {seed}: {loss} vs {rate}");
    }
}

proptest! {
    #[test]
    fn gamma_properties(p in 0.0f64..1.0, q in 0.0f64..1.0, c in 0.01f64..1.0) {
        prop_assume!(p + q > 1e-9);
        let g = gamma_snr(p, q).unwrap();
        prop_assert!((-1.0..=1.0).contains(&g));
        prop_assert_eq!(g, -gamma_snr(q, p).unwrap());
        prop_assert!((gamma_snr(c * p, c * q).unwrap() - g).abs() < 1e-12);
        prop_assert_eq!(gamma_snr(p, p).unwrap_or(0.0), 0.0);
        if p > 0.0 {
            prop_assert_eq!(gamma_snr(p, 0.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn ansatz_has_norm_r_and_splits_the_means(
        mu in proptest::collection::vec(-1.0f64..1.0, 1..6),
        shift in proptest::collection::vec(-1.0f64..1.0, 6),
        r in 0.1f64..100.0,
    ) {
        let nu: Vec<f64> = mu.iter().zip(&shift).map(|(a, s)| a + s).collect();
        prop_assume!(norm2(&shift[..mu.len()]) > 1e-6);
        let c = ansatz_classifier(&mu, &nu, r).unwrap();
        prop_assert!((c.w_norm() - r).abs() <= 1e-9 * r);
        // the mid-point lies on the decision boundary, ν on the positive side
        let mid: Vec<f64> = mu.iter().zip(&nu).map(|(a, b)| (a + b) / 2.0).collect();
        prop_assert!(c.logit(&mid).abs() <= 1e-9 * r);
        prop_assert!(c.logit(&nu) > 0.0 && c.logit(&mu) < 0.0);
    }
}
