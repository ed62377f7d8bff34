use csbm_core::csbm::{mask_count, sample_mask_counts};
use csbm_core::{concentration_report, sample_csbm, sample_mask, CsbmParams, Error};
use proptest::prelude::*;

fn small_params() -> impl Strategy<Value = CsbmParams> {
    (2usize..40, 1usize..5, 0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..1.0)
        .prop_map(|(n, d, p, q, dist)| CsbmParams::symmetric(n, d, p, q, dist))
}

proptest! {
    #[test]
    fn adjacency_is_symmetric_without_loops(params in small_params(), seed in any::<u64>()) {
        let s = sample_csbm(&params, seed).unwrap();
        prop_assert!(s.adjacency.is_symmetric());
        for i in 0..s.n() {
            prop_assert!(!s.adjacency.has_edge(i, i));
        }
        prop_assert!(s.labels.iter().all(|&y| y <= 1));
        prop_assert_eq!(s.features.rows(), params.n);
        prop_assert_eq!(s.features.cols(), params.d);
    }

    #[test]
    fn sampling_is_deterministic(params in small_params(), seed in any::<u64>()) {
        let a = sample_csbm(&params, seed).unwrap();
        let b = sample_csbm(&params, seed).unwrap();
        prop_assert_eq!(&a.labels, &b.labels);
        prop_assert_eq!(a.adjacency.edges(), b.adjacency.edges());
        let bits = |m: &csbm_core::Matrix| m.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a.features), bits(&b.features));
    }

    #[test]
    fn mask_has_requested_class_counts(
        n in 20usize..200,
        b0 in 0.01f64..0.25,
        b1 in 0.01f64..0.25,
        seed in any::<u64>(),
        mask_seed in any::<u64>(),
    ) {
        let params = CsbmParams::symmetric(n, 2, 0.0, 0.0, 0.5);
        let s = sample_csbm(&params, seed).unwrap();
        let (c0, c1) = s.class_sizes();
        let want = (mask_count(b0, n), mask_count(b1, n));
        match sample_mask(&s, b0, b1, mask_seed) {
            Ok(m) => {
                prop_assert_eq!(m.mask_counts(), want);
                prop_assert!(m.mask.windows(2).all(|w| w[0] < w[1]));
                let again = sample_mask(&s, b0, b1, mask_seed).unwrap();
                prop_assert_eq!(m.mask, again.mask);
            }
            Err(Error::Mask { .. }) => prop_assert!(want.0 > c0 || want.1 > c1),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }
}

#[test]
fn trivial_graphs() {
    let empty = sample_csbm(&CsbmParams::symmetric(30, 2, 0.0, 0.0, 0.5), 1).unwrap();
    assert_eq!(empty.adjacency.edge_count(), 0);
    let full = sample_csbm(&CsbmParams::symmetric(30, 2, 1.0, 1.0, 0.5), 1).unwrap();
    assert_eq!(full.adjacency.edge_count(), 30 * 29 / 2);

    let r = concentration_report(&empty, 0.5, 0.5);
    assert!(r.degrees.iter().all(|&d| d == 1));
    for i in 0..30 {
        let own = if empty.labels[i] == 0 { r.class0_neighbor_fraction[i] } else { r.class1_neighbor_fraction[i] };
        assert_eq!(own, 1.0);
    }
    let r = concentration_report(&full, 0.5, 0.5);
    let (c0, _) = full.class_sizes();
    assert!(r.degrees.iter().all(|&d| d == 30));
    assert!(r.class0_neighbor_fraction.iter().all(|&f| f == c0 as f64 / 30.0));
}

#[test]
fn features_follow_the_law_of_large_numbers() {
    let (n, d) = (10_000, 4);
    let s = sample_csbm(&CsbmParams::symmetric(n, d, 0.0, 0.0, 0.0), 7).unwrap();
    for j in 0..d {
        let col: Vec<f64> = (0..n).map(|i| s.features.get(i, j)).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() <= 4.0 / ((d * n) as f64).sqrt(), "column {j} mean {mean}");
        assert!((var * d as f64 - 1.0).abs() <= 0.1, "column {j} variance {var}");
    }
}

#[test]
fn edge_densities_match_p_and_q() {
    let (n, p, q) = (1000, 0.3, 0.05);
    let s = sample_csbm(&CsbmParams::symmetric(n, 1, p, q, 0.5), 11).unwrap();
    let (mut intra_pairs, mut inter_pairs, mut intra_edges, mut inter_edges) = (0u64, 0u64, 0u64, 0u64);
    let (c0, c1) = s.class_sizes();
    intra_pairs += (c0 * (c0 - 1) / 2 + c1 * (c1 - 1) / 2) as u64;
    inter_pairs += (c0 * c1) as u64;
    for (u, v) in s.adjacency.edges() {
        if s.labels[u] == s.labels[v] {
            intra_edges += 1;
        } else {
            inter_edges += 1;
        }
    }
    assert!(intra_pairs >= 100_000 && inter_pairs >= 100_000);
    for (edges, pairs, prob) in [(intra_edges, intra_pairs, p), (inter_edges, inter_pairs, q)] {
        let freq = edges as f64 / pairs as f64;
        let band = 4.0 * (prob * (1.0 - prob) / pairs as f64).sqrt();
        assert!((freq - prob).abs() <= band, "{freq} vs {prob} ± {band}");
    }
}

#[test]
fn class_sizes_concentrate() {
    let n = 400;
    let delta = 4.0 / (n as f64).sqrt();
    let params = CsbmParams::symmetric(n, 1, 0.0, 0.0, 0.0);
    let inside = (0..1000u64)
        .filter(|&seed| {
            let (c0, _) = sample_csbm(&params, seed).unwrap().class_sizes();
            (c0 as f64 / n as f64 - 0.5).abs() <= delta
        })
        .count();
    assert!(inside >= 990, "{inside}/1000 trials balanced");
}

#[test]
fn degrees_concentrate_around_expected_degree() {
    // The maximum of 400 roughly Binomial degrees sits near 3σ ≈ 25 above the
    // mean, so a whole graph lands inside 120·(1 ± 0.25) only ~70% of the
    // time; per node the band is essentially never left.
    let params = CsbmParams::symmetric(400, 2, 0.5, 0.1, 0.5);
    for seed in 0..10 {
        let r = concentration_report(&sample_csbm(&params, seed).unwrap(), 0.25, 0.25);
        let mean = r.degrees.iter().sum::<usize>() as f64 / 400.0;
        assert!((mean - 120.75).abs() < 5.0, "seed {seed}: mean degree {mean}");
        let outside = r.degrees.iter().filter(|&&d| !(90..=150).contains(&d)).count();
        assert!(outside <= 4, "seed {seed}: {outside} nodes outside the band");
        assert!(r.min_degree >= 80 && r.max_degree <= 165);
    }
}

#[test]
fn mask_edge_cases() {
    let params = CsbmParams::symmetric(400, 2, 0.0, 0.0, 0.5);
    let s = sample_csbm(&params, 3).unwrap();
    let m = sample_mask(&s, 0.05, 0.05, 9).unwrap();
    assert_eq!(m.mask_counts(), (20, 20));

    let (c0, c1) = s.class_sizes();
    let all = sample_mask_counts(&s, [c0, c1], 1).unwrap();
    assert_eq!(all.mask, (0..400).collect::<Vec<_>>());
    assert!(matches!(
        sample_mask_counts(&s, [c0 + 1, 0], 1),
        Err(Error::Mask { class: 0, .. })
    ));
    assert!(sample_mask(&s, 0.0, 0.1, 1).is_err());
    assert!(sample_mask(&s, 0.6, 0.1, 1).is_err());
}

#[test]
fn invalid_parameters_are_rejected() {
    for params in [
        CsbmParams::symmetric(1, 2, 0.5, 0.1, 0.1),
        CsbmParams::symmetric(10, 0, 0.5, 0.1, 0.1),
        CsbmParams::symmetric(10, 2, 1.5, 0.1, 0.1),
        CsbmParams::symmetric(10, 2, 0.5, -0.1, 0.1),
    ] {
        assert!(matches!(sample_csbm(&params, 0), Err(Error::InvalidParams(_))));
    }
}
