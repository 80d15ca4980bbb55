use dpmean_core::esthd_pure::{bin_mean_comp, local_cover, mom_radius, score_candidate, truncated_median_of_means, Winner, DEFAULT_C_RHO};
use dpmean_core::synth::{sample_dataset, SyntheticSpec};
use dpmean_core::{PersonDataset, ProblemParams, Seed};
use proptest::prelude::*;
use rand::Rng;
use rayon::prelude::*;

fn params(alpha: f64) -> ProblemParams {
    ProblemParams::new(4.0, alpha, 0.1, 2.0).unwrap()
}

#[test]
fn comparison_margin_is_large_near_the_mean() {
    // ‖p − μ‖ ≤ α/8, ‖p − q‖ > α
    let alpha = 0.25;
    let mu = vec![0.01, -0.02];
    let spec = SyntheticSpec::scaled_gaussian(mu.clone(), 4.0);
    let (n, m) = (4096, 64);
    let rho = mom_radius(4.0, m, alpha, DEFAULT_C_RHO);
    let floor = n as f64 * alpha / rho / 64.0;
    let good = (0..100u64)
        .into_par_iter()
        .filter(|&t| {
            let mut rng = Seed(t).child("q").rng();
            let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let q = [1.2 * alpha * angle.cos(), 1.2 * alpha * angle.sin()];
            let data = sample_dataset(&spec, n, m, Seed(t)).unwrap();
            let c = bin_mean_comp(&data, &[0.0, 0.0], &q, &params(alpha), DEFAULT_C_RHO).unwrap();
            c.winner == Winner::P && c.margin_batches >= floor
        })
        .count();
    assert!(good >= 95, "{good}/100");
}

#[test]
fn symmetric_comparison_has_a_small_margin() {
    let alpha = 0.25;
    let spec = SyntheticSpec::scaled_gaussian(vec![0.0], 4.0);
    let (n, m) = (4096, 64);
    let rho = mom_radius(4.0, m, alpha, DEFAULT_C_RHO);
    for t in 0..20u64 {
        let data = sample_dataset(&spec, n, m, Seed(t)).unwrap();
        let c = bin_mean_comp(&data, &[-0.2], &[0.2], &params(alpha), DEFAULT_C_RHO).unwrap();
        assert!(c.margin_batches < n as f64 * alpha / rho * 0.1, "{}", c.margin_batches);
    }
}

#[test]
fn scores_separate_good_and_far_candidates() {
    let alpha = 0.25;
    let spec = SyntheticSpec::scaled_gaussian(vec![0.1], 4.0);
    let mut far_zero = 0;
    for t in 0..40u64 {
        let data = sample_dataset(&spec, 4096, 64, Seed(t)).unwrap();
        assert!(score_candidate(&data, &[0.1], &params(alpha), DEFAULT_C_RHO).unwrap().score > 0.0);
        let far = 0.1 + 1.2 * alpha;
        far_zero += usize::from(score_candidate(&data, &[far], &params(alpha), DEFAULT_C_RHO).unwrap().score == 0.0);
    }
    assert!(far_zero >= 36, "{far_zero}/40");
}

#[test]
fn score_equals_cheapest_local_comparison() {
    let alpha = 0.25;
    let spec = SyntheticSpec::scaled_gaussian(vec![0.05, 0.0], 4.0);
    let data = sample_dataset(&spec, 2048, 64, Seed(3)).unwrap();
    for p in [[0.0, 0.0], [0.1, -0.05], [0.25, 0.25]] {
        let rec = score_candidate(&data, &p, &params(alpha), DEFAULT_C_RHO).unwrap();
        let cheapest = local_cover(&p, alpha)
            .points
            .iter()
            .map(|q| bin_mean_comp(&data, &p, q, &params(alpha), DEFAULT_C_RHO).unwrap().cost_to_lose)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(rec.score, cheapest.min(rec.cap));
    }
}

#[test]
fn corrupting_toward_the_cheapest_challenger_never_raises_the_score() {
    let alpha = 0.25;
    let pr = params(alpha);
    let spec = SyntheticSpec::scaled_gaussian(vec![0.0], 4.0);
    let mut data = sample_dataset(&spec, 1024, 64, Seed(8)).unwrap();
    let p = [0.0];
    let mut rng = Seed(9).rng();
    let mut last = score_candidate(&data, &p, &pr, DEFAULT_C_RHO).unwrap().score;
    let mut steps = 0;
    while last > 0.0 && steps < 400 {
        let q = local_cover(&p, alpha)
            .points
            .into_iter()
            .min_by(|a, b| {
                let ca = bin_mean_comp(&data, &p, a, &pr, DEFAULT_C_RHO).unwrap().cost_to_lose;
                let cb = bin_mean_comp(&data, &p, b, &pr, DEFAULT_C_RHO).unwrap().cost_to_lose;
                ca.total_cmp(&cb)
            })
            .unwrap();
        let batch = vec![p[0] + 10.0 * (q[0] - p[0]); 64];
        data = data.with_person_replaced(rng.random_range(0..1024), &batch).unwrap();
        let now = score_candidate(&data, &p, &pr, DEFAULT_C_RHO).unwrap().score;
        assert!(now <= last, "step {steps}: {last} -> {now}");
        assert!(last - now <= 1.0);
        last = now;
        steps += 1;
    }
    assert_eq!(last, 0.0, "score should reach zero after enough corruptions");
}

#[test]
fn score_is_capped() {
    let data = PersonDataset::constant(512, 64, &[0.0]).unwrap();
    let rec = score_candidate(&data, &[0.0], &params(0.25), DEFAULT_C_RHO).unwrap();
    assert!(rec.score <= rec.cap && rec.cap == 512.0 * 0.25);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn median_of_means_ignores_a_corrupted_minority(
        seed in any::<u64>(),
        k_mom in 3usize..24,
        block in 1usize..20,
        frac in 0.0f64..0.4,
        huge in prop::sample::select(vec![-1e9, 1e9, 1e3]),
    ) {
        let mut rng = Seed(seed).rng();
        let mut values: Vec<f64> = (0..k_mom * block).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rho = 10.0;
        let clean: Vec<f64> = values.chunks(block).map(|b| b.iter().sum::<f64>() / block as f64).collect();
        let lo = clean.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = clean.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let bad = ((frac * k_mom as f64).ceil() as usize).min(((0.4 * k_mom as f64).ceil() as usize).saturating_sub(1));
        for _ in 0..bad {
            let j = rng.random_range(0..k_mom);
            values[j * block..(j + 1) * block].iter_mut().for_each(|v| *v = huge);
        }
        let med = truncated_median_of_means(&values, 0.0, rho, k_mom).unwrap();
        prop_assert!(med >= lo - 1e-12 && med <= hi + 1e-12, "{med} not in [{lo}, {hi}]");
    }
}
