use dpmean_core::est1d::{estimate_mean_1d, range_estimator};
use dpmean_core::synth::{sample_dataset, SyntheticSpec};
use dpmean_core::{PrivacyBudget, ProblemParams, Seed};
use rayon::prelude::*;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn coarse_estimate_within_two_buckets() {
    let spec = SyntheticSpec::scaled_gaussian(vec![0.3], 4.0);
    let budget = PrivacyBudget::pure(1.0).unwrap();
    let hits = (0..200u64)
        .into_par_iter()
        .filter(|&t| {
            let data = sample_dataset(&spec, 500, 100, Seed(t).child("data")).unwrap();
            let c = range_estimator(&data, &budget, 0.4, 2.0, 4.0, Seed(t)).unwrap();
            (c.mu_coarse - 0.3).abs() < 0.8
        })
        .count();
    assert!(hits >= 190, "{hits}/200");
}

#[test]
fn few_person_averages_leave_the_coarse_window() {
    // r = 16^{1/k}/√m is the smallest width with m ≥ 16^{2/k}/r².
    let m = 100;
    let beta = 0.1;
    for spec in [
        SyntheticSpec::scaled_gaussian(vec![0.0], 4.0),
        SyntheticSpec::point_mass(vec![0.0], 4.0, 0.02, None),
        SyntheticSpec::student_t(vec![0.0], 3.0, 8.0),
    ] {
        let r = 16f64.powf(1.0 / spec.k) / (m as f64).sqrt();
        let mu = spec.true_mean().unwrap()[0];
        let good = (0..200u64)
            .into_par_iter()
            .filter(|&t| {
                let data = sample_dataset(&spec, 1000, m, Seed(t).child("chernoff")).unwrap();
                let outside = data.person_means().iter().filter(|s| (*s - mu).abs() > r).count();
                outside as f64 <= 1000.0 / 16.0
            })
            .count();
        assert!(good as f64 >= (1.0 - beta) * 200.0, "{:?}: {good}/200", spec.family);
    }
}

#[test]
fn median_error_falls_as_n_doubles() {
    let spec = SyntheticSpec::scaled_gaussian(vec![0.3], 4.0);
    let params = ProblemParams::new(4.0, 0.15, 0.1, 2.0).unwrap();
    let budget = PrivacyBudget::pure(1.0).unwrap();
    let medians: Vec<f64> = (10..=16)
        .map(|e| {
            let n = 1usize << e;
            median(
                (0..50u64)
                    .into_par_iter()
                    .map(|t| {
                        let s = Seed(77).derive(n as u64).derive(t);
                        let data = sample_dataset(&spec, n, 100, s.child("data")).unwrap();
                        (estimate_mean_1d(&data, &budget, &params, s).unwrap().estimate[0] - 0.3).abs()
                    })
                    .collect(),
            )
        })
        .collect();
    for w in medians.windows(2) {
        // slack for the spread of a 50-run median
        assert!(w[1] <= 1.15 * w[0], "{medians:?}");
    }
    assert!(medians[6] < 0.25 * medians[0], "{medians:?}");
}
