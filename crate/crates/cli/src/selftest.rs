//! Fast deterministic checks of degenerate cases, run by `dpmean selftest`.

use dpmean_core::clipping::{clip_ball, trunc_1d};
use dpmean_core::est1d::{choose_rho_1d, range_estimator};
use dpmean_core::esthd_approx::{clip_and_noise, estimate_two_round, ClipCalibration};
use dpmean_core::esthd_pure::{select_from_scores, ScoreRecord};
use dpmean_core::mechanisms::{ledger_total, private_histogram, BudgetLedger, CompositionMode, HistogramSpec};
use dpmean_core::tailbounds::{bound_berry_esseen, bound_heavytail, bound_markov, bound_norm_onesample, bucket_diagnostic, TailBoundQuery};
use dpmean_core::{ClipBall, PersonDataset, PrivacyBudget, ProblemParams, Result, Seed};

pub struct Check {
    pub name: &'static str,
    pub outcome: std::result::Result<(), String>,
}

fn expect(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run(name: &'static str, f: impl FnOnce() -> Result<std::result::Result<(), String>>) -> Check {
    let outcome = f().unwrap_or_else(|e| Err(e.to_string()));
    Check { name, outcome }
}

pub fn selftest() -> Vec<Check> {
    let noiseless = PrivacyBudget::pure(f64::INFINITY).expect("valid budget");
    vec![
        run("trunc_1d", || Ok(expect(trunc_1d(2.0, -1.0, 1.0)? == 1.0 && trunc_1d(0.5, -1.0, 1.0)? == 0.5, || "clamp".into()))),
        run("clip_ball", || {
            let out = clip_ball(&[3.0, 4.0], &ClipBall::new(vec![0.0, 0.0], 1.0)?);
            Ok(expect((out[0] - 0.6).abs() < 1e-15 && (out[1] - 0.8).abs() < 1e-15, || format!("{out:?}")))
        }),
        run("histogram_noiseless", || {
            let h = private_histogram(&[0.1, 0.2, 1.5], &HistogramSpec::new(1.0, 1.0)?, &noiseless, Seed(0));
            Ok(expect(h.counts == [0.0, 0.0, 0.0, 2.0, 1.0, 0.0], || format!("{:?}", h.counts)))
        }),
        run("coarse_noiseless", || {
            let data = PersonDataset::constant(10, 16, &[0.4])?;
            let c = range_estimator(&data, &noiseless, 1.0, 2.0, 4.0, Seed(0))?;
            Ok(expect(c.mu_coarse == 0.5, || format!("{}", c.mu_coarse)))
        }),
        run("choose_rho", || {
            let rho = choose_rho_1d(10_000, 100, 1.0, 0.1, 4.0, 4.0);
            Ok(expect((rho - 2.5129).abs() < 1e-3, || format!("{rho}")))
        }),
        run("clip_and_noise_noiseless", || {
            let data = PersonDataset::constant(20, 4, &[0.25, -0.5])?;
            let b = PrivacyBudget::new(f64::INFINITY, 1e-6)?;
            let out = clip_and_noise(&data, &b, &ClipBall::new(vec![0.0, 0.0], 100.0)?, ClipCalibration::Printed, Seed(0))?;
            Ok(expect(out.estimate == [0.25, -0.5], || format!("{:?}", out.estimate)))
        }),
        run("two_round_zero_variance", || {
            let data = PersonDataset::constant(3000, 100, &[0.3, -0.2])?;
            let b = PrivacyBudget::new(f64::INFINITY, 1e-6)?;
            let r = estimate_two_round(&data, &b, &ProblemParams::new(4.0, 0.1, 0.1, 2.0)?, Seed(0))?;
            let close = (r.estimate[0] - 0.3).abs() < 1e-12 && (r.estimate[1] + 0.2).abs() < 1e-12;
            Ok(expect(close, || format!("{:?}", r.estimate)))
        }),
        run("ledger_basic", || {
            let l = BudgetLedger::from_pairs(&[(0.5, 0.0), (0.5, 0.0)], CompositionMode::Basic);
            Ok(expect(ledger_total(&l)? == (1.0, 0.0), || "sum".into()))
        }),
        run("equal_scores_any_candidate", || {
            let scores: Vec<ScoreRecord> = (0..3).map(|i| ScoreRecord { candidate: vec![i as f64], score: 1.0, cap: 5.0 }).collect();
            let i = select_from_scores(&scores, 1.0, Seed(0))?;
            Ok(expect(i < 3, || format!("{i}")))
        }),
        run("bounds", || {
            let q = TailBoundQuery::new(100, 3.0, 1, 0.5, 1.0);
            let ok = (bound_berry_esseen(&q).value - 8e-4).abs() < 1e-15
                && (bound_heavytail(&q).value - 0.125_314_47).abs() < 1e-8
                && bound_markov(3.0, 2.0)? == 0.125
                && bound_norm_onesample(1, 2.0, 2.0)? == 0.25;
            Ok(expect(ok, || "bound values".into()))
        }),
        run("bucket_vacuous", || {
            let d = bucket_diagnostic(&[0.0; 10], 0.5)?;
            Ok(expect(d.claim_holds && !d.premise, || "claim".into()))
        }),
    ]
}
