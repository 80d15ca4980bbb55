//! Re-runs the pre-registered constant search and checks it reproduces the
//! frozen table. Slow; run with `cargo test --test calibration -- --ignored`.

use dpmean_core::synth::{Family, SyntheticSpec};
use dpmean_core::tailbounds::{calibrate_constant, frozen_constant, BoundKind, CALIBRATION_SEED};

fn family_spec(family: Family) -> SyntheticSpec {
    match family {
        Family::ScaledGaussian => SyntheticSpec::scaled_gaussian(vec![0.0], 3.0),
        Family::PointMassMixture => SyntheticSpec::point_mass(vec![0.0], 3.0, 1e-5, None),
        Family::StudentT => SyntheticSpec::student_t(vec![0.0], 3.0, 10.0),
    }
}

#[test]
#[ignore]
fn frozen_constants_reproduce() {
    for family in [Family::ScaledGaussian, Family::PointMassMixture, Family::StudentT] {
        for bound in [BoundKind::HeavyTail, BoundKind::BerryEsseen, BoundKind::HighD] {
            let cal = calibrate_constant(
                &family_spec(family),
                bound,
                &[3.0, 4.0],
                &[16, 64, 256],
                &[2, 4],
                1_000_000,
                CALIBRATION_SEED.derive(bound as u64).child(family.name()),
            )
            .unwrap();
            println!(
                "{} {} -> {:?} (worst ratio {:.4}, {} points)",
                family.name(),
                bound.name(),
                cal.constant,
                cal.worst_ratio,
                cal.grid_points
            );
            assert_eq!(cal.constant, Some(frozen_constant(family, bound)));
        }
    }
}

#[test]
#[ignore]
fn print_lemma_report() {
    let t = std::time::Instant::now();
    let r = dpmean_core::tailbounds::lemma_checks(dpmean_core::Seed(5)).unwrap();
    for i in &r.items {
        println!("{:30} gating={} passed={} observed={:.4e} limit={:.4e} {}", i.name, i.gating, i.passed, i.observed, i.limit, i.detail);
    }
    println!("{:?}", t.elapsed());
}
