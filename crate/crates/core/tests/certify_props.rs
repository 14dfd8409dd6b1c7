use ebsmooth::certify::{certify, certify_batch, predict, radius_from_lower, rmax};
use ebsmooth::classifier::{EbClassifier, HardClassifier, LinearClassifier};
use ebsmooth::par::Execution;
use ebsmooth::score::ZeroEnergy;
use ebsmooth::stats::{binom_lower_bound, ConfidenceSpec, RngStream};
use proptest::prelude::*;

fn axis() -> LinearClassifier {
    LinearClassifier::new(vec![1.0, 0.0], 0.0).unwrap()
}

#[test]
fn boundary_point_abstains() {
    let spec = ConfidenceSpec::new(0.001, 100, 1000).unwrap();
    let mut gen = RngStream::new(1, 0);
    let abstains = (0..1000).filter(|_| predict(&axis(), &[0.0, 0.3], 1.0, &spec, &mut gen).unwrap().is_none()).count();
    assert!(abstains >= 990, "{abstains}");
}

#[test]
fn three_sigma_margin_never_abstains() {
    let spec = ConfidenceSpec::new(0.001, 100, 1000).unwrap();
    let mut gen = RngStream::new(2, 0);
    let hits = (0..1000).filter(|_| predict(&axis(), &[3.0, -1.0], 1.0, &spec, &mut gen).unwrap() == Some(1)).count();
    assert!(hits >= 990, "{hits}");
}

#[test]
fn unit_margin_radius_close_to_margin() {
    let spec = ConfidenceSpec::new(0.001, 100, 100_000).unwrap();
    let mut gen = RngStream::new(3, 0);
    let trials = 100;
    let inside = (0..trials)
        .filter(|_| {
            let r = certify(&axis(), &[1.0, 0.0], 1.0, &spec, &mut gen).unwrap();
            r.predicted == Some(1) && (0.97..=1.0).contains(&r.radius)
        })
        .count();
    assert!(inside as f64 / trials as f64 >= 1.0 - 0.001 - 0.01 - 1e-12, "{inside}/{trials}");
}

#[test]
fn vanilla_prediction_is_the_base_class() {
    let h = LinearClassifier::new(vec![0.6, -0.8, 0.2], -0.3).unwrap();
    let g = EbClassifier::new(h.clone(), ZeroEnergy { dim: 3, sigma: 0.5 }, 0.5, 1).unwrap();
    let mut gen = RngStream::new(4, 0);
    let points: Vec<Vec<f64>> = (0..200).map(|_| gen.normal_vec(3, 1.0)).collect();
    let spec = ConfidenceSpec::new(0.001, 100, 10_000).unwrap();
    let res = certify_batch(&g, &points, 0.5, &spec, 5, Execution::Parallel).unwrap();
    let wrong = points.iter().zip(&res).filter(|(x, r)| r.predicted.is_some_and(|p| p != h.predict_class(x))).count();
    assert!(wrong <= 1, "{wrong}");
}

proptest! {
    #[test]
    fn radius_nondecreasing_in_hits(nc in 1u64..100_000, frac in 0.0f64..1.0, sigma in 0.01f64..3.0) {
        let k = ((nc as f64) * frac) as u64;
        let r0 = radius_from_lower(binom_lower_bound(k, nc, 0.001).unwrap(), sigma);
        let r1 = radius_from_lower(binom_lower_bound((k + 1).min(nc), nc, 0.001).unwrap(), sigma);
        prop_assert!(r1 >= r0);
    }

    #[test]
    fn radius_never_exceeds_rmax(nc in 1u64..1_000_000, frac in 0.0f64..=1.0, la in 0.5f64..6.0) {
        let alpha = 10f64.powf(-la);
        let spec = ConfidenceSpec::new(alpha, 10, nc).unwrap();
        let k = ((nc as f64) * frac).round() as u64;
        let r = radius_from_lower(binom_lower_bound(k, nc, alpha).unwrap(), 1.0);
        prop_assert!(r <= rmax(&spec, 1.0).unwrap());
    }

    #[test]
    fn abstain_iff_zero_radius(x0 in -1.5f64..1.5, seed in any::<u64>()) {
        let spec = ConfidenceSpec::new(0.01, 50, 2000).unwrap();
        let r = certify(&axis(), &[x0, 0.0], 1.0, &spec, &mut RngStream::new(seed, 0)).unwrap();
        prop_assert_eq!(r.abstained(), r.radius == 0.0);
        prop_assert_eq!(r.abstained(), r.pa_lower <= 0.5);
        prop_assert_eq!(r.counts.iter().sum::<u64>(), 2000);
    }
}
