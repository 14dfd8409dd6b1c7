use ebsmooth::classifier::{classify_hard, EbClassifier, HardClassifier, LinearClassifier, SoftClassifier};
use ebsmooth::densities::IsoMixture;
use ebsmooth::energy::EnergyNet;
use ebsmooth::linalg::{argmax, norm, softmax, sub};
use ebsmooth::score::{SmoothedModel, ZeroEnergy};
use ebsmooth::stats::RngStream;
use proptest::prelude::*;

fn soft(seed: u64, d: usize, k: usize) -> SoftClassifier {
    SoftClassifier::new(d, &[8, 8], k, &mut RngStream::new(seed, 0)).unwrap()
}

proptest! {
    #[test]
    fn soft_pi_is_a_distribution(seed in any::<u64>(), x0 in -5.0f64..5.0, x1 in -5.0f64..5.0, m in 1usize..16) {
        let est = SmoothedModel::new(IsoMixture::symmetric(vec![1.0, 0.5], 0.4).unwrap().into(), 0.3);
        let eb = EbClassifier::new(soft(seed, 2, 4), est, 0.3, m).unwrap();
        let p = eb.soft_pi(&[x0, x1], &mut RngStream::new(seed, 1)).unwrap();
        prop_assert!(p.iter().all(|v| *v > 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn zero_energy_hard_classifier_is_base(seed in any::<u64>(), x0 in -3.0f64..3.0, x1 in -3.0f64..3.0) {
        let base = soft(seed, 2, 3);
        let zero = EnergyNet::zeros(2, &[4], 0.5).unwrap();
        let eb = EbClassifier::new(base.clone(), zero, 0.5, 1).unwrap();
        prop_assert_eq!(classify_hard(&eb, &[x0, x1]).unwrap(), classify_hard(&base, &[x0, x1]).unwrap());
    }

    #[test]
    fn grad_log_pi_matches_fixed_noise_differences(seed in any::<u64>()) {
        let mut gen = RngStream::new(seed, 2);
        let net = EnergyNet::from_mlp(ebsmooth::mlp::Mlp::new(&[3, 10, 1], &mut gen).unwrap(), 0.4).unwrap();
        let eb = EbClassifier::new(soft(seed, 3, 3), net, 0.4, 5).unwrap();
        let noise = eb.draw_noise(&mut gen);
        let x = gen.normal_vec(3, 1.0);
        let k = gen.index(3);
        let g = eb.grad_log_pi(&x, k, &noise).unwrap();
        let h = 1e-5;
        let fd: Vec<f64> = (0..3).map(|i| {
            let (mut p, mut m) = (x.clone(), x.clone());
            p[i] += h;
            m[i] -= h;
            (eb.log_pi(&p, k, &noise).unwrap() - eb.log_pi(&m, k, &noise).unwrap()) / (2.0 * h)
        }).collect();
        prop_assert!(norm(&sub(&g, &fd)) <= 1e-4 * norm(&fd).max(1e-6));
    }
}

#[test]
fn zero_energy_gradient_is_mean_base_gradient_over_pi() {
    let base = soft(3, 2, 3);
    let eb = EbClassifier::new(base.clone(), ZeroEnergy { dim: 2, sigma: 0.7 }, 0.7, 6).unwrap();
    let noise = eb.draw_noise(&mut RngStream::new(4, 0));
    let x = [0.2, -0.6];
    let k = 1;
    let mut mean_grad = [0.0; 2];
    let mut pi = 0.0;
    for eps in &noise {
        let y = [x[0] + eps[0], x[1] + eps[1]];
        let trace = base.mlp().forward_trace(&y);
        let p = softmax(trace.output());
        // ∇H_k = backward with cotangent p_k (e_k − p).
        let c: Vec<f64> = (0..3).map(|i| p[k] * (if i == k { 1.0 } else { 0.0 } - p[i])).collect();
        let g = base.mlp().backward(&trace, &c, None, 1.0);
        mean_grad[0] += g[0] / 6.0;
        mean_grad[1] += g[1] / 6.0;
        pi += p[k] / 6.0;
    }
    let got = eb.grad_log_pi(&x, k, &noise).unwrap();
    for i in 0..2 {
        assert!((got[i] - mean_grad[i] / pi).abs() < 1e-12);
    }
}

#[test]
fn monte_carlo_estimates_agree_across_seeds() {
    let est = SmoothedModel::new(IsoMixture::symmetric(vec![1.0, 0.0], 0.5).unwrap().into(), 0.5);
    let eb = EbClassifier::new(soft(5, 2, 3), est, 0.5, 10_000).unwrap();
    let x = [0.3, 0.1];
    let a = eb.soft_pi(&x, &mut RngStream::new(1, 0)).unwrap();
    let b = eb.soft_pi(&x, &mut RngStream::new(2, 0)).unwrap();
    for (p, q) in a.iter().zip(&b) {
        assert!((p - q).abs() <= 5.0 / 100.0, "{a:?} vs {b:?}");
    }
}

#[test]
fn argmax_of_soft_pi_is_stable_in_m() {
    let est = SmoothedModel::new(IsoMixture::symmetric(vec![1.5, 0.0], 0.5).unwrap().into(), 0.5);
    let base = soft(6, 2, 2);
    let small = EbClassifier::new(base.clone(), est.clone(), 0.5, 10_000).unwrap();
    let large = EbClassifier::new(base, est, 0.5, 40_000).unwrap();
    let mut gen = RngStream::new(7, 0);
    let (mut checked, mut tries) = (0, 0);
    while checked < 100 && tries < 2000 {
        tries += 1;
        let x = gen.normal_vec(2, 2.0);
        let p = small.soft_pi(&x, &mut RngStream::new(tries, 1)).unwrap();
        if (p[0] - p[1]).abs() <= 0.1 {
            continue;
        }
        let q = large.soft_pi(&x, &mut RngStream::new(tries, 2)).unwrap();
        assert_eq!(argmax(&p), argmax(&q), "x {x:?}: {p:?} vs {q:?}");
        checked += 1;
    }
    assert_eq!(checked, 100);
}

#[test]
fn linear_classifier_tie_goes_to_lower_index() {
    let h = LinearClassifier::new(vec![3.0, 4.0], 0.0).unwrap();
    assert_eq!(h.predict_class(&[0.0, 0.0]), 0);
    assert_eq!(argmax(&[0.5, 0.5]), 0);
}
