use slowfast::dynamics::reference::euler_maruyama;
use slowfast::dynamics::{simulate_full, simulate_random, simulate_reduced, FnCoupling};
use slowfast::manifold::LeadingOrderGraph;
use slowfast::{ModelSpec, NoiseRealization};
use std::sync::Arc;

fn example2(eps: f64) -> ModelSpec {
    ModelSpec::example2(1.2, eps, 0.1, 0.1, 8, 1.0).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn random_system_is_the_shifted_full_system() {
    let m = example2(0.05);
    let noise = NoiseRealization::generate(&m, 0.0, 0.5, 1e-3, 3).unwrap();
    let u0 = vec![0.2; 8];
    let v0 = [-1.5];
    let full = simulate_full(&m, &noise, &u0, &v0, 0.5, 1e-3).unwrap();
    let e0 = noise.eta.at_index(0).unwrap();
    let x0 = noise.xi.at_index(0).unwrap();
    let bu: Vec<f64> = u0.iter().zip(e0).map(|(a, b)| a - b).collect();
    let bv = [v0[0] - x0[0]];
    let rnd = simulate_random(&m, &noise.eta, &noise.xi, &bu, &bv, 0.5, 1e-3).unwrap();
    for i in 0..full.len() {
        let e = noise.eta.at_index(i as i64).unwrap();
        for k in 0..8 {
            assert!((full.fast(i)[k] - rnd.fast(i)[k] - e[k]).abs() < 1e-10);
        }
        let x = noise.xi.at_index(i as i64).unwrap()[0];
        assert!((full.slow(i)[0] - rnd.slow(i)[0] - x).abs() < 1e-10);
    }
}

#[test]
fn exponential_scheme_agrees_with_fine_euler_maruyama() {
    let m = example2(0.1);
    let noise = NoiseRealization::generate(&m, 0.0, 0.5, 1e-5, 8).unwrap();
    let u0 = vec![0.1; 8];
    let v0 = [1.0];
    let ref_traj = euler_maruyama(&m, &noise.w_fast, &noise.w_slow, &u0, &v0, 0.5, 1e-3).unwrap();
    let exp_traj = simulate_full(&m, &noise, &u0, &v0, 0.5, 1e-5).unwrap();
    let last = exp_traj.len() - 1;
    let ref_last = ref_traj.len() - 1;
    let du = dist(exp_traj.fast(last), ref_traj.fast(ref_last));
    let dv = (exp_traj.slow(last)[0] - ref_traj.slow(ref_last)[0]).abs();
    assert!(du < 5e-3, "fast gap {du}");
    assert!(dv < 1e-3, "slow gap {dv}");
}

/// Strong error against a fine-grid run on the same Wiener path.
#[test]
fn strong_self_convergence_order() {
    let m = example2(0.1);
    let fine = 1e-4;
    let steps = [16usize, 8, 4];
    let mut errs = [0.0f64; 3];
    let seeds = 16u64;
    for seed in 0..seeds {
        let noise = NoiseRealization::generate(&m, 0.0, 0.48, fine, seed).unwrap();
        let u0 = vec![0.3; 8];
        let truth = simulate_full(&m, &noise, &u0, &[1.0], 0.48, fine).unwrap();
        for (e, &k) in errs.iter_mut().zip(&steps) {
            let t = simulate_full(&m, &noise, &u0, &[1.0], 0.48, fine * k as f64).unwrap();
            let gap = dist(t.last_fast(), truth.last_fast()) + (t.last_slow()[0] - truth.last_slow()[0]).abs();
            *e += gap / seeds as f64;
        }
    }
    let order1 = (errs[0] / errs[1]).log2();
    let order2 = (errs[1] / errs[2]).log2();
    assert!(order1 >= 0.9 && order2 >= 0.9, "orders {order1}, {order2} from {errs:?}");
}

#[test]
fn zero_coupling_decouples_into_ou_processes() {
    let m = example2(0.05).with_coupling(Arc::new(FnCoupling::zero()));
    let noise = NoiseRealization::generate(&m, 0.0, 0.3, 1e-3, 1).unwrap();
    let full = simulate_full(&m, &noise, &[0.0; 8], &[0.0], 0.3, 1e-3).unwrap();
    // Start at the OU values: the full system then reproduces them exactly.
    let u0 = noise.eta.at_index(0).unwrap().to_vec();
    let v0 = noise.xi.at_index(0).unwrap().to_vec();
    let on = simulate_full(&m, &noise, &u0, &v0, 0.3, 1e-3).unwrap();
    for i in 0..on.len() {
        assert!(dist(on.fast(i), noise.eta.at_index(i as i64).unwrap()) < 1e-12);
        assert!((on.slow(i)[0] - noise.xi.at_index(i as i64).unwrap()[0]).abs() < 1e-12);
    }
    assert_eq!(full.len(), on.len());
}

#[test]
fn reduced_slow_path_approaches_full_as_eps_shrinks() {
    let mut gaps = Vec::new();
    for eps in [0.1, 0.01] {
        let m = example2(eps);
        let mut total = 0.0;
        for seed in 0..8u64 {
            let noise = NoiseRealization::generate(&m, 0.0, 1.0, 1e-3, seed).unwrap();
            let full = simulate_full(&m, &noise, &[0.0; 8], &[1.0], 1.0, 1e-3).unwrap();
            let g = LeadingOrderGraph { model: &m, noise: &noise };
            let red = simulate_reduced(&m, &g, &noise, &[1.0], 1.0, 1.0, 1e-3).unwrap();
            total += (0..full.len())
                .map(|i| (full.slow(i)[0] - red.slow(i)[0]).abs())
                .fold(0.0, f64::max);
        }
        gaps.push(total / 8.0);
    }
    assert!(gaps[1] < gaps[0], "sup gaps {gaps:?}");
}

#[test]
fn blow_up_is_reported_as_non_finite() {
    let fast = |_u: &[f64], _v: &[f64], out: &mut [f64]| out.iter_mut().for_each(|o| *o = 0.0);
    let slow = |_u: &[f64], v: &[f64], _d: f64, out: &mut [f64]| out[0] = 1e300 * v[0] * v[0];
    let m = example2(0.1).with_coupling(Arc::new(FnCoupling::new(fast, slow, 0.0, 0.0)));
    let noise = NoiseRealization::generate(&m, 0.0, 1.0, 1e-2, 0).unwrap();
    let err = simulate_full(&m, &noise, &[0.0; 8], &[10.0], 1.0, 1e-2).unwrap_err();
    assert!(matches!(err, slowfast::Error::NonFinite { .. }), "{err}");
}
