use slowfast::noise::{NoiseRealization, WienerPath};
use slowfast::ModelSpec;

fn model() -> ModelSpec {
    ModelSpec::example2(1.2, 0.01, 0.1, 0.1, 16, 1.0).unwrap()
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

fn normal_cdf(x: f64) -> f64 {
    // Abramowitz-Stegun 7.1.26, absolute error below 1.5e-7.
    let t = 1.0 / (1.0 + 0.327_591_1 * x.abs() / std::f64::consts::SQRT_2);
    let poly = t * (0.254_829_592
        + t * (-0.284_496_736 + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
    let erf = 1.0 - poly * (-(x * x) / 2.0).exp();
    0.5 * (1.0 + erf.copysign(x))
}

fn ks_statistic(mut z: Vec<f64>) -> f64 {
    z.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = z.len() as f64;
    z.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn wiener_increments_have_variance_dt() {
    let w = WienerPath::<f64>::generate(0.0, 20.0, 1e-3, 3, 9).unwrap();
    let inc = w.increments().to_vec();
    let (m, v) = mean_var(&inc);
    assert!(m.abs() < 3.0 * (1e-3f64 / inc.len() as f64).sqrt());
    assert!((v / 1e-3 - 1.0).abs() < 0.02, "variance {v}");
}

#[test]
fn stationary_marginals_are_gaussian() {
    let m = model();
    let (mut fast1, mut fast3, mut slow) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..400u64 {
        let n = NoiseRealization::generate(&m, 0.0, 3.0 * 49.0, 3.0, seed).unwrap();
        for i in 0..50 {
            let e = n.eta.at_index(i).unwrap();
            fast1.push(e[0]);
            fast3.push(e[2]);
            slow.push(n.xi.at_index(i).unwrap()[0]);
        }
    }
    let l = m.op().eigenvalues();
    let targets = [0.01 / (2.0 * l[0]), 0.01 / (2.0 * l[2]), 0.005];
    for (x, target) in [fast1, fast3, slow].into_iter().zip(targets) {
        let (mu, var) = mean_var(&x);
        assert!((var / target - 1.0).abs() < 0.05, "variance {var} vs {target}");
        let sd = target.sqrt();
        let z: Vec<f64> = x.iter().map(|v| (v - mu) / sd).collect();
        let d = ks_statistic(z);
        // 1% critical value.
        assert!(d < 1.63 / (x.len() as f64).sqrt(), "KS statistic {d}");
    }
}

#[test]
fn fast_autocorrelation_matches_the_rate() {
    let m = model();
    let lambda1 = m.op().lambda1();
    let dt = 2e-3;
    let lag = 3usize;
    let expected = (-lambda1 * lag as f64 * dt / m.eps()).exp();
    let mut num = 0.0;
    let mut den = 0.0;
    for seed in 0..20u64 {
        let n = NoiseRealization::generate(&m, 0.0, 40.0, dt, seed).unwrap();
        let last = n.eta.last_index();
        for i in 0..last - lag as i64 {
            let a = n.eta.at_index(i).unwrap()[0];
            let b = n.eta.at_index(i + lag as i64).unwrap()[0];
            num += a * b;
            den += a * a;
        }
    }
    let rho = num / den;
    assert!((rho - expected).abs() < 0.01, "autocorrelation {rho} vs {expected}");
}

#[test]
fn shifted_realization_is_reindexed() {
    let m = model();
    let n = NoiseRealization::generate(&m, -1.0, 1.0, 1e-2, 4).unwrap();
    let s = n.shift(0.25).unwrap();
    for i in -50..50 {
        assert_eq!(s.eta.at_index(i).unwrap(), n.eta.at_index(i + 25).unwrap());
        assert_eq!(s.xi.at_index(i).unwrap(), n.xi.at_index(i + 25).unwrap());
    }
}

#[test]
fn coarsening_keeps_the_path_values() {
    let m = model();
    let n = NoiseRealization::generate(&m, 0.0, 1.0, 1e-3, 2).unwrap();
    let c = n.coarsen(&m, 4).unwrap();
    for i in 0..250 {
        let fine = n.w_fast.value_at_index(4 * i).unwrap();
        let coarse = c.w_fast.value_at_index(i).unwrap();
        for (a, b) in fine.iter().zip(&coarse) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
