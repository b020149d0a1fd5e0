use proptest::prelude::*;
use slowfast::estimation::golden_section;
use slowfast::manifold::leading_order_graph;
use slowfast::spectral::eigenvalue;
use slowfast::tracking::fit_decay_rate;
use slowfast::ModelSpec;

proptest! {
    #[test]
    fn eigenvalues_increase_with_k(alpha in 1.01f64..1.99, k in 1usize..200) {
        let a = eigenvalue(k, alpha).unwrap();
        let b = eigenvalue(k + 1, alpha).unwrap();
        prop_assert!(a > 0.0 && b > a);
    }

    #[test]
    fn leading_order_graph_is_lipschitz(v in -5.0f64..5.0, w in -5.0f64..5.0, eps in 0.005f64..0.2) {
        let m = ModelSpec::example2(1.2, eps, 0.1, 0.1, 16, 1.0).unwrap();
        let eta = vec![0.0; 16];
        let a = leading_order_graph(&m, &eta, &[v]).unwrap();
        let b = leading_order_graph(&m, &eta, &[w]).unwrap();
        let d: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        // |d/dv √(v²+5)| ≤ 1 and ‖(c_k/λ_k)‖ ≤ ‖c‖/λ₁.
        let c_norm: f64 = m.op().basis_const_coeffs().iter().map(|c| c * c).sum::<f64>().sqrt();
        prop_assert!(d <= 0.01 * c_norm / m.op().lambda1() * (v - w).abs() * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn decay_fit_is_exact_on_exponentials(rate in 0.1f64..200.0, scale in 1e-3f64..1e3) {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1 / rate).collect();
        let y: Vec<f64> = t.iter().map(|s| scale * (-rate * s).exp()).collect();
        let (r, n) = fit_decay_rate(&t, &y, 0.0, 0.0);
        prop_assert_eq!(n, 50);
        prop_assert!((r / rate - 1.0).abs() < 1e-9);
    }

    #[test]
    fn golden_section_brackets_a_parabola(c in -1.0f64..1.0) {
        let (x, fx) = golden_section(|d: f64| Ok((d - c).powi(2)), -1.0, 1.0, 60).unwrap();
        prop_assert!((x - c).abs() < 1e-6);
        prop_assert!(fx < 1e-12);
    }
}
