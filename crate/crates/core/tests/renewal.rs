use cmj::characteristics::{Characteristic, FringeCharacteristic, FringePattern, Indicator};
use cmj::models::BirthLaw;
use cmj::renewal::{mean_function, sigma_squared, KernelOptions, RenewalKernel, SigmaOptions};
use cmj::spectral::{analyze, MalthusianSolution, ScanConfig, ROOT_TOL};
use std::sync::Arc;

fn setup(law: &BirthLaw, opts: &KernelOptions) -> (MalthusianSolution, RenewalKernel) {
    let sol = analyze(law, ROOT_TOL, &ScanConfig::default()).unwrap();
    let k = RenewalKernel::new(law, &sol, opts).unwrap();
    (sol, k)
}

fn one(t: f64) -> f64 {
    if t >= 0.0 {
        1.0
    } else {
        0.0
    }
}

#[test]
fn c_alpha_lattice_and_continuous() {
    let (_, k) = setup(&BirthLaw::galton_watson(vec![0.0, 0.0, 1.0]).unwrap(), &KernelOptions::default());
    assert_eq!(k.lattice_span(), Some(1.0));
    assert!((k.c_alpha() - 2.0).abs() < 1e-14);
    let (_, k) = setup(&BirthLaw::fragmentation_fixed(vec![0.5, 0.5]).unwrap(), &KernelOptions::default());
    let d = 2f64.ln();
    assert!((k.c_alpha() - d / (1.0 - (-d).exp())).abs() < 1e-14);
    let (_, k) = setup(&BirthLaw::poisson(3.0, 0).unwrap(), &KernelOptions::default());
    assert!((k.c_alpha() - 1.0 / 3.0).abs() < 1e-14);
}

#[test]
fn expected_counts_solve_the_renewal_equation() {
    // m_t for phi = 1: Laplace inversion of 1 / (lambda (1 - mu_hat(lambda)))
    let decaying: fn(f64) -> f64 = |t| 2.0 * t.exp() - 1.0;
    let split3: fn(f64) -> f64 = |t| -0.5 + 1.2 * t.exp() + 0.3 * (-4.0 * t).exp();
    let cases: [(BirthLaw, fn(f64) -> f64, bool, f64); 4] = [
        (BirthLaw::poisson(2.0, -1).unwrap(), decaying, false, 1e-12),
        (BirthLaw::poisson(2.0, -1).unwrap(), decaying, true, 1e-6),
        (BirthLaw::fragmentation_uniform(2).unwrap(), decaying, false, 1e-6),
        (BirthLaw::fragmentation_uniform(3).unwrap(), split3, false, 1e-6),
    ];
    for (law, m, force_grid, tol) in cases {
        let (sol, k) = setup(&law, &KernelOptions { force_grid, ..KernelOptions::default() });
        for t in [0.0, 0.5, 2.0, 7.0] {
            let got = k.mean_process(&one, t).unwrap().value;
            let want = m(t);
            assert!((got - want).abs() < tol * want, "{} grid={force_grid} t={t}: {got} vs {want}", law.describe());
        }
        let a = k.key_renewal_limit(&one).unwrap();
        assert!((a - 1.0 / (sol.alpha * sol.beta)).abs() < tol);
    }
}

#[test]
fn lattice_counts() {
    // GW(0.1, 0.3, 0.6): m_n = sum_{j <= n} 1.5^j, limit of 1.5^{-n} m_n is 3
    let law = BirthLaw::galton_watson(vec![0.1, 0.3, 0.6]).unwrap();
    let (_, k) = setup(&law, &KernelOptions::default());
    for n in 0..10 {
        let m: f64 = (0..=n).map(|j| 1.5f64.powi(j)).sum();
        let got = k.mean_process(&one, n as f64 + 0.5).unwrap().value;
        assert!((got / m - 1.0).abs() < 1e-12, "n={n}: {got} vs {m}");
    }
    assert!((k.key_renewal_limit(&one).unwrap() - 3.0).abs() < 1e-12);
}

#[test]
fn e1_expansion_passes_with_the_true_limit_only() {
    let law = BirthLaw::fragmentation_uniform(3).unwrap();
    let (_, k) = setup(&law, &KernelOptions::default());
    let grid: Vec<f64> = (0..=40).map(|i| i as f64 * 0.5).collect();
    let a = k.key_renewal_limit(&one).unwrap();
    assert!((a - 1.2).abs() < 1e-6);
    let e1 = k.check_e1(&one, a, &grid).unwrap();
    // r(t) = m_t - 1.2 e^t = -1/2 + 0.3 e^{-4t}
    for (t, r) in &e1.remainder_samples {
        let exact = -0.5 + 0.3 * (-4.0 * t).exp();
        assert!((r - exact).abs() * (-t).exp() < 1e-8, "t={t}: {r} vs {exact}");
    }
    assert!(e1.passed);
    assert!(!k.check_e1(&one, a * 1.05, &grid).unwrap().passed);
}

fn leaf_sigma(law: &BirthLaw, samples: usize, seed: u64) -> cmj::renewal::SigmaReport {
    let sol = analyze(law, ROOT_TOL, &ScanConfig::default()).unwrap();
    let k = Arc::new(RenewalKernel::new(law, &sol, &KernelOptions::default()).unwrap());
    let ch: Arc<dyn Characteristic> = Arc::new(FringeCharacteristic::new(FringePattern::leaf(), law, 60.0, 0.01).unwrap());
    let opts = SigmaOptions { samples, seed, ..SigmaOptions::default() };
    sigma_squared(law, ch, &sol, k, &opts).unwrap()
}

#[test]
fn galton_watson_leaf_variance_constant() {
    // hand decomposition of the leaf count of GW(0.1, 0.3, 0.6): 1.2; the
    // mean limit is 1 + 0.1 sum_{k >= 1} (2/3)^k = 1.2 as well
    let r = leaf_sigma(&BirthLaw::galton_watson(vec![0.1, 0.3, 0.6]).unwrap(), 5000, 1);
    let tol = 4.0 * r.se + r.truncation_error_bound;
    assert!((r.sigma2 - 1.2).abs() < tol, "{} +- {}", r.sigma2, r.se);
    assert!((r.a_alpha - 1.2).abs() < 1e-12);
}

#[test]
fn random_recursive_tree_leaf_variance_constant() {
    // Var chi(s) = (2 - e^{-2s}) / 8 on s >= 0 and e^{2s} / 8 below: 1/3
    let r = leaf_sigma(&BirthLaw::poisson(1.0, 0).unwrap(), 5000, 2);
    let tol = 4.0 * r.se + r.truncation_error_bound;
    assert!((r.sigma2 - 1.0 / 3.0).abs() < tol, "{} +- {}", r.sigma2, r.se);
    assert!((r.a_alpha - 0.5).abs() < 1e-9);
}

#[test]
fn variance_constant_is_seed_stable() {
    let law = BirthLaw::poisson(1.0, 0).unwrap();
    let a = leaf_sigma(&law, 2000, 3);
    let b = leaf_sigma(&law, 2000, 4);
    assert!(a.agrees_with(&b));
    let again = leaf_sigma(&law, 2000, 3);
    assert_eq!(a.sigma2, again.sigma2);
}

#[test]
fn indicator_mean_function_has_closed_form() {
    let ch: Arc<dyn Characteristic> = Arc::new(Indicator);
    let f = mean_function(&ch).unwrap();
    assert_eq!(f(-1.0), 0.0);
    assert_eq!(f(2.0), 1.0);
}
