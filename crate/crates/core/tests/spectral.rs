use cmj::models::BirthLaw;
use cmj::rng::stream;
use cmj::spectral::{analyze, check_a7, find_zeros, require_a7, solve_malthusian, AnalyticFunction, Rect, ScanConfig, ROOT_TOL};
use num_complex::Complex64;

fn solve(law: &BirthLaw) -> cmj::spectral::MalthusianSolution {
    analyze(law, ROOT_TOL, &ScanConfig::default()).unwrap()
}

#[test]
fn malthusian_parameters_in_closed_form() {
    // (law, alpha, beta)
    let cases = [
        (BirthLaw::galton_watson(vec![0.0, 0.0, 1.0]).unwrap(), 2f64.ln(), 1.0),
        (BirthLaw::galton_watson(vec![0.1, 0.3, 0.6]).unwrap(), 1.5f64.ln(), 1.0),
        (BirthLaw::poisson(1.0, 0).unwrap(), 1.0, 1.0),
        (BirthLaw::poisson(2.0, -1).unwrap(), 1.0, 0.5),
        (BirthLaw::poisson(2.0, 1).unwrap(), 3.0, 0.5),
        (BirthLaw::fragmentation_fixed(vec![0.5, 0.5]).unwrap(), 1.0, 2f64.ln()),
        (BirthLaw::fragmentation_uniform(2).unwrap(), 1.0, 0.5),
        (BirthLaw::fragmentation_uniform(4).unwrap(), 1.0, 0.5 + 1.0 / 3.0 + 0.25),
    ];
    for (law, alpha, beta) in cases {
        let sol = solve(&law);
        assert!((sol.alpha - alpha).abs() < 1e-10, "{}: alpha {}", law.describe(), sol.alpha);
        assert!((sol.beta - beta).abs() < 1e-9, "{}: beta {}", law.describe(), sol.beta);
        assert!(sol.residual < 1e-11);
    }
}

#[test]
fn malthusian_root_satisfies_its_equation() {
    // parts sum to one, so every deterministic split has alpha = 1
    let v = [0.2, 0.3, 0.5];
    let law = BirthLaw::fragmentation_fixed(v.to_vec()).unwrap();
    let alpha = solve_malthusian(law.intensity(), ROOT_TOL).unwrap();
    assert!((alpha - 1.0).abs() < 1e-10);
    let law = BirthLaw::galton_watson(vec![0.25, 0.25, 0.25, 0.25]).unwrap();
    let alpha = solve_malthusian(law.intensity(), ROOT_TOL).unwrap();
    assert!((1.5 * (-alpha).exp() - 1.0).abs() < 1e-12);
}

#[test]
fn lattice_laws_report_only_alpha_in_the_period_strip() {
    for law in [
        BirthLaw::galton_watson(vec![0.0, 0.0, 1.0]).unwrap(),
        BirthLaw::fragmentation_fixed(vec![0.5, 0.5]).unwrap(),
    ] {
        let sol = solve(&law);
        assert!(sol.only_alpha(), "{:?}", sol.roots);
        assert!(!sol.boundary_roots_present);
        assert!(sol.lattice_span.is_some());
    }
}

/// All roots of a monic polynomial by Weierstrass iteration.
fn polynomial_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    let eval = |z: Complex64| coeffs.iter().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c);
    // start on a circle of the Cauchy radius around the mean of the roots
    let centre = -coeffs[1] / n as f64;
    let radius = 1.0 + coeffs[1..].iter().map(|c| c.abs()).fold(0.0, f64::max).powf(1.0 / n as f64);
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| centre + Complex64::from_polar(radius, 0.4 + 2.0 * std::f64::consts::PI * k as f64 / n as f64))
        .collect();
    for _ in 0..2000 {
        for i in 0..n {
            let denom = (0..n).filter(|&j| j != i).fold(Complex64::new(1.0, 0.0), |acc, j| acc * (z[i] - z[j]));
            let step = eval(z[i]) / denom;
            z[i] -= step;
        }
    }
    z
}

#[test]
fn uniform_split_strip_roots_match_polynomial_roots() {
    // mu_hat(lambda) = b! / ((lambda + 1) ... (lambda + b - 1)), so the roots
    // are those of prod (lambda + j) - b!
    // the second root crosses Re = 1/2 between 26 and 27 parts
    for (b, count) in [(5usize, 1usize), (30, 3)] {
        let law = BirthLaw::fragmentation_uniform(b).unwrap();
        let sol = solve(&law);
        let mut poly = vec![1.0];
        for j in 1..b {
            let mut next = vec![0.0; poly.len() + 1];
            for (k, c) in poly.iter().enumerate() {
                next[k] += c;
                next[k + 1] += c * j as f64;
            }
            poly = next;
        }
        let factorial: f64 = (1..=b).map(|k| k as f64).product();
        *poly.last_mut().unwrap() -= factorial;
        let mut expected: Vec<Complex64> =
            polynomial_roots(&poly).into_iter().filter(|z| z.re >= 0.5 && z.im.abs() <= 50.0).collect();
        expected.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
        assert_eq!(sol.roots.len(), count, "{:?}", sol.roots);
        assert_eq!(expected.len(), count, "b={b}: {:?} vs {expected:?}", sol.roots);
        for (r, z) in sol.roots.iter().zip(&expected) {
            assert!((r.lambda() - z).norm() < 1e-8, "b={b}: {r:?} vs {z}");
            assert_eq!(r.multiplicity, 1);
        }
    }
}

struct Cubic;

impl AnalyticFunction for Cubic {
    // (z - 1)^2 (z - 2i)
    fn value(&self, z: Complex64) -> Complex64 {
        (z - 1.0).powu(2) * (z - Complex64::new(0.0, 2.0))
    }
    fn derivative(&self, z: Complex64) -> Complex64 {
        2.0 * (z - 1.0) * (z - Complex64::new(0.0, 2.0)) + (z - 1.0).powu(2)
    }
}

#[test]
fn zero_finder_counts_multiplicity() {
    let region = Rect { re_min: -0.53, re_max: 1.61, im_min: -0.47, im_max: 2.57 };
    let mut zeros = find_zeros(&Cubic, region, 0.5, 1e-8).unwrap();
    zeros.sort_by(|a, b| b.0.re.total_cmp(&a.0.re));
    assert_eq!(zeros.len(), 2);
    assert!((zeros[0].0 - 1.0).norm() < 1e-6);
    assert_eq!(zeros[0].1, 2);
    assert!((zeros[1].0 - Complex64::new(0.0, 2.0)).norm() < 1e-8);
    assert_eq!(zeros[1].1, 1);
}

#[test]
fn second_moment_assumption() {
    let mut rng = stream(9, 0);
    let gw = BirthLaw::galton_watson(vec![0.1, 0.3, 0.6]).unwrap();
    let alpha = 1.5f64.ln();
    let r = check_a7(&gw, alpha, alpha / 4.0, 1000, &mut rng).unwrap();
    assert!(r.satisfied && r.standard_error.is_none());
    assert!(require_a7(&r).is_ok());

    // uniform split has no closed form; sum V_i^theta <= b^{1-theta} bounds it
    let split = BirthLaw::fragmentation_uniform(3).unwrap();
    let r = check_a7(&split, 1.0, 0.25, 20_000, &mut rng).unwrap();
    assert!(r.satisfied);
    assert!(r.second_moment <= 3f64.powf(1.5) && r.second_moment >= 1.0);

    assert!(check_a7(&gw, alpha, alpha, 10, &mut rng).is_err());
}
