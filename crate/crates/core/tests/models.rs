use cmj::models::{sample_births, BirthLaw};
use cmj::rng::stream;
use cmj::Error;

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[test]
fn galton_watson_births_sit_at_one() {
    let law = BirthLaw::galton_watson(vec![0.1, 0.3, 0.6]).unwrap();
    let mut rng = stream(1, 0);
    let counts: Vec<f64> = (0..20_000)
        .map(|_| {
            let b = sample_births(&law, 5.0, &mut rng).unwrap();
            assert!(b.iter().all(|x| *x == 1.0));
            b.len() as f64
        })
        .collect();
    let (m, se) = mean_and_se(&counts);
    assert!((m - 1.5).abs() < 4.0 * se, "mean {m} se {se}");
    let data = law.intensity();
    assert_eq!(data.lattice_span, Some(1.0));
    assert!((data.mu_mass - 1.5).abs() < 1e-15);
}

#[test]
fn horizon_truncates_the_birth_list() {
    let law = BirthLaw::galton_watson(vec![0.0, 0.0, 1.0]).unwrap();
    let mut rng = stream(2, 0);
    assert!(sample_births(&law, 0.5, &mut rng).unwrap().is_empty());
    assert_eq!(sample_births(&law, 1.0, &mut rng).unwrap(), vec![1.0, 1.0]);
    assert!(matches!(sample_births(&law, -1.0, &mut rng), Err(Error::Config(_))));
}

#[test]
fn poisson_counts_match_the_integrated_intensity() {
    // density a e^{b x}: mass on [0, h] is a h (b = 0) or a (1 - e^{-h}) (b = -1)
    for (a, b, h, expected) in [(1.0, 0, 3.0, 3.0), (2.0, -1, 2.0, 2.0 * (1.0 - (-2f64).exp()))] {
        let law = BirthLaw::poisson(a, b).unwrap();
        let mut rng = stream(3, b as u64);
        let mut counts = Vec::new();
        for _ in 0..20_000 {
            let births = sample_births(&law, h, &mut rng).unwrap();
            assert!(births.windows(2).all(|w| w[0] <= w[1]));
            assert!(births.iter().all(|x| (0.0..=h).contains(x)));
            counts.push(births.len() as f64);
        }
        let (m, se) = mean_and_se(&counts);
        assert!((m - expected).abs() < 4.0 * se, "a={a} b={b}: {m} vs {expected}");
        assert!((law.intensity().cumulative(h) - expected).abs() < 1e-12);
    }
}

#[test]
fn fixed_dislocation_births_are_minus_log_parts() {
    let law = BirthLaw::fragmentation_fixed(vec![0.25, 0.75]).unwrap();
    let mut rng = stream(4, 0);
    let b = sample_births(&law, 10.0, &mut rng).unwrap();
    assert_eq!(b.len(), 2);
    assert!((b[0] - (4.0f64 / 3.0).ln()).abs() < 1e-15);
    assert!((b[1] - 4f64.ln()).abs() < 1e-15);
}

#[test]
fn uniform_split_parts_are_uniform() {
    // with two parts, e^{-first birth} = max(U, 1 - U) is uniform on [1/2, 1]
    let law = BirthLaw::fragmentation_uniform(2).unwrap();
    let mut rng = stream(5, 0);
    let xs: Vec<f64> = (0..20_000).map(|_| (-sample_births(&law, 100.0, &mut rng).unwrap()[0]).exp()).collect();
    let (m, se) = mean_and_se(&xs);
    assert!((m - 0.75).abs() < 4.0 * se);
}

#[test]
fn laplace_transforms_in_closed_form() {
    let gw = BirthLaw::galton_watson(vec![0.0, 0.0, 1.0]).unwrap();
    let rrt = BirthLaw::poisson(2.0, -1).unwrap();
    let split = BirthLaw::fragmentation_fixed(vec![0.5, 0.5]).unwrap();
    let uniform = BirthLaw::fragmentation_uniform(3).unwrap();
    for lam in [0.3, 1.0, 2.5] {
        assert!((gw.intensity().laplace_real(lam).unwrap() - 2.0 * (-lam).exp()).abs() < 1e-13);
        assert!((rrt.intensity().laplace_real(lam).unwrap() - 2.0 / (lam + 1.0)).abs() < 1e-13);
        assert!((split.intensity().laplace_real(lam).unwrap() - 2.0 * 0.5f64.powf(lam)).abs() < 1e-13);
        // E[sum V_i^lam] for Dirichlet(1,1,1) parts is b (b-1) B(lam+1, b-1)
        let expected = 3.0 * 2.0 / ((lam + 1.0) * (lam + 2.0));
        assert!((uniform.intensity().laplace_real(lam).unwrap() - expected).abs() < 1e-10);
    }
}

#[test]
fn second_moment_closed_forms() {
    let gw = BirthLaw::galton_watson(vec![0.1, 0.3, 0.6]).unwrap();
    let theta: f64 = 0.4;
    assert!((gw.second_moment_closed_form(theta).unwrap() - (-2.0 * theta).exp() * 2.7).abs() < 1e-14);
    let rrt = BirthLaw::poisson(1.0, 0).unwrap();
    assert_eq!(rrt.second_moment_closed_form(0.0), Some(f64::INFINITY));
    assert!((rrt.second_moment_closed_form(0.5).unwrap() - 5.0).abs() < 1e-14);
}

#[test]
fn invalid_laws_are_rejected() {
    assert!(matches!(BirthLaw::galton_watson(vec![0.5, 0.6]), Err(Error::Config(_))));
    assert!(matches!(BirthLaw::galton_watson(vec![]), Err(Error::Config(_))));
    assert!(matches!(BirthLaw::poisson(0.0, 0), Err(Error::Config(_))));
    assert!(matches!(BirthLaw::poisson(2.0, 2), Err(Error::Config(_))));
    assert!(matches!(BirthLaw::poisson(1.0, -1), Err(Error::Config(_))));
    assert!(matches!(BirthLaw::fragmentation_fixed(vec![1.0]), Err(Error::Config(_))));
    assert!(matches!(BirthLaw::fragmentation_uniform(1), Err(Error::Config(_))));
}

#[test]
fn subcritical_and_atomless_violations_exit_two() {
    let sub = BirthLaw::galton_watson(vec![0.2, 0.7, 0.1]).unwrap_err();
    assert_eq!(sub.exit_code(), 2);
    assert!(sub.to_string().contains("A.2 violated"));
    let fixed = BirthLaw::fragmentation_fixed(vec![1.0, 0.0]).unwrap_err();
    assert_eq!(fixed.exit_code(), 2);
}
