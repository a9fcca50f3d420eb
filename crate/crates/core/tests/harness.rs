use cmj::characteristics::FringePattern;
use cmj::config::{CharacteristicSpec, ExperimentConfig, ModelSpec};
use cmj::harness::{
    enumerate_gw_fringe, extinction_probability, proxy_stability, replica_seed, run_clt, run_fringe_census, run_lln,
    run_martingale_suite, run_sigma, z_score, CltOptions, Experiment, Moments,
};
use cmj::models::BirthLaw;
use cmj::Error;

fn gw(p: &[f64]) -> ModelSpec {
    ModelSpec::GaltonWatson { offspring: p.to_vec() }
}

fn config(model: ModelSpec, horizons: &[f64], replicas: usize, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(model, horizons.to_vec());
    cfg.replicas = replicas;
    cfg.master_seed = seed;
    cfg
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let mut cfg = config(ModelSpec::PoissonIntensity { a: 2.0, b_exp: -1 }, &[2.0, 4.0], 300, 11);
    cfg.characteristic = CharacteristicSpec::Fringe { pattern: "()".into() };
    let exp = Experiment::new(cfg).unwrap();
    let one = in_pool(1, || run_lln(&exp).unwrap());
    let four = in_pool(4, || run_lln(&exp).unwrap());
    assert_eq!(one, four);
    let again = run_lln(&exp).unwrap();
    assert_eq!(one, again);
}

#[test]
fn replica_seeds_are_distinct_and_reproducible() {
    let seeds: std::collections::HashSet<u64> = (0..10_000).map(|i| replica_seed(7, i)).collect();
    assert_eq!(seeds.len(), 10_000);
    assert_eq!(replica_seed(7, 123), replica_seed(7, 123));
    assert_ne!(replica_seed(7, 123), replica_seed(8, 123));
}

#[test]
fn extinction_probabilities() {
    // 0.6 q^2 - 0.7 q + 0.1 = 0 has roots 1/6 and 1
    let q = extinction_probability(&BirthLaw::galton_watson(vec![0.1, 0.3, 0.6]).unwrap());
    assert!((q - 1.0 / 6.0).abs() < 1e-12);
    // q = exp(2 (q - 1)), solved by bisection on [0, 0.5]
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (2.0 * (mid - 1.0)).exp() - mid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = extinction_probability(&BirthLaw::poisson(2.0, -1).unwrap());
    assert!((q - lo).abs() < 1e-12, "{q} vs {lo}");
    assert_eq!(extinction_probability(&BirthLaw::poisson(1.0, 0).unwrap()), 0.0);
    assert_eq!(extinction_probability(&BirthLaw::fragmentation_uniform(2).unwrap()), 0.0);
}

#[test]
fn lln_extinction_fraction_matches() {
    let r = run_lln(&Experiment::new(config(gw(&[0.1, 0.3, 0.6]), &[3.0, 6.0], 3000, 12)).unwrap()).unwrap();
    assert!(r.extinction.z.abs() <= 4.0, "{:?}", r.extinction);
    assert!((r.extinction.q - 1.0 / 6.0).abs() < 1e-12);
    assert!(r.passed);
}

#[test]
fn nerman_characteristic_has_unit_mean() {
    let mut cfg = config(ModelSpec::PoissonIntensity { a: 2.0, b_exp: -1 }, &[1.0, 3.0, 5.0], 2000, 13);
    cfg.characteristic = CharacteristicSpec::Nerman;
    let r = run_lln(&Experiment::new(cfg).unwrap()).unwrap();
    for row in &r.rows {
        assert!((row.predicted_mean.unwrap() - 1.0).abs() < 1e-9, "{row:?}");
        assert!(row.z_mean.unwrap().abs() <= 4.0);
    }
    assert!(r.passed);
}

#[test]
fn binary_tree_leaf_fraction_is_exact() {
    let mut cfg = config(gw(&[0.0, 0.0, 1.0]), &[1.0, 3.0, 5.0], 4, 14);
    cfg.characteristic = CharacteristicSpec::Fringe { pattern: "()".into() };
    let r = run_lln(&Experiment::new(cfg).unwrap()).unwrap();
    for row in &r.rows {
        let n = row.t as i32;
        let exact = 2f64.powi(n) / (2f64.powi(n + 1) - 1.0);
        assert!((row.fraction_mean.unwrap() - exact).abs() < 1e-15);
        assert!((row.fraction_limit.unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(row.survivors, 4);
    }
    assert_eq!(r.extinction.q, 0.0);
}

#[test]
fn off_lattice_horizons_are_rejected() {
    let exp = Experiment::new(config(gw(&[0.1, 0.3, 0.6]), &[2.5], 10, 1)).unwrap();
    assert!(matches!(run_lln(&exp), Err(Error::Config(_))));
}

#[test]
fn fringe_census_matches_enumeration() {
    let offspring = [0.3, 0.1, 0.4, 0.2];
    let patterns = FringePattern::enumerate(2, 3);
    let exact = enumerate_gw_fringe(&offspring, 3, &patterns).unwrap();
    let mut cfg = config(gw(&offspring), &[3.0], 50, 15);
    cfg.fringe.patterns = patterns.iter().map(|p| p.to_string()).collect();
    cfg.fringe.h_max = 2;
    let r = run_fringe_census(&Experiment::new(cfg).unwrap()).unwrap();
    assert_eq!(r.rows.len(), exact.len());
    for (row, e) in r.rows.iter().zip(&exact) {
        let p = row.predicted_count.unwrap();
        assert!((p - e).abs() <= 1e-12 * e.max(1.0), "{}: {p} vs {e}", row.pattern);
    }
}

#[test]
fn fringe_patterns_above_h_max_are_rejected() {
    let mut cfg = config(gw(&[0.1, 0.3, 0.6]), &[3.0], 10, 1);
    cfg.fringe.patterns = vec!["((()))".into()];
    assert!(matches!(run_fringe_census(&Experiment::new(cfg).unwrap()), Err(Error::Config(_))));
}

#[test]
fn martingale_traces() {
    let mut cfg = config(gw(&[0.1, 0.3, 0.6]), &[1.0, 2.0, 4.0, 6.0], 3000, 16);
    cfg.martingales.generations = 5;
    let r = run_martingale_suite(&Experiment::new(cfg).unwrap()).unwrap();
    assert!(r.passed, "{:?}", r.traces);
    assert_eq!(r.flagged, 0);
    let w = r.traces.iter().find(|t| t.name == "nerman_w").unwrap();
    assert_eq!(w.points.len(), 4);
    assert!(w.variance_non_decreasing);
    assert!(w.points.iter().all(|p| p.expected == 1.0));
    assert!(r.traces.iter().any(|t| t.name.starts_with("biggins_theta_") && t.points.len() == 6));

    let cfg = config(ModelSpec::PoissonIntensity { a: 1.0, b_exp: 0 }, &[2.0], 200, 17);
    let r = run_martingale_suite(&Experiment::new(cfg).unwrap()).unwrap();
    assert!(!r.refusals.is_empty());
    assert!(r.traces.iter().any(|t| t.name == "nerman_w"));
}

#[test]
fn deterministic_tree_has_no_fluctuations() {
    let exp = Experiment::new(config(gw(&[0.0, 0.0, 1.0]), &[6.0], 20, 18)).unwrap();
    let out = run_clt(&exp, &CltOptions::default()).unwrap();
    assert!(out.report.degenerate);
    assert!(!out.report.passed);
    assert_eq!(out.sigma.sigma2, 0.0);
    assert!(out.report.ks_p_value.is_none());
}

#[test]
fn proxy_effect_is_measured() {
    let mut cfg = config(ModelSpec::PoissonIntensity { a: 2.0, b_exp: -1 }, &[4.0], 600, 19);
    cfg.characteristic = CharacteristicSpec::Fringe { pattern: "()".into() };
    cfg.tolerances.delta_w = Some(3.0);
    cfg.sigma.samples = 2000;
    let exp = Experiment::new(cfg).unwrap();
    let sigma = run_sigma(&exp, &exp.sigma_options()).unwrap();
    assert!(sigma.sigma2 > 3.0 * sigma.se);
    let p = proxy_stability(&exp, &sigma).unwrap();
    assert_eq!(p.delta_w, exp.delta_w());
    assert!(p.ks_statistic > 0.0 && p.ks_statistic < 1.0);
    assert!(p.ks_statistic_doubled > 0.0 && p.ks_statistic_doubled < 1.0);
    assert!(p.resampling_sd > 0.0);
    assert_eq!(p.stable, (p.ks_statistic - p.ks_statistic_doubled).abs() < p.resampling_sd);
}

#[test]
fn moments_and_scores() {
    let m = Moments::of(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(m.mean, 2.5);
    assert!((m.variance - 5.0 / 3.0).abs() < 1e-15);
    assert!((m.se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    // m2 = 1.25, m4 = 2.5625
    assert!((m.variance_se - ((2.5625f64 - 1.5625) / 4.0).sqrt()).abs() < 1e-15);

    assert_eq!(z_score(1.1, 0.05, 1.0), 2.0000000000000018);
    assert_eq!(z_score(1.0 + 1e-12, 1e-17, 1.0), 0.0);
    assert_eq!(z_score(1.1, 0.0, 1.0), f64::INFINITY);
}

#[test]
fn all_extinct_is_a_configuration_error() {
    let exp = Experiment::new(config(gw(&[0.45, 0.0, 0.0, 0.0, 0.55]), &[4.0], 1, 3)).unwrap();
    let pop = cmj::genealogy::simulate(&exp.law, &cmj::genealogy::StopRule::TimeHorizon(4.0), exp.replica_seed(0)).unwrap();
    let dead = cmj::genealogy::coming_generation(&pop, 4.0).unwrap().is_empty();
    match run_lln(&exp) {
        Err(Error::Config(_)) => assert!(dead),
        Ok(_) => assert!(!dead),
        Err(e) => panic!("{e}"),
    }
}
