//! Monte Carlo replica farms: law-of-large-numbers tables, the
//! normal-approximation test of the centred counts, fringe censuses and
//! martingale traces.
//!
//! Replica `i` is simulated from the seed drawn out of stream `i` of the
//! master seed, and auxiliary populations (generation-stopped ones for the
//! Biggins martingale) from streams above [`AUX_STREAM_BASE`]. Replicas run
//! on the rayon pool and are collected in index order, so every report is a
//! function of the configuration and master seed only.

use crate::characteristics::{counted_process, FringePattern, SharedCharacteristic};
use crate::config::{CharacteristicSpec, ExperimentConfig};
use crate::error::{Error, Result};
use crate::genealogy::{biggins, complex_martingale, nerman_w, simulate, StopRule};
use crate::models::{BirthLaw, LawKind};
use crate::output::{fmt_f64, Table};
use crate::renewal::{mean_function, sigma_squared, KernelOptions, MeanFn, RenewalKernel, SigmaOptions, SigmaReport};
use crate::rng::{child_seed, stream, AUX_STREAM_BASE};
use crate::spectral::{analyze, MalthusianSolution};
use crate::stats::{anderson_darling_normal, ks_normal, Welford};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// A validated configuration together with its law and spectral data.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub law: BirthLaw,
    pub sol: MalthusianSolution,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let law = config.model.build()?;
        let sol = analyze(&law, config.tolerances.root_tol, &config.scan_config())?;
        Ok(Self { config, law, sol })
    }

    pub fn alpha(&self) -> f64 {
        self.sol.alpha
    }

    /// `t_big - t`, by default the smallest integer with
    /// `e^{-alpha delta / 2} <= 0.1`.
    pub fn delta_w(&self) -> f64 {
        self.config.tolerances.delta_w.unwrap_or_else(|| (4.6 / self.alpha()).ceil())
    }

    pub fn sigma_options(&self) -> SigmaOptions {
        let tol = &self.config.tolerances;
        SigmaOptions {
            samples: self.config.sigma.samples,
            grid_step: tol.grid_step,
            s_max: tol.s_max,
            pad: self.config.sigma.pad,
            nested_mc: tol.nested_mc_m,
            seed: aux_seed(self.config.master_seed, 0),
            max_relative_se: None,
        }
    }

    /// Largest local time at which characteristics are evaluated by any
    /// harness operation.
    fn table_horizon(&self) -> f64 {
        let a = self.alpha();
        let opts = self.sigma_options();
        let sigma_reach = opts.s_max.unwrap_or(20.0 / a) + opts.pad.unwrap_or(14.0 / a);
        (self.config.max_horizon() + self.delta_w()).max(sigma_reach) + 1.0
    }

    pub fn characteristic(&self) -> Result<SharedCharacteristic> {
        self.build_characteristic(&self.config.characteristic)
    }

    fn build_characteristic(&self, spec: &CharacteristicSpec) -> Result<SharedCharacteristic> {
        spec.build(&self.law, self.alpha(), self.table_horizon(), self.config.fringe.table_step)
    }

    pub fn kernel(&self) -> Result<Arc<RenewalKernel>> {
        Ok(Arc::new(RenewalKernel::new(&self.law, &self.sol, &KernelOptions::default())?))
    }

    pub fn replica_seed(&self, i: usize) -> u64 {
        replica_seed(self.config.master_seed, i)
    }

    /// Lattice laws live on the grid `d Z`; other times are refused.
    fn require_grid_times(&self, times: &[f64]) -> Result<()> {
        if let Some(d) = self.sol.lattice_span {
            for t in times {
                let k = t / d;
                if (k - k.round()).abs() > 1e-9 * k.abs().max(1.0) {
                    return Err(Error::Config(format!("lattice law with span {d}: time {t} is not on the lattice")));
                }
            }
        }
        Ok(())
    }
}

/// Seed of replica `i`: the first draw of stream `i` of the master seed.
pub fn replica_seed(master_seed: u64, i: usize) -> u64 {
    child_seed(&mut stream(master_seed, i as u64))
}

fn aux_seed(master_seed: u64, i: usize) -> u64 {
    child_seed(&mut stream(master_seed, AUX_STREAM_BASE + i as u64))
}

fn farm<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..n).into_par_iter().map(f).collect()
}

/// `(mean - target) / se`. Differences at rounding level (below `1e-9`
/// relative) score `0`, so exactly conserved quantities, whose standard
/// error is pure rounding noise, are not flagged.
pub fn z_score(mean: f64, se: f64, target: f64) -> f64 {
    let diff = mean - target;
    if diff.abs() <= 1e-9 * target.abs().max(1.0) {
        0.0
    } else if se > 0.0 {
        diff / se
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Mean, variance and their standard errors of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    pub se: f64,
    pub variance: f64,
    /// Large-sample standard error of the variance, `sqrt((m4 - m2^2) / n)`.
    pub variance_se: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Self {
        let w: Welford = xs.iter().copied().collect();
        let n = xs.len();
        let mean = w.mean();
        let variance = w.variance();
        let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n as f64;
        Self {
            n,
            mean,
            se: w.std_error(),
            variance,
            variance_se: ((m4 - m2 * m2).max(0.0) / n as f64).sqrt(),
        }
    }
}

/// Probability of eventual extinction, from the fixed point of the
/// generating function of the number of children.
pub fn extinction_probability(law: &BirthLaw) -> f64 {
    let pgf: Box<dyn Fn(f64) -> f64> = match law.kind() {
        LawKind::GaltonWatson { offspring } => {
            let p = offspring.clone();
            Box::new(move |s| p.iter().rev().fold(0.0, |acc, pk| acc * s + pk))
        }
        LawKind::PoissonIntensity { a, b_exp: -1 } => {
            let a = *a;
            Box::new(move |s| (a * (s - 1.0)).exp())
        }
        // Infinitely many children, or at least two positive parts.
        LawKind::PoissonIntensity { .. } | LawKind::Fragmentation { .. } => return 0.0,
    };
    // Iterating from 0 converges monotonically to the smallest fixed point.
    let mut q = 0.0;
    for _ in 0..100_000 {
        let next = pgf(q);
        if (next - q).abs() < 1e-16 {
            return next;
        }
        q = next;
    }
    q
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionCheck {
    pub t: f64,
    pub q: f64,
    pub extinct_fraction: f64,
    pub se: f64,
    pub z: f64,
}

fn extinction_check(law: &BirthLaw, t: f64, extinct: &[bool]) -> ExtinctionCheck {
    let q = extinction_probability(law);
    let xs: Vec<f64> = extinct.iter().map(|e| if *e { 1.0 } else { 0.0 }).collect();
    let m = Moments::of(&xs);
    let frac = m.mean;
    // Binomial standard error at the predicted q avoids a zero estimate.
    let se = (q * (1.0 - q) / xs.len() as f64).sqrt().max(m.se.max(0.0));
    ExtinctionCheck { t, q, extinct_fraction: frac, se, z: z_score(frac, se, q) }
}

// ---------------------------------------------------------------------------
// Law of large numbers

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlnRow {
    pub t: f64,
    pub survivors: usize,
    /// Replica mean of `e^{-alpha t} Z_t^phi`.
    pub mean_scaled: f64,
    pub se_scaled: f64,
    /// `e^{-alpha t} m_t^phi` from the renewal equation.
    pub predicted_mean: Option<f64>,
    pub z_mean: Option<f64>,
    /// Key renewal limit `a_alpha` of `e^{-alpha t} m_t^phi`.
    pub limit: Option<f64>,
    pub z_limit: Option<f64>,
    /// Replica mean of `e^{-alpha t} Z_t` and its renewal prediction.
    pub mean_scaled_count: f64,
    pub se_scaled_count: f64,
    pub predicted_count: f64,
    pub z_count: f64,
    /// Mean of `Z_t^phi / Z_t` over surviving replicas, against
    /// `a_alpha beta / c_alpha`.
    pub fraction_mean: Option<f64>,
    pub fraction_se: Option<f64>,
    pub fraction_limit: Option<f64>,
    pub z_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlnReport {
    pub characteristic: String,
    pub replicas: usize,
    pub alpha: f64,
    pub beta: f64,
    pub c_alpha: f64,
    pub a_alpha: Option<f64>,
    pub rows: Vec<LlnRow>,
    pub extinction: ExtinctionCheck,
    /// Every available `|z_mean|`, `|z_count|` and the extinction score are
    /// at most 4.
    pub passed: bool,
}

impl LlnReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new([
            "t",
            "survivors",
            "mean_scaled",
            "se_scaled",
            "predicted_mean",
            "z_mean",
            "limit",
            "z_limit",
            "mean_scaled_count",
            "predicted_count",
            "z_count",
            "fraction_mean",
            "fraction_se",
            "fraction_limit",
            "z_fraction",
        ]);
        for r in &self.rows {
            t.push(vec![
                fmt_f64(r.t),
                r.survivors.to_string(),
                fmt_f64(r.mean_scaled),
                fmt_f64(r.se_scaled),
                fmt_opt(r.predicted_mean),
                fmt_opt(r.z_mean),
                fmt_opt(r.limit),
                fmt_opt(r.z_limit),
                fmt_f64(r.mean_scaled_count),
                fmt_f64(r.predicted_count),
                fmt_f64(r.z_count),
                fmt_opt(r.fraction_mean),
                fmt_opt(r.fraction_se),
                fmt_opt(r.fraction_limit),
                fmt_opt(r.z_fraction),
            ]);
        }
        t
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

struct LlnSample {
    phi: Vec<f64>,
    count: Vec<f64>,
    alive: Vec<bool>,
}

pub fn run_lln(exp: &Experiment) -> Result<LlnReport> {
    let cfg = &exp.config;
    exp.require_grid_times(&cfg.horizons)?;
    let ch = exp.characteristic()?;
    let kernel = exp.kernel()?;
    let alpha = exp.alpha();
    let t_max = cfg.max_horizon();

    let mean = match mean_function(&ch) {
        Ok(m) => Some(m),
        Err(Error::Capability(_)) => None,
        Err(e) => return Err(e),
    };
    let a_alpha = mean.as_ref().map(|m| kernel.key_renewal_limit(m.as_ref())).transpose()?;
    let unit: Arc<MeanFn> = Arc::new(|t: f64| if t >= 0.0 { 1.0 } else { 0.0 });
    let c_over_beta = kernel.c_alpha() / kernel.beta();

    let samples = farm(cfg.replicas, |i| {
        let pop = simulate(&exp.law, &StopRule::TimeHorizon(t_max), exp.replica_seed(i))?;
        let mut s = LlnSample { phi: Vec::new(), count: Vec::new(), alive: Vec::new() };
        for &t in &cfg.horizons {
            s.phi.push(counted_process(&pop, ch.as_ref(), t)?);
            s.count.push(pop.total_births(t)? as f64);
            s.alive.push(nerman_w(&pop, alpha, t)? > 0.0);
        }
        Ok(s)
    })?;

    let mut rows = Vec::new();
    for (k, &t) in cfg.horizons.iter().enumerate() {
        let scale = (-alpha * t).exp();
        let phi: Vec<f64> = samples.iter().map(|s| s.phi[k] * scale).collect();
        let count: Vec<f64> = samples.iter().map(|s| s.count[k] * scale).collect();
        let fractions: Vec<f64> =
            samples.iter().filter(|s| s.alive[k]).map(|s| s.phi[k] / s.count[k]).collect();
        let mp = Moments::of(&phi);
        let mc = Moments::of(&count);
        let predicted_mean = mean.as_ref().map(|m| kernel.mean_process(m.as_ref(), t).map(|v| v.value * scale)).transpose()?;
        let predicted_count = kernel.mean_process(unit.as_ref(), t)?.value * scale;
        let fraction_limit = a_alpha.map(|a| a / c_over_beta);
        let (fraction_mean, fraction_se, z_fraction) = if fractions.is_empty() {
            (None, None, None)
        } else {
            let mf = Moments::of(&fractions);
            let se = if mf.n > 1 { mf.se } else { f64::NAN };
            (Some(mf.mean), Some(se), fraction_limit.map(|l| z_score(mf.mean, se, l)))
        };
        rows.push(LlnRow {
            t,
            survivors: fractions.len(),
            mean_scaled: mp.mean,
            se_scaled: mp.se,
            predicted_mean,
            z_mean: predicted_mean.map(|p| z_score(mp.mean, mp.se, p)),
            limit: a_alpha,
            z_limit: a_alpha.map(|a| z_score(mp.mean, mp.se, a)),
            mean_scaled_count: mc.mean,
            se_scaled_count: mc.se,
            predicted_count,
            z_count: z_score(mc.mean, mc.se, predicted_count),
            fraction_mean,
            fraction_se,
            fraction_limit,
            z_fraction,
        });
    }
    if rows.iter().all(|r| r.survivors == 0) {
        return Err(Error::Config(
            "every replica died out; use a law with a larger mean number of children or more replicas".into(),
        ));
    }

    let last = cfg.horizons.len() - 1;
    let extinct: Vec<bool> = samples.iter().map(|s| !s.alive[last]).collect();
    let extinction = extinction_check(&exp.law, t_max, &extinct);
    let ok = |z: Option<f64>| z.is_none_or(|z| z.abs() <= 4.0);
    let passed = rows.iter().all(|r| ok(r.z_mean) && r.z_count.abs() <= 4.0) && extinction.z.abs() <= 4.0;
    Ok(LlnReport {
        characteristic: ch.name(),
        replicas: cfg.replicas,
        alpha,
        beta: kernel.beta(),
        c_alpha: kernel.c_alpha(),
        a_alpha,
        rows,
        extinction,
        passed,
    })
}

// ---------------------------------------------------------------------------
// Normal approximation

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub index: usize,
    pub seed: u64,
    pub survived: bool,
    pub z_t: usize,
    pub z_phi_t: f64,
    /// `W_t`.
    pub w_main: f64,
    /// `W_{t_big}`, the proxy of the martingale limit.
    pub w_ext: f64,
    pub normalized_stat: Option<f64>,
}

pub fn replicas_table(records: &[ReplicaRecord]) -> Table {
    let mut t = Table::new(["index", "seed", "survived", "z_t", "z_phi_t", "w_main", "w_ext", "normalized_stat"]);
    for r in records {
        t.push(vec![
            r.index.to_string(),
            r.seed.to_string(),
            r.survived.to_string(),
            r.z_t.to_string(),
            fmt_f64(r.z_phi_t),
            fmt_f64(r.w_main),
            fmt_f64(r.w_ext),
            fmt_opt(r.normalized_stat),
        ]);
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub characteristic: String,
    pub n_replicas: usize,
    pub n_survived: usize,
    pub t: f64,
    pub t_big: f64,
    pub a_alpha: f64,
    /// The constant actually subtracted (differs from `a_alpha` only under
    /// injected bias).
    pub a_alpha_used: f64,
    pub sigma2_formula: f64,
    pub sigma2_se: f64,
    pub ks_statistic: Option<f64>,
    pub ks_p_value: Option<f64>,
    pub anderson_darling_stat: Option<f64>,
    pub anderson_darling_p_value: Option<f64>,
    /// Sample variance of `e^{-alpha t/2}(Z_t^phi - a e^{alpha t} W) / (W/beta)^{1/2}`.
    pub empirical_variance: Option<f64>,
    pub empirical_variance_se: Option<f64>,
    pub sigma2_ratio: Option<f64>,
    pub sigma2_ratio_se: Option<f64>,
    /// `sigma^2` is zero within its error: no test is run.
    pub degenerate: bool,
    pub p_threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct CltOptions {
    /// Relative error injected into `a_alpha` (negative control).
    pub aalpha_bias: f64,
    /// Overrides the configured `t_big - t`.
    pub delta_w: Option<f64>,
    /// A variance computation to reuse instead of running a new one.
    pub sigma: Option<SigmaReport>,
}

#[derive(Debug, Clone)]
pub struct CltOutcome {
    pub report: CltReport,
    pub records: Vec<ReplicaRecord>,
    pub sigma: SigmaReport,
}

/// Variance constant of the configured characteristic.
pub fn run_sigma(exp: &Experiment, opts: &SigmaOptions) -> Result<SigmaReport> {
    exp.sol.require_simple_regime()?;
    let ch = exp.characteristic()?;
    sigma_squared(&exp.law, ch, &exp.sol, exp.kernel()?, opts)
}

/// Tests `e^{-alpha t/2}(Z_t^phi - a_alpha e^{alpha t} W) / (sigma (W/beta)^{1/2})`
/// against the standard normal over surviving replicas, with `W` replaced
/// by `W_{t_big}`. The test time is the last configured horizon.
pub fn run_clt(exp: &Experiment, opts: &CltOptions) -> Result<CltOutcome> {
    let cfg = &exp.config;
    exp.sol.require_simple_regime()?;
    let t = cfg.max_horizon();
    exp.require_grid_times(&[t])?;
    let delta_w = opts.delta_w.unwrap_or_else(|| exp.delta_w());
    if !(delta_w.is_finite() && delta_w > 0.0) {
        return Err(Error::Config(format!("delta_w must be positive, got {delta_w}")));
    }
    let t_big = t + delta_w;
    let alpha = exp.alpha();
    let beta = exp.sol.beta;
    let ch = exp.characteristic()?;
    let sigma = match &opts.sigma {
        Some(s) => s.clone(),
        None => run_sigma(exp, &exp.sigma_options())?,
    };
    let a_alpha = sigma.a_alpha;
    let a_used = a_alpha * (1.0 + opts.aalpha_bias);
    let degenerate = !(sigma.sigma2 > 3.0 * sigma.se && sigma.sigma2 > 1e-10 * a_alpha * a_alpha.max(1.0));
    let sd = sigma.sigma2.max(0.0).sqrt();

    let records = farm(cfg.replicas, |i| {
        let seed = exp.replica_seed(i);
        let pop = simulate(&exp.law, &StopRule::TimeHorizon(t_big), seed)?;
        let z_phi_t = counted_process(&pop, ch.as_ref(), t)?;
        let w_main = nerman_w(&pop, alpha, t)?;
        let w_ext = nerman_w(&pop, alpha, t_big)?;
        let survived = w_ext > 0.0;
        let normalized_stat = (survived && !degenerate).then(|| {
            (-alpha * t / 2.0).exp() * (z_phi_t - a_used * (alpha * t).exp() * w_ext) / (sd * (w_ext / beta).sqrt())
        });
        Ok(ReplicaRecord { index: i, seed, survived, z_t: pop.total_births(t)?, z_phi_t, w_main, w_ext, normalized_stat })
    })?;
    let n_survived = records.iter().filter(|r| r.survived).count();

    let mut report = CltReport {
        characteristic: ch.name(),
        n_replicas: cfg.replicas,
        n_survived,
        t,
        t_big,
        a_alpha,
        a_alpha_used: a_used,
        sigma2_formula: sigma.sigma2,
        sigma2_se: sigma.se,
        ks_statistic: None,
        ks_p_value: None,
        anderson_darling_stat: None,
        anderson_darling_p_value: None,
        empirical_variance: None,
        empirical_variance_se: None,
        sigma2_ratio: None,
        sigma2_ratio_se: None,
        degenerate,
        p_threshold: cfg.clt.p_threshold,
        passed: false,
    };
    if degenerate {
        return Ok(CltOutcome { report, records, sigma });
    }
    if n_survived < 8 {
        return Err(Error::Config(format!(
            "only {n_survived} of {} replicas survived to t_big = {t_big}; increase replicas",
            cfg.replicas
        )));
    }
    let v: Vec<f64> = records.iter().filter_map(|r| r.normalized_stat).collect();
    let ks = ks_normal(&v);
    let ad = anderson_darling_normal(&v);
    let u: Vec<f64> = v.iter().map(|x| x * sd).collect();
    let m = Moments::of(&u);
    let ratio = sigma.sigma2 / m.variance;
    let ratio_se = ratio * ((sigma.se / sigma.sigma2).powi(2) + (m.variance_se / m.variance).powi(2)).sqrt();
    report.ks_statistic = Some(ks.statistic);
    report.ks_p_value = Some(ks.p_value);
    report.anderson_darling_stat = Some(ad.statistic);
    report.anderson_darling_p_value = Some(ad.p_value);
    report.empirical_variance = Some(m.variance);
    report.empirical_variance_se = Some(m.variance_se);
    report.sigma2_ratio = Some(ratio);
    report.sigma2_ratio_se = Some(ratio_se);
    report.passed = ks.p_value > cfg.clt.p_threshold;
    Ok(CltOutcome { report, records, sigma })
}

/// Effect of the martingale-limit proxy on the test: the KS statistic at
/// `t_big - t = delta_w` and at `2 delta_w`, on the same replicas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyStability {
    pub delta_w: f64,
    pub ks_statistic: f64,
    pub ks_statistic_doubled: f64,
    /// Bootstrap standard deviation of the KS statistic at `delta_w`.
    pub resampling_sd: f64,
    pub stable: bool,
}

pub fn proxy_stability(exp: &Experiment, sigma: &SigmaReport) -> Result<ProxyStability> {
    let delta_w = exp.delta_w();
    let base = run_clt(exp, &CltOptions { sigma: Some(sigma.clone()), ..CltOptions::default() })?;
    let doubled =
        run_clt(exp, &CltOptions { sigma: Some(sigma.clone()), delta_w: Some(2.0 * delta_w), ..CltOptions::default() })?;
    let (Some(d1), Some(d2)) = (base.report.ks_statistic, doubled.report.ks_statistic) else {
        return Err(Error::Unsupported("the variance constant vanishes; there is no statistic to compare".into()));
    };
    let v: Vec<f64> = base.records.iter().filter_map(|r| r.normalized_stat).collect();
    let mut rng = stream(exp.config.master_seed, AUX_STREAM_BASE + (1 << 40));
    let boot: Vec<f64> = (0..200)
        .map(|_| {
            let resample: Vec<f64> = (0..v.len()).map(|_| v[rng.random_range(0..v.len())]).collect();
            ks_normal(&resample).statistic
        })
        .collect();
    let sd = Moments::of(&boot).variance.sqrt();
    Ok(ProxyStability {
        delta_w,
        ks_statistic: d1,
        ks_statistic_doubled: d2,
        resampling_sd: sd,
        stable: (d1 - d2).abs() < sd,
    })
}

// ---------------------------------------------------------------------------
// Fringe census

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeRow {
    pub pattern: String,
    /// Replica mean of `N_T(T_t)` and its renewal prediction `m_t^{phi^T}`.
    pub mean_count: f64,
    pub count_se: f64,
    pub predicted_count: Option<f64>,
    pub z_count: Option<f64>,
    /// Mean of `N_T(T_t) / Z_t` over surviving replicas.
    pub mean_fraction: Option<f64>,
    pub fraction_se: Option<f64>,
    /// `a_alpha(phi^T) beta / c_alpha`.
    pub predicted_fraction: Option<f64>,
    pub z_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeReport {
    pub t: f64,
    pub replicas: usize,
    pub survivors: usize,
    pub rows: Vec<FringeRow>,
    /// Every available `|z_count|` is at most 4.
    pub passed: bool,
}

impl FringeReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new([
            "pattern",
            "mean_count",
            "count_se",
            "predicted_count",
            "z_count",
            "mean_fraction",
            "fraction_se",
            "predicted_fraction",
            "z_fraction",
        ]);
        for r in &self.rows {
            t.push(vec![
                r.pattern.clone(),
                fmt_f64(r.mean_count),
                fmt_f64(r.count_se),
                fmt_opt(r.predicted_count),
                fmt_opt(r.z_count),
                fmt_opt(r.mean_fraction),
                fmt_opt(r.fraction_se),
                fmt_opt(r.predicted_fraction),
                fmt_opt(r.z_fraction),
            ]);
        }
        t
    }
}

/// Patterns of the census: the configured list, else the configured fringe
/// characteristic, else every pattern up to `h_max`.
pub fn census_patterns(cfg: &ExperimentConfig) -> Result<Vec<FringePattern>> {
    let patterns = if !cfg.fringe.patterns.is_empty() {
        cfg.fringe.patterns.iter().map(|p| FringePattern::parse(p)).collect::<Result<Vec<_>>>()?
    } else if let CharacteristicSpec::Fringe { pattern } = &cfg.characteristic {
        vec![FringePattern::parse(pattern)?]
    } else {
        FringePattern::enumerate(cfg.fringe.h_max, cfg.fringe.max_degree)
    };
    if let Some(p) = patterns.iter().find(|p| p.height() > cfg.fringe.h_max) {
        return Err(Error::Config(format!("pattern {p} has height {} above h_max = {}", p.height(), cfg.fringe.h_max)));
    }
    Ok(patterns)
}

pub fn run_fringe_census(exp: &Experiment) -> Result<FringeReport> {
    let cfg = &exp.config;
    let t = cfg.max_horizon();
    exp.require_grid_times(&[t])?;
    let alpha = exp.alpha();
    let kernel = exp.kernel()?;
    let patterns = census_patterns(cfg)?;
    let chars: Vec<SharedCharacteristic> = patterns
        .iter()
        .map(|p| exp.build_characteristic(&CharacteristicSpec::Fringe { pattern: p.to_string() }))
        .collect::<Result<_>>()?;

    let samples = farm(cfg.replicas, |i| {
        let pop = simulate(&exp.law, &StopRule::TimeHorizon(t), exp.replica_seed(i))?;
        let z = pop.total_births(t)? as f64;
        let alive = nerman_w(&pop, alpha, t)? > 0.0;
        let counts = chars.iter().map(|c| counted_process(&pop, c.as_ref(), t)).collect::<Result<Vec<_>>>()?;
        Ok((z, alive, counts))
    })?;
    let survivors = samples.iter().filter(|s| s.1).count();
    if survivors == 0 {
        return Err(Error::Config(
            "every replica died out; use a law with a larger mean number of children or more replicas".into(),
        ));
    }

    let c_over_beta = kernel.c_alpha() / kernel.beta();
    let mut rows = Vec::new();
    for (k, (p, ch)) in patterns.iter().zip(&chars).enumerate() {
        let counts: Vec<f64> = samples.iter().map(|s| s.2[k]).collect();
        let fractions: Vec<f64> = samples.iter().filter(|s| s.1).map(|s| s.2[k] / s.0).collect();
        let mc = Moments::of(&counts);
        let mf = Moments::of(&fractions);
        let (predicted_count, predicted_fraction) = match mean_function(ch) {
            Ok(m) => (
                Some(kernel.mean_process(m.as_ref(), t)?.value),
                Some(kernel.key_renewal_limit(m.as_ref())? / c_over_beta),
            ),
            Err(Error::Capability(_)) => (None, None),
            Err(e) => return Err(e),
        };
        let fraction_se = (mf.n > 1).then_some(mf.se);
        rows.push(FringeRow {
            pattern: p.to_string(),
            mean_count: mc.mean,
            count_se: mc.se,
            predicted_count,
            z_count: predicted_count.map(|m| z_score(mc.mean, mc.se, m)),
            mean_fraction: Some(mf.mean),
            fraction_se,
            predicted_fraction,
            z_fraction: predicted_fraction.zip(fraction_se).map(|(l, se)| z_score(mf.mean, se, l)),
        });
    }
    let passed = rows.iter().all(|r| r.z_count.is_none_or(|z| z.abs() <= 4.0));
    Ok(FringeReport { t, replicas: cfg.replicas, survivors, rows, passed })
}

/// `E[N_T(T_t)]` for every listed pattern, by exhaustive enumeration of a
/// Galton-Watson tree up to generation `t` (lattice time).
///
/// Each leaf of the enumeration carries its exact probability, so the result
/// is exact up to rounding. The number of outcomes grows doubly
/// exponentially; keep `t` and the offspring support small.
pub fn enumerate_gw_fringe(offspring: &[f64], t: u32, patterns: &[FringePattern]) -> Result<Vec<f64>> {
    // A tree is a list of child lists; node 0 is the root, born at 0.
    #[derive(Clone)]
    struct Partial {
        children: Vec<Vec<usize>>,
        generation: Vec<u32>,
        prob: f64,
    }
    let mut totals = vec![0.0; patterns.len()];
    let mut stack = vec![Partial { children: vec![Vec::new()], generation: vec![0], prob: 1.0 }];
    let mut outcomes = 0usize;
    while let Some(tree) = stack.pop() {
        // Nodes born by time t - 1 reproduce within the horizon.
        let next = (0..tree.children.len())
            .find(|&v| tree.generation[v] < t && tree.children[v].is_empty() && !expanded(&tree, v));
        match next {
            Some(v) => {
                for (k, p) in offspring.iter().enumerate() {
                    if *p == 0.0 {
                        continue;
                    }
                    let mut child = tree.clone();
                    child.prob *= p;
                    let g = child.generation[v] + 1;
                    for _ in 0..k {
                        child.children.push(Vec::new());
                        child.generation.push(g);
                        let id = child.children.len() - 1;
                        child.children[v].push(id);
                    }
                    mark_expanded(&mut child, v);
                    stack.push(child);
                }
            }
            None => {
                outcomes += 1;
                if outcomes > 10_000_000 {
                    return Err(Error::Resource("more than 10^7 outcomes in the exhaustive enumeration".into()));
                }
                for (k, pat) in patterns.iter().enumerate() {
                    let count = (0..tree.children.len()).filter(|&u| matches_pattern(&tree.children, u, pat, 0)).count();
                    totals[k] += tree.prob * count as f64;
                }
            }
        }
    }
    return Ok(totals);

    // Expansion is tracked by a sentinel in the generation vector's high bit.
    fn expanded(tree: &Partial, v: usize) -> bool {
        tree.generation[v] & (1 << 31) != 0
    }
    fn mark_expanded(tree: &mut Partial, v: usize) {
        tree.generation[v] |= 1 << 31;
    }
    fn matches_pattern(children: &[Vec<usize>], u: usize, pat: &FringePattern, pn: usize) -> bool {
        let kids = &children[u];
        let want = pat.children_of(pn);
        kids.len() == want.len() && kids.iter().zip(want).all(|(c, w)| matches_pattern(children, *c, pat, *w))
    }
}

// ---------------------------------------------------------------------------
// Martingale traces

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// Time `t` or generation `n`.
    pub x: f64,
    pub mean: f64,
    pub se: f64,
    pub variance: f64,
    pub variance_se: f64,
    pub expected: f64,
    pub z: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub name: String,
    /// `"t"` or `"n"`.
    pub index: String,
    pub points: Vec<TracePoint>,
    /// The variance never drops by more than three combined standard errors.
    pub variance_non_decreasing: bool,
}

impl Trace {
    fn new(name: impl Into<String>, index: &str, xs: &[f64], samples: &[Vec<f64>], expected: f64, z_flag: f64) -> Self {
        let points: Vec<TracePoint> = xs
            .iter()
            .zip(samples)
            .map(|(&x, s)| {
                let m = Moments::of(s);
                let z = z_score(m.mean, m.se, expected);
                TracePoint {
                    x,
                    mean: m.mean,
                    se: m.se,
                    variance: m.variance,
                    variance_se: m.variance_se,
                    expected,
                    z,
                    flagged: !(z.abs() <= z_flag),
                }
            })
            .collect();
        let variance_non_decreasing = points.windows(2).all(|w| {
            let tol = 3.0 * (w[0].variance_se.powi(2) + w[1].variance_se.powi(2)).sqrt();
            w[1].variance >= w[0].variance - tol - 1e-12 * w[0].variance.abs()
        });
        Self { name: name.into(), index: index.to_string(), points, variance_non_decreasing }
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new([self.index.as_str(), "mean", "se", "variance", "variance_se", "expected", "z", "flagged"]);
        for p in &self.points {
            t.push(vec![
                fmt_f64(p.x),
                fmt_f64(p.mean),
                fmt_f64(p.se),
                fmt_f64(p.variance),
                fmt_f64(p.variance_se),
                fmt_f64(p.expected),
                fmt_f64(p.z),
                p.flagged.to_string(),
            ]);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub replicas: usize,
    pub traces: Vec<Trace>,
    /// Traces that could not be produced, with the reason.
    pub refusals: Vec<String>,
    pub flagged: usize,
    pub passed: bool,
}

pub fn run_martingale_suite(exp: &Experiment) -> Result<MartingaleReport> {
    let cfg = &exp.config;
    let alpha = exp.alpha();
    let z_flag = cfg.martingales.z_flag;
    let horizons = &cfg.horizons;
    let t_max = cfg.max_horizon();

    // W^{(i)}(lambda) for every root in the strip and i < k(lambda). The
    // real root alpha with i = 0 is Nerman's martingale itself.
    let mut indices: Vec<(Complex64, u32)> = Vec::new();
    for r in exp.sol.roots.iter().filter(|r| r.re > alpha / 2.0 && r.im >= 0.0) {
        for i in 0..r.multiplicity {
            indices.push((r.lambda(), i));
        }
    }
    if !indices.iter().any(|(l, i)| *i == 0 && l.im == 0.0 && (l.re - alpha).abs() < 1e-9) {
        indices.insert(0, (Complex64::new(alpha, 0.0), 0));
    }

    let values = farm(cfg.replicas, |r| {
        let pop = simulate(&exp.law, &StopRule::TimeHorizon(t_max), exp.replica_seed(r))?;
        let mut out = Vec::with_capacity(indices.len());
        for (lambda, i) in &indices {
            let row =
                horizons.iter().map(|&t| complex_martingale(&pop, *lambda, *i, t)).collect::<Result<Vec<_>>>()?;
            out.push(row);
        }
        Ok(out)
    })?;

    let mut traces = Vec::new();
    let mut refusals = Vec::new();
    for (k, (lambda, i)) in indices.iter().enumerate() {
        let expected = if *i == 0 { 1.0 } else { 0.0 };
        let column = |t_idx: usize, part: fn(&Complex64) -> f64| -> Vec<f64> {
            values.iter().map(|v| part(&v[k][t_idx])).collect()
        };
        let re: Vec<Vec<f64>> = (0..horizons.len()).map(|j| column(j, |z| z.re)).collect();
        if lambda.im == 0.0 && *i == 0 && (lambda.re - alpha).abs() < 1e-9 {
            traces.push(Trace::new("nerman_w", "t", horizons, &re, 1.0, z_flag));
            continue;
        }
        let im: Vec<Vec<f64>> = (0..horizons.len()).map(|j| column(j, |z| z.im)).collect();
        let label = format!("w{i}_{}{:+}i", lambda.re, lambda.im);
        traces.push(Trace::new(format!("{label}_re"), "t", horizons, &re, expected, z_flag));
        traces.push(Trace::new(format!("{label}_im"), "t", horizons, &im, 0.0, z_flag));
    }

    let thetas = cfg.martingales.thetas.clone().unwrap_or_else(|| vec![alpha, alpha - 0.1]);
    let n_max = cfg.martingales.generations;
    if !exp.law.intensity().finite_mass() {
        refusals.push(format!(
            "biggins: {} has infinitely many children per individual, so generation sums are not computable",
            exp.law.describe()
        ));
    } else {
        let mut usable = Vec::new();
        for &theta in &thetas {
            match exp.law.intensity().laplace_real(theta) {
                Ok(m) if m.is_finite() && m > 0.0 => usable.push(theta),
                _ => refusals.push(format!("biggins: mu_hat({theta}) is not finite")),
            }
        }
        let gens: Vec<Vec<Vec<f64>>> = farm(cfg.replicas, |r| {
            let pop = simulate(&exp.law, &StopRule::Generations(n_max), aux_seed(cfg.master_seed, r + 1))?;
            usable.iter().map(|&th| (0..=n_max).map(|n| biggins(&pop, th, n)).collect::<Result<Vec<_>>>()).collect()
        })?;
        let ns: Vec<f64> = (0..=n_max).map(f64::from).collect();
        for (j, theta) in usable.iter().enumerate() {
            let samples: Vec<Vec<f64>> =
                (0..=n_max as usize).map(|n| gens.iter().map(|g| g[j][n]).collect()).collect();
            traces.push(Trace::new(format!("biggins_theta_{theta}"), "n", &ns, &samples, 1.0, z_flag));
        }
    }

    let flagged = traces.iter().flat_map(|t| &t.points).filter(|p| p.flagged).count();
    let passed = flagged == 0 && traces.iter().all(|t| t.variance_non_decreasing);
    Ok(MartingaleReport { replicas: cfg.replicas, traces, refusals, flagged, passed })
}
