//! Renewal numerics on the tilted intensity `mu_alpha(dx) = e^{-alpha x} mu(dx)`.
//!
//! The renewal measure `nu = sum_i mu^{*i}` (including the atom at zero) is
//! represented through its tilt `nu_alpha(dx) = e^{-alpha x} nu(dx)`, which
//! converges to `ell/beta`. All quantities are computed from the deviation
//! `nu_alpha - ell/beta`, so remainders such as `m_t - a_alpha e^{alpha t}`
//! never suffer from cancellation between two large numbers.
//!
//! Mean functions passed in here must vanish on the negative half-line.

use crate::characteristics::{chi, chi_limits, Characteristic, Projector, Shift, ShiftedCharacteristic};
use crate::error::{Error, Result};
use crate::genealogy::{simulate_with, NodeId};
use crate::models::{BirthLaw, IntensityData, LawKind};
use crate::output::{fmt_f64, Table};
use crate::quadrature::{cubic_interpolate, gl16, integrate_to_tolerance};
use crate::rng::stream;
use crate::spectral::MalthusianSolution;
use crate::stats::Welford;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub type MeanFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Upper bound on stored renewal atoms for non-lattice atomic laws.
const MAX_RENEWAL_ATOMS: usize = 4_000_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KernelOptions {
    /// Grid step for numerically solved renewal densities (default `0.01/alpha`).
    pub grid_step: Option<f64>,
    /// Range over which the renewal deviation is tabulated (default `60/alpha`).
    pub s_max: Option<f64>,
    /// Solve the renewal equation on a grid even when a closed form exists.
    pub force_grid: bool,
}

#[derive(Debug, Clone)]
enum Mode {
    /// `dev[n] = nu_alpha({n d}) - d/beta`.
    Lattice { span: f64, dev: Vec<f64> },
    /// `nu_alpha = delta_0 + dx/beta` exactly.
    Exponential,
    /// `nu_alpha` as a sorted list of atoms on `[0, s_max]`.
    Atomic { atoms: Vec<(f64, f64)> },
    /// Density of `nu_alpha - delta_0`, minus `1/beta`, on a uniform grid.
    Grid { step: f64, dev: Vec<f64> },
}

/// Tilted renewal measure of a birth law.
#[derive(Debug, Clone)]
pub struct RenewalKernel {
    alpha: f64,
    beta: f64,
    s_max: f64,
    mode: Mode,
}

/// A mean value with an estimate of its numerical error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanValue {
    pub value: f64,
    pub error: f64,
}

impl RenewalKernel {
    pub fn new(law: &BirthLaw, sol: &MalthusianSolution, opts: &KernelOptions) -> Result<Self> {
        let alpha = sol.alpha;
        let beta = sol.beta;
        let data = law.intensity();
        let s_max = opts.s_max.unwrap_or(60.0 / alpha);
        if !(s_max > 0.0 && s_max.is_finite()) {
            return Err(Error::Config(format!("renewal range must be positive, got {s_max}")));
        }
        let mode = if opts.force_grid && data.atoms().is_none() {
            grid_mode(data, alpha, beta, opts.grid_step.unwrap_or(0.01 / alpha), s_max)?
        } else if let Some(span) = data.lattice_span {
            lattice_mode(data, alpha, beta, span, s_max)?
        } else if let Some(atoms) = data.atoms() {
            atomic_mode(atoms, alpha, s_max)?
        } else if matches!(law.kind(), LawKind::PoissonIntensity { .. }) {
            Mode::Exponential
        } else {
            grid_mode(data, alpha, beta, opts.grid_step.unwrap_or(0.01 / alpha), s_max)?
        };
        Ok(Self { alpha, beta, s_max, mode })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lattice_span(&self) -> Option<f64> {
        match &self.mode {
            Mode::Lattice { span, .. } => Some(*span),
            _ => None,
        }
    }

    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    /// `c_alpha = d / (1 - e^{-alpha d})` for span `d`, `1/alpha` otherwise.
    pub fn c_alpha(&self) -> f64 {
        match self.lattice_span() {
            Some(d) => d / -(-self.alpha * d).exp_m1(),
            None => 1.0 / self.alpha,
        }
    }

    /// Tilted renewal mass `nu_alpha({n d})` (lattice kernels only).
    pub fn lattice_mass(&self, n: usize) -> Option<f64> {
        match &self.mode {
            Mode::Lattice { span, dev, .. } => Some(span / self.beta + dev.get(n).copied().unwrap_or(0.0)),
            _ => None,
        }
    }

    /// Density of `nu_alpha - delta_0` at `x > 0` (absolutely continuous kernels).
    pub fn renewal_density(&self, x: f64) -> Option<f64> {
        match &self.mode {
            Mode::Exponential => Some(1.0 / self.beta),
            Mode::Grid { step, dev } => Some(1.0 / self.beta + cubic_interpolate(dev, *step, x)),
            _ => None,
        }
    }

    fn tilted<'a>(&self, f: &'a MeanFn) -> impl Fn(f64) -> f64 + 'a {
        let alpha = self.alpha;
        move |y: f64| if y < 0.0 { 0.0 } else { f(y) * (-alpha * y).exp() }
    }

    /// `int_t^inf f_alpha(y) dy`, summed panel by panel until negligible.
    fn tail_integral(&self, fa: &dyn Fn(f64) -> f64, t: f64) -> Result<f64> {
        let width = 1.0 / self.alpha;
        let mut acc: f64 = 0.0;
        let mut quiet = 0;
        let mut lo = t.max(0.0);
        for _ in 0..100_000 {
            let hi = lo + width;
            let scale = acc.abs().max(fa(lo).abs() * width).max(1e-300);
            let (v, _) = integrate_to_tolerance(fa, lo, hi, 1e-14 * scale, 1 << 9);
            acc += v;
            if v.abs() <= 1e-17 * acc.abs() || (v == 0.0 && acc == 0.0) {
                quiet += 1;
                if quiet >= 4 {
                    return Ok(acc);
                }
            } else {
                quiet = 0;
            }
            if self.alpha * hi > 745.0 {
                return Ok(acc);
            }
            lo = hi;
        }
        Err(Error::Numerical("tilted mean is not integrable on the positive half-line".into()))
    }

    /// `sum_{k >= k0} f_alpha(rho + k d)`.
    fn lattice_tail_sum(&self, fa: &dyn Fn(f64) -> f64, rho: f64, k0: usize, d: f64) -> f64 {
        let mut acc: f64 = 0.0;
        let mut quiet = 0;
        let mut k = k0;
        loop {
            let x = rho + k as f64 * d;
            let v = fa(x);
            acc += v;
            if v.abs() <= 1e-18 * acc.abs() {
                quiet += 1;
                if quiet >= 50 {
                    break;
                }
            } else {
                quiet = 0;
            }
            if self.alpha * x > 745.0 {
                break;
            }
            k += 1;
        }
        acc
    }

    /// Key renewal limit at lattice phase `rho`, i.e.
    /// `beta^{-1} int f(x) e^{-alpha x} ell(dx)` over `x = rho + d Z`.
    fn limit_at_phase(&self, f: &MeanFn, rho: f64) -> Result<f64> {
        let fa = self.tilted(f);
        let v = match &self.mode {
            Mode::Lattice { span, .. } => span / self.beta * self.lattice_tail_sum(&fa, rho, 0, *span),
            _ => self.tail_integral(&fa, 0.0)? / self.beta,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numerical("key renewal limit is not finite".into()))
        }
    }

    /// `a_alpha = beta^{-1} int E[phi](x) e^{-alpha x} ell(dx)`.
    pub fn key_renewal_limit(&self, f: &MeanFn) -> Result<f64> {
        self.limit_at_phase(f, 0.0)
    }

    fn phase(&self, t: f64) -> (usize, f64) {
        match &self.mode {
            Mode::Lattice { span, .. } => {
                let q = t / span;
                let n = (q + 1e-9).floor().max(0.0);
                let rho = (t - n * span).max(0.0);
                (n as usize, if rho < 1e-9 * span { 0.0 } else { rho })
            }
            _ => (0, 0.0),
        }
    }

    /// `int_0^{min(t, s_max)} f_alpha(t - x) dev(x) dx`: composite Simpson on
    /// the grid nodes (a three-eighths panel absorbs an odd cell count), and
    /// Gauss-Legendre with interpolated `dev` on the partial last cell.
    fn grid_convolution(&self, fa: &dyn Fn(f64) -> f64, t: f64, step: f64, dev: &[f64]) -> f64 {
        let upper = t.min(step * (dev.len() - 1) as f64);
        if upper <= 0.0 {
            return 0.0;
        }
        let full = ((upper / step) * (1.0 + 1e-12)).floor() as usize;
        let full = full.min(dev.len() - 1);
        // Rounding in `i * step` must not push the last node below zero.
        let term = |i: usize| fa((t - i as f64 * step).max(0.0)) * dev[i];
        let interpolated = |x: f64| fa((t - x).max(0.0)) * cubic_interpolate(dev, step, x);
        let mut acc = 0.0;
        let simpson_cells = match full {
            0 => 0,
            1 => {
                acc += gl16().integrate(interpolated, 0.0, step, 1);
                0
            }
            n if n % 2 == 0 => n,
            n => {
                let j = n - 3;
                acc += 3.0 * step / 8.0 * (term(j) + 3.0 * term(j + 1) + 3.0 * term(j + 2) + term(j + 3));
                j
            }
        };
        if simpson_cells > 0 {
            let mut s = term(0) + term(simpson_cells);
            for i in 1..simpson_cells {
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * term(i);
            }
            acc += step / 3.0 * s;
        }
        let x0 = full as f64 * step;
        if upper > x0 {
            acc += gl16().integrate(interpolated, x0, upper, 1);
        }
        acc
    }

    /// `e^{-alpha t} m_t^f`.
    fn tilted_mean(&self, f: &MeanFn, t: f64) -> Result<MeanValue> {
        if t < 0.0 {
            return Ok(MeanValue { value: 0.0, error: 0.0 });
        }
        let fa = self.tilted(f);
        Ok(match &self.mode {
            Mode::Lattice { span, dev, .. } => {
                let (n, _) = self.phase(t);
                let c = span / self.beta;
                let mut v = 0.0;
                for k in 0..=n {
                    v += fa(t - k as f64 * span) * (c + dev.get(k).copied().unwrap_or(0.0));
                }
                let err = if n >= dev.len() { dev.last().map_or(0.0, |d| d.abs()) * v.abs() } else { 0.0 };
                MeanValue { value: v, error: err }
            }
            Mode::Exponential => {
                let (i, e) = integrate_to_tolerance(&fa, 0.0, t, 1e-13, 1 << 14);
                MeanValue { value: fa(t) + i / self.beta, error: e / self.beta }
            }
            Mode::Grid { step, dev } => {
                let (i, e) = integrate_to_tolerance(&fa, 0.0, t, 1e-13, 1 << 14);
                let conv = self.grid_convolution(&fa, t, *step, dev);
                let trunc = if t > self.s_max { dev.last().map_or(0.0, |d| d.abs()) * (t - self.s_max) } else { 0.0 };
                MeanValue { value: fa(t) + i / self.beta + conv, error: e / self.beta + trunc + step.powi(4) }
            }
            Mode::Atomic { atoms } => {
                if t > self.s_max {
                    return Err(Error::Config(format!(
                        "renewal atoms are tabulated up to {}; raise s_max to evaluate at {t}",
                        self.s_max
                    )));
                }
                let v = atoms.iter().take_while(|(p, _)| *p <= t).map(|(p, w)| fa(t - p) * w).sum();
                MeanValue { value: v, error: 0.0 }
            }
        })
    }

    /// `m_t^f = int f(t - x) nu(dx)`.
    pub fn mean_process(&self, f: &MeanFn, t: f64) -> Result<MeanValue> {
        let m = self.tilted_mean(f, t)?;
        let g = (self.alpha * t).exp();
        Ok(MeanValue { value: m.value * g, error: m.error * g })
    }

    /// `r(t) = m_t^f - 1_{[0, inf)}(t) a e^{alpha t}`.
    pub fn remainder(&self, f: &MeanFn, a: f64, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Ok(0.0);
        }
        let fa = self.tilted(f);
        let (n, rho) = self.phase(t);
        let a_ref = self.limit_at_phase(f, rho)?;
        let r0 = match &self.mode {
            Mode::Lattice { span, dev, .. } => {
                let mut v = 0.0;
                for (k, d) in dev.iter().enumerate().take(n + 1) {
                    v += fa(t - k as f64 * span) * d;
                }
                v - span / self.beta * self.lattice_tail_sum(&fa, t, 1, *span)
            }
            Mode::Exponential => fa(t) - self.tail_integral(&fa, t)? / self.beta,
            Mode::Grid { step, dev } => {
                fa(t) + self.grid_convolution(&fa, t, *step, dev) - self.tail_integral(&fa, t)? / self.beta
            }
            Mode::Atomic { .. } => self.tilted_mean(f, t)?.value - a_ref,
        };
        Ok((self.alpha * t).exp() * (r0 + (a_ref - a)))
    }

    /// `r(k step)` for `k = 0..n`. Absolutely continuous kernels accumulate
    /// the tail integral cell by cell from the top instead of restarting it
    /// at every point.
    pub fn remainder_table(&self, f: &MeanFn, a: f64, step: f64, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        if matches!(self.mode, Mode::Lattice { .. } | Mode::Atomic { .. }) {
            return (0..n).into_par_iter().map(|k| self.remainder(f, a, k as f64 * step)).collect();
        }
        let fa = self.tilted(f);
        let mut tail = vec![0.0; n];
        tail[n - 1] = self.tail_integral(&fa, (n - 1) as f64 * step)?;
        for k in (0..n - 1).rev() {
            tail[k] = tail[k + 1] + gl16().integrate(&fa, k as f64 * step, (k + 1) as f64 * step, 2);
        }
        let a_ref = self.limit_at_phase(f, 0.0)?;
        (0..n)
            .into_par_iter()
            .map(|k| {
                let t = k as f64 * step;
                let conv = match &self.mode {
                    Mode::Grid { step: h, dev } => self.grid_convolution(&fa, t, *h, dev),
                    _ => 0.0,
                };
                Ok((self.alpha * t).exp() * (fa(t) + conv - tail[k] / self.beta + (a_ref - a)))
            })
            .collect()
    }

    /// Samples `r(t)` on `t_grid` and checks `|r(t)| <= C e^{alpha t/2}/(1+t^2)`:
    /// the log of `|r(t)| (1+t^2) e^{-alpha t/2}` must not grow over the
    /// second half of the grid.
    pub fn check_e1(&self, f: &MeanFn, a_alpha: f64, t_grid: &[f64]) -> Result<MeanExpansion> {
        if t_grid.len() < 4 {
            return Err(Error::Config("the remainder check needs at least four grid points".into()));
        }
        let mut samples = Vec::with_capacity(t_grid.len());
        for &t in t_grid {
            samples.push((t, self.remainder(f, a_alpha, t)?));
        }
        let half = &samples[samples.len() / 2..];
        let nonzero: Vec<(f64, f64)> = half.iter().filter(|(_, r)| r.abs() > 1e-300).copied().collect();
        let (decay, slope) = if nonzero.len() < 2 {
            (f64::NEG_INFINITY, f64::NEG_INFINITY)
        } else {
            let ln_r: Vec<(f64, f64)> = nonzero.iter().map(|(t, r)| (*t, r.abs().ln())).collect();
            let ln_q: Vec<(f64, f64)> = nonzero
                .iter()
                .map(|(t, r)| (*t, r.abs().ln() + (1.0 + t * t).ln() - 0.5 * self.alpha * t))
                .collect();
            (ls_slope(&ln_r), ls_slope(&ln_q))
        };
        let bound = samples
            .iter()
            .map(|(t, r)| r.abs() * (1.0 + t * t) * (-0.5 * self.alpha * t).exp())
            .fold(0.0, f64::max);
        Ok(MeanExpansion {
            a_alpha,
            remainder_samples: samples,
            decay_exponent_fit: decay,
            bound_slope: slope,
            bound_constant: bound,
            passed: slope <= 1e-6,
        })
    }
}

/// Result of [`RenewalKernel::check_e1`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeanExpansion {
    pub a_alpha: f64,
    pub remainder_samples: Vec<(f64, f64)>,
    /// Least-squares slope of `ln |r(t)|` over the second half of the grid.
    pub decay_exponent_fit: f64,
    /// Least-squares slope of `ln(|r(t)| (1+t^2) e^{-alpha t/2})`.
    pub bound_slope: f64,
    /// `max_t |r(t)| (1+t^2) e^{-alpha t/2}` over the grid.
    pub bound_constant: f64,
    pub passed: bool,
}

fn ls_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn interpolate(table: &[f64], step: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return table[0];
    }
    let q = x / step;
    let i = q.floor() as usize;
    if i + 1 >= table.len() {
        return *table.last().expect("non-empty table");
    }
    let w = q - i as f64;
    table[i] * (1.0 - w) + table[i + 1] * w
}

fn lattice_mode(data: &IntensityData, alpha: f64, beta: f64, span: f64, s_max: f64) -> Result<Mode> {
    let atoms = data.atoms().ok_or_else(|| Error::Numerical("lattice law without atoms".into()))?;
    let mut mu: Vec<f64> = Vec::new();
    for (p, m) in atoms {
        let k = (p / span).round() as usize;
        if mu.len() <= k {
            mu.resize(k + 1, 0.0);
        }
        mu[k] += m * (-alpha * p).exp();
    }
    let total: f64 = mu.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::Numerical(format!("tilted intensity has mass {total}, expected 1")));
    }
    let c = span / beta;
    let n_max = (s_max / span).ceil() as usize + 1;
    // tail[n] = mu_alpha((n d, inf)).
    let mut tail = vec![0.0; mu.len()];
    let mut acc = 0.0;
    for k in (0..mu.len()).rev() {
        tail[k] = acc;
        acc += mu[k];
    }
    let mut dev = vec![0.0; n_max + 1];
    let denom = 1.0 - mu[0];
    for n in 0..=n_max {
        let mut v = if n == 0 { 1.0 } else { 0.0 };
        v -= c * tail.get(n).copied().unwrap_or(0.0);
        for k in 1..mu.len().min(n + 1) {
            v += mu[k] * dev[n - k];
        }
        dev[n] = v / denom;
    }
    Ok(Mode::Lattice { span, dev })
}

fn atomic_mode(atoms: &[(f64, f64)], alpha: f64, s_max: f64) -> Result<Mode> {
    use std::collections::HashMap;
    let tilted: Vec<(f64, f64)> =
        atoms.iter().filter(|(p, _)| *p > 0.0).map(|(p, m)| (*p, m * (-alpha * p).exp())).collect();
    if tilted.len() != atoms.len() {
        return Err(Error::Unsupported("renewal measure of a non-lattice law with an atom at zero".into()));
    }
    let mut out = vec![(0.0, 1.0)];
    let mut level: HashMap<Vec<u32>, (f64, f64)> = HashMap::new();
    level.insert(vec![0; tilted.len()], (0.0, 1.0));
    while !level.is_empty() {
        let mut next: HashMap<Vec<u32>, (f64, f64)> = HashMap::new();
        for (counts, (pos, w)) in &level {
            for (i, (p, m)) in tilted.iter().enumerate() {
                let np = pos + p;
                if np > s_max {
                    continue;
                }
                let mut c = counts.clone();
                c[i] += 1;
                let e = next.entry(c).or_insert((np, 0.0));
                e.1 += w * m;
            }
        }
        out.extend(next.values().copied());
        if out.len() > MAX_RENEWAL_ATOMS {
            return Err(Error::Resource(format!(
                "more than {MAX_RENEWAL_ATOMS} renewal atoms below {s_max}; lower s_max"
            )));
        }
        level = next;
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(Mode::Atomic { atoms: out })
}

/// Solution of `u = g + g * u` with `g` the tilted density: trapezoid rule
/// at steps `h`, `h/2` and `h/4`, combined by two rounds of Richardson
/// extrapolation (the trapezoid error expands in even powers of `h`).
fn grid_mode(data: &IntensityData, alpha: f64, beta: f64, step: f64, s_max: f64) -> Result<Mode> {
    if !(step > 0.0) {
        return Err(Error::Config(format!("renewal grid step must be positive, got {step}")));
    }
    let n = (s_max / step).ceil() as usize + 1;
    let t1 = trapezoid_renewal(data, alpha, step, n)?;
    let t2 = trapezoid_renewal(data, alpha, 0.5 * step, 2 * n)?;
    let t4 = trapezoid_renewal(data, alpha, 0.25 * step, 4 * n)?;
    let inv_beta = 1.0 / beta;
    let dev = (0..=n)
        .map(|i| {
            let r1 = (4.0 * t2[2 * i] - t1[i]) / 3.0;
            let r2 = (4.0 * t4[4 * i] - t2[2 * i]) / 3.0;
            (16.0 * r2 - r1) / 15.0 - inv_beta
        })
        .collect();
    Ok(Mode::Grid { step, dev })
}

fn trapezoid_renewal(data: &IntensityData, alpha: f64, step: f64, n: usize) -> Result<Vec<f64>> {
    let g: Vec<f64> = (0..=n)
        .map(|i| {
            let x = i as f64 * step;
            data.density(x).map(|d| d * (-alpha * x).exp())
        })
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Numerical("grid renewal needs an absolutely continuous intensity".into()))?;
    let denom = 1.0 - 0.5 * step * g[0];
    let mut u = vec![0.0; n + 1];
    u[0] = g[0];
    for k in 1..=n {
        let mut s = 0.5 * g[k] * u[0];
        for j in 1..k {
            s += g[k - j] * u[j];
        }
        u[k] = (g[k] + step * s) / denom;
    }
    Ok(u)
}

/// `E[H_Lambda(t)] = a_alpha e^{alpha t}`, defined only when `alpha` is the
/// single, simple root in the strip.
pub fn h_lambda_mean(sol: &MalthusianSolution, a_alpha: f64, t: f64) -> Result<f64> {
    sol.require_simple_regime()?;
    Ok(a_alpha * (sol.alpha * t).exp())
}

/// Closed-form decomposition `nu_alpha - delta_0 = nu_1 + nu_2` for the
/// exponential tilt, with `nu_1(dx) = a(1 - e^{-theta x}) dx` and
/// `nu_2(dx) = a e^{-theta x} dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoneDecomposition {
    pub a: f64,
    pub theta: f64,
}

impl StoneDecomposition {
    pub fn new(law: &BirthLaw, theta: f64) -> Result<Self> {
        match law.kind() {
            LawKind::PoissonIntensity { a, .. } if theta > 0.0 => Ok(Self { a: *a, theta }),
            LawKind::PoissonIntensity { .. } => Err(Error::Config(format!("theta must be positive, got {theta}"))),
            _ => Err(Error::Capability(format!("no closed-form Stone decomposition for {}", law.describe()))),
        }
    }

    pub fn smooth_density(&self, x: f64) -> f64 {
        self.a * -(-self.theta * x).exp_m1()
    }

    pub fn finite_density(&self, x: f64) -> f64 {
        self.a * (-self.theta * x).exp()
    }

    pub fn finite_mass(&self) -> f64 {
        self.a / self.theta
    }
}

/// `g(t) = m_t^{E[phi]} - a_alpha e^{alpha t}` for all real `t`, as a shift
/// for [`ShiftedCharacteristic`]. Values are tabulated up to `t_max`.
pub struct MeanRemainder {
    alpha: f64,
    a: f64,
    step: f64,
    lattice: bool,
    values: Vec<f64>,
    conv: Vec<f64>,
    kernel: Arc<RenewalKernel>,
    mean: Arc<MeanFn>,
}

impl MeanRemainder {
    pub fn new(kernel: Arc<RenewalKernel>, law: &BirthLaw, mean: Arc<MeanFn>, a: f64, t_max: f64) -> Result<Self> {
        let alpha = kernel.alpha;
        let (step, lattice) = match kernel.lattice_span() {
            Some(d) => (d, true),
            None => (0.01 / alpha, false),
        };
        let n = (t_max.max(0.0) / step).ceil() as usize + 2;
        let values = kernel.remainder_table(mean.as_ref(), a, step, n)?;
        let mut this = Self { alpha, a, step, lattice, values, conv: Vec::new(), kernel, mean };
        if law.intensity().atoms().is_none() {
            let data = law.intensity();
            let conv = (0..n)
                .into_par_iter()
                .map(|i| this.convolve_direct(data, i as f64 * step))
                .collect::<Result<Vec<_>>>()?;
            this.conv = conv;
        }
        Ok(this)
    }

    pub fn a_alpha(&self) -> f64 {
        self.a
    }

    fn table_max(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.step
    }

    fn convolve_direct(&self, data: &IntensityData, t: f64) -> Result<f64> {
        let neg = -self.a * (self.alpha * t).exp();
        if t <= 0.0 {
            return Ok(neg * data.laplace_real(self.alpha)?);
        }
        let tail = data.tail_transform(Complex64::new(self.alpha, 0.0), t, 0)?.re;
        let panels = ((t / self.step).ceil() as usize).clamp(1, 4096);
        let body = gl16().integrate(|x| self.value(t - x) * data.density(x).unwrap_or(0.0), 0.0, t, panels);
        Ok(body + neg * tail)
    }
}

impl Shift for MeanRemainder {
    fn value(&self, t: f64) -> f64 {
        if t < 0.0 {
            return -self.a * (self.alpha * t).exp();
        }
        if t <= self.table_max() {
            if self.lattice {
                let q = t / self.step;
                let k = q.round();
                if (q - k).abs() < 1e-9 {
                    return self.values[k as usize];
                }
            } else {
                return interpolate(&self.values, self.step, t);
            }
        }
        self.kernel.remainder(self.mean.as_ref(), self.a, t).unwrap_or(f64::NAN)
    }

    fn convolve_intensity(&self, data: &IntensityData, t: f64) -> Result<f64> {
        if let Some(atoms) = data.atoms() {
            return Ok(atoms.iter().map(|(p, m)| m * self.value(t - p)).sum());
        }
        if t < 0.0 {
            return Ok(-self.a * (self.alpha * t).exp() * data.laplace_real(self.alpha)?);
        }
        if t <= self.table_max() && !self.conv.is_empty() {
            return Ok(interpolate(&self.conv, self.step, t));
        }
        self.convolve_direct(data, t)
    }

    fn tail(&self, data: &IntensityData, t: f64, y: f64) -> Result<f64> {
        if y < t {
            return Err(Error::Domain(format!("tail of a shift requested below the evaluation time ({y} < {t})")));
        }
        Ok(-self.a * (self.alpha * t).exp() * data.tail_transform(Complex64::new(self.alpha, 0.0), y, 0)?.re)
    }

    fn vanishes_on_negative(&self) -> bool {
        false
    }
}

/// Wraps the closed-form mean of a characteristic as a plain function.
pub fn mean_function(ch: &Arc<dyn Characteristic>) -> Result<Arc<MeanFn>> {
    if !ch.vanishes_on_negative() {
        return Err(Error::Unsupported(format!(
            "renewal means are implemented for characteristics vanishing on the negative half-line; {} does not",
            ch.name()
        )));
    }
    match ch.mean(0.0) {
        None => Err(Error::Capability(format!("characteristic {} has no closed-form mean", ch.name()))),
        Some(Err(e)) => Err(e),
        Some(Ok(_)) => {
            let ch = ch.clone();
            Ok(Arc::new(move |t: f64| match ch.mean(t) {
                Some(Ok(v)) => v,
                _ => f64::NAN,
            }))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaOptions {
    /// Monte Carlo samples per grid point.
    pub samples: usize,
    /// Quadrature step for non-lattice laws (default `0.05/alpha`).
    pub grid_step: Option<f64>,
    /// Upper truncation of the positive half-line (default `20/alpha`).
    pub s_max: Option<f64>,
    /// Extra simulated time beyond `s` for the shifted characteristic
    /// (default `14/alpha`).
    pub pad: Option<f64>,
    /// Nested Monte Carlo samples for projections without a closed form.
    pub nested_mc: usize,
    pub seed: u64,
    /// Fail with a budget error when `se > max_relative_se * sigma2`.
    pub max_relative_se: Option<f64>,
}

impl Default for SigmaOptions {
    fn default() -> Self {
        Self {
            samples: 20_000,
            grid_step: None,
            s_max: None,
            pad: None,
            nested_mc: 200,
            seed: 0,
            max_relative_se: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaPoint {
    pub s: f64,
    pub chi_sq_mean: f64,
    pub chi_sq_se: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SigmaReport {
    pub sigma2: f64,
    pub se: f64,
    pub a_alpha: f64,
    /// Grid points; the first one sits at a negative `s` and carries the
    /// whole negative half-line (its weight includes the exact geometric sum).
    pub grid: Vec<SigmaPoint>,
    pub step: f64,
    pub s_max: f64,
    pub truncation_error_bound: f64,
}

impl SigmaReport {
    pub fn grid_table(&self) -> Table {
        let mut t = Table::new(["s", "chi_sq_mean", "chi_sq_se", "weight"]);
        for p in &self.grid {
            t.push(vec![fmt_f64(p.s), fmt_f64(p.chi_sq_mean), fmt_f64(p.chi_sq_se), fmt_f64(p.weight)]);
        }
        t
    }

    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "sigma2": self.sigma2,
            "se": self.se,
            "grid": {
                "points": self.grid.len(),
                "step": self.step,
                "s_max": self.s_max,
            },
            "truncation_error_bound": self.truncation_error_bound,
        })
    }

    /// True when `other` agrees with `self` within three combined standard
    /// errors plus both truncation bounds.
    pub fn agrees_with(&self, other: &SigmaReport) -> bool {
        let tol = 3.0 * (self.se * self.se + other.se * other.se).sqrt()
            + self.truncation_error_bound
            + other.truncation_error_bound;
        (self.sigma2 - other.sigma2).abs() <= tol
    }
}

/// `sigma^2 = int E[chi(s)^2] e^{-alpha s} ell(ds)` for the characteristic
/// shifted by `g = m^{E[phi]} - E[H_Lambda]`.
///
/// On `s < 0` only the shift survives and every contribution carries the
/// factor `e^{alpha s}`, so `E[chi(s)^2] = e^{2 alpha s} E[chi(0-)^2]`: the
/// negative half-line is one Monte Carlo point times a closed-form weight.
pub fn sigma_squared(
    law: &BirthLaw,
    ch: Arc<dyn Characteristic>,
    sol: &MalthusianSolution,
    kernel: Arc<RenewalKernel>,
    opts: &SigmaOptions,
) -> Result<SigmaReport> {
    sol.require_simple_regime()?;
    if opts.samples < 2 {
        return Err(Error::Config("sigma^2 needs at least two samples per grid point".into()));
    }
    let alpha = sol.alpha;
    let mean = mean_function(&ch)?;
    let a = kernel.key_renewal_limit(mean.as_ref())?;
    let pad = opts.pad.unwrap_or(14.0 / alpha);
    let s_max = opts.s_max.unwrap_or(20.0 / alpha);

    // Grid on [0, s_max] with quadrature weights, plus the negative point.
    let (step, mut points): (f64, Vec<(f64, f64)>) = match kernel.lattice_span() {
        Some(d) => {
            let k_max = (s_max / d).ceil() as usize;
            let pts = (0..=k_max).map(|k| (k as f64 * d, d * (-alpha * k as f64 * d).exp())).collect();
            (d, pts)
        }
        None => {
            let h = opts.grid_step.unwrap_or(0.05 / alpha);
            let n = (s_max / h).ceil() as usize;
            let pts = (0..=n)
                .map(|i| {
                    let s = i as f64 * h;
                    let w = if i == 0 || i == n { 0.5 * h } else { h };
                    (s, w * (-alpha * s).exp())
                })
                .collect();
            (h, pts)
        }
    };
    let s_top = points.last().map_or(0.0, |p| p.0);
    let (s_ref, w_neg) = match kernel.lattice_span() {
        Some(d) => (-d, d * (alpha * d).exp() / -(-alpha * d).exp_m1()),
        None => (-1.0 / alpha, (2.0f64).exp() / alpha),
    };
    points.insert(0, (s_ref, w_neg));

    let shift = Arc::new(MeanRemainder::new(kernel.clone(), law, mean, a, s_top + pad + 1.0)?);
    let shifted = ShiftedCharacteristic::new(ch, shift, law);
    let projector = Projector::new(law, opts.nested_mc)?;

    let grid = points
        .par_iter()
        .enumerate()
        .map(|(i, &(s, weight))| {
            let mut rng = stream(opts.seed, i as u64);
            let limits = chi_limits(&shifted, s, pad);
            let mut acc = Welford::new();
            for _ in 0..opts.samples {
                let pop = simulate_with(law, &limits, &mut rng)?;
                let c = chi(&shifted, &pop, NodeId::ROOT, s, &projector, &mut rng)?;
                acc.push(c * c);
            }
            let se = if acc.variance() > 0.0 { acc.std_error() } else { 0.0 };
            Ok(SigmaPoint { s, chi_sq_mean: acc.mean(), chi_sq_se: se, weight })
        })
        .collect::<Result<Vec<_>>>()?;

    let sigma2: f64 = grid.iter().map(|p| p.weight * p.chi_sq_mean).sum();
    let se = grid.iter().map(|p| (p.weight * p.chi_sq_se).powi(2)).sum::<f64>().sqrt();
    if !sigma2.is_finite() {
        return Err(Error::Numerical("sigma^2 integrand is not finite".into()));
    }

    // Beyond s_max, bound the integrand by its largest value over the last
    // few grid points.
    let late = grid.iter().rev().take(5).map(|p| p.chi_sq_mean + 3.0 * p.chi_sq_se).fold(0.0, f64::max);
    let tail_weight = match kernel.lattice_span() {
        Some(d) => d * (-alpha * (s_top + d)).exp() / -(-alpha * d).exp_m1(),
        None => (-alpha * s_top).exp() / alpha,
    };
    let report = SigmaReport {
        sigma2,
        se,
        a_alpha: a,
        grid,
        step,
        s_max: s_top,
        truncation_error_bound: late * tail_weight,
    };
    if let Some(tol) = opts.max_relative_se {
        if report.se > tol * report.sigma2.abs() {
            return Err(Error::Resource(format!(
                "sigma^2 = {} has standard error {} above the requested relative tolerance {tol}; raise the per-point sample count",
                report.sigma2, report.se
            )));
        }
    }
    Ok(report)
}
