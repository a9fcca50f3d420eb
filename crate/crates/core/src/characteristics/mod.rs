//! Random characteristics: evaluation, conditional projections, and the
//! centred characteristic `chi`.
//!
//! A characteristic `phi` with dependence depth `h` reads an individual's
//! own life and the lives of its descendants down to generation `h`.
//! `phi_u(t)` is evaluated at *local* time `t = (absolute time) - S(u)`.

mod fringe;
mod shift;

pub use fringe::{FringeCharacteristic, FringePattern};
pub use shift::{FnShift, Shift, ShiftedCharacteristic};

use crate::error::{Error, Result};
use crate::genealogy::{resample_below, simulate_with, subtree_seed, Lookahead, NodeId, Population, SimLimits};
use crate::models::BirthLaw;
use crate::rng::SimRng;
use num_complex::Complex64;
use std::sync::Arc;

pub trait Characteristic: Send + Sync {
    /// Dependence depth `h` (0 for individual characteristics).
    fn depth(&self) -> u32;

    fn vanishes_on_negative(&self) -> bool {
        true
    }

    /// Whether the random part vanishes on the negative half-line; only a
    /// deterministic-given-own-life term may survive there.
    fn random_part_vanishes_on_negative(&self) -> bool {
        self.vanishes_on_negative()
    }

    /// `L` such that `phi(t) = 0` for all `t < -L`, when known.
    fn negative_support(&self) -> Option<f64> {
        self.vanishes_on_negative().then_some(0.0)
    }

    fn eval(&self, pop: &Population, u: NodeId, t: f64) -> Result<f64>;

    /// Closed-form `E[phi](t)`, when available.
    fn mean(&self, t: f64) -> Option<Result<f64>>;

    /// Closed-form projection `phi^{(k)}` for `1 <= k <= h`, when available.
    fn projection(&self, _pop: &Population, _u: NodeId, _k: u32, _t: f64) -> Option<Result<f64>> {
        None
    }

    fn name(&self) -> String;
}

pub type SharedCharacteristic = Arc<dyn Characteristic>;

/// `phi = 1_{[0, inf)}`; counts births.
#[derive(Debug, Clone, Copy, Default)]
pub struct Indicator;

impl Characteristic for Indicator {
    fn depth(&self) -> u32 {
        0
    }
    fn eval(&self, _: &Population, _: NodeId, t: f64) -> Result<f64> {
        Ok(if t >= 0.0 { 1.0 } else { 0.0 })
    }
    fn mean(&self, t: f64) -> Option<Result<f64>> {
        Some(Ok(if t >= 0.0 { 1.0 } else { 0.0 }))
    }
    fn name(&self) -> String {
        "indicator".into()
    }
}

/// A deterministic characteristic `phi(t) = f(t)`.
#[derive(Clone)]
pub struct Deterministic {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    vanishes: bool,
    label: String,
}

impl Deterministic {
    pub fn new(label: impl Into<String>, vanishes_on_negative: bool, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f), vanishes: vanishes_on_negative, label: label.into() }
    }

    pub fn zero() -> Self {
        Self::new("zero", true, |_| 0.0)
    }
}

impl Characteristic for Deterministic {
    fn depth(&self) -> u32 {
        0
    }
    fn vanishes_on_negative(&self) -> bool {
        self.vanishes
    }
    fn eval(&self, _: &Population, _: NodeId, t: f64) -> Result<f64> {
        Ok(if self.vanishes && t < 0.0 { 0.0 } else { (self.f)(t) })
    }
    fn mean(&self, t: f64) -> Option<Result<f64>> {
        Some(Ok(if self.vanishes && t < 0.0 { 0.0 } else { (self.f)(t) }))
    }
    fn name(&self) -> String {
        self.label.clone()
    }
}

/// `phi(t) = 1_{[0,inf)}(t) e^{alpha t} int_{(t, inf)} e^{-alpha x} xi(dx)`,
/// whose counted process is `e^{alpha t} W_t`.
#[derive(Debug, Clone)]
pub struct Nerman {
    alpha: f64,
    law: BirthLaw,
}

impl Nerman {
    pub fn new(law: &BirthLaw, alpha: f64) -> Self {
        Self { alpha, law: law.clone() }
    }
}

impl Characteristic for Nerman {
    fn depth(&self) -> u32 {
        0
    }

    fn eval(&self, pop: &Population, u: NodeId, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Ok(0.0);
        }
        let node = pop.node(u);
        if !node.expanded {
            return Err(Error::Undecidable(format!("births of node {:?} were not simulated", pop.label(u))));
        }
        let s = node.birth_time;
        let mut total = 0.0;
        for c in pop.children(u) {
            let x = pop.birth_time(c) - s;
            if x > t {
                total += (-self.alpha * (x - t)).exp();
            }
        }
        if pop.cutoff().is_finite() {
            let y = pop.cutoff() - s;
            let tail = self.law.intensity().tail_transform(Complex64::new(self.alpha, 0.0), y, 0)?.re;
            total += tail * (self.alpha * t).exp();
        }
        Ok(total)
    }

    fn mean(&self, t: f64) -> Option<Result<f64>> {
        if t < 0.0 {
            return Some(Ok(0.0));
        }
        Some(
            self.law
                .intensity()
                .tail_transform(Complex64::new(self.alpha, 0.0), t, 0)
                .map(|v| v.re * (self.alpha * t).exp()),
        )
    }

    fn name(&self) -> String {
        "nerman".into()
    }
}

/// `Z_t^phi = sum_u phi_u(t - S(u))` over the materialized individuals.
pub fn counted_process(pop: &Population, ch: &dyn Characteristic, t: f64) -> Result<f64> {
    let reach = match ch.negative_support() {
        Some(l) => t + l,
        None => {
            return Err(Error::Undecidable(format!(
                "characteristic {} has unbounded support on the negative half-line",
                ch.name()
            )))
        }
    };
    if reach > pop.horizon() {
        let first = pop.nodes().find(|(_, n)| n.birth_time > pop.horizon()).map(|(id, _)| pop.label(id));
        return Err(Error::Undecidable(format!(
            "contributions up to time {reach} are needed but the population ends at {}; first unsimulated node {:?}",
            pop.horizon(),
            first
        )));
    }
    let mut total = 0.0;
    for (id, n) in pop.nodes() {
        if n.birth_time <= reach {
            total += ch.eval(pop, id, t - n.birth_time)?;
        }
    }
    Ok(total)
}

/// Computes conditional projections `phi^{(k)}`, falling back to nested
/// Monte Carlo over resampled descendants when no closed form exists.
#[derive(Debug, Clone)]
pub struct Projector {
    law: BirthLaw,
    /// Nested Monte Carlo sample count; 0 disables the fallback.
    pub nested_samples: usize,
    lookahead: f64,
}

impl Projector {
    pub fn new(law: &BirthLaw, nested_samples: usize) -> Result<Self> {
        let lookahead = crate::genealogy::auto_lookahead(law)?;
        Ok(Self { law: law.clone(), nested_samples, lookahead })
    }

    pub fn law(&self) -> &BirthLaw {
        &self.law
    }

    /// `phi_u^{(k)}(t)`: `k = 0` gives the mean, `k >= h + 1` the value itself.
    pub fn project(&self, ch: &dyn Characteristic, pop: &Population, u: NodeId, k: u32, t: f64, rng: &mut SimRng) -> Result<f64> {
        let h = ch.depth();
        if k > h {
            return ch.eval(pop, u, t);
        }
        if t < 0.0 && ch.vanishes_on_negative() {
            return Ok(0.0);
        }
        if k == 0 {
            if let Some(m) = ch.mean(t) {
                return m;
            }
            return self.nested_mean(ch, t, rng);
        }
        if let Some(p) = ch.projection(pop, u, k, t) {
            return p;
        }
        self.nested(ch, pop, u, k, t, rng)
    }

    fn limits(&self, ch: &dyn Characteristic, t: f64) -> (SimLimits, f64) {
        let horizon = t.max(0.0);
        let cutoff = if self.lookahead.is_finite() { horizon + self.lookahead } else { f64::INFINITY };
        let limits = SimLimits {
            horizon,
            max_generation: Some(ch.depth() + 1),
            weight_threshold: None,
            lookahead: Lookahead::Fixed(self.lookahead),
            node_cap: crate::genealogy::DEFAULT_NODE_CAP,
        };
        (limits, cutoff)
    }

    fn require_nested(&self, ch: &dyn Characteristic) -> Result<()> {
        if self.nested_samples == 0 {
            return Err(Error::Capability(format!(
                "characteristic {} has no closed-form projection and nested Monte Carlo is disabled",
                ch.name()
            )));
        }
        Ok(())
    }

    /// Nested Monte Carlo estimate of `E[phi](t)`.
    pub fn nested_mean(&self, ch: &dyn Characteristic, t: f64, rng: &mut SimRng) -> Result<f64> {
        self.require_nested(ch)?;
        let (limits, _) = self.limits(ch, t);
        let mut sum = 0.0;
        for _ in 0..self.nested_samples {
            let pop = simulate_with(&self.law, &limits, rng)?;
            sum += ch.eval(&pop, NodeId::ROOT, t)?;
        }
        Ok(sum / self.nested_samples as f64)
    }

    /// Nested Monte Carlo estimate of `phi_u^{(k)}(t)`: generations below
    /// depth `k` are taken from `pop`, deeper lives are resampled.
    pub fn nested(&self, ch: &dyn Characteristic, pop: &Population, u: NodeId, k: u32, t: f64, rng: &mut SimRng) -> Result<f64> {
        self.require_nested(ch)?;
        let (limits, cutoff) = self.limits(ch, t);
        let cutoff = cutoff.min(pop.cutoff() - pop.birth_time(u));
        let seed = subtree_seed(pop, u, k, cutoff)?;
        let mut sum = 0.0;
        for _ in 0..self.nested_samples {
            let sub = resample_below(&self.law, &seed, &limits, cutoff, rng)?;
            sum += ch.eval(&sub, NodeId::ROOT, t)?;
        }
        Ok(sum / self.nested_samples as f64)
    }
}

/// Population limits for a `chi` evaluation at `s`: generations `0..=h`
/// expanded, and for characteristics that do not vanish on the negative
/// half-line, births up to `pad` after `s`.
pub fn chi_limits(ch: &dyn Characteristic, s: f64, pad: f64) -> SimLimits {
    let horizon = if ch.vanishes_on_negative() { s.max(0.0) } else { s.max(0.0) + pad };
    SimLimits {
        horizon,
        max_generation: Some(ch.depth() + 1),
        weight_threshold: None,
        lookahead: Lookahead::Auto,
        node_cap: crate::genealogy::DEFAULT_NODE_CAP,
    }
}

/// `chi^{(phi,h)}(s) = sum_{|v| <= h} (phi_v^{(h+1-|v|)} - phi_v^{(h-|v|)})(s - S(v))`,
/// for the individual `u` of `pop` acting as root.
pub fn chi(ch: &dyn Characteristic, pop: &Population, u: NodeId, s: f64, projector: &Projector, rng: &mut SimRng) -> Result<f64> {
    let h = ch.depth();
    let base_time = pop.birth_time(u);
    let base_gen = pop.node(u).generation;
    let mut total = 0.0;
    let mut stack = vec![u];
    while let Some(v) = stack.pop() {
        let j = pop.node(v).generation - base_gen;
        let local = s - (pop.birth_time(v) - base_time);
        // Individuals born after the simulated horizon only carry the
        // deterministic negative-side term; it is dropped (it is of order
        // e^{-alpha * pad}, see `chi_limits`).
        let unsimulated = !pop.node(v).expanded && ch.random_part_vanishes_on_negative();
        let skip = local < 0.0
            && (ch.vanishes_on_negative() || unsimulated || (j < h && ch.random_part_vanishes_on_negative()));
        if !skip {
            let upper = projector.project(ch, pop, v, h + 1 - j, local, rng)?;
            let lower = projector.project(ch, pop, v, h - j, local, rng)?;
            total += upper - lower;
        }
        if j < h {
            stack.extend(pop.children(v));
        }
    }
    Ok(total)
}
