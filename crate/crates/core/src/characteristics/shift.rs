//! Characteristics shifted by a deterministic function convolved with the
//! individual's own birth process: `phi'(t) = phi(t) + (g * xi)(t)`.

use super::Characteristic;
use crate::error::{Error, Result};
use crate::genealogy::{NodeId, Population};
use crate::models::{BirthLaw, IntensityData};
use crate::quadrature::gl16;
use std::sync::Arc;

/// A deterministic function `g` together with what is needed to average
/// `(g * xi)(t)` over the law.
pub trait Shift: Send + Sync {
    fn value(&self, t: f64) -> f64;

    /// `(g * mu)(t) = int g(t - x) mu(dx)`.
    fn convolve_intensity(&self, data: &IntensityData, t: f64) -> Result<f64>;

    /// `int_{(y, inf)} g(t - x) mu(dx)` for `y >= t`, i.e. the expected
    /// contribution of births beyond a truncation point.
    fn tail(&self, data: &IntensityData, t: f64, y: f64) -> Result<f64>;

    fn vanishes_on_negative(&self) -> bool;
}

/// A shift given by a closure vanishing on the negative half-line.
#[derive(Clone)]
pub struct FnShift {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl FnShift {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f) }
    }
}

impl Shift for FnShift {
    fn value(&self, t: f64) -> f64 {
        if t < 0.0 {
            0.0
        } else {
            (self.f)(t)
        }
    }

    fn convolve_intensity(&self, data: &IntensityData, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Ok(0.0);
        }
        if let Some(atoms) = data.atoms() {
            return Ok(atoms.iter().map(|(p, m)| m * self.value(t - p)).sum());
        }
        let panels = ((t / 0.05).ceil() as usize).max(1);
        Ok(gl16().integrate(|x| self.value(t - x) * data.density(x).unwrap_or(0.0), 0.0, t, panels))
    }

    fn tail(&self, _: &IntensityData, t: f64, y: f64) -> Result<f64> {
        if y < t {
            return Err(Error::Domain(format!("tail of a shift requested below the evaluation time ({y} < {t})")));
        }
        Ok(0.0)
    }

    fn vanishes_on_negative(&self) -> bool {
        true
    }
}

#[derive(Clone)]
pub struct ShiftedCharacteristic {
    base: Arc<dyn Characteristic>,
    shift: Arc<dyn Shift>,
    law: BirthLaw,
}

impl ShiftedCharacteristic {
    pub fn new(base: Arc<dyn Characteristic>, shift: Arc<dyn Shift>, law: &BirthLaw) -> Self {
        Self { base, shift, law: law.clone() }
    }

    /// `(g * xi_u)(t)` over the individual's own births.
    pub fn own_convolution(&self, pop: &Population, u: NodeId, t: f64) -> Result<f64> {
        let node = pop.node(u);
        if !node.expanded {
            return Err(Error::Undecidable(format!("births of node {:?} were not simulated", pop.label(u))));
        }
        let s = node.birth_time;
        let mut total = 0.0;
        for c in pop.children(u) {
            total += self.shift.value(t - (pop.birth_time(c) - s));
        }
        if pop.cutoff().is_finite() {
            total += self.shift.tail(self.law.intensity(), t, pop.cutoff() - s)?;
        }
        Ok(total)
    }
}

impl Characteristic for ShiftedCharacteristic {
    fn depth(&self) -> u32 {
        self.base.depth()
    }

    fn vanishes_on_negative(&self) -> bool {
        self.base.vanishes_on_negative() && self.shift.vanishes_on_negative()
    }

    fn random_part_vanishes_on_negative(&self) -> bool {
        self.base.vanishes_on_negative()
    }

    fn eval(&self, pop: &Population, u: NodeId, t: f64) -> Result<f64> {
        Ok(self.base.eval(pop, u, t)? + self.own_convolution(pop, u, t)?)
    }

    fn mean(&self, t: f64) -> Option<Result<f64>> {
        let base = self.base.mean(t)?;
        Some(base.and_then(|b| Ok(b + self.shift.convolve_intensity(self.law.intensity(), t)?)))
    }

    fn projection(&self, pop: &Population, u: NodeId, k: u32, t: f64) -> Option<Result<f64>> {
        let base = self.base.projection(pop, u, k, t)?;
        Some(base.and_then(|b| Ok(b + self.own_convolution(pop, u, t)?)))
    }

    fn name(&self) -> String {
        format!("{}+shift", self.base.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characteristics::{chi, chi_limits, Deterministic, Projector};
    use crate::genealogy::{simulate, simulate_with, StopRule};
    use crate::rng::stream;

    #[test]
    fn zero_shift_is_identity() {
        let law = BirthLaw::galton_watson(vec![0.1, 0.3, 0.6]).unwrap();
        let base: Arc<dyn Characteristic> = Arc::new(crate::characteristics::Indicator);
        let sh = ShiftedCharacteristic::new(base.clone(), Arc::new(FnShift::new(|_| 0.0)), &law);
        let pop = simulate(&law, &StopRule::TimeHorizon(4.0), 5).unwrap();
        for (id, n) in pop.nodes().filter(|(_, n)| n.expanded).take(50) {
            let t = 4.0 - n.birth_time;
            assert_eq!(sh.eval(&pop, id, t).unwrap(), base.eval(&pop, id, t).unwrap());
        }
    }

    #[test]
    fn unit_step_shift_counts_own_children() {
        let law = BirthLaw::poisson(2.0, -1).unwrap();
        let sh = ShiftedCharacteristic::new(
            Arc::new(Deterministic::zero()),
            Arc::new(FnShift::new(|_| 1.0)),
            &law,
        );
        let pop = simulate(&law, &StopRule::TimeHorizon(3.0), 5).unwrap();
        for t in [0.1, 0.7, 2.0] {
            let n = pop.children(NodeId::ROOT).filter(|c| pop.birth_time(*c) <= t).count();
            assert_eq!(sh.eval(&pop, NodeId::ROOT, t).unwrap(), n as f64);
        }
        // E[(1 * xi)(t)] = mu([0, t]).
        let m = sh.mean(1.0).unwrap().unwrap();
        assert!((m - law.intensity().cumulative(1.0)).abs() < 1e-10);
    }

    #[test]
    fn chi_of_shifted_deterministic_characteristic_has_mean_zero() {
        let law = BirthLaw::galton_watson(vec![0.1, 0.3, 0.6]).unwrap();
        let sh = ShiftedCharacteristic::new(
            Arc::new(Deterministic::new("one", true, |_| 1.0)),
            Arc::new(FnShift::new(|t| (-t).exp())),
            &law,
        );
        let proj = Projector::new(&law, 0).unwrap();
        let mut rng = stream(21, 0);
        let n = 20_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let pop = simulate_with(&law, &chi_limits(&sh, 2.5, 0.0), &mut rng).unwrap();
            let c = chi(&sh, &pop, NodeId::ROOT, 2.5, &proj, &mut rng).unwrap();
            sum += c;
            sum_sq += c * c;
        }
        let mean = sum / n as f64;
        let se = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!(se > 0.0);
        assert!(mean.abs() < 4.0 * se, "mean {mean} se {se}");
    }
}
