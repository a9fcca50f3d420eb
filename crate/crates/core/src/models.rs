//! Birth point processes: exact samplers plus analytic intensity data.
//!
//! Three families are supported:
//!
//! * Galton-Watson: `xi = N delta_1` for an offspring law on `{0, .., K}`.
//! * Fragmentation: children at `-log V_i` for a dislocation `(V_1, .., V_b)`
//!   summing to one, either fixed or uniform on the simplex.
//! * Poisson intensity: a Poisson process on `[0, inf)` with intensity
//!   `a e^{b x}`, `b` in `{-1, 0, 1}`.

use crate::error::{Error, Result, A_ATOM, A_SUPERCRITICAL};
use crate::quadrature::gl16;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

/// Tolerance on probability vectors and dislocations summing to one.
pub const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dislocation {
    /// Deterministic split `(V_1, .., V_b)`.
    Fixed(Vec<f64>),
    /// `(V_1, .., V_b)` uniform on the simplex (Dirichlet(1, .., 1)).
    Uniform { parts: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum LawKind {
    GaltonWatson { offspring: Vec<f64> },
    Fragmentation { dislocation: Dislocation },
    PoissonIntensity { a: f64, b_exp: i32 },
}

/// A validated reproduction law. Construction checks parameter sanity
/// (configuration errors) and the atom-at-zero and supercriticality
/// assumptions.
#[derive(Debug, Clone)]
pub struct BirthLaw {
    kind: LawKind,
    cdf: Vec<f64>,
    data: IntensityData,
}

impl BirthLaw {
    pub fn galton_watson(offspring: Vec<f64>) -> Result<Self> {
        if offspring.is_empty() {
            return Err(Error::Config("offspring vector is empty".into()));
        }
        if offspring.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config("offspring probabilities must be finite and non-negative".into()));
        }
        let total: f64 = offspring.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Config(format!("offspring probabilities sum to {total}, expected 1")));
        }
        let mut cdf = Vec::with_capacity(offspring.len());
        let mut acc = 0.0;
        for p in &offspring {
            acc += p;
            cdf.push(acc);
        }
        *cdf.last_mut().unwrap() = f64::INFINITY;
        Self::finish(LawKind::GaltonWatson { offspring }, cdf)
    }

    pub fn fragmentation_fixed(v: Vec<f64>) -> Result<Self> {
        if v.len() < 2 {
            return Err(Error::Config("a dislocation needs at least two parts".into()));
        }
        if v.iter().any(|x| !x.is_finite() || !(0.0..=1.0).contains(x)) {
            return Err(Error::Config("dislocation parts must lie in [0, 1]".into()));
        }
        let total: f64 = v.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Config(format!("dislocation parts sum to {total}, expected 1")));
        }
        Self::finish(LawKind::Fragmentation { dislocation: Dislocation::Fixed(v) }, Vec::new())
    }

    pub fn fragmentation_uniform(parts: usize) -> Result<Self> {
        if parts < 2 {
            return Err(Error::Config("a dislocation needs at least two parts".into()));
        }
        Self::finish(LawKind::Fragmentation { dislocation: Dislocation::Uniform { parts } }, Vec::new())
    }

    pub fn poisson(a: f64, b_exp: i32) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::Config(format!("Poisson intensity scale must be positive, got {a}")));
        }
        if !(-1..=1).contains(&b_exp) {
            return Err(Error::Config(format!("Poisson exponent must be -1, 0 or 1, got {b_exp}")));
        }
        if b_exp != 0 && a <= 1.0 {
            return Err(Error::Config(format!("Poisson intensity with b = {b_exp} requires a > 1, got a = {a}")));
        }
        Self::finish(LawKind::PoissonIntensity { a, b_exp }, Vec::new())
    }

    fn finish(kind: LawKind, cdf: Vec<f64>) -> Result<Self> {
        let data = IntensityData::from_kind(&kind);
        if data.mu_atom_at_zero >= 1.0 {
            return Err(Error::assumption(
                A_ATOM.0,
                A_ATOM.1,
                format!("mu({{0}}) = {} is not below 1", data.mu_atom_at_zero),
            ));
        }
        if data.mu_mass <= 1.0 {
            return Err(Error::assumption(
                A_SUPERCRITICAL.0,
                A_SUPERCRITICAL.1,
                format!("mean offspring E[N] = {} is not above 1 (subcritical or critical)", data.mu_mass),
            ));
        }
        Ok(Self { kind, cdf, data })
    }

    pub fn kind(&self) -> &LawKind {
        &self.kind
    }

    pub fn intensity(&self) -> &IntensityData {
        &self.data
    }

    /// Short human-readable name used in reports.
    pub fn describe(&self) -> String {
        match &self.kind {
            LawKind::GaltonWatson { offspring } => format!("galton_watson{offspring:?}"),
            LawKind::Fragmentation { dislocation: Dislocation::Fixed(v) } => format!("fragmentation_fixed{v:?}"),
            LawKind::Fragmentation { dislocation: Dislocation::Uniform { parts } } => {
                format!("fragmentation_uniform(parts={parts})")
            }
            LawKind::PoissonIntensity { a, b_exp } => format!("poisson(a={a}, b={b_exp})"),
        }
    }

    /// Starts the birth stream of a freshly born individual. Any finite
    /// randomness of the law (offspring count, dislocation) is drawn now;
    /// Poisson points are drawn lazily by [`BirthStream::next_offset`].
    pub fn stream<R: Rng + ?Sized>(&self, rng: &mut R) -> BirthStream {
        match &self.kind {
            LawKind::GaltonWatson { .. } => {
                let u: f64 = rng.random();
                let n = self.cdf.iter().position(|c| u < *c).unwrap_or(self.cdf.len() - 1);
                BirthStream::listed(vec![1.0; n])
            }
            LawKind::Fragmentation { dislocation } => {
                let mut offsets: Vec<f64> = match dislocation {
                    Dislocation::Fixed(v) => v.iter().filter(|x| **x > 0.0).map(|x| -x.ln()).collect(),
                    Dislocation::Uniform { parts } => {
                        let e: Vec<f64> = (0..*parts).map(|_| Exp1.sample(rng)).collect();
                        let log_total = e.iter().sum::<f64>().ln();
                        e.iter().map(|x| log_total - x.ln()).collect()
                    }
                };
                // Stable sort keeps equal offsets in child-index order.
                offsets.sort_by(|a, b| a.total_cmp(b));
                BirthStream::listed(offsets)
            }
            LawKind::PoissonIntensity { a, b_exp } => BirthStream {
                inner: StreamInner::Poisson { a: *a, b: *b_exp, cumulative: 0.0, done: false },
            },
        }
    }

    /// `E[(xi_hat(theta))^2]` when a closed form is available.
    pub fn second_moment_closed_form(&self, theta: f64) -> Option<f64> {
        match &self.kind {
            LawKind::GaltonWatson { offspring } => {
                let en2: f64 = offspring.iter().enumerate().map(|(k, p)| (k * k) as f64 * p).sum();
                Some((-2.0 * theta).exp() * en2)
            }
            LawKind::Fragmentation { dislocation: Dislocation::Fixed(v) } => {
                let s: f64 = v.iter().filter(|x| **x > 0.0).map(|x| x.powf(theta)).sum();
                Some(s * s)
            }
            LawKind::Fragmentation { .. } => None,
            LawKind::PoissonIntensity { a, b_exp } => {
                let b = *b_exp as f64;
                if theta <= b {
                    Some(f64::INFINITY)
                } else {
                    // Campbell: Var = int e^{-2 theta x} mu(dx), mean = mu_hat(theta).
                    Some(a / (2.0 * theta - b) + (a / (theta - b)).powi(2))
                }
            }
        }
    }
}

/// Lazily generated, non-decreasing birth offsets of one individual.
#[derive(Debug, Clone)]
pub struct BirthStream {
    inner: StreamInner,
}

#[derive(Debug, Clone)]
enum StreamInner {
    Listed { offsets: Vec<f64>, next: usize },
    Poisson { a: f64, b: i32, cumulative: f64, done: bool },
}

impl BirthStream {
    fn listed(offsets: Vec<f64>) -> Self {
        Self { inner: StreamInner::Listed { offsets, next: 0 } }
    }

    /// Next birth offset, or `None` once the individual has no more children.
    pub fn next_offset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<f64> {
        match &mut self.inner {
            StreamInner::Listed { offsets, next } => {
                let x = offsets.get(*next).copied();
                *next += 1;
                x
            }
            StreamInner::Poisson { a, b, cumulative, done } => {
                if *done {
                    return None;
                }
                let e: f64 = Exp1.sample(rng);
                *cumulative += e;
                // Invert the cumulative intensity a (e^{bx} - 1) / b.
                let s = *cumulative / *a;
                let x = match *b {
                    0 => s,
                    1 => s.ln_1p(),
                    _ => {
                        if s >= 1.0 {
                            *done = true;
                            return None;
                        }
                        -(-s).ln_1p()
                    }
                };
                Some(x)
            }
        }
    }
}

/// Sorted birth offsets of one fresh copy of `xi` restricted to `[0, horizon]`.
pub fn sample_births<R: Rng + ?Sized>(law: &BirthLaw, horizon: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(horizon >= 0.0) {
        return Err(Error::Config(format!("horizon must be non-negative, got {horizon}")));
    }
    let mut stream = law.stream(rng);
    let mut out = Vec::new();
    while let Some(x) = stream.next_offset(rng) {
        if x > horizon {
            break;
        }
        out.push(x);
    }
    Ok(out)
}

/// Analytic data of the intensity measure `mu = E[xi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityData {
    /// `E[N] = mu([0, inf))`, possibly infinite.
    pub mu_mass: f64,
    pub mu_atom_at_zero: f64,
    /// Span `d` when `mu` lives on `d N_0`.
    pub lattice_span: Option<f64>,
    shape: Shape,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    /// Finite set of atoms `(position, mass)`, positions increasing.
    Atoms(Vec<(f64, f64)>),
    /// Density `b (b-1) (1 - e^{-x})^{b-2} e^{-x}` of the uniform split.
    UniformSplit { parts: usize },
    /// Density `a e^{b x}`.
    Exponential { a: f64, b: f64 },
}

impl IntensityData {
    fn from_kind(kind: &LawKind) -> Self {
        match kind {
            LawKind::GaltonWatson { offspring } => {
                let m: f64 = offspring.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
                IntensityData {
                    mu_mass: m,
                    mu_atom_at_zero: 0.0,
                    lattice_span: Some(1.0),
                    shape: Shape::Atoms(vec![(1.0, m)]),
                }
            }
            LawKind::Fragmentation { dislocation: Dislocation::Fixed(v) } => {
                let mut xs: Vec<f64> = v.iter().filter(|x| **x > 0.0).map(|x| -x.ln()).collect();
                xs.sort_by(|a, b| a.total_cmp(b));
                let mut atoms: Vec<(f64, f64)> = Vec::new();
                for x in &xs {
                    match atoms.last_mut() {
                        Some((p, m)) if (*p - x).abs() <= 1e-14 * x.abs().max(1.0) => *m += 1.0,
                        _ => atoms.push((*x, 1.0)),
                    }
                }
                let at_zero = atoms.iter().filter(|(p, _)| *p == 0.0).map(|(_, m)| m).sum();
                let span = lattice_span_of(&xs);
                IntensityData {
                    mu_mass: xs.len() as f64,
                    mu_atom_at_zero: at_zero,
                    lattice_span: span,
                    shape: Shape::Atoms(atoms),
                }
            }
            LawKind::Fragmentation { dislocation: Dislocation::Uniform { parts } } => IntensityData {
                mu_mass: *parts as f64,
                mu_atom_at_zero: 0.0,
                lattice_span: None,
                shape: Shape::UniformSplit { parts: *parts },
            },
            LawKind::PoissonIntensity { a, b_exp } => IntensityData {
                mu_mass: if *b_exp < 0 { *a } else { f64::INFINITY },
                mu_atom_at_zero: 0.0,
                lattice_span: None,
                shape: Shape::Exponential { a: *a, b: *b_exp as f64 },
            },
        }
    }

    pub fn finite_mass(&self) -> bool {
        self.mu_mass.is_finite()
    }

    pub fn is_lattice(&self) -> bool {
        self.lattice_span.is_some()
    }

    /// Abscissa of convergence: `mu_hat(l)` converges for `Re(l) > abscissa`.
    pub fn abscissa(&self) -> f64 {
        match &self.shape {
            Shape::Atoms(_) => f64::NEG_INFINITY,
            Shape::UniformSplit { .. } => -1.0,
            Shape::Exponential { b, .. } => *b,
        }
    }

    fn check_domain(&self, lambda: Complex64) -> Result<()> {
        if lambda.re > self.abscissa() && lambda.re.is_finite() && lambda.im.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "Laplace transform requires Re(lambda) > {}, got {lambda}",
                self.abscissa()
            )))
        }
    }

    /// Atoms of `mu` when it is purely atomic.
    pub fn atoms(&self) -> Option<&[(f64, f64)]> {
        match &self.shape {
            Shape::Atoms(a) => Some(a),
            _ => None,
        }
    }

    /// Lebesgue density of `mu` when it is absolutely continuous.
    pub fn density(&self, x: f64) -> Option<f64> {
        match &self.shape {
            Shape::Atoms(_) => None,
            _ if x < 0.0 => Some(0.0),
            Shape::UniformSplit { parts } => {
                let b = *parts as f64;
                Some(b * (b - 1.0) * (-(-x).exp_m1()).powi(*parts as i32 - 2) * (-x).exp())
            }
            Shape::Exponential { a, b } => Some(a * (b * x).exp()),
        }
    }

    /// `mu([0, t])`.
    pub fn cumulative(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match &self.shape {
            Shape::Atoms(atoms) => atoms.iter().filter(|(p, _)| *p <= t).map(|(_, m)| m).sum(),
            Shape::UniformSplit { parts } => *parts as f64 * (-(-t).exp_m1()).powi(*parts as i32 - 1),
            Shape::Exponential { a, b } => {
                if *b == 0.0 {
                    a * t
                } else {
                    a * (b * t).exp_m1() / b
                }
            }
        }
    }

    pub fn laplace(&self, lambda: Complex64) -> Result<Complex64> {
        self.check_domain(lambda)?;
        Ok(match &self.shape {
            Shape::Atoms(atoms) => atoms.iter().map(|(p, m)| (-lambda * p).exp() * m).sum(),
            Shape::UniformSplit { parts } => {
                let mut v = Complex64::new(1.0, 0.0);
                for j in 1..*parts {
                    v *= (j as f64 + 1.0) / (lambda + j as f64);
                }
                v
            }
            Shape::Exponential { a, b } => *a / (lambda - b),
        })
    }

    pub fn laplace_derivative(&self, lambda: Complex64) -> Result<Complex64> {
        self.check_domain(lambda)?;
        Ok(match &self.shape {
            Shape::Atoms(atoms) => atoms.iter().map(|(p, m)| (-lambda * p).exp() * (-m * p)).sum(),
            Shape::UniformSplit { parts } => {
                let v = self.laplace(lambda)?;
                let s: Complex64 = (1..*parts).map(|j| 1.0 / (lambda + j as f64)).sum();
                -v * s
            }
            Shape::Exponential { a, b } => -*a / ((lambda - b) * (lambda - b)),
        })
    }

    pub fn laplace_real(&self, lambda: f64) -> Result<f64> {
        Ok(self.laplace(Complex64::new(lambda, 0.0))?.re)
    }

    /// `int_{(y, inf)} x^j e^{-lambda x} mu(dx)` for `y >= 0`.
    pub fn tail_transform(&self, lambda: Complex64, y: f64, j: u32) -> Result<Complex64> {
        self.check_domain(lambda)?;
        let y = y.max(0.0);
        Ok(match &self.shape {
            Shape::Atoms(atoms) => atoms
                .iter()
                .filter(|(p, _)| *p > y)
                .map(|(p, m)| (-lambda * p).exp() * (m * p.powi(j as i32)))
                .sum(),
            Shape::Exponential { a, b } => {
                // a j! e^{-z} sum_{k<=j} z^k/k! / (lambda-b)^{j+1}, z = (lambda-b) y.
                let c = lambda - b;
                let z = c * y;
                let mut term = Complex64::new(1.0, 0.0);
                let mut sum = term;
                for k in 1..=j {
                    term = term * z / k as f64;
                    sum += term;
                }
                let factorial: f64 = (1..=j).map(|k| k as f64).product();
                (-z).exp() * sum * (*a * factorial) / c.powu(j + 1)
            }
            Shape::UniformSplit { parts } => {
                // Substitute w = e^{-x}: int_0^{e^{-y}} b(b-1)(1-w)^{b-2} w^lambda (-ln w)^j dw.
                let b = *parts as f64;
                let upper = (-y).exp();
                let f = |w: f64| {
                    let lw = w.ln();
                    (lambda * lw).exp() * (b * (b - 1.0) * (1.0 - w).powi(*parts as i32 - 2) * (-lw).powi(j as i32))
                };
                // The integrand may be singular at w = 0 when Re(lambda) < 0;
                // split geometrically towards zero.
                let rule = gl16();
                let mut total = Complex64::new(0.0, 0.0);
                let mut hi = upper;
                for _ in 0..60 {
                    let lo = hi * 0.25;
                    total += rule.integrate_complex(f, lo, hi, 4);
                    hi = lo;
                    if hi < 1e-300 {
                        break;
                    }
                }
                total
            }
        })
    }
}

/// Common grid span of a finite set of non-negative offsets, or `None` when
/// the offsets are not commensurate up to a relative tolerance.
fn lattice_span_of(xs: &[f64]) -> Option<f64> {
    let positive: Vec<f64> = xs.iter().copied().filter(|x| *x > 0.0).collect();
    let scale = positive.iter().copied().fold(0.0, f64::max);
    if positive.is_empty() {
        return None;
    }
    let tol = 1e-9 * scale;
    let mut g = positive[0];
    for &x in &positive[1..] {
        let (mut a, mut b) = (g.max(x), g.min(x));
        let mut steps = 0;
        while b > tol && steps < 64 {
            let r = a % b;
            let r = if b - r <= tol { 0.0 } else { r };
            a = b;
            b = r;
            steps += 1;
        }
        if b > tol {
            return None;
        }
        g = a;
    }
    if g < 1e-6 * scale {
        return None;
    }
    // Snap so every offset is an integer multiple within rounding.
    if positive.iter().all(|x| ((x / g) - (x / g).round()).abs() < 1e-6) {
        Some(g)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn gw_point_mass_births() {
        let law = BirthLaw::galton_watson(vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        let mut rng = stream(7, 0);
        assert_eq!(sample_births(&law, 5.0, &mut rng).unwrap(), vec![1.0, 1.0, 1.0]);
        assert!(sample_births(&law, 0.5, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn fixed_halving_births() {
        let law = BirthLaw::fragmentation_fixed(vec![0.5, 0.5]).unwrap();
        let mut rng = stream(7, 0);
        let b = sample_births(&law, 1.0, &mut rng).unwrap();
        assert_eq!(b, vec![2f64.ln(), 2f64.ln()]);
    }

    #[test]
    fn invalid_parameters_are_configuration_errors() {
        assert!(matches!(BirthLaw::poisson(1.0, 1), Err(Error::Config(_))));
        assert!(matches!(BirthLaw::poisson(0.5, -1), Err(Error::Config(_))));
        assert!(matches!(BirthLaw::poisson(2.0, 2), Err(Error::Config(_))));
        assert!(matches!(BirthLaw::galton_watson(vec![0.5, 0.6]), Err(Error::Config(_))));
        assert!(matches!(BirthLaw::fragmentation_fixed(vec![0.3, 0.3]), Err(Error::Config(_))));
        let mut rng = stream(1, 1);
        let law = BirthLaw::poisson(1.0, 0).unwrap();
        assert!(matches!(sample_births(&law, -1.0, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn subcritical_and_atom_at_zero_are_assumption_errors() {
        match BirthLaw::galton_watson(vec![0.3, 0.5, 0.2]) {
            Err(Error::Assumption { label, .. }) => assert_eq!(label, "A.2"),
            other => panic!("unexpected {other:?}"),
        }
        match BirthLaw::fragmentation_fixed(vec![1.0, 0.0]) {
            Err(Error::Assumption { label, .. }) => assert_eq!(label, "A.1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn laplace_closed_forms() {
        let gw = BirthLaw::galton_watson(vec![0.0, 0.0, 1.0]).unwrap();
        assert!((gw.intensity().laplace_real(2f64.ln()).unwrap() - 1.0).abs() < 1e-15);
        let p = BirthLaw::poisson(2.0, -1).unwrap();
        assert!((p.intensity().laplace_real(1.0).unwrap() - 1.0).abs() < 1e-15);
        let f = BirthLaw::fragmentation_fixed(vec![0.5, 0.5]).unwrap();
        assert!((f.intensity().laplace_real(1.0).unwrap() - 1.0).abs() < 1e-15);
        let u = BirthLaw::fragmentation_uniform(3).unwrap();
        assert!((u.intensity().laplace_real(1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((u.intensity().laplace_real(0.0).unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn domain_is_enforced() {
        let p = BirthLaw::poisson(2.0, 0).unwrap();
        assert!(matches!(p.intensity().laplace_real(-0.5), Err(Error::Domain(_))));
        let u = BirthLaw::fragmentation_uniform(2).unwrap();
        assert!(matches!(u.intensity().laplace_real(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn lattice_detection() {
        let span = |v: Vec<f64>| BirthLaw::fragmentation_fixed(v).unwrap().intensity().lattice_span;
        assert!((span(vec![0.5, 0.5]).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!((span(vec![0.5, 0.25, 0.25]).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(span(vec![0.25, 0.75]).is_none());
        assert_eq!(BirthLaw::poisson(1.0, 0).unwrap().intensity().lattice_span, None);
        assert_eq!(BirthLaw::galton_watson(vec![0.0, 0.0, 1.0]).unwrap().intensity().lattice_span, Some(1.0));
    }

    #[test]
    fn tail_transform_matches_quadrature_for_poisson() {
        let law = BirthLaw::poisson(1.5, 1).unwrap();
        let lambda = Complex64::new(2.5, 0.7);
        for j in 0..3u32 {
            let got = law.intensity().tail_transform(lambda, 0.8, j).unwrap();
            let want = gl16().integrate_complex(
                |x| (-lambda * x).exp() * (1.5 * x.exp() * x.powi(j as i32)),
                0.8,
                60.0,
                400,
            );
            assert!((got - want).norm() < 1e-10, "j={j}: {got} vs {want}");
        }
    }

    #[test]
    fn uniform_split_tail_matches_density_quadrature() {
        let law = BirthLaw::fragmentation_uniform(3).unwrap();
        let d = law.intensity();
        let got = d.tail_transform(Complex64::new(1.0, 0.0), 0.4, 0).unwrap().re;
        let want = gl16().integrate(|x| (-x).exp() * d.density(x).unwrap(), 0.4, 50.0, 400);
        assert!((got - want).abs() < 1e-10);
    }

    #[test]
    fn poisson_finite_stream_terminates() {
        let law = BirthLaw::poisson(3.0, -1).unwrap();
        let mut rng = stream(3, 0);
        let births = sample_births(&law, f64::INFINITY, &mut rng).unwrap();
        assert!(births.windows(2).all(|w| w[0] <= w[1]));
        assert!(births.iter().all(|x| x.is_finite()));
    }
}
