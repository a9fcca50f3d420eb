//! Malthusian parameter, tilted mean age `beta`, and the root set of
//! `mu_hat(lambda) = 1` in the closed strip `Re(lambda) >= alpha / 2`.

use crate::error::{Error, Result, A_FINITE_ROOTS, A_MALTHUS, A_SECOND_MOMENT};
use crate::models::{BirthLaw, IntensityData};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Default residual tolerance for the real Malthusian root.
pub const ROOT_TOL: f64 = 1e-12;

/// Settings of the complex root scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Side length of the initial grid boxes.
    pub strip_resolution: f64,
    /// Half-height of the scanned strip in the non-lattice case.
    pub im_max: f64,
    /// Smallest box side reached by contour refinement.
    pub min_box: f64,
    /// Distance from `alpha / 2` within which a root counts as a boundary root.
    pub boundary_tol: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self { strip_resolution: 0.5, im_max: 50.0, min_box: 1e-8, boundary_tol: 1e-7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub re: f64,
    pub im: f64,
    pub multiplicity: u32,
}

impl Root {
    pub fn lambda(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// Result of [`analyze`]: everything the renewal and harness layers need
/// to know about the spectrum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MalthusianSolution {
    pub alpha: f64,
    pub beta: f64,
    pub lattice_span: Option<f64>,
    pub roots: Vec<Root>,
    pub residual: f64,
    pub boundary_roots_present: bool,
}

impl MalthusianSolution {
    /// True when the only root in the strip is `alpha` itself, simple.
    pub fn only_alpha(&self) -> bool {
        self.roots.len() == 1 && self.roots[0].multiplicity == 1 && self.roots[0].im == 0.0
    }

    /// Refuses regimes other than the simple-root branch.
    pub fn require_simple_regime(&self) -> Result<()> {
        if self.boundary_roots_present {
            return Err(Error::Unsupported(
                "roots on the critical line Re(lambda) = alpha/2 are present; the oscillatory variance branch is not implemented".into(),
            ));
        }
        if !self.only_alpha() {
            let extra: Vec<String> = self
                .roots
                .iter()
                .filter(|r| !(r.im == 0.0 && (r.re - self.alpha).abs() < 1e-9))
                .map(|r| format!("{}{:+}i (k={})", r.re, r.im, r.multiplicity))
                .collect();
            return Err(Error::Unsupported(format!(
                "roots other than alpha with Re(lambda) >= alpha/2: {}",
                extra.join(", ")
            )));
        }
        Ok(())
    }
}

/// Solves `mu_hat(alpha) = 1` on the positive reals by a doubling bracket
/// followed by safeguarded Newton steps.
pub fn solve_malthusian(data: &IntensityData, tol: f64) -> Result<f64> {
    let f = |x: f64| data.laplace_real(x).map(|v| v - 1.0);
    let malthus_err = |detail: String| Error::assumption(A_MALTHUS.0, A_MALTHUS.1, detail);

    let mut lo = if data.abscissa() < 0.0 { 0.0 } else { data.abscissa() + 1e-12 * (1.0 + data.abscissa()) };
    let f_lo = f(lo)?;
    if f_lo <= 0.0 {
        return Err(malthus_err(format!("mu_hat({lo}) = {} does not exceed 1", f_lo + 1.0)));
    }
    let mut step = 1.0;
    let mut hi = lo + step;
    let mut f_hi = f(hi)?;
    let mut doublings = 0;
    while f_hi > 0.0 {
        lo = hi;
        step *= 2.0;
        hi = lo + step;
        f_hi = f(hi)?;
        doublings += 1;
        if doublings > 200 || !f_hi.is_finite() {
            return Err(malthus_err("no sign change of mu_hat - 1 found on the positive axis".into()));
        }
    }

    let mut x = 0.5 * (lo + hi);
    for _ in 0..300 {
        let fx = f(x)?;
        if fx.abs() <= tol * 0.01 {
            break;
        }
        if fx > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = data.laplace_derivative(Complex64::new(x, 0.0))?.re;
        let newton = x - fx / d;
        x = if d < 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1e-300) {
            break;
        }
    }
    let residual = f(x)?.abs();
    if residual > tol {
        return Err(Error::Numerical(format!("Malthusian root residual {residual} exceeds tolerance {tol}")));
    }
    if x <= 0.0 {
        return Err(malthus_err(format!("root alpha = {x} is not positive")));
    }
    Ok(x)
}

/// `beta = -mu_hat'(alpha) = int x e^{-alpha x} mu(dx)`.
pub fn compute_beta(data: &IntensityData, alpha: f64) -> Result<f64> {
    let beta = -data.laplace_derivative(Complex64::new(alpha, 0.0))?.re;
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::assumption(A_MALTHUS.0, A_MALTHUS.1, format!("beta = {beta} is not in (0, inf)")));
    }
    Ok(beta)
}

/// A holomorphic function together with its derivative.
pub trait AnalyticFunction: Sync {
    fn value(&self, z: Complex64) -> Complex64;
    fn derivative(&self, z: Complex64) -> Complex64;
}

struct CharacteristicEquation<'a>(&'a IntensityData);

impl AnalyticFunction for CharacteristicEquation<'_> {
    fn value(&self, z: Complex64) -> Complex64 {
        self.0.laplace(z).map(|v| v - 1.0).unwrap_or(Complex64::new(f64::NAN, f64::NAN))
    }
    fn derivative(&self, z: Complex64) -> Complex64 {
        self.0.laplace_derivative(z).unwrap_or(Complex64::new(f64::NAN, f64::NAN))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Rect {
    fn width(&self) -> f64 {
        self.re_max - self.re_min
    }
    fn height(&self) -> f64 {
        self.im_max - self.im_min
    }
    fn center(&self) -> Complex64 {
        Complex64::new(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))
    }
    fn contains(&self, z: Complex64) -> bool {
        z.re >= self.re_min && z.re <= self.re_max && z.im >= self.im_min && z.im <= self.im_max
    }
}

/// The contour passed too close to a zero for a reliable winding count.
#[derive(Debug)]
struct TooClose;

const NEAR_ZERO: f64 = 1e-11;

/// Number of zeros of `f` inside `rect`, counted with multiplicity.
fn winding<F: AnalyticFunction + ?Sized>(f: &F, rect: &Rect) -> std::result::Result<i64, TooClose> {
    let corners = [
        Complex64::new(rect.re_min, rect.im_min),
        Complex64::new(rect.re_max, rect.im_min),
        Complex64::new(rect.re_max, rect.im_max),
        Complex64::new(rect.re_min, rect.im_max),
    ];
    let mut total = 0.0;
    for k in 0..4 {
        let a = corners[k];
        let b = corners[(k + 1) % 4];
        let n = 8;
        let mut za = a;
        let mut fa = f.value(za);
        check(fa)?;
        for i in 1..=n {
            let zb = a + (b - a) * (i as f64 / n as f64);
            let fb = f.value(zb);
            check(fb)?;
            total += arg_increment(f, za, fa, zb, fb, 0)?;
            za = zb;
            fa = fb;
        }
    }
    let w = total / (2.0 * PI);
    let r = w.round();
    if (w - r).abs() > 0.1 {
        return Err(TooClose);
    }
    Ok(r as i64)
}

fn check(v: Complex64) -> std::result::Result<(), TooClose> {
    if !v.re.is_finite() || !v.im.is_finite() || v.norm() < NEAR_ZERO {
        Err(TooClose)
    } else {
        Ok(())
    }
}

fn arg_increment<F: AnalyticFunction + ?Sized>(
    f: &F,
    za: Complex64,
    fa: Complex64,
    zb: Complex64,
    fb: Complex64,
    depth: u32,
) -> std::result::Result<f64, TooClose> {
    let d = (fb / fa).arg();
    let zm = 0.5 * (za + zb);
    let fm = f.value(zm);
    check(fm)?;
    let linear_err = (fm - 0.5 * (fa + fb)).norm();
    if d.abs() <= 0.4 && linear_err <= 0.2 * fa.norm().min(fb.norm()) {
        return Ok(d);
    }
    if depth > 48 {
        return Err(TooClose);
    }
    Ok(arg_increment(f, za, fa, zm, fm, depth + 1)? + arg_increment(f, zm, fm, zb, fb, depth + 1)?)
}

fn polish<F: AnalyticFunction + ?Sized>(f: &F, mut z: Complex64, k: u32) -> Complex64 {
    for _ in 0..200 {
        let fz = f.value(z);
        if fz.norm() == 0.0 {
            break;
        }
        let d = f.derivative(z);
        if d.norm() == 0.0 || !d.re.is_finite() {
            break;
        }
        let step = fz / d * k as f64;
        let next = z - step;
        if !next.re.is_finite() {
            break;
        }
        if f.value(next).norm() > fz.norm() && k == 1 {
            break;
        }
        z = next;
        if step.norm() <= 1e-16 * z.norm().max(1.0) {
            break;
        }
    }
    z
}

fn split(rect: &Rect, jitter: f64) -> [Rect; 4] {
    let xm = rect.re_min + (0.5 + jitter) * rect.width();
    let ym = rect.im_min + (0.5 - 0.7 * jitter) * rect.height();
    [
        Rect { re_min: rect.re_min, re_max: xm, im_min: rect.im_min, im_max: ym },
        Rect { re_min: xm, re_max: rect.re_max, im_min: rect.im_min, im_max: ym },
        Rect { re_min: rect.re_min, re_max: xm, im_min: ym, im_max: rect.im_max },
        Rect { re_min: xm, re_max: rect.re_max, im_min: ym, im_max: rect.im_max },
    ]
}

fn refine<F: AnalyticFunction + ?Sized>(f: &F, rect: Rect, w: i64, min_box: f64, out: &mut Vec<(Complex64, u32)>) -> Result<()> {
    if w == 1 {
        let z = polish(f, rect.center(), 1);
        if rect.contains(z) && f.value(z).norm() < 1e-12 {
            out.push((z, 1));
            return Ok(());
        }
    }
    if rect.width().max(rect.height()) <= min_box {
        out.push((polish(f, rect.center(), w as u32), w as u32));
        return Ok(());
    }
    for attempt in 0..6 {
        let jitter = [0.0, 0.0371, -0.0529, 0.0913, -0.1177, 0.1489][attempt];
        let kids = split(&rect, jitter);
        let counts: std::result::Result<Vec<i64>, TooClose> = kids.iter().map(|r| winding(f, r)).collect();
        match counts {
            Ok(counts) => {
                if counts.iter().sum::<i64>() != w {
                    continue;
                }
                for (r, c) in kids.iter().zip(counts) {
                    if c > 0 {
                        refine(f, *r, c, min_box, out)?;
                    }
                }
                return Ok(());
            }
            Err(TooClose) => continue,
        }
    }
    // A multiple zero makes |f| tiny on small contours; finish with the
    // multiplicity-aware Newton iteration.
    if rect.width().max(rect.height()) < 1e-4 {
        out.push((polish(f, rect.center(), w as u32), w as u32));
        return Ok(());
    }
    Err(Error::Numerical(format!("contour refinement failed around {}", rect.center())))
}

/// All zeros of `f` inside `region`, with multiplicities, found by
/// argument-principle winding counts over a grid of boxes of side about
/// `resolution`, then refined by contour subdivision and Newton polishing.
/// The grid is perturbed and retried when a contour passes too close to a zero.
pub fn find_zeros<F: AnalyticFunction + ?Sized>(
    f: &F,
    region: Rect,
    resolution: f64,
    min_box: f64,
) -> Result<Vec<(Complex64, u32)>> {
    for attempt in 0..6u32 {
        let pad = attempt as f64 * 1.7e-6 * resolution;
        let outer = Rect {
            re_min: region.re_min - pad,
            re_max: region.re_max + 0.9 * pad,
            im_min: region.im_min - 1.3 * pad,
            im_max: region.im_max + 0.7 * pad,
        };
        let nx = (outer.width() / resolution).ceil().max(1.0) as usize + attempt as usize;
        let ny = (outer.height() / resolution).ceil().max(1.0) as usize + attempt as usize;
        let dx = outer.width() / nx as f64;
        let dy = outer.height() / ny as f64;
        let boxes: Vec<Rect> = (0..nx * ny)
            .map(|idx| {
                let (i, j) = (idx % nx, idx / nx);
                Rect {
                    re_min: outer.re_min + i as f64 * dx,
                    re_max: if i + 1 == nx { outer.re_max } else { outer.re_min + (i + 1) as f64 * dx },
                    im_min: outer.im_min + j as f64 * dy,
                    im_max: if j + 1 == ny { outer.im_max } else { outer.im_min + (j + 1) as f64 * dy },
                }
            })
            .collect();
        let counts: Vec<std::result::Result<i64, TooClose>> = boxes.par_iter().map(|r| winding(f, r)).collect();
        if counts.iter().any(|c| c.is_err()) {
            continue;
        }
        let mut found = Vec::new();
        for (r, c) in boxes.iter().zip(counts) {
            let c = c.unwrap();
            if c < 0 {
                return Err(Error::Numerical("negative winding number: function has poles in the scan region".into()));
            }
            if c > 0 {
                refine(f, *r, c, min_box, &mut found)?;
            }
        }
        return Ok(found);
    }
    Err(Error::Numerical("winding computation unstable: a zero lies on every perturbed contour".into()))
}

/// Zeros of `mu_hat(lambda) - 1` in the closed strip `Re(lambda) >= alpha/2`
/// (lattice case: `Im(lambda)` in `(-pi/d, pi/d]`; non-lattice case:
/// `|Im(lambda)| <= im_max`). Returns the roots, sorted by decreasing real
/// part, and whether any lies on the critical line.
pub fn scan_roots(data: &IntensityData, alpha: f64, cfg: &ScanConfig) -> Result<(Vec<Root>, bool)> {
    let f = CharacteristicEquation(data);
    let margin = 1e-3 * alpha.max(1.0);
    let (im_min, im_max, period) = match data.lattice_span {
        Some(d) => {
            let shift = 0.0137 * PI / d;
            (-PI / d + shift, PI / d + shift, Some(2.0 * PI / d))
        }
        None => (-cfg.im_max - 0.0123, cfg.im_max + 0.0077, None),
    };
    let region = Rect {
        re_min: (alpha / 2.0 - margin).max(data.abscissa() + 1e-9),
        re_max: alpha + 0.25 * alpha.max(0.5),
        im_min,
        im_max,
    };
    let zeros = find_zeros(&f, region, cfg.strip_resolution, cfg.min_box)?;
    let mut roots: Vec<Root> = Vec::new();
    for (z, k) in zeros {
        if z.re < alpha / 2.0 - cfg.boundary_tol {
            continue;
        }
        let mut im = z.im;
        if let (Some(p), Some(d)) = (period, data.lattice_span) {
            if im > PI / d {
                im -= p;
            }
        }
        let mut re = z.re;
        if im.abs() < 1e-12 {
            im = 0.0;
        }
        if im == 0.0 && (re - alpha).abs() < 1e-9 {
            re = alpha;
        }
        roots.push(Root { re, im, multiplicity: k });
    }
    roots.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
    let boundary = roots.iter().any(|r| (r.re - alpha / 2.0).abs() <= cfg.boundary_tol);
    match roots.iter().find(|r| r.im == 0.0 && r.re == alpha) {
        Some(r) if r.multiplicity == 1 => {}
        Some(r) => {
            return Err(Error::assumption(
                A_FINITE_ROOTS.0,
                A_FINITE_ROOTS.1,
                format!("alpha appears with multiplicity {}", r.multiplicity),
            ))
        }
        None => return Err(Error::Numerical("root scan did not recover alpha".into())),
    }
    Ok((roots, boundary))
}

/// Full spectral analysis of a law: alpha, beta, and the strip root set.
pub fn analyze(law: &BirthLaw, root_tol: f64, cfg: &ScanConfig) -> Result<MalthusianSolution> {
    let data = law.intensity();
    let alpha = solve_malthusian(data, root_tol)?;
    let beta = compute_beta(data, alpha)?;
    let (roots, boundary) = scan_roots(data, alpha, cfg)?;
    let residual = (data.laplace_real(alpha)? - 1.0).abs();
    Ok(MalthusianSolution {
        alpha,
        beta,
        lattice_span: data.lattice_span,
        roots,
        residual,
        boundary_roots_present: boundary,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct A7Report {
    pub theta: f64,
    pub satisfied: bool,
    pub second_moment: f64,
    /// `None` for closed-form values.
    pub standard_error: Option<f64>,
}

/// Monte Carlo estimate of `E[(sum_i e^{-theta X_i})^2]` with its standard
/// error. Requires a law with finitely many children.
pub fn second_moment_mc<R: Rng + ?Sized>(law: &BirthLaw, theta: f64, samples: usize, rng: &mut R) -> Result<(f64, f64)> {
    if !law.intensity().finite_mass() {
        return Err(Error::Unsupported("Monte Carlo second moment needs a finite-mass law".into()));
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let mut s = law.stream(rng);
        let mut xi = 0.0;
        while let Some(x) = s.next_offset(rng) {
            xi += (-theta * x).exp();
        }
        let v = xi * xi;
        sum += v;
        sum_sq += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = ((sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
    Ok((mean, (var / n).sqrt()))
}

/// Checks the second-moment assumption at `theta` in `(0, alpha/2)`.
pub fn check_a7<R: Rng + ?Sized>(law: &BirthLaw, alpha: f64, theta: f64, samples: usize, rng: &mut R) -> Result<A7Report> {
    if !(theta > 0.0 && theta < alpha / 2.0) {
        return Err(Error::Config(format!("theta must lie in (0, alpha/2) = (0, {}), got {theta}", alpha / 2.0)));
    }
    if let Some(v) = law.second_moment_closed_form(theta) {
        return Ok(A7Report { theta, satisfied: v.is_finite(), second_moment: v, standard_error: None });
    }
    let (m1, s1) = second_moment_mc(law, theta, samples, rng)?;
    let (m2, s2) = second_moment_mc(law, theta, 2 * samples, rng)?;
    let pooled = (m1 + 2.0 * m2) / 3.0;
    let se = (s1 * s1 + 4.0 * s2 * s2).sqrt() / 3.0;
    let diverging = !pooled.is_finite() || (m2 - m1 > 4.0 * (s1 * s1 + s2 * s2).sqrt() && m2 > 1.25 * m1);
    Ok(A7Report { theta, satisfied: !diverging, second_moment: pooled, standard_error: Some(se) })
}

/// Raises the second-moment assumption as an error when it fails.
pub fn require_a7(report: &A7Report) -> Result<()> {
    if report.satisfied {
        Ok(())
    } else {
        Err(Error::assumption(
            A_SECOND_MOMENT.0,
            A_SECOND_MOMENT.1,
            format!("E[xi_hat({})^2] appears infinite", report.theta),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn gw2() -> BirthLaw {
        BirthLaw::galton_watson(vec![0.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn gw_alpha_beta() {
        let law = gw2();
        let alpha = solve_malthusian(law.intensity(), ROOT_TOL).unwrap();
        assert!((alpha - 2f64.ln()).abs() < 1e-12);
        assert!((compute_beta(law.intensity(), alpha).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn poisson_alpha_beta() {
        let law = BirthLaw::poisson(2.0, -1).unwrap();
        let alpha = solve_malthusian(law.intensity(), ROOT_TOL).unwrap();
        assert!((alpha - 1.0).abs() < 1e-12);
        assert!((compute_beta(law.intensity(), alpha).unwrap() - 0.5).abs() < 1e-12);
        let law = BirthLaw::poisson(1.5, 1).unwrap();
        let alpha = solve_malthusian(law.intensity(), ROOT_TOL).unwrap();
        assert!((alpha - 2.5).abs() < 1e-12);
    }

    #[test]
    fn gw_strip_holds_only_alpha() {
        let sol = analyze(&gw2(), ROOT_TOL, &ScanConfig::default()).unwrap();
        assert_eq!(sol.roots.len(), 1);
        assert_eq!(sol.roots[0].multiplicity, 1);
        assert!(!sol.boundary_roots_present);
        assert!(sol.require_simple_regime().is_ok());
    }

    #[test]
    fn unrestricted_plane_has_periodic_roots() {
        // m e^{-z} = 1 has zeros ln m + 2 pi i k; a tall box sees three of them.
        let law = gw2();
        let f = CharacteristicEquation(law.intensity());
        let region = Rect { re_min: 0.3, re_max: 1.0, im_min: -7.0, im_max: 7.1 };
        let zeros = find_zeros(&f, region, 0.5, 1e-8).unwrap();
        assert_eq!(zeros.len(), 3);
        for (z, k) in zeros {
            assert_eq!(k, 1);
            assert!((z.re - 2f64.ln()).abs() < 1e-10);
            let j = z.im / (2.0 * PI);
            assert!((j - j.round()).abs() < 1e-10);
        }
    }

    struct DoubleRoot;
    impl AnalyticFunction for DoubleRoot {
        fn value(&self, z: Complex64) -> Complex64 {
            let a = Complex64::new(0.3, 0.2);
            (z - a) * (z - a) * (z + 1.0)
        }
        fn derivative(&self, z: Complex64) -> Complex64 {
            let a = Complex64::new(0.3, 0.2);
            2.0 * (z - a) * (z + 1.0) + (z - a) * (z - a)
        }
    }

    #[test]
    fn winding_detects_multiplicity() {
        let region = Rect { re_min: -0.5, re_max: 1.0, im_min: -0.9, im_max: 1.0 };
        let zeros = find_zeros(&DoubleRoot, region, 0.5, 1e-8).unwrap();
        assert_eq!(zeros.len(), 1);
        assert_eq!(zeros[0].1, 2);
        assert!((zeros[0].0 - Complex64::new(0.3, 0.2)).norm() < 1e-6);
    }

    #[test]
    fn many_part_uniform_split_has_extra_roots() {
        let sol26 = analyze(&BirthLaw::fragmentation_uniform(26).unwrap(), ROOT_TOL, &ScanConfig::default()).unwrap();
        assert!(sol26.only_alpha(), "{:?}", sol26.roots);
        let sol27 = analyze(&BirthLaw::fragmentation_uniform(27).unwrap(), ROOT_TOL, &ScanConfig::default()).unwrap();
        assert_eq!(sol27.roots.len(), 3, "{:?}", sol27.roots);
        let pair = &sol27.roots[1];
        assert!((pair.re - 0.5169701218484791).abs() < 1e-8);
        assert!((pair.im.abs() - 2.1788653536248264).abs() < 1e-8);
        assert!(matches!(sol27.require_simple_regime(), Err(Error::Unsupported(_))));
    }

    #[test]
    fn a7_closed_forms() {
        let mut rng = stream(5, 0);
        let r = check_a7(&gw2(), 2f64.ln(), 0.1, 1000, &mut rng).unwrap();
        assert!((r.second_moment - 4.0 * (-0.2f64).exp()).abs() < 1e-15);
        let (mc, se) = second_moment_mc(&BirthLaw::galton_watson(vec![0.2, 0.3, 0.5]).unwrap(), 0.1, 40_000, &mut rng).unwrap();
        let exact = BirthLaw::galton_watson(vec![0.2, 0.3, 0.5]).unwrap().second_moment_closed_form(0.1).unwrap();
        assert!((mc - exact).abs() < 4.0 * se);
        assert!(check_a7(&gw2(), 2f64.ln(), 0.5, 10, &mut rng).is_err());
    }

    #[test]
    fn a7_monte_carlo_for_uniform_split() {
        let mut rng = stream(5, 1);
        let law = BirthLaw::fragmentation_uniform(2).unwrap();
        let r = check_a7(&law, 1.0, 0.3, 20_000, &mut rng).unwrap();
        assert!(r.satisfied);
        assert!(r.standard_error.unwrap() > 0.0);
        assert!(r.second_moment <= 4.0);
    }
}
