//! Fringe-subtree characteristics `phi^T(t) = 1{T_t isomorphic to T}`.

use super::Characteristic;
use crate::error::{Error, Result};
use crate::genealogy::{NodeId, Population};
use crate::models::{BirthLaw, Dislocation, LawKind};
use crate::quadrature::cubic_interpolate;
use std::fmt;

/// A finite ordered rooted tree. Node 0 is the root; children are listed in
/// birth order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FringePattern {
    children: Vec<Vec<usize>>,
    depth: Vec<u32>,
}

impl FringePattern {
    pub fn leaf() -> Self {
        Self { children: vec![Vec::new()], depth: vec![0] }
    }

    /// Parses a parenthesized literal: `()` is a single node, `(()())` a root
    /// with two leaf children. Whitespace is ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let chars: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
        let mut pat = FringePattern { children: Vec::new(), depth: Vec::new() };
        let mut pos = 0;
        pat.parse_node(&chars, &mut pos, 0)?;
        if pos != chars.len() {
            return Err(Error::Config(format!("trailing characters in tree literal {text:?}")));
        }
        Ok(pat)
    }

    fn parse_node(&mut self, s: &[char], pos: &mut usize, depth: u32) -> Result<usize> {
        if s.get(*pos) != Some(&'(') {
            return Err(Error::Config(format!("expected '(' at position {}", *pos)));
        }
        *pos += 1;
        let id = self.children.len();
        self.children.push(Vec::new());
        self.depth.push(depth);
        while s.get(*pos) == Some(&'(') {
            let c = self.parse_node(s, pos, depth + 1)?;
            self.children[id].push(c);
        }
        if s.get(*pos) != Some(&')') {
            return Err(Error::Config(format!("expected ')' at position {}", *pos)));
        }
        *pos += 1;
        Ok(id)
    }

    /// Builds a tree from a root with the given subtrees as children.
    pub fn join(subtrees: &[FringePattern]) -> Self {
        let mut pat = FringePattern { children: vec![Vec::new()], depth: vec![0] };
        for sub in subtrees {
            let offset = pat.children.len();
            pat.children[0].push(offset);
            for (i, kids) in sub.children.iter().enumerate() {
                pat.children.push(kids.iter().map(|k| k + offset).collect());
                pat.depth.push(sub.depth[i] + 1);
            }
        }
        pat
    }

    pub fn size(&self) -> usize {
        self.children.len()
    }

    pub fn height(&self) -> u32 {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    pub fn children_of(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn depth_of(&self, node: usize) -> u32 {
        self.depth[node]
    }

    /// Subtree rooted at `node` as a stand-alone pattern.
    pub fn subtree(&self, node: usize) -> FringePattern {
        let subs: Vec<FringePattern> = self.children[node].iter().map(|c| self.subtree(*c)).collect();
        FringePattern::join(&subs)
    }

    /// All ordered trees of height at most `max_height` whose nodes have at
    /// most `max_degree` children, in a fixed deterministic order.
    pub fn enumerate(max_height: u32, max_degree: usize) -> Vec<FringePattern> {
        let mut out = vec![FringePattern::leaf()];
        if max_height == 0 {
            return out;
        }
        let smaller = FringePattern::enumerate(max_height - 1, max_degree);
        let mut seqs: Vec<Vec<usize>> = vec![Vec::new()];
        for _ in 0..max_degree {
            let mut next = Vec::new();
            for s in &seqs {
                for i in 0..smaller.len() {
                    let mut t = s.clone();
                    t.push(i);
                    next.push(t);
                }
            }
            for s in &next {
                let subs: Vec<FringePattern> = s.iter().map(|i| smaller[*i].clone()).collect();
                out.push(FringePattern::join(&subs));
            }
            seqs = next;
        }
        out
    }

    fn fmt_node(&self, node: usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for c in &self.children[node] {
            self.fmt_node(*c, f)?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for FringePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_node(0, f)
    }
}

/// Law-specific source of `p(T', t) = P(T_t isomorphic to T')` for the
/// subtrees `T'` of one pattern.
#[derive(Debug, Clone)]
enum Oracle {
    /// Exact recursion on integer times.
    GaltonWatson { probs: Vec<f64> },
    /// Exact 0/1 values for a deterministic birth list.
    Deterministic { offsets: Vec<f64> },
    /// Poisson intensity `a e^{b x}`: closed form for childless nodes,
    /// otherwise tabulated on a uniform grid, indexed by pattern node.
    Grid { a: f64, b: f64, step: f64, tables: Vec<Vec<f64>> },
    None,
}

/// `phi^T` for a fixed pattern `T`.
#[derive(Debug, Clone)]
pub struct FringeCharacteristic {
    pattern: FringePattern,
    oracle: Oracle,
}

impl FringeCharacteristic {
    /// Builds the characteristic. `t_max` bounds the local times at which
    /// tabulated probabilities are needed (Poisson intensity laws); `step` is
    /// the table resolution.
    pub fn new(pattern: FringePattern, law: &BirthLaw, t_max: f64, step: f64) -> Result<Self> {
        let oracle = match law.kind() {
            LawKind::GaltonWatson { offspring } => Oracle::GaltonWatson { probs: offspring.clone() },
            LawKind::Fragmentation { dislocation: Dislocation::Fixed(v) } => {
                let mut offsets: Vec<f64> = v.iter().filter(|x| **x > 0.0).map(|x| -x.ln()).collect();
                offsets.sort_by(|a, b| a.total_cmp(b));
                Oracle::Deterministic { offsets }
            }
            LawKind::Fragmentation { .. } => Oracle::None,
            LawKind::PoissonIntensity { a, b_exp } => {
                if !(step > 0.0 && t_max.is_finite() && t_max >= 0.0) {
                    return Err(Error::Config("fringe tables need a positive step and finite t_max".into()));
                }
                poisson_tables(&pattern, *a, *b_exp as f64, t_max, step)
            }
        };
        Ok(Self { pattern, oracle })
    }

    /// A fringe characteristic that always falls back to nested Monte Carlo.
    pub fn without_oracle(pattern: FringePattern) -> Self {
        Self { pattern, oracle: Oracle::None }
    }

    pub fn pattern(&self) -> &FringePattern {
        &self.pattern
    }

    pub fn has_closed_form(&self) -> bool {
        !matches!(self.oracle, Oracle::None)
    }

    /// `p(T', t)` for the subtree of the pattern rooted at `node`.
    pub fn subtree_probability(&self, node: usize, t: f64) -> Option<f64> {
        if t < 0.0 {
            return Some(0.0);
        }
        match &self.oracle {
            Oracle::GaltonWatson { probs } => Some(gw_probability(&self.pattern, node, t.floor() as i64, probs)),
            Oracle::Deterministic { offsets } => Some(det_probability(&self.pattern, node, t, offsets)),
            Oracle::Grid { a, b, step, tables } => Some(if self.pattern.children_of(node).is_empty() {
                (-poisson_mass(*a, *b, t)).exp()
            } else {
                cubic_interpolate(&tables[node], *step, t)
            }),
            Oracle::None => None,
        }
    }

    /// Walks the top `levels` generations of the pattern against the
    /// population below `u`, within absolute time `limit`. Returns `None` on
    /// mismatch, otherwise the population nodes matched to the pattern nodes
    /// at depth `levels`.
    fn match_top(&self, pop: &Population, u: NodeId, limit: f64, levels: u32) -> Result<Option<Vec<(usize, NodeId)>>> {
        let mut frontier = vec![(0usize, u)];
        for _ in 0..levels {
            let mut next = Vec::new();
            for (pn, v) in frontier {
                let node = pop.node(v);
                if !node.expanded || pop.cutoff() < limit {
                    return Err(Error::Undecidable(format!("node {:?} has unsimulated children", pop.label(v))));
                }
                let kids: Vec<NodeId> = pop.children(v).filter(|c| pop.birth_time(*c) <= limit).collect();
                let want = self.pattern.children_of(pn);
                if kids.len() != want.len() {
                    return Ok(None);
                }
                next.extend(want.iter().copied().zip(kids));
            }
            frontier = next;
        }
        Ok(Some(frontier))
    }
}

impl Characteristic for FringeCharacteristic {
    fn depth(&self) -> u32 {
        self.pattern.height()
    }

    fn eval(&self, pop: &Population, u: NodeId, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Ok(0.0);
        }
        let limit = pop.birth_time(u) + t;
        // Matching the full height plus the emptiness check of the leaves.
        Ok(match self.match_top(pop, u, limit, self.pattern.height() + 1)? {
            Some(_) => 1.0,
            None => 0.0,
        })
    }

    fn mean(&self, t: f64) -> Option<Result<f64>> {
        self.subtree_probability(0, t).map(Ok)
    }

    fn projection(&self, pop: &Population, u: NodeId, k: u32, t: f64) -> Option<Result<f64>> {
        if !self.has_closed_form() {
            return None;
        }
        if t < 0.0 {
            return Some(Ok(0.0));
        }
        let limit = pop.birth_time(u) + t;
        Some(self.match_top(pop, u, limit, k).map(|m| match m {
            None => 0.0,
            Some(frontier) => frontier
                .iter()
                .map(|(pn, v)| self.subtree_probability(*pn, limit - pop.birth_time(*v)).unwrap())
                .product(),
        }))
    }

    fn name(&self) -> String {
        format!("fringe{}", self.pattern)
    }
}

fn gw_probability(p: &FringePattern, node: usize, m: i64, probs: &[f64]) -> f64 {
    if m < 0 {
        return 0.0;
    }
    let kids = p.children_of(node);
    if m == 0 {
        return if kids.is_empty() { 1.0 } else { 0.0 };
    }
    let pk = probs.get(kids.len()).copied().unwrap_or(0.0);
    if pk == 0.0 {
        return 0.0;
    }
    kids.iter().fold(pk, |acc, c| acc * gw_probability(p, *c, m - 1, probs))
}

fn det_probability(p: &FringePattern, node: usize, t: f64, offsets: &[f64]) -> f64 {
    let born: Vec<f64> = offsets.iter().copied().filter(|x| *x <= t).collect();
    let kids = p.children_of(node);
    if born.len() != kids.len() {
        return 0.0;
    }
    kids.iter().zip(&born).fold(1.0, |acc, (c, x)| acc * det_probability(p, *c, t - x, offsets))
}

/// `M(t) = int_0^t a e^{b x} dx`.
fn poisson_mass(a: f64, b: f64, t: f64) -> f64 {
    if b == 0.0 {
        a * t
    } else {
        a * (b * t).exp_m1() / b
    }
}

/// Tabulates `p(T', t)` on `t = 0, step, .., t_max` for every subtree of the
/// pattern under a Poisson process with intensity `a e^{b x}`:
/// `p(T', t) = e^{-M(t)} int_{0<y_1<..<y_d<t} prod_j a e^{b y_j} p(T'_j, t - y_j) dy`,
/// evaluated by nested trapezoid sums at `step` and `step/2`, combined by
/// Richardson extrapolation.
fn poisson_tables(pattern: &FringePattern, a: f64, b: f64, t_max: f64, step: f64) -> Oracle {
    let n = (t_max / step).ceil() as usize + 2;
    let coarse = trapezoid_tables(pattern, a, b, n, step);
    let fine = trapezoid_tables(pattern, a, b, 2 * n - 1, step / 2.0);
    let tables = coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| c.iter().enumerate().map(|(i, v)| (4.0 * f[2 * i] - v) / 3.0).collect())
        .collect();
    Oracle::Grid { a, b, step, tables }
}

fn trapezoid_tables(pattern: &FringePattern, a: f64, b: f64, n: usize, step: f64) -> Vec<Vec<f64>> {
    let lam: Vec<f64> = (0..n).map(|i| a * (b * i as f64 * step).exp()).collect();
    let mut tables = vec![Vec::new(); pattern.size()];
    // Children always have larger indices than their parent.
    for node in (0..pattern.size()).rev() {
        let kids = pattern.children_of(node).to_vec();
        let mut table = vec![0.0; n];
        for (i, slot) in table.iter_mut().enumerate() {
            let void = (-poisson_mass(a, b, i as f64 * step)).exp();
            if kids.is_empty() {
                *slot = void;
                continue;
            }
            // f[j] = F_{j}(y_j) along the grid y = 0..t.
            let mut f = vec![1.0; i + 1];
            for c in &kids {
                let child = &tables[*c];
                let mut g = vec![0.0; i + 1];
                let mut acc = 0.0;
                let integrand = |j: usize| f[j] * lam[j] * child[i - j];
                for j in 1..=i {
                    acc += 0.5 * step * (integrand(j - 1) + integrand(j));
                    g[j] = acc;
                }
                f = g;
            }
            *slot = void * f[i];
        }
        tables[node] = table;
    }
    tables
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        for lit in ["()", "(())", "(()())", "((())())"] {
            let p = FringePattern::parse(lit).unwrap();
            assert_eq!(p.to_string(), lit);
        }
        let p = FringePattern::parse("( () ( () ) )").unwrap();
        assert_eq!(p.size(), 4);
        assert_eq!(p.height(), 2);
        assert!(FringePattern::parse("(()").is_err());
        assert!(FringePattern::parse("()()").is_err());
        assert!(FringePattern::parse("x").is_err());
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(FringePattern::enumerate(0, 2).len(), 1);
        assert_eq!(FringePattern::enumerate(1, 2).len(), 3);
        assert_eq!(FringePattern::enumerate(2, 2).len(), 13);
        let all = FringePattern::enumerate(2, 2);
        let mut uniq = all.clone();
        uniq.dedup();
        assert_eq!(uniq.len(), all.len());
    }

    #[test]
    fn subtree_extraction() {
        let p = FringePattern::parse("((())())").unwrap();
        assert_eq!(p.subtree(1).to_string(), "(())");
        assert_eq!(p.subtree(3).to_string(), "()");
    }

    #[test]
    fn poisson_leaf_and_cherry_tables() {
        // Unit-rate Poisson: p(leaf, t) = e^{-t}; p("(())", t) = int_0^t e^{-t} e^{-(t-y)} dy = e^{-t}(1 - e^{-t}).
        let law = BirthLaw::poisson(1.0, 0).unwrap();
        let ch = FringeCharacteristic::new(FringePattern::parse("(())").unwrap(), &law, 6.0, 0.001).unwrap();
        for t in [0.0f64, 0.5, 2.0, 5.0] {
            let want = (-t).exp() * (1.0 - (-t).exp());
            assert!((ch.subtree_probability(0, t).unwrap() - want).abs() < 1e-10, "t={t}");
            assert!((ch.subtree_probability(1, t).unwrap() - (-t).exp()).abs() < 1e-12);
        }
        // Default resolution, off-grid times.
        let ch = FringeCharacteristic::new(FringePattern::parse("(())").unwrap(), &law, 6.0, 0.01).unwrap();
        for t in [0.537f64, 3.2109] {
            let want = (-t).exp() * (1.0 - (-t).exp());
            assert!((ch.subtree_probability(0, t).unwrap() - want).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn gw_probabilities() {
        let law = BirthLaw::galton_watson(vec![0.1, 0.3, 0.6]).unwrap();
        let ch = FringeCharacteristic::new(FringePattern::parse("(()())").unwrap(), &law, 0.0, 1.0).unwrap();
        assert_eq!(ch.subtree_probability(0, 0.5).unwrap(), 0.0);
        assert!((ch.subtree_probability(0, 1.0).unwrap() - 0.6).abs() < 1e-15);
        assert!((ch.subtree_probability(0, 2.7).unwrap() - 0.6 * 0.01).abs() < 1e-15);
    }
}
