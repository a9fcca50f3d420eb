//! Event-driven simulation of the population and the martingales read off it.
//!
//! Individuals live in an arena indexed by [`NodeId`]. Births are processed
//! from a min-heap keyed by `(birth time, insertion sequence)`: popping the
//! next birth of a parent creates the child, draws that parent's following
//! birth, and (if the child is inside the simulated window) starts the
//! child's own birth stream.
//!
//! After the horizon `H` is reached the open birth streams are drained into
//! *pending* nodes (born after `H`, not themselves expanded) up to a cutoff:
//! all of them when the law has finitely many children, otherwise up to
//! `H + L` for a lookahead `L`. Pending nodes are what the coming generation
//! `C_t` needs for `t <= H`. Children beyond a finite cutoff enter martingale
//! sums through their conditional expectation given the parent, computed from
//! the intensity tail, so those sums stay unbiased.

use crate::error::{Error, Result};
use crate::models::{BirthLaw, BirthStream};
use crate::output::{fmt_f64, Table};
use crate::rng::{stream, SimRng};
use crate::spectral;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Default per-replica node cap.
pub const DEFAULT_NODE_CAP: usize = 100_000_000;

/// Target for `int_{(L, inf)} e^{-2 alpha x} mu(dx)` when choosing the lookahead.
const LOOKAHEAD_TAIL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct Node {
    parent: u32,
    first_child: u32,
    last_child: u32,
    next_sibling: u32,
    pub birth_time: f64,
    pub generation: u32,
    /// 1-based position among the parent's children (birth order).
    pub child_rank: u32,
    pub child_count: u32,
    /// True when every child born up to the population cutoff is present.
    pub expanded: bool,
}

impl Node {
    pub fn parent(&self) -> Option<NodeId> {
        (self.parent != NONE).then_some(NodeId(self.parent))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Simulate every birth up to and including time `t`.
    TimeHorizon(f64),
    /// Stop at the first time the total number of births reaches `n`.
    WeightThreshold(usize),
    /// Simulate generations `0..=n` completely (finite-mass laws only).
    Generations(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lookahead {
    /// Infinite for finite-mass laws, otherwise sized from the intensity tail.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct SimLimits {
    pub horizon: f64,
    pub max_generation: Option<u32>,
    pub weight_threshold: Option<usize>,
    pub lookahead: Lookahead,
    pub node_cap: usize,
}

impl SimLimits {
    pub fn from_stop(stop: &StopRule) -> Result<Self> {
        let mut limits = SimLimits {
            horizon: f64::INFINITY,
            max_generation: None,
            weight_threshold: None,
            lookahead: Lookahead::Auto,
            node_cap: DEFAULT_NODE_CAP,
        };
        match *stop {
            StopRule::TimeHorizon(t) => {
                if !(t >= 0.0 && t.is_finite()) {
                    return Err(Error::Config(format!("time horizon must be finite and non-negative, got {t}")));
                }
                limits.horizon = t;
            }
            StopRule::WeightThreshold(n) => {
                if n == 0 {
                    return Err(Error::Config("weight threshold must be at least 1".into()));
                }
                limits.weight_threshold = Some(n);
            }
            StopRule::Generations(n) => limits.max_generation = Some(n),
        }
        Ok(limits)
    }

    pub fn with_node_cap(mut self, cap: usize) -> Self {
        self.node_cap = cap;
        self
    }
}

/// A realized genealogy.
#[derive(Debug, Clone)]
pub struct Population {
    nodes: Vec<Node>,
    horizon: f64,
    cutoff: f64,
    born: usize,
    stop_rule: Option<StopRule>,
    pub seed: u64,
    law: BirthLaw,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    parent: u32,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // Reversed so that BinaryHeap pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

struct Engine<'a> {
    law: &'a BirthLaw,
    rng: &'a mut SimRng,
    nodes: Vec<Node>,
    streams: Vec<Option<BirthStream>>,
    heap: BinaryHeap<Event>,
    seq: u64,
    horizon: f64,
    max_generation: Option<u32>,
    node_cap: usize,
}

impl<'a> Engine<'a> {
    fn new(law: &'a BirthLaw, rng: &'a mut SimRng, limits: &SimLimits) -> Self {
        Engine {
            law,
            rng,
            nodes: Vec::new(),
            streams: Vec::new(),
            heap: BinaryHeap::new(),
            seq: 0,
            horizon: limits.horizon,
            max_generation: limits.max_generation,
            node_cap: limits.node_cap,
        }
    }

    fn add_node(&mut self, parent: Option<u32>, time: f64) -> Result<u32> {
        if self.nodes.len() >= self.node_cap {
            return Err(Error::Resource(format!(
                "population exceeded the cap of {} nodes; lower the horizon or raise the cap",
                self.node_cap
            )));
        }
        let id = self.nodes.len() as u32;
        let (generation, rank) = match parent {
            None => (0, 0),
            Some(p) => {
                let pn = &mut self.nodes[p as usize];
                pn.child_count += 1;
                let rank = pn.child_count;
                let g = pn.generation + 1;
                if pn.last_child == NONE {
                    pn.first_child = id;
                } else {
                    let last = pn.last_child as usize;
                    self.nodes[last].next_sibling = id;
                }
                self.nodes[p as usize].last_child = id;
                (g, rank)
            }
        };
        self.nodes.push(Node {
            parent: parent.unwrap_or(NONE),
            first_child: NONE,
            last_child: NONE,
            next_sibling: NONE,
            birth_time: time,
            generation,
            child_rank: rank,
            child_count: 0,
            expanded: false,
        });
        self.streams.push(None);
        Ok(id)
    }

    fn expandable(&self, id: u32) -> bool {
        let n = &self.nodes[id as usize];
        n.birth_time <= self.horizon && self.max_generation.is_none_or(|g| n.generation < g)
    }

    fn expand(&mut self, id: u32) {
        let mut s = self.law.stream(self.rng);
        self.nodes[id as usize].expanded = true;
        if let Some(x) = s.next_offset(self.rng) {
            let time = self.nodes[id as usize].birth_time + x;
            self.push(time, id);
            self.streams[id as usize] = Some(s);
        }
    }

    fn push(&mut self, time: f64, parent: u32) {
        self.heap.push(Event { time, seq: self.seq, parent });
        self.seq += 1;
    }

    fn advance(&mut self, parent: u32) {
        let base = self.nodes[parent as usize].birth_time;
        let next = match self.streams[parent as usize].as_mut() {
            Some(s) => s.next_offset(self.rng),
            None => None,
        };
        match next {
            Some(x) => self.push(base + x, parent),
            None => self.streams[parent as usize] = None,
        }
    }

    /// Processes births up to the horizon; returns the time the weight
    /// threshold was reached, if any.
    fn run(&mut self, threshold: Option<usize>) -> Result<Option<f64>> {
        let mut hit = None;
        if let Some(n) = threshold {
            if self.nodes.len() >= n {
                hit = Some(0.0);
                self.horizon = 0.0;
            }
        }
        while let Some(ev) = self.heap.peek().copied() {
            if ev.time > self.horizon {
                break;
            }
            self.heap.pop();
            let child = self.add_node(Some(ev.parent), ev.time)?;
            self.advance(ev.parent);
            if self.expandable(child) {
                self.expand(child);
            }
            if hit.is_none() {
                if let Some(n) = threshold {
                    if self.nodes.len() >= n {
                        hit = Some(ev.time);
                        self.horizon = ev.time;
                    }
                }
            }
        }
        Ok(hit)
    }

    fn drain(&mut self, cutoff: f64) -> Result<()> {
        while let Some(ev) = self.heap.pop() {
            if ev.time > cutoff {
                self.streams[ev.parent as usize] = None;
                continue;
            }
            self.add_node(Some(ev.parent), ev.time)?;
            self.advance(ev.parent);
        }
        Ok(())
    }
}

/// Lookahead `L` beyond the horizon for pending children.
pub fn auto_lookahead(law: &BirthLaw) -> Result<f64> {
    let data = law.intensity();
    if data.finite_mass() {
        return Ok(f64::INFINITY);
    }
    let alpha = spectral::solve_malthusian(data, spectral::ROOT_TOL)?;
    let two_alpha = Complex64::new(2.0 * alpha, 0.0);
    // Smallest doubling L with tail mass of e^{-2 alpha x} mu(dx) below target.
    let mut l: f64 = 1.0;
    for _ in 0..60 {
        if data.tail_transform(two_alpha, l, 0)?.re <= LOOKAHEAD_TAIL {
            return Ok(l);
        }
        l *= 1.25;
    }
    Err(Error::Numerical("could not size the lookahead window".into()))
}

fn resolve_cutoff(law: &BirthLaw, horizon: f64, lookahead: Lookahead) -> Result<f64> {
    if law.intensity().finite_mass() {
        return Ok(f64::INFINITY);
    }
    if !horizon.is_finite() {
        return Err(Error::Config(
            "an unbounded horizon needs a law with finitely many children per individual".into(),
        ));
    }
    let l = match lookahead {
        Lookahead::Auto => auto_lookahead(law)?,
        Lookahead::Fixed(l) => l,
    };
    Ok(horizon + l)
}

/// Simulates a population from a single root, with randomness from `seed`.
pub fn simulate(law: &BirthLaw, stop: &StopRule, seed: u64) -> Result<Population> {
    let mut rng = stream(seed, 0);
    let mut pop = simulate_with(law, &SimLimits::from_stop(stop)?, &mut rng)?;
    pop.stop_rule = Some(*stop);
    pop.seed = seed;
    Ok(pop)
}

/// Simulates a population from a single root under explicit limits.
pub fn simulate_with(law: &BirthLaw, limits: &SimLimits, rng: &mut SimRng) -> Result<Population> {
    if limits.weight_threshold.is_none() && limits.max_generation.is_none() && !limits.horizon.is_finite() {
        return Err(Error::Config("simulation needs a finite horizon, a weight threshold or a generation bound".into()));
    }
    if limits.weight_threshold.is_none() && !limits.horizon.is_finite() && !law.intensity().finite_mass() {
        return Err(Error::Config("a generation stop rule needs a finite-mass law".into()));
    }
    let mut engine = Engine::new(law, rng, limits);
    engine.add_node(None, 0.0)?;
    if engine.expandable(0) {
        engine.expand(0);
    }
    let hit = engine.run(limits.weight_threshold)?;
    if limits.weight_threshold.is_some() && hit.is_none() {
        // Died out before reaching the threshold: everything is known.
        let last = engine.nodes.iter().map(|n| n.birth_time).fold(0.0, f64::max);
        engine.horizon = last;
    }
    let horizon = engine.horizon;
    let born = engine.nodes.len();
    let cutoff = if !horizon.is_finite() {
        f64::INFINITY
    } else {
        resolve_cutoff(law, horizon, limits.lookahead)?
    };
    engine.drain(cutoff)?;
    Ok(Population {
        nodes: engine.nodes,
        horizon,
        cutoff,
        born,
        stop_rule: None,
        seed: 0,
        law: law.clone(),
    })
}

impl Population {
    pub fn law(&self) -> &BirthLaw {
        &self.law
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of individuals born up to the horizon (pending nodes excluded).
    pub fn born_count(&self) -> usize {
        self.born
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Birth times above this value were never materialized.
    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn stop_rule(&self) -> Option<StopRule> {
        self.stop_rule
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes.iter().enumerate().map(|(i, n)| (NodeId(i as u32), n))
    }

    pub fn birth_time(&self, id: NodeId) -> f64 {
        self.nodes[id.index()].birth_time
    }

    pub fn is_born(&self, id: NodeId) -> bool {
        self.nodes[id.index()].birth_time <= self.horizon
    }

    /// Children of `id` in birth order.
    pub fn children(&self, id: NodeId) -> Children<'_> {
        Children { pop: self, next: self.nodes[id.index()].first_child }
    }

    /// Ulam-Harris label: the path of child ranks from the root.
    pub fn label(&self, id: NodeId) -> Vec<u32> {
        let mut path = Vec::new();
        let mut cur = id;
        while let Some(p) = self.nodes[cur.index()].parent() {
            path.push(self.nodes[cur.index()].child_rank);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Finds a node by its Ulam-Harris label.
    pub fn find(&self, label: &[u32]) -> Option<NodeId> {
        let mut cur = NodeId::ROOT;
        for &r in label {
            cur = self.children(cur).nth(r.checked_sub(1)? as usize)?;
        }
        Some(cur)
    }

    /// `Z_t`: number of births up to and including time `t`.
    pub fn total_births(&self, t: f64) -> Result<usize> {
        self.require_known(t)?;
        Ok(self.nodes.iter().filter(|n| n.birth_time <= t).count())
    }

    fn require_known(&self, t: f64) -> Result<()> {
        if t > self.horizon {
            return Err(Error::Undecidable(format!("time {t} lies beyond the simulated horizon {}", self.horizon)));
        }
        Ok(())
    }

    /// Population dump: one row per born individual.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["node_id", "parent_id", "birth_time", "child_rank"]);
        for (i, n) in self.nodes[..self.born].iter().enumerate() {
            t.push(vec![
                i.to_string(),
                n.parent().map(|p| p.0.to_string()).unwrap_or_default(),
                fmt_f64(n.birth_time),
                n.child_rank.to_string(),
            ]);
        }
        t
    }

    /// Expected contribution of children beyond the cutoff to
    /// `(-1)^i sum S(v)^i e^{-lambda S(v)}`, given the parent born at `s`.
    fn tail_term(&self, lambda: Complex64, i: u32, s: f64) -> Result<Complex64> {
        if !self.cutoff.is_finite() {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let data = self.law.intensity();
        let y = self.cutoff - s;
        let mut acc = Complex64::new(0.0, 0.0);
        let mut binom = 1.0;
        for j in 0..=i {
            if j > 0 {
                binom = binom * (i - j + 1) as f64 / j as f64;
            }
            acc += data.tail_transform(lambda, y, j)? * (binom * s.powi((i - j) as i32));
        }
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        Ok(acc * (-lambda * s).exp() * sign)
    }

    pub(crate) fn from_parts(nodes: Vec<Node>, horizon: f64, cutoff: f64, born: usize, law: BirthLaw) -> Self {
        Population { nodes, horizon, cutoff, born, stop_rule: None, seed: 0, law }
    }
}

pub struct Children<'a> {
    pop: &'a Population,
    next: u32,
}

impl Iterator for Children<'_> {
    type Item = NodeId;
    fn next(&mut self) -> Option<NodeId> {
        if self.next == NONE {
            return None;
        }
        let id = NodeId(self.next);
        self.next = self.pop.nodes[id.index()].next_sibling;
        Some(id)
    }
}

fn parents_known(pop: &Population, t: f64) -> Result<()> {
    pop.require_known(t)?;
    if let Some((i, _)) = pop.nodes.iter().enumerate().find(|(_, n)| n.birth_time <= t && !n.expanded) {
        return Err(Error::Undecidable(format!(
            "children of node {:?} (born {}) were not simulated",
            pop.label(NodeId(i as u32)),
            pop.nodes[i].birth_time
        )));
    }
    Ok(())
}

/// `C_t`: individuals whose parent is born by `t` and who are born after `t`.
/// Only materialized individuals are returned (see [`Population::cutoff`]).
pub fn coming_generation(pop: &Population, t: f64) -> Result<Vec<NodeId>> {
    if t < 0.0 {
        return Ok(Vec::new());
    }
    parents_known(pop, t)?;
    Ok(pop
        .nodes()
        .filter(|(_, n)| n.birth_time > t && n.parent().is_some_and(|p| pop.birth_time(p) <= t))
        .map(|(id, _)| id)
        .collect())
}

/// `W_t^{(i)}(lambda) = (-1)^i sum_{u in C_t} S(u)^i e^{-lambda S(u)}`.
pub fn complex_martingale(pop: &Population, lambda: Complex64, i: u32, t: f64) -> Result<Complex64> {
    if t < 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    parents_known(pop, t)?;
    let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
    let mut total = Complex64::new(0.0, 0.0);
    for (_, n) in pop.nodes() {
        if n.birth_time <= t {
            total += pop.tail_term(lambda, i, n.birth_time)?;
        } else if n.parent().is_some_and(|p| pop.birth_time(p) <= t) {
            total += (-lambda * n.birth_time).exp() * (sign * n.birth_time.powi(i as i32));
        }
    }
    Ok(total)
}

/// Nerman's martingale `W_t = sum_{u in C_t} e^{-alpha S(u)}`.
pub fn nerman_w(pop: &Population, alpha: f64, t: f64) -> Result<f64> {
    Ok(complex_martingale(pop, Complex64::new(alpha, 0.0), 0, t)?.re)
}

/// Biggins' martingale `mu_hat(theta)^{-n} sum_{|u| = n} e^{-theta S(u)}`.
pub fn biggins(pop: &Population, theta: f64, n: u32) -> Result<f64> {
    if pop.cutoff.is_finite() {
        return Err(Error::Undecidable(
            "generation sums need every child materialized; this population was truncated at a finite cutoff".into(),
        ));
    }
    if let Some((id, _)) = pop.nodes().find(|(_, nd)| nd.generation < n && !nd.expanded) {
        return Err(Error::Undecidable(format!("generation {n} is incomplete below node {:?}", pop.label(id))));
    }
    let m = pop.law.intensity().laplace_real(theta)?;
    let sum: f64 = pop.nodes.iter().filter(|nd| nd.generation == n).map(|nd| (-theta * nd.birth_time).exp()).sum();
    Ok(sum / m.powi(n as i32))
}

/// Sub-population of `u`'s descendants, rebased so that `u` is the root at
/// time 0, with generations relative to `u`. Nodes at relative depth
/// `< keep_depth` keep their (complete) children; nodes at depth
/// `keep_depth` are kept without children and are re-simulated by
/// [`resample_below`].
pub(crate) struct SubtreeSeed {
    nodes: Vec<Node>,
    frontier: Vec<u32>,
}

pub(crate) fn subtree_seed(pop: &Population, u: NodeId, keep_depth: u32, cutoff_rel: f64) -> Result<SubtreeSeed> {
    let base_time = pop.birth_time(u);
    let base_gen = pop.node(u).generation;
    let mut nodes: Vec<Node> = Vec::new();
    let mut frontier = Vec::new();
    let mut queue = vec![(u, NONE)];
    let mut head = 0;
    while head < queue.len() {
        let (orig, new_parent) = queue[head];
        head += 1;
        let on = pop.node(orig);
        let depth = on.generation - base_gen;
        let id = nodes.len() as u32;
        let mut rank = 0;
        if new_parent != NONE {
            let p = &mut nodes[new_parent as usize];
            p.child_count += 1;
            rank = p.child_count;
            if p.last_child == NONE {
                p.first_child = id;
            } else {
                let last = p.last_child as usize;
                nodes[last].next_sibling = id;
            }
            nodes[new_parent as usize].last_child = id;
        }
        nodes.push(Node {
            parent: new_parent,
            first_child: NONE,
            last_child: NONE,
            next_sibling: NONE,
            birth_time: on.birth_time - base_time,
            generation: depth,
            child_rank: rank,
            child_count: 0,
            expanded: depth < keep_depth,
        });
        if depth < keep_depth {
            if !on.expanded {
                return Err(Error::Undecidable(format!(
                    "node {:?} has unsimulated children needed for conditioning",
                    pop.label(orig)
                )));
            }
            for c in pop.children(orig) {
                if pop.birth_time(c) - base_time <= cutoff_rel {
                    queue.push((c, id));
                }
            }
        } else {
            frontier.push(id);
        }
    }
    Ok(SubtreeSeed { nodes, frontier })
}

/// Completes a [`SubtreeSeed`] by simulating fresh lives for its frontier
/// nodes within `limits` (times and generations relative to the seed root).
pub(crate) fn resample_below(law: &BirthLaw, seed: &SubtreeSeed, limits: &SimLimits, cutoff: f64, rng: &mut SimRng) -> Result<Population> {
    let mut engine = Engine::new(law, rng, limits);
    engine.nodes = seed.nodes.clone();
    engine.streams = vec![None; engine.nodes.len()];
    for &f in &seed.frontier {
        if engine.expandable(f) {
            engine.expand(f);
        }
    }
    engine.run(None)?;
    let horizon = engine.horizon;
    // Seed nodes born after the horizon are pending; keep them after the born block.
    let born = engine.nodes.iter().filter(|n| n.birth_time <= horizon).count();
    engine.drain(cutoff)?;
    Ok(Population::from_parts(engine.nodes, horizon, cutoff, born, law.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary() -> BirthLaw {
        BirthLaw::galton_watson(vec![0.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn deterministic_binary_tree() {
        let pop = simulate(&binary(), &StopRule::TimeHorizon(3.0), 1).unwrap();
        assert_eq!(pop.born_count(), 15);
        assert_eq!(pop.total_births(3.0).unwrap(), 15);
        assert_eq!(pop.len(), 31);
        let c = coming_generation(&pop, 1.5).unwrap();
        assert_eq!(c.len(), 4);
        assert!(c.iter().all(|id| pop.birth_time(*id) == 2.0));
        assert!((nerman_w(&pop, 2f64.ln(), 1.5).unwrap() - 1.0).abs() < 1e-15);
        let w1 = complex_martingale(&pop, Complex64::new(2f64.ln(), 0.0), 1, 1.5).unwrap();
        assert!((w1.re + 2.0).abs() < 1e-14 && w1.im == 0.0);
        assert!((biggins(&pop, 2f64.ln(), 3).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(biggins(&pop, 0.3, 0).unwrap(), 1.0);
    }

    #[test]
    fn negative_time_and_first_birth() {
        let law = BirthLaw::poisson(1.0, 0).unwrap();
        let pop = simulate(&law, &StopRule::TimeHorizon(2.0), 9).unwrap();
        assert!(coming_generation(&pop, -1.0).unwrap().is_empty());
        assert_eq!(nerman_w(&pop, 1.0, -0.5).unwrap(), 0.0);
        let first = pop.children(NodeId::ROOT).next().unwrap();
        let t = pop.birth_time(first) * 0.999;
        let c = coming_generation(&pop, t).unwrap();
        let root_kids: Vec<NodeId> = pop.children(NodeId::ROOT).collect();
        assert_eq!(c, root_kids);
        assert!(matches!(coming_generation(&pop, 2.5), Err(Error::Undecidable(_))));
    }

    #[test]
    fn threshold_gives_exact_size_for_continuous_law() {
        let law = BirthLaw::poisson(1.0, 0).unwrap();
        let pop = simulate(&law, &StopRule::WeightThreshold(100), 4).unwrap();
        assert_eq!(pop.born_count(), 100);
    }

    #[test]
    fn labels_round_trip() {
        let law = BirthLaw::galton_watson(vec![0.2, 0.3, 0.5]).unwrap();
        let pop = simulate(&law, &StopRule::TimeHorizon(6.0), 11).unwrap();
        for (id, _) in pop.nodes().take(200) {
            let l = pop.label(id);
            assert_eq!(l.len() as u32, pop.node(id).generation);
            assert_eq!(pop.find(&l), Some(id));
        }
    }

    #[test]
    fn node_cap_is_enforced() {
        let limits = SimLimits::from_stop(&StopRule::TimeHorizon(20.0)).unwrap().with_node_cap(1000);
        let mut rng = stream(1, 0);
        assert!(matches!(simulate_with(&binary(), &limits, &mut rng), Err(Error::Resource(_))));
    }

    #[test]
    fn generation_rule_needs_finite_mass() {
        let law = BirthLaw::poisson(1.0, 0).unwrap();
        assert!(matches!(simulate(&law, &StopRule::Generations(2), 1), Err(Error::Config(_))));
        let law = BirthLaw::poisson(2.0, -1).unwrap();
        let pop = simulate(&law, &StopRule::Generations(3), 1).unwrap();
        assert!(biggins(&pop, 1.0, 3).is_ok());
        assert!(biggins(&pop, 1.0, 4).is_err());
    }

    #[test]
    fn biggins_refuses_truncated_populations() {
        let law = BirthLaw::poisson(1.0, 0).unwrap();
        let pop = simulate(&law, &StopRule::TimeHorizon(3.0), 2).unwrap();
        assert!(matches!(biggins(&pop, 1.0, 1), Err(Error::Undecidable(_))));
    }
}
