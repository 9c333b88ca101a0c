//! VR-overlap graph, independent-set reduction and user grouping for
//! partial zero-forcing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::detectors::Scheme;
use crate::error::{domain, Result};
use crate::visibility::VisibilityRegion;

/// Undirected graph on users; an edge joins two users whose VRs overlap by
/// at least `s_ovp` of the smaller VR.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapGraph {
    adjacency: Vec<Vec<usize>>,
    edges: usize,
}

impl OverlapGraph {
    /// Builds a graph from explicit edges. Self-loops and duplicates are
    /// rejected.
    pub fn from_edges(k: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); k];
        for &(a, b) in edges {
            if a >= k || b >= k {
                return Err(domain(format!("edge ({a}, {b}) out of range for {k} vertices")));
            }
            if a == b {
                return Err(domain(format!("self-loop on vertex {a}")));
            }
            if adjacency[a].contains(&b) {
                return Err(domain(format!("duplicate edge ({a}, {b})")));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for n in adjacency.iter_mut() {
            n.sort_unstable();
        }
        Ok(Self {
            adjacency,
            edges: edges.len(),
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edges);
        for (a, n) in self.adjacency.iter().enumerate() {
            out.extend(n.iter().filter(|&&b| b > a).map(|&b| (a, b)));
        }
        out
    }

    pub fn is_independent(&self, set: &[usize]) -> bool {
        set.iter()
            .enumerate()
            .all(|(i, &a)| set[i + 1..].iter().all(|&b| !self.has_edge(a, b)))
    }

    /// Independent and no vertex outside can be added.
    pub fn is_maximal_independent(&self, set: &[usize]) -> bool {
        if !self.is_independent(set) {
            return false;
        }
        let mut inside = vec![false; self.vertex_count()];
        for &v in set {
            inside[v] = true;
        }
        (0..self.vertex_count())
            .filter(|&w| !inside[w])
            .all(|w| self.adjacency[w].iter().any(|&u| inside[u]))
    }
}

fn overlap_ratio(a: &VisibilityRegion, b: &VisibilityRegion) -> f64 {
    a.overlap(b) as f64 / a.len().min(b.len()) as f64
}

/// Edge `(k, i)` iff `|B_k ∩ B_i| ≥ s_ovp · min(|B_k|, |B_i|)`.
///
/// `s_ovp = 0` gives the complete graph, since `0 ≥ 0` holds for disjoint
/// VRs too.
pub fn build_overlap_graph(vrs: &[VisibilityRegion], s_ovp: f64) -> Result<OverlapGraph> {
    if vrs.is_empty() {
        return Err(domain("at least one user is required"));
    }
    if !(0.0..=1.0).contains(&s_ovp) {
        return Err(domain(format!("s_ovp must lie in [0, 1], got {s_ovp}")));
    }
    if let Some(vr) = vrs.iter().find(|v| v.is_empty()) {
        return Err(domain(format!("user {} has an empty VR", vr.user)));
    }
    let k = vrs.len();
    let adjacency: Vec<Vec<usize>> = (0..k)
        .into_par_iter()
        .map(|a| {
            (0..k)
                .filter(|&b| {
                    b != a && {
                        let need = s_ovp * vrs[a].len().min(vrs[b].len()) as f64;
                        vrs[a].overlap(&vrs[b]) as f64 >= need
                    }
                })
                .collect()
        })
        .collect();
    let edges = adjacency.iter().map(Vec::len).sum::<usize>() / 2;
    Ok(OverlapGraph { adjacency, edges })
}

/// Reduction strategy for [`independent_set`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MisStrategy {
    /// Take a minimum-degree vertex, drop its closed neighbourhood, repeat.
    /// Covers the degree-0 and degree-1 rules and is optimal on paths and
    /// cycles.
    #[default]
    MinDegreeGreedy,
    /// Degree-0/1/2 reductions; otherwise delete a maximum-degree vertex.
    /// A final pass restores maximality.
    MaxDegreeDeletion,
}

/// Working copy of the graph with vertex deletion.
struct Residual<'a> {
    g: &'a OverlapGraph,
    alive: Vec<bool>,
    degree: Vec<usize>,
}

impl<'a> Residual<'a> {
    fn new(g: &'a OverlapGraph) -> Self {
        Self {
            g,
            alive: vec![true; g.vertex_count()],
            degree: (0..g.vertex_count()).map(|v| g.degree(v)).collect(),
        }
    }

    fn remove(&mut self, v: usize) {
        if !self.alive[v] {
            return;
        }
        self.alive[v] = false;
        for &n in self.g.neighbors(v) {
            if self.alive[n] {
                self.degree[n] -= 1;
            }
        }
    }

    /// Adds `v` to the set and deletes its closed neighbourhood.
    fn take(&mut self, v: usize, set: &mut Vec<usize>) {
        set.push(v);
        let nbrs: Vec<usize> = self
            .g
            .neighbors(v)
            .iter()
            .copied()
            .filter(|&n| self.alive[n])
            .collect();
        self.remove(v);
        for n in nbrs {
            self.remove(n);
        }
    }

    /// Alive vertex minimising `key`, smallest index on ties.
    fn pick(&self, key: impl Fn(usize) -> i64) -> Option<usize> {
        (0..self.alive.len())
            .filter(|&v| self.alive[v])
            .min_by_key(|&v| (key(v), v))
    }
}

/// Maximal independent set by degree-based reduction followed by an
/// iterated (1,2)-swap local search. Deterministic: ties go to the smallest
/// vertex index. Returned sorted.
pub fn independent_set(g: &OverlapGraph, strategy: MisStrategy) -> Vec<usize> {
    let mut res = Residual::new(g);
    let mut set = Vec::new();
    match strategy {
        MisStrategy::MinDegreeGreedy => {
            while let Some(v) = res.pick(|v| res.degree[v] as i64) {
                res.take(v, &mut set);
            }
        }
        MisStrategy::MaxDegreeDeletion => {
            while let Some(v) = res.pick(|v| res.degree[v] as i64) {
                if res.degree[v] <= 2 {
                    res.take(v, &mut set);
                } else {
                    let worst = res.pick(|v| -(res.degree[v] as i64)).unwrap_or(v);
                    res.remove(worst);
                }
            }
            let mut inside = vec![false; g.vertex_count()];
            for &v in &set {
                inside[v] = true;
            }
            for w in 0..g.vertex_count() {
                if !inside[w] && g.neighbors(w).iter().all(|&u| !inside[u]) {
                    inside[w] = true;
                    set.push(w);
                }
            }
        }
    }
    improve(g, &mut set);
    set.sort_unstable();
    set
}

/// Kicks per vertex in the iterated local search.
const SEARCH_ROUNDS_PER_VERTEX: usize = 20;

/// Independent set under local search, with the count of set
/// neighbours of every vertex.
struct LocalSearch<'a> {
    g: &'a OverlapGraph,
    inside: Vec<bool>,
    tight: Vec<usize>,
    size: usize,
}

impl<'a> LocalSearch<'a> {
    fn new(g: &'a OverlapGraph, set: &[usize]) -> Self {
        let mut s = Self {
            g,
            inside: vec![false; g.vertex_count()],
            tight: vec![0; g.vertex_count()],
            size: 0,
        };
        for &v in set {
            s.flip(v, true);
        }
        s
    }

    fn flip(&mut self, v: usize, add: bool) {
        self.inside[v] = add;
        if add {
            self.size += 1;
        } else {
            self.size -= 1;
        }
        for &u in self.g.neighbors(v) {
            if add {
                self.tight[u] += 1;
            } else {
                self.tight[u] -= 1;
            }
        }
    }

    fn fill(&mut self) {
        for v in 0..self.inside.len() {
            if !self.inside[v] && self.tight[v] == 0 {
                self.flip(v, true);
            }
        }
    }

    /// (1,2)-swaps: while some set vertex `x` has two non-adjacent
    /// neighbours whose only set neighbour is `x`, swap `x` for both and
    /// refill. Every swap grows the set, so this ends within `K` swaps.
    fn two_improve(&mut self) {
        let g = self.g;
        'search: loop {
            for x in (0..self.inside.len()).filter(|&x| self.inside[x]) {
                let free: Vec<usize> = g.neighbors(x).iter().copied().filter(|&u| self.tight[u] == 1).collect();
                for (i, &u) in free.iter().enumerate() {
                    if let Some(&w) = free[i + 1..].iter().find(|&&w| !g.has_edge(u, w)) {
                        self.flip(x, false);
                        self.flip(u, true);
                        self.flip(w, true);
                        self.fill();
                        continue 'search;
                    }
                }
            }
            return;
        }
    }

    /// Forces `v` into the set, evicting its set neighbours.
    fn force(&mut self, v: usize) {
        let evict: Vec<usize> = self.g.neighbors(v).iter().copied().filter(|&u| self.inside[u]).collect();
        for u in evict {
            self.flip(u, false);
        }
        self.flip(v, true);
        self.fill();
    }

    fn members(&self) -> Vec<usize> {
        (0..self.inside.len()).filter(|&v| self.inside[v]).collect()
    }
}

/// Iterated local search: (1,2)-swaps, then repeated random kicks from
/// the best set found, keeping any non-worse result. The RNG has a fixed
/// seed, so the outcome depends on the graph only.
fn improve(g: &OverlapGraph, set: &mut Vec<usize>) {
    let n = g.vertex_count();
    let mut cur = LocalSearch::new(g, set);
    cur.two_improve();
    let mut best = cur.members();
    if n > 0 && best.len() < n {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
        for _ in 0..SEARCH_ROUNDS_PER_VERTEX * n {
            let outside: Vec<usize> = (0..n).filter(|&v| !cur.inside[v]).collect();
            if outside.is_empty() {
                break;
            }
            cur.force(outside[rng.random_range(0..outside.len())]);
            cur.two_improve();
            if cur.size >= best.len() {
                best = cur.members();
            } else {
                cur = LocalSearch::new(g, &best);
            }
        }
    }
    *set = best;
}

/// Disjoint user groups, one anchor each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserGrouping {
    /// Anchor users, ascending.
    pub anchors: Vec<usize>,
    /// `groups[j]` belongs to `anchors[j]`; members ascending.
    pub groups: Vec<Vec<usize>>,
}

impl UserGrouping {
    pub fn group_of(&self, user: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.binary_search(&user).is_ok())
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }
}

/// Groups every user with an adjacent anchor. A user adjacent to several
/// anchors joins the one whose VR it overlaps most (by overlap ratio),
/// ties to the smallest anchor.
pub fn form_groups(
    g: &OverlapGraph,
    anchors: &[usize],
    vrs: &[VisibilityRegion],
) -> Result<UserGrouping> {
    let k = g.vertex_count();
    if vrs.len() != k {
        return Err(domain(format!("{} VRs for {k} users", vrs.len())));
    }
    let mut anchors = anchors.to_vec();
    anchors.sort_unstable();
    anchors.dedup();
    if !g.is_maximal_independent(&anchors) {
        return Err(domain("anchors are not a maximal independent set"));
    }
    let mut groups: Vec<Vec<usize>> = anchors.iter().map(|&a| vec![a]).collect();
    for w in 0..k {
        if anchors.binary_search(&w).is_ok() {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (j, &a) in anchors.iter().enumerate() {
            if g.has_edge(w, a) {
                let r = overlap_ratio(&vrs[w], &vrs[a]);
                if best.is_none_or(|(_, b)| r > b) {
                    best = Some((j, r));
                }
            }
        }
        // Maximality guarantees an adjacent anchor.
        let (j, _) = best.expect("maximal set dominates every vertex");
        groups[j].push(w);
    }
    for gr in groups.iter_mut() {
        gr.sort_unstable();
    }
    Ok(UserGrouping { anchors, groups })
}

/// Graph, anchors and groups in one call.
pub fn partition_users(
    vrs: &[VisibilityRegion],
    s_ovp: f64,
    strategy: MisStrategy,
) -> Result<(OverlapGraph, UserGrouping)> {
    let g = build_overlap_graph(vrs, s_ovp)?;
    let anchors = independent_set(&g, strategy);
    let grouping = form_groups(&g, &anchors, vrs)?;
    Ok((g, grouping))
}

/// Operation-count estimate with unit constants (`log` base 2).
///
/// * WA-ZF: `M²K² + K⁴`
/// * VR-ZF: `(B/S)²M²K² + K⁴ + KS log S`
/// * UP-PZF: `(B/S)²M²K²/I + K⁴/I³ + KS log S`
///
/// `mean_b` is the mean VR size in sub-arrays and `i_count` the number of
/// groups. Meant for trend comparison only.
pub fn complexity_estimate(
    scheme: Scheme,
    m: f64,
    k: f64,
    s: f64,
    mean_b: f64,
    i_count: f64,
) -> Result<f64> {
    for (name, v) in [("M", m), ("K", k), ("S", s), ("|B|", mean_b), ("|I|", i_count)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(domain(format!("{name} must be positive, got {v}")));
        }
    }
    let frac = mean_b / s;
    let sort = k * s * s.log2();
    Ok(match scheme {
        Scheme::Zf => m * m * k * k + k.powi(4),
        Scheme::VrZf => frac * frac * m * m * k * k + k.powi(4) + sort,
        Scheme::Pzf => frac * frac * m * m * k * k / i_count + k.powi(4) / i_count.powi(3) + sort,
        other => return Err(domain(format!("no complexity estimate for {other}"))),
    })
}
