//! Random rooted spanning forests.
//!
//! A rooted spanning forest `F` of a graph with absorption weights `q_i` is
//! drawn with probability proportional to `Π_{e∈F} w(e) · Π_{roots r} q_r`.
//! The sampler is Wilson's loop-erased random walk run against an absorbing
//! sink: at vertex `u` the walk is absorbed with probability `q_u/(q_u + d_u)`
//! (making `u` a root) and otherwise steps to neighbor `j` with probability
//! `w(u,j)/(q_u + d_u)`. Loops are erased implicitly by overwriting the
//! `next` pointer of each visited vertex.
//!
//! [`enumerate_forests`] lists every forest of a tiny graph exactly and serves
//! as the oracle for the sampler and for the estimator moments.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Default cap on random-walk steps for one forest.
pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000_000;

/// Largest vertex count accepted by [`enumerate_forests`].
pub const ENUMERATION_MAX_N: usize = 9;
/// Largest edge count accepted by [`enumerate_forests`].
pub const ENUMERATION_MAX_M: usize = 24;

/// Independent random stream `index` of the master `seed`.
///
/// Sample `i` of a Monte Carlo run always uses `substream(seed, i)`, so the
/// draws do not depend on scheduling.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One sampler draw: a parent pointer per vertex and the root of its tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootedForest {
    root_of: Vec<usize>,
    parent: Vec<usize>,
    walk_steps: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    pub root: usize,
    pub vertices: Vec<usize>,
}

impl RootedForest {
    /// Builds a forest from parent pointers (`parent[r] == r` marks a root).
    pub fn from_parents(parent: Vec<usize>) -> Result<RootedForest> {
        let n = parent.len();
        let mut root_of = vec![usize::MAX; n];
        let mut path = Vec::new();
        for start in 0..n {
            let mut u = start;
            path.clear();
            while root_of[u] == usize::MAX && parent[u] != u {
                path.push(u);
                if path.len() > n || parent[u] >= n {
                    return Err(Error::InvalidParameter(
                        "parent pointers contain a cycle or an out-of-range id".into(),
                    ));
                }
                u = parent[u];
            }
            let r = if parent[u] == u { u } else { root_of[u] };
            root_of[u] = r;
            for &v in &path {
                root_of[v] = r;
            }
        }
        Ok(RootedForest { root_of, parent, walk_steps: 0 })
    }

    pub fn n(&self) -> usize {
        self.parent.len()
    }

    pub fn root_of(&self) -> &[usize] {
        &self.root_of
    }

    pub fn parent(&self) -> &[usize] {
        &self.parent
    }

    /// Random-walk steps spent producing this forest.
    pub fn walk_steps(&self) -> u64 {
        self.walk_steps
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.n()).filter(|&v| self.parent[v] == v).collect()
    }

    pub fn tree_count(&self) -> usize {
        self.parent.iter().enumerate().filter(|&(v, &p)| v == p).count()
    }

    /// The partition of the vertex set into trees, ordered by root id.
    pub fn trees(&self) -> Vec<Tree> {
        let mut by_root: Vec<Option<usize>> = vec![None; self.n()];
        let mut trees = Vec::new();
        for r in self.roots() {
            by_root[r] = Some(trees.len());
            trees.push(Tree { root: r, vertices: Vec::new() });
        }
        for v in 0..self.n() {
            let t = by_root[self.root_of[v]].expect("root_of points at a root");
            trees[t].vertices.push(v);
        }
        trees
    }

    /// Forest edges as `(min, max)` pairs, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = (0..self.n())
            .filter(|&v| self.parent[v] != v)
            .map(|v| (v.min(self.parent[v]), v.max(self.parent[v])))
            .collect();
        out.sort_unstable();
        out
    }

    /// Checks that every parent link is a graph edge, roots are their own
    /// roots, and each tree is connected through forest edges.
    pub fn validate(&self, graph: &Graph) -> std::result::Result<(), String> {
        if self.n() != graph.n() {
            return Err(format!("forest has {} vertices, graph {}", self.n(), graph.n()));
        }
        for v in 0..self.n() {
            let p = self.parent[v];
            if p != v && graph.weight(v, p).is_none() {
                return Err(format!("parent link {v} -> {p} is not an edge"));
            }
            let r = self.root_of[v];
            if self.parent[r] != r || self.root_of[r] != r {
                return Err(format!("root_of[{v}] = {r} is not a root"));
            }
            // walking parents must reach the root within n steps
            let mut u = v;
            for _ in 0..self.n() {
                if u == r {
                    break;
                }
                u = self.parent[u];
            }
            if u != r {
                return Err(format!("vertex {v} does not reach its root {r}"));
            }
        }
        let covered: usize = self.trees().iter().map(|t| t.vertices.len()).sum();
        if covered != self.n() {
            return Err("trees do not partition the vertex set".into());
        }
        Ok(())
    }

    /// `vertex root` lines.
    pub fn to_dump(&self) -> String {
        let mut out = String::new();
        for (v, r) in self.root_of.iter().enumerate() {
            writeln!(out, "{v} {r}").unwrap();
        }
        out
    }
}

/// Wilson-type sampler bound to one graph and one set of absorption weights.
#[derive(Debug, Clone)]
pub struct ForestSampler<'a> {
    graph: &'a Graph,
    q: &'a [f64],
    cumulative: Vec<f64>,
    step_budget: u64,
}

impl<'a> ForestSampler<'a> {
    pub fn new(graph: &'a Graph, q: &'a [f64]) -> Self {
        assert_eq!(graph.n(), q.len(), "one absorption weight per vertex");
        let mut cumulative = Vec::with_capacity(2 * graph.m());
        for i in 0..graph.n() {
            let mut acc = 0.0;
            for &w in graph.neighbor_weights(i) {
                acc += w;
                cumulative.push(acc);
            }
        }
        ForestSampler { graph, q, cumulative, step_budget: DEFAULT_STEP_BUDGET }
    }

    pub fn with_step_budget(mut self, budget: u64) -> Self {
        self.step_budget = budget;
        self
    }

    /// One step of the absorbed walk from `u`: `None` on absorption,
    /// otherwise the next vertex.
    fn step(&self, u: usize, rng: &mut impl Rng) -> Option<usize> {
        let qu = self.q[u];
        let draw = rng.random::<f64>() * (qu + self.graph.degree(u));
        if draw < qu {
            return None;
        }
        let target = draw - qu;
        let cum = &self.cumulative[self.graph.arc_range(u)];
        let k = cum.partition_point(|&c| c <= target).min(cum.len() - 1);
        Some(self.graph.neighbors(u)[k])
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Result<RootedForest> {
        let n = self.graph.n();
        let mut in_forest = vec![false; n];
        let mut next = vec![usize::MAX; n];
        let mut root_of = vec![usize::MAX; n];
        let mut steps = 0u64;
        for start in 0..n {
            let mut u = start;
            while !in_forest[u] {
                steps += 1;
                if steps > self.step_budget {
                    return Err(Error::StepBudgetExceeded { budget: self.step_budget });
                }
                match self.step(u, rng) {
                    Some(v) => {
                        next[u] = v;
                        u = v;
                    }
                    None => {
                        next[u] = u;
                        in_forest[u] = true;
                        root_of[u] = u;
                    }
                }
            }
            let root = root_of[u];
            let mut v = start;
            while !in_forest[v] {
                in_forest[v] = true;
                root_of[v] = root;
                v = next[v];
            }
        }
        Ok(RootedForest { root_of, parent: next, walk_steps: steps })
    }
}

/// Draws one rooted spanning forest with probability
/// `∝ Π_{e∈F} w(e) · Π_{roots} q_r`.
pub fn sample_forest(graph: &Graph, q: &[f64], rng: &mut impl Rng) -> Result<RootedForest> {
    if let Some(i) = q.iter().position(|&x| x.is_nan() || x <= 0.0) {
        return Err(Error::InvalidParameter(format!("q[{i}] must be positive")));
    }
    if q.len() != graph.n() {
        return Err(Error::LengthMismatch { expected: graph.n(), actual: q.len() });
    }
    ForestSampler::new(graph, q).sample(rng)
}

/// An unrooted spanning forest together with the total weight of all its
/// root choices, `Π_{e∈F} w(e) · Π_{trees T} Σ_{v∈T} q_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestFamily {
    /// Indices into [`ForestDistribution::edges`].
    pub edges: Vec<usize>,
    /// Tree label per vertex (labels dense, in order of first vertex).
    pub component: Vec<usize>,
    pub weight: f64,
}

impl ForestFamily {
    pub fn tree_count(&self) -> usize {
        self.component.iter().max().map_or(0, |c| c + 1)
    }
}

/// Every spanning forest of a tiny graph with its exact probability.
#[derive(Debug, Clone)]
pub struct ForestDistribution {
    /// Graph edges in [`Graph::edges`] order.
    pub edges: Vec<(usize, usize, f64)>,
    pub families: Vec<ForestFamily>,
    /// `Z = Σ` family weights.
    pub normalizer: f64,
    /// `det(Q + L)`, which equals `Z` by the matrix-forest theorem.
    pub determinant: f64,
    index: HashMap<Vec<usize>, usize>,
}

impl ForestDistribution {
    pub fn probability(&self, family: usize) -> f64 {
        self.families[family].weight / self.normalizer
    }

    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.families.len()).map(|f| self.probability(f)).collect()
    }

    /// Number of rooted forests, `Σ_F Π_{trees} |T|`.
    pub fn rooted_forest_count(&self) -> usize {
        self.families
            .iter()
            .map(|f| {
                let mut sizes = vec![0usize; f.tree_count()];
                for &c in &f.component {
                    sizes[c] += 1;
                }
                sizes.iter().product::<usize>()
            })
            .sum()
    }

    /// The family (edge set) a sampled forest belongs to.
    pub fn family_of(&self, forest: &RootedForest) -> Option<usize> {
        let mut key = Vec::new();
        for (u, v) in forest.edges() {
            let k = self.edges.binary_search_by(|e| (e.0, e.1).cmp(&(u, v))).ok()?;
            key.push(k);
        }
        self.index.get(&key).copied()
    }
}

struct UndoUnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UndoUnionFind {
    fn new(n: usize) -> Self {
        UndoUnionFind { parent: (0..n).collect(), size: vec![1; n] }
    }

    fn find(&self, mut x: usize) -> usize {
        while self.parent[x] != x {
            x = self.parent[x];
        }
        x
    }

    /// Returns the absorbed root so the union can be undone.
    fn union(&mut self, a: usize, b: usize) -> Option<usize> {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return None;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        Some(rb)
    }

    fn undo(&mut self, rb: usize) {
        let ra = self.parent[rb];
        self.size[ra] -= self.size[rb];
        self.parent[rb] = rb;
    }
}

/// Exhaustively enumerates the spanning forests of a graph with at most
/// [`ENUMERATION_MAX_N`] vertices and [`ENUMERATION_MAX_M`] edges.
///
/// Root choices are summed analytically per tree, so each entry is an edge
/// set weighted by `Π w(e) · Π_T Σ_{v∈T} q_v`.
pub fn enumerate_forests(graph: &Graph, q: &[f64]) -> Result<ForestDistribution> {
    let n = graph.n();
    if n > ENUMERATION_MAX_N {
        return Err(Error::SizeExceeded { operation: "enumerate_forests", n, limit: ENUMERATION_MAX_N });
    }
    if graph.m() > ENUMERATION_MAX_M {
        return Err(Error::SizeExceeded {
            operation: "enumerate_forests (edges)",
            n: graph.m(),
            limit: ENUMERATION_MAX_M,
        });
    }
    if q.len() != n {
        return Err(Error::LengthMismatch { expected: n, actual: q.len() });
    }
    let edges = graph.edges();
    let mut families = Vec::new();
    let mut uf = UndoUnionFind::new(n);
    let mut chosen = Vec::new();
    enumerate_rec(0, &edges, q, &mut uf, &mut chosen, &mut families);

    let normalizer = families.iter().map(|f| f.weight).sum();
    let mut system = crate::linalg::LaplacianOperator::new(graph).to_dense();
    for (i, &qi) in q.iter().enumerate() {
        system[(i, i)] += qi;
    }
    let determinant = system.determinant();
    let index = families
        .iter()
        .enumerate()
        .map(|(k, f)| (f.edges.clone(), k))
        .collect();
    Ok(ForestDistribution { edges, families, normalizer, determinant, index })
}

fn enumerate_rec(
    idx: usize,
    edges: &[(usize, usize, f64)],
    q: &[f64],
    uf: &mut UndoUnionFind,
    chosen: &mut Vec<usize>,
    out: &mut Vec<ForestFamily>,
) {
    if idx == edges.len() {
        out.push(family_from(uf, chosen, edges, q));
        return;
    }
    enumerate_rec(idx + 1, edges, q, uf, chosen, out);
    let (u, v, _) = edges[idx];
    if let Some(undo) = uf.union(u, v) {
        chosen.push(idx);
        enumerate_rec(idx + 1, edges, q, uf, chosen, out);
        chosen.pop();
        uf.undo(undo);
    }
}

fn family_from(
    uf: &UndoUnionFind,
    chosen: &[usize],
    edges: &[(usize, usize, f64)],
    q: &[f64],
) -> ForestFamily {
    let n = q.len();
    let mut label_of_root = vec![usize::MAX; n];
    let mut component = vec![0; n];
    let mut root_mass = Vec::new();
    for v in 0..n {
        let r = uf.find(v);
        if label_of_root[r] == usize::MAX {
            label_of_root[r] = root_mass.len();
            root_mass.push(0.0);
        }
        component[v] = label_of_root[r];
        root_mass[component[v]] += q[v];
    }
    let edge_weight: f64 = chosen.iter().map(|&k| edges[k].2).product();
    ForestFamily {
        edges: chosen.to_vec(),
        component,
        weight: edge_weight * root_mass.iter().product::<f64>(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_graph, GraphModel};
    use proptest::prelude::*;

    fn graph(text: &str) -> Graph {
        Graph::parse_edge_list(text).unwrap()
    }

    #[test]
    fn path_enumeration() {
        let g = graph("0 1\n1 2");
        let dist = enumerate_forests(&g, &[1.0; 3]).unwrap();
        assert_eq!(dist.families.len(), 4);
        assert_eq!(dist.rooted_forest_count(), 8);
        assert_eq!(dist.normalizer, 8.0);
        assert!((dist.determinant - 8.0).abs() < 1e-12);
        let mut weights: Vec<f64> = dist.families.iter().map(|f| f.weight).collect();
        weights.sort_by(f64::total_cmp);
        assert_eq!(weights, vec![1.0, 2.0, 2.0, 3.0]);
    }

    #[test]
    fn single_edge_enumeration() {
        let g = graph("0 1");
        let dist = enumerate_forests(&g, &[1.0; 2]).unwrap();
        assert_eq!(dist.rooted_forest_count(), 3);
        assert_eq!(dist.normalizer, 3.0);
        assert!((dist.determinant - 3.0).abs() < 1e-12);
    }

    #[test]
    fn triangle_enumeration() {
        let g = graph("0 1\n1 2\n0 2");
        let dist = enumerate_forests(&g, &[1.0; 3]).unwrap();
        assert_eq!(dist.families.len(), 7);
        assert_eq!(dist.normalizer, 16.0);
        assert!((dist.determinant - 16.0).abs() < 1e-12);
    }

    #[test]
    fn enumeration_size_limits() {
        let g = gen_graph(&GraphModel::Grid { rows: 2, cols: 5 }, 0).unwrap();
        assert!(matches!(
            enumerate_forests(&g, &[1.0; 10]),
            Err(Error::SizeExceeded { .. })
        ));
    }

    #[test]
    fn single_node_forest() {
        let g = Graph::from_edges(1, &[]).unwrap();
        let f = sample_forest(&g, &[0.5], &mut substream(1, 0)).unwrap();
        assert_eq!(f.root_of(), &[0]);
        assert_eq!(f.trees(), vec![Tree { root: 0, vertices: vec![0] }]);
    }

    #[test]
    fn huge_absorption_gives_singletons() {
        let g = gen_graph(&GraphModel::Grid { rows: 4, cols: 4 }, 0).unwrap();
        let q = vec![1e9; 16];
        for i in 0..50 {
            let f = sample_forest(&g, &q, &mut substream(3, i)).unwrap();
            assert_eq!(f.tree_count(), 16);
        }
    }

    #[test]
    fn step_budget_is_enforced() {
        let g = gen_graph(&GraphModel::Grid { rows: 6, cols: 6 }, 0).unwrap();
        let q = vec![1e-6; 36];
        let err = ForestSampler::new(&g, &q)
            .with_step_budget(100)
            .sample(&mut substream(0, 0))
            .unwrap_err();
        assert!(matches!(err, Error::StepBudgetExceeded { budget: 100 }));
    }

    #[test]
    fn same_stream_same_forest() {
        let g = gen_graph(&GraphModel::RandomKnn { n: 50, k: 4 }, 2).unwrap();
        let q = vec![0.3; 50];
        let a = sample_forest(&g, &q, &mut substream(11, 5)).unwrap();
        let b = sample_forest(&g, &q, &mut substream(11, 5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampled_families_are_enumerated() {
        let g = graph("0 1 2.0\n1 2\n2 3 0.5\n3 0\n1 3");
        let q = [0.4, 1.0, 2.0, 0.7];
        let dist = enumerate_forests(&g, &q).unwrap();
        for i in 0..200 {
            let f = sample_forest(&g, &q, &mut substream(9, i)).unwrap();
            assert!(dist.family_of(&f).is_some());
        }
    }

    #[test]
    fn from_parents_round_trip() {
        let f = RootedForest::from_parents(vec![1, 1, 1, 3]).unwrap();
        assert_eq!(f.root_of(), &[1, 1, 1, 3]);
        assert_eq!(f.edges(), vec![(0, 1), (1, 2)]);
        assert_eq!(f.to_dump(), "0 1\n1 1\n2 1\n3 3\n");
        assert!(RootedForest::from_parents(vec![1, 0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn forests_partition_the_graph(seed in 0u64..10_000, q in 0.01f64..5.0) {
            let g = gen_graph(&GraphModel::RandomKnn { n: 40, k: 3 }, seed % 50).unwrap();
            let qs = vec![q; 40];
            let f = sample_forest(&g, &qs, &mut substream(seed, 0)).unwrap();
            prop_assert_eq!(f.validate(&g), Ok(()));
            for r in f.roots() {
                prop_assert_eq!(f.root_of()[r], r);
            }
            prop_assert_eq!(f.edges().len() + f.tree_count(), 40);
        }
    }
}
