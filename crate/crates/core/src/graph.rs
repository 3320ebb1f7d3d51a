//! Weighted undirected graphs in compressed adjacency form.
//!
//! A [`Graph`] is immutable once built. Every undirected edge `{u, v}` is
//! stored as the two arcs `u → v` and `v → u` with the same weight, and the
//! weighted degrees `d_i = Σ_j w(i, j)` are cached alongside.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Maximum number of reseeded attempts when a generator produces a
/// disconnected graph.
pub const MAX_CONNECTIVITY_RETRIES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
    degrees: Vec<f64>,
    d_max: f64,
    m: usize,
}

impl Graph {
    /// Builds a connected graph on `n` vertices from undirected edges `(u, v, w)`.
    ///
    /// Each undirected edge must appear once (in either orientation).
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Graph> {
        let g = Self::build(n, edges)?;
        let components = g.component_count();
        if components > 1 {
            return Err(Error::Disconnected { components });
        }
        Ok(g)
    }

    fn build(n: usize, edges: &[(usize, usize, f64)]) -> Result<Graph> {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut counts = vec![0usize; n];
        for &(u, v, w) in edges {
            for x in [u, v] {
                if x >= n {
                    return Err(Error::VertexOutOfRange { vertex: x, n });
                }
            }
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::NonPositiveWeight { u, v, weight: w });
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(Error::DuplicateEdge {
                    u: u.min(v),
                    v: u.max(v),
                });
            }
            counts[u] += 1;
            counts[v] += 1;
        }

        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for c in &counts {
            offsets.push(offsets.last().unwrap() + c);
        }
        let mut fill = offsets[..n].to_vec();
        let mut targets = vec![0usize; 2 * edges.len()];
        let mut weights = vec![0.0; 2 * edges.len()];
        for &(u, v, w) in edges {
            targets[fill[u]] = v;
            weights[fill[u]] = w;
            fill[u] += 1;
            targets[fill[v]] = u;
            weights[fill[v]] = w;
            fill[v] += 1;
        }
        // sort each adjacency list by neighbor id so the layout does not
        // depend on input edge order
        for i in 0..n {
            let (lo, hi) = (offsets[i], offsets[i + 1]);
            let mut arcs: Vec<(usize, f64)> = targets[lo..hi]
                .iter()
                .copied()
                .zip(weights[lo..hi].iter().copied())
                .collect();
            arcs.sort_by_key(|a| a.0);
            for (k, (t, w)) in arcs.into_iter().enumerate() {
                targets[lo + k] = t;
                weights[lo + k] = w;
            }
        }

        let degrees: Vec<f64> = (0..n)
            .map(|i| weights[offsets[i]..offsets[i + 1]].iter().sum())
            .collect();
        let d_max = degrees.iter().copied().fold(0.0, f64::max);
        Ok(Graph {
            offsets,
            targets,
            weights,
            degrees,
            d_max,
            m: edges.len(),
        })
    }

    /// Number of vertices.
    pub fn n(&self) -> usize {
        self.degrees.len()
    }

    /// Number of undirected edges.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Positions of `i`'s arcs in the compressed arc arrays.
    pub fn arc_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Neighbor ids of `i`, sorted ascending.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Weights aligned with [`Graph::neighbors`].
    pub fn neighbor_weights(&self, i: usize) -> &[f64] {
        &self.weights[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn arcs(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.neighbors(i)
            .iter()
            .copied()
            .zip(self.neighbor_weights(i).iter().copied())
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.degrees[i]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    /// Per-vertex weighted degrees and their maximum.
    pub fn degrees_and_dmax(&self) -> (Vec<f64>, f64) {
        (self.degrees.clone(), self.d_max)
    }

    /// Weight of edge `{u, v}`, if present.
    pub fn weight(&self, u: usize, v: usize) -> Option<f64> {
        let nbrs = self.neighbors(u);
        nbrs.binary_search(&v)
            .ok()
            .map(|k| self.neighbor_weights(u)[k])
    }

    /// Undirected edges `(u, v, w)` with `u < v`, sorted lexicographically.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.m);
        for u in 0..self.n() {
            for (v, w) in self.arcs(u) {
                if u < v {
                    out.push((u, v, w));
                }
            }
        }
        out
    }

    pub fn total_weight(&self) -> f64 {
        self.edges().iter().map(|e| e.2).sum()
    }

    /// Component label per vertex (labels are dense, in order of first vertex).
    pub fn component_labels(&self) -> Vec<usize> {
        let n = self.n();
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = next;
            stack.push(s);
            while let Some(u) = stack.pop() {
                for &v in self.neighbors(u) {
                    if label[v] == usize::MAX {
                        label[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn component_count(&self) -> usize {
        self.component_labels()
            .into_iter()
            .max()
            .map_or(0, |c| c + 1)
    }

    /// Parses the edge-list format: one `u v [w]` per line, 0-based ids,
    /// `#` starts a comment, weight defaults to 1.
    pub fn parse_edge_list(text: &str) -> Result<Graph> {
        let mut edges = Vec::new();
        let mut seen = HashSet::new();
        let mut max_id = None::<usize>;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() < 2 || tokens.len() > 3 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected `u v [w]`, found {} fields", tokens.len()),
                });
            }
            let parse_id = |s: &str| {
                s.parse::<usize>().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("invalid vertex id `{s}`"),
                })
            };
            let u = parse_id(tokens[0])?;
            let v = parse_id(tokens[1])?;
            let w = match tokens.get(2) {
                Some(s) => s.parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("invalid weight `{s}`"),
                })?,
                None => 1.0,
            };
            if u == v {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("self-loop at vertex {u}"),
                });
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::NonPositiveWeight { u, v, weight: w });
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(Error::DuplicateEdge {
                    u: u.min(v),
                    v: u.max(v),
                });
            }
            max_id = Some(max_id.map_or(u.max(v), |m| m.max(u).max(v)));
            edges.push((u, v, w));
        }
        let n = max_id.map_or(0, |m| m + 1);
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut touched = vec![false; n];
        for &(u, v, _) in &edges {
            touched[u] = true;
            touched[v] = true;
        }
        if let Some(gap) = touched.iter().position(|t| !t) {
            return Err(Error::VertexGap(gap));
        }
        Graph::from_edges(n, &edges)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Graph> {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse_edge_list(&text)
    }

    /// Sorted `u v w` lines with 17 significant digits per weight.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (u, v, w) in self.edges() {
            writeln!(out, "{u} {v} {w:.16e}").unwrap();
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(&path, self.to_edge_list()).map_err(|e| Error::io(&path, e))
    }
}

/// Planar coordinates, one pair per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct NodePositions {
    pub coords: Vec<(f64, f64)>,
}

impl NodePositions {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Parses `x,y` lines.
    pub fn parse(text: &str) -> Result<NodePositions> {
        let mut coords = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = || Error::Parse {
                line: idx + 1,
                message: format!("expected `x,y`, found `{line}`"),
            };
            let (x, y) = line.split_once(',').ok_or_else(bad)?;
            let x: f64 = x.trim().parse().map_err(|_| bad())?;
            let y: f64 = y.trim().parse().map_err(|_| bad())?;
            coords.push((x, y));
        }
        Ok(NodePositions { coords })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<NodePositions> {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse(&text)
    }

    pub fn uniform_unit_square(n: usize, rng: &mut impl Rng) -> NodePositions {
        NodePositions {
            coords: (0..n).map(|_| (rng.random(), rng.random())).collect(),
        }
    }
}

/// Random and deterministic graph families.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphModel {
    /// Uniform-ish random `degree`-regular graph on `n` vertices.
    Regular { n: usize, degree: usize },
    /// Preferential attachment: a `k`-clique, then every new vertex attaches
    /// `k` edges to distinct existing vertices chosen with probability
    /// proportional to degree.
    BarabasiAlbert { n: usize, k: usize },
    Grid { rows: usize, cols: usize },
    /// Symmetrized k-nearest-neighbour graph on given positions.
    Knn { k: usize, positions: NodePositions },
    /// k-nearest-neighbour graph on `n` uniform points in the unit square.
    RandomKnn { n: usize, k: usize },
    /// `cliques` complete graphs of `size` vertices, consecutive cliques
    /// joined by a single edge.
    CliqueChain { cliques: usize, size: usize },
}

impl GraphModel {
    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self {
            GraphModel::Regular { n, degree } => {
                if *n == 0 || *degree == 0 || degree >= n {
                    return bad(format!("regular graph needs 0 < d < n (d={degree}, n={n})"));
                }
                if (n * degree) % 2 != 0 {
                    return bad(format!("regular graph needs d·n even (d={degree}, n={n})"));
                }
            }
            GraphModel::BarabasiAlbert { n, k } => {
                if *k == 0 || k >= n {
                    return bad(format!("Barabási–Albert needs 0 < k < n (k={k}, n={n})"));
                }
            }
            GraphModel::Grid { rows, cols } => {
                if *rows == 0 || *cols == 0 {
                    return bad("grid dimensions must be positive".into());
                }
            }
            GraphModel::Knn { k, positions } => {
                if *k == 0 || *k >= positions.len() {
                    return bad(format!("k-NN needs 0 < k < n (k={k}, n={})", positions.len()));
                }
            }
            GraphModel::RandomKnn { n, k } => {
                if *k == 0 || k >= n {
                    return bad(format!("k-NN needs 0 < k < n (k={k}, n={n})"));
                }
            }
            GraphModel::CliqueChain { cliques, size } => {
                if *cliques == 0 || *size == 0 {
                    return bad("clique chain needs positive clique count and size".into());
                }
            }
        }
        Ok(())
    }

    fn is_random(&self) -> bool {
        matches!(
            self,
            GraphModel::Regular { .. } | GraphModel::BarabasiAlbert { .. } | GraphModel::RandomKnn { .. }
        )
    }
}

/// Generates a connected graph from `model`.
///
/// Random models are reseeded (stream `attempt` of the seed) until the result
/// is connected, at most [`MAX_CONNECTIVITY_RETRIES`] times.
pub fn gen_graph(model: &GraphModel, seed: u64) -> Result<Graph> {
    model.validate()?;
    let attempts = if model.is_random() {
        MAX_CONNECTIVITY_RETRIES
    } else {
        1
    };
    for attempt in 0..attempts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt as u64);
        let (n, edges) = match model {
            GraphModel::Regular { n, degree } => match regular_edges(*n, *degree, &mut rng) {
                Some(e) => (*n, e),
                None => continue,
            },
            GraphModel::BarabasiAlbert { n, k } => (*n, barabasi_albert_edges(*n, *k, &mut rng)),
            GraphModel::Grid { rows, cols } => (rows * cols, grid_edges(*rows, *cols)),
            GraphModel::Knn { k, positions } => (positions.len(), knn_edges(positions, *k)),
            GraphModel::RandomKnn { n, k } => {
                let positions = NodePositions::uniform_unit_square(*n, &mut rng);
                (*n, knn_edges(&positions, *k))
            }
            GraphModel::CliqueChain { cliques, size } => {
                (cliques * size, clique_chain_edges(*cliques, *size))
            }
        };
        match Graph::from_edges(n, &edges) {
            Err(Error::Disconnected { components }) if !model.is_random() => {
                return Err(Error::Disconnected { components })
            }
            Err(Error::Disconnected { .. }) => continue,
            other => return other,
        }
    }
    Err(Error::ConnectivityNotAchieved { attempts })
}

fn unit(edges: impl IntoIterator<Item = (usize, usize)>) -> Vec<(usize, usize, f64)> {
    edges.into_iter().map(|(u, v)| (u, v, 1.0)).collect()
}

/// Stub pairing with rejection of self-loops and repeated edges; leftover
/// stubs are re-paired among themselves while a valid pair still exists.
fn regular_edges(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Option<Vec<(usize, usize, f64)>> {
    const MAX_RESTARTS: usize = 1000;
    'restart: for _ in 0..MAX_RESTARTS {
        let mut edges = BTreeSet::new();
        let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
        while !stubs.is_empty() {
            let mut leftover: BTreeMap<usize, usize> = BTreeMap::new();
            stubs.shuffle(rng);
            for pair in stubs.chunks_exact(2) {
                let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
                if a != b && !edges.contains(&(a, b)) {
                    edges.insert((a, b));
                } else {
                    *leftover.entry(a).or_default() += 1;
                    *leftover.entry(b).or_default() += 1;
                }
            }
            if leftover.is_empty() {
                break;
            }
            let keys: Vec<usize> = leftover.keys().copied().collect();
            let pairable = keys.iter().enumerate().any(|(i, &a)| {
                keys[i + 1..].iter().any(|&b| !edges.contains(&(a, b)))
            });
            if !pairable {
                continue 'restart;
            }
            stubs = leftover
                .into_iter()
                .flat_map(|(v, c)| std::iter::repeat_n(v, c))
                .collect();
        }
        return Some(unit(edges));
    }
    None
}

fn barabasi_albert_edges(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize, f64)> {
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for u in 0..k {
        for v in (u + 1)..k {
            edges.push((u, v));
        }
    }
    // each vertex appears once per unit of degree; a lone seed vertex gets one slot
    let mut pool: Vec<usize> = (0..k).flat_map(|v| std::iter::repeat_n(v, (k - 1).max(1))).collect();
    let mut chosen = BTreeSet::new();
    for source in k..n {
        chosen.clear();
        while chosen.len() < k {
            chosen.insert(pool[rng.random_range(0..pool.len())]);
        }
        for &t in &chosen {
            edges.push((t, source));
            pool.push(t);
        }
        pool.extend(std::iter::repeat_n(source, k));
    }
    unit(edges)
}

fn grid_edges(rows: usize, cols: usize) -> Vec<(usize, usize, f64)> {
    let id = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < rows {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    unit(edges)
}

fn knn_edges(positions: &NodePositions, k: usize) -> Vec<(usize, usize, f64)> {
    let pts = &positions.coords;
    let mut edges = BTreeSet::new();
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(pts.len());
    for (i, &(xi, yi)) in pts.iter().enumerate() {
        order.clear();
        order.extend(
            pts.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, &(xj, yj))| ((xi - xj).powi(2) + (yi - yj).powi(2), j)),
        );
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in order.iter().take(k) {
            edges.insert((i.min(j), i.max(j)));
        }
    }
    unit(edges)
}

fn clique_chain_edges(cliques: usize, size: usize) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for c in 0..cliques {
        let base = c * size;
        for a in 0..size {
            for b in (a + 1)..size {
                edges.push((base + a, base + b));
            }
        }
        if c + 1 < cliques {
            edges.push((base + size - 1, base + size));
        }
    }
    unit(edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn path3() -> Graph {
        Graph::parse_edge_list("0 1\n1 2").unwrap()
    }

    #[test]
    fn parses_path() {
        let g = path3();
        assert_eq!((g.n(), g.m()), (3, 2));
        assert_eq!(g.weight(0, 1), Some(1.0));
        assert_eq!(g.weight(0, 2), None);
    }

    #[test]
    fn rejects_duplicate_undirected_edge() {
        let err = Graph::parse_edge_list("0 1 2.0\n1 0 2.0").unwrap_err();
        assert!(matches!(err, Error::DuplicateEdge { u: 0, v: 1 }), "{err}");
    }

    #[test]
    fn rejects_disconnected() {
        let err = Graph::parse_edge_list("0 1\n2 3").unwrap_err();
        assert!(matches!(err, Error::Disconnected { components: 2 }), "{err}");
    }

    #[test]
    fn rejects_bad_lines() {
        let err = Graph::parse_edge_list("# header\n0 1\n1 x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = Graph::parse_edge_list("0 1 -1.0").unwrap_err();
        assert!(matches!(err, Error::NonPositiveWeight { .. }));
        let err = Graph::parse_edge_list("0 1\n1 3").unwrap_err();
        assert!(matches!(err, Error::VertexGap(2)));
        assert!(matches!(Graph::parse_edge_list("# nothing\n"), Err(Error::EmptyGraph)));
    }

    #[test]
    fn comments_and_weights() {
        let g = Graph::parse_edge_list("# c\n0 1 0.5 # trailing\n\n1 2 2\n").unwrap();
        assert_eq!(g.degrees(), &[0.5, 2.5, 2.0]);
    }

    #[test]
    fn degrees_of_small_graphs() {
        assert_eq!(path3().degrees_and_dmax(), (vec![1.0, 2.0, 1.0], 2.0));
        let tri = Graph::parse_edge_list("0 1\n1 2\n0 2").unwrap();
        assert_eq!(tri.degrees_and_dmax(), (vec![2.0, 2.0, 2.0], 2.0));
        let star = Graph::parse_edge_list("0 1\n0 2\n0 3\n0 4").unwrap();
        assert_eq!(star.d_max(), 4.0);
    }

    #[test]
    fn grid_2x2_is_square() {
        let g = gen_graph(&GraphModel::Grid { rows: 2, cols: 2 }, 0).unwrap();
        assert_eq!((g.n(), g.m()), (4, 4));
    }

    #[test]
    fn regular_graph_sizes() {
        let g = gen_graph(&GraphModel::Regular { n: 1000, degree: 20 }, 7).unwrap();
        assert_eq!((g.n(), g.m()), (1000, 10000));
        assert!(g.degrees().iter().all(|&d| d == 20.0));
    }

    #[test]
    fn barabasi_albert_sizes() {
        let g = gen_graph(&GraphModel::BarabasiAlbert { n: 1000, k: 10 }, 7).unwrap();
        assert_eq!((g.n(), g.m()), (1000, 45 + 10 * 990));
        assert!(g.d_max() > 50.0, "expected a hub, d_max = {}", g.d_max());
    }

    #[test]
    fn infeasible_parameters() {
        assert!(matches!(
            gen_graph(&GraphModel::Regular { n: 5, degree: 3 }, 0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            gen_graph(&GraphModel::BarabasiAlbert { n: 5, k: 5 }, 0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn knn_on_two_far_clusters_is_disconnected() {
        let mut coords = vec![(0.0, 0.0), (0.0, 1.0), (1.0, 0.0)];
        coords.extend([(100.0, 0.0), (100.0, 1.0), (101.0, 0.0)]);
        let positions = NodePositions { coords };
        let err = gen_graph(&GraphModel::Knn { k: 2, positions }, 0).unwrap_err();
        assert!(matches!(err, Error::Disconnected { components: 2 }));
    }

    #[test]
    fn clique_chain_shape() {
        let g = gen_graph(&GraphModel::CliqueChain { cliques: 2, size: 20 }, 0).unwrap();
        assert_eq!((g.n(), g.m()), (40, 2 * 190 + 1));
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let g = Graph::from_edges(3, &[(0, 1, 0.1), (2, 1, 1.0 / 3.0)]).unwrap();
        let back = Graph::parse_edge_list(&g.to_edge_list()).unwrap();
        assert_eq!(g, back);
    }
}
