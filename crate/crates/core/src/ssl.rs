//! Generalized graph semi-supervised classification.
//!
//! Scores are `F = D^{1−σ} K D^{σ−1} Y` with `K = (D + (2/μ)L)⁻¹ D`. That `K`
//! is the smoothing operator of a [`SmoothingProblem`] with `q_i = (μ/2) d_i`,
//! so each class column is one smoothing solve (exact) or one forest Monte
//! Carlo run on the signal `D^{σ−1} y_l`, rescaled by `D^{1−σ}`.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{accumulate, finish, AlphaStrategy};
use crate::graph::Graph;
use crate::linalg::{solve_exact, SmoothingProblem};
use crate::rsf::substream;

#[derive(Debug, Clone)]
pub struct SslProblem<'g> {
    graph: &'g Graph,
    num_classes: usize,
    labeled: Vec<(usize, usize)>,
    mu: f64,
    sigma: f64,
}

impl<'g> SslProblem<'g> {
    /// `labeled` holds `(vertex, class)` pairs; every class in
    /// `0..num_classes` needs at least one.
    pub fn new(
        graph: &'g Graph,
        num_classes: usize,
        labeled: Vec<(usize, usize)>,
        mu: f64,
        sigma: f64,
    ) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("mu must be positive, got {mu}")));
        }
        if !(0.0..=1.0).contains(&sigma) {
            return Err(Error::InvalidParameter(format!("sigma must lie in [0, 1], got {sigma}")));
        }
        if labeled.is_empty() {
            return Err(Error::InvalidParameter("labeled set is empty".into()));
        }
        let n = graph.n();
        let mut seen = vec![false; n];
        let mut per_class = vec![0usize; num_classes];
        for &(v, c) in &labeled {
            if v >= n {
                return Err(Error::VertexOutOfRange { vertex: v, n });
            }
            if c >= num_classes {
                return Err(Error::InvalidParameter(format!(
                    "class {c} of vertex {v} exceeds class count {num_classes}"
                )));
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(Error::InvalidParameter(format!("vertex {v} labeled twice")));
            }
            per_class[c] += 1;
        }
        if let Some(c) = per_class.iter().position(|&k| k == 0) {
            return Err(Error::InvalidParameter(format!("class {c} has no labeled vertex")));
        }
        if graph.degrees().iter().any(|&d| d <= 0.0) {
            return Err(Error::InvalidParameter("every vertex needs a positive degree".into()));
        }
        Ok(SslProblem { graph, num_classes, labeled, mu, sigma })
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labeled(&self) -> &[(usize, usize)] {
        &self.labeled
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Indicator columns `y_l` of the label matrix `Y`.
    pub fn label_columns(&self) -> Vec<Vec<f64>> {
        let mut cols = vec![vec![0.0; self.graph.n()]; self.num_classes];
        for &(v, c) in &self.labeled {
            cols[c][v] = 1.0;
        }
        cols
    }

    /// One smoothing problem per class, on the signal `D^{σ−1} y_l`.
    pub fn class_problems(&self) -> Result<Vec<SmoothingProblem<'g>>> {
        let d = self.graph.degrees();
        self.label_columns()
            .into_iter()
            .map(|col| {
                let signal = col
                    .iter()
                    .zip(d)
                    .map(|(y, di)| y * di.powf(self.sigma - 1.0))
                    .collect();
                SmoothingProblem::degree_scaled(self.graph, signal, self.mu)
            })
            .collect()
    }

    fn rescale(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.graph.degrees())
            .map(|(xi, di)| xi * di.powf(1.0 - self.sigma))
            .collect()
    }
}

/// Class scores and the resulting predictions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationResult {
    /// One score column per class.
    pub scores: Vec<Vec<f64>>,
    pub predicted: Vec<usize>,
    /// Step size used per class (zero for the exact solver).
    pub alphas: Vec<f64>,
}

impl ClassificationResult {
    pub fn from_scores(scores: Vec<Vec<f64>>, alphas: Vec<f64>) -> Self {
        let n = scores.first().map_or(0, Vec::len);
        let predicted = (0..n)
            .map(|i| {
                let mut best = 0;
                for c in 1..scores.len() {
                    if scores[c][i] > scores[best][i] {
                        best = c;
                    }
                }
                best
            })
            .collect();
        ClassificationResult { scores, predicted, alphas }
    }

    /// Fraction of unlabeled vertices whose prediction matches `truth`;
    /// `None` when every vertex is labeled.
    pub fn accuracy(&self, truth: &[usize], labeled: &[(usize, usize)]) -> Option<f64> {
        let mut is_labeled = vec![false; truth.len()];
        for &(v, _) in labeled {
            is_labeled[v] = true;
        }
        let (hits, total) = (0..truth.len())
            .filter(|&v| !is_labeled[v])
            .fold((0usize, 0usize), |(h, t), v| {
                (h + usize::from(self.predicted[v] == truth[v]), t + 1)
            });
        (total > 0).then(|| hits as f64 / total as f64)
    }
}

/// Exact scores via one conjugate-gradient solve per class.
pub fn ssl_exact(p: &SslProblem) -> Result<ClassificationResult> {
    let scores = p
        .class_problems()?
        .iter()
        .map(|sp| solve_exact(sp).map(|x| p.rescale(&x)))
        .collect::<Result<Vec<_>>>()?;
    let k = scores.len();
    Ok(ClassificationResult::from_scores(scores, vec![0.0; k]))
}

/// Whether the `k` class signals share forest draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForestSharing {
    /// One set of `N` forests serves every class.
    #[default]
    Shared,
    /// Independent forests per class.
    PerClass,
}

fn class_seed(seed: u64, class: usize) -> u64 {
    seed ^ (class as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Forest Monte Carlo scores with forests shared across classes.
pub fn ssl_forest(
    p: &SslProblem,
    n_samples: u64,
    strategy: AlphaStrategy,
    seed: u64,
) -> Result<ClassificationResult> {
    ssl_forest_with(p, n_samples, strategy, seed, ForestSharing::Shared)
}

pub fn ssl_forest_with(
    p: &SslProblem,
    n_samples: u64,
    strategy: AlphaStrategy,
    seed: u64,
    sharing: ForestSharing,
) -> Result<ClassificationResult> {
    let problems = p.class_problems()?;
    let runs = match sharing {
        ForestSharing::Shared => {
            crate::estimators::run_monte_carlo_shared(&problems, n_samples, strategy, seed)?
        }
        ForestSharing::PerClass => problems
            .iter()
            .enumerate()
            .map(|(c, sp)| crate::estimators::run_monte_carlo(sp, n_samples, strategy, class_seed(seed, c)))
            .collect::<Result<Vec<_>>>()?,
    };
    let alphas = runs.iter().map(|r| r.alpha).collect();
    let scores = runs.iter().map(|r| p.rescale(&r.estimate)).collect();
    Ok(ClassificationResult::from_scores(scores, alphas))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SslMethod {
    Exact,
    Xbar,
    ZbarSafe,
    ZbarEmpirical,
}

impl SslMethod {
    pub const ALL: [SslMethod; 4] =
        [SslMethod::Exact, SslMethod::Xbar, SslMethod::ZbarSafe, SslMethod::ZbarEmpirical];

    pub fn name(&self) -> &'static str {
        match self {
            SslMethod::Exact => "exact",
            SslMethod::Xbar => "xbar",
            SslMethod::ZbarSafe => "zbar_safe",
            SslMethod::ZbarEmpirical => "zbar_empirical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracySettings {
    pub mu: f64,
    pub sigma: f64,
    pub n_samples: u64,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for AccuracySettings {
    fn default() -> Self {
        AccuracySettings { mu: 1.0, sigma: 0.0, n_samples: 50, repeats: 100, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub labels_per_class: usize,
    pub method: SslMethod,
    /// `None` when the holdout set is empty.
    pub mean_accuracy: Option<f64>,
    pub std_accuracy: Option<f64>,
}

/// Accuracies of the four classifiers for one random labeled set.
fn one_repeat(
    graph: &Graph,
    truth: &[usize],
    members: &[Vec<usize>],
    m: usize,
    settings: &AccuracySettings,
    repeat: usize,
) -> Result<[Option<f64>; 4]> {
    let mut rng = substream(settings.seed, repeat as u64);
    let mut labeled = Vec::with_capacity(m * members.len());
    for (c, verts) in members.iter().enumerate() {
        for k in sample(&mut rng, verts.len(), m) {
            labeled.push((verts[k], c));
        }
    }
    labeled.sort_unstable();
    let p = SslProblem::new(graph, members.len(), labeled, settings.mu, settings.sigma)?;
    let exact = ssl_exact(&p)?.accuracy(truth, p.labeled());

    let problems = p.class_problems()?;
    let forest_seed = settings.seed.wrapping_add(0x0005_DEEC_E66D) ^ ((repeat as u64) << 20);
    let accs = accumulate(&problems, settings.n_samples, forest_seed, settings.n_samples >= 2)?;
    let forest_accuracy = |strategy: AlphaStrategy| -> Result<Option<f64>> {
        let scores = problems
            .iter()
            .zip(&accs)
            .map(|(sp, acc)| finish(sp, acc, strategy).map(|r| p.rescale(&r.estimate)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ClassificationResult::from_scores(scores, vec![]).accuracy(truth, p.labeled()))
    };
    let xbar = forest_accuracy(AlphaStrategy::Fixed(0.0))?;
    let safe = forest_accuracy(AlphaStrategy::SafeConstant)?;
    let empirical = if settings.n_samples >= 2 {
        forest_accuracy(AlphaStrategy::Empirical)?
    } else {
        None
    };
    Ok([exact, xbar, safe, empirical])
}

/// Draws `m` labeled vertices per class uniformly without replacement,
/// `repeats` times, and reports mean and standard deviation of the holdout
/// accuracy for the exact, `x̄`, `z̄(safe α)` and `z̄(α̂)` classifiers.
///
/// `truth` holds a class id per vertex.
pub fn accuracy_experiment(
    graph: &Graph,
    truth: &[usize],
    m: usize,
    settings: &AccuracySettings,
) -> Result<Vec<AccuracyRow>> {
    if truth.len() != graph.n() {
        return Err(Error::LengthMismatch { expected: graph.n(), actual: truth.len() });
    }
    if m == 0 || settings.repeats == 0 {
        return Err(Error::InvalidParameter("labels per class and repeats must be positive".into()));
    }
    let k = truth.iter().max().map_or(0, |c| c + 1);
    let mut members = vec![Vec::new(); k];
    for (v, &c) in truth.iter().enumerate() {
        members[c].push(v);
    }
    if let Some(c) = members.iter().position(|v| v.len() < m) {
        return Err(Error::InvalidParameter(format!(
            "class {c} has {} members, fewer than {m} labels per class",
            members[c].len()
        )));
    }
    let results = (0..settings.repeats)
        .into_par_iter()
        .map(|r| one_repeat(graph, truth, &members, m, settings, r))
        .collect::<Result<Vec<_>>>()?;

    Ok(SslMethod::ALL
        .iter()
        .enumerate()
        .map(|(j, &method)| {
            let values: Option<Vec<f64>> = results.iter().map(|r| r[j]).collect();
            let (mean, std) = match values {
                Some(v) if !v.is_empty() => {
                    let mean = v.iter().sum::<f64>() / v.len() as f64;
                    let var = if v.len() > 1 {
                        v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64
                    } else {
                        0.0
                    };
                    (Some(mean), Some(var.sqrt()))
                }
                _ => (None, None),
            };
            AccuracyRow { labels_per_class: m, method, mean_accuracy: mean, std_accuracy: std }
        })
        .collect())
}

/// Two `size`-cliques joined by one edge, with the clique index as label.
pub fn two_clique_benchmark(size: usize) -> Result<(Graph, Vec<usize>)> {
    let g = crate::graph::gen_graph(&crate::graph::GraphModel::CliqueChain { cliques: 2, size }, 0)?;
    let truth = (0..2 * size).map(|v| v / size).collect();
    Ok((g, truth))
}
