//! Forest estimators of `x̂ = K y` and the gradient-step variance reduction.
//!
//! For one sampled forest, `x̄` replaces every `y_i` by the `q`-weighted mean
//! of `y` over the tree containing `i`; `E[x̄] = K y`. The control variate
//! `ȳ = K⁻¹ x̄` has expectation `y`, so for any fixed step `α`
//!
//! ```text
//! z̄ = x̄ − α (K⁻¹ x̄ − y)
//! ```
//!
//! is still unbiased, and its mean squared error
//! `tr Var(x̄) + α² tr Var(ȳ) − 2α tr Cov(ȳ, x̄)` is minimal at
//! `α* = tr Cov(ȳ, x̄) / tr Var(ȳ)`. Every `α ∈ (0, 2α*)` reduces the error.
//!
//! Because the step is linear, a Monte Carlo run averages the `x̄` samples
//! first and applies the step once to the mean.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{apply_k_inverse, dist_sq, dot, SmoothingProblem};
use crate::rsf::{enumerate_forests, substream, ForestSampler, RootedForest};

/// Samples handled sequentially by one parallel work item. Fixed so that the
/// reduction order, and hence every output bit, is independent of the
/// thread count.
const BLOCK_SIZE: u64 = 128;

/// Relative floor on `tr Var(ȳ)` below which the control variate is treated
/// as degenerate (constant signal).
const DEGENERATE_VARIANCE: f64 = 1e-14;

/// Averages `y` (weighted by `q`) within each label class.
///
/// Each class mean is computed as an offset from the value at the first
/// member, so a class whose values are all equal reproduces that value
/// exactly.
fn partition_average(labels: &[usize], p: &SmoothingProblem) -> Vec<f64> {
    let (y, q) = (p.y(), p.q());
    let n = labels.len();
    let mut reference = vec![f64::NAN; n];
    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];
    for i in 0..n {
        let c = labels[i];
        if reference[c].is_nan() {
            reference[c] = y[i];
        }
        num[c] += q[i] * (y[i] - reference[c]);
        den[c] += q[i];
    }
    labels
        .iter()
        .map(|&c| reference[c] + num[c] / den[c])
        .collect()
}

/// `x̄` for one forest: the `q`-weighted average of `y` over each tree.
pub fn xbar_from_forest(forest: &RootedForest, p: &SmoothingProblem) -> Vec<f64> {
    partition_average(forest.root_of(), p)
}

/// `x̄` for an explicit partition given as a tree label per vertex.
pub fn xbar_from_partition(component: &[usize], p: &SmoothingProblem) -> Vec<f64> {
    partition_average(component, p)
}

/// One forest's estimate with its lazily computed control variate.
#[derive(Debug, Clone)]
pub struct EstimateSample {
    pub xbar: Vec<f64>,
    ybar: Option<Vec<f64>>,
}

impl EstimateSample {
    pub fn new(forest: &RootedForest, p: &SmoothingProblem) -> Self {
        EstimateSample { xbar: xbar_from_forest(forest, p), ybar: None }
    }

    /// `ȳ = K⁻¹ x̄`.
    pub fn control_variate(&mut self, p: &SmoothingProblem) -> &[f64] {
        let xbar = &self.xbar;
        self.ybar.get_or_insert_with(|| apply_k_inverse(p, xbar))
    }
}

/// `x − α (K⁻¹ x − y)`.
pub fn gradient_step(x: &[f64], p: &SmoothingProblem, alpha: f64) -> Vec<f64> {
    if alpha == 0.0 {
        return x.to_vec();
    }
    let kx = apply_k_inverse(p, x);
    x.iter()
        .zip(&kx)
        .zip(p.y())
        .map(|((xi, ki), yi)| xi - alpha * (ki - yi))
        .collect()
}

/// How the gradient step size is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum AlphaStrategy {
    /// `2 / (1 + 2 max_i d_i/q_i)`: `2q/(q + 2 d_max)` for uniform `q`,
    /// `2μ/(μ + 4)` for `q_i = μ d_i / 2`. Guarantees a contraction.
    SafeConstant,
    /// Ratio of sample covariance traces over the run's own samples.
    Empirical,
    Fixed(f64),
    /// Exact `α*` from forest enumeration (tiny graphs only).
    OracleOptimal,
}

impl AlphaStrategy {
    pub fn needs_control_variate(&self) -> bool {
        matches!(self, AlphaStrategy::Empirical)
    }
}

/// The largest step for which `I − αK⁻¹` is a contraction for every graph
/// with these degrees: `λ_max(Q⁻¹L) ≤ 2 max_i d_i/q_i`.
pub fn safe_alpha(p: &SmoothingProblem) -> f64 {
    let g = p.graph();
    if let Some(q) = p.uniform_q() {
        return 2.0 * q / (q + 2.0 * g.d_max());
    }
    let ratio = g
        .degrees()
        .iter()
        .zip(p.q())
        .map(|(d, q)| d / q)
        .fold(0.0, f64::max);
    2.0 / (1.0 + 2.0 * ratio)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaResolution {
    pub alpha: f64,
    /// The control variate had (numerically) zero variance; `α = 0` was used.
    pub fallback: bool,
    pub note: Option<String>,
}

impl AlphaResolution {
    fn value(alpha: f64) -> Self {
        AlphaResolution { alpha, fallback: false, note: None }
    }

    fn degenerate() -> Self {
        AlphaResolution {
            alpha: 0.0,
            fallback: true,
            note: Some(
                "control variate has zero variance (constant signal); gradient step skipped".into(),
            ),
        }
    }
}

fn variance_floor(p: &SmoothingProblem) -> f64 {
    let n = p.n() as f64;
    let scale = (dot(p.y(), p.y()) / n).max(1.0);
    DEGENERATE_VARIANCE * n * scale
}

/// Resolves a step-size strategy to a number.
///
/// `Empirical` needs an accumulator that tracked the control variate over at
/// least two samples; `OracleOptimal` enumerates forests and needs `n ≤ 9`.
pub fn resolve_alpha(
    strategy: AlphaStrategy,
    p: &SmoothingProblem,
    acc: Option<&MonteCarloAccumulator>,
) -> Result<AlphaResolution> {
    match strategy {
        AlphaStrategy::SafeConstant => Ok(AlphaResolution::value(safe_alpha(p))),
        AlphaStrategy::Fixed(a) => {
            if !a.is_finite() {
                return Err(Error::InvalidParameter(format!("step size {a} is not finite")));
            }
            Ok(AlphaResolution::value(a))
        }
        AlphaStrategy::Empirical => {
            let acc = acc.ok_or_else(|| {
                Error::InvalidParameter("empirical step size needs Monte Carlo samples".into())
            })?;
            if acc.count() < 2 {
                return Err(Error::InvalidParameter(format!(
                    "empirical step size needs at least 2 samples, got {}",
                    acc.count()
                )));
            }
            let (cov, var) = match (acc.trace_cov_xy(), acc.trace_var_y()) {
                (Some(c), Some(v)) => (c, v),
                _ => {
                    return Err(Error::InvalidParameter(
                        "accumulator did not track the control variate".into(),
                    ))
                }
            };
            if var <= variance_floor(p) {
                return Ok(AlphaResolution::degenerate());
            }
            Ok(AlphaResolution::value(cov / var))
        }
        AlphaStrategy::OracleOptimal => {
            let moments = exact_estimator_moments(p)?;
            match moments.alpha_star {
                Some(a) if moments.trace_var_ybar > variance_floor(p) => {
                    Ok(AlphaResolution::value(a))
                }
                _ => Ok(AlphaResolution::degenerate()),
            }
        }
    }
}

/// Streaming first and second moments of `x̄` and `ȳ` samples.
///
/// Stores running means and the scalar co-moments
/// `Σ ⟨x̄ − m_x, x̄ − m_x⟩`, `Σ ⟨ȳ − m_y, ȳ − m_y⟩`, `Σ ⟨x̄ − m_x, ȳ − m_y⟩`,
/// updated with Welford's recurrence and combined with Chan's pairwise
/// formula, so memory is `O(n)` for any sample count.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloAccumulator {
    count: u64,
    mean_x: Vec<f64>,
    mean_y: Option<Vec<f64>>,
    comoment_xx: f64,
    comoment_yy: f64,
    comoment_xy: f64,
    walk_steps: u64,
}

impl MonteCarloAccumulator {
    pub fn new(n: usize, track_control: bool) -> Self {
        MonteCarloAccumulator {
            count: 0,
            mean_x: vec![0.0; n],
            mean_y: track_control.then(|| vec![0.0; n]),
            comoment_xx: 0.0,
            comoment_yy: 0.0,
            comoment_xy: 0.0,
            walk_steps: 0,
        }
    }

    pub fn tracks_control(&self) -> bool {
        self.mean_y.is_some()
    }

    /// Adds one sample; `ybar` is required iff the accumulator tracks the
    /// control variate.
    pub fn push(&mut self, xbar: &[f64], ybar: Option<&[f64]>) {
        self.count += 1;
        let k = self.count as f64;
        let mut dx = Vec::with_capacity(xbar.len());
        for (m, &x) in self.mean_x.iter_mut().zip(xbar) {
            let d = x - *m;
            *m += d / k;
            dx.push(d);
        }
        self.comoment_xx += dx.iter().zip(xbar).zip(&self.mean_x).map(|((d, x), m)| d * (x - m)).sum::<f64>();
        if let Some(mean_y) = self.mean_y.as_mut() {
            let ybar = ybar.expect("control variate sample required");
            let mut yy = 0.0;
            let mut xy = 0.0;
            for ((m, &y), d_x) in mean_y.iter_mut().zip(ybar).zip(&dx) {
                let d_y = y - *m;
                *m += d_y / k;
                let after = y - *m;
                yy += d_y * after;
                xy += d_x * after;
            }
            self.comoment_yy += yy;
            self.comoment_xy += xy;
        }
    }

    pub fn add_walk_steps(&mut self, steps: u64) {
        self.walk_steps += steps;
    }

    /// Folds `other` into `self`.
    pub fn merge(&mut self, other: &MonteCarloAccumulator) {
        if other.count == 0 {
            self.walk_steps += other.walk_steps;
            return;
        }
        if self.count == 0 {
            let steps = self.walk_steps;
            *self = other.clone();
            self.walk_steps += steps;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let total = na + nb;
        let dx: Vec<f64> = other.mean_x.iter().zip(&self.mean_x).map(|(b, a)| b - a).collect();
        let w = na * nb / total;
        self.comoment_xx += other.comoment_xx + w * dot(&dx, &dx);
        for (m, d) in self.mean_x.iter_mut().zip(&dx) {
            *m += d * nb / total;
        }
        if let (Some(my), Some(oy)) = (self.mean_y.as_mut(), other.mean_y.as_ref()) {
            let dy: Vec<f64> = oy.iter().zip(my.iter()).map(|(b, a)| b - a).collect();
            self.comoment_yy += other.comoment_yy + w * dot(&dy, &dy);
            self.comoment_xy += other.comoment_xy + w * dot(&dx, &dy);
            for (m, d) in my.iter_mut().zip(&dy) {
                *m += d * nb / total;
            }
        }
        self.count += other.count;
        self.walk_steps += other.walk_steps;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean_x(&self) -> &[f64] {
        &self.mean_x
    }

    pub fn mean_y(&self) -> Option<&[f64]> {
        self.mean_y.as_deref()
    }

    pub fn walk_steps(&self) -> u64 {
        self.walk_steps
    }

    /// Raw co-moments `(C_xx, C_yy, C_xy)`; `C_yy`, `C_xy` are zero when the
    /// control variate is not tracked.
    pub fn comoments(&self) -> (f64, f64, f64) {
        (self.comoment_xx, self.comoment_yy, self.comoment_xy)
    }

    fn unbiased(&self, comoment: f64) -> Option<f64> {
        (self.count >= 2).then(|| comoment / (self.count - 1) as f64)
    }

    /// `tr V̂ar(x̄)`.
    pub fn trace_var_x(&self) -> Option<f64> {
        self.unbiased(self.comoment_xx)
    }

    /// `tr V̂ar(ȳ)`.
    pub fn trace_var_y(&self) -> Option<f64> {
        self.mean_y.as_ref()?;
        self.unbiased(self.comoment_yy)
    }

    /// `tr Ĉov(x̄, ȳ)`.
    pub fn trace_cov_xy(&self) -> Option<f64> {
        self.mean_y.as_ref()?;
        self.unbiased(self.comoment_xy)
    }

    /// `α̂ = tr Ĉov(x̄, ȳ) / tr V̂ar(ȳ)`, when defined.
    pub fn alpha_hat(&self) -> Option<f64> {
        let var = self.trace_var_y()?;
        (var > 0.0).then(|| self.trace_cov_xy().unwrap() / var)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub n_samples: u64,
    pub trace_var_xbar: Option<f64>,
    pub trace_var_ybar: Option<f64>,
    pub trace_cov_xy: Option<f64>,
    pub alpha: f64,
    pub strategy: AlphaStrategy,
    /// Zero-variance control variate; the step was skipped.
    pub alpha_fallback: bool,
    /// `α̂` was fitted on the same samples it is applied to, which biases
    /// the estimate by `O(1/N)`.
    pub alpha_same_sample: bool,
    pub walk_steps: u64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloResult {
    pub estimate: Vec<f64>,
    pub alpha: f64,
    pub diagnostics: Diagnostics,
}

fn ensure_shared_operator(problems: &[SmoothingProblem]) -> Result<()> {
    let first = problems
        .first()
        .ok_or_else(|| Error::InvalidParameter("no signals to estimate".into()))?;
    for p in &problems[1..] {
        if !std::ptr::eq(p.graph(), first.graph()) || p.q() != first.q() {
            return Err(Error::InvalidParameter(
                "signals sharing forests must share graph and absorption weights".into(),
            ));
        }
    }
    Ok(())
}

/// Draws `n_samples` forests and accumulates `x̄` (and `ȳ` when
/// `track_control`) for every problem, all problems sharing each forest.
///
/// Sample `i` uses [`substream`]`(seed, i)`. Blocks of samples run in
/// parallel and are merged in block order.
pub fn accumulate(
    problems: &[SmoothingProblem],
    n_samples: u64,
    seed: u64,
    track_control: bool,
) -> Result<Vec<MonteCarloAccumulator>> {
    ensure_shared_operator(problems)?;
    let base = &problems[0];
    let sampler = ForestSampler::new(base.graph(), base.q());
    let n = base.n();
    let blocks = n_samples.div_ceil(BLOCK_SIZE);
    let partials: Vec<Vec<MonteCarloAccumulator>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut accs = vec![MonteCarloAccumulator::new(n, track_control); problems.len()];
            let end = ((b + 1) * BLOCK_SIZE).min(n_samples);
            for i in b * BLOCK_SIZE..end {
                let forest = sampler.sample(&mut substream(seed, i))?;
                for (acc, p) in accs.iter_mut().zip(problems) {
                    let xbar = xbar_from_forest(&forest, p);
                    if track_control {
                        let ybar = apply_k_inverse(p, &xbar);
                        acc.push(&xbar, Some(&ybar));
                    } else {
                        acc.push(&xbar, None);
                    }
                }
                accs[0].add_walk_steps(forest.walk_steps());
            }
            Ok(accs)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![MonteCarloAccumulator::new(n, track_control); problems.len()];
    for block in &partials {
        for (t, a) in total.iter_mut().zip(block) {
            t.merge(a);
        }
    }
    let steps = total[0].walk_steps;
    for t in total.iter_mut().skip(1) {
        t.walk_steps = steps;
    }
    Ok(total)
}

/// Resolves the step and applies it once to the accumulated mean of `x̄`.
pub fn finish(
    p: &SmoothingProblem,
    acc: &MonteCarloAccumulator,
    strategy: AlphaStrategy,
) -> Result<MonteCarloResult> {
    let resolution = resolve_alpha(strategy, p, Some(acc))?;
    let estimate = gradient_step(acc.mean_x(), p, resolution.alpha);
    Ok(MonteCarloResult {
        estimate,
        alpha: resolution.alpha,
        diagnostics: Diagnostics {
            n_samples: acc.count(),
            trace_var_xbar: acc.trace_var_x(),
            trace_var_ybar: acc.trace_var_y(),
            trace_cov_xy: acc.trace_cov_xy(),
            alpha: resolution.alpha,
            strategy,
            alpha_fallback: resolution.fallback,
            alpha_same_sample: strategy == AlphaStrategy::Empirical && !resolution.fallback,
            walk_steps: acc.walk_steps(),
            note: resolution.note,
        },
    })
}

fn check_samples(n_samples: u64, strategy: AlphaStrategy) -> Result<()> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("need at least one Monte Carlo sample".into()));
    }
    if strategy == AlphaStrategy::Empirical && n_samples < 2 {
        return Err(Error::InvalidParameter(
            "empirical step size needs at least 2 samples".into(),
        ));
    }
    Ok(())
}

/// Monte Carlo estimate of `K y` from `n_samples` forests, followed by one
/// gradient step whose size is chosen by `strategy`.
pub fn run_monte_carlo(
    p: &SmoothingProblem,
    n_samples: u64,
    strategy: AlphaStrategy,
    seed: u64,
) -> Result<MonteCarloResult> {
    run_monte_carlo_shared(std::slice::from_ref(p), n_samples, strategy, seed)
        .map(|mut v| v.remove(0))
}

/// [`run_monte_carlo`] for several signals on the same operator, reusing
/// each forest for every signal.
pub fn run_monte_carlo_shared(
    problems: &[SmoothingProblem],
    n_samples: u64,
    strategy: AlphaStrategy,
    seed: u64,
) -> Result<Vec<MonteCarloResult>> {
    check_samples(n_samples, strategy)?;
    let accs = accumulate(problems, n_samples, seed, strategy.needs_control_variate())?;
    problems
        .iter()
        .zip(&accs)
        .map(|(p, acc)| finish(p, acc, strategy))
        .collect()
}

/// Exact moments of `x̄` and `ȳ` over the forest distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactMoments {
    pub expected_xbar: Vec<f64>,
    pub expected_ybar: Vec<f64>,
    pub trace_var_xbar: f64,
    pub trace_var_ybar: f64,
    /// `tr Cov(ȳ, x̄)`.
    pub trace_cov_xy: f64,
    /// `None` when `tr Var(ȳ) = 0`.
    pub alpha_star: Option<f64>,
    pub normalizer: f64,
    pub family_count: usize,
}

impl ExactMoments {
    /// Mean squared error of `z̄(α)` around `K y`:
    /// `tr Var(x̄) + α² tr Var(ȳ) − 2α tr Cov(ȳ, x̄)`.
    pub fn mse_curve(&self, alpha: f64) -> f64 {
        self.trace_var_xbar + alpha * alpha * self.trace_var_ybar
            - 2.0 * alpha * self.trace_cov_xy
    }
}

/// Enumerates every forest of a tiny graph (`n ≤ 9`) and returns the exact
/// moments of the estimators.
pub fn exact_estimator_moments(p: &SmoothingProblem) -> Result<ExactMoments> {
    let dist = enumerate_forests(p.graph(), p.q())?;
    let n = p.n();
    let probs = dist.probabilities();
    let samples: Vec<(Vec<f64>, Vec<f64>)> = dist
        .families
        .iter()
        .map(|f| {
            let x = xbar_from_partition(&f.component, p);
            let y = apply_k_inverse(p, &x);
            (x, y)
        })
        .collect();
    let mut ex = vec![0.0; n];
    let mut ey = vec![0.0; n];
    for ((x, y), &pr) in samples.iter().zip(&probs) {
        for i in 0..n {
            ex[i] += pr * x[i];
            ey[i] += pr * y[i];
        }
    }
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    let mut cov = 0.0;
    for ((x, y), &pr) in samples.iter().zip(&probs) {
        var_x += pr * dist_sq(x, &ex);
        var_y += pr * dist_sq(y, &ey);
        cov += pr * x.iter().zip(&ex).zip(y.iter().zip(&ey)).map(|((a, b), (c, d))| (a - b) * (c - d)).sum::<f64>();
    }
    Ok(ExactMoments {
        expected_xbar: ex,
        expected_ybar: ey,
        trace_var_xbar: var_x,
        trace_var_ybar: var_y,
        trace_cov_xy: cov,
        alpha_star: (var_y > 0.0).then(|| cov / var_y),
        normalizer: dist.normalizer,
        family_count: dist.families.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_graph, Graph, GraphModel};
    use proptest::prelude::*;

    fn path3() -> Graph {
        Graph::parse_edge_list("0 1\n1 2").unwrap()
    }

    #[test]
    fn xbar_on_path_partition() {
        let g = path3();
        let p = SmoothingProblem::uniform(&g, vec![8.0, 0.0, 0.0], 1.0).unwrap();
        let forest = RootedForest::from_parents(vec![1, 1, 2]).unwrap();
        assert_eq!(xbar_from_forest(&forest, &p), vec![4.0, 4.0, 0.0]);
        let singletons = RootedForest::from_parents(vec![0, 1, 2]).unwrap();
        assert_eq!(xbar_from_forest(&singletons, &p), p.y());
    }

    #[test]
    fn xbar_weights_by_q() {
        let g = path3();
        let p = SmoothingProblem::with_weights(&g, vec![3.0, 0.0, 6.0], vec![1.0, 1.0, 2.0]).unwrap();
        let tree = RootedForest::from_parents(vec![1, 1, 1]).unwrap();
        assert_eq!(xbar_from_forest(&tree, &p), vec![3.75; 3]);
    }

    #[test]
    fn constant_signal_is_reproduced_by_every_forest() {
        let g = gen_graph(&GraphModel::Grid { rows: 5, cols: 6 }, 0).unwrap();
        let p = SmoothingProblem::uniform(&g, vec![0.1; 30], 0.3).unwrap();
        let sampler = ForestSampler::new(&g, p.q());
        for i in 0..20 {
            let f = sampler.sample(&mut substream(4, i)).unwrap();
            assert_eq!(xbar_from_forest(&f, &p), p.y());
        }
    }

    #[test]
    fn gradient_step_on_path() {
        let g = path3();
        let p = SmoothingProblem::uniform(&g, vec![8.0, 0.0, 0.0], 1.0).unwrap();
        let z = gradient_step(&[8.0, 0.0, 0.0], &p, 0.4);
        for (a, b) in z.iter().zip([4.8, 3.2, 0.0]) {
            assert!((a - b).abs() < 1e-14, "{z:?}");
        }
        assert_eq!(gradient_step(&[8.0, 0.0, 0.0], &p, 0.0), vec![8.0, 0.0, 0.0]);
        let fixed = gradient_step(&[5.0, 2.0, 1.0], &p, 0.7);
        assert_eq!(fixed, vec![5.0, 2.0, 1.0]);
    }

    #[test]
    fn safe_alpha_formulas() {
        let g = path3();
        let p = SmoothingProblem::uniform(&g, vec![0.0; 3], 1.0).unwrap();
        assert_eq!(safe_alpha(&p), 0.4);
        let ssl = SmoothingProblem::degree_scaled(&g, vec![0.0; 3], 1.0).unwrap();
        assert!((safe_alpha(&ssl) - 0.4).abs() < 1e-15);
        let ssl = SmoothingProblem::degree_scaled(&g, vec![0.0; 3], 3.0).unwrap();
        assert!((safe_alpha(&ssl) - 6.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn resolve_alpha_errors() {
        let g = path3();
        let p = SmoothingProblem::uniform(&g, vec![8.0, 0.0, 0.0], 1.0).unwrap();
        assert!(resolve_alpha(AlphaStrategy::Empirical, &p, None).is_err());
        let mut acc = MonteCarloAccumulator::new(3, true);
        acc.push(&[1.0, 2.0, 3.0], Some(&[0.0, 1.0, 2.0]));
        assert!(resolve_alpha(AlphaStrategy::Empirical, &p, Some(&acc)).is_err());
        let untracked = MonteCarloAccumulator::new(3, false);
        assert!(resolve_alpha(AlphaStrategy::Empirical, &p, Some(&untracked)).is_err());
        assert!(resolve_alpha(AlphaStrategy::Fixed(f64::NAN), &p, None).is_err());
        assert!(run_monte_carlo(&p, 1, AlphaStrategy::Empirical, 0).is_err());
        assert!(run_monte_carlo(&p, 0, AlphaStrategy::SafeConstant, 0).is_err());
    }

    #[test]
    fn exact_moments_on_path() {
        let g = path3();
        let p = SmoothingProblem::uniform(&g, vec![8.0, 0.0, 0.0], 1.0).unwrap();
        let m = exact_estimator_moments(&p).unwrap();
        for (a, b) in m.expected_xbar.iter().zip([5.0, 2.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in m.expected_ybar.iter().zip(p.y()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(m.mse_curve(0.0), m.trace_var_xbar);
        let a = m.alpha_star.unwrap();
        assert!((m.mse_curve(2.0 * a) - m.mse_curve(0.0)).abs() < 1e-10);
        let oracle = resolve_alpha(AlphaStrategy::OracleOptimal, &p, None).unwrap();
        assert_eq!(oracle.alpha, a);
    }

    #[test]
    fn oracle_alpha_falls_back_on_constant_signal() {
        let g = path3();
        let p = SmoothingProblem::uniform(&g, vec![2.0; 3], 1.0).unwrap();
        let r = resolve_alpha(AlphaStrategy::OracleOptimal, &p, None).unwrap();
        assert!(r.fallback);
        assert_eq!(r.alpha, 0.0);
    }

    #[test]
    fn single_sample_without_step_is_the_forest_average() {
        let g = gen_graph(&GraphModel::Grid { rows: 3, cols: 4 }, 0).unwrap();
        let y: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let p = SmoothingProblem::uniform(&g, y, 0.5).unwrap();
        let run = run_monte_carlo(&p, 1, AlphaStrategy::Fixed(0.0), 21).unwrap();
        let forest = sample_forest_for_test(&g, p.q(), 21);
        assert_eq!(run.estimate, xbar_from_forest(&forest, &p));
        assert_eq!(run.diagnostics.walk_steps, forest.walk_steps());
    }

    fn sample_forest_for_test(g: &Graph, q: &[f64], seed: u64) -> RootedForest {
        ForestSampler::new(g, q).sample(&mut substream(seed, 0)).unwrap()
    }

    #[test]
    fn accumulator_matches_two_pass_statistics() {
        let xs = [[1.0, 2.0], [3.0, -1.0], [0.5, 0.5], [2.0, 2.0]];
        let ys = [[0.0, 1.0], [2.0, 2.0], [1.0, -1.0], [3.0, 0.0]];
        let mut acc = MonteCarloAccumulator::new(2, true);
        for (x, y) in xs.iter().zip(&ys) {
            acc.push(x, Some(y));
        }
        let mean = |v: &[[f64; 2]]| [v.iter().map(|a| a[0]).sum::<f64>() / 4.0, v.iter().map(|a| a[1]).sum::<f64>() / 4.0];
        let (mx, my) = (mean(&xs), mean(&ys));
        let cov: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x[0] - mx[0]) * (y[0] - my[0]) + (x[1] - mx[1]) * (y[1] - my[1]))
            .sum::<f64>()
            / 3.0;
        assert!((acc.trace_cov_xy().unwrap() - cov).abs() < 1e-14);
        // raw-sum form of α̂
        let sum_x: Vec<f64> = (0..2).map(|i| xs.iter().map(|x| x[i]).sum()).collect();
        let sum_y: Vec<f64> = (0..2).map(|i| ys.iter().map(|y| y[i]).sum()).collect();
        let sum_xy: f64 = xs.iter().zip(&ys).map(|(x, y)| x[0] * y[0] + x[1] * y[1]).sum();
        let sum_yy: f64 = ys.iter().map(|y| y[0] * y[0] + y[1] * y[1]).sum();
        let alpha_raw = (sum_xy - dot(&sum_x, &sum_y) / 4.0) / (sum_yy - dot(&sum_y, &sum_y) / 4.0);
        assert!((acc.alpha_hat().unwrap() - alpha_raw).abs() < 1e-14);
    }

    fn arb_samples() -> impl Strategy<Value = Vec<(Vec<f64>, Vec<f64>)>> {
        proptest::collection::vec(
            (
                proptest::collection::vec(-50.0f64..50.0, 4),
                proptest::collection::vec(-50.0f64..50.0, 4),
            ),
            1..40,
        )
    }

    fn fill(samples: &[(Vec<f64>, Vec<f64>)]) -> MonteCarloAccumulator {
        let mut acc = MonteCarloAccumulator::new(4, true);
        for (x, y) in samples {
            acc.push(x, Some(y));
        }
        acc
    }

    fn rel_close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs()))
    }

    fn acc_close(a: &MonteCarloAccumulator, b: &MonteCarloAccumulator) -> bool {
        let (ca, cb) = (a.comoments(), b.comoments());
        a.count() == b.count()
            && rel_close(ca.0, cb.0)
            && rel_close(ca.1, cb.1)
            && rel_close(ca.2, cb.2)
            && a.mean_x().iter().zip(b.mean_x()).all(|(x, y)| rel_close(*x, *y))
            && a.mean_y().unwrap().iter().zip(b.mean_y().unwrap()).all(|(x, y)| rel_close(*x, *y))
    }

    proptest! {
        #[test]
        fn merge_is_associative_and_commutative(a in arb_samples(), b in arb_samples(), c in arb_samples()) {
            let all: Vec<_> = a.iter().chain(&b).chain(&c).cloned().collect();
            let single = fill(&all);
            let (fa, fb, fc) = (fill(&a), fill(&b), fill(&c));
            let mut left = fa.clone();
            left.merge(&fb);
            left.merge(&fc);
            let mut bc = fb.clone();
            bc.merge(&fc);
            let mut right = fa.clone();
            right.merge(&bc);
            let mut swapped = fc.clone();
            swapped.merge(&fb);
            swapped.merge(&fa);
            prop_assert!(acc_close(&left, &single));
            prop_assert!(acc_close(&right, &single));
            prop_assert!(acc_close(&swapped, &single));
            let (xx, yy, xy) = single.comoments();
            prop_assert!(xy * xy <= xx * yy * (1.0 + 1e-9) + 1e-9);
        }

        #[test]
        fn xbar_is_a_convex_average(seed in 0u64..5000, q in 0.05f64..4.0) {
            let g = gen_graph(&GraphModel::RandomKnn { n: 30, k: 3 }, seed % 20).unwrap();
            let y: Vec<f64> = (0..30).map(|i| ((i as u64 * 7919 + seed) % 101) as f64 / 10.0 - 5.0).collect();
            let p = SmoothingProblem::uniform(&g, y.clone(), q).unwrap();
            let f = ForestSampler::new(&g, p.q()).sample(&mut substream(seed, 1)).unwrap();
            let x = xbar_from_forest(&f, &p);
            let (lo, hi) = y.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
            for t in f.trees() {
                let v0 = x[t.vertices[0]];
                for &v in &t.vertices {
                    prop_assert_eq!(x[v], v0);
                }
            }
            for &v in &x {
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }
}
