//! Experiment harnesses: step-size sweeps, denoising PSNR tables and
//! classification accuracy tables, each renderable as CSV or JSON.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{
    accumulate, exact_estimator_moments, gradient_step, resolve_alpha, safe_alpha, AlphaStrategy,
};
use crate::graph::Graph;
use crate::io::{fmt_opt, to_json, OutputFormat, SCHEMA_VERSION};
use crate::linalg::{apply_k_inverse, dist_sq, laplacian_eigen, solve_exact, SmoothingProblem};
use crate::rsf::ENUMERATION_MAX_N;
use crate::ssl::{accuracy_experiment, AccuracyRow, AccuracySettings};

/// Floor on the mean squared error inside PSNR.
pub const PSNR_EPSILON: f64 = 1e-15;

/// SplitMix64 finalizer; maps `(seed, index)` to an unrelated seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Synthetic graph signals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignalSpec {
    /// i.i.d. standard normal per node.
    Normal,
    /// Sum of the `modes` lowest non-constant Laplacian eigenvectors, scaled
    /// to a peak magnitude of `amplitude`.
    Smooth { modes: usize, amplitude: f64 },
    Constant(f64),
}

pub fn synthesize_signal(graph: &Graph, spec: SignalSpec, seed: u64) -> Result<Vec<f64>> {
    let n = graph.n();
    match spec {
        SignalSpec::Normal => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
        }
        SignalSpec::Constant(c) => Ok(vec![c; n]),
        SignalSpec::Smooth { modes, amplitude } => {
            if modes == 0 || modes >= n {
                return Err(Error::InvalidParameter(format!(
                    "smooth signal needs 0 < modes < n (modes={modes}, n={n})"
                )));
            }
            let (_, vectors) = laplacian_eigen(graph)?;
            let mut x = vec![0.0; n];
            for v in &vectors[1..=modes] {
                for (xi, vi) in x.iter_mut().zip(v) {
                    *xi += vi;
                }
            }
            let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            Ok(x.iter().map(|v| amplitude * v / peak).collect())
        }
    }
}

/// `y ≈ a α² + b α + c` by least squares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraticFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub r_squared: f64,
}

impl QuadraticFit {
    pub fn fit(xs: &[f64], ys: &[f64]) -> Result<QuadraticFit> {
        if xs.len() < 3 || xs.len() != ys.len() {
            return Err(Error::InvalidParameter("quadratic fit needs at least 3 points".into()));
        }
        let mut ata = Matrix3::zeros();
        let mut aty = Vector3::zeros();
        for (&x, &y) in xs.iter().zip(ys) {
            let row = Vector3::new(x * x, x, 1.0);
            ata += row * row.transpose();
            aty += row * y;
        }
        let coef = ata
            .lu()
            .solve(&aty)
            .ok_or_else(|| Error::Factorization("degenerate α grid for quadratic fit".into()))?;
        let (a, b, c) = (coef[0], coef[1], coef[2]);
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let ss_tot: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
        let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - (a * x * x + b * x + c)).powi(2)).sum();
        let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
        Ok(QuadraticFit { a, b, c, r_squared })
    }

    pub fn vertex(&self) -> Option<f64> {
        (self.a > 0.0).then(|| -self.b / (2.0 * self.a))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub n_samples: u64,
    pub realizations: usize,
    /// Step sizes to evaluate; `None` picks [`AUTO_GRID_POINTS`] points on
    /// `[0, 2 max(α_safe, mean α̂)]`.
    pub alphas: Option<Vec<f64>>,
    pub seed: u64,
}

pub const AUTO_GRID_POINTS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub mse_zbar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub schema: &'static str,
    pub n_samples: u64,
    pub realizations: usize,
    /// Mean of `‖x̄_N − x̂‖²` over realizations.
    pub mse_xbar: f64,
    pub curve: Vec<SweepPoint>,
    pub alpha_safe: f64,
    pub mse_zbar_safe: f64,
    /// Mean of the per-realization `α̂`.
    pub alpha_hat_mean: f64,
    /// Mean error of `z̄` when each realization uses its own `α̂`.
    pub mse_zbar_hat: f64,
    /// Realizations whose `α̂` fell back to zero.
    pub alpha_hat_fallbacks: usize,
    /// Exact `α*` when the graph is small enough to enumerate.
    pub alpha_star: Option<f64>,
    pub fit: QuadraticFit,
}

/// Squared error of `x̄` and of `z̄(α)` over `alphas`, averaged over
/// independent realizations of `N`-sample estimates; ground truth by CG.
pub fn sweep_alpha(p: &SmoothingProblem, settings: &SweepSettings) -> Result<SweepReport> {
    if settings.alphas.as_ref().is_some_and(Vec::is_empty)
        || settings.realizations == 0
        || settings.n_samples < 2
    {
        return Err(Error::InvalidParameter(
            "sweep needs a nonempty α grid, realizations ≥ 1 and at least 2 samples".into(),
        ));
    }
    let truth = solve_exact(p)?;
    let alpha_safe = safe_alpha(p);

    struct Realization {
        mean: Vec<f64>,
        residual: Vec<f64>,
        alpha_hat: f64,
        fallback: bool,
    }

    impl Realization {
        fn err_at(&self, alpha: f64, truth: &[f64]) -> f64 {
            self.mean
                .iter()
                .zip(&self.residual)
                .zip(truth)
                .map(|((m, g), t)| (m - alpha * g - t).powi(2))
                .sum()
        }
    }

    let runs = (0..settings.realizations)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(settings.seed, r as u64);
            let acc = accumulate(std::slice::from_ref(p), settings.n_samples, seed, true)?.remove(0);
            let mean = acc.mean_x().to_vec();
            let residual: Vec<f64> = apply_k_inverse(p, &mean)
                .iter()
                .zip(p.y())
                .map(|(k, y)| k - y)
                .collect();
            let hat = resolve_alpha(AlphaStrategy::Empirical, p, Some(&acc))?;
            Ok(Realization { mean, residual, alpha_hat: hat.alpha, fallback: hat.fallback })
        })
        .collect::<Result<Vec<_>>>()?;

    let r = runs.len() as f64;
    let mse_at = |alpha: f64| runs.iter().map(|run| run.err_at(alpha, &truth)).sum::<f64>() / r;
    let alpha_hat_mean = runs.iter().map(|run| run.alpha_hat).sum::<f64>() / r;
    let alphas = settings.alphas.clone().unwrap_or_else(|| {
        let hi = 2.0 * alpha_safe.max(alpha_hat_mean);
        (0..AUTO_GRID_POINTS).map(|k| hi * k as f64 / (AUTO_GRID_POINTS - 1) as f64).collect()
    });
    let curve: Vec<SweepPoint> = alphas
        .iter()
        .map(|&alpha| SweepPoint { alpha, mse_zbar: mse_at(alpha) })
        .collect();
    let ys: Vec<f64> = curve.iter().map(|c| c.mse_zbar).collect();
    let fit = QuadraticFit::fit(&alphas, &ys)?;
    let alpha_star = if p.n() <= ENUMERATION_MAX_N {
        exact_estimator_moments(p).ok().and_then(|m| m.alpha_star)
    } else {
        None
    };
    Ok(SweepReport {
        schema: SCHEMA_VERSION,
        n_samples: settings.n_samples,
        realizations: settings.realizations,
        mse_xbar: mse_at(0.0),
        curve,
        alpha_safe,
        mse_zbar_safe: mse_at(alpha_safe),
        alpha_hat_mean,
        mse_zbar_hat: runs.iter().map(|run| run.err_at(run.alpha_hat, &truth)).sum::<f64>() / r,
        alpha_hat_fallbacks: runs.iter().filter(|run| run.fallback).count(),
        alpha_star,
        fit,
    })
}

impl SweepReport {
    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Json => to_json(self),
            OutputFormat::Csv => {
                let mut out = String::new();
                writeln!(out, "# schema={}", self.schema).unwrap();
                writeln!(out, "# n_samples={} realizations={}", self.n_samples, self.realizations).unwrap();
                writeln!(out, "# alpha_safe={:?} mse_zbar_safe={:?}", self.alpha_safe, self.mse_zbar_safe).unwrap();
                writeln!(
                    out,
                    "# alpha_hat_mean={:?} mse_zbar_hat={:?} alpha_hat_fallbacks={}",
                    self.alpha_hat_mean, self.mse_zbar_hat, self.alpha_hat_fallbacks
                )
                .unwrap();
                writeln!(out, "# alpha_star={}", fmt_opt(self.alpha_star)).unwrap();
                writeln!(
                    out,
                    "# fit a={:?} b={:?} c={:?} r_squared={:?}",
                    self.fit.a, self.fit.b, self.fit.c, self.fit.r_squared
                )
                .unwrap();
                out.push_str("alpha,mse_xbar,mse_zbar\n");
                for pt in &self.curve {
                    writeln!(out, "{:?},{:?},{:?}", pt.alpha, self.mse_xbar, pt.mse_zbar).unwrap();
                }
                out
            }
        }
    }
}

/// `10 log10(peak² / max(mse, ε))` with `peak = max |clean|`.
pub fn psnr(clean: &[f64], estimate: &[f64]) -> f64 {
    let peak = clean.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mse = dist_sq(clean, estimate) / clean.len() as f64;
    10.0 * (peak * peak / mse.max(PSNR_EPSILON)).log10()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseSettings {
    pub q_grid: Vec<f64>,
    pub noise_std: f64,
    pub n_samples: u64,
    pub realizations: usize,
    pub seed: u64,
}

/// `n` log-spaced points in `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

/// Default q grid: 16 log-spaced points in `[0.01, 10]`.
pub fn default_q_grid() -> Vec<f64> {
    log_grid(0.01, 10.0, 16)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DenoiseRow {
    pub q: f64,
    pub psnr_noisy: f64,
    pub psnr_exact: f64,
    pub psnr_xbar: f64,
    pub psnr_zbar_safe: f64,
    pub psnr_zbar_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DenoiseReport {
    pub schema: &'static str,
    pub peak_convention: &'static str,
    pub noise_std: f64,
    pub n_samples: u64,
    pub realizations: usize,
    pub rows: Vec<DenoiseRow>,
}

/// Adds Gaussian noise to `clean`, smooths it for every `q` in the grid and
/// reports PSNR (averaged over realizations) of the noisy signal, the exact
/// solution, `x̄`, `z̄` with the safe step and `z̄` with `α̂`.
pub fn denoise(graph: &Graph, clean: &[f64], settings: &DenoiseSettings) -> Result<DenoiseReport> {
    if clean.len() != graph.n() {
        return Err(Error::LengthMismatch { expected: graph.n(), actual: clean.len() });
    }
    if settings.q_grid.is_empty() || settings.q_grid.iter().any(|&q| q.is_nan() || q <= 0.0) {
        return Err(Error::InvalidParameter("q grid must be nonempty and positive".into()));
    }
    if settings.realizations == 0 || settings.n_samples == 0 {
        return Err(Error::InvalidParameter("need at least one realization and one sample".into()));
    }
    let noise = Normal::new(0.0, settings.noise_std)
        .map_err(|e| Error::InvalidParameter(format!("noise std: {e}")))?;
    let per_realization = (0..settings.realizations)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(settings.seed, 2 * r as u64));
            let noisy: Vec<f64> = clean.iter().map(|c| c + noise.sample(&mut rng)).collect();
            settings
                .q_grid
                .iter()
                .enumerate()
                .map(|(k, &q)| {
                    let p = SmoothingProblem::uniform(graph, noisy.clone(), q)?;
                    let exact = solve_exact(&p)?;
                    let forest_seed = derive_seed(settings.seed, (2 * r + 1) as u64 * 1_000_003 + k as u64);
                    let track = settings.n_samples >= 2;
                    let acc = accumulate(std::slice::from_ref(&p), settings.n_samples, forest_seed, track)?.remove(0);
                    let xbar = acc.mean_x().to_vec();
                    let safe = gradient_step(&xbar, &p, safe_alpha(&p));
                    let hat_alpha = if track {
                        resolve_alpha(AlphaStrategy::Empirical, &p, Some(&acc))?.alpha
                    } else {
                        0.0
                    };
                    let hat = gradient_step(&xbar, &p, hat_alpha);
                    Ok([
                        psnr(clean, &noisy),
                        psnr(clean, &exact),
                        psnr(clean, &xbar),
                        psnr(clean, &safe),
                        psnr(clean, &hat),
                    ])
                })
                .collect::<Result<Vec<[f64; 5]>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let r = settings.realizations as f64;
    let rows = settings
        .q_grid
        .iter()
        .enumerate()
        .map(|(k, &q)| {
            let mean = |j: usize| per_realization.iter().map(|run| run[k][j]).sum::<f64>() / r;
            DenoiseRow {
                q,
                psnr_noisy: mean(0),
                psnr_exact: mean(1),
                psnr_xbar: mean(2),
                psnr_zbar_safe: mean(3),
                psnr_zbar_hat: mean(4),
            }
        })
        .collect();
    Ok(DenoiseReport {
        schema: SCHEMA_VERSION,
        peak_convention: "max_abs_clean",
        noise_std: settings.noise_std,
        n_samples: settings.n_samples,
        realizations: settings.realizations,
        rows,
    })
}

impl DenoiseReport {
    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Json => to_json(self),
            OutputFormat::Csv => {
                let mut out = String::new();
                writeln!(
                    out,
                    "# schema={} peak={} noise_std={:?} n_samples={} realizations={}",
                    self.schema, self.peak_convention, self.noise_std, self.n_samples, self.realizations
                )
                .unwrap();
                out.push_str("q,psnr_y,psnr_exact,psnr_xbar,psnr_zbar_safe,psnr_zbar_hat\n");
                for row in &self.rows {
                    writeln!(
                        out,
                        "{:?},{:?},{:?},{:?},{:?},{:?}",
                        row.q, row.psnr_noisy, row.psnr_exact, row.psnr_xbar, row.psnr_zbar_safe, row.psnr_zbar_hat
                    )
                    .unwrap();
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyTable {
    pub schema: &'static str,
    pub mu: f64,
    pub sigma: f64,
    pub n_samples: u64,
    pub repeats: usize,
    pub rows: Vec<AccuracyRow>,
}

/// Runs the accuracy experiment for every labels-per-class count in `ms`.
pub fn ssl_table(
    graph: &Graph,
    truth: &[usize],
    ms: &[usize],
    settings: &AccuracySettings,
) -> Result<AccuracyTable> {
    let mut rows = Vec::new();
    for (k, &m) in ms.iter().enumerate() {
        let s = AccuracySettings { seed: derive_seed(settings.seed, k as u64), ..*settings };
        rows.extend(accuracy_experiment(graph, truth, m, &s)?);
    }
    Ok(AccuracyTable {
        schema: SCHEMA_VERSION,
        mu: settings.mu,
        sigma: settings.sigma,
        n_samples: settings.n_samples,
        repeats: settings.repeats,
        rows,
    })
}

impl AccuracyTable {
    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Json => to_json(self),
            OutputFormat::Csv => {
                let mut out = String::from("m,method,mean_acc,std_acc\n");
                for row in &self.rows {
                    writeln!(
                        out,
                        "{},{},{},{}",
                        row.labels_per_class,
                        row.method.name(),
                        fmt_opt(row.mean_accuracy),
                        fmt_opt(row.std_accuracy)
                    )
                    .unwrap();
                }
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_graph, GraphModel};

    #[test]
    fn quadratic_fit_recovers_parabola() {
        let xs: Vec<f64> = (0..11).map(|k| k as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x * x - 2.0 * x + 0.5).collect();
        let fit = QuadraticFit::fit(&xs, &ys).unwrap();
        assert!((fit.a - 3.0).abs() < 1e-9 && (fit.b + 2.0).abs() < 1e-9);
        assert!((fit.vertex().unwrap() - 1.0 / 3.0).abs() < 1e-9);
        assert!(fit.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn psnr_is_capped() {
        let clean = [1.0, -2.0, 0.5];
        assert_eq!(psnr(&clean, &clean), 10.0 * (4.0 / PSNR_EPSILON).log10());
        assert!((psnr(&clean, &[1.0, -2.0, 1.5]) - 10.0 * (4.0f64 / (1.0 / 3.0)).log10()).abs() < 1e-12);
    }

    #[test]
    fn grids() {
        let g = default_q_grid();
        assert_eq!(g.len(), 16);
        assert!((g[0] - 0.01).abs() < 1e-15 && (g[15] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(0, 0), derive_seed(0, 1));
        assert_ne!(derive_seed(0, 1), derive_seed(1, 0));
    }

    #[test]
    fn smooth_signal_peak() {
        let g = gen_graph(&GraphModel::Grid { rows: 4, cols: 6 }, 0).unwrap();
        let x = synthesize_signal(&g, SignalSpec::Smooth { modes: 2, amplitude: 3.0 }, 0).unwrap();
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 3.0).abs() < 1e-12);
        assert!(synthesize_signal(&g, SignalSpec::Smooth { modes: 24, amplitude: 1.0 }, 0).is_err());
    }

    #[test]
    fn zero_noise_large_q_recovers_clean_signal() {
        let g = gen_graph(&GraphModel::Grid { rows: 5, cols: 5 }, 0).unwrap();
        let clean = synthesize_signal(&g, SignalSpec::Smooth { modes: 3, amplitude: 2.0 }, 0).unwrap();
        let report = denoise(
            &g,
            &clean,
            &DenoiseSettings { q_grid: vec![1e9], noise_std: 0.0, n_samples: 2, realizations: 1, seed: 1 },
        )
        .unwrap();
        let row = report.rows[0];
        assert_eq!(row.psnr_noisy, 10.0 * (4.0 / PSNR_EPSILON).log10());
        assert!(row.psnr_exact > 100.0, "{row:?}");
    }

    #[test]
    fn sweep_at_zero_step_equals_xbar() {
        let g = gen_graph(&GraphModel::Grid { rows: 4, cols: 4 }, 0).unwrap();
        let y = synthesize_signal(&g, SignalSpec::Normal, 5).unwrap();
        let p = SmoothingProblem::uniform(&g, y, 1.0).unwrap();
        let report = sweep_alpha(
            &p,
            &SweepSettings { n_samples: 5, realizations: 10, alphas: Some(vec![0.0, 0.2, 0.4, 0.6]), seed: 2 },
        )
        .unwrap();
        assert_eq!(report.curve[0].mse_zbar, report.mse_xbar);
        assert!(report.alpha_star.is_none());
    }
}
