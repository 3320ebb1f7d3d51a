//! Laplacian operators and exact solvers for `x̂ = K y`.
//!
//! With per-node absorption weights `Q = diag(q_i)` the smoothing operator is
//! `K = (Q + L)⁻¹ Q`, which is `q(qI + L)⁻¹` when every `q_i = q`. Sparse
//! products run edge-wise in `O(m)`; the dense routines are oracles for
//! graphs of at most [`DENSE_LIMIT`] vertices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Largest graph the dense solver and spectral checks accept.
pub const DENSE_LIMIT: usize = 2000;

/// `v ↦ (D − W) v`, computed arc by arc.
#[derive(Debug, Clone, Copy)]
pub struct LaplacianOperator<'g> {
    graph: &'g Graph,
}

impl<'g> LaplacianOperator<'g> {
    pub fn new(graph: &'g Graph) -> Self {
        LaplacianOperator { graph }
    }

    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        let g = self.graph;
        for (i, o) in out.iter_mut().enumerate() {
            let vi = v[i];
            *o = g.arcs(i).map(|(j, w)| w * (vi - v[j])).sum();
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.apply_into(v, &mut out);
        out
    }

    /// Dense `D − W`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let g = self.graph;
        let n = g.n();
        let mut l = DMatrix::zeros(n, n);
        for i in 0..n {
            l[(i, i)] = g.degree(i);
            for (j, w) in g.arcs(i) {
                l[(i, j)] -= w;
            }
        }
        l
    }
}

/// A graph signal `y` together with positive absorption weights `q_i`.
#[derive(Debug, Clone)]
pub struct SmoothingProblem<'g> {
    graph: &'g Graph,
    y: Vec<f64>,
    q: Vec<f64>,
}

impl<'g> SmoothingProblem<'g> {
    /// Graph Tikhonov regularization with a single parameter `q`.
    pub fn uniform(graph: &'g Graph, y: Vec<f64>, q: f64) -> Result<Self> {
        Self::with_weights(graph, y, vec![q; graph.n()])
    }

    /// `q_i = (μ/2) d_i`, the absorption weights of the generalized
    /// semi-supervised operator `(D + (2/μ) L)⁻¹ D`.
    pub fn degree_scaled(graph: &'g Graph, y: Vec<f64>, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("mu must be positive, got {mu}")));
        }
        let q = graph.degrees().iter().map(|d| 0.5 * mu * d).collect();
        Self::with_weights(graph, y, q)
    }

    pub fn with_weights(graph: &'g Graph, y: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        let n = graph.n();
        if y.len() != n {
            return Err(Error::LengthMismatch { expected: n, actual: y.len() });
        }
        if q.len() != n {
            return Err(Error::LengthMismatch { expected: n, actual: q.len() });
        }
        if let Some(i) = q.iter().position(|&qi| !(qi > 0.0 && qi.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "absorption weight q[{i}] = {} is not positive",
                q[i]
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("signal value y[{i}] is not finite")));
        }
        Ok(SmoothingProblem { graph, y, q })
    }

    /// Same graph and weights, different signal.
    pub fn with_signal(&self, y: Vec<f64>) -> Result<Self> {
        Self::with_weights(self.graph, y, self.q.clone())
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// The common value when all `q_i` are equal.
    pub fn uniform_q(&self) -> Option<f64> {
        let q0 = self.q[0];
        self.q.iter().all(|&qi| qi == q0).then_some(q0)
    }

    /// `(Q + L) v`.
    pub fn apply_system(&self, v: &[f64]) -> Vec<f64> {
        let mut out = LaplacianOperator::new(self.graph).apply(v);
        for ((o, &qi), &vi) in out.iter_mut().zip(&self.q).zip(v) {
            *o += qi * vi;
        }
        out
    }

    /// Dense `Q + L`.
    pub fn system_matrix(&self) -> DMatrix<f64> {
        let mut a = LaplacianOperator::new(self.graph).to_dense();
        for (i, &qi) in self.q.iter().enumerate() {
            a[(i, i)] += qi;
        }
        a
    }
}

/// `K⁻¹ v = Q⁻¹(Q + L) v`, evaluated as `v + Q⁻¹ L v` so that constant
/// vectors map to themselves exactly.
pub fn apply_k_inverse(p: &SmoothingProblem, v: &[f64]) -> Vec<f64> {
    let mut out = LaplacianOperator::new(p.graph).apply(v);
    for ((o, &qi), &vi) in out.iter_mut().zip(&p.q).zip(v) {
        *o = vi + *o / qi;
    }
    out
}

/// Result of an iterative solve.
#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `‖(Q + L)x − Qy‖ / ‖Qy‖` at exit.
    pub relative_residual: f64,
}

pub const DEFAULT_CG_TOL: f64 = 1e-10;

/// Solves `(Q + L) x = Q y` with unpreconditioned conjugate gradient,
/// starting from `x = y`.
pub fn solve_exact_cg(p: &SmoothingProblem, tol: f64, max_iter: usize) -> Result<CgSolution> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let n = p.n();
    let b: Vec<f64> = p.q.iter().zip(&p.y).map(|(q, y)| q * y).collect();
    let b_norm = norm(&b);
    let mut x = p.y.clone();
    if b_norm == 0.0 {
        return Ok(CgSolution { x: vec![0.0; n], iterations: 0, relative_residual: 0.0 });
    }
    let ax = p.apply_system(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut rr = dot(&r, &r);
    let mut d = r.clone();
    let mut iterations = 0;
    while rr.sqrt() > tol * b_norm {
        if iterations >= max_iter {
            return Err(Error::CgNotConverged {
                iterations,
                residual: rr.sqrt() / b_norm,
            });
        }
        let ad = p.apply_system(&d);
        let step = rr / dot(&d, &ad);
        for i in 0..n {
            x[i] += step * d[i];
            r[i] -= step * ad[i];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        for i in 0..n {
            d[i] = r[i] + beta * d[i];
        }
        rr = rr_next;
        iterations += 1;
    }
    Ok(CgSolution { x, iterations, relative_residual: rr.sqrt() / b_norm })
}

/// [`solve_exact_cg`] with tolerance [`DEFAULT_CG_TOL`] and at most `10 n` iterations.
pub fn solve_exact(p: &SmoothingProblem) -> Result<Vec<f64>> {
    solve_exact_cg(p, DEFAULT_CG_TOL, 10 * p.n().max(1)).map(|s| s.x)
}

fn check_dense_size(operation: &'static str, n: usize) -> Result<()> {
    if n > DENSE_LIMIT {
        return Err(Error::SizeExceeded { operation, n, limit: DENSE_LIMIT });
    }
    Ok(())
}

/// Cholesky solve of `(Q + L) x = Q y`.
pub fn solve_exact_dense(p: &SmoothingProblem) -> Result<Vec<f64>> {
    check_dense_size("solve_exact_dense", p.n())?;
    let a = p.system_matrix();
    let b = DVector::from_iterator(p.n(), p.q.iter().zip(&p.y).map(|(q, y)| q * y));
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Factorization("Q + L is not positive definite".into()))?;
    Ok(chol.solve(&b).iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralCheckReport {
    /// `max_i |μ_i|` over the eigenvalues of `I − αK⁻¹`.
    pub spectral_radius: f64,
    pub pass: bool,
}

/// Spectral radius of `I − αK⁻¹`, via the symmetric similar matrix
/// `I − α Q^{-1/2}(Q + L)Q^{-1/2}`.
pub fn contraction_check(p: &SmoothingProblem, alpha: f64) -> Result<SpectralCheckReport> {
    check_dense_size("contraction_check", p.n())?;
    let n = p.n();
    let mut m = p.system_matrix();
    let s: Vec<f64> = p.q.iter().map(|q| q.sqrt().recip()).collect();
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] *= -alpha * s[i] * s[j];
        }
        m[(i, i)] += 1.0;
    }
    let eig = SymmetricEigen::new(m);
    let spectral_radius = eig.eigenvalues.iter().fold(0.0f64, |acc, e| acc.max(e.abs()));
    Ok(SpectralCheckReport { spectral_radius, pass: spectral_radius <= 1.0 + 1e-10 })
}

/// Eigenvalues (ascending) and matching unit eigenvectors of `L`.
pub fn laplacian_eigen(graph: &Graph) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    check_dense_size("laplacian_eigen", graph.n())?;
    let eig = SymmetricEigen::new(LaplacianOperator::new(graph).to_dense());
    let mut order: Vec<usize> = (0..graph.n()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = order
        .iter()
        .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();
    Ok((values, vectors))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
