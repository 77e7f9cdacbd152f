//! Numerical witnesses for the approximation guarantees of entry-wise graph
//! sparsification: closed-form smoothing solutions, additive spectral
//! similarity of sparsified Laplacians, and multi-hop error curves.

use nalgebra::{DMatrix, SymmetricEigen};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::dense::{dense_solve, l2, DenseMatrix};
use crate::error::{Error, Result};
use crate::graph::{spmm, CsrGraph};
use crate::propagate::{propagate_with, PropagateOptions, PropagationScheme};
use crate::sparsify::{sparsify_edges_message, sparsify_edges_nodewise, symmetrize_mask, EdgeMask, ThresholdPolicy};

/// Largest problem solved with dense factorizations.
pub const DENSE_SOLVE_LIMIT: usize = 4096;
/// Largest operator handed to the dense eigensolver in automatic mode.
pub const DENSE_EIGEN_LIMIT: usize = 512;
pub const POWER_TOL: f64 = 1e-8;
pub const POWER_MAX_ITER: usize = 10_000;
const RESIDUAL_TOL: f64 = 1e-9;

/// Solves `(I + c·L)·p = x` by dense LU factorization.
pub fn closed_form_solution(l: &CsrGraph, x: &DenseMatrix, c: f64) -> Result<DenseMatrix> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("smoothing weight c = {c} must be finite and >= 0")));
    }
    let n = l.n();
    if n > DENSE_SOLVE_LIMIT {
        return Err(Error::SizeGuard {
            n,
            limit: DENSE_SOLVE_LIMIT,
        });
    }
    if x.rows() != n {
        return Err(Error::DimensionMismatch(format!("x has {} rows, L is {n}×{n}", x.rows())));
    }
    let mut a = l.to_dense().scale(c);
    for i in 0..n {
        a.set(i, i, a.get(i, i) + 1.0);
    }
    let p = dense_solve(&a, x)?;
    let residual = crate::dense::dense_matmul(&a, &p)?.sub(x)?.frobenius_norm();
    let scale = x.frobenius_norm().max(f64::MIN_POSITIVE);
    if residual > RESIDUAL_TOL * scale {
        return Err(Error::Inaccurate {
            residual: residual / scale,
        });
    }
    Ok(p)
}

/// `‖p − x‖² + c·tr(pᵀ L p)`.
pub fn smoothing_objective(l: &CsrGraph, p: &DenseMatrix, x: &DenseMatrix, c: f64) -> Result<f64> {
    let fit = p.sub(x)?.frobenius_norm().powi(2);
    let lp = spmm(l, p)?;
    let energy: f64 = p.data().iter().zip(lp.data()).map(|(a, b)| a * b).sum();
    Ok(fit + c * energy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenMethod {
    /// Dense eigensolve up to [`DENSE_EIGEN_LIMIT`] nodes, power iteration beyond.
    #[default]
    Auto,
    Dense,
    Power,
}

/// Exact terms of `|pᵀΥp| ≤ ‖p‖·‖Υp‖₁ ≤ q_a·δ_a·‖p‖`, rounded for display.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainWitness {
    pub quad_form: f64,
    pub norm_times_l1: f64,
    pub budget: f64,
    pub first_holds: bool,
    pub second_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    /// Operator-norm estimate of `L − L̂` (its largest singular value), or the
    /// claimed `q_a·δ_a/‖p‖` for a single-vector check.
    pub epsilon: f64,
    /// `sup_{‖x‖=1} |xᵀ(L − L̂)x|`, or `|pᵀΥp|/‖p‖²` for a single-vector check.
    pub quad_form_sup: f64,
    pub symmetric: bool,
    pub q_a: usize,
    pub delta_a: f64,
    pub bound_holds: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainWitness>,
}

/// Additive spectral distance between two Laplacians on the same node set.
pub fn spectral_epsilon(l: &CsrGraph, l_hat: &CsrGraph) -> Result<SimilarityReport> {
    spectral_epsilon_with(l, l_hat, EigenMethod::Auto)
}

pub fn spectral_epsilon_with(l: &CsrGraph, l_hat: &CsrGraph, method: EigenMethod) -> Result<SimilarityReport> {
    let upsilon = l.sub(l_hat)?;
    let n = upsilon.n();
    let q_a = upsilon.values().iter().filter(|v| **v != 0.0).count();
    let symmetric = is_value_symmetric(&upsilon);
    let dense = match method {
        EigenMethod::Dense => true,
        EigenMethod::Power => false,
        EigenMethod::Auto => n <= DENSE_EIGEN_LIMIT,
    };
    let (sigma, quad) = if dense {
        if n > DENSE_SOLVE_LIMIT {
            return Err(Error::SizeGuard {
                n,
                limit: DENSE_SOLVE_LIMIT,
            });
        }
        dense_norms(&upsilon, symmetric)
    } else {
        power_norms(&upsilon, symmetric)?
    };
    Ok(SimilarityReport {
        epsilon: sigma,
        quad_form_sup: quad,
        symmetric,
        q_a,
        delta_a: f64::NAN,
        bound_holds: quad <= sigma + 1e-9,
        chain: None,
    })
}

fn is_value_symmetric(m: &CsrGraph) -> bool {
    (0..m.n()).all(|u| {
        m.row_range(u).all(|pos| {
            let v = m.col_idx()[pos];
            let w = m.values()[pos];
            match m.find(v, u) {
                Some(q) => m.values()[q] == w,
                None => w == 0.0,
            }
        })
    })
}

fn to_nalgebra(m: &CsrGraph) -> DMatrix<f64> {
    let n = m.n();
    let mut d = DMatrix::zeros(n, n);
    for u in 0..n {
        for pos in m.row_range(u) {
            d[(u, m.col_idx()[pos])] += m.values()[pos];
        }
    }
    d
}

fn dense_norms(upsilon: &CsrGraph, symmetric: bool) -> (f64, f64) {
    let d = to_nalgebra(upsilon);
    if d.is_empty() {
        return (0.0, 0.0);
    }
    let sym = (&d + d.transpose()) * 0.5;
    let quad = SymmetricEigen::new(sym).eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if symmetric {
        (quad, quad)
    } else {
        let sigma = d.singular_values().iter().fold(0.0f64, |m, v| m.max(*v));
        (sigma, quad)
    }
}

fn power_norms(upsilon: &CsrGraph, symmetric: bool) -> Result<(f64, f64)> {
    let ut = upsilon.transpose();
    // σ_max(Υ)² is the top eigenvalue of the PSD operator ΥᵀΥ.
    let sigma = power_iteration(upsilon.n(), |v| matvec(&ut, &matvec(upsilon, v)))?.sqrt();
    if symmetric {
        return Ok((sigma, sigma));
    }
    // Max |λ| of S = (Υ+Υᵀ)/2 via the PSD operator S².
    let s = |v: &[f64]| -> Vec<f64> {
        matvec(upsilon, v)
            .iter()
            .zip(matvec(&ut, v))
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    };
    let quad = power_iteration(upsilon.n(), |v| s(&s(v)))?.sqrt();
    Ok((sigma, quad))
}

fn matvec(m: &CsrGraph, v: &[f64]) -> Vec<f64> {
    (0..m.n())
        .map(|u| m.row_range(u).map(|pos| m.values()[pos] * v[m.col_idx()[pos]]).sum())
        .collect()
}

/// Largest eigenvalue of a symmetric positive semidefinite operator given as
/// a mat-vec closure.
pub fn power_iteration(n: usize, apply: impl Fn(&[f64]) -> Vec<f64>) -> Result<f64> {
    if n == 0 {
        return Ok(0.0);
    }
    // Deterministic start with no special alignment to graph structure.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 97) as f64 / 97.0).collect();
    let norm = l2(&v);
    v.iter_mut().for_each(|x| *x /= norm);
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    for _ in 0..POWER_MAX_ITER {
        let w = apply(&v);
        let next: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let wn = l2(&w);
        if wn == 0.0 {
            return Ok(0.0);
        }
        residual = w.iter().zip(&v).map(|(a, b)| (a - next * b).powi(2)).sum::<f64>().sqrt();
        let converged = residual <= POWER_TOL * next.abs().max(f64::MIN_POSITIVE)
            || (next - lambda).abs() <= POWER_TOL * POWER_TOL * next.abs();
        lambda = next;
        v = w.into_iter().map(|x| x / wn).collect();
        if converged {
            return Ok(lambda);
        }
    }
    Err(Error::NonConvergence {
        iterations: POWER_MAX_ITER,
        residual,
    })
}

/// Prunes `T` against a single vector with the exact message rule and checks
/// `|pᵀΥp| ≤ ‖p‖·‖Υp‖₁ ≤ q_a·δ_a·‖p‖` in exact rational arithmetic over the
/// computed messages `τ[u,v] = fl(T[u,v]·p[v])`, where `Υ = L − L̂`.
pub fn check_sparsifier_bound(t: &CsrGraph, p: &[f64], delta_a: f64) -> Result<SimilarityReport> {
    if p.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidParameter("zero vector makes the bound vacuous".into()));
    }
    if p.iter().any(|v| !v.is_finite()) || !delta_a.is_finite() {
        return Err(Error::InvalidParameter("vector and threshold must be finite".into()));
    }
    let (mask, stats) = sparsify_edges_message(t, p, delta_a, &EdgeMask::full(t.nnz()), false)?;
    let exact = |v: f64| BigRational::from_float(v).expect("finite");

    // Υ = (I − T) − (I − T̂) = T̂ − T: minus the pruned entries.
    let mut upsilon_p = vec![BigRational::zero(); t.n()];
    for (u, acc) in upsilon_p.iter_mut().enumerate() {
        for pos in t.row_range(u) {
            if !mask.is_kept(pos) {
                *acc -= exact(t.values()[pos] * p[t.col_idx()[pos]]);
            }
        }
    }
    let p_exact: Vec<BigRational> = p.iter().map(|v| exact(*v)).collect();
    let quad = p_exact
        .iter()
        .zip(&upsilon_p)
        .fold(BigRational::zero(), |s, (a, b)| s + a * b)
        .abs();
    let l1 = upsilon_p.iter().fold(BigRational::zero(), |s, v| s + v.abs());
    let p_sq = p_exact.iter().fold(BigRational::zero(), |s, v| s + v * v);
    let budget = BigRational::from_integer(BigInt::from(stats.q_a)) * exact(delta_a);

    // Both sides are non-negative, so compare squares to stay rational.
    let first = &quad * &quad <= &p_sq * &l1 * &l1;
    // ‖p‖ > 0 cancels from the second inequality.
    let second = l1 <= budget;

    let norm = l2(p);
    let approx = |r: &BigRational| num_traits::ToPrimitive::to_f64(r).unwrap_or(f64::NAN);
    let quad_f = approx(&quad);
    Ok(SimilarityReport {
        epsilon: stats.q_a as f64 * delta_a / norm,
        quad_form_sup: quad_f / (norm * norm),
        symmetric: t.is_symmetric(),
        q_a: stats.q_a,
        delta_a,
        bound_holds: first && second,
        chain: Some(ChainWitness {
            quad_form: quad_f,
            norm_times_l1: norm * approx(&l1),
            budget: approx(&budget) * norm,
            first_holds: first,
            second_holds: second,
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxReport {
    pub c: f64,
    pub epsilon: f64,
    pub p_star: DenseMatrix,
    pub p_hat_star: DenseMatrix,
    pub err: f64,
    pub bound: f64,
    pub within_bound: bool,
}

/// Compares the smoothing optima of `L` and `L̂`:
/// `‖p̂* − p*‖ ≤ c·ε·‖p*‖` with `ε = ‖L − L̂‖₂` from a dense eigensolve.
pub fn check_approx_smoothing(l: &CsrGraph, l_hat: &CsrGraph, x: &DenseMatrix, c: f64) -> Result<ApproxReport> {
    let sim = spectral_epsilon_with(l, l_hat, EigenMethod::Dense)?;
    let p_star = closed_form_solution(l, x, c)?;
    let p_hat_star = closed_form_solution(l_hat, x, c)?;
    let err = p_hat_star.sub(&p_star)?.frobenius_norm();
    let bound = c * sim.epsilon * p_star.frobenius_norm();
    Ok(ApproxReport {
        c,
        epsilon: sim.epsilon,
        within_bound: err <= bound + 1e-9,
        p_star,
        p_hat_star,
        err,
        bound,
    })
}

/// `T` with pruned entries set to zero (pattern unchanged).
pub fn apply_mask(t: &CsrGraph, mask: &EdgeMask) -> Result<CsrGraph> {
    if mask.len() != t.nnz() {
        return Err(Error::DimensionMismatch(format!("mask covers {} entries, graph has {}", mask.len(), t.nnz())));
    }
    let values = t
        .values()
        .iter()
        .enumerate()
        .map(|(pos, v)| if mask.is_kept(pos) { *v } else { 0.0 })
        .collect();
    t.with_values(values)
}

/// Symmetric pruned diffusion for a symmetric `t`: node-wise rule against `x`,
/// then only pairs kept in both directions survive.
pub fn symmetric_pruned(t: &CsrGraph, x: &DenseMatrix, delta_a: f64) -> Result<(CsrGraph, EdgeMask)> {
    let (mask, _) = sparsify_edges_nodewise(t, x, delta_a, &EdgeMask::full(t.nnz()), false)?;
    let mask = symmetrize_mask(t, &mask)?;
    Ok((apply_mask(t, &mask)?, mask))
}

/// One row of a `{delta_a, hop, value}` table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub delta_a: f64,
    pub hop: usize,
    pub value: f64,
}

fn snapshots(t: &CsrGraph, x: &DenseMatrix, scheme: &PropagationScheme, policy: ThresholdPolicy) -> Result<Vec<DenseMatrix>> {
    let opts = PropagateOptions {
        keep_snapshots: true,
        ..PropagateOptions::default()
    };
    Ok(propagate_with(t, x, scheme, &policy, opts)?.snapshots)
}

fn guard(n: usize) -> Result<()> {
    if n > DENSE_SOLVE_LIMIT {
        Err(Error::SizeGuard {
            n,
            limit: DENSE_SOLVE_LIMIT,
        })
    } else {
        Ok(())
    }
}

/// Relative error `‖p̂_l − p_l‖/‖p_l‖` of sparsified against unpruned
/// propagation, for every threshold in `grid` and every hop.
pub fn multi_hop_error_curve(
    t: &CsrGraph,
    x: &DenseMatrix,
    scheme: &PropagationScheme,
    base: &ThresholdPolicy,
    grid: &[f64],
) -> Result<Vec<CurveRow>> {
    guard(t.n())?;
    let exact = snapshots(t, x, scheme, ThresholdPolicy { delta_a: 0.0, ..*base })?;
    let mut rows = Vec::new();
    for &delta_a in grid {
        let approx = snapshots(t, x, scheme, ThresholdPolicy { delta_a, ..*base })?;
        for (hop, (a, e)) in approx.iter().zip(&exact).enumerate() {
            let denom = e.frobenius_norm();
            let diff = a.sub(e)?.frobenius_norm();
            let value = if denom == 0.0 { diff } else { diff / denom };
            rows.push(CurveRow { delta_a, hop, value });
        }
    }
    Ok(rows)
}

/// Distance `‖p̂_l − target‖_F` per threshold and hop.
pub fn distance_curve(
    t: &CsrGraph,
    x: &DenseMatrix,
    scheme: &PropagationScheme,
    base: &ThresholdPolicy,
    grid: &[f64],
    target: &DenseMatrix,
) -> Result<Vec<CurveRow>> {
    guard(t.n())?;
    let mut rows = Vec::new();
    for &delta_a in grid {
        for (hop, p) in snapshots(t, x, scheme, ThresholdPolicy { delta_a, ..*base })?.iter().enumerate() {
            rows.push(CurveRow {
                delta_a,
                hop,
                value: p.sub(target)?.frobenius_norm(),
            });
        }
    }
    Ok(rows)
}

/// Distance of each traced embedding to the smoothing optimum
/// `p* = (I + c·L)^{-1}x` with `L = I − T`.
pub fn smoothing_distance(
    t: &CsrGraph,
    x: &DenseMatrix,
    scheme: &PropagationScheme,
    base: &ThresholdPolicy,
    grid: &[f64],
    c: f64,
) -> Result<Vec<CurveRow>> {
    let p_star = closed_form_solution(&t.laplacian(), x, c)?;
    distance_curve(t, x, scheme, base, grid, &p_star)
}

/// Limit of repeated symmetric normalized propagation on a connected,
/// self-looped graph: projection of `x` onto `v ∝ √d̃`.
pub fn oversmoothing_limit(looped_adjacency: &CsrGraph, x: &DenseMatrix) -> Result<DenseMatrix> {
    if looped_adjacency.n() != x.rows() {
        return Err(Error::DimensionMismatch("graph and features disagree on n".into()));
    }
    let degrees = crate::graph::DegreeVector::of(looped_adjacency);
    let mut v: Vec<f64> = degrees.as_slice().iter().map(|d| d.sqrt()).collect();
    let norm = l2(&v);
    if norm == 0.0 {
        return Err(Error::InvalidGraph("graph has no edges".into()));
    }
    v.iter_mut().for_each(|a| *a /= norm);
    let mut out = DenseMatrix::zeros(x.rows(), x.cols());
    for j in 0..x.cols() {
        let coef: f64 = (0..x.rows()).map(|u| v[u] * x.get(u, j)).sum();
        for (u, vu) in v.iter().enumerate() {
            out.set(u, j, vu * coef);
        }
    }
    Ok(out)
}

/// Edge probability of the random instances used by the property suites.
pub const SUITE_EDGE_PROB: f64 = 0.3;

/// Seeded suite instance: symmetric normalized self-looped Erdős–Rényi
/// diffusion and a signal drawn uniformly from `[0, 1)`.
pub fn suite_instance(n: usize, seed: u64) -> (CsrGraph, Vec<f64>) {
    use rand::Rng;
    let t = crate::synthetic::erdos_renyi(n, SUITE_EDGE_PROB, seed)
        .add_self_loops()
        .normalize_adjacency(0.5)
        .expect("self-looped graphs have positive degrees");
    let mut r = crate::synthetic::rng(seed ^ 0x9e37_79b9_7f4a_7c15);
    let p = (0..n).map(|_| r.gen::<f64>()).collect();
    (t, p)
}

/// Outcome of one suite instance: `lhs ≤ rhs` is the checked inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub seed: u64,
    pub n: usize,
    pub delta_a: f64,
    pub c: f64,
    pub q_a: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Sparsifier bound chain on `seeds` instances for each size and threshold.
pub fn sparsifier_bound_suite(sizes: &[usize], seeds: u64, grid: &[f64]) -> Result<Vec<SuiteRow>> {
    let mut rows = Vec::new();
    for &n in sizes {
        for seed in 0..seeds {
            let (t, p) = suite_instance(n, seed);
            for &delta_a in grid {
                let r = check_sparsifier_bound(&t, &p, delta_a)?;
                let chain = r.chain.expect("single-vector checks carry the chain");
                rows.push(SuiteRow {
                    seed,
                    n,
                    delta_a,
                    c: f64::NAN,
                    q_a: r.q_a,
                    lhs: chain.quad_form,
                    rhs: chain.budget,
                    holds: r.bound_holds,
                });
            }
        }
    }
    Ok(rows)
}

/// Smoothing-optimum approximation bound with a symmetric pruned diffusion.
pub fn approx_smoothing_suite(sizes: &[usize], seeds: u64, grid: &[f64], cs: &[f64]) -> Result<Vec<SuiteRow>> {
    let mut rows = Vec::new();
    for &n in sizes {
        for seed in 0..seeds {
            let (t, p) = suite_instance(n, seed);
            let x = DenseMatrix::column(&p)?;
            let l = t.laplacian();
            for &delta_a in grid {
                let (t_hat, mask) = symmetric_pruned(&t, &x, delta_a)?;
                let l_hat = t_hat.laplacian();
                for &c in cs {
                    let r = check_approx_smoothing(&l, &l_hat, &x, c)?;
                    rows.push(SuiteRow {
                        seed,
                        n,
                        delta_a,
                        c,
                        q_a: mask.dropped(),
                        lhs: r.err,
                        rhs: r.bound,
                        holds: r.within_bound,
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Averages `{delta_a, hop, value}` tables of equal layout element-wise.
pub fn mean_curves(tables: &[Vec<CurveRow>]) -> Vec<CurveRow> {
    let Some(first) = tables.first() else {
        return Vec::new();
    };
    let k = tables.len() as f64;
    first
        .iter()
        .enumerate()
        .map(|(i, row)| CurveRow {
            value: tables.iter().map(|t| t[i].value).sum::<f64>() / k,
            ..*row
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{clique, erdos_renyi, rng};

    fn looped(g: &CsrGraph) -> CsrGraph {
        g.add_self_loops().normalize_adjacency(0.5).unwrap()
    }

    #[test]
    fn closed_form_examples() {
        let l = looped(&clique(2)).laplacian();
        let x = DenseMatrix::column(&[1.0, 0.0]).unwrap();
        let p = closed_form_solution(&l, &x, 1.0).unwrap();
        assert!((p.get(0, 0) - 0.75).abs() < 1e-15 && (p.get(1, 0) - 0.25).abs() < 1e-15);
        let t = looped(&erdos_renyi(30, 0.2, 1));
        let x = DenseMatrix::random_uniform(30, 3, -1.0, 1.0, &mut rng(1));
        assert_eq!(closed_form_solution(&t.laplacian(), &x, 0.0).unwrap(), x);
        assert!(closed_form_solution(&t.laplacian(), &x, -1.0).is_err());
    }

    #[test]
    fn size_guard() {
        let big = CsrGraph::identity(DENSE_SOLVE_LIMIT + 1);
        let x = DenseMatrix::zeros(DENSE_SOLVE_LIMIT + 1, 1);
        assert!(matches!(closed_form_solution(&big, &x, 1.0), Err(Error::SizeGuard { .. })));
    }

    #[test]
    fn epsilon_of_identical_and_two_clique() {
        let t = looped(&clique(2));
        let l = t.laplacian();
        let same = spectral_epsilon(&l, &l).unwrap();
        assert_eq!(same.epsilon, 0.0);
        // drop the off-diagonal pair
        let mask = EdgeMask::from_bools((0..t.nnz()).map(|p| {
            let u = if p < t.row_range(1).start { 0 } else { 1 };
            t.col_idx()[p] == u
        }));
        let l_hat = apply_mask(&t, &mask).unwrap().laplacian();
        for method in [EigenMethod::Dense, EigenMethod::Power] {
            let r = spectral_epsilon_with(&l, &l_hat, method).unwrap();
            assert!((r.epsilon - 0.5).abs() < 1e-7, "{method:?}: {}", r.epsilon);
            assert!(r.symmetric);
        }
    }

    #[test]
    fn power_iteration_matches_dense() {
        for seed in 0..5 {
            let t = looped(&erdos_renyi(40, 0.2, seed));
            let x = DenseMatrix::random_uniform(40, 2, 0.0, 1.0, &mut rng(seed));
            let (t_hat, _) = symmetric_pruned(&t, &x, 0.1).unwrap();
            let (l, l_hat) = (t.laplacian(), t_hat.laplacian());
            let dense = spectral_epsilon_with(&l, &l_hat, EigenMethod::Dense).unwrap();
            let power = spectral_epsilon_with(&l, &l_hat, EigenMethod::Power).unwrap();
            assert!((dense.epsilon - power.epsilon).abs() < 1e-6, "{} vs {}", dense.epsilon, power.epsilon);
        }
    }

    #[test]
    fn asymmetric_reports_both_quantities() {
        let g = erdos_renyi(25, 0.25, 3).add_self_loops();
        let t = g.normalize_adjacency(0.0).unwrap();
        let x = DenseMatrix::random_uniform(25, 1, 0.0, 1.0, &mut rng(3));
        let (mask, _) = sparsify_edges_nodewise(&t, &x, 0.05, &EdgeMask::full(t.nnz()), false).unwrap();
        let l_hat = apply_mask(&t, &mask).unwrap().laplacian();
        let dense = spectral_epsilon_with(&t.laplacian(), &l_hat, EigenMethod::Dense).unwrap();
        let power = spectral_epsilon_with(&t.laplacian(), &l_hat, EigenMethod::Power).unwrap();
        assert!(!dense.symmetric);
        assert!(dense.quad_form_sup <= dense.epsilon + 1e-9);
        assert!((dense.epsilon - power.epsilon).abs() < 1e-6);
        assert!((dense.quad_form_sup - power.quad_form_sup).abs() < 1e-6);
    }

    #[test]
    fn sparsifier_bound_two_clique() {
        let t = looped(&clique(2));
        let r = check_sparsifier_bound(&t, &[0.1, 0.1], 0.06).unwrap();
        assert_eq!(r.q_a, 4);
        assert!(r.bound_holds);
        let chain = r.chain.unwrap();
        assert!((chain.quad_form - 0.02).abs() < 1e-15);
        assert!((chain.budget - 4.0 * 0.06 * (0.02f64).sqrt()).abs() < 1e-12);
        assert!(check_sparsifier_bound(&t, &[0.0, 0.0], 0.06).is_err());
        let none = check_sparsifier_bound(&t, &[0.3, -0.7], 0.0).unwrap();
        assert_eq!(none.q_a, 0);
        assert_eq!(none.epsilon, 0.0);
        assert!(none.bound_holds);
    }

    #[test]
    fn approx_trivial_cases() {
        let t = looped(&erdos_renyi(16, 0.3, 2));
        let l = t.laplacian();
        let x = DenseMatrix::random_uniform(16, 1, -1.0, 1.0, &mut rng(2));
        let same = check_approx_smoothing(&l, &l, &x, 1.0).unwrap();
        assert_eq!(same.err, 0.0);
        assert!(same.within_bound);
        let (t_hat, _) = symmetric_pruned(&t, &x, 0.1).unwrap();
        let zero_c = check_approx_smoothing(&l, &t_hat.laplacian(), &x, 0.0).unwrap();
        assert_eq!(zero_c.err, 0.0);
        assert_eq!(zero_c.p_star, x);
    }
}
