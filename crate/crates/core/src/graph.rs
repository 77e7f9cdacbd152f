//! Compressed sparse row graphs: construction, degree normalization, the
//! normalized Laplacian, and the sparse–dense product used for propagation.

use rayon::prelude::*;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// A square sparse matrix in CSR layout, used for adjacency, diffusion and
/// Laplacian operators alike.
///
/// Columns inside a row are strictly increasing, so every `(row, col)` pair
/// appears at most once and positions `0..nnz` give a stable edge numbering
/// that masks refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrGraph {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    has_self_loops: bool,
    symmetric: bool,
}

/// Per-node degree, counting the self-loop when present.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeVector(pub Vec<f64>);

impl DegreeVector {
    pub fn of(g: &CsrGraph) -> Self {
        DegreeVector(
            (0..g.n)
                .map(|u| g.values[g.row_range(u)].iter().sum())
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl CsrGraph {
    /// Builds an unweighted graph from directed arcs. Duplicate arcs are rejected.
    pub fn from_arcs(n: usize, arcs: &[(usize, usize)]) -> Result<Self> {
        let mut sorted = arcs.to_vec();
        for &(u, v) in &sorted {
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!("arc ({u},{v}) out of range for n={n}")));
            }
        }
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidGraph(format!("duplicate arc ({},{})", w[0].0, w[0].1)));
        }
        let mut row_ptr = vec![0usize; n + 1];
        for &(u, _) in &sorted {
            row_ptr[u + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = sorted.iter().map(|&(_, v)| v).collect();
        let values = vec![1.0; sorted.len()];
        Self::from_parts(n, row_ptr, col_idx, values)
    }

    /// Builds a graph from raw CSR arrays, validating every structural invariant.
    pub fn from_parts(n: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let mut g = CsrGraph {
            n,
            row_ptr,
            col_idx,
            values,
            has_self_loops: false,
            symmetric: false,
        };
        g.validate_structure()?;
        g.refresh_flags();
        Ok(g)
    }

    /// Same sparsity pattern, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.nnz() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} stored entries",
                values.len(),
                self.nnz()
            )));
        }
        let mut g = CsrGraph {
            values,
            ..self.clone()
        };
        g.refresh_flags();
        Ok(g)
    }

    pub fn identity(n: usize) -> Self {
        let arcs: Vec<_> = (0..n).map(|u| (u, u)).collect();
        Self::from_arcs(n, &arcs).expect("identity is valid")
    }

    fn validate_structure(&self) -> Result<()> {
        let n = self.n;
        if self.row_ptr.len() != n + 1 {
            return Err(Error::InvalidGraph(format!(
                "row_ptr length {} != n+1 = {}",
                self.row_ptr.len(),
                n + 1
            )));
        }
        if self.row_ptr[0] != 0 {
            return Err(Error::InvalidGraph("row_ptr[0] != 0".into()));
        }
        if self.row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidGraph("row_ptr decreasing".into()));
        }
        let nnz = self.row_ptr[n];
        if self.col_idx.len() != nnz || self.values.len() != nnz {
            return Err(Error::InvalidGraph(format!(
                "row_ptr[n]={nnz} but col_idx={} values={}",
                self.col_idx.len(),
                self.values.len()
            )));
        }
        for u in 0..n {
            let cols = &self.col_idx[self.row_range(u)];
            if cols.iter().any(|&c| c >= n) {
                return Err(Error::InvalidGraph(format!("row {u} has column out of range")));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidGraph(format!(
                    "row {u} columns not strictly increasing (duplicate edge?)"
                )));
            }
        }
        if let Some(pos) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGraph(format!("non-finite value at position {pos}")));
        }
        Ok(())
    }

    fn refresh_flags(&mut self) {
        self.has_self_loops = (0..self.n).all(|u| self.find(u, u).is_some());
        self.symmetric = (0..self.n).all(|u| {
            self.row_range(u).all(|p| {
                let v = self.col_idx[p];
                self.find(v, u).is_some_and(|q| self.values[q] == self.values[p])
            })
        });
    }

    /// Re-checks all structural invariants plus the cached flags.
    pub fn validate(&self) -> Result<()> {
        self.validate_structure()?;
        let mut copy = self.clone();
        copy.refresh_flags();
        if copy.has_self_loops != self.has_self_loops || copy.symmetric != self.symmetric {
            return Err(Error::InvalidGraph("stale flags".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn has_self_loops(&self) -> bool {
        self.has_self_loops
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    #[inline]
    pub fn row_range(&self, u: usize) -> std::ops::Range<usize> {
        self.row_ptr[u]..self.row_ptr[u + 1]
    }

    /// Row index of every stored position.
    pub fn row_of_positions(&self) -> Vec<usize> {
        let mut rows = Vec::with_capacity(self.nnz());
        for u in 0..self.n {
            rows.extend(std::iter::repeat_n(u, self.row_ptr[u + 1] - self.row_ptr[u]));
        }
        rows
    }

    /// Position of entry `(u, v)` if stored.
    pub fn find(&self, u: usize, v: usize) -> Option<usize> {
        let range = self.row_range(u);
        let start = range.start;
        self.col_idx[range].binary_search(&v).ok().map(|i| start + i)
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.find(u, v).map_or(0.0, |p| self.values[p])
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n, self.n);
        for u in 0..self.n {
            for p in self.row_range(u) {
                d.set(u, self.col_idx[p], self.values[p]);
            }
        }
        d
    }

    /// Adds a unit self-loop to every row lacking one. Already self-looped
    /// graphs are returned unchanged.
    pub fn add_self_loops(&self) -> CsrGraph {
        if self.has_self_loops {
            return self.clone();
        }
        let mut row_ptr = Vec::with_capacity(self.n + 1);
        let mut col_idx = Vec::with_capacity(self.nnz() + self.n);
        let mut values = Vec::with_capacity(self.nnz() + self.n);
        row_ptr.push(0);
        for u in 0..self.n {
            let mut inserted = false;
            for p in self.row_range(u) {
                let v = self.col_idx[p];
                if !inserted && v >= u {
                    if v != u {
                        col_idx.push(u);
                        values.push(1.0);
                    }
                    inserted = true;
                }
                col_idx.push(v);
                values.push(self.values[p]);
            }
            if !inserted {
                col_idx.push(u);
                values.push(1.0);
            }
            row_ptr.push(col_idx.len());
        }
        let mut g = CsrGraph {
            n: self.n,
            row_ptr,
            col_idx,
            values,
            has_self_loops: true,
            symmetric: false,
        };
        g.refresh_flags();
        g
    }

    /// `D^{r-1} · A · D^{-r}`; the sparsity pattern is unchanged.
    pub fn normalize_adjacency(&self, r: f64) -> Result<CsrGraph> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::InvalidParameter(format!("normalization r={r} outside [0,1]")));
        }
        let deg = DegreeVector::of(self);
        if let Some(u) = deg.0.iter().position(|&d| d <= 0.0) {
            return Err(Error::InvalidGraph(format!("node {u} has zero degree")));
        }
        let d = &deg.0;
        // common exponents get exact closed forms; 0.5 stays bitwise symmetric
        let scale = |u: usize, v: usize| -> f64 {
            if r == 0.5 {
                1.0 / (d[u] * d[v]).sqrt()
            } else if r == 0.0 {
                1.0 / d[u]
            } else if r == 1.0 {
                1.0 / d[v]
            } else {
                d[u].powf(r - 1.0) * d[v].powf(-r)
            }
        };
        let mut values = Vec::with_capacity(self.nnz());
        for u in 0..self.n {
            for p in self.row_range(u) {
                values.push(self.values[p] * scale(u, self.col_idx[p]));
            }
        }
        self.with_values(values)
    }

    /// `I − A`, with an explicit diagonal in every row. When the diagonal is
    /// already stored the pattern and position numbering are preserved.
    pub fn laplacian(&self) -> CsrGraph {
        let base = self.add_self_loops_with(0.0);
        let values = (0..base.n)
            .flat_map(|u| {
                let base = &base;
                base.row_range(u).map(move |p| {
                    let v = base.values[p];
                    if base.col_idx[p] == u {
                        1.0 - v
                    } else {
                        -v
                    }
                })
            })
            .collect();
        base.with_values(values).expect("same pattern")
    }

    fn add_self_loops_with(&self, weight: f64) -> CsrGraph {
        if self.has_self_loops {
            return self.clone();
        }
        let looped = self.add_self_loops();
        let values = (0..looped.n)
            .flat_map(|u| {
                let looped = &looped;
                let orig = self;
                looped.row_range(u).map(move |p| {
                    let v = looped.col_idx[p];
                    if v == u && orig.find(u, u).is_none() {
                        weight
                    } else {
                        looped.values[p]
                    }
                })
            })
            .collect();
        looped.with_values(values).expect("same pattern")
    }

    /// Entry-wise difference `self − other` over the union pattern.
    pub fn sub(&self, other: &CsrGraph) -> Result<CsrGraph> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(format!("n {} vs {}", self.n, other.n)));
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for u in 0..self.n {
            let (mut a, a_end) = (self.row_ptr[u], self.row_ptr[u + 1]);
            let (mut b, b_end) = (other.row_ptr[u], other.row_ptr[u + 1]);
            while a < a_end || b < b_end {
                let ca = if a < a_end { self.col_idx[a] } else { usize::MAX };
                let cb = if b < b_end { other.col_idx[b] } else { usize::MAX };
                if ca == cb {
                    col_idx.push(ca);
                    values.push(self.values[a] - other.values[b]);
                    a += 1;
                    b += 1;
                } else if ca < cb {
                    col_idx.push(ca);
                    values.push(self.values[a]);
                    a += 1;
                } else {
                    col_idx.push(cb);
                    values.push(-other.values[b]);
                    b += 1;
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrGraph::from_parts(self.n, row_ptr, col_idx, values)
    }

    pub fn transpose(&self) -> CsrGraph {
        let mut counts = vec![0usize; self.n + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for i in 0..self.n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for u in 0..self.n {
            for p in self.row_range(u) {
                let c = self.col_idx[p];
                col_idx[next[c]] = u;
                values[next[c]] = self.values[p];
                next[c] += 1;
            }
        }
        CsrGraph::from_parts(self.n, counts, col_idx, values).expect("transpose is valid")
    }
}

/// Sparse–dense product `T·P`.
///
/// Each output row accumulates its stored entries in ascending column order,
/// so the result is bitwise reproducible regardless of thread count.
pub fn spmm(t: &CsrGraph, p: &DenseMatrix) -> Result<DenseMatrix> {
    if t.n() != p.rows() {
        return Err(Error::DimensionMismatch(format!(
            "spmm: graph n={} but P has {} rows",
            t.n(),
            p.rows()
        )));
    }
    let f = p.cols();
    let mut out = vec![0.0; t.n() * f];
    if f > 0 {
        out.par_chunks_mut(f).enumerate().for_each(|(u, acc)| {
            for pos in t.row_range(u) {
                let w = t.values()[pos];
                for (a, x) in acc.iter_mut().zip(p.row(t.col_idx()[pos])) {
                    *a += w * x;
                }
            }
        });
    }
    Ok(DenseMatrix::from_raw(t.n(), f, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::dense_matmul;
    use crate::synthetic::erdos_renyi;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn clique2() -> CsrGraph {
        CsrGraph::from_arcs(2, &[(0, 1), (1, 0)]).unwrap()
    }

    fn path3() -> CsrGraph {
        CsrGraph::from_arcs(3, &[(0, 1), (1, 0), (1, 2), (2, 1)]).unwrap()
    }

    #[test]
    fn self_loops_on_clique() {
        let g = clique2().add_self_loops();
        assert_eq!(g.nnz(), 4);
        assert!(g.has_self_loops());
        assert!(g.find(0, 0).is_some() && g.find(1, 1).is_some());
        g.validate().unwrap();
    }

    #[test]
    fn self_loops_idempotent() {
        let g = path3().add_self_loops();
        assert_eq!(g.add_self_loops(), g);
    }

    #[test]
    fn self_loops_on_empty_graph() {
        let g = CsrGraph::from_arcs(3, &[]).unwrap().add_self_loops();
        assert_eq!(g.nnz(), 3);
        assert_eq!(g.col_idx(), &[0, 1, 2]);
    }

    #[test]
    fn duplicate_arcs_rejected() {
        assert!(CsrGraph::from_arcs(2, &[(0, 1), (0, 1)]).is_err());
        assert!(CsrGraph::from_arcs(2, &[(0, 2)]).is_err());
    }

    #[test]
    fn from_parts_rejects_unsorted_rows() {
        let err = CsrGraph::from_parts(2, vec![0, 2, 2], vec![1, 0], vec![1.0, 1.0]);
        assert!(err.is_err());
        let err = CsrGraph::from_parts(2, vec![0, 1, 1], vec![0], vec![1.0, 1.0]);
        assert!(err.is_err());
    }

    #[test]
    fn normalize_clique_half() {
        let t = clique2().add_self_loops().normalize_adjacency(0.5).unwrap();
        assert!(t.values().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn normalize_path_entry() {
        let t = path3().add_self_loops().normalize_adjacency(0.5).unwrap();
        assert_abs_diff_eq!(t.get(0, 1), 1.0 / 6f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(t.get(0, 1), 0.408248, epsilon = 1e-6);
        assert!(t.is_symmetric());
    }

    #[test]
    fn normalize_r_zero_row_stochastic() {
        let g = erdos_renyi(20, 0.3, 4).add_self_loops();
        let t = g.normalize_adjacency(0.0).unwrap();
        for u in 0..t.n() {
            let s: f64 = t.values()[t.row_range(u)].iter().sum();
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn normalize_rejects_zero_degree() {
        let g = CsrGraph::from_arcs(2, &[(0, 1)]).unwrap();
        assert!(g.normalize_adjacency(0.5).is_err());
        assert!(clique2().normalize_adjacency(1.5).is_err());
    }

    #[test]
    fn laplacian_of_clique() {
        let l = clique2().add_self_loops().normalize_adjacency(0.5).unwrap().laplacian();
        let d = l.to_dense();
        assert_eq!(d.data(), &[0.5, -0.5, -0.5, 0.5]);
    }

    #[test]
    fn laplacian_of_identity_is_zero() {
        let l = CsrGraph::identity(4).laplacian();
        assert!(l.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_diagonal_of_path() {
        let l = path3().add_self_loops().normalize_adjacency(0.5).unwrap().laplacian();
        assert_abs_diff_eq!(l.get(0, 0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(l.get(1, 1), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l.get(2, 2), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn laplacian_inserts_missing_diagonal() {
        let l = clique2().laplacian();
        assert_eq!(l.to_dense().data(), &[1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn spmm_identity_and_clique() {
        let p = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(spmm(&CsrGraph::identity(2), &p).unwrap(), p);
        let t = clique2().add_self_loops().normalize_adjacency(0.5).unwrap();
        let out = spmm(&t, &DenseMatrix::column(&[1.0, 0.0]).unwrap()).unwrap();
        assert_eq!(out.data(), &[0.5, 0.5]);
    }

    #[test]
    fn spmm_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = erdos_renyi(8, 0.4, 8).add_self_loops().normalize_adjacency(0.5).unwrap();
        let p = DenseMatrix::random_uniform(8, 3, -1.0, 1.0, &mut rng);
        let fast = spmm(&t, &p).unwrap();
        let oracle = dense_matmul(&t.to_dense(), &p).unwrap();
        assert!(fast.rel_error(&oracle).unwrap() <= 1e-12);
    }

    #[test]
    fn spmm_dimension_mismatch() {
        assert!(spmm(&CsrGraph::identity(3), &DenseMatrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn sub_and_transpose() {
        let t = path3().add_self_loops().normalize_adjacency(0.0).unwrap();
        let tt = t.transpose();
        for u in 0..3 {
            for v in 0..3 {
                assert_eq!(t.get(u, v), tt.get(v, u));
            }
        }
        let z = t.sub(&t).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
    }
}
