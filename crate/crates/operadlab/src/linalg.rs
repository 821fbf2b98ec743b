//! Sparse exact linear algebra over the session field.
//!
//! Matrices are sparse row lists, immutable once built. Rank, kernel,
//! image, and solving all go through one sparse Gaussian elimination.
//! Pivot rows are renormalized after every step (unit leading entry,
//! rationals kept reduced by BigRational), and short rows with small
//! entries are eliminated first to keep fraction growth down.

use std::fmt;

use crate::field::{FieldSpec, Scalar};

/// Sparse vector: strictly increasing column indices, no explicit zeros.
pub type SparseVec = Vec<(usize, Scalar)>;

pub fn vec_add(a: &SparseVec, b: &SparseVec) -> SparseVec {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j >= b.len() || (i < a.len() && a[i].0 < b[j].0) {
            out.push(a[i].clone());
            i += 1;
        } else if i >= a.len() || b[j].0 < a[i].0 {
            out.push(b[j].clone());
            j += 1;
        } else {
            let s = &a[i].1 + &b[j].1;
            if !s.is_zero() {
                out.push((a[i].0, s));
            }
            i += 1;
            j += 1;
        }
    }
    out
}

pub fn vec_scale(a: &SparseVec, c: &Scalar) -> SparseVec {
    if c.is_zero() {
        return Vec::new();
    }
    a.iter().map(|(j, v)| (*j, c * v)).collect()
}

pub fn vec_neg(a: &SparseVec) -> SparseVec {
    a.iter().map(|(j, v)| (*j, -v)).collect()
}

/// An immutable sparse matrix over a fixed field.
#[derive(Clone, PartialEq, Eq)]
pub struct SparseMat {
    rows: usize,
    cols: usize,
    field: FieldSpec,
    data: Vec<SparseVec>,
}

impl fmt::Debug for SparseMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SparseMat {}x{} over {}", self.rows, self.cols, self.field)?;
        for (i, r) in self.data.iter().enumerate() {
            if !r.is_empty() {
                let row = r
                    .iter()
                    .map(|(j, v)| format!("[{j}]={v}"))
                    .collect::<Vec<_>>()
                    .join(" ");
                writeln!(f, "  r{i}: {row}")?;
            }
        }
        Ok(())
    }
}

impl SparseMat {
    pub fn zero(rows: usize, cols: usize, field: FieldSpec) -> Self {
        SparseMat {
            rows,
            cols,
            field,
            data: vec![Vec::new(); rows],
        }
    }

    pub fn identity(n: usize, field: FieldSpec) -> Self {
        let data = (0..n).map(|i| vec![(i, field.one())]).collect();
        SparseMat {
            rows: n,
            cols: n,
            field,
            data,
        }
    }

    pub fn from_triplets(
        rows: usize,
        cols: usize,
        field: FieldSpec,
        triplets: impl IntoIterator<Item = (usize, usize, Scalar)>,
    ) -> Self {
        let mut m = SparseMat::zero(rows, cols, field);
        for (i, j, v) in triplets {
            assert!(i < rows && j < cols, "triplet out of range");
            m.add_entry(i, j, v);
        }
        m
    }

    pub(crate) fn add_entry(&mut self, i: usize, j: usize, v: Scalar) {
        if v.is_zero() {
            return;
        }
        let row = &mut self.data[i];
        match row.binary_search_by_key(&j, |e| e.0) {
            Ok(k) => {
                let s = &row[k].1 + &v;
                if s.is_zero() {
                    row.remove(k);
                } else {
                    row[k].1 = s;
                }
            }
            Err(k) => row.insert(k, (j, v)),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn entry(&self, i: usize, j: usize) -> Scalar {
        match self.data[i].binary_search_by_key(&j, |e| e.0) {
            Ok(k) => self.data[i][k].1.clone(),
            Err(_) => self.field.zero(),
        }
    }

    pub fn row(&self, i: usize) -> &SparseVec {
        &self.data[i]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|r| r.is_empty())
    }

    pub fn nnz(&self) -> usize {
        self.data.iter().map(|r| r.len()).sum()
    }

    pub fn transpose(&self) -> SparseMat {
        let mut m = SparseMat::zero(self.cols, self.rows, self.field);
        for (i, row) in self.data.iter().enumerate() {
            for (j, v) in row {
                m.data[*j].push((i, v.clone()));
            }
        }
        m
    }

    pub fn scale(&self, c: &Scalar) -> SparseMat {
        let data = self.data.iter().map(|r| vec_scale(r, c)).collect();
        SparseMat {
            rows: self.rows,
            cols: self.cols,
            field: self.field,
            data,
        }
    }

    pub fn add(&self, other: &SparseMat) -> SparseMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| vec_add(a, b))
            .collect();
        SparseMat {
            rows: self.rows,
            cols: self.cols,
            field: self.field,
            data,
        }
    }

    pub fn sub(&self, other: &SparseMat) -> SparseMat {
        self.add(&other.scale(&-self.field.one()))
    }

    /// self * other (composition order: apply `other` first when matrices
    /// act on column vectors).
    pub fn mul(&self, other: &SparseMat) -> SparseMat {
        assert_eq!(self.cols, other.rows, "dimension mismatch in mul");
        let mut m = SparseMat::zero(self.rows, other.cols, self.field);
        for (i, row) in self.data.iter().enumerate() {
            let mut acc: SparseVec = Vec::new();
            for (k, v) in row {
                acc = vec_add(&acc, &vec_scale(&other.data[*k], v));
            }
            m.data[i] = acc;
        }
        m
    }

    /// Matrix applied to a (sparse) column vector.
    pub fn apply(&self, v: &SparseVec) -> SparseVec {
        let mut out: Vec<(usize, Scalar)> = Vec::new();
        for (i, row) in self.data.iter().enumerate() {
            let mut s = self.field.zero();
            let mut any = false;
            let mut vi = 0;
            for (j, a) in row {
                while vi < v.len() && v[vi].0 < *j {
                    vi += 1;
                }
                if vi < v.len() && v[vi].0 == *j {
                    s = &s + &(a * &v[vi].1);
                    any = true;
                }
            }
            if any && !s.is_zero() {
                out.push((i, s));
            }
        }
        out
    }

    /// Kronecker product, row-major block convention:
    /// (a ⊗ b)[(i1*b.rows+i2), (j1*b.cols+j2)] = a[i1,j1] * b[i2,j2].
    pub fn kronecker(&self, other: &SparseMat) -> SparseMat {
        let mut m = SparseMat::zero(self.rows * other.rows, self.cols * other.cols, self.field);
        for (i1, r1) in self.data.iter().enumerate() {
            for (j1, v1) in r1 {
                for (i2, r2) in other.data.iter().enumerate() {
                    let ti = i1 * other.rows + i2;
                    for (j2, v2) in r2 {
                        m.data[ti].push((j1 * other.cols + j2, v1 * v2));
                    }
                }
            }
        }
        for r in &mut m.data {
            r.sort_by_key(|e| e.0);
        }
        m
    }

    pub fn vstack(blocks: &[&SparseMat]) -> SparseMat {
        assert!(!blocks.is_empty());
        let cols = blocks[0].cols;
        let field = blocks[0].field;
        let mut data = Vec::new();
        for b in blocks {
            assert_eq!(b.cols, cols);
            data.extend(b.data.iter().cloned());
        }
        SparseMat {
            rows: data.len(),
            cols,
            field,
            data,
        }
    }

    pub fn hstack(blocks: &[&SparseMat]) -> SparseMat {
        assert!(!blocks.is_empty());
        let rows = blocks[0].rows;
        let field = blocks[0].field;
        let mut m = SparseMat::zero(rows, blocks.iter().map(|b| b.cols).sum(), field);
        let mut off = 0;
        for b in blocks {
            assert_eq!(b.rows, rows);
            for (i, row) in b.data.iter().enumerate() {
                for (j, v) in row {
                    m.data[i].push((off + j, v.clone()));
                }
            }
            off += b.cols;
        }
        m
    }

    pub fn rank(&self) -> usize {
        Eliminated::new(self).pivots.len()
    }

    /// Basis of the right null space, as sparse column vectors.
    pub fn kernel_basis(&self) -> Vec<SparseVec> {
        let e = Eliminated::new(self);
        e.kernel_basis()
    }

    /// Basis of the column space, as sparse column vectors of length `rows`.
    pub fn image_basis(&self) -> Vec<SparseVec> {
        let t = self.transpose();
        let e = Eliminated::new(&t);
        e.rref_rows()
    }

    /// Solve self * x = b; None when inconsistent.
    pub fn solve(&self, b: &SparseVec) -> Option<SparseVec> {
        Solver::new(self).solve(b)
    }
}

/// Row echelon data for one matrix. Rows are rescaled after every
/// elimination step; pivots prefer short rows with small entries.
struct Eliminated {
    field: FieldSpec,
    cols: usize,
    /// echelon rows, each normalized with leading coefficient 1
    rows: Vec<SparseVec>,
    /// pivot column of each echelon row, strictly increasing after sort
    pivots: Vec<usize>,
}

fn normalize_row(row: &SparseVec) -> SparseVec {
    if row.is_empty() {
        return Vec::new();
    }
    let inv = row[0].1.inv().expect("nonzero lead");
    vec_scale(row, &inv)
}

impl Eliminated {
    fn new(mat: &SparseMat) -> Self {
        let mut e = Eliminated {
            field: mat.field,
            cols: mat.cols,
            rows: Vec::new(),
            pivots: Vec::new(),
        };
        // insert shorter rows first: cheap entries make better pivots
        let mut order: Vec<usize> = (0..mat.rows).collect();
        order.sort_by_key(|&i| {
            (
                mat.data[i].len(),
                mat.data[i].iter().map(|(_, v)| v.pivot_weight()).sum::<usize>(),
            )
        });
        for i in order {
            e.insert(mat.data[i].clone());
        }
        e
    }

    /// Reduce `row` against the echelon rows; if a remainder survives,
    /// record it as a new pivot row.
    fn reduce(&self, mut row: SparseVec) -> SparseVec {
        loop {
            let Some((lead, c)) = row.first().cloned() else {
                return row;
            };
            match self.pivots.iter().position(|&p| p == lead) {
                Some(k) => {
                    row = vec_add(&row, &vec_scale(&self.rows[k], &-c));
                }
                None => return row,
            }
        }
    }

    fn insert(&mut self, row: SparseVec) -> bool {
        let rem = self.reduce(row);
        if rem.is_empty() {
            return false;
        }
        let rem = normalize_row(&rem);
        self.pivots.push(rem[0].0);
        self.rows.push(rem);
        true
    }

    /// Fully back-substituted rows (reduced echelon form), sorted by pivot.
    fn rref_rows(&self) -> Vec<SparseVec> {
        let mut idx: Vec<usize> = (0..self.rows.len()).collect();
        idx.sort_by_key(|&k| self.pivots[k]);
        let mut out: Vec<SparseVec> = Vec::with_capacity(idx.len());
        // back-substitute from the last pivot upwards
        for &k in idx.iter().rev() {
            let mut row = self.rows[k].clone();
            let mut changed = true;
            while changed {
                changed = false;
                for done in &out {
                    let p = done[0].0;
                    if let Ok(pos) = row.binary_search_by_key(&p, |e| e.0) {
                        if pos > 0 {
                            let c = row[pos].1.clone();
                            row = vec_add(&row, &vec_scale(done, &-c));
                            changed = true;
                        }
                    }
                }
            }
            out.push(row);
        }
        out.reverse();
        out
    }

    fn kernel_basis(&self) -> Vec<SparseVec> {
        let rref = self.rref_rows();
        let mut pivots: Vec<usize> = rref.iter().map(|r| r[0].0).collect();
        pivots.sort_unstable();
        let mut basis = Vec::new();
        for j in 0..self.cols {
            if pivots.binary_search(&j).is_ok() {
                continue;
            }
            let mut v: SparseVec = vec![(j, self.field.one())];
            for r in &rref {
                if let Ok(pos) = r.binary_search_by_key(&j, |e| e.0) {
                    let c = -&r[pos].1;
                    v = vec_add(&v, &[(r[0].0, c)].to_vec());
                }
            }
            v.sort_by_key(|e| e.0);
            basis.push(v);
        }
        basis
    }
}

/// Repeated solving against a fixed matrix.
pub struct Solver {
    field: FieldSpec,
    /// echelon rows of [A^T | I] style bookkeeping: row = reduced A-column,
    /// tail = the combination of original columns that produced it
    rows: Vec<(SparseVec, SparseVec)>,
    ncols: usize,
}

impl Solver {
    pub fn new(mat: &SparseMat) -> Self {
        let mut s = Solver {
            field: mat.field,
            rows: Vec::new(),
            ncols: mat.cols,
        };
        let t = mat.transpose();
        for (j, col) in t.data.iter().enumerate() {
            s.insert(col.clone(), vec![(j, mat.field.one())]);
        }
        s
    }

    fn insert(&mut self, col: SparseVec, combo: SparseVec) {
        let (rem, rc) = self.reduce(col, combo);
        if !rem.is_empty() {
            let inv = rem[0].1.inv().expect("nonzero lead");
            self.rows.push((vec_scale(&rem, &inv), vec_scale(&rc, &inv)));
        }
    }

    fn reduce(&self, mut col: SparseVec, mut combo: SparseVec) -> (SparseVec, SparseVec) {
        loop {
            let Some((lead, c)) = col.first().cloned() else {
                return (col, combo);
            };
            match self.rows.iter().position(|(r, _)| r[0].0 == lead) {
                Some(k) => {
                    col = vec_add(&col, &vec_scale(&self.rows[k].0, &-c.clone()));
                    combo = vec_add(&combo, &vec_scale(&self.rows[k].1, &-c));
                }
                None => return (col, combo),
            }
        }
    }

    /// A particular x with A x = b, or None.
    pub fn solve(&self, b: &SparseVec) -> Option<SparseVec> {
        let zero_combo: SparseVec = Vec::new();
        let (rem, combo) = self.reduce(b.clone(), zero_combo);
        if rem.is_empty() {
            let mut x = vec_neg(&combo);
            x.sort_by_key(|e| e.0);
            let _ = self.ncols;
            let _ = self.field;
            Some(x)
        } else {
            None
        }
    }
}

/// Incremental span of sparse vectors; membership testing and dimension.
pub struct Span {
    elim: Eliminated,
    dim: usize,
}

impl Span {
    pub fn new(ambient_cols: usize, field: FieldSpec) -> Self {
        Span {
            elim: Eliminated {
                field,
                cols: ambient_cols,
                rows: Vec::new(),
                pivots: Vec::new(),
            },
            dim: 0,
        }
    }

    /// Insert a vector; true when it enlarged the span.
    pub fn insert(&mut self, v: SparseVec) -> bool {
        let grew = self.elim.insert(v);
        if grew {
            self.dim += 1;
        }
        grew
    }

    pub fn contains(&self, v: &SparseVec) -> bool {
        self.elim.reduce(v.clone()).is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Project v to the canonical complement: reduce by the echelon rows.
    pub fn reduce(&self, v: &SparseVec) -> SparseVec {
        self.elim.reduce(v.clone())
    }

    /// Eliminate every pivot coordinate of v, not just leading ones.
    pub fn reduce_full(&self, v: &SparseVec) -> SparseVec {
        let mut out = v.clone();
        for row in self.elim.rref_rows() {
            let p = row[0].0;
            if let Ok(k) = out.binary_search_by_key(&p, |e| e.0) {
                let c = out[k].1.clone();
                out = vec_add(&out, &vec_scale(&row, &-c));
            }
        }
        out
    }

    /// Pivot columns in increasing order.
    pub fn pivots(&self) -> Vec<usize> {
        let mut p: Vec<usize> = self.elim.pivots.clone();
        p.sort_unstable();
        p
    }

    pub fn basis(&self) -> Vec<SparseVec> {
        self.elim.rref_rows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64) -> Scalar {
        FieldSpec::Rationals.from_i64(n)
    }

    fn mat(rows: usize, cols: usize, entries: &[(usize, usize, i64)]) -> SparseMat {
        SparseMat::from_triplets(
            rows,
            cols,
            FieldSpec::Rationals,
            entries.iter().map(|&(i, j, v)| (i, j, q(v))),
        )
    }

    #[test]
    fn rank_and_kernel() {
        // rows: (1 2 3; 2 4 6; 0 1 1) has rank 2, kernel dim 1
        let m = mat(
            3,
            3,
            &[
                (0, 0, 1),
                (0, 1, 2),
                (0, 2, 3),
                (1, 0, 2),
                (1, 1, 4),
                (1, 2, 6),
                (2, 1, 1),
                (2, 2, 1),
            ],
        );
        assert_eq!(m.rank(), 2);
        let ker = m.kernel_basis();
        assert_eq!(ker.len(), 1);
        for v in &ker {
            assert!(m.apply(v).is_empty());
        }
    }

    #[test]
    fn solve_consistent_and_inconsistent() {
        let m = mat(2, 2, &[(0, 0, 1), (0, 1, 1), (1, 0, 2), (1, 1, 2)]);
        let b = vec![(0, q(3)), (1, q(6))];
        let x = m.solve(&b).unwrap();
        assert_eq!(m.apply(&x), b);
        let b_bad = vec![(0, q(3)), (1, q(5))];
        assert!(m.solve(&b_bad).is_none());
    }

    #[test]
    fn kernel_over_prime_field() {
        let f5 = FieldSpec::prime(5).unwrap();
        // (1 2; 3 6) over F5: second row = 3 * first, rank 1
        let m = SparseMat::from_triplets(
            2,
            2,
            f5,
            [
                (0, 0, f5.from_i64(1)),
                (0, 1, f5.from_i64(2)),
                (1, 0, f5.from_i64(3)),
                (1, 1, f5.from_i64(6)),
            ],
        );
        assert_eq!(m.rank(), 1);
        assert_eq!(m.kernel_basis().len(), 1);
    }

    #[test]
    fn image_basis_spans_columns() {
        let m = mat(3, 4, &[(0, 0, 1), (1, 1, 1), (2, 0, 1), (2, 1, 1), (0, 3, 2)]);
        let img = m.image_basis();
        assert_eq!(img.len(), m.rank());
    }

    #[test]
    fn kronecker_shape_and_entries() {
        let a = mat(2, 2, &[(0, 0, 1), (1, 1, 2)]);
        let b = mat(2, 2, &[(0, 1, 3), (1, 0, 1)]);
        let k = a.kronecker(&b);
        assert_eq!((k.rows(), k.cols()), (4, 4));
        assert_eq!(k.entry(0, 1), q(3));
        assert_eq!(k.entry(3, 2), q(2));
    }

    #[test]
    fn span_membership() {
        let mut s = Span::new(3, FieldSpec::Rationals);
        assert!(s.insert(vec![(0, q(1)), (1, q(1))]));
        assert!(s.insert(vec![(1, q(1)), (2, q(1))]));
        assert!(!s.insert(vec![(0, q(1)), (2, q(-1))]));
        assert_eq!(s.dim(), 2);
        assert!(s.contains(&vec![(0, q(2)), (1, q(1)), (2, q(-1))]));
        assert!(!s.contains(&vec![(0, q(1))]));
    }

    #[test]
    fn fraction_growth_stays_tame() {
        // Hilbert-like 6x6 matrix has full rank; exact arithmetic must agree
        let field = FieldSpec::Rationals;
        let mut trips = Vec::new();
        for i in 0..6usize {
            for j in 0..6usize {
                let s = field
                    .parse_scalar(&format!("1/{}", i + j + 1))
                    .unwrap();
                trips.push((i, j, s));
            }
        }
        let m = SparseMat::from_triplets(6, 6, field, trips);
        assert_eq!(m.rank(), 6);
        assert!(m.kernel_basis().is_empty());
    }
}
