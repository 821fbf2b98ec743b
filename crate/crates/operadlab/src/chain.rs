//! Chain complexes, chain maps, homology, tensor and Hom complexes.
//!
//! Conventions, fixed once for the whole crate:
//!   - homological (lower) grading, differential of degree -1;
//!   - the shift [n] raises degrees by n and rescales d by (-1)^n;
//!   - Koszul signs: d(x⊗y) = dx⊗y + (-1)^{|x|} x⊗dy, and on Hom
//!     complexes ∂f = d∘f - (-1)^{|f|} f∘d;
//!   - a degree-r chain map satisfies d∘f = (-1)^r f∘d.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::field::{FieldSpec, Scalar};
use crate::label::Label;
use crate::linalg::{vec_add, vec_scale, SparseMat, SparseVec};

pub type Window = (i64, i64);

/// A finitely supported Z-graded space with a degree -1 differential.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainComplex {
    field: FieldSpec,
    basis: BTreeMap<i64, Vec<Label>>,
    /// d_n : degree n -> degree n-1; keyed by n, present only when both
    /// ends are nonzero and the matrix has entries
    diff: BTreeMap<i64, SparseMat>,
}

impl ChainComplex {
    pub fn new(
        field: FieldSpec,
        basis: BTreeMap<i64, Vec<Label>>,
        diff: BTreeMap<i64, SparseMat>,
    ) -> Result<Self> {
        let basis: BTreeMap<i64, Vec<Label>> =
            basis.into_iter().filter(|(_, b)| !b.is_empty()).collect();
        let dim = |n: i64| basis.get(&n).map_or(0, |b| b.len());
        for (n, d) in &diff {
            if d.rows() != dim(n - 1) || d.cols() != dim(*n) {
                return Err(Error::Config(format!(
                    "differential at degree {n} has shape {}x{}, expected {}x{}",
                    d.rows(),
                    d.cols(),
                    dim(n - 1),
                    dim(*n)
                )));
            }
            if d.field() != field {
                return Err(Error::FieldMismatch(field, d.field()));
            }
        }
        let c = ChainComplex { field, basis, diff };
        c.assert_d_squared()?;
        Ok(c)
    }

    fn assert_d_squared(&self) -> Result<()> {
        for n in self.degrees() {
            let d_n = self.diff_at(n);
            let d_n1 = self.diff_at(n + 1);
            if !d_n.mul(&d_n1).is_zero() {
                return Err(Error::Config(format!("d^2 != 0 at degree {}", n + 1)));
            }
        }
        Ok(())
    }

    pub fn zero(field: FieldSpec) -> Self {
        ChainComplex {
            field,
            basis: BTreeMap::new(),
            diff: BTreeMap::new(),
        }
    }

    /// The monoidal unit: k in degree 0.
    pub fn unit(field: FieldSpec) -> Self {
        Self::concentrated(field, 0, vec![Label::atom("1")])
    }

    /// A complex concentrated in one degree with zero differential.
    pub fn concentrated(field: FieldSpec, degree: i64, labels: Vec<Label>) -> Self {
        let mut basis = BTreeMap::new();
        if !labels.is_empty() {
            basis.insert(degree, labels);
        }
        ChainComplex {
            field,
            basis,
            diff: BTreeMap::new(),
        }
    }

    /// Zero-differential complex from an arbitrary graded basis.
    pub fn graded(field: FieldSpec, basis: BTreeMap<i64, Vec<Label>>) -> Self {
        let basis = basis.into_iter().filter(|(_, b)| !b.is_empty()).collect();
        ChainComplex {
            field,
            basis,
            diff: BTreeMap::new(),
        }
    }

    /// The pointed n-sphere object k ⊕ k[n], zero differential.
    pub fn sphere(field: FieldSpec, n: i64) -> Result<Self> {
        if n < 0 {
            return Err(Error::Config(format!("sphere degree {n} is negative")));
        }
        let mut basis: BTreeMap<i64, Vec<Label>> = BTreeMap::new();
        basis.entry(0).or_default().push(Label::atom("b"));
        basis.entry(n).or_default().push(Label::atom("t"));
        Ok(ChainComplex {
            field,
            basis,
            diff: BTreeMap::new(),
        })
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn dim(&self, n: i64) -> usize {
        self.basis.get(&n).map_or(0, |b| b.len())
    }

    pub fn total_dim(&self) -> usize {
        self.basis.values().map(|b| b.len()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn degrees(&self) -> Vec<i64> {
        self.basis.keys().copied().collect()
    }

    pub fn support(&self) -> Option<Window> {
        let lo = *self.basis.keys().next()?;
        let hi = *self.basis.keys().last()?;
        Some((lo, hi))
    }

    pub fn labels(&self, n: i64) -> &[Label] {
        self.basis.get(&n).map_or(&[], |b| b.as_slice())
    }

    /// d_n as a matrix (zero matrix when absent).
    pub fn diff_at(&self, n: i64) -> SparseMat {
        match self.diff.get(&n) {
            Some(d) => d.clone(),
            None => SparseMat::zero(self.dim(n - 1), self.dim(n), self.field),
        }
    }

    pub fn shift(&self, n: i64) -> ChainComplex {
        let basis = self.basis.iter().map(|(d, b)| (d + n, b.clone())).collect();
        let sign = if n.rem_euclid(2) == 0 { 1 } else { -1 };
        let diff = self
            .diff
            .iter()
            .map(|(d, m)| {
                let m = if sign == 1 {
                    m.clone()
                } else {
                    m.scale(&self.field.from_i64(-1))
                };
                (d + n, m)
            })
            .collect();
        ChainComplex {
            field: self.field,
            basis,
            diff,
        }
    }

    pub fn direct_sum(parts: &[&ChainComplex], field: FieldSpec) -> ChainComplex {
        let mut basis: BTreeMap<i64, Vec<Label>> = BTreeMap::new();
        let mut degrees: Vec<i64> = Vec::new();
        for p in parts {
            assert_eq!(p.field(), field, "field mismatch in direct sum");
            degrees.extend(p.degrees());
        }
        degrees.sort_unstable();
        degrees.dedup();
        for &n in &degrees {
            let mut labs = Vec::new();
            for (i, p) in parts.iter().enumerate() {
                for l in p.labels(n) {
                    labs.push(Label::inj(i, l.clone()));
                }
            }
            if !labs.is_empty() {
                basis.insert(n, labs);
            }
        }
        let mut diff = BTreeMap::new();
        for &n in &degrees {
            let blocks: Vec<SparseMat> = parts.iter().map(|p| p.diff_at(n)).collect();
            let rows: usize = blocks.iter().map(|b| b.rows()).sum();
            let cols: usize = blocks.iter().map(|b| b.cols()).sum();
            if rows == 0 || cols == 0 {
                continue;
            }
            let mut m = SparseMat::zero(rows, cols, field);
            let (mut ro, mut co) = (0, 0);
            for b in &blocks {
                for i in 0..b.rows() {
                    for (j, v) in b.row(i) {
                        m.add_entry(ro + i, co + j, v.clone());
                    }
                }
                ro += b.rows();
                co += b.cols();
            }
            if !m.is_zero() {
                diff.insert(n, m);
            }
        }
        ChainComplex { field, basis, diff }
    }

    /// Offset of summand `part` inside the direct sum at degree n.
    pub fn sum_offset(parts: &[&ChainComplex], part: usize, n: i64) -> usize {
        parts[..part].iter().map(|p| p.dim(n)).sum()
    }

    /// Betti numbers over the window: dim ker d_n - rank d_{n+1}.
    pub fn homology(&self, window: Window) -> Result<BettiTable> {
        let (lo, hi) = window;
        if lo > hi {
            return Err(Error::Config("empty degree window".into()));
        }
        if let Some((slo, shi)) = self.support() {
            if lo < slo - 1 || hi > shi + 1 {
                return Err(Error::InsufficientSupport {
                    window: format!("[{lo},{hi}]"),
                    support: format!("[{slo},{shi}]"),
                });
            }
        }
        let mut rows = Vec::new();
        for n in lo..=hi {
            let dim = self.dim(n);
            if dim == 0 {
                continue;
            }
            let rk_in = self.diff_at(n + 1).rank();
            let rk_out = self.diff_at(n).rank();
            let betti = dim - rk_in - rk_out;
            if betti > 0 {
                rows.push((n, betti));
            }
        }
        Ok(BettiTable { rows })
    }

    pub fn homology_full(&self) -> BettiTable {
        match self.support() {
            None => BettiTable { rows: Vec::new() },
            Some(w) => self.homology(w).expect("window within support"),
        }
    }
}

/// Rows of (degree, dimension); zero rows are omitted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BettiTable {
    pub rows: Vec<(i64, usize)>,
}

impl BettiTable {
    pub fn dim_at(&self, n: i64) -> usize {
        self.rows
            .iter()
            .find(|(d, _)| *d == n)
            .map_or(0, |(_, k)| *k)
    }

    pub fn total(&self) -> usize {
        self.rows.iter().map(|(_, k)| k).sum()
    }

    pub fn restrict(&self, window: Window) -> BettiTable {
        BettiTable {
            rows: self
                .rows
                .iter()
                .filter(|(d, _)| *d >= window.0 && *d <= window.1)
                .cloned()
                .collect(),
        }
    }
}

impl fmt::Display for BettiTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (d, k)) in self.rows.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{d}: {k}")?;
        }
        write!(f, "}}")
    }
}

/// A degree-r graded map satisfying d∘f = (-1)^r f∘d.
#[derive(Debug, Clone)]
pub struct ChainMap {
    source: ChainComplex,
    target: ChainComplex,
    degree: i64,
    /// f_n : source degree n -> target degree n+r
    comps: BTreeMap<i64, SparseMat>,
}

impl ChainMap {
    pub fn new(
        source: ChainComplex,
        target: ChainComplex,
        degree: i64,
        comps: BTreeMap<i64, SparseMat>,
    ) -> Result<Self> {
        let comps: BTreeMap<i64, SparseMat> =
            comps.into_iter().filter(|(_, m)| !m.is_zero()).collect();
        for (n, m) in &comps {
            if m.cols() != source.dim(*n) || m.rows() != target.dim(n + degree) {
                return Err(Error::Config(format!(
                    "chain map component at degree {n} has shape {}x{}, expected {}x{}",
                    m.rows(),
                    m.cols(),
                    target.dim(n + degree),
                    source.dim(*n)
                )));
            }
        }
        let f = ChainMap {
            source,
            target,
            degree,
            comps,
        };
        f.check_chain_condition()?;
        Ok(f)
    }

    fn check_chain_condition(&self) -> Result<()> {
        let sign = self.source.field.from_i64(if self.degree.rem_euclid(2) == 0 {
            1
        } else {
            -1
        });
        for n in self.source.degrees() {
            let lhs = self.target.diff_at(n + self.degree).mul(&self.component(n));
            let rhs = self.component(n - 1).mul(&self.source.diff_at(n)).scale(&sign);
            if lhs != rhs {
                return Err(Error::Config(format!(
                    "chain condition d∘f = (-1)^{} f∘d fails at degree {n}",
                    self.degree
                )));
            }
        }
        Ok(())
    }

    pub fn zero_map(source: ChainComplex, target: ChainComplex, degree: i64) -> ChainMap {
        ChainMap {
            source,
            target,
            degree,
            comps: BTreeMap::new(),
        }
    }

    pub fn identity(c: &ChainComplex) -> ChainMap {
        let comps = c
            .degrees()
            .into_iter()
            .map(|n| (n, SparseMat::identity(c.dim(n), c.field())))
            .collect();
        ChainMap {
            source: c.clone(),
            target: c.clone(),
            degree: 0,
            comps,
        }
    }

    pub fn source(&self) -> &ChainComplex {
        &self.source
    }

    pub fn target(&self) -> &ChainComplex {
        &self.target
    }

    pub fn degree(&self) -> i64 {
        self.degree
    }

    pub fn component(&self, n: i64) -> SparseMat {
        match self.comps.get(&n) {
            Some(m) => m.clone(),
            None => SparseMat::zero(
                self.target.dim(n + self.degree),
                self.source.dim(n),
                self.source.field,
            ),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.comps.is_empty()
    }

    /// self ∘ other.
    pub fn compose(&self, other: &ChainMap) -> ChainMap {
        assert_eq!(other.target.basis, self.source.basis, "compose mismatch");
        let mut comps = BTreeMap::new();
        for n in other.source.degrees() {
            let m = self.component(n + other.degree).mul(&other.component(n));
            if !m.is_zero() {
                comps.insert(n, m);
            }
        }
        ChainMap {
            source: other.source.clone(),
            target: self.target.clone(),
            degree: self.degree + other.degree,
            comps,
        }
    }

    pub fn add(&self, other: &ChainMap) -> ChainMap {
        assert_eq!(self.degree, other.degree);
        let mut comps = BTreeMap::new();
        let mut degs = self.source.degrees();
        degs.extend(other.source.degrees());
        degs.sort_unstable();
        degs.dedup();
        for n in degs {
            let m = self.component(n).add(&other.component(n));
            if !m.is_zero() {
                comps.insert(n, m);
            }
        }
        ChainMap {
            source: self.source.clone(),
            target: self.target.clone(),
            degree: self.degree,
            comps,
        }
    }

    pub fn scale(&self, c: &Scalar) -> ChainMap {
        let comps = self
            .comps
            .iter()
            .map(|(n, m)| (*n, m.scale(c)))
            .filter(|(_, m)| !m.is_zero())
            .collect();
        ChainMap {
            source: self.source.clone(),
            target: self.target.clone(),
            degree: self.degree,
            comps,
        }
    }

    pub fn equal(&self, other: &ChainMap) -> bool {
        if self.degree != other.degree {
            return false;
        }
        let mut degs = self.source.degrees();
        degs.extend(other.source.degrees());
        degs.sort_unstable();
        degs.dedup();
        degs.iter().all(|&n| self.component(n) == other.component(n))
    }

    /// Reindex source and target along shifts: f[n] : C[n] -> D[n].
    /// For a degree-0 map the components are reused verbatim.
    pub fn shift(&self, n: i64) -> ChainMap {
        assert_eq!(self.degree, 0, "shift only implemented for degree-0 maps");
        ChainMap {
            source: self.source.shift(n),
            target: self.target.shift(n),
            degree: 0,
            comps: self.comps.iter().map(|(d, m)| (d + n, m.clone())).collect(),
        }
    }

    /// Mapping cone: cone(f)_n = target_n ⊕ source_{n-1},
    /// d(y, x) = (dy + f(x), -dx). Requires degree 0.
    pub fn cone(&self) -> ChainComplex {
        assert_eq!(self.degree, 0, "cone of a degree-0 map");
        let field = self.source.field;
        let shifted = self.source.shift(1);
        let mut degrees: Vec<i64> = self.target.degrees();
        degrees.extend(shifted.degrees());
        degrees.sort_unstable();
        degrees.dedup();
        let mut basis = BTreeMap::new();
        for &n in &degrees {
            let mut labs: Vec<Label> = self
                .target
                .labels(n)
                .iter()
                .map(|l| Label::inj(0, l.clone()))
                .collect();
            labs.extend(shifted.labels(n).iter().map(|l| Label::inj(1, l.clone())));
            basis.insert(n, labs);
        }
        let mut diff = BTreeMap::new();
        for &n in &degrees {
            let dt = self.target.diff_at(n);
            let ds = self.source.diff_at(n - 1).scale(&field.from_i64(-1));
            let f = self.component(n - 1);
            let rows = self.target.dim(n - 1) + self.source.dim(n - 2);
            let cols = self.target.dim(n) + self.source.dim(n - 1);
            if rows == 0 || cols == 0 {
                continue;
            }
            let mut m = SparseMat::zero(rows, cols, field);
            let col_off = self.target.dim(n);
            let row_off = self.target.dim(n - 1);
            for i in 0..dt.rows() {
                for (j, v) in dt.row(i) {
                    m.add_entry(i, *j, v.clone());
                }
            }
            for i in 0..f.rows() {
                for (j, v) in f.row(i) {
                    m.add_entry(i, col_off + j, v.clone());
                }
            }
            for i in 0..ds.rows() {
                for (j, v) in ds.row(i) {
                    m.add_entry(row_off + i, col_off + j, v.clone());
                }
            }
            if !m.is_zero() {
                diff.insert(n, m);
            }
        }
        ChainComplex { field, basis, diff }
    }

    /// Homotopy fiber: cone(f)[-1].
    pub fn fiber(&self) -> ChainComplex {
        self.cone().shift(-1)
    }
}

/// Incremental construction of a chain map from basis images.
pub struct MapBuilder {
    source: ChainComplex,
    target: ChainComplex,
    degree: i64,
    comps: BTreeMap<i64, SparseMat>,
}

impl MapBuilder {
    pub fn new(source: ChainComplex, target: ChainComplex, degree: i64) -> Self {
        let comps = source
            .degrees()
            .into_iter()
            .filter(|&n| target.dim(n + degree) > 0)
            .map(|n| {
                (
                    n,
                    SparseMat::zero(target.dim(n + degree), source.dim(n), source.field()),
                )
            })
            .collect();
        MapBuilder {
            source,
            target,
            degree,
            comps,
        }
    }

    pub fn add(&mut self, src_deg: i64, src_idx: usize, tgt_idx: usize, v: Scalar) {
        if v.is_zero() {
            return;
        }
        let m = self
            .comps
            .get_mut(&src_deg)
            .expect("degree outside target support");
        m.add_entry(tgt_idx, src_idx, v);
    }

    pub fn add_column(&mut self, src_deg: i64, src_idx: usize, image: &SparseVec) {
        for (i, v) in image {
            self.add(src_deg, src_idx, *i, v.clone());
        }
    }

    pub fn build(self) -> Result<ChainMap> {
        ChainMap::new(self.source, self.target, self.degree, self.comps)
    }
}

/// Tensor product of an ordered list of complexes, with index bookkeeping.
///
/// Basis vectors at total degree n are tuples, enumerated factor-by-factor
/// with degrees ascending; labels are Seq of the factor labels.
#[derive(Debug, Clone)]
pub struct TensorSpace {
    pub complex: ChainComplex,
    factors: Vec<ChainComplex>,
    /// per total degree: list of (degrees, indices) tuples in basis order
    index: BTreeMap<i64, Vec<(Vec<i64>, Vec<usize>)>>,
    /// reverse: (degrees, indices) -> position
    lookup: BTreeMap<(Vec<i64>, Vec<usize>), usize>,
}

impl TensorSpace {
    pub fn new(factors: &[&ChainComplex], field: FieldSpec) -> TensorSpace {
        for f in factors {
            assert_eq!(f.field(), field, "field mismatch in tensor");
        }
        let mut tuples: Vec<(i64, Vec<i64>, Vec<usize>)> = vec![(0, Vec::new(), Vec::new())];
        for f in factors {
            let mut next = Vec::new();
            for (total, degs, idxs) in &tuples {
                for d in f.degrees() {
                    for i in 0..f.dim(d) {
                        let mut degs2 = degs.clone();
                        degs2.push(d);
                        let mut idxs2 = idxs.clone();
                        idxs2.push(i);
                        next.push((total + d, degs2, idxs2));
                    }
                }
            }
            tuples = next;
        }
        let mut index: BTreeMap<i64, Vec<(Vec<i64>, Vec<usize>)>> = BTreeMap::new();
        for (total, degs, idxs) in tuples {
            index.entry(total).or_default().push((degs, idxs));
        }
        for tup in index.values_mut() {
            tup.sort();
        }
        let mut lookup = BTreeMap::new();
        let mut basis: BTreeMap<i64, Vec<Label>> = BTreeMap::new();
        for (total, tups) in &index {
            let mut labs = Vec::new();
            for (pos, (degs, idxs)) in tups.iter().enumerate() {
                lookup.insert((degs.clone(), idxs.clone()), pos);
                let parts: Vec<Label> = factors
                    .iter()
                    .zip(degs.iter().zip(idxs.iter()))
                    .map(|(f, (d, i))| f.labels(*d)[*i].clone())
                    .collect();
                labs.push(Label::Seq(parts));
            }
            basis.insert(*total, labs);
        }
        // Koszul differential
        let mut diff: BTreeMap<i64, SparseMat> = BTreeMap::new();
        for (total, tups) in &index {
            let rows = index.get(&(total - 1)).map_or(0, |t| t.len());
            if rows == 0 {
                continue;
            }
            let mut m = SparseMat::zero(rows, tups.len(), field);
            for (col, (degs, idxs)) in tups.iter().enumerate() {
                let mut sign = field.one();
                for (k, f) in factors.iter().enumerate() {
                    let d = f.diff_at(degs[k]);
                    for (ti, v) in d.transpose().row(idxs[k]) {
                        let mut degs2 = degs.clone();
                        degs2[k] -= 1;
                        let mut idxs2 = idxs.clone();
                        idxs2[k] = *ti;
                        let row = lookup[&(degs2, idxs2)];
                        m.add_entry(row, col, &sign * v);
                    }
                    if degs[k].rem_euclid(2) == 1 {
                        sign = -sign;
                    }
                }
            }
            if !m.is_zero() {
                diff.insert(*total, m);
            }
        }
        let complex = ChainComplex { field, basis, diff };
        complex.assert_d_squared().expect("Koszul differential squares to zero");
        TensorSpace {
            complex,
            factors: factors.iter().map(|f| (*f).clone()).collect(),
            index,
            lookup,
        }
    }

    pub fn rank(&self) -> usize {
        self.factors.len()
    }

    pub fn factor(&self, k: usize) -> &ChainComplex {
        &self.factors[k]
    }

    /// Basis position of a pure tensor of basis vectors.
    pub fn position(&self, degs: &[i64], idxs: &[usize]) -> (i64, usize) {
        let total: i64 = degs.iter().sum();
        let pos = self.lookup[&(degs.to_vec(), idxs.to_vec())];
        (total, pos)
    }

    pub fn tuples(&self, total: i64) -> &[(Vec<i64>, Vec<usize>)] {
        self.index.get(&total).map_or(&[], |t| t.as_slice())
    }

    /// Sparse vector of one pure tensor with given scalar coefficient.
    pub fn pure(&self, degs: &[i64], idxs: &[usize], c: Scalar) -> (i64, SparseVec) {
        let (total, pos) = self.position(degs, idxs);
        (total, vec![(pos, c)])
    }
}

/// Binary tensor used by the public chain layer: labels are ordered pairs.
pub fn tensor(a: &ChainComplex, b: &ChainComplex) -> Result<ChainComplex> {
    if a.field() != b.field() {
        return Err(Error::FieldMismatch(a.field(), b.field()));
    }
    let ts = TensorSpace::new(&[a, b], a.field());
    // re-label Seq([x, y]) as Pair(x, y)
    let basis = ts
        .complex
        .basis
        .iter()
        .map(|(n, labs)| {
            let labs = labs
                .iter()
                .map(|l| match l {
                    Label::Seq(v) if v.len() == 2 => Label::pair(v[0].clone(), v[1].clone()),
                    other => other.clone(),
                })
                .collect();
            (*n, labs)
        })
        .collect();
    Ok(ChainComplex {
        field: a.field(),
        basis,
        diff: ts.complex.diff.clone(),
    })
}

/// The permutation matrix with Koszul signs:
/// x_1⊗…⊗x_k ↦ ± x_{σ⁻¹(1)}⊗…⊗x_{σ⁻¹(k)}, where factor i of the source
/// moves to slot σ(i) of the target and the sign is (-1) to the number of
/// odd-degree pairs that swap past each other.
pub fn koszul_permute(
    src: &TensorSpace,
    tgt: &TensorSpace,
    sigma: &[usize],
) -> Result<ChainMap> {
    let k = src.rank();
    assert_eq!(tgt.rank(), k);
    let field = src.complex.field();
    let mut builder = MapBuilder::new(src.complex.clone(), tgt.complex.clone(), 0);
    for n in src.complex.degrees() {
        for (col, (degs, idxs)) in src.tuples(n).iter().enumerate() {
            let mut sign = 1i64;
            for i in 0..k {
                for j in (i + 1)..k {
                    if sigma[i] > sigma[j]
                        && degs[i].rem_euclid(2) == 1
                        && degs[j].rem_euclid(2) == 1
                    {
                        sign = -sign;
                    }
                }
            }
            let mut tdegs = vec![0i64; k];
            let mut tidxs = vec![0usize; k];
            for i in 0..k {
                tdegs[sigma[i]] = degs[i];
                tidxs[sigma[i]] = idxs[i];
            }
            let (tn, pos) = tgt.position(&tdegs, &tidxs);
            debug_assert_eq!(tn, n);
            builder.add(n, col, pos, field.from_i64(sign));
        }
    }
    builder.build()
}

/// Tensor product of degree-0 chain maps, as a map between the tensor
/// spaces of their sources and targets. Degree 0 keeps Koszul signs out.
pub fn tensor_maps(maps: &[&ChainMap]) -> Result<(TensorSpace, TensorSpace, ChainMap)> {
    assert!(!maps.is_empty());
    let field = maps[0].source().field();
    for m in maps {
        assert_eq!(m.degree(), 0, "tensor_maps expects degree-0 maps");
    }
    let sources: Vec<&ChainComplex> = maps.iter().map(|m| m.source()).collect();
    let targets: Vec<&ChainComplex> = maps.iter().map(|m| m.target()).collect();
    let src = TensorSpace::new(&sources, field);
    let tgt = TensorSpace::new(&targets, field);
    let mut builder = MapBuilder::new(src.complex.clone(), tgt.complex.clone(), 0);
    for n in src.complex.degrees() {
        for (col, (degs, idxs)) in src.tuples(n).iter().enumerate() {
            // expand the product of image columns
            let mut images: Vec<(Vec<usize>, Scalar)> = vec![(Vec::new(), field.one())];
            for (k, m) in maps.iter().enumerate() {
                let colv = m.component(degs[k]).transpose();
                let entries = colv.row(idxs[k]).clone();
                let mut next = Vec::new();
                for (partial, c) in &images {
                    for (ti, v) in &entries {
                        let mut p2 = partial.clone();
                        p2.push(*ti);
                        next.push((p2, c * v));
                    }
                }
                images = next;
            }
            for (tidxs, c) in images {
                let (tn, pos) = tgt.position(degs, &tidxs);
                debug_assert_eq!(tn, n);
                builder.add(n, col, pos, c);
            }
        }
    }
    let map = builder.build()?;
    Ok((src, tgt, map))
}

/// Internal Hom complex: Hom_p = ∏_q Maps(C_q, D_{q+p}),
/// ∂f = d∘f - (-1)^{|f|} f∘d. Basis bookkeeping included.
pub struct HomSpace {
    pub complex: ChainComplex,
    /// per hom-degree p: list of (source degree q, source idx, target idx)
    index: BTreeMap<i64, Vec<(i64, usize, usize)>>,
    lookup: BTreeMap<(i64, i64, usize, usize), usize>,
}

impl HomSpace {
    pub fn new(c: &ChainComplex, d: &ChainComplex) -> Result<HomSpace> {
        if c.field() != d.field() {
            return Err(Error::FieldMismatch(c.field(), d.field()));
        }
        let field = c.field();
        let mut index: BTreeMap<i64, Vec<(i64, usize, usize)>> = BTreeMap::new();
        for q in c.degrees() {
            for t in d.degrees() {
                let p = t - q;
                let e = index.entry(p).or_default();
                for i in 0..c.dim(q) {
                    for j in 0..d.dim(t) {
                        e.push((q, i, j));
                    }
                }
            }
        }
        for v in index.values_mut() {
            v.sort();
        }
        let mut lookup = BTreeMap::new();
        let mut basis: BTreeMap<i64, Vec<Label>> = BTreeMap::new();
        for (p, v) in &index {
            let mut labs = Vec::new();
            for (pos, (q, i, j)) in v.iter().enumerate() {
                lookup.insert((*p, *q, *i, *j), pos);
                labs.push(Label::Seq(vec![
                    Label::Int(*q),
                    c.labels(*q)[*i].clone(),
                    d.labels(q + p)[*j].clone(),
                ]));
            }
            basis.insert(*p, labs);
        }
        let mut diff: BTreeMap<i64, SparseMat> = BTreeMap::new();
        for (p, v) in &index {
            let rows = index.get(&(p - 1)).map_or(0, |t| t.len());
            if rows == 0 {
                continue;
            }
            let sign = field.from_i64(if p.rem_euclid(2) == 0 { -1 } else { 1 });
            let mut m = SparseMat::zero(rows, v.len(), field);
            for (col, (q, i, j)) in v.iter().enumerate() {
                // d_D ∘ f : lands in (q, i, j') with d_D[j'][j]
                let dd = d.diff_at(q + p);
                for (jp, val) in dd.transpose().row(*j) {
                    let row = lookup[&(p - 1, *q, *i, *jp)];
                    m.add_entry(row, col, val.clone());
                }
                // -(-1)^p f ∘ d_C : lands in (q+1, i'', j) with d_C[i][i'']
                let dc = c.diff_at(q + 1);
                for (ipp, val) in dc.row(*i) {
                    if let Some(row) = lookup.get(&(p - 1, *q + 1, *ipp, *j)) {
                        m.add_entry(*row, col, &sign * val);
                    }
                }
            }
            if !m.is_zero() {
                diff.insert(*p, m);
            }
        }
        let complex = ChainComplex::new(field, basis, diff)?;
        Ok(HomSpace {
            complex,
            index,
            lookup,
        })
    }

    /// Position of the basis map sending source basis (q, i) to target
    /// basis (q + p, j), inside hom-degree p.
    pub fn position(&self, p: i64, q: i64, i: usize, j: usize) -> usize {
        self.lookup[&(p, q, i, j)]
    }

    pub fn entries(&self, p: i64) -> &[(i64, usize, usize)] {
        self.index.get(&p).map_or(&[], |v| v.as_slice())
    }
}

pub fn hom_complex(c: &ChainComplex, d: &ChainComplex) -> Result<ChainComplex> {
    Ok(HomSpace::new(c, d)?.complex)
}

/// Staged homology of Ω^n(fiber of the augmentation of sphere(n)^{⊗m}),
/// with window-stabilization detection over n ≤ n_max.
#[derive(Debug, Clone)]
pub struct LoopFiberReport {
    pub table: BettiTable,
    /// first stage from which the windowed table no longer changes;
    /// None when the table is still moving at n_max
    pub stabilized_at: Option<usize>,
    pub stages: Vec<BettiTable>,
}

pub fn stable_loop_fiber(
    field: FieldSpec,
    m: usize,
    n_max: usize,
    window: Window,
) -> Result<LoopFiberReport> {
    if m < 1 {
        return Err(Error::Config("loop fiber needs arity m >= 1".into()));
    }
    let mut stages = Vec::new();
    for n in 0..=n_max {
        let sphere = ChainComplex::sphere(field, n as i64)?;
        let refs: Vec<&ChainComplex> = std::iter::repeat(&sphere).take(m).collect();
        let power = TensorSpace::new(&refs, field);
        let unit = ChainComplex::unit(field);
        // augmentation: the all-basepoint word ↦ 1, everything else ↦ 0
        let mut aug = MapBuilder::new(power.complex.clone(), unit.clone(), 0);
        for (pos, (degs, idxs)) in power.tuples(0).iter().enumerate() {
            if degs.iter().all(|&d| d == 0) && idxs.iter().all(|&i| i == 0) {
                aug.add(0, pos, 0, field.one());
            }
        }
        let aug = aug.build()?;
        let fiber = aug.fiber().shift(-(n as i64));
        let table = fiber.homology_full().restrict(window);
        stages.push(table);
    }
    let last = stages.last().expect("at least one stage");
    let mut n0 = stages.len() - 1;
    while n0 > 0 && &stages[n0 - 1] == last {
        n0 -= 1;
    }
    let stabilized_at = if n0 < stages.len() - 1 { Some(n0) } else { None };
    Ok(LoopFiberReport {
        table: last.clone(),
        stabilized_at,
        stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> FieldSpec {
        FieldSpec::Rationals
    }

    fn two_term(field: FieldSpec) -> ChainComplex {
        // k -> k identity in degrees 1 -> 0: acyclic
        let mut basis = BTreeMap::new();
        basis.insert(0, vec![Label::atom("x")]);
        basis.insert(1, vec![Label::atom("y")]);
        let mut diff = BTreeMap::new();
        diff.insert(1, SparseMat::from_triplets(1, 1, field, [(0, 0, field.one())]));
        ChainComplex::new(field, basis, diff).unwrap()
    }

    #[test]
    fn homology_point_and_cone() {
        let c = ChainComplex::unit(q());
        let t = c.homology((-1, 1)).unwrap();
        assert_eq!(t.rows, vec![(0, 1)]);

        let acyclic = two_term(q());
        let t = acyclic.homology((0, 1)).unwrap();
        assert!(t.rows.is_empty());
    }

    #[test]
    fn homology_sphere() {
        for n in [0i64, 1, 3] {
            let s = ChainComplex::sphere(q(), n).unwrap();
            let t = s.homology((0, n.max(1))).unwrap();
            if n == 0 {
                assert_eq!(t.dim_at(0), 2);
            } else {
                assert_eq!(t.dim_at(0), 1);
                assert_eq!(t.dim_at(n), 1);
            }
        }
    }

    #[test]
    fn homology_window_guard() {
        let c = ChainComplex::unit(q());
        assert!(matches!(
            c.homology((-3, 0)),
            Err(Error::InsufficientSupport { .. })
        ));
    }

    #[test]
    fn tensor_unit_and_binomial_dims() {
        let c = two_term(q());
        let u = ChainComplex::unit(q());
        let t = tensor(&u, &c).unwrap();
        assert_eq!(t.dim(0), 1);
        assert_eq!(t.dim(1), 1);
        assert!(t.homology((0, 1)).unwrap().rows.is_empty());

        // dim_i sphere(n)^{⊗m} = binom(m, i/n) at degrees i*n
        let s = ChainComplex::sphere(q(), 2).unwrap();
        let refs: Vec<&ChainComplex> = vec![&s, &s, &s];
        let p = TensorSpace::new(&refs, q()).complex;
        let binom = [1usize, 3, 3, 1];
        for i in 0..=3i64 {
            assert_eq!(p.dim(2 * i), binom[i as usize]);
        }
    }

    #[test]
    fn tensor_of_acyclics_is_acyclic() {
        // oracle: homology of the 4-dimensional tensor square
        let c = two_term(q());
        let t = tensor(&c, &c).unwrap();
        assert_eq!(t.total_dim(), 4);
        assert!(t.homology((0, 2)).unwrap().rows.is_empty());
    }

    #[test]
    fn hom_complex_examples() {
        let c = two_term(q());
        let u = ChainComplex::unit(q());
        let h = hom_complex(&u, &c).unwrap();
        assert_eq!(h.dim(0), c.dim(0));
        assert_eq!(h.dim(1), c.dim(1));
        assert!(h.homology((0, 1)).unwrap().rows.is_empty());

        // H_0(hom(C, C)) for C = sphere(n), n >= 1, has dimension 2:
        // oracle is the explicit rank computation, here both differentials
        // into and out of degree 0 vanish and Hom_0 = k^2 exactly
        for n in [1i64, 2] {
            let s = ChainComplex::sphere(q(), n).unwrap();
            let h = hom_complex(&s, &s).unwrap();
            assert_eq!(h.dim(0), 2);
            assert_eq!(h.homology((0, 0)).unwrap().dim_at(0), 2);
        }

        let z = ChainComplex::zero(q());
        let h = hom_complex(&c, &z).unwrap();
        assert!(h.is_zero());
    }

    #[test]
    fn hom_dims_identity() {
        let c = two_term(q());
        let s = ChainComplex::sphere(q(), 1).unwrap();
        let h = hom_complex(&c, &s).unwrap();
        for p in h.degrees() {
            let expect: usize = c
                .degrees()
                .iter()
                .map(|&qd| c.dim(qd) * s.dim(qd + p))
                .sum();
            assert_eq!(h.dim(p), expect);
        }
    }

    #[test]
    fn chain_map_condition_enforced() {
        let c = two_term(q());
        let u = ChainComplex::unit(q());
        // map u -> c hitting the non-cycle generator in degree 0 IS a chain
        // map (no differential out of degree 0), but a degree-1 component
        // violating d∘f = -f∘d must be rejected
        let mut bad = BTreeMap::new();
        bad.insert(
            0,
            SparseMat::from_triplets(1, 1, q(), [(0, 0, q().one())]),
        );
        let f = ChainMap::new(u.clone(), c.clone(), 1, bad);
        assert!(f.is_err());
    }

    #[test]
    fn cone_of_identity_is_acyclic() {
        let s = ChainComplex::sphere(q(), 2).unwrap();
        let id = ChainMap::identity(&s);
        let cone = id.cone();
        assert!(cone.homology((-1, 3)).unwrap().rows.is_empty());
    }

    #[test]
    fn shift_signs_square_to_zero() {
        let c = two_term(q());
        for n in [-2i64, -1, 1, 2, 3] {
            let s = c.shift(n);
            assert_eq!(s.dim(n), 1);
            assert_eq!(s.dim(n + 1), 1);
            assert!(s.homology((n, n + 1)).unwrap().rows.is_empty());
        }
    }

    #[test]
    fn koszul_permute_signs() {
        // swapping two odd generators picks up a sign
        let s1 = ChainComplex::sphere(q(), 1).unwrap();
        let src = TensorSpace::new(&[&s1, &s1], q());
        let tgt = TensorSpace::new(&[&s1, &s1], q());
        let swap = koszul_permute(&src, &tgt, &[1, 0]).unwrap();
        let (deg, pos) = src.position(&[1, 1], &[0, 0]);
        assert_eq!(deg, 2);
        let img = swap.component(2).apply(&vec![(pos, q().one())]);
        assert_eq!(img, vec![(pos, q().from_i64(-1))]);
        // even-degree pair carries no sign
        let (d0, p0) = src.position(&[0, 0], &[0, 0]);
        let img0 = swap.component(d0).apply(&vec![(p0, q().one())]);
        assert_eq!(img0, vec![(p0, q().one())]);
    }

    #[test]
    fn loop_fiber_m1_is_unit() {
        let r = stable_loop_fiber(q(), 1, 4, (-2, 2)).unwrap();
        assert_eq!(r.table.rows, vec![(0, 1)]);
        assert_eq!(r.stabilized_at, Some(0));
    }

    #[test]
    fn loop_fiber_m3_stabilizes_to_k3() {
        let r = stable_loop_fiber(q(), 3, 8, (-2, 2)).unwrap();
        assert_eq!(r.table.rows, vec![(0, 3)]);
        assert!(r.stabilized_at.is_some());
    }

    #[test]
    fn loop_fiber_m2_prestable_class_escapes() {
        // oracle: ⊕_{i=1..2} binom(2,i) k[(i-1)n] puts an extra class in
        // degree 1 at stage n=1 which escapes the window as n grows
        let r = stable_loop_fiber(q(), 2, 6, (-2, 2)).unwrap();
        let stage1 = &r.stages[1];
        assert_eq!(stage1.dim_at(0), 2);
        assert_eq!(stage1.dim_at(1), 1);
        assert_eq!(r.table.rows, vec![(0, 2)]);
    }
}
