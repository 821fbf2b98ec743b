//! C-colored symmetric collections.
//!
//! A collection stores one chain complex per ordered C-sequence (up to the
//! session arity ceiling) together with the action of every adjacent
//! transposition. Arbitrary permutations act through factorizations into
//! adjacent transpositions; the constructor re-checks the symmetric-group
//! relations, so the factorized action is well defined.

use std::collections::BTreeMap;
use std::fmt;

use crate::chain::{ChainComplex, ChainMap};
use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::label::Label;
use crate::linalg::{SparseMat, SparseVec};
use crate::operad::AxiomReport;
use crate::perm::Perm;

pub type Color = usize;

/// Finite ordered set of colors.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ColorSet {
    names: Vec<String>,
}

impl ColorSet {
    pub fn new(names: Vec<String>) -> Result<ColorSet> {
        if names.is_empty() {
            return Err(Error::Config("color set must be non-empty".into()));
        }
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != names.len() {
            return Err(Error::Config("color labels must be distinct".into()));
        }
        Ok(ColorSet { names })
    }

    pub fn single() -> ColorSet {
        ColorSet {
            names: vec!["*".to_string()],
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn name(&self, c: Color) -> &str {
        &self.names[c]
    }

    pub fn index_of(&self, name: &str) -> Option<Color> {
        self.names.iter().position(|n| n == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = Color> {
        0..self.names.len()
    }
}

/// A C-sequence (c_1,…,c_n; c): ordered input colors and an output color.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CSeq {
    pub inputs: Vec<Color>,
    pub output: Color,
}

impl CSeq {
    pub fn new(inputs: Vec<Color>, output: Color) -> CSeq {
        CSeq { inputs, output }
    }

    /// Single-colored sequence of the given arity.
    pub fn single(arity: usize) -> CSeq {
        CSeq {
            inputs: vec![0; arity],
            output: 0,
        }
    }

    pub fn arity(&self) -> usize {
        self.inputs.len()
    }

    /// Swap input slots i and i+1.
    pub fn swap(&self, i: usize) -> CSeq {
        let mut inputs = self.inputs.clone();
        inputs.swap(i, i + 1);
        CSeq {
            inputs,
            output: self.output,
        }
    }

    /// Relabel inputs by a permutation: new inputs[σ(p)] = inputs[p].
    pub fn permute(&self, sigma: &Perm) -> CSeq {
        CSeq {
            inputs: sigma.permute(&self.inputs),
            output: self.output,
        }
    }

    /// The sequence obtained by substituting `inner` into slot i.
    pub fn substitute(&self, i: usize, inner: &CSeq) -> CSeq {
        assert_eq!(self.inputs[i], inner.output, "color mismatch at slot");
        let mut inputs = Vec::with_capacity(self.arity() + inner.arity() - 1);
        inputs.extend_from_slice(&self.inputs[..i]);
        inputs.extend_from_slice(&inner.inputs);
        inputs.extend_from_slice(&self.inputs[i + 1..]);
        CSeq {
            inputs,
            output: self.output,
        }
    }
}

impl fmt::Display for CSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ins: Vec<String> = self.inputs.iter().map(|c| c.to_string()).collect();
        write!(f, "({};{})", ins.join(","), self.output)
    }
}

/// Block permutation: slot p of width `widths[p]` moves to slot σ(p); the
/// induced permutation on positions 0..Σwidths.
pub fn block_perm(widths: &[usize], sigma: &Perm) -> Perm {
    assert_eq!(widths.len(), sigma.len());
    let n = widths.len();
    let total: usize = widths.iter().sum();
    let mut src_off = vec![0usize; n];
    for p in 1..n {
        src_off[p] = src_off[p - 1] + widths[p - 1];
    }
    // target offsets: widths arranged by target slot
    let inv = sigma.inverse();
    let mut tgt_off = vec![0usize; n];
    let mut acc = 0;
    for t in 0..n {
        tgt_off[t] = acc;
        acc += widths[inv.apply(t)];
    }
    let mut map = vec![0usize; total];
    for p in 0..n {
        for q in 0..widths[p] {
            map[src_off[p] + q] = tgt_off[sigma.apply(p)] + q;
        }
    }
    Perm::from_images(map)
}

/// A symmetric C-collection with a truncation record.
#[derive(Debug, Clone)]
pub struct Collection {
    colors: ColorSet,
    field: FieldSpec,
    max_arity: usize,
    /// true when a composite dropped terms above the arity ceiling
    truncated: bool,
    /// levels of arity <= exact_max carry complete data; a composite of
    /// truncated inputs can store a top level that silently misses
    /// summands, and such levels must not feed chained axiom checks or
    /// presentations
    exact_max: usize,
    levels: BTreeMap<CSeq, ChainComplex>,
    /// s_i : level(seq) -> level(seq.swap(i)), keyed by (seq, i)
    actions: BTreeMap<(CSeq, usize), ChainMap>,
}

impl Collection {
    pub fn new(
        colors: ColorSet,
        field: FieldSpec,
        max_arity: usize,
        levels: BTreeMap<CSeq, ChainComplex>,
        actions: BTreeMap<(CSeq, usize), ChainMap>,
        truncated: bool,
    ) -> Result<Collection> {
        if max_arity < 1 {
            return Err(Error::Config("arity ceiling must be >= 1".into()));
        }
        let levels: BTreeMap<CSeq, ChainComplex> =
            levels.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        for (seq, c) in &levels {
            if seq.arity() > max_arity {
                return Err(Error::Config(format!(
                    "level {seq} exceeds the arity ceiling {max_arity}"
                )));
            }
            if c.field() != field {
                return Err(Error::FieldMismatch(field, c.field()));
            }
            for &col in seq.inputs.iter().chain([&seq.output]) {
                if col >= colors.len() {
                    return Err(Error::Config(format!("color {col} out of range")));
                }
            }
        }
        let coll = Collection {
            colors,
            field,
            max_arity,
            truncated,
            exact_max: max_arity,
            levels,
            actions,
        };
        let report = coll.check();
        if !report.ok() {
            return Err(Error::Axioms(report));
        }
        Ok(coll)
    }

    /// Constructor for levels whose permuted sequences carry identical
    /// complexes and trivial symmetric actions.
    pub fn with_trivial_actions(
        colors: ColorSet,
        field: FieldSpec,
        max_arity: usize,
        levels: BTreeMap<CSeq, ChainComplex>,
    ) -> Result<Collection> {
        let mut actions = BTreeMap::new();
        for (seq, c) in &levels {
            if c.is_zero() {
                continue;
            }
            for i in 0..seq.arity().saturating_sub(1) {
                let t = seq.swap(i);
                let tc = levels
                    .get(&t)
                    .ok_or_else(|| Error::Config(format!("missing permuted level {t}")))?;
                let mut comps = BTreeMap::new();
                for n in c.degrees() {
                    if c.dim(n) != tc.dim(n) {
                        return Err(Error::Config(format!(
                            "trivial action impossible: {seq} vs {t} at degree {n}"
                        )));
                    }
                    comps.insert(n, SparseMat::identity(c.dim(n), field));
                }
                actions.insert(
                    (seq.clone(), i),
                    ChainMap::new(c.clone(), tc.clone(), 0, comps)?,
                );
            }
        }
        Collection::new(colors, field, max_arity, levels, actions, false)
    }

    /// The unit collection I_C: k at (c;c) for every color, zero elsewhere.
    pub fn unit_i(colors: ColorSet, field: FieldSpec, max_arity: usize) -> Collection {
        let mut levels = BTreeMap::new();
        for c in colors.iter() {
            levels.insert(
                CSeq::new(vec![c], c),
                ChainComplex::concentrated(field, 0, vec![Label::atom("id")]),
            );
        }
        Collection::with_trivial_actions(colors, field, max_arity, levels)
            .expect("unit collection is valid")
    }

    /// The collection E_C: k at (;c) for every color, zero elsewhere.
    pub fn unit_e(colors: ColorSet, field: FieldSpec, max_arity: usize) -> Collection {
        let mut levels = BTreeMap::new();
        for c in colors.iter() {
            levels.insert(
                CSeq::new(vec![], c),
                ChainComplex::concentrated(field, 0, vec![Label::atom("pt")]),
            );
        }
        Collection::with_trivial_actions(colors, field, max_arity, levels)
            .expect("point collection is valid")
    }

    pub fn zero(colors: ColorSet, field: FieldSpec, max_arity: usize) -> Collection {
        Collection {
            colors,
            field,
            max_arity,
            truncated: false,
            exact_max: max_arity,
            levels: BTreeMap::new(),
            actions: BTreeMap::new(),
        }
    }

    pub fn colors(&self) -> &ColorSet {
        &self.colors
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn max_arity(&self) -> usize {
        self.max_arity
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn set_truncated(&mut self, flag: bool) {
        self.truncated = flag;
    }

    pub fn exact_max(&self) -> usize {
        self.exact_max
    }

    pub fn set_exact_max(&mut self, e: usize) {
        self.exact_max = e.min(self.max_arity);
    }

    pub fn level(&self, seq: &CSeq) -> ChainComplex {
        self.levels
            .get(seq)
            .cloned()
            .unwrap_or_else(|| ChainComplex::zero(self.field))
    }

    pub fn level_ref(&self, seq: &CSeq) -> Option<&ChainComplex> {
        self.levels.get(seq)
    }

    pub fn level_dim(&self, seq: &CSeq) -> usize {
        self.levels.get(seq).map_or(0, |c| c.total_dim())
    }

    pub fn seqs(&self) -> impl Iterator<Item = &CSeq> {
        self.levels.keys()
    }

    pub fn total_dim(&self) -> usize {
        self.levels.values().map(|c| c.total_dim()).sum()
    }

    /// All sequences over the colorset with arity <= ceiling; exhaustive
    /// enumeration is fine at desk scale.
    pub fn all_seqs(colors: &ColorSet, max_arity: usize) -> Vec<CSeq> {
        let mut out = Vec::new();
        for arity in 0..=max_arity {
            let mut stack: Vec<Vec<Color>> = vec![Vec::new()];
            for _ in 0..arity {
                let mut next = Vec::new();
                for prefix in &stack {
                    for c in colors.iter() {
                        let mut p = prefix.clone();
                        p.push(c);
                        next.push(p);
                    }
                }
                stack = next;
            }
            for inputs in stack {
                for out_c in colors.iter() {
                    out.push(CSeq::new(inputs.clone(), out_c));
                }
            }
        }
        out
    }

    /// Action of the adjacent transposition s_i on a level.
    pub fn action_gen(&self, seq: &CSeq, i: usize) -> ChainMap {
        match self.actions.get(&(seq.clone(), i)) {
            Some(m) => m.clone(),
            None => ChainMap::zero_map(self.level(seq), self.level(&seq.swap(i)), 0),
        }
    }

    /// Action of an arbitrary permutation: level(seq) -> level(σ·seq),
    /// where position p of the source moves to slot σ(p).
    pub fn action(&self, seq: &CSeq, sigma: &Perm) -> ChainMap {
        assert_eq!(sigma.len(), seq.arity());
        let mut cur_seq = seq.clone();
        let mut acc = ChainMap::identity(&self.level(seq));
        for i in sigma.adjacent_factorization() {
            let step = self.action_gen(&cur_seq, i);
            acc = step.compose(&acc);
            cur_seq = cur_seq.swap(i);
        }
        debug_assert_eq!(cur_seq, seq.permute(sigma));
        acc
    }

    /// Verify that every action is a degree-0 isomorphism and that the
    /// generators satisfy the symmetric-group relations.
    pub fn check(&self) -> AxiomReport {
        let mut report = AxiomReport::default();
        for ((seq, i), m) in &self.actions {
            if m.degree() != 0 {
                report.push("action degree", format!("{seq} s_{i}"), "nonzero degree");
                continue;
            }
            if m.source() != &self.level(seq) || m.target() != &self.level(&seq.swap(*i)) {
                report.push("action endpoints", format!("{seq} s_{i}"), "wrong level");
                continue;
            }
            for n in m.source().degrees() {
                if m.component(n).rank() != m.source().dim(n) {
                    report.push(
                        "action iso",
                        format!("{seq} s_{i} deg {n}"),
                        "not invertible",
                    );
                }
            }
        }
        for (seq, c) in &self.levels {
            if c.is_zero() {
                continue;
            }
            let n = seq.arity();
            if n < 2 {
                continue;
            }
            for i in 0..n - 1 {
                if !self.actions.contains_key(&(seq.clone(), i)) {
                    report.push("action missing", format!("{seq} s_{i}"), "absent");
                }
            }
            // involution s_i^2 = id
            for i in 0..n - 1 {
                let f = self.action_gen(seq, i);
                let g = self.action_gen(&seq.swap(i), i);
                if !g.compose(&f).equal(&ChainMap::identity(&self.level(seq))) {
                    report.push("involution", format!("{seq} s_{i}"), "s_i^2 != id");
                }
            }
            // braid s_i s_{i+1} s_i = s_{i+1} s_i s_{i+1}
            for i in 0..n.saturating_sub(2) {
                let lhs = {
                    let a = self.action_gen(seq, i);
                    let b = self.action_gen(&seq.swap(i), i + 1);
                    let c3 = self.action_gen(&seq.swap(i).swap(i + 1), i);
                    c3.compose(&b).compose(&a)
                };
                let rhs = {
                    let a = self.action_gen(seq, i + 1);
                    let b = self.action_gen(&seq.swap(i + 1), i);
                    let c3 = self.action_gen(&seq.swap(i + 1).swap(i), i + 1);
                    c3.compose(&b).compose(&a)
                };
                if !lhs.equal(&rhs) {
                    report.push("braid", format!("{seq} s_{i},s_{}", i + 1), "relation fails");
                }
            }
            // distant generators commute
            for i in 0..n - 1 {
                for j in (i + 2)..n - 1 {
                    let lhs = self
                        .action_gen(&seq.swap(i), j)
                        .compose(&self.action_gen(seq, i));
                    let rhs = self
                        .action_gen(&seq.swap(j), i)
                        .compose(&self.action_gen(seq, j));
                    if !lhs.equal(&rhs) {
                        report.push("commuting", format!("{seq} s_{i},s_{j}"), "relation fails");
                    }
                }
            }
        }
        report
    }

    pub fn direct_sum(parts: &[&Collection]) -> Result<Collection> {
        assert!(!parts.is_empty());
        let colors = parts[0].colors.clone();
        let field = parts[0].field;
        let max_arity = parts.iter().map(|p| p.max_arity).min().unwrap();
        for p in parts {
            if p.colors != colors {
                return Err(Error::ColorMismatch);
            }
            if p.field != field {
                return Err(Error::FieldMismatch(field, p.field));
            }
        }
        let mut seqs: Vec<CSeq> = parts
            .iter()
            .flat_map(|p| p.levels.keys().cloned())
            .collect();
        seqs.sort();
        seqs.dedup();
        let mut levels = BTreeMap::new();
        for seq in &seqs {
            let lv: Vec<ChainComplex> = parts.iter().map(|p| p.level(seq)).collect();
            let refs: Vec<&ChainComplex> = lv.iter().collect();
            levels.insert(seq.clone(), ChainComplex::direct_sum(&refs, field));
        }
        let mut actions = BTreeMap::new();
        for seq in &seqs {
            let src = levels[seq].clone();
            for i in 0..seq.arity().saturating_sub(1) {
                let tseq = seq.swap(i);
                let tgt = levels
                    .get(&tseq)
                    .cloned()
                    .unwrap_or_else(|| ChainComplex::zero(field));
                let src_parts: Vec<ChainComplex> = parts.iter().map(|p| p.level(seq)).collect();
                let tgt_parts: Vec<ChainComplex> = parts.iter().map(|p| p.level(&tseq)).collect();
                let mut comps: BTreeMap<i64, SparseMat> = BTreeMap::new();
                for n in src.degrees() {
                    let mut m = SparseMat::zero(tgt.dim(n), src.dim(n), field);
                    for (k, p) in parts.iter().enumerate() {
                        let blockmap = p.action_gen(seq, i).component(n);
                        let ro: usize = tgt_parts[..k].iter().map(|c| c.dim(n)).sum();
                        let co: usize = src_parts[..k].iter().map(|c| c.dim(n)).sum();
                        for r in 0..blockmap.rows() {
                            for (cix, v) in blockmap.row(r) {
                                m.add_entry(ro + r, co + cix, v.clone());
                            }
                        }
                    }
                    if !m.is_zero() {
                        comps.insert(n, m);
                    }
                }
                actions.insert((seq.clone(), i), ChainMap::new(src.clone(), tgt, 0, comps)?);
            }
        }
        let truncated = parts.iter().any(|p| p.truncated);
        let exact = parts.iter().map(|p| p.exact_max).min().unwrap();
        let mut out = Collection::new(colors, field, max_arity, levels, actions, truncated)?;
        out.set_exact_max(exact);
        Ok(out)
    }

    /// Shift every level by n.
    pub fn shift(&self, n: i64) -> Collection {
        let levels = self
            .levels
            .iter()
            .map(|(s, c)| (s.clone(), c.shift(n)))
            .collect();
        let actions = self
            .actions
            .iter()
            .map(|(k, m)| (k.clone(), m.shift(n)))
            .collect();
        Collection {
            colors: self.colors.clone(),
            field: self.field,
            max_arity: self.max_arity,
            truncated: self.truncated,
            exact_max: self.exact_max,
            levels,
            actions,
        }
    }

    pub fn same_dims(&self, other: &Collection) -> bool {
        let mut seqs: Vec<&CSeq> = self.levels.keys().chain(other.levels.keys()).collect();
        seqs.sort();
        seqs.dedup();
        seqs.into_iter().all(|s| {
            let a = self.level(s);
            let b = other.level(s);
            let mut degs = a.degrees();
            degs.extend(b.degrees());
            degs.sort_unstable();
            degs.dedup();
            degs.into_iter().all(|d| a.dim(d) == b.dim(d))
        })
    }
}

/// One basis map of a strict morphism space, as sparse entries
/// (seq, source degree, source index, target index, value).
pub type CollMapBasis = Vec<(CSeq, i64, usize, usize, crate::field::Scalar)>;

/// Linear system over the entries of an unknown degree-r collection map
/// M -> N. Chain and equivariance rows are built in; callers may append
/// further rows before solving.
pub struct MapSystem<'a> {
    pub m: &'a Collection,
    pub n: &'a Collection,
    pub degree: i64,
    vars: BTreeMap<(CSeq, i64, usize, usize), usize>,
    rows: Vec<SparseVec>,
}

impl<'a> MapSystem<'a> {
    pub fn new(m: &'a Collection, n: &'a Collection, degree: i64) -> Result<MapSystem<'a>> {
        if m.colors() != n.colors() {
            return Err(Error::ColorMismatch);
        }
        if m.field() != n.field() {
            return Err(Error::FieldMismatch(m.field(), n.field()));
        }
        let mut vars = BTreeMap::new();
        for seq in m.seqs() {
            let src = m.level(seq);
            let tgt = n.level(seq);
            for d in src.degrees() {
                for i in 0..src.dim(d) {
                    for j in 0..tgt.dim(d + degree) {
                        let k = vars.len();
                        vars.insert((seq.clone(), d, i, j), k);
                    }
                }
            }
        }
        Ok(MapSystem {
            m,
            n,
            degree,
            vars,
            rows: Vec::new(),
        })
    }

    pub fn var(&self, seq: &CSeq, d: i64, i: usize, j: usize) -> Option<usize> {
        self.vars.get(&(seq.clone(), d, i, j)).copied()
    }

    pub fn nvars(&self) -> usize {
        self.vars.len()
    }

    pub fn push_row(&mut self, row: Vec<(usize, crate::field::Scalar)>) {
        let mut merged: SparseVec = Vec::new();
        for (k, v) in row {
            merged = crate::linalg::vec_add(&merged, &vec![(k, v)]);
        }
        if !merged.is_empty() {
            self.rows.push(merged);
        }
    }

    /// d_N ∘ f = (-1)^r f ∘ d_M.
    pub fn add_chain_rows(&mut self) {
        let field = self.m.field();
        let sign = field.from_i64(if self.degree.rem_euclid(2) == 0 { -1 } else { 1 });
        let r = self.degree;
        let seqs: Vec<CSeq> = self.m.seqs().cloned().collect();
        for seq in &seqs {
            let src = self.m.level(seq);
            let tgt = self.n.level(seq);
            for d in src.degrees() {
                let dm = src.diff_at(d);
                let dn = tgt.diff_at(d + r);
                for i in 0..src.dim(d) {
                    for jt in 0..tgt.dim(d + r - 1) {
                        let mut row = Vec::new();
                        for j in 0..tgt.dim(d + r) {
                            let c = dn.entry(jt, j);
                            if !c.is_zero() {
                                if let Some(v) = self.var(seq, d, i, j) {
                                    row.push((v, c));
                                }
                            }
                        }
                        for ip in 0..src.dim(d - 1) {
                            let c = dm.entry(ip, i);
                            if !c.is_zero() {
                                if let Some(v) = self.var(seq, d - 1, ip, jt) {
                                    row.push((v, &sign * &c));
                                }
                            }
                        }
                        self.push_row(row);
                    }
                }
            }
        }
    }

    /// f ∘ s_i = s_i ∘ f on generators.
    pub fn add_equivariance_rows(&mut self) {
        let r = self.degree;
        let seqs: Vec<CSeq> = self.m.seqs().cloned().collect();
        for seq in &seqs {
            let src = self.m.level(seq);
            for i in 0..seq.arity().saturating_sub(1) {
                let tseq = seq.swap(i);
                let am = self.m.action_gen(seq, i);
                let an = self.n.action_gen(seq, i);
                for d in src.degrees() {
                    let am_d = am.component(d);
                    let an_d = an.component(d + r);
                    for si in 0..src.dim(d) {
                        for tj in 0..self.n.level(&tseq).dim(d + r) {
                            let mut row = Vec::new();
                            for ip in 0..self.m.level(&tseq).dim(d) {
                                let c = am_d.entry(ip, si);
                                if !c.is_zero() {
                                    if let Some(v) = self.var(&tseq, d, ip, tj) {
                                        row.push((v, c));
                                    }
                                }
                            }
                            for j in 0..self.n.level(seq).dim(d + r) {
                                let c = an_d.entry(tj, j);
                                if !c.is_zero() {
                                    if let Some(v) = self.var(seq, d, si, j) {
                                        row.push((v, -&c));
                                    }
                                }
                            }
                            self.push_row(row);
                        }
                    }
                }
            }
        }
    }

    pub fn solve(&self) -> Vec<CollMapBasis> {
        let field = self.m.field();
        let mat = SparseMat::from_triplets(
            self.rows.len(),
            self.vars.len(),
            field,
            self.rows
                .iter()
                .enumerate()
                .flat_map(|(r, row)| row.iter().map(move |(c, v)| (r, *c, v.clone()))),
        );
        let kernel = mat.kernel_basis();
        let inv: BTreeMap<usize, (CSeq, i64, usize, usize)> = self
            .vars
            .iter()
            .map(|(k, v)| (*v, k.clone()))
            .collect();
        kernel
            .into_iter()
            .map(|v| {
                v.into_iter()
                    .map(|(k, c)| {
                        let (seq, d, i, j) = inv[&k].clone();
                        (seq, d, i, j, c)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Basis of strict degree-0 maps of collections M -> N: chain maps per
/// level commuting with differentials and all symmetric-group actions.
pub fn collection_hom(m: &Collection, n: &Collection) -> Result<Vec<CollMapBasis>> {
    let mut sys = MapSystem::new(m, n, 0)?;
    sys.add_chain_rows();
    sys.add_equivariance_rows();
    Ok(sys.solve())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> FieldSpec {
        FieldSpec::Rationals
    }

    #[test]
    fn unit_collections() {
        let c2 = ColorSet::new(vec!["a".into(), "b".into()]).unwrap();
        let i = Collection::unit_i(c2.clone(), q(), 3);
        assert_eq!(i.level_dim(&CSeq::new(vec![0], 0)), 1);
        assert_eq!(i.level_dim(&CSeq::new(vec![0], 1)), 0);
        assert_eq!(i.total_dim(), 2);
        let e = Collection::unit_e(c2, q(), 3);
        assert_eq!(e.level_dim(&CSeq::new(vec![], 1)), 1);
    }

    #[test]
    fn block_perms() {
        // widths (2,1), swap: positions (0,1 | 2) -> (2 | 0,1)
        let p = block_perm(&[2, 1], &Perm::from_images(vec![1, 0]));
        assert_eq!((0..3).map(|i| p.apply(i)).collect::<Vec<_>>(), vec![1, 2, 0]);
    }

    #[test]
    fn trivial_action_collection_checks() {
        let mut levels = BTreeMap::new();
        levels.insert(
            CSeq::single(2),
            ChainComplex::concentrated(q(), 0, vec![Label::atom("u"), Label::atom("v")]),
        );
        let c = Collection::with_trivial_actions(ColorSet::single(), q(), 3, levels).unwrap();
        assert!(c.check().ok());
        let sigma = Perm::from_images(vec![1, 0]);
        let act = c.action(&CSeq::single(2), &sigma);
        assert!(act.equal(&ChainMap::identity(&c.level(&CSeq::single(2)))));
    }

    #[test]
    fn sign_action_collection() {
        let field = q();
        let lvl = ChainComplex::concentrated(field, 0, vec![Label::atom("m")]);
        let mut levels = BTreeMap::new();
        levels.insert(CSeq::single(2), lvl.clone());
        let mut actions = BTreeMap::new();
        let neg = SparseMat::from_triplets(1, 1, field, [(0, 0, field.from_i64(-1))]);
        actions.insert(
            (CSeq::single(2), 0),
            ChainMap::new(lvl.clone(), lvl.clone(), 0, BTreeMap::from([(0, neg)])).unwrap(),
        );
        let c = Collection::new(ColorSet::single(), field, 2, levels, actions, false).unwrap();
        let sigma = Perm::from_images(vec![1, 0]);
        let act = c.action(&CSeq::single(2), &sigma);
        assert_eq!(act.component(0).entry(0, 0), field.from_i64(-1));
    }

    #[test]
    fn broken_involution_is_reported() {
        let field = q();
        let lvl = ChainComplex::concentrated(field, 0, vec![Label::atom("m")]);
        let mut levels = BTreeMap::new();
        levels.insert(CSeq::single(2), lvl.clone());
        let mut actions = BTreeMap::new();
        let two = SparseMat::from_triplets(1, 1, field, [(0, 0, field.from_i64(2))]);
        actions.insert(
            (CSeq::single(2), 0),
            ChainMap::new(lvl.clone(), lvl.clone(), 0, BTreeMap::from([(0, two)])).unwrap(),
        );
        let c = Collection::new(ColorSet::single(), field, 2, levels, actions, false);
        assert!(matches!(c, Err(Error::Axioms(_))));
    }

    #[test]
    fn collection_hom_of_units() {
        let i = Collection::unit_i(ColorSet::single(), q(), 3);
        let homs = collection_hom(&i, &i).unwrap();
        assert_eq!(homs.len(), 1);
    }
}
