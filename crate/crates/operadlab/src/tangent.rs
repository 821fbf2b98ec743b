//! Strict morphism spaces, tangent structures, derivations, and
//! square-zero extensions.
//!
//! These are the exact linear-algebra faces of the cotangent formalism:
//! tangent structures are corepresented by the cotangent object, and
//! derivations by the Kähler module, so the dimension equalities between
//! these solvers and the hom solvers are the load-bearing checks.

use std::collections::BTreeMap;

use crate::chain::{ChainComplex, ChainMap, MapBuilder, TensorSpace};
use crate::collection::{CSeq, CollMapBasis, Collection, Color, MapSystem};
use crate::error::{Error, Result};
use crate::field::Scalar;
use crate::ibmod::{check_bilinear_equivariance, IBimod};
use crate::label::Label;
use crate::linalg::{SparseMat, SparseVec};
use crate::operad::{AxiomReport, Operad, OperadMap};

/// A map of infinitesimal bimodules over the same operad.
#[derive(Debug, Clone)]
pub struct IbMap {
    pub source: IBimod,
    pub target: IBimod,
    pub maps: BTreeMap<CSeq, ChainMap>,
}

impl IbMap {
    pub fn from_basis(source: &IBimod, target: &IBimod, basis: &CollMapBasis) -> Result<IbMap> {
        let mut per_seq: BTreeMap<CSeq, Vec<(i64, usize, usize, Scalar)>> = BTreeMap::new();
        for (seq, d, i, j, v) in basis {
            per_seq
                .entry(seq.clone())
                .or_default()
                .push((*d, *i, *j, v.clone()));
        }
        let mut maps = BTreeMap::new();
        for seq in source.coll().seqs() {
            let mut mb = MapBuilder::new(source.level(seq), target.level(seq), 0);
            if let Some(entries) = per_seq.get(seq) {
                for (d, i, j, v) in entries {
                    mb.add(*d, *i, *j, v.clone());
                }
            }
            maps.insert(seq.clone(), mb.build()?);
        }
        Ok(IbMap {
            source: source.clone(),
            target: target.clone(),
            maps,
        })
    }

    pub fn zero(source: &IBimod, target: &IBimod) -> IbMap {
        IbMap {
            source: source.clone(),
            target: target.clone(),
            maps: BTreeMap::new(),
        }
    }

    pub fn map_at(&self, seq: &CSeq) -> ChainMap {
        match self.maps.get(seq) {
            Some(m) => m.clone(),
            None => ChainMap::zero_map(self.source.level(seq), self.target.level(seq), 0),
        }
    }

    pub fn apply(&self, seq: &CSeq, x: &(i64, SparseVec)) -> (i64, SparseVec) {
        (x.0, self.map_at(seq).component(x.0).apply(&x.1))
    }

    pub fn compose(&self, other: &IbMap) -> IbMap {
        let maps = other
            .source
            .coll()
            .seqs()
            .map(|s| (s.clone(), self.map_at(s).compose(&other.map_at(s))))
            .collect();
        IbMap {
            source: other.source.clone(),
            target: self.target.clone(),
            maps,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.maps.values().all(|m| m.is_zero())
    }

    /// Check equivariance and commutation with both actions, pointwise.
    pub fn check(&self) -> AxiomReport {
        let mut report = AxiomReport::default();
        let m = &self.source;
        let n = &self.target;
        let p = m.operad();
        let field = m.field();
        // equivariance on generators
        for seq in m.coll().seqs() {
            for a in 0..seq.arity().saturating_sub(1) {
                let lhs = self
                    .map_at(&seq.swap(a))
                    .compose(&m.coll().action_gen(seq, a));
                let rhs = n.coll().action_gen(seq, a).compose(&self.map_at(seq));
                if !lhs.equal(&rhs) {
                    report.push("ibmap equivariance", format!("{seq} s_{a}"), "differs");
                }
            }
        }
        let mcap = m.coll().exact_max().min(n.coll().exact_max());
        let pseqs: Vec<CSeq> = p.coll().seqs().cloned().collect();
        let mseqs: Vec<CSeq> = m.coll().seqs().cloned().collect();
        for s1 in &pseqs {
            for s2 in &mseqs {
                for i in 0..s1.arity() {
                    if s1.inputs[i] != s2.output
                        || s1.arity() + s2.arity() > m.max_arity() + 1
                    {
                        continue;
                    }
                    let res = s1.substitute(i, s2);
                    if res.arity() > mcap {
                        continue;
                    }
                    for dmu in p.level(s1).degrees() {
                        for bmu in 0..p.level(s1).dim(dmu) {
                            let mu = (dmu, vec![(bmu, field.one())]);
                            for dx in m.level(s2).degrees() {
                                for bx in 0..m.level(s2).dim(dx) {
                                    let x = (dx, vec![(bx, field.one())]);
                                    let lhs = self.apply(&res, &m.left_vec(s1, &mu, i, s2, &x));
                                    let rhs =
                                        n.left_vec(s1, &mu, i, s2, &self.apply(s2, &x));
                                    if lhs.1 != rhs.1 {
                                        report.push(
                                            "ibmap left",
                                            format!("({s1},{s2},{i};{bmu},{bx})"),
                                            "differs",
                                        );
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        for s1 in &mseqs {
            for s2 in &pseqs {
                for j in 0..s1.arity() {
                    if s1.inputs[j] != s2.output
                        || s1.arity() + s2.arity() > m.max_arity() + 1
                    {
                        continue;
                    }
                    let res = s1.substitute(j, s2);
                    if res.arity() > mcap {
                        continue;
                    }
                    for dx in m.level(s1).degrees() {
                        for bx in 0..m.level(s1).dim(dx) {
                            let x = (dx, vec![(bx, field.one())]);
                            for dnu in p.level(s2).degrees() {
                                for bnu in 0..p.level(s2).dim(dnu) {
                                    let nu = (dnu, vec![(bnu, field.one())]);
                                    let lhs =
                                        self.apply(&res, &m.right_vec(s1, &x, j, s2, &nu));
                                    let rhs =
                                        n.right_vec(s1, &self.apply(s1, &x), j, s2, &nu);
                                    if lhs.1 != rhs.1 {
                                        report.push(
                                            "ibmap right",
                                            format!("({s1},{s2},{j};{bx},{bnu})"),
                                            "differs",
                                        );
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        report
    }
}

/// Basis of the space of strict degree-0 bimodule maps M -> N: collection
/// maps commuting with differentials, symmetric actions, and both the
/// left and right actions. Found by one exact kernel computation.
pub fn hom_ib(m: &IBimod, n: &IBimod) -> Result<Vec<CollMapBasis>> {
    let mut sys = MapSystem::new(m.coll(), n.coll(), 0)?;
    sys.add_chain_rows();
    sys.add_equivariance_rows();
    // compatibility instances landing beyond the exact range of either
    // module would compare incomplete data
    let mcap = m.coll().exact_max().min(n.coll().exact_max());
    add_left_rows(&mut sys, m, n, mcap);
    add_right_rows(&mut sys, m, n, mcap);
    Ok(sys.solve())
}

fn add_left_rows(sys: &mut MapSystem<'_>, m: &IBimod, n: &IBimod, mcap: usize) {
    let p = m.operad();
    let field = m.field();
    let pseqs: Vec<CSeq> = p.coll().seqs().cloned().collect();
    let mseqs: Vec<CSeq> = m.coll().seqs().cloned().collect();
    for s1 in &pseqs {
        for s2 in &mseqs {
            for i in 0..s1.arity() {
                if s1.inputs[i] != s2.output || s1.arity() + s2.arity() > m.max_arity() + 1 {
                    continue;
                }
                let res = s1.substitute(i, s2);
                if res.arity() > mcap {
                    continue;
                }
                let tgt_res = n.level(&res);
                for dmu in p.level(s1).degrees() {
                    for bmu in 0..p.level(s1).dim(dmu) {
                        let mu = (dmu, vec![(bmu, field.one())]);
                        for dx in m.level(s2).degrees() {
                            for bx in 0..m.level(s2).dim(dx) {
                                let x = (dx, vec![(bx, field.one())]);
                                // f(μ∘x) - μ∘f(x) = 0
                                let lhs = m.left_vec(s1, &mu, i, s2, &x);
                                for jt in 0..tgt_res.dim(dmu + dx) {
                                    let mut row = Vec::new();
                                    for (t, c) in &lhs.1 {
                                        if let Some(v) = sys.var(&res, lhs.0, *t, jt) {
                                            row.push((v, c.clone()));
                                        }
                                    }
                                    for u in 0..n.level(s2).dim(dx) {
                                        let img = n.left_vec(
                                            s1,
                                            &mu,
                                            i,
                                            s2,
                                            &(dx, vec![(u, field.one())]),
                                        );
                                        let coeff = img
                                            .1
                                            .iter()
                                            .find(|(t, _)| *t == jt)
                                            .map(|(_, c)| c.clone());
                                        if let Some(c) = coeff {
                                            if let Some(v) = sys.var(s2, dx, bx, u) {
                                                row.push((v, -&c));
                                            }
                                        }
                                    }
                                    sys.push_row(row);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn add_right_rows(sys: &mut MapSystem<'_>, m: &IBimod, n: &IBimod, mcap: usize) {
    let p = m.operad();
    let field = m.field();
    let pseqs: Vec<CSeq> = p.coll().seqs().cloned().collect();
    let mseqs: Vec<CSeq> = m.coll().seqs().cloned().collect();
    for s1 in &mseqs {
        for s2 in &pseqs {
            for j in 0..s1.arity() {
                if s1.inputs[j] != s2.output || s1.arity() + s2.arity() > m.max_arity() + 1 {
                    continue;
                }
                let res = s1.substitute(j, s2);
                if res.arity() > mcap {
                    continue;
                }
                let tgt_res = n.level(&res);
                for dx in m.level(s1).degrees() {
                    for bx in 0..m.level(s1).dim(dx) {
                        let x = (dx, vec![(bx, field.one())]);
                        for dnu in p.level(s2).degrees() {
                            for bnu in 0..p.level(s2).dim(dnu) {
                                let nu = (dnu, vec![(bnu, field.one())]);
                                let lhs = m.right_vec(s1, &x, j, s2, &nu);
                                for jt in 0..tgt_res.dim(dx + dnu) {
                                    let mut row = Vec::new();
                                    for (t, c) in &lhs.1 {
                                        if let Some(v) = sys.var(&res, lhs.0, *t, jt) {
                                            row.push((v, c.clone()));
                                        }
                                    }
                                    for u in 0..n.level(s1).dim(dx) {
                                        let img = n.right_vec(
                                            s1,
                                            &(dx, vec![(u, field.one())]),
                                            j,
                                            s2,
                                            &nu,
                                        );
                                        let coeff = img
                                            .1
                                            .iter()
                                            .find(|(t, _)| *t == jt)
                                            .map(|(_, c)| c.clone());
                                        if let Some(c) = coeff {
                                            if let Some(v) = sys.var(s1, dx, bx, u) {
                                                row.push((v, -&c));
                                            }
                                        }
                                    }
                                    sys.push_row(row);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// One tangent structure: coordinates of ε_c in M(c;c)_0 per color.
pub type Tangent = Vec<(Color, usize, Scalar)>;

/// Basis of degree-0 cycle families (ε_c) with
/// ε_c ∘^r μ = Σ_i μ ∘^{iℓ} ε_{c_i} for every basis operation μ.
pub fn tangent_structures(p: &Operad, m: &IBimod) -> Result<Vec<Tangent>> {
    let field = p.field();
    let mut vars: BTreeMap<(Color, usize), usize> = BTreeMap::new();
    for c in p.colors().iter() {
        let lvl = m.level(&CSeq::new(vec![c], c));
        for i in 0..lvl.dim(0) {
            let k = vars.len();
            vars.insert((c, i), k);
        }
    }
    let mut rows: Vec<SparseVec> = Vec::new();
    let mut push = |row: Vec<(usize, Scalar)>| {
        let mut merged: SparseVec = Vec::new();
        for (k, v) in row {
            merged = crate::linalg::vec_add(&merged, &vec![(k, v)]);
        }
        if !merged.is_empty() {
            rows.push(merged);
        }
    };
    // cycles: d(ε_c) = 0
    for c in p.colors().iter() {
        let lvl = m.level(&CSeq::new(vec![c], c));
        let d0 = lvl.diff_at(0);
        for t in 0..lvl.dim(-1) {
            let mut row = Vec::new();
            for i in 0..lvl.dim(0) {
                let v = d0.entry(t, i);
                if !v.is_zero() {
                    row.push((vars[&(c, i)], v));
                }
            }
            push(row);
        }
    }
    // the corepresentation relation, one equation per target coordinate
    for s in p.coll().seqs() {
        if s.arity() + 1 > p.max_arity() + 1 {
            continue;
        }
        let c_out = s.output;
        let eps_seq = CSeq::new(vec![c_out], c_out);
        let plvl = p.level(s);
        for dmu in plvl.degrees() {
            for bmu in 0..plvl.dim(dmu) {
                let mu = (dmu, vec![(bmu, field.one())]);
                let tgt = m.level(s);
                for jt in 0..tgt.dim(dmu) {
                    let mut row = Vec::new();
                    // ε_c ∘^{0r} μ
                    for i in 0..m.level(&eps_seq).dim(0) {
                        let img = m.right_vec(
                            &eps_seq,
                            &(0, vec![(i, field.one())]),
                            0,
                            s,
                            &mu,
                        );
                        if let Some((_, cf)) = img.1.iter().find(|(t, _)| *t == jt) {
                            if let Some(&v) = vars.get(&(c_out, i)) {
                                row.push((v, cf.clone()));
                            }
                        }
                    }
                    // -Σ_i μ ∘^{iℓ} ε_{c_i}
                    for (slot, &ci) in s.inputs.iter().enumerate() {
                        let eseq = CSeq::new(vec![ci], ci);
                        for u in 0..m.level(&eseq).dim(0) {
                            let img = m.left_vec(
                                s,
                                &mu,
                                slot,
                                &eseq,
                                &(0, vec![(u, field.one())]),
                            );
                            if let Some((_, cf)) = img.1.iter().find(|(t, _)| *t == jt) {
                                if let Some(&v) = vars.get(&(ci, u)) {
                                    row.push((v, -cf));
                                }
                            }
                        }
                    }
                    push(row);
                }
            }
        }
    }
    let mat = SparseMat::from_triplets(
        rows.len(),
        vars.len(),
        field,
        rows.iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().map(move |(c, v)| (r, *c, v.clone()))),
    );
    let inv: BTreeMap<usize, (Color, usize)> = vars.into_iter().map(|(k, v)| (v, k)).collect();
    Ok(mat
        .kernel_basis()
        .into_iter()
        .map(|v| {
            v.into_iter()
                .map(|(k, c)| {
                    let (col, i) = inv[&k];
                    (col, i, c)
                })
                .collect()
        })
        .collect())
}

/// Basis of degree-r derivations P -> M: equivariant chain maps of the
/// stated degree satisfying the Koszul-signed Leibniz rule
/// θ(μ∘ν) = θ(μ)∘ν + (-1)^{r|μ|} μ∘θ(ν) on admissible composites.
pub fn derivation_space(p: &Operad, m: &IBimod, degree: i64) -> Result<Vec<CollMapBasis>> {
    let mut sys = MapSystem::new(p.coll(), m.coll(), degree)?;
    sys.add_chain_rows();
    sys.add_equivariance_rows();
    let field = p.field();
    let seqs: Vec<CSeq> = p.coll().seqs().cloned().collect();
    for s1 in &seqs {
        for s2 in &seqs {
            for i in 0..s1.arity() {
                if !p.admissible(s1, s2, i) {
                    continue;
                }
                let res = s1.substitute(i, s2);
                if res.arity() > p.max_arity() {
                    continue;
                }
                let tgt_res = m.level(&res);
                for d1 in p.level(s1).degrees() {
                    for b1 in 0..p.level(s1).dim(d1) {
                        let mu = (d1, vec![(b1, field.one())]);
                        for d2 in p.level(s2).degrees() {
                            for b2 in 0..p.level(s2).dim(d2) {
                                let nu = (d2, vec![(b2, field.one())]);
                                let comp = p.compose_vec(s1, &mu, i, s2, &nu);
                                for jt in 0..tgt_res.dim(d1 + d2 + degree) {
                                    let mut row = Vec::new();
                                    // θ(μ∘ν)
                                    for (t, c) in &comp.1 {
                                        if let Some(v) = sys.var(&res, comp.0, *t, jt) {
                                            row.push((v, c.clone()));
                                        }
                                    }
                                    // -θ(μ)∘^{ir}ν
                                    for u in 0..m.level(s1).dim(d1 + degree) {
                                        let img = m.right_vec(
                                            s1,
                                            &(d1 + degree, vec![(u, field.one())]),
                                            i,
                                            s2,
                                            &nu,
                                        );
                                        if let Some((_, c)) =
                                            img.1.iter().find(|(t, _)| *t == jt)
                                        {
                                            if let Some(v) = sys.var(s1, d1, b1, u) {
                                                row.push((v, -c));
                                            }
                                        }
                                    }
                                    // -(-1)^{r·|μ|} μ∘^{iℓ}θ(ν)
                                    let sgn = if (degree * d1).rem_euclid(2) == 1 {
                                        field.one()
                                    } else {
                                        field.from_i64(-1)
                                    };
                                    for u in 0..m.level(s2).dim(d2 + degree) {
                                        let img = m.left_vec(
                                            s1,
                                            &mu,
                                            i,
                                            s2,
                                            &(d2 + degree, vec![(u, field.one())]),
                                        );
                                        if let Some((_, c)) =
                                            img.1.iter().find(|(t, _)| *t == jt)
                                        {
                                            if let Some(v) = sys.var(s2, d2, b2, u) {
                                                row.push((v, &sgn * c));
                                            }
                                        }
                                    }
                                    sys.push_row(row);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(sys.solve())
}

/// The square-zero extension P ⋉ M: levelwise sum with composition
/// (μ,p)∘(ν,q) = (μ∘ν, μ∘^{iℓ}q + p∘^{ir}ν).
pub fn square_zero(p: &Operad, m: &IBimod) -> Result<Operad> {
    let field = p.field();
    let coll = Collection::direct_sum(&[p.coll(), m.coll()])?;
    let mut units = BTreeMap::new();
    for c in p.colors().iter() {
        // the P-part precedes the M-part at every degree
        units.insert(c, p.unit_vec(c));
    }
    let mut comps = BTreeMap::new();
    let seqs: Vec<CSeq> = coll.seqs().cloned().collect();
    for s1 in &seqs {
        for s2 in &seqs {
            for i in 0..s1.arity() {
                if s1.inputs[i] != s2.output || s1.arity() + s2.arity() > coll.max_arity() + 1
                {
                    continue;
                }
                let res = s1.substitute(i, s2);
                let l1 = coll.level(s1);
                let l2 = coll.level(s2);
                let ts = TensorSpace::new(&[&l1, &l2], field);
                let mut mb = MapBuilder::new(ts.complex.clone(), coll.level(&res), 0);
                for nn in ts.complex.degrees() {
                    for (col, (degs, idxs)) in ts.tuples(nn).iter().enumerate() {
                        let p1 = p.level(s1).dim(degs[0]);
                        let p2 = p.level(s2).dim(degs[1]);
                        let in_p1 = idxs[0] < p1;
                        let in_p2 = idxs[1] < p2;
                        let poff = p.level(&res).dim(nn);
                        match (in_p1, in_p2) {
                            (true, true) => {
                                let img = p.compose_vec(
                                    s1,
                                    &(degs[0], vec![(idxs[0], field.one())]),
                                    i,
                                    s2,
                                    &(degs[1], vec![(idxs[1], field.one())]),
                                );
                                for (t, v) in img.1 {
                                    mb.add(nn, col, t, v);
                                }
                            }
                            (true, false) => {
                                let img = m.left_vec(
                                    s1,
                                    &(degs[0], vec![(idxs[0], field.one())]),
                                    i,
                                    s2,
                                    &(degs[1], vec![(idxs[1] - p2, field.one())]),
                                );
                                for (t, v) in img.1 {
                                    mb.add(nn, col, t + poff, v);
                                }
                            }
                            (false, true) => {
                                let img = m.right_vec(
                                    s1,
                                    &(degs[0], vec![(idxs[0] - p1, field.one())]),
                                    i,
                                    s2,
                                    &(degs[1], vec![(idxs[1], field.one())]),
                                );
                                for (t, v) in img.1 {
                                    mb.add(nn, col, t + poff, v);
                                }
                            }
                            (false, false) => {}
                        }
                    }
                }
                comps.insert((s1.clone(), s2.clone(), i), mb.build()?);
            }
        }
    }
    Operad::from_parts(coll, units, comps).validated()
}

/// The projection P ⋉ M -> P, an operad map.
pub fn square_zero_projection(sq: &Operad, p: &Operad) -> Result<OperadMap> {
    let field = p.field();
    let mut maps = BTreeMap::new();
    for seq in sq.coll().seqs() {
        let src = sq.level(seq);
        let tgt = p.level(seq);
        let mut mb = MapBuilder::new(src.clone(), tgt.clone(), 0);
        for d in src.degrees() {
            for i in 0..tgt.dim(d) {
                mb.add(d, i, i, field.one());
            }
        }
        maps.insert(seq.clone(), mb.build()?);
    }
    let f = OperadMap {
        source: sq.clone(),
        target: p.clone(),
        color_map: p.colors().iter().collect(),
        maps,
    };
    let report = f.check();
    if report.ok() {
        Ok(f)
    } else {
        Err(Error::Axioms(report))
    }
}

/// The kernel of the square-zero projection, rebuilt from the extension's
/// own composition data. Recovers M up to relabelling.
pub fn square_zero_kernel(p: &Operad, m: &IBimod) -> Result<IBimod> {
    let sq = square_zero(p, m)?;
    let field = p.field();
    let mut levels = BTreeMap::new();
    let mut actions = BTreeMap::new();
    for seq in m.coll().seqs() {
        let mlvl = m.level(seq);
        let mut basis = BTreeMap::new();
        for d in mlvl.degrees() {
            let labs = (0..mlvl.dim(d))
                .map(|i| Label::tag("ker", Label::Int(i as i64)))
                .collect();
            basis.insert(d, labs);
        }
        let mut diff = BTreeMap::new();
        for d in mlvl.degrees() {
            let dd = mlvl.diff_at(d);
            if !dd.is_zero() {
                diff.insert(d, dd);
            }
        }
        levels.insert(seq.clone(), ChainComplex::new(field, basis, diff)?);
    }
    for (seq, lvl) in &levels {
        for a in 0..seq.arity().saturating_sub(1) {
            // extract the M-block of the extension's action
            let sq_act = sq.coll().action_gen(seq, a);
            let tseq = seq.swap(a);
            let tgt = levels
                .get(&tseq)
                .cloned()
                .unwrap_or_else(|| ChainComplex::zero(field));
            let mut mb = MapBuilder::new(lvl.clone(), tgt.clone(), 0);
            for d in lvl.degrees() {
                let po_src = p.level(seq).dim(d);
                let po_tgt = p.level(&tseq).dim(d);
                let mat = sq_act.component(d);
                for i in 0..lvl.dim(d) {
                    for (t, v) in mat.transpose().row(po_src + i) {
                        assert!(*t >= po_tgt, "projection kernel is action-stable");
                        mb.add(d, i, t - po_tgt, v.clone());
                    }
                }
            }
            actions.insert((seq.clone(), a), mb.build()?);
        }
    }
    let coll = Collection::new(
        p.colors().clone(),
        field,
        m.max_arity(),
        levels,
        actions,
        m.coll().truncated(),
    )?;
    let mut left = BTreeMap::new();
    let mut right = BTreeMap::new();
    let pseqs: Vec<CSeq> = p.coll().seqs().cloned().collect();
    let mseqs: Vec<CSeq> = coll.seqs().cloned().collect();
    for s1 in &pseqs {
        for s2 in &mseqs {
            for i in 0..s1.arity() {
                if s1.inputs[i] != s2.output || s1.arity() + s2.arity() > coll.max_arity() + 1
                {
                    continue;
                }
                let res = s1.substitute(i, s2);
                let l1 = p.level(s1);
                let l2 = coll.level(s2);
                let ts = TensorSpace::new(&[&l1, &l2], field);
                let mut mb = MapBuilder::new(ts.complex.clone(), coll.level(&res), 0);
                for nn in ts.complex.degrees() {
                    for (col, (degs, idxs)) in ts.tuples(nn).iter().enumerate() {
                        // (μ, 0) ∘ (0, q) inside the extension
                        let x = (degs[0], vec![(idxs[0], field.one())]);
                        let p2 = p.level(s2).dim(degs[1]);
                        let y = (degs[1], vec![(idxs[1] + p2, field.one())]);
                        let img = sq.compose_vec(s1, &x, i, s2, &y);
                        let poff = p.level(&res).dim(nn);
                        for (t, v) in img.1 {
                            assert!(t >= poff, "kernel stability");
                            mb.add(nn, col, t - poff, v);
                        }
                    }
                }
                left.insert((s1.clone(), s2.clone(), i), mb.build()?);
            }
        }
    }
    for s1 in &mseqs {
        for s2 in &pseqs {
            for j in 0..s1.arity() {
                if s1.inputs[j] != s2.output || s1.arity() + s2.arity() > coll.max_arity() + 1
                {
                    continue;
                }
                let res = s1.substitute(j, s2);
                let l1 = coll.level(s1);
                let l2 = p.level(s2);
                let ts = TensorSpace::new(&[&l1, &l2], field);
                let mut mb = MapBuilder::new(ts.complex.clone(), coll.level(&res), 0);
                for nn in ts.complex.degrees() {
                    for (col, (degs, idxs)) in ts.tuples(nn).iter().enumerate() {
                        let p1 = p.level(s1).dim(degs[0]);
                        let x = (degs[0], vec![(idxs[0] + p1, field.one())]);
                        let y = (degs[1], vec![(idxs[1], field.one())]);
                        let img = sq.compose_vec(s1, &x, j, s2, &y);
                        let poff = p.level(&res).dim(nn);
                        for (t, v) in img.1 {
                            assert!(t >= poff, "kernel stability");
                            mb.add(nn, col, t - poff, v);
                        }
                    }
                }
                right.insert((s1.clone(), s2.clone(), j), mb.build()?);
            }
        }
    }
    Ok(IBimod::from_parts(p.clone(), coll, left, right))
}

/// The equivariance checker shared with check_ibmod, re-exported for maps
/// built outside this module.
pub fn check_action_equivariance(
    report: &mut AxiomReport,
    tag: &str,
    c1: &Collection,
    c2: &Collection,
    cres: &Collection,
    s1: &CSeq,
    s2: &CSeq,
    i: usize,
    f: &ChainMap,
    lookup: impl Fn(&CSeq, &CSeq, usize) -> ChainMap,
) {
    check_bilinear_equivariance(report, tag, c1, c2, cres, s1, s2, i, f, lookup);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collection::collection_hom;
    use crate::field::FieldSpec;
    use crate::ibmod::{check_ibmod, cotangent_ib, free_ib, self_ib};
    use crate::operad::{preset, Preset};

    fn q() -> FieldSpec {
        FieldSpec::Rationals
    }

    #[test]
    fn hom_self_contains_identity() {
        let com = preset(Preset::Com, q(), 4).unwrap();
        let m = self_ib(&com);
        let homs = hom_ib(&m, &m).unwrap();
        assert_eq!(homs.len(), 1);
    }

    #[test]
    fn hom_from_cotangent_counts_tangents() {
        // Hom(L̄_P, M) and Tan_P(M) have the same dimension
        for (pr, n) in [(Preset::Com, 4usize), (Preset::Ass, 3), (Preset::Nilpotent(2), 3)] {
            let p = preset(pr.clone(), q(), n).unwrap();
            let l = cotangent_ib(&p).unwrap();
            let m = self_ib(&p);
            let homs = hom_ib(&l, &m).unwrap();
            let tans = tangent_structures(&p, &m).unwrap();
            assert_eq!(homs.len(), tans.len(), "ceiling {n}");
        }
    }

    #[test]
    fn tangent_of_com_self_vanishes() {
        // the nullary relation ε ∘ μ_0 = (empty sum) forces ε = 0
        let com = preset(Preset::Com, q(), 4).unwrap();
        let m = self_ib(&com);
        assert!(tangent_structures(&com, &m).unwrap().is_empty());
        let homs = hom_ib(&cotangent_ib(&com).unwrap(), &m).unwrap();
        assert!(homs.is_empty());
    }

    #[test]
    fn tangent_of_unit_operad_is_diagonal_cycles() {
        let i = preset(Preset::I, q(), 3).unwrap();
        let m = self_ib(&i);
        let tans = tangent_structures(&i, &m).unwrap();
        assert_eq!(tans.len(), 1);
    }

    #[test]
    fn free_forgetful_adjunction_dims() {
        // Hom_ib(Free(M), N) has the dimension of strict collection maps
        // M -> N
        let com = preset(Preset::Com, q(), 3).unwrap();
        let e = Collection::unit_e(com.colors().clone(), q(), 3);
        let f = free_ib(&com, &e).unwrap();
        let n = self_ib(&com);
        let lhs = hom_ib(&f.ib, &n).unwrap().len();
        let rhs = collection_hom(&e, n.coll()).unwrap().len();
        assert_eq!(lhs, rhs);
        assert_eq!(lhs, 1);
    }

    #[test]
    fn derivations_of_com_are_arity_weighted() {
        // closed form: the solution space of c_{m+n-1} = c_m + c_n with
        // c_1 = 0 is one-dimensional, spanned by c_m = m - 1
        let com = preset(Preset::Com, q(), 5).unwrap();
        let m = self_ib(&com);
        let ders = derivation_space(&com, &m, 0).unwrap();
        assert_eq!(ders.len(), 1);
        let d = &ders[0];
        // entries (seq, 0, 0, 0, value): value proportional to arity-1
        let val = |arity: usize| -> Scalar {
            d.iter()
                .find(|(s, _, _, _, _)| s.arity() == arity)
                .map(|(_, _, _, _, v)| v.clone())
                .unwrap_or_else(|| q().zero())
        };
        let c2 = val(2);
        assert!(!c2.is_zero());
        for a in [0usize, 3, 4, 5] {
            let expect = &q().from_i64(a as i64 - 1) * &c2;
            assert_eq!(val(a), expect, "arity {a}");
        }
        assert!(val(1).is_zero());
    }

    #[test]
    fn derivations_of_unit_operad_vanish() {
        let i = preset(Preset::I, q(), 3).unwrap();
        let m = self_ib(&i);
        assert!(derivation_space(&i, &m, 0).unwrap().is_empty());
    }

    #[test]
    fn canonical_derivation_of_identity_map() {
        // d_id(λ) = (arity-1)·λ is a derivation for Ass too
        let ass = preset(Preset::Ass, q(), 3).unwrap();
        let m = self_ib(&ass);
        let ders = derivation_space(&ass, &m, 0).unwrap();
        assert_eq!(ders.len(), 1);
    }

    #[test]
    fn square_zero_passes_and_projects() {
        let com = preset(Preset::Com, q(), 3).unwrap();
        let m = self_ib(&com);
        let sq = square_zero(&com, &m).unwrap();
        for a in 0..=3usize {
            assert_eq!(sq.level(&CSeq::single(a)).dim(0), 2);
        }
        assert!(square_zero_projection(&sq, &com).is_ok());

        let nil = preset(Preset::Nilpotent(2), q(), 3).unwrap();
        assert!(square_zero(&nil, &self_ib(&nil)).is_ok());
    }

    #[test]
    fn square_zero_of_zero_module_is_base() {
        let com = preset(Preset::Com, q(), 3).unwrap();
        let zero = IBimod::from_parts(
            com.clone(),
            Collection::zero(com.colors().clone(), q(), 3),
            BTreeMap::new(),
            BTreeMap::new(),
        );
        let sq = square_zero(&com, &zero).unwrap();
        assert!(sq.coll().same_dims(com.coll()));
    }

    #[test]
    fn square_zero_kernel_recovers_module() {
        let com = preset(Preset::Com, q(), 3).unwrap();
        let m = self_ib(&com);
        let ker = square_zero_kernel(&com, &m).unwrap();
        assert!(ker.coll().same_dims(m.coll()));
        assert!(check_ibmod(&ker).ok());
        // same strict hom count against the cotangent object
        let l = cotangent_ib(&com).unwrap();
        assert_eq!(
            hom_ib(&l, &ker).unwrap().len(),
            hom_ib(&l, &m).unwrap().len()
        );
    }

    #[test]
    fn ibmap_identity_checks() {
        let com = preset(Preset::Com, q(), 3).unwrap();
        let m = self_ib(&com);
        let basis: CollMapBasis = m
            .coll()
            .seqs()
            .flat_map(|s| {
                let lvl = m.level(s);
                let mut v = Vec::new();
                for d in lvl.degrees() {
                    for i in 0..lvl.dim(d) {
                        v.push((s.clone(), d, i, i, q().one()));
                    }
                }
                v
            })
            .collect();
        let f = IbMap::from_basis(&m, &m, &basis).unwrap();
        assert!(f.check().ok());
    }
}
