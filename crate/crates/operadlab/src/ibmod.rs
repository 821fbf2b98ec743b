//! Infinitesimal P-bimodules: axioms, the free functor, the cotangent
//! object, tangent structures, derivations, and square-zero extensions.
//!
//! Sign conventions for the axioms follow from reading every identity as
//! an equation of operations on ordered tensor factors: rearranging two
//! graded factors costs (-1) to the product of their degrees. The
//! self-bimodule of an operad then satisfies the axioms verbatim.

use std::collections::BTreeMap;

use crate::chain::{tensor_maps, ChainComplex, ChainMap, MapBuilder, TensorSpace};
use crate::collection::{block_perm, CSeq, Collection, Color};
use crate::composite::{compose, inf_compose, ComposeShape, Composite, InfComposite, InfShape};
use crate::error::{Error, Result};
use crate::field::{FieldSpec, Scalar};
use crate::linalg::{vec_add, vec_scale, SparseVec};
use crate::operad::{compose_cached, AxiomReport, Operad, OperadMap};
use crate::perm::Perm;

/// An infinitesimal bimodule over a fixed operad.
#[derive(Debug, Clone)]
pub struct IBimod {
    operad: Operad,
    coll: Collection,
    /// μ ∘^{iℓ} m : P(s1) ⊗ M(s2) -> M(s1.substitute(i, s2))
    left: BTreeMap<(CSeq, CSeq, usize), ChainMap>,
    /// m ∘^{jr} ν : M(s1) ⊗ P(s2) -> M(s1.substitute(j, s2))
    right: BTreeMap<(CSeq, CSeq, usize), ChainMap>,
}

impl IBimod {
    pub fn from_parts(
        operad: Operad,
        coll: Collection,
        left: BTreeMap<(CSeq, CSeq, usize), ChainMap>,
        right: BTreeMap<(CSeq, CSeq, usize), ChainMap>,
    ) -> IBimod {
        IBimod {
            operad,
            coll,
            left,
            right,
        }
    }

    pub fn validated(self) -> Result<IBimod> {
        let report = check_ibmod(&self);
        if report.ok() {
            Ok(self)
        } else {
            Err(Error::Axioms(report))
        }
    }

    pub fn operad(&self) -> &Operad {
        &self.operad
    }

    pub fn coll(&self) -> &Collection {
        &self.coll
    }

    pub fn field(&self) -> FieldSpec {
        self.coll.field()
    }

    pub fn max_arity(&self) -> usize {
        self.coll.max_arity()
    }

    pub fn level(&self, seq: &CSeq) -> ChainComplex {
        self.coll.level(seq)
    }

    pub fn left_keys(&self) -> impl Iterator<Item = &(CSeq, CSeq, usize)> {
        self.left.keys()
    }

    pub fn right_keys(&self) -> impl Iterator<Item = &(CSeq, CSeq, usize)> {
        self.right.keys()
    }

    pub fn left_map(&self, s1: &CSeq, s2: &CSeq, i: usize) -> ChainMap {
        match self.left.get(&(s1.clone(), s2.clone(), i)) {
            Some(m) => m.clone(),
            None => {
                let l1 = self.operad.level(s1);
                let l2 = self.level(s2);
                let ts = TensorSpace::new(&[&l1, &l2], self.field());
                ChainMap::zero_map(ts.complex, self.level(&s1.substitute(i, s2)), 0)
            }
        }
    }

    pub fn right_map(&self, s1: &CSeq, s2: &CSeq, j: usize) -> ChainMap {
        match self.right.get(&(s1.clone(), s2.clone(), j)) {
            Some(m) => m.clone(),
            None => {
                let l1 = self.level(s1);
                let l2 = self.operad.level(s2);
                let ts = TensorSpace::new(&[&l1, &l2], self.field());
                ChainMap::zero_map(ts.complex, self.level(&s1.substitute(j, s2)), 0)
            }
        }
    }

    /// μ ∘^{iℓ} m, pointwise.
    pub fn left_vec(
        &self,
        s1: &CSeq,
        mu: &(i64, SparseVec),
        i: usize,
        s2: &CSeq,
        m: &(i64, SparseVec),
    ) -> (i64, SparseVec) {
        let l1 = self.operad.level(s1);
        let l2 = self.level(s2);
        let ts = TensorSpace::new(&[&l1, &l2], self.field());
        compose_cached(&ts, &self.left_map(s1, s2, i), mu, m)
    }

    /// m ∘^{jr} ν, pointwise.
    pub fn right_vec(
        &self,
        s1: &CSeq,
        m: &(i64, SparseVec),
        j: usize,
        s2: &CSeq,
        nu: &(i64, SparseVec),
    ) -> (i64, SparseVec) {
        let l1 = self.level(s1);
        let l2 = self.operad.level(s2);
        let ts = TensorSpace::new(&[&l1, &l2], self.field());
        compose_cached(&ts, &self.right_map(s1, s2, j), m, nu)
    }

    pub fn direct_sum(parts: &[&IBimod]) -> Result<IBimod> {
        assert!(!parts.is_empty());
        let operad = parts[0].operad.clone();
        let colls: Vec<&Collection> = parts.iter().map(|p| &p.coll).collect();
        let coll = Collection::direct_sum(&colls)?;
        let field = operad.field();
        let mut left = BTreeMap::new();
        let mut right = BTreeMap::new();
        let pseqs: Vec<CSeq> = operad.coll().seqs().cloned().collect();
        let mseqs: Vec<CSeq> = coll.seqs().cloned().collect();
        for s1 in &pseqs {
            for s2 in &mseqs {
                for i in 0..s1.arity() {
                    if s1.inputs[i] != s2.output
                        || s1.arity() + s2.arity() > coll.max_arity() + 1
                    {
                        continue;
                    }
                    let l1 = operad.level(s1);
                    let lsum = coll.level(s2);
                    let ts = TensorSpace::new(&[&l1, &lsum], field);
                    let res = s1.substitute(i, s2);
                    let mut mb = MapBuilder::new(ts.complex.clone(), coll.level(&res), 0);
                    for n in ts.complex.degrees() {
                        for (col, (degs, idxs)) in ts.tuples(n).iter().enumerate() {
                            let (k, local) = locate_summand(parts, s2, degs[1], idxs[1]);
                            let part = parts[k];
                            let img = part.left_vec(
                                s1,
                                &(degs[0], vec![(idxs[0], field.one())]),
                                i,
                                s2,
                                &(degs[1], vec![(local, field.one())]),
                            );
                            let off: usize = parts[..k]
                                .iter()
                                .map(|p| p.level(&res).dim(img.0))
                                .sum();
                            for (t, v) in img.1 {
                                mb.add(n, col, t + off, v);
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
                    if s1.inputs[j] != s2.output
                        || s1.arity() + s2.arity() > coll.max_arity() + 1
                    {
                        continue;
                    }
                    let lsum = coll.level(s1);
                    let l2 = operad.level(s2);
                    let ts = TensorSpace::new(&[&lsum, &l2], field);
                    let res = s1.substitute(j, s2);
                    let mut mb = MapBuilder::new(ts.complex.clone(), coll.level(&res), 0);
                    for n in ts.complex.degrees() {
                        for (col, (degs, idxs)) in ts.tuples(n).iter().enumerate() {
                            let (k, local) = locate_summand(parts, s1, degs[0], idxs[0]);
                            let part = parts[k];
                            let img = part.right_vec(
                                s1,
                                &(degs[0], vec![(local, field.one())]),
                                j,
                                s2,
                                &(degs[1], vec![(idxs[1], field.one())]),
                            );
                            let off: usize = parts[..k]
                                .iter()
                                .map(|p| p.level(&res).dim(img.0))
                                .sum();
                            for (t, v) in img.1 {
                                mb.add(n, col, t + off, v);
                            }
                        }
                    }
                    right.insert((s1.clone(), s2.clone(), j), mb.build()?);
                }
            }
        }
        Ok(IBimod::from_parts(operad, coll, left, right))
    }

    /// Shift every level by n: M[n] = k[n] ⊗ M. The left action gains
    /// (-1)^{n·|μ|} from moving μ past k[n]; the right action is reused.
    pub fn shift(&self, n: i64) -> Result<IBimod> {
        let coll = self.coll.shift(n);
        let field = self.field();
        let mut left = BTreeMap::new();
        for ((s1, s2, i), f) in &self.left {
            let l1 = self.operad.level(s1);
            let l2s = coll.level(s2);
            let ts = TensorSpace::new(&[&l1, &l2s], field);
            let res = s1.substitute(*i, s2);
            let old_l2 = self.level(s2);
            let old_ts = TensorSpace::new(&[&l1, &old_l2], field);
            let mut mb = MapBuilder::new(ts.complex.clone(), coll.level(&res), 0);
            for nn in ts.complex.degrees() {
                for (col, (degs, idxs)) in ts.tuples(nn).iter().enumerate() {
                    let old_degs = vec![degs[0], degs[1] - n];
                    let (od, opos) = old_ts.position(&old_degs, idxs);
                    let img = f.component(od).transpose().row(opos).clone();
                    let sign = if (n * degs[0]).rem_euclid(2) == 1 {
                        field.from_i64(-1)
                    } else {
                        field.one()
                    };
                    for (t, v) in img {
                        mb.add(nn, col, t, &sign * &v);
                    }
                }
            }
            left.insert((s1.clone(), s2.clone(), *i), mb.build()?);
        }
        let mut right = BTreeMap::new();
        for ((s1, s2, j), f) in &self.right {
            let l1s = coll.level(s1);
            let l2 = self.operad.level(s2);
            let ts = TensorSpace::new(&[&l1s, &l2], field);
            let old_l1 = self.level(s1);
            let old_ts = TensorSpace::new(&[&old_l1, &l2], field);
            let res = s1.substitute(*j, s2);
            let mut mb = MapBuilder::new(ts.complex.clone(), coll.level(&res), 0);
            for nn in ts.complex.degrees() {
                for (col, (degs, idxs)) in ts.tuples(nn).iter().enumerate() {
                    let old_degs = vec![degs[0] - n, degs[1]];
                    let (od, opos) = old_ts.position(&old_degs, idxs);
                    let img = f.component(od).transpose().row(opos).clone();
                    for (t, v) in img {
                        mb.add(nn, col, t, v);
                    }
                }
            }
            right.insert((s1.clone(), s2.clone(), *j), mb.build()?);
        }
        Ok(IBimod::from_parts(self.operad.clone(), coll, left, right))
    }
}

fn locate_summand(parts: &[&IBimod], seq: &CSeq, deg: i64, idx: usize) -> (usize, usize) {
    let mut off = 0usize;
    for (k, p) in parts.iter().enumerate() {
        let d = p.level(seq).dim(deg);
        if idx < off + d {
            return (k, idx - off);
        }
        off += d;
    }
    panic!("index outside direct sum");
}

fn basis_of(c: &ChainComplex) -> Vec<(i64, usize)> {
    let mut v = Vec::new();
    for d in c.degrees() {
        for i in 0..c.dim(d) {
            v.push((d, i));
        }
    }
    v
}

/// Verify all infinitesimal-bimodule axioms on admissible composites.
///
/// Multi-step axioms quantify over instances whose intermediate levels
/// carry complete data: when the module is flagged truncated, its top
/// arity may hide dropped composite terms, so module levels in chained
/// checks are capped one below the ceiling.
pub fn check_ibmod(m: &IBimod) -> AxiomReport {
    let mut report = m.coll.check();
    let p = &m.operad;
    let field = m.field();
    let ceiling = m.max_arity();
    let mcap = m.coll.exact_max();
    let pseqs: Vec<CSeq> = p.coll().seqs().cloned().collect();
    let mseqs: Vec<CSeq> = m.coll.seqs().cloned().collect();

    // left unit: id ∘^{0ℓ} x = x ; right unit: x ∘^{jr} id = x
    for s in &mseqs {
        let lvl = m.level(s);
        let c = s.output;
        let unit_seq = CSeq::new(vec![c], c);
        for (d, i) in basis_of(&lvl) {
            let x = (d, vec![(i, field.one())]);
            let lhs = m.left_vec(&unit_seq, &(0, p.unit_vec(c)), 0, s, &x);
            if lhs.1 != x.1 {
                report.push("ib left unit", format!("{s} deg {d} basis {i}"), "differs");
            }
            for j in 0..s.arity() {
                let cj = s.inputs[j];
                let useq = CSeq::new(vec![cj], cj);
                let r = m.right_vec(s, &x, j, &useq, &(0, p.unit_vec(cj)));
                if r.1 != x.1 {
                    report.push(
                        "ib right unit",
                        format!("{s} deg {d} basis {i} slot {j}"),
                        "differs",
                    );
                }
            }
        }
    }

    // left associativity
    for s1 in &pseqs {
        for s2 in &pseqs {
            for i in 0..s1.arity() {
                if s1.inputs[i] != s2.output || s1.arity() + s2.arity() > ceiling + 1 {
                    continue;
                }
                let s12 = s1.substitute(i, s2);
                for s3 in &mseqs {
                    for j in 0..s2.arity() {
                        if s2.inputs[j] != s3.output {
                            continue;
                        }
                        let s23 = s2.substitute(j, s3);
                        if s3.arity() > mcap
                            || s23.arity() > mcap
                            || s12.substitute(i + j, s3).arity() > mcap
                        {
                            continue;
                        }
                        for (d1, b1) in basis_of(&p.level(s1)) {
                            for (d2, b2) in basis_of(&p.level(s2)) {
                                for (d3, b3) in basis_of(&m.level(s3)) {
                                    let x = (d1, vec![(b1, field.one())]);
                                    let y = (d2, vec![(b2, field.one())]);
                                    let z = (d3, vec![(b3, field.one())]);
                                    let xy = p.compose_vec(s1, &x, i, s2, &y);
                                    let lhs = m.left_vec(&s12, &xy, i + j, s3, &z);
                                    let yz = m.left_vec(s2, &y, j, s3, &z);
                                    let rhs = m.left_vec(s1, &x, i, &s23, &yz);
                                    if lhs.1 != rhs.1 {
                                        report.push(
                                            "ib left assoc",
                                            format!("({s1},{s2},{s3};{i},{j};{b1},{b2},{b3})"),
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
    }

    // right module axioms: nested and parallel
    for s1 in &mseqs {
        for s2 in &pseqs {
            for j in 0..s1.arity() {
                if s1.inputs[j] != s2.output || s1.arity() > mcap {
                    continue;
                }
                let s12 = s1.substitute(j, s2);
                if s12.arity() > mcap {
                    continue;
                }
                for s3 in &pseqs {
                    for i in 0..s2.arity() {
                        if s2.inputs[i] != s3.output {
                            continue;
                        }
                        if s2.substitute(i, s3).arity() > ceiling
                            || s12.substitute(j + i, s3).arity() > mcap
                        {
                            continue;
                        }
                        for (d1, b1) in basis_of(&m.level(s1)) {
                            for (d2, b2) in basis_of(&p.level(s2)) {
                                for (d3, b3) in basis_of(&p.level(s3)) {
                                    let x = (d1, vec![(b1, field.one())]);
                                    let y = (d2, vec![(b2, field.one())]);
                                    let z = (d3, vec![(b3, field.one())]);
                                    let xy = m.right_vec(s1, &x, j, s2, &y);
                                    let lhs = m.right_vec(&s12, &xy, j + i, s3, &z);
                                    let yz = p.compose_vec(s2, &y, i, s3, &z);
                                    let rhs =
                                        m.right_vec(s1, &x, j, &s2.substitute(i, s3), &yz);
                                    if lhs.1 != rhs.1 {
                                        report.push(
                                            "ib right assoc",
                                            format!("({s1},{s2},{s3};{j},{i};{b1},{b2},{b3})"),
                                            "differs",
                                        );
                                    }
                                }
                            }
                        }
                    }
                    for jp in (j + 1)..s1.arity() {
                        if s1.inputs[jp] != s3.output {
                            continue;
                        }
                        if s12.substitute(jp + s2.arity() - 1, s3).arity() > mcap
                            || s1.substitute(jp, s3).arity() > mcap
                        {
                            continue;
                        }
                        for (d1, b1) in basis_of(&m.level(s1)) {
                            for (d2, b2) in basis_of(&p.level(s2)) {
                                for (d3, b3) in basis_of(&p.level(s3)) {
                                    let x = (d1, vec![(b1, field.one())]);
                                    let y = (d2, vec![(b2, field.one())]);
                                    let z = (d3, vec![(b3, field.one())]);
                                    let xy = m.right_vec(s1, &x, j, s2, &y);
                                    let lhs =
                                        m.right_vec(&s12, &xy, jp + s2.arity() - 1, s3, &z);
                                    let xz = m.right_vec(s1, &x, jp, s3, &z);
                                    let rhs0 =
                                        m.right_vec(&s1.substitute(jp, s3), &xz, j, s2, &y);
                                    let sign = if (d2 * d3).rem_euclid(2) == 1 {
                                        field.from_i64(-1)
                                    } else {
                                        field.one()
                                    };
                                    if lhs.1 != vec_scale(&rhs0.1, &sign) {
                                        report.push(
                                            "ib right parallel",
                                            format!("({s1},{s2},{s3};{j},{jp};{b1},{b2},{b3})"),
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
    }

    // compatibility of left and right actions
    for s1 in &pseqs {
        for s2 in &mseqs {
            for i in 0..s1.arity() {
                if s1.inputs[i] != s2.output || s2.arity() > mcap {
                    continue;
                }
                let s12 = s1.substitute(i, s2);
                if s12.arity() > mcap {
                    continue;
                }
                for s3 in &pseqs {
                    for jm in 0..s2.arity() {
                        if s2.inputs[jm] != s3.output {
                            continue;
                        }
                        if s2.substitute(jm, s3).arity() > mcap
                            || s12.substitute(i + jm, s3).arity() > mcap
                        {
                            continue;
                        }
                        for (d1, b1) in basis_of(&p.level(s1)) {
                            for (d2, b2) in basis_of(&m.level(s2)) {
                                for (d3, b3) in basis_of(&p.level(s3)) {
                                    let x = (d1, vec![(b1, field.one())]);
                                    let y = (d2, vec![(b2, field.one())]);
                                    let z = (d3, vec![(b3, field.one())]);
                                    let xy = m.left_vec(s1, &x, i, s2, &y);
                                    let lhs = m.right_vec(&s12, &xy, i + jm, s3, &z);
                                    let yz = m.right_vec(s2, &y, jm, s3, &z);
                                    let rhs =
                                        m.left_vec(s1, &x, i, &s2.substitute(jm, s3), &yz);
                                    if lhs.1 != rhs.1 {
                                        report.push(
                                            "ib compat inner",
                                            format!("({s1},{s2},{s3};{i},{jm};{b1},{b2},{b3})"),
                                            "differs",
                                        );
                                    }
                                }
                            }
                        }
                    }
                    for jp in 0..s1.arity() {
                        if jp == i || s1.inputs[jp] != s3.output {
                            continue;
                        }
                        let s13 = s1.substitute(jp, s3);
                        if s13.arity() > ceiling {
                            continue;
                        }
                        let jres = if jp < i { jp } else { jp + s2.arity() - 1 };
                        if s12.substitute(jres, s3).arity() > mcap {
                            continue;
                        }
                        let ires = if jp < i { i + s3.arity() - 1 } else { i };
                        for (d1, b1) in basis_of(&p.level(s1)) {
                            for (d2, b2) in basis_of(&m.level(s2)) {
                                for (d3, b3) in basis_of(&p.level(s3)) {
                                    let x = (d1, vec![(b1, field.one())]);
                                    let y = (d2, vec![(b2, field.one())]);
                                    let z = (d3, vec![(b3, field.one())]);
                                    let xy = m.left_vec(s1, &x, i, s2, &y);
                                    let lhs = m.right_vec(&s12, &xy, jres, s3, &z);
                                    let xz = p.compose_vec(s1, &x, jp, s3, &z);
                                    let rhs0 = m.left_vec(&s13, &xz, ires, s2, &y);
                                    let sign = if (d2 * d3).rem_euclid(2) == 1 {
                                        field.from_i64(-1)
                                    } else {
                                        field.one()
                                    };
                                    if lhs.1 != vec_scale(&rhs0.1, &sign) {
                                        report.push(
                                            "ib compat outer",
                                            format!("({s1},{s2},{s3};{i},{jp};{b1},{b2},{b3})"),
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
    }

    // equivariance of the stored action maps against the generators
    for ((s1, s2, i), f) in &m.left {
        check_bilinear_equivariance(
            &mut report,
            "ib left equivariance",
            p.coll(),
            &m.coll,
            &m.coll,
            s1,
            s2,
            *i,
            f,
            |os1, os2, oi| m.left_map(os1, os2, oi),
        );
    }
    for ((s1, s2, j), f) in &m.right {
        check_bilinear_equivariance(
            &mut report,
            "ib right equivariance",
            &m.coll,
            p.coll(),
            &m.coll,
            s1,
            s2,
            *j,
            f,
            |os1, os2, oj| m.right_map(os1, os2, oj),
        );
    }

    report
}

/// Equivariance of a bilinear substitution map c1(s1)⊗c2(s2) ->
/// cres(s1.substitute(i, s2)) against outer and inner generators.
#[allow(clippy::too_many_arguments)]
pub(crate) fn check_bilinear_equivariance<F>(
    report: &mut AxiomReport,
    tag: &str,
    c1: &Collection,
    c2: &Collection,
    cres: &Collection,
    s1: &CSeq,
    s2: &CSeq,
    i: usize,
    f: &ChainMap,
    lookup: F,
) where
    F: Fn(&CSeq, &CSeq, usize) -> ChainMap,
{
    let n1 = s1.arity();
    let n2 = s2.arity();
    let result = s1.substitute(i, s2);
    for a in 0..n1.saturating_sub(1) {
        let sigma = Perm::adjacent(n1, a);
        let new_i = sigma.apply(i);
        let lhs = {
            let maps = [c1.action_gen(s1, a), ChainMap::identity(&c2.level(s2))];
            let refs: Vec<&ChainMap> = maps.iter().collect();
            let (_, _, act) = tensor_maps(&refs).expect("tensor of actions");
            lookup(&s1.swap(a), s2, new_i).compose(&act)
        };
        let rhs = {
            let mut widths = vec![1usize; n1];
            widths[i] = n2;
            let bp = block_perm(&widths, &sigma);
            cres.action(&result, &bp).compose(f)
        };
        if !lhs.equal(&rhs) {
            report.push(tag, format!("{s1} o_{i} {s2}, outer s_{a}"), "differs");
        }
    }
    for b in 0..n2.saturating_sub(1) {
        let lhs = {
            let maps = [ChainMap::identity(&c1.level(s1)), c2.action_gen(s2, b)];
            let refs: Vec<&ChainMap> = maps.iter().collect();
            let (_, _, act) = tensor_maps(&refs).expect("tensor of actions");
            lookup(s1, &s2.swap(b), i).compose(&act)
        };
        let rhs = {
            let emb = Perm::adjacent(result.arity(), i + b);
            cres.action(&result, &emb).compose(f)
        };
        if !lhs.equal(&rhs) {
            report.push(tag, format!("{s1} o_{i} {s2}, inner s_{b}"), "differs");
        }
    }
}

/// Restrict an ibmod to a lower arity ceiling over the correspondingly
/// restricted operad.
pub fn restrict_ibmod_ceiling(m: &IBimod, n: usize) -> Result<IBimod> {
    let p_small = crate::operad::restrict_operad_ceiling(&m.operad, n)?;
    let levels: BTreeMap<CSeq, ChainComplex> = m
        .coll
        .seqs()
        .filter(|s| s.arity() <= n)
        .map(|s| (s.clone(), m.level(s)))
        .collect();
    let actions = levels
        .keys()
        .flat_map(|s| {
            (0..s.arity().saturating_sub(1))
                .map(move |i| ((s.clone(), i), m.coll.action_gen(s, i)))
        })
        .collect();
    let mut coll = Collection::new(
        m.coll.colors().clone(),
        m.field(),
        n,
        levels,
        actions,
        m.coll.truncated(),
    )?;
    coll.set_exact_max(m.coll.exact_max().min(n));
    let left = m
        .left
        .iter()
        .filter(|((s1, s2, _), _)| s1.arity() + s2.arity() <= n + 1)
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let right = m
        .right
        .iter()
        .filter(|((s1, s2, _), _)| s1.arity() + s2.arity() <= n + 1)
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    Ok(IBimod::from_parts(p_small, coll, left, right))
}

/// P regarded as an infinitesimal bimodule over itself.
pub fn self_ib(p: &Operad) -> IBimod {
    let mut left = BTreeMap::new();
    let mut right = BTreeMap::new();
    let seqs: Vec<CSeq> = p.coll().seqs().cloned().collect();
    for s1 in &seqs {
        for s2 in &seqs {
            for i in 0..s1.arity() {
                if p.admissible(s1, s2, i) {
                    let c = p.composition(s1, s2, i);
                    left.insert((s1.clone(), s2.clone(), i), c.clone());
                    right.insert((s1.clone(), s2.clone(), i), c);
                }
            }
        }
    }
    IBimod::from_parts(p.clone(), p.coll().clone(), left, right)
}

/// Restrict an ibmod along an operad map: levels pulled back along the
/// color map, actions precomposed with f.
pub fn restrict_ib(f: &OperadMap, m: &IBimod) -> Result<IBimod> {
    let p = &f.source;
    let field = p.field();
    let mut levels = BTreeMap::new();
    let mut actions = BTreeMap::new();
    for seq in Collection::all_seqs(p.colors(), p.max_arity()) {
        let lvl = m.level(&f.image_seq(&seq));
        if lvl.is_zero() {
            continue;
        }
        for a in 0..seq.arity().saturating_sub(1) {
            actions.insert(
                (seq.clone(), a),
                m.coll().action_gen(&f.image_seq(&seq), a),
            );
        }
        levels.insert(seq, lvl);
    }
    let coll = Collection::new(
        p.colors().clone(),
        field,
        p.max_arity(),
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
                let maps = [f.map_at(s1), ChainMap::identity(&coll.level(s2))];
                let refs: Vec<&ChainMap> = maps.iter().collect();
                let (_, _, fm) = tensor_maps(&refs)?;
                let inner = m
                    .left_map(&f.image_seq(s1), &f.image_seq(s2), i)
                    .compose(&fm);
                left.insert((s1.clone(), s2.clone(), i), inner);
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
                let maps = [ChainMap::identity(&coll.level(s1)), f.map_at(s2)];
                let refs: Vec<&ChainMap> = maps.iter().collect();
                let (_, _, fm) = tensor_maps(&refs)?;
                let inner = m
                    .right_map(&f.image_seq(s1), &f.image_seq(s2), j)
                    .compose(&fm);
                right.insert((s1.clone(), s2.clone(), j), inner);
            }
        }
    }
    Ok(IBimod::from_parts(p.clone(), coll, left, right))
}

/// The cotangent object: level (c_1..c_m;c) is the m-fold sum of
/// P(c_1..c_m;c), one labelled copy per input slot. Off-slot right
/// composition keeps the label; on-slot composition distributes the label
/// diagonally over the inserted inputs.
pub fn cotangent_ib(p: &Operad) -> Result<IBimod> {
    let field = p.field();
    let mut levels: BTreeMap<CSeq, ChainComplex> = BTreeMap::new();
    for seq in p.coll().seqs() {
        let m = seq.arity();
        if m == 0 {
            continue;
        }
        let lvl = p.level(seq);
        let copies: Vec<ChainComplex> = (0..m).map(|_| lvl.clone()).collect();
        let refs: Vec<&ChainComplex> = copies.iter().collect();
        levels.insert(seq.clone(), ChainComplex::direct_sum(&refs, field));
    }
    let mut actions = BTreeMap::new();
    for (seq, lvl) in &levels {
        let m = seq.arity();
        let plvl = p.level(seq);
        for a in 0..m.saturating_sub(1) {
            let tseq = seq.swap(a);
            let tgt = levels
                .get(&tseq)
                .cloned()
                .unwrap_or_else(|| ChainComplex::zero(field));
            let act = p.coll().action_gen(seq, a);
            let tlvl = p.level(&tseq);
            let mut mb = MapBuilder::new(lvl.clone(), tgt.clone(), 0);
            for d in plvl.degrees() {
                let am = act.component(d);
                let dimp = plvl.dim(d);
                let dimt = tlvl.dim(d);
                for mark in 0..m {
                    let tmark = if mark == a {
                        a + 1
                    } else if mark == a + 1 {
                        a
                    } else {
                        mark
                    };
                    for bi in 0..dimp {
                        for (bt, v) in am.transpose().row(bi) {
                            mb.add(d, mark * dimp + bi, tmark * dimt + bt, v.clone());
                        }
                    }
                }
            }
            actions.insert((seq.clone(), a), mb.build()?);
        }
    }
    let coll = Collection::new(
        p.colors().clone(),
        field,
        p.max_arity(),
        levels,
        actions,
        false,
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
                        let d2 = degs[1];
                        let dim2 = p.level(s2).dim(d2);
                        if dim2 == 0 {
                            continue;
                        }
                        let mark = idxs[1] / dim2;
                        let pidx = idxs[1] % dim2;
                        let img = p.compose_vec(
                            s1,
                            &(degs[0], vec![(idxs[0], field.one())]),
                            i,
                            s2,
                            &(d2, vec![(pidx, field.one())]),
                        );
                        let dimr = p.level(&res).dim(img.0);
                        let tmark = i + mark;
                        for (t, v) in img.1 {
                            mb.add(nn, col, tmark * dimr + t, v);
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
                let a2 = s2.arity();
                let mut mb = MapBuilder::new(ts.complex.clone(), coll.level(&res), 0);
                for nn in ts.complex.degrees() {
                    for (col, (degs, idxs)) in ts.tuples(nn).iter().enumerate() {
                        let d1 = degs[0];
                        let dim1 = p.level(s1).dim(d1);
                        if dim1 == 0 {
                            continue;
                        }
                        let mark = idxs[0] / dim1;
                        let pidx = idxs[0] % dim1;
                        let img = p.compose_vec(
                            s1,
                            &(d1, vec![(pidx, field.one())]),
                            j,
                            s2,
                            &(degs[1], vec![(idxs[1], field.one())]),
                        );
                        let dimr = p.level(&res).dim(img.0);
                        if mark != j {
                            let tmark = if j < mark { mark + a2 - 1 } else { mark };
                            for (t, v) in &img.1 {
                                mb.add(nn, col, tmark * dimr + t, v.clone());
                            }
                        } else {
                            for k in 0..a2 {
                                for (t, v) in &img.1 {
                                    mb.add(nn, col, (j + k) * dimr + t, v.clone());
                                }
                            }
                        }
                    }
                }
                right.insert((s1.clone(), s2.clone(), j), mb.build()?);
            }
        }
    }
    Ok(IBimod::from_parts(p.clone(), coll, left, right))
}

/// Origin of an outer slot of an infinitesimal-composite shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum SlotOrigin {
    Pos(usize),
    Inner,
}

fn inf_outer_slots(arity: usize, s: &[usize]) -> Vec<SlotOrigin> {
    let mut out = Vec::new();
    if s.is_empty() {
        out.extend((0..arity).map(SlotOrigin::Pos));
        out.push(SlotOrigin::Inner);
        return out;
    }
    for p in 0..arity {
        if p == s[0] {
            out.push(SlotOrigin::Inner);
        }
        if !s.contains(&p) {
            out.push(SlotOrigin::Pos(p));
        }
    }
    out
}

fn matching_perm(from: &[SlotOrigin], to: &[SlotOrigin]) -> Perm {
    let map: Vec<usize> = from
        .iter()
        .map(|x| to.iter().position(|y| y == x).expect("slot matched"))
        .collect();
    Perm::from_images(map)
}

fn koszul_sign(field: FieldSpec, degs: &[i64], tau: &Perm) -> Scalar {
    let mut sign = 1i64;
    for i in 0..degs.len() {
        for j in (i + 1)..degs.len() {
            if tau.apply(i) > tau.apply(j)
                && degs[i].rem_euclid(2) == 1
                && degs[j].rem_euclid(2) == 1
            {
                sign = -sign;
            }
        }
    }
    field.from_i64(sign)
}

fn express_in(built: &crate::composite::BuiltLevel, si: usize, factors: &[(i64, SparseVec)]) -> (i64, SparseVec) {
    let ts = &built.summands[si].tensor;
    let field = ts.complex.field();
    let total: i64 = factors.iter().map(|(d, _)| d).sum();
    let mut stack: Vec<(Vec<usize>, Scalar)> = vec![(Vec::new(), field.one())];
    for (_, coords) in factors {
        let mut next = Vec::new();
        for (partial, c) in &stack {
            for (i, v) in coords {
                let mut p2 = partial.clone();
                p2.push(*i);
                next.push((p2, c * v));
            }
        }
        stack = next;
    }
    let degs: Vec<i64> = factors.iter().map(|(d, _)| *d).collect();
    let mut acc: SparseVec = Vec::new();
    for (idxs, c) in stack {
        let (n, pos) = ts.position(&degs, &idxs);
        debug_assert_eq!(n, total);
        acc = vec_add(&acc, &vec![(pos, c)]);
    }
    (total, built.express(si, total, &acc))
}

/// Right P-action on a composite M∘P: compose ν into the block holding
/// position r. `m_coll` carries the outer factor's symmetric actions.
pub fn composite_right_action(
    p: &Operad,
    m_coll: &Collection,
    mp: &Composite,
    seq: &CSeq,
    v: &(i64, SparseVec),
    r: usize,
    s_nu: &CSeq,
    nu: &(i64, SparseVec),
) -> Result<(i64, SparseVec)> {
    let field = p.field();
    let res = seq.substitute(r, s_nu);
    let a = s_nu.arity();
    let (shapes, built) = mp
        .levels
        .get(seq)
        .ok_or_else(|| Error::Config("composite level missing".into()))?;
    let mut acc: SparseVec = Vec::new();
    let mut out_deg = v.0 + nu.0;
    for (si, shape) in shapes.iter().enumerate() {
        let tv = built.restrict(si, v.0, &v.1);
        if tv.is_empty() {
            continue;
        }
        let b = shape.block_of(r);
        let rb = shape.blocks[b].0.iter().position(|&q| q == r).unwrap();
        let relabeled: Vec<(Vec<usize>, Color)> = shape
            .blocks
            .iter()
            .map(|(s, c)| {
                let mut s2: Vec<usize> = Vec::new();
                for &q in s {
                    match q.cmp(&r) {
                        std::cmp::Ordering::Less => s2.push(q),
                        std::cmp::Ordering::Equal => s2.extend(r..r + a),
                        std::cmp::Ordering::Greater => s2.push(q + a - 1),
                    }
                }
                (s2, *c)
            })
            .collect();
        let (tshape, tau) = ComposeShape::canonicalize(relabeled);
        let ts = &built.summands[si].tensor;
        let nblocks = shape.blocks.len();
        let block_seq = shape.inner_seq(seq, b);
        let m_seq = shape.outer_seq(seq);
        for (pos, cv) in &tv {
            let (degs, idxs) = &ts.tuples(v.0)[*pos];
            let bvec = (degs[b + 1], vec![(idxs[b + 1], field.one())]);
            let w = p.compose_vec(&block_seq, &bvec, rb, s_nu, nu);
            if w.1.is_empty() {
                continue;
            }
            let (tshapes, tbuilt) = mp
                .levels
                .get(&res)
                .ok_or_else(|| Error::Config("composite target level missing".into()))?;
            let ti = tshapes
                .iter()
                .position(|s| *s == tshape)
                .ok_or_else(|| Error::Config("composite right target shape missing".into()))?;
            // ν crosses the blocks after b
            let crossed: i64 = degs[b + 2..].iter().sum();
            let mut sign = if (crossed * nu.0).rem_euclid(2) == 1 {
                field.from_i64(-1)
            } else {
                field.one()
            };
            // m-part transported by τ, blocks reordered with Koszul signs
            let m_act = m_coll.action(&m_seq, &tau);
            let mv = (
                degs[0],
                m_act.component(degs[0]).apply(&vec![(idxs[0], field.one())]),
            );
            let block_degs: Vec<i64> = (0..nblocks)
                .map(|bb| if bb == b { w.0 } else { degs[bb + 1] })
                .collect();
            sign = &sign * &koszul_sign(field, &block_degs, &tau);
            let inv = tau.inverse();
            let mut factors: Vec<(i64, SparseVec)> = vec![mv];
            for t in 0..nblocks {
                let bb = inv.apply(t);
                if bb == b {
                    factors.push(w.clone());
                } else {
                    factors.push((degs[bb + 1], vec![(idxs[bb + 1], field.one())]));
                }
            }
            let (d, img) = express_in(tbuilt, ti, &factors);
            out_deg = d;
            acc = vec_add(&acc, &vec_scale(&img, &(cv * &sign)));
        }
    }
    Ok((out_deg, acc))
}

/// The free infinitesimal bimodule on a collection: P∘₍₁₎(M∘P), with the
/// left action on the outer factor and the right action landing either in
/// the outer factor or in a P-block of the inner composite.
#[derive(Debug, Clone)]
pub struct FreeIb {
    pub ib: IBimod,
    pub outer: InfComposite,
    pub inner: Composite,
    pub generators: Collection,
}

pub fn free_ib(p: &Operad, m: &Collection) -> Result<FreeIb> {
    if p.colors() != m.colors() {
        return Err(Error::ColorMismatch);
    }
    let field = p.field();
    let mp = compose(m, p.coll())?;
    let f = inf_compose(p.coll(), &mp.coll)?;

    let mut left: BTreeMap<(CSeq, CSeq, usize), ChainMap> = BTreeMap::new();
    let mut right: BTreeMap<(CSeq, CSeq, usize), ChainMap> = BTreeMap::new();
    let pseqs: Vec<CSeq> = p.coll().seqs().cloned().collect();
    let fseqs: Vec<CSeq> = f.coll.seqs().cloned().collect();

    for s1 in &pseqs {
        for s2 in &fseqs {
            for i in 0..s1.arity() {
                if s1.inputs[i] != s2.output || s1.arity() + s2.arity() > f.coll.max_arity() + 1
                {
                    continue;
                }
                let res = s1.substitute(i, s2);
                let l1 = p.level(s1);
                let l2 = f.coll.level(s2);
                let ts = TensorSpace::new(&[&l1, &l2], field);
                let mut mb = MapBuilder::new(ts.complex.clone(), f.coll.level(&res), 0);
                let (shapes, built) = &f.levels[s2];
                for nn in ts.complex.degrees() {
                    for (col, (degs, idxs)) in ts.tuples(nn).iter().enumerate() {
                        let mu = (degs[0], vec![(idxs[0], field.one())]);
                        let xv: SparseVec = vec![(idxs[1], field.one())];
                        for (si, shape) in shapes.iter().enumerate() {
                            let tv = built.restrict(si, degs[1], &xv);
                            if tv.is_empty() {
                                continue;
                            }
                            let img =
                                free_left_pointwise(p, &f, s1, &mu, i, s2, shape, degs[1], &tv)?;
                            for (t, v) in img.1 {
                                mb.add(nn, col, t, v);
                            }
                        }
                    }
                }
                left.insert((s1.clone(), s2.clone(), i), mb.build()?);
            }
        }
    }

    for s1 in &fseqs {
        for s2 in &pseqs {
            for j in 0..s1.arity() {
                if s1.inputs[j] != s2.output || s1.arity() + s2.arity() > f.coll.max_arity() + 1
                {
                    continue;
                }
                let res = s1.substitute(j, s2);
                let l1 = f.coll.level(s1);
                let l2 = p.level(s2);
                let ts = TensorSpace::new(&[&l1, &l2], field);
                let mut mb = MapBuilder::new(ts.complex.clone(), f.coll.level(&res), 0);
                let (shapes, built) = &f.levels[s1];
                for nn in ts.complex.degrees() {
                    for (col, (degs, idxs)) in ts.tuples(nn).iter().enumerate() {
                        let nu = (degs[1], vec![(idxs[1], field.one())]);
                        let xv: SparseVec = vec![(idxs[0], field.one())];
                        for (si, shape) in shapes.iter().enumerate() {
                            let tv = built.restrict(si, degs[0], &xv);
                            if tv.is_empty() {
                                continue;
                            }
                            let img = free_right_pointwise(
                                p, m, &mp, &f, s1, shape, si, degs[0], &tv, j, s2, &nu,
                            )?;
                            for (t, v) in img.1 {
                                mb.add(nn, col, t, v);
                            }
                        }
                    }
                }
                right.insert((s1.clone(), s2.clone(), j), mb.build()?);
            }
        }
    }

    let ib = IBimod::from_parts(p.clone(), f.coll.clone(), left, right);
    Ok(FreeIb {
        ib,
        outer: f,
        inner: mp,
        generators: m.clone(),
    })
}

/// μ ∘^{iℓ} (p; q at S): compose into the outer factor and re-anchor the
/// inner slot.
#[allow(clippy::too_many_arguments)]
fn free_left_pointwise(
    p: &Operad,
    f: &InfComposite,
    s1: &CSeq,
    mu: &(i64, SparseVec),
    i: usize,
    s2: &CSeq,
    shape: &InfShape,
    deg: i64,
    tensor_vec: &SparseVec,
) -> Result<(i64, SparseVec)> {
    let field = p.field();
    let res = s1.substitute(i, s2);
    let tshape = InfShape {
        positions: shape.positions.iter().map(|&q| q + i).collect(),
        inner_output: shape.inner_output,
    };
    let outer_src = shape.outer_seq(s2);
    let x_slots = inf_outer_slots(s2.arity(), &shape.positions);
    let mut subst: Vec<SlotOrigin> = (0..i).map(SlotOrigin::Pos).collect();
    subst.extend(x_slots.iter().map(|o| match o {
        SlotOrigin::Pos(q) => SlotOrigin::Pos(q + i),
        SlotOrigin::Inner => SlotOrigin::Inner,
    }));
    subst.extend((i + s2.arity()..res.arity()).map(SlotOrigin::Pos));
    let canon = inf_outer_slots(res.arity(), &tshape.positions);
    let sigma = matching_perm(&subst, &canon);

    let si = f.shape_index(s2, shape).expect("source shape present");
    let ts = &f.levels[s2].1.summands[si].tensor;
    let mut acc: SparseVec = Vec::new();
    let mut out_deg = mu.0 + deg;
    for (pos, cv) in tensor_vec {
        let (degs, idxs) = &ts.tuples(deg)[*pos];
        let pv = (degs[0], vec![(idxs[0], field.one())]);
        let qv = (degs[1], vec![(idxs[1], cv.clone())]);
        let w = p.compose_vec(s1, mu, i, &outer_src, &pv);
        if w.1.is_empty() {
            // the composed outer operation is zero (or truncated away)
            continue;
        }
        let sub_seq = s1.substitute(i, &outer_src);
        let act = p.coll().action(&sub_seq, &sigma);
        let w = (w.0, act.component(w.0).apply(&w.1));
        let (tshapes, tbuilt) = f
            .levels
            .get(&res)
            .ok_or_else(|| Error::Config("left action target level missing".into()))?;
        let ti = tshapes
            .iter()
            .position(|s| *s == tshape)
            .ok_or_else(|| Error::Config("left action target shape missing".into()))?;
        let (d, v) = express_in(tbuilt, ti, &[w, qv]);
        out_deg = d;
        acc = vec_add(&acc, &v);
    }
    Ok((out_deg, acc))
}

/// (p; q at S) ∘^{jr} ν: into the outer factor when j ∉ S, into a P-block
/// of the inner composite when j ∈ S.
#[allow(clippy::too_many_arguments)]
fn free_right_pointwise(
    p: &Operad,
    m_coll: &Collection,
    mp: &Composite,
    f: &InfComposite,
    s1: &CSeq,
    shape: &InfShape,
    si: usize,
    deg: i64,
    tensor_vec: &SparseVec,
    j: usize,
    s2: &CSeq,
    nu: &(i64, SparseVec),
) -> Result<(i64, SparseVec)> {
    let field = p.field();
    let res = s1.substitute(j, s2);
    let a = s2.arity();
    let built = &f.levels[s1].1;
    let ts = &built.summands[si].tensor;
    let inner_seq = shape.inner_seq(s1);
    let outer_src = shape.outer_seq(s1);
    let mut acc: SparseVec = Vec::new();
    let mut out_deg = deg + nu.0;

    if !shape.positions.contains(&j) {
        let slot = shape.outer_slot(j);
        let tpositions: Vec<usize> = shape
            .positions
            .iter()
            .map(|&q| if q > j { q + a - 1 } else { q })
            .collect();
        let tshape = InfShape {
            positions: tpositions,
            inner_output: shape.inner_output,
        };
        // substitution preserves the slot order up to re-anchoring
        let src_slots = inf_outer_slots(s1.arity(), &shape.positions);
        let mut subst: Vec<SlotOrigin> = Vec::new();
        for o in &src_slots {
            match o {
                SlotOrigin::Pos(q) if *q == j => {
                    subst.extend((j..j + a).map(SlotOrigin::Pos));
                }
                SlotOrigin::Pos(q) if *q > j => subst.push(SlotOrigin::Pos(q + a - 1)),
                other => subst.push(*other),
            }
        }
        let canon = inf_outer_slots(res.arity(), &tshape.positions);
        let sigma = matching_perm(&subst, &canon);
        for (pos, cv) in tensor_vec {
            let (degs, idxs) = &ts.tuples(deg)[*pos];
            let pv = (degs[0], vec![(idxs[0], field.one())]);
            let qdeg = degs[1];
            let sign = if (qdeg * nu.0).rem_euclid(2) == 1 {
                field.from_i64(-1)
            } else {
                field.one()
            };
            let w = p.compose_vec(&outer_src, &pv, slot, s2, nu);
            if w.1.is_empty() {
                continue;
            }
            let sub_seq = outer_src.substitute(slot, s2);
            let act = p.coll().action(&sub_seq, &sigma);
            let w = (w.0, act.component(w.0).apply(&w.1));
            let (tshapes, tbuilt) = f
                .levels
                .get(&res)
                .ok_or_else(|| Error::Config("right action target level missing".into()))?;
            let ti = tshapes
                .iter()
                .position(|s| *s == tshape)
                .ok_or_else(|| Error::Config("right action target shape missing".into()))?;
            let qv = (qdeg, vec![(idxs[1], cv * &sign)]);
            let (d, v) = express_in(tbuilt, ti, &[w, qv]);
            out_deg = d;
            acc = vec_add(&acc, &v);
        }
        return Ok((out_deg, acc));
    }

    let r = shape.positions.iter().position(|&q| q == j).unwrap();
    let tpositions: Vec<usize> = {
        let mut v = Vec::new();
        for &q in &shape.positions {
            match q.cmp(&j) {
                std::cmp::Ordering::Less => v.push(q),
                std::cmp::Ordering::Equal => v.extend(j..j + a),
                std::cmp::Ordering::Greater => v.push(q + a - 1),
            }
        }
        v
    };
    let tshape = InfShape {
        positions: tpositions,
        inner_output: shape.inner_output,
    };
    // composing into the inner factor can move its anchor (a nullary at
    // the least position does); re-anchor by acting on the outer factor
    let src_slots = inf_outer_slots(s1.arity(), &shape.positions);
    let subst: Vec<SlotOrigin> = src_slots
        .iter()
        .map(|o| match o {
            SlotOrigin::Pos(q) if *q > j => SlotOrigin::Pos(q + a - 1),
            other => *other,
        })
        .collect();
    let canon = inf_outer_slots(res.arity(), &tshape.positions);
    let sigma = matching_perm(&subst, &canon);
    for (pos, cv) in tensor_vec {
        let (degs, idxs) = &ts.tuples(deg)[*pos];
        let pv0 = (degs[0], vec![(idxs[0], cv.clone())]);
        let pv = {
            let act = p.coll().action(&outer_src, &sigma);
            (pv0.0, act.component(pv0.0).apply(&pv0.1))
        };
        let qv = (degs[1], vec![(idxs[1], field.one())]);
        let img = composite_right_action(p, m_coll, mp, &inner_seq, &qv, r, s2, nu)?;
        if img.1.is_empty() || pv.1.is_empty() {
            continue;
        }
        let (tshapes, tbuilt) = f
            .levels
            .get(&res)
            .ok_or_else(|| Error::Config("inner right target level missing".into()))?;
        let ti = tshapes
            .iter()
            .position(|s| *s == tshape)
            .ok_or_else(|| Error::Config("inner right target shape missing".into()))?;
        let (d, v) = express_in(tbuilt, ti, &[pv, img]);
        out_deg = d;
        acc = vec_add(&acc, &v);
    }
    Ok((out_deg, acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operad::{preset, Preset};

    fn q() -> FieldSpec {
        FieldSpec::Rationals
    }

    #[test]
    fn self_ib_passes_checker() {
        for p in [
            preset(Preset::I, q(), 3).unwrap(),
            preset(Preset::Com, q(), 4).unwrap(),
            preset(Preset::Ass, q(), 3).unwrap(),
            preset(Preset::Nilpotent(2), q(), 3).unwrap(),
        ] {
            let m = self_ib(&p);
            let rep = check_ibmod(&m);
            assert!(rep.ok(), "self_ib violations: {rep}");
        }
    }

    #[test]
    fn self_ib_of_i_is_unit() {
        let p = preset(Preset::I, q(), 3).unwrap();
        let m = self_ib(&p);
        assert_eq!(m.coll().total_dim(), 1);
    }

    #[test]
    fn corrupted_right_action_is_witnessed() {
        let p = preset(Preset::Com, q(), 3).unwrap();
        let mut m = self_ib(&p);
        let key = (CSeq::single(2), CSeq::single(2), 0usize);
        let bad = m.right[&key].scale(&q().from_i64(2));
        m.right.insert(key, bad);
        let rep = check_ibmod(&m);
        assert!(!rep.ok());
    }

    #[test]
    fn cotangent_dims_and_axioms() {
        let com = preset(Preset::Com, q(), 5).unwrap();
        let l = cotangent_ib(&com).unwrap();
        for m in 1..=5usize {
            assert_eq!(l.level(&CSeq::single(m)).dim(0), m);
        }
        assert!(check_ibmod(&l).ok());

        let ass = preset(Preset::Ass, q(), 3).unwrap();
        let l = cotangent_ib(&ass).unwrap();
        for m in 1..=3usize {
            let fact: usize = (1..=m).product();
            assert_eq!(l.level(&CSeq::single(m)).dim(0), m * fact);
        }
        assert!(check_ibmod(&l).ok());

        let nil = preset(Preset::Nilpotent(2), q(), 4).unwrap();
        assert!(check_ibmod(&cotangent_ib(&nil).unwrap()).ok());
    }

    #[test]
    fn cotangent_of_i_is_self() {
        let p = preset(Preset::I, q(), 3).unwrap();
        let l = cotangent_ib(&p).unwrap();
        assert!(l.coll().same_dims(self_ib(&p).coll()));
    }

    #[test]
    fn free_ib_dims() {
        let com = preset(Preset::Com, q(), 4).unwrap();
        let e = Collection::unit_e(com.colors().clone(), q(), 4);
        let f = free_ib(&com, &e).unwrap();
        for n in 0..=3usize {
            assert_eq!(f.ib.level(&CSeq::single(n)).dim(0), 1, "level {n}");
        }
        assert_eq!(f.ib.level(&CSeq::single(4)).dim(0), 0);
        assert!(f.ib.coll().truncated());

        let ass = preset(Preset::Ass, q(), 4).unwrap();
        let f = free_ib(&ass, &e).unwrap();
        for n in 0..=3usize {
            let fact: usize = (1..=n + 1).product();
            assert_eq!(f.ib.level(&CSeq::single(n)).dim(0), fact, "level {n}");
        }
    }

    #[test]
    fn free_ib_passes_checker() {
        let com = preset(Preset::Com, q(), 3).unwrap();
        let e = Collection::unit_e(com.colors().clone(), q(), 3);
        let f = free_ib(&com, &e).unwrap();
        let rep = check_ibmod(&f.ib);
        assert!(rep.ok(), "free com violations: {rep}");

        let ass = preset(Preset::Ass, q(), 3).unwrap();
        let f = free_ib(&ass, &e).unwrap();
        let rep = check_ibmod(&f.ib);
        assert!(rep.ok(), "free ass violations: {rep}");

        // free on the unit collection: P∘₍₁₎P
        let i = Collection::unit_i(com.colors().clone(), q(), 3);
        let f = free_ib(&com, &i).unwrap();
        let rep = check_ibmod(&f.ib);
        assert!(rep.ok(), "free com on I violations: {rep}");

        // nontrivial symmetric actions exercise the re-anchoring
        let f = free_ib(&ass, &i).unwrap();
        let rep = check_ibmod(&f.ib);
        assert!(rep.ok(), "free ass on I violations: {rep}");
    }

    #[test]
    fn free_ib_on_shifted_generators_has_consistent_signs() {
        let com = preset(Preset::Com, q(), 3).unwrap();
        let e = Collection::unit_e(com.colors().clone(), q(), 3).shift(1);
        let f = free_ib(&com, &e).unwrap();
        let rep = check_ibmod(&f.ib);
        assert!(rep.ok(), "graded free violations: {rep}");
    }

    #[test]
    fn free_ib_of_unit_operad_recovers_generators() {
        let p = preset(Preset::I, q(), 3).unwrap();
        let mut levels = BTreeMap::new();
        levels.insert(
            CSeq::single(2),
            ChainComplex::concentrated(q(), 0, vec![crate::label::Label::atom("g")]),
        );
        let m =
            Collection::with_trivial_actions(p.colors().clone(), q(), 3, levels).unwrap();
        let f = free_ib(&p, &m).unwrap();
        assert!(f.ib.coll().same_dims(&m));
        assert!(check_ibmod(&f.ib).ok());
    }

    #[test]
    fn restriction_along_abelianization() {
        let ass = preset(Preset::Ass, q(), 3).unwrap();
        let com = preset(Preset::Com, q(), 3).unwrap();
        let f = crate::operad::abelianization(&ass, &com).unwrap();
        let m = restrict_ib(&f, &self_ib(&com)).unwrap();
        assert!(check_ibmod(&m).ok());
        // restriction along the identity is the identity
        let idm = restrict_ib(&OperadMap::identity(&com), &self_ib(&com)).unwrap();
        assert!(idm.coll().same_dims(self_ib(&com).coll()));
    }

    #[test]
    fn direct_sum_and_shift_keep_axioms() {
        let com = preset(Preset::Com, q(), 3).unwrap();
        let m = self_ib(&com);
        let s = IBimod::direct_sum(&[&m, &m]).unwrap();
        assert!(check_ibmod(&s).ok());
        let sh = m.shift(1).unwrap();
        assert!(check_ibmod(&sh).ok());
        let sh2 = m.shift(-2).unwrap();
        assert!(check_ibmod(&sh2).ok());
    }
}
