//! P-algebras, their modules, endomorphism bimodules, derivations, and
//! Kähler differentials, plus the relative composite connecting the
//! operadic and algebra-level cotangent objects.

use std::collections::BTreeMap;

use crate::chain::{ChainComplex, ChainMap, HomSpace, MapBuilder, TensorSpace};
use crate::collection::{CSeq, Collection, Color};
use crate::composite::{compose, Composite};
use crate::error::{Error, Result};
use crate::field::{FieldSpec, Scalar};
use crate::ibmod::IBimod;
use crate::label::Label;
use crate::linalg::{vec_add, vec_scale, Span, SparseVec};
use crate::operad::{AxiomReport, Operad};

/// An algebra over an operad: one complex per color with action maps
/// P(c_1..c_n;c) ⊗ A(c_1) ⊗ … ⊗ A(c_n) -> A(c).
#[derive(Debug, Clone)]
pub struct PAlgebra {
    operad: Operad,
    values: BTreeMap<Color, ChainComplex>,
    actions: BTreeMap<CSeq, ChainMap>,
}

impl PAlgebra {
    pub fn from_parts(
        operad: Operad,
        values: BTreeMap<Color, ChainComplex>,
        actions: BTreeMap<CSeq, ChainMap>,
    ) -> PAlgebra {
        PAlgebra {
            operad,
            values,
            actions,
        }
    }

    pub fn validated(self) -> Result<PAlgebra> {
        let report = check_algebra(&self);
        if report.ok() {
            Ok(self)
        } else {
            Err(Error::Axioms(report))
        }
    }

    pub fn operad(&self) -> &Operad {
        &self.operad
    }

    pub fn field(&self) -> FieldSpec {
        self.operad.field()
    }

    pub fn value(&self, c: Color) -> ChainComplex {
        self.values
            .get(&c)
            .cloned()
            .unwrap_or_else(|| ChainComplex::zero(self.field()))
    }

    pub fn values(&self) -> &BTreeMap<Color, ChainComplex> {
        &self.values
    }

    pub fn action_keys(&self) -> impl Iterator<Item = &CSeq> {
        self.actions.keys()
    }

    /// Input tensor space P(seq) ⊗ A(c_1) ⊗ … ⊗ A(c_n).
    pub fn action_space(&self, seq: &CSeq) -> TensorSpace {
        let plvl = self.operad.level(seq);
        let vals: Vec<ChainComplex> = seq.inputs.iter().map(|&c| self.value(c)).collect();
        let mut refs: Vec<&ChainComplex> = vec![&plvl];
        refs.extend(vals.iter());
        TensorSpace::new(&refs, self.field())
    }

    pub fn action(&self, seq: &CSeq) -> ChainMap {
        match self.actions.get(seq) {
            Some(m) => m.clone(),
            None => {
                ChainMap::zero_map(self.action_space(seq).complex, self.value(seq.output), 0)
            }
        }
    }

    /// Evaluate μ · (a_1, …, a_n) on vectors.
    pub fn act(
        &self,
        seq: &CSeq,
        mu: &(i64, SparseVec),
        args: &[(i64, SparseVec)],
    ) -> (i64, SparseVec) {
        assert_eq!(args.len(), seq.arity());
        let ts = self.action_space(seq);
        let (total, acc) = expand_tuple(&ts, mu, args);
        (total, self.action(seq).component(total).apply(&acc))
    }

    /// The collection concentrated in arity 0 with these values.
    pub fn as_collection(&self) -> Collection {
        let mut levels = BTreeMap::new();
        for (c, v) in &self.values {
            if !v.is_zero() {
                levels.insert(CSeq::new(vec![], *c), v.clone());
            }
        }
        Collection::with_trivial_actions(
            self.operad.colors().clone(),
            self.field(),
            self.operad.max_arity(),
            levels,
        )
        .expect("arity-0 collection")
    }
}

fn expand_tuple(
    ts: &TensorSpace,
    head: &(i64, SparseVec),
    args: &[(i64, SparseVec)],
) -> (i64, SparseVec) {
    let total: i64 = head.0 + args.iter().map(|(d, _)| d).sum::<i64>();
    let mut stack: Vec<(Vec<usize>, Scalar)> = head
        .1
        .iter()
        .map(|(i, c)| (vec![*i], c.clone()))
        .collect();
    for (_, coords) in args {
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
    let mut degs = vec![head.0];
    degs.extend(args.iter().map(|(d, _)| *d));
    let mut acc: SparseVec = Vec::new();
    for (idxs, c) in stack {
        let (n, pos) = ts.position(&degs, &idxs);
        debug_assert_eq!(n, total);
        acc = vec_add(&acc, &vec![(pos, c)]);
    }
    (total, acc)
}

/// A module over a P-algebra: one complex per color with one module slot
/// per action instance.
#[derive(Debug, Clone)]
pub struct AModule {
    algebra: PAlgebra,
    values: BTreeMap<Color, ChainComplex>,
    /// (seq, module slot) -> P(seq) ⊗ A…⊗ N(c_k) ⊗…A -> N(c)
    actions: BTreeMap<(CSeq, usize), ChainMap>,
}

impl AModule {
    pub fn from_parts(
        algebra: PAlgebra,
        values: BTreeMap<Color, ChainComplex>,
        actions: BTreeMap<(CSeq, usize), ChainMap>,
    ) -> AModule {
        AModule {
            algebra,
            values,
            actions,
        }
    }

    pub fn validated(self) -> Result<AModule> {
        let report = check_amodule(&self);
        if report.ok() {
            Ok(self)
        } else {
            Err(Error::NotAModule(report))
        }
    }

    pub fn algebra(&self) -> &PAlgebra {
        &self.algebra
    }

    pub fn field(&self) -> FieldSpec {
        self.algebra.field()
    }

    pub fn value(&self, c: Color) -> ChainComplex {
        self.values
            .get(&c)
            .cloned()
            .unwrap_or_else(|| ChainComplex::zero(self.field()))
    }

    pub fn values(&self) -> &BTreeMap<Color, ChainComplex> {
        &self.values
    }

    pub fn action_entries(&self) -> impl Iterator<Item = (&(CSeq, usize), &ChainMap)> {
        self.actions.iter()
    }

    pub fn total_dim(&self) -> usize {
        self.values.values().map(|v| v.total_dim()).sum()
    }

    pub fn action_space(&self, seq: &CSeq, k: usize) -> TensorSpace {
        let plvl = self.algebra.operad.level(seq);
        let vals: Vec<ChainComplex> = seq
            .inputs
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                if i == k {
                    self.value(c)
                } else {
                    self.algebra.value(c)
                }
            })
            .collect();
        let mut refs: Vec<&ChainComplex> = vec![&plvl];
        refs.extend(vals.iter());
        TensorSpace::new(&refs, self.field())
    }

    pub fn action(&self, seq: &CSeq, k: usize) -> ChainMap {
        match self.actions.get(&(seq.clone(), k)) {
            Some(m) => m.clone(),
            None => ChainMap::zero_map(
                self.action_space(seq, k).complex,
                self.value(seq.output),
                0,
            ),
        }
    }

    /// Evaluate μ · (a_1, …, m at slot k, …, a_n).
    pub fn act(
        &self,
        seq: &CSeq,
        k: usize,
        mu: &(i64, SparseVec),
        args: &[(i64, SparseVec)],
    ) -> (i64, SparseVec) {
        assert_eq!(args.len(), seq.arity());
        let ts = self.action_space(seq, k);
        let (total, acc) = expand_tuple(&ts, mu, args);
        (total, self.action(seq, k).component(total).apply(&acc))
    }
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

/// Every tuple of basis vectors for the given complexes.
fn arg_tuples(values: &[ChainComplex], field: FieldSpec) -> Vec<Vec<(i64, SparseVec)>> {
    let mut out: Vec<Vec<(i64, SparseVec)>> = vec![Vec::new()];
    for v in values {
        let mut next = Vec::new();
        for prefix in &out {
            for (d, i) in basis_of(v) {
                let mut p = prefix.clone();
                p.push((d, vec![(i, field.one())]));
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Verify associativity, unitality, and equivariance of an algebra.
pub fn check_algebra(a: &PAlgebra) -> AxiomReport {
    let mut report = AxiomReport::default();
    let p = &a.operad;
    let field = a.field();
    let seqs: Vec<CSeq> = p.coll().seqs().cloned().collect();

    for c in p.colors().iter() {
        let seq = CSeq::new(vec![c], c);
        let unit = (0i64, p.unit_vec(c));
        for (d, i) in basis_of(&a.value(c)) {
            let x = (d, vec![(i, field.one())]);
            let r = a.act(&seq, &unit, &[x.clone()]);
            if r.1 != x.1 {
                report.push("algebra unit", format!("color {c} deg {d} basis {i}"), "differs");
            }
        }
    }

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
                let arg_cxs: Vec<ChainComplex> =
                    res.inputs.iter().map(|&c| a.value(c)).collect();
                for (d1, b1) in basis_of(&p.level(s1)) {
                    let mu = (d1, vec![(b1, field.one())]);
                    for (d2, b2) in basis_of(&p.level(s2)) {
                        let nu = (d2, vec![(b2, field.one())]);
                        let comp = p.compose_vec(s1, &mu, i, s2, &nu);
                        for args in arg_tuples(&arg_cxs, field) {
                            let lhs = a.act(&res, &comp, &args);
                            let inner = a.act(s2, &nu, &args[i..i + s2.arity()]);
                            // sign: ν moves past a_1..a_{i-1}
                            let crossed: i64 = args[..i].iter().map(|(d, _)| *d).sum();
                            let sign = if (crossed * d2).rem_euclid(2) == 1 {
                                field.from_i64(-1)
                            } else {
                                field.one()
                            };
                            let mut outer_args: Vec<(i64, SparseVec)> = args[..i].to_vec();
                            outer_args.push(inner);
                            outer_args.extend(args[i + s2.arity()..].to_vec());
                            let rhs0 = a.act(s1, &mu, &outer_args);
                            if lhs.1 != vec_scale(&rhs0.1, &sign) {
                                report.push(
                                    "algebra associativity",
                                    format!("({s1},{s2},{i};{b1},{b2})"),
                                    "differs",
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    for seq in &seqs {
        let n = seq.arity();
        for sl in 0..n.saturating_sub(1) {
            let tseq = seq.swap(sl);
            let act = p.coll().action_gen(seq, sl);
            let arg_cxs: Vec<ChainComplex> = seq.inputs.iter().map(|&c| a.value(c)).collect();
            for (d1, b1) in basis_of(&p.level(seq)) {
                let mu = (d1, vec![(b1, field.one())]);
                let smu = (d1, act.component(d1).apply(&mu.1));
                for args in arg_tuples(&arg_cxs, field) {
                    let lhs = a.act(seq, &mu, &args);
                    let mut perm_args = args.clone();
                    perm_args.swap(sl, sl + 1);
                    let sign = if (args[sl].0 * args[sl + 1].0).rem_euclid(2) == 1 {
                        field.from_i64(-1)
                    } else {
                        field.one()
                    };
                    let rhs0 = a.act(&tseq, &smu, &perm_args);
                    if lhs.1 != vec_scale(&rhs0.1, &sign) {
                        report.push(
                            "algebra equivariance",
                            format!("{seq} s_{sl} basis {b1}"),
                            "differs",
                        );
                    }
                }
            }
        }
    }

    report
}

/// Verify the module axioms on admissible instances.
pub fn check_amodule(n: &AModule) -> AxiomReport {
    let mut report = AxiomReport::default();
    let a = &n.algebra;
    let p = &a.operad;
    let field = n.field();
    let seqs: Vec<CSeq> = p.coll().seqs().cloned().collect();

    for c in p.colors().iter() {
        let seq = CSeq::new(vec![c], c);
        let unit = (0i64, p.unit_vec(c));
        for (d, i) in basis_of(&n.value(c)) {
            let x = (d, vec![(i, field.one())]);
            let r = n.act(&seq, 0, &unit, &[x.clone()]);
            if r.1 != x.1 {
                report.push("module unit", format!("color {c} deg {d} basis {i}"), "differs");
            }
        }
    }

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
                for k in 0..res.arity() {
                    let arg_cxs: Vec<ChainComplex> = res
                        .inputs
                        .iter()
                        .enumerate()
                        .map(|(t, &c)| if t == k { n.value(c) } else { a.value(c) })
                        .collect();
                    for (d1, b1) in basis_of(&p.level(s1)) {
                        let mu = (d1, vec![(b1, field.one())]);
                        for (d2, b2) in basis_of(&p.level(s2)) {
                            let nu = (d2, vec![(b2, field.one())]);
                            let comp = p.compose_vec(s1, &mu, i, s2, &nu);
                            for args in arg_tuples(&arg_cxs, field) {
                                let lhs = n.act(&res, k, &comp, &args);
                                let crossed: i64 = args[..i].iter().map(|(d, _)| *d).sum();
                                let sign = if (crossed * d2).rem_euclid(2) == 1 {
                                    field.from_i64(-1)
                                } else {
                                    field.one()
                                };
                                let in_block = k >= i && k < i + s2.arity();
                                let rhs0 = if in_block {
                                    let inner =
                                        n.act(s2, k - i, &nu, &args[i..i + s2.arity()]);
                                    let mut outer: Vec<(i64, SparseVec)> = args[..i].to_vec();
                                    outer.push(inner);
                                    outer.extend(args[i + s2.arity()..].to_vec());
                                    n.act(s1, i, &mu, &outer)
                                } else {
                                    let inner = a.act(s2, &nu, &args[i..i + s2.arity()]);
                                    let mut outer: Vec<(i64, SparseVec)> = args[..i].to_vec();
                                    outer.push(inner);
                                    outer.extend(args[i + s2.arity()..].to_vec());
                                    let kk = if k < i { k } else { k - s2.arity() + 1 };
                                    n.act(s1, kk, &mu, &outer)
                                };
                                if lhs.1 != vec_scale(&rhs0.1, &sign) {
                                    report.push(
                                        "module associativity",
                                        format!("({s1},{s2},{i};slot {k};{b1},{b2})"),
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

    for seq in &seqs {
        let nn = seq.arity();
        for sl in 0..nn.saturating_sub(1) {
            let tseq = seq.swap(sl);
            let act = p.coll().action_gen(seq, sl);
            for k in 0..nn {
                let arg_cxs: Vec<ChainComplex> = seq
                    .inputs
                    .iter()
                    .enumerate()
                    .map(|(t, &c)| if t == k { n.value(c) } else { a.value(c) })
                    .collect();
                let tk = if k == sl {
                    sl + 1
                } else if k == sl + 1 {
                    sl
                } else {
                    k
                };
                for (d1, b1) in basis_of(&p.level(seq)) {
                    let mu = (d1, vec![(b1, field.one())]);
                    let smu = (d1, act.component(d1).apply(&mu.1));
                    for args in arg_tuples(&arg_cxs, field) {
                        let lhs = n.act(seq, k, &mu, &args);
                        let mut perm_args = args.clone();
                        perm_args.swap(sl, sl + 1);
                        let sign = if (args[sl].0 * args[sl + 1].0).rem_euclid(2) == 1 {
                            field.from_i64(-1)
                        } else {
                            field.one()
                        };
                        let rhs0 = n.act(&tseq, tk, &smu, &perm_args);
                        if lhs.1 != vec_scale(&rhs0.1, &sign) {
                            report.push(
                                "module equivariance",
                                format!("{seq} s_{sl} slot {k} basis {b1}"),
                                "differs",
                            );
                        }
                    }
                }
            }
        }
    }

    report
}

/// An algebra as a module over itself.
pub fn self_module(a: &PAlgebra) -> AModule {
    let mut actions = BTreeMap::new();
    for seq in a.operad.coll().seqs() {
        for k in 0..seq.arity() {
            actions.insert((seq.clone(), k), a.action(seq));
        }
    }
    AModule {
        algebra: a.clone(),
        values: a.values.clone(),
        actions,
    }
}

/// The trivial Com-algebra k: every operation acts as multiplication.
pub fn trivial_algebra(com: &Operad) -> Result<PAlgebra> {
    truncated_polynomial(com, 0)
}

/// Truncated polynomial algebra k[x]/(x^{deg+1}) over Com, with basis
/// 1, x, …, x^deg in degree 0.
pub fn truncated_polynomial(com: &Operad, deg: usize) -> Result<PAlgebra> {
    let field = com.field();
    let labels = (0..=deg)
        .map(|k| Label::atom(format!("x{k}")))
        .collect::<Vec<_>>();
    let mut values = BTreeMap::new();
    values.insert(0usize, ChainComplex::concentrated(field, 0, labels));
    let mut actions = BTreeMap::new();
    for seq in com.coll().seqs() {
        let a0 = PAlgebra {
            operad: com.clone(),
            values: values.clone(),
            actions: BTreeMap::new(),
        };
        let ts = a0.action_space(seq);
        let mut mb = MapBuilder::new(ts.complex.clone(), values[&0].clone(), 0);
        for (col, (_, idxs)) in ts.tuples(0).iter().enumerate() {
            let total: usize = idxs[1..].iter().sum();
            if total <= deg {
                mb.add(0, col, total, field.one());
            }
        }
        actions.insert(seq.clone(), mb.build()?);
    }
    PAlgebra {
        operad: com.clone(),
        values,
        actions,
    }
    .validated()
}

/// The endomorphism bimodule of an algebra-module pair: level
/// (c_1..c_n;c) is Hom(A(c_1)⊗…⊗A(c_n), N(c)), symmetric groups permute
/// the input factors, the left action runs through the module structure
/// and the right action through the algebra structure.
pub fn end_ib(a: &PAlgebra, n: &AModule) -> Result<IBimod> {
    let p = a.operad().clone();
    let field = a.field();
    let mut levels: BTreeMap<CSeq, ChainComplex> = BTreeMap::new();
    let mut homs: BTreeMap<CSeq, HomSpace> = BTreeMap::new();
    let mut domains: BTreeMap<CSeq, TensorSpace> = BTreeMap::new();
    for seq in Collection::all_seqs(p.colors(), p.max_arity()) {
        let vals: Vec<ChainComplex> = seq.inputs.iter().map(|&c| a.value(c)).collect();
        let refs: Vec<&ChainComplex> = vals.iter().collect();
        let dom = TensorSpace::new(&refs, field);
        let h = HomSpace::new(&dom.complex, &n.value(seq.output))?;
        if h.complex.is_zero() {
            continue;
        }
        levels.insert(seq.clone(), h.complex.clone());
        homs.insert(seq.clone(), h);
        domains.insert(seq.clone(), dom);
    }

    let mut actions = BTreeMap::new();
    for (seq, lvl) in &levels {
        for sl in 0..seq.arity().saturating_sub(1) {
            let tseq = seq.swap(sl);
            let tgt = levels
                .get(&tseq)
                .cloned()
                .unwrap_or_else(|| ChainComplex::zero(field));
            let dom_s = &domains[seq];
            let dom_t = &domains[&tseq];
            let mut sigma: Vec<usize> = (0..seq.arity()).collect();
            sigma.swap(sl, sl + 1);
            // swap: dom(tseq) -> dom(seq); σ* φ = φ ∘ swap
            let swap = crate::chain::koszul_permute(dom_t, dom_s, &sigma)?;
            let h_s = &homs[seq];
            let h_t = homs.get(&tseq);
            let mut mb = MapBuilder::new(lvl.clone(), tgt.clone(), 0);
            for hdeg in lvl.degrees() {
                for (hidx, (q, i, j)) in h_s.entries(hdeeg_fix(hdeg)).iter().enumerate() {
                    for (tq, ti) in basis_of(&dom_t.complex) {
                        if tq != *q {
                            continue;
                        }
                        let img = swap.component(tq).apply(&vec![(ti, field.one())]);
                        let coeff =
                            img.iter().find(|(x, _)| x == i).map(|(_, c)| c.clone());
                        if let (Some(c), Some(ht)) = (coeff, h_t) {
                            let pos = ht.position(hdeg, tq, ti, *j);
                            mb.add(hdeg, hidx, pos, c);
                        }
                    }
                }
            }
            actions.insert((seq.clone(), sl), mb.build()?);
        }
    }
    let coll = Collection::new(
        p.colors().clone(),
        field,
        p.max_arity(),
        levels.clone(),
        actions,
        false,
    )?;

    let mut left = BTreeMap::new();
    let pseqs: Vec<CSeq> = p.coll().seqs().cloned().collect();
    let eseqs: Vec<CSeq> = coll.seqs().cloned().collect();
    for s1 in &pseqs {
        for s2 in &eseqs {
            for i in 0..s1.arity() {
                if s1.inputs[i] != s2.output || s1.arity() + s2.arity() > coll.max_arity() + 1
                {
                    continue;
                }
                let res = s1.substitute(i, s2);
                if !homs.contains_key(&res) {
                    continue;
                }
                let l1 = p.level(s1);
                let l2 = coll.level(s2);
                let ts = TensorSpace::new(&[&l1, &l2], field);
                let h_res = &homs[&res];
                let h_s2 = &homs[s2];
                let dom_res = &domains[&res];
                let dom_s2 = &domains[s2];
                let mut mb = MapBuilder::new(ts.complex.clone(), coll.level(&res), 0);
                for nn in ts.complex.degrees() {
                    for (col, (degs, idxs)) in ts.tuples(nn).iter().enumerate() {
                        let mu = (degs[0], vec![(idxs[0], field.one())]);
                        let (hq, hi, hj) = h_s2.entries(degs[1])[idxs[1]];
                        for ddeg in dom_res.complex.degrees() {
                            for (dpos, (ddegs, didxs)) in
                                dom_res.tuples(ddeg).iter().enumerate()
                            {
                                let bdegs = &ddegs[i..i + s2.arity()];
                                let bidxs = &didxs[i..i + s2.arity()];
                                let bdeg: i64 = bdegs.iter().sum();
                                if bdeg != hq {
                                    continue;
                                }
                                let (_, bpos) = dom_s2.position(bdegs, bidxs);
                                if bpos != hi {
                                    continue;
                                }
                                // φ (degree |φ|) passes a_1..a_{i-1}
                                let crossed: i64 = ddegs[..i].iter().sum();
                                let sign = if (degs[1] * crossed).rem_euclid(2) == 1 {
                                    field.from_i64(-1)
                                } else {
                                    field.one()
                                };
                                let mut args: Vec<(i64, SparseVec)> = Vec::new();
                                for (t, (dd, di)) in
                                    ddegs.iter().zip(didxs.iter()).enumerate()
                                {
                                    if t == i {
                                        args.push((hq + degs[1], vec![(hj, field.one())]));
                                    }
                                    if t < i || t >= i + s2.arity() {
                                        args.push((*dd, vec![(*di, field.one())]));
                                    }
                                }
                                if args.len() < s1.arity() {
                                    // the φ block sat at the end
                                    args.push((hq + degs[1], vec![(hj, field.one())]));
                                }
                                let out = n.act(s1, i, &mu, &args);
                                for (t, v) in out.1 {
                                    let pos = h_res.position(nn, ddeg, dpos, t);
                                    mb.add(nn, col, pos, &sign * &v);
                                }
                            }
                        }
                    }
                }
                left.insert((s1.clone(), s2.clone(), i), mb.build()?);
            }
        }
    }

    let mut right = BTreeMap::new();
    for s1 in &eseqs {
        for s2 in &pseqs {
            for j in 0..s1.arity() {
                if s1.inputs[j] != s2.output || s1.arity() + s2.arity() > coll.max_arity() + 1
                {
                    continue;
                }
                let res = s1.substitute(j, s2);
                if !homs.contains_key(&res) {
                    continue;
                }
                let l1 = coll.level(s1);
                let l2 = p.level(s2);
                let ts = TensorSpace::new(&[&l1, &l2], field);
                let h_res = &homs[&res];
                let h_s1 = &homs[s1];
                let dom_res = &domains[&res];
                let dom_s1 = &domains[s1];
                let mut mb = MapBuilder::new(ts.complex.clone(), coll.level(&res), 0);
                for nn in ts.complex.degrees() {
                    for (col, (degs, idxs)) in ts.tuples(nn).iter().enumerate() {
                        let (hq, hi, hj) = h_s1.entries(degs[0])[idxs[0]];
                        let nu = (degs[1], vec![(idxs[1], field.one())]);
                        for ddeg in dom_res.complex.degrees() {
                            for (dpos, (ddegs, didxs)) in
                                dom_res.tuples(ddeg).iter().enumerate()
                            {
                                let bargs: Vec<(i64, SparseVec)> = ddegs
                                    [j..j + s2.arity()]
                                    .iter()
                                    .zip(didxs[j..j + s2.arity()].iter())
                                    .map(|(d, i)| (*d, vec![(*i, field.one())]))
                                    .collect();
                                let baval = a.act(s2, &nu, &bargs);
                                if baval.1.is_empty() {
                                    continue;
                                }
                                let crossed: i64 = ddegs[..j].iter().sum();
                                let sign = if (degs[1] * crossed).rem_euclid(2) == 1 {
                                    field.from_i64(-1)
                                } else {
                                    field.one()
                                };
                                let mut sdegs: Vec<i64> = ddegs[..j].to_vec();
                                sdegs.push(baval.0);
                                sdegs.extend(&ddegs[j + s2.arity()..]);
                                for (bi, bc) in &baval.1 {
                                    let mut sidxs: Vec<usize> = didxs[..j].to_vec();
                                    sidxs.push(*bi);
                                    sidxs.extend(&didxs[j + s2.arity()..]);
                                    let (sdeg, spos) = dom_s1.position(&sdegs, &sidxs);
                                    if sdeg != hq || spos != hi {
                                        continue;
                                    }
                                    let pos = h_res.position(nn, ddeg, dpos, hj);
                                    mb.add(nn, col, pos, &sign * bc);
                                }
                            }
                        }
                    }
                }
                right.insert((s1.clone(), s2.clone(), j), mb.build()?);
            }
        }
    }

    Ok(IBimod::from_parts(p, coll, left, right))
}

fn hdeeg_fix(d: i64) -> i64 {
    d
}

/// One derivation (or module map) as sparse entries
/// (color, degree, source index, target index, value).
pub type AlgMapBasis = Vec<(Color, i64, usize, usize, Scalar)>;

/// Basis of the space of degree-0 derivations A -> N.
pub fn algebra_derivations(a: &PAlgebra, n: &AModule) -> Result<Vec<AlgMapBasis>> {
    solve_color_maps(a, &a.values, &n.values, |rows, vars| {
        leibniz_rows(a, n, rows, vars)
    })
}

/// Strict degree-0 module maps M -> N over the same algebra.
pub fn hom_amodule(m: &AModule, n: &AModule) -> Result<Vec<AlgMapBasis>> {
    let a = m.algebra().clone();
    solve_color_maps(&a, &m.values, &n.values, |rows, vars| {
        module_map_rows(m, n, rows, vars)
    })
}

type VarTable = BTreeMap<(Color, i64, usize, usize), usize>;

fn solve_color_maps(
    a: &PAlgebra,
    src: &BTreeMap<Color, ChainComplex>,
    tgt: &BTreeMap<Color, ChainComplex>,
    extra: impl Fn(&mut Vec<SparseVec>, &VarTable),
) -> Result<Vec<AlgMapBasis>> {
    let p = a.operad();
    let field = a.field();
    let zero = ChainComplex::zero(field);
    let mut vars: VarTable = BTreeMap::new();
    for c in p.colors().iter() {
        let sv = src.get(&c).unwrap_or(&zero);
        let tv = tgt.get(&c).unwrap_or(&zero);
        for d in sv.degrees() {
            for i in 0..sv.dim(d) {
                for j in 0..tv.dim(d) {
                    let k = vars.len();
                    vars.insert((c, d, i, j), k);
                }
            }
        }
    }
    let mut rows: Vec<SparseVec> = Vec::new();
    // chain condition per color
    for c in p.colors().iter() {
        let sv = src.get(&c).unwrap_or(&zero);
        let tv = tgt.get(&c).unwrap_or(&zero);
        for d in sv.degrees() {
            let ds = sv.diff_at(d);
            let dt = tv.diff_at(d);
            for i in 0..sv.dim(d) {
                for jt in 0..tv.dim(d - 1) {
                    let mut row: SparseVec = Vec::new();
                    for j in 0..tv.dim(d) {
                        let cf = dt.entry(jt, j);
                        if !cf.is_zero() {
                            if let Some(&v) = vars.get(&(c, d, i, j)) {
                                row = vec_add(&row, &vec![(v, cf)]);
                            }
                        }
                    }
                    for ip in 0..sv.dim(d - 1) {
                        let cf = ds.entry(ip, i);
                        if !cf.is_zero() {
                            if let Some(&v) = vars.get(&(c, d - 1, ip, jt)) {
                                row = vec_add(&row, &vec![(v, -&cf)]);
                            }
                        }
                    }
                    if !row.is_empty() {
                        rows.push(row);
                    }
                }
            }
        }
    }
    extra(&mut rows, &vars);
    let mat = crate::linalg::SparseMat::from_triplets(
        rows.len(),
        vars.len(),
        field,
        rows.iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().map(move |(c, v)| (r, *c, v.clone()))),
    );
    let inv: BTreeMap<usize, (Color, i64, usize, usize)> =
        vars.into_iter().map(|(k, v)| (v, k)).collect();
    Ok(mat
        .kernel_basis()
        .into_iter()
        .map(|v| {
            v.into_iter()
                .map(|(k, cf)| {
                    let (c, d, i, j) = inv[&k];
                    (c, d, i, j, cf)
                })
                .collect()
        })
        .collect())
}

fn leibniz_rows(a: &PAlgebra, n: &AModule, rows: &mut Vec<SparseVec>, vars: &VarTable) {
    let p = a.operad();
    let field = a.field();
    for seq in p.coll().seqs() {
        let arg_cxs: Vec<ChainComplex> = seq.inputs.iter().map(|&c| a.value(c)).collect();
        let c_out = seq.output;
        let nv_out = n.value(c_out);
        for (d1, b1) in basis_of(&p.level(seq)) {
            let mu = (d1, vec![(b1, field.one())]);
            for args in arg_tuples(&arg_cxs, field) {
                let lhs = a.act(seq, &mu, &args);
                let total = lhs.0;
                for jt in 0..nv_out.dim(total) {
                    let mut row: SparseVec = Vec::new();
                    for (t, cf) in &lhs.1 {
                        if let Some(&v) = vars.get(&(c_out, total, *t, jt)) {
                            row = vec_add(&row, &vec![(v, cf.clone())]);
                        }
                    }
                    for k in 0..seq.arity() {
                        let ck = seq.inputs[k];
                        let (dk, ik) = (args[k].0, args[k].1[0].0);
                        for u in 0..n.value(ck).dim(dk) {
                            let mut margs = args.clone();
                            margs[k] = (dk, vec![(u, field.one())]);
                            let img = n.act(seq, k, &mu, &margs);
                            if let Some((_, cf)) = img.1.iter().find(|(t, _)| *t == jt) {
                                if let Some(&v) = vars.get(&(ck, dk, ik, u)) {
                                    row = vec_add(&row, &vec![(v, -cf)]);
                                }
                            }
                        }
                    }
                    if !row.is_empty() {
                        rows.push(row);
                    }
                }
            }
        }
    }
}

fn module_map_rows(m: &AModule, n: &AModule, rows: &mut Vec<SparseVec>, vars: &VarTable) {
    let a = m.algebra();
    let p = a.operad();
    let field = a.field();
    for seq in p.coll().seqs() {
        for k in 0..seq.arity() {
            let ck = seq.inputs[k];
            let arg_cxs: Vec<ChainComplex> = seq
                .inputs
                .iter()
                .enumerate()
                .map(|(t, &c)| if t == k { m.value(c) } else { a.value(c) })
                .collect();
            let c_out = seq.output;
            for (d1, b1) in basis_of(&p.level(seq)) {
                let mu = (d1, vec![(b1, field.one())]);
                for args in arg_tuples(&arg_cxs, field) {
                    let lhs = m.act(seq, k, &mu, &args);
                    let total = lhs.0;
                    for jt in 0..n.value(c_out).dim(total) {
                        let mut row: SparseVec = Vec::new();
                        for (t, cf) in &lhs.1 {
                            if let Some(&v) = vars.get(&(c_out, total, *t, jt)) {
                                row = vec_add(&row, &vec![(v, cf.clone())]);
                            }
                        }
                        let (dk, ik) = (args[k].0, args[k].1[0].0);
                        for u in 0..n.value(ck).dim(dk) {
                            let mut margs = args.clone();
                            margs[k] = (dk, vec![(u, field.one())]);
                            let img = n.act(seq, k, &mu, &margs);
                            if let Some((_, cf)) = img.1.iter().find(|(t, _)| *t == jt) {
                                if let Some(&v) = vars.get(&(ck, dk, ik, u)) {
                                    row = vec_add(&row, &vec![(v, -cf)]);
                                }
                            }
                        }
                        if !row.is_empty() {
                            rows.push(row);
                        }
                    }
                }
            }
        }
    }
}


/// Span with reversed column preference: pivots land on the largest
/// indices, so quotient representatives concentrate on the earliest
/// summands (the small-arity outer parts whose actions stay exact).
struct RevSpan {
    dim: usize,
    inner: Span,
}

impl RevSpan {
    fn new(dim: usize, field: FieldSpec) -> RevSpan {
        RevSpan {
            dim,
            inner: Span::new(dim, field),
        }
    }

    fn rev(&self, v: &SparseVec) -> SparseVec {
        let mut out: SparseVec = v
            .iter()
            .map(|(j, c)| (self.dim - 1 - j, c.clone()))
            .collect();
        out.sort_by_key(|e| e.0);
        out
    }

    fn insert(&mut self, v: SparseVec) -> bool {
        let r = self.rev(&v);
        self.inner.insert(r)
    }

    fn pivots(&self) -> Vec<usize> {
        let mut p: Vec<usize> = self
            .inner
            .pivots()
            .into_iter()
            .map(|j| self.dim - 1 - j)
            .collect();
        p.sort_unstable();
        p
    }

    fn reduce_full(&self, v: &SparseVec) -> SparseVec {
        self.rev(&self.inner.reduce_full(&self.rev(v)))
    }
}

/// The relative composite M ∘_P A with its induced A-module structure.
pub struct RelativeComposite {
    pub module: AModule,
    pub pre: Composite,
    pub proj: BTreeMap<Color, ChainMap>,
    pub section: BTreeMap<Color, ChainMap>,
}

/// Restrict an algebra to a lower operad ceiling.
pub fn restrict_algebra(a: &PAlgebra, n: usize) -> Result<PAlgebra> {
    let p_small = crate::operad::restrict_operad_ceiling(a.operad(), n)?;
    let actions = a
        .actions
        .iter()
        .filter(|(seq, _)| seq.arity() <= n)
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    Ok(PAlgebra {
        operad: p_small,
        values: a.values.clone(),
        actions,
    })
}

pub fn act_relative(m: &IBimod, a: &PAlgebra) -> Result<RelativeComposite> {
    // a module that is inexact at its top arity cannot support the full
    // induced action; work over the exact range
    let mcap = m.coll().exact_max();
    if mcap < m.max_arity() {
        let m_small = crate::ibmod::restrict_ibmod_ceiling(m, mcap)?;
        let a_small = restrict_algebra(a, mcap)?;
        return act_relative(&m_small, &a_small);
    }
    let p = a.operad();
    let field = a.field();
    let a_coll = a.as_collection();
    let ma = compose(m.coll(), &a_coll)?;
    let pseqs: Vec<CSeq> = p.coll().seqs().cloned().collect();
    let mseqs: Vec<CSeq> = m.coll().seqs().cloned().collect();

    let mut spans: BTreeMap<(Color, i64), RevSpan> = BTreeMap::new();
    let mut insert_rel = |spans: &mut BTreeMap<(Color, i64), RevSpan>,
                          c: Color,
                          deg: i64,
                          v: SparseVec| {
        if v.is_empty() {
            return;
        }
        let dim = ma.coll.level(&CSeq::new(vec![], c)).dim(deg);
        spans
            .entry((c, deg))
            .or_insert_with(|| RevSpan::new(dim, field))
            .insert(v);
    };

    // relation instances must stay within the exact range of M
    let mcap = m.coll().exact_max();
    for s1 in &mseqs {
        for s2 in &pseqs {
            for j in 0..s1.arity() {
                if s1.inputs[j] != s2.output || s1.arity() + s2.arity() > m.max_arity() + 1 {
                    continue;
                }
                let res = s1.substitute(j, s2);
                if res.arity() > mcap || s1.arity() > mcap {
                    continue;
                }
                let c_out = s1.output;
                let arg_cxs: Vec<ChainComplex> =
                    res.inputs.iter().map(|&c| a.value(c)).collect();
                for (d1, b1) in basis_of(&m.level(s1)) {
                    let mv = (d1, vec![(b1, field.one())]);
                    for (d2, b2) in basis_of(&p.level(s2)) {
                        let pv = (d2, vec![(b2, field.one())]);
                        let mp_elem = m.right_vec(s1, &mv, j, s2, &pv);
                        for args in arg_tuples(&arg_cxs, field) {
                            let lhs = express_ma(&ma, &res, &mp_elem, &args)?;
                            let crossed: i64 = args[..j].iter().map(|(d, _)| *d).sum();
                            let sign = if (d2 * crossed).rem_euclid(2) == 1 {
                                field.from_i64(-1)
                            } else {
                                field.one()
                            };
                            let block = a.act(s2, &pv, &args[j..j + s2.arity()]);
                            let mut outer: Vec<(i64, SparseVec)> = args[..j].to_vec();
                            outer.push(block);
                            outer.extend(args[j + s2.arity()..].to_vec());
                            let rhs = express_ma(&ma, s1, &mv, &outer)?;
                            let rel = vec_add(
                                &lhs.1,
                                &vec_scale(&rhs.1, &-&sign),
                            );
                            insert_rel(&mut spans, c_out, lhs.0, rel);
                        }
                    }
                }
            }
        }
    }

    let mut values = BTreeMap::new();
    let mut proj = BTreeMap::new();
    let mut section = BTreeMap::new();
    for c in p.colors().iter() {
        let lvl = ma.coll.level(&CSeq::new(vec![], c));
        let mut basis_map: BTreeMap<i64, Vec<Label>> = BTreeMap::new();
        let mut survivors: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for d in lvl.degrees() {
            let pivots = spans.get(&(c, d)).map(|s| s.pivots()).unwrap_or_default();
            let keep: Vec<usize> = (0..lvl.dim(d)).filter(|i| !pivots.contains(i)).collect();
            if keep.is_empty() {
                continue;
            }
            basis_map.insert(
                d,
                keep.iter()
                    .map(|&i| Label::tag("cls", lvl.labels(d)[i].clone()))
                    .collect(),
            );
            survivors.insert(d, keep);
        }
        // projection and section against the graded quotient, then the
        // induced differential
        let build_maps = |quo: &ChainComplex| -> Result<(ChainMap, ChainMap)> {
            let mut pm = MapBuilder::new(lvl.clone(), quo.clone(), 0);
            let mut sm = MapBuilder::new(quo.clone(), lvl.clone(), 0);
            for (d, keep) in &survivors {
                for i in 0..lvl.dim(*d) {
                    let red = match spans.get(&(c, *d)) {
                        Some(s) => s.reduce_full(&vec![(i, field.one())]),
                        None => vec![(i, field.one())],
                    };
                    for (t, val) in red {
                        if let Ok(k) = keep.binary_search(&t) {
                            pm.add(*d, i, k, val);
                        }
                    }
                }
                for (k, &i) in keep.iter().enumerate() {
                    sm.add(*d, k, i, field.one());
                }
            }
            Ok((pm.build()?, sm.build()?))
        };
        let quo0 = ChainComplex::graded(field, basis_map.clone());
        let (pmap, smap) = build_maps(&quo0)?;
        let mut diff = BTreeMap::new();
        for d in quo0.degrees() {
            let mat = pmap
                .component(d - 1)
                .mul(&lvl.diff_at(d))
                .mul(&smap.component(d));
            if !mat.is_zero() {
                diff.insert(d, mat);
            }
        }
        let quo = ChainComplex::new(field, basis_map, diff)?;
        let (pmap, smap) = build_maps(&quo)?;
        values.insert(c, quo);
        proj.insert(c, pmap);
        section.insert(c, smap);
    }

    let mut actions = BTreeMap::new();
    for seq in &pseqs {
        for k in 0..seq.arity() {
            let tmp = AModule {
                algebra: a.clone(),
                values: values.clone(),
                actions: BTreeMap::new(),
            };
            let ts = tmp.action_space(seq, k);
            let tgt = values
                .get(&seq.output)
                .cloned()
                .unwrap_or_else(|| ChainComplex::zero(field));
            let mut mb = MapBuilder::new(ts.complex.clone(), tgt, 0);
            let ck = seq.inputs[k];
            for nn in ts.complex.degrees() {
                for (col, (degs, idxs)) in ts.tuples(nn).iter().enumerate() {
                    let mu = (degs[0], vec![(idxs[0], field.one())]);
                    let Some(sec) = section.get(&ck) else { continue };
                    let lifted = sec
                        .component(degs[k + 1])
                        .apply(&vec![(idxs[k + 1], field.one())]);
                    if lifted.is_empty() {
                        continue;
                    }
                    let img =
                        ma_left_act(&ma, m, a, seq, k, &mu, degs, idxs, &(degs[k + 1], lifted))?;
                    let Some(pr) = proj.get(&seq.output) else { continue };
                    let out = pr.component(img.0).apply(&img.1);
                    for (t, v) in out {
                        mb.add(nn, col, t, v);
                    }
                }
            }
            actions.insert((seq.clone(), k), mb.build()?);
        }
    }

    let module = AModule {
        algebra: a.clone(),
        values,
        actions,
    };
    Ok(RelativeComposite {
        module,
        pre: ma,
        proj,
        section,
    })
}

/// Express m ⊗ (one arity-0 block per input of seq) in the composite.
pub fn express_ma(
    ma: &Composite,
    seq: &CSeq,
    mv: &(i64, SparseVec),
    args: &[(i64, SparseVec)],
) -> Result<(i64, SparseVec)> {
    if mv.1.is_empty() {
        let deg = mv.0 + args.iter().map(|(d, _)| d).sum::<i64>();
        return Ok((deg, Vec::new()));
    }
    let target = CSeq::new(vec![], seq.output);
    let (cshape, tau) = crate::composite::ComposeShape::canonicalize(
        seq.inputs.iter().map(|&c| (Vec::new(), c)).collect::<Vec<_>>(),
    );
    let si = ma
        .shape_index(&target, &cshape)
        .ok_or_else(|| Error::Config(format!("composite shape missing at {target}")))?;
    let field = ma.coll.field();
    // reorder the argument blocks by tau, with Koszul signs; the m-part
    // moves by the matching action inside express (blocks of equal color
    // commute through the symmetrized summand)
    let inv = tau.inverse();
    let mut sign = 1i64;
    for x in 0..args.len() {
        for y in (x + 1)..args.len() {
            if tau.apply(x) > tau.apply(y)
                && args[x].0.rem_euclid(2) == 1
                && args[y].0.rem_euclid(2) == 1
            {
                sign = -sign;
            }
        }
    }
    let mut factors: Vec<(i64, SparseVec)> = vec![mv.clone()];
    for t in 0..args.len() {
        factors.push(args[inv.apply(t)].clone());
    }
    let (deg, v) = ma.express_tensor(&target, si, &factors);
    Ok((deg, vec_scale(&v, &field.from_i64(sign))))
}

/// μ acting at slot k on a lifted element of the arity-0 composite.
#[allow(clippy::too_many_arguments)]
fn ma_left_act(
    ma: &Composite,
    m: &IBimod,
    a: &PAlgebra,
    seq: &CSeq,
    k: usize,
    mu: &(i64, SparseVec),
    degs: &[i64],
    idxs: &[usize],
    lifted: &(i64, SparseVec),
) -> Result<(i64, SparseVec)> {
    let field = a.field();
    let src_level = CSeq::new(vec![], seq.inputs[k]);
    let (shapes, built) = ma
        .levels
        .get(&src_level)
        .ok_or_else(|| Error::Config("composite level missing".into()))?;
    let mut acc: SparseVec = Vec::new();
    let mut out_deg = mu.0
        + degs[1..].iter().sum::<i64>()
        + lifted.0
        - degs[k + 1];
    for (si, shape) in shapes.iter().enumerate() {
        let tv = built.restrict(si, lifted.0, &lifted.1);
        if tv.is_empty() {
            continue;
        }
        let ts = &built.summands[si].tensor;
        let m_seq = shape.outer_seq(&src_level);
        for (pos, cv) in &tv {
            let (tdegs, tidxs) = &ts.tuples(lifted.0)[*pos];
            let mvv = (tdegs[0], vec![(tidxs[0], cv.clone())]);
            let new_m = m.left_vec(seq, mu, k, &m_seq, &mvv);
            if new_m.1.is_empty() {
                continue;
            }
            // the inner blocks replace slot k; graded a-args after slot k
            // cross the m-part's blocks only through the symmetrized
            // express, which tracks its own signs
            let mut args2: Vec<(i64, SparseVec)> = Vec::new();
            for t in 0..seq.arity() {
                if t == k {
                    for (bdeg, bidx) in tdegs[1..].iter().zip(tidxs[1..].iter()) {
                        args2.push((*bdeg, vec![(*bidx, field.one())]));
                    }
                } else {
                    args2.push((degs[t + 1], vec![(idxs[t + 1], field.one())]));
                }
            }
            let res_seq = seq.substitute(k, &m_seq);
            let img = express_ma(ma, &res_seq, &new_m, &args2)?;
            out_deg = img.0;
            acc = vec_add(&acc, &img.1);
        }
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
    fn trivial_and_truncated_algebras_check() {
        let com = preset(Preset::Com, q(), 4).unwrap();
        assert!(check_algebra(&trivial_algebra(&com).unwrap()).ok());
        let a = truncated_polynomial(&com, 2).unwrap();
        assert!(check_algebra(&a).ok());
        assert!(check_amodule(&self_module(&a)).ok());
    }

    #[test]
    fn corrupted_action_is_witnessed() {
        let com = preset(Preset::Com, q(), 3).unwrap();
        let mut a = truncated_polynomial(&com, 2).unwrap();
        let key = CSeq::single(2);
        let bad = a.actions[&key].scale(&q().from_i64(2));
        a.actions.insert(key, bad);
        assert!(!check_algebra(&a).ok());
    }

    #[test]
    fn graded_algebra_with_signs() {
        // one degree-1 generator: x·x = 0 is forced by graded commutativity
        let com = preset(Preset::Com, q(), 3).unwrap();
        let field = q();
        let mut basis = BTreeMap::new();
        basis.insert(0i64, vec![Label::atom("1")]);
        basis.insert(1i64, vec![Label::atom("x")]);
        let mut values = BTreeMap::new();
        values.insert(0usize, ChainComplex::graded(field, basis));
        let mut actions = BTreeMap::new();
        for seq in com.coll().seqs() {
            let a0 = PAlgebra::from_parts(com.clone(), values.clone(), BTreeMap::new());
            let ts = a0.action_space(seq);
            let tgt = values[&0].clone();
            let mut mb = MapBuilder::new(ts.complex.clone(), tgt, 0);
            for nn in ts.complex.degrees() {
                for (col, (degs, _)) in ts.tuples(nn).iter().enumerate() {
                    let xs = degs[1..].iter().filter(|&&d| d == 1).count();
                    if xs <= 1 {
                        mb.add(nn, col, if xs == 0 { 0 } else { 0 }, field.one());
                    }
                }
            }
            actions.insert(seq.clone(), mb.build().unwrap());
        }
        let a = PAlgebra::from_parts(com.clone(), values, actions);
        let rep = check_algebra(&a);
        assert!(rep.ok(), "graded algebra violations: {rep}");
    }

    #[test]
    fn end_ib_dims_and_axioms() {
        let com = preset(Preset::Com, q(), 3).unwrap();
        let a = truncated_polynomial(&com, 2).unwrap();
        let n = self_module(&a);
        let e = end_ib(&a, &n).unwrap();
        for m in 0..=3usize {
            let dim = e.level(&CSeq::single(m)).dim(0);
            assert_eq!(dim, 3usize.pow(m as u32) * 3, "arity {m}");
        }
        let rep = crate::ibmod::check_ibmod(&e);
        assert!(rep.ok(), "end violations: {rep}");
    }

    #[test]
    fn end_ib_of_trivial_pair_is_com_shaped() {
        let com = preset(Preset::Com, q(), 3).unwrap();
        let a = trivial_algebra(&com).unwrap();
        let n = self_module(&a);
        let e = end_ib(&a, &n).unwrap();
        for m in 0..=3usize {
            assert_eq!(e.level(&CSeq::single(m)).dim(0), 1);
        }
        assert!(crate::ibmod::check_ibmod(&e).ok());
    }

    #[test]
    fn derivations_of_truncated_polynomials() {
        // classical count for k[x]/(x³): span(x∂x, x²∂x)
        let com = preset(Preset::Com, q(), 4).unwrap();
        let a = truncated_polynomial(&com, 2).unwrap();
        let n = self_module(&a);
        let ders = algebra_derivations(&a, &n).unwrap();
        assert_eq!(ders.len(), 2);
        for d in &ders {
            assert!(d.iter().all(|(_, _, i, _, _)| *i != 0), "δ(1) = 0");
        }
    }

    #[test]
    fn derivations_of_trivial_algebra_vanish() {
        let com = preset(Preset::Com, q(), 3).unwrap();
        let a = trivial_algebra(&com).unwrap();
        let n = self_module(&a);
        assert!(algebra_derivations(&a, &n).unwrap().is_empty());
    }

    #[test]
    fn relative_composite_of_self_is_identity() {
        // P ∘_P A ≅ A
        let com = preset(Preset::Com, q(), 3).unwrap();
        let a = truncated_polynomial(&com, 2).unwrap();
        let m = crate::ibmod::self_ib(&com);
        let rel = act_relative(&m, &a).unwrap();
        assert_eq!(rel.module.value(0).dim(0), 3);
        let rep = check_amodule(&rel.module);
        assert!(rep.ok(), "relative module violations: {rep}");
    }

    #[test]
    fn relative_composite_of_free_is_free_module() {
        // Free^si(E) ∘_P A is the rank-one free A-module
        let com = preset(Preset::Com, q(), 4).unwrap();
        let e = Collection::unit_e(com.colors().clone(), q(), 4);
        let f = crate::ibmod::free_ib(&com, &e).unwrap();
        let a = truncated_polynomial(&com, 2).unwrap();
        let rel = act_relative(&f.ib, &a).unwrap();
        assert_eq!(rel.module.value(0).dim(0), 3);
        let rep = check_amodule(&rel.module);
        assert!(rep.ok(), "free relative violations: {rep}");
    }
}
