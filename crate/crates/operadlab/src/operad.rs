//! Colored dg operads: presets, partial compositions, and an exhaustive
//! axiom checker.
//!
//! Operads are specified by partial compositions ∘_i (0-indexed slots);
//! the total composition of the monoidal definition is recovered by
//! iterating them. Axiom checks quantify over admissible composites only:
//! every intermediate arity must stay at or below the ceiling.

use std::collections::BTreeMap;
use std::fmt;

use crate::chain::{tensor_maps, ChainComplex, ChainMap, MapBuilder, TensorSpace};
use crate::collection::{block_perm, CSeq, Collection, Color, ColorSet};
use crate::error::{Error, Result};
use crate::field::{FieldSpec, Scalar};
use crate::label::Label;
use crate::linalg::{vec_add, vec_scale, SparseVec};
use crate::perm::Perm;

/// One failed axiom instance: which axiom, on which witness, and the
/// first offending entry of the discrepancy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub axiom: String,
    pub witness: String,
    pub entry: String,
}

/// Outcome of an exhaustive axiom check; empty iff every check passed.
/// Witnesses come out in a deterministic order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AxiomReport {
    pub violations: Vec<Violation>,
}

impl AxiomReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(
        &mut self,
        axiom: impl Into<String>,
        witness: impl Into<String>,
        entry: impl Into<String>,
    ) {
        self.violations.push(Violation {
            axiom: axiom.into(),
            witness: witness.into(),
            entry: entry.into(),
        });
    }

    pub fn merge(&mut self, other: AxiomReport) {
        self.violations.extend(other.violations);
    }
}

impl fmt::Display for AxiomReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "(no violations)");
        }
        for v in &self.violations {
            writeln!(f, "{} @ {} : {}", v.axiom, v.witness, v.entry)?;
        }
        Ok(())
    }
}

/// A colored dg operad: a collection, unit operations, and partial
/// compositions stored as chain maps out of level tensor products.
#[derive(Debug, Clone)]
pub struct Operad {
    coll: Collection,
    /// degree-0 cycle in level (c;c) per color
    units: BTreeMap<Color, SparseVec>,
    /// ∘_i : level(s1) ⊗ level(s2) -> level(s1.substitute(i, s2))
    comps: BTreeMap<(CSeq, CSeq, usize), ChainMap>,
    /// marker consumed by the cohomology reports (cofibrancy caveats)
    cofibrant: bool,
}

impl Operad {
    /// Assemble without checking; `check_operad` reports violations.
    pub fn from_parts(
        coll: Collection,
        units: BTreeMap<Color, SparseVec>,
        comps: BTreeMap<(CSeq, CSeq, usize), ChainMap>,
    ) -> Operad {
        Operad {
            coll,
            units,
            comps,
            cofibrant: false,
        }
    }

    pub fn validated(self) -> Result<Operad> {
        let report = check_operad(&self);
        if report.ok() {
            Ok(self)
        } else {
            Err(Error::Axioms(report))
        }
    }

    pub fn mark_cofibrant(mut self) -> Operad {
        self.cofibrant = true;
        self
    }

    pub fn is_cofibrant_marked(&self) -> bool {
        self.cofibrant
    }

    pub fn coll(&self) -> &Collection {
        &self.coll
    }

    pub fn colors(&self) -> &ColorSet {
        self.coll.colors()
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

    pub fn unit_vec(&self, c: Color) -> SparseVec {
        self.units.get(&c).cloned().unwrap_or_default()
    }

    pub fn units(&self) -> &BTreeMap<Color, SparseVec> {
        &self.units
    }

    pub fn comp_keys(&self) -> impl Iterator<Item = &(CSeq, CSeq, usize)> {
        self.comps.keys()
    }

    /// Admissible slots: matching colors, both levels nonzero, result
    /// within the ceiling (the result level may still be zero).
    pub fn admissible(&self, s1: &CSeq, s2: &CSeq, i: usize) -> bool {
        i < s1.arity()
            && s1.inputs[i] == s2.output
            && s1.arity() + s2.arity() <= self.max_arity() + 1
            && self.coll.level_dim(s1) > 0
            && self.coll.level_dim(s2) > 0
    }

    /// The partial composition map ∘_i on levels (zero map when absent).
    pub fn composition(&self, s1: &CSeq, s2: &CSeq, i: usize) -> ChainMap {
        match self.comps.get(&(s1.clone(), s2.clone(), i)) {
            Some(m) => m.clone(),
            None => {
                let l1 = self.level(s1);
                let l2 = self.level(s2);
                let ts = TensorSpace::new(&[&l1, &l2], self.field());
                let tgt = self.level(&s1.substitute(i, s2));
                ChainMap::zero_map(ts.complex, tgt, 0)
            }
        }
    }

    /// Compose two element vectors: (x ∘_i y) in the result level.
    pub fn compose_vec(
        &self,
        s1: &CSeq,
        x: &(i64, SparseVec),
        i: usize,
        s2: &CSeq,
        y: &(i64, SparseVec),
    ) -> (i64, SparseVec) {
        let l1 = self.level(s1);
        let l2 = self.level(s2);
        let ts = TensorSpace::new(&[&l1, &l2], self.field());
        let comp = self.composition(s1, s2, i);
        compose_cached(&ts, &comp, x, y)
    }

    /// Left-compose the unit of the output color: id ∘_0 x.
    pub fn unit_compose_left(&self, seq: &CSeq, x: &(i64, SparseVec)) -> (i64, SparseVec) {
        let c = seq.output;
        let unit_seq = CSeq::new(vec![c], c);
        self.compose_vec(&unit_seq, &(0, self.unit_vec(c)), 0, seq, x)
    }
}

/// Composition of element vectors against a cached level tensor space.
pub fn compose_cached(
    ts: &TensorSpace,
    comp: &ChainMap,
    x: &(i64, SparseVec),
    y: &(i64, SparseVec),
) -> (i64, SparseVec) {
    let mut acc: SparseVec = Vec::new();
    for (ix, cx) in &x.1 {
        for (iy, cy) in &y.1 {
            let (_, pos) = ts.position(&[x.0, y.0], &[*ix, *iy]);
            acc = vec_add(&acc, &vec![(pos, cx * cy)]);
        }
    }
    let total = x.0 + y.0;
    (total, comp.component(total).apply(&acc))
}

/// Exhaustive axiom check: collection relations, unit cycles, unit laws,
/// sequential and parallel associativity on admissible triples, and
/// equivariance against the stored symmetric actions.
pub fn check_operad(p: &Operad) -> AxiomReport {
    let mut report = p.coll.check();
    let field = p.field();

    // units are degree-0 cycles and present for every color
    for c in p.colors().iter() {
        let seq = CSeq::new(vec![c], c);
        let u = p.unit_vec(c);
        if u.is_empty() {
            report.push("unit", format!("color {c}"), "missing unit operation");
            continue;
        }
        let lvl = p.level(&seq);
        let du = lvl.diff_at(0).apply(&u);
        if !du.is_empty() {
            report.push("unit cycle", format!("color {c}"), "d(unit) != 0");
        }
    }

    let seqs: Vec<CSeq> = p.coll.seqs().cloned().collect();

    // unit laws
    for seq in &seqs {
        let lvl = p.level(seq);
        for d in lvl.degrees() {
            for i in 0..lvl.dim(d) {
                let x = (d, vec![(i, field.one())]);
                let lhs = p.unit_compose_left(seq, &x);
                if lhs.1 != x.1 {
                    report.push(
                        "left unit",
                        format!("{seq} deg {d} basis {i}"),
                        describe_diff(&lhs.1, &x.1, field),
                    );
                }
                for slot in 0..seq.arity() {
                    let c = seq.inputs[slot];
                    let unit_seq = CSeq::new(vec![c], c);
                    let rhs = p.compose_vec(seq, &x, slot, &unit_seq, &(0, p.unit_vec(c)));
                    if rhs.1 != x.1 {
                        report.push(
                            "right unit",
                            format!("{seq} deg {d} basis {i} slot {slot}"),
                            describe_diff(&rhs.1, &x.1, field),
                        );
                    }
                }
            }
        }
    }

    // associativity, pointwise on basis triples
    for s1 in &seqs {
        for s2 in &seqs {
            for i in 0..s1.arity() {
                if !p.admissible(s1, s2, i) {
                    continue;
                }
                let s12 = s1.substitute(i, s2);
                if s12.arity() > p.max_arity() {
                    continue;
                }
                for s3 in &seqs {
                    // sequential: z into a slot of y
                    for j in 0..s2.arity() {
                        if !p.admissible(s2, s3, j) {
                            continue;
                        }
                        let s23 = s2.substitute(j, s3);
                        if s12.substitute(i + j, s3).arity() > p.max_arity()
                            || s23.arity() > p.max_arity()
                        {
                            continue;
                        }
                        check_assoc_seq(p, s1, s2, s3, i, j, &mut report);
                    }
                    // parallel: z into a later slot of x
                    for j in (i + 1)..s1.arity() {
                        if !p.admissible(s1, s3, j) {
                            continue;
                        }
                        let res = s12.substitute(j + s2.arity() - 1, s3);
                        if res.arity() > p.max_arity() {
                            continue;
                        }
                        check_assoc_par(p, s1, s2, s3, i, j, &mut report);
                    }
                }
            }
        }
    }

    // equivariance of each stored composition against the actions
    for ((s1, s2, i), comp) in &p.comps {
        let n1 = s1.arity();
        let n2 = s2.arity();
        let result = s1.substitute(*i, s2);
        // outer generators
        for a in 0..n1.saturating_sub(1) {
            let sigma = Perm::adjacent(n1, a);
            let new_i = sigma.apply(*i);
            let lhs = {
                let maps = [p.coll.action_gen(s1, a), ChainMap::identity(&p.level(s2))];
                let refs: Vec<&ChainMap> = maps.iter().collect();
                let (_, _, act) = tensor_maps(&refs).expect("tensor of actions");
                p.composition(&s1.swap(a), s2, new_i).compose(&act)
            };
            let rhs = {
                let mut widths = vec![1usize; n1];
                widths[*i] = n2;
                let bp = block_perm(&widths, &sigma);
                p.coll.action(&result, &bp).compose(comp)
            };
            if !lhs.equal(&rhs) {
                report.push(
                    "equivariance outer",
                    format!("{s1} o_{i} {s2}, s_{a}"),
                    "matrices differ",
                );
            }
        }
        // inner generators
        for b in 0..n2.saturating_sub(1) {
            let lhs = {
                let maps = [ChainMap::identity(&p.level(s1)), p.coll.action_gen(s2, b)];
                let refs: Vec<&ChainMap> = maps.iter().collect();
                let (_, _, act) = tensor_maps(&refs).expect("tensor of actions");
                p.composition(s1, &s2.swap(b), *i).compose(&act)
            };
            let rhs = {
                let emb = Perm::adjacent(result.arity(), i + b);
                p.coll.action(&result, &emb).compose(comp)
            };
            if !lhs.equal(&rhs) {
                report.push(
                    "equivariance inner",
                    format!("{s1} o_{i} {s2}, s_{b}"),
                    "matrices differ",
                );
            }
        }
    }

    report
}

fn describe_diff(got: &SparseVec, want: &SparseVec, field: FieldSpec) -> String {
    let diff = vec_add(got, &vec_scale(want, &field.from_i64(-1)));
    match diff.first() {
        Some((i, v)) => format!("entry {i}: off by {v}"),
        None => "equal".to_string(),
    }
}

struct CompCache {
    ts: TensorSpace,
    map: ChainMap,
}

impl CompCache {
    fn new(p: &Operad, s1: &CSeq, s2: &CSeq, i: usize) -> CompCache {
        let l1 = p.level(s1);
        let l2 = p.level(s2);
        CompCache {
            ts: TensorSpace::new(&[&l1, &l2], p.field()),
            map: p.composition(s1, s2, i),
        }
    }

    fn apply(&self, x: &(i64, SparseVec), y: &(i64, SparseVec)) -> (i64, SparseVec) {
        compose_cached(&self.ts, &self.map, x, y)
    }
}

fn check_assoc_seq(
    p: &Operad,
    s1: &CSeq,
    s2: &CSeq,
    s3: &CSeq,
    i: usize,
    j: usize,
    report: &mut AxiomReport,
) {
    let field = p.field();
    let (l1, l2, l3) = (p.level(s1), p.level(s2), p.level(s3));
    let s12 = s1.substitute(i, s2);
    let s23 = s2.substitute(j, s3);
    let c12 = CompCache::new(p, s1, s2, i);
    let c12_3 = CompCache::new(p, &s12, s3, i + j);
    let c23 = CompCache::new(p, s2, s3, j);
    let c1_23 = CompCache::new(p, s1, &s23, i);
    for d1 in l1.degrees() {
        for b1 in 0..l1.dim(d1) {
            let x = (d1, vec![(b1, field.one())]);
            for d2 in l2.degrees() {
                for b2 in 0..l2.dim(d2) {
                    let y = (d2, vec![(b2, field.one())]);
                    let xy = c12.apply(&x, &y);
                    for d3 in l3.degrees() {
                        for b3 in 0..l3.dim(d3) {
                            let z = (d3, vec![(b3, field.one())]);
                            let lhs = c12_3.apply(&xy, &z);
                            let yz = c23.apply(&y, &z);
                            let rhs = c1_23.apply(&x, &yz);
                            if lhs.1 != rhs.1 {
                                report.push(
                                    "sequential associativity",
                                    format!(
                                        "({s1},{s2},{s3}) slots ({i},{j}) basis ({b1},{b2},{b3})"
                                    ),
                                    describe_diff(&lhs.1, &rhs.1, field),
                                );
                            }
                        }
                    }
                }
            }
        }
    }
}

fn check_assoc_par(
    p: &Operad,
    s1: &CSeq,
    s2: &CSeq,
    s3: &CSeq,
    i: usize,
    j: usize,
    report: &mut AxiomReport,
) {
    let field = p.field();
    let (l1, l2, l3) = (p.level(s1), p.level(s2), p.level(s3));
    let s12 = s1.substitute(i, s2);
    let s13 = s1.substitute(j, s3);
    let c12 = CompCache::new(p, s1, s2, i);
    let c12_3 = CompCache::new(p, &s12, s3, j + s2.arity() - 1);
    let c13 = CompCache::new(p, s1, s3, j);
    let c13_2 = CompCache::new(p, &s13, s2, i);
    for d1 in l1.degrees() {
        for b1 in 0..l1.dim(d1) {
            let x = (d1, vec![(b1, field.one())]);
            for d2 in l2.degrees() {
                for b2 in 0..l2.dim(d2) {
                    let y = (d2, vec![(b2, field.one())]);
                    let xy = c12.apply(&x, &y);
                    for d3 in l3.degrees() {
                        for b3 in 0..l3.dim(d3) {
                            let z = (d3, vec![(b3, field.one())]);
                            let lhs = c12_3.apply(&xy, &z);
                            let xz = c13.apply(&x, &z);
                            let rhs0 = c13_2.apply(&xz, &y);
                            // Koszul: moving z past y
                            let sign = if (d2 * d3).rem_euclid(2) == 1 {
                                field.from_i64(-1)
                            } else {
                                field.one()
                            };
                            let rhs = vec_scale(&rhs0.1, &sign);
                            if lhs.1 != rhs {
                                report.push(
                                    "parallel associativity",
                                    format!(
                                        "({s1},{s2},{s3}) slots ({i},{j}) basis ({b1},{b2},{b3})"
                                    ),
                                    describe_diff(&lhs.1, &rhs, field),
                                );
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Named operad presets at a given arity ceiling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Preset {
    I,
    Com,
    Ass,
    Nilpotent(usize),
}

impl Preset {
    pub fn parse(name: &str) -> Result<Preset> {
        match name {
            "i" | "I" => Ok(Preset::I),
            "com" | "Com" => Ok(Preset::Com),
            "ass" | "Ass" => Ok(Preset::Ass),
            _ => {
                if let Some(r) = name.strip_prefix("nilpotent") {
                    let r: usize = r.trim_matches(|c| c == '(' || c == ')').parse().map_err(
                        |_| Error::Config(format!("bad nilpotent preset: {name}")),
                    )?;
                    if r < 2 {
                        return Err(Error::Config("nilpotent arity must be >= 2".into()));
                    }
                    Ok(Preset::Nilpotent(r))
                } else {
                    Err(Error::Config(format!("unknown preset: {name}")))
                }
            }
        }
    }
}

/// Build a preset operad, checked.
pub fn preset(which: Preset, field: FieldSpec, max_arity: usize) -> Result<Operad> {
    let p = match which {
        Preset::I => preset_i(ColorSet::single(), field, max_arity),
        Preset::Com => preset_com(field, max_arity),
        Preset::Ass => preset_ass(field, max_arity)?,
        Preset::Nilpotent(r) => preset_nilpotent(field, max_arity, r)?,
    };
    p.validated()
}

/// The initial operad I_C over an arbitrary colorset.
pub fn preset_i(colors: ColorSet, field: FieldSpec, max_arity: usize) -> Operad {
    let coll = Collection::unit_i(colors.clone(), field, max_arity);
    let mut units = BTreeMap::new();
    let mut comps = BTreeMap::new();
    for c in colors.iter() {
        units.insert(c, vec![(0usize, field.one())]);
        let seq = CSeq::new(vec![c], c);
        let lvl = coll.level(&seq);
        let ts = TensorSpace::new(&[&lvl, &lvl], field);
        let mut mb = MapBuilder::new(ts.complex.clone(), lvl.clone(), 0);
        mb.add(0, 0, 0, field.one());
        comps.insert(
            (seq.clone(), seq.clone(), 0),
            mb.build().expect("unit composition"),
        );
    }
    Operad::from_parts(coll, units, comps).mark_cofibrant()
}

/// Com at the ceiling: every level is k with trivial actions.
pub fn preset_com(field: FieldSpec, max_arity: usize) -> Operad {
    let mut levels = BTreeMap::new();
    for a in 0..=max_arity {
        levels.insert(
            CSeq::single(a),
            ChainComplex::concentrated(field, 0, vec![Label::atom(format!("mu{a}"))]),
        );
    }
    let coll = Collection::with_trivial_actions(ColorSet::single(), field, max_arity, levels)
        .expect("com collection");
    let mut units = BTreeMap::new();
    units.insert(0usize, vec![(0usize, field.one())]);
    let mut comps = BTreeMap::new();
    for n in 0..=max_arity {
        for m in 0..=max_arity {
            if n == 0 || n + m > max_arity + 1 {
                continue;
            }
            let s1 = CSeq::single(n);
            let s2 = CSeq::single(m);
            let l1 = coll.level(&s1);
            let l2 = coll.level(&s2);
            let tgt = coll.level(&CSeq::single(n + m - 1));
            for i in 0..n {
                let ts = TensorSpace::new(&[&l1, &l2], field);
                let mut mb = MapBuilder::new(ts.complex.clone(), tgt.clone(), 0);
                mb.add(0, 0, 0, field.one());
                comps.insert((s1.clone(), s2.clone(), i), mb.build().expect("com comp"));
            }
        }
    }
    Operad::from_parts(coll, units, comps)
}

/// Ass at the ceiling: level n is the regular representation of Σ_n, with
/// composition given by concatenation of linear orders.
pub fn preset_ass(field: FieldSpec, max_arity: usize) -> Result<Operad> {
    let perms_at: Vec<Vec<Perm>> = (0..=max_arity).map(Perm::all).collect();
    let mut levels = BTreeMap::new();
    for a in 0..=max_arity {
        let labels = perms_at[a]
            .iter()
            .map(|w| {
                let word: Vec<String> = (0..a).map(|s| w.apply(s).to_string()).collect();
                Label::atom(format!("w{}", word.join("")))
            })
            .collect();
        levels.insert(CSeq::single(a), ChainComplex::concentrated(field, 0, labels));
    }
    // actions: w ↦ w ∘ σ⁻¹ for the adjacent σ
    let mut actions = BTreeMap::new();
    for a in 2..=max_arity {
        let seq = CSeq::single(a);
        let lvl = levels[&seq].clone();
        for i in 0..a - 1 {
            let sigma = Perm::adjacent(a, i);
            let mut mb = MapBuilder::new(lvl.clone(), lvl.clone(), 0);
            for (idx, w) in perms_at[a].iter().enumerate() {
                let img = w.compose(&sigma.inverse());
                let tgt = perms_at[a].iter().position(|v| *v == img).unwrap();
                mb.add(0, idx, tgt, field.one());
            }
            actions.insert((seq.clone(), i), mb.build()?);
        }
    }
    let coll = Collection::new(
        ColorSet::single(),
        field,
        max_arity,
        levels,
        actions,
        false,
    )?;
    let mut units = BTreeMap::new();
    units.insert(0usize, vec![(0usize, field.one())]);
    let mut comps = BTreeMap::new();
    for n in 1..=max_arity {
        for m in 0..=max_arity {
            if n + m > max_arity + 1 {
                continue;
            }
            let s1 = CSeq::single(n);
            let s2 = CSeq::single(m);
            let l1 = coll.level(&s1);
            let l2 = coll.level(&s2);
            let tgt = coll.level(&CSeq::single(n + m - 1));
            for i in 0..n {
                let ts = TensorSpace::new(&[&l1, &l2], field);
                let mut mb = MapBuilder::new(ts.complex.clone(), tgt.clone(), 0);
                for (iw, w) in perms_at[n].iter().enumerate() {
                    for (iv, v) in perms_at[m].iter().enumerate() {
                        let u = splice_orders(w, v, i);
                        let it = perms_at[n + m - 1].iter().position(|t| *t == u).unwrap();
                        let (_, pos) = ts.position(&[0, 0], &[iw, iv]);
                        mb.add(0, pos, it, field.one());
                    }
                }
                comps.insert((s1.clone(), s2.clone(), i), mb.build()?);
            }
        }
    }
    Ok(Operad::from_parts(coll, units, comps))
}

/// Substitute the order v (on m slots) into slot i of the order w (on n
/// slots): block slots stay together at w's rank of slot i, ordered by v.
fn splice_orders(w: &Perm, v: &Perm, i: usize) -> Perm {
    let n = w.len();
    let m = v.len();
    let keys: Vec<(usize, usize)> = (0..n + m - 1)
        .map(|p| {
            if p < i {
                (w.apply(p), 0)
            } else if p < i + m {
                (w.apply(i), v.apply(p - i) + 1)
            } else {
                (w.apply(p - m + 1), 0)
            }
        })
        .collect();
    Perm::sorting(&keys)
}

/// Nilpotent preset: k·id in arity 1, k·mu in arity r, zero elsewhere.
pub fn preset_nilpotent(field: FieldSpec, max_arity: usize, r: usize) -> Result<Operad> {
    if r < 2 || r > max_arity {
        return Err(Error::Config(format!(
            "nilpotent generator arity {r} must lie in [2, {max_arity}]"
        )));
    }
    let mut levels = BTreeMap::new();
    levels.insert(
        CSeq::single(1),
        ChainComplex::concentrated(field, 0, vec![Label::atom("id")]),
    );
    levels.insert(
        CSeq::single(r),
        ChainComplex::concentrated(field, 0, vec![Label::atom("mu")]),
    );
    let coll = Collection::with_trivial_actions(ColorSet::single(), field, max_arity, levels)?;
    let mut units = BTreeMap::new();
    units.insert(0usize, vec![(0usize, field.one())]);
    let mut comps = BTreeMap::new();
    let one_seq = CSeq::single(1);
    let r_seq = CSeq::single(r);
    let pairs: Vec<(CSeq, CSeq, usize)> = vec![(one_seq.clone(), one_seq.clone(), 0)]
        .into_iter()
        .chain([(one_seq.clone(), r_seq.clone(), 0)])
        .chain((0..r).map(|i| (r_seq.clone(), one_seq.clone(), i)))
        .collect();
    for (s1, s2, i) in pairs {
        let l1 = coll.level(&s1);
        let l2 = coll.level(&s2);
        let tgt = coll.level(&s1.substitute(i, &s2));
        let ts = TensorSpace::new(&[&l1, &l2], field);
        let mut mb = MapBuilder::new(ts.complex.clone(), tgt.clone(), 0);
        mb.add(0, 0, 0, field.one());
        comps.insert((s1, s2, i), mb.build()?);
    }
    // any composite involving two generators lands in a zero level
    Ok(Operad::from_parts(coll, units, comps))
}

/// A map of operads along a color map: levelwise chain maps commuting
/// with units, compositions, and actions.
#[derive(Debug, Clone)]
pub struct OperadMap {
    pub source: Operad,
    pub target: Operad,
    pub color_map: Vec<Color>,
    pub maps: BTreeMap<CSeq, ChainMap>,
}

impl OperadMap {
    pub fn identity(p: &Operad) -> OperadMap {
        let maps = p
            .coll
            .seqs()
            .map(|s| (s.clone(), ChainMap::identity(&p.level(s))))
            .collect();
        OperadMap {
            source: p.clone(),
            target: p.clone(),
            color_map: p.colors().iter().collect(),
            maps,
        }
    }

    pub fn image_seq(&self, seq: &CSeq) -> CSeq {
        CSeq::new(
            seq.inputs.iter().map(|&c| self.color_map[c]).collect(),
            self.color_map[seq.output],
        )
    }

    pub fn map_at(&self, seq: &CSeq) -> ChainMap {
        match self.maps.get(seq) {
            Some(m) => m.clone(),
            None => ChainMap::zero_map(
                self.source.level(seq),
                self.target.level(&self.image_seq(seq)),
                0,
            ),
        }
    }

    pub fn apply(&self, seq: &CSeq, x: &(i64, SparseVec)) -> (i64, SparseVec) {
        (x.0, self.map_at(seq).component(x.0).apply(&x.1))
    }

    pub fn check(&self) -> AxiomReport {
        let mut report = AxiomReport::default();
        let field = self.source.field();
        // units
        for c in self.source.colors().iter() {
            let seq = CSeq::new(vec![c], c);
            let img = self.apply(&seq, &(0, self.source.unit_vec(c)));
            if img.1 != self.target.unit_vec(self.color_map[c]) {
                report.push("map unit", format!("color {c}"), "unit not preserved");
            }
        }
        // compositions, pointwise
        let seqs: Vec<CSeq> = self.source.coll.seqs().cloned().collect();
        for s1 in &seqs {
            for s2 in &seqs {
                for i in 0..s1.arity() {
                    if !self.source.admissible(s1, s2, i) {
                        continue;
                    }
                    if s1.arity() + s2.arity() > self.source.max_arity() + 1 {
                        continue;
                    }
                    let l1 = self.source.level(s1);
                    let l2 = self.source.level(s2);
                    for d1 in l1.degrees() {
                        for b1 in 0..l1.dim(d1) {
                            let x = (d1, vec![(b1, field.one())]);
                            for d2 in l2.degrees() {
                                for b2 in 0..l2.dim(d2) {
                                    let y = (d2, vec![(b2, field.one())]);
                                    let lhs = {
                                        let xy = self.source.compose_vec(s1, &x, i, s2, &y);
                                        self.apply(&s1.substitute(i, s2), &xy)
                                    };
                                    let rhs = {
                                        let fx = self.apply(s1, &x);
                                        let fy = self.apply(s2, &y);
                                        self.target.compose_vec(
                                            &self.image_seq(s1),
                                            &fx,
                                            i,
                                            &self.image_seq(s2),
                                            &fy,
                                        )
                                    };
                                    if lhs.1 != rhs.1 {
                                        report.push(
                                            "map composition",
                                            format!("({s1},{s2},{i}) basis ({b1},{b2})"),
                                            describe_diff(&lhs.1, &rhs.1, field),
                                        );
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        // actions
        for seq in &seqs {
            for a in 0..seq.arity().saturating_sub(1) {
                let lhs = self
                    .map_at(&seq.swap(a))
                    .compose(&self.source.coll.action_gen(seq, a));
                let rhs = self
                    .target
                    .coll
                    .action_gen(&self.image_seq(seq), a)
                    .compose(&self.map_at(seq));
                if !lhs.equal(&rhs) {
                    report.push("map equivariance", format!("{seq} s_{a}"), "differs");
                }
            }
        }
        report
    }
}

/// Restrict an operad to a lower arity ceiling: keep levels and
/// compositions entirely within the bound. When the input is exact up to
/// the new ceiling, so is the restriction.
pub fn restrict_operad_ceiling(p: &Operad, n: usize) -> Result<Operad> {
    if n > p.max_arity() {
        return Err(Error::Config(format!(
            "cannot raise the ceiling from {} to {n}",
            p.max_arity()
        )));
    }
    let levels: BTreeMap<CSeq, ChainComplex> = p
        .coll
        .seqs()
        .filter(|s| s.arity() <= n)
        .map(|s| (s.clone(), p.level(s)))
        .collect();
    let actions = levels
        .keys()
        .flat_map(|s| {
            (0..s.arity().saturating_sub(1)).map(move |i| {
                ((s.clone(), i), p.coll.action_gen(s, i))
            })
        })
        .collect();
    let mut coll = Collection::new(
        p.colors().clone(),
        p.field(),
        n,
        levels,
        actions,
        p.coll.truncated(),
    )?;
    coll.set_exact_max(p.coll.exact_max().min(n));
    let comps = p
        .comps
        .iter()
        .filter(|((s1, s2, _), _)| {
            s1.arity() <= n && s2.arity() <= n && s1.arity() + s2.arity() <= n + 1
        })
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let out = Operad {
        coll,
        units: p.units.clone(),
        comps,
        cofibrant: p.cofibrant,
    };
    Ok(out)
}

/// The arity-collapsing map Ass -> Com (abelianization).
pub fn abelianization(ass: &Operad, com: &Operad) -> Result<OperadMap> {
    let field = ass.field();
    let mut maps = BTreeMap::new();
    for seq in ass.coll.seqs() {
        let src = ass.level(seq);
        let tgt = com.level(seq);
        let mut mb = MapBuilder::new(src.clone(), tgt.clone(), 0);
        for i in 0..src.dim(0) {
            mb.add(0, i, 0, field.one());
        }
        maps.insert(seq.clone(), mb.build()?);
    }
    let f = OperadMap {
        source: ass.clone(),
        target: com.clone(),
        color_map: vec![0],
        maps,
    };
    let report = f.check();
    if report.ok() {
        Ok(f)
    } else {
        Err(Error::Axioms(report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> FieldSpec {
        FieldSpec::Rationals
    }

    #[test]
    fn preset_dims() {
        let com = preset(Preset::Com, q(), 4).unwrap();
        for a in 0..=4usize {
            assert_eq!(com.level(&CSeq::single(a)).dim(0), 1);
        }
        let ass = preset(Preset::Ass, q(), 4).unwrap();
        let dims: Vec<usize> = (0..=4).map(|a| ass.level(&CSeq::single(a)).dim(0)).collect();
        assert_eq!(dims, vec![1, 1, 2, 6, 24]);
    }

    #[test]
    fn presets_pass_checker() {
        for n in 1..=6usize {
            assert!(check_operad(&preset(Preset::Com, q(), n).unwrap()).ok(), "com {n}");
        }
        for n in 1..=5usize {
            assert!(check_operad(&preset(Preset::Ass, q(), n).unwrap()).ok(), "ass {n}");
        }
        assert!(check_operad(&preset(Preset::I, q(), 3).unwrap()).ok());
        assert!(check_operad(&preset(Preset::Nilpotent(2), q(), 4).unwrap()).ok());
        assert!(check_operad(&preset(Preset::Nilpotent(3), q(), 5).unwrap()).ok());
    }

    #[test]
    fn corrupted_composition_is_witnessed() {
        let mut com = preset(Preset::Com, q(), 3).unwrap();
        // negate one composition matrix
        let key = (CSeq::single(2), CSeq::single(2), 0usize);
        let neg = com.comps[&key].scale(&q().from_i64(-1));
        com.comps.insert(key, neg);
        let report = check_operad(&com);
        assert!(!report.ok());
        assert!(report
            .violations
            .iter()
            .any(|v| v.axiom.contains("associativity") || v.axiom.contains("unit")));
    }

    #[test]
    fn ass_regular_representation_bookkeeping() {
        // composing the two arity-2 basis elements in either slot yields
        // all 6 arity-3 basis elements bijectively
        let ass = preset(Preset::Ass, q(), 3).unwrap();
        let s2 = CSeq::single(2);
        let field = q();
        let mut seen = std::collections::BTreeSet::new();
        for b1 in 0..2usize {
            for b2 in 0..2usize {
                for i in 0..2usize {
                    let x = (0, vec![(b1, field.one())]);
                    let y = (0, vec![(b2, field.one())]);
                    let r = ass.compose_vec(&s2, &x, i, &s2, &y);
                    assert_eq!(r.1.len(), 1);
                    seen.insert(r.1[0].0);
                }
            }
        }
        // 8 composites cover 6 distinct basis elements (2 coincidences:
        // the two fully-nested orders arise twice)
        assert_eq!(seen.len(), 6);
    }

    #[test]
    fn ass_equivariance_is_nontrivial() {
        let ass = preset(Preset::Ass, q(), 3).unwrap();
        let s2 = CSeq::single(2);
        let act = ass.coll().action_gen(&s2, 0);
        // the regular action swaps the two arity-2 orders
        assert_eq!(act.component(0).entry(0, 0), q().zero());
        assert_eq!(act.component(0).entry(1, 0), q().one());
    }

    #[test]
    fn nilpotent_composites_vanish() {
        let p = preset(Preset::Nilpotent(2), q(), 4).unwrap();
        let s2 = CSeq::single(2);
        let x = (0, vec![(0usize, q().one())]);
        let r = p.compose_vec(&s2, &x, 0, &s2, &x);
        assert!(r.1.is_empty());
    }

    #[test]
    fn abelianization_is_an_operad_map() {
        let ass = preset(Preset::Ass, q(), 3).unwrap();
        let com = preset(Preset::Com, q(), 3).unwrap();
        assert!(abelianization(&ass, &com).is_ok());
    }

    #[test]
    fn identity_map_checks() {
        let com = preset(Preset::Com, q(), 3).unwrap();
        assert!(OperadMap::identity(&com).check().ok());
    }
}
