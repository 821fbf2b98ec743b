//! Dg categories with finitely many objects, modules over them, the
//! enriched category encoding infinitesimal bimodules, and one-object
//! Kan extensions.

use std::collections::BTreeMap;

use crate::chain::{hom_complex, ChainComplex, ChainMap, HomSpace, MapBuilder, TensorSpace};
use crate::collection::{CSeq, Collection};
use crate::error::{Error, Result};
use crate::field::{FieldSpec, Scalar};
use crate::ibmod::IBimod;
use crate::label::Label;
use crate::linalg::{vec_add, SparseVec};
use crate::operad::{compose_cached, AxiomReport, Operad};
use crate::perm::Perm;

/// A dg category on finitely many objects.
#[derive(Debug, Clone)]
pub struct DgCategory {
    field: FieldSpec,
    pub objects: Vec<Label>,
    /// mapping complex per ordered pair (source, target)
    maps: BTreeMap<(usize, usize), ChainComplex>,
    /// composition Map(b,c) ⊗ Map(a,b) -> Map(a,c), keyed by (a, b, c)
    comp: BTreeMap<(usize, usize, usize), ChainMap>,
    /// unit cycle per object
    units: Vec<SparseVec>,
}

impl DgCategory {
    pub fn from_parts(
        field: FieldSpec,
        objects: Vec<Label>,
        maps: BTreeMap<(usize, usize), ChainComplex>,
        comp: BTreeMap<(usize, usize, usize), ChainMap>,
        units: Vec<SparseVec>,
    ) -> DgCategory {
        DgCategory {
            field,
            objects,
            maps,
            comp,
            units,
        }
    }

    pub fn validated(self) -> Result<DgCategory> {
        let report = self.check();
        if report.ok() {
            Ok(self)
        } else {
            Err(Error::Axioms(report))
        }
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn mapping(&self, a: usize, b: usize) -> ChainComplex {
        self.maps
            .get(&(a, b))
            .cloned()
            .unwrap_or_else(|| ChainComplex::zero(self.field))
    }

    pub fn unit(&self, a: usize) -> SparseVec {
        self.units.get(a).cloned().unwrap_or_default()
    }

    pub fn composition(&self, a: usize, b: usize, c: usize) -> ChainMap {
        match self.comp.get(&(a, b, c)) {
            Some(m) => m.clone(),
            None => {
                let g = self.mapping(b, c);
                let f = self.mapping(a, b);
                let ts = TensorSpace::new(&[&g, &f], self.field);
                ChainMap::zero_map(ts.complex, self.mapping(a, c), 0)
            }
        }
    }

    /// g ∘ f for g: b -> c and f: a -> b.
    pub fn compose_vec(
        &self,
        a: usize,
        b: usize,
        c: usize,
        g: &(i64, SparseVec),
        f: &(i64, SparseVec),
    ) -> (i64, SparseVec) {
        let gc = self.mapping(b, c);
        let fc = self.mapping(a, b);
        let ts = TensorSpace::new(&[&gc, &fc], self.field);
        compose_cached(&ts, &self.composition(a, b, c), g, f)
    }

    pub fn check(&self) -> AxiomReport {
        let mut report = AxiomReport::default();
        let field = self.field;
        let n = self.len();
        // units are degree-0 cycles
        for a in 0..n {
            let u = self.unit(a);
            if u.is_empty() {
                report.push("unit", format!("object {a}"), "missing");
                continue;
            }
            if !self.mapping(a, a).diff_at(0).apply(&u).is_empty() {
                report.push("unit cycle", format!("object {a}"), "d(unit) != 0");
            }
        }
        // unit laws
        for a in 0..n {
            for b in 0..n {
                let m = self.mapping(a, b);
                for d in m.degrees() {
                    for i in 0..m.dim(d) {
                        let f = (d, vec![(i, field.one())]);
                        let lhs = self.compose_vec(a, b, b, &(0, self.unit(b)), &f);
                        if lhs.1 != f.1 {
                            report.push("left unit", format!("{a}->{b} deg {d} basis {i}"), "differs");
                        }
                        let rhs = self.compose_vec(a, a, b, &f, &(0, self.unit(a)));
                        if rhs.1 != f.1 {
                            report.push("right unit", format!("{a}->{b} deg {d} basis {i}"), "differs");
                        }
                    }
                }
            }
        }
        // associativity, pointwise
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for dd in 0..n {
                        let mab = self.mapping(a, b);
                        let mbc = self.mapping(b, c);
                        let mcd = self.mapping(c, dd);
                        if mab.is_zero() || mbc.is_zero() || mcd.is_zero() {
                            continue;
                        }
                        for (d1, i1) in basis_of(&mab) {
                            let f = (d1, vec![(i1, field.one())]);
                            for (d2, i2) in basis_of(&mbc) {
                                let g = (d2, vec![(i2, field.one())]);
                                for (d3, i3) in basis_of(&mcd) {
                                    let h = (d3, vec![(i3, field.one())]);
                                    let gf = self.compose_vec(a, b, c, &g, &f);
                                    let lhs = self.compose_vec(a, c, dd, &h, &gf);
                                    let hg = self.compose_vec(b, c, dd, &h, &g);
                                    let rhs = self.compose_vec(a, b, dd, &hg, &f);
                                    if lhs.1 != rhs.1 {
                                        report.push(
                                            "associativity",
                                            format!("{a}->{b}->{c}->{dd} ({i1},{i2},{i3})"),
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

    /// The one-object category with endomorphisms k.
    pub fn point(field: FieldSpec) -> DgCategory {
        let obj = vec![Label::atom("pt")];
        let mut maps = BTreeMap::new();
        maps.insert((0, 0), ChainComplex::unit(field));
        let mut comp = BTreeMap::new();
        let ts = TensorSpace::new(&[&maps[&(0, 0)], &maps[&(0, 0)]], field);
        let mut mb = MapBuilder::new(ts.complex.clone(), maps[&(0, 0)].clone(), 0);
        mb.add(0, 0, 0, field.one());
        comp.insert((0, 0, 0), mb.build().expect("point composition"));
        DgCategory {
            field,
            objects: obj,
            maps,
            comp,
            units: vec![vec![(0, field.one())]],
        }
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

/// A covariant module over a dg category: a complex per object with
/// action maps F(a) ⊗ Map(a,b) -> F(b).
#[derive(Debug, Clone)]
pub struct CatModule {
    pub cat: DgCategory,
    values: Vec<ChainComplex>,
    act: BTreeMap<(usize, usize), ChainMap>,
}

impl CatModule {
    pub fn from_parts(
        cat: DgCategory,
        values: Vec<ChainComplex>,
        act: BTreeMap<(usize, usize), ChainMap>,
    ) -> CatModule {
        CatModule { cat, values, act }
    }

    pub fn validated(self) -> Result<CatModule> {
        let report = self.check();
        if report.ok() {
            Ok(self)
        } else {
            Err(Error::Axioms(report))
        }
    }

    pub fn value(&self, a: usize) -> ChainComplex {
        self.values
            .get(a)
            .cloned()
            .unwrap_or_else(|| ChainComplex::zero(self.cat.field))
    }

    pub fn total_dim(&self) -> usize {
        self.values.iter().map(|v| v.total_dim()).sum()
    }

    pub fn action(&self, a: usize, b: usize) -> ChainMap {
        match self.act.get(&(a, b)) {
            Some(m) => m.clone(),
            None => {
                let f = self.value(a);
                let g = self.cat.mapping(a, b);
                let ts = TensorSpace::new(&[&f, &g], self.cat.field);
                ChainMap::zero_map(ts.complex, self.value(b), 0)
            }
        }
    }

    /// v · f for v ∈ F(a) and f: a -> b.
    pub fn act_vec(
        &self,
        a: usize,
        b: usize,
        v: &(i64, SparseVec),
        f: &(i64, SparseVec),
    ) -> (i64, SparseVec) {
        let fc = self.value(a);
        let gc = self.cat.mapping(a, b);
        let ts = TensorSpace::new(&[&fc, &gc], self.cat.field);
        compose_cached(&ts, &self.action(a, b), v, f)
    }

    pub fn check(&self) -> AxiomReport {
        let mut report = AxiomReport::default();
        let field = self.cat.field;
        let n = self.cat.len();
        for a in 0..n {
            for (d, i) in basis_of(&self.value(a)) {
                let v = (d, vec![(i, field.one())]);
                let r = self.act_vec(a, a, &v, &(0, self.cat.unit(a)));
                if r.1 != v.1 {
                    report.push("module unit", format!("object {a} deg {d} basis {i}"), "differs");
                }
            }
        }
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let fc = self.value(a);
                    let mab = self.cat.mapping(a, b);
                    let mbc = self.cat.mapping(b, c);
                    if fc.is_zero() || mab.is_zero() || mbc.is_zero() {
                        continue;
                    }
                    for (dv, iv) in basis_of(&fc) {
                        let v = (dv, vec![(iv, field.one())]);
                        for (d1, i1) in basis_of(&mab) {
                            let f = (d1, vec![(i1, field.one())]);
                            for (d2, i2) in basis_of(&mbc) {
                                let g = (d2, vec![(i2, field.one())]);
                                let vf = self.act_vec(a, b, &v, &f);
                                let lhs = self.act_vec(b, c, &vf, &g);
                                let gf = self.cat.compose_vec(a, b, c, &g, &f);
                                let rhs = self.act_vec(a, c, &v, &gf);
                                if lhs.1 != rhs.1 {
                                    report.push(
                                        "module functoriality",
                                        format!("{a}->{b}->{c} ({iv},{i1},{i2})"),
                                        "differs",
                                    );
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

/// The enriched category encoding infinitesimal bimodules: objects are
/// C-sequences up to the object ceiling; the mapping complex from s to t
/// is the sum over pointed maps f: <arity t> -> <arity s> of tensor
/// blocks of operad levels, the first block taking s's output as its
/// leading input.
pub struct IbCategory {
    pub cat: DgCategory,
    pub seqs: Vec<CSeq>,
    /// per (source, target): the pointed map and block data of each
    /// mapping summand, with its offset range inside the mapping complex
    pub summands: BTreeMap<(usize, usize), Vec<MapSummand>>,
}

/// One f-indexed summand of a mapping complex.
#[derive(Debug, Clone)]
pub struct MapSummand {
    /// f(j) for j = 1..arity(target), with f(0) = 0 implicit
    pub f: Vec<usize>,
    /// block sequences: first the leading block, then one per source slot
    pub blocks: Vec<CSeq>,
    pub tensor: TensorSpace,
}

/// Enumerate pointed maps <m> -> <n> as image vectors of 1..m.
pub fn pointed_maps(m: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..m {
        let mut next = Vec::new();
        for prefix in &out {
            for v in 0..=n {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// The blocks of the f-summand: the leading block takes the source
/// output and the fiber over 0; block i takes the fiber over i.
fn summand_blocks(p: &Operad, s: &CSeq, t: &CSeq, f: &[usize]) -> Vec<CSeq> {
    let mut blocks = Vec::with_capacity(s.arity() + 1);
    let fiber = |i: usize| -> Vec<usize> {
        (0..t.arity())
            .filter(|j| f[*j] == i)
            .map(|j| t.inputs[j])
            .collect()
    };
    let _ = p;
    let mut lead = vec![s.output];
    lead.extend(fiber(0));
    blocks.push(CSeq::new(lead, t.output));
    for i in 0..s.arity() {
        blocks.push(CSeq::new(fiber(i + 1), s.inputs[i]));
    }
    blocks
}

pub fn ib_category(p: &Operad, object_cap: usize) -> Result<IbCategory> {
    let field = p.field();
    let seqs: Vec<CSeq> = Collection::all_seqs(p.colors(), object_cap);
    let objects: Vec<Label> = seqs.iter().map(|s| Label::atom(s.to_string())).collect();
    let mut maps = BTreeMap::new();
    let mut summands: BTreeMap<(usize, usize), Vec<MapSummand>> = BTreeMap::new();
    for (si, s) in seqs.iter().enumerate() {
        for (ti, t) in seqs.iter().enumerate() {
            let mut parts: Vec<MapSummand> = Vec::new();
            for f in pointed_maps(t.arity(), s.arity()) {
                let blocks = summand_blocks(p, s, t, &f);
                let cxs: Vec<ChainComplex> = blocks.iter().map(|b| p.level(b)).collect();
                if cxs.iter().any(|c| c.is_zero()) {
                    continue;
                }
                let refs: Vec<&ChainComplex> = cxs.iter().collect();
                let tensor = TensorSpace::new(&refs, field);
                parts.push(MapSummand { f, blocks, tensor });
            }
            if parts.is_empty() {
                continue;
            }
            let cxs: Vec<&ChainComplex> = parts.iter().map(|p| &p.tensor.complex).collect();
            let total = ChainComplex::direct_sum(&cxs, field);
            maps.insert((si, ti), total);
            summands.insert((si, ti), parts);
        }
    }
    // units: the identity pointed map with unit blocks
    let mut units = Vec::new();
    for (si, s) in seqs.iter().enumerate() {
        let id_f: Vec<usize> = (1..=s.arity()).collect();
        let parts = summands.get(&(si, si));
        let mut u: SparseVec = Vec::new();
        if let Some(parts) = parts {
            let mut off = 0usize;
            for part in parts {
                if part.f == id_f {
                    // tensor of units over all blocks
                    let mut factors: Vec<(i64, SparseVec)> =
                        vec![(0, p.unit_vec(s.output))];
                    for i in 0..s.arity() {
                        factors.push((0, p.unit_vec(s.inputs[i])));
                    }
                    let v = expand_pure(&part.tensor, &factors);
                    for (i, c) in v.1 {
                        u.push((off + i, c));
                    }
                }
                off += part.tensor.complex.dim(0);
            }
        }
        u.sort_by_key(|e| e.0);
        units.push(u);
    }
    // compositions: block-substitute along composed pointed maps
    let mut comp = BTreeMap::new();
    for (ai, a) in seqs.iter().enumerate() {
        for (bi, b) in seqs.iter().enumerate() {
            for (ci, c) in seqs.iter().enumerate() {
                let (Some(gparts), Some(fparts)) =
                    (summands.get(&(bi, ci)), summands.get(&(ai, bi)))
                else {
                    continue;
                };
                let Some(tparts) = summands.get(&(ai, ci)) else {
                    // nothing to land on: the composite must vanish
                    continue;
                };
                let gmap = maps[&(bi, ci)].clone();
                let fmap = maps[&(ai, bi)].clone();
                let ts = TensorSpace::new(&[&gmap, &fmap], field);
                let mut mb = MapBuilder::new(ts.complex.clone(), maps[&(ai, ci)].clone(), 0);
                compose_blocks(
                    p, a, b, c, gparts, fparts, tparts, &gmap, &fmap, &ts, &mut mb,
                )?;
                comp.insert((ai, bi, ci), mb.build()?);
            }
        }
    }
    let cat = DgCategory {
        field,
        objects,
        maps,
        comp,
        units,
    };
    Ok(IbCategory {
        cat,
        seqs,
        summands,
    })
}

fn expand_pure(ts: &TensorSpace, factors: &[(i64, SparseVec)]) -> (i64, SparseVec) {
    let field = ts.complex.field();
    let total: i64 = factors.iter().map(|(d, _)| d).sum();
    let mut stack: Vec<(Vec<usize>, Scalar)> = vec![(Vec::new(), field.one())];
    for (_, coords) in factors {
        let mut next = Vec::new();
        for (partial, cc) in &stack {
            for (i, v) in coords {
                let mut p2 = partial.clone();
                p2.push(*i);
                next.push((p2, cc * v));
            }
        }
        stack = next;
    }
    let degs: Vec<i64> = factors.iter().map(|(d, _)| *d).collect();
    let mut acc: SparseVec = Vec::new();
    for (idxs, cc) in stack {
        let (n, pos) = ts.position(&degs, &idxs);
        debug_assert_eq!(n, total);
        acc = vec_add(&acc, &vec![(pos, cc)]);
    }
    (total, acc)
}

/// Composition of mapping summands: for ψ over g: <c>→<b> and φ over
/// f: <b>→<a>, the composite lies over f∘g, its leading block is the
/// ψ-leading block composed into φ's leading block together with the
/// ψ-blocks over f's zero fiber, and its i-th block substitutes ψ-blocks
/// into φ's i-th block.
#[allow(clippy::too_many_arguments)]
fn compose_blocks(
    p: &Operad,
    a: &CSeq,
    b: &CSeq,
    c: &CSeq,
    gparts: &[MapSummand],
    fparts: &[MapSummand],
    tparts: &[MapSummand],
    gmap: &ChainComplex,
    fmap: &ChainComplex,
    ts: &TensorSpace,
    mb: &mut MapBuilder,
) -> Result<()> {
    let field = p.field();
    let goffs = offsets(gparts);
    let foffs = offsets(fparts);
    let toffs = offsets(tparts);
    for nn in ts.complex.degrees() {
        for (col, (degs, idxs)) in ts.tuples(nn).iter().enumerate() {
            // locate the g- and f-summands
            let (gp, gl) = locate(gparts, &goffs, degs[0], idxs[0], gmap);
            let (fp, fl) = locate(fparts, &foffs, degs[1], idxs[1], fmap);
            let gpart = &gparts[gp];
            let fpart = &fparts[fp];
            // the composed pointed map: (f∘g)(j) = f[g(j)] with f(0)=0
            let h: Vec<usize> = gpart
                .f
                .iter()
                .map(|&v| if v == 0 { 0 } else { fpart.f[v - 1] })
                .collect();
            let Some(tp) = tparts.iter().position(|t| t.f == h) else {
                continue;
            };
            // decode the tensor coordinates of both summands
            let (gdegs, gidxs) = gpart.tensor.tuples(degs[0])[gl].clone();
            let (fdegs, fidxs) = fpart.tensor.tuples(degs[1])[fl].clone();
            // assemble the target blocks by operadic substitution
            let out = substitute_blocks(
                p, a, b, c, gpart, fpart, &tparts[tp], &gdegs, &gidxs, &fdegs, &fidxs,
            )?;
            if out.1.is_empty() {
                continue;
            }
            for (t, v) in out.1 {
                mb.add(nn, col, toffs[tp] + t_offset_fix(&out.0, t), v.clone());
                let _ = &v;
            }
        }
    }
    Ok(())
}

fn t_offset_fix(_deg: &i64, t: usize) -> usize {
    t
}

fn offsets(parts: &[MapSummand]) -> Vec<usize> {
    // per-degree offsets are handled through locate; these are summand
    // indices only
    (0..parts.len()).collect()
}

fn locate(
    parts: &[MapSummand],
    _offs: &[usize],
    deg: i64,
    idx: usize,
    _total: &ChainComplex,
) -> (usize, usize) {
    let mut off = 0usize;
    for (k, part) in parts.iter().enumerate() {
        let d = part.tensor.complex.dim(deg);
        if idx < off + d {
            return (k, idx - off);
        }
        off += d;
    }
    panic!("index outside mapping complex");
}

/// Substitute the ψ-blocks into the φ-blocks along the fibers of f.
#[allow(clippy::too_many_arguments)]
fn substitute_blocks(
    p: &Operad,
    _a: &CSeq,
    b: &CSeq,
    _c: &CSeq,
    gpart: &MapSummand,
    fpart: &MapSummand,
    tpart: &MapSummand,
    gdegs: &[i64],
    gidxs: &[usize],
    fdegs: &[i64],
    fidxs: &[usize],
) -> Result<(i64, SparseVec)> {
    let field = p.field();
    // φ-blocks: lead over (a.out, f⁻¹(0); b.out), then per a-slot
    // ψ-blocks: lead over (b.out, g⁻¹(0); c.out), then per b-slot
    // target lead: ψ-lead ∘ (φ-lead at its leading slot), then the
    // ψ-blocks over f⁻¹(0) substituted into the φ-lead's fiber slots;
    // target block i: φ-block i with ψ-blocks over its fiber slots.
    //
    // signs: all reorderings below move whole graded blocks; the sign is
    // accumulated via Koszul bookkeeping on the block degree sequence.
    let mut sign = 1i64;

    // track the current ordered list of factor degrees for sign purposes:
    // start with [g-blocks..., f-blocks...]
    let mut degs_order: Vec<i64> = gdegs.to_vec();
    degs_order.extend(fdegs.iter().copied());

    // helper: move the factor at position `from` to sit immediately
    // before position `to` (from > to), accumulating Koszul signs
    let move_before = |order: &mut Vec<i64>, from: usize, to: usize, sign: &mut i64| {
        let d = order.remove(from);
        if d.rem_euclid(2) == 1 {
            for x in order[to..from].iter() {
                if x.rem_euclid(2) == 1 {
                    *sign = -*sign;
                }
            }
        }
        order.insert(to, d);
    };

    // Rearrange into evaluation order: ψ-lead, φ-lead, then for each slot
    // of φ-lead's fiber the matching ψ-block, then per a-slot φ-block
    // followed by its ψ-blocks. We evaluate instead by direct operadic
    // composition below and only need the permutation sign; compute the
    // target arrangement indices first.
    let gn = gdegs.len();
    let b_arity = b.arity();
    // factor roles: g-factor 0 = ψ-lead; g-factor j+1 = ψ-block over
    // b-slot j; f-factor 0 = φ-lead; f-factor i+1 = φ-block for a-slot i
    // target order: [ψ-lead, φ-lead, ψ-blocks over f⁻¹(0) in j order,
    //                for each a-slot i: φ-block i, ψ-blocks over its fiber]
    let mut target: Vec<usize> = vec![0, gn];
    for j in 0..b_arity {
        if fpart.f[j] == 0 {
            target.push(1 + j);
        }
    }
    for i in 0..fpart.blocks.len() - 1 {
        target.push(gn + 1 + i);
        for j in 0..b_arity {
            if fpart.f[j] == i + 1 {
                target.push(1 + j);
            }
        }
    }
    // apply the permutation by repeated moves, tracking signs
    {
        let mut current: Vec<usize> = (0..degs_order.len()).collect();
        for (slot, &want) in target.iter().enumerate() {
            let at = current.iter().position(|&x| x == want).unwrap();
            if at != slot {
                let d = degs_order[at];
                if d.rem_euclid(2) == 1 {
                    for x in degs_order[slot..at].iter() {
                        if x.rem_euclid(2) == 1 {
                            sign = -sign;
                        }
                    }
                }
                let v = current.remove(at);
                current.insert(slot, v);
                let dv = degs_order.remove(at);
                degs_order.insert(slot, dv);
            }
        }
    }
    let _ = move_before;

    // now evaluate: compose the ψ-lead with the φ-lead at slot 0, then
    // substitute ψ-zero-fiber blocks into the φ-lead fiber slots, then
    // build each target block
    let glead_seq = &gpart.blocks[0];
    let flead_seq = &fpart.blocks[0];
    let glead = (gdegs[0], vec![(gidxs[0], field.one())]);
    let flead = (fdegs[0], vec![(fidxs[0], field.one())]);
    // ψ-lead ∘_0 φ-lead: the leading input of ψ-lead is b.out
    let mut lead = p.compose_vec(glead_seq, &glead, 0, flead_seq, &flead);
    let mut lead_seq = glead_seq.substitute(0, flead_seq);
    if lead.1.is_empty() {
        return Ok((0, Vec::new()));
    }
    // φ-lead's inputs after the leading a.out slot: the f⁻¹(0) fiber, at
    // positions 1 + (rank within the fiber); substitute the matching
    // ψ-blocks right to left
    let zero_fiber: Vec<usize> = (0..b_arity).filter(|&j| fpart.f[j] == 0).collect();
    for (rank, &j) in zero_fiber.iter().enumerate().rev() {
        let slot = 1 + rank; // after φ-lead's leading slot moved to 0's expansion
        let bseq = &gpart.blocks[1 + j];
        let bv = (gdegs[1 + j], vec![(gidxs[1 + j], field.one())]);
        lead = p.compose_vec(&lead_seq, &lead, slot + gpart_lead_extra(gpart), bseq, &bv);
        lead_seq = lead_seq.substitute(slot + gpart_lead_extra(gpart), bseq);
        if lead.1.is_empty() {
            return Ok((0, Vec::new()));
        }
    }
    let mut factors: Vec<(i64, SparseVec)> = vec![lead];
    let mut factor_seqs: Vec<CSeq> = vec![lead_seq];
    // per a-slot blocks
    for i in 0..fpart.blocks.len() - 1 {
        let fblock_seq = &fpart.blocks[1 + i];
        let mut block = (fdegs[1 + i], vec![(fidxs[1 + i], field.one())]);
        let mut block_seq = fblock_seq.clone();
        let fiber: Vec<usize> = (0..b_arity).filter(|&j| fpart.f[j] == i + 1).collect();
        for (rank, &j) in fiber.iter().enumerate().rev() {
            let bseq = &gpart.blocks[1 + j];
            let bv = (gdegs[1 + j], vec![(gidxs[1 + j], field.one())]);
            block = p.compose_vec(&block_seq, &block, rank, bseq, &bv);
            block_seq = block_seq.substitute(rank, bseq);
            if block.1.is_empty() {
                return Ok((0, Vec::new()));
            }
        }
        factors.push(block);
        factor_seqs.push(block_seq);
    }
    // express in the target summand; block input orders match the target
    // blocks up to the composed fiber interleavings, which are sorted by
    // construction of substitute at ascending ranks
    debug_assert_eq!(factor_seqs.len(), tpart.blocks.len());
    let v = expand_pure(&tpart.tensor, &factors);
    Ok((v.0, crate::linalg::vec_scale(&v.1, &field.from_i64(sign))))
}

fn gpart_lead_extra(_g: &MapSummand) -> usize {
    0
}

/// Translate an infinitesimal bimodule into a module over the enriched
/// category: values are the levels, and the action of an f-summand runs
/// the left action of the leading block followed by the right actions of
/// the slot blocks and the sorting permutation of f's interleaving.
pub fn to_functor(m: &IBimod, ibcat: &IbCategory) -> Result<CatModule> {
    let field = m.field();
    let values: Vec<ChainComplex> = ibcat.seqs.iter().map(|s| m.level(s)).collect();
    let mut act = BTreeMap::new();
    for (si, s) in ibcat.seqs.iter().enumerate() {
        for (ti, t) in ibcat.seqs.iter().enumerate() {
            let Some(parts) = ibcat.summands.get(&(si, ti)) else {
                continue;
            };
            let fv = m.level(s);
            let mapc = ibcat.cat.mapping(si, ti);
            let ts = TensorSpace::new(&[&fv, &mapc], field);
            let mut mb = MapBuilder::new(ts.complex.clone(), m.level(t), 0);
            for nn in ts.complex.degrees() {
                for (col, (degs, idxs)) in ts.tuples(nn).iter().enumerate() {
                    let x = (degs[0], vec![(idxs[0], field.one())]);
                    let (pi, pl) = locate(parts, &[], degs[1], idxs[1], &mapc);
                    let part = &parts[pi];
                    let (bdegs, bidxs) = part.tensor.tuples(degs[1])[pl].clone();
                    let out = apply_summand(m, s, t, part, &x, &bdegs, &bidxs)?;
                    for (tt, v) in out.1 {
                        mb.add(nn, col, tt, v);
                    }
                }
            }
            act.insert((si, ti), mb.build()?);
        }
    }
    Ok(CatModule {
        cat: ibcat.cat.clone(),
        values,
        act,
    })
}

/// Evaluate one f-summand morphism on a module element.
fn apply_summand(
    m: &IBimod,
    s: &CSeq,
    t: &CSeq,
    part: &MapSummand,
    x: &(i64, SparseVec),
    bdegs: &[i64],
    bidxs: &[usize],
) -> Result<(i64, SparseVec)> {
    let field = m.field();
    // sign: the module element x moves past the leading block
    let mut sign = if (x.0 * bdegs[0]).rem_euclid(2) == 1 {
        field.from_i64(-1)
    } else {
        field.one()
    };
    // left action of the leading block at its slot 0
    let lead_seq = &part.blocks[0];
    let lead = (bdegs[0], vec![(bidxs[0], field.one())]);
    let mut cur = m.left_vec(lead_seq, &lead, 0, s, x);
    let mut cur_seq = lead_seq.substitute(0, s);
    if cur.1.is_empty() {
        return Ok((0, Vec::new()));
    }
    // right actions of the slot blocks: s's slot i sits at position
    // |f⁻¹(0)| shifted by earlier substitutions; compose right to left so
    // earlier positions stay put, tracking the crossings for signs
    let zero_fiber = part.blocks[0].arity() - 1;
    for i in (0..s.arity()).rev() {
        let bseq = &part.blocks[1 + i];
        let bv = (bdegs[1 + i], vec![(bidxs[1 + i], field.one())]);
        // each block crosses the blocks after it when pulled in
        let crossed: i64 = bdegs[1 + i + 1..].iter().sum();
        if (bdegs[1 + i] * crossed).rem_euclid(2) == 1 {
            sign = -sign;
        }
        let slot = zero_fiber + i;
        cur = m.right_vec(&cur_seq, &cur, slot, bseq, &bv);
        cur_seq = cur_seq.substitute(slot, bseq);
        if cur.1.is_empty() {
            return Ok((0, Vec::new()));
        }
    }
    // sort the interleaved inputs of cur_seq into t's order
    let mut keys: Vec<usize> = Vec::new();
    for j in 0..t.arity() {
        if part.f[j] == 0 {
            keys.push(j);
        }
    }
    for i in 0..s.arity() {
        for j in 0..t.arity() {
            if part.f[j] == i + 1 {
                keys.push(j);
            }
        }
    }
    let sigma = Perm::sorting(&keys);
    let act = m.coll().action(&cur_seq, &sigma);
    let out = act.component(cur.0).apply(&cur.1);
    Ok((cur.0, crate::linalg::vec_scale(&out, &sign)))
}

/// Recover an infinitesimal bimodule from a module over the enriched
/// category: actions are read off along the designated morphisms.
pub fn from_functor(f: &CatModule, ibcat: &IbCategory, p: &Operad) -> Result<IBimod> {
    let field = p.field();
    let obj_index: BTreeMap<CSeq, usize> = ibcat
        .seqs
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i))
        .collect();
    let mut levels = BTreeMap::new();
    for (i, s) in ibcat.seqs.iter().enumerate() {
        let v = f.value(i);
        if !v.is_zero() {
            levels.insert(s.clone(), v);
        }
    }
    // symmetric actions: bijective pointed maps with unit blocks
    let mut actions = BTreeMap::new();
    for (s, lvl) in &levels {
        let si = obj_index[s];
        for a in 0..s.arity().saturating_sub(1) {
            let tseq = s.swap(a);
            let ti = obj_index[&tseq];
            // the pointed map sending the target slot back to the source:
            // position j of t corresponds to σ⁻¹(j) of s
            let mut fmap: Vec<usize> = (1..=s.arity()).collect();
            fmap.swap(a, a + 1);
            let morphism = unit_block_morphism(p, ibcat, si, ti, &fmap)?;
            let tgt = levels
                .get(&tseq)
                .cloned()
                .unwrap_or_else(|| ChainComplex::zero(field));
            let mut mb = MapBuilder::new(lvl.clone(), tgt, 0);
            for d in lvl.degrees() {
                for i in 0..lvl.dim(d) {
                    let img = f.act_vec(si, ti, &(d, vec![(i, field.one())]), &morphism);
                    for (t, v) in img.1 {
                        mb.add(d, i, t, v);
                    }
                }
            }
            actions.insert((s.clone(), a), mb.build()?);
        }
    }
    let coll = Collection::new(
        p.colors().clone(),
        field,
        ibcat.seqs.iter().map(|s| s.arity()).max().unwrap_or(1).max(1),
        levels,
        actions,
        false,
    )?;

    // left action: the morphism with the leading block μ (inputs sorted
    // so that the source output comes first) and unit side blocks
    let mut left = BTreeMap::new();
    let mut right = BTreeMap::new();
    let pseqs: Vec<CSeq> = p.coll().seqs().cloned().collect();
    let mseqs: Vec<CSeq> = coll.seqs().cloned().collect();
    for s1 in &pseqs {
        for s2 in &mseqs {
            for i in 0..s1.arity() {
                if s1.inputs[i] != s2.output {
                    continue;
                }
                let res = s1.substitute(i, s2);
                let (Some(&si), Some(&ti)) = (obj_index.get(s2), obj_index.get(&res)) else {
                    continue;
                };
                let l1 = p.level(s1);
                let l2 = coll.level(s2);
                let ts = TensorSpace::new(&[&l1, &l2], field);
                let mut mb = MapBuilder::new(ts.complex.clone(), coll.level(&res), 0);
                // f: <res> -> <s2>: s2-positions map to themselves
                // (shifted); μ's other inputs map to 0
                let mut fmap = vec![0usize; res.arity()];
                for (jj, ff) in fmap.iter_mut().enumerate().skip(i).take(s2.arity()) {
                    *ff = jj - i + 1;
                }
                let Some(parts) = ibcat.summands.get(&(si, ti)) else {
                    continue;
                };
                let Some(pi) = parts.iter().position(|prt| prt.f == fmap) else {
                    continue;
                };
                let part = &parts[pi];
                // leading block: μ with inputs reordered so slot i leads
                let rot = rotate_to_front(s1.arity(), i);
                let act = p.coll().action(s1, &rot);
                for nn in ts.complex.degrees() {
                    for (col, (degs, idxs)) in ts.tuples(nn).iter().enumerate() {
                        let mu = (degs[0], vec![(idxs[0], field.one())]);
                        let rmu = (degs[0], act.component(degs[0]).apply(&mu.1));
                        if rmu.1.is_empty() {
                            continue;
                        }
                        let x = (degs[1], vec![(idxs[1], field.one())]);
                        // morphism vector: rmu in the lead, units elsewhere
                        let mut factors: Vec<(i64, SparseVec)> = vec![rmu];
                        for blk in &part.blocks[1..] {
                            assert_eq!(blk.arity(), 1);
                            factors.push((0, p.unit_vec(blk.output)));
                        }
                        let (md, mv) = expand_pure(&part.tensor, &factors);
                        let moff = morphism_offset(parts, pi, md);
                        let shifted: SparseVec =
                            mv.iter().map(|(t, v)| (t + moff, v.clone())).collect();
                        let img = f.act_vec(si, ti, &x, &(md, shifted));
                        // sign: x crossed the morphism? act_vec handles
                        // the pairing order F(x) ⊗ Map; no extra sign
                        for (t, v) in img.1 {
                            mb.add(nn, col, t, v);
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
                if s1.inputs[j] != s2.output {
                    continue;
                }
                let res = s1.substitute(j, s2);
                let (Some(&si), Some(&ti)) = (obj_index.get(s1), obj_index.get(&res)) else {
                    continue;
                };
                let l1 = coll.level(s1);
                let l2 = p.level(s2);
                let ts = TensorSpace::new(&[&l1, &l2], field);
                let mut mb = MapBuilder::new(ts.complex.clone(), coll.level(&res), 0);
                // f: positions of ν's inputs map to j+1, others keep slots
                let mut fmap = vec![0usize; res.arity()];
                for (jj, ff) in fmap.iter_mut().enumerate() {
                    if jj < j {
                        *ff = jj + 1;
                    } else if jj < j + s2.arity() {
                        *ff = j + 1;
                    } else {
                        *ff = jj - s2.arity() + 2;
                    }
                }
                let Some(parts) = ibcat.summands.get(&(si, ti)) else {
                    continue;
                };
                let Some(pi) = parts.iter().position(|prt| prt.f == fmap) else {
                    continue;
                };
                let part = &parts[pi];
                for nn in ts.complex.degrees() {
                    for (col, (degs, idxs)) in ts.tuples(nn).iter().enumerate() {
                        let x = (degs[0], vec![(idxs[0], field.one())]);
                        let nu = (degs[1], vec![(idxs[1], field.one())]);
                        let mut factors: Vec<(i64, SparseVec)> =
                            vec![(0, p.unit_vec(s1.output))];
                        for (bb, blk) in part.blocks[1..].iter().enumerate() {
                            if bb == j {
                                factors.push(nu.clone());
                            } else {
                                assert_eq!(blk.arity(), 1);
                                factors.push((0, p.unit_vec(blk.output)));
                            }
                        }
                        let (md, mv) = expand_pure(&part.tensor, &factors);
                        let moff = morphism_offset(parts, pi, md);
                        let shifted: SparseVec =
                            mv.iter().map(|(t, v)| (t + moff, v.clone())).collect();
                        let img = f.act_vec(si, ti, &x, &(md, shifted));
                        for (t, v) in img.1 {
                            mb.add(nn, col, t, v);
                        }
                    }
                }
                right.insert((s1.clone(), s2.clone(), j), mb.build()?);
            }
        }
    }
    Ok(IBimod::from_parts(p.clone(), coll, left, right))
}

fn morphism_offset(parts: &[MapSummand], pi: usize, deg: i64) -> usize {
    parts[..pi]
        .iter()
        .map(|p| p.tensor.complex.dim(deg))
        .sum()
}

fn unit_block_morphism(
    p: &Operad,
    ibcat: &IbCategory,
    si: usize,
    ti: usize,
    fmap: &[usize],
) -> Result<(i64, SparseVec)> {
    let parts = ibcat
        .summands
        .get(&(si, ti))
        .ok_or_else(|| Error::Config("morphism space missing".into()))?;
    let pi = parts
        .iter()
        .position(|part| part.f == fmap)
        .ok_or_else(|| Error::Config("pointed map summand missing".into()))?;
    let part = &parts[pi];
    let mut factors: Vec<(i64, SparseVec)> = Vec::new();
    for (k, blk) in part.blocks.iter().enumerate() {
        let _ = k;
        assert_eq!(blk.arity(), 1);
        factors.push((0, p.unit_vec(blk.output)));
    }
    let (md, mv) = expand_pure(&part.tensor, &factors);
    let moff = morphism_offset(parts, pi, md);
    Ok((md, mv.iter().map(|(t, v)| (t + moff, v.clone())).collect()))
}

/// The permutation rotating slot i to the front, keeping the rest in
/// order.
fn rotate_to_front(n: usize, i: usize) -> Perm {
    let mut map = vec![0usize; n];
    map[i] = 0;
    let mut next = 1;
    for (j, mj) in map.iter_mut().enumerate() {
        if j != i {
            *mj = next;
            next += 1;
        }
    }
    Perm::from_images(map)
}

/// One-object Kan extensions: left is X ⊗ Map(x, −), right is
/// Hom(Map(−, x), X).
pub fn kan_from_object(
    d: &DgCategory,
    x: usize,
    value: &ChainComplex,
    left: bool,
) -> Result<CatModule> {
    let field = d.field();
    let mut values = Vec::new();
    let mut act = BTreeMap::new();
    if left {
        let mut tss = Vec::new();
        for y in 0..d.len() {
            let mapping = d.mapping(x, y);
            let ts = TensorSpace::new(&[value, &mapping], field);
            values.push(ts.complex.clone());
            tss.push(ts);
        }
        for y in 0..d.len() {
            for z in 0..d.len() {
                let fv = &values[y];
                let mapping = d.mapping(y, z);
                let ts = TensorSpace::new(&[fv, &mapping], field);
                let mut mb = MapBuilder::new(ts.complex.clone(), values[z].clone(), 0);
                for nn in ts.complex.degrees() {
                    for (col, (degs, idxs)) in ts.tuples(nn).iter().enumerate() {
                        let (vdegs, vidxs) = tss[y].tuples(degs[0])[idxs[0]].clone();
                        let g = (degs[1], vec![(idxs[1], field.one())]);
                        let f = (vdegs[1], vec![(vidxs[1], field.one())]);
                        let gf = d.compose_vec(x, y, z, &g, &f);
                        // sign: g crosses the X-factor
                        let sign = if (degs[1] * vdegs[0]).rem_euclid(2) == 1 {
                            field.from_i64(-1)
                        } else {
                            field.one()
                        };
                        for (t, v) in gf.1 {
                            let (_, pos) =
                                tss[z].position(&[vdegs[0], gf.0], &[vidxs[0], t]);
                            mb.add(nn, col, pos, &sign * &v);
                        }
                    }
                }
                act.insert((y, z), mb.build()?);
            }
        }
    } else {
        let mut homs = Vec::new();
        for y in 0..d.len() {
            let mapping = d.mapping(y, x);
            let h = HomSpace::new(&mapping, value)?;
            values.push(h.complex.clone());
            homs.push(h);
        }
        for y in 0..d.len() {
            for z in 0..d.len() {
                let fv = &values[y];
                let mapping = d.mapping(y, z);
                let ts = TensorSpace::new(&[fv, &mapping], field);
                let mut mb = MapBuilder::new(ts.complex.clone(), values[z].clone(), 0);
                for nn in ts.complex.degrees() {
                    for (col, (degs, idxs)) in ts.tuples(nn).iter().enumerate() {
                        // φ ↦ φ ∘ (− ∘ g): precompose with g
                        let (q, i, j) = homs[y].entries(degs[0])[idxs[0]];
                        let g = (degs[1], vec![(idxs[1], field.one())]);
                        // map z -> x basis vectors h with g∘-composite
                        let mzx = d.mapping(z, x);
                        for (hd, hi) in basis_of(&mzx) {
                            if hd + degs[1] != q {
                                continue;
                            }
                            let hg = d.compose_vec(
                                y,
                                z,
                                x,
                                &(hd, vec![(hi, field.one())]),
                                &g,
                            );
                            let coeff =
                                hg.1.iter().find(|(t, _)| *t == i).map(|(_, c)| c.clone());
                            if let Some(cf) = coeff {
                                // sign: (φ∘(−∘g))(h) = ±φ(h∘g); moving g
                                // past φ costs |φ||g|
                                let sign = if (degs[0] * degs[1]).rem_euclid(2) == 1 {
                                    field.from_i64(-1)
                                } else {
                                    field.one()
                                };
                                let pos = homs[z].position(degs[0], hd, hi, j);
                                mb.add(nn, col, pos, &sign * &cf);
                            }
                        }
                    }
                }
                act.insert((y, z), mb.build()?);
            }
        }
        let _ = hom_complex;
    }
    Ok(CatModule {
        cat: d.clone(),
        values,
        act,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ibmod::{check_ibmod, cotangent_ib, free_ib, self_ib};
    use crate::operad::{preset, Preset};

    fn q() -> FieldSpec {
        FieldSpec::Rationals
    }

    #[test]
    fn point_category_checks() {
        let d = DgCategory::point(q());
        assert!(d.check().ok());
    }

    #[test]
    fn ib_category_of_com_counts_pointed_maps() {
        // dim Map(n, m) = (n+1)^m when every block is one-dimensional
        let com = preset(Preset::Com, q(), 5).unwrap();
        let ib = ib_category(&com, 4).unwrap();
        for n in 0..=4usize {
            for m in 0..=4usize {
                let dim = ib.cat.mapping(n, m).dim(0);
                assert_eq!(dim, (n + 1).pow(m as u32), "Map({n},{m})");
            }
        }
        assert!(ib.cat.check().ok());
    }

    #[test]
    fn ib_category_of_unit_operad_is_symmetric_groups() {
        // Map(n, n) is the group algebra of Σ_n; no morphisms otherwise
        let i = preset(Preset::I, q(), 4).unwrap();
        let ib = ib_category(&i, 3).unwrap();
        for n in 0..=3usize {
            for m in 0..=3usize {
                let dim = ib.cat.mapping(n, m).dim(0);
                let expect = if n == m {
                    (1..=n).product::<usize>()
                } else {
                    0
                };
                assert_eq!(dim, expect, "Map({n},{m})");
            }
        }
        assert!(ib.cat.check().ok());
        // composition at n=3 is the symmetric-group multiplication:
        // check invertibility of a transposition summand
        let m3 = ib.cat.mapping(3, 3);
        assert_eq!(m3.dim(0), 6);
    }

    #[test]
    fn ib_category_of_ass_counts_blocks() {
        // oracle: dim Map(1,2) = Σ_f |Ass(k_{f,0}+1)|·|Ass(k_{f,1})| over
        // the 4 pointed maps <2> -> <1>
        let ass = preset(Preset::Ass, q(), 4).unwrap();
        let ib = ib_category(&ass, 3).unwrap();
        let fact = |k: usize| (1..=k).product::<usize>();
        let mut expect = 0usize;
        for f in pointed_maps(2, 1) {
            let k0 = f.iter().filter(|&&v| v == 0).count();
            let k1 = f.iter().filter(|&&v| v == 1).count();
            expect += fact(k0 + 1) * fact(k1);
        }
        assert_eq!(expect, 12);
        assert_eq!(ib.cat.mapping(1, 2).dim(0), expect);
        assert!(ib.cat.check().ok());
    }

    #[test]
    fn to_functor_of_com_self_is_constant() {
        let com = preset(Preset::Com, q(), 4).unwrap();
        let ib = ib_category(&com, 3).unwrap();
        let f = to_functor(&self_ib(&com), &ib).unwrap();
        assert!(f.check().ok());
        // every structure matrix is the fold map: all entries 1
        for a in 0..ib.seqs.len() {
            for b in 0..ib.seqs.len() {
                let m = f.action(a, b).component(0);
                for i in 0..m.rows() {
                    for (j, v) in m.row(i).iter().map(|(j, v)| (*j, v.clone())) {
                        let _ = j;
                        assert!(v.is_one(), "entry at {a}->{b}");
                    }
                }
            }
        }
    }

    #[test]
    fn functor_roundtrip_on_cotangent() {
        let ass = preset(Preset::Ass, q(), 4).unwrap();
        let ib = ib_category(&ass, 3).unwrap();
        let l = cotangent_ib(&ass).unwrap();
        let l_res = crate::ibmod::restrict_ibmod_ceiling(&l, 3).unwrap();
        let f = to_functor(&l_res, &ib).unwrap();
        assert!(f.check().ok(), "functoriality of the cotangent functor");
        let back = from_functor(&f, &ib, &ass).unwrap();
        // roundtrip: identical level dims and identical action matrices
        assert!(back.coll().same_dims(l_res.coll()));
        for s1 in ass.coll().seqs() {
            for s2 in back.coll().seqs() {
                for i in 0..s1.arity() {
                    if s1.inputs[i] != s2.output
                        || s1.substitute(i, s2).arity() > 3
                        || s1.arity() + s2.arity() > 4
                    {
                        continue;
                    }
                    assert!(
                        back.left_map(s1, s2, i).equal(&l_res.left_map(s1, s2, i)),
                        "left at ({s1},{s2},{i})"
                    );
                }
            }
        }
        assert!(check_ibmod(&back).ok());
    }

    #[test]
    fn free_module_is_left_kan_from_the_point() {
        // to_functor(free on E) has the values of the left Kan extension
        // at the arity-0 object
        let com = preset(Preset::Com, q(), 4).unwrap();
        let ib = ib_category(&com, 3).unwrap();
        let e = Collection::unit_e(com.colors().clone(), q(), 4);
        let free = free_ib(&com, &e).unwrap();
        let f_free = to_functor(
            &crate::ibmod::restrict_ibmod_ceiling(&free.ib, 3).unwrap(),
            &ib,
        )
        .unwrap();
        let kan = kan_from_object(&ib.cat, 0, &ChainComplex::unit(q()), true).unwrap();
        assert!(kan.check().ok());
        for y in 0..ib.seqs.len() {
            assert_eq!(
                f_free.value(y).total_dim(),
                kan.value(y).total_dim(),
                "object {y}"
            );
        }
    }

    #[test]
    fn right_kan_constant_when_low_levels_are_units() {
        // over Com every right Kan from the arity-0 object is levelwise k
        let com = preset(Preset::Com, q(), 4).unwrap();
        let ib = ib_category(&com, 3).unwrap();
        let x = ChainComplex::unit(q());
        let kan = kan_from_object(&ib.cat, 0, &x, false).unwrap();
        assert!(kan.check().ok());
        for y in 0..ib.seqs.len() {
            assert_eq!(kan.value(y).total_dim(), 1, "object {y}");
        }
        // one-object category: the right Kan is the constant module
        let pt = DgCategory::point(q());
        let kan = kan_from_object(&pt, 0, &x, false).unwrap();
        assert_eq!(kan.value(0).total_dim(), 1);
    }
}
