//! Kähler differentials of algebras and the comparison with the relative
//! composite of the cotangent object.

use std::collections::BTreeMap;

use crate::algebra::{
    act_relative, express_ma, restrict_algebra, AModule, AlgMapBasis, PAlgebra,
    RelativeComposite,
};
use crate::chain::{ChainComplex, ChainMap, MapBuilder};
use crate::collection::{CSeq, Color};
use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::ibmod::{cotangent_ib, free_ib, restrict_ibmod_ceiling, IBimod};
use crate::label::Label;
use crate::linalg::{vec_add, vec_scale, Span, SparseVec};
use crate::operad::Operad;

/// The Kähler module of an algebra, by presentation: the free A-module on
/// the underlying spaces modulo the Leibniz relations, with its universal
/// derivation.
pub struct AlgKaehler {
    pub module: AModule,
    /// the universal derivation per color
    pub derivation: BTreeMap<Color, ChainMap>,
    pub free: RelativeComposite,
    pub proj: BTreeMap<Color, ChainMap>,
    pub section: BTreeMap<Color, ChainMap>,
}

/// The generator embedding A(c) -> (free A-module on A's spaces)(c).
fn free_generator(
    p: &Operad,
    fx: &crate::ibmod::FreeIb,
    rel: &RelativeComposite,
    c: Color,
    x: &(i64, SparseVec),
) -> Result<(i64, SparseVec)> {
    let field = p.field();
    let seq = CSeq::new(vec![], c);
    // inner composite: the bare generator with no blocks
    let mp_shape = crate::composite::ComposeShape { blocks: vec![] };
    let mp_si = fx
        .inner
        .shape_index(&seq, &mp_shape)
        .ok_or_else(|| Error::Config("bare generator shape missing".into()))?;
    let (qd, qv) = fx.inner.express_tensor(&seq, mp_si, &[x.clone()]);
    let f_shape = crate::composite::InfShape {
        positions: vec![],
        inner_output: c,
    };
    let f_si = fx
        .outer
        .shape_index(&seq, &f_shape)
        .ok_or_else(|| Error::Config("generator level shape missing".into()))?;
    let (_, built) = &fx.outer.levels[&seq];
    let ts = &built.summands[f_si].tensor;
    let unit = p.unit_vec(c);
    let mut acc: SparseVec = Vec::new();
    for (iu, cu) in &unit {
        for (iq, cq) in &qv {
            let (_, pos) = ts.position(&[0, qd], &[*iu, *iq]);
            acc = vec_add(&acc, &vec![(pos, cu * cq)]);
        }
    }
    let fvec = (qd, built.express(f_si, qd, &acc));
    // into the relative composite: the F-part alone, no algebra blocks
    let pre = express_ma(&rel.pre, &seq, &fvec, &[])?;
    let pr = rel
        .proj
        .get(&c)
        .ok_or_else(|| Error::Config("free module color missing".into()))?;
    Ok((pre.0, pr.component(pre.0).apply(&pre.1)))
}

pub fn kaehler_algebra(a: &PAlgebra) -> Result<AlgKaehler> {
    let p_big = a.operad().clone();
    let field = a.field();
    let x_coll = a.as_collection();
    let fx = free_ib(&p_big, &x_coll)?;
    // act_relative restricts to the exact range of the free module
    let rel = act_relative(&fx.ib, a)?;
    let a_small = rel.module.algebra().clone();
    let p = a_small.operad().clone();

    // Leibniz relation span per (color, degree), in the free A-module
    let mut spans: BTreeMap<(Color, i64), Span> = BTreeMap::new();
    let mut insert = |spans: &mut BTreeMap<(Color, i64), Span>,
                      c: Color,
                      d: i64,
                      v: SparseVec| {
        if v.is_empty() {
            return;
        }
        let dim = rel.module.value(c).dim(d);
        spans
            .entry((c, d))
            .or_insert_with(|| Span::new(dim, field))
            .insert(v);
    };

    let basis_of = |cx: &ChainComplex| {
        let mut v = Vec::new();
        for d in cx.degrees() {
            for i in 0..cx.dim(d) {
                v.push((d, i));
            }
        }
        v
    };

    // d-compatibility: ι(∂x) − ∂ι(x)
    for c in p.colors().iter() {
        let av = a_small.value(c);
        for d in av.degrees() {
            let da = av.diff_at(d);
            for i in 0..av.dim(d) {
                let dx: SparseVec = da.transpose().row(i).clone();
                let idx = free_generator(&p_big, &fx, &rel, c, &(d, vec![(i, field.one())]))?;
                let d_ix = rel.module.value(c).diff_at(idx.0).apply(&idx.1);
                let i_dx = if dx.is_empty() {
                    Vec::new()
                } else {
                    free_generator(&p_big, &fx, &rel, c, &(d - 1, dx))?.1
                };
                let r = vec_add(&i_dx, &vec_scale(&d_ix, &field.from_i64(-1)));
                insert(&mut spans, c, d - 1, r);
            }
        }
    }

    // Leibniz: ι(μ·a's) − Σ_k μ·(a's, ι(a_k) at k)
    for seq in p.coll().seqs() {
        let arg_cxs: Vec<ChainComplex> =
            seq.inputs.iter().map(|&c| a_small.value(c)).collect();
        let mut tuples: Vec<Vec<(i64, usize)>> = vec![Vec::new()];
        for cx in &arg_cxs {
            let mut next = Vec::new();
            for t in &tuples {
                for b in basis_of(cx) {
                    let mut t2 = t.clone();
                    t2.push(b);
                    next.push(t2);
                }
            }
            tuples = next;
        }
        for (d1, b1) in basis_of(&p.level(seq)) {
            let mu = (d1, vec![(b1, field.one())]);
            for tup in &tuples {
                let args: Vec<(i64, SparseVec)> = tup
                    .iter()
                    .map(|(d, i)| (*d, vec![(*i, field.one())]))
                    .collect();
                let prod = a_small.act(seq, &mu, &args);
                let mut r = if prod.1.is_empty() {
                    Vec::new()
                } else {
                    free_generator(&p_big, &fx, &rel, seq.output, &prod)?.1
                };
                let total = mu.0 + args.iter().map(|(d, _)| d).sum::<i64>();
                for k in 0..seq.arity() {
                    let ck = seq.inputs[k];
                    let gen_k = free_generator(&p_big, &fx, &rel, ck, &args[k])?;
                    let mut margs = args.clone();
                    margs[k] = gen_k;
                    let term = rel.module.act(seq, k, &mu, &margs);
                    r = vec_add(&r, &vec_scale(&term.1, &field.from_i64(-1)));
                }
                insert(&mut spans, seq.output, total, r);
            }
        }
    }

    // quotient
    let mut values = BTreeMap::new();
    let mut proj = BTreeMap::new();
    let mut section = BTreeMap::new();
    for c in p.colors().iter() {
        let lvl = rel.module.value(c);
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
                    .map(|&i| Label::tag("om", lvl.labels(d)[i].clone()))
                    .collect(),
            );
            survivors.insert(d, keep);
        }
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

    // induced module action
    let mut actions = BTreeMap::new();
    for seq in p.coll().seqs() {
        for k in 0..seq.arity() {
            let tmp = AModule::from_parts(a_small.clone(), values.clone(), BTreeMap::new());
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
                    let mut args: Vec<(i64, SparseVec)> = Vec::new();
                    for (t, (dd, di)) in degs[1..].iter().zip(idxs[1..].iter()).enumerate() {
                        if t == k {
                            args.push((degs[k + 1], lifted.clone()));
                        } else {
                            args.push((*dd, vec![(*di, field.one())]));
                        }
                    }
                    let img = rel.module.act(seq, k, &mu, &args);
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

    let module = AModule::from_parts(a_small.clone(), values, actions);

    // universal derivation: ι followed by π
    let mut derivation = BTreeMap::new();
    for c in p.colors().iter() {
        let av = a_small.value(c);
        let tgt = module.value(c);
        let mut mb = MapBuilder::new(av.clone(), tgt, 0);
        for d in av.degrees() {
            for i in 0..av.dim(d) {
                let g = free_generator(&p_big, &fx, &rel, c, &(d, vec![(i, field.one())]))?;
                let Some(pr) = proj.get(&c) else { continue };
                let out = pr.component(g.0).apply(&g.1);
                for (t, v) in out {
                    mb.add(d, i, t, v);
                }
            }
        }
        derivation.insert(c, mb.build()?);
    }

    Ok(AlgKaehler {
        module,
        derivation,
        free: rel,
        proj,
        section,
    })
}

/// A constructed isomorphism witness between the relative composite of
/// the cotangent object and the Kähler module of the algebra.
pub struct KaehlerWitness {
    pub left_dims: BTreeMap<(Color, i64), usize>,
    pub right_dims: BTreeMap<(Color, i64), usize>,
    pub iso: bool,
}

/// Build the canonical map cotangent∘_P A -> Ω_A and verify bijectivity
/// per color and degree. The corollary is unconditional, so a failure is
/// reported with the dimension table.
pub fn kaehler_comparison(p: &Operad, a: &PAlgebra) -> Result<KaehlerWitness> {
    let field = p.field();
    let omega = kaehler_algebra(a)?;
    let a_small = omega.module.algebra().clone();
    let p_small = a_small.operad().clone();
    let cap = p_small.max_arity();
    let l_full = cotangent_ib(p)?;
    let l = restrict_ibmod_ceiling(&l_full, cap)?;
    let rel_l = act_relative(&l, &a_small)?;

    // the canonical map on the pre-quotient: (μ with mark at slot i;
    // a-blocks) ↦ μ ·_Ω (a's, d(a_i) at slot i)
    let mut ok = true;
    let mut left_dims = BTreeMap::new();
    let mut right_dims = BTreeMap::new();
    for c in p_small.colors().iter() {
        let pre = rel_l.pre.coll.level(&CSeq::new(vec![], c));
        let target = CSeq::new(vec![], c);
        let quo = rel_l.module.value(c);
        let om = omega.module.value(c);
        for d in quo.degrees() {
            left_dims.insert((c, d), quo.dim(d));
        }
        for d in om.degrees() {
            right_dims.insert((c, d), om.dim(d));
        }
        // assemble the map on pre-quotient basis, then check it kills the
        // relative relations and induces a bijection
        let mut mb = MapBuilder::new(pre.clone(), om.clone(), 0);
        let Some((shapes, built)) = rel_l.pre.levels.get(&target) else {
            continue;
        };
        for dd in pre.degrees() {
            for idx in 0..pre.dim(dd) {
                let xv: SparseVec = vec![(idx, field.one())];
                let mut out: SparseVec = Vec::new();
                for (si, shape) in shapes.iter().enumerate() {
                    let tv = built.restrict(si, dd, &xv);
                    if tv.is_empty() {
                        continue;
                    }
                    let ts = &built.summands[si].tensor;
                    let m_seq = shape.outer_seq(&target);
                    let arity = m_seq.arity();
                    let plvl = p_small.level(&m_seq);
                    for (pos, cv) in &tv {
                        let (tdegs, tidxs) = &ts.tuples(dd)[*pos];
                        // decode the cotangent basis: mark * dim + index
                        let dimp = plvl.dim(tdegs[0]);
                        if dimp == 0 {
                            continue;
                        }
                        let mark = tidxs[0] / dimp;
                        let pidx = tidxs[0] % dimp;
                        let mu = (tdegs[0], vec![(pidx, cv.clone())]);
                        let mut args: Vec<(i64, SparseVec)> = Vec::new();
                        for t in 0..arity {
                            let (bd, bi) = (tdegs[t + 1], tidxs[t + 1]);
                            if t == mark {
                                let der = &omega.derivation[&m_seq.inputs[t]];
                                args.push((bd, der.component(bd).apply(&vec![(
                                    bi,
                                    field.one(),
                                )])));
                            } else {
                                args.push((bd, vec![(bi, field.one())]));
                            }
                        }
                        let img = omega.module.act(&m_seq, mark, &mu, &args);
                        out = vec_add(&out, &img.1);
                    }
                }
                for (t, v) in out {
                    mb.add(dd, idx, t, v);
                }
            }
        }
        let map = mb.build()?;
        // the map must vanish on the coequalizer relations: check by
        // composing with the section–projection defect
        let sec = &rel_l.section[&c];
        let pr = &rel_l.proj[&c];
        for dd in pre.degrees() {
            for idx in 0..pre.dim(dd) {
                let direct = map.component(dd).apply(&vec![(idx, field.one())]);
                let cls = pr.component(dd).apply(&vec![(idx, field.one())]);
                let lifted = sec.component(dd).apply(&cls);
                let via = map.component(dd).apply(&lifted);
                if direct != via {
                    return Err(Error::Mismatch(format!(
                        "canonical map does not respect the relative relations at color {c} degree {dd}"
                    )));
                }
            }
        }
        // induced map on the quotient: bijective iff full rank both ways
        for dd in quo.degrees() {
            let induced = map.component(dd).mul(&sec.component(dd));
            if induced.rank() != quo.dim(dd) || quo.dim(dd) != om.dim(dd) {
                ok = false;
            }
        }
        for dd in om.degrees() {
            if quo.dim(dd) != om.dim(dd) {
                ok = false;
            }
        }
    }
    if !ok {
        return Err(Error::Mismatch(format!(
            "kaehler comparison dims differ: relative {left_dims:?} vs presentation {right_dims:?}"
        )));
    }
    Ok(KaehlerWitness {
        left_dims,
        right_dims,
        iso: ok,
    })
}

/// Dimensions of Der(A, N) against Hom(Ω_A, N), the universal property.
pub fn kaehler_universal_dims(
    a: &PAlgebra,
    n: &AModule,
) -> Result<(usize, usize, Vec<AlgMapBasis>)> {
    let omega = kaehler_algebra(a)?;
    let a_small = omega.module.algebra();
    let cap = a_small.operad().max_arity();
    let n_small = restrict_amodule(n, cap)?;
    let ders = crate::algebra::algebra_derivations(a_small, &n_small)?;
    let homs = crate::algebra::hom_amodule(&omega.module, &n_small)?;
    Ok((ders.len(), homs.len(), ders))
}

/// Restrict a module to a lower operad ceiling alongside its algebra.
pub fn restrict_amodule(n: &AModule, cap: usize) -> Result<AModule> {
    let a_small = restrict_algebra(n.algebra(), cap)?;
    let actions = n
        .action_entries()
        .filter(|((seq, _), _)| seq.arity() <= cap)
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    Ok(AModule::from_parts(a_small, n.values().clone(), actions))
}

/// The zero module over an algebra.
pub fn zero_module(a: &PAlgebra) -> AModule {
    AModule::from_parts(a.clone(), BTreeMap::new(), BTreeMap::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{self_module, trivial_algebra, truncated_polynomial};
    use crate::operad::{preset, Preset};

    fn q() -> FieldSpec {
        FieldSpec::Rationals
    }

    #[test]
    fn kaehler_of_truncated_polynomials() {
        // hand oracle for k[x]/(x³): basis dx, x·dx; x²·dx dies because
        // 0 = d(x·x²) = 3x²·dx
        let com = preset(Preset::Com, q(), 4).unwrap();
        let a = truncated_polynomial(&com, 2).unwrap();
        let om = kaehler_algebra(&a).unwrap();
        assert_eq!(om.module.value(0).dim(0), 2);
        assert!(crate::algebra::check_amodule(&om.module).ok());
    }

    #[test]
    fn kaehler_of_trivial_algebra_vanishes() {
        let com = preset(Preset::Com, q(), 3).unwrap();
        let a = trivial_algebra(&com).unwrap();
        let om = kaehler_algebra(&a).unwrap();
        assert_eq!(om.module.total_dim(), 0);
    }

    #[test]
    fn kaehler_universal_property() {
        let com = preset(Preset::Com, q(), 4).unwrap();
        for a in [
            trivial_algebra(&com).unwrap(),
            truncated_polynomial(&com, 2).unwrap(),
            truncated_polynomial(&com, 3).unwrap(),
        ] {
            let n = self_module(&a);
            let (ders, homs, _) = kaehler_universal_dims(&a, &n).unwrap();
            assert_eq!(ders, homs);
        }
    }

    #[test]
    fn comparison_for_trivial_algebra() {
        let com = preset(Preset::Com, q(), 3).unwrap();
        let a = trivial_algebra(&com).unwrap();
        let w = kaehler_comparison(&com, &a).unwrap();
        assert!(w.iso);
        assert!(w.right_dims.is_empty());
    }

    #[test]
    fn comparison_for_truncated_polynomials() {
        let com = preset(Preset::Com, q(), 4).unwrap();
        let a = truncated_polynomial(&com, 2).unwrap();
        let w = kaehler_comparison(&com, &a).unwrap();
        assert!(w.iso);
        let total: usize = w.right_dims.values().sum();
        assert_eq!(total, 2);
    }

    #[test]
    fn comparison_for_truncated_free_algebra() {
        // the arity-capped free algebra on one generator
        let com = preset(Preset::Com, q(), 4).unwrap();
        let a = truncated_polynomial(&com, 3).unwrap();
        let w = kaehler_comparison(&com, &a).unwrap();
        assert!(w.iso);
    }
}
