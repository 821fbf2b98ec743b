//! The composite product ∘ and the infinitesimal composite product ∘₍₁₎.
//!
//! Levels of M∘N decompose into summands indexed by shapes: a partition of
//! the target input positions into blocks (possibly empty, labelled by an
//! output color), one N-factor per block and one M-factor on the outputs.
//! The symmetric-group gluing leaves a canonical representative per orbit:
//! nonempty blocks ordered by least position, empty blocks by color. Only
//! equal empty blocks have stabilizer; their coinvariants are realized as
//! the image of the averaging idempotent, which needs characteristic zero
//! or p > ceiling.
//!
//! M∘₍₁₎N substitutes exactly one N-operation: shapes are a subset S of
//! positions (the N-block) plus its output color; the N-slot of the outer
//! sequence sits at min(S), or last when S is empty.

use std::collections::BTreeMap;

use crate::chain::{tensor_maps, ChainComplex, ChainMap, MapBuilder, TensorSpace};
use crate::collection::{CSeq, Collection, Color};
use crate::error::{Error, Result};
use crate::field::{FieldSpec, Scalar};
use crate::linalg::{vec_add, vec_scale, SparseMat, SparseVec, Solver};
use crate::perm::Perm;

/// One direct summand of a composite level: a tensor space together with
/// the (possibly proper) subspace of stabilizer-coinvariants.
#[derive(Debug, Clone)]
pub struct Summand {
    pub tensor: TensorSpace,
    pub complex: ChainComplex,
    /// tensor coords -> summand coords
    proj: BTreeMap<i64, SparseMat>,
    /// summand coords -> tensor coords
    inc: BTreeMap<i64, SparseMat>,
}

impl Summand {
    /// Trivial stabilizer: the summand is the whole tensor space.
    pub fn full(tensor: TensorSpace) -> Summand {
        let complex = tensor.complex.clone();
        let field = complex.field();
        let mut proj = BTreeMap::new();
        let mut inc = BTreeMap::new();
        for n in complex.degrees() {
            proj.insert(n, SparseMat::identity(complex.dim(n), field));
            inc.insert(n, SparseMat::identity(complex.dim(n), field));
        }
        Summand {
            tensor,
            complex,
            proj,
            inc,
        }
    }

    /// Image of an idempotent chain endomorphism of the tensor space.
    pub fn symmetrized(tensor: TensorSpace, idem: &BTreeMap<i64, SparseMat>) -> Result<Summand> {
        let field = tensor.complex.field();
        let mut basis = BTreeMap::new();
        let mut proj = BTreeMap::new();
        let mut inc = BTreeMap::new();
        let mut image: BTreeMap<i64, Vec<SparseVec>> = BTreeMap::new();
        for n in tensor.complex.degrees() {
            let e = idem
                .get(&n)
                .cloned()
                .unwrap_or_else(|| SparseMat::identity(tensor.complex.dim(n), field));
            let img = e.image_basis();
            if img.is_empty() {
                continue;
            }
            let dim = tensor.complex.dim(n);
            let inc_n = SparseMat::from_triplets(
                dim,
                img.len(),
                field,
                img.iter()
                    .enumerate()
                    .flat_map(|(j, v)| v.iter().map(move |(i, c)| (*i, j, c.clone()))),
            );
            // proj with inc ∘ proj = idem: solve columnwise
            let solver = Solver::new(&inc_n);
            let mut proj_n = SparseMat::zero(img.len(), dim, field);
            for col in 0..dim {
                let ev = e.transpose().row(col).clone();
                let x = solver
                    .solve(&ev)
                    .ok_or_else(|| Error::Config("idempotent image solve failed".into()))?;
                for (i, c) in x {
                    proj_n.add_entry(i, col, c);
                }
            }
            let labels = (0..img.len())
                .map(|i| crate::label::Label::tag("sym", crate::label::Label::Int(i as i64)))
                .collect();
            basis.insert(n, labels);
            image.insert(n, img);
            proj.insert(n, proj_n);
            inc.insert(n, inc_n);
        }
        // induced differential: proj ∘ d ∘ inc; e must commute with d
        let mut diff = BTreeMap::new();
        for (&n, _) in &basis {
            if !basis.contains_key(&(n - 1)) {
                continue;
            }
            let d = proj[&(n - 1)]
                .mul(&tensor.complex.diff_at(n))
                .mul(&inc[&n]);
            if !d.is_zero() {
                diff.insert(n, d);
            }
        }
        let complex = ChainComplex::new(field, basis, diff)?;
        Ok(Summand {
            tensor,
            complex,
            proj,
            inc,
        })
    }

    pub fn project(&self, n: i64, tensor_vec: &SparseVec) -> SparseVec {
        match self.proj.get(&n) {
            Some(p) => p.apply(tensor_vec),
            None => Vec::new(),
        }
    }

    pub fn include(&self, n: i64, summand_vec: &SparseVec) -> SparseVec {
        match self.inc.get(&n) {
            Some(p) => p.apply(summand_vec),
            None => Vec::new(),
        }
    }
}

/// A composite level: the direct sum of its summands.
#[derive(Debug, Clone)]
pub struct BuiltLevel {
    pub complex: ChainComplex,
    pub summands: Vec<Summand>,
}

impl BuiltLevel {
    pub fn assemble(summands: Vec<Summand>, field: FieldSpec) -> BuiltLevel {
        let parts: Vec<&ChainComplex> = summands.iter().map(|s| &s.complex).collect();
        let complex = if parts.is_empty() {
            ChainComplex::zero(field)
        } else {
            ChainComplex::direct_sum(&parts, field)
        };
        BuiltLevel { complex, summands }
    }

    pub fn offset(&self, k: usize, n: i64) -> usize {
        self.summands[..k].iter().map(|s| s.complex.dim(n)).sum()
    }

    /// Express a tensor-coordinate vector of summand k in level coords.
    pub fn express(&self, k: usize, n: i64, tensor_vec: &SparseVec) -> SparseVec {
        let coords = self.summands[k].project(n, tensor_vec);
        let off = self.offset(k, n);
        coords.into_iter().map(|(i, c)| (i + off, c)).collect()
    }

    /// Restrict a level vector to summand k, in tensor coordinates.
    pub fn restrict(&self, k: usize, n: i64, level_vec: &SparseVec) -> SparseVec {
        let off = self.offset(k, n);
        let dim = self.summands[k].complex.dim(n);
        let local: SparseVec = level_vec
            .iter()
            .filter(|(i, _)| *i >= off && *i < off + dim)
            .map(|(i, c)| (i - off, c.clone()))
            .collect();
        self.summands[k].include(n, &local)
    }
}

/// Shape of a summand of (M∘N)(seq): blocks in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ComposeShape {
    /// (positions sorted increasing, block output color); nonempty blocks
    /// first (by least position), then empty blocks (by color)
    pub blocks: Vec<(Vec<usize>, Color)>,
}

impl ComposeShape {
    fn sort_key(block: &(Vec<usize>, Color)) -> (usize, usize, usize) {
        if block.0.is_empty() {
            (1, block.1, 0)
        } else {
            (0, block.0[0], block.1)
        }
    }

    /// Canonical order plus the permutation sending the given block index
    /// to its canonical slot.
    pub fn canonicalize(blocks: Vec<(Vec<usize>, Color)>) -> (ComposeShape, Perm) {
        let mut order: Vec<usize> = (0..blocks.len()).collect();
        order.sort_by(|&a, &b| {
            Self::sort_key(&blocks[a])
                .cmp(&Self::sort_key(&blocks[b]))
                .then(a.cmp(&b))
        });
        let mut map = vec![0; blocks.len()];
        for (slot, &src) in order.iter().enumerate() {
            map[src] = slot;
        }
        let sorted = order.into_iter().map(|i| blocks[i].clone()).collect();
        (ComposeShape { blocks: sorted }, Perm::from_images(map))
    }

    pub fn outer_seq(&self, target: &CSeq) -> CSeq {
        CSeq::new(
            self.blocks.iter().map(|(_, c)| *c).collect(),
            target.output,
        )
    }

    pub fn inner_seq(&self, target: &CSeq, b: usize) -> CSeq {
        let (pos, color) = &self.blocks[b];
        CSeq::new(pos.iter().map(|&p| target.inputs[p]).collect(), *color)
    }

    /// Index of the block containing a position.
    pub fn block_of(&self, p: usize) -> usize {
        self.blocks
            .iter()
            .position(|(s, _)| s.contains(&p))
            .expect("position covered by a block")
    }

    /// Relabel positions by the adjacent transposition s_j.
    pub fn relabel(&self, j: usize) -> Vec<(Vec<usize>, Color)> {
        self.blocks
            .iter()
            .map(|(s, c)| {
                let mut s2: Vec<usize> = s
                    .iter()
                    .map(|&p| {
                        if p == j {
                            j + 1
                        } else if p == j + 1 {
                            j
                        } else {
                            p
                        }
                    })
                    .collect();
                s2.sort_unstable();
                (s2, *c)
            })
            .collect()
    }
}

/// The composite product with its per-level shape decomposition.
#[derive(Debug, Clone)]
pub struct Composite {
    pub coll: Collection,
    pub levels: BTreeMap<CSeq, (Vec<ComposeShape>, BuiltLevel)>,
}

impl Composite {
    pub fn shape_index(&self, seq: &CSeq, shape: &ComposeShape) -> Option<usize> {
        let (shapes, _) = self.levels.get(seq)?;
        shapes.iter().position(|s| s == shape)
    }

    /// Express a pure tensor (given per-factor degree/index pairs) of a
    /// shape summand in level coordinates.
    pub fn express_basis(
        &self,
        seq: &CSeq,
        shape_idx: usize,
        degs: &[i64],
        idxs: &[usize],
        coeff: Scalar,
    ) -> (i64, SparseVec) {
        let (_, built) = &self.levels[seq];
        let (n, pos) = built.summands[shape_idx].tensor.position(degs, idxs);
        let v = built.express(shape_idx, n, &vec![(pos, coeff)]);
        (n, v)
    }

    /// Express a tensor of per-factor vectors (each a (degree, coords)
    /// pair) in level coordinates.
    pub fn express_tensor(
        &self,
        seq: &CSeq,
        shape_idx: usize,
        factors: &[(i64, SparseVec)],
    ) -> (i64, SparseVec) {
        let (_, built) = &self.levels[seq];
        let ts = &built.summands[shape_idx].tensor;
        let total: i64 = factors.iter().map(|(d, _)| d).sum();
        let mut acc: SparseVec = Vec::new();
        let mut stack: Vec<(Vec<usize>, Scalar)> = vec![(Vec::new(), ts.complex.field().one())];
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
        for (idxs, c) in stack {
            let (n, pos) = ts.position(&degs, &idxs);
            debug_assert_eq!(n, total);
            acc = vec_add(&acc, &vec![(pos, c)]);
        }
        let v = built.express(shape_idx, total, &acc);
        (total, v)
    }
}

/// Enumerate partitions of {0..k-1} into at most `max_blocks` nonempty
/// blocks (restricted growth strings), each block sorted.
fn set_partitions(k: usize, max_blocks: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    if k == 0 {
        out.push(Vec::new());
        return out;
    }
    let mut rgs = vec![0usize; k];
    loop {
        let nblocks = rgs.iter().max().map_or(0, |m| m + 1);
        if nblocks <= max_blocks {
            let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); nblocks];
            for (p, &b) in rgs.iter().enumerate() {
                blocks[b].push(p);
            }
            out.push(blocks);
        }
        // next restricted growth string
        let mut i = k - 1;
        loop {
            if i == 0 {
                return out;
            }
            let prefix_max = rgs[..i].iter().max().copied().unwrap_or(0);
            if rgs[i] <= prefix_max {
                rgs[i] += 1;
                for r in rgs.iter_mut().skip(i + 1) {
                    *r = 0;
                }
                break;
            }
            i -= 1;
        }
    }
}

/// Multisets of a given size from the colors that admit nullary N-levels.
fn color_multisets(colors: &[Color], size: usize) -> Vec<Vec<Color>> {
    let mut out = Vec::new();
    fn rec(colors: &[Color], size: usize, start: usize, cur: &mut Vec<Color>, out: &mut Vec<Vec<Color>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..colors.len() {
            cur.push(colors[i]);
            rec(colors, size, i, cur, out);
            cur.pop();
        }
    }
    rec(colors, size, 0, &mut Vec::new(), &mut out);
    out
}

/// Map acting on a shape's tensor space: the inner action on one factor,
/// then the block permutation (M-action on the outer factor plus Koszul
/// reordering of the block factors).
fn shape_transport(
    m: &Collection,
    outer_src: &CSeq,
    block_complexes: &[ChainComplex],
    inner_step: Option<(usize, ChainMap)>,
    tau: &Perm,
) -> Result<(TensorSpace, TensorSpace, BTreeMap<i64, SparseMat>)> {
    // step 1: inner action on the affected block factor
    let m_id = ChainMap::identity(&m.level(outer_src));
    let mut maps: Vec<ChainMap> = vec![m_id];
    for (b, c) in block_complexes.iter().enumerate() {
        match &inner_step {
            Some((bb, act)) if *bb == b => maps.push(act.clone()),
            _ => maps.push(ChainMap::identity(c)),
        }
    }
    let refs: Vec<&ChainMap> = maps.iter().collect();
    let (src_ts, mid_ts, inner_map) = tensor_maps(&refs)?;
    // step 2: M-action by tau on the outer factor
    let act = m.action(outer_src, tau);
    let mut maps2: Vec<ChainMap> = vec![act];
    for mref in maps.iter().skip(1) {
        maps2.push(ChainMap::identity(mref.target()));
    }
    let refs2: Vec<&ChainMap> = maps2.iter().collect();
    let (_, mid2_ts, outer_map) = tensor_maps(&refs2)?;
    // step 3: permute block factors by tau (factor 0 fixed)
    let mut factor_perm = vec![0usize; block_complexes.len() + 1];
    for b in 0..block_complexes.len() {
        factor_perm[b + 1] = tau.apply(b) + 1;
    }
    let tgt_factors: Vec<ChainComplex> = {
        let mut v = vec![maps2[0].target().clone()];
        let inv = tau.inverse();
        for t in 0..block_complexes.len() {
            v.push(maps[inv.apply(t) + 1].target().clone());
        }
        v
    };
    let tgt_refs: Vec<&ChainComplex> = tgt_factors.iter().collect();
    let tgt_ts = TensorSpace::new(&tgt_refs, m.field());
    let perm_map = crate::chain::koszul_permute(&mid2_ts, &tgt_ts, &factor_perm)?;
    let mut comps = BTreeMap::new();
    for n in src_ts.complex.degrees() {
        let mat = perm_map
            .component(n)
            .mul(&outer_map.component(n))
            .mul(&inner_map.component(n));
        if !mat.is_zero() {
            comps.insert(n, mat);
        }
    }
    let _ = mid_ts;
    Ok((src_ts, tgt_ts, comps))
}

/// The composite product M∘N at the shared arity ceiling. Terms whose
/// outer arity would exceed the ceiling are dropped and flagged.
pub fn compose(m: &Collection, n: &Collection) -> Result<Composite> {
    if m.colors() != n.colors() {
        return Err(Error::ColorMismatch);
    }
    if m.field() != n.field() {
        return Err(Error::FieldMismatch(m.field(), n.field()));
    }
    let field = m.field();
    let colors = m.colors().clone();
    let ceiling = m.max_arity().min(n.max_arity());
    if let FieldSpec::Prime(p) = field {
        if (p as usize) <= ceiling {
            return Err(Error::Config(format!(
                "coinvariants need characteristic 0 or p > ceiling, got p = {p}"
            )));
        }
    }

    // colors with nullary N-levels
    let nullary: Vec<Color> = colors
        .iter()
        .filter(|&c| n.level_dim(&CSeq::new(vec![], c)) > 0)
        .collect();

    let mut levels: BTreeMap<CSeq, (Vec<ComposeShape>, BuiltLevel)> = BTreeMap::new();
    for target in Collection::all_seqs(&colors, ceiling) {
        let k = target.arity();
        let mut shapes: Vec<ComposeShape> = Vec::new();
        for partition in set_partitions(k, ceiling) {
            let nb = partition.len();
            // assign an output color to every nonempty block
            let mut assignments: Vec<Vec<Color>> = vec![Vec::new()];
            for block in &partition {
                let inner_inputs: Vec<Color> =
                    block.iter().map(|&p| target.inputs[p]).collect();
                let mut next = Vec::new();
                for asg in &assignments {
                    for c in colors.iter() {
                        if n.level_dim(&CSeq::new(inner_inputs.clone(), c)) > 0 {
                            let mut a = asg.clone();
                            a.push(c);
                            next.push(a);
                        }
                    }
                }
                assignments = next;
            }
            for asg in assignments {
                for e in 0..=(ceiling - nb) {
                    if nb + e == 0 {
                        // outer arity 0: allowed only if M has a nullary level
                        if m.level_dim(&CSeq::new(vec![], target.output)) == 0 {
                            continue;
                        }
                    }
                    for empties in color_multisets(&nullary, e) {
                        let mut blocks: Vec<(Vec<usize>, Color)> = partition
                            .iter()
                            .cloned()
                            .zip(asg.iter().copied())
                            .collect();
                        blocks.extend(empties.iter().map(|&c| (Vec::new(), c)));
                        let (shape, _) = ComposeShape::canonicalize(blocks);
                        let outer = shape.outer_seq(&target);
                        if m.level_dim(&outer) == 0 {
                            continue;
                        }
                        if !shapes.contains(&shape) {
                            shapes.push(shape);
                        }
                    }
                }
            }
        }
        shapes.sort();
        if shapes.is_empty() {
            continue;
        }
        let mut summands = Vec::new();
        for shape in &shapes {
            let outer = shape.outer_seq(&target);
            let mut factor_cxs: Vec<ChainComplex> = vec![m.level(&outer)];
            for b in 0..shape.blocks.len() {
                factor_cxs.push(n.level(&shape.inner_seq(&target, b)));
            }
            let refs: Vec<&ChainComplex> = factor_cxs.iter().collect();
            let ts = TensorSpace::new(&refs, field);
            // stabilizer: permutations of equal empty blocks
            let mut runs: Vec<(usize, usize)> = Vec::new(); // (start, len)
            {
                let mut b = 0;
                while b < shape.blocks.len() {
                    if shape.blocks[b].0.is_empty() {
                        let mut e = b + 1;
                        while e < shape.blocks.len() && shape.blocks[e].1 == shape.blocks[b].1 {
                            e += 1;
                        }
                        if e - b >= 2 {
                            runs.push((b, e - b));
                        }
                        b = e;
                    } else {
                        b += 1;
                    }
                }
            }
            if runs.is_empty() {
                summands.push(Summand::full(ts));
                continue;
            }
            // averaging idempotent over the product of run symmetric groups
            let nb = shape.blocks.len();
            let mut stab: Vec<Perm> = vec![Perm::identity(nb)];
            for (start, len) in &runs {
                let mut next = Vec::new();
                for tau in Perm::all(*len) {
                    let mut map: Vec<usize> = (0..nb).collect();
                    for i in 0..*len {
                        map[start + i] = start + tau.apply(i);
                    }
                    let embedded = Perm::from_images(map);
                    for s in &stab {
                        next.push(embedded.compose(s));
                    }
                }
                stab = next;
            }
            let inv_size = field.inv_factorial(1)?; // 1; placeholder to pin field use
            let _ = inv_size;
            let scale = field.from_i64(stab.len() as i64).inv()?;
            let mut idem: BTreeMap<i64, SparseMat> = BTreeMap::new();
            for tau in &stab {
                let (_, _, comps) = shape_transport(m, &outer, &factor_cxs[1..], None, tau)?;
                for nn in ts.complex.degrees() {
                    let mat = comps
                        .get(&nn)
                        .cloned()
                        .unwrap_or_else(|| SparseMat::zero(ts.complex.dim(nn), ts.complex.dim(nn), field));
                    let e = idem
                        .entry(nn)
                        .or_insert_with(|| SparseMat::zero(ts.complex.dim(nn), ts.complex.dim(nn), field));
                    *e = e.add(&mat);
                }
            }
            for e in idem.values_mut() {
                *e = e.scale(&scale);
            }
            summands.push(Summand::symmetrized(ts, &idem)?);
        }
        let built = BuiltLevel::assemble(summands, field);
        levels.insert(target.clone(), (shapes, built));
    }

    // dropped terms: some nonzero M-level whose slots can all be filled
    // with a total arity beyond the ceiling
    let mut dropped = false;
    'outer: for seq in m.seqs() {
        let mut max_total = 0usize;
        for &c in &seq.inputs {
            let best = n
                .seqs()
                .filter(|s| s.output == c)
                .map(|s| s.arity())
                .max();
            match best {
                Some(b) => max_total += b,
                None => continue 'outer,
            }
        }
        if max_total > ceiling {
            dropped = true;
            break;
        }
    }

    let complexes: BTreeMap<CSeq, ChainComplex> = levels
        .iter()
        .map(|(s, (_, b))| (s.clone(), b.complex.clone()))
        .collect();

    // symmetric actions on the composite
    let mut actions = BTreeMap::new();
    for (target, (shapes, built)) in &levels {
        let k = target.arity();
        for j in 0..k.saturating_sub(1) {
            let tseq = target.swap(j);
            let tgt_built = levels
                .get(&tseq)
                .map(|(_, b)| b.clone())
                .unwrap_or_else(|| BuiltLevel::assemble(Vec::new(), field));
            let tgt_shapes: &[ComposeShape] = levels
                .get(&tseq)
                .map(|(s, _)| s.as_slice())
                .unwrap_or(&[]);
            let mut builder = MapBuilder::new(built.complex.clone(), tgt_built.complex.clone(), 0);
            for (si, shape) in shapes.iter().enumerate() {
                let outer = shape.outer_seq(target);
                let relabeled = shape.relabel(j);
                let (tshape, tau) = ComposeShape::canonicalize(relabeled);
                let ti = tgt_shapes
                    .iter()
                    .position(|s| *s == tshape)
                    .expect("transported shape exists");
                // inner action when one block holds both j and j+1
                let inner_step = shape
                    .blocks
                    .iter()
                    .position(|(s, _)| s.contains(&j) && s.contains(&(j + 1)))
                    .map(|b| {
                        let iseq = shape.inner_seq(target, b);
                        let r = shape.blocks[b].0.iter().position(|&p| p == j).unwrap();
                        (b, n.action_gen(&iseq, r))
                    });
                let factor_cxs: Vec<ChainComplex> = (0..shape.blocks.len())
                    .map(|b| n.level(&shape.inner_seq(target, b)))
                    .collect();
                let (src_ts, _, comps) =
                    shape_transport(m, &outer, &factor_cxs, inner_step, &tau)?;
                for nn in src_ts.complex.degrees() {
                    let Some(mat) = comps.get(&nn) else { continue };
                    // per-column: src summand coords -> level coords
                    let src_off = built.offset(si, nn);
                    let inc = built.summands[si].inc.get(&nn).cloned();
                    let Some(inc) = inc else { continue };
                    for col in 0..built.summands[si].complex.dim(nn) {
                        let tensor_col = inc.transpose().row(col).clone();
                        let image = mat.apply(&tensor_col);
                        let out = tgt_built.express(ti, nn, &image);
                        for (r, v) in out {
                            builder.add(nn, src_off + col, r, v.clone());
                        }
                    }
                }
            }
            actions.insert((target.clone(), j), builder.build()?);
        }
    }

    let truncated = m.truncated() || n.truncated() || dropped;
    let mut coll = Collection::new(colors, field, ceiling, complexes, actions, truncated)?;
    // a composite of fully exact inputs has complete stored levels: the
    // drops above the ceiling never feed levels at or below it
    let exact = if m.exact_max() >= m.max_arity() && n.exact_max() >= n.max_arity() {
        ceiling
    } else {
        0
    };
    coll.set_exact_max(exact);
    Ok(Composite { coll, levels })
}

/// Shape of a summand of (M∘₍₁₎N)(seq): the positions fed to the single
/// N-factor and its output color.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct InfShape {
    pub positions: Vec<usize>,
    pub inner_output: Color,
}

impl InfShape {
    /// Outer sequence: the N-slot sits at min(positions), or last when
    /// the position set is empty.
    pub fn outer_seq(&self, target: &CSeq) -> CSeq {
        let mut inputs = Vec::with_capacity(target.arity() - self.positions.len() + 1);
        if self.positions.is_empty() {
            inputs.extend(target.inputs.iter().copied());
            inputs.push(self.inner_output);
        } else {
            for (p, &c) in target.inputs.iter().enumerate() {
                if p == self.positions[0] {
                    inputs.push(self.inner_output);
                }
                if !self.positions.contains(&p) {
                    inputs.push(c);
                }
            }
        }
        CSeq::new(inputs, target.output)
    }

    pub fn inner_seq(&self, target: &CSeq) -> CSeq {
        CSeq::new(
            self.positions.iter().map(|&p| target.inputs[p]).collect(),
            self.inner_output,
        )
    }

    /// The outer slot index of the N-factor.
    pub fn inner_slot(&self, target: &CSeq) -> usize {
        match self.positions.first() {
            Some(&p0) => (0..p0).filter(|p| !self.positions.contains(p)).count(),
            None => target.arity(),
        }
    }

    /// The outer slot of a position not fed to the N-factor.
    pub fn outer_slot(&self, p: usize) -> usize {
        let before = (0..p).filter(|q| !self.positions.contains(q)).count();
        let inner_before = match self.positions.first() {
            Some(&p0) => p0 < p,
            None => false,
        };
        before + usize::from(inner_before)
    }
}

/// An infinitesimal composite with its shape decomposition.
#[derive(Debug, Clone)]
pub struct InfComposite {
    pub coll: Collection,
    pub levels: BTreeMap<CSeq, (Vec<InfShape>, BuiltLevel)>,
}

impl InfComposite {
    pub fn shape_index(&self, seq: &CSeq, shape: &InfShape) -> Option<usize> {
        let (shapes, _) = self.levels.get(seq)?;
        shapes.iter().position(|s| s == shape)
    }

    pub fn express_basis(
        &self,
        seq: &CSeq,
        shape_idx: usize,
        degs: &[i64],
        idxs: &[usize],
        coeff: Scalar,
    ) -> (i64, SparseVec) {
        let (_, built) = &self.levels[seq];
        let (n, pos) = built.summands[shape_idx].tensor.position(degs, idxs);
        (n, built.express(shape_idx, n, &vec![(pos, coeff)]))
    }
}

/// The infinitesimal composite product M∘₍₁₎N: substitute exactly one
/// N-operation into one slot, identities elsewhere.
pub fn inf_compose(m: &Collection, n: &Collection) -> Result<InfComposite> {
    if m.colors() != n.colors() {
        return Err(Error::ColorMismatch);
    }
    if m.field() != n.field() {
        return Err(Error::FieldMismatch(m.field(), n.field()));
    }
    let field = m.field();
    let colors = m.colors().clone();
    let ceiling = m.max_arity().min(n.max_arity());

    let mut levels: BTreeMap<CSeq, (Vec<InfShape>, BuiltLevel)> = BTreeMap::new();
    for target in Collection::all_seqs(&colors, ceiling) {
        let k = target.arity();
        let mut shapes = Vec::new();
        // iterate subsets of positions
        for mask in 0u64..(1 << k) {
            let positions: Vec<usize> = (0..k).filter(|p| mask & (1 << p) != 0).collect();
            if k - positions.len() + 1 > ceiling {
                continue; // dropped, flagged below
            }
            for d in colors.iter() {
                let shape = InfShape {
                    positions: positions.clone(),
                    inner_output: d,
                };
                if n.level_dim(&shape.inner_seq(&target)) == 0 {
                    continue;
                }
                if m.level_dim(&shape.outer_seq(&target)) == 0 {
                    continue;
                }
                shapes.push(shape);
            }
        }
        shapes.sort();
        if shapes.is_empty() {
            continue;
        }
        let summands: Vec<Summand> = shapes
            .iter()
            .map(|shape| {
                let outer = m.level(&shape.outer_seq(&target));
                let inner = n.level(&shape.inner_seq(&target));
                Summand::full(TensorSpace::new(&[&outer, &inner], field))
            })
            .collect();
        let built = BuiltLevel::assemble(summands, field);
        levels.insert(target, (shapes, built));
    }

    // dropped terms: outer arity above the ceiling
    let mut dropped = false;
    for mseq in m.seqs() {
        for nseq in n.seqs() {
            if mseq.inputs.contains(&nseq.output)
                && mseq.arity() + nseq.arity() > ceiling + 1
            {
                dropped = true;
            }
        }
    }
    for nseq in n.seqs() {
        // substituting into an unseen outer level of arity ceiling+1
        if nseq.arity() == 0 {
            dropped = true;
        }
    }

    let complexes: BTreeMap<CSeq, ChainComplex> = levels
        .iter()
        .map(|(s, (_, b))| (s.clone(), b.complex.clone()))
        .collect();

    let mut actions = BTreeMap::new();
    for (target, (shapes, built)) in &levels {
        let k = target.arity();
        for j in 0..k.saturating_sub(1) {
            let tseq = target.swap(j);
            let (tgt_shapes, tgt_built) = levels
                .get(&tseq)
                .map(|(s, b)| (s.clone(), b.clone()))
                .unwrap_or_else(|| (Vec::new(), BuiltLevel::assemble(Vec::new(), field)));
            let mut builder = MapBuilder::new(built.complex.clone(), tgt_built.complex.clone(), 0);
            for (si, shape) in shapes.iter().enumerate() {
                let in_s = |p: usize| shape.positions.contains(&p);
                let tpositions: Vec<usize> = {
                    let mut v: Vec<usize> = shape
                        .positions
                        .iter()
                        .map(|&p| {
                            if p == j {
                                j + 1
                            } else if p == j + 1 {
                                j
                            } else {
                                p
                            }
                        })
                        .collect();
                    v.sort_unstable();
                    v
                };
                let tshape = InfShape {
                    positions: tpositions,
                    inner_output: shape.inner_output,
                };
                let ti = tgt_shapes
                    .iter()
                    .position(|s| *s == tshape)
                    .expect("transported inf shape exists");
                let outer_src = shape.outer_seq(target);
                let inner_src = shape.inner_seq(target);
                // which transport applies
                let step: Option<(usize, ChainMap)> = if in_s(j) && in_s(j + 1) {
                    let r = shape.positions.iter().position(|&p| p == j).unwrap();
                    Some((1, n.action_gen(&inner_src, r)))
                } else if !in_s(j) && !in_s(j + 1) {
                    let r = shape.outer_slot(j);
                    Some((0, m.action_gen(&outer_src, r)))
                } else {
                    // membership swap: identity unless the N-slot crosses
                    let anchor_moves = (in_s(j) && shape.positions[0] == j)
                        || (in_s(j + 1) && shape.positions[0] == j + 1);
                    if anchor_moves {
                        let r = shape.inner_slot(target).min(shape.outer_slot(if in_s(j) {
                            j + 1
                        } else {
                            j
                        }));
                        Some((0, m.action_gen(&outer_src, r)))
                    } else {
                        None
                    }
                };
                let m_lvl = m.level(&outer_src);
                let n_lvl = n.level(&inner_src);
                let maps: Vec<ChainMap> = match &step {
                    Some((0, act)) => vec![act.clone(), ChainMap::identity(&n_lvl)],
                    Some((_, act)) => vec![ChainMap::identity(&m_lvl), act.clone()],
                    None => vec![ChainMap::identity(&m_lvl), ChainMap::identity(&n_lvl)],
                };
                let refs: Vec<&ChainMap> = maps.iter().collect();
                let (src_ts, _, tmap) = tensor_maps(&refs)?;
                for nn in src_ts.complex.degrees() {
                    let mat = tmap.component(nn);
                    let src_off = built.offset(si, nn);
                    let Some(inc) = built.summands[si].inc.get(&nn).cloned() else {
                        continue;
                    };
                    for col in 0..built.summands[si].complex.dim(nn) {
                        let tensor_col = inc.transpose().row(col).clone();
                        let image = mat.apply(&tensor_col);
                        let out = tgt_built.express(ti, nn, &image);
                        for (r, v) in out {
                            builder.add(nn, src_off + col, r, v.clone());
                        }
                    }
                }
            }
            actions.insert((target.clone(), j), builder.build()?);
        }
    }

    let truncated = m.truncated() || n.truncated() || dropped;
    let mut coll = Collection::new(colors, field, ceiling, complexes, actions, truncated)?;
    // the empty-position summand of level k needs an outer factor of
    // arity k+1, so nullary N-levels make the top level incomplete
    let exact = if m.exact_max() >= m.max_arity() && n.exact_max() >= n.max_arity() {
        let n_has_nullary = n.seqs().any(|s| s.arity() == 0);
        if n_has_nullary {
            ceiling.min(m.max_arity().saturating_sub(1))
        } else {
            ceiling
        }
    } else {
        0
    };
    coll.set_exact_max(exact);
    Ok(InfComposite { coll, levels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collection::ColorSet;
    use crate::label::Label;

    fn q() -> FieldSpec {
        FieldSpec::Rationals
    }

    /// Single-colored collection with k in every arity 0..=ceiling.
    pub fn com_collection(ceiling: usize) -> Collection {
        let mut levels = BTreeMap::new();
        for a in 0..=ceiling {
            levels.insert(
                CSeq::single(a),
                ChainComplex::concentrated(q(), 0, vec![Label::atom(format!("mu{a}"))]),
            );
        }
        Collection::with_trivial_actions(ColorSet::single(), q(), ceiling, levels).unwrap()
    }

    #[test]
    fn unit_laws() {
        let m = com_collection(3);
        let i = Collection::unit_i(ColorSet::single(), q(), 3);
        let left = compose(&i, &m).unwrap();
        assert!(left.coll.same_dims(&m));
        assert!(!left.coll.truncated());
        let right = compose(&m, &i).unwrap();
        assert!(right.coll.same_dims(&m));
        assert!(!right.coll.truncated());
    }

    #[test]
    fn point_composes_trivially() {
        // E∘M = E when M has no nullary part
        let e = Collection::unit_e(ColorSet::single(), q(), 3);
        let i = Collection::unit_i(ColorSet::single(), q(), 3);
        let c = compose(&e, &i).unwrap();
        assert!(c.coll.same_dims(&e));
    }

    /// Independent oracle for (Com∘Com): count decompositions and take
    /// coinvariants by explicit symmetrization over all of Σ_n.
    fn com_compose_dim_oracle(k: usize, ceiling: usize) -> usize {
        // shapes with trivial M-action: orbits of (ordered partitions of
        // {0..k-1} into n possibly-empty blocks) under Σ_n, summed n<=N
        use std::collections::BTreeSet;
        let mut total = 0usize;
        for nblocks in 0..=ceiling {
            let mut orbits: BTreeSet<Vec<Vec<usize>>> = BTreeSet::new();
            // ordered assignments of positions to blocks
            let assignments = {
                let mut acc: Vec<Vec<usize>> = vec![Vec::new()];
                for _ in 0..k {
                    let mut next = Vec::new();
                    for a in &acc {
                        for b in 0..nblocks {
                            let mut a2 = a.clone();
                            a2.push(b);
                            next.push(a2);
                        }
                    }
                    acc = next;
                }
                acc
            };
            if k > 0 && nblocks == 0 {
                continue;
            }
            for a in assignments {
                let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); nblocks];
                for (p, &b) in a.iter().enumerate() {
                    blocks[b].push(p);
                }
                blocks.sort();
                orbits.insert(blocks);
            }
            if k == 0 {
                // only empty blocks
                orbits.insert(vec![Vec::new(); nblocks]);
            }
            total += orbits.len();
        }
        total
    }

    #[test]
    fn com_compose_dims_match_symmetrization_oracle() {
        let m = com_collection(3);
        let c = compose(&m, &m).unwrap();
        for k in 0..=3usize {
            let got = c.coll.level(&CSeq::single(k)).dim(0);
            assert_eq!(got, com_compose_dim_oracle(k, 3), "level {k}");
        }
        assert!(c.coll.truncated());
    }

    #[test]
    fn inf_unit_laws_and_labelled_copies() {
        let m = com_collection(4);
        let i = Collection::unit_i(ColorSet::single(), q(), 4);
        let a = inf_compose(&i, &m).unwrap();
        assert!(a.coll.same_dims(&m));
        // M∘₍₁₎I has m labelled copies at arity m
        let b = inf_compose(&m, &i).unwrap();
        for k in 1..=4usize {
            assert_eq!(b.coll.level(&CSeq::single(k)).dim(0), k);
        }
        assert_eq!(b.coll.level(&CSeq::single(0)).dim(0), 0);
        assert!(!b.coll.truncated());
    }

    #[test]
    fn inf_com_com_dims_are_two_to_the_m() {
        // (Com∘₍₁₎Com)(m): one summand per subset of positions, matching
        // the pointed-maps count dim Map(1,m) = 2^m below the ceiling
        let m = com_collection(5);
        let c = inf_compose(&m, &m).unwrap();
        for k in 0..=4usize {
            assert_eq!(c.coll.level(&CSeq::single(k)).dim(0), 1 << k, "level {k}");
        }
        // top level misses the empty-subset summand (outer arity 6)
        assert_eq!(c.coll.level(&CSeq::single(5)).dim(0), (1 << 5) - 1);
        assert!(c.coll.truncated());
    }

    #[test]
    fn inf_distributes_over_sums() {
        let m = com_collection(3);
        let i = Collection::unit_i(ColorSet::single(), q(), 3);
        let both = Collection::direct_sum(&[&i, &i]).unwrap();
        let lhs = inf_compose(&m, &both).unwrap();
        let single = inf_compose(&m, &i).unwrap();
        let doubled = Collection::direct_sum(&[&single.coll, &single.coll]).unwrap();
        assert!(lhs.coll.same_dims(&doubled));
    }

    #[test]
    fn associativity_on_small_single_colored() {
        // (M∘N)∘Q vs M∘(N∘Q), dims per level, no truncation in range
        let mut levels = BTreeMap::new();
        levels.insert(
            CSeq::single(1),
            ChainComplex::concentrated(q(), 0, vec![Label::atom("a")]),
        );
        levels.insert(
            CSeq::single(2),
            ChainComplex::concentrated(q(), 0, vec![Label::atom("b")]),
        );
        let m = Collection::with_trivial_actions(ColorSet::single(), q(), 4, levels).unwrap();
        let left = compose(&compose(&m, &m).unwrap().coll, &m).unwrap().coll;
        let right = compose(&m, &compose(&m, &m).unwrap().coll).unwrap().coll;
        assert!(left.same_dims(&right));
    }
}
