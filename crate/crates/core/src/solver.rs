//! Exact finite actions near an approximating almost-action.
//!
//! Everything happens on a depth-`d'` cylinder partition, `d' = max(d, ⌈log2 1/ε⌉)`,
//! which every prefix substitution of depth `d <= d'` permutes. If `α(γ)` moves no point
//! out of the cell `β(γ)` predicts, a solution can be chosen cell by cell: leaf groups
//! act on each orbit of cells by an induced action, amalgams freeze the shared
//! subgroup, and stable letters are intertwiners between the two stabilizer actions.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{ActionError, CylinderAction, PermTable};
use crate::almost::{perturb_from_action, AlmostAction, AlmostError, Level, ScheduleEntry};
use crate::cantor::{CantorPoint, Cylinder, FiniteSample, MetricPoint, ModelError};
use crate::group::{FiniteGroupTable, Group, GroupError, Symbol, Word};
use crate::intertwine::{find_intertwiner, intertwines};
use crate::perm::Perm;
use crate::scalar::Dyadic;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error(transparent)]
    Almost(#[from] AlmostError),
    #[error("epsilon {eps} needs partition depth {needed}, above the limit {limit}")]
    EpsilonTooSmall { eps: String, needed: u32, limit: u32 },
    #[error("cell {cell} holds {left} points but its image {image} under {element} holds {right}")]
    CountMismatch {
        cell: String,
        image: String,
        element: String,
        left: usize,
        right: usize,
    },
    #[error("{element} moves {point} outside the predicted cell")]
    GapViolation { element: String, point: String },
    #[error("frozen permutation of {element} does not follow the cells (at {cell})")]
    FrozenInconsistent { element: String, cell: String },
    #[error("no labelling of cell {cell}: {element} acts incompatibly on its sample")]
    LabellingObstruction { cell: String, element: String },
    #[error("no bijection intertwines the stabilizer actions for {letter} at cell {cell}")]
    StabilizerObstruction { cell: String, letter: String },
    #[error("constructed action violates relations: {0}")]
    RelationsViolated(String),
    #[error("certificate failed: defect {defect} is not below {eps}")]
    CertificateFailure { defect: String, eps: String },
}

impl SolveError {
    /// Obstructions are retried on a finer partition.
    pub fn is_obstruction(&self) -> bool {
        matches!(
            self,
            SolveError::LabellingObstruction { .. } | SolveError::StabilizerObstruction { .. }
        )
    }

    /// Machine-readable kind used in reports.
    pub fn kind(&self) -> &'static str {
        match self {
            SolveError::CountMismatch { .. } => "count_mismatch",
            SolveError::GapViolation { .. } => "gap_violation",
            SolveError::LabellingObstruction { .. } => "labelling_obstruction",
            SolveError::StabilizerObstruction { .. } => "stabilizer_obstruction",
            SolveError::CertificateFailure { .. } => "certificate_failure",
            SolveError::EpsilonTooSmall { .. } => "epsilon_too_small",
            SolveError::FrozenInconsistent { .. } => "frozen_inconsistent",
            SolveError::RelationsViolated(_) => "relations_violated",
            _ => "error",
        }
    }
}

/// Partition depth for a tolerance: `max(d, ⌈log2 1/ε⌉)`.
pub fn partition_depth(action_depth: u32, eps: Dyadic) -> Option<u32> {
    let k = eps.exponent()?;
    Some(action_depth.max(k))
}

/// The depth partition used by the solver; preserved by every generator of `action`.
pub fn invariant_partition(
    action: &CylinderAction,
    eps: Dyadic,
) -> Result<crate::cantor::ClopenPartition, SolveError> {
    let limit = action.total_depth().min(24);
    let d = partition_depth(action.depth(), eps).unwrap_or(u32::MAX);
    if d > limit {
        return Err(SolveError::EpsilonTooSmall {
            eps: eps.to_string(),
            needed: d,
            limit,
        });
    }
    Ok(crate::cantor::depth_partition(d, action.total_depth())?)
}

/// Exact permutations of a subgroup that a leaf solution must reproduce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frozen {
    /// Elements of the leaf forming the subgroup.
    pub elements: Vec<usize>,
    /// Their permutations of the sample.
    pub perms: Vec<Perm>,
}

/// Image of a depth-`dp` cell under a depth-`d` prefix permutation.
fn cell_image(p: &Perm, d: u32, dp: u32, cell: u64) -> u64 {
    let shift = dp - d;
    let top = (cell >> shift) as usize;
    ((p.apply(top) as u64) << shift) | (cell & ((1u64 << shift) - 1))
}

struct Cells {
    dp: u32,
    of: Vec<u64>,
    members: BTreeMap<u64, Vec<usize>>,
}

impl Cells {
    fn new(sample: &FiniteSample<CantorPoint>, dp: u32) -> Self {
        let of: Vec<u64> = sample.points().iter().map(|x| x.prefix(dp)).collect();
        let mut members: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, &c) in of.iter().enumerate() {
            members.entry(c).or_default().push(i);
        }
        Cells { dp, of, members }
    }

    fn count(&self, c: u64) -> usize {
        self.members.get(&c).map_or(0, Vec::len)
    }

    fn name(&self, c: u64) -> String {
        Cylinder::new(c, self.dp).to_string()
    }

    fn local(&self, c: u64, i: usize) -> usize {
        self.members[&c].binary_search(&i).expect("point lies in cell")
    }
}

/// Exact action of one leaf, with the labelling it was built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolvedLeaf {
    pub partition_depth: u32,
    /// One permutation of the sample per leaf element.
    pub perms: Vec<Perm>,
    /// For each occupied cell, its points in label order.
    pub labelling: Vec<(Cylinder, Vec<usize>)>,
    /// `max_e d(α̃(λ)e, α(λ)e)` per element.
    pub distances: Vec<Dyadic>,
}

fn is_homomorphism(table: &FiniteGroupTable, perms: &[Perm]) -> bool {
    perms[table.identity()].is_identity()
        && (0..table.order()).all(|a| {
            (0..table.order()).all(|b| perms[table.mul(a, b)] == perms[a].compose(&perms[b]))
        })
}

fn distance_of(sample: &FiniteSample<CantorPoint>, p: &Perm, q: &Perm) -> Dyadic {
    let pts = sample.points();
    (0..pts.len())
        .map(|i| pts[p.apply(i)].distance_unchecked(&pts[q.apply(i)]))
        .max()
        .unwrap_or(Dyadic::ZERO)
}

fn check_counts_and_gap(
    cells: &Cells,
    sample: &FiniteSample<CantorPoint>,
    beta: &Perm,
    d: u32,
    alpha: &Perm,
    element: &dyn Fn() -> String,
) -> Result<(), SolveError> {
    for (&c, m) in &cells.members {
        let img = cell_image(beta, d, cells.dp, c);
        if cells.count(img) != m.len() {
            return Err(SolveError::CountMismatch {
                cell: cells.name(c),
                image: cells.name(img),
                element: element(),
                left: m.len(),
                right: cells.count(img),
            });
        }
    }
    for (i, &c) in cells.of.iter().enumerate() {
        if cells.of[alpha.apply(i)] != cell_image(beta, d, cells.dp, c) {
            return Err(SolveError::GapViolation {
                element: element(),
                point: sample.points()[i].to_string(),
            });
        }
    }
    Ok(())
}

/// Solves one finite group at a fixed partition depth `dp >= d`.
///
/// `beta` holds the depth-`d` prefix permutation and `alpha` the sample permutation of
/// every element of `table`.
#[allow(clippy::too_many_arguments)]
pub fn solve_leaf_at_depth(
    table: &FiniteGroupTable,
    leaf_name: &str,
    beta: &[Perm],
    d: u32,
    sample: &FiniteSample<CantorPoint>,
    alpha: &[Perm],
    dp: u32,
    frozen: Option<&Frozen>,
) -> Result<SolvedLeaf, SolveError> {
    let order = table.order();
    let npts = sample.len();
    let cells = Cells::new(sample, dp);
    let name = |l: usize| format!("{leaf_name}.{}", table.element_name(l));
    for l in 0..order {
        check_counts_and_gap(&cells, sample, &beta[l], d, &alpha[l], &|| name(l))?;
    }
    if let Some(fr) = frozen {
        for (&x, p) in fr.elements.iter().zip(&fr.perms) {
            for (i, &c) in cells.of.iter().enumerate() {
                if cells.of[p.apply(i)] != cell_image(&beta[x], d, dp, c) {
                    return Err(SolveError::FrozenInconsistent {
                        element: name(x),
                        cell: cells.name(c),
                    });
                }
            }
        }
    }
    let frozen_map: BTreeMap<usize, &Perm> = frozen
        .map(|f| f.elements.iter().copied().zip(f.perms.iter()).collect())
        .unwrap_or_default();
    let agrees_with_frozen = |perms: &[Perm]| frozen_map.iter().all(|(&x, p)| perms[x] == **p);

    let labelling_of = |tau: &BTreeMap<u64, Vec<usize>>| -> Vec<(Cylinder, Vec<usize>)> {
        tau.iter().map(|(&c, v)| (Cylinder::new(c, dp), v.clone())).collect()
    };

    if is_homomorphism(table, alpha) && agrees_with_frozen(alpha) {
        let labelling = cells.members.iter().map(|(&c, m)| (Cylinder::new(c, dp), m.clone())).collect();
        return Ok(SolvedLeaf {
            partition_depth: dp,
            perms: alpha.to_vec(),
            labelling,
            distances: vec![Dyadic::ZERO; order],
        });
    }

    let cimg = |l: usize, c: u64| cell_image(&beta[l], d, dp, c);
    // Δ defaults to the trivial subgroup
    let delta: Vec<usize> = match frozen {
        Some(f) => {
            let mut v = f.elements.clone();
            v.sort();
            v
        }
        None => vec![table.identity()],
    };
    let frozen_perm = |x: usize| -> Perm {
        match frozen_map.get(&x) {
            Some(p) => (*p).clone(),
            None => Perm::identity(npts),
        }
    };

    let mut result: Vec<Vec<u32>> = vec![vec![u32::MAX; npts]; order];
    let mut tau_all: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    let mut done: BTreeMap<u64, bool> = BTreeMap::new();

    for (&r, r_pts) in &cells.members {
        if done.contains_key(&r) {
            continue;
        }
        let k = r_pts.len();
        // the orbit of r, with the least element reaching each cell
        let mut reach: BTreeMap<u64, usize> = BTreeMap::new();
        for l in 0..order {
            reach.entry(cimg(l, r)).or_insert(l);
        }
        for &c in reach.keys() {
            done.insert(c, true);
        }
        let stab: Vec<usize> = (0..order).filter(|&l| cimg(l, r) == r).collect();
        let stab_pos: BTreeMap<usize, usize> = stab.iter().enumerate().map(|(i, &h)| (h, i)).collect();
        let restrict = |p: &Perm, from: u64, to: u64| -> Option<Perm> {
            let imgs = cells.members[&from]
                .iter()
                .map(|&i| {
                    let j = p.apply(i);
                    (cells.of[j] == to).then(|| cells.local(to, j) as u32)
                })
                .collect::<Option<Vec<_>>>()?;
            Perm::from_images(imgs).ok()
        };

        // Δ-orbits inside the orbit: representative c_j, μ_j, stabilizer K_j, and δ_c
        struct DeltaOrbit {
            rep: u64,
            mu: usize,
            stab: Vec<usize>,
            cells: Vec<(u64, usize)>,
        }
        let mut delta_orbits: Vec<DeltaOrbit> = Vec::new();
        let mut placed: BTreeMap<u64, bool> = BTreeMap::new();
        for (&c, &mu) in &reach {
            if placed.contains_key(&c) {
                continue;
            }
            let mut cells_j: BTreeMap<u64, usize> = BTreeMap::new();
            for &x in &delta {
                cells_j.entry(cimg(x, c)).or_insert(x);
            }
            for &cc in cells_j.keys() {
                placed.insert(cc, true);
            }
            delta_orbits.push(DeltaOrbit {
                rep: c,
                mu,
                stab: delta.iter().copied().filter(|&x| cimg(x, c) == c).collect(),
                cells: cells_j.into_iter().collect(),
            });
        }

        // candidate actions of the stabilizer on r's points
        let mut candidates: Vec<Vec<Perm>> = vec![vec![Perm::identity(k); stab.len()]];
        if let Some(rest) = stab.iter().map(|&h| restrict(&alpha[h], r, r)).collect::<Option<Vec<_>>>() {
            let exact = stab.iter().enumerate().all(|(i, &a)| {
                stab.iter().enumerate().all(|(j, &b)| {
                    let ab = table.mul(a, b);
                    rest[stab_pos[&ab]] == rest[i].compose(&rest[j])
                })
            });
            if exact {
                candidates.push(rest);
            }
        }
        if frozen.is_some() && stab.iter().all(|h| delta.binary_search(h).is_ok()) {
            if let Some(rest) = stab
                .iter()
                .map(|&h| restrict(&frozen_perm(h), r, r))
                .collect::<Option<Vec<_>>>()
            {
                candidates.push(rest);
            }
        }

        let mut chosen: Option<(Vec<Perm>, Vec<Perm>)> = None;
        let mut obstruction: Option<(u64, usize)> = None;
        'cand: for sigma in &candidates {
            let mut taus = Vec::new();
            for o in &delta_orbits {
                // τ_j ∘ σ(μ⁻¹ k μ) = frozen(k) ∘ τ_j on r's points
                let mu_inv = table.inv(o.mu);
                let left: Vec<Perm> = o
                    .stab
                    .iter()
                    .map(|&x| sigma[stab_pos[&table.mul(mu_inv, table.mul(x, o.mu))]].clone())
                    .collect();
                let right: Vec<Perm> = o
                    .stab
                    .iter()
                    .map(|&x| restrict(&frozen_perm(x), o.rep, o.rep).expect("frozen follows cells"))
                    .collect();
                let preferred = restrict(&alpha[o.mu], r, o.rep);
                let tau = match preferred {
                    Some(p) if intertwines(&p, &left, &right) => Some(p),
                    _ => find_intertwiner::<rand_chacha::ChaCha8Rng>(&left, &right, None),
                };
                match tau {
                    Some(t) => taus.push(t),
                    None => {
                        let bad = o
                            .stab
                            .iter()
                            .copied()
                            .find(|&x| x != table.identity())
                            .unwrap_or(table.identity());
                        obstruction.get_or_insert((o.rep, bad));
                        continue 'cand;
                    }
                }
            }
            chosen = Some((sigma.clone(), taus));
            break;
        }
        let Some((sigma, taus)) = chosen else {
            let (c, x) = obstruction.expect("some orbit failed");
            return Err(SolveError::LabellingObstruction {
                cell: cells.name(c),
                element: name(x),
            });
        };

        // τ_c as point indices, λ_c
        let mut tau_c: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        let mut lambda_c: BTreeMap<u64, usize> = BTreeMap::new();
        for (o, tj) in delta_orbits.iter().zip(&taus) {
            let rep_pts = &cells.members[&o.rep];
            for &(c, dc) in &o.cells {
                let fp = frozen_perm(dc);
                let pts: Vec<usize> = (0..k).map(|x| fp.apply(rep_pts[tj.apply(x)])).collect();
                tau_c.insert(c, pts);
                lambda_c.insert(c, table.mul(dc, o.mu));
            }
        }
        for l in 0..order {
            for (&c, pts) in &tau_c {
                let c2 = cimg(l, c);
                let h = table.mul(table.inv(lambda_c[&c2]), table.mul(l, lambda_c[&c]));
                let s = &sigma[stab_pos[&h]];
                for (x, &p) in pts.iter().enumerate() {
                    result[l][p] = tau_c[&c2][s.apply(x)] as u32;
                }
            }
        }
        tau_all.extend(tau_c);
    }

    let perms: Vec<Perm> = result
        .into_iter()
        .map(|v| Perm::from_images(v).map_err(|e| SolveError::RelationsViolated(e.to_string())))
        .collect::<Result<_, _>>()?;
    if !is_homomorphism(table, &perms) {
        return Err(SolveError::RelationsViolated(format!("leaf {leaf_name} table")));
    }
    if !agrees_with_frozen(&perms) {
        return Err(SolveError::RelationsViolated(format!("leaf {leaf_name} frozen subgroup")));
    }
    let distances = (0..order).map(|l| distance_of(sample, &perms[l], &alpha[l])).collect();
    Ok(SolvedLeaf {
        partition_depth: dp,
        perms,
        labelling: labelling_of(&tau_all),
        distances,
    })
}

fn alpha_leaf(group: &Group, level: &Level<CantorPoint>, leaf: usize) -> Result<Vec<Perm>, SolveError> {
    let t = &group.leaf(leaf).table;
    (0..t.order())
        .map(|e| {
            if e == t.identity() {
                Ok(Perm::identity(level.sample().len()))
            } else {
                Ok(level.get(group, &Word::single(Symbol::leaf(leaf, e)))?.clone())
            }
        })
        .collect()
}

fn depth_range(beta: &CylinderAction, eps: Dyadic) -> Result<(u32, u32), SolveError> {
    let limit = beta.total_depth().min(24);
    let d0 = partition_depth(beta.depth(), eps).unwrap_or(u32::MAX);
    if d0 > limit {
        return Err(SolveError::EpsilonTooSmall {
            eps: eps.to_string(),
            needed: d0,
            limit,
        });
    }
    Ok((d0, limit))
}

/// Exact action of one leaf of `group` near `α`, optionally reproducing frozen subgroup
/// permutations. Labelling obstructions are retried on finer partitions.
pub fn solve_finite(
    group: &Group,
    leaf: usize,
    beta: &CylinderAction,
    level: &Level<CantorPoint>,
    eps: Dyadic,
    frozen: Option<&Frozen>,
) -> Result<SolvedLeaf, SolveError> {
    let (d0, limit) = depth_range(beta, eps)?;
    let alpha = alpha_leaf(group, level, leaf)?;
    let lg = group.leaf(leaf);
    let mut dp = d0;
    loop {
        let r = solve_leaf_at_depth(
            &lg.table,
            &lg.name,
            beta.table().leaf_perms(leaf),
            beta.depth(),
            level.sample(),
            &alpha,
            dp,
            frozen,
        );
        match r {
            Err(e) if e.is_obstruction() && dp < limit => dp += 1,
            other => return other,
        }
    }
}

/// Leaf and stable-letter permutations found so far at one partition depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialSolution {
    pub partition_depth: u32,
    pub leaves: Vec<Option<Vec<Perm>>>,
    pub stables: Vec<Option<Perm>>,
    pub labellings: Vec<Option<Vec<(Cylinder, Vec<usize>)>>>,
}

impl PartialSolution {
    pub fn new(group: &Group, partition_depth: u32) -> Self {
        PartialSolution {
            partition_depth,
            leaves: vec![None; group.leaves().len()],
            stables: vec![None; group.stables().len()],
            labellings: vec![None; group.leaves().len()],
        }
    }
}

fn solve_leaf_into(
    group: &Group,
    beta: &CylinderAction,
    level: &Level<CantorPoint>,
    partial: &mut PartialSolution,
    leaf: usize,
    frozen: Option<&Frozen>,
) -> Result<(), SolveError> {
    let lg = group.leaf(leaf);
    let alpha = alpha_leaf(group, level, leaf)?;
    let s = solve_leaf_at_depth(
        &lg.table,
        &lg.name,
        beta.table().leaf_perms(leaf),
        beta.depth(),
        level.sample(),
        &alpha,
        partial.partition_depth,
        frozen,
    )?;
    partial.leaves[leaf] = Some(s.perms);
    partial.labellings[leaf] = Some(s.labelling);
    Ok(())
}

/// Solves the new factor of amalgam edge `edge`, freezing the amalgamated subgroup at
/// the permutations already chosen for the old factor.
pub fn solve_amalgam(
    group: &Group,
    beta: &CylinderAction,
    level: &Level<CantorPoint>,
    partial: &mut PartialSolution,
    edge: usize,
) -> Result<(), SolveError> {
    let e = &group.amalgams()[edge];
    let left = partial.leaves[e.left_leaf]
        .as_ref()
        .expect("old factor solved before the amalgam");
    let frozen = Frozen {
        elements: e.pairs.iter().map(|&(_, y)| y).collect(),
        perms: e.pairs.iter().map(|&(x, _)| left[x].clone()).collect(),
    };
    solve_leaf_into(group, beta, level, partial, e.right_leaf, Some(&frozen))
}

/// Chooses the stable letter `letter` so that `t f t⁻¹ = φ(f)` holds exactly for the
/// leaf permutations already in `partial`.
pub fn solve_hnn(
    group: &Group,
    beta: &CylinderAction,
    level: &Level<CantorPoint>,
    partial: &mut PartialSolution,
    letter: usize,
) -> Result<(), SolveError> {
    let st = &group.stables()[letter];
    let dp = partial.partition_depth;
    let d = beta.depth();
    let sample = level.sample();
    let cells = Cells::new(sample, dp);
    let t_word = Word::single(Symbol::stable(letter));
    let alpha_t = level.get(group, &t_word)?.clone();
    let beta_t = beta.table().stable_perm(letter);
    check_counts_and_gap(&cells, sample, beta_t, d, &alpha_t, &|| st.name.clone())?;
    let src = partial.leaves[st.source_leaf].as_ref().expect("base solved");
    let tgt = partial.leaves[st.target_leaf].as_ref().expect("base solved");
    let a: Vec<&Perm> = st.pairs.iter().map(|&(f, _)| &src[f]).collect();
    let b: Vec<&Perm> = st.pairs.iter().map(|&(_, g)| &tgt[g]).collect();
    let beta_f: Vec<&Perm> = st
        .pairs
        .iter()
        .map(|&(f, _)| &beta.table().leaf_perms(st.source_leaf)[f])
        .collect();

    let n = sample.len();
    let mut result = vec![u32::MAX; n];
    let mut done: BTreeMap<u64, bool> = BTreeMap::new();
    for (&ur, ur_pts) in &cells.members {
        if done.contains_key(&ur) {
            continue;
        }
        let mut reach: BTreeMap<u64, usize> = BTreeMap::new();
        for (i, p) in beta_f.iter().enumerate() {
            reach.entry(cell_image(p, d, dp, ur)).or_insert(i);
        }
        for &c in reach.keys() {
            done.insert(c, true);
        }
        let vr = cell_image(beta_t, d, dp, ur);
        let stab: Vec<usize> = (0..st.pairs.len())
            .filter(|&i| cell_image(beta_f[i], d, dp, ur) == ur)
            .collect();
        let restrict = |p: &Perm, c: u64| -> Perm {
            let imgs = cells.members[&c]
                .iter()
                .map(|&i| cells.local(c, p.apply(i)) as u32)
                .collect();
            Perm::from_images(imgs).expect("solved leaves follow the cells")
        };
        let left: Vec<Perm> = stab.iter().map(|&i| restrict(a[i], ur)).collect();
        let right: Vec<Perm> = stab.iter().map(|&i| restrict(b[i], vr)).collect();
        let preferred = Perm::from_images(
            ur_pts
                .iter()
                .map(|&i| cells.local(vr, alpha_t.apply(i)) as u32)
                .collect(),
        )
        .expect("gap check places α(t) in the image cell");
        let tau = if intertwines(&preferred, &left, &right) {
            preferred
        } else {
            find_intertwiner::<rand_chacha::ChaCha8Rng>(&left, &right, None).ok_or_else(|| {
                SolveError::StabilizerObstruction {
                    cell: cells.name(ur),
                    letter: st.name.clone(),
                }
            })?
        };
        let vr_pts = &cells.members[&vr];
        for &fi in reach.values() {
            for (x, &p) in ur_pts.iter().enumerate() {
                let from = a[fi].apply(p);
                let to = b[fi].apply(vr_pts[tau.apply(x)]);
                result[from] = to as u32;
            }
        }
    }
    let t = Perm::from_images(result).map_err(|e| SolveError::RelationsViolated(e.to_string()))?;
    for (pa, pb) in a.iter().zip(&b) {
        if t.compose(pa) != pb.compose(&t) {
            return Err(SolveError::RelationsViolated(format!("{} conjugation", st.name)));
        }
    }
    partial.stables[letter] = Some(t);
    Ok(())
}

/// Distance of one generator of a solution to the input, with its advertised bound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorDistance {
    pub generator: String,
    pub distance: Dyadic,
    pub bound: Dyadic,
}

/// An exact action on one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolvedLevel {
    pub n: usize,
    pub partition_depth: u32,
    pub sample: FiniteSample<CantorPoint>,
    pub table: PermTable,
    /// Per generator of the group, in generator order.
    pub distances: Vec<GeneratorDistance>,
    /// Per leaf, the cell labellings used.
    pub labellings: Vec<Vec<(Cylinder, Vec<usize>)>>,
}

impl SolvedLevel {
    pub fn perm(&self, s: Symbol) -> &Perm {
        self.table.symbol_perm(s)
    }
}

/// Solves every node of the structure tree at one partition depth.
pub fn solve_level_at_depth(
    group: &Group,
    beta: &CylinderAction,
    level: &Level<CantorPoint>,
    dp: u32,
) -> Result<SolvedLevel, SolveError> {
    let mut partial = PartialSolution::new(group, dp);
    for l in 0..group.leaves().len() {
        match group.amalgams().iter().position(|e| e.right_leaf == l) {
            Some(edge) => solve_amalgam(group, beta, level, &mut partial, edge)?,
            None => solve_leaf_into(group, beta, level, &mut partial, l, None)?,
        }
    }
    for t in 0..group.stables().len() {
        solve_hnn(group, beta, level, &mut partial, t)?;
    }
    let leaves = partial.leaves.into_iter().map(|p| p.expect("all leaves solved")).collect();
    let stables = partial.stables.into_iter().map(|p| p.expect("all letters solved")).collect();
    let table = PermTable::new(group, level.sample().len(), leaves, stables)?;
    if let Err(e) = table.verify(group) {
        return Err(SolveError::RelationsViolated(e.to_string()));
    }
    let mut distances = Vec::new();
    for s in group.generators() {
        let a = level.get(group, &Word::single(s))?;
        let bound = match s {
            Symbol::Leaf { .. } => Dyadic::pow(dp),
            Symbol::Stable { .. } => Dyadic::pow(dp - 1),
        };
        distances.push(GeneratorDistance {
            generator: group.symbol_name(s),
            distance: distance_of(level.sample(), table.symbol_perm(s), a),
            bound,
        });
    }
    Ok(SolvedLevel {
        n: level.n(),
        partition_depth: dp,
        sample: level.sample().clone(),
        table,
        distances,
        labellings: partial.labellings.into_iter().map(|l| l.unwrap_or_default()).collect(),
    })
}

/// [`solve_level_at_depth`] starting from the depth `ε` requires, refining on obstructions.
pub fn solve_level(
    group: &Group,
    beta: &CylinderAction,
    level: &Level<CantorPoint>,
    eps: Dyadic,
) -> Result<SolvedLevel, SolveError> {
    let (mut dp, limit) = depth_range(beta, eps)?;
    loop {
        match solve_level_at_depth(group, beta, level, dp) {
            Err(e) if e.is_obstruction() && dp < limit => dp += 1,
            other => return other,
        }
    }
}

/// Solutions for all indices from the first admissible one on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolvedAction {
    /// Least `N` such that every scheduled index `n >= N` was solved.
    pub first_admissible: usize,
    pub levels: Vec<SolvedLevel>,
    /// Indices below `N` and why they failed.
    pub rejected: Vec<(usize, SolveError)>,
}

/// Solves every level independently and reports the admissible tail of the schedule.
/// Fails with the last level's error when that level is not solvable.
pub fn solve_virtually_free(
    group: &Group,
    beta: &CylinderAction,
    alpha: &AlmostAction<CantorPoint>,
    eps: Dyadic,
) -> Result<SolvedAction, SolveError> {
    let results: Vec<Result<SolvedLevel, SolveError>> = alpha
        .levels()
        .par_iter()
        .map(|l| solve_level(group, beta, l, eps))
        .collect();
    let first_bad_from_end = results.iter().rposition(|r| r.is_err());
    let start = first_bad_from_end.map_or(0, |i| i + 1);
    if start == results.len() {
        return Err(results.into_iter().last().expect("nonempty").unwrap_err());
    }
    let mut levels = Vec::new();
    let mut rejected = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) if i >= start => levels.push(s),
            Ok(_) => {}
            Err(e) => rejected.push((alpha.levels()[i].n(), e)),
        }
    }
    Ok(SolvedAction {
        first_admissible: levels[0].n,
        levels,
        rejected,
    })
}

/// A finite Γ-set inside `X` with its certificate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub solved: SolvedLevel,
    /// `max_e d(γ·e, α̃(γ)e)` per word of `F`.
    pub certificate: Vec<(String, Dyadic)>,
    pub max_defect: Dyadic,
    pub eps: Dyadic,
}

/// Residual-finiteness witness: sample at depth `max(d, j+1) + k` for `ε = 2^-j`,
/// perturb by `c` transpositions of radius `k`, solve, and certify
/// `max_{γ∈F, e∈E} d(γ·e, α̃(γ)e) < ε` with the inclusion as the equivariant map.
pub fn residual_finiteness_witness(
    group: &Group,
    beta: &CylinderAction,
    words: &[Word],
    eps: Dyadic,
    seed: u64,
    perturbation: Option<(u32, usize)>,
) -> Result<Witness, SolveError> {
    let j = eps.exponent().ok_or_else(|| SolveError::EpsilonTooSmall {
        eps: eps.to_string(),
        needed: u32::MAX,
        limit: beta.total_depth(),
    })?;
    let dp = beta.depth().max(j + 1);
    let (k, c) = perturbation.unwrap_or((0, 0));
    let m = dp + k;
    let sched = [ScheduleEntry { n: 0, m, k, c }];
    let alpha = perturb_from_action(group, beta, &sched, seed)?;
    let solved = solve_level(group, beta, &alpha.levels()[0], Dyadic::pow(dp))?;
    let mut certificate = Vec::new();
    let mut max_defect = Dyadic::ZERO;
    let pts = solved.sample.points();
    for w in words {
        group.check_word(w)?;
        let p = solved.table.eval(w);
        let v = pts
            .iter()
            .enumerate()
            .map(|(i, x)| beta.act_unchecked(w, x).distance_unchecked(&pts[p.apply(i)]))
            .max()
            .unwrap_or(Dyadic::ZERO);
        max_defect = max_defect.max(v);
        certificate.push((group.format_word(w), v));
    }
    if max_defect >= eps {
        return Err(SolveError::CertificateFailure {
            defect: max_defect.to_string(),
            eps: eps.to_string(),
        });
    }
    Ok(Witness {
        solved,
        certificate,
        max_defect,
        eps,
    })
}
