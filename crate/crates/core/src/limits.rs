//! Equicontinuity moduli, limit actions by nested pigeonholing, and the abstract solver.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{ActionError, CylinderAction, PermTable};
use crate::almost::{AlmostAction, AlmostError, Level};
use crate::cantor::{CantorPoint, MetricPoint};
use crate::group::{Group, GroupError, Symbol, Word};
use crate::perm::Perm;
use crate::scalar::Dyadic;
use crate::solver::{solve_virtually_free, SolveError, SolvedAction};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LimitError {
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Almost(#[from] AlmostError),
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("{word} is not equicontinuous at depth {depth} (level {n})")]
    NotEquicontinuous { word: String, depth: u32, n: usize },
    #[error("insufficient data: no stable class at depth {depth} ({candidates} candidate levels)")]
    InsufficientData { depth: u32, candidates: usize },
    #[error("resolution {resolution} exceeds the sample depth {total}")]
    BadResolution { resolution: u32, total: u32 },
    #[error("{word} needs depth {needed} to determine depth-{resolution} images")]
    CoarseResolution { word: String, needed: u32, resolution: u32 },
    #[error("the limit table violates relations: {0}")]
    LimitNotExact(String),
}

/// Least `c'` such that `p` sends the sampled points of every depth-`c'` cylinder into a
/// single depth-`c` cylinder, `None` when only the sample's discreteness provides one.
///
/// Once `c` reaches the depth separating all sample points the answer reflects the
/// sample, not the map.
pub fn level_modulus(points: &[CantorPoint], p: &Perm, c: u32) -> Option<u32> {
    let total = points.first().map_or(0, CantorPoint::depth);
    let separation = points
        .windows(2)
        .map(|w| w[0].common_prefix_len(&w[1]).unwrap_or(total) + 1)
        .max()
        .unwrap_or(0);
    let fits = |cp: u32| {
        let mut seen: BTreeMap<u64, u64> = BTreeMap::new();
        points.iter().enumerate().all(|(i, x)| {
            let img = points[p.apply(i)].prefix(c.min(total));
            *seen.entry(x.prefix(cp)).or_insert(img) == img
        })
    };
    let cp = (0..=total).find(|&cp| fits(cp)).unwrap_or(total);
    (cp <= c || cp < separation).then_some(cp)
}

/// One row of the modulus table: entry `c-1` is the modulus at depth `c`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModulusRow {
    pub word: String,
    pub entries: Vec<Option<u32>>,
}

/// The modulus of `γ` over the whole family for `c = 1..=c_max`.
///
/// Fails at the first depth where some level has no modulus.
pub fn equicontinuity_modulus(
    group: &Group,
    alpha: &AlmostAction<CantorPoint>,
    gamma: &Word,
    c_max: u32,
) -> Result<ModulusRow, LimitError> {
    let word = group.format_word(gamma);
    let mut entries = Vec::new();
    for c in 1..=c_max {
        let mut worst = 0;
        for l in alpha.levels() {
            let p = l.get(group, gamma)?;
            match level_modulus(l.sample().points(), p, c) {
                Some(cp) => worst = worst.max(cp),
                None => {
                    return Err(LimitError::NotEquicontinuous {
                        word,
                        depth: c,
                        n: l.n(),
                    })
                }
            }
        }
        entries.push(Some(worst));
    }
    Ok(ModulusRow { word, entries })
}

/// The map a level induces from depth-`src` cylinders to depth-`c` cylinders, if every
/// source cylinder is sampled and mapped into a single cylinder.
fn induced_map(level: &Level<CantorPoint>, p: &Perm, src: u32, c: u32) -> Option<Vec<u32>> {
    let pts = level.sample().points();
    let mut map = vec![u32::MAX; 1 << src];
    for (i, x) in pts.iter().enumerate() {
        let img = pts[p.apply(i)].prefix(c) as u32;
        let slot = &mut map[x.prefix(src) as usize];
        if *slot != u32::MAX && *slot != img {
            return None;
        }
        *slot = img;
    }
    map.iter().all(|&v| v != u32::MAX).then_some(map)
}

/// Result of [`extract_limit_action`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LimitExtraction {
    /// Schedule indices kept after every stage.
    pub subsequence: Vec<usize>,
    /// Indices kept after stage `c`, for `c = 1..=c*`.
    pub stages: Vec<Vec<usize>>,
    pub limit: CylinderAction,
    pub convergence: Vec<ConvergenceRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub word: String,
    /// `(n, max_e d(α_n(γ)e, limit(γ)e))` along the subsequence.
    pub entries: Vec<(usize, Dyadic)>,
}

/// Limit of `α` at depth `c*`.
///
/// At each depth `c = 1..=c*` the surviving levels are grouped by the tuple of maps their
/// generators induce from depth-`max(c, c')` cylinders to depth-`c` cylinders, `c'` being
/// the generator's modulus at `c` over the whole family; the largest group survives, ties
/// going to the group whose first index is lowest. Levels inducing no map at some depth
/// drop out. The depth-`c*` maps of the survivors form the limit, which needs every
/// modulus at `c*` to be at most `c*`. `min_class` is the least number of levels a
/// surviving group must contain.
pub fn extract_limit_action(
    group: &Group,
    alpha: &AlmostAction<CantorPoint>,
    resolution: u32,
    min_class: usize,
) -> Result<LimitExtraction, LimitError> {
    let total = alpha.levels()[0].sample().points()[0].depth();
    if resolution == 0 || resolution > total.min(20) {
        return Err(LimitError::BadResolution { resolution, total });
    }
    let gens = group.generators();
    let moduli = gens
        .iter()
        .map(|&s| equicontinuity_modulus(group, alpha, &Word::single(s), resolution))
        .collect::<Result<Vec<_>, _>>()?;
    let source = |g: usize, c: u32| c.max(moduli[g].entries[c as usize - 1].unwrap_or(c));
    for (g, row) in moduli.iter().enumerate() {
        if source(g, resolution) > resolution {
            return Err(LimitError::CoarseResolution {
                word: row.word.clone(),
                needed: source(g, resolution),
                resolution,
            });
        }
    }
    let mut alive: Vec<usize> = (0..alpha.levels().len()).collect();
    let mut stages = Vec::new();
    let mut last_maps: Vec<Vec<u32>> = Vec::new();
    for c in 1..=resolution {
        let mut classes: BTreeMap<Vec<Vec<u32>>, Vec<usize>> = BTreeMap::new();
        for &i in &alive {
            let l = &alpha.levels()[i];
            let key = gens
                .iter()
                .enumerate()
                .map(|(g, &s)| {
                    let p = l.get(group, &Word::single(s)).ok()?;
                    induced_map(l, p, source(g, c), c)
                })
                .collect::<Option<Vec<_>>>();
            if let Some(k) = key {
                classes.entry(k).or_default().push(i);
            }
        }
        let best = classes
            .into_iter()
            .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.1[0].cmp(&a.1[0])));
        match best {
            Some((k, members)) if members.len() >= min_class.max(1) => {
                alive = members;
                last_maps = k;
            }
            _ => {
                return Err(LimitError::InsufficientData {
                    depth: c,
                    candidates: alive.len(),
                })
            }
        }
        stages.push(alive.iter().map(|&i| alpha.levels()[i].n()).collect());
    }

    let mut leaves: Vec<Vec<Perm>> = group
        .leaves()
        .iter()
        .map(|l| vec![Perm::identity(1 << resolution); l.table.order()])
        .collect();
    let mut stables = vec![Perm::identity(1 << resolution); group.stables().len()];
    for (&s, m) in gens.iter().zip(last_maps) {
        let p = Perm::from_images(m).map_err(|e| LimitError::LimitNotExact(e.to_string()))?;
        match s {
            Symbol::Leaf { leaf, elem } => leaves[leaf as usize][elem as usize] = p,
            Symbol::Stable { letter, .. } => stables[letter as usize] = p,
        }
    }
    let table = PermTable::new(group, 1 << resolution, leaves, stables)?;
    let limit = CylinderAction::from_table(table, resolution, total)?;
    limit
        .verify(group)
        .map_err(|e| LimitError::LimitNotExact(e.to_string()))?;

    let subsequence: Vec<usize> = alive.iter().map(|&i| alpha.levels()[i].n()).collect();
    let convergence = convergence_table(group, alpha, &limit, &subsequence)?;
    Ok(LimitExtraction {
        subsequence,
        stages,
        limit,
        convergence,
    })
}

/// `max_e d(α_n(s)e, limit(s)e)` for every generator and every `n` in `indices`.
pub fn convergence_table(
    group: &Group,
    alpha: &AlmostAction<CantorPoint>,
    limit: &CylinderAction,
    indices: &[usize],
) -> Result<Vec<ConvergenceRow>, LimitError> {
    let mut rows = Vec::new();
    for s in group.generators() {
        let w = Word::single(s);
        let mut entries = Vec::new();
        for &n in indices {
            let l = alpha.level(n).ok_or_else(|| AlmostError::Unreachable(format!("level {n}")))?;
            let p = l.get(group, &w)?;
            let pts = l.sample().points();
            let v = pts
                .iter()
                .enumerate()
                .map(|(i, x)| pts[p.apply(i)].distance_unchecked(&limit.act_unchecked(&w, x)))
                .max()
                .unwrap_or(Dyadic::ZERO);
            entries.push((n, v));
        }
        rows.push(ConvergenceRow {
            word: group.format_word(&w),
            entries,
        });
    }
    Ok(rows)
}

/// Extraction followed by the solver on the extracted subsequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbstractSolution {
    pub moduli: Vec<ModulusRow>,
    pub extraction: LimitExtraction,
    pub solved: SolvedAction,
}

/// Solves an almost-action with no declared target: the limit at depth `c*` serves as
/// the target on the subsequence that converges to it.
pub fn solve_abstract(
    group: &Group,
    alpha: &AlmostAction<CantorPoint>,
    resolution: u32,
    eps: Dyadic,
    min_class: usize,
) -> Result<AbstractSolution, LimitError> {
    let moduli = group
        .generators()
        .into_iter()
        .map(|s| equicontinuity_modulus(group, alpha, &Word::single(s), resolution))
        .collect::<Result<Vec<_>, _>>()?;
    let extraction = extract_limit_action(group, alpha, resolution, min_class)?;
    let sub = alpha.subsequence(&extraction.subsequence)?;
    let solved = solve_virtually_free(group, &extraction.limit, &sub, eps)?;
    Ok(AbstractSolution {
        moduli,
        extraction,
        solved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::almost::{perturb_from_action, ScheduleEntry};
    use crate::group::presets::*;

    fn swap_action(depth: u32) -> (Group, CylinderAction) {
        let g = cyclic(2);
        let n = 1u32 << depth;
        let imgs = (0..n).map(|i| i ^ (n >> 1)).collect();
        let mut given = BTreeMap::new();
        given.insert(Symbol::leaf(0, 1), Perm::from_images(imgs).unwrap());
        let a = CylinderAction::new(&g, depth, 10, &given).unwrap();
        (g, a)
    }

    #[test]
    fn identity_modulus_is_c() {
        let g = cyclic(2);
        let a = CylinderAction::trivial(&g, 1, 10).unwrap();
        let sched: Vec<_> = (0..3).map(|n| ScheduleEntry { n, m: 6, k: 0, c: 0 }).collect();
        let alpha = perturb_from_action(&g, &a, &sched, 0).unwrap();
        let row = equicontinuity_modulus(&g, &alpha, &g.parse_word("a.1").unwrap(), 5).unwrap();
        assert_eq!(row.entries, (1..=5).map(Some).collect::<Vec<_>>());
    }

    #[test]
    fn prefix_modulus_is_max_c_d() {
        // 01 <-> 10 mixes the first bit
        let g = cyclic(2);
        let mut given = BTreeMap::new();
        given.insert(Symbol::leaf(0, 1), Perm::from_images(vec![0, 2, 1, 3]).unwrap());
        let a = CylinderAction::new(&g, 2, 10, &given).unwrap();
        let sched: Vec<_> = (0..2).map(|n| ScheduleEntry { n, m: 6, k: 0, c: 0 }).collect();
        let alpha = perturb_from_action(&g, &a, &sched, 0).unwrap();
        let row = equicontinuity_modulus(&g, &alpha, &g.parse_word("a.1").unwrap(), 5).unwrap();
        assert_eq!(row.entries, [1, 2, 3, 4, 5].map(|c: u32| Some(c.max(2))).to_vec());
    }

    #[test]
    fn constant_family_keeps_everything() {
        let (g, a) = swap_action(2);
        let sched: Vec<_> = (0..5).map(|n| ScheduleEntry { n, m: 6, k: 0, c: 0 }).collect();
        let alpha = perturb_from_action(&g, &a, &sched, 0).unwrap();
        let ex = extract_limit_action(&g, &alpha, 3, 1).unwrap();
        assert_eq!(ex.subsequence, vec![0, 1, 2, 3, 4]);
        assert_eq!(ex.limit.table(), a.refine(3).unwrap().table());
    }

    #[test]
    fn limit_of_a_first_bit_mixing_action() {
        // 01 <-> 10 induces no map on depth-1 cylinders
        let g = cyclic(2);
        let mut given = BTreeMap::new();
        given.insert(Symbol::leaf(0, 1), Perm::from_images(vec![0, 2, 1, 3]).unwrap());
        let a = CylinderAction::new(&g, 2, 10, &given).unwrap();
        let sched: Vec<_> = (0..4).map(|n| ScheduleEntry { n, m: 6, k: 1, c: 2 }).collect();
        let alpha = perturb_from_action(&g, &a, &sched, 3).unwrap();
        let ex = extract_limit_action(&g, &alpha, 3, 1).unwrap();
        assert_eq!(ex.limit.table(), a.refine(3).unwrap().table());
        assert!(matches!(
            extract_limit_action(&g, &alpha, 1, 1),
            Err(LimitError::CoarseResolution { needed: 2, resolution: 1, .. })
        ));
    }

    #[test]
    fn too_fine_resolution_is_insufficient() {
        let (g, a) = swap_action(1);
        let sched = [ScheduleEntry { n: 0, m: 3, k: 0, c: 0 }];
        let alpha = perturb_from_action(&g, &a, &sched, 0).unwrap();
        assert!(matches!(
            extract_limit_action(&g, &alpha, 4, 1),
            Err(LimitError::InsufficientData { depth: 4, .. })
        ));
    }
}
