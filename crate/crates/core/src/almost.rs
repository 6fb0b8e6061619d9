//! Almost-actions: permutations of finite samples that are nearly multiplicative.

use std::collections::BTreeMap;

use num_rational::Ratio;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{ActionError, CircleAction, CylinderAction, PointAction};
use crate::cantor::{CantorPoint, CirclePoint, FiniteSample, MetricPoint, ModelError};
use crate::cayley::{CayleyBall, WordOracle};
use crate::group::{Group, GroupError, Symbol, Word};
use crate::perm::Perm;
use crate::rng;
use crate::scalar::{Distance, Dyadic};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlmostError {
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error("word {word} is not in the support at index {n}")]
    OutOfSupport { n: usize, word: String },
    #[error("permutation for {word} has degree {got}, sample has {expected} points")]
    DegreeMismatch {
        word: String,
        got: usize,
        expected: usize,
    },
    #[error("identity word missing or not mapped to the identity at index {0}")]
    BadIdentity(usize),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("sample sizes differ at index {n}: {left} vs {right}")]
    SizeMismatch { n: usize, left: usize, right: usize },
    #[error("schedules differ")]
    ScheduleMismatch,
    #[error("ball vertex {0} is not reachable from the support")]
    Unreachable(String),
}

/// One index `n` of an almost-action: a sample and permutations of it for the words
/// of a finite support. Support words are stored reduced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Level<P> {
    n: usize,
    sample: FiniteSample<P>,
    support: BTreeMap<Word, Perm>,
}

impl<P: MetricPoint> Level<P> {
    /// Reduces the keys, checks degrees and that the identity word maps to the identity
    /// (inserted when absent).
    pub fn new(
        group: &Group,
        sample: FiniteSample<P>,
        support: BTreeMap<Word, Perm>,
    ) -> Result<Self, AlmostError> {
        let n = sample.index();
        let mut reduced = BTreeMap::new();
        for (w, p) in support {
            if p.len() != sample.len() {
                return Err(AlmostError::DegreeMismatch {
                    word: group.format_word(&w),
                    got: p.len(),
                    expected: sample.len(),
                });
            }
            reduced.insert(group.reduce(&w)?, p);
        }
        match reduced.get(&Word::identity()) {
            None => {
                reduced.insert(Word::identity(), Perm::identity(sample.len()));
            }
            Some(p) if !p.is_identity() => return Err(AlmostError::BadIdentity(n)),
            Some(_) => {}
        }
        Ok(Level {
            n,
            sample,
            support: reduced,
        })
    }

    /// Keeps keys as given; used for supports indexed by tree words.
    fn from_raw(sample: FiniteSample<P>, support: BTreeMap<Word, Perm>) -> Self {
        Level {
            n: sample.index(),
            sample,
            support,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sample(&self) -> &FiniteSample<P> {
        &self.sample
    }

    pub fn support(&self) -> &BTreeMap<Word, Perm> {
        &self.support
    }

    pub fn get(&self, group: &Group, w: &Word) -> Result<&Perm, AlmostError> {
        let r = group.reduce(w)?;
        self.support.get(&r).ok_or_else(|| AlmostError::OutOfSupport {
            n: self.n,
            word: group.format_word(w),
        })
    }

    fn get_symbol(&self, group: &Group, s: Symbol) -> Result<&Perm, AlmostError> {
        self.get(group, &Word::single(s))
    }

    /// Whether the inverse of every support word is in the support.
    pub fn closed_under_inversion(&self, group: &Group) -> bool {
        self.support.keys().all(|w| {
            group
                .invert(w)
                .and_then(|i| group.reduce(&i))
                .map(|i| self.support.contains_key(&i))
                .unwrap_or(false)
        })
    }

    /// `max_e d(α(γ)α(δ)e, α(γδ)e)`.
    pub fn multiplicative_defect(
        &self,
        group: &Group,
        gamma: &Word,
        delta: &Word,
    ) -> Result<P::Distance, AlmostError> {
        let a = self.get(group, gamma)?;
        let b = self.get(group, delta)?;
        let ab = self.get(group, &group.multiply(gamma, delta)?)?;
        Ok(self.max_distance(|i| a.apply(b.apply(i)), |i| ab.apply(i)))
    }

    /// `max_e d(γ·e, α(γ)e)` against an honest action.
    pub fn approximation_defect<A: PointAction<P> + ?Sized>(
        &self,
        group: &Group,
        action: &A,
        gamma: &Word,
    ) -> Result<P::Distance, AlmostError> {
        let a = self.get(group, gamma)?;
        let pts = self.sample.points();
        let mut worst = P::Distance::zero();
        for (i, x) in pts.iter().enumerate() {
            let y = action.act_point(group, gamma, x)?;
            worst = worst.max(y.distance_unchecked(&pts[a.apply(i)]));
        }
        Ok(worst)
    }

    /// `max_i d(E[f(i)], E[g(i)])`.
    pub fn max_distance(&self, f: impl Fn(usize) -> usize, g: impl Fn(usize) -> usize) -> P::Distance {
        let pts = self.sample.points();
        (0..pts.len())
            .map(|i| pts[f(i)].distance_unchecked(&pts[g(i)]))
            .max()
            .unwrap_or_else(P::Distance::zero)
    }
}

/// A finite schedule of levels with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlmostAction<P> {
    levels: Vec<Level<P>>,
}

impl<P: MetricPoint> AlmostAction<P> {
    pub fn new(mut levels: Vec<Level<P>>) -> Result<Self, AlmostError> {
        levels.sort_by_key(|l| l.n);
        if levels.is_empty() {
            return Err(AlmostError::InvalidSchedule("no levels".into()));
        }
        if levels.windows(2).any(|w| w[0].n == w[1].n) {
            return Err(AlmostError::InvalidSchedule("repeated index".into()));
        }
        Ok(AlmostAction { levels })
    }

    pub fn levels(&self) -> &[Level<P>] {
        &self.levels
    }

    pub fn level(&self, n: usize) -> Option<&Level<P>> {
        self.levels.iter().find(|l| l.n == n)
    }

    pub fn indices(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.n).collect()
    }

    /// The levels with the given indices, in schedule order.
    pub fn subsequence(&self, indices: &[usize]) -> Result<Self, AlmostError> {
        let levels = self
            .levels
            .iter()
            .filter(|l| indices.contains(&l.n))
            .cloned()
            .collect();
        Self::new(levels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    Multiplicative,
    Approximation,
    /// `d(β(f)β(γ), β(fγ))`.
    LeftGenerator,
    /// `d(β(γ)β(f), β(γf))`.
    RightGenerator,
}

/// One entry of a defect table; `delta` is `None` for single-word defects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectRow {
    pub n: usize,
    pub kind: DefectKind,
    pub gamma: String,
    pub delta: Option<String>,
    pub value: String,
}

/// Defect tables with per-index maxima (the "sup over ball" summaries).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectReport {
    pub rows: Vec<DefectRow>,
    /// `(n, kind, max value)`, one per index and kind present.
    pub maxima: Vec<(usize, DefectKind, String)>,
}

impl DefectReport {
    fn from_rows<D: Distance>(rows: Vec<(DefectRow, D)>) -> Self {
        let mut max: BTreeMap<(usize, DefectKind), D> = BTreeMap::new();
        for (r, v) in &rows {
            let e = max.entry((r.n, r.kind)).or_insert_with(D::zero);
            *e = (*e).max(*v);
        }
        DefectReport {
            rows: rows.into_iter().map(|(r, _)| r).collect(),
            maxima: max.into_iter().map(|((n, k), v)| (n, k, v.to_string())).collect(),
        }
    }

    pub fn max(&self, n: usize, kind: DefectKind) -> Option<&str> {
        self.maxima
            .iter()
            .find(|(m, k, _)| *m == n && *k == kind)
            .map(|(_, _, v)| v.as_str())
    }
}

/// Multiplicative defects over all support pairs whose product is in the support, and
/// approximation defects against `target` when given.
pub fn defect_report<P: MetricPoint>(
    group: &Group,
    alpha: &AlmostAction<P>,
    target: Option<&(dyn PointAction<P> + Sync)>,
) -> Result<DefectReport, AlmostError> {
    let per_level: Vec<Result<Vec<(DefectRow, P::Distance)>, AlmostError>> = alpha
        .levels
        .par_iter()
        .map(|lvl| {
            let mut rows = Vec::new();
            for g in lvl.support.keys() {
                for d in lvl.support.keys() {
                    let gd = group.multiply(g, d)?;
                    if !lvl.support.contains_key(&gd) {
                        continue;
                    }
                    let v = lvl.multiplicative_defect(group, g, d)?;
                    rows.push((
                        DefectRow {
                            n: lvl.n,
                            kind: DefectKind::Multiplicative,
                            gamma: group.format_word(g),
                            delta: Some(group.format_word(d)),
                            value: v.to_string(),
                        },
                        v,
                    ));
                }
            }
            if let Some(a) = target {
                for g in lvl.support.keys() {
                    let v = lvl.approximation_defect(group, a, g)?;
                    rows.push((
                        DefectRow {
                            n: lvl.n,
                            kind: DefectKind::Approximation,
                            gamma: group.format_word(g),
                            delta: None,
                            value: v.to_string(),
                        },
                        v,
                    ));
                }
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_level {
        rows.extend(r?);
    }
    Ok(DefectReport::from_rows(rows))
}

/// One stage of a perturbation schedule: index `n`, sample depth `m`, radius `k`
/// (transpositions stay inside depth-`(m-k)` cylinders) and transposition count `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub n: usize,
    pub m: u32,
    pub k: u32,
    pub c: usize,
}

pub fn validate_schedule(schedule: &[ScheduleEntry], action_depth: u32, total_depth: u32) -> Result<(), AlmostError> {
    let bad = |s: String| Err(AlmostError::InvalidSchedule(s));
    if schedule.is_empty() {
        return bad("empty".into());
    }
    for (i, e) in schedule.iter().enumerate() {
        if e.m < action_depth {
            return bad(format!("stage {i}: m = {} below action depth {action_depth}", e.m));
        }
        if e.m > total_depth.min(24) {
            return bad(format!("stage {i}: m = {} above {}", e.m, total_depth.min(24)));
        }
        if e.k > e.m {
            return bad(format!("stage {i}: k = {} exceeds m = {}", e.k, e.m));
        }
        if i > 0 {
            let p = schedule[i - 1];
            if e.n <= p.n {
                return bad(format!("stage {i}: indices must increase"));
            }
            if e.m < p.m {
                return bad(format!("stage {i}: m must be nondecreasing"));
            }
        }
    }
    Ok(())
}

/// Restricts `action` to tail-aligned samples and composes every generator with `c`
/// random transpositions inside depth-`(m-k)` cylinders.
///
/// Randomness for generator position `g` at index `n` comes from
/// [`rng::stream`]`(seed, n, g)`. Stable letter inverses get the inverse permutation.
pub fn perturb_from_action(
    group: &Group,
    action: &CylinderAction,
    schedule: &[ScheduleEntry],
    seed: u64,
) -> Result<AlmostAction<CantorPoint>, AlmostError> {
    validate_schedule(schedule, action.depth(), action.total_depth())?;
    let gens = group.generators();
    let levels: Vec<Result<Level<CantorPoint>, AlmostError>> = schedule
        .par_iter()
        .map(|e| {
            let sample = action.equivariant_sample(e.m, e.n)?;
            let honest = action.restrict_table(group, &sample)?;
            let len = sample.len();
            let block = 1usize << e.k;
            let mut support = BTreeMap::new();
            for (gi, &s) in gens.iter().enumerate() {
                let mut p = honest.symbol_perm(s).clone();
                let mut r = rng::stream(seed, e.n as u64, gi as u64);
                for _ in 0..e.c {
                    let i = r.gen_range(0..len);
                    if block > 1 {
                        let base = i & !(block - 1);
                        let mut j = base + r.gen_range(0..block - 1);
                        if j >= i {
                            j += 1;
                        }
                        p = Perm::transposition(len, i, j).compose(&p);
                    }
                }
                if let Symbol::Stable { letter, .. } = s {
                    let inv = Symbol::Stable {
                        letter,
                        inverse: true,
                    };
                    support.insert(Word::single(inv), p.inverse());
                }
                support.insert(Word::single(s), p);
            }
            Level::new(group, sample, support)
        })
        .collect();
    AlmostAction::new(levels.into_iter().collect::<Result<Vec<_>, _>>()?)
}

/// Outcome of [`is_perturbation_of`] at one index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelMatch<D> {
    pub n: usize,
    /// `phi[i]` is the position in the second sample matched to point `i` of the first.
    pub phi: Perm,
    pub displacement: D,
    pub intertwining: D,
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbationVerdict<D> {
    pub matched: bool,
    pub levels: Vec<LevelMatch<D>>,
}

/// Matches samples greedily and compares dynamics through the matching.
///
/// All pairs are sorted by `(distance, lower point, higher point)` and taken while both
/// ends are free, so swapping the arguments inverts the matching. An index is
/// matched when the displacement `max d(φ(e), e)` and the intertwining defect
/// `max d(φ(α(γ)e), α'(γ)φ(e))` over common support words are strictly below its tolerance.
pub fn is_perturbation_of<P: MetricPoint>(
    alpha: &AlmostAction<P>,
    beta: &AlmostAction<P>,
    tolerances: &[P::Distance],
) -> Result<PerturbationVerdict<P::Distance>, AlmostError> {
    if alpha.indices() != beta.indices() || tolerances.len() != alpha.levels.len() {
        return Err(AlmostError::ScheduleMismatch);
    }
    let mut levels = Vec::new();
    for ((la, lb), &tol) in alpha.levels.iter().zip(&beta.levels).zip(tolerances) {
        let (pa, pb) = (la.sample.points(), lb.sample.points());
        if pa.len() != pb.len() {
            return Err(AlmostError::SizeMismatch {
                n: la.n,
                left: pa.len(),
                right: pb.len(),
            });
        }
        let mut pairs: Vec<(P::Distance, &P, &P, usize, usize)> = Vec::with_capacity(pa.len() * pb.len());
        for (i, x) in pa.iter().enumerate() {
            for (j, y) in pb.iter().enumerate() {
                x.compatible(y)?;
                let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
                pairs.push((x.distance_unchecked(y), lo, hi, i, j));
            }
        }
        pairs.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
        let mut phi = vec![u32::MAX; pa.len()];
        let mut taken = vec![false; pb.len()];
        for &(_, _, _, i, j) in &pairs {
            if phi[i] == u32::MAX && !taken[j] {
                phi[i] = j as u32;
                taken[j] = true;
            }
        }
        let phi = Perm::from_images(phi).expect("complete matching");
        let displacement = (0..pa.len())
            .map(|i| pa[i].distance_unchecked(&pb[phi.apply(i)]))
            .max()
            .unwrap_or_else(P::Distance::zero);
        let mut intertwining = P::Distance::zero();
        for (w, a) in &la.support {
            if let Some(b) = lb.support.get(w) {
                for i in 0..pa.len() {
                    let d = pb[phi.apply(a.apply(i))].distance_unchecked(&pb[b.apply(phi.apply(i))]);
                    intertwining = intertwining.max(d);
                }
            }
        }
        levels.push(LevelMatch {
            n: la.n,
            phi,
            displacement,
            intertwining,
            matched: displacement < tol && intertwining < tol,
        });
    }
    Ok(PerturbationVerdict {
        matched: levels.iter().all(|l| l.matched),
        levels,
    })
}

/// Result of [`uniformize_by_tree`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Uniformized<P> {
    /// Support = tree words of the ball.
    pub beta: AlmostAction<P>,
    /// Generator defects on both sides; maxima are sups over the ball only.
    pub defects: DefectReport,
}

/// `β(γ) = α(f_m)∘…∘α(f_1)` along the tree word `w_γ = f_m … f_1` of every ball vertex.
pub fn uniformize_by_tree<P: MetricPoint, O: WordOracle>(
    group: &Group,
    alpha: &AlmostAction<P>,
    ball: &CayleyBall<O::Key>,
    oracle: &O,
) -> Result<Uniformized<P>, AlmostError> {
    let gens = group.symmetric_generators();
    let gen_vertex: Vec<Option<usize>> = gens
        .iter()
        .map(|&s| ball.locate(oracle, &Word::single(s)))
        .collect::<Result<_, _>>()?;
    // right neighbours need the oracle; compute once for all levels
    let mut right: Vec<(usize, usize, usize)> = Vec::new();
    for u in 0..ball.len() {
        for (gi, &s) in gens.iter().enumerate() {
            if let Some(v) = ball.locate(oracle, &ball.word(u).concat(&Word::single(s)))? {
                right.push((u, gi, v));
            }
        }
    }
    let mut levels = Vec::new();
    let mut rows = Vec::new();
    for lvl in &alpha.levels {
        let mut beta: Vec<Perm> = Vec::with_capacity(ball.len());
        beta.push(Perm::identity(lvl.sample.len()));
        for v in 1..ball.len() {
            let (p, s) = ball.parent(v).expect("non-root vertex");
            let step = lvl.get_symbol(group, s)?;
            beta.push(step.compose(&beta[p]));
        }
        for e in ball.edges() {
            let gi = gens.iter().position(|&g| g == e.symbol).expect("edge symbol is a generator");
            let Some(fv) = gen_vertex[gi] else { continue };
            let v = lvl.max_distance(|i| beta[fv].apply(beta[e.source].apply(i)), |i| beta[e.target].apply(i));
            rows.push((
                DefectRow {
                    n: lvl.n,
                    kind: DefectKind::LeftGenerator,
                    gamma: group.format_word(ball.word(e.source)),
                    delta: Some(group.symbol_name(e.symbol)),
                    value: v.to_string(),
                },
                v,
            ));
        }
        for &(u, gi, v) in &right {
            let Some(fv) = gen_vertex[gi] else { continue };
            let d = lvl.max_distance(|i| beta[u].apply(beta[fv].apply(i)), |i| beta[v].apply(i));
            rows.push((
                DefectRow {
                    n: lvl.n,
                    kind: DefectKind::RightGenerator,
                    gamma: group.format_word(ball.word(u)),
                    delta: Some(group.symbol_name(gens[gi])),
                    value: d.to_string(),
                },
                d,
            ));
        }
        let support = ball.words().iter().cloned().zip(beta).collect();
        levels.push(Level::from_raw(lvl.sample.clone(), support));
    }
    Ok(Uniformized {
        beta: AlmostAction::new(levels)?,
        defects: DefectReport::from_rows(rows),
    })
}

/// The family `x_γ = α(w_γ)(e_0)` over a ball, and the largest generator-step error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoOrbit<P: MetricPoint> {
    pub points: Vec<P>,
    pub epsilon: P::Distance,
}

pub fn pseudo_orbit<P: MetricPoint, K: Clone + Eq + std::hash::Hash>(
    group: &Group,
    level: &Level<P>,
    ball: &CayleyBall<K>,
    base: usize,
) -> Result<PseudoOrbit<P>, AlmostError> {
    let pts = level.sample.points();
    let mut idx = vec![base; ball.len()];
    for v in 1..ball.len() {
        let (p, s) = ball.parent(v).expect("non-root vertex");
        idx[v] = level.get_symbol(group, s)?.apply(idx[p]);
    }
    let mut epsilon = P::Distance::zero();
    for e in ball.edges() {
        let step = level.get_symbol(group, e.symbol)?.apply(idx[e.source]);
        epsilon = epsilon.max(pts[step].distance_unchecked(&pts[idx[e.target]]));
    }
    Ok(PseudoOrbit {
        points: idx.into_iter().map(|i| pts[i].clone()).collect(),
        epsilon,
    })
}

/// Candidate anchors for [`trace_orbit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchors {
    /// Points whose bits after the first `m` are zero.
    ZeroTail(u32),
    /// Every point of `{0,1}^D` (only for `D <= 24`).
    All,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TracedOrbit {
    pub anchor: CantorPoint,
    pub points: Vec<CantorPoint>,
    pub max_distance: Dyadic,
}

/// The first anchor in canonical order whose honest orbit stays within `delta`
/// (strictly) of the pseudo-orbit at every ball vertex.
pub fn trace_orbit<K: Clone + Eq + std::hash::Hash>(
    action: &CylinderAction,
    ball: &CayleyBall<K>,
    pseudo: &[CantorPoint],
    delta: Dyadic,
    anchors: Anchors,
) -> Result<Option<TracedOrbit>, AlmostError> {
    assert_eq!(pseudo.len(), ball.len());
    let total = action.total_depth();
    let candidates: Box<dyn Iterator<Item = CantorPoint>> = match anchors {
        Anchors::ZeroTail(m) => Box::new(crate::cantor::tail_aligned_sample(m, total, 0)?.points().to_vec().into_iter()),
        Anchors::All => Box::new(CantorPoint::all(total)?),
    };
    for y in candidates {
        let mut pts = Vec::with_capacity(ball.len());
        let mut worst = Dyadic::ZERO;
        for (v, x) in pseudo.iter().enumerate() {
            let yv = action.act_unchecked(ball.word(v), &y);
            worst = worst.max(x.distance_unchecked(&yv));
            if worst >= delta {
                break;
            }
            pts.push(yv);
        }
        if worst < delta {
            return Ok(Some(TracedOrbit {
                anchor: y,
                points: pts,
                max_distance: worst,
            }));
        }
    }
    Ok(None)
}

/// A finite group acting on displaced orbits in the circle.
///
/// The orbits of `base` under `elements` form `E^0`; each point `x` is moved to
/// `x + displace(x)`, and `α(γ)` sends the displaced `x` to the displaced `γ·x`. The
/// result is an exact action on the displaced sample, close to the honest one when
/// displacements are small. `elements` must list every group element.
pub fn displaced_orbit_action(
    group: &Group,
    action: &CircleAction,
    elements: &[Word],
    base: &[CirclePoint],
    displace: impl Fn(&CirclePoint) -> Ratio<i64>,
    n: usize,
) -> Result<Level<CirclePoint>, AlmostError> {
    let mut orbit: Vec<CirclePoint> = Vec::new();
    for b in base {
        for w in elements {
            orbit.push(action.act_point(group, w, b)?);
        }
    }
    orbit.sort();
    orbit.dedup();
    let moved: Vec<CirclePoint> = orbit
        .iter()
        .map(|x| CirclePoint::wrap(x.position() + displace(x)))
        .collect();
    let sample = FiniteSample::new(n, moved.clone())?;
    let pos_of_orbit = |x: &CirclePoint| -> usize {
        let k = orbit.binary_search(x).expect("orbit is closed");
        sample.position(&moved[k]).expect("displaced point in sample")
    };
    let mut support = BTreeMap::new();
    for w in elements {
        let mut images = vec![0u32; orbit.len()];
        for x in &orbit {
            let y = action.act_point(group, w, x)?;
            images[pos_of_orbit(x)] = pos_of_orbit(&y) as u32;
        }
        support.insert(w.clone(), Perm::from_images(images).expect("orbit permutation"));
    }
    Level::new(group, sample, support)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cayley::ReducedWordOracle;
    use crate::group::presets::*;

    fn swap_action(g: &Group, total: u32) -> CylinderAction {
        let mut given = BTreeMap::new();
        given.insert(g.generators()[0], Perm::from_images(vec![1, 0]).unwrap());
        CylinderAction::new(g, 1, total, &given).unwrap()
    }

    #[test]
    fn honest_restriction_has_zero_defects() {
        let g = cyclic(2);
        let a = swap_action(&g, 6);
        let sched = [ScheduleEntry { n: 1, m: 3, k: 1, c: 0 }];
        let alpha = perturb_from_action(&g, &a, &sched, 1).unwrap();
        let rep = defect_report(&g, &alpha, Some(&a)).unwrap();
        assert!(rep.rows.iter().all(|r| r.value == "0"));
    }

    #[test]
    fn single_transposition_defect() {
        let g = cyclic(2);
        let a = swap_action(&g, 6);
        let sample = a.equivariant_sample(3, 0).unwrap();
        let honest = a.restrict_to_sample(&g, &g.parse_word("a.1").unwrap(), &sample).unwrap();
        // points 000000 and 001000 are at distance 2^-2
        let p = Perm::transposition(8, 0, 1).compose(&honest);
        let mut support = BTreeMap::new();
        support.insert(g.parse_word("a.1").unwrap(), p);
        let lvl = Level::new(&g, sample, support).unwrap();
        let a1 = g.parse_word("a.1").unwrap();
        assert_eq!(lvl.approximation_defect(&g, &a, &a1).unwrap(), Dyadic::pow(2));
        assert_eq!(lvl.multiplicative_defect(&g, &a1, &Word::identity()).unwrap(), Dyadic::ZERO);
    }

    #[test]
    fn schedule_validation() {
        let g = cyclic(2);
        let a = swap_action(&g, 6);
        let bad = [ScheduleEntry { n: 1, m: 3, k: 4, c: 1 }];
        assert!(perturb_from_action(&g, &a, &bad, 0).is_err());
        let bad = [ScheduleEntry { n: 2, m: 3, k: 1, c: 1 }, ScheduleEntry { n: 1, m: 4, k: 1, c: 1 }];
        assert!(perturb_from_action(&g, &a, &bad, 0).is_err());
    }

    #[test]
    fn uniformization_of_integers_is_powers() {
        let z = integers();
        let mut given = BTreeMap::new();
        given.insert(Symbol::stable(0), Perm::from_images(vec![1, 2, 3, 0]).unwrap());
        let a = CylinderAction::new(&z, 2, 6, &given).unwrap();
        let sched = [ScheduleEntry { n: 1, m: 4, k: 2, c: 3 }];
        let alpha = perturb_from_action(&z, &a, &sched, 9).unwrap();
        let oracle = ReducedWordOracle::new(&z).unwrap();
        let ball = CayleyBall::build(&z, &oracle, 3).unwrap();
        let u = uniformize_by_tree(&z, &alpha, &ball, &oracle).unwrap();
        let lvl = &alpha.levels()[0];
        let t = lvl.get(&z, &z.parse_word("t").unwrap()).unwrap();
        let b = &u.beta.levels()[0];
        assert_eq!(b.support()[&z.parse_word("t t t").unwrap()], t.pow(3));
        for r in u.defects.rows.iter().filter(|r| r.kind == DefectKind::LeftGenerator) {
            assert_eq!(r.value, "0");
        }
    }
}
