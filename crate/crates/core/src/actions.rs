//! Honest actions: prefix substitutions on the Cantor model, affine maps of the circle,
//! and the permutation tables both are built from.

use std::collections::{BTreeMap, HashMap};

use num_rational::Ratio;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::cantor::{tail_aligned_sample, CantorPoint, CirclePoint, FiniteSample, ModelError};
use crate::cayley::WordOracle;
use crate::group::{Group, GroupError, Relation, Symbol, Word};
use crate::perm::Perm;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no permutation given for generator {0}")]
    MissingGenerator(String),
    #[error("permutation for {symbol} has degree {got}, expected {expected}")]
    WrongDegree {
        symbol: String,
        got: usize,
        expected: usize,
    },
    #[error("assignments for leaf {leaf} do not extend to a homomorphism (conflict at {element})")]
    NotAHomomorphism { leaf: String, element: String },
    #[error("{} relation(s) violated, first: {first}", count)]
    RelationsViolated { count: usize, first: String },
    #[error("sample depth {sample} is below the action depth {action}")]
    SampleTooCoarse { sample: u32, action: u32 },
    #[error("point {0} leaves the sample under the action")]
    LeavesSample(String),
    #[error("action depth {depth} exceeds working depth {total}")]
    DepthTooLarge { depth: u32, total: u32 },
}

/// Permutations for every leaf element and stable letter of a group, all of one degree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermTable {
    degree: usize,
    leaves: Vec<Vec<Perm>>,
    stables: Vec<Perm>,
    stable_inverses: Vec<Perm>,
}

impl PermTable {
    /// Takes full element tables; checks degrees only.
    pub fn new(
        group: &Group,
        degree: usize,
        leaves: Vec<Vec<Perm>>,
        stables: Vec<Perm>,
    ) -> Result<Self, ActionError> {
        if leaves.len() != group.leaves().len() || stables.len() != group.stables().len() {
            return Err(ActionError::MissingGenerator("table shape".into()));
        }
        for (l, perms) in leaves.iter().enumerate() {
            if perms.len() != group.leaf(l).table.order() {
                return Err(ActionError::MissingGenerator(group.leaf(l).name.clone()));
            }
            for (e, p) in perms.iter().enumerate() {
                if p.len() != degree {
                    return Err(ActionError::WrongDegree {
                        symbol: format!("{}.{}", group.leaf(l).name, group.leaf(l).table.element_name(e)),
                        got: p.len(),
                        expected: degree,
                    });
                }
            }
        }
        for (t, p) in stables.iter().enumerate() {
            if p.len() != degree {
                return Err(ActionError::WrongDegree {
                    symbol: group.stables()[t].name.clone(),
                    got: p.len(),
                    expected: degree,
                });
            }
        }
        let stable_inverses = stables.iter().map(Perm::inverse).collect();
        Ok(PermTable {
            degree,
            leaves,
            stables,
            stable_inverses,
        })
    }

    /// Builds the table from permutations for some symbols, closing each leaf under
    /// multiplication. Every stable letter must be given.
    pub fn from_partial(
        group: &Group,
        degree: usize,
        given: &BTreeMap<Symbol, Perm>,
    ) -> Result<Self, ActionError> {
        for (&s, p) in given {
            group.check_symbol(s)?;
            if p.len() != degree {
                return Err(ActionError::WrongDegree {
                    symbol: group.symbol_name(s),
                    got: p.len(),
                    expected: degree,
                });
            }
        }
        let mut leaves = Vec::new();
        for (l, leaf) in group.leaves().iter().enumerate() {
            let t = &leaf.table;
            let mut known: Vec<Option<Perm>> = vec![None; t.order()];
            known[t.identity()] = Some(Perm::identity(degree));
            for (&s, p) in given {
                if let Symbol::Leaf { leaf: gl, elem } = s {
                    if gl as usize == l {
                        known[elem as usize] = Some(p.clone());
                    }
                }
            }
            let conflict = |e: usize| ActionError::NotAHomomorphism {
                leaf: leaf.name.clone(),
                element: t.element_name(e).to_string(),
            };
            loop {
                let mut changed = false;
                for a in 0..t.order() {
                    for b in 0..t.order() {
                        let (Some(pa), Some(pb)) = (&known[a], &known[b]) else {
                            continue;
                        };
                        let ab = t.mul(a, b);
                        let prod = pa.compose(pb);
                        match &known[ab] {
                            Some(q) if *q != prod => return Err(conflict(ab)),
                            Some(_) => {}
                            None => {
                                known[ab] = Some(prod);
                                changed = true;
                            }
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            let perms = known
                .into_iter()
                .enumerate()
                .map(|(e, p)| {
                    p.ok_or_else(|| {
                        ActionError::MissingGenerator(format!("{}.{}", leaf.name, t.element_name(e)))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            leaves.push(perms);
        }
        let stables = group
            .stables()
            .iter()
            .enumerate()
            .map(|(t, st)| {
                given
                    .get(&Symbol::stable(t))
                    .cloned()
                    .ok_or_else(|| ActionError::MissingGenerator(st.name.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(group, degree, leaves, stables)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn leaf_perms(&self, leaf: usize) -> &[Perm] {
        &self.leaves[leaf]
    }

    pub fn stable_perm(&self, letter: usize) -> &Perm {
        &self.stables[letter]
    }

    pub fn symbol_perm(&self, s: Symbol) -> &Perm {
        match s {
            Symbol::Leaf { leaf, elem } => &self.leaves[leaf as usize][elem as usize],
            Symbol::Stable { letter, inverse } => {
                if inverse {
                    &self.stable_inverses[letter as usize]
                } else {
                    &self.stables[letter as usize]
                }
            }
        }
    }

    /// Applies a word to one index, last letter first.
    pub fn apply_word(&self, w: &Word, mut i: usize) -> usize {
        for &s in w.letters().iter().rev() {
            i = self.symbol_perm(s).apply(i);
        }
        i
    }

    /// The permutation of a word; assumes the word's symbols belong to the group.
    pub fn eval(&self, w: &Word) -> Perm {
        let images = (0..self.degree).map(|i| self.apply_word(w, i) as u32).collect();
        Perm::from_images(images).expect("a product of permutations is a permutation")
    }

    /// Relations whose two sides evaluate to different permutations.
    pub fn violated_relations(&self, group: &Group) -> Vec<Relation> {
        group
            .relations()
            .into_iter()
            .filter(|r| self.eval(&r.lhs) != self.eval(&r.rhs))
            .collect()
    }

    pub fn verify(&self, group: &Group) -> Result<(), ActionError> {
        let bad = self.violated_relations(group);
        match bad.first() {
            None => Ok(()),
            Some(r) => Err(ActionError::RelationsViolated {
                count: bad.len(),
                first: format!("{} ~ {}", group.format_word(&r.lhs), group.format_word(&r.rhs)),
            }),
        }
    }

    /// One entry per symbol of [`Group::generators`].
    pub fn generator_perms(&self, group: &Group) -> Vec<(Symbol, Perm)> {
        group
            .generators()
            .into_iter()
            .map(|s| (s, self.symbol_perm(s).clone()))
            .collect()
    }
}

/// An action on `{0,1}^D` permuting depth-`d` prefixes and keeping tails.
///
/// Prefix substitutions are homeomorphisms and preserve the uniform measure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CylinderAction {
    depth: u32,
    total_depth: u32,
    table: PermTable,
}

impl CylinderAction {
    /// Builds and verifies an action from generator permutations of the `2^depth` prefixes.
    /// Leaf elements that are not given are derived by closure.
    pub fn new(
        group: &Group,
        depth: u32,
        total_depth: u32,
        given: &BTreeMap<Symbol, Perm>,
    ) -> Result<Self, ActionError> {
        let a = Self::new_unverified(group, depth, total_depth, given)?;
        a.table.verify(group)?;
        Ok(a)
    }

    /// As [`CylinderAction::new`] without the relation check.
    pub fn new_unverified(
        group: &Group,
        depth: u32,
        total_depth: u32,
        given: &BTreeMap<Symbol, Perm>,
    ) -> Result<Self, ActionError> {
        crate::cantor::depth_partition(depth, total_depth)?;
        let table = PermTable::from_partial(group, 1usize << depth, given)?;
        Ok(CylinderAction {
            depth,
            total_depth,
            table,
        })
    }

    pub fn from_table(table: PermTable, depth: u32, total_depth: u32) -> Result<Self, ActionError> {
        crate::cantor::depth_partition(depth, total_depth)?;
        if table.degree() != 1usize << depth {
            return Err(ActionError::WrongDegree {
                symbol: "table".into(),
                got: table.degree(),
                expected: 1usize << depth,
            });
        }
        Ok(CylinderAction {
            depth,
            total_depth,
            table,
        })
    }

    /// The identity action.
    pub fn trivial(group: &Group, depth: u32, total_depth: u32) -> Result<Self, ActionError> {
        let n = 1usize << depth;
        let mut given = BTreeMap::new();
        for s in group.generators() {
            given.insert(s, Perm::identity(n));
        }
        Self::new(group, depth, total_depth, &given)
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn total_depth(&self) -> u32 {
        self.total_depth
    }

    pub fn table(&self) -> &PermTable {
        &self.table
    }

    pub fn prefix_perm(&self, w: &Word) -> Perm {
        self.table.eval(w)
    }

    pub fn act(&self, group: &Group, w: &Word, x: &CantorPoint) -> Result<CantorPoint, ActionError> {
        group.check_word(w)?;
        if x.depth() != self.total_depth {
            return Err(ModelError::DepthMismatch(x.depth(), self.total_depth).into());
        }
        Ok(self.act_unchecked(w, x))
    }

    pub fn act_unchecked(&self, w: &Word, x: &CantorPoint) -> CantorPoint {
        let p = self.table.apply_word(w, x.prefix(self.depth) as usize);
        x.with_prefix(self.depth, p as u64)
    }

    pub fn act_symbol(&self, s: Symbol, x: &CantorPoint) -> CantorPoint {
        let p = self.table.symbol_perm(s).apply(x.prefix(self.depth) as usize);
        x.with_prefix(self.depth, p as u64)
    }

    /// Image of the depth-`c` cylinder with prefix `cell` (`c >= depth`), as a prefix.
    pub fn cell_image(&self, w: &Word, c: u32, cell: u64) -> u64 {
        debug_assert!(c >= self.depth);
        let shift = c - self.depth;
        let top = (cell >> shift) as usize;
        let low = cell & ((1u64 << shift) - 1);
        ((self.table.apply_word(w, top) as u64) << shift) | low
    }

    pub fn verify(&self, group: &Group) -> Result<(), ActionError> {
        self.table.verify(group)
    }

    /// The same action written as a substitution of depth-`c` prefixes, `c >= depth`.
    pub fn refine(&self, c: u32) -> Result<CylinderAction, ActionError> {
        crate::cantor::depth_partition(c, self.total_depth)?;
        if c < self.depth {
            return Err(ActionError::SampleTooCoarse { sample: c, action: self.depth });
        }
        let shift = c - self.depth;
        let lift = |p: &Perm| {
            let imgs = (0..1u64 << c)
                .map(|cell| (((p.apply((cell >> shift) as usize) as u64) << shift) | (cell & ((1 << shift) - 1))) as u32)
                .collect();
            Perm::from_images(imgs).expect("lifted prefix permutation")
        };
        let leaves = self.table.leaves.iter().map(|ps| ps.iter().map(lift).collect()).collect();
        let stables: Vec<Perm> = self.table.stables.iter().map(lift).collect();
        let stable_inverses = stables.iter().map(Perm::inverse).collect();
        Ok(CylinderAction {
            depth: c,
            total_depth: self.total_depth,
            table: PermTable {
                degree: 1 << c,
                leaves,
                stables,
                stable_inverses,
            },
        })
    }

    /// The permutation induced on a sample that the action maps onto itself.
    pub fn restrict_to_sample(
        &self,
        group: &Group,
        w: &Word,
        sample: &FiniteSample<CantorPoint>,
    ) -> Result<Perm, ActionError> {
        group.check_word(w)?;
        let images = sample
            .points()
            .iter()
            .map(|x| {
                let y = self.act_unchecked(w, x);
                sample
                    .position(&y)
                    .map(|i| i as u32)
                    .ok_or_else(|| ActionError::LeavesSample(x.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Perm::from_images(images).expect("restriction of a bijection"))
    }

    /// Restrictions of every leaf element and stable letter to a sample.
    pub fn restrict_table(
        &self,
        group: &Group,
        sample: &FiniteSample<CantorPoint>,
    ) -> Result<PermTable, ActionError> {
        let mut leaves = Vec::new();
        for (l, leaf) in group.leaves().iter().enumerate() {
            let words = group.leaf_element_words(l);
            let perms = (0..leaf.table.order())
                .map(|e| self.restrict_to_sample(group, &words[&e], sample))
                .collect::<Result<Vec<_>, _>>()?;
            leaves.push(perms);
        }
        let stables = (0..group.stables().len())
            .map(|t| self.restrict_to_sample(group, &Word::single(Symbol::stable(t)), sample))
            .collect::<Result<Vec<_>, _>>()?;
        PermTable::new(group, sample.len(), leaves, stables)
    }

    /// The tail-aligned sample at depth `m`, which every prefix substitution of depth
    /// at most `m` maps onto itself.
    pub fn equivariant_sample(
        &self,
        m: u32,
        index: usize,
    ) -> Result<FiniteSample<CantorPoint>, ActionError> {
        if m < self.depth {
            return Err(ActionError::SampleTooCoarse {
                sample: m,
                action: self.depth,
            });
        }
        Ok(tail_aligned_sample(m, self.total_depth, index)?)
    }

    /// For every generator and every cylinder of depth `k <= D`, counts the image points
    /// and compares with `2^(D-k)`. Exhaustive, so limited to `D <= 16`.
    pub fn check_measure_preservation(&self, group: &Group) -> Result<bool, ActionError> {
        let d = self.total_depth;
        if d > 16 {
            return Err(ModelError::DepthOutOfRange { depth: d, max: 16 }.into());
        }
        let points: Vec<CantorPoint> = CantorPoint::all(d)?.collect();
        for s in group.symmetric_generators() {
            let images: Vec<CantorPoint> = points.iter().map(|x| self.act_symbol(s, x)).collect();
            for k in 0..=d {
                let mut counts: HashMap<u64, std::collections::HashSet<u64>> = HashMap::new();
                for (x, y) in points.iter().zip(&images) {
                    counts.entry(x.prefix(k)).or_default().insert(y.bits());
                }
                if counts.values().any(|set| set.len() != 1usize << (d - k)) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// Something that moves points of a model by group words.
pub trait PointAction<P> {
    fn act_point(&self, group: &Group, w: &Word, x: &P) -> Result<P, ActionError>;
}

impl PointAction<CantorPoint> for CylinderAction {
    fn act_point(&self, group: &Group, w: &Word, x: &CantorPoint) -> Result<CantorPoint, ActionError> {
        self.act(group, w, x)
    }
}

/// Word equality through the prefix permutations of an action. Faithful only up to
/// the action's kernel.
pub struct PermutationOracle<'a> {
    action: &'a CylinderAction,
    group: &'a Group,
}

impl<'a> PermutationOracle<'a> {
    pub fn new(group: &'a Group, action: &'a CylinderAction) -> Self {
        PermutationOracle { action, group }
    }
}

impl WordOracle for PermutationOracle<'_> {
    type Key = Perm;

    fn key(&self, w: &Word) -> Result<Perm, GroupError> {
        self.group.check_word(w)?;
        Ok(self.action.prefix_perm(w))
    }
}

/// `x ↦ sign·x + offset (mod 1)` on the circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AffineCircleMap {
    pub reflect: bool,
    pub offset: Ratio<i64>,
}

impl AffineCircleMap {
    pub fn identity() -> Self {
        AffineCircleMap {
            reflect: false,
            offset: Ratio::zero(),
        }
    }

    pub fn rotation(offset: Ratio<i64>) -> Self {
        AffineCircleMap {
            reflect: false,
            offset,
        }
    }

    pub fn apply(&self, x: &CirclePoint) -> CirclePoint {
        let p = if self.reflect { -x.position() } else { x.position() };
        CirclePoint::wrap(p + self.offset)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &AffineCircleMap) -> AffineCircleMap {
        let o = if self.reflect { -other.offset } else { other.offset };
        AffineCircleMap {
            reflect: self.reflect != other.reflect,
            offset: wrap_unit(o + self.offset),
        }
    }

    pub fn inverse(&self) -> AffineCircleMap {
        if self.reflect {
            *self
        } else {
            AffineCircleMap::rotation(wrap_unit(-self.offset))
        }
    }
}

fn wrap_unit(x: Ratio<i64>) -> Ratio<i64> {
    let f = x - x.floor();
    if f >= Ratio::one() {
        f - Ratio::one()
    } else {
        f
    }
}

/// An isometric action on the circle, one affine map per leaf element and stable letter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CircleAction {
    leaves: Vec<Vec<AffineCircleMap>>,
    stables: Vec<AffineCircleMap>,
}

impl CircleAction {
    /// Closes the given generator maps under each leaf table and verifies the relations.
    pub fn new(group: &Group, given: &BTreeMap<Symbol, AffineCircleMap>) -> Result<Self, ActionError> {
        let mut leaves = Vec::new();
        for (l, leaf) in group.leaves().iter().enumerate() {
            let t = &leaf.table;
            let mut known: Vec<Option<AffineCircleMap>> = vec![None; t.order()];
            known[t.identity()] = Some(AffineCircleMap::identity());
            for (&s, m) in given {
                if let Symbol::Leaf { leaf: gl, elem } = s {
                    group.check_symbol(s)?;
                    if gl as usize == l {
                        known[elem as usize] = Some(AffineCircleMap {
                            reflect: m.reflect,
                            offset: wrap_unit(m.offset),
                        });
                    }
                }
            }
            loop {
                let mut changed = false;
                for a in 0..t.order() {
                    for b in 0..t.order() {
                        let (Some(ma), Some(mb)) = (known[a], known[b]) else {
                            continue;
                        };
                        let ab = t.mul(a, b);
                        let prod = ma.compose(&mb);
                        match known[ab] {
                            Some(q) if q != prod => {
                                return Err(ActionError::NotAHomomorphism {
                                    leaf: leaf.name.clone(),
                                    element: t.element_name(ab).to_string(),
                                })
                            }
                            Some(_) => {}
                            None => {
                                known[ab] = Some(prod);
                                changed = true;
                            }
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            leaves.push(
                known
                    .into_iter()
                    .enumerate()
                    .map(|(e, m)| {
                        m.ok_or_else(|| {
                            ActionError::MissingGenerator(format!("{}.{}", leaf.name, t.element_name(e)))
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            );
        }
        let stables = group
            .stables()
            .iter()
            .enumerate()
            .map(|(t, st)| {
                given
                    .get(&Symbol::stable(t))
                    .copied()
                    .ok_or_else(|| ActionError::MissingGenerator(st.name.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let a = CircleAction { leaves, stables };
        let bad: Vec<_> = group
            .relations()
            .into_iter()
            .filter(|r| a.eval(&r.lhs) != a.eval(&r.rhs))
            .collect();
        if let Some(r) = bad.first() {
            return Err(ActionError::RelationsViolated {
                count: bad.len(),
                first: format!("{} ~ {}", group.format_word(&r.lhs), group.format_word(&r.rhs)),
            });
        }
        Ok(a)
    }

    /// `Z/n` acting by rotation through `1/n`, on a single-leaf group.
    pub fn cyclic_rotation(group: &Group, n: i64) -> Result<Self, ActionError> {
        let mut given = BTreeMap::new();
        given.insert(Symbol::leaf(0, 1), AffineCircleMap::rotation(Ratio::new(1, n)));
        Self::new(group, &given)
    }

    fn symbol_map(&self, s: Symbol) -> AffineCircleMap {
        match s {
            Symbol::Leaf { leaf, elem } => self.leaves[leaf as usize][elem as usize],
            Symbol::Stable { letter, inverse } => {
                let m = self.stables[letter as usize];
                if inverse {
                    m.inverse()
                } else {
                    m
                }
            }
        }
    }

    pub fn eval(&self, w: &Word) -> AffineCircleMap {
        w.letters()
            .iter()
            .fold(AffineCircleMap::identity(), |acc, &s| acc.compose(&self.symbol_map(s)))
    }
}

impl PointAction<CirclePoint> for CircleAction {
    fn act_point(&self, group: &Group, w: &Word, x: &CirclePoint) -> Result<CirclePoint, ActionError> {
        group.check_word(w)?;
        Ok(self.eval(w).apply(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::presets::*;

    fn perm(v: &[u32]) -> Perm {
        Perm::from_images(v.to_vec()).unwrap()
    }

    fn swap_action(g: &Group, total: u32) -> CylinderAction {
        let mut given = BTreeMap::new();
        given.insert(g.generators()[0], perm(&[1, 0]));
        CylinderAction::new(g, 1, total, &given).unwrap()
    }

    #[test]
    fn identity_assignment_passes() {
        for g in [cyclic(3), infinite_dihedral(), tower(), z4_amalgam_z2()] {
            assert!(CylinderAction::trivial(&g, 2, 6).is_ok());
        }
    }

    #[test]
    fn three_cycle_fails_involution() {
        let g = cyclic(2);
        let mut given = BTreeMap::new();
        given.insert(Symbol::leaf(0, 1), perm(&[1, 2, 0, 3]));
        let table = PermTable::new(&g, 4, vec![vec![Perm::identity(4), given[&Symbol::leaf(0, 1)].clone()]], vec![]).unwrap();
        let a = CylinderAction::from_table(table, 2, 4).unwrap();
        let bad = a.table().violated_relations(&g);
        assert_eq!(bad.len(), 1);
        assert_eq!(g.format_word(&bad[0].lhs), "a.1 a.1");
        assert!(CylinderAction::new(&g, 2, 4, &given).is_err());
    }

    #[test]
    fn integers_accept_any_permutation() {
        let z = integers();
        let mut given = BTreeMap::new();
        given.insert(Symbol::stable(0), perm(&[2, 0, 3, 1]));
        assert!(CylinderAction::new(&z, 2, 5, &given).is_ok());
    }

    #[test]
    fn swap_acts_on_first_bit() {
        let g = cyclic(2);
        let a = swap_action(&g, 4);
        let w = g.parse_word("a.1").unwrap();
        let x: CantorPoint = "0110".parse().unwrap();
        assert_eq!(a.act(&g, &w, &x).unwrap().to_string(), "1110");
        assert_eq!(a.act(&g, &Word::identity(), &x).unwrap(), x);
    }

    #[test]
    fn restriction_of_swap_is_a_transposition() {
        let g = cyclic(2);
        let a = swap_action(&g, 3);
        let e = a.equivariant_sample(1, 0).unwrap();
        let p = a.restrict_to_sample(&g, &g.parse_word("a.1").unwrap(), &e).unwrap();
        assert_eq!(p, perm(&[1, 0]));
        assert!(a.restrict_to_sample(&g, &Word::identity(), &e).unwrap().is_identity());
        assert!(a.equivariant_sample(0, 0).is_err());
    }

    #[test]
    fn leaf_closure_derives_powers() {
        let g = cyclic(3);
        let mut given = BTreeMap::new();
        given.insert(Symbol::leaf(0, 1), perm(&[1, 2, 0, 3]));
        let a = CylinderAction::new(&g, 2, 4, &given).unwrap();
        assert_eq!(a.table().leaf_perms(0)[2], perm(&[2, 0, 1, 3]));
    }

    #[test]
    fn measure_preserved_by_prefix_maps() {
        let g = free_product(2, 3);
        let mut given = BTreeMap::new();
        given.insert(Symbol::leaf(0, 1), perm(&[1, 0, 3, 2]));
        given.insert(Symbol::leaf(1, 1), perm(&[1, 2, 0, 3]));
        let a = CylinderAction::new(&g, 2, 6, &given).unwrap();
        assert!(a.check_measure_preservation(&g).unwrap());
    }

    #[test]
    fn circle_rotation_and_reflection() {
        let g = cyclic(3);
        let a = CircleAction::cyclic_rotation(&g, 3).unwrap();
        let x = CirclePoint::from_fraction(1, 2).unwrap();
        let w = g.parse_word("a.2").unwrap();
        assert_eq!(a.act_point(&g, &w, &x).unwrap(), CirclePoint::from_fraction(1, 6).unwrap());
        // a rotation by 1/4 is not an action of Z/3
        let mut given = BTreeMap::new();
        given.insert(Symbol::leaf(0, 1), AffineCircleMap::rotation(Ratio::new(1, 4)));
        assert!(CircleAction::new(&g, &given).is_err());
        let d = infinite_dihedral();
        let mut given = BTreeMap::new();
        given.insert(
            Symbol::leaf(0, 1),
            AffineCircleMap {
                reflect: true,
                offset: Ratio::zero(),
            },
        );
        given.insert(
            Symbol::leaf(1, 1),
            AffineCircleMap {
                reflect: true,
                offset: Ratio::new(1, 5),
            },
        );
        assert!(CircleAction::new(&d, &given).is_ok());
    }
}
