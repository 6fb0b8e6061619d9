//! Finitely generated virtually free groups given by structure trees.
//!
//! A [`GroupSpec`] is a tree whose leaves are finite groups (full multiplication
//! tables), whose binary nodes amalgamate a new finite factor over a finite
//! subgroup, and whose unary nodes are HNN extensions over an isomorphism of
//! finite subgroups. [`Group`] is the validated, indexed form used everywhere
//! else: words are sequences of [`Symbol`]s referring to leaf elements and
//! stable letters by index.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroupError {
    #[error("group table {name}: {reason}")]
    BadTable { name: String, reason: String },
    #[error("unknown builtin group {0:?}")]
    UnknownBuiltin(String),
    #[error("unknown leaf {0:?}")]
    UnknownLeaf(String),
    #[error("unknown element {element:?} of {group}")]
    UnknownElement { group: String, element: String },
    #[error("embedding {from} -> {into}: {reason}")]
    BadEmbedding {
        from: String,
        into: String,
        reason: String,
    },
    #[error("duplicate name {0:?}")]
    DuplicateName(String),
    #[error("invalid name {0:?}")]
    BadName(String),
    #[error("unknown symbol {0:?}")]
    UnknownSymbol(String),
    #[error("word contains a symbol foreign to this group: {0:?}")]
    ForeignSymbol(Symbol),
    #[error("oracle inconsistency: {0}")]
    OracleInconsistent(String),
    #[error("the reduced-word oracle is only exact for free products of finite groups and free groups")]
    OracleNotExact,
}

/// A finite group given by its full multiplication table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteGroupTable {
    name: String,
    elements: Vec<String>,
    mult: Vec<Vec<usize>>,
    identity: usize,
    inv: Vec<usize>,
}

impl FiniteGroupTable {
    /// Validates closure, associativity, identity and inverses.
    pub fn new(
        name: impl Into<String>,
        elements: Vec<String>,
        mult: Vec<Vec<usize>>,
    ) -> Result<Self, GroupError> {
        let name = name.into();
        let bad = |reason: String| GroupError::BadTable {
            name: name.clone(),
            reason,
        };
        let n = elements.len();
        if n == 0 {
            return Err(bad("empty group".into()));
        }
        let mut names = elements.clone();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(bad("duplicate element names".into()));
        }
        if elements.iter().any(|e| e.is_empty() || e.contains(char::is_whitespace)) {
            return Err(bad("element names must be nonempty without whitespace".into()));
        }
        if mult.len() != n || mult.iter().any(|r| r.len() != n || r.iter().any(|&x| x >= n)) {
            return Err(bad("table is not n x n over 0..n".into()));
        }
        let identity = (0..n)
            .find(|&e| (0..n).all(|x| mult[e][x] == x && mult[x][e] == x))
            .ok_or_else(|| bad("no identity".into()))?;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if mult[mult[a][b]][c] != mult[a][mult[b][c]] {
                        return Err(bad(format!("not associative at ({a},{b},{c})")));
                    }
                }
            }
        }
        let mut inv = vec![0; n];
        for (a, slot) in inv.iter_mut().enumerate() {
            *slot = (0..n)
                .find(|&b| mult[a][b] == identity && mult[b][a] == identity)
                .ok_or_else(|| bad(format!("element {a} has no inverse")))?;
        }
        Ok(FiniteGroupTable {
            name,
            elements,
            mult,
            identity,
            inv,
        })
    }

    pub fn trivial() -> Self {
        Self::cyclic(1)
    }

    /// `Z/n`, elements named `0..n`.
    pub fn cyclic(n: usize) -> Self {
        assert!(n >= 1);
        let elements = (0..n).map(|i| i.to_string()).collect();
        let mult = (0..n).map(|a| (0..n).map(|b| (a + b) % n).collect()).collect();
        FiniteGroupTable::new(format!("Z/{n}"), elements, mult).expect("cyclic table is valid")
    }

    /// `Sym(k)` on `0..k`, elements named by their one-line images, composing as functions.
    pub fn symmetric(k: usize) -> Self {
        assert!((1..=6).contains(&k), "Sym(k) supported for 1 <= k <= 6");
        let mut perms: Vec<Vec<usize>> = vec![(0..k).collect()];
        // lexicographic enumeration keeps the identity first
        let mut cur: Vec<usize> = (0..k).collect();
        while next_permutation(&mut cur) {
            perms.push(cur.clone());
        }
        let index: HashMap<Vec<usize>, usize> =
            perms.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
        let mult = perms
            .iter()
            .map(|a| {
                perms
                    .iter()
                    .map(|b| index[&b.iter().map(|&x| a[x]).collect::<Vec<_>>()])
                    .collect()
            })
            .collect();
        let elements = perms
            .iter()
            .map(|p| p.iter().map(|d| d.to_string()).collect::<String>())
            .collect();
        FiniteGroupTable::new(format!("Sym({k})"), elements, mult).expect("symmetric table is valid")
    }

    /// Parses `Z/n`, `Sym(k)`, `S_k`, or `1`/`trivial`.
    pub fn builtin(name: &str) -> Result<Self, GroupError> {
        let s = name.trim();
        let unknown = || GroupError::UnknownBuiltin(name.to_string());
        if s == "1" || s == "trivial" {
            return Ok(Self::trivial());
        }
        if let Some(n) = s.strip_prefix("Z/") {
            let n: usize = n.parse().map_err(|_| unknown())?;
            if n == 0 || n > 64 {
                return Err(unknown());
            }
            return Ok(Self::cyclic(n));
        }
        let k = s
            .strip_prefix("Sym(")
            .and_then(|r| r.strip_suffix(')'))
            .or_else(|| s.strip_prefix("S_"));
        if let Some(k) = k {
            let k: usize = k.parse().map_err(|_| unknown())?;
            if !(1..=6).contains(&k) {
                return Err(unknown());
            }
            return Ok(Self::symmetric(k));
        }
        Err(unknown())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn identity(&self) -> usize {
        self.identity
    }

    #[inline]
    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.mult[a][b]
    }

    #[inline]
    pub fn inv(&self, a: usize) -> usize {
        self.inv[a]
    }

    pub fn elements(&self) -> &[String] {
        &self.elements
    }

    pub fn element_name(&self, a: usize) -> &str {
        &self.elements[a]
    }

    pub fn element_index(&self, name: &str) -> Result<usize, GroupError> {
        self.elements
            .iter()
            .position(|e| e == name)
            .ok_or_else(|| GroupError::UnknownElement {
                group: self.name.clone(),
                element: name.to_string(),
            })
    }

    pub fn table(&self) -> &[Vec<usize>] {
        &self.mult
    }

    pub fn non_identity(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.order()).filter(move |&a| a != self.identity)
    }

    /// Checks that `image` is an injective homomorphism from `self` into `target`.
    pub fn check_embedding(&self, target: &FiniteGroupTable, image: &[usize]) -> Result<(), String> {
        if image.len() != self.order() {
            return Err(format!("image has {} entries, expected {}", image.len(), self.order()));
        }
        if image.iter().any(|&x| x >= target.order()) {
            return Err("image element out of range".into());
        }
        let mut sorted = image.to_vec();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err("not injective".into());
        }
        for a in 0..self.order() {
            for b in 0..self.order() {
                if image[self.mul(a, b)] != target.mul(image[a], image[b]) {
                    return Err(format!("not a homomorphism at ({a},{b})"));
                }
            }
        }
        Ok(())
    }
}

fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// A named finite vertex group of the structure tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafGroup {
    pub name: String,
    pub table: FiniteGroupTable,
}

impl LeafGroup {
    pub fn new(name: impl Into<String>, table: FiniteGroupTable) -> Self {
        LeafGroup {
            name: name.into(),
            table,
        }
    }
}

/// An injective homomorphism from `source` into the leaf named `target_leaf`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubgroupEmbedding {
    pub source: FiniteGroupTable,
    pub target_leaf: String,
    pub image: Vec<usize>,
}

/// Structure tree of a virtually free group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroupSpec {
    Leaf(LeafGroup),
    /// `left *_Δ right`, with `Δ` the shared source of both embeddings.
    Amalgam {
        left: Box<GroupSpec>,
        right: LeafGroup,
        delta_left: SubgroupEmbedding,
        delta_right: SubgroupEmbedding,
    },
    /// HNN extension of `base` with `t f t^-1 = iso(f)` for `f` in the source subgroup.
    Hnn {
        base: Box<GroupSpec>,
        stable_letter: String,
        phi_source: SubgroupEmbedding,
        phi_target: SubgroupEmbedding,
        /// Maps elements of `phi_source.source` to elements of `phi_target.source`.
        iso: Vec<usize>,
    },
}

impl GroupSpec {
    pub fn leaf(name: &str, table: FiniteGroupTable) -> Self {
        GroupSpec::Leaf(LeafGroup::new(name, table))
    }

    /// Free product `left * right` over the trivial group.
    pub fn free_product(left: GroupSpec, right: LeafGroup) -> Self {
        let first = left.first_leaf_name().to_string();
        GroupSpec::Amalgam {
            left: Box::new(left),
            delta_left: SubgroupEmbedding {
                source: FiniteGroupTable::trivial(),
                target_leaf: first,
                image: vec![right.table.identity()],
            },
            delta_right: SubgroupEmbedding {
                source: FiniteGroupTable::trivial(),
                target_leaf: right.name.clone(),
                image: vec![right.table.identity()],
            },
            right,
        }
    }

    /// HNN extension over the trivial subgroup: adds a free generator.
    pub fn free_letter(base: GroupSpec, stable_letter: &str) -> Self {
        let first = base.first_leaf_name().to_string();
        let id = |spec: &GroupSpec| spec.first_leaf().table.identity();
        let trivial = SubgroupEmbedding {
            source: FiniteGroupTable::trivial(),
            target_leaf: first,
            image: vec![id(&base)],
        };
        GroupSpec::Hnn {
            phi_source: trivial.clone(),
            phi_target: trivial,
            base: Box::new(base),
            stable_letter: stable_letter.to_string(),
            iso: vec![0],
        }
    }

    fn first_leaf(&self) -> &LeafGroup {
        match self {
            GroupSpec::Leaf(l) => l,
            GroupSpec::Amalgam { left, .. } => left.first_leaf(),
            GroupSpec::Hnn { base, .. } => base.first_leaf(),
        }
    }

    fn first_leaf_name(&self) -> &str {
        &self.first_leaf().name
    }
}

/// One letter of a word: a non-identity element of a leaf group, or a stable letter
/// or its inverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    Leaf { leaf: u16, elem: u16 },
    Stable { letter: u16, inverse: bool },
}

impl Symbol {
    pub fn stable(letter: usize) -> Self {
        Symbol::Stable {
            letter: letter as u16,
            inverse: false,
        }
    }

    pub fn leaf(leaf: usize, elem: usize) -> Self {
        Symbol::Leaf {
            leaf: leaf as u16,
            elem: elem as u16,
        }
    }
}

/// A word over the generator alphabet. Letters are read as a composition: the last
/// letter acts first.
///
/// Ordered shortlex, which is the canonical order used in reports.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Word(Vec<Symbol>);

impl Word {
    pub fn identity() -> Self {
        Word(Vec::new())
    }

    pub fn single(s: Symbol) -> Self {
        Word(vec![s])
    }

    /// Wraps the letters without reduction.
    pub fn from_symbols(symbols: Vec<Symbol>) -> Self {
        Word(symbols)
    }

    pub fn letters(&self) -> &[Symbol] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Unreduced concatenation.
    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationKind {
    /// A multiplication-table entry of a leaf.
    LeafTable { leaf: usize },
    /// Identification of the amalgamated subgroup in the two factors.
    Amalgam { edge: usize },
    /// `t f t^-1 = phi(f)`.
    Hnn { letter: usize },
}

/// A pair of words that must act identically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub lhs: Word,
    pub rhs: Word,
    pub kind: RelationKind,
}

pub type RelationSet = Vec<Relation>;

/// Flattened data of one HNN node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StableLetter {
    pub name: String,
    pub source_leaf: usize,
    pub target_leaf: usize,
    /// `(f, phi(f))` for every element of the source subgroup, as leaf element indices.
    pub pairs: Vec<(usize, usize)>,
}

/// Flattened data of one amalgam node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmalgamEdge {
    pub left_leaf: usize,
    pub right_leaf: usize,
    /// `(delta_left(x), delta_right(x))` for every element of the amalgamated subgroup.
    pub pairs: Vec<(usize, usize)>,
}

/// A validated structure tree with indexed leaves, stable letters and amalgam edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    spec: GroupSpec,
    leaves: Vec<LeafGroup>,
    stables: Vec<StableLetter>,
    amalgams: Vec<AmalgamEdge>,
}

impl Group {
    pub fn new(spec: GroupSpec) -> Result<Self, GroupError> {
        let mut g = Group {
            spec: spec.clone(),
            leaves: Vec::new(),
            stables: Vec::new(),
            amalgams: Vec::new(),
        };
        g.collect(&spec)?;
        let mut names: Vec<&str> = g.leaves.iter().map(|l| l.name.as_str()).collect();
        names.extend(g.stables.iter().map(|s| s.name.as_str()));
        let mut sorted = names.clone();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(GroupError::DuplicateName(w[0].to_string()));
        }
        for n in names {
            if !valid_name(n) || n == "e" {
                return Err(GroupError::BadName(n.to_string()));
            }
        }
        Ok(g)
    }

    fn collect(&mut self, spec: &GroupSpec) -> Result<(), GroupError> {
        match spec {
            GroupSpec::Leaf(l) => {
                self.leaves.push(l.clone());
            }
            GroupSpec::Amalgam {
                left,
                right,
                delta_left,
                delta_right,
            } => {
                self.collect(left)?;
                self.leaves.push(right.clone());
                if delta_left.source != delta_right.source {
                    return Err(GroupError::BadEmbedding {
                        from: delta_left.source.name.clone(),
                        into: right.name.clone(),
                        reason: "amalgam embeddings must share the same source table".into(),
                    });
                }
                if delta_right.target_leaf != right.name {
                    return Err(GroupError::BadEmbedding {
                        from: delta_right.source.name.clone(),
                        into: delta_right.target_leaf.clone(),
                        reason: format!("right embedding must target the new factor {}", right.name),
                    });
                }
                let right_idx = self.leaves.len() - 1;
                let left_idx = self.checked_embedding(delta_left, right_idx)?;
                self.checked_embedding(delta_right, right_idx + 1)?;
                let pairs = (0..delta_left.source.order())
                    .map(|x| (delta_left.image[x], delta_right.image[x]))
                    .collect();
                self.amalgams.push(AmalgamEdge {
                    left_leaf: left_idx,
                    right_leaf: right_idx,
                    pairs,
                });
            }
            GroupSpec::Hnn {
                base,
                stable_letter,
                phi_source,
                phi_target,
                iso,
            } => {
                self.collect(base)?;
                let n = self.leaves.len();
                let src = self.checked_embedding(phi_source, n)?;
                let tgt = self.checked_embedding(phi_target, n)?;
                phi_source
                    .source
                    .check_embedding(&phi_target.source, iso)
                    .and_then(|_| {
                        (phi_source.source.order() == phi_target.source.order())
                            .then_some(())
                            .ok_or_else(|| "subgroup orders differ".to_string())
                    })
                    .map_err(|reason| GroupError::BadEmbedding {
                        from: phi_source.source.name.clone(),
                        into: phi_target.source.name.clone(),
                        reason: format!("iso is not an isomorphism: {reason}"),
                    })?;
                let pairs = (0..phi_source.source.order())
                    .map(|f| (phi_source.image[f], phi_target.image[iso[f]]))
                    .collect();
                self.stables.push(StableLetter {
                    name: stable_letter.clone(),
                    source_leaf: src,
                    target_leaf: tgt,
                    pairs,
                });
            }
        }
        Ok(())
    }

    /// Validates an embedding into one of the first `available` leaves and returns its index.
    fn checked_embedding(
        &self,
        emb: &SubgroupEmbedding,
        available: usize,
    ) -> Result<usize, GroupError> {
        let idx = self.leaves[..available]
            .iter()
            .position(|l| l.name == emb.target_leaf)
            .ok_or_else(|| GroupError::UnknownLeaf(emb.target_leaf.clone()))?;
        emb.source
            .check_embedding(&self.leaves[idx].table, &emb.image)
            .map_err(|reason| GroupError::BadEmbedding {
                from: emb.source.name.clone(),
                into: emb.target_leaf.clone(),
                reason,
            })?;
        Ok(idx)
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn leaves(&self) -> &[LeafGroup] {
        &self.leaves
    }

    pub fn leaf(&self, i: usize) -> &LeafGroup {
        &self.leaves[i]
    }

    pub fn leaf_index(&self, name: &str) -> Result<usize, GroupError> {
        self.leaves
            .iter()
            .position(|l| l.name == name)
            .ok_or_else(|| GroupError::UnknownLeaf(name.to_string()))
    }

    pub fn stables(&self) -> &[StableLetter] {
        &self.stables
    }

    pub fn stable_index(&self, name: &str) -> Option<usize> {
        self.stables.iter().position(|s| s.name == name)
    }

    pub fn amalgams(&self) -> &[AmalgamEdge] {
        &self.amalgams
    }

    /// The amalgam edge whose new factor is `leaf`; `None` for the first leaf.
    pub fn amalgam_into(&self, leaf: usize) -> Option<&AmalgamEdge> {
        self.amalgams.iter().find(|a| a.right_leaf == leaf)
    }

    /// True when every amalgamated and every HNN subgroup is trivial, so the group is a
    /// free product of its leaves and a free group, and reduced words are normal forms.
    pub fn has_trivial_edges(&self) -> bool {
        self.amalgams.iter().all(|a| a.pairs.len() == 1) && self.stables.iter().all(|s| s.pairs.len() == 1)
    }

    /// Whether a symbol refers to an existing leaf element or stable letter.
    pub fn check_symbol(&self, s: Symbol) -> Result<(), GroupError> {
        let ok = match s {
            Symbol::Leaf { leaf, elem } => self.leaves.get(leaf as usize).is_some_and(|l| {
                (elem as usize) < l.table.order() && elem as usize != l.table.identity()
            }),
            Symbol::Stable { letter, .. } => (letter as usize) < self.stables.len(),
        };
        if ok {
            Ok(())
        } else {
            Err(GroupError::ForeignSymbol(s))
        }
    }

    pub fn check_word(&self, w: &Word) -> Result<(), GroupError> {
        w.letters().iter().try_for_each(|&s| self.check_symbol(s))
    }

    /// One symbol per non-identity leaf element (leaf order), then one per stable letter.
    pub fn generators(&self) -> Vec<Symbol> {
        let mut out = Vec::new();
        for (i, l) in self.leaves.iter().enumerate() {
            out.extend(l.table.non_identity().map(|e| Symbol::leaf(i, e)));
        }
        out.extend((0..self.stables.len()).map(Symbol::stable));
        out
    }

    /// [`Group::generators`] plus the inverses of the stable letters.
    pub fn symmetric_generators(&self) -> Vec<Symbol> {
        let mut out = self.generators();
        out.extend((0..self.stables.len()).map(|t| Symbol::Stable {
            letter: t as u16,
            inverse: true,
        }));
        out
    }

    pub fn inverse_symbol(&self, s: Symbol) -> Symbol {
        match s {
            Symbol::Leaf { leaf, elem } => {
                Symbol::leaf(leaf as usize, self.leaves[leaf as usize].table.inv(elem as usize))
            }
            Symbol::Stable { letter, inverse } => Symbol::Stable {
                letter,
                inverse: !inverse,
            },
        }
    }

    fn leaf_word(&self, leaf: usize, elem: usize) -> Word {
        if elem == self.leaves[leaf].table.identity() {
            Word::identity()
        } else {
            Word::single(Symbol::leaf(leaf, elem))
        }
    }

    /// Leaf tables, amalgam identifications and HNN conjugation relations.
    pub fn relations(&self) -> RelationSet {
        let mut rels = Vec::new();
        for (i, l) in self.leaves.iter().enumerate() {
            let t = &l.table;
            for a in t.non_identity() {
                for b in t.non_identity() {
                    rels.push(Relation {
                        lhs: Word(vec![Symbol::leaf(i, a), Symbol::leaf(i, b)]),
                        rhs: self.leaf_word(i, t.mul(a, b)),
                        kind: RelationKind::LeafTable { leaf: i },
                    });
                }
            }
        }
        for (k, e) in self.amalgams.iter().enumerate() {
            for &(x, y) in &e.pairs {
                if x == self.leaves[e.left_leaf].table.identity() {
                    continue;
                }
                rels.push(Relation {
                    lhs: self.leaf_word(e.left_leaf, x),
                    rhs: self.leaf_word(e.right_leaf, y),
                    kind: RelationKind::Amalgam { edge: k },
                });
            }
        }
        for (k, s) in self.stables.iter().enumerate() {
            for &(f, g) in &s.pairs {
                if f == self.leaves[s.source_leaf].table.identity() {
                    continue;
                }
                rels.push(Relation {
                    lhs: Word(vec![
                        Symbol::stable(k),
                        Symbol::leaf(s.source_leaf, f),
                        Symbol::Stable {
                            letter: k as u16,
                            inverse: true,
                        },
                    ]),
                    rhs: self.leaf_word(s.target_leaf, g),
                    kind: RelationKind::Hnn { letter: k },
                });
            }
        }
        rels
    }

    /// Free reduction of stable letters and contraction of adjacent letters of the same leaf.
    pub fn reduce(&self, w: &Word) -> Result<Word, GroupError> {
        let mut out: Vec<Symbol> = Vec::with_capacity(w.len());
        for &s in w.letters() {
            self.check_symbol(s)?;
            let mut s = Some(s);
            while let Some(cur) = s.take() {
                match (out.last().copied(), cur) {
                    (
                        Some(Symbol::Leaf { leaf: l1, elem: e1 }),
                        Symbol::Leaf { leaf: l2, elem: e2 },
                    ) if l1 == l2 => {
                        out.pop();
                        let t = &self.leaves[l1 as usize].table;
                        let p = t.mul(e1 as usize, e2 as usize);
                        if p != t.identity() {
                            s = Some(Symbol::leaf(l1 as usize, p));
                        }
                    }
                    (
                        Some(Symbol::Stable {
                            letter: a,
                            inverse: i,
                        }),
                        Symbol::Stable {
                            letter: b,
                            inverse: j,
                        },
                    ) if a == b && i != j => {
                        out.pop();
                    }
                    _ => out.push(cur),
                }
            }
        }
        Ok(Word(out))
    }

    pub fn multiply(&self, u: &Word, v: &Word) -> Result<Word, GroupError> {
        self.reduce(&u.concat(v))
    }

    pub fn invert(&self, u: &Word) -> Result<Word, GroupError> {
        self.check_word(u)?;
        Ok(Word(
            u.letters().iter().rev().map(|&s| self.inverse_symbol(s)).collect(),
        ))
    }

    pub fn symbol_name(&self, s: Symbol) -> String {
        match s {
            Symbol::Leaf { leaf, elem } => {
                let l = &self.leaves[leaf as usize];
                format!("{}.{}", l.name, l.table.element_name(elem as usize))
            }
            Symbol::Stable { letter, inverse } => {
                let n = &self.stables[letter as usize].name;
                if inverse {
                    format!("{n}^-1")
                } else {
                    n.clone()
                }
            }
        }
    }

    /// Space-separated symbol names; the identity word prints as `e`.
    pub fn format_word(&self, w: &Word) -> String {
        if w.is_empty() {
            return "e".to_string();
        }
        w.letters()
            .iter()
            .map(|&s| self.symbol_name(s))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn parse_symbol(&self, tok: &str) -> Result<Symbol, GroupError> {
        if let Some((leaf, elem)) = tok.split_once('.') {
            let li = self.leaf_index(leaf)?;
            let ei = self.leaves[li].table.element_index(elem)?;
            if ei == self.leaves[li].table.identity() {
                return Err(GroupError::UnknownSymbol(tok.to_string()));
            }
            return Ok(Symbol::leaf(li, ei));
        }
        let (name, inverse) = match tok.strip_suffix("^-1") {
            Some(n) => (n, true),
            None => (tok, false),
        };
        let letter = self
            .stable_index(name)
            .ok_or_else(|| GroupError::UnknownSymbol(tok.to_string()))?;
        Ok(Symbol::Stable {
            letter: letter as u16,
            inverse,
        })
    }

    /// Parses the output of [`Group::format_word`]; `e` or the empty string is the identity.
    pub fn parse_word(&self, s: &str) -> Result<Word, GroupError> {
        let s = s.trim();
        if s.is_empty() || s == "e" {
            return Ok(Word::identity());
        }
        s.split_whitespace()
            .map(|t| self.parse_symbol(t))
            .collect::<Result<Vec<_>, _>>()
            .map(Word)
    }

    /// Words for all elements of a leaf, keyed by element index (identity included).
    pub fn leaf_element_words(&self, leaf: usize) -> BTreeMap<usize, Word> {
        let t = &self.leaves[leaf].table;
        (0..t.order()).map(|e| (e, self.leaf_word(leaf, e))).collect()
    }

    /// For a single-leaf group, the leaf element a word reduces to.
    pub fn as_leaf_element(&self, w: &Word) -> Result<Option<(usize, usize)>, GroupError> {
        let r = self.reduce(w)?;
        Ok(match r.letters() {
            [] => None,
            [Symbol::Leaf { leaf, elem }] => Some((*leaf as usize, *elem as usize)),
            _ => None,
        })
    }
}

fn valid_name(n: &str) -> bool {
    !n.is_empty()
        && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !n.starts_with(|c: char| c.is_ascii_digit())
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(spec: &GroupSpec, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match spec {
                GroupSpec::Leaf(l) => write!(f, "{}", l.table.name()),
                GroupSpec::Amalgam {
                    left,
                    right,
                    delta_left,
                    ..
                } => {
                    write!(f, "(")?;
                    go(left, f)?;
                    if delta_left.source.order() == 1 {
                        write!(f, " * {})", right.table.name())
                    } else {
                        write!(f, " *_{} {})", delta_left.source.name(), right.table.name())
                    }
                }
                GroupSpec::Hnn {
                    base,
                    stable_letter,
                    phi_source,
                    ..
                } => {
                    write!(f, "HNN(")?;
                    go(base, f)?;
                    write!(f, ", {stable_letter} over {})", phi_source.source.name())
                }
            }
        }
        go(&self.spec, f)
    }
}

/// Commonly used groups, named as in the configuration format.
pub mod presets {
    use super::*;

    pub fn cyclic(n: usize) -> Group {
        Group::new(GroupSpec::leaf("a", FiniteGroupTable::cyclic(n))).unwrap()
    }

    /// `Z` as an HNN extension of the trivial group.
    pub fn integers() -> Group {
        let base = GroupSpec::leaf("o", FiniteGroupTable::trivial());
        Group::new(GroupSpec::free_letter(base, "t")).unwrap()
    }

    /// The free group on `t`, `s`.
    pub fn free_group_2() -> Group {
        let base = GroupSpec::leaf("o", FiniteGroupTable::trivial());
        let spec = GroupSpec::free_letter(GroupSpec::free_letter(base, "t"), "s");
        Group::new(spec).unwrap()
    }

    /// `Z/m * Z/n`.
    pub fn free_product(m: usize, n: usize) -> Group {
        let spec = GroupSpec::free_product(
            GroupSpec::leaf("a", FiniteGroupTable::cyclic(m)),
            LeafGroup::new("b", FiniteGroupTable::cyclic(n)),
        );
        Group::new(spec).unwrap()
    }

    /// The infinite dihedral group `Z/2 * Z/2`.
    pub fn infinite_dihedral() -> Group {
        free_product(2, 2)
    }

    /// `Z/4 *_{Z/2} Z/4`, identifying the squares of the two generators.
    pub fn z4_amalgam_z2() -> Group {
        let z2 = FiniteGroupTable::cyclic(2);
        let spec = GroupSpec::Amalgam {
            left: Box::new(GroupSpec::leaf("a", FiniteGroupTable::cyclic(4))),
            right: LeafGroup::new("b", FiniteGroupTable::cyclic(4)),
            delta_left: SubgroupEmbedding {
                source: z2.clone(),
                target_leaf: "a".into(),
                image: vec![0, 2],
            },
            delta_right: SubgroupEmbedding {
                source: z2,
                target_leaf: "b".into(),
                image: vec![0, 2],
            },
        };
        Group::new(spec).unwrap()
    }

    /// `HNN(Z/2 * Z/2, t)` with `t a t^-1 = b`: an amalgam followed by an HNN layer over `Z/2`.
    pub fn tower() -> Group {
        let z2 = FiniteGroupTable::cyclic(2);
        let base = GroupSpec::free_product(
            GroupSpec::leaf("a", z2.clone()),
            LeafGroup::new("b", z2.clone()),
        );
        let spec = GroupSpec::Hnn {
            base: Box::new(base),
            stable_letter: "t".into(),
            phi_source: SubgroupEmbedding {
                source: z2.clone(),
                target_leaf: "a".into(),
                image: vec![0, 1],
            },
            phi_target: SubgroupEmbedding {
                source: z2,
                target_leaf: "b".into(),
                image: vec![0, 1],
            },
            iso: vec![0, 1],
        };
        Group::new(spec).unwrap()
    }

    /// `HNN(Z/2, t)` with `t a t^-1 = a`, i.e. `Z/2 x Z`.
    pub fn z2_hnn_identity() -> Group {
        let z2 = FiniteGroupTable::cyclic(2);
        let emb = SubgroupEmbedding {
            source: z2.clone(),
            target_leaf: "a".into(),
            image: vec![0, 1],
        };
        let spec = GroupSpec::Hnn {
            base: Box::new(GroupSpec::leaf("a", z2)),
            stable_letter: "t".into(),
            phi_source: emb.clone(),
            phi_target: emb,
            iso: vec![0, 1],
        };
        Group::new(spec).unwrap()
    }
}
