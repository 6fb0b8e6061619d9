//! Balls in the Cayley graph, identified through a word-equality oracle.

use std::collections::{HashMap, VecDeque};
use std::hash::Hash;

use crate::group::{Group, GroupError, Symbol, Word};

/// Decides equality of group elements by mapping words to comparable keys.
pub trait WordOracle {
    type Key: Clone + Eq + Hash;

    fn key(&self, w: &Word) -> Result<Self::Key, GroupError>;
}

/// Free reduction and leaf contraction.
///
/// A normal form only when every amalgamated and HNN subgroup is trivial; the
/// checked constructor refuses other groups.
#[derive(Debug, Clone)]
pub struct ReducedWordOracle<'g> {
    group: &'g Group,
}

impl<'g> ReducedWordOracle<'g> {
    pub fn new(group: &'g Group) -> Result<Self, GroupError> {
        if group.has_trivial_edges() {
            Ok(ReducedWordOracle { group })
        } else {
            Err(GroupError::OracleNotExact)
        }
    }

    /// Accepts any group; distinct keys may then denote the same element.
    pub fn new_unchecked(group: &'g Group) -> Self {
        ReducedWordOracle { group }
    }
}

impl WordOracle for ReducedWordOracle<'_> {
    type Key = Word;

    fn key(&self, w: &Word) -> Result<Word, GroupError> {
        self.group.reduce(w)
    }
}

/// An edge `target = symbol · source` inside the ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BallEdge {
    pub source: usize,
    pub symbol: Symbol,
    pub target: usize,
}

/// The ball of radius `R` around the identity, with its breadth-first spanning tree.
///
/// Vertex 0 is the identity. The tree word of a vertex is its parent's tree word with
/// the edge symbol prepended, so tree words extend by one letter on the left.
#[derive(Debug, Clone)]
pub struct CayleyBall<K> {
    radius: usize,
    words: Vec<Word>,
    depths: Vec<usize>,
    parents: Vec<Option<(usize, Symbol)>>,
    edges: Vec<BallEdge>,
    index: HashMap<K, usize>,
}

impl<K: Clone + Eq + Hash> CayleyBall<K> {
    /// Breadth-first search over [`Group::symmetric_generators`], followed by the
    /// consistency checks: every relation has equal keys on both sides, and no edge
    /// joins vertices whose depths differ by more than one.
    pub fn build<O: WordOracle<Key = K>>(
        group: &Group,
        oracle: &O,
        radius: usize,
    ) -> Result<Self, GroupError> {
        for rel in group.relations() {
            if oracle.key(&rel.lhs)? != oracle.key(&rel.rhs)? {
                return Err(GroupError::OracleInconsistent(format!(
                    "relation {} ~ {} separated by the oracle",
                    group.format_word(&rel.lhs),
                    group.format_word(&rel.rhs)
                )));
            }
        }
        let gens = group.symmetric_generators();
        let mut ball = CayleyBall {
            radius,
            words: vec![Word::identity()],
            depths: vec![0],
            parents: vec![None],
            edges: Vec::new(),
            index: HashMap::new(),
        };
        ball.index.insert(oracle.key(&Word::identity())?, 0);
        let mut queue = VecDeque::from([0usize]);
        while let Some(u) = queue.pop_front() {
            if ball.depths[u] >= radius {
                continue;
            }
            for &s in &gens {
                let w = Word::single(s).concat(&ball.words[u]);
                let k = oracle.key(&w)?;
                if !ball.index.contains_key(&k) {
                    let v = ball.words.len();
                    ball.index.insert(k, v);
                    ball.words.push(w);
                    ball.depths.push(ball.depths[u] + 1);
                    ball.parents.push(Some((u, s)));
                    queue.push_back(v);
                }
            }
        }
        for u in 0..ball.words.len() {
            for &s in &gens {
                let w = Word::single(s).concat(&ball.words[u]);
                if let Some(&v) = ball.index.get(&oracle.key(&w)?) {
                    if ball.depths[u].abs_diff(ball.depths[v]) > 1 {
                        return Err(GroupError::OracleInconsistent(format!(
                            "edge {} -> {} joins depths {} and {}",
                            group.format_word(&ball.words[u]),
                            group.format_word(&ball.words[v]),
                            ball.depths[u],
                            ball.depths[v]
                        )));
                    }
                    ball.edges.push(BallEdge {
                        source: u,
                        symbol: s,
                        target: v,
                    });
                }
            }
        }
        Ok(ball)
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Tree geodesic words, indexed by vertex.
    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn word(&self, v: usize) -> &Word {
        &self.words[v]
    }

    pub fn depth(&self, v: usize) -> usize {
        self.depths[v]
    }

    /// Parent vertex and the symbol with `word(v) = symbol · word(parent)`.
    pub fn parent(&self, v: usize) -> Option<(usize, Symbol)> {
        self.parents[v]
    }

    /// All generator edges with both ends in the ball.
    pub fn edges(&self) -> &[BallEdge] {
        &self.edges
    }

    pub fn is_tree_edge(&self, e: &BallEdge) -> bool {
        self.parents[e.target] == Some((e.source, e.symbol))
    }

    /// Vertex of the element represented by `w`, if it lies in the ball.
    pub fn locate<O: WordOracle<Key = K>>(
        &self,
        oracle: &O,
        w: &Word,
    ) -> Result<Option<usize>, GroupError> {
        Ok(self.index.get(&oracle.key(w)?).copied())
    }
}

/// Distinct reduced words of length at most `radius`, grown by left multiplication
/// from the identity; for groups with nontrivial edges two of them may be equal in the
/// group.
pub fn reduced_words_up_to(group: &Group, radius: usize) -> Result<Vec<Word>, GroupError> {
    let gens = group.symmetric_generators();
    let mut seen = std::collections::BTreeSet::from([Word::identity()]);
    let mut out = vec![Word::identity()];
    let mut frontier = vec![Word::identity()];
    for _ in 0..radius {
        let mut next = Vec::new();
        for w in &frontier {
            for &s in &gens {
                let v = group.reduce(&Word::single(s).concat(w))?;
                if v.len() <= radius && seen.insert(v.clone()) {
                    out.push(v.clone());
                    next.push(v);
                }
            }
        }
        frontier = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::presets::*;

    fn ball(g: &Group, r: usize) -> CayleyBall<Word> {
        CayleyBall::build(g, &ReducedWordOracle::new(g).unwrap(), r).unwrap()
    }

    #[test]
    fn integers_ball_is_a_path() {
        let z = integers();
        let b = ball(&z, 2);
        assert_eq!(b.len(), 5);
        let names: Vec<_> = b.words().iter().map(|w| z.format_word(w)).collect();
        assert!(names.contains(&"t t".to_string()));
        assert!(names.contains(&"t^-1 t^-1".to_string()));
        // path graph: 4 undirected edges, each seen in both directions
        assert_eq!(b.edges().len(), 8);
    }

    #[test]
    fn finite_leaf_ball() {
        let g = cyclic(2);
        assert_eq!(ball(&g, 3).len(), 2);
    }

    #[test]
    fn dihedral_ball_radius_two() {
        let g = infinite_dihedral();
        let b = ball(&g, 2);
        let mut names: Vec<_> = b.words().iter().map(|w| g.format_word(w)).collect();
        names.sort();
        assert_eq!(names, ["a.1", "a.1 b.1", "b.1", "b.1 a.1", "e"]);
    }

    #[test]
    fn closed_form_sizes() {
        let z = integers();
        let f2 = free_group_2();
        for r in 1..=4 {
            assert_eq!(ball(&z, r).len(), 2 * r + 1);
            assert_eq!(ball(&f2, r).len(), 2 * 3usize.pow(r as u32) - 1);
        }
    }

    #[test]
    fn tree_words_extend_parent_on_the_left() {
        let g = free_product(2, 3);
        let b = ball(&g, 3);
        for v in 1..b.len() {
            let (p, s) = b.parent(v).unwrap();
            assert_eq!(b.word(v), &Word::single(s).concat(b.word(p)));
            assert_eq!(b.depth(v), b.depth(p) + 1);
        }
    }

    #[test]
    fn reduced_words_match_ball() {
        let g = free_group_2();
        assert_eq!(reduced_words_up_to(&g, 3).unwrap().len(), ball(&g, 3).len());
        let h = z4_amalgam_z2();
        assert!(reduced_words_up_to(&h, 2).unwrap().len() > 1);
    }

    #[test]
    fn unchecked_oracle_required_for_nontrivial_edges() {
        assert!(ReducedWordOracle::new(&z4_amalgam_z2()).is_err());
        let g = z4_amalgam_z2();
        let err = CayleyBall::build(&g, &ReducedWordOracle::new_unchecked(&g), 2);
        assert!(matches!(err, Err(GroupError::OracleInconsistent(_))));
    }
}
