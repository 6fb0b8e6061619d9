//! Bijections intertwining two actions of the same finite generating list.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::perm::Perm;

/// Searches a bijection `tau: 0..n -> 0..n` with `tau ∘ left[k] = right[k] ∘ tau` for all `k`.
///
/// Backtracks over the image of the least unassigned point; each choice is propagated
/// along its orbit. Candidates are tried in increasing order, or shuffled when `rng`
/// is given.
pub fn find_intertwiner<R: Rng>(left: &[Perm], right: &[Perm], mut rng: Option<&mut R>) -> Option<Perm> {
    assert_eq!(left.len(), right.len());
    let n = match left.first() {
        Some(p) => p.len(),
        None => return None,
    };
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(r) = rng.as_deref_mut() {
        order.shuffle(r);
    }
    let mut tau = vec![usize::MAX; n];
    let mut used = vec![false; n];
    if search(left, right, &order, &mut tau, &mut used) {
        Some(Perm::from_images(tau.into_iter().map(|x| x as u32).collect()).expect("bijection"))
    } else {
        None
    }
}

/// As [`find_intertwiner`] for actions given only on a subset of equal size, or `None`
/// for an empty list of generators (then any bijection works and the identity is returned).
pub fn find_intertwiner_or_identity(left: &[Perm], right: &[Perm], n: usize) -> Option<Perm> {
    if left.is_empty() {
        return Some(Perm::identity(n));
    }
    find_intertwiner::<rand_chacha::ChaCha8Rng>(left, right, None)
}

pub fn intertwines(tau: &Perm, left: &[Perm], right: &[Perm]) -> bool {
    left.iter()
        .zip(right)
        .all(|(l, r)| tau.compose(l) == r.compose(tau))
}

fn search(left: &[Perm], right: &[Perm], order: &[usize], tau: &mut [usize], used: &mut [bool]) -> bool {
    let Some(x) = (0..tau.len()).find(|&i| tau[i] == usize::MAX) else {
        return true;
    };
    for &y in order {
        if used[y] {
            continue;
        }
        let mut assigned = Vec::new();
        if propagate(left, right, x, y, tau, used, &mut assigned) && search(left, right, order, tau, used) {
            return true;
        }
        for i in assigned {
            used[tau[i]] = false;
            tau[i] = usize::MAX;
        }
    }
    false
}

fn propagate(
    left: &[Perm],
    right: &[Perm],
    x: usize,
    y: usize,
    tau: &mut [usize],
    used: &mut [bool],
    assigned: &mut Vec<usize>,
) -> bool {
    let mut stack = vec![(x, y)];
    while let Some((a, b)) = stack.pop() {
        if tau[a] != usize::MAX {
            if tau[a] != b {
                return false;
            }
            continue;
        }
        if used[b] {
            return false;
        }
        tau[a] = b;
        used[b] = true;
        assigned.push(a);
        for (l, r) in left.iter().zip(right) {
            stack.push((l.apply(a), r.apply(b)));
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn perm(v: &[u32]) -> Perm {
        Perm::from_images(v.to_vec()).unwrap()
    }

    #[test]
    fn finds_conjugator_of_cycles() {
        let a = perm(&[1, 2, 0, 3]);
        let b = perm(&[0, 3, 1, 2]);
        let tau = find_intertwiner::<rand_chacha::ChaCha8Rng>(&[a.clone()], &[b.clone()], None).unwrap();
        assert!(intertwines(&tau, &[a.clone()], &[b.clone()]));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let tau = find_intertwiner(&[a.clone()], &[b.clone()], Some(&mut rng)).unwrap();
        assert!(intertwines(&tau, &[a], &[b]));
    }

    #[test]
    fn non_isomorphic_sets_have_none() {
        let a = perm(&[1, 0, 2, 3]);
        let b = perm(&[1, 0, 3, 2]);
        assert!(find_intertwiner::<rand_chacha::ChaCha8Rng>(&[a], &[b], None).is_none());
    }
}
