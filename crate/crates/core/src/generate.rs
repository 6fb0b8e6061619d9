//! Random honest actions, used to build test scenarios.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::actions::{ActionError, CylinderAction, PermTable};
use crate::group::{FiniteGroupTable, Group};
use crate::intertwine::find_intertwiner;
use crate::perm::Perm;

/// A finite group acting on `0..degree` by as many regular orbits as fit, the rest
/// fixed, under a random relabelling.
pub fn random_leaf_perms<R: Rng>(table: &FiniteGroupTable, degree: usize, rng: &mut R) -> Vec<Perm> {
    let order = table.order();
    let blocks = degree / order;
    let mut relabel: Vec<u32> = (0..degree as u32).collect();
    relabel.shuffle(rng);
    let relabel = Perm::from_images(relabel).expect("shuffle");
    let inv = relabel.inverse();
    (0..order)
        .map(|g| {
            let images = (0..degree)
                .map(|i| {
                    if i < blocks * order {
                        let (b, h) = (i / order, i % order);
                        (b * order + table.mul(g, h)) as u32
                    } else {
                        i as u32
                    }
                })
                .collect();
            let rho = Perm::from_images(images).expect("regular action");
            relabel.compose(&rho).compose(&inv)
        })
        .collect()
}

/// A random verified action of `group` by depth-`depth` prefix substitutions.
///
/// Leaves act by [`random_leaf_perms`]; the new factor of an amalgam is conjugated to
/// agree with the old one on the amalgamated subgroup, and stable letters are random
/// intertwiners. Fails when the subgroup actions to be matched are not isomorphic.
pub fn random_cylinder_action<R: Rng>(
    group: &Group,
    depth: u32,
    total_depth: u32,
    rng: &mut R,
) -> Result<CylinderAction, ActionError> {
    let n = 1usize << depth;
    let mut leaves: Vec<Vec<Perm>> = Vec::new();
    for (l, leaf) in group.leaves().iter().enumerate() {
        let mut perms = random_leaf_perms(&leaf.table, n, rng);
        if let Some(edge) = group.amalgam_into(l) {
            let left: Vec<Perm> = edge.pairs.iter().map(|&(_, y)| perms[y].clone()).collect();
            let right: Vec<Perm> = edge.pairs.iter().map(|&(x, _)| leaves[edge.left_leaf][x].clone()).collect();
            let tau = find_intertwiner(&left, &right, Some(&mut *rng)).ok_or_else(|| {
                ActionError::NotAHomomorphism {
                    leaf: leaf.name.clone(),
                    element: "amalgamated subgroup".into(),
                }
            })?;
            let tau_inv = tau.inverse();
            perms = perms.iter().map(|p| tau.compose(p).compose(&tau_inv)).collect();
        }
        leaves.push(perms);
    }
    let mut stables = Vec::new();
    for st in group.stables() {
        let left: Vec<Perm> = st.pairs.iter().map(|&(f, _)| leaves[st.source_leaf][f].clone()).collect();
        let right: Vec<Perm> = st.pairs.iter().map(|&(_, g)| leaves[st.target_leaf][g].clone()).collect();
        let tau = find_intertwiner(&left, &right, Some(&mut *rng)).ok_or_else(|| {
            ActionError::NotAHomomorphism {
                leaf: st.name.clone(),
                element: "stable letter".into(),
            }
        })?;
        stables.push(tau);
    }
    let table = PermTable::new(group, n, leaves, stables)?;
    table.verify(group)?;
    CylinderAction::from_table(table, depth, total_depth)
}

/// The generator assignment of an action, in the form accepted by [`CylinderAction::new`].
pub fn generator_assignment(group: &Group, action: &CylinderAction) -> BTreeMap<crate::group::Symbol, Perm> {
    action.table().generator_perms(group).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::presets::*;
    use rand::SeedableRng;

    #[test]
    fn random_actions_verify() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for g in [cyclic(3), infinite_dihedral(), free_product(2, 3), z4_amalgam_z2(), integers(), free_group_2(), tower(), z2_hnn_identity()] {
            for d in 1..=4 {
                let a = random_cylinder_action(&g, d, 8, &mut rng).unwrap();
                assert!(a.verify(&g).is_ok());
                let again = CylinderAction::new(&g, d, 8, &generator_assignment(&g, &a)).unwrap();
                assert_eq!(again, a);
            }
        }
    }
}
