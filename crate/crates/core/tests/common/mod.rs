//! Independent oracles: plain vectors, no library arithmetic.
#![allow(dead_code)]

use dynperturb::actions::PermTable;
use dynperturb::group::Group;

/// `-log2 d(x, y)` for depth-`depth` bit strings, `u32::MAX` when equal.
pub fn cantor_exp(x: u64, y: u64, depth: u32) -> u32 {
    let z = x ^ y;
    if z == 0 {
        return u32::MAX;
    }
    depth - 1 - (63 - z.leading_zeros())
}

/// Largest pointwise distance between two maps of a sample, as an exponent.
pub fn sup_exp(points: &[u64], depth: u32, p: &[usize], q: &[usize]) -> u32 {
    (0..points.len())
        .map(|i| cantor_exp(points[p[i]], points[q[i]], depth))
        .min()
        .unwrap_or(u32::MAX)
}

pub fn compose(p: &[usize], q: &[usize]) -> Vec<usize> {
    q.iter().map(|&j| p[j]).collect()
}

pub fn inverse(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (i, &j) in p.iter().enumerate() {
        inv[j] = i;
    }
    inv
}

fn images(t: &dynperturb::Perm) -> Vec<usize> {
    t.images().iter().map(|&x| x as usize).collect()
}

/// Number of failed defining relations of a permutation table: leaf multiplication,
/// amalgam identifications and `t f t^-1 = g`.
pub fn relation_violations(group: &Group, table: &PermTable) -> usize {
    let mut bad = 0;
    for (l, leaf) in group.leaves().iter().enumerate() {
        let ps: Vec<Vec<usize>> = table.leaf_perms(l).iter().map(images).collect();
        let mult = leaf.table.table();
        let id: Vec<usize> = (0..table.degree()).collect();
        if ps[leaf.table.identity()] != id {
            bad += 1;
        }
        for a in 0..ps.len() {
            for b in 0..ps.len() {
                if compose(&ps[a], &ps[b]) != ps[mult[a][b]] {
                    bad += 1;
                }
            }
        }
    }
    for e in group.amalgams() {
        for &(x, y) in &e.pairs {
            if images(&table.leaf_perms(e.left_leaf)[x]) != images(&table.leaf_perms(e.right_leaf)[y]) {
                bad += 1;
            }
        }
    }
    for (k, s) in group.stables().iter().enumerate() {
        let t = images(table.stable_perm(k));
        for &(f, g) in &s.pairs {
            let lhs = compose(&compose(&t, &images(&table.leaf_perms(s.source_leaf)[f])), &inverse(&t));
            if lhs != images(&table.leaf_perms(s.target_leaf)[g]) {
                bad += 1;
            }
        }
    }
    bad
}

/// Every homomorphism `φ` from the group with multiplication table `mult` (identity 0)
/// into permutations of `points` with `d(φ(λ), alpha[λ]) <= 2^-eps_exp` for all `λ`.
pub fn brute_force_actions(mult: &[Vec<usize>], points: &[u64], depth: u32, alpha: &[Vec<usize>], eps_exp: u32) -> Vec<Vec<Vec<usize>>> {
    let order = mult.len();
    // greedy generating set
    let mut gens = Vec::new();
    let mut span = vec![false; order];
    span[0] = true;
    for g in 1..order {
        if !span[g] {
            gens.push(g);
            span = closure(mult, &gens);
        }
    }
    let n = points.len();
    let candidates: Vec<Vec<Vec<usize>>> = gens
        .iter()
        .map(|&g| {
            let mut out = Vec::new();
            let mut cur = vec![usize::MAX; n];
            let mut used = vec![false; n];
            near_perms(points, depth, &alpha[g], eps_exp, 0, &mut cur, &mut used, &mut out);
            out
        })
        .collect();
    let mut found = Vec::new();
    let mut choice = vec![0usize; gens.len()];
    if candidates.iter().any(|c| c.is_empty()) {
        return found;
    }
    loop {
        if let Some(phi) = extend(mult, &gens, &choice.iter().zip(&candidates).map(|(&i, c)| c[i].clone()).collect::<Vec<_>>()) {
            if (1..order).all(|l| sup_exp(points, depth, &phi[l], &alpha[l]) >= eps_exp) {
                found.push(phi);
            }
        }
        let mut i = 0;
        loop {
            if i == gens.len() {
                return found;
            }
            choice[i] += 1;
            if choice[i] < candidates[i].len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

fn closure(mult: &[Vec<usize>], gens: &[usize]) -> Vec<bool> {
    let mut span = vec![false; mult.len()];
    span[0] = true;
    let mut stack = vec![0];
    while let Some(x) = stack.pop() {
        for &g in gens {
            let y = mult[g][x];
            if !span[y] {
                span[y] = true;
                stack.push(y);
            }
        }
    }
    span
}

/// Extends generator images to the whole group, or `None` if not a homomorphism.
fn extend(mult: &[Vec<usize>], gens: &[usize], imgs: &[Vec<usize>]) -> Option<Vec<Vec<usize>>> {
    let n = imgs[0].len();
    let mut phi: Vec<Option<Vec<usize>>> = vec![None; mult.len()];
    phi[0] = Some((0..n).collect());
    let mut stack = vec![0];
    while let Some(x) = stack.pop() {
        for (k, &g) in gens.iter().enumerate() {
            let y = mult[g][x];
            let img = compose(&imgs[k], phi[x].as_ref().unwrap());
            match &phi[y] {
                Some(p) if *p != img => return None,
                Some(_) => {}
                None => {
                    phi[y] = Some(img);
                    stack.push(y);
                }
            }
        }
    }
    let phi: Vec<Vec<usize>> = phi.into_iter().map(|p| p.unwrap()).collect();
    for a in 0..mult.len() {
        for b in 0..mult.len() {
            if compose(&phi[a], &phi[b]) != phi[mult[a][b]] {
                return None;
            }
        }
    }
    Some(phi)
}

#[allow(clippy::too_many_arguments)]
fn near_perms(points: &[u64], depth: u32, target: &[usize], eps_exp: u32, i: usize, cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
    if i == points.len() {
        out.push(cur.clone());
        return;
    }
    for j in 0..points.len() {
        if !used[j] && cantor_exp(points[j], points[target[i]], depth) >= eps_exp {
            used[j] = true;
            cur[i] = j;
            near_perms(points, depth, target, eps_exp, i + 1, cur, used, out);
            used[j] = false;
        }
    }
}

/// Complex matrix as rows of `[re, im]`.
pub type CRows = Vec<Vec<[f64; 2]>>;

pub fn c_mul(a: &CRows, b: &CRows) -> CRows {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![[0.0; 2]; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = [0.0, 0.0];
            for l in 0..k {
                let (x, y) = (a[i][l], b[l][j]);
                s[0] += x[0] * y[0] - x[1] * y[1];
                s[1] += x[0] * y[1] + x[1] * y[0];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn c_sub(a: &CRows, b: &CRows) -> CRows {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| [x[0] - y[0], x[1] - y[1]]).collect())
        .collect()
}

pub fn c_add(a: &CRows, b: &CRows) -> CRows {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| [x[0] + y[0], x[1] + y[1]]).collect())
        .collect()
}

pub fn c_adjoint(a: &CRows) -> CRows {
    (0..a[0].len()).map(|j| (0..a.len()).map(|i| [a[i][j][0], -a[i][j][1]]).collect()).collect()
}

/// Eigenvalues of a hermitian matrix, ascending, by cyclic Jacobi on the real
/// symmetric embedding `[[A, -B], [B, A]]` (which doubles every eigenvalue).
pub fn hermitian_eigenvalues(h: &CRows) -> Vec<f64> {
    let n = h.len();
    let m = 2 * n;
    let mut a = vec![vec![0.0; m]; m];
    for i in 0..n {
        for j in 0..n {
            let [x, y] = h[i][j];
            a[i][j] = x;
            a[i + n][j + n] = x;
            a[i][j + n] = -y;
            a[i + n][j] = y;
        }
    }
    // symmetrize away rounding in the input
    for i in 0..m {
        for j in 0..i {
            let s = 0.5 * (a[i][j] + a[j][i]);
            a[i][j] = s;
            a[j][i] = s;
        }
    }
    for _sweep in 0..100 {
        let off: f64 = (0..m).flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum().max(0.0).mul_add(2.0, -1.0) / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..m {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..m).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev.into_iter().step_by(2).collect()
}

/// Operator norm via the largest eigenvalue of `a* a`.
pub fn op_norm(a: &CRows) -> f64 {
    let ev = hermitian_eigenvalues(&c_mul(&c_adjoint(a), a));
    ev.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Operator norm of a hermitian matrix: the largest absolute eigenvalue.
pub fn hermitian_norm(h: &CRows) -> f64 {
    hermitian_eigenvalues(h).into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn frobenius(a: &CRows) -> f64 {
    a.iter().flatten().map(|z| z[0] * z[0] + z[1] * z[1]).sum::<f64>().sqrt()
}

pub fn rows_of(m: &nalgebra::DMatrix<num_complex::Complex<f64>>) -> CRows {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}
