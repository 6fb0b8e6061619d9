mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dynperturb::almost::perturb_from_action;
use dynperturb::cantor::{distance, nearest_point_projection, tail_aligned_sample};
use dynperturb::generate::random_cylinder_action;
use dynperturb::group::presets::*;
use dynperturb::lifting::{polar_partial_isometry, project_almost_projection, random};
use dynperturb::solver::solve_level;
use dynperturb::{CantorPoint, CylinderAction, Dyadic, FiniteSample, Group, Perm, ScheduleEntry, Symbol, Word};

use common::*;

fn groups() -> Vec<Group> {
    vec![
        cyclic(2),
        cyclic(3),
        infinite_dihedral(),
        free_product(2, 3),
        z4_amalgam_z2(),
        integers(),
        free_group_2(),
        tower(),
        z2_hnn_identity(),
    ]
}

fn random_action(gi: usize, depth: u32, total: u32, seed: u64) -> (Group, CylinderAction) {
    let g = groups()[gi].clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..50 {
        if let Ok(a) = random_cylinder_action(&g, depth, total, &mut rng) {
            return (g, a);
        }
    }
    panic!("no action");
}

/// A random word as indices into the symmetric generators.
fn word(g: &Group, picks: &[usize]) -> Word {
    let gens = g.symmetric_generators();
    Word::from_symbols(picks.iter().map(|&i| gens[i % gens.len()]).collect())
}

fn perm_strategy(n: usize) -> impl Strategy<Value = Perm> {
    Just((0..n as u32).collect::<Vec<_>>())
        .prop_shuffle()
        .prop_map(|v| Perm::from_images(v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cantor_metric_is_an_ultrametric(depth in 1u32..40, x: u64, y: u64, z: u64) {
        let mask = (1u64 << depth) - 1;
        let p = |b: u64| CantorPoint::new(b & mask, depth).unwrap();
        let (x, y, z) = (p(x), p(y), p(z));
        let dxy = distance(&x, &y).unwrap();
        prop_assert_eq!(dxy, distance(&y, &x).unwrap());
        prop_assert_eq!(dxy == Dyadic::ZERO, x == y);
        prop_assert!(distance(&x, &z).unwrap() <= dxy.max(distance(&y, &z).unwrap()));
        prop_assert_eq!(dxy.exponent().unwrap_or(u32::MAX), cantor_exp(x.bits(), y.bits(), depth));
    }

    #[test]
    fn cantor_points_round_trip_through_text(depth in 1u32..40, x: u64) {
        let p = CantorPoint::new(x & ((1u64 << depth) - 1), depth).unwrap();
        prop_assert_eq!(p.to_string().parse::<CantorPoint>().unwrap(), p);
    }

    #[test]
    fn dyadics_round_trip_and_order_by_value(a in proptest::option::of(0u32..60), b in proptest::option::of(0u32..60)) {
        let mk = |k: Option<u32>| k.map_or(Dyadic::ZERO, Dyadic::pow);
        let (x, y) = (mk(a), mk(b));
        prop_assert_eq!(x.to_string().parse::<Dyadic>().unwrap(), x);
        prop_assert_eq!(x < y, x.to_f64() < y.to_f64());
    }

    #[test]
    fn nearest_point_matches_a_linear_scan(x: u64, m in 1u32..6) {
        let sample = tail_aligned_sample(m, 8, 0).unwrap();
        let x = CantorPoint::new(x & 0xff, 8).unwrap();
        let got = nearest_point_projection(&x, &sample).unwrap();
        let best = sample
            .points()
            .iter()
            .min_by_key(|p| (std::cmp::Reverse(cantor_exp(p.bits(), x.bits(), 8)), p.bits()))
            .unwrap();
        prop_assert_eq!(&got, best);
    }

    #[test]
    fn permutations_form_a_group(p in perm_strategy(7), q in perm_strategy(7), r in perm_strategy(7)) {
        prop_assert_eq!(p.compose(&q).compose(&r), p.compose(&q.compose(&r)));
        prop_assert!(p.compose(&p.inverse()).is_identity());
        prop_assert_eq!(p.compose(&q).inverse(), q.inverse().compose(&p.inverse()));
        prop_assert_eq!(p.pow(3), p.compose(&p).compose(&p));
        let (pi, qi) = (p.images(), q.images());
        let direct: Vec<u32> = (0..7).map(|i| pi[qi[i] as usize]).collect();
        let pq = p.compose(&q);
        prop_assert_eq!(pq.images(), &direct[..]);
    }

    #[test]
    fn reduction_respects_the_group_law(gi in 0usize..9, u in prop::collection::vec(0usize..16, 0..8), v in prop::collection::vec(0usize..16, 0..8), w in prop::collection::vec(0usize..16, 0..8)) {
        let g = &groups()[gi];
        let (u, v, w) = (word(g, &u), word(g, &v), word(g, &w));
        let ru = g.reduce(&u).unwrap();
        prop_assert_eq!(g.reduce(&ru).unwrap(), ru.clone());
        prop_assert!(g.multiply(&u, &g.invert(&u).unwrap()).unwrap().is_empty());
        prop_assert_eq!(
            g.multiply(&g.multiply(&u, &v).unwrap(), &w).unwrap(),
            g.multiply(&u, &g.multiply(&v, &w).unwrap()).unwrap()
        );
    }

    #[test]
    fn action_of_a_product_is_the_composite(gi in 0usize..9, seed: u64, u in prop::collection::vec(0usize..16, 0..6), v in prop::collection::vec(0usize..16, 0..6), x: u64) {
        let (g, a) = random_action(gi, 2, 8, seed);
        let (u, v) = (word(&g, &u), word(&g, &v));
        let x = CantorPoint::new(x & 0xff, 8).unwrap();
        let uv = u.concat(&v);
        prop_assert_eq!(a.act(&g, &uv, &x).unwrap(), a.act(&g, &u, &a.act(&g, &v, &x).unwrap()).unwrap());
        // reduced and unreduced words act alike
        prop_assert_eq!(a.act(&g, &g.reduce(&uv).unwrap(), &x).unwrap(), a.act(&g, &uv, &x).unwrap());
    }

    #[test]
    fn random_actions_are_exact_bijective_and_measure_preserving(gi in 0usize..9, depth in 1u32..4, seed: u64) {
        let (g, a) = random_action(gi, depth, 6, seed);
        prop_assert_eq!(relation_violations(&g, a.table()), 0);
        prop_assert!(a.check_measure_preservation(&g).unwrap());
        let all: Vec<CantorPoint> = CantorPoint::all(6).unwrap().collect();
        for s in g.symmetric_generators() {
            let mut image: Vec<CantorPoint> = all.iter().map(|x| a.act_symbol(s, x)).collect();
            image.sort();
            prop_assert_eq!(&image, &all);
        }
    }

    #[test]
    fn equivariant_samples_are_closed(gi in 0usize..9, seed: u64, m in 3u32..6) {
        let (g, a) = random_action(gi, 2, 8, seed);
        let sample = a.equivariant_sample(m, 0).unwrap();
        // orbit enumeration from every point stays in the sample
        for x in sample.points() {
            let mut seen = vec![x.clone()];
            let mut stack = vec![x.clone()];
            while let Some(y) = stack.pop() {
                for s in g.symmetric_generators() {
                    let z = a.act_symbol(s, &y);
                    if !seen.contains(&z) {
                        prop_assert!(sample.contains(&z));
                        seen.push(z.clone());
                        stack.push(z);
                    }
                }
            }
        }
    }

    #[test]
    fn one_short_transposition_costs_half_m(gi in 0usize..9, seed: u64, m in 3u32..8) {
        let (g, a) = random_action(gi, 2, 10, seed);
        let sched = [ScheduleEntry { n: 0, m, k: 1, c: 1 }];
        let alpha = perturb_from_action(&g, &a, &sched, seed).unwrap();
        let level = &alpha.levels()[0];
        for s in g.generators() {
            let d = level.approximation_defect(&g, &a, &Word::single(s)).unwrap();
            prop_assert!(d <= Dyadic::pow(m - 1));
        }
    }

    #[test]
    fn solved_levels_are_exact_and_close(gi in 0usize..9, seed: u64, m in 4u32..8, k in 1u32..3, c in 0usize..4) {
        let (g, a) = random_action(gi, 2, 10, seed);
        let sched = [ScheduleEntry { n: 0, m, k, c }];
        let alpha = perturb_from_action(&g, &a, &sched, seed).unwrap();
        let level = &alpha.levels()[0];
        let solved = solve_level(&g, &a, level, Dyadic::pow(2)).unwrap();
        prop_assert_eq!(relation_violations(&g, &solved.table), 0);
        let pts: Vec<u64> = level.sample().points().iter().map(|p| p.bits()).collect();
        for s in g.generators() {
            let want: Vec<usize> = level.get(&g, &Word::single(s)).unwrap().images().iter().map(|&x| x as usize).collect();
            let got: Vec<usize> = solved.perm(s).images().iter().map(|&x| x as usize).collect();
            let need = match s {
                Symbol::Leaf { .. } => solved.partition_depth,
                Symbol::Stable { .. } => solved.partition_depth - 1,
            };
            prop_assert!(sup_exp(&pts, 10, &got, &want) >= need);
        }
    }

    #[test]
    fn samples_reject_nothing_they_contain(points in prop::collection::btree_set(0u64..256, 1..20)) {
        let pts: Vec<CantorPoint> = points.iter().map(|&b| CantorPoint::new(b, 8).unwrap()).collect();
        let sample = FiniteSample::new(0, pts.clone()).unwrap();
        for p in &pts {
            prop_assert!(sample.contains(p));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lifted_projections_are_exact(seed: u64, n in 2usize..10, noise in 0.0f64..0.1) {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        let r = (seed as usize) % (n + 1);
        let p = random::projection::<f64, _>(n, r, &mut g) + random::hermitian_noise::<f64, _>(n, noise, &mut g);
        let out = project_almost_projection(&p, noise + noise * noise, 1e-10).unwrap();
        let pt = rows_of(&out.value);
        prop_assert!(frobenius(&c_sub(&c_mul(&pt, &pt), &pt)) <= 1e-10);
        prop_assert!(frobenius(&c_sub(&pt, &c_adjoint(&pt))) <= 1e-12);
    }

    #[test]
    fn lifted_partial_isometries_are_exact(seed: u64, n in 2usize..10, noise in 0.0f64..0.05) {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        let u = random::unitary::<f64, _>(n, &mut g);
        let r = 1 + (seed as usize) % n;
        let d: Vec<f64> = (0..n).map(|i| if i < r { 1.0 } else { 0.0 }).collect();
        let v = &u * dynperturb::lifting::diagonal::<f64>(&d) + random::noise::<f64, _>(n, noise, &mut g);
        let out = polar_partial_isometry(&v, noise, 1e-10).unwrap();
        let vt = rows_of(&out.value);
        prop_assert!(frobenius(&c_sub(&c_mul(&c_mul(&vt, &c_adjoint(&vt)), &vt), &vt)) <= 1e-9);
    }

    #[test]
    fn f32_lifting_agrees_with_f64(seed: u64, n in 2usize..8) {
        let mut g64 = ChaCha8Rng::seed_from_u64(seed);
        let mut g32 = ChaCha8Rng::seed_from_u64(seed);
        let p64 = random::projection::<f64, _>(n, 1, &mut g64) + random::hermitian_noise::<f64, _>(n, 0.05, &mut g64);
        let p32 = random::projection::<f32, _>(n, 1, &mut g32) + random::hermitian_noise::<f32, _>(n, 0.05, &mut g32);
        let a = project_almost_projection(&p64, 0.0525, 1e-10).unwrap().value;
        let b = project_almost_projection(&p32, 0.0525f32, 1e-5).unwrap().value;
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x.re - y.re as f64).abs() < 1e-4 && (x.im - y.im as f64).abs() < 1e-4);
        }
    }
}
