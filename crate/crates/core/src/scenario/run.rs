use std::collections::BTreeMap;
use std::time::Instant;

use num_complex::Complex;
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::actions::{CircleAction, CylinderAction, PermTable, PermutationOracle};
use crate::almost::{
    defect_report, displaced_orbit_action, perturb_from_action, uniformize_by_tree, AlmostAction, Level,
    ScheduleEntry,
};
use crate::cantor::{CantorPoint, CirclePoint, FiniteSample, MetricPoint};
use crate::cayley::{reduced_words_up_to, CayleyBall, ReducedWordOracle};
use crate::covariance::{covariance_bound, covariance_defect, embedding_violations, equivariant_embedding_check, EmbeddingCheck};
use crate::generate::random_cylinder_action;
use crate::group::{Group, Symbol, Word};
use crate::lifting::{
    conditional_fd_lift, diagonal, eigenvalues, from_rows, lift_orthogonal_sum, op_norm,
    partial_isometry_defect, polar_partial_isometry, project_almost_projection, projection_defect, random,
    to_rows, CMatrix, MatrixUnitFrame,
};
use crate::limits::solve_abstract;
use crate::rng;
use crate::scalar::{Distance, Dyadic};
use crate::solver::{residual_finiteness_witness, solve_virtually_free, SolvedLevel};

use super::config::{validate, LiftKind, ModelConfig, Moved, Pipeline, Resolved, ScenarioConfig};
use super::report::*;
use super::{exit, ScenarioError};

/// Runs the configured pipeline. Config problems are errors; everything after
/// validation ends up in the report's verdict and exit code.
pub fn run(config: &ScenarioConfig) -> Result<RunReport, ScenarioError> {
    let resolved = validate(config)?;
    let mut report = RunReport {
        config: config.clone(),
        verdict: Verdict::solved(),
        exit_code: exit::OK,
        warnings: Vec::new(),
        tables: Tables::default(),
        intermediates: Intermediates::default(),
        timings: Vec::new(),
    };
    let outcome = match config.pipeline {
        Pipeline::Solve => run_solve(config, &resolved, &mut report),
        Pipeline::Uniformize => run_uniformize(config, &resolved, &mut report),
        Pipeline::Witness => run_witness(config, &resolved, &mut report),
        Pipeline::Lift => run_lift(config, &mut report),
        Pipeline::Limits => run_limits(config, &resolved, &mut report),
        Pipeline::Covariance => run_covariance(config, &resolved, &mut report),
    };
    if let Err(e) = outcome {
        if matches!(e, ScenarioError::Config { .. }) {
            return Err(e);
        }
        let (status, kind) = e.verdict_kind();
        report.verdict = Verdict {
            status: status.into(),
            kind: Some(kind.into()),
            message: Some(e.to_string()),
        };
        report.exit_code = e.exit_code();
    }
    Ok(report)
}

fn stage<T>(report: &mut RunReport, name: &str, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    report.timings.push(Timing {
        stage: name.into(),
        millis: t.elapsed().as_secs_f64() * 1e3,
    });
    out
}

fn honest_action(config: &ScenarioConfig, r: &Resolved) -> Result<CylinderAction, ScenarioError> {
    let a = config.action.as_ref().expect("validated");
    let total = r.total_depth.expect("validated");
    if a.generators.is_empty() {
        let mut g = rng::stream(config.seed, u64::MAX, u64::MAX);
        return Ok(random_cylinder_action(&r.group, a.depth, total, &mut g)?);
    }
    let mut given = BTreeMap::new();
    for (name, images) in &a.generators {
        let s = r.group.parse_symbol(name)?;
        let p = crate::perm::Perm::from_images(images.clone()).map_err(|e| ScenarioError::Config {
            path: format!("action.generators.{name}"),
            message: e.to_string(),
        })?;
        given.insert(s, p);
    }
    Ok(CylinderAction::new(&r.group, a.depth, total, &given)?)
}

pub(super) fn action_data(group: &Group, a: &CylinderAction) -> ActionData {
    ActionData {
        depth: a.depth(),
        total_depth: a.total_depth(),
        generators: a
            .table()
            .generator_perms(group)
            .into_iter()
            .map(|(s, p)| (group.symbol_name(s), p))
            .collect(),
    }
}

pub(super) fn level_data<P: MetricPoint>(group: &Group, l: &Level<P>) -> LevelData {
    LevelData {
        n: l.n(),
        partition_depth: None,
        points: l.sample().points().iter().map(|p| p.to_string()).collect(),
        perms: l
            .support()
            .iter()
            .filter(|(w, _)| !w.is_empty())
            .map(|(w, p)| (group.format_word(w), p.clone()))
            .collect(),
    }
}

fn solved_data(group: &Group, s: &SolvedLevel) -> LevelData {
    LevelData {
        n: s.n,
        partition_depth: Some(s.partition_depth),
        points: s.sample.points().iter().map(|p| p.to_string()).collect(),
        perms: s
            .table
            .generator_perms(group)
            .into_iter()
            .map(|(sym, p)| (group.symbol_name(sym), p))
            .collect(),
    }
}

/// Per-generator distances of a solved table to the input level, with the bounds for
/// partition depth `dp`.
pub(super) fn distance_rows(
    group: &Group,
    level: &Level<CantorPoint>,
    table: &PermTable,
    dp: u32,
) -> Result<Vec<DistanceRow>, ScenarioError> {
    let mut out = Vec::new();
    for s in group.generators() {
        let a = level.get(group, &Word::single(s))?;
        let p = table.symbol_perm(s);
        let bound = match s {
            Symbol::Leaf { .. } => Dyadic::pow(dp),
            Symbol::Stable { .. } => Dyadic::pow(dp - 1),
        };
        out.push(DistanceRow {
            n: level.n(),
            partition_depth: dp,
            generator: group.symbol_name(s),
            distance: level.max_distance(|i| p.apply(i), |i| a.apply(i)),
            bound,
        });
    }
    Ok(out)
}

fn record_solved(
    group: &Group,
    alpha: &AlmostAction<CantorPoint>,
    levels: &[SolvedLevel],
    report: &mut RunReport,
) -> Result<(), ScenarioError> {
    for s in levels {
        let l = alpha.level(s.n).expect("solved index is scheduled");
        report.tables.distances.extend(distance_rows(group, l, &s.table, s.partition_depth)?);
        report.tables.relations.push(RelationRow {
            n: s.n,
            violations: s.table.violated_relations(group).len(),
        });
        report.intermediates.solved.push(solved_data(group, s));
    }
    Ok(())
}

fn perturbed(
    config: &ScenarioConfig,
    r: &Resolved,
    report: &mut RunReport,
) -> Result<(CylinderAction, AlmostAction<CantorPoint>), ScenarioError> {
    let action = stage(report, "action", || honest_action(config, r))?;
    report.intermediates.action = Some(action_data(&r.group, &action));
    let alpha = stage(report, "perturb", || perturb_from_action(&r.group, &action, &config.schedule, config.seed))?;
    report.intermediates.levels = alpha.levels().iter().map(|l| level_data(&r.group, l)).collect();
    Ok((action, alpha))
}

fn run_solve(config: &ScenarioConfig, r: &Resolved, report: &mut RunReport) -> Result<(), ScenarioError> {
    let g = &r.group;
    let (action, alpha) = perturbed(config, r, report)?;
    let defects = stage(report, "defects", || defect_report(g, &alpha, Some(&action)))?;
    report.tables.defects = Some(defects);
    let eps = config.epsilon.expect("validated");
    let solved = stage(report, "solve", || solve_virtually_free(g, &action, &alpha, eps))?;
    report.tables.first_admissible = Some(solved.first_admissible);
    report.tables.rejected = solved
        .rejected
        .iter()
        .map(|(n, e)| RejectedRow {
            n: *n,
            kind: e.kind().into(),
            message: e.to_string(),
        })
        .collect();
    record_solved(g, &alpha, &solved.levels, report)?;
    check_bounds(report);
    Ok(())
}

fn check_bounds(report: &mut RunReport) {
    let over: Vec<String> = report
        .tables
        .distances
        .iter()
        .filter(|d| d.distance > d.bound)
        .map(|d| format!("level {} generator {}: distance {} above {}", d.n, d.generator, d.distance, d.bound))
        .collect();
    report.warnings.extend(over);
    for rel in &report.tables.relations {
        if rel.violations > 0 {
            report.warnings.push(format!("level {}: {} relation(s) violated", rel.n, rel.violations));
        }
    }
}

pub(super) fn uniformized_defects(
    group: &Group,
    action: &CylinderAction,
    alpha: &AlmostAction<CantorPoint>,
    radius: usize,
) -> Result<crate::almost::Uniformized<CantorPoint>, ScenarioError> {
    if group.has_trivial_edges() {
        let o = ReducedWordOracle::new(group)?;
        let ball = CayleyBall::build(group, &o, radius)?;
        Ok(uniformize_by_tree(group, alpha, &ball, &o)?)
    } else {
        let o = PermutationOracle::new(group, action);
        let ball = CayleyBall::build(group, &o, radius)?;
        Ok(uniformize_by_tree(group, alpha, &ball, &o)?)
    }
}

fn run_uniformize(config: &ScenarioConfig, r: &Resolved, report: &mut RunReport) -> Result<(), ScenarioError> {
    let (action, alpha) = perturbed(config, r, report)?;
    let u = stage(report, "uniformize", || uniformized_defects(&r.group, &action, &alpha, config.radius))?;
    report.tables.defects = Some(u.defects);
    Ok(())
}

/// `max_e d(γ·e, α̃(γ)e)` for every word.
pub(super) fn certificate_rows(
    group: &Group,
    beta: &CylinderAction,
    sample: &FiniteSample<CantorPoint>,
    table: &PermTable,
    words: &[Word],
) -> Vec<CertificateRow> {
    let pts = sample.points();
    words
        .iter()
        .map(|w| {
            let p = table.eval(w);
            let defect = pts
                .iter()
                .enumerate()
                .map(|(i, x)| beta.act_unchecked(w, x).distance_unchecked(&pts[p.apply(i)]))
                .max()
                .unwrap_or(Dyadic::ZERO);
            CertificateRow {
                word: group.format_word(w),
                defect,
            }
        })
        .collect()
}

fn run_witness(config: &ScenarioConfig, r: &Resolved, report: &mut RunReport) -> Result<(), ScenarioError> {
    let g = &r.group;
    let action = stage(report, "action", || honest_action(config, r))?;
    report.intermediates.action = Some(action_data(g, &action));
    let words = reduced_words_up_to(g, config.radius)?;
    report.intermediates.words = words.iter().map(|w| g.format_word(w)).collect();
    let eps = config.epsilon.expect("validated");
    let pert = config.schedule.first().map(|e| (e.k, e.c));
    let w = stage(report, "witness", || {
        residual_finiteness_witness(g, &action, &words, eps, config.seed, pert)
    })?;
    report.intermediates.solved.push(solved_data(g, &w.solved));
    report.tables.relations.push(RelationRow {
        n: w.solved.n,
        violations: w.solved.table.violated_relations(g).len(),
    });
    report.tables.certificate = certificate_rows(g, &action, &w.solved.sample, &w.solved.table, &words);
    Ok(())
}

fn run_limits(config: &ScenarioConfig, r: &Resolved, report: &mut RunReport) -> Result<(), ScenarioError> {
    let g = &r.group;
    let (_, alpha) = perturbed(config, r, report)?;
    let lc = config.limits.expect("validated");
    let eps = config.epsilon.expect("validated");
    let sol = stage(report, "limits", || solve_abstract(g, &alpha, lc.resolution, eps, lc.min_class))?;
    report.intermediates.limit = Some(action_data(g, &sol.extraction.limit));
    report.tables.limits = Some(LimitsTable {
        moduli: sol.moduli.clone(),
        subsequence: sol.extraction.subsequence.clone(),
        stages: sol.extraction.stages.clone(),
        convergence: sol.extraction.convergence.clone(),
    });
    if let Some(honest) = &report.intermediates.action {
        let limit = report.intermediates.limit.as_ref().expect("just set");
        if limit.depth == honest.depth {
            if limit.generators != honest.generators {
                report.warnings.push("extracted limit differs from the honest action".into());
            }
        }
    }
    report.tables.first_admissible = Some(sol.solved.first_admissible);
    report.tables.rejected = sol
        .solved
        .rejected
        .iter()
        .map(|(n, e)| RejectedRow {
            n: *n,
            kind: e.kind().into(),
            message: e.to_string(),
        })
        .collect();
    record_solved(g, &alpha, &sol.solved.levels, report)?;
    check_bounds(report);
    Ok(())
}

fn matrix<T: crate::scalar::Real>(m: &CMatrix<T>) -> MatrixRows {
    to_rows(m)
}

/// Number of eigenvalues of `(p + p*)/2` above 1/2.
pub(super) fn spectral_rank(p: &CMatrix<f64>) -> usize {
    let h = (p + p.adjoint()) * Complex::new(0.5, 0.0);
    eigenvalues(&h).into_iter().filter(|&l| l > 0.5).count()
}

/// `(1 − √(1 − 4ε))/2`.
pub fn projection_bound(eps: f64) -> f64 {
    (1.0 - (1.0 - 4.0 * eps).sqrt()) / 2.0
}

pub(super) fn projection_row(instance: usize, eps: f64, p: &CMatrix<f64>, out: &CMatrix<f64>) -> LiftRow {
    LiftRow {
        instance,
        piece: None,
        size: p.nrows(),
        eps,
        input_defect: projection_defect(p),
        residual: projection_defect(out),
        distance: op_norm(&(out - p)),
        bound: Some(projection_bound(eps)),
        rank_in: Some(spectral_rank(p)),
        rank_out: Some(spectral_rank(out)),
    }
}

pub(super) fn isometry_row(instance: usize, piece: Option<usize>, eps: f64, v: &CMatrix<f64>, out: &CMatrix<f64>) -> LiftRow {
    LiftRow {
        instance,
        piece,
        size: v.nrows(),
        eps,
        input_defect: partial_isometry_defect(v),
        residual: partial_isometry_defect(out),
        distance: op_norm(&(out - v)),
        bound: None,
        rank_in: None,
        rank_out: None,
    }
}

/// Summary row of an orthogonal sum: residual is the larger of `‖Σ ṽ_i − v‖` and the
/// orthogonality defect, distance the largest piece distance.
pub(super) fn sum_row(instance: usize, eps: f64, v: &CMatrix<f64>, inputs: &[CMatrix<f64>], outs: &[CMatrix<f64>]) -> LiftRow {
    let n = v.nrows();
    let total = outs.iter().fold(CMatrix::<f64>::zeros(n, n), |acc, o| acc + o);
    let mut residual = op_norm(&(total - v));
    for (i, a) in outs.iter().enumerate() {
        for (j, b) in outs.iter().enumerate() {
            if i != j {
                residual = residual.max(op_norm(&(a.adjoint() * b))).max(op_norm(&(a * b.adjoint())));
            }
        }
    }
    let distance = outs.iter().zip(inputs).map(|(o, i)| op_norm(&(o - i))).fold(0.0, f64::max);
    LiftRow {
        instance,
        piece: None,
        size: n,
        eps,
        input_defect: partial_isometry_defect(v),
        residual,
        distance,
        bound: None,
        rank_in: None,
        rank_out: None,
    }
}

/// `‖f − Σ c_xy E_xy‖` maximized over the fixed units, with `c_xy = tr(E_yx f)/tr(E_yy)`:
/// zero exactly when every fixed unit lies in the span of the lifted units.
pub(super) fn membership_defect(lifted: &MatrixUnitFrame<f64>, fixed: &MatrixUnitFrame<f64>) -> f64 {
    let dim = lifted.dim();
    let mut worst = 0.0f64;
    for f in fixed.units.iter().flatten().flatten() {
        let mut proj = CMatrix::<f64>::zeros(dim, dim);
        for block in &lifted.units {
            for (x, row) in block.iter().enumerate() {
                for (y, exy) in row.iter().enumerate() {
                    let tr = block[y][y].trace().re;
                    if tr.abs() < 0.5 {
                        continue;
                    }
                    let c = (&block[y][x] * f).trace() / tr;
                    proj += exy * c;
                }
            }
        }
        worst = worst.max(op_norm(&(f - proj)));
    }
    worst
}

pub(super) fn frame_row(
    instance: usize,
    eps: f64,
    noisy: &MatrixUnitFrame<f64>,
    fixed: &MatrixUnitFrame<f64>,
    out: &MatrixUnitFrame<f64>,
) -> LiftRow {
    let mut distance = 0.0f64;
    for (a, b) in out.units.iter().flatten().flatten().zip(noisy.units.iter().flatten().flatten()) {
        distance = distance.max(op_norm(&(a - b)));
    }
    LiftRow {
        instance,
        piece: None,
        size: out.dim(),
        eps,
        input_defect: noisy.relation_defect(),
        residual: out.relation_defect().max(membership_defect(out, fixed)),
        distance,
        bound: None,
        rank_in: None,
        rank_out: None,
    }
}

pub(super) fn unit_names(frame: &MatrixUnitFrame<f64>, prefix: &str) -> Vec<(String, (usize, usize, usize))> {
    let mut out = Vec::new();
    for (n, block) in frame.units.iter().enumerate() {
        for i in 0..block.len() {
            for j in 0..block.len() {
                out.push((format!("{prefix}{n}_{i}_{j}"), (n, i, j)));
            }
        }
    }
    out
}

pub(super) fn frame_from(
    data: &BTreeMap<String, MatrixRows>,
    prefix: &str,
    blocks: &[usize],
) -> Result<MatrixUnitFrame<f64>, ScenarioError> {
    let mut units = Vec::new();
    for (n, &k) in blocks.iter().enumerate() {
        let mut b = Vec::new();
        for i in 0..k {
            let mut row = Vec::new();
            for j in 0..k {
                let key = format!("{prefix}{n}_{i}_{j}");
                let m = data.get(&key).ok_or_else(|| ScenarioError::MissingIntermediate(key.clone()))?;
                row.push(from_rows::<f64>(m)?);
            }
            b.push(row);
        }
        units.push(b);
    }
    Ok(MatrixUnitFrame::new(blocks.to_vec(), units)?)
}

fn store_frame(frame: &MatrixUnitFrame<f64>, prefix: &str, into: &mut BTreeMap<String, MatrixRows>) {
    for (name, (n, i, j)) in unit_names(frame, prefix) {
        into.insert(name, matrix(&frame.units[n][i][j]));
    }
}

fn run_lift(config: &ScenarioConfig, report: &mut RunReport) -> Result<(), ScenarioError> {
    let lc = config.lift.as_ref().expect("validated");
    let tau = config.tolerances.tau;
    let t = Instant::now();
    for inst in 0..lc.instances {
        let mut g = rng::stream(config.seed, inst as u64, 0);
        let eps = if lc.noise > 0.0 { lc.noise * g.gen_range(0.1..=1.0) } else { 0.0 };
        let mut data = MatrixData {
            instance: inst,
            ..Default::default()
        };
        match lc.kind {
            LiftKind::Projection => {
                let n = g.gen_range(2..=lc.size);
                let r = g.gen_range(0..=n);
                let p = random::projection::<f64, _>(n, r, &mut g) + random::hermitian_noise::<f64, _>(n, eps, &mut g);
                data.inputs.insert("p".into(), matrix(&p));
                report.intermediates.matrices.push(data);
                let out = project_almost_projection(&p, eps + eps * eps, tau)?;
                let last = report.intermediates.matrices.last_mut().expect("pushed");
                last.outputs.insert("p".into(), matrix(&out.value));
                report.tables.lift.push(projection_row(inst, eps, &p, &out.value));
                report.warnings.extend(out.report.warnings);
            }
            LiftKind::PartialIsometry => {
                let n = g.gen_range(2..=lc.size);
                let r = g.gen_range(1..=n);
                let v = exact_isometry(n, &(0..r).collect::<Vec<_>>(), &mut g) + random::noise::<f64, _>(n, eps, &mut g);
                data.inputs.insert("v".into(), matrix(&v));
                report.intermediates.matrices.push(data);
                let out = polar_partial_isometry(&v, eps, tau)?;
                let last = report.intermediates.matrices.last_mut().expect("pushed");
                last.outputs.insert("v".into(), matrix(&out.value));
                report.tables.lift.push(isometry_row(inst, None, eps, &v, &out.value));
                report.warnings.extend(out.report.warnings);
            }
            LiftKind::OrthogonalSum => {
                let k = lc.pieces.max(1);
                let n = g.gen_range(k.max(2)..=lc.size.max(k));
                let total = g.gen_range(k..=n);
                let mut cuts: Vec<usize> = (1..total).collect();
                cuts.shuffle(&mut g);
                let mut cuts: Vec<usize> = cuts.into_iter().take(k - 1).collect();
                cuts.sort_unstable();
                cuts.insert(0, 0);
                cuts.push(total);
                let u = random::unitary::<f64, _>(n, &mut g);
                let w = random::unitary::<f64, _>(n, &mut g);
                let piece = |lo: usize, hi: usize| -> CMatrix<f64> {
                    let d: Vec<f64> = (0..n).map(|i| if (lo..hi).contains(&i) { 1.0 } else { 0.0 }).collect();
                    &u * diagonal::<f64>(&d) * w.adjoint()
                };
                let v = piece(0, total);
                let vs: Vec<CMatrix<f64>> = cuts
                    .windows(2)
                    .map(|c| piece(c[0], c[1]) + random::noise::<f64, _>(n, eps, &mut g))
                    .collect();
                data.inputs.insert("v".into(), matrix(&v));
                for (i, m) in vs.iter().enumerate() {
                    data.inputs.insert(format!("v{i}"), matrix(m));
                }
                report.intermediates.matrices.push(data);
                let out = lift_orthogonal_sum(&vs, &v, eps, tau)?;
                let outs: Vec<CMatrix<f64>> = out.pieces.iter().map(|l| l.value.clone()).collect();
                let last = report.intermediates.matrices.last_mut().expect("pushed");
                for (i, m) in outs.iter().enumerate() {
                    last.outputs.insert(format!("v{i}"), matrix(m));
                }
                report.tables.lift.push(sum_row(inst, eps, &v, &vs, &outs));
                for (i, (a, b)) in vs.iter().zip(&outs).enumerate() {
                    report.tables.lift.push(isometry_row(inst, Some(i), eps, a, b));
                }
                report.warnings.extend(out.warnings);
            }
            LiftKind::FiniteDimensional => {
                let inc = lc.inclusion.as_ref().expect("validated");
                let fd = random::fd_instance::<f64, _>(&inc.small, &inc.big, &inc.multiplicity, inc.copies, eps, &mut g)?;
                store_frame(&fd.noisy, "e", &mut data.inputs);
                store_frame(&fd.fixed.frame, "f", &mut data.inputs);
                report.intermediates.matrices.push(data);
                let out = conditional_fd_lift(&fd.noisy, &fd.fixed, eps.max(lc.noise), tau)?;
                let last = report.intermediates.matrices.last_mut().expect("pushed");
                store_frame(&out.frame, "e", &mut last.outputs);
                report.tables.lift.push(frame_row(inst, eps, &fd.noisy, &fd.fixed.frame, &out.frame));
                for r in &out.reports {
                    report.warnings.extend(r.warnings.iter().cloned());
                }
            }
        }
    }
    report.timings.push(Timing {
        stage: "lift".into(),
        millis: t.elapsed().as_secs_f64() * 1e3,
    });
    Ok(())
}

/// `u diag(1_S) w*` for random unitaries.
fn exact_isometry<R: Rng>(n: usize, support: &[usize], g: &mut R) -> CMatrix<f64> {
    let u = random::unitary::<f64, _>(n, g);
    let w = random::unitary::<f64, _>(n, g);
    let d: Vec<f64> = (0..n).map(|i| if support.contains(&i) { 1.0 } else { 0.0 }).collect();
    &u * diagonal::<f64>(&d) * w.adjoint()
}

/// The rotation action, its element words and the distance-to-0 observable.
pub(super) fn circle_setup(group: &Group) -> Result<(CircleAction, Vec<Word>), ScenarioError> {
    let order = group.leaf(0).table.order() as i64;
    let action = CircleAction::cyclic_rotation(group, order)?;
    let elements = group.leaf_element_words(0).into_values().collect();
    Ok((action, elements))
}

pub fn distance_to_zero(x: &CirclePoint) -> f64 {
    let t = x.position();
    let t = t.numer().to_owned() as f64 / *t.denom() as f64;
    t.min(1.0 - t)
}

/// Covariance defect (max over non-identity elements), approximation defect and bound
/// for one stage.
pub(super) fn covariance_row(
    group: &Group,
    action: &CircleAction,
    elements: &[Word],
    level: &Level<CirclePoint>,
    stage: usize,
) -> Result<CovarianceRow, ScenarioError> {
    let mut defect = 0.0f64;
    let mut approximation = 0.0f64;
    for w in elements {
        approximation = approximation.max(level.approximation_defect(group, action, w)?.to_f64());
        if !w.is_empty() {
            defect = defect.max(covariance_defect(group, level, action, elements, distance_to_zero, w)?);
        }
    }
    Ok(CovarianceRow {
        stage,
        n: level.n(),
        defect,
        approximation,
        bound: covariance_bound(group, level, action, elements, 1.0)?,
    })
}

pub(super) fn embedding_row(
    group: &Group,
    action: &CircleAction,
    elements: &[Word],
    label: &str,
    n: usize,
    sample: &[CirclePoint],
    orbit: &[CirclePoint],
) -> Result<EmbeddingRow, ScenarioError> {
    let check = equivariant_embedding_check(group, action, elements, sample)?;
    let mut escaping: Vec<CirclePoint> = embedding_violations(group, action, elements, sample)?
        .into_iter()
        .map(|(_, p)| p)
        .collect();
    escaping.dedup();
    let is_moved = |x: &CirclePoint| orbit.binary_search(x).is_err();
    let moved = sample.iter().filter(|x| is_moved(x)).count();
    let escaping_moved = escaping.iter().filter(|x| is_moved(x)).count();
    Ok(match check {
        EmbeddingCheck::Closed => EmbeddingRow {
            sample: label.into(),
            n,
            closed: true,
            element: None,
            point: None,
            escaping_points: 0,
            moved_points: moved,
            escaping_moved: 0,
        },
        EmbeddingCheck::Witness { element, point, .. } => EmbeddingRow {
            sample: label.into(),
            n,
            closed: false,
            element: Some(element),
            point: Some(point.to_string()),
            escaping_points: escaping.len(),
            moved_points: moved,
            escaping_moved,
        },
    })
}

/// The sorted orbit of the base points.
pub(super) fn orbit_of(
    group: &Group,
    action: &CircleAction,
    elements: &[Word],
    base: &[CirclePoint],
) -> Result<Vec<CirclePoint>, ScenarioError> {
    use crate::actions::PointAction;
    let mut orbit = Vec::new();
    for b in base {
        for w in elements {
            orbit.push(action.act_point(group, w, b)?);
        }
    }
    orbit.sort();
    orbit.dedup();
    Ok(orbit)
}

fn run_covariance(config: &ScenarioConfig, r: &Resolved, report: &mut RunReport) -> Result<(), ScenarioError> {
    let g = &r.group;
    let c = config.circle.as_ref().expect("validated");
    let (action, elements) = circle_setup(g)?;
    let orbit = orbit_of(g, &action, &elements, &c.base)?;
    report.intermediates.orbit = orbit.iter().map(|p| p.to_string()).collect();
    let len = orbit.len() as i64;
    let mut factor: Vec<i64> = (1..=len).collect();
    factor.shuffle(&mut rng::stream(config.seed, u64::MAX - 1, 0));
    let t = Instant::now();
    let mut levels = Vec::new();
    for (i, e) in config.schedule.iter().enumerate() {
        let scale = c.magnitude.position() / Ratio::from_integer(1i64 << i.min(40));
        let displace = |x: &CirclePoint| {
            let k = orbit.binary_search(x).expect("orbit point");
            let moved = match c.moved {
                Moved::AllButOne => k > 0,
                Moved::First => k == 0,
            };
            if moved {
                scale * Ratio::new(factor[k], len)
            } else {
                Ratio::from_integer(0)
            }
        };
        let level = displaced_orbit_action(g, &action, &elements, &c.base, displace, e.n)?;
        report.tables.covariance.push(covariance_row(g, &action, &elements, &level, i)?);
        report.intermediates.levels.push(level_data(g, &level));
        levels.push(level);
    }
    report.timings.push(Timing {
        stage: "covariance".into(),
        millis: t.elapsed().as_secs_f64() * 1e3,
    });
    for w in report.tables.covariance.windows(2) {
        if w[1].defect > w[0].defect {
            report.warnings.push(format!("covariance defect increases at stage {}", w[1].stage));
        }
    }
    for row in &report.tables.covariance {
        if row.defect > row.bound + 1e-12 {
            report.warnings.push(format!("covariance defect above its bound at stage {}", row.stage));
        }
    }
    report.tables.embedding.push(embedding_row(g, &action, &elements, "orbit", 0, &orbit, &orbit)?);
    if let Some(last) = levels.last() {
        let row = embedding_row(g, &action, &elements, "displaced", last.n(), last.sample().points(), &orbit)?;
        if row.escaping_moved != row.moved_points {
            report.warnings.push(format!(
                "only {} of {} moved points have escaping images",
                row.escaping_moved, row.moved_points
            ));
        }
        report.tables.embedding.push(row);
    }
    Ok(())
}

/// Built-in configs for the CLI shortcuts.
pub fn preset_config(pipeline: Pipeline, seed: u64) -> ScenarioConfig {
    let entry = |n, m, k, c| ScheduleEntry { n, m, k, c };
    let base = ScenarioConfig {
        model: ModelConfig::Cantor { depth: 10 },
        groups: BTreeMap::new(),
        group: "D_inf".into(),
        action: Some(super::config::ActionConfig {
            depth: 2,
            generators: BTreeMap::new(),
        }),
        schedule: Vec::new(),
        epsilon: Some(Dyadic::pow(4)),
        radius: 2,
        seed,
        pipeline,
        tolerances: Default::default(),
        lift: None,
        limits: None,
        circle: None,
    };
    match pipeline {
        Pipeline::Solve | Pipeline::Uniformize => ScenarioConfig {
            schedule: (0..5).map(|i| entry(i, 4 + i as u32, 1, 2)).collect(),
            ..base
        },
        Pipeline::Witness => ScenarioConfig {
            model: ModelConfig::Cantor { depth: 8 },
            group: "Z/2".into(),
            action: Some(super::config::ActionConfig {
                depth: 1,
                generators: [("a.1".to_string(), vec![1, 0])].into(),
            }),
            epsilon: Some(Dyadic::pow(2)),
            ..base
        },
        Pipeline::Limits => ScenarioConfig {
            group: "Z/2*Z/2".into(),
            schedule: [4, 4, 5, 5, 6, 6, 7, 7, 8, 8, 8, 8]
                .iter()
                .enumerate()
                .map(|(i, &m)| entry(i, m, 1, 1))
                .collect(),
            limits: Some(super::config::LimitsConfig {
                resolution: 4,
                min_class: 1,
            }),
            ..base
        },
        Pipeline::Lift => ScenarioConfig {
            model: ModelConfig::Circle,
            group: "Z/2".into(),
            action: None,
            epsilon: None,
            lift: Some(super::config::LiftConfig {
                kind: LiftKind::Projection,
                instances: 20,
                size: 8,
                noise: 0.05,
                pieces: 2,
                inclusion: None,
            }),
            ..base
        },
        Pipeline::Covariance => ScenarioConfig {
            model: ModelConfig::Circle,
            group: "Z/2".into(),
            action: None,
            epsilon: None,
            schedule: (0..6).map(|i| entry(i, 0, 0, 0)).collect(),
            circle: Some(super::config::CircleConfig {
                base: vec![CirclePoint::from_fraction(1, 10).expect("valid")],
                magnitude: CirclePoint::from_fraction(1, 100).expect("valid"),
                moved: Moved::AllButOne,
            }),
            ..base
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_perturbation_solves_at_distance_zero() {
        let mut c = preset_config(Pipeline::Solve, 3);
        for e in &mut c.schedule {
            e.c = 0;
        }
        let r = run(&c).unwrap();
        assert_eq!(r.verdict.status, "solved");
        assert!(r.tables.distances.iter().all(|d| d.distance == Dyadic::ZERO));
    }

    #[test]
    fn witness_for_the_swap() {
        let r = run(&preset_config(Pipeline::Witness, 0)).unwrap();
        assert_eq!(r.exit_code, 0, "{:?}", r.verdict);
        assert!(r.tables.certificate.iter().all(|c| c.defect < Dyadic::pow(2)));
    }

    #[test]
    fn presets_run() {
        for p in [Pipeline::Uniformize, Pipeline::Lift, Pipeline::Limits, Pipeline::Covariance] {
            let r = run(&preset_config(p, 1)).unwrap();
            assert_eq!(r.exit_code, 0, "{p:?}: {:?}", r.verdict);
            assert!(r.warnings.is_empty(), "{p:?}: {:?}", r.warnings);
        }
    }

    #[test]
    fn deterministic() {
        let c = preset_config(Pipeline::Solve, 9);
        assert_eq!(run(&c).unwrap().deterministic_json(), run(&c).unwrap().deterministic_json());
    }
}
