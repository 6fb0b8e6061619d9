use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::actions::{CylinderAction, PermTable};
use crate::almost::{defect_report, AlmostAction, Level};
use crate::cantor::{CantorPoint, CirclePoint, FiniteSample, MetricPoint};
use crate::group::{Group, Word};
use crate::lifting::{from_rows, CMatrix};
use crate::limits::{convergence_table, equicontinuity_modulus};
use crate::perm::Perm;
use crate::solver::solve_level;

use super::config::{validate, LiftKind, Pipeline};
use super::report::*;
use super::run::{
    certificate_rows, circle_setup, covariance_row, distance_rows, embedding_row, frame_from, isometry_row,
    projection_row, sum_row, uniformized_defects,
};
use super::ScenarioError;

/// A table entry that disagrees with its recomputation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub path: String,
    pub reported: String,
    pub recomputed: String,
}

struct Checker {
    tau: f64,
    out: Vec<Mismatch>,
}

impl Checker {
    fn exact<T: PartialEq + std::fmt::Debug>(&mut self, path: String, reported: &T, recomputed: &T) {
        if reported != recomputed {
            self.out.push(Mismatch {
                path,
                reported: format!("{reported:?}"),
                recomputed: format!("{recomputed:?}"),
            });
        }
    }

    fn close(&mut self, path: String, reported: f64, recomputed: f64) {
        let scale = 1.0 + reported.abs().max(recomputed.abs());
        if !((reported - recomputed).abs() <= self.tau * scale) {
            self.out.push(Mismatch {
                path,
                reported: reported.to_string(),
                recomputed: recomputed.to_string(),
            });
        }
    }

    fn count<T>(&mut self, path: &str, reported: &[T], recomputed: usize) {
        if reported.len() != recomputed {
            self.out.push(Mismatch {
                path: path.into(),
                reported: format!("{} rows", reported.len()),
                recomputed: format!("{recomputed} rows"),
            });
        }
    }
}

fn parse<P: FromStr>(s: &str, what: &str) -> Result<P, ScenarioError>
where
    P::Err: Display,
{
    s.parse()
        .map_err(|e: P::Err| ScenarioError::MissingIntermediate(format!("{what} ({s}: {e})")))
}

fn rebuild_level<P: MetricPoint + FromStr>(group: &Group, d: &LevelData) -> Result<Level<P>, ScenarioError>
where
    P::Err: Display,
{
    let points = d.points.iter().map(|s| parse::<P>(s, "sample point")).collect::<Result<Vec<_>, _>>()?;
    let sample = FiniteSample::new(d.n, points).map_err(|e| ScenarioError::MissingIntermediate(e.to_string()))?;
    let mut support = BTreeMap::new();
    for (w, p) in &d.perms {
        support.insert(group.parse_word(w)?, p.clone());
    }
    Ok(Level::new(group, sample, support)?)
}

fn rebuild_alpha(group: &Group, levels: &[LevelData]) -> Result<AlmostAction<CantorPoint>, ScenarioError> {
    if levels.is_empty() {
        return Err(ScenarioError::MissingIntermediate("intermediates.levels".into()));
    }
    let ls = levels.iter().map(|d| rebuild_level(group, d)).collect::<Result<Vec<_>, _>>()?;
    Ok(AlmostAction::new(ls)?)
}

fn rebuild_action(group: &Group, d: Option<&ActionData>, what: &str) -> Result<CylinderAction, ScenarioError> {
    let d = d.ok_or_else(|| ScenarioError::MissingIntermediate(what.into()))?;
    let given = generator_map(group, &d.generators)?;
    Ok(CylinderAction::new(group, d.depth, d.total_depth, &given)?)
}

fn generator_map(
    group: &Group,
    perms: &BTreeMap<String, Perm>,
) -> Result<BTreeMap<crate::group::Symbol, Perm>, ScenarioError> {
    perms
        .iter()
        .map(|(k, p)| Ok((group.parse_symbol(k)?, p.clone())))
        .collect()
}

fn rebuild_table(group: &Group, d: &LevelData) -> Result<PermTable, ScenarioError> {
    Ok(PermTable::from_partial(group, d.points.len(), &generator_map(group, &d.perms)?)?)
}

/// Recomputes every table of a report from its intermediates. An empty list means the
/// bundle is consistent.
pub fn verify(report: &RunReport) -> Result<Vec<Mismatch>, ScenarioError> {
    let config = &report.config;
    let resolved = validate(config)?;
    let g = &resolved.group;
    let mut c = Checker {
        tau: config.tolerances.tau.max(1e-12),
        out: Vec::new(),
    };
    let t = &report.tables;
    let im = &report.intermediates;
    match config.pipeline {
        Pipeline::Solve | Pipeline::Uniformize | Pipeline::Limits => {
            let action = rebuild_action(g, im.action.as_ref(), "intermediates.action")?;
            let alpha = rebuild_alpha(g, &im.levels)?;
            if config.pipeline == Pipeline::Solve {
                if let Some(d) = &t.defects {
                    let re = defect_report(g, &alpha, Some(&action))?;
                    check_defects(&mut c, d, &re);
                }
            }
            if config.pipeline == Pipeline::Uniformize {
                if let Some(d) = &t.defects {
                    let re = uniformized_defects(g, &action, &alpha, config.radius)?.defects;
                    check_defects(&mut c, d, &re);
                }
            }
            let beta = if config.pipeline == Pipeline::Limits {
                let limit = rebuild_action(g, im.limit.as_ref(), "intermediates.limit")?;
                if let Some(lt) = &t.limits {
                    let res = config.limits.expect("validated").resolution;
                    for (i, row) in lt.moduli.iter().enumerate() {
                        let w = g.parse_word(&row.word)?;
                        match equicontinuity_modulus(g, &alpha, &w, res) {
                            Ok(re) => c.exact(format!("tables.limits.moduli[{i}]"), &row.entries, &re.entries),
                            Err(e) => c.exact(format!("tables.limits.moduli[{i}]"), &format!("{:?}", row.entries), &e.to_string()),
                        }
                    }
                    let re = convergence_table(g, &alpha, &limit, &lt.subsequence)?;
                    c.count("tables.limits.convergence", &lt.convergence, re.len());
                    for (i, (a, b)) in lt.convergence.iter().zip(&re).enumerate() {
                        c.exact(format!("tables.limits.convergence[{i}]"), a, b);
                    }
                }
                limit
            } else {
                action
            };
            check_solved(&mut c, g, &alpha, report)?;
            if let Some(eps) = config.epsilon {
                for (i, r) in t.rejected.iter().enumerate() {
                    let Some(level) = alpha.level(r.n) else {
                        c.exact(format!("tables.rejected[{i}].n"), &r.n.to_string(), &"not scheduled".to_string());
                        continue;
                    };
                    let kind = match solve_level(g, &beta, level, eps) {
                        Ok(_) => "solved".to_string(),
                        Err(e) => e.kind().to_string(),
                    };
                    c.exact(format!("tables.rejected[{i}].kind"), &r.kind, &kind);
                }
            }
        }
        Pipeline::Witness => {
            let action = rebuild_action(g, im.action.as_ref(), "intermediates.action")?;
            let s = im
                .solved
                .first()
                .ok_or_else(|| ScenarioError::MissingIntermediate("intermediates.solved".into()))?;
            let table = rebuild_table(g, s)?;
            let points = s.points.iter().map(|p| parse::<CantorPoint>(p, "sample point")).collect::<Result<Vec<_>, _>>()?;
            let sample = FiniteSample::new(s.n, points).map_err(|e| ScenarioError::MissingIntermediate(e.to_string()))?;
            let words = im.words.iter().map(|w| g.parse_word(w)).collect::<Result<Vec<Word>, _>>()?;
            let re = certificate_rows(g, &action, &sample, &table, &words);
            c.count("tables.certificate", &t.certificate, re.len());
            for (i, (a, b)) in t.certificate.iter().zip(&re).enumerate() {
                c.exact(format!("tables.certificate[{i}]"), a, b);
            }
            check_relations(&mut c, g, report)?;
        }
        Pipeline::Lift => check_lift(&mut c, report)?,
        Pipeline::Covariance => {
            let (action, elements) = circle_setup(g)?;
            let levels = im
                .levels
                .iter()
                .map(|d| rebuild_level::<CirclePoint>(g, d))
                .collect::<Result<Vec<_>, _>>()?;
            c.count("tables.covariance", &t.covariance, levels.len());
            for (i, (row, l)) in t.covariance.iter().zip(&levels).enumerate() {
                let re = covariance_row(g, &action, &elements, l, i)?;
                let p = format!("tables.covariance[{i}]");
                c.exact(format!("{p}.n"), &row.n, &re.n);
                c.close(format!("{p}.defect"), row.defect, re.defect);
                c.close(format!("{p}.approximation"), row.approximation, re.approximation);
                c.close(format!("{p}.bound"), row.bound, re.bound);
            }
            let orbit = im
                .orbit
                .iter()
                .map(|p| parse::<CirclePoint>(p, "orbit point"))
                .collect::<Result<Vec<_>, _>>()?;
            for (i, row) in t.embedding.iter().enumerate() {
                let sample: Vec<CirclePoint> = if row.sample == "orbit" {
                    orbit.clone()
                } else {
                    let l = levels
                        .iter()
                        .find(|l| l.n() == row.n)
                        .ok_or_else(|| ScenarioError::MissingIntermediate(format!("level {}", row.n)))?;
                    l.sample().points().to_vec()
                };
                let re = embedding_row(g, &action, &elements, &row.sample, row.n, &sample, &orbit)?;
                c.exact(format!("tables.embedding[{i}]"), row, &re);
            }
        }
    }
    Ok(c.out)
}

fn check_defects(c: &mut Checker, reported: &crate::almost::DefectReport, re: &crate::almost::DefectReport) {
    c.count("tables.defects.rows", &reported.rows, re.rows.len());
    for (i, (a, b)) in reported.rows.iter().zip(&re.rows).enumerate() {
        c.exact(format!("tables.defects.rows[{i}]"), a, b);
    }
    c.count("tables.defects.maxima", &reported.maxima, re.maxima.len());
    for (i, (a, b)) in reported.maxima.iter().zip(&re.maxima).enumerate() {
        c.exact(format!("tables.defects.maxima[{i}]"), a, b);
    }
}

fn check_relations(c: &mut Checker, g: &Group, report: &RunReport) -> Result<(), ScenarioError> {
    let solved = &report.intermediates.solved;
    c.count("tables.relations", &report.tables.relations, solved.len());
    for (i, (row, s)) in report.tables.relations.iter().zip(solved).enumerate() {
        let table = rebuild_table(g, s)?;
        c.exact(format!("tables.relations[{i}].n"), &row.n, &s.n);
        c.exact(
            format!("tables.relations[{i}].violations"),
            &row.violations,
            &table.violated_relations(g).len(),
        );
    }
    Ok(())
}

fn check_solved(c: &mut Checker, g: &Group, alpha: &AlmostAction<CantorPoint>, report: &RunReport) -> Result<(), ScenarioError> {
    let mut re = Vec::new();
    for s in &report.intermediates.solved {
        let level = alpha
            .level(s.n)
            .ok_or_else(|| ScenarioError::MissingIntermediate(format!("input level {}", s.n)))?;
        let dp = s
            .partition_depth
            .ok_or_else(|| ScenarioError::MissingIntermediate(format!("partition depth of level {}", s.n)))?;
        re.extend(distance_rows(g, level, &rebuild_table(g, s)?, dp)?);
    }
    c.count("tables.distances", &report.tables.distances, re.len());
    for (i, (a, b)) in report.tables.distances.iter().zip(&re).enumerate() {
        c.exact(format!("tables.distances[{i}]"), a, b);
    }
    check_relations(c, g, report)
}

fn matrix(data: &BTreeMap<String, MatrixRows>, key: &str, inst: usize) -> Result<CMatrix<f64>, ScenarioError> {
    let m = data
        .get(key)
        .ok_or_else(|| ScenarioError::MissingIntermediate(format!("matrix {key} of instance {inst}")))?;
    Ok(from_rows::<f64>(m)?)
}

fn check_lift(c: &mut Checker, report: &RunReport) -> Result<(), ScenarioError> {
    let lc = report.config.lift.as_ref().expect("validated");
    let mut re = Vec::new();
    for (k, m) in report.intermediates.matrices.iter().enumerate() {
        let inst = m.instance;
        if m.outputs.is_empty() && k + 1 == report.intermediates.matrices.len() {
            // the failing instance: inputs only
            continue;
        }
        let eps = report
            .tables
            .lift
            .iter()
            .find(|r| r.instance == inst)
            .map(|r| r.eps)
            .ok_or_else(|| ScenarioError::MissingIntermediate(format!("lift row of instance {inst}")))?;
        match lc.kind {
            LiftKind::Projection => {
                re.push(projection_row(inst, eps, &matrix(&m.inputs, "p", inst)?, &matrix(&m.outputs, "p", inst)?));
            }
            LiftKind::PartialIsometry => {
                re.push(isometry_row(inst, None, eps, &matrix(&m.inputs, "v", inst)?, &matrix(&m.outputs, "v", inst)?));
            }
            LiftKind::OrthogonalSum => {
                let v = matrix(&m.inputs, "v", inst)?;
                let mut ins = Vec::new();
                let mut outs = Vec::new();
                for i in 0.. {
                    let key = format!("v{i}");
                    if !m.inputs.contains_key(&key) {
                        break;
                    }
                    ins.push(matrix(&m.inputs, &key, inst)?);
                    outs.push(matrix(&m.outputs, &key, inst)?);
                }
                re.push(sum_row(inst, eps, &v, &ins, &outs));
                for (i, (a, b)) in ins.iter().zip(&outs).enumerate() {
                    re.push(isometry_row(inst, Some(i), eps, a, b));
                }
            }
            LiftKind::FiniteDimensional => {
                let inc = lc.inclusion.as_ref().expect("validated");
                let noisy = frame_from(&m.inputs, "e", &inc.big)?;
                let fixed = frame_from(&m.inputs, "f", &inc.small)?;
                let out = frame_from(&m.outputs, "e", &inc.big)?;
                re.push(super::run::frame_row(inst, eps, &noisy, &fixed, &out));
            }
        }
    }
    c.count("tables.lift", &report.tables.lift, re.len());
    for (i, (a, b)) in report.tables.lift.iter().zip(&re).enumerate() {
        let p = format!("tables.lift[{i}]");
        c.exact(format!("{p}.instance"), &a.instance, &b.instance);
        c.exact(format!("{p}.piece"), &a.piece, &b.piece);
        c.exact(format!("{p}.size"), &a.size, &b.size);
        c.close(format!("{p}.input_defect"), a.input_defect, b.input_defect);
        c.close(format!("{p}.residual"), a.residual, b.residual);
        c.close(format!("{p}.distance"), a.distance, b.distance);
        match (a.bound, b.bound) {
            (Some(x), Some(y)) => c.close(format!("{p}.bound"), x, y),
            (x, y) => c.exact(format!("{p}.bound"), &x, &y),
        }
        c.exact(format!("{p}.rank_in"), &a.rank_in, &b.rank_in);
        c.exact(format!("{p}.rank_out"), &a.rank_out, &b.rank_out);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Dyadic;
    use crate::scenario::{preset_config, run};

    #[test]
    fn untouched_bundle_passes() {
        for p in [Pipeline::Solve, Pipeline::Witness, Pipeline::Lift, Pipeline::Covariance, Pipeline::Limits] {
            let r = run(&preset_config(p, 4)).unwrap();
            let json = serde_json::to_string(&r).unwrap();
            let back: RunReport = serde_json::from_str(&json).unwrap();
            assert_eq!(verify(&back).unwrap(), vec![], "{p:?}");
        }
    }

    #[test]
    fn edited_distance_is_flagged() {
        let mut r = run(&preset_config(Pipeline::Solve, 4)).unwrap();
        r.tables.distances[1].distance = Dyadic::pow(1);
        let m = verify(&r).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].path, "tables.distances[1]");
    }
}
