use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::almost::DefectReport;
use crate::perm::Perm;
use crate::scalar::Dyadic;

use super::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    /// `solved`, `obstruction`, `insufficient_data` or `error`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl Verdict {
    pub fn solved() -> Self {
        Verdict {
            status: "solved".into(),
            kind: None,
            message: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub verdict: Verdict,
    pub exit_code: i32,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub tables: Tables,
    pub intermediates: Intermediates,
    /// Wall clock per stage; not part of the deterministic content.
    #[serde(default)]
    pub timings: Vec<Timing>,
}

impl RunReport {
    /// Turns warnings into a failing exit code.
    pub fn apply_strict(&mut self) {
        if self.exit_code == 0 && !self.warnings.is_empty() {
            self.exit_code = super::exit::STRICT_WARNINGS;
            self.verdict.status = "error".into();
            self.verdict.kind = Some("strict_warnings".into());
            self.verdict.message = Some(format!("{} warning(s)", self.warnings.len()));
        }
    }

    /// The report without timings, serialized; equal for equal configs and seeds.
    pub fn deterministic_json(&self) -> String {
        let mut r = self.clone();
        r.timings.clear();
        serde_json::to_string_pretty(&r).expect("report serializes")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tables {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defects: Option<DefectReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub distances: Vec<DistanceRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub relations: Vec<RelationRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rejected: Vec<RejectedRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_admissible: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub certificate: Vec<CertificateRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lift: Vec<LiftRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<LimitsTable>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub covariance: Vec<CovarianceRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub embedding: Vec<EmbeddingRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub n: usize,
    pub partition_depth: u32,
    pub generator: String,
    pub distance: Dyadic,
    pub bound: Dyadic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationRow {
    pub n: usize,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub n: usize,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateRow {
    pub word: String,
    pub defect: Dyadic,
}

/// One measured matrix. `piece` indexes pieces of an orthogonal sum; the row with
/// `piece = None` describes the whole instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftRow {
    pub instance: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub piece: Option<usize>,
    pub size: usize,
    pub eps: f64,
    pub input_defect: f64,
    pub residual: f64,
    pub distance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_in: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_out: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LimitsTable {
    pub moduli: Vec<crate::limits::ModulusRow>,
    pub subsequence: Vec<usize>,
    pub stages: Vec<Vec<usize>>,
    pub convergence: Vec<crate::limits::ConvergenceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceRow {
    pub stage: usize,
    pub n: usize,
    pub defect: f64,
    pub approximation: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    /// `orbit` or `displaced`.
    pub sample: String,
    pub n: usize,
    pub closed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<String>,
    /// Distinct sample points with some image outside the sample.
    pub escaping_points: usize,
    pub moved_points: usize,
    /// Moved points among the escaping ones.
    pub escaping_moved: usize,
}

/// Everything the tables are computed from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Intermediates {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ActionData>,
    /// The input almost-action.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<LevelData>,
    /// Exact solutions, keyed by generator.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub solved: Vec<LevelData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<ActionData>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub words: Vec<String>,
    /// Undisplaced orbit points of the circle pipeline.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub orbit: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub matrices: Vec<MatrixData>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionData {
    pub depth: u32,
    pub total_depth: u32,
    pub generators: BTreeMap<String, Perm>,
}

/// A sample (points as strings) with permutations keyed by words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelData {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition_depth: Option<u32>,
    pub points: Vec<String>,
    pub perms: BTreeMap<String, Perm>,
}

/// Row-major complex entries `[re, im]`.
pub type MatrixRows = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatrixData {
    pub instance: usize,
    pub inputs: BTreeMap<String, MatrixRows>,
    pub outputs: BTreeMap<String, MatrixRows>,
}
