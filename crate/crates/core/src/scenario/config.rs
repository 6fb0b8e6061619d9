use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::almost::{validate_schedule, ScheduleEntry};
use crate::cantor::CirclePoint;
use crate::group::{presets, FiniteGroupTable, Group, GroupSpec, LeafGroup, SubgroupEmbedding};
use crate::scalar::Dyadic;

use super::ScenarioError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelConfig,
    /// Named group definitions; `group` may refer to these or to a preset.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub groups: BTreeMap<String, GroupNode>,
    pub group: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ActionConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedule: Vec<ScheduleEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Dyadic>,
    #[serde(default = "default_radius")]
    pub radius: usize,
    #[serde(default)]
    pub seed: u64,
    pub pipeline: Pipeline,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lift: Option<LiftConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<LimitsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circle: Option<CircleConfig>,
}

fn default_radius() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Cantor { depth: u32 },
    Circle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Solve,
    Uniformize,
    Witness,
    Lift,
    Limits,
    Covariance,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Solve => "solve",
            Pipeline::Uniformize => "uniformize",
            Pipeline::Witness => "witness",
            Pipeline::Lift => "lift",
            Pipeline::Limits => "limits",
            Pipeline::Covariance => "covariance",
        }
    }
}

/// A structure tree node. Leaf groups are builtin names: `Z/n`, `S_k`, `1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GroupNode {
    Leaf {
        name: String,
        group: String,
    },
    Amalgam {
        left: Box<GroupNode>,
        right: LeafNode,
        subgroup: String,
        left_leaf: String,
        left_image: Vec<usize>,
        right_image: Vec<usize>,
    },
    Hnn {
        base: Box<GroupNode>,
        letter: String,
        subgroup: String,
        source_leaf: String,
        source_image: Vec<usize>,
        target_leaf: String,
        target_image: Vec<usize>,
        /// Defaults to the identity of the subgroup.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        iso: Option<Vec<usize>>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeafNode {
    pub name: String,
    pub group: String,
}

/// Honest action by depth-`depth` prefix substitutions; generators not listed are
/// derived, and an empty map asks for a random action drawn from the seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionConfig {
    pub depth: u32,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub generators: BTreeMap<String, Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Tolerance for perturbation matching, when used.
    #[serde(default, rename = "match", skip_serializing_if = "Option::is_none")]
    pub matching: Option<Dyadic>,
}

fn default_tau() -> f64 {
    1e-10
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tau: default_tau(),
            matching: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftKind {
    Projection,
    PartialIsometry,
    OrthogonalSum,
    FiniteDimensional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftConfig {
    pub kind: LiftKind,
    #[serde(default = "one")]
    pub instances: usize,
    /// Largest matrix order drawn.
    #[serde(default = "default_size")]
    pub size: usize,
    pub noise: f64,
    /// Pieces per orthogonal sum.
    #[serde(default = "two")]
    pub pieces: usize,
    /// Inclusion data for finite-dimensional lifts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inclusion: Option<InclusionConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InclusionConfig {
    pub small: Vec<usize>,
    pub big: Vec<usize>,
    pub multiplicity: Vec<Vec<usize>>,
    pub copies: usize,
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

fn default_size() -> usize {
    8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsConfig {
    pub resolution: u32,
    #[serde(default = "one")]
    pub min_class: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Moved {
    /// Every orbit point except the least one.
    AllButOne,
    /// Only the least orbit point.
    First,
}

/// A cyclic group rotating the circle, displaced orbit samples and a 1-Lipschitz
/// observable (distance to 0). Stage `i` of the schedule moves the `k`-th orbit point by
/// `magnitude · 2^-i · r_k / N`, where `r` is a seeded permutation of `1..=N` fixed
/// across stages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircleConfig {
    pub base: Vec<CirclePoint>,
    pub magnitude: CirclePoint,
    pub moved: Moved,
}

/// A validated config with its group resolved.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub group: Group,
    pub total_depth: Option<u32>,
}

/// Parses JSON, reporting the path of the first offending field.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Config {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

fn cfg_err(path: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Config {
        path: path.into(),
        message: message.into(),
    }
}

/// Preset group names accepted by `group`.
pub const PRESETS: &[&str] = &[
    "Z/2",
    "Z/3",
    "Z/4",
    "Z/6",
    "Z",
    "F2",
    "D_inf",
    "Z/2*Z/2",
    "Z/2*Z/3",
    "Z/3*Z/3",
    "Z/4*_Z/2 Z/4",
    "tower",
    "Z/2xZ",
];

pub fn preset(name: &str) -> Option<Group> {
    Some(match name {
        "Z" => presets::integers(),
        "F2" => presets::free_group_2(),
        "D_inf" | "Z/2*Z/2" => presets::infinite_dihedral(),
        "Z/2*Z/3" => presets::free_product(2, 3),
        "Z/3*Z/3" => presets::free_product(3, 3),
        "Z/4*_Z/2 Z/4" => presets::z4_amalgam_z2(),
        "tower" => presets::tower(),
        "Z/2xZ" => presets::z2_hnn_identity(),
        _ => {
            let n: usize = name.strip_prefix("Z/")?.parse().ok()?;
            if !(1..=64).contains(&n) {
                return None;
            }
            presets::cyclic(n)
        }
    })
}

fn build_spec(node: &GroupNode, path: &str) -> Result<GroupSpec, ScenarioError> {
    let table = |name: &str, p: &str| {
        FiniteGroupTable::builtin(name).map_err(|e| cfg_err(p, e.to_string()))
    };
    Ok(match node {
        GroupNode::Leaf { name, group } => GroupSpec::leaf(name, table(group, &format!("{path}.group"))?),
        GroupNode::Amalgam {
            left,
            right,
            subgroup,
            left_leaf,
            left_image,
            right_image,
        } => {
            let sub = table(subgroup, &format!("{path}.subgroup"))?;
            GroupSpec::Amalgam {
                left: Box::new(build_spec(left, &format!("{path}.left"))?),
                right: LeafGroup::new(right.name.clone(), table(&right.group, &format!("{path}.right.group"))?),
                delta_left: SubgroupEmbedding {
                    source: sub.clone(),
                    target_leaf: left_leaf.clone(),
                    image: left_image.clone(),
                },
                delta_right: SubgroupEmbedding {
                    source: sub,
                    target_leaf: right.name.clone(),
                    image: right_image.clone(),
                },
            }
        }
        GroupNode::Hnn {
            base,
            letter,
            subgroup,
            source_leaf,
            source_image,
            target_leaf,
            target_image,
            iso,
        } => {
            let sub = table(subgroup, &format!("{path}.subgroup"))?;
            let iso = iso.clone().unwrap_or_else(|| (0..sub.order()).collect());
            GroupSpec::Hnn {
                base: Box::new(build_spec(base, &format!("{path}.base"))?),
                stable_letter: letter.clone(),
                phi_source: SubgroupEmbedding {
                    source: sub.clone(),
                    target_leaf: source_leaf.clone(),
                    image: source_image.clone(),
                },
                phi_target: SubgroupEmbedding {
                    source: sub,
                    target_leaf: target_leaf.clone(),
                    image: target_image.clone(),
                },
                iso,
            }
        }
    })
}

pub fn resolve_group(config: &ScenarioConfig) -> Result<Group, ScenarioError> {
    if let Some(node) = config.groups.get(&config.group) {
        let path = format!("groups.{}", config.group);
        let spec = build_spec(node, &path)?;
        return Group::new(spec).map_err(|e| cfg_err(&path, e.to_string()));
    }
    preset(&config.group).ok_or_else(|| {
        cfg_err(
            "group",
            format!(
                "unknown group '{}': not defined under groups and not a preset ({})",
                config.group,
                PRESETS.join(", ")
            ),
        )
    })
}

/// Checks cross-field constraints and resolves the group.
pub fn validate(config: &ScenarioConfig) -> Result<Resolved, ScenarioError> {
    let group = resolve_group(config)?;
    let total_depth = match config.model {
        ModelConfig::Cantor { depth } => {
            if depth == 0 || depth > 24 {
                return Err(cfg_err("model.depth", "must be in 1..=24"));
            }
            Some(depth)
        }
        ModelConfig::Circle => None,
    };
    if !(config.tolerances.tau > 0.0 && config.tolerances.tau < 1.0) {
        return Err(cfg_err("tolerances.tau", "must be in (0, 1)"));
    }
    let needs_action = matches!(
        config.pipeline,
        Pipeline::Solve | Pipeline::Uniformize | Pipeline::Witness | Pipeline::Limits
    );
    if needs_action {
        let Some(d) = total_depth else {
            return Err(cfg_err("model", format!("pipeline {} needs the cantor model", config.pipeline.name())));
        };
        let a = config.action.as_ref().ok_or_else(|| cfg_err("action", "missing"))?;
        if a.depth == 0 || a.depth > d {
            return Err(cfg_err("action.depth", format!("must be in 1..={d}")));
        }
        for (name, p) in &a.generators {
            let w = group
                .parse_word(name)
                .map_err(|e| cfg_err(&format!("action.generators.{name}"), e.to_string()))?;
            if w.len() != 1 {
                return Err(cfg_err(&format!("action.generators.{name}"), "not a single generator"));
            }
            if p.len() != 1 << a.depth {
                return Err(cfg_err(
                    &format!("action.generators.{name}"),
                    format!("expected {} images", 1u32 << a.depth),
                ));
            }
        }
        let eps = config.epsilon.ok_or_else(|| cfg_err("epsilon", "missing"))?;
        match eps.exponent() {
            None => return Err(cfg_err("epsilon", "must be positive")),
            Some(k) if k > d => return Err(cfg_err("epsilon", format!("must be at least 2^-{d}"))),
            _ => {}
        }
        if config.pipeline != Pipeline::Witness {
            validate_schedule(&config.schedule, a.depth, d).map_err(|e| cfg_err("schedule", e.to_string()))?;
        }
    }
    match config.pipeline {
        Pipeline::Limits => {
            let l = config.limits.ok_or_else(|| cfg_err("limits", "missing"))?;
            if l.resolution == 0 || l.resolution > total_depth.unwrap_or(0).min(20) {
                return Err(cfg_err("limits.resolution", "out of range"));
            }
        }
        Pipeline::Lift => {
            let l = config.lift.as_ref().ok_or_else(|| cfg_err("lift", "missing"))?;
            if !(0.0..0.25).contains(&l.noise) {
                return Err(cfg_err("lift.noise", "must be in [0, 0.25)"));
            }
            if l.size < 2 || l.size > 32 {
                return Err(cfg_err("lift.size", "must be in 2..=32"));
            }
            if l.kind == LiftKind::FiniteDimensional && l.inclusion.is_none() {
                return Err(cfg_err("lift.inclusion", "missing"));
            }
        }
        Pipeline::Covariance => {
            if total_depth.is_some() {
                return Err(cfg_err("model", "covariance needs the circle model"));
            }
            if group.leaves().len() != 1 || !group.stables().is_empty() {
                return Err(cfg_err("group", "covariance needs a finite cyclic group"));
            }
            let c = config.circle.as_ref().ok_or_else(|| cfg_err("circle", "missing"))?;
            if c.base.is_empty() {
                return Err(cfg_err("circle.base", "empty"));
            }
            if config.schedule.is_empty() {
                return Err(cfg_err("schedule", "empty"));
            }
        }
        _ => {}
    }
    Ok(Resolved { group, total_depth })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SOLVE: &str = r#"{
        "model": {"kind": "cantor", "depth": 8},
        "group": "Z/2",
        "action": {"depth": 1, "generators": {"a.1": [1, 0]}},
        "schedule": [{"n": 0, "m": 4, "k": 1, "c": 0}],
        "epsilon": "1/8",
        "pipeline": "solve"
    }"#;

    #[test]
    fn parses_and_validates() {
        let c = parse_config(SOLVE).unwrap();
        assert_eq!(c.epsilon, Some(Dyadic::pow(3)));
        assert!(validate(&c).is_ok());
    }

    #[test]
    fn bad_group_reference_names_the_field() {
        let mut c = parse_config(SOLVE).unwrap();
        c.group = "nope".into();
        match validate(&c) {
            Err(ScenarioError::Config { path, .. }) => assert_eq!(path, "group"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn type_errors_carry_paths() {
        let text = SOLVE.replace("\"m\": 4", "\"m\": \"four\"");
        match parse_config(&text) {
            Err(ScenarioError::Config { path, .. }) => assert_eq!(path, "schedule[0].m"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inline_groups() {
        let text = SOLVE.replace(
            "\"group\": \"Z/2\"",
            r#""groups": {"g": {"kind": "amalgam", "left": {"kind": "leaf", "name": "a", "group": "Z/4"},
                "right": {"name": "b", "group": "Z/4"}, "subgroup": "Z/2", "left_leaf": "a",
                "left_image": [0, 2], "right_image": [0, 2]}}, "group": "g""#,
        );
        let c = parse_config(&text).unwrap();
        let g = resolve_group(&c).unwrap();
        assert_eq!(g.amalgams().len(), 1);
    }
}
