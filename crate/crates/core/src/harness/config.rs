//! JSON problem files.
//!
//! ```json
//! {
//!   "num_outputs": 1,
//!   "models": [{"id": 1, "cost": 1.0}, {"id": 2, "cost": 0.01}],
//!   "covariance": {"inline": [[[1.0, 0.9], [0.9, 1.0]]]},
//!   "groups": {"kappa": 2, "deny": []},
//!   "mode": {"budget": 100.0},
//!   "constraints": {"caps": [{"model": 1, "max_samples": 16}]},
//!   "seed": 0,
//!   "replications": 100
//! }
//! ```
//!
//! `covariance` is one of `{"inline": [...]}` (one l x l matrix per output,
//! `null` for unknown entries), `{"pilot": {"samples": n, ...}}` or
//! `"synthetic"` (exact covariances of the synthetic evaluator). The optional
//! `evaluator` is `{"synthetic": {"loadings": ..., "offsets": ...}}` or
//! `{"command": {"program": ..., "args": [...], "input_dim": d}}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::estimate::draw_pilot;
use super::evaluator::{CommandEvaluator, Evaluator, SyntheticEvaluator};
use super::suite::SyntheticSuite;
use crate::covariance::{
    extrapolate_restricted, sample_covariance, CovarianceStore, ExtrapolationPlan, Provenance,
};
use crate::error::{Error, Result};
use crate::models::{enumerate_groups, Group, GroupSet, ModelSet, ModelSpec};
use crate::mosap::{json_pointer, Mode, MosapSpec};
use crate::sdp::SolverSettings;

pub const DEFAULT_REPLICATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default = "one")]
    pub num_outputs: usize,
    pub models: Vec<ModelConfig>,
    pub covariance: CovarianceSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluator: Option<EvaluatorConfig>,
    #[serde(default)]
    pub groups: GroupConfig,
    pub mode: ModeConfig,
    #[serde(default)]
    pub constraints: Constraints,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
}

fn one() -> usize {
    1
}

fn default_replications() -> usize {
    DEFAULT_REPLICATIONS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub id: usize,
    pub cost: f64,
    /// 1-based outputs this model produces; all outputs when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceSource {
    Inline(Vec<Vec<Vec<Option<f64>>>>),
    Pilot(PilotConfig),
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotConfig {
    pub samples: usize,
    /// Models without pilot data whose covariances are extrapolated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extrapolation: Option<ExtrapolationPlan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorConfig {
    Synthetic(SyntheticSuite),
    Command(CommandConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandConfig {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    pub input_dim: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    /// Largest group size; all models when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<usize>,
    #[serde(default)]
    pub deny: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeConfig {
    Budget(f64),
    Tolerance(Vec<f64>),
    Pareto(ParetoConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParetoConfig {
    pub tau_tilde: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraints {
    #[serde(default)]
    pub caps: Vec<SampleCap>,
}

/// Total samples over all groups containing `model`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleCap {
    pub model: usize,
    pub max_samples: f64,
}

/// Reads and validates a problem file.
pub fn load_problem(path: impl AsRef<Path>) -> Result<ProblemConfig> {
    let text = std::fs::read_to_string(path)?;
    ProblemConfig::from_json(&text)
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::config(json_pointer(e.path()), e.inner().to_string()))?;
        cfg.validate()?;
        Ok(cfg.canonical())
    }

    /// Normal form: models sorted by id with explicit outputs, explicit
    /// kappa, sorted and deduplicated deny list.
    pub fn canonical(mut self) -> Self {
        self.models.sort_by_key(|m| m.id);
        for m in &mut self.models {
            let mut outs = m.outputs.take().unwrap_or_else(|| (1..=self.num_outputs).collect());
            outs.sort_unstable();
            outs.dedup();
            m.outputs = Some(outs);
        }
        self.groups.kappa.get_or_insert(self.models.len());
        for g in &mut self.groups.deny {
            g.sort_unstable();
            g.dedup();
        }
        self.groups.deny.sort();
        self.groups.deny.dedup();
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn num_models(&self) -> usize {
        self.models.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.num_outputs;
        if m == 0 {
            return Err(Error::config("/num_outputs", "at least one output is required"));
        }
        if self.models.is_empty() {
            return Err(Error::config("/models", "at least one model is required"));
        }
        let l = self.models.len();
        let mut seen = vec![false; l];
        for (k, model) in self.models.iter().enumerate() {
            if model.id == 0 || model.id > l || seen[model.id - 1] {
                return Err(Error::config(
                    format!("/models/{k}/id"),
                    format!("ids must be 1..{l} without duplicates"),
                ));
            }
            seen[model.id - 1] = true;
            if !(model.cost.is_finite() && model.cost > 0.0) {
                return Err(Error::config(format!("/models/{k}/cost"), "cost must be positive and finite"));
            }
            if let Some(outs) = &model.outputs {
                if outs.is_empty() {
                    return Err(Error::config(format!("/models/{k}/outputs"), "a model must produce some output"));
                }
                if let Some(j) = outs.iter().position(|&s| s == 0 || s > m) {
                    return Err(Error::config(
                        format!("/models/{k}/outputs/{j}"),
                        format!("outputs are 1..{m}"),
                    ));
                }
                if model.id == 1 && (1..=m).any(|s| !outs.contains(&s)) {
                    return Err(Error::config(
                        format!("/models/{k}/outputs"),
                        "model 1 is the high-fidelity reference and must produce every output",
                    ));
                }
            }
        }

        let kappa = self.groups.kappa.unwrap_or(l);
        if kappa == 0 || kappa > l {
            return Err(Error::config("/groups/kappa", format!("kappa must lie in 1..={l}")));
        }
        for (k, g) in self.groups.deny.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::config(format!("/groups/deny/{k}"), "empty group"));
            }
            if let Some(j) = g.iter().position(|&i| i == 0 || i > l) {
                return Err(Error::config(format!("/groups/deny/{k}/{j}"), format!("model ids are 1..{l}")));
            }
        }

        self.validate_evaluator()?;
        self.validate_covariance()?;

        match &self.mode {
            ModeConfig::Budget(b) => {
                if !(b.is_finite() && *b > 0.0) {
                    return Err(Error::config("/mode/budget", "budget must be positive and finite"));
                }
            }
            ModeConfig::Tolerance(eps) => {
                if eps.len() != m {
                    return Err(Error::config("/mode/tolerance", format!("need one tolerance per output ({m})")));
                }
                if let Some(j) = eps.iter().position(|e| !(e.is_finite() && *e > 0.0)) {
                    return Err(Error::config(format!("/mode/tolerance/{j}"), "tolerance must be positive"));
                }
            }
            ModeConfig::Pareto(p) => {
                if p.tau_tilde.is_empty() {
                    return Err(Error::config("/mode/pareto/tau_tilde", "empty sweep grid"));
                }
                if let Some(j) = p.tau_tilde.iter().position(|t| !(t.is_finite() && *t >= 0.0)) {
                    return Err(Error::config(
                        format!("/mode/pareto/tau_tilde/{j}"),
                        "tau_tilde must be nonnegative",
                    ));
                }
            }
        }

        for (k, cap) in self.constraints.caps.iter().enumerate() {
            if cap.model == 0 || cap.model > l {
                return Err(Error::config(format!("/constraints/caps/{k}/model"), format!("model ids are 1..{l}")));
            }
            if !(cap.max_samples.is_finite() && cap.max_samples >= 0.0) {
                return Err(Error::config(
                    format!("/constraints/caps/{k}/max_samples"),
                    "cap must be nonnegative",
                ));
            }
            if cap.model == 1 && cap.max_samples < 1.0 {
                return Err(Error::config(
                    format!("/constraints/caps/{k}/max_samples"),
                    "model 1 needs at least one sample",
                ));
            }
        }
        if self.replications == 0 {
            return Err(Error::config("/replications", "at least one replication is required"));
        }
        self.model_set()?;
        Ok(())
    }

    fn validate_evaluator(&self) -> Result<()> {
        match &self.evaluator {
            None => Ok(()),
            Some(EvaluatorConfig::Synthetic(suite)) => {
                if let Some((ptr, msg)) = suite.shape_error() {
                    return Err(Error::config(format!("/evaluator/synthetic{ptr}"), msg));
                }
                if suite.num_outputs() != self.num_outputs {
                    return Err(Error::config(
                        "/evaluator/synthetic/loadings",
                        format!("expected {} outputs, got {}", self.num_outputs, suite.num_outputs()),
                    ));
                }
                if suite.num_models() != self.num_models() {
                    return Err(Error::config(
                        "/evaluator/synthetic/loadings/0",
                        format!("expected {} models, got {}", self.num_models(), suite.num_models()),
                    ));
                }
                Ok(())
            }
            Some(EvaluatorConfig::Command(c)) => {
                if c.program.is_empty() {
                    return Err(Error::config("/evaluator/command/program", "empty program"));
                }
                if c.input_dim == 0 {
                    return Err(Error::config("/evaluator/command/input_dim", "input dimension must be positive"));
                }
                Ok(())
            }
        }
    }

    fn validate_covariance(&self) -> Result<()> {
        let (l, m) = (self.num_models(), self.num_outputs);
        match &self.covariance {
            CovarianceSource::Inline(mats) => {
                if mats.len() != m {
                    return Err(Error::config("/covariance/inline", format!("need {m} matrices, got {}", mats.len())));
                }
                for (s, mat) in mats.iter().enumerate() {
                    if mat.len() != l {
                        return Err(Error::config(format!("/covariance/inline/{s}"), format!("need {l} rows")));
                    }
                    for (i, row) in mat.iter().enumerate() {
                        if row.len() != l {
                            return Err(Error::config(format!("/covariance/inline/{s}/{i}"), format!("need {l} entries")));
                        }
                        for (j, v) in row.iter().enumerate() {
                            if v.is_some_and(|v| !v.is_finite()) {
                                return Err(Error::config(format!("/covariance/inline/{s}/{i}/{j}"), "entry must be finite"));
                            }
                            if v.is_some() != mat[j][i].is_some() {
                                return Err(Error::config(
                                    format!("/covariance/inline/{s}/{i}/{j}"),
                                    "unknown entries must be symmetric",
                                ));
                            }
                        }
                    }
                }
                CovarianceStore::from_partial(mats, Provenance::Exact)
                    .map_err(|e| Error::config("/covariance/inline", e.to_string()))?;
                Ok(())
            }
            CovarianceSource::Pilot(p) => {
                if self.evaluator.is_none() {
                    return Err(Error::config("/covariance/pilot", "pilot sampling needs an evaluator"));
                }
                if p.samples < 2 {
                    return Err(Error::config("/covariance/pilot/samples", "need at least 2 pilot samples"));
                }
                if let Some(plan) = &p.extrapolation {
                    if plan.restricted == 0 || plan.restricted >= l {
                        return Err(Error::config(
                            "/covariance/pilot/extrapolation/restricted",
                            format!("must lie in 1..{l}"),
                        ));
                    }
                    if plan.couplings == 0 || plan.couplings + plan.restricted + 2 > l {
                        return Err(Error::config(
                            "/covariance/pilot/extrapolation/couplings",
                            "too many couplings for the number of piloted models",
                        ));
                    }
                    if !(plan.rate.is_finite() && plan.rate > 0.0) {
                        return Err(Error::config("/covariance/pilot/extrapolation/rate", "rate must be positive"));
                    }
                    if !(plan.ratio.is_finite() && plan.ratio > 1.0) {
                        return Err(Error::config("/covariance/pilot/extrapolation/ratio", "ratio must exceed 1"));
                    }
                }
                Ok(())
            }
            CovarianceSource::Synthetic => {
                if !matches!(self.evaluator, Some(EvaluatorConfig::Synthetic(_))) {
                    return Err(Error::config("/covariance", "synthetic covariances need a synthetic evaluator"));
                }
                Ok(())
            }
        }
    }

    pub fn model_set(&self) -> Result<ModelSet> {
        let specs: Vec<ModelSpec> = self
            .models
            .iter()
            .map(|m| ModelSpec {
                id: m.id,
                cost: m.cost,
                outputs: m.outputs.clone().unwrap_or_else(|| (1..=self.num_outputs).collect()),
            })
            .collect();
        ModelSet::new(&specs, self.num_outputs).map_err(|e| Error::config("/models", e.to_string()))
    }

    /// Enumerated groups with the user deny list applied.
    pub fn group_set(&self) -> Result<GroupSet> {
        let models = self.model_set()?;
        enumerate_groups(&models, self.groups.kappa.unwrap_or(models.len()), &self.groups.deny)
            .map_err(|e| Error::config("/groups", e.to_string()))
    }

    /// Groups that can serve no output because an inline covariance entry
    /// between two members is unknown, as sorted 1-based ids.
    pub fn auto_denied(&self) -> Result<Vec<Vec<usize>>> {
        let CovarianceSource::Inline(mats) = &self.covariance else {
            return Ok(Vec::new());
        };
        let store = CovarianceStore::from_partial(mats, Provenance::Exact)?;
        let groups = self.group_set()?;
        Ok(groups
            .groups()
            .iter()
            .enumerate()
            .filter(|(k, g)| (0..self.num_outputs).all(|s| !groups.allowed(s)[*k] || !store.group_known(s, g)))
            .map(|(_, g)| g.ids())
            .collect())
    }

    pub fn evaluator(&self) -> Result<Option<Box<dyn Evaluator>>> {
        Ok(match &self.evaluator {
            None => None,
            Some(EvaluatorConfig::Synthetic(suite)) => {
                let models = self.model_set()?;
                let produces = (0..models.len())
                    .map(|i| (0..self.num_outputs).map(|s| models.produces(i, s)).collect())
                    .collect();
                Some(Box::new(SyntheticEvaluator::new(suite.clone()).with_availability(produces)))
            }
            Some(EvaluatorConfig::Command(c)) => Some(Box::new(CommandEvaluator::spawn(
                &c.program,
                &c.args,
                c.input_dim,
                self.num_outputs,
            )?)),
        })
    }

    /// Mode for a single solve; Pareto configurations use the first grid value.
    pub fn mode(&self, groups: &GroupSet) -> Mode {
        match &self.mode {
            ModeConfig::Budget(b) => Mode::Budget(*b),
            ModeConfig::Tolerance(e) => Mode::Tolerance(e.clone()),
            ModeConfig::Pareto(p) => {
                let cnorm = groups.costs().iter().map(|c| c * c).sum::<f64>().sqrt();
                Mode::Pareto(p.tau_tilde[0] / cnorm)
            }
        }
    }

    /// Resolves covariances (drawing pilot samples if needed) and builds the
    /// allocation problem.
    pub fn resolve(&self, evaluator: Option<&dyn Evaluator>, settings: SolverSettings) -> Result<Problem> {
        let models = self.model_set()?;
        let all_groups = self.group_set()?;
        let store = match &self.covariance {
            CovarianceSource::Inline(mats) => CovarianceStore::from_partial(mats, Provenance::Exact)?,
            CovarianceSource::Synthetic => match &self.evaluator {
                Some(EvaluatorConfig::Synthetic(suite)) => suite.exact_store()?,
                _ => return Err(Error::config("/covariance", "synthetic covariances need a synthetic evaluator")),
            },
            CovarianceSource::Pilot(p) => {
                let ev = evaluator.ok_or_else(|| Error::config("/evaluator", "pilot sampling needs an evaluator"))?;
                pilot_store(&models, ev, p, self.seed, 0)?
            }
        };
        let mut spec = MosapSpec::new(&all_groups, &store, self.mode(&all_groups))?.with_settings(settings);
        for cap in &self.constraints.caps {
            let extra = spec.model_cap(cap.model, cap.max_samples);
            spec = spec.with_extra(extra)?;
        }
        Ok(Problem { models, store, spec })
    }
}

/// Pilot covariance estimate for realization `realization`: sample
/// covariances of the piloted models, then extrapolation if configured.
pub fn pilot_store(
    models: &ModelSet,
    evaluator: &dyn Evaluator,
    pilot: &PilotConfig,
    seed: u64,
    realization: u64,
) -> Result<CovarianceStore> {
    let restricted = pilot.extrapolation.as_ref().map_or(0, |p| p.restricted);
    let piloted: Vec<bool> = (0..models.len()).map(|i| i >= restricted).collect();
    let batch = draw_pilot(models, evaluator, pilot.samples, &piloted, seed, realization)?;
    let mut store = sample_covariance(&batch)?;
    if let Some(plan) = &pilot.extrapolation {
        store = extrapolate_restricted(&store, plan)?;
    }
    Ok(store)
}

/// A resolved problem ready to solve.
#[derive(Debug, Clone)]
pub struct Problem {
    pub models: ModelSet,
    pub store: CovarianceStore,
    /// Allocation problem in the configured mode, with sample caps.
    pub spec: MosapSpec,
}

impl Problem {
    pub fn contains_group(&self, ids: &[usize]) -> bool {
        Group::from_ids(ids, self.models.len()).is_ok() && self.spec.groups.position(ids).is_some()
    }
}
