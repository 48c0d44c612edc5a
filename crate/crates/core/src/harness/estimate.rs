use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evaluator::Evaluator;
use super::suite::{Domain, StreamKey};
use crate::baselines::{mfmc_estimate, mlmc_estimate, BaselineAllocation, Method};
use crate::covariance::PilotBatch;
use crate::error::{Error, Result};
use crate::models::ModelSet;
use crate::mosap::{Allocation, AllocationRecord, MosapSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    /// Mean of the estimates over replications, per output.
    pub mu_hat: Vec<f64>,
    /// e1^T Psi_s^+ e1 at the allocation used.
    pub predicted_variance: Vec<f64>,
    /// Sample variance over replications (needs at least 2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empirical_variance: Option<Vec<f64>>,
    /// Standard error of `mu_hat`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standard_error: Option<Vec<f64>>,
    pub replications: usize,
    /// Cost of one estimator, n^T c.
    pub total_cost: f64,
    pub allocation: AllocationRecord,
    /// log10(reference / variance) per output, when a reference is supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub efficiency: Option<Vec<f64>>,
    /// Estimates of every replication, `estimates[r][s]`.
    pub estimates: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    pub replications: usize,
}

fn eval_error(group: usize, sample: usize, message: String) -> Error {
    Error::Evaluator { group, sample, message }
}

fn checked_values(
    evaluator: &dyn Evaluator,
    model: usize,
    input: &[f64],
    group: usize,
    sample: usize,
) -> Result<Vec<Option<f64>>> {
    let v = evaluator
        .evaluate(model, input)
        .map_err(|e| eval_error(group, sample, format!("model {}: {e}", model + 1)))?;
    if v.len() != evaluator.num_outputs() {
        return Err(eval_error(group, sample, format!("model {} returned {} outputs", model + 1, v.len())));
    }
    if v.iter().flatten().any(|x| !x.is_finite()) {
        return Err(eval_error(group, sample, format!("model {} returned a non-finite value", model + 1)));
    }
    Ok(v)
}

fn require(v: Option<f64>, model: usize, output: usize, group: usize, sample: usize) -> Result<f64> {
    v.ok_or_else(|| eval_error(group, sample, format!("model {} gave no value for output {}", model + 1, output + 1)))
}

/// Pilot samples of the `piloted` models, all on the same inputs, from the
/// pilot domain (never shared with estimation streams).
pub fn draw_pilot(
    models: &ModelSet,
    evaluator: &dyn Evaluator,
    samples: usize,
    piloted: &[bool],
    seed: u64,
    realization: u64,
) -> Result<PilotBatch> {
    let (l, m) = (models.len(), models.num_outputs());
    let dim = evaluator.input_dim();
    let rows: Vec<Vec<Vec<Option<f64>>>> = (0..samples)
        .into_par_iter()
        .map(|j| {
            let input = StreamKey {
                seed,
                domain: Domain::Pilot,
                replication: realization,
                group: 0,
                sample: j as u64,
            }
            .input(dim);
            (0..l)
                .map(|i| {
                    if piloted[i] {
                        checked_values(evaluator, i, &input, 0, j)
                    } else {
                        Ok(vec![None; m])
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let available: Vec<Vec<bool>> = (0..m)
        .map(|s| (0..l).map(|i| piloted[i] && models.produces(i, s)).collect())
        .collect();
    let mut out = Vec::with_capacity(m);
    for s in 0..m {
        let mut x = DMatrix::from_element(samples, l, f64::NAN);
        for (j, row) in rows.iter().enumerate() {
            for i in (0..l).filter(|&i| available[s][i]) {
                x[(j, i)] = require(row[i][s], i, s, 0, j)?;
            }
        }
        out.push(x);
    }
    Ok(PilotBatch { samples: out, available })
}

/// Draws one estimator: `blocks[s][k]` holds the samples of group k for
/// output s (rows = samples, columns = members).
fn draw_groups(
    spec: &MosapSpec,
    counts: &[usize],
    evaluator: &dyn Evaluator,
    seed: u64,
    replication: u64,
) -> Result<Vec<Vec<DMatrix<f64>>>> {
    let m = spec.num_outputs();
    let dim = evaluator.input_dim();
    let groups = spec.groups.groups();
    let mut blocks: Vec<Vec<DMatrix<f64>>> = (0..m)
        .map(|s| {
            groups
                .iter()
                .enumerate()
                .map(|(k, g)| {
                    let rows = if spec.groups.allowed(s)[k] { counts[k] } else { 0 };
                    DMatrix::zeros(rows, g.len())
                })
                .collect()
        })
        .collect();
    for (k, g) in groups.iter().enumerate() {
        for j in 0..counts[k] {
            let input = StreamKey {
                seed,
                domain: Domain::Estimate,
                replication,
                group: k as u64,
                sample: j as u64,
            }
            .input(dim);
            // every member sees the same input
            for (a, &i) in g.indices().iter().enumerate() {
                let v = checked_values(evaluator, i, &input, k, j)?;
                for s in (0..m).filter(|&s| spec.groups.allowed(s)[k]) {
                    blocks[s][k][(j, a)] = require(v[s], i, s, k, j)?;
                }
            }
        }
    }
    Ok(blocks)
}

fn mean_and_variance(estimates: &[Vec<f64>], m: usize) -> (Vec<f64>, Option<Vec<f64>>) {
    let r = estimates.len() as f64;
    let mean: Vec<f64> = (0..m).map(|s| estimates.iter().map(|e| e[s]).sum::<f64>() / r).collect();
    let var = (estimates.len() > 1).then(|| {
        (0..m)
            .map(|s| estimates.iter().map(|e| (e[s] - mean[s]).powi(2)).sum::<f64>() / (r - 1.0))
            .collect()
    });
    (mean, var)
}

/// Samples the groups according to an integer allocation and combines them
/// into the estimator, `replications` times with independent streams.
pub fn run_estimate(
    spec: &MosapSpec,
    allocation: &Allocation,
    evaluator: &dyn Evaluator,
    opts: RunOptions,
) -> Result<EstimateReport> {
    let counts = allocation.counts().ok_or_else(|| {
        Error::Spec("estimation needs an integer allocation (run integer projection first)".into())
    })?;
    if counts.len() != spec.groups.len() {
        return Err(Error::AllocationLength {
            expected: spec.groups.len(),
            got: counts.len(),
        });
    }
    if evaluator.num_outputs() != spec.num_outputs() {
        return Err(Error::Spec(format!(
            "evaluator has {} outputs, problem has {}",
            evaluator.num_outputs(),
            spec.num_outputs()
        )));
    }
    if opts.replications == 0 {
        return Err(Error::Spec("at least one replication is required".into()));
    }
    let m = spec.num_outputs();
    let estimates: Vec<Vec<f64>> = (0..opts.replications)
        .into_par_iter()
        .map(|r| {
            let blocks = draw_groups(spec, &counts, evaluator, opts.seed, r as u64)?;
            (0..m)
                .map(|s| Ok(spec.systems[s].combine_samples(&counts, &blocks[s])?.mu1))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let (mu_hat, empirical_variance) = mean_and_variance(&estimates, m);
    let standard_error = empirical_variance
        .as_ref()
        .map(|v| v.iter().map(|v| (v / opts.replications as f64).sqrt()).collect());
    Ok(EstimateReport {
        mu_hat,
        predicted_variance: allocation.per_output_variance.clone(),
        empirical_variance,
        standard_error,
        replications: opts.replications,
        total_cost: counts.iter().zip(spec.costs()).map(|(&n, c)| n as f64 * c).sum(),
        allocation: allocation.record(None),
        efficiency: None,
        estimates,
    })
}

/// Normalized efficiency log10(reference / variance); 0 is the best case.
pub fn efficiency_report(variance: f64, reference: f64) -> Result<f64> {
    if !(variance.is_finite() && variance > 0.0) || !(reference.is_finite() && reference > 0.0) {
        return Err(Error::Spec(format!(
            "efficiency needs positive variances, got {variance} and reference {reference}"
        )));
    }
    Ok((reference / variance).log10())
}

impl EstimateReport {
    /// Fills in efficiencies from per-output reference variances, using the
    /// empirical variance when available and the predicted one otherwise.
    pub fn with_efficiency(mut self, reference: &[f64]) -> Result<Self> {
        let v = self.empirical_variance.as_ref().unwrap_or(&self.predicted_variance);
        self.efficiency = Some(
            v.iter()
                .zip(reference)
                .map(|(v, r)| efficiency_report(*v, *r))
                .collect::<Result<_>>()?,
        );
        Ok(self)
    }
}

/// Replicated MC/MLMC/MFMC estimates `[r][s]` for a baseline allocation.
pub fn simulate_baseline(
    alloc: &BaselineAllocation,
    models: &ModelSet,
    evaluator: &dyn Evaluator,
    opts: RunOptions,
) -> Result<Vec<Vec<f64>>> {
    let m = models.num_outputs();
    let dim = evaluator.input_dim();
    let key = |r: usize, group: usize, j: usize| StreamKey {
        seed: opts.seed,
        domain: Domain::Baseline,
        replication: r as u64,
        group: group as u64,
        sample: j as u64,
    };
    (0..opts.replications)
        .into_par_iter()
        .map(|r| match alloc.method {
            Method::Mlmc => {
                let ids = &alloc.model_subset;
                let mut levels: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(ids.len());
                for k in 0..ids.len() {
                    let members: Vec<usize> = if k + 1 < ids.len() {
                        vec![ids[k] - 1, ids[k + 1] - 1]
                    } else {
                        vec![ids[k] - 1]
                    };
                    let n = alloc.samples[k] as usize;
                    let mut per_output = vec![DMatrix::zeros(n, members.len()); m];
                    for j in 0..n {
                        let input = key(r, k, j).input(dim);
                        for (a, &i) in members.iter().enumerate() {
                            let v = checked_values(evaluator, i, &input, k, j)?;
                            for s in 0..m {
                                per_output[s][(j, a)] = require(v[s], i, s, k, j)?;
                            }
                        }
                    }
                    levels.push(per_output);
                }
                Ok((0..m)
                    .map(|s| {
                        let lv: Vec<DMatrix<f64>> = levels.iter().map(|l| l[s].clone()).collect();
                        mlmc_estimate(&lv)
                    })
                    .collect())
            }
            Method::Mc | Method::Mfmc => {
                // one common input stream, model i run on its first n_i inputs
                let ids = &alloc.model_subset;
                let total = alloc.samples.iter().copied().max().unwrap_or(0) as usize;
                let inputs: Vec<Vec<f64>> = (0..total).map(|j| key(r, 0, j).input(dim)).collect();
                let mut values: Vec<Vec<Vec<Option<f64>>>> = Vec::with_capacity(ids.len());
                for (&id, &n) in ids.iter().zip(&alloc.samples) {
                    values.push(
                        inputs[..n as usize]
                            .iter()
                            .enumerate()
                            .map(|(j, x)| checked_values(evaluator, id - 1, x, 0, j))
                            .collect::<Result<_>>()?,
                    );
                }
                (0..m)
                    .map(|s| {
                        if alloc.method == Method::Mc {
                            let n = alloc.samples[0] as usize;
                            let sum = (0..n).map(|j| require(values[0][j][s], 0, s, 0, j)).sum::<Result<f64>>()?;
                            return Ok(sum / n as f64);
                        }
                        let plan = &alloc.plans[s];
                        let rows = plan.counts.iter().copied().max().unwrap_or(0) as usize;
                        let mut x = DMatrix::zeros(rows, plan.order.len());
                        for (col, (&id, &n)) in plan.order.iter().zip(&plan.counts).enumerate() {
                            let slot = ids.iter().position(|&i| i == id).expect("plan model in subset");
                            for j in 0..n as usize {
                                x[(j, col)] = require(values[slot][j][s], id - 1, s, 0, j)?;
                            }
                        }
                        Ok(mfmc_estimate(&x, plan))
                    })
                    .collect()
            }
        })
        .collect()
}

/// Per-output mean and sample variance of replicated estimates.
pub fn summarize(estimates: &[Vec<f64>]) -> (Vec<f64>, Option<Vec<f64>>) {
    let m = estimates.first().map_or(0, Vec::len);
    mean_and_variance(estimates, m)
}
