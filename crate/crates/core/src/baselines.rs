//! Monte Carlo, multilevel Monte Carlo and multifidelity Monte Carlo sample
//! allocations used as comparison baselines.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceStore;
use crate::error::{Error, Result};
use crate::models::ModelSet;
use crate::mosap::{AllocationRecord, Count};

/// Largest model count for which subsets are enumerated exhaustively.
pub const MAX_SUBSET_MODELS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mc,
    Mlmc,
    Mfmc,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mc => "mc",
            Method::Mlmc => "mlmc",
            Method::Mfmc => "mfmc",
        }
    }
}

/// Per-output MFMC plan: the model order used for that output, its nested
/// sample counts (prefixes of one common input stream) and control-variate
/// coefficients (alpha_1 = 1).
#[derive(Debug, Clone, PartialEq)]
pub struct OutputPlan {
    pub order: Vec<usize>,
    pub counts: Vec<u64>,
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineAllocation {
    pub method: Method,
    /// 1-based model ids. For MLMC in level order (level k couples entries k
    /// and k+1, the last level is the last model alone); otherwise ascending.
    pub model_subset: Vec<usize>,
    /// MLMC: samples per level. MC/MFMC: samples per model of `model_subset`.
    pub samples: Vec<u64>,
    /// Counts before ceiling (same layout as `samples`).
    pub continuous: Vec<f64>,
    pub total_cost: f64,
    pub predicted_variance: Vec<f64>,
    /// MFMC only: one plan per output.
    pub plans: Vec<OutputPlan>,
}

/// MFMC admissibility failure; not an error, so subset searches can go on.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection(pub String);

/// Optimal level counts n_k = eps^-2 sqrt(V_k / c_k) sum_j sqrt(V_j c_j),
/// ceiled (at least one sample per level).
pub fn mlmc_allocation(level_variances: &[f64], level_costs: &[f64], eps2: f64) -> Result<BaselineAllocation> {
    if level_variances.is_empty() || level_variances.len() != level_costs.len() {
        return Err(Error::Baseline("level variances and costs must be non-empty and aligned".into()));
    }
    if level_variances.iter().any(|v| !(v.is_finite() && *v >= 0.0))
        || level_costs.iter().any(|c| !(c.is_finite() && *c > 0.0))
        || !(eps2.is_finite() && eps2 > 0.0)
    {
        return Err(Error::Baseline("MLMC needs V >= 0, c > 0 and eps^2 > 0".into()));
    }
    let total: f64 = level_variances
        .iter()
        .zip(level_costs)
        .map(|(v, c)| (v * c).sqrt())
        .sum();
    let continuous: Vec<f64> = level_variances
        .iter()
        .zip(level_costs)
        .map(|(v, c)| (v / c).sqrt() * total / eps2)
        .collect();
    let samples: Vec<u64> = continuous.iter().map(|n| (n.ceil() as u64).max(1)).collect();
    let predicted = mlmc_variance(level_variances, &samples);
    Ok(BaselineAllocation {
        method: Method::Mlmc,
        model_subset: Vec::new(),
        total_cost: samples.iter().zip(level_costs).map(|(n, c)| *n as f64 * c).sum(),
        samples,
        continuous,
        predicted_variance: vec![predicted],
        plans: Vec::new(),
    })
}

fn mlmc_variance(level_variances: &[f64], samples: &[u64]) -> f64 {
    level_variances
        .iter()
        .zip(samples)
        .map(|(v, n)| v / *n as f64)
        .sum()
}

/// MFMC counts for models already ordered by decreasing |rho_1i| (rho[0] = 1).
/// Returns the continuous counts m_i, ceiled counts and coefficients.
pub fn mfmc_allocation(
    rho: &[f64],
    sigma: &[f64],
    costs: &[f64],
    eps2: f64,
) -> Result<std::result::Result<BaselineAllocation, Rejection>> {
    let k = rho.len();
    if k == 0 || sigma.len() != k || costs.len() != k {
        return Err(Error::Baseline("MFMC inputs must be non-empty and aligned".into()));
    }
    if sigma.iter().any(|s| !(s.is_finite() && *s > 0.0))
        || costs.iter().any(|c| !(c.is_finite() && *c > 0.0))
        || rho.iter().any(|r| !r.is_finite())
        || !(eps2.is_finite() && eps2 > 0.0)
    {
        return Err(Error::Baseline("MFMC needs sigma > 0, c > 0, finite rho and eps^2 > 0".into()));
    }
    let r2: Vec<f64> = (0..=k)
        .map(|i| if i == 0 { 1.0 } else if i < k { rho[i] * rho[i] } else { 0.0 })
        .collect();
    for i in 1..k {
        if r2[i] >= r2[i - 1] {
            return Ok(Err(Rejection(format!(
                "correlation ordering violated at position {}",
                i + 1
            ))));
        }
        if r2[i] <= 0.0 {
            return Ok(Err(Rejection(format!("model at position {} is uncorrelated", i + 1))));
        }
        let lhs = costs[i - 1] / costs[i];
        let rhs = (r2[i - 1] - r2[i]) / (r2[i] - r2[i + 1]);
        if lhs <= rhs {
            return Ok(Err(Rejection(format!(
                "cost ratio condition violated at position {} ({lhs} <= {rhs})",
                i + 1
            ))));
        }
    }
    let ratios: Vec<f64> = (0..k)
        .map(|i| {
            if i == 0 {
                1.0
            } else {
                (costs[0] * (r2[i] - r2[i + 1]) / (costs[i] * (1.0 - r2[1]))).sqrt()
            }
        })
        .collect();
    let reduction: f64 = (1..k).map(|i| (1.0 / ratios[i - 1] - 1.0 / ratios[i]) * r2[i]).sum();
    let m1 = sigma[0] * sigma[0] * (1.0 - reduction) / eps2;
    let continuous: Vec<f64> = ratios.iter().map(|r| r * m1).collect();
    let mut samples: Vec<u64> = continuous.iter().map(|m| (m.ceil() as u64).max(1)).collect();
    for i in 1..k {
        samples[i] = samples[i].max(samples[i - 1]);
    }
    let coefficients: Vec<f64> = (0..k)
        .map(|i| if i == 0 { 1.0 } else { rho[i] * sigma[0] / sigma[i] })
        .collect();
    let predicted = mfmc_variance(rho, sigma[0], &samples);
    Ok(Ok(BaselineAllocation {
        method: Method::Mfmc,
        model_subset: Vec::new(),
        total_cost: samples.iter().zip(costs).map(|(m, c)| *m as f64 * c).sum(),
        plans: vec![OutputPlan {
            order: Vec::new(),
            counts: samples.clone(),
            coefficients,
        }],
        samples,
        continuous,
        predicted_variance: vec![predicted],
    }))
}

/// Variance of the MFMC estimator with optimal coefficients at nested counts.
pub fn mfmc_variance(rho: &[f64], sigma1: f64, counts: &[u64]) -> f64 {
    let s2 = sigma1 * sigma1;
    let mut v = s2 / counts[0] as f64;
    for i in 1..rho.len() {
        v -= (1.0 / counts[i - 1] as f64 - 1.0 / counts[i] as f64) * rho[i] * rho[i] * s2;
    }
    v
}

fn cov(store: &CovarianceStore, s: usize, i: usize, j: usize) -> Option<f64> {
    store.get(s, i, j)
}

/// MLMC on one subset (0-based, model 0 first): levels ordered by decreasing
/// cost after model 1, ties by id; counts are the maximum over outputs.
fn mlmc_subset(models: &ModelSet, store: &CovarianceStore, subset: &[usize], eps2: &[f64]) -> Result<Option<BaselineAllocation>> {
    let costs = models.costs();
    let mut order = subset.to_vec();
    order[1..].sort_by(|&a, &b| costs[b].total_cmp(&costs[a]).then(a.cmp(&b)));
    let levels = order.len();
    let level_costs: Vec<f64> = (0..levels)
        .map(|k| if k + 1 < levels { costs[order[k]] + costs[order[k + 1]] } else { costs[order[k]] })
        .collect();
    let mut per_output_vars = Vec::new();
    let mut combined = vec![0.0f64; levels];
    for (s, &e) in eps2.iter().enumerate() {
        let mut vars = Vec::with_capacity(levels);
        for k in 0..levels {
            let v = if k + 1 < levels {
                let (i, j) = (order[k], order[k + 1]);
                match (cov(store, s, i, i), cov(store, s, j, j), cov(store, s, i, j)) {
                    (Some(a), Some(b), Some(c)) => (a + b - 2.0 * c).max(0.0),
                    _ => return Ok(None),
                }
            } else {
                match cov(store, s, order[k], order[k]) {
                    Some(v) => v,
                    None => return Ok(None),
                }
            };
            vars.push(v);
        }
        let a = mlmc_allocation(&vars, &level_costs, e)?;
        for (c, v) in combined.iter_mut().zip(&a.continuous) {
            *c = c.max(*v);
        }
        per_output_vars.push(vars);
    }
    let samples: Vec<u64> = combined.iter().map(|n| (n.ceil() as u64).max(1)).collect();
    Ok(Some(BaselineAllocation {
        method: Method::Mlmc,
        model_subset: order.iter().map(|i| i + 1).collect(),
        total_cost: samples.iter().zip(&level_costs).map(|(n, c)| *n as f64 * c).sum(),
        predicted_variance: per_output_vars.iter().map(|v| mlmc_variance(v, &samples)).collect(),
        samples,
        continuous: combined,
        plans: Vec::new(),
    }))
}

/// MFMC on one subset: each output orders the models by its own correlations
/// and takes nested prefixes of a common input stream; each model is run on
/// the largest prefix any output needs.
fn mfmc_subset(models: &ModelSet, store: &CovarianceStore, subset: &[usize], eps2: &[f64]) -> Result<Option<BaselineAllocation>> {
    let costs = models.costs();
    let mut per_model = vec![0u64; subset.len()];
    let mut per_model_cont = vec![0.0f64; subset.len()];
    let mut plans = Vec::new();
    let mut predicted = Vec::new();
    for (s, &e) in eps2.iter().enumerate() {
        let mut stats = Vec::with_capacity(subset.len());
        for &i in subset {
            let (Some(v1), Some(vi), Some(c1i)) = (cov(store, s, 0, 0), cov(store, s, i, i), cov(store, s, 0, i)) else {
                return Ok(None);
            };
            if v1 <= 0.0 || vi <= 0.0 {
                return Ok(None);
            }
            let rho = (c1i / (v1 * vi).sqrt()).clamp(-1.0, 1.0);
            stats.push((i, rho, vi.sqrt()));
        }
        stats[1..].sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
        stats[0].1 = 1.0;
        let rho: Vec<f64> = stats.iter().map(|x| x.1).collect();
        let sigma: Vec<f64> = stats.iter().map(|x| x.2).collect();
        let c: Vec<f64> = stats.iter().map(|x| costs[x.0]).collect();
        let a = match mfmc_allocation(&rho, &sigma, &c, e)? {
            Ok(a) => a,
            Err(_) => return Ok(None),
        };
        for (pos, x) in stats.iter().enumerate() {
            let slot = subset.iter().position(|&i| i == x.0).unwrap();
            per_model[slot] = per_model[slot].max(a.samples[pos]);
            per_model_cont[slot] = per_model_cont[slot].max(a.continuous[pos]);
        }
        predicted.push(a.predicted_variance[0]);
        let mut plan = a.plans.into_iter().next().unwrap();
        plan.order = stats.iter().map(|x| x.0 + 1).collect();
        plans.push(plan);
    }
    Ok(Some(BaselineAllocation {
        method: Method::Mfmc,
        model_subset: subset.iter().map(|i| i + 1).collect(),
        total_cost: subset.iter().zip(&per_model).map(|(&i, &n)| n as f64 * costs[i]).sum(),
        samples: per_model,
        continuous: per_model_cont,
        predicted_variance: predicted,
        plans,
    }))
}

/// Cheapest configuration over all model subsets containing model 1 whose
/// members produce every output, at tolerance eps2[s] for output s.
pub fn multi_output_baseline(
    method: Method,
    models: &ModelSet,
    store: &CovarianceStore,
    eps2: &[f64],
) -> Result<BaselineAllocation> {
    let m = models.num_outputs();
    if eps2.len() != m || eps2.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::Baseline(format!("need {m} positive tolerances")));
    }
    if method == Method::Mc {
        let mut n = 0.0f64;
        let mut vars = Vec::new();
        for (s, e) in eps2.iter().enumerate() {
            let v = store
                .variance(s, 0)
                .ok_or(Error::UnknownCovariance { output: s + 1, i: 1, j: 1 })?;
            vars.push(v);
            n = n.max(v / e);
        }
        let count = (n.ceil() as u64).max(1);
        return Ok(BaselineAllocation {
            method,
            model_subset: vec![1],
            samples: vec![count],
            continuous: vec![n],
            total_cost: count as f64 * models.costs()[0],
            predicted_variance: vars.iter().map(|v| v / count as f64).collect(),
            plans: Vec::new(),
        });
    }
    if models.len() > MAX_SUBSET_MODELS {
        return Err(Error::Baseline(format!(
            "subset enumeration is limited to {MAX_SUBSET_MODELS} models, got {}",
            models.len()
        )));
    }
    let candidates: Vec<usize> = (1..models.len())
        .filter(|&i| (0..m).all(|s| models.produces(i, s)))
        .collect();
    let results: Vec<Result<Option<BaselineAllocation>>> = (0u32..1 << candidates.len())
        .into_par_iter()
        .map(|mask| {
            let mut subset = vec![0];
            subset.extend(
                candidates
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| mask >> b & 1 == 1)
                    .map(|(_, &i)| i),
            );
            match method {
                Method::Mlmc => mlmc_subset(models, store, &subset, eps2),
                Method::Mfmc => mfmc_subset(models, store, &subset, eps2),
                Method::Mc => unreachable!(),
            }
        })
        .collect();
    let mut best: Option<BaselineAllocation> = None;
    for r in results {
        let Some(a) = r? else { continue };
        let replace = match &best {
            None => true,
            Some(b) => {
                let mut ka = a.model_subset.clone();
                let mut kb = b.model_subset.clone();
                ka.sort_unstable();
                kb.sort_unstable();
                a.total_cost < b.total_cost || (a.total_cost == b.total_cost && ka < kb)
            }
        };
        if replace {
            best = Some(a);
        }
    }
    best.ok_or_else(|| match method {
        Method::Mfmc => Error::Baseline("no admissible MFMC configuration".into()),
        _ => Error::Baseline("no usable model subset".into()),
    })
}

impl BaselineAllocation {
    /// Coupled sample groups and their counts (1-based ids). MLMC levels map to
    /// pairs; nested MFMC runs map to the sets of models sharing an input.
    pub fn groups(&self) -> Vec<(Vec<usize>, u64)> {
        match self.method {
            Method::Mlmc => {
                let l = self.model_subset.len();
                (0..l)
                    .map(|k| {
                        let g = if k + 1 < l {
                            let mut g = vec![self.model_subset[k], self.model_subset[k + 1]];
                            g.sort_unstable();
                            g
                        } else {
                            vec![self.model_subset[k]]
                        };
                        (g, self.samples[k])
                    })
                    .collect()
            }
            Method::Mc | Method::Mfmc => {
                let mut levels: Vec<u64> = self.samples.clone();
                levels.sort_unstable();
                levels.dedup();
                let mut prev = 0;
                let mut out = Vec::new();
                for lvl in levels {
                    let members: Vec<usize> = self
                        .model_subset
                        .iter()
                        .zip(&self.samples)
                        .filter(|(_, &n)| n >= lvl)
                        .map(|(&i, _)| i)
                        .collect();
                    out.push((members, lvl - prev));
                    prev = lvl;
                }
                out
            }
        }
    }

    pub fn record(&self) -> AllocationRecord {
        let groups = self.groups();
        AllocationRecord {
            mode: "tolerance".into(),
            method: Some(self.method.name().into()),
            n: groups.iter().map(|(_, n)| Count::Integer(*n)).collect(),
            groups: groups.into_iter().map(|(g, _)| g).collect(),
            total_cost: self.total_cost,
            per_output_variance: self.predicted_variance.clone(),
            solver: crate::mosap::SolverSummary { iterations: 0, gap: 0.0 },
            relaxation_ratio: None,
            fallback: None,
        }
    }
}

/// MLMC estimate from per-level samples: level k has columns (fine, coarse),
/// the last level a single column.
pub fn mlmc_estimate(levels: &[DMatrix<f64>]) -> f64 {
    levels
        .iter()
        .map(|b| {
            let n = b.nrows() as f64;
            if b.ncols() == 2 {
                b.row_iter().map(|r| r[0] - r[1]).sum::<f64>() / n
            } else {
                b.column(0).sum() / n
            }
        })
        .sum()
}

/// MFMC estimate for one output: `samples` rows are the common input stream,
/// columns follow the plan's order.
pub fn mfmc_estimate(samples: &DMatrix<f64>, plan: &OutputPlan) -> f64 {
    let mean = |col: usize, n: u64| samples.column(col).rows(0, n as usize).sum() / n as f64;
    let mut est = mean(0, plan.counts[0]);
    for i in 1..plan.counts.len() {
        est += plan.coefficients[i] * (mean(i, plan.counts[i]) - mean(i, plan.counts[i - 1]));
    }
    est
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::Provenance;

    #[test]
    fn mlmc_examples() {
        let a = mlmc_allocation(&[2.0], &[1.0], 0.01).unwrap();
        assert!((a.continuous[0] - 200.0).abs() < 1e-9);
        let eps2 = 1e-4;
        let a = mlmc_allocation(&[1.0, 0.01], &[0.01, 1.0], eps2).unwrap();
        assert!((a.continuous[0] - 2.0 / eps2).abs() < 1e-6);
        assert!((a.continuous[1] - 0.02 / eps2).abs() < 1e-8);
        assert!(a.predicted_variance[0] <= eps2);
    }

    #[test]
    fn mfmc_single_and_rejection() {
        let a = mfmc_allocation(&[1.0], &[2.0], &[1.0], 0.04).unwrap().unwrap();
        assert!((a.continuous[0] - 100.0).abs() < 1e-9);
        assert_eq!(a.samples, vec![100]);
        let r = mfmc_allocation(&[1.0, 0.5, 0.8], &[1.0; 3], &[1.0, 0.1, 0.01], 0.01).unwrap();
        assert!(r.is_err());
        // scaling all costs does not change admissibility
        for scale in [1e-3, 1.0, 1e3] {
            let c = [1.0 * scale, 5.0 * scale];
            assert!(mfmc_allocation(&[1.0, 0.9], &[1.0; 2], &c, 0.01).unwrap().is_err());
            let c = [1.0 * scale, 0.01 * scale];
            assert!(mfmc_allocation(&[1.0, 0.9], &[1.0; 2], &c, 0.01).unwrap().is_ok());
        }
    }

    #[test]
    fn group_view_of_mfmc() {
        let a = BaselineAllocation {
            method: Method::Mfmc,
            model_subset: vec![1, 2, 3],
            samples: vec![4, 40, 400],
            continuous: vec![],
            total_cost: 0.0,
            predicted_variance: vec![],
            plans: vec![],
        };
        assert_eq!(
            a.groups(),
            vec![(vec![1, 2, 3], 4), (vec![2, 3], 36), (vec![3], 360)]
        );
    }

    #[test]
    fn identical_outputs_match_single_output() {
        let c = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, 0.7, 0.9, 1.0, 0.8, 0.7, 0.8, 1.0]);
        let one = CovarianceStore::from_dense(std::slice::from_ref(&c), Provenance::Exact).unwrap();
        let two = CovarianceStore::from_dense(&[c.clone(), c], Provenance::Exact).unwrap();
        let m1 = ModelSet::uniform(&[1.0, 0.05, 0.002], 1).unwrap();
        let m2 = ModelSet::uniform(&[1.0, 0.05, 0.002], 2).unwrap();
        for method in [Method::Mc, Method::Mlmc, Method::Mfmc] {
            let a = multi_output_baseline(method, &m1, &one, &[1e-3]).unwrap();
            let b = multi_output_baseline(method, &m2, &two, &[1e-3, 1e-3]).unwrap();
            assert_eq!(a.samples, b.samples);
            assert_eq!(a.total_cost, b.total_cost);
        }
    }
}
