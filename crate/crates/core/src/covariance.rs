//! Model-output covariances: estimation from pilot samples, SPD repair,
//! extraction of group blocks, and Richardson-based reconstruction of
//! covariances that cannot be sampled.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{principal_submatrix, relative_asymmetry, sorted_eigen, symmetrize};
use crate::models::Group;

/// Default relative eigenvalue floor used when repairing covariance blocks.
pub const DEFAULT_SPD_FLOOR: f64 = 1e-10;

const ASYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Pilot,
    Extrapolated,
    Exact,
    /// Reconstructed entry whose implied correlation exceeded 1 and was clipped.
    Clipped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    value: f64,
    provenance: Provenance,
}

/// Per-output symmetric covariance matrices with a known/unknown mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceStore {
    num_models: usize,
    entries: Vec<Vec<Option<Entry>>>,
}

impl CovarianceStore {
    /// Everything unknown.
    pub fn empty(num_models: usize, num_outputs: usize) -> Self {
        Self {
            num_models,
            entries: vec![vec![None; num_models * num_models]; num_outputs],
        }
    }

    /// Fully known matrices, one per output.
    pub fn from_dense(matrices: &[DMatrix<f64>], provenance: Provenance) -> Result<Self> {
        let l = matrices.first().map_or(0, DMatrix::nrows);
        let mut store = Self::empty(l, matrices.len());
        for (s, c) in matrices.iter().enumerate() {
            if c.nrows() != l || c.ncols() != l {
                return Err(Error::Covariance(format!(
                    "output {} matrix is {}x{}, expected {l}x{l}",
                    s + 1,
                    c.nrows(),
                    c.ncols()
                )));
            }
            let asym = relative_asymmetry(c);
            if asym > ASYMMETRY_TOL {
                return Err(Error::NotSymmetric { asymmetry: asym });
            }
            for i in 0..l {
                for j in i..l {
                    store.set(s, i, j, c[(i, j)], provenance)?;
                }
            }
        }
        Ok(store)
    }

    /// Dense arrays with `None` marking unknown entries (the JSON `null` form).
    pub fn from_partial(matrices: &[Vec<Vec<Option<f64>>>], provenance: Provenance) -> Result<Self> {
        let l = matrices.first().map_or(0, Vec::len);
        let mut store = Self::empty(l, matrices.len());
        for (s, rows) in matrices.iter().enumerate() {
            if rows.len() != l || rows.iter().any(|r| r.len() != l) {
                return Err(Error::Covariance(format!(
                    "output {} matrix must be {l}x{l}",
                    s + 1
                )));
            }
            let scale = rows
                .iter()
                .flatten()
                .flatten()
                .fold(0.0_f64, |a, v| a.max(v.abs()));
            for i in 0..l {
                for j in i..l {
                    match (rows[i][j], rows[j][i]) {
                        (Some(a), Some(b)) => {
                            if (a - b).abs() > ASYMMETRY_TOL * scale {
                                return Err(Error::NotSymmetric {
                                    asymmetry: (a - b).abs() / scale,
                                });
                            }
                            store.set(s, i, j, 0.5 * (a + b), provenance)?;
                        }
                        (None, None) => {}
                        _ => {
                            return Err(Error::Covariance(format!(
                                "output {}: entry ({},{}) known on one side of the diagonal only",
                                s + 1,
                                i + 1,
                                j + 1
                            )))
                        }
                    }
                }
            }
        }
        Ok(store)
    }

    pub fn num_models(&self) -> usize {
        self.num_models
    }

    pub fn num_outputs(&self) -> usize {
        self.entries.len()
    }

    /// Sets the (i,j) and (j,i) entries of output `s` (all 0-based).
    pub fn set(&mut self, s: usize, i: usize, j: usize, value: f64, provenance: Provenance) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::Covariance(format!(
                "non-finite covariance ({},{}) for output {}",
                i + 1,
                j + 1,
                s + 1
            )));
        }
        if i == j && value < 0.0 {
            return Err(Error::Covariance(format!(
                "negative variance {value} for model {} output {}",
                i + 1,
                s + 1
            )));
        }
        let l = self.num_models;
        let e = Some(Entry { value, provenance });
        self.entries[s][i * l + j] = e;
        self.entries[s][j * l + i] = e;
        Ok(())
    }

    pub fn unset(&mut self, s: usize, i: usize, j: usize) {
        let l = self.num_models;
        self.entries[s][i * l + j] = None;
        self.entries[s][j * l + i] = None;
    }

    pub fn get(&self, s: usize, i: usize, j: usize) -> Option<f64> {
        self.entries[s][i * self.num_models + j].map(|e| e.value)
    }

    pub fn provenance(&self, s: usize, i: usize, j: usize) -> Option<Provenance> {
        self.entries[s][i * self.num_models + j].map(|e| e.provenance)
    }

    pub fn is_known(&self, s: usize, i: usize, j: usize) -> bool {
        self.entries[s][i * self.num_models + j].is_some()
    }

    /// Every pairwise entry of the group is known for output `s`.
    pub fn group_known(&self, s: usize, group: &Group) -> bool {
        let idx = group.indices();
        idx.iter()
            .all(|&i| idx.iter().all(|&j| self.is_known(s, i, j)))
    }

    pub fn variance(&self, s: usize, i: usize) -> Option<f64> {
        self.get(s, i, i)
    }

    /// Dense matrix with unknown entries replaced by `fill`.
    pub fn dense(&self, s: usize, fill: f64) -> DMatrix<f64> {
        let l = self.num_models;
        DMatrix::from_fn(l, l, |i, j| self.get(s, i, j).unwrap_or(fill))
    }

    /// The `null`-for-unknown array form.
    pub fn to_partial(&self) -> Vec<Vec<Vec<Option<f64>>>> {
        let l = self.num_models;
        (0..self.num_outputs())
            .map(|s| (0..l).map(|i| (0..l).map(|j| self.get(s, i, j)).collect()).collect())
            .collect()
    }
}

/// Aligned pilot samples: row r of every output matrix comes from the same input.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBatch {
    /// One `n_pilot x num_models` matrix per output.
    pub samples: Vec<DMatrix<f64>>,
    /// `available[s][i]`: column i of output s holds data.
    pub available: Vec<Vec<bool>>,
}

impl PilotBatch {
    pub fn num_samples(&self) -> usize {
        self.samples.first().map_or(0, DMatrix::nrows)
    }
}

/// Unbiased (n-1 divisor) sample covariance for every pair of jointly
/// available columns.
pub fn sample_covariance(batch: &PilotBatch) -> Result<CovarianceStore> {
    let n = batch.num_samples();
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    let l = batch.samples[0].ncols();
    let mut store = CovarianceStore::empty(l, batch.samples.len());
    for (s, x) in batch.samples.iter().enumerate() {
        if x.nrows() != n || x.ncols() != l {
            return Err(Error::Covariance(format!(
                "pilot samples for output {} are {}x{}, expected {n}x{l}",
                s + 1,
                x.nrows(),
                x.ncols()
            )));
        }
        let avail = &batch.available[s];
        let mut means = vec![0.0; l];
        for i in (0..l).filter(|&i| avail[i]) {
            let col = x.column(i);
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteSample { model: i + 1 });
            }
            means[i] = col.sum() / n as f64;
        }
        for i in (0..l).filter(|&i| avail[i]) {
            for j in (i..l).filter(|&j| avail[j]) {
                let mut acc = 0.0;
                for r in 0..n {
                    acc += (x[(r, i)] - means[i]) * (x[(r, j)] - means[j]);
                }
                store.set(s, i, j, acc / (n - 1) as f64, Provenance::Pilot)?;
            }
        }
    }
    Ok(store)
}

/// Raises eigenvalues below `floor * lambda_max` (or below `floor` when
/// lambda_max <= 0) to that level. Matrices already above the floor are
/// returned untouched apart from exact symmetrization.
pub fn spd_repair(matrix: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>> {
    let asym = relative_asymmetry(matrix);
    if asym > ASYMMETRY_TOL {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let mut a = matrix.clone();
    symmetrize(&mut a);
    if a.nrows() == 0 {
        return Ok(a);
    }
    let (values, vectors) = sorted_eigen(&a);
    let lmax = values[0];
    let threshold = if lmax > 0.0 { floor * lmax } else { floor };
    if values.iter().all(|&v| v >= threshold) {
        return Ok(a);
    }
    let raised = values.map(|v| v.max(threshold));
    let mut out = &vectors * DMatrix::from_diagonal(&raised) * vectors.transpose();
    symmetrize(&mut out);
    Ok(out)
}

/// C_k for `group` and output `s`: the principal submatrix in restriction-index
/// order, repaired to SPD with [`DEFAULT_SPD_FLOOR`].
pub fn extract_group_covariance(store: &CovarianceStore, group: &Group, s: usize) -> Result<DMatrix<f64>> {
    extract_group_covariance_with_floor(store, group, s, DEFAULT_SPD_FLOOR)
}

pub fn extract_group_covariance_with_floor(
    store: &CovarianceStore,
    group: &Group,
    s: usize,
    floor: f64,
) -> Result<DMatrix<f64>> {
    let idx = group.indices();
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a..] {
            if !store.is_known(s, i, j) {
                return Err(Error::UnknownCovariance {
                    output: s + 1,
                    i: i + 1,
                    j: j + 1,
                });
            }
        }
    }
    let full = store.dense(s, 0.0);
    spd_repair(&principal_submatrix(&full, idx), floor)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extrapolation {
    /// Values at the requested finer levels, nearest level first.
    pub values: Vec<f64>,
    /// Fitted limit v_inf.
    pub limit: f64,
    /// Fitted coefficient K.
    pub coefficient: f64,
    pub warnings: Vec<String>,
}

/// Fits `v(h) = v_inf + K h^rate` to the two finest of `level_values`
/// (ordered coarse to fine, each level refining h by `ratio`) and evaluates it
/// on the next `num_finer` levels.
pub fn richardson_extrapolate(
    level_values: &[f64],
    rate: f64,
    ratio: f64,
    num_finer: usize,
) -> Result<Extrapolation> {
    if level_values.len() < 2 {
        return Err(Error::Covariance(
            "Richardson extrapolation needs at least 2 level values".into(),
        ));
    }
    if !(rate.is_finite() && rate > 0.0) || !(ratio.is_finite() && ratio > 1.0) {
        return Err(Error::Covariance(format!(
            "invalid extrapolation rate {rate} or refinement ratio {ratio}"
        )));
    }
    if level_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Covariance("non-finite level value".into()));
    }
    let mut warnings = Vec::new();
    let increasing = level_values.windows(2).all(|w| w[1] >= w[0]);
    let decreasing = level_values.windows(2).all(|w| w[1] <= w[0]);
    if !increasing && !decreasing {
        let msg = format!("non-monotone level values {level_values:?}");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let n = level_values.len();
    let (coarse, fine) = (level_values[n - 2], level_values[n - 1]);
    // h is normalized to 1 on the finest known level
    let coefficient = (coarse - fine) / (ratio.powf(rate) - 1.0);
    let limit = fine - coefficient;
    let values = (1..=num_finer)
        .map(|q| limit + coefficient * ratio.powf(-rate * q as f64))
        .collect();
    Ok(Extrapolation {
        values,
        limit,
        coefficient,
        warnings,
    })
}

/// Extrapolates a quantity that vanishes under refinement, `v(h) = K h^rate`,
/// to the next `num_finer` levels. K is the geometric mean of the estimates
/// from the two finest of `level_values` (ordered coarse to fine), or from
/// the finest alone when only one is given.
pub fn power_law_extrapolate(level_values: &[f64], rate: f64, ratio: f64, num_finer: usize) -> Result<Vec<f64>> {
    if level_values.is_empty() {
        return Err(Error::Covariance("power-law extrapolation needs a level value".into()));
    }
    if !(rate.is_finite() && rate > 0.0) || !(ratio.is_finite() && ratio > 1.0) {
        return Err(Error::Covariance(format!(
            "invalid extrapolation rate {rate} or refinement ratio {ratio}"
        )));
    }
    if level_values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Covariance("level values must be finite and nonnegative".into()));
    }
    let step = ratio.powf(-rate);
    let n = level_values.len();
    // h is normalized to 1 on the finest known level
    let k = if n >= 2 {
        (level_values[n - 1] * level_values[n - 2] * step).sqrt()
    } else {
        level_values[0]
    };
    Ok((1..=num_finer).map(|q| k * step.powi(q as i32)).collect())
}

/// Convergence rate from at least three level values by log-log regression of
/// successive differences against the mesh size.
pub fn fit_rate(level_values: &[f64], ratio: f64) -> Result<f64> {
    if level_values.len() < 3 {
        return Err(Error::Covariance("rate fit needs at least 3 level values".into()));
    }
    let diffs: Vec<f64> = level_values.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
    if diffs.iter().any(|&d| d == 0.0 || !d.is_finite()) {
        return Err(Error::Covariance("rate fit needs distinct finite level values".into()));
    }
    let xs: Vec<f64> = (0..diffs.len()).map(|j| -(j as f64) * ratio.ln()).collect();
    let ys: Vec<f64> = diffs.iter().map(|d| d.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reconstructed {
    pub covariance: f64,
    pub clipped: bool,
}

/// C(p_i, p_j) = (V[p_i] + V[p_j] - V[p_i - p_j]) / 2, clipped so that the
/// implied correlation stays within [-1, 1].
pub fn reconstruct_highfi_covariance(var_i: f64, var_j: f64, var_diff: f64) -> Result<Reconstructed> {
    if [var_i, var_j, var_diff].iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Covariance(format!(
            "variances must be finite and nonnegative, got ({var_i}, {var_j}, {var_diff})"
        )));
    }
    let c = 0.5 * (var_i + var_j - var_diff);
    let bound = (var_i * var_j).sqrt();
    if c.abs() > bound {
        let rho = if bound > 0.0 { c / bound } else { f64::INFINITY };
        if rho.abs() > 1.0 + 1e-8 {
            log::warn!("reconstructed correlation {rho} clipped to +-1");
        }
        return Ok(Reconstructed {
            covariance: bound.copysign(c),
            clipped: true,
        });
    }
    Ok(Reconstructed {
        covariance: c,
        clipped: false,
    })
}

/// Settings for rebuilding the covariances of models that cannot be piloted.
///
/// Models are assumed to form a refinement hierarchy: model 1 is the finest
/// level and model l the coarsest, each level refining the previous by
/// `ratio`. The first `restricted` models have no pilot data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtrapolationPlan {
    pub restricted: usize,
    /// Variance convergence rate (typically twice the deterministic rate).
    pub rate: f64,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    /// Number of coarser neighbours each restricted model is coupled to.
    pub couplings: usize,
}

fn default_ratio() -> f64 {
    2.0
}

/// Fills in variances of the restricted models and their covariances with the
/// next `couplings` coarser models by extrapolating low-fidelity variances and
/// variances of differences. Variances converge to a nonzero limit and use
/// [`richardson_extrapolate`]; variances of differences vanish in the limit
/// and use [`power_law_extrapolate`]. Entries not reconstructed stay unknown,
/// which in turn removes the corresponding groups.
pub fn extrapolate_restricted(store: &CovarianceStore, plan: &ExtrapolationPlan) -> Result<CovarianceStore> {
    let l = store.num_models();
    let r = plan.restricted;
    if r == 0 || r >= l {
        return Err(Error::Covariance(format!(
            "restricted model count {r} must lie in 1..{l}"
        )));
    }
    if plan.couplings == 0 || plan.couplings + r + 2 > l {
        return Err(Error::Covariance(format!(
            "couplings must lie in 1..={} for {l} models with {r} restricted",
            l.saturating_sub(r + 2)
        )));
    }
    let mut out = store.clone();
    for s in 0..store.num_outputs() {
        let known = |i: usize, j: usize| {
            store.get(s, i, j).ok_or(Error::UnknownCovariance {
                output: s + 1,
                i: i + 1,
                j: j + 1,
            })
        };
        for i in 0..r {
            for j in 0..l {
                out.unset(s, i, j);
            }
        }
        // variances: coarse (model l) to fine (model r+1)
        let vars: Vec<f64> = (r..l).rev().map(|k| known(k, k)).collect::<Result<_>>()?;
        let ext = richardson_extrapolate(&vars, plan.rate, plan.ratio, r)?;
        let mut variance = vec![0.0; l];
        for k in r..l {
            variance[k] = known(k, k)?;
        }
        for (q, v) in ext.values.iter().enumerate() {
            // q = 0 is model r (0-based r-1)
            variance[r - 1 - q] = v.max(0.0);
        }
        for i in 0..r {
            out.set(s, i, i, variance[i], Provenance::Extrapolated)?;
        }
        // ext_diff[j][i]: extrapolated V[p_i - p_{i+j}] for restricted i
        let mut ext_diff = vec![vec![0.0; r]; plan.couplings + 1];
        for j in 1..=plan.couplings {
            let diffs: Vec<f64> = (r..l - j)
                .rev()
                .map(|k| Ok(known(k, k)? + known(k + j, k + j)? - 2.0 * known(k, k + j)?))
                .collect::<Result<_>>()?;
            let ext = power_law_extrapolate(&diffs, plan.rate, plan.ratio, r)?;
            for (q, d) in ext.iter().enumerate() {
                ext_diff[j][r - 1 - q] = d.max(0.0);
            }
        }
        for j in 1..=plan.couplings {
            for i in (0..r).rev() {
                let k = i + j;
                // across the boundary the piloted part p_r - p_k is taken from
                // the pilot data and the increment above it is assumed
                // uncorrelated with it
                let d = if k > r {
                    ext_diff[r - i][i] + known(r, r)? + known(k, k)? - 2.0 * known(r, k)?
                } else {
                    ext_diff[j][i]
                };
                let rec = reconstruct_highfi_covariance(variance[i], variance[k], d.max(0.0))?;
                let prov = if rec.clipped {
                    Provenance::Clipped
                } else {
                    Provenance::Extrapolated
                };
                out.set(s, i, k, rec.covariance, prov)?;
            }
        }
    }
    Ok(out)
}
