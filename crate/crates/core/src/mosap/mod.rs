//! Model selection and sample allocation as a semidefinite program in budget,
//! tolerance and Pareto form, for one or several outputs.
//!
//! Before solving, each output block is restricted to the models that can
//! appear in it and congruence-scaled so that the group blocks become inverse
//! correlation matrices, costs are normalized by their maximum, and sample
//! counts and variances are measured relative to a reference sample size N0.
//! The SDP therefore works on O(1) data regardless of the units of the models.

mod allocation;
mod pareto;
mod projection;

use nalgebra::DMatrix;

pub use allocation::{Allocation, AllocationRecord, Count, SolverReport, SolverSummary};
pub(crate) use allocation::json_pointer;
pub use pareto::{pareto_sweep, FrontierPoint};
pub use projection::integer_projection;

use crate::blue::BlueSystem;
use crate::covariance::CovarianceStore;
use crate::error::{Error, Result};
use crate::models::{check_budget_feasibility, GroupSet};
use crate::sdp::{solve_sdp, LinearRow, PsdBlock, SdpProblem, SolverSettings};

/// Cost cap used for Pareto problems with tau = 0, as a multiple of the
/// cheapest group cost.
pub const PARETO_COST_CAP: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    /// Minimize the maximum output variance within total cost b.
    Budget(f64),
    /// Minimize cost with output s variance at most eps2[s].
    Tolerance(Vec<f64>),
    /// Minimize max variance + tau * cost.
    Pareto(f64),
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Budget(_) => "budget",
            Mode::Tolerance(_) => "tolerance",
            Mode::Pareto(_) => "pareto",
        }
    }
}

/// `coefficients . n <= bound` over the group allocation vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtraLinear {
    pub coefficients: Vec<f64>,
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub struct MosapSpec {
    pub mode: Mode,
    /// Groups after removing those whose covariances are not fully known.
    pub groups: GroupSet,
    /// One estimator system per output.
    pub systems: Vec<BlueSystem>,
    pub extra_linear: Vec<ExtraLinear>,
    pub settings: SolverSettings,
    /// Variance of model 1 for each output (as used by the systems).
    pub hf_variance: Vec<f64>,
    model_sd: Vec<Vec<f64>>,
}

impl MosapSpec {
    /// Narrows `groups` to those whose covariances are known for each output
    /// and assembles the per-output estimator systems.
    pub fn new(groups: &GroupSet, store: &CovarianceStore, mode: Mode) -> Result<Self> {
        if store.num_outputs() != groups.num_outputs() || store.num_models() != groups.num_models() {
            return Err(Error::Spec(format!(
                "covariance store has {} models x {} outputs, groups expect {} x {}",
                store.num_models(),
                store.num_outputs(),
                groups.num_models(),
                groups.num_outputs()
            )));
        }
        let groups = groups.restrict(|s, g| store.group_known(s, g))?;
        let systems = (0..groups.num_outputs())
            .map(|s| BlueSystem::new(&groups, store, s))
            .collect::<Result<Vec<_>>>()?;
        let mut model_sd = Vec::with_capacity(systems.len());
        for sys in &systems {
            let mut sd = vec![0.0; groups.num_models()];
            for t in sys.terms().iter().rev() {
                for (a, &i) in t.group.indices().iter().enumerate() {
                    sd[i] = t.covariance[(a, a)].sqrt();
                }
            }
            model_sd.push(sd);
        }
        let hf_variance = model_sd.iter().map(|sd| sd[0] * sd[0]).collect();
        let spec = Self {
            mode,
            groups,
            systems,
            extra_linear: Vec::new(),
            settings: SolverSettings::default(),
            hf_variance,
            model_sd,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_mode(mut self, mode: Mode) -> Result<Self> {
        self.mode = mode;
        self.validate()?;
        Ok(self)
    }

    pub fn with_settings(mut self, settings: SolverSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn with_extra(mut self, extra: ExtraLinear) -> Result<Self> {
        if extra.coefficients.len() != self.groups.len() || extra.coefficients.iter().any(|v| !v.is_finite()) || !extra.bound.is_finite() {
            return Err(Error::Spec(format!(
                "extra constraint needs {} finite coefficients and a finite bound",
                self.groups.len()
            )));
        }
        self.extra_linear.push(extra);
        Ok(self)
    }

    /// Sum of samples over groups containing `model` (1-based) at most `cap`.
    pub fn model_cap(&self, model: usize, cap: f64) -> ExtraLinear {
        ExtraLinear {
            coefficients: self
                .groups
                .groups()
                .iter()
                .map(|g| if model >= 1 && g.contains(model - 1) { 1.0 } else { 0.0 })
                .collect(),
            bound: cap,
        }
    }

    pub fn num_outputs(&self) -> usize {
        self.systems.len()
    }

    pub fn costs(&self) -> &[f64] {
        self.groups.costs()
    }

    fn validate(&self) -> Result<()> {
        match &self.mode {
            Mode::Budget(b) => {
                if !(b.is_finite() && *b > 0.0) {
                    return Err(Error::Spec(format!("budget must be positive, got {b}")));
                }
                for s in 0..self.num_outputs() {
                    if !check_budget_feasibility(&self.groups, *b, s) {
                        return Err(Error::BudgetInfeasible {
                            output: s + 1,
                            budget: *b,
                            min_cost: self.groups.min_well_posed_cost(s),
                        });
                    }
                }
            }
            Mode::Tolerance(eps2) => {
                if eps2.len() != self.num_outputs() {
                    return Err(Error::Spec(format!(
                        "{} tolerances given for {} outputs",
                        eps2.len(),
                        self.num_outputs()
                    )));
                }
                if eps2.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
                    return Err(Error::Spec("tolerances must be positive".into()));
                }
            }
            Mode::Pareto(tau) => {
                if !(tau.is_finite() && *tau >= 0.0) {
                    return Err(Error::Spec(format!("tau must be nonnegative, got {tau}")));
                }
            }
        }
        Ok(())
    }

    pub fn total_cost(&self, n: &[f64]) -> f64 {
        n.iter().zip(self.costs()).map(|(n, c)| n * c).sum()
    }

    /// Per-output variances recomputed from the estimator systems.
    pub fn variances(&self, n: &[f64]) -> Result<Vec<f64>> {
        self.systems.iter().map(|s| s.variance(n)).collect()
    }

    /// Mode objective: max variance (budget), cost (tolerance), or
    /// max variance + tau * cost (Pareto).
    pub fn objective(&self, variances: &[f64], cost: f64) -> f64 {
        let vmax = variances.iter().copied().fold(0.0, f64::max);
        match &self.mode {
            Mode::Budget(_) => vmax,
            Mode::Tolerance(_) => cost,
            Mode::Pareto(tau) => vmax + tau * cost,
        }
    }

    fn cost_scale(&self) -> f64 {
        self.costs().iter().copied().fold(0.0, f64::max)
    }

    fn ref_variance(&self) -> f64 {
        self.hf_variance.iter().copied().fold(0.0, f64::max)
    }
}

/// A scaled SDP together with what is needed to map its solution back.
#[derive(Debug, Clone)]
pub struct ScaledSdp {
    pub problem: SdpProblem,
    /// n = n0 * x[offset..].
    pub n0: f64,
    /// t = v0 * x[0] (budget and Pareto forms).
    pub v0: f64,
    /// Index of the first sample-count variable (1 when t is present).
    pub offset: usize,
}

impl ScaledSdp {
    pub fn allocation(&self, x: &[f64]) -> Vec<f64> {
        x[self.offset..].iter().map(|v| (v * self.n0).max(0.0)).collect()
    }

    pub fn corner(&self, x: &[f64]) -> Option<f64> {
        (self.offset == 1).then(|| x[0] * self.v0)
    }
}

/// Builds the SDP for the spec's own mode.
pub fn build_sdp(spec: &MosapSpec) -> Result<ScaledSdp> {
    spec.validate()?;
    let c_inf = spec.cost_scale();
    let vref = spec.ref_variance();
    match &spec.mode {
        Mode::Budget(b) => {
            let n0 = b / c_inf;
            let mut sdp = assemble(spec, n0, Corner::Variable, vec![1.0])?;
            let costs = normalized_costs(spec);
            sdp.problem.linear.push(LinearRow {
                coefficients: costs.iter().enumerate().map(|(k, c)| (k + 1, *c)).collect(),
                rhs: 1.0,
            });
            Ok(sdp)
        }
        Mode::Tolerance(eps2) => {
            let n0 = (0..spec.num_outputs())
                .map(|s| spec.hf_variance[s] / eps2[s])
                .fold(0.0, f64::max);
            assemble(spec, n0, Corner::Fixed(eps2.clone()), normalized_costs(spec))
        }
        Mode::Pareto(tau) => {
            if *tau == 0.0 {
                let cap = PARETO_COST_CAP * spec.costs().iter().copied().fold(f64::INFINITY, f64::min);
                let n0 = cap / c_inf;
                let mut sdp = assemble(spec, n0, Corner::Variable, vec![1.0])?;
                let costs = normalized_costs(spec);
                sdp.problem.linear.push(LinearRow {
                    coefficients: costs.iter().enumerate().map(|(k, c)| (k + 1, *c)).collect(),
                    rhs: 1.0,
                });
                return Ok(sdp);
            }
            let n0 = (vref.sqrt() / (tau * c_inf).sqrt()).max(1.0);
            let weight = tau * c_inf * n0 * n0 / vref;
            let mut q = vec![1.0];
            q.extend(normalized_costs(spec).iter().map(|c| c * weight));
            assemble(spec, n0, Corner::Variable, q)
        }
    }
}

/// Budget form regardless of the spec's mode (which must be budget).
pub fn build_budget_sdp(spec: &MosapSpec) -> Result<ScaledSdp> {
    require_mode(spec, "budget")?;
    build_sdp(spec)
}

pub fn build_tolerance_sdp(spec: &MosapSpec) -> Result<ScaledSdp> {
    require_mode(spec, "tolerance")?;
    build_sdp(spec)
}

/// Pareto form for the given tau.
pub fn build_pareto_sdp(spec: &MosapSpec, tau: f64) -> Result<ScaledSdp> {
    let spec = spec.clone().with_mode(Mode::Pareto(tau))?;
    build_sdp(&spec)
}

fn require_mode(spec: &MosapSpec, name: &str) -> Result<()> {
    if spec.mode.name() != name {
        return Err(Error::Spec(format!(
            "expected a {name} specification, got {}",
            spec.mode.name()
        )));
    }
    Ok(())
}

fn normalized_costs(spec: &MosapSpec) -> Vec<f64> {
    let c_inf = spec.cost_scale();
    spec.costs().iter().map(|c| c / c_inf).collect()
}

enum Corner {
    Variable,
    Fixed(Vec<f64>),
}

fn assemble(spec: &MosapSpec, n0: f64, corner: Corner, objective: Vec<f64>) -> Result<ScaledSdp> {
    if !(n0.is_finite() && n0 > 0.0) {
        return Err(Error::Spec(format!("degenerate problem scale {n0}")));
    }
    let vref = spec.ref_variance();
    let offset = usize::from(matches!(corner, Corner::Variable));
    let num_groups = spec.groups.len();
    let num_vars = num_groups + offset;
    let mut blocks = Vec::with_capacity(spec.num_outputs());
    for (s, sys) in spec.systems.iter().enumerate() {
        let sd = &spec.model_sd[s];
        let mut in_block = vec![false; sys.num_models()];
        for t in sys.terms() {
            for &i in t.group.indices() {
                in_block[i] = true;
            }
        }
        let active: Vec<usize> = (0..sys.num_models()).filter(|&i| in_block[i]).collect();
        if active.first() != Some(&0) {
            return Err(Error::NoHighFidelityGroup { output: s + 1 });
        }
        let mut pos = vec![usize::MAX; sys.num_models()];
        for (p, &i) in active.iter().enumerate() {
            pos[i] = p;
        }
        let a = active.len();
        let mut block = PsdBlock::new(a + 1);
        block.constant[(0, a)] = 1.0;
        block.constant[(a, 0)] = 1.0;
        let sigma2 = spec.hf_variance[s];
        match &corner {
            Corner::Variable => {
                let mut f = DMatrix::zeros(a + 1, a + 1);
                f[(a, a)] = vref / sigma2;
                block.coefficients.push((0, f));
            }
            Corner::Fixed(eps2) => block.constant[(a, a)] = n0 * eps2[s] / sigma2,
        }
        for t in sys.terms() {
            let mut f = DMatrix::zeros(a + 1, a + 1);
            let idx = t.group.indices();
            for (p, &i) in idx.iter().enumerate() {
                for (q, &j) in idx.iter().enumerate() {
                    f[(pos[i], pos[j])] = sd[i] * t.precision[(p, q)] * sd[j];
                }
            }
            block.coefficients.push((t.slot + offset, f));
        }
        blocks.push(block);
    }

    let mut linear: Vec<LinearRow> = Vec::new();
    let mut seen_masks: Vec<Vec<bool>> = Vec::new();
    for s in 0..spec.num_outputs() {
        let mask = spec.groups.h_mask(s);
        if seen_masks.contains(&mask) {
            continue;
        }
        linear.push(LinearRow {
            coefficients: mask
                .iter()
                .enumerate()
                .filter(|(_, &h)| h)
                .map(|(k, _)| (k + offset, -1.0))
                .collect(),
            rhs: -1.0 / n0,
        });
        seen_masks.push(mask);
    }
    for extra in &spec.extra_linear {
        let amax = extra.coefficients.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if amax == 0.0 {
            if extra.bound < 0.0 {
                return Err(Error::Spec("extra constraint 0 <= negative bound".into()));
            }
            continue;
        }
        linear.push(LinearRow {
            coefficients: extra
                .coefficients
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(k, v)| (k + offset, v / amax))
                .collect(),
            rhs: extra.bound / (n0 * amax),
        });
    }
    let mut objective = objective;
    objective.resize(num_vars, 0.0);
    Ok(ScaledSdp {
        problem: SdpProblem {
            num_vars,
            objective,
            blocks,
            linear,
        },
        n0,
        v0: vref / n0,
        offset,
    })
}

/// Builds, solves and unscales; per-output variances are recomputed from the
/// estimator systems rather than read off the SDP.
pub fn solve_mosap(spec: &MosapSpec) -> Result<Allocation> {
    let sdp = build_sdp(spec)?;
    let sol = solve_sdp(&sdp.problem, &spec.settings)?.require_optimal()?;
    let mut n = sdp.allocation(&sol.x);
    let cost = spec.total_cost(&n);
    if let Mode::Budget(b) = spec.mode {
        if cost > b {
            // remove solver slack so the budget holds exactly
            let f = b / cost;
            n.iter_mut().for_each(|v| *v *= f);
        }
    }
    let report = SolverReport {
        iterations: sol.iterations,
        gap: sol.gap,
        status: sol.status,
    };
    let mut alloc = Allocation::evaluate(spec, n, false, report)?;
    alloc.sdp_corner = sdp.corner(&sol.x);
    Ok(alloc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::Provenance;
    use crate::models::{enumerate_groups, ModelSet};

    fn spec(costs: &[f64], c: DMatrix<f64>, kappa: usize, mode: Mode) -> MosapSpec {
        let models = ModelSet::uniform(costs, 1).unwrap();
        let groups = enumerate_groups(&models, kappa, &[]).unwrap();
        let store = CovarianceStore::from_dense(&[c], Provenance::Exact).unwrap();
        MosapSpec::new(&groups, &store, mode).unwrap()
    }

    #[test]
    fn single_model_budget_and_tolerance() {
        let c = DMatrix::from_element(1, 1, 4.0);
        let a = solve_mosap(&spec(&[1.0], c.clone(), 1, Mode::Budget(100.0))).unwrap();
        assert!((a.n[0] - 100.0).abs() < 1e-5, "{a:?}");
        assert!((a.per_output_variance[0] - 0.04).abs() < 1e-8);
        assert!((a.sdp_corner.unwrap() - 0.04).abs() < 1e-8);
        let a = solve_mosap(&spec(&[1.0], c, 1, Mode::Tolerance(vec![0.04]))).unwrap();
        assert!((a.n[0] - 100.0).abs() < 1e-5);
        assert!((a.total_cost - 100.0).abs() < 1e-5);
    }

    #[test]
    fn two_models_beat_plain_monte_carlo() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let a = solve_mosap(&spec(&[1.0, 0.01], c, 2, Mode::Budget(10.0))).unwrap();
        assert!(a.per_output_variance[0] < 0.1);
        assert!(a.total_cost <= 10.0 && a.total_cost >= 10.0 * (1.0 - 1e-6));
    }

    #[test]
    fn mode_validation() {
        let models = ModelSet::uniform(&[10.0, 0.5], 1).unwrap();
        let groups = enumerate_groups(&models, 2, &[]).unwrap();
        let store = CovarianceStore::from_dense(&[DMatrix::identity(2, 2)], Provenance::Exact).unwrap();
        assert!(matches!(
            MosapSpec::new(&groups, &store, Mode::Budget(9.0)),
            Err(Error::BudgetInfeasible { output: 1, .. })
        ));
        assert!(MosapSpec::new(&groups, &store, Mode::Tolerance(vec![0.0])).is_err());
        assert!(MosapSpec::new(&groups, &store, Mode::Pareto(-1.0)).is_err());
    }

    #[test]
    fn unknown_covariances_remove_groups() {
        let models = ModelSet::uniform(&[1.0, 0.1, 0.01], 1).unwrap();
        let groups = enumerate_groups(&models, 3, &[]).unwrap();
        let partial = vec![vec![
            vec![Some(1.0), Some(0.5), None],
            vec![Some(0.5), Some(1.0), Some(0.2)],
            vec![None, Some(0.2), Some(1.0)],
        ]];
        let store = CovarianceStore::from_partial(&partial, Provenance::Exact).unwrap();
        let spec = MosapSpec::new(&groups, &store, Mode::Budget(10.0)).unwrap();
        assert!(spec.groups.position(&[1, 3]).is_none());
        assert!(spec.groups.position(&[1, 2, 3]).is_none());
        assert!(spec.groups.position(&[2, 3]).is_some());
    }
}
