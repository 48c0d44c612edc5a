//! Rounding continuous allocations to integers by enumerating floor/ceiling
//! combinations of the fractional entries.

use rayon::prelude::*;

use super::{Allocation, Mode, MosapSpec};
use crate::error::Result;

const SNAP_TOL: f64 = 1e-6;
const PRUNE_REL: f64 = 1e-9;
const MAX_FRACTIONAL: usize = 20;
const TOLERANCE_SLACK: f64 = 1e-9;
const LINEAR_SLACK: f64 = 1e-12;

struct Candidate {
    objective: f64,
    cost: f64,
    n: Vec<f64>,
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    a.objective
        .total_cmp(&b.objective)
        .then(a.cost.total_cmp(&b.cost))
        .then_with(|| {
            a.n.iter()
                .zip(&b.n)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .is_lt()
}

/// Linear constraints (budget, caps, high-fidelity rows) without variances.
fn linear_feasible(spec: &MosapSpec, n: &[f64]) -> bool {
    let cost = spec.total_cost(n);
    if let Mode::Budget(b) = spec.mode {
        if cost > b * (1.0 + LINEAR_SLACK) {
            return false;
        }
    }
    for extra in &spec.extra_linear {
        let lhs: f64 = extra.coefficients.iter().zip(n).map(|(a, v)| a * v).sum();
        if lhs > extra.bound + LINEAR_SLACK * extra.bound.abs().max(1.0) {
            return false;
        }
    }
    (0..spec.num_outputs()).all(|s| {
        spec.groups
            .h_mask(s)
            .iter()
            .zip(n)
            .filter(|(&h, _)| h)
            .map(|(_, v)| v)
            .sum::<f64>()
            >= 1.0
    })
}

fn evaluate(spec: &MosapSpec, n: Vec<f64>) -> Option<Candidate> {
    if !linear_feasible(spec, &n) {
        return None;
    }
    let vars: Vec<f64> = spec
        .systems
        .iter()
        .map(|s| s.fast_variance(&n))
        .collect::<Result<_>>()
        .ok()?;
    if let Mode::Tolerance(eps2) = &spec.mode {
        if vars.iter().zip(eps2).any(|(v, e)| *v > e * (1.0 + TOLERANCE_SLACK)) {
            return None;
        }
    }
    let cost = spec.total_cost(&n);
    Some(Candidate {
        objective: spec.objective(&vars, cost),
        cost,
        n,
    })
}

/// Best feasible floor/ceiling rounding of `continuous`, or a flagged
/// heuristic fallback when no combination satisfies every constraint.
pub fn integer_projection(continuous: &Allocation, spec: &MosapSpec) -> Result<Allocation> {
    let nmax = continuous.n.iter().copied().fold(0.0, f64::max);
    let mut base: Vec<f64> = continuous
        .n
        .iter()
        .map(|&v| if v < PRUNE_REL * nmax { 0.0 } else { v })
        .collect();
    let mut fractional = Vec::new();
    for (k, v) in base.iter_mut().enumerate() {
        let r = v.round();
        if (*v - r).abs() <= SNAP_TOL {
            *v = r;
        } else {
            fractional.push(k);
        }
    }
    if fractional.len() > MAX_FRACTIONAL {
        // enumerate the entries closest to a half, round the rest to nearest
        let ambiguity = |v: f64| (v - v.floor() - 0.5).abs();
        fractional.sort_by(|&a, &b| ambiguity(base[a]).total_cmp(&ambiguity(base[b])).then(a.cmp(&b)));
        for &k in &fractional[MAX_FRACTIONAL..] {
            base[k] = base[k].round();
        }
        fractional.truncate(MAX_FRACTIONAL);
        fractional.sort_unstable();
    }
    let floors: Vec<f64> = base.iter().map(|v| v.floor()).collect();
    let count = 1u64 << fractional.len();
    let best = (0..count)
        .into_par_iter()
        .filter_map(|mask| {
            let mut n = floors.clone();
            for (bit, &k) in fractional.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    n[k] += 1.0;
                }
            }
            evaluate(spec, n)
        })
        .reduce_with(|a, b| if better(&b, &a) { b } else { a });

    let (n, fallback) = match best {
        Some(c) => (c.n, None),
        None => fallback(spec, &base),
    };
    let mut alloc = Allocation::evaluate(spec, n, true, continuous.solver)?;
    alloc.sdp_corner = continuous.sdp_corner;
    if continuous.objective > 0.0 {
        alloc.relaxation_ratio = Some(alloc.objective / continuous.objective);
    }
    if let Some(msg) = &fallback {
        log::warn!("{msg}");
    }
    alloc.fallback = fallback;
    Ok(alloc)
}

fn fallback(spec: &MosapSpec, base: &[f64]) -> (Vec<f64>, Option<String>) {
    match spec.mode {
        Mode::Budget(b) => {
            // keep one sample of the cheapest high-fidelity group per output,
            // scale the rest into the remaining budget and floor
            let mut fixed = vec![0.0; base.len()];
            for s in 0..spec.num_outputs() {
                let mask = spec.groups.h_mask(s);
                if mask.iter().zip(&fixed).any(|(&h, &v)| h && v >= 1.0) {
                    continue;
                }
                let cheapest = (0..base.len())
                    .filter(|&k| mask[k])
                    .min_by(|&a, &c| spec.costs()[a].total_cmp(&spec.costs()[c]));
                if let Some(k) = cheapest {
                    fixed[k] = 1.0;
                }
            }
            let fixed_cost = spec.total_cost(&fixed);
            let rest_cost = spec.total_cost(base);
            let scale = if rest_cost > 0.0 {
                ((b - fixed_cost) / rest_cost).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let n: Vec<f64> = base
                .iter()
                .zip(&fixed)
                .map(|(v, f)| (v * scale).floor().max(*f))
                .collect();
            let cost = spec.total_cost(&n);
            (
                n,
                Some(format!(
                    "no feasible floor/ceiling combination; scaled down and floored (cost {cost} of budget {b})"
                )),
            )
        }
        Mode::Tolerance(_) | Mode::Pareto(_) => {
            let n: Vec<f64> = base.iter().map(|v| v.ceil()).collect();
            let cost = spec.total_cost(&n);
            (
                n,
                Some(format!(
                    "no feasible floor/ceiling combination; rounded every entry up (cost {cost})"
                )),
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;

    use super::*;
    use crate::covariance::{CovarianceStore, Provenance};
    use crate::models::{enumerate_groups, ModelSet};
    use crate::mosap::SolverReport;
    use crate::sdp::SolverStatus;

    fn report() -> SolverReport {
        SolverReport {
            iterations: 1,
            gap: 0.0,
            status: SolverStatus::Optimal,
        }
    }

    fn spec(costs: &[f64], c: DMatrix<f64>, mode: Mode) -> MosapSpec {
        let models = ModelSet::uniform(costs, 1).unwrap();
        let groups = enumerate_groups(&models, costs.len(), &[]).unwrap();
        let store = CovarianceStore::from_dense(&[c], Provenance::Exact).unwrap();
        MosapSpec::new(&groups, &store, mode).unwrap()
    }

    #[test]
    fn two_fractional_entries_pick_the_best_feasible_rounding() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.8, 1.0]);
        let s = spec(&[1.0, 0.1], c, Mode::Budget(10.0));
        let k1 = s.groups.position(&[1]).unwrap();
        let k12 = s.groups.position(&[1, 2]).unwrap();
        let mut n = vec![0.0; s.groups.len()];
        n[k1] = 2.3;
        n[k12] = 7.8 * 0.999;
        let cont = Allocation::evaluate(&s, n, false, report()).unwrap();
        let a = integer_projection(&cont, &s).unwrap();
        let mut best = (f64::INFINITY, vec![]);
        for x in [2.0, 3.0] {
            for y in [7.0, 8.0] {
                let mut m = vec![0.0; s.groups.len()];
                m[k1] = x;
                m[k12] = y;
                if s.total_cost(&m) <= 10.0 {
                    let v = s.systems[0].variance(&m).unwrap();
                    if v < best.0 {
                        best = (v, m);
                    }
                }
            }
        }
        assert_eq!(a.n, best.1);
        assert!(a.fallback.is_none());
    }

    #[test]
    fn many_tiny_entries_stay_feasible_and_beat_nearest_rounding() {
        let l = 6;
        let c = DMatrix::from_fn(l, l, |i, j| if i == j { 1.0 } else { 0.9 });
        let costs: Vec<f64> = (0..l).map(|i| 4f64.powi(-(i as i32))).collect();
        let probe = spec(&costs, c.clone(), Mode::Budget(1e9));
        let k1 = probe.groups.position(&[1]).unwrap();
        let mut n = vec![1e-4; probe.groups.len()];
        n[k1] = 0.9994;
        let budget = probe.costs()[k1] + n.iter().zip(probe.costs()).map(|(v, c)| v * c).sum::<f64>();
        let s = spec(&costs, c, Mode::Budget(budget));
        let cont = Allocation::evaluate(&s, n, false, report()).unwrap();
        let a = integer_projection(&cont, &s).unwrap();
        assert!(a.fallback.is_none(), "{:?}", a.fallback);
        assert!(a.total_cost <= budget);
        let mut nearest = vec![0.0; s.groups.len()];
        nearest[k1] = 1.0;
        assert!(a.per_output_variance[0] <= s.systems[0].variance(&nearest).unwrap());
    }
}
