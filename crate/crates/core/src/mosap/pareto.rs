use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve_mosap, Mode, MosapSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub tau_tilde: f64,
    pub cost: f64,
    /// Maximum output variance.
    pub variance: f64,
    /// max_s sqrt(V_s / V[p_1^s]).
    pub normalized_error: f64,
    pub n: Vec<f64>,
}

/// Solves the Pareto problem for tau = tau_tilde / ||c||_2 at every grid value.
/// Results are returned in grid order; a failed point does not stop the sweep.
pub fn pareto_sweep(spec: &MosapSpec, tau_tilde: &[f64]) -> Vec<(f64, Result<FrontierPoint>)> {
    let cnorm = spec.costs().iter().map(|c| c * c).sum::<f64>().sqrt();
    tau_tilde
        .par_iter()
        .map(|&tt| {
            let point = (|| {
                if !(tt.is_finite() && tt >= 0.0) {
                    return Err(Error::Spec(format!("tau_tilde must be nonnegative, got {tt}")));
                }
                let s = spec.clone().with_mode(Mode::Pareto(tt / cnorm))?;
                let a = solve_mosap(&s)?;
                let normalized_error = a
                    .per_output_variance
                    .iter()
                    .zip(&spec.hf_variance)
                    .map(|(v, s2)| (v / s2).sqrt())
                    .fold(0.0, f64::max);
                Ok(FrontierPoint {
                    tau_tilde: tt,
                    cost: a.total_cost,
                    variance: a.max_variance(),
                    normalized_error,
                    n: a.n,
                })
            })();
            if let Err(e) = &point {
                log::warn!("pareto point tau_tilde={tt} failed: {e}");
            }
            (tt, point)
        })
        .collect()
}
