//! Dense linear semidefinite programs over nonnegative variables:
//!
//! minimize q^T x  subject to  F0_b + sum_i x_i F_i_b >= 0 (PSD) for each block b,
//!                             G x <= g,  x >= 0.

mod ipm;
mod triplet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use ipm::InteriorPoint;
pub use triplet::{parse_triplets, write_triplets};

use crate::blue::{pseudo_inverse, DEFAULT_RTOL};
use crate::error::{Error, Result};

/// Affine symmetric matrix map x -> F0 + sum_i x_i F_i.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdBlock {
    pub constant: DMatrix<f64>,
    /// Sparse list of (variable, coefficient matrix).
    pub coefficients: Vec<(usize, DMatrix<f64>)>,
}

impl PsdBlock {
    pub fn new(size: usize) -> Self {
        Self {
            constant: DMatrix::zeros(size, size),
            coefficients: Vec::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.constant.nrows()
    }

    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (i, f) in &self.coefficients {
            m += f * x[*i];
        }
        m
    }
}

/// One row of G x <= g in sparse form.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub coefficients: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearRow {
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.rhs - self.coefficients.iter().map(|(i, a)| a * x[*i]).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub blocks: Vec<PsdBlock>,
    pub linear: Vec<LinearRow>,
}

impl SdpProblem {
    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.num_vars {
            return Err(Error::SdpFormat(format!(
                "objective has {} entries for {} variables",
                self.objective.len(),
                self.num_vars
            )));
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::SdpFormat("non-finite objective coefficient".into()));
        }
        for (b, block) in self.blocks.iter().enumerate() {
            let n = block.size();
            if block.constant.ncols() != n {
                return Err(Error::SdpFormat(format!("block {b} constant is not square")));
            }
            let mats = std::iter::once(&block.constant).chain(block.coefficients.iter().map(|(_, f)| f));
            for f in mats {
                if f.nrows() != n || f.ncols() != n {
                    return Err(Error::SdpFormat(format!("block {b} has inconsistent sizes")));
                }
                if f.iter().any(|v| !v.is_finite()) {
                    return Err(Error::SdpFormat(format!("block {b} has non-finite entries")));
                }
                if (f - f.transpose()).amax() > 1e-12 * (1.0 + f.amax()) {
                    return Err(Error::SdpFormat(format!("block {b} has a non-symmetric matrix")));
                }
            }
            if let Some((i, _)) = block.coefficients.iter().find(|(i, _)| *i >= self.num_vars) {
                return Err(Error::SdpFormat(format!("block {b} references variable {i}")));
            }
        }
        for (r, row) in self.linear.iter().enumerate() {
            if !row.rhs.is_finite()
                || row
                    .coefficients
                    .iter()
                    .any(|(i, a)| *i >= self.num_vars || !a.is_finite())
            {
                return Err(Error::SdpFormat(format!("linear row {r} is malformed")));
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(q, x)| q * x).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            gap_tol: 1e-8,
            feas_tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub x: Vec<f64>,
    pub objective_value: f64,
    pub status: SolverStatus,
    /// Relative residual of the constraints on x (PSD blocks, rows, bounds).
    pub primal_residual: f64,
    /// Relative residual of the dual equality constraints.
    pub dual_residual: f64,
    /// Relative duality gap.
    pub gap: f64,
    pub iterations: usize,
}

impl SdpSolution {
    /// Turns non-optimal outcomes into an error.
    pub fn require_optimal(self) -> Result<Self> {
        if self.status == SolverStatus::Optimal {
            Ok(self)
        } else {
            Err(Error::Solver {
                status: self.status,
                iterations: self.iterations,
                gap: self.gap,
                primal: self.primal_residual,
                dual: self.dual_residual,
            })
        }
    }
}

/// Anything that can solve an [`SdpProblem`].
pub trait SdpBackend {
    fn solve(&self, problem: &SdpProblem, settings: &SolverSettings) -> Result<SdpSolution>;
}

/// Solves with the built-in interior-point method.
pub fn solve_sdp(problem: &SdpProblem, settings: &SolverSettings) -> Result<SdpSolution> {
    InteriorPoint.solve(problem, settings)
}

/// Checks [[Psi, e1], [e1^T, t]] >= 0 through its Schur characterization:
/// Psi >= 0, Psi Psi^+ e1 = e1, and t >= e1^T Psi^+ e1 (all up to `rtol`).
pub fn verify_schur_feasibility(t: f64, psi: &DMatrix<f64>, rtol: f64) -> bool {
    let n = psi.nrows();
    if n == 0 {
        return false;
    }
    let p = pseudo_inverse(psi, DEFAULT_RTOL);
    let scale = p.eigenvalues.iter().fold(0.0_f64, |a, l| a.max(l.abs()));
    if p.eigenvalues.iter().any(|&l| l < -rtol * scale.max(1.0)) {
        return false;
    }
    let mut e1 = nalgebra::DVector::zeros(n);
    e1[0] = 1.0;
    let x = p.apply(&e1);
    if (psi * &x - &e1).norm() > rtol.max(1e-8) {
        return false;
    }
    t >= x[0] * (1.0 - rtol)
}
