//! Best linear unbiased estimation of the high-fidelity mean from grouped
//! samples: assembly of Psi(n) and y(n), pseudo-inverse variances, null
//! spaces, and the final combination of drawn samples.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::covariance::{extract_group_covariance, CovarianceStore};
use crate::error::{Error, Result};
use crate::linalg::{sorted_eigen, symmetrize};
use crate::models::{Group, GroupSet};

/// Default relative rank tolerance of the pseudo-inverse.
pub const DEFAULT_RTOL: f64 = 1e-12;

/// Maximum residual of `Psi Psi^+ e1 - e1` accepted as well-posed.
pub const WELL_POSED_TOL: f64 = 1e-8;

/// One group's contribution to the estimator for a fixed output.
#[derive(Debug, Clone)]
pub struct BlueTerm {
    /// Position of the group in the allocation vector.
    pub slot: usize,
    pub group: Group,
    pub covariance: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
    /// C_k^{-1} on the group's own indices.
    pub precision: DMatrix<f64>,
}

impl BlueTerm {
    pub fn new(slot: usize, group: Group, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != group.len() || covariance.ncols() != group.len() {
            return Err(Error::Covariance(format!(
                "covariance for group {group} is {}x{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let factor = Cholesky::new(covariance.clone()).ok_or_else(|| {
            Error::Covariance(format!("covariance for group {group} is not positive definite"))
        })?;
        let mut precision = factor.inverse();
        symmetrize(&mut precision);
        Ok(Self {
            slot,
            group,
            covariance,
            factor,
            precision,
        })
    }

    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(v)
    }
}

/// The estimator structure for one output.
#[derive(Debug, Clone)]
pub struct BlueSystem {
    /// 0-based output this system estimates.
    output: usize,
    num_models: usize,
    num_slots: usize,
    terms: Vec<BlueTerm>,
}

impl BlueSystem {
    /// Terms for every group allowed for `output`, with covariance blocks
    /// extracted from `store`. Fails if any allowed group has an unknown entry.
    pub fn new(groups: &GroupSet, store: &CovarianceStore, output: usize) -> Result<Self> {
        let terms = groups
            .groups()
            .iter()
            .enumerate()
            .filter(|(k, _)| groups.allowed(output)[*k])
            .map(|(k, g)| BlueTerm::new(k, g.clone(), extract_group_covariance(store, g, output)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            output,
            num_models: groups.num_models(),
            num_slots: groups.len(),
            terms,
        })
    }

    pub fn from_terms(num_models: usize, num_slots: usize, terms: Vec<BlueTerm>) -> Result<Self> {
        for t in &terms {
            if t.slot >= num_slots || t.group.indices().iter().any(|&i| i >= num_models) {
                return Err(Error::GroupSet(format!(
                    "term for group {} (slot {}) does not fit {num_models} models / {num_slots} slots",
                    t.group, t.slot
                )));
            }
        }
        Ok(Self {
            output: 0,
            num_models,
            num_slots,
            terms,
        })
    }

    /// Convenience constructor: groups given as 1-based ids, one slot each.
    pub fn from_groups(num_models: usize, groups: &[(Vec<usize>, DMatrix<f64>)]) -> Result<Self> {
        let terms = groups
            .iter()
            .enumerate()
            .map(|(k, (ids, c))| BlueTerm::new(k, Group::from_ids(ids, num_models)?, c.clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::from_terms(num_models, groups.len(), terms)
    }

    pub fn num_models(&self) -> usize {
        self.num_models
    }

    pub fn output(&self) -> usize {
        self.output
    }

    pub fn with_output(mut self, output: usize) -> Self {
        self.output = output;
        self
    }

    /// Length of the allocation vectors this system accepts.
    pub fn num_slots(&self) -> usize {
        self.num_slots
    }

    pub fn terms(&self) -> &[BlueTerm] {
        &self.terms
    }

    fn check_allocation(&self, n: &[f64]) -> Result<()> {
        if n.len() != self.num_slots {
            return Err(Error::AllocationLength {
                expected: self.num_slots,
                got: n.len(),
            });
        }
        if let Some((k, &v)) = n.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::NegativeAllocation { group: k, value: v });
        }
        Ok(())
    }

    /// Models appearing in at least one group with n_k > 0.
    pub fn sampled_models(&self, n: &[f64]) -> Vec<bool> {
        let mut sampled = vec![false; self.num_models];
        for t in self.terms.iter().filter(|t| n[t.slot] > 0.0) {
            for &i in t.group.indices() {
                sampled[i] = true;
            }
        }
        sampled
    }

    /// Psi(n) = sum_k n_k R_k^T C_k^{-1} R_k.
    pub fn assemble_psi(&self, n: &[f64]) -> Result<DMatrix<f64>> {
        self.check_allocation(n)?;
        let mut psi = DMatrix::zeros(self.num_models, self.num_models);
        for t in &self.terms {
            let nk = n[t.slot];
            if nk == 0.0 {
                continue;
            }
            let idx = t.group.indices();
            for (a, &i) in idx.iter().enumerate() {
                for (b, &j) in idx.iter().enumerate() {
                    psi[(i, j)] += nk * t.precision[(a, b)];
                }
            }
        }
        symmetrize(&mut psi);
        Ok(psi)
    }

    /// e1^T Psi(n)^+ e1, after checking that e1 lies in the column space.
    pub fn variance(&self, n: &[f64]) -> Result<f64> {
        let inv = self.psi_inverse(n)?;
        Ok(inv.apply(&e1(self.num_models))[0])
    }

    fn psi_inverse(&self, n: &[f64]) -> Result<PsiInverse> {
        let psi = self.assemble_psi(n)?;
        let inv = PsiInverse::new(&psi, &self.sampled_models(n));
        inv.check_well_posed(self.output)?;
        Ok(inv)
    }

    /// Same value as [`BlueSystem::variance`], computed by a Cholesky solve on the
    /// sampled models (where Psi is nonsingular). Falls back to the spectral
    /// route if the factorization fails.
    pub fn fast_variance(&self, n: &[f64]) -> Result<f64> {
        self.check_allocation(n)?;
        let sampled = self.sampled_models(n);
        if !sampled[0] {
            return Err(Error::IllPosed {
                output: self.output + 1,
                residual: 1.0,
            });
        }
        let idx: Vec<usize> = (0..self.num_models).filter(|&i| sampled[i]).collect();
        let mut pos = vec![usize::MAX; self.num_models];
        for (p, &i) in idx.iter().enumerate() {
            pos[i] = p;
        }
        let mut psi = DMatrix::zeros(idx.len(), idx.len());
        for t in self.terms.iter().filter(|t| n[t.slot] > 0.0) {
            let g = t.group.indices();
            for (a, &i) in g.iter().enumerate() {
                for (b, &j) in g.iter().enumerate() {
                    psi[(pos[i], pos[j])] += n[t.slot] * t.precision[(a, b)];
                }
            }
        }
        symmetrize(&mut psi);
        match Cholesky::new(psi) {
            Some(ch) => Ok(ch.solve(&e1(idx.len()))[0]),
            None => self.variance(n),
        }
    }

    /// Variance of the estimator built with this system's covariances when the
    /// samples actually follow the covariances of `truth` (same groups).
    pub fn misspecified_variance(&self, n: &[f64], truth: &BlueSystem) -> Result<f64> {
        let w = self.psi_inverse(n)?.apply(&e1(self.num_models));
        let mut total = 0.0;
        for t in self.terms.iter().filter(|t| n[t.slot] > 0.0) {
            let actual = truth
                .terms
                .iter()
                .find(|u| u.slot == t.slot)
                .ok_or_else(|| Error::GroupSet(format!("group {} missing from reference system", t.group)))?;
            let wk = DVector::from_iterator(t.group.len(), t.group.indices().iter().map(|&i| w[i]));
            let u = t.solve(&wk);
            total += n[t.slot] * (u.transpose() * &actual.covariance * &u)[0];
        }
        Ok(total)
    }

    /// Orthonormal basis of null(Psi(n)): e_i for every model outside all
    /// sampled groups.
    pub fn null_space_basis(&self, n: &[f64]) -> Result<DMatrix<f64>> {
        self.check_allocation(n)?;
        let sampled = self.sampled_models(n);
        let free: Vec<usize> = (0..self.num_models).filter(|&i| !sampled[i]).collect();
        let mut basis = DMatrix::zeros(self.num_models, free.len());
        for (c, &i) in free.iter().enumerate() {
            basis[(i, c)] = 1.0;
        }
        Ok(basis)
    }

    /// mu_hat = Psi(n)^+ y(n) from per-slot sample blocks (rows = samples,
    /// columns = group members in index order). Slots without a term must be
    /// empty.
    pub fn combine_samples(&self, n: &[usize], drawn: &[DMatrix<f64>]) -> Result<BlueEstimate> {
        if n.len() != self.num_slots || drawn.len() != self.num_slots {
            return Err(Error::AllocationLength {
                expected: self.num_slots,
                got: n.len().min(drawn.len()),
            });
        }
        let mut y = DVector::zeros(self.num_models);
        for t in &self.terms {
            let block = &drawn[t.slot];
            if block.nrows() != n[t.slot] || block.ncols() != t.group.len() {
                return Err(Error::ShapeMismatch {
                    group: t.slot,
                    rows: block.nrows(),
                    cols: block.ncols(),
                    expected_rows: n[t.slot],
                    expected_cols: t.group.len(),
                });
            }
            if n[t.slot] == 0 {
                continue;
            }
            let sums = DVector::from_iterator(t.group.len(), block.column_iter().map(|c| c.sum()));
            let w = t.solve(&sums);
            for (a, &i) in t.group.indices().iter().enumerate() {
                y[i] += w[a];
            }
        }
        let nf: Vec<f64> = n.iter().map(|&v| v as f64).collect();
        let mu = self.psi_inverse(&nf)?.apply(&y);
        Ok(BlueEstimate { mu1: mu[0], mu })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlueEstimate {
    pub mu: DVector<f64>,
    pub mu1: f64,
}

fn e1(n: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    if n > 0 {
        e[0] = 1.0;
    }
    e
}

/// Psi(n)^+ through the block of sampled models. Psi vanishes outside that
/// block, so its pseudo-inverse is the block inverse padded with zeros. The
/// block is scaled to unit diagonal before the spectral inverse, which keeps
/// the rank cut from discarding directions that are small only because of
/// the units of the models or lopsided sample counts.
struct PsiInverse {
    num_models: usize,
    support: Vec<usize>,
    /// 1 / sqrt(diag(Psi)) on the support.
    scale: DVector<f64>,
    inner: SpectralPseudoInverse,
}

impl PsiInverse {
    fn new(psi: &DMatrix<f64>, sampled: &[bool]) -> Self {
        let support: Vec<usize> = (0..psi.nrows()).filter(|&i| sampled[i] && psi[(i, i)] > 0.0).collect();
        let scale = DVector::from_iterator(support.len(), support.iter().map(|&i| psi[(i, i)].sqrt().recip()));
        let k = support.len();
        let mut m = DMatrix::from_fn(k, k, |a, b| psi[(support[a], support[b])] * scale[a] * scale[b]);
        symmetrize(&mut m);
        Self {
            num_models: psi.nrows(),
            inner: pseudo_inverse(&m, DEFAULT_RTOL),
            support,
            scale,
        }
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let vs = DVector::from_iterator(
            self.support.len(),
            self.support.iter().zip(self.scale.iter()).map(|(&i, s)| v[i] * s),
        );
        let x = self.inner.apply(&vs);
        let mut out = DVector::zeros(self.num_models);
        for (p, &i) in self.support.iter().enumerate() {
            out[i] = x[p] * self.scale[p];
        }
        out
    }

    /// ||Psi Psi^+ e1 - e1|| in the scaled coordinates, with Psi Psi^+ taken
    /// as the spectral projector so that ill-conditioning does not leak into
    /// the residual.
    fn check_well_posed(&self, output: usize) -> Result<()> {
        let residual = match self.support.first() {
            Some(0) => {
                let e = e1(self.support.len());
                (self.inner.project(&e) - e).norm()
            }
            _ => 1.0,
        };
        if residual > WELL_POSED_TOL || !residual.is_finite() {
            return Err(Error::IllPosed {
                output: output + 1,
                residual,
            });
        }
        Ok(())
    }
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix in spectral form.
#[derive(Debug, Clone)]
pub struct SpectralPseudoInverse {
    /// Nonincreasing eigenvalues of the original matrix.
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub rank_tolerance: f64,
    rank: usize,
}

impl SpectralPseudoInverse {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let q = self.eigenvectors.columns(0, self.rank);
        let mut c = q.transpose() * v;
        for (ci, l) in c.iter_mut().zip(self.eigenvalues.iter()) {
            *ci /= l;
        }
        q * c
    }

    /// Orthogonal projection onto the range, i.e. M M^+ v.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        let q = self.eigenvectors.columns(0, self.rank);
        q * (q.transpose() * v)
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let q = self.eigenvectors.columns(0, self.rank);
        let scaled = DMatrix::from_fn(q.nrows(), self.rank, |i, j| q[(i, j)] / self.eigenvalues[j]);
        let mut m = scaled * q.transpose();
        symmetrize(&mut m);
        m
    }
}

/// Eigenvalues below `rtol * lambda_max` are treated as exact zeros.
pub fn pseudo_inverse(m: &DMatrix<f64>, rtol: f64) -> SpectralPseudoInverse {
    let (eigenvalues, eigenvectors) = sorted_eigen(m);
    let lmax = eigenvalues.iter().copied().fold(0.0, f64::max);
    let cut = rtol * lmax;
    let rank = if lmax > 0.0 {
        eigenvalues.iter().take_while(|&&l| l > cut).count()
    } else {
        0
    };
    SpectralPseudoInverse {
        eigenvalues,
        eigenvectors,
        rank_tolerance: rtol,
        rank,
    }
}
