//! Infeasible-start primal-dual interior-point method with the HKM search
//! direction and Mehrotra predictor-corrector steps.
//!
//! The user problem `min q^T x s.t. F0 + sum x_i F_i >= 0` is treated as the
//! dual of `max <-F0, X> s.t. <F_i, X> = q_i, X >= 0`. Bounds x >= 0 and linear
//! rows form a diagonal block handled elementwise.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{SdpBackend, SdpProblem, SdpSolution, SolverSettings, SolverStatus};
use crate::error::Result;
use crate::linalg::{min_eigenvalue, symmetrize};

const STEP_FRACTION: f64 = 0.95;
/// Iterations without a new best merit before giving up.
const NO_PROGRESS_LIMIT: usize = 15;
/// When progress stalls, the best iterate is still accepted as optimal if
/// every measure is within this multiple of its tolerance. Ill-conditioned
/// instances reach a rounding floor just above the default tolerances.
const STALL_ACCEPT: f64 = 10.0;

/// The built-in dense solver.
#[derive(Debug, Clone, Copy, Default)]
pub struct InteriorPoint;

impl SdpBackend for InteriorPoint {
    fn solve(&self, problem: &SdpProblem, settings: &SolverSettings) -> Result<SdpSolution> {
        problem.validate()?;
        let data = Data::new(problem);
        Ok(data.run(settings))
    }
}

struct BlockData {
    n: usize,
    f0: DMatrix<f64>,
    /// Variables with a nonzero coefficient in this block.
    active: Vec<usize>,
    /// Column j holds vec(F_{active[j]}).
    stacked: DMatrix<f64>,
    stacked_abs: DMatrix<f64>,
}

struct Data {
    d: usize,
    a: DVector<f64>,
    blocks: Vec<BlockData>,
    /// Linear rows as slack = g + L x with L = -G.
    lin: DMatrix<f64>,
    lin_f0: DVector<f64>,
    norm_a: f64,
    norm_c: f64,
    norm_f0: f64,
}

#[derive(Clone)]
struct State {
    y: DVector<f64>,
    xs: Vec<DMatrix<f64>>,
    zs: Vec<DMatrix<f64>>,
    xb: DVector<f64>,
    zb: DVector<f64>,
    xl: DVector<f64>,
    zl: DVector<f64>,
}

struct Direction {
    dy: DVector<f64>,
    dxs: Vec<DMatrix<f64>>,
    dzs: Vec<DMatrix<f64>>,
    dxb: DVector<f64>,
    dzb: DVector<f64>,
    dxl: DVector<f64>,
    dzl: DVector<f64>,
}

struct Residuals {
    rp: DVector<f64>,
    rds: Vec<DMatrix<f64>>,
    rdb: DVector<f64>,
    rdl: DVector<f64>,
}

struct Measures {
    rel_primal: f64,
    rel_dual: f64,
    gap: f64,
    pobj: f64,
    dobj: f64,
    ax_norm: f64,
}

fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

impl Data {
    fn new(p: &SdpProblem) -> Self {
        let d = p.num_vars;
        let blocks = p
            .blocks
            .iter()
            .map(|b| {
                let n = b.size();
                let mut dense: Vec<Option<DMatrix<f64>>> = vec![None; d];
                for (i, f) in &b.coefficients {
                    match &mut dense[*i] {
                        Some(m) => *m += f,
                        slot => *slot = Some(f.clone()),
                    }
                }
                let active: Vec<usize> = (0..d)
                    .filter(|&i| dense[i].as_ref().is_some_and(|m| m.amax() > 0.0))
                    .collect();
                let mut stacked = DMatrix::zeros(n * n, active.len());
                for (j, &i) in active.iter().enumerate() {
                    stacked
                        .column_mut(j)
                        .copy_from_slice(dense[i].as_ref().unwrap().as_slice());
                }
                BlockData {
                    n,
                    f0: b.constant.clone(),
                    active,
                    stacked_abs: stacked.abs(),
                    stacked,
                }
            })
            .collect::<Vec<_>>();
        let r = p.linear.len();
        let mut lin = DMatrix::zeros(r, d);
        let mut lin_f0 = DVector::zeros(r);
        for (k, row) in p.linear.iter().enumerate() {
            lin_f0[k] = row.rhs;
            for (i, v) in &row.coefficients {
                lin[(k, *i)] -= v;
            }
        }
        let a = DVector::from_column_slice(&p.objective);
        let norm_f0 = (blocks.iter().map(|b| b.f0.norm_squared()).sum::<f64>()
            + lin_f0.norm_squared())
        .sqrt();
        Self {
            d,
            norm_a: a.norm(),
            a,
            blocks,
            lin,
            lin_f0,
            norm_c: norm_f0,
            norm_f0,
        }
    }

    fn total_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.n).sum::<usize>() + self.d + self.lin.nrows()
    }

    /// A(X)_i = sum_b <F_i_b, X_b> + xb_i + (L^T xl)_i.
    fn op_a(&self, xs: &[DMatrix<f64>], xb: &DVector<f64>, xl: &DVector<f64>) -> DVector<f64> {
        let mut out = xb.clone();
        for (b, x) in self.blocks.iter().zip(xs) {
            let v = b.stacked.tr_mul(&DVector::from_column_slice(x.as_slice()));
            for (j, &i) in b.active.iter().enumerate() {
                out[i] += v[j];
            }
        }
        out += self.lin.tr_mul(xl);
        out
    }

    /// |A|(|X|): the magnitude of the terms summed in A(X), which bounds its
    /// rounding error.
    fn op_a_abs(&self, xs: &[DMatrix<f64>], xb: &DVector<f64>, xl: &DVector<f64>) -> DVector<f64> {
        let mut out = xb.abs();
        for (b, x) in self.blocks.iter().zip(xs) {
            let v = b.stacked_abs.tr_mul(&DVector::from_iterator(x.len(), x.iter().map(|v| v.abs())));
            for (j, &i) in b.active.iter().enumerate() {
                out[i] += v[j];
            }
        }
        out += self.lin.abs().tr_mul(&xl.abs());
        out
    }

    fn op_at_block(&self, b: &BlockData, y: &DVector<f64>) -> DMatrix<f64> {
        let yb = DVector::from_iterator(b.active.len(), b.active.iter().map(|&i| y[i]));
        let v = &b.stacked * yb;
        DMatrix::from_column_slice(b.n, b.n, v.as_slice())
    }

    fn residuals(&self, s: &State) -> Residuals {
        let rp = &self.a - self.op_a(&s.xs, &s.xb, &s.xl);
        let rds = self
            .blocks
            .iter()
            .zip(&s.zs)
            .map(|(b, z)| {
                let mut r = &b.f0 + self.op_at_block(b, &s.y) - z;
                symmetrize(&mut r);
                r
            })
            .collect();
        let rdb = &s.y - &s.zb;
        let rdl = &self.lin_f0 + &self.lin * &s.y - &s.zl;
        Residuals { rp, rds, rdb, rdl }
    }

    fn complementarity(&self, s: &State) -> f64 {
        s.xs.iter().zip(&s.zs).map(|(x, z)| frob_dot(x, z)).sum::<f64>()
            + s.xb.dot(&s.zb)
            + s.xl.dot(&s.zl)
    }

    fn measures(&self, s: &State, r: &Residuals) -> Measures {
        let pobj = -(self.blocks.iter().zip(&s.xs).map(|(b, x)| frob_dot(&b.f0, x)).sum::<f64>()
            + self.lin_f0.dot(&s.xl));
        let dobj = self.a.dot(&s.y);
        let rd_norm = (r.rds.iter().map(|m| m.norm_squared()).sum::<f64>()
            + r.rdb.norm_squared()
            + r.rdl.norm_squared())
        .sqrt();
        let xz = self.complementarity(s);
        let gap = (dobj - pobj).abs().max(xz.abs()) / (1.0 + pobj.abs() + dobj.abs());
        Measures {
            rel_primal: rd_norm / (1.0 + self.norm_c),
            rel_dual: r.rp.norm() / (1.0 + self.norm_a.max(self.op_a_abs(&s.xs, &s.xb, &s.xl).norm())),
            gap,
            pobj,
            dobj,
            ax_norm: (&self.a - &r.rp).norm(),
        }
    }

    fn initial_state(&self) -> State {
        let nt = self.total_dim() as f64;
        let mut max_ratio: f64 = 0.0;
        let mut max_norm: f64 = 0.0;
        for i in 0..self.d {
            let mut sq = 1.0 + self.lin.column(i).norm_squared();
            for b in &self.blocks {
                if let Ok(j) = b.active.binary_search(&i) {
                    sq += b.stacked.column(j).norm_squared();
                }
            }
            let norm = sq.sqrt();
            max_norm = max_norm.max(norm);
            max_ratio = max_ratio.max((1.0 + self.a[i].abs()) / (1.0 + norm));
        }
        let alpha = 10.0 * nt * max_ratio;
        let beta = 10.0 * (1.0 + max_norm.max(self.norm_c)) / nt.sqrt();
        State {
            y: DVector::zeros(self.d),
            xs: self.blocks.iter().map(|b| DMatrix::identity(b.n, b.n) * alpha).collect(),
            zs: self.blocks.iter().map(|b| DMatrix::identity(b.n, b.n) * beta).collect(),
            xb: DVector::from_element(self.d, alpha),
            zb: DVector::from_element(self.d, beta),
            xl: DVector::from_element(self.lin.nrows(), alpha),
            zl: DVector::from_element(self.lin.nrows(), beta),
        }
    }

    /// Schur complement M_ij = <F_i, X F_j Z^{-1}> summed over blocks.
    fn schur(&self, s: &State, zinv: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.d, self.d);
        for ((b, x), zi) in self.blocks.iter().zip(&s.xs).zip(zinv) {
            let k = b.active.len();
            if k == 0 {
                continue;
            }
            let mut q = DMatrix::zeros(b.n * b.n, k);
            for j in 0..k {
                let f = DMatrix::from_column_slice(b.n, b.n, b.stacked.column(j).as_slice());
                let g = zi * f * x;
                q.column_mut(j).copy_from_slice(g.as_slice());
            }
            let mb = b.stacked.tr_mul(&q);
            for (p, &i) in b.active.iter().enumerate() {
                for (r, &j) in b.active.iter().enumerate() {
                    m[(i, j)] += mb[(p, r)];
                }
            }
        }
        for i in 0..self.d {
            m[(i, i)] += s.xb[i] / s.zb[i];
        }
        if self.lin.nrows() > 0 {
            let w = s.xl.component_div(&s.zl);
            let scaled = DMatrix::from_fn(self.lin.nrows(), self.d, |r, c| self.lin[(r, c)] * w[r]);
            m += self.lin.tr_mul(&scaled);
        }
        symmetrize(&mut m);
        m
    }

    fn factor(m: DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
        if let Some(c) = Cholesky::new(m.clone()) {
            return Some(c);
        }
        let scale = m.diagonal().amax().max(1e-300);
        let mut delta = 1e-14 * scale;
        for _ in 0..6 {
            let mut reg = m.clone();
            for i in 0..reg.nrows() {
                reg[(i, i)] += delta;
            }
            if let Some(c) = Cholesky::new(reg) {
                return Some(c);
            }
            delta *= 100.0;
        }
        None
    }

    fn direction(
        &self,
        s: &State,
        r: &Residuals,
        zinv: &[DMatrix<f64>],
        chol: &Cholesky<f64, nalgebra::Dyn>,
        mu: f64,
        corr: Option<&Direction>,
    ) -> Direction {
        // W = mu Z^{-1} - X R_d Z^{-1} - dXa dZa Z^{-1}
        let ws: Vec<DMatrix<f64>> = (0..self.blocks.len())
            .map(|b| {
                let mut w = &zinv[b] * mu - &s.xs[b] * &r.rds[b] * &zinv[b];
                if let Some(c) = corr {
                    w -= &c.dxs[b] * &c.dzs[b] * &zinv[b];
                }
                w
            })
            .collect();
        let mut wb = DVector::from_fn(self.d, |i, _| (mu - s.xb[i] * r.rdb[i]) / s.zb[i]);
        let mut wl = DVector::from_fn(self.lin.nrows(), |i, _| (mu - s.xl[i] * r.rdl[i]) / s.zl[i]);
        if let Some(c) = corr {
            wb -= c.dxb.component_mul(&c.dzb).component_div(&s.zb);
            wl -= c.dxl.component_mul(&c.dzl).component_div(&s.zl);
        }
        let rhs = self.op_a(&ws, &wb, &wl) - &self.a;
        let dy = chol.solve(&rhs);

        let dzs: Vec<DMatrix<f64>> = self
            .blocks
            .iter()
            .zip(&r.rds)
            .map(|(b, rd)| self.op_at_block(b, &dy) + rd)
            .collect();
        let dxs = (0..self.blocks.len())
            .map(|b| {
                let mut dx = &zinv[b] * mu - &s.xs[b] - &s.xs[b] * &dzs[b] * &zinv[b];
                if let Some(c) = corr {
                    dx -= &c.dxs[b] * &c.dzs[b] * &zinv[b];
                }
                symmetrize(&mut dx);
                dx
            })
            .collect();
        let dzb = &dy + &r.rdb;
        let dzl = &self.lin * &dy + &r.rdl;
        let mut dxb = DVector::from_fn(self.d, |i, _| (mu - s.xb[i] * dzb[i]) / s.zb[i] - s.xb[i]);
        let mut dxl =
            DVector::from_fn(self.lin.nrows(), |i, _| (mu - s.xl[i] * dzl[i]) / s.zl[i] - s.xl[i]);
        if let Some(c) = corr {
            dxb -= c.dxb.component_mul(&c.dzb).component_div(&s.zb);
            dxl -= c.dxl.component_mul(&c.dzl).component_div(&s.zl);
        }
        Direction {
            dy,
            dxs,
            dzs,
            dxb,
            dzb,
            dxl,
            dzl,
        }
    }

    fn step_lengths(&self, s: &State, dir: &Direction) -> (f64, f64) {
        let mut ap = f64::INFINITY;
        let mut ad = f64::INFINITY;
        for b in 0..self.blocks.len() {
            ap = ap.min(max_psd_step(&s.xs[b], &dir.dxs[b]));
            ad = ad.min(max_psd_step(&s.zs[b], &dir.dzs[b]));
        }
        ap = ap.min(max_ratio_step(&s.xb, &dir.dxb)).min(max_ratio_step(&s.xl, &dir.dxl));
        ad = ad.min(max_ratio_step(&s.zb, &dir.dzb)).min(max_ratio_step(&s.zl, &dir.dzl));
        ((STEP_FRACTION * ap).min(1.0), (STEP_FRACTION * ad).min(1.0))
    }

    fn trial_complementarity(&self, s: &State, dir: &Direction, ap: f64, ad: f64) -> f64 {
        let mut total = 0.0;
        for b in 0..self.blocks.len() {
            total += frob_dot(&(&s.xs[b] + &dir.dxs[b] * ap), &(&s.zs[b] + &dir.dzs[b] * ad));
        }
        total += (&s.xb + &dir.dxb * ap).dot(&(&s.zb + &dir.dzb * ad));
        total += (&s.xl + &dir.dxl * ap).dot(&(&s.zl + &dir.dzl * ad));
        total
    }

    fn run(&self, settings: &SolverSettings) -> SdpSolution {
        let nt = self.total_dim() as f64;
        let mut s = self.initial_state();
        let mut best: Option<(f64, State, Measures, usize)> = None;
        let mut stalls = 0;
        let mut iterations = 0;
        let finish = |s: &State, m: &Measures, status, iterations| SdpSolution {
            x: s.y.iter().copied().collect(),
            objective_value: m.dobj,
            status,
            primal_residual: m.rel_primal,
            dual_residual: m.rel_dual,
            gap: m.gap,
            iterations,
        };
        loop {
            let r = self.residuals(&s);
            let m = self.measures(&s, &r);
            if m.rel_primal <= settings.feas_tol
                && m.rel_dual <= settings.feas_tol
                && m.gap <= settings.gap_tol
            {
                return finish(&s, &m, SolverStatus::Optimal, iterations);
            }
            if m.pobj > 0.0 && m.ax_norm < settings.feas_tol * m.pobj {
                return finish(&s, &m, SolverStatus::Infeasible, iterations);
            }
            let rd_abs = m.rel_primal * (1.0 + self.norm_c);
            if m.dobj < 0.0 && self.norm_f0 + rd_abs < settings.feas_tol * m.dobj.abs() {
                return finish(&s, &m, SolverStatus::Unbounded, iterations);
            }
            log::trace!("it {iterations}: primal {:.2e} dual {:.2e} gap {:.2e} pobj {:.6e} dobj {:.6e}", m.rel_primal, m.rel_dual, m.gap, m.pobj, m.dobj);
            let merit = m.rel_primal.max(m.rel_dual).max(m.gap);
            if best.as_ref().is_none_or(|(b, ..)| merit < *b) {
                best = Some((merit, s.clone(), m, iterations));
            }
            let since_best = iterations - best.as_ref().map_or(0, |b| b.3);
            if iterations >= settings.max_iter || stalls >= 3 || since_best >= NO_PROGRESS_LIMIT {
                break;
            }
            iterations += 1;

            let zinv: Option<Vec<DMatrix<f64>>> = s
                .zs
                .iter()
                .map(|z| {
                    Cholesky::new(z.clone()).map(|c| {
                        let mut i = c.inverse();
                        symmetrize(&mut i);
                        i
                    })
                })
                .collect();
            let Some(zinv) = zinv else { break };
            let Some(chol) = Self::factor(self.schur(&s, &zinv)) else {
                break;
            };
            let mu = self.complementarity(&s) / nt;
            let pred = self.direction(&s, &r, &zinv, &chol, 0.0, None);
            let (ap, ad) = self.step_lengths(&s, &pred);
            let mu_aff = self.trial_complementarity(&s, &pred, ap, ad) / nt;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
            let dir = self.direction(&s, &r, &zinv, &chol, sigma * mu, Some(&pred));
            let (ap, ad) = self.step_lengths(&s, &dir);
            if ap < 1e-12 && ad < 1e-12 {
                stalls += 1;
            } else {
                stalls = 0;
            }
            for b in 0..self.blocks.len() {
                s.xs[b] += &dir.dxs[b] * ap;
                s.zs[b] += &dir.dzs[b] * ad;
                symmetrize(&mut s.xs[b]);
                symmetrize(&mut s.zs[b]);
            }
            s.xb += &dir.dxb * ap;
            s.xl += &dir.dxl * ap;
            s.y += &dir.dy * ad;
            s.zb += &dir.dzb * ad;
            s.zl += &dir.dzl * ad;
        }
        let (_, s, m, it) = best.expect("at least one iterate is evaluated");
        if iterations < settings.max_iter
            && m.rel_primal <= STALL_ACCEPT * settings.feas_tol
            && m.rel_dual <= STALL_ACCEPT * settings.feas_tol
            && m.gap <= STALL_ACCEPT * settings.gap_tol
        {
            log::debug!("progress stalled; accepting iterate {it} with gap {:.2e}", m.gap);
            return finish(&s, &m, SolverStatus::Optimal, iterations);
        }
        log::debug!("interior point stopped without convergence at iteration {it}");
        finish(&s, &m, SolverStatus::MaxIter, iterations)
    }
}

/// Largest alpha with X + alpha dX still PSD (infinite if dX keeps it PSD).
fn max_psd_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let Some(ch) = Cholesky::new(x.clone()) else {
        return 0.0;
    };
    let l = ch.l();
    let Some(linv) = l.solve_lower_triangular(&DMatrix::identity(x.nrows(), x.nrows())) else {
        return 0.0;
    };
    let mut t = &linv * dx * linv.transpose();
    symmetrize(&mut t);
    let lmin = min_eigenvalue(&t);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn max_ratio_step(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::super::{solve_sdp, LinearRow, PsdBlock};
    use super::*;

    fn mat(n: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(n, n, v)
    }

    #[test]
    fn scalar_schur_complement() {
        // min t s.t. [[1,1],[1,t]] >= 0
        let mut b = PsdBlock::new(2);
        b.constant = mat(2, &[1.0, 1.0, 1.0, 0.0]);
        b.coefficients.push((0, mat(2, &[0.0, 0.0, 0.0, 1.0])));
        let p = SdpProblem {
            num_vars: 1,
            objective: vec![1.0],
            blocks: vec![b],
            linear: vec![],
        };
        let sol = solve_sdp(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolverStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-7, "{sol:?}");
        assert!(sol.iterations < 100);
    }

    #[test]
    fn diagonal_lp() {
        // min x s.t. diag(x-1, x-2) >= 0
        let mut b = PsdBlock::new(2);
        b.constant = mat(2, &[-1.0, 0.0, 0.0, -2.0]);
        b.coefficients.push((0, DMatrix::identity(2, 2)));
        let p = SdpProblem {
            num_vars: 1,
            objective: vec![1.0],
            blocks: vec![b],
            linear: vec![],
        };
        let sol = solve_sdp(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolverStatus::Optimal);
        assert!((sol.x[0] - 2.0).abs() < 1e-7);
    }

    #[test]
    fn linear_rows_and_bounds() {
        // min -x0 - x1 s.t. x0 + 2 x1 <= 4, 3 x0 + x1 <= 6
        let p = SdpProblem {
            num_vars: 2,
            objective: vec![-1.0, -1.0],
            blocks: vec![],
            linear: vec![
                LinearRow {
                    coefficients: vec![(0, 1.0), (1, 2.0)],
                    rhs: 4.0,
                },
                LinearRow {
                    coefficients: vec![(0, 3.0), (1, 1.0)],
                    rhs: 6.0,
                },
            ],
        };
        let sol = solve_sdp(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolverStatus::Optimal);
        assert!((sol.x[0] - 1.6).abs() < 1e-7 && (sol.x[1] - 1.2).abs() < 1e-7, "{sol:?}");
    }

    #[test]
    fn detects_infeasibility() {
        // x <= -1 with x >= 0
        let p = SdpProblem {
            num_vars: 1,
            objective: vec![1.0],
            blocks: vec![],
            linear: vec![LinearRow {
                coefficients: vec![(0, 1.0)],
                rhs: -1.0,
            }],
        };
        let sol = solve_sdp(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolverStatus::Infeasible, "{sol:?}");
    }

    #[test]
    fn detects_unboundedness() {
        let mut b = PsdBlock::new(1);
        b.coefficients.push((0, DMatrix::identity(1, 1)));
        let p = SdpProblem {
            num_vars: 1,
            objective: vec![-1.0],
            blocks: vec![b],
            linear: vec![],
        };
        let sol = solve_sdp(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolverStatus::Unbounded, "{sol:?}");
    }

    #[test]
    fn deterministic() {
        let mut b = PsdBlock::new(2);
        b.constant = mat(2, &[1.0, 1.0, 1.0, 0.0]);
        b.coefficients.push((0, mat(2, &[0.0, 0.0, 0.0, 1.0])));
        b.coefficients.push((1, mat(2, &[1.0, 0.0, 0.0, 0.0])));
        let p = SdpProblem {
            num_vars: 2,
            objective: vec![1.0, 0.5],
            blocks: vec![b],
            linear: vec![],
        };
        let a = solve_sdp(&p, &SolverSettings::default()).unwrap();
        let b = solve_sdp(&p, &SolverSettings::default()).unwrap();
        assert_eq!(a, b);
    }
}
