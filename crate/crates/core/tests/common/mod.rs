//! Instance generators and brute-force reference computations shared by the
//! integration tests. Nothing here calls the SDP solver.
#![allow(dead_code)]

use mlblue::covariance::{CovarianceStore, Provenance};
use mlblue::harness::SyntheticSuite;
use mlblue::models::{enumerate_groups, GroupSet, ModelSet};
use mlblue::mosap::{Mode, MosapSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

/// Random covariance whose correlations satisfy |rho| <= 0.98 and whose
/// variances lie in [0.1, 10].
pub fn random_covariance(rng: &mut ChaCha8Rng, l: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(l, l + 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let c = &a * a.transpose();
    let d: Vec<f64> = (0..l).map(|i| c[(i, i)].sqrt()).collect();
    let mut r = DMatrix::from_fn(l, l, |i, j| c[(i, j)] / (d[i] * d[j]));
    // shrink towards the identity so no correlation exceeds 0.98
    r = r * 0.98 + DMatrix::identity(l, l) * 0.02;
    let sd: Vec<f64> = (0..l).map(|_| log_uniform(rng, 0.1, 10.0).sqrt()).collect();
    DMatrix::from_fn(l, l, |i, j| r[(i, j)] * sd[i] * sd[j])
}

/// Model 1 costs 1, the cheapest model 1e-3, the rest in between.
pub fn random_costs(rng: &mut ChaCha8Rng, l: usize) -> Vec<f64> {
    let mut c = vec![1.0];
    for i in 1..l {
        c.push(if i == l - 1 { 1e-3 } else { log_uniform(rng, 1e-3, 1.0) });
    }
    c
}

pub fn spec_from(costs: &[f64], covs: &[DMatrix<f64>], kappa: usize, mode: Mode) -> MosapSpec {
    let models = ModelSet::uniform(costs, covs.len()).unwrap();
    let groups = enumerate_groups(&models, kappa, &[]).unwrap();
    let store = CovarianceStore::from_dense(covs, Provenance::Exact).unwrap();
    MosapSpec::new(&groups, &store, mode).unwrap()
}

pub fn groups_of(spec: &MosapSpec) -> &GroupSet {
    &spec.groups
}

/// e1^T Psi^-1 e1 by direct inversion of every group covariance and an LU
/// solve on the sampled models; infinite when model 1 is unsampled.
pub fn reference_variance(groups: &[Vec<usize>], cov: &DMatrix<f64>, n: &[f64]) -> f64 {
    let l = cov.nrows();
    let mut psi = DMatrix::<f64>::zeros(l, l);
    for (g, &nk) in groups.iter().zip(n) {
        if nk <= 0.0 {
            continue;
        }
        let idx: Vec<usize> = g.iter().map(|i| i - 1).collect();
        let c = DMatrix::from_fn(idx.len(), idx.len(), |a, b| cov[(idx[a], idx[b])]);
        let ci = c.try_inverse().expect("group covariance is invertible");
        for a in 0..idx.len() {
            for b in 0..idx.len() {
                psi[(idx[a], idx[b])] += nk * ci[(a, b)];
            }
        }
    }
    let sampled: Vec<usize> = (0..l).filter(|&i| psi[(i, i)] > 0.0).collect();
    if sampled.first() != Some(&0) {
        return f64::INFINITY;
    }
    let k = sampled.len();
    let sub = DMatrix::from_fn(k, k, |a, b| psi[(sampled[a], sampled[b])]);
    let mut e = DVector::zeros(k);
    e[0] = 1.0;
    match sub.lu().solve(&e) {
        Some(x) if x[0].is_finite() && x[0] > 0.0 => x[0],
        _ => f64::INFINITY,
    }
}

/// Budget-constrained minimum of the estimator variance by a simplex grid over
/// budget shares followed by pairwise-transfer pattern search.
///
/// The variance is convex in the shares but not differentiable where Psi is
/// singular, and compass search can stall there. Every share is therefore
/// kept above `SHARE_FLOOR`, which keeps Psi nonsingular and perturbs the
/// optimum by a relative O(1e-7).
const SHARE_FLOOR: f64 = 1e-8;

pub fn grid_oracle(groups: &[Vec<usize>], group_costs: &[f64], cov: &DMatrix<f64>, budget: f64, steps: usize) -> f64 {
    let k = groups.len();
    let eval = |w: &[f64]| {
        let n: Vec<f64> = w.iter().zip(group_costs).map(|(w, c)| budget * w / c).collect();
        reference_variance(groups, cov, &n)
    };
    let mut best_w = vec![0.0; k];
    let mut best = f64::INFINITY;
    let mut counts = vec![0usize; k];
    // enumerate compositions of `steps` into k parts
    fn rec(
        pos: usize,
        left: usize,
        counts: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize]),
    ) {
        if pos == counts.len() - 1 {
            counts[pos] = left;
            f(counts);
            return;
        }
        for v in 0..=left {
            counts[pos] = v;
            rec(pos + 1, left - v, counts, f);
        }
    }
    rec(0, steps, &mut counts, &mut |c| {
        let free = 1.0 - SHARE_FLOOR * k as f64;
        let w: Vec<f64> = c.iter().map(|&v| SHARE_FLOOR + free * v as f64 / steps as f64).collect();
        let v = eval(&w);
        if v < best {
            best = v;
            best_w = w;
        }
    });
    let mut delta = 0.5 / steps as f64;
    while delta > 1e-12 {
        let mut improved = false;
        for i in 0..k {
            for j in 0..k {
                if i == j || best_w[i] <= SHARE_FLOOR {
                    continue;
                }
                let d = delta.min(best_w[i] - SHARE_FLOOR);
                let mut w = best_w.clone();
                w[i] -= d;
                w[j] += d;
                let v = eval(&w);
                if v < best {
                    best = v;
                    best_w = w;
                    improved = true;
                }
            }
        }
        if !improved {
            delta *= 0.5;
        }
    }
    best
}

/// Nested hierarchy: p_k = z_0 + sum_{j >= k} a_j z_j with
/// V[p_k - p_{k+1}] = a_k^2 = top * decay^{-(l-k)}, so model 1 is the finest
/// level and model l the coarsest. Costs grow by 4 per refinement.
pub fn hierarchy(l: usize, top: f64, decay: f64) -> (SyntheticSuite, Vec<f64>) {
    let d = l + 1;
    let a = DMatrix::from_fn(l, d, |k, j| {
        if j == 0 {
            1.0
        } else if j > k {
            (top * decay.powi(-((l - j) as i32))).sqrt()
        } else {
            0.0
        }
    });
    let costs = (0..l).map(|k| 4f64.powi((l - 1 - k) as i32)).collect();
    (SyntheticSuite::from_matrices(&[a], None), costs)
}

/// Random linear-Gaussian suite with `d` >= `l` inputs per output.
pub fn random_suite(rng: &mut ChaCha8Rng, l: usize, m: usize, d: usize) -> SyntheticSuite {
    let mats: Vec<DMatrix<f64>> = (0..m)
        .map(|_| {
            let common = DMatrix::from_fn(1, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            DMatrix::from_fn(l, d, |i, j| {
                let noise: f64 = rng.sample(StandardNormal);
                common[(0, j)] + 0.3 * noise * (1.0 + i as f64) / l as f64
            })
        })
        .collect();
    let offsets: Vec<DVector<f64>> = (0..m)
        .map(|_| DVector::from_fn(l, |_, _| rng.random_range(-5.0..5.0)))
        .collect();
    SyntheticSuite::from_matrices(&mats, Some(&offsets))
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares slope of y against x.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
