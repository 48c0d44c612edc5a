//! Model sets, model groupings and their ordering.
//!
//! Models are identified by 1-based ids on the public surface; id 1 is the
//! high-fidelity reference and must produce every output. Internally all
//! indices are 0-based.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One model: per-sample cost and the (1-based) outputs it produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub id: usize,
    pub cost: f64,
    pub outputs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    costs: Vec<f64>,
    /// `produces[i][s]`: model i yields output s.
    produces: Vec<Vec<bool>>,
    num_outputs: usize,
}

impl ModelSet {
    /// Validates and normalizes a model list. Input order is irrelevant; models
    /// are keyed by id.
    pub fn new(models: &[ModelSpec], num_outputs: usize) -> Result<Self> {
        if num_outputs == 0 {
            return Err(Error::ModelSet("at least one output is required".into()));
        }
        if models.is_empty() {
            return Err(Error::ModelSet("at least one model is required".into()));
        }
        let mut sorted: Vec<&ModelSpec> = models.iter().collect();
        sorted.sort_by_key(|m| m.id);
        let mut costs = Vec::with_capacity(sorted.len());
        let mut produces = Vec::with_capacity(sorted.len());
        for (pos, m) in sorted.iter().enumerate() {
            if m.id != pos + 1 {
                return Err(Error::ModelSet(format!(
                    "model ids must be 1..{} without gaps or duplicates (found id {} at position {})",
                    sorted.len(),
                    m.id,
                    pos + 1
                )));
            }
            if !(m.cost.is_finite() && m.cost > 0.0) {
                return Err(Error::ModelSet(format!(
                    "model {} has non-positive or non-finite cost {}",
                    m.id, m.cost
                )));
            }
            if m.outputs.is_empty() {
                return Err(Error::ModelSet(format!("model {} produces no outputs", m.id)));
            }
            let mut mask = vec![false; num_outputs];
            for &s in &m.outputs {
                if s == 0 || s > num_outputs {
                    return Err(Error::ModelSet(format!(
                        "model {} lists output {} outside 1..{}",
                        m.id, s, num_outputs
                    )));
                }
                mask[s - 1] = true;
            }
            costs.push(m.cost);
            produces.push(mask);
        }
        if produces[0].iter().any(|&p| !p) {
            return Err(Error::ModelSet(
                "model 1 is the high-fidelity reference and must produce every output".into(),
            ));
        }
        Ok(Self {
            costs,
            produces,
            num_outputs,
        })
    }

    /// All models produce every one of `num_outputs` outputs.
    pub fn uniform(costs: &[f64], num_outputs: usize) -> Result<Self> {
        let specs: Vec<ModelSpec> = costs
            .iter()
            .enumerate()
            .map(|(i, &cost)| ModelSpec {
                id: i + 1,
                cost,
                outputs: (1..=num_outputs).collect(),
            })
            .collect();
        Self::new(&specs, num_outputs)
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn num_outputs(&self) -> usize {
        self.num_outputs
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    /// 0-based model and output.
    pub fn produces(&self, model: usize, output: usize) -> bool {
        self.produces[model][output]
    }

    pub fn specs(&self) -> Vec<ModelSpec> {
        (0..self.len())
            .map(|i| ModelSpec {
                id: i + 1,
                cost: self.costs[i],
                outputs: (0..self.num_outputs)
                    .filter(|&s| self.produces[i][s])
                    .map(|s| s + 1)
                    .collect(),
            })
            .collect()
    }
}

/// A model grouping: sorted, distinct 0-based model indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Group(Vec<usize>);

impl Group {
    /// From 1-based model ids.
    pub fn from_ids(ids: &[usize], num_models: usize) -> Result<Self> {
        let idx = restriction_indices(ids, num_models)?;
        Ok(Group(idx.into_iter().map(|i| i - 1).collect()))
    }

    /// From 0-based indices (sorted and deduplicated here).
    pub fn from_indices(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Group(indices)
    }

    /// Sorted 0-based model indices (the rows of the identity forming R_k).
    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn ids(&self) -> Vec<usize> {
        self.0.iter().map(|i| i + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, model: usize) -> bool {
        self.0.binary_search(&model).is_ok()
    }

    pub fn contains_high_fidelity(&self) -> bool {
        self.0.first() == Some(&0)
    }

    /// Boolean restriction matrix R_k (|group| x num_models).
    pub fn restriction_matrix(&self, num_models: usize) -> DMatrix<f64> {
        let mut r = DMatrix::zeros(self.len(), num_models);
        for (row, &i) in self.0.iter().enumerate() {
            r[(row, i)] = 1.0;
        }
        r
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        write!(f, "}}")
    }
}

/// Sorted 1-based model ids of a group; these select the rows of the identity
/// forming the restriction matrix.
pub fn restriction_indices(ids: &[usize], num_models: usize) -> Result<Vec<usize>> {
    if ids.is_empty() {
        return Err(Error::GroupSet("empty group".into()));
    }
    let mut out = ids.to_vec();
    out.sort_unstable();
    out.dedup();
    if out.len() != ids.len() {
        return Err(Error::GroupSet(format!("group {ids:?} has repeated models")));
    }
    if out[0] == 0 || *out.last().unwrap() > num_models {
        return Err(Error::GroupSet(format!(
            "group {ids:?} references models outside 1..{num_models}"
        )));
    }
    Ok(out)
}

/// Ordered list of allowed model groupings with per-output availability.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSet {
    groups: Vec<Group>,
    costs: Vec<f64>,
    /// `allowed[s][k]`: group k may be used for output s.
    allowed: Vec<Vec<bool>>,
    kappa: usize,
    num_models: usize,
}

fn size_then_lex(a: &Group, b: &Group) -> std::cmp::Ordering {
    a.len().cmp(&b.len()).then_with(|| a.0.cmp(&b.0))
}

/// All groupings of at most `kappa` models minus `deny_list` (1-based ids),
/// ordered by size then lexicographically.
///
/// A group may serve output s only if every member produces s. Groups that
/// serve no output are dropped, since their samples could never be used.
pub fn enumerate_groups(
    models: &ModelSet,
    kappa: usize,
    deny_list: &[Vec<usize>],
) -> Result<GroupSet> {
    let l = models.len();
    if kappa == 0 || kappa > l {
        return Err(Error::GroupSet(format!("kappa must lie in 1..={l}, got {kappa}")));
    }
    let denied = deny_list
        .iter()
        .map(|ids| Group::from_ids(ids, l))
        .collect::<Result<Vec<_>>>()?;

    let mut groups = Vec::new();
    for size in 1..=kappa {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            let g = Group(combo.clone());
            if !denied.contains(&g) {
                groups.push(g);
            }
            // advance to the next lexicographic combination
            let mut pos = size;
            while pos > 0 && combo[pos - 1] == l - size + pos - 1 {
                pos -= 1;
            }
            if pos == 0 {
                break;
            }
            combo[pos - 1] += 1;
            for q in pos..size {
                combo[q] = combo[q - 1] + 1;
            }
        }
    }
    let m = models.num_outputs();
    let allowed: Vec<Vec<bool>> = (0..m)
        .map(|s| {
            groups
                .iter()
                .map(|g| g.indices().iter().all(|&i| models.produces(i, s)))
                .collect()
        })
        .collect();
    let costs = group_costs(&groups, models.costs());
    GroupSet::assemble(groups, costs, allowed, kappa, l)
}

fn group_costs(groups: &[Group], model_costs: &[f64]) -> Vec<f64> {
    groups
        .iter()
        .map(|g| g.indices().iter().map(|&i| model_costs[i]).sum())
        .collect()
}

impl GroupSet {
    fn assemble(
        groups: Vec<Group>,
        costs: Vec<f64>,
        allowed: Vec<Vec<bool>>,
        kappa: usize,
        num_models: usize,
    ) -> Result<Self> {
        let keep: Vec<bool> = (0..groups.len())
            .map(|k| allowed.iter().any(|mask| mask[k]))
            .collect();
        let groups: Vec<Group> = groups
            .into_iter()
            .zip(&keep)
            .filter_map(|(g, &kp)| kp.then_some(g))
            .collect();
        let allowed: Vec<Vec<bool>> = allowed
            .into_iter()
            .map(|mask| {
                mask.into_iter()
                    .zip(&keep)
                    .filter_map(|(a, &kp)| kp.then_some(a))
                    .collect()
            })
            .collect();
        let costs = costs
            .into_iter()
            .zip(&keep)
            .filter_map(|(c, &kp)| kp.then_some(c))
            .collect();
        let set = Self {
            groups,
            costs,
            allowed,
            kappa,
            num_models,
        };
        for s in 0..set.num_outputs() {
            if !set.h_mask(s).iter().any(|&h| h) {
                return Err(Error::NoHighFidelityGroup { output: s + 1 });
            }
        }
        Ok(set)
    }

    /// Explicit group list (1-based ids) with availability computed from `models`.
    /// The list is sorted into canonical order.
    pub fn from_groups(models: &ModelSet, groups: &[Vec<usize>]) -> Result<Self> {
        let mut gs = groups
            .iter()
            .map(|ids| Group::from_ids(ids, models.len()))
            .collect::<Result<Vec<_>>>()?;
        gs.sort_by(size_then_lex);
        gs.dedup();
        let kappa = gs.iter().map(Group::len).max().unwrap_or(0);
        let allowed = (0..models.num_outputs())
            .map(|s| {
                gs.iter()
                    .map(|g| g.indices().iter().all(|&i| models.produces(i, s)))
                    .collect()
            })
            .collect();
        let costs = group_costs(&gs, models.costs());
        Self::assemble(gs, costs, allowed, kappa, models.len())
    }

    /// Narrows per-output availability with `keep(output, group)`, dropping groups
    /// no output can use any more. Used to propagate unknown covariances.
    pub fn restrict<F>(&self, mut keep: F) -> Result<Self>
    where
        F: FnMut(usize, &Group) -> bool,
    {
        let allowed = self
            .allowed
            .iter()
            .enumerate()
            .map(|(s, mask)| {
                mask.iter()
                    .zip(&self.groups)
                    .map(|(&a, g)| a && keep(s, g))
                    .collect()
            })
            .collect();
        Self::assemble(
            self.groups.clone(),
            self.costs.clone(),
            allowed,
            self.kappa,
            self.num_models,
        )
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn group(&self, k: usize) -> &Group {
        &self.groups[k]
    }

    /// Group cost vector c, c_k = sum of member model costs.
    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn num_models(&self) -> usize {
        self.num_models
    }

    pub fn num_outputs(&self) -> usize {
        self.allowed.len()
    }

    pub fn allowed(&self, output: usize) -> &[bool] {
        &self.allowed[output]
    }

    /// h^s: group k is allowed for output s and contains model 1.
    pub fn h_mask(&self, output: usize) -> Vec<bool> {
        self.allowed[output]
            .iter()
            .zip(&self.groups)
            .map(|(&a, g)| a && g.contains_high_fidelity())
            .collect()
    }

    pub fn h_vector(&self, output: usize) -> Vec<f64> {
        self.h_mask(output)
            .into_iter()
            .map(|h| if h { 1.0 } else { 0.0 })
            .collect()
    }

    /// Cheapest allowed group containing model 1 for `output`.
    pub fn min_well_posed_cost(&self, output: usize) -> f64 {
        self.h_mask(output)
            .iter()
            .zip(&self.costs)
            .filter(|(&h, _)| h)
            .map(|(_, &c)| c)
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the group with exactly these 1-based ids.
    pub fn position(&self, ids: &[usize]) -> Option<usize> {
        let g = Group::from_ids(ids, self.num_models).ok()?;
        self.groups.iter().position(|h| *h == g)
    }
}

/// True iff the budget can buy one sample of the cheapest allowed group
/// containing model 1 for `output` (0-based).
pub fn check_budget_feasibility(groups: &GroupSet, budget: f64, output: usize) -> bool {
    budget >= groups.min_well_posed_cost(output)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn three_models_all_groups_in_order() {
        let models = ModelSet::uniform(&[1.0, 1.0, 1.0], 1).unwrap();
        let gs = enumerate_groups(&models, 3, &[]).unwrap();
        let ids: Vec<Vec<usize>> = gs.groups().iter().map(Group::ids).collect();
        assert_eq!(
            ids,
            vec![
                vec![1],
                vec![2],
                vec![3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3],
                vec![1, 2, 3]
            ]
        );
    }

    #[test]
    fn single_model() {
        let models = ModelSet::uniform(&[2.0], 1).unwrap();
        let gs = enumerate_groups(&models, 1, &[]).unwrap();
        assert_eq!(gs.len(), 1);
        assert_eq!(gs.group(0).ids(), vec![1]);
        assert_eq!(gs.costs(), &[2.0]);
    }

    #[test]
    fn group_counts_match_binomials() {
        for l in 1..=12 {
            let models = ModelSet::uniform(&vec![1.0; l], 1).unwrap();
            for kappa in 1..=l.min(5) {
                let gs = enumerate_groups(&models, kappa, &[]).unwrap();
                let expected: usize = (1..=kappa).map(|j| binom(l, j)).sum();
                assert_eq!(gs.len(), expected, "l={l} kappa={kappa}");
            }
        }
        let models = ModelSet::uniform(&[1.0; 12], 1).unwrap();
        assert_eq!(enumerate_groups(&models, 3, &[]).unwrap().len(), 298);
    }

    #[test]
    fn deny_list_removes_entries() {
        let models = ModelSet::uniform(&[1.0, 1.0, 1.0], 1).unwrap();
        let gs = enumerate_groups(&models, 3, &[vec![1, 3], vec![3, 2]]).unwrap();
        assert_eq!(gs.len(), 5);
        assert!(gs.position(&[1, 3]).is_none());
        assert!(gs.position(&[2, 3]).is_none());
        assert_eq!(gs.position(&[1, 2, 3]), Some(4));
    }

    #[test]
    fn denying_every_high_fidelity_group_fails() {
        let models = ModelSet::uniform(&[1.0, 1.0], 1).unwrap();
        let err = enumerate_groups(&models, 2, &[vec![1], vec![1, 2]]).unwrap_err();
        assert!(matches!(err, Error::NoHighFidelityGroup { output: 1 }));
    }

    #[test]
    fn restriction_index_examples() {
        assert_eq!(restriction_indices(&[3, 1], 3).unwrap(), vec![1, 3]);
        assert_eq!(restriction_indices(&[2], 2).unwrap(), vec![2]);
        let g = Group::from_ids(&[1, 2, 3], 3).unwrap();
        assert_eq!(g.restriction_matrix(3), DMatrix::identity(3, 3));
        let g = Group::from_ids(&[1, 3], 3).unwrap();
        let r = g.restriction_matrix(3);
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(r.row(0), id.row(0));
        assert_eq!(r.row(1), id.row(2));
        assert!(restriction_indices(&[], 3).is_err());
        assert!(restriction_indices(&[4], 3).is_err());
        assert!(restriction_indices(&[1, 1], 3).is_err());
    }

    #[test]
    fn budget_feasibility() {
        let models = ModelSet::uniform(&[10.0, 0.5], 1).unwrap();
        let gs = GroupSet::from_groups(&models, &[vec![1], vec![1, 2]]).unwrap();
        assert_eq!(gs.costs(), &[10.0, 10.5]);
        assert!(check_budget_feasibility(&gs, 10.0, 0));
        assert!(!check_budget_feasibility(&gs, 9.99, 0));
        let one = ModelSet::uniform(&[1.0], 1).unwrap();
        let gs = enumerate_groups(&one, 1, &[]).unwrap();
        assert!(check_budget_feasibility(&gs, 1.0, 0));
    }

    #[test]
    fn per_output_masks_follow_availability() {
        let specs = vec![
            ModelSpec { id: 1, cost: 1.0, outputs: vec![1, 2] },
            ModelSpec { id: 2, cost: 0.1, outputs: vec![1] },
            ModelSpec { id: 3, cost: 0.1, outputs: vec![2] },
        ];
        let models = ModelSet::new(&specs, 2).unwrap();
        let gs = enumerate_groups(&models, 3, &[]).unwrap();
        // {2,3} and {1,2,3} serve no output and are dropped
        let ids: Vec<Vec<usize>> = gs.groups().iter().map(Group::ids).collect();
        assert_eq!(ids, vec![vec![1], vec![2], vec![3], vec![1, 2], vec![1, 3]]);
        assert_eq!(gs.allowed(0), &[true, true, false, true, false]);
        assert_eq!(gs.allowed(1), &[true, false, true, false, true]);
        assert_eq!(gs.h_mask(1), vec![true, false, false, false, true]);
    }

    #[test]
    fn model_set_validation() {
        let bad_ids = vec![
            ModelSpec { id: 1, cost: 1.0, outputs: vec![1] },
            ModelSpec { id: 3, cost: 1.0, outputs: vec![1] },
        ];
        assert!(ModelSet::new(&bad_ids, 1).is_err());
        let no_outputs = vec![
            ModelSpec { id: 1, cost: 1.0, outputs: vec![1] },
            ModelSpec { id: 2, cost: 1.0, outputs: vec![] },
        ];
        assert!(ModelSet::new(&no_outputs, 1).is_err());
        let partial_hf = vec![ModelSpec { id: 1, cost: 1.0, outputs: vec![1] }];
        assert!(ModelSet::new(&partial_hf, 2).is_err());
        assert!(ModelSet::uniform(&[1.0, 0.0], 1).is_err());
        assert!(ModelSet::uniform(&[1.0, f64::NAN], 1).is_err());
    }

    #[test]
    fn input_order_does_not_matter() {
        let specs = vec![
            ModelSpec { id: 3, cost: 0.01, outputs: vec![1] },
            ModelSpec { id: 1, cost: 1.0, outputs: vec![1] },
            ModelSpec { id: 2, cost: 0.1, outputs: vec![1] },
        ];
        let mut rev = specs.clone();
        rev.reverse();
        let a = enumerate_groups(&ModelSet::new(&specs, 1).unwrap(), 2, &[]).unwrap();
        let b = enumerate_groups(&ModelSet::new(&rev, 1).unwrap(), 2, &[]).unwrap();
        assert_eq!(a, b);
    }
}
