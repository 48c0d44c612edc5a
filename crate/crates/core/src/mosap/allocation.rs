use serde::{Deserialize, Serialize};

use super::MosapSpec;
use crate::error::{Error, Result};
use crate::sdp::SolverStatus;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    pub gap: f64,
    pub status: SolverStatus,
}

/// A sample allocation over the groups of a [`MosapSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub mode: &'static str,
    pub n: Vec<f64>,
    pub is_integer: bool,
    /// e1^T Psi_s(n)^+ e1 for each output.
    pub per_output_variance: Vec<f64>,
    pub total_cost: f64,
    /// Value of the mode's objective at `n`.
    pub objective: f64,
    /// Group member ids, aligned with `n`.
    pub groups: Vec<Vec<usize>>,
    pub solver: SolverReport,
    /// Unscaled SDP corner variable t (advisory; not present in tolerance form).
    pub sdp_corner: Option<f64>,
    /// Integer objective divided by the continuous one.
    pub relaxation_ratio: Option<f64>,
    /// Set when integer projection had to fall back to a heuristic.
    pub fallback: Option<String>,
}

impl Allocation {
    pub fn evaluate(spec: &MosapSpec, n: Vec<f64>, is_integer: bool, solver: SolverReport) -> Result<Self> {
        if n.len() != spec.groups.len() {
            return Err(Error::AllocationLength {
                expected: spec.groups.len(),
                got: n.len(),
            });
        }
        let per_output_variance = spec.variances(&n)?;
        let total_cost = spec.total_cost(&n);
        Ok(Self {
            mode: spec.mode.name(),
            objective: spec.objective(&per_output_variance, total_cost),
            groups: spec.groups.groups().iter().map(|g| g.ids()).collect(),
            n,
            is_integer,
            per_output_variance,
            total_cost,
            solver,
            sdp_corner: None,
            relaxation_ratio: None,
            fallback: None,
        })
    }

    /// Indices of groups with n_k > 0.
    pub fn selected_groups(&self) -> Vec<usize> {
        (0..self.n.len()).filter(|&k| self.n[k] > 0.0).collect()
    }

    pub fn max_variance(&self) -> f64 {
        self.per_output_variance.iter().copied().fold(0.0, f64::max)
    }

    pub fn counts(&self) -> Option<Vec<usize>> {
        self.is_integer
            .then(|| self.n.iter().map(|&v| v.round() as usize).collect())
    }

    /// Serializable form; only groups with samples are listed.
    pub fn record(&self, method: Option<&str>) -> AllocationRecord {
        let sel = self.selected_groups();
        AllocationRecord {
            mode: self.mode.to_string(),
            method: method.map(str::to_string),
            n: sel
                .iter()
                .map(|&k| {
                    if self.is_integer {
                        Count::Integer(self.n[k].round() as u64)
                    } else {
                        Count::Real(self.n[k])
                    }
                })
                .collect(),
            groups: sel.iter().map(|&k| self.groups[k].clone()).collect(),
            total_cost: self.total_cost,
            per_output_variance: self.per_output_variance.clone(),
            solver: SolverSummary {
                iterations: self.solver.iterations,
                gap: self.solver.gap,
            },
            relaxation_ratio: self.relaxation_ratio,
            fallback: self.fallback.clone(),
        }
    }
}

/// Sample count as written to JSON: integers for projected allocations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Count {
    Integer(u64),
    Real(f64),
}

impl Count {
    pub fn value(self) -> f64 {
        match self {
            Count::Integer(v) => v as f64,
            Count::Real(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSummary {
    pub iterations: usize,
    pub gap: f64,
}

/// JSON allocation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationRecord {
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    pub n: Vec<Count>,
    pub groups: Vec<Vec<usize>>,
    pub total_cost: f64,
    pub per_output_variance: Vec<f64>,
    pub solver: SolverSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relaxation_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
}

impl AllocationRecord {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let rec: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let pointer = json_pointer(e.path());
            Error::config(pointer, e.inner().to_string())
        })?;
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n.len() != self.groups.len() {
            return Err(Error::config("/n", format!(
                "{} counts for {} groups",
                self.n.len(),
                self.groups.len()
            )));
        }
        if let Some(k) = self.n.iter().position(|c| !(c.value() >= 0.0 && c.value().is_finite())) {
            return Err(Error::config(format!("/n/{k}"), "sample counts must be finite and nonnegative"));
        }
        for (k, g) in self.groups.iter().enumerate() {
            if g.is_empty() || g.contains(&0) {
                return Err(Error::config(format!("/groups/{k}"), "groups list 1-based model ids"));
            }
        }
        Ok(())
    }

    /// Expands to a full allocation vector over `spec`'s groups.
    pub fn to_allocation_vector(&self, spec: &MosapSpec) -> Result<Vec<f64>> {
        let mut n = vec![0.0; spec.groups.len()];
        for (k, (ids, c)) in self.groups.iter().zip(&self.n).enumerate() {
            let pos = spec.groups.position(ids).ok_or_else(|| {
                Error::config(format!("/groups/{k}"), format!("group {ids:?} is not allowed"))
            })?;
            n[pos] = c.value();
        }
        Ok(n)
    }
}

/// RFC 6901 pointer for a serde_path_to_error path.
pub(crate) fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } | Segment::Enum { variant: key } => {
                out.push_str(&key.replace('~', "~0").replace('/', "~1"))
            }
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_round_trip_and_integer_counts() {
        let rec = AllocationRecord {
            mode: "budget".into(),
            method: None,
            n: vec![Count::Integer(3), Count::Integer(70)],
            groups: vec![vec![1], vec![1, 2]],
            total_cost: 73.7,
            per_output_variance: vec![0.0125],
            solver: SolverSummary {
                iterations: 17,
                gap: 1e-9,
            },
            relaxation_ratio: Some(1.01),
            fallback: None,
        };
        let text = serde_json::to_string(&rec).unwrap();
        assert!(text.contains("\"n\":[3,70]"));
        assert_eq!(AllocationRecord::from_json(&text).unwrap(), rec);
    }

    #[test]
    fn errors_carry_pointers() {
        let err = AllocationRecord::from_json(
            r#"{"mode":"budget","n":[1],"groups":[[1]],"total_cost":1,"per_output_variance":[1],"solver":{"iterations":1,"gap":"x"}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("/solver/gap"), "{err}");
        let err = AllocationRecord::from_json(
            r#"{"mode":"budget","n":[-1],"groups":[[1]],"total_cost":1,"per_output_variance":[1],"solver":{"iterations":1,"gap":0}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("/n/0"), "{err}");
    }
}
