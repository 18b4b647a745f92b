use serde::{Deserialize, Serialize};

use super::{ActionTimeModel, EstimateError, WalkMoments, WlsDiagnostics};
use crate::network::{enumerate_walk_variables, Topology, WalkKind};

/// JSON model document: one entry per walk variable plus optional solver
/// diagnostics and an error report against a reference model.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelFile {
    pub variables: Vec<ModelVariable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<WlsDiagnostics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mse_vs_truth: Option<MseReport>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct MseReport {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelVariable {
    pub id: String,
    pub kind: String,
    pub mean: f64,
    pub variance: f64,
    /// Absent for zero-variance variables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

impl ModelFile {
    pub fn from_model(model: &ActionTimeModel, diagnostics: Option<WlsDiagnostics>) -> Self {
        let variables = model
            .walks()
            .vars()
            .iter()
            .enumerate()
            .map(|(l, v)| {
                let m = model.moments()[l];
                let g = model.gamma(l);
                ModelVariable {
                    id: v.id.clone(),
                    kind: match v.kind {
                        WalkKind::Platform { .. } => "platform".into(),
                        WalkKind::Transfer { .. } => "transfer".into(),
                    },
                    mean: m.mean,
                    variance: m.variance,
                    shape: g.map(|g| g.shape),
                    scale: g.map(|g| g.scale),
                }
            })
            .collect();
        ModelFile { variables, diagnostics, mse_vs_truth: None }
    }

    /// Rebuild a model for `topo`. Every walk variable must be listed exactly once.
    pub fn to_model(&self, topo: &Topology) -> Result<ActionTimeModel, EstimateError> {
        let walks = enumerate_walk_variables(topo);
        let mut moments: Vec<Option<WalkMoments>> = vec![None; walks.len()];
        for v in &self.variables {
            let l = walks
                .position(&v.id)
                .ok_or_else(|| EstimateError::ModelFile(format!("unknown walk variable '{}'", v.id)))?;
            if moments[l].replace(WalkMoments { mean: v.mean, variance: v.variance }).is_some() {
                return Err(EstimateError::ModelFile(format!("walk variable '{}' listed twice", v.id)));
            }
        }
        let moments = moments
            .into_iter()
            .enumerate()
            .map(|(l, m)| {
                m.ok_or_else(|| EstimateError::ModelFile(format!("missing walk variable '{}'", walks.get(l).id)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        ActionTimeModel::new(walks, moments)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, EstimateError> {
        serde_json::from_str(text).map_err(|e| EstimateError::ModelFile(e.to_string()))
    }
}
