//! The model file written by `learn` and read by `reconstruct`.

use std::path::Path;

use graph_recon::clustering::ClusterAssignment;
use graph_recon::data::StandardizationParams;
use graph_recon::evaluation::CellParams;
use graph_recon::graph::GraphDocument;
use graph_recon::reconstruction::{GraphModel, KernelMatrix, MethodKind, MethodSpec};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub method: MethodKind,
    pub nodes: Vec<String>,
    /// Fitted on the complete rows of the training data, all nodes.
    pub standardization: StandardizationParams,
    pub assignment: ClusterAssignment,
    pub clusters: Vec<ClusterModel>,
}

/// One cluster's graph, indexed in the cluster's own node order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterModel {
    pub members: Vec<usize>,
    pub params: CellParams,
    pub spec: MethodSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphDocument>,
    /// Row-major covariance kernel (KRR-COV only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
}

impl ClusterModel {
    pub fn graph_model(&self) -> Result<GraphModel, CliError> {
        match (&self.graph, &self.covariance) {
            (Some(doc), None) => Ok(GraphModel::from_laplacian(doc.laplacian()?)?),
            (None, Some(rows)) => {
                let n = rows.len();
                if rows.iter().any(|r| r.len() != n) {
                    return Err(CliError::Usage("covariance is not square".into()));
                }
                let k = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
                Ok(GraphModel::from_covariance(KernelMatrix::new(k)?))
            }
            _ => Err(CliError::Usage("a cluster needs exactly one of graph or covariance".into())),
        }
    }
}

pub fn covariance_rows(k: &DMatrix<f64>) -> Vec<Vec<f64>> {
    k.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read model {}: {e}", path.display())))?;
        let model: Self =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("model {}: {e}", path.display())))?;
        if model.nodes.len() != model.assignment.n() || model.clusters.len() != model.assignment.c() {
            return Err(CliError::Usage(format!("model {} is inconsistent", path.display())));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        crate::write_json(path, self)
    }
}
