//! JSON model files, schema version 1. See `docs/model-file.md`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use soqn::netmodel::{Discipline, InnerNode, RateFunction, RoutingMatrix, SoqnModel, ValidatedModel};
use soqn::rmfs::{build_rmfs_model, RmfsParams};

use crate::failure::Failure;

pub const SCHEMA_VERSION: u32 = 1;
pub const POOL_ID: &str = "pool";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<NodeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routing: Option<RoutingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resources: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrival_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmfs: Option<RmfsParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    #[serde(default)]
    pub discipline: Discipline,
    pub rate: RateFunction,
}

/// Either a full `(J+1)×(J+1)` matrix, row 0 being the pool, or a list of
/// nonzero entries keyed by node id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum RoutingSpec {
    Dense(Vec<Vec<f64>>),
    Sparse(Vec<SparseEntry>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseEntry {
    pub from: String,
    pub to: String,
    pub p: f64,
}

impl ModelFile {
    pub fn read(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|f| f.context(&path.display().to_string()))
    }

    pub fn parse(text: &str) -> Result<Self, Failure> {
        let file: ModelFile = serde_json::from_str(text)
            .map_err(|e| Failure::input(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        if file.schema != SCHEMA_VERSION {
            return Err(Failure::input(format!("unsupported schema {}, expected {SCHEMA_VERSION}", file.schema)));
        }
        let has_network = !file.nodes.is_empty() || file.routing.is_some() || file.arrival_rate.is_some();
        if has_network && file.rmfs.is_some() {
            return Err(Failure::input("give either nodes/routing/arrival_rate or an rmfs block, not both"));
        }
        if !has_network && file.rmfs.is_none() {
            return Err(Failure::input("the file defines neither a network nor an rmfs block"));
        }
        Ok(file)
    }

    /// Dense representation of a validated model; parsing it back yields the
    /// same model.
    #[cfg(test)]
    pub fn from_model(model: &SoqnModel) -> Self {
        ModelFile {
            schema: SCHEMA_VERSION,
            nodes: model
                .nodes
                .iter()
                .map(|n| NodeSpec { id: n.name.clone(), discipline: n.discipline, rate: n.rate.clone() })
                .collect(),
            routing: Some(RoutingSpec::Dense(model.routing.rows().map(<[f64]>::to_vec).collect())),
            resources: Some(model.resources),
            arrival_rate: Some(model.arrival_rate),
            rmfs: None,
        }
    }

    pub fn rmfs(&self) -> Option<&RmfsParams> {
        self.rmfs.as_ref()
    }

    /// The network at `resources` robots, or at the file's `resources` when
    /// `None`.
    pub fn network(&self, resources: Option<usize>) -> Result<ValidatedModel, Failure> {
        let n = resources.or(self.resources).ok_or_else(|| Failure::input("the number of resources is not given"))?;
        if let Some(params) = &self.rmfs {
            return build_rmfs_model(params, n).map_err(Failure::from);
        }
        let arrival_rate = self.arrival_rate.ok_or_else(|| Failure::input("arrival_rate is missing"))?;
        let routing = self.routing_matrix()?;
        let nodes = self.nodes.iter().map(|s| InnerNode::new(s.id.clone(), s.rate.clone(), s.discipline)).collect();
        SoqnModel { nodes, routing, resources: n, arrival_rate }.validate().map_err(Failure::from)
    }

    fn routing_matrix(&self) -> Result<RoutingMatrix, Failure> {
        let spec = self.routing.as_ref().ok_or_else(|| Failure::input("routing is missing"))?;
        match spec {
            RoutingSpec::Dense(rows) => RoutingMatrix::from_rows(rows.clone()).map_err(Failure::from),
            RoutingSpec::Sparse(entries) => {
                let mut index = HashMap::from([(POOL_ID, 0usize)]);
                for (k, node) in self.nodes.iter().enumerate() {
                    if node.id == POOL_ID || index.insert(node.id.as_str(), k + 1).is_some() {
                        return Err(Failure::input(format!("node id {:?} is reserved or repeated", node.id)));
                    }
                }
                let lookup = |id: &str| {
                    index
                        .get(id)
                        .copied()
                        .ok_or_else(|| Failure::input(format!("routing refers to unknown node {id:?}")))
                };
                let mut matrix = RoutingMatrix::zeros(self.nodes.len() + 1);
                for entry in entries {
                    let (i, j) = (lookup(&entry.from)?, lookup(&entry.to)?);
                    if matrix.get(i, j) != 0.0 {
                        return Err(Failure::input(format!(
                            "routing entry {} -> {} is repeated",
                            entry.from, entry.to
                        )));
                    }
                    matrix.set(i, j, entry.p);
                }
                Ok(matrix)
            }
        }
    }
}
