//! JSON model files. Trees are flattened into pre-order node records; floats
//! are written in shortest round-trip form, so a loaded model predicts
//! bit-identically to the saved one.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boost::{Ensemble, TrainingTrace};
use crate::error::{Error, Result};
use crate::loss::LossKind;
use crate::tree::{Node, NodeKind};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Leaf,
    Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub node_id: u32,
    pub kind: RecordKind,
    pub feature: Option<usize>,
    pub threshold: Option<f64>,
    pub weight: f64,
    pub left_id: Option<u32>,
    pub right_id: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub loss: String,
    pub learning_rate: f64,
    pub initial_prediction: f64,
    pub feature_count: usize,
    pub trees: Vec<Vec<NodeRecord>>,
}

impl ModelFile {
    pub fn from_ensemble(e: &Ensemble) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            loss: e.loss.name().to_string(),
            learning_rate: e.learning_rate,
            initial_prediction: e.initial_prediction,
            feature_count: e.feature_count,
            trees: e.trees.iter().map(flatten).collect(),
        }
    }

    pub fn into_ensemble(self) -> Result<Ensemble> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(self.format_version));
        }
        let loss = LossKind::from_name(&self.loss)
            .map_err(|_| Error::Schema(format!("unknown loss `{}`", self.loss)))?;
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Schema(format!("learning rate {} outside (0, 1]", self.learning_rate)));
        }
        let trees = self
            .trees
            .iter()
            .enumerate()
            .map(|(k, records)| {
                rebuild(records, self.feature_count).map_err(|msg| Error::Schema(format!("tree {k}: {msg}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Ensemble {
            loss,
            learning_rate: self.learning_rate,
            initial_prediction: self.initial_prediction,
            feature_count: self.feature_count,
            trees,
            trace: TrainingTrace::default(),
        })
    }
}

fn flatten(tree: &Node) -> Vec<NodeRecord> {
    fn visit(node: &Node, out: &mut Vec<NodeRecord>) -> u32 {
        let id = out.len() as u32;
        out.push(NodeRecord {
            node_id: id,
            kind: RecordKind::Leaf,
            feature: None,
            threshold: None,
            weight: node.weight,
            left_id: None,
            right_id: None,
        });
        if let NodeKind::Internal {
            feature,
            threshold,
            left,
            right,
        } = &node.kind
        {
            let l = visit(left, out);
            let r = visit(right, out);
            let rec = &mut out[id as usize];
            rec.kind = RecordKind::Split;
            rec.feature = Some(*feature);
            rec.threshold = Some(*threshold);
            rec.left_id = Some(l);
            rec.right_id = Some(r);
        }
        id
    }
    let mut out = Vec::with_capacity(tree.node_count());
    visit(tree, &mut out);
    out
}

fn rebuild(records: &[NodeRecord], feature_count: usize) -> std::result::Result<Node, String> {
    if records.is_empty() {
        return Err("no nodes".into());
    }
    let mut by_id: HashMap<u32, &NodeRecord> = HashMap::with_capacity(records.len());
    for rec in records {
        if by_id.insert(rec.node_id, rec).is_some() {
            return Err(format!("node {} is defined twice", rec.node_id));
        }
    }
    let mut parents: HashMap<u32, u32> = HashMap::new();
    for rec in records {
        let children = match rec.kind {
            RecordKind::Leaf => {
                if rec.left_id.is_some() || rec.right_id.is_some() {
                    return Err(format!("leaf node {} has children", rec.node_id));
                }
                continue;
            }
            RecordKind::Split => {
                let (Some(l), Some(r)) = (rec.left_id, rec.right_id) else {
                    return Err(format!("split node {} lacks a child id", rec.node_id));
                };
                [l, r]
            }
        };
        for child in children {
            if !by_id.contains_key(&child) {
                return Err(format!("node {} references missing child {child}", rec.node_id));
            }
            if let Some(other) = parents.insert(child, rec.node_id) {
                return Err(format!(
                    "node {child} is referenced by both node {other} and node {}",
                    rec.node_id
                ));
            }
        }
    }
    let roots: Vec<u32> = records
        .iter()
        .map(|r| r.node_id)
        .filter(|id| !parents.contains_key(id))
        .collect();
    let root = match roots.as_slice() {
        [root] => *root,
        [] => return Err(format!("no root: node {} lies on a cycle", records[0].node_id)),
        [a, b, ..] => return Err(format!("node {b} is an orphan (a second root besides node {a})")),
    };

    fn build(
        id: u32,
        by_id: &HashMap<u32, &NodeRecord>,
        seen: &mut HashSet<u32>,
        feature_count: usize,
    ) -> std::result::Result<Node, String> {
        if !seen.insert(id) {
            return Err(format!("node {id} lies on a cycle"));
        }
        let rec = by_id[&id];
        let kind = match rec.kind {
            RecordKind::Leaf => NodeKind::Leaf,
            RecordKind::Split => {
                let feature = rec.feature.ok_or_else(|| format!("split node {id} has no feature"))?;
                if feature >= feature_count {
                    return Err(format!("node {id} uses feature {feature} of {feature_count}"));
                }
                let threshold = rec.threshold.ok_or_else(|| format!("split node {id} has no threshold"))?;
                NodeKind::Internal {
                    feature,
                    threshold,
                    left: Box::new(build(rec.left_id.unwrap(), by_id, seen, feature_count)?),
                    right: Box::new(build(rec.right_id.unwrap(), by_id, seen, feature_count)?),
                }
            }
        };
        Ok(Node {
            kind,
            weight: rec.weight,
            n_obs: 0,
            report: None,
        })
    }

    let mut seen = HashSet::new();
    let tree = build(root, &by_id, &mut seen, feature_count)?;
    if let Some(rec) = records.iter().find(|r| !seen.contains(&r.node_id)) {
        // unreachable from the root but referenced: a detached cycle
        return Err(format!("node {} is not reachable from root {root} (cycle)", rec.node_id));
    }
    Ok(tree)
}

pub fn model_to_string(e: &Ensemble) -> String {
    let mut s = serde_json::to_string_pretty(&ModelFile::from_ensemble(e)).expect("model file serializes");
    s.push('\n');
    s
}

pub fn model_from_str(text: &str) -> Result<Ensemble> {
    // check the version before the rest of the schema so future formats get
    // the right error
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("invalid JSON: {e}")))?;
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => return Err(Error::UnsupportedVersion(v.min(u32::MAX as u64) as u32)),
        None => return Err(Error::Schema("missing format_version".into())),
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
    file.into_ensemble()
}

pub fn save_model(e: &Ensemble, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_string(e)).map_err(|err| Error::io(path, err))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Ensemble> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|err| Error::io(path, err))?;
    model_from_str(&text)
}
