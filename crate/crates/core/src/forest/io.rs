//! Model file: a magic line, a JSON header line, then a JSON payload line.
//!
//! ```text
//! ppm-forest
//! {"format_version":1,"variant":"batch","schema_width":42,"hyperparameters":{...},"seed":7}
//! {"trees":[...]}
//! ```

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    BatchForest, BatchHyperparameters, CartNode, CartTree, Family, ForestError, HoeffdingTree,
    IncHyperparameters, IncrementalForest, Model,
};
use crate::par::Execution;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "ppm-forest";

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    variant: Family,
    schema_width: usize,
    hyperparameters: Value,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Payload<T> {
    trees: Vec<T>,
}

fn corrupt(e: impl std::fmt::Display) -> ForestError {
    ForestError::Corrupt(e.to_string())
}

pub fn serialize(model: &Model) -> Vec<u8> {
    let (hyperparameters, payload) = match model {
        Model::Batch(m) => (
            serde_json::to_value(m.hp),
            serde_json::to_string(&Payload {
                trees: m.trees.clone(),
            }),
        ),
        Model::Incremental(m) => (
            serde_json::to_value(m.hp),
            serde_json::to_string(&Payload {
                trees: m.trees.clone(),
            }),
        ),
    };
    let header = Header {
        format_version: FORMAT_VERSION,
        variant: model.family(),
        schema_width: model.width(),
        hyperparameters: hyperparameters.expect("hyperparameters serialize"),
        seed: model.seed(),
    };
    let mut out = String::from(MAGIC);
    out.push('\n');
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push('\n');
    out.push_str(&payload.expect("trees serialize"));
    out.push('\n');
    out.into_bytes()
}

pub fn deserialize(bytes: &[u8]) -> Result<Model, ForestError> {
    let text = std::str::from_utf8(bytes).map_err(corrupt)?;
    let mut lines = text.splitn(3, '\n');
    if lines.next() != Some(MAGIC) {
        return Err(corrupt("missing model magic line"));
    }
    let header: Value =
        serde_json::from_str(lines.next().ok_or_else(|| corrupt("missing header"))?)
            .map_err(corrupt)?;
    let found = header
        .get("format_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| corrupt("header lacks format_version"))?;
    if found != u64::from(FORMAT_VERSION) {
        return Err(ForestError::Version {
            found: found.min(u64::from(u32::MAX)) as u32,
            expected: FORMAT_VERSION,
        });
    }
    let header: Header = serde_json::from_value(header).map_err(corrupt)?;
    let body = lines.next().ok_or_else(|| corrupt("missing payload"))?;
    let body = body
        .strip_suffix('\n')
        .ok_or_else(|| corrupt("truncated payload"))?;
    let width = header.schema_width;
    if width == 0 {
        return Err(corrupt("schema_width is zero"));
    }
    match header.variant {
        Family::Batch => {
            let hp: BatchHyperparameters =
                serde_json::from_value(header.hyperparameters).map_err(corrupt)?;
            hp.validate().map_err(corrupt)?;
            let p: Payload<CartTree> = serde_json::from_str(body).map_err(corrupt)?;
            if p.trees.len() != hp.n_trees {
                return Err(corrupt("tree count does not match n_trees"));
            }
            for t in &p.trees {
                check_cart(t, width)?;
            }
            Ok(Model::Batch(BatchForest {
                hp,
                width,
                seed: header.seed,
                trees: p.trees,
            }))
        }
        Family::Incremental => {
            let hp: IncHyperparameters =
                serde_json::from_value(header.hyperparameters).map_err(corrupt)?;
            hp.validate().map_err(corrupt)?;
            let p: Payload<HoeffdingTree> = serde_json::from_str(body).map_err(corrupt)?;
            if p.trees.len() != hp.n_trees {
                return Err(corrupt("tree count does not match n_trees"));
            }
            for t in &p.trees {
                t.check(width).map_err(corrupt)?;
            }
            Ok(Model::Incremental(IncrementalForest {
                hp,
                width,
                seed: header.seed,
                trees: p.trees,
                execution: Execution::default(),
            }))
        }
    }
}

/// Children must point forward, so traversal always terminates.
fn check_cart(t: &CartTree, width: usize) -> Result<(), ForestError> {
    if t.nodes.is_empty() {
        return Err(corrupt("empty tree"));
    }
    for (i, n) in t.nodes.iter().enumerate() {
        if let CartNode::Split {
            feature,
            left,
            right,
            ..
        } = *n
        {
            let ok = (feature as usize) < width
                && (left as usize) > i
                && (right as usize) > i
                && (left as usize) < t.nodes.len()
                && (right as usize) < t.nodes.len();
            if !ok {
                return Err(corrupt(format!("bad split node {i}")));
            }
        }
    }
    Ok(())
}
