//! On-disk dataset format.
//!
//! A dataset directory holds:
//! - `meta.json` — node/edge type declarations plus optional task metadata
//! - `nodes.tsv` — `node_id<TAB>type_name<TAB>comma-separated floats`
//! - `edges.tsv` — `src_id<TAB>dst_id<TAB>edge_type_name`
//! - `labels.tsv` — optional, `node_id<TAB>label[,label...]`
//!
//! Ids are 0-based global integers; files are UTF-8 with LF line endings.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeTypeInfo, HeteroGraph, Labels, NodeTypeInfo, TaskMeta};
use crate::tensor::{DenseMatrix, EdgeIndex};

#[derive(Serialize, Deserialize)]
struct MetaFile {
    node_types: Vec<NodeTypeInfo>,
    edge_types: Vec<EdgeTypeMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    task: Option<TaskMeta>,
}

#[derive(Serialize, Deserialize)]
struct EdgeTypeMeta {
    name: String,
    src_type: String,
    dst_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reverse: Option<String>,
}

fn data_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Data {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn dataset_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Dataset {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

/// Load and fully validate a dataset directory.
pub fn load_graph(dir: impl AsRef<Path>) -> Result<HeteroGraph> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let meta_text = fs::read_to_string(&meta_path)
        .map_err(|e| dataset_err(&meta_path, format!("cannot read: {e}")))?;
    let meta: MetaFile = serde_json::from_str(&meta_text)
        .map_err(|e| dataset_err(&meta_path, format!("invalid JSON: {e}")))?;

    let type_id = |name: &str| meta.node_types.iter().position(|t| t.name == name);
    let mut edge_types = Vec::with_capacity(meta.edge_types.len());
    for et in &meta.edge_types {
        let src = type_id(&et.src_type).ok_or_else(|| {
            dataset_err(
                &meta_path,
                format!("edge type '{}' references unknown node type '{}'", et.name, et.src_type),
            )
        })?;
        let dst = type_id(&et.dst_type).ok_or_else(|| {
            dataset_err(
                &meta_path,
                format!("edge type '{}' references unknown node type '{}'", et.name, et.dst_type),
            )
        })?;
        let reverse = match &et.reverse {
            None => None,
            Some(r) => Some(
                meta.edge_types
                    .iter()
                    .position(|o| &o.name == r)
                    .ok_or_else(|| {
                        dataset_err(
                            &meta_path,
                            format!("edge type '{}' declares unknown reverse '{}'", et.name, r),
                        )
                    })?,
            ),
        };
        edge_types.push(EdgeTypeInfo {
            name: et.name.clone(),
            src_type: Some(src),
            dst_type: Some(dst),
            reverse,
        });
    }

    let node_count: usize = meta.node_types.iter().map(|t| t.count).sum();

    // nodes.tsv
    let nodes_path = dir.join("nodes.tsv");
    let nodes_text = fs::read_to_string(&nodes_path)
        .map_err(|e| dataset_err(&nodes_path, format!("cannot read: {e}")))?;
    let mut node_type = vec![usize::MAX; node_count];
    let mut raw_feats: Vec<Option<Vec<f64>>> = vec![None; node_count];
    for (lineno, line) in nodes_text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let id: usize = parts
            .next()
            .unwrap_or_default()
            .parse()
            .map_err(|_| data_err(&nodes_path, lineno, "node id is not an integer"))?;
        if id >= node_count {
            return Err(data_err(
                &nodes_path,
                lineno,
                format!("node id {id} out of range (node count {node_count})"),
            ));
        }
        if node_type[id] != usize::MAX {
            return Err(data_err(&nodes_path, lineno, format!("duplicate node id {id}")));
        }
        let tname = parts
            .next()
            .ok_or_else(|| data_err(&nodes_path, lineno, "missing node type field"))?;
        let t = type_id(tname)
            .ok_or_else(|| data_err(&nodes_path, lineno, format!("unknown node type '{tname}'")))?;
        node_type[id] = t;
        let dim = meta.node_types[t].feature_dim;
        let feat_field = parts.next().unwrap_or("");
        if dim == 0 {
            if !feat_field.is_empty() {
                return Err(data_err(
                    &nodes_path,
                    lineno,
                    format!("type '{tname}' declares no features but row has a feature field"),
                ));
            }
        } else {
            let values: Vec<f64> = feat_field
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| data_err(&nodes_path, lineno, "feature field is not a float list"))?;
            if values.len() != dim {
                return Err(data_err(
                    &nodes_path,
                    lineno,
                    format!("feature dimension {} does not match declared {dim}", values.len()),
                ));
            }
            raw_feats[id] = Some(values);
        }
    }
    if let Some(missing) = node_type.iter().position(|&t| t == usize::MAX) {
        return Err(dataset_err(
            &nodes_path,
            format!("node id {missing} missing from nodes.tsv"),
        ));
    }

    // Assemble per-type feature blocks in global-id order.
    let mut features: BTreeMap<usize, DenseMatrix> = BTreeMap::new();
    let mut row_counter = vec![0usize; meta.node_types.len()];
    for (t, info) in meta.node_types.iter().enumerate() {
        if info.feature_dim > 0 {
            features.insert(t, DenseMatrix::zeros(info.count, info.feature_dim));
        }
    }
    for id in 0..node_count {
        let t = node_type[id];
        let row = row_counter[t];
        row_counter[t] += 1;
        if let Some(values) = &raw_feats[id] {
            let block = features.get_mut(&t).expect("declared feature block");
            if row >= block.rows() {
                return Err(dataset_err(
                    &nodes_path,
                    format!(
                        "more nodes of type '{}' than declared count {}",
                        meta.node_types[t].name, meta.node_types[t].count
                    ),
                ));
            }
            block.row_mut(row).copy_from_slice(values);
        }
    }

    // edges.tsv
    let edges_path = dir.join("edges.tsv");
    let edges_text = fs::read_to_string(&edges_path)
        .map_err(|e| dataset_err(&edges_path, format!("cannot read: {e}")))?;
    let mut src = Vec::new();
    let mut dst = Vec::new();
    let mut etype = Vec::new();
    for (lineno, line) in edges_text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let s: usize = parts
            .next()
            .unwrap_or_default()
            .parse()
            .map_err(|_| data_err(&edges_path, lineno, "source id is not an integer"))?;
        let d: usize = parts
            .next()
            .unwrap_or_default()
            .parse()
            .map_err(|_| data_err(&edges_path, lineno, "destination id is not an integer"))?;
        let tname = parts
            .next()
            .ok_or_else(|| data_err(&edges_path, lineno, "missing edge type field"))?;
        let t = edge_types
            .iter()
            .position(|i| i.name == tname)
            .ok_or_else(|| data_err(&edges_path, lineno, format!("unknown edge type '{tname}'")))?;
        if s >= node_count || d >= node_count {
            return Err(data_err(
                &edges_path,
                lineno,
                format!("edge endpoint {} out of range", s.max(d)),
            ));
        }
        if let Some(st) = edge_types[t].src_type {
            if node_type[s] != st {
                return Err(data_err(
                    &edges_path,
                    lineno,
                    format!(
                        "source node {s} has type '{}', edge type '{tname}' expects '{}'",
                        meta.node_types[node_type[s]].name, meta.node_types[st].name
                    ),
                ));
            }
        }
        if let Some(dt) = edge_types[t].dst_type {
            if node_type[d] != dt {
                return Err(data_err(
                    &edges_path,
                    lineno,
                    format!(
                        "destination node {d} has type '{}', edge type '{tname}' expects '{}'",
                        meta.node_types[node_type[d]].name, meta.node_types[dt].name
                    ),
                ));
            }
        }
        src.push(s);
        dst.push(d);
        etype.push(t);
    }

    // labels.tsv (optional)
    let labels_path = dir.join("labels.tsv");
    let labels = if labels_path.exists() {
        let text = fs::read_to_string(&labels_path)
            .map_err(|e| dataset_err(&labels_path, format!("cannot read: {e}")))?;
        let multi = meta
            .task
            .as_ref()
            .and_then(|t| t.multi_label)
            .unwrap_or(false);
        let mut single: BTreeMap<usize, usize> = BTreeMap::new();
        let mut multi_map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut max_class = 0usize;
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, '\t');
            let id: usize = parts
                .next()
                .unwrap_or_default()
                .parse()
                .map_err(|_| data_err(&labels_path, lineno, "node id is not an integer"))?;
            if id >= node_count {
                return Err(data_err(&labels_path, lineno, format!("node id {id} out of range")));
            }
            let label_field = parts
                .next()
                .ok_or_else(|| data_err(&labels_path, lineno, "missing label field"))?;
            let classes: Vec<usize> = label_field
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| data_err(&labels_path, lineno, "label is not an integer list"))?;
            if classes.is_empty() {
                return Err(data_err(&labels_path, lineno, "empty label list"));
            }
            max_class = max_class.max(*classes.iter().max().unwrap());
            if multi {
                if multi_map.insert(id, classes).is_some() {
                    return Err(data_err(&labels_path, lineno, format!("duplicate label row for node {id}")));
                }
            } else {
                if classes.len() != 1 {
                    return Err(data_err(
                        &labels_path,
                        lineno,
                        "multiple labels on a single-label dataset",
                    ));
                }
                if single.insert(id, classes[0]).is_some() {
                    return Err(data_err(&labels_path, lineno, format!("duplicate label row for node {id}")));
                }
            }
        }
        let declared = meta.task.as_ref().and_then(|t| t.classes);
        let classes = declared.unwrap_or(max_class + 1);
        if max_class >= classes {
            return Err(dataset_err(
                &labels_path,
                format!("label id {max_class} exceeds declared class count {classes}"),
            ));
        }
        Some(if multi {
            Labels::Multi {
                classes,
                by_node: multi_map,
            }
        } else {
            Labels::Single {
                classes,
                by_node: single,
            }
        })
    } else {
        None
    };

    HeteroGraph::new(
        node_type,
        meta.node_types,
        edge_types,
        EdgeIndex::new(src, dst, etype)?,
        features,
        labels,
        meta.task,
    )
}

/// Write a dataset directory in the documented format. Derived graphs
/// (self-looped ones) are rejected; save the declared graph instead.
pub fn save_graph(graph: &HeteroGraph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    if graph.has_self_loops() {
        return Err(Error::contract(
            "save_graph: refusing to save a graph with derived self loops",
        ));
    }
    fs::create_dir_all(dir)?;

    let meta = MetaFile {
        node_types: graph.node_types().to_vec(),
        edge_types: graph
            .edge_types()
            .iter()
            .map(|et| EdgeTypeMeta {
                name: et.name.clone(),
                src_type: graph.node_types()[et.src_type.expect("declared type")].name.clone(),
                dst_type: graph.node_types()[et.dst_type.expect("declared type")].name.clone(),
                reverse: et.reverse.map(|r| graph.edge_types()[r].name.clone()),
            })
            .collect(),
        task: graph.task().cloned(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;

    let mut nodes = String::new();
    for v in 0..graph.node_count() {
        let t = graph.node_type_of(v);
        let tname = &graph.node_types()[t].name;
        let feat = match graph.features().get(&t) {
            Some(block) => block
                .row(graph.row_in_type(v))
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(","),
            None => String::new(),
        };
        nodes.push_str(&format!("{v}\t{tname}\t{feat}\n"));
    }
    fs::write(dir.join("nodes.tsv"), nodes)?;

    let mut edges = String::new();
    for (s, d, t) in graph.edges().iter() {
        edges.push_str(&format!("{s}\t{d}\t{}\n", graph.edge_types()[t].name));
    }
    fs::write(dir.join("edges.tsv"), edges)?;

    if let Some(labels) = graph.labels() {
        let mut out = String::new();
        match labels {
            Labels::Single { by_node, .. } => {
                for (v, c) in by_node {
                    out.push_str(&format!("{v}\t{c}\n"));
                }
            }
            Labels::Multi { by_node, .. } => {
                for (v, cs) in by_node {
                    let list = cs.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
                    out.push_str(&format!("{v}\t{list}\n"));
                }
            }
        }
        fs::write(dir.join("labels.tsv"), out)?;
    }
    Ok(())
}
