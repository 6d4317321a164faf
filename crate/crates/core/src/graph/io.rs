use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Csr, Graph};
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// On-disk JSON container. Unknown keys are ignored.
#[derive(Debug, Serialize, Deserialize)]
struct GraphFile {
    num_nodes: usize,
    num_classes: usize,
    features: Vec<Vec<f64>>,
    edges: Vec<[i64; 2]>,
    #[serde(default)]
    labels: Option<Vec<i64>>,
}

pub fn read_graph_json(text: &str) -> Result<Graph<f64>> {
    let file: GraphFile = serde_json::from_str(text).map_err(|e| Error::parse("<json>", e))?;
    from_file(file)
}

fn from_file(file: GraphFile) -> Result<Graph<f64>> {
    let n = file.num_nodes;
    if file.features.len() != n {
        return Err(Error::Invariant(format!(
            "{} feature rows for num_nodes = {n}",
            file.features.len()
        )));
    }
    let features = Matrix::from_rows(&file.features).map_err(|e| Error::Invariant(e.to_string()))?;
    let mut edges = Vec::with_capacity(file.edges.len());
    for (k, [a, b]) in file.edges.into_iter().enumerate() {
        let conv = |v: i64| {
            usize::try_from(v).ok().filter(|&v| v < n).ok_or_else(|| {
                Error::Invariant(format!("edge {k} references node {v} but num_nodes is {n}"))
            })
        };
        edges.push((conv(a)?, conv(b)?));
    }
    let labels = match file.labels {
        None => None,
        Some(raw) => {
            let mut out = Vec::with_capacity(raw.len());
            for (i, y) in raw.into_iter().enumerate() {
                match usize::try_from(y) {
                    Ok(y) if y < file.num_classes => out.push(y),
                    _ => return Err(Error::Invariant(format!("label out of range at node {i}"))),
                }
            }
            Some(out)
        }
    };
    let adjacency = Csr::from_edges(n, &edges)?;
    Graph::new(file.num_classes, features, adjacency, labels)
}

pub fn write_graph_json(g: &Graph<f64>) -> String {
    let file = GraphFile {
        num_nodes: g.num_nodes(),
        num_classes: g.num_classes(),
        features: g.features().to_rows(),
        edges: g.adjacency().edges().map(|(i, j)| [i as i64, j as i64]).collect(),
        labels: g.labels().map(|l| l.iter().map(|&y| y as i64).collect()),
    };
    serde_json::to_string(&file).expect("graph serializes")
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<Graph<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: GraphFile = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
    from_file(file)
}

/// Writes the JSON container, creating parent directories as needed.
pub fn save_graph(g: &Graph<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, write_graph_json(g)).map_err(|e| Error::io(path, e))
}
