//! On-disk test suites: a directory of graph JSON files indexed by `manifest.csv`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{load_graph, save_graph, Graph};

pub const MANIFEST: &str = "manifest.csv";

/// One labeled test graph plus the description of how it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteEntry {
    pub id: String,
    /// Shift kind name, or `raw` for an unshifted graph.
    pub shift_kind: String,
    pub magnitude: f64,
    pub graph: Graph<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    graph_id: String,
    shift_kind: String,
    magnitude: f64,
    file: String,
}

/// Writes every entry to `<dir>/<id>.json` and the manifest.
pub fn save_suite(entries: &[SuiteEntry], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = dir.join(MANIFEST);
    let mut w = csv::Writer::from_path(&manifest).map_err(|e| Error::parse(&manifest, e))?;
    for e in entries {
        let file = format!("{}.json", e.id);
        save_graph(&e.graph, dir.join(&file))?;
        w.serialize(ManifestRow {
            graph_id: e.id.clone(),
            shift_kind: e.shift_kind.clone(),
            magnitude: e.magnitude,
            file,
        })
        .map_err(|err| Error::parse(&manifest, err))?;
    }
    w.flush().map_err(|err| Error::io(&manifest, err))
}

/// Reads a suite written by [`save_suite`], in manifest order.
pub fn load_suite(dir: impl AsRef<Path>) -> Result<Vec<SuiteEntry>> {
    let dir = dir.as_ref();
    let manifest = dir.join(MANIFEST);
    let mut r = csv::Reader::from_path(&manifest).map_err(|e| Error::parse(&manifest, e))?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: ManifestRow = row.map_err(|e| Error::parse(&manifest, e))?;
        let graph = load_graph(dir.join(&row.file))?;
        out.push(SuiteEntry { id: row.graph_id, shift_kind: row.shift_kind, magnitude: row.magnitude, graph });
    }
    Ok(out)
}
