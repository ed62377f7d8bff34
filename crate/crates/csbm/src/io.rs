//! The on-disk graph directory shared by samples and external datasets.
//!
//! ```text
//! labels.txt    one label per line
//! edges.tsv     `u<TAB>v` per undirected edge, u < v, sorted
//! features.csv  n rows of d comma-separated decimals
//! mask.txt      sorted node indices, one per line
//! meta.json     Meta, pretty-printed
//! ```
//!
//! Everything is UTF-8 with `\n` line endings. Floats are written with the
//! shortest representation that parses back to the same bits, so writing a
//! loaded directory reproduces the original bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use csbm_core::{Adjacency, CsbmParams, Matrix, Sample};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LABELS: &str = "labels.txt";
pub const EDGES: &str = "edges.tsv";
pub const FEATURES: &str = "features.csv";
pub const MASK: &str = "mask.txt";
pub const META: &str = "meta.json";

pub const ALL_FILES: [&str; 5] = [LABELS, EDGES, FEATURES, MASK, META];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub n: usize,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<CsbmParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_seed: Option<u64>,
    #[serde(default)]
    pub convolved: bool,
    /// Hex SHA-256 of the graph the features were convolved with.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_graph_hash: Option<String>,
}

impl Meta {
    pub fn for_sample(sample: &Sample) -> Meta {
        Meta {
            n: sample.n(),
            d: sample.features.cols(),
            name: None,
            params: Some(sample.params.clone()),
            seed: Some(sample.seed),
            mask_seed: sample.mask_seed,
            convolved: false,
            source_graph_hash: None,
        }
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Creates `dir` if needed and refuses to clobber any of `files` unless
/// `force` is set.
pub fn prepare_output(dir: &Path, files: &[&str], force: bool) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    if !force {
        if let Some(existing) = files.iter().map(|f| dir.join(f)).find(|p| p.exists()) {
            return Err(Error::Exists(existing));
        }
    }
    Ok(())
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(Error::io(path))
}

pub fn format_features(features: &Matrix) -> String {
    let mut out = String::new();
    for row in features.iter_rows() {
        for (j, x) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{x}");
        }
        out.push('\n');
    }
    out
}

pub fn format_edges(adjacency: &Adjacency) -> String {
    let mut out = String::new();
    for (u, v) in adjacency.edges() {
        let _ = writeln!(out, "{u}\t{v}");
    }
    out
}

fn format_lines<T: std::fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for x in items {
        let _ = writeln!(out, "{x}");
    }
    out
}

/// Writes a full graph directory in canonical form.
pub fn write_dir(
    dir: &Path,
    labels: &[u32],
    adjacency: &Adjacency,
    features: &Matrix,
    mask: &[usize],
    meta: &Meta,
    force: bool,
) -> Result<()> {
    let n = adjacency.node_count();
    if labels.len() != n || features.rows() != n {
        return Err(Error::Config(format!(
            "inconsistent sizes: {} labels, {n} nodes, {} feature rows",
            labels.len(),
            features.rows()
        )));
    }
    let mut mask = mask.to_vec();
    mask.sort_unstable();
    mask.dedup();

    prepare_output(dir, &ALL_FILES, force)?;
    write_file(&dir.join(LABELS), &format_lines(labels))?;
    write_file(&dir.join(EDGES), &format_edges(adjacency))?;
    write_file(&dir.join(FEATURES), &format_features(features))?;
    write_file(&dir.join(MASK), &format_lines(&mask))?;
    let mut json = serde_json::to_string_pretty(meta)?;
    json.push('\n');
    write_file(&dir.join(META), &json)
}

pub fn save_sample(dir: &Path, sample: &Sample, force: bool) -> Result<()> {
    let labels: Vec<u32> = sample.labels.iter().map(|&y| y as u32).collect();
    write_dir(
        dir,
        &labels,
        &sample.adjacency,
        &sample.features,
        &sample.mask,
        &Meta::for_sample(sample),
        force,
    )
}
