//! Loading graph directories written by [`crate::io`] or by external
//! converters, and turning multiclass datasets into binary tasks.
//!
//! The loader is forgiving about what converters commonly produce: edges may
//! be separated by tabs or spaces and listed in either orientation or more
//! than once, and self-loops are allowed. Duplicates and self-loops are
//! dropped and counted in [`Cleaning`]. `mask.txt` and `meta.json` are
//! optional.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use csbm_core::math::distance;
use csbm_core::{Adjacency, Matrix, Sample};

use crate::error::{Error, Result};
use crate::io::{self, Meta};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Scale every feature row to unit L1 norm (rows summing to zero are
    /// left alone). Off by default: features are used as given.
    pub normalize_rows: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Cleaning {
    pub self_loops: usize,
    pub duplicate_edges: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExternalGraphDataset {
    pub adjacency: Adjacency,
    pub features: Matrix,
    pub labels: Vec<u32>,
    pub mask: Vec<usize>,
    pub meta: Option<Meta>,
    pub cleaning: Cleaning,
}

impl ExternalGraphDataset {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn d(&self) -> usize {
        self.features.cols()
    }

    pub fn classes(&self) -> BTreeSet<u32> {
        self.labels.iter().copied().collect()
    }
}

fn read(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    match fs::read_to_string(&path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingFile(path)),
        Err(e) => Err(Error::Io { path, source: e }),
    }
}

fn read_optional(dir: &Path, name: &str) -> Result<Option<String>> {
    match read(dir, name) {
        Ok(s) => Ok(Some(s)),
        Err(Error::MissingFile(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Non-blank lines with their 1-based line numbers.
fn numbered(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_index(file: &Path, line: usize, token: &str, n: usize) -> Result<usize> {
    let i: usize = token
        .parse()
        .map_err(|_| Error::parse(file, line, format!("`{token}` is not a node index")))?;
    if i >= n {
        return Err(Error::parse(file, line, format!("node {i} out of range for n = {n}")));
    }
    Ok(i)
}

pub fn load_dataset(dir: &Path) -> Result<ExternalGraphDataset> {
    load_dataset_with(dir, &LoadOptions::default())
}

pub fn load_dataset_with(dir: &Path, options: &LoadOptions) -> Result<ExternalGraphDataset> {
    let labels_path = dir.join(io::LABELS);
    let labels = numbered(&read(dir, io::LABELS)?)
        .map(|(line, l)| {
            l.parse::<u32>()
                .map_err(|_| Error::parse(&labels_path, line, format!("`{l}` is not a class label")))
        })
        .collect::<Result<Vec<u32>>>()?;
    let n = labels.len();
    if n == 0 {
        return Err(Error::parse(&labels_path, 1, "no labels"));
    }

    let features_path = dir.join(io::FEATURES);
    let mut data = Vec::new();
    let mut d = None;
    let mut rows = 0;
    for (line, l) in numbered(&read(dir, io::FEATURES)?) {
        let before = data.len();
        for token in l.split(',') {
            let x: f64 = token.trim().parse().map_err(|_| {
                Error::parse(&features_path, line, format!("`{token}` is not a number"))
            })?;
            if !x.is_finite() {
                return Err(Error::parse(&features_path, line, "non-finite feature"));
            }
            data.push(x);
        }
        let width = data.len() - before;
        match d {
            None => d = Some(width),
            Some(d) if d != width => {
                return Err(Error::parse(
                    &features_path,
                    line,
                    format!("row has {width} values, expected {d}"),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::parse(
            &features_path,
            rows.max(1),
            format!("{rows} feature rows but {n} labels"),
        ));
    }
    let d = d.unwrap_or(0);
    let mut features = Matrix::from_vec(n, d, data)?;
    if options.normalize_rows {
        for i in 0..n {
            let row = features.row_mut(i);
            let total: f64 = row.iter().map(|x| x.abs()).sum();
            if total > 0.0 {
                row.iter_mut().for_each(|x| *x /= total);
            }
        }
    }

    let edges_path = dir.join(io::EDGES);
    let mut cleaning = Cleaning::default();
    let mut edges = BTreeSet::new();
    for (line, l) in numbered(&read(dir, io::EDGES)?) {
        let tokens: Vec<&str> = l.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(Error::parse(&edges_path, line, "expected two node indices"));
        }
        let u = parse_index(&edges_path, line, tokens[0], n)?;
        let v = parse_index(&edges_path, line, tokens[1], n)?;
        if u == v {
            cleaning.self_loops += 1;
        } else if !edges.insert((u.min(v), u.max(v))) {
            cleaning.duplicate_edges += 1;
        }
    }
    if cleaning.self_loops + cleaning.duplicate_edges > 0 {
        log::info!(
            "{}: dropped {} self-loops and {} duplicate edges",
            dir.display(),
            cleaning.self_loops,
            cleaning.duplicate_edges
        );
    }
    let adjacency = Adjacency::from_edges(n, edges)?;

    let mask = match read_optional(dir, io::MASK)? {
        None => Vec::new(),
        Some(text) => {
            let mask_path = dir.join(io::MASK);
            let set = numbered(&text)
                .map(|(line, l)| parse_index(&mask_path, line, l, n))
                .collect::<Result<BTreeSet<usize>>>()?;
            set.into_iter().collect()
        }
    };

    let meta = match read_optional(dir, io::META)? {
        None => None,
        Some(text) => {
            let meta: Meta = serde_json::from_str(&text).map_err(|e| {
                Error::parse(&dir.join(io::META), e.line(), e.to_string())
            })?;
            if meta.n != n || meta.d != d {
                return Err(Error::parse(
                    &dir.join(io::META),
                    1,
                    format!("declares {}x{}, files hold {n}x{d}", meta.n, meta.d),
                ));
            }
            Some(meta)
        }
    };

    Ok(ExternalGraphDataset {
        adjacency,
        features,
        labels,
        mask,
        meta,
        cleaning,
    })
}

pub fn save_dataset(dir: &Path, dataset: &ExternalGraphDataset, force: bool) -> Result<()> {
    let meta = dataset.meta.clone().unwrap_or(Meta {
        n: dataset.n(),
        d: dataset.d(),
        ..Meta::default()
    });
    io::write_dir(
        dir,
        &dataset.labels,
        &dataset.adjacency,
        &dataset.features,
        &dataset.mask,
        &meta,
        force,
    )
}

/// A two-class problem on a fixed graph: label 1 marks the chosen class.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryTask {
    pub class_id: u32,
    pub labels: Vec<u8>,
    pub adjacency: Adjacency,
    pub features: Matrix,
    pub mask: Vec<usize>,
    /// Masked nodes of label 0, as a fraction of n.
    pub beta0: f64,
    pub beta1: f64,
}

impl BinaryTask {
    fn new(class_id: u32, labels: Vec<u8>, adjacency: Adjacency, features: Matrix, mask: Vec<usize>) -> Self {
        let n = labels.len() as f64;
        let ones = mask.iter().filter(|&&i| labels[i] == 1).count();
        let zeros = mask.len() - ones;
        BinaryTask {
            class_id,
            beta0: zeros as f64 / n,
            beta1: ones as f64 / n,
            labels,
            adjacency,
            features,
            mask,
        }
    }

    /// Treats a CSBM sample as a dataset whose class of interest is 1.
    pub fn from_sample(sample: &Sample) -> Self {
        BinaryTask::new(
            1,
            sample.labels.clone(),
            sample.adjacency.clone(),
            sample.features.clone(),
            sample.mask.clone(),
        )
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }
}

/// Class `class_id` against the rest, keeping the dataset's mask.
pub fn one_vs_all(dataset: &ExternalGraphDataset, class_id: u32) -> Result<BinaryTask> {
    if !dataset.labels.contains(&class_id) {
        return Err(Error::Config(format!(
            "class {class_id} does not occur; classes are {:?}",
            dataset.classes()
        )));
    }
    let labels = dataset.labels.iter().map(|&c| (c == class_id) as u8).collect();
    Ok(BinaryTask::new(
        class_id,
        labels,
        dataset.adjacency.clone(),
        dataset.features.clone(),
        dataset.mask.clone(),
    ))
}

/// A dataset whose labels are already 0/1 becomes a task without renaming
/// anything; otherwise a class must be chosen.
pub fn binary_task(dataset: &ExternalGraphDataset, class_id: Option<u32>) -> Result<BinaryTask> {
    match class_id {
        Some(c) => one_vs_all(dataset, c),
        None if dataset.labels.iter().all(|&c| c <= 1) => Ok(BinaryTask::new(
            1,
            dataset.labels.iter().map(|&c| c as u8).collect(),
            dataset.adjacency.clone(),
            dataset.features.clone(),
            dataset.mask.clone(),
        )),
        None => Err(Error::Usage(format!(
            "labels are multiclass {:?}; choose one with --class-id",
            dataset.classes()
        ))),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassMeans {
    pub mu_hat: Vec<f64>,
    pub nu_hat: Vec<f64>,
    pub distance: f64,
}

/// Empirical class means over the masked nodes.
pub fn estimate_class_means(task: &BinaryTask) -> Result<ClassMeans> {
    let d = task.features.cols();
    let mut sums = [vec![0.0; d], vec![0.0; d]];
    let mut counts = [0usize; 2];
    for &i in &task.mask {
        let y = task.labels[i] as usize;
        counts[y] += 1;
        for (s, x) in sums[y].iter_mut().zip(task.features.row(i)) {
            *s += x;
        }
    }
    for (class, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(csbm_core::Error::Estimation(format!("no masked nodes of label {class}")).into());
        }
    }
    let [s0, s1] = sums;
    let mu_hat: Vec<f64> = s0.into_iter().map(|s| s / counts[0] as f64).collect();
    let nu_hat: Vec<f64> = s1.into_iter().map(|s| s / counts[1] as f64).collect();
    let distance = distance(&mu_hat, &nu_hat);
    Ok(ClassMeans {
        mu_hat,
        nu_hat,
        distance,
    })
}
