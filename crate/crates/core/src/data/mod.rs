//! Dataset manifests and loaders, matrix files, and synthetic graphs.

mod matrix;
mod sbm;
mod split;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use matrix::{
    load_any_matrix, load_matrix, matrix_from_bytes, matrix_to_bytes, save_matrix, to_f32, to_f64, MATRIX_MAGIC,
    MATRIX_VERSION, TEXT_MAGIC,
};
pub use sbm::{generate_sbm, SbmConfig, SbmData};
pub use split::{export_split_by_ratio, LabeledSplit};

use crate::error::{Error, Result};
use crate::features::NodeFeatures;
use crate::graph::Graph;

pub const DATA_DIR_ENV: &str = "GSR_DATA_DIR";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub format_version: u32,
    pub num_nodes: usize,
    pub num_classes: usize,
    pub num_features: usize,
    /// Paths are relative to the manifest's directory.
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
    pub split: PathBuf,
    #[serde(default)]
    pub row_normalize_features: bool,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if m.format_version != MANIFEST_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported manifest format_version {}", m.format_version),
            ));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub graph: Graph,
    pub features: NodeFeatures,
    pub split: LabeledSplit,
}

/// Resolves a dataset reference: an existing manifest file, a directory
/// holding `manifest.toml`, or a name looked up under `$GSR_DATA_DIR`.
pub fn resolve_manifest(reference: &str) -> Result<PathBuf> {
    let p = PathBuf::from(reference);
    if p.is_file() {
        return Ok(p);
    }
    if p.join(MANIFEST_FILE).is_file() {
        return Ok(p.join(MANIFEST_FILE));
    }
    if let Some(root) = std::env::var_os(DATA_DIR_ENV) {
        let candidate = PathBuf::from(root).join(reference).join(MANIFEST_FILE);
        if candidate.is_file() {
            return Ok(candidate);
        }
    }
    Err(Error::Io {
        path: p,
        cause: std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no dataset manifest found (also searched ${DATA_DIR_ENV})"),
        ),
    })
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect())
}

fn parse_pair_lines(path: &Path) -> Result<Vec<(usize, usize)>> {
    read_lines(path)?
        .into_iter()
        .map(|(n, l)| {
            let f: Vec<&str> = l.split_whitespace().collect();
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::format(path, format!("line {n}: expected an integer, got {s:?}")))
            };
            match f.as_slice() {
                [a, b] => Ok((parse(a)?, parse(b)?)),
                _ => Err(Error::format(path, format!("line {n}: expected two tab-separated fields"))),
            }
        })
        .collect()
}

fn parse_split(path: &Path) -> Result<[Vec<usize>; 3]> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() < 3 || lines[3..].iter().any(|l| !l.trim().is_empty()) {
        return Err(Error::format(path, "expected exactly three lines (train, val, test)"));
    }
    let parse = |i: usize| -> Result<Vec<usize>> {
        lines[i]
            .split_whitespace()
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::format(path, format!("line {}: bad node id {s:?}", i + 1)))
            })
            .collect()
    };
    Ok([parse(0)?, parse(1)?, parse(2)?])
}

pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let m = DatasetManifest::read(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let edge_path = dir.join(&m.edges);
    let edges = parse_pair_lines(&edge_path)?;
    if let Some(&(u, v)) = edges.iter().find(|&&(u, v)| u.max(v) >= m.num_nodes) {
        return Err(Error::format(
            &edge_path,
            format!("edge ({u}, {v}) references a node outside 0..{}", m.num_nodes),
        ));
    }
    let graph = Graph::from_edges(m.num_nodes, edges)?;

    let feat_path = dir.join(&m.features);
    let x = load_any_matrix(&feat_path)?;
    if x.rows() != m.num_nodes || x.cols() != m.num_features {
        return Err(Error::format(
            &feat_path,
            format!(
                "feature matrix is {}x{} but the manifest declares {}x{}",
                x.rows(),
                x.cols(),
                m.num_nodes,
                m.num_features
            ),
        ));
    }
    if x.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::format(&feat_path, "non-finite feature value"));
    }
    let x = if m.row_normalize_features { x.row_normalize_l1() } else { x };
    let features = if x.nnz() * 4 < x.rows() * x.cols() {
        NodeFeatures::Sparse(x)
    } else {
        NodeFeatures::Dense(x.to_dense())
    };

    let label_path = dir.join(&m.labels);
    let mut labels = vec![None; m.num_nodes];
    for (node, class) in parse_pair_lines(&label_path)? {
        if node >= m.num_nodes {
            return Err(Error::format(&label_path, format!("label for node {node} outside 0..{}", m.num_nodes)));
        }
        if class >= m.num_classes {
            return Err(Error::format(
                &label_path,
                format!("node {node} has class {class} but num_classes is {}", m.num_classes),
            ));
        }
        labels[node] = Some(class);
    }
    if let Some(missing) = labels.iter().position(Option::is_none) {
        return Err(Error::format(&label_path, format!("node {missing} has no label")));
    }
    let labels = labels.into_iter().map(Option::unwrap).collect();

    let split_path = dir.join(&m.split);
    let [train, val, test] = parse_split(&split_path)?;
    let split = LabeledSplit::new(labels, m.num_classes, train, val, test)
        .map_err(|e| Error::format(&split_path, e.to_string()))?;
    Ok(Dataset {
        name: m.name,
        graph,
        features,
        split,
    })
}

/// Writes a dataset in the manifest layout (binary features).
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<PathBuf> {
    use std::fmt::Write as _;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    let mut edges = String::new();
    for &(u, v) in ds.graph.edges() {
        let _ = writeln!(edges, "{u}\t{v}");
    }
    write("edges.tsv", edges)?;
    let mut labels = String::new();
    for (i, c) in ds.split.labels.iter().enumerate() {
        let _ = writeln!(labels, "{i}\t{c}");
    }
    write("labels.tsv", labels)?;
    let join = |s: &[usize]| s.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
    write(
        "split.txt",
        format!("{}\n{}\n{}\n", join(&ds.split.train), join(&ds.split.val), join(&ds.split.test)),
    )?;
    save_matrix(&dir.join("features.bin"), &to_f32(&ds.features.to_dense()))?;
    let manifest = DatasetManifest {
        name: ds.name.clone(),
        format_version: MANIFEST_VERSION,
        num_nodes: ds.graph.num_nodes(),
        num_classes: ds.split.num_classes,
        num_features: ds.features.cols(),
        edges: "edges.tsv".into(),
        features: "features.bin".into(),
        labels: "labels.tsv".into(),
        split: "split.txt".into(),
        row_normalize_features: false,
    };
    let path = dir.join(MANIFEST_FILE);
    write(MANIFEST_FILE, toml::to_string(&manifest).expect("manifest serializes"))?;
    Ok(path)
}
