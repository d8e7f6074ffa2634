//! File formats: point clouds and columns as CSV, metadata as JSON
//! sidecars, sparse matrices as Matrix Market coordinate files.
//!
//! A sidecar lives next to its data file as `<file>.json`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::density::{DensityEstimate, DensityMethod};
use crate::graphs::{Construction, GraphParams, SparseGraph};
use crate::laplacians::{LaplacianKind, LaplacianMatrix};
use crate::manifolds::{ManifoldSpec, PointCloud};
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Metadata written next to a data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar<T> {
    pub schema_version: u32,
    /// Hash of the configuration that produced the data, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Sidecar<T> {
    pub fn new(body: T, config_hash: Option<String>) -> Self {
        Self { schema_version: SCHEMA_VERSION, config_hash, body }
    }
}

pub fn sidecar_path(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn parse_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{}: {msg}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let r = BufReader::new(File::open(path)?);
    serde_json::from_reader(r).map_err(|e| parse_err(path, e))
}

fn write_sidecar<T: Serialize>(data: &Path, body: T, config_hash: Option<String>) -> Result<()> {
    write_json(&sidecar_path(data), &Sidecar::new(body, config_hash))
}

fn read_sidecar<T: DeserializeOwned>(data: &Path) -> Result<Sidecar<T>> {
    let s: Sidecar<T> = read_json(&sidecar_path(data))?;
    if s.schema_version != SCHEMA_VERSION {
        return Err(parse_err(data, format!("unsupported schema version {}", s.schema_version)));
    }
    Ok(s)
}

/// Writes a numeric table with a header row.
pub fn write_table(path: &Path, header: &[String], rows: &Array2<f64>) -> Result<()> {
    if header.len() != rows.ncols() {
        return Err(Error::DimensionMismatch { expected: rows.ncols(), found: header.len() });
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| parse_err(path, e))?;
    w.write_record(header).map_err(|e| parse_err(path, e))?;
    for row in rows.rows() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| parse_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a numeric table with a header row.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| parse_err(path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| parse_err(path, e))?.iter().map(str::to_owned).collect();
    let mut values = Vec::new();
    let mut n = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| parse_err(path, e))?;
        if rec.len() != header.len() {
            return Err(parse_err(path, format!("row {} has {} fields, expected {}", n + 1, rec.len(), header.len())));
        }
        for f in rec.iter() {
            let v: f64 = f.trim().parse().map_err(|_| parse_err(path, format!("row {}: bad number {f:?}", n + 1)))?;
            values.push(v);
        }
        n += 1;
    }
    let table = Array2::from_shape_vec((n, header.len()), values).map_err(|e| parse_err(path, e))?;
    Ok((header, table))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloudMeta {
    pub spec: ManifoldSpec,
    pub seed: u64,
    pub n: usize,
}

/// Writes `x0.., u0..` columns (extrinsic then chart coordinates) and a
/// sidecar with the manifold spec and seed.
pub fn write_point_cloud(path: &Path, cloud: &PointCloud, config_hash: Option<String>) -> Result<()> {
    let (n, b) = cloud.points.dim();
    let m = cloud.chart_coords.ncols();
    let header: Vec<String> = (0..b).map(|i| format!("x{i}")).chain((0..m).map(|i| format!("u{i}"))).collect();
    let table =
        Array2::from_shape_fn(
            (n, b + m),
            |(i, c)| {
                if c < b {
                    cloud.points[[i, c]]
                } else {
                    cloud.chart_coords[[i, c - b]]
                }
            },
        );
    write_table(path, &header, &table)?;
    write_sidecar(path, PointCloudMeta { spec: cloud.spec.clone(), seed: cloud.seed, n }, config_hash)
}

/// Reads the extrinsic `x*` columns of a point table; other columns are ignored.
pub fn read_points(path: &Path) -> Result<Array2<f64>> {
    let (header, table) = read_table(path)?;
    let cols: Vec<usize> = (0..header.len()).filter(|&c| header[c].starts_with('x')).collect();
    let cols = if cols.is_empty() { (0..header.len()).collect() } else { cols };
    Ok(Array2::from_shape_fn((table.nrows(), cols.len()), |(i, c)| table[[i, cols[c]]]))
}

/// Reads a point cloud written by [`write_point_cloud`], sidecar included.
pub fn read_point_cloud(path: &Path) -> Result<PointCloud> {
    let meta: Sidecar<PointCloudMeta> = read_sidecar(path)?;
    let (header, table) = read_table(path)?;
    let b = meta.body.spec.ambient_dim();
    let m = meta.body.spec.intrinsic_dim();
    if header.len() != b + m || table.nrows() != meta.body.n {
        return Err(parse_err(path, "table shape does not match its sidecar"));
    }
    Ok(PointCloud {
        spec: meta.body.spec,
        points: table.slice(ndarray::s![.., ..b]).to_owned(),
        chart_coords: table.slice(ndarray::s![.., b..]).to_owned(),
        seed: meta.body.seed,
    })
}

/// Writes a coordinate Matrix Market file. Symmetric matrices store the
/// lower triangle only.
pub fn write_matrix_market(path: &Path, a: &CsrMatrix, symmetric: bool, comment: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let kind = if symmetric { "symmetric" } else { "general" };
    writeln!(w, "%%MatrixMarket matrix coordinate real {kind}")?;
    for line in comment.lines() {
        writeln!(w, "% {line}")?;
    }
    let entries: Vec<(usize, usize, f64)> = a.triplets().filter(|&(i, j, _)| !symmetric || j <= i).collect();
    writeln!(w, "{} {} {}", a.n_rows(), a.n_cols(), entries.len())?;
    for (i, j, v) in entries {
        writeln!(w, "{} {} {v}", i + 1, j + 1)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_market(path: &Path) -> Result<CsrMatrix> {
    let r = BufReader::new(File::open(path)?);
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| parse_err(path, "empty file"))??;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" || tokens[2] != "coordinate" {
        return Err(parse_err(path, "expected a coordinate Matrix Market header"));
    }
    if tokens[3] != "real" && tokens[3] != "integer" {
        return Err(parse_err(path, format!("unsupported field {}", tokens[3])));
    }
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(path, format!("unsupported symmetry {other}"))),
    };
    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        let bad = || parse_err(path, format!("line {}: malformed entry {t:?}", lineno + 2));
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(bad());
                }
                let p = |s: &str| s.parse::<usize>().map_err(|_| bad());
                size = Some((p(fields[0])?, p(fields[1])?, p(fields[2])?));
            }
            Some((rows, cols, _)) => {
                if fields.len() != 3 {
                    return Err(bad());
                }
                let i: usize = fields[0].parse().map_err(|_| bad())?;
                let j: usize = fields[1].parse().map_err(|_| bad())?;
                let v: f64 = fields[2].parse().map_err(|_| bad())?;
                if i == 0 || j == 0 || i > rows || j > cols || !v.is_finite() {
                    return Err(bad());
                }
                triplets.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    triplets.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (rows, cols, nnz) = size.ok_or_else(|| parse_err(path, "missing size line"))?;
    let stored = if symmetric { triplets.iter().filter(|t| t.1 <= t.0).count() } else { triplets.len() };
    if stored != nnz {
        return Err(parse_err(path, format!("expected {nnz} entries, found {stored}")));
    }
    Ok(CsrMatrix::from_triplets(rows, cols, &triplets))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub construction: Construction,
    pub params: GraphParams,
    pub symmetric: bool,
    pub n: usize,
    /// Intrinsic dimension of the sampled manifold, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsic_dim: Option<usize>,
}

pub fn write_graph(path: &Path, g: &SparseGraph, config_hash: Option<String>) -> Result<()> {
    write_graph_with_dim(path, g, None, config_hash)
}

/// Like [`write_graph`], also recording the intrinsic dimension needed to
/// turn `k` into a bandwidth later.
pub fn write_graph_with_dim(
    path: &Path,
    g: &SparseGraph,
    intrinsic_dim: Option<usize>,
    config_hash: Option<String>,
) -> Result<()> {
    write_matrix_market(path, &g.weights, g.symmetric, &format!("{} weight matrix", g.construction))?;
    let meta = GraphMeta {
        construction: g.construction,
        params: g.params.clone(),
        symmetric: g.symmetric,
        n: g.n(),
        intrinsic_dim,
    };
    write_sidecar(path, meta, config_hash)
}

pub fn read_graph_meta(path: &Path) -> Result<Sidecar<GraphMeta>> {
    read_sidecar(path)
}

pub fn read_graph(path: &Path) -> Result<SparseGraph> {
    let meta: Sidecar<GraphMeta> = read_sidecar(path)?;
    let w = read_matrix_market(path)?;
    if w.n_rows() != meta.body.n {
        return Err(parse_err(path, "matrix size does not match its sidecar"));
    }
    SparseGraph::new(w, meta.body.construction, meta.body.params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplacianMeta {
    pub kind: LaplacianKind,
    pub scaling: f64,
    pub n: usize,
    /// Hash of the graph file the Laplacian was built from.
    pub source_graph_hash: Option<String>,
    pub degree: Vec<f64>,
}

pub fn write_laplacian(
    path: &Path,
    l: &LaplacianMatrix,
    source_graph_hash: Option<String>,
    config_hash: Option<String>,
) -> Result<()> {
    let symmetric = l.matrix.asymmetry() == 0.0;
    write_matrix_market(path, &l.matrix, symmetric, &format!("{} Laplacian", l.kind.name()))?;
    let meta = LaplacianMeta {
        kind: l.kind,
        scaling: l.scaling,
        n: l.matrix.n_rows(),
        source_graph_hash,
        degree: l.degree.clone(),
    };
    write_sidecar(path, meta, config_hash)
}

pub fn read_laplacian(path: &Path) -> Result<LaplacianMatrix> {
    let meta: Sidecar<LaplacianMeta> = read_sidecar(path)?;
    let matrix = read_matrix_market(path)?;
    if matrix.n_rows() != meta.body.n || meta.body.degree.len() != meta.body.n {
        return Err(parse_err(path, "matrix size does not match its sidecar"));
    }
    Ok(LaplacianMatrix { kind: meta.body.kind, matrix, degree: meta.body.degree, scaling: meta.body.scaling })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMeta {
    pub k: usize,
    pub m: usize,
    pub method: DensityMethod,
    pub n: usize,
}

pub fn write_density(path: &Path, est: &DensityEstimate, config_hash: Option<String>) -> Result<()> {
    let col = Array2::from_shape_vec((est.values.len(), 1), est.values.clone()).map_err(|e| parse_err(path, e))?;
    write_table(path, &["density".to_owned()], &col)?;
    write_sidecar(path, DensityMeta { k: est.k, m: est.m, method: est.method, n: est.values.len() }, config_hash)
}

pub fn read_density(path: &Path) -> Result<DensityEstimate> {
    let meta: Sidecar<DensityMeta> = read_sidecar(path)?;
    let (_, table) = read_table(path)?;
    if table.ncols() != 1 || table.nrows() != meta.body.n {
        return Err(parse_err(path, "density column does not match its sidecar"));
    }
    Ok(DensityEstimate { values: table.column(0).to_vec(), k: meta.body.k, m: meta.body.m, method: meta.body.method })
}

/// Writes `e0, e1, ..` embedding columns aligned with the input cloud.
pub fn write_embedding(path: &Path, coords: &Array2<f64>) -> Result<()> {
    let header: Vec<String> = (0..coords.ncols()).map(|i| format!("e{i}")).collect();
    write_table(path, &header, coords)
}
