//! One function per subcommand. Diagnostics go to stderr, tables to stdout.

use std::path::Path;
use std::time::Instant;

use laplace_limits::density::knn_density;
use laplace_limits::graphs::{build_graph, BuildOptions, Construction};
use laplace_limits::io::{
    read_density, read_graph, read_graph_meta, read_point_cloud, read_points, sidecar_path, write_density,
    write_embedding, write_graph_with_dim, write_json, write_laplacian, write_point_cloud, write_table, Sidecar,
    SCHEMA_VERSION,
};
use laplace_limits::laplacians::{assemble, LaplacianKind, ScalingInputs};
use laplace_limits::lle::{embed_lle as lle_embedding, fit_lle};
use laplace_limits::manifolds::sample_points;
use laplace_limits::spectral::{laplacian_eigenmap, EigenOptions, SolverStats};
use laplace_limits::validate::{
    build_cell, degree_limit_check, pilot_comparison, run_convergence, sphere_moment_oracle, ConvergenceReport,
    GraphParam, PilotComparison, SphereMomentParams, SphereMoments,
};
use laplace_limits::{Error, Result};
use ndarray::Array2;
use serde::Serialize;
use serde_json::json;

use crate::config::{hash_inputs, hash_value, parse_manifold, ExperimentConfig};

fn command_hash(value: serde_json::Value) -> String {
    let mut value = value;
    value["schema_version"] = json!(SCHEMA_VERSION);
    hash_value(&value)
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => Ok(std::fs::create_dir_all(dir)?),
        _ => Ok(()),
    }
}

/// Points plus the intrinsic dimension, from a cloud with sidecar or a bare table.
fn load_points(path: &Path, m: Option<usize>) -> Result<(Array2<f64>, Option<usize>)> {
    if sidecar_path(path).exists() {
        let cloud = read_point_cloud(path)?;
        let dim = cloud.spec.intrinsic_dim();
        if let Some(m) = m.filter(|&m| m != dim) {
            eprintln!("warning: --m {m} overrides the sampled intrinsic dimension {dim}");
        }
        return Ok((cloud.points, Some(m.unwrap_or(dim))));
    }
    Ok((read_points(path)?, m))
}

fn need_m(m: Option<usize>, what: &str) -> Result<usize> {
    m.ok_or_else(|| Error::InvalidParameter(format!("{what} needs the intrinsic dimension; pass --m")))
}

pub fn sample(manifold: &str, n: usize, seed: u64, out: &Path) -> Result<()> {
    let spec = parse_manifold(manifold)?;
    let hash = command_hash(json!({ "command": "sample", "manifold": spec, "n": n, "seed": seed }));
    let cloud = sample_points(&spec, n, seed)?;
    create_parent(out)?;
    write_point_cloud(out, &cloud, Some(hash))?;
    eprintln!("sampled {n} points on {} (seed {seed}) -> {}", spec.name(), out.display());
    Ok(())
}

pub fn build(
    points: &Path,
    construction: &str,
    k: Option<usize>,
    h: Option<f64>,
    pilot: Option<&Path>,
    m: Option<usize>,
    out: &Path,
) -> Result<()> {
    let construction: Construction = construction.parse()?;
    let (x, m) = load_points(points, m)?;
    let mut pilot_hash = None;
    let pilot = match (construction, pilot) {
        (Construction::PilotWeightedKnn, Some(path)) => {
            pilot_hash = Some(hash_inputs(path)?);
            Some(read_density(path)?)
        }
        (Construction::PilotWeightedKnn, None) => {
            let k = k.ok_or_else(|| Error::InvalidParameter("pilot_weighted_knn needs --k".into()))?;
            Some(knn_density(&x, k, need_m(m, "a pilot density estimate")?)?)
        }
        (_, Some(_)) => {
            return Err(Error::InvalidParameter(format!(
                "--pilot only applies to pilot_weighted_knn, not {construction}"
            )))
        }
        (_, None) => None,
    };
    let hash = command_hash(json!({
        "command": "build",
        "points": hash_inputs(points)?,
        "construction": construction,
        "k": k,
        "h": h,
        "pilot": pilot_hash,
        "m": m,
    }));
    let g = build_graph(&x, construction, &BuildOptions { h, k, pilot, kernel: None })?;
    create_parent(out)?;
    write_graph_with_dim(out, &g, m, Some(hash))?;
    eprintln!("built {construction} graph: {} vertices, {} edges -> {}", g.n(), g.n_edges(), out.display());
    Ok(())
}

pub fn laplacian(graph: &Path, kind: &str, m: Option<usize>, out: &Path) -> Result<()> {
    let kind: LaplacianKind = kind.parse()?;
    let g = read_graph(graph)?;
    let m = need_m(m.or(read_graph_meta(graph)?.body.intrinsic_dim), "the Laplacian scaling")?;
    let graph_hash = hash_inputs(graph)?;
    let hash = command_hash(json!({ "command": "laplacian", "graph": graph_hash, "kind": kind, "m": m }));
    let l = assemble(&g, kind, &ScalingInputs::for_graph(&g, m)?)?;
    create_parent(out)?;
    write_laplacian(out, &l, Some(graph_hash), Some(hash))?;
    eprintln!("assembled {kind} Laplacian, scaling {:.6e} -> {}", l.scaling, out.display());
    Ok(())
}

#[derive(Serialize)]
struct EmbeddingMeta {
    method: &'static str,
    dim: usize,
    n: usize,
    eigenvalues: Vec<f64>,
    trivial_eigenvalue: f64,
    solver: SolverStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    lle_k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lle_reg: Option<f64>,
}

pub fn embed_eigenmap(graph: &Path, dim: usize, out: &Path) -> Result<()> {
    let hash =
        command_hash(json!({ "command": "embed", "method": "eigenmap", "graph": hash_inputs(graph)?, "dim": dim }));
    let g = read_graph(graph)?;
    let emb = laplacian_eigenmap(&g, dim, &EigenOptions::default())?;
    create_parent(out)?;
    write_embedding(out, &emb.coords)?;
    let meta = EmbeddingMeta {
        method: "eigenmap",
        dim,
        n: g.n(),
        eigenvalues: emb.eigenvalues,
        trivial_eigenvalue: emb.trivial_eigenvalue,
        solver: emb.stats,
        lle_k: None,
        lle_reg: None,
    };
    write_json(&sidecar_path(out), &Sidecar::new(meta, Some(hash)))?;
    eprintln!("eigenmap embedding of {} points in {dim} dimensions -> {}", g.n(), out.display());
    Ok(())
}

pub fn embed_lle(
    points: &Path,
    graph: Option<&Path>,
    k: Option<usize>,
    reg: f64,
    dim: usize,
    out: &Path,
) -> Result<()> {
    let k = match (k, graph) {
        (Some(k), _) => k,
        (None, Some(g)) => read_graph_meta(g)?
            .body
            .params
            .k
            .ok_or_else(|| Error::InvalidParameter("graph records no k; pass --k".into()))?,
        (None, None) => return Err(Error::InvalidParameter("lle needs --k or a kNN --graph".into())),
    };
    let hash = command_hash(
        json!({ "command": "embed", "method": "lle", "points": hash_inputs(points)?, "k": k, "reg": reg, "dim": dim }),
    );
    let x = read_points(points)?;
    let model = fit_lle(&x, k, reg)?;
    let emb = lle_embedding(&model, dim, &EigenOptions::default())?;
    create_parent(out)?;
    write_embedding(out, &emb.coords)?;
    let meta = EmbeddingMeta {
        method: "lle",
        dim,
        n: x.nrows(),
        eigenvalues: emb.eigenvalues,
        trivial_eigenvalue: emb.trivial_eigenvalue,
        solver: emb.stats,
        lle_k: Some(k),
        lle_reg: Some(reg),
    };
    write_json(&sidecar_path(out), &Sidecar::new(meta, Some(hash)))?;
    eprintln!("LLE embedding (k = {k}, reg = {reg:e}) of {} points -> {}", x.nrows(), out.display());
    Ok(())
}

pub fn density(points: &Path, k: usize, m: Option<usize>, out: &Path) -> Result<()> {
    let (x, m) = load_points(points, m)?;
    let m = need_m(m, "the density estimate")?;
    let hash = command_hash(json!({ "command": "density", "points": hash_inputs(points)?, "k": k, "m": m }));
    let est = knn_density(&x, k, m)?;
    create_parent(out)?;
    write_density(out, &est, Some(hash))?;
    eprintln!("kNN density (k = {k}, m = {m}) of {} points -> {}", x.nrows(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct DegreeSummary {
    n: usize,
    param: GraphParam,
    seed: u64,
    interior_cv: f64,
    median_relative_error: f64,
}

#[derive(Serialize)]
struct SphereSummary {
    m: usize,
    moments: SphereMoments,
}

#[derive(Serialize)]
struct PilotSummary {
    runs: Vec<PilotComparison>,
    pilot_closer: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn param_label(p: GraphParam) -> String {
    match p {
        GraphParam::H(h) => format!("h={h:.4}"),
        GraphParam::K(k) => format!("k={k}"),
    }
}

/// Runs every configured suite and writes one JSON file per suite into the
/// output directory. Wall-clock times go to stderr so reruns are byte-identical.
pub fn validate(config: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let hash = cfg.hash()?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir)?;
    let spec = &cfg.manifold;

    if !cfg.grid.is_empty() {
        let start = Instant::now();
        let functions = cfg.functions()?;
        let mut report: ConvergenceReport = run_convergence(spec, cfg.construction, &cfg.grid, &cfg.seeds, &functions)?;
        eprintln!("convergence: {} cells in {:.1}s", report.cells.len(), start.elapsed().as_secs_f64());
        report.runtime_seconds = 0.0;
        let mut value = serde_json::to_value(Sidecar::new(&report, Some(hash.clone())))?;
        if let Some(map) = value.as_object_mut() {
            map.remove("runtime_seconds");
        }
        write_json(&dir.join("convergence.json"), &value)?;
        print_convergence(&report, &cfg.test_functions);
        for w in &report.warnings {
            eprintln!("warning: {w}");
        }
        let drift = report.mean_drift_median();
        let rows =
            Array2::from_shape_fn((cfg.grid.len(), 2), |(g, c)| if c == 0 { cfg.grid[g].n as f64 } else { drift[g] });
        let path = dir.join("drift_errors.csv");
        write_table(&path, &["n".into(), "mean_median_drift_error".into()], &rows)?;
        write_json(
            &sidecar_path(&path),
            &Sidecar::new(json!({ "construction": cfg.construction }), Some(hash.clone())),
        )?;
    }

    if cfg.degree_check && !cfg.grid.is_empty() {
        let mut rows = Vec::new();
        for gp in &cfg.grid {
            for &seed in &cfg.seeds {
                let cell = build_cell(spec, cfg.construction, *gp, seed)?;
                let check = degree_limit_check(&cell, cfg.construction)?;
                rows.push(DegreeSummary {
                    n: gp.n,
                    param: gp.param,
                    seed,
                    interior_cv: check.interior_cv,
                    median_relative_error: median(check.relative_error),
                });
            }
        }
        println!();
        println!("{:>8} {:>12} {:>6} {:>12} {:>14}", "n", "param", "seed", "interior_cv", "median_rel_err");
        for r in &rows {
            println!(
                "{:>8} {:>12} {:>6} {:>12.4e} {:>14.4e}",
                r.n,
                param_label(r.param),
                r.seed,
                r.interior_cv,
                r.median_relative_error
            );
        }
        write_json(&dir.join("degree.json"), &Sidecar::new(json!({ "cells": rows }), Some(hash.clone())))?;
    }

    if let Some(suite) = &cfg.sphere {
        let start = Instant::now();
        let mut out = Vec::new();
        println!();
        println!("{:>3} {:>10} {:>12} {:>12}", "m", "M0", "max|M1|", "max|M2-I/(m+2)|");
        for &m in &suite.dims {
            let moments = sphere_moment_oracle(&SphereMomentParams::centered(m, suite.h, suite.samples, suite.seed))?
                .normalized();
            let m1 = moments.m1.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let mut m2 = 0.0f64;
            for a in 0..m {
                for b in 0..m {
                    let target = if a == b { 1.0 / (m as f64 + 2.0) } else { 0.0 };
                    m2 = m2.max((moments.m2[a][b] - target).abs());
                }
            }
            println!("{m:>3} {:>10.6} {m1:>12.3e} {m2:>12.3e}", moments.m0);
            out.push(SphereSummary { m, moments });
        }
        eprintln!("sphere moments in {:.1}s", start.elapsed().as_secs_f64());
        write_json(&dir.join("sphere_moments.json"), &Sidecar::new(json!({ "dims": out }), Some(hash.clone())))?;
    }

    if let Some(suite) = &cfg.pilot {
        let start = Instant::now();
        let runs =
            cfg.seeds.iter().map(|&s| pilot_comparison(spec, suite.n, suite.k, s)).collect::<Result<Vec<_>>>()?;
        let closer = runs.iter().filter(|r| r.pilot_closer()).count();
        println!();
        println!(
            "{:>6} {:>10} {:>10} {:>10} {:>10} {:>7}",
            "seed", "plain_sup", "pilot_sup", "plain_rms", "pilot_rms", "closer"
        );
        for r in &runs {
            println!(
                "{:>6} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>7}",
                r.seed,
                r.plain_sup,
                r.pilot_sup,
                r.plain_rms,
                r.pilot_rms,
                if r.pilot_closer() { "pilot" } else { "plain" }
            );
        }
        println!("pilot-weighted kNN closer to the Gaussian-graph drift in {closer}/{} seeds", runs.len());
        eprintln!("pilot comparison in {:.1}s", start.elapsed().as_secs_f64());
        write_json(
            &dir.join("pilot.json"),
            &Sidecar::new(PilotSummary { runs, pilot_closer: closer }, Some(hash.clone())),
        )?;
    }
    eprintln!("config hash {hash}; outputs in {}", dir.display());
    Ok(())
}

fn print_convergence(report: &ConvergenceReport, functions: &[String]) {
    let drift = report.mean_drift_median();
    println!("{} on {}", report.construction, report.manifold.name());
    print!("{:>8} {:>12} {:>12} {:>12}", "n", "param", "drift_med", "diff_med");
    for f in functions {
        print!(" {:>16}", truncate(f, 16));
    }
    println!();
    for (g, gp) in report.grid.iter().enumerate() {
        let cells: Vec<_> = report.cells.iter().filter(|c| c.grid == *gp).collect();
        let diff = cells.iter().map(|c| c.diffusion_median).sum::<f64>() / cells.len() as f64;
        print!("{:>8} {:>12} {:>12.4e} {:>12.4e}", gp.n, param_label(gp.param), drift[g], diff);
        for f in 0..functions.len() {
            print!(" {:>16.4e}", report.mean_generator_median(f)[g]);
        }
        println!();
    }
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}
