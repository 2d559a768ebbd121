use std::path::PathBuf;

use clap::{Parser, Subcommand};
use hmx_core::cluster::{build_block_partition, build_cluster_tree, sparsity_constant, BlockPartition, ClusterTree};
use hmx_core::fem::DofMap;
use hmx_core::hmatrix::{compress_dense, PowerOptions};
use hmx_core::inverse::{decay_report, dense_inverse, rank_sweep, DecayFit, Sweep};
use hmx_core::linalg::{self, C64};
use hmx_core::mesh::build_box_mesh;
use nalgebra::DMatrix;
use nalgebra_sparse::CsrMatrix;
use serde::Serialize;

use crate::checks::{self, Check, Fixture};
use crate::config::{ConfigArgs, ExperimentConfig};
use crate::error::CliError;
use crate::manifest::{Experiment, RunManifest};
use crate::plot::sweep_svg;

/// Edge-element Maxwell systems and H-matrix approximation of their inverses.
///
/// Every command writes its files and a manifest.json with checksums into
/// <out>/<name>. Exit codes: 0 ok, 1 check failure, 2 config error,
/// 3 resource limit.
#[derive(Debug, Parser)]
#[command(name = "hmx", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mesh size and entity counts
    MeshInfo(ConfigArgs),
    /// Assemble curl-curl and mass matrices and check their structure
    Assemble(ConfigArgs),
    /// Compress the inverse at each rank and record errors, fits and a plot
    RankSweep(ConfigArgs),
    /// Singular values of every far block of the inverse
    BlockSvd(ConfigArgs),
    /// Caccioppoli ratios of the curl and gradient variants
    Caccioppoli(ConfigArgs),
    /// Local Helmholtz splits and gradient parts of harmonic columns
    Helmholtz(ConfigArgs),
    /// Commuting-diagram residuals on random tetrahedra
    CommutingCheck(ConfigArgs),
    /// Biorthogonality and scaling of the dual basis
    DualBasisCheck(ConfigArgs),
    /// Run every check and write a pass/fail summary
    Verify(ConfigArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::MeshInfo(_) => "mesh-info",
            Command::Assemble(_) => "assemble",
            Command::RankSweep(_) => "rank-sweep",
            Command::BlockSvd(_) => "block-svd",
            Command::Caccioppoli(_) => "caccioppoli",
            Command::Helmholtz(_) => "helmholtz",
            Command::CommutingCheck(_) => "commuting-check",
            Command::DualBasisCheck(_) => "dual-basis-check",
            Command::Verify(_) => "verify",
        }
    }

    fn args(&self) -> &ConfigArgs {
        match self {
            Command::MeshInfo(a)
            | Command::Assemble(a)
            | Command::RankSweep(a)
            | Command::BlockSvd(a)
            | Command::Caccioppoli(a)
            | Command::Helmholtz(a)
            | Command::CommutingCheck(a)
            | Command::DualBasisCheck(a)
            | Command::Verify(a) => a,
        }
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    /// Lines for the terminal.
    pub summary: Vec<String>,
}

/// Runs one command. Check failures still write all files and the manifest
/// before returning `CliError::Check`.
pub fn run(command: &Command) -> Result<Outcome, CliError> {
    let cfg = command.args().resolve()?;
    let name = command.name();
    if matches!(command, Command::RankSweep(_) | Command::BlockSvd(_) | Command::Verify(_)) {
        check_dense_limit(&cfg)?;
    }
    let mut exp = Experiment::create(name, &cfg)?;
    let (checks, mut summary) = match command {
        Command::MeshInfo(_) => mesh_info(&cfg, &mut exp)?,
        Command::Assemble(_) => assemble(&cfg, &mut exp)?,
        Command::RankSweep(_) => sweep(&cfg, &mut exp)?,
        Command::BlockSvd(_) => block_svd(&cfg, &mut exp)?,
        Command::Caccioppoli(_) => caccioppoli(&cfg, &mut exp)?,
        Command::Helmholtz(_) => helmholtz(&cfg, &mut exp)?,
        Command::CommutingCheck(_) => commuting(&cfg, &mut exp)?,
        Command::DualBasisCheck(_) => dual(&cfg, &mut exp)?,
        Command::Verify(_) => verify(&cfg, &mut exp)?,
    };
    let failures: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
    for c in &checks {
        summary.push(format!(
            "{} {}: {:.3e} (tolerance {:.3e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        ));
    }
    let dir = exp.dir.clone();
    let manifest = exp.finish(failures.is_empty())?;
    summary.push(format!("wrote {} files to {}", manifest.files.len() + 1, dir.display()));
    if failures.is_empty() {
        Ok(Outcome { dir, manifest, summary })
    } else {
        for line in &summary {
            println!("{line}");
        }
        Err(CliError::Check(failures))
    }
}

type Step = Result<(Vec<Check>, Vec<String>), CliError>;

fn check_dense_limit(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let mesh = build_box_mesh(cfg.n, cfg.side)?;
    let n = DofMap::new(&mesh).len();
    if n > cfg.dense_limit {
        return Err(CliError::Resource(format!("N = {n} exceeds the dense limit {}", cfg.dense_limit)));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct MeshInfo {
    pub n: usize,
    pub side: f64,
    pub h: f64,
    pub vertices: usize,
    pub edges: usize,
    pub tets: usize,
    pub boundary_edges: usize,
    /// Interior edges: the number of unknowns N.
    pub dofs: usize,
    pub interior_vertices: usize,
    pub shape_constant: f64,
}

fn mesh_info(cfg: &ExperimentConfig, exp: &mut Experiment) -> Step {
    let mesh = exp.phase("mesh", || build_box_mesh(cfg.n, cfg.side))?;
    let dofs = DofMap::new(&mesh);
    let interior_vertices = (0..mesh.vertices().len()).filter(|v| !mesh.is_boundary_vertex(*v)).count();
    let info = MeshInfo {
        n: cfg.n,
        side: cfg.side,
        h: mesh.mesh_width(),
        vertices: mesh.vertices().len(),
        edges: mesh.edges().len(),
        tets: mesh.tets().len(),
        boundary_edges: mesh.edges().len() - dofs.len(),
        dofs: dofs.len(),
        interior_vertices,
        shape_constant: mesh.shape_constant(),
    };
    exp.write_json("mesh_info.json", &info)?;
    let summary = vec![format!(
        "N = {}, h = {:.6}, vertices {}, edges {}, tets {}",
        info.dofs, info.h, info.vertices, info.edges, info.tets
    )];
    Ok((Vec::new(), summary))
}

#[derive(Debug, Serialize)]
struct Triplet {
    row: usize,
    col: usize,
    value: f64,
}

fn triplets(a: &CsrMatrix<f64>) -> Vec<Triplet> {
    a.triplet_iter().map(|(row, col, v)| Triplet { row, col, value: *v }).collect()
}

#[derive(Debug, Serialize)]
struct AssemblyInfo {
    dofs: usize,
    kappa: [f64; 2],
    curl_curl_nonzeros: usize,
    mass_nonzeros: usize,
    curl_curl_frobenius: f64,
    mass_frobenius: f64,
}

fn assemble(cfg: &ExperimentConfig, exp: &mut Experiment) -> Step {
    let fx = exp.phase("assemble", || Fixture::new(cfg))?;
    let k = fx.system.curl_curl();
    let m = fx.system.mass();
    let info = AssemblyInfo {
        dofs: fx.system.len(),
        kappa: [cfg.kappa_re, cfg.kappa_im],
        curl_curl_nonzeros: k.nnz(),
        mass_nonzeros: m.nnz(),
        curl_curl_frobenius: linalg::frobenius(k),
        mass_frobenius: linalg::frobenius(m),
    };
    exp.write_json("assembly.json", &info)?;
    exp.write_csv("curl_curl.csv", &triplets(k))?;
    exp.write_csv("mass.csv", &triplets(m))?;
    let checks = exp.phase("checks", || {
        vec![checks::symmetry(&fx), checks::curl_of_gradient(&fx, cfg.seed, cfg.tolerances.curl_of_gradient)]
    });
    exp.write_json("checks.json", &checks)?;
    Ok((checks, vec![format!("N = {}, nnz(K) = {}, nnz(M) = {}", info.dofs, info.curl_curl_nonzeros, info.mass_nonzeros)]))
}

#[derive(Debug, Serialize)]
struct SweepCsvRow {
    r: usize,
    abs_err: f64,
    rel_err: f64,
    scalars_stored: usize,
    bound_value: f64,
    max_block_sigma: f64,
    within_bound: bool,
    converged: bool,
}

#[derive(Debug, Serialize)]
struct SweepSummary<'a> {
    dofs: usize,
    norm: f64,
    far_blocks: usize,
    near_blocks: usize,
    sparsity_constant: usize,
    depth: usize,
    fit: &'a DecayFit,
}

/// Dense inverse, cluster tree and partition for the configured problem.
struct InverseSetup {
    fx: Fixture,
    b: DMatrix<C64>,
    tree: ClusterTree,
    partition: BlockPartition,
}

fn inverse_setup(cfg: &ExperimentConfig, exp: &mut Experiment) -> Result<InverseSetup, CliError> {
    let fx = exp.phase("assemble", || Fixture::new(cfg))?;
    let b = exp.phase("inverse", || dense_inverse(&fx.system.stiffness_dense()))?;
    let tree = exp.phase("cluster", || build_cluster_tree(&fx.mesh, fx.dofs(), cfg.n_leaf))?;
    let partition = build_block_partition(&tree, cfg.eta)?;
    Ok(InverseSetup { fx, b, tree, partition })
}

fn run_sweep(cfg: &ExperimentConfig, exp: &mut Experiment) -> Result<(InverseSetup, Sweep), CliError> {
    let setup = inverse_setup(cfg, exp)?;
    let opts = PowerOptions { seed: cfg.seed ^ PowerOptions::default().seed, ..Default::default() };
    let sweep = exp.phase("sweep", || rank_sweep(&setup.b, &setup.tree, &setup.partition, &cfg.ranks, &opts))?;
    Ok((setup, sweep))
}

fn write_sweep(exp: &mut Experiment, setup: &InverseSetup, sweep: &Sweep, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let rows: Vec<SweepCsvRow> = sweep
        .rows
        .iter()
        .map(|r| SweepCsvRow {
            r: r.r,
            abs_err: r.abs_err,
            rel_err: r.rel_err,
            scalars_stored: r.scalars,
            bound_value: r.bound_value,
            max_block_sigma: r.max_block_sigma,
            within_bound: r.within_bound,
            converged: r.converged,
        })
        .collect();
    exp.write_csv("sweep.csv", &rows)?;
    let summary = SweepSummary {
        dofs: setup.fx.system.len(),
        norm: sweep.norm,
        far_blocks: setup.partition.far.len(),
        near_blocks: setup.partition.near.len(),
        sparsity_constant: sparsity_constant(&setup.partition),
        depth: setup.tree.depth(),
        fit: &sweep.fit,
    };
    exp.write_json("fit.json", &summary)?;
    let title = format!("n = {}, eta = {}, n_leaf = {}", cfg.n, cfg.eta, cfg.n_leaf);
    exp.write_bytes("sweep.svg", sweep_svg(sweep, &title).as_bytes())?;
    Ok(())
}

fn sweep(cfg: &ExperimentConfig, exp: &mut Experiment) -> Step {
    let (setup, sweep) = run_sweep(cfg, exp)?;
    write_sweep(exp, &setup, &sweep, cfg)?;
    let r_max = cfg.ranks.iter().copied().max().unwrap_or(1);
    let h = compress_dense(&setup.b, &setup.tree, &setup.partition, r_max)?;
    exp.write_json("hmatrix.json", &h.manifest())?;
    let mut summary: Vec<String> = sweep
        .rows
        .iter()
        .map(|r| format!("r = {:>3}: rel err {:.3e}, bound {:.3e}", r.r, r.rel_err, r.bound_value))
        .collect();
    if let Some(f) = sweep.fit.root_exponential {
        summary.push(format!("root-exponential fit: b = {:.4}, residual {:.3e}", f.rate, f.residual));
    }
    if let Some(note) = &sweep.fit.notice {
        summary.push(format!("fit: {note}"));
    }
    Ok((Vec::new(), summary))
}

#[derive(Debug, Serialize)]
struct SigmaRow {
    row: usize,
    col: usize,
    rows: usize,
    cols: usize,
    k: usize,
    sigma: f64,
}

#[derive(Debug, Serialize)]
struct DecaySummary<'a> {
    far_blocks: usize,
    envelope: &'a [f64],
    fit: &'a DecayFit,
}

fn block_svd(cfg: &ExperimentConfig, exp: &mut Experiment) -> Step {
    let setup = inverse_setup(cfg, exp)?;
    let report = exp.phase("block svd", || decay_report(&setup.b, &setup.tree, &setup.partition))?;
    let rows: Vec<SigmaRow> = report
        .blocks
        .iter()
        .flat_map(|d| {
            d.singular_values.iter().enumerate().map(|(k, s)| SigmaRow {
                row: d.row,
                col: d.col,
                rows: d.rows,
                cols: d.cols,
                k: k + 1,
                sigma: *s,
            })
        })
        .collect();
    exp.write_csv("block_svd.csv", &rows)?;
    exp.write_json(
        "decay.json",
        &DecaySummary { far_blocks: report.blocks.len(), envelope: &report.envelope, fit: &report.fit },
    )?;
    Ok((Vec::new(), vec![format!("{} far blocks, {} singular values", report.blocks.len(), rows.len())]))
}

fn caccioppoli(cfg: &ExperimentConfig, exp: &mut Experiment) -> Step {
    let fx = exp.phase("assemble", || Fixture::new(cfg))?;
    let entries = exp.phase("caccioppoli", || checks::caccioppoli(&fx, &["interior", "boundary-touching"]));
    exp.write_json("caccioppoli.json", &entries)?;
    let summary = entries
        .iter()
        .map(|e| match (&e.report, &e.error) {
            (Some(r), _) => format!(
                "{} {:?}: normalized ratio {:.6}, space dim {}, h/R < eps/4 {}",
                e.region, r.variant, r.normalized, r.space_dim, r.hypothesis_holds
            ),
            (_, Some(msg)) => format!("{}: {msg}", e.region),
            _ => String::new(),
        })
        .collect();
    Ok((Vec::new(), summary))
}

fn helmholtz(cfg: &ExperimentConfig, exp: &mut Experiment) -> Step {
    let fx = exp.phase("assemble", || Fixture::new(cfg))?;
    let (entries, checks) = exp.phase("helmholtz", || checks::helmholtz(&fx, cfg.seed, &cfg.tolerances))?;
    exp.write_json("helmholtz.json", &entries)?;
    exp.write_json("checks.json", &checks)?;
    Ok((checks, Vec::new()))
}

fn commuting(cfg: &ExperimentConfig, exp: &mut Experiment) -> Step {
    let (report, check) = exp.phase("commuting", || checks::commuting(cfg.seed, cfg.tolerances.commuting));
    exp.write_json("commuting.json", &report)?;
    exp.write_json("checks.json", &[&check])?;
    Ok((vec![check], Vec::new()))
}

fn dual(cfg: &ExperimentConfig, exp: &mut Experiment) -> Step {
    let (report, checks) = exp.phase("dual basis", || checks::dual(cfg, &cfg.tolerances))?;
    exp.write_json("dual_basis.json", &report)?;
    exp.write_json("checks.json", &checks)?;
    Ok((checks, Vec::new()))
}

#[derive(Debug, Serialize)]
struct VerifySummary<'a> {
    passed: bool,
    failures: Vec<&'a str>,
    checks: &'a [Check],
}

fn verify(cfg: &ExperimentConfig, exp: &mut Experiment) -> Step {
    let tol = &cfg.tolerances;
    let (setup, sweep) = run_sweep(cfg, exp)?;
    let fx = &setup.fx;
    let mut checks = vec![checks::symmetry(fx), checks::curl_of_gradient(fx, cfg.seed, tol.curl_of_gradient)];
    checks.push(exp.phase("commuting", || checks::commuting(cfg.seed, tol.commuting)).1);
    checks.extend(exp.phase("dual basis", || checks::dual(cfg, tol))?.1);
    let cacc = exp.phase("caccioppoli", || checks::caccioppoli(fx, &["interior"]));
    checks.push(checks::caccioppoli_check(&cacc, tol.caccioppoli));
    checks.extend(exp.phase("helmholtz", || checks::helmholtz(fx, cfg.seed, tol))?.1);
    checks.push(exp.phase("exact sequence", || checks::exact_sequence(fx, cfg.seed, tol.exact_sequence))?);
    checks.push(checks::block_bound(&sweep, tol.bound_slack));
    checks.push(exp.phase("transfer", || {
        checks::transfer(fx, &setup.b, &setup.tree, &setup.partition, cfg.seed, tol.transfer)
    })?);
    write_sweep(exp, &setup, &sweep, cfg)?;
    let failures: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    exp.write_json("verify.json", &VerifySummary { passed: failures.is_empty(), failures, checks: &checks })?;
    Ok((checks, Vec::new()))
}
