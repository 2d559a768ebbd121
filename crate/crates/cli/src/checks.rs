//! Measurements shared by the individual check commands and `verify`.

use hmx_core::cluster::{BlockPartition, ClusterTree};
use hmx_core::fem::{
    assemble_system, commuting_check, discrete_gradient, dual_basis, DofMap, EdgeGram, GalerkinSystem,
    GradientMatrix, NodalSpace, RegionNodalSpace, TetGeometry,
};
use hmx_core::field::{Poly, PolyField};
use hmx_core::harmonic::{
    caccioppoli_ratio, exact_sequence_recover, gradient_part_harmonic_check, harmonic_space, local_helmholtz,
    BoxRegion, CaccioppoliReport, Cube, Variant,
};
use hmx_core::inverse::{transfer_check, DenseSolver, Sweep};
use hmx_core::linalg::{self, C64};
use hmx_core::mesh::{build_box_mesh, Mesh};
use nalgebra::{DMatrix, DVector, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ExperimentConfig, Tolerances};
use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    /// Passes when `value <= tolerance`.
    pub fn at_most(name: &str, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), passed: value <= tolerance, value, tolerance, detail: detail.into() }
    }
}

pub struct Fixture {
    pub mesh: Mesh,
    pub system: GalerkinSystem,
    pub nodal: NodalSpace,
    pub grad: GradientMatrix,
}

impl Fixture {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let mesh = build_box_mesh(cfg.n, cfg.side)?;
        let dofs = DofMap::new(&mesh);
        let system = assemble_system(&mesh, &dofs, cfg.kappa())?;
        let nodal = NodalSpace::new(&mesh)?;
        let grad = discrete_gradient(&mesh, &dofs, &nodal);
        Ok(Self { mesh, system, nodal, grad })
    }

    pub fn dofs(&self) -> &DofMap {
        self.system.dofs()
    }

    /// The interior and boundary-touching box pairs, scaled to the cube side.
    pub fn regions(&self) -> Vec<(&'static str, BoxRegion)> {
        let s = self.mesh.side();
        [("interior", BoxRegion::interior()), ("boundary-touching", BoxRegion::boundary_touching())]
            .into_iter()
            .map(|(name, b)| (name, BoxRegion::new(b.center.map(|c| c * s), b.r * s, b.eps).unwrap()))
            .collect()
    }
}

fn cvec(rng: &mut ChaCha8Rng, n: usize) -> DVector<C64> {
    DVector::from_fn(n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

pub fn symmetry(fx: &Fixture) -> Check {
    let a = fx.system.stiffness_dense();
    let defect = (&a - a.transpose()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    Check {
        name: "symmetry".into(),
        passed: a == a.transpose(),
        value: defect,
        tolerance: 0.0,
        detail: "A equals its transpose entry by entry".into(),
    }
}

pub fn curl_of_gradient(fx: &Fixture, seed: u64, tol: f64) -> Check {
    let k = fx.system.curl_curl();
    let kf = linalg::frobenius(k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    if !fx.nodal.is_empty() && kf > 0.0 {
        for _ in 0..5 {
            let p = DVector::from_fn(fx.nodal.len(), |_, _| rng.random_range(-1.0..1.0));
            let gp = fx.grad.apply(&p);
            if gp.norm() > 0.0 {
                worst = worst.max(linalg::csr_mul(k, &gp).norm() / (kf * gp.norm()));
            }
        }
    }
    Check::at_most("curl_of_gradient", worst, tol, "max ||K G p|| / (||K||_F ||G p||) over 5 random p")
}

#[derive(Debug, Clone, Serialize)]
pub struct CommutingReport {
    pub tets: usize,
    pub fields: usize,
    pub max_residual: f64,
}

/// Every monomial vector field of degree at most 3 plus random fields, on 50
/// random tetrahedra.
pub fn commuting(seed: u64, tol: f64) -> (CommutingReport, Check) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CommutingReport { tets: 0, fields: 0, max_residual: 0.0 };
    while report.tets < 50 {
        let pts = [(); 4].map(|_| Point3::new(rng.random(), rng.random(), rng.random()));
        let Ok(geo) = TetGeometry::new(pts) else { continue };
        if geo.volume < 1e-3 {
            continue;
        }
        report.tets += 1;
        let mut fields = Vec::new();
        for a in 0..=3u32 {
            for b in 0..=(3 - a) {
                for c in 0..=(3 - a - b) {
                    for axis in 0..3 {
                        let mut comps: [Poly; 3] = Default::default();
                        comps[axis] = Poly::monomial([a, b, c], 1.0);
                        let [x, y, z] = comps;
                        fields.push(PolyField::new(x, y, z));
                    }
                }
            }
        }
        fields.extend((0..=3).map(|d| PolyField::random(d, &mut rng)));
        for f in &fields {
            report.max_residual = report.max_residual.max(commuting_check(&geo, f));
        }
        report.fields += fields.len();
    }
    let detail = format!("{} field/tet pairs on {} tets", report.fields, report.tets);
    let check = Check::at_most("commuting_diagram", report.max_residual, tol, detail);
    (report, check)
}

#[derive(Debug, Clone, Serialize)]
pub struct DualReport {
    pub n: usize,
    pub functionals: usize,
    pub biorthogonality: f64,
    /// `(n, max_i ‖λ_i‖ h^{1/2})` for each mesh compared.
    pub scaled_norms: Vec<(usize, f64)>,
    pub spread: f64,
}

pub fn dual(cfg: &ExperimentConfig, tol: &Tolerances) -> Result<(DualReport, Vec<Check>), CliError> {
    let mesh = build_box_mesh(cfg.n, cfg.side)?;
    let dofs = DofMap::new(&mesh);
    let basis = dual_basis(&mesh, &dofs)?;
    let mut bi: f64 = 0.0;
    for i in 0..basis.len() {
        for j in 0..basis.len() {
            bi = bi.max((basis.pairing(i, j) - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    let mut ns = vec![2, 3, cfg.n];
    ns.sort_unstable();
    ns.dedup();
    let mut scaled_norms = Vec::new();
    for n in ns {
        let m = build_box_mesh(n, cfg.side)?;
        let d = dual_basis(&m, &DofMap::new(&m))?;
        let top = (0..d.len()).map(|i| d.norm(i)).fold(0.0, f64::max);
        scaled_norms.push((n, top * m.mesh_width().sqrt()));
    }
    let hi = scaled_norms.iter().map(|p| p.1).fold(0.0, f64::max);
    let lo = scaled_norms.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let spread = hi / lo;
    let report = DualReport { n: cfg.n, functionals: basis.len(), biorthogonality: bi, scaled_norms, spread };
    let checks = vec![
        Check::at_most("dual_biorthogonality", bi, tol.biorthogonality, "max |<lambda_i, Psi_j> - delta_ij|"),
        Check::at_most(
            "dual_norm_spread",
            spread,
            tol.dual_norm_spread,
            "ratio of largest to smallest max ||lambda_i|| h^(1/2) across meshes",
        ),
    ];
    Ok((report, checks))
}

#[derive(Debug, Clone, Serialize)]
pub struct CaccioppoliEntry {
    pub region: String,
    pub report: Option<CaccioppoliReport>,
    pub error: Option<String>,
}

pub fn caccioppoli(fx: &Fixture, regions: &[&str]) -> Vec<CaccioppoliEntry> {
    let mut out = Vec::new();
    for (name, region) in fx.regions().into_iter().filter(|(n, _)| regions.contains(n)) {
        for variant in [Variant::Curl, Variant::Grad] {
            let result = harmonic_space(&fx.mesh, &fx.system, &fx.nodal, &region.outer(), variant)
                .and_then(|space| caccioppoli_ratio(&fx.mesh, fx.dofs(), &fx.nodal, &space, &region));
            let (report, error) = match result {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            out.push(CaccioppoliEntry { region: name.to_string(), report, error });
        }
    }
    out
}

pub fn caccioppoli_check(entries: &[CaccioppoliEntry], tol: f64) -> Check {
    let mut worst: f64 = 0.0;
    let mut errors = Vec::new();
    for e in entries {
        match (&e.report, &e.error) {
            (Some(r), _) if r.normalized.is_finite() => worst = worst.max(r.normalized),
            (_, Some(msg)) => errors.push(msg.clone()),
            _ => worst = f64::INFINITY,
        }
    }
    let mut check = Check::at_most("caccioppoli", worst, tol, "largest normalized ratio, curl and grad variants");
    if !errors.is_empty() {
        check.passed = false;
        check.detail = errors.join("; ");
    }
    check
}

#[derive(Debug, Clone, Serialize)]
pub struct HelmholtzEntry {
    pub region: String,
    pub edges: usize,
    pub nodes: usize,
    pub pythagoras: f64,
    pub orthogonality: f64,
    pub harmonic_columns: usize,
    pub test_nodes: usize,
    pub gradient_part: f64,
}

/// Helmholtz split of random fields and the gradient part of every local
/// harmonic column, on the `(1+2ε)R` cube of each region and on the whole
/// domain.
pub fn helmholtz(fx: &Fixture, seed: u64, tol: &Tolerances) -> Result<(Vec<HelmholtzEntry>, Vec<Check>), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = fx.dofs().len();
    let mut entries = Vec::new();
    let mut cubes: Vec<(String, Option<Cube>, Vec<usize>)> = fx
        .regions()
        .into_iter()
        .map(|(name, r)| {
            let c = r.scaled(2.0);
            (name.to_string(), Some(c), c.tets_meeting(&fx.mesh))
        })
        .collect();
    cubes.push(("whole".into(), None, (0..fx.mesh.tets().len()).collect()));
    for (name, cube, tets) in cubes {
        let space = RegionNodalSpace::new(&fx.mesh, fx.dofs(), &fx.nodal, &fx.grad, &tets)?;
        let mut entry = HelmholtzEntry {
            region: name,
            edges: space.edges.len(),
            nodes: space.nodes.len(),
            pythagoras: 0.0,
            orthogonality: 0.0,
            harmonic_columns: 0,
            test_nodes: 0,
            gradient_part: 0.0,
        };
        for _ in 0..10 {
            let split = local_helmholtz(&space, &cvec(&mut rng, n));
            entry.pythagoras = entry.pythagoras.max(split.pythagoras);
            entry.orthogonality = entry.orthogonality.max(split.orthogonality);
        }
        if let Some(cube) = cube {
            let hs = harmonic_space(&fx.mesh, &fx.system, &fx.nodal, &cube, Variant::Curl)?;
            for u in hs.local_columns() {
                let c = gradient_part_harmonic_check(&fx.mesh, &fx.nodal, &space, &cube, &u);
                entry.gradient_part = entry.gradient_part.max(c.residual);
                entry.test_nodes = c.tests;
                entry.harmonic_columns += 1;
            }
        }
        entries.push(entry);
    }
    let max = |f: fn(&HelmholtzEntry) -> f64| entries.iter().map(f).fold(0.0, f64::max);
    let tests: Vec<usize> = entries.iter().filter(|e| e.region != "whole").map(|e| e.test_nodes).collect();
    let checks = vec![
        Check::at_most("helmholtz_pythagoras", max(|e| e.pythagoras), tol.pythagoras, "| ||E||^2 - ||z||^2 - ||grad p||^2 | / ||E||^2"),
        Check::at_most("helmholtz_orthogonality", max(|e| e.orthogonality), tol.orthogonality, "max |<z, grad phi_a>| / (||E|| ||grad phi_a||)"),
        Check::at_most(
            "gradient_part_harmonic",
            max(|e| e.gradient_part),
            tol.gradient_part,
            format!("test nodes per region {tests:?}"),
        ),
    ];
    Ok((entries, checks))
}

/// Potentials of random discrete gradients on random boxes, with arbitrary
/// values on the edges outside each box.
pub fn exact_sequence(fx: &Fixture, seed: u64, tol: f64) -> Result<Check, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dofs = fx.dofs();
    let s = fx.mesh.side();
    let mut worst: f64 = 0.0;
    let mut made = 0;
    while made < 10 {
        let cube = Cube::new(
            [rng.random_range(0.0..s), rng.random_range(0.0..s), rng.random_range(0.0..s)],
            rng.random_range(0.3..0.8) * s,
        )?;
        let tets = cube.tets_meeting(&fx.mesh);
        if tets.is_empty() {
            continue;
        }
        let q = cvec(&mut rng, fx.nodal.len());
        let mut v = fx.grad.apply_c(&q);
        let mut inside = vec![false; dofs.len()];
        for d in EdgeGram::new(&fx.mesh, dofs, &tets)?.dofs {
            inside[d] = true;
        }
        for (d, keep) in inside.iter().enumerate() {
            if !keep {
                v[d] = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
        }
        let pot = match exact_sequence_recover(&fx.mesh, dofs, &tets, &v) {
            Ok(p) => p,
            Err(e) => return Ok(Check { name: "exact_sequence".into(), passed: false, value: f64::INFINITY, tolerance: tol, detail: e.to_string() }),
        };
        let value = |vtx: usize| fx.nodal.dof(vtx).map(|k| q[k]).unwrap_or_default();
        let shift = pot.values[0] - value(pot.vertices[0]);
        let scale = q.camax().max(1e-300);
        let mismatch = pot
            .vertices
            .iter()
            .enumerate()
            .map(|(k, vtx)| (pot.values[k] - value(*vtx) - shift).norm() / scale)
            .fold(0.0, f64::max);
        worst = worst.max(pot.residual).max(mismatch);
        made += 1;
    }
    Ok(Check::at_most("exact_sequence", worst, tol, "10 random boxes; relative residual and potential mismatch"))
}

pub fn block_bound(sweep: &Sweep, slack: f64) -> Check {
    let over: Vec<String> = sweep
        .rows
        .iter()
        .filter(|r| r.abs_err > r.bound_value * slack)
        .map(|r| format!("r={}: {:.3e} > {:.3e}", r.r, r.abs_err, r.bound_value))
        .collect();
    let worst = sweep
        .rows
        .iter()
        .map(|r| if r.bound_value > 0.0 { r.abs_err / r.bound_value } else if r.abs_err > 0.0 { f64::INFINITY } else { 0.0 })
        .fold(0.0, f64::max);
    Check {
        name: "block_to_global_bound".into(),
        passed: over.is_empty(),
        value: worst,
        tolerance: slack,
        detail: if over.is_empty() { "global error <= C_sp (depth+1) max sigma_(r+1) at every rank".into() } else { over.join("; ") },
    }
}

/// Transfer identity on the far pairs of the partition, or on the
/// off-diagonal near pairs when the far field is empty. At most 20 pairs.
pub fn transfer(
    fx: &Fixture,
    b_inv: &DMatrix<C64>,
    tree: &ClusterTree,
    partition: &BlockPartition,
    seed: u64,
    tol: f64,
) -> Result<Check, CliError> {
    let solver = DenseSolver::new(&fx.system.stiffness_dense())?;
    let basis = dual_basis(&fx.mesh, fx.dofs())?;
    let (pairs, kind): (Vec<(usize, usize)>, &str) = if partition.far.is_empty() {
        (partition.near.iter().copied().filter(|(t, s)| t != s).collect(), "off-diagonal near")
    } else {
        (partition.far.clone(), "far")
    };
    let mut worst: f64 = 0.0;
    let used = pairs.len().min(20);
    for (k, (t, s)) in pairs.into_iter().take(20).enumerate() {
        let c = transfer_check(&solver, &basis, b_inv, tree, t, s, 5, seed.wrapping_add(k as u64))?;
        worst = worst.max(c.max_defect).max(c.load_defect);
    }
    Ok(Check::at_most("transfer_identity", worst, tol, format!("{used} {kind} pairs, 5 samples each")))
}
