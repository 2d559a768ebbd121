//! Acceptance suite: ten criteria, one PASS/FAIL line each. Runs with a
//! custom harness so the lines are always printed; exits nonzero when any
//! criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use hmx_core::cluster::{build_block_partition, build_cluster_tree, is_admissible};
use hmx_core::fem::{
    assemble_system, commuting_check, discrete_gradient, dual_basis, local_whitney, DofMap, EdgeGram,
    GalerkinSystem, NodalSpace, RegionNodalSpace, TetGeometry,
};
use hmx_core::field::{Poly, PolyField};
use hmx_core::harmonic::{
    caccioppoli_ratio, exact_sequence_recover, gradient_part_harmonic_check, harmonic_space, local_helmholtz,
    BoxRegion, Cube, Variant,
};
use hmx_core::hmatrix::{compress_dense, BlockSvd, PowerOptions};
use hmx_core::inverse::{dense_inverse, rank_sweep, transfer_check, DenseSolver, Sweep, BOUND_SLACK};
use hmx_core::linalg::{self, C64};
use hmx_core::mesh::{build_box_mesh, Mesh};
use nalgebra::{DMatrix, DVector, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SWEEP_RANKS: [usize; 7] = [1, 2, 4, 8, 12, 16, 20];

/// Relative errors of the n=5, η=2, n_leaf=32 sweep from the first oracle
/// run. The far field of that partition is empty, so every error is zero.
const SWEEP_BASELINE: [f64; 7] = [0.0; 7];

/// Normalized Caccioppoli ratios for n = 4, 6, 8 from the first oracle run.
const CACCIOPPOLI_CURL: [f64; 3] = [0.0, 0.575747, 0.266705];
const CACCIOPPOLI_GRAD: [f64; 3] = [0.0, 0.501686, 0.212772];

struct Outcome {
    pass: bool,
    detail: String,
    notes: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into(), notes: Vec::new() }
    }

    fn note(mut self, n: impl Into<String>) -> Self {
        self.notes.push(n.into());
        self
    }
}

struct Problem {
    mesh: Mesh,
    system: GalerkinSystem,
    nodal: NodalSpace,
}

fn problem(n: usize) -> Problem {
    let mesh = build_box_mesh(n, 1.0).unwrap();
    let dofs = DofMap::new(&mesh);
    let system = assemble_system(&mesh, &dofs, C64::new(1.0, 0.0)).unwrap();
    let nodal = NodalSpace::new(&mesh).unwrap();
    Problem { mesh, system, nodal }
}

fn cvec(rng: &mut ChaCha8Rng, n: usize) -> DVector<C64> {
    DVector::from_fn(n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn sweep(p: &Problem, b: &DMatrix<C64>, eta: f64, n_leaf: usize) -> Sweep {
    let tree = build_cluster_tree(&p.mesh, p.system.dofs(), n_leaf).unwrap();
    let partition = build_block_partition(&tree, eta).unwrap();
    rank_sweep(b, &tree, &partition, &SWEEP_RANKS, &PowerOptions::default()).unwrap()
}

fn sweep_summary(s: &Sweep) -> String {
    let errs: Vec<String> = s.rows.iter().map(|r| format!("{:.3e}", r.rel_err)).collect();
    format!("rel errors [{}]", errs.join(", "))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let p = problem(5);
    let b = dense_inverse(&p.system.stiffness_dense()).unwrap();
    let s = sweep(&p, &b, 2.0, 32);
    let errs: Vec<f64> = s.rows.iter().map(|r| r.rel_err).collect();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let (hi, lo) = (errs.iter().copied().fold(0.0, f64::max), errs.iter().copied().fold(f64::INFINITY, f64::min));
    let orders = if lo > 0.0 { (hi / lo).log10() } else { 0.0 };
    let span = lo > 0.0 && orders >= 5.0;
    let rate = s.fit.root_exponential.map(|f| (f.rate, f.residual));
    let positive_rate = matches!(rate, Some((b, _)) if b > 0.0);
    let baseline = errs.iter().zip(SWEEP_BASELINE).all(|(e, base)| (e - base).abs() <= 0.05 * base);
    let elapsed = start.elapsed().as_secs_f64();
    let fast = elapsed < 600.0;
    let fit = match rate {
        Some((b, res)) => format!("b = {b:.4}, residual {res:.3e}"),
        None => format!("no fit ({})", s.fit.notice.clone().unwrap_or_default()),
    };
    let mut out = Outcome::new(
        decreasing && span && positive_rate && baseline && fast,
        format!(
            "{}; strictly decreasing {decreasing}; span {orders:.2} orders (need 5) {span}; root-exponential fit {fit} (need b > 0) {positive_rate}; baseline within 5% {baseline}; {elapsed:.1}s",
            sweep_summary(&s)
        ),
    );
    let tree = build_cluster_tree(&p.mesh, p.system.dofs(), 32).unwrap();
    let partition = build_block_partition(&tree, 2.0).unwrap();
    out = out.note(format!(
        "far blocks {} (C_sp {}, depth {}): with support-containing boxes no cluster pair at h = 0.2 satisfies the admissibility inequality, so B_H = A^-1 at every rank",
        partition.far.len(),
        hmx_core::cluster::sparsity_constant(&partition),
        tree.depth()
    ));
    out = out.note("the abscissa r^(1/4)/ln(r+2) decreases on 1..20, so a decreasing error sequence fits with b < 0");
    let alt = sweep(&p, &b, 4.0, 32);
    let alt_fit = alt.fit.root_exponential.map(|f| f.rate).unwrap_or(f64::NAN);
    let q = alt.fit.exponential.map(|f| f.rate).unwrap_or(f64::NAN);
    out.note(format!(
        "same problem with eta = 4, n_leaf = 32: {}; exponential fit q = {q:.3}; root-exponential b = {alt_fit:.2}",
        sweep_summary(&alt)
    ))
}

fn criterion_2() -> Outcome {
    let p = problem(5);
    let b = dense_inverse(&p.system.stiffness_dense()).unwrap();
    let s = sweep(&p, &b, 2.0, 32);
    let pass = s.rows.iter().all(|r| r.abs_err <= r.bound_value * BOUND_SLACK);
    let worst = s.rows.iter().map(|r| format!("r={}: {:.3e} <= {:.3e}", r.r, r.abs_err, r.bound_value)).collect::<Vec<_>>();
    let mut out = Outcome::new(pass, worst.join("; "));
    for (eta, leaf) in [(2.0, 16), (4.0, 32)] {
        let alt = sweep(&p, &b, eta, leaf);
        let rows: Vec<String> = alt
            .rows
            .iter()
            .map(|r| format!("r={} {}", r.r, if r.within_bound { "ok" } else { "over" }))
            .collect();
        out = out.note(format!(
            "eta = {eta}, n_leaf = {leaf} (C_sp {}, depth {}): {}",
            alt.rows[0].c_sp,
            alt.rows[0].depth,
            rows.join(", ")
        ));
    }
    out.note("rows past every block's rank have bound 0 and a round-off residual; they are the only rows over the bound")
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xec4a);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (m, n) = (rng.random_range(5..=40), rng.random_range(5..=40));
        let d = DMatrix::from_fn(m, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let r = rng.random_range(0..m.min(n));
        let block = BlockSvd::of_matrix(&d).unwrap().truncate(r);
        let err = linalg::spectral_norm(&(&d - block.factors.to_dense()));
        let oracle = linalg::sorted_singular_values(&d)[r];
        worst = worst.max((err - oracle).abs());
    }
    Outcome::new(worst <= 1e-10, format!("max |block error - sigma_(r+1)| = {worst:.3e} over 20 matrices (tol 1e-10)"))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0ff);
    let mut worst: f64 = 0.0;
    let mut tets = 0;
    let mut fields = 0;
    while tets < 50 {
        let pts = [(); 4].map(|_| Point3::new(rng.random(), rng.random(), rng.random()));
        let Ok(geo) = TetGeometry::new(pts) else { continue };
        if geo.volume < 1e-3 {
            continue;
        }
        tets += 1;
        for a in 0..=3u32 {
            for b in 0..=(3 - a) {
                for c in 0..=(3 - a - b) {
                    for axis in 0..3 {
                        let mut comps: [Poly; 3] = Default::default();
                        comps[axis] = Poly::monomial([a, b, c], 1.0);
                        let [x, y, z] = comps;
                        worst = worst.max(commuting_check(&geo, &PolyField::new(x, y, z)));
                        fields += 1;
                    }
                }
            }
        }
        for degree in 0..=3 {
            worst = worst.max(commuting_check(&geo, &PolyField::random(degree, &mut rng)));
            fields += 1;
        }
    }
    Outcome::new(worst <= 1e-12, format!("max residual {worst:.3e} over {fields} field/tet pairs on {tets} tets (tol 1e-12)"))
}

fn criterion_5() -> Outcome {
    let mut bi: f64 = 0.0;
    for n in [2, 3, 4] {
        let mesh = build_box_mesh(n, 1.0).unwrap();
        let dofs = DofMap::new(&mesh);
        let dual = dual_basis(&mesh, &dofs).unwrap();
        for i in 0..dual.len() {
            for j in 0..dual.len() {
                bi = bi.max((dual.pairing(i, j) - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
    }
    let mut scaled = Vec::new();
    for n in [2, 3, 4, 6] {
        let mesh = build_box_mesh(n, 1.0).unwrap();
        let dual = dual_basis(&mesh, &DofMap::new(&mesh)).unwrap();
        let top = (0..dual.len()).map(|i| dual.norm(i)).fold(0.0, f64::max);
        scaled.push(top * mesh.mesh_width().sqrt());
    }
    let spread = scaled.iter().copied().fold(0.0, f64::max) / scaled.iter().copied().fold(f64::INFINITY, f64::min);
    let values: Vec<String> = scaled.iter().map(|v| format!("{v:.4}")).collect();
    Outcome::new(
        bi <= 1e-12 && spread <= 2.0,
        format!("biorthogonality defect {bi:.3e} (tol 1e-12); max ||lambda_i|| h^(1/2) = [{}] for n = 2,3,4,6, spread {spread:.4} (limit 2)", values.join(", ")),
    )
}

fn criterion_6() -> Outcome {
    let region = BoxRegion::interior();
    let mut pass = true;
    let mut parts = Vec::new();
    let mut notes = Vec::new();
    for (variant, frozen) in [(Variant::Curl, CACCIOPPOLI_CURL), (Variant::Grad, CACCIOPPOLI_GRAD)] {
        let bound = frozen.iter().copied().fold(0.0, f64::max);
        let mut values = Vec::new();
        for (k, n) in [4, 6, 8].into_iter().enumerate() {
            let p = problem(n);
            let space = harmonic_space(&p.mesh, &p.system, &p.nodal, &region.outer(), variant).unwrap();
            let rep = caccioppoli_ratio(&p.mesh, p.system.dofs(), &p.nodal, &space, &region).unwrap();
            let v = rep.normalized;
            pass &= (v - frozen[k]).abs() <= 0.25 * frozen[k] && v <= 1.25 * bound && !rep.shifted;
            values.push(format!("{v:.6}"));
            if !rep.hypothesis_holds {
                notes.push(format!("{variant:?} n={n}: h/R = {:.3} violates h/R < eps/4 = {:.3}", rep.h / region.r, region.eps / 4.0));
            }
            if rep.inner_tets == 0 {
                notes.push(format!("{variant:?} n={n}: no tetrahedron lies inside B_R, ratio 0"));
            }
        }
        parts.push(format!("{variant:?} [{}] vs frozen constant {bound:.6} +-25%", values.join(", ")));
    }
    let mut out = Outcome::new(pass, parts.join("; "));
    out.notes = notes;
    out
}

fn criterion_7() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for n in [3, 4] {
        let mut made = 0;
        let p = problem(n);
        let dofs = p.system.dofs();
        let g = discrete_gradient(&p.mesh, dofs, &p.nodal);
        let mut rng = ChaCha8Rng::seed_from_u64(0x7000 + n as u64);
        while made < 10 {
            let cube = Cube::new(
                [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)],
                rng.random_range(0.3..0.8),
            )
            .unwrap();
            let tets = cube.tets_meeting(&p.mesh);
            if tets.is_empty() {
                continue;
            }
            // Gradient on the region, arbitrary outside it.
            let q = cvec(&mut rng, p.nodal.len());
            let mut v = g.apply_c(&q);
            let region_dofs = EdgeGram::new(&p.mesh, dofs, &tets).unwrap().dofs;
            let mut inside = vec![false; dofs.len()];
            region_dofs.iter().for_each(|d| inside[*d] = true);
            for d in 0..dofs.len() {
                if !inside[d] {
                    v[d] = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                }
            }
            let pot = exact_sequence_recover(&p.mesh, dofs, &tets, &v).unwrap();
            let value = |vtx: usize| p.nodal.dof(vtx).map(|k| q[k]).unwrap_or_default();
            let shift = pot.values[0] - value(pot.vertices[0]);
            let potential_err = pot
                .vertices
                .iter()
                .enumerate()
                .map(|(k, vtx)| (pot.values[k] - value(*vtx) - shift).norm())
                .fold(0.0, f64::max)
                / q.camax();
            worst = worst.max(pot.residual).max(potential_err);
            made += 1;
            count += 1;
        }
    }
    Outcome::new(worst <= 1e-10, format!("max relative residual {worst:.3e} over {count} instances on n = 3, 4 (tol 1e-10)"))
}

fn criterion_8() -> Outcome {
    let p = problem(4);
    let dofs = p.system.dofs();
    let g = discrete_gradient(&p.mesh, dofs, &p.nodal);
    let mut rng = ChaCha8Rng::seed_from_u64(0x8000);
    let mut pythagoras: f64 = 0.0;
    let mut orthogonality: f64 = 0.0;
    let mut harmonic: f64 = 0.0;
    let mut columns = 0;
    let mut tests = Vec::new();
    let mut control = f64::INFINITY;
    for region in [BoxRegion::interior(), BoxRegion::boundary_touching()] {
        let cube = region.scaled(2.0);
        let space = RegionNodalSpace::new(&p.mesh, dofs, &p.nodal, &g, &cube.tets_meeting(&p.mesh)).unwrap();
        for _ in 0..10 {
            let split = local_helmholtz(&space, &cvec(&mut rng, dofs.len()));
            pythagoras = pythagoras.max(split.pythagoras);
            orthogonality = orthogonality.max(split.orthogonality);
        }
        let hs = harmonic_space(&p.mesh, &p.system, &p.nodal, &cube, Variant::Curl).unwrap();
        let mut n_tests = 0;
        for u in hs.local_columns() {
            let check = gradient_part_harmonic_check(&p.mesh, &p.nodal, &space, &cube, &u);
            harmonic = harmonic.max(check.residual);
            n_tests = check.tests;
            columns += 1;
        }
        tests.push(n_tests);
        let random = gradient_part_harmonic_check(&p.mesh, &p.nodal, &space, &cube, &cvec(&mut rng, dofs.len()));
        control = control.min(random.residual);
    }
    let whole = RegionNodalSpace::new(&p.mesh, dofs, &p.nodal, &g, &(0..p.mesh.tets().len()).collect::<Vec<_>>()).unwrap();
    let split = local_helmholtz(&whole, &cvec(&mut rng, dofs.len()));
    pythagoras = pythagoras.max(split.pythagoras);
    let pass = pythagoras <= 1e-10 && orthogonality <= 1e-10 && harmonic <= 1e-9 && tests.iter().all(|t| *t > 0);
    Outcome::new(
        pass,
        format!(
            "Pythagoras defect {pythagoras:.3e}, orthogonality {orthogonality:.3e} (tol 1e-10); gradient-part residual {harmonic:.3e} over {columns} harmonic columns (tol 1e-9), test vertices {tests:?} (interior, boundary-touching)"
        ),
    )
    .note(format!("negative control: random fields give residual >= {control:.3e}"))
}

fn criterion_9() -> Outcome {
    let p = problem(4);
    let a = p.system.stiffness_dense();
    let solver = DenseSolver::new(&a).unwrap();
    let b = dense_inverse(&a).unwrap();
    let dual = dual_basis(&p.mesh, p.system.dofs()).unwrap();
    let tree = build_cluster_tree(&p.mesh, p.system.dofs(), 32).unwrap();
    let partition = build_block_partition(&tree, 2.0).unwrap();
    let mut worst: f64 = 0.0;
    for (k, (t, s)) in partition.far.iter().enumerate() {
        let check = transfer_check(&solver, &dual, &b, &tree, *t, *s, 10, k as u64).unwrap();
        worst = worst.max(check.max_defect).max(check.load_defect);
    }
    let stated = partition.far.len();
    // Non-vacuous companions: every off-diagonal near pair at n=4 and every
    // far pair of the n=5 partition with n_leaf 16.
    let mut extra_worst: f64 = 0.0;
    let mut extra = 0;
    for (k, (t, s)) in partition.near.iter().filter(|(t, s)| t != s).enumerate() {
        let check = transfer_check(&solver, &dual, &b, &tree, *t, *s, 10, 1000 + k as u64).unwrap();
        extra_worst = extra_worst.max(check.max_defect).max(check.load_defect);
        extra += 1;
    }
    let p5 = problem(5);
    let a5 = p5.system.stiffness_dense();
    let solver5 = DenseSolver::new(&a5).unwrap();
    let b5 = dense_inverse(&a5).unwrap();
    let dual5 = dual_basis(&p5.mesh, p5.system.dofs()).unwrap();
    let tree5 = build_cluster_tree(&p5.mesh, p5.system.dofs(), 16).unwrap();
    let part5 = build_block_partition(&tree5, 2.0).unwrap();
    for (k, (t, s)) in part5.far.iter().enumerate() {
        assert!(is_admissible(&tree5.cluster(*t).bbox, &tree5.cluster(*s).bbox, 2.0));
        let check = transfer_check(&solver5, &dual5, &b5, &tree5, *t, *s, 10, 5000 + k as u64).unwrap();
        extra_worst = extra_worst.max(check.max_defect).max(check.load_defect);
        extra += 1;
    }
    Outcome::new(
        worst <= 1e-8 && extra_worst <= 1e-8,
        format!(
            "n=4 (eta 2, n_leaf 32): {stated} admissible pairs, max defect {worst:.3e}; companion pairs {extra}, max defect {extra_worst:.3e} (tol 1e-8)"
        ),
    )
    .note("at n = 4 no cluster pair is admissible, so the stated set is empty; the companion pairs exercise the identity")
}

fn criterion_10() -> Outcome {
    let mut symmetric = true;
    let mut kgp: f64 = 0.0;
    let mut tiles = true;
    for n in [2, 3, 4, 5] {
        let mesh = build_box_mesh(n, 1.0).unwrap();
        let dofs = DofMap::new(&mesh);
        for kappa in [C64::new(1.0, 0.0), C64::new(2.5, -0.75)] {
            let sys = assemble_system(&mesh, &dofs, kappa).unwrap();
            let a = sys.stiffness_dense();
            symmetric &= a == a.transpose();
        }
        let sys = assemble_system(&mesh, &dofs, C64::new(1.0, 0.0)).unwrap();
        let nodal = NodalSpace::new(&mesh).unwrap();
        let g = discrete_gradient(&mesh, &dofs, &nodal);
        let kf = sys.curl_curl().values().iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        for _ in 0..5 {
            let p = DVector::from_fn(nodal.len(), |_, _| rng.random_range(-1.0..1.0));
            let gp = g.apply(&p);
            kgp = kgp.max(linalg::csr_mul(sys.curl_curl(), &gp).norm() / (kf * gp.norm()));
        }
        for leaf in [8, 16, 32] {
            let tree = build_cluster_tree(&mesh, &dofs, leaf).unwrap();
            for eta in [1.0, 2.0, 4.0] {
                tiles &= build_block_partition(&tree, eta).unwrap().tiles(&tree);
            }
        }
    }
    let run = || {
        let p = problem(5);
        let b = dense_inverse(&p.system.stiffness_dense()).unwrap();
        let tree = build_cluster_tree(&p.mesh, p.system.dofs(), 16).unwrap();
        let partition = build_block_partition(&tree, 2.0).unwrap();
        let h = compress_dense(&b, &tree, &partition, 4).unwrap();
        let mut bytes = Vec::new();
        h.write_payload(&mut bytes).unwrap();
        let s = rank_sweep(&b, &tree, &partition, &[1, 4], &PowerOptions::default()).unwrap();
        bytes.extend(serde_json::to_vec(&s).unwrap());
        bytes.extend(serde_json::to_vec(&h.manifest()).unwrap());
        bytes.extend(format!("{:?}", local_whitney(p.mesh.tet_points(0), &Point3::new(0.1, 0.1, 0.1)).unwrap()).into_bytes());
        bytes
    };
    let deterministic = run() == run();
    Outcome::new(
        symmetric && kgp <= 1e-12 && tiles && deterministic,
        format!("A == A^T bitwise {symmetric}; max ||K G p|| / (||K||_F ||G p||) = {kgp:.3e} (tol 1e-12); partitions tile {tiles}; reruns byte-identical {deterministic}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("root-exponential approximability", criterion_1),
        ("block-to-global bound", criterion_2),
        ("Eckart-Young oracle equivalence", criterion_3),
        ("commuting diagram", criterion_4),
        ("dual basis", criterion_5),
        ("Caccioppoli constants", criterion_6),
        ("local exact sequence", criterion_7),
        ("Helmholtz orthogonality and harmonic gradient parts", criterion_8),
        ("transfer identity", criterion_9),
        ("structural invariants", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (k, (name, run)) in criteria.iter().enumerate() {
        let id = k + 1;
        if !filter.is_empty() && !filter.iter().any(|f| f == &id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|e| Outcome::new(false, format!("panicked: {:?}", e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())))));
        let status = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {status} {name}: {} [{:.1}s]", outcome.detail, start.elapsed().as_secs_f64());
        for n in &outcome.notes {
            println!("             note: {n}");
        }
        if !outcome.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
