use hmx_core::cluster::{build_block_partition, build_cluster_tree};
use hmx_core::fem::{assemble_system, DofMap};
use hmx_core::hmatrix::compress_dense;
use hmx_core::inverse::{dense_inverse, galerkin_stability};
use hmx_core::mesh::build_box_mesh;
use hmx_core::C64;
use nalgebra::{Point3, Vector3};
use std::f64::consts::PI;

fn source(p: &Point3<f64>) -> Vector3<f64> {
    Vector3::new((PI * p.y).sin(), p.x * (PI * p.z).sin(), (PI * p.x).cos())
}

#[test]
fn solution_norm_stays_bounded_under_refinement() {
    let mut ratios = Vec::new();
    for n in [3, 4, 6, 8] {
        let mesh = build_box_mesh(n, 1.0).unwrap();
        let dofs = DofMap::new(&mesh);
        let system = assemble_system(&mesh, &dofs, C64::new(1.0, 0.0)).unwrap();
        let report = galerkin_stability(&mesh, &system, &source, 6).unwrap();
        assert!(report.source_norm > 0.0);
        ratios.push(report.ratio);
    }
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(hi < 1.0, "{ratios:?}");
    assert!(hi / lo < 1.2, "{ratios:?}");
}

#[test]
fn far_field_storage_is_within_the_block_bound() {
    for (n, n_leaf, r) in [(4, 32, 4), (5, 16, 4), (5, 16, 8)] {
        let mesh = build_box_mesh(n, 1.0).unwrap();
        let dofs = DofMap::new(&mesh);
        let system = assemble_system(&mesh, &dofs, C64::new(1.0, 0.0)).unwrap();
        let b = dense_inverse(&system.stiffness_dense()).unwrap();
        let tree = build_cluster_tree(&mesh, &dofs, n_leaf).unwrap();
        let partition = build_block_partition(&tree, 2.0).unwrap();
        let stats = compress_dense(&b, &tree, &partition, r).unwrap().storage_stats();
        assert!(stats.far_scalars <= 2 * stats.bound, "n={n}: {stats:?}");
        assert_eq!(stats.far_scalars + stats.near_scalars, stats.scalars);
        if partition.far.is_empty() {
            assert_eq!(stats.near_scalars, dofs.len() * dofs.len());
        }
    }
}
