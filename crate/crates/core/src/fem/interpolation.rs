//! Elementwise canonical interpolants: Nédélec (tangential edge moments) and
//! lowest-order Raviart–Thomas (normal face fluxes).

use nalgebra::{Point3, Vector3};

use super::whitney::TetGeometry;
use crate::error::Result;
use crate::field::{PolyField, VectorField};
use crate::mesh::{LOCAL_EDGES, LOCAL_FACES};
use crate::quadrature::{self, SegmentRule, TriangleRule};

/// Edge moments `∫_e U·τ ds` in local edge direction, 3-point Gauss (exact to degree 5).
pub fn nedelec_interpolant(geo: &TetGeometry, field: &impl VectorField) -> [f64; 6] {
    edge_moments(geo, field, &quadrature::edge_rule())
}

/// Edge moments with a rule exact to `degree`.
pub fn nedelec_interpolant_with(geo: &TetGeometry, field: &impl VectorField, degree: usize) -> Result<[f64; 6]> {
    Ok(edge_moments(geo, field, &quadrature::segment_rule(degree)?))
}

fn edge_moments(geo: &TetGeometry, field: &impl VectorField, rule: &SegmentRule) -> [f64; 6] {
    let mut out = [0.0; 6];
    for (l, [a, b]) in LOCAL_EDGES.iter().enumerate() {
        let t = geo.points[*b] - geo.points[*a];
        out[l] = rule
            .iter()
            .map(|(s, w)| {
                let p = Point3::from(geo.points[*a].coords * s[0] + geo.points[*b].coords * s[1]);
                w * field.eval(&p).dot(&t)
            })
            .sum();
    }
    out
}

/// Outward face fluxes `∫_f U·ν dA`, six-point rule exact to degree 4.
pub fn rt_face_interpolant(geo: &TetGeometry, field: &impl VectorField) -> [f64; 4] {
    face_fluxes(geo, field, &quadrature::triangle_degree4())
}

fn face_fluxes(geo: &TetGeometry, field: &impl VectorField, rule: &TriangleRule) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (f, verts) in LOCAL_FACES.iter().enumerate() {
        let (normal, area) = geo.face_normal_area(f);
        out[f] = rule
            .iter()
            .map(|(s, w)| {
                let p = Point3::from(
                    geo.points[verts[0]].coords * s[0]
                        + geo.points[verts[1]].coords * s[1]
                        + geo.points[verts[2]].coords * s[2],
                );
                w * area * field.eval(&p).dot(&normal)
            })
            .sum();
    }
    out
}

/// Evaluates `Σ c_e ψ_e` (local edge direction) at barycentric coordinates.
pub fn whitney_interpolant_eval(geo: &TetGeometry, coeffs: &[f64; 6], bary: &[f64; 4]) -> Vector3<f64> {
    geo.whitney_at(bary)
        .iter()
        .zip(coeffs)
        .map(|(psi, c)| psi * *c)
        .sum()
}

/// Largest face-flux mismatch between `curl(r_T U)` and the Raviart–Thomas
/// interpolant of `curl U`. Stokes' theorem makes both equal to the
/// circulation of `U` around the face.
pub fn commuting_check(geo: &TetGeometry, field: &PolyField) -> f64 {
    let coeffs = nedelec_interpolant(geo, field);
    let curls = geo.whitney_curls();
    let curl_r: Vector3<f64> = curls.iter().zip(&coeffs).map(|(c, k)| c * *k).sum();
    let rhs = rt_face_interpolant(geo, &field.curl());
    (0..4)
        .map(|f| {
            let (normal, area) = geo.face_normal_area(f);
            (curl_r.dot(&normal) * area - rhs[f]).abs()
        })
        .fold(0.0, f64::max)
}
