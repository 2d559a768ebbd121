//! Lowest-order Nédélec (Whitney) edge functions on a single tetrahedron.

use nalgebra::{Matrix3, Matrix6, Point3, Vector3};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, LOCAL_EDGES, LOCAL_FACES};
use crate::quadrature;

/// Affine geometry of one tetrahedron: vertices, barycentric gradients, volume.
#[derive(Debug, Clone, Copy)]
pub struct TetGeometry {
    pub points: [Point3<f64>; 4],
    pub grads: [Vector3<f64>; 4],
    pub volume: f64,
}

impl TetGeometry {
    pub fn new(points: [Point3<f64>; 4]) -> Result<Self> {
        let jac = Matrix3::from_columns(&[
            points[1] - points[0],
            points[2] - points[0],
            points[3] - points[0],
        ]);
        let det = jac.determinant();
        let diam = LOCAL_EDGES
            .iter()
            .map(|[a, b]| (points[*a] - points[*b]).norm())
            .fold(0.0, f64::max);
        if !(det.abs() > 1e-12 * diam.powi(3)) {
            return Err(Error::DegenerateTet(usize::MAX));
        }
        let inv = jac.try_inverse().ok_or(Error::DegenerateTet(usize::MAX))?;
        let g1 = inv.row(0).transpose();
        let g2 = inv.row(1).transpose();
        let g3 = inv.row(2).transpose();
        Ok(Self {
            points,
            grads: [-(g1 + g2 + g3), g1, g2, g3],
            volume: det.abs() / 6.0,
        })
    }

    pub fn of_mesh(mesh: &Mesh, t: usize) -> Result<Self> {
        Self::new(mesh.tet_points(t)).map_err(|_| Error::DegenerateTet(t))
    }

    pub fn barycentric(&self, p: &Point3<f64>) -> [f64; 4] {
        let d = p - self.points[0];
        let l1 = self.grads[1].dot(&d);
        let l2 = self.grads[2].dot(&d);
        let l3 = self.grads[3].dot(&d);
        [1.0 - l1 - l2 - l3, l1, l2, l3]
    }

    pub fn point(&self, bary: &[f64; 4]) -> Point3<f64> {
        let mut v = Vector3::zeros();
        for k in 0..4 {
            v += self.points[k].coords * bary[k];
        }
        Point3::from(v)
    }

    /// Whitney functions in local edge direction, evaluated at barycentric coordinates.
    pub fn whitney_at(&self, bary: &[f64; 4]) -> [Vector3<f64>; 6] {
        LOCAL_EDGES.map(|[a, b]| self.grads[b] * bary[a] - self.grads[a] * bary[b])
    }

    /// Constant curls `2 ∇λ_a × ∇λ_b` of the local Whitney functions.
    pub fn whitney_curls(&self) -> [Vector3<f64>; 6] {
        LOCAL_EDGES.map(|[a, b]| self.grads[a].cross(&self.grads[b]) * 2.0)
    }

    pub fn edge_vector(&self, local_edge: usize) -> Vector3<f64> {
        let [a, b] = LOCAL_EDGES[local_edge];
        self.points[b] - self.points[a]
    }

    /// Outward unit normal and area of local face `f` (opposite vertex `f`).
    pub fn face_normal_area(&self, f: usize) -> (Vector3<f64>, f64) {
        let [a, b, c] = LOCAL_FACES[f];
        let cross = (self.points[b] - self.points[a]).cross(&(self.points[c] - self.points[a]));
        let area = 0.5 * cross.norm();
        let mut normal = cross.normalize();
        if normal.dot(&(self.points[a] - self.points[f])) < 0.0 {
            normal = -normal;
        }
        (normal, area)
    }

    /// Local mass matrix of the Whitney functions in local direction, by the
    /// four-point degree-2 rule (exact for the quadratic integrand).
    pub fn mass_matrix(&self) -> Matrix6<f64> {
        let rule = quadrature::tet_degree2();
        let mut m = Matrix6::zeros();
        for (bary, w) in rule.iter() {
            let psi = self.whitney_at(bary);
            for i in 0..6 {
                for j in i..6 {
                    m[(i, j)] += w * self.volume * psi[i].dot(&psi[j]);
                }
            }
        }
        mirror_upper(&mut m);
        m
    }

    /// Local curl-curl matrix (constant integrand, exact).
    pub fn curl_matrix(&self) -> Matrix6<f64> {
        let curls = self.whitney_curls();
        let mut k = Matrix6::zeros();
        for i in 0..6 {
            for j in i..6 {
                k[(i, j)] = self.volume * curls[i].dot(&curls[j]);
            }
        }
        mirror_upper(&mut k);
        k
    }
}

fn mirror_upper(m: &mut Matrix6<f64>) {
    for i in 0..6 {
        for j in 0..i {
            m[(i, j)] = m[(j, i)];
        }
    }
}

/// Values and curls of the six local Whitney functions at `point`.
pub fn local_whitney(points: [Point3<f64>; 4], point: &Point3<f64>) -> Result<([Vector3<f64>; 6], [Vector3<f64>; 6])> {
    let geo = TetGeometry::new(points)?;
    Ok((geo.whitney_at(&geo.barycentric(point)), geo.whitney_curls()))
}

/// Applies the global orientation signs of a mesh tetrahedron to a local matrix.
pub fn orient(m: &Matrix6<f64>, signs: &[f64; 6]) -> Matrix6<f64> {
    Matrix6::from_fn(|i, j| signs[i] * signs[j] * m[(i, j)])
}

pub fn tet_signs(mesh: &Mesh, t: usize) -> [f64; 6] {
    mesh.tet_edges()[t].map(|(_, s)| s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> TetGeometry {
        TetGeometry::new([
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ])
        .unwrap()
    }

    fn skewed() -> TetGeometry {
        TetGeometry::new([
            Point3::new(0.1, -0.2, 0.3),
            Point3::new(1.3, 0.1, 0.2),
            Point3::new(0.4, 0.9, -0.1),
            Point3::new(0.2, 0.3, 1.1),
        ])
        .unwrap()
    }

    #[test]
    fn value_at_first_vertex_is_gradient() {
        let geo = reference();
        let (vals, _) = local_whitney(geo.points, &geo.points[0]).unwrap();
        assert!((vals[0] - geo.grads[1]).norm() < 1e-15);
    }

    #[test]
    fn degenerate_tet_rejected() {
        let flat = [
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
        ];
        assert!(TetGeometry::new(flat).is_err());
    }

    // oracle: Gauss quadrature of Ψ_e · t along each edge, order 5
    #[test]
    fn tangential_moments_are_kronecker() {
        let rule = quadrature::segment_rule(5).unwrap();
        for geo in [reference(), skewed()] {
            for (f, [a, b]) in LOCAL_EDGES.iter().enumerate() {
                let t = geo.points[*b] - geo.points[*a];
                for e in 0..6 {
                    let integral: f64 = rule
                        .iter()
                        .map(|(s, w)| {
                            let p = Point3::from(geo.points[*a].coords * s[0] + geo.points[*b].coords * s[1]);
                            let psi = geo.whitney_at(&geo.barycentric(&p));
                            w * psi[e].dot(&t)
                        })
                        .sum();
                    let expected = if e == f { 1.0 } else { 0.0 };
                    assert!((integral - expected).abs() < 1e-13, "edge {f} fn {e}: {integral}");
                }
            }
        }
    }

    #[test]
    fn mass_matrix_matches_closed_form() {
        // ∫ λ_i λ_j = |T| (1 + δ_ij) / 20
        let geo = skewed();
        let m = geo.mass_matrix();
        let int_ll = |i: usize, j: usize| geo.volume * if i == j { 0.1 } else { 0.05 };
        for (r, [a, b]) in LOCAL_EDGES.iter().enumerate() {
            for (c, [p, q]) in LOCAL_EDGES.iter().enumerate() {
                let g = &geo.grads;
                let exact = int_ll(*a, *p) * g[*b].dot(&g[*q]) - int_ll(*a, *q) * g[*b].dot(&g[*p])
                    - int_ll(*b, *p) * g[*a].dot(&g[*q])
                    + int_ll(*b, *q) * g[*a].dot(&g[*p]);
                assert!((m[(r, c)] - exact).abs() < 1e-13, "{r},{c}");
            }
        }
        assert!(m.cholesky().is_some());
    }

    #[test]
    fn curl_matches_finite_difference() {
        let geo = skewed();
        let curls = geo.whitney_curls();
        let p = geo.point(&[0.25, 0.25, 0.3, 0.2]);
        let step = 1e-5;
        for e in 0..6 {
            let f = |q: Point3<f64>| geo.whitney_at(&geo.barycentric(&q))[e];
            let d = |axis: usize| {
                let mut dp = Vector3::zeros();
                dp[axis] = step;
                (f(p + dp) - f(p - dp)) / (2.0 * step)
            };
            let (dx, dy, dz) = (d(0), d(1), d(2));
            let fd = Vector3::new(dy.z - dz.y, dz.x - dx.z, dx.y - dy.x);
            assert!((fd - curls[e]).norm() < 1e-8);
        }
    }
}
