//! Quadrature rules on segments, triangles and tetrahedra.
//!
//! Rules are stored in barycentric coordinates with weights normalised to sum
//! to one; callers scale by the length/area/volume of the cell.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Rule<const D: usize> {
    pub points: Vec<[f64; D]>,
    pub weights: Vec<f64>,
}

pub type SegmentRule = Rule<2>;
pub type TriangleRule = Rule<3>;
pub type TetRule = Rule<4>;

impl<const D: usize> Rule<D> {
    pub fn iter(&self) -> impl Iterator<Item = (&[f64; D], f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

const MAX_POINTS: usize = 64;

/// Gauss-Legendre nodes and weights on `[0, 1]` (weights sum to 1).
pub fn gauss_legendre(m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if m == 0 || m > MAX_POINTS {
        return Err(Error::Quadrature(2 * m));
    }
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let (p, pm1) = if m == 1 { (x, 1.0) } else { (p1, p0) };
            dp = m as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    Ok((nodes, weights))
}

/// Segment rule exact for polynomials of the given degree.
pub fn segment_rule(degree: usize) -> Result<SegmentRule> {
    let (x, w) = gauss_legendre(degree / 2 + 1)?;
    Ok(Rule {
        points: x.iter().map(|t| [1.0 - t, *t]).collect(),
        weights: w,
    })
}

/// Default edge rule: 3-point Gauss, exact to degree 5.
pub fn edge_rule() -> SegmentRule {
    segment_rule(5).expect("3-point Gauss rule")
}

/// Six-point symmetric triangle rule, exact to degree 4.
pub fn triangle_degree4() -> TriangleRule {
    let (a1, b1, w1) = (0.108103018168070, 0.445948490915965, 0.223381589678011);
    let (a2, b2, w2) = (0.816847572980459, 0.091576213509771, 0.109951743655322);
    Rule {
        points: vec![
            [a1, b1, b1],
            [b1, a1, b1],
            [b1, b1, a1],
            [a2, b2, b2],
            [b2, a2, b2],
            [b2, b2, a2],
        ],
        weights: vec![w1, w1, w1, w2, w2, w2],
    }
}

/// Four-point tetrahedron rule, exact to degree 2.
pub fn tet_degree2() -> TetRule {
    let a = 0.585_410_196_624_968_5;
    let b = 0.138_196_601_125_010_5;
    Rule {
        points: vec![[a, b, b, b], [b, a, b, b], [b, b, a, b], [b, b, b, a]],
        weights: vec![0.25; 4],
    }
}

/// Collapsed-coordinate (conical product) triangle rule of arbitrary degree.
pub fn triangle_rule(degree: usize) -> Result<TriangleRule> {
    let m = (degree + 2).div_ceil(2);
    let (x, w) = gauss_legendre(m)?;
    let mut rule = Rule { points: Vec::new(), weights: Vec::new() };
    for (u, wu) in x.iter().zip(&w) {
        for (v, wv) in x.iter().zip(&w) {
            let (s, t) = (*u, (1.0 - u) * v);
            rule.points.push([1.0 - s - t, s, t]);
            rule.weights.push(2.0 * wu * wv * (1.0 - u));
        }
    }
    Ok(rule)
}

/// Collapsed-coordinate (conical product) tetrahedron rule of arbitrary degree.
pub fn tet_rule(degree: usize) -> Result<TetRule> {
    if degree <= 2 {
        return Ok(tet_degree2());
    }
    let m = (degree + 3).div_ceil(2);
    let (x, w) = gauss_legendre(m)?;
    let mut rule = Rule { points: Vec::new(), weights: Vec::new() };
    for (u, wu) in x.iter().zip(&w) {
        for (v, wv) in x.iter().zip(&w) {
            for (s, ws) in x.iter().zip(&w) {
                let px = *u;
                let py = (1.0 - u) * v;
                let pz = (1.0 - u) * (1.0 - v) * s;
                rule.points.push([1.0 - px - py - pz, px, py, pz]);
                rule.weights.push(6.0 * wu * wv * ws * (1.0 - u).powi(2) * (1.0 - v));
            }
        }
    }
    Ok(rule)
}
