//! Vector fields used as interpolation and projection inputs.

use nalgebra::{Point3, Vector3};

pub trait VectorField {
    fn eval(&self, p: &Point3<f64>) -> Vector3<f64>;
}

impl<F> VectorField for F
where
    F: Fn(&Point3<f64>) -> Vector3<f64>,
{
    fn eval(&self, p: &Point3<f64>) -> Vector3<f64> {
        self(p)
    }
}

/// Trivariate polynomial stored as `(exponents, coefficient)` terms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Poly {
    terms: Vec<([u32; 3], f64)>,
}

impl Poly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::monomial([0, 0, 0], c)
    }

    pub fn monomial(exp: [u32; 3], coeff: f64) -> Self {
        let mut p = Self::zero();
        p.add_term(exp, coeff);
        p
    }

    pub fn from_terms(terms: impl IntoIterator<Item = ([u32; 3], f64)>) -> Self {
        let mut p = Self::zero();
        for (e, c) in terms {
            p.add_term(e, c);
        }
        p
    }

    pub fn add_term(&mut self, exp: [u32; 3], coeff: f64) {
        if coeff == 0.0 {
            return;
        }
        match self.terms.iter_mut().find(|(e, _)| *e == exp) {
            Some((_, c)) => *c += coeff,
            None => self.terms.push((exp, coeff)),
        }
    }

    pub fn terms(&self) -> &[([u32; 3], f64)] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|(e, _)| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn eval(&self, p: &Point3<f64>) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * p.x.powi(e[0] as i32) * p.y.powi(e[1] as i32) * p.z.powi(e[2] as i32))
            .sum()
    }

    pub fn derivative(&self, axis: usize) -> Poly {
        let mut out = Poly::zero();
        for (e, c) in &self.terms {
            if e[axis] > 0 {
                let mut d = *e;
                d[axis] -= 1;
                out.add_term(d, c * e[axis] as f64);
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Poly {
        Poly::from_terms(self.terms.iter().map(|(e, c)| (*e, c * s)))
    }

    pub fn plus(&self, other: &Poly) -> Poly {
        Poly::from_terms(self.terms.iter().chain(other.terms.iter()).copied())
    }
}

/// Vector field with polynomial components and exact derivatives.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolyField {
    pub components: [Poly; 3],
}

impl PolyField {
    pub fn new(x: Poly, y: Poly, z: Poly) -> Self {
        Self { components: [x, y, z] }
    }

    pub fn constant(v: Vector3<f64>) -> Self {
        Self::new(Poly::constant(v.x), Poly::constant(v.y), Poly::constant(v.z))
    }

    /// Gradient of a scalar polynomial.
    pub fn gradient(p: &Poly) -> Self {
        Self::new(p.derivative(0), p.derivative(1), p.derivative(2))
    }

    pub fn degree(&self) -> u32 {
        self.components.iter().map(Poly::degree).max().unwrap_or(0)
    }

    pub fn curl(&self) -> PolyField {
        let [u, v, w] = &self.components;
        PolyField::new(
            w.derivative(1).plus(&v.derivative(2).scaled(-1.0)),
            u.derivative(2).plus(&w.derivative(0).scaled(-1.0)),
            v.derivative(0).plus(&u.derivative(1).scaled(-1.0)),
        )
    }

    pub fn divergence(&self) -> Poly {
        let [u, v, w] = &self.components;
        u.derivative(0).plus(&v.derivative(1)).plus(&w.derivative(2))
    }

    /// Random polynomial field of total degree at most `degree`, coefficients in `[-1, 1]`.
    pub fn random<R: rand::Rng + ?Sized>(degree: u32, rng: &mut R) -> Self {
        let mut comps: [Poly; 3] = Default::default();
        for comp in comps.iter_mut() {
            for a in 0..=degree {
                for b in 0..=(degree - a) {
                    for c in 0..=(degree - a - b) {
                        comp.add_term([a, b, c], rng.random_range(-1.0..1.0));
                    }
                }
            }
        }
        PolyField { components: comps }
    }
}

impl VectorField for PolyField {
    fn eval(&self, p: &Point3<f64>) -> Vector3<f64> {
        Vector3::new(
            self.components[0].eval(p),
            self.components[1].eval(p),
            self.components[2].eval(p),
        )
    }
}
