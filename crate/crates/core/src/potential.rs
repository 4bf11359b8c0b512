//! The double-sphere potential F(u) = (|u|²−a²)²(|u|²−b²)²/4 and its derivatives.
//!
//! Everything reduces to the radial function G(s) with s = |u|²,
//! F(u) = G(|u|²), so most coefficients take the modulus ρ (or s) directly.

use nalgebra::DMatrix;

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialParams {
    pub a: f64,
    pub b: f64,
}

impl PotentialParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > a && b.is_finite()) {
            return Err(LabError::InvalidParams(format!("need 0 < a < b, got a={a}, b={b}")));
        }
        Ok(Self { a, b })
    }

    /// G(s) = (s−a²)²(s−b²)²/4.
    pub fn g0(&self, s: f64) -> f64 {
        let (a2, b2) = (self.a * self.a, self.b * self.b);
        0.25 * (s - a2).powi(2) * (s - b2).powi(2)
    }

    /// G′(s) = (s−a²)(s−b²)(2s−a²−b²).
    pub fn g1(&self, s: f64) -> f64 {
        let (a2, b2) = (self.a * self.a, self.b * self.b);
        (s - a2) * (s - b2) * (2.0 * s - a2 - b2)
    }

    /// G″(s) = (2s−a²−b²)² + 2(s−a²)(s−b²).
    pub fn g2(&self, s: f64) -> f64 {
        let (a2, b2) = (self.a * self.a, self.b * self.b);
        (2.0 * s - a2 - b2).powi(2) + 2.0 * (s - a2) * (s - b2)
    }

    /// G‴(s) = 12s − 6(a²+b²).
    pub fn g3(&self, s: f64) -> f64 {
        let (a2, b2) = (self.a * self.a, self.b * self.b);
        12.0 * s - 6.0 * (a2 + b2)
    }

    pub fn f_value(&self, u: &[f64]) -> f64 {
        self.g0(norm2(u))
    }

    pub fn f_grad(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.f_grad_into(u, &mut out);
        out
    }

    /// f(u) written into `out`; allocation-free for the time steppers.
    pub fn f_grad_into(&self, u: &[f64], out: &mut [f64]) {
        let c = self.g1(norm2(u));
        for (o, ui) in out.iter_mut().zip(u) {
            *o = c * ui;
        }
    }

    /// Df(u₀) = G′·I + 2G″·u₀⊗u₀.
    pub fn df(&self, u0: &[f64]) -> DMatrix<f64> {
        let n = u0.len();
        let s = norm2(u0);
        let (c1, c2) = (self.g1(s), 2.0 * self.g2(s));
        DMatrix::from_fn(n, n, |i, j| {
            let id = if i == j { c1 } else { 0.0 };
            id + c2 * (u0[i] * u0[j])
        })
    }

    /// Second-order Taylor term f⁽¹⁾(v₀, v₁) of f(v₀ + εv₁).
    pub fn f_second_order(&self, v0: &[f64], v1: &[f64]) -> Vec<f64> {
        let s = norm2(v0);
        let g2 = self.g2(s);
        let d01 = dot(v0, v1);
        let d11 = norm2(v1);
        let (a2, b2) = (self.a * self.a, self.b * self.b);
        let cubic = 12.0 * d01 * d01 * (2.0 * s - a2 - b2);
        v0.iter()
            .zip(v1)
            .map(|(x0, x1)| 2.0 * d01 * g2 * x1 + d11 * g2 * x0 + cubic * x0)
            .collect()
    }

    /// Coefficient along u₀ of the linearization: G′ + 2G″ρ².
    pub fn f_a(&self, rho: f64) -> f64 {
        let s = rho * rho;
        self.g1(s) + 2.0 * self.g2(s) * s
    }

    /// Transverse coefficient: G′(ρ²).
    pub fn f_b(&self, rho: f64) -> f64 {
        self.g1(rho * rho)
    }

    /// dF_A/dρ.
    pub fn f_c(&self, rho: f64) -> f64 {
        let s = rho * rho;
        let (a2, b2) = (self.a * self.a, self.b * self.b);
        let m = 2.0 * s - a2 - b2;
        6.0 * rho * (m * m + 4.0 * m * s + 2.0 * (s - a2) * (s - b2))
    }

    /// dF_B/dρ = 2ρ G″(ρ²).
    pub fn f_d(&self, rho: f64) -> f64 {
        2.0 * rho * self.g2(rho * rho)
    }

    /// Scalar nonlinearity of the profile equation, ρ″ = f₁(ρ).
    pub fn f1(&self, rho: f64) -> f64 {
        self.g1(rho * rho) * rho
    }
}

pub fn norm2(u: &[f64]) -> f64 {
    u.iter().map(|x| x * x).sum()
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> PotentialParams {
        PotentialParams::new(1.0, 2.0).unwrap()
    }

    #[test]
    fn wells_and_midpoint() {
        let p = p();
        assert_eq!(p.f_value(&[1.0, 0.0]), 0.0);
        assert_eq!(p.f_value(&[0.0, 2.0]), 0.0);
        assert!((p.f_value(&[1.5, 0.0]) - 1.5625 * 3.0625 / 4.0).abs() < 1e-15);
        assert!(p.f_grad(&[(2.5f64).sqrt(), 0.0])[0].abs() < 1e-14);
    }

    #[test]
    fn df_at_origin() {
        let d = p().df(&[0.0, 0.0, 0.0]);
        for i in 0..3 {
            assert!((d[(i, i)] + 4.0 * 5.0).abs() < 1e-14);
        }
    }

    #[test]
    fn well_coefficients() {
        let p = p();
        assert_eq!(p.f_a(1.0), 18.0);
        assert_eq!(p.f_a(2.0), 72.0);
        assert_eq!(p.f_b(1.0), 0.0);
        assert_eq!(p.f_b(2.0), 0.0);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(PotentialParams::new(2.0, 1.0).is_err());
        assert!(PotentialParams::new(0.0, 1.0).is_err());
    }
}
