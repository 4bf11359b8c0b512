//! Heteroclinic profile ρ₀ connecting the wells a and b, the interpolation
//! weight η₁ and the derived constants.
//!
//! ρ₀ is only known through the implicit relation
//!   c₀ + √2·ab(b²−a²)·z = b ln((ρ−a)/(ρ+a)) − a ln((b−ρ)/(b+ρ)).
//! The solver works in the logarithm of the distance to the nearer well, so the
//! exponentially small gaps b−ρ₀ and ρ₀−a keep full relative precision far
//! into the tails even though ρ₀ itself rounds to a or b.

use std::path::Path;

use crate::error::{LabError, Result};
use crate::numerics::{cumulative_simpson, gauss_legendre_unit, linear_fit, simpson};
use crate::potential::PotentialParams;

const SQRT2: f64 = std::f64::consts::SQRT_2;
const BISECT_WIDTH: f64 = 1e-8;
const MAX_BRACKET_STEPS: usize = 200;
const MAX_NEWTON: usize = 5;
/// Beyond this |z| the tail asymptotics are exact to machine precision.
const SAFE_Z: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileParams {
    pub a: f64,
    pub b: f64,
    pub c0: f64,
    pub alpha: f64,
}

impl ProfileParams {
    /// Wells a < b with c₀ = 0 and α at 99% of its admissible maximum.
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let mut p = Self { a, b, c0: 0.0, alpha: 0.0 };
        if !(a > 0.0 && b > a && b.is_finite()) {
            return Err(LabError::InvalidParams(format!("need 0 < a < b, got a={a}, b={b}")));
        }
        p.alpha = 0.99 * p.alpha_max();
        Ok(p)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        self.alpha = alpha;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b > self.a && self.b.is_finite()) {
            return Err(LabError::InvalidParams(format!(
                "need 0 < a < b, got a={}, b={}",
                self.a, self.b
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < self.alpha_max()) {
            return Err(LabError::InvalidParams(format!(
                "alpha {} outside (0, {})",
                self.alpha,
                self.alpha_max()
            )));
        }
        if !self.c0.is_finite() {
            return Err(LabError::InvalidParams("c0 must be finite".into()));
        }
        Ok(())
    }

    /// min{√2(b²−a²)b, √2(b²−a²)a}.
    pub fn alpha_max(&self) -> f64 {
        self.rate_minus().min(self.rate_plus())
    }

    /// Exponential rate at which b²−ρ₀² vanishes as z → +∞.
    pub fn rate_plus(&self) -> f64 {
        SQRT2 * self.b * (self.b * self.b - self.a * self.a)
    }

    /// Exponential rate at which ρ₀²−a² vanishes as z → −∞.
    pub fn rate_minus(&self) -> f64 {
        SQRT2 * self.a * (self.b * self.b - self.a * self.a)
    }

    pub fn potential(&self) -> PotentialParams {
        PotentialParams { a: self.a, b: self.b }
    }

    fn slope(&self) -> f64 {
        SQRT2 * self.a * self.b * (self.b * self.b - self.a * self.a)
    }

    /// ∫(ρ₀′)² dz in closed form.
    pub fn energy_constant_closed(&self) -> f64 {
        let (a, b) = (self.a, self.b);
        SQRT2 / 15.0
            * (b - a)
            * (b.powi(4) + a.powi(4) + b.powi(3) * a + a.powi(3) * b - 4.0 * a * a * b * b)
    }
}

/// A profile value carried together with both well gaps and their logarithms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub rho: f64,
    /// ρ − a
    pub lower_gap: f64,
    /// b − ρ
    pub upper_gap: f64,
    pub ln_lower_gap: f64,
    pub ln_upper_gap: f64,
}

impl ProfilePoint {
    fn from_upper(p: &ProfileParams, t: f64) -> Self {
        let gap = t.exp();
        let lower = (p.b - p.a) - gap;
        Self {
            rho: p.b - gap,
            lower_gap: lower,
            upper_gap: gap,
            ln_lower_gap: lower.ln(),
            ln_upper_gap: t,
        }
    }

    fn from_lower(p: &ProfileParams, t: f64) -> Self {
        let gap = t.exp();
        let upper = (p.b - p.a) - gap;
        Self {
            rho: p.a + gap,
            lower_gap: gap,
            upper_gap: upper,
            ln_lower_gap: t,
            ln_upper_gap: upper.ln(),
        }
    }

    fn well(p: &ProfileParams, upper: bool) -> Self {
        let d = p.b - p.a;
        if upper {
            Self {
                rho: p.b,
                lower_gap: d,
                upper_gap: 0.0,
                ln_lower_gap: d.ln(),
                ln_upper_gap: f64::NEG_INFINITY,
            }
        } else {
            Self {
                rho: p.a,
                lower_gap: 0.0,
                upper_gap: d,
                ln_lower_gap: f64::NEG_INFINITY,
                ln_upper_gap: d.ln(),
            }
        }
    }

    /// ρ₀′ = (√2/2)(ρ²−a²)(b²−ρ²), evaluated through the gaps.
    pub fn derivative(&self, p: &ProfileParams) -> f64 {
        0.5 * SQRT2 * self.lower_gap * (self.rho + p.a) * self.upper_gap * (p.b + self.rho)
    }

    /// ρ₀″ = (ρ²−a²)(ρ²−b²)(2ρ²−a²−b²)ρ.
    pub fn second_derivative(&self, p: &ProfileParams) -> f64 {
        let s = self.rho * self.rho;
        -self.lower_gap
            * (self.rho + p.a)
            * self.upper_gap
            * (p.b + self.rho)
            * (2.0 * s - p.a * p.a - p.b * p.b)
            * self.rho
    }

    /// ρ₀‴ = ρ₀′·f_A(ρ₀).
    pub fn third_derivative(&self, p: &ProfileParams) -> f64 {
        self.derivative(p) * p.potential().f_a(self.rho)
    }
}

/// Residual of the implicit relation in log-gap form; returns (value, d/dt).
fn relation_upper(p: &ProfileParams, t: f64, rhs: f64) -> (f64, f64) {
    let (a, b) = (p.a, p.b);
    let gap = t.exp();
    let rho = b - gap;
    let lower = (b - a) - gap;
    let val = b * (lower / (rho + a)).ln() - a * (t - (b + rho).ln()) - rhs;
    let der = -2.0 * a * b * (b * b - a * a) / (lower * (rho + a) * (b + rho));
    (val, der)
}

fn relation_lower(p: &ProfileParams, t: f64, rhs: f64) -> (f64, f64) {
    let (a, b) = (p.a, p.b);
    let gap = t.exp();
    let rho = a + gap;
    let upper = (b - a) - gap;
    let val = b * (t - (rho + a).ln()) - a * (upper / (b + rho)).ln() - rhs;
    let der = 2.0 * a * b * (b * b - a * a) / ((rho + a) * upper * (b + rho));
    (val, der)
}

/// Solve the implicit relation at z. Bisection on the log gap to width 1e-8,
/// then Newton polishing to |residual| ≤ 1e-12·max(1, |rhs|).
pub fn profile_point(z: f64, p: &ProfileParams) -> Result<ProfilePoint> {
    if z.is_nan() {
        return Err(LabError::SolverFailure { z, lo: f64::NAN, hi: f64::NAN });
    }
    if z == f64::INFINITY {
        return Ok(ProfilePoint::well(p, true));
    }
    if z == f64::NEG_INFINITY {
        return Ok(ProfilePoint::well(p, false));
    }
    let (a, b) = (p.a, p.b);
    let rhs = p.c0 + p.slope() * z;
    let mid = 0.5 * (a + b);
    let t_top = (0.5 * (b - a)).ln();
    let phi_mid = b * ((mid - a) / (mid + a)).ln() - a * ((b - mid) / (b + mid)).ln() - rhs;
    let upper = phi_mid <= 0.0;
    let ratio = ((b - a) / (b + a)).ln();

    if z.abs() > SAFE_Z {
        // leading-order tail; the correction is below round-off here
        return Ok(if upper {
            let t = (2.0 * b).ln() - (rhs - b * ratio) / a;
            ProfilePoint::from_upper(p, t)
        } else {
            let t = (2.0 * a).ln() + (rhs + a * ratio) / b;
            ProfilePoint::from_lower(p, t)
        });
    }

    // g(t) increases with t after the sign flip below, so the same bracketing
    // logic covers both branches
    let sign = if upper { -1.0 } else { 1.0 };
    let eval = |t: f64| -> (f64, f64) {
        let (v, d) = if upper { relation_upper(p, t, rhs) } else { relation_lower(p, t, rhs) };
        (sign * v, sign * d)
    };
    let guess = if upper {
        (2.0 * b).ln() - (rhs - b * ratio) / a
    } else {
        (2.0 * a).ln() + (rhs + a * ratio) / b
    };
    let mut hi = (guess + 1.0).min(t_top);
    if eval(hi).0 < 0.0 {
        hi = t_top;
    }
    let mut lo = (guess - 1.0).min(hi - 1.0);
    let mut step = 1.0;
    let mut iters = 0;
    while eval(lo).0 > 0.0 {
        hi = lo;
        step *= 2.0;
        lo -= step;
        iters += 1;
        if iters > MAX_BRACKET_STEPS {
            return Err(LabError::SolverFailure { z, lo, hi });
        }
    }
    iters = 0;
    while hi - lo > BISECT_WIDTH {
        let m = 0.5 * (lo + hi);
        if eval(m).0 > 0.0 {
            hi = m;
        } else {
            lo = m;
        }
        iters += 1;
        if iters > MAX_BRACKET_STEPS {
            return Err(LabError::SolverFailure { z, lo, hi });
        }
    }
    let tol = 1e-12 * rhs.abs().max(1.0);
    let mut t = 0.5 * (lo + hi);
    for _ in 0..=MAX_NEWTON {
        let (v, d) = eval(t);
        if v.abs() <= tol {
            return Ok(if upper {
                ProfilePoint::from_upper(p, t)
            } else {
                ProfilePoint::from_lower(p, t)
            });
        }
        let next = t - v / d;
        // a Newton step that leaves the last bracket falls back to its midpoint
        t = if next > lo - 1e-8 && next < hi + 1e-8 { next } else { 0.5 * (lo + hi) };
    }
    Err(LabError::SolverFailure { z, lo, hi })
}

pub fn rho0_at(z: f64, p: &ProfileParams) -> Result<f64> {
    Ok(profile_point(z, p)?.rho)
}

pub fn rho0_prime_at(z: f64, p: &ProfileParams) -> Result<f64> {
    Ok(profile_point(z, p)?.derivative(p))
}

/// Analytic evaluator for ρ₀ and for η₁ through the closed-form
/// antiderivative of ρ₀⁻².
#[derive(Debug, Clone)]
pub struct Profile {
    pub params: ProfileParams,
    center: ProfilePoint,
    h_center: f64,
    gl_nodes: Vec<f64>,
    gl_weights: Vec<f64>,
}

/// Below this |z| the mean F(z) is computed as ∫₀¹ρ₀(sz)⁻²ds by Gauss-Legendre
/// to avoid the 0/0 cancellation of the closed form.
const SMALL_Z: f64 = 0.25;

impl Profile {
    pub fn new(params: ProfileParams) -> Result<Self> {
        params.validate()?;
        let center = profile_point(0.0, &params)?;
        let (gl_nodes, gl_weights) = gauss_legendre_unit(20);
        let mut out = Self { params, center, h_center: 0.0, gl_nodes, gl_weights };
        out.h_center = out.h_of(&center);
        Ok(out)
    }

    pub fn point(&self, z: f64) -> Result<ProfilePoint> {
        profile_point(z, &self.params)
    }

    pub fn center(&self) -> ProfilePoint {
        self.center
    }

    /// Antiderivative H of ρ⁻²/ρ₀′ with respect to ρ, so dH(ρ₀(z))/dz = ρ₀⁻².
    fn h_of(&self, pt: &ProfilePoint) -> f64 {
        let (a, b) = (self.params.a, self.params.b);
        let d = b * b - a * a;
        SQRT2
            * (1.0 / (a * a * b * b * pt.rho)
                + (pt.ln_lower_gap - (pt.rho + a).ln()) / (2.0 * a.powi(3) * d)
                + ((b + pt.rho).ln() - pt.ln_upper_gap) / (2.0 * b.powi(3) * d))
    }

    /// I(z) = ∫₀ᶻ ρ₀⁻².
    pub fn integral_inv_sq(&self, z: f64) -> Result<f64> {
        if z.abs() < SMALL_Z {
            return Ok(z * self.mean_inv_sq_small(z)?.0);
        }
        Ok(self.h_of(&self.point(z)?) - self.h_center)
    }

    fn mean_inv_sq_small(&self, z: f64) -> Result<(f64, f64, f64)> {
        let p = &self.params;
        let (mut f0, mut f1, mut f2) = (0.0, 0.0, 0.0);
        for (s, w) in self.gl_nodes.iter().zip(&self.gl_weights) {
            let pt = self.point(s * z)?;
            let r = pt.rho;
            let r1 = pt.derivative(p);
            let r2 = pt.second_derivative(p);
            let g = 1.0 / (r * r);
            let g1 = -2.0 * r1 / r.powi(3);
            let g2 = -2.0 * r2 / r.powi(3) + 6.0 * r1 * r1 / r.powi(4);
            f0 += w * g;
            f1 += w * s * g1;
            f2 += w * s * s * g2;
        }
        Ok((f0, f1, f2))
    }

    /// F(z) = I(z)/z and its first two derivatives.
    pub fn mean_inv_sq(&self, z: f64) -> Result<(f64, f64, f64)> {
        let (a, b) = (self.params.a, self.params.b);
        if z == f64::INFINITY {
            return Ok((1.0 / (b * b), 0.0, 0.0));
        }
        if z == f64::NEG_INFINITY {
            return Ok((1.0 / (a * a), 0.0, 0.0));
        }
        if z.abs() < SMALL_Z {
            return self.mean_inv_sq_small(z);
        }
        let pt = self.point(z)?;
        let f = (self.h_of(&pt) - self.h_center) / z;
        let g = 1.0 / (pt.rho * pt.rho);
        let g1 = -2.0 * pt.derivative(&self.params) / pt.rho.powi(3);
        let f1 = (g - f) / z;
        let f2 = (g1 - 2.0 * f1) / z;
        Ok((f, f1, f2))
    }

    /// η₁(z) = (b² − a²b²F(z))/(b² − a²) with its first two derivatives.
    pub fn eta1(&self, z: f64) -> Result<(f64, f64, f64)> {
        let (a2, b2) = (self.params.a.powi(2), self.params.b.powi(2));
        let (f, f1, f2) = self.mean_inv_sq(z)?;
        let c = a2 * b2 / (b2 - a2);
        let eta = (b2 - a2 * b2 * f) / (b2 - a2);
        Ok((clamp_eta(z, eta)?, -c * f1, -c * f2))
    }
}

fn clamp_eta(z: f64, eta: f64) -> Result<f64> {
    if eta.is_nan() {
        return Err(LabError::TableCorruption { z });
    }
    if !(-1e-10..=1.0 + 1e-10).contains(&eta) {
        return Err(LabError::Eta1Overshoot { z, value: eta });
    }
    Ok(eta.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyConstant {
    pub closed_form: f64,
    pub quadrature: f64,
}

/// Tabulated profile on a uniform symmetric grid.
#[derive(Debug, Clone)]
pub struct ProfileTable {
    pub params: ProfileParams,
    pub z: Vec<f64>,
    pub h: f64,
    pub rho0: Vec<f64>,
    pub lower_gap: Vec<f64>,
    pub upper_gap: Vec<f64>,
    pub rho0_prime: Vec<f64>,
    pub eta1: Vec<f64>,
    /// F(z) = (1/z)∫₀ᶻ ρ₀⁻², by cumulative Simpson from the centre node.
    pub f_mean: Vec<f64>,
    pub e_const: EnergyConstant,
    profile: Profile,
}

impl ProfileTable {
    pub fn build(params: ProfileParams, z_max: f64, nodes: usize) -> Result<Self> {
        params.validate()?;
        if nodes < 5 || nodes % 2 == 0 {
            return Err(LabError::InvalidParams(format!("table needs an odd node count ≥ 5, got {nodes}")));
        }
        if !(z_max > 0.0 && z_max.is_finite()) {
            return Err(LabError::InvalidParams(format!("z_max must be positive, got {z_max}")));
        }
        let profile = Profile::new(params)?;
        let h = 2.0 * z_max / (nodes - 1) as f64;
        let center = (nodes - 1) / 2;
        let z: Vec<f64> = (0..nodes).map(|i| (i as f64 - center as f64) * h).collect();
        let pts = z.iter().map(|&zi| profile.point(zi)).collect::<Result<Vec<_>>>()?;
        let rho0: Vec<f64> = pts.iter().map(|q| q.rho).collect();
        let rho0_prime: Vec<f64> = pts.iter().map(|q| q.derivative(&params)).collect();
        let inv_sq: Vec<f64> = rho0.iter().map(|r| 1.0 / (r * r)).collect();
        let cum = cumulative_simpson(&inv_sq, h, center);
        let f_mean: Vec<f64> = z
            .iter()
            .zip(&cum)
            .enumerate()
            .map(|(i, (zi, ci))| if i == center { inv_sq[center] } else { ci / zi })
            .collect();
        let (a2, b2) = (params.a * params.a, params.b * params.b);
        let eta1 = z
            .iter()
            .zip(&f_mean)
            .map(|(zi, f)| clamp_eta(*zi, (b2 - a2 * b2 * f) / (b2 - a2)))
            .collect::<Result<Vec<_>>>()?;
        let sq: Vec<f64> = rho0_prime.iter().map(|d| d * d).collect();
        let e_const = EnergyConstant {
            closed_form: params.energy_constant_closed(),
            quadrature: simpson(&sq, h),
        };
        if (e_const.closed_form - e_const.quadrature).abs() > 1e-6 {
            return Err(LabError::Consistency(format!(
                "energy constant: closed form {} vs quadrature {}",
                e_const.closed_form, e_const.quadrature
            )));
        }
        Ok(Self {
            params,
            lower_gap: pts.iter().map(|q| q.lower_gap).collect(),
            upper_gap: pts.iter().map(|q| q.upper_gap).collect(),
            z,
            h,
            rho0,
            rho0_prime,
            eta1,
            f_mean,
            e_const,
            profile,
        })
    }

    /// Default table: Z_max = 10, 4001 nodes.
    pub fn standard(params: ProfileParams) -> Result<Self> {
        Self::build(params, 10.0, 4001)
    }

    pub fn z_max(&self) -> f64 {
        *self.z.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn center_index(&self) -> usize {
        (self.z.len() - 1) / 2
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// η₁ at arbitrary z: cubic Hermite interpolation of the tabulated F
    /// inside the table, the closed-form antiderivative outside it.
    pub fn eta1_at(&self, z: f64) -> Result<f64> {
        if z.is_nan() {
            return Err(LabError::TableCorruption { z });
        }
        let zm = self.z_max();
        if z.abs() >= zm {
            return Ok(self.profile.eta1(z)?.0);
        }
        let x = (z + zm) / self.h;
        let i = (x.floor() as usize).min(self.z.len() - 2);
        let s = x - i as f64;
        let d = |k: usize| -> f64 {
            let zk = self.z[k];
            let g = 1.0 / (self.rho0[k] * self.rho0[k]);
            if k == self.center_index() {
                -self.rho0_prime[k] / self.rho0[k].powi(3)
            } else {
                (g - self.f_mean[k]) / zk
            }
        };
        let (f0, f1) = (self.f_mean[i], self.f_mean[i + 1]);
        let (d0, d1) = (d(i) * self.h, d(i + 1) * self.h);
        let s2 = s * s;
        let s3 = s2 * s;
        let f = (2.0 * s3 - 3.0 * s2 + 1.0) * f0
            + (s3 - 2.0 * s2 + s) * d0
            + (-2.0 * s3 + 3.0 * s2) * f1
            + (s3 - s2) * d1;
        let (a2, b2) = (self.params.a.powi(2), self.params.b.powi(2));
        clamp_eta(z, (b2 - a2 * b2 * f) / (b2 - a2))
    }

    /// Least-squares decay rates of b²−ρ₀² on z ∈ [5, 9] and ρ₀²−a² on [−9, −5].
    pub fn decay_rate_fit(&self) -> (f64, f64) {
        let (a, b) = (self.params.a, self.params.b);
        let (mut xp, mut yp, mut xm, mut ym) = (vec![], vec![], vec![], vec![]);
        for (i, &zi) in self.z.iter().enumerate() {
            if (5.0..=9.0).contains(&zi) {
                xp.push(zi);
                yp.push(self.upper_gap[i].ln() + (b + self.rho0[i]).ln());
            }
            if (-9.0..=-5.0).contains(&zi) {
                xm.push(zi);
                ym.push(self.lower_gap[i].ln() + (self.rho0[i] + a).ln());
            }
        }
        (linear_fit(&xp, &yp).0.abs(), linear_fit(&xm, &ym).0.abs())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["z", "rho0", "rho0_prime", "eta1", "F"])?;
        for i in 0..self.z.len() {
            w.write_record(&[
                fmt(self.z[i]),
                fmt(self.rho0[i]),
                fmt(self.rho0_prime[i]),
                fmt(self.eta1[i]),
                fmt(self.f_mean[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn fmt(x: f64) -> String {
    format!("{x:.17e}")
}
