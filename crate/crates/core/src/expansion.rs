//! Matched-asymptotic approximate solutions u^K (K = 0, 1), their PDE
//! residual, and quadrature checks of the interface compatibility identities.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::numerics::{cumulative_simpson, fd_weights, simpson};
use crate::potential::{dot, norm2};
use crate::profile::{Profile, ProfileParams, ProfileTable};
use crate::sharp::DirectorField;

/// Constant-speed great-circle arc from ω⁻ to ω⁺.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicFrame {
    pub omega_minus: Vec<f64>,
    pub omega_plus: Vec<f64>,
    angle: f64,
    /// Unit vector orthogonal to ω⁻ in the plane of the arc (zero if ω⁻ = ω⁺).
    direction: Vec<f64>,
}

impl GeodesicFrame {
    pub fn new(omega_minus: &[f64], omega_plus: &[f64]) -> Result<Self> {
        let n = omega_minus.len();
        if n < 2 || omega_plus.len() != n {
            return Err(LabError::InvalidParams("geodesic endpoints need equal dimension ≥ 2".into()));
        }
        for w in [omega_minus, omega_plus] {
            if (norm2(w).sqrt() - 1.0).abs() > 1e-10 {
                return Err(LabError::InvalidParams("geodesic endpoints must be unit vectors".into()));
            }
        }
        let c = dot(omega_minus, omega_plus);
        if c < -1.0 + 1e-12 {
            return Err(LabError::AmbiguousGeodesic);
        }
        let perp: Vec<f64> = omega_plus.iter().zip(omega_minus).map(|(p, m)| p - c * m).collect();
        let s = norm2(&perp).sqrt();
        let (angle, direction) = if s > 0.0 {
            (s.atan2(c), perp.iter().map(|x| x / s).collect())
        } else {
            (0.0, vec![0.0; n])
        };
        Ok(Self { omega_minus: omega_minus.to_vec(), omega_plus: omega_plus.to_vec(), angle, direction })
    }

    pub fn dim(&self) -> usize {
        self.omega_minus.len()
    }

    /// Arc length between the endpoints, which is also |∂τω̄|.
    pub fn speed(&self) -> f64 {
        self.angle
    }

    pub fn eval(&self, tau: f64) -> Vec<f64> {
        if tau == 1.0 {
            return self.omega_plus.clone();
        }
        let (s, c) = (tau * self.angle).sin_cos();
        self.omega_minus.iter().zip(&self.direction).map(|(m, d)| c * m + s * d).collect()
    }

    /// ∂τω̄.
    pub fn derivative(&self, tau: f64) -> Vec<f64> {
        let (s, c) = (tau * self.angle).sin_cos();
        self.omega_minus.iter().zip(&self.direction).map(|(m, d)| self.angle * (-s * m + c * d)).collect()
    }

    /// n−1 orthonormal vectors completing ω̄(τ). For n = 2 this is the
    /// quarter-turn of ω̄; otherwise the first one is the arc tangent.
    pub fn xi(&self, tau: f64) -> Vec<Vec<f64>> {
        let w = self.eval(tau);
        let n = w.len();
        if n == 2 {
            return vec![vec![-w[1], w[0]]];
        }
        let mut basis: Vec<Vec<f64>> = vec![w];
        if self.angle > 0.0 {
            let (s, c) = (tau * self.angle).sin_cos();
            basis.push(self.omega_minus.iter().zip(&self.direction).map(|(m, d)| -s * m + c * d).collect());
        }
        for k in 0..n {
            if basis.len() == n {
                break;
            }
            let mut v = vec![0.0; n];
            v[k] = 1.0;
            for q in &basis {
                let p = dot(&v, q);
                v.iter_mut().zip(q).for_each(|(x, y)| *x -= p * y);
            }
            let len = norm2(&v).sqrt();
            if len > 1e-8 {
                basis.push(v.iter().map(|x| x / len).collect());
            }
        }
        basis.remove(0);
        basis
    }
}

pub fn geodesic_eval(frame: &GeodesicFrame, tau: f64) -> Vec<f64> {
    frame.eval(tau)
}

/// Interface motion feeding the signed distance d₀(r, t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerGeometry {
    /// Circle of radius √(r₀² − 2t) centred at the origin (m = 2).
    Radial { r0: f64 },
    /// Fixed hyperplane at the given offset (m = 1).
    Planar { offset: f64 },
}

impl LayerGeometry {
    pub fn m(&self) -> usize {
        match self {
            LayerGeometry::Radial { .. } => 2,
            LayerGeometry::Planar { .. } => 1,
        }
    }

    pub fn position(&self, t: f64) -> Result<f64> {
        match *self {
            LayerGeometry::Radial { r0 } => {
                let r2 = r0 * r0 - 2.0 * t;
                if !(r2 > 0.0) {
                    return Err(LabError::OutOfRange(format!("circle extinct at t={t}")));
                }
                Ok(r2.sqrt())
            }
            LayerGeometry::Planar { offset } => Ok(offset),
        }
    }

    pub fn d0(&self, r: f64, t: f64) -> Result<f64> {
        Ok(r - self.position(t)?)
    }
}

pub type Corrector = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Optional first-order inner coefficients ρ₁(z) and σ₁β(z), used when K = 1.
#[derive(Clone, Default)]
pub struct Corrections {
    pub rho1: Option<Corrector>,
    pub sigma1: Vec<Corrector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxConfig {
    pub order: usize,
    pub eps: f64,
    /// Cut-off half-width: inner value for |d₀| ≤ δ, outer for |d₀| ≥ 2δ.
    pub delta: f64,
    pub geometry: LayerGeometry,
    pub omega_minus: DirectorField,
    pub omega_plus: DirectorField,
}

#[derive(Clone)]
pub struct ApproxSolution {
    pub cfg: ApproxConfig,
    pub profile: Profile,
    pub corrections: Corrections,
}

/// Smooth step: 0 for τ ≤ 0, 1 for τ ≥ 1.
pub fn smooth_step(tau: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    if tau >= 1.0 {
        return 1.0;
    }
    let f = |s: f64| (-1.0 / s).exp();
    f(tau) / (f(tau) + f(1.0 - tau))
}

/// Builds the evaluator x ↦ u^K(x, t).
pub fn build_uk(params: ProfileParams, cfg: ApproxConfig, corrections: Corrections) -> Result<ApproxSolution> {
    if cfg.order > 1 {
        return Err(LabError::InvalidParams(format!("order K={} not supported", cfg.order)));
    }
    if !(cfg.eps > 0.0 && cfg.delta > 0.0) {
        return Err(LabError::InvalidParams("need ε > 0 and δ > 0".into()));
    }
    if cfg.omega_minus.n != cfg.omega_plus.n {
        return Err(LabError::InvalidParams("director dimensions differ".into()));
    }
    Ok(ApproxSolution { profile: Profile::new(params)?, cfg, corrections })
}

impl ApproxSolution {
    pub fn n(&self) -> usize {
        self.cfg.omega_minus.n
    }

    fn check(&self, r: f64) -> Result<()> {
        if !r.is_finite() || (self.cfg.geometry.m() == 2 && r < 0.0) {
            return Err(LabError::OutOfRange(format!("normal coordinate {r}")));
        }
        Ok(())
    }

    pub fn outer(&self, r: f64, t: f64) -> Result<Vec<f64>> {
        self.check(r)?;
        let p = &self.profile.params;
        let d = self.cfg.geometry.d0(r, t)?;
        Ok(if d >= 0.0 {
            self.cfg.omega_plus.at(r).into_iter().map(|x| p.b * x).collect()
        } else {
            self.cfg.omega_minus.at(r).into_iter().map(|x| p.a * x).collect()
        })
    }

    pub fn inner(&self, r: f64, t: f64) -> Result<Vec<f64>> {
        self.check(r)?;
        let eps = self.cfg.eps;
        let z = self.cfg.geometry.d0(r, t)? / eps;
        let rho = self.profile.point(z)?.rho;
        let (eta, _, _) = self.profile.eta1(z)?;
        let frame = GeodesicFrame::new(&self.cfg.omega_minus.at(r), &self.cfg.omega_plus.at(r))?;
        let w = frame.eval(eta);
        let mut u: Vec<f64> = w.iter().map(|x| rho * x).collect();
        if self.cfg.order == 1 {
            if let Some(rho1) = &self.corrections.rho1 {
                let c = eps * rho1(z);
                u.iter_mut().zip(&w).for_each(|(x, y)| *x += c * y);
            }
            if !self.corrections.sigma1.is_empty() {
                for (s, xi) in self.corrections.sigma1.iter().zip(frame.xi(eta)) {
                    let c = eps * s(z);
                    u.iter_mut().zip(&xi).for_each(|(x, y)| *x += c * y);
                }
            }
        }
        Ok(u)
    }

    /// u^K = u_i + (1 − ξ(d₀/δ))(u_o − u_i) with ξ = 1 on [0, 1], 0 beyond 2.
    pub fn eval(&self, r: f64, t: f64) -> Result<Vec<f64>> {
        self.check(r)?;
        let d = self.cfg.geometry.d0(r, t)?.abs();
        let delta = self.cfg.delta;
        if d >= 2.0 * delta {
            return self.outer(r, t);
        }
        if d <= delta {
            return self.inner(r, t);
        }
        let w = smooth_step(d / delta - 1.0);
        let ui = self.inner(r, t)?;
        let uo = self.outer(r, t)?;
        Ok(ui.iter().zip(&uo).map(|(i, o)| i + w * (o - i)).collect())
    }
}

/// Angle corrector for n = 2 in-plane data: σ₁(z) = ρ₀(z)(c∫₀ᶻρ₀⁻² − zΘ(z)),
/// Θ = s⁻ + η₁(s⁺ − s⁻), which removes the O(ε⁻¹) tangential residual of u⁰
/// inside the layer. Bounded on both sides only when b²s⁺ = a²s⁻ (then it
/// vanishes for c = a²s⁻).
pub fn angle_corrector(profile: &Profile, s_minus: f64, s_plus: f64, c: f64) -> Corrector {
    let profile = profile.clone();
    Arc::new(move |z| {
        let eval = || -> Result<f64> {
            let rho = profile.point(z)?.rho;
            let (eta, _, _) = profile.eta1(z)?;
            let theta = s_minus + eta * (s_plus - s_minus);
            Ok(rho * (c * profile.integral_inv_sq(z)? - z * theta))
        };
        eval().unwrap_or(f64::NAN)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub r: Vec<f64>,
    /// |∂ₜu − Δu + ε⁻²f(u)| at each probe.
    pub norm: Vec<f64>,
    pub sup: f64,
    pub argmax: f64,
}

/// PDE residual of u^K at the probes: fourth-order differences in r with
/// step 0.003ε, central difference in t over ±dt_probe.
pub fn residual(sol: &ApproxSolution, probes: &[f64], t: f64, dt_probe: f64) -> Result<ResidualReport> {
    let eps = sol.cfg.eps;
    let hr = 0.003 * eps;
    let m = sol.cfg.geometry.m();
    let pot = sol.profile.params.potential();
    let n = sol.n();
    let norms: Vec<f64> = probes
        .par_iter()
        .map(|&r| -> Result<f64> {
            if m == 2 && r - 2.0 * hr <= 0.0 {
                return Err(LabError::OutOfRange(format!("probe r={r} too close to the axis")));
            }
            let s: Vec<Vec<f64>> = (-2..=2).map(|k| sol.eval(r + k as f64 * hr, t)).collect::<Result<_>>()?;
            let up = sol.eval(r, t + dt_probe)?;
            let dn = sol.eval(r, t - dt_probe)?;
            let f = pot.f_grad(&s[2]);
            let mut total = 0.0;
            for c in 0..n {
                let urr = (-s[0][c] + 16.0 * s[1][c] - 30.0 * s[2][c] + 16.0 * s[3][c] - s[4][c]) / (12.0 * hr * hr);
                let ur = (s[0][c] - 8.0 * s[1][c] + 8.0 * s[3][c] - s[4][c]) / (12.0 * hr);
                let lap = if m == 2 { urr + ur / r } else { urr };
                let ut = (up[c] - dn[c]) / (2.0 * dt_probe);
                let res = ut - lap + f[c] / (eps * eps);
                total += res * res;
            }
            Ok(total.sqrt())
        })
        .collect::<Result<_>>()?;
    let (mut sup, mut argmax) = (0.0, probes.first().copied().unwrap_or(0.0));
    for (r, v) in probes.iter().zip(&norms) {
        if *v > sup {
            sup = *v;
            argmax = *r;
        }
    }
    Ok(ResidualReport { r: probes.to_vec(), norm: norms, sup, argmax })
}

/// Uniform probe grid on [R − w, R + w] (clipped away from the axis).
pub fn probe_grid(sol: &ApproxSolution, t: f64, half_width: f64, count: usize) -> Result<Vec<f64>> {
    let center = sol.cfg.geometry.position(t)?;
    let lo = if sol.cfg.geometry.m() == 2 { (center - half_width).max(0.05 * center) } else { center - half_width };
    let hi = center + half_width;
    Ok((0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect())
}

/// Value of ω on Γ with prescribed one-sided normal derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceJet {
    pub omega: Vec<f64>,
    pub dnu_minus: Vec<f64>,
    pub dnu_plus: Vec<f64>,
}

impl InterfaceJet {
    pub fn new(omega: Vec<f64>, dnu_minus: Vec<f64>, dnu_plus: Vec<f64>) -> Result<Self> {
        if (norm2(&omega).sqrt() - 1.0).abs() > 1e-10 || dnu_minus.len() != omega.len() || dnu_plus.len() != omega.len() {
            return Err(LabError::InvalidParams("jet needs a unit ω and matching derivative lengths".into()));
        }
        Ok(Self { omega, dnu_minus, dnu_plus })
    }

    /// ∂νω̄(η₁) modelled as η₁∂νω⁺ + (1 − η₁)∂νω⁻.
    fn dnu_bar(&self, eta: f64) -> Vec<f64> {
        self.dnu_minus.iter().zip(&self.dnu_plus).map(|(m, p)| m + eta * (p - m)).collect()
    }

    fn jump(&self) -> Vec<f64> {
        self.dnu_plus.iter().zip(&self.dnu_minus).map(|(p, m)| p - m).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompatReport {
    /// ∫(ρ₀′)² over the table.
    pub e: f64,
    pub residual: f64,
}

/// Quadrature of the O(ε⁻¹) normal solvability integral on Γ with d₁ = 0 and a
/// prescribed velocity defect ∂ₜd₀ − Δd₀.
pub fn compat_mcf_quadrature(table: &ProfileTable, jet: &InterfaceJet, velocity_defect: f64) -> Result<CompatReport> {
    let profile = table.profile();
    let jump = jet.jump();
    let jump_dot = dot(&jump, &jet.omega);
    let mut e_vals = Vec::with_capacity(table.len());
    let mut r_vals = Vec::with_capacity(table.len());
    for (i, &z) in table.z.iter().enumerate() {
        let (rho, rp) = (table.rho0[i], table.rho0_prime[i]);
        let (_, e1, e2) = profile.eta1(z)?;
        // ∂z∂νω̄·ω̄ and ∂z²∂νω̄·ω̄ on Γ
        let dz = e1 * jump_dot;
        let dzz = e2 * jump_dot;
        let g0 = rho * dzz + 2.0 * rp * dz;
        e_vals.push(rp * rp);
        r_vals.push(rp * rp * velocity_defect - 2.0 * rho * rp * dz - z * rp * g0);
    }
    Ok(CompatReport { e: simpson(&e_vals, table.h), residual: simpson(&r_vals, table.h) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpIdentityReport {
    pub max_deviation: f64,
    /// ρ₀²∂z(z∂νω̄(η₁)) at z = 0.
    pub value_at_center: Vec<f64>,
}

/// max over the table of |ρ₀²∂z(z∂νω̄(η₁(z))) − a²∂νω⁻|, with ∂z(zη₁)
/// differenced from the tabulated η₁ column.
pub fn jump_identity_check(table: &ProfileTable, jet: &InterfaceJet) -> Result<JumpIdentityReport> {
    let a2 = table.params.a.powi(2);
    let z_eta: Vec<f64> = table.z.iter().zip(&table.eta1).map(|(z, e)| z * e).collect();
    let d_zeta = differentiate(&z_eta, table.h);
    let jump = jet.jump();
    let mut worst: f64 = 0.0;
    let mut center = Vec::new();
    for i in 0..table.len() {
        let rho2 = table.rho0[i].powi(2);
        let v: Vec<f64> = jet.dnu_minus.iter().zip(&jump).map(|(m, j)| rho2 * (m + d_zeta[i] * j)).collect();
        let dev: f64 = v.iter().zip(&jet.dnu_minus).map(|(x, m)| (x - a2 * m).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(dev);
        if i == table.center_index() {
            center = v;
        }
    }
    Ok(JumpIdentityReport { max_deviation: worst, value_at_center: center })
}

/// Sixth-order first derivative on a uniform grid, one-sided near the ends.
fn differentiate(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let half = 3usize;
    let central = fd_weights(1, &[-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0]);
    (0..n)
        .map(|i| {
            let (start, weights) = if i >= half && i + half < n {
                (i - half, central.clone())
            } else {
                let start = if i < half { 0 } else { n - 7 };
                let offsets: Vec<f64> = (0..7).map(|k| (start + k) as f64 - i as f64).collect();
                (start, fd_weights(1, &offsets))
            };
            weights.iter().enumerate().map(|(k, w)| w * v[start + k]).sum::<f64>() / h
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelescopeReport {
    /// ∫(−2ρ₀′ρ₀∂νω̄·ξ − ρ₀²∂z∂νω̄·ξ) over [−Z, Z].
    pub quadrature: f64,
    /// −ρ₀²∂νω̄·ξ evaluated between −Z and Z.
    pub endpoint: f64,
    /// −(b²∂νω⁺ − a²∂νω⁻)·ξ, the value of the endpoint term at ±∞.
    pub limit: f64,
    pub deviation: f64,
}

pub fn telescoping_check(table: &ProfileTable, jet: &InterfaceJet, xi: &[f64]) -> Result<TelescopeReport> {
    let profile = table.profile();
    let jump_xi = dot(&jet.jump(), xi);
    let mut vals = Vec::with_capacity(table.len());
    for (i, &z) in table.z.iter().enumerate() {
        let (rho, rp) = (table.rho0[i], table.rho0_prime[i]);
        let (eta, e1, _) = profile.eta1(z)?;
        let bar_xi = dot(&jet.dnu_bar(eta), xi);
        vals.push(-2.0 * rp * rho * bar_xi - rho * rho * e1 * jump_xi);
    }
    let quadrature = simpson(&vals, table.h);
    let last = table.len() - 1;
    let end_term = |i: usize| -> Result<f64> {
        let (eta, _, _) = profile.eta1(table.z[i])?;
        Ok(table.rho0[i].powi(2) * dot(&jet.dnu_bar(eta), xi))
    };
    let endpoint = -(end_term(last)? - end_term(0)?);
    let (a2, b2) = (table.params.a.powi(2), table.params.b.powi(2));
    let limit = -(b2 * dot(&jet.dnu_plus, xi) - a2 * dot(&jet.dnu_minus, xi));
    Ok(TelescopeReport { quadrature, endpoint, limit, deviation: (quadrature - endpoint).abs() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TwoPointKind {
    /// −v″ + f_A(ρ₀)v = h, kernel θ₁ = ρ₀′, normalized by v(0) = 0.
    A,
    /// −v″ + f_B(ρ₀)v = h, kernel θ₂ = ρ₀, normalized by v(−∞) = 0.
    B,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPointSolution {
    pub z: Vec<f64>,
    pub v: Vec<f64>,
    /// v(−∞), v(+∞) from the equation's limits.
    pub limits: (f64, f64),
    /// ∫hθ, the compatibility integral.
    pub compatibility: f64,
}

/// ∫ of a tabulated integrand past the end node, assuming exponential decay
/// estimated from the last ten cells; zero when the tail does not decay.
fn tail(values: &[f64], h: f64, at_end: bool) -> f64 {
    let n = values.len();
    let span = 10.min(n - 1);
    let (g0, g1) = if at_end { (values[n - 1], values[n - 1 - span]) } else { (values[0], values[span]) };
    if g0 == 0.0 || g0.signum() != g1.signum() {
        return 0.0;
    }
    let kappa = (g1 / g0).ln() / (span as f64 * h);
    if kappa > 0.0 { g0 / kappa } else { 0.0 }
}

/// Variation-of-parameters solution of the two-point problems on the table
/// grid, by nested cumulative Simpson quadrature with exponential tail
/// corrections. The compatibility integral must vanish to 1e-8.
pub fn solve_two_point(table: &ProfileTable, kind: TwoPointKind, h: &[f64]) -> Result<TwoPointSolution> {
    let n = table.len();
    if h.len() != n {
        return Err(LabError::InvalidParams("source must be sampled on the table grid".into()));
    }
    let dz = table.h;
    let c = table.center_index();
    let theta: &[f64] = match kind {
        TwoPointKind::A => &table.rho0_prime,
        TwoPointKind::B => &table.rho0,
    };
    let g: Vec<f64> = h.iter().zip(theta).map(|(x, t)| x * t).collect();
    let compatibility = simpson(&g, dz) + tail(&g, dz, false) + tail(&g, dz, true);
    let scale = simpson(&g.iter().map(|x| x.abs()).collect::<Vec<_>>(), dz).max(1.0);
    if compatibility.abs() > 1e-8 * scale {
        return Err(LabError::Incompatible { value: compatibility });
    }
    // ∫_{−∞}^{z} g and ∫_{z}^{∞} g, each accumulated from its own end
    let from_left: Vec<f64> = cumulative_simpson(&g, dz, 0).iter().map(|x| x + tail(&g, dz, false)).collect();
    let from_right: Vec<f64> = cumulative_simpson(&g, dz, n - 1).iter().map(|x| -x + tail(&g, dz, true)).collect();
    let pot = table.params.potential();
    let (a, b) = (table.params.a, table.params.b);
    match kind {
        TwoPointKind::A => {
            // v = θΦ, Φ′ = θ⁻²∫_z^∞ hθ, Φ(0) = 0
            let dphi: Vec<f64> = (0..n)
                .map(|i| {
                    let upper = if i >= c { from_right[i] } else { -from_left[i] };
                    upper / (theta[i] * theta[i])
                })
                .collect();
            let phi = cumulative_simpson(&dphi, dz, c);
            let v = (0..n).map(|i| theta[i] * phi[i]).collect();
            let limits = (h[0] / pot.f_a(a), h[n - 1] / pot.f_a(b));
            Ok(TwoPointSolution { z: table.z.clone(), v, limits, compatibility })
        }
        TwoPointKind::B => {
            // v = θΦ, Φ′ = −θ⁻²∫_{−∞}^z hθ, Φ(−∞) = 0
            let dphi: Vec<f64> = (0..n)
                .map(|i| {
                    let lower = if i <= c { from_left[i] } else { -from_right[i] };
                    -lower / (theta[i] * theta[i])
                })
                .collect();
            let left_tail = tail(&dphi, dz, false);
            let phi = cumulative_simpson(&dphi, dz, 0);
            let v = (0..n).map(|i| theta[i] * (phi[i] + left_tail)).collect();
            Ok(TwoPointSolution { z: table.z.clone(), v, limits: (0.0, b * (phi[n - 1] + left_tail)), compatibility })
        }
    }
}
