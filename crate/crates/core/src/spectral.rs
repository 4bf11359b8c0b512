//! Smallest eigenvalues of the linearized quadratic forms on I = [−1, 1]:
//! the scalar layer forms Q₀ (potential ε⁻²f_A(ρ₀)) and Q₁ (ε⁻²f_B(ρ₀)), and
//! the vector form with potential ε⁻²Df(u⁰) along a planar cross-section.
//!
//! Everything is assembled in layer units z = r/ε, where the operator reads
//! −∂zz + V(z) on [−1/ε, 1/ε], and eigenvalues are reported in r-units
//! (λ_r = ε⁻²λ_z). P1 stiffness with a lumped mass keeps natural endpoints
//! natural; the symmetric scaling M^{-1/2}(K + MV)M^{-1/2} is block
//! tridiagonal and handled by Sturm-count bisection plus inverse iteration.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::expansion::{build_uk, ApproxConfig, Corrections, LayerGeometry};
use crate::numerics::{linear_fit, solve_tridiagonal};
use crate::profile::{fmt, Profile, ProfileParams};
use crate::sharp::DirectorField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FormKind {
    Q0,
    Q1,
    /// Full vector form around the planar u⁰ built from the director data.
    Vector,
    /// Potential forced to zero, natural endpoints.
    Free,
    /// Potential forced to zero, homogeneous Dirichlet endpoints.
    Dirichlet,
}

impl FormKind {
    pub fn name(&self) -> &'static str {
        match self {
            FormKind::Q0 => "q0",
            FormKind::Q1 => "q1",
            FormKind::Vector => "vector",
            FormKind::Free => "free",
            FormKind::Dirichlet => "dirichlet",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "q0" => FormKind::Q0,
            "q1" => FormKind::Q1,
            "vector" => FormKind::Vector,
            "free" => FormKind::Free,
            "dirichlet" => FormKind::Dirichlet,
            other => return Err(LabError::Config(format!("unknown form '{other}'"))),
        })
    }
}

/// Mesh on [−1/ε, 1/ε] in z-units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resolution {
    Uniform(usize),
    /// Spacing `core_h`·ε for |z| ≤ `core`, then geometric growth by 5% per
    /// cell up to `max_h`. Scaling the core spacing with ε keeps the
    /// discretization error of λ_r independent of ε.
    Graded { core_h: f64, core: f64, max_h: f64 },
}

impl Resolution {
    pub fn standard() -> Self {
        Resolution::Graded { core_h: 0.04, core: 12.0, max_h: 0.25 }
    }

    pub fn refined(&self) -> Self {
        match *self {
            Resolution::Uniform(n) => Resolution::Uniform(2 * n - 1),
            Resolution::Graded { core_h, core, max_h } => Resolution::Graded { core_h: 0.5 * core_h, core, max_h: 0.5 * max_h },
        }
    }
}

/// Director data for the vector form: u⁰(r) = ρ₀(r/ε)ω̄(η₁(r/ε)) with the
/// interface at r = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorData {
    pub omega_minus: DirectorField,
    pub omega_plus: DirectorField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormSpec {
    pub kind: FormKind,
    pub eps: f64,
    pub params: ProfileParams,
    pub resolution: Resolution,
    pub vector: Option<VectorData>,
}

impl FormSpec {
    pub fn new(kind: FormKind, eps: f64, params: ProfileParams) -> Self {
        Self { kind, eps, params, resolution: Resolution::standard(), vector: None }
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self { eps, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(LabError::InvalidParams(format!("eps must be positive, got {}", self.eps)));
        }
        self.params.validate()?;
        if self.kind == FormKind::Vector && self.vector.is_none() {
            return Err(LabError::InvalidParams("vector form needs director data".into()));
        }
        if let Resolution::Graded { core_h, core, max_h } = self.resolution {
            if !(core_h > 0.0 && core > 0.0 && max_h >= core_h * self.eps) {
                return Err(LabError::InvalidParams("graded mesh needs 0 < core_h·ε ≤ max_h".into()));
            }
        }
        Ok(())
    }
}

/// Node positions in z-units on [−half, half], symmetric about 0.
pub fn mesh(res: Resolution, half: f64) -> Vec<f64> {
    match res {
        Resolution::Uniform(n) => (0..n).map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64).collect(),
        Resolution::Graded { core_h, core, max_h } => {
            let h0 = core_h / half;
            let mut pos = vec![0.0];
            let mut h = h0;
            loop {
                let last = *pos.last().unwrap();
                if last >= core {
                    h = (h * 1.05).min(max_h.max(h0));
                }
                let next = last + h;
                if next >= half - 0.5 * h {
                    pos.push(half);
                    break;
                }
                pos.push(next);
            }
            let mut z: Vec<f64> = pos.iter().rev().map(|x| -x).collect();
            z.extend_from_slice(&pos[1..]);
            z
        }
    }
}

/// Symmetric block tridiagonal matrix with n×n blocks stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiag {
    pub n: usize,
    pub diag: Vec<f64>,
    /// Block i couples node i to node i+1.
    pub off: Vec<f64>,
}

impl BlockTridiag {
    pub fn nodes(&self) -> usize {
        self.diag.len() / (self.n * self.n)
    }

    pub fn dim(&self) -> usize {
        self.nodes() * self.n
    }

    fn dblock(&self, i: usize) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_row_slice(n, n, &self.diag[i * n * n..(i + 1) * n * n])
    }

    fn oblock(&self, i: usize) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_row_slice(n, n, &self.off[i * n * n..(i + 1) * n * n])
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let (n, nodes) = (self.n, self.nodes());
        let mut m = DMatrix::zeros(n * nodes, n * nodes);
        for i in 0..nodes {
            for p in 0..n {
                for q in 0..n {
                    m[(i * n + p, i * n + q)] = self.diag[i * n * n + p * n + q];
                    if i + 1 < nodes {
                        let v = self.off[i * n * n + p * n + q];
                        m[(i * n + p, (i + 1) * n + q)] = v;
                        m[((i + 1) * n + q, i * n + p)] = v;
                    }
                }
            }
        }
        m
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (n, nodes) = (self.n, self.nodes());
        let mut y = vec![0.0; x.len()];
        for i in 0..nodes {
            for p in 0..n {
                let mut s = 0.0;
                for q in 0..n {
                    s += self.diag[i * n * n + p * n + q] * x[i * n + q];
                    if i + 1 < nodes {
                        s += self.off[i * n * n + p * n + q] * x[(i + 1) * n + q];
                    }
                    if i > 0 {
                        s += self.off[(i - 1) * n * n + q * n + p] * x[(i - 1) * n + q];
                    }
                }
                y[i * n + p] = s;
            }
        }
        y
    }

    /// Number of eigenvalues below σ (Sylvester inertia of the block LDLᵀ).
    pub fn count_below(&self, sigma: f64) -> usize {
        let nodes = self.nodes();
        if self.n == 1 {
            let mut count = 0;
            let mut d = 1.0;
            for i in 0..nodes {
                let o2 = if i == 0 { 0.0 } else { self.off[i - 1] * self.off[i - 1] };
                d = self.diag[i] - sigma - if i == 0 { 0.0 } else { o2 / d };
                if d == 0.0 {
                    d = -f64::EPSILON * (self.diag[i].abs() + sigma.abs()).max(f64::MIN_POSITIVE);
                }
                if d < 0.0 {
                    count += 1;
                }
            }
            return count;
        }
        let n = self.n;
        let shift = DMatrix::<f64>::identity(n, n) * sigma;
        let mut count = 0;
        let mut prev: Option<DMatrix<f64>> = None;
        for i in 0..nodes {
            let mut d = self.dblock(i) - &shift;
            if let Some(p) = &prev {
                let o = self.oblock(i - 1);
                let pinv = p.clone().try_inverse().unwrap_or_else(|| {
                    (p + DMatrix::identity(n, n) * f64::EPSILON * p.norm().max(1.0)).try_inverse().expect("regularized")
                });
                d -= o.transpose() * pinv * &o;
            }
            let sym = (&d + d.transpose()) * 0.5;
            count += SymmetricEigen::new(sym.clone()).eigenvalues.iter().filter(|&&e| e < 0.0).count();
            prev = Some(sym);
        }
        count
    }

    /// Solves (A − σI)x = rhs by block elimination; A − σI must be definite.
    fn solve_shifted(&self, sigma: f64, rhs: &[f64]) -> Vec<f64> {
        let nodes = self.nodes();
        if self.n == 1 {
            let lower: Vec<f64> = (0..nodes).map(|i| if i == 0 { 0.0 } else { self.off[i - 1] }).collect();
            let upper: Vec<f64> = (0..nodes).map(|i| if i + 1 < nodes { self.off[i] } else { 0.0 }).collect();
            let diag: Vec<f64> = self.diag.iter().map(|d| d - sigma).collect();
            let mut x = rhs.to_vec();
            solve_tridiagonal(&lower, &diag, &upper, &mut x);
            return x;
        }
        let n = self.n;
        let shift = DMatrix::<f64>::identity(n, n) * sigma;
        let mut dinv: Vec<DMatrix<f64>> = Vec::with_capacity(nodes);
        let mut y: Vec<DVector<f64>> = Vec::with_capacity(nodes);
        for i in 0..nodes {
            let mut d = self.dblock(i) - &shift;
            let mut r = DVector::from_row_slice(&rhs[i * n..(i + 1) * n]);
            if i > 0 {
                let o = self.oblock(i - 1);
                let ot = o.transpose();
                d -= &ot * &dinv[i - 1] * &o;
                r -= &ot * &dinv[i - 1] * &y[i - 1];
            }
            let inv = d.clone().try_inverse().unwrap_or_else(|| {
                (d + DMatrix::identity(n, n) * f64::EPSILON).try_inverse().expect("regularized")
            });
            dinv.push(inv);
            y.push(r);
        }
        let mut x = vec![DVector::zeros(n); nodes];
        for i in (0..nodes).rev() {
            let mut r = y[i].clone();
            if i + 1 < nodes {
                r -= self.oblock(i) * &x[i + 1];
            }
            x[i] = &dinv[i] * r;
        }
        x.iter().flat_map(|v| v.iter().cloned().collect::<Vec<_>>()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub lambda: f64,
    /// Unit Euclidean norm, largest-magnitude entry positive.
    pub vector: Vec<f64>,
    /// ‖Av − λv‖ / ‖v‖.
    pub residual: f64,
}

/// Smallest eigenpair: bisection on the Sturm count, then inverse iteration
/// shifted just below the bracket, then a Rayleigh quotient.
pub fn min_eig(m: &BlockTridiag) -> Result<EigenPair> {
    let (n, nodes) = (m.n, m.nodes());
    let dim = m.dim();
    if dim == 0 {
        return Err(LabError::InvalidParams("empty matrix".into()));
    }
    // Gershgorin lower bound and a Rayleigh upper bound (smallest diagonal entry)
    let mut lo = f64::INFINITY;
    let mut hi = f64::INFINITY;
    let mut scale: f64 = 1.0;
    for i in 0..nodes {
        for p in 0..n {
            let d = m.diag[i * n * n + p * n + p];
            let mut radius = 0.0;
            for q in 0..n {
                if q != p {
                    radius += m.diag[i * n * n + p * n + q].abs();
                }
                if i + 1 < nodes {
                    radius += m.off[i * n * n + p * n + q].abs();
                }
                if i > 0 {
                    radius += m.off[(i - 1) * n * n + q * n + p].abs();
                }
            }
            lo = lo.min(d - radius);
            hi = hi.min(d);
            scale = scale.max(d.abs() + radius);
        }
    }
    lo -= 1e-12 * scale;
    hi += 1e-12 * scale;
    for _ in 0..200 {
        if hi - lo <= 4.0 * f64::EPSILON * scale {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if m.count_below(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let sigma = lo - 8.0 * f64::EPSILON * scale;
    // deterministic start vector with components in every direction
    let mut v: Vec<f64> = (0..dim).map(|k| 1.0 + 0.1 * ((k as f64) * 0.7).sin()).collect();
    let mut lambda = hi;
    let mut residual = f64::INFINITY;
    for _ in 0..50 {
        let mut x = m.solve_shifted(sigma, &v);
        let norm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(LabError::IterationCap { iterations: 0, residual: f64::NAN });
        }
        x.iter_mut().for_each(|a| *a /= norm);
        let ax = m.apply(&x);
        lambda = x.iter().zip(&ax).map(|(a, b)| a * b).sum();
        residual = ax.iter().zip(&x).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
        let change = x.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = x;
        if residual <= 1e-6 && change < 1e-10 {
            break;
        }
    }
    if residual > 1e-6 {
        return Err(LabError::IterationCap { iterations: 50, residual });
    }
    let imax = (0..dim).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap();
    if v[imax] < 0.0 {
        v.iter_mut().for_each(|a| *a = -*a);
    }
    Ok(EigenPair { lambda, vector: v, residual })
}

/// Assembled form in z-units together with the data needed to map back.
#[derive(Debug, Clone)]
pub struct AssembledForm {
    pub kind: FormKind,
    pub eps: f64,
    pub n: usize,
    /// Node positions (z-units) carrying unknowns.
    pub z: Vec<f64>,
    /// Lumped mass (z-units) at those nodes.
    pub mass: Vec<f64>,
    /// M^{-1/2}(K + MV)M^{-1/2}.
    pub matrix: BlockTridiag,
}

impl AssembledForm {
    pub fn r(&self) -> Vec<f64> {
        self.z.iter().map(|z| z * self.eps).collect()
    }

    /// Q(b) in r-units for b sampled at the nodes (node-major, n per node).
    pub fn form_value(&self, b: &[f64]) -> f64 {
        let y = self.scale_up(b);
        let ay = self.matrix.apply(&y);
        y.iter().zip(&ay).map(|(p, q)| p * q).sum::<f64>() / self.eps
    }

    /// ∫ |b|² dr.
    pub fn l2_sq(&self, b: &[f64]) -> f64 {
        self.scale_up(b).iter().map(|y| y * y).sum::<f64>() * self.eps
    }

    fn scale_up(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        b.iter().enumerate().map(|(k, v)| v * self.mass[k / n].sqrt()).collect()
    }

    /// Eigenvector of the scaled matrix back to nodal values with ∫|b|² dr = 1.
    pub fn nodal(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n;
        let b: Vec<f64> = y.iter().enumerate().map(|(k, v)| v / self.mass[k / n].sqrt()).collect();
        let norm = self.l2_sq(&b).sqrt();
        b.iter().map(|v| v / norm).collect()
    }

    /// Share of ∫|b|² dr carried by |r| ≤ width.
    pub fn mass_fraction(&self, b: &[f64], width: f64) -> f64 {
        let n = self.n;
        let (mut inside, mut total) = (0.0, 0.0);
        for (i, z) in self.z.iter().enumerate() {
            let w: f64 = (0..n).map(|c| b[i * n + c].powi(2)).sum::<f64>() * self.mass[i];
            total += w;
            if (z * self.eps).abs() <= width {
                inside += w;
            }
        }
        inside / total
    }
}

/// z-unit potential matrix (row-major n×n) at each node.
fn potential(spec: &FormSpec, z: &[f64]) -> Result<(usize, Vec<f64>)> {
    let pot = spec.params.potential();
    match spec.kind {
        FormKind::Free | FormKind::Dirichlet => Ok((1, vec![0.0; z.len()])),
        FormKind::Q0 | FormKind::Q1 => {
            let profile = Profile::new(spec.params)?;
            let v = z
                .iter()
                .map(|&zi| {
                    let rho = profile.point(zi)?.rho;
                    Ok(if spec.kind == FormKind::Q0 { pot.f_a(rho) } else { pot.f_b(rho) })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((1, v))
        }
        FormKind::Vector => {
            let data = spec.vector.as_ref().expect("validated");
            let cfg = ApproxConfig {
                order: 0,
                eps: spec.eps,
                // the whole cross-section is inner region
                delta: 2.0,
                geometry: LayerGeometry::Planar { offset: 0.0 },
                omega_minus: data.omega_minus.clone(),
                omega_plus: data.omega_plus.clone(),
            };
            let sol = build_uk(spec.params, cfg, Corrections::default())?;
            let n = sol.n();
            let mut out = Vec::with_capacity(z.len() * n * n);
            for &zi in z {
                let u = sol.eval(zi * spec.eps, 0.0)?;
                out.extend(pot.df(&u).transpose().iter().cloned());
            }
            Ok((n, out))
        }
    }
}

pub fn assemble(spec: &FormSpec) -> Result<AssembledForm> {
    spec.validate()?;
    let half = 1.0 / spec.eps;
    let mut z = mesh(spec.resolution, half);
    let min_nodes = 256usize.max((8.0 / spec.eps).ceil() as usize);
    if z.len() < min_nodes {
        return Err(LabError::InvalidParams(format!("{} nodes, need at least {min_nodes}", z.len())));
    }
    let h: Vec<f64> = z.windows(2).map(|w| w[1] - w[0]).collect();
    let full_mass: Vec<f64> = (0..z.len())
        .map(|i| 0.5 * (if i > 0 { h[i - 1] } else { 0.0 } + if i < h.len() { h[i] } else { 0.0 }))
        .collect();
    // stiffness rows over all nodes; Dirichlet drops the two end nodes
    let (first, last) = if spec.kind == FormKind::Dirichlet { (1, z.len() - 2) } else { (0, z.len() - 1) };
    let (n, pot) = potential(spec, &z)?;
    let nodes = last - first + 1;
    let mut diag = vec![0.0; nodes * n * n];
    let mut off = vec![0.0; nodes.saturating_sub(1) * n * n];
    for k in 0..nodes {
        let i = first + k;
        let stiff = if i > 0 { 1.0 / h[i - 1] } else { 0.0 } + if i < h.len() { 1.0 / h[i] } else { 0.0 };
        for p in 0..n {
            for q in 0..n {
                let lap = if p == q { stiff / full_mass[i] } else { 0.0 };
                diag[k * n * n + p * n + q] = lap + pot[i * n * n + p * n + q];
            }
            if k + 1 < nodes {
                off[k * n * n + p * n + p] = -1.0 / (h[i] * (full_mass[i] * full_mass[i + 1]).sqrt());
            }
        }
    }
    z = z[first..=last].to_vec();
    Ok(AssembledForm {
        kind: spec.kind,
        eps: spec.eps,
        n,
        mass: full_mass[first..=last].to_vec(),
        z,
        matrix: BlockTridiag { n, diag, off },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub kind: FormKind,
    pub eps: f64,
    pub nodes: usize,
    /// Smallest eigenvalue in r-units.
    pub lambda_min: f64,
    /// Same at 2× refinement.
    pub lambda_refined: f64,
    /// Relative residual of the z-unit eigenpair.
    pub residual: f64,
    pub r: Vec<f64>,
    /// Nodal eigenvector with ∫|b|² dr = 1.
    pub eigvector: Vec<f64>,
    /// Share of the eigenvector mass within |r| ≤ 10ε.
    pub localization: f64,
    pub bound_ok: bool,
}

/// λ_min in r-units together with the assembled form.
pub fn solve_form(spec: &FormSpec) -> Result<(AssembledForm, EigenPair, f64)> {
    let form = assemble(spec)?;
    let pair = min_eig(&form.matrix)?;
    let lambda = pair.lambda / (spec.eps * spec.eps);
    Ok((form, pair, lambda))
}

/// Largest tolerated |λ_fine − λ| is 5% of max(|λ|, 1): near-zero
/// eigenvalues are judged on the O(1) scale of the bound itself.
pub const REFINEMENT_TOLERANCE: f64 = 0.05;

pub fn report(spec: &FormSpec, c_bound: f64) -> Result<SpectralReport> {
    let (form, pair, lambda) = solve_form(spec)?;
    let fine = FormSpec { resolution: spec.resolution.refined(), ..spec.clone() };
    let (_, _, lambda_refined) = solve_form(&fine)?;
    if (lambda_refined - lambda).abs() > REFINEMENT_TOLERANCE * lambda.abs().max(1.0) {
        return Err(LabError::UnderResolved { eps: spec.eps, coarse: lambda, fine: lambda_refined });
    }
    let eigvector = form.nodal(&pair.vector);
    Ok(SpectralReport {
        kind: spec.kind,
        eps: spec.eps,
        nodes: form.z.len(),
        lambda_min: lambda,
        lambda_refined,
        residual: pair.residual,
        localization: form.mass_fraction(&eigvector, 10.0 * spec.eps),
        r: form.r(),
        eigvector,
        bound_ok: lambda >= -c_bound,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub reports: Vec<SpectralReport>,
    pub c_cfg: f64,
    /// min λ_min ≥ −C.
    pub bound_ok: bool,
    /// |λ(ε_{i+1})| ≤ 1.5|λ(ε_i)| + 10⁻⁶ along the list.
    pub growth_ok: bool,
    pub verdict: bool,
}

/// C_cfg = 2·max(1, |λ_min|) over the two coarsest ε.
pub fn calibrate(reports: &[SpectralReport]) -> f64 {
    2.0 * reports.iter().take(2).map(|r| r.lambda_min.abs()).fold(1.0, f64::max)
}

/// Runs the template over a decreasing ε list (in parallel). `c_cfg = None`
/// calibrates the bound from this run.
pub fn sweep(template: &FormSpec, eps_list: &[f64], c_cfg: Option<f64>) -> Result<SweepReport> {
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(LabError::InvalidParams("eps list must be strictly decreasing".into()));
    }
    let mut reports = eps_list
        .par_iter()
        .map(|&eps| report(&template.with_eps(eps), f64::INFINITY))
        .collect::<Result<Vec<_>>>()?;
    let c = c_cfg.unwrap_or_else(|| calibrate(&reports));
    for r in &mut reports {
        r.bound_ok = r.lambda_min >= -c;
    }
    let bound_ok = reports.iter().all(|r| r.bound_ok);
    let growth_ok = reports.windows(2).all(|w| w[1].lambda_min.abs() <= 1.5 * w[0].lambda_min.abs() + 1e-6);
    Ok(SweepReport { reports, c_cfg: c, bound_ok, growth_ok, verdict: bound_ok && growth_ok })
}

impl SweepReport {
    /// CSV with columns eps, nodes, lambda_min, residual, bound_ok.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["eps", "nodes", "lambda_min", "residual", "bound_ok"])?;
        for r in &self.reports {
            w.write_record([fmt(r.eps), r.nodes.to_string(), fmt(r.lambda_min), fmt(r.residual), r.bound_ok.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// c₁ = 64√2 b⁵(b²−a²)³((b−a)/(b+a))^{2b/a}.
pub fn envelope_c1(p: &ProfileParams) -> f64 {
    let (a, b) = (p.a, p.b);
    64.0 * std::f64::consts::SQRT_2 * b.powi(5) * (b * b - a * a).powi(3) * ((b - a) / (b + a)).powf(2.0 * b / a)
}

/// Form evaluated on the profile mode θ (θ₁ = ρ₀′ for Q₀, θ₂ = ρ₀ for Q₁).
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaFormReport {
    pub eps: f64,
    /// Discrete form value Q_h(θ) in r-units.
    pub discrete: f64,
    /// θ∂rθ|₋₁¹, which equals Q(θ) exactly since ε²θ″ = θV.
    pub boundary_term: f64,
    /// (c₁/ε)e^{−2α/ε}.
    pub envelope: f64,
}

pub fn theta_form_check(kind: FormKind, eps: f64, params: ProfileParams, resolution: Resolution) -> Result<ThetaFormReport> {
    if !matches!(kind, FormKind::Q0 | FormKind::Q1) {
        return Err(LabError::InvalidParams("theta modes exist for q0 and q1 only".into()));
    }
    let spec = FormSpec { resolution, ..FormSpec::new(kind, eps, params) };
    let form = assemble(&spec)?;
    let profile = Profile::new(params)?;
    let theta = |z: f64| -> Result<(f64, f64)> {
        let pt = profile.point(z)?;
        Ok(if kind == FormKind::Q0 {
            (pt.derivative(&params), pt.second_derivative(&params))
        } else {
            (pt.rho, pt.derivative(&params))
        })
    };
    let b = form.z.iter().map(|&z| Ok(theta(z)?.0)).collect::<Result<Vec<_>>>()?;
    let (tp, dp) = theta(1.0 / eps)?;
    let (tm, dm) = theta(-1.0 / eps)?;
    Ok(ThetaFormReport {
        eps,
        discrete: form.form_value(&b),
        boundary_term: (tp * dp - tm * dm) / eps,
        envelope: envelope_c1(&params) / eps * (-2.0 * params.alpha / eps).exp(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleFn {
    /// θ₁,ε = ρ₀′(r/ε).
    Theta1,
    Constant,
    /// exp(−((r − center)/width)²).
    Bump { center: f64, width: f64 },
    /// Σ_{k≤modes} (c_k cos + s_k sin)(kπ(r+1)/2) with coefficients drawn
    /// uniformly from [−1, 1]/(1+k) by a seeded ChaCha8 stream.
    Random { seed: u64, modes: usize },
}

impl SampleFn {
    pub fn sample(&self, r: &[f64], eps: f64, params: &ProfileParams) -> Result<Vec<f64>> {
        match *self {
            SampleFn::Theta1 => {
                let profile = Profile::new(*params)?;
                r.iter().map(|&x| Ok(profile.point(x / eps)?.derivative(params))).collect()
            }
            SampleFn::Constant => Ok(vec![1.0; r.len()]),
            SampleFn::Bump { center, width } => Ok(r.iter().map(|x| (-((x - center) / width).powi(2)).exp()).collect()),
            SampleFn::Random { seed, modes } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let coeffs: Vec<(f64, f64)> = (0..=modes)
                    .map(|k| {
                        let s = 1.0 / (1.0 + k as f64);
                        (rng.gen_range(-1.0..1.0) * s, rng.gen_range(-1.0..1.0) * s)
                    })
                    .collect();
                Ok(r.iter()
                    .map(|x| {
                        coeffs
                            .iter()
                            .enumerate()
                            .map(|(k, (c, s))| {
                                let w = k as f64 * std::f64::consts::PI * (x + 1.0) / 2.0;
                                c * w.cos() + s * w.sin()
                            })
                            .sum()
                    })
                    .collect())
            }
        }
    }
}

/// The default sample set: θ₁, constants, endpoint bumps and eight random
/// band-limited functions.
pub fn default_samples(seed: u64) -> Vec<SampleFn> {
    let mut s = vec![
        SampleFn::Theta1,
        SampleFn::Constant,
        SampleFn::Bump { center: 1.0, width: 0.3 },
        SampleFn::Bump { center: -1.0, width: 0.3 },
        SampleFn::Bump { center: 0.0, width: 0.5 },
    ];
    s.extend((0..8).map(|k| SampleFn::Random { seed: seed + k, modes: 6 }));
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointReport {
    pub eps: f64,
    /// |b(±1)|² / (ε(Q₀(b) + ∫b²)) per sample; `None` for b ≡ 0.
    pub ratios: Vec<Option<f64>>,
    pub worst: f64,
    /// Rayleigh quotients Q₀(b)/∫b², for the variational check against λ_min.
    pub rayleigh: Vec<f64>,
}

pub fn endpoint_estimate_check(eps: f64, params: ProfileParams, resolution: Resolution, samples: &[SampleFn]) -> Result<EndpointReport> {
    let spec = FormSpec { resolution, ..FormSpec::new(FormKind::Q0, eps, params) };
    let form = assemble(&spec)?;
    let r = form.r();
    let mut ratios = Vec::with_capacity(samples.len());
    let mut rayleigh = Vec::new();
    for s in samples {
        let b = s.sample(&r, eps, &params)?;
        let l2 = form.l2_sq(&b);
        if l2 == 0.0 {
            ratios.push(None);
            continue;
        }
        let q = form.form_value(&b);
        rayleigh.push(q / l2);
        let end = b[0].powi(2).max(b[b.len() - 1].powi(2));
        ratios.push(Some(end / (eps * (q + l2))));
    }
    let worst = ratios.iter().flatten().cloned().fold(0.0, f64::max);
    Ok(EndpointReport { eps, ratios, worst, rayleigh })
}

/// Slope of log(worst ratio) against log ε over a sweep.
pub fn endpoint_slope(reports: &[EndpointReport]) -> f64 {
    let (x, y): (Vec<f64>, Vec<f64>) = reports.iter().map(|r| (r.eps.ln(), r.worst.ln())).unzip();
    linear_fit(&x, &y).0
}

/// sup over the mesh of |ε⁻¹ρ₁ f_C(θ₂,ε)| for the model corrector
/// ρ₁ = c·d₀·e^{−α|d₀|/ε}, which vanishes on the interface.
pub fn correction_term_sup(eps: f64, params: ProfileParams, resolution: Resolution, c: f64) -> Result<f64> {
    let profile = Profile::new(params)?;
    let pot = params.potential();
    let z = mesh(resolution, 1.0 / eps);
    let mut sup: f64 = 0.0;
    for zi in z {
        let d0 = zi * eps;
        let rho1 = c * d0 * (-params.alpha * d0.abs() / eps).exp();
        sup = sup.max((rho1 / eps * pot.f_c(profile.point(zi)?.rho)).abs());
    }
    Ok(sup)
}

/// Max over |z| ≤ core of |ε²∂r²θ − θV| for θ₁ (V = f_A) and θ₂ (V = f_B),
/// with a three-point second difference on the mesh.
pub fn eigen_identity_defects(eps: f64, params: ProfileParams, resolution: Resolution, core: f64) -> Result<(f64, f64)> {
    let profile = Profile::new(params)?;
    let pot = params.potential();
    let z = mesh(resolution, 1.0 / eps);
    let pts = z.iter().map(|&zi| profile.point(zi)).collect::<Result<Vec<_>>>()?;
    let t1: Vec<f64> = pts.iter().map(|p| p.derivative(&params)).collect();
    let t2: Vec<f64> = pts.iter().map(|p| p.rho).collect();
    let (mut d1, mut d2): (f64, f64) = (0.0, 0.0);
    for i in 1..z.len() - 1 {
        if z[i].abs() > core {
            continue;
        }
        let (hm, hp) = ((z[i] - z[i - 1]) * eps, (z[i + 1] - z[i]) * eps);
        let dd = |v: &[f64]| 2.0 * (hm * v[i + 1] - (hm + hp) * v[i] + hp * v[i - 1]) / (hm * hp * (hm + hp));
        let rho = t2[i];
        d1 = d1.max((eps * eps * dd(&t1) - t1[i] * pot.f_a(rho)).abs());
        d2 = d2.max((eps * eps * dd(&t2) - t2[i] * pot.f_b(rho)).abs());
    }
    Ok((d1, d2))
}
