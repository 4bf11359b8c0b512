//! Reference solver for the sharp-interface limit: the interface moves by mean
//! curvature, each bulk director ω± follows the harmonic map heat flow into
//! S^{n−1}, and across Γ the fields are continuous with b²∂νω⁺ = a²∂νω⁻.
//!
//! Convention: Ω⁻ is the inside of the circle (or x < offset), d < 0 there, and
//! circles shrink, Ṙ = −(m−1)/R.

use std::path::Path;

use crate::error::{LabError, Result};
use crate::fields::InterfaceGeometry;
use crate::profile::fmt;

/// Angle of a director rotating in the (e₁, e₂) plane, as a function of the
/// normal coordinate r (radius, or the planar axis coordinate).
#[derive(Debug, Clone, PartialEq)]
pub enum AngleProfile {
    Constant(f64),
    /// φ = φ₀ + s·(r − r₀)
    Affine { phi0: f64, slope: f64, r0: f64 },
    /// φ = φ₀ + s·(r² − r₀²)/(2r₀): flat at r = 0, slope s at r₀.
    Quadratic { phi0: f64, slope: f64, r0: f64 },
    /// φ = φ₀ + s·r₀·ln(r/r₀): harmonic in the plane, slope s at r₀.
    Logarithmic { phi0: f64, slope: f64, r0: f64 },
}

impl AngleProfile {
    pub fn angle(&self, r: f64) -> f64 {
        match *self {
            AngleProfile::Constant(p) => p,
            AngleProfile::Affine { phi0, slope, r0 } => phi0 + slope * (r - r0),
            AngleProfile::Quadratic { phi0, slope, r0 } => phi0 + slope * (r * r - r0 * r0) / (2.0 * r0),
            AngleProfile::Logarithmic { phi0, slope, r0 } => phi0 + slope * r0 * (r / r0).ln(),
        }
    }

    pub fn slope(&self, r: f64) -> f64 {
        match *self {
            AngleProfile::Constant(_) => 0.0,
            AngleProfile::Affine { slope, .. } => slope,
            AngleProfile::Quadratic { slope, r0, .. } => slope * r / r0,
            AngleProfile::Logarithmic { slope, r0, .. } => slope * r0 / r,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectorField {
    pub n: usize,
    pub angle: AngleProfile,
}

impl DirectorField {
    pub fn new(n: usize, angle: AngleProfile) -> Result<Self> {
        if n < 2 {
            return Err(LabError::InvalidParams("director fields need n ≥ 2".into()));
        }
        Ok(Self { n, angle })
    }

    pub fn at(&self, r: f64) -> Vec<f64> {
        let p = self.angle.angle(r);
        let mut v = vec![0.0; self.n];
        v[0] = p.cos();
        v[1] = p.sin();
        v
    }

    /// ∂r of the director.
    pub fn normal_derivative(&self, r: f64) -> Vec<f64> {
        let p = self.angle.angle(r);
        let s = self.angle.slope(r);
        let mut v = vec![0.0; self.n];
        v[0] = -p.sin() * s;
        v[1] = p.cos() * s;
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SharpKind {
    /// Cell-centred nodes on [0, L], Dirichlet ghosts at −h/2 and L + h/2.
    Planar,
    /// Cell-centred nodes on [0, L] for m = 2, symmetric at r = 0.
    Radial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharpConfig {
    pub a: f64,
    pub b: f64,
    pub kind: SharpKind,
    pub nodes: usize,
    pub length: f64,
    /// Splitting step. Heat substeps are taken automatically when dt exceeds
    /// the explicit stability limit.
    pub dt: f64,
    pub t_end: f64,
    /// Interface radius (radial) or offset (planar) at t = 0.
    pub interface: f64,
    pub omega_minus: DirectorField,
    pub omega_plus: DirectorField,
    /// Metric rows are kept every this many steps (and at the last step).
    pub record_every: usize,
}

impl SharpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b > self.a) {
            return Err(LabError::Config("need 0 < a < b".into()));
        }
        if self.nodes < 16 || !(self.length > 0.0) {
            return Err(LabError::Config("need ≥ 16 nodes and positive length".into()));
        }
        if !(self.dt > 0.0) || !(self.t_end >= 0.0) {
            return Err(LabError::Config("need dt > 0 and t_end ≥ 0".into()));
        }
        if !(self.interface > 0.0 && self.interface < self.length) {
            return Err(LabError::Config("interface must lie inside the domain".into()));
        }
        if self.omega_minus.n != self.omega_plus.n {
            return Err(LabError::Config("director dimensions differ".into()));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        self.length / self.nodes as f64
    }

    /// Largest stable explicit heat step for the interface-coupled stencil.
    pub fn heat_dt_max(&self) -> f64 {
        let h = self.h();
        h * h / (2.0 * (1.0 + (self.b * self.b) / (self.a * self.a)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharpState {
    pub t: f64,
    pub kind: SharpKind,
    pub a: f64,
    pub b: f64,
    pub h: f64,
    pub n: usize,
    /// Interface radius or planar offset.
    pub interface: f64,
    /// Node-major directors; nodes below the interface belong to Ω⁻.
    pub omega: Vec<f64>,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub extinct_at: Option<f64>,
    pub omega_gamma: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepDiagnostics {
    /// |b²s⁺ − a²s⁻| from the slopes the stencil actually used.
    pub jump_residual: f64,
    /// |ω⁻(Γ) − ω⁺(Γ)| from one-sided linear extrapolation.
    pub continuity: f64,
    /// max over nodes of |(ω_new − ω)·ω|.
    pub tangency: f64,
}

impl SharpState {
    pub fn from_config(cfg: &SharpConfig) -> Result<Self> {
        cfg.validate()?;
        let h = cfg.h();
        let n = cfg.omega_minus.n;
        let mut omega = Vec::with_capacity(cfg.nodes * n);
        for i in 0..cfg.nodes {
            let r = (i as f64 + 0.5) * h;
            let w = if r < cfg.interface { cfg.omega_minus.at(r) } else { cfg.omega_plus.at(r) };
            omega.extend(w);
        }
        let left = cfg.omega_minus.at(-0.5 * h);
        let right = cfg.omega_plus.at(cfg.length + 0.5 * h);
        let mut s = Self {
            t: 0.0,
            kind: cfg.kind,
            a: cfg.a,
            b: cfg.b,
            h,
            n,
            interface: cfg.interface,
            omega,
            left,
            right,
            extinct_at: None,
            omega_gamma: vec![0.0; n],
        };
        s.omega_gamma = s.interface_value().unwrap_or_else(|| cfg.omega_minus.at(cfg.interface));
        Ok(s)
    }

    pub fn nodes(&self) -> usize {
        self.omega.len() / self.n
    }

    pub fn position(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.omega[i * self.n..(i + 1) * self.n]
    }

    pub fn geometry(&self) -> InterfaceGeometry {
        match self.kind {
            SharpKind::Radial => InterfaceGeometry::Radial { center: vec![0.0, 0.0], radius: self.interface },
            SharpKind::Planar => InterfaceGeometry::Planar { axis: 0, offset: self.interface },
        }
    }

    fn shell(&self, r: f64) -> f64 {
        match self.kind {
            SharpKind::Planar => 1.0,
            SharpKind::Radial => r,
        }
    }

    /// Index k of the last Ω⁻ node when the interface lies strictly between
    /// nodes k and k+1.
    fn interface_cell(&self) -> Option<usize> {
        if self.extinct_at.is_some() {
            return None;
        }
        let x = self.interface / self.h - 0.5;
        if x < 0.0 {
            return None;
        }
        let k = x.floor() as usize;
        if k + 1 >= self.nodes() {
            return None;
        }
        Some(k)
    }

    /// Transmission solve at the interface cell: returns (ω_Γ, s⁻, s⁺) per
    /// component from continuity plus b²s⁺ = a²s⁻.
    fn transmission(&self, k: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64, f64) {
        let theta_m = self.interface - self.position(k);
        let theta_p = self.position(k + 1) - self.interface;
        let ratio = self.a * self.a / (self.b * self.b);
        let (mut wg, mut sm, mut sp) = (vec![0.0; self.n], vec![0.0; self.n], vec![0.0; self.n]);
        for c in 0..self.n {
            let (wk, wk1) = (self.omega[k * self.n + c], self.omega[(k + 1) * self.n + c]);
            // [1, −θ⁻; 1, θ⁺a²/b²] (ω_Γ, s⁻)ᵀ = (ω_k, ω_{k+1})ᵀ
            let det = theta_p * ratio + theta_m;
            let s_minus = (wk1 - wk) / det;
            let w_gamma = (wk * theta_p * ratio + wk1 * theta_m) / det;
            wg[c] = w_gamma;
            sm[c] = s_minus;
            sp[c] = ratio * s_minus;
        }
        (wg, sm, sp, theta_m, theta_p)
    }

    /// Normalized interface director, if the interface lies between nodes.
    pub fn interface_value(&self) -> Option<Vec<f64>> {
        let k = self.interface_cell()?;
        let (wg, ..) = self.transmission(k);
        let norm = wg.iter().map(|x| x * x).sum::<f64>().sqrt();
        Some(wg.iter().map(|x| x / norm).collect())
    }

    /// Angle of ω_Γ in the (e₁, e₂) plane.
    pub fn phi_gamma(&self) -> f64 {
        self.omega_gamma[1].atan2(self.omega_gamma[0])
    }

    /// Angle field φ_i = atan2(ω₂, ω₁), unwrapped along the grid.
    pub fn angles(&self) -> Vec<f64> {
        let mut out: Vec<f64> = (0..self.nodes()).map(|i| self.node(i)[1].atan2(self.node(i)[0])).collect();
        for i in 1..out.len() {
            while out[i] - out[i - 1] > std::f64::consts::PI {
                out[i] -= 2.0 * std::f64::consts::PI;
            }
            while out[i] - out[i - 1] < -std::f64::consts::PI {
                out[i] += 2.0 * std::f64::consts::PI;
            }
        }
        out
    }
}

pub enum McfOutcome {
    Moved,
    Extinct { t: f64 },
}

/// One RK2 (midpoint) step of Ṙ = −1/R for circles; planar interfaces are
/// fixed. Extinction is recorded with the time estimated from the local
/// solution R² − 2(t' − t) = 0.
pub fn mcf_step(state: &mut SharpState, dt: f64) -> McfOutcome {
    if let Some(t) = state.extinct_at {
        return McfOutcome::Extinct { t };
    }
    if state.kind == SharpKind::Planar {
        return McfOutcome::Moved;
    }
    let r = state.interface;
    let t_ext = state.t + 0.5 * r * r;
    let mid = r - 0.5 * dt / r;
    if mid <= 0.0 {
        state.extinct_at = Some(t_ext);
        state.interface = 0.0;
        return McfOutcome::Extinct { t: t_ext };
    }
    let next = r - dt / mid;
    if next <= 0.0 {
        state.extinct_at = Some(t_ext);
        state.interface = 0.0;
        return McfOutcome::Extinct { t: t_ext };
    }
    state.interface = next;
    McfOutcome::Moved
}

/// One explicit heat step per bulk with ghost-node transmission coupling,
/// followed by projection back to the sphere. The interface is frozen during
/// the step.
pub fn harmonic_flow_step(state: &mut SharpState, dt: f64) -> Result<StepDiagnostics> {
    let n = state.n;
    let nodes = state.nodes();
    let h = state.h;
    let mut diag = StepDiagnostics::default();
    let coupling = state.interface_cell().map(|k| (k, state.transmission(k)));
    let mut next = state.omega.clone();
    for i in 0..nodes {
        let r = state.position(i);
        let shell_i = state.shell(r);
        let face_out = state.shell(r + 0.5 * h);
        let face_in = state.shell(r - 0.5 * h);
        for c in 0..n {
            let wi = state.omega[i * n + c];
            let out_diff = match &coupling {
                Some((k, (_, sm, _, _, _))) if i == *k => h * sm[c],
                _ if i + 1 < nodes => state.omega[(i + 1) * n + c] - wi,
                _ => state.right[c] - wi,
            };
            let in_diff = match &coupling {
                Some((k, (_, _, sp, _, _))) if i == *k + 1 => h * sp[c],
                _ if i > 0 => wi - state.omega[(i - 1) * n + c],
                _ => match state.kind {
                    SharpKind::Planar => wi - state.left[c],
                    SharpKind::Radial => 0.0,
                },
            };
            let lap = (face_out * out_diff - face_in * in_diff) / (h * h * shell_i);
            next[i * n + c] = wi + dt * lap;
        }
    }
    for i in 0..nodes {
        let v = &mut next[i * n..(i + 1) * n];
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm >= 1e-6) {
            return Err(LabError::Degenerate { node: i, norm });
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let old = &state.omega[i * n..(i + 1) * n];
        let tang: f64 = v.iter().zip(old).map(|(a, b)| (a - b) * b).sum();
        diag.tangency = diag.tangency.max(tang.abs());
    }
    if let Some((_, (wg, sm, sp, tm, tp))) = &coupling {
        let mut jump: f64 = 0.0;
        let mut cont: f64 = 0.0;
        let (k, _) = coupling.as_ref().unwrap();
        for c in 0..n {
            // slopes as realized by the ghost values g⁻ = ω_k + h s⁻ and g⁺ = ω_{k+1} − h s⁺
            let wk = state.omega[k * n + c];
            let wk1 = state.omega[(k + 1) * n + c];
            let sm_used = ((wk + h * sm[c]) - wk) / h;
            let sp_used = (wk1 - (wk1 - h * sp[c])) / h;
            let j = state.b * state.b * sp_used - state.a * state.a * sm_used;
            jump += j * j;
            let gap = (wk + tm * sm[c]) - (wk1 - tp * sp[c]);
            cont += gap * gap;
        }
        diag.jump_residual = jump.sqrt();
        diag.continuity = cont.sqrt();
        let norm = wg.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm >= 1e-6) {
            return Err(LabError::Degenerate { node: *k, norm });
        }
        state.omega_gamma = wg.iter().map(|x| x / norm).collect();
    }
    state.omega = next;
    Ok(diag)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharpRow {
    pub t: f64,
    pub radius: f64,
    pub jump_residual: f64,
    pub continuity: f64,
    pub phi_gamma: f64,
}

#[derive(Debug, Clone)]
pub struct SharpTrajectory {
    pub rows: Vec<SharpRow>,
    pub final_state: SharpState,
    pub max_jump_residual: f64,
    pub max_norm_defect: f64,
    pub extinct_at: Option<f64>,
}

/// Lie splitting: mcf_step then harmonic_flow_step (substepped) each dt.
pub fn run_sharp(cfg: &SharpConfig) -> Result<SharpTrajectory> {
    let mut state = SharpState::from_config(cfg)?;
    let steps = (cfg.t_end / cfg.dt).round() as usize;
    let every = cfg.record_every.max(1);
    let sub = (cfg.dt / cfg.heat_dt_max()).ceil().max(1.0) as usize;
    let dt_heat = cfg.dt / sub as f64;
    let mut rows = vec![row(&state, &StepDiagnostics::default())];
    let (mut max_jump, mut max_defect) = (0.0f64, 0.0f64);
    for step in 1..=steps {
        mcf_step(&mut state, cfg.dt);
        let mut last = StepDiagnostics::default();
        for _ in 0..sub {
            last = harmonic_flow_step(&mut state, dt_heat)?;
            max_jump = max_jump.max(last.jump_residual);
        }
        state.t = step as f64 * cfg.dt;
        for i in 0..state.nodes() {
            let norm: f64 = state.node(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            max_defect = max_defect.max((norm - 1.0).abs());
        }
        if step % every == 0 || step == steps {
            rows.push(row(&state, &last));
        }
    }
    Ok(SharpTrajectory { rows, extinct_at: state.extinct_at, final_state: state, max_jump_residual: max_jump, max_norm_defect: max_defect })
}

fn row(state: &SharpState, d: &StepDiagnostics) -> SharpRow {
    SharpRow {
        t: state.t,
        radius: state.interface,
        jump_residual: d.jump_residual,
        continuity: d.continuity,
        phi_gamma: state.phi_gamma(),
    }
}

impl SharpTrajectory {
    /// Writes `sharp_metrics.csv` and `sharp_slice.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("sharp_metrics.csv"))?;
        w.write_record(["t", "radius", "jump_residual", "continuity", "phi_gamma"])?;
        for r in &self.rows {
            w.write_record([fmt(r.t), fmt(r.radius), fmt(r.jump_residual), fmt(r.continuity), fmt(r.phi_gamma)])?;
        }
        w.flush()?;
        let s = &self.final_state;
        let mut w = csv::Writer::from_path(dir.join("sharp_slice.csv"))?;
        let mut header = vec!["r".to_string(), "phi".to_string()];
        header.extend((0..s.n).map(|c| format!("omega{c}")));
        w.write_record(&header)?;
        let phi = s.angles();
        for i in 0..s.nodes() {
            let mut rec = vec![fmt(s.position(i)), fmt(phi[i])];
            rec.extend(s.node(i).iter().map(|x| fmt(*x)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Exact circle radius under Ṙ = −(m−1)/R; zero after extinction.
pub fn mcf_radius(r0: f64, m: usize, t: f64) -> f64 {
    let r2 = r0 * r0 - 2.0 * (m as f64 - 1.0) * t;
    if r2 > 0.0 { r2.sqrt() } else { 0.0 }
}
