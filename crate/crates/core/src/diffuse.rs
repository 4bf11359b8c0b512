//! Time integration of ∂ₜu = Δu − ε⁻²f(u) on periodic or radial grids.
//!
//! The explicit scheme is forward Euler; the IMEX scheme solves
//! (I − dt·Δ)u' = u − dt·ε⁻²f(u) per component. Both are discrete gradient
//! steps of `fields::energy`, so under the step-size bounds below the energy
//! cannot increase.

use std::path::{Path, PathBuf};

use crate::error::{LabError, Result};
use crate::expansion::ApproxSolution;
use crate::fields::{
    energy, interface_extract, laplacian_into, read_checkpoint, write_checkpoint, write_slice_csv,
    ExtractHint, Grid, InterfaceGeometry, OuterCondition, PeriodicGrid, VectorField,
};
use crate::numerics::{solve_cyclic_constant, solve_tridiagonal};
use crate::potential::PotentialParams;
use crate::profile::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Explicit,
    Imex,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Explicit => "explicit",
            Scheme::Imex => "imex",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "explicit" => Ok(Scheme::Explicit),
            "imex" => Ok(Scheme::Imex),
            other => Err(LabError::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// The same vector at every node.
    Uniform(Vec<f64>),
    /// A prepared field, e.g. from [`seed_field`]. Its grid wins over the
    /// config grid for the outer Dirichlet value.
    Field(VectorField),
    /// A checkpoint; the run resumes at the stored time.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffuseRunConfig {
    pub eps: f64,
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub grid: Grid,
    pub n: usize,
    pub potential: PotentialParams,
    pub init: InitialCondition,
    /// c in dt ≤ 0.2·min(h², c·ε²). `None` derives 5/L_F from the initial data.
    pub stability: Option<f64>,
    /// Steps between checkpoints (0: none).
    pub checkpoint_every: usize,
    /// Steps between metric rows (0: first and last only).
    pub metrics_every: usize,
    pub out_dir: Option<PathBuf>,
}

impl DiffuseRunConfig {
    pub fn new(eps: f64, dt: f64, t_end: f64, scheme: Scheme, grid: Grid, potential: PotentialParams, init: InitialCondition) -> Self {
        let n = match &init {
            InitialCondition::Uniform(v) => v.len(),
            InitialCondition::Field(f) => f.n,
            InitialCondition::File(_) => 2,
        };
        Self {
            eps,
            dt,
            t_end,
            scheme,
            grid,
            n,
            potential,
            init,
            stability: None,
            checkpoint_every: 0,
            metrics_every: 0,
            out_dir: None,
        }
    }

    fn check_basic(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(LabError::InvalidParams(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(LabError::InvalidParams(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(LabError::InvalidParams(format!("t_end must be ≥ 0, got {}", self.t_end)));
        }
        if self.n == 0 {
            return Err(LabError::InvalidParams("need n ≥ 1".into()));
        }
        Ok(())
    }

    /// Largest admissible dt for the resolved stability constant c.
    pub fn dt_max(&self, c: f64) -> f64 {
        let eps2 = self.eps * self.eps;
        let reaction = 0.2 * c * eps2;
        match self.scheme {
            Scheme::Imex => reaction,
            Scheme::Explicit => {
                let h = self.grid.min_spacing();
                // 0.2·cε² = ε²/L_F for the default c; the sum keeps the step
                // under 1/L for the full discrete Hessian
                let lf = 5.0 / c;
                let full = 1.0 / (self.grid.laplacian_bound() + lf / eps2);
                (0.2 * h * h).min(reaction).min(full)
            }
        }
    }
}

/// sup over ρ ∈ [0, ρ_max] of the largest positive eigenvalue of D²F, i.e.
/// max(f_A(ρ), f_B(ρ), 0).
pub fn reaction_lipschitz(pot: &PotentialParams, rho_max: f64) -> f64 {
    let samples = 4000;
    (0..=samples)
        .map(|i| {
            let rho = rho_max * i as f64 / samples as f64;
            pot.f_a(rho).max(pot.f_b(rho))
        })
        .fold(0.0, f64::max)
}

/// Default stability constant 5/L_F with L_F over moduli up to
/// 1.05·max(b, max |u₀|).
pub fn default_stability(pot: &PotentialParams, u0: &VectorField) -> f64 {
    let rho_max = 1.05 * pot.b.max(u0.max_norm());
    5.0 / reaction_lipschitz(pot, rho_max)
}

/// Normal coordinate of node k used to sample a 1D seed: the radius on radial
/// grids, x on 1D periodic grids, distance to the box centre on 2D ones.
fn normal_coordinate(grid: &Grid, k: usize) -> f64 {
    match grid {
        Grid::Radial(g) => g.radius(k),
        Grid::Periodic(g) => {
            let x = g.coords(k);
            if g.m == 1 {
                x[0]
            } else {
                x.iter().zip(&g.lengths).map(|(xi, l)| (xi - 0.5 * l).powi(2)).sum::<f64>().sqrt()
            }
        }
    }
}

/// u^K(·, t) sampled on the grid. On a radial Dirichlet grid the outer value
/// is reset to u^K at the ghost node.
pub fn seed_field(grid: &Grid, sol: &ApproxSolution, t: f64) -> Result<VectorField> {
    let mut grid = grid.clone();
    if let Grid::Radial(g) = &mut grid {
        if let OuterCondition::Dirichlet(_) = g.outer {
            g.outer = OuterCondition::Dirichlet(sol.eval(g.length + 0.5 * g.spacing(), t)?);
        }
    }
    let n = sol.n();
    let mut values = Vec::with_capacity(grid.num_nodes() * n);
    for k in 0..grid.num_nodes() {
        values.extend(sol.eval(normal_coordinate(&grid, k), t)?);
    }
    Ok(VectorField { grid, n, values })
}

fn same_shape(a: &Grid, b: &Grid) -> bool {
    match (a, b) {
        (Grid::Periodic(x), Grid::Periodic(y)) => x == y,
        (Grid::Radial(x), Grid::Radial(y)) => {
            x.m == y.m
                && x.nodes == y.nodes
                && x.length == y.length
                && matches!(
                    (&x.outer, &y.outer),
                    (OuterCondition::Neumann, OuterCondition::Neumann)
                        | (OuterCondition::Dirichlet(_), OuterCondition::Dirichlet(_))
                )
        }
        _ => false,
    }
}

/// Initial field and start time.
pub fn initial_state(cfg: &DiffuseRunConfig) -> Result<(VectorField, f64)> {
    let (field, t0) = match &cfg.init {
        InitialCondition::Uniform(v) => {
            if v.len() != cfg.n {
                return Err(LabError::Config(format!("uniform value has {} components, n = {}", v.len(), cfg.n)));
            }
            (VectorField::from_fn(cfg.grid.clone(), cfg.n, |_| v.clone()), 0.0)
        }
        InitialCondition::Field(f) => (f.clone(), 0.0),
        InitialCondition::File(p) => {
            let ck = read_checkpoint(p)?;
            (ck.field, ck.time)
        }
    };
    if !same_shape(&field.grid, &cfg.grid) {
        return Err(LabError::Config("initial field grid does not match the configured grid".into()));
    }
    if field.n != cfg.n {
        return Err(LabError::Config(format!("initial field has n = {}, config n = {}", field.n, cfg.n)));
    }
    if !field.is_finite() {
        return Err(LabError::InvalidParams("initial field is not finite".into()));
    }
    Ok((field, t0))
}

/// Scratch space and the (I − dt·Δ) factors for one grid and dt.
struct Stepper {
    lap: Vec<f64>,
    react: Vec<f64>,
    col: Vec<f64>,
    /// radial IMEX: tridiagonal rows and the outer-face coefficient
    tri: Option<(Vec<f64>, Vec<f64>, Vec<f64>, f64)>,
}

impl Stepper {
    fn new(grid: &Grid, n: usize, dt: f64, scheme: Scheme) -> Self {
        let len = grid.num_nodes() * n;
        let tri = match (scheme, grid) {
            (Scheme::Imex, Grid::Radial(g)) => {
                let h = g.spacing();
                let nodes = g.nodes;
                let (mut lower, mut diag, mut upper) = (vec![0.0; nodes], vec![1.0; nodes], vec![0.0; nodes]);
                let mut outer_coeff = 0.0;
                for i in 0..nodes {
                    let s = dt / (h * h * g.shell(g.radius(i)));
                    let face_out = g.shell((i + 1) as f64 * h);
                    let face_in = if i == 0 { 0.0 } else { g.shell(i as f64 * h) };
                    lower[i] = -s * face_in;
                    diag[i] += s * face_in;
                    if i + 1 < nodes {
                        upper[i] = -s * face_out;
                        diag[i] += s * face_out;
                    } else if let OuterCondition::Dirichlet(_) = g.outer {
                        diag[i] += s * face_out;
                        outer_coeff = s * face_out;
                    }
                }
                Some((lower, diag, upper, outer_coeff))
            }
            _ => None,
        };
        Self { lap: vec![0.0; len], react: vec![0.0; len], col: Vec::new(), tri }
    }

    fn step(&mut self, u: &mut VectorField, cfg: &DiffuseRunConfig, t_after: f64) -> Result<()> {
        let n = u.n;
        let inv_eps2 = 1.0 / (cfg.eps * cfg.eps);
        let dt = cfg.dt;
        for k in 0..u.num_nodes() {
            cfg.potential.f_grad_into(u.node(k), &mut self.react[k * n..(k + 1) * n]);
        }
        match cfg.scheme {
            Scheme::Explicit => {
                laplacian_into(u, &mut self.lap);
                for ((v, l), f) in u.values.iter_mut().zip(&self.lap).zip(&self.react) {
                    *v += dt * (l - inv_eps2 * f);
                }
            }
            Scheme::Imex => {
                for (v, f) in u.values.iter_mut().zip(&self.react) {
                    *v -= dt * inv_eps2 * f;
                }
                self.implicit_solve(u, dt)?;
            }
        }
        if !u.is_finite() {
            let max_abs = u.values.iter().filter(|v| v.is_finite()).fold(0.0f64, |m, v| m.max(v.abs()));
            let max_abs = if u.values.iter().any(|v| v.is_infinite()) { f64::INFINITY } else { max_abs };
            return Err(LabError::BlowUp { t: t_after, max_abs });
        }
        Ok(())
    }

    fn implicit_solve(&mut self, u: &mut VectorField, dt: f64) -> Result<()> {
        let n = u.n;
        let nodes = u.num_nodes();
        let grid = u.grid.clone();
        for c in 0..n {
            self.col.clear();
            self.col.extend((0..nodes).map(|k| u.values[k * n + c]));
            match &grid {
                Grid::Periodic(g) if g.m == 1 => {
                    let s = dt / g.spacing(0).powi(2);
                    solve_cyclic_constant(1.0 + 2.0 * s, -s, &mut self.col);
                }
                Grid::Periodic(g) => {
                    let rhs = self.col.clone();
                    periodic_cg(g, dt, &rhs, &mut self.col)?;
                }
                Grid::Radial(g) => {
                    let (lower, diag, upper, outer_coeff) = self.tri.as_ref().expect("radial factors");
                    if let OuterCondition::Dirichlet(v) = &g.outer {
                        self.col[nodes - 1] += outer_coeff * v[c];
                    }
                    solve_tridiagonal(lower, diag, upper, &mut self.col);
                }
            }
            for k in 0..nodes {
                u.values[k * n + c] = self.col[k];
            }
        }
        Ok(())
    }
}

fn apply_periodic(g: &PeriodicGrid, dt: f64, x: &[f64], out: &mut [f64]) {
    out.copy_from_slice(x);
    for axis in 0..g.m {
        let s = dt / g.spacing(axis).powi(2);
        for k in 0..x.len() {
            let kp = g.neighbour(k, axis, true);
            let km = g.neighbour(k, axis, false);
            out[k] -= s * (x[kp] - 2.0 * x[k] + x[km]);
        }
    }
}

/// Conjugate gradients for (I − dt·Δ)x = rhs; `x` holds the initial guess.
fn periodic_cg(g: &PeriodicGrid, dt: f64, rhs: &[f64], x: &mut [f64]) -> Result<()> {
    let len = rhs.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let mut ax = vec![0.0; len];
    apply_periodic(g, dt, x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let tol = 1e-28 * dot(rhs, rhs).max(f64::MIN_POSITIVE);
    let mut ap = vec![0.0; len];
    for _ in 0..2000 {
        if rr <= tol {
            return Ok(());
        }
        apply_periodic(g, dt, &p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..len {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..len {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(LabError::IterationCap { iterations: 2000, residual: rr.sqrt() })
}

/// One time step. `t_after` is only used to label a blow-up.
pub fn step(u: &VectorField, cfg: &DiffuseRunConfig, t_after: f64) -> Result<VectorField> {
    cfg.check_basic()?;
    if !u.is_finite() {
        return Err(LabError::InvalidParams("step needs a finite field".into()));
    }
    let mut out = u.clone();
    Stepper::new(&u.grid, u.n, cfg.dt, cfg.scheme).step(&mut out, cfg, t_after)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub step: usize,
    pub t: f64,
    pub energy: f64,
    /// Interface position (radius or offset) at |u| = (a+b)/2; NaN if none.
    pub radius: f64,
    pub modulus_min: f64,
    pub modulus_max: f64,
}

#[derive(Debug, Clone)]
pub struct DiffuseTrajectory {
    pub rows: Vec<MetricRow>,
    pub final_field: VectorField,
    pub final_time: f64,
    pub steps: usize,
    /// Resolved stability constant c.
    pub stability: f64,
    /// Energy after every step, starting with the initial value.
    pub energies: Vec<f64>,
    /// Largest (E_{k+1} − E_k)/|E_k| over the run (negative when decreasing).
    pub max_energy_increase: f64,
    pub checkpoints: Vec<PathBuf>,
}

impl DiffuseTrajectory {
    /// Steps with E_{k+1} > E_k + tol·|E_k|.
    pub fn energy_violations(&self, tol: f64) -> usize {
        self.energies.windows(2).filter(|w| w[1] > w[0] + tol * w[0].abs()).count()
    }

    pub fn write_metrics(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "t", "energy", "radius", "modulus_min", "modulus_max"])?;
        for r in &self.rows {
            w.write_record([
                r.step.to_string(),
                fmt(r.t),
                fmt(r.energy),
                fmt(r.radius),
                fmt(r.modulus_min),
                fmt(r.modulus_max),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn extract_hint(grid: &Grid) -> ExtractHint {
    match grid {
        Grid::Radial(g) => ExtractHint::Radial { center: vec![0.0; g.m] },
        Grid::Periodic(g) if g.m == 1 => ExtractHint::Planar { axis: 0 },
        Grid::Periodic(g) => ExtractHint::Radial { center: g.lengths.iter().map(|l| 0.5 * l).collect() },
    }
}

fn metric_row(u: &VectorField, step: usize, t: f64, e: f64, pot: &PotentialParams) -> MetricRow {
    let radius = match interface_extract(u, 0.5 * (pot.a + pot.b), &extract_hint(&u.grid)) {
        Ok(InterfaceGeometry::Radial { radius, .. }) => radius,
        Ok(InterfaceGeometry::Planar { offset, .. }) => offset,
        Err(_) => f64::NAN,
    };
    let moduli = u.moduli();
    MetricRow {
        step,
        t,
        energy: e,
        radius,
        modulus_min: moduli.iter().cloned().fold(f64::INFINITY, f64::min),
        modulus_max: moduli.iter().cloned().fold(0.0, f64::max),
    }
}

/// Steps from the initial time to t_end on the uniform grid t_k = k·dt, so a
/// run resumed from a checkpoint repeats the same arithmetic bit for bit.
pub fn run(cfg: &DiffuseRunConfig) -> Result<DiffuseTrajectory> {
    cfg.check_basic()?;
    let (mut u, t0) = initial_state(cfg)?;
    let stability = match cfg.stability {
        Some(c) if c > 0.0 && c.is_finite() => c,
        Some(c) => return Err(LabError::InvalidParams(format!("stability constant must be positive, got {c}"))),
        None => default_stability(&cfg.potential, &u),
    };
    let dt_max = cfg.dt_max(stability);
    if cfg.dt > dt_max * (1.0 + 1e-12) {
        return Err(LabError::InvalidParams(format!(
            "dt = {} exceeds the {} stability bound {dt_max}",
            cfg.dt,
            cfg.scheme.name()
        )));
    }
    let first = (t0 / cfg.dt).round() as usize;
    let last = (cfg.t_end / cfg.dt).round() as usize;
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut stepper = Stepper::new(&u.grid, u.n, cfg.dt, cfg.scheme);
    let mut e = energy(&u, cfg.eps, &cfg.potential);
    let mut energies = vec![e];
    let mut rows = vec![metric_row(&u, first, t0, e, &cfg.potential)];
    let mut checkpoints = Vec::new();
    let mut max_inc = f64::NEG_INFINITY;
    let mut t = t0;
    for k in first + 1..=last.max(first) {
        t = k as f64 * cfg.dt;
        stepper.step(&mut u, cfg, t)?;
        let e_new = energy(&u, cfg.eps, &cfg.potential);
        max_inc = max_inc.max((e_new - e) / e.abs().max(f64::MIN_POSITIVE));
        e = e_new;
        energies.push(e);
        if k == last || (cfg.metrics_every > 0 && k % cfg.metrics_every == 0) {
            rows.push(metric_row(&u, k, t, e, &cfg.potential));
        }
        if let Some(dir) = &cfg.out_dir {
            if cfg.checkpoint_every > 0 && k % cfg.checkpoint_every == 0 {
                let path = dir.join(format!("checkpoint_{k:08}.bin"));
                write_checkpoint(&path, &u, t, cfg.eps)?;
                checkpoints.push(path);
            }
        }
    }
    let traj = DiffuseTrajectory {
        rows,
        final_field: u,
        final_time: t,
        steps: last.saturating_sub(first),
        stability,
        energies,
        max_energy_increase: if max_inc.is_finite() { max_inc } else { 0.0 },
        checkpoints,
    };
    if let Some(dir) = &cfg.out_dir {
        traj.write_metrics(&dir.join("metrics.csv"))?;
        write_slice_csv(&dir.join("final_slice.csv"), &traj.final_field)?;
    }
    Ok(traj)
}
