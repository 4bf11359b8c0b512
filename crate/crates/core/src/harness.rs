//! Run configuration, subcommand drivers, ε-sweep convergence studies and
//! result persistence.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::diffuse::{self, DiffuseRunConfig, InitialCondition, Scheme};
use crate::expansion::{
    build_uk, compat_mcf_quadrature, jump_identity_check, probe_grid, residual, telescoping_check, ApproxConfig,
    ApproxSolution, Corrections, InterfaceJet, LayerGeometry,
};
use crate::fields::{interface_extract, read_checkpoint, ExtractHint, Grid, InterfaceGeometry, OuterCondition, PeriodicGrid, RadialGrid, VectorField};
use crate::numerics::linear_fit;
use crate::profile::{fmt, ProfileParams, ProfileTable};
use crate::sharp::{run_sharp, AngleProfile, DirectorField, SharpConfig, SharpKind, SharpTrajectory};
use crate::spectral::{sweep, FormKind, FormSpec, Resolution, SweepReport, VectorData};
use crate::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridKind {
    Radial,
    Periodic,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitKind {
    /// u^K(·, 0) from the matched expansion.
    Seed,
    Uniform(Vec<f64>),
    File(PathBuf),
}

/// Flat key = value run configuration. Every key has a default, so an empty
/// file is a valid config.
#[derive(Debug, Clone, PartialEq)]
pub struct LabConfig {
    pub a: f64,
    pub b: f64,
    pub eps: f64,
    pub eps_list: Vec<f64>,
    /// `None`: dt_safety × the stability bound.
    pub dt: Option<f64>,
    pub dt_safety: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub grid: GridKind,
    pub m: usize,
    pub nx: usize,
    pub length: f64,
    pub n: usize,
    pub outer: String,
    pub init: InitKind,
    /// Interface radius (m = 2) or offset (m = 1) at t = 0.
    pub r0: f64,
    pub phi0: f64,
    /// Director slope on the inner side; the outer side gets a²/b² of it
    /// unless `slope_plus` is set.
    pub slope: f64,
    pub slope_plus: Option<f64>,
    /// Inner/outer blending half-width; `None`: max(0.1, 6ε).
    pub delta: Option<f64>,
    pub order: usize,
    pub checkpoint_every: usize,
    pub metrics_every: usize,
    pub stability: Option<f64>,
    pub z_max: f64,
    pub table_nodes: usize,
    pub form: FormKind,
    pub core_h: f64,
    pub c_cfg: Option<f64>,
    pub seed: u64,
    pub probe_time: f64,
    pub sharp_nodes: usize,
    pub sharp_dt: f64,
    pub out_dir: Option<PathBuf>,
    /// Worker threads; `None` lets rayon decide. Not part of the hash.
    pub threads: Option<usize>,
    /// Uniform spectral mesh; `None`: graded mesh with `core_h`.
    pub spectral_nodes: Option<usize>,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 2.0,
            eps: 0.05,
            eps_list: vec![0.1, 0.05, 0.025],
            dt: None,
            dt_safety: 0.05,
            t_end: 0.01,
            scheme: Scheme::Imex,
            grid: GridKind::Radial,
            m: 2,
            nx: 512,
            length: 1.0,
            n: 2,
            outer: "dirichlet".into(),
            init: InitKind::Seed,
            r0: 0.4,
            phi0: 0.3,
            slope: 1.0,
            slope_plus: None,
            delta: None,
            order: 0,
            checkpoint_every: 0,
            metrics_every: 0,
            stability: None,
            z_max: 10.0,
            table_nodes: 4001,
            form: FormKind::Q0,
            core_h: 0.04,
            c_cfg: None,
            seed: 7,
            probe_time: 0.01,
            sharp_nodes: 512,
            sharp_dt: 1e-5,
            out_dir: None,
            threads: None,
            spectral_nodes: None,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.parse().map_err(|_| LabError::Config(format!("{key}: expected a number, got {v:?}")))?;
    if !x.is_finite() {
        return Err(LabError::Config(format!("{key}: value must be finite")));
    }
    Ok(x)
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| LabError::Config(format!("{key}: expected a non-negative integer, got {v:?}")))
}

fn parse_auto(key: &str, v: &str) -> Result<Option<f64>> {
    if v == "auto" { Ok(None) } else { parse_f64(key, v).map(Some) }
}

fn parse_auto_count(key: &str, v: &str) -> Result<Option<usize>> {
    if v == "auto" { Ok(None) } else { parse_usize(key, v).map(Some) }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| parse_f64(key, s.trim())).collect()
}

fn show_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

fn show_auto(v: Option<f64>) -> String {
    v.map_or("auto".into(), |x| format!("{x:?}"))
}

impl LabConfig {
    /// Sets one key.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "a" => self.a = parse_f64(key, v)?,
            "b" => self.b = parse_f64(key, v)?,
            "eps" => self.eps = parse_f64(key, v)?,
            "eps_list" => self.eps_list = parse_list(key, v)?,
            "dt" => self.dt = parse_auto(key, v)?,
            "dt_safety" => self.dt_safety = parse_f64(key, v)?,
            "t_end" => self.t_end = parse_f64(key, v)?,
            "scheme" => self.scheme = Scheme::parse(v)?,
            "grid" => {
                self.grid = match v {
                    "radial" => GridKind::Radial,
                    "periodic" => GridKind::Periodic,
                    _ => return Err(LabError::Config(format!("grid: expected radial or periodic, got {v:?}"))),
                }
            }
            "m" => self.m = parse_usize(key, v)?,
            "nx" => self.nx = parse_usize(key, v)?,
            "length" => self.length = parse_f64(key, v)?,
            "n" => self.n = parse_usize(key, v)?,
            "outer" => {
                if v != "dirichlet" && v != "neumann" {
                    return Err(LabError::Config(format!("outer: expected dirichlet or neumann, got {v:?}")));
                }
                self.outer = v.into();
            }
            "init" => {
                self.init = if v == "seed" {
                    InitKind::Seed
                } else if let Some(rest) = v.strip_prefix("uniform:") {
                    InitKind::Uniform(parse_list(key, rest)?)
                } else if let Some(rest) = v.strip_prefix("file:") {
                    InitKind::File(PathBuf::from(rest))
                } else {
                    return Err(LabError::Config(format!("init: expected seed, uniform:<v,..> or file:<path>, got {v:?}")));
                }
            }
            "r0" => self.r0 = parse_f64(key, v)?,
            "phi0" => self.phi0 = parse_f64(key, v)?,
            "slope" => self.slope = parse_f64(key, v)?,
            "slope_plus" => self.slope_plus = parse_auto(key, v)?,
            "delta" => self.delta = parse_auto(key, v)?,
            "order" => self.order = parse_usize(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse_usize(key, v)?,
            "metrics_every" => self.metrics_every = parse_usize(key, v)?,
            "stability" => self.stability = parse_auto(key, v)?,
            "z_max" => self.z_max = parse_f64(key, v)?,
            "table_nodes" => self.table_nodes = parse_usize(key, v)?,
            "form" => self.form = FormKind::parse(v).map_err(|e| LabError::Config(e.to_string()))?,
            "core_h" => self.core_h = parse_f64(key, v)?,
            "c_cfg" => self.c_cfg = parse_auto(key, v)?,
            "seed" => self.seed = v.parse().map_err(|_| LabError::Config(format!("seed: expected an integer, got {v:?}")))?,
            "probe_time" => self.probe_time = parse_f64(key, v)?,
            "sharp_nodes" => self.sharp_nodes = parse_usize(key, v)?,
            "sharp_dt" => self.sharp_dt = parse_f64(key, v)?,
            "out_dir" => self.out_dir = if v == "none" { None } else { Some(PathBuf::from(v)) },
            "threads" => self.threads = parse_auto_count(key, v)?,
            "spectral_nodes" => self.spectral_nodes = parse_auto_count(key, v)?,
            _ => return Err(LabError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment, blank lines are
    /// skipped, repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| LabError::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(LabError::Config(format!("line {}: duplicate key {k:?}", lineno + 1)));
            }
            cfg.set(k, v).map_err(|e| match e {
                LabError::Config(msg) => LabError::Config(format!("line {}: {msg}", lineno + 1)),
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let init = match &self.init {
            InitKind::Seed => "seed".to_string(),
            InitKind::Uniform(v) => format!("uniform:{}", show_list(v)),
            InitKind::File(p) => format!("file:{}", p.display()),
        };
        vec![
            ("a", format!("{:?}", self.a)),
            ("b", format!("{:?}", self.b)),
            ("eps", format!("{:?}", self.eps)),
            ("eps_list", show_list(&self.eps_list)),
            ("dt", show_auto(self.dt)),
            ("dt_safety", format!("{:?}", self.dt_safety)),
            ("t_end", format!("{:?}", self.t_end)),
            ("scheme", self.scheme.name().into()),
            ("grid", match self.grid { GridKind::Radial => "radial".into(), GridKind::Periodic => "periodic".into() }),
            ("m", self.m.to_string()),
            ("nx", self.nx.to_string()),
            ("length", format!("{:?}", self.length)),
            ("n", self.n.to_string()),
            ("outer", self.outer.clone()),
            ("init", init),
            ("r0", format!("{:?}", self.r0)),
            ("phi0", format!("{:?}", self.phi0)),
            ("slope", format!("{:?}", self.slope)),
            ("slope_plus", show_auto(self.slope_plus)),
            ("delta", show_auto(self.delta)),
            ("order", self.order.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("metrics_every", self.metrics_every.to_string()),
            ("stability", show_auto(self.stability)),
            ("z_max", format!("{:?}", self.z_max)),
            ("table_nodes", self.table_nodes.to_string()),
            ("form", self.form.name().into()),
            ("core_h", format!("{:?}", self.core_h)),
            ("c_cfg", show_auto(self.c_cfg)),
            ("seed", self.seed.to_string()),
            ("probe_time", format!("{:?}", self.probe_time)),
            ("sharp_nodes", self.sharp_nodes.to_string()),
            ("sharp_dt", format!("{:?}", self.sharp_dt)),
            ("spectral_nodes", self.spectral_nodes.map_or("auto".into(), |k| k.to_string())),
            ("out_dir", self.out_dir.as_ref().map_or("none".into(), |p| p.display().to_string())),
            ("threads", self.threads.map_or("auto".into(), |k| k.to_string())),
        ]
    }

    /// Canonical text: every key, fixed order, shortest round-trip floats.
    pub fn serialize(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// sha256 of the canonical text without `out_dir` and `threads`, which
    /// do not change results.
    pub fn hash(&self) -> String {
        let text: String = self
            .entries()
            .into_iter()
            .filter(|(k, _)| *k != "out_dir" && *k != "threads")
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        hex(&Sha256::digest(text.as_bytes()))
    }

    pub fn params(&self) -> Result<ProfileParams> {
        ProfileParams::new(self.a, self.b).map_err(|e| LabError::Config(e.to_string()))
    }

    /// ω⁻ smooth at the origin, ω⁺ affine, continuous at r0 with slopes s and
    /// s⁺ (jump-consistent a²/b²·s unless overridden).
    pub fn directors(&self) -> Result<(DirectorField, DirectorField)> {
        let s_plus = self.slope_plus.unwrap_or(self.a * self.a / (self.b * self.b) * self.slope);
        let minus = DirectorField::new(self.n, AngleProfile::Quadratic { phi0: self.phi0, slope: self.slope, r0: self.r0 })?;
        let plus = DirectorField::new(self.n, AngleProfile::Affine { phi0: self.phi0, slope: s_plus, r0: self.r0 })?;
        Ok((minus, plus))
    }

    pub fn layer_geometry(&self) -> Result<LayerGeometry> {
        match self.m {
            1 => Ok(LayerGeometry::Planar { offset: self.r0 }),
            2 => Ok(LayerGeometry::Radial { r0: self.r0 }),
            m => Err(LabError::Config(format!("m must be 1 or 2, got {m}"))),
        }
    }

    pub fn delta_for(&self, eps: f64) -> f64 {
        self.delta.unwrap_or((6.0 * eps).max(0.1))
    }

    /// u^K for this config at the given ε.
    pub fn approx(&self, eps: f64) -> Result<ApproxSolution> {
        let (omega_minus, omega_plus) = self.directors()?;
        let cfg = ApproxConfig {
            order: self.order,
            eps,
            delta: self.delta_for(eps),
            geometry: self.layer_geometry()?,
            omega_minus,
            omega_plus,
        };
        build_uk(self.params()?, cfg, Corrections::default())
    }

    pub fn diffuse_grid(&self, nodes: usize) -> Result<Grid> {
        let grid = match self.grid {
            GridKind::Radial => {
                let outer = if self.outer == "dirichlet" {
                    let v = match &self.init {
                        InitKind::Uniform(v) => v.clone(),
                        _ => vec![0.0; self.n],
                    };
                    OuterCondition::Dirichlet(v)
                } else {
                    OuterCondition::Neumann
                };
                Grid::Radial(RadialGrid::new(self.m, nodes, self.length, outer)?)
            }
            GridKind::Periodic => Grid::Periodic(PeriodicGrid::new(vec![nodes; self.m], vec![self.length; self.m])?),
        };
        Ok(grid)
    }

    /// Diffuse run at ε on `nodes` nodes (per axis), with dt resolved.
    pub fn diffuse_run(&self, eps: f64, nodes: usize, t_end: f64) -> Result<DiffuseRunConfig> {
        let grid = self.diffuse_grid(nodes)?;
        let init = match &self.init {
            InitKind::Seed => InitialCondition::Field(diffuse::seed_field(&grid, &self.approx(eps)?, 0.0)?),
            InitKind::Uniform(v) => {
                if v.len() != self.n {
                    return Err(LabError::Config(format!("init has {} components, n = {}", v.len(), self.n)));
                }
                InitialCondition::Uniform(v.clone())
            }
            InitKind::File(p) => InitialCondition::File(p.clone()),
        };
        let pot = self.params()?.potential();
        let mut cfg = DiffuseRunConfig::new(eps, 1.0, t_end, self.scheme, grid, pot, init);
        cfg.n = self.n;
        cfg.stability = self.stability;
        cfg.checkpoint_every = self.checkpoint_every;
        cfg.metrics_every = self.metrics_every;
        cfg.dt = match self.dt {
            Some(dt) => dt,
            None => {
                let c = match self.stability {
                    Some(c) => c,
                    None => {
                        let u0 = match &cfg.init {
                            InitialCondition::Field(f) => f.clone(),
                            InitialCondition::Uniform(v) => VectorField::from_fn(cfg.grid.clone(), v.len(), |_| v.clone()),
                            InitialCondition::File(p) => read_checkpoint(p)?.field,
                        };
                        diffuse::default_stability(&pot, &u0)
                    }
                };
                self.dt_safety * cfg.dt_max(c)
            }
        };
        Ok(cfg)
    }

    pub fn sharp_config(&self, t_end: f64) -> Result<SharpConfig> {
        let (omega_minus, omega_plus) = self.directors()?;
        let kind = match self.m {
            1 => SharpKind::Planar,
            2 => SharpKind::Radial,
            m => return Err(LabError::Config(format!("m must be 1 or 2, got {m}"))),
        };
        Ok(SharpConfig {
            a: self.a,
            b: self.b,
            kind,
            nodes: self.sharp_nodes,
            length: self.length,
            dt: self.sharp_dt,
            t_end,
            interface: self.r0,
            omega_minus,
            omega_plus,
            record_every: if self.metrics_every == 0 { 100 } else { self.metrics_every },
        })
    }

    pub fn form_spec(&self, eps: f64) -> Result<FormSpec> {
        let mut spec = FormSpec::new(self.form, eps, self.params()?);
        spec.resolution = match self.spectral_nodes {
            Some(k) => Resolution::Uniform(k),
            None => Resolution::Graded { core_h: self.core_h, core: 12.0, max_h: 0.25 },
        };
        if self.form == FormKind::Vector {
            // continuous through r = 0 with jump-consistent slopes
            let s_plus = self.slope_plus.unwrap_or(self.a * self.a / (self.b * self.b) * self.slope);
            spec.vector = Some(VectorData {
                omega_minus: DirectorField::new(self.n, AngleProfile::Affine { phi0: self.phi0, slope: self.slope, r0: 0.0 })?,
                omega_plus: DirectorField::new(self.n, AngleProfile::Affine { phi0: self.phi0, slope: s_plus, r0: 0.0 })?,
            });
        }
        Ok(spec)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Profile table at `csv_path` plus its scalar checks in `<stem>_checks.csv`
/// next to it.
pub fn cmd_profile(cfg: &LabConfig, csv_path: &Path) -> Result<ProfileTable> {
    let dir = csv_path.parent().unwrap_or(Path::new("."));
    out_dir(dir)?;
    let table = ProfileTable::build(cfg.params()?, cfg.z_max, cfg.table_nodes)?;
    table.write_csv(csv_path)?;
    let (rate_plus, rate_minus) = table.decay_rate_fit();
    let c = table.center_index();
    let rows = vec![
        vec!["rho0_center".into(), fmt(table.rho0[c])],
        vec!["eta1_center".into(), fmt(table.eta1[c])],
        vec!["e_closed_form".into(), fmt(table.e_const.closed_form)],
        vec!["e_quadrature".into(), fmt(table.e_const.quadrature)],
        vec!["rate_plus_fit".into(), fmt(rate_plus)],
        vec!["rate_minus_fit".into(), fmt(rate_minus)],
    ];
    let stem = csv_path.file_stem().and_then(|s| s.to_str()).unwrap_or("profile");
    write_table(&dir.join(format!("{stem}_checks.csv")), &["quantity", "value"], &rows)?;
    Ok(table)
}

/// Diffuse run at `eps` on `nx` nodes; writes metrics, slice and checkpoints.
pub fn cmd_simulate(cfg: &LabConfig, dir: &Path) -> Result<diffuse::DiffuseTrajectory> {
    let mut run = cfg.diffuse_run(cfg.eps, cfg.nx, cfg.t_end)?;
    run.out_dir = Some(dir.to_path_buf());
    diffuse::run(&run)
}

pub fn cmd_sharp(cfg: &LabConfig, dir: &Path) -> Result<SharpTrajectory> {
    let traj = run_sharp(&cfg.sharp_config(cfg.t_end)?)?;
    traj.write(dir)?;
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRow {
    pub eps: f64,
    pub sup: f64,
    pub argmax: f64,
}

/// sup of the u^K residual near the interface at `probe_time`, per ε, with
/// the log-log slope (`None` for fewer than two ε).
pub fn cmd_expansion_residual(cfg: &LabConfig, dir: &Path) -> Result<(Vec<ResidualRow>, Option<f64>)> {
    out_dir(dir)?;
    let rows: Vec<ResidualRow> = cfg
        .eps_list
        .iter()
        .map(|&eps| {
            let sol = cfg.approx(eps)?;
            let probes = probe_grid(&sol, cfg.probe_time, 0.25, 2001)?;
            let rep = residual(&sol, &probes, cfg.probe_time, 1e-3 * eps)?;
            Ok(ResidualRow { eps, sup: rep.sup, argmax: rep.argmax })
        })
        .collect::<Result<_>>()?;
    let slope = (rows.len() >= 2).then(|| {
        let x: Vec<f64> = rows.iter().map(|r| r.eps.ln()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.sup.ln()).collect();
        linear_fit(&x, &y).0
    });
    let table: Vec<Vec<String>> = rows.iter().map(|r| vec![fmt(r.eps), fmt(r.sup), fmt(r.argmax)]).collect();
    write_table(&dir.join("expansion_residual.csv"), &["eps", "sup_residual", "argmax"], &table)?;
    Ok((rows, slope))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompatSummary {
    pub jump_deviation: f64,
    pub telescoping_deviation: f64,
    pub e: f64,
    pub compat_residual: f64,
}

/// Solvability checks at the initial interface for the configured directors.
pub fn cmd_compat_check(cfg: &LabConfig, dir: &Path) -> Result<CompatSummary> {
    out_dir(dir)?;
    let table = ProfileTable::build(cfg.params()?, cfg.z_max, cfg.table_nodes)?;
    let (minus, plus) = cfg.directors()?;
    let jet = InterfaceJet::new(minus.at(cfg.r0), minus.normal_derivative(cfg.r0), plus.normal_derivative(cfg.r0))?;
    let jump = jump_identity_check(&table, &jet)?;
    // tangent direction in the plane of the data
    let mut xi = vec![0.0; cfg.n];
    xi[0] = -jet.omega[1];
    xi[1] = jet.omega[0];
    let tele = telescoping_check(&table, &jet, &xi)?;
    let compat = compat_mcf_quadrature(&table, &jet, 0.0)?;
    let s = CompatSummary {
        jump_deviation: jump.max_deviation,
        telescoping_deviation: tele.deviation,
        e: compat.e,
        compat_residual: compat.residual,
    };
    let rows = vec![
        vec!["jump_deviation".into(), fmt(s.jump_deviation)],
        vec!["telescoping_deviation".into(), fmt(s.telescoping_deviation)],
        vec!["e".into(), fmt(s.e)],
        vec!["compat_residual".into(), fmt(s.compat_residual)],
    ];
    write_table(&dir.join("compat.csv"), &["quantity", "value"], &rows)?;
    Ok(s)
}

/// Lowest-eigenvalue sweep of the configured form over `eps_list`.
pub fn cmd_spectrum(cfg: &LabConfig, csv_path: &Path) -> Result<SweepReport> {
    if let Some(parent) = csv_path.parent() {
        out_dir(parent)?;
    }
    let first = *cfg.eps_list.first().ok_or_else(|| LabError::Config("eps_list is empty".into()))?;
    let report = sweep(&cfg.form_spec(first)?, &cfg.eps_list, cfg.c_cfg)?;
    report.write_csv(csv_path)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub t_probe: f64,
    pub interface_error: f64,
    pub bulk_modulus_error_plus: f64,
    pub bulk_modulus_error_minus: f64,
    pub director_error: f64,
    pub jump_mismatch: f64,
}

impl ConvergenceRow {
    pub fn bulk_modulus_error(&self) -> f64 {
        self.bulk_modulus_error_plus.max(self.bulk_modulus_error_minus)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorEnergy {
    pub eps: f64,
    pub k: usize,
    pub value: f64,
}

/// Per-ε run bookkeeping for a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct RunInfo {
    pub eps: f64,
    pub nodes: usize,
    pub dt: f64,
    pub steps: usize,
    pub energy_violations: usize,
    pub collar: f64,
    pub error_energy: ErrorEnergy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub runs: Vec<RunInfo>,
    pub sharp_interface: f64,
    /// bulk_modulus_error(ε_i) / bulk_modulus_error(ε_{i+1}); empty for one ε.
    pub modulus_ratios: Vec<f64>,
}

pub const ERROR_ENERGY_NOTE: &str = "error_energy compares u^eps with u^K for K <= 1; the estimate it mirrors needs K = k+1 with k = 3([m/2]+1)+3, so the column is a diagnostic trend only";

/// Half-width of the collar excluded from bulk measurements: the slower
/// (a-side) tail of ρ₀ has decayed to O(ε) at its edge.
pub fn collar(eps: f64, params: &ProfileParams) -> f64 {
    eps * eps.ln().abs() / params.rate_minus()
}

/// E(u) = Σ_{i=0}^{[m/2]+1} ε^{6i} Σ_{|α|=i} ‖∂^α u‖² with iterated forward
/// differences. Radial grids differentiate in r only.
pub fn error_energy(u: &VectorField, eps: f64, k: usize, m: usize) -> ErrorEnergy {
    let top = m / 2 + 1;
    let mut value = 0.0;
    match &u.grid {
        Grid::Periodic(g) => {
            // all ordered axis sequences of length i
            let mut level = vec![u.clone()];
            for i in 0..=top {
                let sum: f64 = level.iter().map(|d| crate::fields::inner(d, d)).sum();
                value += eps.powi(6 * i as i32) * sum;
                if i < top {
                    level = level
                        .iter()
                        .flat_map(|d| (0..g.m).map(move |axis| crate::fields::forward_difference(d, axis)))
                        .collect();
                }
            }
        }
        Grid::Radial(g) => {
            let n = u.n;
            let h = g.spacing();
            let mut d = u.values.clone();
            for i in 0..=top {
                let nodes = d.len() / n;
                let sum: f64 = (0..nodes)
                    .map(|j| (0..n).map(|c| d[j * n + c].powi(2)).sum::<f64>() * g.weight(j))
                    .sum();
                value += eps.powi(6 * i as i32) * sum;
                if i < top && nodes > 1 {
                    d = (0..nodes - 1)
                        .flat_map(|j| {
                            let d = &d;
                            (0..n).map(move |c| (d[(j + 1) * n + c] - d[j * n + c]) / h)
                        })
                        .collect();
                } else if i < top {
                    d.clear();
                }
            }
        }
    }
    ErrorEnergy { eps, k, value }
}

/// Unwrapped in-plane angle atan2(u₁, u₀) along the nodes.
fn unwrapped_angles(u: &VectorField) -> Vec<f64> {
    let mut out: Vec<f64> = (0..u.num_nodes()).map(|i| u.node(i)[1].atan2(u.node(i)[0])).collect();
    for i in 1..out.len() {
        let d = out[i] - out[i - 1];
        out[i] -= (d / (2.0 * std::f64::consts::PI)).round() * 2.0 * std::f64::consts::PI;
    }
    out
}

/// Slope of node values at r from the face differences, linearly
/// interpolated between face midpoints.
fn slope_at(r: &[f64], v: &[f64], x: f64) -> f64 {
    let mids: Vec<f64> = r.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let d: Vec<f64> = (0..r.len() - 1).map(|i| (v[i + 1] - v[i]) / (r[i + 1] - r[i])).collect();
    interp(&mids, &d, x)
}

fn interp(x: &[f64], y: &[f64], at: f64) -> f64 {
    if at <= x[0] {
        return y[0];
    }
    let i = x.partition_point(|&xi| xi <= at).min(x.len() - 1);
    if i == 0 || at >= x[x.len() - 1] {
        return y[x.len() - 1];
    }
    let s = (at - x[i - 1]) / (x[i] - x[i - 1]);
    y[i - 1] + s * (y[i] - y[i - 1])
}

/// Sharp director at r, interpolated between cell centres and renormalized.
fn sharp_director(traj: &SharpTrajectory, r: f64) -> Vec<f64> {
    let s = &traj.final_state;
    let x = (r / s.h - 0.5).clamp(0.0, (s.nodes() - 1) as f64);
    let i = (x.floor() as usize).min(s.nodes() - 2);
    let w = x - i as f64;
    let v: Vec<f64> = s.node(i).iter().zip(s.node(i + 1)).map(|(p, q)| p + w * (q - p)).collect();
    let nrm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    v.iter().map(|c| c / nrm).collect()
}

fn angle_between(u: &[f64], w: &[f64]) -> f64 {
    let nu = u.iter().map(|c| c * c).sum::<f64>().sqrt();
    let c = u.iter().zip(w).map(|(p, q)| p * q).sum::<f64>() / nu;
    // atan2 form is accurate near zero
    let s2: f64 = u.iter().map(|p| p / nu).zip(w).map(|(p, q)| (p - c * q).powi(2)).sum();
    s2.sqrt().atan2(c)
}

/// Diffuse runs at every ε (in parallel) against one sharp run, compared at
/// `probe_time`. Node counts scale as nx·ε₀/ε.
pub fn converge(cfg: &LabConfig) -> Result<ConvergenceReport> {
    if cfg.grid != GridKind::Radial {
        return Err(LabError::Config("converge compares radial (m=2) or planar (m=1) profiles on a radial grid".into()));
    }
    if cfg.outer != "dirichlet" || cfg.init != InitKind::Seed {
        return Err(LabError::Config("converge needs init = seed and a Dirichlet outer condition to match the sharp problem".into()));
    }
    if cfg.n < 2 {
        return Err(LabError::Config("converge needs n ≥ 2".into()));
    }
    let eps0 = *cfg.eps_list.first().ok_or_else(|| LabError::Config("eps_list is empty".into()))?;
    if cfg.eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(LabError::Config("eps_list entries must be positive".into()));
    }
    let sharp_h = cfg.length / cfg.sharp_nodes as f64;
    let params = cfg.params()?;
    let t = cfg.probe_time;
    let sharp = run_sharp(&cfg.sharp_config(t)?)?;
    if sharp.extinct_at.is_some() {
        return Err(LabError::Config(format!("sharp interface vanished before t = {t}")));
    }
    let r_sharp = sharp.final_state.interface;
    let level = crate::profile::rho0_at(0.0, &params)?;
    let k_theorem = 3 * (cfg.m / 2 + 1) + 3;
    let results: Vec<(ConvergenceRow, RunInfo)> = cfg
        .eps_list
        .par_iter()
        .map(|&eps| -> Result<(ConvergenceRow, RunInfo)> {
            let nodes = (cfg.nx as f64 * eps0 / eps).round() as usize;
            let run = cfg.diffuse_run(eps, nodes, t)?;
            let h = run.grid.min_spacing();
            let delta = collar(eps, &params);
            if delta < 2.0 * h.max(sharp_h) || r_sharp - delta <= 2.0 * h || r_sharp + delta >= cfg.length - 2.0 * h {
                return Err(LabError::Config(format!(
                    "grids do not resolve the collar δ = {delta:.3e} at ε = {eps} (h = {h:.3e}, sharp h = {sharp_h:.3e})"
                )));
            }
            let traj = diffuse::run(&run)?;
            let u = &traj.final_field;
            let g = match &u.grid {
                Grid::Radial(g) => g.clone(),
                Grid::Periodic(_) => unreachable!(),
            };
            let r: Vec<f64> = (0..g.nodes).map(|i| g.radius(i)).collect();
            let r_eps = match interface_extract(u, level, &ExtractHint::Radial { center: vec![0.0; g.m] })? {
                InterfaceGeometry::Radial { radius, .. } => radius,
                InterfaceGeometry::Planar { offset, .. } => offset,
            };
            let moduli = u.moduli();
            let (mut err_plus, mut err_minus, mut dir_err) = (0.0f64, 0.0f64, 0.0f64);
            for (i, &ri) in r.iter().enumerate() {
                let d = ri - r_sharp;
                if d.abs() < delta {
                    continue;
                }
                if d > 0.0 {
                    err_plus = err_plus.max((moduli[i] - cfg.b).abs());
                } else {
                    err_minus = err_minus.max((moduli[i] - cfg.a).abs());
                }
                dir_err = dir_err.max(angle_between(u.node(i), &sharp_director(&sharp, ri)));
            }
            let phi = unwrapped_angles(u);
            let s_minus = slope_at(&r, &phi, r_eps - delta);
            let s_plus = slope_at(&r, &phi, r_eps + delta);
            let jump = (cfg.b * cfg.b * s_plus - cfg.a * cfg.a * s_minus).abs();
            let reference = diffuse::seed_field(&u.grid, &cfg.approx(eps)?, t)?;
            let mut diff = u.clone();
            diff.axpy(-1.0, &reference);
            let row = ConvergenceRow {
                eps,
                t_probe: t,
                interface_error: (r_eps - r_sharp).abs(),
                bulk_modulus_error_plus: err_plus,
                bulk_modulus_error_minus: err_minus,
                director_error: dir_err,
                jump_mismatch: jump,
            };
            let info = RunInfo {
                eps,
                nodes,
                dt: run.dt,
                steps: traj.steps,
                energy_violations: traj.energy_violations(1e-9),
                collar: delta,
                error_energy: error_energy(&diff, eps, k_theorem, cfg.m),
            };
            Ok((row, info))
        })
        .collect::<Result<_>>()?;
    let (rows, runs): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    for row in &rows {
        let vals = [row.interface_error, row.bulk_modulus_error_plus, row.bulk_modulus_error_minus, row.director_error, row.jump_mismatch];
        if vals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(LabError::Consistency(format!("non-finite convergence row at ε = {}", row.eps)));
        }
    }
    let modulus_ratios = rows.windows(2).map(|w| w[0].bulk_modulus_error() / w[1].bulk_modulus_error()).collect();
    Ok(ConvergenceReport { rows, runs, sharp_interface: r_sharp, modulus_ratios })
}

impl ConvergenceReport {
    /// `convergence.csv` and `convergence_runs.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        out_dir(dir)?;
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    fmt(r.eps),
                    fmt(r.t_probe),
                    fmt(r.interface_error),
                    fmt(r.bulk_modulus_error_plus),
                    fmt(r.bulk_modulus_error_minus),
                    fmt(r.director_error),
                    fmt(r.jump_mismatch),
                ]
            })
            .collect();
        write_table(
            &dir.join("convergence.csv"),
            &["eps", "t_probe", "interface_error", "bulk_modulus_error_plus", "bulk_modulus_error_minus", "director_error", "jump_mismatch"],
            &rows,
        )?;
        let runs: Vec<Vec<String>> = self
            .runs
            .iter()
            .map(|r| {
                vec![
                    fmt(r.eps),
                    r.nodes.to_string(),
                    fmt(r.dt),
                    r.steps.to_string(),
                    r.energy_violations.to_string(),
                    fmt(r.collar),
                    r.error_energy.k.to_string(),
                    fmt(r.error_energy.value),
                ]
            })
            .collect();
        write_table(
            &dir.join("convergence_runs.csv"),
            &["eps", "nodes", "dt", "steps", "energy_violations", "collar", "k", "error_energy"],
            &runs,
        )?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub config_hash: String,
    pub files: Vec<FileEntry>,
    pub notes: Vec<String>,
}

/// Collects every top-level CSV in `dir` into `summary.json` and writes a
/// whitespace-separated `.dat` twin of each (header as a `#` comment).
pub fn report(dir: &Path, config_hash: &str) -> Result<Summary> {
    out_dir(dir)?;
    let mut names: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    let mut files = Vec::with_capacity(names.len());
    for name in names {
        let path = dir.join(&name);
        let bytes = std::fs::read(&path)?;
        let mut rdr = csv::Reader::from_reader(bytes.as_slice());
        let columns: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
        let mut dat = format!("# {}\n", columns.join(" "));
        let mut rows = 0;
        for rec in rdr.records() {
            let rec = rec?;
            let cells: Vec<String> = rec
                .iter()
                .map(|c| if c.is_empty() || c.contains(char::is_whitespace) { format!("\"{c}\"") } else { c.to_string() })
                .collect();
            dat.push_str(&cells.join(" "));
            dat.push('\n');
            rows += 1;
        }
        std::fs::write(dir.join(name.replace(".csv", ".dat")), dat)?;
        files.push(FileEntry { name, columns, rows, sha256: hex(&Sha256::digest(&bytes)) });
    }
    let notes = if files.iter().any(|f| f.name == "convergence_runs.csv") { vec![ERROR_ENERGY_NOTE.to_string()] } else { Vec::new() };
    let summary = Summary { config_hash: config_hash.to_string(), files, notes };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(dir.join("summary.json"), text)?;
    Ok(summary)
}
