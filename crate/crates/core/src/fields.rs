//! Grids, vector fields u: grid → ℝⁿ, second-order stencils, the Allen-Cahn
//! energy, signed distance, level-set extraction and binary checkpoints.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{LabError, Result};
use crate::potential::PotentialParams;

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicGrid {
    pub m: usize,
    pub sizes: Vec<usize>,
    pub lengths: Vec<f64>,
}

impl PeriodicGrid {
    pub fn new(sizes: Vec<usize>, lengths: Vec<f64>) -> Result<Self> {
        let m = sizes.len();
        if !(1..=2).contains(&m) || lengths.len() != m {
            return Err(LabError::InvalidParams(format!("periodic grid needs 1 or 2 axes, got {m}")));
        }
        if sizes.iter().any(|&s| s < 16) {
            return Err(LabError::InvalidParams("periodic grid needs ≥ 16 nodes per axis".into()));
        }
        if lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(LabError::InvalidParams("axis lengths must be positive".into()));
        }
        Ok(Self { m, sizes, lengths })
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.sizes[axis] as f64
    }

    pub fn num_nodes(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.m).map(|k| self.spacing(k)).product()
    }

    /// Node index of multi-index (i, j); axis 0 varies fastest.
    pub fn index(&self, idx: &[usize]) -> usize {
        if self.m == 1 {
            idx[0]
        } else {
            idx[0] + self.sizes[0] * idx[1]
        }
    }

    pub fn multi_index(&self, node: usize) -> [usize; 2] {
        [node % self.sizes[0], if self.m == 2 { node / self.sizes[0] } else { 0 }]
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        let mi = self.multi_index(node);
        (0..self.m).map(|k| mi[k] as f64 * self.spacing(k)).collect()
    }

    /// Neighbour of `node` shifted by ±1 along `axis`, with wrap-around.
    pub fn neighbour(&self, node: usize, axis: usize, forward: bool) -> usize {
        let mut mi = self.multi_index(node);
        let s = self.sizes[axis];
        mi[axis] = if forward { (mi[axis] + 1) % s } else { (mi[axis] + s - 1) % s };
        self.index(&mi)
    }
}

/// Outer boundary of a radial grid. The Dirichlet value sits on a ghost node
/// half a cell beyond `length`.
#[derive(Debug, Clone, PartialEq)]
pub enum OuterCondition {
    Neumann,
    Dirichlet(Vec<f64>),
}

/// Cell-centred radial grid r_i = (i+½)h on [0, length], symmetric at r = 0.
/// m = 1 is the even extension to [−L, L]; m = 2 is the disc.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    pub m: usize,
    pub nodes: usize,
    pub length: f64,
    pub outer: OuterCondition,
}

impl RadialGrid {
    pub fn new(m: usize, nodes: usize, length: f64, outer: OuterCondition) -> Result<Self> {
        if !(1..=2).contains(&m) {
            return Err(LabError::InvalidParams(format!("radial grid supports m = 1, 2; got {m}")));
        }
        if nodes < 16 || !(length > 0.0 && length.is_finite()) {
            return Err(LabError::InvalidParams("radial grid needs ≥ 16 nodes and positive length".into()));
        }
        Ok(Self { m, nodes, length, outer })
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.nodes as f64
    }

    pub fn radius(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.spacing()
    }

    /// Measure of the unit sphere factor times r^{m−1} at radius r.
    pub fn shell(&self, r: f64) -> f64 {
        if self.m == 1 {
            2.0
        } else {
            2.0 * PI * r
        }
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.shell(self.radius(i)) * self.spacing()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Periodic(PeriodicGrid),
    Radial(RadialGrid),
}

impl Grid {
    pub fn num_nodes(&self) -> usize {
        match self {
            Grid::Periodic(g) => g.num_nodes(),
            Grid::Radial(g) => g.nodes,
        }
    }

    /// Smallest spacing over all axes.
    pub fn min_spacing(&self) -> f64 {
        match self {
            Grid::Periodic(g) => (0..g.m).map(|k| g.spacing(k)).fold(f64::INFINITY, f64::min),
            Grid::Radial(g) => g.spacing(),
        }
    }

    /// Largest eigenvalue of the discrete −Δ (Gershgorin bound).
    pub fn laplacian_bound(&self) -> f64 {
        match self {
            Grid::Periodic(g) => (0..g.m).map(|k| 4.0 / g.spacing(k).powi(2)).sum(),
            Grid::Radial(g) => {
                let h = g.spacing();
                // an outer Dirichlet face sits a full h away, so 4/h² covers every row
                4.0 / (h * h)
            }
        }
    }

    pub fn quadrature_weight(&self, node: usize) -> f64 {
        match self {
            Grid::Periodic(g) => g.cell_volume(),
            Grid::Radial(g) => g.weight(node),
        }
    }
}

/// Node-major storage: component c of node k lives at values[k·n + c].
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub n: usize,
    pub values: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: Grid, n: usize) -> Self {
        let len = grid.num_nodes() * n;
        Self { grid, n, values: vec![0.0; len] }
    }

    pub fn from_fn(grid: Grid, n: usize, mut f: impl FnMut(usize) -> Vec<f64>) -> Self {
        let nodes = grid.num_nodes();
        let mut values = Vec::with_capacity(nodes * n);
        for k in 0..nodes {
            let v = f(k);
            debug_assert_eq!(v.len(), n);
            values.extend_from_slice(&v);
        }
        Self { grid, n, values }
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.values[k * self.n..(k + 1) * self.n]
    }

    pub fn node_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.n..(k + 1) * self.n]
    }

    pub fn num_nodes(&self) -> usize {
        self.grid.num_nodes()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_norm(&self) -> f64 {
        (0..self.num_nodes())
            .map(|k| self.node(k).iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn moduli(&self) -> Vec<f64> {
        (0..self.num_nodes())
            .map(|k| self.node(k).iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect()
    }

    pub fn axpy(&mut self, alpha: f64, other: &VectorField) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> VectorField {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// Apply a fixed n×n matrix (row-major) to every node.
    pub fn rotated(&self, q: &[f64]) -> VectorField {
        let n = self.n;
        let mut out = self.clone();
        for k in 0..self.num_nodes() {
            let src = self.node(k);
            let dst = out.node_mut(k);
            for i in 0..n {
                dst[i] = (0..n).map(|j| q[i * n + j] * src[j]).sum();
            }
        }
        if let Grid::Radial(g) = &mut out.grid {
            if let OuterCondition::Dirichlet(v) = &mut g.outer {
                let old = v.clone();
                for i in 0..n {
                    v[i] = (0..n).map(|j| q[i * n + j] * old[j]).sum();
                }
            }
        }
        out
    }
}

/// Second-order Laplacian per component (periodic wrap, or the flux-form
/// radial operator ∂rr + (m−1)/r ∂r with no flux through r = 0).
pub fn laplacian(u: &VectorField) -> VectorField {
    let mut out = VectorField::zeros(u.grid.clone(), u.n);
    laplacian_into(u, &mut out.values);
    out
}

pub fn laplacian_into(u: &VectorField, out: &mut [f64]) {
    let n = u.n;
    match &u.grid {
        Grid::Periodic(g) => {
            out.iter_mut().for_each(|v| *v = 0.0);
            for axis in 0..g.m {
                let ih2 = 1.0 / g.spacing(axis).powi(2);
                for k in 0..g.num_nodes() {
                    let kp = g.neighbour(k, axis, true);
                    let km = g.neighbour(k, axis, false);
                    for c in 0..n {
                        out[k * n + c] += (u.values[kp * n + c] - 2.0 * u.values[k * n + c]
                            + u.values[km * n + c])
                            * ih2;
                    }
                }
            }
        }
        Grid::Radial(g) => {
            let h = g.spacing();
            let nodes = g.nodes;
            for i in 0..nodes {
                let ri = g.shell(g.radius(i));
                let face_out = g.shell((i + 1) as f64 * h);
                let face_in = if i == 0 { 0.0 } else { g.shell(i as f64 * h) };
                for c in 0..n {
                    let ui = u.values[i * n + c];
                    let uo = if i + 1 < nodes {
                        u.values[(i + 1) * n + c]
                    } else {
                        match &g.outer {
                            OuterCondition::Neumann => ui,
                            OuterCondition::Dirichlet(v) => v[c],
                        }
                    };
                    let flux_out = face_out * (uo - ui);
                    let flux_in = if i == 0 { 0.0 } else { face_in * (ui - u.values[(i - 1) * n + c]) };
                    out[i * n + c] = (flux_out - flux_in) / (h * h * ri);
                }
            }
        }
    }
}

/// Forward differences along `axis` (periodic grids).
pub fn forward_difference(u: &VectorField, axis: usize) -> VectorField {
    let mut out = VectorField::zeros(u.grid.clone(), u.n);
    if let Grid::Periodic(g) = &u.grid {
        let ih = 1.0 / g.spacing(axis);
        for k in 0..g.num_nodes() {
            let kp = g.neighbour(k, axis, true);
            for c in 0..u.n {
                out.values[k * u.n + c] = (u.values[kp * u.n + c] - u.values[k * u.n + c]) * ih;
            }
        }
    }
    out
}

/// Discrete L² inner product ⟨u, v⟩ with the grid's quadrature weights.
pub fn inner(u: &VectorField, v: &VectorField) -> f64 {
    let n = u.n;
    (0..u.num_nodes())
        .map(|k| {
            let s: f64 = (0..n).map(|c| u.values[k * n + c] * v.values[k * n + c]).sum();
            s * u.grid.quadrature_weight(k)
        })
        .sum()
}

/// ⟨∇u, ∇v⟩ consistent with the Laplacian stencil (forward differences on
/// periodic grids, face differences on radial grids including the outer face).
pub fn grad_inner(u: &VectorField, v: &VectorField) -> f64 {
    match &u.grid {
        Grid::Periodic(g) => (0..g.m)
            .map(|axis| inner(&forward_difference(u, axis), &forward_difference(v, axis)))
            .sum(),
        Grid::Radial(g) => {
            let h = g.spacing();
            let n = u.n;
            let mut s = 0.0;
            for i in 0..g.nodes {
                let face = g.shell((i + 1) as f64 * h);
                for c in 0..n {
                    let (du, dv) = if i + 1 < g.nodes {
                        (
                            u.values[(i + 1) * n + c] - u.values[i * n + c],
                            v.values[(i + 1) * n + c] - v.values[i * n + c],
                        )
                    } else {
                        match &g.outer {
                            OuterCondition::Neumann => (0.0, 0.0),
                            OuterCondition::Dirichlet(b) => {
                                (b[c] - u.values[i * n + c], b[c] - v.values[i * n + c])
                            }
                        }
                    };
                    s += face * du * dv / h;
                }
            }
            s
        }
    }
}

/// ∫ ½|∇u|² + ε⁻²F(u), with the gradient part taken from the same face
/// differences as the Laplacian so the explicit step is an exact discrete
/// gradient step of this functional.
pub fn energy(u: &VectorField, eps: f64, pot: &PotentialParams) -> f64 {
    let grad = 0.5 * grad_inner(u, u);
    let bulk: f64 = (0..u.num_nodes())
        .map(|k| pot.f_value(u.node(k)) * u.grid.quadrature_weight(k))
        .sum();
    grad + bulk / (eps * eps)
}

#[derive(Debug, Clone, PartialEq)]
pub enum InterfaceGeometry {
    Radial { center: Vec<f64>, radius: f64 },
    Planar { axis: usize, offset: f64 },
}

impl InterfaceGeometry {
    pub fn validate(&self) -> Result<()> {
        match self {
            InterfaceGeometry::Radial { radius, .. } if !(*radius > 0.0) => {
                Err(LabError::InvalidParams(format!("radius must be positive, got {radius}")))
            }
            InterfaceGeometry::Planar { offset, .. } if !offset.is_finite() => {
                Err(LabError::InvalidParams("planar offset must be finite".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Signed distance to the interface, negative in Ω⁻ (inside a circle, or
/// below a planar offset).
pub fn signed_distance(geom: &InterfaceGeometry, x: &[f64]) -> f64 {
    match geom {
        InterfaceGeometry::Radial { center, radius } => {
            let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
            r2.sqrt() - radius
        }
        InterfaceGeometry::Planar { axis, offset } => x[*axis] - offset,
    }
}

/// Which kind of level set to look for.
#[derive(Debug, Clone, PartialEq)]
pub enum ExtractHint {
    Radial { center: Vec<f64> },
    Planar { axis: usize },
}

/// Locate |u| = level by linear interpolation along rays: outward from the
/// centre for radial data, along the axis (first upward crossing per row)
/// for planar data.
pub fn interface_extract(u: &VectorField, level: f64, hint: &ExtractHint) -> Result<InterfaceGeometry> {
    let modulus = u.moduli();
    match (&u.grid, hint) {
        (Grid::Radial(g), _) => {
            let r: Vec<f64> = (0..g.nodes).map(|i| g.radius(i)).collect();
            let rad = first_crossing(&r, &modulus, level).ok_or(LabError::NoInterface { level })?;
            Ok(InterfaceGeometry::Radial { center: vec![0.0; g.m], radius: rad })
        }
        (Grid::Periodic(g), ExtractHint::Planar { axis }) => {
            let other = if g.m == 2 { 1 - axis } else { 0 };
            let rows = if g.m == 2 { g.sizes[other] } else { 1 };
            let h = g.spacing(*axis);
            let mut sum = 0.0;
            for row in 0..rows {
                let (xs, ms): (Vec<f64>, Vec<f64>) = (0..g.sizes[*axis])
                    .map(|i| {
                        let mut mi = [0usize; 2];
                        mi[*axis] = i;
                        if g.m == 2 {
                            mi[other] = row;
                        }
                        (i as f64 * h, modulus[g.index(&mi)])
                    })
                    .unzip();
                sum += first_crossing(&xs, &ms, level).ok_or(LabError::NoInterface { level })?;
            }
            Ok(InterfaceGeometry::Planar { axis: *axis, offset: sum / rows as f64 })
        }
        (Grid::Periodic(g), ExtractHint::Radial { center }) => {
            // four axis-aligned rays from the node nearest the centre
            let mut radii = Vec::new();
            let c_idx: Vec<usize> = (0..g.m)
                .map(|k| ((center[k] / g.spacing(k)).round() as usize) % g.sizes[k])
                .collect();
            for axis in 0..g.m {
                for dir in [1isize, -1] {
                    let steps = g.sizes[axis] / 2;
                    let mut ts = Vec::with_capacity(steps);
                    let mut ms = Vec::with_capacity(steps);
                    for s in 0..steps {
                        let mut mi = [c_idx[0], if g.m == 2 { c_idx[1] } else { 0 }];
                        let sz = g.sizes[axis] as isize;
                        mi[axis] = ((mi[axis] as isize + dir * s as isize).rem_euclid(sz)) as usize;
                        let x = g.coords(g.index(&mi));
                        let d: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                        ts.push(d.sqrt());
                        ms.push(modulus[g.index(&mi)]);
                    }
                    radii.push(first_crossing(&ts, &ms, level).ok_or(LabError::NoInterface { level })?);
                }
            }
            let radius = radii.iter().sum::<f64>() / radii.len() as f64;
            Ok(InterfaceGeometry::Radial { center: center.clone(), radius })
        }
    }
}

/// First upward crossing of `level` along a monotone ray coordinate.
fn first_crossing(t: &[f64], v: &[f64], level: f64) -> Option<f64> {
    for i in 0..t.len().saturating_sub(1) {
        if v[i] < level && v[i + 1] >= level {
            let s = (level - v[i]) / (v[i + 1] - v[i]);
            return Some(t[i] + s * (t[i + 1] - t[i]));
        }
    }
    None
}

const MAGIC: &[u8; 8] = b"VACLABCK";
const VERSION: u32 = 1;

/// Binary checkpoint: magic, version, grid kind, m, n, per-axis (size, length),
/// time, ε, radial outer condition, then node-major little-endian f64 values.
pub fn write_checkpoint(path: &Path, u: &VectorField, time: f64, eps: f64) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let (kind, m, axes): (u8, usize, Vec<(usize, f64)>) = match &u.grid {
        Grid::Periodic(g) => (0, g.m, g.sizes.iter().cloned().zip(g.lengths.iter().cloned()).collect()),
        Grid::Radial(g) => (1, g.m, vec![(g.nodes, g.length)]),
    };
    buf.push(kind);
    buf.extend_from_slice(&(m as u32).to_le_bytes());
    buf.extend_from_slice(&(u.n as u32).to_le_bytes());
    buf.extend_from_slice(&(axes.len() as u32).to_le_bytes());
    for (s, l) in &axes {
        buf.extend_from_slice(&(*s as u64).to_le_bytes());
        buf.extend_from_slice(&l.to_le_bytes());
    }
    buf.extend_from_slice(&time.to_le_bytes());
    buf.extend_from_slice(&eps.to_le_bytes());
    if let Grid::Radial(g) = &u.grid {
        match &g.outer {
            OuterCondition::Neumann => buf.push(0),
            OuterCondition::Dirichlet(v) => {
                buf.push(1);
                for x in v {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
    }
    buf.extend_from_slice(&(u.values.len() as u64).to_le_bytes());
    for x in &u.values {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub struct Checkpoint {
    pub field: VectorField,
    pub time: f64,
    pub eps: f64,
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = ByteReader { bytes: &bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(LabError::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(LabError::Format(format!("unsupported version {version}")));
    }
    let kind = r.take(1)?[0];
    let m = r.u32()? as usize;
    let n = r.u32()? as usize;
    let naxes = r.u32()? as usize;
    let mut axes = Vec::with_capacity(naxes);
    for _ in 0..naxes {
        axes.push((r.u64()? as usize, r.f64()?));
    }
    let time = r.f64()?;
    let eps = r.f64()?;
    let grid = match kind {
        0 => Grid::Periodic(PeriodicGrid::new(
            axes.iter().map(|a| a.0).collect(),
            axes.iter().map(|a| a.1).collect(),
        )?),
        1 => {
            let outer = match r.take(1)?[0] {
                0 => OuterCondition::Neumann,
                1 => OuterCondition::Dirichlet((0..n).map(|_| r.f64()).collect::<Result<_>>()?),
                k => return Err(LabError::Format(format!("bad outer condition tag {k}"))),
            };
            let (nodes, length) = *axes.first().ok_or_else(|| LabError::Format("missing axis".into()))?;
            Grid::Radial(RadialGrid::new(m, nodes, length, outer)?)
        }
        k => return Err(LabError::Format(format!("bad grid kind {k}"))),
    };
    let count = r.u64()? as usize;
    if count != grid.num_nodes() * n {
        return Err(LabError::Format(format!("value count {count} does not match grid")));
    }
    let values = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(LabError::Format("trailing bytes".into()));
    }
    Ok(Checkpoint { field: VectorField { grid, n, values }, time, eps })
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        if self.pos + k > self.bytes.len() {
            return Err(LabError::Format("truncated file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + k];
        self.pos += k;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// CSV of a 1D slice: position followed by the n components and |u|.
pub fn write_slice_csv(path: &Path, u: &VectorField) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["x".to_string()];
    header.extend((0..u.n).map(|c| format!("u{c}")));
    header.push("modulus".into());
    w.write_record(&header)?;
    let positions: Vec<f64> = match &u.grid {
        Grid::Radial(g) => (0..g.nodes).map(|i| g.radius(i)).collect(),
        Grid::Periodic(g) => (0..g.sizes[0]).map(|i| i as f64 * g.spacing(0)).collect(),
    };
    for (k, x) in positions.iter().enumerate() {
        let v = u.node(k);
        let mut rec = vec![crate::profile::fmt(*x)];
        rec.extend(v.iter().map(|c| crate::profile::fmt(*c)));
        rec.push(crate::profile::fmt(v.iter().map(|c| c * c).sum::<f64>().sqrt()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
