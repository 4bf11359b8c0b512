use proptest::prelude::*;
use vaclab::diffuse::*;
use vaclab::expansion::{build_uk, ApproxConfig, Corrections, LayerGeometry};
use vaclab::fields::{Grid, OuterCondition, PeriodicGrid, RadialGrid, VectorField};
use vaclab::potential::PotentialParams;
use vaclab::profile::{rho0_at, ProfileParams};
use vaclab::sharp::{AngleProfile, DirectorField};
use vaclab::LabError;

fn pot() -> PotentialParams {
    PotentialParams::new(1.0, 2.0).unwrap()
}

fn periodic1(nodes: usize) -> Grid {
    Grid::Periodic(PeriodicGrid::new(vec![nodes], vec![1.0]).unwrap())
}

fn circle_seed(eps: f64, nodes: usize) -> VectorField {
    let grid = Grid::Radial(RadialGrid::new(2, nodes, 1.0, OuterCondition::Dirichlet(vec![0.0, 0.0])).unwrap());
    let cfg = ApproxConfig {
        order: 0,
        eps,
        delta: 0.1,
        geometry: LayerGeometry::Radial { r0: 0.4 },
        omega_minus: DirectorField::new(2, AngleProfile::Affine { phi0: 0.2, slope: 0.4, r0: 0.4 }).unwrap(),
        omega_plus: DirectorField::new(2, AngleProfile::Affine { phi0: 0.2, slope: 0.1, r0: 0.4 }).unwrap(),
    };
    let sol = build_uk(ProfileParams::new(1.0, 2.0).unwrap(), cfg, Corrections::default()).unwrap();
    seed_field(&grid, &sol, 0.0).unwrap()
}

fn circle_config(eps: f64, nodes: usize, scheme: Scheme, t_end: f64) -> DiffuseRunConfig {
    let u0 = circle_seed(eps, nodes);
    let grid = u0.grid.clone();
    let mut cfg = DiffuseRunConfig::new(eps, 1.0, t_end, scheme, grid, pot(), InitialCondition::Field(u0.clone()));
    cfg.dt = cfg.dt_max(default_stability(&pot(), &u0));
    cfg
}

#[test]
fn stationary_well_is_unchanged() {
    let grid = Grid::Periodic(PeriodicGrid::new(vec![16, 16], vec![1.0, 1.0]).unwrap());
    let w = [0.6, 0.8];
    let u = VectorField::from_fn(grid.clone(), 2, |_| vec![2.0 * w[0], 2.0 * w[1]]);
    for scheme in [Scheme::Explicit, Scheme::Imex] {
        let cfg = DiffuseRunConfig::new(0.1, 1e-4, 1.0, scheme, grid.clone(), pot(), InitialCondition::Field(u.clone()));
        let mut v = u.clone();
        for k in 0..10 {
            v = step(&v, &cfg, k as f64).unwrap();
        }
        for (x, y) in v.values.iter().zip(&u.values) {
            assert!((x - y).abs() <= 1e-15, "{scheme:?}: {x} vs {y}");
        }
    }
}

/// Independent oracle: u̇ = −ε⁻²(s−a²)(s−b²)(2s−a²−b²)u with s = |u|², RK4.
fn rk4_uniform(u0: [f64; 2], eps: f64, t: f64, steps: usize) -> [f64; 2] {
    let rhs = |u: [f64; 2]| {
        let s = u[0] * u[0] + u[1] * u[1];
        let g = (s - 1.0) * (s - 4.0) * (2.0 * s - 5.0) / (eps * eps);
        [-g * u[0], -g * u[1]]
    };
    let h = t / steps as f64;
    let mut u = u0;
    for _ in 0..steps {
        let k1 = rhs(u);
        let k2 = rhs([u[0] + 0.5 * h * k1[0], u[1] + 0.5 * h * k1[1]]);
        let k3 = rhs([u[0] + 0.5 * h * k2[0], u[1] + 0.5 * h * k2[1]]);
        let k4 = rhs([u[0] + h * k3[0], u[1] + h * k3[1]]);
        for c in 0..2 {
            u[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
    }
    u
}

#[test]
fn uniform_field_follows_the_reaction_ode() {
    let eps = 0.1;
    let dt = 1e-7;
    let u0 = [1.5 * 0.3f64.cos(), 1.5 * 0.3f64.sin()];
    let oracle = rk4_uniform(u0, eps, 100.0 * dt, 10_000);
    for scheme in [Scheme::Explicit, Scheme::Imex] {
        let cfg = DiffuseRunConfig::new(eps, dt, 100.0 * dt, scheme, periodic1(32), pot(), InitialCondition::Uniform(u0.to_vec()));
        let traj = run(&cfg).unwrap();
        assert_eq!(traj.steps, 100);
        for k in 0..32 {
            let v = traj.final_field.node(k);
            let err = ((v[0] - oracle[0]).powi(2) + (v[1] - oracle[1]).powi(2)).sqrt();
            assert!(err < 1e-6, "{scheme:?} node {k}: err {err}");
        }
    }
}

#[test]
fn planar_front_relaxes_to_the_profile() {
    let eps = 0.05;
    let grid = Grid::Radial(RadialGrid::new(1, 400, 1.0, OuterCondition::Neumann).unwrap());
    let x0 = 0.5;
    let u0 = VectorField::from_fn(grid.clone(), 2, |k| {
        let x = (k as f64 + 0.5) / 400.0;
        let rho = 1.5 + 0.5 * ((x - x0) / eps).tanh();
        vec![rho * 0.8, rho * 0.6]
    });
    let mut cfg = DiffuseRunConfig::new(eps, 1.0, 0.05, Scheme::Imex, grid, pot(), InitialCondition::Field(u0.clone()));
    cfg.dt = cfg.dt_max(default_stability(&pot(), &u0));
    let traj = run(&cfg).unwrap();
    let u = &traj.final_field;
    let moduli = u.moduli();
    // fit x0 from the √3 crossing, where ρ₀(0) = √3
    let level = 3f64.sqrt();
    let i = moduli.windows(2).position(|w| w[0] < level && w[1] >= level).unwrap();
    let xi = |j: usize| (j as f64 + 0.5) / 400.0;
    let fitted = xi(i) + (level - moduli[i]) / (moduli[i + 1] - moduli[i]) * (xi(i + 1) - xi(i));
    let p = ProfileParams::new(1.0, 2.0).unwrap();
    let worst = (0..400)
        .map(|j| {
            let z = ((xi(j) - fitted) / eps).clamp(-9.9, 9.9);
            (moduli[j] - rho0_at(z, &p).unwrap()).abs()
        })
        .fold(0.0, f64::max);
    assert!(worst < 5e-2, "L∞ deviation {worst}");
    assert!((fitted - x0).abs() < 0.02, "front moved to {fitted}");
    // the director stays in place: no angle variation to diffuse
    for k in 0..400 {
        let v = u.node(k);
        assert!((v[1] * 0.8 - v[0] * 0.6).abs() < 1e-12);
    }
}

#[test]
fn imex_energy_is_non_increasing_on_a_shrinking_circle() {
    let cfg = circle_config(0.05, 512, Scheme::Imex, 0.01);
    let traj = run(&cfg).unwrap();
    assert_eq!(traj.energy_violations(1e-9), 0, "max increase {}", traj.max_energy_increase);
    assert!(traj.energies.last().unwrap() < &traj.energies[0]);
    let r = traj.rows.last().unwrap().radius;
    assert!((r - 0.14f64.sqrt()).abs() < 0.02, "radius {r}");
}

#[test]
fn explicit_energy_is_non_increasing() {
    let cfg = circle_config(0.1, 128, Scheme::Explicit, 0.002);
    let traj = run(&cfg).unwrap();
    assert!(traj.steps > 10);
    assert_eq!(traj.energy_violations(1e-9), 0, "max increase {}", traj.max_energy_increase);
}

#[test]
fn restart_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = circle_config(0.1, 64, Scheme::Explicit, 1.0);
    cfg.t_end = 40.0 * cfg.dt;
    cfg.checkpoint_every = 20;
    cfg.metrics_every = 10;
    cfg.out_dir = Some(dir.path().to_path_buf());
    let full = run(&cfg).unwrap();
    assert_eq!(full.checkpoints.len(), 2);
    assert!(dir.path().join("metrics.csv").exists());

    let mut resumed_cfg = cfg.clone();
    resumed_cfg.init = InitialCondition::File(full.checkpoints[0].clone());
    resumed_cfg.out_dir = None;
    let resumed = run(&resumed_cfg).unwrap();
    assert_eq!(resumed.steps, 20);
    assert_eq!(resumed.final_field, full.final_field);
    assert_eq!(resumed.final_time.to_bits(), full.final_time.to_bits());
    assert_eq!(resumed.rows.last(), full.rows.last());
    assert_eq!(resumed.rows[0], full.rows[2]);
}

#[test]
fn zero_steps_echo_the_initial_state() {
    let cfg = circle_config(0.1, 64, Scheme::Imex, 0.0);
    let traj = run(&cfg).unwrap();
    assert_eq!(traj.steps, 0);
    assert_eq!(traj.rows.len(), 1);
    let InitialCondition::Field(u0) = &cfg.init else { unreachable!() };
    assert_eq!(&traj.final_field, u0);
}

#[test]
fn blow_up_reports_time_and_size() {
    let cfg = DiffuseRunConfig::new(0.1, 1e-6, 1.0, Scheme::Explicit, periodic1(16), pot(), InitialCondition::Uniform(vec![1e80, 0.0]));
    let u = VectorField::from_fn(periodic1(16), 2, |_| vec![1e80, 0.0]);
    match step(&u, &cfg, 0.5) {
        Err(LabError::BlowUp { t, max_abs }) => {
            assert_eq!(t, 0.5);
            assert!(max_abs.is_infinite());
        }
        other => panic!("expected blow-up, got {other:?}"),
    }
}

#[test]
fn rejects_unstable_steps_and_mismatched_grids() {
    let mut cfg = circle_config(0.1, 64, Scheme::Explicit, 0.01);
    cfg.dt *= 2.0;
    assert!(matches!(run(&cfg), Err(LabError::InvalidParams(_))));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.bin");
    let other = VectorField::from_fn(periodic1(32), 2, |_| vec![1.0, 0.0]);
    vaclab::fields::write_checkpoint(&path, &other, 0.0, 0.1).unwrap();
    let mut cfg = circle_config(0.1, 64, Scheme::Explicit, 0.01);
    cfg.init = InitialCondition::File(path);
    assert!(matches!(run(&cfg), Err(LabError::Config(_))));
}

#[test]
fn two_dimensional_imex_matches_explicit_for_small_steps() {
    let grid = Grid::Periodic(PeriodicGrid::new(vec![24, 24], vec![1.0, 1.0]).unwrap());
    let u = VectorField::from_fn(grid.clone(), 2, |k| {
        let (i, j) = (k % 24, k / 24);
        let phase = 2.0 * std::f64::consts::PI * (i as f64 + 2.0 * j as f64) / 24.0;
        vec![1.5 + 0.2 * phase.sin(), 0.3 * phase.cos()]
    });
    let dt = 1e-7;
    let e = step(&u, &DiffuseRunConfig::new(0.2, dt, 1.0, Scheme::Explicit, grid.clone(), pot(), InitialCondition::Field(u.clone())), dt).unwrap();
    let i = step(&u, &DiffuseRunConfig::new(0.2, dt, 1.0, Scheme::Imex, grid.clone(), pot(), InitialCondition::Field(u.clone())), dt).unwrap();
    let diff = e.values.iter().zip(&i.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    // both are first order; they differ by O(dt²·|Δ²u|)
    assert!(diff < 1e-7, "{diff}");
    assert!(diff > 0.0);
}

fn rotation3(a: f64, b: f64, c: f64) -> Vec<f64> {
    let rz = |t: f64| [[t.cos(), -t.sin(), 0.0], [t.sin(), t.cos(), 0.0], [0.0, 0.0, 1.0]];
    let rx = |t: f64| [[1.0, 0.0, 0.0], [0.0, t.cos(), -t.sin()], [0.0, t.sin(), t.cos()]];
    let mul = |p: [[f64; 3]; 3], q: [[f64; 3]; 3]| {
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] = (0..3).map(|k| p[i][k] * q[k][j]).sum();
            }
        }
        r
    };
    mul(mul(rz(a), rx(b)), rz(c)).iter().flatten().cloned().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn step_commutes_with_rotations(
        vals in proptest::collection::vec(-1.4f64..1.4, 96),
        a in 0.0f64..6.3, b in 0.0f64..3.1, c in 0.0f64..6.3,
        imex in any::<bool>(),
        two_d in any::<bool>(),
    ) {
        let q = rotation3(a, b, c);
        let scheme = if imex { Scheme::Imex } else { Scheme::Explicit };
        let (grid, vals) = if two_d {
            let g = Grid::Periodic(PeriodicGrid::new(vec![16, 16], vec![1.0, 1.0]).unwrap());
            let v: Vec<f64> = (0..768).map(|i| vals[i % 96] * (1.0 + 0.01 * (i / 96) as f64)).collect();
            (g, v)
        } else {
            (periodic1(32), vals)
        };
        let u = VectorField { grid: grid.clone(), n: 3, values: vals };
        let cfg = DiffuseRunConfig::new(0.3, 1e-4, 1.0, scheme, grid, pot(), InitialCondition::Field(u.clone()));
        let lhs = step(&u.rotated(&q), &cfg, 1e-4).unwrap();
        let rhs = step(&u, &cfg, 1e-4).unwrap().rotated(&q);
        let diff = lhs.values.iter().zip(&rhs.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(diff < 1e-11, "diff {}", diff);
    }
}
