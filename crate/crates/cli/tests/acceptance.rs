//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails or overruns its time budget.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use vaclab::expansion::*;
use vaclab::numerics::{central_derivative, fd_weights, linear_fit};
use vaclab::potential::PotentialParams;
use vaclab::profile::{rho0_at, ProfileParams, ProfileTable};
use vaclab::sharp::*;
use vaclab::spectral::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(ok: &mut bool, cond: bool) {
    *ok &= cond;
}

fn params() -> ProfileParams {
    ProfileParams::new(1.0, 2.0).unwrap()
}

fn gap_derivative(t: &ProfileTable, i: usize, order: usize) -> f64 {
    let half = if order == 2 { 3 } else { 4 };
    if t.z[i] >= 0.0 {
        -central_derivative(&t.upper_gap, i, t.h, order, half)
    } else {
        central_derivative(&t.lower_gap, i, t.h, order, half)
    }
}

fn criterion_1() -> Outcome {
    let t = ProfileTable::build(params(), 10.0, 4001).unwrap();
    let pot = t.params.potential();
    let mut ode: f64 = 0.0;
    for i in 4..t.len() - 4 {
        let f1 = pot.f1(t.rho0[i]);
        ode = ode.max((gap_derivative(&t, i, 2) - f1).abs() / (1.0 + f1.abs()));
    }
    // first integral ρ₀′ = √(2G(ρ₀²)) against a ninth-order difference of ρ₀
    let (d, offsets) = (2e-3, [-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0]);
    let w = fd_weights(1, &offsets);
    let mut first: f64 = 0.0;
    for k in -100..=100 {
        let z = k as f64 * 0.1;
        let fd: f64 = offsets.iter().zip(&w).map(|(o, wk)| wk * rho0_at(z + o * d, &t.params).unwrap()).sum::<f64>() / d;
        let r = rho0_at(z, &t.params).unwrap();
        first = first.max((fd - (2.0 * pot.g0(r * r)).sqrt()).abs());
    }
    let e_err = (t.e_const.quadrature - 11.0 * 2f64.sqrt() / 15.0).abs();
    let (rp, rm) = t.decay_rate_fit();
    let (rp_err, rm_err) = ((rp / (6.0 * 2f64.sqrt()) - 1.0).abs(), (rm / (3.0 * 2f64.sqrt()) - 1.0).abs());
    let eta_err = (t.eta1_at(1e9).unwrap() - 1.0).abs().max(t.eta1_at(-1e9).unwrap().abs());
    let mut ok = true;
    check(&mut ok, ode <= 1e-6);
    check(&mut ok, first <= 1e-10);
    check(&mut ok, e_err <= 1e-8);
    check(&mut ok, rp_err <= 0.02 && rm_err <= 0.02);
    check(&mut ok, eta_err <= 1e-8);
    Outcome {
        pass: ok,
        detail: format!(
            "ODE residual {ode:.1e}, first integral {first:.1e}, e error {e_err:.1e}, rate errors {:.2}%/{:.2}%, eta1 limits {eta_err:.1e}",
            100.0 * rp_err,
            100.0 * rm_err
        ),
    }
}

fn criterion_2() -> Outcome {
    let p = PotentialParams::new(1.0, 2.0).unwrap();
    let h = 1e-6;
    let mut fd_worst: f64 = 0.0;
    // lattice of points in [−2.5, 2.5]³
    let ticks = [-2.5, -1.7, -0.9, -0.2, 0.4, 1.1, 1.8, 2.5];
    for &x in &ticks {
        for &y in &ticks {
            for &z in &ticks {
                let u = [x, y, z];
                let g = p.f_grad(&u);
                let jac = p.df(&u);
                for i in 0..3 {
                    let (mut up, mut um) = (u, u);
                    up[i] += h;
                    um[i] -= h;
                    let fd = (p.f_value(&up) - p.f_value(&um)) / (2.0 * h);
                    fd_worst = fd_worst.max((g[i] - fd).abs() / g[i].abs().max(1.0));
                    let (fp, fm) = (p.f_grad(&up), p.f_grad(&um));
                    for r in 0..3 {
                        let fd = (fp[r] - fm[r]) / (2.0 * h);
                        fd_worst = fd_worst.max((jac[(r, i)] - fd).abs() / jac[(r, i)].abs().max(1.0));
                    }
                }
            }
        }
    }
    let mut well: f64 = 0.0;
    for k in 0..=2000 {
        let r = 0.5 + k as f64 * 1e-3;
        let s = r * r;
        well = well.max((p.g1(s) + 2.0 * p.g2(s) * s - p.f_a(r)).abs());
    }
    let t = ProfileTable::standard(params()).unwrap();
    let (mut wa, mut wb): (f64, f64) = (0.0, 0.0);
    for i in 4..t.len() - 4 {
        let r = t.rho0[i];
        wa = wa.max((p.f_a(r) - gap_derivative(&t, i, 3) / t.rho0_prime[i]).abs());
        wb = wb.max((p.f_b(r) - gap_derivative(&t, i, 2) / r).abs());
    }
    Outcome {
        pass: fd_worst <= 1e-6 && well <= 1e-10 && wa <= 1e-4 && wb <= 1e-6,
        detail: format!("FD {fd_worst:.1e}, well identity {well:.1e}, f_A identity {wa:.1e}, f_B identity {wb:.1e}"),
    }
}

fn sharp_cfg(kind: SharpKind, nodes: usize, dt: f64, t_end: f64, interface: f64, minus: AngleProfile, plus: AngleProfile) -> SharpConfig {
    SharpConfig {
        a: 1.0,
        b: 2.0,
        kind,
        nodes,
        length: 1.0,
        dt,
        t_end,
        interface,
        omega_minus: DirectorField::new(2, minus).unwrap(),
        omega_plus: DirectorField::new(2, plus).unwrap(),
        record_every: 100,
    }
}

fn criterion_3() -> Outcome {
    let radial = sharp_cfg(
        SharpKind::Radial,
        128,
        1e-5,
        0.01,
        0.4,
        AngleProfile::Quadratic { phi0: 0.3, slope: 0.8, r0: 0.4 },
        AngleProfile::Affine { phi0: 0.3, slope: 0.2, r0: 0.4 },
    );
    let traj = run_sharp(&radial).unwrap();
    let r_err = (traj.final_state.interface - mcf_radius(0.4, 2, 0.01)).abs();
    let planar = sharp_cfg(SharpKind::Planar, 100, 1e-4, 2.0, 0.5, AngleProfile::Constant(1.0), AngleProfile::Constant(0.0));
    let steady = run_sharp(&planar).unwrap();
    let phi_err = (steady.final_state.phi_gamma() - 0.2).abs();
    let jump = traj.max_jump_residual.max(steady.max_jump_residual);
    let defect = traj.max_norm_defect.max(steady.max_norm_defect);
    Outcome {
        pass: r_err <= 1e-5 && phi_err <= 1e-3 && jump <= 1e-10 && defect <= 1e-15,
        detail: format!("R error {r_err:.1e}, phi_gamma error {phi_err:.1e}, max jump residual {jump:.1e}, max | |omega|-1 | {defect:.1e}"),
    }
}

fn criterion_4() -> Outcome {
    let t = ProfileTable::standard(params()).unwrap();
    let v = 0.7;
    let consistent = InterfaceJet::new(vec![1.0, 0.0, 0.0], vec![0.0, v, 0.0], vec![0.0, v / 4.0, 0.0]).unwrap();
    let violating = InterfaceJet::new(vec![1.0, 0.0], vec![0.0, v], vec![0.0, v]).unwrap();
    let dev_ok = jump_identity_check(&t, &consistent).unwrap().max_deviation;
    let dev_bad = jump_identity_check(&t, &violating).unwrap().max_deviation;
    // telescoping on a few tangent jets
    let mut tele: f64 = 0.0;
    for (dm, dp) in [([0.0, 0.9, -0.3], [0.0, 0.2, 1.1]), ([0.0, -1.5, 0.4], [0.0, 0.7, 0.0]), ([0.0, v, 0.0], [0.0, v / 4.0, 0.0])] {
        let jet = InterfaceJet::new(vec![1.0, 0.0, 0.0], dm.to_vec(), dp.to_vec()).unwrap();
        for xi in [[0.0, 1.0, 0.0], [0.0, 0.6, 0.8]] {
            tele = tele.max(telescoping_check(&t, &jet, &xi).unwrap().deviation);
        }
    }
    let eps = [0.1, 0.05, 0.025];
    let rt = (0.16f64 - 0.02).sqrt();
    let sups: Vec<f64> = eps
        .iter()
        .map(|&e| {
            let cfg = ApproxConfig {
                order: 0,
                eps: e,
                delta: 0.1,
                geometry: LayerGeometry::Radial { r0: 0.4 },
                omega_minus: DirectorField::new(2, AngleProfile::Logarithmic { phi0: 0.3, slope: 1.0, r0: rt }).unwrap(),
                omega_plus: DirectorField::new(2, AngleProfile::Logarithmic { phi0: 0.3, slope: 1.0, r0: rt }).unwrap(),
            };
            let sol = build_uk(params(), cfg, Corrections::default()).unwrap();
            let probes = probe_grid(&sol, 0.01, 0.25, 2001).unwrap();
            residual(&sol, &probes, 0.01, 1e-3 * e).unwrap().sup
        })
        .collect();
    let (slope, _) = linear_fit(&eps.map(f64::ln), &sups.iter().map(|s| s.ln()).collect::<Vec<_>>());
    Outcome {
        pass: dev_ok <= 1e-6 && dev_bad > 0.1 * v && tele <= 1e-6 && (-1.4..=-0.6).contains(&slope),
        detail: format!("jump identity {dev_ok:.1e} (violating {dev_bad:.2}), telescoping {tele:.1e}, K=0 residual slope {slope:.3}"),
    }
}

const SWEEP: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

fn criterion_5() -> Outcome {
    let p = params();
    let mut ok = true;
    let mut parts = Vec::new();
    let vector = VectorData {
        omega_minus: DirectorField::new(2, AngleProfile::Affine { phi0: 0.3, slope: 1.0, r0: 0.0 }).unwrap(),
        omega_plus: DirectorField::new(2, AngleProfile::Affine { phi0: 0.3, slope: 0.25, r0: 0.0 }).unwrap(),
    };
    for kind in [FormKind::Q0, FormKind::Q1, FormKind::Vector] {
        let mut template = FormSpec::new(kind, SWEEP[0], p);
        if kind == FormKind::Vector {
            template.vector = Some(vector.clone());
        }
        let s = sweep(&template, &SWEEP, None).unwrap();
        check(&mut ok, s.verdict);
        let worst = s.reports.iter().map(|r| r.lambda_min).fold(f64::INFINITY, f64::min);
        parts.push(format!("{} min lambda {worst:+.3e} (C_cfg {})", kind.name(), s.c_cfg));
    }
    let mut envelope_ok = true;
    for eps in SWEEP {
        let r = theta_form_check(FormKind::Q0, eps, p, Resolution::standard()).unwrap();
        envelope_ok &= r.boundary_term.abs() <= r.envelope;
    }
    check(&mut ok, envelope_ok);
    let samples = default_samples(7);
    let reports: Vec<EndpointReport> = SWEEP
        .iter()
        .map(|&eps| endpoint_estimate_check(eps, p, Resolution::standard(), &samples).unwrap())
        .collect();
    let slope = endpoint_slope(&reports);
    check(&mut ok, slope >= -0.2);
    parts.push(format!("Q0(theta1) envelope {}", if envelope_ok { "held" } else { "violated" }));
    parts.push(format!("endpoint slope {slope:.3}"));
    Outcome { pass: ok, detail: parts.join(", ") }
}

fn criterion_6() -> Outcome {
    use vaclab::harness::{converge, LabConfig};
    let cfg = LabConfig { eps_list: vec![0.1, 0.05, 0.025], r0: 0.4, probe_time: 0.01, m: 2, n: 2, ..LabConfig::default() };
    let rep = converge(&cfg).unwrap();
    let decreasing = |f: &dyn Fn(&vaclab::harness::ConvergenceRow) -> f64| rep.rows.windows(2).all(|w| f(&w[1]) < f(&w[0]));
    let iface = decreasing(&|r| r.interface_error);
    let modulus = decreasing(&|r| r.bulk_modulus_error());
    let jump = decreasing(&|r| r.jump_mismatch);
    let ratios_ok = rep.modulus_ratios.iter().all(|r| (1.5..=3.0).contains(r));
    let violations: usize = rep.runs.iter().map(|r| r.energy_violations).sum();
    let nodes: Vec<usize> = rep.runs.iter().map(|r| r.nodes).collect();
    Outcome {
        pass: iface && modulus && jump && ratios_ok && violations == 0,
        detail: format!(
            "interface {:?}, modulus ratios {:?}, jump {:?}, energy increases {violations}, nodes {nodes:?}",
            rep.rows.iter().map(|r| format!("{:.2e}", r.interface_error)).collect::<Vec<_>>(),
            rep.modulus_ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>(),
            rep.rows.iter().map(|r| format!("{:.3}", r.jump_mismatch)).collect::<Vec<_>>(),
        ),
    }
}

fn run_cli(out: &Path, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_vaclab"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .stdout(std::process::Stdio::null())
        .status()
        .expect("spawn vaclab");
    assert!(status.success(), "vaclab {args:?} failed");
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.path().is_file())
        .map(|e| (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap()))
        .collect();
    files.sort();
    files
}

fn criterion_7() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let cfg_path = root.path().join("vector.cfg");
    std::fs::write(&cfg_path, "form = vector\neps_list = 0.1,0.05,0.025,0.0125\n").unwrap();
    let vector_cfg = cfg_path.to_str().unwrap().to_string();
    let mut snaps = Vec::new();
    for run in 0..2 {
        let out = root.path().join(format!("run{run}"));
        run_cli(&out, &["profile"]);
        run_cli(&out, &["sharp"]);
        run_cli(&out, &["expansion-residual"]);
        run_cli(&out, &["compat-check"]);
        run_cli(&out, &["spectrum", "--form", "q0", "--eps-list", "0.1,0.05,0.025,0.0125"]);
        run_cli(&out, &["spectrum", "--form", "q1", "--eps-list", "0.1,0.05,0.025,0.0125"]);
        run_cli(&out, &["--config", &vector_cfg, "spectrum"]);
        run_cli(&out, &["converge"]);
        run_cli(&out, &["report"]);
        snaps.push(snapshot(&out));
    }
    let same = snaps[0] == snaps[1];
    let differing: Vec<&str> = snaps[0].iter().zip(&snaps[1]).filter(|(a, b)| a != b).map(|(a, _)| a.0.as_str()).collect();
    Outcome {
        pass: same && !snaps[0].is_empty(),
        detail: if same {
            format!("{} files byte-identical across two runs", snaps[0].len())
        } else {
            format!("differences in {differing:?}")
        },
    }
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 7] = [
        ("profile suite", criterion_1, Duration::from_secs(5)),
        ("potential suite", criterion_2, Duration::from_secs(5)),
        ("sharp solver", criterion_3, Duration::from_secs(30)),
        ("expansion suite", criterion_4, Duration::from_secs(120)),
        ("spectral suite", criterion_5, Duration::from_secs(300)),
        ("convergence study", criterion_6, Duration::from_secs(900)),
        ("determinism", criterion_7, Duration::from_secs(1800)),
    ];
    let mut failed = 0;
    for (k, (name, f, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = f();
        let took = start.elapsed();
        let pass = out.pass && took <= *budget;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {} ({name}): {} in {:.2}s (budget {}s) | {}",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            budget.as_secs(),
            out.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 7 acceptance criteria passed");
}
