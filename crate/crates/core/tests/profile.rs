use proptest::prelude::*;
use vaclab::numerics::central_derivative;
use vaclab::profile::{profile_point, rho0_at, rho0_prime_at, Profile, ProfileParams, ProfileTable};

const SQRT2: f64 = std::f64::consts::SQRT_2;

fn params() -> ProfileParams {
    ProfileParams::new(1.0, 2.0).unwrap()
}

fn table() -> ProfileTable {
    ProfileTable::standard(params()).unwrap()
}

// Values of I(z) = ∫₀ᶻ ρ₀⁻² from adaptive quadrature at 30 digits (mpmath),
// frozen here.
const I_ORACLE: [(f64, f64); 5] = [
    (-10.0, -9.71486781467699),
    (-1.0, -0.722583031485924),
    (1.0, 0.26124826139213),
    (5.0, 1.26125096512486),
    (10.0, 2.51125096512486),
];

const ETA_ORACLE: [(f64, f64); 5] = [
    (-10.0, 0.0380176247),
    (-1.0, 0.3698892914),
    (1.0, 0.9850023181),
    (5.0, 0.9969997426),
    (10.0, 0.9984998713),
];

#[test]
fn center_value_matches_bisection_oracle() {
    // plain bisection on 2 ln((ρ−1)/(ρ+1)) − ln((2−ρ)/(2+ρ))
    let g = |r: f64| 2.0 * ((r - 1.0) / (r + 1.0)).ln() - ((2.0 - r) / (2.0 + r)).ln();
    let (mut lo, mut hi) = (1.0 + 1e-12, 2.0 - 1e-12);
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if g(m) > 0.0 {
            hi = m
        } else {
            lo = m
        }
    }
    let r = rho0_at(0.0, &params()).unwrap();
    assert!((r - 0.5 * (lo + hi)).abs() < 1e-12);
    assert!((r - 1.7320508).abs() < 1e-6);
}

#[test]
fn peak_slope_is_nine_root_two_over_eight() {
    let p = params();
    // z where ρ₀² = (a²+b²)/2, from the implicit relation directly
    let r = 2.5f64.sqrt();
    let z = (2.0 * ((r - 1.0) / (r + 1.0)).ln() - ((2.0 - r) / (2.0 + r)).ln()) / (6.0 * SQRT2);
    let d = rho0_prime_at(z, &p).unwrap();
    assert!((d - 9.0 * SQRT2 / 8.0).abs() < 1e-12);
    let t = table();
    let max = t.rho0_prime.iter().cloned().fold(0.0, f64::max);
    assert!(max <= 9.0 * SQRT2 / 8.0 + 1e-12);
    assert!(max > 9.0 * SQRT2 / 8.0 - 1e-4);
}

#[test]
fn derivative_matches_central_difference() {
    let p = params();
    let h = 1e-5;
    for k in -10..=10 {
        let z = k as f64 * 0.1;
        let fd = (rho0_at(z + h, &p).unwrap() - rho0_at(z - h, &p).unwrap()) / (2.0 * h);
        let d = rho0_prime_at(z, &p).unwrap();
        assert!(((fd - d) / d).abs() < 1e-6, "z={z}: {fd} vs {d}");
    }
    // in the tails difference the small gap instead of ρ₀ itself
    for k in 1..=9 {
        let z = k as f64;
        let up = |x: f64| profile_point(x, &p).unwrap().upper_gap;
        let lo = |x: f64| profile_point(x, &p).unwrap().lower_gap;
        let fd = -(up(z + h) - up(z - h)) / (2.0 * h);
        let d = rho0_prime_at(z, &p).unwrap();
        assert!(((fd - d) / d).abs() < 1e-6, "z={z}");
        let fd = (lo(-z + h) - lo(-z - h)) / (2.0 * h);
        let d = rho0_prime_at(-z, &p).unwrap();
        assert!(((fd - d) / d).abs() < 1e-6, "z=-{z}");
    }
}

#[test]
fn midpoint_level_crossing() {
    // ρ₀ = (a+b)/2 at z* = [2 ln(0.2) − ln(1/7)]/(6√2) ≈ −0.1500204
    let zs = (2.0 * 0.2f64.ln() - (1.0f64 / 7.0).ln()) / (6.0 * SQRT2);
    assert!((zs + 0.1500204).abs() < 1e-7);
    assert!((rho0_at(zs, &params()).unwrap() - 1.5).abs() < 1e-13);
}

#[test]
fn energy_constant_closed_form_and_quadrature() {
    let t = table();
    let e = 11.0 * SQRT2 / 15.0;
    assert!((t.e_const.closed_form - e).abs() < 1e-14);
    assert!((t.e_const.quadrature - e).abs() < 1e-8);
    assert!((e - 1.03709).abs() < 1e-5);
    let thin = ProfileParams::new(1.0, 1.0 + 1e-8).unwrap();
    assert!(thin.energy_constant_closed().abs() < 1e-6);
}

#[test]
fn decay_rates_fit_the_tail_exponents() {
    let (rp, rm) = table().decay_rate_fit();
    assert!((rp / (6.0 * SQRT2) - 1.0).abs() < 0.02, "{rp}");
    assert!((rm / (3.0 * SQRT2) - 1.0).abs() < 0.02, "{rm}");
    assert!((rp / rm / 2.0 - 1.0).abs() < 0.02);
    let p = ProfileParams::new(0.5, 1.25).unwrap();
    let t = ProfileTable::build(p, 40.0, 8001).unwrap();
    let (rp, rm) = t.decay_rate_fit();
    assert!((rp / rm / 2.5 - 1.0).abs() < 0.02);
}

/// ρ₀″ via sixth-order differences of whichever gap column is small,
/// so the check keeps relative precision in both tails.
fn second_derivative(t: &ProfileTable, i: usize) -> f64 {
    if t.z[i] >= 0.0 {
        -central_derivative(&t.upper_gap, i, t.h, 2, 3)
    } else {
        central_derivative(&t.lower_gap, i, t.h, 2, 3)
    }
}

#[test]
fn ode_residual_on_table() {
    let t = table();
    let pot = t.params.potential();
    let mut worst: f64 = 0.0;
    for i in 4..t.len() - 4 {
        let f1 = pot.f1(t.rho0[i]);
        let r = (second_derivative(&t, i) - f1).abs() / (1.0 + f1.abs());
        worst = worst.max(r);
    }
    assert!(worst <= 1e-6, "{worst}");
}

#[test]
fn first_integral_pointwise() {
    let p = params();
    let d = 2e-3;
    let offsets = [-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0];
    let w = vaclab::numerics::fd_weights(1, &offsets);
    let mut worst: f64 = 0.0;
    for k in -100..=100 {
        let z = k as f64 * 0.1;
        let fd: f64 = offsets
            .iter()
            .zip(&w)
            .map(|(o, wk)| wk * rho0_at(z + o * d, &p).unwrap())
            .sum::<f64>()
            / d;
        let r = rho0_at(z, &p).unwrap();
        let closed = 0.5 * SQRT2 * (r * r - 1.0) * (4.0 - r * r);
        worst = worst.max((fd - closed).abs());
    }
    assert!(worst <= 1e-10, "{worst}");
}

#[test]
fn equipartition_holds() {
    let t = table();
    let pot = t.params.potential();
    for i in 0..t.len() {
        let half = 0.5 * t.rho0_prime[i].powi(2);
        let f = pot.g0(t.rho0[i] * t.rho0[i]);
        assert!((half - f).abs() <= 1e-14 * (1.0 + f), "{i}");
    }
}

#[test]
fn profile_and_eta_strictly_increasing() {
    let t = table();
    // the small gap on each side carries the strict ordering; the other one
    // rounds to b − a
    for i in 1..t.len() {
        if t.z[i] > 0.0 {
            assert!(t.upper_gap[i] < t.upper_gap[i - 1]);
        } else {
            assert!(t.lower_gap[i] > t.lower_gap[i - 1]);
        }
        assert!(t.rho0[i] >= t.rho0[i - 1]);
        assert!(t.rho0_prime[i] > 0.0);
        assert!(t.eta1[i] > t.eta1[i - 1], "{i}");
        assert!(t.upper_gap[i] > 0.0 && t.lower_gap[i] > 0.0);
    }
    assert!((t.rho0[t.len() - 1] - 2.0).abs() <= 1e-12);
    assert!((t.rho0[0] - 1.0).abs() <= 1e-12);
}

#[test]
fn z_times_f_is_an_antiderivative() {
    let t = table();
    let zf: Vec<f64> = t.z.iter().zip(&t.f_mean).map(|(z, f)| z * f).collect();
    for i in 2..t.len() - 2 {
        let d = central_derivative(&zf, i, t.h, 1, 2);
        let g = 1.0 / t.rho0[i].powi(2);
        assert!((d - g).abs() < 1e-6, "{i}: {d} vs {g}");
    }
}

#[test]
fn eta1_at_center() {
    let t = table();
    let c = t.center_index();
    assert!((t.eta1[c] - 8.0 / 9.0).abs() < 1e-13);
    assert!((t.eta1_at(0.0).unwrap() - 8.0 / 9.0).abs() < 1e-13);
    assert!((t.profile().eta1(0.0).unwrap().0 - 8.0 / 9.0).abs() < 1e-13);
}

#[test]
fn antiderivative_matches_high_precision_quadrature() {
    let prof = Profile::new(params()).unwrap();
    for (z, i) in I_ORACLE {
        assert!((prof.integral_inv_sq(z).unwrap() - i).abs() < 1e-12, "z={z}");
    }
}

#[test]
fn eta1_matches_oracle_closed_form_and_table() {
    let t = table();
    for (z, e) in ETA_ORACLE {
        assert!((t.profile().eta1(z).unwrap().0 - e).abs() < 1e-10, "closed z={z}");
        assert!((t.eta1_at(z).unwrap() - e).abs() < 1e-9, "table z={z}");
    }
    for z in [-7.3, -0.77, 0.0025, 0.31, 4.4] {
        let a = t.eta1_at(z).unwrap();
        let b = t.profile().eta1(z).unwrap().0;
        assert!((a - b).abs() < 1e-9, "z={z}: {a} vs {b}");
    }
}

#[test]
fn eta1_derivatives_match_differences() {
    let prof = Profile::new(params()).unwrap();
    let h = 1e-4;
    for z in [-3.0, -0.6, -0.1, 0.0, 0.2, 0.24, 0.26, 1.5, 6.0] {
        let (_, d1, d2) = prof.eta1(z).unwrap();
        let e = |x: f64| prof.eta1(x).unwrap().0;
        let fd1 = (e(z + h) - e(z - h)) / (2.0 * h);
        let fd2 = (e(z + h) - 2.0 * e(z) + e(z - h)) / (h * h);
        assert!((d1 - fd1).abs() < 1e-7, "z={z}");
        assert!((d2 - fd2).abs() < 1e-4, "z={z}");
    }
}

#[test]
fn eta1_limits() {
    let t = table();
    assert_eq!(t.eta1_at(f64::INFINITY).unwrap(), 1.0);
    assert_eq!(t.eta1_at(f64::NEG_INFINITY).unwrap(), 0.0);
    assert!((t.eta1_at(1e9).unwrap() - 1.0).abs() < 1e-8);
    assert!(t.eta1_at(-1e9).unwrap().abs() < 1e-8);
    // the approach is algebraic: z(1−η₁) and zη₁ settle to constants
    let c_plus = 4.0 / 3.0 * (2.51125096512486 - 2.5);
    let c_minus = -4.0 / 3.0 * (10.0 - 9.71486781467699);
    for z in [50.0, 1e3, 1e5] {
        assert!((z * (1.0 - t.eta1_at(z).unwrap()) - c_plus).abs() < 1e-8 * z.max(1e3));
        assert!((-z * t.eta1_at(-z).unwrap() - c_minus).abs() < 1e-8 * z.max(1e3));
    }
}

#[test]
fn csv_has_expected_columns() {
    let t = ProfileTable::build(params(), 10.0, 1001).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("profile.csv");
    t.write_csv(&path).unwrap();
    let mut r = csv::Reader::from_path(&path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["z", "rho0", "rho0_prime", "eta1", "F"]);
    assert_eq!(r.records().count(), 1001);
}

#[test]
fn invalid_table_requests_fail() {
    assert!(ProfileTable::build(params(), 10.0, 4000).is_err());
    assert!(ProfileTable::build(params(), -1.0, 41).is_err());
    assert!(ProfileParams::new(2.0, 2.0).is_err());
}

proptest! {
    #[test]
    fn monotone_in_z(z1 in -60.0f64..60.0, dz in 1e-3f64..5.0) {
        let p = params();
        let lo = profile_point(z1, &p).unwrap();
        let hi = profile_point(z1 + dz, &p).unwrap();
        prop_assert!(lo.upper_gap >= hi.upper_gap);
        prop_assert!(lo.lower_gap <= hi.lower_gap);
        if z1 >= 0.0 {
            prop_assert!(lo.upper_gap > hi.upper_gap);
        }
        if z1 + dz <= 0.0 {
            prop_assert!(lo.lower_gap < hi.lower_gap);
        }
        prop_assert!(lo.rho <= hi.rho);
    }

    #[test]
    fn solution_satisfies_relation(z in -40.0f64..40.0) {
        let p = params();
        let pt = profile_point(z, &p).unwrap();
        let lhs = 6.0 * SQRT2 * z;
        let rhs = 2.0 * (pt.ln_lower_gap - (pt.rho + 1.0).ln()) - (pt.ln_upper_gap - (2.0 + pt.rho).ln());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn general_wells_stay_inside(a in 0.2f64..2.0, gap in 0.1f64..2.0, z in -5.0f64..5.0) {
        let p = ProfileParams::new(a, a + gap).unwrap();
        let pt = profile_point(z, &p).unwrap();
        prop_assert!(pt.lower_gap > 0.0 && pt.upper_gap > 0.0);
        prop_assert!(pt.rho >= a && pt.rho <= a + gap);
        prop_assert!(pt.derivative(&p) > 0.0);
    }
}
