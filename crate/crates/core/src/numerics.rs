//! Small numerical kernels shared by the solvers: quadrature, fits, banded solves.

/// Composite Simpson rule on a uniform grid. An odd interval count closes
/// with the three-point single-interval rule.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    if n == 2 {
        return 0.5 * h * (values[0] + values[1]);
    }
    let intervals = n - 1;
    let even = intervals - intervals % 2;
    let mut s = values[0] + values[even];
    for (i, v) in values.iter().enumerate().take(even).skip(1) {
        s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    let mut total = s * h / 3.0;
    if even < intervals {
        // last interval: quadratic through the final three points
        let (f0, f1, f2) = (values[n - 3], values[n - 2], values[n - 1]);
        total += h * (-f0 + 8.0 * f1 + 5.0 * f2) / 12.0;
    }
    total
}

/// Cumulative integral from index `origin` to every node (negative to the left).
/// Simpson pairs on even offsets, a four-point single-interval rule on odd ones.
pub fn cumulative_simpson(values: &[f64], h: f64, origin: usize) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    // right of origin
    let mut i = origin;
    while i + 1 < n {
        if i + 2 < n {
            let pair = h / 3.0 * (values[i] + 4.0 * values[i + 1] + values[i + 2]);
            out[i + 1] = out[i] + single_interval(values, h, i, 1);
            out[i + 2] = out[i] + pair;
            i += 2;
        } else {
            out[i + 1] = out[i] + single_interval(values, h, i, 1);
            i += 1;
        }
    }
    // left of origin, integrating backwards
    let mut i = origin;
    while i >= 1 {
        if i >= 2 {
            let pair = h / 3.0 * (values[i] + 4.0 * values[i - 1] + values[i - 2]);
            out[i - 1] = out[i] - single_interval(values, h, i, -1);
            out[i - 2] = out[i] - pair;
            i -= 2;
        } else {
            out[i - 1] = out[i] - single_interval(values, h, i, -1);
            i -= 1;
        }
    }
    out
}

/// Integral over the single interval from node i to node i+dir (dir = ±1),
/// by a cubic through four nodes: centred when both neighbours exist,
/// one-sided otherwise.
fn single_interval(v: &[f64], h: f64, i: usize, dir: isize) -> f64 {
    let n = v.len() as isize;
    let at = |k: isize| v[(i as isize + dir * k) as usize];
    let ok = |k: isize| {
        let j = i as isize + dir * k;
        j >= 0 && j < n
    };
    if ok(-1) && ok(2) {
        h / 24.0 * (-at(-1) + 13.0 * at(0) + 13.0 * at(1) - at(2))
    } else if ok(3) {
        h / 24.0 * (9.0 * at(0) + 19.0 * at(1) - 5.0 * at(2) + at(3))
    } else if ok(-2) {
        h / 24.0 * (at(-2) - 5.0 * at(-1) + 19.0 * at(0) + 9.0 * at(1))
    } else {
        0.5 * h * (at(0) + at(1))
    }
}

/// Ordinary least squares line; returns (slope, intercept).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sxy += (xi - mx) * (yi - my);
        sxx += (xi - mx) * (xi - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Thomas algorithm. `lower[i]` couples row i to i-1 (lower[0] unused),
/// `upper[i]` couples row i to i+1 (last unused).
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    rhs[0] /= beta;
    for i in 1..n {
        c[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * c[i];
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i + 1] * rhs[i + 1];
    }
}

/// Periodic tridiagonal system with constant coefficients (off-diagonal `off`,
/// diagonal `diag`), solved by Sherman-Morrison on top of the Thomas sweep.
pub fn solve_cyclic_constant(diag: f64, off: f64, rhs: &mut [f64]) {
    let n = rhs.len();
    let gamma = -diag;
    let mut d = vec![diag; n];
    d[0] = diag - gamma;
    d[n - 1] = diag - off * off / gamma;
    let lower = vec![off; n];
    let upper = vec![off; n];
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = off;
    solve_tridiagonal(&lower, &d, &upper, rhs);
    solve_tridiagonal(&lower, &d, &upper, &mut u);
    let fact = (rhs[0] + off * rhs[n - 1] / gamma) / (1.0 + u[0] + off * u[n - 1] / gamma);
    for (r, ui) in rhs.iter_mut().zip(&u) {
        *r -= fact * ui;
    }
}

/// Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Finite-difference weights for the `order`-th derivative at 0 from samples at
/// `offsets` (in units of h), by Fornberg's recursion.
pub fn fd_weights(order: usize, offsets: &[f64]) -> Vec<f64> {
    let n = offsets.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = offsets[0];
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = offsets[i];
        for j in 0..i {
            let c3 = offsets[i] - offsets[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] *= c4 / c3;
        }
        c1 = c2;
    }
    c.iter().map(|row| row[order]).collect()
}

/// Central difference of the given derivative order using `half_width`
/// points on each side of index i.
pub fn central_derivative(v: &[f64], i: usize, h: f64, order: usize, half_width: usize) -> f64 {
    let offsets: Vec<f64> = (0..=2 * half_width).map(|k| k as f64 - half_width as f64).collect();
    let w = fd_weights(order, &offsets);
    let s: f64 = w.iter().enumerate().map(|(k, wk)| wk * v[i + k - half_width]).sum();
    s / h.powi(order as i32)
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_integrates_cubic_exactly() {
        let h = 0.1;
        let v: Vec<f64> = (0..=10).map(|i| (i as f64 * h).powi(3)).collect();
        assert!((simpson(&v, h) - 0.25).abs() < 1e-14);
        let v: Vec<f64> = (0..=9).map(|i| (i as f64 * h).powi(2)).collect();
        assert!((simpson(&v, h) - 0.729 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn cumulative_matches_exp() {
        let h = 0.01;
        let v: Vec<f64> = (0..201).map(|i| (-1.0 + i as f64 * h).exp()).collect();
        let c = cumulative_simpson(&v, h, 100);
        for (i, ci) in c.iter().enumerate() {
            let z = -1.0 + i as f64 * h;
            assert!((ci - (z.exp() - 1.0)).abs() < 2e-10, "{i}");
        }
    }

    #[test]
    fn cyclic_solve_roundtrip() {
        let n = 17;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let (d, o) = (3.0, -1.0);
        let mut b: Vec<f64> = (0..n)
            .map(|i| d * x[i] + o * x[(i + 1) % n] + o * x[(i + n - 1) % n])
            .collect();
        solve_cyclic_constant(d, o, &mut b);
        for i in 0..n {
            assert!((b[i] - x[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn fornberg_reproduces_classic_stencils() {
        let w = fd_weights(2, &[-2.0, -1.0, 0.0, 1.0, 2.0]);
        let expect = [-1.0 / 12.0, 4.0 / 3.0, -2.5, 4.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
        let w = fd_weights(3, &[-2.0, -1.0, 0.0, 1.0, 2.0]);
        let expect = [-0.5, 1.0, 0.0, -1.0, 0.5];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn gauss_legendre_moments() {
        let (x, w) = gauss_legendre_unit(12);
        for k in 0..20 {
            let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k)).sum();
            assert!((q - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "k={k}");
        }
    }
}
