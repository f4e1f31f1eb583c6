//! One-dimensional quadrature helpers shared by the transform and radial
//! solvers: adaptive composite Simpson, short fixed Gauss-Legendre rules
//! for per-cell work, and a tail classifier for improper integrals.

use crate::error::{Error, Result};

/// Nodes/weights of the 4-point Gauss-Legendre rule on [-1, 1].
const GL4_X: [f64; 4] = [
    -0.8611363115940526,
    -0.3399810435848563,
    0.3399810435848563,
    0.8611363115940526,
];
const GL4_W: [f64; 4] = [
    0.3478548451374538,
    0.6521451548625461,
    0.6521451548625461,
    0.3478548451374538,
];

/// Nodes/weights of the 7-point Gauss-Legendre rule on [-1, 1].
const GL7_X: [f64; 7] = [
    -0.9491079123427585,
    -0.7415311855993945,
    -0.4058451513773972,
    0.0,
    0.4058451513773972,
    0.7415311855993945,
    0.9491079123427585,
];
const GL7_W: [f64; 7] = [
    0.1294849661688697,
    0.2797053914892766,
    0.3818300505051189,
    0.4179591836734694,
    0.3818300505051189,
    0.2797053914892766,
    0.1294849661688697,
];

pub fn gauss4<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    for i in 0..4 {
        s += GL4_W[i] * f(c + h * GL4_X[i]);
    }
    s * h
}

pub fn gauss7<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    for i in 0..7 {
        s += GL7_W[i] * f(c + h * GL7_X[i]);
    }
    s * h
}

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    if !flm.is_finite() || !frm.is_finite() {
        return Err(Error::NonConvergentQuadrature(format!(
            "integrand not finite inside [{a}, {b}]"
        )));
    }
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || depth == 0 {
        if depth == 0 && delta.abs() > 15.0 * tol.max(1e-300) * 1e3 {
            return Err(Error::NonConvergentQuadrature(format!(
                "refinement limit reached on [{a}, {b}], last correction {delta:e}"
            )));
        }
        return Ok(left + right + delta / 15.0);
    }
    let l = adaptive_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = adaptive_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

/// Adaptive composite Simpson on [a, b]; per-interval refinement until the
/// local correction drops below `rel_tol` relative to the running scale.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    if !fa.is_finite() || !fb.is_finite() || !fm.is_finite() {
        return Err(Error::NonConvergentQuadrature(format!(
            "integrand not finite at an endpoint of [{a}, {b}]"
        )));
    }
    let whole = simpson(fa, fm, fb, b - a);
    let scale = whole.abs().max((b - a) * fm.abs()).max(1e-300);
    adaptive_rec(f, a, b, fa, fm, fb, whole, rel_tol * scale, 48)
}

/// Cumulative integral of `f` along the increasing nodes `xs`, starting at
/// zero. Each cell is integrated with GL7 plus one bisected check; falls
/// back to adaptive Simpson when the two estimates disagree.
pub fn cumulative<F: Fn(f64) -> f64>(f: &F, xs: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0f64;
    out.push(0.0);
    for w in xs.windows(2) {
        let (a, b) = (w[0], w[1]);
        let coarse = gauss7(f, a, b);
        let m = 0.5 * (a + b);
        let fine = gauss7(f, a, m) + gauss7(f, m, b);
        let cell = if (fine - coarse).abs() <= rel_tol * fine.abs().max(acc.abs()).max(1e-300) {
            fine
        } else {
            adaptive_simpson(f, a, b, rel_tol)?
        };
        if !cell.is_finite() {
            return Err(Error::NonConvergentQuadrature(format!(
                "cell [{a}, {b}] produced a non-finite value"
            )));
        }
        acc += cell;
        out.push(acc);
    }
    Ok(out)
}

/// How the partial integrals of an improper integral behave as the horizon
/// grows decade by decade.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tail {
    /// Decade increments decay geometrically; `limit` extrapolates the sum.
    Converged { limit: f64 },
    /// Increments decay algebraically like j^-s with s > 1; converging
    /// slowly, `limit` is a rough extrapolation.
    SlowlyConverging { limit: f64 },
    /// Partial sums keep growing (increments non-summable as far as the
    /// probes can tell).
    Diverging { last: f64 },
}

impl Tail {
    pub fn finite_value(&self) -> Option<f64> {
        match self {
            Tail::Converged { limit } | Tail::SlowlyConverging { limit } => Some(*limit),
            Tail::Diverging { .. } => None,
        }
    }
}

/// Classify the tail of `sum_{j} d_j` from its decade increments `d_j >= 0`
/// (d_j = partial(10^(j+1)) - partial(10^j)). A hard decision is not always
/// possible from samples; borderline algebraic decay is reported as
/// diverging, which is the conservative reading for endpoint detection.
pub fn classify_tail(partials: &[f64]) -> Tail {
    let n = partials.len();
    assert!(n >= 4, "need at least 4 horizon probes");
    let total = partials[n - 1];
    let d: Vec<f64> = partials.windows(2).map(|w| w[1] - w[0]).collect();
    let m = d.len();
    let last = d[m - 1];
    let prev = d[m - 2];
    if last <= 1e-14 * total.abs().max(1e-300) {
        return Tail::Converged { limit: total };
    }
    let ratio = last / prev.max(1e-300);
    if ratio <= 0.7 {
        // Geometric decay: tail ~ last * ratio / (1 - ratio).
        let tail = last * ratio / (1.0 - ratio);
        return Tail::Converged { limit: total + tail };
    }
    if ratio >= 1.0 {
        return Tail::Diverging { last: total };
    }
    // Algebraic regime: d_j ~ C j^-s; estimate s from the last increments.
    let j1 = (m - 1) as f64;
    let j0 = (m - 2) as f64;
    let s = -(last / prev).ln() / ((j1 + 1.0) / (j0 + 1.0)).ln();
    if s > 1.2 {
        // Remaining tail of sum C j^-s beyond j1: ~ last * (j1+1) / (s-1).
        let tail = last * (j1 + 1.0) / (s - 1.0);
        Tail::SlowlyConverging { limit: total + tail }
    } else {
        Tail::Diverging { last: total }
    }
}
