//! Radial p-Laplace machinery on the unit ball: the Green operator by
//! double quadrature (with an optional Dirac mass at the origin entering
//! as a flux constant), an adaptive shooting integrator, residual checks
//! and weighted norms.
//!
//! Radial form: -(r^(N-1) phi_p(u'))' = r^(N-1) * RHS(r), u(1) = 0, where
//! phi_p(s) = |s|^(p-2) s.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;
use crate::nonlinearity::Nonlinearity;
use crate::quad;

/// Surface area of the unit sphere S^(N-1): 2 pi^(N/2) / Gamma(N/2),
/// evaluated exactly for integer N.
pub fn sphere_area(n: usize) -> f64 {
    let nf = n as f64;
    let pi = std::f64::consts::PI;
    // Gamma(N/2) by recursion from Gamma(1) = 1 and Gamma(1/2) = sqrt(pi).
    let mut x = nf / 2.0;
    let mut gamma = if n.is_multiple_of(2) { 1.0 } else { pi.sqrt() };
    while x > 1.0 + 1e-12 {
        x -= 1.0;
        gamma *= x;
    }
    2.0 * pi.powf(nf / 2.0) / gamma
}

/// p-Laplacian flux function |s|^(p-2) s.
pub fn phi_p(s: f64, p: f64) -> f64 {
    if p == 2.0 {
        s
    } else if s == 0.0 {
        0.0
    } else {
        s.abs().powf(p - 2.0) * s
    }
}

/// Inverse of phi_p: |y|^(1/(p-1)) sign(y).
pub fn phi_p_inv(y: f64, p: f64) -> f64 {
    if p == 2.0 {
        y
    } else if y == 0.0 {
        0.0
    } else {
        y.abs().powf(1.0 / (p - 1.0)) * y.signum()
    }
}

#[derive(Debug, Clone)]
pub struct RadialGrid {
    nodes: Arc<Vec<f64>>,
    pub eps0: f64,
}

impl RadialGrid {
    /// Geometric grid from eps0 to 1 (graded toward the origin).
    pub fn geometric(m: usize, eps0: f64) -> Self {
        assert!(m >= 16, "grid needs at least 16 nodes");
        assert!(eps0 > 0.0 && eps0 <= 1e-8, "inner cutoff must satisfy eps0 <= 1e-8");
        let mut nodes = Vec::with_capacity(m + 1);
        let log_eps = eps0.ln();
        for i in 0..=m {
            nodes.push((log_eps * (1.0 - i as f64 / m as f64)).exp());
        }
        nodes[0] = eps0;
        *nodes.last_mut().unwrap() = 1.0;
        Self {
            nodes: Arc::new(nodes),
            eps0,
        }
    }

    pub fn default_grid() -> Self {
        Self::geometric(4096, 1e-9)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn nodes_arc(&self) -> Arc<Vec<f64>> {
        self.nodes.clone()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone)]
pub enum Weight {
    Const(f64),
    /// f(r) = r^(-s).
    PowerSingular(f64),
    /// Values aligned with the problem grid.
    Sampled(Vec<f64>),
}

impl Weight {
    /// Power of the singular factor (0 except for PowerSingular).
    pub fn singular_power(&self) -> f64 {
        match self {
            Weight::PowerSingular(s) => *s,
            _ => 0.0,
        }
    }

    /// Regular factor at node i (the full weight with r^-s split off).
    pub fn regular_at(&self, i: usize, _r: f64) -> f64 {
        match self {
            Weight::Const(c) => *c,
            Weight::PowerSingular(_) => 1.0,
            Weight::Sampled(v) => v[i],
        }
    }

    pub fn eval(&self, i: usize, r: f64) -> f64 {
        match self {
            Weight::Const(c) => *c,
            Weight::PowerSingular(s) => r.powf(-s),
            Weight::Sampled(v) => v[i],
        }
    }

    pub fn is_singular(&self) -> bool {
        matches!(self, Weight::PowerSingular(s) if *s > 0.0)
    }
}

#[derive(Debug, Clone)]
pub enum Source {
    /// Right-hand side fixed in u: RHS(r) = q(r) * r^(-s), q sampled on
    /// the grid.
    FixedRhs(Vec<f64>),
    /// RHS(r, v) = lambda f(r) (1 + g(v+))^(p-1).
    OrderZero(Nonlinearity),
    /// RHS(r, u, u') = beta(u+) |u'|^p + lambda f(r).
    GradientForm(Nonlinearity),
}

#[derive(Debug, Clone)]
pub struct RadialProblem {
    pub p: f64,
    pub n: usize,
    pub lambda: f64,
    pub weight: Weight,
    pub atom_mass: f64,
    pub source: Source,
    pub grid: RadialGrid,
}

impl RadialProblem {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) {
            return Err(Error::InvalidDomain(format!(
                "p must exceed 1, got {}",
                self.p
            )));
        }
        if self.n < 2 {
            return Err(Error::InvalidDomain(format!("N must be >= 2, got {}", self.n)));
        }
        if self.p > self.n as f64 + 1e-12 {
            return Err(Error::InvalidDomain(format!(
                "standing assumption 1 < p <= N violated: p = {}, N = {}",
                self.p, self.n
            )));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidDomain(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if self.atom_mass < 0.0 {
            return Err(Error::InvalidDomain(format!(
                "atom mass must be nonnegative, got {}",
                self.atom_mass
            )));
        }
        match &self.weight {
            Weight::Const(c) if *c < 0.0 => {
                return Err(Error::InvalidDomain(format!("weight {c} < 0")))
            }
            Weight::PowerSingular(s) => {
                if *s >= self.n as f64 {
                    return Err(Error::NonIntegrableSource(format!(
                        "weight r^-{s} is not integrable against r^(N-1) for N = {}",
                        self.n
                    )));
                }
            }
            Weight::Sampled(v) => {
                if v.len() != self.grid.len() {
                    return Err(Error::InvalidDomain(
                        "sampled weight length does not match the grid".into(),
                    ));
                }
                if v.iter().any(|&x| x < 0.0 || !x.is_finite()) {
                    return Err(Error::InvalidDomain("sampled weight has bad values".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RadialSolution {
    pub r: Arc<Vec<f64>>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    /// flux(r) = -r^(N-1) phi_p(u').
    pub flux: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Set when the logarithmic fundamental-solution branch (p = N with an
    /// atom) produced this solution.
    pub log_branch: bool,
}

impl RadialSolution {
    pub fn zero(grid: &RadialGrid) -> Self {
        let m = grid.len();
        Self {
            r: grid.nodes.clone(),
            u: vec![0.0; m],
            du: vec![0.0; m],
            flux: vec![0.0; m],
            converged: true,
            iterations: 0,
            log_branch: false,
        }
    }

    pub fn sup(&self) -> f64 {
        self.u.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
    }

    pub fn boundary_value(&self) -> f64 {
        *self.u.last().unwrap()
    }

    /// omega-weighted L^k norm integral: omega * int |u|^k r^(N-1) dr,
    /// piecewise-linear reconstruction between nodes.
    pub fn lp_norm_integral(&self, k: f64, n: usize) -> f64 {
        let omega = sphere_area(n);
        let mut acc = 0.0;
        for i in 0..self.r.len() - 1 {
            let (a, b) = (self.r[i], self.r[i + 1]);
            let (ua, ub) = (self.u[i], self.u[i + 1]);
            acc += quad::gauss4(
                &|t: f64| {
                    let w = (t - a) / (b - a);
                    let u = ua + (ub - ua) * w;
                    u.abs().powf(k) * t.powi(n as i32 - 1)
                },
                a,
                b,
            );
        }
        omega * acc
    }

    /// omega-weighted W^(1,p) seminorm integral: omega * int |u'|^p r^(N-1) dr.
    pub fn seminorm_integral(&self, p: f64, n: usize) -> f64 {
        let omega = sphere_area(n);
        let mut acc = 0.0;
        for i in 0..self.r.len() - 1 {
            let (a, b) = (self.r[i], self.r[i + 1]);
            let (da, db) = (self.du[i], self.du[i + 1]);
            acc += quad::gauss4(
                &|t: f64| {
                    let w = (t - a) / (b - a);
                    let d = da + (db - da) * w;
                    d.abs().powf(p) * t.powi(n as i32 - 1)
                },
                a,
                b,
            );
        }
        omega * acc
    }

    /// CSV rows `r,u,u_prime,flux` (with header).
    pub fn csv(&self) -> String {
        let mut out = String::from("r,u,u_prime,flux\n");
        for i in 0..self.r.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.r[i], self.u[i], self.du[i], self.flux[i]
            ));
        }
        out
    }
}

/// Exact integral of t^nu * (linear interpolant of q) over [a, b].
fn cell_weighted_linear(a: f64, b: f64, qa: f64, qb: f64, nu: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let pw = |k: f64| -> f64 {
        if (k + 1.0).abs() < 1e-14 {
            (b / a).ln()
        } else if k.fract() == 0.0 && k.abs() < 64.0 {
            (b.powi(k as i32 + 1) - a.powi(k as i32 + 1)) / (k + 1.0)
        } else {
            (b.powf(k + 1.0) - a.powf(k + 1.0)) / (k + 1.0)
        }
    };
    let m = (qb - qa) / (b - a);
    qa * pw(nu) + m * (pw(nu + 1.0) - a * pw(nu))
}

/// The Green operator for a fixed right-hand side sampled at the grid
/// nodes: RHS(r) = q(r) r^(-s) with q piecewise linear, plus an atom of
/// mass `atom` at the origin:
///
///   u(r) = int_r^1 phi_p_inv( t^(1-N) [ atom/omega + int_0^t s^(N-1) RHS ] ) dt.
pub fn green_apply_nodes(
    grid: &RadialGrid,
    p: f64,
    n: usize,
    q: &[f64],
    weight: &Weight,
    atom: f64,
) -> Result<RadialSolution> {
    let nodes = grid.nodes();
    let m = nodes.len();
    assert_eq!(q.len(), m, "rhs must be sampled on the grid");
    let s = weight.singular_power();
    let nu = n as f64 - 1.0 - s;
    if nu <= -1.0 {
        return Err(Error::NonIntegrableSource(format!(
            "r^(N-1-s) with N-1-s = {nu} not integrable near 0"
        )));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonIntegrableSource(
            "right-hand side has non-finite samples".into(),
        ));
    }
    let omega = sphere_area(n);
    let flux0 = atom / omega;

    // Inner cumulative integral I(r_i), with the [0, r_0] stub taken with
    // q frozen at its first sample.
    let mut inner = Vec::with_capacity(m);
    let stub = q[0] * nodes[0].powf(nu + 1.0) / (nu + 1.0);
    inner.push(stub);
    for i in 0..m - 1 {
        let cell = cell_weighted_linear(nodes[i], nodes[i + 1], q[i], q[i + 1], nu);
        inner.push(inner[i] + cell);
    }

    // Nodal flux and derivative are exact given the inner integral.
    let mut flux = Vec::with_capacity(m);
    let mut du = Vec::with_capacity(m);
    for i in 0..m {
        let w = flux0 + inner[i];
        flux.push(w);
        du.push(-phi_p_inv(w / nodes[i].powf(n as f64 - 1.0), p));
    }

    // Outer integral backwards from u(1) = 0, GL4 per cell with the inner
    // integral continued exactly inside the cell.
    let mut u = vec![0.0; m];
    for i in (0..m - 1).rev() {
        let (a, b) = (nodes[i], nodes[i + 1]);
        let (qa, qb) = (q[i], q[i + 1]);
        let base = flux0 + inner[i];
        let integrand = |t: f64| {
            let w = (t - a) / (b - a);
            let qt = qa + (qb - qa) * w;
            let wt = base + cell_weighted_linear(a, t, qa, qt, nu);
            phi_p_inv(wt / t.powf(n as f64 - 1.0), p)
        };
        let cell = quad::gauss4(&integrand, a, b);
        u[i] = u[i + 1] + cell;
    }

    Ok(RadialSolution {
        r: grid.nodes.clone(),
        u,
        du,
        flux,
        converged: true,
        iterations: 1,
        log_branch: atom > 0.0 && (p - n as f64).abs() < 1e-12,
    })
}

/// High-accuracy Green operator for a closed-form regular factor q(r)
/// (RHS = q(r) r^(-s)): per-cell adaptive quadrature everywhere. Used to
/// polish fixed-point iterates and as the reference path in tests.
pub fn green_apply_fn<F: Fn(f64) -> f64>(
    grid: &RadialGrid,
    p: f64,
    n: usize,
    q: &F,
    weight: &Weight,
    atom: f64,
) -> Result<RadialSolution> {
    let nodes = grid.nodes();
    let m = nodes.len();
    let s = weight.singular_power();
    let nu = n as f64 - 1.0 - s;
    if nu <= -1.0 {
        return Err(Error::NonIntegrableSource(format!(
            "r^(N-1-s) with N-1-s = {nu} not integrable near 0"
        )));
    }
    let omega = sphere_area(n);
    let flux0 = atom / omega;

    let inner_integrand = |t: f64| q(t) * t.powf(nu);
    let mut inner = Vec::with_capacity(m);
    inner.push(q(nodes[0]) * nodes[0].powf(nu + 1.0) / (nu + 1.0));
    for i in 0..m - 1 {
        let cell = quad::adaptive_simpson(&inner_integrand, nodes[i], nodes[i + 1], 1e-11)
            .map_err(|e| Error::NonIntegrableSource(e.to_string()))?;
        inner.push(inner[i] + cell);
    }

    let mut flux = Vec::with_capacity(m);
    let mut du = Vec::with_capacity(m);
    for i in 0..m {
        let w = flux0 + inner[i];
        flux.push(w);
        du.push(-phi_p_inv(w / nodes[i].powf(n as f64 - 1.0), p));
    }

    let mut u = vec![0.0; m];
    for i in (0..m - 1).rev() {
        let (a, b) = (nodes[i], nodes[i + 1]);
        let base = flux0 + inner[i];
        let integrand = |t: f64| {
            let wt = base + quad::gauss7(&inner_integrand, a, t);
            phi_p_inv(wt / t.powf(n as f64 - 1.0), p)
        };
        let cell = quad::adaptive_simpson(&integrand, a, b, 1e-11)?;
        u[i] = u[i + 1] + cell;
    }

    Ok(RadialSolution {
        r: grid.nodes.clone(),
        u,
        du,
        flux,
        converged: true,
        iterations: 1,
        log_branch: atom > 0.0 && (p - n as f64).abs() < 1e-12,
    })
}

/// Evaluate the equation right-hand side of a problem at (r, u, u'),
/// using node index i for sampled weights.
fn rhs_value(problem: &RadialProblem, i: usize, r: f64, u: f64, du: f64) -> f64 {
    match &problem.source {
        Source::FixedRhs(q) => q[i] * r.powf(-problem.weight.singular_power()),
        Source::OrderZero(g) => {
            let f = problem.weight.eval(i, r);
            problem.lambda * f * (1.0 + g.eval(u.max(0.0))).powf(problem.p - 1.0)
        }
        Source::GradientForm(beta) => {
            let f = problem.weight.eval(i, r);
            beta.eval(u.max(0.0)) * du.abs().powf(problem.p) + problem.lambda * f
        }
    }
}

/// Defect of the radial equation on each grid cell: the flux difference
/// against the integral of r^(N-1) RHS, with (u, u') reconstructed by
/// cubic Hermite between nodes. Returns the max over admissible cells,
/// normalized by the local flux scale with a global floor so that cells
/// carrying no flux cannot dominate.
pub fn residual(sol: &RadialSolution, problem: &RadialProblem) -> f64 {
    let nodes = &sol.r;
    let m = nodes.len();
    let exclusion = if problem.atom_mass > 0.0 || problem.weight.is_singular() {
        10.0 * problem.grid.eps0
    } else {
        0.0
    };
    let u_interp = MonotoneCubic::with_derivatives(nodes.to_vec(), sol.u.clone(), sol.du.clone());
    let max_flux = sol
        .flux
        .iter()
        .fold(0.0f64, |a, &b| a.max(b.abs()))
        .max(1e-300);
    let floor = 1e-3 * max_flux;
    let mut worst: f64 = 0.0;
    for i in 0..m - 1 {
        let (a, b) = (nodes[i], nodes[i + 1]);
        if a < exclusion {
            continue;
        }
        let cell = quad::gauss4(
            &|t: f64| {
                let u = u_interp.eval(t);
                let du = u_interp.eval_deriv(t);
                let val = rhs_value(problem, i, t, u, du);
                t.powf(problem.n as f64 - 1.0) * val
            },
            a,
            b,
        );
        if !cell.is_finite() {
            continue; // cancellation overflow against an asymptote
        }
        let dflux = sol.flux[i + 1] - sol.flux[i];
        let scale = sol.flux[i]
            .abs()
            .max(sol.flux[i + 1].abs())
            .max(cell.abs())
            .max(floor);
        worst = worst.max((dflux - cell).abs() / scale);
    }
    worst
}

const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 6] = [
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

pub struct ShootOutcome {
    pub boundary_value: f64,
    pub solution: RadialSolution,
}

/// Shoot outward from the center with u(0) = central_value, u'(0) = 0
/// (regular center, no atom), in the flux variable w = r^(N-1) phi_p(u'):
///
///   u' = phi_p_inv(w / r^(N-1)),   w' = -r^(N-1) RHS(r, u, u').
///
/// Supports the order-zero and gradient forms plus fixed RHS. Starting at
/// an asymptote of beta (central value = L with a simple pole) uses the
/// balanced series u = L - c r^(p').
pub fn shoot(problem: &RadialProblem, central_value: f64, lambda: f64) -> Result<ShootOutcome> {
    problem.validate()?;
    if central_value < 0.0 {
        return Err(Error::InvalidDomain(format!(
            "central value {central_value} < 0"
        )));
    }
    let p = problem.p;
    let nf = problem.n as f64;
    let pm1 = p - 1.0;
    let pprime = p / pm1;
    let s_w = problem.weight.singular_power();
    let cap = 1e12;

    // Domain endpoint in the shooting variable (sampled shapes are only
    // evaluable up to their table range).
    let endpoint = match &problem.source {
        Source::OrderZero(g) => g.usable_max(),
        Source::GradientForm(beta) => beta.usable_max(),
        Source::FixedRhs(_) => f64::INFINITY,
    };
    if central_value > endpoint {
        return Err(Error::BlowUpBeforeBoundary(format!(
            "central value {central_value} beyond the nonlinearity domain {endpoint}"
        )));
    }

    // Center series u = a - c r^kappa: regular case balances the zero-order
    // RHS; a central value at a simple pole of beta balances the gradient
    // term as well.
    let weight0 = match &problem.weight {
        Weight::Const(c) => *c,
        Weight::PowerSingular(_) => 1.0,
        Weight::Sampled(v) => v[0],
    };
    let degenerate = matches!(&problem.source, Source::GradientForm(beta)
        if endpoint.is_finite() && central_value >= endpoint * (1.0 - 1e-12));
    let (kappa, c_coef, r_start) = if degenerate {
        let beta = match &problem.source {
            Source::GradientForm(b) => b,
            _ => unreachable!(),
        };
        if s_w != 0.0 {
            return Err(Error::StiffnessFailure(
                "degenerate center start is implemented for regular weights only".into(),
            ));
        }
        // Pole residue b0 = lim (L-t) beta(t).
        let tt = endpoint * (1.0 - 1e-6);
        let b0 = (endpoint - tt) * beta.eval(tt);
        let denom = pprime.powf(pm1) * nf - b0 * pprime.powf(p);
        if denom <= 0.0 {
            return Err(Error::BlowUpBeforeBoundary(format!(
                "no balanced start from the asymptote: residue {b0} too strong"
            )));
        }
        let c = (lambda * weight0 / denom).powf(1.0 / pm1);
        (pprime, c, 1e-4)
    } else {
        let rhs0 = match &problem.source {
            Source::FixedRhs(q) => q[0],
            Source::OrderZero(g) => {
                lambda * weight0 * (1.0 + g.eval(central_value.min(endpoint))).powf(pm1)
            }
            Source::GradientForm(_) => lambda * weight0,
        };
        let kap = (p - s_w) / pm1;
        if kap <= 0.0 {
            return Err(Error::NonIntegrableSource(format!(
                "weight power {s_w} >= p: no bounded center"
            )));
        }
        let c = (rhs0.max(0.0) / (nf - s_w)).powf(1.0 / pm1) * pm1 / (p - s_w);
        (kap, c, 1e-8)
    };

    let nodes = problem.grid.nodes();
    let m = nodes.len();
    let mut u_out = vec![0.0; m];
    let mut du_out = vec![0.0; m];
    let mut flux_out = vec![0.0; m];

    // Series fill below r_start.
    let series_u = |r: f64| central_value - c_coef * r.powf(kappa);
    let series_du = |r: f64| -c_coef * kappa * r.powf(kappa - 1.0);
    let mut idx = 0;
    while idx < m && nodes[idx] < r_start {
        u_out[idx] = series_u(nodes[idx]);
        du_out[idx] = series_du(nodes[idx]);
        flux_out[idx] = -nodes[idx].powf(nf - 1.0) * phi_p(du_out[idx], p);
        idx += 1;
    }

    // State (u, w) from the series at r_start; w = r^(N-1) phi_p(u') < 0.
    let mut r = r_start;
    let mut u = series_u(r);
    let mut w = r.powf(nf - 1.0) * phi_p(series_du(r), p);

    let weight_at = |r: f64| -> f64 {
        match &problem.weight {
            Weight::Const(c) => *c,
            Weight::PowerSingular(s) => r.powf(-s),
            Weight::Sampled(v) => {
                // piecewise-linear in r between grid nodes
                let k = nodes.partition_point(|&x| x <= r).clamp(1, m - 1);
                let (a, b) = (nodes[k - 1], nodes[k]);
                let t = ((r - a) / (b - a)).clamp(0.0, 1.0);
                v[k - 1] * (1.0 - t) + v[k] * t
            }
        }
    };
    let deriv = |r: f64, u: f64, w: f64| -> Result<[f64; 2]> {
        let rn = r.powf(nf - 1.0);
        let du = phi_p_inv(w / rn, p);
        let rhs = match &problem.source {
            Source::FixedRhs(q) => {
                let k = nodes.partition_point(|&x| x <= r).clamp(1, m - 1);
                let (a, b) = (nodes[k - 1], nodes[k]);
                let t = ((r - a) / (b - a)).clamp(0.0, 1.0);
                (q[k - 1] * (1.0 - t) + q[k] * t) * r.powf(-s_w)
            }
            Source::OrderZero(g) => {
                if u >= endpoint {
                    return Err(Error::BlowUpBeforeBoundary(format!(
                        "v reached Lambda = {endpoint} at r = {r}"
                    )));
                }
                lambda * weight_at(r) * (1.0 + g.eval(u.max(0.0))).powf(pm1)
            }
            Source::GradientForm(beta) => {
                if u >= endpoint {
                    return Err(Error::BlowUpBeforeBoundary(format!(
                        "u reached L = {endpoint} at r = {r}"
                    )));
                }
                beta.eval(u.max(0.0)) * du.abs().powf(p) + lambda * weight_at(r)
            }
        };
        Ok([du, -rn * rhs])
    };

    let tol = 1e-11;
    let mut h = (r_start * 0.1).max(1e-10);
    let mut iterations = 0usize;
    while r < 1.0 {
        // Land exactly on grid nodes as we pass them.
        let next_node = if idx < m { nodes[idx] } else { 1.0 };
        let target = next_node.min(1.0);
        if target - r < 1e-15 {
            // record and move on
            u_out[idx] = u;
            du_out[idx] = phi_p_inv(w / r.powf(nf - 1.0), p);
            flux_out[idx] = -w;
            idx += 1;
            continue;
        }
        let mut step = h.min(target - r);
        loop {
            iterations += 1;
            if iterations > 2_000_000 {
                return Err(Error::StiffnessFailure(format!(
                    "step budget exhausted at r = {r}"
                )));
            }
            // Dormand-Prince 5(4) step.
            let mut k = [[0.0f64; 2]; 7];
            k[0] = deriv(r, u, w)?;
            let mut failed = false;
            for stage in 1..7 {
                let mut us = u;
                let mut ws = w;
                for j in 0..stage {
                    let a = if stage < 7 { DP_A[stage - 1][j] } else { 0.0 };
                    us += step * a * k[j][0];
                    ws += step * a * k[j][1];
                }
                match deriv(r + DP_C[stage] * step, us, ws) {
                    Ok(d) => k[stage] = d,
                    Err(_) => {
                        failed = true;
                        break;
                    }
                }
            }
            if failed {
                step *= 0.5;
                if step < 1e-16 * r.max(1e-8) {
                    return Err(Error::BlowUpBeforeBoundary(format!(
                        "solution left the admissible range near r = {r} (u = {u})"
                    )));
                }
                continue;
            }
            let mut u5 = u;
            let mut w5 = w;
            let mut u4 = u;
            let mut w4 = w;
            for j in 0..7 {
                u5 += step * DP_B5[j] * k[j][0];
                w5 += step * DP_B5[j] * k[j][1];
                u4 += step * DP_B4[j] * k[j][0];
                w4 += step * DP_B4[j] * k[j][1];
            }
            let sc_u = tol * (1.0 + u.abs());
            let sc_w = tol * (1.0 + w.abs());
            let err = (((u5 - u4) / sc_u).powi(2) + ((w5 - w4) / sc_w).powi(2)).sqrt()
                / 2f64.sqrt();
            if err <= 1.0 || step <= 1e-15 * r.max(1e-8) {
                r += step;
                u = u5;
                w = w5;
                if u.abs() > cap {
                    return Err(Error::BlowUpBeforeBoundary(format!(
                        "|u| exceeded cap {cap:e} at r = {r}"
                    )));
                }
                let grow = (0.9 * err.powf(-0.2)).clamp(0.2, 5.0);
                h = (step * grow).max(1e-15);
                break;
            }
            step *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
        if (r - target).abs() < 1e-15 && idx < m && (target - nodes[idx]).abs() < 1e-15 {
            u_out[idx] = u;
            du_out[idx] = phi_p_inv(w / r.powf(nf - 1.0), p);
            flux_out[idx] = -w;
            idx += 1;
        }
    }
    // Fill any trailing nodes (r may have landed on 1.0 already).
    while idx < m {
        u_out[idx] = u;
        du_out[idx] = phi_p_inv(w / 1.0f64.powf(nf - 1.0), p);
        flux_out[idx] = -w;
        idx += 1;
    }

    Ok(ShootOutcome {
        boundary_value: u,
        solution: RadialSolution {
            r: problem.grid.nodes.clone(),
            u: u_out,
            du: du_out,
            flux: flux_out,
            converged: true,
            iterations,
            log_branch: false,
        },
    })
}

/// Norm behavior under domain refinement [eps, 1] with eps shrinking by
/// decades: the seminorm of an explicit radial profile either stabilizes
/// (member of W^(1,p)) or grows like eps^-slope.
#[derive(Debug, Clone)]
pub struct RefinementReport {
    pub eps: Vec<f64>,
    pub values: Vec<f64>,
    /// d ln S / d ln (1/eps) from the last pair of refinements.
    pub slope: f64,
    pub converged: bool,
    pub limit: Option<f64>,
}

/// omega * int_eps^1 |u'(r)|^p r^(N-1) dr for a closed-form derivative,
/// evaluated on a shrinking sequence of inner cutoffs.
pub fn seminorm_refinement<F: Fn(f64) -> f64>(
    du: &F,
    p: f64,
    n: usize,
    eps_list: &[f64],
) -> RefinementReport {
    let omega = sphere_area(n);
    let integrand = |r: f64| du(r).abs().powf(p) * r.powi(n as i32 - 1);
    let mut eps_sorted: Vec<f64> = eps_list.to_vec();
    eps_sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut values = Vec::with_capacity(eps_sorted.len());
    // Integrate decade by decade from the largest cutoff.
    let mut acc = 0.0;
    let mut upper = 1.0;
    for &eps in &eps_sorted {
        let mut lo = upper;
        while lo > eps * (1.0 + 1e-12) {
            let next = (lo / 10.0).max(eps);
            acc += quad::adaptive_simpson(&integrand, next, lo, 1e-10).unwrap_or(f64::INFINITY);
            lo = next;
        }
        upper = eps;
        values.push(omega * acc);
    }
    let k = values.len();
    let slope = if k >= 2 {
        let s_hi = values[k - 1];
        let s_lo = values[k - 2];
        (s_hi / s_lo).ln() / (eps_sorted[k - 2] / eps_sorted[k - 1]).ln()
    } else {
        0.0
    };
    let converged = slope.abs() < 0.05;
    RefinementReport {
        eps: eps_sorted,
        limit: converged.then(|| values[k - 1]),
        values,
        slope,
        converged,
    }
}
