//! The change of unknown linking the gradient-source problem (beta side)
//! and the order-zero problem (g side):
//!
//!   Psi(t) = integral_0^t exp(gamma(s)/(p-1)) ds,  gamma(t) = integral_0^t beta,
//!   H = Psi^-1,  H(v) = integral_0^v ds/(1+g(s)),
//!   (1 + g(Psi(t)))^(p-1) = exp(gamma(t)),  beta(t) = (p-1) g'(Psi(t)).
//!
//! Tables are built by quadrature in either direction and carry monotone
//! cubic interpolants with exact nodal derivatives, so the forward map,
//! its inverse and the derived nonlinearities evaluate consistently.

use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;
use crate::nonlinearity::{Form, Nonlinearity, PiecewiseLinear};
use crate::quad::{self, Tail};

#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    /// Node count of the table grid.
    pub nodes: usize,
    /// Stop the grid where the transformed variable reaches this value.
    pub value_cap: f64,
    /// Hard cap on the input variable when its endpoint is infinite.
    pub horizon: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nodes: 10_000,
            value_cap: 1e12,
            horizon: 1e15,
        }
    }
}

impl GridSpec {
    pub fn with_nodes(nodes: usize) -> Self {
        Self {
            nodes,
            ..Self::default()
        }
    }
}

/// Reported endpoint of a transformed domain together with how it was
/// certified. Certification from samples is heuristic (see the tail
/// classifier); `Declared` means the value came with the input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EndpointReport {
    Declared(f64),
    DetectedFinite { value: f64, slow: bool },
    Infinite,
}

impl EndpointReport {
    pub fn value(&self) -> f64 {
        match self {
            EndpointReport::Declared(v) | EndpointReport::DetectedFinite { value: v, .. } => *v,
            EndpointReport::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value().is_finite()
    }
}

#[derive(Debug, Clone)]
pub struct TransformTables {
    pub p: f64,
    pub t_grid: Vec<f64>,
    pub gamma: Vec<f64>,
    /// psi[i] = Psi(t_grid[i]) (the v coordinate of node i).
    pub psi: Vec<f64>,
    /// g sampled at psi[i].
    pub g_values: Vec<f64>,
    /// beta sampled at t_grid[i].
    pub beta_values: Vec<f64>,
    pub horizon_l: EndpointReport,
    pub horizon_lambda: EndpointReport,
    psi_interp: MonotoneCubic,
    h_interp: MonotoneCubic,
    g_interp: MonotoneCubic,
    beta_interp: MonotoneCubic,
}

impl TransformTables {
    pub fn psi_of(&self, t: f64) -> f64 {
        self.psi_interp.eval(t)
    }

    pub fn h_of(&self, v: f64) -> Result<f64> {
        if v > self.h_interp.x_max() * (1.0 + 1e-12) {
            return Err(Error::TransformDomainExceeded(format!(
                "v = {v} beyond table horizon {}",
                self.h_interp.x_max()
            )));
        }
        Ok(self.h_interp.eval(v))
    }

    pub fn g_of(&self, v: f64) -> Result<f64> {
        if v > self.g_interp.x_max() * (1.0 + 1e-12) {
            return Err(Error::TransformDomainExceeded(format!(
                "v = {v} beyond table horizon {}",
                self.g_interp.x_max()
            )));
        }
        Ok(self.g_interp.eval(v))
    }

    pub fn beta_of(&self, t: f64) -> Result<f64> {
        if t > self.beta_interp.x_max() * (1.0 + 1e-12) {
            return Err(Error::TransformDomainExceeded(format!(
                "t = {t} beyond table horizon {}",
                self.beta_interp.x_max()
            )));
        }
        Ok(self.beta_interp.eval(t))
    }

    pub fn t_max(&self) -> f64 {
        *self.t_grid.last().unwrap()
    }

    pub fn v_max(&self) -> f64 {
        *self.psi.last().unwrap()
    }

    /// max over the supplied t of |H(Psi(t)) - t|.
    pub fn roundtrip_max_error(&self, ts: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for &t in ts {
            let v = self.psi_interp.eval(t);
            let back = self.h_interp.eval(v);
            worst = worst.max((back - t).abs());
        }
        worst
    }

    /// max relative defect of (1+g(Psi(t)))^(p-1) = exp(gamma(t)) on the
    /// table nodes, with g re-evaluated through the interpolant.
    pub fn rela_max_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.t_grid.len() {
            let lhs = (1.0 + self.g_interp.eval(self.psi[i])).powf(self.p - 1.0);
            let rhs = self.gamma[i].exp();
            if rhs.is_finite() {
                worst = worst.max((lhs - rhs).abs() / rhs);
            }
        }
        worst
    }

    /// Derived g as a sampled nonlinearity (for feeding solvers).
    pub fn derived_g(&self) -> Result<Nonlinearity> {
        Nonlinearity::sampled(
            Form::G,
            self.psi.clone(),
            self.g_values.clone(),
            self.horizon_lambda.value(),
        )
    }

    /// Derived beta as a sampled nonlinearity.
    pub fn derived_beta(&self) -> Result<Nonlinearity> {
        Nonlinearity::sampled(
            Form::Beta,
            self.t_grid.clone(),
            self.beta_values.clone(),
            self.horizon_l.value(),
        )
    }

    /// CSV rows `t,gamma,psi,g,beta` (with header).
    pub fn csv(&self) -> String {
        let mut out = String::from("t,gamma,psi,g,beta\n");
        for i in 0..self.t_grid.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.t_grid[i], self.gamma[i], self.psi[i], self.g_values[i], self.beta_values[i]
            ));
        }
        out
    }
}

/// Lay out the table grid in t: log-uniform in (1 - t/L) toward a finite
/// asymptote, log-uniform in (1 + t) otherwise.
fn t_grid(l: f64, t_max: f64, nodes: usize) -> Vec<f64> {
    let n = nodes.max(16);
    let mut out = Vec::with_capacity(n);
    if l.is_finite() {
        let sigma_min: f64 = 1.0 - t_max / l; // >= 1e-9 by construction
        let log_min = sigma_min.ln();
        for i in 0..n {
            let s = (log_min * i as f64 / (n - 1) as f64).exp();
            out.push(l * (1.0 - s));
        }
        out[0] = 0.0;
        out[n - 1] = t_max;
    } else {
        let log_max = (1.0 + t_max).ln();
        for i in 0..n {
            out.push((log_max * i as f64 / (n - 1) as f64).exp_m1());
        }
        out[n - 1] = t_max;
    }
    out
}

/// GL7 nodes/weights on [-1, 1] (shared with quad::gauss7).
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

/// Advance (gamma, psi) across one cell [a, b]: gamma is accumulated with
/// GL4 between the cell's GL7 nodes, psi with GL7 of exp(gamma/(p-1)). No
/// nested adaptivity; accuracy comes from the fine table grid.
fn sweep_cell<B: Fn(f64) -> f64>(
    beta: &B,
    pm1: f64,
    a: f64,
    b: f64,
    gamma0: f64,
) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut gcur = gamma0;
    let mut prev = a;
    let mut s = 0.0;
    for k in 0..7 {
        let x = c + h * GL7_X[k];
        gcur += quad::gauss4(beta, prev, x);
        prev = x;
        s += GL7_W[k] * (gcur / pm1).exp();
    }
    gcur += quad::gauss4(beta, prev, b);
    (gcur, s * h)
}

/// Same as `sweep_cell` with the cell split into `sub` pieces (used on the
/// coarse probe grid where a single GL7 panel is not enough).
fn sweep_cell_refined<B: Fn(f64) -> f64>(
    beta: &B,
    pm1: f64,
    a: f64,
    b: f64,
    gamma0: f64,
    sub: usize,
) -> (f64, f64) {
    let mut g = gamma0;
    let mut acc = 0.0;
    for i in 0..sub {
        let x0 = a + (b - a) * i as f64 / sub as f64;
        let x1 = a + (b - a) * (i + 1) as f64 / sub as f64;
        let (gn, dpsi) = sweep_cell(beta, pm1, x0, x1, g);
        g = gn;
        acc += dpsi;
    }
    (g, acc)
}

/// Coarse cumulative pass for Psi: marches probe nodes toward the
/// endpoint, stopping where Psi reaches `cap`. Returns probe (t, psi)
/// pairs up to the stop point and whether the cap was the stopper.
fn probe_psi<B: Fn(f64) -> f64>(
    beta: &B,
    p: f64,
    l: f64,
    cap: f64,
    horizon: f64,
) -> Result<(Vec<f64>, Vec<f64>, bool)> {
    let pm1 = p - 1.0;
    let probes: Vec<f64> = if l.is_finite() {
        (0..=72)
            .map(|k| l * (1.0 - 10f64.powf(-0.125 * k as f64)))
            .collect()
    } else {
        let mut v = vec![0.0];
        let mut t = 1e-3;
        while t < horizon {
            v.push(t);
            t *= 1.5;
        }
        v.push(horizon);
        v
    };
    let mut ts = vec![probes[0]];
    let mut psis = vec![0.0];
    let mut gamma_acc = 0.0;
    let mut psi_acc = 0.0;
    for w in probes.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a >= b {
            continue;
        }
        let (gnext, cell) = sweep_cell_refined(beta, pm1, a, b, gamma_acc, 8);
        if !cell.is_finite() || psi_acc + cell >= cap {
            // Bisect inside [a, b] for the cap crossing.
            let (mut lo, mut hi) = (a, b);
            let mut lo_val = 0.0;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let (_, part) = sweep_cell_refined(beta, pm1, a, mid, gamma_acc, 8);
                if part.is_finite() && psi_acc + part < cap {
                    lo = mid;
                    lo_val = part;
                } else {
                    hi = mid;
                }
                if (hi - lo) <= 1e-9 * hi.abs().max(1e-300) {
                    break;
                }
            }
            let stop = lo.max(a + 1e-14 * (b - a));
            if stop > *ts.last().unwrap() {
                ts.push(stop);
                psis.push(psi_acc + lo_val);
            }
            return Ok((ts, psis, true));
        }
        psi_acc += cell;
        gamma_acc = gnext;
        ts.push(b);
        psis.push(psi_acc);
        if !gamma_acc.is_finite() {
            return Err(Error::NonConvergentQuadrature(format!(
                "gamma diverged inside the declared domain near t = {b}"
            )));
        }
    }
    Ok((ts, psis, false))
}

/// Final t-grid for a beta-side build: nodes equidistributed in
/// ln(1 + Psi), inverted through the probe table. This keeps the relative
/// v-spacing uniform, which is what the inverse interpolant needs, and
/// automatically clusters t-nodes against an asymptote of beta.
fn equidistributed_grid(
    probe_t: &[f64],
    probe_psi: &[f64],
    t_last: f64,
    nodes: usize,
) -> Vec<f64> {
    let n = nodes.max(16);
    // Strictly increasing (w, t) pairs with w = ln(1+psi).
    let mut ws = Vec::with_capacity(probe_t.len());
    let mut ts = Vec::with_capacity(probe_t.len());
    for i in 0..probe_t.len() {
        if probe_t[i] > t_last {
            break;
        }
        let w = probe_psi[i].ln_1p();
        if i == 0 || (w > *ws.last().unwrap() && probe_t[i] > *ts.last().unwrap()) {
            ws.push(w);
            ts.push(probe_t[i]);
        }
    }
    if ts.len() < 4 || *ts.last().unwrap() < t_last * (1.0 - 1e-9) {
        // Probe table too short to invert; fall back to the direct layout.
        return t_grid(f64::INFINITY, t_last, n);
    }
    let inv = MonotoneCubic::pchip(ws.clone(), ts.clone());
    let w_max = *ws.last().unwrap();
    let mut grid = Vec::with_capacity(n);
    grid.push(0.0);
    for j in 1..n - 1 {
        let w = w_max * j as f64 / (n - 1) as f64;
        let t = inv.eval(w);
        if t > *grid.last().unwrap() * (1.0 + 1e-14) && t < t_last {
            grid.push(t);
        }
    }
    grid.push(t_last);
    grid
}

/// Build transform tables from the beta side: gamma and Psi by cumulative
/// quadrature, derived g from the identity (1+g) = exp(gamma/(p-1)).
pub fn build_transform(
    beta: &Nonlinearity,
    p: f64,
    spec: GridSpec,
) -> Result<TransformTables> {
    if beta.form != Form::Beta {
        return Err(Error::InvalidDomain(
            "build_transform expects a beta-side nonlinearity".into(),
        ));
    }
    if !(p > 1.0) {
        return Err(Error::InvalidDomain(format!("p must exceed 1, got {p}")));
    }
    beta.validate()?;
    let pm1 = p - 1.0;
    let l = beta.endpoint;
    let b = |t: f64| beta.eval(t);

    let (pt, ppsi, cap_hit) = probe_psi(&b, p, l, spec.value_cap, spec.horizon)?;
    let cap_t = *pt.last().unwrap();
    let t_last = if l.is_finite() {
        cap_t.min(l * (1.0 - 1e-9))
    } else {
        cap_t
    };
    let grid = equidistributed_grid(&pt, &ppsi, t_last, spec.nodes);

    // One sweep accumulates gamma and Psi together on the fine grid.
    let mut gamma = Vec::with_capacity(grid.len());
    let mut psi = Vec::with_capacity(grid.len());
    gamma.push(0.0);
    psi.push(0.0);
    for i in 0..grid.len() - 1 {
        let (gn, dpsi) = sweep_cell(&b, pm1, grid[i], grid[i + 1], gamma[i]);
        if !gn.is_finite() || !dpsi.is_finite() {
            return Err(Error::NonConvergentQuadrature(format!(
                "beta is not integrable up to the requested node t = {}",
                grid[i + 1]
            )));
        }
        gamma.push(gn);
        psi.push(psi[i] + dpsi);
    }

    let g_values: Vec<f64> = gamma.iter().map(|&gv| (gv / pm1).exp() - 1.0).collect();
    let beta_values: Vec<f64> = grid.iter().map(|&t| b(t)).collect();
    let dpsi: Vec<f64> = g_values.iter().map(|&g| 1.0 + g).collect();

    // Lambda report: finite-L tables watch the Psi increments toward L;
    // with L = inf, Lambda = inf as well (the integrand is >= 1).
    let horizon_lambda = if cap_hit {
        EndpointReport::Infinite
    } else if l.is_finite() {
        // Psi at t = L (1 - 10^-j): decade-horizon partial integrals.
        let partials: Vec<f64> = (1..=9)
            .map(|j| {
                let tj = l * (1.0 - 10f64.powi(-j));
                let idx = grid.partition_point(|&t| t <= tj).saturating_sub(1);
                psi[idx.min(grid.len() - 1)]
            })
            .collect();
        match quad::classify_tail(&partials) {
            Tail::Converged { limit } => EndpointReport::DetectedFinite {
                value: limit,
                slow: false,
            },
            Tail::SlowlyConverging { limit } => EndpointReport::DetectedFinite {
                value: limit,
                slow: true,
            },
            Tail::Diverging { .. } => EndpointReport::Infinite,
        }
    } else {
        EndpointReport::Infinite
    };

    let psi_interp = MonotoneCubic::with_derivatives(grid.clone(), psi.clone(), dpsi.clone());
    let h_interp = MonotoneCubic::with_derivatives(
        psi.clone(),
        grid.clone(),
        dpsi.iter().map(|d| 1.0 / d).collect(),
    );
    // g'(v) = beta(t)/(p-1) at v = Psi(t).
    let g_interp = MonotoneCubic::with_derivatives(
        psi.clone(),
        g_values.clone(),
        beta_values.iter().map(|&bv| bv / pm1).collect(),
    );
    let beta_interp = MonotoneCubic::pchip(grid.clone(), beta_values.clone());

    Ok(TransformTables {
        p,
        t_grid: grid,
        gamma,
        psi,
        g_values,
        beta_values,
        horizon_l: if l.is_finite() {
            EndpointReport::Declared(l)
        } else {
            EndpointReport::Infinite
        },
        horizon_lambda,
        psi_interp,
        h_interp,
        g_interp,
        beta_interp,
    })
}

/// Build transform tables from the g side: H by quadrature of 1/(1+g),
/// beta from (p-1) g' composed with the inverse map.
pub fn g_to_beta(g: &Nonlinearity, p: f64, spec: GridSpec) -> Result<TransformTables> {
    if g.form != Form::G {
        return Err(Error::InvalidDomain(
            "g_to_beta expects a g-side nonlinearity".into(),
        ));
    }
    if !(p > 1.0) {
        return Err(Error::InvalidDomain(format!("p must exceed 1, got {p}")));
    }
    g.validate()?;
    let pm1 = p - 1.0;
    let lambda = g.endpoint;
    let v_last = if lambda.is_finite() {
        lambda * (1.0 - 1e-9)
    } else {
        spec.value_cap
    };
    let v_grid = t_grid(lambda, v_last, spec.nodes);

    let gfun = |v: f64| g.eval(v);
    let mut v_grid = v_grid;
    let mut h = quad::cumulative(&|v: f64| 1.0 / (1.0 + gfun(v)), &v_grid, 1e-11)?;

    // Where 1/(1+g) decays fast, the increments of H eventually fall below
    // f64 resolution and the inverse map stops being representable; the
    // table ends at the last strictly increasing node.
    let mut cut = v_grid.len();
    for i in 1..v_grid.len() {
        if h[i] <= h[i - 1] * (1.0 + 1e-15) {
            cut = i;
            break;
        }
    }
    if cut < v_grid.len() {
        v_grid.truncate(cut);
        h.truncate(cut);
    }
    let v_grid = v_grid;
    let h = h;

    let g_values: Vec<f64> = v_grid.iter().map(|&v| gfun(v)).collect();
    let mut beta_values = Vec::with_capacity(v_grid.len());
    for &v in &v_grid {
        beta_values.push(pm1 * g.deriv(v)?);
    }
    let gamma: Vec<f64> = g_values.iter().map(|&gv| pm1 * (1.0 + gv).ln()).collect();
    let one_plus_g: Vec<f64> = g_values.iter().map(|&gv| 1.0 + gv).collect();

    // L report by tail classification of H.
    let horizon_l = {
        let m = v_grid.len();
        let partials: Vec<f64> = (1..=9)
            .map(|j| {
                let idx = ((m - 1) as f64 * j as f64 / 9.0) as usize;
                h[idx.min(m - 1)]
            })
            .collect();
        match quad::classify_tail(&partials) {
            Tail::Converged { limit } => EndpointReport::DetectedFinite {
                value: limit,
                slow: false,
            },
            Tail::SlowlyConverging { limit } => EndpointReport::DetectedFinite {
                value: limit,
                slow: true,
            },
            Tail::Diverging { .. } => EndpointReport::Infinite,
        }
    };

    let psi_interp = MonotoneCubic::with_derivatives(h.clone(), v_grid.clone(), one_plus_g.clone());
    let h_interp = MonotoneCubic::with_derivatives(
        v_grid.clone(),
        h.clone(),
        one_plus_g.iter().map(|d| 1.0 / d).collect(),
    );
    let g_interp = MonotoneCubic::with_derivatives(
        v_grid.clone(),
        g_values.clone(),
        beta_values.iter().map(|&bv| bv / pm1).collect(),
    );
    let beta_interp = MonotoneCubic::pchip(h.clone(), beta_values.clone());

    Ok(TransformTables {
        p,
        t_grid: h,
        gamma,
        psi: v_grid,
        g_values,
        beta_values,
        horizon_l,
        horizon_lambda: if lambda.is_finite() {
            EndpointReport::Declared(lambda)
        } else {
            EndpointReport::Infinite
        },
        psi_interp,
        h_interp,
        g_interp,
        beta_interp,
    })
}

/// Growth class of a g-side nonlinearity relative to p-1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrowthClass {
    Sublinear,
    Linear,
    Superlinear,
    ExponentialType,
    FiniteLambda,
}

#[derive(Debug, Clone, Copy)]
pub struct GrowthReport {
    pub q_estimate: f64,
    pub m_q_estimate: f64,
    pub class: GrowthClass,
    /// Q1 = N(p-1)/(N-p), infinite when p = N.
    pub q1: f64,
    /// Q* = p* - 1.
    pub q_star: f64,
    /// p* = Np/(N-p).
    pub p_star: f64,
}

pub fn growth_thresholds(p: f64, n: usize) -> (f64, f64, f64) {
    let nf = n as f64;
    if (nf - p).abs() < 1e-12 {
        (f64::INFINITY, f64::INFINITY, f64::INFINITY)
    } else {
        let p_star = nf * p / (nf - p);
        (nf * (p - 1.0) / (nf - p), p_star - 1.0, p_star)
    }
}

/// Estimate the growth exponent Q with M_Q = limsup g^(p-1)/tau^Q from
/// log-log slopes over the top decades below the horizon.
pub fn classify_growth(
    g: &Nonlinearity,
    p: f64,
    n: usize,
    horizon: f64,
) -> Result<GrowthReport> {
    let (q1, q_star, p_star) = growth_thresholds(p, n);
    let pm1 = p - 1.0;
    if g.endpoint.is_finite() {
        return Ok(GrowthReport {
            q_estimate: f64::INFINITY,
            m_q_estimate: f64::INFINITY,
            class: GrowthClass::FiniteLambda,
            q1,
            q_star,
            p_star,
        });
    }
    if horizon < 1e4 {
        return Err(Error::HorizonTooSmall(format!(
            "growth classification wants a horizon of at least 1e4 (got {horizon})"
        )));
    }
    // Pull the horizon back to where g still evaluates finitely (strong
    // exponential types overflow f64 long before any practical horizon;
    // their increasing log-log slope is visible on any usable range).
    let mut horizon = horizon;
    while !g.eval(horizon).is_finite() && horizon > 2.0 {
        horizon /= 2.0;
    }
    if !g.eval(horizon).is_finite() {
        return Err(Error::HorizonTooSmall(
            "g overflows immediately; no usable classification range".into(),
        ));
    }
    let slope = |hi: f64| -> f64 {
        // Least-squares slope of ln g^(p-1) against ln tau over [hi/10, hi].
        let k = 16;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..k {
            let tau = hi / 10f64.powf(1.0 - i as f64 / (k - 1) as f64);
            let x = tau.ln();
            let y = pm1 * (g.eval(tau).max(1e-300)).ln();
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let kf = k as f64;
        (kf * sxy - sx * sy) / (kf * sxx - sx * sx)
    };
    let q_top = slope(horizon);
    let q_prev = slope(horizon / 10.0);
    let m_q = g.eval(horizon).powf(pm1) / horizon.powf(q_top);

    let class = if q_top > 1.05 * q_prev + 0.05 {
        GrowthClass::ExponentialType
    } else {
        // Trend of g^(p-1)/tau^(p-1) over two decades resolves logarithmic
        // corrections that the finite-horizon slope cannot.
        let ratio_hi = g.eval(horizon).powf(pm1) / horizon.powf(pm1);
        let tau_lo = horizon / 100.0;
        let ratio_lo = g.eval(tau_lo).powf(pm1) / tau_lo.powf(pm1);
        if ratio_hi > 1.1 * ratio_lo && q_top > pm1 - 0.05 {
            GrowthClass::Superlinear
        } else if ratio_hi < ratio_lo / 1.1 && q_top < pm1 + 0.05 {
            GrowthClass::Sublinear
        } else if (q_top - pm1).abs() < 0.05 {
            GrowthClass::Linear
        } else if q_top > pm1 {
            GrowthClass::Superlinear
        } else {
            GrowthClass::Sublinear
        }
    };

    Ok(GrowthReport {
        q_estimate: q_top,
        m_q_estimate: m_q,
        class,
        q1,
        q_star,
        p_star,
    })
}

/// Sampled convexity/energy diagnostics of a g-side nonlinearity:
/// j = t g' - g, script J = t phi - p Phi, h = g g' - int g'^2, and the
/// Ambrosetti-Rabinowitz ratio t phi / Phi.
#[derive(Debug, Clone)]
pub struct ConvexityDiagnostics {
    pub t: Vec<f64>,
    pub j: Vec<f64>,
    pub j_script: Vec<f64>,
    pub h: Vec<f64>,
    pub ar_ratio: Vec<f64>,
    pub phi: Vec<f64>,
    pub big_phi: Vec<f64>,
    /// Discrete convexity of g on the grid (difference quotients of g'
    /// nondecreasing).
    pub g_convex: bool,
}

pub fn convexity_diagnostics(
    g: &Nonlinearity,
    p: f64,
    t_grid: &[f64],
) -> Result<ConvexityDiagnostics> {
    let pm1 = p - 1.0;
    let phi_fun = |t: f64| (1.0 + g.eval(t.max(0.0))).powf(pm1);
    let big_phi = quad::cumulative(&phi_fun, t_grid, 1e-11)?;
    let mut gp = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        gp.push(g.deriv(t)?);
    }
    let int_gp2 = quad::cumulative(&|s: f64| g.deriv(s).map(|d| d * d).unwrap_or(0.0), t_grid, 1e-11)?;
    let mut j = Vec::with_capacity(t_grid.len());
    let mut j_script = Vec::with_capacity(t_grid.len());
    let mut h = Vec::with_capacity(t_grid.len());
    let mut ar = Vec::with_capacity(t_grid.len());
    let mut phi = Vec::with_capacity(t_grid.len());
    for (i, &t) in t_grid.iter().enumerate() {
        let gv = g.eval(t);
        let ph = phi_fun(t);
        phi.push(ph);
        j.push(t * gp[i] - gv);
        j_script.push(t * ph - p * big_phi[i]);
        h.push(gv * gp[i] - int_gp2[i]);
        ar.push(if big_phi[i] > 0.0 {
            t * ph / big_phi[i]
        } else {
            p
        });
    }
    let mut convex = true;
    for w in gp.windows(2) {
        if w[1] < w[0] - 1e-10 * w[0].abs().max(1.0) {
            convex = false;
        }
    }
    Ok(ConvexityDiagnostics {
        t: t_grid.to_vec(),
        j,
        j_script,
        h,
        ar_ratio: ar,
        phi,
        big_phi,
        g_convex: convex,
    })
}

/// One growth segment of the counterexample construction.
#[derive(Debug, Clone, Copy)]
pub struct CounterexampleSegment {
    pub n: usize,
    pub slope: f64,
    pub s_start: f64,
    pub s_end: f64,
    /// Window [s', s''] where the segment line dominates n*F.
    pub s_prime: f64,
    pub s_double_prime: f64,
}

#[derive(Debug, Clone)]
pub struct CounterexampleG {
    pub g: Nonlinearity,
    pub segments: Vec<CounterexampleSegment>,
}

impl CounterexampleG {
    /// Exact integral of 1/(1+g) over growth segment i (piecewise-linear g).
    pub fn segment_mass(&self, i: usize) -> f64 {
        let seg = &self.segments[i];
        let pl = self.g.piecewise().expect("counterexample g is piecewise linear");
        let g0 = pl.eval(seg.s_start);
        let g1 = pl.eval(seg.s_end);
        ((1.0 + g1) / (1.0 + g0)).ln() / seg.slope
    }
}

/// Convex piecewise-linear g with segments that overtake n*F in turn while
/// keeping 1/(1+g) non-integrable: slopes at least double each round and
/// each segment carries unit mass of ds/(1+g).
pub fn construct_counterexample_g<F: Fn(f64) -> f64>(
    f_curve: F,
    horizon: f64,
) -> Result<CounterexampleG> {
    if !(horizon > 2.0) {
        return Err(Error::HorizonTooSmall(format!("horizon {horizon} <= 2")));
    }
    if f_curve(1.0) <= 0.0 {
        return Err(Error::InvalidDomain(
            "F must be positive at s = 1 (strictly convex, increasing to infinity)".into(),
        ));
    }
    // Spot-check convexity.
    for (a, b) in [(1.0, 3.0), (2.0, 10.0), (5.0, 50.0)] {
        let mid = 0.5 * (a + b);
        if f_curve(mid) > 0.5 * (f_curve(a) + f_curve(b)) + 1e-9 {
            return Err(Error::InvalidDomain(format!(
                "F fails the midpoint convexity check on [{a}, {b}]"
            )));
        }
    }

    let mut breakpoints = vec![0.0, 1.0];
    let mut slopes = vec![0.0];
    let mut segments = Vec::new();
    let mut s_prev = 1.0;
    let mut g_prev = 0.0;
    let mut m_prev = 1.0f64;

    for n in 1..=64usize {
        let nf = n as f64;
        // Excess of the candidate line over n*F.
        let excess = |m: f64, s: f64| g_prev + m * (s - s_prev) - nf * f_curve(s);
        // Smallest doubled slope whose line overtakes n*F somewhere.
        let mut m = 2.0 * m_prev + 1.0;
        let mut peak = None;
        while m.is_finite() {
            if let Some((s_star, val)) = maximize(&excess, m, s_prev, horizon * 10.0) {
                if val > 0.0 {
                    peak = Some(s_star);
                    break;
                }
            }
            m = 2.0 * m + 1.0;
        }
        let Some(s_star) = peak else { break };
        // Crossings of the line with n*F around the peak.
        let s_prime = bisect_zero(&|s| excess(m, s), s_prev, s_star);
        let s_dprime = bisect_zero(&|s| -excess(m, s), s_star, horizon * 10.0);

        let jump = (1.0 + g_prev) * m.exp();
        let s_n = (2.0 * s_prev).max(s_dprime + 1.0).max(s_prev + jump);
        if !s_n.is_finite() || s_n > horizon {
            break;
        }
        breakpoints.push(s_n);
        slopes.push(m);
        segments.push(CounterexampleSegment {
            n,
            slope: m,
            s_start: s_prev,
            s_end: s_n,
            s_prime,
            s_double_prime: s_dprime,
        });
        g_prev += m * (s_n - s_prev);
        s_prev = s_n;
        m_prev = m;
    }

    if segments.is_empty() {
        return Err(Error::HorizonTooSmall(format!(
            "no growth segment fits below horizon {horizon}"
        )));
    }
    // The last slope also extends past the last breakpoint.
    slopes.push(*slopes.last().unwrap());
    let pl = PiecewiseLinear::new(breakpoints, slopes)?;
    let g = Nonlinearity {
        form: Form::G,
        shape: crate::nonlinearity::Shape::PiecewiseLinear(pl),
        endpoint: f64::INFINITY,
    };
    Ok(CounterexampleG { g, segments })
}

/// Golden-section maximum of `f(m, .)` over [a, b]; None if no positive
/// slope direction exists at all.
fn maximize<F: Fn(f64, f64) -> f64>(f: &F, m: f64, a: f64, b: f64) -> Option<(f64, f64)> {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = f(m, x1);
    let mut f2 = f(m, x2);
    for _ in 0..200 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(m, x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(m, x1);
        }
        if (hi - lo) <= 1e-12 * hi.abs().max(1.0) {
            break;
        }
    }
    let x = 0.5 * (lo + hi);
    Some((x, f(m, x)))
}

/// Zero of a function that changes sign from <=0 at `a` to >0 near `b`
/// (callers orient the sign).
fn bisect_zero<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (mut lo, mut hi) = (a, b);
    if f(lo) > 0.0 {
        return lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-12 * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::CatalogParams;

    fn spec_small() -> GridSpec {
        GridSpec::with_nodes(2000)
    }

    #[test]
    fn constant_beta_gives_exponential_psi_and_linear_g() {
        // beta = p-1, p=2: Psi(t) = e^t - 1, g(v) = v.
        let beta = Nonlinearity::beta_catalog(1, CatalogParams::default(), 2.0).unwrap();
        let tables = build_transform(&beta, 2.0, spec_small()).unwrap();
        for &t in &[0.1, 0.5, 1.0, 3.0] {
            let psi = tables.psi_of(t);
            assert!(
                (psi - t.exp_m1()).abs() < 1e-8 * (1.0 + t.exp()),
                "psi({t}) = {psi}"
            );
            let g = tables.g_of(psi).unwrap();
            assert!((g - psi).abs() < 1e-8 * (1.0 + psi));
        }
        assert!(matches!(tables.horizon_lambda, EndpointReport::Infinite));
    }

    #[test]
    fn zero_beta_gives_identity() {
        let beta = Nonlinearity::sampled(
            Form::Beta,
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
            vec![0.0; 5],
            f64::INFINITY,
        )
        .unwrap();
        let tables = build_transform(&beta, 2.5, spec_small()).unwrap();
        for &t in &[0.5, 2.0, 100.0, 1e6] {
            assert!((tables.psi_of(t) - t).abs() < 1e-9 * (1.0 + t));
            assert!(tables.g_of(t).unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn example6_finite_l_infinite_lambda() {
        // beta = (p-1)/(1-t), L = 1: 1+g = e^v, Lambda = inf.
        let beta = Nonlinearity::beta_catalog(6, CatalogParams::default(), 2.0).unwrap();
        let tables = build_transform(&beta, 2.0, spec_small()).unwrap();
        assert!(matches!(tables.horizon_lambda, EndpointReport::Infinite));
        for &v in &[0.5, 2.0, 5.0] {
            let g = tables.g_of(v).unwrap();
            assert!((g - v.exp_m1()).abs() < 1e-7 * v.exp(), "g({v}) = {g}");
        }
    }

    #[test]
    fn g_to_beta_linear_g() {
        let g = Nonlinearity::g_catalog(1, CatalogParams::default(), 2.0).unwrap();
        let tables = g_to_beta(&g, 2.0, spec_small()).unwrap();
        for &t in &[0.1, 1.0, 5.0] {
            assert!((tables.beta_of(t).unwrap() - 1.0).abs() < 1e-9);
        }
        assert!(matches!(tables.horizon_l, EndpointReport::Infinite));
    }

    #[test]
    fn g_to_beta_zero_g_gives_identity() {
        let g = Nonlinearity::sampled(
            Form::G,
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
            vec![0.0; 5],
            f64::INFINITY,
        )
        .unwrap();
        let tables = g_to_beta(&g, 2.5, spec_small()).unwrap();
        for &v in &[0.5, 1.0, 100.0] {
            assert!((tables.h_of(v).unwrap() - v).abs() < 1e-10 * (1.0 + v));
            assert!(tables.beta_of(v).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn g_to_beta_superlinear_power_detects_finite_l() {
        // (1+g)^(p-1) = (1+v)^Q, Q = 2, p = 2: L = 1/(alpha-1) = 1.
        let g = Nonlinearity::g_catalog(
            5,
            CatalogParams {
                q: Some(2.0),
                ..Default::default()
            },
            2.0,
        )
        .unwrap();
        let tables = g_to_beta(&g, 2.0, spec_small()).unwrap();
        match tables.horizon_l {
            EndpointReport::DetectedFinite { value, .. } => {
                assert!((value - 1.0).abs() < 1e-3, "L = {value}")
            }
            other => panic!("expected finite L, got {other:?}"),
        }
        // beta(t) = 2 alpha / (1 - (alpha-1) t) with alpha = 2.
        let entry = g.catalog().unwrap();
        for &v in &[0.5, 2.0, 10.0] {
            let t = tables.h_of(v).unwrap();
            let b = tables.beta_of(t).unwrap();
            let exact = entry.g_prime(v); // (p-1) g'(v) with p = 2
            assert!((b - exact).abs() < 1e-6 * exact, "beta({t}) = {b} vs {exact}");
        }
    }

    #[test]
    fn roundtrip_and_rela_on_catalog() {
        for p in [2.0, 3.0] {
            for id in 1..=10u32 {
                let beta = Nonlinearity::beta_catalog(id, CatalogParams::default(), p).unwrap();
                let tables = build_transform(&beta, p, spec_small()).unwrap();
                // Table nodes invert exactly; midpoints carry the
                // interpolation error, bounded relative to 1 + t.
                let node_err = tables.roundtrip_max_error(&tables.t_grid);
                assert!(node_err <= 1e-8, "entry {id} p={p} node roundtrip {node_err:e}");
                let mut worst_scaled: f64 = 0.0;
                for w in tables.t_grid.windows(2) {
                    let t = 0.5 * (w[0] + w[1]);
                    let back = tables.h_of(tables.psi_of(t)).unwrap();
                    worst_scaled = worst_scaled.max((back - t).abs() / (1.0 + t));
                }
                // 2000-node table here; the acceptance suite runs the
                // full-resolution version.
                assert!(
                    worst_scaled <= 1e-7,
                    "entry {id} p={p} midpoint roundtrip {worst_scaled:e}"
                );
                let rela = tables.rela_max_error();
                assert!(rela <= 1e-8, "entry {id} p={p} rela {rela:e}");
            }
        }
    }

    #[test]
    fn h_below_identity() {
        for id in [1u32, 2, 5, 6, 9] {
            let g = Nonlinearity::g_catalog(id, CatalogParams::default(), 2.0).unwrap();
            let tables = g_to_beta(&g, 2.0, spec_small()).unwrap();
            for i in 0..tables.psi.len() {
                assert!(
                    tables.t_grid[i] <= tables.psi[i] + 1e-12,
                    "entry {id}: H(v) > v at v = {}",
                    tables.psi[i]
                );
            }
        }
    }

    #[test]
    fn growth_classes() {
        // Linear.
        let lin = Nonlinearity::g_catalog(1, CatalogParams::default(), 2.0).unwrap();
        let rep = classify_growth(&lin, 2.0, 3, 1e10).unwrap();
        assert_eq!(rep.class, GrowthClass::Linear);
        assert!((rep.q_estimate - 1.0).abs() < 0.02);

        // Superlinear power with Q = 2 > Q1 = 5/3 at N = 5.
        let sup = Nonlinearity::g_catalog(
            5,
            CatalogParams {
                q: Some(2.0),
                ..Default::default()
            },
            2.0,
        )
        .unwrap();
        let rep = classify_growth(&sup, 2.0, 5, 1e10).unwrap();
        assert_eq!(rep.class, GrowthClass::Superlinear);
        assert!((rep.q_estimate - 2.0).abs() < 0.05);
        assert!((rep.q1 - 5.0 / 3.0).abs() < 1e-12);
        assert!(rep.q_estimate > rep.q1);

        // Example 3 (m = 1): g ~ C v (ln v)^(1/2), superlinear via the trend.
        let logt = Nonlinearity::g_catalog(3, CatalogParams::default(), 2.0).unwrap();
        let rep = classify_growth(&logt, 2.0, 3, 1e10).unwrap();
        assert_eq!(rep.class, GrowthClass::Superlinear);

        // Sublinear power.
        let sub = Nonlinearity::g_catalog(2, CatalogParams::default(), 2.0).unwrap();
        let rep = classify_growth(&sub, 2.0, 3, 1e10).unwrap();
        assert_eq!(rep.class, GrowthClass::Sublinear);

        // Exponential type.
        let expg = Nonlinearity::g_catalog(6, CatalogParams::default(), 2.0).unwrap();
        let rep = classify_growth(&expg, 2.0, 3, 1e6).unwrap();
        assert_eq!(rep.class, GrowthClass::ExponentialType);

        // Finite Lambda.
        let quench = Nonlinearity::g_catalog(9, CatalogParams::default(), 2.0).unwrap();
        let rep = classify_growth(&quench, 2.0, 3, 1e10).unwrap();
        assert_eq!(rep.class, GrowthClass::FiniteLambda);

        // p = N flags.
        let rep = classify_growth(&lin, 2.0, 2, 1e10).unwrap();
        assert!(rep.q1.is_infinite() && rep.q_star.is_infinite());
    }

    #[test]
    fn convexity_closed_forms() {
        let grid: Vec<f64> = (0..=200).map(|i| i as f64 * 0.01).collect();

        // g = v, p = 2: j = 0, phi = 1+t, Phi = t + t^2/2, AR ratio -> 2.
        let lin = Nonlinearity::g_catalog(1, CatalogParams::default(), 2.0).unwrap();
        let d = convexity_diagnostics(&lin, 2.0, &grid).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            assert!(d.j[i].abs() < 1e-12);
            assert!((d.phi[i] - (1.0 + t)).abs() < 1e-12);
            assert!((d.big_phi[i] - (t + 0.5 * t * t)).abs() < 1e-10);
        }
        let t_last: f64 = 2.0;
        let expect = t_last * (1.0 + t_last) / (t_last + 0.5 * t_last * t_last);
        assert!((d.ar_ratio.last().unwrap() - expect).abs() < 1e-9);

        // 1+g = e^v, p=2: j(t) = (t-1)e^t + 1 > 0 for t > 0.
        let expg = Nonlinearity::g_catalog(6, CatalogParams::default(), 2.0).unwrap();
        let d = convexity_diagnostics(&expg, 2.0, &grid).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            let expect = (t - 1.0) * t.exp() + 1.0;
            assert!((d.j[i] - expect).abs() < 1e-9 * (1.0 + t.exp()));
            if t > 0.05 {
                assert!(d.j[i] > 0.0);
            }
        }
        assert!(d.g_convex);

        // g = v^2 (sampled as catalog 5 with Q chosen so g=(1+v)^2-1? no:
        // use a sampled table): h(1) = 2/3.
        let xs: Vec<f64> = (0..=400).map(|i| i as f64 * 0.005).collect();
        let ys: Vec<f64> = xs.iter().map(|v| v * v).collect();
        let gsq = Nonlinearity::sampled(Form::G, xs, ys, f64::INFINITY).unwrap();
        let d = convexity_diagnostics(&gsq, 2.0, &grid).unwrap();
        let i1 = grid.iter().position(|&t| (t - 1.0).abs() < 1e-12).unwrap();
        assert!((d.h[i1] - 2.0 / 3.0).abs() < 1e-4, "h(1) = {}", d.h[i1]);
    }

    #[test]
    fn counterexample_against_square() {
        let ce = construct_counterexample_g(|s| s * s, 1e12).unwrap();
        assert!(!ce.segments.is_empty());
        for (i, seg) in ce.segments.iter().enumerate() {
            assert!(ce.segment_mass(i) >= 1.0, "segment {i} mass");
            // g >= nF on [s', s''].
            let pl = ce.g.piecewise().unwrap();
            for j in 0..=16 {
                let s = seg.s_prime + (seg.s_double_prime - seg.s_prime) * j as f64 / 16.0;
                assert!(
                    pl.eval(s) >= seg.n as f64 * s * s - 1e-6 * s * s,
                    "segment {i} fails domination at {s}"
                );
            }
            // Superlinearity marker: g(s_n)/s_n >= m_n/2.
            assert!(pl.eval(seg.s_end) / seg.s_end >= 0.5 * seg.slope);
        }
        // Convexity of the constructed graph.
        let pl = ce.g.piecewise().unwrap();
        for w in pl.slopes.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn counterexample_horizon_too_small() {
        assert!(matches!(
            construct_counterexample_g(|s| s * s, 10.0),
            Err(Error::HorizonTooSmall(_))
        ));
    }

    #[test]
    fn dictionary_checks_on_catalog() {
        // L < inf iff 1/(1+g) integrable: detected from the g side.
        let finite_l_ids = [5u32, 6, 7, 8, 9, 10];
        for id in 1..=10u32 {
            let g = Nonlinearity::g_catalog(id, CatalogParams::default(), 2.0).unwrap();
            let tables = g_to_beta(&g, 2.0, spec_small()).unwrap();
            let expect_finite = finite_l_ids.contains(&id);
            let truth = Nonlinearity::beta_catalog(id, CatalogParams::default(), 2.0)
                .unwrap()
                .endpoint
                .is_finite();
            assert_eq!(expect_finite, truth);
            if g.endpoint.is_finite() {
                // Lambda finite: H(Lambda) finite trivially; table covers it.
                assert!(tables.horizon_l.is_finite(), "entry {id}");
            } else {
                assert_eq!(
                    tables.horizon_l.is_finite(),
                    expect_finite,
                    "entry {id}: L finiteness misclassified"
                );
            }
            if expect_finite && tables.horizon_l.is_finite() {
                let claimed = tables.horizon_l.value();
                let exact = g.catalog().unwrap().l_end();
                assert!(
                    (claimed - exact).abs() < 0.02 * exact,
                    "entry {id}: L = {claimed} vs {exact}"
                );
            }
        }
        // g bounded iff gamma(L) < inf: exercised by the bounded beta.
        let bexp = Nonlinearity::bounded_exp_beta();
        let tables = build_transform(&bexp, 2.0, spec_small()).unwrap();
        let g_inf = 1f64.exp() - 1.0;
        let g_far = tables.g_of(tables.v_max() * 0.99).unwrap();
        assert!((g_far - g_inf).abs() < 1e-3, "g(inf) = {g_far}");
    }

    #[test]
    fn monotone_correspondence_convex_g_gives_nondecreasing_beta() {
        for id in [1u32, 5, 6, 9] {
            let g = Nonlinearity::g_catalog(id, CatalogParams::default(), 2.0).unwrap();
            let tables = g_to_beta(&g, 2.0, spec_small()).unwrap();
            let grid: Vec<f64> = (0..=100)
                .map(|i| tables.v_max().min(20.0) * i as f64 / 100.0)
                .collect();
            let d = convexity_diagnostics(&g, 2.0, &grid).unwrap();
            if d.g_convex {
                for w in tables.beta_values.windows(2) {
                    assert!(w[1] >= w[0] - 1e-8 * w[0].abs().max(1.0), "entry {id}");
                }
            }
        }
    }
}
