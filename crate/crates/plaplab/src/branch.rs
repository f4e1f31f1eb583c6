//! Minimal-solution continuation in lambda for the order-zero problem
//!
//!   -Delta_p v = lambda f (1 + g(v))^(p-1),  v = 0 on the boundary,
//!
//! via the monotone scheme v_{n+1} = G(lambda f (1+g(v_n))^(p-1)) from
//! v_0 = 0; detection of the extremal parameter lambda* by bisection,
//! extremal-solution trends, energy and semi-stability diagnostics, and
//! shooting sweeps that exhibit multiplicity.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;
use crate::nonlinearity::Nonlinearity;
use crate::quad;
use crate::radial::{
    green_apply_fn, green_apply_nodes, residual, shoot, sphere_area, RadialProblem,
    RadialSolution, Source, Weight,
};
use crate::transform::GrowthReport;

/// Iteration controls for the monotone scheme.
#[derive(Debug, Clone, Copy)]
pub struct IterationControl {
    /// Pointwise relative tolerance |dv| <= tol (1 + v).
    pub tol: f64,
    pub max_iter: usize,
    /// Declared divergence when sup v exceeds this cap.
    pub sup_cap: f64,
    /// High-order re-solve of the converged profile.
    pub polish: bool,
    /// Geometric-tail extrapolation jumps (classification probes): when
    /// the increments contract at a stable rate rho < 1, add the projected
    /// tail inc * rho/(1-rho) and let the plain criterion confirm. Near an
    /// eigenvalue-type threshold this cuts the iteration count by 1/(1-rho)
    /// without changing what "converged" means.
    pub accelerate: bool,
}

impl Default for IterationControl {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 100_000,
            sup_cap: 1e12,
            polish: true,
            accelerate: false,
        }
    }
}

impl IterationControl {
    pub fn probe() -> Self {
        Self {
            polish: false,
            accelerate: true,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceReason {
    /// sup v passed the cap.
    SupCap,
    /// (1+g(v))^(p-1) overflowed f64 (far beyond any bounded solution).
    RhsOverflow,
    /// v approached a finite Lambda (quenching-type escape).
    ApproachedLambdaEnd,
    /// Iteration budget exhausted without Cauchy behavior.
    IterationBudget,
    /// Increments stopped decaying over a long window while staying
    /// bounded away from zero (certified escape below the cap).
    MonotoneGrowth,
}

#[derive(Debug, Clone)]
pub struct DivergenceInfo {
    pub reason: DivergenceReason,
    pub iterations: usize,
    pub sup: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergedRun {
    pub solution: RadialSolution,
    /// Worst pointwise violation of v_n <= v_{n+1} seen along the run
    /// (zero up to rounding for the monotone scheme).
    pub monotone_defect: f64,
}

#[derive(Debug, Clone)]
pub enum SolveOutcome {
    Converged(ConvergedRun),
    Diverged(DivergenceInfo),
}

impl SolveOutcome {
    pub fn converged(&self) -> Option<&ConvergedRun> {
        match self {
            SolveOutcome::Converged(run) => Some(run),
            SolveOutcome::Diverged(_) => None,
        }
    }

    pub fn is_converged(&self) -> bool {
        matches!(self, SolveOutcome::Converged(_))
    }
}

fn order_zero_g(problem: &RadialProblem) -> Result<&Nonlinearity> {
    match &problem.source {
        Source::OrderZero(g) => Ok(g),
        _ => Err(Error::InvalidDomain(
            "minimal-solution continuation needs an order-zero source".into(),
        )),
    }
}

/// Monotone iteration from v = 0 at the given lambda (the problem's own
/// lambda field is ignored here; continuation varies it). An atom mass on
/// the problem is carried through every Green solve.
pub fn minimal_solution(
    problem: &RadialProblem,
    lambda: f64,
    ctrl: &IterationControl,
) -> Result<SolveOutcome> {
    problem.validate()?;
    let g = order_zero_g(problem)?;
    if lambda < 0.0 {
        return Err(Error::InvalidDomain(format!("lambda = {lambda} < 0")));
    }
    let grid = &problem.grid;
    let nodes = grid.nodes();
    let m = nodes.len();
    let p = problem.p;
    let pm1 = p - 1.0;
    // Iterates that approach a finite Lambda, or leave the range a sampled
    // table can represent, are classified as diverging.
    let lambda_end = g.usable_max();
    let lambda_guard = if lambda_end.is_finite() {
        lambda_end * (1.0 - 1e-9)
    } else {
        f64::INFINITY
    };

    let mut v = vec![0.0f64; m];
    let mut monotone_defect = 0.0f64;
    let mut increments: Vec<f64> = Vec::new();
    let mut inc_vec = vec![0.0f64; m];
    let mut last_jump = 0usize;

    for iter in 1..=ctrl.max_iter {
        let mut q = Vec::with_capacity(m);
        for i in 0..m {
            let vi = v[i];
            if vi >= lambda_guard {
                return Ok(SolveOutcome::Diverged(DivergenceInfo {
                    reason: DivergenceReason::ApproachedLambdaEnd,
                    iterations: iter,
                    sup: v.iter().fold(0.0f64, |a, &b| a.max(b)),
                }));
            }
            let qi = lambda * problem.weight.regular_at(i, nodes[i]) * (1.0 + g.eval(vi)).powf(pm1);
            if !qi.is_finite() {
                return Ok(SolveOutcome::Diverged(DivergenceInfo {
                    reason: DivergenceReason::RhsOverflow,
                    iterations: iter,
                    sup: v.iter().fold(0.0f64, |a, &b| a.max(b)),
                }));
            }
            q.push(qi);
        }
        let sol = green_apply_nodes(grid, p, problem.n, &q, &problem.weight, problem.atom_mass)?;

        let mut sup = 0.0f64;
        let mut delta = 0.0f64;
        let mut rel_delta = 0.0f64;
        for i in 0..m {
            let d = sol.u[i] - v[i];
            monotone_defect = monotone_defect.max(-d);
            delta = delta.max(d);
            rel_delta = rel_delta.max(d.abs() / (1.0 + sol.u[i].abs()));
            sup = sup.max(sol.u[i]);
            inc_vec[i] = d;
        }
        v.copy_from_slice(&sol.u);

        if !sup.is_finite() || sup > ctrl.sup_cap {
            return Ok(SolveOutcome::Diverged(DivergenceInfo {
                reason: DivergenceReason::SupCap,
                iterations: iter,
                sup,
            }));
        }
        if rel_delta <= ctrl.tol {
            let mut solution = sol;
            if ctrl.polish {
                solution = polish(problem, lambda, &solution)?;
            }
            solution.converged = true;
            solution.iterations = iter;
            return Ok(SolveOutcome::Converged(ConvergedRun {
                solution,
                monotone_defect,
            }));
        }
        increments.push(delta);
        // Escape certificate: the increments of a convergent monotone
        // iteration must decay; if they have not decayed at all across a
        // 100-step window while staying above noise, the iterates are
        // running away (below the sup cap).
        let k = increments.len();
        if k >= 200 && k >= last_jump + 150 {
            let now = increments[k - 1];
            let then = increments[k - 101];
            if now >= 0.9999 * then && now > 1e-7 * (1.0 + sup) {
                return Ok(SolveOutcome::Diverged(DivergenceInfo {
                    reason: DivergenceReason::MonotoneGrowth,
                    iterations: iter,
                    sup,
                }));
            }
            // Stable geometric contraction: jump by the projected tail.
            if ctrl.accelerate && k.is_multiple_of(100) {
                let rho = (now / then).powf(0.01);
                let rho_prev = (increments[k - 51] / increments[k - 151]).powf(0.01);
                if rho < 1.0 && (rho - rho_prev).abs() < 0.1 * (1.0 - rho) {
                    let mut factor = (rho / (1.0 - rho)).min(1e4);
                    if lambda_guard.is_finite() {
                        // Never jump more than halfway to the endpoint.
                        let room = 0.5 * (lambda_guard - sup).max(0.0);
                        if delta > 0.0 {
                            factor = factor.min(room / delta);
                        }
                    }
                    if factor > 1.0 {
                        for i in 0..m {
                            v[i] += inc_vec[i] * factor;
                        }
                        last_jump = k;
                    }
                }
            }
        }
    }
    Ok(SolveOutcome::Diverged(DivergenceInfo {
        reason: DivergenceReason::IterationBudget,
        iterations: ctrl.max_iter,
        sup: v.iter().fold(0.0f64, |a, &b| a.max(b)),
    }))
}

/// Re-solve the converged profile with the adaptive Green path and a
/// smooth reconstruction of the right-hand side; two rounds push the
/// fixed-point gap to the reconstruction floor.
fn polish(problem: &RadialProblem, lambda: f64, sol: &RadialSolution) -> Result<RadialSolution> {
    let g = order_zero_g(problem)?;
    if matches!(problem.weight, Weight::Sampled(_)) {
        return Ok(sol.clone());
    }
    let pm1 = problem.p - 1.0;
    let scale = match &problem.weight {
        Weight::Const(c) => *c,
        _ => 1.0,
    };
    let mut current = sol.clone();
    for _ in 0..3 {
        let vhat = MonotoneCubic::pchip(current.r.to_vec(), current.u.clone());
        let qf = |r: f64| lambda * scale * (1.0 + g.eval(vhat.eval(r).max(0.0))).powf(pm1);
        current = green_apply_fn(
            &problem.grid,
            problem.p,
            problem.n,
            &qf,
            &problem.weight,
            problem.atom_mass,
        )?;
    }
    current.converged = true;
    current.iterations = sol.iterations;
    Ok(current)
}

#[derive(Debug, Clone, Serialize)]
pub enum LambdaStar {
    /// lo converged, hi diverged, hi - lo <= rel_tol * hi.
    Bracket { lo: f64, hi: f64 },
    /// Every probe up to the cap converged (sublinear-type range).
    Infinite { probed_up_to: f64 },
}

#[derive(Debug, Clone)]
pub struct LambdaStarReport {
    pub result: LambdaStar,
    /// (lambda, converged) for every probe, in probe order.
    pub probes: Vec<(f64, bool)>,
}

/// Starting lower probe from the small-lambda existence construction:
/// with w = G(f), a w is a supersolution for lambda <= a (1+g(a sup w))^(1-p).
pub fn lambda_small_bound(problem: &RadialProblem) -> Result<f64> {
    let g = order_zero_g(problem)?;
    let nodes = problem.grid.nodes();
    let q: Vec<f64> = (0..nodes.len())
        .map(|i| problem.weight.regular_at(i, nodes[i]))
        .collect();
    let w = green_apply_nodes(
        &problem.grid,
        problem.p,
        problem.n,
        &q,
        &problem.weight,
        0.0,
    )?;
    let sup = w.sup();
    if !sup.is_finite() || sup <= 0.0 {
        return Err(Error::NonIntegrableSource(
            "G(f) unbounded or trivial; no small-lambda bound".into(),
        ));
    }
    let lambda_end = g.endpoint;
    // Pick a with a * sup < Lambda.
    let a = if lambda_end.is_finite() {
        0.5 * lambda_end / sup
    } else {
        1.0
    };
    Ok(a * (1.0 + g.eval(a * sup)).powf(1.0 - problem.p))
}

/// Bisection for the extremal parameter: minimal_solution converges at lo
/// and diverges at hi, refined until hi - lo <= 1e-4 hi. Probes expand
/// upward by decades first; if everything converges up to `hi_cap` the
/// range is reported as infinite.
pub fn find_lambda_star(
    problem: &RadialProblem,
    bracket_hint: Option<(f64, f64)>,
    hi_cap: f64,
    ctrl: &IterationControl,
) -> Result<LambdaStarReport> {
    let mut probes = Vec::new();
    let mut probe = |lambda: f64| -> Result<bool> {
        let ok = minimal_solution(problem, lambda, ctrl)?.is_converged();
        probes.push((lambda, ok));
        Ok(ok)
    };

    let mut lo = match bracket_hint {
        Some((l, _)) if l > 0.0 => l,
        _ => lambda_small_bound(problem)?,
    };
    let mut tries = 0;
    while !probe(lo)? {
        lo *= 0.5;
        tries += 1;
        if tries > 60 {
            return Err(Error::InvalidDomain(
                "no convergent lower probe found; lambda* may be zero".into(),
            ));
        }
    }

    // Expand upward: start at 1 (or the hint), then by decades.
    let mut hi = match bracket_hint {
        Some((_, h)) if h > lo => h,
        _ => {
            if lo < 1.0 {
                1.0
            } else {
                10f64.powf(lo.log10().floor() + 1.0)
            }
        }
    };
    loop {
        if probe(hi)? {
            lo = hi;
            if hi >= hi_cap {
                return Ok(LambdaStarReport {
                    result: LambdaStar::Infinite { probed_up_to: hi },
                    probes,
                });
            }
            hi *= 10.0;
        } else {
            break;
        }
    }

    while hi - lo > 1e-4 * hi {
        let mid = 0.5 * (lo + hi);
        if probe(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(LambdaStarReport {
        result: LambdaStar::Bracket { lo, hi },
        probes,
    })
}

/// Thresholds and verdicts read off the regularity bootstrap.
#[derive(Debug, Clone, Serialize)]
pub struct RegularityPrediction {
    pub p: f64,
    pub n: usize,
    /// Integrability exponent of the weight (f64::INFINITY for bounded f).
    pub r: f64,
    pub n0: f64,
    pub n1: f64,
    pub sigma_bar: f64,
    pub tau_bar: f64,
    /// m_bar = Np/(Np - N + p): F in L^m with m >= m_bar puts G(F) in
    /// W_0^(1,p).
    pub m_bar: f64,
    /// Value-exponent of the bootstrap at m = min(r, just below N/p):
    /// U^(p-1) in L^k, k = Nm/(N-pm).
    pub boot_value_exponent: f64,
    /// Gradient exponent at the same m: |grad U|^(p-1) in L^k, k = Nm/(N-m).
    pub boot_gradient_exponent: f64,
    pub q1: f64,
    pub q_star: f64,
    /// N < N0: the extremal solution is bounded.
    pub extremal_bounded: bool,
    /// N < N1: the extremal solution lies in W_0^(1,p).
    pub extremal_in_w1p: bool,
    /// N0 < N1 must hold for p > 1, r > 1; checked per instance.
    pub n0_below_n1: bool,
    /// Growth-case verdict for a right-hand side dominated by
    /// f (1 + U^Q): in W_0^(1,p) cap L^inf when guaranteed.
    pub growth_case: String,
}

pub fn regularity_prediction(p: f64, n: usize, r: f64, growth: &GrowthReport) -> RegularityPrediction {
    let nf = n as f64;
    let pm1 = p - 1.0;
    let pprime = p / pm1;
    let inv_r = if r.is_finite() { 1.0 / r } else { 0.0 };
    let rprime = if r.is_finite() { r / (r - 1.0) } else { 1.0 };
    let n0 = p * pprime / (1.0 + inv_r / pm1);
    let n1 = p * (1.0 + pprime) / (1.0 + pprime * inv_r);
    let inv_sigma = 1.0 - p * pprime / nf + inv_r / pm1;
    let sigma_bar = if inv_sigma > 0.0 {
        1.0 / inv_sigma
    } else {
        f64::INFINITY
    };
    let inv_tau = 1.0 + inv_r / pm1 - (pprime + 1.0) / nf;
    let tau_bar = if inv_tau > 0.0 {
        1.0 / inv_tau
    } else {
        f64::INFINITY
    };
    let m_bar = nf * p / (nf * p - nf + p);
    let m_used = if r.is_finite() {
        r.min(nf / p * (1.0 - 1e-9))
    } else {
        nf / p * (1.0 - 1e-9)
    };
    let boot_value = if m_used < nf / p {
        nf * m_used / (nf - p * m_used)
    } else {
        f64::INFINITY
    };
    let boot_grad = nf * m_used / (nf - m_used);
    let q = growth.q_estimate;
    let q1 = growth.q1;
    let growth_case = if !q.is_finite() {
        "finite-Lambda source; boundedness is a statement about v < Lambda".to_string()
    } else if q >= pm1 - 0.05 && q * rprime < q1 {
        "Q >= p-1 with Q r' < Q1: solutions in W_0^(1,p) and bounded".to_string()
    } else if q < pm1 && (!r.is_finite() || r > nf / p) {
        "Q < p-1 with r > N/p: solutions in W_0^(1,p) and bounded".to_string()
    } else if q < pm1 && r.is_finite() && (r - nf / p).abs() < 1e-9 {
        "Q < p-1 with r = N/p: solutions in W_0^(1,p), in every L^k".to_string()
    } else if q < pm1 && r.is_finite() && r < nf / p && q * rprime < q1 {
        let d = nf * r * (pm1 - q) / (nf - p * r);
        format!("Q < p-1 with r < N/p: U^k integrable for k < {d:.4}")
    } else {
        "no boundedness guarantee from the growth cases".to_string()
    };
    RegularityPrediction {
        p,
        n,
        r,
        n0,
        n1,
        sigma_bar,
        tau_bar,
        m_bar,
        boot_value_exponent: boot_value,
        boot_gradient_exponent: boot_grad,
        q1,
        q_star: growth.q_star,
        extremal_bounded: nf < n0,
        extremal_in_w1p: nf < n1,
        n0_below_n1: n0 < n1,
        growth_case,
    }
}

#[derive(Debug, Clone)]
pub struct ExtremalReport {
    pub lambda_samples: Vec<f64>,
    pub sups: Vec<f64>,
    pub seminorms: Vec<f64>,
    /// Fold-law extrapolation of sup v as lambda -> lambda*: the central
    /// value follows A - B sqrt(lambda* - lambda) at a regular fold.
    pub sup_extrapolated: f64,
    pub sup_bounded: bool,
    pub seminorm_bounded: bool,
    pub solution: RadialSolution,
    pub prediction: RegularityPrediction,
}

/// Climb the minimal branch toward lambda*_lo and report norm trends, the
/// fold extrapolation of the central value, and the regularity verdicts.
pub fn extremal_solution(
    problem: &RadialProblem,
    star: &LambdaStarReport,
    growth: &GrowthReport,
    ctrl: &IterationControl,
) -> Result<ExtremalReport> {
    let (lo, hi) = match star.result {
        LambdaStar::Bracket { lo, hi } => (lo, hi),
        LambdaStar::Infinite { .. } => {
            return Err(Error::NoUpperDivergence(f64::INFINITY));
        }
    };
    let mut lambdas = Vec::new();
    let mut sups = Vec::new();
    let mut seminorms = Vec::new();
    let mut last_sol = None;
    for j in 1..=14 {
        let lambda = lo * (1.0 - 2f64.powi(-j));
        let probe_ctrl = IterationControl {
            polish: j == 14,
            ..*ctrl
        };
        match minimal_solution(problem, lambda, &probe_ctrl)? {
            SolveOutcome::Converged(run) => {
                lambdas.push(lambda);
                sups.push(run.solution.sup());
                seminorms.push(run.solution.seminorm_integral(problem.p, problem.n));
                last_sol = Some(run.solution);
            }
            SolveOutcome::Diverged(info) => {
                return Err(Error::StiffnessFailure(format!(
                    "minimal solution diverged below lambda*_lo at lambda = {lambda} ({:?})",
                    info.reason
                )))
            }
        }
    }
    let solution = last_sol.expect("at least one sample");

    // Fold extrapolation: least squares of sup_j = A - B sqrt(l* - l_j)
    // over the last samples, with l* taken at the bracket midpoint.
    let lstar = 0.5 * (lo + hi);
    let k0 = lambdas.len().saturating_sub(6);
    let (mut sx, mut sy, mut sxx, mut sxy, mut cnt) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for j in k0..lambdas.len() {
        let x = (lstar - lambdas[j]).max(0.0).sqrt();
        let y = sups[j];
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        cnt += 1.0;
    }
    let denom = cnt * sxx - sx * sx;
    let sup_extrapolated = if denom.abs() > 1e-300 {
        (sy * sxx - sx * sxy) / denom
    } else {
        *sups.last().unwrap()
    };

    let trend_bounded = |vals: &[f64]| -> bool {
        let k = vals.len();
        if k < 3 {
            return true;
        }
        let d1 = vals[k - 1] - vals[k - 2];
        let d2 = vals[k - 2] - vals[k - 3];
        d2 <= 0.0 || d1 <= 0.9 * d2 || d1 <= 1e-9 * vals[k - 1].abs()
    };

    Ok(ExtremalReport {
        sup_bounded: trend_bounded(&sups),
        seminorm_bounded: trend_bounded(&seminorms),
        lambda_samples: lambdas,
        sups,
        seminorms,
        sup_extrapolated,
        solution,
        prediction: regularity_prediction(
            problem.p,
            problem.n,
            weight_integrability(&problem.weight, problem.n),
            growth,
        ),
    })
}

/// Integrability exponent r with f in L^r: bounded weights give infinity;
/// r^-s lies in L^r for r < N/s (reported just below).
pub fn weight_integrability(weight: &Weight, n: usize) -> f64 {
    match weight {
        Weight::Const(_) | Weight::Sampled(_) => f64::INFINITY,
        Weight::PowerSingular(s) => {
            if *s <= 0.0 {
                f64::INFINITY
            } else {
                0.999 * n as f64 / s
            }
        }
    }
}

/// Energy J_lambda(v) = (1/p) int |grad v|^p dx - lambda int f Phi(v) dx
/// with Phi(t) = int_0^t (1 + g(s+))^(p-1) ds.
pub fn energy(v: &RadialSolution, lambda: f64, problem: &RadialProblem) -> Result<f64> {
    let g = order_zero_g(problem)?;
    let p = problem.p;
    let n = problem.n;
    let pm1 = p - 1.0;
    let sup = v.sup();
    // Cumulative table for Phi on [0, sup].
    let top = sup.max(1e-12) * (1.0 + 1e-9);
    let cells = 1024;
    let xs: Vec<f64> = (0..=cells).map(|i| top * i as f64 / cells as f64).collect();
    let phi_fun = |t: f64| (1.0 + g.eval(t.max(0.0))).powf(pm1);
    let big_phi = quad::cumulative(&phi_fun, &xs, 1e-11)?;
    let dphi: Vec<f64> = xs.iter().map(|&t| phi_fun(t)).collect();
    let phi_table = MonotoneCubic::with_derivatives(xs, big_phi, dphi);

    let s = problem.weight.singular_power();
    let nf = n as f64;
    let nodes = &v.r;
    let mut source_term = v.u[0].max(0.0) * 0.0; // stub below r_0 is negligible except for atoms
    source_term += {
        // [0, r_0] stub with v frozen at its first node.
        let f0 = problem.weight.regular_at(0, nodes[0]);
        f0 * phi_table.eval(v.u[0].max(0.0)) * nodes[0].powf(nf - s) / (nf - s)
    };
    for i in 0..nodes.len() - 1 {
        let (a, b) = (nodes[i], nodes[i + 1]);
        let (va, vb) = (v.u[i], v.u[i + 1]);
        let (fa, fb) = (
            problem.weight.regular_at(i, a),
            problem.weight.regular_at(i + 1, b),
        );
        source_term += quad::gauss4(
            &|t: f64| {
                let x = (t - a) / (b - a);
                let vt = (va + (vb - va) * x).max(0.0);
                let ft = fa + (fb - fa) * x;
                ft * phi_table.eval(vt) * t.powf(nf - 1.0 - s)
            },
            a,
            b,
        );
    }
    let omega = sphere_area(n);
    Ok(v.seminorm_integral(p, n) / p - lambda * omega * source_term)
}

/// Chebyshev-shaped test battery (1-r) T_k(2r-1), k = 0..7, plus g(v)
/// itself, sampled on the solution grid.
pub fn default_battery(v: &RadialSolution, g: &Nonlinearity) -> Vec<Vec<f64>> {
    let mut battery = Vec::new();
    for k in 0..8 {
        battery.push(
            v.r.iter()
                .map(|&r| {
                    let x: f64 = (2.0 * r - 1.0).clamp(-1.0, 1.0);
                    (1.0 - r) * (k as f64 * x.acos()).cos()
                })
                .collect(),
        );
    }
    battery.push(v.u.iter().map(|&u| g.eval(u.max(0.0))).collect());
    battery
}

/// Semi-stability margin of a solution: the minimum over the battery of
///
///   [(p-1) int |v'|^(p-2) psi'^2 r^(N-1) - (p-1) lambda int f (1+g)^(p-2) g' psi^2 r^(N-1)] / ||psi||^2
///
/// (radial form of the second variation; p >= 2 so the form needs no
/// constrained test functions).
pub fn stability_check(
    v: &RadialSolution,
    lambda: f64,
    problem: &RadialProblem,
    battery: &[Vec<f64>],
) -> Result<f64> {
    let p = problem.p;
    if p < 2.0 {
        return Err(Error::UnsupportedP(p));
    }
    let g = order_zero_g(problem)?;
    let pm1 = p - 1.0;
    let nf = problem.n as f64;
    let s = problem.weight.singular_power();
    let nodes = &v.r;
    let m = nodes.len();
    let mut margin = f64::INFINITY;
    for psi in battery {
        assert_eq!(psi.len(), m);
        let mut grad_term = 0.0;
        let mut zero_term = 0.0;
        let mut norm2 = 0.0;
        for i in 0..m - 1 {
            let (a, b) = (nodes[i], nodes[i + 1]);
            let dpsi = (psi[i + 1] - psi[i]) / (b - a);
            let (da, db) = (v.du[i], v.du[i + 1]);
            let (va, vb) = (v.u[i], v.u[i + 1]);
            let (pa, pb) = (psi[i], psi[i + 1]);
            let (fa, fb) = (
                problem.weight.regular_at(i, a),
                problem.weight.regular_at(i + 1, b),
            );
            grad_term += quad::gauss4(
                &|t: f64| {
                    let x = (t - a) / (b - a);
                    let dv = da + (db - da) * x;
                    dv.abs().powf(p - 2.0) * dpsi * dpsi * t.powf(nf - 1.0)
                },
                a,
                b,
            );
            zero_term += quad::gauss4(
                &|t: f64| {
                    let x = (t - a) / (b - a);
                    let vt = (va + (vb - va) * x).max(0.0);
                    let ft = fa + (fb - fa) * x;
                    let psit = pa + (pb - pa) * x;
                    let gp = g.deriv(vt).unwrap_or(0.0);
                    ft * (1.0 + g.eval(vt)).powf(p - 2.0) * gp * psit * psit
                        * t.powf(nf - 1.0 - s)
                },
                a,
                b,
            );
            norm2 += quad::gauss4(
                &|t: f64| {
                    let x = (t - a) / (b - a);
                    let psit = pa + (pb - pa) * x;
                    psit * psit * t.powf(nf - 1.0)
                },
                a,
                b,
            );
        }
        if norm2 <= 0.0 {
            continue;
        }
        let q = (pm1 * grad_term - pm1 * lambda * zero_term) / norm2;
        margin = margin.min(q);
    }
    Ok(margin)
}

#[derive(Debug, Clone)]
pub struct ShootingCurve {
    pub central_values: Vec<f64>,
    /// Boundary value per shot; None marks a blow-up before r = 1.
    pub boundary_values: Vec<Option<f64>>,
    pub roots: Vec<f64>,
    /// |B| of the re-shot trajectory at each root.
    pub root_boundary_values: Vec<f64>,
    /// Residual of the re-shot solution at each root.
    pub root_residuals: Vec<f64>,
}

/// Evaluate B(a; lambda) on {0} followed by a log-spaced grid up to a_max,
/// then refine every sign change by bisection to |B| <= 1e-6. Roots closer
/// than 1e-4 are merged, leftmost first.
pub fn shoot_sweep(
    problem: &RadialProblem,
    lambda: f64,
    a_max: f64,
    count: usize,
) -> Result<ShootingCurve> {
    problem.validate()?;
    if !(a_max > 0.0) || count < 8 {
        return Err(Error::InvalidDomain(
            "sweep needs a positive a_max and at least 8 samples".into(),
        ));
    }
    let mut central = vec![0.0];
    let a_min = a_max * 1e-4;
    for i in 0..count - 1 {
        central.push(a_min * (a_max / a_min).powf(i as f64 / (count - 2) as f64));
    }
    let boundary: Vec<Option<f64>> = central
        .par_iter()
        .map(|&a| shoot(problem, a, lambda).ok().map(|o| o.boundary_value))
        .collect();

    let shoot_b = |a: f64| -> Option<f64> {
        shoot(problem, a, lambda).ok().map(|o| o.boundary_value)
    };
    let mut roots = Vec::new();
    for i in 0..central.len() - 1 {
        let (Some(b0), Some(b1)) = (boundary[i], boundary[i + 1]) else {
            continue;
        };
        if b0 == 0.0 {
            roots.push(central[i]);
            continue;
        }
        if b0.signum() * b1.signum() < 0.0 {
            let (mut lo, mut hi) = (central[i], central[i + 1]);
            let mut blo = b0;
            let mut root = 0.5 * (lo + hi);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                root = mid;
                match shoot_b(mid) {
                    Some(bm) => {
                        if bm.abs() <= 1e-6 {
                            break;
                        }
                        if bm.signum() == blo.signum() {
                            lo = mid;
                            blo = bm;
                        } else {
                            hi = mid;
                        }
                    }
                    None => break,
                }
                if hi - lo <= 1e-14 * hi.max(1.0) {
                    break;
                }
            }
            roots.push(root);
        }
    }
    // Merge near-duplicates.
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut merged: Vec<f64> = Vec::new();
    for r in roots {
        if merged.last().map(|&m| (r - m).abs() > 1e-4).unwrap_or(true) {
            merged.push(r);
        }
    }
    let mut root_residuals = Vec::new();
    let mut root_boundary_values = Vec::new();
    for &a in &merged {
        let out = shoot(problem, a, lambda)?;
        root_boundary_values.push(out.boundary_value.abs());
        root_residuals.push(residual(&out.solution, &shifted_lambda(problem, lambda)));
    }
    Ok(ShootingCurve {
        central_values: central,
        boundary_values: boundary,
        roots: merged,
        root_boundary_values,
        root_residuals,
    })
}

fn shifted_lambda(problem: &RadialProblem, lambda: f64) -> RadialProblem {
    let mut p = problem.clone();
    p.lambda = lambda;
    p
}

#[derive(Debug, Clone)]
pub struct BranchDiagram {
    pub lambda_samples: Vec<f64>,
    pub sups: Vec<f64>,
    pub seminorms: Vec<f64>,
    pub energies: Vec<f64>,
    pub margins: Vec<f64>,
    pub lambda_star: LambdaStar,
    pub extremal: Option<RadialSolution>,
}

impl BranchDiagram {
    pub fn csv(&self) -> String {
        let mut out = String::from("lambda,sup,seminorm,energy,margin\n");
        for i in 0..self.lambda_samples.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.lambda_samples[i],
                self.sups[i],
                self.seminorms[i],
                self.energies[i],
                self.margins[i]
            ));
        }
        out
    }
}

/// Minimal-branch sweep: locate lambda*, then sample the branch on a
/// uniform grid of lambda below the bracket, recording norms, energy and
/// the semi-stability margin (NaN margin for p < 2).
pub fn branch_diagram(
    problem: &RadialProblem,
    count: usize,
    hi_cap: f64,
    ctrl: &IterationControl,
) -> Result<BranchDiagram> {
    let g = order_zero_g(problem)?.clone();
    let star = find_lambda_star(problem, None, hi_cap, &IterationControl::probe())?;
    let lambda_top = match star.result {
        LambdaStar::Bracket { lo, .. } => lo,
        LambdaStar::Infinite { probed_up_to } => probed_up_to,
    };
    let mut lambdas = Vec::new();
    let mut sups = Vec::new();
    let mut seminorms = Vec::new();
    let mut energies = Vec::new();
    let mut margins = Vec::new();
    let mut extremal = None;
    for j in 1..=count {
        let lambda = lambda_top * j as f64 / count as f64;
        match minimal_solution(problem, lambda, ctrl)? {
            SolveOutcome::Converged(run) => {
                let sol = run.solution;
                sups.push(sol.sup());
                seminorms.push(sol.seminorm_integral(problem.p, problem.n));
                energies.push(energy(&sol, lambda, problem)?);
                let margin = if problem.p >= 2.0 {
                    stability_check(&sol, lambda, problem, &default_battery(&sol, &g))?
                } else {
                    f64::NAN
                };
                margins.push(margin);
                lambdas.push(lambda);
                extremal = Some(sol);
            }
            SolveOutcome::Diverged(_) => break,
        }
    }
    Ok(BranchDiagram {
        lambda_samples: lambdas,
        sups,
        seminorms,
        energies,
        margins,
        lambda_star: star.result,
        extremal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::CatalogParams;
    use crate::radial::RadialGrid;

    fn bratu_problem(m: usize) -> RadialProblem {
        // p = 2, N = 2, f = 1, 1 + g = e^v.
        RadialProblem {
            p: 2.0,
            n: 2,
            lambda: 1.0,
            weight: Weight::Const(1.0),
            atom_mass: 0.0,
            source: Source::OrderZero(
                Nonlinearity::g_catalog(6, CatalogParams::default(), 2.0).unwrap(),
            ),
            grid: RadialGrid::geometric(m, 1e-9),
        }
    }

    fn linear_problem(m: usize) -> RadialProblem {
        RadialProblem {
            p: 2.0,
            n: 3,
            lambda: 1.0,
            weight: Weight::Const(1.0),
            atom_mass: 0.0,
            source: Source::OrderZero(
                Nonlinearity::g_catalog(1, CatalogParams::default(), 2.0).unwrap(),
            ),
            grid: RadialGrid::geometric(m, 1e-9),
        }
    }

    #[test]
    fn lambda_zero_trivial() {
        let problem = bratu_problem(256);
        let out = minimal_solution(&problem, 0.0, &IterationControl::default()).unwrap();
        let run = out.converged().expect("converged");
        assert!(run.solution.sup() < 1e-15);
        assert_eq!(run.solution.iterations, 1);
    }

    #[test]
    fn bratu_lower_branch_value() {
        // lambda = 1: v(0) = ln(8b) with b = 3 - 2 sqrt(2).
        let problem = bratu_problem(2048);
        let out = minimal_solution(&problem, 1.0, &IterationControl::default()).unwrap();
        let run = out.converged().expect("converged");
        let b = 3.0 - 2.0 * 2f64.sqrt();
        let exact = (8.0 * b).ln();
        let got = run.solution.u[0];
        assert!(
            (got - exact).abs() < 2e-4 * exact.abs(),
            "v(0) = {got} vs {exact}"
        );
        assert!(run.monotone_defect <= 1e-12);
    }

    #[test]
    fn linear_threshold() {
        // g(v) = v: converges for lambda < pi^2, diverges above.
        let problem = linear_problem(1024);
        let pi2 = std::f64::consts::PI.powi(2);
        let ctrl = IterationControl::probe();
        assert!(minimal_solution(&problem, 0.9 * pi2, &ctrl)
            .unwrap()
            .is_converged());
        assert!(!minimal_solution(&problem, 1.1 * pi2, &ctrl)
            .unwrap()
            .is_converged());
    }

    #[test]
    fn bratu_lambda_star() {
        let problem = bratu_problem(1024);
        let report = find_lambda_star(&problem, None, 100.0, &IterationControl::probe()).unwrap();
        match report.result {
            LambdaStar::Bracket { lo, hi } => {
                assert!(hi - lo <= 1e-4 * hi);
                assert!((0.5 * (lo + hi) - 2.0).abs() < 0.01 * 2.0, "bracket [{lo}, {hi}]");
            }
            other => panic!("expected a bracket, got {other:?}"),
        }
    }

    #[test]
    fn sublinear_lambda_star_infinite() {
        // (1+g)^(p-1) = (1+v)^Q with Q = (p-1)/2: lambda* = infinity.
        let problem = RadialProblem {
            p: 2.0,
            n: 3,
            lambda: 1.0,
            weight: Weight::Const(1.0),
            atom_mass: 0.0,
            source: Source::OrderZero(
                Nonlinearity::g_catalog(2, CatalogParams::default(), 2.0).unwrap(),
            ),
            grid: RadialGrid::geometric(512, 1e-9),
        };
        let report = find_lambda_star(&problem, None, 100.0, &IterationControl::probe()).unwrap();
        match report.result {
            LambdaStar::Infinite { probed_up_to } => assert!(probed_up_to >= 100.0),
            other => panic!("expected infinite range, got {other:?}"),
        }
        for &(l, ok) in &report.probes {
            assert!(ok, "probe at {l} unexpectedly diverged");
        }
        // The expansion schedule visits 1, 10, 100.
        let probed: Vec<f64> = report.probes.iter().map(|x| x.0).collect();
        for want in [1.0, 10.0, 100.0] {
            assert!(
                probed.iter().any(|&l| (l - want).abs() < 1e-12),
                "schedule missed {want}: {probed:?}"
            );
        }
    }

    #[test]
    fn bratu_extremal() {
        let problem = bratu_problem(1024);
        let star = find_lambda_star(&problem, None, 100.0, &IterationControl::probe()).unwrap();
        let g = Nonlinearity::g_catalog(6, CatalogParams::default(), 2.0).unwrap();
        let growth = crate::transform::classify_growth(&g, 2.0, 2, 1e8).unwrap();
        let report =
            extremal_solution(&problem, &star, &growth, &IterationControl::probe()).unwrap();
        let ln4 = 4f64.ln();
        assert!(
            (report.sup_extrapolated - ln4).abs() < 0.02 * ln4,
            "v*(0) = {} vs {ln4}",
            report.sup_extrapolated
        );
        assert!(report.sup_bounded);
        assert!(report.prediction.extremal_bounded); // N=2 < N0=4
        assert!(report.prediction.n0_below_n1);
        // Branch monotone in lambda.
        for w in report.sups.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
    }

    #[test]
    fn energy_negative_on_minimal_branch() {
        let problem = bratu_problem(512);
        for lambda in [0.5, 1.0, 1.5] {
            let out = minimal_solution(&problem, lambda, &IterationControl::default()).unwrap();
            let run = out.converged().expect("converged");
            let e = energy(&run.solution, lambda, &problem).unwrap();
            assert!(e < 0.0, "J({lambda}) = {e}");
        }
        // v = 0 has zero energy.
        let zero = RadialSolution::zero(&problem.grid);
        assert_eq!(energy(&zero, 1.0, &problem).unwrap(), 0.0);
    }

    #[test]
    fn energy_linear_case_closed_form() {
        // g = 0: J(G(lambda f)) = (1/p - 1) lambda int f v dx < 0 at p=2.
        let grid = RadialGrid::geometric(1024, 1e-9);
        let g0 = Nonlinearity::sampled(
            crate::nonlinearity::Form::G,
            vec![0.0, 1.0, 2.0, 3.0],
            vec![0.0; 4],
            f64::INFINITY,
        )
        .unwrap();
        let problem = RadialProblem {
            p: 2.0,
            n: 3,
            lambda: 1.0,
            weight: Weight::Const(1.0),
            atom_mass: 0.0,
            source: Source::OrderZero(g0),
            grid: grid.clone(),
        };
        let lambda = 1.0;
        let q = vec![lambda; grid.len()];
        let v = green_apply_nodes(&grid, 2.0, 3, &q, &Weight::Const(1.0), 0.0).unwrap();
        let e = energy(&v, lambda, &problem).unwrap();
        // (1-r^2)/6 scaled by lambda: J = 1/2 |grad|^2 - lambda int v
        //  = -1/2 lambda int v (variational identity), int v dx = 4pi/45 at lambda=1... use quadrature oracle:
        let int_v = v.lp_norm_integral(1.0, 3);
        let expect = 0.5 * v.seminorm_integral(2.0, 3) - lambda * int_v;
        assert!((e - expect).abs() < 1e-8 * expect.abs());
        assert!(e < 0.0);
    }

    #[test]
    fn stability_on_bratu_branches() {
        let problem = bratu_problem(1024);
        let g = Nonlinearity::g_catalog(6, CatalogParams::default(), 2.0).unwrap();
        // Minimal solution at lambda = 1: semi-stable.
        let out = minimal_solution(&problem, 1.0, &IterationControl::default()).unwrap();
        let run = out.converged().unwrap();
        let battery = default_battery(&run.solution, &g);
        let margin = stability_check(&run.solution, 1.0, &problem, &battery).unwrap();
        assert!(margin >= -1e-6, "minimal branch margin {margin}");

        // Upper branch at lambda = 1 (b = 3 + 2 sqrt2): unstable.
        let b = 3.0 + 2.0 * 2f64.sqrt();
        let upper: Vec<f64> = problem
            .grid
            .nodes()
            .iter()
            .map(|&r| (8.0 * b / (1.0 + b * r * r).powi(2)).ln() - 0.0_f64.max(0.0))
            .map(|v| v - (8.0 * b / (1.0 + b).powi(2)).ln()) // enforce v(1)=0
            .collect();
        let du: Vec<f64> = problem
            .grid
            .nodes()
            .iter()
            .map(|&r| -4.0 * b * r / (1.0 + b * r * r))
            .collect();
        let flux: Vec<f64> = problem
            .grid
            .nodes()
            .iter()
            .zip(&du)
            .map(|(&r, &d)| -r * d)
            .collect();
        let upper_sol = RadialSolution {
            r: problem.grid.nodes_arc(),
            u: upper,
            du,
            flux,
            converged: true,
            iterations: 0,
            log_branch: false,
        };
        let battery = default_battery(&upper_sol, &g);
        let margin = stability_check(&upper_sol, 1.0, &problem, &battery).unwrap();
        assert!(margin < 0.0, "upper branch margin {margin}");
    }

    #[test]
    fn stability_linear_case_margin_scale() {
        // g(v) = v at lambda = lambda_1/2: the quadratic form gap is of
        // order lambda_1 - lambda > 0; and at lambda -> 0 the margin is
        // dominated by the Dirichlet term alone.
        let problem = linear_problem(1024);
        let g = Nonlinearity::g_catalog(1, CatalogParams::default(), 2.0).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        let lambda = 0.5 * pi2;
        let out = minimal_solution(&problem, lambda, &IterationControl::default()).unwrap();
        let run = out.converged().unwrap();
        let battery = default_battery(&run.solution, &g);
        let margin = stability_check(&run.solution, lambda, &problem, &battery).unwrap();
        assert!(margin > 0.0, "margin {margin}");
        assert!(margin < pi2, "margin {margin} out of scale");

        let tiny = minimal_solution(&problem, 1e-6, &IterationControl::default()).unwrap();
        let run = tiny.converged().unwrap();
        let battery = default_battery(&run.solution, &g);
        let margin0 = stability_check(&run.solution, 1e-6, &problem, &battery).unwrap();
        assert!(margin0 > 0.0);
        assert!(margin0 > margin, "margin should shrink as lambda grows");
    }

    #[test]
    fn stability_rejects_small_p() {
        let mut problem = bratu_problem(64);
        problem.p = 1.5;
        let zero = RadialSolution::zero(&problem.grid);
        assert!(matches!(
            stability_check(&zero, 1.0, &problem, &[vec![0.0; problem.grid.len()]]),
            Err(Error::UnsupportedP(_))
        ));
    }

    #[test]
    fn bratu_sweep_two_roots() {
        let problem = bratu_problem(1024);
        let curve = shoot_sweep(&problem, 1.0, 10.0, 48).unwrap();
        assert_eq!(curve.roots.len(), 2, "roots: {:?}", curve.roots);
        let b_lo = 3.0 - 2.0 * 2f64.sqrt();
        let b_hi = 3.0 + 2.0 * 2f64.sqrt();
        let r0 = (8.0 * b_lo).ln();
        let r1 = (8.0 * b_hi).ln();
        assert!((curve.roots[0] - r0).abs() < 0.01 * r0.abs(), "{:?}", curve.roots);
        assert!((curve.roots[1] - r1).abs() < 0.01 * r1, "{:?}", curve.roots);
        for &res in &curve.root_residuals {
            assert!(res <= 1e-6, "root residual {res}");
        }
        for &b in &curve.root_boundary_values {
            assert!(b <= 1e-6, "re-shot |B| = {b}");
        }
    }

    #[test]
    fn sweep_lambda_zero_single_root() {
        let problem = bratu_problem(512);
        let curve = shoot_sweep(&problem, 0.0, 5.0, 32).unwrap();
        assert_eq!(curve.roots.len(), 1);
        assert!(curve.roots[0].abs() < 1e-9, "{:?}", curve.roots);
    }

    #[test]
    fn linear_uniqueness_single_root() {
        let problem = linear_problem(512);
        let pi2 = std::f64::consts::PI.powi(2);
        let curve = shoot_sweep(&problem, 0.5 * pi2, 50.0, 48).unwrap();
        assert_eq!(curve.roots.len(), 1, "roots: {:?}", curve.roots);
    }

    #[test]
    fn monotone_branch_in_lambda() {
        let problem = bratu_problem(512);
        let ctrl = IterationControl::probe();
        let a = minimal_solution(&problem, 0.8, &ctrl).unwrap();
        let b = minimal_solution(&problem, 1.4, &ctrl).unwrap();
        let (sa, sb) = (a.converged().unwrap(), b.converged().unwrap());
        for i in 0..problem.grid.len() {
            assert!(sb.solution.u[i] >= sa.solution.u[i] - 1e-10);
        }
    }

    #[test]
    fn prediction_thresholds() {
        let growth = GrowthReport {
            q_estimate: 1.0,
            m_q_estimate: 1.0,
            class: crate::transform::GrowthClass::Linear,
            q1: 3.0,
            q_star: 5.0,
            p_star: 6.0,
        };
        // p=2, r=inf: N0 = 4, N1 = 6.
        let pred = regularity_prediction(2.0, 3, f64::INFINITY, &growth);
        assert!((pred.n0 - 4.0).abs() < 1e-12);
        assert!((pred.n1 - 6.0).abs() < 1e-12);
        assert!(pred.extremal_bounded && pred.extremal_in_w1p);
        assert!(pred.n0_below_n1);
        // N = 10 >= N0: no boundedness guarantee.
        let pred10 = regularity_prediction(2.0, 10, f64::INFINITY, &growth);
        assert!(!pred10.extremal_bounded);
        // p = N flags propagate from the growth report.
        let growth_pn = GrowthReport {
            q1: f64::INFINITY,
            q_star: f64::INFINITY,
            p_star: f64::INFINITY,
            ..growth
        };
        let pred_pn = regularity_prediction(2.0, 2, f64::INFINITY, &growth_pn);
        assert!(pred_pn.q1.is_infinite() && pred_pn.q_star.is_infinite());
    }

    #[test]
    fn lambda_star_consistency_under_double_transform() {
        // Transform the Bratu g to the beta side and back; the recovered
        // sampled g must produce the same fold location.
        let problem = bratu_problem(512);
        let g = Nonlinearity::g_catalog(6, CatalogParams::default(), 2.0).unwrap();
        let spec = crate::transform::GridSpec::with_nodes(4000);
        let t1 = crate::transform::g_to_beta(&g, 2.0, spec).unwrap();
        let beta = t1.derived_beta().unwrap();
        let t2 = crate::transform::build_transform(&beta, 2.0, spec).unwrap();
        let g2 = t2.derived_g().unwrap();
        let mut problem2 = problem.clone();
        problem2.source = Source::OrderZero(g2);
        let ctrl = IterationControl::probe();
        let star1 = find_lambda_star(&problem, None, 100.0, &ctrl).unwrap();
        let star2 = find_lambda_star(&problem2, None, 100.0, &ctrl).unwrap();
        match (star1.result, star2.result) {
            (LambdaStar::Bracket { lo: l1, hi: h1 }, LambdaStar::Bracket { lo: l2, hi: h2 }) => {
                let m1 = 0.5 * (l1 + h1);
                let m2 = 0.5 * (l2 + h2);
                assert!(
                    (m1 - m2).abs() <= (h1 - l1) + (h2 - l2) + 1e-3 * m1,
                    "lambda* mismatch: {m1} vs {m2}"
                );
            }
            other => panic!("expected brackets, got {other:?}"),
        }
    }
}
