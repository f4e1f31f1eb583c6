//! The explicit singular family
//!
//!   u_m(r) = ln( (1-m)^-1 (r^-nu - m) ),    nu = (N-p)/(p-1),  0 < m < 1,
//!   v_m = e^(u_m) - 1 = (1-m)^-1 (r^-nu - 1),
//!
//! which solves the gradient-source equation with f = 0 away from the
//! origin while v_m carries a Dirac mass K_{m,N} delta_0; measure-data
//! fixed-point solves; and the end-to-end numerical verification of the
//! correspondence between the two problems including the singular-part
//! bookkeeping alpha_s = (1+g(inf))^(1-p) mu_s.

use serde::Serialize;

use crate::branch::{minimal_solution, IterationControl, SolveOutcome};
use crate::error::{Error, Result};
use crate::radial::{phi_p, residual, sphere_area, RadialGrid, RadialProblem, RadialSolution, Source};
use crate::transform::TransformTables;

#[derive(Debug, Clone)]
pub struct SingularFamily {
    pub m: f64,
    pub p: f64,
    pub n: usize,
    /// nu = (N-p)/(p-1).
    pub nu: f64,
    /// Dirac coefficient of -Delta_p v_m.
    pub k_mn: f64,
    pub u: RadialSolution,
    pub v: RadialSolution,
}

impl SingularFamily {
    pub fn u_at(&self, r: f64) -> f64 {
        ((r.powf(-self.nu) - self.m) / (1.0 - self.m)).ln()
    }

    pub fn v_at(&self, r: f64) -> f64 {
        (r.powf(-self.nu) - 1.0) / (1.0 - self.m)
    }

    pub fn du_at(&self, r: f64) -> f64 {
        -self.nu * r.powf(-self.nu - 1.0) / (r.powf(-self.nu) - self.m)
    }

    pub fn dv_at(&self, r: f64) -> f64 {
        -self.nu / (1.0 - self.m) * r.powf(-self.nu - 1.0)
    }

    /// CSV rows `r,u_m,v_m` (with header).
    pub fn csv(&self) -> String {
        let mut out = String::from("r,u_m,v_m\n");
        for i in 0..self.u.r.len() {
            out.push_str(&format!("{},{},{}\n", self.u.r[i], self.u.u[i], self.v.u[i]));
        }
        out
    }
}

/// Closed-form evaluation of the family on a grid.
pub fn um_family(m: f64, p: f64, n: usize, grid: &RadialGrid) -> Result<SingularFamily> {
    if !(m > 0.0 && m < 1.0) {
        return Err(Error::ParamOutOfRange {
            id: 0,
            msg: format!("family parameter m = {m} outside (0, 1)"),
        });
    }
    if !(p > 1.0 && p < n as f64) {
        return Err(Error::ParamOutOfRange {
            id: 0,
            msg: format!("family needs 1 < p < N, got p = {p}, N = {n}"),
        });
    }
    let nu = (n as f64 - p) / (p - 1.0);
    let k_mn = sphere_area(n) * (nu / (1.0 - m)).powf(p - 1.0);
    let mut fam = SingularFamily {
        m,
        p,
        n,
        nu,
        k_mn,
        u: RadialSolution::zero(grid),
        v: RadialSolution::zero(grid),
    };
    let nf = n as f64;
    for (i, &r) in grid.nodes().iter().enumerate() {
        fam.u.u[i] = fam.u_at(r);
        fam.u.du[i] = fam.du_at(r);
        fam.u.flux[i] = -r.powf(nf - 1.0) * phi_p(fam.u.du[i], p);
        fam.v.u[i] = fam.v_at(r);
        fam.v.du[i] = fam.dv_at(r);
        fam.v.flux[i] = -r.powf(nf - 1.0) * phi_p(fam.v.du[i], p);
    }
    Ok(fam)
}

#[derive(Debug, Clone, Serialize)]
pub struct DiracCoefficient {
    /// Closed form: omega_{N-1} ((N-p)/((p-1)(1-m)))^(p-1).
    pub closed_form: f64,
    /// Finite-difference flux estimates at shrinking radii, with the
    /// relative step tied to sqrt(r) so the estimate sharpens as r -> 0.
    pub radii: Vec<f64>,
    pub numerical: Vec<f64>,
    pub relative_errors: Vec<f64>,
}

/// Dirac coefficient of -Delta_p v_m with a numerical flux cross-check:
/// K = omega * lim_{r->0} (-r^(N-1) phi_p(v_m'(r))).
pub fn dirac_coefficient(m: f64, p: f64, n: usize) -> Result<DiracCoefficient> {
    if !(m > 0.0 && m < 1.0) || !(p > 1.0 && p < n as f64) {
        return Err(Error::ParamOutOfRange {
            id: 0,
            msg: format!("need 0 < m < 1 and 1 < p < N (got m = {m}, p = {p}, N = {n})"),
        });
    }
    let nu = (n as f64 - p) / (p - 1.0);
    let omega = sphere_area(n);
    let closed = omega * (nu / (1.0 - m)).powf(p - 1.0);
    let v = |r: f64| (r.powf(-nu) - 1.0) / (1.0 - m);
    let radii: Vec<f64> = vec![1e-4, 1e-5, 1e-6];
    let mut numerical = Vec::new();
    let mut relative_errors = Vec::new();
    for &r in &radii {
        // Fourth-order central difference with the relative step tied to
        // r^(1/4): truncation ~ (h/r)^4 shrinks with the radius.
        let h = r * r.sqrt().sqrt().min(0.2);
        let dv = (-v(r + 2.0 * h) + 8.0 * v(r + h) - 8.0 * v(r - h) + v(r - 2.0 * h))
            / (12.0 * h);
        let k_num = -omega * r.powf(n as f64 - 1.0) * phi_p(dv, p);
        numerical.push(k_num);
        relative_errors.push((k_num - closed).abs() / closed);
    }
    Ok(DiracCoefficient {
        closed_form: closed,
        radii,
        numerical,
        relative_errors,
    })
}

/// Fixed-point solve of the order-zero problem with an atom of mass a > 0
/// at the origin: v_{n+1} = G(lambda f (1+g(v_n))^(p-1), a delta_0). Same
/// convergence/divergence contract as the measure-free scheme (with a = 0
/// it reduces to it).
pub fn solve_with_atom(
    problem: &RadialProblem,
    lambda: f64,
    ctrl: &IterationControl,
) -> Result<SolveOutcome> {
    minimal_solution(problem, lambda, ctrl)
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrespondenceReport {
    /// Residual of u = H(v) in the gradient-source form with the derived
    /// beta, away from the origin-exclusion zone.
    pub pu_residual: f64,
    /// Measured atom of the u-problem from the origin flux.
    pub alpha_num: f64,
    /// Predicted singular part: (1+g(inf))^(1-p) a when gamma saturates
    /// (beta integrable / g bounded), zero otherwise.
    pub alpha_predicted: f64,
    pub g_bounded: bool,
    pub atom_mass: f64,
    pub u_sup: f64,
    /// sup_i |Psi(u_i) - v_i| (the inverse map applied back).
    pub roundtrip_sup_error: f64,
}

/// Map a solution of the order-zero problem through u = H(v) and check it
/// against the gradient-source form: interior residual, the measured atom
/// alpha from the origin flux of u, and the predicted singular part.
pub fn correspondence_check(
    v: &RadialSolution,
    tables: &TransformTables,
    problem: &RadialProblem,
) -> Result<CorrespondenceReport> {
    let p = problem.p;
    let nf = problem.n as f64;
    let nodes = &v.r;
    let m = nodes.len();

    let mut u = Vec::with_capacity(m);
    let mut du = Vec::with_capacity(m);
    let mut flux_u = Vec::with_capacity(m);
    let mut roundtrip: f64 = 0.0;
    for i in 0..m {
        let vi = v.u[i];
        let ui = tables.h_of(vi)?;
        let gi = tables.g_of(vi)?;
        let dui = v.du[i] / (1.0 + gi);
        u.push(ui);
        du.push(dui);
        flux_u.push(-nodes[i].powf(nf - 1.0) * phi_p(dui, p));
        roundtrip = roundtrip.max((tables.psi_of(ui) - vi).abs());
    }
    let u_sol = RadialSolution {
        r: v.r.clone(),
        u,
        du,
        flux: flux_u.clone(),
        converged: v.converged,
        iterations: v.iterations,
        log_branch: false,
    };

    // Gradient-form problem with the derived beta.
    let beta = tables.derived_beta()?;
    let pu_problem = RadialProblem {
        source: Source::GradientForm(beta),
        ..problem.clone()
    };
    let pu_residual = residual(&u_sol, &pu_problem);

    // Origin flux of u: linear fit of flux_u over the first resolved
    // decade of radii (pointwise flux at eps0 is quadrature-noisy).
    let eps0 = problem.grid.eps0;
    let (r_lo, r_hi) = (10.0 * eps0, 1000.0 * eps0);
    let (mut sx, mut sy, mut sxx, mut sxy, mut cnt) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..m {
        let r = nodes[i];
        if r >= r_lo && r <= r_hi {
            sx += r;
            sy += flux_u[i];
            sxx += r * r;
            sxy += r * flux_u[i];
            cnt += 1.0;
        }
    }
    let alpha_num = if cnt >= 2.0 {
        let det = cnt * sxx - sx * sx;
        let intercept = (sy * sxx - sx * sxy) / det;
        sphere_area(problem.n) * intercept
    } else {
        sphere_area(problem.n) * flux_u[0]
    };

    // alpha prediction from the saturation of gamma.
    let k = tables.gamma.len();
    let g_last = tables.gamma[k - 1];
    let g_mid = tables.gamma[3 * (k - 1) / 4];
    let g_bounded = (g_last - g_mid).abs() <= 1e-6 * (1.0 + g_last.abs());
    let alpha_predicted = if g_bounded {
        (-g_last).exp() * problem.atom_mass
    } else {
        0.0
    };

    Ok(CorrespondenceReport {
        pu_residual,
        alpha_num,
        alpha_predicted,
        g_bounded,
        atom_mass: problem.atom_mass,
        u_sup: u_sol.sup(),
        roundtrip_sup_error: roundtrip,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branch::DivergenceReason;
    use crate::catalog::CatalogParams;
    use crate::nonlinearity::Nonlinearity;
    use crate::radial::{green_apply_nodes, seminorm_refinement, Weight};
    use crate::transform::{build_transform, g_to_beta, GridSpec};

    #[test]
    fn family_values() {
        let grid = RadialGrid::geometric(512, 1e-9);
        let fam = um_family(0.5, 2.0, 3, &grid).unwrap();
        // Boundary values vanish.
        assert!(fam.u_at(1.0).abs() < 1e-14);
        assert!(fam.v_at(1.0).abs() < 1e-14);
        // u(1/2) = ln(2 (2 - 1/2)) = ln 3.
        assert!((fam.u_at(0.5) - 3f64.ln()).abs() < 1e-14);
        // v = e^u - 1 everywhere.
        for &r in [0.1, 0.3, 0.8].iter() {
            assert!((fam.v_at(r) - (fam.u_at(r).exp() - 1.0)).abs() < 1e-10 * fam.v_at(r).abs());
        }
        // Parameter validation.
        assert!(um_family(1.5, 2.0, 3, &grid).is_err());
        assert!(um_family(0.5, 3.0, 3, &grid).is_err()); // p = N
    }

    #[test]
    fn um_solves_gradient_problem() {
        // PU form with f = 0, beta = p-1 (catalog 1): residual away from
        // the origin.
        let grid = RadialGrid::geometric(2048, 1e-9);
        let fam = um_family(0.5, 2.0, 3, &grid).unwrap();
        let problem = RadialProblem {
            p: 2.0,
            n: 3,
            lambda: 0.0,
            weight: Weight::Const(1.0),
            atom_mass: 0.0,
            source: Source::GradientForm(
                Nonlinearity::beta_catalog(1, CatalogParams::default(), 2.0).unwrap(),
            ),
            grid,
        };
        let res = residual(&fam.u, &problem);
        assert!(res <= 1e-6, "u_m residual {res:e}");
    }

    #[test]
    fn dirac_coefficient_checks() {
        // p=2, N=3, m -> 0: K -> 4 pi (fundamental solution).
        let k_small = dirac_coefficient(1e-9, 2.0, 3).unwrap();
        assert!(
            (k_small.closed_form - 4.0 * std::f64::consts::PI).abs()
                < 1e-6 * k_small.closed_form
        );
        // Monotone increasing in m.
        let k1 = dirac_coefficient(0.1, 2.0, 3).unwrap().closed_form;
        let k5 = dirac_coefficient(0.5, 2.0, 3).unwrap().closed_form;
        let k9 = dirac_coefficient(0.9, 2.0, 3).unwrap().closed_form;
        assert!(k1 < k5 && k5 < k9);
        // Numerical flux agreement within 0.1% with decaying error.
        for (p, n) in [(2.0, 3), (2.5, 4)] {
            let k = dirac_coefficient(0.5, p, n).unwrap();
            for (i, err) in k.relative_errors.iter().enumerate() {
                assert!(*err <= 1e-3, "error {err} at r = {}", k.radii[i]);
            }
            assert!(
                k.relative_errors[0] >= k.relative_errors[1]
                    && k.relative_errors[1] >= k.relative_errors[2],
                "errors not decaying: {:?}",
                k.relative_errors
            );
        }
    }

    #[test]
    fn seminorm_membership_split() {
        // u_m in W^(1,p), v_m not, across a small parameter sweep.
        let eps = [1e-2, 1e-3, 1e-4, 1e-5];
        for &p in &[2.0, 2.5] {
            for &n in &[3usize, 4] {
                if p >= n as f64 {
                    continue;
                }
                for &m in &[0.1, 0.5, 0.9] {
                    let grid = RadialGrid::geometric(64, 1e-9);
                    let fam = um_family(m, p, n, &grid).unwrap();
                    let ru = seminorm_refinement(&|r| fam.du_at(r), p, n, &eps);
                    assert!(ru.converged, "u_m diverged: m={m} p={p} N={n} slope {}", ru.slope);
                    let rv = seminorm_refinement(&|r| fam.dv_at(r), p, n, &eps);
                    assert!(
                        !rv.converged && rv.slope >= 0.1,
                        "v_m converged: m={m} p={p} N={n} slope {}",
                        rv.slope
                    );
                }
            }
        }
    }

    #[test]
    fn atom_solve_linear_g() {
        // g(v) = v, p=2, N=3, lambda = pi^2/2 < lambda_1, atom a = 1:
        // converges and dominates the pure-atom solution.
        let grid = RadialGrid::geometric(1024, 1e-9);
        let problem = RadialProblem {
            p: 2.0,
            n: 3,
            lambda: 1.0,
            weight: Weight::Const(1.0),
            atom_mass: 1.0,
            source: Source::OrderZero(
                Nonlinearity::g_catalog(1, CatalogParams::default(), 2.0).unwrap(),
            ),
            grid: grid.clone(),
        };
        let lambda = 0.5 * std::f64::consts::PI.powi(2);
        let out = solve_with_atom(&problem, lambda, &IterationControl::default()).unwrap();
        let run = out.converged().expect("converged");
        let pure_atom =
            green_apply_nodes(&grid, 2.0, 3, &vec![0.0; grid.len()], &Weight::Const(1.0), 1.0)
                .unwrap();
        for i in 0..grid.len() {
            assert!(run.solution.u[i] >= pure_atom.u[i] - 1e-9 * (1.0 + pure_atom.u[i]));
        }
    }

    #[test]
    fn atom_solve_reduces_to_minimal_without_atom() {
        let grid = RadialGrid::geometric(512, 1e-9);
        let problem = RadialProblem {
            p: 2.0,
            n: 3,
            lambda: 1.0,
            weight: Weight::Const(1.0),
            atom_mass: 0.0,
            source: Source::OrderZero(
                Nonlinearity::g_catalog(1, CatalogParams::default(), 2.0).unwrap(),
            ),
            grid,
        };
        let a = solve_with_atom(&problem, 2.0, &IterationControl::default()).unwrap();
        let b = minimal_solution(&problem, 2.0, &IterationControl::default()).unwrap();
        let (ra, rb) = (a.converged().unwrap(), b.converged().unwrap());
        for i in 0..ra.solution.u.len() {
            assert_eq!(ra.solution.u[i], rb.solution.u[i]);
        }
    }

    #[test]
    fn superlinear_atom_large_data_diverges() {
        // Q > p-1 with lambda, a large: no solution expected.
        let grid = RadialGrid::geometric(512, 1e-9);
        let problem = RadialProblem {
            p: 2.0,
            n: 3,
            lambda: 1.0,
            weight: Weight::Const(1.0),
            atom_mass: 50.0,
            source: Source::OrderZero(
                Nonlinearity::g_catalog(
                    5,
                    CatalogParams {
                        q: Some(2.0),
                        ..Default::default()
                    },
                    2.0,
                )
                .unwrap(),
            ),
            grid,
        };
        let out = solve_with_atom(&problem, 10.0, &IterationControl::probe()).unwrap();
        match out {
            SolveOutcome::Diverged(info) => {
                assert!(matches!(
                    info.reason,
                    DivergenceReason::SupCap
                        | DivergenceReason::RhsOverflow
                        | DivergenceReason::MonotoneGrowth
                ));
            }
            SolveOutcome::Converged(_) => panic!("expected divergence"),
        }
    }

    #[test]
    fn correspondence_bratu_no_atom() {
        // Bratu lower branch at lambda = 1 mapped to the gradient form:
        // residual small, no measured atom.
        let grid = RadialGrid::geometric(2048, 1e-9);
        let g = Nonlinearity::g_catalog(6, CatalogParams::default(), 2.0).unwrap();
        let problem = RadialProblem {
            p: 2.0,
            n: 2,
            lambda: 1.0,
            weight: Weight::Const(1.0),
            atom_mass: 0.0,
            source: Source::OrderZero(g.clone()),
            grid,
        };
        let out = minimal_solution(&problem, 1.0, &IterationControl::default()).unwrap();
        let run = out.converged().expect("converged");
        let tables = g_to_beta(&g, 2.0, GridSpec::with_nodes(6000)).unwrap();
        let report = correspondence_check(&run.solution, &tables, &problem).unwrap();
        assert!(report.pu_residual <= 1e-5, "residual {:e}", report.pu_residual);
        assert!(report.alpha_num.abs() <= 1e-5, "alpha {:e}", report.alpha_num);
        assert!(!report.g_bounded);
        assert!(report.roundtrip_sup_error <= 1e-7, "roundtrip {:e}", report.roundtrip_sup_error);
    }

    #[test]
    fn correspondence_bounded_beta_with_atom() {
        // beta = e^-t: gamma(inf) = 1, derived g bounded; with an atom the
        // u-problem keeps the fraction e^-gamma(inf) = e^-1 of the mass.
        let grid = RadialGrid::geometric(2048, 1e-9);
        let beta = Nonlinearity::bounded_exp_beta();
        let tables = build_transform(&beta, 2.0, GridSpec::with_nodes(6000)).unwrap();
        let g = tables.derived_g().unwrap();
        let problem = RadialProblem {
            p: 2.0,
            n: 3,
            lambda: 1.0,
            weight: Weight::Const(1.0),
            atom_mass: 1.0,
            source: Source::OrderZero(g),
            grid,
        };
        let out = solve_with_atom(&problem, 1.0, &IterationControl::default()).unwrap();
        let run = out.converged().expect("converged");
        let report = correspondence_check(&run.solution, &tables, &problem).unwrap();
        assert!(report.g_bounded);
        let expect = (-1.0f64).exp();
        assert!(
            (report.alpha_num - expect).abs() <= 0.02 * expect,
            "alpha_num = {} vs {expect}",
            report.alpha_num
        );
        assert!((report.alpha_predicted - expect).abs() <= 1e-6 * expect);
    }
}
