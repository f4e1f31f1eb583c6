//! Batch front-end: dispatches one subcommand against a parsed config and
//! writes CSV/JSON artifacts. Outputs are deterministic for a fixed config
//! (no randomness anywhere in the lab; JSON maps are ordered).

use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use crate::branch::{
    branch_diagram, default_battery, energy, find_lambda_star, regularity_prediction,
    shoot_sweep, stability_check, weight_integrability, IterationControl, LambdaStar,
    SolveOutcome,
};
use crate::config::{RunConfig, Subcommand};
use crate::eigen::first_eigenpair;
use crate::error::{Error, Result};
use crate::nonlinearity::Form;
use crate::radial::{green_apply_nodes, residual, RadialSolution, Source};
use crate::singular::{correspondence_check, dirac_coefficient, solve_with_atom, um_family};
use crate::transform::{build_transform, classify_growth, g_to_beta, EndpointReport};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn endpoint_json(e: &EndpointReport) -> Value {
    match e {
        EndpointReport::Declared(v) => json!({"kind": "declared", "value": v}),
        EndpointReport::DetectedFinite { value, slow } => {
            json!({"kind": "detected_finite", "value": value, "slow_convergence": slow})
        }
        EndpointReport::Infinite => json!({"kind": "infinite"}),
    }
}

fn lambda_star_json(star: &LambdaStar) -> Value {
    match star {
        LambdaStar::Bracket { lo, hi } => json!({"lo": lo, "hi": hi, "infinite": false}),
        LambdaStar::Infinite { probed_up_to } => {
            json!({"infinite": true, "probed_up_to": probed_up_to})
        }
    }
}

fn solution_summary(sol: &RadialSolution, cfg: &RunConfig) -> Value {
    json!({
        "sup": sol.sup(),
        "boundary_value": sol.boundary_value(),
        "w1p_seminorm_integral": sol.seminorm_integral(cfg.problem.p, cfg.problem.n),
        "l2_integral": sol.lp_norm_integral(2.0, cfg.problem.n),
        "iterations": sol.iterations,
        "converged": sol.converged,
        "log_branch": sol.log_branch,
    })
}

fn write(out_dir: &Path, name: &str, content: &str) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(name), content)?;
    Ok(())
}

fn write_summary(out_dir: &Path, cfg: &RunConfig, status: i32, result: Value) -> Result<()> {
    let summary = json!({
        "tool": {"name": TOOL_NAME, "version": TOOL_VERSION},
        "subcommand": cfg.subcommand.name(),
        "config": cfg.echo,
        "status": status,
        "result": result,
    });
    write(
        out_dir,
        "summary.json",
        &format!("{}\n", serde_json::to_string_pretty(&summary).unwrap()),
    )
}

fn iteration_control(cfg: &RunConfig) -> IterationControl {
    IterationControl {
        tol: cfg.numerics.tol,
        max_iter: cfg.numerics.max_iter,
        sup_cap: cfg.numerics.sup_cap,
        polish: true,
        accelerate: false,
    }
}

/// Execute the configured run, writing artifacts under `out_dir`.
/// Exit status: 0 on success, 2 when a fixed-point solve diverged (a
/// result, not an error); hard errors surface as Err.
pub fn run(cfg: &RunConfig, out_dir: &Path) -> Result<i32> {
    match cfg.subcommand {
        Subcommand::Transform => {
            let tables = match cfg.nonlinearity.form {
                Form::Beta => build_transform(&cfg.nonlinearity, cfg.problem.p, cfg.grid_spec())?,
                Form::G => g_to_beta(&cfg.nonlinearity, cfg.problem.p, cfg.grid_spec())?,
            };
            write(out_dir, "tables.csv", &tables.csv())?;
            let result = json!({
                "t_max": tables.t_max(),
                "v_max": tables.v_max(),
                "horizon_L": endpoint_json(&tables.horizon_l),
                "horizon_Lambda": endpoint_json(&tables.horizon_lambda),
                "roundtrip_node_error": tables.roundtrip_max_error(&tables.t_grid),
                "rela_identity_error": tables.rela_max_error(),
            });
            write_summary(out_dir, cfg, 0, result)?;
            Ok(0)
        }
        Subcommand::Solve => match &cfg.problem.source {
            Source::FixedRhs(q) => {
                let sol = green_apply_nodes(
                    &cfg.problem.grid,
                    cfg.problem.p,
                    cfg.problem.n,
                    q,
                    &cfg.problem.weight,
                    cfg.problem.atom_mass,
                )?;
                write(out_dir, "solution.csv", &sol.csv())?;
                let mut result = solution_summary(&sol, cfg);
                result["residual"] = json!(residual(&sol, &cfg.problem));
                write_summary(out_dir, cfg, 0, result)?;
                Ok(0)
            }
            Source::OrderZero(g) => {
                let ctrl = iteration_control(cfg);
                match solve_with_atom(&cfg.problem, cfg.problem.lambda, &ctrl)? {
                    SolveOutcome::Converged(run) => {
                        write(out_dir, "solution.csv", &run.solution.csv())?;
                        let mut result = solution_summary(&run.solution, cfg);
                        result["residual"] = json!(residual(&run.solution, &cfg.problem));
                        result["monotone_defect"] = json!(run.monotone_defect);
                        result["energy"] =
                            json!(energy(&run.solution, cfg.problem.lambda, &cfg.problem)?);
                        if cfg.problem.p >= 2.0 {
                            let battery = default_battery(&run.solution, g);
                            result["stability_margin"] = json!(stability_check(
                                &run.solution,
                                cfg.problem.lambda,
                                &cfg.problem,
                                &battery
                            )?);
                        }
                        write_summary(out_dir, cfg, 0, result)?;
                        Ok(0)
                    }
                    SolveOutcome::Diverged(info) => {
                        write_summary(
                            out_dir,
                            cfg,
                            2,
                            json!({
                                "diverged": true,
                                "reason": format!("{:?}", info.reason),
                                "iterations": info.iterations,
                                "sup": info.sup,
                            }),
                        )?;
                        Ok(2)
                    }
                }
            }
            Source::GradientForm(_) => Err(Error::config(
                "problem.source.kind",
                "direct solves of the gradient form go through `sweep` (shooting)",
            )),
        },
        Subcommand::Eigen => {
            let res = first_eigenpair(
                &cfg.problem.weight,
                cfg.problem.p,
                cfg.problem.n,
                &cfg.problem.grid,
            )?;
            write(out_dir, "solution.csv", &res.eigenfunction.csv())?;
            let tail: Vec<f64> = res
                .rayleigh_history
                .iter()
                .rev()
                .take(8)
                .rev()
                .cloned()
                .collect();
            write_summary(
                out_dir,
                cfg,
                0,
                json!({
                    "lambda1": res.lambda1,
                    "attained": res.attained,
                    "iterations": res.eigenfunction.iterations,
                    "rayleigh_tail": tail,
                }),
            )?;
            Ok(0)
        }
        Subcommand::Branch => {
            let ctrl = iteration_control(cfg);
            let diagram = branch_diagram(
                &cfg.problem,
                cfg.branch_count,
                cfg.numerics.lambda_max_probe,
                &ctrl,
            )?;
            write(out_dir, "diagram.csv", &diagram.csv())?;
            if let Some(extremal) = &diagram.extremal {
                write(out_dir, "solution.csv", &extremal.csv())?;
            }
            write_summary(
                out_dir,
                cfg,
                0,
                json!({
                    "lambda_star": lambda_star_json(&diagram.lambda_star),
                    "samples": diagram.lambda_samples.len(),
                    "sup_at_top": diagram.sups.last(),
                    "energies_negative": diagram.energies.iter().all(|&e| e < 0.0),
                }),
            )?;
            Ok(0)
        }
        Subcommand::LambdaStar => {
            let report = find_lambda_star(
                &cfg.problem,
                None,
                cfg.numerics.lambda_max_probe,
                &IterationControl {
                    polish: false,
                    accelerate: true,
                    ..iteration_control(cfg)
                },
            )?;
            let probes: Vec<Value> = report
                .probes
                .iter()
                .map(|(l, ok)| json!({"lambda": l, "converged": ok}))
                .collect();
            write_summary(
                out_dir,
                cfg,
                0,
                json!({
                    "lambda_star": lambda_star_json(&report.result),
                    "probes": probes,
                }),
            )?;
            Ok(0)
        }
        Subcommand::Sweep => {
            let curve = shoot_sweep(
                &cfg.problem,
                cfg.problem.lambda,
                cfg.sweep_a_max,
                cfg.sweep_count,
            )?;
            let mut csv = String::from("a,B\n");
            for i in 0..curve.central_values.len() {
                match curve.boundary_values[i] {
                    Some(b) => csv.push_str(&format!("{},{}\n", curve.central_values[i], b)),
                    None => csv.push_str(&format!("{},nan\n", curve.central_values[i])),
                }
            }
            write(out_dir, "sweep.csv", &csv)?;
            write_summary(
                out_dir,
                cfg,
                0,
                json!({
                    "roots": curve.roots,
                    "root_residuals": curve.root_residuals,
                    "blowup_samples": curve
                        .boundary_values
                        .iter()
                        .filter(|b| b.is_none())
                        .count(),
                }),
            )?;
            Ok(0)
        }
        Subcommand::Singular => {
            let fam = um_family(
                cfg.singular_m,
                cfg.problem.p,
                cfg.problem.n,
                &cfg.problem.grid,
            )?;
            write(out_dir, "family.csv", &fam.csv())?;
            let dirac = dirac_coefficient(cfg.singular_m, cfg.problem.p, cfg.problem.n)?;
            let mut result = json!({
                "family": {"m": cfg.singular_m, "K_mN": fam.k_mn},
                "dirac": serde_json::to_value(&dirac).unwrap(),
            });
            let mut status = 0;
            if matches!(cfg.problem.source, Source::OrderZero(_)) {
                let tables = match cfg.nonlinearity.form {
                    Form::G => g_to_beta(&cfg.nonlinearity, cfg.problem.p, cfg.grid_spec())?,
                    Form::Beta => {
                        build_transform(&cfg.nonlinearity, cfg.problem.p, cfg.grid_spec())?
                    }
                };
                let ctrl = iteration_control(cfg);
                match solve_with_atom(&cfg.problem, cfg.problem.lambda, &ctrl)? {
                    SolveOutcome::Converged(run) => {
                        write(out_dir, "solution.csv", &run.solution.csv())?;
                        let report = correspondence_check(&run.solution, &tables, &cfg.problem)?;
                        result["correspondence"] = serde_json::to_value(&report).unwrap();
                    }
                    SolveOutcome::Diverged(info) => {
                        result["diverged"] = json!({
                            "reason": format!("{:?}", info.reason),
                            "iterations": info.iterations,
                        });
                        status = 2;
                    }
                }
            }
            write_summary(out_dir, cfg, status, result)?;
            Ok(status)
        }
        Subcommand::Predict => {
            let g = match cfg.nonlinearity.form {
                Form::G => cfg.nonlinearity.clone(),
                Form::Beta => {
                    build_transform(&cfg.nonlinearity, cfg.problem.p, cfg.grid_spec())?
                        .derived_g()?
                }
            };
            let growth = classify_growth(
                &g,
                cfg.problem.p,
                cfg.problem.n,
                cfg.numerics.growth_horizon,
            )?;
            let r = weight_integrability(&cfg.problem.weight, cfg.problem.n);
            let pred = regularity_prediction(cfg.problem.p, cfg.problem.n, r, &growth);
            write_summary(
                out_dir,
                cfg,
                0,
                json!({
                    "growth": {
                        "q_estimate": growth.q_estimate,
                        "m_q_estimate": growth.m_q_estimate,
                        "class": format!("{:?}", growth.class),
                        "q1": growth.q1,
                        "q_star": growth.q_star,
                        "p_star": growth.p_star,
                    },
                    "prediction": serde_json::to_value(&pred).unwrap(),
                }),
            )?;
            Ok(0)
        }
    }
}
