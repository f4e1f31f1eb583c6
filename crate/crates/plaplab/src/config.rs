//! Flat sectioned key=value configs (INI-like, diff-friendly) describing
//! one run: the radial problem, the nonlinearity, numerics knobs, and the
//! per-subcommand extras. Unknown sections or keys are rejected.

use std::collections::BTreeMap;

use crate::catalog::CatalogParams;
use crate::error::{Error, Result};
use crate::nonlinearity::{Form, Nonlinearity};
use crate::radial::{RadialGrid, RadialProblem, Source, Weight};
use crate::transform::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Transform,
    Solve,
    Eigen,
    Branch,
    LambdaStar,
    Sweep,
    Singular,
    Predict,
}

impl Subcommand {
    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::Transform => "transform",
            Subcommand::Solve => "solve",
            Subcommand::Eigen => "eigen",
            Subcommand::Branch => "branch",
            Subcommand::LambdaStar => "lambda-star",
            Subcommand::Sweep => "sweep",
            Subcommand::Singular => "singular",
            Subcommand::Predict => "predict",
        }
    }
}

pub type Sections = BTreeMap<String, BTreeMap<String, String>>;

/// Parse the INI-like text into sections; `#` and `;` start comments.
pub fn parse_sections(text: &str) -> Result<Sections> {
    let mut sections: Sections = BTreeMap::new();
    let mut current = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find(['#', ';']) {
            Some(idx) => &raw[..idx],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let loc = format!("line {}", lineno + 1);
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::config(&loc, "unterminated section header"))?
                .trim()
                .to_string();
            if name.is_empty() {
                return Err(Error::config(&loc, "empty section name"));
            }
            sections.entry(name.clone()).or_default();
            current = name;
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::config(&loc, format!("expected key = value, got `{line}`")));
        };
        if current.is_empty() {
            return Err(Error::config(&loc, "key outside any [section]"));
        }
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(Error::config(&loc, "empty key"));
        }
        let section = sections.get_mut(&current).unwrap();
        if section.insert(key.clone(), value).is_some() {
            return Err(Error::config(&loc, format!("duplicate key `{current}.{key}`")));
        }
    }
    Ok(sections)
}

/// Apply `section.key=value` overrides.
pub fn apply_overrides(sections: &mut Sections, overrides: &[String]) -> Result<()> {
    for ov in overrides {
        let Some((path, value)) = ov.split_once('=') else {
            return Err(Error::config("--override", format!("expected KEY=VALUE, got `{ov}`")));
        };
        let Some((section, key)) = path.trim().split_once('.') else {
            return Err(Error::config(
                "--override",
                format!("expected section.key, got `{path}`"),
            ));
        };
        sections
            .entry(section.trim().to_string())
            .or_default()
            .insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(())
}

const KNOWN: &[(&str, &[&str])] = &[
    (
        "problem",
        &[
            "p",
            "N",
            "lambda",
            "weight.kind",
            "weight.param",
            "atom_mass",
            "source.kind",
        ],
    ),
    (
        "nonlinearity",
        &[
            "form",
            "kind",
            "id",
            "Q",
            "m",
            "C",
            "k",
            "endpoint",
            "breakpoints",
            "slopes",
            "xs",
            "ys",
        ],
    ),
    (
        "numerics",
        &[
            "grid",
            "eps0",
            "tol",
            "max_iter",
            "sup_cap",
            "lambda_max_probe",
            "table_nodes",
            "value_cap",
            "growth_horizon",
        ],
    ),
    ("branch", &["count"]),
    ("sweep", &["a_max", "count"]),
    ("singular", &["m"]),
];

fn reject_unknown(sections: &Sections) -> Result<()> {
    for (name, body) in sections {
        let Some((_, keys)) = KNOWN.iter().find(|(s, _)| s == name) else {
            return Err(Error::config(name, "unknown section"));
        };
        for key in body.keys() {
            if !keys.contains(&key.as_str()) {
                return Err(Error::config(
                    format!("{name}.{key}"),
                    "unknown key (strict parsing)",
                ));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Numerics {
    pub grid: usize,
    pub eps0: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub sup_cap: f64,
    pub lambda_max_probe: f64,
    pub table_nodes: usize,
    pub value_cap: f64,
    pub growth_horizon: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            grid: 4096,
            eps0: 1e-9,
            tol: 1e-9,
            max_iter: 100_000,
            sup_cap: 1e12,
            lambda_max_probe: 100.0,
            table_nodes: 10_000,
            value_cap: 1e12,
            growth_horizon: 1e10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    pub problem: RadialProblem,
    pub nonlinearity: Nonlinearity,
    pub numerics: Numerics,
    pub branch_count: usize,
    pub sweep_a_max: f64,
    pub sweep_count: usize,
    pub singular_m: f64,
    /// Echo of the raw key=value sections for the summary.
    pub echo: Sections,
}

fn get<'a>(sections: &'a Sections, section: &str, key: &str) -> Option<&'a str> {
    sections.get(section).and_then(|s| s.get(key)).map(|v| v.as_str())
}

fn parse_f64(sections: &Sections, section: &str, key: &str, default: f64) -> Result<f64> {
    match get(sections, section, key) {
        None => Ok(default),
        Some("inf") | Some("infinity") => Ok(f64::INFINITY),
        Some(v) => v.parse::<f64>().map_err(|_| {
            Error::config(format!("{section}.{key}"), format!("not a number: `{v}`"))
        }),
    }
}

fn parse_usize(sections: &Sections, section: &str, key: &str, default: usize) -> Result<usize> {
    match get(sections, section, key) {
        None => Ok(default),
        Some(v) => v.parse::<usize>().map_err(|_| {
            Error::config(format!("{section}.{key}"), format!("not an integer: `{v}`"))
        }),
    }
}

fn parse_list(sections: &Sections, section: &str, key: &str) -> Result<Vec<f64>> {
    let Some(text) = get(sections, section, key) else {
        return Err(Error::config(
            format!("{section}.{key}"),
            "missing required list",
        ));
    };
    text.split(',')
        .map(|tok| {
            let tok = tok.trim();
            if tok == "inf" {
                Ok(f64::INFINITY)
            } else {
                tok.parse::<f64>().map_err(|_| {
                    Error::config(format!("{section}.{key}"), format!("bad list entry `{tok}`"))
                })
            }
        })
        .collect()
}

fn build_nonlinearity(sections: &Sections, p: f64) -> Result<Nonlinearity> {
    let form = match get(sections, "nonlinearity", "form").unwrap_or("g") {
        "g" => Form::G,
        "beta" => Form::Beta,
        other => {
            return Err(Error::config(
                "nonlinearity.form",
                format!("expected `g` or `beta`, got `{other}`"),
            ))
        }
    };
    match get(sections, "nonlinearity", "kind").unwrap_or("catalog") {
        "catalog" => {
            let id = parse_usize(sections, "nonlinearity", "id", 1)? as u32;
            let params = CatalogParams {
                q: get(sections, "nonlinearity", "Q")
                    .map(|_| parse_f64(sections, "nonlinearity", "Q", 0.0))
                    .transpose()?,
                m: get(sections, "nonlinearity", "m")
                    .map(|_| parse_f64(sections, "nonlinearity", "m", 0.0))
                    .transpose()?,
                c: get(sections, "nonlinearity", "C")
                    .map(|_| parse_f64(sections, "nonlinearity", "C", 0.0))
                    .transpose()?,
                k: get(sections, "nonlinearity", "k")
                    .map(|_| parse_f64(sections, "nonlinearity", "k", 0.0))
                    .transpose()?,
            };
            match form {
                Form::G => Nonlinearity::g_catalog(id, params, p),
                Form::Beta => Nonlinearity::beta_catalog(id, params, p),
            }
        }
        "piecewise" => {
            let breakpoints = parse_list(sections, "nonlinearity", "breakpoints")?;
            let slopes = parse_list(sections, "nonlinearity", "slopes")?;
            Nonlinearity::piecewise_linear(form, breakpoints, slopes)
        }
        "sampled" => {
            let xs = parse_list(sections, "nonlinearity", "xs")?;
            let ys = parse_list(sections, "nonlinearity", "ys")?;
            let endpoint = parse_f64(sections, "nonlinearity", "endpoint", f64::INFINITY)?;
            Nonlinearity::sampled(form, xs, ys, endpoint)
        }
        "exp_neg_beta" => Ok(Nonlinearity::bounded_exp_beta()),
        other => Err(Error::config(
            "nonlinearity.kind",
            format!("unknown kind `{other}`"),
        )),
    }
}

/// Assemble and validate one run from parsed sections.
pub fn build_config(subcommand: Subcommand, sections: Sections) -> Result<RunConfig> {
    reject_unknown(&sections)?;

    let numerics = Numerics {
        grid: parse_usize(&sections, "numerics", "grid", 4096)?,
        eps0: parse_f64(&sections, "numerics", "eps0", 1e-9)?,
        tol: parse_f64(&sections, "numerics", "tol", 1e-9)?,
        max_iter: parse_usize(&sections, "numerics", "max_iter", 100_000)?,
        sup_cap: parse_f64(&sections, "numerics", "sup_cap", 1e12)?,
        lambda_max_probe: parse_f64(&sections, "numerics", "lambda_max_probe", 100.0)?,
        table_nodes: parse_usize(&sections, "numerics", "table_nodes", 10_000)?,
        value_cap: parse_f64(&sections, "numerics", "value_cap", 1e12)?,
        growth_horizon: parse_f64(&sections, "numerics", "growth_horizon", 1e10)?,
    };
    if numerics.grid < 64 {
        return Err(Error::config("numerics.grid", "grid size must be at least 64"));
    }
    for (name, value) in [
        ("numerics.eps0", numerics.eps0),
        ("numerics.tol", numerics.tol),
        ("numerics.sup_cap", numerics.sup_cap),
        ("numerics.value_cap", numerics.value_cap),
    ] {
        if !(value > 0.0) {
            return Err(Error::config(name, format!("must be positive, got {value}")));
        }
    }

    let p = parse_f64(&sections, "problem", "p", 2.0)?;
    if !(p > 1.0) {
        return Err(Error::config("problem.p", format!("invariant p > 1 violated (p = {p})")));
    }
    let n = parse_usize(&sections, "problem", "N", 3)?;
    let lambda = parse_f64(&sections, "problem", "lambda", 1.0)?;
    let atom_mass = parse_f64(&sections, "problem", "atom_mass", 0.0)?;
    let weight = match get(&sections, "problem", "weight.kind").unwrap_or("const") {
        "const" => Weight::Const(parse_f64(&sections, "problem", "weight.param", 1.0)?),
        "power" => Weight::PowerSingular(parse_f64(&sections, "problem", "weight.param", 0.0)?),
        other => {
            return Err(Error::config(
                "problem.weight.kind",
                format!("expected `const` or `power`, got `{other}`"),
            ))
        }
    };

    let nonlinearity = build_nonlinearity(&sections, p)?;
    let grid = RadialGrid::geometric(numerics.grid, numerics.eps0);
    let table_spec = GridSpec {
        nodes: numerics.table_nodes,
        value_cap: numerics.value_cap,
        horizon: 1e15,
    };
    // A nonlinearity given on the other side of the correspondence is
    // carried across by the transform tables.
    let source = match get(&sections, "problem", "source.kind").unwrap_or("order_zero") {
        "order_zero" => match nonlinearity.form {
            Form::G => Source::OrderZero(nonlinearity.clone()),
            Form::Beta => {
                let tables = crate::transform::build_transform(&nonlinearity, p, table_spec)?;
                Source::OrderZero(tables.derived_g()?)
            }
        },
        "gradient" => match nonlinearity.form {
            Form::Beta => Source::GradientForm(nonlinearity.clone()),
            Form::G => {
                let tables = crate::transform::g_to_beta(&nonlinearity, p, table_spec)?;
                Source::GradientForm(tables.derived_beta()?)
            }
        },
        "fixed" => Source::FixedRhs(vec![1.0; grid.len()]),
        other => {
            return Err(Error::config(
                "problem.source.kind",
                format!("unknown source kind `{other}`"),
            ))
        }
    };

    let problem = RadialProblem {
        p,
        n,
        lambda,
        weight,
        atom_mass,
        source,
        grid,
    };
    problem
        .validate()
        .map_err(|e| Error::config("problem", e.to_string()))?;

    Ok(RunConfig {
        subcommand,
        problem,
        nonlinearity,
        branch_count: parse_usize(&sections, "branch", "count", 16)?,
        sweep_a_max: parse_f64(&sections, "sweep", "a_max", 10.0)?,
        sweep_count: parse_usize(&sections, "sweep", "count", 48)?,
        singular_m: parse_f64(&sections, "singular", "m", 0.5)?,
        numerics,
        echo: sections,
    })
}

impl RunConfig {
    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            nodes: self.numerics.table_nodes,
            value_cap: self.numerics.value_cap,
            horizon: 1e15,
        }
    }
}
