//! Scalar nonlinearities: a beta-side function on [0, L) or a g-side
//! function on [0, Lambda), given by a catalog entry, a named analytic
//! form, a sampled table, or a convex piecewise-linear graph.

use crate::catalog::{Catalog, CatalogParams};
use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    /// beta on [0, L): coefficient of |grad u|^p in the gradient-source
    /// problem; nonnegative, continuous.
    Beta,
    /// g on [0, Lambda): order-zero nonlinearity; g(0)=0, nondecreasing, C^1.
    G,
}

/// Named analytic forms that are not part of the numbered catalog.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Analytic {
    /// beta(t) = exp(-t): bounded mass (gamma(inf) = 1), so the derived g
    /// is bounded. Used for the singular-measure bookkeeping checks.
    ExpNegBeta,
}

#[derive(Debug, Clone)]
pub struct PiecewiseLinear {
    /// Breakpoints s_0 = 0 < s_1 < ...; the last segment extends to the
    /// declared endpoint with its own slope.
    pub breakpoints: Vec<f64>,
    /// Slope on [s_i, s_{i+1}); len == breakpoints.len().
    pub slopes: Vec<f64>,
    /// Values at the breakpoints (accumulated; values[0] = 0).
    values: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(breakpoints: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints[0] != 0.0 {
            return Err(Error::InvalidDomain(
                "piecewise-linear graph must start at 0".into(),
            ));
        }
        if breakpoints.len() != slopes.len() {
            return Err(Error::InvalidDomain(
                "need one slope per breakpoint segment".into(),
            ));
        }
        if !breakpoints.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::InvalidDomain(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        let mut values = Vec::with_capacity(breakpoints.len());
        let mut acc = 0.0;
        values.push(0.0);
        for i in 1..breakpoints.len() {
            acc += slopes[i - 1] * (breakpoints[i] - breakpoints[i - 1]);
            values.push(acc);
        }
        Ok(Self {
            breakpoints,
            slopes,
            values,
        })
    }

    fn segment(&self, s: f64) -> usize {
        match self.breakpoints.partition_point(|&b| b <= s) {
            0 => 0,
            k => (k - 1).min(self.slopes.len() - 1),
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        let i = self.segment(s);
        self.values[i] + self.slopes[i] * (s - self.breakpoints[i])
    }

    pub fn slope_at(&self, s: f64) -> f64 {
        self.slopes[self.segment(s)]
    }

    pub fn value_at_breakpoint(&self, i: usize) -> f64 {
        self.values[i]
    }
}

#[derive(Debug, Clone)]
pub enum Shape {
    Catalog(Catalog),
    Analytic(Analytic),
    Sampled(MonotoneCubic),
    PiecewiseLinear(PiecewiseLinear),
}

#[derive(Debug, Clone)]
pub struct Nonlinearity {
    pub form: Form,
    pub shape: Shape,
    /// Domain endpoint: L for the beta side, Lambda for the g side.
    /// May be +infinity.
    pub endpoint: f64,
}

impl Nonlinearity {
    pub fn beta_catalog(id: u32, params: CatalogParams, p: f64) -> Result<Self> {
        let entry = Catalog::new(id, params, p)?;
        Ok(Self {
            form: Form::Beta,
            endpoint: entry.l_end(),
            shape: Shape::Catalog(entry),
        })
    }

    pub fn g_catalog(id: u32, params: CatalogParams, p: f64) -> Result<Self> {
        let entry = Catalog::new(id, params, p)?;
        Ok(Self {
            form: Form::G,
            endpoint: entry.lambda_end(),
            shape: Shape::Catalog(entry),
        })
    }

    /// beta(t) = exp(-t) on [0, inf): the bounded-integral beta used by the
    /// measure bookkeeping checks.
    pub fn bounded_exp_beta() -> Self {
        Self {
            form: Form::Beta,
            endpoint: f64::INFINITY,
            shape: Shape::Analytic(Analytic::ExpNegBeta),
        }
    }

    /// Sampled nonlinearity reconstructed with a monotone cubic.
    pub fn sampled(form: Form, xs: Vec<f64>, ys: Vec<f64>, endpoint: f64) -> Result<Self> {
        if xs.len() < 4 {
            return Err(Error::DerivativeUnavailable(format!(
                "sampled table needs at least 4 points, got {}",
                xs.len()
            )));
        }
        if !xs.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::InvalidDomain(
                "sampled abscissae must be strictly increasing".into(),
            ));
        }
        let table = MonotoneCubic::pchip(xs, ys);
        let nl = Self {
            form,
            shape: Shape::Sampled(table),
            endpoint,
        };
        nl.validate()?;
        Ok(nl)
    }

    pub fn piecewise_linear(form: Form, breakpoints: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        let pl = PiecewiseLinear::new(breakpoints, slopes)?;
        let nl = Self {
            form,
            shape: Shape::PiecewiseLinear(pl),
            endpoint: f64::INFINITY,
        };
        nl.validate()?;
        Ok(nl)
    }

    /// Check the standing hypotheses: nonnegative values for the beta side;
    /// g(0) = 0 and nondecreasing for the g side. Values that overflow to
    /// +inf deep in the domain are accepted (monotone overflow), NaN is not.
    pub fn validate(&self) -> Result<()> {
        let probes: Vec<f64> = match &self.shape {
            Shape::Sampled(t) => {
                let mut v: Vec<f64> = t.xs().to_vec();
                for w in t.xs().windows(2) {
                    v.push(0.5 * (w[0] + w[1]));
                }
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                v
            }
            Shape::PiecewiseLinear(pl) => {
                let mut v = pl.breakpoints.clone();
                for w in pl.breakpoints.windows(2) {
                    v.push(0.5 * (w[0] + w[1]));
                }
                v.push(pl.breakpoints.last().unwrap() + 1.0);
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                v
            }
            _ => {
                let end = if self.endpoint.is_finite() {
                    self.endpoint * (1.0 - 1e-9)
                } else {
                    1e6
                };
                (0..=64).map(|i| end * i as f64 / 64.0).collect()
            }
        };
        let mut prev = f64::NEG_INFINITY;
        for (i, &x) in probes.iter().enumerate() {
            let v = self.eval(x);
            if v.is_nan() {
                return Err(Error::InvalidDomain(format!(
                    "NaN value at {x} inside the declared domain"
                )));
            }
            match self.form {
                Form::Beta => {
                    if v < 0.0 {
                        return Err(Error::InvalidDomain(format!(
                            "beta sample {v} < 0 at t = {x}"
                        )));
                    }
                }
                Form::G => {
                    if i == 0 && v.abs() > 1e-12 {
                        return Err(Error::InvalidDomain(format!("g(0) = {v}, expected 0")));
                    }
                    if v < prev - 1e-12 * prev.abs().max(1.0) {
                        return Err(Error::InvalidDomain(format!(
                            "g not nondecreasing near {x}"
                        )));
                    }
                    prev = v;
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        match (&self.shape, self.form) {
            (Shape::Catalog(c), Form::Beta) => c.beta(x),
            (Shape::Catalog(c), Form::G) => c.g(x),
            (Shape::Analytic(Analytic::ExpNegBeta), _) => (-x).exp(),
            (Shape::Sampled(t), _) => t.eval(x),
            (Shape::PiecewiseLinear(pl), _) => pl.eval(x),
        }
    }

    /// Derivative where a differentiable reconstruction exists. For the
    /// piecewise-linear shape this is the segment slope (defined except at
    /// breakpoints, extended right-continuously).
    pub fn deriv(&self, x: f64) -> Result<f64> {
        match (&self.shape, self.form) {
            (Shape::Catalog(c), Form::G) => Ok(c.g_prime(x)),
            (Shape::Catalog(_), Form::Beta) => Err(Error::DerivativeUnavailable(
                "beta-side derivative is not part of the catalog closed forms".into(),
            )),
            (Shape::Analytic(Analytic::ExpNegBeta), _) => Ok(-(-x).exp()),
            (Shape::Sampled(t), _) => Ok(t.eval_deriv(x)),
            (Shape::PiecewiseLinear(pl), _) => Ok(pl.slope_at(x)),
        }
    }

    /// Largest argument the representation can evaluate: the table range
    /// for sampled shapes (interpolation clamps beyond it), the declared
    /// endpoint otherwise.
    pub fn usable_max(&self) -> f64 {
        match &self.shape {
            Shape::Sampled(t) => t.x_max().min(self.endpoint),
            _ => self.endpoint,
        }
    }

    pub fn catalog(&self) -> Option<&Catalog> {
        match &self.shape {
            Shape::Catalog(c) => Some(c),
            _ => None,
        }
    }

    pub fn piecewise(&self) -> Option<&PiecewiseLinear> {
        match &self.shape {
            Shape::PiecewiseLinear(pl) => Some(pl),
            _ => None,
        }
    }

    /// Serialize to flat key=value pairs for the [nonlinearity] config
    /// section.
    pub fn to_config(&self) -> Vec<(String, String)> {
        let mut kv = Vec::new();
        let form = match self.form {
            Form::Beta => "beta",
            Form::G => "g",
        };
        kv.push(("form".to_string(), form.to_string()));
        match &self.shape {
            Shape::Catalog(c) => {
                kv.push(("kind".into(), "catalog".into()));
                kv.push(("id".into(), c.id.to_string()));
                let params = c.params();
                if let Some(q) = params.q {
                    kv.push(("Q".into(), fmt(q)));
                }
                if let Some(m) = params.m {
                    kv.push(("m".into(), fmt(m)));
                }
                if let Some(cc) = params.c {
                    kv.push(("C".into(), fmt(cc)));
                }
                if let Some(k) = params.k {
                    kv.push(("k".into(), fmt(k)));
                }
            }
            Shape::Analytic(Analytic::ExpNegBeta) => {
                kv.push(("kind".into(), "exp_neg_beta".into()));
            }
            Shape::Sampled(t) => {
                kv.push(("kind".into(), "sampled".into()));
                kv.push(("xs".into(), join(t.xs())));
                kv.push(("ys".into(), join(t.ys())));
            }
            Shape::PiecewiseLinear(pl) => {
                kv.push(("kind".into(), "piecewise".into()));
                kv.push(("breakpoints".into(), join(&pl.breakpoints)));
                kv.push(("slopes".into(), join(&pl.slopes)));
            }
        }
        kv.push(("endpoint".into(), fmt(self.endpoint)));
        kv
    }
}

fn fmt(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v}")
    }
}

fn join(vals: &[f64]) -> String {
    vals.iter().map(|v| fmt(*v)).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piecewise_linear_accumulates() {
        let pl = PiecewiseLinear::new(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 5.0]).unwrap();
        assert_eq!(pl.eval(0.5), 0.0);
        assert_eq!(pl.eval(2.0), 2.0);
        assert_eq!(pl.eval(3.0), 4.0);
        assert_eq!(pl.eval(4.0), 9.0);
        assert_eq!(pl.slope_at(3.5), 5.0);
    }

    #[test]
    fn validation_rejects_negative_beta() {
        let nl = Nonlinearity::sampled(
            Form::Beta,
            vec![0.0, 1.0, 2.0, 3.0],
            vec![0.5, -0.25, 0.5, 1.0],
            f64::INFINITY,
        );
        assert!(matches!(nl, Err(Error::InvalidDomain(_))));
    }

    #[test]
    fn validation_rejects_g_not_zero_at_origin() {
        let nl = Nonlinearity::sampled(
            Form::G,
            vec![0.0, 1.0, 2.0, 3.0],
            vec![0.5, 1.0, 1.5, 2.0],
            f64::INFINITY,
        );
        assert!(matches!(nl, Err(Error::InvalidDomain(_))));
    }

    #[test]
    fn catalog_nonlinearity_evaluates_both_sides() {
        let beta = Nonlinearity::beta_catalog(6, CatalogParams::default(), 2.0).unwrap();
        assert!((beta.eval(0.5) - 2.0).abs() < 1e-14);
        assert_eq!(beta.endpoint, 1.0);
        let g = Nonlinearity::g_catalog(6, CatalogParams::default(), 2.0).unwrap();
        assert!((g.eval(1.0) - 1f64.exp_m1()).abs() < 1e-14);
        assert!(g.endpoint.is_infinite());
    }
}
