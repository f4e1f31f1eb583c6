//! Closed-form catalog of beta/g pairs related by the change of unknown
//! v = Psi(u), u = H(v). Each entry carries both sides of the pair plus
//! the exact transform maps, so the quadrature-based transform builder can
//! be checked against them.
//!
//! Ids:
//!  1  beta constant, g linear
//!  2  g sublinear power (0 < Q < p-1)
//!  3  g of power-log type, beta asymptotically a power
//!  4  beta exponential + 1, g of (1+v)(1+ln(1+v)) type
//!  5  g superlinear power (Q > p-1), beta with asymptote
//!  6  g exponential, beta = (p-1)/(1-t)
//!  7  strong beta singularity (1-t)^-(k+1), g of power-log type
//!  8  double exponential g, beta singular at 1
//!  9  quenching pair: both endpoints finite, g = (1-v)^-alpha - 1
//! 10  trigonometric pair: g = 1/cos v - 1, u = sin v

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CatalogParams {
    /// Power exponent Q (entries 2, 5, 9).
    pub q: Option<f64>,
    /// Log-power exponent m (entry 3).
    pub m: Option<f64>,
    /// Scale C (entry 3).
    pub c: Option<f64>,
    /// Singularity order k (entry 7).
    pub k: Option<f64>,
}

/// One catalog entry specialized to a value of p (the closed forms carry
/// p-dependent constants).
#[derive(Debug, Clone, Copy)]
pub struct Catalog {
    pub id: u32,
    pub p: f64,
    /// alpha = Q/(p-1) for the power entries; unused otherwise.
    alpha: f64,
    m: f64,
    c: f64,
    k: f64,
}

impl Catalog {
    pub fn new(id: u32, params: CatalogParams, p: f64) -> Result<Self> {
        if !(p > 1.0) {
            return Err(Error::InvalidDomain(format!("p must exceed 1, got {p}")));
        }
        let pm1 = p - 1.0;
        let bad = |msg: String| Error::ParamOutOfRange { id, msg };
        let mut entry = Catalog {
            id,
            p,
            alpha: 0.0,
            m: 0.0,
            c: 0.0,
            k: 0.0,
        };
        match id {
            1 | 4 | 6 | 8 | 10 => {}
            2 => {
                let q = params.q.unwrap_or(0.5 * pm1);
                if !(q > 0.0 && q < pm1) {
                    return Err(bad(format!("need 0 < Q < p-1, got Q={q}")));
                }
                entry.alpha = q / pm1;
            }
            5 => {
                let q = params.q.unwrap_or(2.0 * pm1);
                if !(q > pm1) {
                    return Err(bad(format!("need Q > p-1, got Q={q}")));
                }
                entry.alpha = q / pm1;
            }
            9 => {
                let q = params.q.unwrap_or(pm1);
                if !(q > 0.0) {
                    return Err(bad(format!("need Q > 0, got Q={q}")));
                }
                entry.alpha = q / pm1;
            }
            3 => {
                let m = params.m.unwrap_or(1.0);
                let c = params.c.unwrap_or(1.0);
                if !(m > 0.0 && c > 0.0) {
                    return Err(bad(format!("need m > 0 and C > 0, got m={m}, C={c}")));
                }
                entry.m = m;
                entry.c = c;
            }
            7 => {
                let k = params.k.unwrap_or(1.0);
                if !(k > 0.0) {
                    return Err(bad(format!("need k > 0, got k={k}")));
                }
                entry.k = k;
            }
            _ => return Err(Error::UnknownExample(id)),
        }
        Ok(entry)
    }

    pub fn params(&self) -> CatalogParams {
        let mut params = CatalogParams::default();
        match self.id {
            2 | 5 | 9 => params.q = Some(self.alpha * (self.p - 1.0)),
            3 => {
                params.m = Some(self.m);
                params.c = Some(self.c);
            }
            7 => params.k = Some(self.k),
            _ => {}
        }
        params
    }

    /// Endpoint L of the beta side.
    pub fn l_end(&self) -> f64 {
        match self.id {
            1..=4 => f64::INFINITY,
            5 => 1.0 / (self.alpha - 1.0),
            6 | 7 | 8 | 10 => 1.0,
            9 => 1.0 / (self.alpha + 1.0),
            _ => unreachable!(),
        }
    }

    /// Endpoint Lambda of the g side.
    pub fn lambda_end(&self) -> f64 {
        match self.id {
            9 => 1.0,
            10 => std::f64::consts::FRAC_PI_2,
            _ => f64::INFINITY,
        }
    }

    pub fn beta(&self, t: f64) -> f64 {
        let pm1 = self.p - 1.0;
        let a = self.alpha;
        match self.id {
            1 => pm1,
            2 => pm1 * a / (1.0 + (1.0 - a) * t),
            3 => {
                let (m, c) = (self.m, self.c);
                pm1 * c * ((1.0 + c * t / (m + 1.0)).powf(m) + m / (m + 1.0 + c * t))
            }
            4 => pm1 * (t.exp() + 1.0),
            5 => pm1 * a / (1.0 - (a - 1.0) * t),
            6 => pm1 / (1.0 - t),
            7 => {
                let k = self.k;
                pm1 * (k / (1.0 - t).powf(k + 1.0) + (k + 1.0) / (1.0 - t))
            }
            8 => pm1 / (1.0 - t) * (1.0 - 1.0 / (1.0 - (1.0 - t).ln())),
            9 => pm1 * a / (1.0 - (a + 1.0) * t),
            10 => pm1 * t / (1.0 - t * t),
            _ => unreachable!(),
        }
    }

    pub fn gamma(&self, t: f64) -> f64 {
        let pm1 = self.p - 1.0;
        let a = self.alpha;
        match self.id {
            1 => pm1 * t,
            2 => pm1 * a / (1.0 - a) * (1.0 + (1.0 - a) * t).ln(),
            3 => {
                let (m, c) = (self.m, self.c);
                let base = 1.0 + c * t / (m + 1.0);
                pm1 * (base.powf(m + 1.0) - 1.0 + m * base.ln())
            }
            4 => pm1 * (t.exp() - 1.0 + t),
            5 => -pm1 * a / (a - 1.0) * (1.0 - (a - 1.0) * t).ln(),
            6 => -pm1 * (1.0 - t).ln(),
            7 => {
                let k = self.k;
                pm1 * ((1.0 - t).powf(-k) - 1.0 - (k + 1.0) * (1.0 - t).ln())
            }
            8 => {
                let l = (1.0 - t).ln();
                pm1 * (-l - (1.0 - l).ln())
            }
            9 => -pm1 * a / (a + 1.0) * (1.0 - (a + 1.0) * t).ln(),
            10 => -0.5 * pm1 * (1.0 - t * t).ln(),
            _ => unreachable!(),
        }
    }

    pub fn psi(&self, t: f64) -> f64 {
        let a = self.alpha;
        match self.id {
            1 => t.exp_m1(),
            2 => (1.0 + (1.0 - a) * t).powf(1.0 / (1.0 - a)) - 1.0,
            3 => {
                let (m, c) = (self.m, self.c);
                let b = (1.0 + c * t / (m + 1.0)).powf(m + 1.0);
                ((b - 1.0).exp() - 1.0) / c
            }
            4 => (t.exp() - 1.0).exp() - 1.0,
            5 => (1.0 - (a - 1.0) * t).powf(-1.0 / (a - 1.0)) - 1.0,
            6 => -(1.0 - t).ln(),
            7 => {
                let k = self.k;
                let b = (1.0 - t).powf(-k);
                ((b - 1.0).exp() - 1.0) / k
            }
            8 => (1.0 - (1.0 - t).ln()).ln(),
            9 => 1.0 - (1.0 - (a + 1.0) * t).powf(1.0 / (a + 1.0)),
            10 => t.asin(),
            _ => unreachable!(),
        }
    }

    pub fn g(&self, v: f64) -> f64 {
        let a = self.alpha;
        match self.id {
            1 => v,
            2 | 5 => (1.0 + v).powf(a) - 1.0,
            3 => {
                let (m, c) = (self.m, self.c);
                let b = 1.0 + (c * v).ln_1p();
                (1.0 + c * v) * b.powf(m / (m + 1.0)) - 1.0
            }
            4 => (1.0 + v) * (1.0 + v.ln_1p()) - 1.0,
            6 => v.exp_m1(),
            7 => {
                let k = self.k;
                let b = 1.0 + (k * v).ln_1p();
                (1.0 + k * v) * b.powf((k + 1.0) / k) - 1.0
            }
            8 => (v.exp() - v - 1.0).exp() - 1.0,
            9 => (1.0 - v).powf(-a) - 1.0,
            10 => 1.0 / v.cos() - 1.0,
            _ => unreachable!(),
        }
    }

    pub fn g_prime(&self, v: f64) -> f64 {
        let a = self.alpha;
        match self.id {
            1 => 1.0,
            2 | 5 => a * (1.0 + v).powf(a - 1.0),
            3 => {
                let (m, c) = (self.m, self.c);
                let b = 1.0 + (c * v).ln_1p();
                c * (b.powf(m / (m + 1.0)) + m / (m + 1.0) * b.powf(-1.0 / (m + 1.0)))
            }
            4 => 2.0 + v.ln_1p(),
            6 => v.exp(),
            7 => {
                let k = self.k;
                let b = 1.0 + (k * v).ln_1p();
                k * b.powf((k + 1.0) / k) + (k + 1.0) * b.powf(1.0 / k)
            }
            8 => (v.exp() - 1.0) * (v.exp() - v - 1.0).exp(),
            9 => a * (1.0 - v).powf(-a - 1.0),
            10 => v.sin() / (v.cos() * v.cos()),
            _ => unreachable!(),
        }
    }

    pub fn h(&self, v: f64) -> f64 {
        let a = self.alpha;
        match self.id {
            1 => v.ln_1p(),
            2 => ((1.0 + v).powf(1.0 - a) - 1.0) / (1.0 - a),
            3 => {
                let (m, c) = (self.m, self.c);
                let b = 1.0 + (c * v).ln_1p();
                (m + 1.0) * (b.powf(1.0 / (m + 1.0)) - 1.0) / c
            }
            4 => v.ln_1p().ln_1p(),
            5 => (1.0 - (1.0 + v).powf(1.0 - a)) / (a - 1.0),
            6 => -(-v).exp_m1(),
            7 => {
                let k = self.k;
                let b = 1.0 + (k * v).ln_1p();
                1.0 - b.powf(-1.0 / k)
            }
            8 => 1.0 - (1.0 - v.exp()).exp(),
            9 => (1.0 - (1.0 - v).powf(a + 1.0)) / (a + 1.0),
            10 => v.sin(),
            _ => unreachable!(),
        }
    }
}
