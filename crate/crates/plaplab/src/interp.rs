//! Monotone cubic Hermite interpolation.
//!
//! Used for the transform tables (forward map, its inverse, derived
//! nonlinearities) and for reconstructing solver iterates between grid
//! nodes. When exact nodal derivatives are known they are passed in and
//! only clamped into the Fritsch-Carlson monotonicity box; otherwise
//! derivative estimates are built from the data (PCHIP style).

#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl MonotoneCubic {
    /// Interpolant through (x, y) with supplied nodal derivatives,
    /// clamped so the result is monotone wherever the data is.
    pub fn with_derivatives(x: Vec<f64>, y: Vec<f64>, mut d: Vec<f64>) -> Self {
        assert_eq!(x.len(), y.len());
        assert_eq!(x.len(), d.len());
        assert!(x.len() >= 2);
        assert!(x.windows(2).all(|w| w[1] > w[0]), "abscissae must increase");
        let n = x.len();
        for i in 0..n - 1 {
            let delta = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
            if delta == 0.0 {
                d[i] = 0.0;
                d[i + 1] = 0.0;
            } else {
                // Fritsch-Carlson sufficient box: 0 <= d/delta <= 3.
                for k in [i, i + 1] {
                    let a = d[k] / delta;
                    if a < 0.0 {
                        d[k] = 0.0;
                    } else if a > 3.0 {
                        d[k] = 3.0 * delta;
                    }
                }
            }
        }
        Self { x, y, d }
    }

    /// PCHIP-style interpolant: derivative estimates from weighted harmonic
    /// means of adjacent secant slopes (zero across local extrema).
    pub fn pchip(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        assert!(n >= 2);
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
            return Self::with_derivatives(x, y, d);
        }
        for i in 1..n - 1 {
            let (d0, d1) = (delta[i - 1], delta[i]);
            if d0 * d1 > 0.0 {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / d0 + w2 / d1);
            }
        }
        d[0] = edge_derivative(h[0], h[1], delta[0], delta[1]);
        d[n - 1] = edge_derivative(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        Self::with_derivatives(x, y, d)
    }

    pub fn xs(&self) -> &[f64] {
        &self.x
    }

    pub fn ys(&self) -> &[f64] {
        &self.y
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.x.last().unwrap()
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.x.len();
        match self.x.partition_point(|&v| v <= x) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        }
    }

    /// Evaluate at `x`; clamps to the table range (the callers guard range
    /// violations where they are meaningful).
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.x[i + 1] - self.x[i];
        let t = ((x - self.x[i]) / h).clamp(0.0, 1.0);
        let (h00, h10, h01, h11) = hermite_basis(t);
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }

    pub fn eval_deriv(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.x[i + 1] - self.x[i];
        let t = ((x - self.x[i]) / h).clamp(0.0, 1.0);
        let dh00 = 6.0 * t * t - 6.0 * t;
        let dh10 = 3.0 * t * t - 4.0 * t + 1.0;
        let dh01 = -dh00;
        let dh11 = 3.0 * t * t - 2.0 * t;
        (dh00 * self.y[i] + dh01 * self.y[i + 1]) / h + dh10 * self.d[i] + dh11 * self.d[i + 1]
    }
}

fn hermite_basis(t: f64) -> (f64, f64, f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        2.0 * t3 - 3.0 * t2 + 1.0,
        t3 - 2.0 * t2 + t,
        -2.0 * t3 + 3.0 * t2,
        t3 - t2,
    )
}

/// One-sided three-point derivative estimate for PCHIP boundaries,
/// limited to preserve the shape of the first cell.
fn edge_derivative(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d * d0 <= 0.0 {
        0.0
    } else if d0 * d1 < 0.0 && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_nodes_exactly() {
        let x: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|&v| (v * v + 1.0).ln()).collect();
        let c = MonotoneCubic::pchip(x.clone(), y.clone());
        for (xi, yi) in x.iter().zip(&y) {
            assert!((c.eval(*xi) - yi).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_derivatives_give_high_order() {
        // exp on a fine grid: Hermite with exact derivatives is O(h^4).
        let n = 200;
        let x: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let d = y.clone();
        let c = MonotoneCubic::with_derivatives(x, y, d);
        let mut worst: f64 = 0.0;
        for i in 0..400 {
            let t = (i as f64 + 0.5) / 400.0;
            worst = worst.max((c.eval(t) - t.exp()).abs());
        }
        assert!(worst < 1e-10, "worst {worst:e}");
    }

    #[test]
    fn monotone_data_gives_monotone_interpolant() {
        let x = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let y = vec![0.0, 0.1, 0.11, 5.0, 5.01];
        let c = MonotoneCubic::pchip(x, y);
        let mut prev = c.eval(0.0);
        for i in 1..=400 {
            let t = i as f64 / 100.0;
            let v = c.eval(t);
            assert!(v >= prev - 1e-12, "not monotone at {t}");
            prev = v;
        }
    }
}
