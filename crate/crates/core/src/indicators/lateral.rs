use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Minimum number of samples for a degree-5 fit.
pub const MIN_FIT_SAMPLES: usize = 6;

/// Degree-5 least-squares fit of a lateral signal over normalized time `u` in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LateralFit {
    /// Coefficients of `u^0 .. u^5`.
    pub coefficients: [f64; 6],
    /// Window length in seconds; maps `u` back to time.
    pub duration: f64,
    pub rms_residual: f64,
}

impl LateralFit {
    /// Fits samples `(u, y)`. Returns `None` with fewer than six samples or a
    /// non-positive duration.
    pub fn fit(samples: &[(f64, f64)], duration: f64) -> Option<LateralFit> {
        if samples.len() < MIN_FIT_SAMPLES || !(duration > 0.0) {
            return None;
        }
        let n = samples.len();
        let a = DMatrix::from_fn(n, 6, |r, c| samples[r].0.powi(c as i32));
        let b = DVector::from_iterator(n, samples.iter().map(|s| s.1));
        let qr = a.clone().qr();
        let rhs = qr.q().transpose() * &b;
        let x = qr.r().solve_upper_triangular(&rhs)?;
        let mut coefficients = [0.0; 6];
        coefficients.copy_from_slice(x.as_slice());
        let residual = &a * &x - &b;
        let rms_residual = (residual.norm_squared() / n as f64).sqrt();
        Some(LateralFit { coefficients, duration, rms_residual })
    }

    pub fn value(&self, u: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }

    /// First derivative with respect to `u`.
    pub fn du(&self, u: f64) -> f64 {
        let c = &self.coefficients;
        (1..6).rev().fold(0.0, |acc, k| acc * u + k as f64 * c[k])
    }

    /// Second derivative with respect to `u`.
    pub fn du2(&self, u: f64) -> f64 {
        let c = &self.coefficients;
        (2..6).rev().fold(0.0, |acc, k| acc * u + (k * (k - 1)) as f64 * c[k])
    }

    /// Lateral speed in m/s at normalized time `u`.
    pub fn speed(&self, u: f64) -> f64 {
        self.du(u) / self.duration
    }

    /// Lateral acceleration in m/s² at normalized time `u`.
    pub fn accel(&self, u: f64) -> f64 {
        self.du2(u) / (self.duration * self.duration)
    }

    pub fn max_abs_speed(&self) -> f64 {
        max_abs_on_unit(|u| self.speed(u))
    }

    pub fn max_abs_accel(&self) -> f64 {
        max_abs_on_unit(|u| self.accel(u))
    }
}

pub const FIT_GRID_CELLS: usize = 2000;

/// Maximum of `|f|` on [0, 1]: dense grid search refined by golden-section search
/// in the cells around the best grid point.
pub fn max_abs_on_unit(f: impl Fn(f64) -> f64) -> f64 {
    let g = |u: f64| f(u).abs();
    let (mut best_i, mut best) = (0, g(0.0));
    for i in 1..=FIT_GRID_CELLS {
        let v = g(i as f64 / FIT_GRID_CELLS as f64);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let lo = best_i.saturating_sub(1) as f64 / FIT_GRID_CELLS as f64;
    let hi = (best_i + 1).min(FIT_GRID_CELLS) as f64 / FIT_GRID_CELLS as f64;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (g(c), g(d));
    while b - a > 1e-13 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = g(d);
        }
    }
    best.max(fc).max(fd).max(g(lo)).max(g(hi))
}
