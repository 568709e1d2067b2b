//! Zero-mean, unimodal, symmetric read-noise models.
//!
//! Every model is parameterised by its standard deviation `sigma`, so a
//! Laplace model uses scale `sigma / sqrt(2)` and the bounded-uniform model
//! has half-width `sigma * sqrt(3)`. All tails satisfy `tail(0) = 1/2` and are
//! nonincreasing and convex on `[0, inf)`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    Gaussian,
    Laplace,
    BoundedUniform,
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Laplace => "laplace",
            NoiseKind::BoundedUniform => "bounded-uniform",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(NoiseKind::Gaussian),
            "laplace" => Ok(NoiseKind::Laplace),
            "bounded-uniform" | "uniform" => Ok(NoiseKind::BoundedUniform),
            other => Err(domain(format!("unknown noise kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    kind: NoiseKind,
    sigma: f64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(domain(format!("noise scale must be positive, got {sigma}")));
        }
        Ok(Self { kind, sigma })
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::new(NoiseKind::Gaussian, sigma)
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Same family with `sigma = 1`.
    pub fn unit(&self) -> Self {
        Self {
            kind: self.kind,
            sigma: 1.0,
        }
    }

    fn laplace_scale(&self) -> f64 {
        self.sigma * FRAC_1_SQRT_2
    }

    fn uniform_half_width(&self) -> f64 {
        self.sigma * 3f64.sqrt()
    }

    /// `Pr(noise > delta)`, the error probability of a bit read with swing `delta`.
    pub fn tail_prob(&self, delta: f64) -> Result<f64> {
        if !(delta >= 0.0) {
            return Err(domain(format!("swing must be nonnegative, got {delta}")));
        }
        Ok(self.tail(delta))
    }

    /// Unchecked tail for `delta >= 0`.
    pub(crate) fn tail(&self, delta: f64) -> f64 {
        match self.kind {
            NoiseKind::Gaussian => 0.5 * libm::erfc(delta / (self.sigma * SQRT_2)),
            NoiseKind::Laplace => 0.5 * (-delta / self.laplace_scale()).exp(),
            NoiseKind::BoundedUniform => {
                let a = self.uniform_half_width();
                if delta >= a {
                    0.0
                } else {
                    (a - delta) / (2.0 * a)
                }
            }
        }
    }

    /// Noise density at `t >= 0`.
    pub fn density(&self, t: f64) -> f64 {
        let t = t.abs();
        match self.kind {
            NoiseKind::Gaussian => {
                let z = t / self.sigma;
                (-0.5 * z * z).exp() / ((2.0 * PI).sqrt() * self.sigma)
            }
            NoiseKind::Laplace => {
                let s = self.laplace_scale();
                (-t / s).exp() / (2.0 * s)
            }
            NoiseKind::BoundedUniform => {
                let a = self.uniform_half_width();
                if t < a {
                    1.0 / (2.0 * a)
                } else {
                    0.0
                }
            }
        }
    }

    /// Swing `delta` with `tail_prob(delta) = p`, for `0 < p <= 1/2`.
    pub fn inverse_tail(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p <= 0.5) {
            return Err(domain(format!("tail probability must lie in (0, 1/2], got {p}")));
        }
        if p == 0.5 {
            return Ok(0.0);
        }
        Ok(match self.kind {
            NoiseKind::Gaussian => self.sigma * inverse_q(p),
            NoiseKind::Laplace => -self.laplace_scale() * (2.0 * p).ln(),
            NoiseKind::BoundedUniform => self.uniform_half_width() * (1.0 - 2.0 * p),
        })
    }

    /// `-ln f(0)`: the ground level of a bit with unit importance.
    pub(crate) fn log_inv_peak_density(&self) -> f64 {
        -self.density(0.0).ln()
    }

    /// `ln(f(0) / f(delta))`, the water depth above ground reached by `delta`.
    /// For Gaussian noise this is `delta^2 / (2 sigma^2)`.
    pub(crate) fn height(&self, delta: f64) -> f64 {
        match self.kind {
            NoiseKind::Gaussian => {
                let z = delta / self.sigma;
                0.5 * z * z
            }
            NoiseKind::Laplace => delta / self.laplace_scale(),
            NoiseKind::BoundedUniform => {
                if delta < self.uniform_half_width() {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Inverse of [`height`](Self::height). `None` when the density is not
    /// strictly decreasing, so the water depth does not pin down a swing.
    pub(crate) fn depth(&self, height: f64) -> Option<f64> {
        let h = height.max(0.0);
        match self.kind {
            NoiseKind::Gaussian => Some(self.sigma * (2.0 * h).sqrt()),
            NoiseKind::Laplace => Some(self.laplace_scale() * h),
            NoiseKind::BoundedUniform => None,
        }
    }

    pub(crate) fn supports_water_filling(&self) -> bool {
        self.depth(0.0).is_some()
    }
}

/// Standard normal upper-tail probability `Q(x) = erfc(x / sqrt 2) / 2`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Inverse of `Q` on `(0, 1/2)`. Safeguarded Newton on `ln Q(x) - ln p`.
fn inverse_q(p: f64) -> f64 {
    let target = p.ln();
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    while q_function(hi) > p {
        lo = hi;
        hi *= 2.0;
        if hi > 64.0 {
            break;
        }
    }
    // Asymptotic starting point for the upper tail, clamped into the bracket.
    let mut x = if p < 0.1 {
        let t = (-2.0 * (p * (2.0 * PI).sqrt()).ln()).sqrt();
        t - t.ln() / t
    } else {
        0.5 * (lo + hi)
    };
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let q = q_function(x);
        if q > p {
            lo = x;
        } else {
            hi = x;
        }
        let next = if q > 0.0 {
            // d/dx ln Q(x) = -phi(x) / Q(x)
            let g = q.ln() - target;
            let slope = -std_normal_pdf(x) / q;
            x - g / slope
        } else {
            f64::NAN
        };
        let next = if next.is_finite() && next > lo && next < hi {
            next
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.max(1.0) || hi - lo <= f64::EPSILON * hi {
            return next;
        }
        x = next;
    }
    x
}
