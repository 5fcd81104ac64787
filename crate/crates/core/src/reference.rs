//! Closed-form and semi-analytic benchmarks: Black-Scholes, and a Fourier
//! pricer for the classical square-root volatility model that the one-factor
//! approximation reduces to.

use crate::error::{Error, Result};
use crate::kernel::{adaptive_simpson, KernelApprox};
use crate::model::ModelParams;
use nalgebra::Complex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionSide {
    Call,
    Put,
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Undiscounted Black-Scholes price on the forward.
pub fn black_scholes_price(forward: f64, strike: f64, t: f64, vol: f64, side: OptionSide) -> f64 {
    let intrinsic = match side {
        OptionSide::Call => (forward - strike).max(0.0),
        OptionSide::Put => (strike - forward).max(0.0),
    };
    if vol <= 0.0 || t <= 0.0 || forward <= 0.0 || strike <= 0.0 {
        return intrinsic;
    }
    let sq = vol * t.sqrt();
    let d1 = (forward / strike).ln() / sq + 0.5 * sq;
    let d2 = d1 - sq;
    match side {
        OptionSide::Call => forward * norm_cdf(d1) - strike * norm_cdf(d2),
        OptionSide::Put => strike * norm_cdf(-d2) - forward * norm_cdf(-d1),
    }
}

/// Classical square-root model parameters. `kappa_theta` is the product of
/// the mean-reversion speed and the long-run variance level.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HestonEquivalent {
    pub kappa: f64,
    pub kappa_theta: f64,
    pub sigma: f64,
    pub rho: f64,
    pub v0: f64,
}

impl HestonEquivalent {
    /// For a single factor (x1, w1) the total variance V = w1 V^1 follows
    /// dV = (x1 w1 v0^1 + w1 theta - (x1 + w1 lambda) V) dt + w1 nu sqrt(V) dW,
    /// i.e. a square-root diffusion with the parameters returned here.
    pub fn from_markovian(model: &ModelParams, kernel: &KernelApprox) -> Result<Self> {
        if kernel.dim() != 1 {
            return Err(Error::Domain(format!(
                "square-root reduction needs one factor, got {}",
                kernel.dim()
            )));
        }
        let x1 = kernel.nodes()[0];
        let w1 = kernel.weights()[0];
        Ok(HestonEquivalent {
            kappa: x1 + w1 * model.lambda,
            kappa_theta: x1 * w1 * kernel.v0_split()[0] + w1 * model.theta,
            sigma: w1 * model.nu,
            rho: model.rho,
            v0: kernel.v0_total(),
        })
    }

    /// Characteristic function of log(S_T / F) under the martingale dynamics.
    fn cf(&self, z: Complex<f64>, t: f64) -> Complex<f64> {
        let i = Complex::new(0.0, 1.0);
        let s2 = self.sigma * self.sigma;
        let xi = Complex::new(self.kappa, 0.0) - i * self.rho * self.sigma * z;
        let d = (xi * xi + s2 * (z * z + i * z)).sqrt();
        let g = (xi - d) / (xi + d);
        let e = (-d * t).exp();
        let one = Complex::new(1.0, 0.0);
        let dd = (xi - d) / s2 * (one - e) / (one - g * e);
        let cc = self.kappa_theta / s2 * ((xi - d) * t - 2.0 * ((one - g * e) / (one - g)).ln());
        (cc + dd * self.v0).exp()
    }
}

/// Undiscounted call on the forward via the strip integral
/// C = F - sqrt(FK)/pi * int_0^inf Re[e^{iuk} cf(u - i/2)] / (u^2 + 1/4) du
/// with k = log(F/K); panels are added until their contribution vanishes.
pub fn heston_call_fourier(p: &HestonEquivalent, forward: f64, strike: f64, t: f64) -> Result<f64> {
    if forward <= 0.0 || strike <= 0.0 || t <= 0.0 {
        return Err(Error::Domain("forward, strike and maturity must be positive".into()));
    }
    let k = (forward / strike).ln();
    let half_i = Complex::new(0.0, -0.5);
    let integrand = |u: f64| {
        let z = Complex::new(u, 0.0) + half_i;
        ((Complex::new(0.0, u * k)).exp() * p.cf(z, t)).re / (u * u + 0.25)
    };
    let mut total = 0.0;
    let mut a = 0.0;
    let width = 10.0;
    for _ in 0..200 {
        let piece = adaptive_simpson(&integrand, a, a + width, 1e-11, 40)?;
        total += piece;
        a += width;
        if piece.abs() < 1e-13 && a > 30.0 {
            break;
        }
    }
    let price = forward - (forward * strike).sqrt() / std::f64::consts::PI * total;
    if !price.is_finite() {
        return Err(Error::Numerical("Fourier price is not finite".into()));
    }
    Ok(price)
}

pub fn heston_price(
    p: &HestonEquivalent,
    forward: f64,
    strike: f64,
    t: f64,
    side: OptionSide,
) -> Result<f64> {
    let call = heston_call_fourier(p, forward, strike, t)?;
    Ok(match side {
        OptionSide::Call => call,
        OptionSide::Put => call - (forward - strike),
    })
}
