use serde::{Deserialize, Serialize};

/// Market parameters of the rough Heston model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModelParams {
    /// Long-run variance level coefficient.
    pub theta: f64,
    /// Mean-reversion speed coefficient.
    pub lambda: f64,
    /// Volatility of volatility.
    pub nu: f64,
    /// Correlation between the stock and variance Brownian motions.
    pub rho: f64,
    /// Hurst parameter of the fractional kernel, in (-1/2, 1/2].
    pub hurst: f64,
    /// Initial total variance.
    pub v0: f64,
    /// Initial stock price.
    pub s0: f64,
    /// Continuously compounded interest rate.
    pub r: f64,
    /// Time horizon of the simulation.
    pub maturity: f64,
}

impl ModelParams {
    /// The standard parameter set used throughout the experiments:
    /// lambda = 0.3, nu = 0.3, theta = 0.02, V0 = 0.02, rho = -0.7, S0 = 1.
    pub fn standard() -> Self {
        ModelParams {
            theta: 0.02,
            lambda: 0.3,
            nu: 0.3,
            rho: -0.7,
            hurst: 0.1,
            v0: 0.02,
            s0: 1.0,
            r: 0.0,
            maturity: 1.0,
        }
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::standard()
    }
}
