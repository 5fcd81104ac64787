//! Weak second-order volatility propagator: exact drift step, moment-matched
//! trinomial stochastic step, and their Strang composition.

use crate::error::{Error, Result};
use crate::kernel::KernelApprox;
use crate::smallmat::{self, DriftMatrix};
use std::sync::atomic::{AtomicU64, Ordering};

/// Maximum factor dimension supported by the stack scratch buffers.
pub const MAX_FACTORS: usize = 16;

/// Shape constant of the three-point law.
const A_SHAPE: f64 = (6.0 + 1.7320508075688772) / 4.0; // (6 + sqrt(3)) / 4

/// Three-atom discrete law matching the first three moments of the
/// driftless square-root diffusion transition.
#[derive(Debug, Clone, Copy)]
pub struct TrinomialLaw {
    /// Atoms x1 <= x2 <= x3, all non-negative.
    pub atoms: [f64; 3],
    /// Probabilities summing to one.
    pub probs: [f64; 3],
}

impl TrinomialLaw {
    /// Inverse-CDF sampling from a single uniform.
    #[inline]
    pub fn sample(&self, u: f64) -> f64 {
        if u < self.probs[0] {
            self.atoms[0]
        } else if u < self.probs[0] + self.probs[1] {
            self.atoms[1]
        } else {
            self.atoms[2]
        }
    }
}

/// The moment-matched three-point law for the scalar diffusion
/// dY = nu_eff sqrt(Y) dW started at x, over an interval with z = nu_eff^2 h.
///
/// Matches m1 = x, m2 = x^2 + xz, m3 = x^3 + 3x^2 z + (3/2) x z^2 exactly.
pub fn trinomial_law(x: f64, z: f64) -> Result<TrinomialLaw> {
    if x < 0.0 || z < 0.0 {
        return Err(Error::Domain(format!(
            "trinomial law requires x >= 0 and z >= 0, got x = {x}, z = {z}"
        )));
    }
    // Degenerate cases: point mass when the step variance vanishes, absorption
    // at zero when the state is (numerically) zero.
    if x <= 1e-14 {
        return Ok(TrinomialLaw {
            atoms: [0.0; 3],
            probs: [1.0, 0.0, 0.0],
        });
    }
    if z <= 1e-14 * x.max(1.0) {
        return Ok(TrinomialLaw {
            atoms: [x; 3],
            probs: [1.0, 0.0, 0.0],
        });
    }

    // Work with the centered atoms d_i = x_i - x and the corresponding
    // centered moments (0, xz, 1.5 x z^2): the Lagrange quotients then scale
    // purely in z and stay well conditioned even when z << x, whereas the raw
    // moments cancel catastrophically in that regime.
    let s = ((3.0 * x + A_SHAPE * A_SHAPE * z) * z).sqrt();
    let d1 = A_SHAPE * z - s;
    let d2 = (A_SHAPE - 0.75) * z;
    let d3 = A_SHAPE * z + s;
    let c2 = x * z;
    let c3 = 1.5 * x * z * z;
    let x1 = x + d1;
    let x2 = x + d2;
    let x3 = x + d3;

    let p1 = (c3 - c2 * (d2 + d3)) / (d1 * (d3 - d1) * (d2 - d1));
    let p2 = (c3 - c2 * (d1 + d3)) / (d2 * (d3 - d2) * (d1 - d2));
    let p3 = (c3 - c2 * (d1 + d2)) / (d3 * (d1 - d3) * (d2 - d3));

    let sum = p1 + p2 + p3;
    if (sum - 1.0).abs() > 1e-9 || p1 < -1e-9 || p2 < -1e-9 || p3 < -1e-9 {
        return Err(Error::Numerical(format!(
            "trinomial probabilities ({p1}, {p2}, {p3}) violate sum/positivity at x = {x}, z = {z}"
        )));
    }
    let probs = [p1.max(0.0) / sum, p2.max(0.0) / sum, p3.max(0.0) / sum];
    Ok(TrinomialLaw {
        atoms: [x1.max(0.0), x2, x3],
        probs,
    })
}

/// Precomputed weak second-order propagator for the factor process over a
/// fixed step size h: cached half-step drift maps plus the trinomial step.
#[derive(Debug)]
pub struct VolPropagator {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    theta: f64,
    lambda: f64,
    h: f64,
    /// exp(A h/2), row-major N x N.
    e_half: Vec<f64>,
    /// (h/2) phi_1(A h/2) b.
    f_half: Vec<f64>,
    wbar: f64,
    /// z = nu^2 wbar^2 h for the full-step trinomial law.
    z: f64,
    clamp_events: AtomicU64,
}

impl VolPropagator {
    pub fn new(kernel: &KernelApprox, theta: f64, lambda: f64, nu: f64, h: f64) -> Result<Self> {
        let n = kernel.dim();
        if n > MAX_FACTORS {
            return Err(Error::Domain(format!(
                "factor dimension {n} exceeds supported maximum {MAX_FACTORS}"
            )));
        }
        if h < 0.0 {
            return Err(Error::Domain(format!("step size {h} must be >= 0")));
        }
        let dm = DriftMatrix::new(lambda, theta, kernel);
        let e = smallmat::mat_exp(&dm.a, 0.5 * h)?;
        let p = smallmat::phi1(&dm.a, 0.5 * h)?;
        let f = &p * &dm.b;
        let mut e_half = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                e_half[i * n + j] = e[(i, j)];
            }
        }
        let wbar = kernel.weight_sum();
        Ok(VolPropagator {
            nodes: kernel.nodes().to_vec(),
            weights: kernel.weights().to_vec(),
            theta,
            lambda,
            h,
            e_half,
            f_half: f.iter().copied().collect(),
            wbar,
            z: nu * nu * wbar * wbar * h,
            clamp_events: AtomicU64::new(0),
        })
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight_sum(&self) -> f64 {
        self.wbar
    }

    pub fn step_variance(&self) -> f64 {
        self.z
    }

    /// Number of clamp events (negative total variance encountered) so far.
    pub fn clamp_count(&self) -> u64 {
        self.clamp_events.load(Ordering::Relaxed)
    }

    #[inline]
    pub fn total_variance(&self, v: &[f64]) -> f64 {
        self.weights.iter().zip(v).map(|(w, vi)| w * vi).sum()
    }

    /// Exact solution of the linear drift ODE over an arbitrary step:
    /// e^(Ah) v + h phi_1(Ah) b. Recomputes the propagator; the cached
    /// half-step maps are used by `cir_step`.
    pub fn drift_step(&self, kernel: &KernelApprox, v: &[f64], h: f64) -> Result<Vec<f64>> {
        let dm = DriftMatrix::new(self.lambda, self.theta, kernel);
        let e = smallmat::mat_exp(&dm.a, h)?;
        let p = smallmat::phi1(&dm.a, h)?;
        let vin = nalgebra::DVector::from_column_slice(v);
        let out = &e * vin + p * &dm.b;
        Ok(out.iter().copied().collect())
    }

    /// Apply the cached half-step drift map in place: v <- e^(Ah/2) v + (h/2) phi1 b.
    #[inline]
    pub fn drift_half(&self, v: &mut [f64]) {
        let n = self.nodes.len();
        let mut out = [0.0_f64; MAX_FACTORS];
        for i in 0..n {
            let row = &self.e_half[i * n..(i + 1) * n];
            let mut acc = self.f_half[i];
            for j in 0..n {
                acc += row[j] * v[j];
            }
            out[i] = acc;
        }
        v[..n].copy_from_slice(&out[..n]);
    }

    /// Moment-matched stochastic step over the full step h: samples the
    /// trinomial total variance and spreads the increment equally across the
    /// factors, so that dot(w, result) equals the sampled value.
    #[inline]
    pub fn stochastic_step(&self, v: &mut [f64], u: f64) -> Result<()> {
        let dot = self.total_variance(v);
        let x = if dot < 0.0 {
            self.clamp_events.fetch_add(1, Ordering::Relaxed);
            0.0
        } else {
            dot
        };
        let law = trinomial_law(x, self.z)?;
        let y_hat = law.sample(u);
        let q = (y_hat - dot) / self.wbar;
        for vi in v.iter_mut() {
            *vi += q;
        }
        Ok(())
    }

    /// One weak second-order step of the factor process: Strang composition
    /// drift(h/2) . stochastic(h) . drift(h/2).
    #[inline]
    pub fn cir_step(&self, v: &mut [f64], u: f64) -> Result<()> {
        self.drift_half(v);
        self.stochastic_step(v, u)?;
        self.drift_half(v);
        Ok(())
    }
}
