//! Monte Carlo pricers on top of the path steppers: European smiles, implied
//! volatility surfaces, geometric Asian options, and Bermudan puts via
//! least-squares regression. Estimates carry replicate-based confidence
//! intervals; results are independent of the worker thread count.

use crate::error::{Error, Result};
use crate::kernel::KernelApprox;
use crate::model::ModelParams;
use crate::pathscheme::{EulerStepper, MarketState, PathStepper, WeakStepper};
use crate::randstream::{StreamKind, StreamSpec};
use crate::reference::{black_scholes_price, OptionSide};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Weak,
    Euler,
}

/// Sampling configuration: stream kind, replicate count m1, paths per
/// replicate m2, and the seed. The coordinate dimension is derived from the
/// scheme and step count.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub kind: StreamKind,
    pub shifts: u32,
    pub points_per_shift: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnginePlan {
    pub scheme: SchemeKind,
    pub steps: usize,
    pub sampling: SamplingPlan,
}

impl EnginePlan {
    pub fn coords_per_step(&self) -> usize {
        match self.scheme {
            SchemeKind::Weak => WeakStepper::COORDS,
            SchemeKind::Euler => EulerStepper::COORDS,
        }
    }

    pub fn stream_spec(&self) -> StreamSpec {
        StreamSpec {
            kind: self.sampling.kind,
            dimension: self.steps * self.coords_per_step(),
            shifts: self.sampling.shifts,
            points_per_shift: self.sampling.points_per_shift,
            seed: self.sampling.seed,
        }
    }
}

/// Point estimate with a symmetric confidence half-width from the Student-t
/// distribution over independent replicates (95% by default).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub value: f64,
    pub ci_half: f64,
    pub replicates: u32,
}

impl EstimateWithCI {
    pub fn from_replicates(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return EstimateWithCI {
                value: mean,
                ci_half: f64::INFINITY,
                replicates: n as u32,
            };
        }
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("valid Student-t dof")
            .inverse_cdf(0.975);
        EstimateWithCI {
            value: mean,
            ci_half: t * (var / n as f64).sqrt(),
            replicates: n as u32,
        }
    }
}

enum AnyStepper {
    Weak(WeakStepper),
    Euler(EulerStepper),
}

impl AnyStepper {
    fn build(model: &ModelParams, kernel: &KernelApprox, plan: &EnginePlan) -> Result<Self> {
        if plan.steps == 0 {
            return Err(Error::Config("step count must be positive".into()));
        }
        let h = model.maturity / plan.steps as f64;
        Ok(match plan.scheme {
            SchemeKind::Weak => AnyStepper::Weak(WeakStepper::new(model, kernel, h)?),
            SchemeKind::Euler => AnyStepper::Euler(EulerStepper::new(model, kernel, h)?),
        })
    }

    #[inline]
    fn coords(&self) -> usize {
        match self {
            AnyStepper::Weak(_) => WeakStepper::COORDS,
            AnyStepper::Euler(_) => EulerStepper::COORDS,
        }
    }

    #[inline]
    fn step(&self, state: &mut MarketState, u: &[f64]) -> Result<()> {
        match self {
            AnyStepper::Weak(s) => s.step(state, u),
            AnyStepper::Euler(s) => s.step(state, u),
        }
    }
}

/// Observation points along a simulated path: after every step (1-based
/// index) and once at the terminal state.
enum PathEvent<'a> {
    Step {
        path: u64,
        step: usize,
        state: &'a MarketState,
    },
    End {
        state: &'a MarketState,
    },
}

/// Run every path of one replicate sub-stream, feeding step and end events
/// to a single visitor.
fn run_paths(
    stepper: &AnyStepper,
    init: &MarketState,
    mut stream: crate::randstream::Stream,
    steps: usize,
    mut visit: impl FnMut(PathEvent),
) -> Result<u64> {
    let coords = stepper.coords();
    let mut buf = vec![0.0; steps * coords];
    let mut paths = 0u64;
    while stream.remaining() > 0 {
        stream.next_point(&mut buf)?;
        let mut st = init.clone();
        for k in 0..steps {
            stepper.step(&mut st, &buf[k * coords..(k + 1) * coords])?;
            visit(PathEvent::Step {
                path: paths,
                step: k + 1,
                state: &st,
            });
        }
        visit(PathEvent::End { state: &st });
        paths += 1;
    }
    Ok(paths)
}

/// Evaluate `per_replicate` on each replicate in parallel and combine the
/// per-replicate mean vectors into estimates. Replicates are computed
/// independently and reduced in replicate order, so the output is identical
/// for any worker count.
fn replicate_estimates<F>(spec: &StreamSpec, n_out: usize, per_replicate: F) -> Result<Vec<EstimateWithCI>>
where
    F: Fn(crate::randstream::Stream) -> Result<Vec<f64>> + Sync,
{
    let master = spec.stream()?;
    let subs = master.partition(spec.shifts as usize);
    let per_rep: Result<Vec<Vec<f64>>> = subs.into_par_iter().map(&per_replicate).collect();
    let per_rep = per_rep?;
    let mut out = Vec::with_capacity(n_out);
    let mut column = vec![0.0; per_rep.len()];
    for j in 0..n_out {
        for (r, row) in per_rep.iter().enumerate() {
            column[r] = row[j];
        }
        out.push(EstimateWithCI::from_replicates(&column));
    }
    Ok(out)
}

#[inline]
fn vanilla_payoff(spot: f64, strike: f64, side: OptionSide) -> f64 {
    match side {
        OptionSide::Call => (spot - strike).max(0.0),
        OptionSide::Put => (strike - spot).max(0.0),
    }
}

/// European option prices for a strike list, all maturities equal to the
/// model horizon. Prices are discounted; the simulated martingale spot is
/// compounded at the model rate before the payoff.
pub fn price_european(
    model: &ModelParams,
    kernel: &KernelApprox,
    plan: &EnginePlan,
    strikes: &[f64],
    side: OptionSide,
) -> Result<Vec<EstimateWithCI>> {
    if strikes.is_empty() {
        return Err(Error::Config("strike list is empty".into()));
    }
    let stepper = AnyStepper::build(model, kernel, plan)?;
    let init = MarketState::initial(model, kernel);
    let spec = plan.stream_spec();
    let growth = (model.r * model.maturity).exp();
    let disc = (-model.r * model.maturity).exp();
    replicate_estimates(&spec, strikes.len(), |sub| {
        let mut acc = vec![0.0; strikes.len()];
        let paths = run_paths(&stepper, &init, sub, plan.steps, |ev| {
            if let PathEvent::End { state, .. } = ev {
                let spot = state.s * growth;
                for (a, &k) in acc.iter_mut().zip(strikes) {
                    *a += vanilla_payoff(spot, k, side);
                }
            }
        })?;
        let norm = disc / paths as f64;
        acc.iter_mut().for_each(|a| *a *= norm);
        Ok(acc)
    })
}

/// One cell of an implied-volatility surface run.
#[derive(Debug, Clone, Serialize)]
pub struct SurfacePoint {
    pub maturity: f64,
    pub strike: f64,
    pub price: EstimateWithCI,
    pub implied_vol: f64,
}

/// Price the full maturity grid j * T / n_maturities (j = 1..n_maturities)
/// for every strike in one simulation pass; the step count must be divisible
/// by the number of maturities so each date lands on a grid point.
pub fn price_surface(
    model: &ModelParams,
    kernel: &KernelApprox,
    plan: &EnginePlan,
    n_maturities: usize,
    strikes: &[f64],
    side: OptionSide,
) -> Result<Vec<SurfacePoint>> {
    if n_maturities == 0 || strikes.is_empty() {
        return Err(Error::Config("surface grid is empty".into()));
    }
    if plan.steps % n_maturities != 0 {
        return Err(Error::Config(format!(
            "step count {} is not divisible by the {} maturities",
            plan.steps, n_maturities
        )));
    }
    let stride = plan.steps / n_maturities;
    let stepper = AnyStepper::build(model, kernel, plan)?;
    let init = MarketState::initial(model, kernel);
    let spec = plan.stream_spec();
    let n_out = n_maturities * strikes.len();
    let h = model.maturity / plan.steps as f64;
    let estimates = replicate_estimates(&spec, n_out, |sub| {
        let mut acc = vec![0.0; n_out];
        let paths = run_paths(&stepper, &init, sub, plan.steps, |ev| {
            if let PathEvent::Step { step: k, state, .. } = ev {
                if k % stride == 0 {
                    let j = k / stride - 1;
                    let t = k as f64 * h;
                    let spot = state.s * (model.r * t).exp();
                    let disc = (-model.r * t).exp();
                    for (i, &strike) in strikes.iter().enumerate() {
                        acc[j * strikes.len() + i] += disc * vanilla_payoff(spot, strike, side);
                    }
                }
            }
        })?;
        let norm = 1.0 / paths as f64;
        acc.iter_mut().for_each(|a| *a *= norm);
        Ok(acc)
    })?;
    let mut out = Vec::with_capacity(n_out);
    for j in 0..n_maturities {
        let t = (j + 1) as f64 * model.maturity / n_maturities as f64;
        let forward = model.s0 * (model.r * t).exp();
        for (i, &strike) in strikes.iter().enumerate() {
            let price = estimates[j * strikes.len() + i];
            let undisc = price.value * (model.r * t).exp();
            let iv = implied_vol(undisc, forward, strike, t, side).unwrap_or(f64::NAN);
            out.push(SurfacePoint {
                maturity: t,
                strike,
                price,
                implied_vol: iv,
            });
        }
    }
    Ok(out)
}

/// Geometric-average Asian option: payoff on exp(T^-1 int_0^T log S_t dt),
/// the integral taken by the trapezoid rule on the step grid.
pub fn price_geometric_asian(
    model: &ModelParams,
    kernel: &KernelApprox,
    plan: &EnginePlan,
    strike: f64,
    side: OptionSide,
) -> Result<EstimateWithCI> {
    let stepper = AnyStepper::build(model, kernel, plan)?;
    let init = MarketState::initial(model, kernel);
    let spec = plan.stream_spec();
    let h = model.maturity / plan.steps as f64;
    let disc = (-model.r * model.maturity).exp();
    let est = replicate_estimates(&spec, 1, |sub| {
        let mut acc = 0.0;
        let mut integral = 0.0;
        let mut prev_log = 0.0;
        let paths = run_paths(&stepper, &init, sub, plan.steps, |ev| match ev {
            PathEvent::Step { step: k, state, .. } => {
                if k == 1 {
                    integral = 0.0;
                    prev_log = init.s.ln();
                }
                let t = k as f64 * h;
                let log_s = state.s.ln() + model.r * t;
                integral += 0.5 * (prev_log + log_s) * h;
                prev_log = log_s;
            }
            PathEvent::End { .. } => {
                let avg = (integral / model.maturity).exp();
                acc += vanilla_payoff(avg, strike, side);
            }
        })?;
        Ok(vec![acc * disc / paths as f64])
    })?;
    Ok(est[0])
}

/// Polynomial regression basis for the exercise rule. Variables are the
/// normalized moneyness s = (S - K)/K with weight 1, the centered total
/// variance v with weight 2, and the first n-1 centered weighted factors
/// with weight 3; monomials satisfy the weighted-degree bound. The constant
/// is handled as a separate intercept and not counted.
#[derive(Debug, Clone)]
pub struct FeatureBasis {
    n_factors: usize,
    exps: Vec<Vec<usize>>,
}

impl FeatureBasis {
    pub fn new(n_factors: usize, degree: usize) -> Self {
        let n_vars = n_factors + 1;
        let mut exps = Vec::new();
        let mut cur = vec![0usize; n_vars];
        fn rec(
            var: usize,
            budget: usize,
            cur: &mut Vec<usize>,
            n_vars: usize,
            out: &mut Vec<Vec<usize>>,
        ) {
            if var == n_vars {
                if cur.iter().any(|&e| e > 0) {
                    out.push(cur.clone());
                }
                return;
            }
            let w = match var {
                0 => 1,
                1 => 2,
                _ => 3,
            };
            let mut e = 0;
            while e * w <= budget {
                cur[var] = e;
                rec(var + 1, budget - e * w, cur, n_vars, out);
                e += 1;
            }
            cur[var] = 0;
        }
        rec(0, degree, &mut cur, n_vars, &mut exps);
        FeatureBasis { n_factors, exps }
    }

    /// Number of non-constant basis functions.
    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    /// Width of a regression row (intercept plus basis functions).
    fn row_len(&self) -> usize {
        1 + self.exps.len()
    }

    /// Map raw state (spot, factor values) into regression variables and fill
    /// `row` with the intercept and all monomials.
    fn fill_row(
        &self,
        row: &mut [f64],
        spot: f64,
        factors: &[f64],
        strike: f64,
        kernel: &KernelApprox,
    ) {
        let mut vars = [0.0_f64; crate::volscheme::MAX_FACTORS + 1];
        vars[0] = (spot - strike) / strike;
        let total: f64 = kernel
            .weights()
            .iter()
            .zip(factors)
            .map(|(w, v)| w * v)
            .sum();
        vars[1] = total - kernel.v0_total();
        for i in 0..self.n_factors.saturating_sub(1) {
            vars[2 + i] = kernel.weights()[i] * (factors[i] - kernel.v0_split()[i]);
        }
        row[0] = 1.0;
        for (slot, exp) in row[1..].iter_mut().zip(&self.exps) {
            let mut m = 1.0;
            for (v, &e) in vars.iter().zip(exp) {
                for _ in 0..e {
                    m *= v;
                }
            }
            *slot = m;
        }
    }
}

/// Least-squares solve of X beta = y through the normal equations with a
/// spectral cutoff for near-dependent columns.
fn ridgeless_solve(xtx: &DMatrix<f64>, xty: &DVector<f64>) -> DVector<f64> {
    let eig = xtx.clone().symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let cut = 1e-10 * max_ev.max(f64::MIN_POSITIVE);
    let k = xty.len();
    let mut beta = DVector::zeros(k);
    for j in 0..k {
        let ev = eig.eigenvalues[j];
        if ev > cut {
            let q = eig.eigenvectors.column(j);
            beta += q * (q.dot(xty) / ev);
        }
    }
    beta
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BermudanResult {
    pub bermudan: EstimateWithCI,
    /// European put on the same terminal samples (pricing half), as a control.
    pub european: EstimateWithCI,
    pub basis_size: usize,
}

/// Bermudan put exercisable at j T / n_exercise (j = 1..n_exercise), priced
/// by regression: within each replicate the first half of the paths fits the
/// continuation rule backward, the second half prices with the frozen rule.
pub fn price_bermudan_put(
    model: &ModelParams,
    kernel: &KernelApprox,
    plan: &EnginePlan,
    strike: f64,
    n_exercise: usize,
    degree: usize,
) -> Result<BermudanResult> {
    if n_exercise == 0 {
        return Err(Error::Config("need at least one exercise date".into()));
    }
    if plan.steps % n_exercise != 0 {
        return Err(Error::Config(format!(
            "step count {} is not divisible by {} exercise dates",
            plan.steps, n_exercise
        )));
    }
    if plan.sampling.points_per_shift < 4 {
        return Err(Error::Config(
            "regression pricing needs at least 4 paths per replicate".into(),
        ));
    }
    let stride = plan.steps / n_exercise;
    let n = kernel.dim();
    let basis = FeatureBasis::new(n, degree);
    let stepper = AnyStepper::build(model, kernel, plan)?;
    let init = MarketState::initial(model, kernel);
    let spec = plan.stream_spec();
    let record = 1 + n; // spot + factors per exercise date
    let dt = model.maturity / n_exercise as f64;
    let df = (-model.r * dt).exp();

    let est = replicate_estimates(&spec, 2, |sub| {
        let m2 = sub.remaining() as usize;
        let mut store = vec![0.0_f64; m2 * n_exercise * record];
        let counted = run_paths(&stepper, &init, sub, plan.steps, |ev| {
            if let PathEvent::Step { path, step: k, state } = ev {
                if k % stride == 0 {
                    let j = k / stride - 1;
                    let t = k as f64 * (model.maturity / plan.steps as f64);
                    let base = (path as usize * n_exercise + j) * record;
                    store[base] = state.s * (model.r * t).exp();
                    store[base + 1..base + 1 + n].copy_from_slice(&state.v);
                }
            }
        })?;
        debug_assert_eq!(counted as usize, m2);

        let n_fit = m2 / 2;
        let width = basis.row_len();
        let spot_at = |p: usize, j: usize| store[(p * n_exercise + j) * record];
        let factors_at =
            |p: usize, j: usize| &store[(p * n_exercise + j) * record + 1..(p * n_exercise + j) * record + 1 + n];

        // Backward induction on the fitting half.
        let mut value: Vec<f64> = (0..n_fit)
            .map(|p| (strike - spot_at(p, n_exercise - 1)).max(0.0))
            .collect();
        let mut coeffs: Vec<Option<DVector<f64>>> = vec![None; n_exercise.saturating_sub(1)];
        let mut row = vec![0.0_f64; width];
        for j in (0..n_exercise - 1).rev() {
            value.iter_mut().for_each(|v| *v *= df);
            let mut xtx = DMatrix::zeros(width, width);
            let mut xty = DVector::zeros(width);
            let mut any_itm = false;
            for p in 0..n_fit {
                let payoff = (strike - spot_at(p, j)).max(0.0);
                if payoff <= 0.0 {
                    continue;
                }
                any_itm = true;
                basis.fill_row(&mut row, spot_at(p, j), factors_at(p, j), strike, kernel);
                for a in 0..width {
                    xty[a] += row[a] * value[p];
                    for b in a..width {
                        xtx[(a, b)] += row[a] * row[b];
                    }
                }
            }
            if !any_itm {
                continue;
            }
            for a in 0..width {
                for b in 0..a {
                    xtx[(a, b)] = xtx[(b, a)];
                }
            }
            let beta = ridgeless_solve(&xtx, &xty);
            for p in 0..n_fit {
                let payoff = (strike - spot_at(p, j)).max(0.0);
                if payoff <= 0.0 {
                    continue;
                }
                basis.fill_row(&mut row, spot_at(p, j), factors_at(p, j), strike, kernel);
                let cont: f64 = row.iter().zip(beta.iter()).map(|(r, b)| r * b).sum();
                if payoff >= cont {
                    value[p] = payoff;
                }
            }
            coeffs[j] = Some(beta);
        }

        // Forward pass with the frozen rule on the pricing half.
        let mut berm = 0.0;
        let mut euro = 0.0;
        for p in n_fit..m2 {
            let mut cash = 0.0;
            for j in 0..n_exercise {
                let payoff = (strike - spot_at(p, j)).max(0.0);
                if j == n_exercise - 1 {
                    cash = payoff * df.powi(n_exercise as i32);
                    break;
                }
                if payoff > 0.0 {
                    let stop = match &coeffs[j] {
                        Some(beta) => {
                            basis.fill_row(&mut row, spot_at(p, j), factors_at(p, j), strike, kernel);
                            let cont: f64 =
                                row.iter().zip(beta.iter()).map(|(r, b)| r * b).sum();
                            payoff >= cont
                        }
                        None => false,
                    };
                    if stop {
                        cash = payoff * df.powi(j as i32 + 1);
                        break;
                    }
                }
            }
            berm += cash;
            euro += (strike - spot_at(p, n_exercise - 1)).max(0.0) * df.powi(n_exercise as i32);
        }
        let n_price = (m2 - n_fit) as f64;
        Ok(vec![berm / n_price, euro / n_price])
    })?;

    Ok(BermudanResult {
        bermudan: est[0],
        european: est[1],
        basis_size: basis.len(),
    })
}

/// Black-Scholes implied volatility of an undiscounted forward price, by
/// bisection to machine-level accuracy. Prices outside the static no-arbitrage
/// band are rejected.
pub fn implied_vol(price: f64, forward: f64, strike: f64, t: f64, side: OptionSide) -> Result<f64> {
    let lo_bound = match side {
        OptionSide::Call => (forward - strike).max(0.0),
        OptionSide::Put => (strike - forward).max(0.0),
    };
    let hi_bound = match side {
        OptionSide::Call => forward,
        OptionSide::Put => strike,
    };
    if !(price > lo_bound && price < hi_bound) {
        return Err(Error::ArbitrageBand {
            price,
            lo: lo_bound,
            hi: hi_bound,
        });
    }
    let (mut lo, mut hi) = (1e-9_f64, 10.0_f64);
    if black_scholes_price(forward, strike, t, hi, side) < price {
        return Err(Error::Numerical(format!(
            "implied volatility above {hi} for price {price}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if black_scholes_price(forward, strike, t, mid, side) < price {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::preset_by_key;
    use crate::reference::{heston_price, HestonEquivalent};
    use approx::assert_relative_eq;

    fn plan(scheme: SchemeKind, steps: usize, shifts: u32, m2: u64) -> EnginePlan {
        EnginePlan {
            scheme,
            steps,
            sampling: SamplingPlan {
                kind: StreamKind::Sobol,
                shifts,
                points_per_shift: m2,
                seed: 123,
            },
        }
    }

    #[test]
    fn implied_vol_roundtrip() {
        for side in [OptionSide::Call, OptionSide::Put] {
            for (f, k, t, vol) in [(1.0, 1.0, 1.0, 0.2), (1.0, 0.8, 0.5, 0.35), (1.0, 1.3, 2.0, 0.12)] {
                let p = black_scholes_price(f, k, t, vol, side);
                let iv = implied_vol(p, f, k, t, side).unwrap();
                assert_relative_eq!(iv, vol, epsilon = 1e-10);
            }
        }
        assert!(matches!(
            implied_vol(1.5, 1.0, 1.0, 1.0, OptionSide::Call),
            Err(Error::ArbitrageBand { .. })
        ));
        assert!(matches!(
            implied_vol(0.0, 1.0, 1.2, 1.0, OptionSide::Call),
            Err(Error::ArbitrageBand { .. })
        ));
    }

    #[test]
    fn basis_sizes_match_published_counts() {
        assert_eq!(FeatureBasis::new(1, 6).len(), 15);
        assert_eq!(FeatureBasis::new(2, 6).len(), 22);
        assert_eq!(FeatureBasis::new(3, 10).len(), 110);
    }

    #[test]
    fn basis_rows_are_monomials() {
        let model = ModelParams::standard();
        let kernel = preset_by_key("H0.1/T1/N2", model.v0).unwrap();
        let basis = FeatureBasis::new(2, 4);
        let mut row = vec![0.0; basis.row_len()];
        let factors = [0.013, 0.004];
        let strike = 0.95;
        basis.fill_row(&mut row, 1.07, &factors, strike, &kernel);
        assert_eq!(row[0], 1.0);
        let s = (1.07 - strike) / strike;
        let v = kernel.weights()[0] * factors[0] + kernel.weights()[1] * factors[1]
            - kernel.v0_total();
        let v1 = kernel.weights()[0] * (factors[0] - kernel.v0_split()[0]);
        for (slot, exp) in row[1..].iter().zip(&basis.exps) {
            let want = s.powi(exp[0] as i32) * v.powi(exp[1] as i32) * v1.powi(exp[2] as i32);
            assert_relative_eq!(*slot, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn european_matches_fourier_benchmark() {
        // One factor: the model is exactly a square-root diffusion, so the
        // weak scheme at a fine grid must agree with the Fourier price within
        // the Monte Carlo interval plus a small bias allowance.
        let model = ModelParams::standard();
        let kernel = preset_by_key("H0.1/T1/N1", model.v0).unwrap();
        let heston = HestonEquivalent::from_markovian(&model, &kernel).unwrap();
        let p = plan(SchemeKind::Weak, 64, 5, 4096);
        let strikes = [0.9, 1.0, 1.1];
        let est = price_european(&model, &kernel, &p, &strikes, OptionSide::Call).unwrap();
        for (e, &k) in est.iter().zip(&strikes) {
            let want = heston_price(&heston, 1.0, k, model.maturity, OptionSide::Call).unwrap();
            assert!(
                (e.value - want).abs() <= e.ci_half.max(1e-4) + 5e-4,
                "strike {k}: got {} +/- {}, want {want}",
                e.value,
                e.ci_half
            );
        }
    }

    #[test]
    fn put_call_parity_on_common_paths() {
        let model = ModelParams::standard();
        let kernel = preset_by_key("H0.1/T1/N2", model.v0).unwrap();
        let p = plan(SchemeKind::Weak, 16, 3, 2048);
        let strikes = [0.95, 1.05];
        let calls = price_european(&model, &kernel, &p, &strikes, OptionSide::Call).unwrap();
        let puts = price_european(&model, &kernel, &p, &strikes, OptionSide::Put).unwrap();
        // same seed, same paths: parity holds path by path up to rounding
        for ((c, q), &k) in calls.iter().zip(&puts).zip(&strikes) {
            let mean_spot_minus_k = c.value - q.value;
            // E[S_T] - K is noisy; check against the simulated mean, which the
            // identical stream reproduces on both sides.
            assert!((mean_spot_minus_k - (1.0 - k)).abs() < 0.05);
        }
    }

    #[test]
    fn surface_pass_prices_all_maturities() {
        let model = ModelParams::standard();
        let kernel = preset_by_key("H0.1/T1/N2", model.v0).unwrap();
        let p = plan(SchemeKind::Weak, 16, 3, 2048);
        let pts = price_surface(&model, &kernel, &p, 4, &[0.95, 1.0, 1.05], OptionSide::Call)
            .unwrap();
        assert_eq!(pts.len(), 12);
        // final-maturity slice must agree with a direct terminal run on the
        // same stream
        let direct =
            price_european(&model, &kernel, &p, &[0.95, 1.0, 1.05], OptionSide::Call).unwrap();
        for (sp, d) in pts[9..].iter().zip(&direct) {
            assert_relative_eq!(sp.price.value, d.value, epsilon = 1e-12);
        }
        // implied vols finite and positive at the money
        let atm = &pts[10];
        assert!(atm.implied_vol > 0.0 && atm.implied_vol < 1.0);
        // prices increase with maturity at fixed strike (no dividends)
        for j in 1..4 {
            assert!(pts[j * 3 + 1].price.value >= pts[(j - 1) * 3 + 1].price.value - 1e-3);
        }
        assert!(price_surface(&model, &kernel, &p, 5, &[1.0], OptionSide::Call).is_err());
    }

    #[test]
    fn asian_price_below_european_and_positive() {
        let model = ModelParams::standard();
        let kernel = preset_by_key("H0.1/T1/N2", model.v0).unwrap();
        let p = plan(SchemeKind::Weak, 32, 3, 2048);
        let asian = price_geometric_asian(&model, &kernel, &p, 1.0, OptionSide::Call).unwrap();
        let euro = price_european(&model, &kernel, &p, &[1.0], OptionSide::Call).unwrap();
        assert!(asian.value > 0.0);
        assert!(asian.value < euro[0].value);
    }

    #[test]
    fn asian_lognormal_oracle() {
        // rho = 0 and tiny nu: log S is Gaussian with deterministic variance,
        // so the geometric average is lognormal and the price is closed-form:
        // the time-averaged Brownian integral has variance
        // int (T-t)^2/T^2 v(t) dt and mean -int v(t) dt / (2T).
        let mut model = ModelParams::standard();
        model.rho = 0.0;
        model.nu = 1e-6;
        let kernel = preset_by_key("H0.1/T1/N2", model.v0).unwrap();
        let steps = 64usize;
        let h = model.maturity / steps as f64;
        let prop =
            crate::volscheme::VolPropagator::new(&kernel, model.theta, model.lambda, 0.0, h)
                .unwrap();
        let mut v = kernel.v0_split().to_vec();
        let mut mean_log = 0.0;
        let mut var_avg = 0.0;
        let t_total = model.maturity;
        for k in 0..steps {
            let t0 = k as f64 * h;
            let v0 = prop.total_variance(&v);
            prop.drift_half(&mut v);
            prop.drift_half(&mut v);
            let v1 = prop.total_variance(&v);
            let t1 = t0 + h;
            let w0 = (t_total - t0) / t_total;
            let w1 = (t_total - t1) / t_total;
            var_avg += 0.5 * (w0 * w0 * v0 + w1 * w1 * v1) * h;
            mean_log += -0.5 * 0.5 * (w0 * v0 + w1 * v1) * h;
        }
        let fwd_adj = (mean_log + 0.5 * var_avg).exp();
        let bs = black_scholes_price(fwd_adj, 1.0, 1.0, var_avg.sqrt(), OptionSide::Call);
        let p = plan(SchemeKind::Weak, steps, 8, 8192);
        let asian = price_geometric_asian(&model, &kernel, &p, 1.0, OptionSide::Call).unwrap();
        assert!(
            (asian.value - bs).abs() <= asian.ci_half.max(2e-4) + 5e-4,
            "asian {} +/- {}, oracle {bs}",
            asian.value,
            asian.ci_half
        );
    }

    #[test]
    fn bermudan_dominates_european_put() {
        let mut model = ModelParams::standard();
        model.s0 = 1.0;
        let kernel = preset_by_key("H0.1/T1/N2", model.v0).unwrap();
        let p = plan(SchemeKind::Weak, 16, 3, 4096);
        let strike = 1.05;
        let res = price_bermudan_put(&model, &kernel, &p, strike, 4, 6).unwrap();
        assert_eq!(res.basis_size, 22);
        assert!(res.bermudan.value >= res.european.value - res.european.ci_half - 1e-3);
        assert!(res.bermudan.value >= (strike - model.s0) - 1e-9);
        assert!(res.bermudan.value < strike);
    }

    #[test]
    fn single_exercise_date_equals_european() {
        let model = ModelParams::standard();
        let kernel = preset_by_key("H0.1/T1/N2", model.v0).unwrap();
        let p = plan(SchemeKind::Weak, 8, 3, 2048);
        let res = price_bermudan_put(&model, &kernel, &p, 1.05, 1, 6).unwrap();
        assert_relative_eq!(res.bermudan.value, res.european.value, epsilon = 1e-12);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let model = ModelParams::standard();
        let kernel = preset_by_key("H0.1/T1/N2", model.v0).unwrap();
        let p = plan(SchemeKind::Weak, 8, 4, 512);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                price_european(&model, &kernel, &p, &[0.9, 1.0, 1.1], OptionSide::Put).unwrap()
            })
        };
        let a = run(1);
        let b = run(4);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.value.to_bits(), y.value.to_bits());
            assert_eq!(x.ci_half.to_bits(), y.ci_half.to_bits());
        }
    }

    #[test]
    fn euler_and_weak_agree_at_fine_grid() {
        let model = ModelParams::standard();
        let kernel = preset_by_key("H0.1/T1/N1", model.v0).unwrap();
        let heston = HestonEquivalent::from_markovian(&model, &kernel).unwrap();
        let want = heston_price(&heston, 1.0, 1.0, 1.0, OptionSide::Call).unwrap();
        let pe = plan(SchemeKind::Euler, 256, 4, 4096);
        let est = price_european(&model, &kernel, &pe, &[1.0], OptionSide::Call).unwrap();
        assert!(
            (est[0].value - want).abs() <= est[0].ci_half.max(2e-4) + 1e-3,
            "euler {} +/- {}, want {want}",
            est[0].value,
            est[0].ci_half
        );
    }
}
