//! Python bindings: model construction, kernel presets, and the main pricers.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rheston::kernel::{available_presets, preset_by_key};
use rheston::pricing::{
    implied_vol as iv, price_bermudan_put, price_european, price_geometric_asian,
    EnginePlan, SamplingPlan, SchemeKind,
};
use rheston::{KernelApprox, ModelParams, OptionSide, StreamKind};

fn err(e: rheston::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_side(side: &str) -> PyResult<OptionSide> {
    match side {
        "call" => Ok(OptionSide::Call),
        "put" => Ok(OptionSide::Put),
        other => Err(PyValueError::new_err(format!(
            "side must be 'call' or 'put', got {other:?}"
        ))),
    }
}

fn parse_scheme(scheme: &str) -> PyResult<SchemeKind> {
    match scheme {
        "weak" => Ok(SchemeKind::Weak),
        "euler" => Ok(SchemeKind::Euler),
        other => Err(PyValueError::new_err(format!(
            "scheme must be 'weak' or 'euler', got {other:?}"
        ))),
    }
}

fn parse_stream(stream: &str) -> PyResult<StreamKind> {
    match stream {
        "sobol" => Ok(StreamKind::Sobol),
        "pseudo" => Ok(StreamKind::Pseudo),
        other => Err(PyValueError::new_err(format!(
            "stream must be 'sobol' or 'pseudo', got {other:?}"
        ))),
    }
}

#[pyclass(name = "Model", skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: ModelParams,
    kernel: KernelApprox,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (preset, theta=0.02, lambda_=0.3, nu=0.3, rho=-0.7, hurst=0.1, v0=0.02, s0=1.0, r=0.0, maturity=1.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        preset: &str,
        theta: f64,
        lambda_: f64,
        nu: f64,
        rho: f64,
        hurst: f64,
        v0: f64,
        s0: f64,
        r: f64,
        maturity: f64,
    ) -> PyResult<Self> {
        let inner = ModelParams {
            theta,
            lambda: lambda_,
            nu,
            rho,
            hurst,
            v0,
            s0,
            r,
            maturity,
        };
        let kernel = preset_by_key(preset, v0).map_err(err)?;
        Ok(PyModel { inner, kernel })
    }

    /// Number of variance factors.
    #[getter]
    fn n_factors(&self) -> usize {
        self.kernel.dim()
    }

    /// L1 distance between the fractional kernel and its approximation on
    /// [0, maturity].
    fn kernel_l1_error(&self) -> PyResult<f64> {
        self.kernel
            .l1_error(self.inner.hurst, self.inner.maturity)
            .map_err(err)
    }

    /// European option prices for a strike list. Returns a list of
    /// (price, ci_half) pairs.
    #[pyo3(signature = (strikes, side="call", scheme="weak", steps=64, shifts=10, points_per_shift=4096, stream="sobol", seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn smile(
        &self,
        strikes: Vec<f64>,
        side: &str,
        scheme: &str,
        steps: usize,
        shifts: u32,
        points_per_shift: u64,
        stream: &str,
        seed: u64,
    ) -> PyResult<Vec<(f64, f64)>> {
        let plan = EnginePlan {
            scheme: parse_scheme(scheme)?,
            steps,
            sampling: SamplingPlan {
                kind: parse_stream(stream)?,
                shifts,
                points_per_shift,
                seed,
            },
        };
        let est = price_european(&self.inner, &self.kernel, &plan, &strikes, parse_side(side)?)
            .map_err(err)?;
        Ok(est.into_iter().map(|e| (e.value, e.ci_half)).collect())
    }

    /// Geometric-average Asian option price as (price, ci_half).
    #[pyo3(signature = (strike, side="call", scheme="weak", steps=64, shifts=10, points_per_shift=4096, stream="sobol", seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn asian(
        &self,
        strike: f64,
        side: &str,
        scheme: &str,
        steps: usize,
        shifts: u32,
        points_per_shift: u64,
        stream: &str,
        seed: u64,
    ) -> PyResult<(f64, f64)> {
        let plan = EnginePlan {
            scheme: parse_scheme(scheme)?,
            steps,
            sampling: SamplingPlan {
                kind: parse_stream(stream)?,
                shifts,
                points_per_shift,
                seed,
            },
        };
        let est = price_geometric_asian(&self.inner, &self.kernel, &plan, strike, parse_side(side)?)
            .map_err(err)?;
        Ok((est.value, est.ci_half))
    }

    /// Bermudan put via regression. Returns a dict with the Bermudan and
    /// European estimates and the regression basis size.
    #[pyo3(signature = (strike, exercise_dates, degree=6, scheme="weak", steps=16, shifts=10, points_per_shift=4096, stream="sobol", seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn bermudan_put(
        &self,
        py: Python<'_>,
        strike: f64,
        exercise_dates: usize,
        degree: usize,
        scheme: &str,
        steps: usize,
        shifts: u32,
        points_per_shift: u64,
        stream: &str,
        seed: u64,
    ) -> PyResult<Py<pyo3::types::PyDict>> {
        let plan = EnginePlan {
            scheme: parse_scheme(scheme)?,
            steps,
            sampling: SamplingPlan {
                kind: parse_stream(stream)?,
                shifts,
                points_per_shift,
                seed,
            },
        };
        let res = price_bermudan_put(&self.inner, &self.kernel, &plan, strike, exercise_dates, degree)
            .map_err(err)?;
        let d = pyo3::types::PyDict::new(py);
        d.set_item("bermudan", res.bermudan.value)?;
        d.set_item("bermudan_ci", res.bermudan.ci_half)?;
        d.set_item("european", res.european.value)?;
        d.set_item("european_ci", res.european.ci_half)?;
        d.set_item("basis_size", res.basis_size)?;
        Ok(d.unbind())
    }
}

/// Black-Scholes implied volatility of an undiscounted forward price.
#[pyfunction(name = "implied_vol")]
#[pyo3(signature = (price, forward, strike, maturity, side="call"))]
fn implied_vol_py(price: f64, forward: f64, strike: f64, maturity: f64, side: &str) -> PyResult<f64> {
    iv(price, forward, strike, maturity, parse_side(side)?).map_err(err)
}

/// Keys of the kernel approximations shipped with the crate.
#[pyfunction]
fn presets() -> Vec<String> {
    available_presets()
}

#[pymodule]
fn _rheston(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(implied_vol_py, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    Ok(())
}
