//! The logarithmic mean, its partial derivatives, and the convex edge cost.
//!
//! Everything in this crate that weighs an edge by two density values goes
//! through `log_mean_value`. The mean is
//!
//! ```text
//! theta(s, t) = (s - t) / (log s - log t)        for s, t > 0, s != t
//! theta(s, s) = s,   theta(0, t) = theta(s, 0) = 0
//! ```
//!
//! and the associated cost `alpha(x, s, t) = x^2 / theta(s, t)` (with the
//! lower-semicontinuous extension at `theta = 0`) is jointly convex, which is
//! what makes the transport problem a single convex program.

use thiserror::Error;

/// `c = \int_{-1}^{1} dr / sqrt(2 theta(1-r, 1+r))` for the logarithmic mean,
/// pinned from the tanh-sinh quadrature in [`theta_constant_c`] and frozen as
/// a regression constant. The distance between the two Dirac densities on a
/// symmetric two-point chain with flip probability `p` equals `c / sqrt(p)`.
pub const LOG_MEAN_C: f64 = 1.558_707_451_453_659_3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeanError {
    #[error("NegativeInput: mean arguments must be nonnegative, got ({0}, {1})")]
    NegativeInput(f64, f64),
    #[error("QuadratureFail: estimate {estimate} has error {error:e} above tolerance {tol:e}")]
    QuadratureFail { estimate: f64, error: f64, tol: f64 },
    #[error("BoundaryDerivative: partial derivatives are undefined at the boundary ({0}, {1})")]
    BoundaryDerivative(f64, f64),
}

/// Value and partial derivatives of the mean at one point.
///
/// The partials exist only in the open quadrant; requesting them at the
/// boundary returns [`MeanError::BoundaryDerivative`].
#[derive(Debug, Clone, Copy)]
pub struct MeanEvaluation {
    args: (f64, f64),
    value: f64,
    partials: Option<(f64, f64)>,
}

impl MeanEvaluation {
    pub fn value(&self) -> f64 {
        self.value
    }

    /// `d theta / d s`.
    pub fn d1(&self) -> Result<f64, MeanError> {
        self.partials
            .map(|p| p.0)
            .ok_or(MeanError::BoundaryDerivative(self.args.0, self.args.1))
    }

    /// `d theta / d t`.
    pub fn d2(&self) -> Result<f64, MeanError> {
        self.partials
            .map(|p| p.1)
            .ok_or(MeanError::BoundaryDerivative(self.args.0, self.args.1))
    }
}

/// Relative gap below which the value switches to the Taylor expansion around
/// the midpoint. The raw quotient `(s-t)/(log s - log t)` loses all precision
/// on the diagonal.
const VALUE_SERIES_CUTOFF: f64 = 1e-8;
/// The partials cancel earlier than the value does; switch sooner.
const D1_SERIES_CUTOFF: f64 = 1e-5;
const D11_SERIES_CUTOFF: f64 = 1e-4;

/// Logarithmic mean of two nonnegative numbers, with partial derivatives
/// where they exist.
pub fn log_mean(s: f64, t: f64) -> Result<MeanEvaluation, MeanError> {
    if s < 0.0 || t < 0.0 || s.is_nan() || t.is_nan() {
        return Err(MeanError::NegativeInput(s, t));
    }
    let value = log_mean_value(s, t);
    let partials = if s > 0.0 && t > 0.0 {
        Some((log_mean_d1(s, t), log_mean_d1(t, s)))
    } else {
        None
    };
    Ok(MeanEvaluation {
        args: (s, t),
        value,
        partials,
    })
}

/// Value of the logarithmic mean; total on the closed quadrant, zero on the
/// boundary.
#[inline]
pub fn log_mean_value(s: f64, t: f64) -> f64 {
    debug_assert!(s >= 0.0 && t >= 0.0, "log_mean_value({s}, {t})");
    if s <= 0.0 || t <= 0.0 {
        return 0.0;
    }
    let d = s - t;
    if d.abs() <= VALUE_SERIES_CUTOFF * s.max(t) {
        let m = 0.5 * (s + t);
        let x = d / (s + t);
        let x2 = x * x;
        return m * (1.0 - x2 / 3.0 - 4.0 * x2 * x2 / 45.0);
    }
    d / log_ratio(s, t, d)
}

/// `log s - log t` without cancellation: `log1p` near the diagonal, plain
/// log difference when the ratio is far from 1 (where `log1p` itself would
/// round `(s - t)/t` to -1).
#[inline]
fn log_ratio(s: f64, t: f64, d: f64) -> f64 {
    let r = s / t;
    if r > 0.5 && r < 2.0 {
        (d / t).ln_1p()
    } else {
        s.ln() - t.ln()
    }
}

/// `d theta / d s` for `s, t > 0`.
#[inline]
pub(crate) fn log_mean_d1(s: f64, t: f64) -> f64 {
    debug_assert!(s > 0.0 && t > 0.0);
    let d = s - t;
    if d.abs() <= D1_SERIES_CUTOFF * (s + t) {
        let x = d / (s + t);
        let x2 = x * x;
        let g = 1.0 - x2 / 3.0 - 4.0 * x2 * x2 / 45.0;
        let gp = -2.0 * x / 3.0 - 16.0 * x2 * x / 45.0;
        return 0.5 * (g + (1.0 - x) * gp);
    }
    let l = log_ratio(s, t, d);
    let theta = d / l;
    (1.0 - theta / s) / l
}

/// `d^2 theta / d s^2` for `s, t > 0`. The mixed and second-`t` partials
/// follow from the 0-homogeneity of the gradient:
/// `d12 = -(s/t) d11` and `d22 = (s/t)^2 d11`.
#[inline]
pub(crate) fn log_mean_d11(s: f64, t: f64) -> f64 {
    debug_assert!(s > 0.0 && t > 0.0);
    let d = s - t;
    if d.abs() <= D11_SERIES_CUTOFF * (s + t) {
        let m = 0.5 * (s + t);
        let x = d / (s + t);
        let gpp = -2.0 / 3.0 - 48.0 * x * x / 45.0;
        let om = 1.0 - x;
        return om * om * gpp / (4.0 * m);
    }
    let l = log_ratio(s, t, d);
    let theta = d / l;
    let d1 = (1.0 - theta / s) / l;
    (theta / s - 2.0 * d1) / (s * l)
}

/// Convex edge cost `alpha(x, s, t)`: flux squared over the mean of the two
/// endpoint densities, `+inf` where flux crosses a dead edge. Arguments
/// outside the quadrant (`s < 0` or `t < 0`) are infeasible and also map to
/// `+inf`.
#[inline]
pub fn alpha_cost(x: f64, s: f64, t: f64) -> f64 {
    if s < 0.0 || t < 0.0 {
        return f64::INFINITY;
    }
    let theta = log_mean_value(s, t);
    if theta > 0.0 {
        x * x / theta
    } else if x == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Abstraction point for the mean under the `c` integral. The logarithmic
/// mean is the only instance used by the rest of the crate; the arithmetic
/// mean exists as a test hook (its `c` equals `sqrt(2)` exactly).
pub trait MeanFunction {
    fn value(&self, s: f64, t: f64) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LogMean;

impl MeanFunction for LogMean {
    fn value(&self, s: f64, t: f64) -> f64 {
        log_mean_value(s, t)
    }
}

/// Test hook: `theta(s, t) = (s + t)/2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ArithmeticMean;

impl MeanFunction for ArithmeticMean {
    fn value(&self, s: f64, t: f64) -> f64 {
        0.5 * (s + t)
    }
}

/// `c = \int_{-1}^{1} dr / sqrt(2 theta(1-r, 1+r))` by tanh-sinh quadrature.
///
/// The substitution `r = tanh((pi/2) sinh u)` pushes the integrable endpoint
/// singularities (`theta -> 0` at `r = +-1`) to infinity with
/// double-exponential weight decay, so plain trapezoid sums converge
/// geometrically in the refinement level. Returns the value and the level
/// difference used as the error estimate.
pub fn theta_constant(mean: &dyn MeanFunction, abs_tol: f64) -> Result<(f64, f64), MeanError> {
    const T_MAX: f64 = 4.0;
    const MAX_LEVEL: u32 = 12;

    let integrand = |one_minus_r: f64, one_plus_r: f64| -> f64 {
        let th = mean.value(one_minus_r, one_plus_r);
        1.0 / (2.0 * th).sqrt()
    };
    // node at abscissa u: weight and the stable pair (1 - r, 1 + r)
    let node = |u: f64| -> (f64, f64, f64) {
        let v = std::f64::consts::FRAC_PI_2 * u.sinh();
        let ch = v.cosh();
        let w = std::f64::consts::FRAC_PI_2 * u.cosh() / (ch * ch);
        ((-v).exp() / ch, v.exp() / ch, w)
    };

    let mut h = 1.0;
    // level 0
    let mut sum = {
        let (om, op, w) = node(0.0);
        let mut acc = w * integrand(om, op);
        let mut j = 1.0;
        while j * h <= T_MAX {
            let (om, op, w) = node(j * h);
            acc += w * (integrand(om, op) + integrand(op, om));
            j += 1.0;
        }
        acc
    };
    let mut estimate = h * sum;
    let mut error = f64::INFINITY;
    for _ in 0..MAX_LEVEL {
        h *= 0.5;
        // refine: add the odd nodes of the new grid
        let mut j = 1.0;
        while (2.0 * j - 1.0) * h <= T_MAX {
            let (om, op, w) = node((2.0 * j - 1.0) * h);
            sum += w * (integrand(om, op) + integrand(op, om));
            j += 1.0;
        }
        let refined = h * sum;
        error = (refined - estimate).abs();
        estimate = refined;
        if error <= 0.5 * abs_tol {
            return Ok((estimate, error));
        }
    }
    Err(MeanError::QuadratureFail {
        estimate,
        error,
        tol: abs_tol,
    })
}

/// The constant `c` for the logarithmic mean, to absolute error `<= 1e-8`.
pub fn theta_constant_c() -> Result<f64, MeanError> {
    theta_constant(&LogMean, 1e-9).map(|(v, _)| v)
}
