//! Problem parameters, the maintenance-cost function and the parameter
//! assumptions under which the explicit solution exists.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots::{self, RootSet};
use crate::stopping::SmoothFit;

/// Number of uniform sample points used to validate cost functions on [0, 1].
const COST_SAMPLES: usize = 1001;
const CONVEXITY_TOL: f64 = 1e-9;

/// State of the two-state Markov chain modulating the price volatility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    One,
    Two,
}

impl Regime {
    pub const BOTH: [Regime; 2] = [Regime::One, Regime::Two];

    pub fn other(self) -> Self {
        match self {
            Regime::One => Regime::Two,
            Regime::Two => Regime::One,
        }
    }

    /// Zero-based index, handy for `[f64; 2]` lookups.
    pub fn index(self) -> usize {
        match self {
            Regime::One => 0,
            Regime::Two => 1,
        }
    }

    /// The label used in formulas and on the command line (1 or 2).
    pub fn label(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_label(label: u8) -> Result<Self> {
        match label {
            1 => Ok(Regime::One),
            2 => Ok(Regime::Two),
            other => Err(Error::OutOfRange {
                what: "regime",
                value: other as f64,
                range: "{1, 2}",
            }),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A programmatically supplied cost `f` together with its derivative.
#[derive(Clone)]
pub struct CustomCost {
    f: ScalarFn,
    df: ScalarFn,
    d2f: Option<ScalarFn>,
}

impl CustomCost {
    pub fn new(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Arc::new(f),
            df: Arc::new(df),
            d2f: None,
        }
    }

    pub fn with_second_derivative(
        mut self,
        d2f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.d2f = Some(Arc::new(d2f));
        self
    }
}

/// Running maintenance cost `f(y)` of holding reserve `y`.
#[derive(Clone)]
pub enum CostFunction {
    /// `f(y) = gamma (e^y - 1)`.
    Exponential {
        gamma: f64,
    },
    /// `f(y) = alpha y^2 + beta y`.
    Quadratic {
        alpha: f64,
        beta: f64,
    },
    Custom(CustomCost),
}

impl fmt::Debug for CostFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostFunction::Exponential { gamma } => {
                f.debug_struct("Exponential").field("gamma", gamma).finish()
            }
            CostFunction::Quadratic { alpha, beta } => f
                .debug_struct("Quadratic")
                .field("alpha", alpha)
                .field("beta", beta)
                .finish(),
            CostFunction::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl CostFunction {
    pub fn value(&self, y: f64) -> f64 {
        match self {
            CostFunction::Exponential { gamma } => gamma * y.exp_m1(),
            CostFunction::Quadratic { alpha, beta } => alpha * y * y + beta * y,
            CostFunction::Custom(c) => (c.f)(y),
        }
    }

    pub fn derivative(&self, y: f64) -> f64 {
        match self {
            CostFunction::Exponential { gamma } => gamma * y.exp(),
            CostFunction::Quadratic { alpha, beta } => 2.0 * alpha * y + beta,
            CostFunction::Custom(c) => (c.df)(y),
        }
    }

    /// Second derivative; `None` for a custom cost supplied without one.
    pub fn second_derivative(&self, y: f64) -> Option<f64> {
        match self {
            CostFunction::Exponential { gamma } => Some(gamma * y.exp()),
            CostFunction::Quadratic { alpha, .. } => Some(2.0 * alpha),
            CostFunction::Custom(c) => c.d2f.as_ref().map(|d2f| d2f(y)),
        }
    }

    /// The reserve level `y` in [0, 1] with `f'(y) = p`, clamped to the
    /// endpoints when `p` lies outside `[f'(0), f'(1)]`.
    pub fn level_for_marginal(&self, p: f64) -> f64 {
        if p <= self.derivative(0.0) {
            return 0.0;
        }
        if p >= self.derivative(1.0) {
            return 1.0;
        }
        let y = match self {
            CostFunction::Exponential { gamma } => (p / gamma).ln(),
            CostFunction::Quadratic { alpha, beta } => (p - beta) / (2.0 * alpha),
            CostFunction::Custom(c) => {
                // f' is strictly increasing, so bisection on [0, 1] is safe.
                let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if (c.df)(mid) < p {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= f64::EPSILON {
                        break;
                    }
                }
                0.5 * (lo + hi)
            }
        };
        y.clamp(0.0, 1.0)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            CostFunction::Exponential { gamma } => {
                finite("cost.gamma", gamma)?;
                if gamma <= 0.0 {
                    return Err(Error::NonPositiveParameter("cost.gamma"));
                }
                Ok(())
            }
            CostFunction::Quadratic { alpha, beta } => {
                finite("cost.alpha", alpha)?;
                finite("cost.beta", beta)?;
                if alpha <= 0.0 {
                    return Err(Error::CostNotConvex {
                        at: 0.0,
                        value: 2.0 * alpha,
                    });
                }
                if beta <= 0.0 {
                    return Err(Error::NonPositiveParameter("cost.beta"));
                }
                Ok(())
            }
            CostFunction::Custom(ref c) => {
                let f0 = (c.f)(0.0);
                if !f0.is_finite() || f0.abs() > 1e-12 {
                    return Err(Error::CostNotNormalized(f0));
                }
                let h = 1.0 / (COST_SAMPLES - 1) as f64;
                for k in 0..COST_SAMPLES {
                    let y = k as f64 * h;
                    let d = (c.df)(y);
                    if !(d > 0.0) {
                        return Err(Error::CostNotIncreasing { at: y, value: d });
                    }
                    let curvature = match c.d2f {
                        Some(ref d2f) => d2f(y),
                        None => ((c.f)(y + h) - 2.0 * (c.f)(y) + (c.f)(y - h)) / (h * h),
                    };
                    if !(curvature > CONVEXITY_TOL) {
                        return Err(Error::CostNotConvex {
                            at: y,
                            value: curvature,
                        });
                    }
                }
                Ok(())
            }
        }
    }
}

/// Cost-function section of the JSON configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum CostSpec {
    #[serde(rename = "exp")]
    Exponential { gamma: f64 },
    #[serde(rename = "quad")]
    Quadratic { alpha: f64, beta: f64 },
}

impl From<CostSpec> for CostFunction {
    fn from(spec: CostSpec) -> Self {
        match spec {
            CostSpec::Exponential { gamma } => CostFunction::Exponential { gamma },
            CostSpec::Quadratic { alpha, beta } => CostFunction::Quadratic { alpha, beta },
        }
    }
}

/// Unvalidated parameter bundle, exactly as read from a JSON config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams {
    pub rho: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub c: f64,
    pub cost: CostSpec,
}

/// Discount rate, regime volatilities and regime exit rates.
///
/// This is the part of the parameters the characteristic roots and the
/// parameter assumptions depend on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Market {
    pub rho: f64,
    pub sigma: [f64; 2],
    pub lambda: [f64; 2],
}

impl Market {
    pub fn new(rho: f64, sigma1: f64, sigma2: f64, lambda1: f64, lambda2: f64) -> Result<Self> {
        for (name, value) in [
            ("rho", rho),
            ("sigma1", sigma1),
            ("sigma2", sigma2),
            ("lambda1", lambda1),
            ("lambda2", lambda2),
        ] {
            finite(name, value)?;
            if value <= 0.0 {
                return Err(Error::NonPositiveParameter(name));
            }
        }
        Ok(Self {
            rho,
            sigma: [sigma1, sigma2],
            lambda: [lambda1, lambda2],
        })
    }

    pub fn sigma(&self, i: Regime) -> f64 {
        self.sigma[i.index()]
    }

    pub fn lambda(&self, i: Regime) -> f64 {
        self.lambda[i.index()]
    }

    /// `Phi_i(alpha) = -sigma_i^2 alpha^2 / 2 + rho + lambda_i`.
    pub fn phi(&self, i: Regime, alpha: f64) -> f64 {
        let s = self.sigma(i);
        -0.5 * s * s * alpha * alpha + self.rho + self.lambda(i)
    }

    /// Same market with the two regime labels exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            rho: self.rho,
            sigma: [self.sigma[1], self.sigma[0]],
            lambda: [self.lambda[1], self.lambda[0]],
        }
    }

    /// Both regimes share one volatility (up to 1e-14 relative).
    pub fn equal_volatility(&self) -> bool {
        let [s1, s2] = self.sigma;
        (s1 - s2).abs() <= 1e-14 * s1.max(s2)
    }
}

/// Validated model parameters.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub rho: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Proportional extraction cost.
    pub c: f64,
    pub cost: CostFunction,
}

impl ModelParams {
    /// Builds and validates parameters; never clamps.
    pub fn new(
        rho: f64,
        sigma1: f64,
        sigma2: f64,
        lambda1: f64,
        lambda2: f64,
        c: f64,
        cost: CostFunction,
    ) -> Result<Self> {
        Market::new(rho, sigma1, sigma2, lambda1, lambda2)?;
        finite("c", c)?;
        cost.validate()?;
        Ok(Self {
            rho,
            sigma1,
            sigma2,
            lambda1,
            lambda2,
            c,
            cost,
        })
    }

    pub fn market(&self) -> Market {
        Market {
            rho: self.rho,
            sigma: [self.sigma1, self.sigma2],
            lambda: [self.lambda1, self.lambda2],
        }
    }

    pub fn sigma(&self, i: Regime) -> f64 {
        match i {
            Regime::One => self.sigma1,
            Regime::Two => self.sigma2,
        }
    }

    pub fn lambda(&self, i: Regime) -> f64 {
        match i {
            Regime::One => self.lambda1,
            Regime::Two => self.lambda2,
        }
    }

    pub fn phi(&self, i: Regime, alpha: f64) -> f64 {
        self.market().phi(i, alpha)
    }

    /// Effective selling cost `c - f'(y) / rho`.
    pub fn c_hat(&self, y: f64) -> Result<f64> {
        check_reserve(y)?;
        Ok(self.c_hat_unchecked(y))
    }

    pub(crate) fn c_hat_unchecked(&self, y: f64) -> f64 {
        self.c - self.cost.derivative(y) / self.rho
    }

    /// Upper bound on `|c_hat(y)|` over [0, 1].
    pub fn c_hat_bound(&self) -> f64 {
        self.c.abs() + self.cost.derivative(1.0) / self.rho
    }

    /// Same parameters with the regime labels exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            sigma1: self.sigma2,
            sigma2: self.sigma1,
            lambda1: self.lambda2,
            lambda2: self.lambda1,
            ..self.clone()
        }
    }
}

/// Validates a raw configuration bundle.
pub fn validate(raw: &RawParams) -> Result<ModelParams> {
    ModelParams::new(
        raw.rho,
        raw.sigma1,
        raw.sigma2,
        raw.lambda1,
        raw.lambda2,
        raw.c,
        raw.cost.into(),
    )
}

pub(crate) fn check_reserve(y: f64) -> Result<()> {
    if (0.0..=1.0).contains(&y) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            what: "reserve level y",
            value: y,
            range: "[0, 1]",
        })
    }
}

fn finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(name))
    }
}

/// Numeric left-hand sides backing each flag of an [`AssumptionReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssumptionValues {
    pub alpha5: f64,
    /// `a1 + rho / (alpha5 (rho + lambda2))`, must be `< 0`.
    pub cond2_lhs: f64,
    /// `a1 + cosh(1) rho / (alpha5 (rho + lambda2))`, must be `>= 0`.
    pub cond3_lhs: f64,
    /// `(rho/(rho+lambda2) + a4)/a3 - a2/(a1 + rho/(alpha5(rho+lambda2)))`, must be `< 0`.
    pub cond4_lhs: f64,
    /// `(lambda2 min rho) / lambda2`, the upper bound for `alpha5`.
    pub assm2_bound: f64,
    /// `a1_fit + rho/(rho+lambda2)`: value of the smooth-fit denominator at 0.
    pub fit_h0: f64,
    /// Numerator of `M2` at the end of the admissible bracket; must be `< 0`.
    pub fit_r_at_zhat2: f64,
    /// `M1(0) - M2(0)`; must be `< 0` for a sign change.
    pub fit_gap_at_zero: f64,
}

/// Outcome of checking the parameter restrictions.
///
/// The five flags `a5_le_1`, `cond2`, `cond3`, `cond4` and `assm2` encode the
/// sufficient conditions as stated; `all_ok` is their conjunction
/// (or `true` when both volatilities coincide, where no restriction applies).
/// `solvable` reports the exact existence/uniqueness conditions of the
/// smooth-fit system that the solver actually uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub case_b: bool,
    pub a5_le_1: bool,
    pub cond2: bool,
    pub cond3: bool,
    pub cond4: bool,
    pub assm2: bool,
    pub lemma_signs: bool,
    pub all_ok: bool,
    pub solvable: bool,
    pub values: AssumptionValues,
}

/// Evaluates the parameter restrictions with exact inequality directions.
///
/// `eps` (default 0) is added to strict inequalities so that borderline
/// inputs are rejected deterministically.
pub fn check_assumptions(market: &Market, roots: &RootSet, eps: f64) -> AssumptionReport {
    let rho = market.rho;
    let lambda2 = market.lambda[1];
    let q = rho / (rho + lambda2);
    let k = q / roots.alpha5;

    let cond2_lhs = roots.a1 + k;
    let cond3_lhs = roots.a1 + k * 1f64.cosh();
    let cond4_lhs = (q + roots.a4) / roots.a3 - roots.a2 / cond2_lhs;
    let assm2_bound = lambda2.min(rho) / lambda2;

    let fit = SmoothFit::new(market, roots);
    let fit_h0 = fit.h(0.0);
    let fit_r_at_zhat2 = fit.zhat2_closed_form().map_or(f64::NAN, |z| fit.r(z));
    let fit_gap_at_zero = fit.gap_at_zero();

    let a5_le_1 = roots.alpha5 <= 1.0;
    let cond2 = cond2_lhs < -eps;
    let cond3 = cond3_lhs >= 0.0;
    let cond4 = cond4_lhs < -eps;
    let assm2 = roots.alpha5 <= assm2_bound;
    let case_b = market.equal_volatility();

    AssumptionReport {
        case_b,
        a5_le_1,
        cond2,
        cond3,
        cond4,
        assm2,
        lemma_signs: roots::check_sign_lemma(roots),
        all_ok: case_b || (a5_le_1 && cond2 && cond3 && cond4 && assm2),
        solvable: case_b || (fit_h0 < -eps && fit_r_at_zhat2 < -eps && fit_gap_at_zero < -eps),
        values: AssumptionValues {
            alpha5: roots.alpha5,
            cond2_lhs,
            cond3_lhs,
            cond4_lhs,
            assm2_bound,
            fit_h0,
            fit_r_at_zhat2,
            fit_gap_at_zero,
        },
    }
}

/// Feasibility status of one cell of a `(sigma1, sigma2)` raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Feasibility {
    Feasible,
    Infeasible,
    CaseB,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RasterCell {
    pub sigma1: f64,
    pub sigma2: f64,
    /// Sufficient conditions (first four restrictions).
    pub status: Feasibility,
    /// Exact solvability of the smooth-fit system.
    pub solvable: bool,
}

/// Rasterizes the feasibility of the sufficient restrictions over a
/// rectangle of volatilities, `steps x steps` cells evaluated at cell centers.
///
/// Rows are ordered with `sigma1` outermost.
pub fn feasibility_raster(
    rho: f64,
    lambda1: f64,
    lambda2: f64,
    sigma1_range: (f64, f64),
    sigma2_range: (f64, f64),
    steps: usize,
) -> Result<Vec<RasterCell>> {
    if steps == 0 {
        return Err(Error::OutOfRange {
            what: "steps",
            value: 0.0,
            range: "[1, inf)",
        });
    }
    for (lo, hi) in [sigma1_range, sigma2_range] {
        if !(lo.is_finite() && hi.is_finite()) || hi < lo {
            return Err(Error::OutOfRange {
                what: "volatility range",
                value: hi - lo,
                range: "non-empty interval",
            });
        }
    }
    let centers = |(lo, hi): (f64, f64)| -> Vec<f64> {
        let w = (hi - lo) / steps as f64;
        (0..steps).map(|k| lo + (k as f64 + 0.5) * w).collect()
    };
    let s1s = centers(sigma1_range);
    let s2s = centers(sigma2_range);
    let mut cells = Vec::with_capacity(steps * steps);
    for &s1 in &s1s {
        for &s2 in &s2s {
            let market = Market::new(rho, s1, s2, lambda1, lambda2)?;
            let roots = roots::solve_characteristic(&market)?;
            let report = check_assumptions(&market, &roots, 0.0);
            let status = if report.case_b {
                Feasibility::CaseB
            } else if report.a5_le_1 && report.cond2 && report.cond3 && report.cond4 {
                Feasibility::Feasible
            } else {
                Feasibility::Infeasible
            };
            cells.push(RasterCell {
                sigma1: s1,
                sigma2: s2,
                status,
                solvable: report.solvable,
            });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn baseline() -> ModelParams {
        ModelParams::new(
            1.0 / 3.0,
            0.38,
            1.9,
            1.7,
            0.44,
            0.5,
            CostFunction::Exponential { gamma: 1.0 / 3.0 },
        )
        .unwrap()
    }

    #[test]
    fn baseline_parameters_validate() {
        let p = baseline();
        assert_eq!(p.sigma(Regime::Two), 1.9);
        assert_eq!(p.lambda(Regime::One), 1.7);
    }

    #[test]
    fn zero_discount_is_rejected_by_name() {
        let mut raw = RawParams {
            rho: 0.0,
            sigma1: 0.38,
            sigma2: 1.9,
            lambda1: 1.7,
            lambda2: 0.44,
            c: 0.5,
            cost: CostSpec::Exponential { gamma: 1.0 / 3.0 },
        };
        assert_eq!(
            validate(&raw).unwrap_err(),
            Error::NonPositiveParameter("rho")
        );
        raw.rho = 1.0 / 3.0;
        raw.lambda2 = -1.0;
        assert_eq!(
            validate(&raw).unwrap_err(),
            Error::NonPositiveParameter("lambda2")
        );
        raw.lambda2 = f64::NAN;
        assert_eq!(validate(&raw).unwrap_err(), Error::NonFinite("lambda2"));
    }

    #[test]
    fn concave_quadratic_cost_is_rejected() {
        let err = ModelParams::new(
            0.1,
            1.0,
            1.0,
            1.0,
            1.0,
            0.0,
            CostFunction::Quadratic {
                alpha: -1.0,
                beta: 1.0,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::CostNotConvex { .. }));
    }

    #[test]
    fn custom_cost_sampled_checks() {
        let linear = CostFunction::Custom(CustomCost::new(|y| y, |_| 1.0));
        assert!(matches!(
            linear.validate().unwrap_err(),
            Error::CostNotConvex { .. }
        ));
        let shifted = CostFunction::Custom(CustomCost::new(|y| 1.0 + y * y, |y| 2.0 * y));
        assert!(matches!(
            shifted.validate().unwrap_err(),
            Error::CostNotNormalized(_)
        ));
        let cubic = CostFunction::Custom(CustomCost::new(
            |y: f64| y + y * y + y.powi(3),
            |y: f64| 1.0 + 2.0 * y + 3.0 * y * y,
        ));
        cubic.validate().unwrap();
        // bisection inverse of f'
        let y = cubic.level_for_marginal(1.0 + 0.8 + 3.0 * 0.4 * 0.4);
        assert!((y - 0.4).abs() < 1e-12);
    }

    #[test]
    fn phi_at_zero_is_rho_plus_lambda() {
        let p = baseline();
        assert!((p.phi(Regime::One, 0.0) - 2.033_333_333_333_333).abs() < 1e-12);
        assert!((p.phi(Regime::Two, 0.0) - 0.773_333_333_333_333).abs() < 1e-12);
    }

    #[test]
    fn phi_is_even_and_decreasing_in_magnitude() {
        let p = baseline();
        for i in Regime::BOTH {
            let mut prev = p.phi(i, 0.0);
            for k in 1..100 {
                let a = 0.05 * k as f64;
                assert_eq!(p.phi(i, a), p.phi(i, -a));
                let cur = p.phi(i, a);
                assert!(cur < prev);
                prev = cur;
            }
        }
    }

    #[test]
    fn c_hat_values_and_range() {
        let p = baseline();
        assert!((p.c_hat(0.0).unwrap() + 0.5).abs() < 1e-15);
        assert!((p.c_hat(1.0).unwrap() - (0.5 - std::f64::consts::E)).abs() < 1e-14);
        assert!(matches!(p.c_hat(1.5), Err(Error::OutOfRange { .. })));
        assert!(matches!(p.c_hat(-0.1), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn c_hat_zero_crossing() {
        // f'(y*) = rho c at y* = 0.25 for f(y) = y^2 + y, rho = 0.5, c = 3.
        let p = ModelParams::new(
            0.5,
            1.0,
            1.0,
            1.0,
            1.0,
            3.0,
            CostFunction::Quadratic {
                alpha: 1.0,
                beta: 1.0,
            },
        )
        .unwrap();
        assert!(p.c_hat(0.25).unwrap().abs() < 1e-15);
    }

    #[test]
    fn c_hat_strictly_decreasing_and_bounded() {
        let costs = [
            CostFunction::Exponential { gamma: 1.0 / 3.0 },
            CostFunction::Quadratic {
                alpha: 0.7,
                beta: 0.1,
            },
        ];
        for cost in costs {
            let p = ModelParams::new(0.2, 0.3, 0.9, 0.5, 0.5, 0.4, cost).unwrap();
            let bound = p.c_hat_bound();
            let mut prev = f64::INFINITY;
            for k in 0..=1000 {
                let ch = p.c_hat(k as f64 / 1000.0).unwrap();
                assert!(ch < prev);
                assert!(ch.abs() <= bound);
                prev = ch;
            }
        }
    }

    #[test]
    fn config_json_round_trip() {
        let json = r#"{"rho": 0.3333333333333333, "sigma1": 0.38, "sigma2": 1.9,
            "lambda1": 1.7, "lambda2": 0.44, "c": 0.5,
            "cost": {"type": "exp", "gamma": 0.3333333333333333}}"#;
        let raw: RawParams = serde_json::from_str(json).unwrap();
        assert_eq!(raw.cost, CostSpec::Exponential { gamma: 1.0 / 3.0 });
        validate(&raw).unwrap();
        let quad = r#"{"rho": 0.5, "sigma1": 1, "sigma2": 1, "lambda1": 1, "lambda2": 2,
            "c": 1, "cost": {"type": "quad", "alpha": 1, "beta": 1}}"#;
        let raw: RawParams = serde_json::from_str(quad).unwrap();
        assert_eq!(
            raw.cost,
            CostSpec::Quadratic {
                alpha: 1.0,
                beta: 1.0
            }
        );
    }

    #[test]
    fn assumptions_hold_for_baseline() {
        let m = baseline().market();
        let roots = roots::solve_characteristic(&m).unwrap();
        let rep = check_assumptions(&m, &roots, 0.0);
        assert!(rep.all_ok && rep.solvable && rep.lemma_signs && !rep.case_b);
        assert!((rep.values.alpha5 - 0.65455).abs() < 1e-4);
        assert!((rep.values.cond2_lhs + 0.2134).abs() < 1e-4);
        assert!((rep.values.cond3_lhs - 0.1443).abs() < 1e-4);
        assert!((rep.values.assm2_bound - 0.757_575_757_575_757_6).abs() < 1e-12);
    }

    #[test]
    fn known_feasible_midpoints_satisfy_restrictions() {
        let rows = [
            (0.0315, 0.0245, 0.78, 0.016, 0.015),
            (0.026, 0.039, 0.645, 0.435, 0.043),
            (0.335, 0.28, 1.75, 1.6, 0.43),
        ];
        for (rho, s1, s2, l1, l2) in rows {
            let m = Market::new(rho, s1, s2, l1, l2).unwrap();
            let roots = roots::solve_characteristic(&m).unwrap();
            let rep = check_assumptions(&m, &roots, 0.0);
            assert!(
                rep.a5_le_1 && rep.cond2 && rep.cond3 && rep.cond4,
                "{rep:?}"
            );
        }
    }

    #[test]
    fn equal_volatility_sets_case_b_marker() {
        let m = Market::new(0.5, 1.0, 1.0, 0.3, 0.2).unwrap();
        let roots = roots::solve_characteristic(&m).unwrap();
        let rep = check_assumptions(&m, &roots, 0.0);
        assert!(rep.case_b && rep.all_ok && rep.solvable);
    }

    #[test]
    fn epsilon_rejects_borderline_strict_inequalities() {
        let m = baseline().market();
        let roots = roots::solve_characteristic(&m).unwrap();
        let eps = 1.0;
        let rep = check_assumptions(&m, &roots, eps);
        assert!(!rep.cond2 && !rep.all_ok);
    }

    #[test]
    fn raster_grid_contract() {
        let cells = feasibility_raster(0.03, 0.017, 0.016, (0.01, 0.06), (0.5, 1.2), 1).unwrap();
        assert_eq!(cells.len(), 1);
        assert!((cells[0].sigma1 - 0.035).abs() < 1e-15);
        let cells = feasibility_raster(0.03, 0.017, 0.016, (0.5, 1.0), (0.5, 1.0), 2).unwrap();
        assert_eq!(cells.len(), 4);
        assert_eq!(cells[0].status, Feasibility::CaseB);
        assert!(feasibility_raster(0.03, 0.017, 0.016, (0.06, 0.01), (0.5, 1.2), 3).is_err());
        assert!(feasibility_raster(0.03, 0.017, 0.016, (0.01, 0.06), (0.5, 1.2), 0).is_err());
    }
}
