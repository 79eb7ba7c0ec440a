//! The extraction problem: reflecting boundaries `b*_i(x)`, the value
//! `U(x, y, i)` and a grid verifier for the dynamic programming equation.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{self, ModelParams, Regime};
use crate::quadrature;
use crate::stopping::{Region, Side, StoppingSolution};

/// Absolute tolerance of the reserve-direction quadrature.
pub const QUAD_TOL: f64 = 1e-9;

/// Value function and its derivatives at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueReport {
    pub u: f64,
    pub uy: f64,
    pub ux: f64,
    pub uxx: f64,
    /// `max{(G - rho) U - f(y), (x - c) - U_y}`.
    pub hjb_residual: f64,
}

/// How the `x`-derivatives of `U` are obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Derivatives {
    /// Quadrature of the piecewise closed-form `w_x`, `w_xx`.
    ClosedForm,
    /// Central differences of `w` with the given step inside a fixed
    /// composite Simpson rule; an independent cross-check.
    FiniteDifference { step: f64, panels: usize },
}

#[derive(Debug, Clone)]
pub struct ControlSolution {
    stopping: StoppingSolution,
    /// `x*_i(0)` and `x*_i(1)` indexed by caller regime.
    x_star_ends: [[f64; 2]; 2],
}

impl ControlSolution {
    pub fn new(params: &ModelParams) -> Result<Self> {
        Ok(Self::from_stopping(StoppingSolution::solve(params)?))
    }

    pub fn from_stopping(stopping: StoppingSolution) -> Self {
        let ends = |i: Regime| {
            [
                stopping.shift(i) + stopping.params().c_hat_unchecked(0.0),
                stopping.shift(i) + stopping.params().c_hat_unchecked(1.0),
            ]
        };
        Self {
            x_star_ends: [ends(Regime::One), ends(Regime::Two)],
            stopping,
        }
    }

    pub fn stopping(&self) -> &StoppingSolution {
        &self.stopping
    }

    pub fn params(&self) -> &ModelParams {
        self.stopping.params()
    }

    /// `(x*_i(0), x*_i(1))`.
    pub fn x_star_ends(&self, i: Regime) -> (f64, f64) {
        let [a, b] = self.x_star_ends[i.index()];
        (a, b)
    }

    /// Reflecting boundary `b*_i(x)`: the clamped inverse of `y -> x*_i(y)`.
    pub fn b_star(&self, i: Regime, x: f64) -> f64 {
        level_at_shift(self.params(), self.stopping.shift(i), x)
    }

    /// `U(x, y, i)`.
    pub fn u(&self, x: f64, y: f64, i: Regime) -> Result<f64> {
        Ok(self.integrals(x, y, Derivatives::ClosedForm)?[i.index()][0])
    }

    pub fn u_report(&self, x: f64, y: f64, i: Regime) -> Result<ValueReport> {
        Ok(self.reports(x, y, Derivatives::ClosedForm)?[i.index()])
    }

    /// Value reports for both regimes at `(x, y)`.
    pub fn reports(&self, x: f64, y: f64, mode: Derivatives) -> Result<[ValueReport; 2]> {
        model::check_reserve(y)?;
        let p = self.params();
        let ints = self.integrals(x, y, mode)?;
        let xi = x - p.c_hat_unchecked(y);
        let marginal = p.cost.derivative(y) / p.rho;
        let fy = p.cost.value(y);
        Ok(Regime::BOTH.map(|i| {
            let [u, ux, uxx] = ints[i.index()];
            let other = ints[i.other().index()][0];
            let uy = self.stopping.w_shifted(xi, i, Side::Left).w - marginal;
            let s = p.sigma(i);
            let first = 0.5 * s * s * uxx + p.lambda(i) * (other - u) - p.rho * u - fy;
            let second = (x - p.c) - uy;
            ValueReport {
                u,
                uy,
                ux,
                uxx,
                hjb_residual: first.max(second),
            }
        }))
    }

    /// `[U, U_x, U_xx]` for both caller regimes.
    fn integrals(&self, x: f64, y: f64, mode: Derivatives) -> Result<[[f64; 3]; 2]> {
        model::check_reserve(y)?;
        let p = self.params();
        let sol = &self.stopping;
        let lo_shift = sol.z1;
        let hi_shift = sol.z1 + sol.z2;
        let b_lo = level_at_shift(p, lo_shift, x).min(y);
        let b_hi = level_at_shift(p, hi_shift, x).min(y).max(b_lo);

        let mut acc = [0.0; 6];
        let panels = [(0.0, b_lo, Region::Low), (b_lo, b_hi, Region::Mid)];
        for (a, b, region) in panels {
            if b <= a {
                continue;
            }
            let part = match mode {
                Derivatives::ClosedForm => {
                    let g = |z: f64| {
                        let xi = x - p.c_hat_unchecked(z);
                        let e1 = sol.w_region(xi, Regime::One, region);
                        let e2 = sol.w_region(xi, Regime::Two, region);
                        [e1.w, e1.wx, e1.wxx, e2.w, e2.wx, e2.wxx]
                    };
                    quadrature::simpson_vec(&g, a, b, 0.5 * QUAD_TOL)?
                }
                Derivatives::FiniteDifference { step, panels } => {
                    let g = |z: f64| {
                        let xi = x - p.c_hat_unchecked(z);
                        let mut out = [0.0; 6];
                        for i in Regime::BOTH {
                            let w = |t: f64| sol.w_shifted(t, i, Side::Left).w;
                            let (wm, w0, wp) = (w(xi - step), w(xi), w(xi + step));
                            let k = 3 * i.index();
                            out[k] = w0;
                            out[k + 1] = (wp - wm) / (2.0 * step);
                            out[k + 2] = (wp - 2.0 * w0 + wm) / (step * step);
                        }
                        out
                    };
                    composite_simpson(&g, a, b, panels)
                }
            };
            for (s, v) in acc.iter_mut().zip(part) {
                *s += v;
            }
        }
        // Top panel: both regimes sell, w = x - c_hat(z).
        if y > b_hi {
            let top = (x - p.c) * (y - b_hi) + (p.cost.value(y) - p.cost.value(b_hi)) / p.rho;
            for k in [0, 3] {
                acc[k] += top;
                acc[k + 1] += y - b_hi;
            }
        }
        let fy = p.cost.value(y) / p.rho;
        Ok([[acc[0] - fy, acc[1], acc[2]], [acc[3] - fy, acc[4], acc[5]]])
    }

    /// Checks the dynamic programming equation on a grid.
    pub fn verify_hjb(&self, grid: &HjbGrid) -> Result<HjbReport> {
        let mode = grid.derivatives;
        verify_hjb_with(self, grid, |x, y| self.reports(x, y, mode))
    }

    /// Default price range of the HJB grid.
    pub fn default_hjb_range(&self) -> (f64, f64) {
        let top = self.x_star_ends[0][0].max(self.x_star_ends[1][0]);
        (top - 5.0 * self.stopping.z1 - 5.0, top + 5.0)
    }
}

fn level_at_shift(p: &ModelParams, shift: f64, x: f64) -> f64 {
    p.cost.level_for_marginal(p.rho * (p.c + shift - x))
}

fn composite_simpson<const N: usize, F: Fn(f64) -> [f64; N]>(
    f: &F,
    a: f64,
    b: f64,
    panels: usize,
) -> [f64; N] {
    let n = 2 * panels.max(1);
    let h = (b - a) / n as f64;
    let mut acc = [0.0; N];
    for k in 0..=n {
        let weight = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        for (s, v) in acc.iter_mut().zip(f(a + k as f64 * h)) {
            *s += weight * v;
        }
    }
    acc.map(|s| s * h / 3.0)
}

/// Grid and tolerance of the HJB verifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HjbGrid {
    /// Price range; default `[x*(0) - 5 z1 - 5, x*(0) + 5]` with `x*(0)` the
    /// higher of the two regime boundaries at zero reserve.
    pub x_range: Option<(f64, f64)>,
    pub nx: usize,
    /// Reserve levels `k / ny`, `k = 1..=ny`.
    pub ny: usize,
    pub tau: f64,
    pub derivatives: Derivatives,
}

impl Default for HjbGrid {
    fn default() -> Self {
        Self {
            x_range: None,
            nx: 400,
            ny: 50,
            tau: 1e-5,
            derivatives: Derivatives::ClosedForm,
        }
    }
}

impl HjbGrid {
    /// Settings of the finite-difference cross-check mode.
    pub fn finite_difference() -> Self {
        Self {
            tau: 1e-3,
            derivatives: Derivatives::FiniteDifference {
                step: 1e-5,
                panels: 200,
            },
            ..Self::default()
        }
    }
}

/// Largest residuals found by the HJB verifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HjbReport {
    pub states: usize,
    /// Largest `|max{first, second}|`.
    pub max_abs_residual: f64,
    /// Largest value of `(G - rho) U - f(y)`.
    pub max_first: f64,
    /// Largest value of `(x - c) - U_y`.
    pub max_second: f64,
    /// Largest `|(G - rho) U - f(y)|` where `x <= x*_i(y)`, i.e. `y <= b*_i(x)`.
    pub max_first_inaction: f64,
    /// Largest `|(x - c) - U_y|` where `x >= x*_i(y)`.
    pub max_second_action: f64,
}

/// Runs the HJB checks on values supplied by `eval`, which must return the
/// reports of both regimes at `(x, y)`. The default verifier passes
/// [`ControlSolution::reports`]; tests substitute perturbed values.
pub fn verify_hjb_with<F>(cs: &ControlSolution, grid: &HjbGrid, eval: F) -> Result<HjbReport>
where
    F: Fn(f64, f64) -> Result<[ValueReport; 2]> + Sync,
{
    if grid.nx < 2 || grid.ny < 1 {
        return Err(Error::OutOfRange {
            what: "HJB grid size",
            value: grid.nx.min(grid.ny) as f64,
            range: "nx >= 2, ny >= 1",
        });
    }
    let (lo, hi) = grid.x_range.unwrap_or_else(|| cs.default_hjb_range());
    let p = cs.params();
    let xs: Vec<f64> = (0..grid.nx)
        .map(|k| lo + (hi - lo) * k as f64 / (grid.nx - 1) as f64)
        .collect();

    // One row of states per price; rows are reduced in index order.
    let rows: Vec<Result<Vec<StateCheck>>> = xs
        .par_iter()
        .map(|&x| {
            let mut row = Vec::with_capacity(2 * grid.ny);
            for k in 1..=grid.ny {
                let y = k as f64 / grid.ny as f64;
                let reports = eval(x, y)?;
                for i in Regime::BOTH {
                    let r = reports[i.index()];
                    let s = p.sigma(i);
                    let other = reports[i.other().index()].u;
                    let first = 0.5 * s * s * r.uxx + p.lambda(i) * (other - r.u)
                        - p.rho * r.u
                        - p.cost.value(y);
                    let second = (x - p.c) - r.uy;
                    // Compared through x*_i(y) so the clamp b*_i = 1 at
                    // x < x*_i(1) does not count as the action region.
                    let boundary = cs.stopping.x_star(i, y)?;
                    row.push(StateCheck {
                        x,
                        y,
                        i,
                        first,
                        second,
                        inaction: x <= boundary,
                        action: x >= boundary,
                    });
                }
            }
            Ok(row)
        })
        .collect();

    let mut report = HjbReport {
        states: 0,
        max_abs_residual: 0.0,
        max_first: f64::NEG_INFINITY,
        max_second: f64::NEG_INFINITY,
        max_first_inaction: 0.0,
        max_second_action: 0.0,
    };
    let mut failure: Option<(&'static str, StateCheck, f64)> = None;
    let tau = grid.tau;
    for row in rows {
        for c in row? {
            report.states += 1;
            let m = c.first.max(c.second);
            report.max_abs_residual = report.max_abs_residual.max(m.abs());
            report.max_first = report.max_first.max(c.first);
            report.max_second = report.max_second.max(c.second);
            let mut checks = vec![
                ("max of branches", m.abs()),
                ("first branch", c.first),
                ("second branch", c.second),
            ];
            if c.inaction {
                report.max_first_inaction = report.max_first_inaction.max(c.first.abs());
                checks.push(("first branch vanishes in inaction", c.first.abs()));
            }
            if c.action {
                report.max_second_action = report.max_second_action.max(c.second.abs());
                checks.push(("second branch vanishes in action", c.second.abs()));
            }
            for (name, value) in checks {
                let worse = failure.as_ref().is_none_or(|f| value > f.2);
                if !(value <= tau) && worse {
                    failure = Some((name, c, value));
                }
            }
        }
    }
    match failure {
        Some((check, c, residual)) => Err(Error::VerificationFailed {
            check,
            x: c.x,
            y: c.y,
            regime: c.i.label(),
            residual,
        }),
        None => Ok(report),
    }
}

#[derive(Debug, Clone, Copy)]
struct StateCheck {
    x: f64,
    y: f64,
    i: Regime,
    first: f64,
    second: f64,
    inaction: bool,
    action: bool,
}

/// Selling boundary of the problem with one constant volatility `sigma`.
pub fn single_regime_boundary(params: &ModelParams, sigma: f64, y: f64) -> Result<f64> {
    Ok(single_regime_shift(params, sigma) + params.c_hat(y)?)
}

/// Clamped inverse of [`single_regime_boundary`].
pub fn single_regime_b(params: &ModelParams, sigma: f64, x: f64) -> f64 {
    level_at_shift(params, single_regime_shift(params, sigma), x)
}

fn single_regime_shift(params: &ModelParams, sigma: f64) -> f64 {
    sigma / (2.0 * params.rho).sqrt()
}

/// One row of the boundary comparison, ordered by volatility: the
/// single-regime curve at the lower volatility, the regime boundaries of
/// the lower and higher volatility regimes, and the single-regime curve at
/// the higher volatility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryRow {
    pub x: f64,
    pub single_low: f64,
    pub regime_low: f64,
    pub regime_high: f64,
    pub single_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingReport {
    /// Caller label of the lower-volatility regime.
    pub low_regime: u8,
    pub rows: Vec<BoundaryRow>,
}

/// Tabulates and checks `b#(.; sigma_low) <= b*_low <= b*_high <= b#(.; sigma_high)`.
///
/// Equality is only accepted on the clamp plateaus 0 and 1, except with
/// equal volatilities, where all four curves must coincide.
pub fn compare_boundaries(
    cs: &ControlSolution,
    x_range: Option<(f64, f64)>,
    points: usize,
) -> Result<OrderingReport> {
    let p = cs.params();
    let low = if p.sigma1 <= p.sigma2 {
        Regime::One
    } else {
        Regime::Two
    };
    let high = low.other();
    let (s_lo, s_hi) = (p.sigma(low), p.sigma(high));
    let (lo, hi) = x_range.unwrap_or_else(|| {
        let bottom = single_regime_shift(p, s_lo).min(cs.stopping.z1) + p.c_hat_unchecked(1.0);
        let top =
            single_regime_shift(p, s_hi).max(cs.stopping.shift(high)) + p.c_hat_unchecked(0.0);
        (bottom - 1.0, top + 1.0)
    });
    if points < 2 {
        return Err(Error::OutOfRange {
            what: "points",
            value: points as f64,
            range: "[2, inf)",
        });
    }
    let equal = cs.stopping.case == crate::stopping::Case::B;
    let mut rows = Vec::with_capacity(points);
    for k in 0..points {
        let x = lo + (hi - lo) * k as f64 / (points - 1) as f64;
        let row = BoundaryRow {
            x,
            single_low: single_regime_b(p, s_lo, x),
            regime_low: cs.b_star(low, x),
            regime_high: cs.b_star(high, x),
            single_high: single_regime_b(p, s_hi, x),
        };
        let chain = [
            ("single_low", row.single_low),
            ("regime_low", row.regime_low),
            ("regime_high", row.regime_high),
            ("single_high", row.single_high),
        ];
        for pair in chain.windows(2) {
            let ((n0, v0), (n1, v1)) = (pair[0], pair[1]);
            let ok = if equal {
                (v0 - v1).abs() <= 1e-12
            } else {
                v0 < v1 || (v0 == v1 && (v0 == 0.0 || v0 == 1.0))
            };
            if !ok {
                return Err(Error::OrderingViolated {
                    x,
                    detail: format!("{n0} = {v0} vs {n1} = {v1}"),
                });
            }
        }
        rows.push(row);
    }
    Ok(OrderingReport {
        low_regime: low.label(),
        rows,
    })
}
