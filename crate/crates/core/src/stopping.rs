//! The family of optimal selling problems indexed by the reserve level `y`.
//!
//! For every `y` the stopping value `w(x, i; y)` depends on `x` only through
//! `xi = x - c_hat(y)`, so the whole family is described by two numbers: the
//! distance `z1` from `c_hat(y)` to the regime-1 selling boundary and the gap
//! `z2` between the two regime boundaries. They are found from the two
//! smooth-fit equations handled by [`SmoothFit`].

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{self, check_assumptions, Market, ModelParams, Regime};
use crate::roots::{self, RootSet};

/// Offset from the end points of the `z2` bracket, relative to `zhat2`.
const BRACKET_EPS: f64 = 1e-10;
const ZHAT2_TOL: f64 = 1e-12;
const ZHAT2_CROSS_CHECK: f64 = 1e-10;
const G_TOL: f64 = 1e-10;

/// The smooth-fit system in the unknowns `u = z1`, `v = z2`.
///
/// Eliminating the coefficients of `w` from the six value-matching and
/// smooth-fit conditions leaves
///
/// ```text
/// G1(u, v) = h(v) u - (q/alpha5) [sinh(alpha5 v) - alpha5 v cosh(alpha5 v)] + a2
/// G2(u, v) = (a3 - q alpha5 sinh(alpha5 v)) u - q [alpha5 v sinh(alpha5 v) - cosh(alpha5 v)] + a4
/// ```
///
/// with `q = rho/(rho+lambda2)` and `h(v) = a1_fit + q cosh(alpha5 v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothFit {
    q: f64,
    alpha5: f64,
    a1_fit: f64,
    a2: f64,
    a3: f64,
    a4: f64,
}

impl SmoothFit {
    pub fn new(market: &Market, roots: &RootSet) -> Self {
        Self {
            q: market.rho / (market.rho + market.lambda[1]),
            alpha5: roots.alpha5,
            a1_fit: roots.a1_fit,
            a2: roots.a2,
            a3: roots.a3,
            a4: roots.a4,
        }
    }

    pub fn h(&self, v: f64) -> f64 {
        self.a1_fit + self.q * (self.alpha5 * v).cosh()
    }

    /// The positive zero of `h`, in closed form.
    pub fn zhat2_closed_form(&self) -> Result<f64> {
        self.check_h0()?;
        Ok((-self.a1_fit / self.q).acosh() / self.alpha5)
    }

    /// The positive zero of `h`, by bisection to absolute tolerance 1e-12.
    pub fn zhat2_bisection(&self) -> Result<f64> {
        self.check_h0()?;
        let mut lo = 0.0;
        let mut hi = 1.0 / self.alpha5;
        while self.h(hi) < 0.0 {
            lo = hi;
            hi *= 2.0;
        }
        while hi - lo > ZHAT2_TOL {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.h(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    fn check_h0(&self) -> Result<()> {
        let h0 = self.h(0.0);
        if h0 < 0.0 {
            Ok(())
        } else {
            Err(Error::PreconditionViolated(format!(
                "smooth-fit denominator at zero must be negative, got {h0}"
            )))
        }
    }

    fn num1(&self, v: f64) -> f64 {
        let t = self.alpha5 * v;
        self.q / self.alpha5 * (t.sinh() - t * t.cosh()) - self.a2
    }

    fn den2(&self, v: f64) -> f64 {
        self.a3 - self.q * self.alpha5 * (self.alpha5 * v).sinh()
    }

    /// Numerator of `M2`.
    pub fn r(&self, v: f64) -> f64 {
        let t = self.alpha5 * v;
        self.q * (t * t.sinh() - t.cosh()) - self.a4
    }

    pub(crate) fn m1_raw(&self, v: f64) -> f64 {
        self.num1(v) / self.h(v)
    }

    pub(crate) fn m2_raw(&self, v: f64) -> f64 {
        self.r(v) / self.den2(v)
    }

    /// `u = M1(v)` solves `G1(u, v) = 0`; domain `[0, zhat2)`.
    pub fn m1(&self, v: f64) -> Result<f64> {
        let zhat2 = self.zhat2_closed_form()?;
        if !(0.0..zhat2).contains(&v) {
            return Err(Error::DomainError {
                what: "M1",
                value: v,
                domain: format!("[0, {zhat2})"),
            });
        }
        Ok(self.m1_raw(v))
    }

    /// `u = M2(v)` solves `G2(u, v) = 0`; domain `[0, zhat2]`.
    pub fn m2(&self, v: f64) -> Result<f64> {
        let zhat2 = self.zhat2_closed_form()?;
        if !(0.0..=zhat2).contains(&v) {
            return Err(Error::DomainError {
                what: "M2",
                value: v,
                domain: format!("[0, {zhat2}]"),
            });
        }
        Ok(self.m2_raw(v))
    }

    /// `M1(0) - M2(0)`; a negative value gives the sign change the solver needs.
    pub fn gap_at_zero(&self) -> f64 {
        self.m1_raw(0.0) - self.m2_raw(0.0)
    }

    pub fn g1(&self, u: f64, v: f64) -> f64 {
        self.h(v) * u - self.num1(v)
    }

    pub fn g2(&self, u: f64, v: f64) -> f64 {
        self.den2(v) * u - self.r(v)
    }
}

/// Which labelling of the regimes the solution was computed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Case {
    /// Two distinct boundaries, solved as labelled.
    A,
    /// Equal volatilities; a single boundary.
    B,
    /// Two distinct boundaries after exchanging the regime labels.
    C,
}

/// Left or right limit at a point where `w_xx` jumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Value of `w` and its first two `x`-derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WEval {
    pub w: f64,
    pub wx: f64,
    pub wxx: f64,
}

/// Coefficients of `w(., i; y)` in absolute price coordinates, in the labels
/// of the solved problem (`relabeled` solutions use swapped labels).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum WCoefficients {
    TwoBoundaries {
        a3: f64,
        a4: f64,
        b3: f64,
        b4: f64,
        b5: f64,
        b6: f64,
        x1star: f64,
        x2star: f64,
    },
    OneBoundary {
        at3: f64,
        at4: f64,
        bt3: f64,
        bt4: f64,
        xstar: f64,
    },
}

/// Solution of the family of selling problems.
#[derive(Debug, Clone)]
pub struct StoppingSolution {
    pub case: Case,
    /// `x*_1(y) - c_hat(y)` in the solved labels.
    pub z1: f64,
    /// `x*_2(y) - x*_1(y)` in the solved labels.
    pub z2: f64,
    /// Right end of the `z2` bracket; `None` in the equal-volatility case.
    pub zhat2: Option<f64>,
    pub relabeled: bool,
    params: ModelParams,
    solved: ModelParams,
    roots: RootSet,
    shape: Shape,
}

/// Coefficients of `W_i(xi)` in the shifted variable, evaluated relative to
/// the boundaries so nothing overflows.
#[derive(Debug, Clone, Copy)]
struct Shape {
    alpha3: f64,
    alpha4: f64,
    alpha5: f64,
    a3: f64,
    a4: f64,
    k3: f64,
    k4: f64,
    b5: f64,
    b6: f64,
    q: f64,
}

impl StoppingSolution {
    /// Detects the case and solves the smooth-fit system.
    pub fn solve(params: &ModelParams) -> Result<Self> {
        let market = params.market();
        if market.equal_volatility() {
            let roots = roots::solve_characteristic(&market)?;
            let z1 = market.sigma[0] / (2.0 * market.rho).sqrt();
            return Ok(Self::assemble(
                Case::B,
                z1,
                0.0,
                None,
                false,
                params.clone(),
                params.clone(),
                roots,
            ));
        }
        let mut rejected = Vec::new();
        for relabeled in [false, true] {
            let solved = if relabeled {
                params.swapped()
            } else {
                params.clone()
            };
            let m = solved.market();
            let roots = roots::solve_characteristic(&m)?;
            let report = check_assumptions(&m, &roots, 0.0);
            if !report.solvable {
                rejected.push(report);
                continue;
            }
            let fit = SmoothFit::new(&m, &roots);
            let (z1, z2, zhat2) = solve_smooth_fit(&fit)?;
            let case = if relabeled { Case::C } else { Case::A };
            return Ok(Self::assemble(
                case,
                z1,
                z2,
                Some(zhat2),
                relabeled,
                params.clone(),
                solved,
                roots,
            ));
        }
        Err(Error::AssumptionViolated(format!(
            "as labelled: {:?}; swapped: {:?}",
            rejected[0].values, rejected[1].values
        )))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        case: Case,
        z1: f64,
        z2: f64,
        zhat2: Option<f64>,
        relabeled: bool,
        params: ModelParams,
        solved: ModelParams,
        roots: RootSet,
    ) -> Self {
        let shape = Shape::new(&solved, &roots, z1, z2);
        Self {
            case,
            z1,
            z2,
            zhat2,
            relabeled,
            params,
            solved,
            roots,
            shape,
        }
    }

    /// Same solution with `z2` shifted by `delta` and `w` rebuilt from it;
    /// used to exercise the verifiers.
    pub fn with_perturbed_z2(&self, delta: f64) -> Self {
        Self::assemble(
            self.case,
            self.z1,
            self.z2 + delta,
            self.zhat2,
            self.relabeled,
            self.params.clone(),
            self.solved.clone(),
            self.roots,
        )
    }

    /// Parameters as supplied by the caller.
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Roots in the solved labels.
    pub fn roots(&self) -> &RootSet {
        &self.roots
    }

    /// Maps a caller regime to the solved labels.
    pub(crate) fn internal(&self, i: Regime) -> Regime {
        if self.relabeled {
            i.other()
        } else {
            i
        }
    }

    /// `x*_i(y) - c_hat(y)` for the caller's regime `i`.
    pub fn shift(&self, i: Regime) -> f64 {
        match self.internal(i) {
            Regime::One => self.z1,
            Regime::Two => self.z1 + self.z2,
        }
    }

    /// Selling boundary `x*_i(y)`.
    pub fn x_star(&self, i: Regime, y: f64) -> Result<f64> {
        Ok(self.shift(i) + self.params.c_hat(y)?)
    }

    /// `W_i(xi) = w(xi + c_hat(y), i; y)`, independent of `y`.
    pub fn w_shifted(&self, xi: f64, i: Regime, side: Side) -> WEval {
        let k = self.internal(i);
        self.shape
            .eval(k, self.region(xi, side), xi, self.z1, self.z1 + self.z2)
    }

    /// `W_i(xi)` using the formula of a given piece, whatever side of the
    /// boundaries `xi` is on.
    pub(crate) fn w_region(&self, xi: f64, i: Regime, region: Region) -> WEval {
        let k = self.internal(i);
        self.shape.eval(k, region, xi, self.z1, self.z1 + self.z2)
    }

    fn region(&self, xi: f64, side: Side) -> Region {
        let zz = self.z1 + self.z2;
        let below = |b: f64| match side {
            Side::Left => xi <= b,
            Side::Right => xi < b,
        };
        if below(self.z1) {
            Region::Low
        } else if below(zz) {
            Region::Mid
        } else {
            Region::High
        }
    }

    pub fn w(&self, x: f64, i: Regime, y: f64) -> Result<f64> {
        Ok(self.w_shifted(x - self.params.c_hat(y)?, i, Side::Left).w)
    }

    pub fn w_x(&self, x: f64, i: Regime, y: f64) -> Result<f64> {
        Ok(self.w_shifted(x - self.params.c_hat(y)?, i, Side::Left).wx)
    }

    /// One-sided second derivative; it jumps at the boundaries.
    pub fn w_xx(&self, x: f64, i: Regime, y: f64, side: Side) -> Result<f64> {
        Ok(self.w_shifted(x - self.params.c_hat(y)?, i, side).wxx)
    }

    /// `v(x, i; y) = w(x, i; y) - f'(y)/rho`.
    pub fn v(&self, x: f64, i: Regime, y: f64) -> Result<f64> {
        Ok(self.w(x, i, y)? - self.params.cost.derivative(y) / self.params.rho)
    }

    /// Coefficients of `w(., i; y)` in absolute coordinates (solved labels).
    pub fn w_coefficients(&self, y: f64) -> Result<WCoefficients> {
        let c_hat = self.params.c_hat(y)?;
        let s = &self.shape;
        let x1 = self.z1 + c_hat;
        let a3 = s.a3 * (-s.alpha3 * x1).exp();
        let a4 = s.a4 * (-s.alpha4 * x1).exp();
        Ok(match self.case {
            Case::B => WCoefficients::OneBoundary {
                at3: a3,
                at4: a4,
                bt3: s.k3 * a3,
                bt4: s.k4 * a4,
                xstar: x1,
            },
            Case::A | Case::C => {
                let x2 = x1 + self.z2;
                // The middle branch is b5 e^{a5 x} + b6 e^{-a5 x} + (1-q)(x - c_hat).
                WCoefficients::TwoBoundaries {
                    a3,
                    a4,
                    b3: s.k3 * a3,
                    b4: s.k4 * a4,
                    b5: s.b5 * (-s.alpha5 * x2).exp(),
                    b6: s.b6 * (s.alpha5 * x2).exp(),
                    x1star: x1,
                    x2star: x2,
                }
            }
        })
    }

    /// The two expressions for the single boundary distance obtained from
    /// the third and fourth pasting conditions when both regimes share one
    /// boundary; they agree exactly when the volatilities coincide.
    pub fn single_boundary_candidates(market: &Market, roots: &RootSet) -> (f64, f64) {
        let s2h = 0.5 * market.sigma[0] * market.sigma[0];
        let (a3, a4) = (roots.alpha3, roots.alpha4);
        let rho = market.rho;
        let first = s2h * (a3 + a4) / (rho + s2h * a3 * a4);
        let second = (s2h * (a3 * a3 + a4 * a4 + a3 * a4) - rho) / (s2h * a3 * a4 * (a3 + a4));
        (first, second)
    }

    /// Checks the free-boundary problem on a grid at reserve level `y`.
    pub fn verify_fbp(&self, y: f64, grid: &FbpGrid) -> Result<FbpReport> {
        model::check_reserve(y)?;
        let c_hat = self.params.c_hat_unchecked(y);
        let zz = self.z1 + self.z2;
        let lo = grid.x_min.map_or(-10.0 * self.z1, |x| x - c_hat);
        let hi = grid.x_max.map_or(zz + 10.0 * self.z1, |x| x - c_hat);
        if grid.points < 2 || !(hi > lo) {
            return Err(Error::OutOfRange {
                what: "grid points",
                value: grid.points as f64,
                range: "[2, inf) on a non-empty interval",
            });
        }
        let boundaries: Vec<f64> = if self.case == Case::B {
            vec![self.z1]
        } else {
            vec![self.z1, zz]
        };

        let mut report = FbpReport::default();
        let mut worst = Worst::default();
        let step = (hi - lo) / (grid.points - 1) as f64;
        let nodes = (0..grid.points)
            .map(|k| lo + k as f64 * step)
            .chain(boundaries.iter().copied());
        for xi in nodes {
            for side in [Side::Left, Side::Right] {
                for i in Regime::BOTH {
                    let k = self.internal(i);
                    let own = self.w_shifted(xi, i, side);
                    let other = self.w_shifted(xi, i.other(), side);
                    let sigma = self.solved.sigma(k);
                    let op = 0.5 * sigma * sigma * own.wxx
                        + self.solved.lambda(k) * (other.w - own.w)
                        - self.solved.rho * own.w;
                    let stop_at = match k {
                        Regime::One => self.z1,
                        Regime::Two => zz,
                    };
                    let continuation = match side {
                        Side::Left => xi <= stop_at,
                        Side::Right => xi < stop_at,
                    };
                    let x = xi + c_hat;
                    if continuation {
                        report.max_ode_residual = report.max_ode_residual.max(op.abs());
                        worst.update(0, op.abs(), x, i);
                    }
                    report.max_operator = report.max_operator.max(op);
                    worst.update(1, op, x, i);
                    let gap = own.w - xi;
                    report.min_obstacle_gap = report.min_obstacle_gap.min(gap);
                    worst.update(2, -gap, x, i);
                }
            }
        }

        let h = grid.c1_step;
        for &b in &boundaries {
            for i in Regime::BOTH {
                let w = |t: f64| self.w_shifted(t, i, Side::Left).w;
                let left_value = self.w_shifted(b, i, Side::Left).w;
                let right_value = self.w_shifted(b, i, Side::Right).w;
                let value_jump = (left_value - right_value).abs();
                // Second-order one-sided differences.
                let d_left = (3.0 * w(b) - 4.0 * w(b - h) + w(b - 2.0 * h)) / (2.0 * h);
                let d_right = (-3.0 * w(b) + 4.0 * w(b + h) - w(b + 2.0 * h)) / (2.0 * h);
                let jump = (d_left - d_right).abs();
                report.max_value_jump = report.max_value_jump.max(value_jump);
                report.max_c1_jump = report.max_c1_jump.max(jump);
                worst.update(3, value_jump, b + c_hat, i);
                worst.update(4, jump, b + c_hat, i);
            }
        }
        report.points = grid.points;

        let checks: [(&'static str, f64, f64); 5] = [
            ("ode residual", report.max_ode_residual, grid.ode_tol),
            ("operator inequality", report.max_operator, grid.ineq_tol),
            ("obstacle", -report.min_obstacle_gap, grid.obstacle_tol),
            ("value continuity", report.max_value_jump, grid.c1_tol),
            ("C1 fit", report.max_c1_jump, grid.c1_tol),
        ];
        for (slot, (check, value, tol)) in checks.into_iter().enumerate() {
            if !(value <= tol) {
                let (x, regime) = worst.at[slot];
                return Err(Error::VerificationFailed {
                    check,
                    x,
                    y,
                    regime: regime.label(),
                    residual: value,
                });
            }
        }
        Ok(report)
    }
}

/// Smooth pieces of `W_i`: below `z1`, between `z1` and `z1 + z2`, above.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Region {
    Low,
    Mid,
    High,
}

impl Shape {
    fn new(p: &ModelParams, r: &RootSet, z1: f64, z2: f64) -> Self {
        let (alpha3, alpha4, alpha5) = (r.alpha3, r.alpha4, r.alpha5);
        let q = p.rho / (p.rho + p.lambda2);
        let zz = z1 + z2;
        Self {
            alpha3,
            alpha4,
            alpha5,
            a3: (alpha4 * z1 - 1.0) / (alpha4 - alpha3),
            a4: (1.0 - alpha3 * z1) / (alpha4 - alpha3),
            k3: p.phi(Regime::One, alpha3) / p.lambda1,
            k4: p.phi(Regime::One, alpha4) / p.lambda1,
            b5: q * (1.0 + alpha5 * zz) / (2.0 * alpha5),
            b6: q * (alpha5 * zz - 1.0) / (2.0 * alpha5),
            q,
        }
    }

    fn eval(&self, k: Regime, region: Region, xi: f64, z1: f64, zz: f64) -> WEval {
        let linear = WEval {
            w: xi,
            wx: 1.0,
            wxx: 0.0,
        };
        match (region, k) {
            (Region::Low, _) => {
                let (c3, c4) = match k {
                    Regime::One => (self.a3, self.a4),
                    Regime::Two => (self.k3 * self.a3, self.k4 * self.a4),
                };
                let e3 = c3 * (self.alpha3 * (xi - z1)).exp();
                let e4 = c4 * (self.alpha4 * (xi - z1)).exp();
                WEval {
                    w: e3 + e4,
                    wx: self.alpha3 * e3 + self.alpha4 * e4,
                    wxx: self.alpha3 * self.alpha3 * e3 + self.alpha4 * self.alpha4 * e4,
                }
            }
            (Region::Mid, Regime::Two) => {
                let ep = self.b5 * (self.alpha5 * (xi - zz)).exp();
                let em = self.b6 * (-self.alpha5 * (xi - zz)).exp();
                let a2 = self.alpha5 * self.alpha5;
                WEval {
                    w: ep + em + (1.0 - self.q) * xi,
                    wx: self.alpha5 * (ep - em) + (1.0 - self.q),
                    wxx: a2 * (ep + em),
                }
            }
            _ => linear,
        }
    }
}

/// Bisection for the root of `M1 - M2` on `(0, zhat2)`; returns `(z1, z2, zhat2)`.
pub fn solve_smooth_fit(fit: &SmoothFit) -> Result<(f64, f64, f64)> {
    let zhat2 = fit.zhat2_bisection()?;
    let closed = fit.zhat2_closed_form()?;
    if !((zhat2 - closed).abs() <= ZHAT2_CROSS_CHECK) {
        return Err(Error::CrossCheckFailed {
            what: "zhat2",
            lhs: zhat2,
            rhs: closed,
        });
    }
    let zhat2 = closed;
    let gap = |v: f64| fit.m1_raw(v) - fit.m2_raw(v);

    let mut eps = BRACKET_EPS;
    let (mut lo, mut hi) = loop {
        let (lo, hi) = (eps * zhat2, zhat2 * (1.0 - eps));
        if gap(lo) < 0.0 && gap(hi) > 0.0 {
            break (lo, hi);
        }
        eps *= 0.01;
        if eps < 1e-16 {
            return Err(Error::NoBracket { lo, hi });
        }
    };
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gap(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let z2 = if gap(lo).abs() <= gap(hi).abs() {
        lo
    } else {
        hi
    };
    let z1 = fit.m1_raw(z2);
    let (g1, g2) = (fit.g1(z1, z2), fit.g2(z1, z2));
    if !(g1.abs() <= G_TOL && g2.abs() <= G_TOL) {
        return Err(Error::SmoothFitResidual { g1, g2 });
    }
    Ok((z1, z2, zhat2))
}

/// Grid and tolerances for [`StoppingSolution::verify_fbp`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbpGrid {
    /// Lower end of the price grid; default `c_hat(y) - 10 z1`.
    pub x_min: Option<f64>,
    /// Upper end of the price grid; default `x*_2(y) + 10 z1`.
    pub x_max: Option<f64>,
    pub points: usize,
    pub ode_tol: f64,
    pub ineq_tol: f64,
    pub obstacle_tol: f64,
    pub c1_tol: f64,
    pub c1_step: f64,
}

impl Default for FbpGrid {
    fn default() -> Self {
        Self {
            x_min: None,
            x_max: None,
            points: 10_000,
            ode_tol: 1e-7,
            ineq_tol: 1e-7,
            obstacle_tol: 1e-9,
            c1_tol: 1e-6,
            c1_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FbpReport {
    pub points: usize,
    pub max_ode_residual: f64,
    pub max_operator: f64,
    pub min_obstacle_gap: f64,
    pub max_value_jump: f64,
    pub max_c1_jump: f64,
}

impl Default for FbpReport {
    fn default() -> Self {
        Self {
            points: 0,
            max_ode_residual: 0.0,
            max_operator: f64::NEG_INFINITY,
            min_obstacle_gap: f64::INFINITY,
            max_value_jump: 0.0,
            max_c1_jump: 0.0,
        }
    }
}

/// Location of the largest value seen for each check.
#[derive(Debug)]
struct Worst {
    value: [f64; 5],
    at: [(f64, Regime); 5],
}

impl Default for Worst {
    fn default() -> Self {
        Self {
            value: [f64::NEG_INFINITY; 5],
            at: [(f64::NAN, Regime::One); 5],
        }
    }
}

impl Worst {
    fn update(&mut self, slot: usize, value: f64, x: f64, i: Regime) {
        if value > self.value[slot] || value.is_nan() {
            self.value[slot] = value;
            self.at[slot] = (x, i);
        }
    }
}
