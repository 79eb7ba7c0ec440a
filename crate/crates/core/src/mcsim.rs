//! Monte Carlo simulation of the controlled price/reserve system.
//!
//! Paths are simulated on an Euler grid with the exact jump times of the
//! regime chain inserted, so the chain contributes no discretization error.
//! Reflecting policies are applied as a projection after every step.

use std::io::{self, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::control::ControlSolution;
use crate::error::{Error, Result};
use crate::model::{self, ModelParams, Regime};

/// Simulation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub base_seed: u64,
    pub antithetic: bool,
}

impl SimConfig {
    /// Defaults: `dt = 1e-3`, `T = 10 / rho`, `1e5` antithetic paths.
    pub fn new(params: &ModelParams) -> Self {
        Self {
            dt: 1e-3,
            horizon: 10.0 / params.rho,
            n_paths: 100_000,
            base_seed: 0,
            antithetic: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidSimConfig(format!(
                "dt = {} must be positive",
                self.dt
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidSimConfig(format!(
                "horizon = {} must be positive",
                self.horizon
            )));
        }
        if self.dt > self.horizon {
            return Err(Error::InvalidSimConfig(format!(
                "dt = {} exceeds the horizon {}",
                self.dt, self.horizon
            )));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidSimConfig("n_paths must be at least 1".into()));
        }
        if self.antithetic && self.n_paths % 2 == 1 {
            return Err(Error::InvalidSimConfig(format!(
                "antithetic sampling needs an even number of paths, got {}",
                self.n_paths
            )));
        }
        Ok(())
    }
}

/// Reserve level below which the policy keeps the reserve, as a function of
/// the regime and the price.
pub type BoundaryFn = Arc<dyn Fn(Regime, f64) -> f64 + Send + Sync>;

/// Extraction policy.
#[derive(Clone)]
pub enum Policy {
    /// Reflection at the optimal boundaries `b*_i(x)`.
    ReflectOptimal,
    NeverExtract,
    /// Sell the whole reserve at time zero.
    ExtractAllAtStart,
    /// Reflection at a caller-supplied boundary.
    ReflectAtCustomBoundary(BoundaryFn),
}

impl std::fmt::Debug for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

impl Policy {
    pub fn id(&self) -> &'static str {
        match self {
            Policy::ReflectOptimal => "reflect_optimal",
            Policy::NeverExtract => "never_extract",
            Policy::ExtractAllAtStart => "extract_all_at_start",
            Policy::ReflectAtCustomBoundary(_) => "reflect_at_custom_boundary",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimOutcome {
    pub mean: f64,
    /// Standard error; with antithetic sampling it is computed from the
    /// averages of the antithetic pairs.
    pub std_error: f64,
    pub n_paths: usize,
    pub tail_bound: f64,
    pub policy_id: String,
}

/// One node of a recorded path, after the policy acted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub regime: u8,
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "Y")]
    pub y: f64,
    pub dnu: f64,
    /// Discounted sale proceeds at this node minus the discounted running
    /// cost accrued since the previous node.
    pub discounted_increment: f64,
}

/// Writes a trace as CSV with header `t,regime,X,Y,dnu,discounted_increment`.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut out: W) -> io::Result<()> {
    writeln!(out, "t,regime,X,Y,dnu,discounted_increment")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.t, r.regime, r.x, r.y, r.dnu, r.discounted_increment
        )?;
    }
    Ok(())
}

/// Jump times of the regime chain on `[0, T]` and the state entered at each.
pub fn simulate_chain<R: Rng>(
    params: &ModelParams,
    i0: Regime,
    horizon: f64,
    rng: &mut R,
) -> Vec<(f64, Regime)> {
    let mut jumps = Vec::new();
    let mut t = 0.0;
    let mut state = i0;
    loop {
        // Rates are validated positive, so Exp::new cannot fail.
        let hold: f64 = Exp::new(params.lambda(state))
            .expect("positive rate")
            .sample(rng);
        t += hold;
        if t >= horizon {
            return jumps;
        }
        state = state.other();
        jumps.push((t, state));
    }
}

/// Discount tail bound for truncating the infinite horizon at `T`.
pub fn tail_bound(params: &ModelParams, x0: f64, horizon: f64) -> f64 {
    let sigma_max = params.sigma1.max(params.sigma2);
    (-params.rho * horizon).exp()
        * (params.cost.value(1.0) / params.rho
            + (x0 - params.c).abs()
            + 3.0 * sigma_max * horizon.sqrt())
}

/// Random streams of one antithetic pair.
fn pair_rngs(base_seed: u64, pair: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut normals = ChaCha8Rng::seed_from_u64(base_seed);
    normals.set_stream(2 * pair);
    let mut chain = ChaCha8Rng::seed_from_u64(base_seed);
    chain.set_stream(2 * pair + 1);
    (normals, chain)
}

/// Simulates one path and returns its discounted payoff.
///
/// With antithetic sampling, paths `2k` and `2k + 1` share the chain and use
/// opposite Gaussian increments.
#[allow(clippy::too_many_arguments)]
pub fn simulate_path(
    cs: &ControlSolution,
    x0: f64,
    y0: f64,
    i0: Regime,
    policy: &Policy,
    cfg: &SimConfig,
    path_index: u64,
    trace: Option<&mut Vec<TraceRow>>,
) -> Result<f64> {
    cfg.validate()?;
    model::check_reserve(y0)?;
    let (pair, sign) = if cfg.antithetic {
        (
            path_index / 2,
            if path_index.is_multiple_of(2) {
                1.0
            } else {
                -1.0
            },
        )
    } else {
        (path_index, 1.0)
    };
    let run = PathRun {
        cs,
        x0,
        y0,
        i0,
        policy,
        dt: cfg.dt,
        horizon: cfg.horizon,
        base_seed: cfg.base_seed,
    };
    Ok(run.payoffs(&[1], pair, sign, trace)[0])
}

/// Monte Carlo estimate of the value of `policy` at `(x0, y0, i0)`.
pub fn estimate_value(
    cs: &ControlSolution,
    x0: f64,
    y0: f64,
    i0: Regime,
    policy: &Policy,
    cfg: &SimConfig,
) -> Result<SimOutcome> {
    cfg.validate()?;
    model::check_reserve(y0)?;
    let run = PathRun {
        cs,
        x0,
        y0,
        i0,
        policy,
        dt: cfg.dt,
        horizon: cfg.horizon,
        base_seed: cfg.base_seed,
    };
    let samples: Vec<f64> = if cfg.antithetic {
        (0..cfg.n_paths as u64 / 2)
            .into_par_iter()
            .map(|pair| {
                0.5 * (run.payoffs(&[1], pair, 1.0, None)[0]
                    + run.payoffs(&[1], pair, -1.0, None)[0])
            })
            .collect()
    } else {
        (0..cfg.n_paths as u64)
            .into_par_iter()
            .map(|k| run.payoffs(&[1], k, 1.0, None)[0])
            .collect()
    };
    let (mean, std_error) = mean_and_se(&samples);
    Ok(SimOutcome {
        mean,
        std_error,
        n_paths: cfg.n_paths,
        tail_bound: tail_bound(cs.params(), x0, cfg.horizon),
        policy_id: policy.id().to_string(),
    })
}

/// Empirical discretization-bias budget from a coupled `dt` / `dt/2` run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasEstimate {
    pub n_paths: usize,
    pub mean_coarse: f64,
    pub mean_fine: f64,
    /// `mean_coarse - mean_fine`.
    pub diff: f64,
    pub se_diff: f64,
    /// Constant in `bias(dt) ~ C_d dt^(1/2)`.
    pub c_d: f64,
    pub tail_bound: f64,
    /// `tail_bound + (|diff| + 3 se_diff) / (1 - 2^(-1/2))`.
    pub budget: f64,
}

/// Runs `n_paths` coupled paths at steps `cfg.dt` and `cfg.dt / 2` that share
/// the Brownian path and the regime chain, and converts the difference of
/// the two estimates into a bias budget for step `cfg.dt`.
pub fn estimate_bias(
    cs: &ControlSolution,
    x0: f64,
    y0: f64,
    i0: Regime,
    policy: &Policy,
    cfg: &SimConfig,
    n_paths: usize,
) -> Result<BiasEstimate> {
    let sub = SimConfig { n_paths, ..*cfg };
    sub.validate()?;
    model::check_reserve(y0)?;
    let run = PathRun {
        cs,
        x0,
        y0,
        i0,
        policy,
        dt: cfg.dt / 2.0,
        horizon: cfg.horizon,
        base_seed: cfg.base_seed,
    };
    // Each sample: (coarse, fine), averaged over the antithetic pair.
    let samples: Vec<[f64; 2]> = if sub.antithetic {
        (0..n_paths as u64 / 2)
            .into_par_iter()
            .map(|pair| {
                let a = run.payoffs(&[2, 1], pair, 1.0, None);
                let b = run.payoffs(&[2, 1], pair, -1.0, None);
                [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
            })
            .collect()
    } else {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|k| {
                let a = run.payoffs(&[2, 1], k, 1.0, None);
                [a[0], a[1]]
            })
            .collect()
    };
    let coarse: Vec<f64> = samples.iter().map(|s| s[0]).collect();
    let fine: Vec<f64> = samples.iter().map(|s| s[1]).collect();
    let diffs: Vec<f64> = samples.iter().map(|s| s[0] - s[1]).collect();
    let (mean_coarse, _) = mean_and_se(&coarse);
    let (mean_fine, _) = mean_and_se(&fine);
    let (diff, se_diff) = mean_and_se(&diffs);
    let ratio = 1.0 - std::f64::consts::FRAC_1_SQRT_2;
    let tail = tail_bound(cs.params(), x0, cfg.horizon);
    Ok(BiasEstimate {
        n_paths,
        mean_coarse,
        mean_fine,
        diff,
        se_diff,
        c_d: diff.abs() / (ratio * cfg.dt.sqrt()),
        tail_bound: tail,
        budget: tail + (diff.abs() + 3.0 * se_diff) / ratio,
    })
}

/// Checks the discrete Skorokhod conditions against the optimal boundaries:
/// the reserve never ends a step above `b*` and the policy only extracts
/// when the pre-update reserve exceeded `b*`.
pub fn skorokhod_check(cs: &ControlSolution, trace: &[TraceRow]) -> Result<()> {
    const TOL: f64 = 1e-12;
    for (step, r) in trace.iter().enumerate() {
        let i = Regime::from_label(r.regime)?;
        let b = cs.b_star(i, r.x);
        if r.y > b + TOL {
            return Err(Error::SrpViolated {
                step,
                detail: format!("reserve {} above boundary {b} at x = {}", r.y, r.x),
            });
        }
        if r.dnu > 0.0 {
            let pre = r.y + r.dnu;
            if pre <= b + TOL {
                return Err(Error::SrpViolated {
                    step,
                    detail: format!(
                        "extracted {} although the reserve {pre} was not above {b}",
                        r.dnu
                    ),
                });
            }
        }
    }
    Ok(())
}

/// Mean and standard error, summed pairwise for reproducible totals.
pub fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = pairwise_sum(samples) / n;
    if samples.len() < 2 {
        return (mean, f64::NAN);
    }
    let sq: Vec<f64> = samples.iter().map(|s| (s - mean) * (s - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

struct PathRun<'a> {
    cs: &'a ControlSolution,
    x0: f64,
    y0: f64,
    i0: Regime,
    policy: &'a Policy,
    dt: f64,
    horizon: f64,
    base_seed: u64,
}

/// Controlled reserve seen by an observer acting every `stride` grid steps.
struct Observer {
    stride: u64,
    y: f64,
    payoff: f64,
    fy: f64,
    /// Price above which the reflecting policy acts at the current reserve.
    threshold: f64,
    done: bool,
}

impl PathRun<'_> {
    /// Payoffs of one path for observers acting every `strides[k]` steps of
    /// the grid `self.dt` (and at every regime switch).
    fn payoffs(
        &self,
        strides: &[u64],
        pair: u64,
        sign: f64,
        mut trace: Option<&mut Vec<TraceRow>>,
    ) -> Vec<f64> {
        let p = self.cs.params();
        let rho = p.rho;
        if self.y0 == 0.0 {
            return vec![0.0; strides.len()];
        }
        if matches!(self.policy, Policy::NeverExtract) && trace.is_none() {
            let v = -p.cost.value(self.y0) * (-(-rho * self.horizon).exp_m1()) / rho;
            return vec![v; strides.len()];
        }
        let (mut normals, mut chain_rng) = pair_rngs(self.base_seed, pair);
        let jumps = simulate_chain(p, self.i0, self.horizon, &mut chain_rng);

        let mut x = self.x0;
        let mut eps = self.i0;
        let mut t = 0.0;
        let mut disc = 1.0;
        let mut k: u64 = 0;
        let mut grid_disc = 1.0;
        let step_disc = (-rho * self.dt).exp();
        let n_steps = (self.horizon / self.dt).ceil() as u64;
        let mut next_jump = 0;
        let sqrt_dt = self.dt.sqrt();

        let mut obs: Vec<Observer> = strides
            .iter()
            .map(|&stride| Observer {
                stride,
                y: self.y0,
                payoff: 0.0,
                fy: p.cost.value(self.y0),
                threshold: self.threshold(eps, self.y0),
                done: false,
            })
            .collect();

        let mut accrued = 0.0;
        self.act(&mut obs, 0, true, eps, x, disc, &mut trace, t, &mut accrued);

        while k < n_steps && obs.iter().any(|o| !o.done) {
            let grid_t = if k + 1 == n_steps {
                self.horizon
            } else {
                (k + 1) as f64 * self.dt
            };
            let jump = jumps.get(next_jump).filter(|j| j.0 < grid_t).copied();
            let (t_next, h, disc_next) = match jump {
                Some((tj, _)) => (tj, tj - t, (-rho * tj).exp()),
                None => {
                    let d = if k + 1 == n_steps {
                        (-rho * self.horizon).exp()
                    } else {
                        grid_disc * step_disc
                    };
                    (grid_t, grid_t - t, d)
                }
            };
            let cost_weight = (disc - disc_next) / rho;
            for o in obs.iter_mut().filter(|o| !o.done) {
                o.payoff -= o.fy * cost_weight;
            }
            if trace.is_some() {
                accrued = obs[0].fy * cost_weight;
            }
            let z: f64 = StandardNormal.sample(&mut normals);
            let sd = if h == self.dt { sqrt_dt } else { h.sqrt() };
            x += sign * p.sigma(eps) * sd * z;
            t = t_next;
            disc = disc_next;
            let on_grid = match jump {
                Some((_, state)) => {
                    eps = state;
                    next_jump += 1;
                    for o in obs.iter_mut() {
                        o.threshold = self.threshold(eps, o.y);
                    }
                    false
                }
                None => {
                    k += 1;
                    grid_disc = disc_next;
                    true
                }
            };
            let at = if on_grid { k } else { u64::MAX };
            self.act(
                &mut obs,
                at,
                !on_grid,
                eps,
                x,
                disc,
                &mut trace,
                t,
                &mut accrued,
            );
        }
        obs.iter().map(|o| o.payoff).collect()
    }

    fn threshold(&self, eps: Regime, y: f64) -> f64 {
        match self.policy {
            Policy::ReflectOptimal if y > 0.0 => {
                let p = self.cs.params();
                self.cs.stopping().shift(eps) + p.c_hat_unchecked(y)
            }
            _ => f64::INFINITY,
        }
    }

    /// Applies the policy for every observer that acts at this node.
    #[allow(clippy::too_many_arguments)]
    fn act(
        &self,
        obs: &mut [Observer],
        k: u64,
        all: bool,
        eps: Regime,
        x: f64,
        disc: f64,
        trace: &mut Option<&mut Vec<TraceRow>>,
        t: f64,
        accrued: &mut f64,
    ) {
        let p = self.cs.params();
        let mut first_dnu = 0.0;
        for (n, o) in obs.iter_mut().enumerate() {
            if o.done || !(all || k.is_multiple_of(o.stride)) {
                continue;
            }
            let target = match self.policy {
                Policy::ReflectOptimal => {
                    if x > o.threshold {
                        Some(self.cs.b_star(eps, x))
                    } else {
                        None
                    }
                }
                Policy::NeverExtract => None,
                Policy::ExtractAllAtStart => Some(0.0),
                Policy::ReflectAtCustomBoundary(ref b) => Some(b(eps, x).max(0.0)),
            };
            if let Some(b) = target {
                let dnu = o.y - b;
                if dnu > 0.0 {
                    o.payoff += disc * (x - p.c) * dnu;
                    o.y = b;
                    o.fy = p.cost.value(b);
                    o.threshold = self.threshold(eps, b);
                    if n == 0 {
                        first_dnu = dnu;
                    }
                }
            }
            if o.y <= 0.0 {
                o.y = 0.0;
                o.done = true;
            }
        }
        if let Some(rows) = trace.as_deref_mut() {
            let o = &obs[0];
            rows.push(TraceRow {
                t,
                regime: eps.label(),
                x,
                y: o.y,
                dnu: first_dnu,
                discounted_increment: disc * (x - p.c) * first_dnu - *accrued,
            });
            *accrued = 0.0;
        }
    }
}
