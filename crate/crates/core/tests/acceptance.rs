//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use regime_extract::control::{self, HjbGrid};
use regime_extract::mcsim::{self, Policy, SimConfig, TraceRow};
use regime_extract::model::{self, CostFunction, Feasibility, Market, ModelParams, Regime};
use regime_extract::roots;
use regime_extract::stopping::{FbpGrid, SmoothFit, StoppingSolution};
use regime_extract::ControlSolution;

type Outcome = Result<String, String>;

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
    .expect("valid parameters")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sign_lemma() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for n in 0..1000 {
        let m = Market::new(
            rng.gen_range(0.01..2.0),
            rng.gen_range(0.05..3.0),
            rng.gen_range(0.05..3.0),
            rng.gen_range(0.01..3.0),
            rng.gen_range(0.01..3.0),
        )
        .map_err(|e| e.to_string())?;
        let r = roots::solve_characteristic(&m).map_err(|e| e.to_string())?;
        ensure(roots::check_sign_lemma(&r), || {
            format!(
                "draw {n}: {m:?} gives a1..a4 = {} {} {} {}",
                r.a1, r.a2, r.a3, r.a4
            )
        })?;
    }
    Ok("1000 draws, no exceptions".into())
}

fn assumption_feasibility() -> Outcome {
    let rows = [
        (0.0315, 0.0245, 0.78, 0.016, 0.015),
        (0.026, 0.039, 0.645, 0.435, 0.043),
        (0.335, 0.28, 1.75, 1.6, 0.43),
    ];
    for (rho, s1, s2, l1, l2) in rows {
        let m = Market::new(rho, s1, s2, l1, l2).map_err(|e| e.to_string())?;
        let r = roots::solve_characteristic(&m).map_err(|e| e.to_string())?;
        let rep = model::check_assumptions(&m, &r, 0.0);
        ensure(rep.a5_le_1 && rep.cond2 && rep.cond3 && rep.cond4, || {
            format!("row {:?} fails: {rep:?}", (rho, s1, s2, l1, l2))
        })?;
    }
    let m = baseline().market();
    let r = roots::solve_characteristic(&m).map_err(|e| e.to_string())?;
    let rep = model::check_assumptions(&m, &r, 0.0);
    ensure(rep.all_ok, || format!("baseline parameters fail: {rep:?}"))?;
    Ok("three tabulated midpoints and the baseline parameters pass".into())
}

fn feasibility_raster() -> Outcome {
    let n = 200;
    let (s1r, s2r) = ((0.01, 0.06), (0.5, 1.2));
    let cells =
        model::feasibility_raster(0.03, 0.017, 0.016, s1r, s2r, n).map_err(|e| e.to_string())?;
    let feasible: Vec<bool> = cells
        .iter()
        .map(|c| c.status == Feasibility::Feasible)
        .collect();
    let count = feasible.iter().filter(|&&f| f).count();
    ensure(count > 0, || "empty feasible set".into())?;
    let cell_of = |v: f64, (lo, hi): (f64, f64)| ((v - lo) / (hi - lo) * n as f64) as usize;
    let target = cell_of(0.0245, s1r) * n + cell_of(0.78, s2r);
    ensure(feasible[target], || "(0.0245, 0.78) is not feasible".into())?;
    // Largest 4-connected component.
    let mut seen = vec![false; n * n];
    let mut largest = 0;
    for start in 0..n * n {
        if !feasible[start] || seen[start] {
            continue;
        }
        let mut stack = vec![start];
        seen[start] = true;
        let mut size = 0;
        while let Some(c) = stack.pop() {
            size += 1;
            let (r, k) = (c / n, c % n);
            let mut push = |nb: usize| {
                if feasible[nb] && !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            };
            if r > 0 {
                push(c - n);
            }
            if r + 1 < n {
                push(c + n);
            }
            if k > 0 {
                push(c - 1);
            }
            if k + 1 < n {
                push(c + 1);
            }
        }
        largest = largest.max(size);
    }
    ensure(largest as f64 >= 0.99 * count as f64, || {
        format!("feasible set fragmented: largest component {largest} of {count}")
    })?;
    Ok(format!(
        "{count} of {} cells feasible, largest connected component {largest}",
        n * n
    ))
}

fn smooth_fit_solve() -> Outcome {
    let p = baseline();
    let sol = StoppingSolution::solve(&p).map_err(|e| e.to_string())?;
    let m = p.market();
    let r = roots::solve_characteristic(&m).map_err(|e| e.to_string())?;
    let fit = SmoothFit::new(&m, &r);
    let (g1, g2) = (fit.g1(sol.z1, sol.z2), fit.g2(sol.z1, sol.z2));
    ensure(g1.abs() <= 1e-10 && g2.abs() <= 1e-10, || {
        format!("residuals G1 = {g1:e}, G2 = {g2:e}")
    })?;
    let zhat2 = fit.zhat2_closed_form().map_err(|e| e.to_string())?;
    ensure(sol.z2 > 0.0 && sol.z2 < zhat2, || {
        format!("z2 = {} outside (0, {zhat2})", sol.z2)
    })?;
    let lo = fit.m1(0.0).map_err(|e| e.to_string())?;
    let hi = fit.m2(0.0).map_err(|e| e.to_string())?;
    ensure(lo < sol.z1 && sol.z1 < hi, || {
        format!("z1 = {} outside ({lo}, {hi})", sol.z1)
    })?;
    // Independent oracle: cell-centred grid search of |G1| + |G2|.
    let cells = 1000;
    let du = (hi - lo) / cells as f64;
    let dv = zhat2 / cells as f64;
    let best = (0..cells)
        .into_par_iter()
        .map(|a| {
            let u = lo + (a as f64 + 0.5) * du;
            let mut best = (f64::INFINITY, 0.0, 0.0);
            for b in 0..cells {
                let v = (b as f64 + 0.5) * dv;
                let score = fit.g1(u, v).abs() + fit.g2(u, v).abs();
                if score < best.0 {
                    best = (score, u, v);
                }
            }
            best
        })
        .reduce(
            || (f64::INFINITY, 0.0, 0.0),
            |a, b| if b.0 < a.0 { b } else { a },
        );
    ensure(
        (best.1 - sol.z1).abs() <= du && (best.2 - sol.z2).abs() <= dv,
        || {
            format!(
                "grid optimum ({}, {}) vs ({}, {})",
                best.1, best.2, sol.z1, sol.z2
            )
        },
    )?;
    Ok(format!(
        "z1 = {:.10}, z2 = {:.10}, |G1| = {:.1e}, |G2| = {:.1e}, grid cell agrees",
        sol.z1,
        sol.z2,
        g1.abs(),
        g2.abs()
    ))
}

fn fbp_verification() -> Outcome {
    let sol = StoppingSolution::solve(&baseline()).map_err(|e| e.to_string())?;
    let mut worst = (0.0_f64, 0.0_f64);
    for k in 1..=9 {
        let y = k as f64 / 10.0;
        let rep = sol
            .verify_fbp(y, &FbpGrid::default())
            .map_err(|e| e.to_string())?;
        worst.0 = worst.0.max(rep.max_ode_residual.max(rep.max_operator));
        worst.1 = worst.1.max(rep.max_c1_jump);
    }
    Ok(format!(
        "y = 0.1..0.9 pass; max ODE/operator residual {:.1e}, max C1 jump {:.1e}",
        worst.0, worst.1
    ))
}

fn case_b_consistency() -> Outcome {
    let p = ModelParams::new(
        0.5,
        1.0,
        1.0,
        0.7,
        0.2,
        1.0,
        CostFunction::Quadratic {
            alpha: 1.0,
            beta: 1.0,
        },
    )
    .map_err(|e| e.to_string())?;
    let sol = StoppingSolution::solve(&p).map_err(|e| e.to_string())?;
    for k in 0..=100 {
        let y = k as f64 / 100.0;
        let expected = 1.0 / (2.0f64 * 0.5).sqrt() + p.c_hat(y).map_err(|e| e.to_string())?;
        let single = control::single_regime_boundary(&p, 1.0, y).map_err(|e| e.to_string())?;
        for i in Regime::BOTH {
            let x = sol.x_star(i, y).map_err(|e| e.to_string())?;
            ensure(
                (x - expected).abs() <= 1e-10 && (x - single).abs() <= 1e-10,
                || format!("y = {y}: x* = {x}, expected {expected}, single-regime {single}"),
            )?;
        }
    }
    let (a, b) = StoppingSolution::single_boundary_candidates(&p.market(), sol.roots());
    ensure((a - b).abs() <= 1e-10, || format!("candidates {a} vs {b}"))?;
    Ok(format!(
        "x*(y) matches on 101 levels; candidates differ by {:.1e}",
        (a - b).abs()
    ))
}

fn hjb_verification() -> Outcome {
    let cs = ControlSolution::new(&baseline()).map_err(|e| e.to_string())?;
    let rep = cs
        .verify_hjb(&HjbGrid::default())
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "{} states, max |max-branch| {:.1e}",
        rep.states, rep.max_abs_residual
    ))
}

fn boundary_ordering() -> Outcome {
    let cs = ControlSolution::new(&baseline()).map_err(|e| e.to_string())?;
    let rep = control::compare_boundaries(&cs, None, 1000).map_err(|e| e.to_string())?;
    let interior = rep
        .rows
        .iter()
        .filter(|r| r.regime_low > 0.0 && r.regime_low < 1.0)
        .count();
    Ok(format!(
        "1000 points ordered, {interior} strictly inside (0, 1) for b*_1"
    ))
}

fn monte_carlo() -> Outcome {
    let p = baseline();
    let cs = ControlSolution::new(&p).map_err(|e| e.to_string())?;
    let cfg = SimConfig {
        base_seed: 20_240_601,
        ..SimConfig::new(&p)
    };
    let y0 = 0.5;
    let states = [
        (-0.5, Regime::One),
        (-0.5, Regime::Two),
        (0.6, Regime::One),
        (0.6, Regime::Two),
        (1.3, Regime::Two),
    ];
    let mut lines = Vec::new();
    for (x0, i) in states {
        let u = cs.u(x0, y0, i).map_err(|e| e.to_string())?;
        let opt = mcsim::estimate_value(&cs, x0, y0, i, &Policy::ReflectOptimal, &cfg)
            .map_err(|e| e.to_string())?;
        let bias = mcsim::estimate_bias(&cs, x0, y0, i, &Policy::ReflectOptimal, &cfg, 20_000)
            .map_err(|e| e.to_string())?;
        let allowed = 3.0 * opt.std_error + bias.budget;
        ensure((opt.mean - u).abs() <= allowed, || {
            format!(
                "state ({x0}, {y0}, {i}): MC {} vs U {u}, allowed {allowed}",
                opt.mean
            )
        })?;
        for policy in [Policy::NeverExtract, Policy::ExtractAllAtStart] {
            let sub =
                mcsim::estimate_value(&cs, x0, y0, i, &policy, &cfg).map_err(|e| e.to_string())?;
            ensure(sub.mean <= u + 3.0 * sub.std_error, || {
                format!(
                    "state ({x0}, {y0}, {i}): {} gives {} above U = {u}",
                    policy.id(),
                    sub.mean
                )
            })?;
        }
        lines.push(format!(
            "({x0},{i}): U={u:.5} MC={:.5}±{:.5} budget={:.5}",
            opt.mean, opt.std_error, bias.budget
        ));
    }
    Ok(lines.join("; "))
}

fn lump_sum_at_switches() -> Outcome {
    let p = baseline();
    let cs = ControlSolution::new(&p).map_err(|e| e.to_string())?;
    let cfg = SimConfig {
        base_seed: 77,
        antithetic: false,
        n_paths: 1000,
        ..SimConfig::new(&p)
    };
    let y0 = 0.5;
    let x0 = cs
        .stopping()
        .x_star(Regime::Two, y0)
        .map_err(|e| e.to_string())?;
    const TOL: f64 = 1e-12;
    let results: Vec<Result<(usize, usize), String>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let mut trace: Vec<TraceRow> = Vec::new();
            mcsim::simulate_path(
                &cs,
                x0,
                y0,
                Regime::Two,
                &Policy::ReflectOptimal,
                &cfg,
                k,
                Some(&mut trace),
            )
            .map_err(|e| e.to_string())?;
            mcsim::skorokhod_check(&cs, &trace).map_err(|e| format!("path {k}: {e}"))?;
            let (mut switches, mut on_boundary) = (0, 0);
            for w in trace.windows(2) {
                let (prev, row) = (w[0], w[1]);
                if !(prev.regime == 2 && row.regime == 1) {
                    continue;
                }
                let pre = row.y + row.dnu;
                let b1 = cs.b_star(Regime::One, row.x);
                if pre <= b1 + TOL {
                    continue;
                }
                switches += 1;
                ensure((row.y - b1).abs() <= TOL, || {
                    format!(
                        "path {k}, t = {}: reserve {} not reflected to {b1}",
                        row.t, row.y
                    )
                })?;
                let prev_b2 = cs.b_star(Regime::Two, prev.x);
                if prev.y > 0.0 && (prev.y - prev_b2).abs() <= TOL {
                    on_boundary += 1;
                    let b2 = cs.b_star(Regime::Two, row.x);
                    let slack = (b2 - prev_b2).abs();
                    ensure(row.dnu >= (b2 - b1) - slack - TOL, || {
                        format!(
                            "path {k}, t = {}: jump {} below {} - {slack}",
                            row.t,
                            row.dnu,
                            b2 - b1
                        )
                    })?;
                }
            }
            Ok((switches, on_boundary))
        })
        .collect();
    let (mut switches, mut on_boundary) = (0, 0);
    for r in results {
        let (s, b) = r?;
        switches += s;
        on_boundary += b;
    }
    ensure(on_boundary > 0, || {
        "no switch observed on the upper boundary".into()
    })?;
    Ok(format!(
        "1000 paths, {switches} switches above b*_1, {on_boundary} from the b*_2 boundary"
    ))
}

fn concavity_and_gradient() -> Outcome {
    let p = baseline();
    let cs = ControlSolution::new(&p).map_err(|e| e.to_string())?;
    let (lo, hi) = cs.default_hjb_range();
    let nx = 400;
    let ny = 101;
    let rows: Vec<Result<(f64, f64), String>> = (0..nx)
        .into_par_iter()
        .map(|k| {
            let x = lo + (hi - lo) * k as f64 / (nx - 1) as f64;
            let mut u = [Vec::with_capacity(ny), Vec::with_capacity(ny)];
            let mut worst_gradient = f64::INFINITY;
            for j in 0..ny {
                let y = j as f64 / (ny - 1) as f64;
                let reports = cs
                    .reports(x, y, control::Derivatives::ClosedForm)
                    .map_err(|e| e.to_string())?;
                for i in Regime::BOTH {
                    let r = reports[i.index()];
                    u[i.index()].push(r.u);
                    worst_gradient = worst_gradient.min(r.uy - (x - p.c));
                }
            }
            let mut worst_second = f64::NEG_INFINITY;
            for series in &u {
                for w in series.windows(3) {
                    worst_second = worst_second.max(w[0] - 2.0 * w[1] + w[2]);
                }
            }
            Ok((worst_second, worst_gradient))
        })
        .collect();
    let (mut second, mut gradient) = (f64::NEG_INFINITY, f64::INFINITY);
    for r in rows {
        let (s, g) = r?;
        second = second.max(s);
        gradient = gradient.min(g);
    }
    ensure(second <= 1e-8, || {
        format!("second difference {second:e} > 1e-8")
    })?;
    ensure(gradient >= -1e-9, || {
        format!("U_y - (x - c) = {gradient:e}")
    })?;
    Ok(format!(
        "max second difference {second:.1e}, min U_y - (x - c) {gradient:.1e}"
    ))
}

/// Number, name, runtime limit and check.
type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "sign lemma", Duration::from_secs(1), sign_lemma),
        (
            2,
            "assumption feasibility",
            Duration::from_secs(1),
            assumption_feasibility,
        ),
        (
            3,
            "feasibility raster",
            Duration::from_secs(10),
            feasibility_raster,
        ),
        (
            4,
            "smooth-fit solve",
            Duration::from_secs(5),
            smooth_fit_solve,
        ),
        (
            5,
            "free-boundary verification",
            Duration::from_secs(5),
            fbp_verification,
        ),
        (
            6,
            "equal-volatility consistency",
            Duration::from_secs(1),
            case_b_consistency,
        ),
        (
            7,
            "HJB verification",
            Duration::from_secs(60),
            hjb_verification,
        ),
        (
            8,
            "boundary ordering",
            Duration::from_secs(2),
            boundary_ordering,
        ),
        (
            9,
            "Monte Carlo optimality",
            Duration::from_secs(600),
            monte_carlo,
        ),
        (
            10,
            "lump sums at regime switches",
            Duration::from_secs(30),
            lump_sum_at_switches,
        ),
        (
            11,
            "concavity and gradient constraint",
            Duration::from_secs(10),
            concavity_and_gradient,
        ),
    ];
    let only: Option<u32> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if elapsed > limit => Err(format!(
                "{msg}; runtime {:.2} s exceeds {:.0} s",
                elapsed.as_secs_f64(),
                limit.as_secs_f64()
            )),
            other => other,
        };
        match outcome {
            Ok(msg) => println!(
                "PASS [{id:2}] {name}: {msg} ({:.2} s)",
                elapsed.as_secs_f64()
            ),
            Err(msg) => {
                failed += 1;
                println!(
                    "FAIL [{id:2}] {name}: {msg} ({:.2} s)",
                    elapsed.as_secs_f64()
                );
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
