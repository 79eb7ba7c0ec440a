use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use regime_extract::control::{self, HjbGrid, HjbReport};
use regime_extract::mcsim::{self, Policy, SimConfig};
use regime_extract::model::{self, AssumptionReport, Feasibility, Market, Regime};
use regime_extract::roots;
use regime_extract::stopping::{Case, FbpGrid, FbpReport, SmoothFit};
use regime_extract::{ControlSolution, SimOutcome, StoppingSolution, ValueReport};
use serde::Serialize;

use crate::config;
use crate::error::{CliError, CliResult};
use crate::manifest::Recorder;
use crate::svg;

pub const BOUNDARY_HEADER: &str = "x,b1_star,b2_star,bhash_sigma1,bhash_sigma2";
pub const BOUNDARY_Y_HEADER: &str = "y,x1_star,x2_star,xhash_sigma1,xhash_sigma2";
pub const RASTER_HEADER: &str = "sigma1,sigma2,status,solvable";

#[derive(Debug, Args, Serialize)]
pub struct ConfigArgs {
    /// JSON parameter file.
    #[arg(long, short)]
    pub config: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BoundaryArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub config: ConfigArgs,
    /// Number of grid points, at least 2.
    #[arg(long, default_value_t = 201)]
    pub grid: usize,
    /// CSV over the price grid; the reserve-grid CSV gets the suffix `_y`.
    #[arg(long)]
    pub out: PathBuf,
    /// Also render the boundaries as SVG.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct StateArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub x: f64,
    #[arg(long)]
    pub y: f64,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub regime: u8,
}

#[derive(Debug, Args, Serialize)]
pub struct ValueArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub state: StateArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub config: ConfigArgs,
    /// HJB grid as `NXxNY`.
    #[arg(long, default_value = "400x50", value_parser = parse_grid)]
    pub grid: (usize, usize),
    /// Price points of each free-boundary check.
    #[arg(long, default_value_t = 10_000)]
    pub fbp_points: usize,
    /// Test hook: shift z2 by this amount after solving.
    #[arg(long, allow_hyphen_values = true)]
    pub inject_z2_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyArg {
    ReflectOptimal,
    NeverExtract,
    ExtractAllAtStart,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub state: StateArgs,
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Simulation horizon; defaults to 10 / rho.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = PolicyArg::ReflectOptimal)]
    pub policy: PolicyArg,
    /// Sample independent paths instead of antithetic pairs.
    #[arg(long)]
    pub no_antithetic: bool,
    /// Write the trajectory of one path as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Index of the traced path.
    #[arg(long, default_value_t = 0)]
    pub trace_path: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ScanArgs {
    #[arg(long)]
    pub rho: f64,
    #[arg(long)]
    pub lambda1: f64,
    #[arg(long)]
    pub lambda2: f64,
    /// `LO,HI`
    #[arg(long, value_parser = parse_range)]
    pub sigma1_range: (f64, f64),
    /// `LO,HI`
    #[arg(long, value_parser = parse_range)]
    pub sigma2_range: (f64, f64),
    /// Cells per axis.
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| format!("expected LO,HI, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok((parse(lo)?, parse(hi)?))
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (nx, ny) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected NXxNY, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok((parse(nx)?, parse(ny)?))
}

fn print_json<T: Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    let mut stdout = std::io::stdout().lock();
    // A closed pipe is not worth a failure status.
    let _ = writeln!(stdout, "{text}");
}

fn regime(label: u8) -> CliResult<Regime> {
    Ok(Regime::from_label(label)?)
}

fn check_state(state: &StateArgs) -> CliResult<()> {
    if !state.x.is_finite() {
        return Err(CliError::Input(format!("x = {} is not finite", state.x)));
    }
    if !(0.0..=1.0).contains(&state.y) {
        return Err(CliError::Input(format!(
            "y = {} is outside [0, 1]",
            state.y
        )));
    }
    Ok(())
}

// check

#[derive(Serialize)]
struct CheckOutput {
    /// `A` as labelled, `C` after swapping labels, `B` for equal
    /// volatilities, `null` when neither labelling passes.
    case: Option<Case>,
    all_ok: bool,
    solvable: bool,
    as_labelled: AssumptionReport,
    swapped: AssumptionReport,
}

pub fn check(args: &ConfigArgs, rec: &mut Recorder) -> CliResult<()> {
    let cfg = config::load(&args.config)?;
    rec.config(&cfg);
    let market = cfg.params.market();
    let report = |m: &Market| -> CliResult<AssumptionReport> {
        Ok(model::check_assumptions(
            m,
            &roots::solve_characteristic(m)?,
            0.0,
        ))
    };
    let as_labelled = report(&market)?;
    let swapped = report(&market.swapped())?;
    let case = if as_labelled.case_b {
        Some(Case::B)
    } else if as_labelled.all_ok {
        Some(Case::A)
    } else if swapped.all_ok {
        Some(Case::C)
    } else {
        None
    };
    let out = CheckOutput {
        case,
        all_ok: case.is_some(),
        solvable: as_labelled.solvable || swapped.solvable,
        as_labelled,
        swapped,
    };
    print_json(&out);
    if out.all_ok {
        Ok(())
    } else {
        Err(CliError::Verification(
            "parameter restrictions fail in both regime labellings".into(),
        ))
    }
}

// solve

#[derive(Serialize)]
struct Residuals {
    g1: f64,
    g2: f64,
}

#[derive(Serialize)]
struct SolveOutput {
    case: Case,
    z1: f64,
    z2: f64,
    zhat2: Option<f64>,
    alpha: [f64; 5],
    a: [f64; 4],
    a1_fit: f64,
    relabeled: bool,
    /// Smooth-fit residuals; absent with a single boundary.
    residuals: Option<Residuals>,
    /// `x*_i(0)` and `x*_i(1)` for the regimes as supplied.
    x1_star_ends: [f64; 2],
    x2_star_ends: [f64; 2],
}

pub fn solve(args: &ConfigArgs, rec: &mut Recorder) -> CliResult<()> {
    let cfg = config::load(&args.config)?;
    rec.config(&cfg);
    let cs = ControlSolution::new(&cfg.params)?;
    let sol = cs.stopping();
    let r = sol.roots();
    let residuals = sol.zhat2.map(|_| {
        let solved = if sol.relabeled {
            cfg.params.market().swapped()
        } else {
            cfg.params.market()
        };
        let fit = SmoothFit::new(&solved, r);
        Residuals {
            g1: fit.g1(sol.z1, sol.z2),
            g2: fit.g2(sol.z1, sol.z2),
        }
    });
    let ends = |i| {
        let (lo, hi) = cs.x_star_ends(i);
        [lo, hi]
    };
    print_json(&SolveOutput {
        case: sol.case,
        z1: sol.z1,
        z2: sol.z2,
        zhat2: sol.zhat2,
        alpha: [r.alpha1, r.alpha2, r.alpha3, r.alpha4, r.alpha5],
        a: [r.a1, r.a2, r.a3, r.a4],
        a1_fit: r.a1_fit,
        relabeled: sol.relabeled,
        residuals,
        x1_star_ends: ends(Regime::One),
        x2_star_ends: ends(Regime::Two),
    });
    Ok(())
}

// boundary

/// `dir/name.csv` becomes `dir/name_y.csv`.
pub fn y_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    let name = match out.extension() {
        Some(ext) => format!("{stem}_y.{}", ext.to_string_lossy()),
        None => format!("{stem}_y"),
    };
    out.with_file_name(name)
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| {
        if k + 1 == n {
            hi
        } else {
            lo + (hi - lo) * k as f64 / (n - 1) as f64
        }
    })
}

/// From one unit below the upper boundary at full reserve to one unit above
/// the lower boundary at zero reserve; widened to cover every boundary
/// endpoint if that interval is empty.
fn boundary_range(cs: &ControlSolution) -> (f64, f64) {
    let ends = Regime::BOTH.map(|i| cs.x_star_ends(i));
    let upper_at_one = ends[0].1.max(ends[1].1);
    let lower_at_zero = ends[0].0.min(ends[1].0);
    let (lo, hi) = (upper_at_one - 1.0, lower_at_zero + 1.0);
    if lo < hi {
        (lo, hi)
    } else {
        let lo = ends[0].1.min(ends[1].1) - 1.0;
        let hi = ends[0].0.max(ends[1].0) + 1.0;
        (lo, hi)
    }
}

pub fn boundary(args: &BoundaryArgs, rec: &mut Recorder) -> CliResult<()> {
    if args.grid < 2 {
        return Err(CliError::Input(format!(
            "--grid {} must be at least 2",
            args.grid
        )));
    }
    let cfg = config::load(&args.config.config)?;
    rec.config(&cfg);
    let p = &cfg.params;
    let cs = ControlSolution::new(p)?;
    let sol = cs.stopping();
    let [s1, s2] = [p.sigma1, p.sigma2];

    let (lo, hi) = boundary_range(&cs);
    let mut csv = format!("{BOUNDARY_HEADER}\n");
    let mut curves: [Vec<(f64, f64)>; 4] = Default::default();
    for x in linspace(lo, hi, args.grid) {
        let row = [
            cs.b_star(Regime::One, x),
            cs.b_star(Regime::Two, x),
            control::single_regime_b(p, s1, x),
            control::single_regime_b(p, s2, x),
        ];
        let _ = writeln!(csv, "{x},{},{},{},{}", row[0], row[1], row[2], row[3]);
        for (curve, v) in curves.iter_mut().zip(row) {
            curve.push((x, v));
        }
    }

    let mut csv_y = format!("{BOUNDARY_Y_HEADER}\n");
    for y in linspace(0.0, 1.0, args.grid) {
        let _ = writeln!(
            csv_y,
            "{y},{},{},{},{}",
            sol.x_star(Regime::One, y)?,
            sol.x_star(Regime::Two, y)?,
            control::single_regime_boundary(p, s1, y)?,
            control::single_regime_boundary(p, s2, y)?,
        );
    }

    rec.write(&args.out, csv.as_bytes())?;
    rec.write(&y_path(&args.out), csv_y.as_bytes())?;
    if let Some(path) = &args.svg {
        let [b1, b2, h1, h2] = curves;
        let series = [
            svg::Series {
                label: "b*_1",
                color: "#d62728",
                dashed: false,
                points: b1,
            },
            svg::Series {
                label: "b*_2",
                color: "#1f77b4",
                dashed: false,
                points: b2,
            },
            svg::Series {
                label: "b#(sigma1)",
                color: "#d62728",
                dashed: true,
                points: h1,
            },
            svg::Series {
                label: "b#(sigma2)",
                color: "#1f77b4",
                dashed: true,
                points: h2,
            },
        ];
        let text = svg::line_plot("Optimal extraction boundaries", "x", "y", &series);
        rec.write(path, text.as_bytes())?;
    }
    Ok(())
}

// value

pub fn value(args: &ValueArgs, rec: &mut Recorder) -> CliResult<()> {
    check_state(&args.state)?;
    let cfg = config::load(&args.config.config)?;
    rec.config(&cfg);
    let cs = ControlSolution::new(&cfg.params)?;
    let report: ValueReport =
        cs.u_report(args.state.x, args.state.y, regime(args.state.regime)?)?;
    print_json(&report);
    Ok(())
}

// verify

#[derive(Serialize)]
struct FbpEntry {
    y: f64,
    report: Option<FbpReport>,
    error: Option<String>,
}

#[derive(Serialize)]
struct VerifyOutput {
    passed: bool,
    case: Case,
    fbp: Vec<FbpEntry>,
    hjb: Option<HjbReport>,
    hjb_error: Option<String>,
    /// First failure, if any.
    worst: Option<String>,
}

pub fn verify(args: &VerifyArgs, rec: &mut Recorder) -> CliResult<()> {
    let cfg = config::load(&args.config.config)?;
    rec.config(&cfg);
    let mut sol = StoppingSolution::solve(&cfg.params)?;
    if let Some(delta) = args.inject_z2_error {
        sol = sol.with_perturbed_z2(delta);
    }
    let cs = ControlSolution::from_stopping(sol);
    let fbp_grid = FbpGrid {
        points: args.fbp_points,
        ..FbpGrid::default()
    };

    let mut worst = None;
    let mut fbp = Vec::new();
    for k in 1..=9 {
        let y = k as f64 / 10.0;
        let (report, error) = split(cs.stopping().verify_fbp(y, &fbp_grid), &mut worst);
        fbp.push(FbpEntry { y, report, error });
    }
    let hjb_grid = HjbGrid {
        nx: args.grid.0,
        ny: args.grid.1,
        ..HjbGrid::default()
    };
    let (hjb, hjb_error) = split(cs.verify_hjb(&hjb_grid), &mut worst);

    let out = VerifyOutput {
        passed: worst.is_none(),
        case: cs.stopping().case,
        fbp,
        hjb,
        hjb_error,
        worst,
    };
    print_json(&out);
    match out.worst {
        None => Ok(()),
        Some(w) => Err(CliError::Verification(w)),
    }
}

fn split<T>(
    r: regime_extract::Result<T>,
    worst: &mut Option<String>,
) -> (Option<T>, Option<String>) {
    match r {
        Ok(v) => (Some(v), None),
        Err(e) => {
            let msg = e.to_string();
            worst.get_or_insert_with(|| msg.clone());
            (None, Some(msg))
        }
    }
}

// simulate

#[derive(Serialize)]
struct Comparison {
    u: f64,
    abs_diff: f64,
    /// `abs_diff / std_error`.
    standard_errors: f64,
}

#[derive(Serialize)]
struct SimulateOutput {
    outcome: SimOutcome,
    config: SimConfig,
    x: f64,
    y: f64,
    regime: u8,
    /// Present for the optimal policy.
    comparison: Option<Comparison>,
}

pub fn simulate(args: &SimulateArgs, rec: &mut Recorder) -> CliResult<()> {
    check_state(&args.state)?;
    let cfg = config::load(&args.config.config)?;
    rec.config(&cfg);
    let sim = SimConfig {
        dt: args.dt,
        horizon: args.horizon.unwrap_or(10.0 / cfg.params.rho),
        n_paths: args.paths,
        base_seed: args.seed,
        antithetic: !args.no_antithetic,
    };
    sim.validate()?;
    let cs = ControlSolution::new(&cfg.params)?;
    let policy = match args.policy {
        PolicyArg::ReflectOptimal => Policy::ReflectOptimal,
        PolicyArg::NeverExtract => Policy::NeverExtract,
        PolicyArg::ExtractAllAtStart => Policy::ExtractAllAtStart,
    };
    let StateArgs {
        x,
        y,
        regime: label,
    } = args.state;
    let i = regime(label)?;
    let outcome = mcsim::estimate_value(&cs, x, y, i, &policy, &sim)?;
    let comparison = match args.policy {
        PolicyArg::ReflectOptimal => {
            let u = cs.u(x, y, i)?;
            let abs_diff = (outcome.mean - u).abs();
            Some(Comparison {
                u,
                abs_diff,
                standard_errors: abs_diff / outcome.std_error,
            })
        }
        _ => None,
    };

    if let Some(path) = &args.trace {
        let mut rows = Vec::new();
        mcsim::simulate_path(
            &cs,
            x,
            y,
            i,
            &policy,
            &sim,
            args.trace_path,
            Some(&mut rows),
        )?;
        let mut buf = Vec::new();
        mcsim::write_trace_csv(&rows, &mut buf).expect("writing to memory");
        rec.write(path, &buf)?;
    }
    print_json(&SimulateOutput {
        outcome,
        config: sim,
        x,
        y,
        regime: label,
        comparison,
    });
    Ok(())
}

// scan-region

pub fn scan_region(args: &ScanArgs, rec: &mut Recorder) -> CliResult<()> {
    for (name, (lo, hi)) in [("sigma1", args.sigma1_range), ("sigma2", args.sigma2_range)] {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(CliError::Input(format!(
                "--{name}-range {lo},{hi} must satisfy 0 < LO < HI"
            )));
        }
    }
    if args.steps == 0 {
        return Err(CliError::Input("--steps must be at least 1".into()));
    }
    let cells = model::feasibility_raster(
        args.rho,
        args.lambda1,
        args.lambda2,
        args.sigma1_range,
        args.sigma2_range,
        args.steps,
    )?;
    let mut csv = format!("{RASTER_HEADER}\n");
    for c in &cells {
        let status = match c.status {
            Feasibility::Feasible => "feasible",
            Feasibility::Infeasible => "infeasible",
            Feasibility::CaseB => "case_b",
        };
        let _ = writeln!(
            csv,
            "{},{},{status},{}",
            c.sigma1,
            c.sigma2,
            u8::from(c.solvable)
        );
    }
    match &args.out {
        Some(path) => rec.write(path, csv.as_bytes())?,
        None => {
            let _ = std::io::stdout().lock().write_all(csv.as_bytes());
        }
    }
    if let Some(path) = &args.svg {
        let text = svg::raster(&cells, args.steps, args.sigma1_range, args.sigma2_range);
        rec.write(path, text.as_bytes())?;
    }
    Ok(())
}
