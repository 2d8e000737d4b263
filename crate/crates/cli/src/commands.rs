//! Settings resolution and execution of each subcommand.

use std::f64::consts::FRAC_PI_4;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use thinobs::free_boundary::{
    extract_phases, nondegeneracy_fit, nonseparation_distance, singular_candidates, zero_set_measure,
};
use thinobs::functional::{first_variation_residual, EnergyBreakdown};
use thinobs::radial::{almgren, s_t_profiles, weiss, RadialProfile};
use thinobs::reference::{
    calibrate_c_a, line_dipole_field, segment_test_function, u2_axis_gradient_fd, u2_field, u2_thin_gradient,
    write_curve_csv, CALIBRATION_RESOLUTION,
};
use thinobs::solver::{minimize, sup_minimizer, BoundaryData, Solution, SolveOptions, Start};
use thinobs::stability::{beta_margin, certificate_factor, u2_instability_certificate, ui_instability_check, StabilityReport, Verdict};
use thinobs::{build_halfball_grid, par, Params, Point, ScalarField, WeightedGrid};

use crate::boundary::{self, Expr};
use crate::config::{parse_grid, Resolver};
use crate::error::CliError;
use crate::run::RunDir;
use crate::{AnalyzeArgs, BetaArgs, Command, ReferenceArgs, ReportArgs, SolveArgs, StabilityArgs};

const DEFAULT_A_GRID: &str = "-0.99:-0.01:0.01";

pub enum Job {
    Solve(SolveSpec),
    Analyze(AnalyzeSpec),
    Reference(ReferenceSpec),
    Stability(StabilitySpec),
    Beta(Vec<f64>),
    Report(ReportSpec),
}

/// Resolves every setting of `cmd` before anything is written.
pub fn prepare(cmd: Command, r: &mut Resolver, seed: u64) -> Result<(&'static str, Job), CliError> {
    Ok(match cmd {
        Command::Solve(s) => ("solve", Job::Solve(SolveSpec::resolve(s, r, seed)?)),
        Command::Analyze(s) => ("analyze", Job::Analyze(AnalyzeSpec::resolve(s, r, seed)?)),
        Command::Reference(s) => ("reference", Job::Reference(ReferenceSpec::resolve(s, r)?)),
        Command::Stability(s) => ("stability", Job::Stability(StabilitySpec::resolve(s, r)?)),
        Command::Beta(s) => ("beta", Job::Beta(resolve_beta(s, r)?)),
        Command::Report(s) => ("report", Job::Report(ReportSpec::resolve(s, r)?)),
    })
}

impl Job {
    pub fn run(self, out: &mut RunDir) -> Result<(), CliError> {
        match self {
            Job::Solve(s) => run_solve(&s, out),
            Job::Analyze(s) => run_analyze(&s, out),
            Job::Reference(s) => run_reference(&s, out),
            Job::Stability(s) => run_stability(&s, out),
            Job::Beta(g) => run_beta(&g, out),
            Job::Report(s) => run_report(&s, out),
        }
    }
}

// ---------------------------------------------------------------- solve

#[derive(Debug, Clone, Copy)]
enum StartChoice {
    One(Start),
    /// Lowest energy over all starts.
    Sup,
}

pub struct SolveSpec {
    params: Params,
    dim: usize,
    resolution: usize,
    radius: f64,
    boundary: Expr,
    start: StartChoice,
    opts: SolveOptions,
}

impl SolveSpec {
    fn resolve(s: SolveArgs, r: &mut Resolver, seed: u64) -> Result<Self, CliError> {
        let a = r.get("a", s.a, -0.5)?;
        let dim = r.get("n", s.n, 2usize)?;
        let resolution = r.get("resolution", s.resolution, 64usize)?;
        let radius = r.get("radius", s.radius, 1.0)?;
        let spec = r.get("boundary", s.boundary, "x1".to_string())?;
        let lp = r.get("lambda-plus", s.lambda_plus, 1.0)?;
        let lm = r.get("lambda-minus", s.lambda_minus, 1.0)?;
        let start = match r.get("start", s.start, "harmonic".to_string())?.as_str() {
            "harmonic" => StartChoice::One(Start::FromBoundaryHarmonic),
            "above" => StartChoice::One(Start::FromAbove),
            "below" => StartChoice::One(Start::FromBelow),
            "sup" => StartChoice::Sup,
            other => return Err(CliError::Config(format!("unknown start `{other}` (harmonic|above|below|sup)"))),
        };
        let defaults = SolveOptions::default();
        let opts = SolveOptions {
            max_outer: r.get("max-outer", s.max_outer, defaults.max_outer)?,
            linear_tol: r.get("linear-tol", s.linear_tol, defaults.linear_tol)?,
            damping: r.get("damping", s.damping, defaults.damping)?,
            ..defaults
        };
        if dim != 2 && dim != 3 {
            return Err(CliError::Config(format!("n must be 2 or 3, got {dim}")));
        }
        let params = Params::new(a, lp, lm)?;
        let boundary = boundary::parse(&spec, dim, seed)?;
        Ok(Self { params, dim, resolution, radius, boundary, start, opts })
    }

    fn solve(&self) -> Result<(Arc<WeightedGrid>, Solution), CliError> {
        let g = Arc::new(build_halfball_grid(&self.params, self.dim, self.radius, self.resolution)?);
        let bd = BoundaryData::from_fn(&g, |x| self.boundary.eval(x))?;
        let sol = match self.start {
            StartChoice::One(s) => minimize(&g, &self.params, &bd, &self.opts.with_start(s))?,
            StartChoice::Sup => sup_minimizer(&g, &self.params, &bd, &self.opts)?,
        };
        Ok((g, sol))
    }
}

fn write_solution(sol: &Solution, out: &mut RunDir) -> Result<(), CliError> {
    out.write_json_text("field.json", &sol.field.to_json()?)?;
    out.write_csv("history.csv", |w| Ok(sol.write_history_csv(w)?))?;
    let mut rows: Vec<(String, EnergyBreakdown)> = vec![(start_label(sol.start).to_string(), sol.energy)];
    for (s, total) in &sol.alternatives {
        rows.push((
            format!("{}-rejected", start_label(*s)),
            EnergyBreakdown { dirichlet: f64::NAN, thin: f64::NAN, total: *total },
        ));
    }
    out.write_csv("energy.csv", |w| Ok(EnergyBreakdown::write_csv(&rows, w)?))
}

fn start_label(s: Start) -> &'static str {
    match s {
        Start::FromAbove => "above",
        Start::FromBelow => "below",
        Start::FromBoundaryHarmonic => "harmonic",
    }
}

fn run_solve(s: &SolveSpec, out: &mut RunDir) -> Result<(), CliError> {
    let (_, sol) = s.solve()?;
    write_solution(&sol, out)?;
    let fbs = extract_phases(&sol.field);
    out.write_json_text("free_boundary.json", &fbs.to_json()?)
}

// -------------------------------------------------------------- analyze

pub struct AnalyzeSpec {
    solve: SolveSpec,
    center: Option<Point>,
    r_min_cells: f64,
    r_max: f64,
    radii: usize,
    tests: usize,
    seed: u64,
}

impl AnalyzeSpec {
    fn resolve(s: AnalyzeArgs, r: &mut Resolver, seed: u64) -> Result<Self, CliError> {
        let solve = SolveSpec::resolve(s.solve, r, seed)?;
        let center = match r.get("center", s.center, "auto".to_string())?.as_str() {
            "auto" => None,
            list => {
                let v: Vec<f64> = list
                    .split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| CliError::Config(format!("center `{list}` is not `auto` or x1,x2[,x3]")))?;
                if v.is_empty() || v.len() > 3 {
                    return Err(CliError::Config(format!("center `{list}` needs 1 to 3 coordinates")));
                }
                let mut c = [0.0; 3];
                c[..v.len()].copy_from_slice(&v);
                Some(c)
            }
        };
        let spec = Self {
            solve,
            center,
            r_min_cells: r.get("r-min-cells", s.r_min_cells, 4.0)?,
            r_max: r.get("r-max", s.r_max, 0.5)?,
            radii: r.get("radii", s.radii, 20usize)?,
            tests: r.get("tests", s.tests, 20usize)?,
            seed,
        };
        if spec.radii < 2 || !(spec.r_min_cells > 0.0) || !(spec.r_max > 0.0) {
            return Err(CliError::Config("need radii >= 2 and positive radius bounds".into()));
        }
        Ok(spec)
    }
}

fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
}

/// Runs an optional diagnostic; "does not apply here" outcomes become a note.
fn optional<T>(r: thinobs::Result<T>, notes: &mut Vec<String>, what: &str) -> Result<Option<T>, CliError> {
    use thinobs::Error as E;
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e @ (E::NotApplicable(_) | E::Degenerate(_) | E::OutsideDomain(_) | E::InvalidParameter(_))) => {
            notes.push(format!("{what} skipped: {e}"));
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

/// `(ρ² − |x − c|²)²` bumps centred on the thin space, well inside the domain.
fn random_tests(g: &Arc<WeightedGrid>, n: usize, seed: u64) -> Result<Vec<ScalarField>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = g.domain().inner_radius();
    let dim = g.dim();
    (0..n)
        .map(|_| {
            let rho = radius * rng.gen_range(0.15..0.45);
            let reach = radius * 0.9 - rho;
            let mut c = [0.0; 3];
            for c in c.iter_mut().take(dim - 1) {
                *c = rng.gen_range(-1.0..1.0) * reach / (dim as f64 - 1.0).sqrt();
            }
            let amp = rng.gen_range(0.5..2.0) / rho.powi(4);
            Ok(ScalarField::from_fn(g.clone(), move |x| {
                let d2: f64 = (0..3).map(|k| (x[k] - c[k]).powi(2)).sum();
                amp * (rho * rho - d2).max(0.0).powi(2)
            })?)
        })
        .collect()
}

#[derive(Serialize)]
struct AnalyzeSummary {
    a: f64,
    resolution: usize,
    spacing: f64,
    energy: f64,
    outer_iterations: usize,
    center: Point,
    radii: Vec<f64>,
    weiss_max_decrease: f64,
    weiss_range: f64,
    almgren_max_decrease: Option<f64>,
    t_over_s_max: Option<f64>,
    gamma_plus_points: usize,
    gamma_minus_points: usize,
    nonseparation_distance: Option<f64>,
    zero_set_tol: f64,
    zero_set_measure: f64,
    singular_candidates: Option<Vec<Point>>,
    nondegeneracy_exponent_plus: Option<f64>,
    nondegeneracy_exponent_minus: Option<f64>,
    first_variation_tests: usize,
    first_variation_max_relative: f64,
    notes: Vec<String>,
}

fn run_analyze(s: &AnalyzeSpec, out: &mut RunDir) -> Result<(), CliError> {
    let (g, sol) = s.solve.solve()?;
    write_solution(&sol, out)?;
    let u = &sol.field;
    let p = &s.solve.params;
    let h = g.spacing();
    let mut notes = Vec::new();

    let mut fbs = extract_phases(u);
    let center = match s.center {
        Some(c) => c,
        None => match fbs.gamma_plus.first().or(fbs.gamma_minus.first()) {
            Some(c) => *c,
            None => {
                notes.push("no free boundary point; profiles centred at the origin".into());
                [0.0; 3]
            }
        },
    };
    let room = 0.95 * (g.domain().inner_radius() - center.iter().map(|c| c * c).sum::<f64>().sqrt());
    let r_max = s.r_max.min(room);
    if r_max < s.r_max {
        notes.push(format!("r-max clipped to {r_max} to stay inside the domain"));
    }
    let radii = geometric(s.r_min_cells * h, r_max, s.radii);

    let w = weiss(u, p, &center, &radii)?;
    let mut profiles = vec![w.clone()];
    let mut t_over_s = None;
    if let Some((sp, tp)) = optional(s_t_profiles(u, &center, &radii), &mut notes, "S/T profiles")? {
        t_over_s = Some(
            sp.values
                .iter()
                .zip(&tp.values)
                .filter(|(s, _)| **s > 0.0)
                .map(|(s, t)| t / s)
                .fold(0.0, f64::max),
        );
        profiles.push(sp);
        profiles.push(tp);
    }
    let mut almgren_drop = None;
    if p.a() == 0.0 {
        if let Some(n) = optional(almgren(u, &center, &radii), &mut notes, "Almgren frequency")? {
            almgren_drop = Some(n.max_decrease());
            profiles.push(n);
        }
    }
    out.write_csv("profiles.csv", |w| Ok(RadialProfile::write_csv(&profiles, w)?))?;

    if p.a() < 0.0 {
        if let Some(sing) = optional(singular_candidates(u, None), &mut notes, "singular candidates")? {
            fbs.singular = sing;
        }
    }
    out.write_json_text("free_boundary.json", &fbs.to_json()?)?;
    let dist = optional(nonseparation_distance(&fbs), &mut notes, "nonseparation distance")?;
    let tol = h.powf(1.0 - p.a());
    let measure = zero_set_measure(u, tol)?;

    let mut fit = None;
    if p.a() != 0.0 {
        fit = optional(nondegeneracy_fit(u, &center, &radii), &mut notes, "nondegeneracy fit")?;
        if let Some(f) = &fit {
            out.write_csv("nondegeneracy.csv", |w| Ok(f.write_csv("analyze", p.a(), w)?))?;
        }
    } else {
        notes.push("nondegeneracy fit skipped: needs a != 0".into());
    }

    let tests = random_tests(&g, s.tests, s.seed)?;
    let residuals = par::map(&tests, |t| first_variation_residual(u, t, p).map(|r| r / t.max_abs()));
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for (k, r) in residuals.into_iter().enumerate() {
        let r = r?;
        worst = worst.max(r.abs());
        rows.push((k as f64, r));
    }
    out.write_csv("first_variation.csv", |w| Ok(write_curve_csv(&rows, w)?))?;

    let summary = AnalyzeSummary {
        a: p.a(),
        resolution: s.solve.resolution,
        spacing: h,
        energy: sol.energy.total,
        outer_iterations: sol.history.len(),
        center,
        radii,
        weiss_max_decrease: w.max_decrease(),
        weiss_range: w.range(),
        almgren_max_decrease: almgren_drop,
        t_over_s_max: t_over_s,
        gamma_plus_points: fbs.gamma_plus.len(),
        gamma_minus_points: fbs.gamma_minus.len(),
        nonseparation_distance: dist,
        zero_set_tol: tol,
        zero_set_measure: measure,
        singular_candidates: (p.a() < 0.0).then(|| fbs.singular.clone()),
        nondegeneracy_exponent_plus: fit.map(|f| f.exponent_plus),
        nondegeneracy_exponent_minus: fit.map(|f| f.exponent_minus),
        first_variation_tests: tests.len(),
        first_variation_max_relative: worst,
        notes,
    };
    out.write_json("summary.json", &summary)
}

// ------------------------------------------------------------ reference

#[derive(Debug, Clone, Copy, PartialEq)]
enum RefTarget {
    U2,
    LineDipole,
    TestFunction,
}

pub struct ReferenceSpec {
    target: RefTarget,
    a: f64,
    theta: f64,
    height: f64,
    radii: Vec<f64>,
}

impl ReferenceSpec {
    fn resolve(s: ReferenceArgs, r: &mut Resolver) -> Result<Self, CliError> {
        let target = match r.get("target", s.target, "u2".to_string())?.as_str() {
            "u2" => RefTarget::U2,
            "line-dipole" => RefTarget::LineDipole,
            "test-function" => RefTarget::TestFunction,
            other => return Err(CliError::Config(format!("unknown target `{other}` (u2|line-dipole|test-function)"))),
        };
        let default_theta = if target == RefTarget::U2 { FRAC_PI_4 } else { 0.0 };
        let a = r.get("a", s.a, -0.5)?;
        let theta = r.get("theta", s.theta, default_theta)?;
        let height = r.get("height", s.height, 0.0)?;
        let lo = r.get("r-min", s.r_min, 0.05)?;
        let hi = r.get("r-max", s.r_max, 1.0)?;
        let n = r.get("samples", s.samples, 20usize)?;
        if !(lo > 0.0 && hi > lo) || n < 2 || height < 0.0 {
            return Err(CliError::Config("need 0 < r-min < r-max, samples >= 2, height >= 0".into()));
        }
        Ok(Self { target, a, theta, height, radii: geometric(lo, hi, n) })
    }
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn run_reference(s: &ReferenceSpec, out: &mut RunDir) -> Result<(), CliError> {
    let (c, sn) = (s.theta.cos(), s.theta.sin());
    let pts: Vec<Point> = s.radii.iter().map(|r| [r * c, r * sn, s.height]).collect();
    let values = match s.target {
        RefTarget::U2 => u2_field(s.a, &pts)?,
        RefTarget::LineDipole => line_dipole_field(s.a, &pts)?,
        RefTarget::TestFunction => segment_test_function(s.a, &pts)?,
    };
    let rows: Vec<(f64, f64)> = s.radii.iter().copied().zip(values.iter().copied()).collect();
    out.write_csv("curve.csv", |w| Ok(write_curve_csv(&rows, w)?))?;

    let mut summary = json!({
        "a": s.a,
        "theta": s.theta,
        "height": s.height,
        "samples": rows.len(),
    });
    let positive: Vec<(f64, f64)> = rows.iter().filter(|(_, v)| v.abs() > 0.0).map(|(r, v)| (r.ln(), v.abs().ln())).collect();
    if positive.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = positive.into_iter().unzip();
        summary["log_log_slope"] = json!(slope(&x, &y));
    }

    if s.target == RefTarget::U2 {
        let coarse = calibrate_c_a(s.a, CALIBRATION_RESOLUTION / 2)?;
        let fine = calibrate_c_a(s.a, CALIBRATION_RESOLUTION)?;
        out.write_json(
            "calibration.json",
            &json!({
                "a": s.a,
                "c_a": fine,
                "c_a_coarse": coarse,
                "resolution": CALIBRATION_RESOLUTION,
                "relative_change": (fine - coarse).abs() / fine.abs(),
            }),
        )?;
        // gradient along the positive x1 axis: closed form vs differences
        let mut grad = Vec::new();
        for &x in &s.radii {
            let exact = u2_thin_gradient(s.a, x)?;
            let fd = u2_axis_gradient_fd(s.a, x, 2e-3 * x)?;
            grad.push([x, exact, fd]);
        }
        out.write_csv("gradient.csv", |w| {
            let mut cw = csv::Writer::from_writer(w);
            cw.write_record(["x1", "closed_form", "finite_difference"])?;
            for g in &grad {
                cw.write_record(g.iter().map(|v| v.to_string()))?;
            }
            cw.flush()?;
            Ok(())
        })?;
        let lx: Vec<f64> = grad.iter().map(|g| g[0].ln()).collect();
        let ly: Vec<f64> = grad.iter().map(|g| g[1].abs().ln()).collect();
        let worst = grad.iter().map(|g| ((g[2] - g[1]) / g[1]).abs()).fold(0.0, f64::max);
        summary["gradient_slope"] = json!(slope(&lx, &ly));
        summary["gradient_fd_max_relative"] = json!(worst);
    }
    out.write_json("summary.json", &summary)
}

// ------------------------------------------------------------ stability

pub struct StabilitySpec {
    ui: Option<u32>,
    grid: Vec<f64>,
    single: bool,
    radius: f64,
    resolution: usize,
}

impl StabilitySpec {
    fn resolve(s: StabilityArgs, r: &mut Resolver) -> Result<Self, CliError> {
        let target = r.get("target", s.target, "u2".to_string())?;
        let a = r.get("a", s.a, -0.5)?;
        let a_grid: Option<String> = r.get_opt("a-grid", s.a_grid)?;
        let i = r.get("i", s.i, 3u32)?;
        let radius = r.get("radius", s.radius, 64.0)?;
        let resolution = r.get("resolution", s.resolution, 32usize)?;
        let ui = match target.as_str() {
            "u2" => None,
            "ui" => Some(i),
            other => return Err(CliError::Config(format!("unknown target `{other}` (u2|ui)"))),
        };
        let (grid, single) = match a_grid {
            Some(g) => (parse_grid(&g)?, false),
            None => (vec![a], true),
        };
        Ok(Self { ui, grid, single, radius, resolution })
    }

    fn report(&self, a: f64) -> thinobs::Result<StabilityReport> {
        match self.ui {
            None => u2_instability_certificate(a, self.radius),
            Some(i) => ui_instability_check(i, a, self.resolution),
        }
    }
}

fn run_stability(s: &StabilitySpec, out: &mut RunDir) -> Result<(), CliError> {
    let reports: Vec<StabilityReport> = par::map(&s.grid, |&a| s.report(a))
        .into_iter()
        .collect::<thinobs::Result<_>>()?;
    if s.single {
        out.write_json_text("certificate.json", &reports[0].to_json()?)?;
    } else {
        out.write_json("certificates.json", &reports)?;
    }
    out.write_csv("summary.csv", |w| Ok(StabilityReport::write_summary_csv(&reports, w)?))
}

// ----------------------------------------------------------------- beta

fn resolve_beta(s: BetaArgs, r: &mut Resolver) -> Result<Vec<f64>, CliError> {
    let grid = parse_grid(&r.get("a-grid", s.a_grid, DEFAULT_A_GRID.to_string())?)?;
    if grid.iter().any(|a| !(*a > -1.0 && *a < 0.0)) {
        return Err(CliError::Config("the a-grid must lie in (-1, 0)".into()));
    }
    Ok(grid)
}

fn run_beta(grid: &[f64], out: &mut RunDir) -> Result<(), CliError> {
    let rows: Vec<(f64, f64, f64)> = grid
        .iter()
        .map(|&a| Ok((a, beta_margin(a)?, certificate_factor(a)?)))
        .collect::<thinobs::Result<_>>()?;
    out.write_csv("margins.csv", |w| {
        let mut cw = csv::Writer::from_writer(w);
        cw.write_record(["a", "margin", "certificate_factor"])?;
        for (a, m, f) in &rows {
            cw.write_record([a.to_string(), m.to_string(), f.to_string()])?;
        }
        cw.flush()?;
        Ok(())
    })?;
    match rows.iter().find(|r| !(r.1 > 0.0)) {
        Some((a, m, _)) => Err(CliError::Check(format!("margin {m} is not positive at a = {a}"))),
        None => Ok(()),
    }
}

// --------------------------------------------------------------- report

pub struct ReportSpec {
    a: f64,
    resolution: usize,
}

impl ReportSpec {
    fn resolve(s: ReportArgs, r: &mut Resolver) -> Result<Self, CliError> {
        let a = r.get("a", s.a, -0.5)?;
        if !(a > -1.0 && a < 0.0) {
            return Err(CliError::Config("report needs a in (-1, 0)".into()));
        }
        Ok(Self { a, resolution: r.get("resolution", s.resolution, 64usize)? })
    }
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    value: f64,
    bound: f64,
    pass: bool,
}

fn run_report(s: &ReportSpec, out: &mut RunDir) -> Result<(), CliError> {
    let mut checks = Vec::new();
    let mut push = |name, value: f64, bound: f64, pass: bool| checks.push(Check { name, value, bound, pass });

    let margins: Vec<f64> = parse_grid(DEFAULT_A_GRID)?
        .iter()
        .map(|&a| beta_margin(a))
        .collect::<thinobs::Result<_>>()?;
    let worst = margins.iter().copied().fold(f64::INFINITY, f64::min);
    push("beta_margin_min", worst, 0.0, worst > 0.0);

    let u2 = u2_instability_certificate(s.a, 64.0)?;
    push("u2_form_value", u2.form_value, 0.0, u2.verdict == Verdict::Unstable);

    let u3 = ui_instability_check(3, s.a, 32)?;
    push("u3_form_value", u3.form_value, 0.0, u3.verdict == Verdict::Unstable);
    let excess = u3.domination_excess.unwrap_or(f64::NAN);
    push("u3_minus_u2_max", excess, 0.0, excess <= 0.0);

    let params = Params::symmetric(s.a)?;
    let g = Arc::new(build_halfball_grid(&params, 2, 1.0, s.resolution)?);
    let bd = BoundaryData::from_fn(&g, |x| x[0] + 0.2)?;
    let sol = minimize(&g, &params, &bd, &SolveOptions::default())?;
    let h = g.spacing();
    let radii = geometric(4.0 * h, 0.5, 20);
    let center = extract_phases(&sol.field).gamma_plus.first().copied().unwrap_or([0.0; 3]);
    let w = weiss(&sol.field, &params, &center, &radii)?;
    let slack = 1e-3 * w.range();
    push("weiss_max_decrease", w.max_decrease(), slack, w.max_decrease() <= slack);
    let d = nonseparation_distance(&extract_phases(&sol.field))?;
    push("nonseparation_distance", d, 2.0 * h, d <= 2.0 * h);

    out.write_json("report.json", &json!({ "a": s.a, "resolution": s.resolution, "checks": &checks }))?;
    out.write_csv("report.csv", |w| {
        let mut cw = csv::Writer::from_writer(w);
        cw.write_record(["check", "value", "bound", "pass"])?;
        for c in &checks {
            cw.write_record([c.name.to_string(), c.value.to_string(), c.bound.to_string(), c.pass.to_string()])?;
        }
        cw.flush()?;
        Ok(())
    })?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(failed.join(", ")))
    }
}

