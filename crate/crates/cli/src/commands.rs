//! The four subcommands. Each is split into a `plan` step, which validates
//! the whole config and builds every input, and a `run` step that computes
//! and writes. A config error therefore never leaves files behind.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use topolab::discflow::{init_disc, run_flow, BoundaryCircle, FlowOptions, FlowRun, FlowState, FlowStatus};
use topolab::lagrangian::{complex_point_cells, diagnose, maslov_index, AuxMetric, CellReport, CellThresholds, LagrangianSection, LoopSpec, Signature};
use topolab::linespace::{chart_metric, LineChart};
use topolab::surfgeom::{completeness_probe, ParamRay, ParamSurface, ProbeOptions, RayLength, SampleGrid};
use topolab::toponogov::{gap_sweep, profile_check, GapSweepResult, ProfileGrid, ProfileReport, SweepOptions};

use crate::config::{AnalyzeSpec, GridSpec, ProfileSpec, RunConfig, SurfaceSpec};
use crate::output::{num, Csv, OutDir};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Analyze,
    Maslov,
    Flow,
    Toponogov,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Maslov => "maslov",
            Command::Flow => "flow",
            Command::Toponogov => "toponogov",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
}

impl From<topolab::Error> for ErrorRecord {
    fn from(e: topolab::Error) -> Self {
        Self { kind: e.kind().to_string(), message: e.to_string() }
    }
}

impl From<std::io::Error> for ErrorRecord {
    fn from(e: std::io::Error) -> Self {
        Self { kind: "io".into(), message: e.to_string() }
    }
}

pub enum Plan {
    Analyze { surface: ParamSurface, grid: SampleGrid, thresholds: CellThresholds, spec: AnalyzeSpec, seed: u64 },
    Maslov { surface: ParamSurface, grid: SampleGrid, grid_spec: GridSpec, loops: Vec<LoopSpec> },
    Flow { surface: ParamSurface, section_grid: SampleGrid, circle: BoundaryCircle, n_r: usize, n_theta: usize, options: FlowOptions },
    Toponogov {
        profile: Option<(ProfileSpec, ProfileGrid)>,
        sweep: Option<(ParamSurface, Vec<f64>, SweepOptions)>,
        probe: Option<(ParamSurface, Vec<ParamRay>, ProbeOptions)>,
    },
}

fn need<'a, T>(v: &'a Option<T>, field: &str, cmd: Command) -> Result<&'a T, String> {
    v.as_ref().ok_or_else(|| format!("`{field}` is required by `{}`", cmd.name()))
}

fn surface(cfg: &RunConfig, cmd: Command) -> Result<ParamSurface, String> {
    need::<SurfaceSpec>(&cfg.surface, "surface", cmd)?.build()
}

pub fn plan(cfg: &RunConfig, cmd: Command) -> Result<Plan, String> {
    let th = cfg.thresholds;
    if ![th.gap, th.defect, th.rho].iter().all(|v| *v >= 0.0 && v.is_finite()) {
        return Err("thresholds must be finite and non-negative".into());
    }
    match cmd {
        Command::Analyze => {
            let spec = cfg.analyze.clone().unwrap_or_default();
            if !(spec.lorentz_gap >= 0.0) {
                return Err("analyze.lorentz_gap must be non-negative".into());
            }
            Ok(Plan::Analyze {
                surface: surface(cfg, cmd)?,
                grid: need(&cfg.grid, "grid", cmd)?.build("grid")?,
                thresholds: th,
                spec,
                seed: cfg.seed,
            })
        }
        Command::Maslov => {
            let m = need(&cfg.maslov, "maslov", cmd)?;
            if m.loops.is_empty() {
                return Err("maslov.loops must not be empty".into());
            }
            for (k, lp) in m.loops.iter().enumerate() {
                lp.samples().map_err(|e| format!("maslov.loops[{k}]: {e}"))?;
            }
            let grid_spec = need(&cfg.grid, "grid", cmd)?.clone();
            Ok(Plan::Maslov { surface: surface(cfg, cmd)?, grid: grid_spec.build("grid")?, grid_spec, loops: m.loops.clone() })
        }
        Command::Flow => {
            let f = need(&cfg.flow, "flow", cmd)?;
            if f.n_r < 2 || f.n_theta < 5 {
                return Err("flow: n_r must be ≥ 2 and n_theta ≥ 5".into());
            }
            let o = &f.options;
            if !(o.dt >= 0.0 && o.dt.is_finite()) || !(o.target >= 0.0) || !(o.slack >= 0.0) {
                return Err("flow.options: dt, target and slack must be finite and non-negative".into());
            }
            Ok(Plan::Flow {
                surface: surface(cfg, cmd)?,
                section_grid: f.section_grid.build("flow.section_grid")?,
                circle: f.circle,
                n_r: f.n_r,
                n_theta: f.n_theta,
                options: f.options,
            })
        }
        Command::Toponogov => {
            let t = need(&cfg.toponogov, "toponogov", cmd)?;
            let profile = t.profile.clone().map(|p| (p, t.profile_grid));
            let sweep = match &t.radii {
                Some(radii) => {
                    if radii.is_empty() || radii.windows(2).any(|w| !(w[1] > w[0])) || !(radii[0] > t.sweep.inner_radius) {
                        return Err("toponogov.radii must be increasing and exceed sweep.inner_radius".into());
                    }
                    Some((surface(cfg, cmd)?, radii.clone(), t.sweep))
                }
                None => None,
            };
            let probe = if t.rays.is_empty() { None } else { Some((surface(cfg, cmd)?, t.rays.clone(), t.probe)) };
            if profile.is_none() && sweep.is_none() && probe.is_none() {
                return Err("toponogov: give at least one of `profile`, `radii` and `rays`".into());
            }
            Ok(Plan::Toponogov { profile, sweep, probe })
        }
    }
}

/// What a finished run reports back to the driver.
pub struct Outcome {
    pub error: Option<ErrorRecord>,
}

pub fn run(plan: Plan, out: &mut OutDir) -> Result<Outcome, ErrorRecord> {
    match plan {
        Plan::Analyze { surface, grid, thresholds, spec, seed } => analyze(&surface, &grid, &thresholds, &spec, seed, out),
        Plan::Maslov { surface, grid, grid_spec, loops } => maslov(&surface, &grid, &grid_spec, &loops, out),
        Plan::Flow { surface, section_grid, circle, n_r, n_theta, options } => {
            flow(&surface, &section_grid, &circle, n_r, n_theta, &options, out)
        }
        Plan::Toponogov { profile, sweep, probe } => toponogov(profile, sweep, probe, out),
    }
}

#[derive(Serialize)]
struct Extremum {
    value: f64,
    at: (f64, f64),
}

#[derive(Serialize)]
struct LorentzCheck {
    gap_above: f64,
    points: usize,
    lorentz: usize,
    all_lorentz: bool,
}

#[derive(Serialize)]
struct NeutralCheck {
    samples: usize,
    seed: u64,
    neutral: usize,
    all_neutral: bool,
    min_abs_eigenvalue: f64,
}

#[derive(Serialize)]
struct AnalyzeSummary {
    surface: String,
    points: usize,
    undefined: usize,
    length_scale: f64,
    min_gap: Option<Extremum>,
    max_residual: Option<Extremum>,
    signatures: BTreeMap<&'static str, usize>,
    lorentz_check: LorentzCheck,
    cells: CellReport,
    total_cells: usize,
    all_cells_complex: bool,
    neutral_signature: NeutralCheck,
}

fn analyze(
    surface: &ParamSurface,
    grid: &SampleGrid,
    thresholds: &CellThresholds,
    spec: &AnalyzeSpec,
    seed: u64,
    out: &mut OutDir,
) -> Result<Outcome, ErrorRecord> {
    use rayon::prelude::*;
    let pts: Vec<(f64, f64)> = grid.points().collect();
    let positions: Vec<_> = pts.iter().filter(|p| surface.domain().contains(p.0, p.1)).map(|&(s, t)| surface.point(s, t)).collect();
    let aux = AuxMetric::for_points(positions.iter().filter(|p| p.iter().all(|c| c.is_finite())));
    let diags: Vec<_> = pts
        .par_iter()
        .map(|&(s, t)| if surface.domain().contains(s, t) { diagnose(surface, s, t, &aux).ok() } else { None })
        .collect();

    let mut csv = Csv::new(&["s", "t", "kappa1", "kappa2", "gap", "product", "lagrangian_residual", "defect", "rho_abs", "signature"]);
    let mut min_gap: Option<Extremum> = None;
    let mut max_res: Option<Extremum> = None;
    let mut counts: BTreeMap<&'static str, usize> =
        [Signature::Lorentz, Signature::Degenerate, Signature::Definite].iter().map(|s| (s.as_str(), 0)).collect();
    let mut lorentz = LorentzCheck { gap_above: spec.lorentz_gap, points: 0, lorentz: 0, all_lorentz: true };
    let mut undefined = 0;
    for (&(s, t), d) in pts.iter().zip(&diags) {
        let Some(d) = d else {
            undefined += 1;
            let nan = num(f64::NAN);
            let mut row = vec![num(s), num(t)];
            row.extend(std::iter::repeat_n(nan, 7));
            row.push("undefined".into());
            csv.row(&row);
            continue;
        };
        let c = &d.curvature;
        csv.row(&[
            num(s),
            num(t),
            num(c.kappa1),
            num(c.kappa2),
            num(c.gap),
            num(c.product),
            num(d.residual),
            num(d.class.defect),
            num(d.class.discriminant.norm()),
            d.class.signature.as_str().to_string(),
        ]);
        if min_gap.as_ref().is_none_or(|m| c.gap < m.value) {
            min_gap = Some(Extremum { value: c.gap, at: (s, t) });
        }
        if max_res.as_ref().is_none_or(|m| d.residual > m.value) {
            max_res = Some(Extremum { value: d.residual, at: (s, t) });
        }
        *counts.entry(d.class.signature.as_str()).or_default() += 1;
        if c.gap > spec.lorentz_gap {
            lorentz.points += 1;
            if d.class.signature == Signature::Lorentz {
                lorentz.lorentz += 1;
            } else {
                lorentz.all_lorentz = false;
            }
        }
    }

    let cells = complex_point_cells(surface, grid, &aux, thresholds);
    let total_cells = (grid.s.len() - 1) * (grid.t.len() - 1);
    let all_cells_complex = cells.umbilic.len() == total_cells && cells.coincide;
    let summary = AnalyzeSummary {
        surface: surface.label().to_string(),
        points: pts.len(),
        undefined,
        length_scale: aux.length_scale,
        min_gap,
        max_residual: max_res,
        signatures: counts,
        lorentz_check: lorentz,
        cells,
        total_cells,
        all_cells_complex,
        neutral_signature: neutral_signature(spec.signature_samples, seed),
    };
    out.write("analyze.csv", &csv.into_bytes())?;
    out.json("analyze_summary.json", &summary)?;
    Ok(Outcome { error: None })
}

/// Signature of G at random chart points, counted in a fixed order.
fn neutral_signature(samples: usize, seed: u64) -> NeutralCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let charts: Vec<LineChart> = (0..samples)
        .map(|_| {
            let mut c = || rng.random_range(-2.0..2.0);
            LineChart::new(Complex64::new(c(), c()), Complex64::new(1.5 * c(), 1.5 * c()))
        })
        .collect();
    let mut check = NeutralCheck { samples, seed, neutral: 0, all_neutral: true, min_abs_eigenvalue: f64::INFINITY };
    for c in &charts {
        let ok = chart_metric(c).is_ok_and(|m| {
            let eig = m.symmetric_eigenvalues();
            let min = eig.iter().fold(f64::INFINITY, |a, e| a.min(e.abs()));
            check.min_abs_eigenvalue = check.min_abs_eigenvalue.min(min);
            let pos = eig.iter().filter(|&&e| e > 1e-10).count();
            let neg = eig.iter().filter(|&&e| e < -1e-10).count();
            (pos, neg) == (2, 2)
        });
        if ok {
            check.neutral += 1;
        } else {
            check.all_neutral = false;
        }
    }
    check
}

#[derive(Serialize)]
#[serde(untagged)]
enum LoopResult {
    Ok(topolab::lagrangian::IndexReport),
    Err { error: ErrorRecord },
}

#[derive(Serialize)]
struct LoopEntry {
    #[serde(rename = "loop")]
    lp: LoopSpec,
    samples: usize,
    result: LoopResult,
}

#[derive(Serialize)]
struct MaslovReport<'a> {
    surface: String,
    grid: &'a GridSpec,
    loops: Vec<LoopEntry>,
}

fn maslov(surface: &ParamSurface, grid: &SampleGrid, grid_spec: &GridSpec, loops: &[LoopSpec], out: &mut OutDir) -> Result<Outcome, ErrorRecord> {
    let section = LagrangianSection::from_surface(surface, grid)?;
    let mut first_error = None;
    let entries = loops
        .iter()
        .map(|lp| {
            let samples = lp.samples().map(|s| s.len()).unwrap_or(0);
            let result = match maslov_index(&section, lp) {
                Ok(r) => LoopResult::Ok(r),
                Err(e) => {
                    let rec = ErrorRecord::from(e);
                    first_error.get_or_insert_with(|| rec.clone());
                    LoopResult::Err { error: rec }
                }
            };
            LoopEntry { lp: lp.clone(), samples, result }
        })
        .collect();
    out.json("maslov.json", &MaslovReport { surface: surface.label().to_string(), grid: grid_spec, loops: entries })?;
    Ok(Outcome { error: first_error })
}

#[derive(Serialize)]
struct FlowSummary<'a> {
    surface: String,
    circle: &'a BoundaryCircle,
    n_r: usize,
    n_theta: usize,
    options: &'a FlowOptions,
    initial_boundary_defect: f64,
    initial_spacelike_nodes: usize,
    nodes: usize,
    #[serde(flatten)]
    status: &'a FlowStatus,
    steps: usize,
    time: f64,
    initial_dbar_norm: f64,
    final_dbar_norm: f64,
    ratio: f64,
    final_dt: f64,
    final_spacelike: bool,
}

fn flow(
    surface: &ParamSurface,
    section_grid: &SampleGrid,
    circle: &BoundaryCircle,
    n_r: usize,
    n_theta: usize,
    options: &FlowOptions,
    out: &mut OutDir,
) -> Result<Outcome, ErrorRecord> {
    let section = LagrangianSection::from_surface(surface, section_grid)?;
    let initial = init_disc(&section, circle, n_r, n_theta)?;
    let spacelike_nodes = initial.spacelike.iter().filter(|&&b| b).count();
    let boundary_defect = initial.boundary_defect;
    let run: FlowRun = run_flow(FlowState::new(initial.mesh), &section, options)?;

    let mut traj = Csv::new(&["step", "time", "dbar_norm", "max_boundary_defect", "spacelike_ok"]);
    for r in &run.trajectory {
        traj.row(&[r.step.to_string(), num(r.time), num(r.dbar_norm), num(r.max_boundary_defect), r.spacelike_ok.to_string()]);
    }
    let mesh = &run.state.mesh;
    let mut fin = Csv::new(&["r", "theta", "re_xi", "im_xi", "re_eta", "im_eta"]);
    for n in 0..mesh.len() {
        let (r, th) = mesh.polar(n);
        fin.row(&[num(r), num(th), num(mesh.xi[n].re), num(mesh.xi[n].im), num(mesh.eta[n].re), num(mesh.eta[n].im)]);
    }
    let first = run.trajectory[0].dbar_norm;
    let summary = FlowSummary {
        surface: surface.label().to_string(),
        circle,
        n_r,
        n_theta,
        options,
        initial_boundary_defect: boundary_defect,
        initial_spacelike_nodes: spacelike_nodes,
        nodes: mesh.len(),
        status: &run.status,
        steps: run.state.step_count,
        time: run.state.time,
        initial_dbar_norm: first,
        final_dbar_norm: run.state.dbar_norm,
        ratio: if first > 0.0 { run.state.dbar_norm / first } else { f64::NAN },
        final_dt: run.final_dt,
        final_spacelike: run.state.spacelike_ok,
    };
    out.write("trajectory.csv", &traj.into_bytes())?;
    out.write("final_mesh.csv", &fin.into_bytes())?;
    out.json("flow_summary.json", &summary)?;
    Ok(Outcome { error: None })
}

#[derive(Serialize)]
struct ProfileSection {
    profile: ProfileSpec,
    all_pass: bool,
    report: ProfileReport,
}

#[derive(Serialize)]
struct ProbeSection {
    surface: String,
    rays: Vec<RayLength>,
}

#[derive(Serialize)]
struct ToponogovReport {
    profile: Option<ProfileSection>,
    sweep: Option<GapSweepResult>,
    probe: Option<ProbeSection>,
}

fn toponogov(
    profile: Option<(ProfileSpec, ProfileGrid)>,
    sweep: Option<(ParamSurface, Vec<f64>, SweepOptions)>,
    probe: Option<(ParamSurface, Vec<ParamRay>, ProbeOptions)>,
    out: &mut OutDir,
) -> Result<Outcome, ErrorRecord> {
    let profile = profile.map(|(spec, grid)| {
        let report = profile_check(spec.build().as_ref(), &grid);
        ProfileSection { profile: spec, all_pass: report.all_pass(), report }
    });
    let sweep = sweep.map(|(surface, radii, opts)| gap_sweep(&surface, &radii, &opts)).transpose()?;
    let probe = probe
        .map(|(surface, rays, opts)| {
            completeness_probe(&surface, &rays, &opts).map(|r| ProbeSection { surface: surface.label().to_string(), rays: r })
        })
        .transpose()?;
    if let Some(s) = &sweep {
        let mut csv = Csv::new(&["R", "min_gap"]);
        for (r, g) in s.radii.iter().zip(&s.min_gap) {
            csv.row(&[num(*r), num(*g)]);
        }
        out.write("sweep.csv", &csv.into_bytes())?;
    }
    out.json("toponogov.json", &ToponogovReport { profile, sweep, probe })?;
    Ok(Outcome { error: None })
}
