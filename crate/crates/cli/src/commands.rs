//! Subcommand implementations. Each writes its human-readable report to
//! `out` and its files under the configured output directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use cssigma::diagnostics::{
    constraint_residuals, energy, record, scaling_check, DiagnosticsError, DiagnosticsRecord,
};
use cssigma::dynamics::{
    evolve, picard_iterate, step, step_count, DynamicsError, PicardConfig, PicardReport, CFL_FACTOR,
};
use cssigma::estimates::{
    empirical_ratio, instantiations, nullform_conditions, product_conditions, EstimateError,
    ExponentMatrix, NullformExponents, NullformVerdict, RatioReport, RatioWindow, Verdict,
};
use cssigma::fields::{FieldError, State};
use cssigma::initdata::{make_state, preset, InitError};
use cssigma::nullforms::{advection_direct, advection_mean_part, advection_nullform};
use cssigma::spectral::Grid;

use crate::config::{ConfigError, DataSource, RunConfig};
use crate::output;
use crate::snapshot::{self, SnapshotError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid initial data: {0}")]
    Init(#[from] InitError),
    #[error("invalid state: {0}")]
    Field(#[from] FieldError),
    #[error("invalid arguments: {0}")]
    Usage(String),
    #[error("instability at t = {t}: {msg}")]
    Unstable { t: f64, msg: String },
    #[error("Picard iteration not contracting: {0}")]
    NotContracting(String),
    #[error("I/O error on {path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("snapshot error: {0}")]
    Snapshot(#[from] SnapshotError),
    #[error("{0} check(s) failed")]
    CheckFailed(usize),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Diagnostics(DiagnosticsError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Config(_)
            | CliError::Init(_)
            | CliError::Field(_)
            | CliError::Usage(_)
            | CliError::Estimate(_) => 2,
            CliError::Unstable { .. } => 3,
            CliError::NotContracting(_) => 4,
            CliError::Io { .. } | CliError::Snapshot(_) => 5,
            CliError::Diagnostics(DiagnosticsError::Dynamics(e)) => dynamics_code(e),
            CliError::Diagnostics(_) => 2,
        }
    }
}

fn dynamics_code(e: &DynamicsError) -> i32 {
    match e {
        DynamicsError::StepUnstable { .. } => 3,
        DynamicsError::NotContracting { .. } => 4,
        DynamicsError::InvalidStep { .. } => 2,
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::StepUnstable { t, .. } => CliError::Unstable {
                t,
                msg: e.to_string(),
            },
            DynamicsError::NotContracting { .. } => CliError::NotContracting(e.to_string()),
            DynamicsError::InvalidStep { .. } => CliError::Usage(e.to_string()),
        }
    }
}

impl From<DiagnosticsError> for CliError {
    fn from(e: DiagnosticsError) -> Self {
        match e {
            DiagnosticsError::Dynamics(d) => d.into(),
            other => CliError::Diagnostics(other),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

fn say(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(io_err(Path::new("<stdout>")))
}

/// Initial state from a preset or a snapshot. Snapshot data is returned
/// unvalidated so that `check` can inspect damaged files.
pub fn load_initial(cfg: &RunConfig) -> Result<State, CliError> {
    match &cfg.data {
        DataSource::Preset { name, params } => {
            let grid = Grid::new(cfg.n_points, cfg.side_length)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            let free = preset(name, &grid, params)?;
            Ok(make_state(&free, cfg.kappa, cfg.m_bound)?)
        }
        DataSource::Snapshot(path) => {
            let s = snapshot::read(path, cfg.m_bound).map_err(|e| match e {
                SnapshotError::Io(io) => io_err(path)(io),
                other => other.into(),
            })?;
            Ok(s)
        }
    }
}

/// Rebuilds a loaded state through the checked constructor and requires
/// on-sphere, tangent initial data.
fn validated(state: State, sphere_tol: f64) -> Result<State, CliError> {
    let State {
        phi,
        dphi,
        a,
        da,
        t,
        kappa,
        m_bound,
    } = state;
    let state = State::new(phi, dphi, a, da, t, kappa, m_bound)?;
    state.check_on_sphere(sphere_tol)?;
    Ok(state)
}

fn guard_cfl(cfg: &RunConfig, state: &State) -> Result<(), CliError> {
    if cfg.scheme == cssigma::dynamics::Scheme::Rk4 {
        let limit = CFL_FACTOR * state.grid().dx();
        if cfg.dt > limit {
            return Err(ConfigError::Invalid(format!(
                "dt = {} violates the CFL limit {limit:.6e} of the snapshot grid",
                cfg.dt
            ))
            .into());
        }
    }
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_err(path))
}

pub struct SimulateSummary {
    pub steps: usize,
    pub last: DiagnosticsRecord,
    pub diagnostics_path: PathBuf,
    pub snapshots: Vec<PathBuf>,
}

pub fn snapshot_name(step: usize) -> String {
    format!("snapshot_{step:07}.css2")
}

/// Runs the configured evolution, writing `diagnostics.csv` and snapshots.
/// On instability the rows written so far are kept.
pub fn simulate(cfg: &RunConfig, out: &mut dyn Write) -> Result<SimulateSummary, CliError> {
    let mut state = validated(load_initial(cfg)?, cfg.sphere_tol)?;
    guard_cfl(cfg, &state)?;
    ensure_dir(&cfg.output_dir)?;
    let diag_path = cfg.output_dir.join("diagnostics.csv");
    let mut csv = format!("{}\n", output::DIAGNOSTICS_HEADER);
    let e0 = energy(&state);
    let first = record(&state, e0, cfg.s);
    csv.push_str(&output::diagnostics_row(&first));
    csv.push('\n');
    let steps = step_count(cfg.duration, cfg.dt);
    let mut snapshots = Vec::new();
    let mut last = first;
    let flush = |csv: &str| write_file(&diag_path, csv.as_bytes());
    for k in 1..=steps {
        state = match step(&state, cfg.dt, cfg.scheme, &cfg.model) {
            Ok(s) => s,
            Err(e) => {
                flush(&csv)?;
                return Err(e.into());
            }
        };
        let is_last = k == steps;
        if k % cfg.diagnostics_stride == 0 || is_last {
            last = record(&state, e0, cfg.s);
            csv.push_str(&output::diagnostics_row(&last));
            csv.push('\n');
        }
        if (cfg.snapshot_stride > 0 && k % cfg.snapshot_stride == 0) || is_last {
            let p = cfg.output_dir.join(snapshot_name(k));
            write_file(&p, &snapshot::encode(&state))?;
            snapshots.push(p);
        }
    }
    flush(&csv)?;
    say(
        out,
        &format!("completed {steps} steps, final diagnostics:\n"),
    )?;
    say(out, &output::diagnostics_summary(&last))?;
    Ok(SimulateSummary {
        steps,
        last,
        diagnostics_path: diag_path,
        snapshots,
    })
}

pub fn picard(cfg: &RunConfig, out: &mut dyn Write) -> Result<PicardReport, CliError> {
    let init = validated(load_initial(cfg)?, cfg.sphere_tol)?;
    ensure_dir(&cfg.output_dir)?;
    let pc = PicardConfig {
        duration: cfg.duration,
        dt: cfg.dt,
        max_iterations: cfg.picard_max_iterations,
        tol: cfg.picard_tol,
        s: cfg.s,
    };
    let (rep, _) = picard_iterate(&init, &pc, &cfg.model)?;
    let path = cfg.output_dir.join("picard.csv");
    write_file(&path, output::picard_csv(&rep).as_bytes())?;
    say(
        out,
        &format!(
            "iterations = {}, converged = {}, table = {}\n",
            rep.iterations,
            rep.converged,
            path.display()
        ),
    )?;
    say(out, &output::picard_csv(&rep))?;
    Ok(rep)
}

/// One line of the invariant suite.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckItem {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
    pub detail: String,
}

impl CheckItem {
    fn below(name: &str, value: f64, threshold: f64, detail: String) -> CheckItem {
        CheckItem {
            name: name.to_string(),
            value,
            threshold,
            pass: value <= threshold,
            detail,
        }
    }
}

pub const CHECK_RHO: f64 = 1e-7;
pub const CHECK_CONSTRAINT: f64 = 1e-5;
pub const CHECK_DRIFT: f64 = 1e-6;
pub const CHECK_DECOMPOSITION: f64 = 1e-9;
pub const CHECK_HDOT1: f64 = 1e-10;

const FIELD_NAMES: [&str; 12] = [
    "phi1", "phi2", "phi3", "dphi1", "dphi2", "dphi3", "a0", "a1", "a2", "da0", "da1", "da2",
];

fn all_components(s: &State) -> [&cssigma::spectral::ScalarField; 12] {
    [
        &s.phi.c[0],
        &s.phi.c[1],
        &s.phi.c[2],
        &s.dphi.c[0],
        &s.dphi.c[1],
        &s.dphi.c[2],
        &s.a.c[0],
        &s.a.c[1],
        &s.a.c[2],
        &s.da.c[0],
        &s.da.c[1],
        &s.da.c[2],
    ]
}

fn locate(n: usize, idx: usize) -> String {
    format!("(i={}, j={})", idx % n, idx / n)
}

/// Static checks on a single state; failures name the offending field and
/// grid point.
pub fn check_state(state: &State) -> Vec<CheckItem> {
    let n = state.grid().n_points();
    let mut items = Vec::new();
    let mut bad = Vec::new();
    for (name, f) in FIELD_NAMES.iter().zip(all_components(state)) {
        if let Some(i) = f.values().iter().position(|v| !v.is_finite()) {
            bad.push(format!("{name} at {}", locate(n, i)));
        }
    }
    let finite = bad.is_empty();
    items.push(CheckItem {
        name: "finite".into(),
        value: bad.len() as f64,
        threshold: 0.0,
        pass: finite,
        detail: if finite {
            "all fields finite".into()
        } else {
            bad.join("; ")
        },
    });
    if !finite {
        return items;
    }
    let rho: Vec<f64> = state
        .phi
        .norm_sqr()
        .values()
        .iter()
        .map(|x| (x - 1.0).abs())
        .collect();
    let (imax, rmax) =
        rho.iter().enumerate().fold(
            (0, 0.0),
            |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
        );
    items.push(CheckItem::below(
        "sphere",
        rmax,
        CHECK_RHO,
        format!("max ||phi|^2 - 1| at {}", locate(n, imax)),
    ));
    let tan: Vec<f64> = state
        .phi
        .dot(&state.dphi)
        .values()
        .iter()
        .map(|x| x.abs())
        .collect();
    let (itan, tmax) =
        tan.iter().enumerate().fold(
            (0, 0.0),
            |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
        );
    items.push(CheckItem::below(
        "tangency",
        tmax,
        CHECK_RHO,
        format!("max |phi . dphi| at {}", locate(n, itan)),
    ));
    let c = constraint_residuals(state);
    for (name, v) in [
        ("lorenz", c.lorenz_l2),
        ("f1", c.f1_l2),
        ("f2", c.f2_l2),
        ("f3", c.f3_l2),
    ] {
        items.push(CheckItem::below(
            name,
            v,
            CHECK_CONSTRAINT,
            "L2 residual".into(),
        ));
    }
    let direct = advection_direct(state);
    let diff = direct
        .sub(&advection_nullform(state))
        .sub(&advection_mean_part(state))
        .max_abs();
    items.push(CheckItem::below(
        "decomposition",
        diff / (1.0 + direct.max_abs()),
        CHECK_DECOMPOSITION,
        "relative sup error of the null-form splitting of A.dphi plus zero modes".into(),
    ));
    items
}

/// Full invariant suite: static checks, an evolution over the configured
/// window, and a λ = 2 scaling comparison on a short prefix.
pub fn check(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<CheckItem>, CliError> {
    let state = load_initial(cfg)?;
    let mut items = check_state(&state);
    let statics_ok = items.iter().all(|i| i.pass);
    if statics_ok {
        guard_cfl(cfg, &state)?;
        let e0 = energy(&state);
        let mut recs = Vec::new();
        let steps = step_count(cfg.duration, cfg.dt);
        let mut cur = state.clone();
        for k in 1..=steps {
            cur = step(&cur, cfg.dt, cfg.scheme, &cfg.model)?;
            if k % cfg.diagnostics_stride == 0 || k == steps {
                recs.push(record(&cur, e0, cfg.s));
            }
        }
        let worst = |f: fn(&DiagnosticsRecord) -> f64| recs.iter().map(f).fold(0.0, f64::max);
        items.push(CheckItem::below(
            "energy_drift",
            worst(|r| r.rel_energy_drift),
            CHECK_DRIFT,
            format!("over {steps} steps"),
        ));
        items.push(CheckItem::below(
            "run_sphere",
            worst(|r| r.max_rho),
            CHECK_RHO,
            "max over run".into(),
        ));
        items.push(CheckItem::below(
            "run_lorenz",
            worst(|r| r.lorenz_res_l2),
            CHECK_CONSTRAINT,
            "max over run".into(),
        ));
        items.push(CheckItem::below(
            "run_f2",
            worst(|r| r.f2_res_l2),
            CHECK_CONSTRAINT,
            "max over run".into(),
        ));

        let short = (steps.min(20) as f64) * cfg.dt;
        let traj = evolve(&state, short, cfg.dt, cfg.scheme, 1, &cfg.model)?;
        let sc = scaling_check(&traj, 2.0, cfg.scheme, &cfg.model)?;
        items.push(CheckItem {
            name: "scaling_lambda2".into(),
            value: sc.mismatch,
            threshold: 10.0 * sc.discretization_error + 1e-13,
            pass: sc.consistent(),
            detail: format!(
                "rescaled run vs original over {} steps; discretization error {:e}",
                traj.len() - 1,
                sc.discretization_error
            ),
        });
        items.push(CheckItem::below(
            "scaling_hdot1",
            sc.hdot1_defect(),
            CHECK_HDOT1,
            format!("Hdot1(phi - n3) = {:e}", sc.hdot1_original),
        ));
    }
    for it in &items {
        say(
            out,
            &format!(
                "{} {:<16} value={} threshold={} {}\n",
                if it.pass { "PASS" } else { "FAIL" },
                it.name,
                output::num(it.value),
                output::num(it.threshold),
                it.detail
            ),
        )?;
    }
    if !statics_ok {
        say(out, "static checks failed; evolution checks skipped\n")?;
    }
    let failed = items.iter().filter(|i| !i.pass).count();
    if failed > 0 {
        return Err(CliError::CheckFailed(failed));
    }
    Ok(items)
}

pub fn lemma_product(
    s: [f64; 3],
    b: [f64; 3],
    csv: bool,
    out: &mut dyn Write,
) -> Result<Verdict, CliError> {
    let v = product_conditions(&ExponentMatrix::new(s, b)?);
    let text = if csv {
        output::verdict_csv(&v)
    } else {
        format!("{v}\n")
    };
    say(out, &text)?;
    Ok(v)
}

pub fn lemma_nullform(
    p: &NullformExponents,
    csv: bool,
    out: &mut dyn Write,
) -> Result<NullformVerdict, CliError> {
    let v = nullform_conditions(p);
    let text = if csv {
        output::nullform_csv(&v)
    } else {
        format!("kind {}\n{v}\n", p.kind)
    };
    say(out, &text)?;
    Ok(v)
}

pub fn lemma_instances(
    s: f64,
    eps: f64,
    csv: bool,
    out: &mut dyn Write,
) -> Result<[NullformVerdict; 3], CliError> {
    if !(s > 1.0) || !(0.0..1.0).contains(&eps) {
        return Err(CliError::Usage(format!(
            "need s > 1 and eps in [0, 1), got s = {s}, eps = {eps}"
        )));
    }
    let vs = instantiations(s, eps);
    for v in &vs {
        let text = if csv {
            format!("# {}\n{}", v.exponents.kind, output::nullform_csv(v))
        } else {
            format!("== {} at s = {s}, eps = {eps}\n{v}\n", v.exponents.kind)
        };
        say(out, &text)?;
    }
    Ok(vs)
}

pub fn ratio(
    p: &NullformExponents,
    trials: usize,
    grid: &std::sync::Arc<Grid>,
    window: &RatioWindow,
    csv_path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<RatioReport, CliError> {
    let rep = empirical_ratio(p, trials, grid, window)?;
    if let Some(path) = csv_path {
        write_file(path, output::ratio_csv(&rep).as_bytes())?;
    }
    let fmt = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), output::num);
    say(
        out,
        &format!(
            "kind = {}\ntrials = {trials}\ndegenerate = {}\nmax = {}\nmax_first_half = {}\nmedian = {}\np90 = {}\ntaper_leakage = {}\n",
            p.kind,
            rep.degenerate(),
            fmt(rep.max_ratio()),
            fmt(rep.max_prefix(trials.div_ceil(2))),
            fmt(rep.quantile(0.5)),
            fmt(rep.quantile(0.9)),
            output::num(rep.leakage)
        ),
    )?;
    Ok(rep)
}
