//! Energy, constraint residuals, Sobolev and wave-Sobolev norms, and the
//! scaling-symmetry check.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::dynamics::{evolve, DynamicsError, Model, Scheme, Trajectory};
use crate::fields::{
    covariant_derivative_with, curvature_with, n3_cross, Derivatives, State, VectorField3,
};
use crate::par;
use crate::spectral::{homogeneous_norm, Grid, ScalarField};

/// Minimum number of time samples in a spacetime window.
pub const MIN_WINDOW: usize = 8;
/// Fraction of the window tapered at each end.
pub const TAPER_FRACTION: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("spacetime window has {0} samples, need at least {MIN_WINDOW}")]
    WindowTooShort(usize),
    #[error("scaling factor {0} must be a power of two greater than one")]
    IncompatibleGrid(f64),
    #[error("spacetime stack is inconsistent: {0}")]
    BadStack(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// `E = ½∫(Σ_μ |D_μφ|² + κ⁻²(1 + φ₃)(1 − φ₃)³) dx`.
pub fn energy(state: &State) -> f64 {
    energy_with(state, &Derivatives::of(state))
}

pub fn energy_with(state: &State, d: &Derivatives) -> f64 {
    let mut dens = (0..3).fold(ScalarField::zeros(state.grid()), |acc, mu| {
        acc + covariant_derivative_with(state, d, mu).norm_sqr()
    });
    let k2 = 1.0 / (state.kappa * state.kappa);
    dens = dens + state.phi.c[2].map(|p| k2 * (1.0 + p) * (1.0 - p).powi(3));
    0.5 * dens.integral()
}

/// Pointwise constraint residual fields.
#[derive(Clone, Debug)]
pub struct Residuals {
    /// `∂ₜA₀ − ∂₁A₁ − ∂₂A₂`
    pub lorenz: ScalarField,
    /// `κF₀₁ − ⟨n₃×φ, D₂φ⟩`
    pub f1: ScalarField,
    /// `κF₁₂ + ⟨n₃×φ, D₀φ⟩`
    pub f2: ScalarField,
    /// `κF₀₂ + ⟨n₃×φ, D₁φ⟩`
    pub f3: ScalarField,
    /// `|φ|² − 1`
    pub rho: ScalarField,
}

pub fn residual_fields(state: &State) -> Residuals {
    residual_fields_with(state, &Derivatives::of(state))
}

pub fn residual_fields_with(state: &State, d: &Derivatives) -> Residuals {
    let k = state.kappa;
    let rot = n3_cross(&state.phi);
    let j = |mu: usize| rot.dot(&covariant_derivative_with(state, d, mu));
    let lorenz = &d.a[0].c[0] - &d.a[1].c[1] - &d.a[2].c[2];
    Residuals {
        lorenz,
        f1: curvature_with(d, 0, 1).scaled(k) - j(2),
        f2: curvature_with(d, 1, 2).scaled(k) + j(0),
        f3: curvature_with(d, 0, 2).scaled(k) + j(1),
        rho: state.phi.norm_sqr().map(|x| x - 1.0),
    }
}

/// `L²` norms of the residuals and `max|ρ|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstraintResiduals {
    pub max_rho: f64,
    pub lorenz_l2: f64,
    pub f1_l2: f64,
    pub f2_l2: f64,
    pub f3_l2: f64,
}

pub fn constraint_residuals(state: &State) -> ConstraintResiduals {
    let r = residual_fields(state);
    ConstraintResiduals {
        max_rho: r.rho.max_abs(),
        lorenz_l2: r.lorenz.l2_norm(),
        f1_l2: r.f1.l2_norm(),
        f2_l2: r.f2.l2_norm(),
        f3_l2: r.f3.l2_norm(),
    }
}

/// One row of the diagnostics time series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub energy: f64,
    pub rel_energy_drift: f64,
    pub max_rho: f64,
    pub lorenz_res_l2: f64,
    pub f1_res_l2: f64,
    pub f2_res_l2: f64,
    pub f3_res_l2: f64,
    /// `Hˢ` norm of `φ − n₃`.
    pub hs_phi: f64,
    /// `H^{s−1/2}` norm of `A`.
    pub hs_a: f64,
}

impl DiagnosticsRecord {
    pub const CSV_HEADER: &'static str =
        "t,energy,rel_energy_drift,max_rho,lorenz_res_L2,f1_res_L2,f2_res_L2,f3_res_L2,hs_phi,hs_A";

    pub fn values(&self) -> [f64; 10] {
        [
            self.t,
            self.energy,
            self.rel_energy_drift,
            self.max_rho,
            self.lorenz_res_l2,
            self.f1_res_l2,
            self.f2_res_l2,
            self.f3_res_l2,
            self.hs_phi,
            self.hs_a,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|x| x.is_finite())
    }
}

/// Full record; `e0` is the reference energy for the relative drift
/// (the drift is absolute when `e0 = 0`).
pub fn record(state: &State, e0: f64, s: f64) -> DiagnosticsRecord {
    let d = Derivatives::of(state);
    let e = energy_with(state, &d);
    let r = residual_fields_with(state, &d);
    let dev = state.phi.sub(&VectorField3::north(state.grid()));
    let drift = if e0 != 0.0 {
        (e - e0).abs() / e0.abs()
    } else {
        (e - e0).abs()
    };
    DiagnosticsRecord {
        t: state.t,
        energy: e,
        rel_energy_drift: drift,
        max_rho: r.rho.max_abs(),
        lorenz_res_l2: r.lorenz.l2_norm(),
        f1_res_l2: r.f1.l2_norm(),
        f2_res_l2: r.f2.l2_norm(),
        f3_res_l2: r.f3.l2_norm(),
        hs_phi: dev.sobolev_norm(s),
        hs_a: state.a.sobolev_norm(s - 0.5),
    }
}

/// Uniform time stack of a scalar field over a window, with an optional
/// matching stack of time derivatives.
#[derive(Clone, Debug)]
pub struct SpacetimeField {
    pub dt: f64,
    pub t0: f64,
    pub values: Vec<ScalarField>,
    pub dvalues: Option<Vec<ScalarField>>,
}

impl SpacetimeField {
    pub fn new(
        t0: f64,
        dt: f64,
        values: Vec<ScalarField>,
        dvalues: Option<Vec<ScalarField>>,
    ) -> Result<SpacetimeField, DiagnosticsError> {
        if values.len() < MIN_WINDOW {
            return Err(DiagnosticsError::WindowTooShort(values.len()));
        }
        if !(dt > 0.0) {
            return Err(DiagnosticsError::BadStack(format!("dt = {dt}")));
        }
        let g = values[0].grid().clone();
        if values.iter().any(|v| **v.grid() != *g) {
            return Err(DiagnosticsError::BadStack(
                "samples on different grids".into(),
            ));
        }
        if let Some(dv) = &dvalues {
            if dv.len() != values.len() || dv.iter().any(|v| **v.grid() != *g) {
                return Err(DiagnosticsError::BadStack(
                    "derivative stack does not match".into(),
                ));
            }
        }
        Ok(SpacetimeField {
            dt,
            t0,
            values,
            dvalues,
        })
    }

    /// Extracts one component from a trajectory, e.g. `|s| &s.phi.c[0]`.
    pub fn from_trajectory<F, G>(
        traj: &Trajectory,
        value: F,
        derivative: Option<G>,
    ) -> Result<SpacetimeField, DiagnosticsError>
    where
        F: Fn(&State) -> &ScalarField,
        G: Fn(&State) -> &ScalarField,
    {
        let states = &traj.states;
        if states.len() < 2 {
            return Err(DiagnosticsError::WindowTooShort(states.len()));
        }
        let dt = states[1].t - states[0].t;
        let values = states.iter().map(|s| value(s).clone()).collect();
        let dvalues = derivative.map(|g| states.iter().map(|s| g(s).clone()).collect());
        SpacetimeField::new(states[0].t, dt, values, dvalues)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.values[0].grid()
    }
}

/// Raised-cosine taper: ramps over the first and last 10% of `m` samples.
pub fn taper(m: usize) -> Vec<f64> {
    let span = (m - 1) as f64;
    (0..m)
        .map(|n| {
            let f = n as f64 / span;
            let e = f.min(1.0 - f);
            if e >= TAPER_FRACTION {
                1.0
            } else {
                0.5 * (1.0 - (PI * e / TAPER_FRACTION).cos())
            }
        })
        .collect()
}

/// Temporal frequencies `τ_q = 2πq/(M dt)` in FFT order.
pub fn temporal_frequencies(m: usize, dt: f64) -> Vec<f64> {
    (0..m)
        .map(|q| {
            let qs = if q <= m / 2 {
                q as i64
            } else {
                q as i64 - m as i64
            };
            2.0 * PI * qs as f64 / (m as f64 * dt)
        })
        .collect()
}

/// Space-time spectrum of a tapered stack, normalized so that
/// `Σ_{q,k} |F̃|²/(M dt) = Σₙ dt ‖wₙFₙ‖²_{L²}`. Layout `[k][q]`.
pub(crate) fn spacetime_spectrum(stack: &[ScalarField], dt: f64) -> Vec<Vec<Complex64>> {
    let m = stack.len();
    let w = taper(m);
    let spectra: Vec<_> = stack
        .iter()
        .zip(w.iter())
        .map(|(u, &wn)| u.scaled(wn).spectrum())
        .collect();
    let len = stack[0].grid().len();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(m);
    par::map_range(len, |i| {
        let mut buf: Vec<Complex64> = spectra.iter().map(|s| s.coeffs()[i] * dt).collect();
        fft.process(&mut buf);
        buf
    })
}

fn hsb_stack(stack: &[ScalarField], dt: f64, s: f64, b: f64) -> f64 {
    let grid = stack[0].grid().clone();
    let m = stack.len();
    let tau = temporal_frequencies(m, dt);
    let spec = spacetime_spectrum(stack, dt);
    let mut acc = 0.0;
    for (i, row) in spec.iter().enumerate() {
        let k = grid.kmag(i);
        let ws = (1.0 + k).powf(2.0 * s);
        for (q, c) in row.iter().enumerate() {
            let wb = (1.0 + (tau[q].abs() - k).abs()).powf(2.0 * b);
            acc += ws * wb * c.norm_sqr();
        }
    }
    (acc / (m as f64 * dt)).sqrt()
}

/// `‖⟨ξ⟩ˢ⟨|τ|−|ξ|⟩ᵇ F̃‖_{L²}` of the tapered window.
pub fn hsb_norm(f: &SpacetimeField, s: f64, b: f64) -> Result<f64, DiagnosticsError> {
    if f.len() < MIN_WINDOW {
        return Err(DiagnosticsError::WindowTooShort(f.len()));
    }
    Ok(hsb_stack(&f.values, f.dt, s, b))
}

/// `|f|_{s,b} = ‖f‖_{s,b} + ‖∂ₜf‖_{s−1,b}`; needs the derivative stack.
pub fn hsb_companion(f: &SpacetimeField, s: f64, b: f64) -> Result<f64, DiagnosticsError> {
    let base = hsb_norm(f, s, b)?;
    let dv = f
        .dvalues
        .as_ref()
        .ok_or_else(|| DiagnosticsError::BadStack("time-derivative stack missing".into()))?;
    Ok(base + hsb_stack(dv, f.dt, s - 1.0, b))
}

/// Outcome of a scaling-symmetry comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingReport {
    pub lambda: f64,
    /// Max pointwise mismatch between the rescaled run and the rescaled
    /// original samples, in original units.
    pub mismatch: f64,
    /// Max pointwise difference between the original run at `dt` and `dt/2`.
    pub discretization_error: f64,
    pub hdot1_original: f64,
    pub hdot1_rescaled: f64,
}

impl ScalingReport {
    pub fn hdot1_defect(&self) -> f64 {
        (self.hdot1_original - self.hdot1_rescaled).abs()
    }

    /// Mismatch within ten discretization errors (plus a roundoff floor).
    pub fn consistent(&self) -> bool {
        self.mismatch <= 10.0 * self.discretization_error + 1e-13
    }
}

fn power_of_two(lambda: f64) -> bool {
    lambda > 1.0 && lambda.is_finite() && {
        let e = lambda.log2().round();
        lambda == 2f64.powi(e as i32)
    }
}

/// `u ↦ λᵖ u(λ·)` on the grid of side `L/λ`: same samples, scaled.
fn rescale(u: &ScalarField, grid: &Arc<Grid>, factor: f64) -> ScalarField {
    ScalarField::from_values(grid, u.values().iter().map(|x| x * factor).collect())
}

fn rescale3(v: &VectorField3, grid: &Arc<Grid>, factor: f64) -> VectorField3 {
    VectorField3::new(
        rescale(&v.c[0], grid, factor),
        rescale(&v.c[1], grid, factor),
        rescale(&v.c[2], grid, factor),
    )
}

/// `φ^λ(t, x) = φ(λt, λx)`, `A^λ = λA(λt, λx)`, with `κ → κ/λ` and
/// `m → λ²m`, on the grid of side `L/λ` and the same `N`.
pub fn rescale_state(state: &State, lambda: f64) -> Result<State, DiagnosticsError> {
    if !power_of_two(lambda) {
        return Err(DiagnosticsError::IncompatibleGrid(lambda));
    }
    let g = state.grid();
    let small = Grid::new(g.n_points(), g.side_length() / lambda)
        .map_err(|e| DiagnosticsError::BadStack(e.to_string()))?;
    Ok(State {
        phi: rescale3(&state.phi, &small, 1.0),
        dphi: rescale3(&state.dphi, &small, lambda),
        a: rescale3(&state.a, &small, lambda),
        da: rescale3(&state.da, &small, lambda * lambda),
        t: state.t / lambda,
        kappa: state.kappa / lambda,
        m_bound: state.m_bound * lambda * lambda,
    })
}

/// Maps a rescaled state back to original units.
fn unscale_diff(orig: &State, scaled: &State, lambda: f64) -> f64 {
    let diff = |a: &VectorField3, b: &VectorField3, f: f64| {
        (0..3)
            .map(|c| {
                a.c[c]
                    .values()
                    .iter()
                    .zip(b.c[c].values())
                    .map(|(x, y)| (x - y / f).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    };
    diff(&orig.phi, &scaled.phi, 1.0)
        .max(diff(&orig.dphi, &scaled.dphi, lambda))
        .max(diff(&orig.a, &scaled.a, lambda))
        .max(diff(&orig.da, &scaled.da, lambda * lambda))
}

/// Evolves the rescaled initial data on the rescaled grid and compares it
/// with the original trajectory at matching samples. The discretization
/// error is estimated by rerunning the original at `dt/2`.
pub fn scaling_check(
    traj: &Trajectory,
    lambda: f64,
    scheme: Scheme,
    model: &Model,
) -> Result<ScalingReport, DiagnosticsError> {
    let s0 = traj.first();
    let scaled0 = rescale_state(s0, lambda)?;
    let duration = traj.last().t - s0.t;
    let n3 = |g: &Arc<Grid>| VectorField3::north(g);
    let hdot = |s: &State| {
        let dev = s.phi.sub(&n3(s.grid()));
        dev.c
            .iter()
            .map(|u| homogeneous_norm(u, 1.0).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let hdot1_original = hdot(s0);
    let hdot1_rescaled = hdot(&scaled0);
    if duration <= 0.0 || traj.len() < 2 {
        return Ok(ScalingReport {
            lambda,
            mismatch: 0.0,
            discretization_error: 0.0,
            hdot1_original,
            hdot1_rescaled,
        });
    }
    let dt = traj.dt;
    let scaled = evolve(
        &scaled0,
        duration / lambda,
        dt / lambda,
        scheme,
        traj.stride,
        model,
    )?;
    let fine = evolve(s0, duration, 0.5 * dt, scheme, 2 * traj.stride, model)?;
    let mut mismatch: f64 = 0.0;
    let mut disc: f64 = 0.0;
    for ((o, s), f) in traj.states.iter().zip(&scaled.states).zip(&fine.states) {
        mismatch = mismatch.max(unscale_diff(o, s, lambda));
        disc = disc.max(o.max_abs_diff(f));
    }
    Ok(ScalingReport {
        lambda,
        mismatch,
        discretization_error: disc,
        hdot1_original,
        hdot1_rescaled,
    })
}
