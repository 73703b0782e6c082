//! Nonlinear sources, time integrators, trajectories and Picard iteration.
//!
//! The system is evolved as a first-order system in `(φ, ∂ₜφ, A, ∂ₜA)`:
//!
//! ```text
//! ∂ₜ(∂ₜφ) = Δφ + G,    ∂ₜ(∂ₜA_μ) = ΔA_μ + H_μ
//! ```
//!
//! Sources are evaluated pointwise and 2/3-dealiased before they enter the
//! spectral Laplacian or the exact wave propagator.

use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::fields::{Derivatives, State, VectorField3};
use crate::par;
use crate::spectral::{Grid, ScalarField, Spectrum};

/// Default blow-up threshold on any sample.
pub const OVERFLOW_GUARD: f64 = 1e12;
/// Default Courant factor for the explicit scheme, `dt ≤ cfl·dx`.
pub const CFL_FACTOR: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("step unstable at t = {t}: max |field| = {max_abs:e}")]
    StepUnstable { t: f64, max_abs: f64 },
    #[error("Picard iteration not contracting at iteration {iteration} (ratios {ratios:?})")]
    NotContracting { iteration: usize, ratios: Vec<f64> },
    #[error("invalid time step dt = {dt}: {reason}")]
    InvalidStep { dt: f64, reason: String },
}

/// Which form of the gauge source `H` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceForm {
    /// `H_μ = (1/κ)ε_{μνρ}∂^ν j^ρ` with `j^ρ = ⟨n₃×φ, D^ρφ⟩`.
    #[default]
    Derived,
    /// `H_μ = (1/κ)ε_{μνρ}(Q^{νρ}(φ, φ×n₃) + A^ρ∂^ν|n₃×φ|²)`, kept for comparison.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Rk4,
    Trig,
}

/// Switches shared by every integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    /// When false, `G = H = 0` and the system is the free wave equation.
    pub nonlinear: bool,
    pub source_form: SourceForm,
    pub dealias: bool,
    pub cfl_factor: f64,
    pub overflow_guard: f64,
}

impl Default for Model {
    fn default() -> Self {
        Model {
            nonlinear: true,
            source_form: SourceForm::Derived,
            dealias: true,
            cfl_factor: CFL_FACTOR,
            overflow_guard: OVERFLOW_GUARD,
        }
    }
}

impl Model {
    pub fn linear() -> Self {
        Model {
            nonlinear: false,
            ..Model::default()
        }
    }
}

#[inline]
fn dot(u: &[f64; 3], v: &[f64; 3]) -> f64 {
    u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
}

/// `n₃·(u × v)`.
#[inline]
fn c3(u: &[f64; 3], v: &[f64; 3]) -> f64 {
    u[0] * v[1] - u[1] * v[0]
}

/// Samples of every first derivative at one grid point.
struct Point {
    phi: [f64; 3],
    /// `dphi[μ] = ∂_μφ`
    dphi: [[f64; 3]; 3],
    a: [f64; 3],
    /// `da[μ][ν] = ∂_μA_ν`
    da: [[f64; 3]; 3],
}

impl Point {
    fn load(state: &State, d: &Derivatives, i: usize) -> Point {
        let v = |f: &VectorField3| [f.c[0].values()[i], f.c[1].values()[i], f.c[2].values()[i]];
        Point {
            phi: v(&state.phi),
            dphi: [v(&d.phi[0]), v(&d.phi[1]), v(&d.phi[2])],
            a: v(&state.a),
            da: [v(&d.a[0]), v(&d.a[1]), v(&d.a[2])],
        }
    }

    fn g(&self, inv_k2: f64) -> [f64; 3] {
        let p = &self.phi;
        let a = &self.a;
        let [d0, d1, d2] = &self.dphi;
        let q0 = dot(d0, d0) - dot(d1, d1) - dot(d2, d2);
        let adv: [f64; 3] = std::array::from_fn(|c| a[0] * d0[c] - a[1] * d1[c] - a[2] * d2[c]);
        let aa = a[0] * a[0] - a[1] * a[1] - a[2] * a[2];
        let w = p[0] * p[0] + p[1] * p[1];
        // adv·(n₃×φ) with n₃×φ = (−φ₂, φ₁, 0)
        let s = q0 + 2.0 * (-adv[0] * p[1] + adv[1] * p[0]) + aa * w;
        let pot = inv_k2 * (1.0 - p[2]).powi(2) * (1.0 + 2.0 * p[2]);
        let norm = dot(p, p);
        [
            -p[0] * s + 2.0 * adv[1] + aa * p[0] - p[0] * p[2] * pot,
            -p[1] * s - 2.0 * adv[0] + aa * p[1] - p[1] * p[2] * pot,
            -p[2] * s - (p[2] * p[2] - norm) * pot,
        ]
    }

    fn h(&self, inv_k: f64, form: SourceForm) -> [f64; 3] {
        let p = &self.phi;
        let a = &self.a;
        let [d0, d1, d2] = &self.dphi;
        let c12 = c3(d1, d2);
        let c02 = c3(d0, d2);
        let c01 = c3(d0, d1);
        let w = p[0] * p[0] + p[1] * p[1];
        let wd = |d: &[f64; 3]| 2.0 * (p[0] * d[0] + p[1] * d[1]);
        let (wt, w1, w2) = (wd(d0), wd(d1), wd(d2));
        match form {
            SourceForm::Derived => {
                let da = &self.da;
                // ∂_μ(A_ν w)
                let daw = |mu: usize, nu: usize, wmu: f64| da[mu][nu] * w + a[nu] * wmu;
                [
                    inv_k * (2.0 * c12 + daw(1, 2, w1) - daw(2, 1, w2)),
                    inv_k * (2.0 * c02 - daw(2, 0, w2) + daw(0, 2, wt)),
                    inv_k * (-2.0 * c01 - daw(0, 1, wt) + daw(1, 0, w1)),
                ]
            }
            SourceForm::AsPrinted => [
                inv_k * (4.0 * c12 + a[2] * w1 - a[1] * w2),
                inv_k * (4.0 * c02 - a[0] * w2 + a[2] * wt),
                inv_k * (-4.0 * c01 - a[1] * wt + a[0] * w1),
            ],
        }
    }
}

fn split3(grid: &Arc<Grid>, v: Vec<[f64; 3]>) -> VectorField3 {
    let comp = |c: usize| ScalarField::from_values(grid, v.iter().map(|x| x[c]).collect());
    VectorField3::new(comp(0), comp(1), comp(2))
}

/// `(G, H)` from a state and its derivative cache, not dealiased.
pub fn sources_with(
    state: &State,
    d: &Derivatives,
    form: SourceForm,
) -> (VectorField3, VectorField3) {
    let grid = state.grid().clone();
    let inv_k = 1.0 / state.kappa;
    let inv_k2 = inv_k * inv_k;
    let out = par::map_pointwise(grid.len(), |i| {
        let pt = Point::load(state, d, i);
        (pt.g(inv_k2), pt.h(inv_k, form))
    });
    let (g, h): (Vec<_>, Vec<_>) = out.into_iter().unzip();
    (split3(&grid, g), split3(&grid, h))
}

/// Matter source `G`.
pub fn compute_g(state: &State) -> VectorField3 {
    sources_with(state, &Derivatives::of(state), SourceForm::Derived).0
}

/// Gauge source `(H₀, H₁, H₂)` in the production form.
pub fn compute_h(state: &State) -> VectorField3 {
    compute_h_form(state, SourceForm::Derived)
}

pub fn compute_h_form(state: &State, form: SourceForm) -> VectorField3 {
    sources_with(state, &Derivatives::of(state), form).1
}

/// Time derivative of the first-order system.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeDerivative {
    pub phi: VectorField3,
    pub dphi: VectorField3,
    pub a: VectorField3,
    pub da: VectorField3,
}

fn source_spectra(state: &State, d: &Derivatives, model: &Model) -> Option<[Spectrum; 6]> {
    if !model.nonlinear {
        return None;
    }
    let (g, h) = sources_with(state, d, model.source_form);
    let sp = |u: &ScalarField| {
        let s = u.spectrum();
        if model.dealias {
            s.dealiased()
        } else {
            s
        }
    };
    Some([
        sp(&g.c[0]),
        sp(&g.c[1]),
        sp(&g.c[2]),
        sp(&h.c[0]),
        sp(&h.c[1]),
        sp(&h.c[2]),
    ])
}

/// `(∂ₜφ, Δφ + G, ∂ₜA, ΔA + H)`.
pub fn rhs_first_order(state: &State, model: &Model) -> TimeDerivative {
    let (d, phi_hat, a_hat) = Derivatives::with_spectra(state);
    let src = source_spectra(state, &d, model);
    let grid = state.grid().clone();
    let accel = |u: &Spectrum, f: Option<&Spectrum>| {
        let g = grid.clone();
        let mut s = u.map_real(move |i| -g.kmag(i) * g.kmag(i));
        if let Some(f) = f {
            s.axpy(1.0, f);
        }
        s.to_field()
    };
    let pick = |c: usize| src.as_ref().map(|s| &s[c]);
    TimeDerivative {
        phi: state.dphi.clone(),
        dphi: VectorField3::new(
            accel(&phi_hat[0], pick(0)),
            accel(&phi_hat[1], pick(1)),
            accel(&phi_hat[2], pick(2)),
        ),
        a: state.da.clone(),
        da: VectorField3::new(
            accel(&a_hat[0], pick(3)),
            accel(&a_hat[1], pick(4)),
            accel(&a_hat[2], pick(5)),
        ),
    }
}

fn shifted(state: &State, k: &TimeDerivative, h: f64) -> State {
    let mut s = state.clone();
    s.phi.axpy(h, &k.phi);
    s.dphi.axpy(h, &k.dphi);
    s.a.axpy(h, &k.a);
    s.da.axpy(h, &k.da);
    s
}

fn guard(state: State, model: &Model) -> Result<State, DynamicsError> {
    let m = state.max_abs();
    if !m.is_finite() || m > model.overflow_guard {
        return Err(DynamicsError::StepUnstable {
            t: state.t,
            max_abs: m,
        });
    }
    Ok(state)
}

fn check_dt(
    dt: f64,
    grid: &Grid,
    cfl: Option<f64>,
    allow_negative: bool,
) -> Result<(), DynamicsError> {
    let bad = |reason: &str| {
        Err(DynamicsError::InvalidStep {
            dt,
            reason: reason.to_string(),
        })
    };
    if !dt.is_finite() || dt == 0.0 || (!allow_negative && dt < 0.0) {
        return bad("must be finite and positive");
    }
    if let Some(c) = cfl {
        let limit = c * grid.dx();
        if dt.abs() > limit {
            return bad(&format!("exceeds CFL limit {limit}"));
        }
    }
    Ok(())
}

/// Classical fourth-order Runge–Kutta step.
pub fn step_rk4(state: &State, dt: f64, model: &Model) -> Result<State, DynamicsError> {
    check_dt(dt, state.grid(), Some(model.cfl_factor), false)?;
    let k1 = rhs_first_order(state, model);
    let k2 = rhs_first_order(&shifted(state, &k1, 0.5 * dt), model);
    let k3 = rhs_first_order(&shifted(state, &k2, 0.5 * dt), model);
    let k4 = rhs_first_order(&shifted(state, &k3, dt), model);
    let mut next = state.clone();
    for (w, k) in [(1.0, &k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)] {
        let c = dt * w / 6.0;
        next.phi.axpy(c, &k.phi);
        next.dphi.axpy(c, &k.dphi);
        next.a.axpy(c, &k.a);
        next.da.axpy(c, &k.da);
    }
    next.t = state.t + dt;
    guard(next, model)
}

/// Per-mode coefficients of the exact propagator over a step `h`.
#[derive(Clone, Copy, Debug)]
struct Propagator {
    cos: f64,
    /// `sin(hω)/ω`, limit `h`
    sin_over: f64,
    /// `ω sin(hω)`
    omega_sin: f64,
    /// `(1 − cos hω)/ω²`, limit `h²/2`
    one_minus_cos: f64,
}

impl Propagator {
    fn new(omega: f64, h: f64) -> Propagator {
        if omega == 0.0 {
            return Propagator {
                cos: 1.0,
                sin_over: h,
                omega_sin: 0.0,
                one_minus_cos: 0.5 * h * h,
            };
        }
        let x = omega * h;
        let half = (0.5 * x).sin() / omega;
        Propagator {
            cos: x.cos(),
            sin_over: x.sin() / omega,
            omega_sin: omega * x.sin(),
            one_minus_cos: 2.0 * half * half,
        }
    }
}

/// `(u, ∂ₜu) ↦` state after `h` for `□u = F` with `F` constant in time.
fn propagate(u: &Spectrum, v: &Spectrum, f: Option<&Spectrum>, h: f64) -> (Spectrum, Spectrum) {
    let g = u.grid().clone();
    let (uc, vc) = (u.coeffs(), v.coeffs());
    let fc = f.map(|f| f.coeffs());
    let out = par::map_pointwise(g.len(), |i| {
        let p = Propagator::new(g.kmag(i), h);
        let mut un = uc[i] * p.cos + vc[i] * p.sin_over;
        let mut vn = vc[i] * p.cos - uc[i] * p.omega_sin;
        if let Some(fc) = fc {
            un += fc[i] * p.one_minus_cos;
            vn += fc[i] * p.sin_over;
        }
        (un, vn)
    });
    spectra_pair(&g, out)
}

fn spectra_pair(g: &Arc<Grid>, out: Vec<(Complex64, Complex64)>) -> (Spectrum, Spectrum) {
    let mut a = Spectrum::zeros(g);
    let mut b = Spectrum::zeros(g);
    for (i, (x, y)) in out.into_iter().enumerate() {
        a.coeffs_mut()[i] = x;
        b.coeffs_mut()[i] = y;
    }
    (a, b)
}

/// The six wave components `(φ₁, φ₂, φ₃, A₀, A₁, A₂)` and their velocities.
fn wave_spectra(state: &State) -> ([Spectrum; 6], [Spectrum; 6]) {
    let u = [
        state.phi.c[0].spectrum(),
        state.phi.c[1].spectrum(),
        state.phi.c[2].spectrum(),
        state.a.c[0].spectrum(),
        state.a.c[1].spectrum(),
        state.a.c[2].spectrum(),
    ];
    let v = [
        state.dphi.c[0].spectrum(),
        state.dphi.c[1].spectrum(),
        state.dphi.c[2].spectrum(),
        state.da.c[0].spectrum(),
        state.da.c[1].spectrum(),
        state.da.c[2].spectrum(),
    ];
    (u, v)
}

fn state_from_spectra(template: &State, u: &[Spectrum; 6], v: &[Spectrum; 6], t: f64) -> State {
    let f = |s: &[Spectrum; 6], o: usize| {
        VectorField3::new(s[o].to_field(), s[o + 1].to_field(), s[o + 2].to_field())
    };
    State {
        phi: f(u, 0),
        dphi: f(v, 0),
        a: f(u, 3),
        da: f(v, 3),
        t,
        kappa: template.kappa,
        m_bound: template.m_bound,
    }
}

fn propagate_all(
    u: &[Spectrum; 6],
    v: &[Spectrum; 6],
    f: Option<&[Spectrum; 6]>,
    h: f64,
) -> ([Spectrum; 6], [Spectrum; 6]) {
    let pairs: Vec<_> = (0..6)
        .map(|c| propagate(&u[c], &v[c], f.map(|f| &f[c]), h))
        .collect();
    let mut it = pairs.into_iter();
    let mut us = Vec::with_capacity(6);
    let mut vs = Vec::with_capacity(6);
    for _ in 0..6 {
        let (a, b) = it.next().unwrap();
        us.push(a);
        vs.push(b);
    }
    (to6(us), to6(vs))
}

fn to6(v: Vec<Spectrum>) -> [Spectrum; 6] {
    v.try_into().expect("six components")
}

/// Trigonometric (exponential midpoint) step: exact linear propagation, the
/// source frozen at its value at the predicted midpoint. Negative `dt`
/// integrates backwards.
pub fn step_trig(state: &State, dt: f64, model: &Model) -> Result<State, DynamicsError> {
    check_dt(dt, state.grid(), None, true)?;
    let (u, v) = wave_spectra(state);
    let t = state.t + dt;
    if !model.nonlinear {
        let (un, vn) = propagate_all(&u, &v, None, dt);
        return guard(state_from_spectra(state, &un, &vn, t), model);
    }
    let d = Derivatives::of(state);
    let f0 = source_spectra(state, &d, model);
    let (um, vm) = propagate_all(&u, &v, f0.as_ref(), 0.5 * dt);
    let mid = state_from_spectra(state, &um, &vm, state.t + 0.5 * dt);
    let dm = Derivatives::of(&mid);
    let fm = source_spectra(&mid, &dm, model);
    let (un, vn) = propagate_all(&u, &v, fm.as_ref(), dt);
    guard(state_from_spectra(state, &un, &vn, t), model)
}

pub fn step(state: &State, dt: f64, scheme: Scheme, model: &Model) -> Result<State, DynamicsError> {
    match scheme {
        Scheme::Rk4 => step_rk4(state, dt, model),
        Scheme::Trig => step_trig(state, dt, model),
    }
}

/// States sampled every `stride` steps of a uniform-`dt` run; the final
/// state is always included.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub stride: usize,
    pub states: Vec<State>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn first(&self) -> &State {
        &self.states[0]
    }

    pub fn last(&self) -> &State {
        self.states
            .last()
            .expect("trajectory holds at least one state")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Number of steps covering a duration: `⌈T/dt⌉`, ignoring roundoff overshoot.
pub fn step_count(duration: f64, dt: f64) -> usize {
    let r = duration / dt.abs();
    let n = r.round();
    if (r - n).abs() <= 1e-9 * n.max(1.0) {
        n as usize
    } else {
        r.ceil() as usize
    }
}

pub fn evolve(
    state: &State,
    duration: f64,
    dt: f64,
    scheme: Scheme,
    stride: usize,
    model: &Model,
) -> Result<Trajectory, DynamicsError> {
    evolve_with(state, duration, dt, scheme, stride, model, |_| {})
}

/// Runs `⌈T/dt⌉` steps, calling `callback` on the initial state, every
/// `stride` steps and at the end; the same states are stored.
pub fn evolve_with<F>(
    state: &State,
    duration: f64,
    dt: f64,
    scheme: Scheme,
    stride: usize,
    model: &Model,
    mut callback: F,
) -> Result<Trajectory, DynamicsError>
where
    F: FnMut(&State),
{
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(DynamicsError::InvalidStep {
            dt,
            reason: format!("duration {duration} must be positive"),
        });
    }
    let stride = stride.max(1);
    let n = step_count(duration, dt);
    let mut cur = state.clone();
    callback(&cur);
    let mut states = vec![cur.clone()];
    for k in 1..=n {
        cur = step(&cur, dt, scheme, model)?;
        if k % stride == 0 || k == n {
            callback(&cur);
            states.push(cur.clone());
        }
    }
    Ok(Trajectory { dt, stride, states })
}

/// 8-point Gauss–Legendre nodes and weights on `[−1, 1]`.
const GAUSS8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

/// Node offsets (in steps) of the three cubic stencils: at the start, in the
/// interior and at the end of the time grid.
const STENCILS: [[f64; 4]; 3] = [
    [0.0, 1.0, 2.0, 3.0],
    [-1.0, 0.0, 1.0, 2.0],
    [-2.0, -1.0, 0.0, 1.0],
];

fn lagrange(nodes: &[f64; 4], j: usize, x: f64) -> f64 {
    (0..4)
        .filter(|&m| m != j)
        .map(|m| (x - nodes[m]) / (nodes[j] - nodes[m]))
        .product()
}

/// Duhamel weights `∫₀ʰ sin((h−s)ω)/ω ℓⱼ(s) ds` and `∫₀ʰ cos((h−s)ω) ℓⱼ(s) ds`.
#[derive(Clone, Copy, Debug)]
struct ModeWeights {
    prop: Propagator,
    wu: [[f64; 4]; 3],
    wv: [[f64; 4]; 3],
}

impl ModeWeights {
    fn new(omega: f64, h: f64) -> ModeWeights {
        let mut wu = [[0.0; 4]; 3];
        let mut wv = [[0.0; 4]; 3];
        for (st, nodes) in STENCILS.iter().enumerate() {
            for &(x, w) in &GAUSS8 {
                let s = 0.5 * (1.0 + x);
                let tau = h * (1.0 - s);
                let (ku, kv) = if omega == 0.0 {
                    (tau, 1.0)
                } else {
                    ((omega * tau).sin() / omega, (omega * tau).cos())
                };
                for j in 0..4 {
                    let l = lagrange(nodes, j, s);
                    wu[st][j] += 0.5 * h * w * ku * l;
                    wv[st][j] += 0.5 * h * w * kv * l;
                }
            }
        }
        ModeWeights {
            prop: Propagator::new(omega, h),
            wu,
            wv,
        }
    }
}

/// Stencil index and first node for the step from node `n` to `n + 1`.
fn stencil_for(n: usize, steps: usize) -> (usize, usize) {
    if n == 0 {
        (0, 0)
    } else if n + 2 > steps {
        (2, n - 2)
    } else {
        (1, n - 1)
    }
}

/// Solves `□u = F` for all six wave components with `F` given at every
/// node, cubic in time between nodes.
fn linear_solve(
    init: &State,
    sources: Option<&[[Spectrum; 6]]>,
    weights: &[ModeWeights],
    steps: usize,
    dt: f64,
) -> Vec<State> {
    let grid = init.grid().clone();
    let (mut u, mut v) = wave_spectra(init);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(init.clone());
    for n in 0..steps {
        let (st, first) = stencil_for(n, steps);
        let mut us = Vec::with_capacity(6);
        let mut vs = Vec::with_capacity(6);
        for c in 0..6 {
            let (uc, vc) = (u[c].coeffs(), v[c].coeffs());
            let fs: Option<[&[Complex64]; 4]> =
                sources.map(|s| std::array::from_fn(|j| s[first + j][c].coeffs()));
            let step = par::map_pointwise(grid.len(), |i| {
                let w = &weights[i];
                let p = w.prop;
                let mut un = uc[i] * p.cos + vc[i] * p.sin_over;
                let mut vn = vc[i] * p.cos - uc[i] * p.omega_sin;
                if let Some(fs) = &fs {
                    for j in 0..4 {
                        un += fs[j][i] * w.wu[st][j];
                        vn += fs[j][i] * w.wv[st][j];
                    }
                }
                (un, vn)
            });
            let (a, b) = spectra_pair(&grid, step);
            us.push(a);
            vs.push(b);
        }
        u = to6(us);
        v = to6(vs);
        out.push(state_from_spectra(
            init,
            &u,
            &v,
            init.t + (n + 1) as f64 * dt,
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardConfig {
    pub duration: f64,
    pub dt: f64,
    pub max_iterations: usize,
    pub tol: f64,
    /// Regularity index: `φ` differences in `Hˢ`, `A` differences in `H^{s−1/2}`.
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardReport {
    /// `sup_t ‖φ⁽ᵐ⁺¹⁾ − φ⁽ᵐ⁾‖_{Hˢ}` per iteration.
    pub phi_diffs: Vec<f64>,
    /// `sup_t ‖A⁽ᵐ⁺¹⁾ − A⁽ᵐ⁾‖_{H^{s−1/2}}` per iteration.
    pub a_diffs: Vec<f64>,
    /// Ratios of consecutive combined differences `φ + A`.
    pub ratios: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl PicardReport {
    pub fn combined(&self, m: usize) -> f64 {
        self.phi_diffs[m] + self.a_diffs[m]
    }
}

/// Picard iteration: `φ⁽⁰⁾, A⁽⁰⁾` solve the free wave equation; iterate
/// `m + 1` solves the linear wave equations with sources `G, H` evaluated on
/// iterate `m` at every time node, with the same initial data.
pub fn picard_iterate(
    init: &State,
    cfg: &PicardConfig,
    model: &Model,
) -> Result<(PicardReport, Trajectory), DynamicsError> {
    check_dt(cfg.dt, init.grid(), None, false)?;
    let steps = step_count(cfg.duration, cfg.dt);
    if steps < 3 {
        return Err(DynamicsError::InvalidStep {
            dt: cfg.dt,
            reason: "Picard iteration needs at least three steps".into(),
        });
    }
    let grid = init.grid().clone();
    let weights: Vec<ModeWeights> =
        par::map_pointwise(grid.len(), |i| ModeWeights::new(grid.kmag(i), cfg.dt));

    let finite = |traj: &[State]| -> Result<(), DynamicsError> {
        for s in traj {
            let m = s.max_abs();
            if !m.is_finite() || m > model.overflow_guard {
                return Err(DynamicsError::StepUnstable { t: s.t, max_abs: m });
            }
        }
        Ok(())
    };

    let mut cur = linear_solve(init, None, &weights, steps, cfg.dt);
    finite(&cur)?;
    let mut report = PicardReport {
        phi_diffs: Vec::new(),
        a_diffs: Vec::new(),
        ratios: Vec::new(),
        converged: false,
        iterations: 0,
    };
    let mut above_one = 0;
    for m in 1..=cfg.max_iterations {
        let sources: Option<Vec<[Spectrum; 6]>> = if model.nonlinear {
            Some(
                cur.iter()
                    .map(|s| source_spectra(s, &Derivatives::of(s), model).expect("nonlinear"))
                    .collect(),
            )
        } else {
            None
        };
        let next = linear_solve(init, sources.as_deref(), &weights, steps, cfg.dt);
        finite(&next)?;
        let mut dphi: f64 = 0.0;
        let mut da: f64 = 0.0;
        for (x, y) in next.iter().zip(cur.iter()) {
            dphi = dphi.max(x.phi.sub(&y.phi).sobolev_norm(cfg.s));
            da = da.max(x.a.sub(&y.a).sobolev_norm(cfg.s - 0.5));
        }
        report.phi_diffs.push(dphi);
        report.a_diffs.push(da);
        report.iterations = m;
        cur = next;
        let d = dphi + da;
        if m >= 2 {
            let prev = report.combined(m - 2);
            let r = if prev > 0.0 { d / prev } else { 0.0 };
            report.ratios.push(r);
            above_one = if r > 1.0 { above_one + 1 } else { 0 };
        }
        if d <= cfg.tol {
            report.converged = true;
            break;
        }
        if above_one >= 3 {
            return Err(DynamicsError::NotContracting {
                iteration: m,
                ratios: report.ratios.clone(),
            });
        }
    }
    let traj = Trajectory {
        dt: cfg.dt,
        stride: 1,
        states: cur,
    };
    Ok((report, traj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{epsilon_lower, metric_sign, n3_cross};
    use crate::nullforms::{q0, q_upper, Jet};
    use crate::spectral::{band_limited, spatial_derivative, Axis};
    use std::f64::consts::PI;

    fn sphere_field(g: &Arc<Grid>, seed: u64, amp: f64) -> VectorField3 {
        let th = band_limited(g, 3, seed).scaled(amp);
        let be = band_limited(g, 3, seed + 1);
        VectorField3::new(
            th.zip_map(&be, |t, b| t.sin() * b.cos()),
            th.zip_map(&be, |t, b| t.sin() * b.sin()),
            th.map(f64::cos),
        )
    }

    fn random_state(g: &Arc<Grid>, seed: u64) -> State {
        let phi = sphere_field(g, seed, 0.6);
        let vel = VectorField3::new(
            band_limited(g, 3, seed + 2).scaled(0.2),
            band_limited(g, 3, seed + 3).scaled(0.2),
            band_limited(g, 3, seed + 4).scaled(0.2),
        );
        let dphi = vel.sub(&phi.times(&phi.dot(&vel)));
        let r = |k| band_limited(g, 3, seed + k).scaled(0.1);
        let a = VectorField3::new(r(5), r(6), r(7));
        let da = VectorField3::new(r(8), r(9), r(10));
        State::new(phi, dphi, a, da, 0.0, 1.3, 1.0).unwrap()
    }

    #[test]
    fn vacuum_sources_vanish() {
        let g = Grid::new(16, 10.0).unwrap();
        let s = State::vacuum(&g, 1.0, 1.0).unwrap();
        assert_eq!(compute_g(&s).max_abs(), 0.0);
        assert_eq!(compute_h(&s).max_abs(), 0.0);
        assert_eq!(compute_h_form(&s, SourceForm::AsPrinted).max_abs(), 0.0);
    }

    #[test]
    fn constant_fields() {
        let g = Grid::new(16, 10.0).unwrap();
        let z = VectorField3::zeros(&g);
        let e1 = VectorField3::constant(&g, [1.0, 0.0, 0.0]);
        let s = State::new(e1.clone(), z.clone(), z.clone(), z.clone(), 0.0, 1.0, 1.0).unwrap();
        assert!(compute_h(&s).max_abs() < 1e-15);
        let a0 = VectorField3::constant(&g, [0.8, 0.0, 0.0]);
        let s = State::new(e1, z.clone(), a0, z, 0.0, 1.0, 1.0).unwrap();
        // −φc²|n₃×φ|² and −c²n₃×(n₃×φ) cancel; at φ₃ = 0 the potential
        // term leaves n₃/κ².
        let gv = compute_g(&s);
        assert!(gv.c[0].max_abs() < 1e-15 && gv.c[1].max_abs() < 1e-15);
        assert!(gv.c[2].values().iter().all(|&x| (x - 1.0).abs() < 1e-15));
    }

    #[test]
    fn g_static_oracle() {
        let g = Grid::new(32, 10.0).unwrap();
        let mut s = random_state(&g, 3);
        s.dphi = VectorField3::zeros(&g);
        s.a = VectorField3::zeros(&g);
        let k = s.kappa;
        let p = &s.phi;
        let d1 = p.derivative(Axis::X1);
        let d2 = p.derivative(Axis::X2);
        let grad2 = &d1.norm_sqr() + &d2.norm_sqr();
        let phi3 = &p.c[2];
        let factor = phi3.map(|x| (1.0 - x).powi(2) * (1.0 + 2.0 * x) / (k * k));
        let norm = p.norm_sqr();
        let bracket = VectorField3::new(&p.c[0] * phi3, &p.c[1] * phi3, phi3 * phi3 - &norm);
        let want = p.times(&grad2).sub(&bracket.times(&factor));
        assert!(compute_g(&s).sub(&want).max_abs() < 1e-13);
    }

    /// `G` assembled from field-level operations and the null-form module.
    fn g_oracle(s: &State) -> VectorField3 {
        let phi = Jet::vector(&s.phi, &s.dphi);
        let d = [
            s.dphi.clone(),
            s.phi.derivative(Axis::X1),
            s.phi.derivative(Axis::X2),
        ];
        let mut adv = VectorField3::zeros(s.grid());
        for mu in 0..3 {
            adv.axpy(metric_sign(mu), &d[mu].times(&s.a.c[mu]));
        }
        let aa = (0..3).fold(ScalarField::zeros(s.grid()), |acc, mu| {
            acc + (&s.a.c[mu] * &s.a.c[mu]).scaled(metric_sign(mu))
        });
        let rot = n3_cross(&s.phi);
        let w = rot.norm_sqr();
        let scal = q0(&phi, &phi) + adv.dot(&rot).scaled(2.0) + &aa * &w;
        let mut g = s.phi.times(&scal).scaled(-1.0);
        g.axpy(-2.0, &n3_cross(&adv));
        g.axpy(-1.0, &n3_cross(&rot).times(&aa));
        let p3 = &s.phi.c[2];
        let n3 = VectorField3::north(s.grid());
        let bracket = s.phi.times(p3).sub(&n3.times(&s.phi.norm_sqr()));
        let f = p3
            .map(|x| (1.0 - x).powi(2) * (1.0 + 2.0 * x))
            .scaled(1.0 / (s.kappa * s.kappa));
        g.axpy(-1.0, &bracket.times(&f));
        g
    }

    #[test]
    fn g_matches_field_level_assembly() {
        let g = Grid::new(32, 10.0).unwrap();
        for seed in [1, 20, 40] {
            let s = random_state(&g, seed);
            let e = compute_g(&s).sub(&g_oracle(&s)).max_abs();
            assert!(e < 1e-12, "{e:e}");
        }
    }

    /// `H` from the explicit ε sum with raised-index null forms.
    fn h_oracle(s: &State, form: SourceForm) -> VectorField3 {
        let grid = s.grid();
        let phi = Jet::vector(&s.phi, &s.dphi);
        // φ × n₃ = −n₃ × φ, and ∂(φ × n₃) = ∂φ × n₃.
        let neg = |v: &VectorField3| n3_cross(v).scaled(-1.0);
        let d = [
            s.dphi.clone(),
            s.phi.derivative(Axis::X1),
            s.phi.derivative(Axis::X2),
        ];
        let rot = Jet::from_vector_partials(&[neg(&d[0]), neg(&d[1]), neg(&d[2])]);
        let w = n3_cross(&s.phi).norm_sqr();
        let wd = |mu: usize| {
            d[mu].dot(&s.phi.times(&ScalarField::constant(grid, 2.0)))
                - (&d[mu].c[2] * &s.phi.c[2]).scaled(2.0)
        };
        let da = |mu: usize, nu: usize| match mu {
            0 => s.da.c[nu].clone(),
            _ => spatial_derivative(&s.a.c[nu], Axis::from_index(mu).unwrap()),
        };
        let qcoef = match form {
            SourceForm::Derived => 0.5,
            SourceForm::AsPrinted => 1.0,
        };
        let comp = |mu: usize| {
            let mut acc = ScalarField::zeros(grid);
            for nu in 0..3 {
                for rho in 0..3 {
                    let e = epsilon_lower(mu, nu, rho);
                    if e == 0.0 {
                        continue;
                    }
                    let q = q_upper(&phi, &rot, nu, rho).scaled(qcoef);
                    let sign = metric_sign(nu) * metric_sign(rho);
                    let mut t = &s.a.c[rho] * &wd(nu);
                    if form == SourceForm::Derived {
                        t = t + &da(nu, rho) * &w;
                    }
                    acc = acc + (q + t.scaled(sign)).scaled(e);
                }
            }
            acc.scaled(1.0 / s.kappa)
        };
        VectorField3::new(comp(0), comp(1), comp(2))
    }

    #[test]
    fn h_matches_epsilon_sum() {
        let g = Grid::new(32, 10.0).unwrap();
        for seed in [2, 30] {
            let s = random_state(&g, seed);
            for form in [SourceForm::Derived, SourceForm::AsPrinted] {
                let e = compute_h_form(&s, form).sub(&h_oracle(&s, form)).max_abs();
                assert!(e < 1e-12, "{form:?}: {e:e}");
            }
        }
    }

    #[test]
    fn rhs_is_deterministic() {
        let g = Grid::new(32, 10.0).unwrap();
        let s = random_state(&g, 5);
        let m = Model::default();
        assert_eq!(rhs_first_order(&s, &m), rhs_first_order(&s, &m));
    }

    fn plane_wave(g: &Arc<Grid>, m: (f64, f64), t: f64) -> (ScalarField, ScalarField) {
        let l = g.side_length();
        let (k1, k2) = (2.0 * PI * m.0 / l, 2.0 * PI * m.1 / l);
        let w = (k1 * k1 + k2 * k2).sqrt();
        let u = ScalarField::from_fn(g, |x1, x2| (k1 * x1 + k2 * x2 - w * t).cos());
        let v = ScalarField::from_fn(g, |x1, x2| w * (k1 * x1 + k2 * x2 - w * t).sin());
        (u, v)
    }

    fn wave_state(g: &Arc<Grid>, t: f64) -> State {
        let (u, v) = plane_wave(g, (3.0, 2.0), t);
        let (p, q) = plane_wave(g, (1.0, -4.0), t);
        let z = ScalarField::zeros(g);
        State {
            phi: VectorField3::new(u.clone(), p.clone(), z.clone()),
            dphi: VectorField3::new(v.clone(), q.clone(), z.clone()),
            a: VectorField3::new(p, z.clone(), u),
            da: VectorField3::new(q, z, v),
            t,
            kappa: 1.0,
            m_bound: 1.0,
        }
    }

    #[test]
    fn rk4_linear_order() {
        let g = Grid::new(32, 2.0 * PI).unwrap();
        let s0 = wave_state(&g, 0.0);
        let exact = wave_state(&g, 1.0);
        let m = Model::linear();
        let err = |dt: f64| {
            let tr = evolve(&s0, 1.0, dt, Scheme::Rk4, 1000, &m).unwrap();
            tr.last().max_abs_diff(&exact)
        };
        let (e1, e2) = (err(0.05), err(0.025));
        let ratio = e1 / e2;
        assert!((8.0..=32.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn trig_linear_is_exact_and_reversible() {
        let g = Grid::new(32, 2.0 * PI).unwrap();
        let s0 = wave_state(&g, 0.0);
        let m = Model::linear();
        let s1 = step_trig(&s0, 0.7, &m).unwrap();
        assert!(s1.max_abs_diff(&wave_state(&g, 0.7)) <= 1e-12);
        let back = step_trig(&s1, -0.7, &m).unwrap();
        assert!(back.max_abs_diff(&s0) <= 1e-11);
    }

    #[test]
    fn trig_zero_mode() {
        let g = Grid::new(16, 3.0).unwrap();
        let c = |x| ScalarField::constant(&g, x);
        let z = VectorField3::zeros(&g);
        let s = State {
            phi: VectorField3::new(c(0.3), c(-1.0), c(2.0)),
            dphi: VectorField3::new(c(0.5), c(0.25), c(-2.0)),
            a: z.clone(),
            da: z,
            t: 0.0,
            kappa: 1.0,
            m_bound: 1.0,
        };
        let s1 = step_trig(&s, 0.125, &Model::linear()).unwrap();
        for (c, (f, g)) in [(0.3, 0.5), (-1.0, 0.25), (2.0, -2.0)].iter().enumerate() {
            let want = f + g * 0.125;
            assert!(s1.phi.c[c]
                .values()
                .iter()
                .all(|&x| (x - want).abs() < 1e-15));
        }
    }

    #[test]
    fn vacuum_is_stationary() {
        let g = Grid::new(32, 10.0).unwrap();
        let s = State::vacuum(&g, 1.0, 1.0).unwrap();
        let m = Model::default();
        for scheme in [Scheme::Rk4, Scheme::Trig] {
            let tr = evolve(&s, 0.5, 0.1, scheme, 1, &m).unwrap();
            assert_eq!(tr.len(), 6);
            for st in &tr.states {
                assert!(st.max_abs_diff(&s) <= 1e-13);
            }
        }
    }

    #[test]
    fn rk4_rejects_bad_steps() {
        let g = Grid::new(32, 10.0).unwrap();
        let s = State::vacuum(&g, 1.0, 1.0).unwrap();
        let m = Model::default();
        assert!(matches!(
            step_rk4(&s, -0.1, &m),
            Err(DynamicsError::InvalidStep { .. })
        ));
        assert!(matches!(
            step_rk4(&s, 0.2, &m),
            Err(DynamicsError::InvalidStep { .. })
        ));
    }

    #[test]
    fn overflow_is_reported() {
        let g = Grid::new(16, 10.0).unwrap();
        let mut s = State::vacuum(&g, 1.0, 1.0).unwrap();
        s.dphi.c[0] = ScalarField::constant(&g, 1e13);
        let e = step_trig(&s, 0.1, &Model::linear()).unwrap_err();
        assert!(matches!(e, DynamicsError::StepUnstable { .. }));
    }

    #[test]
    fn step_count_rounds() {
        assert_eq!(step_count(1.0, 0.1), 10);
        assert_eq!(step_count(1.0, 0.3), 4);
        assert_eq!(step_count(0.25, 0.01), 25);
    }

    #[test]
    fn duhamel_weights_integrate_polynomials() {
        // Source f(s) = 1 ⇒ Σ_j wu_j = (1 − cos hω)/ω², Σ_j wv_j = sin(hω)/ω.
        let h = 0.3;
        for omega in [0.0, 0.5, 7.0] {
            let w = ModeWeights::new(omega, h);
            let p = Propagator::new(omega, h);
            for st in 0..3 {
                let su: f64 = w.wu[st].iter().sum();
                let sv: f64 = w.wv[st].iter().sum();
                assert!((su - p.one_minus_cos).abs() < 1e-15);
                assert!((sv - p.sin_over).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn picard_vacuum_converges_immediately() {
        let g = Grid::new(16, 10.0).unwrap();
        let s = State::vacuum(&g, 1.0, 1.0).unwrap();
        let cfg = PicardConfig {
            duration: 0.3,
            dt: 0.05,
            max_iterations: 10,
            tol: 1e-12,
            s: 1.5,
        };
        let (rep, traj) = picard_iterate(&s, &cfg, &Model::default()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.phi_diffs, vec![0.0]);
        assert_eq!(traj.len(), 7);
    }

    #[test]
    fn picard_with_forced_source_matches_exact_duhamel() {
        // Linear model: every iterate is the free solution.
        let g = Grid::new(32, 2.0 * PI).unwrap();
        let s0 = wave_state(&g, 0.0);
        let cfg = PicardConfig {
            duration: 1.0,
            dt: 0.1,
            max_iterations: 3,
            tol: 1e-12,
            s: 1.0,
        };
        let (rep, traj) = picard_iterate(&s0, &cfg, &Model::linear()).unwrap();
        assert!(rep.converged);
        assert!(traj.last().max_abs_diff(&wave_state(&g, 1.0)) < 1e-12);
    }
}
