//! Initial data compatible with the sphere constraint, tangency, the
//! curvature constraint, the Lorenz gauge and the curvature equations.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fields::{n3_cross, FieldError, State, VectorField3};
use crate::spectral::{random_field, spatial_derivative, Axis, Grid, ScalarField, Spectrum};

/// Smallest admissible `|ψ₀|` before normalization.
pub const EPS_MIN: f64 = 1e-6;
/// Threshold on `mean|n₃×φ₀|²` below which the `a₀` constant is undetermined.
pub const GAUGE_DEGENERATE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InitError {
    #[error("raw matter profile too small to normalize: min |psi0| = {0:e}")]
    DegenerateProfile(f64),
    #[error("gauge constant undetermined: mean |n3 x phi0|^2 = {mean_w:e}, required curl mean = {curl_mean:e}")]
    GaugeDegenerate { mean_w: f64, curl_mean: f64 },
    #[error("unknown preset '{0}' (expected vacuum, bump, two_bump or plane_perturb)")]
    UnknownPreset(String),
    #[error("invalid preset parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Raw profiles and gauge seeds before projection onto the constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct FreeData {
    pub psi0: VectorField3,
    pub psi1: VectorField3,
    /// Curl-free gauge seed: `∂ᵢ(acf_seed)` is added to `(a₁, a₂)`.
    pub acf_seed: Option<ScalarField>,
    /// Fluctuation of `a₀`; its mean is discarded.
    pub a0_seed: Option<ScalarField>,
    pub rng_seed: u64,
}

impl FreeData {
    pub fn grid(&self) -> &Arc<Grid> {
        self.psi0.grid()
    }
}

/// `φ₀ = ψ₀/|ψ₀|`, `φ₁ = ψ₁ − ⟨ψ₁, φ₀⟩φ₀`.
pub fn make_matter(free: &FreeData) -> Result<(VectorField3, VectorField3), InitError> {
    let norm = free.psi0.norm_sqr().map(f64::sqrt);
    let min = norm.values().iter().copied().fold(f64::INFINITY, f64::min);
    if !(min >= EPS_MIN) {
        return Err(InitError::DegenerateProfile(min));
    }
    let inv = norm.map(|x| 1.0 / x);
    let phi0 = free.psi0.times(&inv);
    let phi1 = free.psi1.sub(&phi0.times(&free.psi1.dot(&phi0)));
    Ok((phi0, phi1))
}

fn inverse_laplacian(s: &Spectrum) -> Spectrum {
    let g = s.grid().clone();
    s.map_real(move |i| {
        let k = g.kmag(i);
        if k == 0.0 {
            0.0
        } else {
            -1.0 / (k * k)
        }
    })
}

/// Gauge potential and its time derivative at `t = 0`.
///
/// `a₀ = c + fluctuation`, with `c` making the required curl mean-free;
/// `(a₁, a₂)` is the divergence-free field with that curl plus the
/// curl-free seed; `a'₀` from the Lorenz condition and `a'₁, a'₂` from the
/// curvature equations for `F₀₁, F₀₂`.
pub fn make_gauge(
    phi0: &VectorField3,
    phi1: &VectorField3,
    free: &FreeData,
    kappa: f64,
) -> Result<(VectorField3, VectorField3), InitError> {
    let grid = phi0.grid().clone();
    let rot = n3_cross(phi0);
    let w0 = rot.norm_sqr();
    let cur = rot.dot(phi1);
    let fluct = match &free.a0_seed {
        Some(s) => {
            let m = s.mean();
            s.map(|x| x - m)
        }
        None => ScalarField::zeros(&grid),
    };
    let mean_w = w0.mean();
    let rest = (&cur + &(&fluct * &w0)).mean();
    let c = if mean_w < GAUGE_DEGENERATE {
        if rest.abs() > GAUGE_DEGENERATE {
            return Err(InitError::GaugeDegenerate {
                mean_w,
                curl_mean: rest,
            });
        }
        0.0
    } else {
        -rest / mean_w
    };
    let a0 = fluct.map(|x| x + c);
    let curl = (&cur + &(&a0 * &w0)).scaled(-1.0 / kappa);

    let psi = inverse_laplacian(&curl.spectrum());
    let mut a1 = psi.derivative(Axis::X2).to_field().scaled(-1.0);
    let mut a2 = psi.derivative(Axis::X1).to_field();
    if let Some(seed) = &free.acf_seed {
        let s = seed.spectrum();
        a1 = &a1 + &s.derivative(Axis::X1).to_field();
        a2 = &a2 + &s.derivative(Axis::X2).to_field();
    }

    let da0 = spatial_derivative(&a1, Axis::X1) + spatial_derivative(&a2, Axis::X2);
    let d1 = phi0.derivative(Axis::X1);
    let d2 = phi0.derivative(Axis::X2);
    let j1 = rot.dot(&d1) + &a1 * &w0;
    let j2 = rot.dot(&d2) + &a2 * &w0;
    let da1 = spatial_derivative(&a0, Axis::X1) + j2.scaled(1.0 / kappa);
    let da2 = spatial_derivative(&a0, Axis::X2) - j1.scaled(1.0 / kappa);
    Ok((
        VectorField3::new(a0, a1, a2),
        VectorField3::new(da0, da1, da2),
    ))
}

/// Full compatible state at `t = 0`.
pub fn make_state(free: &FreeData, kappa: f64, m_bound: f64) -> Result<State, InitError> {
    crate::fields::check_coupling(kappa, m_bound)?;
    let (phi0, phi1) = make_matter(free)?;
    let (a, da) = make_gauge(&phi0, &phi1, free, kappa)?;
    Ok(State::new(phi0, phi1, a, da, 0.0, kappa, m_bound)?)
}

/// Preset parameters; `width` and `center` default relative to the box.
#[derive(Clone, Debug, PartialEq)]
pub struct PresetParams {
    pub amplitude: f64,
    pub width: Option<f64>,
    pub center: Option<(f64, f64)>,
    /// Scale of the rotational velocity `ψ₁ ∝ n₃×ψ₀`.
    pub spin: f64,
    pub rng_seed: u64,
}

impl Default for PresetParams {
    fn default() -> Self {
        PresetParams {
            amplitude: 0.1,
            width: None,
            center: None,
            spin: 0.5,
            rng_seed: 0,
        }
    }
}

pub const PRESETS: [&str; 4] = ["vacuum", "bump", "two_bump", "plane_perturb"];

/// Default width `σ = 2` for the reference box `L = 20`, i.e. `L/10`.
fn width_of(grid: &Grid, p: &PresetParams) -> Result<f64, InitError> {
    let l = grid.side_length();
    let sigma = p.width.unwrap_or(0.1 * l);
    if !(sigma > 0.05 * l && sigma < 0.3 * l) {
        return Err(InitError::InvalidParameter(format!(
            "width {sigma} outside (0.05 L, 0.3 L) for L = {l}"
        )));
    }
    Ok(sigma)
}

fn check_amplitude(p: &PresetParams) -> Result<(), InitError> {
    if !(0.0..=0.5).contains(&p.amplitude) {
        return Err(InitError::InvalidParameter(format!(
            "amplitude {} outside [0, 0.5]",
            p.amplitude
        )));
    }
    if !p.spin.is_finite() {
        return Err(InitError::InvalidParameter("spin must be finite".into()));
    }
    Ok(())
}

/// Gaussian `exp(−|x−c|²/σ²)` summed over the nine nearest periodic images.
pub fn periodic_gaussian(l: f64, c: (f64, f64), sigma: f64, x: (f64, f64)) -> f64 {
    let mut acc = 0.0;
    for n1 in -1..=1 {
        for n2 in -1..=1 {
            let d1 = x.0 - c.0 - n1 as f64 * l;
            let d2 = x.1 - c.1 - n2 as f64 * l;
            acc += (-(d1 * d1 + d2 * d2) / (sigma * sigma)).exp();
        }
    }
    acc
}

fn min_image(d: f64, l: f64) -> f64 {
    d - l * (d / l).round()
}

/// Azimuth of the tilt: a diagonal linear twist across the bump.
fn twist(l: f64, c: (f64, f64), sigma: f64, x: (f64, f64)) -> f64 {
    (min_image(x.0 - c.0, l) + min_image(x.1 - c.1, l)) / sigma
}

fn rotational_velocity(psi0: &VectorField3, weight: &ScalarField) -> VectorField3 {
    n3_cross(psi0).times(weight)
}

fn vacuum_data(grid: &Arc<Grid>, seed: u64) -> FreeData {
    FreeData {
        psi0: VectorField3::north(grid),
        psi1: VectorField3::zeros(grid),
        acf_seed: None,
        a0_seed: None,
        rng_seed: seed,
    }
}

fn bump(grid: &Arc<Grid>, p: &PresetParams) -> Result<FreeData, InitError> {
    check_amplitude(p)?;
    let sigma = width_of(grid, p)?;
    let l = grid.side_length();
    let c = p.center.unwrap_or((0.5 * l, 0.5 * l));
    let theta = ScalarField::from_fn(grid, |x1, x2| {
        p.amplitude * periodic_gaussian(l, c, sigma, (x1, x2))
    });
    let beta = ScalarField::from_fn(grid, |x1, x2| twist(l, c, sigma, (x1, x2)));
    let psi0 = VectorField3::new(
        theta.zip_map(&beta, |t, b| t.sin() * b.cos()),
        theta.zip_map(&beta, |t, b| t.sin() * b.sin()),
        theta.map(f64::cos),
    );
    let narrow = sigma / 2f64.sqrt();
    let weight = ScalarField::from_fn(grid, |x1, x2| {
        p.spin * periodic_gaussian(l, c, narrow, (x1, x2))
    });
    let psi1 = rotational_velocity(&psi0, &weight);
    Ok(FreeData {
        psi0,
        psi1,
        acf_seed: None,
        a0_seed: None,
        rng_seed: p.rng_seed,
    })
}

fn two_bump(grid: &Arc<Grid>, p: &PresetParams) -> Result<FreeData, InitError> {
    check_amplitude(p)?;
    let sigma = width_of(grid, p)?;
    let l = grid.side_length();
    let centers = [(0.3 * l, 0.5 * l), (0.7 * l, 0.5 * l)];
    let tilt = |x1: f64, x2: f64, comp: usize| {
        centers
            .iter()
            .map(|&c| {
                let b = twist(l, c, sigma, (x1, x2));
                let g = periodic_gaussian(l, c, sigma, (x1, x2));
                g * if comp == 0 { b.cos() } else { b.sin() }
            })
            .sum::<f64>()
            * p.amplitude
    };
    let psi0 = VectorField3::new(
        ScalarField::from_fn(grid, |x1, x2| tilt(x1, x2, 0)),
        ScalarField::from_fn(grid, |x1, x2| tilt(x1, x2, 1)),
        ScalarField::constant(grid, 1.0),
    );
    let narrow = sigma / 2f64.sqrt();
    // Counter-rotating pair.
    let weight = ScalarField::from_fn(grid, |x1, x2| {
        p.spin
            * (periodic_gaussian(l, centers[0], narrow, (x1, x2))
                - periodic_gaussian(l, centers[1], narrow, (x1, x2)))
    });
    let psi1 = rotational_velocity(&psi0, &weight);
    Ok(FreeData {
        psi0,
        psi1,
        acf_seed: None,
        a0_seed: None,
        rng_seed: p.rng_seed,
    })
}

/// Random Fourier series with modes `|m₁|, |m₂| ≤ band`, unit-size coefficients.
fn random_low_modes(grid: &Arc<Grid>, rng: &mut ChaCha8Rng, band: i64) -> ScalarField {
    let l = grid.side_length();
    let mut terms = Vec::new();
    for m1 in -band..=band {
        for m2 in -band..=band {
            let a: f64 = rng.gen_range(-1.0..1.0);
            let ph: f64 = rng.gen_range(0.0..2.0 * PI);
            terms.push((m1 as f64, m2 as f64, a, ph));
        }
    }
    let scale = 1.0 / terms.len() as f64;
    ScalarField::from_fn(grid, |x1, x2| {
        terms
            .iter()
            .map(|&(m1, m2, a, ph)| a * (2.0 * PI * (m1 * x1 + m2 * x2) / l + ph).cos())
            .sum::<f64>()
            * scale
    })
}

fn plane_perturb(grid: &Arc<Grid>, p: &PresetParams) -> Result<FreeData, InitError> {
    check_amplitude(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.rng_seed);
    let mut low = || random_low_modes(grid, &mut rng, 2);
    let (u1, u2, v1, v2) = (low(), low(), low(), low());
    let psi0 = VectorField3::new(
        u1.scaled(p.amplitude),
        u2.scaled(p.amplitude),
        ScalarField::constant(grid, 1.0),
    );
    let psi1 = VectorField3::new(
        v1.scaled(p.amplitude * p.spin),
        v2.scaled(p.amplitude * p.spin),
        ScalarField::zeros(grid),
    );
    Ok(FreeData {
        psi0,
        psi1,
        acf_seed: None,
        a0_seed: None,
        rng_seed: p.rng_seed,
    })
}

/// Builds raw data for a named preset.
pub fn preset(name: &str, grid: &Arc<Grid>, p: &PresetParams) -> Result<FreeData, InitError> {
    match name {
        "vacuum" => Ok(vacuum_data(grid, p.rng_seed)),
        "bump" => bump(grid, p),
        "two_bump" => two_bump(grid, p),
        "plane_perturb" => plane_perturb(grid, p),
        other => Err(InitError::UnknownPreset(other.to_string())),
    }
}

/// Random unit-vector field with polar angle of size `amp`.
pub fn random_sphere_field(g: &Arc<Grid>, seed: u64, amp: f64) -> VectorField3 {
    let th = random_field(g, 3, seed).scaled(amp);
    let be = random_field(g, 3, seed + 1);
    VectorField3::new(
        th.zip_map(&be, |t, b| t.sin() * b.cos()),
        th.zip_map(&be, |t, b| t.sin() * b.sin()),
        th.map(f64::cos),
    )
}

/// Random Lorenz-gauge state: `A₀` static and mean-free, `(A₁, A₂)`
/// divergence-free and mean-free; `φ` on the sphere with tangent velocity.
pub fn lorenz_gauge_sample(g: &Arc<Grid>, seed: u64) -> State {
    let phi = random_sphere_field(g, seed, 0.8);
    let vel = VectorField3::new(
        random_field(g, 3, seed + 2),
        random_field(g, 3, seed + 3),
        random_field(g, 3, seed + 4),
    );
    let dphi = vel.sub(&phi.times(&phi.dot(&vel)));
    let mean_free = |u: ScalarField| {
        let m = u.mean();
        u.map(|x| x - m)
    };
    let a0 = mean_free(random_field(g, 3, seed + 5));
    let stream = random_field(g, 3, seed + 6);
    let a1 = -spatial_derivative(&stream, Axis::X2);
    let a2 = spatial_derivative(&stream, Axis::X1);
    let a = VectorField3::new(a0, a1, a2);
    let da = VectorField3::new(
        ScalarField::zeros(g),
        random_field(g, 3, seed + 7),
        random_field(g, 3, seed + 8),
    );
    State::new(phi, dphi, a, da, 0.0, 1.0, 1.0).expect("sample lies on the sphere")
}
