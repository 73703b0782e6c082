//! Periodic grid, Fourier transform pair and Fourier-multiplier operators.
//!
//! The torus `[0, L)²` is sampled on an `N × N` grid, row-major with the
//! `x₁` index fastest: `values[j * N + i]` is the sample at
//! `(x₁, x₂) = (i·dx, j·dx)`. Spectra use the same layout with FFT ordering
//! of the integer wavenumbers.
//!
//! The forward transform is scaled as `û = (L/N²)·FFT(u)`, so the discrete
//! Parseval identity holds with the physical measure:
//!
//! ```text
//! Σₓ |u(x)|² dx² = Σₖ |û(k)|²
//! ```
//!
//! Odd multipliers (derivatives, Riesz transforms) zero the Nyquist row and
//! column so that real fields stay real. Negative powers of `|k|` map the
//! zero mode to zero.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::par;

/// Rows handed to one FFT task.
const FFT_ROWS_PER_TASK: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("n_points must be a power of two >= 8, got {0}")]
    BadPointCount(usize),
    #[error("side_length must be positive and finite, got {0}")]
    BadSideLength(f64),
}

/// Spatial axis of the torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X1,
    X2,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::X1, Axis::X2];

    /// Maps the spatial index `1` or `2` to an axis.
    pub fn from_index(i: usize) -> Option<Axis> {
        match i {
            1 => Some(Axis::X1),
            2 => Some(Axis::X2),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Axis::X1 => 1,
            Axis::X2 => 2,
        }
    }
}

/// Periodic `N × N` grid on a torus of side `L` with cached FFT plans and
/// wavenumber tables.
pub struct Grid {
    n: usize,
    side: f64,
    dx: f64,
    /// Wavenumber per FFT index along one axis.
    k: Vec<f64>,
    /// Signed integer mode per FFT index.
    modes: Vec<i64>,
    /// `|k|` per flat spectral index.
    kmag: Vec<f64>,
    /// 2/3-rule mask per flat spectral index.
    keep: Vec<bool>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.n)
            .field("side", &self.side)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.side.to_bits() == other.side.to_bits()
    }
}

impl Grid {
    pub fn new(n: usize, side: f64) -> Result<Arc<Grid>, GridError> {
        if n < 8 || !n.is_power_of_two() {
            return Err(GridError::BadPointCount(n));
        }
        if !(side.is_finite() && side > 0.0) {
            return Err(GridError::BadSideLength(side));
        }
        let modes: Vec<i64> = (0..n)
            .map(|i| {
                let i = i as i64;
                if i < (n as i64) / 2 {
                    i
                } else {
                    i - n as i64
                }
            })
            .collect();
        let k: Vec<f64> = modes
            .iter()
            .map(|&m| 2.0 * std::f64::consts::PI * m as f64 / side)
            .collect();
        let cut = (n / 3) as i64;
        let mut kmag = Vec::with_capacity(n * n);
        let mut keep = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                kmag.push(k[i].hypot(k[j]));
                keep.push(modes[i].abs() <= cut && modes[j].abs() <= cut);
            }
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        Ok(Arc::new(Grid {
            n,
            side,
            dx: side / n as f64,
            k,
            modes,
            kmag,
            keep,
            fwd,
            inv,
        }))
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn side_length(&self) -> f64 {
        self.side
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Number of samples, `N²`.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Physical cell area `dx²` used by every quadrature.
    pub fn cell_area(&self) -> f64 {
        self.dx * self.dx
    }

    /// Physical coordinates of the flat index `idx`.
    pub fn coords(&self, idx: usize) -> (f64, f64) {
        (
            (idx % self.n) as f64 * self.dx,
            (idx / self.n) as f64 * self.dx,
        )
    }

    /// Wavenumber vector `(k₁, k₂)` of the flat spectral index `idx`.
    pub fn wavevector(&self, idx: usize) -> (f64, f64) {
        (self.k[idx % self.n], self.k[idx / self.n])
    }

    /// Signed integer modes `(m₁, m₂)` of the flat spectral index `idx`.
    pub fn modes(&self, idx: usize) -> (i64, i64) {
        (self.modes[idx % self.n], self.modes[idx / self.n])
    }

    pub fn kmag(&self, idx: usize) -> f64 {
        self.kmag[idx]
    }

    /// True when the spectral index sits on the Nyquist row or column.
    pub fn is_nyquist(&self, idx: usize) -> bool {
        let h = -(self.n as i64) / 2;
        let (m1, m2) = self.modes(idx);
        m1 == h || m2 == h
    }

    /// Whether the 2/3 rule keeps this spectral index.
    pub fn dealias_keeps(&self, idx: usize) -> bool {
        self.keep[idx]
    }

    /// Component of `k` along `axis` at flat spectral index `idx`.
    pub fn k_along(&self, axis: Axis, idx: usize) -> f64 {
        match axis {
            Axis::X1 => self.k[idx % self.n],
            Axis::X2 => self.k[idx / self.n],
        }
    }

    fn fft2(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        par::for_each_chunk(buf, n * FFT_ROWS_PER_TASK, |_, rows| plan.process(rows));
        let mut t = transpose(buf, n);
        par::for_each_chunk(&mut t, n * FFT_ROWS_PER_TASK, |_, rows| plan.process(rows));
        let back = transpose(&t, n);
        buf.copy_from_slice(&back);
    }

    /// Forward transform of real samples.
    pub fn forward(self: &Arc<Self>, values: &[f64]) -> Spectrum {
        assert_eq!(values.len(), self.len(), "field does not match grid");
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft2(&mut buf, &self.fwd);
        let scale = self.side / (self.n * self.n) as f64;
        par::update_indexed(&mut buf, |_, c| *c *= scale);
        Spectrum {
            grid: Arc::clone(self),
            coeffs: buf,
        }
    }

    /// Inverse transform; the imaginary part is discarded.
    fn inverse_real(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut buf = coeffs.to_vec();
        self.fft2(&mut buf, &self.inv);
        let scale = 1.0 / self.side;
        buf.iter().map(|c| c.re * scale).collect()
    }
}

fn transpose(src: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    par::for_each_chunk(&mut out, n, |j, row| {
        for (i, o) in row.iter_mut().enumerate() {
            *o = src[i * n + j];
        }
    });
    out
}

/// Real-valued samples on a grid.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for ScalarField {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.values == other.values
    }
}

impl ScalarField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Self {
        ScalarField {
            grid: Arc::clone(grid),
            values: vec![c; grid.len()],
        }
    }

    /// Wraps raw samples; panics if the length does not match the grid.
    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len(), "field does not match grid");
        ScalarField {
            grid: Arc::clone(grid),
            values,
        }
    }

    /// Samples `f(x₁, x₂)` at every grid point.
    pub fn from_fn<F>(grid: &Arc<Grid>, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Sync + Send,
    {
        let values = par::fill_indexed(grid.len(), |idx| {
            let (x1, x2) = grid.coords(idx);
            f(x1, x2)
        });
        ScalarField {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Pointwise map into a new field.
    pub fn map<F>(&self, f: F) -> ScalarField
    where
        F: Fn(f64) -> f64 + Sync + Send,
    {
        let v = &self.values;
        ScalarField {
            grid: Arc::clone(&self.grid),
            values: par::fill_indexed(v.len(), |i| f(v[i])),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map<F>(&self, other: &ScalarField, f: F) -> ScalarField
    where
        F: Fn(f64, f64) -> f64 + Sync + Send,
    {
        debug_assert!(*self.grid == *other.grid);
        let (a, b) = (&self.values, &other.values);
        ScalarField {
            grid: Arc::clone(&self.grid),
            values: par::fill_indexed(a.len(), |i| f(a[i], b[i])),
        }
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: f64, other: &ScalarField) {
        let b = &other.values;
        par::update_indexed(&mut self.values, |i, x| *x += c * b[i]);
    }

    pub fn scaled(&self, c: f64) -> ScalarField {
        self.map(|x| c * x)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }

    /// `∫ u dx` by the grid quadrature.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    /// Discrete `L²` norm `(Σ u² dx²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|x| x * x).sum::<f64>() * self.grid.cell_area()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    pub fn spectrum(&self) -> Spectrum {
        self.grid.forward(&self.values)
    }
}

macro_rules! field_binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait<&ScalarField> for &ScalarField {
            type Output = ScalarField;
            fn $method(self, rhs: &ScalarField) -> ScalarField {
                self.zip_map(rhs, |a, b| a $op b)
            }
        }
        impl $trait<ScalarField> for ScalarField {
            type Output = ScalarField;
            fn $method(self, rhs: ScalarField) -> ScalarField {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&ScalarField> for ScalarField {
            type Output = ScalarField;
            fn $method(self, rhs: &ScalarField) -> ScalarField {
                (&self).$method(rhs)
            }
        }
        impl $trait<ScalarField> for &ScalarField {
            type Output = ScalarField;
            fn $method(self, rhs: ScalarField) -> ScalarField {
                self.$method(&rhs)
            }
        }
    };
}

field_binop!(Add, add, +);
field_binop!(Sub, sub, -);
field_binop!(Mul, mul, *);

impl Mul<&ScalarField> for f64 {
    type Output = ScalarField;
    fn mul(self, rhs: &ScalarField) -> ScalarField {
        rhs.scaled(self)
    }
}

impl Mul<ScalarField> for f64 {
    type Output = ScalarField;
    fn mul(self, rhs: ScalarField) -> ScalarField {
        rhs.scaled(self)
    }
}

impl Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self.map(|x| -x)
    }
}

impl Neg for ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        -&self
    }
}

/// Fourier coefficients of a real field, Parseval-normalized.
#[derive(Clone, Debug)]
pub struct Spectrum {
    grid: Arc<Grid>,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Spectrum {
            grid: Arc::clone(grid),
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Multiplies by a real multiplier `m(idx)`.
    pub fn map_real<F>(&self, m: F) -> Spectrum
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        let mut out = self.clone();
        par::update_indexed(&mut out.coeffs, |i, c| *c *= m(i));
        out
    }

    /// Multiplies by `i·m(idx)` for an odd real symbol `m`, zeroing Nyquist modes.
    pub fn map_odd<F>(&self, m: F) -> Spectrum
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        let g = &self.grid;
        let mut out = self.clone();
        par::update_indexed(&mut out.coeffs, |i, c| {
            *c = if g.is_nyquist(i) {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, m(i)) * *c
            };
        });
        out
    }

    pub fn derivative(&self, axis: Axis) -> Spectrum {
        let g = Arc::clone(&self.grid);
        self.map_odd(move |i| g.k_along(axis, i))
    }

    /// Applies the 2/3 truncation.
    pub fn dealiased(&self) -> Spectrum {
        let g = Arc::clone(&self.grid);
        self.map_real(move |i| if g.dealias_keeps(i) { 1.0 } else { 0.0 })
    }

    /// `self + c·other`
    pub fn axpy(&mut self, c: f64, other: &Spectrum) {
        let b = &other.coeffs;
        par::update_indexed(&mut self.coeffs, |i, x| *x += c * b[i]);
    }

    pub fn to_field(&self) -> ScalarField {
        ScalarField {
            grid: Arc::clone(&self.grid),
            values: self.grid.inverse_real(&self.coeffs),
        }
    }

    /// `(Σ w(k)² |û|²)^{1/2}` in fixed index order.
    pub fn weighted_norm<F>(&self, w: F) -> f64
    where
        F: Fn(usize) -> f64,
    {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let wi = w(i);
                wi * wi * c.norm_sqr()
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Fourier multipliers built from `|k|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Multiplier {
    /// `(1 + |k|)^α`
    Lambda(f64),
    /// `|k|^α`; zero mode maps to 0 for every `α ≠ 0`.
    D(f64),
    /// `|k|⁻¹` with the zero mode projected out.
    DInv,
    /// `−|k|²`
    Laplacian,
}

impl Multiplier {
    /// Symbol value at wavenumber magnitude `kmag`.
    pub fn symbol(self, kmag: f64) -> f64 {
        match self {
            Multiplier::Lambda(a) => (1.0 + kmag).powf(a),
            Multiplier::D(a) => power_of_kmag(kmag, a),
            Multiplier::DInv => power_of_kmag(kmag, -1.0),
            Multiplier::Laplacian => -kmag * kmag,
        }
    }
}

/// `|k|^α` with `0^α = 0` for `α ≠ 0` and `0⁰ = 1`.
pub fn power_of_kmag(kmag: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        1.0
    } else if kmag == 0.0 {
        0.0
    } else {
        kmag.powf(alpha)
    }
}

/// `∂_axis u` via the multiplier `i·k_axis`.
pub fn spatial_derivative(u: &ScalarField, axis: Axis) -> ScalarField {
    u.spectrum().derivative(axis).to_field()
}

pub fn multiplier_op(kind: Multiplier, u: &ScalarField) -> ScalarField {
    let g = Arc::clone(u.grid());
    u.spectrum()
        .map_real(move |i| kind.symbol(g.kmag(i)))
        .to_field()
}

/// Riesz transform `R_i = D⁻¹∂_i`, symbol `i·k_i/|k|`, zero mode to 0.
pub fn riesz(u: &ScalarField, axis: Axis) -> ScalarField {
    riesz_spectrum(&u.spectrum(), axis).to_field()
}

pub fn riesz_spectrum(s: &Spectrum, axis: Axis) -> Spectrum {
    let g = Arc::clone(s.grid());
    s.map_odd(move |i| {
        let k = g.kmag(i);
        if k == 0.0 {
            0.0
        } else {
            g.k_along(axis, i) / k
        }
    })
}

/// Discrete `Hˢ` norm with weight `⟨k⟩ = 1 + |k|`.
pub fn sobolev_norm(u: &ScalarField, s: f64) -> f64 {
    let spec = u.spectrum();
    let g = u.grid();
    spec.weighted_norm(|i| (1.0 + g.kmag(i)).powf(s))
}

/// Discrete homogeneous `Ḣˢ` norm with weight `|k|ˢ`.
pub fn homogeneous_norm(u: &ScalarField, s: f64) -> f64 {
    let spec = u.spectrum();
    let g = u.grid();
    spec.weighted_norm(|i| power_of_kmag(g.kmag(i), s))
}

/// 2/3-rule truncation of a real field.
pub fn dealias(u: &ScalarField) -> ScalarField {
    u.spectrum().dealiased().to_field()
}

/// Deterministic random real field: a sum of cosines over all modes with
/// `|m₁|, |m₂| <= band`, amplitudes in `[-1, 1)` and random phases.
pub fn random_field(grid: &Arc<Grid>, band: i64, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = grid.side_length();
    let mut terms = Vec::new();
    for m1 in -band..=band {
        for m2 in -band..=band {
            terms.push((
                m1,
                m2,
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.0..2.0 * PI),
            ));
        }
    }
    ScalarField::from_fn(grid, |x1, x2| {
        terms
            .iter()
            .map(|&(m1, m2, a, p)| a * (2.0 * PI * (m1 as f64 * x1 + m2 as f64 * x2) / l + p).cos())
            .sum()
    })
}

#[cfg(test)]
pub(crate) use random_field as band_limited;
