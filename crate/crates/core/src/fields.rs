//! Sigma-model and gauge field data, covariant derivatives, curvature and
//! Minkowski index conventions.
//!
//! Indices follow the `(t, x₁, x₂)` ordering `μ ∈ {0, 1, 2}` with metric
//! `diag(1, −1, −1)`. Every raised index goes through [`metric_sign`].

use std::sync::Arc;

use thiserror::Error;

use crate::spectral::{Axis, Grid, ScalarField, Spectrum};

/// Default pointwise tolerance for `||φ|² − 1|`.
pub const DEFAULT_SPHERE_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("kappa = {kappa} violates 0 < 1/(2 kappa^2) <= m = {m_bound}")]
    InvalidCoupling { kappa: f64, m_bound: f64 },
    #[error("matter field leaves the unit sphere: max ||phi|^2 - 1| = {0:e}")]
    OffSphere(f64),
    #[error("velocity not tangent: max |<phi, dphi>| = {0:e}")]
    NotTangent(f64),
    #[error("field component contains non-finite values")]
    NonFinite,
    #[error("field components live on different grids")]
    GridMismatch,
}

/// `+1` for `μ = 0`, `−1` for spatial `μ`.
pub fn metric_sign(mu: usize) -> f64 {
    match mu {
        0 => 1.0,
        1 | 2 => -1.0,
        _ => panic!("spacetime index out of range: {mu}"),
    }
}

/// Lowered Levi-Civita symbol `ε_{μνρ}` with `ε^{012} = 1`; lowering
/// through `diag(1, −1, −1)` leaves `ε_{012} = +1`.
pub fn epsilon_lower(mu: usize, nu: usize, rho: usize) -> f64 {
    let raised = match (mu, nu, rho) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    };
    raised * metric_sign(mu) * metric_sign(nu) * metric_sign(rho)
}

/// Three real components on a common grid: a sigma-model vector or a
/// spacetime triple.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField3 {
    pub c: [ScalarField; 3],
}

/// Matter field `φ = (φ₁, φ₂, φ₃)`.
pub type MatterField = VectorField3;
/// Gauge potential `(A₀, A₁, A₂)`.
pub type GaugePotential = VectorField3;

impl VectorField3 {
    pub fn new(c0: ScalarField, c1: ScalarField, c2: ScalarField) -> Self {
        VectorField3 { c: [c0, c1, c2] }
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        let z = ScalarField::zeros(grid);
        VectorField3::new(z.clone(), z.clone(), z)
    }

    /// Constant vector `(v₀, v₁, v₂)` everywhere.
    pub fn constant(grid: &Arc<Grid>, v: [f64; 3]) -> Self {
        VectorField3::new(
            ScalarField::constant(grid, v[0]),
            ScalarField::constant(grid, v[1]),
            ScalarField::constant(grid, v[2]),
        )
    }

    /// The north pole `n₃ = (0, 0, 1)` everywhere.
    pub fn north(grid: &Arc<Grid>) -> Self {
        Self::constant(grid, [0.0, 0.0, 1.0])
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.c[0].grid()
    }

    pub fn map<F>(&self, f: F) -> Self
    where
        F: Fn(&ScalarField) -> ScalarField,
    {
        VectorField3::new(f(&self.c[0]), f(&self.c[1]), f(&self.c[2]))
    }

    pub fn zip_with<F>(&self, other: &Self, f: F) -> Self
    where
        F: Fn(&ScalarField, &ScalarField) -> ScalarField,
    {
        VectorField3::new(
            f(&self.c[0], &other.c[0]),
            f(&self.c[1], &other.c[1]),
            f(&self.c[2], &other.c[2]),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|a| a.scaled(s))
    }

    /// Pointwise product with a scalar field.
    pub fn times(&self, s: &ScalarField) -> Self {
        self.map(|a| a * s)
    }

    pub fn axpy(&mut self, s: f64, other: &Self) {
        for (a, b) in self.c.iter_mut().zip(other.c.iter()) {
            a.axpy(s, b);
        }
    }

    /// Euclidean target inner product, pointwise.
    pub fn dot(&self, other: &Self) -> ScalarField {
        let (a, b) = (&self.c, &other.c);
        let g = a[0].grid();
        let (a0, a1, a2) = (a[0].values(), a[1].values(), a[2].values());
        let (b0, b1, b2) = (b[0].values(), b[1].values(), b[2].values());
        ScalarField::from_values(
            g,
            crate::par::fill_indexed(g.len(), |i| a0[i] * b0[i] + a1[i] * b1[i] + a2[i] * b2[i]),
        )
    }

    pub fn norm_sqr(&self) -> ScalarField {
        self.dot(self)
    }

    /// Pointwise cross product `self × other`.
    pub fn cross(&self, other: &Self) -> Self {
        let (a, b) = (&self.c, &other.c);
        VectorField3::new(
            &a[1] * &b[2] - &a[2] * &b[1],
            &a[2] * &b[0] - &a[0] * &b[2],
            &a[0] * &b[1] - &a[1] * &b[0],
        )
    }

    /// Pointwise `n₃ × v = (−v₂, v₁, 0)`.
    pub fn n3_cross(&self) -> Self {
        n3_cross(self)
    }

    pub fn spectra(&self) -> [Spectrum; 3] {
        [
            self.c[0].spectrum(),
            self.c[1].spectrum(),
            self.c[2].spectrum(),
        ]
    }

    pub fn derivative(&self, axis: Axis) -> Self {
        self.map(|u| crate::spectral::spatial_derivative(u, axis))
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().map(ScalarField::max_abs).fold(0.0, f64::max)
    }

    /// `(Σ_c ‖v_c‖²_{Hˢ})^{1/2}`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        self.c
            .iter()
            .map(|u| crate::spectral::sobolev_norm(u, s).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(ScalarField::is_finite)
    }
}

/// `n₃ × v` with `n₃ = (0, 0, 1)`: returns `(−v₂, v₁, 0)`.
pub fn n3_cross(v: &VectorField3) -> VectorField3 {
    VectorField3::new(-&v.c[1], v.c[0].clone(), ScalarField::zeros(v.grid()))
}

/// Full Cauchy slice of the gauged sigma model.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub phi: MatterField,
    pub dphi: MatterField,
    pub a: GaugePotential,
    pub da: GaugePotential,
    pub t: f64,
    pub kappa: f64,
    pub m_bound: f64,
}

impl State {
    /// Builds a state after checking the coupling bound, grids and finiteness.
    pub fn new(
        phi: MatterField,
        dphi: MatterField,
        a: GaugePotential,
        da: GaugePotential,
        t: f64,
        kappa: f64,
        m_bound: f64,
    ) -> Result<State, FieldError> {
        check_coupling(kappa, m_bound)?;
        let g = phi.grid();
        for v in [&phi, &dphi, &a, &da] {
            if v.c.iter().any(|c| **c.grid() != **g) {
                return Err(FieldError::GridMismatch);
            }
            if !v.is_finite() {
                return Err(FieldError::NonFinite);
            }
        }
        Ok(State {
            phi,
            dphi,
            a,
            da,
            t,
            kappa,
            m_bound,
        })
    }

    /// The vacuum `φ ≡ n₃`, `A ≡ 0`, at rest.
    pub fn vacuum(grid: &Arc<Grid>, kappa: f64, m_bound: f64) -> Result<State, FieldError> {
        let z = VectorField3::zeros(grid);
        State::new(
            VectorField3::north(grid),
            z.clone(),
            z.clone(),
            z,
            0.0,
            kappa,
            m_bound,
        )
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.phi.grid()
    }

    /// Max `||φ|² − 1|`.
    pub fn max_rho(&self) -> f64 {
        self.phi.norm_sqr().map(|x| x - 1.0).max_abs()
    }

    /// Max `|⟨φ, ∂ₜφ⟩|`.
    pub fn max_tangency(&self) -> f64 {
        self.phi.dot(&self.dphi).max_abs()
    }

    /// Checks the on-sphere tag and tangency of the velocity.
    pub fn check_on_sphere(&self, tol: f64) -> Result<(), FieldError> {
        let rho = self.max_rho();
        if rho > tol {
            return Err(FieldError::OffSphere(rho));
        }
        let tan = self.max_tangency();
        if tan > tol {
            return Err(FieldError::NotTangent(tan));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        [&self.phi, &self.dphi, &self.a, &self.da]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Largest absolute sample across all twelve component arrays.
    pub fn max_abs(&self) -> f64 {
        [&self.phi, &self.dphi, &self.a, &self.da]
            .iter()
            .map(|v| v.max_abs())
            .fold(0.0, f64::max)
    }

    /// Largest pointwise difference across all twelve arrays.
    pub fn max_abs_diff(&self, other: &State) -> f64 {
        let pairs = [
            (&self.phi, &other.phi),
            (&self.dphi, &other.dphi),
            (&self.a, &other.a),
            (&self.da, &other.da),
        ];
        pairs
            .iter()
            .map(|(x, y)| x.sub(y).max_abs())
            .fold(0.0, f64::max)
    }
}

/// Checks `0 < 1/(2κ²) ≤ m`.
pub fn check_coupling(kappa: f64, m_bound: f64) -> Result<(), FieldError> {
    let v = 1.0 / (2.0 * kappa * kappa);
    if kappa.is_finite() && kappa > 0.0 && m_bound.is_finite() && v > 0.0 && v <= m_bound {
        Ok(())
    } else {
        Err(FieldError::InvalidCoupling { kappa, m_bound })
    }
}

/// First derivatives of a state, `∂_μφ` and `∂_μA_ν`, computed once and
/// shared by the nonlinearities and diagnostics.
#[derive(Clone, Debug)]
pub struct Derivatives {
    /// `phi[μ] = ∂_μφ`; `phi[0]` is the stored `∂ₜφ`.
    pub phi: [VectorField3; 3],
    /// `a[μ].c[ν] = ∂_μA_ν`; `a[0]` is the stored `∂ₜA`.
    pub a: [VectorField3; 3],
}

impl Derivatives {
    pub fn of(state: &State) -> Derivatives {
        Derivatives::with_spectra(state).0
    }

    /// Derivatives together with the spectra of `φ` and `A`, one forward
    /// transform per component.
    pub fn with_spectra(state: &State) -> (Derivatives, [Spectrum; 3], [Spectrum; 3]) {
        let (phi_hat, p1, p2) = gradient(&state.phi);
        let (a_hat, a1, a2) = gradient(&state.a);
        let d = Derivatives {
            phi: [state.dphi.clone(), p1, p2],
            a: [state.da.clone(), a1, a2],
        };
        (d, phi_hat, a_hat)
    }
}

/// Spectra and both spatial partials of a vector field.
pub fn gradient(v: &VectorField3) -> ([Spectrum; 3], VectorField3, VectorField3) {
    let hat = v.spectra();
    let d = |axis: Axis| {
        VectorField3::new(
            hat[0].derivative(axis).to_field(),
            hat[1].derivative(axis).to_field(),
            hat[2].derivative(axis).to_field(),
        )
    };
    let (d1, d2) = (d(Axis::X1), d(Axis::X2));
    (hat, d1, d2)
}

/// `D_μφ = ∂_μφ + A_μ (n₃ × φ)`.
pub fn covariant_derivative(state: &State, mu: usize) -> VectorField3 {
    let d = Derivatives::of(state);
    covariant_derivative_with(state, &d, mu)
}

pub fn covariant_derivative_with(state: &State, d: &Derivatives, mu: usize) -> VectorField3 {
    let rot = n3_cross(&state.phi);
    let mut out = d.phi[mu].clone();
    for (o, r) in out.c.iter_mut().zip(rot.c.iter()) {
        *o = &*o + &(&state.a.c[mu] * r);
    }
    out
}

/// `F_{μν} = ∂_μA_ν − ∂_νA_μ`, time derivatives from the stored `∂ₜA`.
pub fn curvature(state: &State, mu: usize, nu: usize) -> ScalarField {
    let d = Derivatives::of(state);
    curvature_with(&d, mu, nu)
}

pub fn curvature_with(d: &Derivatives, mu: usize, nu: usize) -> ScalarField {
    if mu == nu {
        return ScalarField::zeros(d.a[0].grid());
    }
    &d.a[mu].c[nu] - &d.a[nu].c[mu]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::band_limited;
    use std::f64::consts::PI;

    fn grid() -> Arc<Grid> {
        Grid::new(32, 10.0).unwrap()
    }

    fn unit_field(g: &Arc<Grid>) -> VectorField3 {
        let th = band_limited(g, 3, 11).scaled(0.3);
        let be = band_limited(g, 3, 12);
        VectorField3::new(
            th.zip_map(&be, |t, b| t.sin() * b.cos()),
            th.zip_map(&be, |t, b| t.sin() * b.sin()),
            th.map(f64::cos),
        )
    }

    #[test]
    fn metric_and_epsilon_tables() {
        assert_eq!(metric_sign(0), 1.0);
        assert_eq!(metric_sign(1), -1.0);
        assert_eq!(metric_sign(2), -1.0);
        assert_eq!(epsilon_lower(0, 1, 2), 1.0);
        assert_eq!(epsilon_lower(1, 2, 0), 1.0);
        assert_eq!(epsilon_lower(2, 0, 1), 1.0);
        assert_eq!(epsilon_lower(0, 2, 1), -1.0);
        assert_eq!(epsilon_lower(2, 1, 0), -1.0);
        assert_eq!(epsilon_lower(1, 0, 2), -1.0);
        assert_eq!(epsilon_lower(0, 0, 1), 0.0);
        assert_eq!(epsilon_lower(2, 2, 2), 0.0);
    }

    #[test]
    fn minkowski_contraction() {
        let a = [0.7, -1.3, 2.0];
        let c: f64 = (0..3).map(|mu| metric_sign(mu) * a[mu] * a[mu]).sum();
        assert!((c - (0.49 - 1.69 - 4.0)).abs() < 1e-15);
    }

    #[test]
    fn n3_cross_examples() {
        let g = grid();
        let n3 = VectorField3::north(&g);
        assert_eq!(n3_cross(&n3).max_abs(), 0.0);
        let e1 = VectorField3::constant(&g, [1.0, 0.0, 0.0]);
        let r = n3_cross(&e1);
        assert_eq!(r.c[0].max_abs(), 0.0);
        assert!(r.c[1].values().iter().all(|&x| x == 1.0));
        let v = unit_field(&g);
        let twice = n3_cross(&n3_cross(&v));
        let want = VectorField3::new(-&v.c[0], -&v.c[1], ScalarField::zeros(&g));
        assert_eq!(twice.sub(&want).max_abs(), 0.0);
        let via_cross = n3.cross(&v);
        assert!(via_cross.sub(&n3_cross(&v)).max_abs() < 1e-15);
    }

    #[test]
    fn on_sphere_identities() {
        let g = grid();
        let phi = unit_field(&g);
        assert!(phi.dot(&n3_cross(&phi)).max_abs() < 1e-15);
        let w = n3_cross(&phi).norm_sqr();
        let want = phi.c[2].map(|p| 1.0 - p * p);
        assert!((&w - &want).max_abs() < 1e-14);
    }

    fn state_with(phi: VectorField3, a: VectorField3) -> State {
        let g = phi.grid().clone();
        let z = VectorField3::zeros(&g);
        State::new(phi, z.clone(), a, z, 0.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn covariant_derivative_examples() {
        let g = grid();
        let phi = unit_field(&g);
        let s = state_with(phi.clone(), VectorField3::zeros(&g));
        let d1 = covariant_derivative(&s, 1);
        assert!(d1.sub(&phi.derivative(Axis::X1)).max_abs() < 1e-15);

        let a = VectorField3::new(
            band_limited(&g, 2, 1),
            band_limited(&g, 2, 2),
            band_limited(&g, 2, 3),
        );
        let s = state_with(VectorField3::north(&g), a.clone());
        assert!(covariant_derivative(&s, 2).max_abs() < 1e-15);

        let c = 0.37;
        let a = VectorField3::new(
            ScalarField::zeros(&g),
            ScalarField::constant(&g, c),
            ScalarField::zeros(&g),
        );
        let s = state_with(VectorField3::constant(&g, [1.0, 0.0, 0.0]), a);
        let d1 = covariant_derivative(&s, 1);
        assert!(d1.c[0].max_abs() < 1e-15);
        assert!((&d1.c[1] - &ScalarField::constant(&g, c)).max_abs() < 1e-15);
        assert!(d1.c[2].max_abs() < 1e-15);
    }

    #[test]
    fn curvature_examples() {
        let g = grid();
        let phi = unit_field(&g);
        let a = VectorField3::new(
            band_limited(&g, 3, 4),
            band_limited(&g, 3, 5),
            band_limited(&g, 3, 6),
        );
        let mut s = state_with(phi, a);
        s.da = VectorField3::new(
            band_limited(&g, 3, 7),
            band_limited(&g, 3, 8),
            band_limited(&g, 3, 9),
        );
        for mu in 0..3 {
            assert_eq!(curvature(&s, mu, mu).max_abs(), 0.0);
            for nu in 0..3 {
                let f = curvature(&s, mu, nu);
                let r = curvature(&s, nu, mu);
                assert_eq!((&f + &r).max_abs(), 0.0);
            }
        }

        // Pure gauge A_μ = ∂_μχ with χ(t, x) = χ₀(x) + t χ₁(x).
        let chi0 = band_limited(&g, 4, 21);
        let chi1 = band_limited(&g, 4, 22);
        let pure = VectorField3::new(
            chi1.clone(),
            crate::spectral::spatial_derivative(&chi0, Axis::X1),
            crate::spectral::spatial_derivative(&chi0, Axis::X2),
        );
        let dpure = VectorField3::new(
            ScalarField::zeros(&g),
            crate::spectral::spatial_derivative(&chi1, Axis::X1),
            crate::spectral::spatial_derivative(&chi1, Axis::X2),
        );
        let mut s = state_with(VectorField3::north(&g), pure);
        s.da = dpure;
        for mu in 0..3 {
            for nu in 0..3 {
                assert!(curvature(&s, mu, nu).max_abs() <= 1e-11);
            }
        }
    }

    #[test]
    fn curvature_of_windowed_profile() {
        let l = 20.0;
        let g = Grid::new(64, l).unwrap();
        let sig = 2.0;
        let c = l / 2.0;
        let prof = |x1: f64, x2: f64| {
            (x1 - c) * (-((x1 - c).powi(2) + (x2 - c).powi(2)) / (sig * sig)).exp()
        };
        let dprof = |x1: f64, x2: f64| {
            let r2 = (x1 - c).powi(2) + (x2 - c).powi(2);
            (1.0 - 2.0 * (x1 - c).powi(2) / (sig * sig)) * (-r2 / (sig * sig)).exp()
        };
        let a = VectorField3::new(
            ScalarField::zeros(&g),
            ScalarField::zeros(&g),
            ScalarField::from_fn(&g, prof),
        );
        let s = state_with(VectorField3::north(&g), a);
        let f12 = curvature(&s, 1, 2);
        let want = ScalarField::from_fn(&g, dprof);
        assert!((&f12 - &want).max_abs() < 1e-9);
        let _ = PI;
    }

    #[test]
    fn coupling_bound() {
        assert!(check_coupling(1.0, 0.5).is_ok());
        assert!(check_coupling(1.0, 0.49).is_err());
        assert!(check_coupling(0.0, 1.0).is_err());
        assert!(check_coupling(-1.0, 1.0).is_err());
    }
}
