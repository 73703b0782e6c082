//! Basic null forms and the two evaluations of `A^μ∂_μφ`.
//!
//! Arguments are [`Jet`]s: a scalar or vector field together with its three
//! spacetime partials `∂₀ = ∂ₜ, ∂₁, ∂₂`. Vector arguments are contracted
//! component-wise with the Euclidean target inner product.

use crate::fields::{metric_sign, Derivatives, State, VectorField3};
use crate::par;
use crate::spectral::{Axis, ScalarField, Spectrum};

/// Spacetime partials of a field with one or three target components.
#[derive(Clone, Debug)]
pub struct Jet {
    comps: Vec<[ScalarField; 3]>,
}

impl Jet {
    /// Scalar `u` with time derivative `ut`; spatial partials are spectral.
    pub fn scalar(u: &ScalarField, ut: &ScalarField) -> Jet {
        let s = u.spectrum();
        Jet::from_partials([
            ut.clone(),
            s.derivative(Axis::X1).to_field(),
            s.derivative(Axis::X2).to_field(),
        ])
    }

    pub fn from_partials(p: [ScalarField; 3]) -> Jet {
        Jet { comps: vec![p] }
    }

    pub fn vector(v: &VectorField3, vt: &VectorField3) -> Jet {
        let d1 = v.derivative(Axis::X1);
        let d2 = v.derivative(Axis::X2);
        Jet::from_vector_partials(&[vt.clone(), d1, d2])
    }

    /// Builds a vector jet from `d[μ] = ∂_μ v`.
    pub fn from_vector_partials(d: &[VectorField3; 3]) -> Jet {
        let comps = (0..3)
            .map(|c| [d[0].c[c].clone(), d[1].c[c].clone(), d[2].c[c].clone()])
            .collect();
        Jet { comps }
    }

    /// Jet of `φ` from a state's derivative cache.
    pub fn of_phi(d: &Derivatives) -> Jet {
        Jet::from_vector_partials(&d.phi)
    }

    pub fn components(&self) -> usize {
        self.comps.len()
    }

    /// `∂_μ` of target component `c`.
    pub fn partial(&self, c: usize, mu: usize) -> &ScalarField {
        &self.comps[c][mu]
    }
}

fn check_pair(u: &Jet, v: &Jet) {
    assert_eq!(
        u.components(),
        v.components(),
        "null form arguments must have the same number of components"
    );
}

/// `Σ_c (a·∂_μu_c ∂_νv_c + b·∂_ρu_c ∂_σv_c)`, the common bilinear shape.
fn contract(u: &Jet, v: &Jet, terms: &[(f64, usize, usize)]) -> ScalarField {
    check_pair(u, v);
    let g = u.partial(0, 0).grid().clone();
    let comps = u.components();
    let out = par::fill_indexed(g.len(), |i| {
        let mut acc = 0.0;
        for c in 0..comps {
            for &(w, mu, nu) in terms {
                acc += w * u.partial(c, mu).values()[i] * v.partial(c, nu).values()[i];
            }
        }
        acc
    });
    ScalarField::from_values(&g, out)
}

/// `Q₀(u, v) = ∂ₜu·∂ₜv − ∇u·∇v`.
pub fn q0(u: &Jet, v: &Jet) -> ScalarField {
    contract(u, v, &[(1.0, 0, 0), (-1.0, 1, 1), (-1.0, 2, 2)])
}

/// `Q_{μν}(u, v) = ∂_μu·∂_νv − ∂_νu·∂_μv` with lower indices.
pub fn q_lower(u: &Jet, v: &Jet, mu: usize, nu: usize) -> ScalarField {
    assert!(mu < 3 && nu < 3, "spacetime index out of range");
    if mu == nu {
        return ScalarField::zeros(u.partial(0, 0).grid());
    }
    contract(u, v, &[(1.0, mu, nu), (-1.0, nu, mu)])
}

/// `Q^{μν} = metric_sign(μ)·metric_sign(ν)·Q_{μν}`.
pub fn q_upper(u: &Jet, v: &Jet, mu: usize, nu: usize) -> ScalarField {
    q_lower(u, v, mu, nu).scaled(metric_sign(mu) * metric_sign(nu))
}

/// `Q_{ij}` for spatial `i, j ∈ {1, 2}`.
pub fn qij(u: &Jet, v: &Jet, i: usize, j: usize) -> ScalarField {
    assert!(
        (1..=2).contains(&i) && (1..=2).contains(&j),
        "spatial index must be 1 or 2"
    );
    q_lower(u, v, i, j)
}

/// `Q_{0j}` for spatial `j ∈ {1, 2}`.
pub fn q0j(u: &Jet, v: &Jet, j: usize) -> ScalarField {
    assert!((1..=2).contains(&j), "spatial index must be 1 or 2");
    q_lower(u, v, 0, j)
}

/// `A^μ∂_μφ = A₀∂ₜφ − A₁∂₁φ − A₂∂₂φ`.
pub fn advection_direct(state: &State) -> VectorField3 {
    advection_direct_with(state, &Derivatives::of(state))
}

pub fn advection_direct_with(state: &State, d: &Derivatives) -> VectorField3 {
    let a = &state.a.c;
    let mut out = d.phi[0].times(&a[0]);
    out.axpy(-1.0, &d.phi[1].times(&a[1]));
    out.axpy(-1.0, &d.phi[2].times(&a[2]));
    out
}

/// `Δ⁻¹` on a spectrum, zero mode projected out.
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

/// Null-form evaluation of `A^μ∂_μφ`.
///
/// Splits `(A₁, A₂)` into its gradient part, tied to `∂ₜA₀` by the Lorenz
/// condition, and its curl part `∇^⊥χ`, `χ = Δ⁻¹(∂₁A₂ − ∂₂A₁)`:
///
/// ```text
/// A^μ∂_μφ = −Q₁₂(χ, φ) − Σᵢ Q₀ᵢ(∂ᵢΔ⁻¹A₀, φ)
///         = ½Q_{ik}(D⁻¹(RⁱAᵏ − RᵏAⁱ), φ) − Q₀ᵢ(D⁻¹RⁱA₀, φ)
/// ```
///
/// Agrees with [`advection_direct`] when the gauge components are mean-free
/// and `∂ₜA₀ = ∂₁A₁ + ∂₂A₂`.
pub fn advection_nullform(state: &State) -> VectorField3 {
    let d = Derivatives::of(state);
    let phi = Jet::of_phi(&d);
    let zero = ScalarField::zeros(state.grid());

    let s1 = state.a.c[1].spectrum();
    let s2 = state.a.c[2].spectrum();
    let mut curl = s2.derivative(Axis::X1);
    curl.axpy(-1.0, &s1.derivative(Axis::X2));
    let chi = inverse_laplacian(&curl);
    // χ enters Q₁₂ only, so its time derivative is not needed.
    let chi_jet = Jet::from_partials([
        zero.clone(),
        chi.derivative(Axis::X1).to_field(),
        chi.derivative(Axis::X2).to_field(),
    ]);

    let p = inverse_laplacian(&state.a.c[0].spectrum());
    let pt = inverse_laplacian(&state.da.c[0].spectrum());
    let mut out = q_lower_vec(&chi_jet, &phi, 1, 2).scaled(-1.0);
    for axis in Axis::BOTH {
        let psi = p.derivative(axis);
        let psi_t = pt.derivative(axis).to_field();
        let jet = Jet::from_partials([
            psi_t,
            psi.derivative(Axis::X1).to_field(),
            psi.derivative(Axis::X2).to_field(),
        ]);
        out.axpy(-1.0, &q_lower_vec(&jet, &phi, 0, axis.index()));
    }
    out
}

/// Zero-mode remainder `⟨A₀⟩∂ₜφ − ⟨A₁⟩∂₁φ − ⟨A₂⟩∂₂φ` that the null-form
/// splitting cannot see on the torus.
pub fn advection_mean_part(state: &State) -> VectorField3 {
    let mut out = state.dphi.scaled(state.a.c[0].mean());
    for axis in Axis::BOTH {
        let m = state.a.c[axis.index()].mean();
        out.axpy(-m, &state.phi.derivative(axis));
    }
    out
}

/// Scalar-vector null form `Q_{μν}(χ, φ)`, one output per target component.
pub fn q_lower_vec(chi: &Jet, phi: &Jet, mu: usize, nu: usize) -> VectorField3 {
    assert_eq!(chi.components(), 1, "first argument must be scalar");
    let comp = |c: usize| {
        let v = Jet::from_partials([
            phi.partial(c, 0).clone(),
            phi.partial(c, 1).clone(),
            phi.partial(c, 2).clone(),
        ]);
        q_lower(chi, &v, mu, nu)
    };
    VectorField3::new(comp(0), comp(1), comp(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initdata::lorenz_gauge_sample as lorenz_state;
    use crate::spectral::{band_limited, Grid};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn max_diff(a: &ScalarField, b: &ScalarField) -> f64 {
        (a - b).max_abs()
    }

    fn rand_jet(g: &Arc<Grid>, seed: u64) -> Jet {
        Jet::scalar(&band_limited(g, 4, seed), &band_limited(g, 4, seed + 1000))
    }

    #[test]
    fn q0_examples() {
        let g = Grid::new(32, 8.0).unwrap();
        let c = Jet::scalar(&ScalarField::constant(&g, 2.0), &ScalarField::zeros(&g));
        assert_eq!(q0(&c, &c).max_abs(), 0.0);

        let u = band_limited(&g, 4, 3);
        let j = Jet::scalar(&u, &ScalarField::zeros(&g));
        let gx = crate::spectral::spatial_derivative(&u, Axis::X1);
        let gy = crate::spectral::spatial_derivative(&u, Axis::X2);
        let want = -(&gx * &gx + &gy * &gy);
        assert!(max_diff(&q0(&j, &j), &want) < 1e-13);
    }

    #[test]
    fn q0_of_counter_propagating_plane_waves() {
        let l = 2.0 * PI;
        let g = Grid::new(32, l).unwrap();
        let (k1, k2) = (2.0_f64, 1.0_f64);
        let w = (k1 * k1 + k2 * k2).sqrt();
        // u = cos(k·x − ωt), v = cos(k·x + ωt) at t = 0.
        let u = ScalarField::from_fn(&g, |x1, x2| (k1 * x1 + k2 * x2).cos());
        let ut = ScalarField::from_fn(&g, |x1, x2| w * (k1 * x1 + k2 * x2).sin());
        let vt = ut.scaled(-1.0);
        let q = q0(&Jet::scalar(&u, &ut), &Jet::scalar(&u, &vt));
        // ∂ₜu∂ₜv − ∇u·∇v = −ω²sin² − |k|²sin² = −2|k|² sin²(k·x).
        let want = ScalarField::from_fn(&g, |x1, x2| {
            -2.0 * w * w * (k1 * x1 + k2 * x2).sin().powi(2)
        });
        assert!(max_diff(&q, &want) < 1e-12);
    }

    #[test]
    fn qij_examples() {
        let g = Grid::new(64, 20.0).unwrap();
        let u = rand_jet(&g, 1);
        assert!(qij(&u, &u, 1, 2).max_abs() <= 1e-12);

        let c = 10.0;
        let prof = |s: f64| (-(s - c).powi(2) / 4.0).exp();
        let dprof = |s: f64| -(s - c) / 2.0 * (-(s - c).powi(2) / 4.0).exp();
        let z = ScalarField::zeros(&g);
        let u = Jet::scalar(&ScalarField::from_fn(&g, |x1, _| prof(x1)), &z);
        let v = Jet::scalar(&ScalarField::from_fn(&g, |_, x2| prof(x2)), &z);
        let want = ScalarField::from_fn(&g, |x1, x2| dprof(x1) * dprof(x2));
        assert!(max_diff(&qij(&u, &v, 1, 2), &want) < 1e-9);

        let a = Jet::scalar(&band_limited(&g, 4, 5), &z);
        let b = Jet::scalar(&band_limited(&g, 4, 6), &z);
        assert_eq!(q0j(&a, &b, 1).max_abs(), 0.0);
        assert_eq!(q0j(&a, &b, 2).max_abs(), 0.0);
    }

    #[test]
    fn symmetries_and_bilinearity() {
        let g = Grid::new(32, 10.0).unwrap();
        let (u, v, w) = (rand_jet(&g, 1), rand_jet(&g, 2), rand_jet(&g, 3));
        assert!(max_diff(&q0(&u, &v), &q0(&v, &u)) < 1e-13);
        for (m, n) in [(1, 2), (0, 1), (0, 2)] {
            let s = q_lower(&u, &v, m, n) + q_lower(&v, &u, m, n);
            assert!(s.max_abs() < 1e-13);
            let r = q_lower(&u, &v, m, n) + q_lower(&u, &v, n, m);
            assert!(r.max_abs() < 1e-13);
        }
        let lin = |a: &Jet, b: &Jet, s: f64| {
            let p: [ScalarField; 3] =
                std::array::from_fn(|mu| a.partial(0, mu) + &b.partial(0, mu).scaled(s));
            Jet::from_partials(p)
        };
        let uw = lin(&u, &w, -1.7);
        let lhs = q0(&uw, &v);
        let rhs = q0(&u, &v) + q0(&w, &v).scaled(-1.7);
        assert!(max_diff(&lhs, &rhs) <= 1e-12 * (1.0 + rhs.max_abs()));
        let lhs = q_lower(&v, &uw, 0, 2);
        let rhs = q_lower(&v, &u, 0, 2) + q_lower(&v, &w, 0, 2).scaled(-1.7);
        assert!(max_diff(&lhs, &rhs) <= 1e-12 * (1.0 + rhs.max_abs()));
    }

    #[test]
    fn raised_indices() {
        let g = Grid::new(16, 5.0).unwrap();
        let (u, v) = (rand_jet(&g, 7), rand_jet(&g, 8));
        assert!(max_diff(&q_upper(&u, &v, 1, 2), &q_lower(&u, &v, 1, 2)) == 0.0);
        assert!(max_diff(&q_upper(&u, &v, 0, 1), &-q_lower(&u, &v, 0, 1)) == 0.0);
    }

    #[test]
    fn advection_examples() {
        let g = Grid::new(32, 10.0).unwrap();
        let mut s = lorenz_state(&g, 1);
        s.a = VectorField3::zeros(&g);
        s.da = VectorField3::zeros(&g);
        assert_eq!(advection_direct(&s).max_abs(), 0.0);
        assert!(advection_nullform(&s).max_abs() < 1e-15);

        let mut s = lorenz_state(&g, 2);
        s.dphi = VectorField3::zeros(&g);
        s.a.c[1] = ScalarField::zeros(&g);
        s.a.c[2] = ScalarField::zeros(&g);
        assert_eq!(advection_direct(&s).max_abs(), 0.0);

        // Term-by-term assembly, component by component.
        let s = lorenz_state(&g, 3);
        let adv = advection_direct(&s);
        let d1 = s.phi.derivative(Axis::X1);
        let d2 = s.phi.derivative(Axis::X2);
        for c in 0..3 {
            for i in 0..g.len() {
                let want = s.a.c[0].values()[i] * s.dphi.c[c].values()[i]
                    - s.a.c[1].values()[i] * d1.c[c].values()[i]
                    - s.a.c[2].values()[i] * d2.c[c].values()[i];
                assert!((adv.c[c].values()[i] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn nullform_matches_direct_in_lorenz_gauge() {
        let g = Grid::new(64, 12.0).unwrap();
        for seed in 0..5 {
            let s = lorenz_state(&g, 100 + 10 * seed);
            let e = advection_direct(&s).sub(&advection_nullform(&s)).max_abs();
            assert!(e <= 1e-10, "seed {seed}: {e:e}");
        }
    }

    #[test]
    fn nullform_differs_without_gauge() {
        let g = Grid::new(32, 12.0).unwrap();
        let mut s = lorenz_state(&g, 9);
        s.a.c[1] =
            &s.a.c[1] + &crate::spectral::spatial_derivative(&band_limited(&g, 3, 77), Axis::X1);
        let e = advection_direct(&s).sub(&advection_nullform(&s)).max_abs();
        assert!(e > 1e-3);
    }
}
