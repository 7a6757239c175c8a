//! Reaction terms, their semi-implicit split and manufactured source terms.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::geometry::DomainMap;
use crate::math::{self, PI};

/// Linearisation of species `i`'s reaction term around the previous state:
/// `f̃_i(uⁿ, uⁿ⁻¹) = explicit − implicit · u_iⁿ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitTerm {
    pub implicit: f64,
    pub explicit: f64,
}

/// Reaction kinetics `f: ℝᵐ → ℝᵐ`.
pub trait Kinetics: Send + Sync {
    fn species(&self) -> usize;

    fn eval(&self, u: &[f64], out: &mut [f64]);

    /// Row-major `m × m` Jacobian `∂f_i/∂u_j`.
    fn jacobian(&self, u: &[f64], out: &mut [f64]);

    /// Semi-implicit split with every cross-species factor lagged. Must satisfy
    /// `explicit − implicit · u[i] = f_i(u)` for all `u`.
    fn split(&self, u_prev: &[f64], species: usize) -> SplitTerm;
}

/// `f₁ = γ(k₁ − u₁ + u₁²u₂)`, `f₂ = γ(k₂ − u₁²u₂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schnakenberg {
    pub gamma: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Schnakenberg {
    pub fn new(gamma: f64, k1: f64, k2: f64) -> Result<Self> {
        for (name, v) in [("gamma", gamma), ("k1", k1), ("k2", k2)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(alloc::format!(
                    "Schnakenberg parameter {name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(Self { gamma, k1, k2 })
    }

    /// The homogeneous steady state `(k₁+k₂, k₂/(k₁+k₂)²)`.
    pub fn steady_state(&self) -> [f64; 2] {
        let s = self.k1 + self.k2;
        [s, self.k2 / (s * s)]
    }
}

impl Kinetics for Schnakenberg {
    fn species(&self) -> usize {
        2
    }

    fn eval(&self, u: &[f64], out: &mut [f64]) {
        let c = u[0] * u[0] * u[1];
        out[0] = self.gamma * (self.k1 - u[0] + c);
        out[1] = self.gamma * (self.k2 - c);
    }

    fn jacobian(&self, u: &[f64], out: &mut [f64]) {
        let g = self.gamma;
        out[0] = g * (-1.0 + 2.0 * u[0] * u[1]);
        out[1] = g * u[0] * u[0];
        out[2] = -g * 2.0 * u[0] * u[1];
        out[3] = -g * u[0] * u[0];
    }

    fn split(&self, u: &[f64], species: usize) -> SplitTerm {
        let g = self.gamma;
        match species {
            0 => SplitTerm {
                implicit: g * (1.0 - u[0] * u[1]),
                explicit: g * self.k1,
            },
            _ => SplitTerm {
                implicit: g * u[0] * u[0],
                explicit: g * self.k2,
            },
        }
    }
}

/// `f ≡ 0` for `m` species.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoReaction {
    pub species: usize,
}

impl Kinetics for NoReaction {
    fn species(&self) -> usize {
        self.species
    }

    fn eval(&self, _u: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn jacobian(&self, _u: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn split(&self, _u: &[f64], _species: usize) -> SplitTerm {
        SplitTerm {
            implicit: 0.0,
            explicit: 0.0,
        }
    }
}

/// Row-sum (∞-) norm of `f'(u)`, the local Lipschitz constant of the kinetics.
pub fn lipschitz_estimate(kinetics: &dyn Kinetics, u: &[f64], scratch: &mut Vec<f64>) -> f64 {
    let m = kinetics.species();
    scratch.resize(m * m, 0.0);
    kinetics.jacobian(u, scratch);
    scratch
        .chunks(m)
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// A smooth exact solution on the reference square.
pub trait ExactSolution: Send + Sync {
    fn species(&self) -> usize;
    fn value(&self, xi: [f64; 2], t: f64, out: &mut [f64]);
    fn time_derivative(&self, xi: [f64; 2], t: f64, out: &mut [f64]);
    fn gradient(&self, xi: [f64; 2], t: f64, out: &mut [[f64; 2]]);
    fn hessian(&self, xi: [f64; 2], t: f64, out: &mut [[[f64; 2]; 2]]);

    /// Value, time derivative, gradient and Hessian in one call.
    fn jet(
        &self,
        xi: [f64; 2],
        t: f64,
        value: &mut [f64],
        dt: &mut [f64],
        grad: &mut [[f64; 2]],
        hess: &mut [[[f64; 2]; 2]],
    ) {
        self.value(xi, t, value);
        self.time_derivative(xi, t, dt);
        self.gradient(xi, t, grad);
        self.hessian(xi, t, hess);
    }
}

/// `û_i(ξ,t) = e^{−t} cos(πξ₁) cos(πξ₂) + offset_i`.
///
/// The normal derivative vanishes on every side of the square, so the Neumann
/// condition holds under any map with diagonal `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineMode {
    pub offsets: Vec<f64>,
}

impl CosineMode {
    fn parts(xi: [f64; 2], t: f64) -> (f64, f64, f64, f64, f64) {
        let e = math::exp(-t);
        let (s1, c1) = math::sin_cos(PI * xi[0]);
        let (s2, c2) = math::sin_cos(PI * xi[1]);
        (e, c1, s1, c2, s2)
    }
}

impl ExactSolution for CosineMode {
    fn species(&self) -> usize {
        self.offsets.len()
    }

    fn value(&self, xi: [f64; 2], t: f64, out: &mut [f64]) {
        let (e, c1, _, c2, _) = Self::parts(xi, t);
        for (o, off) in out.iter_mut().zip(&self.offsets) {
            *o = e * c1 * c2 + off;
        }
    }

    fn time_derivative(&self, xi: [f64; 2], t: f64, out: &mut [f64]) {
        let (e, c1, _, c2, _) = Self::parts(xi, t);
        out.fill(-e * c1 * c2);
    }

    fn gradient(&self, xi: [f64; 2], t: f64, out: &mut [[f64; 2]]) {
        let (e, c1, s1, c2, s2) = Self::parts(xi, t);
        out.fill([-PI * e * s1 * c2, -PI * e * c1 * s2]);
    }

    fn hessian(&self, xi: [f64; 2], t: f64, out: &mut [[[f64; 2]; 2]]) {
        let (e, c1, s1, c2, s2) = Self::parts(xi, t);
        let p2 = PI * PI * e;
        out.fill([[-p2 * c1 * c2, p2 * s1 * s2], [p2 * s1 * s2, -p2 * c1 * c2]]);
    }

    fn jet(
        &self,
        xi: [f64; 2],
        t: f64,
        value: &mut [f64],
        dt: &mut [f64],
        grad: &mut [[f64; 2]],
        hess: &mut [[[f64; 2]; 2]],
    ) {
        let (e, c1, s1, c2, s2) = Self::parts(xi, t);
        let mode = e * c1 * c2;
        for (o, off) in value.iter_mut().zip(&self.offsets) {
            *o = mode + off;
        }
        dt.fill(-mode);
        grad.fill([-PI * e * s1 * c2, -PI * e * c1 * s2]);
        let p2 = PI * PI * e;
        hess.fill([[-p2 * c1 * c2, p2 * s1 * s2], [p2 * s1 * s2, -p2 * c1 * c2]]);
    }
}

/// Exact solution plus the kinetics and diffusion it is manufactured for.
#[derive(Clone)]
pub struct ManufacturedCase {
    pub exact: Arc<dyn ExactSolution>,
    pub kinetics: Arc<dyn Kinetics>,
    pub diffusion: Vec<f64>,
}

impl fmt::Debug for ManufacturedCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ManufacturedCase")
            .field("species", &self.exact.species())
            .field("diffusion", &self.diffusion)
            .finish()
    }
}

impl ManufacturedCase {
    pub fn new(
        exact: Arc<dyn ExactSolution>,
        kinetics: Arc<dyn Kinetics>,
        diffusion: Vec<f64>,
    ) -> Result<Self> {
        let m = kinetics.species();
        if exact.species() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: exact.species(),
            });
        }
        if diffusion.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: diffusion.len(),
            });
        }
        Ok(Self {
            exact,
            kinetics,
            diffusion,
        })
    }

    /// Schnakenberg kinetics with the exact solution
    /// `û_i = e^{−t} cos(πξ₁) cos(πξ₂) + u*_i` around its steady state `u*`.
    pub fn schnakenberg_cosine(kinetics: Schnakenberg, diffusion: [f64; 2]) -> Self {
        let exact = CosineMode {
            offsets: kinetics.steady_state().to_vec(),
        };
        Self::new(Arc::new(exact), Arc::new(kinetics), diffusion.to_vec())
            .expect("two species throughout")
    }

    pub fn species(&self) -> usize {
        self.diffusion.len()
    }
}

/// `s_i = (1/J) ∂t(J û_i) − (D_i/J) ∇·(G ∇û_i) − f_i(û)` with `G = J K Kᵀ`, so that
/// `û` solves the pulled-back problem exactly when `s` is added to `f`.
pub fn manufactured_source(
    case: &ManufacturedCase,
    map: &DomainMap,
    xi: [f64; 2],
    t: f64,
    out: &mut [f64],
) -> Result<()> {
    const STACK: usize = 4;
    let m = case.species();
    if m <= STACK {
        let mut u = [0.0; STACK];
        let mut ut = [0.0; STACK];
        let mut grad = [[0.0; 2]; STACK];
        let mut hess = [[[0.0; 2]; 2]; STACK];
        let mut f = [0.0; STACK];
        source_with(
            case,
            map,
            xi,
            t,
            out,
            (&mut u[..m], &mut ut[..m], &mut grad[..m], &mut hess[..m], &mut f[..m]),
        )
    } else {
        let mut u = vec![0.0; m];
        let mut ut = vec![0.0; m];
        let mut grad = vec![[0.0; 2]; m];
        let mut hess = vec![[[0.0; 2]; 2]; m];
        let mut f = vec![0.0; m];
        source_with(case, map, xi, t, out, (&mut u, &mut ut, &mut grad, &mut hess, &mut f))
    }
}

type Scratch<'a> = (
    &'a mut [f64],
    &'a mut [f64],
    &'a mut [[f64; 2]],
    &'a mut [[[f64; 2]; 2]],
    &'a mut [f64],
);

fn source_with(
    case: &ManufacturedCase,
    map: &DomainMap,
    xi: [f64; 2],
    t: f64,
    out: &mut [f64],
    (u, ut, grad, hess, f): Scratch<'_>,
) -> Result<()> {
    let metric = map.metric_terms(xi, t)?;
    let g = metric.tensor();
    let div_g = map.metric_divergence(xi, t)?;
    case.exact.jet(xi, t, u, ut, grad, hess);
    case.kinetics.eval(u, f);
    for i in 0..u.len() {
        let time = (metric.dj_dt * u[i] + metric.j * ut[i]) / metric.j;
        let mut div_flux = div_g[0] * grad[i][0] + div_g[1] * grad[i][1];
        for r in 0..2 {
            for c in 0..2 {
                div_flux += g[r][c] * hess[i][r][c];
            }
        }
        out[i] = time - case.diffusion[i] * div_flux / metric.j - f[i];
    }
    Ok(())
}

/// A space-time source added to the reaction terms by the time stepper.
pub trait SourceTerm: Send + Sync {
    fn eval(&self, xi: [f64; 2], t: f64, out: &mut [f64]) -> Result<()>;
}

/// The manufactured source of `case` under `map`.
#[derive(Debug, Clone)]
pub struct ManufacturedSource {
    pub case: ManufacturedCase,
    pub map: DomainMap,
}

impl SourceTerm for ManufacturedSource {
    fn eval(&self, xi: [f64; 2], t: f64, out: &mut [f64]) -> Result<()> {
        manufactured_source(&self.case, &self.map, xi, t, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn benchmark_kinetics() -> Schnakenberg {
        Schnakenberg::new(1.0, 0.1, 0.9).unwrap()
    }

    #[test]
    fn steady_state_is_a_zero() {
        let k = benchmark_kinetics();
        let u = k.steady_state();
        assert_relative_eq!(u[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(u[1], 0.9, epsilon = 1e-15);
        let mut f = [0.0; 2];
        k.eval(&u, &mut f);
        assert!(f[0].abs() < 1e-15 && f[1].abs() < 1e-15);
    }

    #[test]
    fn origin_value() {
        let k = Schnakenberg::new(2.0, 0.1, 0.9).unwrap();
        let mut f = [0.0; 2];
        k.eval(&[0.0, 0.0], &mut f);
        assert_eq!(f, [0.2, 1.8]);
    }

    #[test]
    fn split_at_steady_state() {
        let k = benchmark_kinetics();
        let s = k.split(&[1.0, 0.9], 0);
        // g₁ − c₁·u₁ = 0.1 − (1 − 0.9)·1.0 = 0.
        assert_relative_eq!(s.explicit - s.implicit * 1.0, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_nonpositive_parameters() {
        assert!(Schnakenberg::new(0.0, 0.1, 0.9).is_err());
        assert!(Schnakenberg::new(1.0, -0.1, 0.9).is_err());
        assert!(Schnakenberg::new(1.0, 0.1, f64::NAN).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn split_is_consistent(u0 in -5.0..5.0f64, u1 in -5.0..5.0f64, gamma in 0.01..10.0f64) {
            let k = Schnakenberg::new(gamma, 0.1, 0.9).unwrap();
            let u = [u0, u1];
            let mut f = [0.0; 2];
            k.eval(&u, &mut f);
            for i in 0..2 {
                let s = k.split(&u, i);
                let lhs = s.explicit - s.implicit * u[i];
                prop_assert!((lhs - f[i]).abs() <= 1e-12 * (1.0 + f[i].abs()));
            }
        }

        #[test]
        fn jacobian_matches_differences(u0 in -3.0..3.0f64, u1 in -3.0..3.0f64) {
            let k = benchmark_kinetics();
            let u = [u0, u1];
            let mut jac = [0.0; 4];
            k.jacobian(&u, &mut jac);
            let h = 1e-6;
            for j in 0..2 {
                let (mut up, mut um) = (u, u);
                up[j] += h;
                um[j] -= h;
                let (mut fp, mut fm) = ([0.0; 2], [0.0; 2]);
                k.eval(&up, &mut fp);
                k.eval(&um, &mut fm);
                for i in 0..2 {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    let scale = jac[i * 2 + j].abs().max(1.0);
                    prop_assert!((fd - jac[i * 2 + j]).abs() <= 1e-6 * scale);
                }
            }
        }
    }

    #[test]
    fn steady_exact_solution_needs_no_source() {
        let k = benchmark_kinetics();
        let case = ManufacturedCase::new(
            Arc::new(ConstantState(k.steady_state().to_vec())),
            Arc::new(k),
            vec![1.0, 10.0],
        )
        .unwrap();
        let map = DomainMap::identity(1.0).unwrap();
        let mut s = [1.0; 2];
        manufactured_source(&case, &map, [0.3, 0.8], 0.4, &mut s).unwrap();
        assert!(s[0].abs() < 1e-15 && s[1].abs() < 1e-15);
    }

    struct ConstantState(Vec<f64>);

    impl ExactSolution for ConstantState {
        fn species(&self) -> usize {
            self.0.len()
        }
        fn value(&self, _: [f64; 2], _: f64, out: &mut [f64]) {
            out.copy_from_slice(&self.0);
        }
        fn time_derivative(&self, _: [f64; 2], _: f64, out: &mut [f64]) {
            out.fill(0.0);
        }
        fn gradient(&self, _: [f64; 2], _: f64, out: &mut [[f64; 2]]) {
            out.fill([0.0; 2]);
        }
        fn hessian(&self, _: [f64; 2], _: f64, out: &mut [[[f64; 2]; 2]]) {
            out.fill([[0.0; 2]; 2]);
        }
    }

    #[test]
    fn cosine_source_on_identity_map() {
        let k = benchmark_kinetics();
        let d = [1.0, 10.0];
        let case = ManufacturedCase::schnakenberg_cosine(k, d);
        let map = DomainMap::identity(1.0).unwrap();
        let (xi, t) = ([0.2, 0.35], 0.3);
        let mut s = [0.0; 2];
        manufactured_source(&case, &map, xi, t, &mut s).unwrap();
        let phi = math::exp(-t) * math::cos(PI * xi[0]) * math::cos(PI * xi[1]);
        let ustar = k.steady_state();
        let u = [phi + ustar[0], phi + ustar[1]];
        let mut f = [0.0; 2];
        k.eval(&u, &mut f);
        for i in 0..2 {
            // f(u*) = 0.
            let expect = (-1.0 + 2.0 * d[i] * PI * PI) * phi - f[i];
            assert_relative_eq!(s[i], expect, epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn cosine_source_matches_finite_differences_on_surface() {
        // Independent route: s = (1/J)∂t(Jû) − (D/J)∇·(G∇û) − f(û) with every
        // derivative taken by central differences of û, J and G.
        let k = benchmark_kinetics();
        let d = [0.01, 1.0];
        let case = ManufacturedCase::schnakenberg_cosine(k, d);
        let map = DomainMap::ridge_surface();
        let (xi, t) = ([0.8, 0.15], 300.0);
        let mut s = [0.0; 2];
        manufactured_source(&case, &map, xi, t, &mut s).unwrap();

        let u_at = |p: [f64; 2], tt: f64| {
            let mut v = [0.0; 2];
            case.exact.value(p, tt, &mut v);
            v
        };
        let j_at = |p: [f64; 2], tt: f64| map.metric_terms(p, tt).unwrap().j;
        let ht = 1e-3;
        let hx = 1e-4;
        let jc = j_at(xi, t);
        let mut f = [0.0; 2];
        k.eval(&u_at(xi, t), &mut f);
        for i in 0..2 {
            let dt_ju = (j_at(xi, t + ht) * u_at(xi, t + ht)[i]
                - j_at(xi, t - ht) * u_at(xi, t - ht)[i])
                / (2.0 * ht);
            let flux = |p: [f64; 2]| {
                let g = map.metric_terms(p, t).unwrap().tensor();
                let du = [
                    (u_at([p[0] + hx, p[1]], t)[i] - u_at([p[0] - hx, p[1]], t)[i]) / (2.0 * hx),
                    (u_at([p[0], p[1] + hx], t)[i] - u_at([p[0], p[1] - hx], t)[i]) / (2.0 * hx),
                ];
                [g[0][0] * du[0] + g[0][1] * du[1], g[1][0] * du[0] + g[1][1] * du[1]]
            };
            let div = (flux([xi[0] + hx, xi[1]])[0] - flux([xi[0] - hx, xi[1]])[0]) / (2.0 * hx)
                + (flux([xi[0], xi[1] + hx])[1] - flux([xi[0], xi[1] - hx])[1]) / (2.0 * hx);
            let expect = dt_ju / jc - d[i] * div / jc - f[i];
            assert_relative_eq!(s[i], expect, epsilon = 1e-5, max_relative = 1e-5);
        }
    }

    #[test]
    fn dilation_source_carries_dj_dt_at_start() {
        // At t = 0 under ρ = 1 + sin(πt): J = 1, ∂tJ = 2π, K = I.
        let k = benchmark_kinetics();
        let d = [1.0, 10.0];
        let case = ManufacturedCase::schnakenberg_cosine(k, d);
        let dil = DomainMap::benchmark_dilation();
        let id = DomainMap::identity(1.0).unwrap();
        let xi = [0.1, 0.6];
        let (mut s_dil, mut s_id) = ([0.0; 2], [0.0; 2]);
        manufactured_source(&case, &dil, xi, 0.0, &mut s_dil).unwrap();
        manufactured_source(&case, &id, xi, 0.0, &mut s_id).unwrap();
        let mut u = [0.0; 2];
        case.exact.value(xi, 0.0, &mut u);
        for i in 0..2 {
            assert_relative_eq!(s_dil[i] - s_id[i], 2.0 * PI * u[i], epsilon = 1e-12);
        }
    }
}
