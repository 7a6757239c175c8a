//! Residual-based local error indicators.
//!
//! For species `i` and triangle `s`,
//!
//! ```text
//! η²_{i|s} = h_s² ‖r_i‖²_{L²(s)} + ½ Σ_{e ⊂ ∂s} |e| ‖D_i ⟦G ∇u_i · ν⟧‖²_{L²(e)}
//! r_i      = (Jⁿ u_iⁿ − Jⁿ⁻¹ u_iⁿ⁻¹)/τ − D_i (∇·G)·∇u_iⁿ − Jⁿ (f_i(uⁿ) + s_i)
//! ```
//!
//! with `G = J K Kᵀ` at `tⁿ`. On boundary edges the jump is twice the one-sided flux.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fem::{P1Space, SystemState, NQ, QUADRATURE};
use crate::geometry::{DomainMap, MapAt, MetricSample};
use crate::kinetics::{Kinetics, SourceTerm};
use crate::math;

/// Everything the indicators depend on. `prev` must already live on `space`.
#[derive(Clone, Copy)]
pub struct EstimatorInput<'a> {
    pub space: &'a P1Space,
    pub state: &'a SystemState,
    pub prev: &'a SystemState,
    pub map: &'a DomainMap,
    pub kinetics: &'a dyn Kinetics,
    pub diffusion: &'a [f64],
    pub source: Option<&'a dyn SourceTerm>,
}

impl EstimatorInput<'_> {
    fn tau(&self) -> f64 {
        self.state.t - self.prev.t
    }

    fn check(&self) -> Result<()> {
        self.state.check(self.space)?;
        self.prev.check(self.space)?;
        let m = self.kinetics.species();
        for found in [self.state.species(), self.prev.species(), self.diffusion.len()] {
            if found != m {
                return Err(Error::DimensionMismatch { expected: m, found });
            }
        }
        if !(self.tau() > 0.0) {
            return Err(Error::InvalidArgument(alloc::format!(
                "state time {} must exceed previous time {}",
                self.state.t,
                self.prev.t
            )));
        }
        Ok(())
    }
}

/// Per-element, per-species indicators `η_{i|s}` and the global estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorField {
    values: Vec<f64>,
    species: usize,
    global: f64,
    pub mesh_version: u64,
    pub t: f64,
}

impl IndicatorField {
    /// Builds a field from `η_{i|s}` stored at `s * species + i`.
    pub fn from_values(values: Vec<f64>, species: usize, mesh_version: u64, t: f64) -> Result<Self> {
        if species == 0 || !values.len().is_multiple_of(species) {
            return Err(Error::DimensionMismatch {
                expected: species,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("indicators must be finite and nonnegative".into()));
        }
        let global = math::sqrt(values.iter().map(|v| v * v).sum());
        Ok(Self {
            values,
            species,
            global,
            mesh_version,
            t,
        })
    }

    pub fn global(&self) -> f64 {
        self.global
    }

    pub fn species(&self) -> usize {
        self.species
    }

    pub fn num_elements(&self) -> usize {
        self.values.len() / self.species
    }

    pub fn value(&self, element: usize, species: usize) -> f64 {
        self.values[element * self.species + species]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `η_{|s} = (Σ_i η²_{i|s})^{1/2}`.
    pub fn element_value(&self, element: usize) -> f64 {
        let row = &self.values[element * self.species..(element + 1) * self.species];
        math::sqrt(row.iter().map(|v| v * v).sum())
    }

    /// `Σ_i Σ_s η²_{i|s}`.
    pub fn sum_of_squares(&self) -> f64 {
        self.global * self.global
    }
}

/// Per-element evaluation with reusable buffers.
struct Kernel<'a> {
    input: EstimatorInput<'a>,
    /// `(Mⁿ, Jⁿ⁻¹)` when the map does not vary in space.
    uniform: Option<(MetricSample, f64)>,
    /// The map at `tⁿ` and `tⁿ⁻¹` otherwise.
    frozen: Option<(MapAt<'a>, MapAt<'a>)>,
    /// Source values at quadrature points, per species, cell-major.
    sources: Option<&'a [Vec<f64>]>,
    un: Vec<f64>,
    up: Vec<f64>,
    f: Vec<f64>,
    s: Vec<f64>,
    grads: Vec<[f64; 2]>,
}

impl<'a> Kernel<'a> {
    fn new(input: EstimatorInput<'a>, sources: Option<&'a [Vec<f64>]>) -> Result<Self> {
        input.check()?;
        let m = input.kinetics.species();
        let uniform = if input.map.is_spatially_uniform() {
            let mn = input.map.metric_terms([0.5, 0.5], input.state.t)?;
            let jp = input.map.metric_terms([0.5, 0.5], input.prev.t)?.j;
            Some((mn, jp))
        } else {
            None
        };
        let frozen = match uniform {
            Some(_) => None,
            None => Some((input.map.at(input.state.t)?, input.map.at(input.prev.t)?)),
        };
        Ok(Self {
            input,
            uniform,
            frozen,
            sources,
            un: vec![0.0; m],
            up: vec![0.0; m],
            f: vec![0.0; m],
            s: vec![0.0; m],
            grads: vec![[0.0; 2]; m],
        })
    }

    /// `h_s² ‖r_i‖²_{L²(s)}` for every species.
    fn residual(&mut self, cell: usize, out: &mut [f64]) -> Result<()> {
        let input = self.input;
        let space = input.space;
        let geo = &space.geometry()[cell];
        let m = out.len();
        let tn = input.state.t;
        let tau = input.tau();
        for i in 0..m {
            self.grads[i] = space.gradient(&input.state.coeffs[i], cell);
        }
        out.fill(0.0);
        for (q, &xi) in geo.qp.iter().enumerate() {
            let (mn, jp, div_g) = match self.uniform {
                Some((mn, jp)) => (mn, jp, [0.0; 2]),
                None => {
                    let (at_n, at_p) = self.frozen.expect("set for non-uniform maps");
                    (at_n.metric(xi)?, at_p.metric(xi)?.j, at_n.divergence(xi))
                }
            };
            for i in 0..m {
                self.un[i] = space.value_at_qp(&input.state.coeffs[i], cell, q);
                self.up[i] = space.value_at_qp(&input.prev.coeffs[i], cell, q);
            }
            input.kinetics.eval(&self.un, &mut self.f);
            match (self.sources, input.source) {
                (Some(samples), _) => {
                    for i in 0..m {
                        self.s[i] = samples[i][cell * NQ + q];
                    }
                }
                (None, Some(src)) => src.eval(xi, tn, &mut self.s)?,
                (None, None) => self.s.fill(0.0),
            }
            let w = QUADRATURE[q].1 * geo.area;
            for i in 0..m {
                let r = (mn.j * self.un[i] - jp * self.up[i]) / tau
                    - input.diffusion[i] * math::dot2(div_g, self.grads[i])
                    - mn.j * (self.f[i] + self.s[i]);
                if !r.is_finite() {
                    return Err(Error::NonFiniteIntegrand { element: cell, point: q });
                }
                out[i] += w * r * r;
            }
        }
        let h2 = geo.diameter * geo.diameter;
        out.iter_mut().for_each(|v| *v *= h2);
        Ok(())
    }

    /// `½ Σ_e |e| ‖D_i ⟦G ∇u_i · ν⟧‖²_{L²(e)}` for every species, with the metric
    /// sampled at edge midpoints.
    fn jumps(&mut self, cell: usize, out: &mut [f64]) -> Result<()> {
        let input = self.input;
        let space = input.space;
        let geo = &space.geometry()[cell];
        out.fill(0.0);
        for k in 0..3 {
            let g = match self.uniform {
                Some((mn, _)) => mn.tensor(),
                None => self.frozen.expect("set for non-uniform maps").0.metric(geo.edge_mid[k])?.tensor(),
            };
            let nu = geo.edge_normal[k];
            let len = geo.edge_len[k];
            let nb = space.neighbors()[cell][k];
            for (i, o) in out.iter_mut().enumerate() {
                let u = &input.state.coeffs[i];
                let gs = space.gradient(u, cell);
                let d = match nb {
                    Some(n) => {
                        let gn = space.gradient(u, n);
                        [gs[0] - gn[0], gs[1] - gn[1]]
                    }
                    None => [2.0 * gs[0], 2.0 * gs[1]],
                };
                let jump = input.diffusion[i] * math::dot2(math::mat2_mul_vec(&g, d), nu);
                *o += 0.5 * len * (len * jump * jump);
            }
        }
        Ok(())
    }
}

/// `h_s² ‖r_i‖²_{L²(s)}` for one element and species.
pub fn element_residual(input: &EstimatorInput<'_>, cell: usize, species: usize) -> Result<f64> {
    let mut kernel = Kernel::new(*input, None)?;
    let mut out = vec![0.0; input.kinetics.species()];
    kernel.residual(cell, &mut out)?;
    Ok(out[species])
}

/// The edge-jump part of `η²_{i|s}` for one element and species.
pub fn edge_jump_term(input: &EstimatorInput<'_>, cell: usize, species: usize) -> Result<f64> {
    let mut kernel = Kernel::new(*input, None)?;
    let mut out = vec![0.0; input.kinetics.species()];
    kernel.jumps(cell, &mut out)?;
    Ok(out[species])
}

pub fn compute_indicators(input: &EstimatorInput<'_>) -> Result<IndicatorField> {
    indicators_with(input, None)
}

/// As [`compute_indicators`], reusing source values already sampled at the
/// quadrature points of `input.space` at `input.state.t`.
pub(crate) fn indicators_with(input: &EstimatorInput<'_>, sources: Option<&[Vec<f64>]>) -> Result<IndicatorField> {
    let mut kernel = Kernel::new(*input, sources)?;
    let m = input.kinetics.species();
    let n = input.space.num_cells();
    let mut values = vec![0.0; n * m];
    let mut res = vec![0.0; m];
    let mut jmp = vec![0.0; m];
    for cell in 0..n {
        kernel.residual(cell, &mut res)?;
        kernel.jumps(cell, &mut jmp)?;
        for i in 0..m {
            values[cell * m + i] = math::sqrt(res[i] + jmp[i]);
        }
    }
    IndicatorField::from_values(values, m, input.space.mesh_version(), input.state.t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::interpolant;
    use crate::kinetics::{NoReaction, Schnakenberg};
    use crate::mesh::ReferenceMesh;

    fn state(space: &P1Space, t: f64, coeffs: Vec<Vec<f64>>) -> SystemState {
        SystemState::new(t, coeffs, space).unwrap()
    }

    fn field_for(
        space: &P1Space,
        u: Vec<Vec<f64>>,
        prev: Vec<Vec<f64>>,
        kin: &dyn Kinetics,
        d: &[f64],
    ) -> IndicatorField {
        let map = DomainMap::identity(1.0).unwrap();
        let s = state(space, 0.1, u);
        let p = state(space, 0.0, prev);
        compute_indicators(&EstimatorInput {
            space,
            state: &s,
            prev: &p,
            map: &map,
            kinetics: kin,
            diffusion: d,
            source: None,
        })
        .unwrap()
    }

    #[test]
    fn zero_state_has_zero_estimator() {
        let space = P1Space::new(&ReferenceMesh::uniform(4).unwrap());
        let z = vec![0.0; space.dofs()];
        let f = field_for(&space, vec![z.clone()], vec![z], &NoReaction { species: 1 }, &[1.0]);
        assert_eq!(f.global(), 0.0);
    }

    #[test]
    fn steady_state_has_zero_residual() {
        let space = P1Space::new(&ReferenceMesh::uniform(4).unwrap());
        let kin = Schnakenberg::new(1.0, 0.1, 0.9).unwrap();
        let [a, b] = kin.steady_state();
        let u = vec![vec![a; space.dofs()], vec![b; space.dofs()]];
        let f = field_for(&space, u.clone(), u, &kin, &[1.0, 10.0]);
        assert!(f.global() <= 1e-12, "{}", f.global());
    }

    #[test]
    fn global_is_root_sum_of_squares() {
        let space = P1Space::new(&ReferenceMesh::uniform(5).unwrap());
        let u = interpolant(&space, &|p| math::cos(3.0 * p[0]) * p[1]).unwrap();
        let v = interpolant(&space, &|p| p[0] * p[0]).unwrap();
        let kin = Schnakenberg::new(1.0, 0.1, 0.9).unwrap();
        let f = field_for(&space, vec![u.clone(), v.clone()], vec![v, u], &kin, &[1.0, 10.0]);
        let sum: f64 = f.values().iter().map(|x| x * x).sum();
        assert!((f.sum_of_squares() - sum).abs() <= 1e-12 * sum);
        let per_element: f64 = (0..f.num_elements()).map(|s| f.element_value(s).powi(2)).sum();
        assert!((per_element - sum).abs() <= 1e-12 * sum);
    }

    #[test]
    fn linear_function_jumps() {
        // u = ξ₁: no interior jumps; only the vertical boundary carries flux ±D.
        let mesh = ReferenceMesh::uniform(2).unwrap();
        let space = P1Space::new(&mesh);
        let map = DomainMap::identity(1.0).unwrap();
        let u = interpolant(&space, &|p| p[0]).unwrap();
        let s = state(&space, 0.5, vec![u.clone()]);
        let p = state(&space, 0.0, vec![u]);
        let d = 3.0;
        let input = EstimatorInput {
            space: &space,
            state: &s,
            prev: &p,
            map: &map,
            kinetics: &NoReaction { species: 1 },
            diffusion: &[d],
            source: None,
        };
        for cell in 0..space.num_cells() {
            let geo = &space.geometry()[cell];
            let mut expect = 0.0;
            for k in 0..3 {
                if space.neighbors()[cell][k].is_none() && geo.edge_normal[k][0].abs() > 0.5 {
                    expect += 0.5 * geo.edge_len[k] * geo.edge_len[k] * (2.0 * d) * (2.0 * d);
                }
            }
            let got = edge_jump_term(&input, cell, 0).unwrap();
            assert!((got - expect).abs() <= 1e-12, "cell {cell}: {got} vs {expect}");
            // Constant in time and linear in space: the residual vanishes too.
            assert!(element_residual(&input, cell, 0).unwrap() <= 1e-24);
        }
    }

    #[test]
    fn hat_on_two_triangles() {
        // Hat at (1,0) is ξ₁−ξ₂ on the lower triangle and 0 on the upper one. The
        // diagonal normal (−1,1)/√2 gives jump −√2; the edges x=1 and y=0 each carry
        // a boundary jump of 2.
        let mesh = ReferenceMesh::uniform(1).unwrap();
        let space = P1Space::new(&mesh);
        let map = DomainMap::identity(1.0).unwrap();
        let u = interpolant(&space, &|p| if p == [1.0, 0.0] { 1.0 } else { 0.0 }).unwrap();
        let s = state(&space, 1.0, vec![u.clone()]);
        let p = state(&space, 0.0, vec![u]);
        let input = EstimatorInput {
            space: &space,
            state: &s,
            prev: &p,
            map: &map,
            kinetics: &NoReaction { species: 1 },
            diffusion: &[1.0],
            source: None,
        };
        let lower = (0..2)
            .find(|&c| space.cells()[c].iter().any(|&v| space.coords()[v] == [1.0, 0.0]))
            .unwrap();
        let interior = 0.5 * 2.0 * 2.0;
        let expect_lower = interior + 2.0 * (0.5 * 1.0 * 4.0);
        let expect_upper = interior;
        assert!((edge_jump_term(&input, lower, 0).unwrap() - expect_lower).abs() <= 1e-12);
        assert!((edge_jump_term(&input, 1 - lower, 0).unwrap() - expect_upper).abs() <= 1e-12);
    }

    #[test]
    fn residual_is_linear_in_diffusion_under_a_nonuniform_map() {
        let map = DomainMap::ridge_surface();
        let space = P1Space::new(&ReferenceMesh::uniform(4).unwrap());
        let u = interpolant(&space, &|p| p[0] - 2.0 * p[1]).unwrap();
        let s = state(&space, 300.0, vec![u.clone()]);
        let p = state(&space, 299.0, vec![u]);
        let eval = |d: f64| {
            let input = EstimatorInput {
                space: &space,
                state: &s,
                prev: &p,
                map: &map,
                kinetics: &NoReaction { species: 1 },
                diffusion: &[d],
                source: None,
            };
            element_residual(&input, 5, 0).unwrap()
        };
        // r = a − D b, so ‖r‖² is quadratic in D: check the second difference.
        let (r0, r1, r2) = (eval(0.0), eval(1.0), eval(2.0));
        let b2 = (r2 - 2.0 * r1 + r0) / 2.0;
        let r4 = eval(4.0);
        let predicted = r0 + 4.0 * (r1 - r0 - b2) + 16.0 * b2;
        assert!((r4 - predicted).abs() <= 1e-9 * r4.max(1e-30));
        assert!(b2 > 0.0);
    }

    #[test]
    fn identity_map_gives_the_classical_residual() {
        // With J = 1 and ∇·G = 0 the residual is (uⁿ − uⁿ⁻¹)/τ − f.
        let mesh = ReferenceMesh::uniform(8).unwrap();
        let space = P1Space::new(&mesh);
        let map = DomainMap::identity(1.0).unwrap();
        let u = interpolant(&space, &|p| math::cos(math::PI * p[0])).unwrap();
        let s = state(&space, 0.02, vec![u.clone()]);
        let mut prev = u.clone();
        prev.iter_mut().for_each(|v| *v *= 1.01);
        let p = state(&space, 0.01, vec![prev.clone()]);
        let input = EstimatorInput {
            space: &space,
            state: &s,
            prev: &p,
            map: &map,
            kinetics: &NoReaction { species: 1 },
            diffusion: &[1.0],
            source: None,
        };
        let cell = 17;
        let geo = &space.geometry()[cell];
        let mut hand = 0.0;
        for q in 0..NQ {
            let r = (space.value_at_qp(&u, cell, q) - space.value_at_qp(&prev, cell, q)) / 0.01;
            hand += QUADRATURE[q].1 * geo.area * r * r;
        }
        hand *= geo.diameter * geo.diameter;
        let got = element_residual(&input, cell, 0).unwrap();
        assert!((got - hand).abs() <= 1e-12 * hand);
    }

    #[test]
    fn element_order_does_not_change_indicators() {
        let mesh = ReferenceMesh::uniform(4).unwrap();
        let space = P1Space::new(&mesh);
        let mut cells = space.cells().to_vec();
        cells.reverse();
        let perm = P1Space::from_parts(space.coords().to_vec(), cells, space.mesh_version()).unwrap();
        let map = DomainMap::ridge_surface();
        let kin = Schnakenberg::new(1.0, 0.1, 0.9).unwrap();
        let g = |p: [f64; 2]| math::sin(4.0 * p[0]) + p[1] * p[1];
        let u = interpolant(&space, &g).unwrap();
        let v = interpolant(&space, &|p| 1.0 - g(p)).unwrap();
        let field = |sp: &P1Space| {
            let s = SystemState::new(10.0, vec![u.clone(), v.clone()], sp).unwrap();
            let p = SystemState::new(9.0, vec![v.clone(), u.clone()], sp).unwrap();
            compute_indicators(&EstimatorInput {
                space: sp,
                state: &s,
                prev: &p,
                map: &map,
                kinetics: &kin,
                diffusion: &[0.01, 1.0],
                source: None,
            })
            .unwrap()
        };
        let a = field(&space);
        let b = field(&perm);
        let n = space.num_cells();
        for cell in 0..n {
            for i in 0..2 {
                assert_eq!(a.value(cell, i).to_bits(), b.value(n - 1 - cell, i).to_bits());
            }
        }
    }
}
