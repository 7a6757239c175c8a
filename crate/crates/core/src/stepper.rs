//! The modified implicit Euler step and the time loop.
//!
//! Species `i` advances by solving
//!
//! ```text
//! (Mⁿ + τ D_i Sⁿ + τ Cⁿ_i) U_iⁿ = Mⁿ⁻¹ U_iⁿ⁻¹ + τ bⁿ_i
//! ```
//!
//! where `Cⁿ_i` is the mass matrix weighted by the implicit part `c_i(Uⁿ⁻¹)` of the
//! kinetics split and `bⁿ_i` the load of `g_i(Uⁿ⁻¹) + s_i(tⁿ)`. Cross-species terms are
//! lagged, so the species decouple.

use alloc::vec;
use alloc::vec::Vec;

use crate::adapt::{adapt_step_logged, AdaptConfig, PreviousState};
use crate::error::{Error, Result};
use crate::estimator::{indicators_with, EstimatorInput, IndicatorField};
use crate::fem::{self, interpolant, P1Space, SystemState, NQ, QUADRATURE};
use crate::geometry::{DomainMap, MetricSample};
use crate::kinetics::{lipschitz_estimate, Kinetics, SourceTerm};
use crate::math;
use crate::mesh::ReferenceMesh;
use crate::solver::{solve_linear, SolverConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct StepConfig {
    pub tau: f64,
    pub t_final: f64,
    pub diffusion: Vec<f64>,
    pub solver: SolverConfig,
}

impl StepConfig {
    pub fn new(tau: f64, t_final: f64, diffusion: Vec<f64>) -> Result<Self> {
        let cfg = Self {
            tau,
            t_final,
            diffusion,
            solver: SolverConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidArgument(msg));
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return bad(alloc::format!("time step must be positive, got {}", self.tau));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return bad(alloc::format!("final time must be positive, got {}", self.t_final));
        }
        if self.diffusion.is_empty() || self.diffusion.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return bad(alloc::format!(
                "diffusion coefficients must be positive, got {:?}",
                self.diffusion
            ));
        }
        self.solver.validate()
    }

    /// Number of steps `N = round(T/τ)`.
    pub fn num_steps(&self) -> usize {
        let n = math::round(self.t_final / self.tau) as usize;
        n.max(1)
    }

    /// `tⁿ = nτ`, with the last level pinned to `T`.
    pub fn time_at(&self, n: usize) -> f64 {
        if n >= self.num_steps() {
            self.t_final
        } else {
            n as f64 * self.tau
        }
    }
}

/// Result of one accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: SystemState,
    /// Source values at the quadrature points at `tⁿ`, per species.
    pub sources: Vec<Vec<f64>>,
    pub solver_iterations: usize,
    /// `(Σ_i ‖Uⁿ_i − Uⁿ⁻¹_i‖²_{L²(Ω_tⁿ)})^{1/2}` with `Uⁿ⁻¹` on the current mesh.
    pub delta_u: f64,
    /// `|Ω_tⁿ| = 1ᵀ Mⁿ 1`.
    pub domain_measure: f64,
}

/// Source values at every quadrature point, per species, cell-major.
pub(crate) fn sample_source(
    space: &P1Space,
    source: Option<&dyn SourceTerm>,
    t: f64,
    species: usize,
) -> Result<Vec<Vec<f64>>> {
    let n = space.num_cells() * NQ;
    let mut out = vec![vec![0.0; n]; species];
    let Some(src) = source else {
        return Ok(out);
    };
    let mut buf = vec![0.0; species];
    for (cell, geo) in space.geometry().iter().enumerate() {
        for (q, &xi) in geo.qp.iter().enumerate() {
            src.eval(xi, t, &mut buf)?;
            for i in 0..species {
                out[i][cell * NQ + q] = buf[i];
            }
        }
    }
    Ok(out)
}

/// Advances `prev` (which must live on `space`) to `t_next`.
pub fn step_to(
    prev: &SystemState,
    t_next: f64,
    space: &P1Space,
    map: &DomainMap,
    kinetics: &dyn Kinetics,
    cfg: &StepConfig,
    source: Option<&dyn SourceTerm>,
) -> Result<StepOutcome> {
    prev.check(space)?;
    let m = kinetics.species();
    if prev.species() != m || cfg.diffusion.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: if prev.species() != m { prev.species() } else { cfg.diffusion.len() },
        });
    }
    let tau = t_next - prev.t;
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "target time {t_next} does not follow {}",
            prev.t
        )));
    }
    let metrics_n = fem::sample_metrics(space, map, t_next)?;
    let metrics_p = fem::sample_metrics(space, map, prev.t)?;
    let mass_p = fem::weighted_mass(space, &metrics_p, |_, _| 1.0)?;
    let stiff = fem::stiffness_from(space, &metrics_n, 1.0);
    let sources = sample_source(space, source, t_next, m)?;

    let nq = space.num_cells() * NQ;
    let prev_q: Vec<Vec<f64>> = prev.coeffs.iter().map(|u| space.values_at_quadrature(u)).collect();
    let mut implicit = vec![vec![0.0; nq]; m];
    let mut explicit = vec![vec![0.0; nq]; m];
    let mut u = vec![0.0; m];
    for k in 0..nq {
        for i in 0..m {
            u[i] = prev_q[i][k];
        }
        for i in 0..m {
            let split = kinetics.split(&u, i);
            implicit[i][k] = split.implicit;
            explicit[i][k] = split.explicit + sources[i][k];
        }
    }

    let mut coeffs = Vec::with_capacity(m);
    let mut iterations = 0;
    for i in 0..m {
        let mut a = fem::weighted_mass(space, &metrics_n, |c, q| 1.0 + tau * implicit[i][c * NQ + q])?;
        a.add_scaled(tau * cfg.diffusion[i], &stiff);
        let load = fem::load_from(space, &metrics_n, |c, q| explicit[i][c * NQ + q])?;
        let mut rhs = mass_p.apply(&prev.coeffs[i]);
        for (r, b) in rhs.iter_mut().zip(&load) {
            *r += tau * b;
        }
        let rep = solve_linear(&a, &rhs, Some(&prev.coeffs[i]), &cfg.solver)?;
        iterations += rep.iterations;
        coeffs.push(rep.x);
    }

    let (delta_u, domain_measure) = diagnostics(space, &metrics_n, &coeffs, &prev.coeffs);
    Ok(StepOutcome {
        state: SystemState {
            t: t_next,
            coeffs,
            mesh_version: space.mesh_version(),
        },
        sources,
        solver_iterations: iterations,
        delta_u,
        domain_measure,
    })
}

/// One step of length `cfg.tau` from `prev`.
pub fn step(
    prev: &SystemState,
    space: &P1Space,
    map: &DomainMap,
    kinetics: &dyn Kinetics,
    cfg: &StepConfig,
    source: Option<&dyn SourceTerm>,
) -> Result<StepOutcome> {
    let mut t_next = prev.t + cfg.tau;
    if t_next > cfg.t_final + 0.5 * cfg.tau {
        return Err(Error::TimeOutOfRange {
            t: t_next,
            horizon: cfg.t_final,
        });
    }
    if t_next > cfg.t_final {
        t_next = cfg.t_final;
    }
    step_to(prev, t_next, space, map, kinetics, cfg, source)
}

fn diagnostics(space: &P1Space, metrics: &[MetricSample], new: &[Vec<f64>], old: &[Vec<f64>]) -> (f64, f64) {
    let mut change = 0.0;
    let mut measure = 0.0;
    for (cell, geo) in space.geometry().iter().enumerate() {
        for q in 0..NQ {
            let w = QUADRATURE[q].1 * geo.area * metrics[cell * NQ + q].j;
            measure += w;
            for (a, b) in new.iter().zip(old) {
                let d = space.value_at_qp(a, cell, q) - space.value_at_qp(b, cell, q);
                change += w * d * d;
            }
        }
    }
    (math::sqrt(change), measure)
}

/// Diagnostics of one accepted time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub dofs: usize,
    pub elements: usize,
    pub eta_global: f64,
    pub delta_u: f64,
    pub domain_measure: f64,
    pub adapt_iterations: usize,
    pub cap_hit: bool,
    pub solver_iterations: usize,
    /// `max_vertices ‖f′(Uⁿ)‖_∞`.
    pub lipschitz: f64,
}

/// What the observer sees after the initial interpolation (`record == None`) and
/// after every accepted step.
pub struct StepView<'a> {
    pub record: Option<&'a StepRecord>,
    pub mesh: &'a ReferenceMesh,
    pub space: &'a P1Space,
    pub state: &'a SystemState,
    pub field: Option<&'a IndicatorField>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<StepRecord>,
    pub final_state: SystemState,
    pub final_mesh: ReferenceMesh,
}

/// A step plus its indicators on a fixed mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct SolvedStep {
    pub outcome: StepOutcome,
    pub field: IndicatorField,
}

/// [`step_to`] followed by the indicators of the new state.
pub fn solve_and_estimate(
    prev: &SystemState,
    t_next: f64,
    space: &P1Space,
    map: &DomainMap,
    kinetics: &dyn Kinetics,
    cfg: &StepConfig,
    source: Option<&dyn SourceTerm>,
) -> Result<SolvedStep> {
    let outcome = step_to(prev, t_next, space, map, kinetics, cfg, source)?;
    let input = EstimatorInput {
        space,
        state: &outcome.state,
        prev,
        map,
        kinetics,
        diffusion: &cfg.diffusion,
        source,
    };
    let field = indicators_with(&input, source.map(|_| outcome.sources.as_slice()))?;
    Ok(SolvedStep { outcome, field })
}

/// Runs from `t = 0` to `cfg.t_final`. The initial state is the Lagrange interpolant of
/// `initial(species, ξ)`. With `adapt` set, every step runs the adaptation loop.
#[allow(clippy::too_many_arguments)]
pub fn run(
    initial: &dyn Fn(usize, [f64; 2]) -> f64,
    mesh: ReferenceMesh,
    map: &DomainMap,
    kinetics: &dyn Kinetics,
    cfg: &StepConfig,
    source: Option<&dyn SourceTerm>,
    adapt: Option<&AdaptConfig>,
    observer: &mut dyn FnMut(&StepView<'_>) -> Result<()>,
) -> Result<RunOutput> {
    cfg.validate()?;
    if let Some(a) = adapt {
        a.validate()?;
    }
    let m = kinetics.species();
    if cfg.diffusion.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: cfg.diffusion.len(),
        });
    }
    if cfg.t_final > map.horizon() * (1.0 + 1e-12) {
        return Err(Error::TimeOutOfRange {
            t: cfg.t_final,
            horizon: map.horizon(),
        });
    }

    let initial_state = |space: &P1Space| -> Result<SystemState> {
        let coeffs = (0..m)
            .map(|i| interpolant(space, &|p| initial(i, p)))
            .collect::<Result<Vec<_>>>()?;
        SystemState::new(0.0, coeffs, space)
    };

    let mut mesh = mesh;
    let mut space = P1Space::new(&mesh);
    let mut state = initial_state(&space)?;
    observer(&StepView {
        record: None,
        mesh: &mesh,
        space: &space,
        state: &state,
        field: None,
    })?;

    let mut records = Vec::with_capacity(cfg.num_steps());
    let mut scratch = Vec::new();
    let mut capped_streak = 0usize;
    for n in 1..=cfg.num_steps() {
        let t_next = cfg.time_at(n);
        let (new_mesh, new_space, solved, iterations, cap_hit) = match adapt {
            Some(acfg) => {
                let previous = if n == 1 {
                    PreviousState::Initial(initial)
                } else {
                    PreviousState::Transfer(&state)
                };
                // only the first step of a capped streak is reported at warn level
                let level = if capped_streak == 0 { log::Level::Warn } else { log::Level::Debug };
                let out = adapt_step_logged(&previous, &mesh, t_next, map, kinetics, cfg, source, acfg, level)?;
                if out.cap_hit {
                    capped_streak += 1;
                } else if capped_streak > 0 {
                    log::warn!("t = {t_next}: tolerance met again after {capped_streak} capped steps");
                    capped_streak = 0;
                }
                (out.mesh, out.space, out.solved, out.iterations, out.cap_hit)
            }
            None => {
                let solved = solve_and_estimate(&state, t_next, &space, map, kinetics, cfg, source)?;
                (mesh.clone(), space.clone(), solved, 0, false)
            }
        };
        let SolvedStep { outcome, field } = solved;
        let lipschitz = lipschitz_sup(kinetics, &outcome.state, &mut scratch);
        log::debug!("t = {t_next}: Lipschitz estimate of the kinetics {lipschitz:e}");
        let record = StepRecord {
            step: n,
            t: t_next,
            dofs: new_space.dofs(),
            elements: new_space.num_cells(),
            eta_global: field.global(),
            delta_u: outcome.delta_u,
            domain_measure: outcome.domain_measure,
            adapt_iterations: iterations,
            cap_hit,
            solver_iterations: outcome.solver_iterations,
            lipschitz,
        };
        mesh = new_mesh;
        space = new_space;
        state = outcome.state;
        observer(&StepView {
            record: Some(&record),
            mesh: &mesh,
            space: &space,
            state: &state,
            field: Some(&field),
        })?;
        records.push(record);
    }
    if capped_streak > 1 {
        log::warn!("the last {capped_streak} steps stopped on an adaptation cap");
    }
    Ok(RunOutput {
        records,
        final_state: state,
        final_mesh: mesh,
    })
}

fn lipschitz_sup(kinetics: &dyn Kinetics, state: &SystemState, scratch: &mut Vec<f64>) -> f64 {
    let m = state.species();
    let mut u = vec![0.0; m];
    let mut worst: f64 = 0.0;
    for v in 0..state.coeffs.first().map_or(0, Vec::len) {
        for i in 0..m {
            u[i] = state.coeffs[i][v];
        }
        worst = worst.max(lipschitz_estimate(kinetics, &u, scratch));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::{ManufacturedCase, ManufacturedSource, NoReaction, Schnakenberg};

    fn identity() -> DomainMap {
        DomainMap::identity(1.0).unwrap()
    }

    #[test]
    fn num_steps_and_times() {
        let cfg = StepConfig::new(0.1, 1.0, vec![1.0]).unwrap();
        assert_eq!(cfg.num_steps(), 10);
        assert_eq!(cfg.time_at(10), 1.0);
        let one = StepConfig::new(0.25, 0.25, vec![1.0]).unwrap();
        assert_eq!(one.num_steps(), 1);
        assert!(StepConfig::new(0.0, 1.0, vec![1.0]).is_err());
        assert!(StepConfig::new(0.1, 1.0, vec![-1.0]).is_err());
    }

    #[test]
    fn steady_state_is_a_fixed_point() {
        let mesh = ReferenceMesh::uniform(8).unwrap();
        let space = P1Space::new(&mesh);
        let kin = Schnakenberg::new(1.0, 0.1, 0.9).unwrap();
        let [a, b] = kin.steady_state();
        let cfg = StepConfig::new(1e-2, 1.0, vec![1.0, 10.0]).unwrap();
        let mut state = SystemState::new(0.0, vec![vec![a; space.dofs()], vec![b; space.dofs()]], &space).unwrap();
        for _ in 0..10 {
            let next = step(&state, &space, &identity(), &kin, &cfg, None).unwrap().state;
            for (x, y) in next.coeffs.iter().flatten().zip(state.coeffs.iter().flatten()) {
                assert!((x - y).abs() <= 1e-8);
            }
            state = next;
        }
    }

    #[test]
    fn heat_mode_decays_at_the_right_rate() {
        let mesh = ReferenceMesh::uniform(16).unwrap();
        let space = P1Space::new(&mesh);
        let d = 0.5;
        let cfg = StepConfig::new(1e-3, 0.1, vec![d]).unwrap();
        let u0 = interpolant(&space, &|p| math::cos(math::PI * p[0])).unwrap();
        let mut state = SystemState::new(0.0, vec![u0.clone()], &space).unwrap();
        let kin = NoReaction { species: 1 };
        for _ in 0..cfg.num_steps() {
            state = step(&state, &space, &identity(), &kin, &cfg, None).unwrap().state;
        }
        let ratio = state.coeffs[0][0] / u0[0];
        let observed = -math::ln(ratio) / cfg.t_final;
        let exact = d * math::PI * math::PI;
        assert!((observed / exact - 1.0).abs() < 0.05, "{observed} vs {exact}");
    }

    #[test]
    fn zero_kinetics_conserves_mass_on_a_growing_domain() {
        let mesh = ReferenceMesh::uniform(6).unwrap();
        let space = P1Space::new(&mesh);
        let map = DomainMap::ridge_surface();
        let cfg = StepConfig::new(5.0, 100.0, vec![1.0]).unwrap();
        let u0 = interpolant(&space, &|p| 1.0 + p[0] * p[1]).unwrap();
        let mut state = SystemState::new(0.0, vec![u0], &space).unwrap();
        let kin = NoReaction { species: 1 };
        for _ in 0..5 {
            let mp = fem::assemble_mass(&space, &map, state.t).unwrap();
            let before: f64 = mp.apply(&state.coeffs[0]).iter().sum();
            state = step(&state, &space, &map, &kin, &cfg, None).unwrap().state;
            let mn = fem::assemble_mass(&space, &map, state.t).unwrap();
            let after: f64 = mn.apply(&state.coeffs[0]).iter().sum();
            assert!((after - before).abs() <= 1e-10 * before.abs());
        }
    }

    #[test]
    fn time_error_is_first_order_in_tau() {
        // Same mesh, τ halved twice: the spatial error cancels in the differences.
        let mesh = ReferenceMesh::uniform(12).unwrap();
        let map = DomainMap::benchmark_dilation();
        let kin = Schnakenberg::new(1.0, 0.1, 0.9).unwrap();
        let case = ManufacturedCase::schnakenberg_cosine(kin, [1.0, 10.0]);
        let src = ManufacturedSource {
            case: case.clone(),
            map: map.clone(),
        };
        let init = |i: usize, p: [f64; 2]| {
            let mut v = [0.0; 2];
            case.exact.value(p, 0.0, &mut v);
            v[i]
        };
        let solve = |tau: f64| {
            let cfg = StepConfig::new(tau, 0.32, vec![1.0, 10.0]).unwrap();
            run(&init, mesh.clone(), &map, &kin, &cfg, Some(&src), None, &mut |_| Ok(()))
                .unwrap()
                .final_state
                .coeffs
        };
        let (a, b, c) = (solve(0.04), solve(0.02), solve(0.01));
        let diff = |x: &[Vec<f64>], y: &[Vec<f64>]| {
            x.iter()
                .flatten()
                .zip(y.iter().flatten())
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max)
        };
        let rate = math::ln(diff(&a, &b) / diff(&b, &c)) / math::ln(2.0);
        assert!((rate - 1.0).abs() < 0.2, "rate {rate}");
    }

    #[test]
    fn zero_data_stays_zero_and_one_step_for_t_equal_tau() {
        let mesh = ReferenceMesh::uniform(3).unwrap();
        let cfg = StepConfig::new(0.5, 0.5, vec![1.0, 2.0]).unwrap();
        let kin = NoReaction { species: 2 };
        let mut seen = 0;
        let out = run(&|_, _| 0.0, mesh, &identity(), &kin, &cfg, None, None, &mut |v| {
            seen += 1;
            assert!(v.state.coeffs.iter().flatten().all(|&x| x == 0.0));
            Ok(())
        })
        .unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(seen, 2);
        assert_eq!(out.final_state.t, 0.5);
    }

    #[test]
    fn run_reports_domain_measure() {
        let mesh = ReferenceMesh::uniform(4).unwrap();
        let map = DomainMap::benchmark_dilation();
        let cfg = StepConfig::new(0.125, 1.0, vec![1.0]).unwrap();
        let kin = NoReaction { species: 1 };
        let out = run(&|_, p| p[0], mesh, &map, &kin, &cfg, None, None, &mut |_| Ok(())).unwrap();
        for r in &out.records {
            let rho = 1.0 + math::sin(math::PI * r.t);
            assert!((r.domain_measure - rho * rho).abs() <= 1e-12);
        }
    }

    #[test]
    fn run_rejects_mismatched_species() {
        let mesh = ReferenceMesh::uniform(2).unwrap();
        let cfg = StepConfig::new(0.5, 1.0, vec![1.0]).unwrap();
        let kin = Schnakenberg::new(1.0, 0.1, 0.9).unwrap();
        let r = run(&|_, _| 0.0, mesh, &identity(), &kin, &cfg, None, None, &mut |_| Ok(()));
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }
}
