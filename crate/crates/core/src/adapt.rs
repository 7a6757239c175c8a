//! Equidistribution marking and the per-step solve, estimate, mark, adapt loop.
//!
//! ```text
//! solve on T_0, estimate
//! while η > tol:
//!     refine s  if η_{|s} > θ·tol/N
//!     coarsen s if η_{|s} + η_{|sibling(s)} ≤ θ_c·tol/N
//!     adapt, transfer the previous state, solve, estimate
//! ```

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::estimator::IndicatorField;
use crate::fem::{interpolant, P1Space, SystemState};
use crate::geometry::DomainMap;
use crate::kinetics::{Kinetics, SourceTerm};
use crate::mesh::{interpolate_between, MarkSet, ReferenceMesh};
use crate::stepper::{solve_and_estimate, SolvedStep, StepConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptConfig {
    pub tol: f64,
    pub theta: f64,
    pub theta_coarsen: f64,
    pub max_iterations: usize,
    pub max_dofs: usize,
    pub coarsen: bool,
}

impl AdaptConfig {
    /// `θ = 0.8`, `θ_c = 0.1`, at most 20 iterations per step and 200 000 dofs.
    pub fn new(tol: f64) -> Result<Self> {
        let cfg = Self {
            tol,
            theta: 0.8,
            theta_coarsen: 0.1,
            max_iterations: 20,
            max_dofs: 200_000,
            coarsen: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidArgument(msg));
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return bad(alloc::format!("tol must be positive, got {}", self.tol));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad(alloc::format!("theta must lie in (0, 1), got {}", self.theta));
        }
        if !(self.theta_coarsen > 0.0 && self.theta_coarsen < self.theta) {
            return bad(alloc::format!(
                "theta_coarsen must lie in (0, theta = {}), got {}",
                self.theta,
                self.theta_coarsen
            ));
        }
        if self.max_dofs < 4 {
            return bad(alloc::format!("max_dofs must be at least 4, got {}", self.max_dofs));
        }
        Ok(())
    }
}

/// Equidistribution marks for `field` on `mesh`, with `N` the element count.
pub fn mark(field: &IndicatorField, mesh: &ReferenceMesh, cfg: &AdaptConfig) -> Result<MarkSet> {
    let n = mesh.num_triangles();
    if field.num_elements() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: field.num_elements(),
        });
    }
    let refine_at = cfg.theta * cfg.tol / n as f64;
    let coarsen_at = cfg.theta_coarsen * cfg.tol / n as f64;
    let mut marks = MarkSet::new();
    for s in 0..n {
        let eta = field.element_value(s);
        if eta > refine_at {
            marks.refine.insert(s);
        } else if cfg.coarsen {
            if let Some(sib) = mesh.sibling(s) {
                if eta + field.element_value(sib) <= coarsen_at {
                    marks.coarsen.insert(s);
                }
            }
        }
    }
    marks.make_disjoint();
    Ok(marks)
}

/// Refines `marks.refine`, then coarsens whatever of `marks.coarsen` is still active.
pub fn apply_marks(mesh: &ReferenceMesh, marks: &MarkSet) -> Result<ReferenceMesh> {
    let keys: Vec<_> = marks.coarsen.iter().map(|&s| mesh.key(s)).collect();
    let refined = mesh.refine(&MarkSet::refine_only(marks.refine.iter().copied()))?;
    let coarsen: BTreeSet<usize> = keys.into_iter().filter_map(|k| refined.index_of(k)).collect();
    if coarsen.is_empty() {
        return Ok(refined);
    }
    refined.coarsen(&MarkSet::coarsen_only(coarsen))
}

/// Where the previous time level comes from on each trial mesh.
pub enum PreviousState<'a> {
    /// A state on the mesh the step starts from; transferred to every trial mesh.
    Transfer(&'a SystemState),
    /// Initial data at `t = 0`, interpolated afresh on every trial mesh.
    Initial(&'a dyn Fn(usize, [f64; 2]) -> f64),
}

#[derive(Debug, Clone)]
pub struct AdaptOutcome {
    pub mesh: ReferenceMesh,
    pub space: P1Space,
    pub solved: SolvedStep,
    /// Number of mesh adaptations performed.
    pub iterations: usize,
    /// Whether the loop stopped on a cap rather than on `η ≤ tol`.
    pub cap_hit: bool,
    /// Global estimator after every solve.
    pub history: Vec<f64>,
}

fn previous_on(
    prev: &PreviousState<'_>,
    origin: &ReferenceMesh,
    mesh: &ReferenceMesh,
    space: &P1Space,
    species: usize,
) -> Result<SystemState> {
    match prev {
        PreviousState::Transfer(state) => {
            if state.mesh_version != origin.version() {
                return Err(Error::InvalidArgument(alloc::format!(
                    "previous state is bound to mesh version {}, the step starts on {}",
                    state.mesh_version,
                    origin.version()
                )));
            }
            let coeffs = state
                .coeffs
                .iter()
                .map(|u| interpolate_between(origin, mesh, u))
                .collect::<Result<Vec<_>>>()?;
            SystemState::new(state.t, coeffs, space)
        }
        PreviousState::Initial(f) => {
            let coeffs = (0..species)
                .map(|i| interpolant(space, &|p| f(i, p)))
                .collect::<Result<Vec<_>>>()?;
            SystemState::new(0.0, coeffs, space)
        }
    }
}

/// One adaptive time step from `mesh` to `t_next`.
#[allow(clippy::too_many_arguments)]
pub fn adapt_step(
    prev: &PreviousState<'_>,
    mesh: &ReferenceMesh,
    t_next: f64,
    map: &DomainMap,
    kinetics: &dyn Kinetics,
    cfg: &StepConfig,
    source: Option<&dyn SourceTerm>,
    acfg: &AdaptConfig,
) -> Result<AdaptOutcome> {
    adapt_step_logged(prev, mesh, t_next, map, kinetics, cfg, source, acfg, log::Level::Warn)
}

/// [`adapt_step`] reporting a stop on a cap at `level`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn adapt_step_logged(
    prev: &PreviousState<'_>,
    mesh: &ReferenceMesh,
    t_next: f64,
    map: &DomainMap,
    kinetics: &dyn Kinetics,
    cfg: &StepConfig,
    source: Option<&dyn SourceTerm>,
    acfg: &AdaptConfig,
    level: log::Level,
) -> Result<AdaptOutcome> {
    let start_version = mesh.version();
    let mut current = mesh.clone();
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let space = P1Space::new(&current);
        let prev_here = previous_on(prev, mesh, &current, &space, kinetics.species())?;
        let solved = solve_and_estimate(&prev_here, t_next, &space, map, kinetics, cfg, source)?;
        let eta = solved.field.global();
        history.push(eta);
        let finish = |mesh, space, solved, cap_hit| {
            Ok(AdaptOutcome {
                mesh,
                space,
                solved,
                iterations,
                cap_hit,
                history: history.clone(),
            })
        };
        if eta <= acfg.tol {
            return finish(current, space, solved, false);
        }
        if iterations >= acfg.max_iterations {
            log::log!(
                level,
                "t = {t_next}: adaptation stopped after {iterations} iterations with eta = {eta:e} > tol = {:e}",
                acfg.tol
            );
            return finish(current, space, solved, true);
        }
        if space.dofs() >= acfg.max_dofs {
            log::log!(
                level,
                "t = {t_next}: dof cap {} reached with eta = {eta:e} > tol = {:e}",
                acfg.max_dofs,
                acfg.tol
            );
            return finish(current, space, solved, true);
        }
        let mut marks = mark(&solved.field, &current, acfg)?;
        marks.coarsen.retain(|&s| current.born_version(s) <= start_version);
        if marks.refine.is_empty() {
            log::log!(level, "t = {t_next}: no element exceeds the refinement threshold but eta = {eta:e} > tol");
            return finish(current, space, solved, true);
        }
        current = apply_marks(&current, &marks)?;
        iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::{ManufacturedCase, ManufacturedSource, Schnakenberg};
    use alloc::vec;
    use proptest::prelude::*;

    fn field(values: Vec<f64>) -> IndicatorField {
        IndicatorField::from_values(values, 1, 0, 0.0).unwrap()
    }

    fn adapt_cfg(tol: f64) -> AdaptConfig {
        AdaptConfig::new(tol).unwrap()
    }

    #[test]
    fn uniform_field_below_threshold() {
        let mesh = ReferenceMesh::uniform(5).unwrap();
        let n = mesh.num_triangles();
        let tol = 1e-2;
        let marks = mark(&field(vec![tol / (2.0 * n as f64); n]), &mesh, &adapt_cfg(tol)).unwrap();
        assert!(marks.refine.is_empty());
    }

    #[test]
    fn single_spike() {
        let mesh = ReferenceMesh::uniform(5).unwrap();
        let n = mesh.num_triangles();
        let mut v = vec![0.0; n];
        v[17] = 0.3;
        let marks = mark(&field(v), &mesh, &adapt_cfg(0.3)).unwrap();
        assert_eq!(marks.refine.into_iter().collect::<Vec<_>>(), [17]);
    }

    #[test]
    fn coarsening_needs_small_sibling_sum() {
        let mesh = ReferenceMesh::uniform(2).unwrap();
        let mesh = mesh.refine(&MarkSet::refine_only(0..mesh.num_triangles())).unwrap();
        let n = mesh.num_triangles();
        let c = adapt_cfg(1.0);
        let small = 0.4 * c.theta_coarsen / n as f64;
        let mut v = vec![small; n];
        let s = 3;
        let sib = mesh.sibling(s).unwrap();
        v[sib] = 0.7 * c.theta_coarsen / n as f64;
        let marks = mark(&field(v), &mesh, &c).unwrap();
        assert!(!marks.coarsen.contains(&s) && !marks.coarsen.contains(&sib));
        assert!(marks.coarsen.len() == n - 2);
        let off = AdaptConfig { coarsen: false, ..c };
        assert!(mark(&field(vec![0.0; n]), &mesh, &off).unwrap().coarsen.is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(AdaptConfig::new(0.0).is_err());
        assert!(AdaptConfig { theta: 1.5, ..adapt_cfg(1.0) }.validate().is_err());
        assert!(AdaptConfig { theta_coarsen: 0.9, ..adapt_cfg(1.0) }.validate().is_err());
    }

    proptest! {
        #[test]
        fn marks_match_brute_force(values in proptest::collection::vec(0.0..1e-2f64, 32), tol in 1e-3..1.0f64) {
            let mesh = ReferenceMesh::uniform(4).unwrap();
            let n = mesh.num_triangles();
            let f = field(values.clone());
            let c = adapt_cfg(tol);
            let marks = mark(&f, &mesh, &c).unwrap();
            let brute: BTreeSet<usize> = (0..n).filter(|&s| values[s] > c.theta * tol / n as f64).collect();
            prop_assert_eq!(&marks.refine, &brute);
            prop_assert!(marks.refine.is_disjoint(&marks.coarsen));
            // A larger tolerance never marks more.
            let wider = mark(&f, &mesh, &adapt_cfg(10.0 * tol)).unwrap();
            prop_assert!(wider.refine.is_subset(&marks.refine));
            prop_assert_eq!(mark(&f, &mesh, &c).unwrap(), marks);
        }
    }

    fn benchmark() -> (DomainMap, Schnakenberg, ManufacturedSource, StepConfig) {
        let map = DomainMap::benchmark_dilation();
        let kin = Schnakenberg::new(1.0, 0.1, 0.9).unwrap();
        let case = ManufacturedCase::schnakenberg_cosine(kin, [1.0, 10.0]);
        let src = ManufacturedSource { case, map: map.clone() };
        let cfg = StepConfig::new(1e-3, 1.0, vec![1.0, 10.0]).unwrap();
        (map, kin, src, cfg)
    }

    fn exact_initial(src: &ManufacturedSource) -> impl Fn(usize, [f64; 2]) -> f64 + '_ {
        move |i, p| {
            let mut v = [0.0; 2];
            src.case.exact.value(p, 0.0, &mut v);
            v[i]
        }
    }

    #[test]
    fn loop_is_idle_when_the_estimate_is_below_tol() {
        let (map, kin, src, cfg) = benchmark();
        let mesh = ReferenceMesh::uniform(4).unwrap();
        let init = exact_initial(&src);
        let out = adapt_step(&PreviousState::Initial(&init), &mesh, 1e-3, &map, &kin, &cfg, Some(&src), &cfg_big())
            .unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.mesh.version(), mesh.version());
        assert!(!out.cap_hit);

        fn cfg_big() -> AdaptConfig {
            AdaptConfig::new(1e6).unwrap()
        }
    }

    #[test]
    fn loop_reaches_tol_with_decreasing_estimates() {
        let (map, kin, src, cfg) = benchmark();
        let mesh = ReferenceMesh::uniform(4).unwrap();
        let init = exact_initial(&src);
        let first = adapt_step(&PreviousState::Initial(&init), &mesh, 1e-3, &map, &kin, &cfg, Some(&src), &AdaptConfig::new(1e6).unwrap())
            .unwrap();
        let tol = 0.5 * first.solved.field.global();
        let out = adapt_step(&PreviousState::Initial(&init), &mesh, 1e-3, &map, &kin, &cfg, Some(&src), &adapt_cfg(tol)).unwrap();
        assert!(!out.cap_hit);
        assert!(out.iterations >= 1);
        assert!(*out.history.last().unwrap() <= tol);
        for w in out.history.windows(2) {
            assert!(w[1] <= 1.1 * w[0], "{:?}", out.history);
        }
        out.mesh.validate().unwrap();
    }

    #[test]
    fn refined_elements_are_not_coarsened_in_the_same_step() {
        let (map, kin, src, cfg) = benchmark();
        let mesh = ReferenceMesh::uniform(3).unwrap();
        let init = exact_initial(&src);
        // Huge θ_c relative to θ makes everything small a coarsening candidate.
        let acfg = AdaptConfig {
            theta: 0.99,
            theta_coarsen: 0.98,
            max_iterations: 3,
            ..AdaptConfig::new(1e-6).unwrap()
        };
        let out = adapt_step(&PreviousState::Initial(&init), &mesh, 1e-3, &map, &kin, &cfg, Some(&src), &acfg).unwrap();
        assert!(out.cap_hit);
        assert_eq!(out.iterations, 3);
        // Every round refines, nothing born this step is merged away.
        assert!(out.mesh.num_triangles() > mesh.num_triangles());
    }

    #[test]
    fn transfer_requires_matching_mesh() {
        let (map, kin, src, cfg) = benchmark();
        let mesh = ReferenceMesh::uniform(3).unwrap();
        let other = mesh.refine(&MarkSet::refine_only([0])).unwrap();
        let space = P1Space::new(&other);
        let init = exact_initial(&src);
        let state = SystemState::new(
            0.0,
            (0..2).map(|i| interpolant(&space, &|p| init(i, p)).unwrap()).collect(),
            &space,
        )
        .unwrap();
        let r = adapt_step(&PreviousState::Transfer(&state), &mesh, 1e-3, &map, &kin, &cfg, Some(&src), &AdaptConfig::new(1.0).unwrap());
        assert!(r.is_err());
    }
}
