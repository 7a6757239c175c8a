//! Manufactured-solution benchmarks: error norms on the moving domain, experimental
//! orders of convergence and effectivity of the estimator.
//!
//! Norms are taken on `Ω_t` and pulled back: `‖e‖² = ∫ J ê²`,
//! `‖∇e‖² = ∫ ∇ê · G ∇ê` with `G = J K Kᵀ`. Errors are integrated in time with the
//! trapezoidal rule; `η²` is constant on each interval `(tⁿ⁻¹, tⁿ]`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::estimator::IndicatorField;
use crate::fem::{sample_metrics, P1Space, SystemState, NQ, QUADRATURE};
use crate::geometry::DomainMap;
use crate::kinetics::{ExactSolution, ManufacturedCase, ManufacturedSource, Schnakenberg};
use crate::math;
use crate::mesh::ReferenceMesh;
use crate::solver::SolverConfig;
use crate::stepper::{run, StepConfig, StepView};

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub h: f64,
    pub tau: f64,
    pub dofs: usize,
    /// `(∫₀ᵀ Σ_i ‖e_i‖²)^{1/2}`.
    pub err_l2: f64,
    /// `(∫₀ᵀ Σ_i ‖∇e_i‖²)^{1/2}`.
    pub err_h1: f64,
    /// `∫₀ᵀ Σ_i D_i ‖∇e_i‖²`.
    pub energy_sq: f64,
    /// `∫₀ᵀ Σ_i Σ_s η²_{i|s}`.
    pub eta_sq: f64,
}

impl ErrorRecord {
    /// `‖η‖_{L²(0,T)}`.
    pub fn eta(&self) -> f64 {
        math::sqrt(self.eta_sq)
    }
}

/// Per-species `‖e_i(t)‖²` and `‖∇e_i(t)‖²` for a discrete state against `exact`.
pub fn instantaneous_errors(
    space: &P1Space,
    state: &SystemState,
    exact: &dyn ExactSolution,
    map: &DomainMap,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = state.species();
    if exact.species() != m {
        return Err(Error::DimensionMismatch {
            expected: exact.species(),
            found: m,
        });
    }
    let t = state.t;
    let metrics = sample_metrics(space, map, t)?;
    let mut l2 = vec![0.0; m];
    let mut h1 = vec![0.0; m];
    let mut val = vec![0.0; m];
    let mut dt = vec![0.0; m];
    let mut grad = vec![[0.0; 2]; m];
    let mut hess = vec![[[0.0; 2]; 2]; m];
    let mut grads = vec![[0.0; 2]; m];
    for (cell, geo) in space.geometry().iter().enumerate() {
        for (g, u) in grads.iter_mut().zip(&state.coeffs) {
            *g = space.gradient(u, cell);
        }
        for (q, &xi) in geo.qp.iter().enumerate() {
            let metric = metrics[cell * NQ + q];
            let g = metric.tensor();
            exact.jet(xi, t, &mut val, &mut dt, &mut grad, &mut hess);
            let w = QUADRATURE[q].1 * geo.area;
            for i in 0..m {
                let e = space.value_at_qp(&state.coeffs[i], cell, q) - val[i];
                let de = [grads[i][0] - grad[i][0], grads[i][1] - grad[i][1]];
                l2[i] += w * metric.j * e * e;
                h1[i] += w * math::dot2(de, math::mat2_mul_vec(&g, de));
            }
        }
    }
    Ok((l2, h1))
}

/// Accumulates time-integrated errors and estimator from a sequence of states,
/// starting with the initial one.
#[derive(Debug, Clone)]
pub struct ErrorAccumulator {
    case: ManufacturedCase,
    map: DomainMap,
    last: Option<(f64, f64, f64, f64)>,
    l2: f64,
    h1: f64,
    energy: f64,
    eta_sq: f64,
    dofs: usize,
    max_dt: f64,
}

impl ErrorAccumulator {
    pub fn new(case: ManufacturedCase, map: DomainMap) -> Self {
        Self {
            case,
            map,
            last: None,
            l2: 0.0,
            h1: 0.0,
            energy: 0.0,
            eta_sq: 0.0,
            dofs: 0,
            max_dt: 0.0,
        }
    }

    /// Adds the state at `state.t`. `field` holds the indicators of the interval ending
    /// there and must be `None` for the first state only.
    pub fn push(&mut self, space: &P1Space, state: &SystemState, field: Option<&IndicatorField>) -> Result<()> {
        let (l2, h1) = instantaneous_errors(space, state, self.case.exact.as_ref(), &self.map)?;
        let energy: f64 = h1.iter().zip(&self.case.diffusion).map(|(e, d)| d * e).sum();
        let (l2, h1) = (l2.iter().sum::<f64>(), h1.iter().sum::<f64>());
        match (self.last, field) {
            (None, None) => {}
            (Some((t0, l0, h0, e0)), Some(field)) => {
                let dt = state.t - t0;
                if !(dt > 0.0) {
                    return Err(Error::InvalidArgument("states must be pushed in increasing time".into()));
                }
                self.l2 += 0.5 * dt * (l0 + l2);
                self.h1 += 0.5 * dt * (h0 + h1);
                self.energy += 0.5 * dt * (e0 + energy);
                self.eta_sq += dt * field.sum_of_squares();
                self.max_dt = self.max_dt.max(dt);
            }
            (None, Some(_)) => {
                return Err(Error::InvalidArgument("the first state carries no indicators".into()));
            }
            (Some(_), None) => {
                return Err(Error::InvalidArgument("every later state needs its indicators".into()));
            }
        }
        self.last = Some((state.t, l2, h1, energy));
        self.dofs = self.dofs.max(space.dofs());
        Ok(())
    }

    pub fn observe(&mut self, view: &StepView<'_>) -> Result<()> {
        self.push(view.space, view.state, view.field)
    }

    pub fn finish(&self, h: f64) -> ErrorRecord {
        ErrorRecord {
            h,
            tau: self.max_dt,
            dofs: self.dofs,
            err_l2: math::sqrt(self.l2),
            err_h1: math::sqrt(self.h1),
            energy_sq: self.energy,
            eta_sq: self.eta_sq,
        }
    }
}

/// Time-integrated errors of a stored sequence of states: `(space, state, indicators)`,
/// the first entry being the initial state without indicators.
pub fn measure_errors<'a>(
    series: impl IntoIterator<Item = (&'a P1Space, &'a SystemState, Option<&'a IndicatorField>)>,
    case: &ManufacturedCase,
    map: &DomainMap,
    h: f64,
) -> Result<ErrorRecord> {
    let mut acc = ErrorAccumulator::new(case.clone(), map.clone());
    for (space, state, field) in series {
        acc.push(space, state, field)?;
    }
    Ok(acc.finish(h))
}

/// `EOC_k = log(v_k / v_{k+1}) / log(h_k / h_{k+1})`.
pub fn eoc(values: &[f64], hs: &[f64]) -> Result<Vec<f64>> {
    if values.len() != hs.len() || values.len() < 2 {
        return Err(Error::InvalidArgument(alloc::format!(
            "need two or more paired values, got {} values and {} sizes",
            values.len(),
            hs.len()
        )));
    }
    if values.iter().chain(hs).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidArgument("EOC inputs must be positive".into()));
    }
    Ok(values
        .windows(2)
        .zip(hs.windows(2))
        .map(|(v, h)| math::ln(v[0] / v[1]) / math::ln(h[0] / h[1]))
        .collect())
}

/// `∫ Σ η² / ∫ Σ_i D_i ‖∇e_i‖²`.
pub fn effectivity(record: &ErrorRecord) -> Result<f64> {
    if record.energy_sq <= 0.0 {
        return Err(Error::ZeroError);
    }
    Ok(record.eta_sq / record.energy_sq)
}

/// A manufactured problem and how to discretise it in time.
#[derive(Debug, Clone)]
pub struct BenchSetup {
    pub case: ManufacturedCase,
    pub map: DomainMap,
    pub solver: SolverConfig,
    /// `τ ≈ tau_factor · h²`, adjusted so that `T/τ` is an integer.
    pub tau_factor: f64,
    pub t_final: f64,
}

impl BenchSetup {
    /// Schnakenberg with `γ = 1`, `k = (0.1, 0.9)`, `D = (1, 10)` on the dilation
    /// `ρ(t) = 1 + sin(πt)`, `t ∈ [0, 1]`, with `τ = h²/4`.
    pub fn dilation_benchmark() -> Self {
        let kin = Schnakenberg::new(1.0, 0.1, 0.9).expect("valid parameters");
        let map = DomainMap::benchmark_dilation();
        Self {
            case: ManufacturedCase::schnakenberg_cosine(kin, [1.0, 10.0]),
            t_final: map.horizon(),
            map,
            solver: SolverConfig::default(),
            tau_factor: 0.25,
        }
    }

    pub fn step_config(&self, h: f64) -> Result<StepConfig> {
        let target = self.tau_factor * h * h;
        let steps = libm::ceil(self.t_final / target).max(1.0);
        let mut cfg = StepConfig::new(self.t_final / steps, self.t_final, self.case.diffusion.clone())?;
        cfg.solver = self.solver;
        Ok(cfg)
    }
}

/// Runs the manufactured problem on the uniform `n × n` mesh without adaptation.
pub fn run_manufactured(n: usize, setup: &BenchSetup) -> Result<ErrorRecord> {
    let mesh = ReferenceMesh::uniform(n)?;
    let h = mesh.mesh_size();
    let cfg = setup.step_config(h)?;
    let source = ManufacturedSource {
        case: setup.case.clone(),
        map: setup.map.clone(),
    };
    let exact = setup.case.exact.clone();
    let m = setup.case.species();
    let initial = move |i: usize, p: [f64; 2]| {
        let mut v = vec![0.0; m];
        exact.value(p, 0.0, &mut v);
        v[i]
    };
    let mut acc = ErrorAccumulator::new(setup.case.clone(), setup.map.clone());
    run(
        &initial,
        mesh,
        &setup.map,
        setup.case.kinetics.as_ref(),
        &cfg,
        Some(&source),
        None,
        &mut |view| acc.observe(view),
    )?;
    Ok(acc.finish(h))
}

/// One row of an EOC table. The EOC columns are `None` on the first row.
#[derive(Debug, Clone, PartialEq)]
pub struct EocRow {
    pub h: f64,
    pub eta: f64,
    pub eoc_eta: Option<f64>,
    pub err_l2: f64,
    pub eoc_l2: Option<f64>,
    pub err_h1: f64,
    pub eoc_h1: Option<f64>,
    pub effectivity: f64,
}

pub fn eoc_table(records: &[ErrorRecord]) -> Result<Vec<EocRow>> {
    let hs: Vec<f64> = records.iter().map(|r| r.h).collect();
    let series = |f: fn(&ErrorRecord) -> f64| -> Result<Vec<Option<f64>>> {
        if records.len() < 2 {
            return Ok(vec![None; records.len()]);
        }
        let v: Vec<f64> = records.iter().map(f).collect();
        let mut out = vec![None];
        out.extend(eoc(&v, &hs)?.into_iter().map(Some));
        Ok(out)
    };
    let eta = series(ErrorRecord::eta)?;
    let l2 = series(|r| r.err_l2)?;
    let h1 = series(|r| r.err_h1)?;
    records
        .iter()
        .enumerate()
        .map(|(k, r)| {
            Ok(EocRow {
                h: r.h,
                eta: r.eta(),
                eoc_eta: eta[k],
                err_l2: r.err_l2,
                eoc_l2: l2[k],
                err_h1: r.err_h1,
                eoc_h1: h1[k],
                effectivity: effectivity(r)?,
            })
        })
        .collect()
}
