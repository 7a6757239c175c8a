//! Runs a configuration: time-dependent simulations, convergence studies and the
//! dry-run check.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use growfem_core::bench::{eoc_table, run_manufactured, BenchSetup, EocRow, ErrorRecord};
use growfem_core::fem::{interpolant, P1Space, SystemState};
use growfem_core::kinetics::ManufacturedCase;
use growfem_core::mesh::ReferenceMesh;
use growfem_core::stepper::{run, StepRecord, StepView};

use crate::config::{Format, RunConfig};
use crate::initial::Perturbed;
use crate::output;

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const EOC_FILE: &str = "eoc.csv";

pub fn snapshot_name(step: usize) -> String {
    format!("snapshot_{step:06}.vtk")
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub records: Vec<StepRecord>,
    pub final_state: SystemState,
    pub final_mesh: ReferenceMesh,
    pub written: Vec<PathBuf>,
}

pub fn initial_data(cfg: &RunConfig) -> Perturbed {
    Perturbed::new(cfg.base_state(), cfg.mesh.n, cfg.initial.amplitude, cfg.initial.seed)
}

/// Runs the simulation described by `cfg`, writing outputs below `out` when given.
/// `observe` sees every accepted state, the initial one included.
pub fn simulate(
    cfg: &RunConfig,
    out: Option<&Path>,
    observe: &mut dyn FnMut(&StepView<'_>),
) -> Result<RunSummary> {
    cfg.validate()?;
    let map = cfg.map()?;
    let kinetics = cfg.kinetics();
    let step = cfg.step_config()?;
    let adapt = cfg.adapt_config();
    let init = initial_data(cfg);
    let mesh = ReferenceMesh::uniform(cfg.mesh.n)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let stride = cfg.output.snapshot_stride;
    let vtk = out.filter(|_| stride > 0 && cfg.output.wants(Format::Vtk));
    let mut written = Vec::new();
    let mut io_error = None;
    let result = run(
        &|i, p| init.value(i, p),
        mesh,
        &map,
        kinetics.as_ref(),
        &step,
        None,
        adapt.as_ref(),
        &mut |view| {
            observe(view);
            let n = view.record.map_or(0, |r| r.step);
            if let Some(dir) = vtk {
                if n % stride == 0 {
                    let path = dir.join(snapshot_name(n));
                    match output::write_snapshot(&path, view.mesh, view.state, &map, view.field) {
                        Ok(()) => written.push(path),
                        Err(e) => {
                            io_error = Some(anyhow::Error::new(e).context(format!("writing {}", path.display())));
                            return Err(growfem_core::error::Error::InvalidArgument("snapshot output failed".into()));
                        }
                    }
                }
            }
            Ok(())
        },
    );
    let output = match (result, io_error) {
        (_, Some(e)) => return Err(e),
        (r, None) => r?,
    };
    if let Some(dir) = out.filter(|_| cfg.output.wants(Format::Csv)) {
        let path = dir.join(DIAGNOSTICS_FILE);
        output::write_atomic(&path, &output::diagnostics_csv(&output.records)?)
            .with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(RunSummary {
        records: output.records,
        final_state: output.final_state,
        final_mesh: output.final_mesh,
        written,
    })
}

pub fn bench_setup(cfg: &RunConfig) -> Result<BenchSetup> {
    let Some(kin) = cfg.schnakenberg() else {
        bail!("bench-eoc needs Schnakenberg kinetics");
    };
    let d = &cfg.kinetics.diffusion;
    Ok(BenchSetup {
        case: ManufacturedCase::schnakenberg_cosine(kin, [d[0], d[1]]),
        map: cfg.map()?,
        solver: cfg.solver(),
        tau_factor: cfg.bench.tau_factor,
        t_final: cfg.time.t_final,
    })
}

/// The manufactured convergence study over `bench.levels`, one level per thread.
pub fn bench_records(cfg: &RunConfig) -> Result<Vec<ErrorRecord>> {
    let setup = bench_setup(cfg)?;
    let mut levels = cfg.bench.levels.clone();
    levels.sort_unstable();
    levels.dedup();
    std::thread::scope(|s| {
        let handles: Vec<_> = levels
            .iter()
            .map(|&n| {
                let setup = &setup;
                s.spawn(move || run_manufactured(n, setup).with_context(|| format!("level n = {n}")))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("benchmark thread panicked"))
            .collect()
    })
}

pub fn bench(cfg: &RunConfig, out: Option<&Path>) -> Result<Vec<EocRow>> {
    let rows = eoc_table(&bench_records(cfg)?)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(EOC_FILE);
        output::write_atomic(&path, &output::eoc_csv(&rows)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(rows)
}

/// Builds every object of a run and samples the map over the whole horizon without
/// stepping or writing anything.
pub fn dry_run(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let map = cfg.map()?;
    let kinetics = cfg.kinetics();
    if kinetics.species() != cfg.species() {
        bail!("kinetics has {} species, diffusion lists {}", kinetics.species(), cfg.species());
    }
    cfg.step_config()?.validate()?;
    if let Some(a) = cfg.adapt_config() {
        a.validate()?;
    }
    let mesh = ReferenceMesh::uniform(cfg.mesh.n)?;
    let space = P1Space::new(&mesh);
    let init = initial_data(cfg);
    let coeffs = (0..cfg.species())
        .map(|i| interpolant(&space, &|p| init.value(i, p)))
        .collect::<growfem_core::error::Result<Vec<_>>>()?;
    SystemState::new(0.0, coeffs, &space)?;
    let samples = 16;
    for k in 0..=samples {
        let t = cfg.time.t_final * k as f64 / samples as f64;
        for p in mesh.vertices() {
            map.metric_terms(*p, t)
                .with_context(|| format!("map at t = {t}"))?;
        }
    }
    if cfg.output.snapshot_stride > 0 && !cfg.output.wants(Format::Vtk) {
        log::warn!("output.snapshot_stride is set but \"vtk\" is not among output.formats");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn smoke_run_writes_csv_and_snapshots() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = parse_config(
            "[mesh]\nn = 4\n[time]\ntau = 0.05\nt_final = 0.1\n[output]\nsnapshot_stride = 1\nformats = [\"csv\", \"vtk\"]\n",
        )
        .unwrap();
        let mut seen = 0;
        let summary = simulate(&cfg, Some(dir.path()), &mut |_| seen += 1).unwrap();
        assert_eq!(seen, 3);
        assert_eq!(summary.records.len(), 2);
        assert_eq!(summary.written.len(), 4);
        let csv = std::fs::read_to_string(dir.path().join(DIAGNOSTICS_FILE)).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(dir.path().join(snapshot_name(2)).exists());
    }

    #[test]
    fn dry_run_catches_a_singular_map() {
        let cfg = parse_config(
            "[geometry]\nkind = \"dilation\"\ngrowth = { kind = \"linear\", rate = -1.0 }\n[time]\nt_final = 2.0\n",
        )
        .unwrap();
        assert!(dry_run(&cfg).is_err());
        assert!(dry_run(&parse_config("").unwrap()).is_ok());
    }

    #[test]
    fn bench_needs_two_species_kinetics() {
        let cfg = parse_config("[kinetics]\nmodel = \"none\"\ndiffusion = [1.0, 1.0]\n").unwrap();
        assert!(bench(&cfg, None).is_err());
    }
}
