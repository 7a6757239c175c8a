//! CSV diagnostics, EOC tables and legacy-VTK ASCII snapshots. Every file is
//! written to a temporary sibling first and renamed into place.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use growfem_core::bench::EocRow;
use growfem_core::estimator::IndicatorField;
use growfem_core::fem::SystemState;
use growfem_core::geometry::DomainMap;
use growfem_core::mesh::ReferenceMesh;
use growfem_core::stepper::StepRecord;

pub const DIAGNOSTICS_HEADER: [&str; 8] = [
    "t",
    "dofs",
    "eta_global",
    "delta_u",
    "domain_measure",
    "adapt_iterations",
    "cap_hit",
    "elements",
];

pub const EOC_HEADER: [&str; 8] = ["h", "eta", "eoc_eta", "errL2", "eocL2", "errH1", "eocH1", "effectivity"];

pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn diagnostics_csv(records: &[StepRecord]) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(DIAGNOSTICS_HEADER)?;
    for r in records {
        w.write_record([
            r.t.to_string(),
            r.dofs.to_string(),
            r.eta_global.to_string(),
            r.delta_u.to_string(),
            r.domain_measure.to_string(),
            r.adapt_iterations.to_string(),
            u8::from(r.cap_hit).to_string(),
            r.elements.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| e.into_error())
}

pub fn eoc_csv(rows: &[EocRow]) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EOC_HEADER)?;
    for r in rows {
        w.write_record([
            r.h.to_string(),
            r.eta.to_string(),
            opt(r.eoc_eta),
            r.err_l2.to_string(),
            opt(r.eoc_l2),
            r.err_h1.to_string(),
            opt(r.eoc_h1),
            r.effectivity.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| e.into_error())
}

fn invalid_data(msg: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidInput, msg)
}

/// Legacy-VTK unstructured grid: points in reference coordinates, the mapped
/// position as the point vector `physical`, point scalars `u1, u2, …` and, when
/// indicators are given, the cell scalar `eta`.
pub fn snapshot_vtk(
    mesh: &ReferenceMesh,
    state: &SystemState,
    map: &DomainMap,
    field: Option<&IndicatorField>,
) -> io::Result<String> {
    let np = mesh.num_vertices();
    let nc = mesh.num_triangles();
    if state.mesh_version != mesh.version() || state.coeffs.iter().any(|u| u.len() != np) {
        return Err(invalid_data(format!(
            "state does not live on mesh version {} with {np} vertices",
            mesh.version()
        )));
    }
    if let Some(f) = field {
        if f.num_elements() != nc || f.mesh_version != mesh.version() {
            return Err(invalid_data(format!("indicator field does not match the {nc} cells")));
        }
    }
    let mut s = String::with_capacity(64 * (np + nc));
    // writing to a String cannot fail
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "growfem t = {}", state.t);
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {np} double");
    for p in mesh.vertices() {
        let _ = writeln!(s, "{} {} 0", p[0], p[1]);
    }
    let _ = writeln!(s, "CELLS {nc} {}", 4 * nc);
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nc}");
    for _ in 0..nc {
        let _ = writeln!(s, "5");
    }
    let _ = writeln!(s, "POINT_DATA {np}");
    let _ = writeln!(s, "VECTORS physical double");
    for p in mesh.vertices() {
        let x = map
            .map_eval(*p, state.t)
            .map_err(|e| invalid_data(e.to_string()))?;
        let _ = writeln!(s, "{} {} {}", x[0], x[1], x[2]);
    }
    for (i, u) in state.coeffs.iter().enumerate() {
        let _ = writeln!(s, "SCALARS u{} double 1", i + 1);
        let _ = writeln!(s, "LOOKUP_TABLE default");
        for v in u {
            let _ = writeln!(s, "{v}");
        }
    }
    if let Some(f) = field {
        let _ = writeln!(s, "CELL_DATA {nc}");
        let _ = writeln!(s, "SCALARS eta double 1");
        let _ = writeln!(s, "LOOKUP_TABLE default");
        for c in 0..nc {
            let _ = writeln!(s, "{}", f.element_value(c));
        }
    }
    Ok(s)
}

pub fn write_snapshot(
    path: &Path,
    mesh: &ReferenceMesh,
    state: &SystemState,
    map: &DomainMap,
    field: Option<&IndicatorField>,
) -> io::Result<()> {
    write_atomic(path, snapshot_vtk(mesh, state, map, field)?.as_bytes())
}
