//! Continuous P1 Lagrange elements on a [`ReferenceMesh`], quadrature, the Lagrange
//! interpolant and assembly of the time-dependent forms
//!
//! * mass `M(t)[a,b] = ∫ J φ_a φ_b`,
//! * stiffness `S(t)[a,b] = ∫ D ∇φ_b · G ∇φ_a` with `G = J K Kᵀ`,
//! * load `b[a] = ∫ J g φ_a`.
//!
//! All integrals use a 6-point rule exact for degree-4 polynomials on each triangle.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{DomainMap, MetricSample};
use crate::math;
use crate::mesh::ReferenceMesh;

/// Number of quadrature points per triangle.
pub const NQ: usize = 6;

const QA: f64 = 0.445_948_490_915_964_886_3;
const QB: f64 = 0.091_576_213_509_770_743_46;
const WA: f64 = 0.223_381_589_678_011_065_8;
const WB: f64 = 0.109_951_743_655_321_600_9;

/// Reference-triangle points `(x, y)` and weights summing to one.
pub const QUADRATURE: [([f64; 2], f64); NQ] = [
    ([QA, QA], WA),
    ([1.0 - 2.0 * QA, QA], WA),
    ([QA, 1.0 - 2.0 * QA], WA),
    ([QB, QB], WB),
    ([1.0 - 2.0 * QB, QB], WB),
    ([QB, 1.0 - 2.0 * QB], WB),
];

/// `φ_a` at each quadrature point: `φ₀ = 1−x−y`, `φ₁ = x`, `φ₂ = y`.
pub const BASIS_AT_QP: [[f64; 3]; NQ] = {
    let mut out = [[0.0; 3]; NQ];
    let mut q = 0;
    while q < NQ {
        let [x, y] = QUADRATURE[q].0;
        out[q] = [1.0 - x - y, x, y];
        q += 1;
    }
    out
};

/// Affine data of one triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGeometry {
    pub area: f64,
    pub diameter: f64,
    /// Constant gradients of the three local basis functions.
    pub grads: [[f64; 2]; 3],
    /// Quadrature points in reference-square coordinates.
    pub qp: [[f64; 2]; NQ],
    /// Length, outward unit normal and midpoint of local edge `k` (opposite vertex `k`).
    pub edge_len: [f64; 3],
    pub edge_normal: [[f64; 2]; 3],
    pub edge_mid: [[f64; 2]; 3],
}

impl CellGeometry {
    pub fn new(p: [[f64; 2]; 3]) -> Self {
        let e1 = [p[1][0] - p[0][0], p[1][1] - p[0][1]];
        let e2 = [p[2][0] - p[0][0], p[2][1] - p[0][1]];
        let det = e1[0] * e2[1] - e1[1] * e2[0];
        let g1 = [e2[1] / det, -e2[0] / det];
        let g2 = [-e1[1] / det, e1[0] / det];
        let grads = [[-g1[0] - g2[0], -g1[1] - g2[1]], g1, g2];
        let mut qp = [[0.0; 2]; NQ];
        for (q, (xy, _)) in QUADRATURE.iter().enumerate() {
            qp[q] = [
                p[0][0] + xy[0] * e1[0] + xy[1] * e2[0],
                p[0][1] + xy[0] * e1[1] + xy[1] * e2[1],
            ];
        }
        let mut edge_len = [0.0; 3];
        let mut edge_normal = [[0.0; 2]; 3];
        let mut edge_mid = [[0.0; 2]; 3];
        for k in 0..3 {
            let a = p[(k + 1) % 3];
            let b = p[(k + 2) % 3];
            let d = [b[0] - a[0], b[1] - a[1]];
            let len = math::hypot(d[0], d[1]);
            edge_len[k] = len;
            // Counter-clockwise triangles have the outward normal on the right.
            edge_normal[k] = [d[1] / len, -d[0] / len];
            edge_mid[k] = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        }
        CellGeometry {
            area: 0.5 * det,
            diameter: edge_len[0].max(edge_len[1]).max(edge_len[2]),
            grads,
            qp,
            edge_len,
            edge_normal,
            edge_mid,
        }
    }
}

/// Sparsity pattern in compressed-row form with sorted column indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrPattern {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
}

impl CsrPattern {
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let start = self.row_ptr[row];
        let cols = &self.col_idx[start..self.row_ptr[row + 1]];
        cols.binary_search(&col).ok().map(|k| start + k)
    }
}

/// Square sparse matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    pattern: Arc<CsrPattern>,
    values: Vec<f64>,
}

impl SparseOperator {
    pub fn zeros(pattern: Arc<CsrPattern>) -> Self {
        let nnz = pattern.col_idx.len();
        Self {
            pattern,
            values: vec![0.0; nnz],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, (0..n).map(|i| (i, i, 1.0)))
    }

    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut entries: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (r, c, v) in triplets {
            assert!(r < n && c < n, "triplet ({r}, {c}) outside {n}x{n}");
            *entries.entry((r, c)).or_insert(0.0) += v;
        }
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for (&(r, c), &v) in &entries {
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            pattern: Arc::new(CsrPattern { n, row_ptr, col_idx }),
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.pattern.n
    }

    pub fn pattern(&self) -> &Arc<CsrPattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pattern
            .position(row, col)
            .map_or(0.0, |k| self.values[k])
    }

    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.pattern.row_ptr[row]..self.pattern.row_ptr[row + 1];
        self.pattern.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let p = &self.pattern;
        for (r, yr) in y.iter_mut().enumerate().take(p.n) {
            let mut acc = 0.0;
            for k in p.row_ptr[r]..p.row_ptr[r + 1] {
                acc += self.values[k] * x[p.col_idx[k]];
            }
            *yr = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.matvec(x, &mut y);
        y
    }

    /// `self += alpha · other`; both must share one pattern.
    pub fn add_scaled(&mut self, alpha: f64, other: &SparseOperator) {
        assert!(
            Arc::ptr_eq(&self.pattern, &other.pattern) || self.pattern == other.pattern,
            "operators must share a sparsity pattern"
        );
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A − Aᵀ|` over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.dim() {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// Sum of all entries, i.e. `1ᵀ A 1`.
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Continuous piecewise-linear functions on a triangulation, one dof per vertex.
#[derive(Debug, Clone)]
pub struct P1Space {
    coords: Vec<[f64; 2]>,
    cells: Vec<[usize; 3]>,
    neighbors: Vec<[Option<usize>; 3]>,
    geometry: Vec<CellGeometry>,
    pattern: Arc<CsrPattern>,
    slots: Vec<[usize; 9]>,
    mesh_version: u64,
}

impl P1Space {
    pub fn new(mesh: &ReferenceMesh) -> Self {
        Self::build(
            mesh.vertices().to_vec(),
            mesh.triangles().to_vec(),
            mesh.neighbors().to_vec(),
            mesh.version(),
        )
    }

    /// Space over an explicit vertex/cell list (cells positively oriented).
    pub fn from_parts(coords: Vec<[f64; 2]>, cells: Vec<[usize; 3]>, mesh_version: u64) -> Result<Self> {
        for (t, cell) in cells.iter().enumerate() {
            if cell.iter().any(|&v| v >= coords.len()) {
                return Err(Error::InvalidArgument(alloc::format!(
                    "cell {t} references a vertex outside 0..{}",
                    coords.len()
                )));
            }
        }
        let mut map: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
        for (t, cell) in cells.iter().enumerate() {
            for k in 0..3 {
                let a = cell[(k + 1) % 3];
                let b = cell[(k + 2) % 3];
                map.entry((a.min(b), a.max(b))).or_default().push((t, k));
            }
        }
        let mut neighbors = vec![[None; 3]; cells.len()];
        for adj in map.values() {
            if let [(t0, k0), (t1, k1)] = adj[..] {
                neighbors[t0][k0] = Some(t1);
                neighbors[t1][k1] = Some(t0);
            }
        }
        Ok(Self::build(coords, cells, neighbors, mesh_version))
    }

    fn build(
        coords: Vec<[f64; 2]>,
        cells: Vec<[usize; 3]>,
        neighbors: Vec<[Option<usize>; 3]>,
        mesh_version: u64,
    ) -> Self {
        let n = coords.len();
        let geometry = cells
            .iter()
            .map(|c| CellGeometry::new(c.map(|v| coords[v])))
            .collect();
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for c in &cells {
            for &a in c {
                rows[a].extend_from_slice(c);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let pattern = CsrPattern {
            n,
            row_ptr,
            col_idx,
        };
        let slots = cells
            .iter()
            .map(|c| {
                let mut s = [0; 9];
                for a in 0..3 {
                    for b in 0..3 {
                        s[3 * a + b] = pattern.position(c[a], c[b]).expect("pattern covers cell");
                    }
                }
                s
            })
            .collect();
        P1Space {
            coords,
            cells,
            neighbors,
            geometry,
            pattern: Arc::new(pattern),
            slots,
            mesh_version,
        }
    }

    pub fn dofs(&self) -> usize {
        self.coords.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn neighbors(&self) -> &[[Option<usize>; 3]] {
        &self.neighbors
    }

    pub fn geometry(&self) -> &[CellGeometry] {
        &self.geometry
    }

    pub fn pattern(&self) -> &Arc<CsrPattern> {
        &self.pattern
    }

    pub fn mesh_version(&self) -> u64 {
        self.mesh_version
    }

    /// Value of the P1 function with coefficients `u` at quadrature point `q` of `cell`.
    #[inline]
    pub fn value_at_qp(&self, u: &[f64], cell: usize, q: usize) -> f64 {
        let c = self.cells[cell];
        let phi = BASIS_AT_QP[q];
        phi[0] * u[c[0]] + phi[1] * u[c[1]] + phi[2] * u[c[2]]
    }

    /// Constant gradient of the P1 function `u` on `cell`.
    #[inline]
    pub fn gradient(&self, u: &[f64], cell: usize) -> [f64; 2] {
        let c = self.cells[cell];
        let g = &self.geometry[cell].grads;
        [
            g[0][0] * u[c[0]] + g[1][0] * u[c[1]] + g[2][0] * u[c[2]],
            g[0][1] * u[c[0]] + g[1][1] * u[c[1]] + g[2][1] * u[c[2]],
        ]
    }

    /// Values at every quadrature point, cell-major.
    pub fn values_at_quadrature(&self, u: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_cells() * NQ);
        for cell in 0..self.num_cells() {
            for q in 0..NQ {
                out.push(self.value_at_qp(u, cell, q));
            }
        }
        out
    }
}

/// Per-species P1 coefficients at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub t: f64,
    pub coeffs: Vec<Vec<f64>>,
    pub mesh_version: u64,
}

impl SystemState {
    pub fn new(t: f64, coeffs: Vec<Vec<f64>>, space: &P1Space) -> Result<Self> {
        for c in &coeffs {
            if c.len() != space.dofs() {
                return Err(Error::DimensionMismatch {
                    expected: space.dofs(),
                    found: c.len(),
                });
            }
        }
        Ok(Self {
            t,
            coeffs,
            mesh_version: space.mesh_version(),
        })
    }

    pub fn species(&self) -> usize {
        self.coeffs.len()
    }

    pub(crate) fn check(&self, space: &P1Space) -> Result<()> {
        if self.mesh_version != space.mesh_version() {
            return Err(Error::InvalidArgument(alloc::format!(
                "state bound to mesh version {} but space is version {}",
                self.mesh_version,
                space.mesh_version()
            )));
        }
        for c in &self.coeffs {
            if c.len() != space.dofs() {
                return Err(Error::DimensionMismatch {
                    expected: space.dofs(),
                    found: c.len(),
                });
            }
        }
        Ok(())
    }
}

/// The Lagrange interpolant `Λʰ g`: one coefficient per vertex.
pub fn interpolant(space: &P1Space, g: &dyn Fn([f64; 2]) -> f64) -> Result<Vec<f64>> {
    space
        .coords
        .iter()
        .enumerate()
        .map(|(vertex, &p)| {
            let value = g(p);
            if value.is_finite() {
                Ok(value)
            } else {
                Err(Error::NonFiniteValue {
                    vertex,
                    x: p[0],
                    y: p[1],
                    value,
                })
            }
        })
        .collect()
}

/// Metric terms at every quadrature point, cell-major.
pub fn sample_metrics(space: &P1Space, map: &DomainMap, t: f64) -> Result<Vec<MetricSample>> {
    let n = space.num_cells() * NQ;
    if map.is_spatially_uniform() {
        let s = map.metric_terms([0.5, 0.5], t)?;
        return Ok(vec![s; n]);
    }
    let at = map.at(t)?;
    let mut out = Vec::with_capacity(n);
    for g in &space.geometry {
        for &xi in &g.qp {
            out.push(at.metric(xi)?);
        }
    }
    Ok(out)
}

/// `∫ J w φ_a φ_b` with per-quadrature-point weights `w(cell, q)`.
pub(crate) fn weighted_mass(
    space: &P1Space,
    metrics: &[MetricSample],
    weight: impl Fn(usize, usize) -> f64,
) -> Result<SparseOperator> {
    let mut op = SparseOperator::zeros(space.pattern.clone());
    for (cell, geo) in space.geometry.iter().enumerate() {
        let mut local = [0.0; 9];
        for (q, phi) in BASIS_AT_QP.iter().enumerate() {
            let w = QUADRATURE[q].1 * geo.area * metrics[cell * NQ + q].j * weight(cell, q);
            if !w.is_finite() {
                return Err(Error::NonFiniteIntegrand { element: cell, point: q });
            }
            for a in 0..3 {
                for b in 0..3 {
                    local[3 * a + b] += w * phi[a] * phi[b];
                }
            }
        }
        for (k, &slot) in space.slots[cell].iter().enumerate() {
            op.values[slot] += local[k];
        }
    }
    Ok(op)
}

pub(crate) fn stiffness_from(space: &P1Space, metrics: &[MetricSample], diffusion: f64) -> SparseOperator {
    let mut op = SparseOperator::zeros(space.pattern.clone());
    for (cell, geo) in space.geometry.iter().enumerate() {
        let mut g_int = [[0.0; 2]; 2];
        for q in 0..NQ {
            let g = metrics[cell * NQ + q].tensor();
            let w = QUADRATURE[q].1;
            for r in 0..2 {
                for c in 0..2 {
                    g_int[r][c] += w * g[r][c];
                }
            }
        }
        let scale = diffusion * geo.area;
        for a in 0..3 {
            let ga = math::mat2_mul_vec(&g_int, geo.grads[a]);
            for b in 0..3 {
                let v = scale * math::dot2(geo.grads[b], ga);
                op.values[space.slots[cell][3 * a + b]] += v;
            }
        }
    }
    op
}

pub(crate) fn load_from(
    space: &P1Space,
    metrics: &[MetricSample],
    values: impl Fn(usize, usize) -> f64,
) -> Result<Vec<f64>> {
    let mut b = vec![0.0; space.dofs()];
    for (cell, geo) in space.geometry.iter().enumerate() {
        let c = space.cells[cell];
        for (q, phi) in BASIS_AT_QP.iter().enumerate() {
            let v = values(cell, q);
            let w = QUADRATURE[q].1 * geo.area * metrics[cell * NQ + q].j * v;
            if !w.is_finite() {
                return Err(Error::NonFiniteIntegrand { element: cell, point: q });
            }
            for a in 0..3 {
                b[c[a]] += w * phi[a];
            }
        }
    }
    Ok(b)
}

/// `M(t)[a,b] = ∫ J(ξ,t) φ_a φ_b dξ`.
pub fn assemble_mass(space: &P1Space, map: &DomainMap, t: f64) -> Result<SparseOperator> {
    let metrics = sample_metrics(space, map, t)?;
    weighted_mass(space, &metrics, |_, _| 1.0)
}

/// `S(t)[a,b] = ∫ D J (Kᵀ∇φ_a)·(Kᵀ∇φ_b) dξ = ∫ D ∇φ_b · G ∇φ_a dξ`.
pub fn assemble_stiffness(space: &P1Space, map: &DomainMap, t: f64, diffusion: f64) -> Result<SparseOperator> {
    let metrics = sample_metrics(space, map, t)?;
    Ok(stiffness_from(space, &metrics, diffusion))
}

/// `∫ J w φ_a φ_b dξ` for a pointwise weight `w(ξ)`.
pub fn assemble_weighted_mass(
    space: &P1Space,
    map: &DomainMap,
    t: f64,
    weight: &dyn Fn([f64; 2]) -> f64,
) -> Result<SparseOperator> {
    let metrics = sample_metrics(space, map, t)?;
    weighted_mass(space, &metrics, |cell, q| weight(space.geometry[cell].qp[q]))
}

/// `b[a] = ∫ J(ξ,t) g(ξ) φ_a dξ`.
pub fn assemble_load(space: &P1Space, map: &DomainMap, t: f64, values: &dyn Fn([f64; 2]) -> f64) -> Result<Vec<f64>> {
    let metrics = sample_metrics(space, map, t)?;
    load_from(space, &metrics, |cell, q| values(space.geometry[cell].qp[q]))
}
