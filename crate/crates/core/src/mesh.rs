//! Conforming triangulations of the reference square.
//!
//! Every triangle stores its vertices as `[newest, a, b]`: the refinement edge is
//! always `a–b`, opposite the newest vertex. Bisecting `[v0, v1, v2]` inserts the
//! midpoint `m` of `v1–v2` and produces the children `[m, v0, v1]` and `[m, v2, v0]`,
//! both positively oriented whenever the parent is.
//!
//! The full refinement history is kept in a forest of binary trees rooted at the
//! initial triangles. A [`ReferenceMesh`] is the set of active leaves of that forest
//! plus a compact, dof-numbered view of them. Edge midpoints are registered once, so
//! coarsening and re-refining a region reuses the same vertex ids; this is what makes
//! [`interpolate_between`] exact.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::math;

const NONE: u32 = u32::MAX;

static NEXT_LINEAGE: AtomicU64 = AtomicU64::new(1);

/// Stable identity of a triangle across mesh versions of one lineage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ElementKey(u32);

/// Triangles marked for refinement and for coarsening, as indices into
/// [`ReferenceMesh::triangles`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MarkSet {
    pub refine: BTreeSet<usize>,
    pub coarsen: BTreeSet<usize>,
}

impl MarkSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn refine_only<I: IntoIterator<Item = usize>>(tris: I) -> Self {
        Self {
            refine: tris.into_iter().collect(),
            coarsen: BTreeSet::new(),
        }
    }

    pub fn coarsen_only<I: IntoIterator<Item = usize>>(tris: I) -> Self {
        Self {
            refine: BTreeSet::new(),
            coarsen: tris.into_iter().collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.refine.is_empty() && self.coarsen.is_empty()
    }

    /// Drops from `coarsen` every index also present in `refine`.
    pub fn make_disjoint(&mut self) {
        let refine = &self.refine;
        self.coarsen.retain(|t| !refine.contains(t));
    }
}

/// An edge of the active mesh with its one (boundary) or two adjacent triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeshEdge {
    pub vertices: [usize; 2],
    pub triangles: [usize; 2],
    pub boundary: bool,
}

#[derive(Debug, Clone)]
struct Node {
    verts: [u32; 3],
    parent: u32,
    children: [u32; 2],
    generation: u32,
    active: bool,
    born: u64,
}

#[derive(Debug, Clone)]
struct Forest {
    coords: Vec<[f64; 2]>,
    origin: Vec<[u32; 2]>,
    midpoints: BTreeMap<(u32, u32), u32>,
    nodes: Vec<Node>,
}

type EdgeMap = BTreeMap<(u32, u32), [u32; 2]>;

#[inline]
fn edge_key(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn edge_insert(map: &mut EdgeMap, a: u32, b: u32, elem: u32) {
    let slot = map.entry(edge_key(a, b)).or_insert([NONE, NONE]);
    if slot[0] == NONE {
        slot[0] = elem;
    } else {
        debug_assert_eq!(slot[1], NONE, "edge shared by more than two triangles");
        slot[1] = elem;
    }
}

fn edge_remove(map: &mut EdgeMap, a: u32, b: u32, elem: u32) {
    let key = edge_key(a, b);
    if let Some(slot) = map.get_mut(&key) {
        if slot[0] == elem {
            slot[0] = slot[1];
            slot[1] = NONE;
        } else if slot[1] == elem {
            slot[1] = NONE;
        }
        if slot[0] == NONE {
            map.remove(&key);
        }
    }
}

fn edge_other(map: &EdgeMap, a: u32, b: u32, elem: u32) -> Option<u32> {
    let slot = map.get(&edge_key(a, b))?;
    let other = if slot[0] == elem { slot[1] } else { slot[0] };
    (other != NONE).then_some(other)
}

fn tri_edges(v: [u32; 3]) -> [(u32, u32); 3] {
    [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])]
}

impl Forest {
    fn midpoint(&mut self, a: u32, b: u32) -> u32 {
        let key = edge_key(a, b);
        if let Some(&m) = self.midpoints.get(&key) {
            return m;
        }
        let pa = self.coords[a as usize];
        let pb = self.coords[b as usize];
        let m = self.coords.len() as u32;
        self.coords.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
        self.origin.push([key.0, key.1]);
        self.midpoints.insert(key, m);
        m
    }

    fn edge_map(&self) -> EdgeMap {
        let mut map = EdgeMap::new();
        for (id, node) in self.nodes.iter().enumerate() {
            if node.active {
                for (a, b) in tri_edges(node.verts) {
                    edge_insert(&mut map, a, b, id as u32);
                }
            }
        }
        map
    }

    fn bisect(&mut self, map: &mut EdgeMap, elem: u32, version: u64) {
        let [v0, v1, v2] = self.nodes[elem as usize].verts;
        let m = self.midpoint(v1, v2);
        let generation = self.nodes[elem as usize].generation + 1;
        let children = if self.nodes[elem as usize].children[0] != NONE {
            self.nodes[elem as usize].children
        } else {
            let c0 = self.nodes.len() as u32;
            for verts in [[m, v0, v1], [m, v2, v0]] {
                self.nodes.push(Node {
                    verts,
                    parent: elem,
                    children: [NONE, NONE],
                    generation,
                    active: false,
                    born: version,
                });
            }
            self.nodes[elem as usize].children = [c0, c0 + 1];
            [c0, c0 + 1]
        };
        for (a, b) in tri_edges([v0, v1, v2]) {
            edge_remove(map, a, b, elem);
        }
        self.nodes[elem as usize].active = false;
        for c in children {
            let node = &mut self.nodes[c as usize];
            node.active = true;
            node.born = version;
            let verts = node.verts;
            for (a, b) in tri_edges(verts) {
                edge_insert(map, a, b, c);
            }
        }
    }

    /// Bisects `elem`, first refining neighbours until the refinement edge is shared
    /// compatibly, then bisecting the compatible neighbour too.
    fn bisect_with_closure(&mut self, map: &mut EdgeMap, elem: u32, version: u64) {
        loop {
            if !self.nodes[elem as usize].active {
                return;
            }
            let [_, v1, v2] = self.nodes[elem as usize].verts;
            match edge_other(map, v1, v2, elem) {
                None => {
                    self.bisect(map, elem, version);
                    return;
                }
                Some(nb) => {
                    let nv = self.nodes[nb as usize].verts;
                    if edge_key(nv[1], nv[2]) == edge_key(v1, v2) {
                        self.bisect(map, elem, version);
                        self.bisect(map, nb, version);
                        return;
                    }
                    self.bisect_with_closure(map, nb, version);
                }
            }
        }
    }

    fn merge(&mut self, map: &mut EdgeMap, parent: u32) {
        let children = self.nodes[parent as usize].children;
        for c in children {
            let verts = self.nodes[c as usize].verts;
            for (a, b) in tri_edges(verts) {
                edge_remove(map, a, b, c);
            }
            self.nodes[c as usize].active = false;
        }
        self.nodes[parent as usize].active = true;
        let verts = self.nodes[parent as usize].verts;
        for (a, b) in tri_edges(verts) {
            edge_insert(map, a, b, parent);
        }
    }
}

/// A conforming triangulation of `[0,1]²` together with its bisection history.
///
/// Meshes are values: [`refine`](Self::refine) and [`coarsen`](Self::coarsen) return
/// a new mesh of the same lineage with the version incremented.
#[derive(Debug, Clone)]
pub struct ReferenceMesh {
    forest: Forest,
    lineage: u64,
    version: u64,
    initial_min_angle: f64,
    active: Vec<u32>,
    vertex_ids: Vec<u32>,
    dof_of_vertex: Vec<u32>,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    neighbors: Vec<[Option<usize>; 3]>,
    edges: Vec<MeshEdge>,
}

impl ReferenceMesh {
    /// Uniform triangulation of the unit square with `n × n` cells, each split along
    /// its `(0,0)–(1,1)` diagonal: `2n²` triangles and `(n+1)²` vertices.
    ///
    /// Refinement edges are the longest edge of each triangle (ties go to the edge
    /// with the lowest vertex-index pair), so the two triangles of a cell share the
    /// diagonal as a compatible refinement edge.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("subdivision count must be at least 1".into()));
        }
        let np = n + 1;
        let mut coords = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                coords.push([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
        let id = |i: usize, j: usize| (j * np + i) as u32;
        let mut nodes = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let a = id(i, j);
                let b = id(i + 1, j);
                let c = id(i + 1, j + 1);
                let d = id(i, j + 1);
                for tri in [[a, b, c], [a, c, d]] {
                    nodes.push(Node {
                        verts: orient_longest_edge(&coords, tri),
                        parent: NONE,
                        children: [NONE, NONE],
                        generation: 0,
                        active: true,
                        born: 0,
                    });
                }
            }
        }
        let forest = Forest {
            origin: vec![[NONE, NONE]; coords.len()],
            coords,
            midpoints: BTreeMap::new(),
            nodes,
        };
        let mut mesh = ReferenceMesh {
            forest,
            lineage: NEXT_LINEAGE.fetch_add(1, Ordering::Relaxed),
            version: 0,
            initial_min_angle: 0.0,
            active: Vec::new(),
            vertex_ids: Vec::new(),
            dof_of_vertex: Vec::new(),
            vertices: Vec::new(),
            triangles: Vec::new(),
            neighbors: Vec::new(),
            edges: Vec::new(),
        };
        mesh.rebuild();
        mesh.initial_min_angle = mesh.min_angle();
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    /// Active triangles as dof-index triples `[newest, a, b]`.
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Neighbour across local edge `k` (the edge opposite local vertex `k`).
    pub fn neighbors(&self) -> &[[Option<usize>; 3]] {
        &self.neighbors
    }

    pub fn edges(&self) -> &[MeshEdge] {
        &self.edges
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn lineage(&self) -> u64 {
        self.lineage
    }

    pub fn refinement_edge(&self, tri: usize) -> [usize; 2] {
        let t = self.triangles[tri];
        [t[1], t[2]]
    }

    pub fn generation(&self, tri: usize) -> u32 {
        self.node(tri).generation
    }

    pub fn key(&self, tri: usize) -> ElementKey {
        ElementKey(self.active[tri])
    }

    /// Index of the active triangle with the given key, if it is active in this mesh.
    pub fn index_of(&self, key: ElementKey) -> Option<usize> {
        self.active.binary_search(&key.0).ok()
    }

    pub fn parent_key(&self, tri: usize) -> Option<ElementKey> {
        let p = self.node(tri).parent;
        (p != NONE).then_some(ElementKey(p))
    }

    /// Mesh version at which this triangle was (last) created by a bisection;
    /// zero for initial triangles.
    pub fn born_version(&self, tri: usize) -> u64 {
        self.node(tri).born
    }

    /// The other child of this triangle's parent, if that sibling is active.
    pub fn sibling(&self, tri: usize) -> Option<usize> {
        let id = self.active[tri];
        let p = self.forest.nodes[id as usize].parent;
        if p == NONE {
            return None;
        }
        let ch = self.forest.nodes[p as usize].children;
        let sib = if ch[0] == id { ch[1] } else { ch[0] };
        self.index_of(ElementKey(sib))
    }

    pub fn area(&self, tri: usize) -> f64 {
        let [a, b, c] = self.triangles[tri].map(|v| self.vertices[v]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn diameter(&self, tri: usize) -> f64 {
        let [a, b, c] = self.triangles[tri].map(|v| self.vertices[v]);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    /// Global mesh size `max_s diam(s)`.
    pub fn mesh_size(&self) -> f64 {
        (0..self.num_triangles())
            .map(|t| self.diameter(t))
            .fold(0.0, f64::max)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.area(t)).sum()
    }

    /// Smallest interior angle (radians) over all active triangles.
    pub fn min_angle(&self) -> f64 {
        let mut min = f64::INFINITY;
        for tri in &self.triangles {
            let p = tri.map(|v| self.vertices[v]);
            for k in 0..3 {
                let o = p[k];
                let u = [p[(k + 1) % 3][0] - o[0], p[(k + 1) % 3][1] - o[1]];
                let w = [p[(k + 2) % 3][0] - o[0], p[(k + 2) % 3][1] - o[1]];
                let cos = math::dot2(u, w) / (math::hypot(u[0], u[1]) * math::hypot(w[0], w[1]));
                min = min.min(math::acos(cos.clamp(-1.0, 1.0)));
            }
        }
        min
    }

    /// Minimum angle of the initial triangulation of this lineage.
    pub fn initial_min_angle(&self) -> f64 {
        self.initial_min_angle
    }

    /// Checks conformity, orientation, coverage and the shape-regularity floor.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidArgument(msg));
        for t in 0..self.num_triangles() {
            if self.area(t) <= 0.0 {
                return bad(format!("triangle {t} is not positively oriented"));
            }
        }
        let area = self.total_area();
        if (area - 1.0).abs() > 1e-12 {
            return bad(format!("triangle areas sum to {area}, not 1"));
        }
        for e in &self.edges {
            if e.boundary {
                let [a, b] = e.vertices.map(|v| self.vertices[v]);
                let on_side = |k: usize, s: f64| a[k] == s && b[k] == s;
                if !(on_side(0, 0.0) || on_side(0, 1.0) || on_side(1, 0.0) || on_side(1, 1.0)) {
                    return bad(format!(
                        "edge {:?} has one neighbour but is interior (hanging node)",
                        e.vertices
                    ));
                }
            }
        }
        // Hanging nodes also show up as active vertices lying inside an edge.
        for e in &self.edges {
            let key = edge_key(self.vertex_ids[e.vertices[0]], self.vertex_ids[e.vertices[1]]);
            if let Some(&m) = self.forest.midpoints.get(&key) {
                if self.dof_of_vertex[m as usize] != NONE {
                    return bad(format!("hanging node on edge {:?}", e.vertices));
                }
            }
        }
        let floor = 0.5 * self.initial_min_angle;
        let min = self.min_angle();
        if min < floor - 1e-12 {
            return bad(format!("minimum angle {min} below the floor {floor}"));
        }
        Ok(())
    }

    /// Bisects every triangle in `marks.refine` at least once and restores
    /// conformity by recursive closure. `marks.coarsen` is ignored.
    pub fn refine(&self, marks: &MarkSet) -> Result<Self> {
        self.check_marks(&marks.refine)?;
        let version = self.version + 1;
        let mut forest = self.forest.clone();
        let mut map = forest.edge_map();
        for &t in &marks.refine {
            forest.bisect_with_closure(&mut map, self.active[t], version);
        }
        Ok(self.derive(forest, version))
    }

    /// Merges sibling pairs back into their parent where every triangle around the
    /// shared newest vertex is marked and the merge keeps the mesh conforming.
    /// Unmergeable marks and initial triangles are skipped. `marks.refine` is ignored.
    pub fn coarsen(&self, marks: &MarkSet) -> Result<Self> {
        self.check_marks(&marks.coarsen)?;
        let version = self.version + 1;
        let mut forest = self.forest.clone();
        let mut map = forest.edge_map();
        let marked: BTreeSet<u32> = marks.coarsen.iter().map(|&t| self.active[t]).collect();
        let nodes = |f: &Forest, id: u32| f.nodes[id as usize].clone();

        for &c in &marked {
            let node = nodes(&forest, c);
            if !node.active || node.parent == NONE {
                continue;
            }
            let p = node.parent;
            let m = node.verts[0];
            let pair_ok = |f: &Forest, parent: u32| {
                f.nodes[parent as usize].children.iter().all(|&ch| {
                    let n = &f.nodes[ch as usize];
                    n.active && n.verts[0] == m && marked.contains(&ch)
                })
            };
            if !pair_ok(&forest, p) {
                continue;
            }
            let [_, p1, p2] = forest.nodes[p as usize].verts;
            let children = forest.nodes[p as usize].children;
            // The patch of `m` across the parent's refinement edge.
            let across = [(p1, children), (p2, children)].map(|(v, ch)| {
                let inside = ch.iter().find(|&&k| forest.nodes[k as usize].verts.contains(&v));
                inside.and_then(|&k| edge_other(&map, m, v, k))
            });
            match across {
                [None, None] => forest.merge(&mut map, p),
                [Some(q1), Some(q2)] => {
                    let q = nodes(&forest, q1);
                    let pp = q.parent;
                    if pp == NONE || q2 == q1 {
                        continue;
                    }
                    let pv = forest.nodes[pp as usize].verts;
                    if edge_key(pv[1], pv[2]) != edge_key(p1, p2)
                        || !forest.nodes[pp as usize].children.contains(&q2)
                        || !pair_ok(&forest, pp)
                    {
                        continue;
                    }
                    forest.merge(&mut map, p);
                    forest.merge(&mut map, pp);
                }
                _ => continue,
            }
        }
        Ok(self.derive(forest, version))
    }

    fn check_marks(&self, marks: &BTreeSet<usize>) -> Result<()> {
        match marks.iter().next_back() {
            Some(&t) if t >= self.num_triangles() => Err(Error::InvalidElement {
                index: t,
                len: self.num_triangles(),
            }),
            _ => Ok(()),
        }
    }

    fn derive(&self, forest: Forest, version: u64) -> Self {
        let mut mesh = ReferenceMesh {
            forest,
            lineage: self.lineage,
            version,
            initial_min_angle: self.initial_min_angle,
            active: Vec::new(),
            vertex_ids: Vec::new(),
            dof_of_vertex: Vec::new(),
            vertices: Vec::new(),
            triangles: Vec::new(),
            neighbors: Vec::new(),
            edges: Vec::new(),
        };
        mesh.rebuild();
        mesh
    }

    fn node(&self, tri: usize) -> &Node {
        &self.forest.nodes[self.active[tri] as usize]
    }

    fn rebuild(&mut self) {
        let f = &self.forest;
        self.active = f
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.active)
            .map(|(i, _)| i as u32)
            .collect();
        let mut used = vec![false; f.coords.len()];
        for &id in &self.active {
            for v in f.nodes[id as usize].verts {
                used[v as usize] = true;
            }
        }
        self.dof_of_vertex = vec![NONE; f.coords.len()];
        self.vertex_ids.clear();
        self.vertices.clear();
        for (v, &u) in used.iter().enumerate() {
            if u {
                self.dof_of_vertex[v] = self.vertex_ids.len() as u32;
                self.vertex_ids.push(v as u32);
                self.vertices.push(f.coords[v]);
            }
        }
        let dof = &self.dof_of_vertex;
        self.triangles = self
            .active
            .iter()
            .map(|&id| f.nodes[id as usize].verts.map(|v| dof[v as usize] as usize))
            .collect();

        let mut map: BTreeMap<(usize, usize), [usize; 2]> = BTreeMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let a = tri[(k + 1) % 3];
                let b = tri[(k + 2) % 3];
                let slot = map.entry((a.min(b), a.max(b))).or_insert([usize::MAX; 2]);
                if slot[0] == usize::MAX {
                    slot[0] = t;
                } else {
                    slot[1] = t;
                }
            }
        }
        self.neighbors = vec![[None; 3]; self.triangles.len()];
        self.edges = Vec::with_capacity(map.len());
        for (&(a, b), &[t0, t1]) in &map {
            let boundary = t1 == usize::MAX;
            self.edges.push(MeshEdge {
                vertices: [a, b],
                triangles: [t0, if boundary { t0 } else { t1 }],
                boundary,
            });
            if !boundary {
                for (t, other) in [(t0, t1), (t1, t0)] {
                    let k = local_edge(self.triangles[t], a, b);
                    self.neighbors[t][k] = Some(other);
                }
            }
        }
    }
}

fn local_edge(tri: [usize; 3], a: usize, b: usize) -> usize {
    (0..3)
        .find(|&k| tri[k] != a && tri[k] != b)
        .expect("edge belongs to triangle")
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    math::hypot(a[0] - b[0], a[1] - b[1])
}

/// Rotates a positively oriented triangle so that its longest edge sits opposite
/// local vertex 0. Ties resolve to the edge with the lowest sorted vertex pair.
fn orient_longest_edge(coords: &[[f64; 2]], tri: [u32; 3]) -> [u32; 3] {
    let mut best = 0;
    let mut best_len = -1.0;
    let mut best_pair = (u32::MAX, u32::MAX);
    for k in 0..3 {
        let a = tri[(k + 1) % 3];
        let b = tri[(k + 2) % 3];
        let len = dist(coords[a as usize], coords[b as usize]);
        let pair = edge_key(a, b);
        if len > best_len + 1e-14 || ((len - best_len).abs() <= 1e-14 && pair < best_pair) {
            best = k;
            best_len = len;
            best_pair = pair;
        }
    }
    [tri[best], tri[(best + 1) % 3], tri[(best + 2) % 3]]
}

/// Transfers P1 coefficients from `old` to `new`, where `new` descends from `old`
/// through refine/coarsen calls.
///
/// Vertices present in both meshes keep their value. A vertex only present in `new`
/// is the midpoint of some edge `a–b` lying inside a single old triangle, so its
/// value is the average of the (recursively transferred) endpoint values: exact
/// evaluation of the old piecewise-linear function.
pub fn interpolate_between(old: &ReferenceMesh, new: &ReferenceMesh, coeffs: &[f64]) -> Result<alloc::vec::Vec<f64>> {
    if old.lineage != new.lineage {
        return Err(Error::LineageMismatch("meshes come from different initial triangulations"));
    }
    if new.version < old.version || new.forest.coords.len() < old.forest.coords.len() {
        return Err(Error::LineageMismatch("target mesh is older than the source mesh"));
    }
    if coeffs.len() != old.num_vertices() {
        return Err(Error::DimensionMismatch {
            expected: old.num_vertices(),
            found: coeffs.len(),
        });
    }
    let arena = new.forest.coords.len();
    let mut value = vec![f64::NAN; arena];
    let mut known = vec![false; arena];
    for (d, &v) in old.vertex_ids.iter().enumerate() {
        if new.forest.coords[v as usize] != old.forest.coords[v as usize] {
            return Err(Error::LineageMismatch("meshes diverged after a common ancestor"));
        }
        value[v as usize] = coeffs[d];
        known[v as usize] = true;
    }
    for v in 0..arena {
        if known[v] {
            continue;
        }
        let [a, b] = new.forest.origin[v];
        if a == NONE {
            // Initial vertices are never removed, so they are always known.
            continue;
        }
        value[v] = 0.5 * (value[a as usize] + value[b as usize]);
        known[v] = true;
    }
    let out: Vec<f64> = new.vertex_ids.iter().map(|&v| value[v as usize]).collect();
    if out.iter().any(|x| x.is_nan()) {
        return Err(Error::LineageMismatch("target vertex has no ancestry in the source mesh"));
    }
    Ok(out)
}
