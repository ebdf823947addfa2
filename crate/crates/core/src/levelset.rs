//! Distance spheres `{d = r}` extracted from sampled fields, and the
//! structural checks run on them.

use std::collections::{BinaryHeap, HashMap};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::critical::{hausdorff_box_estimate, hull_criterion, CriticalReport, HausdorffEstimate};
use crate::field::{DistanceField, FieldError};
use crate::geometry::Vector;
use crate::scene::NearestSet;

type V = Vector<f64>;
type Field = DistanceField<f64>;

/// Collision window for radius snapping.
const SNAP_WINDOW: f64 = 1e-12;
/// Relative offset applied to a radius equal to some vertex value.
const SNAP_OFFSET: f64 = 1e-10;
/// Vertices closer than this many grid steps are candidates for a pinch.
const PINCH_RADIUS_STEPS: f64 = 0.5;
/// ... and form one when their distance along the mesh exceeds this.
const PINCH_ARC_STEPS: f64 = 10.0;

#[derive(Debug, thiserror::Error)]
pub enum LevelSetError {
    #[error("radius {r} outside the field's value range ({min}, {max})")]
    OutOfRange { r: f64, min: f64, max: f64 },
    #[error("only {found} mesh samples in the window (need 3)")]
    TooFewSamples { found: usize },
    #[error("the region touches the set")]
    RegionTouchesSet,
    #[error("could not sample {0} triples inside the region")]
    RegionTooSmall(usize),
    #[error("empty mesh")]
    EmptyMesh,
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cells {
    /// Planar level sets: polyline edges.
    Segments(Vec<[usize; 2]>),
    /// Spatial level sets: triangles.
    Triangles(Vec<[usize; 3]>),
}

impl Cells {
    pub fn len(&self) -> usize {
        match self {
            Cells::Segments(s) => s.len(),
            Cells::Triangles(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn vertex_lists(&self) -> Vec<&[usize]> {
        match self {
            Cells::Segments(s) => s.iter().map(|c| &c[..]).collect(),
            Cells::Triangles(t) => t.iter().map(|c| &c[..]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ComponentVerdict {
    Manifold,
    /// Locations of the combinatorial defects.
    NonManifold(Vec<V>),
}

impl ComponentVerdict {
    pub fn is_manifold(&self) -> bool {
        matches!(self, ComponentVerdict::Manifold)
    }
}

/// An extracted level set with its connected components and per-component
/// manifold verdicts.
#[derive(Clone, Debug)]
pub struct LevelSetMesh {
    /// Radius actually extracted (after snapping).
    pub r: f64,
    pub vertices: Vec<V>,
    pub cells: Cells,
    /// Vertices lying on the boundary of the grid box; chains and surfaces
    /// may end there.
    pub on_boundary: Vec<bool>,
    /// Grid spacing, enabling pinch detection.
    pub spacing: Option<f64>,
    /// Component label of every cell.
    pub components: Vec<usize>,
    pub component_count: usize,
    pub verdicts: Vec<ComponentVerdict>,
}

impl LevelSetMesh {
    /// Builds a mesh from raw cells, labels components and runs
    /// [`manifold_check`].
    pub fn new(r: f64, vertices: Vec<V>, cells: Cells, on_boundary: Vec<bool>, spacing: Option<f64>) -> Self {
        let (components, component_count) = label_components(vertices.len(), &cells);
        let mut mesh =
            Self { r, vertices, cells, on_boundary, spacing, components, component_count, verdicts: Vec::new() };
        mesh.verdicts = manifold_check(&mesh);
        mesh
    }

    pub fn dim(&self) -> usize {
        match self.cells {
            Cells::Segments(_) => 2,
            Cells::Triangles(_) => 3,
        }
    }

    pub fn is_manifold(&self) -> bool {
        self.verdicts.iter().all(ComponentVerdict::is_manifold)
    }

    pub fn defects(&self) -> Vec<V> {
        let mut out: Vec<V> = Vec::new();
        for v in &self.verdicts {
            if let ComponentVerdict::NonManifold(d) = v {
                out.extend(d.iter().copied());
            }
        }
        out
    }

    /// Total length (planar) or area (spatial).
    pub fn measure(&self) -> f64 {
        match &self.cells {
            Cells::Segments(s) => s.iter().map(|[a, b]| self.vertices[*a].distance(&self.vertices[*b])).sum(),
            Cells::Triangles(t) => t
                .iter()
                .map(|[a, b, c]| {
                    let (p, q, r) = (self.vertices[*a], self.vertices[*b], self.vertices[*c]);
                    (q - p).cross(&(r - p)).length() / 2.0
                })
                .sum(),
        }
    }

    /// Vertex → component label.
    fn vertex_components(&self) -> Vec<usize> {
        let mut out = vec![usize::MAX; self.vertices.len()];
        for (cell, &c) in self.cells.vertex_lists().iter().zip(&self.components) {
            for &v in *cell {
                out[v] = c;
            }
        }
        out
    }

    /// Planar components as ordered polylines; closed ones repeat their first
    /// vertex at the end.
    pub fn polylines(&self) -> Vec<Vec<V>> {
        let Cells::Segments(segs) = &self.cells else { return Vec::new() };
        let adj = adjacency(self.vertices.len(), segs.iter().map(|s| (s[0], s[1])));
        let mut used = vec![false; segs.len()];
        let mut seg_of: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (i, s) in segs.iter().enumerate() {
            seg_of.entry((s[0].min(s[1]), s[0].max(s[1]))).or_default().push(i);
        }
        let take = |a: usize, b: usize, used: &mut Vec<bool>| -> bool {
            if let Some(list) = seg_of.get(&(a.min(b), a.max(b))) {
                for &i in list {
                    if !used[i] {
                        used[i] = true;
                        return true;
                    }
                }
            }
            false
        };
        let mut out = Vec::new();
        // open chains first (start at odd-degree vertices), then cycles
        let mut starts: Vec<usize> = (0..self.vertices.len()).filter(|&v| adj[v].len() % 2 == 1).collect();
        starts.extend(segs.iter().map(|s| s[0]));
        for start in starts {
            while let Some(&next) =
                adj[start].iter().find(|&&n| seg_of[&(start.min(n), start.max(n))].iter().any(|&i| !used[i]))
            {
                let mut line = vec![self.vertices[start]];
                let mut cur = next;
                take(start, cur, &mut used);
                line.push(self.vertices[cur]);
                while cur != start {
                    let Some(&n) =
                        adj[cur].iter().find(|&&n| seg_of[&(cur.min(n), cur.max(n))].iter().any(|&i| !used[i]))
                    else {
                        break;
                    };
                    take(cur, n, &mut used);
                    cur = n;
                    line.push(self.vertices[cur]);
                }
                out.push(line);
            }
        }
        out
    }

    /// Wavefront OBJ text (spatial meshes) with 1-based faces.
    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let c = v.to_f64_vec();
            let z = c.get(2).copied().unwrap_or(0.0);
            let _ = writeln!(s, "v {:.17e} {:.17e} {:.17e}", c[0], c[1], z);
        }
        match &self.cells {
            Cells::Triangles(t) => {
                for [a, b, c] in t {
                    let _ = writeln!(s, "f {} {} {}", a + 1, b + 1, c + 1);
                }
            }
            Cells::Segments(segs) => {
                for [a, b] in segs {
                    let _ = writeln!(s, "l {} {}", a + 1, b + 1);
                }
            }
        }
        s
    }

    /// JSON form: polylines in the plane, vertices and triangles in space.
    pub fn to_json(&self) -> serde_json::Value {
        let verdicts: Vec<serde_json::Value> = self
            .verdicts
            .iter()
            .map(|v| match v {
                ComponentVerdict::Manifold => serde_json::json!("manifold"),
                ComponentVerdict::NonManifold(d) => {
                    serde_json::json!({"non_manifold": d.iter().map(|p| p.to_f64_vec()).collect::<Vec<_>>()})
                }
            })
            .collect();
        let mut obj = serde_json::json!({
            "r": self.r,
            "components": self.component_count,
            "verdicts": verdicts,
        });
        match &self.cells {
            Cells::Segments(_) => {
                let lines: Vec<Vec<Vec<f64>>> =
                    self.polylines().iter().map(|l| l.iter().map(|p| p.to_f64_vec()).collect()).collect();
                obj["polylines"] = serde_json::json!(lines);
            }
            Cells::Triangles(t) => {
                obj["vertices"] = serde_json::json!(self.vertices.iter().map(|p| p.to_f64_vec()).collect::<Vec<_>>());
                obj["triangles"] = serde_json::json!(t);
            }
        }
        obj
    }
}

fn adjacency(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for (a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    adj
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Connected components of cells sharing vertices, labelled in order of
/// first appearance.
fn label_components(n: usize, cells: &Cells) -> (Vec<usize>, usize) {
    let mut parent: Vec<usize> = (0..n).collect();
    let lists = cells.vertex_lists();
    for c in &lists {
        for w in c.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut label: HashMap<usize, usize> = HashMap::new();
    let comps = lists
        .iter()
        .map(|c| {
            let root = find(&mut parent, c[0]);
            let next = label.len();
            *label.entry(root).or_insert(next)
        })
        .collect();
    (comps, label.len())
}

/// Combinatorial manifold test per component.
///
/// Planar: every vertex has degree two (one at the grid boundary).
/// Spatial: every edge borders two triangles (one at the grid boundary) and
/// every vertex link is a single cycle (a path at the grid boundary). When
/// the mesh knows its grid spacing, vertices that nearly coincide while
/// being far apart along the mesh (or on different components) are reported
/// as pinches: marching output never has singular vertices, so a pinch is
/// how a singular level set shows up.
pub fn manifold_check(mesh: &LevelSetMesh) -> Vec<ComponentVerdict> {
    let mut defects: Vec<Vec<V>> = vec![Vec::new(); mesh.component_count];
    let vcomp = mesh.vertex_components();
    let boundary = |v: usize| mesh.on_boundary.get(v).copied().unwrap_or(false);
    let edges: Vec<(usize, usize)> = match &mesh.cells {
        Cells::Segments(segs) => {
            let adj = adjacency(mesh.vertices.len(), segs.iter().map(|s| (s[0], s[1])));
            for (v, nb) in adj.iter().enumerate() {
                if nb.is_empty() {
                    continue;
                }
                if !(nb.len() == 2 || nb.len() == 1 && boundary(v)) {
                    defects[vcomp[v]].push(mesh.vertices[v]);
                }
            }
            segs.iter().map(|s| (s[0], s[1])).collect()
        }
        Cells::Triangles(tris) => {
            let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
            let mut link: Vec<Vec<(usize, usize)>> = vec![Vec::new(); mesh.vertices.len()];
            for t in tris {
                for k in 0..3 {
                    let (a, b, c) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
                    *edge_count.entry((a.min(b), a.max(b))).or_default() += 1;
                    link[a].push((b, c));
                }
            }
            let mut keys: Vec<_> = edge_count.iter().map(|(k, v)| (*k, *v)).collect();
            keys.sort_unstable();
            for ((a, b), n) in &keys {
                if !(*n == 2 || *n == 1 && boundary(*a) && boundary(*b)) {
                    defects[vcomp[*a]].push((mesh.vertices[*a] + mesh.vertices[*b]) * 0.5);
                }
            }
            for (v, l) in link.iter().enumerate() {
                if !l.is_empty() && !link_is_disk(l, boundary(v)) {
                    defects[vcomp[v]].push(mesh.vertices[v]);
                }
            }
            keys.into_iter().map(|(k, _)| k).collect()
        }
    };
    if let Some(h) = mesh.spacing {
        for (a, b) in find_pinches(mesh, &edges, &vcomp, h) {
            defects[vcomp[a]].push(mesh.vertices[a]);
            if vcomp[b] != vcomp[a] {
                defects[vcomp[b]].push(mesh.vertices[b]);
            }
        }
    }
    defects
        .into_iter()
        .map(|d| if d.is_empty() { ComponentVerdict::Manifold } else { ComponentVerdict::NonManifold(d) })
        .collect()
}

/// Whether the link edges around a vertex form one cycle (or one path for
/// boundary vertices).
fn link_is_disk(link: &[(usize, usize)], boundary: bool) -> bool {
    let mut deg: HashMap<usize, usize> = HashMap::new();
    for &(a, b) in link {
        *deg.entry(a).or_default() += 1;
        *deg.entry(b).or_default() += 1;
    }
    let ends = deg.values().filter(|&&d| d == 1).count();
    if deg.values().any(|&d| d > 2) || !(ends == 0 || boundary && ends == 2) {
        return false;
    }
    let ids: Vec<usize> = {
        let mut k: Vec<usize> = deg.keys().copied().collect();
        k.sort_unstable();
        k
    };
    let idx = |v: usize| ids.binary_search(&v).expect("link vertex");
    let mut parent: Vec<usize> = (0..ids.len()).collect();
    for &(a, b) in link {
        let (ra, rb) = (find(&mut parent, idx(a)), find(&mut parent, idx(b)));
        parent[ra] = rb;
    }
    let root = find(&mut parent, 0);
    (0..ids.len()).all(|i| find(&mut parent, i) == root)
}

/// Pairs of nearly coincident vertices that are far apart along the mesh.
fn find_pinches(mesh: &LevelSetMesh, edges: &[(usize, usize)], vcomp: &[usize], h: f64) -> Vec<(usize, usize)> {
    let radius = PINCH_RADIUS_STEPS * h;
    let cutoff = PINCH_ARC_STEPS * h;
    let dim = mesh.dim();
    let key = |p: &V| -> [i64; 3] {
        let mut k = [0i64; 3];
        for i in 0..dim {
            k[i] = (p[i] / radius).floor() as i64;
        }
        k
    };
    let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in mesh.vertices.iter().enumerate() {
        if vcomp[i] != usize::MAX {
            buckets.entry(key(p)).or_default().push(i);
        }
    }
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); mesh.vertices.len()];
    for &(a, b) in edges {
        let w = mesh.vertices[a].distance(&mesh.vertices[b]);
        adj[a].push((b, w));
        adj[b].push((a, w));
    }
    let span = [-1i64, 0, 1];
    let mut out = Vec::new();
    for (i, p) in mesh.vertices.iter().enumerate() {
        if vcomp[i] == usize::MAX {
            continue;
        }
        let k = key(p);
        let mut close = Vec::new();
        for dx in &span {
            for dy in &span {
                for dz in if dim == 2 { &span[1..2] } else { &span[..] } {
                    if let Some(list) = buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        close.extend(list.iter().copied().filter(|&j| j > i && mesh.vertices[j].distance(p) < radius));
                    }
                }
            }
        }
        close.sort_unstable();
        for j in close {
            if vcomp[i] != vcomp[j] || mesh_distance_exceeds(&adj, i, j, cutoff) {
                out.push((i, j));
            }
        }
    }
    out
}

#[derive(PartialEq)]
struct Frontier(f64, usize);
impl Eq for Frontier {}
impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Dijkstra along mesh edges from `a`, stopped at `b` or at `cutoff`.
fn mesh_distance_exceeds(adj: &[Vec<(usize, f64)>], a: usize, b: usize, cutoff: f64) -> bool {
    let mut dist: HashMap<usize, f64> = HashMap::from([(a, 0.0)]);
    let mut heap = BinaryHeap::from([Frontier(0.0, a)]);
    while let Some(Frontier(d, v)) = heap.pop() {
        if v == b {
            return false;
        }
        if d > dist[&v] {
            continue;
        }
        for &(n, w) in &adj[v] {
            let nd = d + w;
            if nd <= cutoff && dist.get(&n).is_none_or(|&old| nd < old) {
                dist.insert(n, nd);
                heap.push(Frontier(nd, n));
            }
        }
    }
    true
}

/// Moves `r` off vertex values so no grid vertex lies exactly on the level
/// set.
pub fn snap_radius(field: &Field, r: f64) -> f64 {
    let range = field.max_value() - field.min_value();
    let mut r = r;
    for _ in 0..16 {
        if !field.values().iter().any(|v| (v - r).abs() <= SNAP_WINDOW) {
            break;
        }
        r += SNAP_OFFSET * range;
    }
    r
}

/// Marching squares (plane) or marching cubes (space) at level `r`.
///
/// Ambiguous faces are resolved by the mean of their four corner values.
/// In space, each cube's surface patch is traced as the closed loops formed
/// by the per-face contour segments and then fan-triangulated, so adjacent
/// cubes always agree on shared faces and the mesh is watertight.
pub fn extract_level_set(field: &Field, r: f64) -> Result<LevelSetMesh, LevelSetError> {
    let (min, max) = (field.min_value(), field.max_value());
    if !(r > min && r < max) {
        return Err(LevelSetError::OutOfRange { r, min, max });
    }
    let r = snap_radius(field, r);
    let mut b = Builder::new(field, r);
    if field.dim() == 2 {
        b.march_squares();
    } else {
        b.march_cubes();
    }
    let spacing = Some(field.h());
    let Builder { vertices, on_boundary, segments, triangles, .. } = b;
    let cells = if field.dim() == 2 { Cells::Segments(segments) } else { Cells::Triangles(triangles) };
    Ok(LevelSetMesh::new(r, vertices, cells, on_boundary, spacing))
}

struct Builder<'a> {
    field: &'a Field,
    r: f64,
    lookup: HashMap<(usize, usize), usize>,
    vertices: Vec<V>,
    on_boundary: Vec<bool>,
    segments: Vec<[usize; 2]>,
    triangles: Vec<[usize; 3]>,
}

/// Cube corner offsets, bit `i` of the corner number selects `+1` on axis `i`.
const fn corner(c: usize) -> [usize; 3] {
    [c & 1, (c >> 1) & 1, (c >> 2) & 1]
}

/// Cube faces as corner cycles.
const CUBE_FACES: [[usize; 4]; 6] =
    [[0, 1, 3, 2], [4, 5, 7, 6], [0, 1, 5, 4], [2, 3, 7, 6], [0, 2, 6, 4], [1, 3, 7, 5]];

impl<'a> Builder<'a> {
    fn new(field: &'a Field, r: f64) -> Self {
        Self {
            field,
            r,
            lookup: HashMap::new(),
            vertices: Vec::new(),
            on_boundary: Vec::new(),
            segments: Vec::new(),
            triangles: Vec::new(),
        }
    }

    fn inside(&self, idx: usize) -> bool {
        self.field.values()[idx] < self.r
    }

    /// Mesh vertex on the grid edge between adjacent grid vertices `a`, `b`.
    fn edge_vertex(&mut self, a: usize, b: usize) -> usize {
        let (a, b) = (a.min(b), a.max(b));
        let grid = self.field.grid();
        let (ia, ib) = (grid.unindex(a), grid.unindex(b));
        let axis = (0..3).find(|&i| ia[i] != ib[i]).expect("adjacent vertices");
        if let Some(&v) = self.lookup.get(&(a, axis)) {
            return v;
        }
        let (va, vb) = (self.field.values()[a], self.field.values()[b]);
        let t = (self.r - va) / (vb - va);
        let (pa, pb) = (grid.vertex(ia), grid.vertex(ib));
        let mut p = pa.lerp(&pb, t);
        // the coordinate along the edge is the only one that moves
        for i in 0..grid.dim() {
            if i != axis {
                p = p.with(i, pa[i]);
            }
        }
        let dims = grid.dims();
        let bnd = (0..grid.dim()).any(|i| i != axis && (ia[i] == 0 || ia[i] + 1 == dims[i]));
        let id = self.vertices.len();
        self.vertices.push(p);
        self.on_boundary.push(bnd);
        self.lookup.insert((a, axis), id);
        id
    }

    /// Contour segments of one quad given as a corner cycle of grid indices.
    /// Returns pairs of quad-edge numbers (edge `k` joins corners `k`, `k+1`).
    fn quad_segments(&self, q: [usize; 4]) -> Vec<(usize, usize)> {
        let s: Vec<bool> = q.iter().map(|&i| self.inside(i)).collect();
        let crossing: Vec<usize> = (0..4).filter(|&k| s[k] != s[(k + 1) % 4]).collect();
        match crossing.len() {
            2 => vec![(crossing[0], crossing[1])],
            4 => {
                let mut corners = q;
                corners.sort_unstable();
                let center = corners.iter().map(|&i| self.field.values()[i]).sum::<f64>() / 4.0;
                if (center < self.r) == s[0] {
                    // corners 0 and 2 connect through the center
                    vec![(0, 1), (2, 3)]
                } else {
                    vec![(3, 0), (1, 2)]
                }
            }
            _ => Vec::new(),
        }
    }

    fn march_squares(&mut self) {
        let grid = self.field.grid().clone();
        let [nx, ny] = [grid.dims()[0], grid.dims()[1]];
        for iy in 0..ny - 1 {
            for ix in 0..nx - 1 {
                let q = [
                    grid.index([ix, iy, 0]),
                    grid.index([ix + 1, iy, 0]),
                    grid.index([ix + 1, iy + 1, 0]),
                    grid.index([ix, iy + 1, 0]),
                ];
                for (e0, e1) in self.quad_segments(q) {
                    let a = self.edge_vertex(q[e0], q[(e0 + 1) % 4]);
                    let b = self.edge_vertex(q[e1], q[(e1 + 1) % 4]);
                    self.segments.push([a, b]);
                }
            }
        }
    }

    fn march_cubes(&mut self) {
        let grid = self.field.grid().clone();
        let d = grid.dims().to_vec();
        for iz in 0..d[2] - 1 {
            for iy in 0..d[1] - 1 {
                for ix in 0..d[0] - 1 {
                    let cube: [usize; 8] = std::array::from_fn(|c| {
                        let o = corner(c);
                        grid.index([ix + o[0], iy + o[1], iz + o[2]])
                    });
                    let inside: Vec<bool> = cube.iter().map(|&i| self.inside(i)).collect();
                    if inside.iter().all(|&s| s) || inside.iter().all(|&s| !s) {
                        continue;
                    }
                    self.cube_patch(&cube, &inside);
                }
            }
        }
    }

    fn cube_patch(&mut self, cube: &[usize; 8], inside: &[bool]) {
        // links between cube edges, keyed by the sorted corner pair
        let mut links: Vec<((usize, usize), (usize, usize))> = Vec::new();
        for face in CUBE_FACES {
            let q = face.map(|c| cube[c]);
            for (e0, e1) in self.quad_segments(q) {
                let a = (face[e0].min(face[(e0 + 1) % 4]), face[e0].max(face[(e0 + 1) % 4]));
                let b = (face[e1].min(face[(e1 + 1) % 4]), face[e1].max(face[(e1 + 1) % 4]));
                links.push((a, b));
            }
        }
        let mut used = vec![false; links.len()];
        let (mut out_c, mut in_c) = (V::zero(3), V::zero(3));
        let (mut n_out, mut n_in) = (0.0, 0.0);
        for (c, &idx) in cube.iter().enumerate() {
            let p = self.field.grid().vertex_at(idx);
            if inside[c] {
                in_c += p;
                n_in += 1.0;
            } else {
                out_c += p;
                n_out += 1.0;
            }
        }
        let outward = out_c * (1.0 / n_out) - in_c * (1.0 / n_in);
        for start in 0..links.len() {
            if used[start] {
                continue;
            }
            used[start] = true;
            let first = links[start].0;
            let mut cycle = vec![first];
            let mut cur = links[start].1;
            while cur != first {
                cycle.push(cur);
                let Some(next) = (0..links.len()).find(|&l| !used[l] && (links[l].0 == cur || links[l].1 == cur))
                else {
                    break;
                };
                used[next] = true;
                cur = if links[next].0 == cur { links[next].1 } else { links[next].0 };
            }
            let ids: Vec<usize> = cycle.iter().map(|&(a, b)| self.edge_vertex(cube[a], cube[b])).collect();
            for k in 1..ids.len().saturating_sub(1) {
                let mut t = [ids[0], ids[k], ids[k + 1]];
                let (p, q, r) = (self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]);
                if (q - p).cross(&(r - p)).dot(&outward) < 0.0 {
                    t.swap(1, 2);
                }
                self.triangles.push(t);
            }
        }
    }
}

/// Outcome of [`lipschitz_graph_check`] at one sampled mesh vertex.
#[derive(Clone, Debug, Serialize)]
pub struct GraphSample {
    pub point: Vec<f64>,
    /// Normal axis the patch is written as a graph over.
    pub axis: Vec<f64>,
    pub neighbours: usize,
    /// Largest slope `|Δheight| / |Δu|` over pairs with `|Δu| ≥ h`.
    pub lipschitz: f64,
    pub single_valued: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GraphReport {
    pub window: f64,
    pub samples: Vec<GraphSample>,
}

impl GraphReport {
    pub fn passes(&self) -> bool {
        self.samples.iter().all(|s| s.single_valued)
    }

    pub fn max_lipschitz(&self) -> f64 {
        self.samples.iter().map(|s| s.lipschitz).fold(0.0, f64::max)
    }
}

/// Unit normal of the level set at `x`: the derivative of the norm at
/// `x − witness` when the scene is attached, a central difference otherwise.
fn level_normal(field: &Field, x: &V) -> Result<V, LevelSetError> {
    if let Some(scene) = field.scene() {
        let tau = 1e-9_f64.max(field.h() * 1e-6);
        if let Ok(near) = scene.nearest_points(x, field.norm(), tau) {
            if let Ok(g) = field.norm().gradient(&(*x - near.witnesses[0])) {
                if let Some(n) = g.normalized() {
                    return Ok(n);
                }
            }
        }
    }
    let h = field.h();
    let mut g = V::zero(field.dim());
    for i in 0..field.dim() {
        let e = V::axis(field.dim(), i) * h;
        g = g.with(i, field.interpolate(&(*x + e))? - field.interpolate(&(*x - e))?);
    }
    g.normalized().ok_or(LevelSetError::Field(FieldError::OutOfBounds))
}

/// Orthonormal basis of the plane orthogonal to `n` (a line in the plane).
fn tangent_basis(n: &V) -> Vec<V> {
    if n.dim() == 2 {
        return vec![V::new2(-n.y(), n.x())];
    }
    let helper = if n.x().abs() < 0.9 { V::axis(3, 0) } else { V::axis(3, 1) };
    let t1 = n.cross(&helper).normalized().expect("non-parallel helper");
    vec![t1, n.cross(&t1)]
}

/// Local graph test of the level set at `samples` evenly spaced mesh
/// vertices: the mesh vertices joined to the sample through edges inside
/// the `window` ball are written as `u + height·n` with `u` in the tangent
/// space of `n`. The candidate axes are the normal at the sample, the mean
/// normal of the patch and, under the Euclidean norm, the hull direction of
/// the witnesses of the patch; the passing one with the smallest
/// slope is kept.
/// The projection must be single-valued: two vertices closer than
/// `h/2` in `u` may differ in height by at most `L·|Δu| + h`, `L` being the
/// slope fitted over pairs with `|Δu| ≥ h`. Other sheets passing
/// through the ball do not belong to the local patch and are ignored.
pub fn lipschitz_graph_check(
    field: &Field,
    mesh: &LevelSetMesh,
    window: f64,
    samples: usize,
) -> Result<GraphReport, LevelSetError> {
    if mesh.vertices.is_empty() {
        return Err(LevelSetError::EmptyMesh);
    }
    let h = field.h();
    let n = mesh.vertices.len();
    let picks: Vec<usize> = (0..samples.min(n)).map(|k| k * n / samples.min(n)).collect();
    let mut adjacency = vec![Vec::new(); n];
    for cell in mesh.cells.vertex_lists() {
        for &a in cell {
            for &b in cell {
                if a != b {
                    adjacency[a].push(b);
                }
            }
        }
    }
    let results: Vec<GraphSample> = picks
        .par_iter()
        .map(|&i| {
            let x = mesh.vertices[i];
            let mut seen = vec![false; n];
            seen[i] = true;
            let mut patch = vec![i];
            let mut next = 0;
            while next < patch.len() {
                for &j in &adjacency[patch[next]] {
                    if !seen[j] && mesh.vertices[j].distance(&x) <= window {
                        seen[j] = true;
                        patch.push(j);
                    }
                }
                next += 1;
            }
            if patch.len() < 3 {
                return Err(LevelSetError::TooFewSamples { found: patch.len() });
            }
            let points: Vec<V> = patch.iter().map(|&j| mesh.vertices[j]).collect();
            let own = level_normal(field, &x)?;
            let mut mean = V::zero(field.dim());
            for p in &points {
                mean += level_normal(field, p)?;
            }
            let mut axes = vec![own];
            axes.extend(mean.normalized());
            axes.extend(patch_hull_axis(field, &x, &points));
            let fits: Vec<(V, f64, bool)> = axes.iter().map(|n| graph_fit(&points, &x, n, h)).collect();
            let (axis, lipschitz, single_valued) =
                *fits.iter().filter(|f| f.2).min_by(|a, b| a.1.total_cmp(&b.1)).unwrap_or(&fits[0]);
            Ok(GraphSample {
                point: x.to_f64_vec(),
                axis: axis.to_f64_vec(),
                neighbours: points.len(),
                lipschitz,
                single_valued,
            })
        })
        .collect::<Result<_, LevelSetError>>()?;
    Ok(GraphReport { window, samples: results })
}

/// Hull direction, seen from `x`, of the witnesses of the patch vertices,
/// which are the witnesses the sheet inside the ball depends on. Under the
/// Euclidean norm the patch is a graph over this axis whenever the hull
/// test is regular. Directions are merged at angular resolution
/// [`PATCH_DIRECTION_RESOLUTION`]; more than [`PATCH_DIRECTION_LIMIT`]
/// distinct ones give no axis.
fn patch_hull_axis(field: &Field, x: &V, points: &[V]) -> Option<V> {
    let scene = field.scene()?;
    if !field.norm().is_euclidean() {
        return None;
    }
    let tau = 1e-9_f64.max(field.h() * 1e-6);
    let mut directions: Vec<V> = Vec::new();
    for p in points {
        for w in scene.nearest_points(p, field.norm(), tau).ok()?.witnesses {
            let u = (w - *x).normalized()?;
            if directions.iter().all(|d| d.distance(&u) > PATCH_DIRECTION_RESOLUTION) {
                if directions.len() == PATCH_DIRECTION_LIMIT {
                    return None;
                }
                directions.push(u);
            }
        }
    }
    let near = NearestSet { query: *x, distance: 0.0, witnesses: Vec::new(), directions, tolerance: 0.0 };
    hull_criterion(&near, 0.0).ok()?.direction()?.normalized()
}

pub const PATCH_DIRECTION_RESOLUTION: f64 = 0.02;
pub const PATCH_DIRECTION_LIMIT: usize = 40;

/// Heights of `points` over the tangent space of `normal` at `x`: the
/// fitted slope and whether the projection is single-valued.
fn graph_fit(points: &[V], x: &V, normal: &V, h: f64) -> (V, f64, bool) {
    let basis = tangent_basis(normal);
    let local: Vec<(Vec<f64>, f64)> = points
        .iter()
        .map(|p| {
            let d = *p - *x;
            (basis.iter().map(|t| t.dot(&d)).collect(), normal.dot(&d))
        })
        .collect();
    let pairs: Vec<(f64, f64)> = local
        .iter()
        .enumerate()
        .flat_map(|(a, (ua, ha))| {
            local[a + 1..].iter().map(move |(ub, hb)| {
                let du = ua.iter().zip(ub).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
                (du, (ha - hb).abs())
            })
        })
        .collect();
    let lipschitz = pairs.iter().filter(|(du, _)| *du >= h).map(|(du, dh)| dh / du).fold(0.0, f64::max);
    let single_valued = pairs.iter().all(|&(du, dh)| du > h / 2.0 || dh <= lipschitz * du + h);
    (*normal, lipschitz, single_valued)
}

/// Region for [`semiconcavity_check`].
#[derive(Clone, Debug)]
pub enum Region {
    Box {
        lo: V,
        hi: V,
    },
    /// Points of the box `[lo, hi]` with `d_lo ≤ d ≤ d_hi`.
    Band {
        d_lo: f64,
        d_hi: f64,
        lo: V,
        hi: V,
    },
}

impl Region {
    fn bounds(&self) -> (V, V) {
        match self {
            Region::Box { lo, hi } | Region::Band { lo, hi, .. } => (*lo, *hi),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub m: Vec<f64>,
    /// `u(m) − (u(a) + u(b))/2` with `u = d − (c/2)‖·‖²`; negative beyond
    /// the tolerance.
    pub gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SemiconcavityReport {
    pub c: f64,
    pub triples: usize,
    pub worst_gap: f64,
    pub violation: Option<Violation>,
}

impl SemiconcavityReport {
    pub fn passes(&self) -> bool {
        self.violation.is_none()
    }
}

pub const SEMICONCAVITY_TOLERANCE: f64 = 1e-6;

/// Midpoint test of `d − (c/2)‖·‖²` for concavity on `triples` random
/// triples `a, b, m = (a+b)/2` in the region. Uses the exact distance when
/// the scene is attached: multilinear interpolation has convex kinks at
/// cell faces that are unrelated to the function being tested.
pub fn semiconcavity_check(
    field: &Field,
    region: &Region,
    c: f64,
    triples: usize,
    seed: u64,
) -> Result<SemiconcavityReport, LevelSetError> {
    let (lo, hi) = region.bounds();
    let dim = field.dim();
    let f = |x: &V| field.exact_or_interpolated(x);
    if let Region::Band { d_lo, .. } = region {
        if *d_lo <= 0.0 {
            return Err(LevelSetError::RegionTouchesSet);
        }
    }
    let contains = |x: &V, d: f64| -> bool {
        (0..dim).all(|i| x[i] >= lo[i] && x[i] <= hi[i])
            && match region {
                Region::Box { .. } => true,
                Region::Band { d_lo, d_hi, .. } => d >= *d_lo && d <= *d_hi,
            }
    };
    let u = |x: &V, d: f64| d - c / 2.0 * x.norm_squared();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> V {
        let coords: Vec<f64> = (0..dim).map(|i| rng.gen_range(lo[i]..=hi[i])).collect();
        V::from_slice(&coords).expect("2 or 3 coordinates")
    };
    let mut worst_gap = f64::INFINITY;
    let mut violation = None;
    let mut tested = 0;
    let mut attempts = 0usize;
    while tested < triples {
        attempts += 1;
        if attempts > 200 * triples.max(1) {
            return Err(LevelSetError::RegionTooSmall(triples));
        }
        let (a, b) = (draw(&mut rng), draw(&mut rng));
        let m = (a + b) * 0.5;
        let (da, db, dm) = (f(&a)?, f(&b)?, f(&m)?);
        if da <= 0.0 || db <= 0.0 || dm <= 0.0 {
            return Err(LevelSetError::RegionTouchesSet);
        }
        if !(contains(&a, da) && contains(&b, db) && contains(&m, dm)) {
            continue;
        }
        tested += 1;
        let gap = u(&m, dm) - (u(&a, da) + u(&b, db)) / 2.0;
        if gap < worst_gap {
            worst_gap = gap;
            if gap < -SEMICONCAVITY_TOLERANCE {
                violation = Some(Violation { a: a.to_f64_vec(), b: b.to_f64_vec(), m: m.to_f64_vec(), gap });
            }
        }
    }
    Ok(SemiconcavityReport { c, triples: tested, worst_gap, violation })
}

/// Comparison of the level set `{d = r}` with the boundary of `{d ≤ r}`.
#[derive(Clone, Debug, Serialize)]
pub struct BoundaryReport {
    pub r: f64,
    pub hausdorff: f64,
    pub coincide: bool,
    pub level_points: usize,
    pub boundary_points: usize,
}

/// The boundary of the sublevel set is the extracted contour; the level set
/// additionally contains every grid vertex whose value is within `h/2` of
/// `r`, which catches parts of `{d = r}` (such as local maxima) that bound
/// no region where `d > r`.
pub fn boundary_vs_level(field: &Field, r: f64) -> Result<BoundaryReport, LevelSetError> {
    let mesh = extract_level_set(field, r)?;
    let h = field.h();
    let boundary = &mesh.vertices;
    let mut level: Vec<V> = boundary.clone();
    for (i, v) in field.values().iter().enumerate() {
        if (v - mesh.r).abs() <= h / 2.0 {
            level.push(field.grid().vertex_at(i));
        }
    }
    let hausdorff = directed_hausdorff(&level, boundary, h).max(directed_hausdorff(boundary, &level, h));
    Ok(BoundaryReport {
        r: mesh.r,
        hausdorff,
        coincide: hausdorff <= 2.0 * h,
        level_points: level.len(),
        boundary_points: boundary.len(),
    })
}

/// `max_{a∈A} min_{b∈B} |a − b|` using a uniform bucket grid.
fn directed_hausdorff(a: &[V], b: &[V], cell: f64) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if b.is_empty() {
        return f64::INFINITY;
    }
    let key = |p: &V| -> [i64; 3] {
        let mut k = [0; 3];
        for i in 0..p.dim() {
            k[i] = (p[i] / cell).floor() as i64;
        }
        k
    };
    let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in b.iter().enumerate() {
        buckets.entry(key(p)).or_default().push(i);
    }
    let dim = a[0].dim();
    a.par_iter()
        .map(|p| {
            let k = key(p);
            let mut best = f64::INFINITY;
            let mut ring = 0i64;
            loop {
                for dx in -ring..=ring {
                    for dy in -ring..=ring {
                        let zs: Vec<i64> = if dim == 2 { vec![0] } else { (-ring..=ring).collect() };
                        for dz in zs {
                            if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                                continue;
                            }
                            if let Some(list) = buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                                for &j in list {
                                    best = best.min(p.distance(&b[j]));
                                }
                            }
                        }
                    }
                }
                if best <= ring as f64 * cell || ring > 1_000_000 {
                    break best;
                }
                ring += 1;
            }
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepEntry {
    pub r: f64,
    /// Radius actually extracted after snapping.
    pub r_used: f64,
    pub components: usize,
    pub manifold: bool,
    pub defects: usize,
    /// Distance from `r` to the nearest detected critical value.
    pub critical_value_gap: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub radii: Vec<f64>,
    pub entries: Vec<SweepEntry>,
    pub exceptional: HausdorffEstimate,
}

impl SweepReport {
    pub fn failing_radii(&self) -> Vec<f64> {
        self.entries.iter().filter(|e| !e.manifold).map(|e| e.r).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "radii": self.radii,
            "entries": self.entries,
            "failing_radii": self.failing_radii(),
            "exceptional": self.exceptional.summary_json(),
        })
    }
}

/// `count` equispaced radii in `[r_min, r_max]`.
pub fn sweep_radii(r_min: f64, r_max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![r_min],
        n => (0..n).map(|k| r_min + (r_max - r_min) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Extracts and checks the level set at each radius. Failing radii are
/// summarized by a box-counting premeasure with exponent `(n−1)/2` at scale
/// `4h`.
pub fn radius_sweep(
    field: &Field,
    r_min: f64,
    r_max: f64,
    count: usize,
    critical: Option<&CriticalReport>,
) -> Result<SweepReport, LevelSetError> {
    let (min, max) = (field.min_value(), field.max_value());
    for r in [r_min, r_max] {
        if !(r > min && r < max) {
            return Err(LevelSetError::OutOfRange { r, min, max });
        }
    }
    let radii = sweep_radii(r_min, r_max, count);
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LevelSetError::OutOfRange { r: r_max, min: r_min, max });
    }
    let entries: Vec<SweepEntry> = radii
        .par_iter()
        .map(|&r| {
            let mesh = extract_level_set(field, r)?;
            Ok(SweepEntry {
                r,
                r_used: mesh.r,
                components: mesh.component_count,
                manifold: mesh.is_manifold(),
                defects: mesh.defects().len(),
                critical_value_gap: critical.and_then(|c| c.distance_to_critical_value(r)),
            })
        })
        .collect::<Result<_, LevelSetError>>()?;
    let failing: Vec<f64> = entries.iter().filter(|e| !e.manifold).map(|e| e.r).collect();
    let s = (field.dim() as f64 - 1.0) / 2.0;
    let exceptional = hausdorff_box_estimate(&failing, s, 4.0 * field.h());
    Ok(SweepReport { radii, entries, exceptional })
}
