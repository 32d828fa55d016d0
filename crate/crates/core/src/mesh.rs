//! Conforming triangular mesh with geometry metrics and boundary representation.
//!
//! Conventions used everywhere downstream:
//! - active triangles are counter-clockwise;
//! - `eta[i]` is the edge-length-integrated normal of the edge opposite to
//!   local node `i`, pointing towards node `i` (into the triangle);
//! - boundary edges are stored in the CCW order of their owning triangle,
//!   with `eta_in` the length-integrated normal pointing into the domain;
//! - entity indices are never reused within a run: adapted-away entities
//!   become ghosts and later retire, but keep their slot.

use crate::{Error, Real, Result, Vec2};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntityStatus {
    Active,
    /// Removed by adaptation but still referenced by the BDF history.
    Ghost,
    /// Fully purged; kept only so indices stay stable.
    Retired,
}

impl EntityStatus {
    pub fn is_active(self) -> bool {
        self == EntityStatus::Active
    }
}

#[derive(Debug, Clone)]
pub struct Node<T> {
    pub pos: Vec2<T>,
    pub boundary_tag: Option<u32>,
    pub status: EntityStatus,
}

#[derive(Debug, Clone)]
pub struct Triangle<T> {
    /// Node ids, counter-clockwise.
    pub nodes: [usize; 3],
    /// Signed area; positive for well-oriented active triangles. Zero for ghosts.
    pub area: T,
    /// Integrated inward nodal normals; zero for ghosts.
    pub eta: [Vec2<T>; 3],
    pub status: EntityStatus,
}

impl<T: Real> Triangle<T> {
    pub fn local_index(&self, node: usize) -> Option<usize> {
        self.nodes.iter().position(|&n| n == node)
    }
}

#[derive(Debug, Clone)]
pub struct BoundaryEdge<T> {
    /// Endpoints in the CCW order of the owning triangle.
    pub nodes: [usize; 2],
    pub tag: u32,
    /// Length-integrated normal pointing into the domain.
    pub eta_in: Vec2<T>,
    pub status: EntityStatus,
}

#[derive(Debug, Clone)]
pub struct Mesh<T> {
    pub nodes: Vec<Node<T>>,
    pub triangles: Vec<Triangle<T>>,
    pub boundary_edges: Vec<BoundaryEdge<T>>,
    /// Triangles that are or were connected to each node (ghosts stay listed
    /// until they retire).
    pub node_tris: Vec<Vec<usize>>,
    /// Boundary edges per node, ghosts included until retirement.
    pub node_bedges: Vec<Vec<usize>>,
    /// Median-dual cell areas over active triangles.
    pub dual_area: Vec<T>,
    /// Bumped by every topology change.
    pub generation: u64,
}

pub fn rot_ccw<T: Real>(v: Vec2<T>) -> Vec2<T> {
    Vec2::new(-v.y, v.x)
}

pub fn rot_cw<T: Real>(v: Vec2<T>) -> Vec2<T> {
    Vec2::new(v.y, -v.x)
}

pub fn cross2<T: Real>(a: Vec2<T>, b: Vec2<T>) -> T {
    a.x * b.y - a.y * b.x
}

/// Signed area of a triangle given its vertex positions (positive for CCW).
pub fn signed_area<T: Real>(a: Vec2<T>, b: Vec2<T>, c: Vec2<T>) -> T {
    T::cst(0.5) * cross2(b - a, c - a)
}

impl<T: Real> Mesh<T> {
    /// Builds a mesh from raw connectivity. Metrics are computed as-is; call
    /// [`Mesh::normalize_orientation`] first when the source ordering is not
    /// trusted, then [`Mesh::compute_metrics`] to enforce positivity.
    pub fn new(
        points: Vec<Vec2<T>>,
        tris: Vec<[usize; 3]>,
        bedges: Vec<([usize; 2], u32)>,
    ) -> Self {
        let nodes = points
            .into_iter()
            .map(|pos| Node {
                pos,
                boundary_tag: None,
                status: EntityStatus::Active,
            })
            .collect::<Vec<_>>();
        let triangles = tris
            .into_iter()
            .map(|nodes| Triangle {
                nodes,
                area: T::zero(),
                eta: [Vec2::zeros(); 3],
                status: EntityStatus::Active,
            })
            .collect::<Vec<_>>();
        let boundary_edges = bedges
            .into_iter()
            .map(|(nodes, tag)| BoundaryEdge {
                nodes,
                tag,
                eta_in: Vec2::zeros(),
                status: EntityStatus::Active,
            })
            .collect::<Vec<_>>();
        let mut mesh = Self {
            nodes,
            triangles,
            boundary_edges,
            node_tris: Vec::new(),
            node_bedges: Vec::new(),
            dual_area: Vec::new(),
            generation: 0,
        };
        mesh.rebuild_adjacency();
        mesh.orient_boundary_edges();
        mesh.update_metrics_unchecked();
        mesh.tag_boundary_nodes();
        mesh
    }

    pub fn n_active_nodes(&self) -> usize {
        self.nodes.iter().filter(|n| n.status.is_active()).count()
    }

    pub fn n_active_triangles(&self) -> usize {
        self.triangles
            .iter()
            .filter(|t| t.status.is_active())
            .count()
    }

    pub fn active_triangles(&self) -> impl Iterator<Item = (usize, &Triangle<T>)> {
        self.triangles
            .iter()
            .enumerate()
            .filter(|(_, t)| t.status.is_active())
    }

    pub fn positions(&self) -> Vec<Vec2<T>> {
        self.nodes.iter().map(|n| n.pos).collect()
    }

    pub fn set_positions(&mut self, pos: &[Vec2<T>]) {
        for (node, &p) in self.nodes.iter_mut().zip(pos) {
            node.pos = p;
        }
    }

    /// Flips triangles with negative signed area to CCW order.
    pub fn normalize_orientation(&mut self) {
        for k in 0..self.triangles.len() {
            let [a, b, c] = self.triangles[k].nodes;
            let s = signed_area(self.nodes[a].pos, self.nodes[b].pos, self.nodes[c].pos);
            if s < T::zero() {
                self.triangles[k].nodes = [a, c, b];
            }
        }
        self.orient_boundary_edges();
    }

    /// Recomputes areas, nodal normals and dual areas; fails on a tangled
    /// (non-positively-oriented) active triangle.
    pub fn compute_metrics(&mut self) -> Result<()> {
        self.update_metrics_unchecked();
        for (k, t) in self.triangles.iter().enumerate() {
            if t.status.is_active() && !(t.area > T::zero()) {
                return Err(Error::TangledMesh {
                    triangle: k,
                    area: t.area.to_subset().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(())
    }

    /// Metrics without the positivity check (signed areas are stored as-is).
    pub fn update_metrics_unchecked(&mut self) {
        for t in &mut self.triangles {
            if !t.status.is_active() {
                t.area = T::zero();
                t.eta = [Vec2::zeros(); 3];
                continue;
            }
            let p = [
                self.nodes[t.nodes[0]].pos,
                self.nodes[t.nodes[1]].pos,
                self.nodes[t.nodes[2]].pos,
            ];
            t.area = signed_area(p[0], p[1], p[2]);
            for i in 0..3 {
                // edge opposite node i runs (i+1) -> (i+2) in CCW order
                t.eta[i] = rot_ccw(p[(i + 2) % 3] - p[(i + 1) % 3]);
            }
        }
        for be in &mut self.boundary_edges {
            if !be.status.is_active() {
                be.eta_in = Vec2::zeros();
                continue;
            }
            let d = self.nodes[be.nodes[1]].pos - self.nodes[be.nodes[0]].pos;
            be.eta_in = rot_ccw(d);
        }
        self.dual_area = vec![T::zero(); self.nodes.len()];
        let third = T::cst(1.0 / 3.0);
        for t in &self.triangles {
            if !t.status.is_active() {
                continue;
            }
            for &i in &t.nodes {
                self.dual_area[i] += t.area * third;
            }
        }
    }

    fn rebuild_adjacency(&mut self) {
        self.node_tris = vec![Vec::new(); self.nodes.len()];
        for (k, t) in self.triangles.iter().enumerate() {
            if t.status == EntityStatus::Retired {
                continue;
            }
            for &i in &t.nodes {
                self.node_tris[i].push(k);
            }
        }
        self.node_bedges = vec![Vec::new(); self.nodes.len()];
        for (e, be) in self.boundary_edges.iter().enumerate() {
            if be.status == EntityStatus::Retired {
                continue;
            }
            for &i in &be.nodes {
                self.node_bedges[i].push(e);
            }
        }
    }

    /// Active triangles and boundary edge sharing the edge (a, b), found by
    /// scanning the (short) adjacency lists.
    pub fn edge_owners(&self, a: usize, b: usize) -> EdgeInfo {
        let mut info = EdgeInfo::default();
        for &k in &self.node_tris[a] {
            let t = &self.triangles[k];
            if !t.status.is_active() || !t.nodes.contains(&b) || !t.nodes.contains(&a) {
                continue;
            }
            if info.tris[0].is_none() {
                info.tris[0] = Some(k);
            } else if info.tris[1].is_none() {
                info.tris[1] = Some(k);
            } else {
                info.overfull = true;
            }
        }
        for &e in &self.node_bedges[a] {
            let be = &self.boundary_edges[e];
            if be.status.is_active() && be.nodes.contains(&b) {
                info.bedge = Some(e);
            }
        }
        info
    }

    /// Active neighbor nodes of `i` (unsorted, deduplicated).
    pub fn node_neighbors(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for &k in &self.node_tris[i] {
            let t = &self.triangles[k];
            if !t.status.is_active() {
                continue;
            }
            for &j in &t.nodes {
                if j != i && !out.contains(&j) {
                    out.push(j);
                }
            }
        }
        out
    }

    /// Reorders each boundary edge to match the CCW traversal of its owning
    /// triangle, so `eta_in = rot_ccw(b - a)` points into the domain.
    fn orient_boundary_edges(&mut self) {
        let edge_owner = self.edge_map();
        for be in &mut self.boundary_edges {
            if !be.status.is_active() {
                continue;
            }
            let key = edge_key(be.nodes[0], be.nodes[1]);
            let Some(info) = edge_owner.get(&key) else {
                continue;
            };
            let Some(k) = info.tris[0] else { continue };
            let t = &self.triangles[k];
            for i in 0..3 {
                let a = t.nodes[i];
                let b = t.nodes[(i + 1) % 3];
                if edge_key(a, b) == key {
                    be.nodes = [a, b];
                    break;
                }
            }
        }
    }

    fn tag_boundary_nodes(&mut self) {
        for be in &self.boundary_edges {
            if !be.status.is_active() {
                continue;
            }
            for &i in &be.nodes {
                self.nodes[i].boundary_tag.get_or_insert(be.tag);
            }
        }
    }

    /// Map from sorted edge key to the active triangles and boundary edge
    /// sharing it.
    pub fn edge_map(&self) -> HashMap<(usize, usize), EdgeInfo> {
        let mut map: HashMap<(usize, usize), EdgeInfo> = HashMap::new();
        for (k, t) in self.triangles.iter().enumerate() {
            if !t.status.is_active() {
                continue;
            }
            for i in 0..3 {
                let key = edge_key(t.nodes[i], t.nodes[(i + 1) % 3]);
                let info = map.entry(key).or_default();
                if info.tris[0].is_none() {
                    info.tris[0] = Some(k);
                } else if info.tris[1].is_none() {
                    info.tris[1] = Some(k);
                } else {
                    info.overfull = true;
                }
            }
        }
        for (e, be) in self.boundary_edges.iter().enumerate() {
            if !be.status.is_active() {
                continue;
            }
            map.entry(edge_key(be.nodes[0], be.nodes[1]))
                .or_default()
                .bedge = Some(e);
        }
        map
    }

    /// The two median-dual interface normals of node `i_local` inside
    /// triangle `k`, ordered like the other two local nodes. Each normal
    /// points from the cell of `i_local` towards the neighboring cell and
    /// satisfies eta_i / 2 = -(eta_ij + eta_ik).
    pub fn dual_interface_normals(&self, k: usize, i_local: usize) -> [Vec2<T>; 2] {
        let t = &self.triangles[k];
        let p = [
            self.nodes[t.nodes[0]].pos,
            self.nodes[t.nodes[1]].pos,
            self.nodes[t.nodes[2]].pos,
        ];
        let centroid = (p[0] + p[1] + p[2]) * T::cst(1.0 / 3.0);
        let mut out = [Vec2::zeros(); 2];
        let mut slot = 0;
        for j in 0..3 {
            if j == i_local {
                continue;
            }
            let mid = (p[i_local] + p[j]) * T::cst(0.5);
            let d = centroid - mid;
            let mut n = rot_cw(d);
            if n.dot(&(p[j] - p[i_local])) < T::zero() {
                n = -n;
            }
            out[slot] = n;
            slot += 1;
        }
        out
    }

    /// Signed area of the domain polygon from the boundary loop(s).
    pub fn boundary_polygon_area(&self) -> T {
        let mut two_a = T::zero();
        for be in &self.boundary_edges {
            if !be.status.is_active() {
                continue;
            }
            two_a += cross2(self.nodes[be.nodes[0]].pos, self.nodes[be.nodes[1]].pos);
        }
        two_a * T::cst(0.5)
    }

    pub fn total_area(&self) -> T {
        self.triangles
            .iter()
            .filter(|t| t.status.is_active())
            .fold(T::zero(), |acc, t| acc + t.area)
    }

    pub fn median_edge_length(&self) -> T {
        let mut lengths: Vec<T> = self
            .edge_map()
            .keys()
            .map(|&(a, b)| (self.nodes[a].pos - self.nodes[b].pos).norm())
            .collect();
        if lengths.is_empty() {
            return T::zero();
        }
        lengths.sort_by(|a, b| a.partial_cmp(b).unwrap());
        lengths[lengths.len() / 2]
    }

    // ---- incremental topology editing (used by adaptation) ----

    pub fn create_node(&mut self, pos: Vec2<T>, boundary_tag: Option<u32>) -> usize {
        self.nodes.push(Node {
            pos,
            boundary_tag,
            status: EntityStatus::Active,
        });
        self.node_tris.push(Vec::new());
        self.node_bedges.push(Vec::new());
        self.dual_area.push(T::zero());
        self.nodes.len() - 1
    }

    /// Marks a deleted node ghost; its unknowns stay frozen while its ghost
    /// elements remain in the system.
    pub fn ghost_node(&mut self, i: usize) {
        self.nodes[i].status = EntityStatus::Ghost;
    }

    pub fn retire_node(&mut self, i: usize) {
        self.nodes[i].status = EntityStatus::Retired;
    }

    /// Creates an active triangle and computes its metrics. Nodes must be CCW.
    pub fn create_triangle(&mut self, nodes: [usize; 3]) -> usize {
        let k = self.triangles.len();
        let p = [
            self.nodes[nodes[0]].pos,
            self.nodes[nodes[1]].pos,
            self.nodes[nodes[2]].pos,
        ];
        let mut eta = [Vec2::zeros(); 3];
        for i in 0..3 {
            eta[i] = rot_ccw(p[(i + 2) % 3] - p[(i + 1) % 3]);
        }
        let area = signed_area(p[0], p[1], p[2]);
        self.triangles.push(Triangle {
            nodes,
            area,
            eta,
            status: EntityStatus::Active,
        });
        let third = T::cst(1.0 / 3.0);
        for &i in &nodes {
            self.node_tris[i].push(k);
            self.dual_area[i] += area * third;
        }
        self.generation += 1;
        k
    }

    /// Marks a triangle ghost: zero current area and normals, adjacency kept.
    pub fn ghost_triangle(&mut self, k: usize) {
        let third = T::cst(1.0 / 3.0);
        let area = self.triangles[k].area;
        for &i in &self.triangles[k].nodes.clone() {
            self.dual_area[i] -= area * third;
        }
        let t = &mut self.triangles[k];
        t.status = EntityStatus::Ghost;
        t.area = T::zero();
        t.eta = [Vec2::zeros(); 3];
        self.generation += 1;
    }

    pub fn retire_triangle(&mut self, k: usize) {
        for &i in &self.triangles[k].nodes.clone() {
            self.node_tris[i].retain(|&t| t != k);
        }
        self.triangles[k].status = EntityStatus::Retired;
    }

    pub fn create_boundary_edge(&mut self, nodes: [usize; 2], tag: u32) -> usize {
        let d = self.nodes[nodes[1]].pos - self.nodes[nodes[0]].pos;
        self.boundary_edges.push(BoundaryEdge {
            nodes,
            tag,
            eta_in: rot_ccw(d),
            status: EntityStatus::Active,
        });
        let e = self.boundary_edges.len() - 1;
        for &i in &nodes {
            self.nodes[i].boundary_tag.get_or_insert(tag);
            self.node_bedges[i].push(e);
        }
        e
    }

    pub fn ghost_boundary_edge(&mut self, e: usize) {
        let be = &mut self.boundary_edges[e];
        be.status = EntityStatus::Ghost;
        be.eta_in = Vec2::zeros();
    }

    pub fn retire_boundary_edge(&mut self, e: usize) {
        for &i in &self.boundary_edges[e].nodes.clone() {
            self.node_bedges[i].retain(|&b| b != e);
        }
        self.boundary_edges[e].status = EntityStatus::Retired;
    }

    /// Validation report over the active entities; never fails, only reports.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let tol = T::cst(1e-12);

        for (k, t) in self.triangles.iter().enumerate() {
            if !t.status.is_active() {
                continue;
            }
            let p = [
                self.nodes[t.nodes[0]].pos,
                self.nodes[t.nodes[1]].pos,
                self.nodes[t.nodes[2]].pos,
            ];
            let s = signed_area(p[0], p[1], p[2]);
            if !(s > T::zero()) {
                report.violations.push(Violation::Orientation {
                    triangle: k,
                    area: s.to_subset().unwrap_or(f64::NAN),
                });
            }
            let eta_sum = t.eta[0] + t.eta[1] + t.eta[2];
            let perimeter = (p[1] - p[0]).norm() + (p[2] - p[1]).norm() + (p[0] - p[2]).norm();
            if eta_sum.norm() > tol * perimeter {
                report.violations.push(Violation::NormalClosure {
                    triangle: k,
                    residual: eta_sum.norm().to_subset().unwrap_or(f64::NAN),
                });
            }
        }

        for (&(a, b), info) in &self.edge_map() {
            let owners = info.tris.iter().flatten().count();
            if info.overfull || owners > 2 {
                report.violations.push(Violation::NonConforming {
                    edge: (a, b),
                    owners: 3,
                });
            } else if owners == 1 && info.bedge.is_none() {
                report.violations.push(Violation::NonConforming {
                    edge: (a, b),
                    owners: 1,
                });
            } else if owners == 0 || (owners == 2 && info.bedge.is_some()) {
                report.violations.push(Violation::NonConforming {
                    edge: (a, b),
                    owners,
                });
            }
        }

        let mut closure = Vec2::zeros();
        let mut perimeter = T::zero();
        for be in &self.boundary_edges {
            if !be.status.is_active() {
                continue;
            }
            closure += be.eta_in;
            perimeter += be.eta_in.norm();
        }
        if closure.norm() > T::cst(1e-10) * perimeter.max(T::one()) {
            report.violations.push(Violation::BoundaryClosure {
                residual: closure.norm().to_subset().unwrap_or(f64::NAN),
            });
        }

        let total = self.total_area();
        let poly = self.boundary_polygon_area();
        if (total - poly).abs() > T::cst(1e-10) * poly.abs().max(T::one()) {
            report.violations.push(Violation::AreaMismatch {
                triangles: total.to_subset().unwrap_or(f64::NAN),
                polygon: poly.to_subset().unwrap_or(f64::NAN),
            });
        }

        report
    }
}

#[derive(Debug, Default, Clone)]
pub struct EdgeInfo {
    pub tris: [Option<usize>; 2],
    pub bedge: Option<usize>,
    overfull: bool,
}

pub fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Orientation { triangle: usize, area: f64 },
    NormalClosure { triangle: usize, residual: f64 },
    NonConforming { edge: (usize, usize), owners: usize },
    BoundaryClosure { residual: f64 },
    AreaMismatch { triangles: f64, polygon: f64 },
}

#[derive(Debug, Default, Clone)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.violations.is_empty() {
            return writeln!(f, "mesh is valid");
        }
        for v in &self.violations {
            writeln!(f, "{v:?}")?;
        }
        Ok(())
    }
}
