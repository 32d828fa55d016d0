//! Interpolation-free local mesh adaptation.
//!
//! Every topology change (edge split, node deletion, edge swap) is executed
//! as a collapse-expansion: the affected elements shrink onto a point, the
//! connectivity changes there at zero measure, and the new elements expand
//! to the final configuration. Both phases record swept areas in the
//! [`SweptAreaLedger`], so the interface velocities of the next solve absorb
//! the modification and a uniform flow passes through it untouched.
//!
//! Removed entities become ghosts and stay in the system for the next `p`
//! solves; the [`GhostRegistry`] retires them when their history has aged
//! out.

use crate::ale::SweptAreaLedger;
use crate::mesh::{signed_area, Mesh};
use crate::solver::History;
use crate::{Error, Real, Result, Vec2, Vec4};

/// Per-node isotropic target edge length.
#[derive(Debug, Clone)]
pub struct MetricField<T> {
    pub h: Vec<T>,
    pub h_min: T,
    pub h_max: T,
    pub gradation: T,
}

#[derive(Debug, Clone)]
pub struct MetricConfig<T> {
    pub h_min: T,
    pub h_max: T,
    /// Bound on the target-length ratio of edge-adjacent nodes.
    pub gradation: T,
    /// Regularization added to the Hessian norm.
    pub epsilon: T,
}

impl<T: Real> MetricConfig<T> {
    pub fn new(h_min: T, h_max: T) -> Self {
        Self {
            h_min,
            h_max,
            gradation: T::cst(1.5),
            epsilon: T::cst(1e-6),
        }
    }
}

impl<T: Real> MetricField<T> {
    /// Target length of the edge (a, b).
    pub fn edge_target(&self, a: usize, b: usize) -> T {
        (self.h[a] + self.h[b]) * T::cst(0.5)
    }

    /// Enforces the gradation bound by lowering targets along edges.
    pub fn smooth(&mut self, mesh: &Mesh<T>) {
        let mut edges: Vec<(usize, usize)> = mesh.edge_map().keys().copied().collect();
        edges.sort_unstable();
        for _ in 0..8 {
            let mut changed = false;
            for &(a, b) in &edges {
                let cap_a = self.gradation * self.h[b];
                if self.h[a] > cap_a {
                    self.h[a] = cap_a;
                    changed = true;
                }
                let cap_b = self.gradation * self.h[a];
                if self.h[b] > cap_b {
                    self.h[b] = cap_b;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        for h in &mut self.h {
            *h = (*h).max(self.h_min).min(self.h_max);
        }
    }
}

/// Recovered-Hessian sizing: h_i = clamp(C / sqrt(eps + |H_i|), h_min, h_max),
/// with H recovered by two Green-Gauss gradient passes and C calibrated so a
/// mildly varying field reproduces the current median spacing.
pub fn hessian_metric<T: Real>(
    mesh: &Mesh<T>,
    field: &[T],
    config: &MetricConfig<T>,
) -> MetricField<T> {
    let gx = recover_gradient(mesh, field);
    let (gxx, gxy) = split_components(&gx);
    let gradx = recover_gradient(mesh, &gxx);
    let grady = recover_gradient(mesh, &gxy);

    let n = mesh.nodes.len();
    let mut spectral = vec![T::zero(); n];
    for i in 0..n {
        // symmetrized Hessian [[a, b], [b, c]]
        let a = gradx[i].x;
        let b = (gradx[i].y + grady[i].x) * T::cst(0.5);
        let c = grady[i].y;
        let mid = (a + c) * T::cst(0.5);
        let rad = (((a - c) * T::cst(0.5)).powi(2) + b * b).sqrt();
        spectral[i] = (mid + rad).abs().max((mid - rad).abs());
    }

    let h_med = mesh.median_edge_length();
    let h_ref = spectral
        .iter()
        .zip(&mesh.nodes)
        .filter(|(_, nd)| nd.status.is_active())
        .fold(T::zero(), |acc, (s, _)| acc.max(*s));
    // an (almost) constant field carries no sizing information
    let field_scale = field
        .iter()
        .fold(T::zero(), |acc, f| acc.max(f.abs()))
        .max(T::cst(1e-30));
    let flat = h_ref <= T::cst(1e-10) * field_scale / (h_med * h_med).max(T::cst(1e-30));
    let h = if flat {
        vec![config.h_max; n]
    } else {
        // regularize relative to the strongest curvature and calibrate the
        // median target to the current median spacing
        let floor = config.epsilon * h_ref;
        let mut active: Vec<T> = spectral
            .iter()
            .zip(&mesh.nodes)
            .filter(|(_, nd)| nd.status.is_active())
            .map(|(s, _)| (floor + *s).sqrt())
            .collect();
        active.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let scale = h_med * active[active.len() / 2];
        spectral
            .iter()
            .map(|s| (scale / (floor + *s).sqrt()).max(config.h_min).min(config.h_max))
            .collect()
    };
    let mut metric = MetricField {
        h,
        h_min: config.h_min,
        h_max: config.h_max,
        gradation: config.gradation,
    };
    metric.smooth(mesh);
    metric
}

/// Target spacing equal to the current local edge length; a fixed point of
/// the adaptation loop used when only mesh quality should be maintained.
pub fn current_spacing_metric<T: Real>(
    mesh: &Mesh<T>,
    h_min: T,
    h_max: T,
    gradation: T,
) -> MetricField<T> {
    let n = mesh.nodes.len();
    let mut sum = vec![T::zero(); n];
    let mut count = vec![0usize; n];
    for (&(a, b), _) in mesh.edge_map().iter() {
        let len = (mesh.nodes[a].pos - mesh.nodes[b].pos).norm();
        sum[a] += len;
        count[a] += 1;
        sum[b] += len;
        count[b] += 1;
    }
    let h = (0..n)
        .map(|i| {
            if count[i] > 0 {
                (sum[i] / T::from_usize(count[i]).unwrap())
                    .max(h_min)
                    .min(h_max)
            } else {
                h_max
            }
        })
        .collect();
    MetricField {
        h,
        h_min,
        h_max,
        gradation,
    }
}

/// Dual-area weighted Green-Gauss gradient recovery.
fn recover_gradient<T: Real>(mesh: &Mesh<T>, field: &[T]) -> Vec<Vec2<T>> {
    let n = mesh.nodes.len();
    let mut grad = vec![Vec2::zeros(); n];
    let third = T::cst(1.0 / 3.0);
    for (_, t) in mesh.active_triangles() {
        let inv = T::one() / (T::cst(2.0) * t.area);
        let mut g = Vec2::zeros();
        for i in 0..3 {
            g += t.eta[i] * (field[t.nodes[i]] * inv);
        }
        let w = t.area * third;
        for &i in &t.nodes {
            grad[i] += g * w;
        }
    }
    for i in 0..n {
        let c = mesh.dual_area.get(i).copied().unwrap_or(T::zero());
        if c > T::zero() {
            grad[i] /= c;
        }
    }
    grad
}

fn split_components<T: Real>(g: &[Vec2<T>]) -> (Vec<T>, Vec<T>) {
    (g.iter().map(|v| v.x).collect(), g.iter().map(|v| v.y).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChangeKind {
    Insert,
    Delete,
    Swap,
}

/// One accepted topology change; element sets before and after share their
/// patch boundary point-for-point.
#[derive(Debug, Clone)]
pub struct TopologyChangeRecord<T> {
    pub kind: ChangeKind,
    /// Ghosted triangles (the pre-change set).
    pub removed_tris: Vec<usize>,
    /// Created triangles (the post-change set).
    pub created_tris: Vec<usize>,
    pub removed_bedges: Vec<usize>,
    pub created_bedges: Vec<usize>,
    pub collapse_point: Vec2<T>,
    /// Created node for an insertion.
    pub new_node: Option<usize>,
    /// Ghosted node for a deletion.
    pub ghosted_node: Option<usize>,
}

/// Ghost entities with the number of solves they still take part in.
#[derive(Debug, Default, Clone)]
pub struct GhostRegistry {
    tris: Vec<(usize, usize)>,
    nodes: Vec<(usize, usize)>,
    bedges: Vec<(usize, usize)>,
}

impl GhostRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.tris.is_empty() && self.nodes.is_empty() && self.bedges.is_empty()
    }

    /// A ghost takes part in the solve of the step that created it plus the
    /// next p solves; its history is all zeros afterwards.
    fn lifespan(p: usize) -> usize {
        p + 1
    }

    pub fn register_triangle(&mut self, k: usize, p: usize) {
        self.tris.push((k, Self::lifespan(p)));
    }

    pub fn register_node(&mut self, i: usize, p: usize) {
        self.nodes.push((i, Self::lifespan(p)));
    }

    pub fn register_bedge(&mut self, e: usize, p: usize) {
        self.bedges.push((e, Self::lifespan(p)));
    }

    /// Decrements the countdowns after a completed solve and retires every
    /// entity whose ghost window expired.
    pub fn purge_after_solve<T: Real>(
        &mut self,
        mesh: &mut Mesh<T>,
        ledger: &mut SweptAreaLedger<T>,
    ) {
        let mut keep = Vec::with_capacity(self.tris.len());
        for &(k, left) in &self.tris {
            if left <= 1 {
                mesh.retire_triangle(k);
                ledger.clear_row(k);
            } else {
                keep.push((k, left - 1));
            }
        }
        self.tris = keep;

        let mut keep = Vec::with_capacity(self.bedges.len());
        for &(e, left) in &self.bedges {
            if left <= 1 {
                mesh.retire_boundary_edge(e);
                ledger.clear_bedge_row(e);
            } else {
                keep.push((e, left - 1));
            }
        }
        self.bedges = keep;

        let mut keep = Vec::with_capacity(self.nodes.len());
        for &(i, left) in &self.nodes {
            if left <= 1 {
                mesh.retire_node(i);
            } else {
                keep.push((i, left - 1));
            }
        }
        self.nodes = keep;
    }
}

fn refuse(op: &str, why: &str) -> Error {
    Error::InvalidArgument(format!("{op} refused: {why}"))
}

/// Splits the edge (a, b) at its midpoint. Interior edges produce four new
/// triangles, boundary edges two plus two boundary edges. The mesh is left
/// untouched when the operation is refused.
pub fn split_edge<T: Real>(
    mesh: &mut Mesh<T>,
    ledger: &mut SweptAreaLedger<T>,
    registry: &mut GhostRegistry,
    edge: (usize, usize),
) -> Result<TopologyChangeRecord<T>> {
    let (a, b) = edge;
    let info = mesh.edge_owners(a, b);
    let owners: Vec<usize> = info.tris.iter().flatten().copied().collect();
    if owners.is_empty() {
        return Err(refuse("split", "edge no longer exists"));
    }
    let p = ledger.p();
    let midpoint = (mesh.nodes[a].pos + mesh.nodes[b].pos) * T::cst(0.5);

    // children of a midpoint split are half of the originals; refuse only
    // degenerate input
    for &k in &owners {
        if mesh.triangles[k].area <= T::zero() {
            return Err(refuse("split", "degenerate owner triangle"));
        }
    }

    ledger.sync_new_entities(mesh);
    let mut record = TopologyChangeRecord {
        kind: ChangeKind::Insert,
        removed_tris: owners.clone(),
        created_tris: Vec::new(),
        removed_bedges: Vec::new(),
        created_bedges: Vec::new(),
        collapse_point: midpoint,
        new_node: None,
        ghosted_node: None,
    };

    // collapse phase
    for &k in &owners {
        ledger.sweep_triangle_collapse(mesh, k, midpoint);
        mesh.ghost_triangle(k);
        registry.register_triangle(k, p);
    }
    if let Some(e) = info.bedge {
        ledger.sweep_bedge_collapse(mesh, e, midpoint);
        mesh.ghost_boundary_edge(e);
        registry.register_bedge(e, p);
        record.removed_bedges.push(e);
    }

    // connectivity change at zero measure
    let tag = info.bedge.map(|e| mesh.boundary_edges[e].tag);
    let f = mesh.create_node(midpoint, tag);
    record.new_node = Some(f);
    for &k in &owners {
        let t = mesh.triangles[k].nodes;
        // rotate so the split edge is (n0, n1)
        let s = (0..3)
            .find(|&s| {
                (t[s] == a && t[(s + 1) % 3] == b) || (t[s] == b && t[(s + 1) % 3] == a)
            })
            .expect("owner contains the edge");
        let (n0, n1, opp) = (t[s], t[(s + 1) % 3], t[(s + 2) % 3]);
        record.created_tris.push(mesh.create_triangle([n0, f, opp]));
        record.created_tris.push(mesh.create_triangle([f, n1, opp]));
    }
    if let Some(e) = info.bedge {
        let [ba, bb] = mesh.boundary_edges[e].nodes;
        let tag = mesh.boundary_edges[e].tag;
        record.created_bedges.push(mesh.create_boundary_edge([ba, f], tag));
        record.created_bedges.push(mesh.create_boundary_edge([f, bb], tag));
    }

    // expansion phase
    ledger.sync_new_entities(mesh);
    for &k in &record.created_tris {
        ledger.sweep_triangle_expand(mesh, k, midpoint);
    }
    for &e in &record.created_bedges {
        ledger.sweep_bedge_expand(mesh, e, midpoint);
    }
    Ok(record)
}

/// Walks the ball of an interior node and returns the ring, counter-clockwise.
fn ring_around<T: Real>(mesh: &Mesh<T>, node: usize) -> Option<(Vec<usize>, Vec<usize>)> {
    let ball: Vec<usize> = mesh.node_tris[node]
        .iter()
        .copied()
        .filter(|&k| mesh.triangles[k].status.is_active())
        .collect();
    if ball.len() < 3 {
        return None;
    }
    // each ball triangle, rotated to start at `node`, contributes ring arc u -> v
    let mut arcs = Vec::with_capacity(ball.len());
    for &k in &ball {
        let t = mesh.triangles[k].nodes;
        let i = t.iter().position(|&n| n == node)?;
        arcs.push((t[(i + 1) % 3], t[(i + 2) % 3], k));
    }
    let mut ring = Vec::with_capacity(ball.len());
    let mut ordered = Vec::with_capacity(ball.len());
    let (start, mut cursor, k0) = arcs[0];
    ring.push(start);
    ordered.push(k0);
    while cursor != start {
        ring.push(cursor);
        let next = arcs.iter().find(|&&(u, _, k)| u == cursor && !ordered.contains(&k))?;
        ordered.push(next.2);
        cursor = next.1;
    }
    if ordered.len() != ball.len() {
        return None; // non-manifold ball
    }
    Some((ring, ordered))
}

fn triangle_min_angle<T: Real>(a: Vec2<T>, b: Vec2<T>, c: Vec2<T>) -> T {
    let mut min = T::pi();
    let pts = [a, b, c];
    for i in 0..3 {
        let u = pts[(i + 1) % 3] - pts[i];
        let v = pts[(i + 2) % 3] - pts[i];
        let nu = u.norm();
        let nv = v.norm();
        if nu == T::zero() || nv == T::zero() {
            return T::zero();
        }
        let cos = (u.dot(&v) / (nu * nv)).max(-T::one()).min(T::one());
        min = min.min(cos.acos());
    }
    min
}

/// Ear-clips a CCW simple polygon, picking the largest-min-angle ear first.
fn ear_clip<T: Real>(points: &[Vec2<T>]) -> Option<Vec<[usize; 3]>> {
    let n = points.len();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut tris = Vec::with_capacity(n - 2);
    while remaining.len() > 3 {
        let m = remaining.len();
        let mut best: Option<(T, usize)> = None;
        for idx in 0..m {
            let ia = remaining[(idx + m - 1) % m];
            let ib = remaining[idx];
            let ic = remaining[(idx + 1) % m];
            let (pa, pb, pc) = (points[ia], points[ib], points[ic]);
            if signed_area(pa, pb, pc) <= T::zero() {
                continue;
            }
            let contains_other = remaining.iter().any(|&j| {
                j != ia
                    && j != ib
                    && j != ic
                    && point_in_triangle(points[j], pa, pb, pc)
            });
            if contains_other {
                continue;
            }
            let quality = triangle_min_angle(pa, pb, pc);
            if best.map(|(q, _)| quality > q).unwrap_or(true) {
                best = Some((quality, idx));
            }
        }
        let (_, idx) = best?;
        let m = remaining.len();
        let ia = remaining[(idx + m - 1) % m];
        let ib = remaining[idx];
        let ic = remaining[(idx + 1) % m];
        tris.push([ia, ib, ic]);
        remaining.remove(idx);
    }
    let [ia, ib, ic] = [remaining[0], remaining[1], remaining[2]];
    if signed_area(points[ia], points[ib], points[ic]) <= T::zero() {
        return None;
    }
    tris.push([ia, ib, ic]);
    Some(tris)
}

fn point_in_triangle<T: Real>(p: Vec2<T>, a: Vec2<T>, b: Vec2<T>, c: Vec2<T>) -> bool {
    let s0 = signed_area(a, b, p);
    let s1 = signed_area(b, c, p);
    let s2 = signed_area(c, a, p);
    s0 >= T::zero() && s1 >= T::zero() && s2 >= T::zero()
}

/// Deletes an interior node by ghosting its ball and re-triangulating the
/// ring polygon. The node keeps its last unknowns as a ghost.
pub fn delete_node<T: Real>(
    mesh: &mut Mesh<T>,
    ledger: &mut SweptAreaLedger<T>,
    registry: &mut GhostRegistry,
    node: usize,
) -> Result<TopologyChangeRecord<T>> {
    if !mesh.nodes[node].status.is_active() {
        return Err(refuse("delete", "node not active"));
    }
    if mesh.node_bedges[node]
        .iter()
        .any(|&e| mesh.boundary_edges[e].status.is_active())
    {
        return Err(refuse("delete", "boundary node"));
    }
    let (ring, ball) = ring_around(mesh, node).ok_or_else(|| refuse("delete", "open ball"))?;
    let ring_pts: Vec<Vec2<T>> = ring.iter().map(|&i| mesh.nodes[i].pos).collect();
    let local_tris = ear_clip(&ring_pts).ok_or_else(|| refuse("delete", "no valid ear"))?;
    let patch_area: T = ball.iter().map(|&k| mesh.triangles[k].area).fold(T::zero(), |a, b| a + b);
    for t in &local_tris {
        let area = signed_area(ring_pts[t[0]], ring_pts[t[1]], ring_pts[t[2]]);
        if area <= T::cst(1e-12) * patch_area {
            return Err(refuse("delete", "degenerate re-triangulation"));
        }
    }

    let p = ledger.p();
    let x_star = mesh.nodes[node].pos;
    ledger.sync_new_entities(mesh);

    let mut record = TopologyChangeRecord {
        kind: ChangeKind::Delete,
        removed_tris: ball.clone(),
        created_tris: Vec::new(),
        removed_bedges: Vec::new(),
        created_bedges: Vec::new(),
        collapse_point: x_star,
        new_node: None,
        ghosted_node: Some(node),
    };

    for &k in &ball {
        ledger.sweep_triangle_collapse(mesh, k, x_star);
        mesh.ghost_triangle(k);
        registry.register_triangle(k, p);
    }
    mesh.ghost_node(node);
    registry.register_node(node, p);

    for t in &local_tris {
        record
            .created_tris
            .push(mesh.create_triangle([ring[t[0]], ring[t[1]], ring[t[2]]]));
    }
    ledger.sync_new_entities(mesh);
    for &k in &record.created_tris {
        ledger.sweep_triangle_expand(mesh, k, x_star);
    }
    Ok(record)
}

/// Swaps the interior edge (a, b) for the edge connecting the two opposite
/// vertices, provided the surrounding quadrilateral is strictly convex.
pub fn swap_edge<T: Real>(
    mesh: &mut Mesh<T>,
    ledger: &mut SweptAreaLedger<T>,
    registry: &mut GhostRegistry,
    edge: (usize, usize),
) -> Result<TopologyChangeRecord<T>> {
    let (a, b) = edge;
    let info = mesh.edge_owners(a, b);
    if info.bedge.is_some() {
        return Err(refuse("swap", "boundary edge"));
    }
    let (Some(k1), Some(k2)) = (info.tris[0], info.tris[1]) else {
        return Err(refuse("swap", "edge not interior"));
    };

    // orient so triangle k1 traverses a -> b
    let (k1, k2, a, b) = {
        let t = mesh.triangles[k1].nodes;
        let s = (0..3)
            .find(|&s| (t[s] == a || t[s] == b) && (t[(s + 1) % 3] == a || t[(s + 1) % 3] == b))
            .expect("owner contains edge");
        if t[s] == a {
            (k1, k2, a, b)
        } else {
            (k1, k2, b, a)
        }
    };
    let c = *mesh.triangles[k1]
        .nodes
        .iter()
        .find(|&&n| n != a && n != b)
        .unwrap();
    let d = *mesh.triangles[k2]
        .nodes
        .iter()
        .find(|&&n| n != a && n != b)
        .unwrap();

    let (pa, pb, pc, pd) = (
        mesh.nodes[a].pos,
        mesh.nodes[b].pos,
        mesh.nodes[c].pos,
        mesh.nodes[d].pos,
    );
    // quadrilateral a -> d -> b -> c must be strictly convex
    let quad = [pa, pd, pb, pc];
    for i in 0..4 {
        let u = quad[(i + 1) % 4] - quad[i];
        let v = quad[(i + 2) % 4] - quad[(i + 1) % 4];
        if crate::mesh::cross2(u, v) <= T::zero() {
            return Err(refuse("swap", "non-convex quadrilateral"));
        }
    }

    // collapse point: intersection of the two diagonals
    let x_star = segment_intersection(pa, pb, pc, pd)
        .unwrap_or_else(|| (pa + pb + pc + pd) * T::cst(0.25));

    let p = ledger.p();
    ledger.sync_new_entities(mesh);
    let mut record = TopologyChangeRecord {
        kind: ChangeKind::Swap,
        removed_tris: vec![k1, k2],
        created_tris: Vec::new(),
        removed_bedges: Vec::new(),
        created_bedges: Vec::new(),
        collapse_point: x_star,
        new_node: None,
        ghosted_node: None,
    };

    for &k in &[k1, k2] {
        ledger.sweep_triangle_collapse(mesh, k, x_star);
        mesh.ghost_triangle(k);
        registry.register_triangle(k, p);
    }
    record.created_tris.push(mesh.create_triangle([a, d, c]));
    record.created_tris.push(mesh.create_triangle([d, b, c]));
    ledger.sync_new_entities(mesh);
    for &k in &record.created_tris {
        ledger.sweep_triangle_expand(mesh, k, x_star);
    }
    Ok(record)
}

fn segment_intersection<T: Real>(
    a: Vec2<T>,
    b: Vec2<T>,
    c: Vec2<T>,
    d: Vec2<T>,
) -> Option<Vec2<T>> {
    let r = b - a;
    let s = d - c;
    let denom = crate::mesh::cross2(r, s);
    if denom == T::zero() {
        return None;
    }
    let t = crate::mesh::cross2(c - a, s) / denom;
    let u = crate::mesh::cross2(c - a, r) / denom;
    if t <= T::zero() || t >= T::one() || u <= T::zero() || u >= T::one() {
        return None;
    }
    Some(a + r * t)
}

/// Solution vectors that must stay aligned with the node list while
/// adaptation inserts nodes.
pub struct AdaptFields<'a, T: Real> {
    pub current: &'a mut Vec<Vec4<T>>,
    pub history: &'a mut History<T>,
}

impl<T: Real> AdaptFields<'_, T> {
    fn push_average(&mut self, a: usize, b: usize) {
        let w = (self.current[a] + self.current[b]) * T::cst(0.5);
        self.current.push(w);
        self.history.push_node(w);
    }
}

#[derive(Clone, Copy)]
pub struct AdaptOptions {
    pub max_sweeps: usize,
    /// Refinement hysteresis: split above sqrt(2) h, delete below h / sqrt(2).
    pub split_ratio: f64,
    pub allow_boundary_split: bool,
}

impl Default for AdaptOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 10,
            split_ratio: std::f64::consts::SQRT_2,
            allow_boundary_split: true,
        }
    }
}

/// Iteratively splits long edges, deletes over-resolved interior nodes and
/// swaps edges failing the local Delaunay criterion until the metric is
/// satisfied (or the sweep budget runs out). Every accepted operation does
/// its collapse-expansion bookkeeping immediately.
#[allow(clippy::too_many_arguments)]
pub fn adapt<T: Real>(
    mesh: &mut Mesh<T>,
    ledger: &mut SweptAreaLedger<T>,
    registry: &mut GhostRegistry,
    metric: &mut MetricField<T>,
    fields: &mut AdaptFields<'_, T>,
    projector: Option<&dyn Fn(Vec2<T>) -> Vec2<T>>,
    options: &AdaptOptions,
) -> Result<Vec<TopologyChangeRecord<T>>> {
    let mut records = Vec::new();
    let split_ratio = T::cst(options.split_ratio);
    for _ in 0..options.max_sweeps {
        let mut changed = false;

        // refinement: split edges longer than sqrt(2) * target
        let mut edges = active_edges(mesh);
        edges.sort_by(|x, y| y.2.partial_cmp(&x.2).unwrap());
        for &(a, b, _) in &edges {
            if !mesh.nodes[a].status.is_active() || !mesh.nodes[b].status.is_active() {
                continue;
            }
            let len = (mesh.nodes[a].pos - mesh.nodes[b].pos).norm();
            if len <= split_ratio * metric.edge_target(a, b) {
                continue;
            }
            let info = mesh.edge_owners(a, b);
            if info.tris[0].is_none() {
                continue; // stale snapshot entry
            }
            if info.bedge.is_some() && !options.allow_boundary_split {
                continue;
            }
            if let Ok(record) = split_edge(mesh, ledger, registry, (a, b)) {
                let f = record.new_node.expect("split creates a node");
                metric.h.push(metric.edge_target(a, b));
                fields.push_average(a, b);
                if let (Some(project), true) = (projector, record.removed_bedges.len() == 1) {
                    reposition_node(mesh, ledger, f, project(mesh.nodes[f].pos))?;
                }
                records.push(record);
                changed = true;
            }
        }

        // coarsening: delete interior nodes whose whole star is short
        let candidates: Vec<usize> = (0..mesh.nodes.len())
            .filter(|&i| mesh.nodes[i].status.is_active() && mesh.node_bedges[i].is_empty())
            .collect();
        for i in candidates {
            if !mesh.nodes[i].status.is_active() {
                continue;
            }
            let neighbors = mesh.node_neighbors(i);
            if neighbors.is_empty() {
                continue;
            }
            let all_short = neighbors.iter().all(|&j| {
                let len = (mesh.nodes[i].pos - mesh.nodes[j].pos).norm();
                len < metric.edge_target(i, j) / split_ratio
            });
            if !all_short {
                continue;
            }
            if delete_node(mesh, ledger, registry, i).map(|r| records.push(r)).is_ok() {
                changed = true;
            }
        }

        // quality: swap edges that fail the local Delaunay criterion
        let mut edges = active_edges(mesh);
        edges.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)));
        for &(a, b, _) in &edges {
            let info = mesh.edge_owners(a, b);
            let (Some(k1), Some(k2)) = (info.tris[0], info.tris[1]) else {
                continue;
            };
            if info.bedge.is_some() {
                continue;
            }
            if swap_improves_angles(mesh, (a, b), k1, k2)
                && swap_edge(mesh, ledger, registry, (a, b))
                    .map(|r| records.push(r))
                    .is_ok()
            {
                changed = true;
            }
        }

        if !changed {
            break;
        }
    }
    Ok(records)
}

fn active_edges<T: Real>(mesh: &Mesh<T>) -> Vec<(usize, usize, f64)> {
    let mut edges: Vec<(usize, usize, f64)> = mesh
        .edge_map()
        .keys()
        .map(|&(a, b)| {
            let len = (mesh.nodes[a].pos - mesh.nodes[b].pos).norm();
            (a, b, len.to_subset().unwrap_or(0.0))
        })
        .collect();
    edges.sort_unstable_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)));
    edges
}

/// Local Delaunay test: would swapping the diagonal raise the minimum angle?
fn swap_improves_angles<T: Real>(
    mesh: &Mesh<T>,
    edge: (usize, usize),
    k1: usize,
    k2: usize,
) -> bool {
    let (a, b) = edge;
    let c = match mesh.triangles[k1].nodes.iter().find(|&&n| n != a && n != b) {
        Some(&c) => c,
        None => return false,
    };
    let d = match mesh.triangles[k2].nodes.iter().find(|&&n| n != a && n != b) {
        Some(&d) => d,
        None => return false,
    };
    let (pa, pb, pc, pd) = (
        mesh.nodes[a].pos,
        mesh.nodes[b].pos,
        mesh.nodes[c].pos,
        mesh.nodes[d].pos,
    );
    let current = triangle_min_angle(pa, pb, pc).min(triangle_min_angle(pa, pb, pd));
    let swapped = triangle_min_angle(pa, pd, pc).min(triangle_min_angle(pd, pb, pc));
    swapped > current * (T::one() + T::cst(1e-10)) + T::cst(1e-14)
}

/// Moves one node to a new position (boundary re-projection), recording the
/// sweep as an ordinary deformation.
fn reposition_node<T: Real>(
    mesh: &mut Mesh<T>,
    ledger: &mut SweptAreaLedger<T>,
    node: usize,
    target: Vec2<T>,
) -> Result<()> {
    if target == mesh.nodes[node].pos {
        return Ok(());
    }
    let old = mesh.positions();
    mesh.nodes[node].pos = target;
    let new = mesh.positions();
    ledger.accumulate_deformation(mesh, &old, &new);
    mesh.compute_metrics()?;
    Ok(())
}

/// Spring-analogy mesh deformation: prescribed nodes move as given, free
/// nodes relax on edge springs of stiffness 1/length (Jacobi iteration).
/// All sweeps are accumulated; inversion fails with a tangled-mesh error.
pub fn deform_mesh<T: Real>(
    mesh: &mut Mesh<T>,
    ledger: &mut SweptAreaLedger<T>,
    prescribed: &[Option<Vec2<T>>],
    n_relax: usize,
    tol: T,
) -> Result<()> {
    let old = mesh.positions();
    let mut edges: Vec<(usize, usize, T)> = mesh
        .edge_map()
        .keys()
        .map(|&(a, b)| {
            let len = (old[a] - old[b]).norm();
            (a, b, T::one() / len)
        })
        .collect();
    edges.sort_unstable_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)));

    let n = mesh.nodes.len();
    let mut free = vec![false; n];
    let mut pos = old.clone();
    for i in 0..n {
        match prescribed.get(i).copied().flatten() {
            Some(target) => pos[i] = target,
            None => free[i] = mesh.nodes[i].status.is_active(),
        }
    }

    let mut weight_sum = vec![T::zero(); n];
    for &(a, b, w) in &edges {
        weight_sum[a] += w;
        weight_sum[b] += w;
    }

    let mut rhs = vec![Vec2::zeros(); n];
    for _ in 0..n_relax {
        for v in &mut rhs {
            *v = Vec2::zeros();
        }
        for &(a, b, w) in &edges {
            rhs[a] += pos[b] * w;
            rhs[b] += pos[a] * w;
        }
        let mut max_move = T::zero();
        for i in 0..n {
            if !free[i] || weight_sum[i] == T::zero() {
                continue;
            }
            let next = rhs[i] / weight_sum[i];
            max_move = max_move.max((next - pos[i]).norm());
            pos[i] = next;
        }
        if max_move < tol {
            break;
        }
    }

    mesh.set_positions(&pos);
    ledger.accumulate_deformation(mesh, &old, &pos);
    mesh.compute_metrics()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ale::{gcl_residual, BdfIncrementCoefficients, SweptAreaLedger};
    use crate::mesh::EntityStatus;
    use crate::gas::{ConservativeState, GasParameters};
    use crate::solver::History;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn structured_square(nx: usize, ny: usize) -> Mesh<f64> {
        let mut points = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                points.push(Vec2::new(i as f64 / nx as f64, j as f64 / ny as f64));
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut tris = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let (p00, p10, p01, p11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
                if (i + j) % 2 == 0 {
                    tris.push([p00, p10, p11]);
                    tris.push([p00, p11, p01]);
                } else {
                    tris.push([p00, p10, p01]);
                    tris.push([p10, p11, p01]);
                }
            }
        }
        let mut bedges = Vec::new();
        for i in 0..nx {
            bedges.push(([id(i, 0), id(i + 1, 0)], 1));
            bedges.push(([id(i + 1, ny), id(i, ny)], 1));
        }
        for j in 0..ny {
            bedges.push(([id(nx, j), id(nx, j + 1)], 1));
            bedges.push(([id(0, j + 1), id(0, j)], 1));
        }
        Mesh::new(points, tris, bedges)
    }

    fn empty_fields(n: usize) -> (Vec<Vec4<f64>>, History<f64>) {
        let w = vec![Vec4::zeros(); n];
        let h = History::cold_start(&w, 1);
        (w, h)
    }

    #[test]
    fn constant_field_gives_h_max() {
        let m = structured_square(8, 8);
        let field = vec![3.7; m.nodes.len()];
        let cfg = MetricConfig::new(0.01, 0.5);
        let metric = hessian_metric(&m, &field, &cfg);
        for (i, n) in m.nodes.iter().enumerate() {
            if n.status.is_active() {
                assert!((metric.h[i] - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quadratic_field_gives_near_uniform_h() {
        let m = structured_square(12, 12);
        let field: Vec<f64> = m
            .nodes
            .iter()
            .map(|n| 0.5 * (n.pos.x * n.pos.x + n.pos.y * n.pos.y))
            .collect();
        let cfg = MetricConfig::new(1e-4, 10.0);
        let metric = hessian_metric(&m, &field, &cfg);
        // interior nodes (boundary recovery is one-sided and noisier)
        let mut hs = Vec::new();
        for (i, n) in m.nodes.iter().enumerate() {
            let p = n.pos;
            if p.x > 0.2 && p.x < 0.8 && p.y > 0.2 && p.y < 0.8 {
                hs.push(metric.h[i]);
            }
        }
        let min = hs.iter().cloned().fold(f64::MAX, f64::min);
        let max = hs.iter().cloned().fold(0.0f64, f64::max);
        assert!(
            (max - min) / min < 0.2,
            "interior h varies too much: [{min}, {max}]"
        );
    }

    #[test]
    fn tanh_front_hits_h_min_at_the_front() {
        let m = structured_square(24, 24);
        let field: Vec<f64> = m
            .nodes
            .iter()
            .map(|n| (30.0 * (n.pos.x - 0.5)).tanh())
            .collect();
        let cfg = MetricConfig::new(0.02, 0.3);
        let metric = hessian_metric(&m, &field, &cfg);
        let mut at_front = f64::MAX;
        for (i, n) in m.nodes.iter().enumerate() {
            assert!(metric.h[i] >= 0.02 - 1e-12);
            assert!(metric.h[i] <= 0.3 + 1e-12);
            if (n.pos.x - 0.5).abs() < 0.1 {
                at_front = at_front.min(metric.h[i]);
            }
        }
        assert!((at_front - 0.02).abs() < 1e-9, "front not resolved: {at_front}");
    }

    #[test]
    fn interior_split_creates_midpoint_and_four_children() {
        let mut m = structured_square(2, 2);
        let mut ledger = SweptAreaLedger::new(&m, 1);
        let mut reg = GhostRegistry::new();
        let area_before = m.total_area();
        // find an interior edge
        let (a, b) = m
            .edge_map()
            .iter()
            .find(|(_, info)| info.bedge.is_none() && info.tris[1].is_some())
            .map(|(&e, _)| e)
            .unwrap();
        let rec = split_edge(&mut m, &mut ledger, &mut reg, (a, b)).unwrap();
        assert_eq!(rec.removed_tris.len(), 2);
        assert_eq!(rec.created_tris.len(), 4);
        let f = rec.new_node.unwrap();
        let mid = (m.nodes[a].pos + m.nodes[b].pos) * 0.5;
        assert!((m.nodes[f].pos - mid).norm() < 1e-15);
        assert!((m.total_area() - area_before).abs() < 1e-13);
        assert!(m.validate().is_clean(), "{}", m.validate());

        // patch bookkeeping: all increments over removed+created sum to zero
        let mut total = 0.0;
        for &k in rec.removed_tris.iter().chain(&rec.created_tris) {
            let da = ledger.tri_increments(k);
            total += da[0] + da[1] + da[2];
        }
        assert!(total.abs() < 1e-14, "patch area leaked: {total}");
    }

    #[test]
    fn boundary_split_creates_two_children_and_bedges() {
        let mut m = structured_square(2, 2);
        let mut ledger = SweptAreaLedger::new(&m, 1);
        let mut reg = GhostRegistry::new();
        let (a, b) = m
            .edge_map()
            .iter()
            .find(|(_, info)| info.bedge.is_some())
            .map(|(&e, _)| e)
            .unwrap();
        let rec = split_edge(&mut m, &mut ledger, &mut reg, (a, b)).unwrap();
        assert_eq!(rec.removed_tris.len(), 1);
        assert_eq!(rec.created_tris.len(), 2);
        assert_eq!(rec.removed_bedges.len(), 1);
        assert_eq!(rec.created_bedges.len(), 2);
        assert!(m.validate().is_clean(), "{}", m.validate());
        // straight boundary: the boundary ledger rows stay exactly zero
        for &e in &rec.created_bedges {
            assert_eq!(ledger.bedge_increments(e), [0.0; 2]);
        }
    }

    #[test]
    fn delete_regular_four_valence_node() {
        // structured square: center node of 2x2 blocks has valence 4..6;
        // build the classic 4-triangle fan instead
        let mut m: Mesh<f64> = Mesh::new(
            vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(1.0, 1.0),
                Vec2::new(0.0, 1.0),
                Vec2::new(0.5, 0.5),
            ],
            vec![[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]],
            vec![([0, 1], 1), ([1, 2], 1), ([2, 3], 1), ([3, 0], 1)],
        );
        let mut ledger = SweptAreaLedger::new(&m, 1);
        let mut reg = GhostRegistry::new();
        let area_before = m.total_area();
        let rec = delete_node(&mut m, &mut ledger, &mut reg, 4).unwrap();
        assert_eq!(rec.removed_tris.len(), 4);
        assert_eq!(rec.created_tris.len(), 2);
        assert_eq!(m.nodes[4].status, EntityStatus::Ghost);
        assert!((m.total_area() - area_before).abs() < 1e-12);
        assert!(m.validate().is_clean(), "{}", m.validate());
    }

    #[test]
    fn boundary_node_deletion_is_refused() {
        let mut m = structured_square(2, 2);
        let mut ledger = SweptAreaLedger::new(&m, 1);
        let mut reg = GhostRegistry::new();
        let boundary_node = (0..m.nodes.len())
            .find(|&i| !m.node_bedges[i].is_empty())
            .unwrap();
        assert!(delete_node(&mut m, &mut ledger, &mut reg, boundary_node).is_err());
    }

    #[test]
    fn swap_unit_square_pair() {
        let mut m: Mesh<f64> = Mesh::new(
            vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(1.0, 1.0),
                Vec2::new(0.0, 1.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
            vec![([0, 1], 1), ([1, 2], 1), ([2, 3], 1), ([3, 0], 1)],
        );
        let mut ledger = SweptAreaLedger::new(&m, 1);
        let mut reg = GhostRegistry::new();
        let rec = swap_edge(&mut m, &mut ledger, &mut reg, (0, 2)).unwrap();
        assert_eq!(rec.created_tris.len(), 2);
        // the new diagonal connects nodes 1 and 3
        for &k in &rec.created_tris {
            let nodes = m.triangles[k].nodes;
            assert!(nodes.contains(&1) && nodes.contains(&3));
            assert!((m.triangles[k].area - 0.5).abs() < 1e-14);
        }
        assert!(m.validate().is_clean());
    }

    #[test]
    fn swap_and_swap_back_cancels_ledger() {
        let mut m: Mesh<f64> = Mesh::new(
            vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(1.2, 1.0),
                Vec2::new(-0.2, 1.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
            vec![([0, 1], 1), ([1, 2], 1), ([2, 3], 1), ([3, 0], 1)],
        );
        let mut ledger = SweptAreaLedger::new(&m, 1);
        let mut reg = GhostRegistry::new();
        swap_edge(&mut m, &mut ledger, &mut reg, (0, 2)).unwrap();
        swap_edge(&mut m, &mut ledger, &mut reg, (1, 3)).unwrap();
        // per-node net increment over all rows cancels
        let mut per_node = vec![0.0; m.nodes.len()];
        for (k, t) in m.triangles.iter().enumerate() {
            if t.status == EntityStatus::Retired {
                continue;
            }
            let da = ledger.tri_increments(k);
            for (i, &n) in t.nodes.iter().enumerate() {
                per_node[n] += da[i];
            }
        }
        for (i, v) in per_node.iter().enumerate() {
            assert!(v.abs() < 1e-14, "node {i} leaked {v}");
        }
    }

    #[test]
    fn swap_refused_on_nonconvex_quad() {
        // c and d are placed so the segment c-d misses the shared edge,
        // making the union reflex at node 0
        let mut m: Mesh<f64> = Mesh::new(
            vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(0.05, 0.5),
                Vec2::new(-0.2, -0.3),
            ],
            vec![[0, 1, 2], [1, 0, 3]],
            vec![],
        );
        let mut ledger = SweptAreaLedger::new(&m, 1);
        let mut reg = GhostRegistry::new();
        assert!(swap_edge(&mut m, &mut ledger, &mut reg, (0, 1)).is_err());
    }

    #[test]
    fn exterior_edge_sweeps_cancel_between_phases() {
        // hypothetical inclusion of an edge outside the patch: collapse and
        // expansion displacements are opposite with identical geometry
        let p = [Vec2::new(0.3, 0.2), Vec2::new(1.1, 0.4)];
        let x_star = Vec2::new(0.7, 0.9);
        let (c0, c1) = crate::ale::semi_edge_sweeps(p[0], x_star, p[1], x_star);
        let (e0, e1) = crate::ale::semi_edge_sweeps(x_star, p[0], x_star, p[1]);
        assert_eq!(c0 + e0, 0.0);
        assert_eq!(c1 + e1, 0.0);
    }

    #[test]
    fn adapt_with_matching_metric_is_identity() {
        let mut m = structured_square(4, 4);
        let mut ledger = SweptAreaLedger::new(&m, 1);
        let mut reg = GhostRegistry::new();
        let mut metric = current_spacing_metric(&m, 1e-3, 10.0, 2.0);
        let (mut w, mut hist) = empty_fields(m.nodes.len());
        let mut fields = AdaptFields {
            current: &mut w,
            history: &mut hist,
        };
        let gen_before = m.generation;
        let records = adapt(
            &mut m,
            &mut ledger,
            &mut reg,
            &mut metric,
            &mut fields,
            None,
            &AdaptOptions::default(),
        )
        .unwrap();
        assert!(records.is_empty(), "{} changes", records.len());
        assert_eq!(m.generation, gen_before);
    }

    #[test]
    fn halved_target_in_disk_roughly_quadruples_nodes() {
        let mut m = structured_square(10, 10);
        let mut ledger = SweptAreaLedger::new(&m, 1);
        let mut reg = GhostRegistry::new();
        let h0 = 0.1;
        let in_disk = |p: Vec2<f64>| (p - Vec2::new(0.5, 0.5)).norm() < 0.3;
        let count_disk = |m: &Mesh<f64>| {
            m.nodes
                .iter()
                .filter(|n| n.status.is_active() && in_disk(n.pos))
                .count()
        };
        let before = count_disk(&m);
        let mut metric = current_spacing_metric(&m, 1e-3, 10.0, 3.0);
        for (i, n) in m.nodes.iter().enumerate() {
            if in_disk(n.pos) {
                metric.h[i] = h0 / 2.0;
            }
        }
        let (mut w, mut hist) = empty_fields(m.nodes.len());
        let mut fields = AdaptFields {
            current: &mut w,
            history: &mut hist,
        };
        adapt(
            &mut m,
            &mut ledger,
            &mut reg,
            &mut metric,
            &mut fields,
            None,
            &AdaptOptions::default(),
        )
        .unwrap();
        assert!(m.validate().is_clean(), "{}", m.validate());
        let after = count_disk(&m);
        let growth = after as f64 / before as f64;
        assert!(
            growth > 2.0 && growth < 8.0,
            "expected ~4x node growth in disk, got {growth} ({before} -> {after})"
        );
    }

    #[test]
    fn ghost_purge_follows_bdf_depth() {
        let mut m = structured_square(3, 3);
        let mut ledger = SweptAreaLedger::new(&m, 1);
        let mut reg = GhostRegistry::new();
        let (a, b) = m
            .edge_map()
            .iter()
            .find(|(_, info)| info.bedge.is_none() && info.tris[1].is_some())
            .map(|(&e, _)| e)
            .unwrap();
        let rec = split_edge(&mut m, &mut ledger, &mut reg, (a, b)).unwrap();
        let ghost = rec.removed_tris[0];
        assert_eq!(m.triangles[ghost].status, EntityStatus::Ghost);
        // p = 1: the ghost survives the creation solve plus one more
        reg.purge_after_solve(&mut m, &mut ledger);
        assert_eq!(m.triangles[ghost].status, EntityStatus::Ghost);
        reg.purge_after_solve(&mut m, &mut ledger);
        assert_eq!(m.triangles[ghost].status, EntityStatus::Retired);
        assert!(reg.is_empty());
    }

    #[test]
    fn steady_mode_purges_immediately() {
        let mut m = structured_square(3, 3);
        let mut ledger = SweptAreaLedger::new(&m, 0);
        let mut reg = GhostRegistry::new();
        let (a, b) = m
            .edge_map()
            .iter()
            .find(|(_, info)| info.bedge.is_none() && info.tris[1].is_some())
            .map(|(&e, _)| e)
            .unwrap();
        let rec = split_edge(&mut m, &mut ledger, &mut reg, (a, b)).unwrap();
        reg.purge_after_solve(&mut m, &mut ledger);
        assert_eq!(m.triangles[rec.removed_tris[0]].status, EntityStatus::Retired);
        assert!(reg.is_empty());
    }

    #[test]
    fn untouched_run_keeps_registry_empty() {
        let reg = GhostRegistry::new();
        assert!(reg.is_empty());
    }

    #[test]
    fn zero_boundary_displacement_keeps_interior() {
        let mut m = structured_square(5, 5);
        let mut ledger = SweptAreaLedger::new(&m, 1);
        let before = m.positions();
        let prescribed: Vec<Option<Vec2<f64>>> = m
            .nodes
            .iter()
            .map(|n| {
                if n.boundary_tag.is_some() {
                    Some(n.pos)
                } else {
                    None
                }
            })
            .collect();
        deform_mesh(&mut m, &mut ledger, &prescribed, 500, 1e-12).unwrap();
        for (a, b) in before.iter().zip(m.positions()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn rigid_translation_propagates_to_interior() {
        let mut m = structured_square(6, 6);
        let mut ledger = SweptAreaLedger::new(&m, 1);
        let d = Vec2::new(0.2, -0.1);
        let before = m.positions();
        let prescribed: Vec<Option<Vec2<f64>>> = m
            .nodes
            .iter()
            .map(|n| n.boundary_tag.map(|_| n.pos + d))
            .collect();
        deform_mesh(&mut m, &mut ledger, &prescribed, 20000, 1e-12).unwrap();
        for (i, p) in m.positions().iter().enumerate() {
            assert!(
                (p - (before[i] + d)).norm() < 1e-8,
                "node {i} off by {}",
                (p - (before[i] + d)).norm()
            );
        }
        // translation sweeps cancel per element
        let coeffs = BdfIncrementCoefficients::new(1).unwrap();
        let nu = ledger.interface_velocities(0.1, &coeffs).unwrap();
        let res = gcl_residual(&ledger, &nu, &m, 0.1);
        assert!(res.max_nodal < 1e-12);
    }

    /// Uniform flow must pass through a random sequence of operations plus a
    /// solver step without any disturbance (full-pipeline GCL check).
    #[test]
    fn mixed_operations_preserve_uniform_flow() {
        use crate::solver::{
            assemble_and_solve, BoundaryCondition, BoundarySpecs, SchemeConfig, StepContext,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut m = structured_square(7, 7);
        // jitter interior nodes for irregularity
        for i in 0..m.nodes.len() {
            if m.node_bedges[i].is_empty() {
                let j = Vec2::new(rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03));
                m.nodes[i].pos += j;
            }
        }
        m.compute_metrics().unwrap();

        let gas = GasParameters::air();
        let w0 = ConservativeState::from_primitive(1.0, Vec2::new(1.0, 1.0), 1.0, &gas)
            .unwrap()
            .as_vector();
        let mut w = vec![w0; m.nodes.len()];
        let mut hist = History::cold_start(&w, 1);
        let mut ledger = SweptAreaLedger::new(&m, 1);
        let mut reg = GhostRegistry::new();

        // a random mix of operations with the fields kept aligned
        let mut ops = 0;
        let mut guard = 0;
        while ops < 50 && guard < 4000 {
            guard += 1;
            let choice = rng.random_range(0..3);
            match choice {
                0 => {
                    let edges = active_edges(&m);
                    let (a, b, _) = edges[rng.random_range(0..edges.len())];
                    if split_edge(&mut m, &mut ledger, &mut reg, (a, b))
                        .map(|rec| {
                            let f = rec.new_node.unwrap();
                            let avg = (w[a] + w[b]) * 0.5;
                            w.push(avg);
                            hist.push_node(avg);
                            let _ = f;
                        })
                        .is_ok()
                    {
                        ops += 1;
                    }
                }
                1 => {
                    let candidates: Vec<usize> = (0..m.nodes.len())
                        .filter(|&i| {
                            m.nodes[i].status.is_active() && m.node_bedges[i].is_empty()
                        })
                        .collect();
                    if candidates.is_empty() {
                        continue;
                    }
                    let i = candidates[rng.random_range(0..candidates.len())];
                    if delete_node(&mut m, &mut ledger, &mut reg, i).is_ok() {
                        ops += 1;
                    }
                }
                _ => {
                    let edges = active_edges(&m);
                    let (a, b, _) = edges[rng.random_range(0..edges.len())];
                    if swap_edge(&mut m, &mut ledger, &mut reg, (a, b)).is_ok() {
                        ops += 1;
                    }
                }
            }
        }
        assert!(ops >= 50, "only {ops} operations succeeded");
        assert!(m.validate().is_clean(), "{}", m.validate());

        let dt = 0.05;
        let coeffs = BdfIncrementCoefficients::new(1).unwrap();
        let nu = ledger.interface_velocities(dt, &coeffs).unwrap();
        let res = gcl_residual(&ledger, &nu, &m, dt);
        assert!(res.max_nodal < 1e-12, "nodal closure {}", res.max_nodal);

        let mut bcs = BoundarySpecs::new();
        bcs.set(
            1,
            BoundaryCondition::Exterior(ConservativeState::from_vector(w0)),
        );
        let config = SchemeConfig::second_order_unsteady();
        let ctx = StepContext {
            mesh: &m,
            ledger: &ledger,
            nu: &nu,
            history: &hist,
            bcs: &bcs,
            wall_velocity: None,
            gas: &gas,
            config: &config,
            dt,
        };
        let (w1, report) = assemble_and_solve(&ctx, &w).unwrap();
        assert!(report.converged);
        for (i, n) in m.nodes.iter().enumerate() {
            if !n.status.is_active() {
                continue;
            }
            for cmp in 0..4 {
                let rel = (w1[i][cmp] - w0[cmp]).abs() / w0.amax();
                assert!(rel < 1e-12, "node {i} cmp {cmp} drifted {rel}");
            }
        }
    }
}
