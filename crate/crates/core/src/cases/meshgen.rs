//! Structured mesh builders for the benchmark cases.

use crate::mesh::Mesh;
use crate::{Real, Vec2};

/// Union-jack triangulation of a tensor grid given its coordinate lines.
/// `side_tag(side)` assigns boundary tags; sides are 0 = bottom, 1 = right,
/// 2 = top, 3 = left.
pub fn tensor_grid<T: Real>(
    xs: &[T],
    ys: &[T],
    side_tag: impl Fn(usize) -> u32,
) -> Mesh<T> {
    let nx = xs.len() - 1;
    let ny = ys.len() - 1;
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut points = Vec::with_capacity((nx + 1) * (ny + 1));
    for &y in ys {
        for &x in xs {
            points.push(Vec2::new(x, y));
        }
    }
    let mut tris = Vec::with_capacity(2 * nx * ny);
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
        bedges.push(([id(i, 0), id(i + 1, 0)], side_tag(0)));
        bedges.push(([id(i + 1, ny), id(i, ny)], side_tag(2)));
    }
    for j in 0..ny {
        bedges.push(([id(nx, j), id(nx, j + 1)], side_tag(1)));
        bedges.push(([id(0, j + 1), id(0, j)], side_tag(3)));
    }
    Mesh::new(points, tris, bedges)
}

/// Uniformly spaced coordinate lines covering [a, b] with n intervals.
pub fn linspace<T: Real>(a: T, b: T, n: usize) -> Vec<T> {
    (0..=n)
        .map(|i| a + (b - a) * T::from_usize(i).unwrap() / T::from_usize(n).unwrap())
        .collect()
}

/// Coordinate lines with uniform spacing `h_fine` inside [fine_lo, fine_hi]
/// and geometric growth up to `h_max` towards `lo` / `hi`.
pub fn graded_lines<T: Real>(lo: T, hi: T, fine_lo: T, fine_hi: T, h_fine: T, h_max: T) -> Vec<T> {
    let growth = T::cst(1.3);
    let mut lines = Vec::new();
    // fine band
    let n_fine = ((fine_hi - fine_lo) / h_fine).round().to_subset().unwrap_or(1.0) as usize;
    for i in 0..=n_fine.max(1) {
        lines.push(fine_lo + h_fine * T::from_usize(i).unwrap());
    }
    // grow towards hi
    let mut h = h_fine;
    let mut x = *lines.last().unwrap();
    while x < hi - T::cst(1e-12) {
        h = (h * growth).min(h_max);
        x = (x + h).min(hi);
        if hi - x < h * T::cst(0.4) {
            x = hi;
        }
        lines.push(x);
    }
    // grow towards lo (prepend)
    let mut front = Vec::new();
    let mut h = h_fine;
    let mut x = lines[0];
    while x > lo + T::cst(1e-12) {
        h = (h * growth).min(h_max);
        x = (x - h).max(lo);
        if x - lo < h * T::cst(0.4) {
            x = lo;
        }
        front.push(x);
    }
    front.reverse();
    front.extend(lines);
    front
}

/// Channel with a forward-facing step: [0, length] x [0, height] minus the
/// region x > step_x, y < step_y, meshed with spacing ~h.
pub fn step_channel<T: Real>(
    length: T,
    height: T,
    step_x: T,
    step_y: T,
    h: T,
    tag_inlet: u32,
    tag_outlet: u32,
    tag_wall: u32,
) -> Mesh<T> {
    let nx = (length / h).round().to_subset().unwrap_or(1.0) as usize;
    let ny = (height / h).round().to_subset().unwrap_or(1.0) as usize;
    let xs = linspace(T::zero(), length, nx.max(2));
    let ys = linspace(T::zero(), height, ny.max(2));
    // snap grid lines onto the corner
    let snap = |lines: &mut Vec<T>, v: T| {
        let mut best = 0;
        for (i, x) in lines.iter().enumerate() {
            if (*x - v).abs() < (lines[best] - v).abs() {
                best = i;
            }
        }
        lines[best] = v;
    };
    let mut xs = xs;
    let mut ys = ys;
    snap(&mut xs, step_x);
    snap(&mut ys, step_y);

    let nx = xs.len() - 1;
    let ny = ys.len() - 1;
    let inside = |i: usize, j: usize| !(xs[i] > step_x + T::cst(1e-12) && ys[j] < step_y - T::cst(1e-12));

    // keep only nodes on the fluid side
    let mut ids = vec![usize::MAX; (nx + 1) * (ny + 1)];
    let mut points = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            if inside(i, j) {
                ids[j * (nx + 1) + i] = points.len();
                points.push(Vec2::new(xs[i], ys[j]));
            }
        }
    }
    let id = |i: usize, j: usize| ids[j * (nx + 1) + i];
    let cell_fluid =
        |i: usize, j: usize| !(xs[i + 1] > step_x + T::cst(1e-12) && ys[j] < step_y + T::cst(-1e-12) + T::cst(1e-12) && ys[j + 1] <= step_y + T::cst(1e-12));

    let mut tris = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            // a cell is fluid when it is not inside the step block
            let fluid = !(xs[i] >= step_x - T::cst(1e-12) && ys[j + 1] <= step_y + T::cst(1e-12));
            let _ = cell_fluid;
            if !fluid {
                continue;
            }
            let (p00, p10, p01, p11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            if [p00, p10, p01, p11].contains(&usize::MAX) {
                continue;
            }
            if (i + j) % 2 == 0 {
                tris.push([p00, p10, p11]);
                tris.push([p00, p11, p01]);
            } else {
                tris.push([p00, p10, p01]);
                tris.push([p10, p11, p01]);
            }
        }
    }

    // boundary edges from the exterior hull of the kept cells
    let mut bedges = Vec::new();
    let eq = |a: T, b: T| (a - b).abs() < T::cst(1e-12);
    // walk all triangle edges, count occurrences; boundary edges appear once
    let mut counter = std::collections::HashMap::new();
    for t in &tris {
        for e in 0..3 {
            let (a, b) = (t[e], t[(e + 1) % 3]);
            let key = crate::mesh::edge_key(a, b);
            *counter.entry(key).or_insert(0usize) += 1;
        }
    }
    let mut keys: Vec<(usize, usize)> = counter
        .iter()
        .filter(|(_, &c)| c == 1)
        .map(|(&k, _)| k)
        .collect();
    keys.sort_unstable();
    for (a, b) in keys {
        let pa = points[a];
        let pb = points[b];
        let tag = if eq(pa.x, T::zero()) && eq(pb.x, T::zero()) {
            tag_inlet
        } else if eq(pa.x, length) && eq(pb.x, length) {
            tag_outlet
        } else {
            tag_wall
        };
        bedges.push(([a, b], tag));
    }

    let mut mesh = Mesh::new(points, tris, bedges);
    mesh.normalize_orientation();
    mesh.update_metrics_unchecked();
    mesh
}

/// O-grid around a closed surface polyline (first point not repeated):
/// `n_layers` rings grown geometrically out to radius `outer_radius` around
/// `center`. Surface nodes come first in the numbering.
pub fn o_grid<T: Real>(
    surface: &[Vec2<T>],
    center: Vec2<T>,
    outer_radius: T,
    n_layers: usize,
    growth: T,
    tag_wall: u32,
    tag_farfield: u32,
) -> Mesh<T> {
    let n = surface.len();
    // normalized radial progression 0 = surface, 1 = outer circle
    let mut s = vec![T::zero(); n_layers + 1];
    let mut acc = T::zero();
    let mut step = T::one();
    for q in 1..=n_layers {
        acc += step;
        s[q] = acc;
        step *= growth;
    }
    for q in 0..=n_layers {
        s[q] /= acc;
    }

    let mut points = Vec::with_capacity(n * (n_layers + 1));
    for q in 0..=n_layers {
        for p in surface.iter() {
            let dir = p - center;
            let len = dir.norm();
            let outer = center + dir * (outer_radius / len);
            points.push(p + (outer - p) * s[q]);
        }
    }
    let id = |q: usize, i: usize| q * n + (i % n);
    let mut tris = Vec::with_capacity(2 * n * n_layers);
    for q in 0..n_layers {
        for i in 0..n {
            let (p00, p10, p01, p11) = (id(q, i), id(q, i + 1), id(q + 1, i), id(q + 1, i + 1));
            if (i + q) % 2 == 0 {
                tris.push([p00, p10, p11]);
                tris.push([p00, p11, p01]);
            } else {
                tris.push([p00, p10, p01]);
                tris.push([p10, p11, p01]);
            }
        }
    }
    let mut bedges = Vec::new();
    for i in 0..n {
        bedges.push(([id(0, i), id(0, i + 1)], tag_wall));
        bedges.push(([id(n_layers, i), id(n_layers, i + 1)], tag_farfield));
    }
    let mut mesh = Mesh::new(points, tris, bedges);
    mesh.normalize_orientation();
    mesh.update_metrics_unchecked();
    mesh
}

/// Jittered structured square for randomized tests: interior nodes perturbed
/// by up to `jitter` times the spacing, seeded deterministically.
pub fn jittered_square<T: Real>(n: usize, jitter: T, seed: u64, tag: u32) -> Mesh<T> {
    let xs = linspace(T::zero(), T::one(), n);
    let ys = linspace(T::zero(), T::one(), n);
    let mut mesh = tensor_grid(&xs, &ys, |_| tag);
    let h = T::one() / T::from_usize(n).unwrap();
    // xorshift; good enough to displace nodes reproducibly
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).max(1);
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        T::cst((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
    };
    for i in 0..mesh.nodes.len() {
        if mesh.node_bedges[i].is_empty() {
            let dx = next() * jitter * h;
            let dy = next() * jitter * h;
            mesh.nodes[i].pos += Vec2::new(dx, dy);
        }
    }
    mesh.update_metrics_unchecked();
    mesh
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_grid_is_conforming() {
        let xs = linspace(0.0, 4.0, 40);
        let ys = linspace(0.0, 1.0, 14);
        let m = tensor_grid(&xs, &ys, |s| s as u32 + 1);
        assert_eq!(m.nodes.len(), 41 * 15); // the 615-node benchmark layout
        assert!(m.validate().is_clean(), "{}", m.validate());
    }

    #[test]
    fn graded_lines_cover_interval() {
        let lines: Vec<f64> = graded_lines(-1.0, 1.0, -0.25, 0.25, 0.025, 0.25);
        assert!((lines[0] + 1.0).abs() < 1e-12);
        assert!((lines.last().unwrap() - 1.0).abs() < 1e-12);
        for w in lines.windows(2) {
            assert!(w[1] > w[0]);
            assert!(w[1] - w[0] < 0.25 + 1e-9);
        }
    }

    #[test]
    fn step_channel_is_valid_and_l_shaped() {
        let m = step_channel(3.0, 1.0, 0.6, 0.2, 0.05, 1, 2, 3);
        assert!(m.validate().is_clean(), "{}", m.validate());
        let area: f64 = m.total_area();
        let expect = 3.0 * 1.0 - 2.4 * 0.2;
        assert!((area - expect).abs() < 1e-10, "area {area} vs {expect}");
        // no node inside the step
        for n in &m.nodes {
            assert!(!(n.pos.x > 0.6 + 1e-9 && n.pos.y < 0.2 - 1e-9));
        }
    }

    #[test]
    fn o_grid_is_valid() {
        let n = 64;
        let surface: Vec<Vec2<f64>> = (0..n)
            .map(|i| {
                let t = i as f64 / n as f64 * std::f64::consts::TAU;
                Vec2::new(0.5 + 0.5 * t.cos(), 0.1 * t.sin())
            })
            .collect();
        let m = o_grid(&surface, Vec2::new(0.5, 0.0), 12.0, 12, 1.35, 1, 2);
        assert!(m.validate().is_clean(), "{}", m.validate());
        assert_eq!(m.nodes.len(), 64 * 13);
    }

    #[test]
    fn jittered_square_remains_valid() {
        let m: Mesh<f64> = jittered_square(7, 0.4, 42, 1);
        assert_eq!(m.nodes.len(), 64);
        assert!(m.validate().is_clean());
    }
}
