//! Airfoil geometry and aerodynamic surface quantities.

use crate::gas::{self, GasParameters};
use crate::mesh::Mesh;
use crate::{Error, Real, Result, Vec2, Vec4};
use std::path::Path;

/// NACA0012 profile with the closed-trailing-edge thickness polynomial,
/// cosine-spaced, returned as a closed CCW polyline (first point not
/// repeated), trailing edge first.
pub fn naca0012_surface<T: Real>(n_half: usize) -> Vec<Vec2<T>> {
    let thickness = |x: f64| -> f64 {
        0.6 * (0.2969 * x.sqrt() - 0.1260 * x - 0.3516 * x * x + 0.2843 * x * x * x
            - 0.1036 * x * x * x * x)
    };
    let mut pts = Vec::with_capacity(2 * n_half);
    // upper surface TE -> LE, then lower LE -> TE (skipping both seam points)
    for i in 0..n_half {
        let beta = std::f64::consts::PI * i as f64 / n_half as f64;
        let x = 0.5 * (1.0 + beta.cos());
        pts.push(Vec2::new(T::cst(x), T::cst(thickness(x))));
    }
    for i in 0..n_half {
        let beta = std::f64::consts::PI * i as f64 / n_half as f64;
        let x = 0.5 * (1.0 - beta.cos());
        pts.push(Vec2::new(T::cst(x), T::cst(-thickness(x))));
    }
    pts
}

/// Loads an airfoil contour from a two-column CSV (x, y), one point per row,
/// ordered around the profile, first point not repeated.
pub fn load_surface_csv<T: Real>(path: &Path) -> Result<Vec<Vec2<T>>> {
    let table = crate::io::read_csv_table(path)?;
    let mut pts = Vec::with_capacity(table.len());
    for row in &table {
        if row.len() < 2 {
            return Err(Error::Config(format!(
                "{}: airfoil rows need x and y columns",
                path.display()
            )));
        }
        pts.push(Vec2::new(T::cst(row[0]), T::cst(row[1])));
    }
    if pts.len() < 8 {
        return Err(Error::Config(format!(
            "{}: too few airfoil points ({})",
            path.display(),
            pts.len()
        )));
    }
    Ok(pts)
}

/// Closest point on a closed polyline.
pub fn project_to_polyline<T: Real>(p: Vec2<T>, poly: &[Vec2<T>]) -> Vec2<T> {
    let mut best = poly[0];
    let mut best_d2 = (p - poly[0]).norm_squared();
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let ab = b - a;
        let len2 = ab.norm_squared();
        let t = if len2 > T::zero() {
            ((p - a).dot(&ab) / len2).max(T::zero()).min(T::one())
        } else {
            T::zero()
        };
        let q = a + ab * t;
        let d2 = (p - q).norm_squared();
        if d2 < best_d2 {
            best_d2 = d2;
            best = q;
        }
    }
    best
}

/// Pressure coefficient along the wall nodes, sorted by x.
pub fn cp_distribution<T: Real>(
    mesh: &Mesh<T>,
    w: &[Vec4<T>],
    wall_tag: u32,
    p_inf: T,
    q_inf: T,
    gas: &GasParameters<T>,
) -> Result<Vec<(T, T)>> {
    let mut seen = vec![false; mesh.nodes.len()];
    let mut out = Vec::new();
    for be in &mesh.boundary_edges {
        if !be.status.is_active() || be.tag != wall_tag {
            continue;
        }
        for &i in &be.nodes {
            if seen[i] {
                continue;
            }
            seen[i] = true;
            let p = gas::pressure(&gas::ConservativeState::from_vector(w[i]), gas)?;
            out.push((mesh.nodes[i].pos.x, (p - p_inf) / q_inf));
        }
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(out)
}

/// Lift coefficient from the wall pressure integral; the force on the body
/// is the integral of P over the wall with the normal pointing out of the
/// fluid, and lift is its component normal to the free stream.
pub fn lift_coefficient<T: Real>(
    mesh: &Mesh<T>,
    w: &[Vec4<T>],
    wall_tag: u32,
    q_inf: T,
    chord: T,
    lift_dir: Vec2<T>,
    gas: &GasParameters<T>,
) -> Result<T> {
    let mut force = Vec2::zeros();
    for be in &mesh.boundary_edges {
        if !be.status.is_active() || be.tag != wall_tag {
            continue;
        }
        let pa = gas::pressure(&gas::ConservativeState::from_vector(w[be.nodes[0]]), gas)?;
        let pb = gas::pressure(&gas::ConservativeState::from_vector(w[be.nodes[1]]), gas)?;
        let p_mid = (pa + pb) * T::cst(0.5);
        // eta_in points into the fluid, so the force on the body is -eta_in P
        force += -be.eta_in * p_mid;
    }
    Ok(force.dot(&lift_dir) / (q_inf * chord))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naca_surface_is_closed_and_symmetric() {
        let pts: Vec<Vec2<f64>> = naca0012_surface(64);
        assert_eq!(pts.len(), 128);
        // trailing edge closed: first point at (1, 0)
        assert!((pts[0] - Vec2::new(1.0, 0.0)).norm() < 1e-12);
        // leading edge at (0, 0)
        let le = pts.iter().cloned().min_by(|a, b| a.x.partial_cmp(&b.x).unwrap()).unwrap();
        assert!(le.x.abs() < 1e-12);
        // max thickness ~ 12%
        let t_max = pts.iter().map(|p| p.y).fold(0.0f64, f64::max);
        assert!((t_max - 0.06).abs() < 0.002, "half thickness {t_max}");
    }

    #[test]
    fn projection_lands_on_polyline() {
        let pts: Vec<Vec2<f64>> = naca0012_surface(256);
        let q = project_to_polyline(Vec2::new(0.3, 0.08), &pts);
        // projected point is close to the analytic surface
        let thickness = |x: f64| -> f64 {
            0.6 * (0.2969 * x.sqrt() - 0.1260 * x - 0.3516 * x * x + 0.2843 * x.powi(3)
                - 0.1036 * x.powi(4))
        };
        assert!((q.y - thickness(q.x)).abs() < 1e-4);
    }
}
