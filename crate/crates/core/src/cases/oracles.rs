//! Analytic reference solutions, implemented independently of the solver's
//! flux routines.

use crate::gas::{GasParameters, PrimitiveState};
use crate::mesh::Mesh;
use crate::{Real, Vec2, Vec4};

/// Isentropic vortex advected with the unit diagonal free stream.
pub struct VortexOracle<T> {
    pub strength: T,
    pub center0: Vec2<T>,
    pub freestream: Vec2<T>,
}

impl<T: Real> VortexOracle<T> {
    pub fn standard() -> Self {
        Self {
            strength: T::cst(5.0),
            center0: Vec2::new(T::cst(-5.0), T::cst(-5.0)),
            freestream: Vec2::new(T::one(), T::one()),
        }
    }

    /// Exact primitive state at position `x` and time `t`.
    pub fn state(&self, x: Vec2<T>, t: T, gas: &GasParameters<T>) -> PrimitiveState<T> {
        let g = gas.gamma;
        let center = self.center0 + self.freestream * t;
        let d = x - center;
        let r2 = d.norm_squared();
        let lam = self.strength;
        let two_pi = T::cst(2.0) * T::pi();

        let dtheta = -(g - T::one()) * lam * lam / (T::cst(8.0) * g * T::pi() * T::pi())
            * (T::one() - r2).exp();
        let swirl = lam / two_pi * ((T::one() - r2) * T::cst(0.5)).exp();
        let du = Vec2::new(-d.y, d.x) * swirl;

        let temp = T::one() + dtheta;
        let rho = temp.powf(T::one() / (g - T::one()));
        let pressure = temp.powf(g / (g - T::one()));
        PrimitiveState {
            rho,
            vel: self.freestream + du,
            pressure,
        }
    }

    /// Temperature perturbation at distance `r` from the center.
    pub fn dtheta_at(&self, r: T, gas: &GasParameters<T>) -> T {
        let g = gas.gamma;
        -(g - T::one()) * self.strength * self.strength
            / (T::cst(8.0) * g * T::pi() * T::pi())
            * (T::one() - r * r).exp()
    }
}

/// L1 density error against the vortex solution, normalized by the density
/// mass (3-point edge-midpoint quadrature, exact for quadratics).
pub fn vortex_density_error<T: Real>(
    mesh: &Mesh<T>,
    w: &[Vec4<T>],
    t: T,
    oracle: &VortexOracle<T>,
    gas: &GasParameters<T>,
) -> T {
    let mut err = T::zero();
    let mut mass = T::zero();
    let third = T::cst(1.0 / 3.0);
    let half = T::cst(0.5);
    for (_, tri) in mesh.active_triangles() {
        let p: Vec<Vec2<T>> = tri.nodes.iter().map(|&i| mesh.nodes[i].pos).collect();
        let rho: Vec<T> = tri.nodes.iter().map(|&i| w[i][0]).collect();
        let weight = tri.area * third;
        for e in 0..3 {
            let mid = (p[e] + p[(e + 1) % 3]) * half;
            let rho_h = (rho[e] + rho[(e + 1) % 3]) * half;
            let rho_an = oracle.state(mid, t, gas).rho;
            err += (rho_h - rho_an).abs() * weight;
            mass += rho_an * weight;
        }
    }
    err / mass
}

/// Piecewise-constant reference for the regular shock reflection: inflow
/// state, post-incident state, post-reflected state, and the shock
/// trace along a horizontal line.
#[derive(Debug, Clone)]
pub struct ShockReflectionOracle<T> {
    pub inflow: PrimitiveState<T>,
    pub mid: PrimitiveState<T>,
    pub downstream: PrimitiveState<T>,
    /// Incident shock angle against the horizontal.
    pub beta_incident: T,
    /// Reflected shock angle against the horizontal.
    pub beta_reflected: T,
    /// Deflection of the incident shock (flow turns down by this angle).
    pub deflection: T,
    /// Where the incident shock meets the bottom wall (left domain corner at
    /// x = 0, top wall at y = `top`).
    pub wall_impact_x: T,
    pub top: T,
}

/// Oblique-shock jump via the exact relations (weak branch): returns the
/// downstream density, pressure, speed, shock angle (against the upstream
/// flow direction) and downstream Mach number. Standard gas-dynamics
/// algebra with no reuse of the solver flux code.
fn oblique_shock<T: Real>(
    upstream: &PrimitiveState<T>,
    mach: T,
    deflection: T,
    gas: &GasParameters<T>,
) -> (T, T, T, T, T) {
    let g = gas.gamma;
    let theta_beta = |beta: T| {
        let m2 = mach * mach * beta.sin().powi(2);
        let num = T::cst(2.0) * (m2 - T::one()) / beta.tan();
        let den = mach * mach * (g + (T::cst(2.0) * beta).cos()) + T::cst(2.0);
        (num / den).atan()
    };
    // weak-branch shock angle by bisection; the upper end stays below the
    // strong branch for the Mach numbers of this benchmark
    let mut lo = (T::one() / mach).asin() + T::cst(1e-9);
    let mut hi = T::cst(1.2);
    for _ in 0..200 {
        let midb = (lo + hi) * T::cst(0.5);
        if theta_beta(midb) < deflection {
            lo = midb;
        } else {
            hi = midb;
        }
    }
    let beta = (lo + hi) * T::cst(0.5);

    let mn1sq = (mach * beta.sin()).powi(2);
    let rho2 = upstream.rho * (g + T::one()) * mn1sq / ((g - T::one()) * mn1sq + T::cst(2.0));
    let p2 = upstream.pressure
        * (T::one() + T::cst(2.0) * g / (g + T::one()) * (mn1sq - T::one()));
    let mn2 = (((g - T::one()) * mn1sq + T::cst(2.0))
        / (T::cst(2.0) * g * mn1sq - (g - T::one())))
    .sqrt();
    let m2 = mn2 / (beta - deflection).sin();
    let speed2 = m2 * (g * p2 / rho2).sqrt();
    (rho2, p2, speed2, beta, m2)
}

impl<T: Real> ShockReflectionOracle<T> {
    /// Inlet at Mach 2.9 (rho = 1, P = 0.714, horizontal), deflection chosen
    /// to reproduce the published post-incident state.
    pub fn standard(gas: &GasParameters<T>) -> Self {
        let mach_in = T::cst(2.9);
        let p_in = T::cst(0.714);
        let rho_in = T::one();
        let c_in = (gas.gamma * p_in / rho_in).sqrt();
        let inflow = PrimitiveState {
            rho: rho_in,
            vel: Vec2::new(mach_in * c_in, T::zero()),
            pressure: p_in,
        };
        // deflection of the published mid state u = (2.619, -0.5069)
        let deflection = (T::cst(0.5069) / T::cst(2.619)).atan();
        let (rho2, p2, speed2, beta1, m2) = oblique_shock(&inflow, mach_in, deflection, gas);
        // the incident shock turns the flow downwards
        let mid = PrimitiveState {
            rho: rho2,
            vel: Vec2::new(speed2 * deflection.cos(), -speed2 * deflection.sin()),
            pressure: p2,
        };
        // reflection: same deflection back to horizontal
        let (rho3, p3, speed3, beta2, _) = oblique_shock(&mid, m2, deflection, gas);
        let down = PrimitiveState {
            rho: rho3,
            vel: Vec2::new(speed3, T::zero()),
            pressure: p3,
        };
        let top = T::one();
        Self {
            inflow,
            mid,
            downstream: down,
            beta_incident: beta1,
            beta_reflected: beta2 - deflection,
            deflection,
            wall_impact_x: top / beta1.tan(),
            top,
        }
    }

    /// Exact state along the horizontal line y, as a function of x.
    pub fn state_at(&self, x: T, y: T) -> &PrimitiveState<T> {
        let x_incident = (self.top - y) / self.beta_incident.tan();
        let x_reflected = self.wall_impact_x + y / self.beta_reflected.tan();
        if x < x_incident {
            &self.inflow
        } else if x < x_reflected {
            &self.mid
        } else {
            &self.downstream
        }
    }

    /// Positions of the two discontinuities along the horizontal line y.
    pub fn crossings(&self, y: T) -> (T, T) {
        (
            (self.top - y) / self.beta_incident.tan(),
            self.wall_impact_x + y / self.beta_reflected.tan(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gas() -> GasParameters<f64> {
        GasParameters::air()
    }

    #[test]
    fn vortex_velocity_perturbation_vanishes_at_center() {
        let o = VortexOracle::standard();
        let t = 3.7;
        let center = o.center0 + o.freestream * t;
        let s = o.state(center, t, &gas());
        assert!((s.vel - o.freestream).norm() < 1e-14);
    }

    #[test]
    fn vortex_perturbations_decay_exponentially() {
        let o = VortexOracle::standard();
        let dtheta5: f64 = o.dtheta_at(5.0, &gas()).abs();
        assert!(dtheta5 < 3e-10, "|dtheta(5)| = {dtheta5}");
        let s = o.state(o.center0 + Vec2::new(5.0, 0.0), 0.0, &gas());
        assert!((s.rho - 1.0).abs() < 1e-9);
        assert!((s.pressure - 1.0).abs() < 1e-9);
    }

    #[test]
    fn incident_shock_reproduces_published_state() {
        let o = ShockReflectionOracle::standard(&gas());
        // prescribed top/initial state: rho = 1.6997, u = (2.619, -0.5069),
        // P = 1.529 (labelled M = 2.38, a 3-digit rounding of its Mach)
        assert!(
            (o.mid.rho - 1.6997).abs() / 1.6997 < 1e-3,
            "rho = {}",
            o.mid.rho
        );
        assert!((o.mid.pressure - 1.529).abs() / 1.529 < 1e-3);
        assert!((o.mid.vel.x - 2.619).abs() / 2.619 < 1e-3);
        assert!((o.mid.vel.y + 0.5069).abs() / 0.5069 < 1e-3);
        let c = (1.4 * o.mid.pressure / o.mid.rho).sqrt();
        let mach = o.mid.vel.norm() / c;
        // Mach of the prescribed triplet itself
        let prescribed_mach = (2.619f64.powi(2) + 0.5069f64.powi(2)).sqrt()
            / (1.4 * 1.529 / 1.6997f64).sqrt();
        assert!(
            (mach - prescribed_mach).abs() / prescribed_mach < 1e-3,
            "M = {mach} vs prescribed {prescribed_mach}"
        );
        // the rounded label holds at its own precision
        assert!((mach - 2.38).abs() / 2.38 < 2.5e-3, "M = {mach}");
    }

    #[test]
    fn reflected_flow_is_horizontal() {
        let o = ShockReflectionOracle::standard(&gas());
        assert_eq!(o.downstream.vel.y, 0.0);
        assert!(o.downstream.pressure > o.mid.pressure);
        assert!(o.downstream.rho > o.mid.rho);
        // reflected shock slopes up from the wall impact point
        assert!(o.beta_reflected > 0.0 && o.beta_reflected < std::f64::consts::FRAC_PI_2);
        let (x1, x2) = o.crossings(0.5);
        assert!(x1 < x2);
        assert!(x1 > 0.0 && x2 < 4.0);
    }
}
