//! Polytropic ideal-gas thermodynamics and Euler flux algebra.
//!
//! Everything here is a pure function of a state value; no shared mutable
//! state is involved, so all routines can be called concurrently.

use crate::{Error, Mat4, Real, Result, Vec2, Vec4};

/// Ratio of specific heats and specific gas constant, in the scaled units
/// used throughout (free-stream quantities are O(1)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasParameters<T> {
    pub gamma: T,
    pub gas_constant: T,
}

impl<T: Real> GasParameters<T> {
    pub fn new(gamma: T, gas_constant: T) -> Result<Self> {
        if gamma <= T::one() || gas_constant <= T::zero() {
            return Err(Error::InvalidArgument(format!(
                "gas parameters require gamma > 1 and R > 0, got gamma = {:e}, R = {:e}",
                gamma, gas_constant
            )));
        }
        Ok(Self {
            gamma,
            gas_constant,
        })
    }

    /// Air with the unit gas constant of the scaled (sea-level) units.
    pub fn air() -> Self {
        Self {
            gamma: T::cst(1.4),
            gas_constant: T::one(),
        }
    }
}

/// Conserved unknowns per node: density, momentum density, total energy density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservativeState<T> {
    pub rho: T,
    pub mom: Vec2<T>,
    pub energy: T,
}

/// Density, velocity, static pressure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimitiveState<T> {
    pub rho: T,
    pub vel: Vec2<T>,
    pub pressure: T,
}

impl<T: Real> PrimitiveState<T> {
    pub fn new(rho: T, vel: Vec2<T>, pressure: T) -> Result<Self> {
        if rho <= T::zero() || pressure <= T::zero() {
            return Err(invalid(rho, pressure, None));
        }
        Ok(Self { rho, vel, pressure })
    }

    pub fn to_conservative(&self, gas: &GasParameters<T>) -> ConservativeState<T> {
        let kinetic = T::cst(0.5) * self.rho * self.vel.norm_squared();
        ConservativeState {
            rho: self.rho,
            mom: self.vel * self.rho,
            energy: self.pressure / (gas.gamma - T::one()) + kinetic,
        }
    }
}

impl<T: Real> ConservativeState<T> {
    /// Builds a state from primitives, checking the positivity invariants.
    pub fn from_primitive(rho: T, vel: Vec2<T>, pressure: T, gas: &GasParameters<T>) -> Result<Self> {
        Ok(PrimitiveState::new(rho, vel, pressure)?.to_conservative(gas))
    }

    pub fn to_primitive(&self, gas: &GasParameters<T>) -> Result<PrimitiveState<T>> {
        Ok(PrimitiveState {
            rho: self.rho,
            vel: self.velocity(),
            pressure: pressure(self, gas)?,
        })
    }

    pub fn velocity(&self) -> Vec2<T> {
        self.mom / self.rho
    }

    /// Checks rho > 0 and P > 0; called after every solver update.
    pub fn validate(&self, gas: &GasParameters<T>, node: Option<usize>) -> Result<()> {
        if !self.rho.is_finite() || !self.energy.is_finite() || self.rho <= T::zero() {
            return Err(invalid(self.rho, T::zero(), node));
        }
        let p = raw_pressure(self, gas);
        if !p.is_finite() || p <= T::zero() {
            return Err(invalid(self.rho, p, node));
        }
        Ok(())
    }

    pub fn as_vector(&self) -> Vec4<T> {
        Vec4::new(self.rho, self.mom.x, self.mom.y, self.energy)
    }

    pub fn from_vector(v: Vec4<T>) -> Self {
        Self {
            rho: v.x,
            mom: Vec2::new(v.y, v.z),
            energy: v.w,
        }
    }

    pub fn zero() -> Self {
        Self::from_vector(Vec4::zeros())
    }

    pub fn mach(&self, gas: &GasParameters<T>) -> Result<T> {
        Ok(self.velocity().norm() / sound_speed(self, gas)?)
    }
}

fn invalid<T: Real>(rho: T, pressure: T, node: Option<usize>) -> Error {
    Error::InvalidState {
        rho: rho.to_subset().unwrap_or(f64::NAN),
        pressure: pressure.to_subset().unwrap_or(f64::NAN),
        node,
    }
}

fn raw_pressure<T: Real>(w: &ConservativeState<T>, gas: &GasParameters<T>) -> T {
    (gas.gamma - T::one()) * (w.energy - T::cst(0.5) * w.mom.norm_squared() / w.rho)
}

/// Static pressure P = (gamma - 1)(E - |m|^2 / (2 rho)).
pub fn pressure<T: Real>(w: &ConservativeState<T>, gas: &GasParameters<T>) -> Result<T> {
    let p = raw_pressure(w, gas);
    if w.rho <= T::zero() || p <= T::zero() || !p.is_finite() {
        return Err(invalid(w.rho, p, None));
    }
    Ok(p)
}

/// Speed of sound c = sqrt(gamma P / rho).
pub fn sound_speed<T: Real>(w: &ConservativeState<T>, gas: &GasParameters<T>) -> Result<T> {
    Ok((gas.gamma * pressure(w, gas)? / w.rho).sqrt())
}

/// Advective flux, returned as the pair of x- and y-direction 4-vectors.
pub fn flux<T: Real>(
    w: &ConservativeState<T>,
    gas: &GasParameters<T>,
) -> Result<(Vec4<T>, Vec4<T>)> {
    let p = pressure(w, gas)?;
    let u = w.velocity();
    let h = w.energy + p;
    Ok((
        Vec4::new(w.mom.x, w.mom.x * u.x + p, w.mom.y * u.x, h * u.x),
        Vec4::new(w.mom.y, w.mom.x * u.y, w.mom.y * u.y + p, h * u.y),
    ))
}

/// Flux projected along `n`: f(w) . n.
pub fn flux_dot<T: Real>(
    w: &ConservativeState<T>,
    n: Vec2<T>,
    gas: &GasParameters<T>,
) -> Result<Vec4<T>> {
    let (fx, fy) = flux(w, gas)?;
    Ok(fx * n.x + fy * n.y)
}

/// Analytic Jacobian of the projected flux, A_n = d(f.n)/dw, for unit `n`.
pub fn flux_jacobian<T: Real>(
    w: &ConservativeState<T>,
    n: Vec2<T>,
    gas: &GasParameters<T>,
) -> Result<Mat4<T>> {
    let p = pressure(w, gas)?;
    let g1 = gas.gamma - T::one();
    let u = w.velocity();
    let un = u.dot(&n);
    let k = T::cst(0.5) * u.norm_squared();
    let h = (w.energy + p) / w.rho;
    let z = T::zero();

    Ok(Mat4::new(
        z,
        n.x,
        n.y,
        z,
        g1 * k * n.x - u.x * un,
        un + (T::one() - g1) * u.x * n.x,
        u.x * n.y - g1 * u.y * n.x,
        g1 * n.x,
        g1 * k * n.y - u.y * un,
        u.y * n.x - g1 * u.x * n.y,
        un + (T::one() - g1) * u.y * n.y,
        g1 * n.y,
        (g1 * k - h) * un,
        h * n.x - g1 * u.x * un,
        h * n.y - g1 * u.y * un,
        gas.gamma * un,
    ))
}

/// Eigendecomposition of the projected flux Jacobian along a unit direction.
///
/// `right * diag(lambdas) * left` reproduces the Jacobian and
/// `right * left = I`; the eigenvector basis is regular for every valid
/// state, including sonic ones.
#[derive(Debug, Clone)]
pub struct EigenSystem<T> {
    pub right: Mat4<T>,
    pub left: Mat4<T>,
    pub lambdas: Vec4<T>,
    pub direction: Vec2<T>,
}

/// Eigendecomposition of A_n for unit `n`; eigenvalue order (u.n - c, u.n, u.n, u.n + c).
pub fn eigensystem<T: Real>(
    w: &ConservativeState<T>,
    n: Vec2<T>,
    gas: &GasParameters<T>,
) -> Result<EigenSystem<T>> {
    let p = pressure(w, gas)?;
    let g1 = gas.gamma - T::one();
    let u = w.velocity();
    let c = (gas.gamma * p / w.rho).sqrt();
    let un = u.dot(&n);
    let t = Vec2::new(-n.y, n.x);
    let ut = u.dot(&t);
    let k = T::cst(0.5) * u.norm_squared();
    let h = (w.energy + p) / w.rho;
    let z = T::zero();
    let half = T::cst(0.5);

    let right = Mat4::new(
        T::one(),
        T::one(),
        z,
        T::one(),
        u.x - c * n.x,
        u.x,
        t.x,
        u.x + c * n.x,
        u.y - c * n.y,
        u.y,
        t.y,
        u.y + c * n.y,
        h - c * un,
        k,
        ut,
        h + c * un,
    );

    let b1 = g1 / (c * c);
    let b2 = b1 * k;
    let left = Mat4::new(
        half * (b2 + un / c),
        -half * (b1 * u.x + n.x / c),
        -half * (b1 * u.y + n.y / c),
        half * b1,
        T::one() - b2,
        b1 * u.x,
        b1 * u.y,
        -b1,
        -ut,
        t.x,
        t.y,
        z,
        half * (b2 - un / c),
        -half * (b1 * u.x - n.x / c),
        -half * (b1 * u.y - n.y / c),
        half * b1,
    );

    Ok(EigenSystem {
        right,
        left,
        lambdas: Vec4::new(un - c, un, un, un + c),
        direction: n,
    })
}

impl<T: Real> EigenSystem<T> {
    /// R diag(g(scale * lambda_k - shift)) L for an arbitrary eigenvalue map.
    fn remap(&self, mut g: impl FnMut(T) -> T) -> Mat4<T> {
        let d = Mat4::from_diagonal(&Vec4::new(
            g(self.lambdas.x),
            g(self.lambdas.y),
            g(self.lambdas.z),
            g(self.lambdas.w),
        ));
        self.right * d * self.left
    }

    /// Positive part of (A - shift I).
    pub fn split_positive(&self, shift: T) -> Mat4<T> {
        self.remap(|l| (l - shift).max(T::zero()))
    }

    /// Negative part of (A - shift I).
    pub fn split_negative(&self, shift: T) -> Mat4<T> {
        self.remap(|l| (l - shift).min(T::zero()))
    }

    /// Positive part of (scale A - shift I); used with integrated normals.
    pub fn split_positive_scaled(&self, scale: T, shift: T) -> Mat4<T> {
        self.remap(|l| (scale * l - shift).max(T::zero()))
    }

    /// Negative part of (scale A - shift I).
    pub fn split_negative_scaled(&self, scale: T, shift: T) -> Mat4<T> {
        self.remap(|l| (scale * l - shift).min(T::zero()))
    }
}

/// Symmetrizing entropy variables v = dS/dw for S = -rho s / (gamma - 1),
/// s = ln(P / rho^gamma).
pub fn entropy_variables<T: Real>(
    w: &ConservativeState<T>,
    gas: &GasParameters<T>,
) -> Result<Vec4<T>> {
    let p = pressure(w, gas)?;
    let g1 = gas.gamma - T::one();
    let s = (p / w.rho.powf(gas.gamma)).ln();
    let u = w.velocity();
    let k = T::cst(0.5) * u.norm_squared();
    let rho_over_p = w.rho / p;
    Ok(Vec4::new(
        (gas.gamma - s) / g1 - rho_over_p * k,
        rho_over_p * u.x,
        rho_over_p * u.y,
        -rho_over_p,
    ))
}
