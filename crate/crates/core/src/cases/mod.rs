//! Benchmark definitions: meshes, initial and boundary data, prescribed
//! motion, adaptation policy and analytic oracles.

pub mod airfoil;
pub mod meshgen;
pub mod oracles;

pub use oracles::{vortex_density_error, ShockReflectionOracle, VortexOracle};

use crate::adapt::MetricConfig;
use crate::gas::{self, ConservativeState, GasParameters, PrimitiveState};
use crate::mesh::Mesh;
use crate::solver::{BoundaryCondition, BoundarySpecs, SchemeConfig};
use crate::{Error, Real, Result, Vec2, Vec4};
use std::path::{Path, PathBuf};

pub const TAG_WALL: u32 = 1;
pub const TAG_FARFIELD: u32 = 2;
pub const TAG_INLET: u32 = 3;
pub const TAG_OUTLET: u32 = 4;
pub const TAG_TOP: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseKind {
    GclBox,
    Vortex,
    ShockReflection,
    Rae2822,
    ForwardStep,
    NacaPitch,
}

/// Scalar field driving the Hessian sizing, or plain spacing preservation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Indicator {
    Pressure,
    Mach,
    Density,
    CurrentSpacing,
}

/// Rigid pitching motion about a pivot: angle(t) = mean + amplitude sin(omega t).
#[derive(Debug, Clone, Copy)]
pub struct PitchMotion<T> {
    pub amplitude: T,
    pub mean: T,
    pub omega: T,
    pub pivot: Vec2<T>,
}

impl<T: Real> PitchMotion<T> {
    pub fn angle(&self, t: T) -> T {
        self.mean + self.amplitude * (self.omega * t).sin()
    }
}

fn rotate<T: Real>(v: Vec2<T>, angle: T) -> Vec2<T> {
    let (s, c) = (angle.sin(), angle.cos());
    Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// How a node takes part in the prescribed mesh motion.
#[derive(Debug, Clone, Copy)]
pub enum NodeMotion<T> {
    Free,
    Fixed,
    /// Rigidly following the motion law; carries the pullback reference
    /// position.
    Follower(Vec2<T>),
}

/// A fully specified benchmark run.
#[derive(Debug, Clone)]
pub struct CaseDefinition<T> {
    pub kind: CaseKind,
    pub gas: GasParameters<T>,
    pub scheme: SchemeConfig<T>,
    /// Physical step for unsteady cases, the fictitious unit step for steady
    /// adaptation cycles.
    pub dt: T,
    /// Physical steps or steady adaptation cycles.
    pub n_steps: usize,
    /// Adaptation interval in steps; 0 disables adaptation.
    pub adapt_every: usize,
    pub metric: MetricConfig<T>,
    pub indicator: Indicator,
    /// Relaxation sweeps of the spring deformation per step.
    pub n_relax: usize,
    pub data_dir: PathBuf,
}

pub fn default_data_dir() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/data"))
}

impl<T: Real> CaseDefinition<T> {
    /// Uniform-flow GCL benchmark: pitching refined box inside a fixed
    /// square, 120 steps over one period.
    pub fn gcl(adaptive: bool) -> Self {
        let mut scheme = SchemeConfig::second_order_unsteady();
        scheme.max_iterations = 200;
        Self {
            kind: CaseKind::GclBox,
            gas: GasParameters::air(),
            scheme,
            dt: T::cst(100.0 / 120.0),
            n_steps: 120,
            adapt_every: if adaptive { 10 } else { 0 },
            metric: MetricConfig {
                h_min: T::cst(0.025),
                h_max: T::cst(0.25),
                gradation: T::cst(1.6),
                epsilon: T::cst(1e-6),
            },
            indicator: Indicator::CurrentSpacing,
            n_relax: 600,
            data_dir: default_data_dir(),
        }
    }

    /// Isentropic vortex advection on [-10,10]^2 until t = 10, adapting to
    /// the density field with the given minimal edge size.
    pub fn vortex(h_min: T) -> Self {
        let t_final = T::cst(10.0);
        // constant CFL with respect to the minimal edge size
        let speed = T::cst(2.0).sqrt() + T::cst(1.4f64.sqrt());
        let n_steps = (t_final * speed / (T::cst(2.0) * h_min))
            .ceil()
            .to_subset()
            .unwrap_or(100.0) as usize;
        let mut scheme = SchemeConfig::second_order_unsteady();
        scheme.max_iterations = 250;
        Self {
            kind: CaseKind::Vortex,
            gas: GasParameters::air(),
            scheme,
            dt: t_final / T::from_usize(n_steps).unwrap(),
            n_steps,
            adapt_every: 1,
            metric: MetricConfig {
                h_min,
                h_max: T::cst(0.5),
                gradation: T::cst(1.5),
                epsilon: T::cst(1e-6),
            },
            indicator: Indicator::Density,
            n_relax: 0,
            data_dir: default_data_dir(),
        }
    }

    /// Regular oblique-shock reflection, steady adaptation cycles on the
    /// 615-node rectangle.
    pub fn shock_reflection() -> Self {
        Self {
            kind: CaseKind::ShockReflection,
            gas: GasParameters::air(),
            scheme: SchemeConfig::second_order_steady(),
            dt: T::one(),
            n_steps: 9,
            adapt_every: 1,
            metric: MetricConfig {
                h_min: T::cst(0.015),
                h_max: T::cst(0.25),
                gradation: T::cst(1.5),
                epsilon: T::cst(1e-6),
            },
            indicator: Indicator::Pressure,
            n_relax: 0,
            data_dir: default_data_dir(),
        }
    }

    /// Transonic RAE2822 airfoil at M = 0.729, steady adaptation cycles on an
    /// O-grid of radius 12 chords.
    pub fn rae2822() -> Self {
        Self {
            kind: CaseKind::Rae2822,
            gas: GasParameters::air(),
            scheme: SchemeConfig::second_order_steady(),
            dt: T::one(),
            n_steps: 8,
            adapt_every: 1,
            metric: MetricConfig {
                h_min: T::cst(0.004),
                h_max: T::cst(2.0),
                gradation: T::cst(1.6),
                epsilon: T::cst(1e-6),
            },
            indicator: Indicator::Pressure,
            n_relax: 0,
            data_dir: default_data_dir(),
        }
    }

    /// Mach-3 forward-facing step, adapted every physical step.
    pub fn forward_step() -> Self {
        let mut scheme = SchemeConfig::second_order_unsteady();
        scheme.cfl0 = T::cst(0.75);
        scheme.max_iterations = 250;
        Self {
            kind: CaseKind::ForwardStep,
            gas: GasParameters::air(),
            scheme,
            dt: T::cst(0.03),
            n_steps: 128,
            adapt_every: 1,
            metric: MetricConfig {
                h_min: T::cst(0.012),
                h_max: T::cst(0.12),
                gradation: T::cst(1.5),
                epsilon: T::cst(1e-6),
            },
            indicator: Indicator::Density,
            n_relax: 0,
            data_dir: default_data_dir(),
        }
    }

    /// Pitching NACA0012 at M = 0.755 over two periods, deformed and adapted
    /// at every step.
    pub fn naca_pitch() -> Self {
        let t_final = T::cst(87.1778);
        let n_steps = 200;
        let mut scheme = SchemeConfig::second_order_unsteady();
        scheme.max_iterations = 250;
        Self {
            kind: CaseKind::NacaPitch,
            gas: GasParameters::air(),
            scheme,
            dt: t_final / T::from_usize(n_steps).unwrap(),
            n_steps,
            adapt_every: 1,
            metric: MetricConfig {
                h_min: T::cst(0.006),
                h_max: T::cst(2.0),
                gradation: T::cst(1.6),
                epsilon: T::cst(1e-6),
            },
            indicator: Indicator::Mach,
            n_relax: 250,
            data_dir: default_data_dir(),
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "gcl" => Ok(Self::gcl(true)),
            "gcl-deform" => Ok(Self::gcl(false)),
            "vortex" => Ok(Self::vortex(T::cst(0.125))),
            "shock-reflection" | "shock" => Ok(Self::shock_reflection()),
            "rae2822" | "rae" => Ok(Self::rae2822()),
            "ffs" | "step" => Ok(Self::forward_step()),
            "naca-pitch" | "naca" => Ok(Self::naca_pitch()),
            _ => Err(Error::Config(format!("unknown case '{name}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            CaseKind::GclBox => {
                if self.adapt_every > 0 {
                    "gcl"
                } else {
                    "gcl-deform"
                }
            }
            CaseKind::Vortex => "vortex",
            CaseKind::ShockReflection => "shock-reflection",
            CaseKind::Rae2822 => "rae2822",
            CaseKind::ForwardStep => "ffs",
            CaseKind::NacaPitch => "naca-pitch",
        }
    }

    pub fn is_steady(&self) -> bool {
        self.scheme.p == 0
    }

    pub fn t_final(&self) -> T {
        if self.is_steady() {
            T::zero()
        } else {
            self.dt * T::from_usize(self.n_steps).unwrap()
        }
    }

    // ---- geometry ----

    pub fn build_mesh(&self) -> Result<Mesh<T>> {
        Ok(match self.kind {
            CaseKind::GclBox => {
                let xs = meshgen::graded_lines(
                    T::cst(-1.0),
                    T::one(),
                    T::cst(-0.25),
                    T::cst(0.25),
                    T::cst(0.025),
                    T::cst(0.25),
                );
                let ys = meshgen::graded_lines(
                    T::cst(-1.0),
                    T::one(),
                    T::cst(-0.025),
                    T::cst(0.025),
                    T::cst(0.025),
                    T::cst(0.25),
                );
                meshgen::tensor_grid(&xs, &ys, |_| TAG_FARFIELD)
            }
            CaseKind::Vortex => {
                let xs = meshgen::linspace(T::cst(-10.0), T::cst(10.0), 40);
                meshgen::tensor_grid(&xs, &xs, |_| TAG_FARFIELD)
            }
            CaseKind::ShockReflection => {
                let xs = meshgen::linspace(T::zero(), T::cst(4.0), 40);
                let ys = meshgen::linspace(T::zero(), T::one(), 14);
                meshgen::tensor_grid(&xs, &ys, |side| match side {
                    0 => TAG_WALL,
                    1 => TAG_OUTLET,
                    2 => TAG_TOP,
                    _ => TAG_INLET,
                })
            }
            CaseKind::Rae2822 => {
                let surface =
                    airfoil::load_surface_csv(&self.data_dir.join("rae2822.csv"))?;
                meshgen::o_grid(
                    &surface,
                    Vec2::new(T::cst(0.5), T::zero()),
                    T::cst(12.0),
                    20,
                    T::cst(1.32),
                    TAG_WALL,
                    TAG_FARFIELD,
                )
            }
            CaseKind::ForwardStep => meshgen::step_channel(
                T::cst(3.0),
                T::one(),
                T::cst(0.6),
                T::cst(0.2),
                T::cst(0.025),
                TAG_INLET,
                TAG_OUTLET,
                TAG_WALL,
            ),
            CaseKind::NacaPitch => {
                let surface: Vec<Vec2<T>> = airfoil::naca0012_surface(48);
                meshgen::o_grid(
                    &surface,
                    Vec2::new(T::cst(0.5), T::zero()),
                    T::cst(12.0),
                    15,
                    T::cst(1.5),
                    TAG_WALL,
                    TAG_FARFIELD,
                )
            }
        })
    }

    // ---- flow data ----

    fn freestream(&self) -> PrimitiveState<T> {
        match self.kind {
            CaseKind::GclBox => PrimitiveState {
                rho: T::one(),
                vel: Vec2::new(T::one(), T::one()),
                pressure: T::one(),
            },
            CaseKind::Vortex => PrimitiveState {
                rho: T::one(),
                vel: Vec2::new(T::one(), T::one()),
                pressure: T::one(),
            },
            CaseKind::ShockReflection => PrimitiveState {
                rho: T::cst(1.6997),
                vel: Vec2::new(T::cst(2.619), T::cst(-0.5069)),
                pressure: T::cst(1.529),
            },
            CaseKind::Rae2822 => {
                let alpha = T::cst(2.31f64.to_radians());
                let rho = T::cst(1.4857);
                // unit free-stream sound speed fixes the pressure scale
                let pressure = rho / self.gas.gamma;
                let speed = T::cst(0.729);
                PrimitiveState {
                    rho,
                    vel: Vec2::new(speed * alpha.cos(), speed * alpha.sin()),
                    pressure,
                }
            }
            CaseKind::ForwardStep => PrimitiveState {
                rho: T::cst(1.4),
                vel: Vec2::new(T::cst(3.0), T::zero()),
                pressure: T::one(),
            },
            CaseKind::NacaPitch => {
                let rho = T::cst(1.4857);
                PrimitiveState {
                    rho,
                    vel: Vec2::new(T::cst(0.755), T::zero()),
                    pressure: rho / self.gas.gamma,
                }
            }
        }
    }

    pub fn freestream_conservative(&self) -> Vec4<T> {
        self.freestream().to_conservative(&self.gas).as_vector()
    }

    pub fn initial_state(&self, x: Vec2<T>) -> Vec4<T> {
        match self.kind {
            CaseKind::Vortex => VortexOracle::standard()
                .state(x, T::zero(), &self.gas)
                .to_conservative(&self.gas)
                .as_vector(),
            _ => self.freestream_conservative(),
        }
    }

    pub fn boundary_specs(&self) -> Result<BoundarySpecs<T>> {
        let mut bcs = BoundarySpecs::new();
        let free = ConservativeState::from_vector(self.freestream_conservative());
        match self.kind {
            CaseKind::GclBox | CaseKind::Vortex => {
                bcs.set(TAG_FARFIELD, BoundaryCondition::Exterior(free));
            }
            CaseKind::ShockReflection => {
                let oracle = ShockReflectionOracle::standard(&self.gas);
                bcs.set(
                    TAG_INLET,
                    BoundaryCondition::Exterior(oracle.inflow.to_conservative(&self.gas)),
                );
                bcs.set(TAG_WALL, BoundaryCondition::SlipWall);
                bcs.set(TAG_OUTLET, BoundaryCondition::Exterior(free));
                bcs.set(TAG_TOP, BoundaryCondition::Exterior(free));
            }
            CaseKind::Rae2822 | CaseKind::NacaPitch => {
                bcs.set(TAG_WALL, BoundaryCondition::SlipWall);
                bcs.set(TAG_FARFIELD, BoundaryCondition::Exterior(free));
            }
            CaseKind::ForwardStep => {
                bcs.set(TAG_INLET, BoundaryCondition::Exterior(free));
                bcs.set(TAG_OUTLET, BoundaryCondition::Exterior(free));
                bcs.set(TAG_WALL, BoundaryCondition::SlipWall);
            }
        }
        Ok(bcs)
    }

    // ---- motion ----

    pub fn motion(&self) -> Option<PitchMotion<T>> {
        match self.kind {
            CaseKind::GclBox => Some(PitchMotion {
                amplitude: T::cst(std::f64::consts::FRAC_PI_2),
                mean: T::zero(),
                omega: T::cst(std::f64::consts::TAU / 100.0),
                pivot: Vec2::zeros(),
            }),
            CaseKind::NacaPitch => Some(PitchMotion {
                // the body pitches nose-up by alpha: rotation angle -alpha
                amplitude: T::cst(-(2.51f64.to_radians())),
                mean: T::cst(-(0.016f64.to_radians())),
                omega: T::cst(4.0) * T::pi() / T::cst(87.1778),
                pivot: Vec2::new(T::cst(0.25), T::zero()),
            }),
            _ => None,
        }
    }

    /// Motion role of a node observed at position `pos` at time `t`.
    pub fn classify_node(&self, pos: Vec2<T>, boundary_tag: Option<u32>, t: T) -> NodeMotion<T> {
        let Some(motion) = self.motion() else {
            return NodeMotion::Free;
        };
        match self.kind {
            CaseKind::GclBox => {
                let reference = rotate(pos, -motion.angle(t));
                let tol = T::cst(1e-9);
                if reference.x.abs() <= T::cst(0.25) + tol
                    && reference.y.abs() <= T::cst(0.025) + tol
                {
                    NodeMotion::Follower(reference)
                } else if boundary_tag.is_some() {
                    NodeMotion::Fixed
                } else {
                    NodeMotion::Free
                }
            }
            CaseKind::NacaPitch => match boundary_tag {
                Some(TAG_WALL) => {
                    let reference = motion.pivot + rotate(pos - motion.pivot, -motion.angle(t));
                    NodeMotion::Follower(reference)
                }
                Some(_) => NodeMotion::Fixed,
                None => NodeMotion::Free,
            },
            _ => NodeMotion::Free,
        }
    }

    pub fn follower_position(&self, reference: Vec2<T>, t: T) -> Vec2<T> {
        let motion = self.motion().expect("case has motion");
        motion.pivot + rotate(reference - motion.pivot, motion.angle(t))
    }

    /// Surface re-projection for boundary nodes inserted during adaptation.
    pub fn boundary_projector(&self, t: T) -> Option<Box<dyn Fn(Vec2<T>) -> Vec2<T>>> {
        match self.kind {
            CaseKind::NacaPitch => {
                let motion = self.motion().expect("pitch motion");
                let angle = motion.angle(t);
                let pivot = motion.pivot;
                let surface: Vec<Vec2<T>> = airfoil::naca0012_surface(512);
                Some(Box::new(move |p: Vec2<T>| {
                    let reference = pivot + rotate(p - pivot, -angle);
                    let projected = airfoil::project_to_polyline(reference, &surface);
                    pivot + rotate(projected - pivot, angle)
                }))
            }
            _ => None,
        }
    }

    // ---- adaptation indicator ----

    pub fn indicator_field(&self, w: &[Vec4<T>]) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(w.len());
        for v in w {
            let state = ConservativeState::from_vector(*v);
            let value = match self.indicator {
                Indicator::Density => state.rho,
                Indicator::Pressure => {
                    if state.rho > T::zero() {
                        gas::pressure(&state, &self.gas).unwrap_or(T::zero())
                    } else {
                        T::zero()
                    }
                }
                Indicator::Mach => {
                    if state.rho > T::zero() {
                        state.mach(&self.gas).unwrap_or(T::zero())
                    } else {
                        T::zero()
                    }
                }
                Indicator::CurrentSpacing => T::zero(),
            };
            out.push(value);
        }
        Ok(out)
    }

    // ---- per-step diagnostics ----

    pub fn log_columns(&self) -> Vec<&'static str> {
        match self.kind {
            CaseKind::GclBox => vec!["max_p_err", "avg_p_err"],
            CaseKind::Vortex => vec!["err_rho"],
            CaseKind::NacaPitch => vec!["alpha_deg", "cl"],
            CaseKind::ForwardStep => vec!["min_rho"],
            _ => vec![],
        }
    }

    pub fn log_values(&self, mesh: &Mesh<T>, w: &[Vec4<T>], t: T) -> Result<Vec<f64>> {
        let as_f64 = |v: T| v.to_subset().unwrap_or(f64::NAN);
        Ok(match self.kind {
            CaseKind::GclBox => {
                let mut max_err = T::zero();
                let mut sum = T::zero();
                let mut count = 0usize;
                for (i, node) in mesh.nodes.iter().enumerate() {
                    if !node.status.is_active() {
                        continue;
                    }
                    let p = gas::pressure(&ConservativeState::from_vector(w[i]), &self.gas)?;
                    let err = (p - T::one()).abs();
                    max_err = max_err.max(err);
                    sum += err;
                    count += 1;
                }
                vec![
                    as_f64(max_err),
                    as_f64(sum / T::from_usize(count.max(1)).unwrap()),
                ]
            }
            CaseKind::Vortex => {
                let err = vortex_density_error(
                    mesh,
                    w,
                    t,
                    &VortexOracle::standard(),
                    &self.gas,
                );
                vec![as_f64(err)]
            }
            CaseKind::NacaPitch => {
                let motion = self.motion().expect("pitch motion");
                let alpha = -motion.angle(t); // geometric incidence
                let free = self.freestream();
                let q = T::cst(0.5) * free.rho * free.vel.norm_squared();
                let cl = airfoil::lift_coefficient(
                    mesh,
                    w,
                    TAG_WALL,
                    q,
                    T::one(),
                    Vec2::new(T::zero(), T::one()),
                    &self.gas,
                )?;
                vec![as_f64(alpha * T::cst(180.0) / T::pi()), as_f64(cl)]
            }
            CaseKind::ForwardStep => {
                let mut min_rho = T::cst(f64::MAX);
                for (i, node) in mesh.nodes.iter().enumerate() {
                    if node.status.is_active() {
                        min_rho = min_rho.min(w[i][0]);
                    }
                }
                vec![as_f64(min_rho)]
            }
            _ => vec![],
        })
    }

    /// Free-stream dynamic pressure and static pressure, for the pressure
    /// coefficient.
    pub fn reference_pressures(&self) -> (T, T) {
        let free = self.freestream();
        (
            free.pressure,
            T::cst(0.5) * free.rho * free.vel.norm_squared(),
        )
    }

    pub fn wall_tag(&self) -> u32 {
        TAG_WALL
    }

    /// Path of a bundled data file.
    pub fn data_file(&self, name: &str) -> PathBuf {
        self.data_dir.join(name)
    }
}

/// Experimental reference tables bundled alongside the cases.
pub fn reference_table(data_dir: &Path, name: &str) -> Result<Vec<Vec<f64>>> {
    crate::io::read_csv_table(&data_dir.join(name))
}
