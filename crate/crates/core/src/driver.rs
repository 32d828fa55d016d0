//! Run loop: boundary motion, adaptation with collapse-expansion accounting,
//! interface velocities, implicit solve and history rotation — in that order,
//! every step.

use crate::adapt::{
    self, adapt, AdaptFields, AdaptOptions, GhostRegistry, MetricField,
};
use crate::ale::{BdfIncrementCoefficients, SweptAreaLedger};
use crate::cases::{CaseDefinition, Indicator, NodeMotion};
use crate::io::config::RunConfig;
use crate::io::{vtk, TimeSeriesLog};
use crate::mesh::Mesh;
use crate::solver::{assemble_and_solve, History, SolveReport, StepContext};
use crate::{Error, Real, Result, Vec2, Vec4};
use std::path::PathBuf;

/// Snapshot handed to a run observer after every completed step.
pub struct StepObservation<'a, T: Real> {
    pub step: usize,
    pub time: T,
    pub mesh: &'a Mesh<T>,
    pub solution: &'a [Vec4<T>],
    pub report: &'a SolveReport<T>,
}

#[derive(Debug)]
pub struct RunSummary {
    pub steps_completed: usize,
    pub log: TimeSeriesLog,
    pub out_dir: Option<PathBuf>,
}

impl RunSummary {
    /// Last logged value of a named column.
    pub fn final_value(&self, column: &str) -> Option<f64> {
        let idx = self.log.columns.iter().position(|c| c == column)?;
        self.log.rows.last().map(|row| row[idx])
    }

    /// Maximum over all logged steps of a named column.
    pub fn max_value(&self, column: &str) -> Option<f64> {
        let idx = self.log.columns.iter().position(|c| c == column)?;
        self.log
            .rows
            .iter()
            .map(|row| row[idx])
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }
}

pub fn run<T: Real>(config: &RunConfig<T>) -> Result<RunSummary> {
    run_with_observer(config, |_: &StepObservation<'_, T>| {})
}

pub fn run_with_observer<T: Real>(
    config: &RunConfig<T>,
    mut observer: impl FnMut(&StepObservation<'_, T>) + Send,
) -> Result<RunSummary> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_inner(config, &mut observer))
}

fn run_inner<T: Real>(
    config: &RunConfig<T>,
    observer: &mut impl FnMut(&StepObservation<'_, T>),
) -> Result<RunSummary> {
    let case = &config.case;
    let mut mesh = case.build_mesh()?;
    mesh.compute_metrics()?;
    let bcs = case.boundary_specs()?;
    // fail on configuration problems before touching the output directory
    bcs.validate_against(&mesh)?;

    if let Some(dir) = &config.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.txt"), config.to_config_string())?;
    }

    let p = case.scheme.p;
    let coeffs = BdfIncrementCoefficients::<T>::new(p)?;
    let mut ledger = SweptAreaLedger::new(&mesh, p);
    let mut registry = GhostRegistry::new();

    let mut w: Vec<Vec4<T>> = mesh.nodes.iter().map(|n| case.initial_state(n.pos)).collect();
    let mut history = History::cold_start(&w, p);

    let has_motion = case.motion().is_some();
    let mut motion_refs: Vec<NodeMotion<T>> = mesh
        .nodes
        .iter()
        .map(|n| case.classify_node(n.pos, n.boundary_tag, T::zero()))
        .collect();
    let mut wall_velocity: Vec<Vec2<T>> = vec![Vec2::zeros(); mesh.nodes.len()];

    let mut log = TimeSeriesLog::new(&case.log_columns());
    let push_log = |log: &mut TimeSeriesLog,
                    mesh: &Mesh<T>,
                    w: &[Vec4<T>],
                    step: usize,
                    time: T,
                    report: Option<&SolveReport<T>>|
     -> Result<()> {
        let mut row = vec![
            step as f64,
            time.to_subset().unwrap_or(f64::NAN),
            mesh.n_active_nodes() as f64,
            mesh.n_active_triangles() as f64,
            report.map_or(0.0, |r| r.iterations as f64),
            report.map_or(0.0, |r| {
                r.final_residual.to_subset().unwrap_or(f64::NAN)
            }),
        ];
        row.extend(case.log_values(mesh, w, time)?);
        log.push(row);
        Ok(())
    };

    let snapshot = |mesh: &Mesh<T>, w: &[Vec4<T>], step: usize| -> Result<()> {
        if let Some(dir) = &config.out_dir {
            let path = dir.join(format!("{}_{:05}.vtk", case.name(), step));
            vtk::write_vtk(mesh, w, &case.gas, &path)?;
        }
        Ok(())
    };

    push_log(&mut log, &mesh, &w, 0, T::zero(), None)?;
    snapshot(&mesh, &w, 0)?;

    let mut steps_completed = 0;
    for step in 1..=case.n_steps {
        let time = case.dt * T::from_usize(step).unwrap();

        // 1. boundary motion via the spring analogy
        if has_motion {
            let prescribed: Vec<Option<Vec2<T>>> = motion_refs
                .iter()
                .enumerate()
                .map(|(i, m)| match m {
                    NodeMotion::Free => None,
                    NodeMotion::Fixed => Some(mesh.nodes[i].pos),
                    NodeMotion::Follower(reference) => {
                        Some(case.follower_position(*reference, time))
                    }
                })
                .collect();
            adapt::deform_mesh(&mut mesh, &mut ledger, &prescribed, case.n_relax, T::cst(1e-10))?;
        }

        // 2. local adaptation driven by the indicator
        if case.adapt_every > 0 && step % case.adapt_every == 0 {
            let mut metric = build_metric(case, &mesh, &w)?;
            let projector = case.boundary_projector(time);
            let mut fields = AdaptFields {
                current: &mut w,
                history: &mut history,
            };
            adapt(
                &mut mesh,
                &mut ledger,
                &mut registry,
                &mut metric,
                &mut fields,
                projector.as_deref(),
                &AdaptOptions::default(),
            )?;
            mesh.compute_metrics()?;
        }

        // classify nodes created this step and refresh wall velocities
        while motion_refs.len() < mesh.nodes.len() {
            let i = motion_refs.len();
            motion_refs.push(case.classify_node(mesh.nodes[i].pos, mesh.nodes[i].boundary_tag, time));
        }
        wall_velocity.resize(mesh.nodes.len(), Vec2::zeros());
        if has_motion {
            for (i, v) in wall_velocity.iter_mut().enumerate() {
                *v = case.wall_velocity_at(mesh.nodes[i].pos, time);
            }
        }

        // 3. GCL-compliant interface velocities
        let nu = ledger.interface_velocities(case.dt, &coeffs)?;

        // 4. implicit solve on the new configuration
        let ctx = StepContext {
            mesh: &mesh,
            ledger: &ledger,
            nu: &nu,
            history: &history,
            bcs: &bcs,
            wall_velocity: has_motion.then_some(wall_velocity.as_slice()),
            gas: &case.gas,
            config: &case.scheme,
            dt: case.dt,
        };
        let (w_new, report) = assemble_and_solve(&ctx, &w)?;
        w = w_new;

        // 5. rotate stored results
        history.rotate(&w);
        ledger.advance_step();
        registry.purge_after_solve(&mut mesh, &mut ledger);

        steps_completed = step;
        push_log(&mut log, &mesh, &w, step, time, Some(&report))?;
        observer(&StepObservation {
            step,
            time,
            mesh: &mesh,
            solution: &w,
            report: &report,
        });
        if step % config.output_every == 0 || step == case.n_steps {
            snapshot(&mesh, &w, step)?;
        }
    }

    if let Some(dir) = &config.out_dir {
        log.write_csv(&dir.join("log.csv"))?;
        write_case_outputs(case, &mesh, &w, &log, dir)?;
    }

    Ok(RunSummary {
        steps_completed,
        log,
        out_dir: config.out_dir.clone(),
    })
}

fn build_metric<T: Real>(
    case: &CaseDefinition<T>,
    mesh: &Mesh<T>,
    w: &[Vec4<T>],
) -> Result<MetricField<T>> {
    Ok(match case.indicator {
        Indicator::CurrentSpacing => adapt::current_spacing_metric(
            mesh,
            case.metric.h_min,
            case.metric.h_max,
            case.metric.gradation,
        ),
        _ => {
            let field = case.indicator_field(w)?;
            adapt::hessian_metric(mesh, &field, &case.metric)
        }
    })
}

/// Case-specific artifacts written once at the end of a run.
fn write_case_outputs<T: Real>(
    case: &CaseDefinition<T>,
    mesh: &Mesh<T>,
    w: &[Vec4<T>],
    log: &TimeSeriesLog,
    dir: &std::path::Path,
) -> Result<()> {
    use crate::cases::CaseKind;
    match case.kind {
        CaseKind::Rae2822 => {
            let (p_inf, q_inf) = case.reference_pressures();
            let cp = crate::cases::airfoil::cp_distribution(
                mesh,
                w,
                case.wall_tag(),
                p_inf,
                q_inf,
                &case.gas,
            )?;
            let mut text = String::from("x,cp\n");
            for (x, value) in cp {
                text.push_str(&format!(
                    "{},{}\n",
                    crate::io::fmt_full(x),
                    crate::io::fmt_full(value)
                ));
            }
            std::fs::write(dir.join("cp.csv"), text)?;
        }
        CaseKind::NacaPitch => {
            // extract the lift hysteresis loop from the log
            let ai = log.columns.iter().position(|c| c == "alpha_deg");
            let ci = log.columns.iter().position(|c| c == "cl");
            if let (Some(ai), Some(ci)) = (ai, ci) {
                let mut text = String::from("alpha_deg,cl\n");
                for row in &log.rows {
                    text.push_str(&format!(
                        "{},{}\n",
                        crate::io::fmt_full(row[ai]),
                        crate::io::fmt_full(row[ci])
                    ));
                }
                std::fs::write(dir.join("cl_alpha.csv"), text)?;
            }
        }
        _ => {}
    }
    Ok(())
}

impl<T: Real> CaseDefinition<T> {
    /// Analytic wall velocity of the rigid motion at a position, zero for
    /// motionless cases.
    pub fn wall_velocity_at(&self, pos: Vec2<T>, t: T) -> Vec2<T> {
        let Some(motion) = self.motion() else {
            return Vec2::zeros();
        };
        let rate = motion.amplitude * motion.omega * (motion.omega * t).cos();
        let r = pos - motion.pivot;
        Vec2::new(-r.y, r.x) * rate
    }
}

/// Runs the uniform-flow benchmark of the given configuration and returns
/// the maximum nodal pressure error over the whole run.
pub fn check_gcl<T: Real>(config: &RunConfig<T>) -> Result<f64> {
    let summary = run(config)?;
    summary
        .max_value("max_p_err")
        .ok_or_else(|| Error::Config("configuration does not log max_p_err (not a GCL case)".into()))
}

/// Reads a Gmsh mesh and reports its validation result.
pub fn validate_mesh_file<T: Real>(path: &std::path::Path) -> Result<crate::mesh::ValidationReport> {
    let mesh: Mesh<T> = crate::io::gmsh::read_gmsh(path)?;
    Ok(mesh.validate())
}
