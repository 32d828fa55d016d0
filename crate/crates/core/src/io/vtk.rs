//! Legacy ASCII VTK writer for snapshots (active entities only).

use crate::gas::{self, ConservativeState, GasParameters};
use crate::mesh::{EntityStatus, Mesh};
use crate::{Real, Result, Vec4};
use std::io::Write;
use std::path::Path;

pub fn write_vtk<T: Real>(
    mesh: &Mesh<T>,
    w: &[Vec4<T>],
    gas: &GasParameters<T>,
    path: &Path,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "ale-rd solution snapshot")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;

    let mut renumber = vec![usize::MAX; mesh.nodes.len()];
    let mut active = Vec::new();
    for (i, n) in mesh.nodes.iter().enumerate() {
        if n.status == EntityStatus::Active {
            renumber[i] = active.len();
            active.push(i);
        }
    }
    writeln!(out, "POINTS {} double", active.len())?;
    for &i in &active {
        writeln!(
            out,
            "{} {} 0",
            super::fmt_full(mesh.nodes[i].pos.x),
            super::fmt_full(mesh.nodes[i].pos.y)
        )?;
    }

    let tris: Vec<[usize; 3]> = mesh
        .triangles
        .iter()
        .filter(|t| t.status == EntityStatus::Active)
        .map(|t| t.nodes)
        .collect();
    writeln!(out, "CELLS {} {}", tris.len(), 4 * tris.len())?;
    for t in &tris {
        writeln!(out, "3 {} {} {}", renumber[t[0]], renumber[t[1]], renumber[t[2]])?;
    }
    writeln!(out, "CELL_TYPES {}", tris.len())?;
    for _ in &tris {
        writeln!(out, "5")?;
    }

    writeln!(out, "POINT_DATA {}", active.len())?;
    writeln!(out, "SCALARS Density double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for &i in &active {
        writeln!(out, "{}", super::fmt_full(w[i][0]))?;
    }
    writeln!(out, "VECTORS Momentum double")?;
    for &i in &active {
        writeln!(
            out,
            "{} {} 0",
            super::fmt_full(w[i][1]),
            super::fmt_full(w[i][2])
        )?;
    }
    writeln!(out, "SCALARS Energy double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for &i in &active {
        writeln!(out, "{}", super::fmt_full(w[i][3]))?;
    }
    writeln!(out, "SCALARS Pressure double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    let mut mach = Vec::with_capacity(active.len());
    for &i in &active {
        let state = ConservativeState::from_vector(w[i]);
        let p = gas::pressure(&state, gas)?;
        mach.push(state.velocity().norm() / (gas.gamma * p / state.rho).sqrt());
        writeln!(out, "{}", super::fmt_full(p))?;
    }
    writeln!(out, "SCALARS Mach double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for m in mach {
        writeln!(out, "{}", super::fmt_full(m))?;
    }
    Ok(())
}
