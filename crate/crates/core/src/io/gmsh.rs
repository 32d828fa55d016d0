//! Gmsh ASCII v2.2 reader and writer (the subset with 2-node boundary lines
//! and 3-node triangles, physical tags on lines).

use crate::mesh::{EntityStatus, Mesh};
use crate::{Error, Real, Result, Vec2};
use std::io::Write;
use std::path::Path;

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

pub fn read_gmsh<T: Real>(path: &Path) -> Result<Mesh<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| parse_err(path, 0, e.to_string()))?;
    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    let mut points: Vec<Vec2<T>> = Vec::new();
    let mut id_map = std::collections::HashMap::new();
    let mut tris: Vec<[usize; 3]> = Vec::new();
    let mut bedges: Vec<([usize; 2], u32)> = Vec::new();

    while i < lines.len() {
        match lines[i].trim() {
            "$MeshFormat" => {
                let fields: Vec<&str> = lines
                    .get(i + 1)
                    .ok_or_else(|| parse_err(path, i + 2, "truncated $MeshFormat"))?
                    .split_whitespace()
                    .collect();
                if fields.first() != Some(&"2.2") {
                    return Err(parse_err(
                        path,
                        i + 2,
                        format!("unsupported format version {:?}", fields.first()),
                    ));
                }
                i += 3;
            }
            "$Nodes" => {
                let count: usize = lines
                    .get(i + 1)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| parse_err(path, i + 2, "bad node count"))?;
                for k in 0..count {
                    let row = lines
                        .get(i + 2 + k)
                        .ok_or_else(|| parse_err(path, i + 2 + k, "truncated $Nodes"))?;
                    let fields: Vec<&str> = row.split_whitespace().collect();
                    if fields.len() < 3 {
                        return Err(parse_err(path, i + 3 + k, "node needs id x y [z]"));
                    }
                    let id: usize = fields[0]
                        .parse()
                        .map_err(|e| parse_err(path, i + 3 + k, format!("bad id: {e}")))?;
                    let x: f64 = fields[1]
                        .parse()
                        .map_err(|e| parse_err(path, i + 3 + k, format!("bad x: {e}")))?;
                    let y: f64 = fields[2]
                        .parse()
                        .map_err(|e| parse_err(path, i + 3 + k, format!("bad y: {e}")))?;
                    id_map.insert(id, points.len());
                    points.push(Vec2::new(T::cst(x), T::cst(y)));
                }
                i += count + 3;
            }
            "$Elements" => {
                let count: usize = lines
                    .get(i + 1)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| parse_err(path, i + 2, "bad element count"))?;
                for k in 0..count {
                    let lineno = i + 3 + k;
                    let row = lines
                        .get(i + 2 + k)
                        .ok_or_else(|| parse_err(path, lineno, "truncated $Elements"))?;
                    let fields: Vec<usize> = row
                        .split_whitespace()
                        .map(|f| f.parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| parse_err(path, lineno, format!("bad element: {e}")))?;
                    if fields.len() < 3 {
                        return Err(parse_err(path, lineno, "short element row"));
                    }
                    let etype = fields[1];
                    let ntags = fields[2];
                    let tags = &fields[3..3 + ntags];
                    let nodes = &fields[3 + ntags..];
                    let resolve = |id: usize| {
                        id_map
                            .get(&id)
                            .copied()
                            .ok_or_else(|| parse_err(path, lineno, format!("unknown node {id}")))
                    };
                    match etype {
                        1 => {
                            if nodes.len() != 2 {
                                return Err(parse_err(path, lineno, "line needs 2 nodes"));
                            }
                            let tag = tags.first().copied().unwrap_or(0) as u32;
                            bedges.push(([resolve(nodes[0])?, resolve(nodes[1])?], tag));
                        }
                        2 => {
                            if nodes.len() != 3 {
                                return Err(parse_err(path, lineno, "triangle needs 3 nodes"));
                            }
                            tris.push([resolve(nodes[0])?, resolve(nodes[1])?, resolve(nodes[2])?]);
                        }
                        15 => {} // isolated points are ignored
                        other => {
                            return Err(parse_err(
                                path,
                                lineno,
                                format!("unsupported element type {other}"),
                            ))
                        }
                    }
                }
                i += count + 3;
            }
            _ => i += 1,
        }
    }

    if points.is_empty() || tris.is_empty() {
        return Err(parse_err(path, 0, "no nodes or no triangles found"));
    }
    let mut mesh = Mesh::new(points, tris, bedges);
    mesh.normalize_orientation();
    mesh.compute_metrics()?;
    Ok(mesh)
}

/// Writes the active part of the mesh; ghost and retired entities are
/// excluded and nodes renumbered contiguously.
pub fn write_gmsh<T: Real>(mesh: &Mesh<T>, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "$MeshFormat\n2.2 0 8\n$EndMeshFormat")?;

    let mut renumber = vec![0usize; mesh.nodes.len()];
    let mut active_nodes = Vec::new();
    for (i, node) in mesh.nodes.iter().enumerate() {
        if node.status == EntityStatus::Active {
            renumber[i] = active_nodes.len() + 1;
            active_nodes.push(i);
        }
    }
    writeln!(out, "$Nodes\n{}", active_nodes.len())?;
    for (new_id, &i) in active_nodes.iter().enumerate() {
        writeln!(
            out,
            "{} {} {} 0",
            new_id + 1,
            super::fmt_full(mesh.nodes[i].pos.x),
            super::fmt_full(mesh.nodes[i].pos.y)
        )?;
    }
    writeln!(out, "$EndNodes")?;

    let bedges: Vec<_> = mesh
        .boundary_edges
        .iter()
        .filter(|b| b.status == EntityStatus::Active)
        .collect();
    let tris: Vec<_> = mesh
        .triangles
        .iter()
        .filter(|t| t.status == EntityStatus::Active)
        .collect();
    writeln!(out, "$Elements\n{}", bedges.len() + tris.len())?;
    let mut eid = 1;
    for be in bedges {
        writeln!(
            out,
            "{eid} 1 2 {} {} {} {}",
            be.tag, be.tag, renumber[be.nodes[0]], renumber[be.nodes[1]]
        )?;
        eid += 1;
    }
    for t in tris {
        writeln!(
            out,
            "{eid} 2 2 0 0 {} {} {}",
            renumber[t.nodes[0]], renumber[t.nodes[1]], renumber[t.nodes[2]]
        )?;
        eid += 1;
    }
    writeln!(out, "$EndElements")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::meshgen;

    #[test]
    fn write_read_round_trip_is_bitwise() {
        let dir = std::env::temp_dir().join("ale_rd_gmsh_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rt.msh");

        let xs = meshgen::linspace(0.0f64, 1.0, 5);
        let mut mesh = meshgen::tensor_grid(&xs, &xs, |_| 7);
        // make coordinates bit-interesting
        for n in &mut mesh.nodes {
            n.pos.x += std::f64::consts::PI * 1e-3;
        }
        mesh.update_metrics_unchecked();

        write_gmsh(&mesh, &path).unwrap();
        let back: Mesh<f64> = read_gmsh(&path).unwrap();
        assert_eq!(back.nodes.len(), mesh.nodes.len());
        for (a, b) in mesh.nodes.iter().zip(&back.nodes) {
            assert_eq!(a.pos.x.to_bits(), b.pos.x.to_bits());
            assert_eq!(a.pos.y.to_bits(), b.pos.y.to_bits());
        }
        assert_eq!(back.n_active_triangles(), mesh.n_active_triangles());
        assert!(back.validate().is_clean());
        assert_eq!(back.boundary_edges[0].tag, 7);
    }

    #[test]
    fn malformed_file_reports_line() {
        let dir = std::env::temp_dir().join("ale_rd_gmsh_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.msh");
        std::fs::write(
            &path,
            "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n1\n1 oops 0 0\n$EndNodes\n",
        )
        .unwrap();
        match read_gmsh::<f64>(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
