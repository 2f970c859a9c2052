//! Plot-ready file output: CSV with a header row, '.' decimal separator
//! and LF line endings. Floats use Rust's shortest round-trip formatting,
//! so identical runs produce byte-identical files.

use crate::actuation::{side_coeffs, ControlBasis, ControlTrajectory};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Side};
use crate::ocp::IterationRecord;
use crate::particles::{BinnedDensity, ParticleEnsemble};
use crate::solver::StateTrajectory;
use crate::sparse::CsrMatrix;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

fn writer(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// nodes.csv (node,x,y) and triangles.csv (triangle,v0,v1,v2).
pub fn write_mesh_csv(mesh: &Mesh, dir: &Path) -> Result<()> {
    let mut w = writer(&dir.join("nodes.csv"))?;
    writeln!(w, "node,x,y")?;
    for (i, p) in mesh.nodes.iter().enumerate() {
        writeln!(w, "{i},{},{}", p[0], p[1])?;
    }
    let mut w = writer(&dir.join("triangles.csv"))?;
    writeln!(w, "triangle,v0,v1,v2")?;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        writeln!(w, "{t},{},{},{}", tri[0], tri[1], tri[2])?;
    }
    Ok(())
}

/// Coordinate (row, col, value) text dump of stored entries.
pub fn write_matrix_coo(m: &CsrMatrix, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "row,col,value")?;
    for (i, j, v) in m.iter() {
        writeln!(w, "{i},{j},{v}")?;
    }
    Ok(())
}

/// One nodal snapshot: node,x,y,value.
pub fn write_field_csv(mesh: &Mesh, nodal: &[f64], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "node,x,y,value")?;
    for (i, (p, v)) in mesh.nodes.iter().zip(nodal).enumerate() {
        writeln!(w, "{i},{},{},{v}", p[0], p[1])?;
    }
    Ok(())
}

/// One CSV per snapshot (`prefix_0000.csv`, ...) plus
/// `prefix_manifest.csv` listing step index, time stamp and file name.
pub fn write_trajectory_csv(
    mesh: &Mesh,
    traj: &StateTrajectory,
    dir: &Path,
    prefix: &str,
) -> Result<()> {
    let mut manifest = writer(&dir.join(format!("{prefix}_manifest.csv")))?;
    writeln!(manifest, "step,time,file")?;
    for (i, snapshot) in traj.steps.iter().enumerate() {
        let name = format!("{prefix}_{i:04}.csv");
        write_field_csv(mesh, snapshot, &dir.join(&name))?;
        writeln!(manifest, "{i},{},{name}", i as f64 * traj.dt)?;
    }
    Ok(())
}

/// Legacy-ASCII VTK dump of one nodal field (unstructured triangle grid
/// with point data), for visualization tools that prefer it over CSV.
pub fn write_field_vtk(mesh: &Mesh, nodal: &[f64], name: &str, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{name}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.n_nodes())?;
    for p in &mesh.nodes {
        writeln!(w, "{} {} 0", p[0], p[1])?;
    }
    writeln!(w, "CELLS {} {}", mesh.triangles.len(), 4 * mesh.triangles.len())?;
    for tri in &mesh.triangles {
        writeln!(w, "3 {} {} {}", tri[0], tri[1], tri[2])?;
    }
    writeln!(w, "CELL_TYPES {}", mesh.triangles.len())?;
    for _ in &mesh.triangles {
        writeln!(w, "5")?;
    }
    writeln!(w, "POINT_DATA {}", mesh.n_nodes())?;
    writeln!(w, "SCALARS {name} double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in nodal {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

/// Adjoint snapshots (instants 1..=N) plus a manifest, mirroring
/// `write_trajectory_csv`.
pub fn write_adjoint_csv(
    mesh: &Mesh,
    adjoint: &crate::solver::AdjointTrajectory,
    dir: &Path,
    prefix: &str,
) -> Result<()> {
    let mut manifest = writer(&dir.join(format!("{prefix}_manifest.csv")))?;
    writeln!(manifest, "step,time,file")?;
    for (i, snapshot) in adjoint.iter() {
        let name = format!("{prefix}_{i:04}.csv");
        write_field_csv(mesh, snapshot, &dir.join(&name))?;
        writeln!(manifest, "{i},{},{name}", i as f64 * adjoint.dt)?;
    }
    Ok(())
}

/// Flat control dump: step,side,basis,value with 1-based side and basis
/// ids.
pub fn write_control_csv(ctrl: &ControlTrajectory, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "step,side,basis,value")?;
    for i in 0..=ctrl.n_steps() {
        for side in Side::ALL {
            for k in 0..ctrl.n_basis() {
                writeln!(w, "{i},{},{},{}", side.id(), k + 1, ctrl.get(i, side, k))?;
            }
        }
    }
    Ok(())
}

/// Read a control trajectory written by `write_control_csv`; dt comes
/// from the caller, shape is inferred from the indices.
pub fn read_control_csv(path: &Path, dt: f64) -> Result<ControlTrajectory> {
    let file = File::open(path)?;
    let mut entries: Vec<(usize, usize, usize, f64)> = Vec::new();
    let mut max_step = 0usize;
    let mut max_basis = 0usize;
    for (ln, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if ln == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.trim().split(',').collect();
        if parts.len() != 4 {
            return Err(Error::config(
                "control csv",
                format!("line {}: expected step,side,basis,value", ln + 1),
            ));
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::config("control csv", format!("line {}: bad {what}", ln + 1)))
        };
        let step = parse(parts[0], "step")? as usize;
        let side = parse(parts[1], "side")? as usize;
        let basis = parse(parts[2], "basis")? as usize;
        let value = parse(parts[3], "value")?;
        if !(1..=4).contains(&side) || basis == 0 {
            return Err(Error::config(
                "control csv",
                format!("line {}: side must be 1..4 and basis >= 1", ln + 1),
            ));
        }
        max_step = max_step.max(step);
        max_basis = max_basis.max(basis);
        entries.push((step, side, basis, value));
    }
    if entries.is_empty() || max_step == 0 {
        return Err(Error::config("control csv", "no control entries found"));
    }
    let mut ctrl = ControlTrajectory::zeros(max_step, max_basis, dt);
    for (step, side, basis, value) in entries {
        ctrl.set(step, Side::from_id(side).unwrap(), basis - 1, value);
    }
    Ok(ctrl)
}

/// Reconstructed actuator intensity u_a(s, t_i) on an `n_samples` grid
/// along the side: time,s,value.
pub fn write_control_intensity_csv(
    ctrl: &ControlTrajectory,
    basis: &ControlBasis,
    side: Side,
    n_samples: usize,
    path: &Path,
) -> Result<()> {
    let m = n_samples.max(2);
    let mut w = writer(path)?;
    writeln!(w, "time,s,value")?;
    for i in 0..=ctrl.n_steps() {
        let t = i as f64 * ctrl.dt();
        let coeffs = side_coeffs(ctrl.instant(i), side, ctrl.n_basis());
        for g in 0..m {
            let s = g as f64 / (m - 1) as f64;
            writeln!(w, "{t},{s},{}", basis.boundary_value(coeffs, s))?;
        }
    }
    Ok(())
}

/// Optimizer history: iter,total,terminal,control,pg_norm,step.
pub fn write_history_csv(history: &[IterationRecord], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "iter,total,terminal,control,pg_norm,step")?;
    for r in history {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.iter, r.total, r.terminal, r.control, r.pg_norm, r.step
        )?;
    }
    Ok(())
}

/// Binned density cells: i,j,x,y,value (cell centers).
pub fn write_binned_csv(binned: &BinnedDensity, path: &Path) -> Result<()> {
    let b = binned.bins;
    let mut w = writer(path)?;
    writeln!(w, "i,j,x,y,value")?;
    for j in 0..b {
        for i in 0..b {
            let x = (i as f64 + 0.5) / b as f64;
            let y = (j as f64 + 0.5) / b as f64;
            writeln!(w, "{i},{j},{x},{y},{}", binned.values[j * b + i])?;
        }
    }
    Ok(())
}

/// Particle snapshot: particle,x,y.
pub fn write_particles_csv(ensemble: &ParticleEnsemble, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "particle,x,y")?;
    for (i, p) in ensemble.positions.iter().enumerate() {
        writeln!(w, "{i},{},{}", p[0], p[1])?;
    }
    Ok(())
}

/// Per-instant series (e.g. Garding shifts): step,time,value.
pub fn write_series_csv(values: &[f64], dt: f64, name: &str, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "step,time,{name}")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(w, "{i},{},{v}", i as f64 * dt)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempdir::scratch;

    mod tempdir {
        use std::path::PathBuf;

        pub struct Scratch(pub PathBuf);

        impl Drop for Scratch {
            fn drop(&mut self) {
                let _ = std::fs::remove_dir_all(&self.0);
            }
        }

        pub fn scratch(tag: &str) -> Scratch {
            let dir = std::env::temp_dir().join(format!(
                "densteer-export-{tag}-{}",
                std::process::id()
            ));
            std::fs::create_dir_all(&dir).unwrap();
            Scratch(dir)
        }
    }

    #[test]
    fn control_csv_round_trips() {
        let dir = scratch("ctrl");
        let mut ctrl = ControlTrajectory::zeros(3, 2, 0.01);
        ctrl.set(1, Side::Right, 0, 0.25);
        ctrl.set(3, Side::Left, 1, 0.75);
        let path = dir.0.join("control.csv");
        write_control_csv(&ctrl, &path).unwrap();
        let back = read_control_csv(&path, 0.01).unwrap();
        assert_eq!(back, ctrl);
    }

    #[test]
    fn mesh_and_field_files_have_headers_and_rows() {
        let dir = scratch("mesh");
        let mesh = Mesh::structured(2, 2).unwrap();
        write_mesh_csv(&mesh, &dir.0).unwrap();
        let nodes = std::fs::read_to_string(dir.0.join("nodes.csv")).unwrap();
        assert!(nodes.starts_with("node,x,y\n"));
        assert_eq!(nodes.lines().count(), 10); // header + 9 nodes

        let nodal: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let path = dir.0.join("field.csv");
        write_field_csv(&mesh, &nodal, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().last().unwrap().ends_with(",8"));
    }

    #[test]
    fn identical_inputs_produce_identical_bytes() {
        let dir = scratch("bytes");
        let mesh = Mesh::structured(3, 3).unwrap();
        let nodal: Vec<f64> = mesh.nodes.iter().map(|p| p[0] * 0.1 + p[1]).collect();
        let a = dir.0.join("a.csv");
        let b = dir.0.join("b.csv");
        write_field_csv(&mesh, &nodal, &a).unwrap();
        write_field_csv(&mesh, &nodal, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn vtk_dump_has_the_legacy_layout() {
        let dir = scratch("vtk");
        let mesh = Mesh::structured(2, 2).unwrap();
        let nodal: Vec<f64> = (0..9).map(|i| i as f64 * 0.1).collect();
        let path = dir.0.join("field.vtk");
        write_field_vtk(&mesh, &nodal, "density", &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(text.contains("DATASET UNSTRUCTURED_GRID"));
        assert!(text.contains("POINTS 9 double"));
        assert!(text.contains("CELLS 8 32"));
        assert!(text.contains("SCALARS density double 1"));
    }

    #[test]
    fn malformed_control_csv_is_rejected() {
        let dir = scratch("bad");
        let path = dir.0.join("bad.csv");
        std::fs::write(&path, "step,side,basis,value\n0,9,1,0.5\n").unwrap();
        assert!(read_control_csv(&path, 0.01).is_err());
    }
}
