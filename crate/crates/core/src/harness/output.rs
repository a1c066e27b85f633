//! Diagnostics CSV and legacy VTK snapshots.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::assembly::{Discretization, Field, SystemState};
use crate::dynamics::StepDiagnostics;
use crate::error::Result;

pub const CSV_HEADER: &str = "step,t,S,E_tot,exergy,D_h,E_balance_residual,S_balance_residual,newton_iters";

/// Row writer flushed after every step, so a failing run leaves every
/// accepted step on disk.
pub struct DiagnosticsWriter {
    out: BufWriter<File>,
}

impl DiagnosticsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{CSV_HEADER}")?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn write(&mut self, d: &StepDiagnostics) -> Result<()> {
        writeln!(self.out, "{}", csv_row(d))?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn csv_row(d: &StepDiagnostics) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        d.step,
        d.t,
        d.entropy,
        d.total_energy,
        d.exergy,
        d.entropy_production,
        d.energy_balance_residual,
        d.entropy_balance_residual,
        d.newton.iterations
    )
}

/// Vertex values of a scalar P1 block.
fn vertex_values(disc: &Discretization, state: &SystemState, f: Field) -> Vec<f64> {
    let fe = disc.field(state, f);
    (0..disc.mesh.vertex_count())
        .map(|v| fe.coefficients[fe.space.node_dof(v)])
        .collect()
}

/// Unstructured-grid snapshot with `phi`, `mu`, `theta`, `pressure` and
/// the velocity sampled at the vertices.
pub fn write_vtk(path: &Path, disc: &Discretization, state: &SystemState) -> Result<()> {
    let mesh = &disc.mesh;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "nacns t={}", state.t)?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "FIELD FieldData 1")?;
    writeln!(w, "TIME 1 1 double")?;
    writeln!(w, "{}", state.t)?;
    writeln!(w, "POINTS {} double", mesh.vertex_count())?;
    for v in &mesh.vertices {
        writeln!(w, "{} {} 0", v[0], v[1])?;
    }
    let nt = mesh.triangle_count();
    writeln!(w, "CELLS {} {}", nt, 4 * nt)?;
    for t in &mesh.triangles {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(w, "5")?;
    }
    writeln!(w, "POINT_DATA {}", mesh.vertex_count())?;
    for (name, f) in [
        ("phi", Field::Phi),
        ("mu", Field::Mu),
        ("theta", Field::Theta),
        ("pressure", Field::Pressure),
    ] {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for x in vertex_values(disc, state, f) {
            writeln!(w, "{x}")?;
        }
    }
    let u = disc.velocity(state);
    let n = u.space.dof_count();
    writeln!(w, "VECTORS velocity double")?;
    // P2 nodes start with the mesh vertices
    for v in 0..mesh.vertex_count() {
        let d = u.space.node_dof(v);
        writeln!(w, "{} {} 0", u.coefficients[d], u.coefficients[n + d])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::BoundaryKind;
    use crate::mesh::build_structured_mesh;
    use crate::solver::NewtonReport;
    use std::sync::Arc;

    #[test]
    fn row_matches_header() {
        let d = StepDiagnostics {
            step: 3,
            t: 0.003,
            entropy: 1.5,
            total_energy: -0.25,
            exergy: f64::NAN,
            entropy_production: 1e-7,
            energy_balance_residual: -3.0e-12,
            entropy_balance_residual: 0.0,
            exergy_balance_residual: f64::NAN,
            min_theta: 0.5,
            newton: NewtonReport {
                iterations: 4,
                increment_norm: 0.0,
                residual_norm: 0.0,
                damping_events: 0,
                converged: true,
            },
        };
        let row = csv_row(&d);
        assert_eq!(row, "3,0.003,1.5,-0.25,NaN,0.0000001,-0.000000000003,0,4");
        assert_eq!(row.split(',').count(), CSV_HEADER.split(',').count());
        let back: f64 = row.split(',').nth(6).unwrap().parse().unwrap();
        assert_eq!(back, -3.0e-12);
    }

    #[test]
    fn vtk_snapshot_layout() {
        let mesh = Arc::new(build_structured_mesh(1.0, 1.0, 2, 2).unwrap());
        let disc = Discretization::new(&mesh, BoundaryKind::Periodic).unwrap();
        let state = disc
            .initial_state(0.0, |x| x[0], |x| 1.0 + x[1], |x| [x[0] * (1.0 - x[0]), 0.0])
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.vtk");
        write_vtk(&path, &disc, &state).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0\n"));
        for key in ["POINTS 9 double", "CELLS 8 32", "CELL_TYPES 8", "POINT_DATA 9", "SCALARS phi double 1", "SCALARS mu", "SCALARS theta", "SCALARS pressure", "VECTORS velocity double"] {
            assert!(text.contains(key), "{key}");
        }
        // vertex 4 is the centre (0.5, 0.5): interior, so not merged
        let theta: Vec<f64> = text
            .split("SCALARS theta double 1\nLOOKUP_TABLE default\n")
            .nth(1)
            .unwrap()
            .lines()
            .take(9)
            .map(|l| l.parse().unwrap())
            .collect();
        assert_eq!(theta[4], 1.5);
    }
}
