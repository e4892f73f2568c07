//! Plot-ready files: cell-average CSV (1D and 2D), legacy VTK structured
//! points (2D) and the per-step log.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::dg::{DgField, Space};
use crate::Result;

/// One row of the step log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub halvings: usize,
    pub doublings: usize,
    pub min_rho: f64,
    pub min_rho_e: f64,
    pub totals: [f64; 4],
}

pub const LOG_HEADER: &str = "step,t,dt,halvings,doublings,min_rho,min_rhoe,total_rho,total_mx,total_my,total_E";

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:.16e},{:.16e},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.step, r.t, r.dt, r.halvings, r.doublings, r.min_rho, r.min_rho_e, r.totals[0], r.totals[1], r.totals[2], r.totals[3]
        );
    }
    s
}

/// Cell-average primitive data: (rho, u, v, p, e).
fn averages(space: &Space, f: &DgField, gamma: f64) -> Vec<[f64; 5]> {
    (0..f.n_cells)
        .map(|c| {
            let a = f.average(space, c);
            let u = a.velocity();
            let re = a.rho_e();
            [a.rho, u[0], u[1], (gamma - 1.0) * re, re / a.rho]
        })
        .collect()
}

/// `x,rho,u,p,e` per cell, 17 significant digits.
pub fn csv_1d(space: &Space, f: &DgField, gamma: f64) -> String {
    let mut s = String::from("x,rho,u,p,e\n");
    for (c, a) in averages(space, f, gamma).iter().enumerate() {
        let x = space.mesh.cell_center(c)[0];
        let _ = writeln!(s, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", x, a[0], a[1], a[3], a[4]);
    }
    s
}

/// Cell-average grid over the bounding box; inactive cells are NaN.
fn grid_2d(space: &Space, f: &DgField, gamma: f64) -> Vec<Option<[f64; 5]>> {
    let m = &space.mesh;
    let av = averages(space, f, gamma);
    let mut g = Vec::with_capacity(m.shape[0] * m.shape[1]);
    for j in 0..m.shape[1] {
        for i in 0..m.shape[0] {
            g.push(m.cell_at(i, j).map(|c| av[c]));
        }
    }
    g
}

/// `x,y,rho,p,e,umag` on the full bounding-box grid.
pub fn csv_2d(space: &Space, f: &DgField, gamma: f64) -> String {
    let m = &space.mesh;
    let mut s = String::from("x,y,rho,p,e,umag\n");
    for (idx, v) in grid_2d(space, f, gamma).iter().enumerate() {
        let (i, j) = (idx % m.shape[0], idx / m.shape[0]);
        let x = m.origin[0] + (i as f64 + 0.5) * m.dx;
        let y = m.origin[1] + (j as f64 + 0.5) * m.dx;
        let a = v.unwrap_or([f64::NAN; 5]);
        let um = (a[1] * a[1] + a[2] * a[2]).sqrt();
        let _ = writeln!(s, "{x:.16e},{y:.16e},{:.16e},{:.16e},{:.16e},{um:.16e}", a[0], a[3], a[4]);
    }
    s
}

/// Legacy VTK structured points with point data at the cell centres.
pub fn vtk_2d(space: &Space, f: &DgField, gamma: f64, title: &str) -> String {
    let m = &space.mesh;
    let g = grid_2d(space, f, gamma);
    let (nx, ny) = (m.shape[0], m.shape[1]);
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "{}", title.replace('\n', " "));
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET STRUCTURED_POINTS");
    let _ = writeln!(s, "DIMENSIONS {nx} {ny} 1");
    let _ = writeln!(s, "ORIGIN {:.16e} {:.16e} 0", m.origin[0] + 0.5 * m.dx, m.origin[1] + 0.5 * m.dx);
    let _ = writeln!(s, "SPACING {:.16e} {:.16e} 1", m.dx, m.dx);
    let _ = writeln!(s, "POINT_DATA {}", nx * ny);
    let fields: [(&str, fn(&[f64; 5]) -> f64); 4] = [
        ("rho", |a| a[0]),
        ("p", |a| a[3]),
        ("e", |a| a[4]),
        ("umag", |a| (a[1] * a[1] + a[2] * a[2]).sqrt()),
    ];
    for (name, get) in fields {
        let _ = writeln!(s, "SCALARS {name} double 1");
        let _ = writeln!(s, "LOOKUP_TABLE default");
        for v in &g {
            let x = v.as_ref().map(get).unwrap_or(f64::NAN);
            if x.is_nan() {
                s.push_str("nan\n");
            } else {
                let _ = writeln!(s, "{x:.16e}");
            }
        }
    }
    s
}

/// Write the snapshot files for `stem` into `dir`.
pub fn write_snapshot(dir: &Path, stem: &str, space: &Space, f: &DgField, gamma: f64) -> Result<()> {
    fs::create_dir_all(dir)?;
    if space.dim() == 1 {
        fs::write(dir.join(format!("{stem}.csv")), csv_1d(space, f, gamma))?;
    } else {
        fs::write(dir.join(format!("{stem}.csv")), csv_2d(space, f, gamma))?;
        fs::write(dir.join(format!("{stem}.vtk")), vtk_2d(space, f, gamma, stem))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::euler::{ConsState, HyperbolicBc, ParabolicBc};
    use crate::mesh::{build_mesh, DomainSpec, Rect};

    #[test]
    fn csv_1d_round_trips_constants() {
        let spec = DomainSpec::new(1, vec![Rect::interval(0.0, 1.0)])
            .segment(0, 0.0, [0.0, 0.0], HyperbolicBc::Outflow, ParabolicBc::Neumann)
            .segment(0, 1.0, [0.0, 0.0], HyperbolicBc::Outflow, ParabolicBc::Neumann);
        let sp = Space::new(build_mesh(&spec, 0.25).unwrap(), 1).unwrap();
        let f = DgField::interpolate(&sp, |_| ConsState::from_primitive(0.5, [0.0, 0.0], 0.571, 1.4));
        let s = csv_1d(&sp, &f, 1.4);
        let lines: Vec<_> = s.lines().collect();
        assert_eq!(lines[0], "x,rho,u,p,e");
        assert_eq!(lines.len(), 5);
        let cols: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(cols[0], 0.125);
        assert_eq!(cols[1], 0.5);
        assert!((cols[3] - 0.571).abs() < 1e-15);
    }

    #[test]
    fn vtk_marks_inactive_cells() {
        let spec = DomainSpec::new(2, vec![Rect::new([0.0, 0.0], [2.0, 1.0]), Rect::new([0.0, 1.0], [1.0, 2.0])])
            .segment(1, 0.0, [0.0, 2.0], HyperbolicBc::Outflow, ParabolicBc::Neumann)
            .segment(0, 2.0, [0.0, 1.0], HyperbolicBc::Outflow, ParabolicBc::Neumann)
            .segment(1, 1.0, [1.0, 2.0], HyperbolicBc::Outflow, ParabolicBc::Neumann)
            .segment(0, 1.0, [1.0, 2.0], HyperbolicBc::Outflow, ParabolicBc::Neumann)
            .segment(1, 2.0, [0.0, 1.0], HyperbolicBc::Outflow, ParabolicBc::Neumann)
            .segment(0, 0.0, [0.0, 2.0], HyperbolicBc::Outflow, ParabolicBc::Neumann);
        let sp = Space::new(build_mesh(&spec, 1.0).unwrap(), 1).unwrap();
        let f = DgField::interpolate(&sp, |_| ConsState::from_primitive(1.0, [3.0, 4.0], 1.0, 1.4));
        let v = vtk_2d(&sp, &f, 1.4, "t");
        assert!(v.contains("DIMENSIONS 2 2 1"));
        assert_eq!(v.matches("nan").count(), 4);
        assert!(v.contains("SCALARS umag double 1\nLOOKUP_TABLE default\n5.0"));
        let c = csv_2d(&sp, &f, 1.4);
        assert_eq!(c.lines().count(), 5);
        assert!(c.lines().last().unwrap().contains("NaN"));
    }

    #[test]
    fn log_header() {
        let s = log_csv(&[LogRow { step: 1, t: 0.5, dt: 0.5, halvings: 0, doublings: 0, min_rho: 1.0, min_rho_e: 1.0, totals: [1.0; 4] }]);
        assert!(s.starts_with(LOG_HEADER));
        assert_eq!(s.lines().count(), 2);
    }
}
