//! Field and history writers.
//!
//! Floats are printed with 17 significant digits, which round-trips every
//! `f64` exactly; output is therefore a pure function of the state.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use cylflow::euler::{FlowState, IterationRecord};
use cylflow::{Frame, ScalarField, VectorField};

pub const CSV_HEADER: &str = "r,theta,z,vr,vtheta,vz,p,fr,ftheta,fz";
pub const HISTORY_HEADER: &str = "iter,update_norm,ratio,momentum_res,div_res";

fn num(out: &mut String, x: f64) {
    write!(out, "{x:.16e}").expect("writing to a String");
}

/// One row per node in index order: cylindrical velocity, pressure and
/// cylindrical vorticity.
pub fn fields_csv(v: &VectorField, p: &ScalarField, f: &VectorField) -> String {
    let g = v.grid();
    let v = v.to_cylindrical();
    let f = f.to_cylindrical();
    let mut out = String::with_capacity(g.node_count() * 10 * 24 + CSV_HEADER.len() + 1);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for n in 0..g.node_count() {
        let pt = g.point(n);
        let vv = v.get(n);
        let ff = f.get(n);
        let row = [
            pt.r,
            pt.theta,
            pt.z,
            vv[0],
            vv[1],
            vv[2],
            p.values()[n],
            ff[0],
            ff[1],
            ff[2],
        ];
        for (c, x) in row.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            num(&mut out, *x);
        }
        out.push('\n');
    }
    out
}

/// Legacy ASCII VTK structured grid. The seam `theta = 2 pi` repeats the
/// first ring so the mesh closes; vectors are Cartesian.
pub fn fields_vtk(v: &VectorField, p: &ScalarField, f: &VectorField) -> String {
    let g = v.grid();
    let vc = v.in_frame(Frame::Cartesian);
    let fc = f.in_frame(Frame::Cartesian);
    let (nr, nt, nz) = (g.n_r(), g.n_theta(), g.n_z());
    let count = nr * (nt + 1) * nz;
    let nodes = || (0..nz).flat_map(move |k| (0..=nt).flat_map(move |j| (0..nr).map(move |i| (i, j, k))));
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str("cylflow steady Euler flow\n");
    out.push_str("ASCII\n");
    out.push_str("DATASET STRUCTURED_GRID\n");
    writeln!(out, "DIMENSIONS {nr} {} {nz}", nt + 1).unwrap();
    writeln!(out, "POINTS {count} double").unwrap();
    let triple = |out: &mut String, a: [f64; 3]| {
        num(out, a[0]);
        out.push(' ');
        num(out, a[1]);
        out.push(' ');
        num(out, a[2]);
        out.push('\n');
    };
    for (i, j, k) in nodes() {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / nt as f64;
        let r = g.r(i);
        triple(&mut out, [r * theta.cos(), r * theta.sin(), g.z(k)]);
    }
    writeln!(out, "POINT_DATA {count}").unwrap();
    out.push_str("VECTORS velocity double\n");
    for (i, j, k) in nodes() {
        triple(&mut out, vc.get(g.index(i, j % nt, k)));
    }
    out.push_str("SCALARS pressure double 1\nLOOKUP_TABLE default\n");
    for (i, j, k) in nodes() {
        num(&mut out, p.values()[g.index(i, j % nt, k)]);
        out.push('\n');
    }
    out.push_str("VECTORS vorticity double\n");
    for (i, j, k) in nodes() {
        triple(&mut out, fc.get(g.index(i, j % nt, k)));
    }
    out
}

/// History rows; the ratio of the first iteration is left empty.
pub fn history_csv(history: &[IterationRecord]) -> String {
    let mut out = String::new();
    out.push_str(HISTORY_HEADER);
    out.push('\n');
    for r in history {
        write!(out, "{},", r.iter).unwrap();
        num(&mut out, r.update_norm);
        out.push(',');
        if let Some(x) = r.ratio {
            num(&mut out, x);
        }
        out.push(',');
        num(&mut out, r.momentum_res);
        out.push(',');
        num(&mut out, r.div_res);
        out.push('\n');
    }
    out
}

pub fn write_csv(state: &FlowState, path: &Path) -> io::Result<()> {
    fs::write(path, fields_csv(&state.v, &state.p, &state.f))
}

pub fn write_vtk(state: &FlowState, path: &Path) -> io::Result<()> {
    fs::write(path, fields_vtk(&state.v, &state.p, &state.f))
}

pub fn write_history(history: &[IterationRecord], path: &Path) -> io::Result<()> {
    fs::write(path, history_csv(history))
}

/// Parse a field CSV back into rows of ten numbers.
pub fn parse_fields_csv(text: &str) -> Result<Vec<[f64; 10]>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    lines
        .enumerate()
        .map(|(l, line)| {
            let mut row = [0.0; 10];
            let mut parts = line.split(',');
            for slot in row.iter_mut() {
                let s = parts.next().ok_or_else(|| format!("row {}: too few columns", l + 1))?;
                *slot = s.parse().map_err(|e| format!("row {}: {e}", l + 1))?;
            }
            if parts.next().is_some() {
                return Err(format!("row {}: too many columns", l + 1));
            }
            Ok(row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use cylflow::build_grid;

    fn sample() -> (VectorField, ScalarField, VectorField) {
        let g = build_grid(1.0, 1.0, 4, 4, 4).unwrap();
        let v = VectorField::from_fn(&g, Frame::Cylindrical, |p| {
            [0.1 * p.z, p.r.sin() / 3.0, 1.0 + p.theta.cos()]
        });
        let p = ScalarField::from_fn(&g, |q| -0.5 + q.r * q.r / 7.0);
        let f = VectorField::from_fn(&g, Frame::Cylindrical, |q| [q.z, -q.r, 1e-300 * q.theta]);
        (v, p, f)
    }

    #[test]
    fn csv_row_count_and_round_trip() {
        let (v, p, f) = sample();
        let text = fields_csv(&v, &p, &f);
        assert_eq!(text.lines().count(), 65);
        assert!(text.ends_with('\n'));
        let rows = parse_fields_csv(&text).unwrap();
        let g = v.grid();
        for (n, row) in rows.iter().enumerate() {
            let pt = g.point(n);
            let vv = v.get(n);
            let ff = f.get(n);
            let expect = [
                pt.r,
                pt.theta,
                pt.z,
                vv[0],
                vv[1],
                vv[2],
                p.values()[n],
                ff[0],
                ff[1],
                ff[2],
            ];
            for c in 0..10 {
                assert_eq!(row[c].to_bits(), expect[c].to_bits(), "node {n} column {c}");
            }
        }
    }

    #[test]
    fn vtk_layout() {
        let (v, p, f) = sample();
        let text = fields_vtk(&v, &p, &f);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[3], "DATASET STRUCTURED_GRID");
        assert_eq!(lines[4], "DIMENSIONS 4 5 4");
        assert_eq!(lines[5], "POINTS 80 double");
        assert_eq!(text.matches("VECTORS ").count() + text.matches("SCALARS ").count(), 3);
        // header 6 lines, 80 points, POINT_DATA, 3 arrays of 80 with 1, 2 and 1 header lines
        assert_eq!(lines.len(), 6 + 80 + 1 + (1 + 80) + (2 + 80) + (1 + 80));
    }

    #[test]
    fn history_columns() {
        let rows = [
            IterationRecord {
                iter: 1,
                update_norm: 0.5,
                ratio: None,
                momentum_res: 1e-3,
                div_res: 0.0,
                perturbation_norm: 0.5,
            },
            IterationRecord {
                iter: 2,
                update_norm: 0.05,
                ratio: Some(0.1),
                momentum_res: 1e-4,
                div_res: 0.0,
                perturbation_norm: 0.5,
            },
        ];
        let text = history_csv(&rows);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], HISTORY_HEADER);
        assert_eq!(lines[1].split(',').nth(2), Some(""));
        assert_eq!(lines[2].split(',').count(), 5);
        assert_eq!(lines[2].split(',').nth(2).unwrap().parse::<f64>().unwrap(), 0.1);
    }
}
