//! Time-series CSV and legacy VTK writers.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::fem::{Degree, FEField};

/// Shortest representation that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Streams `t,ubar_1,...,ubar_N` rows.
pub struct TimeseriesWriter<W: Write> {
    out: W,
}

impl TimeseriesWriter<BufWriter<File>> {
    pub fn create(path: &Path, num_species: usize) -> io::Result<Self> {
        Self::new(BufWriter::new(File::create(path)?), num_species)
    }
}

impl<W: Write> TimeseriesWriter<W> {
    pub fn new(mut out: W, num_species: usize) -> io::Result<Self> {
        let mut header = String::from("t");
        for i in 1..=num_species {
            header.push_str(&format!(",ubar_{i}"));
        }
        writeln!(out, "{header}")?;
        Ok(Self { out })
    }

    pub fn row(&mut self, t: f64, averages: &[f64]) -> io::Result<()> {
        let mut line = format_f64(t);
        for &a in averages {
            line.push(',');
            line.push_str(&format_f64(a));
        }
        line.push('\n');
        self.out.write_all(line.as_bytes())
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Writes a whole series in one go.
pub fn write_timeseries_csv(path: &Path, times: &[f64], averages: &[Vec<f64>]) -> io::Result<()> {
    let n = averages.first().map_or(0, Vec::len);
    let mut w = TimeseriesWriter::create(path, n)?;
    for (t, a) in times.iter().zip(averages) {
        w.row(*t, a)?;
    }
    w.finish().map(|_| ())
}

/// Parses a file written by [`write_timeseries_csv`].
pub fn read_timeseries_csv(text: &str) -> Result<(Vec<f64>, Vec<Vec<f64>>), String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    let cols = header.split(',').count();
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let vals = line
            .split(',')
            .map(str::parse::<f64>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| format!("row {}: {e}", k + 1))?;
        if vals.len() != cols {
            return Err(format!("row {}: {} columns, expected {cols}", k + 1, vals.len()));
        }
        times.push(vals[0]);
        rows.push(vals[1..].to_vec());
    }
    Ok((times, rows))
}

/// Legacy ASCII VTK of the species fields on a shared space. P2 triangles
/// are split into four linear sub-triangles through the edge midpoints.
pub fn write_vtk(out: &mut impl Write, fields: &[FEField], title: &str) -> io::Result<()> {
    let space = fields.first().expect("at least one field").space();
    let coords = space.dof_coords();
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{title}")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", coords.len())?;
    for p in coords {
        writeln!(out, "{} {} 0", format_f64(p[0]), format_f64(p[1]))?;
    }
    let cells: Vec<[usize; 3]> = (0..space.num_cells())
        .flat_map(|e| {
            let d = space.cell_dofs(e);
            match space.degree() {
                Degree::P1 => vec![[d[0], d[1], d[2]]],
                Degree::P2 => vec![
                    [d[0], d[3], d[5]],
                    [d[3], d[1], d[4]],
                    [d[5], d[4], d[2]],
                    [d[3], d[4], d[5]],
                ],
            }
        })
        .collect();
    writeln!(out, "CELLS {} {}", cells.len(), 4 * cells.len())?;
    for c in &cells {
        writeln!(out, "3 {} {} {}", c[0], c[1], c[2])?;
    }
    writeln!(out, "CELL_TYPES {}", cells.len())?;
    for _ in &cells {
        writeln!(out, "5")?;
    }
    writeln!(out, "POINT_DATA {}", coords.len())?;
    for (i, f) in fields.iter().enumerate() {
        writeln!(out, "SCALARS u{} double 1", i + 1)?;
        writeln!(out, "LOOKUP_TABLE default")?;
        for v in f.coeffs() {
            writeln!(out, "{}", format_f64(*v))?;
        }
    }
    Ok(())
}

pub fn write_vtk_snapshot(path: &Path, fields: &[FEField], time: f64) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_vtk(
        &mut out,
        fields,
        &format!("species densities at t = {}", format_f64(time)),
    )?;
    out.flush()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::fem::FunctionSpace;
    use crate::mesh::Mesh;

    fn vtk_for(degree: Degree, value: f64) -> String {
        let space = FunctionSpace::new(Arc::new(Mesh::unit_square(1).unwrap()), degree).unwrap();
        let u = FEField::constant(Arc::clone(&space), value, 0.0);
        let mut buf = Vec::new();
        write_vtk(&mut buf, &[u.clone(), u], "test").unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn vtk_counts_p1_and_p2() {
        let p1 = vtk_for(Degree::P1, 1.6);
        assert!(p1.contains("POINTS 4 double"));
        assert!(p1.contains("CELLS 2 8"));
        assert!(p1.contains("CELL_TYPES 2"));
        let p2 = vtk_for(Degree::P2, 1.6);
        assert!(p2.contains("POINTS 9 double"));
        assert!(p2.contains("CELLS 8 32"));
        assert!(p2.contains("POINT_DATA 9"));
        assert!(p2.contains("SCALARS u2 double 1"));
    }

    #[test]
    fn vtk_values_of_constant_field() {
        let text = vtk_for(Degree::P2, 1.6);
        let data = text.split("LOOKUP_TABLE default\n").nth(1).unwrap();
        let vals: Vec<&str> = data.lines().take(9).collect();
        assert!(vals.iter().all(|v| *v == "1.6"), "{vals:?}");
    }

    #[test]
    fn vtk_sub_triangles_cover_each_cell() {
        let text = vtk_for(Degree::P2, 0.0);
        let cells: Vec<Vec<usize>> = text
            .split("CELLS 8 32\n")
            .nth(1)
            .unwrap()
            .lines()
            .take(8)
            .map(|l| l.split(' ').skip(1).map(|v| v.parse().unwrap()).collect())
            .collect();
        let mut used = [false; 9];
        for c in &cells {
            for &v in c {
                used[v] = true;
            }
        }
        assert!(used.iter().all(|&u| u));
    }

    #[test]
    fn csv_header_and_initial_row() {
        let mut w = TimeseriesWriter::new(Vec::new(), 3).unwrap();
        w.row(0.0, &[1.6, 1.6, 1.6]).unwrap();
        w.row(0.1, &[1.0e-7, 2.5e16, -0.25]).unwrap();
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        assert_eq!(text, "t,ubar_1,ubar_2,ubar_3\n0,1.6,1.6,1.6\n0.1,1e-7,2.5e16,-0.25\n");
    }

    #[test]
    fn csv_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ts.csv");
        let times = vec![0.0, 0.1, 0.2];
        let avgs = vec![vec![1.6, 0.3], vec![1.5999999999999999, 1.0 / 3.0], vec![2.0e-9, 7.25]];
        write_timeseries_csv(&path, &times, &avgs).unwrap();
        let (t, a) = read_timeseries_csv(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(t, times);
        assert_eq!(a, avgs);
    }

    proptest! {
        #[test]
        fn formatting_round_trips(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            prop_assume!(v.is_finite());
            let back: f64 = format_f64(v).parse().unwrap();
            prop_assert_eq!(back.to_bits(), v.to_bits());
        }
    }
}
