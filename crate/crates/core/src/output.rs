//! Field snapshots: legacy VTK structured points and a plain CSV twin.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::lattice::Grid;
use crate::lks::StateFields;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VtkEncoding {
    Ascii,
    #[default]
    Binary,
}

/// Point data of one snapshot, node-ordered (`j·nx + i`).
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotFields {
    pub nx: usize,
    pub ny: usize,
    pub gamma: Vec<f64>,
    pub u: Vec<[f64; 2]>,
    pub p: Vec<f64>,
    /// Absent in non-thermal runs.
    pub t: Option<Vec<f64>>,
}

impl SnapshotFields {
    pub fn new(grid: &Grid, gamma: &[f64], state: &StateFields, thermal: bool) -> Self {
        Self {
            nx: grid.nx,
            ny: grid.ny,
            gamma: gamma.to_vec(),
            u: state.u.clone(),
            p: (0..grid.len()).map(|n| state.pressure(n)).collect(),
            t: thermal.then(|| state.t.clone()),
        }
    }

    fn speed(&self) -> Vec<f64> {
        self.u.iter().map(|v| v[0].hypot(v[1])).collect()
    }
}

/// `<case>_it<iteration>_step<step>`.
pub fn snapshot_stem(case: &str, iteration: usize, step: usize) -> String {
    format!("{case}_it{iteration:05}_step{step:07}")
}

/// Writes `<stem>.vtk` and `<stem>.csv` into `dir`; returns both paths.
pub fn write_snapshot(
    dir: &Path,
    case: &str,
    iteration: usize,
    step: usize,
    fields: &SnapshotFields,
    encoding: VtkEncoding,
) -> Result<(PathBuf, PathBuf)> {
    let stem = snapshot_stem(case, iteration, step);
    let vtk = dir.join(format!("{stem}.vtk"));
    let csv = dir.join(format!("{stem}.csv"));
    write_file(&vtk, |w| write_vtk(w, fields, encoding))?;
    write_file(&csv, |w| write_csv(w, fields))?;
    Ok((vtk, csv))
}

pub(crate) fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn write_vtk(w: &mut impl Write, f: &SnapshotFields, encoding: VtkEncoding) -> std::io::Result<()> {
    let n = f.nx * f.ny;
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "lkstopo snapshot")?;
    writeln!(w, "{}", if encoding == VtkEncoding::Ascii { "ASCII" } else { "BINARY" })?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} 1", f.nx, f.ny)?;
    writeln!(w, "ORIGIN 0 0 0")?;
    writeln!(w, "SPACING 1 1 1")?;
    writeln!(w, "POINT_DATA {n}")?;
    let speed = f.speed();
    let mut scalars: Vec<(&str, &[f64])> = vec![("gamma", &f.gamma), ("speed", &speed), ("p", &f.p)];
    if let Some(t) = &f.t {
        scalars.push(("T", t));
    }
    for (name, values) in scalars {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        put(w, values.iter().map(|&v| [v]), encoding)?;
    }
    writeln!(w, "VECTORS u double")?;
    put(w, f.u.iter().map(|v| [v[0], v[1], 0.0]), encoding)
}

// Legacy VTK binary data is big-endian.
fn put<const K: usize>(
    w: &mut impl Write,
    tuples: impl Iterator<Item = [f64; K]>,
    encoding: VtkEncoding,
) -> std::io::Result<()> {
    match encoding {
        VtkEncoding::Ascii => {
            for t in tuples {
                let line: Vec<String> = t.iter().map(|v| format!("{v:e}")).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
        }
        VtkEncoding::Binary => {
            for v in tuples.flatten() {
                w.write_all(&v.to_be_bytes())?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

pub fn write_csv(w: &mut impl Write, f: &SnapshotFields) -> std::io::Result<()> {
    write!(w, "i,j,gamma,speed,ux,uy,p")?;
    if f.t.is_some() {
        write!(w, ",T")?;
    }
    writeln!(w)?;
    let speed = f.speed();
    for n in 0..f.nx * f.ny {
        // `{:e}` prints the shortest string that parses back to the same bits.
        write!(
            w,
            "{},{},{:e},{:e},{:e},{:e},{:e}",
            n % f.nx,
            n / f.nx,
            f.gamma[n],
            speed[n],
            f.u[n][0],
            f.u[n][1],
            f.p[n]
        )?;
        if let Some(t) = &f.t {
            write!(w, ",{:e}", t[n])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads a file written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<SnapshotFields> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, what: &str| Error::Config(format!("{}:{line}: {what}", path.display()));
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| bad(1, "empty file"))?
        .map_err(|e| Error::io(path, e))?;
    let thermal = match header.trim() {
        "i,j,gamma,speed,ux,uy,p" => false,
        "i,j,gamma,speed,ux,uy,p,T" => true,
        _ => return Err(bad(1, "unexpected header")),
    };
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 + thermal as usize {
            return Err(bad(k + 2, "wrong column count"));
        }
        let i: usize = cols[0].parse().map_err(|_| bad(k + 2, "bad i"))?;
        let j: usize = cols[1].parse().map_err(|_| bad(k + 2, "bad j"))?;
        let v = cols[2..]
            .iter()
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|_| bad(k + 2, "bad number"))?;
        rows.push((i, j, v));
    }
    let nx = rows.iter().map(|r| r.0).max().map_or(0, |m| m + 1);
    let ny = rows.iter().map(|r| r.1).max().map_or(0, |m| m + 1);
    if nx * ny != rows.len() {
        return Err(bad(0, "rows do not cover a full grid"));
    }
    let mut f = SnapshotFields {
        nx,
        ny,
        gamma: vec![0.0; nx * ny],
        u: vec![[0.0; 2]; nx * ny],
        p: vec![0.0; nx * ny],
        t: thermal.then(|| vec![0.0; nx * ny]),
    };
    for (i, j, v) in rows {
        let n = j * nx + i;
        f.gamma[n] = v[0];
        f.u[n] = [v[2], v[3]];
        f.p[n] = v[4];
        if let Some(t) = &mut f.t {
            t[n] = v[5];
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(nx: usize, ny: usize, thermal: bool) -> SnapshotFields {
        let n = nx * ny;
        SnapshotFields {
            nx,
            ny,
            gamma: (0..n).map(|k| k as f64 / 7.0).collect(),
            u: (0..n).map(|k| [(k as f64).sin() * 1e-3, -1.0 / (k as f64 + 3.0)]).collect(),
            p: (0..n).map(|k| 1.0 / 3.0 + k as f64 * 1e-17).collect(),
            t: thermal.then(|| (0..n).map(|k| (k as f64).sqrt()).collect()),
        }
    }

    #[test]
    fn ascii_vtk_layout() {
        let f = SnapshotFields {
            nx: 3,
            ny: 3,
            gamma: vec![1.0; 9],
            u: vec![[0.0; 2]; 9],
            p: vec![1.0 / 3.0; 9],
            t: None,
        };
        let mut buf = Vec::new();
        write_vtk(&mut buf, &f, VtkEncoding::Ascii).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("DIMENSIONS 3 3 1"));
        assert!(text.contains("POINT_DATA 9"));
        let after_vectors = text.split("VECTORS u double\n").nth(1).unwrap();
        assert_eq!(after_vectors.lines().count(), 9);
    }

    #[test]
    fn binary_vtk_payload_size() {
        let f = sample(4, 3, true);
        let mut buf = Vec::new();
        write_vtk(&mut buf, &f, VtkEncoding::Binary).unwrap();
        let header_len: usize = String::from_utf8_lossy(&buf)
            .split_inclusive('\n')
            .take(8)
            .map(str::len)
            .sum();
        // four scalar blocks and one vector block, each with its header lines and a trailing newline
        let scalar_headers = ["gamma", "speed", "p", "T"]
            .iter()
            .map(|s| format!("SCALARS {s} double 1\nLOOKUP_TABLE default\n").len())
            .sum::<usize>();
        let expected = header_len + scalar_headers + "VECTORS u double\n".len() + 8 * 12 * 4 + 8 * 36 + 5;
        assert_eq!(buf.len(), expected);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for thermal in [false, true] {
            let f = sample(5, 4, thermal);
            let (_, csv) = write_snapshot(dir.path(), "rt", 3, 120, &f, VtkEncoding::Binary).unwrap();
            let back = read_csv(&csv).unwrap();
            assert_eq!(back, f);
        }
    }

    #[test]
    fn file_names_embed_case_iteration_step() {
        assert_eq!(snapshot_stem("pipe_bend", 12, 3400), "pipe_bend_it00012_step0003400");
    }

    #[test]
    fn missing_directory_reports_path() {
        let err = write_snapshot(Path::new("/nonexistent/dir"), "c", 0, 0, &sample(2, 2, false), VtkEncoding::Ascii)
            .unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir"));
    }
}
