//! Analytic estimate of the arrays a sensitivity analysis keeps alive, for
//! the kinetic-scheme adjoint (ALKS) and the lattice Boltzmann adjoint (ALBM).

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Alks,
    Albm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemKind {
    pub thermal: bool,
    pub unsteady: bool,
}

/// How many copies of an `nx × ny` array a row stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Extent {
    Single,
    /// Current and next level.
    Double,
    /// One copy per time step.
    History,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryModel {
    pub scheme: Scheme,
    pub kind: ProblemKind,
    pub nx: usize,
    pub ny: usize,
    pub n_t: usize,
    #[serde(default = "eight")]
    pub bytes_per_scalar: usize,
}

fn eight() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemoryRow {
    pub variables: Vec<String>,
    pub extent: Extent,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemoryTable {
    pub model: MemoryModel,
    pub rows: Vec<MemoryRow>,
}

impl MemoryTable {
    pub fn total(&self) -> u64 {
        self.rows.iter().map(|r| r.bytes).sum()
    }
}

const VELOCITY_GRADIENT: [&str; 4] = ["dux/dx", "duy/dx", "dux/dy", "duy/dy"];
const STRESS_DIVERGENCE: [&str; 4] = ["d~sxx/dx", "d~sxy/dx", "d~syx/dy", "d~syy/dy"];
const THERMAL_GRADIENT: [&str; 4] = ["dT/dx", "dT/dy", "d~qx/dx", "d~qy/dy"];
const ADJOINT_STRESS: [&str; 4] = ["~sxx", "~sxy", "~syx", "~syy"];

fn populations(prefix: &str) -> Vec<String> {
    (0..9).map(|i| format!("{prefix}{i}")).collect()
}

fn names(parts: &[&[&str]]) -> Vec<String> {
    parts.iter().flat_map(|p| p.iter().map(|s| s.to_string())).collect()
}

/// Variable inventory per row, in table order.
fn inventory(scheme: Scheme, kind: ProblemKind) -> Vec<(Vec<String>, Extent)> {
    use Extent::*;
    let grads = |thermal: bool| {
        let mut v = names(&[&VELOCITY_GRADIENT, &STRESS_DIVERGENCE]);
        if thermal {
            v.extend(names(&[&THERMAL_GRADIENT]));
        }
        v
    };
    match (scheme, kind.thermal, kind.unsteady) {
        (Scheme::Alks, false, false) => vec![
            (grads(false), Single),
            (names(&[&["rho", "ux", "uy", "~rho", "~ux", "~uy"], &ADJOINT_STRESS]), Double),
        ],
        (Scheme::Alks, false, true) => vec![
            (grads(false), Single),
            (names(&[&["rho", "~rho", "~ux", "~uy"], &ADJOINT_STRESS]), Double),
            (names(&[&["ux", "uy"]]), History),
        ],
        (Scheme::Alks, true, false) => vec![
            (grads(true), Single),
            (
                names(&[
                    &["rho", "ux", "uy", "T", "qx", "qy", "~rho", "~ux", "~uy"],
                    &ADJOINT_STRESS,
                    &["~T", "~qx", "~qy"],
                ]),
                Double,
            ),
        ],
        (Scheme::Alks, true, true) => vec![
            (grads(true), Single),
            (
                names(&[&["rho", "qx", "qy", "~rho", "~ux", "~uy"], &ADJOINT_STRESS, &["~T", "~qx", "~qy"]]),
                Double,
            ),
            (names(&[&["ux", "uy", "T"]]), History),
        ],
        (Scheme::Albm, false, false) => vec![
            (names(&[&["rho", "~mx", "~my", "~rho"]]), Single),
            (
                [names(&[&["ux", "uy"]]), populations("f"), names(&[&["~ux", "~uy"]]), populations("~f")].concat(),
                Double,
            ),
        ],
        (Scheme::Albm, false, true) => vec![
            (names(&[&["rho", "~mx", "~my", "~rho"]]), Single),
            ([populations("f"), names(&[&["~ux", "~uy"]]), populations("~f")].concat(), Double),
            (names(&[&["ux", "uy"]]), History),
        ],
        (Scheme::Albm, true, false) => vec![
            (names(&[&["rho", "T", "~mx", "~my", "~rho", "~T"]]), Single),
            (
                [
                    names(&[&["ux", "uy"]]),
                    populations("f"),
                    names(&[&["~ux", "~uy"]]),
                    populations("~f"),
                    names(&[&["qx", "qy"]]),
                    populations("g"),
                    names(&[&["~qx", "~qy"]]),
                    populations("~g"),
                ]
                .concat(),
                Double,
            ),
        ],
        (Scheme::Albm, true, true) => vec![
            (names(&[&["rho", "~rho", "~mx", "~my", "~T"]]), Single),
            (
                [
                    names(&[&["qx", "qy", "~ux", "~uy", "~qx", "~qy"]]),
                    populations("f"),
                    populations("~f"),
                    populations("~g"),
                ]
                .concat(),
                Double,
            ),
            ([names(&[&["ux", "uy", "T"]]), populations("g")].concat(), History),
        ],
    }
}

/// Itemized byte counts: `nx · ny · copies · variables · bytes_per_scalar` per row.
pub fn memory_report(model: &MemoryModel) -> MemoryTable {
    let cells = (model.nx * model.ny) as u64;
    let rows = inventory(model.scheme, model.kind)
        .into_iter()
        .map(|(variables, extent)| {
            let copies = match extent {
                Extent::Single => 1,
                Extent::Double => 2,
                Extent::History => model.n_t as u64,
            };
            let bytes = cells * copies * variables.len() as u64 * model.bytes_per_scalar as u64;
            MemoryRow { variables, extent, bytes }
        })
        .collect();
    MemoryTable { model: *model, rows }
}

/// `1 - alks / albm` of the two totals.
pub fn reduction(alks: &MemoryTable, albm: &MemoryTable) -> f64 {
    1.0 - alks.total() as f64 / albm.total() as f64
}

/// Decimal units, three significant figures: `652864 → "653 kB"`.
pub fn format_bytes(bytes: u64) -> String {
    const UNITS: [&str; 5] = ["B", "kB", "MB", "GB", "TB"];
    let mut v = bytes as f64;
    let mut u = 0;
    while u + 1 < UNITS.len() && round3(v) >= 1000.0 {
        v /= 1000.0;
        u += 1;
    }
    let v = round3(v);
    let decimals = if v >= 100.0 || u == 0 {
        0
    } else if v >= 10.0 {
        1
    } else {
        2
    };
    format!("{v:.decimals$} {}", UNITS[u])
}

fn round3(v: f64) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    let scale = 10f64.powi(2 - v.abs().log10().floor() as i32);
    (v * scale).round() / scale
}

impl fmt::Display for MemoryTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.model;
        writeln!(
            f,
            "{:?} {}{} on {}x{}{}",
            m.scheme,
            if m.kind.unsteady { "unsteady " } else { "steady " },
            if m.kind.thermal { "thermal" } else { "non-thermal" },
            m.nx,
            m.ny,
            if m.kind.unsteady { format!(", n_t = {}", m.n_t) } else { String::new() }
        )?;
        for r in &self.rows {
            let len = match r.extent {
                Extent::Single => "nx*ny".to_string(),
                Extent::Double => "nx*ny*2".to_string(),
                Extent::History => "nx*ny*n_t".to_string(),
            };
            writeln!(
                f,
                "  {:<11} {:>3} vars  {:>16} B  {:>8}  [{}]",
                len,
                r.variables.len(),
                r.bytes,
                format_bytes(r.bytes),
                r.variables.join(", ")
            )?;
        }
        write!(f, "  total {:>31} B  {:>8}", self.total(), format_bytes(self.total()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(scheme: Scheme, thermal: bool, unsteady: bool, nx: usize, ny: usize, n_t: usize) -> MemoryModel {
        MemoryModel {
            scheme,
            kind: ProblemKind { thermal, unsteady },
            nx,
            ny,
            n_t,
            bytes_per_scalar: 8,
        }
    }

    #[test]
    fn rounding() {
        assert_eq!(format_bytes(652_864), "653 kB");
        assert_eq!(format_bytes(1_632_160), "1.63 MB");
        assert_eq!(format_bytes(11_986_128), "12.0 MB");
        assert_eq!(format_bytes(999_600), "1.00 MB");
        assert_eq!(format_bytes(108_964_800_000), "109 GB");
        assert_eq!(format_bytes(0), "0 B");
        assert_eq!(format_bytes(512), "512 B");
    }

    #[test]
    fn empty_history_is_free() {
        let t = memory_report(&model(Scheme::Alks, true, true, 141, 161, 0));
        assert_eq!(t.rows[2].bytes, 0);
    }

    #[test]
    fn row_bytes_are_plain_products() {
        let t = memory_report(&model(Scheme::Alks, false, false, 101, 101, 0));
        assert_eq!(t.rows[0].bytes, 101 * 101 * 8 * 8);
        assert_eq!(t.rows[1].bytes, 101 * 101 * 2 * 10 * 8);
    }
}
