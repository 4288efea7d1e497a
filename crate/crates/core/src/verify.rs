//! Independent checks of the solver chain: finite-difference sensitivities,
//! directional (dot-product) tests, a brute-force closure and analytic flows.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cases::SampleLine;
use crate::lattice::{Grid, ScalarField};
use crate::lks::boundary::{BoundarySpec, HydroKind, HydroSegment, Modulation, Side};
use crate::lks::{Lks, Materials, PhysicsParams, StateFields, SteadyOptions};
use crate::problem::{Forward, Problem};
use crate::sensitivity::StateFunctional;
use crate::{Error, InterpolationParams, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdConfig {
    pub epsilon: f64,
    /// Nodes dropped next to the domain boundary and next to γ jumps.
    pub exclude: usize,
    /// Relative L2 bound for a pass.
    pub tolerance: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            exclude: 3,
            tolerance: 0.05,
        }
    }
}

impl FdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.tolerance > 0.0) {
            return Err(Error::Config(format!("invalid finite-difference settings {self:?}")));
        }
        Ok(())
    }
}

/// Functional value at a raw design.
pub fn evaluate(problem: &Problem, kind: StateFunctional, raw: &[f64], warm: Option<&StateFields>) -> Result<f64> {
    let design = problem.design(raw);
    let mat = problem.materials(&design)?;
    let fwd = problem.forward(&mat, warm.cloned())?;
    Ok(problem.value(kind, &mat, &fwd))
}

/// Central differences `(J(γ+ε e_n) - J(γ-ε e_n)) / 2ε` of the raw design at each node.
/// Perturbations are clipped to [0, 1]; nodes off the design mask or whose
/// perturbed solve fails come back as `None`.
pub fn fd_sensitivity(
    problem: &Problem,
    kind: StateFunctional,
    raw: &[f64],
    nodes: &[usize],
    epsilon: f64,
    warm: Option<&StateFields>,
) -> Vec<Option<f64>> {
    nodes
        .par_iter()
        .map(|&n| {
            if !problem.mask[n] {
                return None;
            }
            let hi = (raw[n] + epsilon).min(1.0);
            let lo = (raw[n] - epsilon).max(0.0);
            let mut r = raw.to_vec();
            r[n] = hi;
            let jp = evaluate(problem, kind, &r, warm).ok()?;
            r[n] = lo;
            let jm = evaluate(problem, kind, &r, warm).ok()?;
            Some((jp - jm) / (hi - lo))
        })
        .collect()
}

/// Adjoint sensitivity with respect to the raw design.
pub fn adjoint_sensitivity(problem: &Problem, kind: StateFunctional, raw: &[f64]) -> Result<(ScalarField, Forward)> {
    let design = problem.design(raw);
    let mat = problem.materials(&design)?;
    let fwd = problem.forward(&mat, None)?;
    let (g, _) = problem.gradient(&[(1.0, kind)], &design, &mat, &fwd, None)?;
    Ok((g, fwd))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineSample {
    pub node: usize,
    pub i: usize,
    pub j: usize,
    pub adjoint: f64,
    pub fd: Option<f64>,
    pub included: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineReport {
    pub samples: Vec<LineSample>,
    /// `‖adj - fd‖ / ‖fd‖` over included samples.
    pub relative_l2: f64,
}

impl LineReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.relative_l2 <= tolerance
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "node,i,j,adjoint,fd,included")?;
        for s in &self.samples {
            let fd = s.fd.map(|v| format!("{v:e}")).unwrap_or_else(|| "nan".into());
            writeln!(w, "{},{},{},{:e},{},{}", s.node, s.i, s.j, s.adjoint, fd, s.included as u8)?;
        }
        Ok(())
    }
}

/// Compares two sensitivities along a line, excluding samples within `exclude`
/// nodes of the domain boundary or of a jump in `gamma` along the line.
pub fn line_compare(
    grid: &Grid,
    line: &[usize],
    adjoint: &[f64],
    fd: &[Option<f64>],
    gamma: &[f64],
    exclude: usize,
) -> LineReport {
    let k = line.len();
    let jumps: Vec<usize> = (1..k)
        .filter(|&p| (gamma[line[p]] - gamma[line[p - 1]]).abs() > 1e-12)
        .collect();
    let near_jump = |p: usize| {
        jumps.iter().any(|&q| {
            // jump between positions q-1 and q
            let d = if p < q { q - 1 - p } else { p - q };
            d < exclude
        })
    };
    let mut num = 0.0;
    let mut den = 0.0;
    let samples: Vec<LineSample> = line
        .iter()
        .enumerate()
        .map(|(p, &node)| {
            let (i, j) = grid.coords(node);
            let edge = p.min(k - 1 - p);
            let included = fd[p].is_some() && edge >= exclude && !near_jump(p);
            if included {
                let f = fd[p].unwrap_or(0.0);
                num += (adjoint[node] - f).powi(2);
                den += f * f;
            }
            LineSample {
                node,
                i,
                j,
                adjoint: adjoint[node],
                fd: fd[p],
                included,
            }
        })
        .collect();
    let relative_l2 = if den > 0.0 {
        (num / den).sqrt()
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    LineReport { samples, relative_l2 }
}

/// Full line check: adjoint sensitivity against central differences.
pub fn verify_line(
    problem: &Problem,
    kind: StateFunctional,
    raw: &[f64],
    line: SampleLine,
    cfg: &FdConfig,
) -> Result<LineReport> {
    cfg.validate()?;
    let (adj, fwd) = adjoint_sensitivity(problem, kind, raw)?;
    let warm = match &fwd {
        Forward::Steady(s) => Some(s),
        Forward::Unsteady(_) => None,
    };
    let nodes = line.nodes(&problem.grid);
    let fd = fd_sensitivity(problem, kind, raw, &nodes, cfg.epsilon, warm);
    let design = problem.design(raw);
    Ok(line_compare(&problem.grid, &nodes, &adj, &fd, &design.gamma_projected, cfg.exclude))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectionalCheck {
    pub adjoint: f64,
    pub fd: f64,
    pub relative_error: f64,
}

/// `⟨∇J, δ⟩` against `(J(γ+hδ) - J(γ-hδ)) / 2h`.
pub fn directional_check(
    problem: &Problem,
    kind: StateFunctional,
    raw: &[f64],
    direction: &[f64],
    h: f64,
) -> Result<DirectionalCheck> {
    let (grad, _) = adjoint_sensitivity(problem, kind, raw)?;
    let adjoint: f64 = grad.iter().zip(direction).map(|(g, d)| g * d).sum();
    let shifted = |s: f64| -> Vec<f64> { raw.iter().zip(direction).map(|(r, d)| r + s * d).collect() };
    let jp = evaluate(problem, kind, &shifted(h), None)?;
    let jm = evaluate(problem, kind, &shifted(-h), None)?;
    let fd = (jp - jm) / (2.0 * h);
    Ok(DirectionalCheck {
        adjoint,
        fd,
        relative_error: (adjoint - fd).abs() / fd.abs().max(f64::MIN_POSITIVE),
    })
}

/// Which multiplier family a brute-force closure uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BruteForceKind {
    Velocity,
    Outlet,
    Temperature,
    Flux { u_n: f64 },
}

const VEL: [[f64; 2]; 9] = [
    [0.0, 0.0],
    [1.0, 0.0],
    [0.0, 1.0],
    [-1.0, 0.0],
    [0.0, -1.0],
    [1.0, 1.0],
    [-1.0, 1.0],
    [-1.0, -1.0],
    [1.0, -1.0],
];

fn weight(i: usize) -> f64 {
    match i {
        0 => 4.0 / 9.0,
        1..=4 => 1.0 / 9.0,
        _ => 1.0 / 36.0,
    }
}

/// Least-squares closure through a dense SVD of the full row system; returns
/// the nine components (knowns copied) followed by the multipliers.
/// `coef` is `A` for hydrodynamic kinds and `B` for thermal ones.
pub fn closure_bruteforce(normal: [i32; 2], kind: BruteForceKind, known: &[f64; 9], coef: f64) -> Vec<f64> {
    let len = ((normal[0] * normal[0] + normal[1] * normal[1]) as f64).sqrt();
    let n = [normal[0] as f64 / len, normal[1] as f64 / len];
    let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
    let thermal = matches!(kind, BruteForceKind::Temperature | BruteForceKind::Flux { .. });
    let mut m = DMatrix::<f64>::zeros(9, 9);
    for i in 0..9 {
        for j in 0..9 {
            let v = if thermal {
                coef * weight(j) * dot(n, VEL[j])
            } else {
                2.0 * coef * weight(j) * dot(n, VEL[j]) * dot(VEL[j], VEL[i])
            };
            m[(i, j)] = if i == j { dot(n, VEL[i]) } else { 0.0 } - v;
        }
    }
    let unknown: Vec<usize> = (0..9)
        .filter(|&i| VEL[i][0] * normal[0] as f64 + VEL[i][1] * normal[1] as f64 > 0.0)
        .collect();
    let t = [-n[1], n[0]];
    let cols: Vec<Vec<f64>> = match kind {
        BruteForceKind::Velocity => vec![VEL.iter().map(|c| c[0]).collect(), VEL.iter().map(|c| c[1]).collect()],
        BruteForceKind::Outlet => vec![vec![1.0; 9], VEL.iter().map(|c| dot(*c, t)).collect()],
        BruteForceKind::Temperature => vec![vec![1.0; 9]],
        BruteForceKind::Flux { u_n } => vec![VEL.iter().map(|c| dot(*c, n) - u_n).collect()],
    };
    let width = unknown.len() + cols.len();
    let mut k = DMatrix::<f64>::zeros(9, width);
    let mut rhs = DVector::<f64>::zeros(9);
    for i in 0..9 {
        for (c, &j) in unknown.iter().enumerate() {
            k[(i, c)] = m[(i, j)];
        }
        for (c, col) in cols.iter().enumerate() {
            k[(i, unknown.len() + c)] = col[i];
        }
        rhs[i] = -(0..9)
            .filter(|j| !unknown.contains(j))
            .map(|j| m[(i, j)] * known[j])
            .sum::<f64>();
    }
    let z = k.svd(true, true).solve(&rhs, 1e-13).expect("svd with both factors");
    let mut out = known.to_vec();
    for (c, &j) in unknown.iter().enumerate() {
        out[j] = z[c];
    }
    out.extend(z.iter().skip(unknown.len()));
    out
}

/// Plane Poiseuille flow: a channel of `ny` nodes (walls at both ends) fed by
/// the fully developed parabola. Returns the numerical and analytic `u_x` on
/// the column at mid-length.
pub fn poiseuille(nx: usize, ny: usize, re: f64, opts: &SteadyOptions) -> Result<(Vec<f64>, Vec<f64>)> {
    let grid = Grid::new(nx, ny)?;
    let physics = PhysicsParams::default();
    let width = (ny - 1) as f64;
    let u0 = re * physics.nu / width;
    let spec = BoundarySpec {
        hydro: vec![
            HydroSegment {
                side: Side::Left,
                start: 0,
                end: ny - 1,
                kind: HydroKind::Inlet {
                    peak: u0,
                    modulation: Modulation::Constant,
                },
            },
            HydroSegment {
                side: Side::Right,
                start: 1,
                end: ny - 2,
                kind: HydroKind::Outlet { pressure: 1.0 / 3.0 },
            },
        ],
        thermal: vec![],
    };
    let boundary = spec.resolve(&grid)?;
    let mat = Materials::from_gamma(&grid, &vec![1.0; grid.len()], &InterpolationParams::default())?;
    let lks = Lks::new(&grid, &boundary, &physics, &mat);
    let (state, _) = lks.steady(None, opts)?;
    let i = nx / 2;
    let num = (0..ny).map(|j| state.u[grid.index(i, j)][0]).collect();
    let exact = (0..ny)
        .map(|j| {
            let y = j as f64;
            4.0 * u0 * y * (width - y) / (width * width)
        })
        .collect();
    Ok((num, exact))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alks::closure::{Closure, HydroMultipliers, ThermalMultipliers};

    #[test]
    fn identical_fields_compare_exactly() {
        let grid = Grid::new(12, 3).unwrap();
        let line: Vec<usize> = (0..12).map(|i| grid.index(i, 1)).collect();
        let adj: Vec<f64> = (0..grid.len()).map(|n| n as f64).collect();
        let fd: Vec<Option<f64>> = line.iter().map(|&n| Some(adj[n])).collect();
        let r = line_compare(&grid, &line, &adj, &fd, &vec![1.0; grid.len()], 3);
        assert_eq!(r.relative_l2, 0.0);
        assert_eq!(r.samples.iter().filter(|s| s.included).count(), 6);
    }

    #[test]
    fn uniform_offset_gives_matching_error() {
        let grid = Grid::new(20, 3).unwrap();
        let line: Vec<usize> = (0..20).map(|i| grid.index(i, 1)).collect();
        let adj = vec![1.001; grid.len()];
        let fd = vec![Some(1.0); 20];
        let r = line_compare(&grid, &line, &adj, &fd, &vec![1.0; grid.len()], 3);
        assert!((r.relative_l2 - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn interface_neighbourhood_is_excluded() {
        let grid = Grid::new(20, 3).unwrap();
        let line: Vec<usize> = (0..20).map(|i| grid.index(i, 1)).collect();
        let mut gamma = vec![0.9; grid.len()];
        for i in 10..20 {
            gamma[grid.index(i, 1)] = 0.1;
        }
        let fd = vec![Some(1.0); 20];
        let r = line_compare(&grid, &line, &vec![1.0; grid.len()], &fd, &gamma, 3);
        let kept: Vec<usize> = r.samples.iter().filter(|s| s.included).map(|s| s.i).collect();
        assert_eq!(kept, vec![3, 4, 5, 6, 13, 14, 15, 16]);
    }

    #[test]
    fn bruteforce_matches_eq_closed_form() {
        let a = 0.45;
        let mut f = [0.0; 9];
        f[2] = 1.0;
        let s = closure_bruteforce([0, -1], BruteForceKind::Velocity, &f, a);
        for j in [4, 7, 8] {
            assert!((s[j] - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!(closure_bruteforce([0, -1], BruteForceKind::Velocity, &[0.0; 9], a)
            .iter()
            .all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn bruteforce_agrees_with_factorized_closure() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let normals = [[0, -1], [1, 0], [0, 1], [-1, 0], [1, 1], [-1, -1]];
        for _ in 0..25 {
            let vals: [f64; 9] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let a: f64 = rng.random_range(0.0..0.7);
            let u_n: f64 = rng.random_range(-0.1..0.1);
            for normal in normals {
                let cases = [
                    (Closure::hydro(normal, HydroMultipliers::Velocity, a).unwrap(), BruteForceKind::Velocity, a),
                    (Closure::hydro(normal, HydroMultipliers::Outlet, a).unwrap(), BruteForceKind::Outlet, a),
                    (
                        Closure::thermal(normal, ThermalMultipliers::Temperature, a).unwrap(),
                        BruteForceKind::Temperature,
                        a,
                    ),
                    (
                        Closure::thermal(normal, ThermalMultipliers::Flux { u_n }, a).unwrap(),
                        BruteForceKind::Flux { u_n },
                        a,
                    ),
                ];
                for (cl, kind, coef) in cases {
                    let s = cl.solve(&vals, &[0.0; 9]);
                    let b = closure_bruteforce(normal, kind, &vals, coef);
                    let main: Vec<f64> = s.values.iter().chain(&s.multipliers).copied().collect();
                    for (x, y) in main.iter().zip(&b) {
                        assert!((x - y).abs() < 1e-10, "{normal:?} {kind:?}: {main:?} vs {b:?}");
                    }
                }
            }
        }
    }
}
