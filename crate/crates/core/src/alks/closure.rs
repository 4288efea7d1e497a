//! Least-squares closure of the adjoint distributions at perimeter nodes.
//!
//! At a boundary node every direction `i` contributes one equation
//! `Σ_j M_ij x_j + Σ_k N_ik λ_k + r_i = 0`; the off-grid directions and the
//! boundary multipliers are the unknowns. With more equations than unknowns
//! the system is solved in the least-squares sense through its normal equations.

use nalgebra::{DMatrix, DVector};

use crate::lattice::{CF, Q, W};
use crate::{Error, Result};

/// `M_ij = (n·c_i) δ_ij - 2A w_j (n·c_j)(c_j·c_i)` for the hydrodynamic closure.
pub fn hydro_matrix(n: [f64; 2], a: f64) -> [[f64; Q]; Q] {
    let mut m = [[0.0; Q]; Q];
    for i in 0..Q {
        for j in 0..Q {
            let nc_j = n[0] * CF[j][0] + n[1] * CF[j][1];
            let cc = CF[j][0] * CF[i][0] + CF[j][1] * CF[i][1];
            m[i][j] = -2.0 * a * W[j] * nc_j * cc;
        }
        m[i][i] += n[0] * CF[i][0] + n[1] * CF[i][1];
    }
    m
}

/// `M_ij = (n·c_i) δ_ij - B w_j (n·c_j)` for the thermal closure.
pub fn thermal_matrix(n: [f64; 2], b: f64) -> [[f64; Q]; Q] {
    let mut m = [[0.0; Q]; Q];
    for i in 0..Q {
        for j in 0..Q {
            m[i][j] = -b * W[j] * (n[0] * CF[j][0] + n[1] * CF[j][1]);
        }
        m[i][i] += n[0] * CF[i][0] + n[1] * CF[i][1];
    }
    m
}

/// Directions leaving the domain through a perimeter node with outward normal `n`.
pub fn unknown_directions(normal: [i32; 2]) -> Vec<usize> {
    (0..Q)
        .filter(|&i| CF[i][0] * normal[0] as f64 + CF[i][1] * normal[1] as f64 > 0.0)
        .collect()
}

pub fn unit(normal: [i32; 2]) -> [f64; 2] {
    let n = [normal[0] as f64, normal[1] as f64];
    let l = (n[0] * n[0] + n[1] * n[1]).sqrt();
    [n[0] / l, n[1] / l]
}

/// Multiplier set of a hydrodynamic boundary node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HydroMultipliers {
    /// `μ̃_α c_iα` for prescribed velocity.
    Velocity,
    /// `λ̃ + μ̃_s c_is` for prescribed pressure and tangential velocity.
    Outlet,
}

/// Multiplier set of a thermal boundary node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThermalMultipliers {
    /// `η̃` for prescribed temperature.
    Temperature,
    /// `κ̃ (c_i - u)·n` for a prescribed heat flux; carries the normal velocity `u·n`.
    Flux { u_n: f64 },
}

/// One factorized closure: the stacked system `(M_U | N)` and its least-squares solver.
#[derive(Debug, Clone)]
pub struct Closure {
    pub normal: [i32; 2],
    pub m: [[f64; Q]; Q],
    pub unknown: Vec<usize>,
    /// Multiplier columns of `N`.
    pub mult: Vec<[f64; Q]>,
    /// `(KᵀK)⁻¹ Kᵀ` with `K = (M_U | N)`.
    pinv: DMatrix<f64>,
    /// Factor applied to a direction-independent source (`∂J/∂ρ`, `∂J/∂T`) so the
    /// least-squares solution carries the same normal flux `Σ w_i (n·c_i) x_i`
    /// as the `w`-weighted sum of the rows. 1 where a multiplier absorbs it.
    pub source_scale: f64,
}

/// Solution at one node: all nine components plus multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosureSolution {
    pub values: [f64; Q],
    pub multipliers: Vec<f64>,
}

impl Closure {
    pub fn new(normal: [i32; 2], m: [[f64; Q]; Q], mult: Vec<[f64; Q]>) -> Result<Self> {
        let unknown = unknown_directions(normal);
        let cols = unknown.len() + mult.len();
        let mut k = DMatrix::zeros(Q, cols);
        for i in 0..Q {
            for (c, &j) in unknown.iter().enumerate() {
                k[(i, c)] = m[i][j];
            }
            for (c, col) in mult.iter().enumerate() {
                k[(i, unknown.len() + c)] = col[i];
            }
        }
        let normal_eq = k.transpose() * &k;
        let chol = normal_eq
            .cholesky()
            .ok_or(Error::SingularClosure { normal })?;
        let pinv = chol.solve(&k.transpose());
        let mut cl = Self {
            normal,
            m,
            unknown,
            mult,
            pinv,
            source_scale: 1.0,
        };
        cl.source_scale = cl.weighted_source_scale();
        Ok(cl)
    }

    pub fn hydro(normal: [i32; 2], kind: HydroMultipliers, a: f64) -> Result<Self> {
        let n = unit(normal);
        let mult = match kind {
            HydroMultipliers::Velocity => vec![
                std::array::from_fn(|i| CF[i][0]),
                std::array::from_fn(|i| CF[i][1]),
            ],
            HydroMultipliers::Outlet => {
                let t = [-n[1], n[0]];
                vec![
                    [1.0; Q],
                    std::array::from_fn(|i| CF[i][0] * t[0] + CF[i][1] * t[1]),
                ]
            }
        };
        Self::new(normal, hydro_matrix(n, a), mult)
    }

    pub fn thermal(normal: [i32; 2], kind: ThermalMultipliers, b: f64) -> Result<Self> {
        let n = unit(normal);
        let col: [f64; Q] = match kind {
            ThermalMultipliers::Temperature => [1.0; Q],
            ThermalMultipliers::Flux { u_n } => {
                std::array::from_fn(|i| CF[i][0] * n[0] + CF[i][1] * n[1] - u_n)
            }
        };
        Self::new(normal, thermal_matrix(n, b), vec![col])
    }

    fn weighted_source_scale(&self) -> f64 {
        let absorbed = self
            .mult
            .iter()
            .any(|col| col.iter().zip(&W).map(|(c, w)| c * w).sum::<f64>().abs() > 1e-12);
        if absorbed {
            return 1.0;
        }
        let n = unit(self.normal);
        let nc: [f64; Q] = std::array::from_fn(|j| n[0] * CF[j][0] + n[1] * CF[j][1]);
        // Σ_i w_i M_ij = κ w_j (n·c_j) for both matrix families.
        let j = self.unknown[0];
        let kappa = (0..Q).map(|i| W[i] * self.m[i][j]).sum::<f64>() / (W[j] * nc[j]);
        let sol = self.solve(&[0.0; Q], &[1.0; Q]);
        let flux: f64 = (0..Q).map(|i| W[i] * nc[i] * sol.values[i]).sum();
        if flux.abs() < 1e-12 || kappa.abs() < 1e-12 {
            return 1.0;
        }
        -1.0 / (kappa * flux)
    }

    /// Stacked matrix `(M_U | N)`.
    pub fn system(&self) -> DMatrix<f64> {
        DMatrix::from_fn(Q, self.unknown.len() + self.mult.len(), |i, c| {
            if c < self.unknown.len() {
                self.m[i][self.unknown[c]]
            } else {
                self.mult[c - self.unknown.len()][i]
            }
        })
    }

    /// Constant part of each row: known components through `M` plus `extra`
    /// (functional derivatives and coupling terms).
    pub fn rhs(&self, values: &[f64; Q], extra: &[f64; Q]) -> DVector<f64> {
        DVector::from_fn(Q, |i, _| {
            let mut r = extra[i];
            for j in 0..Q {
                if !self.unknown.contains(&j) {
                    r += self.m[i][j] * values[j];
                }
            }
            r
        })
    }

    /// Fills the unknown components of `values` (known ones are read, unknown ones ignored).
    pub fn solve(&self, values: &[f64; Q], extra: &[f64; Q]) -> ClosureSolution {
        let z = -(&self.pinv * self.rhs(values, extra));
        let mut out = *values;
        for (c, &j) in self.unknown.iter().enumerate() {
            out[j] = z[c];
        }
        ClosureSolution {
            values: out,
            multipliers: z.as_slice()[self.unknown.len()..].to_vec(),
        }
    }

    /// Row residuals `r_i` of a candidate solution.
    pub fn residual(&self, sol: &ClosureSolution, extra: &[f64; Q]) -> [f64; Q] {
        std::array::from_fn(|i| {
            let mut r = extra[i];
            for j in 0..Q {
                r += self.m[i][j] * sol.values[j];
            }
            for (k, col) in self.mult.iter().enumerate() {
                r += col[i] * sol.multipliers[k];
            }
            r
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const BOTTOM: [i32; 2] = [0, -1];

    #[test]
    fn bottom_wall_unknowns() {
        assert_eq!(unknown_directions(BOTTOM), vec![4, 7, 8]);
        assert_eq!(unknown_directions([-1, -1]), vec![3, 4, 7]);
    }

    #[test]
    fn bottom_wall_unit_examples() {
        let a = 0.3;
        let cl = Closure::hydro(BOTTOM, HydroMultipliers::Velocity, a).unwrap();
        let mut f = [0.0; Q];
        f[2] = 1.0;
        let s = cl.solve(&f, &[0.0; Q]);
        for j in [4, 7, 8] {
            assert!((s.values[j] - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!((s.multipliers[1] + (a - 1.0) / 3.0).abs() < 1e-12);

        let mut f = [0.0; Q];
        f[5] = 1.0;
        let s = cl.solve(&f, &[0.0; Q]);
        assert!((s.values[4] - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.values[7] - 7.0 / 12.0).abs() < 1e-12);
        assert!((s.values[8] - 1.0 / 12.0).abs() < 1e-12);
        assert!((s.multipliers[0] + (a - 3.0) / 12.0).abs() < 1e-12);

        let s = cl.solve(&[0.0; Q], &[0.0; Q]);
        assert!(s.values.iter().chain(&s.multipliers).all(|v| *v == 0.0));
    }

    #[test]
    fn source_scale_restores_weighted_flux() {
        let cl = Closure::hydro(BOTTOM, HydroMultipliers::Velocity, 0.3).unwrap();
        assert!((cl.source_scale - 3.0).abs() < 1e-12);
        let out = Closure::hydro([1, 0], HydroMultipliers::Outlet, 0.3).unwrap();
        assert_eq!(out.source_scale, 1.0);
        for b in [0.1, 0.3, 0.7] {
            let cl = Closure::thermal(BOTTOM, ThermalMultipliers::Flux { u_n: 0.0 }, b).unwrap();
            let sol = cl.solve(&[0.0; Q], &[cl.source_scale; Q]);
            let flux: f64 = (0..Q).map(|i| -W[i] * CF[i][1] * sol.values[i]).sum();
            assert!(((1.0 - b) * flux + 1.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn residual_orthogonal_to_columns(vals in prop::array::uniform9(-1.0f64..1.0),
                                          extra in prop::array::uniform9(-1.0f64..1.0),
                                          a in 0.0f64..0.7, side in 0usize..8) {
            let normals = [[0, -1], [1, 0], [0, 1], [-1, 0], [1, 1], [-1, 1], [-1, -1], [1, -1]];
            for kind in [HydroMultipliers::Velocity, HydroMultipliers::Outlet] {
                let cl = Closure::hydro(normals[side], kind, a).unwrap();
                let s = cl.solve(&vals, &extra);
                let r = cl.residual(&s, &extra);
                let k = cl.system();
                let kr = k.transpose() * DVector::from_row_slice(&r);
                prop_assert!(kr.amax() < 1e-10);
            }
        }
    }
}
