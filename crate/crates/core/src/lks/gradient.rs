//! Finite-difference gradients: second-order central in the interior and
//! second-order one-sided on the perimeter.

use rayon::prelude::*;

use crate::lattice::{Grid, TensorField, VectorField};

type Stencil = [(usize, f64); 3];

/// Nodes and coefficients of `∂/∂x` and `∂/∂y` at `node`.
#[inline]
fn stencils(grid: &Grid, node: usize) -> [Stencil; 2] {
    let (i, j) = grid.coords(node);
    [axis_stencil(node, i, grid.nx, 1), axis_stencil(node, j, grid.ny, grid.nx)]
}

#[inline]
fn axis_stencil(node: usize, pos: usize, len: usize, stride: usize) -> Stencil {
    if pos == 0 {
        [(node, -1.5), (node + stride, 2.0), (node + 2 * stride, -0.5)]
    } else if pos == len - 1 {
        [(node, 1.5), (node - stride, -2.0), (node - 2 * stride, 0.5)]
    } else {
        [(node + stride, 0.5), (node - stride, -0.5), (node, 0.0)]
    }
}

#[inline]
fn apply(st: &Stencil, get: impl Fn(usize) -> f64) -> f64 {
    st.iter().map(|&(m, c)| c * get(m)).sum()
}

/// `∂f/∂x_b` for a scalar field.
pub fn scalar_gradient(grid: &Grid, f: &[f64]) -> VectorField {
    let mut out = vec![[0.0; 2]; grid.len()];
    scalar_gradient_into(grid, f, &mut out);
    out
}

pub fn scalar_gradient_into(grid: &Grid, f: &[f64], out: &mut [[f64; 2]]) {
    out.par_iter_mut().enumerate().for_each(|(n, g)| {
        let st = stencils(grid, n);
        *g = [apply(&st[0], |m| f[m]), apply(&st[1], |m| f[m])];
    });
}

/// `g[a][b] = ∂u_a/∂x_b` for a vector field.
pub fn vector_gradient(grid: &Grid, u: &[[f64; 2]]) -> TensorField {
    let mut out = vec![[[0.0; 2]; 2]; grid.len()];
    vector_gradient_into(grid, u, &mut out);
    out
}

pub fn vector_gradient_into(grid: &Grid, u: &[[f64; 2]], out: &mut [[[f64; 2]; 2]]) {
    out.par_iter_mut().enumerate().for_each(|(n, g)| {
        let st = stencils(grid, n);
        for a in 0..2 {
            for b in 0..2 {
                g[a][b] = apply(&st[b], |m| u[m][a]);
            }
        }
    });
}

/// Divergence of the rows of a tensor field, `Σ_b ∂t_ab/∂x_b`.
pub fn tensor_divergence(grid: &Grid, t: &[[[f64; 2]; 2]]) -> VectorField {
    (0..grid.len())
        .into_par_iter()
        .map(|n| {
            let st = stencils(grid, n);
            let mut d = [0.0; 2];
            for (a, da) in d.iter_mut().enumerate() {
                for b in 0..2 {
                    *da += apply(&st[b], |m| t[m][a][b]);
                }
            }
            d
        })
        .collect()
}

/// Transpose of the gradient operator applied to a tensor field:
/// `out_a(x) = Σ_z Σ_b t_ab(z) D_b(z, x)`, where `D_b(z, ·)` is the stencil of
/// `∂/∂x_b` at `z`. Equals `-div t` away from the perimeter.
pub fn tensor_gradient_transpose(grid: &Grid, t: &[[[f64; 2]; 2]]) -> VectorField {
    let mut out = vec![[0.0; 2]; grid.len()];
    for z in 0..grid.len() {
        for (b, st) in stencils(grid, z).into_iter().enumerate() {
            for (m, c) in st {
                out[m][0] += c * t[z][0][b];
                out[m][1] += c * t[z][1][b];
            }
        }
    }
    out
}

/// Transpose of the gradient operator applied to a vector field; `-div v` away
/// from the perimeter.
pub fn vector_gradient_transpose(grid: &Grid, v: &[[f64; 2]]) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for z in 0..grid.len() {
        for (b, st) in stencils(grid, z).into_iter().enumerate() {
            for (m, c) in st {
                out[m] += c * v[z][b];
            }
        }
    }
    out
}

/// Divergence of a vector field at one node.
pub fn vector_divergence_at(grid: &Grid, v: &[[f64; 2]], node: usize) -> f64 {
    let st = stencils(grid, node);
    apply(&st[0], |m| v[m][0]) + apply(&st[1], |m| v[m][1])
}

/// Divergence of a vector field.
pub fn vector_divergence(grid: &Grid, v: &[[f64; 2]]) -> Vec<f64> {
    (0..grid.len())
        .into_par_iter()
        .map(|n| vector_divergence_at(grid, v, n))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transposes_match_inner_products() {
        let grid = Grid::new(9, 9).unwrap();
        let u: VectorField = (0..grid.len()).map(|n| [(n as f64 * 0.37).sin(), (n as f64 * 0.11).cos()]).collect();
        let t: TensorField = (0..grid.len())
            .map(|n| {
                let x = n as f64;
                [[(x * 0.7).sin(), x.cos()], [(x * 1.3).sin(), (x * 0.2).cos()]]
            })
            .collect();
        let g = vector_gradient(&grid, &u);
        let lhs: f64 = (0..grid.len())
            .map(|n| (0..2).map(|a| (0..2).map(|b| t[n][a][b] * g[n][a][b]).sum::<f64>()).sum::<f64>())
            .sum();
        let tt = tensor_gradient_transpose(&grid, &t);
        let rhs: f64 = (0..grid.len()).map(|n| u[n][0] * tt[n][0] + u[n][1] * tt[n][1]).sum();
        assert!((lhs - rhs).abs() < 1e-12);

        let f: Vec<f64> = (0..grid.len()).map(|n| (n as f64 * 0.53).sin()).collect();
        let gf = scalar_gradient(&grid, &f);
        let lhs: f64 = (0..grid.len()).map(|n| u[n][0] * gf[n][0] + u[n][1] * gf[n][1]).sum();
        let vt = vector_gradient_transpose(&grid, &u);
        let rhs: f64 = (0..grid.len()).map(|n| f[n] * vt[n]).sum();
        assert!((lhs - rhs).abs() < 1e-12);

        let d = tensor_divergence(&grid, &t);
        let n = grid.index(4, 4);
        assert!((tt[n][0] + d[n][0]).abs() < 1e-14 && (tt[n][1] + d[n][1]).abs() < 1e-14);
    }

    #[test]
    fn exact_on_linear_fields() {
        let grid = Grid::new(9, 7).unwrap();
        let u: VectorField = (0..grid.len())
            .map(|n| {
                let (i, j) = grid.coords(n);
                [0.3 * i as f64, -0.2 * j as f64 + 0.1 * i as f64]
            })
            .collect();
        let g = vector_gradient(&grid, &u);
        for gn in &g {
            assert!((gn[0][0] - 0.3).abs() < 1e-13);
            assert!(gn[0][1].abs() < 1e-13);
            assert!((gn[1][0] - 0.1).abs() < 1e-13);
            assert!((gn[1][1] + 0.2).abs() < 1e-13);
        }
    }

    #[test]
    fn exact_on_quadratics() {
        let grid = Grid::new(9, 7).unwrap();
        let t: Vec<f64> = (0..grid.len())
            .map(|n| (grid.coords(n).0 as f64).powi(2))
            .collect();
        let g = scalar_gradient(&grid, &t);
        // one-sided second-order stencils are also exact on quadratics
        for n in 0..grid.len() {
            let x = grid.coords(n).0 as f64;
            assert!((g[n][0] - 2.0 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn second_order_convergence() {
        // sin field sampled at two resolutions: error should drop by ~4x
        let err = |n: usize| {
            let grid = Grid::new(n, n).unwrap();
            let h = 1.0 / (n - 1) as f64;
            let k = 2.0 * std::f64::consts::PI;
            let f: Vec<f64> = (0..grid.len())
                .map(|m| {
                    let (i, j) = grid.coords(m);
                    (k * i as f64 * h).sin() * (k * j as f64 * h).cos()
                })
                .collect();
            let g = scalar_gradient(&grid, &f);
            let mut e: f64 = 0.0;
            for m in 0..grid.len() {
                let (i, j) = grid.coords(m);
                let exact = k * (k * i as f64 * h).cos() * (k * j as f64 * h).cos();
                e = e.max((g[m][0] / h - exact).abs());
            }
            e
        };
        let ratio = err(33) / err(65);
        assert!(ratio > 3.5, "convergence ratio {ratio}");
    }
}
