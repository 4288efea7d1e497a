//! Local equilibria of the lattice kinetic scheme.

use crate::lattice::{CF, Q, W};

/// Single component `f_eq_i` of the velocity-gradient–augmented equilibrium.
#[inline]
pub fn feq_dir(i: usize, rho: f64, u: [f64; 2], grad_u: &[[f64; 2]; 2], a: f64) -> f64 {
    let c = CF[i];
    let cu = c[0] * u[0] + c[1] * u[1];
    let uu = u[0] * u[0] + u[1] * u[1];
    // (∂u_α/∂x_β + ∂u_β/∂x_α) c_α c_β
    let strain = 2.0 * (grad_u[0][0] * c[0] * c[0] + grad_u[1][1] * c[1] * c[1])
        + 2.0 * (grad_u[0][1] + grad_u[1][0]) * c[0] * c[1];
    W[i] * (rho + 3.0 * cu + 4.5 * cu * cu - 1.5 * uu + a * strain)
}

pub fn equilibrium_f(rho: f64, u: [f64; 2], grad_u: &[[f64; 2]; 2], a: f64) -> [f64; Q] {
    std::array::from_fn(|i| feq_dir(i, rho, u, grad_u, a))
}

/// Single component `g_eq_i = w_i (T (1 + 3 c·u) + B ∇T·c)`.
#[inline]
pub fn geq_dir(i: usize, t: f64, u: [f64; 2], grad_t: [f64; 2], b: f64) -> f64 {
    let c = CF[i];
    let cu = c[0] * u[0] + c[1] * u[1];
    let ct = c[0] * grad_t[0] + c[1] * grad_t[1];
    W[i] * (t * (1.0 + 3.0 * cu) + b * ct)
}

pub fn equilibrium_g(t: f64, u: [f64; 2], grad_t: [f64; 2], b: f64) -> [f64; Q] {
    std::array::from_fn(|i| geq_dir(i, t, u, grad_t, b))
}
