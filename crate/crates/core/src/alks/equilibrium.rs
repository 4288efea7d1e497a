//! Adjoint equilibria. The adjoint distribution equilibrium is affine in the
//! discrete velocity, `f̃eq_i = ρ̃ + c_i·b`, and the thermal one is isotropic.

use crate::lattice::{CF, Q};

/// `b = 3(ũ + 3 s̃u - ρ̃u) - A ∂(s̃_αβ + s̃_βα)/∂x_β`.
#[inline]
pub fn feq_vector(
    rho_t: f64,
    u_t: [f64; 2],
    s_t: &[[f64; 2]; 2],
    div_sym_s: [f64; 2],
    u: [f64; 2],
    a: f64,
) -> [f64; 2] {
    std::array::from_fn(|k| {
        3.0 * (u_t[k] + 3.0 * (s_t[k][0] * u[0] + s_t[k][1] * u[1]) - rho_t * u[k])
            - a * div_sym_s[k]
    })
}

pub fn adjoint_equilibrium_f(
    rho_t: f64,
    u_t: [f64; 2],
    s_t: &[[f64; 2]; 2],
    div_sym_s: [f64; 2],
    u: [f64; 2],
    a: f64,
) -> [f64; Q] {
    let b = feq_vector(rho_t, u_t, s_t, div_sym_s, u, a);
    std::array::from_fn(|i| rho_t + CF[i][0] * b[0] + CF[i][1] * b[1])
}

/// `T̃ + 3q̃·u - B ∂q̃_α/∂x_α - (∂B/∂x_α) q̃_α`, shared by all nine directions.
#[inline]
pub fn geq_value(t_t: f64, q_t: [f64; 2], div_q: f64, u: [f64; 2], b: f64, grad_b: [f64; 2]) -> f64 {
    t_t + 3.0 * (q_t[0] * u[0] + q_t[1] * u[1]) - b * div_q - (grad_b[0] * q_t[0] + grad_b[1] * q_t[1])
}

pub fn adjoint_equilibrium_g(t_t: f64, q_t: [f64; 2], div_q: f64, u: [f64; 2], b: f64, grad_b: [f64; 2]) -> [f64; Q] {
    [geq_value(t_t, q_t, div_q, u, b, grad_b); Q]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::weighted_moment_sums;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let z = adjoint_equilibrium_f(0.0, [0.0; 2], &[[0.0; 2]; 2], [0.0; 2], [0.1, 0.2], 0.3);
        assert_eq!(z, [0.0; Q]);
        let one = adjoint_equilibrium_f(1.0, [0.0; 2], &[[0.0; 2]; 2], [0.0; 2], [0.0; 2], 0.3);
        assert_eq!(one, [1.0; Q]);
        assert_eq!(adjoint_equilibrium_g(2.0, [0.0; 2], 0.0, [0.1, 0.0], 0.4, [0.0; 2]), [2.0; Q]);
    }

    proptest! {
        #[test]
        fn weighted_moments(r in -1.0f64..1.0, ux in -1.0f64..1.0, uy in -1.0f64..1.0,
                            s in prop::array::uniform4(-1.0f64..1.0), d in prop::array::uniform2(-1.0f64..1.0),
                            vx in -0.2f64..0.2, vy in -0.2f64..0.2, a in 0.0f64..0.7) {
            let st = [[s[0], s[1]], [s[2], s[3]]];
            let f = adjoint_equilibrium_f(r, [ux, uy], &st, d, [vx, vy], a);
            let m = weighted_moment_sums(&f);
            prop_assert!((m.zeroth - r).abs() < 1e-12);
            // ρ̃-only part has second moment ρ̃/3 δ
            let f0 = adjoint_equilibrium_f(r, [0.0; 2], &[[0.0; 2]; 2], [0.0; 2], [0.0; 2], a);
            let m0 = weighted_moment_sums(&f0);
            prop_assert!((m0.second[0][0] - r / 3.0).abs() < 1e-12);
            prop_assert!((m0.second[1][1] - r / 3.0).abs() < 1e-12);
            prop_assert!(m0.second[0][1].abs() < 1e-12);
        }

        #[test]
        fn thermal_weighted_sum(t in -1.0f64..1.0, q in prop::array::uniform2(-1.0f64..1.0), dq in -1.0f64..1.0,
                                u in prop::array::uniform2(-0.2f64..0.2), b in 0.0f64..0.5,
                                gb in prop::array::uniform2(-0.1f64..0.1)) {
            let g = adjoint_equilibrium_g(t, q, dq, u, b, gb);
            let m = weighted_moment_sums(&g);
            let expect = t + 3.0 * (q[0] * u[0] + q[1] * u[1]) - b * dq - (gb[0] * q[0] + gb[1] * q[1]);
            prop_assert!((m.zeroth - expect).abs() < 1e-12);
        }
    }
}
