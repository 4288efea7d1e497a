//! Objective and constraint functionals, their state derivatives and the
//! assembly of design sensitivities from forward and adjoint fields.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alks::{AdjointState, StateDerivatives};
use crate::lattice::{Grid, ScalarField};
use crate::lks::boundary::{NodeHydro, ResolvedBoundary};
use crate::lks::{Materials, PhysicsParams, StateFields};
use crate::{Error, Result};

/// Functionals that depend on the flow state and need an adjoint solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateFunctional {
    /// `∫_in p dΓ - ∫_out p dΓ`
    PressureDrop,
    /// `∫_I ∫_∂O -n·u (p + |u|²/2) dΓ dt` over inlets and outlets.
    EnergyLoss,
    /// `-∫ β_γ (1 - T) dΩ`
    HeatExchange,
    /// Mean temperature on the heated boundary over the horizon.
    BoundaryTemperature,
}

/// Functionals of the design alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignFunctional {
    /// `Σ_D γ`
    Volume,
    /// `Σ_D (1 - γ)`
    SolidArea,
}

impl StateFunctional {
    pub fn needs_thermal(self) -> bool {
        matches!(self, StateFunctional::HeatExchange | StateFunctional::BoundaryTemperature)
    }

    pub fn check(self, physics: &PhysicsParams) -> Result<()> {
        if self.needs_thermal() && !physics.thermal {
            return Err(Error::Config(format!("{self:?} needs a thermal run")));
        }
        Ok(())
    }

    /// Pressure values on the perimeter are only needed by these functionals.
    pub fn needs_boundary_pressure(self) -> bool {
        matches!(self, StateFunctional::PressureDrop | StateFunctional::EnergyLoss)
    }
}

/// Everything a functional evaluation needs at one time level.
#[derive(Debug, Clone, Copy)]
pub struct LevelContext<'a> {
    pub grid: &'a Grid,
    pub boundary: &'a ResolvedBoundary,
    pub materials: &'a Materials,
    /// Weight of this level in the time integral (1 for steady problems).
    pub time_weight: f64,
}

fn heated_measure(boundary: &ResolvedBoundary) -> f64 {
    boundary.heated_nodes().map(|b| b.thermal_weight).sum()
}

fn is_inlet(h: &NodeHydro) -> bool {
    matches!(h, NodeHydro::Inlet { .. })
}

/// Contribution of one time level to the functional.
pub fn level_value(kind: StateFunctional, ctx: &LevelContext, state: &StateFields) -> f64 {
    let tw = ctx.time_weight;
    match kind {
        StateFunctional::PressureDrop => {
            let mut j = 0.0;
            for b in &ctx.boundary.nodes {
                let p = state.pressure(b.node) * b.hydro_weight;
                match b.hydro {
                    NodeHydro::Inlet { .. } => j += p,
                    NodeHydro::Outlet { .. } => j -= p,
                    NodeHydro::Wall => {}
                }
            }
            tw * j
        }
        StateFunctional::EnergyLoss => {
            let mut j = 0.0;
            for b in &ctx.boundary.nodes {
                if !(is_inlet(&b.hydro) || matches!(b.hydro, NodeHydro::Outlet { .. })) {
                    continue;
                }
                let n = b.unit_normal();
                let u = state.u[b.node];
                let un = n[0] * u[0] + n[1] * u[1];
                let uu = u[0] * u[0] + u[1] * u[1];
                j += -un * (state.pressure(b.node) + 0.5 * uu) * b.hydro_weight;
            }
            tw * j
        }
        StateFunctional::HeatExchange => {
            let beta = &ctx.materials.beta;
            -tw * (0..ctx.grid.len())
                .into_par_iter()
                .map(|n| beta[n] * (1.0 - state.t[n]))
                .sum::<f64>()
        }
        StateFunctional::BoundaryTemperature => {
            let m = heated_measure(ctx.boundary);
            let s: f64 = ctx
                .boundary
                .heated_nodes()
                .map(|b| state.t[b.node] * b.thermal_weight)
                .sum();
            tw * s / m
        }
    }
}

/// State derivatives of one level's contribution, accumulated into `out` with factor `scale`.
pub fn add_level_derivatives(
    kind: StateFunctional,
    ctx: &LevelContext,
    state: &StateFields,
    scale: f64,
    out: &mut StateDerivatives,
) {
    let s = scale * ctx.time_weight;
    match kind {
        StateFunctional::PressureDrop => {
            for b in &ctx.boundary.nodes {
                let sign = match b.hydro {
                    NodeHydro::Inlet { .. } => 1.0,
                    NodeHydro::Outlet { .. } => -1.0,
                    NodeHydro::Wall => continue,
                };
                out.jr[b.node] += s * sign * b.hydro_weight / 3.0;
            }
        }
        StateFunctional::EnergyLoss => {
            for b in &ctx.boundary.nodes {
                if !(is_inlet(&b.hydro) || matches!(b.hydro, NodeHydro::Outlet { .. })) {
                    continue;
                }
                let w = s * b.hydro_weight;
                let n = b.unit_normal();
                let u = state.u[b.node];
                let un = n[0] * u[0] + n[1] * u[1];
                let e = state.pressure(b.node) + 0.5 * (u[0] * u[0] + u[1] * u[1]);
                out.jr[b.node] += -w * un / 3.0;
                for a in 0..2 {
                    out.ju[b.node][a] += w * (-n[a] * e - un * u[a]);
                }
            }
        }
        StateFunctional::HeatExchange => {
            for n in 0..ctx.grid.len() {
                out.jt[n] += s * ctx.materials.beta[n];
            }
        }
        StateFunctional::BoundaryTemperature => {
            let m = heated_measure(ctx.boundary);
            for b in ctx.boundary.heated_nodes() {
                out.jt[b.node] += s * b.thermal_weight / m;
            }
        }
    }
}

/// Accumulates one level's sensitivity integrand with respect to the projected γ:
/// `∂J/∂γ + 3α' u·ũ - B' ∇T·q̃ - Q' T̃`. The only explicit `∂J/∂γ` comes from the
/// heat-exchange functional; `heat_exchange_weight` is its total weight at this level.
pub fn add_level_sensitivity(
    heat_exchange_weight: f64,
    ctx: &LevelContext,
    physics: &PhysicsParams,
    state: &StateFields,
    adjoint: &AdjointState,
    mask: &[bool],
    out: &mut [f64],
) {
    let mat = ctx.materials;
    out.par_iter_mut().enumerate().for_each(|(n, o)| {
        if !mask[n] {
            return;
        }
        let u = state.u[n];
        let ut = adjoint.u[n];
        let mut v = 3.0 * mat.d_alpha[n] * (u[0] * ut[0] + u[1] * ut[1]);
        if physics.thermal {
            let db = -3.0 * mat.d_k[n];
            let gt = state.grad_t[n];
            let q = adjoint.q[n];
            v -= db * (gt[0] * q[0] + gt[1] * q[1]);
            let one_minus_t = 1.0 - state.t[n];
            if physics.heat_source {
                v -= mat.d_beta[n] * one_minus_t * adjoint.t[n];
            }
            v -= heat_exchange_weight * mat.d_beta[n] * one_minus_t;
        }
        *o += v;
    });
}

pub fn design_value(kind: DesignFunctional, gamma: &[f64], mask: &[bool]) -> f64 {
    gamma
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(g, _)| match kind {
            DesignFunctional::Volume => *g,
            DesignFunctional::SolidArea => 1.0 - g,
        })
        .sum()
}

/// Derivative with respect to the projected γ (one per design node).
pub fn design_gradient(kind: DesignFunctional, mask: &[bool]) -> ScalarField {
    let d = match kind {
        DesignFunctional::Volume => 1.0,
        DesignFunctional::SolidArea => -1.0,
    };
    mask.iter().map(|m| if *m { d } else { 0.0 }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::InterpolationParams;
    use crate::lks::boundary::*;

    fn channel() -> (Grid, ResolvedBoundary) {
        let grid = Grid::new(10, 9).unwrap();
        let spec = BoundarySpec {
            hydro: vec![
                HydroSegment { side: Side::Left, start: 2, end: 6, kind: HydroKind::Inlet { peak: 0.01, modulation: Modulation::Constant } },
                HydroSegment { side: Side::Right, start: 2, end: 6, kind: HydroKind::Outlet { pressure: 1.0 / 3.0 } },
            ],
            thermal: vec![ThermalSegment { side: Side::Bottom, start: 3, end: 6, kind: ThermalKind::HeatFlux { flux: 0.01 } }],
        };
        let rb = spec.resolve(&grid).unwrap();
        (grid, rb)
    }

    #[test]
    fn uniform_pressure_has_zero_drop() {
        let (grid, rb) = channel();
        let mat = Materials::from_gamma(&grid, &vec![1.0; grid.len()], &InterpolationParams::default()).unwrap();
        let ctx = LevelContext { grid: &grid, boundary: &rb, materials: &mat, time_weight: 1.0 };
        let s = StateFields::rest(&grid);
        assert_eq!(level_value(StateFunctional::PressureDrop, &ctx, &s), 0.0);
    }

    #[test]
    fn unit_temperature_has_zero_heat_exchange() {
        let (grid, rb) = channel();
        let interp = InterpolationParams { beta_bar: 0.1, ..Default::default() };
        let mat = Materials::from_gamma(&grid, &vec![0.3; grid.len()], &interp).unwrap();
        let ctx = LevelContext { grid: &grid, boundary: &rb, materials: &mat, time_weight: 1.0 };
        let mut s = StateFields::rest(&grid);
        s.t.iter_mut().for_each(|t| *t = 1.0);
        assert_eq!(level_value(StateFunctional::HeatExchange, &ctx, &s), 0.0);
    }

    #[test]
    fn full_volume_violates_quarter_bound() {
        let mask = vec![true; 20];
        let g = vec![1.0; 20];
        let v = design_value(DesignFunctional::Volume, &g, &mask);
        assert_eq!(v, 20.0);
        assert!(v > 0.25 * 20.0);
        assert!(design_gradient(DesignFunctional::Volume, &mask).iter().all(|d| *d == 1.0));
    }

    // Perturb ρ, u or T at one node and compare with the declared derivative.
    #[test]
    fn derivatives_match_finite_differences() {
        let (grid, rb) = channel();
        let interp = InterpolationParams { beta_bar: 0.1, ..Default::default() };
        let mat = Materials::from_gamma(&grid, &vec![0.4; grid.len()], &interp).unwrap();
        let ctx = LevelContext { grid: &grid, boundary: &rb, materials: &mat, time_weight: 1.0 };
        let mut base = StateFields::rest(&grid);
        for (n, u) in base.u.iter_mut().enumerate() {
            *u = [0.01 + 1e-4 * n as f64, -0.005 + 2e-4 * (n % 7) as f64];
        }
        for (n, r) in base.rho.iter_mut().enumerate() {
            *r = 1.0 + 1e-3 * (n % 5) as f64;
        }
        for (n, t) in base.t.iter_mut().enumerate() {
            *t = 0.1 * (n % 3) as f64;
        }
        let h = 1e-6;
        let kinds = [
            StateFunctional::PressureDrop,
            StateFunctional::EnergyLoss,
            StateFunctional::HeatExchange,
            StateFunctional::BoundaryTemperature,
        ];
        let nodes = [grid.index(0, 4), grid.index(9, 3), grid.index(4, 0), grid.index(5, 5)];
        for kind in kinds {
            let mut d = StateDerivatives::zeros(&grid);
            add_level_derivatives(kind, &ctx, &base, 1.0, &mut d);
            for &node in &nodes {
                // ∂J/∂f_i = jr + c_i·ju for the direction c = (1, 0): perturb ρ and u_x together
                let mut p = base.clone();
                let mut m = base.clone();
                p.rho[node] += h;
                p.u[node][0] += h;
                m.rho[node] -= h;
                m.u[node][0] -= h;
                let fd = (level_value(kind, &ctx, &p) - level_value(kind, &ctx, &m)) / (2.0 * h);
                let declared = d.jr[node] + d.ju[node][0];
                assert!((fd - declared).abs() <= 1e-6 * declared.abs().max(1.0), "{kind:?} f: {fd} vs {declared}");

                let mut p = base.clone();
                let mut m = base.clone();
                p.t[node] += h;
                m.t[node] -= h;
                let fd = (level_value(kind, &ctx, &p) - level_value(kind, &ctx, &m)) / (2.0 * h);
                assert!((fd - d.jt[node]).abs() <= 1e-6 * d.jt[node].abs().max(1.0), "{kind:?} g: {fd} vs {}", d.jt[node]);
            }
        }
    }
}
