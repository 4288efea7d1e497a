//! Forward solver: lattice kinetic scheme for ρ, u and T.

pub mod boundary;
pub mod equilibrium;
pub mod gradient;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::InterpolationParams;
use crate::lattice::{Grid, ScalarField, Shift, TensorField, VectorField, C, CF, Q};
use crate::{Error, Result};
use boundary::{NodeHydro, ResolvedBoundary, ThermalKind};
use equilibrium::{feq_dir, geq_dir};
use gradient::{scalar_gradient, scalar_gradient_into, vector_gradient_into};

/// Fluid and thermal constants in lattice units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsParams {
    pub nu: f64,
    /// Solve the temperature field.
    #[serde(default)]
    pub thermal: bool,
    /// Boussinesq coefficient `g_α β_T`; the body force is `G = g β_T (T - T_ref)`.
    #[serde(default)]
    pub buoyancy: [f64; 2],
    #[serde(default)]
    pub t_ref: f64,
    /// Volumetric source `Q = β_γ (1 - T)`.
    #[serde(default)]
    pub heat_source: bool,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            nu: 0.1,
            thermal: false,
            buoyancy: [0.0; 2],
            t_ref: 0.0,
            heat_source: false,
        }
    }
}

impl PhysicsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu < 1.0 / 6.0) {
            return Err(Error::Config(format!("nu must lie in (0, 1/6), got {}", self.nu)));
        }
        if !self.thermal && (self.heat_source || self.buoyancy != [0.0; 2]) {
            return Err(Error::Config(
                "heat source and buoyancy need a thermal run".into(),
            ));
        }
        Ok(())
    }

    /// Equilibrium constant `A = (1/6 - ν) 9/2`.
    pub fn a(&self) -> f64 {
        (1.0 / 6.0 - self.nu) * 4.5
    }
}

/// `B = (1/6 - K) 3`.
pub fn b_from_k(k: f64) -> f64 {
    (1.0 / 6.0 - k) * 3.0
}

/// Per-node material coefficients evaluated from the projected design field.
#[derive(Debug, Clone)]
pub struct Materials {
    pub alpha: ScalarField,
    pub d_alpha: ScalarField,
    pub k: ScalarField,
    pub d_k: ScalarField,
    pub b: ScalarField,
    pub grad_b: VectorField,
    pub beta: ScalarField,
    pub d_beta: ScalarField,
}

impl Materials {
    pub fn from_gamma(grid: &Grid, gamma: &[f64], interp: &InterpolationParams) -> Result<Self> {
        let n = grid.len();
        let mut m = Materials {
            alpha: vec![0.0; n],
            d_alpha: vec![0.0; n],
            k: vec![0.0; n],
            d_k: vec![0.0; n],
            b: vec![0.0; n],
            grad_b: Vec::new(),
            beta: vec![0.0; n],
            d_beta: vec![0.0; n],
        };
        for (node, &g) in gamma.iter().enumerate() {
            (m.alpha[node], m.d_alpha[node]) = interp.alpha(g);
            (m.k[node], m.d_k[node]) = interp.k(g);
            (m.beta[node], m.d_beta[node]) = interp.beta(g);
            if m.k[node] > 1.0 / 6.0 + 1e-12 {
                return Err(Error::Config(format!(
                    "thermal diffusivity {} exceeds 1/6 at node {node}",
                    m.k[node]
                )));
            }
            m.b[node] = b_from_k(m.k[node]);
        }
        m.grad_b = scalar_gradient(grid, &m.b);
        Ok(m)
    }
}

/// Macroscopic state with its finite-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFields {
    pub rho: ScalarField,
    pub u: VectorField,
    pub t: ScalarField,
    /// `grad_u[a][b] = ∂u_a/∂x_b`
    pub grad_u: TensorField,
    pub grad_t: VectorField,
}

impl StateFields {
    pub fn rest(grid: &Grid) -> Self {
        let n = grid.len();
        Self {
            rho: vec![1.0; n],
            u: vec![[0.0; 2]; n],
            t: vec![0.0; n],
            grad_u: vec![[[0.0; 2]; 2]; n],
            grad_t: vec![[0.0; 2]; n],
        }
    }

    pub fn pressure(&self, node: usize) -> f64 {
        self.rho[node] / 3.0
    }

    pub fn refresh_gradients(&mut self, grid: &Grid) {
        vector_gradient_into(grid, &self.u, &mut self.grad_u);
        scalar_gradient_into(grid, &self.t, &mut self.grad_t);
    }

    /// Max-norm change in (u, T) between two states.
    pub fn max_change(&self, other: &StateFields) -> f64 {
        let du = self
            .u
            .par_iter()
            .zip(other.u.par_iter())
            .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
            .reduce(|| 0.0, f64::max);
        let dt = self
            .t
            .par_iter()
            .zip(other.t.par_iter())
            .map(|(a, b)| (a - b).abs())
            .reduce(|| 0.0, f64::max);
        du.max(dt)
    }

    fn check_finite(&self, grid: &Grid, step: usize) -> Result<()> {
        let bad = |v: &[f64]| v.par_iter().position_first(|x| !x.is_finite());
        let checks: [(&'static str, Option<usize>); 3] = [
            ("rho", bad(&self.rho)),
            (
                "u",
                self.u
                    .par_iter()
                    .position_first(|x| !(x[0].is_finite() && x[1].is_finite())),
            ),
            ("T", bad(&self.t)),
        ];
        for (field, pos) in checks {
            if let Some(node) = pos {
                let (i, j) = grid.coords(node);
                return Err(Error::Divergence { step, field, i, j });
            }
        }
        Ok(())
    }
}

/// Time-indexed storage for unsteady runs: `u` (and `T` when thermal) per level.
#[derive(Debug, Clone, PartialEq)]
pub struct StateHistory {
    pub u: Vec<VectorField>,
    pub t: Option<Vec<ScalarField>>,
    /// ρ on perimeter nodes (in [`ResolvedBoundary::nodes`] order), kept only when a
    /// boundary functional needs the pressure.
    pub boundary_rho: Option<Vec<Vec<f64>>>,
}

impl StateHistory {
    /// Number of recorded levels, initial state included.
    pub fn levels(&self) -> usize {
        self.u.len()
    }

    pub fn steps(&self) -> usize {
        self.u.len().saturating_sub(1)
    }

    /// Rebuilds the state at `level` with gradients. ρ is only restored on the perimeter.
    pub fn state_at(&self, grid: &Grid, boundary: &ResolvedBoundary, level: usize) -> StateFields {
        let mut s = StateFields::rest(grid);
        s.u.clone_from(&self.u[level]);
        if let Some(t) = &self.t {
            s.t.clone_from(&t[level]);
        }
        if let Some(br) = &self.boundary_rho {
            for (b, &r) in boundary.nodes.iter().zip(br[level].iter()) {
                s.rho[b.node] = r;
            }
        }
        s.refresh_gradients(grid);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadyOptions {
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_steps: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub steps: usize,
    pub residual: f64,
}

/// Forward solver bound to one geometry, physics and material distribution.
#[derive(Debug, Clone, Copy)]
pub struct Lks<'a> {
    pub grid: &'a Grid,
    pub boundary: &'a ResolvedBoundary,
    pub physics: &'a PhysicsParams,
    pub materials: &'a Materials,
}

impl<'a> Lks<'a> {
    pub fn new(
        grid: &'a Grid,
        boundary: &'a ResolvedBoundary,
        physics: &'a PhysicsParams,
        materials: &'a Materials,
    ) -> Self {
        Self {
            grid,
            boundary,
            physics,
            materials,
        }
    }

    /// Quiescent start with boundary values applied at `t = 0`.
    pub fn initial_state(&self) -> StateFields {
        let mut s = StateFields::rest(self.grid);
        self.apply_boundary(&mut s, 0);
        s.refresh_gradients(self.grid);
        s
    }

    /// Advances `cur` (level `time - 1`) into `next` (level `time`).
    pub fn step(&self, cur: &StateFields, next: &mut StateFields, time: usize) -> Result<()> {
        let grid = self.grid;
        let nx = grid.nx;
        let a = self.physics.a();
        let thermal = self.physics.thermal;
        let heat_source = self.physics.heat_source;
        let buoy = self.physics.buoyancy;
        let t_ref = self.physics.t_ref;
        let mat = self.materials;

        next.rho
            .par_chunks_mut(nx)
            .zip(next.u.par_chunks_mut(nx))
            .zip(next.t.par_chunks_mut(nx))
            .enumerate()
            .for_each(|(j, ((rho_row, u_row), t_row))| {
                if j == 0 || j == grid.ny - 1 {
                    return;
                }
                for i in 1..nx - 1 {
                    let node = grid.index(i, j);
                    let mut rho = 0.0;
                    let mut us = [0.0; 2];
                    let mut ts = 0.0;
                    for d in 0..Q {
                        let src = grid.interior_neighbor(node, d, Shift::Backward);
                        let fe = feq_dir(d, cur.rho[src], cur.u[src], &cur.grad_u[src], a);
                        rho += fe;
                        us[0] += CF[d][0] * fe;
                        us[1] += CF[d][1] * fe;
                        if thermal {
                            ts += geq_dir(d, cur.t[src], cur.u[src], cur.grad_t[src], mat.b[src]);
                        }
                    }
                    let t = if heat_source {
                        let beta = mat.beta[node];
                        (ts + beta) / (1.0 + beta)
                    } else {
                        ts
                    };
                    let damp = 1.0 / (1.0 + mat.alpha[node]);
                    let dt = t - t_ref;
                    rho_row[i] = rho;
                    u_row[i] = [(us[0] + buoy[0] * dt) * damp, (us[1] + buoy[1] * dt) * damp];
                    t_row[i] = t;
                }
            });

        self.apply_boundary(next, time);
        self.outlet_velocity(cur, next);
        next.refresh_gradients(grid);
        next.check_finite(grid, time)
    }

    /// Overwrites perimeter values; interior values must already be current.
    pub fn apply_boundary(&self, s: &mut StateFields, time: usize) {
        let grid = self.grid;
        for b in &self.boundary.nodes {
            let (i, j) = grid.coords(b.node);
            let inner = |k: i32| {
                grid.offset(i, j, -k * b.normal[0], -k * b.normal[1])
                    .expect("inward neighbor exists")
            };
            let n1 = inner(1);
            match b.hydro {
                NodeHydro::Wall | NodeHydro::Inlet { .. } => {
                    s.u[b.node] = b.velocity(time as f64);
                    s.rho[b.node] = s.rho[n1];
                }
                // Velocity is set by `outlet_velocity` once the incoming populations exist.
                NodeHydro::Outlet { pressure } => {
                    s.rho[b.node] = 3.0 * pressure;
                }
            }
            if self.physics.thermal {
                s.t[b.node] = match b.thermal {
                    ThermalKind::Temperature { value } => value,
                    ThermalKind::HeatFlux { flux } => self.flux_temperature(s, b.node, b.normal, n1, inner(2), flux),
                    ThermalKind::Adiabatic => self.flux_temperature(s, b.node, b.normal, n1, inner(2), 0.0),
                };
            }
        }
    }

    /// Outlet velocity `u = u_n n` with `u_n` from the populations arriving from the
    /// interior and along the wall: `ρ u_n = Σ_{c·n=0} f + 2 Σ_{c·n>0} f - ρ`.
    fn outlet_velocity(&self, cur: &StateFields, next: &mut StateFields) {
        let grid = self.grid;
        let a = self.physics.a();
        for b in self.boundary.outlet_nodes() {
            let (i, j) = grid.coords(b.node);
            let nn = b.unit_normal();
            let mut sum = 0.0;
            for d in 0..Q {
                let cn = CF[d][0] * nn[0] + CF[d][1] * nn[1];
                if cn < -1e-12 {
                    continue;
                }
                let Some(src) = grid.offset(i, j, -C[d][0], -C[d][1]) else {
                    continue;
                };
                let fe = feq_dir(d, cur.rho[src], cur.u[src], &cur.grad_u[src], a);
                sum += if cn > 1e-12 { 2.0 * fe } else { fe };
            }
            let un = sum / next.rho[b.node] - 1.0;
            next.u[b.node] = [un * nn[0], un * nn[1]];
        }
    }

    // Second-order one-sided closure of K ∂T/∂n_out = q.
    fn flux_temperature(&self, s: &StateFields, node: usize, normal: [i32; 2], n1: usize, n2: usize, q: f64) -> f64 {
        let h = ((normal[0] * normal[0] + normal[1] * normal[1]) as f64).sqrt();
        (4.0 * s.t[n1] - s.t[n2] + 2.0 * h * q / self.materials.k[node]) / 3.0
    }

    /// Iterates to a steady state, starting from `init` or the quiescent state.
    pub fn steady(&self, init: Option<StateFields>, opts: &SteadyOptions) -> Result<(StateFields, SolveStats)> {
        let mut cur = init.unwrap_or_else(|| self.initial_state());
        let mut next = cur.clone();
        let mut residual = f64::INFINITY;
        for step in 1..=opts.max_steps {
            self.step(&cur, &mut next, step)?;
            residual = next.max_change(&cur);
            std::mem::swap(&mut cur, &mut next);
            if residual < opts.tol {
                return Ok((cur, SolveStats { steps: step, residual }));
            }
        }
        Err(Error::NotConverged {
            solver: "lks",
            steps: opts.max_steps,
            residual,
        })
    }

    /// Marches `n_t` steps from the quiescent state, calling `visit(level, state)` on
    /// every level including the initial one. Returns the final state.
    pub fn march(&self, n_t: usize, mut visit: impl FnMut(usize, &StateFields)) -> Result<StateFields> {
        let mut cur = self.initial_state();
        visit(0, &cur);
        let mut next = cur.clone();
        for step in 1..=n_t {
            self.step(&cur, &mut next, step)?;
            std::mem::swap(&mut cur, &mut next);
            visit(step, &cur);
        }
        Ok(cur)
    }

    /// Unsteady run recording the history the adjoint needs.
    pub fn unsteady(&self, n_t: usize, keep_boundary_rho: bool) -> Result<StateHistory> {
        let thermal = self.physics.thermal;
        let mut hist = StateHistory {
            u: Vec::with_capacity(n_t + 1),
            t: thermal.then(|| Vec::with_capacity(n_t + 1)),
            boundary_rho: keep_boundary_rho.then(|| Vec::with_capacity(n_t + 1)),
        };
        self.march(n_t, |_, s| {
            hist.u.push(s.u.clone());
            if let Some(t) = &mut hist.t {
                t.push(s.t.clone());
            }
            if let Some(br) = &mut hist.boundary_rho {
                br.push(self.boundary.nodes.iter().map(|b| s.rho[b.node]).collect());
            }
        })?;
        Ok(hist)
    }
}

#[cfg(test)]
mod tests {
    use super::boundary::*;
    use super::*;

    fn setup(grid: &Grid, spec: &BoundarySpec, gamma: f64, interp: &InterpolationParams) -> (ResolvedBoundary, Materials) {
        let rb = spec.resolve(grid).unwrap();
        let mat = Materials::from_gamma(grid, &vec![gamma; grid.len()], interp).unwrap();
        (rb, mat)
    }

    #[test]
    fn rest_state_is_fixed_point() {
        let grid = Grid::new(8, 7).unwrap();
        let (rb, mat) = setup(&grid, &BoundarySpec::default(), 1.0, &InterpolationParams::default());
        let phys = PhysicsParams::default();
        let lks = Lks::new(&grid, &rb, &phys, &mat);
        let s0 = lks.initial_state();
        let mut s1 = s0.clone();
        lks.step(&s0, &mut s1, 1).unwrap();
        assert!(s1.max_change(&s0) == 0.0);
        assert!(s1.rho.iter().all(|r| (r - 1.0).abs() < 1e-14));
    }

    #[test]
    fn brinkman_damping_is_implicit() {
        // Uniform flow through a porous medium: u* = 0.1 at interior nodes away from walls.
        let grid = Grid::new(7, 7).unwrap();
        let interp = InterpolationParams {
            alpha_bar: 1e4,
            ..Default::default()
        };
        let (mut rb, mat) = setup(&grid, &BoundarySpec::default(), 0.0, &interp);
        for b in &mut rb.nodes {
            b.hydro = NodeHydro::Inlet {
                velocity: [0.1, 0.0],
                modulation: Modulation::Constant,
            };
        }
        let phys = PhysicsParams::default();
        let lks = Lks::new(&grid, &rb, &phys, &mat);
        let mut s0 = StateFields::rest(&grid);
        for u in &mut s0.u {
            *u = [0.1, 0.0];
        }
        let mut s1 = s0.clone();
        lks.step(&s0, &mut s1, 1).unwrap();
        let c = grid.index(3, 3);
        assert!((s1.u[c][0] - 0.1 / (1.0 + 1e4)).abs() < 1e-15);
        assert!((s1.u[c][0] - 9.999e-6).abs() < 1e-9);
    }

    #[test]
    fn uniform_flow_advects_unchanged() {
        let grid = Grid::new(12, 10).unwrap();
        let (mut rb, mat) = setup(&grid, &BoundarySpec::default(), 1.0, &InterpolationParams::default());
        let v = [0.05, -0.03];
        for b in &mut rb.nodes {
            b.hydro = NodeHydro::Inlet {
                velocity: v,
                modulation: Modulation::Constant,
            };
        }
        let phys = PhysicsParams::default();
        let lks = Lks::new(&grid, &rb, &phys, &mat);
        let mut s = StateFields::rest(&grid);
        for u in &mut s.u {
            *u = v;
        }
        let mut next = s.clone();
        for step in 1..=100 {
            lks.step(&s, &mut next, step).unwrap();
            std::mem::swap(&mut s, &mut next);
        }
        for n in 0..grid.len() {
            assert!((s.rho[n] - 1.0).abs() < 1e-10);
            assert!((s.u[n][0] - v[0]).abs() < 1e-10 && (s.u[n][1] - v[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn divergence_is_reported_with_node() {
        let grid = Grid::new(6, 6).unwrap();
        let (rb, mat) = setup(&grid, &BoundarySpec::default(), 1.0, &InterpolationParams::default());
        let phys = PhysicsParams::default();
        let lks = Lks::new(&grid, &rb, &phys, &mat);
        let mut s0 = lks.initial_state();
        s0.rho[grid.index(2, 3)] = f64::NAN;
        let mut s1 = s0.clone();
        match lks.step(&s0, &mut s1, 7) {
            Err(Error::Divergence { step: 7, .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn heat_flux_boundary_gradient() {
        // Pure conduction in a slab heated from the bottom, cooled at the top.
        // Corners see a diagonal normal, so check the centre column of a wide slab.
        let grid = Grid::new(41, 21).unwrap();
        let spec = BoundarySpec {
            hydro: vec![],
            thermal: vec![
                ThermalSegment { side: Side::Bottom, start: 0, end: 40, kind: ThermalKind::HeatFlux { flux: 0.01 } },
                ThermalSegment { side: Side::Top, start: 0, end: 40, kind: ThermalKind::Temperature { value: 0.0 } },
            ],
        };
        let interp = InterpolationParams { k_f: 0.05, k_s: 0.05, ..Default::default() };
        let (rb, mat) = setup(&grid, &spec, 1.0, &interp);
        let phys = PhysicsParams { thermal: true, ..Default::default() };
        let lks = Lks::new(&grid, &rb, &phys, &mat);
        let (s, _) = lks.steady(None, &SteadyOptions { tol: 1e-12, max_steps: 100_000 }).unwrap();
        // linear profile T = q (H - y) / K with H = 20
        let mid = grid.index(20, 10);
        assert!((s.t[mid] / (0.01 * 10.0 / 0.05) - 1.0).abs() < 1e-2, "{}", s.t[mid]);
    }

    #[test]
    fn history_of_zero_steps_is_initial_state() {
        let grid = Grid::new(5, 5).unwrap();
        let (rb, mat) = setup(&grid, &BoundarySpec::default(), 1.0, &InterpolationParams::default());
        let phys = PhysicsParams::default();
        let lks = Lks::new(&grid, &rb, &phys, &mat);
        let h = lks.unsteady(0, false).unwrap();
        assert_eq!(h.levels(), 1);
        assert!(h.t.is_none());
    }
}
