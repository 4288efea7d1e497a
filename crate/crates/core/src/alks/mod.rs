//! Backward solver: adjoint lattice kinetic scheme.

pub mod closure;
pub mod equilibrium;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lattice::{Grid, ScalarField, Shift, TensorField, VectorField, C, CF, Q, W};
use crate::lks::boundary::{NodeHydro, ResolvedBoundary, ThermalKind};
use crate::lks::gradient::{
    tensor_divergence, tensor_gradient_transpose, vector_divergence, vector_gradient_transpose,
};
use crate::lks::{Materials, PhysicsParams, SolveStats, StateFields, StateHistory, SteadyOptions};
use crate::{Error, Result};
use closure::{Closure, HydroMultipliers, ThermalMultipliers};
use equilibrium::{feq_vector, geq_value};

/// Adjoint macroscopic fields.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointState {
    pub rho: ScalarField,
    pub u: VectorField,
    pub s: TensorField,
    pub t: ScalarField,
    pub q: VectorField,
    /// Density-only sources already folded into `rho` (transpose boundaries only);
    /// `rho - src` is the pulled zeroth moment that enters `f̃eq`'s vector part.
    pub src: ScalarField,
}

impl AdjointState {
    pub fn zeros(grid: &Grid) -> Self {
        let n = grid.len();
        Self {
            rho: vec![0.0; n],
            u: vec![[0.0; 2]; n],
            s: vec![[[0.0; 2]; 2]; n],
            t: vec![0.0; n],
            q: vec![[0.0; 2]; n],
            src: vec![0.0; n],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.rho.iter().all(|v| *v == 0.0)
            && self.u.iter().all(|v| *v == [0.0; 2])
            && self.s.iter().all(|v| *v == [[0.0; 2]; 2])
            && self.t.iter().all(|v| *v == 0.0)
            && self.q.iter().all(|v| *v == [0.0; 2])
    }

    pub fn max_change(&self, other: &AdjointState) -> f64 {
        (0..self.rho.len())
            .into_par_iter()
            .map(|n| {
                let mut d = (self.rho[n] - other.rho[n]).abs().max((self.t[n] - other.t[n]).abs());
                for a in 0..2 {
                    d = d
                        .max((self.u[n][a] - other.u[n][a]).abs())
                        .max((self.q[n][a] - other.q[n][a]).abs());
                    for b in 0..2 {
                        d = d.max((self.s[n][a][b] - other.s[n][a][b]).abs());
                    }
                }
                d
            })
            .reduce(|| 0.0, f64::max)
    }

    fn check_finite(&self, grid: &Grid, level: usize) -> Result<()> {
        let bad = (0..self.rho.len()).into_par_iter().position_first(|n| {
            !(self.rho[n].is_finite()
                && self.t[n].is_finite()
                && self.u[n].iter().chain(&self.q[n]).all(|v| v.is_finite())
                && self.s[n].iter().flatten().all(|v| v.is_finite()))
        });
        match bad {
            Some(node) => {
                let (i, j) = grid.coords(node);
                Err(Error::Divergence {
                    step: level,
                    field: "adjoint",
                    i,
                    j,
                })
            }
            None => Ok(()),
        }
    }
}

/// Boundary multipliers per perimeter node, in [`ResolvedBoundary::nodes`] order.
/// `hydro` holds `(μ̃_x, μ̃_y)` at velocity nodes and `(λ̃, μ̃_s)` at outlets;
/// `thermal` holds `η̃` at temperature nodes and `κ̃` at flux nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMultipliers {
    pub hydro: Vec<[f64; 2]>,
    pub thermal: Vec<f64>,
}

/// Derivatives of the objective with respect to the state, written as macroscopic
/// coefficients: `∂J/∂f_i = jr + c_i·ju`, `∂J/∂g_i = jt`. Interior entries act as
/// volumetric sources; perimeter entries (already multiplied by their quadrature
/// weight) enter the boundary closures.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivatives {
    pub jr: ScalarField,
    pub ju: VectorField,
    pub jt: ScalarField,
}

impl StateDerivatives {
    pub fn zeros(grid: &Grid) -> Self {
        let n = grid.len();
        Self {
            jr: vec![0.0; n],
            ju: vec![[0.0; 2]; n],
            jt: vec![0.0; n],
        }
    }

    pub fn scaled_add(&mut self, s: f64, other: &StateDerivatives) {
        for n in 0..self.jr.len() {
            self.jr[n] += s * other.jr[n];
            self.jt[n] += s * other.jt[n];
            self.ju[n][0] += s * other.ju[n][0];
            self.ju[n][1] += s * other.ju[n][1];
        }
    }
}

/// Closures that depend on the forward state (heat-flux nodes with through-flow).
#[derive(Debug, Clone)]
pub struct ThermalClosures(Vec<Option<Closure>>);

/// How perimeter nodes of the adjoint are completed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjointBoundary {
    /// Transpose of the forward boundary maps: a perimeter node collects the
    /// adjoint pulled from its existing neighbours and hands it to the interior
    /// values it was built from (copied density, extrapolated temperature,
    /// kinetic outlet velocity).
    #[default]
    Transpose,
    /// Least-squares closure of the unknown adjoint distributions with boundary
    /// multipliers (see [`closure`]).
    Closure,
}

/// Adjoint solver bound to one geometry, physics and material distribution.
#[derive(Debug, Clone)]
pub struct Alks<'a> {
    pub grid: &'a Grid,
    pub boundary: &'a ResolvedBoundary,
    pub physics: &'a PhysicsParams,
    pub materials: &'a Materials,
    pub mode: AdjointBoundary,
    hydro: Vec<Closure>,
    /// Thermal closures with `u·n = 0`; `None` where the forward state is needed.
    thermal: Vec<Option<Closure>>,
}

impl<'a> Alks<'a> {
    pub fn new(
        grid: &'a Grid,
        boundary: &'a ResolvedBoundary,
        physics: &'a PhysicsParams,
        materials: &'a Materials,
    ) -> Result<Self> {
        let a = physics.a();
        let mut hydro = Vec::with_capacity(boundary.nodes.len());
        let mut thermal = Vec::with_capacity(boundary.nodes.len());
        for b in &boundary.nodes {
            let kind = if b.hydro.is_velocity() {
                HydroMultipliers::Velocity
            } else {
                HydroMultipliers::Outlet
            };
            hydro.push(Closure::hydro(b.normal, kind, a)?);
            let bb = materials.b[b.node];
            thermal.push(if !physics.thermal {
                None
            } else {
                match b.thermal {
                    ThermalKind::Temperature { .. } => {
                        Some(Closure::thermal(b.normal, ThermalMultipliers::Temperature, bb)?)
                    }
                    _ if b.hydro == NodeHydro::Wall => {
                        Some(Closure::thermal(b.normal, ThermalMultipliers::Flux { u_n: 0.0 }, bb)?)
                    }
                    _ => None,
                }
            });
        }
        Ok(Self {
            grid,
            boundary,
            physics,
            materials,
            mode: AdjointBoundary::default(),
            hydro,
            thermal,
        })
    }

    pub fn with_mode(mut self, mode: AdjointBoundary) -> Self {
        self.mode = mode;
        self
    }

    /// Completes the thermal closures for the forward state at one level.
    pub fn thermal_closures(&self, state: &StateFields) -> Result<ThermalClosures> {
        let mut out = Vec::with_capacity(self.thermal.len());
        for (b, cached) in self.boundary.nodes.iter().zip(&self.thermal) {
            out.push(match cached {
                Some(c) => Some(c.clone()),
                None if self.physics.thermal => {
                    let n = closure::unit(b.normal);
                    let u = state.u[b.node];
                    let u_n = u[0] * n[0] + u[1] * n[1];
                    Some(Closure::thermal(
                        b.normal,
                        ThermalMultipliers::Flux { u_n },
                        self.materials.b[b.node],
                    )?)
                }
                None => None,
            });
        }
        Ok(ThermalClosures(out))
    }

    /// One backward step: `cur` holds the adjoint at level `m + 1`, `state` the
    /// forward fields at level `m`; `next` receives the adjoint at level `m`.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &self,
        cur: &AdjointState,
        state: &StateFields,
        derivs: &StateDerivatives,
        thermal_closures: &ThermalClosures,
        next: &mut AdjointState,
        mult: &mut BoundaryMultipliers,
        level: usize,
    ) -> Result<()> {
        let grid = self.grid;
        let nx = grid.nx;
        let thermal = self.physics.thermal;
        let heat_source = self.physics.heat_source;
        let buoy = self.physics.buoyancy;
        let mat = self.materials;
        let transpose = self.mode == AdjointBoundary::Transpose;

        // Per-node equilibrium coefficients: f̃eq_i = a + c_i·b, g̃eq_i = h.
        let (a_field, bvec, h) = match self.mode {
            AdjointBoundary::Closure => self.closure_pulls(cur, state),
            AdjointBoundary::Transpose => self.transpose_pulls(cur),
        };

        next.rho
            .par_chunks_mut(nx)
            .zip(next.u.par_chunks_mut(nx))
            .zip(next.s.par_chunks_mut(nx))
            .zip(next.t.par_chunks_mut(nx))
            .zip(next.q.par_chunks_mut(nx))
            .zip(next.src.par_chunks_mut(nx))
            .enumerate()
            .for_each(|(j, (((((rho_r, u_r), s_r), t_r), q_r), src_r))| {
                if j == 0 || j == grid.ny - 1 {
                    return;
                }
                for i in 1..nx - 1 {
                    let node = grid.index(i, j);
                    let mut rho = 0.0;
                    let mut u = [0.0; 2];
                    let mut s = [[0.0; 2]; 2];
                    let mut t = 0.0;
                    let mut q = [0.0; 2];
                    for d in 0..Q {
                        let src = grid.interior_neighbor(node, d, Shift::Forward);
                        let c = CF[d];
                        let f = a_field[src] + c[0] * bvec[src][0] + c[1] * bvec[src][1];
                        let wf = W[d] * f;
                        rho += wf;
                        for x in 0..2 {
                            u[x] += c[x] * wf;
                            for y in 0..2 {
                                s[x][y] += c[x] * c[y] * wf;
                            }
                        }
                        if thermal {
                            let wg = W[d] * h[src];
                            t += wg;
                            q[0] += c[0] * wg;
                            q[1] += c[1] * wg;
                        }
                    }
                    let jr = derivs.jr[node];
                    let ju = derivs.ju[node];
                    let tf = state.t[node];
                    let u_raw = [u[0] + tf * q[0] - ju[0] / 3.0, u[1] + tf * q[1] - ju[1] / 3.0];
                    rho_r[i] = rho - jr;
                    q_r[i] = q;
                    if transpose {
                        // Damping, buoyancy and the heat source are applied in `finalize`.
                        src_r[i] = -jr;
                        u_r[i] = u_raw;
                        s_r[i] = s;
                        t_r[i] = t - derivs.jt[node];
                    } else {
                        let damp = 1.0 / (1.0 + mat.alpha[node]);
                        let u_new = [u_raw[0] * damp, u_raw[1] * damp];
                        let mut t_new = t + 3.0 * (buoy[0] * u_new[0] + buoy[1] * u_new[1]) - derivs.jt[node];
                        if heat_source {
                            t_new /= 1.0 + mat.beta[node];
                        }
                        src_r[i] = 0.0;
                        u_r[i] = u_new;
                        s_r[i] = [[s[0][0] - jr / 3.0, s[0][1]], [s[1][0], s[1][1] - jr / 3.0]];
                        t_r[i] = t_new;
                    }
                }
            });

        match self.mode {
            AdjointBoundary::Transpose => {
                self.transpose_perimeter(&a_field, &bvec, &h, state, derivs, next);
                self.finalize(next, state);
                self.transpose_transfers(next);
                mult.hydro.iter_mut().for_each(|m| *m = [0.0; 2]);
                mult.thermal.iter_mut().for_each(|m| *m = 0.0);
            }
            AdjointBoundary::Closure => {
                self.closure_perimeter(&a_field, &bvec, &h, state, derivs, thermal_closures, next, mult)
            }
        }
        next.check_finite(grid, level)
    }

    /// Coefficients of the adjoint equilibria evaluated from the stored moments.
    fn closure_pulls(&self, cur: &AdjointState, state: &StateFields) -> (ScalarField, VectorField, ScalarField) {
        let grid = self.grid;
        let a_coef = self.physics.a();
        let mat = self.materials;
        let sym = symmetrized(&cur.s);
        let div_sym = tensor_divergence(grid, &sym);
        let bvec: VectorField = (0..grid.len())
            .into_par_iter()
            .map(|n| feq_vector(cur.rho[n], cur.u[n], &cur.s[n], div_sym[n], state.u[n], a_coef))
            .collect();
        let h: ScalarField = if self.physics.thermal {
            let div_q = vector_divergence(grid, &cur.q);
            (0..grid.len())
                .into_par_iter()
                .map(|n| geq_value(cur.t[n], cur.q[n], div_q[n], state.u[n], mat.b[n], mat.grad_b[n]))
                .collect()
        } else {
            Vec::new()
        };
        (cur.rho.clone(), bvec, h)
    }

    /// Pulled values for the transpose treatment. After `finalize`, `rho`, `3u`
    /// and `t` already are the adjoints of ρ, u and T; perimeter nodes pull
    /// nothing when their state is prescribed or extrapolated, and `λ (1 + c·n)`
    /// at outlets, where `λ` is the adjoint of the kinetic normal velocity.
    fn transpose_pulls(&self, cur: &AdjointState) -> (ScalarField, VectorField, ScalarField) {
        let mut a_field = cur.rho.clone();
        let mut bvec: VectorField = cur.u.par_iter().map(|u| [3.0 * u[0], 3.0 * u[1]]).collect();
        let mut h = if self.physics.thermal { cur.t.clone() } else { Vec::new() };
        for b in &self.boundary.nodes {
            let n = b.node;
            match b.hydro {
                NodeHydro::Outlet { pressure } => {
                    let nn = b.unit_normal();
                    let lambda = (bvec[n][0] * nn[0] + bvec[n][1] * nn[1]) / (3.0 * pressure);
                    a_field[n] = lambda;
                    bvec[n] = [lambda * nn[0], lambda * nn[1]];
                }
                _ => {
                    a_field[n] = 0.0;
                    bvec[n] = [0.0; 2];
                }
            }
            if let Some(hn) = h.get_mut(n) {
                *hn = 0.0;
            }
        }
        (a_field, bvec, h)
    }

    /// Raw moments at perimeter nodes from every neighbour that exists.
    fn transpose_perimeter(
        &self,
        a_field: &[f64],
        bvec: &VectorField,
        h: &[f64],
        state: &StateFields,
        derivs: &StateDerivatives,
        next: &mut AdjointState,
    ) {
        let grid = self.grid;
        let thermal = self.physics.thermal;
        let moments: Vec<_> = self
            .boundary
            .nodes
            .par_iter()
            .map(|b| {
                let (i, j) = grid.coords(b.node);
                let (mut rho, mut u, mut s, mut t, mut q) = (0.0, [0.0; 2], [[0.0; 2]; 2], 0.0, [0.0; 2]);
                for d in 0..Q {
                    let Some(src) = grid.offset(i, j, C[d][0], C[d][1]) else {
                        continue;
                    };
                    let c = CF[d];
                    let wf = W[d] * (a_field[src] + c[0] * bvec[src][0] + c[1] * bvec[src][1]);
                    rho += wf;
                    for x in 0..2 {
                        u[x] += c[x] * wf;
                        for y in 0..2 {
                            s[x][y] += c[x] * c[y] * wf;
                        }
                    }
                    if thermal {
                        let wg = W[d] * h[src];
                        t += wg;
                        q[0] += c[0] * wg;
                        q[1] += c[1] * wg;
                    }
                }
                let node = b.node;
                let jr = derivs.jr[node];
                let ju = derivs.ju[node];
                let tf = state.t[node];
                u = [u[0] + tf * q[0] - ju[0] / 3.0, u[1] + tf * q[1] - ju[1] / 3.0];
                (rho - jr, u, s, t - derivs.jt[node], q, -jr)
            })
            .collect();
        for (b, (rho, u, s, t, q, src)) in self.boundary.nodes.iter().zip(moments) {
            next.rho[b.node] = rho;
            next.u[b.node] = u;
            next.s[b.node] = s;
            next.t[b.node] = t;
            next.q[b.node] = q;
            next.src[b.node] = src;
        }
    }

    /// Turns raw moments into the adjoints of u and T:
    /// `3ũ = (3(ũ + 3s̃u - ρ̃u) + A Dᵀ(s̃ + s̃ᵀ)) / (1 + α)` and
    /// `T̃ = (T̃ + 3q̃·u + Dᵀ(B q̃) + G·3ũ) / (1 + β)`, where `Dᵀ` is the transposed
    /// gradient stencil. Perimeter nodes see neither damping nor sources.
    fn finalize(&self, adj: &mut AdjointState, state: &StateFields) {
        let grid = self.grid;
        let a_coef = self.physics.a();
        let mat = self.materials;
        let buoy = self.physics.buoyancy;
        let heat_source = self.physics.heat_source;
        let sym = symmetrized(&adj.s);
        let tdiv = tensor_gradient_transpose(grid, &sym);
        let h = self
            .physics
            .thermal
            .then(|| thermal_pull(grid, &adj.t, &adj.q, &state.u, &mat.b));
        let rho = &adj.rho;
        let src = &adj.src;
        let s = &adj.s;
        adj.u.par_iter_mut().zip(adj.t.par_iter_mut()).enumerate().for_each(|(n, (u, t))| {
            let interior = grid.is_interior(n);
            let div = [-tdiv[n][0], -tdiv[n][1]];
            let mut b = feq_vector(rho[n] - src[n], *u, &s[n], div, state.u[n], a_coef);
            if interior {
                let damp = 1.0 + mat.alpha[n];
                b = [b[0] / damp, b[1] / damp];
            }
            *u = [b[0] / 3.0, b[1] / 3.0];
            if let Some(h) = &h {
                *t = h[n];
                if interior {
                    *t += buoy[0] * b[0] + buoy[1] * b[1];
                    if heat_source {
                        *t /= 1.0 + mat.beta[n];
                    }
                }
            }
        });
    }

    /// Hands the adjoint collected at perimeter nodes to the interior values their
    /// boundary maps read: copied density and the one-sided temperature closure.
    fn transpose_transfers(&self, next: &mut AdjointState) {
        let grid = self.grid;
        let mat = self.materials;
        for b in &self.boundary.nodes {
            let (i, j) = grid.coords(b.node);
            let inner = |s: i32| {
                grid.offset(i, j, -s * b.normal[0], -s * b.normal[1])
                    .expect("inward neighbor exists")
            };
            if b.hydro.is_velocity() {
                let x = next.rho[b.node];
                let n1 = inner(1);
                next.rho[n1] += x;
                next.src[n1] += x;
            }
            if self.physics.thermal && !matches!(b.thermal, ThermalKind::Temperature { .. }) {
                let x = next.t[b.node];
                for (node, coef) in [(inner(1), 4.0 / 3.0), (inner(2), -1.0 / 3.0)] {
                    let damp = if self.physics.heat_source { 1.0 + mat.beta[node] } else { 1.0 };
                    next.t[node] += coef * x / damp;
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn closure_perimeter(
        &self,
        a_field: &[f64],
        bvec: &VectorField,
        h: &[f64],
        state: &StateFields,
        derivs: &StateDerivatives,
        thermal_closures: &ThermalClosures,
        next: &mut AdjointState,
        mult: &mut BoundaryMultipliers,
    ) {
        let grid = self.grid;
        let thermal = self.physics.thermal;
        let results: Vec<_> = self
            .boundary
            .nodes
            .par_iter()
            .enumerate()
            .map(|(k, b)| {
                let (i, j) = grid.coords(b.node);
                let mut f = [0.0; Q];
                let mut g = [0.0; Q];
                let unknown = &self.hydro[k].unknown;
                for d in 0..Q {
                    if unknown.contains(&d) {
                        continue;
                    }
                    let src = clamped(grid, i, j, CF[d]);
                    f[d] = a_field[src] + CF[d][0] * bvec[src][0] + CF[d][1] * bvec[src][1];
                    if thermal {
                        g[d] = h[src];
                    }
                }
                let n = closure::unit(b.normal);
                let mut kappa_coupling = 0.0;
                let mut thermal_mult = 0.0;
                if let Some(tc) = &thermal_closures.0[k] {
                    let extra = [tc.source_scale * derivs.jt[b.node]; Q];
                    let sol = tc.solve(&g, &extra);
                    g = sol.values;
                    thermal_mult = sol.multipliers[0];
                    if !matches!(b.thermal, ThermalKind::Temperature { .. }) {
                        kappa_coupling = thermal_mult * state.t[b.node];
                    }
                }
                let jr = self.hydro[k].source_scale * derivs.jr[b.node];
                let ju = derivs.ju[b.node];
                let extra: [f64; Q] = std::array::from_fn(|d| {
                    let c = CF[d];
                    jr + c[0] * ju[0] + c[1] * ju[1] - kappa_coupling * (c[0] * n[0] + c[1] * n[1])
                });
                let sol = self.hydro[k].solve(&f, &extra);
                (sol.values, g, [sol.multipliers[0], sol.multipliers[1]], thermal_mult)
            })
            .collect();

        for (k, (f, g, hm, tm)) in results.into_iter().enumerate() {
            let node = self.boundary.nodes[k].node;
            let (mut rho, mut u, mut s, mut t, mut q) = (0.0, [0.0; 2], [[0.0; 2]; 2], 0.0, [0.0; 2]);
            for d in 0..Q {
                let c = CF[d];
                let wf = W[d] * f[d];
                rho += wf;
                for x in 0..2 {
                    u[x] += c[x] * wf;
                    for y in 0..2 {
                        s[x][y] += c[x] * c[y] * wf;
                    }
                }
                let wg = W[d] * g[d];
                t += wg;
                q[0] += c[0] * wg;
                q[1] += c[1] * wg;
            }
            next.rho[node] = rho;
            next.u[node] = u;
            next.s[node] = s;
            next.t[node] = t;
            next.q[node] = q;
            mult.hydro[k] = hm;
            mult.thermal[k] = tm;
        }

    }

    pub fn zero_multipliers(&self) -> BoundaryMultipliers {
        BoundaryMultipliers {
            hydro: vec![[0.0; 2]; self.boundary.nodes.len()],
            thermal: vec![0.0; self.boundary.nodes.len()],
        }
    }

    /// Steady adjoint for a frozen forward state, iterated from `init` or zero.
    pub fn steady(
        &self,
        state: &StateFields,
        derivs: &StateDerivatives,
        init: Option<AdjointState>,
        opts: &SteadyOptions,
    ) -> Result<(AdjointState, BoundaryMultipliers, SolveStats)> {
        let tc = self.thermal_closures(state)?;
        let mut cur = init.unwrap_or_else(|| AdjointState::zeros(self.grid));
        let mut next = cur.clone();
        let mut mult = self.zero_multipliers();
        let mut residual = f64::INFINITY;
        // Without a pressure outlet ρ̃ is only fixed up to the constant mode
        // (ρ̃ + C, s̃ + Cδ/3), which the sources may excite; it is removed each step.
        let closed = self.boundary.outlet_nodes().next().is_none();
        for it in 1..=opts.max_steps {
            self.step(&cur, state, derivs, &tc, &mut next, &mut mult, it)?;
            if closed && self.mode == AdjointBoundary::Closure {
                remove_constant_mode(&mut next, &cur, self.mode);
            }
            residual = next.max_change(&cur);
            std::mem::swap(&mut cur, &mut next);
            if residual < opts.tol {
                return Ok((cur, mult, SolveStats { steps: it, residual }));
            }
        }
        Err(Error::NotConverged {
            solver: "alks",
            steps: opts.max_steps,
            residual,
        })
    }

    /// Marches the adjoint from the terminal level down to level 1. For each level
    /// `m = N..1`, `derivs(m, state)` supplies the objective derivatives and
    /// `visit(m, state, adjoint)` receives the forward and adjoint fields.
    pub fn unsteady(
        &self,
        history: &StateHistory,
        mut derivs: impl FnMut(usize, &StateFields) -> StateDerivatives,
        mut visit: impl FnMut(usize, &StateFields, &AdjointState),
    ) -> Result<AdjointState> {
        if history.t.is_some() != self.physics.thermal {
            return Err(Error::Config("history thermal fields do not match physics".into()));
        }
        let mut cur = AdjointState::zeros(self.grid);
        let mut next = cur.clone();
        let mut mult = self.zero_multipliers();
        for level in (1..history.levels()).rev() {
            let state = history.state_at(self.grid, self.boundary, level);
            let tc = self.thermal_closures(&state)?;
            let d = derivs(level, &state);
            self.step(&cur, &state, &d, &tc, &mut next, &mut mult, level)?;
            std::mem::swap(&mut cur, &mut next);
            visit(level, &state, &cur);
        }
        Ok(cur)
    }
}

fn remove_constant_mode(next: &mut AdjointState, prev: &AdjointState, mode: AdjointBoundary) {
    let n = next.rho.len() as f64;
    let shift = next.rho.iter().zip(&prev.rho).map(|(a, b)| a - b).sum::<f64>() / n;
    next.rho.par_iter_mut().for_each(|r| *r -= shift);
    match mode {
        AdjointBoundary::Transpose => next.src.par_iter_mut().for_each(|r| *r -= shift),
        AdjointBoundary::Closure => next.s.par_iter_mut().for_each(|s| {
            s[0][0] -= shift / 3.0;
            s[1][1] -= shift / 3.0;
        }),
    }
}

fn symmetrized(s: &[[[f64; 2]; 2]]) -> TensorField {
    s.par_iter()
        .map(|s| [[2.0 * s[0][0], s[0][1] + s[1][0]], [s[0][1] + s[1][0], 2.0 * s[1][1]]])
        .collect()
}

/// `g̃eq = T̃ + 3 q̃·u + Dᵀ(B q̃)` with the transposed gradient stencil, which
/// reduces to `-B ∂q̃_α/∂x_α - q̃·∇B` away from the perimeter.
fn thermal_pull(grid: &Grid, t: &[f64], q: &[[f64; 2]], u: &[[f64; 2]], b: &[f64]) -> ScalarField {
    let bq: VectorField = q.iter().zip(b).map(|(q, b)| [b * q[0], b * q[1]]).collect();
    let mut out = vector_gradient_transpose(grid, &bq);
    out.par_iter_mut().enumerate().for_each(|(n, h)| {
        *h += t[n] + 3.0 * (q[n][0] * u[n][0] + q[n][1] * u[n][1]);
    });
    out
}

// Node at x + c, clamped onto the grid (tangential off-grid directions at corners).
fn clamped(grid: &Grid, i: usize, j: usize, c: [f64; 2]) -> usize {
    let ii = (i as i64 + c[0] as i64).clamp(0, grid.nx as i64 - 1) as usize;
    let jj = (j as i64 + c[1] as i64).clamp(0, grid.ny as i64 - 1) as usize;
    grid.index(ii, jj)
}
