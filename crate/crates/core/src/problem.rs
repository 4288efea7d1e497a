//! A fully resolved optimization problem: geometry, physics, design mask and
//! the forward/adjoint pipeline that turns a raw design into values and gradients.

use serde::{Deserialize, Serialize};

use crate::alks::{AdjointBoundary, AdjointState, Alks, StateDerivatives};
use crate::design::{DesignField, FilterChain, InterpolationParams};
use crate::lattice::{Grid, ScalarField};
use crate::lks::boundary::ResolvedBoundary;
use crate::lks::{Lks, Materials, PhysicsParams, StateFields, StateHistory, SteadyOptions};
use crate::sensitivity::{add_level_derivatives, add_level_sensitivity, level_value, LevelContext, StateFunctional};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Horizon {
    Steady,
    /// `steps` lattice steps from the quiescent state.
    Unsteady { steps: usize },
}

/// Forward solution: one steady state or a recorded history.
#[derive(Debug, Clone)]
pub enum Forward {
    Steady(StateFields),
    Unsteady(StateHistory),
}

impl Forward {
    pub fn final_state(&self, grid: &Grid, boundary: &ResolvedBoundary) -> StateFields {
        match self {
            Forward::Steady(s) => s.clone(),
            Forward::Unsteady(h) => h.state_at(grid, boundary, h.levels() - 1),
        }
    }
}

/// Weighted sum of state functionals, `Σ w_k J_k`.
pub type Combination = [(f64, StateFunctional)];

#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Grid,
    pub boundary: ResolvedBoundary,
    pub physics: PhysicsParams,
    pub interp: InterpolationParams,
    pub horizon: Horizon,
    pub forward_opts: SteadyOptions,
    pub adjoint_opts: SteadyOptions,
    pub adjoint_boundary: AdjointBoundary,
    pub mask: Vec<bool>,
    /// γ used outside the design mask (and as the template for new designs).
    pub fixed_gamma: ScalarField,
    pub filter: Option<FilterChain>,
}

impl Problem {
    /// Builds a design from raw values on the design nodes; non-design nodes keep `fixed_gamma`.
    pub fn design(&self, raw: &[f64]) -> DesignField {
        let mut gamma = self.fixed_gamma.clone();
        for (n, g) in gamma.iter_mut().enumerate() {
            if self.mask[n] {
                *g = raw[n];
            }
        }
        let mut d = DesignField::unfiltered(gamma.clone(), self.mask.clone());
        d.update(gamma, self.filter.as_ref());
        d
    }

    pub fn materials(&self, design: &DesignField) -> Result<Materials> {
        Materials::from_gamma(&self.grid, &design.gamma_projected, &self.interp)
    }

    pub fn forward(&self, mat: &Materials, warm: Option<StateFields>) -> Result<Forward> {
        let lks = Lks::new(&self.grid, &self.boundary, &self.physics, mat);
        Ok(match self.horizon {
            Horizon::Steady => Forward::Steady(lks.steady(warm, &self.forward_opts)?.0),
            Horizon::Unsteady { steps } => Forward::Unsteady(lks.unsteady(steps, true)?),
        })
    }

    fn time_weight(&self, kind: StateFunctional) -> f64 {
        match (self.horizon, kind) {
            (Horizon::Unsteady { steps }, StateFunctional::BoundaryTemperature) if steps > 0 => 1.0 / steps as f64,
            _ => 1.0,
        }
    }

    fn ctx<'a>(&'a self, mat: &'a Materials, kind: StateFunctional) -> LevelContext<'a> {
        LevelContext {
            grid: &self.grid,
            boundary: &self.boundary,
            materials: mat,
            time_weight: self.time_weight(kind),
        }
    }

    /// Functional value; unsteady values sum levels `1..=N`.
    pub fn value(&self, kind: StateFunctional, mat: &Materials, fwd: &Forward) -> f64 {
        let ctx = self.ctx(mat, kind);
        match fwd {
            Forward::Steady(s) => level_value(kind, &ctx, s),
            Forward::Unsteady(h) => (1..h.levels())
                .map(|m| level_value(kind, &ctx, &h.state_at(&self.grid, &self.boundary, m)))
                .sum(),
        }
    }

    fn derivatives(&self, combo: &Combination, mat: &Materials, state: &StateFields) -> StateDerivatives {
        let mut d = StateDerivatives::zeros(&self.grid);
        for &(w, kind) in combo {
            add_level_derivatives(kind, &self.ctx(mat, kind), state, w, &mut d);
        }
        d
    }

    fn heat_exchange_weight(&self, combo: &Combination) -> f64 {
        combo
            .iter()
            .filter(|(_, k)| *k == StateFunctional::HeatExchange)
            .map(|&(w, k)| w * self.time_weight(k))
            .sum()
    }

    /// Sensitivity of `Σ w_k J_k` with respect to the projected γ (zero off the mask).
    /// Returns the steady adjoint as well, for warm starts.
    pub fn projected_gradient(
        &self,
        combo: &Combination,
        mat: &Materials,
        fwd: &Forward,
        warm: Option<AdjointState>,
    ) -> Result<(ScalarField, Option<AdjointState>)> {
        let alks = Alks::new(&self.grid, &self.boundary, &self.physics, mat)?.with_mode(self.adjoint_boundary);
        let mut sens = vec![0.0; self.grid.len()];
        let hx = self.heat_exchange_weight(combo);
        let ctx = self.ctx(mat, StateFunctional::PressureDrop);
        match fwd {
            Forward::Steady(state) => {
                let d = self.derivatives(combo, mat, state);
                let (adj, _, _) = alks.steady(state, &d, warm, &self.adjoint_opts)?;
                add_level_sensitivity(hx, &ctx, &self.physics, state, &adj, &self.mask, &mut sens);
                Ok((sens, Some(adj)))
            }
            Forward::Unsteady(hist) => {
                alks.unsteady(
                    hist,
                    |_, s| self.derivatives(combo, mat, s),
                    |_, s, adj| add_level_sensitivity(hx, &ctx, &self.physics, s, adj, &self.mask, &mut sens),
                )?;
                Ok((sens, None))
            }
        }
    }

    /// Maps a sensitivity with respect to the projected γ onto the raw design.
    pub fn to_raw(&self, design: &DesignField, sens_projected: &[f64]) -> ScalarField {
        match &self.filter {
            Some(chain) => chain.transpose(&design.gamma_raw, sens_projected),
            None => sens_projected
                .iter()
                .zip(&self.mask)
                .map(|(s, m)| if *m { *s } else { 0.0 })
                .collect(),
        }
    }

    /// Sensitivity with respect to the raw design variables.
    pub fn gradient(
        &self,
        combo: &Combination,
        design: &DesignField,
        mat: &Materials,
        fwd: &Forward,
        warm: Option<AdjointState>,
    ) -> Result<(ScalarField, Option<AdjointState>)> {
        let (s, adj) = self.projected_gradient(combo, mat, fwd, warm)?;
        Ok((self.to_raw(design, &s), adj))
    }
}
