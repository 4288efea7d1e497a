//! Design update loop: MMA on the raw design variables with parameter continuation.

pub mod mma;
pub mod schedule;

use serde::{Deserialize, Serialize};

use crate::alks::AdjointState;
use crate::design::DesignField;
use crate::lks::StateFields;
use crate::problem::{Forward, Problem};
use crate::sensitivity::{design_gradient, design_value, DesignFunctional, StateFunctional};
use crate::{Error, Result, ScalarField};
pub use mma::{Mma, MmaParams};
pub use schedule::{Continuation, ContinuationParam, Rule, ScheduleState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizationConfig {
    pub max_iterations: usize,
    /// Stall threshold on `max |Δγ|`.
    pub change_tol: f64,
    /// Consecutive stalled iterations that count as convergence.
    pub stable_iterations: usize,
    #[serde(default)]
    pub mma: MmaParams,
    #[serde(default)]
    pub continuation: Vec<Continuation>,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        Self {
            max_iterations: 300,
            change_tol: 1e-3,
            stable_iterations: 5,
            mma: MmaParams::default(),
            continuation: Vec::new(),
        }
    }
}

impl OptimizationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.stable_iterations == 0 || !(self.change_tol > 0.0) {
            return Err(Error::Config("optimizer iteration settings must be positive".into()));
        }
        let m = &self.mma;
        if !(m.move_limit > 0.0 && m.move_limit <= 1.0 && m.asyinit > 0.0 && m.c_penalty > 0.0) {
            return Err(Error::Config(format!("invalid MMA parameters {m:?}")));
        }
        self.continuation.iter().try_for_each(Continuation::validate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Constraint {
    /// `G(γ) ≤ max_fraction · |D|`.
    Design {
        functional: DesignFunctional,
        max_fraction: f64,
    },
    /// `J(U) ≤ factor · J(U) at the initial design`.
    StateRelative {
        functional: StateFunctional,
        factor: f64,
    },
    /// `J(U) ≤ bound`.
    StateAbsolute {
        functional: StateFunctional,
        bound: f64,
    },
}

impl Constraint {
    pub fn label(&self) -> String {
        match self {
            Constraint::Design { functional, .. } => format!("{functional:?}"),
            Constraint::StateRelative { functional, .. } | Constraint::StateAbsolute { functional, .. } => {
                format!("{functional:?}")
            }
        }
    }
}

/// One row of the optimization history.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    /// Raw constraint values `G_i`.
    pub constraints: Vec<f64>,
    /// Bounds the constraints were normalized by.
    pub bounds: Vec<f64>,
    /// `max |Δγ|` of the update taken after this iteration.
    pub change: f64,
    pub q_alpha: f64,
    pub beta_h: Option<f64>,
    /// Continuation events triggered at the end of this iteration.
    pub events: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub design: DesignField,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
}

/// Progress hook; gets each finished trace row, the design it was evaluated at and its forward solution.
pub trait Observer {
    fn iteration(&mut self, _row: &TraceRow, _design: &DesignField, _forward: &Forward) -> Result<()> {
        Ok(())
    }
}

impl Observer for () {}

struct Evaluation {
    objective: f64,
    objective_grad: ScalarField,
    constraints: Vec<f64>,
    constraint_grads: Vec<ScalarField>,
}

/// Drives the outer loop; `problem` is mutated by continuation (q_α, β_H).
pub fn optimize(
    problem: &mut Problem,
    objective: StateFunctional,
    constraints: &[Constraint],
    init_raw: &[f64],
    cfg: &OptimizationConfig,
    observer: &mut dyn Observer,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    objective.check(&problem.physics)?;
    let vars: Vec<usize> = (0..problem.grid.len()).filter(|&n| problem.mask[n]).collect();
    if vars.is_empty() {
        return Err(Error::Config("design mask is empty".into()));
    }
    let mut schedules: Vec<ScheduleState> = cfg.continuation.iter().copied().map(ScheduleState::new).collect();
    for s in &schedules {
        apply_param(problem, s)?;
    }

    let mut raw = init_raw.to_vec();
    let x0: Vec<f64> = vars.iter().map(|&n| raw[n]).collect();
    let mut mma = Mma::new(cfg.mma, &x0, vec![0.0; vars.len()], vec![1.0; vars.len()], constraints.len());

    let mut warm_state: Option<StateFields> = None;
    let mut warm_adj: Vec<Option<AdjointState>> = vec![None; constraints.len() + 1];
    let mut bounds: Vec<f64> = Vec::new();
    let mut scale = 1.0;
    let mut trace = Vec::new();
    let mut stalled = 0;
    let mut converged = false;
    let mut design = problem.design(&raw);

    for iteration in 1..=cfg.max_iterations {
        design = problem.design(&raw);
        let mat = problem.materials(&design)?;
        let fwd = problem.forward(&mat, warm_state.take())?;
        let ev = evaluate(problem, objective, constraints, &design, &mat, &fwd, &mut warm_adj)?;
        if iteration == 1 {
            scale = if ev.objective.abs() > 0.0 { ev.objective.abs() } else { 1.0 };
            bounds = constraints
                .iter()
                .zip(&ev.constraints)
                .map(|(c, &g0)| match *c {
                    Constraint::Design { max_fraction, .. } => max_fraction * vars.len() as f64,
                    Constraint::StateRelative { factor, .. } => factor * g0,
                    Constraint::StateAbsolute { bound, .. } => bound,
                })
                .collect();
            if let Some(b) = bounds.iter().find(|b| !(b.abs() > 0.0)) {
                return Err(Error::Config(format!("constraint bound must be nonzero, got {b}")));
            }
        }

        let df0: Vec<f64> = vars.iter().map(|&n| ev.objective_grad[n] / scale).collect();
        let fval: Vec<f64> = ev.constraints.iter().zip(&bounds).map(|(g, b)| g / b - 1.0).collect();
        let dfdx: Vec<Vec<f64>> = ev
            .constraint_grads
            .iter()
            .zip(&bounds)
            .map(|(grad, b)| vars.iter().map(|&n| grad[n] / b).collect())
            .collect();
        let x: Vec<f64> = vars.iter().map(|&n| raw[n]).collect();
        let xn = mma.update(&x, &df0, &fval, &dfdx);
        let change = x.iter().zip(&xn).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));

        stalled = if change < cfg.change_tol { stalled + 1 } else { 0 };
        let is_stalled = stalled >= cfg.stable_iterations;
        let all_done = schedules.iter().all(|s| s.done());
        let mut row = TraceRow {
            iteration,
            objective: ev.objective,
            constraints: ev.constraints,
            bounds: bounds.clone(),
            change,
            q_alpha: problem.interp.q_alpha,
            beta_h: problem.filter.as_ref().map(|f| f.params.beta_h),
            events: Vec::new(),
        };
        if is_stalled && all_done {
            converged = true;
        }
        if !converged {
            for s in schedules.iter_mut() {
                if s.advance(iteration, is_stalled) {
                    apply_param(problem, s)?;
                    row.events.push(format!("{:?}={}", s.spec.param, s.value()));
                    stalled = 0;
                }
            }
            for (n, v) in vars.iter().zip(&xn) {
                raw[*n] = *v;
            }
        }
        observer.iteration(&row, &design, &fwd)?;
        trace.push(row);
        if let Forward::Steady(s) = fwd {
            warm_state = Some(s);
        }
        if converged {
            break;
        }
    }
    Ok(OptimizationResult {
        design,
        trace,
        converged,
    })
}

fn apply_param(problem: &mut Problem, s: &ScheduleState) -> Result<()> {
    match s.spec.param {
        ContinuationParam::QAlpha => problem.interp.q_alpha = s.value(),
        ContinuationParam::BetaH => match problem.filter.as_mut() {
            Some(f) => f.set_beta(s.value()),
            None => return Err(Error::Config("beta_h continuation needs a filter".into())),
        },
    }
    Ok(())
}

fn evaluate(
    problem: &Problem,
    objective: StateFunctional,
    constraints: &[Constraint],
    design: &DesignField,
    mat: &crate::Materials,
    fwd: &Forward,
    warm_adj: &mut [Option<AdjointState>],
) -> Result<Evaluation> {
    let mut state_grad = |k: usize, f: StateFunctional| -> Result<(f64, ScalarField)> {
        let v = problem.value(f, mat, fwd);
        let (g, adj) = problem.gradient(&[(1.0, f)], design, mat, fwd, warm_adj[k].take())?;
        warm_adj[k] = adj;
        Ok((v, g))
    };
    let (objective, objective_grad) = state_grad(0, objective)?;
    let mut values = Vec::new();
    let mut grads = Vec::new();
    for (k, c) in constraints.iter().enumerate() {
        let (v, g) = match *c {
            Constraint::Design { functional, .. } => {
                let v = design_value(functional, &design.gamma_projected, &design.mask);
                let g = problem.to_raw(design, &design_gradient(functional, &design.mask));
                (v, g)
            }
            Constraint::StateRelative { functional, .. } | Constraint::StateAbsolute { functional, .. } => {
                functional.check(&problem.physics)?;
                state_grad(k + 1, functional)?
            }
        };
        values.push(v);
        grads.push(g);
    }
    Ok(Evaluation {
        objective,
        objective_grad,
        constraints: values,
        constraint_grads: grads,
    })
}
