//! Case descriptions: a serializable [`CaseConfig`] plus builders for the
//! verification setups and the four benchmark problems.

use serde::{Deserialize, Serialize};

use crate::alks::AdjointBoundary;
use crate::design::{FilterChain, FilterParams, InterpolationParams};
use crate::lattice::{Grid, ScalarField};
use crate::lks::boundary::{BoundarySpec, HydroKind, HydroSegment, Modulation, Side, ThermalKind, ThermalSegment};
use crate::lks::{PhysicsParams, SteadyOptions};
use crate::optimizer::{Constraint, Continuation, ContinuationParam, OptimizationConfig, Rule};
use crate::problem::{Horizon, Problem};
use crate::sensitivity::{DesignFunctional, StateFunctional};
use crate::{Error, Result};

pub const CASE_NAMES: [&str; 7] = [
    "verify_ns",
    "verify_forced",
    "verify_natural",
    "pipe_bend",
    "double_pipe",
    "heat_exchanger",
    "heatsink",
];

const NU: f64 = 0.1;

/// Nondimensional groups and the scales they were derived from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Similarity {
    /// Characteristic length in lattice units.
    pub length: f64,
    /// Peak inlet speed.
    #[serde(default)]
    pub u0: f64,
    #[serde(default)]
    pub re: Option<f64>,
    #[serde(default)]
    pub pr: Option<f64>,
    #[serde(default)]
    pub ra: Option<f64>,
    #[serde(default = "one")]
    pub delta_t: f64,
}

fn one() -> f64 {
    1.0
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

impl Similarity {
    /// `Re = L u0 / ν`, `Pr = ν / K_f`, `Ra = |gβ| ΔT L³ / (ν K_f)`.
    pub fn check(&self, physics: &PhysicsParams, interp: &InterpolationParams) -> Result<()> {
        let nu = physics.nu;
        if let Some(re) = self.re {
            if !close(re, self.length * self.u0 / nu) {
                return Err(Error::Config(format!("Re = {re} does not match L u0 / nu")));
            }
        }
        if let Some(pr) = self.pr {
            if !close(pr, nu / interp.k_f) {
                return Err(Error::Config(format!("Pr = {pr} does not match nu / k_f")));
            }
        }
        if let Some(ra) = self.ra {
            let g = physics.buoyancy[0].hypot(physics.buoyancy[1]);
            if !close(ra, g * self.delta_t * self.length.powi(3) / (nu * interp.k_f)) {
                return Err(Error::Config(format!("Ra = {ra} does not match the buoyancy coefficient")));
            }
        }
        Ok(())
    }
}

/// Inclusive node rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRect {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl NodeRect {
    pub fn contains(&self, i: usize, j: usize) -> bool {
        (self.x0..=self.x1).contains(&i) && (self.y0..=self.y1).contains(&j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Patch {
    Circle { cx: f64, cy: f64, r: f64, value: f64 },
    Rect { rect: NodeRect, value: f64 },
}

impl Patch {
    fn covers(&self, i: usize, j: usize) -> Option<f64> {
        match *self {
            Patch::Circle { cx, cy, r, value } => {
                ((i as f64 - cx).hypot(j as f64 - cy) <= r).then_some(value)
            }
            Patch::Rect { rect, value } => rect.contains(i, j).then_some(value),
        }
    }
}

/// Design domain and initial γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    /// Design nodes; intersected with the grid interior. `None` means the whole interior.
    #[serde(default)]
    pub region: Option<NodeRect>,
    /// Initial γ on design nodes.
    pub init: f64,
    /// γ on non-design nodes.
    #[serde(default = "one")]
    pub outside: f64,
    /// Overrides of the initial γ, applied in order on design nodes.
    #[serde(default)]
    pub patches: Vec<Patch>,
}

/// Sampling line for sensitivity comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SampleLine {
    Row { j: usize },
    Column { i: usize },
}

impl SampleLine {
    pub fn nodes(&self, grid: &Grid) -> Vec<usize> {
        match *self {
            SampleLine::Row { j } => (0..grid.nx).map(|i| grid.index(i, j)).collect(),
            SampleLine::Column { i } => (0..grid.ny).map(|j| grid.index(i, j)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub name: String,
    pub nx: usize,
    pub ny: usize,
    pub similarity: Similarity,
    pub physics: PhysicsParams,
    pub interpolation: InterpolationParams,
    pub boundary: BoundarySpec,
    pub horizon: Horizon,
    #[serde(default)]
    pub forward: SteadyOptions,
    #[serde(default)]
    pub adjoint: SteadyOptions,
    #[serde(default)]
    pub adjoint_boundary: AdjointBoundary,
    pub design: DesignSpec,
    #[serde(default)]
    pub filter: Option<FilterParams>,
    pub objective: StateFunctional,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
    #[serde(default)]
    pub optimizer: OptimizationConfig,
    #[serde(default)]
    pub sampling: Option<SampleLine>,
}

/// Numeric overrides accepted by [`build_case`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseOverrides {
    /// Grid width in nodes; the height follows the case aspect ratio.
    #[serde(default)]
    pub nx: Option<usize>,
    #[serde(default)]
    pub re: Option<f64>,
    /// Kinematic viscosity of the forced-flow cases; the inlet speed follows from `Re`.
    #[serde(default)]
    pub nu: Option<f64>,
    /// Horizon length of unsteady cases.
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub beta_bar: Option<f64>,
    /// Pressure-drop allowance factor of the heat exchanger.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub alpha_bar: Option<f64>,
    #[serde(default)]
    pub max_fraction: Option<f64>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
}

impl CaseConfig {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.nx, self.ny)
    }

    /// Static consistency checks.
    pub fn lint(&self) -> Result<()> {
        let grid = self.grid()?;
        self.physics.validate()?;
        self.interpolation.validate()?;
        self.optimizer.validate()?;
        self.boundary.lint(&grid)?;
        self.similarity.check(&self.physics, &self.interpolation)?;
        if let Some(f) = &self.filter {
            f.validate()?;
        }
        self.objective.check(&self.physics)?;
        for c in &self.constraints {
            match *c {
                Constraint::StateRelative { functional, .. } | Constraint::StateAbsolute { functional, .. } => {
                    functional.check(&self.physics)?
                }
                Constraint::Design { max_fraction, .. } => {
                    if !(max_fraction > 0.0 && max_fraction <= 1.0) {
                        return Err(Error::Config(format!("max_fraction must lie in (0, 1], got {max_fraction}")));
                    }
                }
            }
        }
        if let Horizon::Unsteady { steps: 0 } = self.horizon {
            return Err(Error::Config("unsteady horizon needs at least one step".into()));
        }
        let d = &self.design;
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(d.init) || !in_unit(d.outside) {
            return Err(Error::Config("design values must lie in [0, 1]".into()));
        }
        for p in &d.patches {
            let v = match *p {
                Patch::Circle { value, .. } | Patch::Rect { value, .. } => value,
            };
            if !in_unit(v) {
                return Err(Error::Config(format!("patch value {v} outside [0, 1]")));
            }
        }
        if let Some(r) = d.region {
            if r.x0 > r.x1 || r.y0 > r.y1 || r.x1 >= self.nx || r.y1 >= self.ny {
                return Err(Error::Config(format!("design region {r:?} outside the grid")));
            }
        }
        if self.mask(&grid).iter().all(|m| !m) {
            return Err(Error::Config("design region has no interior nodes".into()));
        }
        if let Some(line) = self.sampling {
            let ok = match line {
                SampleLine::Row { j } => j < self.ny,
                SampleLine::Column { i } => i < self.nx,
            };
            if !ok {
                return Err(Error::Config(format!("sampling line {line:?} outside the grid")));
            }
        }
        overlapping_segments(&self.boundary)
    }

    pub fn mask(&self, grid: &Grid) -> Vec<bool> {
        (0..grid.len())
            .map(|n| {
                let (i, j) = grid.coords(n);
                grid.is_interior(n) && self.design.region.is_none_or(|r| r.contains(i, j))
            })
            .collect()
    }

    /// Initial γ over the whole grid.
    pub fn initial_gamma(&self, grid: &Grid) -> ScalarField {
        let mask = self.mask(grid);
        (0..grid.len())
            .map(|n| {
                if !mask[n] {
                    return self.design.outside;
                }
                let (i, j) = grid.coords(n);
                self.design
                    .patches
                    .iter()
                    .fold(self.design.init, |g, p| p.covers(i, j).unwrap_or(g))
            })
            .collect()
    }

    /// Resolves the configuration into a problem and its initial raw design.
    pub fn build(&self) -> Result<(Problem, ScalarField)> {
        self.lint()?;
        let grid = self.grid()?;
        let boundary = self.boundary.resolve(&grid)?;
        let mask = self.mask(&grid);
        let gamma = self.initial_gamma(&grid);
        let filter = self.filter.map(|p| FilterChain::new(&grid, &mask, p));
        let problem = Problem {
            boundary,
            physics: self.physics,
            interp: self.interpolation,
            horizon: self.horizon,
            forward_opts: self.forward,
            adjoint_opts: self.adjoint,
            adjoint_boundary: self.adjoint_boundary,
            mask,
            fixed_gamma: gamma.clone(),
            filter,
            grid,
        };
        Ok((problem, gamma))
    }
}

fn overlapping_segments(spec: &BoundarySpec) -> Result<()> {
    for (a, sa) in spec.hydro.iter().enumerate() {
        for sb in &spec.hydro[a + 1..] {
            if sa.side == sb.side && sa.start <= sb.end && sb.start <= sa.end {
                return Err(Error::Config(format!(
                    "hydro segments overlap on {:?}: {}..={} and {}..={}",
                    sa.side, sa.start, sa.end, sb.start, sb.end
                )));
            }
        }
    }
    Ok(())
}

/// Node position of `frac` along an edge of `n` nodes.
fn at(frac: f64, n: usize) -> usize {
    (frac * (n - 1) as f64).round() as usize
}

fn segment(side: Side, start: usize, end: usize, kind: HydroKind) -> HydroSegment {
    HydroSegment { side, start, end, kind }
}

fn inlet(side: Side, start: usize, end: usize, peak: f64, modulation: Modulation) -> HydroSegment {
    segment(side, start, end, HydroKind::Inlet { peak, modulation })
}

fn outlet(side: Side, start: usize, end: usize) -> HydroSegment {
    segment(side, start, end, HydroKind::Outlet { pressure: 1.0 / 3.0 })
}

fn thermal(side: Side, start: usize, end: usize, kind: ThermalKind) -> ThermalSegment {
    ThermalSegment { side, start, end, kind }
}

fn flow_similarity(length: f64, re: f64) -> Similarity {
    viscous_similarity(length, re, NU)
}

fn viscous_similarity(length: f64, re: f64, nu: f64) -> Similarity {
    Similarity {
        length,
        u0: re * nu / length,
        re: Some(re),
        pr: None,
        ra: None,
        delta_t: 1.0,
    }
}

fn non_thermal_interp(alpha_bar: f64) -> InterpolationParams {
    InterpolationParams {
        alpha_bar,
        ..InterpolationParams::default()
    }
}

/// Builds a named case with optional numeric overrides.
pub fn build_case(name: &str, ov: &CaseOverrides) -> Result<CaseConfig> {
    let refuse = |what: &str, set: bool| -> Result<()> {
        if set {
            Err(Error::Config(format!("override `{what}` does not apply to case {name}")))
        } else {
            Ok(())
        }
    };
    let mut cfg = match name {
        "verify_ns" | "verify_forced" => {
            refuse("steps", ov.steps.is_some())?;
            refuse("eta", ov.eta.is_some())?;
            refuse("max_fraction", ov.max_fraction.is_some())?;
            refuse("beta_bar", name == "verify_ns" && ov.beta_bar.is_some())?;
            refuse("nu", ov.nu.is_some())?;
            verify_channel(name == "verify_forced", ov)
        }
        "verify_natural" => {
            refuse("re", ov.re.is_some())?;
            refuse("nu", ov.nu.is_some())?;
            refuse("steps", ov.steps.is_some())?;
            refuse("beta_bar", ov.beta_bar.is_some())?;
            refuse("eta", ov.eta.is_some())?;
            refuse("max_fraction", ov.max_fraction.is_some())?;
            verify_natural(ov)
        }
        "pipe_bend" => {
            refuse("steps", ov.steps.is_some())?;
            refuse("beta_bar", ov.beta_bar.is_some())?;
            refuse("eta", ov.eta.is_some())?;
            pipe_bend(ov)
        }
        "double_pipe" => {
            refuse("beta_bar", ov.beta_bar.is_some())?;
            refuse("eta", ov.eta.is_some())?;
            double_pipe(ov)
        }
        "heat_exchanger" => {
            refuse("steps", ov.steps.is_some())?;
            refuse("max_fraction", ov.max_fraction.is_some())?;
            heat_exchanger(ov)
        }
        "heatsink" => {
            refuse("re", ov.re.is_some())?;
            refuse("nu", ov.nu.is_some())?;
            refuse("beta_bar", ov.beta_bar.is_some())?;
            refuse("eta", ov.eta.is_some())?;
            heatsink(ov)
        }
        _ => {
            return Err(Error::Config(format!(
                "unknown case `{name}`; expected one of {}",
                CASE_NAMES.join(", ")
            )))
        }
    }?;
    if let Some(a) = ov.alpha_bar {
        cfg.interpolation.alpha_bar = a;
    }
    if let Some(n) = ov.max_iterations {
        cfg.optimizer.max_iterations = n;
    }
    cfg.lint()?;
    Ok(cfg)
}

fn check_size(n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(Error::Config(format!("grid width {n} below the minimum {min} for this case")));
    }
    Ok(())
}

// Finite differences of a steady functional need the forward state converged
// well below the perturbation effect.
const VERIFY_FORWARD: SteadyOptions = SteadyOptions {
    tol: 1e-14,
    max_steps: 2_000_000,
};
const VERIFY_ADJOINT: SteadyOptions = SteadyOptions {
    tol: 1e-12,
    max_steps: 2_000_000,
};

/// Channel through a square box with a low-γ disc in the middle.
fn verify_channel(forced: bool, ov: &CaseOverrides) -> Result<CaseConfig> {
    let n = ov.nx.unwrap_or(101);
    check_size(n, 13)?;
    let (lo, hi) = (at(0.33, n), at(0.67, n));
    let length = (n - 1) as f64 / 3.0;
    let mut sim = flow_similarity(length, ov.re.unwrap_or(1.0));
    let mid = (n - 1) as f64 / 2.0;
    let mut physics = PhysicsParams::default();
    let mut interp = non_thermal_interp(1.0);
    let mut boundary = BoundarySpec {
        hydro: vec![
            inlet(Side::Left, lo, hi, sim.u0, Modulation::Constant),
            outlet(Side::Right, lo, hi),
        ],
        thermal: vec![],
    };
    let objective = if forced {
        let pr = 6.0;
        physics.thermal = true;
        physics.heat_source = true;
        interp.k_f = NU / pr;
        interp.k_s = interp.k_f;
        interp.beta_bar = ov.beta_bar.unwrap_or(0.1);
        sim.pr = Some(pr);
        boundary
            .thermal
            .push(thermal(Side::Left, lo, hi, ThermalKind::Temperature { value: 0.0 }));
        StateFunctional::HeatExchange
    } else {
        StateFunctional::PressureDrop
    };
    Ok(CaseConfig {
        name: if forced { "verify_forced" } else { "verify_ns" }.into(),
        nx: n,
        ny: n,
        similarity: sim,
        physics,
        interpolation: interp,
        boundary,
        horizon: Horizon::Steady,
        forward: VERIFY_FORWARD,
        adjoint: VERIFY_ADJOINT,
        adjoint_boundary: AdjointBoundary::default(),
        design: DesignSpec {
            region: None,
            init: 0.9,
            outside: 1.0,
            patches: vec![Patch::Circle {
                cx: mid,
                cy: mid,
                r: (n - 1) as f64 / 6.0,
                value: 0.1,
            }],
        },
        filter: None,
        objective,
        constraints: vec![],
        optimizer: OptimizationConfig::default(),
        sampling: Some(SampleLine::Row { j: at(0.5, n) }),
    })
}

/// Closed cavity heated from a short bottom segment, cold on the other walls.
fn bottom_heated_cavity(nx: usize, ny: usize, ra: f64, pr: f64, q0: f64) -> (BoundarySpec, PhysicsParams, InterpolationParams, Similarity) {
    let length = (ny - 1) as f64;
    let k_f = NU / pr;
    let g = ra * NU * k_f / length.powi(3);
    let physics = PhysicsParams {
        nu: NU,
        thermal: true,
        buoyancy: [0.0, -g],
        t_ref: 0.0,
        heat_source: false,
    };
    let interp = InterpolationParams {
        k_f,
        k_s: 10.0 * k_f,
        ..InterpolationParams::default()
    };
    let w = (nx - 1) as f64;
    let centre = w / 2.0;
    let half = 2.0 * w / 140.0;
    let cold = ThermalKind::Temperature { value: 0.0 };
    let boundary = BoundarySpec {
        hydro: vec![],
        thermal: vec![
            thermal(Side::Left, 0, ny - 1, cold),
            thermal(Side::Right, 0, ny - 1, cold),
            thermal(Side::Top, 0, nx - 1, cold),
            thermal(
                Side::Bottom,
                (centre - half).round() as usize,
                (centre + half).round() as usize,
                ThermalKind::HeatFlux { flux: q0 },
            ),
        ],
    };
    let sim = Similarity {
        length,
        u0: 0.0,
        re: None,
        pr: Some(pr),
        ra: Some(ra),
        delta_t: 1.0,
    };
    (boundary, physics, interp, sim)
}

fn verify_natural(ov: &CaseOverrides) -> Result<CaseConfig> {
    let nx = ov.nx.unwrap_or(141);
    check_size(nx, 29)?;
    let ny = at(80.0 / 140.0, nx) + 1;
    let (boundary, physics, interp, sim) = bottom_heated_cavity(nx, ny, 2e5, 6.0, 1e-2);
    let rx = |f: f64| at(f / 140.0, nx);
    let ry = |f: f64| at(f / 80.0, ny);
    Ok(CaseConfig {
        name: "verify_natural".into(),
        nx,
        ny,
        similarity: sim,
        physics,
        interpolation: interp,
        boundary,
        horizon: Horizon::Steady,
        forward: VERIFY_FORWARD,
        adjoint: VERIFY_ADJOINT,
        adjoint_boundary: AdjointBoundary::default(),
        design: DesignSpec {
            region: Some(NodeRect {
                x0: rx(30.0),
                x1: rx(110.0),
                y0: ry(15.0),
                y1: ry(65.0),
            }),
            init: 0.9,
            outside: 1.0,
            patches: vec![Patch::Rect {
                rect: NodeRect {
                    x0: rx(50.0),
                    x1: rx(90.0),
                    y0: ry(27.5),
                    y1: ry(52.5),
                },
                value: 0.1,
            }],
        },
        filter: None,
        objective: StateFunctional::BoundaryTemperature,
        constraints: vec![],
        optimizer: OptimizationConfig::default(),
        sampling: Some(SampleLine::Row { j: at(0.5, ny) }),
    })
}

fn flow_case(
    name: &str,
    n: usize,
    sim: Similarity,
    nu: f64,
    boundary: BoundarySpec,
    horizon: Horizon,
    max_fraction: f64,
) -> CaseConfig {
    CaseConfig {
        name: name.into(),
        nx: n,
        ny: n,
        similarity: sim,
        physics: PhysicsParams { nu, ..PhysicsParams::default() },
        interpolation: non_thermal_interp(1.0),
        boundary,
        horizon,
        forward: SteadyOptions::default(),
        adjoint: SteadyOptions::default(),
        adjoint_boundary: AdjointBoundary::default(),
        design: DesignSpec {
            region: None,
            init: max_fraction,
            outside: 1.0,
            patches: vec![],
        },
        filter: None,
        objective: match horizon {
            Horizon::Steady => StateFunctional::PressureDrop,
            Horizon::Unsteady { .. } => StateFunctional::EnergyLoss,
        },
        constraints: vec![Constraint::Design {
            functional: DesignFunctional::Volume,
            max_fraction,
        }],
        optimizer: OptimizationConfig::default(),
        sampling: None,
    }
}

fn pipe_bend(ov: &CaseOverrides) -> Result<CaseConfig> {
    let n = ov.nx.unwrap_or(101);
    check_size(n, 21)?;
    let (lo, hi) = (at(0.7, n), at(0.9, n));
    let nu = ov.nu.unwrap_or(NU);
    let sim = viscous_similarity((hi - lo) as f64, ov.re.unwrap_or(1.0), nu);
    let boundary = BoundarySpec {
        hydro: vec![
            inlet(Side::Left, lo, hi, sim.u0, Modulation::Constant),
            outlet(Side::Bottom, lo, hi),
        ],
        thermal: vec![],
    };
    Ok(flow_case("pipe_bend", n, sim, nu, boundary, Horizon::Steady, ov.max_fraction.unwrap_or(0.25)))
}

fn double_pipe(ov: &CaseOverrides) -> Result<CaseConfig> {
    let n = ov.nx.unwrap_or(101);
    check_size(n, 25)?;
    let steps = ov.steps.unwrap_or(20_000);
    let period = steps as f64;
    let spans = [(at(0.17, n), at(0.33, n)), (at(0.67, n), at(0.83, n))];
    let nu = ov.nu.unwrap_or(NU);
    let sim = viscous_similarity((n - 1) as f64 / 6.0, ov.re.unwrap_or(1.0), nu);
    let boundary = BoundarySpec {
        hydro: vec![
            inlet(Side::Left, spans[0].0, spans[0].1, sim.u0, Modulation::Cos { period }),
            inlet(Side::Left, spans[1].0, spans[1].1, sim.u0, Modulation::Sin { period }),
            outlet(Side::Right, spans[0].0, spans[0].1),
            outlet(Side::Right, spans[1].0, spans[1].1),
        ],
        thermal: vec![],
    };
    Ok(flow_case(
        "double_pipe",
        n,
        sim,
        nu,
        boundary,
        Horizon::Unsteady { steps },
        ov.max_fraction.unwrap_or(0.33),
    ))
}

fn heat_exchanger(ov: &CaseOverrides) -> Result<CaseConfig> {
    let n = ov.nx.unwrap_or(201);
    check_size(n, 13)?;
    let (lo, hi) = (at(1.0 / 3.0, n), at(2.0 / 3.0, n));
    let pr = 6.0;
    let nu = ov.nu.unwrap_or(NU);
    let mut sim = viscous_similarity((n - 1) as f64 / 3.0, ov.re.unwrap_or(100.0), nu);
    sim.pr = Some(pr);
    let k_f = nu / pr;
    Ok(CaseConfig {
        name: "heat_exchanger".into(),
        nx: n,
        ny: n,
        similarity: sim,
        physics: PhysicsParams {
            nu,
            thermal: true,
            heat_source: true,
            ..PhysicsParams::default()
        },
        interpolation: InterpolationParams {
            alpha_bar: 1.0,
            q_alpha: 0.01,
            q_beta: 0.1,
            q_k: 1.0,
            beta_bar: ov.beta_bar.unwrap_or(0.1),
            k_f,
            k_s: k_f,
        },
        boundary: BoundarySpec {
            hydro: vec![
                inlet(Side::Left, lo, hi, sim.u0, Modulation::Constant),
                outlet(Side::Right, lo, hi),
            ],
            thermal: vec![thermal(Side::Left, lo, hi, ThermalKind::Temperature { value: 0.0 })],
        },
        horizon: Horizon::Steady,
        forward: SteadyOptions::default(),
        adjoint: SteadyOptions::default(),
        adjoint_boundary: AdjointBoundary::default(),
        design: DesignSpec {
            region: None,
            init: 1.0,
            outside: 1.0,
            patches: vec![],
        },
        filter: None,
        objective: StateFunctional::HeatExchange,
        constraints: vec![Constraint::StateRelative {
            functional: StateFunctional::PressureDrop,
            factor: ov.eta.unwrap_or(10.0),
        }],
        optimizer: OptimizationConfig {
            max_iterations: 2000,
            continuation: vec![Continuation {
                param: ContinuationParam::QAlpha,
                rule: Rule::Geometric {
                    start: 0.01,
                    end: 1.0,
                    stages: 5,
                },
                every: 400,
                on_stall: false,
            }],
            ..OptimizationConfig::default()
        },
        sampling: None,
    })
}

fn heatsink(ov: &CaseOverrides) -> Result<CaseConfig> {
    let nx = ov.nx.unwrap_or(141);
    check_size(nx, 29)?;
    let ny = at(160.0 / 140.0, nx) + 1;
    let (boundary, physics, interp, sim) = bottom_heated_cavity(nx, ny, 2e5, 6.0, 1e-2);
    let rx = |f: f64| at(f / 140.0, nx);
    let ry = |f: f64| at(f / 160.0, ny);
    Ok(CaseConfig {
        name: "heatsink".into(),
        nx,
        ny,
        similarity: sim,
        physics,
        interpolation: interp,
        boundary,
        horizon: Horizon::Unsteady {
            steps: ov.steps.unwrap_or(50_000),
        },
        forward: SteadyOptions::default(),
        adjoint: SteadyOptions::default(),
        adjoint_boundary: AdjointBoundary::default(),
        design: DesignSpec {
            region: Some(NodeRect {
                x0: rx(20.0),
                x1: rx(120.0),
                y0: 1,
                y1: ry(120.0),
            }),
            init: 0.5,
            outside: 1.0,
            patches: vec![],
        },
        filter: Some(FilterParams {
            radius: 2.4,
            beta_h: 1.0,
            eta_h: 0.5,
        }),
        objective: StateFunctional::BoundaryTemperature,
        constraints: vec![Constraint::Design {
            functional: DesignFunctional::SolidArea,
            max_fraction: ov.max_fraction.unwrap_or(0.5),
        }],
        optimizer: OptimizationConfig {
            max_iterations: 600,
            continuation: vec![Continuation {
                param: ContinuationParam::BetaH,
                rule: Rule::Doubling { start: 1.0, max: 32.0 },
                every: 100,
                on_stall: true,
            }],
            ..OptimizationConfig::default()
        },
        sampling: None,
    })
}
