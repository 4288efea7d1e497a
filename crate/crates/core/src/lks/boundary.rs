//! Boundary segment declarations and their per-node resolution.

use serde::{Deserialize, Serialize};

use crate::lattice::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub fn normal(self) -> [i32; 2] {
        match self {
            Side::Left => [-1, 0],
            Side::Right => [1, 0],
            Side::Bottom => [0, -1],
            Side::Top => [0, 1],
        }
    }

    fn len(self, grid: &Grid) -> usize {
        match self {
            Side::Left | Side::Right => grid.ny,
            Side::Bottom | Side::Top => grid.nx,
        }
    }

    fn node(self, grid: &Grid, s: usize) -> usize {
        match self {
            Side::Left => grid.index(0, s),
            Side::Right => grid.index(grid.nx - 1, s),
            Side::Bottom => grid.index(s, 0),
            Side::Top => grid.index(s, grid.ny - 1),
        }
    }
}

/// Time modulation of an inlet profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Modulation {
    #[default]
    Constant,
    Cos {
        period: f64,
    },
    Sin {
        period: f64,
    },
}

impl Modulation {
    pub fn factor(&self, t: f64) -> f64 {
        match *self {
            Modulation::Constant => 1.0,
            Modulation::Cos { period } => (2.0 * std::f64::consts::PI * t / period).cos(),
            Modulation::Sin { period } => (2.0 * std::f64::consts::PI * t / period).sin(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HydroKind {
    Wall,
    /// Parabolic inflow spanning the segment, peak speed `peak` directed into the domain.
    Inlet {
        peak: f64,
        #[serde(default)]
        modulation: Modulation,
    },
    /// Prescribed pressure with zero tangential velocity.
    Outlet {
        pressure: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ThermalKind {
    Temperature { value: f64 },
    /// Heat entering the domain per unit boundary length.
    HeatFlux { flux: f64 },
    Adiabatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HydroSegment {
    pub side: Side,
    /// Inclusive node range along the side (y for left/right, x for bottom/top).
    pub start: usize,
    pub end: usize,
    pub kind: HydroKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalSegment {
    pub side: Side,
    pub start: usize,
    pub end: usize,
    pub kind: ThermalKind,
}

/// Declarative boundary: perimeter defaults to no-slip walls (adiabatic for
/// thermal runs); segments override the default in list order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    #[serde(default)]
    pub hydro: Vec<HydroSegment>,
    #[serde(default)]
    pub thermal: Vec<ThermalSegment>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeHydro {
    Wall,
    Inlet {
        /// Steady velocity at this node (before modulation).
        velocity: [f64; 2],
        modulation: Modulation,
    },
    Outlet {
        pressure: f64,
    },
}

impl NodeHydro {
    pub fn is_velocity(&self) -> bool {
        !matches!(self, NodeHydro::Outlet { .. })
    }
}

/// One perimeter node with its resolved conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryNode {
    pub node: usize,
    /// Outward normal; diagonal at corners.
    pub normal: [i32; 2],
    pub hydro: NodeHydro,
    pub thermal: ThermalKind,
    /// Trapezoid weight of this node within its hydrodynamic segment.
    pub hydro_weight: f64,
    /// Trapezoid weight within its thermal segment.
    pub thermal_weight: f64,
}

impl BoundaryNode {
    pub fn unit_normal(&self) -> [f64; 2] {
        let n = [self.normal[0] as f64, self.normal[1] as f64];
        let len = (n[0] * n[0] + n[1] * n[1]).sqrt();
        [n[0] / len, n[1] / len]
    }

    /// Prescribed velocity at time `t` for inlet and wall nodes.
    pub fn velocity(&self, t: f64) -> [f64; 2] {
        match self.hydro {
            NodeHydro::Inlet {
                velocity,
                modulation,
            } => {
                let f = modulation.factor(t);
                [velocity[0] * f, velocity[1] * f]
            }
            _ => [0.0, 0.0],
        }
    }
}

/// Per-node boundary table built from a [`BoundarySpec`].
#[derive(Debug, Clone)]
pub struct ResolvedBoundary {
    pub nodes: Vec<BoundaryNode>,
    /// Grid node -> position in `nodes`.
    lookup: Vec<Option<usize>>,
}

impl ResolvedBoundary {
    pub fn get(&self, node: usize) -> Option<&BoundaryNode> {
        self.lookup[node].map(|k| &self.nodes[k])
    }

    pub fn inlet_nodes(&self) -> impl Iterator<Item = &BoundaryNode> {
        self.nodes
            .iter()
            .filter(|b| matches!(b.hydro, NodeHydro::Inlet { .. }))
    }

    pub fn outlet_nodes(&self) -> impl Iterator<Item = &BoundaryNode> {
        self.nodes
            .iter()
            .filter(|b| matches!(b.hydro, NodeHydro::Outlet { .. }))
    }

    pub fn heated_nodes(&self) -> impl Iterator<Item = &BoundaryNode> {
        self.nodes
            .iter()
            .filter(|b| matches!(b.thermal, ThermalKind::HeatFlux { flux } if flux != 0.0))
    }
}

fn check_range(grid: &Grid, side: Side, start: usize, end: usize) -> crate::Result<()> {
    if start > end || end >= side.len(grid) {
        return Err(crate::Error::Config(format!(
            "segment {side:?} [{start}, {end}] outside side of length {}",
            side.len(grid)
        )));
    }
    Ok(())
}

fn trapezoid(start: usize, end: usize, s: usize) -> f64 {
    if start == end {
        1.0
    } else if s == start || s == end {
        0.5
    } else {
        1.0
    }
}

impl BoundarySpec {
    /// Checks segment ranges and that every inlet profile vanishes at its endpoints.
    pub fn lint(&self, grid: &Grid) -> crate::Result<()> {
        for seg in &self.hydro {
            check_range(grid, seg.side, seg.start, seg.end)?;
            if let HydroKind::Inlet { peak, .. } = seg.kind {
                if seg.end < seg.start + 2 {
                    return Err(crate::Error::Config(format!(
                        "inlet on {:?} needs at least 3 nodes",
                        seg.side
                    )));
                }
                for s in [seg.start, seg.end] {
                    if inlet_shape(seg.start, seg.end, s) * peak != 0.0 {
                        return Err(crate::Error::Config(
                            "inlet profile must vanish at its endpoints".into(),
                        ));
                    }
                }
            }
        }
        for seg in &self.thermal {
            check_range(grid, seg.side, seg.start, seg.end)?;
        }
        Ok(())
    }

    pub fn resolve(&self, grid: &Grid) -> crate::Result<ResolvedBoundary> {
        self.lint(grid)?;
        let mut lookup = vec![None; grid.len()];
        let mut nodes = Vec::new();
        for node in grid.boundary_nodes() {
            let (i, j) = grid.coords(node);
            let mut normal = [0, 0];
            if i == 0 {
                normal[0] = -1;
            }
            if i == grid.nx - 1 {
                normal[0] = 1;
            }
            if j == 0 {
                normal[1] = -1;
            }
            if j == grid.ny - 1 {
                normal[1] = 1;
            }
            lookup[node] = Some(nodes.len());
            nodes.push(BoundaryNode {
                node,
                normal,
                hydro: NodeHydro::Wall,
                thermal: ThermalKind::Adiabatic,
                hydro_weight: 1.0,
                thermal_weight: 1.0,
            });
        }
        for seg in &self.hydro {
            let n = seg.side.normal();
            for s in seg.start..=seg.end {
                let node = seg.side.node(grid, s);
                let b = &mut nodes[lookup[node].expect("perimeter node")];
                b.hydro = match seg.kind {
                    HydroKind::Wall => NodeHydro::Wall,
                    HydroKind::Inlet { peak, modulation } => {
                        let mag = peak * inlet_shape(seg.start, seg.end, s);
                        NodeHydro::Inlet {
                            velocity: [-mag * n[0] as f64, -mag * n[1] as f64],
                            modulation,
                        }
                    }
                    HydroKind::Outlet { pressure } => NodeHydro::Outlet { pressure },
                };
                b.hydro_weight = trapezoid(seg.start, seg.end, s);
            }
        }
        for seg in &self.thermal {
            for s in seg.start..=seg.end {
                let node = seg.side.node(grid, s);
                let b = &mut nodes[lookup[node].expect("perimeter node")];
                b.thermal = seg.kind;
                b.thermal_weight = trapezoid(seg.start, seg.end, s);
            }
        }
        Ok(ResolvedBoundary { nodes, lookup })
    }
}

/// Parabola through the segment endpoints normalized to a unit peak.
pub fn inlet_shape(start: usize, end: usize, s: usize) -> f64 {
    let (a, b, y) = (start as f64, end as f64, s as f64);
    let half = 0.5 * (b - a);
    -(y - a) * (y - b) / (half * half)
}
