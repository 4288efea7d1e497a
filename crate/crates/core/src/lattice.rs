//! D2Q9 velocity set, uniform grid indexing and raw moment sums.
//!
//! Direction numbering:
//! ```text
//!   6   2   5
//!    \  |  /
//!   3 - 0 - 1
//!    /  |  \
//!   7   4   8
//! ```
//! Lattice spacing and time step are both 1 (lattice units).

use serde::{Deserialize, Serialize};

/// Number of discrete velocities.
pub const Q: usize = 9;

/// Discrete velocities `c_i`.
pub const C: [[i32; 2]; Q] = [
    [0, 0],
    [1, 0],
    [0, 1],
    [-1, 0],
    [0, -1],
    [1, 1],
    [-1, 1],
    [-1, -1],
    [1, -1],
];

/// Discrete velocities as floats, same order as [`C`].
pub const CF: [[f64; 2]; Q] = [
    [0.0, 0.0],
    [1.0, 0.0],
    [0.0, 1.0],
    [-1.0, 0.0],
    [0.0, -1.0],
    [1.0, 1.0],
    [-1.0, 1.0],
    [-1.0, -1.0],
    [1.0, -1.0],
];

/// Weights `w_i`.
pub const W: [f64; Q] = [
    4.0 / 9.0,
    1.0 / 9.0,
    1.0 / 9.0,
    1.0 / 9.0,
    1.0 / 9.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
];

/// Index of the direction opposite to `i`.
pub const OPPOSITE: [usize; Q] = [0, 3, 4, 1, 2, 7, 8, 5, 6];

/// Weights as exact rationals `(numerator, denominator)`.
pub const W_RATIONAL: [(i64, i64); Q] = [
    (4, 9),
    (1, 9),
    (1, 9),
    (1, 9),
    (1, 9),
    (1, 36),
    (1, 36),
    (1, 36),
    (1, 36),
];

pub type ScalarField = Vec<f64>;
pub type VectorField = Vec<[f64; 2]>;
/// `t[a][b]`; for velocity gradients `t[a][b] = ∂u_a/∂x_b`.
pub type TensorField = Vec<[[f64; 2]; 2]>;

/// The D2Q9 lattice model as a value, for callers that want to pass it around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LatticeModel;

impl LatticeModel {
    pub const DIMENSION: usize = 2;

    pub fn velocities(&self) -> &'static [[i32; 2]; Q] {
        &C
    }

    pub fn weights(&self) -> &'static [f64; Q] {
        &W
    }
}

/// Streaming direction for [`Grid::neighbor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shift {
    /// `x + c_i`
    Forward,
    /// `x - c_i`
    Backward,
}

/// Uniform square grid with `nx * ny` nodes; node `(i, j)` has index `j * nx + i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn new(nx: usize, ny: usize) -> crate::Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(crate::Error::Config(format!(
                "grid must be at least 3x3 nodes, got {nx}x{ny}"
            )));
        }
        Ok(Self { nx, ny })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, node: usize) -> (usize, usize) {
        (node % self.nx, node / self.nx)
    }

    #[inline]
    pub fn is_boundary(&self, node: usize) -> bool {
        let (i, j) = self.coords(node);
        i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
    }

    #[inline]
    pub fn is_interior(&self, node: usize) -> bool {
        !self.is_boundary(node)
    }

    /// Node at `x ± c_i`, or `None` when that point is off the grid.
    #[inline]
    pub fn neighbor(&self, node: usize, dir: usize, shift: Shift) -> Option<usize> {
        let (i, j) = self.coords(node);
        let s = match shift {
            Shift::Forward => 1,
            Shift::Backward => -1,
        };
        self.offset(i, j, s * C[dir][0], s * C[dir][1])
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, di: i32, dj: i32) -> Option<usize> {
        let ii = i as i64 + di as i64;
        let jj = j as i64 + dj as i64;
        if ii < 0 || jj < 0 || ii >= self.nx as i64 || jj >= self.ny as i64 {
            None
        } else {
            Some(self.index(ii as usize, jj as usize))
        }
    }

    /// Unchecked shift for interior nodes, whose 8 neighbors always exist.
    #[inline]
    pub fn interior_neighbor(&self, node: usize, dir: usize, shift: Shift) -> usize {
        let s: isize = match shift {
            Shift::Forward => 1,
            Shift::Backward => -1,
        };
        let d = s * (C[dir][0] as isize + C[dir][1] as isize * self.nx as isize);
        (node as isize + d) as usize
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&n| self.is_boundary(n))
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&n| self.is_interior(n))
    }
}

/// Zeroth, first and second moments of a per-direction vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub zeroth: f64,
    pub first: [f64; 2],
    pub second: [[f64; 2]; 2],
}

pub fn moment_sums(values: &[f64; Q]) -> Moments {
    let mut m = Moments {
        zeroth: 0.0,
        first: [0.0; 2],
        second: [[0.0; 2]; 2],
    };
    for (v, c) in values.iter().zip(CF.iter()) {
        m.zeroth += v;
        for a in 0..2 {
            m.first[a] += c[a] * v;
            for b in 0..2 {
                m.second[a][b] += c[a] * c[b] * v;
            }
        }
    }
    m
}

/// Weighted moments `Σ w_i v_i`, `Σ w_i c_i v_i`, `Σ w_i c_i c_i v_i` used by the adjoint scheme.
pub fn weighted_moment_sums(values: &[f64; Q]) -> Moments {
    let mut wv = [0.0; Q];
    for i in 0..Q {
        wv[i] = W[i] * values[i];
    }
    moment_sums(&wv)
}
