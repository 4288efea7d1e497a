//! Design variable field, material interpolations and the density/projection filter chain.

use serde::{Deserialize, Serialize};

use crate::lattice::{Grid, ScalarField};

/// Parameters of the γ-dependent material interpolations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpolationParams {
    /// Inverse permeability of solid (γ = 0), lattice units.
    pub alpha_bar: f64,
    pub q_alpha: f64,
    pub q_beta: f64,
    pub q_k: f64,
    /// Heat-source coefficient of solid.
    pub beta_bar: f64,
    pub k_f: f64,
    pub k_s: f64,
}

impl Default for InterpolationParams {
    fn default() -> Self {
        Self {
            alpha_bar: 1.0,
            q_alpha: 0.1,
            q_beta: 0.1,
            q_k: 1.0,
            beta_bar: 0.0,
            k_f: 1.0 / 60.0,
            k_s: 1.0 / 60.0,
        }
    }
}

/// `scale * q (1 - γ) / (q + γ)` and its γ-derivative.
#[inline]
fn rational_ramp(gamma: f64, q: f64, scale: f64) -> (f64, f64) {
    let den = q + gamma;
    let value = scale * q * (1.0 - gamma) / den;
    let deriv = -scale * q * (1.0 + q) / (den * den);
    (value, deriv)
}

impl InterpolationParams {
    pub fn validate(&self) -> crate::Result<()> {
        let positive = [
            ("alpha_bar", self.alpha_bar),
            ("q_alpha", self.q_alpha),
            ("q_beta", self.q_beta),
            ("q_k", self.q_k),
            ("k_f", self.k_f),
            ("k_s", self.k_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(crate::Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.beta_bar >= 0.0) {
            return Err(crate::Error::Config("beta_bar must be >= 0".into()));
        }
        Ok(())
    }

    /// Brinkman inverse permeability `α_γ` and `dα/dγ`.
    pub fn alpha(&self, gamma: f64) -> (f64, f64) {
        rational_ramp(gamma, self.q_alpha, self.alpha_bar)
    }

    /// Thermal diffusivity `K_γ` and `dK/dγ`.
    pub fn k(&self, gamma: f64) -> (f64, f64) {
        let (r, dr) = rational_ramp(gamma, self.q_k, 1.0);
        let dk = self.k_s - self.k_f;
        (self.k_f + dk * r, dk * dr)
    }

    /// Heat-source coefficient `β_γ` and `dβ/dγ`.
    pub fn beta(&self, gamma: f64) -> (f64, f64) {
        rational_ramp(gamma, self.q_beta, self.beta_bar)
    }
}

/// Density filter radius and Heaviside projection parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterParams {
    pub radius: f64,
    pub beta_h: f64,
    pub eta_h: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            radius: 2.4,
            beta_h: 1.0,
            eta_h: 0.5,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.radius >= 0.0 && self.beta_h >= 1.0 && self.eta_h > 0.0 && self.eta_h < 1.0) {
            return Err(crate::Error::Config(format!(
                "invalid filter parameters {self:?}: need radius >= 0, beta_h >= 1, 0 < eta_h < 1"
            )));
        }
        Ok(())
    }

    /// tanh projection of a filtered density and its derivative.
    pub fn project(&self, x: f64) -> (f64, f64) {
        let (b, e) = (self.beta_h, self.eta_h);
        let den = (b * e).tanh() + (b * (1.0 - e)).tanh();
        let t = (b * (x - e)).tanh();
        (((b * e).tanh() + t) / den, b * (1.0 - t * t) / den)
    }
}

/// Density filter followed by the Heaviside projection.
///
/// Only design nodes are filtered; each design node averages over the design
/// nodes within `radius` using linear cone weights `max(0, R - dist)`.
/// Non-design nodes pass through unchanged.
#[derive(Debug, Clone)]
pub struct FilterChain {
    pub params: FilterParams,
    mask: Vec<bool>,
    /// Per node: normalized `(source node, weight)` pairs. Empty for non-design nodes.
    stencil: Vec<Vec<(usize, f64)>>,
}

impl FilterChain {
    pub fn new(grid: &Grid, mask: &[bool], params: FilterParams) -> Self {
        let reach = params.radius.floor() as i32;
        let mut stencil = vec![Vec::new(); grid.len()];
        for (node, entry) in stencil.iter_mut().enumerate() {
            if !mask[node] {
                continue;
            }
            let (i, j) = grid.coords(node);
            let mut total = 0.0;
            for dj in -reach..=reach {
                for di in -reach..=reach {
                    let Some(other) = grid.offset(i, j, di, dj) else {
                        continue;
                    };
                    if !mask[other] {
                        continue;
                    }
                    let dist = ((di * di + dj * dj) as f64).sqrt();
                    let w = (params.radius - dist).max(0.0);
                    if w > 0.0 {
                        entry.push((other, w));
                        total += w;
                    }
                }
            }
            if entry.is_empty() {
                // radius < 1: plain identity
                entry.push((node, 1.0));
                total = 1.0;
            }
            for (_, w) in entry.iter_mut() {
                *w /= total;
            }
        }
        Self {
            params,
            mask: mask.to_vec(),
            stencil,
        }
    }

    pub fn set_beta(&mut self, beta_h: f64) {
        self.params.beta_h = beta_h;
    }

    pub fn density_filter(&self, raw: &[f64]) -> ScalarField {
        raw.iter()
            .enumerate()
            .map(|(n, &r)| {
                if self.mask[n] {
                    self.stencil[n].iter().map(|&(m, w)| w * raw[m]).sum()
                } else {
                    r
                }
            })
            .collect()
    }

    /// Returns `(filtered, projected)`.
    pub fn apply(&self, raw: &[f64]) -> (ScalarField, ScalarField) {
        let filtered = self.density_filter(raw);
        let projected = filtered
            .iter()
            .enumerate()
            .map(|(n, &f)| if self.mask[n] { self.params.project(f).0 } else { f })
            .collect();
        (filtered, projected)
    }

    /// Jacobian-vector product of the full chain at `raw`.
    pub fn jvp(&self, raw: &[f64], v: &[f64]) -> ScalarField {
        let filtered = self.density_filter(raw);
        let fv = self.density_filter_linear(v);
        fv.iter()
            .enumerate()
            .map(|(n, &x)| {
                if self.mask[n] {
                    self.params.project(filtered[n]).1 * x
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn density_filter_linear(&self, v: &[f64]) -> ScalarField {
        (0..v.len())
            .map(|n| {
                if self.mask[n] {
                    self.stencil[n].iter().map(|&(m, w)| w * v[m]).sum()
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Maps a sensitivity with respect to the projected field back onto the raw field.
    pub fn transpose(&self, raw: &[f64], sens_projected: &[f64]) -> ScalarField {
        let filtered = self.density_filter(raw);
        let mut out = vec![0.0; raw.len()];
        for n in 0..raw.len() {
            if !self.mask[n] {
                continue;
            }
            let s = self.params.project(filtered[n]).1 * sens_projected[n];
            for &(m, w) in &self.stencil[n] {
                out[m] += w * s;
            }
        }
        out
    }
}

/// The design variable together with its filtered and projected companions.
#[derive(Debug, Clone)]
pub struct DesignField {
    /// Optimizer variables; non-design nodes hold their fixed value.
    pub gamma_raw: ScalarField,
    pub gamma_filtered: ScalarField,
    /// The γ seen by the physics.
    pub gamma_projected: ScalarField,
    pub mask: Vec<bool>,
}

impl DesignField {
    /// Design without a filter chain: all three fields coincide.
    pub fn unfiltered(gamma: ScalarField, mask: Vec<bool>) -> Self {
        Self {
            gamma_filtered: gamma.clone(),
            gamma_projected: gamma.clone(),
            gamma_raw: gamma,
            mask,
        }
    }

    pub fn update(&mut self, raw: ScalarField, chain: Option<&FilterChain>) {
        match chain {
            Some(c) => {
                let (f, p) = c.apply(&raw);
                self.gamma_filtered = f;
                self.gamma_projected = p;
            }
            None => {
                self.gamma_filtered = raw.clone();
                self.gamma_projected = raw.clone();
            }
        }
        self.gamma_raw = raw;
    }

    pub fn design_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}
