//! Parameter continuation schedules.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuationParam {
    /// Convexity of the Brinkman interpolation.
    QAlpha,
    /// Steepness of the Heaviside projection.
    BetaH,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Rule {
    /// `stages` values spaced geometrically from `start` to `end`.
    Geometric { start: f64, end: f64, stages: usize },
    /// `start, 2 start, 4 start, ...` up to `max`.
    Doubling { start: f64, max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Continuation {
    pub param: ContinuationParam,
    pub rule: Rule,
    /// Advance one stage every `every` iterations.
    pub every: usize,
    /// Also advance early once the design has stalled.
    #[serde(default)]
    pub on_stall: bool,
}

impl Rule {
    pub fn stages(&self) -> usize {
        match *self {
            Rule::Geometric { stages, .. } => stages,
            Rule::Doubling { start, max } => {
                let mut n = 1;
                let mut v = start;
                while v * 2.0 <= max * (1.0 + 1e-12) {
                    v *= 2.0;
                    n += 1;
                }
                n
            }
        }
    }

    pub fn value(&self, stage: usize) -> f64 {
        let stage = stage.min(self.stages() - 1);
        match *self {
            Rule::Geometric { start, end, stages } => {
                if stages == 1 {
                    start
                } else {
                    start * (end / start).powf(stage as f64 / (stages - 1) as f64)
                }
            }
            Rule::Doubling { start, .. } => start * 2f64.powi(stage as i32),
        }
    }
}

impl Continuation {
    pub fn validate(&self) -> Result<()> {
        let ok = match self.rule {
            Rule::Geometric { start, end, stages } => start > 0.0 && end > 0.0 && stages >= 1,
            Rule::Doubling { start, max } => start > 0.0 && max >= start,
        };
        if !ok || self.every == 0 {
            return Err(Error::Config(format!("invalid continuation {self:?}")));
        }
        Ok(())
    }
}

/// Live position within one schedule.
#[derive(Debug, Clone)]
pub struct ScheduleState {
    pub spec: Continuation,
    pub stage: usize,
    last_advance: usize,
}

impl ScheduleState {
    pub fn new(spec: Continuation) -> Self {
        Self {
            spec,
            stage: 0,
            last_advance: 0,
        }
    }

    pub fn value(&self) -> f64 {
        self.spec.rule.value(self.stage)
    }

    pub fn done(&self) -> bool {
        self.stage + 1 >= self.spec.rule.stages()
    }

    /// Called after `iteration` (1-based) completes; returns true if the stage advanced.
    pub fn advance(&mut self, iteration: usize, stalled: bool) -> bool {
        if self.done() {
            return false;
        }
        let due = iteration - self.last_advance >= self.spec.every;
        if due || (stalled && self.spec.on_stall) {
            self.stage += 1;
            self.last_advance = iteration;
            true
        } else {
            false
        }
    }
}
