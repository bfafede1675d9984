//! Performance funnels and the funnel feedback law.
//!
//! A funnel is described by `phi`, which vanishes on `[0, gamma]` and is positive
//! afterwards. The tracking error `e` must satisfy `phi(t) |e| < 1`; the controller
//! `-k0 e / (1 - phi^2 |e|^2)` raises its gain without bound as the error
//! approaches the boundary.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of `phi` after the initial interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunnelShape {
    /// `tanh(t / tau)`
    Tanh { tau: f64 },
    /// Constant level, i.e. a fixed-width tube after `gamma`.
    Constant { level: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FunnelSpec {
    pub gamma: f64,
    pub shape: FunnelShape,
}

impl Default for FunnelSpec {
    fn default() -> Self {
        Self {
            gamma: 0.05,
            shape: FunnelShape::Tanh { tau: 100.0 },
        }
    }
}

/// Funnel radius `1 / phi(t)`; unbounded while `phi(t) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FunnelRadius {
    Bounded(f64),
    Unbounded,
}

impl FunnelRadius {
    /// `f64::INFINITY` for the unbounded case.
    pub fn as_f64(self) -> f64 {
        match self {
            FunnelRadius::Bounded(r) => r,
            FunnelRadius::Unbounded => f64::INFINITY,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, FunnelRadius::Unbounded)
    }
}

impl fmt::Display for FunnelRadius {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunnelRadius::Bounded(r) => write!(f, "{r}"),
            FunnelRadius::Unbounded => f.write_str("inf"),
        }
    }
}

impl FunnelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Domain(format!("gamma must be positive, got {}", self.gamma)));
        }
        match self.shape {
            FunnelShape::Tanh { tau } if !(tau > 0.0 && tau.is_finite()) => {
                Err(Error::Domain(format!("tau must be positive, got {tau}")))
            }
            FunnelShape::Constant { level } if !(level > 0.0 && level.is_finite()) => {
                Err(Error::Domain(format!("funnel level must be positive, got {level}")))
            }
            _ => Ok(()),
        }
    }

    /// `phi(t)`: zero on `[0, gamma]`, the shape afterwards.
    pub fn phi(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("funnel evaluated at negative time {t}")));
        }
        Ok(self.phi_unchecked(t))
    }

    pub(crate) fn phi_unchecked(&self, t: f64) -> f64 {
        if t <= self.gamma {
            return 0.0;
        }
        match self.shape {
            FunnelShape::Tanh { tau } => (t / tau).tanh(),
            FunnelShape::Constant { level } => level,
        }
    }

    pub fn radius(&self, t: f64) -> FunnelRadius {
        let phi = self.phi_unchecked(t.max(0.0));
        if phi > 0.0 {
            FunnelRadius::Bounded(1.0 / phi)
        } else {
            FunnelRadius::Unbounded
        }
    }

    /// `sup phi`.
    pub fn phi_sup(&self) -> f64 {
        match self.shape {
            FunnelShape::Tanh { .. } => 1.0,
            FunnelShape::Constant { level } => level,
        }
    }

    /// Essential bound of `|phi'|` on `(gamma, inf)`. The jump of `phi` at `gamma`
    /// (`tanh(gamma / tau)` for the tanh shape) is not counted.
    pub fn phi_lip(&self) -> f64 {
        match self.shape {
            FunnelShape::Tanh { tau } => 1.0 / tau,
            FunnelShape::Constant { .. } => 0.0,
        }
    }

    /// Size of the jump of `phi` at `gamma`.
    pub fn jump_at_gamma(&self) -> f64 {
        match self.shape {
            FunnelShape::Tanh { tau } => (self.gamma / tau).tanh(),
            FunnelShape::Constant { level } => level,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub k0: f64,
    /// Largest admissible `phi^2 |e|^2`.
    pub guard_margin: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            k0: 0.75,
            guard_margin: 1.0 - 1e-9,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k0 > 0.0 && self.k0.is_finite()) {
            return Err(Error::Domain(format!("k0 must be positive, got {}", self.k0)));
        }
        if !(self.guard_margin > 0.0 && self.guard_margin < 1.0) {
            return Err(Error::Domain(format!(
                "guard margin must lie in (0, 1), got {}",
                self.guard_margin
            )));
        }
        Ok(())
    }
}

pub fn norm(e: &[f64]) -> f64 {
    e.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `1 - phi^2 |e|^2`; positive exactly when `(t, e)` lies inside the funnel.
pub fn funnel_margin(e: &[f64], phi_t: f64) -> f64 {
    let level = phi_t * phi_t * e.iter().map(|x| x * x).sum::<f64>();
    1.0 - level
}

/// Funnel control law `-k0 / (1 - phi^2 |e|^2) * e`, written into `out`.
///
/// Fails with [`Error::FunnelViolation`] once `phi^2 |e|^2` exceeds the guard, so
/// the integrator can reject the step instead of evaluating a clamped law.
pub fn feedback_into(t: f64, e: &[f64], phi_t: f64, cfg: &ControllerConfig, out: &mut [f64]) -> Result<()> {
    let margin = funnel_margin(e, phi_t);
    let level = 1.0 - margin;
    if !(level <= cfg.guard_margin) {
        return Err(Error::FunnelViolation {
            t,
            e_norm: norm(e),
            level,
            guard: cfg.guard_margin,
        });
    }
    // margin is exactly 1.0 when phi = 0, so this is bitwise -k0 * e there
    let gain = -cfg.k0 / margin;
    for (o, x) in out.iter_mut().zip(e) {
        *o = gain * x;
    }
    Ok(())
}

pub fn feedback(t: f64, e: &[f64], phi_t: f64, cfg: &ControllerConfig) -> Result<Vec<f64>> {
    let mut out = vec![0.0; e.len()];
    feedback_into(t, e, phi_t, cfg, &mut out)?;
    Ok(out)
}
