use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::Mesh;

/// Closed subset of the domain used as a stimulus footprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Region {
    /// `(x - cx)^2 + (y - cy)^2 <= r_sq`
    Disc { center: [f64; 2], r_sq: f64 },
    /// `x0 <= x <= x1` and `y0 <= y <= y1`
    Rect { x: [f64; 2], y: [f64; 2] },
}

impl Region {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Region::Disc { center, r_sq } => {
                let (dx, dy) = (x - center[0], y - center[1]);
                dx * dx + dy * dy <= r_sq
            }
            Region::Rect { x: xr, y: yr } => xr[0] <= x && x <= xr[1] && yr[0] <= y && y <= yr[1],
        }
    }

    /// Nodal indicator on `mesh`.
    pub fn mask(&self, mesh: &Mesh) -> Vec<f64> {
        mesh.nodes
            .iter()
            .map(|p| if self.contains(p[0], p[1]) { 1.0 } else { 0.0 })
            .collect()
    }

    /// Exact area of the region intersected with `[0, lx] x [0, ly]`, when the
    /// region lies inside the rectangle (used for sanity checks).
    pub fn area(&self) -> f64 {
        match *self {
            Region::Disc { r_sq, .. } => std::f64::consts::PI * r_sq,
            Region::Rect { x, y } => (x[1] - x[0]).max(0.0) * (y[1] - y[0]).max(0.0),
        }
    }
}

/// Nodal indicator of the closed disc of squared radius `r_sq` about `center`.
pub fn disc_mask(mesh: &Mesh, center: [f64; 2], r_sq: f64) -> Vec<f64> {
    Region::Disc { center, r_sq }.mask(mesh)
}

/// Cumulative distribution of the unit-area triangular kernel on `[-w, w]`.
fn triangle_cdf(z: f64, w: f64) -> f64 {
    if z <= -w {
        0.0
    } else if z <= 0.0 {
        (z + w).powi(2) / (2.0 * w * w)
    } else if z < w {
        1.0 - (w - z).powi(2) / (2.0 * w * w)
    } else {
        1.0
    }
}

/// Indicator of `[a, b]` convolved with the unit-area triangular kernel of half-width `halfwidth`.
pub fn smoothed_window(t: f64, (a, b): (f64, f64), halfwidth: f64) -> Result<f64> {
    if !(halfwidth > 0.0 && halfwidth < 0.5 * (b - a)) {
        return Err(Error::Domain(format!(
            "smoothing half-width {halfwidth} must lie in (0, {})",
            0.5 * (b - a)
        )));
    }
    Ok(window_value(t, a, b, halfwidth))
}

fn window_value(t: f64, a: f64, b: f64, w: f64) -> f64 {
    if t <= a - w || t >= b + w {
        return 0.0;
    }
    if t >= a + w && t <= b - w {
        return 1.0;
    }
    triangle_cdf(t - a, w) - triangle_cdf(t - b, w)
}

/// Pulsed current `amplitude * 1_region(x) * sum_k smoothed(chi_[a_k, b_k])(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StimulusProgram {
    pub amplitude: f64,
    pub region: Region,
    pub windows: Vec<(f64, f64)>,
    pub smoothing_halfwidth: f64,
}

impl Default for StimulusProgram {
    fn default() -> Self {
        Self {
            amplitude: 101.0,
            region: Region::Disc {
                center: [0.5, 0.5],
                r_sq: 0.0225,
            },
            windows: vec![(49.0, 51.0), (299.0, 301.0)],
            smoothing_halfwidth: 0.5,
        }
    }
}

impl StimulusProgram {
    pub fn validate(&self) -> Result<()> {
        if !self.amplitude.is_finite() {
            return Err(Error::Domain("stimulus amplitude must be finite".into()));
        }
        for (k, &(a, b)) in self.windows.iter().enumerate() {
            if !(b > a) {
                return Err(Error::Domain(format!("stimulus window [{a}, {b}] is empty")));
            }
            if !(self.smoothing_halfwidth > 0.0 && self.smoothing_halfwidth < 0.5 * (b - a)) {
                return Err(Error::Domain(format!(
                    "smoothing half-width {} must lie in (0, {}) for window [{a}, {b}]",
                    self.smoothing_halfwidth,
                    0.5 * (b - a)
                )));
            }
            if k > 0 {
                let prev = self.windows[k - 1];
                // smoothed supports must not overlap either
                if !(a - self.smoothing_halfwidth > prev.1 + self.smoothing_halfwidth) {
                    return Err(Error::Domain(format!(
                        "stimulus windows [{}, {}] and [{a}, {b}] overlap or are out of order",
                        prev.0, prev.1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Smoothed time profile in `[0, 1]` (without the amplitude).
    pub fn profile(&self, t: f64) -> f64 {
        self.windows
            .iter()
            .map(|&(a, b)| window_value(t, a, b, self.smoothing_halfwidth))
            .sum()
    }

    /// Times at which the profile's second derivative jumps.
    pub fn breakpoints(&self) -> Vec<f64> {
        let w = self.smoothing_halfwidth;
        self.windows
            .iter()
            .flat_map(|&(a, b)| [a - w, a, a + w, b - w, b, b + w])
            .collect()
    }

    pub fn last_end(&self) -> f64 {
        self.windows
            .iter()
            .map(|w| w.1 + self.smoothing_halfwidth)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn first_start(&self) -> f64 {
        self.windows
            .iter()
            .map(|w| w.0 - self.smoothing_halfwidth)
            .fold(f64::INFINITY, f64::min)
    }
}
