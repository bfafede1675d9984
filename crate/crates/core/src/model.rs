//! Model constants, the cubic FitzHugh-Nagumo reaction, and energy bookkeeping.
//!
//! All quantities are dimensionless.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constant symmetric diffusion tensor `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diffusion {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Diffusion {
    pub fn isotropic(d: f64) -> Self {
        Self {
            xx: d,
            xy: 0.0,
            yy: d,
        }
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.xx + self.yy);
        let half_gap = (0.25 * (self.xx - self.yy).powi(2) + self.xy * self.xy).sqrt();
        (mean - half_gap, mean + half_gap)
    }

    /// The ellipticity constant, i.e. the smallest eigenvalue.
    pub fn ellipticity(&self) -> f64 {
        self.eigenvalues().0
    }

    /// `Some(d)` when the tensor is `d * I`.
    pub fn as_isotropic(&self) -> Option<f64> {
        (self.xy == 0.0 && self.xx == self.yy).then_some(self.xx)
    }

    pub fn apply(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.xx * g[0] + self.xy * g[1],
            self.xy * g[0] + self.yy * g[1],
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let delta = self.ellipticity();
        if !(delta > 0.0) || !self.xx.is_finite() || !self.yy.is_finite() || !self.xy.is_finite() {
            return Err(Error::Domain(format!(
                "diffusion tensor must be symmetric positive definite, smallest eigenvalue is {delta}"
            )));
        }
        Ok(())
    }
}

/// Physical constants `c1..c5`, diffusion and rectangular extent `(Lx, Ly)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub diffusion: Diffusion,
    pub extent: (f64, f64),
}

impl Default for ModelParams {
    /// The canonical parameter set on the unit square with `D = 0.015 I`.
    fn default() -> Self {
        Self {
            c1: 1.614,
            c2: 0.1403,
            c3: 0.012,
            c4: 0.00015,
            c5: 0.015,
            diffusion: Diffusion::isotropic(0.015),
            extent: (1.0, 1.0),
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
            ("c4", self.c4),
            ("c5", self.c5),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {value}")));
            }
        }
        self.diffusion.validate()?;
        let (lx, ly) = self.extent;
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::Domain(format!(
                "domain extent must be positive, got ({lx}, {ly})"
            )));
        }
        Ok(())
    }

    /// Area of the rectangle.
    pub fn area(&self) -> f64 {
        self.extent.0 * self.extent.1
    }

    /// Cubic reaction `p3(v) = -c1 v + c2 v^2 - c3 v^3`.
    #[inline]
    pub fn p3(&self, v: f64) -> f64 {
        v * (-self.c1 + v * (self.c2 - self.c3 * v))
    }

    /// `I_ion(u, v) = p3(v) - u`.
    #[inline]
    pub fn ionic_current(&self, v: f64, u: f64) -> f64 {
        self.p3(v) - u
    }

    /// Right-hand side of the recovery equation, `c5 v - c4 u`.
    #[inline]
    pub fn recovery_rhs(&self, v: f64, u: f64) -> f64 {
        self.c5 * v - self.c4 * u
    }

    /// Threshold beyond which `p3(v)` has the opposite sign of `v`.
    ///
    /// `p3(v)/v = -c1 + c2 v - c3 v^2` is negative for every `v` when the quadratic
    /// has no real root; otherwise past its largest root in absolute value.
    pub fn p3_sign_threshold(&self) -> f64 {
        let disc = self.c2 * self.c2 - 4.0 * self.c1 * self.c3;
        if disc < 0.0 {
            0.0
        } else {
            (self.c2.abs() + disc.sqrt()) / (2.0 * self.c3)
        }
    }

    /// Lyapunov function `V = (c5 |v|^2 + |u|^2) / 2` from squared L2 norms.
    pub fn lyapunov(&self, v_norm_sq: f64, u_norm_sq: f64) -> Result<f64> {
        if !(v_norm_sq >= 0.0) || !(u_norm_sq >= 0.0) {
            return Err(Error::Domain(format!(
                "squared norms must be nonnegative, got ({v_norm_sq}, {u_norm_sq})"
            )));
        }
        Ok(0.5 * (self.c5 * v_norm_sq + u_norm_sq))
    }

    /// The forcing-free part of `C_inf`, `27 c2^4 |Omega| / (32 c3^3)`.
    pub fn reaction_energy_floor(&self, area: f64) -> f64 {
        27.0 * self.c2.powi(4) / (32.0 * self.c3.powi(3)) * area
    }
}

/// The constant `C_inf` of the a priori energy estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBudget {
    pub c_infty: f64,
}

impl EnergyBudget {
    /// Upper bound for `c5 |v(t)|^2 + |u(t)|^2`, i.e. `2 C_inf t + 2 V(v0, u0)`.
    pub fn bound(&self, t: f64, initial_lyapunov: f64) -> f64 {
        2.0 * self.c_infty * t + 2.0 * initial_lyapunov
    }
}

/// `C_inf = k0 c5 |y_ref|_inf^2 / 2 + |I_si|_{2,inf}^2 / (2 c1) + 27 c2^4 |Omega| / (32 c3^3)`.
pub fn energy_budget(
    params: &ModelParams,
    yref_sup: f64,
    isi_sup_l2: f64,
    k0: f64,
    area: f64,
) -> Result<EnergyBudget> {
    if !(k0 > 0.0) {
        return Err(Error::Domain(format!("k0 must be positive, got {k0}")));
    }
    if !(area > 0.0) {
        return Err(Error::Domain(format!("area must be positive, got {area}")));
    }
    if !(yref_sup >= 0.0) || !(isi_sup_l2 >= 0.0) {
        return Err(Error::Domain(format!(
            "sup norms must be nonnegative, got ({yref_sup}, {isi_sup_l2})"
        )));
    }
    let c_infty = 0.5 * k0 * params.c5 * yref_sup * yref_sup
        + isi_sup_l2 * isi_sup_l2 / (2.0 * params.c1)
        + params.reaction_energy_floor(area);
    Ok(EnergyBudget { c_infty })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn p3_values() {
        let p = ModelParams::default();
        assert_eq!(p.p3(0.0), 0.0);
        assert!(close(p.p3(1.0), -1.4857, 1e-12));
        // only real root is 0
        assert!(p.c2 * p.c2 - 4.0 * p.c1 * p.c3 < 0.0);
        assert_eq!(p.p3_sign_threshold(), 0.0);
    }

    #[test]
    fn ionic_and_recovery() {
        let p = ModelParams::default();
        assert_eq!(p.ionic_current(0.0, 0.0), 0.0);
        assert_eq!(p.ionic_current(0.0, 2.0), -2.0);
        assert!(close(p.ionic_current(1.0, 0.5), -1.9857, 1e-12));
        assert_eq!(p.recovery_rhs(0.0, 0.0), 0.0);
        assert!(close(p.recovery_rhs(1.0, 0.0), 0.015, 1e-15));
        assert!(close(p.recovery_rhs(0.0, 1.0), -0.00015, 1e-15));
    }

    #[test]
    fn lyapunov_values() {
        let p = ModelParams::default();
        assert_eq!(p.lyapunov(0.0, 0.0).unwrap(), 0.0);
        assert!(close(p.lyapunov(1.0, 0.0).unwrap(), 0.0075, 1e-15));
        assert_eq!(p.lyapunov(0.0, 4.0).unwrap(), 2.0);
        assert!(p.lyapunov(-1.0, 0.0).is_err());
    }

    #[test]
    fn energy_budget_values() {
        let p = ModelParams::default();
        let b = energy_budget(&p, 0.0, 0.0, 0.75, 1.0).unwrap();
        assert!(close(b.c_infty, 189.2, 0.05), "{}", b.c_infty);
        let b2 = energy_budget(&p, 0.0, 0.0, 0.75, 2.0).unwrap();
        assert!(close(b2.c_infty, 2.0 * b.c_infty, 1e-9));
        let b3 = energy_budget(&p, 1.0, 0.0, 0.75, 1.0).unwrap();
        assert!(close(b3.c_infty - b.c_infty, 0.005625, 1e-12));
        assert!(energy_budget(&p, 0.0, 0.0, 0.0, 1.0).is_err());
        assert!(energy_budget(&p, 0.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn validation() {
        let mut p = ModelParams::default();
        p.validate().unwrap();
        p.c3 = -1.0;
        assert!(p.validate().is_err());
        let mut p = ModelParams::default();
        p.diffusion = Diffusion {
            xx: 1.0,
            xy: 2.0,
            yy: 1.0,
        };
        assert!(p.validate().is_err());
        let mut p = ModelParams::default();
        p.extent = (1.0, 0.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn diffusion_eigenvalues() {
        let d = Diffusion {
            xx: 2.0,
            xy: 1.0,
            yy: 2.0,
        };
        let (a, b) = d.eigenvalues();
        assert!(close(a, 1.0, 1e-14) && close(b, 3.0, 1e-14));
        assert_eq!(Diffusion::isotropic(0.015).as_isotropic(), Some(0.015));
        assert_eq!(d.as_isotropic(), None);
    }
}
