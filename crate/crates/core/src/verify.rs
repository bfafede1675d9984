//! Executable checks of the controller's guarantees over trajectory logs.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::closed_loop::{integrate_closed_loop, ClosedLoop, Discretization, FemDiscretization, Physics};
use crate::error::{Error, Result};
use crate::integrate::{integrate, sample_grid, IntegratorConfig, TrajectoryLog};
use crate::model::{EnergyBudget, ModelParams};
use crate::spectral::SpectralBasis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
}

/// Outcome of one check. Failing reports list the offending sample times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check: String,
    pub passed: bool,
    pub measured: Vec<Measurement>,
    pub tolerance: String,
    pub note: String,
    pub offending_times: Vec<f64>,
}

impl VerificationReport {
    fn new(check: &str, passed: bool, tolerance: impl Into<String>, note: &str) -> Self {
        Self {
            check: check.into(),
            passed,
            measured: Vec::new(),
            tolerance: tolerance.into(),
            note: note.into(),
            offending_times: Vec::new(),
        }
    }

    fn with(mut self, name: &str, value: f64) -> Self {
        self.measured.push(Measurement {
            name: name.into(),
            value,
        });
        self
    }

    pub fn measured(&self, name: &str) -> Option<f64> {
        self.measured.iter().find(|m| m.name == name).map(|m| m.value)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.check, if self.passed { "PASS" } else { "FAIL" })?;
        for m in &self.measured {
            write!(f, " {}={}", m.name, m.value)?;
        }
        write!(f, " (tolerance: {})", self.tolerance)?;
        if !self.offending_times.is_empty() {
            let shown: Vec<String> = self.offending_times.iter().take(8).map(f64::to_string).collect();
            write!(f, " offending t=[{}", shown.join(", "))?;
            if self.offending_times.len() > 8 {
                write!(f, ", ... {} total", self.offending_times.len())?;
            }
            write!(f, "]")?;
        }
        if !self.note.is_empty() {
            write!(f, " ; {}", self.note)?;
        }
        Ok(())
    }
}

/// `eps0 = min_{t >= delta} (1 - phi(t)^2 ||e(t)||^2)`; passes iff positive.
pub fn check_funnel_invariant(log: &TrajectoryLog, delta: f64) -> Result<VerificationReport> {
    if log.is_empty() {
        return Err(Error::Domain("funnel check needs a nonempty log".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("delta must be positive, got {delta}")));
    }
    let window: Vec<_> = log.samples.iter().filter(|s| s.t >= delta).collect();
    if window.is_empty() {
        return Err(Error::Domain(format!("no samples at or after t = {delta}")));
    }
    let (mut eps0, mut at) = (f64::INFINITY, 0.0);
    for s in &window {
        if s.margin < eps0 {
            eps0 = s.margin;
            at = s.t;
        }
    }
    let passed = eps0 > 0.0;
    let mut r = VerificationReport::new(
        "funnel",
        passed,
        "eps0 > 0",
        "the tracking error stays uniformly inside the performance funnel after delta",
    )
    .with("eps0", eps0)
    .with("t_min", at)
    .with("samples", window.len() as f64);
    r.offending_times = window.iter().filter(|s| !(s.margin > 0.0)).map(|s| s.t).collect();
    Ok(r)
}

/// `c5 ||v||^2 + ||u||^2 <= 2 C_inf t + 2 V(v0, u0)` at every sample.
///
/// Only valid while `phi = 0`, so any sample with a finite funnel radius makes the
/// check inapplicable.
pub fn check_energy_bound(
    log: &TrajectoryLog,
    budget: &EnergyBudget,
    params: &ModelParams,
    v0_norm_sq: f64,
    u0_norm_sq: f64,
) -> Result<VerificationReport> {
    if let Some(s) = log.samples.iter().find(|s| !s.funnel_radius.is_unbounded()) {
        return Err(Error::Inapplicable(format!(
            "energy bound holds only while phi = 0, but the sample at t = {} has a finite funnel radius",
            s.t
        )));
    }
    let v0 = params.lyapunov(v0_norm_sq, u0_norm_sq)?;
    let t0 = log.samples.first().map_or(0.0, |s| s.t);
    let mut slack = f64::INFINITY;
    let mut offending = Vec::new();
    for s in &log.samples {
        let lhs = params.c5 * s.v_l2 * s.v_l2 + s.u_l2 * s.u_l2;
        let rhs = budget.bound(s.t - t0, v0);
        slack = slack.min(rhs - lhs);
        if !(lhs <= rhs) {
            offending.push(s.t);
        }
    }
    let mut r = VerificationReport::new(
        "energy",
        offending.is_empty(),
        "lhs <= 2 C_inf t + 2 V0",
        "a priori energy estimate of the Galerkin scheme on the proportional interval",
    )
    .with("c_infty", budget.c_infty)
    .with("min_slack", slack);
    r.offending_times = offending;
    Ok(r)
}

/// Acceptance band `|measured - expected| <= absolute + relative |expected|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub relative: f64,
    pub absolute: f64,
}

impl Tolerance {
    pub fn relative(r: f64) -> Self {
        Self {
            relative: r,
            absolute: 0.0,
        }
    }

    pub fn absolute(a: f64) -> Self {
        Self {
            relative: 0.0,
            absolute: a,
        }
    }

    pub fn accepts(&self, measured: f64, expected: f64) -> bool {
        (measured - expected).abs() <= self.absolute + self.relative * expected.abs()
    }
}

impl fmt::Display for Tolerance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "abs {} + rel {}", self.absolute, self.relative)
    }
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Domain("line fit needs at least two points".into()));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Domain("line fit abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Pure-diffusion run from `v0`; the fitted rate of `log ||v(t)||` must match `-expected_rate`.
pub fn linear_decay_check<D: Discretization + ?Sized>(
    disc: &D,
    params: &ModelParams,
    v0: &[f64],
    expected_rate: f64,
    t_end: f64,
    cfg: &IntegratorConfig,
    tolerance: Tolerance,
) -> Result<VerificationReport> {
    if params.diffusion.as_isotropic().is_none() {
        return Err(Error::Unsupported("decay check needs isotropic diffusion".into()));
    }
    crate::error::check_len("decay initial state", disc.size(), v0.len())?;
    let sys = ClosedLoop::open_loop(disc, *params).with_physics(Physics::DIFFUSION_ONLY);
    let mut x0 = v0.to_vec();
    x0.resize(2 * disc.size(), 0.0);
    let run = integrate_closed_loop(&sys, &x0, (0.0, t_end), cfg, t_end / 50.0, &[])?;
    let (t, logv): (Vec<f64>, Vec<f64>) = run
        .log
        .samples
        .iter()
        .filter(|s| s.v_l2 > 0.0)
        .map(|s| (s.t, s.v_l2.ln()))
        .unzip();
    if t.len() < run.log.len() {
        return Err(Error::Domain("decay fit degenerate: the field vanished".into()));
    }
    let (slope, _) = fit_line(&t, &logv)?;
    let rate = -slope;
    let passed = tolerance.accepts(rate, expected_rate);
    let mut r = VerificationReport::new(
        "decay",
        passed,
        tolerance.to_string(),
        "a Neumann eigenmode decays at its eigenvalue",
    )
    .with("rate", rate)
    .with("expected", expected_rate)
    .with("ratio_at_end", (logv[logv.len() - 1] - logv[0]).exp());
    if !passed {
        r.offending_times.push(t_end);
    }
    Ok(r)
}

/// Which logged signal the Hölder estimator inspects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HolderField {
    Output,
    VNorm,
}

impl std::str::FromStr for HolderField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "y" => Ok(Self::Output),
            "v_l2" => Ok(Self::VNorm),
            other => Err(Error::Domain(format!("unknown Holder field {other:?}, expected y or v_l2"))),
        }
    }
}

/// Minimum number of samples after `delta` for the Hölder estimator.
pub const HOLDER_MIN_SAMPLES: usize = 100;

/// Empirical Hölder regularity of a sampled signal `f: times -> R^m`.
///
/// Pairs are `(i, i + 2^l)` with `2^l <= max(n / 16, 4)`. The quotient is the sup of
/// `||df|| / dt^lambda` over them. The exponent is the slope of `log max ||df||`
/// against `log dt` across lags, the sampled modulus of continuity.
pub fn holder_estimate_series(times: &[f64], values: &[Vec<f64>], lambda: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Domain(format!("lambda must lie in (0, 1), got {lambda}")));
    }
    if times.len() < HOLDER_MIN_SAMPLES {
        return Err(Error::Domain(format!(
            "Holder estimate needs at least {HOLDER_MIN_SAMPLES} samples, got {}",
            times.len()
        )));
    }
    let n = times.len();
    let dist = |a: usize, b: usize| -> f64 {
        values[a]
            .iter()
            .zip(&values[b])
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let mut quotient = 0.0f64;
    let (mut lx, mut ly) = (Vec::new(), Vec::new());
    // Lags beyond a small fraction of the record measure the signal's range, not its regularity.
    let max_lag = (n / 16).max(4);
    let mut lag = 1;
    while lag <= max_lag {
        let (mut best, mut best_dt) = (0.0f64, 0.0);
        for i in 0..n - lag {
            let dt = times[i + lag] - times[i];
            let df = dist(i, i + lag);
            quotient = quotient.max(df / dt.powf(lambda));
            if df > best {
                best = df;
                best_dt = dt;
            }
        }
        if best > 0.0 {
            lx.push(best_dt.ln());
            ly.push(best.ln());
        }
        lag *= 2;
    }
    // a constant signal is Hölder of every order
    let exponent = if ly.len() < 2 { 1.0 } else { fit_line(&lx, &ly)?.0 };
    Ok((quotient, exponent))
}

/// Hölder check on the samples with `t >= delta`; passes iff the quotient is finite
/// and the exponent fit is at least `lambda - 0.1`. A necessary condition only.
pub fn holder_estimate(log: &TrajectoryLog, field: HolderField, lambda: f64, delta: f64) -> Result<VerificationReport> {
    let window: Vec<_> = log.samples.iter().filter(|s| s.t >= delta).collect();
    let times: Vec<f64> = window.iter().map(|s| s.t).collect();
    let values: Vec<Vec<f64>> = window
        .iter()
        .map(|s| match field {
            HolderField::Output => s.y.clone(),
            HolderField::VNorm => vec![s.v_l2],
        })
        .collect();
    let (quotient, exponent) = holder_estimate_series(&times, &values, lambda)?;
    let passed = quotient.is_finite() && exponent >= lambda - 0.1;
    let mut r = VerificationReport::new(
        "holder",
        passed,
        format!("quotient finite and exponent >= {}", lambda - 0.1),
        "empirical necessary condition for Holder continuity",
    )
    .with("lambda", lambda)
    .with("quotient", quotient)
    .with("exponent", exponent);
    if !passed {
        r.offending_times.push(delta);
    }
    Ok(r)
}

/// Sup over time and channels of `|y_a - y_b|` for two logs on the same grid.
pub fn output_gap(a: &TrajectoryLog, b: &TrajectoryLog) -> Result<(f64, f64)> {
    if a.len() != b.len() || a.channels != b.channels {
        return Err(Error::Domain(format!(
            "log grids differ: {} samples x {} channels vs {} x {}",
            a.len(),
            a.channels,
            b.len(),
            b.channels
        )));
    }
    let (mut gap, mut at) = (0.0f64, a.samples.first().map_or(0.0, |s| s.t));
    for (sa, sb) in a.samples.iter().zip(&b.samples) {
        if (sa.t - sb.t).abs() > 1e-9 * sa.t.abs().max(1.0) {
            return Err(Error::Domain(format!("log grids differ at t = {} vs {}", sa.t, sb.t)));
        }
        for (ya, yb) in sa.y.iter().zip(&sb.y) {
            let d = (ya - yb).abs();
            if d > gap {
                gap = d;
                at = sa.t;
            }
        }
    }
    Ok((gap, at))
}

/// Output agreement between two discretizations of the same scenario.
pub fn cross_discretization_check(fem: &TrajectoryLog, spectral: &TrajectoryLog, tolerance: f64) -> Result<VerificationReport> {
    let (gap, at) = output_gap(fem, spectral)?;
    let passed = gap <= tolerance;
    let mut r = VerificationReport::new(
        "cross-discretization",
        passed,
        format!("sup |y_fem - y_spec| <= {tolerance}"),
        "finite element and Galerkin outputs agree",
    )
    .with("gap", gap)
    .with("t_gap", at);
    if !passed {
        r.offending_times.push(at);
    }
    Ok(r)
}

/// Ceilings for [`boundedness_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ceilings {
    pub v_l2: f64,
    pub u_l2: f64,
    pub u_rate: f64,
}

impl Default for Ceilings {
    fn default() -> Self {
        Self {
            v_l2: 1e6,
            u_l2: 1e6,
            u_rate: 1e6,
        }
    }
}

/// Sups of `||v||`, `||u||` and the difference quotient of `||u||`.
pub fn boundedness_check(log: &TrajectoryLog, ceilings: &Ceilings) -> VerificationReport {
    let mut sup = (0.0f64, 0.0f64, 0.0f64);
    let mut offending = Vec::new();
    for (k, s) in log.samples.iter().enumerate() {
        let rate = if k > 0 {
            let p = &log.samples[k - 1];
            (s.u_l2 - p.u_l2).abs() / (s.t - p.t)
        } else {
            0.0
        };
        let bad = !(s.v_l2 <= ceilings.v_l2 && s.u_l2 <= ceilings.u_l2 && rate <= ceilings.u_rate);
        if bad {
            offending.push(s.t);
        }
        sup = (nan_max(sup.0, s.v_l2), nan_max(sup.1, s.u_l2), nan_max(sup.2, rate));
    }
    let mut r = VerificationReport::new(
        "boundedness",
        offending.is_empty(),
        format!(
            "sup v_l2 <= {}, sup u_l2 <= {}, sup |d u_l2/dt| <= {}",
            ceilings.v_l2, ceilings.u_l2, ceilings.u_rate
        ),
        "states stay bounded in L2",
    )
    .with("sup_v_l2", sup.0)
    .with("sup_u_l2", sup.1)
    .with("sup_u_rate", sup.2);
    r.offending_times = offending;
    r
}

/// `max` that propagates NaN so that a corrupt sample is not hidden.
fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// Pure Neumann diffusion from `v0`: `1' M v` must stay within `rel_tol` of its initial value.
pub fn mass_conservation_check(
    disc: &FemDiscretization,
    params: &ModelParams,
    v0: &[f64],
    t_end: f64,
    cfg: &IntegratorConfig,
    rel_tol: f64,
) -> Result<VerificationReport> {
    crate::error::check_len("mass check initial state", disc.size(), v0.len())?;
    let sys = ClosedLoop::open_loop(disc, *params).with_physics(Physics::DIFFUSION_ONLY);
    let mut x0 = v0.to_vec();
    x0.resize(2 * disc.size(), 0.0);
    let n = disc.size();
    let mass0 = disc.ops.integral(v0);
    let (drifts, _, _) = integrate(&sys, &x0, (0.0, t_end), cfg, &sample_grid(0.0, t_end, t_end / 100.0), &[], |t, x| {
        Ok((t, (disc.ops.integral(&x[..n]) - mass0).abs() / mass0.abs().max(f64::MIN_POSITIVE)))
    })?;
    let worst = drifts.iter().map(|d| d.1).fold(0.0, f64::max);
    let mut r = VerificationReport::new(
        "mass",
        worst <= rel_tol,
        format!("relative drift <= {rel_tol}"),
        "Neumann diffusion conserves the integral of v",
    )
    .with("initial_mass", mass0)
    .with("max_relative_drift", worst);
    r.offending_times = drifts.iter().filter(|d| !(d.1 <= rel_tol)).map(|d| d.0).collect();
    Ok(r)
}

/// Eigendecay of mode `(j, k)` on both discretizations.
pub fn eigendecay_study(
    params: &ModelParams,
    fem: &FemDiscretization,
    basis: &SpectralBasis,
    mode: (usize, usize),
    t_end: f64,
    cfg: &IntegratorConfig,
    fem_tolerance: Tolerance,
    spectral_tolerance: Tolerance,
) -> Result<[VerificationReport; 2]> {
    let i = basis
        .index_of(mode.0, mode.1)
        .ok_or_else(|| Error::Domain(format!("mode {mode:?} is not in the spectral basis")))?;
    let alpha = basis.eigenvalues[i];
    let v0 = fem.mesh.interpolate(|x, y| basis.eval_mode(i, x, y));
    let mut a = linear_decay_check(fem, params, &v0, alpha, t_end, cfg, fem_tolerance)?;
    a.check = "decay-fem".into();
    let mut unit = vec![0.0; basis.len()];
    unit[i] = 1.0;
    let mut b = linear_decay_check(basis, params, &unit, alpha, t_end, cfg, spectral_tolerance)?;
    b.check = "decay-spectral".into();
    Ok([a, b])
}

/// Initial state `theta_00 + theta_10 + theta_01` with `u = 0`, on either discretization.
pub fn smooth_initial_modes() -> [(usize, usize); 3] {
    [(0, 0), (1, 0), (0, 1)]
}

/// Outputs of the open-loop model from [`smooth_initial_modes`] on a finite element mesh and a spectral basis.
pub fn smooth_open_loop_logs(
    params: &ModelParams,
    fem: &FemDiscretization,
    basis: &SpectralBasis,
    t_end: f64,
    sample_dt: f64,
    cfg: &IntegratorConfig,
) -> Result<(TrajectoryLog, TrajectoryLog)> {
    let mut coeffs = vec![0.0; basis.len()];
    for (j, k) in smooth_initial_modes() {
        let i = basis
            .index_of(j, k)
            .ok_or_else(|| Error::Domain(format!("mode ({j}, {k}) is not in the spectral basis")))?;
        coeffs[i] = 1.0;
    }
    let mut xf = basis.to_nodal(&coeffs, &fem.mesh);
    xf.resize(2 * fem.size(), 0.0);
    let mut xs = coeffs;
    xs.resize(2 * basis.len(), 0.0);
    let fem_run = integrate_closed_loop(&ClosedLoop::open_loop(fem, *params), &xf, (0.0, t_end), cfg, sample_dt, &[])?;
    let spec_run = integrate_closed_loop(&ClosedLoop::open_loop(basis, *params), &xs, (0.0, t_end), cfg, sample_dt, &[])?;
    Ok((fem_run.log, spec_run.log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funnel::FunnelRadius;
    use crate::integrate::Sample;

    fn sample(t: f64, margin: f64) -> Sample {
        Sample {
            t,
            y: vec![0.0; 4],
            y_ref: vec![0.0; 4],
            e_norm: 0.0,
            funnel_radius: FunnelRadius::Bounded(1.0),
            i_se: vec![0.0; 4],
            v_l2: 0.0,
            u_l2: 0.0,
            margin,
        }
    }

    fn log_of(samples: Vec<Sample>) -> TrajectoryLog {
        let mut log = TrajectoryLog::new(4);
        log.samples = samples;
        log
    }

    #[test]
    fn funnel_examples() {
        let log = log_of((1..=10).map(|k| sample(k as f64, 0.3 + k as f64 * 0.01)).collect());
        let r = check_funnel_invariant(&log, 0.5).unwrap();
        assert!(r.passed);
        assert!((r.measured("eps0").unwrap() - 0.31).abs() < 1e-15);

        let mut samples: Vec<_> = (1..=10).map(|k| sample(k as f64, 0.5)).collect();
        samples[6].margin = -0.01;
        let r = check_funnel_invariant(&log_of(samples), 0.5).unwrap();
        assert!(!r.passed);
        assert_eq!(r.offending_times, vec![7.0]);
        assert!(check_funnel_invariant(&TrajectoryLog::new(4), 0.5).is_err());
    }

    #[test]
    fn energy_examples() {
        let params = ModelParams::default();
        let budget = crate::model::energy_budget(&params, 0.0, 0.0, 0.75, 1.0).unwrap();
        let mut samples: Vec<_> = (0..5).map(|k| sample(k as f64 * 0.01, 1.0)).collect();
        for s in &mut samples {
            s.funnel_radius = FunnelRadius::Unbounded;
        }
        let r = check_energy_bound(&log_of(samples.clone()), &budget, &params, 0.0, 0.0).unwrap();
        assert!(r.passed);

        samples[3].v_l2 = 100.0;
        let r = check_energy_bound(&log_of(samples.clone()), &budget, &params, 0.0, 0.0).unwrap();
        assert!(!r.passed);
        assert_eq!(r.offending_times, vec![0.03]);

        samples[4].funnel_radius = FunnelRadius::Bounded(3.0);
        assert!(matches!(
            check_energy_bound(&log_of(samples), &budget, &params, 0.0, 0.0),
            Err(Error::Inapplicable(_))
        ));
    }

    #[test]
    fn holder_constant_and_sqrt() {
        let times: Vec<f64> = (0..200).map(|k| 0.01 + k as f64 * 0.99 / 199.0).collect();
        let constant: Vec<Vec<f64>> = times.iter().map(|_| vec![2.0]).collect();
        let (q, e) = holder_estimate_series(&times, &constant, 0.5).unwrap();
        assert_eq!(q, 0.0);
        assert!(e >= 0.4);

        let root: Vec<Vec<f64>> = times.iter().map(|t| vec![(t - 0.01).sqrt()]).collect();
        let (q, e) = holder_estimate_series(&times, &root, 0.5).unwrap();
        assert!(q.is_finite() && q <= 1.0 + 1e-12);
        assert!((e - 0.5).abs() < 0.05, "exponent {e}");

        assert!(holder_estimate_series(&times[..50], &root[..50], 0.5).is_err());
    }

    #[test]
    fn boundedness_examples() {
        let zero = log_of((0..5).map(|k| sample(k as f64, 1.0)).collect());
        let r = boundedness_check(&zero, &Ceilings::default());
        assert!(r.passed);
        assert_eq!(r.measured("sup_v_l2"), Some(0.0));

        let mut diverging: Vec<_> = (0..5).map(|k| sample(k as f64, 1.0)).collect();
        for (k, s) in diverging.iter_mut().enumerate() {
            s.v_l2 = 10f64.powi(3 * k as i32);
        }
        let r = boundedness_check(&log_of(diverging), &Ceilings::default());
        assert!(!r.passed);
        assert_eq!(r.offending_times, vec![3.0, 4.0]);
    }

    #[test]
    fn identical_logs_have_no_gap() {
        let log = log_of((0..5).map(|k| sample(k as f64, 1.0)).collect());
        let r = cross_discretization_check(&log, &log, 1e-2).unwrap();
        assert_eq!(r.measured("gap"), Some(0.0));
        let short = log_of(vec![sample(0.0, 1.0)]);
        assert!(cross_discretization_check(&log, &short, 1e-2).is_err());
    }
}
