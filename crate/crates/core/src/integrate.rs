//! Adaptive Bogacki-Shampine 3(2) integration with FSAL and cubic Hermite dense output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funnel::FunnelRadius;

/// A first-order system `x' = f(t, x)`.
///
/// `rhs` may fail, e.g. with a funnel violation at a trial stage; the driver then
/// rejects the step and retries with a smaller one.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()>;
}

impl<F> OdeSystem for (usize, F)
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    fn dim(&self) -> usize {
        self.0
    }

    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        (self.1)(t, x, dx);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub safety: f64,
    pub max_rejects: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-3,
            atol: 1e-6,
            dt_init: 1e-3,
            dt_min: 1e-12,
            dt_max: 1.0,
            safety: 0.9,
            max_rejects: 60,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::Domain(format!(
                "tolerances must be positive, got rtol {} atol {}",
                self.rtol, self.atol
            )));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return Err(Error::Domain(format!(
                "need 0 < dt_min <= dt_init <= dt_max, got {} {} {}",
                self.dt_min, self.dt_init, self.dt_max
            )));
        }
        if !(self.safety > 0.0 && self.safety < 1.0) {
            return Err(Error::Domain(format!("safety must lie in (0, 1), got {}", self.safety)));
        }
        if self.max_rejects == 0 {
            return Err(Error::Domain("max_rejects must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of one trial step.
#[derive(Debug, Clone)]
pub struct Rk23Step {
    /// Third-order solution.
    pub x_next: Vec<f64>,
    /// `f(t + dt, x_next)`, reused as the first stage of the next step.
    pub f_next: Vec<f64>,
    /// Weighted RMS of the embedded error; the step is acceptable when `<= 1`.
    pub error_estimate: f64,
    pub dt_suggest: f64,
}

/// Stage buffers reused across steps.
#[derive(Debug, Clone)]
pub struct Rk23 {
    k2: Vec<f64>,
    k3: Vec<f64>,
    tmp: Vec<f64>,
}

const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

impl Rk23 {
    pub fn new(dim: usize) -> Self {
        Self {
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Takes one trial step of size `dt` from `(t, x)` with `f0 = f(t, x)`.
    ///
    /// Writes the new state and its derivative into `x_next` / `f_next` and
    /// returns `(error_estimate, dt_suggest)`.
    #[allow(clippy::too_many_arguments)]
    pub fn step<S: OdeSystem + ?Sized>(
        &mut self,
        sys: &S,
        t: f64,
        x: &[f64],
        f0: &[f64],
        dt: f64,
        cfg: &IntegratorConfig,
        x_next: &mut [f64],
        f_next: &mut [f64],
    ) -> Result<(f64, f64)> {
        let n = x.len();

        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * dt * f0[i];
        }
        sys.rhs(t + 0.5 * dt, &self.tmp, &mut self.k2)?;

        for i in 0..n {
            self.tmp[i] = x[i] + 0.75 * dt * self.k2[i];
        }
        sys.rhs(t + 0.75 * dt, &self.tmp, &mut self.k3)?;

        for i in 0..n {
            x_next[i] = x[i] + dt * (2.0 / 9.0 * f0[i] + 1.0 / 3.0 * self.k2[i] + 4.0 / 9.0 * self.k3[i]);
        }
        sys.rhs(t + dt, x_next, f_next)?;

        let mut acc = 0.0;
        for i in 0..n {
            let e = dt
                * (-5.0 / 72.0 * f0[i] + 1.0 / 12.0 * self.k2[i] + 1.0 / 9.0 * self.k3[i]
                    - 1.0 / 8.0 * f_next[i]);
            let scale = cfg.atol + cfg.rtol * x[i].abs().max(x_next[i].abs());
            acc += (e / scale).powi(2);
        }
        let err = if n == 0 { 0.0 } else { (acc / n as f64).sqrt() };
        let factor = if err == 0.0 {
            MAX_FACTOR
        } else {
            (cfg.safety * err.powf(-1.0 / 3.0)).clamp(MIN_FACTOR, MAX_FACTOR)
        };
        let dt_suggest = (dt * factor).clamp(cfg.dt_min, cfg.dt_max);
        if !err.is_finite() {
            return Ok((f64::INFINITY, (0.5 * dt).max(cfg.dt_min)));
        }
        Ok((err, dt_suggest))
    }
}

/// One trial step of the Bogacki-Shampine pair. `f0` is `f(t, x)` when known (FSAL).
pub fn rk23_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    x: &[f64],
    f0: Option<&[f64]>,
    dt: f64,
    cfg: &IntegratorConfig,
) -> Result<Rk23Step> {
    let n = sys.dim();
    crate::error::check_len("rk23 state", n, x.len())?;
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("step size must be positive, got {dt}")));
    }
    let f0 = match f0 {
        Some(f) => f.to_vec(),
        None => {
            let mut f = vec![0.0; n];
            sys.rhs(t, x, &mut f)?;
            f
        }
    };
    let mut stepper = Rk23::new(n);
    let mut x_next = vec![0.0; n];
    let mut f_next = vec![0.0; n];
    let (error_estimate, dt_suggest) = stepper.step(sys, t, x, &f0, dt, cfg, &mut x_next, &mut f_next)?;
    Ok(Rk23Step {
        x_next,
        f_next,
        error_estimate,
        dt_suggest,
    })
}

/// Cubic Hermite interpolant on `[t, t + h]` from both end states and derivatives.
pub fn hermite(theta: f64, h: f64, x0: &[f64], f0: &[f64], x1: &[f64], f1: &[f64], out: &mut [f64]) {
    if theta == 1.0 {
        out.copy_from_slice(x1);
        return;
    }
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + theta;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    for i in 0..out.len() {
        out[i] = h00 * x0[i] + h * h10 * f0[i] + h01 * x1[i] + h * h11 * f1[i];
    }
}

/// Counters of one integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
}

/// Uniform sample grid `t0 + k dt` inside `[t0, t1]`.
pub fn sample_grid(t0: f64, t1: f64, dt: f64) -> Vec<f64> {
    let count = ((t1 - t0) / dt * (1.0 + 1e-12)).floor() as usize;
    (0..=count).map(|k| (t0 + k as f64 * dt).min(t1)).collect()
}

/// Integrates `sys` over `[t0, t1]`, calling `sample` at each grid time.
///
/// Step endpoints never cross a time in `stops`. A funnel violation raised by the
/// right-hand side or by `sample` rejects the step; the step is retried at half
/// size. Returns the samples, the terminal state and step counters.
pub fn integrate<S, T, F>(
    sys: &S,
    x0: &[f64],
    (t0, t1): (f64, f64),
    cfg: &IntegratorConfig,
    sample_times: &[f64],
    stops: &[f64],
    mut sample: F,
) -> Result<(Vec<T>, Vec<f64>, IntegrationStats)>
where
    S: OdeSystem + ?Sized,
    F: FnMut(f64, &[f64]) -> Result<T>,
{
    cfg.validate()?;
    let n = sys.dim();
    crate::error::check_len("initial state", n, x0.len())?;
    if !(t1 >= t0) {
        return Err(Error::Domain(format!("integration interval [{t0}, {t1}] is empty")));
    }

    let mut stops: Vec<f64> = stops.iter().copied().filter(|&s| s > t0 && s < t1).collect();
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    let mut next_stop = 0usize;

    let mut out = Vec::with_capacity(sample_times.len());
    let mut next_sample = 0usize;
    while next_sample < sample_times.len() && sample_times[next_sample] < t0 {
        next_sample += 1;
    }
    if next_sample < sample_times.len() && sample_times[next_sample] == t0 {
        out.push(sample(t0, x0)?);
        next_sample += 1;
    }

    let mut t = t0;
    let mut x = x0.to_vec();
    let mut f = vec![0.0; n];
    sys.rhs(t, &x, &mut f)?;
    let mut x_new = vec![0.0; n];
    let mut f_new = vec![0.0; n];
    let mut dense = vec![0.0; n];
    let mut stepper = Rk23::new(n);
    let mut stats = IntegrationStats::default();
    let mut dt = cfg.dt_init;
    let mut consecutive = 0usize;
    let mut pending: Vec<T> = Vec::new();

    while t < t1 {
        while next_stop < stops.len() && stops[next_stop] <= t {
            next_stop += 1;
        }
        let target = if next_stop < stops.len() { stops[next_stop].min(t1) } else { t1 };
        let mut h = dt.min(target - t);
        let mut t_end = t + h;
        // avoid a sliver step right before the target
        if target - t_end < 1e-3 * h {
            t_end = target;
            h = target - t;
        }

        let trial = stepper.step(sys, t, &x, &f, h, cfg, &mut x_new, &mut f_new);
        let accepted = match trial {
            Ok((err, dt_suggest)) if err <= 1.0 => {
                pending.clear();
                let mut k = next_sample;
                let mut violation = None;
                while k < sample_times.len() && sample_times[k] <= t_end {
                    let ts = sample_times[k];
                    hermite((ts - t) / h, h, &x, &f, &x_new, &f_new, &mut dense);
                    match sample(ts, &dense) {
                        Ok(s) => pending.push(s),
                        Err(e @ Error::FunnelViolation { .. }) => {
                            violation = Some(e);
                            break;
                        }
                        Err(e) => return Err(e),
                    }
                    k += 1;
                }
                if violation.is_none() {
                    next_sample = k;
                    out.append(&mut pending);
                    dt = dt_suggest;
                    true
                } else {
                    dt = (0.5 * h).max(cfg.dt_min);
                    false
                }
            }
            Ok((_, dt_suggest)) => {
                dt = dt_suggest.min(0.5 * h).max(cfg.dt_min);
                false
            }
            Err(Error::FunnelViolation { .. }) => {
                dt = (0.5 * h).max(cfg.dt_min);
                false
            }
            Err(e) => return Err(e),
        };

        if accepted {
            t = t_end;
            std::mem::swap(&mut x, &mut x_new);
            std::mem::swap(&mut f, &mut f_new);
            stats.accepted += 1;
            consecutive = 0;
        } else {
            stats.rejected += 1;
            consecutive += 1;
            if consecutive > cfg.max_rejects {
                return Err(Error::IntegrationAbort {
                    t,
                    dt: h,
                    reason: format!("{consecutive} consecutive step rejections"),
                });
            }
        }
    }

    Ok((out, x, stats))
}

/// One logged observation of a closed-loop (or open-loop) run.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub y: Vec<f64>,
    pub y_ref: Vec<f64>,
    pub e_norm: f64,
    pub funnel_radius: FunnelRadius,
    pub i_se: Vec<f64>,
    pub v_l2: f64,
    pub u_l2: f64,
    pub margin: f64,
}

impl Sample {
    pub fn error(&self) -> Vec<f64> {
        self.y.iter().zip(&self.y_ref).map(|(a, b)| a - b).collect()
    }
}

/// A sampled trajectory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub channels: usize,
    pub samples: Vec<Sample>,
    /// Field snapshots `(t, state)` at requested times.
    pub snapshots: Vec<(f64, Vec<f64>)>,
}

impl TrajectoryLog {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            samples: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Times strictly increasing and channel counts consistent.
    pub fn validate(&self) -> Result<()> {
        for (k, s) in self.samples.iter().enumerate() {
            if s.y.len() != self.channels || s.y_ref.len() != self.channels || s.i_se.len() != self.channels {
                return Err(Error::Format {
                    line: k + 2,
                    message: format!("sample at t = {} has inconsistent channel count", s.t),
                });
            }
            if k > 0 && !(s.t > self.samples[k - 1].t) {
                return Err(Error::Format {
                    line: k + 2,
                    message: format!("times not strictly increasing at t = {}", s.t),
                });
            }
        }
        Ok(())
    }

    /// Componentwise `max_t |y_i(t)|` over the output channel.
    pub fn sup_y(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| crate::funnel::norm(&s.y))
            .fold(0.0, f64::max)
    }
}
