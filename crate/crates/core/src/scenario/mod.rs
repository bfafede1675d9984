//! The heart-beat tracking experiment: reference generation, reentry initial
//! conditions and the closed-loop run.

mod stimulus;

pub use stimulus::*;

use serde::{Deserialize, Serialize};

use crate::closed_loop::{integrate_closed_loop, ClosedLoop, Control, Discretization, Forcing, RunOutput};
use crate::error::{Error, Result};
use crate::funnel::{ControllerConfig, FunnelSpec};
use crate::integrate::{IntegratorConfig, TrajectoryLog};
use crate::model::ModelParams;
use crate::reference::HermiteReference;

/// Horizon of the reference run: both stimulus windows plus the decay.
pub const REFERENCE_HORIZON: f64 = 400.0;
/// Horizon of the closed-loop run; both clocks start at zero.
pub const TRACKING_HORIZON: f64 = 400.0;
/// Default logging interval.
pub const SAMPLE_DT: f64 = 0.05;

/// S1-S2 cross-field stimulation used to produce a reentry snapshot.
///
/// Each pulse has a smoothed profile whose support starts at the given time and
/// whose integral equals `pulse_duration`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReentryProtocol {
    pub s1_time: f64,
    pub s2_time: f64,
    pub s1_region: Region,
    pub s2_region: Region,
    pub s1_amp: f64,
    pub s2_amp: f64,
    pub pulse_duration: f64,
    pub smoothing_halfwidth: f64,
    pub snapshot_time: f64,
    /// The activity check is repeated this long after the snapshot.
    pub persistence: f64,
    /// Absolute floor on `||v||`; `None` derives it from a single-pulse reference run.
    pub activity_floor: Option<f64>,
    /// Fraction of the single-pulse peak used when the floor is derived.
    pub activity_fraction: f64,
}

impl Default for ReentryProtocol {
    fn default() -> Self {
        Self {
            s1_time: 0.0,
            s2_time: 20.0,
            s1_region: Region::Rect {
                x: [0.0, 0.1],
                y: [0.0, 1.0],
            },
            s2_region: Region::Rect {
                x: [0.0, 0.5],
                y: [0.0, 0.5],
            },
            s1_amp: 101.0,
            s2_amp: 101.0,
            pulse_duration: 1.0,
            smoothing_halfwidth: 0.25,
            snapshot_time: 100.0,
            persistence: 50.0,
            activity_floor: None,
            activity_fraction: 0.1,
        }
    }
}

impl ReentryProtocol {
    pub fn validate(&self) -> Result<()> {
        if !(self.s1_time >= 0.0 && self.s1_time < self.s2_time && self.s2_time < self.snapshot_time) {
            return Err(Error::Domain(format!(
                "reentry protocol needs 0 <= s1_time < s2_time < snapshot_time, got {}, {}, {}",
                self.s1_time, self.s2_time, self.snapshot_time
            )));
        }
        if !(self.persistence > 0.0) {
            return Err(Error::Domain("reentry persistence must be positive".into()));
        }
        if let Some(f) = self.activity_floor {
            if !(f >= 0.0 && f.is_finite()) {
                return Err(Error::Domain(format!("activity floor must be finite and nonnegative, got {f}")));
            }
        }
        if !(self.activity_fraction > 0.0 && self.activity_fraction.is_finite()) {
            return Err(Error::Domain("activity fraction must be positive".into()));
        }
        for p in self.programs() {
            p.validate()?;
        }
        Ok(())
    }

    fn pulse(&self, start: f64, amplitude: f64, region: Region) -> StimulusProgram {
        let w = self.smoothing_halfwidth;
        StimulusProgram {
            amplitude,
            region,
            windows: vec![(start + w, start + w + self.pulse_duration)],
            smoothing_halfwidth: w,
        }
    }

    /// The S1 and S2 pulses.
    pub fn programs(&self) -> [StimulusProgram; 2] {
        [
            self.pulse(self.s1_time, self.s1_amp, self.s1_region),
            self.pulse(self.s2_time, self.s2_amp, self.s2_region),
        ]
    }

    /// Same timing with both amplitudes set to zero.
    pub fn silenced(&self) -> Self {
        Self {
            s1_amp: 0.0,
            s2_amp: 0.0,
            ..self.clone()
        }
    }
}

/// Open-loop run from rest driven by `stim`, with `I_se = 0`.
///
/// The logged outputs `y` are the reference trajectory `y_ref = B' v_ref`.
pub fn generate_reference<D: Discretization + ?Sized>(
    disc: &D,
    params: &ModelParams,
    stim: &StimulusProgram,
    t_end: f64,
    cfg: &IntegratorConfig,
    sample_dt: f64,
) -> Result<TrajectoryLog> {
    stim.validate()?;
    if !(t_end >= stim.last_end()) {
        return Err(Error::Domain(format!(
            "reference horizon {t_end} ends before the last stimulus window ({})",
            stim.last_end()
        )));
    }
    let sys = ClosedLoop::open_loop(disc, *params).with_forcing(Forcing::new(disc, stim.clone())?);
    let x0 = vec![0.0; 2 * disc.size()];
    Ok(integrate_closed_loop(&sys, &x0, (0.0, t_end), cfg, sample_dt, &[])?.log)
}

/// Largest `||v||` over the first pulse of a reference log.
pub fn single_pulse_peak(log: &TrajectoryLog, stim: &StimulusProgram) -> f64 {
    let cutoff = match stim.windows.get(1) {
        Some(&(a, _)) => a - stim.smoothing_halfwidth,
        None => f64::INFINITY,
    };
    log.samples
        .iter()
        .filter(|s| s.t < cutoff)
        .map(|s| s.v_l2)
        .fold(0.0, f64::max)
}

/// Activity floor derived from a single-pulse reference run on `disc`.
pub fn derived_activity_floor<D: Discretization + ?Sized>(
    disc: &D,
    params: &ModelParams,
    stim: &StimulusProgram,
    fraction: f64,
    cfg: &IntegratorConfig,
    sample_dt: f64,
) -> Result<f64> {
    let single = StimulusProgram {
        windows: stim.windows[..1].to_vec(),
        ..stim.clone()
    };
    let horizon = single.last_end() + 100.0;
    let log = generate_reference(disc, params, &single, horizon, cfg, sample_dt)?;
    Ok(fraction * single_pulse_peak(&log, &single))
}

/// Result of an S1-S2 run, before the activity check.
#[derive(Debug, Clone)]
pub struct ReentryRun {
    pub snapshot_time: f64,
    /// Stacked `[v; u]` at the snapshot time.
    pub state: Vec<f64>,
    pub v_l2_at_snapshot: f64,
    /// `||v||` at `snapshot_time + persistence`.
    pub v_l2_later: f64,
    pub log: TrajectoryLog,
}

impl ReentryRun {
    /// The smaller of the two activity measurements and the time it was taken.
    pub fn weakest(&self, persistence: f64) -> (f64, f64) {
        if self.v_l2_later < self.v_l2_at_snapshot {
            (self.snapshot_time + persistence, self.v_l2_later)
        } else {
            (self.snapshot_time, self.v_l2_at_snapshot)
        }
    }

    pub fn sustained(&self, floor: f64) -> bool {
        self.v_l2_at_snapshot > floor && self.v_l2_later > floor
    }
}

/// Runs the S1-S2 protocol open loop without judging the outcome.
pub fn simulate_reentry<D: Discretization + ?Sized>(
    disc: &D,
    params: &ModelParams,
    proto: &ReentryProtocol,
    cfg: &IntegratorConfig,
    sample_dt: f64,
) -> Result<ReentryRun> {
    proto.validate()?;
    let mut sys = ClosedLoop::open_loop(disc, *params);
    for p in proto.programs() {
        sys = sys.with_forcing(Forcing::new(disc, p)?);
    }
    let n = disc.size();
    let t_end = proto.snapshot_time + proto.persistence;
    let run = integrate_closed_loop(&sys, &vec![0.0; 2 * n], (0.0, t_end), cfg, sample_dt, &[proto.snapshot_time])?;
    let (snapshot_time, state) = run
        .log
        .snapshots
        .first()
        .cloned()
        .ok_or_else(|| Error::Domain("snapshot time outside the reentry run".into()))?;
    Ok(ReentryRun {
        snapshot_time,
        v_l2_at_snapshot: disc.l2_norm(&state[..n]),
        v_l2_later: disc.l2_norm(&run.terminal[..n]),
        state,
        log: run.log,
    })
}

/// Runs the S1-S2 protocol and accepts the snapshot only if activity persists above `floor`.
pub fn generate_reentry<D: Discretization + ?Sized>(
    disc: &D,
    params: &ModelParams,
    proto: &ReentryProtocol,
    floor: f64,
    cfg: &IntegratorConfig,
    sample_dt: f64,
) -> Result<ReentryRun> {
    let run = simulate_reentry(disc, params, proto, cfg, sample_dt)?;
    if !run.sustained(floor) {
        let (t, measured) = run.weakest(proto.persistence);
        return Err(Error::ReentryNotEstablished { t, measured, floor });
    }
    Ok(run)
}

/// Settings of the closed-loop tracking run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingSetup {
    pub funnel: FunnelSpec,
    pub controller: ControllerConfig,
    pub t_end: f64,
    pub sample_dt: f64,
}

impl Default for TrackingSetup {
    fn default() -> Self {
        Self {
            funnel: FunnelSpec::default(),
            controller: ControllerConfig::default(),
            t_end: TRACKING_HORIZON,
            sample_dt: SAMPLE_DT,
        }
    }
}

/// Closed-loop run from `initial` tracking the outputs recorded in `reference_log`.
///
/// The intracellular stimulus is off; only the feedback current acts on the tissue.
pub fn run_tracking_experiment<D: Discretization + ?Sized>(
    disc: &D,
    params: &ModelParams,
    initial: &[f64],
    reference_log: &TrajectoryLog,
    setup: &TrackingSetup,
    cfg: &IntegratorConfig,
) -> Result<RunOutput> {
    setup.funnel.validate()?;
    setup.controller.validate()?;
    let reference = HermiteReference::from_log_outputs(reference_log)?;
    let sys = ClosedLoop::open_loop(disc, *params).with_control(Control {
        funnel: setup.funnel,
        cfg: setup.controller,
        reference: &reference,
    });
    integrate_closed_loop(&sys, initial, (0.0, setup.t_end), cfg, setup.sample_dt, &[])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_loop::FemDiscretization;

    #[test]
    fn protocol_defaults() {
        let p = ReentryProtocol::default();
        p.validate().unwrap();
        let [s1, s2] = p.programs();
        assert_eq!(s1.first_start(), 0.0);
        assert_eq!(s2.first_start(), 20.0);
        assert!((s1.last_end() - 1.5).abs() < 1e-15);
        let mut bad = p.clone();
        bad.s2_time = 200.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn reference_is_at_rest_before_the_stimulus() {
        let params = ModelParams::default();
        let disc = FemDiscretization::new(6, 6, &params).unwrap();
        let stim = StimulusProgram {
            windows: vec![(2.0, 3.0)],
            smoothing_halfwidth: 0.25,
            ..StimulusProgram::default()
        };
        let cfg = IntegratorConfig::default();
        let log = generate_reference(&disc, &params, &stim, 6.0, &cfg, 0.25).unwrap();
        for s in log.samples.iter().filter(|s| s.t < 1.75) {
            assert!(s.y.iter().all(|y| *y == 0.0));
        }
        assert!(log.sup_y() > 0.0);
        assert!(generate_reference(&disc, &params, &stim, 3.0, &cfg, 0.25).is_err());
        let again = generate_reference(&disc, &params, &stim, 6.0, &cfg, 0.25).unwrap();
        assert_eq!(format!("{:?}", log.samples), format!("{:?}", again.samples));
    }

    #[test]
    fn silent_protocol_is_rejected() {
        let params = ModelParams::default();
        let disc = FemDiscretization::new(4, 4, &params).unwrap();
        let proto = ReentryProtocol {
            s2_time: 2.0,
            snapshot_time: 3.0,
            persistence: 1.0,
            ..ReentryProtocol::default()
        }
        .silenced();
        let r = generate_reentry(&disc, &params, &proto, 1e-3, &IntegratorConfig::default(), 0.5);
        assert!(matches!(r, Err(Error::ReentryNotEstablished { .. })));
    }
}
