//! Semidiscrete FitzHugh-Nagumo system with optional stimulus and funnel feedback.
//!
//! The state is the stacked vector `[v; u]`. The `v` equation reads
//! `v' = -A_h v + P(p3(v)) - u + I_si(t) + B_h I_se(t)`, where the discretization
//! supplies the diffusion operator `A_h`, the projection `P` of the cubic, the
//! stimulus footprint and the control injection `B_h`.

use crate::error::{check_len, Result};
use crate::fem::{assemble, boundary_output, AssembledOperators, Mesh, OutputOperator};
use crate::funnel::{self, ControllerConfig, FunnelRadius, FunnelSpec};
use crate::integrate::{integrate, sample_grid, IntegrationStats, IntegratorConfig, OdeSystem, Sample, TrajectoryLog};
use crate::model::ModelParams;
use crate::reference::ReferenceSignal;
use crate::scenario::{Region, StimulusProgram};

/// Spatial discretization of the monodomain equation.
pub trait Discretization {
    /// Length of `v` (and of `u`).
    fn size(&self) -> usize;
    fn channels(&self) -> usize;
    /// `y = B' v`.
    fn output(&self, v: &[f64], y: &mut [f64]);
    /// `out = -A_h v`.
    fn diffusion(&self, v: &[f64], out: &mut [f64]);
    /// `out += P(p3(v))`.
    fn add_reaction(&self, params: &ModelParams, v: &[f64], out: &mut [f64]);
    /// `out += B_h i_se`.
    fn add_control(&self, i_se: &[f64], out: &mut [f64]);
    /// Representation of the indicator of `region` as a `v`-rate.
    fn stimulus_load(&self, region: &Region) -> Vec<f64>;
    fn l2_norm(&self, v: &[f64]) -> f64;
}

/// P1 finite elements with lumped mass on the time derivative and the reaction.
#[derive(Debug, Clone)]
pub struct FemDiscretization {
    pub mesh: Mesh,
    pub ops: AssembledOperators,
    pub out: OutputOperator,
    inv_lumped: Vec<f64>,
    control_cols: Vec<Vec<(usize, f64)>>,
}

impl FemDiscretization {
    /// Structured mesh with the four-side boundary output.
    pub fn new(nx: usize, ny: usize, params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let mesh = Mesh::new(nx, ny, params.extent)?;
        let ops = assemble(&mesh, &params.diffusion)?;
        let out = boundary_output(&mesh);
        Ok(Self::with_output(mesh, ops, out))
    }

    pub fn with_output(mesh: Mesh, ops: AssembledOperators, out: OutputOperator) -> Self {
        let inv_lumped: Vec<f64> = ops.lumped_mass.iter().map(|m| 1.0 / m).collect();
        let control_cols = out
            .columns
            .iter()
            .map(|c| {
                c.iter()
                    .enumerate()
                    .filter(|(_, w)| **w != 0.0)
                    .map(|(k, w)| (k, w * inv_lumped[k]))
                    .collect()
            })
            .collect();
        Self {
            mesh,
            ops,
            out,
            inv_lumped,
            control_cols,
        }
    }

    /// Stimulus load `M_L^{-1} M mask` for an arbitrary nodal mask.
    pub fn mask_load(&self, mask: &[f64]) -> Vec<f64> {
        let mut load = self.ops.mass.mul_vec(mask);
        load.iter_mut().zip(&self.inv_lumped).for_each(|(l, w)| *l *= w);
        load
    }
}

impl Discretization for FemDiscretization {
    fn size(&self) -> usize {
        self.mesh.node_count()
    }

    fn channels(&self) -> usize {
        self.out.channels()
    }

    fn output(&self, v: &[f64], y: &mut [f64]) {
        self.out.apply_into(v, y);
    }

    fn diffusion(&self, v: &[f64], out: &mut [f64]) {
        self.ops.stiffness.mul_vec_into(v, out);
        for (o, w) in out.iter_mut().zip(&self.inv_lumped) {
            *o *= -w;
        }
    }

    fn add_reaction(&self, params: &ModelParams, v: &[f64], out: &mut [f64]) {
        for (o, &x) in out.iter_mut().zip(v) {
            *o += params.p3(x);
        }
    }

    fn add_control(&self, i_se: &[f64], out: &mut [f64]) {
        for (&a, col) in i_se.iter().zip(&self.control_cols) {
            if a != 0.0 {
                for &(k, w) in col {
                    out[k] += a * w;
                }
            }
        }
    }

    fn stimulus_load(&self, region: &Region) -> Vec<f64> {
        self.mask_load(&region.mask(&self.mesh))
    }

    fn l2_norm(&self, v: &[f64]) -> f64 {
        self.ops.l2_norm_sq(v).max(0.0).sqrt()
    }
}

/// Which terms of the model are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Physics {
    /// Cubic reaction and the `-u` coupling in the `v` equation.
    pub reaction: bool,
    /// The recovery equation `u' = c5 v - c4 u` (otherwise `u' = 0`).
    pub recovery: bool,
}

impl Physics {
    pub const FULL: Physics = Physics {
        reaction: true,
        recovery: true,
    };
    pub const DIFFUSION_ONLY: Physics = Physics {
        reaction: false,
        recovery: false,
    };
}

/// Funnel feedback closing the loop.
#[derive(Clone, Copy)]
pub struct Control<'a> {
    pub funnel: FunnelSpec,
    pub cfg: ControllerConfig,
    pub reference: &'a dyn ReferenceSignal,
}

/// A pulsed intracellular stimulus prepared for one discretization.
#[derive(Debug, Clone)]
pub struct Forcing {
    pub program: StimulusProgram,
    load: Vec<f64>,
}

impl Forcing {
    pub fn new<D: Discretization + ?Sized>(disc: &D, program: StimulusProgram) -> Result<Self> {
        program.validate()?;
        let load = disc.stimulus_load(&program.region);
        Ok(Self { program, load })
    }

    pub fn load(&self) -> &[f64] {
        &self.load
    }
}

pub struct ClosedLoop<'a, D: Discretization + ?Sized> {
    pub disc: &'a D,
    pub params: ModelParams,
    pub physics: Physics,
    pub forcing: Vec<Forcing>,
    pub control: Option<Control<'a>>,
}

/// Quantities derived from a state at time `t`.
struct Observed {
    y: Vec<f64>,
    y_ref: Vec<f64>,
    e: Vec<f64>,
    phi: f64,
    i_se: Vec<f64>,
}

impl<'a, D: Discretization + ?Sized> ClosedLoop<'a, D> {
    pub fn open_loop(disc: &'a D, params: ModelParams) -> Self {
        Self {
            disc,
            params,
            physics: Physics::FULL,
            forcing: Vec::new(),
            control: None,
        }
    }

    pub fn with_physics(mut self, physics: Physics) -> Self {
        self.physics = physics;
        self
    }

    pub fn with_forcing(mut self, forcing: Forcing) -> Self {
        self.forcing.push(forcing);
        self
    }

    pub fn with_control(mut self, control: Control<'a>) -> Self {
        self.control = Some(control);
        self
    }

    fn observe_control(&self, t: f64, v: &[f64]) -> Result<Observed> {
        let m = self.disc.channels();
        let mut y = vec![0.0; m];
        self.disc.output(v, &mut y);
        match &self.control {
            None => Ok(Observed {
                e: y.clone(),
                y,
                y_ref: vec![0.0; m],
                phi: 0.0,
                i_se: vec![0.0; m],
            }),
            Some(c) => {
                let mut y_ref = vec![0.0; m];
                c.reference.eval_into(t, &mut y_ref);
                let e: Vec<f64> = y.iter().zip(&y_ref).map(|(a, b)| a - b).collect();
                let phi = c.funnel.phi_unchecked(t.max(0.0));
                let mut i_se = vec![0.0; m];
                funnel::feedback_into(t, &e, phi, &c.cfg, &mut i_se)?;
                Ok(Observed {
                    y,
                    y_ref,
                    e,
                    phi,
                    i_se,
                })
            }
        }
    }

    /// Logged observation of state `x` at time `t`.
    pub fn observe(&self, t: f64, x: &[f64]) -> Result<Sample> {
        let n = self.disc.size();
        let (v, u) = x.split_at(n);
        let obs = self.observe_control(t, v)?;
        let (funnel_radius, margin) = match &self.control {
            Some(c) => (c.funnel.radius(t), funnel::funnel_margin(&obs.e, obs.phi)),
            None => (FunnelRadius::Unbounded, 1.0),
        };
        Ok(Sample {
            t,
            e_norm: funnel::norm(&obs.e),
            y: obs.y,
            y_ref: obs.y_ref,
            funnel_radius,
            i_se: obs.i_se,
            v_l2: self.disc.l2_norm(v),
            u_l2: self.disc.l2_norm(u),
            margin,
        })
    }

    /// Times where the right-hand side is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut stops: Vec<f64> = self.forcing.iter().flat_map(|f| f.program.breakpoints()).collect();
        if let Some(c) = &self.control {
            stops.push(c.funnel.gamma);
        }
        stops
    }
}

impl<D: Discretization + ?Sized> OdeSystem for ClosedLoop<'_, D> {
    fn dim(&self) -> usize {
        2 * self.disc.size()
    }

    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        let n = self.disc.size();
        let (v, u) = x.split_at(n);
        let (dv, du) = dx.split_at_mut(n);

        self.disc.diffusion(v, dv);
        if self.physics.reaction {
            self.disc.add_reaction(&self.params, v, dv);
            for (d, &w) in dv.iter_mut().zip(u) {
                *d -= w;
            }
        }
        for f in &self.forcing {
            let a = f.program.amplitude * f.program.profile(t);
            if a != 0.0 {
                for (d, &l) in dv.iter_mut().zip(&f.load) {
                    *d += a * l;
                }
            }
        }
        if self.control.is_some() {
            let obs = self.observe_control(t, v)?;
            self.disc.add_control(&obs.i_se, dv);
        }

        if self.physics.recovery {
            for ((d, &vv), &uu) in du.iter_mut().zip(v).zip(u) {
                *d = self.params.recovery_rhs(vv, uu);
            }
        } else {
            du.fill(0.0);
        }
        Ok(())
    }
}

/// Result of a logged run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: TrajectoryLog,
    pub terminal: Vec<f64>,
    pub stats: IntegrationStats,
}

/// Integrates the closed loop over `t_span`, logging on the grid `t0 + k sample_dt`
/// and keeping full states at `snapshot_times`.
pub fn integrate_closed_loop<D: Discretization + ?Sized>(
    sys: &ClosedLoop<'_, D>,
    initial: &[f64],
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
    sample_dt: f64,
    snapshot_times: &[f64],
) -> Result<RunOutput> {
    check_len("closed-loop initial state", sys.dim(), initial.len())?;
    if !(sample_dt > 0.0) {
        return Err(crate::Error::Domain(format!("sample interval must be positive, got {sample_dt}")));
    }
    if let Some(c) = &sys.control {
        check_len("reference channels", sys.disc.channels(), c.reference.channels())?;
        c.reference.ensure_covers(t_span.0, t_span.1)?;
    }

    let grid = sample_grid(t_span.0, t_span.1, sample_dt);
    let mut snaps: Vec<f64> = snapshot_times
        .iter()
        .copied()
        .filter(|&s| s >= t_span.0 && s <= t_span.1)
        .collect();
    snaps.sort_by(f64::total_cmp);
    snaps.dedup();
    let mut times = grid.clone();
    times.extend(&snaps);
    times.sort_by(f64::total_cmp);
    times.dedup();

    let mut stops = sys.breakpoints();
    stops.extend(&snaps);

    enum Record {
        Sample(Sample),
        Snapshot(f64, Vec<f64>),
        Both(Sample, Vec<f64>),
    }
    let (records, terminal, stats) = integrate(sys, initial, t_span, cfg, &times, &stops, |t, x| {
        let on_grid = grid.binary_search_by(|g| g.total_cmp(&t)).is_ok();
        let is_snap = snaps.binary_search_by(|g| g.total_cmp(&t)).is_ok();
        Ok(match (on_grid, is_snap) {
            (true, true) => Record::Both(sys.observe(t, x)?, x.to_vec()),
            (false, true) => Record::Snapshot(t, x.to_vec()),
            _ => Record::Sample(sys.observe(t, x)?),
        })
    })?;

    let mut log = TrajectoryLog::new(sys.disc.channels());
    for r in records {
        match r {
            Record::Sample(s) => log.samples.push(s),
            Record::Snapshot(t, x) => log.snapshots.push((t, x)),
            Record::Both(s, x) => {
                log.snapshots.push((s.t, x));
                log.samples.push(s);
            }
        }
    }
    Ok(RunOutput { log, terminal, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::ZeroReference;

    #[test]
    fn rest_is_an_equilibrium() {
        let params = ModelParams::default();
        let disc = FemDiscretization::new(8, 8, &params).unwrap();
        let reference = ZeroReference(4);
        let sys = ClosedLoop::open_loop(&disc, params).with_control(Control {
            funnel: FunnelSpec::default(),
            cfg: ControllerConfig::default(),
            reference: &reference,
        });
        let x0 = vec![0.0; sys.dim()];
        let run = integrate_closed_loop(&sys, &x0, (0.0, 2.0), &IntegratorConfig::default(), 0.5, &[1.0]).unwrap();
        assert_eq!(run.log.len(), 5);
        assert!(run.log.samples.iter().all(|s| s.y.iter().all(|y| *y == 0.0)));
        assert_eq!(run.log.snapshots.len(), 1);
        assert!(run.log.samples[0].funnel_radius.is_unbounded());
        assert!(!run.log.samples[4].funnel_radius.is_unbounded());
    }

    #[test]
    fn reference_must_cover_span() {
        let params = ModelParams::default();
        let disc = FemDiscretization::new(2, 2, &params).unwrap();
        let reference =
            crate::reference::HermiteReference::new(vec![0.0, 1.0], vec![vec![0.0; 4], vec![0.0; 4]]).unwrap();
        let sys = ClosedLoop::open_loop(&disc, params).with_control(Control {
            funnel: FunnelSpec::default(),
            cfg: ControllerConfig::default(),
            reference: &reference,
        });
        let x0 = vec![0.0; sys.dim()];
        let r = integrate_closed_loop(&sys, &x0, (0.0, 2.0), &IntegratorConfig::default(), 0.5, &[]);
        assert!(matches!(r, Err(crate::Error::ReferenceDomain { .. })));
    }
}
