//! Browser demo: funnel tracking of the heart-beat reference on a coarse mesh.
//!
//! The page asks for three things: a funnel preview, a tracking run for chosen
//! gain and funnel time constant, and the membrane potential at a chosen time.

use wasm_bindgen::prelude::*;

use monodomain_funnel::closed_loop::{integrate_closed_loop, ClosedLoop, Control, FemDiscretization};
use monodomain_funnel::funnel::{ControllerConfig, FunnelShape, FunnelSpec};
use monodomain_funnel::integrate::{IntegratorConfig, TrajectoryLog};
use monodomain_funnel::model::ModelParams;
use monodomain_funnel::reference::HermiteReference;
use monodomain_funnel::scenario::{self, ReentryProtocol, StimulusProgram};
use monodomain_funnel::Result;

const SAMPLE_DT: f64 = 0.25;
const FIELD_EVERY: f64 = 2.0;

fn js(e: monodomain_funnel::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// `1 / phi(t)` on `n` equally spaced times in `[0, t_end]`; `Infinity` while `phi = 0`.
pub fn funnel_radius_curve(gamma: f64, tau: f64, t_end: f64, n: usize) -> Result<Vec<f64>> {
    let spec = FunnelSpec {
        gamma,
        shape: FunnelShape::Tanh { tau },
    };
    spec.validate()?;
    let step = t_end / (n.max(2) - 1) as f64;
    Ok((0..n).map(|k| spec.radius(k as f64 * step).as_f64()).collect())
}

#[wasm_bindgen]
pub fn funnel_radius(gamma: f64, tau: f64, t_end: f64, n: usize) -> std::result::Result<Vec<f64>, JsError> {
    funnel_radius_curve(gamma, tau, t_end, n).map_err(js)
}

/// Coarse-mesh copy of the full experiment: reference, reentry state and the last
/// tracking run.
#[wasm_bindgen]
pub struct Demo {
    cells: usize,
    params: ModelParams,
    disc: FemDiscretization,
    reference: TrajectoryLog,
    initial: Vec<f64>,
    last: Option<TrajectoryLog>,
}

impl Demo {
    pub fn build(cells: usize) -> Result<Self> {
        let params = ModelParams::default();
        let disc = FemDiscretization::new(cells, cells, &params)?;
        let cfg = IntegratorConfig::default();
        let reference = scenario::generate_reference(
            &disc,
            &params,
            &StimulusProgram::default(),
            scenario::REFERENCE_HORIZON,
            &cfg,
            SAMPLE_DT,
        )?;
        let reentry = scenario::simulate_reentry(&disc, &params, &ReentryProtocol::default(), &cfg, SAMPLE_DT)?;
        Ok(Self {
            cells,
            params,
            disc,
            reference,
            initial: reentry.state,
            last: None,
        })
    }

    /// Runs the closed loop and returns `[t, |e|, radius]` triples, flattened.
    pub fn run(&mut self, k0: f64, tau: f64, t_end: f64) -> Result<Vec<f64>> {
        let controller = ControllerConfig {
            k0,
            ..ControllerConfig::default()
        };
        controller.validate()?;
        let funnel = FunnelSpec {
            shape: FunnelShape::Tanh { tau },
            ..FunnelSpec::default()
        };
        funnel.validate()?;
        let t_end = t_end.min(scenario::REFERENCE_HORIZON);
        let reference = HermiteReference::from_log_outputs(&self.reference)?;
        let sys = ClosedLoop::open_loop(&self.disc, self.params).with_control(Control {
            funnel,
            cfg: controller,
            reference: &reference,
        });
        let snaps: Vec<f64> = (0..=(t_end / FIELD_EVERY) as usize).map(|k| k as f64 * FIELD_EVERY).collect();
        let out = integrate_closed_loop(&sys, &self.initial, (0.0, t_end), &IntegratorConfig::default(), SAMPLE_DT, &snaps)?;
        let series = out
            .log
            .samples
            .iter()
            .flat_map(|s| [s.t, s.e_norm, s.funnel_radius.as_f64()])
            .collect();
        self.last = Some(out.log);
        Ok(series)
    }

    /// Nodal membrane potential of the last run nearest to `t`, row-major from the origin.
    /// Before any run this is the reentry state.
    pub fn field_at(&self, t: f64) -> Vec<f64> {
        let n = self.disc.mesh.node_count();
        let state = self
            .last
            .as_ref()
            .and_then(|log| {
                log.snapshots
                    .iter()
                    .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
                    .map(|(_, x)| x.as_slice())
            })
            .unwrap_or(&self.initial);
        state[..n].to_vec()
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(cells: usize) -> std::result::Result<Demo, JsError> {
        Self::build(cells).map_err(js)
    }

    /// Nodes per side of the mesh.
    pub fn side(&self) -> usize {
        self.cells + 1
    }

    /// Reference output `|y_ref|` on the sampling grid, as `[t, |y_ref|]` pairs.
    pub fn reference(&self) -> Vec<f64> {
        self.reference
            .samples
            .iter()
            .flat_map(|s| [s.t, s.y.iter().map(|y| y * y).sum::<f64>().sqrt()])
            .collect()
    }

    pub fn track(&mut self, k0: f64, tau: f64, t_end: f64) -> std::result::Result<Vec<f64>, JsError> {
        self.run(k0, tau, t_end).map_err(js)
    }

    pub fn field(&self, t: f64) -> Vec<f64> {
        self.field_at(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_curve_is_infinite_then_shrinks() {
        let r = funnel_radius_curve(0.05, 100.0, 400.0, 401).unwrap();
        assert_eq!(r[0], f64::INFINITY);
        assert!((r[400] - 1.0 / 4f64.tanh()).abs() < 1e-12);
        assert!(r.windows(2).skip(1).all(|w| w[1] <= w[0]));
        assert!(funnel_radius_curve(0.05, -1.0, 400.0, 10).is_err());
    }
}
