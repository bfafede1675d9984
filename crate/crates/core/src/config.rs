//! Run configuration documents (TOML).
//!
//! Every key is optional and falls back to the heart-beat experiment defaults.
//! Unknown keys are rejected, and errors name the offending key and line.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funnel::{ControllerConfig, FunnelSpec};
use crate::integrate::IntegratorConfig;
use crate::model::ModelParams;
use crate::scenario::{ReentryProtocol, StimulusProgram, REFERENCE_HORIZON, SAMPLE_DT, TRACKING_HORIZON};
use crate::verify::Ceilings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Reference,
    Reentry,
    Track,
    DiffusionTest,
    Converge,
    Verify,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Reference => "reference",
            Self::Reentry => "reentry",
            Self::Track => "track",
            Self::DiffusionTest => "diffusion-test",
            Self::Converge => "converge",
            Self::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizationConfig {
    /// Cells per side of the finite element mesh.
    pub mesh: [usize; 2],
    /// Largest cosine index per axis of the spectral basis.
    pub modes: [usize; 2],
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        Self {
            mesh: [64, 64],
            modes: [20, 20],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunTimes {
    pub reference_t_end: f64,
    pub track_t_end: f64,
    pub sample_dt: f64,
    /// Extra times at which full fields are written during `track`.
    pub snapshot_times: Vec<f64>,
}

impl Default for RunTimes {
    fn default() -> Self {
        Self {
            reference_t_end: REFERENCE_HORIZON,
            track_t_end: TRACKING_HORIZON,
            sample_dt: SAMPLE_DT,
            snapshot_times: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub dir: PathBuf,
    pub reference: String,
    pub reentry_snapshot: String,
    pub track: String,
    pub report: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            reference: "reference.csv".into(),
            reentry_snapshot: "reentry.snap".into(),
            track: "track.csv".into(),
            report: "report".into(),
        }
    }
}

impl OutputPaths {
    pub fn reference_path(&self) -> PathBuf {
        self.dir.join(&self.reference)
    }

    pub fn snapshot_path(&self) -> PathBuf {
        self.dir.join(&self.reentry_snapshot)
    }

    pub fn track_path(&self) -> PathBuf {
        self.dir.join(&self.track)
    }

    pub fn report_stem(&self) -> PathBuf {
        self.dir.join(&self.report)
    }
}

/// Tolerances and windows of the verification checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub funnel_delta: f64,
    pub holder_delta: f64,
    pub holder_lambda: f64,
    pub v_l2_ceiling: f64,
    pub u_l2_ceiling: f64,
    pub u_rate_ceiling: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        let c = Ceilings::default();
        Self {
            funnel_delta: 0.05,
            holder_delta: 1.0,
            holder_lambda: 0.5,
            v_l2_ceiling: c.v_l2,
            u_l2_ceiling: c.u_l2,
            u_rate_ceiling: c.u_rate,
        }
    }
}

impl CheckConfig {
    pub fn ceilings(&self) -> Ceilings {
        Ceilings {
            v_l2: self.v_l2_ceiling,
            u_l2: self.u_l2_ceiling,
            u_rate: self.u_rate_ceiling,
        }
    }
}

/// Pure-diffusion eigendecay experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionTestConfig {
    pub mode: [usize; 2],
    pub t_end: f64,
    /// Relative tolerance on the finite element rate.
    pub fem_tolerance: f64,
    /// Absolute tolerance on the spectral rate.
    pub spectral_tolerance: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for DiffusionTestConfig {
    fn default() -> Self {
        Self {
            mode: [1, 0],
            t_end: 5.0,
            fem_tolerance: 0.02,
            spectral_tolerance: 1e-10,
            rtol: 1e-12,
            atol: 1e-15,
        }
    }
}

/// Finite element versus spectral comparison from a smooth initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeConfig {
    pub t_end: f64,
    pub sample_dt: f64,
    pub coarse_mesh: [usize; 2],
    pub tolerance: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        Self {
            t_end: 20.0,
            sample_dt: 0.1,
            coarse_mesh: [8, 8],
            tolerance: 1e-2,
            rtol: 1e-6,
            atol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Option<ScenarioKind>,
    pub model: ModelParams,
    pub discretization: DiscretizationConfig,
    pub funnel: FunnelSpec,
    pub controller: ControllerConfig,
    pub integrator: IntegratorConfig,
    pub stimulus: StimulusProgram,
    pub reentry: ReentryProtocol,
    pub times: RunTimes,
    pub output: OutputPaths,
    pub checks: CheckConfig,
    pub diffusion_test: DiffusionTestConfig,
    pub converge: ConvergeConfig,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of the value at `key` (dotted path), or of its closest present ancestor.
fn line_of_key(text: &str, key: &str) -> Option<usize> {
    let doc = toml_edit::ImDocument::parse(text).ok()?;
    let mut item = doc.as_item();
    let mut line = None;
    for part in key.split('.') {
        match item.as_table_like().and_then(|t| t.get(part)) {
            Some(next) => {
                item = next;
                if let Some(span) = item.span() {
                    line = Some(line_of(text, span.start));
                }
            }
            None => break,
        }
    }
    line
}

fn field_error(section: &str, fields: &[&str], err: Error) -> (String, String) {
    let message = match err {
        Error::Domain(m) => m,
        other => other.to_string(),
    };
    let field = fields
        .iter()
        .find(|f| message.starts_with(&format!("{f} ")))
        .map_or_else(|| section.to_string(), |f| format!("{section}.{f}"));
    (field, message)
}

fn check(ok: bool, key: &str, message: String) -> std::result::Result<(), (String, String)> {
    if ok {
        Ok(())
    } else {
        Err((key.into(), message))
    }
}

impl RunConfig {
    /// Checks every invariant; the error carries the dotted key path.
    pub fn check(&self) -> std::result::Result<(), (String, String)> {
        self.model
            .validate()
            .map_err(|e| field_error("model", &["c1", "c2", "c3", "c4", "c5"], e))?;
        let [nx, ny] = self.discretization.mesh;
        check(nx > 0 && ny > 0, "discretization.mesh", format!("mesh must have at least one cell per side, got {nx}x{ny}"))?;
        self.funnel.validate().map_err(|e| field_error("funnel", &["gamma"], e))?;
        self.controller.validate().map_err(|e| field_error("controller", &["k0"], e))?;
        self.integrator
            .validate()
            .map_err(|e| field_error("integrator", &["safety", "max_rejects"], e))?;
        self.stimulus.validate().map_err(|e| field_error("stimulus", &[], e))?;
        self.reentry.validate().map_err(|e| field_error("reentry", &[], e))?;

        let t = &self.times;
        check(t.sample_dt > 0.0 && t.sample_dt.is_finite(), "times.sample_dt", format!("sample_dt must be positive, got {}", t.sample_dt))?;
        check(
            t.reference_t_end >= self.stimulus.last_end(),
            "times.reference_t_end",
            format!("reference horizon {} ends before the last stimulus window ({})", t.reference_t_end, self.stimulus.last_end()),
        )?;
        check(
            t.track_t_end > 0.0 && t.track_t_end <= t.reference_t_end,
            "times.track_t_end",
            format!("tracking horizon {} must lie in (0, reference_t_end = {}]", t.track_t_end, t.reference_t_end),
        )?;
        check(
            t.snapshot_times.iter().all(|s| *s >= 0.0 && *s <= t.track_t_end),
            "times.snapshot_times",
            "snapshot times must lie within the tracking horizon".into(),
        )?;

        let c = &self.checks;
        check(c.funnel_delta > 0.0, "checks.funnel_delta", "funnel_delta must be positive".into())?;
        check(c.holder_delta >= 0.0, "checks.holder_delta", "holder_delta must be nonnegative".into())?;
        check(
            c.holder_lambda > 0.0 && c.holder_lambda < 1.0,
            "checks.holder_lambda",
            format!("holder_lambda must lie in (0, 1), got {}", c.holder_lambda),
        )?;

        let d = &self.diffusion_test;
        check(d.t_end > 0.0, "diffusion_test.t_end", "t_end must be positive".into())?;
        check(d.rtol > 0.0 && d.atol > 0.0, "diffusion_test.rtol", "tolerances must be positive".into())?;
        let v = &self.converge;
        check(v.t_end > 0.0 && v.sample_dt > 0.0, "converge.t_end", "t_end and sample_dt must be positive".into())?;
        check(v.coarse_mesh.iter().all(|n| *n > 0), "converge.coarse_mesh", "coarse mesh must have cells".into())?;
        check(v.rtol > 0.0 && v.atol > 0.0, "converge.rtol", "tolerances must be positive".into())?;
        Ok(())
    }

    /// [`Self::check`] as a crate error, without line information.
    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|(key, message)| Error::Config {
            key: Some(key),
            line: None,
            message,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config {
            key: None,
            line: None,
            message: e.to_string(),
        })
    }

    /// Integrator settings for the diffusion experiment.
    pub fn diffusion_integrator(&self) -> IntegratorConfig {
        self.integrator.with_tolerances(self.diffusion_test.rtol, self.diffusion_test.atol)
    }

    pub fn converge_integrator(&self) -> IntegratorConfig {
        self.integrator.with_tolerances(self.converge.rtol, self.converge.atol)
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = toml::Deserializer::new(text);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let line = inner.span().map(|s| line_of(text, s.start));
        Error::Config {
            key: (path != ".").then_some(path),
            line,
            message: inner.message().to_string(),
        }
    })?;
    config.check().map_err(|(key, message)| Error::Config {
        line: line_of_key(text, &key),
        key: Some(key),
        message,
    })?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funnel::FunnelShape;

    #[test]
    fn empty_document_is_the_experiment() {
        let c = parse_config("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.discretization.mesh, [64, 64]);
        assert_eq!(c.controller.k0, 0.75);
        assert_eq!(c.funnel.gamma, 0.05);
        assert_eq!(c.funnel.shape, FunnelShape::Tanh { tau: 100.0 });
        assert_eq!(c.model, ModelParams::default());
    }

    #[test]
    fn negative_constant_is_named() {
        let doc = "[model]\nc2 = 0.1403\nc3 = -1\n";
        match parse_config(doc) {
            Err(Error::Config { key, line, .. }) => {
                assert_eq!(key.as_deref(), Some("model.c3"));
                assert_eq!(line, Some(3));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn override_keeps_other_defaults() {
        let c = parse_config("[discretization]\nmesh = [32, 32]\n").unwrap();
        assert_eq!(c.discretization.mesh, [32, 32]);
        assert_eq!(c.discretization.modes, [20, 20]);
        assert_eq!(c.stimulus, StimulusProgram::default());
    }

    #[test]
    fn unknown_and_mistyped_keys() {
        match parse_config("\n[controller]\nk1 = 2.0\n") {
            Err(Error::Config { key, line, message }) => {
                assert_eq!(key.as_deref(), Some("controller.k1"));
                assert_eq!(line, Some(3));
                assert!(message.contains("k1"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        match parse_config("[integrator]\nrtol = \"tight\"\n") {
            Err(Error::Config { key, line, .. }) => {
                assert_eq!(key.as_deref(), Some("integrator.rtol"));
                assert_eq!(line, Some(2));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn serialization_is_idempotent() {
        let doc = "scenario = \"track\"\n[funnel]\ngamma = 0.1\n[funnel.shape]\nkind = \"constant\"\nlevel = 2.0\n[reentry]\nactivity_floor = 0.5\n";
        let once = parse_config(doc).unwrap();
        let twice = parse_config(&once.to_toml().unwrap()).unwrap();
        assert_eq!(once, twice);
        let d = RunConfig::default();
        assert_eq!(parse_config(&d.to_toml().unwrap()).unwrap(), d);
    }
}
