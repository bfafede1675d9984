use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Vector or matrix sizes do not agree.
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    /// The configuration cannot be handled by the requested discretization.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// The tracking error reached the guard band at the funnel boundary.
    #[error("funnel violation at t = {t}: |e| = {e_norm}, phi^2 |e|^2 = {level} exceeds guard {guard}")]
    FunnelViolation {
        t: f64,
        e_norm: f64,
        level: f64,
        guard: f64,
    },

    /// Too many consecutive step rejections.
    #[error("integration aborted at t = {t} (dt = {dt}): {reason}")]
    IntegrationAbort { t: f64, dt: f64, reason: String },

    /// A reference signal was queried outside the interval it covers.
    #[error("reference signal covers [{start}, {end}] but [{t0}, {t1}] was requested")]
    ReferenceDomain {
        start: f64,
        end: f64,
        t0: f64,
        t1: f64,
    },

    /// A check was applied to a log it does not apply to.
    #[error("check not applicable: {0}")]
    Inapplicable(String),

    /// The S1-S2 protocol did not leave sustained activity behind.
    #[error("reentry not established: |v| = {measured} at t = {t} is below the activity floor {floor}")]
    ReentryNotEstablished { t: f64, measured: f64, floor: f64 },

    /// Malformed file contents.
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    /// Configuration document rejected.
    #[error("config error{}: {message}", fmt_location(.key, .line))]
    Config {
        key: Option<String>,
        line: Option<usize>,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

fn fmt_location(key: &Option<String>, line: &Option<usize>) -> String {
    match (key, line) {
        (Some(k), Some(l)) => format!(" at `{k}` (line {l})"),
        (Some(k), None) => format!(" at `{k}`"),
        (None, Some(l)) => format!(" (line {l})"),
        (None, None) => String::new(),
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension {
            context,
            expected,
            found,
        });
    }
    Ok(())
}
