//! Reference signals `y_ref(t)` for the tracking loop.

use crate::error::{Error, Result};
use crate::integrate::TrajectoryLog;

pub trait ReferenceSignal: Send + Sync {
    fn channels(&self) -> usize;
    /// Interval on which the signal is defined.
    fn domain(&self) -> (f64, f64);
    fn eval_into(&self, t: f64, out: &mut [f64]);

    fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.channels()];
        self.eval_into(t, &mut out);
        out
    }

    fn ensure_covers(&self, t0: f64, t1: f64) -> Result<()> {
        let (start, end) = self.domain();
        if t0 < start || t1 > end {
            return Err(Error::ReferenceDomain { start, end, t0, t1 });
        }
        Ok(())
    }
}

/// `y_ref = 0` for all time.
#[derive(Debug, Clone, Copy)]
pub struct ZeroReference(pub usize);

impl ReferenceSignal for ZeroReference {
    fn channels(&self) -> usize {
        self.0
    }

    fn domain(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn eval_into(&self, _t: f64, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Piecewise cubic Hermite interpolant with centered-difference slopes.
///
/// The result is C1 with bounded derivative, so it is Lipschitz in time.
#[derive(Debug, Clone)]
pub struct HermiteReference {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    slopes: Vec<Vec<f64>>,
}

impl HermiteReference {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::Domain("reference needs at least two samples".into()));
        }
        crate::error::check_len("reference values", times.len(), values.len())?;
        let m = values[0].len();
        for v in &values {
            crate::error::check_len("reference channels", m, v.len())?;
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("reference times must be strictly increasing".into()));
        }
        let n = times.len();
        let slopes = (0..n)
            .map(|k| {
                let (a, b) = match k {
                    0 => (0, 1),
                    k if k == n - 1 => (n - 2, n - 1),
                    k => (k - 1, k + 1),
                };
                let dt = times[b] - times[a];
                (0..m).map(|i| (values[b][i] - values[a][i]) / dt).collect()
            })
            .collect();
        Ok(Self { times, values, slopes })
    }

    /// Uses the measured outputs `y` of an open-loop log as the reference.
    pub fn from_log_outputs(log: &TrajectoryLog) -> Result<Self> {
        Self::new(
            log.samples.iter().map(|s| s.t).collect(),
            log.samples.iter().map(|s| s.y.clone()).collect(),
        )
    }
}

impl ReferenceSignal for HermiteReference {
    fn channels(&self) -> usize {
        self.values[0].len()
    }

    fn domain(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        let n = self.times.len();
        let t = t.clamp(self.times[0], self.times[n - 1]);
        let k = self.times.partition_point(|&s| s <= t).clamp(1, n - 1) - 1;
        let h = self.times[k + 1] - self.times[k];
        let s = (t - self.times[k]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        for (i, o) in out.iter_mut().enumerate() {
            *o = h00 * self.values[k][i]
                + h * h10 * self.slopes[k][i]
                + h01 * self.values[k + 1][i]
                + h * h11 * self.slopes[k + 1][i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_nodes_and_quadratics() {
        let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.1).collect();
        let values: Vec<Vec<f64>> = times.iter().map(|t| vec![t * t, 1.0 - t]).collect();
        let r = HermiteReference::new(times.clone(), values.clone()).unwrap();
        for (t, v) in times.iter().zip(&values) {
            let got = r.eval(*t);
            assert!((got[0] - v[0]).abs() < 1e-14 && (got[1] - v[1]).abs() < 1e-14);
        }
        // centered differences are exact for quadratics at interior nodes
        let got = r.eval(1.05);
        assert!((got[0] - 1.05 * 1.05).abs() < 1e-12);
        assert!((got[1] + 0.05).abs() < 1e-12);
    }

    #[test]
    fn domain_is_checked() {
        let r = HermiteReference::new(vec![0.0, 1.0], vec![vec![0.0], vec![1.0]]).unwrap();
        assert!(r.ensure_covers(0.0, 1.0).is_ok());
        assert!(matches!(r.ensure_covers(0.0, 2.0), Err(Error::ReferenceDomain { .. })));
        assert!(HermiteReference::new(vec![0.0, 0.0], vec![vec![0.0], vec![1.0]]).is_err());
    }
}
