//! Sampled trajectories, CSV export and summary metrics.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

/// Sampled run output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSeries {
    pub agents: usize,
    pub t: Vec<f64>,
    /// Slot index within the period at each sample.
    pub slot: Vec<usize>,
    /// Library graph active at each sample.
    pub sigma: Vec<usize>,
    /// `errors[s][i]` = `|e_i|` at sample `s`.
    pub errors: Vec<Vec<f64>>,
    /// `gains[s][i * N + k]` = `γ_{i,k}` at sample `s`.
    pub gains: Vec<Vec<f64>>,
    /// Flat estimate vectors, when recorded.
    pub estimates: Option<Vec<Vec<f64>>>,
    pub diverged: bool,
}

impl TimeSeries {
    pub fn new(agents: usize, record_estimates: bool) -> Self {
        Self {
            agents,
            t: Vec::new(),
            slot: Vec::new(),
            sigma: Vec::new(),
            errors: Vec::new(),
            gains: Vec::new(),
            estimates: record_estimates.then(Vec::new),
            diverged: false,
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// `max_i |e_i|` at sample `s`.
    pub fn max_error(&self, s: usize) -> f64 {
        self.errors[s].iter().copied().fold(0.0, f64::max)
    }

    pub fn header(&self, with_gains: bool) -> Vec<String> {
        let mut h = vec!["t".to_string(), "sigma".to_string()];
        h.extend((1..=self.agents).map(|i| format!("err_{i}")));
        if with_gains {
            for i in 1..=self.agents {
                for k in 1..=self.agents {
                    h.push(format!("gamma_{i}_{k}"));
                }
            }
        }
        h
    }

    pub fn write_csv<W: Write>(&self, w: W, with_gains: bool) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Numerical(format!("csv: {e}"));
        out.write_record(self.header(with_gains)).map_err(io)?;
        for s in 0..self.len() {
            let mut rec = vec![format!("{}", self.t[s]), self.sigma[s].to_string()];
            rec.extend(self.errors[s].iter().map(|e| format!("{e:e}")));
            if with_gains {
                rec.extend(self.gains[s].iter().map(|g| format!("{g}")));
            }
            out.write_record(&rec).map_err(io)?;
        }
        out.flush().map_err(|e| Error::Numerical(format!("csv: {e}")))?;
        Ok(())
    }
}

/// Run summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub final_errors: Vec<f64>,
    pub initial_max: f64,
    pub final_max: f64,
    pub peak_error: f64,
    /// `final_max / initial_max`.
    pub reduction: f64,
    pub threshold: f64,
    /// First sample time with `max_i |e_i| < threshold`; `None` if never.
    pub time_to_threshold: Option<f64>,
    /// `sup_t γ_{i,k}(t)` flattened like the series.
    pub gain_sup: Vec<f64>,
    pub diverged: bool,
    /// `final_max ≤ 1e-2 · initial_max` and not diverged.
    pub converged: bool,
}

/// Terminal-to-initial error ratio regarded as convergence.
pub const CONVERGENCE_RATIO: f64 = 1e-2;

pub fn metrics(ts: &TimeSeries, threshold: f64) -> Result<Summary> {
    if ts.is_empty() {
        return Err(Error::Dimension("empty time series".into()));
    }
    let last = ts.len() - 1;
    let initial_max = ts.max_error(0);
    let final_max = ts.max_error(last);
    let peak_error = (0..ts.len()).map(|s| ts.max_error(s)).fold(0.0, f64::max);
    let time_to_threshold = if ts.diverged {
        None
    } else {
        (0..ts.len()).find(|&s| ts.max_error(s) < threshold).map(|s| ts.t[s])
    };
    let width = ts.gains.first().map_or(0, Vec::len);
    let gain_sup = (0..width)
        .map(|c| ts.gains.iter().map(|g| g[c]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let reduction = if initial_max > 0.0 {
        final_max / initial_max
    } else {
        0.0
    };
    let converged = !ts.diverged && final_max.is_finite() && final_max <= CONVERGENCE_RATIO * initial_max;
    Ok(Summary {
        final_errors: ts.errors[last].clone(),
        initial_max,
        final_max,
        peak_error,
        reduction,
        threshold,
        time_to_threshold,
        gain_sup,
        diverged: ts.diverged,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(errs: &[f64]) -> TimeSeries {
        let mut ts = TimeSeries::new(1, false);
        for (s, &e) in errs.iter().enumerate() {
            ts.t.push(s as f64);
            ts.slot.push(0);
            ts.sigma.push(0);
            ts.errors.push(vec![e]);
            ts.gains.push(vec![1.0 + s as f64]);
        }
        ts
    }

    #[test]
    fn zero_series() {
        let m = metrics(&series(&[0.0, 0.0]), 1e-3).unwrap();
        assert_eq!(m.time_to_threshold, Some(0.0));
        assert!(!m.diverged);
    }

    #[test]
    fn diverged_has_no_threshold_time() {
        let mut ts = series(&[1.0, 1e13]);
        ts.diverged = true;
        let m = metrics(&ts, 1e-3).unwrap();
        assert!(m.diverged && !m.converged);
        assert_eq!(m.time_to_threshold, None);
    }

    #[test]
    fn scan_values() {
        let m = metrics(&series(&[2.0, 5.0, 0.01]), 0.1).unwrap();
        assert_eq!(m.peak_error, 5.0);
        assert_eq!(m.time_to_threshold, Some(2.0));
        assert!(m.converged);
        assert_eq!(m.gain_sup, vec![3.0]);
        assert!(metrics(&TimeSeries::new(1, false), 0.1).is_err());
    }

    #[test]
    fn csv_shape() {
        let ts = series(&[1.0, 0.5]);
        let mut buf = Vec::new();
        ts.write_csv(&mut buf, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(first, "t,sigma,err_1,gamma_1_1");
        assert_eq!(text.lines().count(), 3);
    }
}
