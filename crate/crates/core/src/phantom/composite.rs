use serde::{Deserialize, Serialize};

use super::{DynamicStudy, FramingSchedule};
use crate::error::{Error, Result};
use crate::recon::{run_mlem, RunOptions};
use crate::tomo::SparseMatrix;

/// Half-open time interval `[start_s, end_s)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start_s: f64,
    pub end_s: f64,
}

/// Consecutive windows of the given lengths starting at t = 0.
pub fn composite_windows(lengths_s: &[f64]) -> Vec<TimeWindow> {
    let mut t = 0.0;
    lengths_s
        .iter()
        .map(|&len| {
            let w = TimeWindow { start_s: t, end_s: t + len };
            t += len;
            w
        })
        .collect()
}

const ALIGN_TOL: f64 = 1e-6;

/// Frame indices of each window; windows must tile the scan on frame edges.
fn window_frames(schedule: &FramingSchedule, windows: &[TimeWindow]) -> Result<Vec<Vec<usize>>> {
    if windows.is_empty() {
        return Err(Error::InvalidParameter("at least one composite window is required".into()));
    }
    let mut expect_start = 0.0;
    let mut out = Vec::with_capacity(windows.len());
    for (i, w) in windows.iter().enumerate() {
        if (w.start_s - expect_start).abs() > ALIGN_TOL || !(w.end_s > w.start_s) {
            return Err(Error::InvalidParameter(format!(
                "composite window {i} does not continue the partition at {expect_start} s"
            )));
        }
        let frames: Vec<usize> = (0..schedule.len())
            .filter(|&m| schedule.starts()[m] >= w.start_s - ALIGN_TOL && schedule.end(m) <= w.end_s + ALIGN_TOL)
            .collect();
        let aligned = frames.first().is_some_and(|&m| (schedule.starts()[m] - w.start_s).abs() <= ALIGN_TOL)
            && frames.last().is_some_and(|&m| (schedule.end(m) - w.end_s).abs() <= ALIGN_TOL);
        if !aligned {
            return Err(Error::InvalidParameter(format!(
                "composite window {i} [{}, {}) s is not aligned to frame boundaries",
                w.start_s, w.end_s
            )));
        }
        out.push(frames);
        expect_start = w.end_s;
    }
    if (expect_start - schedule.total()).abs() > ALIGN_TOL {
        return Err(Error::InvalidParameter(format!(
            "composite windows end at {expect_start} s but the scan lasts {} s",
            schedule.total()
        )));
    }
    Ok(out)
}

/// Rebins frames into composite windows and reconstructs each with ML-EM.
///
/// `realization = None` uses the noise-free expectation instead of counts.
/// Each composite image is in activity units (time-averaged over its window).
pub fn composite_frames(
    study: &DynamicStudy,
    p: &SparseMatrix<f64>,
    realization: Option<usize>,
    windows: &[TimeWindow],
    mlem_iters: usize,
) -> Result<Vec<Vec<f64>>> {
    let groups = window_frames(&study.schedule, windows)?;
    let counts = |m: usize| -> Result<Vec<f64>> {
        match realization {
            Some(r) => study
                .realizations
                .get(r)
                .map(|real| real.noisy[m].clone())
                .ok_or_else(|| Error::InvalidParameter(format!("no realization {r}"))),
            None => Ok(study.noisefree[m].iter().zip(&study.background[m]).map(|(a, b)| a + b).collect()),
        }
    };
    groups
        .iter()
        .map(|frames| {
            let n = study.geometry.len();
            let mut y = vec![0.0; n];
            let mut r = vec![0.0; n];
            let mut c = 0.0;
            for &m in frames {
                y.iter_mut().zip(counts(m)?).for_each(|(a, b)| *a += b);
                r.iter_mut().zip(&study.background[m]).for_each(|(a, b)| *a += b);
                c += study.frame_scale(m);
            }
            let pc = p.scaled(c)?;
            let out = run_mlem(&pc, &y, &r, &RunOptions::iterations(mlem_iters))?;
            let x = out.state.x;
            if x.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::NonFinite("composite image"));
            }
            Ok(x)
        })
        .collect()
}
