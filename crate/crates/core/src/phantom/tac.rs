use serde::{Deserialize, Serialize};

use super::{BLOOD, GRAY, REGION_NAMES, TUMOR, WHITE};
use crate::error::{Error, Result};

/// Frame durations in seconds; frames are contiguous from t = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramingSchedule {
    durations: Vec<f64>,
    starts: Vec<f64>,
}

impl FramingSchedule {
    pub fn new(durations: Vec<f64>) -> Result<Self> {
        if durations.is_empty() || durations.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidParameter("frame durations must be positive".into()));
        }
        let starts = durations
            .iter()
            .scan(0.0, |t, &d| {
                let s = *t;
                *t += d;
                Some(s)
            })
            .collect();
        Ok(FramingSchedule { durations, starts })
    }

    /// One hour in 24 frames: 4x20 s, 4x40 s, 4x60 s, 4x180 s, 8x300 s.
    pub fn protocol_24() -> Self {
        let mut d = Vec::with_capacity(24);
        for (n, len) in [(4, 20.0), (4, 40.0), (4, 60.0), (4, 180.0), (8, 300.0)] {
            d.extend(std::iter::repeat_n(len, n));
        }
        Self::new(d).unwrap()
    }

    pub fn len(&self) -> usize {
        self.durations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.durations.is_empty()
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn starts(&self) -> &[f64] {
        &self.starts
    }

    pub fn end(&self, m: usize) -> f64 {
        self.starts[m] + self.durations[m]
    }

    pub fn total(&self) -> f64 {
        self.end(self.len() - 1)
    }
}

/// Per-region, per-frame mean activity concentration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TacTable {
    /// `values[region][frame]`.
    pub values: Vec<Vec<f64>>,
}

impl TacTable {
    pub fn n_regions(&self) -> usize {
        self.values.len()
    }

    pub fn n_frames(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn validate(&self, n_regions: usize, n_frames: usize) -> Result<()> {
        if self.values.len() < n_regions {
            return Err(Error::InvalidParameter(format!(
                "TAC table has {} regions, phantom needs {n_regions}",
                self.values.len()
            )));
        }
        for (r, row) in self.values.iter().enumerate() {
            if row.len() != n_frames {
                return Err(Error::InvalidParameter(format!(
                    "TAC row {r} has {} frames, expected {n_frames}",
                    row.len()
                )));
            }
            if row.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(Error::InvalidParameter(format!("TAC row {r} has negative or non-finite values")));
            }
        }
        Ok(())
    }
}

/// FDG kinetics: a tri-exponential plasma input function and irreversible
/// two-tissue compartment responses with a fractional blood volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TacModel {
    /// Input function amplitudes and rates (per minute).
    pub input_amplitudes: [f64; 3],
    pub input_rates: [f64; 3],
    /// `[K1, k2, k3, vB]` per region, indexed by label. Blood follows the
    /// input function and background is zero regardless of these rows.
    pub kinetics: Vec<[f64; 4]>,
    /// Integration step in seconds.
    pub step_s: f64,
}

impl Default for TacModel {
    fn default() -> Self {
        let mut kinetics = vec![[0.0; 4]; REGION_NAMES.len()];
        kinetics[GRAY] = [0.102, 0.130, 0.062, 0.05];
        kinetics[WHITE] = [0.054, 0.109, 0.045, 0.03];
        kinetics[TUMOR] = [0.20, 0.20, 0.12, 0.05];
        TacModel {
            input_amplitudes: [851.1225, 21.8798, 20.8113],
            input_rates: [4.1339, 0.1191, 0.0104],
            kinetics,
            step_s: 0.5,
        }
    }
}

impl TacModel {
    /// Plasma concentration at `t` minutes.
    pub fn input(&self, t: f64) -> f64 {
        let [a1, a2, a3] = self.input_amplitudes;
        let [l1, l2, l3] = self.input_rates;
        ((a1 * t - a2 - a3) * (-l1 * t).exp() + a2 * (-l2 * t).exp() + a3 * (-l3 * t).exp()).max(0.0)
    }

    /// Frame-averaged regional curves on a fine time grid.
    pub fn table(&self, schedule: &FramingSchedule) -> TacTable {
        let dt = self.step_s / 60.0;
        let n = (schedule.total() / self.step_s).ceil() as usize + 1;
        let cp: Vec<f64> = (0..n).map(|i| self.input(i as f64 * dt)).collect();

        let curves: Vec<Vec<f64>> = (0..REGION_NAMES.len())
            .map(|label| match label {
                super::BACKGROUND => vec![0.0; n],
                BLOOD => cp.clone(),
                _ => {
                    let [k1, k2, k3, vb] = self.kinetics[label];
                    let b = k2 + k3;
                    // C_T = K1/b * (k3 * int cp + k2 * (cp (*) e^{-b t}))
                    let decay = (-b * dt).exp();
                    let (mut integral, mut conv) = (0.0, 0.0);
                    let mut out = Vec::with_capacity(n);
                    for i in 0..n {
                        if i > 0 {
                            integral += 0.5 * dt * (cp[i - 1] + cp[i]);
                            conv = conv * decay + 0.5 * dt * (cp[i - 1] * decay + cp[i]);
                        }
                        let tissue = if b > 0.0 { k1 / b * (k3 * integral + k2 * conv) } else { 0.0 };
                        out.push((1.0 - vb) * tissue + vb * cp[i]);
                    }
                    out
                }
            })
            .collect();

        let values = curves
            .iter()
            .map(|c| {
                (0..schedule.len())
                    .map(|m| {
                        let (t0, t1) = (schedule.starts()[m], schedule.end(m));
                        let i0 = (t0 / self.step_s).round() as usize;
                        let i1 = ((t1 / self.step_s).round() as usize).min(n - 1);
                        let area: f64 = (i0..i1).map(|i| 0.5 * (c[i] + c[i + 1])).sum();
                        area / (i1 - i0).max(1) as f64
                    })
                    .collect()
            })
            .collect();
        TacTable { values }
    }
}

pub fn default_tacs(schedule: &FramingSchedule) -> TacTable {
    TacModel::default().table(schedule)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_covers_one_hour() {
        let s = FramingSchedule::protocol_24();
        assert_eq!(s.len(), 24);
        assert_eq!(s.total(), 3600.0);
        assert_eq!(s.starts()[4], 80.0);
        assert_eq!(s.durations()[1], 20.0);
        assert_eq!(s.durations()[11], 60.0);
        assert_eq!(s.durations()[23], 300.0);
    }

    #[test]
    fn rejects_nonpositive_durations() {
        assert!(FramingSchedule::new(vec![]).is_err());
        assert!(FramingSchedule::new(vec![10.0, 0.0]).is_err());
    }

    #[test]
    fn default_curves_have_expected_shape() {
        let s = FramingSchedule::protocol_24();
        let t = default_tacs(&s);
        t.validate(5, 24).unwrap();
        let blood = &t.values[BLOOD];
        let peak = blood.iter().cloned().enumerate().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
        assert!(peak <= 2, "blood peaks early, got frame {peak}");
        assert!(t.values[0].iter().all(|&v| v == 0.0));
        // tissue uptake rises and gray exceeds white late
        let gray = &t.values[GRAY];
        assert!(gray[23] > gray[8]);
        assert!(gray[23] > t.values[WHITE][23]);
        assert!(t.values[TUMOR][23] > gray[23]);
    }

    #[test]
    fn table_validation() {
        let t = TacTable { values: vec![vec![1.0, 2.0], vec![0.0]] };
        assert!(t.validate(2, 2).is_err());
        assert!(t.validate(3, 2).is_err());
        let neg = TacTable { values: vec![vec![-1.0]] };
        assert!(neg.validate(1, 1).is_err());
    }
}
