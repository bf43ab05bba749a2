//! Parametric dynamic brain phantom, count simulation and composite priors.

mod composite;
mod sim;
mod tac;

pub use composite::{composite_frames, composite_windows, TimeWindow};
pub use sim::{
    poisson, sample_frame, simulate_counts, simulate_study, synthesize_frames, DynamicStudy, FrameCounts,
    Realization, StudyConfig,
};
pub use tac::{default_tacs, FramingSchedule, TacModel, TacTable};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tomo::Grid;

pub const BACKGROUND: usize = 0;
pub const GRAY: usize = 1;
pub const WHITE: usize = 2;
pub const BLOOD: usize = 3;
pub const TUMOR: usize = 4;

pub const REGION_NAMES: [&str; 5] = ["background", "gray", "white", "blood", "tumor"];

/// Supersampling factor per pixel axis used by the rasterizer.
const SUBSAMPLES: usize = 8;

/// One filled ellipse painted with a region label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipseSpec {
    pub label: usize,
    /// Centre in mm, scanner coordinates.
    pub center: [f64; 2],
    /// Semi-axes in mm.
    pub semi_axes: [f64; 2],
    /// Counter-clockwise rotation in degrees.
    #[serde(default)]
    pub angle_deg: f64,
}

impl EllipseSpec {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        let u = (c * dx + s * dy) / self.semi_axes[0];
        let v = (-s * dx + c * dy) / self.semi_axes[1];
        u * u + v * v <= 1.0
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.semi_axes[0] * self.semi_axes[1]
    }

    /// Pixels whose area is at least half covered.
    pub fn rasterize(&self, grid: &Grid) -> Vec<usize> {
        let ps = grid.pixel_size;
        let step = ps / SUBSAMPLES as f64;
        let need = SUBSAMPLES * SUBSAMPLES / 2;
        let reach = self.semi_axes[0].max(self.semi_axes[1]) + ps;
        (0..grid.len())
            .filter(|&j| {
                let (cx, cy) = grid.pixel_center(j);
                if (cx - self.center[0]).abs() > reach || (cy - self.center[1]).abs() > reach {
                    return false;
                }
                let (x0, y0) = (cx - 0.5 * ps, cy - 0.5 * ps);
                let mut hits = 0;
                for a in 0..SUBSAMPLES {
                    for b in 0..SUBSAMPLES {
                        let x = x0 + (a as f64 + 0.5) * step;
                        let y = y0 + (b as f64 + 0.5) * step;
                        hits += self.contains(x, y) as usize;
                    }
                }
                hits >= need
            })
            .collect()
    }
}

/// Ordered list of ellipses; later entries paint over earlier ones.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub ellipses: Vec<EllipseSpec>,
}

impl PhantomSpec {
    /// Head outline of gray matter, white matter core, two deep gray nuclei,
    /// a posterior blood pool 18 mm long and a 15 mm tumour.
    pub fn brain() -> Self {
        let e = |label, center, semi_axes, angle_deg| EllipseSpec { label, center, semi_axes, angle_deg };
        PhantomSpec {
            ellipses: vec![
                e(GRAY, [0.0, 0.0], [70.0, 85.0], 0.0),
                e(WHITE, [0.0, 2.0], [54.0, 68.0], 0.0),
                e(GRAY, [-17.0, 8.0], [7.5, 13.5], 15.0),
                e(GRAY, [17.0, 8.0], [7.5, 13.5], -15.0),
                e(BLOOD, [0.0, -76.0], [9.0, 4.5], 0.0),
                e(TUMOR, [28.0, -30.0], [7.5, 7.5], 0.0),
            ],
        }
    }
}

/// Region label map on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub grid: Grid,
    pub labels: Vec<usize>,
    pub region_names: Vec<String>,
}

impl Phantom {
    pub fn n_regions(&self) -> usize {
        self.region_names.len()
    }

    pub fn region_pixels(&self, label: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&j| self.labels[j] == label).collect()
    }

    /// Blood and tumour ROIs must both be present for quantification.
    pub fn check_rois(&self) -> Result<()> {
        for label in [BLOOD, TUMOR] {
            if self.region_pixels(label).is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "phantom has no '{}' pixels",
                    REGION_NAMES[label]
                )));
            }
        }
        Ok(())
    }
}

pub fn make_phantom(grid: &Grid, spec: &PhantomSpec) -> Result<Phantom> {
    grid.validate()?;
    let half_x = -grid.x_min();
    let half_y = -grid.y_min();
    for (i, e) in spec.ellipses.iter().enumerate() {
        if e.label >= REGION_NAMES.len() {
            return Err(Error::InvalidParameter(format!("ellipse {i}: unknown region label {}", e.label)));
        }
        if !(e.semi_axes[0] > 0.0 && e.semi_axes[1] > 0.0) {
            return Err(Error::InvalidParameter(format!("ellipse {i}: semi-axes must be positive")));
        }
        let r = e.semi_axes[0].max(e.semi_axes[1]);
        if e.center[0].abs() + r > half_x || e.center[1].abs() + r > half_y {
            return Err(Error::InvalidParameter(format!("ellipse {i} does not fit inside the grid")));
        }
    }

    let masks: Vec<Vec<usize>> = spec.ellipses.iter().map(|e| e.rasterize(grid)).collect();
    let mut blood = vec![false; grid.len()];
    for (e, m) in spec.ellipses.iter().zip(&masks) {
        if e.label == BLOOD {
            m.iter().for_each(|&j| blood[j] = true);
        }
    }
    for (e, m) in spec.ellipses.iter().zip(&masks) {
        if e.label == TUMOR && m.iter().any(|&j| blood[j]) {
            return Err(Error::InvalidParameter("blood pool and tumour overlap".into()));
        }
    }

    let mut labels = vec![BACKGROUND; grid.len()];
    for (e, m) in spec.ellipses.iter().zip(&masks) {
        m.iter().for_each(|&j| labels[j] = e.label);
    }
    Ok(Phantom {
        grid: *grid,
        labels,
        region_names: REGION_NAMES.iter().map(|s| s.to_string()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk_grid() -> Grid {
        Grid::new(64, 64, 3.0).unwrap()
    }

    #[test]
    fn tumour_disk_pixel_count() {
        let grid = desk_grid();
        let tumour = EllipseSpec { label: TUMOR, center: [28.0, -30.0], semi_axes: [7.5, 7.5], angle_deg: 0.0 };
        let n = tumour.rasterize(&grid).len() as f64;
        // radius 2.5 px: analytic area 19.63 px, about 16 boundary pixels
        let analytic = tumour.area() / 9.0;
        assert!((n - analytic).abs() <= 3.0, "{n} vs {analytic}");
    }

    #[test]
    fn region_areas_match_analytic_ellipses() {
        for grid in [desk_grid(), Grid::new(111, 111, 3.0).unwrap()] {
            let px = grid.pixel_size * grid.pixel_size;
            for e in PhantomSpec::brain().ellipses {
                let n = e.rasterize(&grid).len() as f64;
                let analytic = e.area() / px;
                // each boundary pixel rounds by at most half its area
                let (a, b) = (e.semi_axes[0], e.semi_axes[1]);
                let perimeter = std::f64::consts::PI * (3.0 * (a + b) - ((3.0 * a + b) * (a + 3.0 * b)).sqrt());
                let bound = 0.25 * perimeter / grid.pixel_size + 1.0;
                assert!((n - analytic).abs() <= bound, "label {}: {n} vs {analytic}", e.label);
            }
        }
    }

    #[test]
    fn empty_spec_is_all_background() {
        let ph = make_phantom(&desk_grid(), &PhantomSpec::default()).unwrap();
        assert!(ph.labels.iter().all(|&l| l == BACKGROUND));
        assert!(ph.check_rois().is_err());
    }

    #[test]
    fn brain_is_deterministic_and_has_all_regions() {
        let a = make_phantom(&desk_grid(), &PhantomSpec::brain()).unwrap();
        let b = make_phantom(&desk_grid(), &PhantomSpec::brain()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_regions(), 5);
        for label in 0..5 {
            assert!(!a.region_pixels(label).is_empty(), "region {label} empty");
        }
        a.check_rois().unwrap();
    }

    #[test]
    fn overlapping_blood_and_tumour_rejected() {
        let mut spec = PhantomSpec::brain();
        spec.ellipses.push(EllipseSpec { label: TUMOR, center: [0.0, -74.0], semi_axes: [4.0, 4.0], angle_deg: 0.0 });
        assert!(make_phantom(&desk_grid(), &spec).is_err());
    }

    #[test]
    fn shapes_outside_grid_rejected() {
        let spec = PhantomSpec {
            ellipses: vec![EllipseSpec { label: GRAY, center: [90.0, 0.0], semi_axes: [10.0, 10.0], angle_deg: 0.0 }],
        };
        assert!(make_phantom(&desk_grid(), &spec).is_err());
        let bad = PhantomSpec {
            ellipses: vec![EllipseSpec { label: 9, center: [0.0, 0.0], semi_axes: [10.0, 10.0], angle_deg: 0.0 }],
        };
        assert!(make_phantom(&desk_grid(), &bad).is_err());
    }
}
