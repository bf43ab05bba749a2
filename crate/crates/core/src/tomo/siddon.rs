//! Siddon ray tracing through a regular pixel grid.

use super::{Grid, ProjGeometry, SparseMatrix};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Axis-aligned pixel lattice in mm: lower-left corner, pixel counts, pitch.
#[derive(Debug, Clone, Copy)]
pub struct Lattice {
    pub x_min: f64,
    pub y_min: f64,
    pub nx: usize,
    pub ny: usize,
    pub pixel_size: f64,
}

impl From<&Grid> for Lattice {
    fn from(g: &Grid) -> Self {
        Lattice {
            x_min: g.x_min(),
            y_min: g.y_min(),
            nx: g.nx,
            ny: g.ny,
            pixel_size: g.pixel_size,
        }
    }
}

/// Parametric interval of `p + t d` inside `[lo, hi]` along one axis.
fn slab(p: f64, d: f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
    if d == 0.0 {
        (p > lo && p < hi).then_some((f64::NEG_INFINITY, f64::INFINITY))
    } else {
        let (a, b) = ((lo - p) / d, (hi - p) / d);
        Some((a.min(b), a.max(b)))
    }
}

/// Intersection lengths of the line `origin + t * dir` (unit `dir`) with the
/// lattice pixels, sorted by flat pixel index `iy * nx + ix`.
pub fn trace_ray(lat: &Lattice, origin: (f64, f64), dir: (f64, f64)) -> Vec<(usize, f64)> {
    let ps = lat.pixel_size;
    let x_max = lat.x_min + lat.nx as f64 * ps;
    let y_max = lat.y_min + lat.ny as f64 * ps;
    let (Some((tx0, tx1)), Some((ty0, ty1))) = (
        slab(origin.0, dir.0, lat.x_min, x_max),
        slab(origin.1, dir.1, lat.y_min, y_max),
    ) else {
        return Vec::new();
    };
    let t_in = tx0.max(ty0);
    let t_out = tx1.min(ty1);
    if !(t_out > t_in) {
        return Vec::new();
    }

    let mut ts = vec![t_in, t_out];
    let mut planes = |p: f64, d: f64, lo: f64, n: usize| {
        if d != 0.0 {
            for k in 0..=n {
                let t = (lo + k as f64 * ps - p) / d;
                if t > t_in && t < t_out {
                    ts.push(t);
                }
            }
        }
    };
    planes(origin.0, dir.0, lat.x_min, lat.nx);
    planes(origin.1, dir.1, lat.y_min, lat.ny);
    ts.sort_by(|a, b| a.total_cmp(b));

    let tiny = 1e-12 * ps;
    let mut hits: Vec<(usize, f64)> = Vec::with_capacity(ts.len());
    for w in ts.windows(2) {
        let len = w[1] - w[0];
        if len <= tiny {
            continue;
        }
        let tm = 0.5 * (w[0] + w[1]);
        let mx = origin.0 + tm * dir.0;
        let my = origin.1 + tm * dir.1;
        let ix = (((mx - lat.x_min) / ps).floor().max(0.0) as usize).min(lat.nx - 1);
        let iy = (((my - lat.y_min) / ps).floor().max(0.0) as usize).min(lat.ny - 1);
        hits.push((iy * lat.nx + ix, len));
    }
    hits.sort_by_key(|&(j, _)| j);
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(hits.len());
    for (j, l) in hits {
        match merged.last_mut() {
            Some((pj, pl)) if *pj == j => *pl += l,
            _ => merged.push((j, l)),
        }
    }
    merged
}

/// Ray of sinogram bin `(a, b)`: origin on the detector normal, unit direction.
pub fn ray(geom: &ProjGeometry, a: usize, b: usize) -> ((f64, f64), (f64, f64)) {
    let (s, c) = geom.angle(a).sin_cos();
    let u = geom.bin_offset(b);
    ((u * c, u * s), (-s, c))
}

/// Builds the N x J system matrix, one Siddon ray per bin. Rows whose rays
/// miss the grid are empty.
pub fn build_system_matrix<T: Real>(grid: &Grid, geom: &ProjGeometry) -> Result<SparseMatrix<T>> {
    grid.validate()?;
    geom.validate()?;
    let lat = Lattice::from(grid);
    let mut rows = Vec::with_capacity(geom.len());
    for a in 0..geom.n_angles {
        for b in 0..geom.n_bins {
            let (o, d) = ray(geom, a, b);
            rows.push(
                trace_ray(&lat, o, d)
                    .into_iter()
                    .map(|(j, l)| (j, T::lit(l)))
                    .collect(),
            );
        }
    }
    let p = SparseMatrix::from_rows(grid.len(), rows)?;
    if p.nnz() == 0 {
        return Err(Error::Geometry("no line of response intersects the image grid".into()));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_pixel_ray_through_centre() {
        let lat = Lattice { x_min: -1.5, y_min: -1.5, nx: 1, ny: 1, pixel_size: 3.0 };
        let hits = trace_ray(&lat, (0.0, 0.0), (0.0, 1.0));
        assert_eq!(hits.len(), 1);
        assert_relative_eq!(hits[0].1, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn horizontal_ray_through_top_row_of_2x2() {
        let grid = Grid::new(2, 2, 1.0).unwrap();
        // angle pi/2 has direction (-1, 0); bin 1 sits at y = +0.5
        let geom = ProjGeometry::new(2, 2, 1.0).unwrap();
        let p: SparseMatrix<f64> = build_system_matrix(&grid, &geom).unwrap();
        let row: Vec<_> = p.row(geom.n_bins + 1).collect();
        assert_eq!(row.len(), 2);
        assert_eq!(row[0].0, 2);
        assert_eq!(row[1].0, 3);
        for (_, v) in row {
            assert_relative_eq!(v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn diagonal_ray_lengths() {
        let lat = Lattice { x_min: -1.0, y_min: -1.0, nx: 2, ny: 2, pixel_size: 1.0 };
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let hits = trace_ray(&lat, (0.0, 0.0), (r, r));
        assert_eq!(hits.iter().map(|h| h.0).collect::<Vec<_>>(), vec![0, 3]);
        for (_, l) in hits {
            assert_relative_eq!(l, 2f64.sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn ray_missing_the_grid_gives_empty_row() {
        let lat = Lattice { x_min: -1.0, y_min: -1.0, nx: 2, ny: 2, pixel_size: 1.0 };
        assert!(trace_ray(&lat, (5.0, 0.0), (0.0, 1.0)).is_empty());
    }

    #[test]
    fn chord_length_matches_geometry() {
        // every ray through a convex grid has total length equal to its chord
        let grid = Grid::new(7, 5, 2.0).unwrap();
        let geom = ProjGeometry::new(13, 11, 1.3).unwrap();
        let p: SparseMatrix<f64> = build_system_matrix(&grid, &geom).unwrap();
        let sums = p.row_sums();
        let lat = Lattice::from(&grid);
        for a in 0..geom.n_angles {
            for b in 0..geom.n_bins {
                let (o, d) = ray(&geom, a, b);
                let (x0, x1) = slab(o.0, d.0, lat.x_min, -lat.x_min).unwrap();
                let (y0, y1) = slab(o.1, d.1, lat.y_min, -lat.y_min).unwrap();
                let chord = (x1.min(y1) - x0.max(y0)).max(0.0);
                assert_relative_eq!(sums[a * geom.n_bins + b], chord, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn field_of_view_outside_grid_is_an_error() {
        let grid = Grid::new(4, 4, 1.0).unwrap();
        let geom = ProjGeometry::new(4, 2, 1000.0).unwrap();
        assert!(build_system_matrix::<f64>(&grid, &geom).is_err());
    }
}
