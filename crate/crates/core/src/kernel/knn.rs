use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FeatureSet;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Square spatial search box of side `2 * half_width + 1`, shifted inward at
/// the image border so every pixel sees the same number of candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchWindow {
    pub nx: usize,
    pub ny: usize,
    pub half_width: usize,
}

impl SearchWindow {
    fn span(&self, i: usize, n: usize) -> std::ops::Range<usize> {
        let size = (2 * self.half_width + 1).min(n);
        let lo = i.saturating_sub(self.half_width).min(n - size);
        lo..lo + size
    }

    /// Candidates per pixel, the pixel itself included.
    pub fn size(&self) -> usize {
        (2 * self.half_width + 1).min(self.nx) * (2 * self.half_width + 1).min(self.ny)
    }
}

fn select<T: Real>(f: &FeatureSet<T>, j: usize, k: usize, cands: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut scored: Vec<(T, usize)> = cands.filter(|&l| l != j).map(|l| (f.dist2(j, l), l)).collect();
    let order = |a: &(T, usize), b: &(T, usize)| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1));
    if k < scored.len() {
        scored.select_nth_unstable_by(k, order);
        scored.truncate(k);
    }
    scored.sort_by(order);
    scored.into_iter().map(|(_, l)| l).collect()
}

/// `k` nearest pixels in feature space for every pixel, excluding itself,
/// nearest first; equal distances go to the lower index.
pub fn knn_search<T: Real>(features: &FeatureSet<T>, k: usize, window: Option<SearchWindow>) -> Result<Vec<Vec<usize>>> {
    let n = features.n_pixels;
    let candidates = match window {
        Some(w) => {
            if w.nx * w.ny != n {
                return Err(Error::DimensionMismatch { what: "search window grid", expected: n, got: w.nx * w.ny });
            }
            w.size() - 1
        }
        None => n - 1,
    };
    if k > candidates {
        return Err(Error::InvalidParameter(format!(
            "k = {k} exceeds the {candidates} candidates available per pixel"
        )));
    }
    if features.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("features"));
    }
    if k == 0 {
        return Ok(vec![Vec::new(); n]);
    }
    Ok((0..n)
        .into_par_iter()
        .map(|j| match window {
            None => select(features, j, k, 0..n),
            Some(w) => {
                let (ix, iy) = (j % w.nx, j / w.nx);
                let xs = w.span(ix, w.nx);
                let cands = w.span(iy, w.ny).flat_map(move |y| xs.clone().map(move |x| y * w.nx + x));
                select(features, j, k, cands)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::extract_features;
    use crate::rng;
    use rand::Rng;

    fn raw(values: &[f64]) -> FeatureSet<f64> {
        FeatureSet {
            n_pixels: values.len(),
            dim: 1,
            data: values.to_vec(),
            channels: vec![0],
            means: vec![0.0],
            stds: vec![1.0],
        }
    }

    /// Exhaustive oracle: full sort of every other pixel.
    fn brute_force(f: &FeatureSet<f64>, k: usize, allowed: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
        (0..f.n_pixels)
            .map(|j| {
                let mut all: Vec<(f64, usize)> =
                    (0..f.n_pixels).filter(|&l| l != j && allowed(j, l)).map(|l| (f.dist2(j, l), l)).collect();
                all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                all.into_iter().take(k).map(|p| p.1).collect()
            })
            .collect()
    }

    #[test]
    fn small_hand_cases() {
        assert_eq!(knn_search(&raw(&[0.0, 0.1, 5.0]), 1, None).unwrap()[0], vec![1]);
        let all = knn_search(&raw(&[0.0, 0.1, 5.0, 2.0]), 3, None).unwrap();
        for (j, l) in all.iter().enumerate() {
            let mut l = l.clone();
            l.sort();
            assert_eq!(l, (0..4).filter(|&i| i != j).collect::<Vec<_>>());
        }
        let ties = knn_search(&raw(&[1.0; 5]), 2, None).unwrap();
        assert_eq!(ties[0], vec![1, 2]);
        assert_eq!(ties[3], vec![0, 1]);
    }

    #[test]
    fn too_many_neighbours_rejected() {
        assert!(knn_search(&raw(&[0.0, 1.0, 2.0]), 3, None).is_err());
        let w = SearchWindow { nx: 3, ny: 1, half_width: 0 };
        assert!(knn_search(&raw(&[0.0, 1.0, 2.0]), 1, Some(w)).is_err());
    }

    #[test]
    fn matches_exhaustive_search_on_32x32() {
        let mut g = rng::seeded(11);
        let (nx, ny) = (32, 32);
        let z: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..nx * ny).map(|_| (g.random_range(0..6) as f64) + 0.01 * g.random::<f64>()).collect())
            .collect();
        let f = extract_features(&z).unwrap();

        // a window covering the whole image is exhaustive search
        let full = SearchWindow { nx, ny, half_width: 40 };
        assert_eq!(knn_search(&f, 24, Some(full)).unwrap(), brute_force(&f, 24, |_, _| true));
        assert_eq!(knn_search(&f, 24, None).unwrap(), brute_force(&f, 24, |_, _| true));

        // a local window restricted oracle
        let w = SearchWindow { nx, ny, half_width: 4 };
        let span = |i: usize| {
            let lo = i.saturating_sub(4).min(nx - 9);
            lo..lo + 9
        };
        let oracle = brute_force(&f, 48, |j, l| span(j % nx).contains(&(l % nx)) && span(j / nx).contains(&(l / nx)));
        assert_eq!(knn_search(&f, 48, Some(w)).unwrap(), oracle);
    }

    #[test]
    fn exact_ties_follow_index_order_on_grid() {
        let f = raw(&[2.0; 16]);
        let w = SearchWindow { nx: 4, ny: 4, half_width: 1 };
        let nb = knn_search(&f, 3, Some(w)).unwrap();
        // windows shift inward at the border: pixel 0 searches x, y in 0..3
        assert_eq!(nb[0], vec![1, 2, 4]);
        assert_eq!(nb[15], vec![5, 6, 7]);
    }
}
