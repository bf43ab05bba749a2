//! Sparse kernel matrix from composite prior images.
//!
//! Each pixel gets a feature vector of standardized composite intensities.
//! Row `j` of `K` holds `exp(-|f_j - f_l|^2 / 2 sigma^2)` for `j` itself and
//! its `k` nearest neighbours in feature space.

mod features;
mod knn;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use features::{extract_features, FeatureSet};
pub use knn::{knn_search, SearchWindow};

use crate::error::{check_len, Error, Result};
use crate::scalar::Real;
use crate::tomo::SparseMatrix;

/// Build parameters, also written to the sidecar next to a saved kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    pub k: usize,
    pub sigma: f64,
    /// Half width of the square search window; full image when absent.
    #[serde(default)]
    pub window_half_width: Option<usize>,
    #[serde(default)]
    pub row_normalize: bool,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams { k: 48, sigma: 1.0, window_half_width: None, row_normalize: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSidecar {
    pub params: KernelParams,
    pub n_pixels: usize,
    pub nnz: usize,
    pub channels: Vec<usize>,
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel<T> {
    pub k: SparseMatrix<T>,
    pub params: KernelParams,
    pub channels: Vec<usize>,
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
}

/// Assembles `K` from precomputed neighbour lists.
pub fn build_kernel<T: Real>(
    features: &FeatureSet<T>,
    neighbors: &[Vec<usize>],
    sigma: f64,
    row_normalize: bool,
) -> Result<SparseMatrix<T>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("kernel width sigma must be positive, got {sigma}")));
    }
    check_len("neighbour lists", features.n_pixels, neighbors.len())?;
    let scale = T::lit(-0.5 / (sigma * sigma));
    let rows = neighbors
        .iter()
        .enumerate()
        .map(|(j, nb)| {
            let mut row = Vec::with_capacity(nb.len() + 1);
            row.push((j, T::one()));
            for &l in nb {
                if l >= features.n_pixels || l == j {
                    return Err(Error::InvalidParameter(format!("bad neighbour {l} of pixel {j}")));
                }
                row.push((l, (features.dist2(j, l) * scale).exp()));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut k = SparseMatrix::from_rows(features.n_pixels, rows)?;
    if row_normalize {
        k.normalize_rows();
    }
    Ok(k)
}

impl<T: Real> KernelModel<T> {
    /// Full pipeline: standardize composites, search neighbours, build `K`.
    pub fn from_composites(composites: &[Vec<T>], nx: usize, ny: usize, params: &KernelParams) -> Result<Self> {
        let features = extract_features(composites)?;
        check_len("composite grid", nx * ny, features.n_pixels)?;
        let window = params.window_half_width.map(|half_width| SearchWindow { nx, ny, half_width });
        let neighbors = knn_search(&features, params.k, window)?;
        let k = build_kernel(&features, &neighbors, params.sigma, params.row_normalize)?;
        Ok(KernelModel {
            k,
            params: params.clone(),
            channels: features.channels.clone(),
            feature_means: features.means.iter().map(|v| v.as_f64()).collect(),
            feature_stds: features.stds.iter().map(|v| v.as_f64()).collect(),
        })
    }

    /// `K = I`, the k = 0 kernel.
    pub fn identity(n: usize) -> Self {
        KernelModel {
            k: SparseMatrix::identity(n),
            params: KernelParams { k: 0, ..Default::default() },
            channels: Vec::new(),
            feature_means: Vec::new(),
            feature_stds: Vec::new(),
        }
    }

    pub fn n_pixels(&self) -> usize {
        self.k.n_rows()
    }

    pub fn apply_k(&self, v: &[T]) -> Result<Vec<T>> {
        self.k.matvec(v)
    }

    pub fn apply_kt(&self, v: &[T]) -> Result<Vec<T>> {
        self.k.matvec_t(v)
    }

    /// `w = K^T s` for the sensitivity image `s`.
    pub fn combined_weight(&self, s: &[T]) -> Result<Vec<T>> {
        self.k.matvec_t(s)
    }

    pub fn sidecar(&self) -> KernelSidecar {
        KernelSidecar {
            params: self.params.clone(),
            n_pixels: self.n_pixels(),
            nnz: self.k.nnz(),
            channels: self.channels.clone(),
            feature_means: self.feature_means.clone(),
            feature_stds: self.feature_stds.clone(),
        }
    }

    /// Writes `path` (NKSM) and `path` with a `.toml` extension.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.k.save(path)?;
        let text = toml::to_string(&self.sidecar()).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(sidecar_path(path), text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let k = SparseMatrix::load(path)?;
        let text = std::fs::read_to_string(sidecar_path(path))?;
        let meta: KernelSidecar = toml::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
        if meta.n_pixels != k.n_rows() || meta.nnz != k.nnz() {
            return Err(Error::Format("kernel sidecar does not match the matrix file".into()));
        }
        Ok(KernelModel {
            k,
            params: meta.params,
            channels: meta.channels,
            feature_means: meta.feature_means,
            feature_stds: meta.feature_stds,
        })
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("toml")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::scalar::dot;
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

    #[test]
    fn kernel_values() {
        let f = raw(&[0.0, 0.0, 1.0]);
        let k = build_kernel(&f, &[vec![1, 2], vec![0], vec![0]], 1.0, false).unwrap();
        let d = k.to_dense();
        assert_eq!(d[0], 1.0);
        assert_eq!(d[1], 1.0);
        assert!((d[2] - 0.6065306597126334).abs() < 1e-15);
        assert_eq!(&d[3..6], &[1.0, 1.0, 0.0]);
        assert!(build_kernel(&f, &[vec![], vec![], vec![]], 0.0, false).is_err());
    }

    #[test]
    fn normalized_rows_sum_to_one() {
        let mut g = rng::seeded(2);
        let z = vec![(0..64).map(|_| g.random::<f64>()).collect::<Vec<_>>()];
        let params = KernelParams { k: 6, row_normalize: true, ..Default::default() };
        let m = KernelModel::from_composites(&z, 8, 8, &params).unwrap();
        for s in m.k.row_sums() {
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn structure_and_monotonicity() {
        let mut g = rng::seeded(9);
        let z: Vec<Vec<f64>> = (0..3).map(|_| (0..256).map(|_| g.random::<f64>()).collect()).collect();
        let params = KernelParams { k: 10, window_half_width: Some(3), ..Default::default() };
        let m = KernelModel::from_composites(&z, 16, 16, &params).unwrap();
        assert!(m.k.nnz() <= 256 * 11);
        let f = extract_features(&z).unwrap();
        for j in 0..256 {
            let row: Vec<(usize, f64)> = m.k.row(j).collect();
            assert!(row.len() <= 11);
            assert!(row.iter().any(|&(l, v)| l == j && v == 1.0));
            assert!(row.iter().all(|&(_, v)| v > 0.0 && v <= 1.0));
            let mut by_dist: Vec<(f64, f64)> = row.iter().map(|&(l, v)| (f.dist2(j, l), v)).collect();
            by_dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            for w in by_dist.windows(2) {
                assert!(w[1].1 <= w[0].1);
            }
        }
    }

    #[test]
    fn identity_kernel_and_weight() {
        let m = KernelModel::<f64>::identity(4);
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(m.apply_k(&v).unwrap(), v.to_vec());
        assert_eq!(m.combined_weight(&v).unwrap(), v.to_vec());
        assert_eq!(m.combined_weight(&[0.0; 4]).unwrap(), vec![0.0; 4]);
        assert!(m.apply_k(&[1.0]).is_err());
        let zero_k = KernelModel::from_composites(&[v.to_vec()], 2, 2, &KernelParams { k: 0, ..Default::default() });
        assert_eq!(zero_k.unwrap().k, SparseMatrix::identity(4));
    }

    #[test]
    fn toy_products_match_dense_oracle() {
        let dense = [1.0, 0.5, 0.0, 0.25, 1.0, 0.75, 0.0, 0.1, 1.0];
        let m = KernelModel { k: SparseMatrix::from_dense(3, 3, &dense).unwrap(), ..KernelModel::identity(3) };
        let v = [2.0, -1.0, 4.0];
        assert_eq!(m.apply_k(&v).unwrap(), vec![1.5, 2.5, 3.9]);
        assert_eq!(m.apply_kt(&v).unwrap(), vec![1.75, 0.4, 3.25]);
        assert_eq!(m.combined_weight(&[1.0, 1.0, 1.0]).unwrap(), vec![1.25, 1.6, 1.75]);
    }

    #[test]
    fn adjointness() {
        let mut g = rng::seeded(5);
        let z: Vec<Vec<f64>> = (0..2).map(|_| (0..100).map(|_| g.random::<f64>()).collect()).collect();
        let m = KernelModel::from_composites(&z, 10, 10, &KernelParams { k: 8, ..Default::default() }).unwrap();
        for _ in 0..20 {
            let u: Vec<f64> = (0..100).map(|_| g.random::<f64>() - 0.5).collect();
            let v: Vec<f64> = (0..100).map(|_| g.random::<f64>() - 0.5).collect();
            let a = dot(&m.apply_k(&v).unwrap(), &u);
            let b = dot(&v, &m.apply_kt(&u).unwrap());
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let z = vec![(0..36).map(|j| (j * j % 7) as f64).collect::<Vec<_>>()];
        let m = KernelModel::from_composites(&z, 6, 6, &KernelParams { k: 4, ..Default::default() }).unwrap();
        let path = dir.path().join("kernel.nksm");
        m.save(&path).unwrap();
        assert!(dir.path().join("kernel.toml").exists());
        assert_eq!(KernelModel::<f64>::load(&path).unwrap(), m);
    }
}
