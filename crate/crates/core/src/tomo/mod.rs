//! Imaging grid, projection geometry, system matrix and projectors.

mod grid;
pub mod siddon;
mod sparse;

use std::io::{Read, Write};
use std::path::Path;

pub use grid::{Grid, ProjGeometry};
pub use siddon::build_system_matrix;
pub use sparse::SparseMatrix;

use crate::error::{check_len, Error, Result};
use crate::scalar::Real;

/// Activity or coefficient image on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    pub grid: Grid,
    pub data: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn new(grid: Grid, data: Vec<T>) -> Result<Self> {
        check_len("image", grid.len(), data.len())?;
        Ok(Image { grid, data })
    }

    pub fn zeros(grid: Grid) -> Self {
        Image { grid, data: vec![T::zero(); grid.len()] }
    }

    pub fn filled(grid: Grid, v: T) -> Self {
        Image { grid, data: vec![v; grid.len()] }
    }
}

/// Projection-domain array (counts, expectations or backgrounds).
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram<T> {
    pub geometry: ProjGeometry,
    pub data: Vec<T>,
}

impl<T: Real> Sinogram<T> {
    pub fn new(geometry: ProjGeometry, data: Vec<T>) -> Result<Self> {
        check_len("sinogram", geometry.len(), data.len())?;
        Ok(Sinogram { geometry, data })
    }

    pub fn zeros(geometry: ProjGeometry) -> Self {
        Sinogram { geometry, data: vec![T::zero(); geometry.len()] }
    }
}

/// `P x`.
pub fn forward_project<T: Real>(p: &SparseMatrix<T>, x: &[T]) -> Result<Vec<T>> {
    p.matvec(x)
}

/// `P^T q`.
pub fn back_project<T: Real>(p: &SparseMatrix<T>, q: &[T]) -> Result<Vec<T>> {
    p.matvec_t(q)
}

/// Sensitivity image `P^T 1`.
pub fn sensitivity<T: Real>(p: &SparseMatrix<T>) -> Vec<T> {
    let ones = vec![T::one(); p.n_rows()];
    let mut s = vec![T::zero(); p.n_cols()];
    p.matvec_t_into(&ones, &mut s);
    s
}

/// Writes a flat array as little-endian f64.
pub fn write_raw<T: Real>(path: impl AsRef<Path>, data: &[T]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for v in data {
        w.write_all(&v.as_f64().to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a little-endian f64 array, checking the element count.
pub fn read_raw<T: Real>(path: impl AsRef<Path>, len: usize) -> Result<Vec<T>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * len {
        return Err(Error::Format(format!(
            "raw array has {} bytes, expected {}",
            bytes.len(),
            8 * len
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap())))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::dot;
    use proptest::prelude::*;
    use rand::Rng;

    fn toy() -> SparseMatrix<f64> {
        SparseMatrix::from_dense(2, 2, &[1.0, 0.0, 0.5, 0.5]).unwrap()
    }

    #[test]
    fn toy_forward_back_and_sensitivity() {
        let p = toy();
        assert_eq!(forward_project(&p, &[1.0, 1.0]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(back_project(&p, &[2.0, 2.0]).unwrap(), vec![3.0, 1.0]);
        assert_eq!(sensitivity(&p), vec![1.5, 0.5]);
        assert_eq!(forward_project(&p, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(back_project(&p, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(sensitivity(&SparseMatrix::<f64>::zeros(3, 2)), vec![0.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = toy();
        assert!(matches!(
            forward_project(&p, &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(back_project(&p, &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn system_matrix_properties() {
        let grid = Grid::new(12, 10, 2.5).unwrap();
        let geom = ProjGeometry::covering(&grid, 17);
        let p: SparseMatrix<f64> = build_system_matrix(&grid, &geom).unwrap();
        assert_eq!((p.n_rows(), p.n_cols()), (geom.len(), grid.len()));
        assert!(p.values().iter().all(|&v| v >= 0.0 && v.is_finite()));

        // sensitivity is the column sum and the back-projection of ones
        let s = sensitivity(&p);
        assert_eq!(s, p.column_sums());
        assert_eq!(s, back_project(&p, &vec![1.0; p.n_rows()]).unwrap());

        // bit-identical rebuild
        let q: SparseMatrix<f64> = build_system_matrix(&grid, &geom).unwrap();
        assert_eq!(p, q);

        // homogeneity
        let x: Vec<f64> = (0..grid.len()).map(|j| (j % 7) as f64).collect();
        let px = forward_project(&p, &x).unwrap();
        let x3: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let p3x = forward_project(&p, &x3).unwrap();
        for (a, b) in px.iter().zip(&p3x) {
            assert!((3.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn adjointness_on_random_pairs() {
        let grid = Grid::new(16, 16, 3.0).unwrap();
        let geom = ProjGeometry::covering(&grid, 24);
        let p: SparseMatrix<f64> = build_system_matrix(&grid, &geom).unwrap();
        let mut rng = crate::rng::seeded(7);
        for _ in 0..100 {
            let x: Vec<f64> = (0..p.n_cols()).map(|_| rng.random::<f64>()).collect();
            let q: Vec<f64> = (0..p.n_rows()).map(|_| rng.random::<f64>()).collect();
            let px = forward_project(&p, &x).unwrap();
            let ptq = back_project(&p, &q).unwrap();
            let lhs = dot(&px, &q);
            let rhs = dot(&x, &ptq);
            let bound = 1e-10 * (crate::scalar::norm2(&px) * crate::scalar::norm2(&q) + 1.0);
            assert!((lhs - rhs).abs() <= bound, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn raw_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.f64");
        let v = vec![1.5, -0.25, 3e10];
        write_raw(&path, &v).unwrap();
        assert_eq!(read_raw::<f64>(&path, 3).unwrap(), v);
        assert!(read_raw::<f64>(&path, 4).is_err());
    }

    proptest! {
        #[test]
        fn projections_preserve_nonnegativity(
            x in proptest::collection::vec(0.0f64..10.0, 36),
            q in proptest::collection::vec(0.0f64..10.0, 6 * 9),
        ) {
            let grid = Grid::new(6, 6, 1.0).unwrap();
            let geom = ProjGeometry::covering(&grid, 6);
            let p: SparseMatrix<f64> = build_system_matrix(&grid, &geom).unwrap();
            prop_assume!(q.len() == p.n_rows());
            prop_assert!(forward_project(&p, &x).unwrap().iter().all(|&v| v >= 0.0));
            prop_assert!(back_project(&p, &q).unwrap().iter().all(|&v| v >= 0.0));
        }
    }
}
