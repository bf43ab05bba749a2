use std::io::{Read, Write};

use crate::error::{check_len, Error, Result};
use crate::scalar::Real;

const MAGIC: &[u8; 4] = b"NKSM";

/// Row-compressed sparse matrix with nonnegative entries.
///
/// Used for both the system matrix `P` (N x J) and the kernel matrix `K`
/// (J x J). Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    values: Vec<T>,
}

impl<T: Real> SparseMatrix<T> {
    /// Assembles from raw CSR arrays, validating every invariant.
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<u32>,
        values: Vec<T>,
    ) -> Result<Self> {
        let m = SparseMatrix { n_rows, n_cols, row_offsets, col_indices, values };
        m.validate()?;
        Ok(m)
    }

    /// Builds from per-row `(column, value)` lists. Columns within a row need
    /// not be sorted; duplicates are summed.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, T)>>) -> Result<Self> {
        let n_rows = rows.len();
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    if c >= n_cols || c > u32::MAX as usize {
                        return Err(Error::InvalidParameter(format!(
                            "column {c} out of range for {n_cols} columns"
                        )));
                    }
                    col_indices.push(c as u32);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self::from_csr(n_rows, n_cols, row_offsets, col_indices, values)
    }

    /// Dense row-major input, zeros dropped. Mostly for tests and toys.
    pub fn from_dense(n_rows: usize, n_cols: usize, dense: &[T]) -> Result<Self> {
        check_len("dense matrix", n_rows * n_cols, dense.len())?;
        let rows = (0..n_rows)
            .map(|i| {
                (0..n_cols)
                    .filter_map(|j| {
                        let v = dense[i * n_cols + j];
                        (v != T::zero()).then_some((j, v))
                    })
                    .collect()
            })
            .collect();
        Self::from_rows(n_cols, rows)
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n as u32).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_len("row offsets", self.n_rows + 1, self.row_offsets.len())?;
        check_len("values", self.col_indices.len(), self.values.len())?;
        if self.row_offsets[0] != 0 || *self.row_offsets.last().unwrap() != self.values.len() {
            return Err(Error::Format("row offsets do not span the value array".into()));
        }
        if self.row_offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Format("row offsets must be nondecreasing".into()));
        }
        if self.col_indices.iter().any(|&c| c as usize >= self.n_cols) {
            return Err(Error::Format("column index out of range".into()));
        }
        if self.values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::Format("matrix entries must be finite and nonnegative".into()));
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col_indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Iterates `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&c, &v)| (c as usize, v))
    }

    /// `A x`.
    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        check_len("matvec input", self.n_cols, x.len())?;
        let mut out = vec![T::zero(); self.n_rows];
        self.matvec_into(x, &mut out);
        Ok(out)
    }

    pub(crate) fn matvec_into(&self, x: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            let span = self.row_offsets[i]..self.row_offsets[i + 1];
            let mut acc = T::zero();
            for (&c, &v) in self.col_indices[span.clone()].iter().zip(&self.values[span]) {
                acc += v * x[c as usize];
            }
            *o = acc;
        }
    }

    /// `A^T q`, accumulated row by row in index order.
    pub fn matvec_t(&self, q: &[T]) -> Result<Vec<T>> {
        check_len("transpose matvec input", self.n_rows, q.len())?;
        let mut out = vec![T::zero(); self.n_cols];
        self.matvec_t_into(q, &mut out);
        Ok(out)
    }

    pub(crate) fn matvec_t_into(&self, q: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
        for (i, &qi) in q.iter().enumerate() {
            if qi == T::zero() {
                continue;
            }
            let span = self.row_offsets[i]..self.row_offsets[i + 1];
            for (&c, &v) in self.col_indices[span.clone()].iter().zip(&self.values[span]) {
                out[c as usize] += v * qi;
            }
        }
    }

    pub fn column_sums(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_cols];
        for (&c, &v) in self.col_indices.iter().zip(&self.values) {
            out[c as usize] += v;
        }
        out
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.n_rows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// Multiplies every entry by `c >= 0`.
    pub fn scaled(&self, c: T) -> Result<Self> {
        if !(c >= T::zero() && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale must be finite and >= 0, got {c}")));
        }
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= c);
        Ok(m)
    }

    /// Multiplies row `i` by `weights[i]` (per-ray attenuation/normalization).
    pub fn scale_rows(&mut self, weights: &[T]) -> Result<()> {
        check_len("row weights", self.n_rows, weights.len())?;
        if weights.iter().any(|w| !(w.is_finite() && *w >= T::zero())) {
            return Err(Error::InvalidParameter("row weights must be finite and >= 0".into()));
        }
        for (i, &w) in weights.iter().enumerate() {
            let span = self.row_offsets[i]..self.row_offsets[i + 1];
            self.values[span].iter_mut().for_each(|v| *v *= w);
        }
        Ok(())
    }

    /// Divides each nonempty row by its sum.
    pub fn normalize_rows(&mut self) {
        for i in 0..self.n_rows {
            let span = self.row_offsets[i]..self.row_offsets[i + 1];
            let s: T = self.values[span.clone()].iter().copied().sum();
            if s > T::zero() {
                self.values[span].iter_mut().for_each(|v| *v /= s);
            }
        }
    }

    pub fn to_dense(&self) -> Vec<T> {
        let mut d = vec![T::zero(); self.n_rows * self.n_cols];
        for i in 0..self.n_rows {
            for (c, v) in self.row(i) {
                d[i * self.n_cols + c] += v;
            }
        }
        d
    }

    pub fn convert<U: Real>(&self) -> SparseMatrix<U> {
        SparseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_offsets: self.row_offsets.clone(),
            col_indices: self.col_indices.clone(),
            values: crate::scalar::convert(&self.values),
        }
    }

    /// Writes the little-endian `NKSM` container. Values are stored as f64.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        for n in [self.n_rows, self.n_cols, self.nnz()] {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for &o in &self.row_offsets {
            w.write_all(&(o as u64).to_le_bytes())?;
        }
        for &c in &self.col_indices {
            w.write_all(&c.to_le_bytes())?;
        }
        for &v in &self.values {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("missing NKSM magic".into()));
        }
        let n_rows = read_u64(&mut r)? as usize;
        let n_cols = read_u64(&mut r)? as usize;
        let nnz = read_u64(&mut r)? as usize;
        let row_offsets = (0..=n_rows)
            .map(|_| read_u64(&mut r).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let col_indices = (0..nnz)
            .map(|_| {
                let mut b = [0u8; 4];
                r.read_exact(&mut b)?;
                Ok(u32::from_le_bytes(b))
            })
            .collect::<Result<Vec<_>>>()?;
        let values = (0..nnz)
            .map(|_| {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                Ok(T::lit(f64::from_le_bytes(b)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_csr(n_rows, n_cols, row_offsets, col_indices, values)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(f)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(f)
    }
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
