use std::io::{Read, Write};
use std::path::Path;

use crate::error::{check_len, Error, Result};
use crate::scalar::Real;

const MAGIC: &[u8; 4] = b"NKNP";

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Ordered named parameter tensors. Also used to hold gradients.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetParams<T> {
    pub tensors: Vec<Param<T>>,
}

impl<T: Real> NetParams<T> {
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<T>) -> usize {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.push(Param { name: name.into(), shape, data });
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalars.
    pub fn size(&self) -> usize {
        self.tensors.iter().map(|p| p.data.len()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.tensors.iter().find(|p| p.name == name)
    }

    pub fn zeros_like(&self) -> Self {
        NetParams {
            tensors: self
                .tensors
                .iter()
                .map(|p| Param { name: p.name.clone(), shape: p.shape.clone(), data: vec![T::zero(); p.data.len()] })
                .collect(),
        }
    }

    pub fn check_layout(&self, other: &Self) -> Result<()> {
        check_len("parameter tensors", self.len(), other.len())?;
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            if a.shape != b.shape {
                return Err(Error::InvalidParameter(format!("parameter '{}' has mismatched shape", a.name)));
            }
        }
        Ok(())
    }

    /// `self += a * dir`.
    pub fn axpy(&mut self, a: T, dir: &Self) -> Result<()> {
        self.check_layout(dir)?;
        for (p, d) in self.tensors.iter_mut().zip(&dir.tensors) {
            p.data.iter_mut().zip(&d.data).for_each(|(x, &y)| *x += a * y);
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.check_layout(other)?;
        Ok(self
            .tensors
            .iter()
            .zip(&other.tensors)
            .map(|(a, b)| crate::scalar::dot(&a.data, &b.data))
            .sum())
    }

    pub fn iter_values(&self) -> impl Iterator<Item = &T> {
        self.tensors.iter().flat_map(|p| p.data.iter())
    }

    pub fn is_finite(&self) -> bool {
        self.iter_values().all(|v| v.is_finite())
    }

    pub fn convert<U: Real>(&self) -> NetParams<U> {
        NetParams {
            tensors: self
                .tensors
                .iter()
                .map(|p| Param { name: p.name.clone(), shape: p.shape.clone(), data: crate::scalar::convert(&p.data) })
                .collect(),
        }
    }

    /// NKNP container: magic, tensor count, then per tensor the name, shape
    /// and `f64` data, all little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for p in &self.tensors {
            w.write_all(&(p.name.len() as u32).to_le_bytes())?;
            w.write_all(p.name.as_bytes())?;
            w.write_all(&(p.shape.len() as u32).to_le_bytes())?;
            for &d in &p.shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in &p.data {
                w.write_all(&v.as_f64().to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not an NKNP parameter file".into()));
        }
        let mut b8 = [0u8; 8];
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        let mut out = NetParams::default();
        for _ in 0..n {
            r.read_exact(&mut b4)?;
            let mut name = vec![0u8; u32::from_le_bytes(b4) as usize];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
            r.read_exact(&mut b4)?;
            let ndim = u32::from_le_bytes(b4) as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                r.read_exact(&mut b8)?;
                shape.push(u64::from_le_bytes(b8) as usize);
            }
            let len: usize = shape.iter().product();
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                r.read_exact(&mut b8)?;
                data.push(T::lit(f64::from_le_bytes(b8)));
            }
            out.push(name, shape, data);
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
