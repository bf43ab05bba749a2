use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar used throughout the crate: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal. Infallible for the two implementors.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion to f64")
    }

    /// `c = a b + beta c` for an `m x k` by `k x n` product; each matrix is
    /// given with its row and column strides.
    fn gemm(dims: [usize; 3], a: Strided<Self>, b: Strided<Self>, beta: Self, c: StridedMut<Self>);
}

/// Read-only strided matrix view: data, row stride, column stride.
pub type Strided<'a, T> = (&'a [T], usize, usize);
pub type StridedMut<'a, T> = (&'a mut [T], usize, usize);

fn check_view(len: usize, rows: usize, cols: usize, rs: usize, cs: usize) {
    if rows > 0 && cols > 0 {
        assert!((rows - 1) * rs + (cols - 1) * cs < len, "strided view exceeds its buffer");
    }
}

macro_rules! impl_real {
    ($t:ty, $kernel:path) => {
        impl Real for $t {
            fn gemm([m, k, n]: [usize; 3], a: Strided<$t>, b: Strided<$t>, beta: $t, c: StridedMut<$t>) {
                check_view(a.0.len(), m, k, a.1, a.2);
                check_view(b.0.len(), k, n, b.1, b.2);
                check_view(c.0.len(), m, n, c.1, c.2);
                // SAFETY: every view was bounds-checked above
                unsafe {
                    $kernel(
                        m, k, n, 1.0,
                        a.0.as_ptr(), a.1 as isize, a.2 as isize,
                        b.0.as_ptr(), b.1 as isize, b.2 as isize,
                        beta, c.0.as_mut_ptr(), c.1 as isize, c.2 as isize,
                    )
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// Converts a slice between scalar types.
pub fn convert<A: Real, B: Real>(v: &[A]) -> Vec<B> {
    v.iter().map(|&a| B::lit(a.as_f64())).collect()
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}
