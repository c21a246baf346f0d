//! Bounds-checked strided matrix views over `matrixmultiply`.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Read-only strided matrix view. Strides are in elements and may be
/// negative or zero.
#[derive(Clone, Copy)]
pub struct MatRef<'a, T> {
    data: &'a [T],
    offset: usize,
    rows: usize,
    cols: usize,
    rs: isize,
    cs: isize,
}

/// Mutable strided view; distinct `(i, j)` must address distinct elements.
pub struct MatMut<'a, T> {
    data: &'a mut [T],
    offset: usize,
    rows: usize,
    cols: usize,
    rs: isize,
    cs: isize,
}

fn extent(offset: usize, rows: usize, cols: usize, rs: isize, cs: isize, len: usize) -> bool {
    if rows == 0 || cols == 0 {
        return true;
    }
    let corners = [
        0isize,
        (rows as isize - 1) * rs,
        (cols as isize - 1) * cs,
        (rows as isize - 1) * rs + (cols as isize - 1) * cs,
    ];
    let lo = offset as isize + corners.iter().min().unwrap();
    let hi = offset as isize + corners.iter().max().unwrap();
    lo >= 0 && (hi as usize) < len
}

impl<'a, T> MatRef<'a, T> {
    /// Panics if the view would leave `data`.
    pub fn new(data: &'a [T], offset: usize, rows: usize, cols: usize, rs: isize, cs: isize) -> Self {
        assert!(
            extent(offset, rows, cols, rs, cs, data.len()),
            "matrix view {rows}x{cols} (strides {rs},{cs}) at {offset} exceeds {} elements",
            data.len()
        );
        MatRef { data, offset, rows, cols, rs, cs }
    }

    /// Dense row-major `rows × cols`.
    pub fn row_major(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self::new(data, 0, rows, cols, cols as isize, 1)
    }

    pub fn t(self) -> Self {
        MatRef {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
            ..self
        }
    }
}

impl<'a, T> MatMut<'a, T> {
    pub fn new(data: &'a mut [T], offset: usize, rows: usize, cols: usize, rs: isize, cs: isize) -> Self {
        assert!(extent(offset, rows, cols, rs, cs, data.len()), "output view exceeds buffer");
        let (r, c) = (rs.unsigned_abs(), cs.unsigned_abs());
        assert!(
            rows <= 1 && cols <= 1
                || rows <= 1 && c >= 1
                || cols <= 1 && r >= 1
                || (c >= 1 && r >= cols * c)
                || (r >= 1 && c >= rows * r),
            "output view aliases itself"
        );
        MatMut { data, offset, rows, cols, rs, cs }
    }

    pub fn row_major(data: &'a mut [T], rows: usize, cols: usize) -> Self {
        Self::new(data, 0, rows, cols, cols as isize, 1)
    }
}

/// Floating-point element type for tensors and kernels.
pub trait Real:
    Float + FromPrimitive + Sum + Default + Debug + Send + Sync + 'static
{
    /// `c ← alpha · a · b + beta · c`.
    fn gemm(alpha: Self, a: MatRef<'_, Self>, b: MatRef<'_, Self>, beta: Self, c: MatMut<'_, Self>);

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("representable")
    }
}

fn check_dims<T>(a: &MatRef<'_, T>, b: &MatRef<'_, T>, c: &MatMut<'_, T>) {
    assert!(
        a.cols == b.rows && a.rows == c.rows && b.cols == c.cols,
        "gemm shape mismatch: {}x{} · {}x{} -> {}x{}",
        a.rows,
        a.cols,
        b.rows,
        b.cols,
        c.rows,
        c.cols
    );
}

macro_rules! impl_real {
    ($t:ty, $f:path) => {
        impl Real for $t {
            fn gemm(alpha: Self, a: MatRef<'_, Self>, b: MatRef<'_, Self>, beta: Self, c: MatMut<'_, Self>) {
                check_dims(&a, &b, &c);
                if c.rows == 0 || c.cols == 0 {
                    return;
                }
                // SAFETY: every view was bounds-checked on construction, the
                // dimensions agree, and the output view does not alias itself.
                unsafe {
                    $f(
                        c.rows,
                        a.cols,
                        c.cols,
                        alpha,
                        a.data.as_ptr().offset(a.offset as isize),
                        a.rs,
                        a.cs,
                        b.data.as_ptr().offset(b.offset as isize),
                        b.rs,
                        b.cs,
                        beta,
                        c.data.as_mut_ptr().offset(c.offset as isize),
                        c.rs,
                        c.cs,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_product_with_transposes() {
        let a: Vec<f64> = (0..6).map(|v| v as f64).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| (v as f64) * 0.5 - 1.0).collect(); // 4x3
        let mut c = vec![1.0; 8];
        f64::gemm(
            2.0,
            MatRef::row_major(&a, 2, 3),
            MatRef::row_major(&b, 4, 3).t(),
            1.0,
            MatMut::row_major(&mut c, 2, 4),
        );
        for i in 0..2 {
            for j in 0..4 {
                let want = 1.0 + 2.0 * (0..3).map(|k| a[i * 3 + k] * b[j * 3 + k]).sum::<f64>();
                assert_eq!(c[i * 4 + j], want);
            }
        }
    }

    #[test]
    fn negative_strides_reverse() {
        let x = [1.0f32, 2.0, 3.0];
        let one = [1.0f32];
        let mut y = [0.0f32; 3];
        // reversed column vector times scalar
        f32::gemm(1.0, MatRef::new(&x, 2, 3, 1, -1, 1), MatRef::row_major(&one, 1, 1), 0.0, MatMut::row_major(&mut y, 3, 1));
        assert_eq!(y, [3.0, 2.0, 1.0]);
    }

    #[test]
    #[should_panic]
    fn out_of_bounds_view_panics() {
        let x = [0.0f64; 5];
        let _ = MatRef::row_major(&x, 2, 3);
    }
}
