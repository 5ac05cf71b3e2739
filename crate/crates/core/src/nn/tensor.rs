use num_traits::Float;

/// Floating-point element type of the networks. `f32` for training, `f64`
/// for gradient checks.
pub trait Real: Float + Default + Send + Sync + std::fmt::Debug + std::iter::Sum + 'static {
    /// `c = a·b + beta·c` for row-major `a` (m×k, optionally transposed
    /// storage) and `b` (k×n).
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
    );

    fn lit(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[f32],
        sa: (isize, isize),
        b: &[f32],
        sb: (isize, isize),
        beta: f32,
        c: &mut [f32],
    ) {
        debug_assert!(c.len() >= m * n);
        // SAFETY: callers pass slices covering the strided extents; checked
        // by the Mat wrappers below.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                sa.0,
                sa.1,
                b.as_ptr(),
                sb.0,
                sb.1,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
    fn lit(v: f64) -> f32 {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[f64],
        sa: (isize, isize),
        b: &[f64],
        sb: (isize, isize),
        beta: f64,
        c: &mut [f64],
    ) {
        debug_assert!(c.len() >= m * n);
        // SAFETY: as for f32.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                sa.0,
                sa.1,
                b.as_ptr(),
                sb.0,
                sb.1,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
    fn lit(v: f64) -> f64 {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Row-major 2-D tensor. Rows are batch items.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor data length");
        Mat { rows, cols, data }
    }

    pub fn scalar(v: T) -> Self {
        Mat::from_vec(1, 1, vec![v])
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Mat::from_vec(
            self.rows,
            self.cols,
            self.data.iter().map(|&x| f(x)).collect(),
        )
    }

    pub fn add_assign(&mut self, other: &Mat<T>) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Mat<U> {
        Mat::from_vec(
            self.rows,
            self.cols,
            self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        )
    }
}

/// `a·b`, with either operand optionally transposed.
pub fn matmul<T: Real>(a: &Mat<T>, ta: bool, b: &Mat<T>, tb: bool) -> Mat<T> {
    let (m, k) = if ta {
        (a.cols, a.rows)
    } else {
        (a.rows, a.cols)
    };
    let (k2, n) = if tb {
        (b.cols, b.rows)
    } else {
        (b.rows, b.cols)
    };
    assert_eq!(k, k2, "matmul inner dimension");
    let mut c = Mat::zeros(m, n);
    matmul_acc(a, ta, b, tb, &mut c, T::zero());
    c
}

/// `c = a·b + beta·c`.
pub fn matmul_acc<T: Real>(a: &Mat<T>, ta: bool, b: &Mat<T>, tb: bool, c: &mut Mat<T>, beta: T) {
    let (m, k) = if ta {
        (a.cols, a.rows)
    } else {
        (a.rows, a.cols)
    };
    let n = if tb { b.rows } else { b.cols };
    assert_eq!(c.shape(), [m, n]);
    let sa = if ta {
        (1, a.cols as isize)
    } else {
        (a.cols as isize, 1)
    };
    let sb = if tb {
        (1, b.cols as isize)
    } else {
        (b.cols as isize, 1)
    };
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in &mut c.data {
            *v = *v * beta;
        }
        return;
    }
    T::gemm(m, k, n, &a.data, sa, &b.data, sb, beta, &mut c.data);
}
