use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major matrix of f64.
#[derive(Clone, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor2({}x{}, {:?})", self.rows, self.cols, &self.data[..self.data.len().min(8)])
    }
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape("tensor", format!("{} values for {rows}x{cols}", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("tensor", "ragged rows"));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Tensor2 {
        let mut t = Tensor2::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// Sub-matrix of rows `r0..r1`.
    pub fn slice_rows(&self, r0: usize, r1: usize) -> Tensor2 {
        Tensor2 {
            rows: r1 - r0,
            cols: self.cols,
            data: self.data[r0 * self.cols..r1 * self.cols].to_vec(),
        }
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hcat(&self, other: &Tensor2) -> Tensor2 {
        assert_eq!(self.rows, other.rows, "hcat row mismatch");
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Tensor2 {
            rows: self.rows,
            cols,
            data,
        }
    }

    /// Columns `c0..c1` copied out.
    pub fn slice_cols(&self, c0: usize, c1: usize) -> Tensor2 {
        let mut data = Vec::with_capacity(self.rows * (c1 - c0));
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[c0..c1]);
        }
        Tensor2 {
            rows: self.rows,
            cols: c1 - c0,
            data,
        }
    }

    pub fn add_assign(&mut self, other: &Tensor2) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn view(&self) -> MatRef<'_> {
        MatRef {
            data: &self.data,
            rows: self.rows,
            cols: self.cols,
            rs: self.cols,
            cs: 1,
        }
    }

    pub fn view_mut(&mut self) -> MatMut<'_> {
        MatMut {
            rows: self.rows,
            cols: self.cols,
            rs: self.cols,
            cs: 1,
            data: &mut self.data,
        }
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.cols != other.rows {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", self.shape(), other.shape()),
            ));
        }
        let mut out = Tensor2::zeros(self.rows, other.cols);
        gemm(1.0, self.view(), other.view(), 0.0, out.view_mut());
        Ok(out)
    }
}

/// Strided read-only matrix view.
#[derive(Clone, Copy)]
pub struct MatRef<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a> MatRef<'a> {
    /// A `1×len` view of a slice.
    pub fn row_vector(data: &'a [f64]) -> Self {
        MatRef {
            data,
            rows: 1,
            cols: data.len(),
            rs: data.len(),
            cs: 1,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn t(self) -> MatRef<'a> {
        MatRef {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    /// Columns `c0..c1` of the view.
    pub fn cols_range(self, c0: usize, c1: usize) -> MatRef<'a> {
        assert!(c0 <= c1 && c1 <= self.cols);
        let off = c0 * self.cs;
        MatRef {
            data: if c1 > c0 && self.rows > 0 { &self.data[off..] } else { &[] },
            rows: self.rows,
            cols: c1 - c0,
            rs: self.rs,
            cs: self.cs,
        }
    }

    /// Rows `r0..r1` of the view.
    pub fn rows_range(self, r0: usize, r1: usize) -> MatRef<'a> {
        assert!(r0 <= r1 && r1 <= self.rows);
        let off = r0 * self.rs;
        MatRef {
            data: if r1 > r0 && self.cols > 0 { &self.data[off..] } else { &[] },
            rows: r1 - r0,
            cols: self.cols,
            rs: self.rs,
            cs: self.cs,
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.rs + j * self.cs]
    }

    fn check(&self) {
        if self.rows > 0 && self.cols > 0 {
            let last = (self.rows - 1) * self.rs + (self.cols - 1) * self.cs;
            assert!(last < self.data.len(), "matrix view out of bounds");
        }
    }
}

/// Strided mutable matrix view.
pub struct MatMut<'a> {
    data: &'a mut [f64],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a> MatMut<'a> {
    /// A `1×len` view of a slice.
    pub fn row_vector(data: &'a mut [f64]) -> Self {
        MatMut {
            rows: 1,
            cols: data.len(),
            rs: data.len(),
            cs: 1,
            data,
        }
    }

    pub fn cols_range(self, c0: usize, c1: usize) -> MatMut<'a> {
        assert!(c0 <= c1 && c1 <= self.cols);
        let off = c0 * self.cs;
        let empty = c1 == c0 || self.rows == 0;
        MatMut {
            data: if empty { &mut [] } else { &mut self.data[off..] },
            rows: self.rows,
            cols: c1 - c0,
            rs: self.rs,
            cs: self.cs,
        }
    }

    fn check(&self) {
        if self.rows > 0 && self.cols > 0 {
            let last = (self.rows - 1) * self.rs + (self.cols - 1) * self.cs;
            assert!(last < self.data.len(), "matrix view out of bounds");
        }
    }
}

/// `C ← alpha·A·B + beta·C`.
///
/// Short left operands (one or two rows, the recurrent step) use direct
/// loops over the contiguous dimension; everything else goes to the packed
/// kernel of `matrixmultiply`.
pub fn gemm(alpha: f64, a: MatRef<'_>, b: MatRef<'_>, beta: f64, c: MatMut<'_>) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension");
    assert_eq!((a.rows, b.cols), (c.rows, c.cols), "gemm output shape");
    a.check();
    b.check();
    c.check();
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let v = &mut c.data[i * c.rs + j * c.cs];
                *v = if beta == 0.0 { 0.0 } else { beta * *v };
            }
        }
        return;
    }
    if m <= 2 && c.cs == 1 {
        if b.cs == 1 {
            small_axpy(alpha, a, b, beta, c);
            return;
        }
        if b.rs == 1 {
            small_dot(alpha, a, b, beta, c);
            return;
        }
    }
    // SAFETY: every view was bounds-checked above for its full extent and the
    // output does not alias the inputs (it is borrowed mutably).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr(),
            c.rs as isize,
            c.cs as isize,
        );
    }
}

fn scale_row(row: &mut [f64], beta: f64) {
    if beta == 0.0 {
        row.fill(0.0);
    } else if beta != 1.0 {
        row.iter_mut().for_each(|v| *v *= beta);
    }
}

// rows of B contiguous: c_i += alpha * sum_k a_ik * b_k
fn small_axpy(alpha: f64, a: MatRef<'_>, b: MatRef<'_>, beta: f64, c: MatMut<'_>) {
    let n = b.cols;
    for i in 0..a.rows {
        let crow = &mut c.data[i * c.rs..i * c.rs + n];
        scale_row(crow, beta);
        for kk in 0..a.cols {
            let s = alpha * a.at(i, kk);
            if s == 0.0 {
                continue;
            }
            let brow = &b.data[kk * b.rs..kk * b.rs + n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += s * bv;
            }
        }
    }
}

// columns of B contiguous: c_ij += alpha * <a_i, b_:j>
fn small_dot(alpha: f64, a: MatRef<'_>, b: MatRef<'_>, beta: f64, c: MatMut<'_>) {
    let k = a.cols;
    for i in 0..a.rows {
        let arow: Vec<f64> = (0..k).map(|kk| a.at(i, kk)).collect();
        let crow = &mut c.data[i * c.rs..i * c.rs + b.cols];
        scale_row(crow, beta);
        for (j, cv) in crow.iter_mut().enumerate() {
            let bcol = &b.data[j * b.cs..j * b.cs + k];
            *cv += alpha * dot(&arow, bcol);
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators so the loop vectorizes
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * c + l] * b[4 * c + l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}
