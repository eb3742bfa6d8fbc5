//! Dense 2-D f32 tensor with a GEMM-backed matmul.

/// Row-major 2-D tensor. Vectors are `[1, n]` or `[n, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Tensor {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Tensor {
        assert_eq!(data.len(), rows * cols, "tensor data length mismatch");
        Tensor { rows, cols, data }
    }

    pub fn full(rows: usize, cols: usize, v: f32) -> Tensor {
        Tensor {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, o: &Tensor) -> bool {
        self.rows == o.rows && self.cols == o.cols
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self @ other`, allocating the output.
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.cols, other.rows, "matmul inner dimension mismatch");
        let mut out = Tensor::zeros(self.rows, other.cols);
        gemm(false, false, self, other, &mut out, 0.0);
        out
    }
}

/// `c = alpha_a?(a) @ b + beta * c` with optional transposes, via
/// `matrixmultiply::sgemm` (single-threaded, deterministic).
pub fn gemm(trans_a: bool, trans_b: bool, a: &Tensor, b: &Tensor, c: &mut Tensor, beta: f32) {
    let (m, k) = if trans_a { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (kb, n) = if trans_b { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(k, kb, "gemm inner dimension mismatch");
    assert_eq!(c.rows, m);
    assert_eq!(c.cols, n);
    let (rsa, csa) = if trans_a {
        (1isize, a.cols as isize)
    } else {
        (a.cols as isize, 1isize)
    };
    let (rsb, csb) = if trans_b {
        (1isize, b.cols as isize)
    } else {
        (b.cols as isize, 1isize)
    };
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_hand_product() {
        let a = Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Tensor::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.matmul(&b);
        assert_eq!(c.data, vec![58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn gemm_transpose_variants() {
        let a = Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let at = Tensor::from_vec(3, 2, vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let b = Tensor::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let mut c1 = Tensor::zeros(2, 2);
        gemm(false, false, &a, &b, &mut c1, 0.0);
        let mut c2 = Tensor::zeros(2, 2);
        gemm(true, false, &at, &b, &mut c2, 0.0);
        assert_eq!(c1.data, c2.data);

        let bt = Tensor::from_vec(2, 3, vec![7.0, 9.0, 11.0, 8.0, 10.0, 12.0]);
        let mut c3 = Tensor::zeros(2, 2);
        gemm(false, true, &a, &bt, &mut c3, 0.0);
        assert_eq!(c1.data, c3.data);
    }

    #[test]
    fn gemm_beta_accumulates() {
        let a = Tensor::from_vec(1, 2, vec![1.0, 1.0]);
        let b = Tensor::from_vec(2, 1, vec![2.0, 3.0]);
        let mut c = Tensor::from_vec(1, 1, vec![10.0]);
        gemm(false, false, &a, &b, &mut c, 1.0);
        assert_eq!(c.data, vec![15.0]);
    }
}
