//! Flat row-major tensor storage.

use crate::scalar::Scalar;

/// Dense tensor: a shape plus row-major values, `|values| = prod(shape)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorBuffer<S: Scalar> {
    shape: Vec<usize>,
    pub values: Vec<S>,
}

impl<S: Scalar> TensorBuffer<S> {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        TensorBuffer {
            shape: shape.to_vec(),
            values: vec![S::zero(); len],
        }
    }

    pub fn from_vec(shape: &[usize], values: Vec<S>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            values.len(),
            "shape {shape:?} does not match {} values",
            values.len()
        );
        TensorBuffer {
            shape: shape.to_vec(),
            values,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Reinterprets the buffer under a new shape of equal volume.
    pub fn reshaped(mut self, shape: &[usize]) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.values.len(),
            "reshape {:?} -> {shape:?} changes volume",
            self.shape
        );
        self.shape = shape.to_vec();
        self
    }

    /// Rows of a 2-D tensor.
    pub fn rows(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "rows() needs a 2-D tensor");
        self.shape[0]
    }

    /// Columns of a 2-D tensor.
    pub fn cols(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "cols() needs a 2-D tensor");
        self.shape[1]
    }

    pub fn zeros_like(&self) -> Self {
        TensorBuffer::zeros(&self.shape)
    }

    /// Index of the first non-finite value, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }
}

/// `a [m,k] · b [k,n] -> [m,n]`.
pub fn matmul<S: Scalar>(a: &TensorBuffer<S>, b: &TensorBuffer<S>) -> TensorBuffer<S> {
    let (m, k) = (a.rows(), a.cols());
    let (k2, n) = (b.rows(), b.cols());
    assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
    let mut out = TensorBuffer::zeros(&[m, n]);
    for i in 0..m {
        let a_row = &a.values[i * k..(i + 1) * k];
        let out_row = &mut out.values[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            if a_ip == S::zero() {
                continue;
            }
            let b_row = &b.values[p * n..(p + 1) * n];
            for (o, &b_pj) in out_row.iter_mut().zip(b_row.iter()) {
                *o += a_ip * b_pj;
            }
        }
    }
    out
}

/// `aᵀ [k,m] · b [k,n] -> [m,n]` without materializing the transpose.
pub fn matmul_at_b<S: Scalar>(a: &TensorBuffer<S>, b: &TensorBuffer<S>) -> TensorBuffer<S> {
    let (k, m) = (a.rows(), a.cols());
    let (k2, n) = (b.rows(), b.cols());
    assert_eq!(k, k2, "matmul_at_b inner dims {k} vs {k2}");
    let mut out = TensorBuffer::zeros(&[m, n]);
    for p in 0..k {
        let a_row = &a.values[p * m..(p + 1) * m];
        let b_row = &b.values[p * n..(p + 1) * n];
        for (i, &a_pi) in a_row.iter().enumerate() {
            if a_pi == S::zero() {
                continue;
            }
            let out_row = &mut out.values[i * n..(i + 1) * n];
            for (o, &b_pj) in out_row.iter_mut().zip(b_row.iter()) {
                *o += a_pi * b_pj;
            }
        }
    }
    out
}

/// `a [m,k] · bᵀ [n,k] -> [m,n]` without materializing the transpose.
pub fn matmul_a_bt<S: Scalar>(a: &TensorBuffer<S>, b: &TensorBuffer<S>) -> TensorBuffer<S> {
    let (m, k) = (a.rows(), a.cols());
    let (n, k2) = (b.rows(), b.cols());
    assert_eq!(k, k2, "matmul_a_bt inner dims {k} vs {k2}");
    let mut out = TensorBuffer::zeros(&[m, n]);
    for i in 0..m {
        let a_row = &a.values[i * k..(i + 1) * k];
        let out_row = &mut out.values[i * n..(i + 1) * n];
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = &b.values[j * k..(j + 1) * k];
            let mut acc = S::zero();
            for (&x, &y) in a_row.iter().zip(b_row.iter()) {
                acc += x * y;
            }
            *o = acc;
        }
    }
    out
}
