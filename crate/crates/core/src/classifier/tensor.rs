use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![F::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Weight-only int8 matrix with one scale per row.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMatrix<F> {
    rows: usize,
    cols: usize,
    values: Vec<i8>,
    scales: Vec<F>,
}

impl<F: Scalar> QuantizedMatrix<F> {
    pub fn from_parts(rows: usize, cols: usize, values: Vec<i8>, scales: Vec<F>) -> Self {
        assert_eq!(values.len(), rows * cols, "quantized data length");
        assert_eq!(scales.len(), rows, "scale vector length");
        QuantizedMatrix { rows, cols, values, scales }
    }

    /// Symmetric per-row quantization: scale = max|row| / 127 (1 for an
    /// all-zero row), q = round-half-away-from-zero(v / scale) in [-127, 127].
    pub fn quantize(m: &Matrix<F>) -> Self {
        let mut values = Vec::with_capacity(m.data.len());
        let mut scales = Vec::with_capacity(m.rows);
        for r in 0..m.rows {
            let (q, scale) = quantize_row(m.row(r));
            values.extend(q);
            scales.push(scale);
        }
        QuantizedMatrix { rows: m.rows, cols: m.cols, values, scales }
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn scales(&self) -> &[F] {
        &self.scales
    }

    pub fn row(&self, r: usize) -> &[i8] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn dequantize(&self) -> Matrix<F> {
        let mut data = Vec::with_capacity(self.values.len());
        for r in 0..self.rows {
            let s = self.scales[r];
            data.extend(self.row(r).iter().map(|&q| F::of(f64::from(q)) * s));
        }
        Matrix { rows: self.rows, cols: self.cols, data }
    }
}

pub fn quantize_row<F: Scalar>(row: &[F]) -> (Vec<i8>, F) {
    let max_abs = row.iter().fold(F::zero(), |m, v| m.max(v.abs()));
    let scale = if max_abs == F::zero() { F::one() } else { max_abs / F::of(127.0) };
    // Quotient in f64 so an f32 row rounds to the nearest integer exactly;
    // `f64::round` rounds half away from zero.
    let s = scale.as_f64();
    let q = row.iter().map(|&v| (v.as_f64() / s).round().clamp(-127.0, 127.0) as i8).collect();
    (q, scale)
}

/// A weight tensor in either precision.
#[derive(Debug, Clone, PartialEq)]
pub enum Weights<F> {
    Float(Matrix<F>),
    Int8(QuantizedMatrix<F>),
}

impl<F: Scalar> Weights<F> {
    pub fn rows(&self) -> usize {
        match self {
            Weights::Float(m) => m.rows,
            Weights::Int8(q) => q.rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Weights::Float(m) => m.cols,
            Weights::Int8(q) => q.cols,
        }
    }

    pub fn as_float(&self) -> Option<&Matrix<F>> {
        match self {
            Weights::Float(m) => Some(m),
            Weights::Int8(_) => None,
        }
    }

    pub fn as_float_mut(&mut self) -> Option<&mut Matrix<F>> {
        match self {
            Weights::Float(m) => Some(m),
            Weights::Int8(_) => None,
        }
    }

    /// `out[i] = Σ_j W[i][j] · x[j]`. Int8 rows accumulate `q · x` in
    /// float and apply the row scale once.
    pub fn matvec(&self, x: &[F], out: &mut [F]) {
        debug_assert_eq!(x.len(), self.cols());
        debug_assert_eq!(out.len(), self.rows());
        match self {
            Weights::Float(m) => {
                for (o, row) in out.iter_mut().zip(m.data.chunks_exact(m.cols)) {
                    *o = dot(row, x);
                }
            }
            Weights::Int8(q) => {
                for ((o, row), &s) in out.iter_mut().zip(q.values.chunks_exact(q.cols)).zip(&q.scales) {
                    let acc = row.iter().zip(x).fold(F::zero(), |acc, (&w, &v)| acc + F::of(f64::from(w)) * v);
                    *o = acc * s;
                }
            }
        }
    }

    /// `out += factor · W[r]`.
    pub fn add_scaled_row(&self, r: usize, factor: F, out: &mut [F]) {
        match self {
            Weights::Float(m) => {
                for (o, &w) in out.iter_mut().zip(m.row(r)) {
                    *o += factor * w;
                }
            }
            Weights::Int8(q) => {
                let f = factor * q.scales[r];
                for (o, &w) in out.iter_mut().zip(q.row(r)) {
                    *o += f * F::of(f64::from(w));
                }
            }
        }
    }
}

#[inline]
pub(crate) fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}
