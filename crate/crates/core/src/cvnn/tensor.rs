use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex tensor stored as separate real and imaginary planes, row-major.
///
/// Activations use `(batch, channels, height, width)` or `(batch, features)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CTensor {
    shape: Vec<usize>,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl CTensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        CTensor { shape: shape.to_vec(), re: vec![0.0; n], im: vec![0.0; n] }
    }

    pub fn from_parts(shape: &[usize], re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if re.len() != n || im.len() != n {
            return Err(Error::invalid(format!(
                "shape {shape:?} needs {n} elements, got {} real and {} imaginary",
                re.len(),
                im.len()
            )));
        }
        Ok(CTensor { shape: shape.to_vec(), re, im })
    }

    pub fn from_complex(shape: &[usize], values: &[Complex64]) -> Result<Self> {
        let re = values.iter().map(|z| z.re).collect();
        let im = values.iter().map(|z| z.im).collect();
        CTensor::from_parts(shape, re, im)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    /// Leading dimension.
    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Number of elements per batch entry.
    pub fn sample_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn re_mut(&mut self) -> &mut [f64] {
        &mut self.re
    }

    pub fn im_mut(&mut self) -> &mut [f64] {
        &mut self.im
    }

    pub fn parts_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.re, &mut self.im)
    }

    pub fn get(&self, idx: usize) -> Complex64 {
        Complex64::new(self.re[idx], self.im[idx])
    }

    pub fn set(&mut self, idx: usize, z: Complex64) {
        self.re[idx] = z.re;
        self.im[idx] = z.im;
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.re.iter().zip(&self.im).map(|(&r, &i)| Complex64::new(r, i)).collect()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.len() {
            return Err(Error::invalid(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Copies batch rows `rows` into a new tensor.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let per = self.sample_len();
        let mut shape = self.shape.clone();
        shape[0] = rows.len();
        let mut re = Vec::with_capacity(rows.len() * per);
        let mut im = Vec::with_capacity(rows.len() * per);
        for &r in rows {
            re.extend_from_slice(&self.re[r * per..(r + 1) * per]);
            im.extend_from_slice(&self.im[r * per..(r + 1) * per]);
        }
        CTensor { shape, re, im }
    }

    /// Stacks tensors with identical per-sample shape along the batch axis.
    pub fn concat_rows(parts: &[&CTensor]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::invalid("nothing to concatenate"))?;
        let tail = &first.shape[1..];
        let mut rows = 0;
        let mut re = Vec::new();
        let mut im = Vec::new();
        for p in parts {
            if &p.shape[1..] != tail {
                return Err(Error::invalid("per-sample shapes differ"));
            }
            rows += p.batch();
            re.extend_from_slice(&p.re);
            im.extend_from_slice(&p.im);
        }
        let mut shape = first.shape.clone();
        shape[0] = rows;
        Ok(CTensor { shape, re, im })
    }

    pub fn scale(&mut self, s: f64) {
        self.re.iter_mut().chain(self.im.iter_mut()).for_each(|v| *v *= s);
    }

    pub fn scale_complex(&mut self, s: Complex64) {
        for (r, i) in self.re.iter_mut().zip(self.im.iter_mut()) {
            let z = Complex64::new(*r, *i) * s;
            *r = z.re;
            *i = z.im;
        }
    }

    pub fn add_assign(&mut self, other: &CTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::invalid(format!(
                "shape mismatch {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        self.re.iter_mut().zip(&other.re).for_each(|(a, b)| *a += b);
        self.im.iter_mut().zip(&other.im).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().chain(&self.im).all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &CTensor) -> f64 {
        self.re
            .iter()
            .zip(&other.re)
            .chain(self.im.iter().zip(&other.im))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
