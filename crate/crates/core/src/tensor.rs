//! Dense row-major tensors, seeded randomness and the im2col transform.
//!
//! Images are stored channels-first (`C×H×W`), matrices as `rows×cols`.
//! Every reduction in this module accumulates in a fixed index order so
//! results are bit-reproducible across runs and thread counts.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::Shape("shape must have at least one extent".into()));
    }
    if let Some(pos) = shape.iter().position(|&d| d == 0) {
        return Err(Error::Shape(format!(
            "extent {pos} of {shape:?} is zero; all extents must be >= 1"
        )));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len = check_shape(shape)?;
        if data.len() != len {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {len} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        })
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Self> {
        let mut t = Self::zeros(shape)?;
        t.data.fill(value);
        Ok(t)
    }

    /// One-dimensional tensor; an empty vector is rejected like any zero extent.
    pub fn vector(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(&[n], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(&[rows, cols], data)
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut t = Self::zeros(&[n, n])?;
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        Ok(t)
    }

    /// Elements drawn uniformly from `[lo, hi)`.
    pub fn uniform_init(shape: &[usize], lo: f64, hi: f64, rng: &mut SeededRng) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::Range(format!("uniform range [{lo}, {hi}) is empty")));
        }
        let len = check_shape(shape)?;
        let data = (0..len).map(|_| rng.uniform(lo, hi)).collect();
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn flat_index(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() {
            return Err(Error::Shape(format!(
                "index {index:?} has rank {}, tensor has rank {}",
                index.len(),
                self.shape.len()
            )));
        }
        let mut flat = 0;
        for (&i, &d) in index.iter().zip(&self.shape) {
            if i >= d {
                return Err(Error::Shape(format!(
                    "index {index:?} out of bounds for shape {:?}",
                    self.shape
                )));
            }
            flat = flat * d + i;
        }
        Ok(flat)
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.data[self.flat_index(index)?])
    }

    pub fn set(&mut self, index: &[usize], value: f64) -> Result<()> {
        let i = self.flat_index(index)?;
        self.data[i] = value;
        Ok(())
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Largest elementwise absolute difference; shapes must agree.
    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "cannot compare {:?} with {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    fn dims2(&self, what: &str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            s => Err(Error::Shape(format!("{what} must be a matrix, got shape {s:?}"))),
        }
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.dims2("transpose operand")?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::new(&[c, r], out)
    }
}

/// `a (m×k) · b (k×n)`.
///
/// Each output element is accumulated over the inner index in increasing
/// order starting from zero, whatever the loop nesting.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2("left matmul operand")?;
    let (k2, n) = b.dims2("right matmul operand")?;
    if k != k2 {
        return Err(Error::Shape(format!(
            "matmul inner extents differ: {m}x{k} · {k2}x{n}"
        )));
    }
    let mut out = vec![0.0; m * n];
    gemm_nn(&a.data, &b.data, &mut out, m, k, n);
    Tensor::new(&[m, n], out)
}

/// `aᵀ · b` for `a: k×m`, `b: k×n`.
pub fn matmul_at_b(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (k, m) = a.dims2("left matmul operand")?;
    let (k2, n) = b.dims2("right matmul operand")?;
    if k != k2 {
        return Err(Error::Shape(format!(
            "matmul_at_b row extents differ: {k}x{m} vs {k2}x{n}"
        )));
    }
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        let brow = &b.data[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a.data[p * m + i];
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(&[m, n], out)
}

/// `a · bᵀ` for `a: m×k`, `b: n×k`.
pub fn matmul_a_bt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2("left matmul operand")?;
    let (n, k2) = b.dims2("right matmul operand")?;
    if k != k2 {
        return Err(Error::Shape(format!(
            "matmul_a_bt column extents differ: {m}x{k} vs {n}x{k2}"
        )));
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b.data[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (x, y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            out[i * n + j] = acc;
        }
    }
    Tensor::new(&[m, n], out)
}

fn gemm_nn(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// Output spatial extent of a sliding window, or `None` when it does not
/// tile the padded input exactly.
pub fn conv_output_size(size: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    if stride == 0 || padded < k || !(padded - k).is_multiple_of(stride) {
        return None;
    }
    Some((padded - k) / stride + 1)
}

fn image_dims(input: &Tensor) -> Result<(usize, usize, usize)> {
    match input.shape() {
        &[c, h, w] => Ok((c, h, w)),
        s => Err(Error::Shape(format!("expected a C×H×W image, got shape {s:?}"))),
    }
}

/// Unrolls every `k×k` receptive field of a `C×H×W` input into a column.
///
/// Row `c·k·k + u·k + v` holds kernel tap `(c, u, v)`; column `i·W_out + j`
/// is output position `(i, j)`. Taps that land in the padding read zero.
pub fn im2col(input: &Tensor, k: usize, stride: usize, pad: usize) -> Result<Tensor> {
    let (c, h, w) = image_dims(input)?;
    let (oh, ow) = match (
        conv_output_size(h, k, stride, pad),
        conv_output_size(w, k, stride, pad),
    ) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => {
            return Err(Error::Shape(format!(
                "{h}x{w} input with k={k}, stride={stride}, pad={pad} has no integral output size"
            )))
        }
    };
    let cols = oh * ow;
    let mut out = vec![0.0; c * k * k * cols];
    let x = input.data();
    for ch in 0..c {
        for u in 0..k {
            for v in 0..k {
                let row = (ch * k + u) * k + v;
                let dst = &mut out[row * cols..(row + 1) * cols];
                for i in 0..oh {
                    let yy = (i * stride + u) as isize - pad as isize;
                    if yy < 0 || yy >= h as isize {
                        continue;
                    }
                    let src = &x[(ch * h + yy as usize) * w..(ch * h + yy as usize + 1) * w];
                    for j in 0..ow {
                        let xx = (j * stride + v) as isize - pad as isize;
                        if xx >= 0 && xx < w as isize {
                            dst[i * ow + j] = src[xx as usize];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[c * k * k, cols], out)
}

/// Adjoint of [`im2col`]: scatters column gradients back onto a `C×H×W`
/// image, summing overlapping taps in row-major column order.
pub fn col2im(
    cols: &Tensor,
    shape: (usize, usize, usize),
    k: usize,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let (c, h, w) = shape;
    let (oh, ow) = match (
        conv_output_size(h, k, stride, pad),
        conv_output_size(w, k, stride, pad),
    ) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => return Err(Error::Shape(format!("{h}x{w} has no integral output size"))),
    };
    let n = oh * ow;
    if cols.shape() != [c * k * k, n] {
        return Err(Error::Shape(format!(
            "column matrix {:?} does not match image {c}x{h}x{w}",
            cols.shape()
        )));
    }
    let mut out = vec![0.0; c * h * w];
    let src = cols.data();
    for ch in 0..c {
        for u in 0..k {
            for v in 0..k {
                let row = (ch * k + u) * k + v;
                let col = &src[row * n..(row + 1) * n];
                for i in 0..oh {
                    let yy = (i * stride + u) as isize - pad as isize;
                    if yy < 0 || yy >= h as isize {
                        continue;
                    }
                    let base = (ch * h + yy as usize) * w;
                    for j in 0..ow {
                        let xx = (j * stride + v) as isize - pad as isize;
                        if xx >= 0 && xx < w as isize {
                            out[base + xx as usize] += col[i * ow + j];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[c, h, w], out)
}

/// Deterministic generator: ChaCha8 keyed by a 64-bit seed.
///
/// ChaCha output is specified independently of platform and word size, so a
/// seed reproduces the same sequence everywhere. Independent sub-streams are
/// derived with [`SeededRng::derive`].
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Generator for stream `stream` of `seed`; distinct streams do not overlap.
    pub fn derive(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        SeededRng { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.gen()
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.inner.gen()
    }

    /// Uniform in `[lo, hi)`; callers guarantee `lo < hi`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.inner.gen_range(lo..hi)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}
