//! Forward and backward passes for the layer kinds of the network.
//!
//! Each kind has a pure `*_forward` / `*_backward` pair that returns or
//! consumes an explicit [`Cache`], which is what the training loop uses to
//! run samples independently. [`LayerState`] wraps the same functions for
//! callers that want the cache kept alongside the parameters.

use crate::error::{Error, Result};
use crate::tensor::{col2im, im2col, matmul, matmul_a_bt, matmul_at_b, SeededRng, Tensor};

pub const KERNEL: usize = 3;
pub const STRIDE: usize = 1;
pub const PAD: usize = 1;
pub const POOL: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    /// 3×3 convolution, stride 1, zero padding 1 (spatial size preserved).
    Conv2D { in_ch: usize, out_ch: usize },
    ReLU,
    /// 2×2 max pooling with stride 2; odd trailing rows/columns are dropped.
    MaxPool2,
    Flatten,
    Dense { in_units: usize, out_units: usize },
    Softmax,
}

impl LayerSpec {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv2D { .. } | LayerSpec::Dense { .. })
    }

    pub fn weight_shape(&self) -> Option<Vec<usize>> {
        match *self {
            LayerSpec::Conv2D { in_ch, out_ch } => Some(vec![out_ch, in_ch, KERNEL, KERNEL]),
            LayerSpec::Dense {
                in_units,
                out_units,
            } => Some(vec![out_units, in_units]),
            _ => None,
        }
    }

    pub fn bias_len(&self) -> Option<usize> {
        match *self {
            LayerSpec::Conv2D { out_ch, .. } => Some(out_ch),
            LayerSpec::Dense { out_units, .. } => Some(out_units),
            _ => None,
        }
    }

    /// Shape this layer produces for a given input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Conv2D { in_ch, out_ch } => match input {
                &[c, h, w] if c == in_ch => Ok(vec![out_ch, h, w]),
                s => Err(Error::Shape(format!(
                    "conv expects {in_ch}×H×W input, got {s:?}"
                ))),
            },
            LayerSpec::ReLU => Ok(input.to_vec()),
            LayerSpec::MaxPool2 => match input {
                &[c, h, w] if h >= POOL && w >= POOL => Ok(vec![c, h / POOL, w / POOL]),
                s => Err(Error::Shape(format!(
                    "max pool needs C×H×W with H,W >= 2, got {s:?}"
                ))),
            },
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense {
                in_units,
                out_units,
            } => match input {
                &[n] if n == in_units => Ok(vec![out_units]),
                s => Err(Error::Shape(format!(
                    "dense expects a vector of {in_units}, got {s:?}"
                ))),
            },
            LayerSpec::Softmax => match input {
                &[n] => Ok(vec![n]),
                s => Err(Error::Shape(format!("softmax expects a vector, got {s:?}"))),
            },
        }
    }
}

/// Number of trainable scalars in a layer: `k·k·in·out + out` for convolutions,
/// `in·out + out` for dense layers.
pub fn parameter_count(spec: &LayerSpec) -> Result<usize> {
    match *spec {
        LayerSpec::Conv2D { in_ch, out_ch } => Ok(KERNEL * KERNEL * in_ch * out_ch + out_ch),
        LayerSpec::Dense {
            in_units,
            out_units,
        } => Ok(in_units * out_units + out_units),
        other => Err(Error::Domain(format!("{other:?} has no parameters"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl Params {
    pub fn zeros(spec: &LayerSpec) -> Result<Self> {
        match (spec.weight_shape(), spec.bias_len()) {
            (Some(w), Some(b)) => Ok(Params {
                weights: Tensor::zeros(&w)?,
                bias: Tensor::zeros(&[b])?,
            }),
            _ => Err(Error::Domain(format!("{spec:?} has no parameters"))),
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot(spec: &LayerSpec, rng: &mut SeededRng) -> Result<Self> {
        let (fan_in, fan_out) = match *spec {
            LayerSpec::Conv2D { in_ch, out_ch } => {
                (in_ch * KERNEL * KERNEL, out_ch * KERNEL * KERNEL)
            }
            LayerSpec::Dense {
                in_units,
                out_units,
            } => (in_units, out_units),
            other => return Err(Error::Domain(format!("{other:?} has no parameters"))),
        };
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut p = Params::zeros(spec)?;
        p.weights = Tensor::uniform_init(p.weights.shape(), -limit, limit, rng)?;
        Ok(p)
    }

    pub fn check(&self, spec: &LayerSpec) -> Result<()> {
        let w = spec.weight_shape();
        let b = spec.bias_len();
        if w.as_deref() != Some(self.weights.shape()) || b.map(|b| vec![b]).as_deref() != Some(self.bias.shape()) {
            return Err(Error::Shape(format!(
                "parameters {:?}/{:?} do not fit {spec:?}",
                self.weights.shape(),
                self.bias.shape()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Values a forward pass keeps for the matching backward pass.
#[derive(Debug, Clone)]
pub enum Cache {
    Conv {
        cols: Tensor,
        input_shape: (usize, usize, usize),
    },
    Relu {
        input: Tensor,
    },
    MaxPool {
        argmax: Vec<usize>,
        input_shape: Vec<usize>,
    },
    Flatten {
        input_shape: Vec<usize>,
    },
    Dense {
        input: Tensor,
    },
    Softmax {
        output: Tensor,
    },
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub dw: Option<Tensor>,
    pub db: Option<Tensor>,
    /// Absent when the caller asked not to propagate into the input.
    pub dx: Option<Tensor>,
}

pub fn conv_forward(params: &Params, x: &Tensor) -> Result<(Tensor, Cache)> {
    let (out_ch, in_ch) = (params.weights.shape()[0], params.weights.shape()[1]);
    let (c, h, w) = match x.shape() {
        &[c, h, w] if c == in_ch => (c, h, w),
        s => {
            return Err(Error::Shape(format!(
                "conv expects {in_ch}×H×W input, got {s:?}"
            )))
        }
    };
    let cols = im2col(x, KERNEL, STRIDE, PAD)?;
    let wmat = params
        .weights
        .clone()
        .reshape(&[out_ch, in_ch * KERNEL * KERNEL])?;
    let mut y = matmul(&wmat, &cols)?;
    let hw = h * w;
    for (o, row) in y.data_mut().chunks_mut(hw).enumerate() {
        let b = params.bias.data()[o];
        row.iter_mut().for_each(|v| *v += b);
    }
    let y = y.reshape(&[out_ch, h, w])?;
    Ok((
        y,
        Cache::Conv {
            cols,
            input_shape: (c, h, w),
        },
    ))
}

pub fn conv_backward(params: &Params, cache: &Cache, dy: &Tensor, need_dx: bool) -> Result<Gradients> {
    let (cols, (c, h, w)) = match cache {
        Cache::Conv { cols, input_shape } => (cols, *input_shape),
        _ => return Err(Error::State("conv backward needs a conv cache".into())),
    };
    let out_ch = params.weights.shape()[0];
    if dy.shape() != [out_ch, h, w] {
        return Err(Error::Shape(format!(
            "conv output gradient {:?} does not match {out_ch}x{h}x{w}",
            dy.shape()
        )));
    }
    let dy_mat = dy.clone().reshape(&[out_ch, h * w])?;
    let dw = matmul_a_bt(&dy_mat, cols)?.reshape(params.weights.shape())?;
    let db: Vec<f64> = dy_mat.data().chunks(h * w).map(|r| r.iter().sum()).collect();
    let dx = if need_dx {
        let wmat = params
            .weights
            .clone()
            .reshape(&[out_ch, c * KERNEL * KERNEL])?;
        let dcols = matmul_at_b(&wmat, &dy_mat)?;
        Some(col2im(&dcols, (c, h, w), KERNEL, STRIDE, PAD)?)
    } else {
        None
    };
    Ok(Gradients {
        dw: Some(dw),
        db: Some(Tensor::vector(db)?),
        dx,
    })
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Passes `dy` where the input was strictly positive; the derivative at 0 is 0.
pub fn relu_backward(x: &Tensor, dy: &Tensor) -> Result<Tensor> {
    if x.shape() != dy.shape() {
        return Err(Error::Shape(format!(
            "relu gradient {:?} does not match input {:?}",
            dy.shape(),
            x.shape()
        )));
    }
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&xv, &g)| if xv > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(x.shape(), data)
}

/// 2×2/2 max pooling. Returns the pooled map and, per output element, the
/// flat input index of the winning element (first maximum in row-major
/// window order).
pub fn maxpool_forward(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let (c, h, w) = match x.shape() {
        &[c, h, w] if h >= POOL && w >= POOL => (c, h, w),
        s => {
            return Err(Error::Shape(format!(
                "max pool needs C×H×W with H,W >= 2, got {s:?}"
            )))
        }
    };
    let (oh, ow) = (h / POOL, w / POOL);
    let src = x.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let mut best = (ch * h + i * POOL) * w + j * POOL;
                for u in 0..POOL {
                    for v in 0..POOL {
                        let idx = (ch * h + i * POOL + u) * w + j * POOL + v;
                        if src[idx] > src[best] {
                            best = idx;
                        }
                    }
                }
                out.push(src[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::new(&[c, oh, ow], out)?, argmax))
}

pub fn maxpool_backward(argmax: &[usize], input_shape: &[usize], dy: &Tensor) -> Result<Tensor> {
    if dy.len() != argmax.len() {
        return Err(Error::Shape(format!(
            "pool gradient has {} elements, forward produced {}",
            dy.len(),
            argmax.len()
        )));
    }
    let mut dx = Tensor::zeros(input_shape)?;
    let out = dx.data_mut();
    for (&idx, &g) in argmax.iter().zip(dy.data()) {
        out[idx] += g;
    }
    Ok(dx)
}

pub fn dense_forward(params: &Params, x: &Tensor) -> Result<Tensor> {
    let (out_units, in_units) = (params.weights.shape()[0], params.weights.shape()[1]);
    if x.shape() != [in_units] {
        return Err(Error::Shape(format!(
            "dense expects a vector of {in_units}, got {:?}",
            x.shape()
        )));
    }
    let w = params.weights.data();
    let xs = x.data();
    let y = (0..out_units)
        .map(|o| {
            let row = &w[o * in_units..(o + 1) * in_units];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(xs) {
                acc += a * b;
            }
            acc + params.bias.data()[o]
        })
        .collect();
    Tensor::vector(y)
}

/// `dW = dy ⊗ x`, `db = dy`, `dX = Wᵀ·dy`.
pub fn dense_backward(params: &Params, x: &Tensor, dy: &Tensor, need_dx: bool) -> Result<Gradients> {
    let (out_units, in_units) = (params.weights.shape()[0], params.weights.shape()[1]);
    if dy.shape() != [out_units] || x.shape() != [in_units] {
        return Err(Error::Shape(format!(
            "dense backward got x {:?}, dy {:?} for a {in_units}->{out_units} layer",
            x.shape(),
            dy.shape()
        )));
    }
    let mut dw = Vec::with_capacity(out_units * in_units);
    for &g in dy.data() {
        dw.extend(x.data().iter().map(|&xv| g * xv));
    }
    let dx = if need_dx {
        let w = params.weights.data();
        let mut dx = vec![0.0; in_units];
        for (o, &g) in dy.data().iter().enumerate() {
            let row = &w[o * in_units..(o + 1) * in_units];
            for (d, &wv) in dx.iter_mut().zip(row) {
                *d += wv * g;
            }
        }
        Some(Tensor::vector(dx)?)
    } else {
        None
    };
    Ok(Gradients {
        dw: Some(Tensor::new(&[out_units, in_units], dw)?),
        db: Some(dy.clone()),
        dx,
    })
}

/// Max-shifted softmax; never overflows.
pub fn softmax_forward(x: &Tensor) -> Tensor {
    let max = x.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.data().iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let mut y = x.clone();
    for (dst, e) in y.data_mut().iter_mut().zip(exps) {
        *dst = e / total;
    }
    y
}

/// Runs one layer forward, returning its output and backward cache.
pub fn forward(spec: &LayerSpec, params: Option<&Params>, x: &Tensor) -> Result<(Tensor, Cache)> {
    let need = || Error::State(format!("{spec:?} has no parameters installed"));
    match spec {
        LayerSpec::Conv2D { .. } => conv_forward(params.ok_or_else(need)?, x),
        LayerSpec::ReLU => Ok((relu_forward(x), Cache::Relu { input: x.clone() })),
        LayerSpec::MaxPool2 => {
            let (y, argmax) = maxpool_forward(x)?;
            Ok((
                y,
                Cache::MaxPool {
                    argmax,
                    input_shape: x.shape().to_vec(),
                },
            ))
        }
        LayerSpec::Flatten => Ok((
            x.clone().reshape(&[x.len()])?,
            Cache::Flatten {
                input_shape: x.shape().to_vec(),
            },
        )),
        LayerSpec::Dense { .. } => {
            let y = dense_forward(params.ok_or_else(need)?, x)?;
            Ok((y, Cache::Dense { input: x.clone() }))
        }
        LayerSpec::Softmax => {
            if x.shape().len() != 1 {
                return Err(Error::Shape(format!(
                    "softmax expects a vector, got {:?}",
                    x.shape()
                )));
            }
            let y = softmax_forward(x);
            Ok((y.clone(), Cache::Softmax { output: y }))
        }
    }
}

/// Backward pass for one layer given the cache from its forward pass.
///
/// Softmax has no standalone backward: it is always differentiated together
/// with the cross-entropy loss (see `training::softmax_cross_entropy_grad`).
pub fn backward(
    spec: &LayerSpec,
    params: Option<&Params>,
    cache: &Cache,
    dy: &Tensor,
    need_dx: bool,
) -> Result<Gradients> {
    let need = || Error::State(format!("{spec:?} has no parameters installed"));
    let input_only = |dx: Tensor| Gradients {
        dw: None,
        db: None,
        dx: Some(dx),
    };
    match (spec, cache) {
        (LayerSpec::Conv2D { .. }, c @ Cache::Conv { .. }) => {
            conv_backward(params.ok_or_else(need)?, c, dy, need_dx)
        }
        (LayerSpec::ReLU, Cache::Relu { input }) => Ok(input_only(relu_backward(input, dy)?)),
        (LayerSpec::MaxPool2, Cache::MaxPool { argmax, input_shape }) => {
            Ok(input_only(maxpool_backward(argmax, input_shape, dy)?))
        }
        (LayerSpec::Flatten, Cache::Flatten { input_shape }) => {
            Ok(input_only(dy.clone().reshape(input_shape)?))
        }
        (LayerSpec::Dense { .. }, Cache::Dense { input }) => {
            dense_backward(params.ok_or_else(need)?, input, dy, need_dx)
        }
        (LayerSpec::Softmax, _) => Err(Error::Domain(
            "softmax is differentiated only fused with cross-entropy".into(),
        )),
        (spec, _) => Err(Error::State(format!("cache does not belong to {spec:?}"))),
    }
}

/// A layer with its parameters and the cache of its most recent forward pass.
#[derive(Debug, Clone)]
pub struct LayerState {
    pub spec: LayerSpec,
    pub params: Option<Params>,
    cache: Option<Cache>,
}

impl LayerState {
    /// Builds a layer; parameterized kinds get Glorot-uniform weights.
    pub fn new(spec: LayerSpec, rng: &mut SeededRng) -> Result<Self> {
        let params = if spec.has_params() {
            Some(Params::glorot(&spec, rng)?)
        } else {
            None
        };
        Ok(LayerState {
            spec,
            params,
            cache: None,
        })
    }

    pub fn with_params(spec: LayerSpec, params: Option<Params>) -> Result<Self> {
        match (&params, spec.has_params()) {
            (Some(p), true) => p.check(&spec)?,
            (None, false) => {}
            _ => {
                return Err(Error::Shape(format!(
                    "parameter presence does not match {spec:?}"
                )))
            }
        }
        Ok(LayerState {
            spec,
            params,
            cache: None,
        })
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (y, cache) = forward(&self.spec, self.params.as_ref(), x)?;
        self.cache = Some(cache);
        Ok(y)
    }

    pub fn backward(&self, dy: &Tensor) -> Result<Gradients> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("backward called before forward".into()))?;
        backward(&self.spec, self.params.as_ref(), cache, dy, true)
    }
}

/// Central-difference check of a layer's analytic gradients at `x`.
///
/// The scalar objective is `Σ r ⊙ layer(x)` for a fixed pseudo-random
/// projection `r`. Returns the largest `|analytic − numeric| / max(1, |analytic|)`
/// over every weight, bias and input element.
pub fn finite_difference_check(layer: &LayerState, x: &Tensor, h: f64) -> Result<f64> {
    let spec = layer.spec;
    let mut probe = layer.clone();
    let y = probe.forward(x)?;
    let projection = Tensor::uniform_init(y.shape(), -1.0, 1.0, &mut SeededRng::new(0x5eed))?;
    let grads = probe.backward(&projection)?;

    let objective = |params: Option<&Params>, input: &Tensor| -> Result<f64> {
        let (out, _) = forward(&spec, params, input)?;
        Ok(out
            .data()
            .iter()
            .zip(projection.data())
            .map(|(a, b)| a * b)
            .sum())
    };
    let rel = |analytic: f64, numeric: f64| (analytic - numeric).abs() / analytic.abs().max(1.0);

    let mut worst: f64 = 0.0;
    let dx = grads
        .dx
        .ok_or_else(|| Error::State("input gradient missing".into()))?;
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + h;
        let plus = objective(layer.params.as_ref(), &xp)?;
        xp.data_mut()[i] = orig - h;
        let minus = objective(layer.params.as_ref(), &xp)?;
        xp.data_mut()[i] = orig;
        worst = worst.max(rel(dx.data()[i], (plus - minus) / (2.0 * h)));
    }

    if let (Some(params), Some(dw), Some(db)) = (&layer.params, &grads.dw, &grads.db) {
        let mut p = params.clone();
        for i in 0..p.weights.len() {
            let orig = p.weights.data()[i];
            p.weights.data_mut()[i] = orig + h;
            let plus = objective(Some(&p), x)?;
            p.weights.data_mut()[i] = orig - h;
            let minus = objective(Some(&p), x)?;
            p.weights.data_mut()[i] = orig;
            worst = worst.max(rel(dw.data()[i], (plus - minus) / (2.0 * h)));
        }
        for i in 0..p.bias.len() {
            let orig = p.bias.data()[i];
            p.bias.data_mut()[i] = orig + h;
            let plus = objective(Some(&p), x)?;
            p.bias.data_mut()[i] = orig - h;
            let minus = objective(Some(&p), x)?;
            p.bias.data_mut()[i] = orig;
            worst = worst.max(rel(db.data()[i], (plus - minus) / (2.0 * h)));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(in_ch: usize, out_ch: usize) -> LayerSpec {
        LayerSpec::Conv2D { in_ch, out_ch }
    }

    #[test]
    fn conv_of_a_delta_with_ones_kernel() {
        let mut x = Tensor::zeros(&[1, 5, 5]).unwrap();
        x.set(&[0, 2, 2], 1.0).unwrap();
        let params = Params {
            weights: Tensor::full(&[1, 1, 3, 3], 1.0).unwrap(),
            bias: Tensor::zeros(&[1]).unwrap(),
        };
        let (y, _) = conv_forward(&params, &x).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let inside = (1..=3).contains(&i) && (1..=3).contains(&j);
                assert_eq!(y.get(&[0, i, j]).unwrap(), if inside { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn conv_with_zero_weights_is_constant_bias() {
        let mut rng = SeededRng::new(2);
        let x = Tensor::uniform_init(&[2, 4, 4], -1.0, 1.0, &mut rng).unwrap();
        let params = Params {
            weights: Tensor::zeros(&[3, 2, 3, 3]).unwrap(),
            bias: Tensor::full(&[3], 0.25).unwrap(),
        };
        let (y, _) = conv_forward(&params, &x).unwrap();
        assert_eq!(y.shape(), &[3, 4, 4]);
        assert!(y.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let params = Params::zeros(&conv(3, 4)).unwrap();
        let x = Tensor::zeros(&[2, 4, 4]).unwrap();
        assert!(matches!(conv_forward(&params, &x), Err(Error::Shape(_))));
    }

    #[test]
    fn conv_backward_of_single_pixel_on_delta() {
        // x = delta at (1,1) of a 3x3 image; dy = 1 at output (0,0).
        // y(0,0) = sum_{u,v} W[u,v] x_pad[u, v] with x_pad offset by 1, so
        // only tap (2,2) touches x(1,1): dW is one-hot at (2,2).
        let mut x = Tensor::zeros(&[1, 3, 3]).unwrap();
        x.set(&[0, 1, 1], 1.0).unwrap();
        let mut layer = LayerState::with_params(conv(1, 1), Some(Params::zeros(&conv(1, 1)).unwrap())).unwrap();
        layer.forward(&x).unwrap();
        let mut dy = Tensor::zeros(&[1, 3, 3]).unwrap();
        dy.set(&[0, 0, 0], 1.0).unwrap();
        let g = layer.backward(&dy).unwrap();
        let mut expected = vec![0.0; 9];
        expected[8] = 1.0;
        assert_eq!(g.dw.unwrap().data(), expected.as_slice());
        assert_eq!(g.db.unwrap().data(), &[1.0]);
    }

    #[test]
    fn conv_zero_upstream_gives_zero_gradients() {
        let mut rng = SeededRng::new(5);
        let mut layer = LayerState::new(conv(2, 3), &mut rng).unwrap();
        let x = Tensor::uniform_init(&[2, 6, 6], -1.0, 1.0, &mut rng).unwrap();
        layer.forward(&x).unwrap();
        let g = layer.backward(&Tensor::zeros(&[3, 6, 6]).unwrap()).unwrap();
        assert!(g.dw.unwrap().data().iter().all(|&v| v == 0.0));
        assert!(g.db.unwrap().data().iter().all(|&v| v == 0.0));
        assert!(g.dx.unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_before_forward_is_a_state_error() {
        let layer = LayerState::new(conv(1, 1), &mut SeededRng::new(0)).unwrap();
        let dy = Tensor::zeros(&[1, 3, 3]).unwrap();
        assert!(matches!(layer.backward(&dy), Err(Error::State(_))));
    }

    #[test]
    fn relu_examples() {
        let x = Tensor::vector(vec![-5.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
        let pos = Tensor::vector(vec![0.5, 3.0]).unwrap();
        assert_eq!(relu_forward(&pos), pos);
        let x = Tensor::vector(vec![-1.0, 3.0]).unwrap();
        let dy = Tensor::vector(vec![10.0, 10.0]).unwrap();
        assert_eq!(relu_backward(&x, &dy).unwrap().data(), &[0.0, 10.0]);
        let zero = Tensor::vector(vec![0.0]).unwrap();
        let one = Tensor::vector(vec![1.0]).unwrap();
        assert_eq!(relu_backward(&zero, &one).unwrap().data(), &[0.0]);
    }

    #[test]
    fn maxpool_examples() {
        let x = Tensor::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, idx) = maxpool_forward(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        let dx = maxpool_backward(&idx, &[1, 2, 2], &Tensor::new(&[1, 1, 1], vec![1.0]).unwrap()).unwrap();
        assert_eq!(dx.data(), &[0.0, 0.0, 0.0, 1.0]);

        let big = Tensor::zeros(&[1, 75, 75]).unwrap();
        assert_eq!(maxpool_forward(&big).unwrap().0.shape(), &[1, 37, 37]);

        let thin = Tensor::zeros(&[1, 1, 4]).unwrap();
        assert!(matches!(maxpool_forward(&thin), Err(Error::Shape(_))));
    }

    #[test]
    fn maxpool_ties_go_to_first_in_window() {
        let x = Tensor::new(&[1, 2, 2], vec![7.0, 7.0, 7.0, 7.0]).unwrap();
        let (_, idx) = maxpool_forward(&x).unwrap();
        assert_eq!(idx, vec![0]);
    }

    #[test]
    fn dense_examples() {
        let spec = LayerSpec::Dense {
            in_units: 2,
            out_units: 2,
        };
        let id = Params {
            weights: Tensor::identity(2).unwrap(),
            bias: Tensor::zeros(&[2]).unwrap(),
        };
        let x = Tensor::vector(vec![0.3, -0.7]).unwrap();
        assert_eq!(dense_forward(&id, &x).unwrap(), x);

        let p = Params {
            weights: Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            bias: Tensor::vector(vec![1.0, 1.0]).unwrap(),
        };
        p.check(&spec).unwrap();
        let ones = Tensor::vector(vec![1.0, 1.0]).unwrap();
        assert_eq!(dense_forward(&p, &ones).unwrap().data(), &[4.0, 8.0]);
        let three = Tensor::vector(vec![1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(dense_forward(&p, &three), Err(Error::Shape(_))));
    }

    #[test]
    fn softmax_examples() {
        let u = softmax_forward(&Tensor::vector(vec![2.0, 2.0, 2.0]).unwrap());
        for &p in u.data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = softmax_forward(&Tensor::vector(vec![1000.0, 0.0]).unwrap());
        assert_eq!(s.data()[0], 1.0);
        assert!(s.data()[1] >= 0.0 && s.data()[1] < 1e-300);
        assert!(s.is_finite());
    }

    #[test]
    fn softmax_has_no_standalone_backward() {
        let mut layer = LayerState::new(LayerSpec::Softmax, &mut SeededRng::new(0)).unwrap();
        let x = Tensor::vector(vec![1.0, 2.0]).unwrap();
        layer.forward(&x).unwrap();
        assert!(matches!(layer.backward(&x), Err(Error::Domain(_))));
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(parameter_count(&conv(3, 64)).unwrap(), 1_792);
        assert_eq!(parameter_count(&conv(512, 512)).unwrap(), 2_359_808);
        let fc = LayerSpec::Dense {
            in_units: 8192,
            out_units: 512,
        };
        assert_eq!(parameter_count(&fc).unwrap(), 4_194_816);
        assert!(matches!(parameter_count(&LayerSpec::ReLU), Err(Error::Domain(_))));
    }

    #[test]
    fn gradient_checks_pass_for_parameterized_layers() {
        let mut rng = SeededRng::new(9);
        let dense = LayerState::new(
            LayerSpec::Dense {
                in_units: 4,
                out_units: 5,
            },
            &mut rng,
        )
        .unwrap();
        let x = Tensor::uniform_init(&[4], -1.0, 1.0, &mut rng).unwrap();
        assert!(finite_difference_check(&dense, &x, 1e-5).unwrap() < 1e-6);

        let conv = LayerState::new(conv(2, 3), &mut rng).unwrap();
        let x = Tensor::uniform_init(&[2, 6, 6], -1.0, 1.0, &mut rng).unwrap();
        assert!(finite_difference_check(&conv, &x, 1e-5).unwrap() < 1e-6);

        let relu = LayerState::new(LayerSpec::ReLU, &mut rng).unwrap();
        let x = Tensor::vector(vec![0.5, -0.3, 0.2, -1.1, 0.9]).unwrap();
        assert!(finite_difference_check(&relu, &x, 1e-5).unwrap() < 1e-6);
    }
}
