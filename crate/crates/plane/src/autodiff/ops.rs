//! Forward operations and their backward rules.

use super::{OpRecord, Tensor};
use crate::{Error, Result};

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// NumPy-style broadcast of two shapes (right-aligned).
fn broadcast_shape(op: &str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        if da == db || da == 1 || db == 1 {
            out[i] = da.max(db);
        } else {
            return Err(Error::ShapeMismatch {
                op: op.into(),
                left: a.to_vec(),
                right: b.to_vec(),
            });
        }
    }
    Ok(out)
}

/// Expands `data` of `shape` to the broadcast `target` shape.
fn expand(data: &[f64], shape: &[usize], target: &[usize]) -> Vec<f64> {
    if shape == target {
        return data.to_vec();
    }
    let rank = target.len();
    let offset = rank - shape.len();
    let src_strides = strides(shape);
    let total: usize = target.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut index = vec![0usize; rank];
    for _ in 0..total {
        let mut src = 0;
        for d in 0..rank {
            if d >= offset && shape[d - offset] != 1 {
                src += index[d] * src_strides[d - offset];
            }
        }
        out.push(data[src]);
        for d in (0..rank).rev() {
            index[d] += 1;
            if index[d] < target[d] {
                break;
            }
            index[d] = 0;
        }
    }
    out
}

/// Sums `grad` over the axes that were broadcast from `shape` to `target`.
fn reduce_to_shape(grad: &[f64], target: &[usize], shape: &[usize]) -> Vec<f64> {
    if shape == target {
        return grad.to_vec();
    }
    let rank = target.len();
    let offset = rank - shape.len();
    let src_strides = strides(shape);
    let mut out = vec![0.0; shape.iter().product()];
    let mut index = vec![0usize; rank];
    for &g in grad {
        let mut src = 0;
        for d in 0..rank {
            if d >= offset && shape[d - offset] != 1 {
                src += index[d] * src_strides[d - offset];
            }
        }
        out[src] += g;
        for d in (0..rank).rev() {
            index[d] += 1;
            if index[d] < target[d] {
                break;
            }
            index[d] = 0;
        }
    }
    out
}

type Scalar2 = fn(f64, f64) -> f64;

fn binary(a: &Tensor, b: &Tensor, op: &str, f: Scalar2, dfa: Scalar2, dfb: Scalar2) -> Result<Tensor> {
    let out_shape = broadcast_shape(op, a.shape(), b.shape())?;
    let a_exp = expand(&a.data(), a.shape(), &out_shape);
    let b_exp = expand(&b.data(), b.shape(), &out_shape);
    let data: Vec<f64> = a_exp.iter().zip(&b_exp).map(|(&x, &y)| f(x, y)).collect();
    let (a_shape, b_shape, shape) = (a.shape().to_vec(), b.shape().to_vec(), out_shape.clone());
    let record = OpRecord {
        parents: vec![a.clone(), b.clone()],
        backward: Box::new(move |g, wanted| {
            let ga = wanted[0].then(|| {
                let full: Vec<f64> = g
                    .iter()
                    .zip(a_exp.iter().zip(&b_exp))
                    .map(|(&gi, (&x, &y))| gi * dfa(x, y))
                    .collect();
                reduce_to_shape(&full, &shape, &a_shape)
            });
            let gb = wanted[1].then(|| {
                let full: Vec<f64> = g
                    .iter()
                    .zip(a_exp.iter().zip(&b_exp))
                    .map(|(&gi, (&x, &y))| gi * dfb(x, y))
                    .collect();
                reduce_to_shape(&full, &shape, &b_shape)
            });
            vec![ga, gb]
        }),
    };
    Ok(Tensor::from_op(out_shape, data, record))
}

fn unary(a: &Tensor, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Tensor {
    let x = a.value();
    let data: Vec<f64> = x.iter().map(|&v| f(v)).collect();
    let shape = a.shape().to_vec();
    let record = OpRecord {
        parents: vec![a.clone()],
        backward: Box::new(move |g, _| {
            vec![Some(g.iter().zip(&x).map(|(&gi, &v)| gi * df(v)).collect())]
        }),
    };
    Tensor::from_op(shape, data, record)
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        binary(self, other, "add", |a, b| a + b, |_, _| 1.0, |_, _| 1.0)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        binary(self, other, "sub", |a, b| a - b, |_, _| 1.0, |_, _| -1.0)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        binary(self, other, "mul", |a, b| a * b, |_, b| b, |a, _| a)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        binary(
            self,
            other,
            "div",
            |a, b| a / b,
            |_, b| 1.0 / b,
            |a, b| -a / (b * b),
        )
    }

    pub fn neg(&self) -> Tensor {
        self.scale(-1.0)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        unary(self, |v| v * c, move |_| c)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        unary(self, |v| v + c, |_| 1.0)
    }

    pub fn exp(&self) -> Tensor {
        let y: Vec<f64> = self.data().iter().map(|&v| v.exp()).collect();
        let shape = self.shape().to_vec();
        let saved = y.clone();
        let record = OpRecord {
            parents: vec![self.clone()],
            backward: Box::new(move |g, _| {
                vec![Some(g.iter().zip(&saved).map(|(&gi, &yi)| gi * yi).collect())]
            }),
        };
        Tensor::from_op(shape, y, record)
    }

    pub fn log(&self) -> Tensor {
        unary(self, |v| v.ln(), |v| 1.0 / v)
    }

    pub fn sqrt(&self) -> Tensor {
        let y: Vec<f64> = self.data().iter().map(|&v| v.sqrt()).collect();
        let shape = self.shape().to_vec();
        let saved = y.clone();
        let record = OpRecord {
            parents: vec![self.clone()],
            backward: Box::new(move |g, _| {
                vec![Some(
                    g.iter()
                        .zip(&saved)
                        .map(|(&gi, &yi)| gi * 0.5 / yi.max(1e-300))
                        .collect(),
                )]
            }),
        };
        Tensor::from_op(shape, y, record)
    }

    pub fn pow_scalar(&self, p: f64) -> Tensor {
        unary(self, move |v| v.powf(p), move |v| p * v.powf(p - 1.0))
    }

    pub fn relu(&self) -> Tensor {
        unary(self, |v| v.max(0.0), |v| if v > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn gelu(&self) -> Tensor {
        const C: f64 = 0.7978845608028654; // sqrt(2/pi)
        const A: f64 = 0.044715;
        unary(
            self,
            |v| 0.5 * v * (1.0 + (C * (v + A * v * v * v)).tanh()),
            |v| {
                let u = C * (v + A * v * v * v);
                let t = u.tanh();
                0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * C * (1.0 + 3.0 * A * v * v)
            },
        )
    }

    /// Clamps values to [lo, hi]; gradient passes only through unclamped
    /// entries.
    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor {
        unary(
            self,
            move |v| v.clamp(lo, hi),
            move |v| if v > lo && v < hi { 1.0 } else { 0.0 },
        )
    }

    /// 2D matrix product.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (a_shape, b_shape) = (self.shape(), other.shape());
        if a_shape.len() != 2 || b_shape.len() != 2 || a_shape[1] != b_shape[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul".into(),
                left: a_shape.to_vec(),
                right: b_shape.to_vec(),
            });
        }
        let (m, k, n) = (a_shape[0], a_shape[1], b_shape[1]);
        let data = mm(&self.data(), &other.data(), m, k, n);
        let (a, b) = (self.clone(), other.clone());
        let record = OpRecord {
            parents: vec![self.clone(), other.clone()],
            backward: Box::new(move |g, wanted| {
                let ga = wanted[0].then(|| {
                    // dA = G · Bᵀ
                    let bt = transpose_raw(&b.data(), k, n);
                    mm(g, &bt, m, n, k)
                });
                let gb = wanted[1].then(|| {
                    // dB = Aᵀ · G
                    let at = transpose_raw(&a.data(), m, k);
                    mm(&at, g, k, m, n)
                });
                vec![ga, gb]
            }),
        };
        Ok(Tensor::from_op(vec![m, n], data, record))
    }

    /// 2D transpose.
    pub fn transpose2(&self) -> Result<Tensor> {
        let shape = self.shape();
        if shape.len() != 2 {
            return Err(Error::InvalidArgument(format!(
                "transpose2 requires a 2D tensor, got {shape:?}"
            )));
        }
        let (m, n) = (shape[0], shape[1]);
        let data = transpose_raw(&self.data(), m, n);
        let record = OpRecord {
            parents: vec![self.clone()],
            backward: Box::new(move |g, _| vec![Some(transpose_raw(g, n, m))]),
        };
        Ok(Tensor::from_op(vec![n, m], data, record))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape".into(),
                left: self.shape().to_vec(),
                right: shape.to_vec(),
            });
        }
        let record = OpRecord {
            parents: vec![self.clone()],
            backward: Box::new(|g, _| vec![Some(g.to_vec())]),
        };
        Ok(Tensor::from_op(shape.to_vec(), self.value(), record))
    }

    /// Contiguous slice [start, end) along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Tensor> {
        let shape = self.shape();
        if axis >= shape.len() || start >= end || end > shape[axis] {
            return Err(Error::InvalidArgument(format!(
                "slice [{start}, {end}) on axis {axis} of shape {shape:?}"
            )));
        }
        let outer: usize = shape[..axis].iter().product();
        let axis_len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let take = end - start;
        let src = self.data();
        let mut data = Vec::with_capacity(outer * take * inner);
        for o in 0..outer {
            let base = o * axis_len * inner;
            data.extend_from_slice(&src[base + start * inner..base + end * inner]);
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] = take;
        let total = outer * axis_len * inner;
        let record = OpRecord {
            parents: vec![self.clone()],
            backward: Box::new(move |g, _| {
                let mut full = vec![0.0; total];
                for o in 0..outer {
                    let dst = o * axis_len * inner + start * inner;
                    let src = o * take * inner;
                    full[dst..dst + take * inner].copy_from_slice(&g[src..src + take * inner]);
                }
                vec![Some(full)]
            }),
        };
        Ok(Tensor::from_op(out_shape, data, record))
    }

    /// Softmax along `axis`, max-subtracted for stability.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::InvalidArgument(format!(
                "softmax axis {axis} out of range for {shape:?}"
            )));
        }
        let outer: usize = shape[..axis].iter().product();
        let n = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.value();
        let mut y = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * n * inner + j * inner + i;
                let mut max = f64::NEG_INFINITY;
                for j in 0..n {
                    max = max.max(src[at(j)]);
                }
                let mut sum = 0.0;
                for j in 0..n {
                    let e = (src[at(j)] - max).exp();
                    y[at(j)] = e;
                    sum += e;
                }
                for j in 0..n {
                    y[at(j)] /= sum;
                }
            }
        }
        let saved = y.clone();
        let record = OpRecord {
            parents: vec![self.clone()],
            backward: Box::new(move |g, _| {
                let mut out = vec![0.0; g.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| o * n * inner + j * inner + i;
                        let mut dot = 0.0;
                        for j in 0..n {
                            dot += g[at(j)] * saved[at(j)];
                        }
                        for j in 0..n {
                            out[at(j)] = saved[at(j)] * (g[at(j)] - dot);
                        }
                    }
                }
                vec![Some(out)]
            }),
        };
        Ok(Tensor::from_op(shape, y, record))
    }

    /// Sum along `axis`, keeping it as a size-1 dimension.
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::InvalidArgument(format!(
                "sum axis {axis} out of range for {shape:?}"
            )));
        }
        let outer: usize = shape[..axis].iter().product();
        let n = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.data();
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..n {
                for i in 0..inner {
                    data[o * inner + i] += src[o * n * inner + j * inner + i];
                }
            }
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = 1;
        let record = OpRecord {
            parents: vec![self.clone()],
            backward: Box::new(move |g, _| {
                let mut full = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    for j in 0..n {
                        for i in 0..inner {
                            full[o * n * inner + j * inner + i] = g[o * inner + i];
                        }
                    }
                }
                vec![Some(full)]
            }),
        };
        Ok(Tensor::from_op(out_shape, data, record))
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Tensor> {
        let n = self.shape()[axis] as f64;
        Ok(self.sum_axis(axis)?.scale(1.0 / n))
    }

    pub fn sum_all(&self) -> Tensor {
        let total: f64 = self.data().iter().sum();
        let count = self.numel();
        let record = OpRecord {
            parents: vec![self.clone()],
            backward: Box::new(move |g, _| vec![Some(vec![g[0]; count])]),
        };
        Tensor::from_op(vec![1], vec![total], record)
    }

    pub fn mean_all(&self) -> Tensor {
        self.sum_all().scale(1.0 / self.numel() as f64)
    }

    /// Maximum over all elements; the gradient routes to the first argmax.
    pub fn max_all(&self) -> Tensor {
        let data = self.data();
        let (argmax, max) = data
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
        let count = data.len();
        drop(data);
        let record = OpRecord {
            parents: vec![self.clone()],
            backward: Box::new(move |g, _| {
                let mut out = vec![0.0; count];
                out[argmax] = g[0];
                vec![Some(out)]
            }),
        };
        Tensor::from_op(vec![1], vec![max], record)
    }
}

pub(crate) fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for j in 0..n {
                out_row[j] += av * b_row[j];
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

/// Concatenates along `axis`.
pub fn concat(tensors: &[Tensor], axis: usize) -> Result<Tensor> {
    if tensors.is_empty() {
        return Err(Error::InvalidArgument("concat of zero tensors".into()));
    }
    let rank = tensors[0].shape().len();
    if axis >= rank {
        return Err(Error::InvalidArgument(format!(
            "concat axis {axis} out of range"
        )));
    }
    for t in tensors {
        if t.shape().len() != rank {
            return Err(Error::ShapeMismatch {
                op: "concat".into(),
                left: tensors[0].shape().to_vec(),
                right: t.shape().to_vec(),
            });
        }
        for d in 0..rank {
            if d != axis && t.shape()[d] != tensors[0].shape()[d] {
                return Err(Error::ShapeMismatch {
                    op: "concat".into(),
                    left: tensors[0].shape().to_vec(),
                    right: t.shape().to_vec(),
                });
            }
        }
    }
    let outer: usize = tensors[0].shape()[..axis].iter().product();
    let inner: usize = tensors[0].shape()[axis + 1..].iter().product();
    let axis_lens: Vec<usize> = tensors.iter().map(|t| t.shape()[axis]).collect();
    let total_axis: usize = axis_lens.iter().sum();
    let mut data = Vec::with_capacity(outer * total_axis * inner);
    for o in 0..outer {
        for (t, &len) in tensors.iter().zip(&axis_lens) {
            let src = t.data();
            data.extend_from_slice(&src[o * len * inner..(o + 1) * len * inner]);
        }
    }
    let mut out_shape = tensors[0].shape().to_vec();
    out_shape[axis] = total_axis;
    let lens = axis_lens.clone();
    let record = OpRecord {
        parents: tensors.to_vec(),
        backward: Box::new(move |g, wanted| {
            let mut grads: Vec<Option<Vec<f64>>> = lens
                .iter()
                .zip(wanted)
                .map(|(&len, &w)| w.then(|| vec![0.0; outer * len * inner]))
                .collect();
            for o in 0..outer {
                let mut cursor = o * total_axis * inner;
                for (idx, &len) in lens.iter().enumerate() {
                    let span = len * inner;
                    if let Some(buf) = grads[idx].as_mut() {
                        buf[o * span..(o + 1) * span].copy_from_slice(&g[cursor..cursor + span]);
                    }
                    cursor += span;
                }
            }
            grads
        }),
    };
    Ok(Tensor::from_op(out_shape, data, record))
}

/// Layer normalization over the last axis with learnable gain and bias.
pub fn layernorm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    let axis = x.shape().len() - 1;
    let mean = x.mean_axis(axis)?;
    let centered = x.sub(&mean)?;
    let var = centered.mul(&centered)?.mean_axis(axis)?;
    let xhat = centered.div(&var.add_scalar(eps).sqrt())?;
    xhat.mul(gamma)?.add(beta)
}

/// Cosine similarity along the last axis (shapes broadcast): returns the
/// input shape with a trailing size-1 axis. The denominator carries ε=1e-8.
pub fn cosine_similarity(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let axis_a = a.shape().len() - 1;
    let axis_b = b.shape().len() - 1;
    let dot = a.mul(b)?;
    let dot = dot.sum_axis(dot.shape().len() - 1)?;
    let na = a.mul(a)?.sum_axis(axis_a)?.sqrt();
    let nb = b.mul(b)?.sum_axis(axis_b)?.sqrt();
    let denom = na.mul(&nb)?.add_scalar(1e-8);
    dot.div(&denom)
}
