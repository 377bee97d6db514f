//! Forward-only layers. Weight matrices are `[in, out]` so `y = x W + b`.

use crate::error::{Error, Result};

use super::tensor::Tensor;

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

/// `c = a (m x k) * b (k x n)`, all row-major.
pub(crate) fn gemm(a: &[f32], b: &[f32], c: &mut [f32], m: usize, k: usize, n: usize) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the assertion above keeps every strided access inside the slices.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `y = x W + b` over the last axis of `x`.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    if w.rank() != 2 || x.last_dim() != w.shape()[0] {
        return Err(shape_err("linear", x, w));
    }
    let (n, m) = (w.shape()[0], w.shape()[1]);
    if b.shape() != [m] {
        return Err(shape_err("linear", w, b));
    }
    let rows = x.rows();
    let mut out = vec![0.0f32; rows * m];
    gemm(x.data(), w.data(), &mut out, rows, n, m);
    for row in out.chunks_mut(m) {
        row.iter_mut().zip(b.data()).for_each(|(y, bias)| *y += bias);
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().expect("rank >= 1") = m;
    Tensor::new(shape, out)?.finite("linear")
}

pub fn elu_scalar(x: f32) -> f32 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn elu(x: Tensor) -> Tensor {
    x.map(elu_scalar)
}

pub fn relu(x: Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Numerically stable softmax along `axis`.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    let shape = x.shape();
    if axis >= shape.len() {
        return Err(Error::Shape {
            op: "softmax",
            left: shape.to_vec(),
            right: vec![axis],
        });
    }
    let dim = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = x.data().to_vec();
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| (o * dim + j) * inner + i;
            let max = (0..dim).map(|j| out[idx(j)]).fold(f32::NEG_INFINITY, f32::max);
            let mut sum = 0.0f32;
            for j in 0..dim {
                let e = (out[idx(j)] - max).exp();
                out[idx(j)] = e;
                sum += e;
            }
            for j in 0..dim {
                out[idx(j)] /= sum;
            }
        }
    }
    Tensor::new(shape.to_vec(), out)?.finite("softmax")
}

/// Zero-padded cross-correlation of `x: [c, h, w]` with `weight: [o, c, kh, kw]`.
pub fn conv2d(x: &Tensor, weight: &Tensor, bias: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    if x.rank() != 3 || weight.rank() != 4 || weight.shape()[1] != x.shape()[0] || stride == 0 {
        return Err(shape_err("conv2d", x, weight));
    }
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (o, kh, kw) = (weight.shape()[0], weight.shape()[2], weight.shape()[3]);
    if bias.shape() != [o] {
        return Err(shape_err("conv2d", weight, bias));
    }
    if h + 2 * padding < kh || w + 2 * padding < kw {
        return Err(shape_err("conv2d", x, weight));
    }
    let oh = (h + 2 * padding - kh) / stride + 1;
    let ow = (w + 2 * padding - kw) / stride + 1;
    let k = c * kh * kw;
    let n = oh * ow;
    let mut cols = vec![0.0f32; k * n];
    let xd = x.data();
    for ci in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = &mut cols[((ci * kh + ky) * kw + kx) * n..][..n];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &xd[(ci * h + iy as usize) * w..][..w];
                    let dst = &mut row[oy * ow..][..ow];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        if ix >= 0 && ix < w as isize {
                            *d = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    let mut out = vec![0.0f32; o * n];
    gemm(weight.data(), &cols, &mut out, o, k, n);
    for (row, b) in out.chunks_mut(n).zip(bias.data()) {
        row.iter_mut().for_each(|v| *v += b);
    }
    Tensor::new(vec![o, oh, ow], out)?.finite("conv2d")
}

/// Non-overlapping max pooling of `[c, h, w]`; trailing rows and columns are dropped.
pub fn max_pool2d(x: &Tensor, size: usize) -> Result<Tensor> {
    if x.rank() != 3 || size == 0 || x.shape()[1] < size || x.shape()[2] < size {
        return Err(Error::Shape {
            op: "max_pool2d",
            left: x.shape().to_vec(),
            right: vec![size, size],
        });
    }
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = (h / size, w / size);
    let xd = x.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f32::NEG_INFINITY;
                for dy in 0..size {
                    let base = (ci * h + oy * size + dy) * w + ox * size;
                    for v in &xd[base..base + size] {
                        m = m.max(*v);
                    }
                }
                out.push(m);
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

/// `softmax(scale * Q K^T) V` for `q: [nq, d]`, `k: [n, d]`, `v: [n, dv]`.
/// Returns the output `[nq, dv]` and the weights `[nq, n]`.
pub fn scaled_attention(q: &Tensor, k: &Tensor, v: &Tensor, scale: f32) -> Result<(Tensor, Tensor)> {
    if q.rank() != 2 || k.rank() != 2 || q.shape()[1] != k.shape()[1] {
        return Err(shape_err("attention", q, k));
    }
    if v.rank() != 2 || v.shape()[0] != k.shape()[0] {
        return Err(shape_err("attention", k, v));
    }
    let (nq, d) = (q.shape()[0], q.shape()[1]);
    let (n, dv) = (k.shape()[0], v.shape()[1]);
    let mut logits = vec![0.0f32; nq * n];
    for i in 0..nq {
        let qi = q.row(i);
        for j in 0..n {
            let kj = k.row(j);
            logits[i * n + j] = scale * (0..d).map(|t| qi[t] * kj[t]).sum::<f32>();
        }
    }
    let alpha = softmax(&Tensor::new(vec![nq, n], logits)?, 1)?;
    let mut out = vec![0.0f32; nq * dv];
    gemm(alpha.data(), v.data(), &mut out, nq, n, dv);
    Ok((Tensor::new(vec![nq, dv], out)?.finite("attention")?, alpha))
}

/// Unscaled dot-product attention: `softmax(Q K^T) V`.
pub fn attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<(Tensor, Tensor)> {
    scaled_attention(q, k, v, 1.0)
}

pub const LAYER_NORM_EPS: f32 = 1e-5;

/// Normalizes the last axis, then applies `gamma * x + beta`.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<Tensor> {
    let d = x.last_dim();
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(shape_err("layer_norm", x, gamma));
    }
    let mut out = x.data().to_vec();
    for row in out.chunks_mut(d) {
        let mean = row.iter().sum::<f32>() / d as f32;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / d as f32;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for ((v, g), b) in row.iter_mut().zip(gamma.data()).zip(beta.data()) {
            *v = (*v - mean) * inv * g + b;
        }
    }
    Tensor::new(x.shape().to_vec(), out)?.finite("layer_norm")
}

/// `pe[p, 2i] = sin(p / 10000^(2i/d))`, `pe[p, 2i+1] = cos(...)`.
pub fn sinusoidal_encoding(len: usize, d: usize) -> Result<Tensor> {
    Tensor::from_fn(&[len, d], |idx| {
        let (p, j) = ((idx / d) as f32, idx % d);
        let freq = 10000f32.powf((2 * (j / 2)) as f32 / d as f32);
        if j % 2 == 0 {
            (p / freq).sin()
        } else {
            (p / freq).cos()
        }
    })
}
