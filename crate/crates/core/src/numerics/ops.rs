use rand::Rng;

use crate::error::{Error, Result};

use super::tape::{AttnMask, Op, Tape, Var};
use super::tensor::numel;
use super::{ParamId, Real, Tensor};

/// Running statistics consulted (eval) or updated (training) by batch norm.
pub struct RunningStats<'a, T> {
    pub mean_id: ParamId,
    pub var_id: ParamId,
    pub mean: &'a Tensor<T>,
    pub var: &'a Tensor<T>,
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const LN_EPS: f64 = 1e-5;

fn same_shape(a: &[usize], b: &[usize], op: &str) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{op}: shapes {a:?} and {b:?} differ")));
    }
    Ok(())
}

fn rank(shape: &[usize], want: usize, op: &str) -> Result<()> {
    if shape.len() != want {
        return Err(Error::Shape(format!(
            "{op}: expected rank {want}, got shape {shape:?}"
        )));
    }
    Ok(())
}

/// Splits a shape around `axis` into (outer, len, inner) extents.
fn split_axis(shape: &[usize], axis: usize, op: &str) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::Shape(format!(
            "{op}: axis {axis} out of range for shape {shape:?}"
        )));
    }
    Ok((
        numel(&shape[..axis]),
        shape[axis],
        numel(&shape[axis + 1..]),
    ))
}

/// `c[m×n] += a[m×k] · b[k×n]`, accumulating each output over `k` in order.
pub(crate) fn gemm_acc<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

impl<T: Real> Tape<T> {
    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        same_shape(self.shape(a), self.shape(b), name)?;
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let data = av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect();
        Ok(Tensor::from_parts(self.shape(a).to_vec(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let c = T::of(c);
        let out = self.value(a).map(|x| x * c);
        self.push(out, Op::Scale(a, c), &[a])
    }

    /// Adds a bias vector along the last axis.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let bs = self.shape(b);
        if bs.len() != 1 || xs.last() != Some(&bs[0]) {
            return Err(Error::Shape(format!(
                "add_bias: bias {bs:?} does not match last axis of {xs:?}"
            )));
        }
        let n = bs[0];
        let bias = self.value(b).data();
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(n) {
            for (v, &bv) in row.iter_mut().zip(bias) {
                *v += bv;
            }
        }
        Ok(self.push(Tensor::from_parts(xs, data), Op::AddBias(x, b), &[x, b]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (as_, bs) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        rank(&as_, 2, "matmul")?;
        rank(&bs, 2, "matmul")?;
        if as_[1] != bs[0] {
            return Err(Error::Shape(format!(
                "matmul: inner extents differ ({as_:?} · {bs:?})"
            )));
        }
        let (m, k, n) = (as_[0], as_[1], bs[1]);
        let mut out = vec![T::zero(); m * n];
        gemm_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), &[a, b]))
    }

    /// `x · w + b` with `w` stored as `[in × out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let h = self.matmul(x, w)?;
        self.add_bias(h, b)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(out, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.push(out, Op::Sigmoid(x), &[x])
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        if let Some(v) = self.value(x).data().iter().find(|&&v| !(v > T::zero())) {
            return Err(Error::Domain(format!("log of non-positive value {v}")));
        }
        let out = self.value(x).map(|v| v.ln());
        Ok(self.push(out, Op::Log(x), &[x]))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (outer, len, inner) = split_axis(&shape, axis, "softmax")?;
        let src = self.value(x).data();
        let mut out = vec![T::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| o * len * inner + k * inner + i;
                let max = (0..len).map(|k| src[at(k)]).fold(T::neg_infinity(), T::max);
                let mut sum = T::zero();
                for k in 0..len {
                    let e = (src[at(k)] - max).exp();
                    out[at(k)] = e;
                    sum += e;
                }
                for k in 0..len {
                    out[at(k)] /= sum;
                }
            }
        }
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::Softmax {
                x,
                outer,
                len,
                inner,
            },
            &[x],
        ))
    }

    /// Normalizes over the last axis, then applies `gamma`/`beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let n = *shape.last().ok_or_else(|| Error::Shape("layer_norm on scalar".into()))?;
        if self.shape(gamma) != [n] || self.shape(beta) != [n] {
            return Err(Error::Shape(format!(
                "layer_norm: affine params must have shape [{n}]"
            )));
        }
        let src = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let rows = src.len() / n;
        let nf = T::of(n as f64);
        let eps = T::of(LN_EPS);
        let mut xhat = vec![T::zero(); src.len()];
        let mut inv_std = vec![T::zero(); rows];
        let mut out = vec![T::zero(); src.len()];
        for r in 0..rows {
            let row = &src[r * n..(r + 1) * n];
            let mean = row.iter().copied().sum::<T>() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
            let is = T::one() / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..n {
                let h = (row[j] - mean) * is;
                xhat[r * n + j] = h;
                out[r * n + j] = h * g[j] + b[j];
            }
        }
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        ))
    }

    /// Per-channel normalization of `[N × C × H × W]`. In training mode the
    /// batch statistics are used and the running statistics are updated
    /// (momentum 0.1) once the caller applies buffer updates; in eval mode
    /// the running statistics are used.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: Option<RunningStats<'_, T>>,
    ) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        rank(&shape, 4, "batch_norm")?;
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::Shape(format!(
                "batch_norm: affine params must have shape [{c}]"
            )));
        }
        let plane = h * w;
        let count = n * plane;
        let eps = T::of(BN_EPS);
        let src = self.value(x).data();
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        let batch_stats = self.training();
        if batch_stats {
            let cf = T::of(count as f64);
            for ch in 0..c {
                let mut s = T::zero();
                for b in 0..n {
                    let off = (b * c + ch) * plane;
                    s += src[off..off + plane].iter().copied().sum::<T>();
                }
                let m = s / cf;
                let mut v = T::zero();
                for b in 0..n {
                    let off = (b * c + ch) * plane;
                    v += src[off..off + plane].iter().map(|&x| (x - m) * (x - m)).sum::<T>();
                }
                mean[ch] = m;
                var[ch] = v / cf;
            }
        } else {
            let stats = running.as_ref().ok_or_else(|| {
                Error::Contract("batch_norm in eval mode needs running statistics".into())
            })?;
            mean.copy_from_slice(stats.mean.data());
            var.copy_from_slice(stats.var.data());
        }
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut xhat = vec![T::zero(); src.len()];
        let mut out = vec![T::zero(); src.len()];
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * plane;
                for i in off..off + plane {
                    let hv = (src[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = hv;
                    out[i] = hv * g[ch] + bt[ch];
                }
            }
        }
        if batch_stats {
            if let Some(stats) = running {
                let mom = T::of(BN_MOMENTUM);
                let unbias = if count > 1 {
                    T::of(count as f64 / (count - 1) as f64)
                } else {
                    T::one()
                };
                let new_mean = Tensor::from_fn(&[c], |ch| {
                    (T::one() - mom) * stats.mean.data()[ch] + mom * mean[ch]
                });
                let new_var = Tensor::from_fn(&[c], |ch| {
                    (T::one() - mom) * stats.var.data()[ch] + mom * var[ch] * unbias
                });
                self.schedule_buffer_update(stats.mean_id, new_mean);
                self.schedule_buffer_update(stats.var_id, new_var);
            }
        }
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
            &[x, gamma, beta],
        ))
    }

    /// 2×2 average pooling with stride 2 over the last two axes of a rank-4
    /// tensor; odd trailing rows/columns are dropped.
    pub fn avg_pool_2x2(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        rank(&shape, 4, "avg_pool_2x2")?;
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        if h < 2 || w < 2 {
            return Err(Error::Shape(format!(
                "avg_pool_2x2: spatial extent too small in {shape:?}"
            )));
        }
        let (oh, ow) = (h / 2, w / 2);
        let src = self.value(x).data();
        let quarter = T::of(0.25);
        let mut out = vec![T::zero(); n * c * oh * ow];
        for p in 0..n * c {
            let s = &src[p * h * w..(p + 1) * h * w];
            let o = &mut out[p * oh * ow..(p + 1) * oh * ow];
            for y in 0..oh {
                for xx in 0..ow {
                    let (r0, r1) = (2 * y * w, (2 * y + 1) * w);
                    o[y * ow + xx] =
                        (s[r0 + 2 * xx] + s[r0 + 2 * xx + 1] + s[r1 + 2 * xx] + s[r1 + 2 * xx + 1])
                            * quarter;
                }
            }
        }
        Ok(self.push(
            Tensor::from_parts(vec![n, c, oh, ow], out),
            Op::AvgPool(x),
            &[x],
        ))
    }

    /// Mean over `axis`, removing it.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (outer, len, inner) = split_axis(&shape, axis, "global_mean")?;
        let src = self.value(x).data();
        let lf = T::of(len as f64);
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for k in 0..len {
                let base = o * len * inner + k * inner;
                for i in 0..inner {
                    out[o * inner + i] += src[base + i];
                }
            }
        }
        out.iter_mut().for_each(|v| *v /= lf);
        let mut oshape = shape.clone();
        oshape.remove(axis);
        Ok(self.push(
            Tensor::from_parts(oshape, out),
            Op::Mean {
                x,
                outer,
                len,
                inner,
            },
            &[x],
        ))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        self.reduce_all(x, T::one())
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.value(x).numel();
        self.reduce_all(x, T::one() / T::of(n as f64))
    }

    fn reduce_all(&mut self, x: Var, factor: T) -> Var {
        let s = self.value(x).data().iter().copied().sum::<T>() * factor;
        self.push(Tensor::scalar(s), Op::Sum { x, factor }, &[x])
    }

    /// Gathers rows of `table[V × E]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let ts = self.shape(table).to_vec();
        rank(&ts, 2, "embedding")?;
        let (v, e) = (ts[0], ts[1]);
        if ids.is_empty() {
            return Err(Error::Shape("embedding: empty id list".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::Shape(format!("embedding: id {bad} out of range {v}")));
        }
        let t = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * e);
        for &i in ids {
            out.extend_from_slice(&t[i * e..(i + 1) * e]);
        }
        Ok(self.push(
            Tensor::from_parts(vec![ids.len(), e], out),
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        ))
    }

    /// Inverted dropout. Identity in eval mode or at rate 0.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Domain(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !self.training() || rate == 0.0 {
            return Ok(x);
        }
        let keep = T::of(1.0 / (1.0 - rate));
        let n = self.value(x).numel();
        let mask: Vec<T> = (0..n)
            .map(|_| {
                if rng.random::<f64>() < rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        self.dropout_with_mask(x, mask)
    }

    /// Dropout with an explicit multiplicative mask.
    pub fn dropout_with_mask(&mut self, x: Var, mask: Vec<T>) -> Result<Var> {
        if mask.len() != self.value(x).numel() {
            return Err(Error::Shape("dropout: mask length mismatch".into()));
        }
        let src = self.value(x);
        let data = src.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let out = Tensor::from_parts(src.shape().to_vec(), data);
        Ok(self.push(out, Op::Dropout { x, mask }, &[x]))
    }

    /// 3×3 convolution, stride 1, zero "same" padding.
    /// `x: [N × Cin × H × W]`, `kernels: [Cout × Cin × 3 × 3]`.
    pub fn conv2d(&mut self, x: Var, kernels: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ks = self.shape(kernels).to_vec();
        rank(&xs, 4, "conv2d")?;
        rank(&ks, 4, "conv2d")?;
        if ks[2] != 3 || ks[3] != 3 {
            return Err(Error::Shape(format!("conv2d: kernel must be 3×3, got {ks:?}")));
        }
        if ks[1] != xs[1] {
            return Err(Error::Shape(format!(
                "conv2d: input has {} channels, kernels expect {}",
                xs[1], ks[1]
            )));
        }
        let (n, ci, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let co = ks[0];
        let src = self.value(x).data();
        let k = self.value(kernels).data();
        let mut out = vec![T::zero(); n * co * h * w];
        for b in 0..n {
            for o in 0..co {
                let dst = &mut out[(b * co + o) * h * w..(b * co + o + 1) * h * w];
                for c in 0..ci {
                    let plane = &src[(b * ci + c) * h * w..(b * ci + c + 1) * h * w];
                    for dy in 0..3 {
                        for dx in 0..3 {
                            let kv = k[((o * ci + c) * 3 + dy) * 3 + dx];
                            conv_tap(plane, dst, h, w, dy, dx, kv);
                        }
                    }
                }
            }
        }
        Ok(self.push(
            Tensor::from_parts(vec![n, co, h, w], out),
            Op::Conv2d(x, kernels),
            &[x, kernels],
        ))
    }

    /// Multi-head scaled dot-product attention. `q: [m × d]`, `k: [n × d]`,
    /// `v: [n × dv]`; each head uses a contiguous `d/heads` slice and scores
    /// are scaled by `1/√(d/heads)`. Masked positions are skipped entirely.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        mask: &AttnMask,
        heads: usize,
    ) -> Result<Var> {
        let (qs, ks, vs) = (
            self.shape(q).to_vec(),
            self.shape(k).to_vec(),
            self.shape(v).to_vec(),
        );
        rank(&qs, 2, "attention")?;
        rank(&ks, 2, "attention")?;
        rank(&vs, 2, "attention")?;
        let (m, d) = (qs[0], qs[1]);
        let (n, dv) = (ks[0], vs[1]);
        if ks[1] != d || vs[0] != n {
            return Err(Error::Shape(format!(
                "attention: incompatible q {qs:?}, k {ks:?}, v {vs:?}"
            )));
        }
        if heads == 0 || d % heads != 0 || dv % heads != 0 {
            return Err(Error::Shape(format!(
                "attention: widths {d}/{dv} not divisible by {heads} heads"
            )));
        }
        if mask.rows() != m || mask.cols() != n {
            return Err(Error::Shape(format!(
                "attention: mask is {}×{}, scores are {m}×{n}",
                mask.rows(),
                mask.cols()
            )));
        }
        if let Some(i) = (0..m).find(|&i| !(0..n).any(|j| mask.allowed(i, j))) {
            return Err(Error::Domain(format!("attention: row {i} is fully masked")));
        }
        let (dh, dvh) = (d / heads, dv / heads);
        let scale = T::one() / T::of(dh as f64).sqrt();
        let qd = self.value(q).data();
        let kd = self.value(k).data();
        let vd = self.value(v).data();
        let mut probs = vec![T::zero(); heads * m * n];
        let mut out = vec![T::zero(); m * dv];
        for hd in 0..heads {
            for i in 0..m {
                let qi = &qd[i * d + hd * dh..i * d + (hd + 1) * dh];
                let p = &mut probs[(hd * m + i) * n..(hd * m + i + 1) * n];
                let mut max = T::neg_infinity();
                for j in 0..n {
                    if mask.allowed(i, j) {
                        let kj = &kd[j * d + hd * dh..j * d + (hd + 1) * dh];
                        let s = dot(qi, kj) * scale;
                        p[j] = s;
                        max = max.max(s);
                    }
                }
                let mut sum = T::zero();
                for j in 0..n {
                    if mask.allowed(i, j) {
                        let e = (p[j] - max).exp();
                        p[j] = e;
                        sum += e;
                    }
                }
                let o = &mut out[i * dv + hd * dvh..i * dv + (hd + 1) * dvh];
                for j in 0..n {
                    if mask.allowed(i, j) {
                        p[j] /= sum;
                        let vj = &vd[j * dv + hd * dvh..j * dv + (hd + 1) * dvh];
                        for (ov, &vv) in o.iter_mut().zip(vj) {
                            *ov += p[j] * vv;
                        }
                    }
                }
            }
        }
        Ok(self.push(
            Tensor::from_parts(vec![m, dv], out),
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            },
            &[q, k, v],
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x), &[x]))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(Error::Shape(format!("transpose needs rank ≥ 2, got {shape:?}")));
        }
        let r = shape.len();
        let (a, b) = (shape[r - 2], shape[r - 1]);
        let src = self.value(x).data();
        let mut out = vec![T::zero(); src.len()];
        for (blk, s) in src.chunks(a * b).enumerate() {
            let o = &mut out[blk * a * b..(blk + 1) * a * b];
            for i in 0..a {
                for j in 0..b {
                    o[j * a + i] = s[i * b + j];
                }
            }
        }
        let mut oshape = shape;
        oshape.swap(r - 2, r - 1);
        Ok(self.push(Tensor::from_parts(oshape, out), Op::Transpose(x), &[x]))
    }

    /// Slice `start..start+len` of the leading axis.
    pub fn narrow(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.is_empty() || len == 0 || start + len > shape[0] {
            return Err(Error::Shape(format!(
                "narrow: range {start}..{} invalid for shape {shape:?}",
                start + len
            )));
        }
        let inner = numel(&shape[1..]);
        let data = self.value(x).data()[start * inner..(start + len) * inner].to_vec();
        let mut oshape = shape;
        oshape[0] = len;
        Ok(self.push(
            Tensor::from_parts(oshape, data),
            Op::Narrow {
                x,
                offset: start * inner,
            },
            &[x],
        ))
    }

    /// Mean over active rows of `−log softmax(logits)[target]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], active: &[bool]) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        rank(&shape, 2, "cross_entropy")?;
        let (m, v) = (shape[0], shape[1]);
        if targets.len() != m || active.len() != m {
            return Err(Error::Shape(format!(
                "cross_entropy: {m} rows but {} targets / {} mask entries",
                targets.len(),
                active.len()
            )));
        }
        let count = active.iter().filter(|&&a| a).count();
        if count == 0 {
            return Err(Error::Contract("cross_entropy: every position is padding".into()));
        }
        let src = self.value(logits).data();
        let mut probs = vec![T::zero(); m * v];
        let mut total = T::zero();
        for i in 0..m {
            if !active[i] {
                continue;
            }
            let t = targets[i];
            if t >= v {
                return Err(Error::Shape(format!("cross_entropy: target {t} ≥ vocab {v}")));
            }
            let row = &src[i * v..(i + 1) * v];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let sum: T = row.iter().map(|&x| (x - max).exp()).sum();
            let lse = max + sum.ln();
            total += lse - row[t];
            for j in 0..v {
                probs[i * v + j] = (row[j] - lse).exp();
            }
        }
        let loss = total / T::of(count as f64);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                active: active.to_vec(),
                probs,
                count,
            },
            &[logits],
        ))
    }

    /// Mean binary log-loss of `sigmoid(logits)` against `targets ∈ {0,1}`,
    /// computed from the logits for numerical stability.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[T]) -> Result<Var> {
        let src = self.value(logits).data();
        if targets.len() != src.len() {
            return Err(Error::Shape(format!(
                "bce: {} logits but {} targets",
                src.len(),
                targets.len()
            )));
        }
        let mut total = T::zero();
        let mut probs = Vec::with_capacity(src.len());
        for (&x, &y) in src.iter().zip(targets) {
            total += x.max(T::zero()) - x * y + (-x.abs()).exp().ln_1p();
            probs.push(sigmoid(x));
        }
        let loss = total / T::of(src.len() as f64);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Bce {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        ))
    }
}

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Output-row/column ranges for which tap `(dy, dx)` reads inside the input.
#[inline]
pub(crate) fn tap_range(extent: usize, d: usize) -> (usize, usize) {
    // input index = out + d - 1
    let lo = if d == 0 { 1 } else { 0 };
    let hi = if d == 2 { extent - 1 } else { extent };
    (lo, hi.max(lo))
}

#[inline]
fn conv_tap<T: Real>(plane: &[T], dst: &mut [T], h: usize, w: usize, dy: usize, dx: usize, kv: T) {
    if kv == T::zero() {
        return;
    }
    let (y0, y1) = tap_range(h, dy);
    let (x0, x1) = tap_range(w, dx);
    for y in y0..y1 {
        let iy = y + dy - 1;
        let srow = &plane[iy * w + x0 + dx - 1..iy * w + x1 + dx - 1];
        let drow = &mut dst[y * w + x0..y * w + x1];
        for (d, &s) in drow.iter_mut().zip(srow) {
            *d += kv * s;
        }
    }
}
