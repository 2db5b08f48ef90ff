use crate::error::Result;

use super::ops::{dot, tap_range};
use super::tape::{Node, Op, Tape, Var};
use super::{ParamStore, Real};

type Grads<T> = Vec<Option<Vec<T>>>;

/// Adjoint buffer of `v`, or `None` when nothing upstream of `v` needs a gradient.
fn slot<'g, T: Real>(grads: &'g mut Grads<T>, nodes: &[Node<T>], v: Var) -> Option<&'g mut Vec<T>> {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); node.value.numel()]))
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn run<T: Real>(tape: &Tape<T>, loss: Var, store: &mut ParamStore<T>) -> Result<()> {
    let nodes = &tape.nodes;
    let mut grads: Grads<T> = (0..nodes.len()).map(|_| None).collect();
    grads[loss.0] = Some(vec![T::one()]);

    for idx in (0..=loss.0).rev() {
        let Some(mut g) = grads[idx].take() else {
            continue;
        };
        let node = &nodes[idx];
        if tape.fault == Some(node.op.kind()) {
            let corrupt = T::of(1.5);
            g.iter_mut().for_each(|v| *v *= corrupt);
        }
        let val = |v: Var| nodes[v.0].value.data();
        let shape = |v: Var| nodes[v.0].value.shape();

        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => {
                let p = store.get_mut(*id);
                add_into(p.grad.data_mut(), &g);
            }
            Op::Add(a, b) => {
                if let Some(ga) = slot(&mut grads, nodes, *a) {
                    add_into(ga, &g);
                }
                if let Some(gb) = slot(&mut grads, nodes, *b) {
                    add_into(gb, &g);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = slot(&mut grads, nodes, *a) {
                    add_into(ga, &g);
                }
                if let Some(gb) = slot(&mut grads, nodes, *b) {
                    for (d, &s) in gb.iter_mut().zip(&g) {
                        *d -= s;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                if let Some(ga) = slot(&mut grads, nodes, *a) {
                    for i in 0..g.len() {
                        ga[i] += g[i] * bv[i];
                    }
                }
                if let Some(gb) = slot(&mut grads, nodes, *b) {
                    for i in 0..g.len() {
                        gb[i] += g[i] * av[i];
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(ga) = slot(&mut grads, nodes, *a) {
                    for (d, &s) in ga.iter_mut().zip(&g) {
                        *d += s * *c;
                    }
                }
            }
            Op::AddBias(x, b) => {
                if let Some(gx) = slot(&mut grads, nodes, *x) {
                    add_into(gx, &g);
                }
                let n = shape(*b)[0];
                if let Some(gb) = slot(&mut grads, nodes, *b) {
                    for row in g.chunks(n) {
                        add_into(gb, row);
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (as_, bs) = (shape(*a), shape(*b));
                let (m, k, n) = (as_[0], as_[1], bs[1]);
                let (av, bv) = (val(*a), val(*b));
                if let Some(ga) = slot(&mut grads, nodes, *a) {
                    // ga[i,p] += Σ_j g[i,j] b[p,j]
                    for i in 0..m {
                        let gi = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            ga[i * k + p] += dot(gi, &bv[p * n..(p + 1) * n]);
                        }
                    }
                }
                if let Some(gb) = slot(&mut grads, nodes, *b) {
                    // gb[p,j] += Σ_i a[i,p] g[i,j]
                    for i in 0..m {
                        let gi = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let a_ip = av[i * k + p];
                            if a_ip == T::zero() {
                                continue;
                            }
                            for (d, &s) in gb[p * n..(p + 1) * n].iter_mut().zip(gi) {
                                *d += a_ip * s;
                            }
                        }
                    }
                }
            }
            Op::Relu(x) => {
                let xv = val(*x);
                if let Some(gx) = slot(&mut grads, nodes, *x) {
                    for i in 0..g.len() {
                        if xv[i] > T::zero() {
                            gx[i] += g[i];
                        }
                    }
                }
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                if let Some(gx) = slot(&mut grads, nodes, *x) {
                    for i in 0..g.len() {
                        gx[i] += g[i] * y[i] * (T::one() - y[i]);
                    }
                }
            }
            Op::Log(x) => {
                let xv = val(*x);
                if let Some(gx) = slot(&mut grads, nodes, *x) {
                    for i in 0..g.len() {
                        gx[i] += g[i] / xv[i];
                    }
                }
            }
            Op::Softmax {
                x,
                outer,
                len,
                inner,
            } => {
                let y = node.value.data();
                if let Some(gx) = slot(&mut grads, nodes, *x) {
                    for o in 0..*outer {
                        for i in 0..*inner {
                            let at = |k: usize| o * len * inner + k * inner + i;
                            let s: T = (0..*len).map(|k| g[at(k)] * y[at(k)]).sum();
                            for k in 0..*len {
                                gx[at(k)] += y[at(k)] * (g[at(k)] - s);
                            }
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let n = shape(*gamma)[0];
                let gm = val(*gamma);
                if let Some(gx) = slot(&mut grads, nodes, *x) {
                    let nf = T::of(n as f64);
                    for (r, &is) in inv_std.iter().enumerate() {
                        let span = r * n..(r + 1) * n;
                        let (gr, hr) = (&g[span.clone()], &xhat[span.clone()]);
                        let mut sum_d = T::zero();
                        let mut sum_dh = T::zero();
                        for j in 0..n {
                            let d = gr[j] * gm[j];
                            sum_d += d;
                            sum_dh += d * hr[j];
                        }
                        let dst = &mut gx[span];
                        for j in 0..n {
                            let d = gr[j] * gm[j];
                            dst[j] += is / nf * (nf * d - sum_d - hr[j] * sum_dh);
                        }
                    }
                }
                if let Some(gg) = slot(&mut grads, nodes, *gamma) {
                    for (row, hrow) in g.chunks(n).zip(xhat.chunks(n)) {
                        for j in 0..n {
                            gg[j] += row[j] * hrow[j];
                        }
                    }
                }
                if let Some(gb) = slot(&mut grads, nodes, *beta) {
                    for row in g.chunks(n) {
                        add_into(gb, row);
                    }
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let xs = shape(*x);
                let (nb, c, plane) = (xs[0], xs[1], xs[2] * xs[3]);
                let gm = val(*gamma);
                let cnt = T::of((nb * plane) as f64);
                let mut sum_d = vec![T::zero(); c];
                let mut sum_dh = vec![T::zero(); c];
                let mut sum_g = vec![T::zero(); c];
                let mut sum_gh = vec![T::zero(); c];
                for b in 0..nb {
                    for ch in 0..c {
                        let off = (b * c + ch) * plane;
                        for i in off..off + plane {
                            sum_g[ch] += g[i];
                            sum_gh[ch] += g[i] * xhat[i];
                        }
                    }
                }
                for ch in 0..c {
                    sum_d[ch] = sum_g[ch] * gm[ch];
                    sum_dh[ch] = sum_gh[ch] * gm[ch];
                }
                if let Some(gx) = slot(&mut grads, nodes, *x) {
                    for b in 0..nb {
                        for ch in 0..c {
                            let off = (b * c + ch) * plane;
                            let is = inv_std[ch];
                            for i in off..off + plane {
                                let d = g[i] * gm[ch];
                                gx[i] += if *batch_stats {
                                    is / cnt * (cnt * d - sum_d[ch] - xhat[i] * sum_dh[ch])
                                } else {
                                    d * is
                                };
                            }
                        }
                    }
                }
                if let Some(gg) = slot(&mut grads, nodes, *gamma) {
                    add_into(gg, &sum_gh);
                }
                if let Some(gb) = slot(&mut grads, nodes, *beta) {
                    add_into(gb, &sum_g);
                }
            }
            Op::AvgPool(x) => {
                let xs = shape(*x);
                let (h, w) = (xs[2], xs[3]);
                let (oh, ow) = (h / 2, w / 2);
                let planes = xs[0] * xs[1];
                let quarter = T::of(0.25);
                if let Some(gx) = slot(&mut grads, nodes, *x) {
                    for p in 0..planes {
                        let go = &g[p * oh * ow..(p + 1) * oh * ow];
                        let gi = &mut gx[p * h * w..(p + 1) * h * w];
                        for y in 0..oh {
                            for xx in 0..ow {
                                let v = go[y * ow + xx] * quarter;
                                let (r0, r1) = (2 * y * w, (2 * y + 1) * w);
                                gi[r0 + 2 * xx] += v;
                                gi[r0 + 2 * xx + 1] += v;
                                gi[r1 + 2 * xx] += v;
                                gi[r1 + 2 * xx + 1] += v;
                            }
                        }
                    }
                }
            }
            Op::Mean {
                x,
                outer,
                len,
                inner,
            } => {
                let lf = T::of(*len as f64);
                if let Some(gx) = slot(&mut grads, nodes, *x) {
                    for o in 0..*outer {
                        for k in 0..*len {
                            let base = o * len * inner + k * inner;
                            for i in 0..*inner {
                                gx[base + i] += g[o * inner + i] / lf;
                            }
                        }
                    }
                }
            }
            Op::Sum { x, factor } => {
                if let Some(gx) = slot(&mut grads, nodes, *x) {
                    let v = g[0] * *factor;
                    gx.iter_mut().for_each(|d| *d += v);
                }
            }
            Op::Embedding { table, ids } => {
                let e = shape(*table)[1];
                if let Some(gt) = slot(&mut grads, nodes, *table) {
                    for (m, &id) in ids.iter().enumerate() {
                        add_into(&mut gt[id * e..(id + 1) * e], &g[m * e..(m + 1) * e]);
                    }
                }
            }
            Op::Dropout { x, mask } => {
                if let Some(gx) = slot(&mut grads, nodes, *x) {
                    for i in 0..g.len() {
                        gx[i] += g[i] * mask[i];
                    }
                }
            }
            Op::Conv2d(x, k) => {
                let xs = shape(*x);
                let ks = shape(*k);
                let (n, ci, h, w) = (xs[0], xs[1], xs[2], xs[3]);
                let co = ks[0];
                let (xv, kv) = (val(*x), val(*k));
                if let Some(gx) = slot(&mut grads, nodes, *x) {
                    for b in 0..n {
                        for o in 0..co {
                            let go = &g[(b * co + o) * h * w..(b * co + o + 1) * h * w];
                            for c in 0..ci {
                                let gi = &mut gx[(b * ci + c) * h * w..(b * ci + c + 1) * h * w];
                                for dy in 0..3 {
                                    for dx in 0..3 {
                                        let kw = kv[((o * ci + c) * 3 + dy) * 3 + dx];
                                        if kw == T::zero() {
                                            continue;
                                        }
                                        let (y0, y1) = tap_range(h, dy);
                                        let (x0, x1) = tap_range(w, dx);
                                        for y in y0..y1 {
                                            let iy = y + dy - 1;
                                            let src = &go[y * w + x0..y * w + x1];
                                            let dst =
                                                &mut gi[iy * w + x0 + dx - 1..iy * w + x1 + dx - 1];
                                            for (d, &s) in dst.iter_mut().zip(src) {
                                                *d += kw * s;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                if let Some(gk) = slot(&mut grads, nodes, *k) {
                    for b in 0..n {
                        for o in 0..co {
                            let go = &g[(b * co + o) * h * w..(b * co + o + 1) * h * w];
                            for c in 0..ci {
                                let plane = &xv[(b * ci + c) * h * w..(b * ci + c + 1) * h * w];
                                for dy in 0..3 {
                                    for dx in 0..3 {
                                        let (y0, y1) = tap_range(h, dy);
                                        let (x0, x1) = tap_range(w, dx);
                                        let mut acc = T::zero();
                                        for y in y0..y1 {
                                            let iy = y + dy - 1;
                                            acc += dot(
                                                &go[y * w + x0..y * w + x1],
                                                &plane[iy * w + x0 + dx - 1..iy * w + x1 + dx - 1],
                                            );
                                        }
                                        gk[((o * ci + c) * 3 + dy) * 3 + dx] += acc;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            } => {
                let (m, d) = (shape(*q)[0], shape(*q)[1]);
                let (n, dv) = (shape(*k)[0], shape(*v)[1]);
                let (dh, dvh) = (d / heads, dv / heads);
                let scale = T::one() / T::of(dh as f64).sqrt();
                let (qd, kd, vd) = (val(*q), val(*k), val(*v));
                let mut gq = vec![T::zero(); m * d];
                let mut gk = vec![T::zero(); n * d];
                let mut gv = vec![T::zero(); n * dv];
                let mut dp = vec![T::zero(); n];
                for hd in 0..*heads {
                    for i in 0..m {
                        let p = &probs[(hd * m + i) * n..(hd * m + i + 1) * n];
                        let go = &g[i * dv + hd * dvh..i * dv + (hd + 1) * dvh];
                        let mut s = T::zero();
                        for j in 0..n {
                            if p[j] == T::zero() {
                                dp[j] = T::zero();
                                continue;
                            }
                            let vj = &vd[j * dv + hd * dvh..j * dv + (hd + 1) * dvh];
                            dp[j] = dot(go, vj);
                            s += p[j] * dp[j];
                            for (gvv, &gov) in gv[j * dv + hd * dvh..j * dv + (hd + 1) * dvh]
                                .iter_mut()
                                .zip(go)
                            {
                                *gvv += p[j] * gov;
                            }
                        }
                        for j in 0..n {
                            if p[j] == T::zero() {
                                continue;
                            }
                            let ds = p[j] * (dp[j] - s) * scale;
                            let qi = i * d + hd * dh;
                            let kj = j * d + hd * dh;
                            for t in 0..dh {
                                gq[qi + t] += ds * kd[kj + t];
                                gk[kj + t] += ds * qd[qi + t];
                            }
                        }
                    }
                }
                if let Some(dst) = slot(&mut grads, nodes, *q) {
                    add_into(dst, &gq);
                }
                if let Some(dst) = slot(&mut grads, nodes, *k) {
                    add_into(dst, &gk);
                }
                if let Some(dst) = slot(&mut grads, nodes, *v) {
                    add_into(dst, &gv);
                }
            }
            Op::Reshape(x) => {
                if let Some(gx) = slot(&mut grads, nodes, *x) {
                    add_into(gx, &g);
                }
            }
            Op::Transpose(x) => {
                let xs = shape(*x);
                let r = xs.len();
                let (a, b) = (xs[r - 2], xs[r - 1]);
                if let Some(gx) = slot(&mut grads, nodes, *x) {
                    for (blk, gi) in gx.chunks_mut(a * b).enumerate() {
                        let go = &g[blk * a * b..(blk + 1) * a * b];
                        for i in 0..a {
                            for j in 0..b {
                                gi[i * b + j] += go[j * a + i];
                            }
                        }
                    }
                }
            }
            Op::Narrow { x, offset } => {
                if let Some(gx) = slot(&mut grads, nodes, *x) {
                    add_into(&mut gx[*offset..*offset + g.len()], &g);
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                active,
                probs,
                count,
            } => {
                let v = shape(*logits)[1];
                let w = g[0] / T::of(*count as f64);
                if let Some(gl) = slot(&mut grads, nodes, *logits) {
                    for (i, &t) in targets.iter().enumerate() {
                        if !active[i] {
                            continue;
                        }
                        for j in 0..v {
                            gl[i * v + j] += w * probs[i * v + j];
                        }
                        gl[i * v + t] -= w;
                    }
                }
            }
            Op::Bce {
                logits,
                targets,
                probs,
            } => {
                let w = g[0] / T::of(targets.len() as f64);
                if let Some(gl) = slot(&mut grads, nodes, *logits) {
                    for i in 0..targets.len() {
                        gl[i] += w * (probs[i] - targets[i]);
                    }
                }
            }
        }
    }
    Ok(())
}
