//! Forward evaluation of tape ops, shared by initial construction and
//! in-place replay.

use super::{AdError, Node, NodeId, Op, LAYER_NORM_EPS, NEAR_CLAMP_MARGIN};
use crate::so3::GEODESIC_CLAMP_EPS;

pub(super) fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Constant => "constant",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Div(..) => "div",
        Op::Affine { .. } => "affine",
        Op::MatMul(..) => "matmul",
        Op::BatchMatMul(..) => "batch_matmul",
        Op::Transpose(..) => "transpose",
        Op::Reshape(..) => "reshape",
        Op::ConcatRows(..) => "concat_rows",
        Op::ConcatCols(..) => "concat_cols",
        Op::ConcatScalars(..) => "concat_scalars",
        Op::SliceRows { .. } => "slice_rows",
        Op::SliceCols { .. } => "slice_cols",
        Op::RowSoftmax(..) => "row_softmax",
        Op::Relu(..) => "relu",
        Op::Gelu(..) => "gelu",
        Op::Sigmoid(..) => "sigmoid",
        Op::Sqrt(..) => "sqrt",
        Op::Rsqrt(..) => "rsqrt",
        Op::LayerNorm(..) => "layer_norm",
        Op::Sum(..) => "sum",
        Op::Mean(..) => "mean",
        Op::MeanRows(..) => "mean_rows",
        Op::SqNorm(..) => "sqnorm",
        Op::AcosClamped(..) => "acos_clamped",
        Op::Cross3(..) => "cross3",
        Op::MulScalar { .. } => "mul_scalar",
        Op::AddRowVec { .. } => "add_rowvec",
        Op::MulRowVec { .. } => "mul_rowvec",
    }
}

fn vals(prefix: &[Node], id: NodeId) -> &[f64] {
    &prefix[id.0].values
}

fn shape(prefix: &[Node], id: NodeId) -> &[usize] {
    &prefix[id.0].shape
}

pub(super) fn gelu_scalar(x: f64) -> f64 {
    const SQRT_2_OVER_PI: f64 = 0.7978845608028654;
    const C: f64 = 0.044715;
    let u = SQRT_2_OVER_PI * (x + C * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

pub(super) fn gelu_grad(x: f64) -> f64 {
    const SQRT_2_OVER_PI: f64 = 0.7978845608028654;
    const C: f64 = 0.044715;
    let u = SQRT_2_OVER_PI * (x + C * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * SQRT_2_OVER_PI * (1.0 + 3.0 * C * x * x)
}

pub(super) fn sigmoid_scalar(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out` must already have the length implied by `shape_out`.
pub(super) fn eval_into(
    prefix: &[Node],
    op: &Op,
    shape_out: &[usize],
    out: &mut Vec<f64>,
    near_clamp: &mut bool,
) -> Result<(), AdError> {
    let n_out: usize = shape_out.iter().product();
    out.resize(n_out, 0.0);
    match op {
        Op::Leaf | Op::Constant => {}
        Op::Add(a, b) => {
            for ((o, x), y) in out.iter_mut().zip(vals(prefix, *a)).zip(vals(prefix, *b)) {
                *o = x + y;
            }
        }
        Op::Sub(a, b) => {
            for ((o, x), y) in out.iter_mut().zip(vals(prefix, *a)).zip(vals(prefix, *b)) {
                *o = x - y;
            }
        }
        Op::Mul(a, b) => {
            for ((o, x), y) in out.iter_mut().zip(vals(prefix, *a)).zip(vals(prefix, *b)) {
                *o = x * y;
            }
        }
        Op::Div(a, b) => {
            for ((o, x), y) in out.iter_mut().zip(vals(prefix, *a)).zip(vals(prefix, *b)) {
                *o = x / y;
            }
        }
        Op::Affine { x, scale, shift } => {
            for (o, v) in out.iter_mut().zip(vals(prefix, *x)) {
                *o = scale * v + shift;
            }
        }
        Op::MatMul(a, b) => {
            let (n, k) = (shape(prefix, *a)[0], shape(prefix, *a)[1]);
            let m = shape(prefix, *b)[1];
            matmul(vals(prefix, *a), vals(prefix, *b), out, n, k, m);
        }
        Op::BatchMatMul(a, b) => {
            let sa = shape(prefix, *a);
            let (bs, n, k) = (sa[0], sa[1], sa[2]);
            let m = shape(prefix, *b)[2];
            let va = vals(prefix, *a);
            let vb = vals(prefix, *b);
            for i in 0..bs {
                matmul(
                    &va[i * n * k..(i + 1) * n * k],
                    &vb[i * k * m..(i + 1) * k * m],
                    &mut out[i * n * m..(i + 1) * n * m],
                    n,
                    k,
                    m,
                );
            }
        }
        Op::Transpose(x) => {
            let (n, m) = (shape(prefix, *x)[0], shape(prefix, *x)[1]);
            let v = vals(prefix, *x);
            for r in 0..n {
                for c in 0..m {
                    out[c * n + r] = v[r * m + c];
                }
            }
        }
        Op::Reshape(x) => out.copy_from_slice(vals(prefix, *x)),
        Op::ConcatRows(parts) => {
            let mut at = 0;
            for &p in parts {
                let v = vals(prefix, p);
                out[at..at + v.len()].copy_from_slice(v);
                at += v.len();
            }
        }
        Op::ConcatCols(a, b) => {
            let (n, p) = (shape(prefix, *a)[0], shape(prefix, *a)[1]);
            let q = shape(prefix, *b)[1];
            let va = vals(prefix, *a);
            let vb = vals(prefix, *b);
            for r in 0..n {
                out[r * (p + q)..r * (p + q) + p].copy_from_slice(&va[r * p..(r + 1) * p]);
                out[r * (p + q) + p..(r + 1) * (p + q)].copy_from_slice(&vb[r * q..(r + 1) * q]);
            }
        }
        Op::ConcatScalars(parts) => {
            for (o, &p) in out.iter_mut().zip(parts.iter()) {
                *o = vals(prefix, p)[0];
            }
        }
        Op::SliceRows { x, start, end } => {
            let d = shape(prefix, *x)[1];
            out.copy_from_slice(&vals(prefix, *x)[start * d..end * d]);
        }
        Op::SliceCols { x, start, end } => {
            let (n, d) = (shape(prefix, *x)[0], shape(prefix, *x)[1]);
            let w = end - start;
            let v = vals(prefix, *x);
            for r in 0..n {
                out[r * w..(r + 1) * w].copy_from_slice(&v[r * d + start..r * d + end]);
            }
            let _ = n;
        }
        Op::RowSoftmax(x) => {
            let d = *shape(prefix, *x).last().unwrap();
            let v = vals(prefix, *x);
            for (row_in, row_out) in v.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
                let max = row_in.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for (o, &x) in row_out.iter_mut().zip(row_in) {
                    *o = (x - max).exp();
                    z += *o;
                }
                for o in row_out.iter_mut() {
                    *o /= z;
                }
            }
        }
        Op::Relu(x) => {
            for (o, &v) in out.iter_mut().zip(vals(prefix, *x)) {
                *o = v.max(0.0);
            }
        }
        Op::Gelu(x) => {
            for (o, &v) in out.iter_mut().zip(vals(prefix, *x)) {
                *o = gelu_scalar(v);
            }
        }
        Op::Sigmoid(x) => {
            for (o, &v) in out.iter_mut().zip(vals(prefix, *x)) {
                *o = sigmoid_scalar(v);
            }
        }
        Op::Sqrt(x) => {
            for (o, &v) in out.iter_mut().zip(vals(prefix, *x)) {
                *o = v.sqrt();
            }
        }
        Op::Rsqrt(x) => {
            for (o, &v) in out.iter_mut().zip(vals(prefix, *x)) {
                *o = 1.0 / v.sqrt();
            }
        }
        Op::LayerNorm(x) => {
            let d = *shape(prefix, *x).last().unwrap();
            let v = vals(prefix, *x);
            for (row_in, row_out) in v.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
                let mean = row_in.iter().sum::<f64>() / d as f64;
                let var = row_in.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
                let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                for (o, &x) in row_out.iter_mut().zip(row_in) {
                    *o = (x - mean) * inv;
                }
            }
        }
        Op::Sum(x) => out[0] = vals(prefix, *x).iter().sum(),
        Op::Mean(x) => {
            let v = vals(prefix, *x);
            out[0] = v.iter().sum::<f64>() / v.len() as f64;
        }
        Op::MeanRows(x) => {
            let (n, d) = (shape(prefix, *x)[0], shape(prefix, *x)[1]);
            let v = vals(prefix, *x);
            for c in 0..d {
                let mut s = 0.0;
                for r in 0..n {
                    s += v[r * d + c];
                }
                out[c] = s / n as f64;
            }
        }
        Op::SqNorm(x) => out[0] = vals(prefix, *x).iter().map(|v| v * v).sum(),
        Op::AcosClamped(x) => {
            let lo = -1.0 + GEODESIC_CLAMP_EPS;
            let hi = 1.0 - GEODESIC_CLAMP_EPS;
            for (o, &v) in out.iter_mut().zip(vals(prefix, *x)) {
                if v.abs() >= hi - NEAR_CLAMP_MARGIN {
                    *near_clamp = true;
                }
                *o = v.clamp(lo, hi).acos();
            }
        }
        Op::Cross3(a, b) => {
            let x = vals(prefix, *a);
            let y = vals(prefix, *b);
            out[0] = x[1] * y[2] - x[2] * y[1];
            out[1] = x[2] * y[0] - x[0] * y[2];
            out[2] = x[0] * y[1] - x[1] * y[0];
        }
        Op::MulScalar { x, s } => {
            let sv = vals(prefix, *s)[0];
            for (o, &v) in out.iter_mut().zip(vals(prefix, *x)) {
                *o = v * sv;
            }
        }
        Op::AddRowVec { x, v } => {
            let d = *shape(prefix, *x).last().unwrap();
            let vv = vals(prefix, *v);
            for (row_in, row_out) in vals(prefix, *x)
                .chunks_exact(d)
                .zip(out.chunks_exact_mut(d))
            {
                for ((o, &xv), &b) in row_out.iter_mut().zip(row_in).zip(vv) {
                    *o = xv + b;
                }
            }
        }
        Op::MulRowVec { x, v } => {
            let d = *shape(prefix, *x).last().unwrap();
            let vv = vals(prefix, *v);
            for (row_in, row_out) in vals(prefix, *x)
                .chunks_exact(d)
                .zip(out.chunks_exact_mut(d))
            {
                for ((o, &xv), &b) in row_out.iter_mut().zip(row_in).zip(vv) {
                    *o = xv * b;
                }
            }
        }
    }
    Ok(())
}

fn matmul(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    out.fill(0.0);
    for r in 0..n {
        for i in 0..k {
            let av = a[r * k + i];
            if av == 0.0 {
                continue;
            }
            let brow = &b[i * m..(i + 1) * m];
            let orow = &mut out[r * m..(r + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}
