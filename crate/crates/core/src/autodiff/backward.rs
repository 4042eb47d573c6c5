//! Reverse sweep: gradient accumulation for every tape op.

use super::eval::{gelu_grad, op_name, sigmoid_scalar};
use super::{AdError, Gradients, Node, NodeId, Op, LAYER_NORM_EPS};
use crate::so3::GEODESIC_CLAMP_EPS;

pub(super) fn backward(nodes: &[Node], loss: NodeId) -> Result<Gradients, AdError> {
    if nodes[loss.0].values.len() != 1 {
        return Err(AdError::NonScalarLoss(nodes[loss.0].shape.clone()));
    }
    let sizes: Vec<usize> = nodes.iter().map(|n| n.values.len()).collect();
    let mut bufs: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
    bufs[loss.0] = Some(vec![1.0]);

    for i in (0..=loss.0).rev() {
        let g = match bufs[i].take() {
            Some(g) => g,
            None => continue,
        };
        accumulate(nodes, i, &g, &mut bufs);
        bufs[i] = Some(g);
    }

    for (i, buf) in bufs.iter().enumerate() {
        if let Some(b) = buf {
            if !b.iter().all(|v| v.is_finite()) {
                return Err(AdError::NonFinite {
                    op: op_name(&nodes[i].op),
                });
            }
        }
    }
    Ok(Gradients { bufs, sizes })
}

fn grad_buf<'a>(
    bufs: &'a mut [Option<Vec<f64>>],
    nodes: &[Node],
    id: NodeId,
) -> &'a mut Vec<f64> {
    bufs[id.0].get_or_insert_with(|| vec![0.0; nodes[id.0].values.len()])
}

fn accumulate(nodes: &[Node], i: usize, g: &[f64], bufs: &mut [Option<Vec<f64>>]) {
    let node = &nodes[i];
    match &node.op {
        Op::Leaf | Op::Constant => {}
        Op::Add(a, b) => {
            for (d, &gv) in grad_buf(bufs, nodes, *a).iter_mut().zip(g) {
                *d += gv;
            }
            for (d, &gv) in grad_buf(bufs, nodes, *b).iter_mut().zip(g) {
                *d += gv;
            }
        }
        Op::Sub(a, b) => {
            for (d, &gv) in grad_buf(bufs, nodes, *a).iter_mut().zip(g) {
                *d += gv;
            }
            for (d, &gv) in grad_buf(bufs, nodes, *b).iter_mut().zip(g) {
                *d -= gv;
            }
        }
        Op::Mul(a, b) => {
            let (va, vb) = (&nodes[a.0].values, &nodes[b.0].values);
            for ((d, &gv), &y) in grad_buf(bufs, nodes, *a).iter_mut().zip(g).zip(vb) {
                *d += gv * y;
            }
            for ((d, &gv), &x) in grad_buf(bufs, nodes, *b).iter_mut().zip(g).zip(va) {
                *d += gv * x;
            }
        }
        Op::Div(a, b) => {
            let (va, vb) = (&nodes[a.0].values, &nodes[b.0].values);
            for ((d, &gv), &y) in grad_buf(bufs, nodes, *a).iter_mut().zip(g).zip(vb) {
                *d += gv / y;
            }
            for (((d, &gv), &x), &y) in grad_buf(bufs, nodes, *b).iter_mut().zip(g).zip(va).zip(vb)
            {
                *d -= gv * x / (y * y);
            }
        }
        Op::Affine { x, scale, .. } => {
            for (d, &gv) in grad_buf(bufs, nodes, *x).iter_mut().zip(g) {
                *d += gv * scale;
            }
        }
        Op::MatMul(a, b) => {
            let (n, k) = (nodes[a.0].shape[0], nodes[a.0].shape[1]);
            let m = nodes[b.0].shape[1];
            let (va, vb) = (&nodes[a.0].values, &nodes[b.0].values);
            {
                // dA += g · Bᵀ
                let da = grad_buf(bufs, nodes, *a);
                for r in 0..n {
                    for c in 0..m {
                        let gv = g[r * m + c];
                        if gv == 0.0 {
                            continue;
                        }
                        for i2 in 0..k {
                            da[r * k + i2] += gv * vb[i2 * m + c];
                        }
                    }
                }
            }
            {
                // dB += Aᵀ · g
                let db = grad_buf(bufs, nodes, *b);
                for r in 0..n {
                    for i2 in 0..k {
                        let av = va[r * k + i2];
                        if av == 0.0 {
                            continue;
                        }
                        for c in 0..m {
                            db[i2 * m + c] += av * g[r * m + c];
                        }
                    }
                }
            }
        }
        Op::BatchMatMul(a, b) => {
            let (bs, n, k) = (
                nodes[a.0].shape[0],
                nodes[a.0].shape[1],
                nodes[a.0].shape[2],
            );
            let m = nodes[b.0].shape[2];
            let (va, vb) = (&nodes[a.0].values, &nodes[b.0].values);
            {
                let da = grad_buf(bufs, nodes, *a);
                for t in 0..bs {
                    let (go, ao, bo) = (t * n * m, t * n * k, t * k * m);
                    for r in 0..n {
                        for c in 0..m {
                            let gv = g[go + r * m + c];
                            for i2 in 0..k {
                                da[ao + r * k + i2] += gv * vb[bo + i2 * m + c];
                            }
                        }
                    }
                }
            }
            {
                let db = grad_buf(bufs, nodes, *b);
                for t in 0..bs {
                    let (go, ao, bo) = (t * n * m, t * n * k, t * k * m);
                    for r in 0..n {
                        for i2 in 0..k {
                            let av = va[ao + r * k + i2];
                            for c in 0..m {
                                db[bo + i2 * m + c] += av * g[go + r * m + c];
                            }
                        }
                    }
                }
            }
        }
        Op::Transpose(x) => {
            let (n, m) = (nodes[x.0].shape[0], nodes[x.0].shape[1]);
            let dx = grad_buf(bufs, nodes, *x);
            for r in 0..n {
                for c in 0..m {
                    dx[r * m + c] += g[c * n + r];
                }
            }
        }
        Op::Reshape(x) => {
            for (d, &gv) in grad_buf(bufs, nodes, *x).iter_mut().zip(g) {
                *d += gv;
            }
        }
        Op::ConcatRows(parts) => {
            let mut at = 0;
            for &p in parts {
                let len = nodes[p.0].values.len();
                for (d, &gv) in grad_buf(bufs, nodes, p).iter_mut().zip(&g[at..at + len]) {
                    *d += gv;
                }
                at += len;
            }
        }
        Op::ConcatCols(a, b) => {
            let (n, p) = (nodes[a.0].shape[0], nodes[a.0].shape[1]);
            let q = nodes[b.0].shape[1];
            {
                let da = grad_buf(bufs, nodes, *a);
                for r in 0..n {
                    for c in 0..p {
                        da[r * p + c] += g[r * (p + q) + c];
                    }
                }
            }
            {
                let db = grad_buf(bufs, nodes, *b);
                for r in 0..n {
                    for c in 0..q {
                        db[r * q + c] += g[r * (p + q) + p + c];
                    }
                }
            }
        }
        Op::ConcatScalars(parts) => {
            for (j, &p) in parts.iter().enumerate() {
                grad_buf(bufs, nodes, p)[0] += g[j];
            }
        }
        Op::SliceRows { x, start, .. } => {
            let d = nodes[x.0].shape[1];
            let dx = grad_buf(bufs, nodes, *x);
            for (off, &gv) in g.iter().enumerate() {
                dx[start * d + off] += gv;
            }
        }
        Op::SliceCols { x, start, end } => {
            let (n, d) = (nodes[x.0].shape[0], nodes[x.0].shape[1]);
            let w = end - start;
            let dx = grad_buf(bufs, nodes, *x);
            for r in 0..n {
                for c in 0..w {
                    dx[r * d + start + c] += g[r * w + c];
                }
            }
        }
        Op::RowSoftmax(x) => {
            let d = *nodes[x.0].shape.last().unwrap();
            let y = &node.values;
            let dx = grad_buf(bufs, nodes, *x);
            for ((yrow, grow), drow) in y
                .chunks_exact(d)
                .zip(g.chunks_exact(d))
                .zip(dx.chunks_exact_mut(d))
            {
                let dot: f64 = yrow.iter().zip(grow).map(|(&yv, &gv)| yv * gv).sum();
                for ((dv, &yv), &gv) in drow.iter_mut().zip(yrow).zip(grow) {
                    *dv += yv * (gv - dot);
                }
            }
        }
        Op::Relu(x) => {
            let vx = &nodes[x.0].values;
            for ((d, &gv), &xv) in grad_buf(bufs, nodes, *x).iter_mut().zip(g).zip(vx) {
                if xv > 0.0 {
                    *d += gv;
                }
            }
        }
        Op::Gelu(x) => {
            let vx = &nodes[x.0].values;
            for ((d, &gv), &xv) in grad_buf(bufs, nodes, *x).iter_mut().zip(g).zip(vx) {
                *d += gv * gelu_grad(xv);
            }
        }
        Op::Sigmoid(x) => {
            let vx = &nodes[x.0].values;
            for ((d, &gv), &xv) in grad_buf(bufs, nodes, *x).iter_mut().zip(g).zip(vx) {
                let s = sigmoid_scalar(xv);
                *d += gv * s * (1.0 - s);
            }
        }
        Op::Sqrt(x) => {
            let y = &node.values;
            for ((d, &gv), &yv) in grad_buf(bufs, nodes, *x).iter_mut().zip(g).zip(y) {
                *d += gv / (2.0 * yv);
            }
        }
        Op::Rsqrt(x) => {
            let y = &node.values;
            for ((d, &gv), &yv) in grad_buf(bufs, nodes, *x).iter_mut().zip(g).zip(y) {
                *d += gv * (-0.5) * yv * yv * yv;
            }
        }
        Op::LayerNorm(x) => {
            let d = *nodes[x.0].shape.last().unwrap();
            let vx = &nodes[x.0].values;
            let y = &node.values;
            let dx = grad_buf(bufs, nodes, *x);
            for ((xrow, (yrow, grow)), drow) in vx
                .chunks_exact(d)
                .zip(y.chunks_exact(d).zip(g.chunks_exact(d)))
                .zip(dx.chunks_exact_mut(d))
            {
                let mean = xrow.iter().sum::<f64>() / d as f64;
                let var = xrow.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                let g_mean = grow.iter().sum::<f64>() / d as f64;
                let gy_mean =
                    grow.iter().zip(yrow).map(|(&gv, &yv)| gv * yv).sum::<f64>() / d as f64;
                for ((dv, &gv), &yv) in drow.iter_mut().zip(grow).zip(yrow) {
                    *dv += inv * (gv - g_mean - yv * gy_mean);
                }
            }
        }
        Op::Sum(x) => {
            let gv = g[0];
            for d in grad_buf(bufs, nodes, *x).iter_mut() {
                *d += gv;
            }
        }
        Op::Mean(x) => {
            let n = nodes[x.0].values.len() as f64;
            let gv = g[0] / n;
            for d in grad_buf(bufs, nodes, *x).iter_mut() {
                *d += gv;
            }
        }
        Op::MeanRows(x) => {
            let (n, d) = (nodes[x.0].shape[0], nodes[x.0].shape[1]);
            let dx = grad_buf(bufs, nodes, *x);
            for r in 0..n {
                for c in 0..d {
                    dx[r * d + c] += g[c] / n as f64;
                }
            }
        }
        Op::SqNorm(x) => {
            let gv = g[0];
            let vx = &nodes[x.0].values;
            for (d, &xv) in grad_buf(bufs, nodes, *x).iter_mut().zip(vx) {
                *d += 2.0 * xv * gv;
            }
        }
        Op::AcosClamped(x) => {
            let lo = -1.0 + GEODESIC_CLAMP_EPS;
            let hi = 1.0 - GEODESIC_CLAMP_EPS;
            let vx = &nodes[x.0].values;
            for ((d, &gv), &xv) in grad_buf(bufs, nodes, *x).iter_mut().zip(g).zip(vx) {
                if xv > lo && xv < hi {
                    *d += gv * (-1.0 / (1.0 - xv * xv).sqrt());
                }
            }
        }
        Op::Cross3(a, b) => {
            let (va, vb) = (&nodes[a.0].values, &nodes[b.0].values);
            // c = a × b  =>  da = b × g, db = g × a
            {
                let da = grad_buf(bufs, nodes, *a);
                da[0] += vb[1] * g[2] - vb[2] * g[1];
                da[1] += vb[2] * g[0] - vb[0] * g[2];
                da[2] += vb[0] * g[1] - vb[1] * g[0];
            }
            {
                let db = grad_buf(bufs, nodes, *b);
                db[0] += g[1] * va[2] - g[2] * va[1];
                db[1] += g[2] * va[0] - g[0] * va[2];
                db[2] += g[0] * va[1] - g[1] * va[0];
            }
        }
        Op::MulScalar { x, s } => {
            let sv = nodes[s.0].values[0];
            let vx = &nodes[x.0].values;
            for (d, &gv) in grad_buf(bufs, nodes, *x).iter_mut().zip(g) {
                *d += gv * sv;
            }
            let ds: f64 = g.iter().zip(vx).map(|(&gv, &xv)| gv * xv).sum();
            grad_buf(bufs, nodes, *s)[0] += ds;
        }
        Op::AddRowVec { x, v } => {
            let d = *nodes[x.0].shape.last().unwrap();
            for (dd, &gv) in grad_buf(bufs, nodes, *x).iter_mut().zip(g) {
                *dd += gv;
            }
            let dv = grad_buf(bufs, nodes, *v);
            for grow in g.chunks_exact(d) {
                for (dvv, &gv) in dv.iter_mut().zip(grow) {
                    *dvv += gv;
                }
            }
        }
        Op::MulRowVec { x, v } => {
            let d = *nodes[x.0].shape.last().unwrap();
            let vv = &nodes[v.0].values;
            let vx = &nodes[x.0].values;
            {
                let dx = grad_buf(bufs, nodes, *x);
                for (drow, grow) in dx.chunks_exact_mut(d).zip(g.chunks_exact(d)) {
                    for ((dd, &gv), &b) in drow.iter_mut().zip(grow).zip(vv) {
                        *dd += gv * b;
                    }
                }
            }
            {
                let dv = grad_buf(bufs, nodes, *v);
                for (xrow, grow) in vx.chunks_exact(d).zip(g.chunks_exact(d)) {
                    for ((dvv, &gv), &xv) in dv.iter_mut().zip(grow).zip(xrow) {
                        *dvv += gv * xv;
                    }
                }
            }
        }
    }
}
