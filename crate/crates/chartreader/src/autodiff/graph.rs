//! Eagerly-evaluated computation graph with reverse-mode differentiation.
//!
//! Each op computes its value at construction time and records enough state
//! to replay its vector-Jacobian product when [`Graph::backward`] walks the
//! node list in reverse. Graphs are single-threaded and cheap to build; batch
//! parallelism happens across independent graphs, never inside one.

use super::kernels::{self, ConvDims};
use super::real::Real;
use super::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug)]
enum Op<F: Real> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Clamp(Var, F, F),
    Matmul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    /// a[m,k] @ b[n,k]^T
    MatmulNt {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    AddRow(Var, Var),
    SumAll(Var),
    Concat {
        parts: Vec<Var>,
        axis: usize,
        outer: usize,
        inner: usize,
        sizes: Vec<usize>,
    },
    SliceCols {
        x: Var,
        from: usize,
        to: usize,
        rows: usize,
        cols: usize,
    },
    Reshape(Var),
    GatherRows {
        table: Var,
        indices: Vec<usize>,
        dim: usize,
    },
    Softmax {
        x: Var,
        outer: usize,
        axis_len: usize,
        inner: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        eps: F,
        normed: Vec<F>,
        inv_std: Vec<F>,
    },
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        dims: ConvDims,
        cols: Vec<F>,
    },
    MaxPool2 {
        x: Var,
        c: usize,
        h: usize,
        w: usize,
        argmax: Vec<usize>,
    },
    Upsample2 {
        x: Var,
        c: usize,
        h: usize,
        w: usize,
    },
    CenterPool {
        x: Var,
        c: usize,
        h: usize,
        w: usize,
        row_arg: Vec<usize>,
        col_arg: Vec<usize>,
    },
    CrossEntropySum {
        logits: Var,
        targets: Vec<usize>,
        selected: Vec<bool>,
        probs: Vec<F>,
    },
    SmoothL1Sum {
        pred: Var,
        gt: Var,
        mask: Vec<F>,
    },
}

struct Node<F: Real> {
    value: Tensor<F>,
    grad: Option<Vec<F>>,
    requires_grad: bool,
    op: Op<F>,
}

/// An eagerly-evaluated reverse-mode differentiation graph.
pub struct Graph<F: Real> {
    nodes: Vec<Node<F>>,
}

impl<F: Real> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<F>, requires_grad: bool, op: Op<F>) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Insert a differentiable leaf (parameter or input that needs a gradient).
    pub fn leaf(&mut self, t: Tensor<F>, requires_grad: bool) -> Var {
        self.push(t, requires_grad, Op::Leaf)
    }

    /// Insert a constant (never receives a gradient).
    pub fn constant(&mut self, t: Tensor<F>) -> Var {
        self.push(t, false, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> F {
        assert_eq!(self.nodes[v.0].value.len(), 1, "expected a scalar node");
        self.nodes[v.0].value.data()[0]
    }

    /// Gradient accumulated at `v` by the last `backward` call, if any flowed.
    pub fn grad(&self, v: Var) -> Option<&[F]> {
        self.nodes[v.0].grad.as_deref()
    }

    // ── elementwise ──────────────────────────────────────────────────

    fn same_shape(&self, a: Var, b: Var, what: &str) {
        assert_eq!(
            self.nodes[a.0].value.shape(),
            self.nodes[b.0].value.shape(),
            "{what}: shape mismatch"
        );
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "add");
        let data: Vec<F> = self.nodes[a.0]
            .value
            .iter()
            .zip(self.nodes[b.0].value.iter())
            .map(|(x, y)| *x + *y)
            .collect();
        let t = Tensor::new(self.nodes[a.0].value.shape().to_vec(), data);
        let rg = self.rg(a) || self.rg(b);
        self.push(t, rg, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "sub");
        let data: Vec<F> = self.nodes[a.0]
            .value
            .iter()
            .zip(self.nodes[b.0].value.iter())
            .map(|(x, y)| *x - *y)
            .collect();
        let t = Tensor::new(self.nodes[a.0].value.shape().to_vec(), data);
        let rg = self.rg(a) || self.rg(b);
        self.push(t, rg, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "mul");
        let data: Vec<F> = self.nodes[a.0]
            .value
            .iter()
            .zip(self.nodes[b.0].value.iter())
            .map(|(x, y)| *x * *y)
            .collect();
        let t = Tensor::new(self.nodes[a.0].value.shape().to_vec(), data);
        let rg = self.rg(a) || self.rg(b);
        self.push(t, rg, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, c: F) -> Var {
        let data: Vec<F> = self.nodes[x.0].value.iter().map(|v| *v * c).collect();
        let t = Tensor::new(self.nodes[x.0].value.shape().to_vec(), data);
        let rg = self.rg(x);
        self.push(t, rg, Op::Scale(x, c))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let data: Vec<F> = self.nodes[x.0]
            .value
            .iter()
            .map(|v| if *v > F::zero() { *v } else { F::zero() })
            .collect();
        let t = Tensor::new(self.nodes[x.0].value.shape().to_vec(), data);
        let rg = self.rg(x);
        self.push(t, rg, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let one = F::one();
        let data: Vec<F> = self.nodes[x.0]
            .value
            .iter()
            .map(|v| one / (one + (-*v).exp()))
            .collect();
        let t = Tensor::new(self.nodes[x.0].value.shape().to_vec(), data);
        let rg = self.rg(x);
        self.push(t, rg, Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let data: Vec<F> = self.nodes[x.0].value.iter().map(|v| v.exp()).collect();
        let t = Tensor::new(self.nodes[x.0].value.shape().to_vec(), data);
        let rg = self.rg(x);
        self.push(t, rg, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        let data: Vec<F> = self.nodes[x.0].value.iter().map(|v| v.ln()).collect();
        let t = Tensor::new(self.nodes[x.0].value.shape().to_vec(), data);
        let rg = self.rg(x);
        self.push(t, rg, Op::Log(x))
    }

    pub fn clamp(&mut self, x: Var, lo: F, hi: F) -> Var {
        let data: Vec<F> = self.nodes[x.0]
            .value
            .iter()
            .map(|v| {
                if *v < lo {
                    lo
                } else if *v > hi {
                    hi
                } else {
                    *v
                }
            })
            .collect();
        let t = Tensor::new(self.nodes[x.0].value.shape().to_vec(), data);
        let rg = self.rg(x);
        self.push(t, rg, Op::Clamp(x, lo, hi))
    }

    // ── linear algebra ───────────────────────────────────────────────

    fn mat_dims(&self, v: Var, what: &str) -> (usize, usize) {
        let s = self.nodes[v.0].value.shape();
        assert_eq!(s.len(), 2, "{what}: expected a matrix, got shape {s:?}");
        (s[0], s[1])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, ka) = self.mat_dims(a, "matmul lhs");
        let (kb, n) = self.mat_dims(b, "matmul rhs");
        assert_eq!(ka, kb, "matmul: inner dims {ka} vs {kb}");
        let data = kernels::matmul(
            self.nodes[a.0].value.data(),
            self.nodes[b.0].value.data(),
            m,
            ka,
            n,
        );
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::new(vec![m, n], data), rg, Op::Matmul { a, b, m, k: ka, n })
    }

    /// a[m,k] @ b[n,k]^T -> [m,n]
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (m, ka) = self.mat_dims(a, "matmul_nt lhs");
        let (n, kb) = self.mat_dims(b, "matmul_nt rhs");
        assert_eq!(ka, kb, "matmul_nt: inner dims {ka} vs {kb}");
        let data = kernels::matmul_nt(
            self.nodes[a.0].value.data(),
            self.nodes[b.0].value.data(),
            m,
            ka,
            n,
        );
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::new(vec![m, n], data), rg, Op::MatmulNt { a, b, m, k: ka, n })
    }

    /// mat[r,c] + row[c] broadcast over rows.
    pub fn add_row(&mut self, mat: Var, row: Var) -> Var {
        let (r, c) = self.mat_dims(mat, "add_row mat");
        assert_eq!(
            self.nodes[row.0].value.len(),
            c,
            "add_row: row length must equal column count"
        );
        let mut data = self.nodes[mat.0].value.data().to_vec();
        for i in 0..r {
            for j in 0..c {
                data[i * c + j] += self.nodes[row.0].value.data()[j];
            }
        }
        let rg = self.rg(mat) || self.rg(row);
        self.push(Tensor::new(vec![r, c], data), rg, Op::AddRow(mat, row))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let mut acc = F::zero();
        for v in self.nodes[x.0].value.iter() {
            acc += *v;
        }
        let rg = self.rg(x);
        self.push(Tensor::scalar(acc), rg, Op::SumAll(x))
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.nodes[x.0].value.len();
        let s = self.sum_all(x);
        self.scale(s, F::one() / F::c(n as f64))
    }

    // ── structure ────────────────────────────────────────────────────

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Var {
        assert!(!parts.is_empty(), "concat: no inputs");
        let base = self.nodes[parts[0].0].value.shape().to_vec();
        assert!(axis < base.len(), "concat: axis out of range");
        let mut sizes = Vec::with_capacity(parts.len());
        let mut axis_total = 0usize;
        for p in parts {
            let s = self.nodes[p.0].value.shape();
            assert_eq!(s.len(), base.len(), "concat: rank mismatch");
            for (d, (a, b)) in s.iter().zip(base.iter()).enumerate() {
                if d != axis {
                    assert_eq!(a, b, "concat: non-axis dim mismatch");
                }
            }
            sizes.push(s[axis]);
            axis_total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut shape = base.clone();
        shape[axis] = axis_total;
        let mut data = vec![F::zero(); outer * axis_total * inner];
        for o in 0..outer {
            let mut written = 0usize;
            for (p, sz) in parts.iter().zip(sizes.iter()) {
                let src = self.nodes[p.0].value.data();
                let src_off = o * sz * inner;
                let dst_off = o * axis_total * inner + written * inner;
                data[dst_off..dst_off + sz * inner]
                    .copy_from_slice(&src[src_off..src_off + sz * inner]);
                written += sz;
            }
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        self.push(
            Tensor::new(shape, data),
            rg,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
                outer,
                inner,
                sizes,
            },
        )
    }

    pub fn slice_cols(&mut self, x: Var, from: usize, to: usize) -> Var {
        let (rows, cols) = self.mat_dims(x, "slice_cols");
        assert!(from < to && to <= cols, "slice_cols: bad range {from}..{to}");
        let w = to - from;
        let mut data = vec![F::zero(); rows * w];
        for i in 0..rows {
            data[i * w..(i + 1) * w]
                .copy_from_slice(&self.nodes[x.0].value.data()[i * cols + from..i * cols + to]);
        }
        let rg = self.rg(x);
        self.push(
            Tensor::new(vec![rows, w], data),
            rg,
            Op::SliceCols {
                x,
                from,
                to,
                rows,
                cols,
            },
        )
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Var {
        let t = self.nodes[x.0].value.clone().reshaped(shape);
        let rg = self.rg(x);
        self.push(t, rg, Op::Reshape(x))
    }

    /// Row lookup: `table[N,D]` gathered at `indices` -> `[len(indices), D]`.
    /// Doubles as the embedding lookup (scatter-add on the way back).
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Var {
        let (n, d) = self.mat_dims(table, "gather_rows table");
        let mut data = vec![F::zero(); indices.len() * d];
        for (i, &idx) in indices.iter().enumerate() {
            assert!(idx < n, "gather_rows: index {idx} out of {n} rows");
            data[i * d..(i + 1) * d]
                .copy_from_slice(&self.nodes[table.0].value.data()[idx * d..(idx + 1) * d]);
        }
        let rg = self.rg(table);
        self.push(
            Tensor::new(vec![indices.len(), d], data),
            rg,
            Op::GatherRows {
                table,
                indices: indices.to_vec(),
                dim: d,
            },
        )
    }

    // ── normalization ────────────────────────────────────────────────

    /// Numerically-stabilized softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Var {
        let shape = self.nodes[x.0].value.shape().to_vec();
        assert!(axis < shape.len(), "softmax: axis out of range");
        let outer: usize = shape[..axis].iter().product();
        let axis_len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.nodes[x.0].value.data();
        let mut data = vec![F::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let mut max = F::neg_infinity();
                for k in 0..axis_len {
                    let v = src[o * axis_len * inner + k * inner + i];
                    if v > max {
                        max = v;
                    }
                }
                let mut denom = F::zero();
                for k in 0..axis_len {
                    let idx = o * axis_len * inner + k * inner + i;
                    let e = (src[idx] - max).exp();
                    data[idx] = e;
                    denom += e;
                }
                for k in 0..axis_len {
                    let idx = o * axis_len * inner + k * inner + i;
                    data[idx] = data[idx] / denom;
                }
            }
        }
        let rg = self.rg(x);
        self.push(
            Tensor::new(shape, data),
            rg,
            Op::Softmax {
                x,
                outer,
                axis_len,
                inner,
            },
        )
    }

    /// Last-axis layer normalization with affine gain/bias.
    pub fn layernorm(&mut self, x: Var, gain: Var, bias: Var, eps: F) -> Var {
        let shape = self.nodes[x.0].value.shape().to_vec();
        let d = *shape.last().expect("layernorm: rank >= 1");
        assert_eq!(self.nodes[gain.0].value.len(), d, "layernorm: gain length");
        assert_eq!(self.nodes[bias.0].value.len(), d, "layernorm: bias length");
        let rows = self.nodes[x.0].value.len() / d;
        let src = self.nodes[x.0].value.data();
        let g = self.nodes[gain.0].value.data();
        let b = self.nodes[bias.0].value.data();
        let mut data = vec![F::zero(); src.len()];
        let mut normed = vec![F::zero(); src.len()];
        let mut inv_std = vec![F::zero(); rows];
        let dn = F::c(d as f64);
        for r in 0..rows {
            let row = &src[r * d..(r + 1) * d];
            let mut mean = F::zero();
            for v in row {
                mean += *v;
            }
            mean = mean / dn;
            let mut var = F::zero();
            for v in row {
                let dv = *v - mean;
                var += dv * dv;
            }
            var = var / dn;
            let is = F::one() / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let xh = (row[j] - mean) * is;
                normed[r * d + j] = xh;
                data[r * d + j] = g[j] * xh + b[j];
            }
        }
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        self.push(
            Tensor::new(shape, data),
            rg,
            Op::LayerNorm {
                x,
                gain,
                bias,
                eps,
                normed,
                inv_std,
            },
        )
    }

    // ── spatial ──────────────────────────────────────────────────────

    /// Zero-padded 2-D convolution: input `[Cin,H,W]`, weight `[Cout,Cin,kh,kw]`,
    /// bias `[Cout]`, stride 1 or 2.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, stride: usize, pad: usize) -> Var {
        let ishape = self.nodes[input.0].value.shape().to_vec();
        let wshape = self.nodes[weight.0].value.shape().to_vec();
        assert_eq!(ishape.len(), 3, "conv2d: input must be [C,H,W]");
        assert_eq!(wshape.len(), 4, "conv2d: weight must be [Cout,Cin,kh,kw]");
        assert_eq!(ishape[0], wshape[1], "conv2d: channel mismatch");
        let dims = ConvDims::new(
            ishape[0], ishape[1], ishape[2], wshape[0], wshape[2], wshape[3], stride, pad,
        );
        assert_eq!(self.nodes[bias.0].value.len(), dims.c_out, "conv2d: bias length");
        let cols = kernels::im2col(self.nodes[input.0].value.data(), &dims);
        // out[c_out, p] = weight_flat[c_out, patch] . cols[p, patch]
        let mut data = kernels::matmul_nt(
            self.nodes[weight.0].value.data(),
            &cols,
            dims.c_out,
            dims.patch_len(),
            dims.out_positions(),
        );
        let p = dims.out_positions();
        for co in 0..dims.c_out {
            let bv = self.nodes[bias.0].value.data()[co];
            for v in &mut data[co * p..(co + 1) * p] {
                *v += bv;
            }
        }
        let rg = self.rg(input) || self.rg(weight) || self.rg(bias);
        self.push(
            Tensor::new(vec![dims.c_out, dims.h_out, dims.w_out], data),
            rg,
            Op::Conv2d {
                input,
                weight,
                bias,
                dims,
                cols,
            },
        )
    }

    /// 2x2 max pooling with stride 2 (floor on odd extents).
    pub fn maxpool2(&mut self, x: Var) -> Var {
        let s = self.nodes[x.0].value.shape().to_vec();
        assert_eq!(s.len(), 3, "maxpool2: input must be [C,H,W]");
        let (c, h, w) = (s[0], s[1], s[2]);
        let (ho, wo) = (h / 2, w / 2);
        let src = self.nodes[x.0].value.data();
        let mut data = vec![F::zero(); c * ho * wo];
        let mut argmax = vec![0usize; c * ho * wo];
        for ch in 0..c {
            for i in 0..ho {
                for j in 0..wo {
                    let mut best = F::neg_infinity();
                    let mut arg = 0usize;
                    for di in 0..2 {
                        for dj in 0..2 {
                            let idx = ch * h * w + (2 * i + di) * w + (2 * j + dj);
                            if src[idx] > best {
                                best = src[idx];
                                arg = idx;
                            }
                        }
                    }
                    data[ch * ho * wo + i * wo + j] = best;
                    argmax[ch * ho * wo + i * wo + j] = arg;
                }
            }
        }
        let rg = self.rg(x);
        self.push(
            Tensor::new(vec![c, ho, wo], data),
            rg,
            Op::MaxPool2 { x, c, h, w, argmax },
        )
    }

    /// Nearest-neighbor 2x upsampling.
    pub fn upsample2(&mut self, x: Var) -> Var {
        let s = self.nodes[x.0].value.shape().to_vec();
        assert_eq!(s.len(), 3, "upsample2: input must be [C,H,W]");
        let (c, h, w) = (s[0], s[1], s[2]);
        let src = self.nodes[x.0].value.data();
        let mut data = vec![F::zero(); c * 4 * h * w];
        let (ho, wo) = (2 * h, 2 * w);
        for ch in 0..c {
            for i in 0..ho {
                for j in 0..wo {
                    data[ch * ho * wo + i * wo + j] = src[ch * h * w + (i / 2) * w + (j / 2)];
                }
            }
        }
        let rg = self.rg(x);
        self.push(
            Tensor::new(vec![c, ho, wo], data),
            rg,
            Op::Upsample2 { x, c, h, w },
        )
    }

    /// Per-position sum of the row maximum and column maximum of each channel.
    /// Subgradients route to the (first) argmax positions.
    pub fn center_pool(&mut self, x: Var) -> Var {
        let s = self.nodes[x.0].value.shape().to_vec();
        assert_eq!(s.len(), 3, "center_pool: input must be [C,H,W]");
        let (c, h, w) = (s[0], s[1], s[2]);
        let (data, row_arg, col_arg) = kernels::center_pool(self.nodes[x.0].value.data(), c, h, w);
        let rg = self.rg(x);
        self.push(
            Tensor::new(vec![c, h, w], data),
            rg,
            Op::CenterPool {
                x,
                c,
                h,
                w,
                row_arg,
                col_arg,
            },
        )
    }

    // ── fused losses ─────────────────────────────────────────────────

    /// Sum over `selected` positions of -log softmax(logits)[i, targets[i]].
    pub fn cross_entropy_sum(&mut self, logits: Var, targets: &[usize], selected: &[bool]) -> Var {
        let (l, v) = self.mat_dims(logits, "cross_entropy_sum logits");
        assert_eq!(targets.len(), l, "cross_entropy_sum: target length");
        assert_eq!(selected.len(), l, "cross_entropy_sum: mask length");
        let src = self.nodes[logits.0].value.data();
        let mut probs = vec![F::zero(); l * v];
        let mut loss = F::zero();
        for i in 0..l {
            let row = &src[i * v..(i + 1) * v];
            let mut max = F::neg_infinity();
            for x in row {
                if *x > max {
                    max = *x;
                }
            }
            let mut denom = F::zero();
            for j in 0..v {
                let e = (row[j] - max).exp();
                probs[i * v + j] = e;
                denom += e;
            }
            for j in 0..v {
                probs[i * v + j] = probs[i * v + j] / denom;
            }
            if selected[i] {
                assert!(targets[i] < v, "cross_entropy_sum: target id out of range");
                let p = probs[i * v + targets[i]];
                loss += -(p.max(F::c(1e-30))).ln();
            }
        }
        let rg = self.rg(logits);
        self.push(
            Tensor::scalar(loss),
            rg,
            Op::CrossEntropySum {
                logits,
                targets: targets.to_vec(),
                selected: selected.to_vec(),
                probs,
            },
        )
    }

    /// Sum over masked elements of smooth-L1(pred - gt):
    /// 0.5 d^2 for |d| < 1, |d| - 0.5 otherwise.
    pub fn smooth_l1_sum(&mut self, pred: Var, gt: Var, mask: &[F]) -> Var {
        self.same_shape(pred, gt, "smooth_l1_sum");
        assert_eq!(self.nodes[pred.0].value.len(), mask.len(), "smooth_l1_sum: mask length");
        let half = F::c(0.5);
        let mut loss = F::zero();
        for ((p, g), m) in self.nodes[pred.0]
            .value
            .iter()
            .zip(self.nodes[gt.0].value.iter())
            .zip(mask.iter())
        {
            if *m == F::zero() {
                continue;
            }
            let d = *p - *g;
            let a = d.abs();
            let v = if a < F::one() { half * d * d } else { a - half };
            loss += *m * v;
        }
        let rg = self.rg(pred) || self.rg(gt);
        self.push(
            Tensor::scalar(loss),
            rg,
            Op::SmoothL1Sum {
                pred,
                gt,
                mask: mask.to_vec(),
            },
        )
    }

    // ── backward ─────────────────────────────────────────────────────

    fn acc(&mut self, v: Var, contrib: &[F]) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let n = self.nodes[v.0].value.len();
        debug_assert_eq!(contrib.len(), n);
        match &mut self.nodes[v.0].grad {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(contrib.iter()) {
                    *gi += *ci;
                }
            }
            None => self.nodes[v.0].grad = Some(contrib.to_vec()),
        }
    }

    /// Reverse sweep from a scalar loss. Gradients accumulate across shared
    /// subexpressions; calling twice accumulates again (fresh graphs per step
    /// are the expected usage).
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(
            self.nodes[loss.0].value.len(),
            1,
            "backward: loss must be scalar"
        );
        if self.nodes[loss.0].grad.is_none() {
            self.nodes[loss.0].grad = Some(vec![F::one()]);
        }
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let d_out = match self.nodes[idx].grad.clone() {
                Some(g) => g,
                None => continue,
            };
            self.backward_op(idx, &d_out);
        }
    }

    fn backward_op(&mut self, idx: usize, d_out: &[F]) {
        // The op is moved out and back to satisfy the borrow checker without
        // cloning cached buffers.
        let op = std::mem::replace(&mut self.nodes[idx].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc(*a, d_out);
                self.acc(*b, d_out);
            }
            Op::Sub(a, b) => {
                self.acc(*a, d_out);
                let neg: Vec<F> = d_out.iter().map(|v| -*v).collect();
                self.acc(*b, &neg);
            }
            Op::Mul(a, b) => {
                let da: Vec<F> = d_out
                    .iter()
                    .zip(self.nodes[b.0].value.iter())
                    .map(|(d, v)| *d * *v)
                    .collect();
                let db: Vec<F> = d_out
                    .iter()
                    .zip(self.nodes[a.0].value.iter())
                    .map(|(d, v)| *d * *v)
                    .collect();
                self.acc(*a, &da);
                self.acc(*b, &db);
            }
            Op::Scale(x, c) => {
                let dx: Vec<F> = d_out.iter().map(|d| *d * *c).collect();
                self.acc(*x, &dx);
            }
            Op::Relu(x) => {
                let dx: Vec<F> = d_out
                    .iter()
                    .zip(self.nodes[x.0].value.iter())
                    .map(|(d, v)| if *v > F::zero() { *d } else { F::zero() })
                    .collect();
                self.acc(*x, &dx);
            }
            Op::Sigmoid(x) => {
                let dx: Vec<F> = d_out
                    .iter()
                    .zip(self.nodes[idx].value.iter())
                    .map(|(d, y)| *d * *y * (F::one() - *y))
                    .collect();
                self.acc(*x, &dx);
            }
            Op::Exp(x) => {
                let dx: Vec<F> = d_out
                    .iter()
                    .zip(self.nodes[idx].value.iter())
                    .map(|(d, y)| *d * *y)
                    .collect();
                self.acc(*x, &dx);
            }
            Op::Log(x) => {
                let dx: Vec<F> = d_out
                    .iter()
                    .zip(self.nodes[x.0].value.iter())
                    .map(|(d, v)| *d / *v)
                    .collect();
                self.acc(*x, &dx);
            }
            Op::Clamp(x, lo, hi) => {
                let dx: Vec<F> = d_out
                    .iter()
                    .zip(self.nodes[x.0].value.iter())
                    .map(|(d, v)| if *v > *lo && *v < *hi { *d } else { F::zero() })
                    .collect();
                self.acc(*x, &dx);
            }
            Op::Matmul { a, b, m, k, n } => {
                if self.rg(*a) {
                    let mut da = vec![F::zero(); m * k];
                    // d_a = d_out @ b^T
                    let bdat = self.nodes[b.0].value.data();
                    for i in 0..*m {
                        for p in 0..*k {
                            let mut acc = F::zero();
                            for j in 0..*n {
                                acc += d_out[i * n + j] * bdat[p * n + j];
                            }
                            da[i * k + p] = acc;
                        }
                    }
                    self.acc(*a, &da);
                }
                if self.rg(*b) {
                    let mut db = vec![F::zero(); k * n];
                    let adat = self.nodes[a.0].value.data();
                    kernels::matmul_tn_acc(adat, d_out, &mut db, *m, *k, *n);
                    self.acc(*b, &db);
                }
            }
            Op::MatmulNt { a, b, m, k, n } => {
                if self.rg(*a) {
                    // d_a = d_out @ b
                    let da = kernels::matmul(d_out, self.nodes[b.0].value.data(), *m, *n, *k);
                    self.acc(*a, &da);
                }
                if self.rg(*b) {
                    // d_b = d_out^T @ a
                    let mut db = vec![F::zero(); n * k];
                    kernels::matmul_tn_acc(d_out, self.nodes[a.0].value.data(), &mut db, *m, *n, *k);
                    self.acc(*b, &db);
                }
            }
            Op::AddRow(mat, row) => {
                self.acc(*mat, d_out);
                if self.rg(*row) {
                    let c = self.nodes[row.0].value.len();
                    let r = d_out.len() / c;
                    let mut dr = vec![F::zero(); c];
                    for i in 0..r {
                        for j in 0..c {
                            dr[j] += d_out[i * c + j];
                        }
                    }
                    self.acc(*row, &dr);
                }
            }
            Op::SumAll(x) => {
                let dx = vec![d_out[0]; self.nodes[x.0].value.len()];
                self.acc(*x, &dx);
            }
            Op::Concat {
                parts,
                axis: _,
                outer,
                inner,
                sizes,
            } => {
                let total: usize = sizes.iter().sum();
                for (pi, (p, sz)) in parts.iter().zip(sizes.iter()).enumerate() {
                    if !self.rg(*p) {
                        continue;
                    }
                    let offset: usize = sizes[..pi].iter().sum();
                    let mut dp = vec![F::zero(); outer * sz * inner];
                    for o in 0..*outer {
                        let src = o * total * inner + offset * inner;
                        let dst = o * sz * inner;
                        dp[dst..dst + sz * inner].copy_from_slice(&d_out[src..src + sz * inner]);
                    }
                    self.acc(*p, &dp);
                }
            }
            Op::SliceCols {
                x,
                from,
                to,
                rows,
                cols,
            } => {
                if self.rg(*x) {
                    let w = to - from;
                    let mut dx = vec![F::zero(); rows * cols];
                    for i in 0..*rows {
                        dx[i * cols + from..i * cols + to]
                            .copy_from_slice(&d_out[i * w..(i + 1) * w]);
                    }
                    self.acc(*x, &dx);
                }
            }
            Op::Reshape(x) => {
                self.acc(*x, d_out);
            }
            Op::GatherRows {
                table,
                indices,
                dim,
            } => {
                if self.rg(*table) {
                    let mut dt = vec![F::zero(); self.nodes[table.0].value.len()];
                    for (i, &idx) in indices.iter().enumerate() {
                        for j in 0..*dim {
                            dt[idx * dim + j] += d_out[i * dim + j];
                        }
                    }
                    self.acc(*table, &dt);
                }
            }
            Op::Softmax {
                x,
                outer,
                axis_len,
                inner,
            } => {
                if self.rg(*x) {
                    let y = self.nodes[idx].value.data();
                    let mut dx = vec![F::zero(); y.len()];
                    for o in 0..*outer {
                        for i in 0..*inner {
                            let mut dot = F::zero();
                            for k in 0..*axis_len {
                                let p = o * axis_len * inner + k * inner + i;
                                dot += d_out[p] * y[p];
                            }
                            for k in 0..*axis_len {
                                let p = o * axis_len * inner + k * inner + i;
                                dx[p] = y[p] * (d_out[p] - dot);
                            }
                        }
                    }
                    self.acc(*x, &dx);
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                eps: _,
                normed,
                inv_std,
            } => {
                let d = self.nodes[gain.0].value.len();
                let rows = normed.len() / d;
                let g = self.nodes[gain.0].value.data().to_vec();
                if self.rg(*x) {
                    let dn = F::c(d as f64);
                    let mut dx = vec![F::zero(); normed.len()];
                    for r in 0..rows {
                        let mut mean_dxh = F::zero();
                        let mut mean_dxh_xh = F::zero();
                        for j in 0..d {
                            let dxh = d_out[r * d + j] * g[j];
                            mean_dxh += dxh;
                            mean_dxh_xh += dxh * normed[r * d + j];
                        }
                        mean_dxh = mean_dxh / dn;
                        mean_dxh_xh = mean_dxh_xh / dn;
                        for j in 0..d {
                            let dxh = d_out[r * d + j] * g[j];
                            dx[r * d + j] =
                                inv_std[r] * (dxh - mean_dxh - normed[r * d + j] * mean_dxh_xh);
                        }
                    }
                    self.acc(*x, &dx);
                }
                if self.rg(*gain) {
                    let mut dg = vec![F::zero(); d];
                    for r in 0..rows {
                        for j in 0..d {
                            dg[j] += d_out[r * d + j] * normed[r * d + j];
                        }
                    }
                    self.acc(*gain, &dg);
                }
                if self.rg(*bias) {
                    let mut db = vec![F::zero(); d];
                    for r in 0..rows {
                        for j in 0..d {
                            db[j] += d_out[r * d + j];
                        }
                    }
                    self.acc(*bias, &db);
                }
            }
            Op::Conv2d {
                input,
                weight,
                bias,
                dims,
                cols,
            } => {
                let p = dims.out_positions();
                let kl = dims.patch_len();
                if self.rg(*weight) {
                    // d_w[c_out, patch] = d_out[c_out, p] @ cols[p, patch]
                    let dw = kernels::matmul(d_out, cols, dims.c_out, p, kl);
                    self.acc(*weight, &dw);
                }
                if self.rg(*bias) {
                    let mut db = vec![F::zero(); dims.c_out];
                    for co in 0..dims.c_out {
                        for j in 0..p {
                            db[co] += d_out[co * p + j];
                        }
                    }
                    self.acc(*bias, &db);
                }
                if self.rg(*input) {
                    // d_cols[p, patch] = d_out^T @ weight_flat
                    let mut dcols = vec![F::zero(); p * kl];
                    kernels::matmul_tn_acc(
                        d_out,
                        self.nodes[weight.0].value.data(),
                        &mut dcols,
                        dims.c_out,
                        p,
                        kl,
                    );
                    let mut dinput = vec![F::zero(); self.nodes[input.0].value.len()];
                    kernels::col2im_acc(&dcols, dims, &mut dinput);
                    self.acc(*input, &dinput);
                }
            }
            Op::MaxPool2 { x, argmax, .. } => {
                if self.rg(*x) {
                    let mut dx = vec![F::zero(); self.nodes[x.0].value.len()];
                    for (o, &src) in argmax.iter().enumerate() {
                        dx[src] += d_out[o];
                    }
                    self.acc(*x, &dx);
                }
            }
            Op::Upsample2 { x, c, h, w } => {
                if self.rg(*x) {
                    let mut dx = vec![F::zero(); c * h * w];
                    let (ho, wo) = (2 * h, 2 * w);
                    for ch in 0..*c {
                        for i in 0..ho {
                            for j in 0..wo {
                                dx[ch * h * w + (i / 2) * w + (j / 2)] +=
                                    d_out[ch * ho * wo + i * wo + j];
                            }
                        }
                    }
                    self.acc(*x, &dx);
                }
            }
            Op::CenterPool {
                x,
                c,
                h,
                w,
                row_arg,
                col_arg,
            } => {
                if self.rg(*x) {
                    let mut dx = vec![F::zero(); c * h * w];
                    for ch in 0..*c {
                        for i in 0..*h {
                            let mut row_sum = F::zero();
                            for j in 0..*w {
                                row_sum += d_out[ch * h * w + i * w + j];
                            }
                            dx[ch * h * w + i * w + row_arg[ch * h + i]] += row_sum;
                        }
                        for j in 0..*w {
                            let mut col_sum = F::zero();
                            for i in 0..*h {
                                col_sum += d_out[ch * h * w + i * w + j];
                            }
                            dx[ch * h * w + col_arg[ch * w + j] * w + j] += col_sum;
                        }
                    }
                    self.acc(*x, &dx);
                }
            }
            Op::CrossEntropySum {
                logits,
                targets,
                selected,
                probs,
            } => {
                if self.rg(*logits) {
                    let v = self.nodes[logits.0].value.shape()[1];
                    let seed = d_out[0];
                    let mut dl = vec![F::zero(); probs.len()];
                    for (i, sel) in selected.iter().enumerate() {
                        if !*sel {
                            continue;
                        }
                        for j in 0..v {
                            dl[i * v + j] = seed * probs[i * v + j];
                        }
                        dl[i * v + targets[i]] -= seed;
                    }
                    self.acc(*logits, &dl);
                }
            }
            Op::SmoothL1Sum { pred, gt, mask } => {
                let seed = d_out[0];
                let mut dp = vec![F::zero(); mask.len()];
                for (i, m) in mask.iter().enumerate() {
                    if *m == F::zero() {
                        continue;
                    }
                    let d = self.nodes[pred.0].value.data()[i] - self.nodes[gt.0].value.data()[i];
                    let slope = if d.abs() < F::one() {
                        d
                    } else if d > F::zero() {
                        F::one()
                    } else {
                        -F::one()
                    };
                    dp[i] = seed * *m * slope;
                }
                if self.rg(*pred) {
                    self.acc(*pred, &dp);
                }
                if self.rg(*gt) {
                    let dg: Vec<F> = dp.iter().map(|v| -*v).collect();
                    self.acc(*gt, &dg);
                }
            }
        }
        self.nodes[idx].op = op;
    }

    /// True when every gradient produced by the last backward pass is finite.
    pub fn grads_finite(&self) -> bool {
        self.nodes.iter().all(|n| match &n.grad {
            Some(g) => g.iter().all(|v| v.is_finite()),
            None => true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_graph() -> Graph<f64> {
        Graph::new()
    }

    #[test]
    fn add_mul_chain() {
        // f = (a*b) + a, df/da = b + 1, df/db = a
        let mut g = scalar_graph();
        let a = g.leaf(Tensor::scalar(3.0), true);
        let b = g.leaf(Tensor::scalar(5.0), true);
        let c = g.mul(a, b);
        let f = g.add(c, a);
        g.backward(f);
        assert_eq!(g.grad(a).unwrap(), &[6.0]);
        assert_eq!(g.grad(b).unwrap(), &[3.0]);
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // f = g(x) + g(x) with g(x) = 2x: df/dx = 4
        let mut g = scalar_graph();
        let x = g.leaf(Tensor::scalar(1.5), true);
        let y = g.scale(x, 2.0);
        let f = g.add(y, y);
        g.backward(f);
        assert_eq!(g.grad(x).unwrap(), &[4.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut g = scalar_graph();
        let x = g.leaf(Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0]), true);
        let y = g.softmax(x, 1);
        let v = g.value(y).data();
        let r0: f64 = v[0..3].iter().sum();
        let r1: f64 = v[3..6].iter().sum();
        assert!((r0 - 1.0).abs() < 1e-12);
        assert!((r1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_two_logits() {
        let mut g = scalar_graph();
        let x = g.leaf(Tensor::new(vec![1, 2], vec![1.0, 0.0]), false);
        let y = g.softmax(x, 1);
        let v = g.value(y).data();
        assert!((v[0] - 0.731058578).abs() < 1e-5);
        assert!((v[1] - 0.268941421).abs() < 1e-5);
    }

    #[test]
    fn layernorm_hand_case() {
        // x=[1,2,3], gain=1, bias=0 -> [-1.2247, 0, 1.2247]
        let mut g = scalar_graph();
        let x = g.leaf(Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]), false);
        let gain = g.constant(Tensor::from_vec(vec![1.0; 3]));
        let bias = g.constant(Tensor::from_vec(vec![0.0; 3]));
        let y = g.layernorm(x, gain, bias, 1e-9);
        let v = g.value(y).data();
        assert!((v[0] + 1.224744).abs() < 1e-4);
        assert!(v[1].abs() < 1e-9);
        assert!((v[2] - 1.224744).abs() < 1e-4);
    }

    #[test]
    fn layernorm_constant_vector_is_zero() {
        let mut g = scalar_graph();
        let x = g.leaf(Tensor::new(vec![1, 4], vec![7.0; 4]), false);
        let gain = g.constant(Tensor::from_vec(vec![1.0; 4]));
        let bias = g.constant(Tensor::from_vec(vec![0.0; 4]));
        let y = g.layernorm(x, gain, bias, 1e-5);
        assert!(g.value(y).data().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn center_pool_single_element() {
        let mut g = scalar_graph();
        let x = g.leaf(Tensor::new(vec![1, 1, 1], vec![3.5]), false);
        let y = g.center_pool(x);
        assert_eq!(g.value(y).data(), &[7.0]);
    }

    #[test]
    fn center_pool_constant_map() {
        let mut g = scalar_graph();
        let x = g.leaf(Tensor::new(vec![1, 3, 3], vec![2.0; 9]), false);
        let y = g.center_pool(x);
        assert!(g.value(y).data().iter().all(|v| (*v - 4.0).abs() < 1e-12));
    }

    #[test]
    fn conv2d_identity() {
        // 1x1 kernel with weight 1, bias 0 reproduces the input.
        let mut g = scalar_graph();
        let x = g.leaf(Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]), true);
        let w = g.leaf(Tensor::new(vec![1, 1, 1, 1], vec![1.0]), true);
        let b = g.leaf(Tensor::from_vec(vec![0.0]), true);
        let y = g.conv2d(x, w, b, 1, 0);
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
        let s = g.sum_all(y);
        g.backward(s);
        assert_eq!(g.grad(w).unwrap(), &[10.0]);
        assert_eq!(g.grad(b).unwrap(), &[4.0]);
        assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn gather_rows_scatter_adds() {
        let mut g = scalar_graph();
        let t = g.leaf(Tensor::new(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), true);
        let y = g.gather_rows(t, &[1, 1, 2]);
        let s = g.sum_all(y);
        g.backward(s);
        assert_eq!(g.grad(t).unwrap(), &[0.0, 0.0, 2.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    fn smooth_l1_values() {
        let mut g = scalar_graph();
        let p = g.leaf(Tensor::from_vec(vec![0.0, 0.5, 2.0]), true);
        let t = g.constant(Tensor::from_vec(vec![0.0, 0.0, 0.0]));
        let l = g.smooth_l1_sum(p, t, &[1.0, 1.0, 1.0]);
        // 0 + 0.125 + 1.5
        assert!((g.scalar_value(l) - 1.625).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_uniform_is_log_v() {
        let mut g = scalar_graph();
        let logits = g.leaf(Tensor::new(vec![1, 8], vec![0.0; 8]), true);
        let l = g.cross_entropy_sum(logits, &[3], &[true]);
        assert!((g.scalar_value(l) - (8.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn maxpool_routes_gradient() {
        let mut g = scalar_graph();
        let x = g.leaf(Tensor::new(vec![1, 2, 2], vec![1.0, 5.0, 3.0, 2.0]), true);
        let y = g.maxpool2(x);
        assert_eq!(g.value(y).data(), &[5.0]);
        let s = g.sum_all(y);
        g.backward(s);
        assert_eq!(g.grad(x).unwrap(), &[0.0, 1.0, 0.0, 0.0]);
    }
}
