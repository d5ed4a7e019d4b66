//! Minimal reverse-mode automatic differentiation.
//!
//! A [`Tape`] records vector-valued operations eagerly; [`Tape::backward`]
//! replays them in reverse to accumulate gradients for every node. Values
//! are flat `f64` vectors; matrices enter as flattened leaves consumed by
//! [`Tape::matvec`]. All math is double precision so finite-difference
//! checks are meaningful.

pub mod nn;

use ndarray::{Array1, ArrayView1};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    /// y = W x with W stored flat row-major in a leaf of length rows*cols.
    MatVec {
        w: Var,
        x: Var,
        rows: usize,
        cols: usize,
    },
    Concat(Vec<Var>),
    Slice {
        src: Var,
        start: usize,
    },
    Gather {
        src: Var,
        indices: Vec<usize>,
    },
    Dot(Var, Var),
    Softmax(Var),
    LogSumExp(Var),
    Sum(Var),
    /// y = sum_i weights[i] * vectors[i]
    WeightedSum {
        weights: Var,
        vectors: Vec<Var>,
    },
    /// Elementwise max over vectors; gradient flows to the first argmax.
    MaxPool(Vec<Var>),
}

struct Node {
    value: Array1<f64>,
    op: Op,
}

/// Gradients of one scalar output with respect to every tape node.
pub struct Gradients {
    grad: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> &Array1<f64> {
        &self.grad[v.0]
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> ArrayView1<'_, f64> {
        self.nodes[v.0].value.view()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].value.len(), 1);
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, value: Array1<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Inserts a constant or parameter leaf.
    pub fn leaf(&mut self, value: Array1<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn leaf_slice(&mut self, value: &[f64]) -> Var {
        self.leaf(Array1::from_vec(value.to_vec()))
    }

    pub fn zeros(&mut self, len: usize) -> Var {
        self.leaf(Array1::zeros(len))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = &self.nodes[a.0].value + &self.nodes[b.0].value;
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = &self.nodes[a.0].value - &self.nodes[b.0].value;
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = &self.nodes[a.0].value * &self.nodes[b.0].value;
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| x * c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn matvec(&mut self, w: Var, rows: usize, cols: usize, x: Var) -> Var {
        let wv = &self.nodes[w.0].value;
        let xv = &self.nodes[x.0].value;
        assert_eq!(wv.len(), rows * cols, "matvec: weight length mismatch");
        assert_eq!(xv.len(), cols, "matvec: input length mismatch");
        let mut out = Array1::zeros(rows);
        for i in 0..rows {
            let row = wv.slice(ndarray::s![i * cols..(i + 1) * cols]);
            out[i] = row.dot(xv);
        }
        self.push(out, Op::MatVec { w, x, rows, cols })
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let total: usize = parts.iter().map(|p| self.nodes[p.0].value.len()).sum();
        let mut v = Array1::zeros(total);
        let mut at = 0;
        for p in parts {
            let pv = &self.nodes[p.0].value;
            v.slice_mut(ndarray::s![at..at + pv.len()]).assign(pv);
            at += pv.len();
        }
        self.push(v, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, src: Var, start: usize, len: usize) -> Var {
        let v = self.nodes[src.0]
            .value
            .slice(ndarray::s![start..start + len])
            .to_owned();
        self.push(v, Op::Slice { src, start })
    }

    pub fn gather(&mut self, src: Var, indices: &[usize]) -> Var {
        let sv = &self.nodes[src.0].value;
        let v = Array1::from_iter(indices.iter().map(|&i| sv[i]));
        self.push(
            v,
            Op::Gather {
                src,
                indices: indices.to_vec(),
            },
        )
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a.0].value.dot(&self.nodes[b.0].value);
        self.push(ndarray::arr1(&[v]), Op::Dot(a, b))
    }

    /// Numerically stable softmax over the whole vector.
    pub fn softmax(&mut self, a: Var) -> Var {
        let v = stable_softmax(self.nodes[a.0].value.view());
        self.push(v, Op::Softmax(a))
    }

    /// Numerically stable log(sum(exp(x))) as a length-1 node.
    pub fn logsumexp(&mut self, a: Var) -> Var {
        let v = stable_logsumexp(self.nodes[a.0].value.view());
        self.push(ndarray::arr1(&[v]), Op::LogSumExp(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.sum();
        self.push(ndarray::arr1(&[v]), Op::Sum(a))
    }

    pub fn weighted_sum(&mut self, weights: Var, vectors: &[Var]) -> Var {
        let wv = &self.nodes[weights.0].value;
        assert_eq!(wv.len(), vectors.len(), "weighted_sum: arity mismatch");
        let dim = self.nodes[vectors[0].0].value.len();
        let mut out = Array1::zeros(dim);
        for (i, vec) in vectors.iter().enumerate() {
            out.scaled_add(wv[i], &self.nodes[vec.0].value);
        }
        self.push(
            out,
            Op::WeightedSum {
                weights,
                vectors: vectors.to_vec(),
            },
        )
    }

    pub fn max_pool(&mut self, vectors: &[Var]) -> Var {
        assert!(!vectors.is_empty(), "max_pool over no vectors");
        let mut out = self.nodes[vectors[0].0].value.clone();
        for v in &vectors[1..] {
            let vv = &self.nodes[v.0].value;
            for (o, &x) in out.iter_mut().zip(vv.iter()) {
                if x > *o {
                    *o = x;
                }
            }
        }
        self.push(out, Op::MaxPool(vectors.to_vec()))
    }

    /// Accumulates d`loss`/d`node` for every node. `loss` must be scalar.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.nodes[loss.0].value.len(), 1, "loss must be scalar");
        let mut grad: Vec<Array1<f64>> = self
            .nodes
            .iter()
            .map(|n| Array1::zeros(n.value.len()))
            .collect();
        grad[loss.0][0] = 1.0;

        for i in (0..=loss.0).rev() {
            if grad[i].iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = grad[i].clone();
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    grad[a.0] += &g;
                    grad[b.0] += &g;
                }
                Op::Sub(a, b) => {
                    grad[a.0] += &g;
                    grad[b.0] -= &g;
                }
                Op::Mul(a, b) => {
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    grad[a.0].scaled_add(1.0, &(&g * &bv));
                    grad[b.0].scaled_add(1.0, &(&g * &av));
                }
                Op::Scale(a, c) => {
                    grad[a.0].scaled_add(*c, &g);
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[i].value;
                    grad[a.0].scaled_add(1.0, &(&g * &(y * &(1.0 - y))));
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[i].value;
                    grad[a.0].scaled_add(1.0, &(&g * &(1.0 - y * y)));
                }
                Op::MatVec { w, x, rows, cols } => {
                    let xv = self.nodes[x.0].value.clone();
                    let wv = self.nodes[w.0].value.clone();
                    {
                        let gw = &mut grad[w.0];
                        for r in 0..*rows {
                            let gr = g[r];
                            if gr == 0.0 {
                                continue;
                            }
                            for c in 0..*cols {
                                gw[r * cols + c] += gr * xv[c];
                            }
                        }
                    }
                    let gx = &mut grad[x.0];
                    for r in 0..*rows {
                        let gr = g[r];
                        if gr == 0.0 {
                            continue;
                        }
                        for c in 0..*cols {
                            gx[c] += gr * wv[r * cols + c];
                        }
                    }
                }
                Op::Concat(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.len();
                        let piece = g.slice(ndarray::s![at..at + len]).to_owned();
                        grad[p.0] += &piece;
                        at += len;
                    }
                }
                Op::Slice { src, start } => {
                    let len = g.len();
                    grad[src.0]
                        .slice_mut(ndarray::s![*start..start + len])
                        .scaled_add(1.0, &g);
                }
                Op::Gather { src, indices } => {
                    for (k, &idx) in indices.iter().enumerate() {
                        grad[src.0][idx] += g[k];
                    }
                }
                Op::Dot(a, b) => {
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    grad[a.0].scaled_add(g[0], &bv);
                    grad[b.0].scaled_add(g[0], &av);
                }
                Op::Softmax(a) => {
                    let y = &self.nodes[i].value;
                    let dot = g.dot(y);
                    grad[a.0].scaled_add(1.0, &(y * &(&g - dot)));
                }
                Op::LogSumExp(a) => {
                    let soft = stable_softmax(self.nodes[a.0].value.view());
                    grad[a.0].scaled_add(g[0], &soft);
                }
                Op::Sum(a) => {
                    grad[a.0] += g[0];
                }
                Op::WeightedSum { weights, vectors } => {
                    let wv = self.nodes[weights.0].value.clone();
                    for (k, vec) in vectors.iter().enumerate() {
                        let vv = self.nodes[vec.0].value.clone();
                        grad[weights.0][k] += g.dot(&vv);
                        grad[vec.0].scaled_add(wv[k], &g);
                    }
                }
                Op::MaxPool(vectors) => {
                    let y = self.nodes[i].value.clone();
                    for (c, (&gc, &yc)) in g.iter().zip(y.iter()).enumerate() {
                        if gc == 0.0 {
                            continue;
                        }
                        for v in vectors {
                            if self.nodes[v.0].value[c] == yc {
                                grad[v.0][c] += gc;
                                break;
                            }
                        }
                    }
                }
            }
        }
        Gradients { grad }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn stable_softmax(x: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = x.mapv(|v| (v - max).exp());
    let sum = out.sum();
    out.mapv_inplace(|v| v / sum);
    out
}

pub(crate) fn stable_logsumexp(x: ArrayView1<'_, f64>) -> f64 {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + x.mapv(|v| (v - max).exp()).sum().ln()
}
