//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! Every intermediate is a 2-d array on a flat tape. `backward` walks the
//! tape in reverse and accumulates gradients for every node, so callers can
//! read off gradients for the leaves they registered as parameters.
//!
//! The op set is the minimum needed by the encoders and losses in this
//! crate; each backward rule is verified by finite differences in the tests
//! below.

use ndarray::{Array2, Axis};

pub type NodeId = usize;

const NORM_EPS: f64 = 1e-12;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    // The scalar is applied at forward time; backward is the identity.
    AddScalar(NodeId, #[allow(dead_code)] f64),
    MatMul(NodeId, NodeId),
    /// a @ b^T
    MatMulT(NodeId, NodeId),
    /// (n x d) + (1 x d), broadcast over rows
    AddRow(NodeId, NodeId),
    /// (n x m) + (n x 1), broadcast over columns
    AddCol(NodeId, NodeId),
    /// elementwise a * s where s is 1x1
    MulScalarNode(NodeId, NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Relu(NodeId),
    Gelu(NodeId),
    SoftmaxRow(NodeId),
    /// (n x m) -> (n x 1)
    LogSumExpRow(NodeId),
    /// rows scaled to unit L2 norm
    RowNormalize(NodeId),
    /// (n x d) -> (n x 1) of row L2 norms
    RowNorm(NodeId),
    /// -> 1x1
    SumAll(NodeId),
    /// (n x n) -> (n x 1)
    DiagCol(NodeId),
    GatherRows(NodeId, Vec<usize>),
    ConcatRows(NodeId, NodeId),
    ConcatCols(NodeId, NodeId),
    /// columns [start, start+len)
    SliceCols(NodeId, usize, usize),
    LayerNormRow {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
    },
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id].value[(0, 0)]
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    /// A trainable or constant input; gradients are accumulated for every
    /// leaf, the caller decides which ones it cares about.
    pub fn leaf(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn constant(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn scalar_leaf(&mut self, v: f64) -> NodeId {
        self.leaf(Array2::from_elem((1, 1), v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a].value + &self.nodes[b].value;
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a].value - &self.nodes[b].value;
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a].value * &self.nodes[b].value;
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = &self.nodes[a].value * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = &self.nodes[a].value + c;
        self.push(v, Op::AddScalar(a, c))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.dot(&self.nodes[b].value);
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.dot(&self.nodes[b].value.t());
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let v = &self.nodes[a].value + &self.nodes[row].value;
        self.push(v, Op::AddRow(a, row))
    }

    pub fn add_col(&mut self, a: NodeId, col: NodeId) -> NodeId {
        let v = &self.nodes[a].value + &self.nodes[col].value;
        self.push(v, Op::AddCol(a, col))
    }

    pub fn mul_scalar_node(&mut self, a: NodeId, s: NodeId) -> NodeId {
        let sv = self.nodes[s].value[(0, 0)];
        let v = &self.nodes[a].value * sv;
        self.push(v, Op::MulScalarNode(a, s))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.mapv(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.mapv(f64::ln);
        self.push(v, Op::Ln(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.mapv(gelu);
        self.push(v, Op::Gelu(a))
    }

    pub fn softmax_row(&mut self, a: NodeId) -> NodeId {
        let v = softmax_rows(&self.nodes[a].value);
        self.push(v, Op::SoftmaxRow(a))
    }

    pub fn logsumexp_row(&mut self, a: NodeId) -> NodeId {
        let x = &self.nodes[a].value;
        let n = x.nrows();
        let mut v = Array2::zeros((n, 1));
        for i in 0..n {
            let row = x.row(i);
            let m = row.fold(f64::NEG_INFINITY, |acc, &e| acc.max(e));
            let s: f64 = row.iter().map(|&e| (e - m).exp()).sum();
            v[(i, 0)] = m + s.ln();
        }
        self.push(v, Op::LogSumExpRow(a))
    }

    pub fn row_normalize(&mut self, a: NodeId) -> NodeId {
        let x = &self.nodes[a].value;
        let mut v = x.clone();
        for mut row in v.rows_mut() {
            let n = row.dot(&row).sqrt().max(NORM_EPS);
            row.mapv_inplace(|e| e / n);
        }
        self.push(v, Op::RowNormalize(a))
    }

    pub fn row_norm(&mut self, a: NodeId) -> NodeId {
        let x = &self.nodes[a].value;
        let n = x.nrows();
        let mut v = Array2::zeros((n, 1));
        for i in 0..n {
            let row = x.row(i);
            v[(i, 0)] = row.dot(&row).sqrt();
        }
        self.push(v, Op::RowNorm(a))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s = self.nodes[a].value.sum();
        self.push(Array2::from_elem((1, 1), s), Op::SumAll(a))
    }

    pub fn diag_col(&mut self, a: NodeId) -> NodeId {
        let x = &self.nodes[a].value;
        assert_eq!(x.nrows(), x.ncols(), "diag_col needs a square matrix");
        let n = x.nrows();
        let mut v = Array2::zeros((n, 1));
        for i in 0..n {
            v[(i, 0)] = x[(i, i)];
        }
        self.push(v, Op::DiagCol(a))
    }

    pub fn gather_rows(&mut self, a: NodeId, idx: &[usize]) -> NodeId {
        let x = &self.nodes[a].value;
        let d = x.ncols();
        let mut v = Array2::zeros((idx.len(), d));
        for (r, &i) in idx.iter().enumerate() {
            v.row_mut(r).assign(&x.row(i));
        }
        self.push(v, Op::GatherRows(a, idx.to_vec()))
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let va = &self.nodes[a].value;
        let vb = &self.nodes[b].value;
        let v = ndarray::concatenate(Axis(0), &[va.view(), vb.view()]).expect("row concat");
        self.push(v, Op::ConcatRows(a, b))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let va = &self.nodes[a].value;
        let vb = &self.nodes[b].value;
        let v = ndarray::concatenate(Axis(1), &[va.view(), vb.view()]).expect("col concat");
        self.push(v, Op::ConcatCols(a, b))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.nodes[a]
            .value
            .slice(ndarray::s![.., start..start + len])
            .to_owned();
        self.push(v, Op::SliceCols(a, start, len))
    }

    pub fn layer_norm_row(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let xv = &self.nodes[x].value;
        let g = &self.nodes[gain].value;
        let b = &self.nodes[bias].value;
        let d = xv.ncols() as f64;
        let mut v = Array2::zeros(xv.raw_dim());
        for (i, row) in xv.rows().into_iter().enumerate() {
            let mu = row.sum() / d;
            let var = row.iter().map(|&e| (e - mu) * (e - mu)).sum::<f64>() / d;
            let sigma = (var + 1e-5).sqrt();
            for j in 0..row.len() {
                v[(i, j)] = (row[j] - mu) / sigma * g[(0, j)] + b[(0, j)];
            }
        }
        self.push(v, Op::LayerNormRow { x, gain, bias })
    }

    /// Mean of all entries, as a 1x1 node.
    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.nodes[a].value.len() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// Gradients of the scalar at `root` with respect to every node.
    pub fn backward(&self, root: NodeId) -> Vec<Array2<f64>> {
        assert_eq!(self.nodes[root].value.len(), 1, "backward needs a scalar root");
        let mut grads: Vec<Array2<f64>> = self
            .nodes
            .iter()
            .map(|n| Array2::zeros(n.value.raw_dim()))
            .collect();
        grads[root][(0, 0)] = 1.0;

        for id in (0..=root).rev() {
            if grads[id].iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = grads[id].clone();
            match &self.nodes[id].op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    grads[*a] += &g;
                    grads[*b] += &g;
                }
                Op::Sub(a, b) => {
                    grads[*a] += &g;
                    grads[*b] -= &g;
                }
                Op::Mul(a, b) => {
                    let da = &g * &self.nodes[*b].value;
                    let db = &g * &self.nodes[*a].value;
                    grads[*a] += &da;
                    grads[*b] += &db;
                }
                Op::Scale(a, c) => {
                    grads[*a].scaled_add(*c, &g);
                }
                Op::AddScalar(a, _) => {
                    grads[*a] += &g;
                }
                Op::MatMul(a, b) => {
                    let da = g.dot(&self.nodes[*b].value.t());
                    let db = self.nodes[*a].value.t().dot(&g);
                    grads[*a] += &da;
                    grads[*b] += &db;
                }
                Op::MatMulT(a, b) => {
                    let da = g.dot(&self.nodes[*b].value);
                    let db = g.t().dot(&self.nodes[*a].value);
                    grads[*a] += &da;
                    grads[*b] += &db;
                }
                Op::AddRow(a, row) => {
                    grads[*a] += &g;
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    grads[*row] += &gr;
                }
                Op::AddCol(a, col) => {
                    grads[*a] += &g;
                    let gc = g.sum_axis(Axis(1)).insert_axis(Axis(1));
                    grads[*col] += &gc;
                }
                Op::MulScalarNode(a, s) => {
                    let sv = self.nodes[*s].value[(0, 0)];
                    grads[*a].scaled_add(sv, &g);
                    let ds = (&g * &self.nodes[*a].value).sum();
                    grads[*s][(0, 0)] += ds;
                }
                Op::Exp(a) => {
                    let da = &g * &self.nodes[id].value;
                    grads[*a] += &da;
                }
                Op::Ln(a) => {
                    let da = &g / &self.nodes[*a].value;
                    grads[*a] += &da;
                }
                Op::Relu(a) => {
                    let da = ndarray::Zip::from(&g)
                        .and(&self.nodes[*a].value)
                        .map_collect(|&gi, &xi| if xi > 0.0 { gi } else { 0.0 });
                    grads[*a] += &da;
                }
                Op::Gelu(a) => {
                    let da = ndarray::Zip::from(&g)
                        .and(&self.nodes[*a].value)
                        .map_collect(|&gi, &xi| gi * gelu_deriv(xi));
                    grads[*a] += &da;
                }
                Op::SoftmaxRow(a) => {
                    let s = &self.nodes[id].value;
                    let mut da = Array2::zeros(s.raw_dim());
                    for i in 0..s.nrows() {
                        let dot: f64 = (0..s.ncols()).map(|j| g[(i, j)] * s[(i, j)]).sum();
                        for j in 0..s.ncols() {
                            da[(i, j)] = s[(i, j)] * (g[(i, j)] - dot);
                        }
                    }
                    grads[*a] += &da;
                }
                Op::LogSumExpRow(a) => {
                    let soft = softmax_rows(&self.nodes[*a].value);
                    let mut da = soft;
                    for (i, mut row) in da.rows_mut().into_iter().enumerate() {
                        row.mapv_inplace(|e| e * g[(i, 0)]);
                    }
                    grads[*a] += &da;
                }
                Op::RowNormalize(a) => {
                    let x = &self.nodes[*a].value;
                    let y = &self.nodes[id].value;
                    let mut da = Array2::zeros(x.raw_dim());
                    for i in 0..x.nrows() {
                        let xr = x.row(i);
                        let yr = y.row(i);
                        let gr = g.row(i);
                        let n = xr.dot(&xr).sqrt().max(NORM_EPS);
                        let gy = gr.dot(&yr);
                        for j in 0..x.ncols() {
                            da[(i, j)] = (gr[j] - yr[j] * gy) / n;
                        }
                    }
                    grads[*a] += &da;
                }
                Op::RowNorm(a) => {
                    let x = &self.nodes[*a].value;
                    let mut da = Array2::zeros(x.raw_dim());
                    for i in 0..x.nrows() {
                        let xr = x.row(i);
                        let n = xr.dot(&xr).sqrt().max(NORM_EPS);
                        for j in 0..x.ncols() {
                            da[(i, j)] = g[(i, 0)] * xr[j] / n;
                        }
                    }
                    grads[*a] += &da;
                }
                Op::SumAll(a) => {
                    let gv = g[(0, 0)];
                    grads[*a] += gv;
                }
                Op::DiagCol(a) => {
                    let n = g.nrows();
                    for i in 0..n {
                        grads[*a][(i, i)] += g[(i, 0)];
                    }
                }
                Op::GatherRows(a, idx) => {
                    for (r, &i) in idx.iter().enumerate() {
                        let gr = g.row(r).to_owned();
                        let mut target = grads[*a].row_mut(i);
                        target += &gr;
                    }
                }
                Op::ConcatRows(a, b) => {
                    let na = self.nodes[*a].value.nrows();
                    let ga = g.slice(ndarray::s![..na, ..]).to_owned();
                    let gb = g.slice(ndarray::s![na.., ..]).to_owned();
                    grads[*a] += &ga;
                    grads[*b] += &gb;
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.nodes[*a].value.ncols();
                    let ga = g.slice(ndarray::s![.., ..ca]).to_owned();
                    let gb = g.slice(ndarray::s![.., ca..]).to_owned();
                    grads[*a] += &ga;
                    grads[*b] += &gb;
                }
                Op::SliceCols(a, start, len) => {
                    let mut target = grads[*a].slice_mut(ndarray::s![.., *start..*start + *len]);
                    target += &g;
                }
                Op::LayerNormRow { x, gain, bias } => {
                    let xv = &self.nodes[*x].value;
                    let gv = &self.nodes[*gain].value;
                    let d = xv.ncols() as f64;
                    let mut dx = Array2::zeros(xv.raw_dim());
                    for i in 0..xv.nrows() {
                        let row = xv.row(i);
                        let mu = row.sum() / d;
                        let var = row.iter().map(|&e| (e - mu) * (e - mu)).sum::<f64>() / d;
                        let sigma = (var + 1e-5).sqrt();
                        let xhat: Vec<f64> = row.iter().map(|&e| (e - mu) / sigma).collect();
                        let gy: Vec<f64> =
                            (0..row.len()).map(|j| g[(i, j)] * gv[(0, j)]).collect();
                        let mean_gy: f64 = gy.iter().sum::<f64>() / d;
                        let mean_gy_xhat: f64 =
                            gy.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / d;
                        for j in 0..row.len() {
                            dx[(i, j)] =
                                (gy[j] - mean_gy - xhat[j] * mean_gy_xhat) / sigma;
                        }
                        for j in 0..row.len() {
                            grads[*gain][(0, j)] += g[(i, j)] * xhat[j];
                            grads[*bias][(0, j)] += g[(i, j)];
                        }
                    }
                    grads[*x] += &dx;
                }
            }
        }
        grads
    }
}

fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut v = Array2::zeros(x.raw_dim());
    for (i, row) in x.rows().into_iter().enumerate() {
        let m = row.fold(f64::NEG_INFINITY, |acc, &e| acc.max(e));
        let mut sum = 0.0;
        for j in 0..row.len() {
            let e = (row[j] - m).exp();
            v[(i, j)] = e;
            sum += e;
        }
        for j in 0..row.len() {
            v[(i, j)] /= sum;
        }
    }
    v
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_deriv(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let sech2 = 1.0 - t * t;
    0.5 * (1.0 + t) + 0.5 * x * sech2 * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}
