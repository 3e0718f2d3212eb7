use ndarray::{concatenate, s, Axis};
use statrs::function::erf::erf;

use super::params::{Gradients, ParamId, ParamSet};
use super::Matrix;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Matrix),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Gelu(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    SliceRows(Var, usize, usize),
    Transpose(Var),
    MeanRows(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Matrix,
    },
}

struct Node {
    value: Option<Matrix>,
    op: Op,
    needs_grad: bool,
}

/// Tape of matrix operations over a borrowed parameter set.
pub struct Graph<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact (erf-based) GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + erf(x / SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / SQRT_2)) + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, parents: &[Var]) -> Var {
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("only parameter nodes borrow their value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, m: Matrix) -> Var {
        self.nodes.push(Node {
            value: Some(m),
            op: Op::Input,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: self.params.is_trainable(id),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b), &[a, b])
    }

    /// Adds a `1 × n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        debug_assert_eq!(self.shape(row).0, 1);
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row), &[a, row])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b), &[a, b])
    }

    /// Elementwise product with a constant (masks, dropout).
    pub fn mul_const(&mut self, a: Var, c: Matrix) -> Var {
        let v = self.value(a) * &c;
        self.push(v, Op::MulConst(a, c), &[a])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a) * s;
        self.push(v, Op::Scale(a, s), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a), &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(gelu);
        self.push(v, Op::Gelu(a), &[a])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let v = softmax_rows(self.value(a));
        self.push(v, Op::SoftmaxRows(a), &[a])
    }

    /// Row-wise layer normalization with `1 × n` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let n = xv.ncols() as f64;
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + eps).sqrt();
            row.mapv_inplace(|v| (v - mean) * is);
            inv_std.push(is);
        }
        let out = &xhat * self.value(gamma) + self.value(beta);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        )
    }

    /// Rows `ids` of `table`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut out = Matrix::zeros((ids.len(), t.ncols()));
        for (r, &i) in ids.iter().enumerate() {
            out.row_mut(r).assign(&t.row(i));
        }
        self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = concatenate(Axis(1), &views).expect("row counts agree");
        self.push(v, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = concatenate(Axis(0), &views).expect("column counts agree");
        self.push(v, Op::ConcatRows(parts.to_vec()), parts)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(v, Op::SliceCols(a, start, end), &[a])
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![start..end, ..]).to_owned();
        self.push(v, Op::SliceRows(a, start, end), &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().to_owned();
        self.push(v, Op::Transpose(a), &[a])
    }

    /// Column means as a `1 × n` row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let v = self
            .value(a)
            .mean_axis(Axis(0))
            .expect("non-empty")
            .insert_axis(Axis(0));
        self.push(v, Op::MeanRows(a), &[a])
    }

    /// Mean categorical cross-entropy of row-wise softmax(logits) against
    /// class indices. Returns a `1 × 1` node.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let probs = softmax_rows(self.value(logits));
        let n = targets.len() as f64;
        let loss = targets
            .iter()
            .enumerate()
            .map(|(r, &t)| -probs[[r, t]].max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
            / n;
        self.push(
            Matrix::from_elem((1, 1), loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        )
    }

    /// Backpropagates from a `1 × 1` node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::ones((1, 1)));
        let mut out = Gradients {
            grads: vec![None; self.params.len()],
        };

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let needs = |v: &Var| self.nodes[v.0].needs_grad;
            let acc = |v: Var, delta: Matrix, grads: &mut Vec<Option<Matrix>>| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => *existing += &delta,
                    slot @ None => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Input => {}
                Op::Param(id) => match &mut out.grads[id.index()] {
                    Some(existing) => *existing += &g,
                    slot @ None => *slot = Some(g),
                },
                Op::MatMul(a, b) => {
                    if needs(a) {
                        acc(*a, g.dot(&self.value(*b).t()), &mut grads);
                    }
                    if needs(b) {
                        acc(*b, self.value(*a).t().dot(&g), &mut grads);
                    }
                }
                Op::Add(a, b) => {
                    if needs(b) {
                        acc(*b, g.clone(), &mut grads);
                    }
                    acc(*a, g, &mut grads);
                }
                Op::AddRow(a, row) => {
                    if needs(row) {
                        acc(*row, g.sum_axis(Axis(0)).insert_axis(Axis(0)), &mut grads);
                    }
                    acc(*a, g, &mut grads);
                }
                Op::Mul(a, b) => {
                    if needs(a) {
                        acc(*a, &g * self.value(*b), &mut grads);
                    }
                    if needs(b) {
                        acc(*b, &g * self.value(*a), &mut grads);
                    }
                }
                Op::MulConst(a, c) => acc(*a, &g * c, &mut grads),
                Op::Scale(a, s) => acc(*a, g * *s, &mut grads),
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().expect("owned");
                    acc(*a, &g * &y.mapv(|y| y * (1.0 - y)), &mut grads);
                }
                Op::Tanh(a) => {
                    let y = node.value.as_ref().expect("owned");
                    acc(*a, &g * &y.mapv(|y| 1.0 - y * y), &mut grads);
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    acc(*a, &g * &x.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 }), &mut grads);
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    acc(*a, &g * &x.mapv(gelu_grad), &mut grads);
                }
                Op::SoftmaxRows(a) => {
                    let y = node.value.as_ref().expect("owned");
                    let mut d = &g * y;
                    for (mut drow, yrow) in d.rows_mut().into_iter().zip(y.rows()) {
                        let dot: f64 = drow.sum();
                        drow.zip_mut_with(&yrow, |dv, &yv| *dv -= yv * dot);
                    }
                    acc(*a, d, &mut grads);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    if needs(gamma) {
                        acc(*gamma, (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)), &mut grads);
                    }
                    if needs(beta) {
                        acc(*beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)), &mut grads);
                    }
                    if needs(x) {
                        let gx_hat = &g * self.value(*gamma);
                        let n = xhat.ncols() as f64;
                        let mut dx = gx_hat.clone();
                        for (r, mut row) in dx.rows_mut().into_iter().enumerate() {
                            let gh = gx_hat.row(r);
                            let xh = xhat.row(r);
                            let mean_g = gh.sum() / n;
                            let mean_gx = gh.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / n;
                            for (c, v) in row.iter_mut().enumerate() {
                                *v = inv_std[r] * (gh[c] - mean_g - xh[c] * mean_gx);
                            }
                        }
                        acc(*x, dx, &mut grads);
                    }
                }
                Op::Gather { table, ids } => {
                    let mut d = Matrix::zeros(self.shape(*table));
                    for (r, &i) in ids.iter().enumerate() {
                        let mut dst = d.row_mut(i);
                        dst += &g.row(r);
                    }
                    acc(*table, d, &mut grads);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.shape(*p).1;
                        if needs(p) {
                            acc(*p, g.slice(s![.., start..start + w]).to_owned(), &mut grads);
                        }
                        start += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let h = self.shape(*p).0;
                        if needs(p) {
                            acc(*p, g.slice(s![start..start + h, ..]).to_owned(), &mut grads);
                        }
                        start += h;
                    }
                }
                Op::SliceCols(a, start, end) => {
                    let mut d = Matrix::zeros(self.shape(*a));
                    d.slice_mut(s![.., *start..*end]).assign(&g);
                    acc(*a, d, &mut grads);
                }
                Op::SliceRows(a, start, end) => {
                    let mut d = Matrix::zeros(self.shape(*a));
                    d.slice_mut(s![*start..*end, ..]).assign(&g);
                    acc(*a, d, &mut grads);
                }
                Op::Transpose(a) => acc(*a, g.t().to_owned(), &mut grads),
                Op::MeanRows(a) => {
                    let (rows, cols) = self.shape(*a);
                    let row = g.row(0).mapv(|v| v / rows as f64);
                    let d = row.broadcast((rows, cols)).expect("broadcast").to_owned();
                    acc(*a, d, &mut grads);
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                } => {
                    let n = targets.len() as f64;
                    let mut d = probs.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        d[[r, t]] -= 1.0;
                    }
                    d *= g[[0, 0]] / n;
                    acc(*logits, d, &mut grads);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::finite_difference_grad;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
        let diff = (a - b).mapv(|v| v * v).sum().sqrt();
        let norm = a.mapv(|v| v * v).sum().sqrt() + b.mapv(|v| v * v).sum().sqrt();
        if norm == 0.0 {
            0.0
        } else {
            diff / norm
        }
    }

    /// Every op on one path into a scalar loss, checked against finite
    /// differences.
    #[test]
    fn all_ops_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut p = ParamSet::new();
        let table = p.add("table", random(&mut rng, 6, 4));
        let w = p.add("w", random(&mut rng, 4, 4));
        let b = p.add("b", random(&mut rng, 1, 4));
        let gamma = p.add("gamma", random(&mut rng, 1, 8));
        let beta = p.add("beta", random(&mut rng, 1, 8));
        let w2 = p.add("w2", random(&mut rng, 8, 3));
        let mask = random(&mut rng, 3, 4);

        let loss_fn = |p: &ParamSet| -> (f64, Gradients) {
            let mut g = Graph::new(p);
            let t = g.param(table);
            let x = g.gather(t, &[1, 3, 1]);
            let wv = g.param(w);
            let bv = g.param(b);
            let h = g.matmul(x, wv);
            let h = g.add_row(h, bv);
            let a = g.sigmoid(h);
            let c = g.tanh(h);
            let e = g.gelu(h);
            let r = g.relu(c);
            let m = g.mul(a, e);
            let m = g.mul_const(m, mask.clone());
            let m = g.add(m, r);
            let m = g.scale(m, 0.7);
            let left = g.slice_cols(m, 0, 2);
            let right = g.slice_cols(m, 2, 4);
            let sm = g.softmax_rows(left);
            let cat = g.concat_cols(&[sm, right, x]);
            let gv = g.param(gamma);
            let bev = g.param(beta);
            let ln = g.layer_norm(cat, gv, bev, 1e-5);
            let top = g.slice_rows(ln, 0, 1);
            let tt = g.transpose(top);
            let back = g.transpose(tt);
            let stacked = g.concat_rows(&[ln, back]);
            let mean = g.mean_rows(stacked);
            let all = g.concat_rows(&[stacked, mean]);
            let w2v = g.param(w2);
            let logits = g.matmul(all, w2v);
            let loss = g.cross_entropy(logits, &[0, 2, 1, 1, 0]);
            let value = g.value(loss)[[0, 0]];
            (value, g.backward(loss))
        };

        let (_, grads) = loss_fn(&p);
        for id in p.ids() {
            let numeric = finite_difference_grad(&p, id, 1e-5, |q| loss_fn(q).0);
            let analytic = grads.get(id).expect("gradient present");
            let err = rel_err(analytic, &numeric);
            assert!(err < 1e-6, "{}: rel err {err}", p.name(id));
        }
    }

    #[test]
    fn frozen_params_get_no_gradient() {
        let mut p = ParamSet::new();
        let a = p.add("a", array![[1.0, 2.0]]);
        let b = p.add("b", array![[0.5], [0.5]]);
        p.set_trainable(b, false);
        let mut g = Graph::new(&p);
        let av = g.param(a);
        let bv = g.param(b);
        let y = g.matmul(av, bv);
        let grads = g.backward(y);
        assert!(grads.get(a).is_some());
        assert!(grads.get(b).is_none());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = ParamSet::new();
        let mut g = Graph::new(&p);
        let x = g.input(array![[1000.0, 0.0, -1000.0], [0.0, 0.0, 0.0]]);
        let y = g.softmax_rows(x);
        for row in g.value(y).rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        assert!((g.value(y)[[1, 0]] - 1.0 / 3.0).abs() < 1e-15);
    }
}
