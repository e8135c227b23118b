use super::ops::{log_softmax_excluding, log_softmax_rows};
use super::{matmul_into, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`]. Only meaningful for the graph that issued it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Detach,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Exp(Var),
    Ln(Var),
    SumRows(Var),
    SumAll(Var),
    MeanAll(Var),
    Gather(Var, Vec<usize>),
    LogSoftmax(Var, f64),
    LogSoftmaxExcluding(Var, f64, Vec<usize>),
    LogComplement(Var, f64, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only tape of operations. Node ids are insertion positions, so every
/// node's inputs precede it and the backward pass is a reverse linear scan.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(value, op, requires_grad)
    }

    /// Trainable leaf: receives a gradient on [`Graph::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward pass, if `v` took part in it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    /// Same value, cut from the gradient flow.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.push(value, Op::Detach, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.value(a).dims2()?;
        let (k2, m) = self.value(b).dims2()?;
        if k != k2 {
            return Err(Error::dim(format!(
                "matmul of {:?} by {:?}: inner dimensions differ",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut out = vec![0.0; n * m];
        matmul_into(self.value(a).data(), self.value(b).data(), &mut out, n, k, m);
        let value = Tensor::matrix(n, m, out)?;
        Ok(self.derived(value, Op::MatMul(a, b), &[a, b]))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::dim(format!(
                "{what} of {:?} and {:?}: shapes differ",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor {
            shape: ta.shape().to_vec(),
            data,
        }
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let t = self.value(a);
        Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let value = self.zip_with(a, b, |x, y| x + y);
        Ok(self.derived(value, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let value = self.zip_with(a, b, |x, y| x - y);
        Ok(self.derived(value, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let value = self.zip_with(a, b, |x, y| x * y);
        Ok(self.derived(value, Op::Mul(a, b), &[a, b]))
    }

    /// Adds a length-`M` bias to every row of an `[N, M]` matrix.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (_, m) = self.value(a).dims2()?;
        if self.value(bias).shape() != [m] {
            return Err(Error::dim(format!(
                "row bias {:?} does not match matrix {:?}",
                self.value(bias).shape(),
                self.value(a).shape()
            )));
        }
        let b = self.value(bias).data();
        let mut value = self.value(a).clone();
        for row in value.data_mut().chunks_mut(m) {
            for (x, &y) in row.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(self.derived(value, Op::AddRow(a, bias), &[a, bias]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.map(a, |x| x * s);
        self.derived(value, Op::Scale(a, s), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.map(a, |x| x.max(0.0));
        self.derived(value, Op::Relu(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.map(a, f64::exp);
        self.derived(value, Op::Exp(a), &[a])
    }

    /// Natural log; every input must be strictly positive.
    pub fn ln(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).data().iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::input(format!("ln of non-positive value {bad}")));
        }
        let value = self.map(a, f64::ln);
        Ok(self.derived(value, Op::Ln(a), &[a]))
    }

    /// `[N, C] -> [N]`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let (_, c) = self.value(a).dims2()?;
        let data = self.value(a).data().chunks(c).map(|r| r.iter().sum()).collect();
        Ok(self.derived(Tensor::vector(data), Op::SumRows(a), &[a]))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.derived(Tensor::scalar(s), Op::SumAll(a), &[a])
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.derived(Tensor::scalar(s), Op::MeanAll(a), &[a])
    }

    /// Picks `a[n, index[n]]` from each row: `[N, C] -> [N]`.
    pub fn gather(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let (n, c) = self.value(a).dims2()?;
        check_index(index, n, c)?;
        let t = self.value(a);
        let data = index.iter().enumerate().map(|(i, &j)| t.data()[i * c + j]).collect();
        Ok(self.derived(Tensor::vector(data), Op::Gather(a, index.to_vec()), &[a]))
    }

    /// Row-wise `z/T - logsumexp(z/T)`.
    pub fn log_softmax(&mut self, a: Var, temperature: f64) -> Result<Var> {
        check_temperature(temperature)?;
        let (n, c) = self.value(a).dims2()?;
        let data = log_softmax_rows(self.value(a).data(), c, temperature);
        let value = Tensor::matrix(n, c, data)?;
        Ok(self.derived(value, Op::LogSoftmax(a, temperature), &[a]))
    }

    /// Log-softmax over each row with column `index[n]` removed. The removed
    /// entry is reported as 0 and carries no gradient.
    pub fn log_softmax_excluding(&mut self, a: Var, temperature: f64, index: &[usize]) -> Result<Var> {
        check_temperature(temperature)?;
        let (n, c) = self.value(a).dims2()?;
        check_index(index, n, c)?;
        if c < 2 {
            return Err(Error::dim("excluding a column needs at least two columns"));
        }
        let mut data = vec![0.0; n * c];
        for (i, (row, out)) in self.value(a).rows().zip(data.chunks_mut(c)).enumerate() {
            log_softmax_excluding(row, index[i], temperature, out);
        }
        let value = Tensor::matrix(n, c, data)?;
        Ok(self.derived(
            value,
            Op::LogSoftmaxExcluding(a, temperature, index.to_vec()),
            &[a],
        ))
    }

    /// `ln(1 - p_{n, index[n]})` at temperature `T`, computed as the difference of
    /// two log-sum-exps so it stays accurate as `p -> 1`. `[N, C] -> [N]`.
    pub fn log_complement(&mut self, a: Var, temperature: f64, index: &[usize]) -> Result<Var> {
        check_temperature(temperature)?;
        let (n, c) = self.value(a).dims2()?;
        check_index(index, n, c)?;
        if c < 2 {
            return Err(Error::dim("complement probability needs at least two columns"));
        }
        let mut scratch = vec![0.0; c];
        let data = self
            .value(a)
            .rows()
            .zip(index)
            .map(|(row, &k)| {
                let lse_rest = log_softmax_excluding(row, k, temperature, &mut scratch);
                let scaled: Vec<f64> = row.iter().map(|&z| z / temperature).collect();
                lse_rest - super::logsumexp(&scaled)
            })
            .collect();
        Ok(self.derived(
            Tensor::vector(data),
            Op::LogComplement(a, temperature, index.to_vec()),
            &[a],
        ))
    }

    /// Reverse sweep from a scalar `loss`. Gradients from any previous call are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.grads.iter_mut().for_each(|g| *g = None);
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let Some(g) = self.grads[id].take() else {
                continue;
            };
            self.propagate(id, &g);
            self.grads[id] = Some(g);
        }
        Ok(())
    }

    fn propagate(&mut self, id: usize, g: &[f64]) {
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let node = &nodes[id];
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if nodes[v.0].requires_grad {
                let slot = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
                f(slot);
            }
        };
        let val = |v: Var| &nodes[v.0].value;

        match &node.op {
            Op::Leaf | Op::Detach => {}
            Op::MatMul(a, b) => {
                let (n, k) = (val(*a).shape()[0], val(*a).shape()[1]);
                let m = val(*b).shape()[1];
                acc(*a, &mut |ga| {
                    // ga[i,p] += sum_j g[i,j] * b[p,j]
                    let bd = val(*b).data();
                    for i in 0..n {
                        let g_row = &g[i * m..(i + 1) * m];
                        for p in 0..k {
                            let b_row = &bd[p * m..(p + 1) * m];
                            ga[i * k + p] += g_row.iter().zip(b_row).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
                acc(*b, &mut |gb| {
                    // gb[p,j] += sum_i a[i,p] * g[i,j]
                    let ad = val(*a).data();
                    for i in 0..n {
                        let g_row = &g[i * m..(i + 1) * m];
                        for p in 0..k {
                            let a_ip = ad[i * k + p];
                            for (o, &gij) in gb[p * m..(p + 1) * m].iter_mut().zip(g_row) {
                                *o += a_ip * gij;
                            }
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| add_into(ga, g));
                acc(*b, &mut |gb| add_into(gb, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |ga| add_into(ga, g));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(o, &x)| *o -= x));
            }
            Op::AddRow(a, bias) => {
                acc(*a, &mut |ga| add_into(ga, g));
                let m = val(*bias).len();
                acc(*bias, &mut |gb| {
                    for row in g.chunks(m) {
                        add_into(gb, row);
                    }
                });
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (val(*a).data(), val(*b).data());
                acc(*a, &mut |ga| {
                    for ((o, &x), &y) in ga.iter_mut().zip(g).zip(bd) {
                        *o += x * y;
                    }
                });
                acc(*b, &mut |gb| {
                    for ((o, &x), &y) in gb.iter_mut().zip(g).zip(ad) {
                        *o += x * y;
                    }
                });
            }
            Op::Scale(a, s) => acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(o, &x)| *o += s * x)),
            Op::Relu(a) => {
                let ad = val(*a).data();
                acc(*a, &mut |ga| {
                    for ((o, &x), &z) in ga.iter_mut().zip(g).zip(ad) {
                        if z > 0.0 {
                            *o += x;
                        }
                    }
                });
            }
            Op::Exp(a) => {
                let y = node.value.data();
                acc(*a, &mut |ga| {
                    for ((o, &x), &e) in ga.iter_mut().zip(g).zip(y) {
                        *o += x * e;
                    }
                });
            }
            Op::Ln(a) => {
                let ad = val(*a).data();
                acc(*a, &mut |ga| {
                    for ((o, &x), &z) in ga.iter_mut().zip(g).zip(ad) {
                        *o += x / z;
                    }
                });
            }
            Op::SumRows(a) => {
                let c = val(*a).shape()[1];
                acc(*a, &mut |ga| {
                    for (row, &gi) in ga.chunks_mut(c).zip(g) {
                        row.iter_mut().for_each(|o| *o += gi);
                    }
                });
            }
            Op::SumAll(a) => acc(*a, &mut |ga| ga.iter_mut().for_each(|o| *o += g[0])),
            Op::MeanAll(a) => {
                let scale = g[0] / val(*a).len() as f64;
                acc(*a, &mut |ga| ga.iter_mut().for_each(|o| *o += scale));
            }
            Op::Gather(a, index) => {
                let c = val(*a).shape()[1];
                acc(*a, &mut |ga| {
                    for (i, (&j, &gi)) in index.iter().zip(g).enumerate() {
                        ga[i * c + j] += gi;
                    }
                });
            }
            Op::LogSoftmax(a, t) => {
                let c = val(*a).shape()[1];
                let y = node.value.data();
                acc(*a, &mut |ga| {
                    for ((ga_row, g_row), y_row) in ga.chunks_mut(c).zip(g.chunks(c)).zip(y.chunks(c)) {
                        let g_sum: f64 = g_row.iter().sum();
                        for ((o, &gj), &yj) in ga_row.iter_mut().zip(g_row).zip(y_row) {
                            *o += (gj - yj.exp() * g_sum) / t;
                        }
                    }
                });
            }
            Op::LogSoftmaxExcluding(a, t, index) => {
                let c = val(*a).shape()[1];
                let y = node.value.data();
                acc(*a, &mut |ga| {
                    for (i, &k) in index.iter().enumerate() {
                        let range = i * c..(i + 1) * c;
                        let (g_row, y_row) = (&g[range.clone()], &y[range.clone()]);
                        let g_sum: f64 = g_row.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, x)| x).sum();
                        for (j, o) in ga[range].iter_mut().enumerate() {
                            if j != k {
                                *o += (g_row[j] - y_row[j].exp() * g_sum) / t;
                            }
                        }
                    }
                });
            }
            Op::LogComplement(a, t, index) => {
                let c = val(*a).shape()[1];
                let ad = val(*a).data();
                acc(*a, &mut |ga| {
                    let mut rest = vec![0.0; c];
                    for (i, (&k, &gi)) in index.iter().zip(g).enumerate() {
                        let row = &ad[i * c..(i + 1) * c];
                        let full = log_softmax_rows(row, c, *t);
                        log_softmax_excluding(row, k, *t, &mut rest);
                        for j in 0..c {
                            let q = if j == k { 0.0 } else { rest[j].exp() };
                            ga[i * c + j] += gi * (q - full[j].exp()) / t;
                        }
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(o, &x)| *o += x);
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("temperature must be positive and finite, got {t}")))
    }
}

fn check_index(index: &[usize], rows: usize, cols: usize) -> Result<()> {
    if index.len() != rows {
        return Err(Error::dim(format!(
            "{} indices for {rows} rows",
            index.len()
        )));
    }
    if let Some((i, &j)) = index.iter().enumerate().find(|&(_, &j)| j >= cols) {
        return Err(Error::input(format!(
            "index {j} at row {i} out of range for {cols} columns"
        )));
    }
    Ok(())
}
