//! Define-by-run reverse-mode differentiation over 2-D tensors.

use super::tensor::{matmul, matmul_acc, Mat, Real};

pub const LEAKY_SLOPE: f64 = 0.2;

pub type NodeId = usize;
pub type ParamId = usize;

/// Named trainable tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    pub names: Vec<String>,
    pub values: Vec<Mat<T>>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
        }
    }
}

impl<T: Real> ParamStore<T> {
    pub fn add(&mut self, name: String, value: Mat<T>) -> ParamId {
        self.names.push(name);
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|m| m.len()).sum()
    }

    pub fn zeros_like(&self) -> Vec<Mat<T>> {
        self.values
            .iter()
            .map(|m| Mat::zeros(m.rows, m.cols))
            .collect()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(|m| m.cast()).collect(),
        }
    }
}

enum Op<T> {
    Input,
    Linear {
        x: NodeId,
        w: ParamId,
        b: ParamId,
    },
    LeakyRelu(NodeId),
    Add(NodeId, NodeId),
    Concat(Vec<NodeId>),
    Columns {
        x: NodeId,
        start: usize,
    },
    Softplus(NodeId),
    Reparam {
        mu: NodeId,
        log_var: NodeId,
        eps: Mat<T>,
    },
    AddDelta {
        offsets: NodeId,
        delta: NodeId,
    },
    L1Mean {
        x: NodeId,
        target: Mat<T>,
    },
    KlCharbonnier {
        mu: NodeId,
        log_var: NodeId,
    },
    External {
        x: NodeId,
        grad: Mat<T>,
    },
    WeightedSum(Vec<(NodeId, T)>),
}

struct Node<T> {
    op: Op<T>,
    value: Mat<T>,
}

pub struct Tape<'p, T> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
}

fn softplus<T: Real>(x: T) -> T {
    // max(x, 0) + ln(1 + e^-|x|)
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// `Ψ(s) = √(s² + 1) − 1`.
pub fn charbonnier(s: f64) -> f64 {
    (s * s + 1.0).sqrt() - 1.0
}

/// Analytic KL(N(mu, exp(log_var)) ‖ N(0, I)) per row.
pub fn kl_per_row<T: Real>(mu: &Mat<T>, log_var: &Mat<T>) -> Vec<T> {
    let half = T::lit(0.5);
    (0..mu.rows)
        .map(|r| {
            mu.row(r)
                .iter()
                .zip(log_var.row(r))
                .map(|(&m, &lv)| half * (m * m + lv.exp() - T::one() - lv))
                .sum()
        })
        .collect()
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, op: Op<T>, value: Mat<T>) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Mat<T> {
        &self.nodes[id].value
    }

    pub fn scalar(&self, id: NodeId) -> T {
        self.nodes[id].value.data[0]
    }

    pub fn input(&mut self, m: Mat<T>) -> NodeId {
        self.push(Op::Input, m)
    }

    /// `x·W + b` with `W` stored in×out and `b` 1×out.
    pub fn linear(&mut self, x: NodeId, w: ParamId, b: ParamId) -> NodeId {
        let (wm, bm) = (&self.params.values[w], &self.params.values[b]);
        let xv = &self.nodes[x].value;
        assert_eq!(
            xv.cols, wm.rows,
            "linear input width for {}",
            self.params.names[w]
        );
        let mut y = Mat::zeros(xv.rows, wm.cols);
        for r in 0..y.rows {
            y.row_mut(r).copy_from_slice(&bm.data);
        }
        matmul_acc(xv, false, wm, false, &mut y, T::one());
        self.push(Op::Linear { x, w, b }, y)
    }

    pub fn leaky_relu(&mut self, x: NodeId) -> NodeId {
        let s = T::lit(LEAKY_SLOPE);
        let y = self.nodes[x]
            .value
            .map(|v| if v > T::zero() { v } else { v * s });
        self.push(Op::LeakyRelu(x), y)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut y = self.nodes[a].value.clone();
        y.add_assign(&self.nodes[b].value);
        self.push(Op::Add(a, b), y)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let rows = self.nodes[parts[0]].value.rows;
        let cols: usize = parts.iter().map(|&p| self.nodes[p].value.cols).sum();
        let mut y = Mat::zeros(rows, cols);
        for r in 0..rows {
            let mut at = 0;
            for &p in parts {
                let v = &self.nodes[p].value;
                assert_eq!(v.rows, rows, "concat row count");
                y.row_mut(r)[at..at + v.cols].copy_from_slice(v.row(r));
                at += v.cols;
            }
        }
        self.push(Op::Concat(parts.to_vec()), y)
    }

    /// Columns `start..start + width` of `x`.
    pub fn columns(&mut self, x: NodeId, start: usize, width: usize) -> NodeId {
        let v = &self.nodes[x].value;
        assert!(start + width <= v.cols);
        let mut y = Mat::zeros(v.rows, width);
        for r in 0..v.rows {
            y.row_mut(r)
                .copy_from_slice(&v.row(r)[start..start + width]);
        }
        self.push(Op::Columns { x, start }, y)
    }

    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        let y = self.nodes[x].value.map(softplus);
        self.push(Op::Softplus(x), y)
    }

    /// `z = mu + exp(log_var / 2)·eps`.
    pub fn reparam(&mut self, mu: NodeId, log_var: NodeId, eps: Mat<T>) -> NodeId {
        let (m, lv) = (&self.nodes[mu].value, &self.nodes[log_var].value);
        assert_eq!(m.shape(), eps.shape());
        let half = T::lit(0.5);
        let data = m
            .data
            .iter()
            .zip(&lv.data)
            .zip(&eps.data)
            .map(|((&m, &l), &e)| m + (half * l).exp() * e)
            .collect();
        let z = Mat::from_vec(m.rows, m.cols, data);
        self.push(Op::Reparam { mu, log_var, eps }, z)
    }

    /// Adds a per-row 3-vector to every consecutive xyz triple.
    pub fn add_delta(&mut self, offsets: NodeId, delta: NodeId) -> NodeId {
        let (o, d) = (&self.nodes[offsets].value, &self.nodes[delta].value);
        assert_eq!(d.cols, 3);
        assert_eq!(o.cols % 3, 0);
        let mut y = o.clone();
        for r in 0..y.rows {
            let dr = [d.at(r, 0), d.at(r, 1), d.at(r, 2)];
            for (i, v) in y.row_mut(r).iter_mut().enumerate() {
                *v = *v + dr[i % 3];
            }
        }
        self.push(Op::AddDelta { offsets, delta }, y)
    }

    /// Mean absolute error against a constant target.
    pub fn l1_mean(&mut self, x: NodeId, target: Mat<T>) -> NodeId {
        let v = &self.nodes[x].value;
        assert_eq!(v.shape(), target.shape());
        let n = T::lit(v.len() as f64);
        let s: T = v
            .data
            .iter()
            .zip(&target.data)
            .map(|(&a, &b)| (a - b).abs())
            .sum();
        self.push(Op::L1Mean { x, target }, Mat::scalar(s / n))
    }

    /// Batch mean of Ψ(KL) with the KL summed over latent dimensions first.
    pub fn kl_charbonnier(&mut self, mu: NodeId, log_var: NodeId) -> NodeId {
        let kl = kl_per_row(&self.nodes[mu].value, &self.nodes[log_var].value);
        let b = T::lit(kl.len() as f64);
        let s: T = kl.iter().map(|&k| T::lit(charbonnier(k.as_f64()))).sum();
        self.push(Op::KlCharbonnier { mu, log_var }, Mat::scalar(s / b))
    }

    /// A scalar computed outside the tape, with its gradient w.r.t. `x`.
    pub fn external(&mut self, x: NodeId, value: T, grad: Mat<T>) -> NodeId {
        assert_eq!(self.nodes[x].value.shape(), grad.shape());
        self.push(Op::External { x, grad }, Mat::scalar(value))
    }

    pub fn weighted_sum(&mut self, terms: &[(NodeId, T)]) -> NodeId {
        let s = terms
            .iter()
            .map(|&(id, w)| w * self.scalar(id))
            .fold(T::zero(), |a, b| a + b);
        self.push(Op::WeightedSum(terms.to_vec()), Mat::scalar(s))
    }

    /// Gradients of scalar node `loss` with respect to every parameter.
    pub fn backward(&self, loss: NodeId) -> Vec<Mat<T>> {
        let mut pgrad = self.params.zeros_like();
        let mut grads: Vec<Option<Mat<T>>> = (0..=loss).map(|_| None).collect();
        grads[loss] = Some(Mat::scalar(T::one()));

        fn acc<T: Real>(slot: &mut Option<Mat<T>>, g: Mat<T>) {
            match slot {
                Some(s) => s.add_assign(&g),
                None => *slot = Some(g),
            }
        }

        for id in (0..=loss).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Input => {}
                Op::Linear { x, w, b } => {
                    let xv = &self.nodes[*x].value;
                    matmul_acc(xv, true, &g, false, &mut pgrad[*w], T::one());
                    let pb = &mut pgrad[*b];
                    for r in 0..g.rows {
                        for (a, &v) in pb.data.iter_mut().zip(g.row(r)) {
                            *a = *a + v;
                        }
                    }
                    if !matches!(self.nodes[*x].op, Op::Input) {
                        let gx = matmul(&g, false, &self.params.values[*w], true);
                        acc(&mut grads[*x], gx);
                    }
                }
                Op::LeakyRelu(x) => {
                    let s = T::lit(LEAKY_SLOPE);
                    let xv = &self.nodes[*x].value;
                    let data = g
                        .data
                        .iter()
                        .zip(&xv.data)
                        .map(|(&g, &v)| if v > T::zero() { g } else { g * s })
                        .collect();
                    acc(&mut grads[*x], Mat::from_vec(g.rows, g.cols, data));
                }
                Op::Add(a, b) => {
                    acc(&mut grads[*a], g.clone());
                    acc(&mut grads[*b], g);
                }
                Op::Concat(parts) => {
                    let mut at = 0;
                    for &p in parts {
                        let w = self.nodes[p].value.cols;
                        let mut gp = Mat::zeros(g.rows, w);
                        for r in 0..g.rows {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[at..at + w]);
                        }
                        at += w;
                        acc(&mut grads[p], gp);
                    }
                }
                Op::Columns { x, start } => {
                    let xv = &self.nodes[*x].value;
                    let mut gx = Mat::zeros(xv.rows, xv.cols);
                    for r in 0..g.rows {
                        gx.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads[*x], gx);
                }
                Op::Softplus(x) => {
                    let xv = &self.nodes[*x].value;
                    let data = g
                        .data
                        .iter()
                        .zip(&xv.data)
                        .map(|(&g, &v)| g * sigmoid(v))
                        .collect();
                    acc(&mut grads[*x], Mat::from_vec(g.rows, g.cols, data));
                }
                Op::Reparam { mu, log_var, eps } => {
                    let lv = &self.nodes[*log_var].value;
                    let half = T::lit(0.5);
                    let data = g
                        .data
                        .iter()
                        .zip(&lv.data)
                        .zip(&eps.data)
                        .map(|((&g, &l), &e)| g * half * (half * l).exp() * e)
                        .collect();
                    acc(&mut grads[*log_var], Mat::from_vec(g.rows, g.cols, data));
                    acc(&mut grads[*mu], g);
                }
                Op::AddDelta { offsets, delta } => {
                    let mut gd = Mat::zeros(g.rows, 3);
                    for r in 0..g.rows {
                        for (i, &v) in g.row(r).iter().enumerate() {
                            let k = r * 3 + i % 3;
                            gd.data[k] = gd.data[k] + v;
                        }
                    }
                    acc(&mut grads[*delta], gd);
                    acc(&mut grads[*offsets], g);
                }
                Op::L1Mean { x, target } => {
                    let xv = &self.nodes[*x].value;
                    let k = g.data[0] / T::lit(xv.len() as f64);
                    let data = xv
                        .data
                        .iter()
                        .zip(&target.data)
                        .map(|(&a, &b)| {
                            let d = a - b;
                            if d > T::zero() {
                                k
                            } else if d < T::zero() {
                                -k
                            } else {
                                T::zero()
                            }
                        })
                        .collect();
                    acc(&mut grads[*x], Mat::from_vec(xv.rows, xv.cols, data));
                }
                Op::KlCharbonnier { mu, log_var } => {
                    let (m, lv) = (&self.nodes[*mu].value, &self.nodes[*log_var].value);
                    let kl = kl_per_row(m, lv);
                    let b = T::lit(m.rows as f64);
                    let mut gm = Mat::zeros(m.rows, m.cols);
                    let mut gl = Mat::zeros(m.rows, m.cols);
                    let half = T::lit(0.5);
                    for r in 0..m.rows {
                        let k = kl[r];
                        // dΨ/ds = s / √(s² + 1)
                        let dpsi = g.data[0] * k / (k * k + T::one()).sqrt() / b;
                        for c in 0..m.cols {
                            let i = r * m.cols + c;
                            gm.data[i] = dpsi * m.data[i];
                            gl.data[i] = dpsi * half * (lv.data[i].exp() - T::one());
                        }
                    }
                    acc(&mut grads[*mu], gm);
                    acc(&mut grads[*log_var], gl);
                }
                Op::External { x, grad } => {
                    let k = g.data[0];
                    acc(&mut grads[*x], grad.map(|v| v * k));
                }
                Op::WeightedSum(terms) => {
                    for &(t, w) in terms {
                        acc(&mut grads[t], Mat::scalar(g.data[0] * w));
                    }
                }
            }
        }
        pgrad
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore<f64> {
        let mut s = ParamStore::default();
        s.add(
            "w".into(),
            Mat::from_vec(3, 2, vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.7]),
        );
        s.add("b".into(), Mat::from_vec(1, 2, vec![0.05, -0.1]));
        s
    }

    fn loss(s: &ParamStore<f64>, x: &Mat<f64>) -> (f64, Vec<Mat<f64>>) {
        let mut t = Tape::new(s);
        let xi = t.input(x.clone());
        let h = t.linear(xi, 0, 1);
        let a = t.leaky_relu(h);
        let sp = t.softplus(a);
        let c = t.concat(&[sp, h]);
        let cols = t.columns(c, 1, 3);
        let l1 = t.l1_mean(
            cols,
            Mat::from_vec(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]),
        );
        let kl = t.kl_charbonnier(h, a);
        let tot = t.weighted_sum(&[(l1, 1.0), (kl, 0.5)]);
        (t.scalar(tot), t.backward(tot))
    }

    #[test]
    fn small_graph_gradients() {
        let s = store();
        let x = Mat::from_vec(2, 3, vec![0.7, -1.2, 0.4, 0.2, 0.9, -0.6]);
        let (_, g) = loss(&s, &x);
        let h = 1e-6;
        for p in 0..2 {
            for i in 0..s.values[p].len() {
                let mut sp = s.clone();
                sp.values[p].data[i] += h;
                let fp = loss(&sp, &x).0;
                sp.values[p].data[i] -= 2.0 * h;
                let fm = loss(&sp, &x).0;
                let num = (fp - fm) / (2.0 * h);
                assert!(
                    (num - g[p].data[i]).abs() < 1e-6,
                    "param {p}[{i}]: {num} vs {}",
                    g[p].data[i]
                );
            }
        }
    }

    #[test]
    fn reparam_with_zero_noise_is_mu() {
        let s = ParamStore::<f64>::default();
        let mut t = Tape::new(&s);
        let mu = t.input(Mat::from_vec(1, 2, vec![0.3, -0.7]));
        let lv = t.input(Mat::from_vec(1, 2, vec![1.5, -2.0]));
        let z = t.reparam(mu, lv, Mat::zeros(1, 2));
        assert_eq!(t.value(z).data, vec![0.3, -0.7]);
    }

    #[test]
    fn prior_match_has_zero_kl() {
        let s = ParamStore::<f64>::default();
        let mut t = Tape::new(&s);
        let mu = t.input(Mat::zeros(4, 3));
        let lv = t.input(Mat::zeros(4, 3));
        let k = t.kl_charbonnier(mu, lv);
        assert_eq!(t.scalar(k), 0.0);
    }

    #[test]
    fn charbonnier_monotone() {
        assert_eq!(charbonnier(0.0), 0.0);
        let mut prev = 0.0;
        for i in 1..1000 {
            let v = charbonnier(i as f64 * 0.01);
            assert!(v > prev);
            prev = v;
        }
    }
}
