//! Reverse-mode gradient tape over the small set of vector operations the
//! taggers need. Nodes are appended in evaluation order; `backward` walks
//! them in reverse and accumulates parameter gradients into the store.

use crate::error::{Error, Result};

use super::lstm::{dot, lstm_cell_backward, lstm_cell_forward, matvec_t, LstmCellCache, LstmParams, LstmWeights};
use super::tensor::{ParamId, ParamStore};
use super::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    /// Never read; fills vectors before they are written.
    pub(crate) const PLACEHOLDER: Var = Var(usize::MAX);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Constant,
    Row,
    Affine,
    LstmCell,
    Concat,
    Slice,
    Relu,
    Mask,
    LogSoftmax,
    Pick,
    WeightedSum,
}

#[derive(Debug)]
enum Op {
    Constant,
    Row { param: ParamId, row: usize },
    Affine { w: ParamId, b: Option<ParamId>, x: Var },
    LstmCell { p: LstmParams, x: Var, h: Var, c: Var, cache: LstmCellCache },
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Relu(Var),
    Mask { x: Var, mask: Vec<f64> },
    LogSoftmax(Var),
    Pick { x: Var, index: usize },
    WeightedSum(Vec<(Var, f64)>),
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Constant => OpKind::Constant,
            Op::Row { .. } => OpKind::Row,
            Op::Affine { .. } => OpKind::Affine,
            Op::LstmCell { .. } => OpKind::LstmCell,
            Op::Concat(_) => OpKind::Concat,
            Op::Slice { .. } => OpKind::Slice,
            Op::Relu(_) => OpKind::Relu,
            Op::Mask { .. } => OpKind::Mask,
            Op::LogSoftmax(_) => OpKind::LogSoftmax,
            Op::Pick { .. } => OpKind::Pick,
            Op::WeightedSum(_) => OpKind::WeightedSum,
        }
    }

    fn name(&self) -> &'static str {
        match self.kind() {
            OpKind::Constant => "constant",
            OpKind::Row => "embedding lookup",
            OpKind::Affine => "affine",
            OpKind::LstmCell => "lstm cell",
            OpKind::Concat => "concat",
            OpKind::Slice => "slice",
            OpKind::Relu => "relu",
            OpKind::Mask => "dropout",
            OpKind::LogSoftmax => "log-softmax",
            OpKind::Pick => "pick",
            OpKind::WeightedSum => "weighted sum",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    nonfinite: Option<&'static str>,
    fault: Option<(OpKind, f64)>,
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

    /// Scales the gradient entering every node of `kind` during backward.
    /// Only for exercising the gradient checker's failure path.
    #[doc(hidden)]
    pub fn inject_backward_fault(&mut self, kind: OpKind, scale: f64) {
        self.fault = Some((kind, scale));
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        if self.nonfinite.is_none() && value.iter().any(|v| !v.is_finite()) {
            self.nonfinite = Some(op.name());
        }
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Errors if any node so far produced NaN or infinity.
    pub fn check_finite(&self) -> Result<()> {
        match self.nonfinite {
            Some(op) => Err(Error::NonFinite { op }),
            None => Ok(()),
        }
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Constant)
    }

    /// Row `row` of a parameter (embedding lookup). 1-D parameters have a
    /// single row.
    pub fn row(&mut self, store: &ParamStore, param: ParamId, row: usize) -> Var {
        let value = store.value(param).row(row).to_vec();
        self.push(value, Op::Row { param, row })
    }

    /// `W x + b`.
    pub fn affine(&mut self, store: &ParamStore, w: ParamId, b: Option<ParamId>, x: Var) -> Var {
        let wt = store.value(w);
        let cols = wt.cols();
        let xv = &self.nodes[x.0].value;
        assert_eq!(cols, xv.len(), "affine input width");
        let mut y: Vec<f64> = (0..wt.rows())
            .map(|r| dot(&wt.data()[r * cols..(r + 1) * cols], xv))
            .collect();
        if let Some(b) = b {
            for (yi, bi) in y.iter_mut().zip(store.value(b).data()) {
                *yi += bi;
            }
        }
        self.push(y, Op::Affine { w, b, x })
    }

    /// One LSTM cell step; returns `(h, c)`.
    pub fn lstm_cell(&mut self, store: &ParamStore, p: &LstmParams, x: Var, h: Var, c: Var) -> (Var, Var) {
        let w = LstmWeights::from_store(store, p);
        let (hv, cv, cache) = lstm_cell_forward(self.value(x), self.value(h), self.value(c), &w);
        let mut value = hv;
        value.extend(cv);
        let cell = self.push(
            value,
            Op::LstmCell {
                p: *p,
                x,
                h,
                c,
                cache,
            },
        );
        (self.slice(cell, 0, p.hidden), self.slice(cell, p.hidden, p.hidden))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let value = parts
            .iter()
            .flat_map(|&p| self.nodes[p.0].value.iter().copied())
            .collect();
        self.push(value, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let value = self.nodes[x.0].value[start..start + len].to_vec();
        self.push(value, Op::Slice { x, start })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).iter().map(|&v| v.max(0.0)).collect();
        self.push(value, Op::Relu(x))
    }

    /// Elementwise product with a constant mask.
    pub fn mask(&mut self, x: Var, mask: Vec<f64>) -> Var {
        let value = self.value(x).iter().zip(&mask).map(|(a, m)| a * m).collect();
        self.push(value, Op::Mask { x, mask })
    }

    pub fn log_softmax(&mut self, x: Var) -> Var {
        let value = log_softmax(self.value(x));
        self.push(value, Op::LogSoftmax(x))
    }

    pub fn pick(&mut self, x: Var, index: usize) -> Var {
        let value = vec![self.value(x)[index]];
        self.push(value, Op::Pick { x, index })
    }

    /// `sum_k w_k * x_k` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let total = terms.iter().map(|&(v, w)| w * self.scalar(v)).sum();
        self.push(vec![total], Op::WeightedSum(terms.to_vec()))
    }

    /// Accumulates `d loss / d param` into `store` for every parameter that
    /// reaches the scalar `loss`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar");
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![1.0]);

        let lens: Vec<usize> = self.nodes[..=loss.0].iter().map(|n| n.value.len()).collect();
        let acc = |grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64], offset: usize| {
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; lens[v.0]]);
            for (s, x) in slot[offset..offset + g.len()].iter_mut().zip(g) {
                *s += x;
            }
        };

        for idx in (0..=loss.0).rev() {
            let Some(mut g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if let Some((kind, scale)) = self.fault {
                if node.op.kind() == kind {
                    g.iter_mut().for_each(|x| *x *= scale);
                }
            }
            match &node.op {
                Op::Constant => {}
                Op::Row { param, row } => {
                    let p = store.get_mut(*param);
                    let cols = p.value.cols();
                    for (d, x) in p.grad[row * cols..(row + 1) * cols].iter_mut().zip(&g) {
                        *d += x;
                    }
                }
                Op::Affine { w, b, x } => {
                    let xv = &self.nodes[x.0].value;
                    let dx = {
                        let wt = store.value(*w);
                        matvec_t(wt.data(), &g, wt.cols())
                    };
                    let p = store.get_mut(*w);
                    let cols = xv.len();
                    for (r, &gr) in g.iter().enumerate() {
                        if gr == 0.0 {
                            continue;
                        }
                        for (d, &xc) in p.grad[r * cols..(r + 1) * cols].iter_mut().zip(xv) {
                            *d += gr * xc;
                        }
                    }
                    if let Some(b) = b {
                        for (d, x) in store.get_mut(*b).grad.iter_mut().zip(&g) {
                            *d += x;
                        }
                    }
                    acc(&mut grads, *x, &dx, 0);
                }
                Op::LstmCell { p, x, h, c, cache } => {
                    let n_h = p.hidden;
                    let cell = {
                        let w = LstmWeights::from_store(store, p);
                        lstm_cell_backward(cache, &g[..n_h], &g[n_h..], &w)
                    };
                    let xv = &self.nodes[x.0].value;
                    let hv = &self.nodes[h.0].value;
                    outer_acc(&mut store.get_mut(p.wx).grad, &cell.dz, xv);
                    outer_acc(&mut store.get_mut(p.wh).grad, &cell.dz, hv);
                    for (d, z) in store.get_mut(p.b).grad.iter_mut().zip(&cell.dz) {
                        *d += z;
                    }
                    acc(&mut grads, *x, &cell.dx, 0);
                    acc(&mut grads, *h, &cell.dh_prev, 0);
                    acc(&mut grads, *c, &cell.dc_prev, 0);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.nodes[p.0].value.len();
                        acc(&mut grads, p, &g[offset..offset + n], 0);
                        offset += n;
                    }
                }
                Op::Slice { x, start } => {
                    acc(&mut grads, *x, &g, *start);
                }
                Op::Relu(x) => {
                    let dx: Vec<f64> = node
                        .value
                        .iter()
                        .zip(&g)
                        .map(|(&y, &d)| if y > 0.0 { d } else { 0.0 })
                        .collect();
                    acc(&mut grads, *x, &dx, 0);
                }
                Op::Mask { x, mask } => {
                    let dx: Vec<f64> = g.iter().zip(mask).map(|(d, m)| d * m).collect();
                    acc(&mut grads, *x, &dx, 0);
                }
                Op::LogSoftmax(x) => {
                    let total: f64 = g.iter().sum();
                    let dx: Vec<f64> = node
                        .value
                        .iter()
                        .zip(&g)
                        .map(|(&lp, &d)| d - lp.exp() * total)
                        .collect();
                    acc(&mut grads, *x, &dx, 0);
                }
                Op::Pick { x, index } => {
                    acc(&mut grads, *x, &[g[0]], *index);
                }
                Op::WeightedSum(terms) => {
                    for &(v, w) in terms {
                        acc(&mut grads, v, &[w * g[0]], 0);
                    }
                }
            }
        }
    }
}

fn outer_acc(grad: &mut [f64], dz: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, &z) in dz.iter().enumerate() {
        if z == 0.0 {
            continue;
        }
        for (d, &xc) in grad[r * cols..(r + 1) * cols].iter_mut().zip(x) {
            *d += z * xc;
        }
    }
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// Cross entropy of `target` (zero-based) under `softmax(logits)`, with the
/// probability vector.
pub fn softmax_xent(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let lp = log_softmax(logits);
    (-lp[target], lp.iter().map(|v| v.exp()).collect())
}

/// Inverted dropout: identity unless training with a positive rate.
pub fn dropout(tape: &mut Tape, x: Var, rate: f64, rng: &mut Rng, train: bool) -> Var {
    if !train || rate <= 0.0 {
        return x;
    }
    let keep = 1.0 - rate;
    let mask = (0..tape.value(x).len())
        .map(|_| if rng.uniform() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    tape.mask(x, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::tensor::Init;

    #[test]
    fn uniform_logits_cost_ln5() {
        let (loss, p) = softmax_xent(&[0.3; 5], 2);
        assert!((loss - 5f64.ln()).abs() < 1e-12);
        assert!(p.iter().all(|&x| (x - 0.2).abs() < 1e-12));
    }

    #[test]
    fn confident_logits_cost_almost_nothing() {
        let (loss, p) = softmax_xent(&[10.0, 0.0, 0.0, 0.0, 0.0], 0);
        // -ln(e^10 / (e^10 + 4)) = ln(1 + 4 e^-10)
        let expected = (1.0 + 4.0 * (-10f64).exp()).ln();
        assert!((loss - expected).abs() < 1e-15);
        assert!((loss - 1.8e-4).abs() < 1e-5);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_stable_for_huge_logits() {
        let p = softmax(&[1000.0, 999.0, -1000.0, 0.0, 5.0]);
        assert!(p.iter().all(|x| x.is_finite() && *x >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn xent_gradient_is_p_minus_onehot() {
        let mut rng = Rng::seeded(3);
        let mut store = ParamStore::new();
        let logits = store.add("logits", &[5], Init::FanIn, &mut rng);
        let mut tape = Tape::new();
        let z = tape.row(&store, logits, 0);
        let lp = tape.log_softmax(z);
        let pick = tape.pick(lp, 3);
        let loss = tape.weighted_sum(&[(pick, -1.0)]);
        tape.backward(loss, &mut store);
        let (_, p) = softmax_xent(store.value(logits).data(), 3);
        for (k, &pk) in p.iter().enumerate() {
            let expected = pk - if k == 3 { 1.0 } else { 0.0 };
            assert!((store.get(logits).grad[k] - expected).abs() < 1e-12);
        }
        // and against central differences
        let base = store.value(logits).data().to_vec();
        for k in 0..5 {
            let eps = 1e-5;
            let mut up = base.clone();
            up[k] += eps;
            let mut dn = base.clone();
            dn[k] -= eps;
            let fd = (softmax_xent(&up, 3).0 - softmax_xent(&dn, 3).0) / (2.0 * eps);
            assert!((fd - store.get(logits).grad[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn nonfinite_values_are_reported() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![f64::NAN]);
        tape.relu(x);
        assert!(matches!(tape.check_finite(), Err(Error::NonFinite { op: "constant" })));
    }

    #[test]
    fn zero_rate_dropout_is_identity() {
        let mut tape = Tape::new();
        let mut rng = Rng::seeded(1);
        let x = tape.constant(vec![1.0, 2.0]);
        assert_eq!(dropout(&mut tape, x, 0.0, &mut rng, true), x);
        assert_eq!(dropout(&mut tape, x, 0.5, &mut rng, false), x);
        let y = dropout(&mut tape, x, 0.5, &mut rng, true);
        assert!(tape.value(y).iter().all(|&v| v == 0.0 || v == 2.0 || v == 4.0));
    }
}
