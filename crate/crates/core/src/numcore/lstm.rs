//! LSTM cell math and the recurrent stacks built from it.
//!
//! Gate layout inside the stacked `4H` pre-activation is input, forget,
//! cell candidate, output.

use super::tape::{dropout, Tape, Var};
use super::tensor::{Init, ParamId, ParamStore};
use super::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmParams {
    /// `4H x I`
    pub wx: ParamId,
    /// `4H x H`
    pub wh: ParamId,
    /// `4H`, forget slice initialized to 1.
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn new(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let wx = store.add(format!("{prefix}.wx"), &[4 * hidden, input], Init::FanIn, rng);
        let wh = store.add(format!("{prefix}.wh"), &[4 * hidden, hidden], Init::FanIn, rng);
        let b = store.add(format!("{prefix}.b"), &[4 * hidden], Init::Zeros, rng);
        store.get_mut(b).value.data_mut()[hidden..2 * hidden].fill(1.0);
        LstmParams {
            wx,
            wh,
            b,
            input,
            hidden,
        }
    }
}

/// Borrowed weights for one cell evaluation.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights<'a> {
    pub wx: &'a [f64],
    pub wh: &'a [f64],
    pub b: &'a [f64],
    pub input: usize,
    pub hidden: usize,
}

impl<'a> LstmWeights<'a> {
    pub fn from_store(store: &'a ParamStore, p: &LstmParams) -> Self {
        LstmWeights {
            wx: store.value(p.wx).data(),
            wh: store.value(p.wh).data(),
            b: store.value(p.b).data(),
            input: p.input,
            hidden: p.hidden,
        }
    }
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCellCache {
    /// Activated gates `[i, f, g, o]`.
    pub gates: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn lstm_cell_forward(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    w: &LstmWeights<'_>,
) -> (Vec<f64>, Vec<f64>, LstmCellCache) {
    let (n_in, n_h) = (w.input, w.hidden);
    debug_assert_eq!(x.len(), n_in);
    debug_assert_eq!(h_prev.len(), n_h);
    let mut gates = w.b.to_vec();
    for (r, z) in gates.iter_mut().enumerate() {
        let wx_row = &w.wx[r * n_in..(r + 1) * n_in];
        let wh_row = &w.wh[r * n_h..(r + 1) * n_h];
        *z += dot(wx_row, x) + dot(wh_row, h_prev);
    }
    for (k, z) in gates.iter_mut().enumerate() {
        *z = if (2 * n_h..3 * n_h).contains(&k) {
            z.tanh()
        } else {
            sigmoid(*z)
        };
    }
    let mut c = vec![0.0; n_h];
    let mut h = vec![0.0; n_h];
    let mut tanh_c = vec![0.0; n_h];
    for j in 0..n_h {
        let (i, f, g, o) = (gates[j], gates[n_h + j], gates[2 * n_h + j], gates[3 * n_h + j]);
        c[j] = f * c_prev[j] + i * g;
        tanh_c[j] = c[j].tanh();
        h[j] = o * tanh_c[j];
    }
    let cache = LstmCellCache {
        gates,
        c_prev: c_prev.to_vec(),
        tanh_c,
    };
    (h, c, cache)
}

/// Gradients of one cell evaluation. `dz` is the gradient with respect to
/// the `4H` pre-activations; weight gradients are `dz x^T`, `dz h_prev^T`
/// and `dz`.
pub struct LstmCellGrads {
    pub dz: Vec<f64>,
    pub dx: Vec<f64>,
    pub dh_prev: Vec<f64>,
    pub dc_prev: Vec<f64>,
}

pub fn lstm_cell_backward(
    cache: &LstmCellCache,
    dh: &[f64],
    dc: &[f64],
    w: &LstmWeights<'_>,
) -> LstmCellGrads {
    let n_h = w.hidden;
    let g = &cache.gates;
    let mut dz = vec![0.0; 4 * n_h];
    let mut dc_prev = vec![0.0; n_h];
    for j in 0..n_h {
        let (i, f, gg, o) = (g[j], g[n_h + j], g[2 * n_h + j], g[3 * n_h + j]);
        let tc = cache.tanh_c[j];
        let dc_total = dc[j] + dh[j] * o * (1.0 - tc * tc);
        dz[j] = dc_total * gg * i * (1.0 - i);
        dz[n_h + j] = dc_total * cache.c_prev[j] * f * (1.0 - f);
        dz[2 * n_h + j] = dc_total * i * (1.0 - gg * gg);
        dz[3 * n_h + j] = dh[j] * tc * o * (1.0 - o);
        dc_prev[j] = dc_total * f;
    }
    let dx = matvec_t(w.wx, &dz, w.input);
    let dh_prev = matvec_t(w.wh, &dz, n_h);
    LstmCellGrads {
        dz,
        dx,
        dh_prev,
        dc_prev,
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `W^T v` for a row-major `W` with `cols` columns.
pub(crate) fn matvec_t(w: &[f64], v: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for (r, &vr) in v.iter().enumerate() {
        if vr == 0.0 {
            continue;
        }
        for (o, &wv) in out.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
            *o += wv * vr;
        }
    }
    out
}

/// Recurrent state of a stack: `(h, c)` per layer.
pub type StackState = Vec<(Var, Var)>;

/// Runs one direction of one layer over `inputs`, returning the hidden
/// outputs aligned with the inputs.
pub fn run_direction(
    tape: &mut Tape,
    store: &ParamStore,
    p: &LstmParams,
    inputs: &[Var],
    reverse: bool,
) -> Vec<Var> {
    let zero = tape.constant(vec![0.0; p.hidden]);
    let (mut h, mut c) = (zero, zero);
    let mut out = vec![zero; inputs.len()];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..inputs.len()).rev())
    } else {
        Box::new(0..inputs.len())
    };
    for t in order {
        (h, c) = tape.lstm_cell(store, p, inputs[t], h, c);
        out[t] = h;
    }
    out
}

/// Stacked bidirectional LSTM; layer `l > 0` reads the concatenated outputs
/// of layer `l - 1`, with inverted dropout in between while training.
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub layers: Vec<(LstmParams, LstmParams)>,
}

impl BiLstm {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        rng: &mut Rng,
    ) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let n_in = if l == 0 { input } else { 2 * hidden };
                (
                    LstmParams::new(store, &format!("{prefix}.l{l}.fwd"), n_in, hidden, rng),
                    LstmParams::new(store, &format!("{prefix}.l{l}.bwd"), n_in, hidden, rng),
                )
            })
            .collect();
        BiLstm { layers }
    }

    pub fn output_width(&self) -> usize {
        2 * self.layers[0].0.hidden
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        inputs: &[Var],
        dropout_rate: f64,
        rng: &mut Rng,
        train: bool,
    ) -> Vec<Var> {
        let mut xs = inputs.to_vec();
        for (l, (fwd, bwd)) in self.layers.iter().enumerate() {
            if l > 0 {
                xs = xs
                    .iter()
                    .map(|&x| dropout(tape, x, dropout_rate, rng, train))
                    .collect();
            }
            let f = run_direction(tape, store, fwd, &xs, false);
            let b = run_direction(tape, store, bwd, &xs, true);
            xs = f.iter().zip(&b).map(|(&f, &b)| tape.concat(&[f, b])).collect();
        }
        xs
    }
}

/// Stacked single-direction LSTM.
#[derive(Clone, Debug)]
pub struct LstmStack {
    pub layers: Vec<LstmParams>,
}

impl LstmStack {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        rng: &mut Rng,
    ) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let n_in = if l == 0 { input } else { hidden };
                LstmParams::new(store, &format!("{prefix}.l{l}"), n_in, hidden, rng)
            })
            .collect();
        LstmStack { layers }
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden
    }

    pub fn zero_state(&self, tape: &mut Tape) -> StackState {
        let zero = tape.constant(vec![0.0; self.hidden()]);
        vec![(zero, zero); self.layers.len()]
    }

    /// Advances every layer by one timestep. Returns the top hidden output
    /// and the new state.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        state: &StackState,
        x: Var,
        dropout_rate: f64,
        rng: &mut Rng,
        train: bool,
    ) -> (Var, StackState) {
        let mut input = x;
        let mut next = Vec::with_capacity(self.layers.len());
        for (l, p) in self.layers.iter().enumerate() {
            if l > 0 {
                input = dropout(tape, input, dropout_rate, rng, train);
            }
            let (h, c) = tape.lstm_cell(store, p, input, state[l].0, state[l].1);
            next.push((h, c));
            input = h;
        }
        (input, next)
    }

    /// Runs the whole sequence, optionally right to left, returning top
    /// outputs aligned with the inputs.
    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        inputs: &[Var],
        reverse: bool,
        dropout_rate: f64,
        rng: &mut Rng,
        train: bool,
    ) -> Vec<Var> {
        let mut state = self.zero_state(tape);
        let mut out = vec![Var::PLACEHOLDER; inputs.len()];
        let order: Vec<usize> = if reverse {
            (0..inputs.len()).rev().collect()
        } else {
            (0..inputs.len()).collect()
        };
        for t in order {
            let (h, next) = self.step(tape, store, &state, inputs[t], dropout_rate, rng, train);
            out[t] = h;
            state = next;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_weights(input: usize, hidden: usize, rng: &mut Rng) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut r = |n: usize| (0..n).map(|_| rng.uniform_range(-0.5, 0.5)).collect::<Vec<_>>();
        (r(4 * hidden * input), r(4 * hidden * hidden), r(4 * hidden))
    }

    #[test]
    fn zero_weights_and_state_give_zero_output() {
        let (wx, wh, b) = (vec![0.0; 4 * 3 * 2], vec![0.0; 4 * 3 * 3], vec![0.0; 12]);
        let w = LstmWeights { wx: &wx, wh: &wh, b: &b, input: 2, hidden: 3 };
        let (h, c, _) = lstm_cell_forward(&[0.0, 0.0], &[0.0; 3], &[0.0; 3], &w);
        assert_eq!(h, vec![0.0; 3]);
        assert_eq!(c, vec![0.0; 3]);
    }

    #[test]
    fn forget_bias_one_retains_most_of_the_cell() {
        let hidden = 2;
        let (wx, wh) = (vec![0.0; 4 * hidden], vec![0.0; 4 * hidden * hidden]);
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].fill(1.0);
        let w = LstmWeights { wx: &wx, wh: &wh, b: &b, input: 1, hidden };
        let (_, c, _) = lstm_cell_forward(&[0.0], &[0.0; 2], &[1.0, 1.0], &w);
        assert!(c[0] > 0.73 && (c[0] - sigmoid(1.0)).abs() < 1e-12);
    }

    /// Central differences of `L = a.h + b.c` against the analytic cell
    /// gradient, for inputs, states and every weight.
    #[test]
    fn cell_gradients_match_finite_differences() {
        let (n_in, n_h) = (3, 4);
        let mut rng = Rng::seeded(11);
        let (wx, wh, b) = random_weights(n_in, n_h, &mut rng);
        let x: Vec<f64> = (0..n_in).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let h0: Vec<f64> = (0..n_h).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let c0: Vec<f64> = (0..n_h).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let a: Vec<f64> = (0..n_h).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let bb: Vec<f64> = (0..n_h).map(|_| rng.uniform_range(-1.0, 1.0)).collect();

        let loss = |wx: &[f64], wh: &[f64], b: &[f64], x: &[f64], h0: &[f64], c0: &[f64]| {
            let w = LstmWeights { wx, wh, b, input: n_in, hidden: n_h };
            let (h, c, _) = lstm_cell_forward(x, h0, c0, &w);
            dot(&a, &h) + dot(&bb, &c)
        };
        let w = LstmWeights { wx: &wx, wh: &wh, b: &b, input: n_in, hidden: n_h };
        let (_, _, cache) = lstm_cell_forward(&x, &h0, &c0, &w);
        let g = lstm_cell_backward(&cache, &a, &bb, &w);

        let eps = 1e-5;
        let check = |analytic: f64, plus: f64, minus: f64| {
            let numeric = (plus - minus) / (2.0 * eps);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            assert!(rel < 1e-4, "analytic {analytic} numeric {numeric}");
        };
        for k in 0..wx.len() {
            let (mut p, mut m) = (wx.clone(), wx.clone());
            p[k] += eps;
            m[k] -= eps;
            let analytic = g.dz[k / n_in] * x[k % n_in];
            check(analytic, loss(&p, &wh, &b, &x, &h0, &c0), loss(&m, &wh, &b, &x, &h0, &c0));
        }
        for k in 0..wh.len() {
            let (mut p, mut m) = (wh.clone(), wh.clone());
            p[k] += eps;
            m[k] -= eps;
            let analytic = g.dz[k / n_h] * h0[k % n_h];
            check(analytic, loss(&wx, &p, &b, &x, &h0, &c0), loss(&wx, &m, &b, &x, &h0, &c0));
        }
        for k in 0..b.len() {
            let (mut p, mut m) = (b.clone(), b.clone());
            p[k] += eps;
            m[k] -= eps;
            check(g.dz[k], loss(&wx, &wh, &p, &x, &h0, &c0), loss(&wx, &wh, &m, &x, &h0, &c0));
        }
        for k in 0..n_in {
            let (mut p, mut m) = (x.clone(), x.clone());
            p[k] += eps;
            m[k] -= eps;
            check(g.dx[k], loss(&wx, &wh, &b, &p, &h0, &c0), loss(&wx, &wh, &b, &m, &h0, &c0));
        }
        for k in 0..n_h {
            let (mut p, mut m) = (h0.clone(), h0.clone());
            p[k] += eps;
            m[k] -= eps;
            check(g.dh_prev[k], loss(&wx, &wh, &b, &x, &p, &c0), loss(&wx, &wh, &b, &x, &m, &c0));
            let (mut p, mut m) = (c0.clone(), c0.clone());
            p[k] += eps;
            m[k] -= eps;
            check(g.dc_prev[k], loss(&wx, &wh, &b, &x, &h0, &p), loss(&wx, &wh, &b, &x, &h0, &m));
        }
    }

    fn bilstm_fixture(hidden: usize) -> (ParamStore, BiLstm, Vec<Vec<f64>>) {
        let mut rng = Rng::seeded(5);
        let mut store = ParamStore::new();
        let net = BiLstm::new(&mut store, "enc", 4, hidden, 2, &mut rng);
        let xs = (0..5)
            .map(|_| (0..4).map(|_| rng.uniform_range(-1.0, 1.0)).collect())
            .collect();
        (store, net, xs)
    }

    fn run(store: &ParamStore, net: &BiLstm, xs: &[Vec<f64>], rate: f64, train: bool) -> Vec<Vec<f64>> {
        let mut tape = Tape::new();
        let mut rng = Rng::seeded(9);
        let inputs: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let out = net.forward(&mut tape, store, &inputs, rate, &mut rng, train);
        out.iter().map(|&v| tape.value(v).to_vec()).collect()
    }

    #[test]
    fn bilstm_output_is_twice_hidden() {
        for hidden in [8, 1024] {
            let mut rng = Rng::seeded(1);
            let mut store = ParamStore::new();
            let net = BiLstm::new(&mut store, "enc", 4, hidden, 2, &mut rng);
            assert_eq!(net.output_width(), 2 * hidden);
            if hidden == 8 {
                let out = run(&store, &net, &[vec![0.1; 4], vec![0.2; 4]], 0.0, false);
                assert!(out.iter().all(|v| v.len() == 16));
            }
        }
    }

    #[test]
    fn zero_dropout_train_equals_eval() {
        let (store, net, xs) = bilstm_fixture(6);
        assert_eq!(run(&store, &net, &xs, 0.0, true), run(&store, &net, &xs, 0.0, false));
    }

    /// Reversing the input and swapping the two directions' weights swaps
    /// the output halves.
    #[test]
    fn reversal_swaps_direction_halves() {
        let (store, net, xs) = bilstm_fixture(6);
        let mut swapped_store = store.clone();
        for (f, b) in &net.layers {
            for (pf, pb) in [(f.wx, b.wx), (f.wh, b.wh), (f.b, b.b)] {
                let vf = store.value(pf).clone();
                let vb = store.value(pb).clone();
                swapped_store.get_mut(pf).value = vb;
                swapped_store.get_mut(pb).value = vf;
            }
        }
        let h = 6;
        // Layer 2 reads [fwd; bwd]; after the swap it must read [bwd; fwd],
        // so permute the input columns of the second layer's input weights.
        for (f, b) in net.layers.iter().skip(1) {
            for p in [f.wx, b.wx] {
                let t = swapped_store.get_mut(p);
                let cols = t.value.cols();
                let data = t.value.data_mut();
                for r in 0..data.len() / cols {
                    let row = &mut data[r * cols..(r + 1) * cols];
                    let (lo, hi) = row.split_at_mut(h);
                    lo.swap_with_slice(hi);
                }
            }
        }
        let forward = run(&store, &net, &xs, 0.0, false);
        let rev_xs: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let reversed = run(&swapped_store, &net, &rev_xs, 0.0, false);
        let n = xs.len();
        for t in 0..n {
            let a = &forward[t];
            let b = &reversed[n - 1 - t];
            for j in 0..h {
                assert!((a[j] - b[h + j]).abs() < 1e-12);
                assert!((a[h + j] - b[j]).abs() < 1e-12);
            }
        }
    }
}
