use super::tape::{dropout, Tape, Var};
use super::tensor::{Init, ParamId, ParamStore};
use super::Rng;

/// Hidden affine layers with ReLU and dropout, then a linear head.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub hidden: Vec<(ParamId, ParamId)>,
    pub head: (ParamId, ParamId),
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        outputs: usize,
        rng: &mut Rng,
    ) -> Self {
        let mut width = input;
        let hidden_layers = (0..layers)
            .map(|l| {
                let w = store.add(format!("{prefix}.l{l}.w"), &[hidden, width], Init::FanIn, rng);
                let b = store.add(format!("{prefix}.l{l}.b"), &[hidden], Init::Zeros, rng);
                width = hidden;
                (w, b)
            })
            .collect();
        let w = store.add(format!("{prefix}.out.w"), &[outputs, width], Init::FanIn, rng);
        let b = store.add(format!("{prefix}.out.b"), &[outputs], Init::Zeros, rng);
        Mlp {
            hidden: hidden_layers,
            head: (w, b),
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        dropout_rate: f64,
        rng: &mut Rng,
        train: bool,
    ) -> Var {
        let mut h = x;
        for &(w, b) in &self.hidden {
            let z = tape.affine(store, w, Some(b), h);
            let a = tape.relu(z);
            h = dropout(tape, a, dropout_rate, rng, train);
        }
        tape.affine(store, self.head.0, Some(self.head.1), h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_uniform_distribution() {
        let mut rng = Rng::seeded(1);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "mlp", 6, 4, 2, 5, &mut rng);
        for p in store.iter_mut() {
            p.value.data_mut().fill(0.0);
        }
        let mut tape = Tape::new();
        let x = tape.constant(vec![0.5; 6]);
        let logits = mlp.forward(&mut tape, &store, x, 0.2, &mut rng, false);
        let p = super::super::tape::softmax(tape.value(logits));
        assert!(p.iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn eval_is_deterministic() {
        let mut rng = Rng::seeded(2);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "mlp", 3, 4, 2, 5, &mut rng);
        let run = |rng: &mut Rng| {
            let mut tape = Tape::new();
            let x = tape.constant(vec![0.1, -0.4, 0.9]);
            let y = mlp.forward(&mut tape, &store, x, 0.5, rng, false);
            tape.value(y).to_vec()
        };
        assert_eq!(run(&mut Rng::seeded(3)), run(&mut Rng::seeded(4)));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Rng::seeded(8);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "mlp", 3, 4, 2, 5, &mut rng);
        // Keep pre-activations away from the ReLU kink.
        for (_, b) in &mlp.hidden {
            store.get_mut(*b).value.data_mut().fill(0.05);
        }
        let input = vec![0.3, -0.7, 0.2];
        let loss_of = |store: &ParamStore, backward: bool, grads: &mut Option<ParamStore>| {
            let mut tape = Tape::new();
            let mut drop_rng = Rng::seeded(99);
            let x = tape.constant(input.clone());
            let z = mlp.forward(&mut tape, store, x, 0.25, &mut drop_rng, true);
            let lp = tape.log_softmax(z);
            let pick = tape.pick(lp, 2);
            let loss = tape.weighted_sum(&[(pick, -1.0)]);
            if backward {
                let mut s = store.clone();
                s.zero_grad();
                tape.backward(loss, &mut s);
                *grads = Some(s);
            }
            tape.scalar(loss)
        };
        let mut analytic = None;
        loss_of(&store, true, &mut analytic);
        let analytic = analytic.unwrap();
        let eps = 1e-5;
        for id in store.ids() {
            for k in 0..store.value(id).len() {
                let mut up = store.clone();
                up.get_mut(id).value.data_mut()[k] += eps;
                let mut dn = store.clone();
                dn.get_mut(id).value.data_mut()[k] -= eps;
                let fd = (loss_of(&up, false, &mut None) - loss_of(&dn, false, &mut None)) / (2.0 * eps);
                let a = analytic.get(id).grad[k];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                assert!(rel < 1e-4, "{} [{k}]: {a} vs {fd}", store.get(id).name);
            }
        }
    }
}
