//! Central finite-difference check of the full training objective (cross
//! entropy plus the REINFORCE term) against the tape's gradients, for every
//! parameter of a tiny model of each kind.

use crate::checklist::RecencyRule;
use crate::encode::Representation;
use crate::error::Result;
use crate::model::{Model, ModelConfig, ModelKind};
use crate::numcore::{OpKind, ParamStore, Rng};
use crate::pig::{Finger, Hand, Note};
use crate::train::{example_loss, LossOptions, RewardBaseline};

pub const TOLERANCE: f64 = 1e-4;
pub const EPSILON: f64 = 1e-5;
/// Floor of the relative-error denominator, so gradients that are zero on
/// both sides compare as equal.
pub const DENOMINATOR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOMINATOR_FLOOR)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupResult {
    pub kind: ModelKind,
    /// Parameter tensor name.
    pub group: String,
    pub scalars: usize,
    pub worst: f64,
}

impl GroupResult {
    pub fn passed(&self) -> bool {
        self.worst <= TOLERANCE
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradcheckReport {
    pub groups: Vec<GroupResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        !self.groups.is_empty() && self.groups.iter().all(GroupResult::passed)
    }

    pub fn worst(&self) -> f64 {
        self.groups.iter().map(|g| g.worst).fold(0.0, f64::max)
    }

    pub fn render(&self) -> String {
        let width = self.groups.iter().map(|g| g.group.len()).max().unwrap_or(5).max(5);
        let mut out = format!("{:<18} {:<width$} {:>7} {:>12}  result\n", "model", "group", "scalars", "worst_rel");
        for g in &self.groups {
            out.push_str(&format!(
                "{:<18} {:<width$} {:>7} {:>12.3e}  {}\n",
                g.kind.name(),
                g.group,
                g.scalars,
                g.worst,
                if g.passed() { "PASS" } else { "FAIL" }
            ));
        }
        out
    }
}

/// Hidden 8, input width 16, six notes.
pub fn check_config(kind: ModelKind) -> ModelConfig {
    ModelConfig {
        kind,
        input_rep: Representation::Lattice,
        hidden: 8,
        layers: 2,
        mlp_hidden: 8,
        mlp_layers: 2,
        dropout: 0.2,
        d: 16,
        d_check: 4,
        recency: RecencyRule::default(),
    }
}

/// A short phrase with a held note and fast repeats, so every checklist
/// slot type (recent above, recent below, idle) occurs.
pub fn check_notes() -> Vec<Note> {
    let layout = [(60, 0.00, 0.30), (64, 0.05, 0.10), (67, 0.10, 0.15), (62, 0.40, 0.45), (62, 0.48, 0.60), (71, 0.55, 0.70)];
    layout.iter()
        .map(|&(p, on, off)| Note::new(p, on, off, Hand::Right).expect("valid note"))
        .collect()
}

fn fingers(v: &[u8]) -> Vec<Finger> {
    v.iter().map(|&f| Finger::new(f).expect("finger")).collect()
}

/// Checks one kind. `fault` corrupts the backward pass of one op type.
pub fn check_kind(kind: ModelKind, fault: Option<(OpKind, f64)>) -> Result<Vec<GroupResult>> {
    let mut store = ParamStore::new();
    let model = Model::new(check_config(kind), &mut store, &mut Rng::seeded(11))?;
    // Spread the weights out so no gradient is vanishingly small.
    let mut init = Rng::seeded(12);
    for p in store.iter_mut() {
        for v in p.value.data_mut() {
            *v = init.uniform_range(-0.8, 0.8);
        }
    }
    let notes = check_notes();
    let gold = fingers(&[1, 2, 3, 1, 2, 5]);
    let samples = vec![fingers(&[2, 2, 4]), fingers(&[1, 3, 3])];
    let opts = LossOptions {
        lambda: 1.0,
        chunk_len: 3,
        reward_disjoint: false,
        presampled: Some(&samples),
    };
    let mut baseline = RewardBaseline::new(50);
    baseline.push(0.3);
    baseline.push(0.6);

    let loss = |store: &ParamStore| -> Result<f64> {
        let mut b = baseline.clone();
        let out = example_loss(&model, store, &notes, &gold, &opts, &mut b, &mut Rng::seeded(13), true)?;
        Ok(out.tape.scalar(out.loss))
    };

    let mut analytic = store.clone();
    analytic.zero_grad();
    {
        let mut b = baseline.clone();
        let mut out = example_loss(&model, &store, &notes, &gold, &opts, &mut b, &mut Rng::seeded(13), true)?;
        if let Some((op, scale)) = fault {
            out.tape.inject_backward_fault(op, scale);
        }
        out.tape.backward(out.loss, &mut analytic);
    }

    let mut results = Vec::with_capacity(store.len());
    let mut probe = store.clone();
    for id in store.ids() {
        let n = store.value(id).len();
        let mut worst = 0.0f64;
        for k in 0..n {
            let original = store.value(id).data()[k];
            probe.get_mut(id).value.data_mut()[k] = original + EPSILON;
            let up = loss(&probe)?;
            probe.get_mut(id).value.data_mut()[k] = original - EPSILON;
            let down = loss(&probe)?;
            probe.get_mut(id).value.data_mut()[k] = original;
            let numeric = (up - down) / (2.0 * EPSILON);
            worst = worst.max(relative_error(analytic.get(id).grad[k], numeric));
        }
        results.push(GroupResult {
            kind,
            group: store.get(id).name.clone(),
            scalars: n,
            worst,
        });
    }
    Ok(results)
}

/// All five kinds; kinds are checked in parallel.
pub fn check_all(fault: Option<(OpKind, f64)>) -> Result<GradcheckReport> {
    use rayon::prelude::*;
    let per_kind = ModelKind::ALL
        .par_iter()
        .map(|&k| check_kind(k, fault))
        .collect::<Result<Vec<_>>>()?;
    Ok(GradcheckReport {
        groups: per_kind.into_iter().flatten().collect(),
    })
}
