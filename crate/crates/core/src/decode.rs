//! Greedy, beam and ancestral decoding against frozen parameters.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{FrozenCursor, Model};
use crate::numcore::{ParamStore, Rng};
use crate::pig::{Finger, HandPart, Note};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Beam,
    Sample,
}

impl DecodeMode {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "greedy" => Some(DecodeMode::Greedy),
            "beam" => Some(DecodeMode::Beam),
            "sample" => Some(DecodeMode::Sample),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DecodeMode::Greedy => "greedy",
            DecodeMode::Beam => "beam",
            DecodeMode::Sample => "sample",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Hypothesis {
    pub labels: Vec<Finger>,
    /// Sum of the step log probabilities of `labels`.
    pub score: f64,
    pub cursor: FrozenCursor,
}

/// Higher score first, then the lexicographically smaller sequence.
fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.labels.cmp(&b.labels))
}

/// Argmax at every step, conditioning on the argmax prefix. Ties go to the
/// lower finger.
pub fn greedy_decode(model: &Model, store: &ParamStore, notes: &[Note]) -> Result<Vec<Finger>> {
    let frozen = model.freeze(store, notes)?;
    let mut cursor = model.frozen_start();
    let mut out = Vec::with_capacity(notes.len());
    for _ in 0..notes.len() {
        let (lp, next) = model.frozen_step(store, notes, &frozen, &cursor)?;
        let mut best = 0;
        for k in 1..5 {
            if lp[k] > lp[best] {
                best = k;
            }
        }
        let f = Finger::from_index(best);
        out.push(f);
        cursor = cursor.advance(notes, f, next);
    }
    Ok(out)
}

/// Beam search over the five labels. Every hypothesis carries its own
/// checklist and recurrent state; the context vectors are shared.
pub fn beam_decode(model: &Model, store: &ParamStore, notes: &[Note], width: usize) -> Result<Hypothesis> {
    if width == 0 {
        return Err(Error::Config("beam width must be at least 1".into()));
    }
    let frozen = model.freeze(store, notes)?;
    let mut beam = vec![Hypothesis {
        labels: Vec::new(),
        score: 0.0,
        cursor: model.frozen_start(),
    }];
    for _ in 0..notes.len() {
        let mut candidates = Vec::with_capacity(5 * beam.len());
        for hyp in &beam {
            let (lp, next) = model.frozen_step(store, notes, &frozen, &hyp.cursor)?;
            for (k, &l) in lp.iter().enumerate() {
                let f = Finger::from_index(k);
                let mut labels = hyp.labels.clone();
                labels.push(f);
                candidates.push(Hypothesis {
                    labels,
                    score: hyp.score + l,
                    cursor: hyp.cursor.advance(notes, f, next.clone()),
                });
            }
        }
        candidates.sort_by(rank);
        candidates.truncate(width);
        beam = candidates;
    }
    Ok(beam.swap_remove(0))
}

/// Samples each label from its step distribution given the sampled prefix.
/// Returns the labels and their log probabilities.
pub fn ancestral_sample(
    model: &Model,
    store: &ParamStore,
    notes: &[Note],
    rng: &mut Rng,
) -> Result<(Vec<Finger>, Vec<f64>)> {
    let frozen = model.freeze(store, notes)?;
    let mut cursor = model.frozen_start();
    let mut labels = Vec::with_capacity(notes.len());
    let mut log_probs = Vec::with_capacity(notes.len());
    for _ in 0..notes.len() {
        let (lp, next) = model.frozen_step(store, notes, &frozen, &cursor)?;
        let probs: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
        let k = rng.categorical(&probs);
        let f = Finger::from_index(k);
        labels.push(f);
        log_probs.push(lp[k]);
        cursor = cursor.advance(notes, f, next);
    }
    Ok((labels, log_probs))
}

pub fn decode(
    model: &Model,
    store: &ParamStore,
    notes: &[Note],
    mode: DecodeMode,
    beam_width: usize,
    rng: &mut Rng,
) -> Result<Vec<Finger>> {
    match mode {
        DecodeMode::Greedy => greedy_decode(model, store, notes),
        DecodeMode::Beam => Ok(beam_decode(model, store, notes, beam_width)?.labels),
        DecodeMode::Sample => Ok(ancestral_sample(model, store, notes, rng)?.0),
    }
}

/// Decodes many parts in parallel; results keep the input order. Sampling
/// uses one stream per part derived from `seed`, so the output does not
/// depend on scheduling.
pub fn decode_parts(
    model: &Model,
    store: &ParamStore,
    parts: &[HandPart],
    mode: DecodeMode,
    beam_width: usize,
    seed: u64,
) -> Result<Vec<Vec<Finger>>> {
    parts
        .par_iter()
        .enumerate()
        .map(|(i, part)| {
            let mut rng = Rng::seeded(seed.wrapping_add(i as u64));
            decode(model, store, &part.notes, mode, beam_width, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::{phrase, tiny_model};
    use crate::model::ModelKind;

    fn all_sequences(n: usize) -> impl Iterator<Item = Vec<Finger>> {
        (0..5usize.pow(n as u32)).map(move |code| {
            (0..n)
                .map(|k| Finger::from_index(code / 5usize.pow((n - 1 - k) as u32) % 5))
                .collect()
        })
    }

    fn exhaustive_best(model: &Model, store: &ParamStore, notes: &[Note]) -> (Vec<Finger>, f64) {
        let mut best: Option<(Vec<Finger>, f64)> = None;
        // Lexicographic order, so strict improvement keeps the smaller on ties.
        for labels in all_sequences(notes.len()) {
            let ll = model.sequence_log_likelihood(store, notes, &labels).unwrap();
            if best.as_ref().is_none_or(|(_, b)| ll > *b) {
                best = Some((labels, ll));
            }
        }
        best.unwrap()
    }

    #[test]
    fn modes_round_trip() {
        for m in [DecodeMode::Greedy, DecodeMode::Beam, DecodeMode::Sample] {
            assert_eq!(DecodeMode::parse(m.name()), Some(m));
        }
    }

    #[test]
    fn width_one_beam_is_greedy() {
        for kind in ModelKind::ALL {
            let (model, store) = tiny_model(kind, 21);
            let notes = phrase(7);
            let greedy = greedy_decode(&model, &store, &notes).unwrap();
            assert_eq!(beam_decode(&model, &store, &notes, 1).unwrap().labels, greedy, "{kind}");
            assert_eq!(greedy.len(), 7);
        }
    }

    #[test]
    fn independent_greedy_is_stepwise_argmax() {
        let (model, store) = tiny_model(ModelKind::BiLstm, 22);
        let notes = phrase(6);
        let lps = model.independent_log_probs(&store, &notes).unwrap();
        let expected: Vec<Finger> = lps
            .iter()
            .map(|lp| Finger::from_index((0..5).fold(0, |b, k| if lp[k] > lp[b] { k } else { b })))
            .collect();
        assert_eq!(greedy_decode(&model, &store, &notes).unwrap(), expected);
    }

    #[test]
    fn saturated_beam_matches_exhaustive_search() {
        let notes = phrase(4);
        for kind in ModelKind::ALL {
            let (model, store) = tiny_model(kind, 23);
            let beam = beam_decode(&model, &store, &notes, 125).unwrap();
            let (labels, ll) = exhaustive_best(&model, &store, &notes);
            assert_eq!(beam.labels, labels, "{kind}");
            assert!((beam.score - ll).abs() < 1e-12);
        }
    }

    #[test]
    fn beam_score_is_the_sequence_likelihood() {
        for kind in ModelKind::ALL {
            let (model, store) = tiny_model(kind, 24);
            let notes = phrase(8);
            let hyp = beam_decode(&model, &store, &notes, 10).unwrap();
            let ll = model.sequence_log_likelihood(&store, &notes, &hyp.labels).unwrap();
            assert!((hyp.score - ll).abs() < 1e-10, "{kind}");
        }
    }

    #[test]
    fn sample_log_probs_match_recomputation() {
        let (model, store) = tiny_model(ModelKind::ArTagger, 25);
        let notes = phrase(6);
        let (labels, lps) = ancestral_sample(&model, &store, &notes, &mut Rng::seeded(1)).unwrap();
        let again = ancestral_sample(&model, &store, &notes, &mut Rng::seeded(1)).unwrap();
        assert_eq!((labels.clone(), lps.clone()), again);
        let tf = model.teacher_forced_log_probs(&store, &notes, &labels).unwrap();
        for ((lp, f), s) in tf.iter().zip(&labels).zip(&lps) {
            assert_eq!(lp[f.index()], *s);
        }
    }

    #[test]
    fn peaked_distributions_sample_the_greedy_path() {
        let (model, mut store) = tiny_model(ModelKind::PrevFinger, 26);
        // Sharpen every step by scaling the output layer.
        for p in store.iter_mut().filter(|p| p.name.starts_with("mlp.out")) {
            p.value.data_mut().iter_mut().for_each(|v| *v *= 200.0);
        }
        let notes = phrase(6);
        let greedy = greedy_decode(&model, &store, &notes).unwrap();
        let mut rng = Rng::seeded(2);
        let hits = (0..200)
            .filter(|_| ancestral_sample(&model, &store, &notes, &mut rng).unwrap().0 == greedy)
            .count();
        assert!(hits >= 190, "{hits}");
    }

    #[test]
    fn saturated_beam_dominates_narrower_beams() {
        for kind in ModelKind::ALL {
            let (model, store) = tiny_model(kind, 27);
            let notes = phrase(6);
            let best = beam_decode(&model, &store, &notes, 3125).unwrap().score;
            for w in [1, 2, 5, 25] {
                assert!(beam_decode(&model, &store, &notes, w).unwrap().score <= best + 1e-12, "{kind}: width {w}");
            }
        }
    }

    /// Beam search is a heuristic: widening it can drop the path a narrower
    /// beam would have kept.
    #[test]
    fn width_is_not_monotone_in_general() {
        let (model, store) = tiny_model(ModelKind::PrevFinger, 119);
        let notes = phrase(7);
        let w7 = beam_decode(&model, &store, &notes, 7).unwrap().score;
        let w8 = beam_decode(&model, &store, &notes, 8).unwrap().score;
        assert!(w8 < w7);
    }

    #[test]
    fn zero_width_is_rejected() {
        let (model, store) = tiny_model(ModelKind::BiLstm, 28);
        assert!(beam_decode(&model, &store, &phrase(3), 0).is_err());
    }

    #[test]
    fn parallel_decoding_keeps_order() {
        use crate::pig::Hand;
        let (model, store) = tiny_model(ModelKind::BinaryChecklist, 29);
        let parts: Vec<HandPart> = (3..8).map(|n| HandPart::new(format!("p{n}"), Hand::Right, phrase(n))).collect();
        let out = decode_parts(&model, &store, &parts, DecodeMode::Beam, 4, 0).unwrap();
        for (p, labels) in parts.iter().zip(&out) {
            assert_eq!(labels, &beam_decode(&model, &store, &p.notes, 4).unwrap().labels);
        }
    }
}
