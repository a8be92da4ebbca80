//! The five taggers behind one step-wise contract.
//!
//! Every kind first computes per-note context vectors once per part (a
//! Bi-LSTM over the embedded notes, or for the autoregressive tagger a
//! backward-only LSTM). A step then combines the context of note `i` with
//! whatever the kind conditions on (nothing, the previous label, or a
//! checklist of recent finger use) and returns five logits.

use crate::checklist::{
    binary_checklist, distance_slots, DistanceChecklist, FingerRecency, LabelEmbedding, RecencyRule,
};
use crate::encode::{encode, InputEmbedding, Representation};
use crate::error::{Error, Result};
use crate::numcore::{dropout, log_softmax, BiLstm, LstmStack, Mlp, ParamStore, Rng, StackState, Tape, Var};
use crate::pig::{Finger, Note};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    BiLstm,
    ArTagger,
    PrevFinger,
    BinaryChecklist,
    DistanceChecklist,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::BiLstm,
        ModelKind::ArTagger,
        ModelKind::PrevFinger,
        ModelKind::BinaryChecklist,
        ModelKind::DistanceChecklist,
    ];

    /// Accepts both the model names and the checklist names
    /// (`none`, `autoregressive`, `binary`, `distance`).
    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "bilstm" | "none" => ModelKind::BiLstm,
            "ar_tagger" | "autoregressive" => ModelKind::ArTagger,
            "prev_finger" => ModelKind::PrevFinger,
            "binary_checklist" | "binary" => ModelKind::BinaryChecklist,
            "distance_checklist" | "distance" => ModelKind::DistanceChecklist,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::BiLstm => "bilstm",
            ModelKind::ArTagger => "ar_tagger",
            ModelKind::PrevFinger => "prev_finger",
            ModelKind::BinaryChecklist => "binary_checklist",
            ModelKind::DistanceChecklist => "distance_checklist",
        }
    }

    /// Whether step distributions depend on earlier labels.
    pub fn is_conditional(self) -> bool {
        self != ModelKind::BiLstm
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub input_rep: Representation,
    /// Per direction.
    pub hidden: usize,
    pub layers: usize,
    pub mlp_hidden: usize,
    pub mlp_layers: usize,
    pub dropout: f64,
    /// Input embedding width.
    pub d: usize,
    /// Checklist / label embedding width.
    pub d_check: usize,
    pub recency: RecencyRule,
}

impl ModelConfig {
    /// Small enough to train on a laptop core in minutes.
    pub fn desk() -> Self {
        ModelConfig {
            kind: ModelKind::BinaryChecklist,
            input_rep: Representation::Lattice,
            hidden: 64,
            layers: 2,
            mlp_hidden: 64,
            mlp_layers: 2,
            dropout: 0.2,
            d: 32,
            d_check: 32,
            recency: RecencyRule::default(),
        }
    }

    pub fn full() -> Self {
        ModelConfig {
            hidden: 1024,
            mlp_hidden: 1024,
            d: 256,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden),
            ("layers", self.layers),
            ("mlp_hidden", self.mlp_hidden),
            ("mlp_layers", self.mlp_layers),
            ("d", self.d),
            ("d_check", self.d_check),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.input_rep.table_rows().len() == 2 && !self.d.is_multiple_of(2) {
            return Err(Error::Config(format!("d = {} must be even for {}", self.d, self.input_rep)));
        }
        if self.kind == ModelKind::DistanceChecklist && !self.d_check.is_multiple_of(2) {
            return Err(Error::Config(format!("d_check = {} must be even", self.d_check)));
        }
        if self.recency.window.is_nan() || self.recency.window < 0.0 {
            return Err(Error::Config("recency window must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Encoder {
    Bidirectional(BiLstm),
    Autoregressive {
        forward: LstmStack,
        backward: LstmStack,
        label: LabelEmbedding,
    },
}

#[derive(Clone, Debug)]
enum Feature {
    None,
    Binary,
    Distance(DistanceChecklist),
    PrevFinger(LabelEmbedding),
}

/// Per-note inputs and context vectors for one part, as tape variables.
#[derive(Clone, Debug)]
pub struct Context {
    pub embedded: Vec<Var>,
    pub context: Vec<Var>,
}

/// Context values detached from any tape, shared by all decode hypotheses.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenContext {
    pub embedded: Vec<Vec<f64>>,
    pub context: Vec<Vec<f64>>,
}

/// Recurrent state of the autoregressive tagger as plain values.
pub type FrozenState = Vec<(Vec<f64>, Vec<f64>)>;

/// Position within a part plus everything a step conditions on. `R` is the
/// recurrent state representation: tape variables while training, plain
/// values while decoding.
#[derive(Clone, Debug, PartialEq)]
pub struct Cursor<R> {
    pub index: usize,
    pub prev: Option<Finger>,
    pub recency: FingerRecency,
    pub recurrent: Option<R>,
}

impl<R> Cursor<R> {
    /// Moves past note `index` labelled `label`.
    pub fn advance(&self, notes: &[Note], label: Finger, recurrent: Option<R>) -> Self {
        Cursor {
            index: self.index + 1,
            prev: Some(label),
            recency: self.recency.update(self.index, &notes[self.index], label),
            recurrent,
        }
    }
}

pub type TapeCursor = Cursor<StackState>;
pub type FrozenCursor = Cursor<FrozenState>;

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    embedding: InputEmbedding,
    encoder: Encoder,
    feature: Feature,
    mlp: Mlp,
}

impl Model {
    /// Creates every parameter in `store`, in a fixed order, drawing
    /// initial values from `rng`.
    pub fn new(config: ModelConfig, store: &mut ParamStore, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let embedding = InputEmbedding::new(store, config.input_rep, config.d, rng)?;
        let h = config.hidden;
        let encoder = match config.kind {
            ModelKind::ArTagger => Encoder::Autoregressive {
                backward: LstmStack::new(store, "encoder.bwd", config.d, h, config.layers, rng),
                forward: LstmStack::new(store, "encoder.fwd", config.d + config.d_check, h, config.layers, rng),
                label: LabelEmbedding::new(store, "encoder.label", config.d_check, rng),
            },
            _ => Encoder::Bidirectional(BiLstm::new(store, "encoder", config.d, h, config.layers, rng)),
        };
        let feature = match config.kind {
            ModelKind::BiLstm | ModelKind::ArTagger => Feature::None,
            ModelKind::BinaryChecklist => Feature::Binary,
            ModelKind::DistanceChecklist => Feature::Distance(DistanceChecklist::new(store, config.d_check, rng)?),
            ModelKind::PrevFinger => {
                Feature::PrevFinger(LabelEmbedding::new(store, "checklist.prev", config.d_check, rng))
            }
        };
        let feature_width = match &feature {
            Feature::None => 0,
            Feature::Binary => 5,
            Feature::Distance(dc) => dc.width(),
            Feature::PrevFinger(e) => e.width,
        };
        let mlp = Mlp::new(
            store,
            "mlp",
            2 * h + feature_width,
            config.mlp_hidden,
            config.mlp_layers,
            5,
            rng,
        );
        Ok(Model {
            config,
            embedding,
            encoder,
            feature,
            mlp,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    /// Embeds the notes and runs the label-independent encoder.
    pub fn context(&self, tape: &mut Tape, store: &ParamStore, notes: &[Note], train: bool, rng: &mut Rng) -> Context {
        let seq = encode(self.config.input_rep, notes);
        let embedded = self.embedding.embed(tape, store, &seq);
        let rate = self.config.dropout;
        let hidden = match &self.encoder {
            Encoder::Bidirectional(bi) => bi.forward(tape, store, &embedded, rate, rng, train),
            Encoder::Autoregressive { backward, .. } => backward.forward(tape, store, &embedded, true, rate, rng, train),
        };
        let context = hidden.into_iter().map(|v| dropout(tape, v, rate, rng, train)).collect();
        Context { embedded, context }
    }

    pub fn start(&self, tape: &mut Tape) -> TapeCursor {
        Cursor {
            index: 0,
            prev: None,
            recency: FingerRecency::new(),
            recurrent: match &self.encoder {
                Encoder::Autoregressive { forward, .. } => Some(forward.zero_state(tape)),
                Encoder::Bidirectional(_) => None,
            },
        }
    }

    /// Logits for note `cursor.index` given its embedding and context, plus
    /// the recurrent state to carry into the next step.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        notes: &[Note],
        embedded: Var,
        context: Var,
        cursor: &TapeCursor,
        train: bool,
        rng: &mut Rng,
    ) -> (Var, Option<StackState>) {
        let rate = self.config.dropout;
        let current = &notes[cursor.index];
        let (input, recurrent) = match &self.encoder {
            Encoder::Autoregressive { forward, label, .. } => {
                let state = cursor.recurrent.as_ref().expect("autoregressive cursor carries state");
                let prev = label.feature(tape, store, cursor.prev);
                let x = tape.concat(&[embedded, prev]);
                let (f, next) = forward.step(tape, store, state, x, rate, rng, train);
                let f = dropout(tape, f, rate, rng, train);
                (tape.concat(&[f, context]), Some(next))
            }
            Encoder::Bidirectional(_) => {
                let feature = match &self.feature {
                    Feature::None => None,
                    Feature::Binary => {
                        let b = binary_checklist(&cursor.recency, current, &self.config.recency);
                        Some(tape.constant(b.to_vec()))
                    }
                    Feature::Distance(dc) => {
                        let slots = distance_slots(&cursor.recency, current, &self.config.recency);
                        Some(dc.feature(tape, store, &slots))
                    }
                    Feature::PrevFinger(e) => Some(e.feature(tape, store, cursor.prev)),
                };
                let input = match feature {
                    Some(f) => tape.concat(&[context, f]),
                    None => context,
                };
                (input, None)
            }
        };
        let logits = self.mlp.forward(tape, store, input, rate, rng, train);
        (logits, recurrent)
    }

    /// Logits for every note under the given labels (teacher forcing).
    #[allow(clippy::too_many_arguments)]
    pub fn teacher_forced(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        notes: &[Note],
        context: &Context,
        labels: &[Finger],
        train: bool,
        rng: &mut Rng,
    ) -> Vec<Var> {
        let mut cursor = self.start(tape);
        let mut out = Vec::with_capacity(notes.len());
        for (i, &label) in labels.iter().enumerate() {
            let (logits, recurrent) =
                self.step(tape, store, notes, context.embedded[i], context.context[i], &cursor, train, rng);
            out.push(logits);
            cursor = cursor.advance(notes, label, recurrent);
        }
        out
    }

    /// Eval-mode context values for decoding.
    pub fn freeze(&self, store: &ParamStore, notes: &[Note]) -> Result<FrozenContext> {
        let mut tape = Tape::new();
        let mut rng = Rng::seeded(0);
        let ctx = self.context(&mut tape, store, notes, false, &mut rng);
        tape.check_finite()?;
        Ok(FrozenContext {
            embedded: ctx.embedded.iter().map(|&v| tape.value(v).to_vec()).collect(),
            context: ctx.context.iter().map(|&v| tape.value(v).to_vec()).collect(),
        })
    }

    pub fn frozen_start(&self) -> FrozenCursor {
        Cursor {
            index: 0,
            prev: None,
            recency: FingerRecency::new(),
            recurrent: match &self.encoder {
                Encoder::Autoregressive { forward, .. } => {
                    let zero = vec![0.0; forward.hidden()];
                    Some(vec![(zero.clone(), zero); forward.layers.len()])
                }
                Encoder::Bidirectional(_) => None,
            },
        }
    }

    /// Eval-mode log probabilities at `cursor` and the next recurrent state.
    pub fn frozen_step(
        &self,
        store: &ParamStore,
        notes: &[Note],
        frozen: &FrozenContext,
        cursor: &FrozenCursor,
    ) -> Result<([f64; 5], Option<FrozenState>)> {
        let i = cursor.index;
        if i >= notes.len() || frozen.context.len() != notes.len() {
            return Err(Error::LengthMismatch {
                expected: notes.len(),
                actual: frozen.context.len().max(i + 1),
            });
        }
        let mut tape = Tape::new();
        let mut rng = Rng::seeded(0);
        let embedded = tape.constant(frozen.embedded[i].clone());
        let context = tape.constant(frozen.context[i].clone());
        let state = cursor.recurrent.as_ref().map(|layers| {
            layers
                .iter()
                .map(|(h, c)| (tape.constant(h.clone()), tape.constant(c.clone())))
                .collect::<StackState>()
        });
        let tape_cursor = Cursor {
            index: i,
            prev: cursor.prev,
            recency: cursor.recency,
            recurrent: state,
        };
        let (logits, next) = self.step(&mut tape, store, notes, embedded, context, &tape_cursor, false, &mut rng);
        tape.check_finite()?;
        let lp = log_softmax(tape.value(logits));
        let next = next.map(|layers| {
            layers
                .iter()
                .map(|&(h, c)| (tape.value(h).to_vec(), tape.value(c).to_vec()))
                .collect()
        });
        Ok(([lp[0], lp[1], lp[2], lp[3], lp[4]], next))
    }

    /// Per-step log distributions under the given labels, eval mode.
    pub fn teacher_forced_log_probs(&self, store: &ParamStore, notes: &[Note], labels: &[Finger]) -> Result<Vec<[f64; 5]>> {
        if labels.len() != notes.len() {
            return Err(Error::LengthMismatch {
                expected: notes.len(),
                actual: labels.len(),
            });
        }
        let frozen = self.freeze(store, notes)?;
        let mut cursor = self.frozen_start();
        let mut out = Vec::with_capacity(notes.len());
        for &label in labels {
            let (lp, next) = self.frozen_step(store, notes, &frozen, &cursor)?;
            out.push(lp);
            cursor = cursor.advance(notes, label, next);
        }
        Ok(out)
    }

    /// `log p(labels | notes)` under the chain-rule factorization.
    pub fn sequence_log_likelihood(&self, store: &ParamStore, notes: &[Note], labels: &[Finger]) -> Result<f64> {
        let lps = self.teacher_forced_log_probs(store, notes, labels)?;
        Ok(lps.iter().zip(labels).map(|(lp, f)| lp[f.index()]).sum())
    }

    /// Label-free per-note log distributions; only meaningful for the
    /// Bi-LSTM kind.
    pub fn independent_log_probs(&self, store: &ParamStore, notes: &[Note]) -> Result<Vec<[f64; 5]>> {
        if self.kind().is_conditional() {
            return Err(Error::Config(format!("{} is not an independent model", self.kind())));
        }
        let frozen = self.freeze(store, notes)?;
        let mut cursor = self.frozen_start();
        let mut out = Vec::with_capacity(notes.len());
        for _ in 0..notes.len() {
            let (lp, next) = self.frozen_step(store, notes, &frozen, &cursor)?;
            out.push(lp);
            cursor = cursor.advance(notes, Finger::THUMB, next);
        }
        Ok(out)
    }
}
