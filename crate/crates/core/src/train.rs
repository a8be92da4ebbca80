//! Teacher-forced cross entropy mixed with REINFORCE over short chunks,
//! Adam per (part, annotator) example, validation-driven checkpoints.

use std::collections::VecDeque;
use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::Config;
use crate::decode::decode_parts;
use crate::error::{Error, Result};
use crate::metrics::{aggregate, evaluate_part, MetricsReport};
use crate::model::{Model, TapeCursor};
use crate::numcore::{adam_step, AdamConfig, ParamStore, Rng, Tape, Var};
use crate::pig::{Finger, HandPart, Note};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub lambda_rl: f64,
    pub chunk_len: usize,
    pub baseline_window: usize,
    pub warmup_epochs: usize,
    pub seed: u64,
    pub eval_every: usize,
    /// Score chunks with the metric definitions (overlapping pairs are
    /// smears only) instead of the two overlapping sets.
    pub reward_disjoint: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            epochs: 50,
            lambda_rl: 1.0,
            chunk_len: 10,
            baseline_window: 50,
            warmup_epochs: 10,
            seed: 0,
            eval_every: 1,
            reward_disjoint: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr {} must be positive", self.lr)));
        }
        if self.chunk_len < 2 {
            return Err(Error::Config("chunk_len must be at least 2".into()));
        }
        if self.baseline_window < 1 {
            return Err(Error::Config("baseline_window must be at least 1".into()));
        }
        if !(self.lambda_rl >= 0.0 && self.lambda_rl.is_finite()) {
            return Err(Error::Config("lambda_rl must be non-negative".into()));
        }
        if self.eval_every < 1 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// `exp(-(a + b))` with `a` the same-finger pairs on different keys and `b`
/// the same-finger pairs that overlap in time. A pair can land in both.
/// With `disjoint`, overlapping pairs count once (as smears) and repeated
/// keys are never penalised, matching the hop/smear metrics.
pub fn reward(notes: &[Note], labels: &[Finger], disjoint: bool) -> f64 {
    let mut penalty = 0u32;
    for i in 1..labels.len().min(notes.len()) {
        if labels[i - 1] != labels[i] {
            continue;
        }
        let overlap = notes[i - 1].overlaps(&notes[i]);
        let moved = notes[i - 1].pitch != notes[i].pitch;
        penalty += if disjoint {
            (overlap || moved) as u32
        } else {
            moved as u32 + overlap as u32
        };
    }
    (-(penalty as f64)).exp()
}

/// Rolling mean of the most recent chunk rewards.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardBaseline {
    pub window: usize,
    pub rewards: VecDeque<f64>,
}

impl RewardBaseline {
    pub fn new(window: usize) -> Self {
        RewardBaseline {
            window,
            rewards: VecDeque::with_capacity(window),
        }
    }

    pub fn mean(&self) -> Option<f64> {
        if self.rewards.is_empty() {
            None
        } else {
            Some(self.rewards.iter().sum::<f64>() / self.rewards.len() as f64)
        }
    }

    pub fn push(&mut self, r: f64) {
        if self.rewards.len() == self.window {
            self.rewards.pop_front();
        }
        self.rewards.push_back(r);
    }
}

/// Consecutive chunks of `len` notes; a shorter tail is kept when it has at
/// least two notes.
pub fn chunks(n: usize, len: usize) -> Vec<Range<usize>> {
    (0..n)
        .step_by(len.max(1))
        .map(|s| s..(s + len).min(n))
        .filter(|r| r.len() >= 2)
        .collect()
}

/// `((r_bar - r) / N) * sum(log p)`: the REINFORCE surrogate whose
/// gradient is the policy-gradient estimate. Reward and baseline are
/// constants.
pub fn reinforce_surrogate(tape: &mut Tape, log_probs: &[Var], reward: f64, baseline: f64) -> Var {
    let coef = (baseline - reward) / log_probs.len() as f64;
    let terms: Vec<(Var, f64)> = log_probs.iter().map(|&v| (v, coef)).collect();
    tape.weighted_sum(&terms)
}

/// Single-sample REINFORCE gradient for a lone softmax policy over the five
/// labels with fixed per-label rewards. Returns d(surrogate)/d(logits).
pub fn toy_policy_gradient(logits: &[f64; 5], rewards: &[f64; 5], baseline: f64, rng: &mut Rng) -> [f64; 5] {
    let mut store = ParamStore::new();
    let theta = store.insert(
        "policy.logits".into(),
        crate::numcore::Tensor::from_vec(&[5], logits.to_vec()).expect("five logits"),
    );
    let mut tape = Tape::new();
    let z = tape.row(&store, theta, 0);
    let lp = tape.log_softmax(z);
    let probs: Vec<f64> = tape.value(lp).iter().map(|v| v.exp()).collect();
    let k = rng.categorical(&probs);
    let pick = tape.pick(lp, k);
    let loss = reinforce_surrogate(&mut tape, &[pick], rewards[k], baseline);
    tape.backward(loss, &mut store);
    let g = &store.get(theta).grad;
    [g[0], g[1], g[2], g[3], g[4]]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossOptions<'a> {
    pub lambda: f64,
    pub chunk_len: usize,
    pub reward_disjoint: bool,
    /// Fixed chunk labels instead of sampling (one entry per chunk).
    pub presampled: Option<&'a [Vec<Finger>]>,
}

pub struct LossOutput {
    pub tape: Tape,
    pub loss: Var,
    pub ce: f64,
    /// Unscaled REINFORCE term (before `lambda`).
    pub rl: f64,
    pub rewards: Vec<f64>,
    pub samples: Vec<Vec<Finger>>,
}

/// Builds the mixed objective for one example on a fresh tape. The RL part
/// is skipped entirely (no random draws) when `lambda` is 0. The baseline
/// is updated after each chunk's contribution has been formed; an empty
/// baseline gives that chunk zero advantage.
#[allow(clippy::too_many_arguments)]
pub fn example_loss(
    model: &Model,
    store: &ParamStore,
    notes: &[Note],
    gold: &[Finger],
    opts: &LossOptions,
    baseline: &mut RewardBaseline,
    rng: &mut Rng,
    train: bool,
) -> Result<LossOutput> {
    if gold.len() != notes.len() || notes.is_empty() {
        return Err(Error::LengthMismatch {
            expected: notes.len(),
            actual: gold.len(),
        });
    }
    let mut tape = Tape::new();
    let ctx = model.context(&mut tape, store, notes, train, rng);

    let mut cursor = model.start(&mut tape);
    let mut cursors: Vec<TapeCursor> = Vec::with_capacity(notes.len());
    let mut gold_terms = Vec::with_capacity(notes.len());
    for (i, &label) in gold.iter().enumerate() {
        let (logits, recurrent) =
            model.step(&mut tape, store, notes, ctx.embedded[i], ctx.context[i], &cursor, train, rng);
        let lp = tape.log_softmax(logits);
        let pick = tape.pick(lp, label.index());
        gold_terms.push((pick, -1.0 / notes.len() as f64));
        let next = cursor.advance(notes, label, recurrent);
        cursors.push(std::mem::replace(&mut cursor, next));
    }
    let ce_var = tape.weighted_sum(&gold_terms);
    let ce = tape.scalar(ce_var);

    let mut terms = vec![(ce_var, 1.0)];
    let mut rl = 0.0;
    let mut rewards = Vec::new();
    let mut samples = Vec::new();
    if opts.lambda > 0.0 {
        for (c, range) in chunks(notes.len(), opts.chunk_len).into_iter().enumerate() {
            let mut cursor = cursors[range.start].clone();
            let mut picks = Vec::with_capacity(range.len());
            let mut labels = Vec::with_capacity(range.len());
            for (j, i) in range.clone().enumerate() {
                let (logits, recurrent) =
                    model.step(&mut tape, store, notes, ctx.embedded[i], ctx.context[i], &cursor, train, rng);
                let lp = tape.log_softmax(logits);
                let k = match opts.presampled {
                    Some(fixed) => fixed[c][j].index(),
                    None => {
                        let probs: Vec<f64> = tape.value(lp).iter().map(|v| v.exp()).collect();
                        rng.categorical(&probs)
                    }
                };
                picks.push(tape.pick(lp, k));
                let f = Finger::from_index(k);
                labels.push(f);
                cursor = cursor.advance(notes, f, recurrent);
            }
            let r = reward(&notes[range], &labels, opts.reward_disjoint);
            let r_bar = baseline.mean().unwrap_or(r);
            let term = reinforce_surrogate(&mut tape, &picks, r, r_bar);
            rl += tape.scalar(term);
            terms.push((term, opts.lambda));
            baseline.push(r);
            rewards.push(r);
            samples.push(labels);
        }
    }
    let loss = tape.weighted_sum(&terms);
    tape.check_finite()?;
    Ok(LossOutput {
        tape,
        loss,
        ce,
        rl,
        rewards,
        samples,
    })
}

/// Mean per-note cross entropy of `gold` in eval mode (no gradients).
pub fn ce_loss(model: &Model, store: &ParamStore, notes: &[Note], gold: &[Finger]) -> Result<f64> {
    let lps = model.teacher_forced_log_probs(store, notes, gold)?;
    Ok(-lps.iter().zip(gold).map(|(lp, f)| lp[f.index()]).sum::<f64>() / gold.len().max(1) as f64)
}

/// Every (part, annotator) pair is one example.
pub fn examples(parts: &[HandPart]) -> Vec<(usize, usize)> {
    parts
        .iter()
        .enumerate()
        .flat_map(|(p, part)| (0..part.annotations.len()).map(move |a| (p, a)))
        .collect()
}

/// Decodes `parts` with the configured strategy and scores them.
pub fn evaluate_model(model: &Model, store: &ParamStore, parts: &[HandPart], config: &Config) -> Result<MetricsReport> {
    let predictions = decode_parts(model, store, parts, config.decode, config.beam_width, config.train.seed)?;
    let reports = parts
        .iter()
        .zip(&predictions)
        .map(|(part, pred)| evaluate_part(part, pred))
        .collect::<Result<Vec<_>>>()?;
    aggregate(&reports)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub store: ParamStore,
    pub rng: Rng,
    pub baseline: RewardBaseline,
    /// Completed epochs.
    pub epoch: usize,
    pub global_step: u64,
    pub best_m_gen: Option<f64>,
    pub best_fourgram: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub steps: usize,
    pub ce_loss: f64,
    pub rl_loss: f64,
    pub r_bar: Option<f64>,
    pub rl_active: bool,
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub epoch: usize,
    pub step: u64,
    pub ce_loss: f64,
    pub rl_loss: f64,
    pub r_bar: Option<f64>,
    pub val_m_gen: Option<f64>,
    pub val_fourgram: Option<f64>,
    pub val_hop: Option<u64>,
    pub val_smear: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Model,
    pub config: Config,
    pub state: TrainState,
}

impl Trainer {
    pub fn new(config: Config) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::seeded(config.train.seed);
        let mut store = ParamStore::new();
        let model = Model::new(config.model.clone(), &mut store, &mut rng)?;
        let baseline = RewardBaseline::new(config.train.baseline_window);
        Ok(Trainer {
            model,
            config,
            state: TrainState {
                store,
                rng,
                baseline,
                epoch: 0,
                global_step: 0,
                best_m_gen: None,
                best_fourgram: None,
            },
        })
    }

    /// Whether the REINFORCE term is on for the current epoch.
    pub fn rl_active(&self) -> bool {
        self.config.train.lambda_rl > 0.0 && self.state.epoch >= self.config.train.warmup_epochs
    }

    /// Loss, backward pass and one Adam step. Returns `(ce, rl)`.
    pub fn train_example(&mut self, notes: &[Note], gold: &[Finger]) -> Result<(f64, f64)> {
        let cfg = &self.config.train;
        let opts = LossOptions {
            lambda: if self.rl_active() { cfg.lambda_rl } else { 0.0 },
            chunk_len: cfg.chunk_len,
            reward_disjoint: cfg.reward_disjoint,
            presampled: None,
        };
        let st = &mut self.state;
        let out = example_loss(&self.model, &st.store, notes, gold, &opts, &mut st.baseline, &mut st.rng, true)?;
        out.tape.backward(out.loss, &mut st.store);
        if !st.store.grads_finite() {
            return Err(Error::NonFinite { op: "backward" });
        }
        adam_step(&mut st.store, &AdamConfig::with_lr(cfg.lr));
        st.global_step += 1;
        Ok((out.ce, out.rl))
    }

    /// One shuffled pass over every (part, annotator) example.
    pub fn train_epoch(&mut self, parts: &[HandPart]) -> Result<EpochStats> {
        let mut order = examples(parts);
        if order.is_empty() {
            return Err(Error::Dataset("no annotated training parts".into()));
        }
        self.state.rng.shuffle(&mut order);
        let rl_active = self.rl_active();
        let (mut ce, mut rl) = (0.0, 0.0);
        for &(p, a) in &order {
            let part = &parts[p];
            let (c, r) = self.train_example(&part.notes, &part.annotations[a]).map_err(|e| {
                Error::Dataset(format!(
                    "epoch {} step {}, {} annotator {}: {e}",
                    self.state.epoch + 1,
                    self.state.global_step + 1,
                    part.source_id,
                    part.annotators.get(a).map_or("?", |s| s.as_str())
                ))
            })?;
            ce += c;
            rl += r;
        }
        self.state.epoch += 1;
        let n = order.len() as f64;
        Ok(EpochStats {
            epoch: self.state.epoch,
            steps: order.len(),
            ce_loss: ce / n,
            rl_loss: rl / n,
            r_bar: self.state.baseline.mean(),
            rl_active,
        })
    }

    pub fn evaluate(&self, parts: &[HandPart]) -> Result<MetricsReport> {
        evaluate_model(&self.model, &self.state.store, parts, &self.config)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(&self.config, &self.state)
    }

    /// Rebuilds a trainer from a checkpoint written under the same
    /// configuration (the epoch budget may differ).
    pub fn resume(config: Config, ckpt: Checkpoint) -> Result<Self> {
        let fresh = Trainer::new(config)?;
        ckpt.check_resumable(&fresh.config)?;
        let state = ckpt.into_state(&fresh.state.store)?;
        Ok(Trainer { state, ..fresh })
    }
}

pub const LOG_FILE: &str = "train.jsonl";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_M_GEN_CHECKPOINT: &str = "best_m_gen.ckpt";
pub const BEST_FOURGRAM_CHECKPOINT: &str = "best_fourgram.ckpt";

/// Trains until the configured epoch count, writing the log, the latest
/// checkpoint and the two best-validation checkpoints into `out_dir`.
/// When the trainer was resumed, the log is cut back to its completed
/// epochs first so a resumed run writes exactly what an uninterrupted one
/// would.
pub fn fit(
    trainer: &mut Trainer,
    train: &[HandPart],
    val: &[HandPart],
    out_dir: &Path,
    mut progress: impl FnMut(&LogRecord),
) -> Result<Vec<LogRecord>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let log_path = out_dir.join(LOG_FILE);
    let kept: Vec<String> = match fs::read_to_string(&log_path) {
        Ok(text) if trainer.state.epoch > 0 => text.lines().take(trainer.state.epoch).map(String::from).collect(),
        _ => Vec::new(),
    };
    if kept.len() != trainer.state.epoch {
        return Err(Error::Dataset(format!(
            "{} has {} records but the checkpoint is at epoch {}",
            log_path.display(),
            kept.len(),
            trainer.state.epoch
        )));
    }
    let mut log = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    for line in &kept {
        writeln!(log, "{line}").map_err(|e| Error::io(&log_path, e))?;
    }

    let mut records = Vec::new();
    while trainer.state.epoch < trainer.config.train.epochs {
        let stats = trainer.train_epoch(train)?;
        let mut record = LogRecord {
            epoch: stats.epoch,
            step: trainer.state.global_step,
            ce_loss: stats.ce_loss,
            rl_loss: stats.rl_loss,
            r_bar: stats.r_bar,
            val_m_gen: None,
            val_fourgram: None,
            val_hop: None,
            val_smear: None,
        };
        if !val.is_empty() && stats.epoch % trainer.config.train.eval_every == 0 {
            let report = trainer.evaluate(val)?;
            record.val_m_gen = Some(report.m_gen);
            record.val_fourgram = Some(report.fourgram());
            record.val_hop = Some(report.fluency.hop);
            record.val_smear = Some(report.fluency.smear);
            let st = &mut trainer.state;
            let better_m_gen = st.best_m_gen.is_none_or(|b| report.m_gen > b);
            let better_fourgram = st.best_fourgram.is_none_or(|b| report.fourgram() > b);
            if better_m_gen {
                st.best_m_gen = Some(report.m_gen);
            }
            if better_fourgram {
                st.best_fourgram = Some(report.fourgram());
            }
            let ckpt = trainer.checkpoint();
            if better_m_gen {
                ckpt.save(&out_dir.join(BEST_M_GEN_CHECKPOINT))?;
            }
            if better_fourgram {
                ckpt.save(&out_dir.join(BEST_FOURGRAM_CHECKPOINT))?;
            }
        }
        let line = serde_json::to_string(&record).map_err(|e| Error::Dataset(e.to_string()))?;
        writeln!(log, "{line}").map_err(|e| Error::io(&log_path, e))?;
        log.flush().map_err(|e| Error::io(&log_path, e))?;
        trainer.checkpoint().save(&out_dir.join(LAST_CHECKPOINT))?;
        progress(&record);
        records.push(record);
    }
    Ok(records)
}
