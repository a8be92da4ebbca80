//! Self-describing binary checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic "PFCKPT\0\0", version u32
//! config echo          u32 length + UTF-8
//! param count u32, then per param:
//!     name             u32 length + UTF-8
//!     rank u32, dims   u64 each
//!     value, m, v      f64 each
//! optimizer step       u64
//! rng seed u64, rng word position u128
//! baseline window u64, count u32, rewards f64 each
//! epoch u64, global step u64
//! best m_gen, best fourgram: u8 present flag + f64
//! ```

use std::fs;
use std::path::Path;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numcore::{ParamStore, Rng, RngState, Tensor};
use crate::train::{RewardBaseline, TrainState};

const MAGIC: &[u8; 8] = b"PFCKPT\0\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct SavedParam {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_text: String,
    pub params: Vec<SavedParam>,
    pub adam_step: u64,
    pub rng: RngState,
    pub baseline_window: usize,
    pub baseline: Vec<f64>,
    pub epoch: usize,
    pub global_step: u64,
    pub best_m_gen: Option<f64>,
    pub best_fourgram: Option<f64>,
}

impl Checkpoint {
    pub fn capture(config: &Config, state: &TrainState) -> Self {
        Checkpoint {
            config_text: config.to_text(),
            params: state
                .store
                .iter()
                .map(|p| SavedParam {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    value: p.value.data().to_vec(),
                    m: p.m.clone(),
                    v: p.v.clone(),
                })
                .collect(),
            adam_step: state.store.step,
            rng: state.rng.state(),
            baseline_window: state.baseline.window,
            baseline: state.baseline.rewards.iter().copied().collect(),
            epoch: state.epoch,
            global_step: state.global_step,
            best_m_gen: state.best_m_gen,
            best_fourgram: state.best_fourgram,
        }
    }

    pub fn config(&self) -> Result<Config> {
        Config::parse(&self.config_text).map_err(|e| Error::Checkpoint(format!("stored config: {e}")))
    }

    /// Errors unless `config` matches the stored one (apart from the epoch
    /// budget).
    pub fn check_resumable(&self, config: &Config) -> Result<()> {
        let stored = self.config()?;
        if stored.resume_key() != config.resume_key() {
            let diff: Vec<String> = stored
                .resume_key()
                .lines()
                .zip(config.resume_key().lines())
                .filter(|(a, b)| a != b)
                .map(|(a, b)| format!("checkpoint `{a}` vs `{b}`"))
                .collect();
            return Err(Error::Checkpoint(format!("config mismatch: {}", diff.join(", "))));
        }
        Ok(())
    }

    /// Parameter values (and moments) laid out like `template`, which must
    /// have the same names and shapes in the same order.
    pub fn params_like(&self, template: &ParamStore) -> Result<ParamStore> {
        if self.params.len() != template.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameters, the model {}",
                self.params.len(),
                template.len()
            )));
        }
        let mut store = ParamStore::new();
        for (saved, expected) in self.params.iter().zip(template.iter()) {
            if saved.name != expected.name || saved.shape != expected.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{}` {:?} does not match model parameter `{}` {:?}",
                    saved.name,
                    saved.shape,
                    expected.name,
                    expected.value.shape()
                )));
            }
            let id = store.insert(saved.name.clone(), Tensor::from_vec(&saved.shape, saved.value.clone())?);
            let p = store.get_mut(id);
            p.m.clone_from(&saved.m);
            p.v.clone_from(&saved.v);
        }
        store.step = self.adam_step;
        Ok(store)
    }

    pub fn into_state(self, template: &ParamStore) -> Result<TrainState> {
        let store = self.params_like(template)?;
        let mut baseline = RewardBaseline::new(self.baseline_window);
        baseline.rewards.extend(self.baseline.iter().copied());
        Ok(TrainState {
            store,
            rng: Rng::restore(self.rng),
            baseline,
            epoch: self.epoch,
            global_step: self.global_step,
            best_m_gen: self.best_m_gen,
            best_fourgram: self.best_fourgram,
        })
    }

    /// The stored config, a model built from it and the trained parameters.
    pub fn model(&self) -> Result<(Config, Model, ParamStore)> {
        let config = self.config()?;
        let mut template = ParamStore::new();
        let model = Model::new(config.model.clone(), &mut template, &mut Rng::seeded(0))?;
        let store = self.params_like(&template)?;
        Ok((config, model, store))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        w.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_str(&mut w, &self.config_text);
        w.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in &self.params {
            put_str(&mut w, &p.name);
            w.extend_from_slice(&(p.shape.len() as u32).to_le_bytes());
            for &d in &p.shape {
                w.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for x in p.value.iter().chain(&p.m).chain(&p.v) {
                w.extend_from_slice(&x.to_le_bytes());
            }
        }
        w.extend_from_slice(&self.adam_step.to_le_bytes());
        w.extend_from_slice(&self.rng.seed.to_le_bytes());
        w.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        w.extend_from_slice(&(self.baseline_window as u64).to_le_bytes());
        w.extend_from_slice(&(self.baseline.len() as u32).to_le_bytes());
        for r in &self.baseline {
            w.extend_from_slice(&r.to_le_bytes());
        }
        w.extend_from_slice(&(self.epoch as u64).to_le_bytes());
        w.extend_from_slice(&self.global_step.to_le_bytes());
        for best in [self.best_m_gen, self.best_fourgram] {
            w.push(best.is_some() as u8);
            w.extend_from_slice(&best.unwrap_or(0.0).to_le_bytes());
        }
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let config_text = r.string()?;
        let n_params = r.u32()? as usize;
        let mut params = Vec::with_capacity(n_params.min(1 << 16));
        for _ in 0..n_params {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|&n| n <= r.remaining() / 8)
                .ok_or_else(|| Error::Checkpoint(format!("parameter `{name}`: bad shape {shape:?}")))?;
            let value = r.f64s(n)?;
            let m = r.f64s(n)?;
            let v = r.f64s(n)?;
            params.push(SavedParam { name, shape, value, m, v });
        }
        let adam_step = r.u64()?;
        let rng = RngState {
            seed: r.u64()?,
            word_pos: u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes")),
        };
        let baseline_window = r.u64()? as usize;
        let n_base = r.u32()? as usize;
        let baseline = r.f64s(n_base)?;
        let epoch = r.u64()? as usize;
        let global_step = r.u64()?;
        let mut best = [None, None];
        for b in &mut best {
            let present = r.take(1)?[0] != 0;
            let v = r.f64()?;
            *b = present.then_some(v);
        }
        if r.remaining() != 0 {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Checkpoint {
            config_text,
            params,
            adam_step,
            rng,
            baseline_window,
            baseline,
            epoch,
            global_step,
            best_m_gen: best[0],
            best_fourgram: best[1],
        })
    }

    /// Writes via a temporary file and a rename, so a crash never leaves a
    /// half-written checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("ckpt.tmp");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}

fn put_str(w: &mut Vec<u8>, s: &str) {
    w.extend_from_slice(&(s.len() as u32).to_le_bytes());
    w.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("invalid UTF-8".into()))
    }
}
