//! Checklist features: what each finger has recently been doing, derived
//! from the notes so far and a label prefix (gold while teacher forcing, a
//! hypothesis while decoding).

use crate::encode::{lattice_step, LATTICE_CAP};
use crate::error::{Error, Result};
use crate::numcore::{Init, ParamId, ParamStore, Rng, Tape, Var};
use crate::pig::{Finger, Note};

/// Last note a finger was assigned to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FingerUse {
    pub index: usize,
    pub onset: f64,
    pub offset: f64,
    pub pitch: u8,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FingerRecency {
    slots: [Option<FingerUse>; 5],
}

impl FingerRecency {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records that `finger` played `note` (at position `index`).
    pub fn update(&self, index: usize, note: &Note, finger: Finger) -> Self {
        let mut next = *self;
        next.slots[finger.index()] = Some(FingerUse {
            index,
            onset: note.onset,
            offset: note.offset,
            pitch: note.pitch,
        });
        next
    }

    pub fn get(&self, finger: Finger) -> Option<&FingerUse> {
        self.slots[finger.index()].as_ref()
    }

    pub fn populated(&self) -> usize {
        self.slots.iter().flatten().count()
    }

    /// State after labelling `notes[..labels.len()]` with `labels`.
    pub fn from_prefix(notes: &[Note], labels: &[Finger]) -> Self {
        notes
            .iter()
            .zip(labels)
            .enumerate()
            .fold(Self::new(), |state, (i, (n, &f))| state.update(i, n, f))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecencyAnchor {
    /// Gap measured from the finger's last onset.
    Onset,
    /// Gap measured from the finger's last release.
    Offset,
}

impl RecencyAnchor {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "onset" => Some(RecencyAnchor::Onset),
            "offset" => Some(RecencyAnchor::Offset),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RecencyAnchor::Onset => "onset",
            RecencyAnchor::Offset => "offset",
        }
    }
}

/// A finger is recent when it was used within `window` seconds of the
/// current onset, or is still holding its key.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecencyRule {
    pub window: f64,
    pub anchor: RecencyAnchor,
}

impl Default for RecencyRule {
    fn default() -> Self {
        RecencyRule {
            window: 0.100,
            anchor: RecencyAnchor::Onset,
        }
    }
}

// Onsets are decimal seconds; 1.1 - 1.0 must still count as 100 ms.
const TIME_TOLERANCE: f64 = 1e-9;

impl RecencyRule {
    pub fn is_recent(&self, last: &FingerUse, current: &Note) -> bool {
        let reference = match self.anchor {
            RecencyAnchor::Onset => last.onset,
            RecencyAnchor::Offset => last.offset,
        };
        current.onset - reference <= self.window + TIME_TOLERANCE || last.offset > current.onset
    }

    fn recent<'a>(&'a self, state: &'a FingerRecency, current: &'a Note) -> impl Iterator<Item = (usize, Option<&'a FingerUse>)> + 'a {
        state.slots.iter().enumerate().map(move |(f, slot)| {
            (f, slot.as_ref().filter(|u| self.is_recent(u, current)))
        })
    }
}

/// +1 where a recent finger sits above the current pitch, -1 below, 0 when
/// level or not recent.
pub fn binary_checklist(state: &FingerRecency, current: &Note, rule: &RecencyRule) -> [f64; 5] {
    let mut out = [0.0; 5];
    for (f, recent) in rule.recent(state, current) {
        if let Some(u) = recent {
            out[f] = match u.pitch.cmp(&current.pitch) {
                std::cmp::Ordering::Greater => 1.0,
                std::cmp::Ordering::Less => -1.0,
                std::cmp::Ordering::Equal => 0.0,
            };
        }
    }
    out
}

/// Lattice displacement from each recent finger's key to the current key.
pub fn distance_slots(state: &FingerRecency, current: &Note, rule: &RecencyRule) -> [Option<(i8, i8)>; 5] {
    let mut out = [None; 5];
    for (f, recent) in rule.recent(state, current) {
        out[f] = recent.map(|u| lattice_step(u.pitch, current.pitch));
    }
    out
}

/// Per-finger lattice embeddings plus the shared dummy for idle fingers.
#[derive(Clone, Debug)]
pub struct DistanceChecklist {
    pub horizontal: [ParamId; 5],
    pub vertical: [ParamId; 5],
    pub dummy: ParamId,
    pub slot_width: usize,
}

impl DistanceChecklist {
    pub fn new(store: &mut ParamStore, slot_width: usize, rng: &mut Rng) -> Result<Self> {
        if !slot_width.is_multiple_of(2) || slot_width == 0 {
            return Err(Error::Config(format!("d_check = {slot_width} must be even and positive")));
        }
        let half = slot_width / 2;
        let horizontal = std::array::from_fn(|f| {
            store.add(
                format!("checklist.distance.f{}.horizontal", f + 1),
                &[2 * LATTICE_CAP as usize + 1, half],
                Init::FanIn,
                rng,
            )
        });
        let vertical = std::array::from_fn(|f| {
            store.add(format!("checklist.distance.f{}.vertical", f + 1), &[3, half], Init::FanIn, rng)
        });
        let dummy = store.add("checklist.distance.dummy", &[slot_width], Init::FanIn, rng);
        Ok(DistanceChecklist {
            horizontal,
            vertical,
            dummy,
            slot_width,
        })
    }

    pub fn width(&self) -> usize {
        5 * self.slot_width
    }

    pub fn feature(&self, tape: &mut Tape, store: &ParamStore, slots: &[Option<(i8, i8)>; 5]) -> Var {
        let mut parts = Vec::with_capacity(10);
        for (f, slot) in slots.iter().enumerate() {
            match *slot {
                Some((h, v)) => {
                    parts.push(tape.row(store, self.horizontal[f], (h as i32 + LATTICE_CAP) as usize));
                    parts.push(tape.row(store, self.vertical[f], (v + 1) as usize));
                }
                None => parts.push(tape.row(store, self.dummy, 0)),
            }
        }
        tape.concat(&parts)
    }
}

/// Embedding of the previous label; row 0 is the start-of-sequence row and
/// row `f` is finger `f`.
#[derive(Clone, Debug)]
pub struct LabelEmbedding {
    pub table: ParamId,
    pub width: usize,
}

impl LabelEmbedding {
    pub fn new(store: &mut ParamStore, name: &str, width: usize, rng: &mut Rng) -> Self {
        LabelEmbedding {
            table: store.add(name, &[6, width], Init::FanIn, rng),
            width,
        }
    }

    pub fn row_of(prev: Option<Finger>) -> usize {
        prev.map_or(0, |f| f.get() as usize)
    }

    pub fn feature(&self, tape: &mut Tape, store: &ParamStore, prev: Option<Finger>) -> Var {
        tape.row(store, self.table, Self::row_of(prev))
    }
}
