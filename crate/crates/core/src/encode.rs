//! Input representations: how a note sequence becomes embedding indices.

use std::fmt;

use crate::error::{Error, Result};
use crate::numcore::{Init, ParamId, ParamStore, Rng, Tape, Var};
use crate::pig::{Note, LOWEST_PITCH};

pub const REL_DIST_CAP: i32 = 15;
pub const LATTICE_CAP: i32 = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Representation {
    RawPitch,
    NoteOctave,
    NoteRelDist,
    Lattice,
}

impl Representation {
    pub const ALL: [Representation; 4] = [
        Representation::RawPitch,
        Representation::NoteOctave,
        Representation::NoteRelDist,
        Representation::Lattice,
    ];

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "raw_pitch" => Some(Representation::RawPitch),
            "note_octave" => Some(Representation::NoteOctave),
            "note_reldist" => Some(Representation::NoteRelDist),
            "lattice" => Some(Representation::Lattice),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Representation::RawPitch => "raw_pitch",
            Representation::NoteOctave => "note_octave",
            Representation::NoteRelDist => "note_reldist",
            Representation::Lattice => "lattice",
        }
    }

    /// Row count of each sub-embedding table.
    pub fn table_rows(self) -> &'static [usize] {
        match self {
            Representation::RawPitch => &[88],
            Representation::NoteOctave => &[12, 8],
            Representation::NoteRelDist => &[12, 2 * REL_DIST_CAP as usize + 1],
            Representation::Lattice => &[2 * LATTICE_CAP as usize + 1, 3],
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-note encoding under one representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Token {
    /// `pitch - 21`, in `[0, 87]`.
    Raw(u8),
    NoteOctave { note: u8, octave: u8 },
    NoteRel { note: u8, delta: i8 },
    Lattice { horizontal: i8, vertical: i8 },
}

impl Token {
    /// Row index into each sub-table.
    pub fn rows(self) -> Vec<usize> {
        match self {
            Token::Raw(i) => vec![i as usize],
            Token::NoteOctave { note, octave } => vec![note as usize, octave as usize],
            Token::NoteRel { note, delta } => {
                vec![note as usize, (delta as i32 + REL_DIST_CAP) as usize]
            }
            Token::Lattice {
                horizontal,
                vertical,
            } => vec![
                (horizontal as i32 + LATTICE_CAP) as usize,
                (vertical + 1) as usize,
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedSeq {
    pub rep: Representation,
    pub tokens: Vec<Token>,
}

pub fn is_black(pitch: u8) -> bool {
    matches!(pitch % 12, 1 | 3 | 6 | 8 | 10)
}

/// Number of white keys in `[21, pitch]` minus one; a black key shares the
/// ordinal of the white key just below it.
pub fn white_ordinal(pitch: u8) -> i32 {
    // white keys among pitch classes 0..=k
    const CUMULATIVE: [i32; 12] = [1, 1, 2, 2, 3, 4, 4, 5, 5, 6, 6, 7];
    let whites_upto = |p: i32| 7 * (p / 12) + CUMULATIVE[(p % 12) as usize];
    whites_upto(pitch as i32) - whites_upto(LOWEST_PITCH as i32 - 1) - 1
}

/// `(horizontal, vertical)` lattice displacement from `from` to `to`.
pub fn lattice_step(from: u8, to: u8) -> (i8, i8) {
    let horizontal = (white_ordinal(to) - white_ordinal(from)).clamp(-LATTICE_CAP, LATTICE_CAP);
    let vertical = is_black(to) as i8 - is_black(from) as i8;
    (horizontal as i8, vertical)
}

fn note_class(pitch: u8) -> u8 {
    pitch % 12
}

pub fn encode_raw_pitch(notes: &[Note]) -> EncodedSeq {
    EncodedSeq {
        rep: Representation::RawPitch,
        tokens: notes
            .iter()
            .map(|n| Token::Raw(n.pitch - LOWEST_PITCH))
            .collect(),
    }
}

pub fn encode_note_octave(notes: &[Note]) -> EncodedSeq {
    EncodedSeq {
        rep: Representation::NoteOctave,
        tokens: notes
            .iter()
            .map(|n| Token::NoteOctave {
                note: note_class(n.pitch),
                octave: (n.pitch as i32 / 12 - 1).clamp(0, 7) as u8,
            })
            .collect(),
    }
}

/// Previous pitch for each note; the first note is its own predecessor.
fn predecessors(notes: &[Note]) -> impl Iterator<Item = (u8, u8)> + '_ {
    notes.iter().enumerate().map(|(i, n)| {
        let prev = if i == 0 { n.pitch } else { notes[i - 1].pitch };
        (prev, n.pitch)
    })
}

pub fn encode_note_reldist(notes: &[Note]) -> EncodedSeq {
    EncodedSeq {
        rep: Representation::NoteRelDist,
        tokens: predecessors(notes)
            .map(|(prev, p)| Token::NoteRel {
                note: note_class(p),
                delta: (p as i32 - prev as i32).clamp(-REL_DIST_CAP, REL_DIST_CAP) as i8,
            })
            .collect(),
    }
}

pub fn encode_lattice(notes: &[Note]) -> EncodedSeq {
    EncodedSeq {
        rep: Representation::Lattice,
        tokens: predecessors(notes)
            .map(|(prev, p)| {
                let (horizontal, vertical) = lattice_step(prev, p);
                Token::Lattice {
                    horizontal,
                    vertical,
                }
            })
            .collect(),
    }
}

pub fn encode(rep: Representation, notes: &[Note]) -> EncodedSeq {
    match rep {
        Representation::RawPitch => encode_raw_pitch(notes),
        Representation::NoteOctave => encode_note_octave(notes),
        Representation::NoteRelDist => encode_note_reldist(notes),
        Representation::Lattice => encode_lattice(notes),
    }
}

/// Embedding tables for one representation. Two-part representations split
/// the total width `d` evenly between their halves.
#[derive(Clone, Debug)]
pub struct InputEmbedding {
    pub rep: Representation,
    pub tables: Vec<ParamId>,
    pub width: usize,
}

impl InputEmbedding {
    pub fn new(store: &mut ParamStore, rep: Representation, d: usize, rng: &mut Rng) -> Result<Self> {
        let rows = rep.table_rows();
        if rows.len() == 2 && !d.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "input width d = {d} must be even for {rep}"
            )));
        }
        let part = d / rows.len();
        let tables = rows
            .iter()
            .enumerate()
            .map(|(k, &r)| store.add(format!("embed.{}.{k}", rep.name()), &[r, part], Init::FanIn, rng))
            .collect();
        Ok(InputEmbedding {
            rep,
            tables,
            width: d,
        })
    }

    pub fn embed(&self, tape: &mut Tape, store: &ParamStore, seq: &EncodedSeq) -> Vec<Var> {
        assert_eq!(seq.rep, self.rep, "encoding does not match embedding tables");
        seq.tokens
            .iter()
            .map(|t| {
                let rows = t.rows();
                let parts: Vec<Var> = rows
                    .iter()
                    .zip(&self.tables)
                    .map(|(&r, &table)| {
                        assert!(r < store.value(table).rows(), "embedding index {r} out of range");
                        tape.row(store, table, r)
                    })
                    .collect();
                if parts.len() == 1 {
                    parts[0]
                } else {
                    tape.concat(&parts)
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pig::Hand;
    use proptest::prelude::*;
    use crate::numcore::Rng;

    fn notes(pitches: &[u8]) -> Vec<Note> {
        pitches
            .iter()
            .enumerate()
            .map(|(i, &p)| Note::new(p, i as f64, i as f64 + 0.5, Hand::Right).unwrap())
            .collect()
    }

    #[test]
    fn raw_pitch_offsets() {
        let e = encode_raw_pitch(&notes(&[21, 108, 60]));
        assert_eq!(e.tokens, vec![Token::Raw(0), Token::Raw(87), Token::Raw(39)]);
    }

    #[test]
    fn note_octave_examples() {
        let e = encode_note_octave(&notes(&[68, 60, 21, 108]));
        assert_eq!(e.tokens[0], Token::NoteOctave { note: 8, octave: 4 });
        assert_eq!(e.tokens[1], Token::NoteOctave { note: 0, octave: 4 });
        assert_eq!(e.tokens[2], Token::NoteOctave { note: 9, octave: 0 });
        assert_eq!(e.tokens[3], Token::NoteOctave { note: 0, octave: 7 });
    }

    #[test]
    fn relative_distance_caps_at_15() {
        let e = encode_note_reldist(&notes(&[60, 80, 80, 40]));
        let deltas: Vec<i8> = e
            .tokens
            .iter()
            .map(|t| match t {
                Token::NoteRel { delta, .. } => *delta,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(deltas, vec![0, 15, 0, -15]);
    }

    /// Brute-force white-key ordinal: walk the keyboard from A0.
    fn ordinal_by_walking(pitch: u8) -> i32 {
        (LOWEST_PITCH..=pitch).filter(|&p| !is_black(p)).count() as i32 - 1
    }

    #[test]
    fn white_ordinal_matches_enumeration() {
        for p in 21..=108u8 {
            assert_eq!(white_ordinal(p), ordinal_by_walking(p), "pitch {p}");
        }
        assert_eq!(white_ordinal(21), 0);
        assert_eq!(white_ordinal(108), 51);
    }

    #[test]
    fn white_ordinal_monotone_and_steps_on_white_keys() {
        for p in 22..=108u8 {
            let step = white_ordinal(p) - white_ordinal(p - 1);
            assert_eq!(step, if is_black(p) { 0 } else { 1 }, "pitch {p}");
        }
    }

    #[test]
    fn lattice_examples() {
        // E4 -> B4 passes F, G, A, B.
        let e = encode_lattice(&notes(&[64, 71]));
        assert_eq!(e.tokens[1], Token::Lattice { horizontal: 4, vertical: 0 });
        let e = encode_lattice(&notes(&[60, 61]));
        assert_eq!(e.tokens[1], Token::Lattice { horizontal: 0, vertical: 1 });
        // 24 white keys up from C3.
        let e = encode_lattice(&notes(&[48, 89]));
        assert_eq!(white_ordinal(89) - white_ordinal(48), 24);
        assert_eq!(e.tokens[1], Token::Lattice { horizontal: 9, vertical: 0 });
        assert_eq!(e.tokens[0], Token::Lattice { horizontal: 0, vertical: 0 });
    }

    #[test]
    fn embedding_widths() {
        let mut rng = Rng::seeded(1);
        for rep in Representation::ALL {
            let mut store = ParamStore::new();
            let emb = InputEmbedding::new(&mut store, rep, 256, &mut rng).unwrap();
            let mut tape = Tape::new();
            let seq = encode(rep, &notes(&[60, 64, 60]));
            let out = emb.embed(&mut tape, &store, &seq);
            assert!(out.iter().all(|&v| tape.value(v).len() == 256));
            if rep == Representation::RawPitch {
                assert_eq!(tape.value(out[0]), tape.value(out[2]));
            }
        }
    }

    #[test]
    fn odd_width_is_rejected_for_two_part_reps() {
        let mut store = ParamStore::new();
        assert!(InputEmbedding::new(&mut store, Representation::Lattice, 33, &mut Rng::seeded(1)).is_err());
    }

    fn check_buckets(seq: &EncodedSeq) {
        for t in &seq.tokens {
            match *t {
                Token::Raw(i) => assert!(i <= 87),
                Token::NoteOctave { note, octave } => assert!(note < 12 && octave < 8),
                Token::NoteRel { note, delta } => assert!(note < 12 && (-15..=15).contains(&delta)),
                Token::Lattice { horizontal, vertical } => {
                    assert!((-9..=9).contains(&horizontal) && (-1..=1).contains(&vertical))
                }
            }
            for (r, &n) in t.rows().iter().zip(seq.rep.table_rows()) {
                assert!(*r < n);
            }
        }
    }

    proptest! {
        #[test]
        fn buckets_hold_for_any_pitches(pitches in prop::collection::vec(21u8..=108, 1..60)) {
            let ns = notes(&pitches);
            for rep in Representation::ALL {
                check_buckets(&encode(rep, &ns));
            }
        }

        /// Editing note j changes only the tokens that depend on it.
        #[test]
        fn encodings_are_local(
            pitches in prop::collection::vec(21u8..=108, 3..30),
            j in 0usize..30,
            new_pitch in 21u8..=108,
        ) {
            let j = j % pitches.len();
            let mut edited = pitches.clone();
            edited[j] = new_pitch;
            for rep in Representation::ALL {
                let a = encode(rep, &notes(&pitches)).tokens;
                let b = encode(rep, &notes(&edited)).tokens;
                for i in 0..pitches.len() {
                    let depends = match rep {
                        Representation::RawPitch | Representation::NoteOctave => i == j,
                        _ => i == j || i == j + 1,
                    };
                    if !depends {
                        prop_assert_eq!(a[i], b[i]);
                    }
                }
            }
        }
    }
}
