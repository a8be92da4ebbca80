//! Fluency statistics over adjacent note pairs, agreement with annotators,
//! and the gold-vs-predicted confusion matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pig::{Finger, HandPart, Note};

/// Column order of the report tables.
pub const COLUMNS: [&str; 9] = [
    "thumb_cross",
    "thumbless_cross",
    "crossed_chord",
    "hop",
    "smear",
    "step_spread",
    "chord_spread",
    "fourgram",
    "m_gen",
];

/// Adjacent pair `(i, i + 1)` as the metrics see it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairClass {
    pub overlap: bool,
    pub dp: i32,
    pub dy: i32,
    pub thumb: bool,
}

impl PairClass {
    pub fn new(a: &Note, b: &Note, fa: Finger, fb: Finger) -> Self {
        PairClass {
            overlap: a.overlaps(b),
            dp: b.pitch as i32 - a.pitch as i32,
            dy: fb.get() as i32 - fa.get() as i32,
            thumb: fa == Finger::THUMB || fb == Finger::THUMB,
        }
    }

    pub fn crossed(&self) -> bool {
        self.dp * self.dy < 0
    }
}

/// Additive per-pair statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Fluency {
    pub thumb_cross: u64,
    pub thumbless_cross: u64,
    pub crossed_chord: u64,
    pub hop: u64,
    pub smear: u64,
    pub step_spread_sum: f64,
    pub step_pairs: u64,
    pub chord_spread_sum: f64,
    pub chord_pairs: u64,
}

impl Fluency {
    pub fn add_pair(&mut self, pair: &PairClass) {
        if pair.crossed() {
            if pair.overlap {
                self.crossed_chord += 1;
            } else if pair.thumb {
                self.thumb_cross += 1;
            } else {
                self.thumbless_cross += 1;
            }
        }
        if pair.dy == 0 {
            if pair.overlap {
                self.smear += 1;
            } else if pair.dp != 0 {
                self.hop += 1;
            }
        } else {
            let spread = pair.dp.abs() as f64 / pair.dy.abs() as f64;
            if pair.overlap {
                self.chord_spread_sum += spread;
                self.chord_pairs += 1;
            } else {
                self.step_spread_sum += spread;
                self.step_pairs += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &Fluency) {
        self.thumb_cross += other.thumb_cross;
        self.thumbless_cross += other.thumbless_cross;
        self.crossed_chord += other.crossed_chord;
        self.hop += other.hop;
        self.smear += other.smear;
        self.step_spread_sum += other.step_spread_sum;
        self.step_pairs += other.step_pairs;
        self.chord_spread_sum += other.chord_spread_sum;
        self.chord_pairs += other.chord_pairs;
    }

    /// Mean semitones per finger over non-overlapping pairs; 0 when there
    /// are none (check `step_pairs`).
    pub fn step_spread(&self) -> f64 {
        ratio(self.step_spread_sum, self.step_pairs)
    }

    pub fn chord_spread(&self) -> f64 {
        ratio(self.chord_spread_sum, self.chord_pairs)
    }
}

fn ratio(sum: f64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn check_len(notes: &[Note], predictions: &[Finger]) -> Result<()> {
    if notes.len() != predictions.len() {
        return Err(Error::LengthMismatch {
            expected: notes.len(),
            actual: predictions.len(),
        });
    }
    Ok(())
}

/// All pair statistics in one pass.
pub fn fluency(notes: &[Note], predictions: &[Finger]) -> Result<Fluency> {
    check_len(notes, predictions)?;
    let mut out = Fluency::default();
    for i in 1..notes.len() {
        out.add_pair(&PairClass::new(&notes[i - 1], &notes[i], predictions[i - 1], predictions[i]));
    }
    Ok(out)
}

/// `(thumb_cross, thumbless_cross, crossed_chord)`.
pub fn count_crosses(notes: &[Note], predictions: &[Finger]) -> Result<(u64, u64, u64)> {
    let f = fluency(notes, predictions)?;
    Ok((f.thumb_cross, f.thumbless_cross, f.crossed_chord))
}

/// `(hop, smear)`.
pub fn count_hops_smears(notes: &[Note], predictions: &[Finger]) -> Result<(u64, u64)> {
    let f = fluency(notes, predictions)?;
    Ok((f.hop, f.smear))
}

/// `(step_spread, chord_spread)`, each 0 when no pair qualifies.
pub fn spreads(notes: &[Note], predictions: &[Finger]) -> Result<(f64, f64)> {
    let f = fluency(notes, predictions)?;
    Ok((f.step_spread(), f.chord_spread()))
}

fn check_annotations(n: usize, annotations: &[Vec<Finger>]) -> Result<()> {
    if annotations.is_empty() {
        return Err(Error::NoAnnotations("no gold labels to score against".into()));
    }
    for a in annotations {
        if a.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: a.len(),
            });
        }
    }
    Ok(())
}

/// Per-note precision averaged over annotators, in percent.
pub fn m_gen(predictions: &[Finger], annotations: &[Vec<Finger>]) -> Result<f64> {
    check_annotations(predictions.len(), annotations)?;
    if predictions.is_empty() {
        return Ok(0.0);
    }
    let n = predictions.len() as f64;
    let total: f64 = annotations
        .iter()
        .map(|a| 100.0 * predictions.iter().zip(a).filter(|(p, g)| p == g).count() as f64 / n)
        .sum();
    Ok(total / annotations.len() as f64)
}

/// `(matching windows, windows)`: a window of four consecutive notes
/// matches when one single annotator agrees on all four.
pub fn fourgram_counts(predictions: &[Finger], annotations: &[Vec<Finger>]) -> Result<(u64, u64)> {
    check_annotations(predictions.len(), annotations)?;
    if predictions.len() < 4 {
        return Ok((0, 0));
    }
    let windows = predictions.len() - 3;
    let hits = (0..windows)
        .filter(|&i| annotations.iter().any(|a| a[i..i + 4] == predictions[i..i + 4]))
        .count();
    Ok((hits as u64, windows as u64))
}

/// Anchored 4-gram precision in percent (0 when the part is too short).
pub fn fourgram(predictions: &[Finger], annotations: &[Vec<Finger>]) -> Result<f64> {
    let (hits, windows) = fourgram_counts(predictions, annotations)?;
    Ok(100.0 * ratio(hits as f64, windows))
}

pub type Confusion = [[u64; 5]; 5];

/// Rows gold, columns predicted.
pub fn confusion_matrix(gold: &[Finger], predictions: &[Finger]) -> Result<Confusion> {
    if gold.len() != predictions.len() {
        return Err(Error::LengthMismatch {
            expected: gold.len(),
            actual: predictions.len(),
        });
    }
    let mut m = [[0; 5]; 5];
    for (g, p) in gold.iter().zip(predictions) {
        m[g.index()][p.index()] += 1;
    }
    Ok(m)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub fluency: Fluency,
    /// Note-weighted mean of per-part M_gen.
    pub m_gen: f64,
    pub fourgram_hits: u64,
    pub fourgram_windows: u64,
    pub confusion: Confusion,
    pub n_notes: u64,
    pub n_parts: u64,
}

impl MetricsReport {
    pub fn fourgram(&self) -> f64 {
        100.0 * ratio(self.fourgram_hits as f64, self.fourgram_windows)
    }

    pub fn hops_and_smears(&self) -> u64 {
        self.fluency.hop + self.fluency.smear
    }

    /// Values in `COLUMNS` order.
    pub fn values(&self) -> [f64; 9] {
        let f = &self.fluency;
        [
            f.thumb_cross as f64,
            f.thumbless_cross as f64,
            f.crossed_chord as f64,
            f.hop as f64,
            f.smear as f64,
            f.step_spread(),
            f.chord_spread(),
            self.fourgram(),
            self.m_gen,
        ]
    }

    fn formatted(&self) -> Vec<String> {
        self.values()
            .iter()
            .enumerate()
            .map(|(k, v)| if k < 5 { format!("{v:.0}") } else { format!("{v:.2}") })
            .collect()
    }

    /// Header plus one row, separated by `delim`.
    pub fn delimited(&self, label: &str, delim: char) -> String {
        let d = delim.to_string();
        let mut header = vec!["name"];
        header.extend(COLUMNS);
        let mut row = vec![label.to_string()];
        row.extend(self.formatted());
        format!("{}\n{}\n", header.join(&d), row.join(&d))
    }

    /// Human-readable table with rows for several labelled reports.
    pub fn aligned(rows: &[(&str, &MetricsReport)]) -> String {
        let mut cells: Vec<Vec<String>> = vec![std::iter::once("name".to_string())
            .chain(COLUMNS.iter().map(|c| c.to_string()))
            .collect()];
        for (label, r) in rows {
            cells.push(std::iter::once(label.to_string()).chain(r.formatted()).collect());
        }
        let widths: Vec<usize> = (0..10).map(|c| cells.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for row in &cells {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    pub fn confusion_table(&self) -> String {
        let mut out = String::from("gold\\pred       1       2       3       4       5\n");
        for (g, row) in self.confusion.iter().enumerate() {
            out.push_str(&format!("{:>9}", g + 1));
            for c in row {
                out.push_str(&format!("{c:>8}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Predictions for one part scored against all of its annotators. The
/// confusion matrix uses the first annotator as gold.
pub fn evaluate_part(part: &HandPart, predictions: &[Finger]) -> Result<MetricsReport> {
    check_annotations(part.len(), &part.annotations)?;
    Ok(MetricsReport {
        fluency: fluency(&part.notes, predictions)?,
        m_gen: m_gen(predictions, &part.annotations)?,
        fourgram_hits: fourgram_counts(predictions, &part.annotations)?.0,
        fourgram_windows: fourgram_counts(predictions, &part.annotations)?.1,
        confusion: confusion_matrix(&part.annotations[0], predictions)?,
        n_notes: part.len() as u64,
        n_parts: 1,
    })
}

/// Fluency of the annotations themselves: every annotator's sequence is
/// counted, agreement is 100 by construction.
pub fn gold_report(part: &HandPart) -> Result<MetricsReport> {
    check_annotations(part.len(), &part.annotations)?;
    let mut fl = Fluency::default();
    for a in &part.annotations {
        fl.merge(&fluency(&part.notes, a)?);
    }
    let windows = part.len().saturating_sub(3) as u64;
    Ok(MetricsReport {
        fluency: fl,
        m_gen: 100.0,
        fourgram_hits: windows,
        fourgram_windows: windows,
        confusion: confusion_matrix(&part.annotations[0], &part.annotations[0])?,
        n_notes: part.len() as u64,
        n_parts: 1,
    })
}

/// Corpus-level report: counts summed, spreads pair-weighted, M_gen
/// note-weighted, 4-gram window-weighted.
pub fn aggregate<'a>(reports: impl IntoIterator<Item = &'a MetricsReport>) -> Result<MetricsReport> {
    let mut out = MetricsReport::default();
    let mut weighted_m_gen = 0.0;
    for r in reports {
        out.fluency.merge(&r.fluency);
        weighted_m_gen += r.m_gen * r.n_notes as f64;
        out.fourgram_hits += r.fourgram_hits;
        out.fourgram_windows += r.fourgram_windows;
        for (row, other) in out.confusion.iter_mut().zip(&r.confusion) {
            for (c, o) in row.iter_mut().zip(other) {
                *c += o;
            }
        }
        out.n_notes += r.n_notes;
        out.n_parts += r.n_parts;
    }
    if out.n_parts == 0 {
        return Err(Error::Dataset("nothing to aggregate".into()));
    }
    out.m_gen = ratio(weighted_m_gen, out.n_notes);
    Ok(out)
}
