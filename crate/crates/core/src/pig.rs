//! Reading and writing PIG fingering files.
//!
//! A PIG file holds one note per line:
//!
//! ```text
//! //Version: PianoFingering_v170101
//! 0    0.000000    0.221354    C4    64    80    0    1
//! 1    0.221354    0.442708    D#4    64    80    1    -2_-1
//! ```
//!
//! Fields are note id, onset, offset, spelled pitch, onset velocity, offset
//! velocity, channel (0 = right hand, 1 = left hand) and a signed finger
//! (negative for the left hand, `a_b` for a substitution). Records from one
//! file are split by hand, left-hand parts are mirrored onto the right hand
//! and every part is put in onset/pitch order before it reaches a model.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const LOWEST_PITCH: u8 = 21;
pub const HIGHEST_PITCH: u8 = 108;
/// `p -> MIRROR_SUM - p` reflects the keyboard about D4.
pub const MIRROR_SUM: i32 = 124;

const VERSION_HEADER: &str = "//Version: PianoFingering_v170101";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Hand {
    Right,
    Left,
}

impl Hand {
    pub fn channel(self) -> u8 {
        match self {
            Hand::Right => 0,
            Hand::Left => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Hand::Right => "right",
            Hand::Left => "left",
        }
    }
}

/// One key event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Note {
    pub pitch: u8,
    pub onset: f64,
    pub offset: f64,
    pub hand: Hand,
}

impl Note {
    pub fn new(pitch: u8, onset: f64, offset: f64, hand: Hand) -> Result<Self> {
        check_pitch(pitch as i32, "")?;
        if !(onset.is_finite() && offset.is_finite()) || onset < 0.0 || offset <= onset {
            return Err(Error::Parse {
                line: 0,
                message: format!("invalid timing onset {onset}, offset {offset}"),
            });
        }
        Ok(Note {
            pitch,
            onset,
            offset,
            hand,
        })
    }

    /// True when this note is still sounding at the onset of `next`.
    pub fn overlaps(&self, next: &Note) -> bool {
        self.offset > next.onset
    }
}

fn check_pitch(pitch: i32, context: &str) -> Result<()> {
    if (LOWEST_PITCH as i32..=HIGHEST_PITCH as i32).contains(&pitch) {
        Ok(())
    } else {
        Err(Error::PitchRange {
            pitch,
            context: context.to_string(),
        })
    }
}

/// Finger index, thumb = 1 through pinky = 5.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Finger(u8);

impl Finger {
    pub const THUMB: Finger = Finger(1);
    pub const ALL: [Finger; 5] = [Finger(1), Finger(2), Finger(3), Finger(4), Finger(5)];

    pub fn new(value: u8) -> Option<Self> {
        (1..=5).contains(&value).then_some(Finger(value))
    }

    /// Zero-based index for 5-way tables.
    pub fn from_index(index: usize) -> Self {
        assert!(index < 5, "finger index {index} out of range");
        Finger(index as u8 + 1)
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for Finger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One data line of a PIG file. `finger` is signed and already resolved to
/// the first finger of a substitution.
#[derive(Clone, Debug, PartialEq)]
pub struct PigRecord {
    pub id: String,
    pub note: Note,
    pub spelling: String,
    pub onset_velocity: String,
    pub offset_velocity: String,
    pub finger: i8,
}

/// MIDI number for a spelled pitch such as `C#4`, `Bb3` or `A0` (C4 = 60).
pub fn parse_spelled_pitch(text: &str) -> Option<i32> {
    let mut chars = text.chars().peekable();
    let base = match chars.next()?.to_ascii_uppercase() {
        'C' => 0,
        'D' => 2,
        'E' => 4,
        'F' => 5,
        'G' => 7,
        'A' => 9,
        'B' => 11,
        _ => return None,
    };
    let mut accidental = 0;
    while let Some(&c) = chars.peek() {
        match c {
            '#' => accidental += 1,
            'b' => accidental -= 1,
            _ => break,
        }
        chars.next();
    }
    let octave: i32 = chars.collect::<String>().parse().ok()?;
    Some(12 * (octave + 1) + base + accidental)
}

pub fn spell_pitch(pitch: u8) -> String {
    const NAMES: [&str; 12] = [
        "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B",
    ];
    format!(
        "{}{}",
        NAMES[(pitch % 12) as usize],
        (pitch / 12) as i32 - 1
    )
}

fn parse_finger(field: &str) -> Option<i8> {
    let first = field.split('_').next()?;
    let value: i8 = first.trim().parse().ok()?;
    (value != 0 && value.abs() <= 5).then_some(value)
}

/// Parses the text of a PIG file into records in file order.
pub fn parse_pig_file(text: &str) -> Result<Vec<PigRecord>> {
    parse_lines(text, false)
}

/// Like [`parse_pig_file`] but for files still to be fingered: the finger
/// column may be missing, `0` or otherwise unreadable, in which case a
/// placeholder finger of the right sign is stored.
pub fn parse_pig_input(text: &str) -> Result<Vec<PigRecord>> {
    parse_lines(text, true)
}

fn parse_lines(text: &str, lenient: bool) -> Result<Vec<PigRecord>> {
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with("//") {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let wanted = |n: usize| n == 8 || (lenient && n == 7);
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let fields = if wanted(fields.len()) {
            fields
        } else {
            // Some exports use runs of spaces instead of tabs.
            let ws: Vec<&str> = line.split_whitespace().collect();
            if !wanted(ws.len()) {
                return Err(err(format!("expected 8 fields, found {}", fields.len())));
            }
            ws
        };
        let onset: f64 = fields[1]
            .parse()
            .map_err(|_| err(format!("bad onset {:?}", fields[1])))?;
        let offset: f64 = fields[2]
            .parse()
            .map_err(|_| err(format!("bad offset {:?}", fields[2])))?;
        if !onset.is_finite() || !offset.is_finite() || onset < 0.0 || offset <= onset {
            return Err(err(format!(
                "offset {offset} must exceed onset {onset} (both finite, onset >= 0)"
            )));
        }
        let pitch = parse_spelled_pitch(fields[3])
            .ok_or_else(|| err(format!("bad pitch {:?}", fields[3])))?;
        check_pitch(pitch, &format!("line {line_no}"))?;
        let hand = match fields[6] {
            "0" => Hand::Right,
            "1" => Hand::Left,
            other => return Err(err(format!("bad channel {other:?}"))),
        };
        let finger = match fields.get(7).and_then(|f| parse_finger(f)) {
            Some(f) if !lenient || (f > 0) == (hand == Hand::Right) => f,
            _ if lenient => match hand {
                Hand::Right => 1,
                Hand::Left => -1,
            },
            _ => return Err(err(format!("bad finger {:?}", fields[7]))),
        };
        records.push(PigRecord {
            id: fields[0].to_string(),
            note: Note {
                pitch: pitch as u8,
                onset,
                offset,
                hand,
            },
            spelling: fields[3].to_string(),
            onset_velocity: fields[4].to_string(),
            offset_velocity: fields[5].to_string(),
            finger,
        });
    }
    Ok(records)
}

fn format_time(t: f64) -> String {
    let fixed = format!("{t:.6}");
    if fixed.parse::<f64>().ok() == Some(t) {
        fixed
    } else {
        format!("{t}")
    }
}

/// Writes records back out in PIG format.
pub fn serialize_records(records: &[PigRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 40 + VERSION_HEADER.len() + 1);
    out.push_str(VERSION_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.id,
            format_time(r.note.onset),
            format_time(r.note.offset),
            r.spelling,
            r.onset_velocity,
            r.offset_velocity,
            r.note.hand.channel(),
            r.finger
        ));
    }
    out
}

/// Notes of one hand with finger magnitudes and the index of each note's
/// record in the source file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HandNotes {
    pub notes: Vec<Note>,
    pub fingers: Vec<Finger>,
    pub origin: Vec<usize>,
}

/// Partitions records by hand. Left-hand fingers must be negative and
/// right-hand fingers positive.
pub fn split_hands(records: &[PigRecord]) -> Result<(HandNotes, HandNotes)> {
    let mut right = HandNotes::default();
    let mut left = HandNotes::default();
    for (i, r) in records.iter().enumerate() {
        let consistent = match r.note.hand {
            Hand::Right => r.finger > 0,
            Hand::Left => r.finger < 0,
        };
        if !consistent {
            return Err(Error::HandConsistency {
                line: i + 1,
                channel: r.note.hand.channel(),
                finger: r.finger,
            });
        }
        let target = match r.note.hand {
            Hand::Right => &mut right,
            Hand::Left => &mut left,
        };
        target.notes.push(r.note);
        target
            .fingers
            .push(Finger::new(r.finger.unsigned_abs()).expect("finger validated by parser"));
        target.origin.push(i);
    }
    Ok((right, left))
}

/// A single-hand note sequence with one or more annotator fingerings.
#[derive(Clone, Debug, PartialEq)]
pub struct HandPart {
    pub notes: Vec<Note>,
    pub annotations: Vec<Vec<Finger>>,
    pub annotators: Vec<String>,
    pub source_id: String,
    /// The hand the notes were written for, before any reflection.
    pub hand: Hand,
    pub reflected: bool,
    pub origin: Vec<usize>,
}

impl HandPart {
    pub fn new(source_id: impl Into<String>, hand: Hand, notes: Vec<Note>) -> Self {
        let origin = (0..notes.len()).collect();
        HandPart {
            notes,
            annotations: Vec::new(),
            annotators: Vec::new(),
            source_id: source_id.into(),
            hand,
            reflected: false,
            origin,
        }
    }

    pub fn with_annotation(mut self, annotator: impl Into<String>, labels: Vec<Finger>) -> Self {
        self.push_annotation(annotator, labels)
            .expect("annotation length matches notes");
        self
    }

    pub fn push_annotation(
        &mut self,
        annotator: impl Into<String>,
        labels: Vec<Finger>,
    ) -> Result<()> {
        if labels.len() != self.notes.len() {
            return Err(Error::LengthMismatch {
                expected: self.notes.len(),
                actual: labels.len(),
            });
        }
        self.annotations.push(labels);
        self.annotators.push(annotator.into());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }
}

/// Mirrors a left-hand part about D4 so that it reads like a right-hand part.
/// Finger numbers are kept: after the mirror the thumb sits on the low side,
/// exactly as on a right hand. Applying it twice restores the original.
pub fn reflect_left_hand(part: &HandPart) -> Result<HandPart> {
    if part.hand != Hand::Left {
        return Err(Error::Dataset(format!(
            "{}: only left-hand parts are reflected",
            part.source_id
        )));
    }
    let mut out = part.clone();
    for note in &mut out.notes {
        let mirrored = MIRROR_SUM - note.pitch as i32;
        check_pitch(mirrored, &part.source_id)?;
        note.pitch = mirrored as u8;
    }
    out.reflected = !part.reflected;
    Ok(out)
}

/// Stable sort by onset then pitch, carrying annotations and origins along.
/// Simultaneous notes end up arpeggiated from lowest to highest.
pub fn order_notes(part: &HandPart) -> Result<HandPart> {
    let mut perm: Vec<usize> = (0..part.notes.len()).collect();
    perm.sort_by(|&a, &b| {
        let (x, y) = (&part.notes[a], &part.notes[b]);
        x.onset
            .total_cmp(&y.onset)
            .then_with(|| x.pitch.cmp(&y.pitch))
    });
    for w in perm.windows(2) {
        let (x, y) = (&part.notes[w[0]], &part.notes[w[1]]);
        if x.onset == y.onset && x.pitch == y.pitch {
            return Err(Error::DuplicateNote {
                onset: x.onset,
                pitch: x.pitch,
                source_id: part.source_id.clone(),
            });
        }
    }
    let mut out = part.clone();
    out.notes = perm.iter().map(|&i| part.notes[i]).collect();
    out.origin = perm.iter().map(|&i| part.origin[i]).collect();
    out.annotations = part
        .annotations
        .iter()
        .map(|a| perm.iter().map(|&i| a[i]).collect())
        .collect();
    Ok(out)
}

/// Records for `part` carrying `predictions` in the finger column, with
/// pitches restored to the written hand and left-hand fingers negated.
pub fn part_records(part: &HandPart, predictions: &[Finger]) -> Result<Vec<PigRecord>> {
    if predictions.len() != part.notes.len() {
        return Err(Error::LengthMismatch {
            expected: part.notes.len(),
            actual: predictions.len(),
        });
    }
    part.notes
        .iter()
        .zip(predictions)
        .zip(&part.origin)
        .map(|((note, finger), &origin)| {
            let pitch = if part.reflected {
                let p = MIRROR_SUM - note.pitch as i32;
                check_pitch(p, &part.source_id)?;
                p as u8
            } else {
                note.pitch
            };
            let sign = if part.hand == Hand::Left { -1 } else { 1 };
            Ok(PigRecord {
                id: origin.to_string(),
                note: Note {
                    pitch,
                    hand: part.hand,
                    ..*note
                },
                spelling: spell_pitch(pitch),
                onset_velocity: "64".to_string(),
                offset_velocity: "64".to_string(),
                finger: sign * finger.get() as i8,
            })
        })
        .collect()
}

/// Copies `records` with the finger column replaced by the predictions for
/// `parts`, which must have been built from these records.
pub fn fill_fingers(records: &[PigRecord], parts: &[HandPart], predictions: &[Vec<Finger>]) -> Result<Vec<PigRecord>> {
    if parts.len() != predictions.len() {
        return Err(Error::LengthMismatch {
            expected: parts.len(),
            actual: predictions.len(),
        });
    }
    let mut out = records.to_vec();
    let mut filled = vec![false; records.len()];
    for (part, labels) in parts.iter().zip(predictions) {
        if labels.len() != part.len() {
            return Err(Error::LengthMismatch {
                expected: part.len(),
                actual: labels.len(),
            });
        }
        for (&origin, f) in part.origin.iter().zip(labels) {
            let record = out.get_mut(origin).ok_or_else(|| {
                Error::Dataset(format!("{}: note {origin} is not in the file", part.source_id))
            })?;
            let sign = if record.note.hand == Hand::Left { -1 } else { 1 };
            record.finger = sign * f.get() as i8;
            filled[origin] = true;
        }
    }
    if let Some(missing) = filled.iter().position(|f| !f) {
        return Err(Error::Dataset(format!("no prediction for note {missing}")));
    }
    Ok(out)
}

pub fn serialize_pig(part: &HandPart, predictions: &[Finger]) -> Result<String> {
    Ok(serialize_records(&part_records(part, predictions)?))
}

/// Builds the model-ready parts (ordered, left hand reflected) of one file.
/// Empty hands are dropped.
pub fn parts_from_records(
    source_id: &str,
    annotator: &str,
    records: &[PigRecord],
) -> Result<Vec<HandPart>> {
    let (right, left) = split_hands(records)?;
    let mut parts = Vec::new();
    for (hand, notes) in [(Hand::Right, right), (Hand::Left, left)] {
        if notes.notes.is_empty() {
            continue;
        }
        let mut part = HandPart::new(format!("{source_id}/{}", hand.name()), hand, notes.notes);
        part.origin = notes.origin;
        part.push_annotation(annotator, notes.fingers)?;
        if hand == Hand::Left {
            part = reflect_left_hand(&part)?;
        }
        parts.push(order_notes(&part)?);
    }
    Ok(parts)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn parse(name: &str) -> Option<Split> {
        match name.to_ascii_lowercase().as_str() {
            "train" => Some(Split::Train),
            "val" | "valid" | "validation" | "dev" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub parts: Vec<HandPart>,
    pub split: Split,
}

impl Corpus {
    pub fn n_notes(&self) -> usize {
        self.parts.iter().map(HandPart::len).sum()
    }

    /// Number of (part, annotator) training examples.
    pub fn n_examples(&self) -> usize {
        self.parts.iter().map(|p| p.annotations.len()).sum()
    }
}

/// Split membership: one `relative/path split` pair per line, `#` comments.
#[derive(Clone, Debug, Default)]
pub struct Manifest {
    pub entries: Vec<(PathBuf, Split)>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Manifest> {
        let mut entries = Vec::new();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let err = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            if fields.len() != 2 {
                return Err(err("manifest lines are `path split`".to_string()));
            }
            let split =
                Split::parse(fields[1]).ok_or_else(|| err(format!("unknown split {}", fields[1])))?;
            let path = PathBuf::from(fields[0]);
            if let Some(prev) = seen.insert(path.clone(), split) {
                if prev != split {
                    return Err(err(format!("{} listed in two splits", fields[0])));
                }
                continue;
            }
            entries.push((path, split));
        }
        Ok(Manifest { entries })
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Manifest::parse(&text)
    }

    pub fn files(&self, split: Split) -> impl Iterator<Item = &Path> {
        self.entries
            .iter()
            .filter(move |(_, s)| *s == split)
            .map(|(p, _)| p.as_path())
    }
}

/// One parsed fingering file.
#[derive(Clone, Debug)]
pub struct PigFile {
    pub path: PathBuf,
    pub piece_id: String,
    pub annotator: String,
    pub records: Vec<PigRecord>,
}

/// `001-2_fingering.txt` belongs to piece `001`, annotator `2`.
pub fn piece_and_annotator(path: &Path) -> (String, String) {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = stem.strip_suffix("_fingering").unwrap_or(&stem);
    match stem.split_once('-') {
        Some((piece, annotator)) => (piece.to_string(), annotator.to_string()),
        None => (stem.to_string(), "1".to_string()),
    }
}

pub fn load_pig_file(path: &Path) -> Result<PigFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records = parse_pig_file(&text).map_err(|e| match e {
        Error::Io { .. } => e,
        other => Error::Dataset(format!("{}: {other}", path.display())),
    })?;
    let (piece_id, annotator) = piece_and_annotator(path);
    Ok(PigFile {
        path: path.to_path_buf(),
        piece_id,
        annotator,
        records,
    })
}

/// Every PIG text file directly inside `dir`, sorted by name.
pub fn list_pig_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort();
    Ok(files)
}

fn same_notes(a: &[Note], b: &[Note]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| x.pitch == y.pitch && x.onset == y.onset && x.offset == y.offset)
}

/// Merges the files of one piece into hand parts, one annotation per file.
/// Files whose notes disagree with the others become separate pieces.
pub fn merge_piece(files: &[PigFile]) -> Result<(Vec<HandPart>, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut clusters: Vec<HandPart> = Vec::new();
    for file in files {
        for part in parts_from_records(&file.piece_id, &file.annotator, &file.records)? {
            let annotation = part.annotations[0].clone();
            match clusters
                .iter_mut()
                .find(|c| c.hand == part.hand && same_notes(&c.notes, &part.notes))
            {
                Some(cluster) => cluster.push_annotation(file.annotator.clone(), annotation)?,
                None => {
                    let mut part = part;
                    let same_hand = clusters.iter().filter(|c| c.hand == part.hand).count();
                    if same_hand > 0 {
                        warnings.push(format!(
                            "{}: {} hand notes of annotator {} differ from earlier files; kept as a separate piece",
                            file.path.display(),
                            part.hand.name(),
                            file.annotator
                        ));
                        part.source_id = format!("{}#{}", part.source_id, same_hand + 1);
                    }
                    clusters.push(part);
                }
            }
        }
    }
    Ok((clusters, warnings))
}

/// Summary of a corpus load. Files that failed to parse or merge are
/// listed in `errors` and left out of the corpus.
#[derive(Clone, Debug)]
pub struct LoadReport {
    pub corpus: Corpus,
    pub pieces: usize,
    pub files: usize,
    pub warnings: Vec<String>,
    pub errors: Vec<String>,
}

impl LoadReport {
    /// The corpus, or the first failure if any file was rejected or nothing
    /// was found.
    pub fn into_corpus(self) -> Result<Corpus> {
        if let Some(first) = self.errors.first() {
            return Err(Error::Dataset(format!(
                "{} file(s) failed to load; first: {first}",
                self.errors.len()
            )));
        }
        if self.corpus.parts.is_empty() {
            return Err(Error::Dataset(format!(
                "no annotated parts in the {} split",
                self.corpus.split.name()
            )));
        }
        Ok(self.corpus)
    }
}

/// Loads one split of a dataset directory. Without a manifest every file in
/// the directory is taken to belong to `split`.
pub fn load_corpus(dir: &Path, manifest: Option<&Manifest>, split: Split) -> Result<LoadReport> {
    let paths: Vec<PathBuf> = match manifest {
        Some(m) => m.files(split).map(|p| dir.join(p)).collect(),
        None => list_pig_files(dir)?,
    };
    let mut warnings = Vec::new();
    let mut errors = Vec::new();
    if manifest.is_none() {
        warnings.push(format!(
            "no manifest: treating all of {} as the {} split",
            dir.display(),
            split.name()
        ));
    }
    let mut by_piece: BTreeMap<String, Vec<PigFile>> = BTreeMap::new();
    for path in &paths {
        match load_pig_file(path) {
            Ok(file) => by_piece.entry(file.piece_id.clone()).or_default().push(file),
            Err(e) => errors.push(e.to_string()),
        }
    }
    let mut parts = Vec::new();
    for (piece, files) in by_piece.iter_mut() {
        files.sort_by(|a, b| a.annotator.cmp(&b.annotator));
        match merge_piece(files) {
            Ok((piece_parts, piece_warnings)) => {
                parts.extend(piece_parts);
                warnings.extend(piece_warnings);
            }
            Err(e) => errors.push(format!("piece {piece}: {e}")),
        }
    }
    Ok(LoadReport {
        corpus: Corpus { parts, split },
        pieces: by_piece.len(),
        files: paths.len(),
        warnings,
        errors,
    })
}
