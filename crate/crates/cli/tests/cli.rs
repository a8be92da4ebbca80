use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pianofinger_core::pig::{parse_pig_file, Manifest};
use pianofinger_core::Checkpoint;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pianofinger"))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/pig")
}

fn manifest() -> PathBuf {
    fixtures().join("splits.manifest")
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Trains a tiny model on the fixtures and returns its output directory.
fn train_tiny(dir: &Path, extra: &[&str]) -> Output {
    run(bin()
        .arg("train")
        .arg(fixtures())
        .arg("--manifest")
        .arg(manifest())
        .args(["--set", "hidden=8", "--set", "mlp_hidden=8", "--set", "d=8", "--set", "d_check=4"])
        .args(["--set", "warmup_epochs=1", "--seed", "3", "--out"])
        .arg(dir)
        .args(extra))
}

#[test]
fn ingest_reports_splits() {
    let out = run(bin().arg("ingest").arg(fixtures()).arg("--manifest").arg(manifest()));
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let train = text.lines().find(|l| l.starts_with("train")).unwrap();
    let fields: Vec<&str> = train.split_whitespace().collect();
    assert_eq!(fields[1..], ["1", "2", "2", "4", "24"]);
    assert!(text.lines().any(|l| l.starts_with("test")));
}

#[test]
fn ingest_fails_on_empty_or_broken_input() {
    let empty = tempfile::tempdir().unwrap();
    let out = run(bin().arg("ingest").arg(empty.path()));
    assert!(!out.status.success());
    assert!(stderr(&out).contains("no annotated parts"));

    let broken = tempfile::tempdir().unwrap();
    std::fs::copy(fixtures().join("003-1_fingering.txt"), broken.path().join("003-1_fingering.txt")).unwrap();
    std::fs::write(broken.path().join("004-1_fingering.txt"), "0\t0.0\t0.5\tC4\t64\t64\t0\n").unwrap();
    let out = run(bin().arg("ingest").arg(broken.path()));
    assert!(!out.status.success());
    assert!(stderr(&out).contains("004-1_fingering.txt"));
    assert!(stdout(&out).contains("all"));
}

#[test]
fn single_file_is_one_piece() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(fixtures().join("003-1_fingering.txt"), dir.path().join("003-1_fingering.txt")).unwrap();
    let out = run(bin().arg("ingest").arg(dir.path()));
    assert!(out.status.success());
    let row = stdout(&out).lines().find(|l| l.starts_with("all")).unwrap().to_string();
    let fields: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(fields[1], "1");
    assert!(fields[3].parse::<usize>().unwrap() >= 1);
}

#[test]
fn train_predict_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("run");
    let out = train_tiny(&run_dir, &["--set", "epochs=2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).is_empty(), "training progress goes to stderr");
    let ckpt = run_dir.join("last.ckpt");
    for name in ["train.jsonl", "last.ckpt", "best_m_gen.ckpt", "best_fourgram.ckpt", "config.txt"] {
        assert!(run_dir.join(name).exists(), "{name}");
    }
    let log = std::fs::read_to_string(run_dir.join("train.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);

    // Both hands, notes and every non-finger column preserved.
    let input = fixtures().join("001-1_fingering.txt");
    let original = parse_pig_file(&std::fs::read_to_string(&input).unwrap()).unwrap();
    for mode in [["--decode", "greedy"], ["--decode", "beam"]] {
        let path = tmp.path().join(format!("{}.txt", mode[1]));
        let out = run(bin().arg("predict").arg(&input).arg("--checkpoint").arg(&ckpt).arg("--out").arg(&path).args(mode));
        assert!(out.status.success(), "{}", stderr(&out));
        let records = parse_pig_file(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(records.len(), original.len());
        for (a, b) in original.iter().zip(&records) {
            assert_eq!((&a.id, a.note, &a.spelling), (&b.id, b.note, &b.spelling));
            assert_eq!(a.finger.signum(), b.finger.signum());
        }
    }

    let out = run(bin()
        .arg("eval")
        .arg(fixtures())
        .arg("--manifest")
        .arg(manifest())
        .args(["--split", "val", "--per-piece", "--beam", "3", "--checkpoint"])
        .arg(&ckpt)
        .arg("--out")
        .arg(tmp.path().join("table.tsv")));
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("002/right") && text.contains("last.ckpt") && text.contains("gold\\pred"));
    let tsv = std::fs::read_to_string(tmp.path().join("table.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 4);
    assert!(tsv.starts_with("name\tthumb_cross"));
}

#[test]
fn unfingered_input_is_filled() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("run");
    assert!(train_tiny(&run_dir, &["--set", "epochs=1"]).status.success());
    let input = tmp.path().join("bare.txt");
    std::fs::write(&input, "0\t0.0\t0.4\tC4\t64\t64\t0\n1\t0.0\t0.8\tC3\t64\t64\t1\n2\t0.4\t0.8\tE4\t64\t64\t0\n").unwrap();
    let output = tmp.path().join("filled.txt");
    let out = run(bin().arg("predict").arg(&input).arg("--checkpoint").arg(run_dir.join("last.ckpt")).arg("--out").arg(&output));
    assert!(out.status.success(), "{}", stderr(&out));
    let records = parse_pig_file(&std::fs::read_to_string(&output).unwrap()).unwrap();
    assert_eq!(records.len(), 3);
    assert!(records[1].finger < 0 && records[0].finger > 0);
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let tmp = tempfile::tempdir().unwrap();
    let whole = tmp.path().join("whole");
    let parts = tmp.path().join("parts");
    assert!(train_tiny(&whole, &["--set", "epochs=3"]).status.success());
    assert!(train_tiny(&parts, &["--set", "epochs=1"]).status.success());
    let out = train_tiny(&parts, &["--set", "epochs=3", "--resume"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("resuming"));
    for name in ["train.jsonl", "last.ckpt"] {
        assert_eq!(std::fs::read(whole.join(name)).unwrap(), std::fs::read(parts.join(name)).unwrap(), "{name}");
    }
    // A best checkpoint from before the restart echoes the shorter epoch
    // budget but holds the same state.
    let a = Checkpoint::load(&whole.join("best_m_gen.ckpt")).unwrap();
    let b = Checkpoint::load(&parts.join("best_m_gen.ckpt")).unwrap();
    assert_eq!((a.epoch, a.global_step, &a.params, &a.baseline), (b.epoch, b.global_step, &b.params, &b.baseline));
    // A different configuration cannot resume the run.
    let out = train_tiny(&parts, &["--set", "epochs=4", "--set", "lr=0.5", "--resume"]);
    assert!(!out.status.success());
}

#[test]
fn eval_gold_against_itself() {
    // Single-annotator split: the annotation scores 100 against itself.
    let preds = tempfile::tempdir().unwrap();
    std::fs::copy(fixtures().join("002-1_fingering.txt"), preds.path().join("002-1_fingering.txt")).unwrap();
    let out = run(bin()
        .arg("eval")
        .arg(fixtures())
        .arg("--manifest")
        .arg(manifest())
        .args(["--split", "val", "--predictions"])
        .arg(preds.path()));
    assert!(out.status.success(), "{}", stderr(&out));
    let row = stdout(&out).lines().nth(1).unwrap().to_string();
    let fields: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(fields[fields.len() - 2..], ["100.00", "100.00"]);

    // Two annotators that differ: the first one's labels score below 100.
    let preds = tempfile::tempdir().unwrap();
    std::fs::copy(fixtures().join("001-1_fingering.txt"), preds.path().join("001-1_fingering.txt")).unwrap();
    let out = run(bin()
        .arg("eval")
        .arg(fixtures())
        .arg("--manifest")
        .arg(manifest())
        .args(["--split", "train", "--predictions"])
        .arg(preds.path()));
    assert!(out.status.success(), "{}", stderr(&out));
    let row = stdout(&out).lines().nth(1).unwrap().to_string();
    let m_gen: f64 = row.split_whitespace().last().unwrap().parse().unwrap();
    assert!(m_gen < 100.0);

    let empty = tempfile::tempdir().unwrap();
    let out = run(bin()
        .arg("eval")
        .arg(fixtures())
        .arg("--manifest")
        .arg(manifest())
        .args(["--split", "val", "--predictions"])
        .arg(empty.path()));
    assert!(!out.status.success());
}

#[test]
fn eval_rejects_misaligned_predictions() {
    let preds = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixtures().join("002-1_fingering.txt")).unwrap();
    let shifted = text.replacen("\t0.000000\t", "\t0.010000\t", 1);
    assert_ne!(text, shifted);
    std::fs::write(preds.path().join("002-1_fingering.txt"), shifted).unwrap();
    let out = run(bin()
        .arg("eval")
        .arg(fixtures())
        .arg("--manifest")
        .arg(manifest())
        .args(["--split", "val", "--predictions"])
        .arg(preds.path()));
    assert!(!out.status.success());
    assert!(stderr(&out).contains("do not match"));
}

#[test]
fn goldstats_per_piece_sums_to_total() {
    let out = run(bin()
        .arg("goldstats")
        .arg(fixtures())
        .arg("--manifest")
        .arg(manifest())
        .args(["--split", "train", "--per-piece"]));
    assert!(out.status.success(), "{}", stderr(&out));
    let rows: Vec<Vec<String>> = stdout(&out)
        .lines()
        .skip(1)
        .take(3)
        .map(|l| l.split_whitespace().map(String::from).collect())
        .collect();
    assert_eq!(rows[2][0], "gold");
    for c in 1..=5 {
        let sum: u64 = rows[..2].iter().map(|r| r[c].parse::<u64>().unwrap()).sum();
        assert_eq!(sum, rows[2][c].parse::<u64>().unwrap());
    }

    // A split with no files is an error.
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m");
    std::fs::write(&m, "001-1_fingering.txt train\n").unwrap();
    Manifest::load(&m).unwrap();
    let out = run(bin().arg("goldstats").arg(fixtures()).arg("--manifest").arg(&m).args(["--split", "test"]));
    assert!(!out.status.success());
}

#[test]
fn gradcheck_flags_a_broken_backward() {
    let out = run(bin().args(["gradcheck", "--model", "bilstm"]));
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).contains("PASS"));
    let out = run(bin().args(["gradcheck", "--model", "bilstm", "--inject-fault", "affine:1.2"]));
    assert!(!out.status.success());
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn bad_arguments_fail() {
    assert!(!run(bin().args(["eval", "x", "--split", "nope", "--predictions", "y"])).status.success());
    let tmp = tempfile::tempdir().unwrap();
    let out = train_tiny(tmp.path(), &["--set", "colour=red"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("colour"));
}
