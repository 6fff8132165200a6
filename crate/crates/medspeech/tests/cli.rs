use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use medspeech::matrix::write_logits;
use medspeech::testkit::{synth_logits, SynthSpec};
use medspeech_core::corpus::Alphabet;

fn medspeech(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_medspeech"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(medspeech(&["--help"], d).status.code(), Some(0));
    assert_eq!(medspeech(&["--version"], d).status.code(), Some(0));
    assert_eq!(medspeech(&[], d).status.code(), Some(1));
    assert_eq!(medspeech(&["stats", "--bogus"], d).status.code(), Some(1));
    assert_eq!(
        medspeech(&["stats", "--manifest", "missing.csv"], d).status.code(),
        Some(2)
    );

    fs::write(d.join("bad.arpa"), "\\data\\\nngram 1=2\n\n\\1-grams:\n-0.5\t<s>\n").unwrap();
    let out = medspeech(&["lm-score", "--lm", "bad.arpa", "--text", "a"], d);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("bad.arpa"), "{}", stderr(&out));
    assert!(stderr(&out).contains("line"), "{}", stderr(&out));
}

#[test]
fn report_and_eval_match_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = golden("pairs.csv");
    let pairs = pairs.to_str().unwrap();
    let text = medspeech(&["report", "--pairs", pairs], dir.path());
    assert_eq!(stdout(&text), fs::read_to_string(golden("report.txt")).unwrap());
    let csv = medspeech(&["report", "--pairs", pairs, "--csv"], dir.path());
    assert_eq!(stdout(&csv), fs::read_to_string(golden("report.csv")).unwrap());
    let eval = medspeech(&["eval", "--pairs", pairs], dir.path());
    assert_eq!(
        stdout(&eval),
        "WER 40.00% (2 errors / 5 words)\nCER 25.00% (7 errors / 28 characters)\n"
    );
}

#[test]
fn decode_single_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let alphabet = Alphabet::new(" abc".chars().collect()).unwrap();
    fs::write(d.join("alphabets.csv"), medspeech::manifest::format_alphabet(&alphabet)).unwrap();
    let spec = SynthSpec {
        confidence: 0.8,
        seed: 5,
        ..SynthSpec::new("cab ba")
    };
    write_logits(&synth_logits(&spec, &alphabet).unwrap(), &d.join("x.ctcl")).unwrap();
    for extra in [&["--greedy"][..], &["--beam", "8"][..]] {
        let mut args = vec!["decode", "--logits", "x.ctcl", "--alphabet", "alphabets.csv"];
        args.extend_from_slice(extra);
        let out = medspeech(&args, d);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        assert_eq!(stdout(&out), "cab ba\n");
    }
    fs::write(d.join("junk.ctcl"), b"nope").unwrap();
    let out = medspeech(&["decode", "--logits", "junk.ctcl", "--alphabet", "alphabets.csv"], d);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn lm_train_then_score() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(medspeech(&["synth", "--out", "raw", "--n", "6", "--seed", "2"], d)
        .status
        .success());
    let train = medspeech(
        &[
            "lm-train",
            "--manifest",
            "raw/manifest.csv",
            "--order",
            "2",
            "--out",
            "lm.arpa",
        ],
        d,
    );
    assert!(train.status.success(), "{}", stderr(&train));
    let arpa = fs::read_to_string(d.join("lm.arpa")).unwrap();
    assert!(arpa.starts_with("\\data\\\n") && arpa.trim_end().ends_with("\\end\\"));
    let score = medspeech(&["lm-score", "--lm", "lm.arpa", "--text", "জ্বর"], d);
    assert!(score.status.success(), "{}", stderr(&score));
    let line = stdout(&score);
    let (value, text) = line.trim_end().split_once('\t').unwrap();
    assert!(value.parse::<f64>().unwrap() < 0.0);
    assert_eq!(text, "জ্বর");
}
