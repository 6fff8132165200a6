use medspeech_core::corpus::{build_alphabet, normalize_transcript};
use medspeech_core::decode::{beam_search, greedy_decode, LmFusion, LogitMatrix};
use medspeech_core::eval::{build_report, wer};
use medspeech_core::lm::{train_lm, TokenMode};

/// Peaked frames for `text`: one blank, two frames per character with a
/// blank before repeats, one blank.
fn logits_for(text: &str, chars: &[char], peak: f64) -> LogitMatrix {
    let classes = chars.len() + 1;
    let row = |k: usize| -> Vec<f64> {
        (0..classes)
            .map(|c| {
                if c == k {
                    peak
                } else {
                    (1.0 - peak) / (classes - 1) as f64
                }
            })
            .collect()
    };
    let blank = chars.len();
    let mut rows = vec![row(blank)];
    let mut prev = None;
    for c in text.chars() {
        let k = chars.iter().position(|&x| x == c).unwrap();
        if prev == Some(k) {
            rows.push(row(blank));
        }
        rows.extend([row(k), row(k)]);
        prev = Some(k);
    }
    rows.push(row(blank));
    LogitMatrix::from_probabilities(&rows).unwrap()
}

#[test]
fn text_to_report() {
    let raw = ["fever, and  cough!", "cough", "headache and fever"];
    let refs: Vec<String> = raw.iter().map(|t| normalize_transcript(t)).collect();
    assert_eq!(refs[0], "fever and cough");
    let alphabet = build_alphabet(&refs).unwrap();
    let chars = alphabet.chars().to_vec();
    let lm = train_lm(&refs, 3, TokenMode::Char, None).unwrap();
    let fusion = LmFusion {
        model: &lm,
        alpha: 0.5,
        beta: 1.0,
    };

    let mut pairs = Vec::new();
    for r in &refs {
        let m = logits_for(r, &chars, 0.9);
        let greedy = greedy_decode(&m, &alphabet).unwrap();
        let beam = beam_search(&m, &alphabet, 32, Some(fusion)).unwrap().remove(0).text;
        assert_eq!(&greedy, r);
        assert_eq!(&beam, r);
        pairs.push((r.clone(), beam));
    }
    assert_eq!(wer(&pairs).unwrap(), 0.0);
    let report = build_report(&[("all", pairs)]).unwrap();
    assert!(report.render_text().contains("0.00%"));
}
