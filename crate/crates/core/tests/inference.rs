use diacritize::inference::{
    attention_map, export_attention, predict_direct, predict_truncated, sliding_window_predict, InferenceConfig,
    InferenceError,
};
use diacritize::model::{Backbone, ModelConfig, Vocabulary};
use diacritize::text::DiacriticLabel;
use diacritize::Model;
use proptest::prelude::*;

const ALPHABET: &str = "بتكلمندرسعاوية .";

fn model(backbone: Backbone, multimodal: bool) -> Model {
    let cfg = ModelConfig {
        backbone,
        d_model: 16,
        n_heads: 4,
        ff_dim: 16,
        max_len_text: 40,
        max_len_asr: 80,
        multimodal,
        ..ModelConfig::default()
    };
    let asr = format!("{ALPHABET}\u{64e}\u{64f}\u{650}\u{651}\u{652}");
    Model::new(cfg, Vocabulary::build([(ALPHABET, Some(asr.as_str()))]).unwrap(), 9).unwrap()
}

fn line() -> impl Strategy<Value = String> {
    let chars: Vec<char> = ALPHABET.chars().collect();
    prop::collection::vec(prop::sample::select(chars), 1..120).prop_map(|v| v.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn short_lines_match_direct_prediction(raw in line(), asr in line(), lstm in any::<bool>(), window in 1..20usize) {
        let m = model(if lstm { Backbone::Lstm } else { Backbone::Transformer }, true);
        let n = raw.chars().count();
        let window = window.max(n.min(40));
        let cfg = InferenceConfig { window, buffer: (40 - window) / 2 };
        let sw = sliding_window_predict(&m, &raw, Some(&asr), &cfg).unwrap();
        prop_assert_eq!(sw.base_string(), raw.clone());
        if n <= window {
            prop_assert_eq!(&sw, &predict_direct(&m, &raw, Some(&asr)).unwrap());
        }
        prop_assert_eq!(sw, sliding_window_predict(&m, &raw, Some(&asr), &cfg).unwrap());
    }
}

#[test]
fn long_lines_get_one_label_per_character() {
    let m = model(Backbone::Lstm, true);
    let raw: String = ALPHABET.chars().cycle().take(300).collect();
    let asr: String = raw.chars().take(280).collect();
    let out = sliding_window_predict(&m, &raw, Some(&asr), &InferenceConfig { window: 20, buffer: 10 }).unwrap();
    assert_eq!(out.len(), 300);
    assert_eq!(out.base_string(), raw);
    for (c, l) in out.base().iter().zip(out.labels()) {
        if !diacritize::text::is_arabic_letter(*c) {
            assert_eq!(*l, DiacriticLabel::None);
        }
    }
    assert!(matches!(predict_direct(&m, &raw, Some(&asr)), Err(InferenceError::TooLong { len: 300, max: 40 })));
}

#[test]
fn truncated_prediction_labels_the_tail_none() {
    let m = model(Backbone::Transformer, true);
    let raw: String = ALPHABET.chars().cycle().take(90).collect();
    let out = predict_truncated(&m, &raw, Some(&raw)).unwrap();
    assert_eq!(out.len(), 90);
    assert!(out.labels()[40..].iter().all(|&l| l == DiacriticLabel::None));
    let head: String = raw.chars().take(40).collect();
    let direct = predict_direct(&m, &head, Some(&raw.chars().take(40).collect::<String>())).unwrap();
    assert_eq!(&out.labels()[..40], direct.labels());
}

#[test]
fn text_only_predictions_ignore_asr() {
    for backbone in [Backbone::Transformer, Backbone::Lstm] {
        let m = model(backbone, false);
        let raw = "كتب الولد درسا";
        let a = predict_direct(&m, raw, Some("بب")).unwrap();
        assert_eq!(a, predict_direct(&m, raw, Some("كَتَبَ الوَلَدُ")).unwrap());
        assert_eq!(a, predict_direct(&m, raw, None).unwrap());
        assert!(matches!(attention_map(&m, raw, "x"), Err(InferenceError::NotMultimodal)));
    }
}

#[test]
fn multimodal_prediction_requires_asr() {
    let m = model(Backbone::Lstm, true);
    assert!(matches!(predict_direct(&m, "كتب", None), Err(InferenceError::MissingAsrInput)));
    assert!(matches!(predict_direct(&m, "كَتب", Some("")), Err(InferenceError::InvalidRaw(_))));
}

#[test]
fn exported_attention_has_one_matrix_per_head() {
    let m = model(Backbone::Transformer, true);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("attn.txt");
    let raw = "كتب الو";
    let asr = "كَتَبَ الوَل";
    assert_eq!((raw.chars().count(), asr.chars().count()), (7, 12));
    let map = export_attention(&m, raw, asr, &path).unwrap();
    assert_eq!((map.heads, map.lq, map.lk), (4, 7, 12));
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(&lines[..3], ["n_heads 4", "lq 7", "lk 12"]);
    assert!(lines[3].contains("U+0020"));
    let mut heads = 0;
    let mut i = 5;
    while i < lines.len() {
        assert_eq!(lines[i], format!("head {heads}"));
        for row in &lines[i + 1..i + 8] {
            let w: Vec<f64> = row.split(' ').map(|x| x.parse().unwrap()).collect();
            assert_eq!(w.len(), 12);
            // Five significant digits per weight bound the rounding of the sum.
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-4);
        }
        heads += 1;
        i += 8;
    }
    assert_eq!(heads, 4);

    let empty = dir.path().join("empty.txt");
    let map = export_attention(&m, raw, "", &empty).unwrap();
    assert_eq!(map.lk, 1);
    assert!(std::fs::read_to_string(&empty).unwrap().contains("key <pad>\n"));
}
