use diacritize::asr_sim::{generate_toy_corpus, ToyCorpusConfig};
use diacritize::model::checkpoint::{checkpoint_bytes, parse_checkpoint};
use diacritize::model::{
    encode_batch, load_checkpoint, save_checkpoint, train, Backbone, EncodedBatch, Example, ModelConfig, ModelError,
    Mode, TrainConfig, Vocabulary, PAD,
};
use diacritize::text::LABEL_COUNT;
use diacritize::{Model, Model64};

fn tiny(backbone: Backbone, multimodal: bool) -> ModelConfig {
    ModelConfig {
        backbone,
        d_model: 16,
        n_heads: 4,
        ff_dim: 16,
        max_len_text: 48,
        max_len_asr: 96,
        multimodal,
        ..ModelConfig::default()
    }
}

fn examples() -> Vec<Example> {
    let ex = |raw: &str, asr: &str, gold: &str| Example { raw: raw.into(), asr: asr.into(), gold: gold.into() };
    vec![
        ex("كتب الولد", "كَتَبَ الوَلَدُ", "كَتَبَ الوَلَدُ"),
        ex("درس.", "دَرَسَ", "دَرَسَ."),
    ]
}

fn batch_for(model: &Model, ex: &[Example]) -> EncodedBatch {
    encode_batch(ex, model.vocab(), model.config()).unwrap()
}

fn vocab_of(ex: &[Example]) -> Vocabulary {
    Vocabulary::build(ex.iter().map(|e| (e.raw.as_str(), Some(e.asr.as_str())))).unwrap()
}

#[test]
fn forward_shapes_and_normalisation() {
    let ex = vec![
        Example { raw: "كتب الو".into(), asr: "كَتَبَ الوَلَدُ".into(), gold: "كَتَبَ الوَ".into() },
        Example { raw: "در".into(), asr: "دَرَسَ".into(), gold: "دَرَ".into() },
    ];
    for backbone in [Backbone::Transformer, Backbone::Lstm] {
        let model = Model::new(tiny(backbone, true), vocab_of(&ex), 1).unwrap();
        let b = batch_for(&model, &ex);
        assert_eq!((b.batch, b.text_len, b.asr_len), (2, 7, 15));
        let out = model.forward(&b, Mode::Eval).unwrap();
        assert_eq!(out.probs.len(), 2 * 7 * LABEL_COUNT);
        for bi in 0..2 {
            for t in 0..7 {
                let s: f64 = out.probs_at(bi, t).iter().map(|&p| p as f64).sum();
                assert!((s - 1.0).abs() < 1e-5);
            }
        }
        assert_eq!(out.attention.len(), 2);
        for (bi, map) in out.attention.iter().enumerate() {
            assert_eq!((map.heads, map.lq, map.lk), (4, b.text_length(bi), 15));
            for h in 0..4 {
                for q in 0..map.lq {
                    let row = map.row(h, q);
                    let s: f64 = row.iter().sum();
                    assert!((s - 1.0).abs() < 1e-6);
                    for (k, &w) in row.iter().enumerate() {
                        assert!(w >= 0.0);
                        if !b.asr_mask[bi * b.asr_len + k] {
                            assert_eq!(w, 0.0);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn fused_length_follows_text_for_any_asr_length() {
    let raw = "كتب الولد";
    let lt = raw.chars().count();
    for backbone in [Backbone::Transformer, Backbone::Lstm] {
        let cfg = tiny(backbone, true);
        let vocab = Vocabulary::build([(raw, Some("كَتَبَ"))]).unwrap();
        let model = Model::new(cfg, vocab, 2).unwrap();
        let text_ids = model.vocab().text.encode(&raw.chars().collect::<Vec<_>>());
        for la in 1..=3 * lt {
            let asr_ids: Vec<u32> = (0..la).map(|i| 2 + (i % 5) as u32).collect();
            let (probs, attn) = model.predict_ids(&text_ids, &asr_ids);
            assert_eq!(probs.len(), lt * LABEL_COUNT);
            assert_eq!(attn.unwrap().len(), 4 * lt * la);
        }
    }
}

#[test]
fn text_only_ignores_asr() {
    for backbone in [Backbone::Transformer, Backbone::Lstm] {
        let ex = examples();
        let model = Model::new(tiny(backbone, false), vocab_of(&ex), 3).unwrap();
        let mut b = batch_for(&model, &ex);
        let before = model.forward(&b, Mode::Eval).unwrap();
        b.asr_ids.iter_mut().for_each(|id| *id = 5);
        let after = model.forward(&b, Mode::Eval).unwrap();
        assert_eq!(before.probs, after.probs);
        assert!(after.attention.is_empty());
    }
}

#[test]
fn eval_is_deterministic_and_train_mode_uses_dropout() {
    let ex = examples();
    let model = Model::new(tiny(Backbone::Lstm, true), vocab_of(&ex), 4).unwrap();
    let b = batch_for(&model, &ex);
    let a = model.forward(&b, Mode::Eval).unwrap();
    assert_eq!(a.probs, model.forward(&b, Mode::Eval).unwrap().probs);
    let t1 = model.forward(&b, Mode::Train { seed: 9 }).unwrap();
    let t2 = model.forward(&b, Mode::Train { seed: 9 }).unwrap();
    assert_eq!(t1.probs, t2.probs);
    assert_ne!(t1.probs, a.probs);
}

#[test]
fn padded_rows_are_uniform_and_loss_matches_forward() {
    let ex = examples();
    let model = Model64::new(tiny(Backbone::Transformer, true), vocab_of(&ex), 5).unwrap();
    let b = encode_batch(&ex, model.vocab(), model.config()).unwrap();
    let out = model.forward(&b, Mode::Eval).unwrap();
    let n1 = b.text_length(1);
    for t in n1..b.text_len {
        assert!(out.probs_at(1, t).iter().all(|&p| (p - 1.0 / 15.0).abs() < 1e-15));
    }
    let direct = diacritize::model::loss(&out.probs, &b.label_ids, &b.loss_mask).unwrap();
    let (from_grad, _) = model.loss_and_gradient(&b, Mode::Eval, 1).unwrap();
    assert!((direct - from_grad).abs() < 1e-12);
}

#[test]
fn all_masked_batch_has_zero_loss_and_gradient() {
    let ex = examples();
    for backbone in [Backbone::Transformer, Backbone::Lstm] {
        let model = Model64::new(tiny(backbone, true), vocab_of(&ex), 6).unwrap();
        let mut b = encode_batch(&ex, model.vocab(), model.config()).unwrap();
        b.loss_mask.iter_mut().for_each(|m| *m = false);
        let (loss, grads) = model.loss_and_gradient(&b, Mode::Eval, 8).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.iter().all(|&g| g == 0.0));
    }
}

#[test]
fn gradient_is_independent_of_thread_scheduling() {
    let ex: Vec<Example> = examples().into_iter().cycle().take(20).collect();
    let model = Model::new(tiny(Backbone::Lstm, true), vocab_of(&ex), 7).unwrap();
    let b = batch_for(&model, &ex);
    let first = model.loss_and_gradient(&b, Mode::Train { seed: 1 }, 3).unwrap();
    for _ in 0..3 {
        assert_eq!(model.loss_and_gradient(&b, Mode::Train { seed: 1 }, 3).unwrap(), first);
    }
}

#[test]
fn shape_errors() {
    let ex = examples();
    let model = Model::new(tiny(Backbone::Lstm, true), vocab_of(&ex), 8).unwrap();
    let mut b = batch_for(&model, &ex);
    b.text_ids[0] = 10_000;
    assert!(matches!(model.forward(&b, Mode::Eval), Err(ModelError::Shape(_))));
    let mut b = batch_for(&model, &ex);
    b.label_ids[0] = 15;
    assert!(matches!(model.forward(&b, Mode::Eval), Err(ModelError::Shape(_))));
}

#[test]
fn empty_asr_becomes_a_single_pad_key() {
    let mut ex = examples();
    ex[1].asr.clear();
    let model = Model::new(tiny(Backbone::Lstm, true), vocab_of(&ex), 9).unwrap();
    let b = batch_for(&model, &ex);
    assert_eq!(b.asr_row(1)[0], PAD);
    assert_eq!(b.asr_length(1), 1);
    let out = model.forward(&b, Mode::Eval).unwrap();
    assert_eq!(out.attention[1].row(0, 0)[0], 1.0);
}

#[test]
fn default_parameter_counts_are_near_published_sizes() {
    let corpus = generate_toy_corpus(&ToyCorpusConfig::default()).unwrap();
    let vocab = Vocabulary::build(corpus.train.iter().map(|p| (p.raw.as_str(), Some(p.gold.as_str())))).unwrap();
    let text_only = Model::new(ModelConfig::text_only(), vocab.clone(), 0).unwrap().num_parameters();
    let multimodal = Model::new(ModelConfig::default(), vocab, 0).unwrap().num_parameters();
    assert!((350_000..=1_400_000).contains(&text_only), "{text_only}");
    assert!((750_000..=3_000_000).contains(&multimodal), "{multimodal}");
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let ex = examples();
    let dir = tempfile::tempdir().unwrap();
    for backbone in [Backbone::Transformer, Backbone::Lstm] {
        let model = Model::new(tiny(backbone, true), vocab_of(&ex), 10).unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&model, None, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap().model;
        let b = batch_for(&model, &ex);
        let (x, y) = (model.forward(&b, Mode::Eval).unwrap(), loaded.forward(&b, Mode::Eval).unwrap());
        assert_eq!(x.probs, y.probs);
        assert_eq!(checkpoint_bytes(&model, None), std::fs::read(&path).unwrap());
    }
}

#[test]
fn checkpoint_corruption_is_detected() {
    let ex = examples();
    let model = Model::new(tiny(Backbone::Lstm, false), vocab_of(&ex), 11).unwrap();
    let bytes = checkpoint_bytes(&model, None);

    let truncated = &bytes[..bytes.len() - 3];
    assert!(matches!(parse_checkpoint(truncated), Err(ModelError::CorruptFile(_))));

    let mut trailing = bytes.clone();
    trailing.push(0);
    assert!(matches!(parse_checkpoint(&trailing), Err(ModelError::CorruptFile(_))));

    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(parse_checkpoint(&magic), Err(ModelError::CorruptFile(_))));

    let mut version = bytes.clone();
    version[8] = 2;
    assert!(matches!(parse_checkpoint(&version), Err(ModelError::VersionMismatch { found: 2, expected: 1 })));

    let text = String::from_utf8_lossy(&bytes).into_owned();
    let at = text.find("\"label_count\":15").expect("label_count in header");
    let mut labels = bytes.clone();
    labels[at + "\"label_count\":1".len()] = b'6';
    assert!(matches!(parse_checkpoint(&labels), Err(ModelError::ShapeMismatch(_))));

    let at = text.find("\"vocab_hash\":\"").unwrap() + "\"vocab_hash\":\"".len();
    let mut hash = bytes.clone();
    hash[at] = if hash[at] == b'0' { b'1' } else { b'0' };
    assert!(matches!(parse_checkpoint(&hash), Err(ModelError::CorruptFile(_))));

    let at = text.find("\"d_model\":16").unwrap() + "\"d_model\":1".len();
    let mut dims = bytes.clone();
    dims[at] = b'2';
    assert!(matches!(parse_checkpoint(&dims), Err(ModelError::ShapeMismatch(_))));
}

fn toy_examples(n: usize) -> (Vec<Example>, Vec<Example>) {
    let corpus = generate_toy_corpus(&ToyCorpusConfig { n_train: n, n_dev: 10, n_test: 1, ..ToyCorpusConfig::default() })
        .unwrap();
    let conv = |v: &[diacritize::asr_sim::ToyPair]| {
        v.iter().map(|p| Example { raw: p.raw.clone(), asr: p.gold.clone(), gold: p.gold.clone() }).collect()
    };
    (conv(&corpus.train), conv(&corpus.dev))
}

#[test]
fn training_reduces_loss_and_is_reproducible() {
    let (tr, dv) = toy_examples(96);
    let cfg = ModelConfig { dropout_lstm: 0.1, ..tiny(Backbone::Lstm, true) };
    let tcfg = TrainConfig { epochs: 5, batch_size: 16, learning_rate: 3e-3, ..TrainConfig::default() };
    let (m1, h1) = train::<f32>(&tr, &dv, &cfg, &tcfg).unwrap();
    let losses: Vec<f64> = h1.epochs.iter().map(|e| e.train_loss).collect();
    assert!(losses[0] > losses[1] && losses[1] > losses[2], "{losses:?}");
    let (m2, h2) = train::<f32>(&tr, &dv, &cfg, &tcfg).unwrap();
    assert_eq!(h1, h2);
    assert_eq!(checkpoint_bytes(&m1, Some(&h1)), checkpoint_bytes(&m2, Some(&h2)));
}

#[test]
fn both_fusion_settings_and_backbones_train() {
    let (tr, dv) = toy_examples(64);
    for backbone in [Backbone::Transformer, Backbone::Lstm] {
        for fuse_concat in [true, false] {
            let cfg = ModelConfig { fuse_concat, ..tiny(backbone, true) };
            let tcfg = TrainConfig { epochs: 3, batch_size: 16, learning_rate: 3e-3, ..TrainConfig::default() };
            let (_, h) = train::<f32>(&tr, &dv, &cfg, &tcfg).unwrap();
            assert!(h.epochs[2].train_loss < h.epochs[0].train_loss, "{backbone:?} {fuse_concat}: {h:?}");
        }
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let (tr, dv) = toy_examples(32);
    let cfg = ModelConfig { dropout_lstm: 0.0, ..tiny(Backbone::Lstm, false) };
    let tcfg = TrainConfig { epochs: 3, batch_size: 8, learning_rate: 0.0, ..TrainConfig::default() };
    let (m, h) = train::<f32>(&tr, &dv, &cfg, &tcfg).unwrap();
    let fresh = Model::new(cfg, m.vocab().clone(), tcfg.seed).unwrap();
    assert_eq!(m.params(), fresh.params());
    for e in &h.epochs {
        assert!((e.train_loss - h.epochs[0].train_loss).abs() < 1e-5);
    }
}

#[test]
fn training_rejects_empty_sets() {
    let (tr, _) = toy_examples(4);
    let r = train::<f32>(&tr, &[], &tiny(Backbone::Lstm, false), &TrainConfig::default());
    assert!(matches!(r, Err(ModelError::EmptyCorpus)));
}
