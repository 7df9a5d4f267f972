use radcap_core::data::generate_synthetic;
use radcap_core::decoder::{generate_greedy, init_model};
use radcap_core::tokenizer::{encode, tokenize};
use radcap_core::trainer::{sample_loss_on, train, TrainingSample};
use radcap_core::{finite_diff_check, DecoderConfig, EncoderConfig, ModelConfig, TrainConfig, Vocabulary};

fn small_config(vocab_size: usize) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            image_size: 32,
            channels: 1,
            patch_size: 8,
            model_dim: 16,
            num_heads: 2,
            num_layers: 1,
            ff_dim: 32,
        },
        decoder: DecoderConfig {
            model_dim: 16,
            num_heads: 2,
            num_layers: 1,
            ff_dim: 32,
            vocab_size,
            max_len: 12,
        },
    }
}

fn synthetic_samples(count: usize, seed: u64) -> (Vec<TrainingSample>, Vocabulary) {
    let raw = generate_synthetic(count, seed).unwrap();
    let captions: Vec<&str> = raw.iter().map(|s| s.caption.as_str()).collect();
    let vocab = Vocabulary::build(&captions, 1).unwrap();
    let samples = raw
        .iter()
        .map(|s| TrainingSample {
            image: s.image.clone(),
            caption: encode(&tokenize(&s.caption), &vocab, 12).unwrap(),
        })
        .collect();
    (samples, vocab)
}

#[test]
fn training_loss_gradients_match_finite_differences() {
    let (samples, vocab) = synthetic_samples(1, 4);
    let mut config = small_config(vocab.len());
    config.encoder.image_size = 16;
    config.encoder.model_dim = 8;
    config.decoder.model_dim = 8;
    let mut sample = samples[0].clone();
    sample.image = sample.image.center_crop_resize(16).unwrap();
    let params = init_model(&config, 0).unwrap();
    let err = finite_diff_check(&params, 1e-5, |tape, b| sample_loss_on(tape, b, &sample, &config)).unwrap();
    assert!(err < 1e-5, "{err}");
}

#[test]
fn single_pair_is_memorised() {
    let (samples, vocab) = synthetic_samples(1, 11);
    let config = small_config(vocab.len());
    let tc = TrainConfig {
        epochs: 2000,
        learning_rate: 3e-3,
        batch_size: 1,
        seed: 5,
        ..TrainConfig::default()
    };
    let out = train(&samples, &config, &tc).unwrap();
    let losses: Vec<f64> = out.log.steps.iter().map(|s| s.loss).collect();
    let last = *losses.last().unwrap();
    assert!(last < 0.05, "final loss {last}");

    // after the warm-up, the loss 100 steps later is never higher
    for t in 200..losses.len() - 100 {
        assert!(losses[t + 100] <= losses[t], "step {t}: {} -> {}", losses[t], losses[t + 100]);
    }

    let seq = generate_greedy(&samples[0].image, &config, &out.params, &vocab).unwrap();
    assert_eq!(seq.ids, samples[0].caption.ids);
}

#[test]
fn zero_learning_rate_keeps_loss_constant() {
    let (samples, vocab) = synthetic_samples(5, 2);
    let config = small_config(vocab.len());
    let tc = TrainConfig {
        epochs: 4,
        learning_rate: 0.0,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let out = train(&samples, &config, &tc).unwrap();
    let first = out.log.epochs[0];
    assert!(out.log.epochs.iter().all(|&l| l == first), "{:?}", out.log.epochs);
    assert_eq!(out.params, init_model(&config, tc.seed).unwrap());
}

#[test]
fn seeded_training_is_bitwise_reproducible() {
    let (samples, vocab) = synthetic_samples(6, 3);
    let config = small_config(vocab.len());
    let tc = TrainConfig {
        epochs: 3,
        batch_size: 4,
        seed: 42,
        grad_clip: Some(1.0),
        ..TrainConfig::default()
    };
    let a = train(&samples, &config, &tc).unwrap();
    let b = train(&samples, &config, &tc).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.log.epochs), bits(&b.log.epochs));
    assert_eq!(a.log.to_csv(), b.log.to_csv());
    for ((na, ta), (nb, tb)) in a.params.iter().zip(b.params.iter()) {
        assert_eq!(na, nb);
        assert_eq!(bits(ta.data()), bits(tb.data()));
    }

    let other = TrainConfig { seed: 43, ..tc };
    let c = train(&samples, &config, &other).unwrap();
    assert_ne!(bits(&a.log.epochs), bits(&c.log.epochs));
}

#[test]
fn empty_dataset_is_rejected() {
    let config = small_config(10);
    assert!(matches!(
        train(&[], &config, &TrainConfig::default()),
        Err(radcap_core::Error::Config(_))
    ));
}
