use proptest::prelude::*;
use texcal_core::augment::Variant;
use texcal_core::classifier::{init_model, ModelConfig};
use texcal_core::io::{
    decode_checkpoint, decode_pgm, echo_config, encode_checkpoint, encode_pgm, load_config, read_logits,
    read_manifest, write_logits, write_manifest, ExperimentConfig, ECHO_FILE,
};
use texcal_core::metrics::BinningConfig;
use texcal_core::scaling::LogitMatrix;
use texcal_core::synth::{build_test_groups, kfold, stratified_split, DatasetManifest, ManifestRecord, PitClass, ContactAngle};
use texcal_core::ImageBuffer;
use std::path::Path;

fn image() -> impl Strategy<Value = ImageBuffer> {
    (1usize..40, 1usize..40).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<u8>(), w * h).prop_map(move |px| ImageBuffer::new(w, h, px).unwrap())
    })
}

fn logit_matrix() -> impl Strategy<Value = LogitMatrix> {
    (1usize..30, 2usize..7).prop_flat_map(|(n, k)| {
        (
            prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL, n * k),
            prop::collection::vec(0..k, n),
            prop::collection::vec("[a-zA-Z0-9_-]{1,12}", n),
        )
            .prop_map(move |(z, y, ids)| LogitMatrix::new(k, z, y, ids).unwrap())
    })
}

fn model_config() -> impl Strategy<Value = ModelConfig> {
    (1usize..4, 1usize..3, 2usize..6, any::<bool>()).prop_flat_map(|(depth, half_k, classes, bias)| {
        (
            prop::collection::vec(1usize..6, depth),
            prop::collection::vec(1usize..4, depth),
            1usize..4,
        )
            .prop_map(move |(channels, dilations, mult)| ModelConfig {
                input_size: (1 << depth) * mult,
                channels,
                kernel_size: 2 * half_k + 1,
                dilations,
                num_classes: classes,
                conv_bias: bias,
            })
    })
}

fn experiment_config() -> impl Strategy<Value = ExperimentConfig> {
    (
        0u64..=i64::MAX as u64,
        prop::sample::subsequence(Variant::ALL.to_vec(), 1..=3),
        (8usize..300, 0.05f64..0.5, 2usize..8, 1.0f64..64.0, 1.0f64..64.0),
        (1usize..200, 1usize..64, 1e-4f64..1.0, 0.0f64..0.99, 0.0f64..1e-2),
        (1usize..40, model_config(), 0.0f64..=1.0),
        (prop::collection::vec(0.5f64..4.0, 1..6), proptest::option::of("[a-z]{1,8}")),
    )
        .prop_map(|(seed, variants, d, t, (m, model, p), (steps, out))| {
            let mut cfg = ExperimentConfig {
                root_seed: seed,
                variants,
                model,
                out_dir: out.map(Into::into),
                ..ExperimentConfig::default()
            };
            (cfg.dataset.image_size, cfg.dataset.test_fraction, cfg.dataset.folds) = (d.0, d.1, d.2);
            (cfg.dataset.blur_cap, cfg.dataset.noise_cap) = (d.3, d.4);
            (cfg.train.epochs, cfg.train.batch_size, cfg.train.learning_rate) = (t.0, t.1, t.2);
            (cfg.train.momentum, cfg.train.weight_decay) = (t.3, t.4);
            cfg.binning = BinningConfig::new(m).unwrap();
            cfg.augment.apply_probability = p;
            let mut acc = 0.0;
            cfg.sweep.noise_sigmas = steps
                .iter()
                .map(|s| {
                    acc += s;
                    acc
                })
                .collect();
            cfg
        })
}

fn manifest_from(seed: u64) -> DatasetManifest {
    let mut records = Vec::new();
    for (i, class) in PitClass::ALL.into_iter().enumerate() {
        for j in 0..(6 + (seed as usize + i) % 5) {
            records.push(ManifestRecord {
                sample_id: format!("s{:03}", records.len()),
                class,
                geometry_variant: (j % 10 + 1) as u8,
                material_level: (j % 4 + 1) as u8,
                contact_angle: if j % 3 == 0 { ContactAngle::Deg45 } else { ContactAngle::Deg0 },
                split: None,
                fold: None,
                group: None,
                blur_sigma: None,
                noise_sigma: None,
                path: format!("images/s{:03}.pgm", records.len()),
            });
        }
    }
    let m = stratified_split(&DatasetManifest { records }, 0.2, seed).unwrap();
    let m = kfold(&m, 3, seed).unwrap();
    build_test_groups(&m, 32.0, 30.0, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn pgm_round_trip(img in image()) {
        prop_assert_eq!(decode_pgm(&encode_pgm(&img), Path::new("mem")).unwrap(), img);
    }

    #[test]
    fn logits_round_trip(m in logit_matrix()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("logits.csv");
        write_logits(&m, &path).unwrap();
        prop_assert_eq!(read_logits(&path).unwrap(), m);
    }

    #[test]
    fn checkpoint_round_trip(cfg in model_config(), seed in any::<u64>()) {
        let params = init_model(&cfg, seed).unwrap();
        let bytes = encode_checkpoint(&cfg, &params);
        let (cfg2, params2) = decode_checkpoint(&bytes, Path::new("mem")).unwrap();
        prop_assert_eq!(cfg2, cfg);
        prop_assert_eq!(params2.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        params.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn config_echo_round_trip(cfg in experiment_config()) {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = cfg;
        cfg.out_dir = cfg.out_dir.map(|p| dir.path().join(p));
        let path = echo_config(&cfg, dir.path()).unwrap();
        prop_assert_eq!(path.file_name().unwrap().to_str().unwrap(), ECHO_FILE);
        prop_assert_eq!(load_config(&path).unwrap(), cfg);
    }

    #[test]
    fn manifest_round_trip(seed in 0u64..1000) {
        let m = manifest_from(seed);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        write_manifest(&m, &path).unwrap();
        prop_assert_eq!(read_manifest(&path).unwrap(), m);
    }
}

#[test]
fn truncated_checkpoint_is_rejected() {
    let cfg = ModelConfig::default();
    let bytes = encode_checkpoint(&cfg, &init_model(&cfg, 1).unwrap());
    for cut in [0, 3, 10, bytes.len() - 1] {
        assert!(decode_checkpoint(&bytes[..cut], Path::new("mem")).is_err());
    }
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(decode_checkpoint(&bad, Path::new("mem")).is_err());
}

#[test]
fn malformed_pgm_is_rejected() {
    assert!(decode_pgm(b"P2\n1 1\n255\n\x00", Path::new("mem")).is_err());
    assert!(decode_pgm(b"P5\n2 2\n255\n\x00", Path::new("mem")).is_err());
    assert!(decode_pgm(b"P5\n1 1\n65535\n\x00\x00", Path::new("mem")).is_err());
}
