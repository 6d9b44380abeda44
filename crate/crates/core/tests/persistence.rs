use bart_core::dataset::generate_friedman;
use bart_core::inference::predict_point;
use bart_core::persistence::{decode, encode, export_json, load_model, save_model, FORMAT_VERSION};
use bart_core::{BartError, BartModel, Hyperparameters};

fn small_model() -> (BartModel, bart_core::ModelFrame) {
    let frame = generate_friedman(120, 8, 1.0, 4).unwrap();
    let hyper = Hyperparameters { num_trees: 15, burn_in: 50, post_burn_in: 100, ..Default::default() };
    (BartModel::fit(&frame, &hyper, 21).unwrap(), frame)
}

#[test]
fn round_trip_predictions_are_bit_identical() {
    let (model, _) = small_model();
    let fresh = generate_friedman(100, 8, 1.0, 99).unwrap();
    let before = predict_point(&model, &fresh).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bart");
    save_model(&model, &path, true).unwrap();
    let loaded = load_model(&path).unwrap();
    let after = predict_point(&loaded, &fresh).unwrap();
    assert!(before.iter().zip(&after).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(loaded.ensemble.traces, model.ensemble.traces);
    assert_eq!(loaded.meta.train_fitted, model.meta.train_fitted);
    assert_eq!(loaded.meta.priors, model.meta.priors);
}

#[test]
fn encoding_is_canonical() {
    let (model, _) = small_model();
    let a = encode(&model, true).unwrap();
    let b = encode(&decode(&a).unwrap(), true).unwrap();
    assert_eq!(a, b);
    let c = encode(&model, false).unwrap();
    assert!(c.len() < a.len());
    assert!(decode(&c).unwrap().ensemble.traces.is_empty());
}

#[test]
fn version_and_corruption_are_detected() {
    let (model, _) = small_model();
    let bytes = encode(&model, false).unwrap();

    let mut v = bytes.clone();
    v[8] = v[8].wrapping_add(1);
    match decode(&v) {
        Err(BartError::VersionMismatch { expected, found }) => {
            assert_eq!(expected, FORMAT_VERSION);
            assert_eq!(found, FORMAT_VERSION + 1);
        }
        other => panic!("expected version error, got {other:?}"),
    }

    for pos in [20, bytes.len() / 2, bytes.len() - 10] {
        let mut c = bytes.clone();
        c[pos] ^= 0x40;
        assert!(matches!(decode(&c), Err(BartError::CorruptArchive(_))), "flip at {pos}");
    }
    assert!(matches!(decode(&bytes[..bytes.len() - 3]), Err(BartError::CorruptArchive(_))));
    assert!(matches!(decode(b"not a model"), Err(BartError::CorruptArchive(_))));
}

#[test]
fn json_export_parses() {
    let (model, _) = small_model();
    let v: serde_json::Value = serde_json::from_str(&export_json(&model).unwrap()).unwrap();
    assert_eq!(v["format_version"], FORMAT_VERSION);
    assert_eq!(v["ensemble"]["samples"].as_array().unwrap().len(), 100);
}

#[test]
fn default_size_archive_is_a_few_megabytes() {
    let frame = generate_friedman(100, 10, 1.0, 2).unwrap();
    let model = BartModel::fit(&frame, &Hyperparameters::default(), 3).unwrap();
    let bytes = encode(&model, false).unwrap();
    let mb = bytes.len() as f64 / 1e6;
    assert!((0.5..10.0).contains(&mb), "{mb} MB");
}
