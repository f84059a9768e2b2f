use emoji_predict::classifier::{
    initialize, load_model, model_size_report, model_version, save_model, ClassifierModel, ModelArchitecture, ModelError,
    Precision, MAGIC,
};
use emoji_predict::corpus::EmojiId;
use emoji_predict::featurizer::FeaturizerConfig;

fn small_model() -> ClassifierModel<f32> {
    let classes = ["😂", "❤️", "🍕", "🔥"].iter().map(|s| EmojiId::new(s).unwrap()).collect();
    let arch = ModelArchitecture { embedding_dim: 8, hidden_layers: 2, hidden_dim: 6, n_classes: 4 };
    let fz = FeaturizerConfig { n_buckets: 1 << 10, ..Default::default() };
    initialize(&arch, &fz, classes, 1).unwrap()
}

const TEXTS: &[&str] = &["pizza time", "love you", "this is fire lol", "", "🔥🔥"];

#[test]
fn float_roundtrip_predicts_identically() {
    let model = small_model();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.emoj");
    save_model(&model, &path).unwrap();
    let back: ClassifierModel<f32> = load_model(&path).unwrap();
    assert_eq!(back, model);
    for t in TEXTS {
        assert_eq!(back.predict_proba(t), model.predict_proba(t));
    }
}

#[test]
fn int8_roundtrip_predicts_identically() {
    let model = small_model().quantize().unwrap();
    assert_eq!(model.precision(), Precision::Int8Weights);
    let back = ClassifierModel::<f32>::from_bytes(&model.to_bytes()).unwrap();
    assert_eq!(back, model);
    for t in TEXTS {
        assert_eq!(back.predict(t, 4), model.predict(t, 4));
    }
}

#[test]
fn header_layout() {
    let bytes = small_model().to_bytes();
    assert_eq!(&bytes[..4], MAGIC);
    assert_eq!(bytes[4], 0x01);
    let meta_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let meta: serde_json::Value = serde_json::from_slice(&bytes[9..9 + meta_len]).unwrap();
    assert_eq!(meta["featurizer"]["hash"], "fnv1a64");
    assert_eq!(meta["precision"], "float32");
    let names: Vec<&str> = meta["tensors"].as_array().unwrap().iter().map(|t| t["name"].as_str().unwrap()).collect();
    assert_eq!(
        names,
        [
            "embedding",
            "hidden.0.weight",
            "hidden.0.bias",
            "hidden.1.weight",
            "hidden.1.bias",
            "output.weight",
            "output.bias"
        ]
    );
}

#[test]
fn rejects_bad_magic() {
    let mut bytes = small_model().to_bytes();
    bytes[0] = b'X';
    assert!(matches!(ClassifierModel::<f32>::from_bytes(&bytes), Err(ModelError::BadMagic)));
    assert!(matches!(ClassifierModel::<f32>::from_bytes(b""), Err(ModelError::BadMagic)));
}

#[test]
fn rejects_unknown_version() {
    let mut bytes = small_model().to_bytes();
    bytes[4] = 99;
    assert!(matches!(ClassifierModel::<f32>::from_bytes(&bytes), Err(ModelError::UnsupportedVersion(99))));
}

#[test]
fn rejects_truncation() {
    let bytes = small_model().to_bytes();
    for cut in [7, 20, bytes.len() - 1] {
        let err = ClassifierModel::<f32>::from_bytes(&bytes[..cut]).unwrap_err();
        assert!(matches!(err, ModelError::Truncated(_)), "cut at {cut}: {err}");
    }
}

#[test]
fn rejects_foreign_hash() {
    let bytes = small_model().to_bytes();
    let meta_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let meta = std::str::from_utf8(&bytes[9..9 + meta_len]).unwrap().replace("fnv1a64", "murmur3");
    let mut patched = bytes[..5].to_vec();
    patched.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    patched.extend_from_slice(meta.as_bytes());
    patched.extend_from_slice(&bytes[9 + meta_len..]);
    assert!(matches!(ClassifierModel::<f32>::from_bytes(&patched), Err(ModelError::UnsupportedHash(h)) if h == "murmur3"));
}

#[test]
fn quantizing_twice_is_an_error() {
    let q = small_model().quantize().unwrap();
    assert!(matches!(q.quantize(), Err(ModelError::InvalidPrecision { .. })));
}

#[test]
fn default_architecture_int8_size_ratio() {
    let classes: Vec<EmojiId> = (0..90).map(|i| EmojiId::new(format!("e{i}")).unwrap()).collect();
    let arch = ModelArchitecture::new(classes.len());
    let model: ClassifierModel<f32> = initialize(&arch, &FeaturizerConfig::default(), classes, 0).unwrap();
    let float = model_size_report(&model);
    let int8 = model_size_report(&model.quantize().unwrap());
    assert_eq!(float.bytes_on_disk, model.to_bytes().len());
    assert_eq!(float.parameter_count, int8.parameter_count);
    assert!((int8.bytes_on_disk as f64) <= 0.35 * float.bytes_on_disk as f64);
}

#[test]
fn version_is_content_hash_prefix() {
    let a = small_model().to_bytes();
    let v = model_version(&a);
    assert_eq!(v.len(), 16);
    assert!(v.chars().all(|c| c.is_ascii_hexdigit()));
    assert_eq!(v, model_version(&a));
    assert_ne!(v, model_version(&small_model().quantize().unwrap().to_bytes()));
    // SHA-256("") = e3b0c442 98fc1c14 ...
    assert_eq!(model_version(b""), "e3b0c44298fc1c14");
}
