use emoji_predict::classifier::{train, ClassifierModel, ModelArchitecture, TrainConfig};
use emoji_predict::corpus::{Corpus, EmojiId, LabeledExample, Origin};
use emoji_predict::evaluation::{evaluate, EvalOptions};
use emoji_predict::featurizer::FeaturizerConfig;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn keyword_corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fillers = ["so", "really", "today", "omg", "the", "my", "that", "is", "yes", "we"];
    let examples = (0..n)
        .map(|_| {
            let pizza = rng.random_bool(0.5);
            let mut words: Vec<&str> = (0..rng.random_range(2..6)).map(|_| *fillers.choose(&mut rng).unwrap()).collect();
            let pos = rng.random_range(0..=words.len());
            words.insert(pos, if pizza { "pizza" } else { "love" });
            let label = if pizza { "🍕" } else { "❤️" };
            LabeledExample::new(words.join(" "), EmojiId::new(label).unwrap(), Origin::Human).unwrap()
        })
        .collect();
    Corpus::from_examples(examples)
}

fn fit(corpus: &Corpus, seed: u64) -> ClassifierModel<f32> {
    let fz = FeaturizerConfig { n_buckets: 1 << 12, ..Default::default() };
    let arch = ModelArchitecture { embedding_dim: 16, hidden_layers: 1, hidden_dim: 16, n_classes: corpus.vocabulary().len() };
    train(corpus, &arch, &fz, &TrainConfig { epochs: 3, seed, ..TrainConfig::desk() }).unwrap()
}

#[test]
fn learns_keyword_task() {
    let model = fit(&keyword_corpus(600, 1), 1);
    let held_out = keyword_corpus(200, 2);
    let report = evaluate(&model, &held_out, &EvalOptions::new(&[1])).unwrap();
    // Seeded run reaches 1.0; the bar leaves two points of slack.
    assert!(report.hit_at[&1] >= 0.98, "{}", report.hit_at[&1]);
    assert_eq!(model.predict("pizza pizza", 1).ranked[0].emoji.as_str(), "🍕");
}

#[test]
fn fixed_seed_is_byte_reproducible() {
    let corpus = keyword_corpus(300, 3);
    assert_eq!(fit(&corpus, 7).to_bytes(), fit(&corpus, 7).to_bytes());
    assert_ne!(fit(&corpus, 7).to_bytes(), fit(&corpus, 8).to_bytes());
}

#[test]
fn f64_and_f32_models_agree_on_easy_inputs() {
    let corpus = keyword_corpus(300, 4);
    let fz = FeaturizerConfig { n_buckets: 1 << 12, ..Default::default() };
    let arch = ModelArchitecture { embedding_dim: 16, hidden_layers: 1, hidden_dim: 16, n_classes: 2 };
    let cfg = TrainConfig { epochs: 3, ..TrainConfig::desk() };
    let a: ClassifierModel<f32> = train(&corpus, &arch, &fz, &cfg).unwrap();
    let b: ClassifierModel<f64> = train(&corpus, &arch, &fz, &cfg).unwrap();
    for t in ["pizza", "love it", "so much pizza today"] {
        assert_eq!(a.predict(t, 1).ranked[0].emoji, b.predict(t, 1).ranked[0].emoji);
    }
}
