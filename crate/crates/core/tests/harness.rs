use dialearn::corpus::tokenize;
use dialearn::harness::{
    load_corpus, read_metrics, run_experiment, DatasetConfig, ExperimentConfig, ModelSettings,
};
use dialearn::policies::{Algorithm, BatchMode, PolicyConfig};
use dialearn::simulator::{RunSettings, TemplateSet};
use proptest::prelude::*;

fn small(algorithm: Algorithm, batch: BatchMode) -> ExperimentConfig {
    ExperimentConfig {
        name: "small".into(),
        seed: 4,
        task: 3,
        dataset: DatasetConfig::synth_babi(30, 6, 10),
        model: ModelSettings { tie_answer: true, ..ModelSettings::default() },
        policy: PolicyConfig { epsilon: 0.2, batch, ..PolicyConfig::new(algorithm) },
        run: RunSettings { epochs: 3, iterations: 2, ..RunSettings::default() },
        output_dir: None,
        wall_clock: false,
    }
}

#[test]
fn reruns_write_byte_identical_metrics() {
    for cfg in [small(Algorithm::RbiFp, BatchMode::Online(8)), small(Algorithm::Fp, BatchMode::Dataset)] {
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        let mut bytes = Vec::new();
        for d in &dirs {
            let c = ExperimentConfig { output_dir: Some(d.path().to_path_buf()), ..cfg.clone() };
            let out = run_experiment(&c, None).unwrap();
            let path = d.path().join(format!("{}.csv", out.run_id));
            assert_eq!(read_metrics(&path).unwrap(), out.records);
            bytes.push(std::fs::read(path).unwrap());
        }
        assert_eq!(bytes[0], bytes[1]);
    }
}

#[test]
fn accuracy_bounded_and_episodes_conserved() {
    let cfg = small(Algorithm::Rbi, BatchMode::Online(7));
    let out = run_experiment(&cfg, None).unwrap();
    let n = load_corpus(&cfg.dataset, None, &TemplateSet::builtin()).unwrap().train.len();
    assert_eq!(out.records.len(), cfg.run.epochs + 1);
    for (i, r) in out.records.iter().enumerate() {
        assert!((0.0..=1.0).contains(&r.accuracy));
        assert_eq!(r.episodes, i * n);
        assert_eq!(r.seconds, 0.0);
    }
    let cfg = small(Algorithm::Rbi, BatchMode::Dataset);
    let out = run_experiment(&cfg, None).unwrap();
    assert_eq!(out.records.iter().map(|r| r.episodes).collect::<Vec<_>>(), vec![n, 2 * n]);
}

#[test]
fn run_id_names_the_config() {
    let a = small(Algorithm::Rbi, BatchMode::Dataset);
    let mut b = a.clone();
    assert_eq!(a.run_id(), b.run_id());
    b.output_dir = Some("elsewhere".into());
    b.wall_clock = true;
    assert_eq!(a.run_id(), b.run_id());
    b.policy.epsilon = 0.3;
    assert_ne!(a.run_id(), b.run_id());
    assert_eq!(a.run_id().len(), 16);
}

#[test]
fn configs_round_trip_through_toml() {
    for cfg in [
        small(Algorithm::Reinforce, BatchMode::Online(1)),
        ExperimentConfig::desk(6, Algorithm::Fp),
        ExperimentConfig { dataset: DatasetConfig::synth_wikimovies(20, 50, 10, 10), ..small(Algorithm::RbiFp, BatchMode::Dataset) },
    ] {
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg, "{text}");
    }
    let err = ExperimentConfig::from_toml("seed = 1").unwrap_err();
    assert!(err.to_string().contains("missing"), "{err}");
}

#[test]
fn generated_corpora_cover_gold() {
    let t = TemplateSet::builtin();
    for d in [DatasetConfig::synth_babi(40, 8, 8), DatasetConfig::synth_wikimovies(60, 300, 50, 50)] {
        let c = load_corpus(&d, None, &t).unwrap();
        for split in [&c.train, &c.valid, &c.test] {
            for (item, enc) in split.items.iter().zip(&split.encoded) {
                assert!(!item.answers.is_empty());
                assert_eq!(enc.gold.len(), item.answers.len());
                for (a, &g) in item.answers.iter().zip(&enc.gold) {
                    assert_eq!(c.candidates.get(g), a);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unseen_words_map_to_unknown(text in "[a-zA-Z ,.?!']{0,60}") {
        let c = load_corpus(&DatasetConfig::synth_babi(3, 1, 1), None, &TemplateSet::builtin()).unwrap();
        let ids = c.encode_text(&text);
        let toks = tokenize(&text);
        prop_assert_eq!(ids.len(), toks.len());
        for (id, tok) in ids.iter().zip(&toks) {
            match c.vocab.get(tok) {
                Some(i) => prop_assert_eq!(*id, i),
                None => prop_assert_eq!(*id, c.vocab.unknown()),
            }
        }
    }

    #[test]
    fn metrics_are_seed_determined(seed in 0u64..1000) {
        let cfg = ExperimentConfig {
            seed,
            dataset: DatasetConfig::synth_babi(8, 2, 3),
            run: RunSettings { epochs: 1, ..RunSettings::default() },
            ..small(Algorithm::Fp, BatchMode::Online(4))
        };
        let a = run_experiment(&cfg, None).unwrap();
        let b = run_experiment(&cfg, None).unwrap();
        prop_assert_eq!(a.records, b.records);
    }
}
