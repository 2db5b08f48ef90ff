use super::*;

#[test]
fn exit_codes_follow_error_kinds() {
    assert_eq!(exit_code(&Error::Numeric("nan".into())), EXIT_NUMERIC);
    for e in [
        Error::Input("x".into()),
        Error::Config("x".into()),
        Error::Format("x".into()),
        Error::Version("x".into()),
        Error::Conflict("x".into()),
        Error::MissingFiles(vec![]),
        Error::Corruption {
            path: "f".into(),
            offset: 3,
            reason: "r".into(),
        },
        Error::io("f", std::io::Error::other("x")),
    ] {
        assert_eq!(exit_code(&e), EXIT_INPUT, "{e}");
    }
    for e in [Error::Shape("x".into()), Error::Contract("x".into()), Error::Domain("x".into())] {
        assert_eq!(exit_code(&e), EXIT_INTERNAL, "{e}");
    }
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    std::fs::write(&p, r#"{"train": {"epochs": 3, "epoch": 4}}"#).unwrap();
    assert!(matches!(RunConfig::load(Some(&p)), Err(Error::Config(_))));
    std::fs::write(&p, r#"{"extra": {}}"#).unwrap();
    assert!(matches!(RunConfig::load(Some(&p)), Err(Error::Config(_))));
}

#[test]
fn missing_sections_take_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    std::fs::write(&p, r#"{"train": {"epochs": 3}}"#).unwrap();
    let cfg = RunConfig::load(Some(&p)).unwrap();
    assert_eq!(cfg.train.epochs, 3);
    assert_eq!(cfg.train.batch_size, 16);
    assert_eq!(cfg.model, crate::model::ModelConfig::default());
    assert_eq!(cfg.model.decoder.max_len, 35);
    cfg.validate().unwrap();
}

#[test]
fn word2vec_width_must_match_decoder() {
    let mut cfg = RunConfig::default();
    cfg.model.decoder.width = 64;
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    cfg.text.pretrain_embeddings = false;
    cfg.validate().unwrap();
}

#[test]
fn echo_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.paths.run_dir = dir.path().join("run");
    cfg.train.seed = 7;
    let path = cfg.echo().unwrap();
    let back: RunConfig = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn grammar_names() {
    assert_eq!(parse_grammar("tone"), Ok(Grammar::Tone));
    assert_eq!(parse_grammar("noise"), Ok(Grammar::Noise));
    assert!(parse_grammar("speech").is_err());
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(["cl4ac", "frobnicate"]), 2);
    assert_eq!(run(["cl4ac", "caption"]), 2);
}
