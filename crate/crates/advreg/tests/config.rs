use advreg::config::*;
use advreg_core::encoder::PerturbScope;
use advreg_core::harness::{Mode, TrainConfig};

fn build_from(text: &str) -> anyhow::Result<TrainConfig> {
    build(TrainConfig::default(), &parse_pairs(text)?)
}

#[test]
fn flat_and_json_forms_agree() {
    let flat = "# comment\nmode = at_multi\nepochs=7\nadv.epsilon = 0.02\nadv.M = 3\nadv.scope = all\nvat.power_iters = 2\n";
    let json = r#"{"mode":"at_multi","epochs":7,"adv":{"epsilon":0.02,"M":3,"scope":"all"},"vat":{"powerIters":2}}"#;
    let a = build_from(flat).unwrap();
    assert_eq!(a, build_from(json).unwrap());
    assert_eq!((a.mode, a.epochs, a.adv.m, a.adv.scope, a.vat.power_iters), (Mode::AtMulti, 7, 3, PerturbScope::All, 2));
    assert_eq!(a.adv.epsilon, 0.02);
}

#[test]
fn camel_and_snake_case_keys() {
    let a = build_from("batchLabeled = 16\ndecayRate = 0.9\nvat.unlabeledBatch = 256").unwrap();
    let b = build_from("batch_labeled = 16\ndecay_rate = 0.9\nvat.unlabeled_batch = 256").unwrap();
    assert_eq!(a, b);
    assert_eq!(a.batch_labeled, 16);
}

#[test]
fn bad_input_is_rejected() {
    assert!(build_from("nope = 1").unwrap_err().to_string().contains("unknown config key"));
    assert!(build_from("epochs = many").is_err());
    assert!(build_from("mode = fancy").is_err());
    assert!(build_from("epochs").unwrap_err().to_string().contains("line 1"));
    assert!(build_from("window = 4").is_err());
    assert!(build_from(r#"{"epochs": [1]}"#).is_err());
}

#[test]
fn later_pairs_override_earlier() {
    let mut pairs = parse_pairs("epochs = 3\nseed = 4").unwrap();
    pairs.push(("epochs".into(), "9".into()));
    let c = build(TrainConfig::default(), &pairs).unwrap();
    assert_eq!((c.epochs, c.seed), (9, 4));
}

#[test]
fn star_flag_and_mode_agree() {
    assert_eq!(build_from("mode = vat\nvat.star = true").unwrap().mode, Mode::VatStar);
    assert!(build_from("mode = vat_star").unwrap().vat.star);
}

#[test]
fn text_form_round_trips_every_key() {
    let mut cfg = build_from("mode = vat\nlr0 = 0.003\nadv.alpha = 0.5\nvat.xi = 1e-5\nvat.lambda = 0.25").unwrap();
    cfg.seed = 99;
    let text = to_text(&cfg);
    assert_eq!(text.lines().count(), KEYS.len());
    assert_eq!(build_from(&text).unwrap(), cfg);
}

#[test]
fn hash_tracks_configuration() {
    let a = TrainConfig::default();
    assert_eq!(config_hash(&a), config_hash(&a.clone()));
    assert_eq!(config_hash(&a).len(), 64);
    let b = TrainConfig { seed: 2, ..a.clone() };
    assert_ne!(config_hash(&a), config_hash(&b));
}
