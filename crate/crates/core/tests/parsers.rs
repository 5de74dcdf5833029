//! Replays the fuzz corpus through the parsers and checks round trips.

use std::fs;
use std::path::PathBuf;

use hjlab::config::ExperimentConfig;
use hjlab::homog::EffectiveTable;
use hjlab::hj::InitialDatum;
use proptest::prelude::*;

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    assert!(!files.is_empty(), "empty corpus in {dir:?}");
    files
}

#[test]
fn config_corpus() {
    let mut accepted = 0;
    for (name, bytes) in corpus("config_json") {
        let text = String::from_utf8(bytes).unwrap();
        match ExperimentConfig::from_json(&text) {
            Ok(cfg) => {
                accepted += 1;
                assert_eq!(ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap(), cfg, "{name}");
            }
            Err(_) => assert!(
                ["unknown_key", "delta_too_large", "truncated", "empty_object"].iter().any(|n| name.starts_with(n)),
                "{name} was rejected"
            ),
        }
    }
    assert_eq!(accepted, 5);
}

#[test]
fn tabulated_corpus() {
    for (name, bytes) in corpus("tabulated_datum") {
        let parsed = InitialDatum::parse_tabulated(&bytes[..]);
        let bad = ["decreasing", "wrong_header", "nan"].iter().any(|n| name.starts_with(n));
        assert_eq!(parsed.is_err(), bad, "{name}");
        if let Ok(d) = parsed {
            let mut out = Vec::new();
            d.write_tabulated(&mut out).unwrap();
            assert_eq!(InitialDatum::parse_tabulated(&out[..]).unwrap(), d);
        }
    }
}

#[test]
fn effective_table_corpus() {
    for (name, bytes) in corpus("effective_table") {
        let parsed = EffectiveTable::read_csv(&bytes[..]);
        let bad = ["no_v_rows", "bad_flag", "bad_kind"].iter().any(|n| name.starts_with(n));
        assert_eq!(parsed.is_err(), bad, "{name}");
        if let Ok(t) = parsed {
            let mut out = Vec::new();
            t.write_csv(&mut out).unwrap();
            let again = EffectiveTable::read_csv(&out[..]).unwrap();
            assert_eq!((again.v, again.lbar, again.p, again.hbar), (t.v, t.lbar, t.p, t.hbar));
        }
    }
}

proptest! {
    #[test]
    fn parsers_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        let _ = InitialDatum::parse_tabulated(&bytes[..]);
        let _ = EffectiveTable::read_csv(&bytes[..]);
        if let Ok(s) = std::str::from_utf8(&bytes) {
            let _ = ExperimentConfig::from_json(s);
        }
    }

    #[test]
    fn tabulated_round_trip(mut xs in proptest::collection::vec(-1e6f64..1e6, 1..20), us in proptest::collection::vec(-1e6f64..1e6, 20)) {
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let d = InitialDatum::Tabulated { u: us[..xs.len()].to_vec(), x: xs };
        let mut out = Vec::new();
        d.write_tabulated(&mut out).unwrap();
        prop_assert_eq!(InitialDatum::parse_tabulated(&out[..]).unwrap(), d);
    }

    #[test]
    fn effective_table_round_trip(lbar in proptest::collection::vec(-10.0f64..10.0, 2..12)) {
        let v: Vec<Vec<f64>> = (0..lbar.len()).map(|i| vec![i as f64 * 0.25 - 1.0]).collect();
        let t = EffectiveTable::from_samples(v, lbar.clone(), vec![0.01; lbar.len()]).unwrap();
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        let again = EffectiveTable::read_csv(&out[..]).unwrap();
        prop_assert_eq!(again.lbar, lbar);
    }
}
