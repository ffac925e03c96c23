use std::path::PathBuf;

use datawords::equiv::Runner;
use datawords::library::corpus;
use datawords::machines::Machine;

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

/// Set `DATAWORDS_BLESS=1` to rewrite the bundled files.
#[test]
fn bundled_files_match_builders() {
    let dir = corpus_dir();
    let bless = std::env::var_os("DATAWORDS_BLESS").is_some();
    for (name, json) in corpus().unwrap() {
        let path = dir.join(name);
        let text = serde_json::to_string_pretty(&json).unwrap() + "\n";
        if bless {
            std::fs::create_dir_all(&dir).unwrap();
            std::fs::write(&path, &text).unwrap();
        }
        let on_disk = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(on_disk, text, "{name} is stale");
    }
}

#[test]
fn every_fixture_loads_validates_and_round_trips() {
    for (name, _) in corpus().unwrap() {
        let text = std::fs::read_to_string(corpus_dir().join(name)).unwrap();
        let json: serde_json::Value = serde_json::from_str(&text).unwrap();
        if name == "bad_mealy.json" {
            assert!(Machine::from_json(json.clone()).is_err());
            let m = Machine::from_json_unchecked(json.clone()).unwrap();
            assert!(m.validate().is_err());
            assert_eq!(m.to_json(), json);
            continue;
        }
        let r = Runner::from_json(json.clone()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(r.to_json(), json, "{name}");
    }
}
