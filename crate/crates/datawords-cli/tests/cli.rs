use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn datawords(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_datawords"))
        .args(args)
        .env_remove("DATAWORDS_CORPUS")
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("datawords-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn exit_codes() {
    let ok = datawords(&[
        "eval-pipeline",
        "--pipeline",
        "z3.prime.json",
        "--input",
        "0,1,2",
    ]);
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(json_of(&ok)["output"], "0,1,0");

    let missing = datawords(&["run", "--machine", "no-such-file.json", "--input", ""]);
    assert_eq!(missing.status.code(), Some(2));

    let usage = datawords(&["run", "--input", "#1"]);
    assert_eq!(usage.status.code(), Some(2));

    let model = datawords(&[
        "sst-compose",
        "--sst",
        "reverse.sst.json",
        "--pipeline",
        "z2.prime.json",
    ]);
    assert_eq!(model.status.code(), Some(1));
    assert!(json_of(&model)["error"]
        .as_str()
        .unwrap()
        .contains("sort mismatch"));
}

#[test]
fn validate_lists_violations() {
    let bad = datawords(&["validate", "--machine", "bad_mealy.json"]);
    assert_eq!(bad.status.code(), Some(1));
    let j = json_of(&bad);
    assert_eq!(j["valid"], false);
    assert!(j["violations"][0]
        .as_str()
        .unwrap()
        .contains("Mealy forbids previous"));

    let good = datawords(&["validate", "--sst", "mapreverse.sst.json"]);
    assert_eq!(good.status.code(), Some(0));
    assert_eq!(
        json_of(&good),
        serde_json::json!({"valid": true, "violations": []})
    );
}

#[test]
fn run_with_trace() {
    let out = datawords(&[
        "run",
        "--machine",
        "atomprop.json",
        "--trace",
        "--input",
        "#1,ε,↓",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let j = json_of(&out);
    assert_eq!(j["outcome"], "accepted");
    assert_eq!(j["output"], "bot,bot,#1");
    let trace = j["trace"].as_array().unwrap();
    assert_eq!(trace.last().unwrap()["reads"], serde_json::json!(["r"]));
    assert_eq!(
        trace.last().unwrap()["after"]["regs"],
        serde_json::json!(["bot"])
    );
}

#[test]
fn equivalence_and_fuzzing() {
    let eq = json_of(&datawords(&[
        "equiv",
        "--a",
        "mapreverse.rlf.json",
        "--b",
        "mapreverse.prime.json",
        "--max-len",
        "4",
    ]));
    assert_eq!(eq["verdict"], "equal");
    assert_eq!(eq["words_checked"], 75);

    let diff = json_of(&datawords(&[
        "equiv",
        "--a",
        "mapreverse.prime.json",
        "--b",
        "mapduplicate.prime.json",
        "--max-len",
        "3",
    ]));
    assert_eq!(diff["verdict"], "counterexample");
    assert_eq!(diff["counterexample"]["out1"], "#0");
    assert_eq!(diff["counterexample"]["out2"], "#0,#0");

    let sorts = datawords(&["equiv", "--a", "flipflop.json", "--b", "z2.json"]);
    assert_eq!(sorts.status.code(), Some(1));

    let fz = json_of(&datawords(&[
        "fuzz",
        "--a",
        "z3.json",
        "--b",
        "z3.prime.json",
        "--trials",
        "50",
        "--seed",
        "7",
    ]));
    assert_eq!(fz["verdict"], "equal");
    assert_eq!(fz["seed"], 7);
}

#[test]
fn out_flag_writes_file() {
    let path = scratch("composed.json");
    let p = path.to_str().unwrap();
    let out = datawords(&[
        "mealy-compose",
        "--a",
        "z3.json",
        "--b",
        "z3.json",
        "--out",
        p,
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json_of(&out)["written"], p);
    let composed: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(composed["kind"], "Mealy");

    let run = json_of(&datawords(&["run", "--machine", p, "--input", "0,1,2"]));
    let twice = json_of(&datawords(&[
        "eval-pipeline",
        "--pipeline",
        "z3.prime.json",
        "--input",
        "0,1,0",
    ]));
    assert_eq!(run["output"], twice["output"]);
}

#[test]
fn corpus_directory_override() {
    let dir = scratch("corpus");
    std::fs::create_dir_all(&dir).unwrap();
    let src = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus/z2.prime.json");
    std::fs::copy(src, dir.join("renamed.json")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_datawords"))
        .args([
            "eval-pipeline",
            "--pipeline",
            "renamed.json",
            "--input",
            "1,1",
        ])
        .env("DATAWORDS_CORPUS", &dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(json_of(&out)["output"].is_string());
}

#[test]
fn analysis_commands() {
    let support = json_of(&datawords(&[
        "support",
        "--machine",
        "firstletter.json",
        "--input",
        "#1,#2,#3",
    ]));
    assert_eq!(support["size"], 3);
    assert_eq!(support["single_use"], false);

    let graph = json_of(&datawords(&[
        "rungraph",
        "--machine",
        "identity.1w.json",
        "--input",
        "#1,|,#2",
    ]));
    assert_eq!(graph["width"], 1);
    assert_eq!(graph["replay"], "#1,sep,#2");

    let forest = json_of(&datawords(&[
        "forest",
        "--sst",
        "reverse.sst.json",
        "--input",
        "#1,#2",
    ]));
    assert_eq!(forest["dfs"], "#2,#1");
    assert_eq!(forest["leaves"], 2);

    let profile = json_of(&datawords(&[
        "profile",
        "--machine",
        "z2.json",
        "--input",
        "0,1",
    ]));
    assert!(!profile["rows"].as_array().unwrap().is_empty());

    let de = json_of(&datawords(&["deatomise", "--input", "#3,#1"]));
    assert_eq!(
        de,
        serde_json::json!({"injective": true, "output": "◇◇◇∘◇∘"})
    );

    let composed = datawords(&[
        "sst-compose",
        "--sst",
        "mapreverse.sst.json",
        "--pipeline",
        "mapreverse.prime.json",
    ]);
    assert_eq!(composed.status.code(), Some(0));
    assert!(json_of(&composed)["string_registers"].is_array());
}
