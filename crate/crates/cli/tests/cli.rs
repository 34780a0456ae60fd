use std::io::Write;
use std::process::{Command, Stdio};

const SCHEMA: &str = r#"{"db_id":"pets","tables":[
  {"name":"people","columns":["id","name","email","age"]},
  {"name":"pets","columns":["id","owner_id","species","weight"]}
]}"#;

const CAR_1: &str = r#"{"db_id":"car_1","tables":[
  {"name":"car_makers","columns":["id","maker","fullname","country"]},
  {"name":"model_list","columns":["modelid","maker","model"]}
]}"#;

const VOCAB: &str = "#eos 0\n0\t\n1\t\\u2581select\n2\t\\u2581id\n3\t\\u2581from\n4\t\\u2581people\n5\t\\u2581zq\n";

fn write_temp(dir: &tempfile::TempDir, name: &str, content: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, content).unwrap();
    path
}

fn sqlward() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sqlward"))
}

fn run_with_stdin(cmd: &mut Command, stdin: &str) -> (String, String, i32) {
    let mut child = cmd
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .as_mut()
        .unwrap()
        .write_all(stdin.as_bytes())
        .unwrap();
    let out = child.wait_with_output().unwrap();
    (
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
        out.status.code().unwrap(),
    )
}

#[test]
fn validate_verdicts_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let schema = write_temp(&dir, "schema.json", SCHEMA);

    let (out, _, code) = run_with_stdin(
        sqlward()
            .args(["validate", "--schema"])
            .arg(&schema)
            .args(["--mode", "parse-guards"]),
        "select id from people\nselect id from people where age > 2\n",
    );
    assert_eq!(code, 0);
    assert_eq!(out, "accept\naccept\n");

    let (out, _, code) = run_with_stdin(
        sqlward()
            .args(["validate", "--schema"])
            .arg(&schema)
            .args(["--mode", "parse-guards"]),
        "select species from people\n",
    );
    assert_eq!(code, 1);
    assert!(out.starts_with("reject guard-violation "), "{out}");
}

#[test]
fn validate_empty_input_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let schema = write_temp(&dir, "schema.json", SCHEMA);
    let (out, _, code) = run_with_stdin(
        sqlward().args(["validate", "--schema"]).arg(&schema),
        "",
    );
    assert_eq!(code, 0);
    assert!(out.is_empty());
}

#[test]
fn validate_guard_split_on_ambiguous_bare_columns() {
    // maker/model over car_1: fine without guards, rejected with them
    let dir = tempfile::tempdir().unwrap();
    let schema = write_temp(&dir, "schema.json", CAR_1);
    let line = "select maker, model from car_makers\n";

    let (out, _, code) = run_with_stdin(
        sqlward()
            .args(["validate", "--schema"])
            .arg(&schema)
            .args(["--mode", "parse"]),
        line,
    );
    assert_eq!((out.as_str(), code), ("accept\n", 0));

    let (out, _, code) = run_with_stdin(
        sqlward()
            .args(["validate", "--schema"])
            .arg(&schema)
            .args(["--mode", "parse-guards"]),
        line,
    );
    assert_eq!(code, 1);
    assert!(out.starts_with("reject guard-violation "), "{out}");
}

#[test]
fn validate_rejects_off_mode_and_missing_schema() {
    let dir = tempfile::tempdir().unwrap();
    let schema = write_temp(&dir, "schema.json", SCHEMA);
    let (_, err, code) = run_with_stdin(
        sqlward()
            .args(["validate", "--schema"])
            .arg(&schema)
            .args(["--mode", "off"]),
        "",
    );
    assert_eq!(code, 2);
    assert!(err.contains("off"));

    let (_, err, code) = run_with_stdin(
        sqlward().args(["validate", "--schema", "/nonexistent/schema.json"]),
        "",
    );
    assert_eq!(code, 2);
    assert!(err.contains("cannot read"));
}

#[test]
fn decode_prints_best_hypothesis() {
    let dir = tempfile::tempdir().unwrap();
    let schema = write_temp(&dir, "schema.json", SCHEMA);
    let vocab = write_temp(&dir, "vocab.txt", VOCAB);
    let model = write_temp(
        &dir,
        "model.json",
        r#"{"vocab_size":6,"seed":7,"scores":{
            "":[0.01,0.9,0.02,0.02,0.02,0.03],
            "1":[0.02,0.01,0.9,0.02,0.02,0.03],
            "1 2":[0.02,0.01,0.02,0.9,0.02,0.03],
            "1 2 3":[0.02,0.01,0.02,0.02,0.9,0.03],
            "1 2 3 4":[0.9,0.02,0.02,0.02,0.02,0.02]}}"#,
    );
    let (out, _, code) = run_with_stdin(
        sqlward()
            .args(["decode", "--schema"])
            .arg(&schema)
            .arg("--vocab")
            .arg(&vocab)
            .arg("--model")
            .arg(&model)
            .args(["--mode", "parse-guards", "--beam", "2", "--top-k", "4"]),
        "",
    );
    assert_eq!(code, 0, "{out}");
    assert!(out.starts_with("select id from people\t"), "{out}");
}

#[test]
fn decode_dead_end_prints_sentinel() {
    let dir = tempfile::tempdir().unwrap();
    let schema = write_temp(&dir, "schema.json", SCHEMA);
    let vocab = write_temp(&dir, "vocab.txt", VOCAB);
    // the model only ever wants the junk token, so constrained search starves
    let model = write_temp(
        &dir,
        "model.json",
        r#"{"vocab_size":6,"seed":7,"scores":{
            "":[0.01,0.01,0.01,0.01,0.01,0.95],
            "5":[0.95,0.01,0.01,0.01,0.01,0.01]}}"#,
    );
    let (out, _, code) = run_with_stdin(
        sqlward()
            .args(["decode", "--schema"])
            .arg(&schema)
            .arg("--vocab")
            .arg(&vocab)
            .arg("--model")
            .arg(&model)
            .args(["--mode", "parse", "--beam", "1", "--top-k", "1", "--max-length", "4"]),
        "",
    );
    assert_eq!(code, 1);
    assert_eq!(out, "NO-VALID-HYPOTHESIS\n");
}

#[test]
fn experiment_csv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("report.csv");
    for _ in 0..2 {
        let (_, err, code) = run_with_stdin(
            sqlward()
                .args(["experiment", "--seed", "3", "--instances", "4", "--out"])
                .arg(&out_path),
            "",
        );
        assert_eq!(code, 0, "{err}");
    }
    let csv = std::fs::read_to_string(&out_path).unwrap();
    assert!(csv.starts_with(
        "mode,beam,k,timing,valid_rate,oracle_match_rate,unusable_rate,mean_feed_latency_s\n"
    ));

    let (stdout, _, code) = run_with_stdin(
        sqlward().args(["experiment", "--seed", "3", "--instances", "4"]),
        "",
    );
    assert_eq!(code, 0);
    assert_eq!(stdout, csv);
}

#[test]
fn serve_speaks_the_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let schema = write_temp(&dir, "schema.json", SCHEMA);
    let vocab = write_temp(&dir, "vocab.txt", VOCAB);
    let input = concat!(
        r#"{"op":"init","session":"s","mode":"parse-guards"}"#, "\n",
        r#"{"op":"feed","session":"s","token_id":1}"#, "\n",
        r#"{"op":"feed","session":"s","parent":"h1","token_id":5}"#, "\n",
        r#"{"op":"drop","session":"s"}"#, "\n",
    );
    let (out, _, code) = run_with_stdin(
        sqlward()
            .args(["serve", "--schema"])
            .arg(&schema)
            .arg("--vocab")
            .arg(&vocab),
        input,
    );
    assert_eq!(code, 0);
    let lines: Vec<serde_json::Value> = out
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines[0]["ok"], true);
    assert_eq!(lines[1]["result"], "accepted");
    assert_eq!(lines[2]["result"], "rejected");
    assert_eq!(lines[3]["ok"], true);
}
