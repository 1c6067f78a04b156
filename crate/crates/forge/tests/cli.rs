mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::{bin, plate_table_dir};

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .env_remove("REX_FORGE_CONFIG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn copy_plate_table(dst: &Path) {
    let src = plate_table_dir();
    for sub in ["scenes", "regions"] {
        fs::create_dir_all(dst.join(sub)).unwrap();
        fs::copy(src.join(sub).join("img.json"), dst.join(sub).join("img.json")).unwrap();
    }
    fs::copy(src.join("programs.jsonl"), dst.join("programs.jsonl")).unwrap();
}

fn compile_args(programs: &str) -> Vec<&str> {
    vec![
        "compile",
        "--scenes",
        "scenes",
        "--regions",
        "regions",
        "--programs",
        programs,
    ]
}

#[test]
fn compile_plate_table_matches_golden() {
    let tmp = tempfile::tempdir().unwrap();
    copy_plate_table(tmp.path());
    let o = run(&compile_args("programs.jsonl"), tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        stdout(&o),
        fs::read_to_string(plate_table_dir().join("golden.jsonl")).unwrap()
    );
    assert!(stderr(&o).contains("compiled: 1"));
}

#[test]
fn empty_programs_give_empty_output() {
    let tmp = tempfile::tempdir().unwrap();
    copy_plate_table(tmp.path());
    fs::write(tmp.path().join("empty.jsonl"), "").unwrap();
    let o = run(&compile_args("empty.jsonl"), tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).is_empty());
    assert!(stderr(&o).contains("questions: 0"));
}

#[test]
fn cyclic_program_is_skipped_and_counted() {
    let tmp = tempfile::tempdir().unwrap();
    copy_plate_table(tmp.path());
    let plate_table = fs::read_to_string(tmp.path().join("programs.jsonl")).unwrap();
    let cyclic = r#"{"question_id":"loop","image_id":"img","root":"c","nodes":{"a":{"op":"exist","deps":["b"]},"b":{"op":"filter","attribute":"red","deps":["a"]},"c":{"op":"and","deps":["a","a"]}}}"#;
    fs::write(tmp.path().join("mixed.jsonl"), format!("{plate_table}{cyclic}\n")).unwrap();
    let o = run(&compile_args("mixed.jsonl"), tmp.path());
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 1);
    let err = stderr(&o);
    assert!(err.contains("skipped: 1"), "{err}");
    assert!(err.contains("CycleError: 1"), "{err}");
}

#[test]
fn missing_input_exits_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    copy_plate_table(tmp.path());
    let o = run(&compile_args("nowhere.jsonl"), tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere.jsonl"), "{}", stderr(&o));
}

#[test]
fn check_grads_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["check-grads", "--seed", "11", "--instances", "20"];
    let (a, b) = (run(&args, tmp.path()), run(&args, tmp.path()));
    assert!(a.status.success(), "{}", stdout(&a));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).trim_end().ends_with(": ok"));
}

#[test]
fn eval_against_itself_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    copy_plate_table(tmp.path());
    let golden = plate_table_dir().join("golden.jsonl");
    let golden = golden.to_str().unwrap();
    let o = run(
        &["eval", golden, golden, "--regions", "regions", "--out", "report.json"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    for metric in ["accuracy", "grounding", "bleu-4", "rouge-l"] {
        let line = table.lines().find(|l| l.starts_with(metric)).unwrap();
        assert!(line.ends_with("1.0000"), "{line}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["accuracy"], 1.0);
    assert_eq!(report["grounding"], 1.0);
    // "on" appears in the question, so it is leaked and not eligible
    assert_eq!(report["attribute_recall"]["relation"]["leaked"], 1);
    assert!(report["attribute_recall"]["relation"]["recall"].is_null());
}

#[test]
fn stats_counts_operations_per_question() {
    let tmp = tempfile::tempdir().unwrap();
    let golden = plate_table_dir().join("golden.jsonl");
    let o = run(&["stats", golden.to_str().unwrap()], tmp.path());
    assert!(o.status.success());
    let csv = stdout(&o);
    assert!(csv.starts_with("section,name,count,percent\n"));
    assert!(csv.contains("operation,select,1,100.0000"));
    assert!(csv.contains("operation,query,0,0.0000"));
    assert!(csv.contains("category,plate,1,50.0000"));
    assert!(csv.contains("category,table,1,50.0000"));
}

#[test]
fn full_fraction_sample_is_identity() {
    let tmp = tempfile::tempdir().unwrap();
    let lines: String = (0..7)
        .map(|i| {
            format!(
                "{{\"question_id\":\"q{i}\",\"reasoning_type\":\"t{}\",\"root\":\"n0\",\"nodes\":{{}}}}\n",
                i % 3
            )
        })
        .collect();
    fs::write(tmp.path().join("p.jsonl"), &lines).unwrap();
    let o = run(&["sample", "--programs", "p.jsonl", "--fraction", "1.0"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), lines);
    let bad = run(&["sample", "--programs", "p.jsonl", "--fraction", "0"], tmp.path());
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    copy_plate_table(&data);
    // Paths in the file are relative to the file; min_iou 1.0 drops every region token.
    fs::write(
        data.join("run.toml"),
        "scenes = \"scenes\"\nregions = \"regions\"\nprograms = \"programs.jsonl\"\nmin_iou = 1.0\n",
    )
    .unwrap();

    let from_file = run(&["--config", "data/run.toml", "compile"], tmp.path());
    assert!(from_file.status.success(), "{}", stderr(&from_file));
    assert!(!stdout(&from_file).contains('#'));

    let overridden = run(
        &["--config", "data/run.toml", "compile", "--min-iou", "0.5"],
        tmp.path(),
    );
    assert_eq!(
        stdout(&overridden),
        fs::read_to_string(plate_table_dir().join("golden.jsonl")).unwrap()
    );

    let via_env = Command::new(bin())
        .arg("compile")
        .current_dir(tmp.path())
        .env("REX_FORGE_CONFIG", data.join("run.toml"))
        .output()
        .unwrap();
    assert_eq!(via_env.stdout, from_file.stdout);
}
