use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use medverify_core::report::parse_verdicts;
use medverify_core::verifier::Outcome;
use medverify_core::ReferenceModel;

const LEXICON: &str = r#"{"lexicon_version":"t1","groups":[
    {"group_id":"cardio","label":"c"},{"group_id":"derma","label":"d"}],
  "markers":[
    {"marker_id":"c1","group_id":"cardio","kind":"literal_token","pattern":"аритмія"},
    {"marker_id":"c2","group_id":"cardio","kind":"literal_token","pattern":"міокард"},
    {"marker_id":"d1","group_id":"derma","kind":"literal_token","pattern":"екзема"},
    {"marker_id":"d2","group_id":"derma","kind":"literal_token","pattern":"псоріаз"}]}"#;

const SPEC: &str = r#"{"community_id":"t","specialties":[
    {"specialty_id":"derma","marker_group_rates":{"derma":0.05},"claim_label":"дерматолог"},
    {"specialty_id":"cardio","marker_group_rates":{"cardio":0.05},"claim_label":"кардіолог"}],
  "users_per_specialty":12,"posts_per_user":12,"tokens_per_post":50,"noise_vocabulary_size":100,
  "labeled_per_specialty":8,"seed":11}"#;

fn medverify(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_medverify"))
        .args(args)
        .env_remove("SOURCE_DATE_EPOCH")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        std::fs::write(root.join("lexicon.json"), LEXICON).unwrap();
        std::fs::write(root.join("spec.json"), SPEC).unwrap();
        Self { _dir: dir, root }
    }

    fn p(&self, name: &str) -> String {
        self.root.join(name).to_string_lossy().into_owned()
    }

    fn write(&self, name: &str, contents: &str) -> String {
        std::fs::write(self.root.join(name), contents).unwrap();
        self.p(name)
    }

    fn gen(&self) {
        let out = medverify(&[
            "gen",
            "--spec",
            &self.p("spec.json"),
            "--lexicon",
            &self.p("lexicon.json"),
            "--out-dir",
            &self.p(""),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }

    fn train_with(&self, labels: &str) -> Output {
        medverify(&[
            "train",
            "--posts",
            &self.p("posts.jsonl"),
            "--profiles",
            &self.p("profiles.jsonl"),
            "--labels",
            labels,
            "--lexicon",
            &self.p("lexicon.json"),
            "--out",
            &self.p("model.json"),
        ])
    }

    fn verify_with(&self, lexicon: &str, format: &str) -> Output {
        medverify(&[
            "verify",
            "--posts",
            &self.p("posts.jsonl"),
            "--profiles",
            &self.p("profiles.jsonl"),
            "--model",
            &self.p("model.json"),
            "--lexicon",
            lexicon,
            "--aliases",
            &self.p("aliases.json"),
            "--format",
            format,
            "--out",
            &self.p(&format!("verdicts.{format}")),
        ])
    }

    fn trained(self) -> Self {
        self.gen();
        let out = self.train_with(&self.p("labels.jsonl"));
        assert!(out.status.success(), "{}", stderr(&out));
        self
    }
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(medverify(&["--help"]).status.code(), Some(0));
    assert_eq!(medverify(&["--version"]).status.code(), Some(0));
    let help = String::from_utf8(medverify(&["train", "--help"]).stdout).unwrap();
    assert!(help.contains("--radius-multiplier") && help.contains("--min-tokens"));
}

#[test]
fn bad_arguments_exit_one() {
    assert_eq!(medverify(&[]).status.code(), Some(1));
    assert_eq!(medverify(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(
        medverify(&["report", "--verdicts", "x", "--format", "xml"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn two_specialty_model_keeps_first_appearance_order() {
    let ws = Workspace::new().trained();
    let model = ReferenceModel::from_json(&std::fs::read(ws.p("model.json")).unwrap()).unwrap();
    assert_eq!(model.specialty_ids(), ["derma", "cardio"]);
    assert_eq!(model.matrix.n_specialties(), 2);
    assert_eq!(model.lexicon_version, "t1");
}

#[test]
fn unknown_labeled_user_is_named() {
    let ws = Workspace::new();
    ws.gen();
    let labels = ws.write("labels-bad.jsonl", "{\"user_id\":\"ghost-77\",\"specialty_id\":\"cardio\"}\n{\"user_id\":\"u00000\",\"specialty_id\":\"derma\"}\n");
    let out = ws.train_with(&labels);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("ghost-77"), "{}", stderr(&out));
}

#[test]
fn single_specialty_labels_fail() {
    let ws = Workspace::new();
    ws.gen();
    let labels = ws.write("labels-one.jsonl", "{\"user_id\":\"u00000\",\"specialty_id\":\"derma\"}\n{\"user_id\":\"u00001\",\"specialty_id\":\"derma\"}\n");
    assert_eq!(ws.train_with(&labels).status.code(), Some(1));
}

#[test]
fn missing_input_is_an_io_failure() {
    let ws = Workspace::new();
    ws.gen();
    assert_eq!(ws.train_with(&ws.p("nope.jsonl")).status.code(), Some(2));
    let out = medverify(&["report", "--verdicts", &ws.p("absent.csv")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn lexicon_version_mismatch_names_both() {
    let ws = Workspace::new().trained();
    let other = ws.write("lexicon2.json", &LEXICON.replace("\"t1\"", "\"t2\""));
    let out = ws.verify_with(&other, "csv");
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("t1") && err.contains("t2"), "{err}");
}

#[test]
fn honest_users_verify_and_thin_users_do_not() {
    let ws = Workspace::new().trained();
    // a profile-less poster with two posts
    let mut posts = std::fs::read_to_string(ws.p("posts.jsonl")).unwrap();
    posts.push_str("{\"post_id\":\"x1\",\"user_id\":\"lurker\",\"text\":\"екзема псоріаз\"}\n");
    posts.push_str("{\"post_id\":\"x2\",\"user_id\":\"lurker\",\"text\":\"аритмія\"}\n");
    ws.write("posts.jsonl", &posts);
    let out = ws.verify_with(&ws.p("lexicon.json"), "csv");
    assert!(out.status.success(), "{}", stderr(&out));
    let verdicts = parse_verdicts(&std::fs::read(ws.p("verdicts.csv")).unwrap()).unwrap();
    assert_eq!(verdicts.len(), 25);
    let lurker = verdicts.iter().find(|v| v.user_id == "lurker").unwrap();
    assert_eq!(lurker.outcome, Outcome::Unverified);
    assert_eq!(lurker.claimed_raw, None);
    let verified = verdicts
        .iter()
        .filter(|v| v.outcome == Outcome::Verified)
        .count();
    assert!(verified >= 20, "{verified} verified");
}

#[test]
fn report_formats_agree_and_match_verdicts() {
    let ws = Workspace::new().trained();
    assert!(ws
        .verify_with(&ws.p("lexicon.json"), "csv")
        .status
        .success());
    assert!(ws
        .verify_with(&ws.p("lexicon.json"), "json")
        .status
        .success());
    let verdicts = parse_verdicts(&std::fs::read(ws.p("verdicts.csv")).unwrap()).unwrap();
    assert_eq!(
        verdicts,
        parse_verdicts(&std::fs::read(ws.p("verdicts.json")).unwrap()).unwrap()
    );

    let json = medverify(&[
        "report",
        "--verdicts",
        &ws.p("verdicts.json"),
        "--format",
        "json",
        "--generated-at",
        "2024-01-01T00:00:00Z",
    ]);
    assert!(json.status.success());
    let report: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(report["total_users"], verdicts.len());
    assert_eq!(report["generated_at"], "2024-01-01T00:00:00Z");

    let text =
        String::from_utf8(medverify(&["report", "--verdicts", &ws.p("verdicts.csv")]).stdout)
            .unwrap();
    for o in Outcome::ALL {
        let n = verdicts.iter().filter(|v| v.outcome == o).count();
        assert_eq!(report["counts"][o.as_str()], n);
        assert!(
            text.lines().any(|l| l.starts_with(&format!("{o}  {n}  "))),
            "{text}"
        );
    }
}

#[test]
fn report_time_comes_from_source_date_epoch() {
    let ws = Workspace::new();
    let v = ws.write("v.csv", "user_id,outcome,claimed_raw,claimed_id,predicted_id,best_distance,margin,confidence,token_count,post_count\n");
    let out = Command::new(env!("CARGO_BIN_EXE_medverify"))
        .args(["report", "--verdicts", &v, "--format", "json"])
        .env("SOURCE_DATE_EPOCH", "86400")
        .output()
        .unwrap();
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["generated_at"], "1970-01-02T00:00:00Z");
}

#[test]
fn malformed_verdicts_exit_one() {
    let ws = Workspace::new();
    let bad = ws.write("bad.csv", "user,verdict\nu1,Verified\n");
    assert_eq!(
        medverify(&["report", "--verdicts", &bad]).status.code(),
        Some(1)
    );
    let bad_outcome = ws.write(
        "bad2.csv",
        "user_id,outcome,claimed_raw,claimed_id,predicted_id,best_distance,margin,confidence,token_count,post_count\nu1,Maybe,,,,,,,1,1\n",
    );
    assert_eq!(
        medverify(&["report", "--verdicts", &bad_outcome])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn validate_reports_corpus_and_lexicon_problems() {
    let ws = Workspace::new();
    let good = ws.write(
        "good.jsonl",
        "{\"post_id\":\"p1\",\"user_id\":\"u1\",\"text\":\"hi\"}\n",
    );
    let out = medverify(&[
        "validate",
        "--posts",
        &good,
        "--lexicon",
        &ws.p("lexicon.json"),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let bad = ws.write("bad.jsonl", "{\"post_id\":\"p1\",\"user_id\":\"u1\",\"text\":\"hi\"}\nnot json\n{\"post_id\":\"p1\",\"user_id\":\"u2\",\"text\":\"x\"}\n");
    let out = medverify(&["validate", "--posts", &bad]);
    assert_eq!(out.status.code(), Some(1));
    let listing = String::from_utf8(out.stdout).unwrap();
    assert_eq!(listing.lines().count(), 2, "{listing}");

    let lex = ws.write(
        "lex.json",
        r#"{"lexicon_version":"","groups":[],"markers":[]}"#,
    );
    assert_eq!(
        medverify(&["validate", "--lexicon", &lex]).status.code(),
        Some(1)
    );
}

#[test]
fn gen_rejects_invalid_spec() {
    let ws = Workspace::new();
    let spec = ws.write("bad-spec.json", &SPEC.replace("0.05", "1.5"));
    let out = medverify(&[
        "gen",
        "--spec",
        &spec,
        "--lexicon",
        &ws.p("lexicon.json"),
        "--out-dir",
        &ws.p("out"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!Path::new(&ws.p("out")).join("posts.jsonl").exists());
}
