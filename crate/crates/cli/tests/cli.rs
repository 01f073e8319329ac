use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn vgrow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vgrow")).args(args).output().expect("run vgrow")
}

fn ok(args: &[&str]) -> String {
    let out = vgrow(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/corpus")
}

fn trained(dir: &Path, k: usize) -> String {
    let table = dir.join("t.tbl");
    let report = ok(&["train", "--corpus", corpus().to_str().unwrap(), "--k", &k.to_string(), "--out", table.to_str().unwrap()]);
    let json: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(json["accepted"].as_array().unwrap().len(), 12);
    assert_eq!(json["rejected"].as_array().unwrap().len(), 2);
    table.to_str().unwrap().to_string()
}

#[test]
fn train_generate_check() {
    let dir = tempfile::tempdir().unwrap();
    let table = trained(dir.path(), 2);
    let out = dir.path().join("out");
    ok(&["generate", "--table", &table, "--seed", "3", "--count", "4", "--min-tokens", "200", "--k", "2", "--out-dir", out.to_str().unwrap()]);
    let manifest = fs::read_to_string(out.join("manifest.tsv")).unwrap();
    let rows: Vec<Vec<&str>> = manifest.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][0], "3");
    for row in &rows {
        assert!(row[1].parse::<usize>().unwrap() >= 200);
        assert_eq!(row[2], "valid");
        let file = out.join(format!("design_{}.v", row[0]));
        assert!(ok(&["check", "--file", file.to_str().unwrap()]).starts_with("ok:"));
    }
}

#[test]
fn generate_refuses_wrong_k() {
    let dir = tempfile::tempdir().unwrap();
    let table = trained(dir.path(), 1);
    let out = vgrow(&["generate", "--table", &table, "--k", "3", "--out-dir", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn check_reports_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.v");
    fs::write(&bad, "module m; always @(*) q = 1; endmodule\n").unwrap();
    let out = vgrow(&["check", "--file", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("error:"));
}

#[test]
fn skeleton_has_placeholders() {
    let dir = tempfile::tempdir().unwrap();
    let table = trained(dir.path(), 1);
    let text = ok(&["skeleton", "--table", &table, "--seed", "1", "--tau", "0.8"]);
    assert!(text.contains("module"));
}

#[test]
fn diversity_over_corpus() {
    let json: serde_json::Value =
        serde_json::from_str(&ok(&["diversity", "--dir", corpus().to_str().unwrap(), "--n", "2", "--n", "4"])).unwrap();
    assert_eq!(json["population"], 14);
    assert!(json["unique_productions"].as_u64().unwrap() > 0);
    assert!(json["unique_ngrams"]["4"].as_u64().unwrap() >= json["unique_ngrams"]["2"].as_u64().unwrap());
}

#[cfg(unix)]
#[test]
fn campaign_prints_summary() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path(), 1);
    let cfg = dir.path().join("c.cfg");
    fs::write(
        &cfg,
        "table = t.tbl\nk = 1\ncount = 3\nmin_tokens = 150\nseed = 1\ntool = sh -c 'exit 3' {file}\ntimeout = 5\nout_dir = run\n",
    )
    .unwrap();
    let table = ok(&["campaign", "--config", cfg.to_str().unwrap()]);
    let all = table.lines().last().unwrap().split_whitespace().collect::<Vec<_>>();
    assert_eq!(all, ["all", "0", "3", "0", "0"]);
    assert!(dir.path().join("run/manifest.tsv").exists());
}
