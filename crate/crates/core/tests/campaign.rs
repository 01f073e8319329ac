#![cfg(unix)]

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use vgrow::campaign::{read_manifest, run_campaign, summarize, CampaignConfig, Class, ConfigError, CampaignError};
use vgrow::par::Exec;
use vgrow::trainer::{load_corpus, train};

fn write_table(dir: &Path, k: usize) {
    let corpus = load_corpus(&Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus")).unwrap();
    let (table, _) = train(&corpus, k, true, Exec::default()).unwrap();
    fs::write(dir.join("t.tbl"), table.serialize()).unwrap();
}

fn config(dir: &Path, tool: &str, count: usize, timeout: f64, workers: usize) -> CampaignConfig {
    let text = format!(
        "table = t.tbl\nk = 1\ncount = {count}\nmin_tokens = 150\nseed = 11\n\
         tool = {tool}\ntimeout = {timeout}\nout_dir = out\nworkers = {workers}\n"
    );
    let path = dir.join("campaign.cfg");
    fs::write(&path, text).unwrap();
    CampaignConfig::load(&path).unwrap()
}

fn manifest_classes(cfg: &CampaignConfig) -> Vec<Class> {
    let text = fs::read_to_string(cfg.out_dir.join("manifest.tsv")).unwrap();
    assert!(text.ends_with('\n'));
    let mut rows = read_manifest(&text).unwrap();
    rows.sort_by_key(|o| o.id);
    assert_eq!(rows.iter().map(|o| o.id).collect::<Vec<_>>(), (0..cfg.count).collect::<Vec<_>>());
    rows.into_iter().map(|o| o.class).collect()
}

#[test]
fn noop_tool_is_all_clean() {
    let dir = tempfile::tempdir().unwrap();
    write_table(dir.path(), 1);
    let cfg = config(dir.path(), "true {file}", 5, 5.0, 2);
    let r = run_campaign(&cfg).unwrap();
    assert_eq!(summarize(&r.outcomes).total.clean, 5);
    assert_eq!(manifest_classes(&cfg), vec![Class::Clean; 5]);
}

#[test]
fn aborting_tool_is_all_crash() {
    let dir = tempfile::tempdir().unwrap();
    write_table(dir.path(), 1);
    let cfg = config(dir.path(), "sh -c 'kill -ABRT $$' {file}", 4, 5.0, 2);
    let r = run_campaign(&cfg).unwrap();
    assert!(r.outcomes.iter().all(|o| o.class == Class::Crash && o.detail == "signal 6"));
    assert_eq!(manifest_classes(&cfg), vec![Class::Crash; 4]);
}

#[test]
fn assertion_text_counts_as_crash() {
    let dir = tempfile::tempdir().unwrap();
    write_table(dir.path(), 1);
    let cfg = config(dir.path(), "sh -c 'echo \"Assertion failed\" >&2; exit 1' {file}", 2, 5.0, 1);
    let r = run_campaign(&cfg).unwrap();
    assert_eq!(summarize(&r.outcomes).total.crash, 2);
}

#[test]
fn hanging_tool_is_all_timeout() {
    let dir = tempfile::tempdir().unwrap();
    write_table(dir.path(), 1);
    let cfg = config(dir.path(), "sh -c 'sleep 30' {file}", 4, 0.3, 4);
    let start = Instant::now();
    let r = run_campaign(&cfg).unwrap();
    assert!(start.elapsed() < Duration::from_secs(20));
    assert_eq!(summarize(&r.outcomes).total.timeout, 4);
    assert_eq!(manifest_classes(&cfg), vec![Class::Timeout; 4]);
}

#[test]
fn rejecting_tool_keeps_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    write_table(dir.path(), 1);
    let cfg = config(dir.path(), "sh -c 'exit 7' {file}", 2, 5.0, 1);
    let r = run_campaign(&cfg).unwrap();
    assert!(r.outcomes.iter().all(|o| o.class == Class::Reject && o.detail == "exit 7"));
}

#[test]
fn designs_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        write_table(d.path(), 1);
        run_campaign(&config(d.path(), "true {file}", 3, 5.0, 3)).unwrap();
    }
    for id in 0..3 {
        let name = format!("out/designs/design_{id:05}.v");
        let x = fs::read(a.path().join(&name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, fs::read(b.path().join(&name)).unwrap());
    }
}

#[test]
fn tool_sees_the_design_file() {
    let dir = tempfile::tempdir().unwrap();
    write_table(dir.path(), 1);
    let cfg = config(dir.path(), "grep -q endmodule {file}", 3, 5.0, 1);
    let r = run_campaign(&cfg).unwrap();
    assert_eq!(summarize(&r.outcomes).total.clean, 3);
}

#[test]
fn configuration_errors_abort_before_generation() {
    let dir = tempfile::tempdir().unwrap();
    write_table(dir.path(), 1);
    let cfg = config(dir.path(), "no-such-tool-xyz {file}", 2, 1.0, 1);
    assert!(matches!(run_campaign(&cfg), Err(CampaignError::Config(ConfigError::ToolNotFound(_)))));
    let mut cfg = config(dir.path(), "true {file}", 2, 1.0, 1);
    cfg.k = 3;
    assert!(matches!(run_campaign(&cfg), Err(CampaignError::Config(ConfigError::ContextMismatch { table: 1, config: 3 }))));
    assert!(!cfg.out_dir.join("designs").exists());
}
