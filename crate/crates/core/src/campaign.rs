//! Fuzzing campaigns: grow a population, feed each design to an external
//! tool and classify what happens.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::inject::{grow_design, InjectionConfig};
use crate::skeleton::next_seed;
use crate::table::ProbabilityTable;
use crate::trainer::gate_probability;

pub const MANIFEST_NAME: &str = "manifest.tsv";
const DEFAULT_CRASH_PATTERN: &str = "assertion";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("missing key `{0}`")]
    Missing(&'static str),
    #[error("bad value for `{key}`: {reason}")]
    Value { key: &'static str, reason: String },
    #[error("tool command must contain a {{file}} placeholder")]
    NoPlaceholder,
    #[error("tool `{0}` not found")]
    ToolNotFound(String),
    #[error("table {path}: {reason}")]
    Table { path: PathBuf, reason: String },
    #[error("table has context length {table} but the config asks for {config}")]
    ContextMismatch { table: usize, config: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub table: PathBuf,
    pub k: usize,
    pub tau: f64,
    pub count: usize,
    pub min_tokens: usize,
    pub seed: u64,
    /// Shell command; `{file}` is replaced by the quoted design path.
    pub tool: String,
    pub timeout: Duration,
    pub out_dir: PathBuf,
    pub workers: usize,
    /// Case-insensitive substring of tool output that marks a crash.
    pub crash_pattern: Option<String>,
}

const KEYS: [&str; 11] = [
    "table", "k", "tau", "count", "min_tokens", "seed", "tool", "timeout", "out_dir", "workers",
    "crash_pattern",
];

fn parse_value<T: FromStr>(key: &'static str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    raw.parse().map_err(|e: T::Err| ConfigError::Value { key, reason: e.to_string() })
}

impl CampaignConfig {
    /// Parses a flat `key = value` document. `#` starts a comment line.
    pub fn parse(text: &str) -> Result<CampaignConfig, ConfigError> {
        let mut raw: BTreeMap<&'static str, String> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let key = key.trim();
            let known = KEYS
                .iter()
                .find(|k| **k == key)
                .ok_or_else(|| ConfigError::UnknownKey { line: i + 1, key: key.to_string() })?;
            if raw.insert(known, value.trim().to_string()).is_some() {
                return Err(ConfigError::Duplicate { line: i + 1, key: key.to_string() });
            }
        }
        let req = |key: &'static str| raw.get(key).map(String::as_str).ok_or(ConfigError::Missing(key));

        let count: usize = parse_value("count", req("count")?)?;
        if count == 0 {
            return Err(ConfigError::Value { key: "count", reason: "must be at least 1".into() });
        }
        let timeout: f64 = parse_value("timeout", req("timeout")?)?;
        if !(timeout > 0.0 && timeout.is_finite()) {
            return Err(ConfigError::Value { key: "timeout", reason: "must be positive".into() });
        }
        let tau: f64 = match raw.get("tau") {
            Some(v) => parse_value("tau", v)?,
            None => 1.0,
        };
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(ConfigError::Value { key: "tau", reason: "must be positive".into() });
        }
        let workers: usize = match raw.get("workers") {
            Some(v) => parse_value("workers", v)?,
            None => 1,
        };
        if workers == 0 {
            return Err(ConfigError::Value { key: "workers", reason: "must be at least 1".into() });
        }
        let tool = req("tool")?.to_string();
        if !tool.contains("{file}") {
            return Err(ConfigError::NoPlaceholder);
        }
        Ok(CampaignConfig {
            table: PathBuf::from(req("table")?),
            k: parse_value("k", req("k")?)?,
            tau,
            count,
            min_tokens: parse_value("min_tokens", req("min_tokens")?)?,
            seed: parse_value("seed", req("seed")?)?,
            tool,
            timeout: Duration::from_secs_f64(timeout),
            out_dir: PathBuf::from(req("out_dir")?),
            workers,
            crash_pattern: match raw.get("crash_pattern") {
                Some(p) if p.is_empty() => None,
                Some(p) => Some(p.clone()),
                None => Some(DEFAULT_CRASH_PATTERN.to_string()),
            },
        })
    }

    /// Reads a config file. Relative paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<CampaignConfig, ConfigError> {
        let mut cfg = CampaignConfig::parse(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.table.is_relative() {
            cfg.table = base.join(&cfg.table);
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Clean,
    Reject,
    Crash,
    Timeout,
}

impl Class {
    pub const ALL: [Class; 4] = [Class::Clean, Class::Reject, Class::Crash, Class::Timeout];

    pub fn as_str(self) -> &'static str {
        match self {
            Class::Clean => "clean",
            Class::Reject => "reject",
            Class::Crash => "crash",
            Class::Timeout => "timeout",
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Class {
    type Err = String;
    fn from_str(s: &str) -> Result<Class, String> {
        Class::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown class `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Outcome {
    pub id: usize,
    pub k: usize,
    pub seed: u64,
    pub class: Class,
    pub detail: String,
    pub millis: u64,
}

impl Outcome {
    /// One manifest record, tab separated, newline terminated.
    pub fn to_line(&self) -> String {
        let detail: String =
            self.detail.chars().map(|c| if c.is_control() { ' ' } else { c }).collect();
        format!("{}\t{}\t{}\t{}\t{}\t{}\n", self.id, self.k, self.seed, self.class, detail, self.millis)
    }

    pub fn from_line(line: &str) -> Result<Outcome, String> {
        let f: Vec<&str> = line.split('\t').collect();
        let [id, k, seed, class, detail, millis] = f[..] else {
            return Err(format!("expected 6 fields, found {}", f.len()));
        };
        let num = |s: &str| s.parse::<u64>().map_err(|e| format!("`{s}`: {e}"));
        Ok(Outcome {
            id: num(id)? as usize,
            k: num(k)? as usize,
            seed: num(seed)?,
            class: class.parse()?,
            detail: detail.to_string(),
            millis: num(millis)?,
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("manifest line {line}: {reason}")]
pub struct ManifestError {
    pub line: usize,
    pub reason: String,
}

/// Parses a manifest. A trailing line without a newline is an interrupted
/// append and is dropped.
pub fn read_manifest(text: &str) -> Result<Vec<Outcome>, ManifestError> {
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    complete
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| Outcome::from_line(l).map_err(|reason| ManifestError { line: i + 1, reason }))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub clean: usize,
    pub reject: usize,
    pub crash: usize,
    pub timeout: usize,
}

impl ClassCounts {
    pub fn bump(&mut self, class: Class) {
        match class {
            Class::Clean => self.clean += 1,
            Class::Reject => self.reject += 1,
            Class::Crash => self.crash += 1,
            Class::Timeout => self.timeout += 1,
        }
    }

    pub fn get(&self, class: Class) -> usize {
        match class {
            Class::Clean => self.clean,
            Class::Reject => self.reject,
            Class::Crash => self.crash,
            Class::Timeout => self.timeout,
        }
    }

    pub fn total(&self) -> usize {
        self.clean + self.reject + self.crash + self.timeout
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub per_k: BTreeMap<usize, ClassCounts>,
    pub total: ClassCounts,
}

pub fn summarize(outcomes: &[Outcome]) -> Summary {
    let mut s = Summary::default();
    for o in outcomes {
        s.per_k.entry(o.k).or_default().bump(o.class);
        s.total.bump(o.class);
    }
    s
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>4} {:>7} {:>7} {:>7} {:>7}", "K", "clean", "reject", "crash", "timeout")?;
        let row = |f: &mut fmt::Formatter<'_>, label: String, c: &ClassCounts| {
            writeln!(f, "{label:>4} {:>7} {:>7} {:>7} {:>7}", c.clean, c.reject, c.crash, c.timeout)
        };
        for (k, c) in &self.per_k {
            row(f, k.to_string(), c)?;
        }
        row(f, "all".into(), &self.total)
    }
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no design could be grown after {0} consecutive seeds")]
    Generation(u32),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A design written to disk and waiting for the tool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Planned {
    pub id: usize,
    pub seed: u64,
    pub path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct CampaignResult {
    /// Ordered by design id.
    pub outcomes: Vec<Outcome>,
    pub manifest: PathBuf,
}

const MAX_FAILED_SEEDS: u32 = 1_000;

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

fn resolve_tool(template: &str) -> Result<(), ConfigError> {
    let first = template.split_whitespace().next().unwrap_or("");
    let found = if first.contains('/') {
        Path::new(first).is_file()
    } else {
        std::env::var_os("PATH")
            .map(|p| std::env::split_paths(&p).any(|dir| dir.join(first).is_file()))
            .unwrap_or(false)
    };
    if found {
        Ok(())
    } else {
        Err(ConfigError::ToolNotFound(first.to_string()))
    }
}

/// Loads the table and validates everything that could abort the campaign.
pub fn prepare(cfg: &CampaignConfig) -> Result<(ProbabilityTable, InjectionConfig), ConfigError> {
    resolve_tool(&cfg.tool)?;
    let text = fs::read_to_string(&cfg.table)
        .map_err(|e| ConfigError::Table { path: cfg.table.clone(), reason: e.to_string() })?;
    let table = ProbabilityTable::deserialize(&text)
        .map_err(|e| ConfigError::Table { path: cfg.table.clone(), reason: e.to_string() })?;
    if table.k() != cfg.k {
        return Err(ConfigError::ContextMismatch { table: table.k(), config: cfg.k });
    }
    let mut inj = InjectionConfig { budget: cfg.min_tokens, ..InjectionConfig::default() };
    inj.gate_probability = gate_probability(&table);
    inj.gen.tau = cfg.tau;
    Ok((table, inj))
}

/// Grows `count` designs along the seed chain and writes them to `dir`.
/// A seed whose growth fails is skipped, so ids stay dense.
pub fn write_population(
    table: &ProbabilityTable,
    inj: &InjectionConfig,
    first_seed: u64,
    count: usize,
    dir: &Path,
) -> Result<Vec<Planned>, CampaignError> {
    fs::create_dir_all(dir)?;
    let mut planned = Vec::with_capacity(count);
    let mut seed = first_seed;
    let mut failed = 0;
    while planned.len() < count {
        match grow_design(table, seed, inj) {
            Ok(g) => {
                let id = planned.len();
                let path = dir.join(format!("design_{id:05}.v"));
                fs::write(&path, g.text())?;
                planned.push(Planned { id, seed, path });
                failed = 0;
            }
            Err(_) => {
                failed += 1;
                if failed >= MAX_FAILED_SEEDS {
                    return Err(CampaignError::Generation(failed));
                }
            }
        }
        seed = next_seed(seed);
    }
    Ok(planned)
}

#[cfg(unix)]
fn isolate(cmd: &mut Command) {
    use std::os::unix::process::CommandExt;
    cmd.process_group(0);
}

#[cfg(not(unix))]
fn isolate(_: &mut Command) {}

#[cfg(unix)]
fn kill_tree(child: &mut std::process::Child) {
    // The child leads its own process group; take down everything in it.
    let pgid = child.id() as libc::pid_t;
    unsafe {
        libc::kill(-pgid, libc::SIGKILL);
    }
    let _ = child.kill();
}

#[cfg(not(unix))]
fn kill_tree(child: &mut std::process::Child) {
    let _ = child.kill();
}

#[cfg(unix)]
fn signal_of(status: &ExitStatus) -> Option<i32> {
    use std::os::unix::process::ExitStatusExt;
    status.signal()
}

#[cfg(not(unix))]
fn signal_of(_: &ExitStatus) -> Option<i32> {
    None
}

fn classify(status: &ExitStatus, output: &str, pattern: Option<&str>) -> (Class, String) {
    if let Some(sig) = signal_of(status) {
        return (Class::Crash, format!("signal {sig}"));
    }
    let code = status.code().unwrap_or(-1);
    // Tools run under `sh -c`, which reports a child killed by signal n as 128 + n.
    if cfg!(unix) && (129..=128 + 64).contains(&code) {
        return (Class::Crash, format!("signal {}", code - 128));
    }
    let hit = pattern.is_some_and(|p| output.to_lowercase().contains(&p.to_lowercase()));
    match (hit, code) {
        (true, c) => (Class::Crash, format!("exit {c} pattern")),
        (false, 0) => (Class::Clean, "exit 0".into()),
        (false, c) => (Class::Reject, format!("exit {c}")),
    }
}

/// Runs the tool on one design. Output goes to `log`.
fn run_one(cfg: &CampaignConfig, design: &Path, log: &Path) -> (Class, String, u64) {
    let line = cfg.tool.replace("{file}", &shell_quote(&design.to_string_lossy()));
    let start = Instant::now();
    let elapsed = |s: Instant| s.elapsed().as_millis() as u64;
    let spawned = File::create(log).and_then(|out| {
        let err = out.try_clone()?;
        let mut cmd = Command::new("sh");
        cmd.arg("-c").arg(&line).stdin(Stdio::null()).stdout(out).stderr(err);
        isolate(&mut cmd);
        cmd.spawn()
    });
    let mut child = match spawned {
        Ok(c) => c,
        Err(e) => return (Class::Reject, format!("spawn failed: {e}"), elapsed(start)),
    };
    let status = match child.wait_timeout(cfg.timeout) {
        Ok(Some(s)) => s,
        Ok(None) => {
            kill_tree(&mut child);
            let _ = child.wait();
            let detail = format!("killed after {:.3}s", cfg.timeout.as_secs_f64());
            return (Class::Timeout, detail, elapsed(start));
        }
        Err(e) => {
            kill_tree(&mut child);
            let _ = child.wait();
            return (Class::Reject, format!("wait failed: {e}"), elapsed(start));
        }
    };
    let millis = elapsed(start);
    let output = fs::read(log).map(|b| String::from_utf8_lossy(&b).into_owned()).unwrap_or_default();
    let (class, detail) = classify(&status, &output, cfg.crash_pattern.as_deref());
    (class, detail, millis)
}

/// Appends records to the manifest one whole line at a time.
struct ManifestWriter(Mutex<File>);

impl ManifestWriter {
    fn append(&self, o: &Outcome) -> io::Result<()> {
        let mut f = self.0.lock().unwrap_or_else(|p| p.into_inner());
        f.write_all(o.to_line().as_bytes())?;
        f.flush()
    }
}

/// Generates the population, runs the tool on every design with up to
/// `workers` concurrent subprocesses and records each outcome.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignResult, CampaignError> {
    let (table, inj) = prepare(cfg)?;
    let designs = cfg.out_dir.join("designs");
    let logs = cfg.out_dir.join("logs");
    let planned = write_population(&table, &inj, cfg.seed, cfg.count, &designs)?;
    fs::create_dir_all(&logs)?;
    let manifest = cfg.out_dir.join(MANIFEST_NAME);
    let writer = ManifestWriter(Mutex::new(
        OpenOptions::new().create(true).append(true).open(&manifest)?,
    ));

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Outcome>> = Mutex::new(Vec::with_capacity(planned.len()));
    let first_io_error: Mutex<Option<io::Error>> = Mutex::new(None);
    std::thread::scope(|s| {
        for _ in 0..cfg.workers.min(planned.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(p) = planned.get(i) else { break };
                let log = logs.join(format!("design_{:05}.log", p.id));
                let (class, detail, millis) = run_one(cfg, &p.path, &log);
                let o = Outcome { id: p.id, k: cfg.k, seed: p.seed, class, detail, millis };
                if let Err(e) = writer.append(&o) {
                    first_io_error.lock().unwrap().get_or_insert(e);
                }
                results.lock().unwrap().push(o);
            });
        }
    });
    if let Some(e) = first_io_error.into_inner().unwrap() {
        return Err(e.into());
    }
    let mut outcomes = results.into_inner().unwrap();
    outcomes.sort_by_key(|o| o.id);
    Ok(CampaignResult { outcomes, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "table = t.tbl\nk = 1\ncount = 3\nmin_tokens = 150\nseed = 9\n\
                        tool = true {file}\ntimeout = 2.5\nout_dir = out\n";

    fn outcome(id: usize, k: usize, class: Class) -> Outcome {
        Outcome { id, k, seed: id as u64 * 7, class, detail: "d".into(), millis: 3 }
    }

    #[test]
    fn parses_config_with_defaults() {
        let c = CampaignConfig::parse(&format!("# campaign\n\n{BASE}")).unwrap();
        assert_eq!(c.k, 1);
        assert_eq!(c.count, 3);
        assert_eq!(c.tau, 1.0);
        assert_eq!(c.workers, 1);
        assert_eq!(c.timeout, Duration::from_millis(2500));
        assert_eq!(c.crash_pattern.as_deref(), Some("assertion"));
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = |text: String| CampaignConfig::parse(&text).unwrap_err();
        assert!(matches!(bad(BASE.replace("count = 3", "count = 0")), ConfigError::Value { key: "count", .. }));
        assert!(matches!(bad(BASE.replace("timeout = 2.5", "timeout = 0")), ConfigError::Value { key: "timeout", .. }));
        assert!(matches!(bad(BASE.replace("seed = 9\n", "")), ConfigError::Missing("seed")));
        assert!(matches!(bad(BASE.replace("true {file}", "true")), ConfigError::NoPlaceholder));
        assert!(matches!(bad(format!("{BASE}colour = red\n")), ConfigError::UnknownKey { line: 9, .. }));
        assert!(matches!(bad(format!("{BASE}k = 2\n")), ConfigError::Duplicate { .. }));
        assert!(matches!(bad(format!("{BASE}oops\n")), ConfigError::Syntax { line: 9 }));
    }

    #[test]
    fn manifest_lines_round_trip() {
        let mut o = outcome(4, 2, Class::Timeout);
        o.detail = "killed\tafter\n1s".into();
        let line = o.to_line();
        assert_eq!(line.matches('\t').count(), 5);
        let back = Outcome::from_line(line.trim_end_matches('\n')).unwrap();
        assert_eq!(back.detail, "killed after 1s");
        assert_eq!((back.id, back.k, back.seed, back.class), (4, 2, 28, Class::Timeout));
    }

    #[test]
    fn truncated_tail_is_dropped() {
        let a = outcome(0, 1, Class::Clean).to_line();
        let b = outcome(1, 1, Class::Crash).to_line();
        let text = format!("{a}{}", &b[..b.len() - 4]);
        assert_eq!(read_manifest(&text).unwrap(), vec![outcome(0, 1, Class::Clean)]);
        assert_eq!(read_manifest("").unwrap(), vec![]);
        assert!(read_manifest("1\t2\n").is_err());
    }

    #[test]
    fn empty_manifest_summarizes_to_zero() {
        let s = summarize(&[]);
        assert!(s.per_k.is_empty());
        assert_eq!(s.total, ClassCounts::default());
    }

    #[test]
    fn mixed_manifest_hand_count() {
        use Class::*;
        let classes = [(0, Clean), (0, Clean), (0, Crash), (1, Reject), (1, Timeout), (1, Crash), (1, Crash), (3, Clean)];
        let os: Vec<Outcome> = classes.iter().enumerate().map(|(i, &(k, c))| outcome(i, k, c)).collect();
        let s = summarize(&os);
        assert_eq!(s.per_k[&0], ClassCounts { clean: 2, reject: 0, crash: 1, timeout: 0 });
        assert_eq!(s.per_k[&1], ClassCounts { clean: 0, reject: 1, crash: 2, timeout: 1 });
        assert_eq!(s.per_k[&3], ClassCounts { clean: 1, reject: 0, crash: 0, timeout: 0 });
        assert_eq!(s.total, ClassCounts { clean: 3, reject: 1, crash: 3, timeout: 1 });
        assert_eq!(s.total.total(), 8);
    }

    #[test]
    fn crash_only_manifest() {
        let os: Vec<Outcome> = (0..17).map(|i| outcome(i, 6, Class::Crash)).collect();
        let s = summarize(&os);
        assert_eq!(s.total.crash, 17);
        assert_eq!(s.total.total(), 17);
    }

    #[cfg(unix)]
    #[test]
    fn classification_rules() {
        use std::os::unix::process::ExitStatusExt;
        let exit = |c: i32| ExitStatus::from_raw(c << 8);
        assert_eq!(classify(&exit(0), "", Some("assertion")).0, Class::Clean);
        assert_eq!(classify(&exit(3), "syntax error", Some("assertion")), (Class::Reject, "exit 3".into()));
        assert_eq!(classify(&exit(1), "Assertion `x' failed", Some("assertion")).0, Class::Crash);
        assert_eq!(classify(&exit(1), "Assertion `x' failed", None).0, Class::Reject);
        assert_eq!(classify(&ExitStatus::from_raw(11), "", None), (Class::Crash, "signal 11".into()));
        assert_eq!(classify(&exit(139), "", None), (Class::Crash, "signal 11".into()));
        assert_eq!(classify(&exit(128), "", None).0, Class::Reject);
    }

    #[test]
    fn quoting_survives_odd_paths() {
        assert_eq!(shell_quote("a b"), "'a b'");
        assert_eq!(shell_quote("it's"), r"'it'\''s'");
    }
}
