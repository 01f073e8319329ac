//! Context-sensitive production probabilities.
//!
//! A table stores raw activation counts keyed by (context, nonterminal);
//! probabilities are derived from the counts when the table is built.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::grammar::{grammar, Nt, RuleId, GRAMMAR_VERSION};

pub const MAX_K: usize = 6;
const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TableError {
    #[error("context depth {0} outside 0..={MAX_K}")]
    DepthOutOfRange(usize),
    #[error("unknown nonterminal `{0}`")]
    UnknownNonterminal(String),
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid table: {0}")]
    Invalid(String),
}

/// The most recent rule ids of a derivation, oldest first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ContextKey(pub Vec<RuleId>);

impl ContextKey {
    pub fn as_slice(&self) -> &[RuleId] {
        &self.0
    }
}

/// Suffix of `history` of length `min(k, history.len())`.
pub fn context_key(history: &[RuleId], k: usize) -> Result<ContextKey, TableError> {
    if k > MAX_K {
        return Err(TableError::DepthOutOfRange(k));
    }
    let start = history.len().saturating_sub(k);
    Ok(ContextKey(history[start..].to_vec()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    outcomes: Vec<(RuleId, f64)>,
}

impl Distribution {
    /// Builds a distribution, checking positivity and normalization.
    pub fn new(outcomes: Vec<(RuleId, f64)>) -> Result<Distribution, TableError> {
        if outcomes.is_empty() {
            return Err(TableError::Invalid("empty distribution".into()));
        }
        if outcomes.iter().any(|(_, p)| !p.is_finite() || *p <= 0.0) {
            return Err(TableError::Invalid("non-positive probability".into()));
        }
        let sum: f64 = outcomes.iter().map(|(_, p)| p).sum();
        if (1.0 - sum).abs() > SUM_TOLERANCE {
            return Err(TableError::Invalid(format!("probabilities sum to {sum}")));
        }
        Ok(Distribution { outcomes })
    }

    fn from_counts(counts: &[(RuleId, u64)]) -> Distribution {
        let total: u64 = counts.iter().map(|(_, c)| c).sum();
        Distribution {
            outcomes: counts.iter().map(|&(r, c)| (r, c as f64 / total as f64)).collect(),
        }
    }

    fn uniform(rules: &[RuleId]) -> Distribution {
        let p = 1.0 / rules.len() as f64;
        Distribution { outcomes: rules.iter().map(|&r| (r, p)).collect() }
    }

    pub fn outcomes(&self) -> &[(RuleId, f64)] {
        &self.outcomes
    }

    pub fn probability(&self, rule: RuleId) -> f64 {
        self.outcomes.iter().find(|(r, _)| *r == rule).map_or(0.0, |(_, p)| *p)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> RuleId {
        let mut x: f64 = rng.gen();
        for &(r, p) in &self.outcomes {
            if x < p {
                return r;
            }
            x -= p;
        }
        self.outcomes.last().unwrap().0
    }
}

/// Maps every probability `p` to `p^(1/tau)` and renormalizes.
pub fn apply_temperature(dist: &Distribution, tau: f64) -> Result<Distribution, TableError> {
    if !tau.is_finite() || tau <= 0.0 {
        return Err(TableError::BadTemperature(tau));
    }
    if tau == 1.0 {
        return Ok(dist.clone());
    }
    let inv = 1.0 / tau;
    // Work relative to the maximum so tiny tau does not underflow everything.
    let max = dist.outcomes.iter().map(|(_, p)| *p).fold(0.0, f64::max);
    let scaled: Vec<(RuleId, f64)> =
        dist.outcomes.iter().map(|&(r, p)| (r, (p / max).powf(inv))).collect();
    let total: f64 = scaled.iter().map(|(_, w)| w).sum();
    let outcomes = scaled
        .into_iter()
        .map(|(r, w)| (r, (w / total).max(f64::MIN_POSITIVE)))
        .collect();
    Ok(Distribution { outcomes })
}

/// Raw counts keyed by (context, nonterminal), then rule id.
pub type CountMap = BTreeMap<(ContextKey, Nt), BTreeMap<RuleId, u64>>;

fn pack(ctx: &[RuleId], nt: Nt) -> u128 {
    let mut key = ctx.len() as u128 | ((nt as u128) << 3);
    for (i, &r) in ctx.iter().enumerate() {
        key |= (r as u128) << (11 + 16 * i);
    }
    key
}

#[derive(Debug, Clone)]
pub struct ProbabilityTable {
    k: usize,
    counts: CountMap,
    dists: HashMap<u128, Distribution>,
}

impl PartialEq for ProbabilityTable {
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k && self.counts == other.counts
    }
}

impl ProbabilityTable {
    /// Derives probabilities from `counts` and completes the empty-context
    /// row of every nonterminal.
    pub fn from_counts(k: usize, counts: CountMap) -> Result<ProbabilityTable, TableError> {
        if k > MAX_K {
            return Err(TableError::DepthOutOfRange(k));
        }
        let g = grammar();
        let mut dists = HashMap::new();
        let mut marginal: BTreeMap<Nt, BTreeMap<RuleId, u64>> = BTreeMap::new();
        for ((ctx, nt), row) in &counts {
            if ctx.0.len() > k {
                return Err(TableError::Invalid(format!("context longer than k={k}")));
            }
            if row.is_empty() || row.values().any(|&c| c == 0) {
                return Err(TableError::Invalid(format!("empty or zero count row for {nt}")));
            }
            for (&r, &c) in row {
                if g.rules().get(r as usize).map(|p| p.lhs) != Some(*nt) {
                    return Err(TableError::Invalid(format!("rule {r} does not expand {nt}")));
                }
                *marginal.entry(*nt).or_default().entry(r).or_default() += c;
            }
            let pairs: Vec<_> = row.iter().map(|(&r, &c)| (r, c)).collect();
            dists.insert(pack(&ctx.0, *nt), Distribution::from_counts(&pairs));
        }
        for &nt in Nt::ALL {
            dists.entry(pack(&[], nt)).or_insert_with(|| match marginal.get(&nt) {
                Some(row) => {
                    let pairs: Vec<_> = row.iter().map(|(&r, &c)| (r, c)).collect();
                    Distribution::from_counts(&pairs)
                }
                None => Distribution::uniform(g.rules_for(nt)),
            });
        }
        Ok(ProbabilityTable { k, counts, dists })
    }

    /// A table with no observations: every nonterminal is uniform.
    pub fn uniform(k: usize) -> Result<ProbabilityTable, TableError> {
        ProbabilityTable::from_counts(k, CountMap::new())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn counts(&self) -> &CountMap {
        &self.counts
    }

    /// Distribution for `nt` under `ctx`, dropping the oldest rule of the
    /// context until an observed row is found.
    pub fn lookup(&self, ctx: &[RuleId], nt: Nt) -> &Distribution {
        let start = ctx.len().saturating_sub(self.k);
        let mut ctx = &ctx[start..];
        loop {
            if let Some(d) = self.dists.get(&pack(ctx, nt)) {
                return d;
            }
            ctx = &ctx[1..];
        }
    }

    pub fn lookup_distribution(&self, ctx: &ContextKey, nt: &str) -> Result<&Distribution, TableError> {
        let nt = Nt::from_name(nt).ok_or_else(|| TableError::UnknownNonterminal(nt.to_string()))?;
        Ok(self.lookup(&ctx.0, nt))
    }

    /// Every derived distribution, including completed empty-context rows.
    pub fn distributions(&self) -> impl Iterator<Item = &Distribution> {
        self.dists.values()
    }

    pub fn serialize(&self) -> String {
        let mut out = format!("grammar_version: {GRAMMAR_VERSION}\nk: {}\n", self.k);
        for ((ctx, nt), row) in &self.counts {
            let ids: Vec<String> = ctx.0.iter().map(|r| r.to_string()).collect();
            let _ = write!(out, "\ncontext: [{}]\nnonterminal: {}\n", ids.join(","), nt);
            for (r, c) in row {
                let _ = writeln!(out, "rule {r}: {c}");
            }
        }
        out
    }

    pub fn deserialize(text: &str) -> Result<ProbabilityTable, TableError> {
        let err = |line: usize, msg: String| TableError::Parse { line, msg };
        let mut version = None;
        let mut k = None;
        let mut counts = CountMap::new();
        let mut ctx: Option<ContextKey> = None;
        let mut current: Option<(ContextKey, Nt)> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| err(line_no, format!("expected `key: value`, got `{line}`")))?;
            let value = value.trim();
            match key.trim() {
                "grammar_version" => {
                    if value != GRAMMAR_VERSION {
                        return Err(err(line_no, format!("unsupported grammar version `{value}`")));
                    }
                    version = Some(());
                }
                "k" => {
                    let v: usize = value.parse().map_err(|_| err(line_no, format!("bad k `{value}`")))?;
                    if v > MAX_K {
                        return Err(err(line_no, format!("k={v} exceeds {MAX_K}")));
                    }
                    k = Some(v);
                }
                "context" => {
                    if version.is_none() || k.is_none() {
                        return Err(err(line_no, "record before header".into()));
                    }
                    let inner = value
                        .strip_prefix('[')
                        .and_then(|v| v.strip_suffix(']'))
                        .ok_or_else(|| err(line_no, "context must be a bracketed list".into()))?;
                    let ids = inner
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse::<RuleId>().map_err(|_| err(line_no, format!("bad rule id `{s}`"))))
                        .collect::<Result<Vec<_>, _>>()?;
                    if ids.iter().any(|&r| r as usize >= grammar().num_rules()) {
                        return Err(err(line_no, "rule id out of range".into()));
                    }
                    ctx = Some(ContextKey(ids));
                    current = None;
                }
                "nonterminal" => {
                    let c = ctx.take().ok_or_else(|| err(line_no, "nonterminal without context".into()))?;
                    let nt = Nt::from_name(value)
                        .ok_or_else(|| err(line_no, format!("unknown nonterminal `{value}`")))?;
                    if counts.contains_key(&(c.clone(), nt)) {
                        return Err(err(line_no, "duplicate record".into()));
                    }
                    counts.insert((c.clone(), nt), BTreeMap::new());
                    current = Some((c, nt));
                }
                other => {
                    let id = other
                        .strip_prefix("rule ")
                        .ok_or_else(|| err(line_no, format!("unknown key `{other}`")))?;
                    let id: RuleId = id.trim().parse().map_err(|_| err(line_no, format!("bad rule id `{id}`")))?;
                    let c: u64 = value.parse().map_err(|_| err(line_no, format!("bad count `{value}`")))?;
                    let key = current.as_ref().ok_or_else(|| err(line_no, "rule outside a record".into()))?;
                    if counts.get_mut(key).unwrap().insert(id, c).is_some() {
                        return Err(err(line_no, format!("duplicate rule {id}")));
                    }
                }
            }
        }
        if version.is_none() {
            return Err(err(1, "missing grammar_version".into()));
        }
        let k = k.ok_or_else(|| err(1, "missing k".into()))?;
        let table = ProbabilityTable::from_counts(k, counts)?;
        for d in table.dists.values() {
            Distribution::new(d.outcomes.clone())?;
        }
        Ok(table)
    }
}
