//! Corpus curation and K-gram rule counting.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::{fs, io};

use serde::Serialize;

use crate::grammar::{grammar, Rule, RuleId};
use crate::par::{self, Exec};
use crate::parser::{parse_design, Node, ParseTree};
use crate::pipeline::check_text;
use crate::table::{context_key, CountMap, ProbabilityTable, TableError, MAX_K};

/// Used when the corpus instantiates neither gates nor modules.
pub const DEFAULT_GATE_PROBABILITY: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    pub name: String,
    pub text: String,
}

impl SourceFile {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> SourceFile {
        SourceFile { name: name.into(), text: text.into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Rejected {
    pub file: String,
    pub line: u32,
    pub col: u32,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorpusReport {
    pub accepted: Vec<String>,
    pub rejected: Vec<Rejected>,
    pub token_counts: BTreeMap<String, usize>,
}

/// Accepted parse trees (in input order) and the report.
#[derive(Debug, Clone, Default)]
pub struct Curated {
    pub trees: Vec<ParseTree>,
    pub report: CorpusReport,
}

/// Collects every `.v` file under `dir`, sorted by path.
pub fn load_corpus(dir: &Path) -> io::Result<Vec<SourceFile>> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(&path, out)?;
            } else if path.extension().is_some_and(|e| e == "v") {
                out.push(path);
            }
        }
        Ok(())
    }
    let mut paths = Vec::new();
    walk(dir, &mut paths)?;
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p)?;
            let name = p.strip_prefix(dir).unwrap_or(&p).to_string_lossy().into_owned();
            Ok(SourceFile { name, text })
        })
        .collect()
}

/// Syntax sieve, then (with `semantic`) the scope and type checks.
pub fn curate_corpus(files: &[SourceFile], semantic: bool, exec: Exec) -> Curated {
    let outcomes = par::map(exec, files, |f| -> Result<ParseTree, Rejected> {
        let reject = |pos: crate::lexer::Pos, reason: String| Rejected {
            file: f.name.clone(),
            line: pos.line,
            col: pos.col,
            reason,
        };
        let tree = parse_design(&f.text).map_err(|e| reject(e.pos(), e.to_string()))?;
        if semantic {
            if let Err(e) = check_text(&f.text) {
                let pos = match &e {
                    crate::pipeline::CheckError::Scope { first, .. } => first.pos,
                    _ => Default::default(),
                };
                return Err(reject(pos, e.to_string()));
            }
        }
        Ok(tree)
    });
    let mut out = Curated::default();
    for (f, outcome) in files.iter().zip(outcomes) {
        match outcome {
            Ok(tree) => {
                out.report.token_counts.insert(f.name.clone(), tree.leaves().len());
                out.report.accepted.push(f.name.clone());
                out.trees.push(tree);
            }
            Err(r) => out.report.rejected.push(r),
        }
    }
    out
}

fn count_tree(tree: &ParseTree, k: usize, counts: &mut CountMap) {
    fn walk(node: &Node, path: &mut Vec<RuleId>, k: usize, counts: &mut CountMap) {
        let Node::Rule { rule, children } = node else { return };
        let ctx = context_key(path, k).expect("k validated");
        let lhs = grammar().rule(*rule).lhs;
        *counts.entry((ctx, lhs)).or_default().entry(*rule).or_default() += 1;
        path.push(*rule);
        for c in children {
            walk(c, path, k, counts);
        }
        path.pop();
    }
    walk(&tree.root, &mut Vec::new(), k, counts);
}

fn merge(mut a: CountMap, b: CountMap) -> CountMap {
    for (key, row) in b {
        let into = a.entry(key).or_default();
        for (r, c) in row {
            *into.entry(r).or_default() += c;
        }
    }
    a
}

/// Counts every rule activation under its `k` nearest rule ancestors.
pub fn count_sequences(trees: &[ParseTree], k: usize, exec: Exec) -> Result<CountMap, TableError> {
    if k > MAX_K {
        return Err(TableError::DepthOutOfRange(k));
    }
    Ok(par::map_reduce(
        exec,
        trees,
        CountMap::new,
        |t| {
            let mut c = CountMap::new();
            count_tree(t, k, &mut c);
            c
        },
        merge,
    ))
}

pub fn build_table(counts: CountMap, k: usize) -> Result<ProbabilityTable, TableError> {
    ProbabilityTable::from_counts(k, counts)
}

/// Share of gate instantiations among all instantiations seen in training.
pub fn gate_probability(table: &ProbabilityTable) -> f64 {
    let (gate, inst) = (Rule::ItemGate.id(), Rule::InstTailPorts.id());
    let (mut gates, mut modules) = (0u64, 0u64);
    for row in table.counts().values() {
        gates += row.get(&gate).copied().unwrap_or(0);
        modules += row.get(&inst).copied().unwrap_or(0);
    }
    if gates + modules == 0 {
        DEFAULT_GATE_PROBABILITY
    } else {
        gates as f64 / (gates + modules) as f64
    }
}

/// The `n` files whose token counts lie closest to the median.
pub fn median_band(report: &CorpusReport, n: usize) -> Vec<String> {
    let mut sizes: Vec<(&String, usize)> = report.token_counts.iter().map(|(f, &c)| (f, c)).collect();
    if sizes.is_empty() {
        return Vec::new();
    }
    sizes.sort_by_key(|&(f, c)| (c, f.clone()));
    let median = sizes[sizes.len() / 2].1;
    sizes.sort_by_key(|&(f, c)| (c.abs_diff(median), f.clone()));
    sizes.into_iter().take(n).map(|(f, _)| f.clone()).collect()
}

/// Curate, count and build in one call.
pub fn train(files: &[SourceFile], k: usize, semantic: bool, exec: Exec) -> Result<(ProbabilityTable, CorpusReport), TableError> {
    let curated = curate_corpus(files, semantic, exec);
    let counts = count_sequences(&curated.trees, k, exec)?;
    Ok((build_table(counts, k)?, curated.report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::Nt;
    use crate::table::ContextKey;

    fn files(texts: &[&str]) -> Vec<SourceFile> {
        texts.iter().enumerate().map(|(i, t)| SourceFile::new(format!("f{i}.v"), *t)).collect()
    }

    #[test]
    fn syntax_sieve_partitions() {
        let c = curate_corpus(&files(&["module m; endmodule", "module m endmodule"]), false, Exec::Sequential);
        assert_eq!(c.report.accepted, vec!["f0.v"]);
        assert_eq!(c.report.rejected.len(), 1);
        assert_eq!((c.report.rejected[0].line, c.report.rejected[0].col), (1, 10));
        assert_eq!(curate_corpus(&[], true, Exec::Sequential).report, CorpusReport::default());
    }

    #[test]
    fn semantic_sieve_rejects_wire_driven_in_always() {
        let src = "module m(input wire d, output wire q); always @(*) q = d; endmodule";
        let c = curate_corpus(&files(&[src]), true, Exec::Sequential);
        assert!(c.report.accepted.is_empty());
        assert!(curate_corpus(&files(&[src]), false, Exec::Sequential).report.rejected.is_empty());
    }

    #[test]
    fn single_rule_context() {
        let tree = ParseTree {
            root: Node::Rule {
                rule: Rule::SourceText.id(),
                children: vec![Node::Rule { rule: Rule::DescListNil.id(), children: vec![] }],
            },
        };
        let counts = count_sequences(&[tree], 1, Exec::Sequential).unwrap();
        let expected = CountMap::from([
            ((ContextKey(vec![]), Nt::Source), BTreeMap::from([(Rule::SourceText.id(), 1)])),
            ((ContextKey(vec![Rule::SourceText.id()]), Nt::DescList), BTreeMap::from([(Rule::DescListNil.id(), 1)])),
        ]);
        assert_eq!(counts, expected);
    }

    #[test]
    fn list_continuation_depends_on_position() {
        let tree = parse_design("module m; wire a; wire b; endmodule").unwrap();
        let counts = count_sequences(&[tree], 1, Exec::Sequential).unwrap();
        let row = |ctx: Rule| counts[&(ContextKey(vec![ctx.id()]), Nt::ModuleItems)].clone();
        assert_eq!(row(Rule::ModuleDeclRule), BTreeMap::from([(Rule::ModuleItemsCons.id(), 1)]));
        assert_eq!(
            row(Rule::ModuleItemsCons),
            BTreeMap::from([(Rule::ModuleItemsCons.id(), 1), (Rule::ModuleItemsNil.id(), 1)])
        );
    }

    #[test]
    fn table_is_count_ratio() {
        let ctx = ContextKey(vec![Rule::ItemAssign.id()]);
        let counts = CountMap::from([(
            (ctx.clone(), Nt::ContAssign),
            BTreeMap::from([(Rule::ContAssignRule.id(), 3)]),
        ), (
            (ContextKey(vec![]), Nt::AssignOp),
            BTreeMap::from([(Rule::AssignBlocking.id(), 3), (Rule::AssignNonblocking.id(), 1)]),
        )]);
        let t = build_table(counts, 1).unwrap();
        let d = t.lookup_distribution(&ContextKey(vec![]), "AssignOp").unwrap();
        assert_eq!(d.probability(Rule::AssignBlocking.id()), 0.75);
        assert_eq!(d.probability(Rule::AssignNonblocking.id()), 0.25);
        let unseen = t.lookup(&[], Nt::EventBody);
        assert_eq!(unseen.outcomes().len(), 2);
        assert_eq!(unseen.probability(Rule::EventBodyStar.id()), 0.5);
    }

    #[test]
    fn gate_share_and_median_band() {
        let (t, report) = train(
            &files(&[
                "module c(input wire a, output wire b); assign b = a; endmodule",
                "module m; wire x; wire y; wire z; and g (x, y, z); or h (x, y, z); c u (y, x); endmodule",
                "module n; endmodule",
            ]),
            2,
            false,
            Exec::Sequential,
        )
        .unwrap();
        assert!((gate_probability(&t) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(gate_probability(&ProbabilityTable::uniform(0).unwrap()), DEFAULT_GATE_PROBABILITY);
        assert_eq!(median_band(&report, 1), vec!["f0.v"]);
        assert_eq!(median_band(&report, 5).len(), 3);
    }
}
