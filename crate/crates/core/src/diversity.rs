//! Syntactic diversity of design populations.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::Serialize;

use crate::grammar::{grammar, RuleId};
use crate::lexer::{tokenize, LexError, TokenKind};
use crate::par::{self, Exec};
use crate::parser::parse_design;
use crate::trainer::SourceFile;

pub fn token_count(text: &str) -> Result<usize, LexError> {
    Ok(tokenize(text)?.len())
}

/// Distinct length-`n` windows over a token-kind sequence.
pub fn ngrams(kinds: &[TokenKind], n: usize) -> HashSet<Vec<TokenKind>> {
    assert!(n >= 1, "n-grams need n >= 1");
    kinds.windows(n).map(<[TokenKind]>::to_vec).collect()
}

/// Running union of rules and n-grams; adding files never shrinks it.
#[derive(Debug, Clone, Default)]
pub struct Diversity {
    rules: BTreeSet<RuleId>,
    grams: BTreeMap<usize, HashSet<Vec<TokenKind>>>,
    files: usize,
}

impl Diversity {
    pub fn new(ns: &[usize]) -> Diversity {
        Diversity { grams: ns.iter().map(|&n| (n, HashSet::new())).collect(), ..Default::default() }
    }

    /// Adds one file; unparseable files contribute their n-grams only.
    pub fn add(&mut self, text: &str) -> Result<(), String> {
        self.files += 1;
        let tokens = tokenize(text).map_err(|e| e.to_string())?;
        let kinds: Vec<TokenKind> = tokens.iter().map(|t| t.kind).collect();
        for (&n, set) in &mut self.grams {
            set.extend(ngrams(&kinds, n));
        }
        let tree = parse_design(text).map_err(|e| e.to_string())?;
        self.rules.extend(tree.rule_trace());
        Ok(())
    }

    pub fn merge(mut self, other: Diversity) -> Diversity {
        self.files += other.files;
        self.rules.extend(other.rules);
        for (n, set) in other.grams {
            self.grams.entry(n).or_default().extend(set);
        }
        self
    }

    pub fn unique_productions(&self) -> usize {
        self.rules.len()
    }

    pub fn unique_ngrams(&self, n: usize) -> usize {
        self.grams.get(&n).map_or(0, HashSet::len)
    }

    pub fn rules(&self) -> &BTreeSet<RuleId> {
        &self.rules
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TokenStats {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    pub median: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DiversityReport {
    pub population: usize,
    pub unique_productions: usize,
    pub total_productions: usize,
    pub unique_ngrams: BTreeMap<usize, usize>,
    pub tokens: TokenStats,
    /// Files that failed to lex or parse, with the error.
    pub skipped: Vec<(String, String)>,
}

pub fn diversity_report(files: &[SourceFile], ns: &[usize], exec: Exec) -> DiversityReport {
    let per_file = par::map(exec, files, |f| {
        let mut d = Diversity::new(ns);
        let outcome = d.add(&f.text);
        (d, outcome.err(), token_count(&f.text).unwrap_or(0))
    });
    let mut total = Diversity::new(ns);
    let mut skipped = Vec::new();
    let mut counts = Vec::with_capacity(files.len());
    for (f, (d, err, n)) in files.iter().zip(per_file) {
        total = total.merge(d);
        if let Some(e) = err {
            skipped.push((f.name.clone(), e));
        }
        counts.push(n);
    }
    counts.sort_unstable();
    let tokens = if counts.is_empty() {
        TokenStats::default()
    } else {
        TokenStats {
            min: counts[0],
            max: counts[counts.len() - 1],
            mean: counts.iter().sum::<usize>() as f64 / counts.len() as f64,
            median: counts[counts.len() / 2],
        }
    };
    DiversityReport {
        population: files.len(),
        unique_productions: total.unique_productions(),
        total_productions: grammar().num_rules(),
        unique_ngrams: ns.iter().map(|&n| (n, total.unique_ngrams(n))).collect(),
        tokens,
        skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::Rule;

    #[test]
    fn token_counts() {
        assert_eq!(token_count("").unwrap(), 0);
        assert_eq!(token_count("wire w;").unwrap(), 3);
    }

    #[test]
    fn four_gram_example() {
        let kinds: Vec<TokenKind> = tokenize("a < 3 ;").unwrap().iter().map(|t| t.kind).collect();
        assert_eq!(ngrams(&kinds, 4).len(), 1);
        assert_eq!(ngrams(&kinds[..3], 4).len(), 0);
    }

    #[test]
    fn minimal_module_rules() {
        let mut d = Diversity::new(&[4]);
        assert_eq!(d.unique_productions(), 0);
        d.add("module m; endmodule").unwrap();
        let expected: BTreeSet<RuleId> = [
            Rule::SourceText,
            Rule::DescListCons,
            Rule::DescModule,
            Rule::ModuleDeclRule,
            Rule::ModulePortsNone,
            Rule::ModuleItemsNil,
            Rule::DescListNil,
        ]
        .iter()
        .map(|r| r.id())
        .collect();
        assert_eq!(d.rules(), &expected);
        let (once, grams) = (d.unique_productions(), d.unique_ngrams(4));
        d.add("module m; endmodule").unwrap();
        assert_eq!((d.unique_productions(), d.unique_ngrams(4)), (once, grams));
    }

    #[test]
    fn report_skips_unparseable_files() {
        let files = vec![
            SourceFile::new("ok.v", "module m; wire w; endmodule"),
            SourceFile::new("bad.v", "module m endmodule"),
        ];
        let r = diversity_report(&files, &[4], Exec::Sequential);
        assert_eq!(r.population, 2);
        assert_eq!(r.skipped.len(), 1);
        assert_eq!(r.skipped[0].0, "bad.v");
        assert_eq!(r.tokens.max, 7);
        assert_eq!(r, diversity_report(&files, &[4], Exec::Parallel));
    }
}
