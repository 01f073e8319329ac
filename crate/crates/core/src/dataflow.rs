//! Reaching definitions over small control-flow graphs.

use std::collections::{BTreeSet, VecDeque};

use crate::ast::*;
use crate::scope::SymbolTable;

/// A definition: the node that makes it and the symbol it defines.
pub type Def = (usize, u32);

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Cfg {
    pub entry: usize,
    pub succ: Vec<Vec<usize>>,
    /// Symbols defined by each node.
    pub defs: Vec<BTreeSet<u32>>,
}

impl Cfg {
    pub fn add_node(&mut self, defs: impl IntoIterator<Item = u32>) -> usize {
        self.succ.push(Vec::new());
        self.defs.push(defs.into_iter().collect());
        self.succ.len() - 1
    }

    pub fn add_edge(&mut self, from: usize, to: usize) {
        if !self.succ[from].contains(&to) {
            self.succ[from].push(to);
        }
    }

    pub fn len(&self) -> usize {
        self.succ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succ.is_empty()
    }

    fn preds(&self) -> Vec<Vec<usize>> {
        let mut p = vec![Vec::new(); self.len()];
        for (from, tos) in self.succ.iter().enumerate() {
            for &to in tos {
                p[to].push(from);
            }
        }
        p
    }
}

/// Definitions reaching the entry of every node (forward may-analysis,
/// iterated with a worklist to the least fixed point).
pub fn reaching_definitions(cfg: &Cfg) -> Vec<BTreeSet<Def>> {
    let n = cfg.len();
    let preds = cfg.preds();
    let mut live_in: Vec<BTreeSet<Def>> = vec![BTreeSet::new(); n];
    let mut out: Vec<BTreeSet<Def>> = (0..n).map(|v| cfg.defs[v].iter().map(|&s| (v, s)).collect()).collect();
    let reachable = reachable_from(cfg, cfg.entry);
    let mut work: VecDeque<usize> = (0..n).filter(|&v| reachable[v]).collect();
    let mut queued = reachable.clone();
    while let Some(v) = work.pop_front() {
        queued[v] = false;
        let incoming: BTreeSet<Def> = preds[v]
            .iter()
            .filter(|&&p| reachable[p])
            .flat_map(|&p| out[p].iter().copied())
            .collect();
        let mut next: BTreeSet<Def> =
            incoming.iter().copied().filter(|(_, s)| !cfg.defs[v].contains(s)).collect();
        next.extend(cfg.defs[v].iter().map(|&s| (v, s)));
        live_in[v] = incoming;
        if next != out[v] {
            out[v] = next;
            for &s in &cfg.succ[v] {
                if !queued[s] {
                    queued[s] = true;
                    work.push_back(s);
                }
            }
        }
    }
    live_in
}

fn reachable_from(cfg: &Cfg, start: usize) -> Vec<bool> {
    let mut seen = vec![false; cfg.len()];
    let mut stack = vec![start];
    while let Some(v) = stack.pop() {
        if !std::mem::replace(&mut seen[v], true) {
            stack.extend(cfg.succ[v].iter().copied());
        }
    }
    seen
}

/// Reference solution by explicit path enumeration: a definition at `d`
/// reaches `m` when some simple path reaches `d` from the entry and some
/// simple path leads from `d` to `m` through nodes that do not redefine it.
pub fn reaching_by_paths(cfg: &Cfg) -> Vec<BTreeSet<Def>> {
    let n = cfg.len();
    let mut on_entry_path = vec![false; n];
    let mut visited = vec![false; n];
    fn visit(cfg: &Cfg, v: usize, on_path: &mut [bool], seen: &mut [bool]) {
        seen[v] = true;
        on_path[v] = true;
        for &s in &cfg.succ[v] {
            if !on_path[s] {
                visit(cfg, s, on_path, seen);
            }
        }
        on_path[v] = false;
    }
    visit(cfg, cfg.entry, &mut on_entry_path, &mut visited);

    let mut result = vec![BTreeSet::new(); n];
    for d in (0..n).filter(|&d| visited[d]) {
        for &sym in &cfg.defs[d] {
            // Enumerate simple paths leaving d; every node reached receives
            // the definition, and only non-redefining nodes extend a path.
            let mut on_path = vec![false; n];
            fn walk(cfg: &Cfg, v: usize, sym: u32, on_path: &mut [bool], hits: &mut [bool]) {
                hits[v] = true;
                if cfg.defs[v].contains(&sym) {
                    return;
                }
                on_path[v] = true;
                for &s in &cfg.succ[v] {
                    if !on_path[s] {
                        walk(cfg, s, sym, on_path, hits);
                    }
                }
                on_path[v] = false;
            }
            let mut hits = vec![false; n];
            for &s in &cfg.succ[d] {
                walk(cfg, s, sym, &mut on_path, &mut hits);
            }
            for m in (0..n).filter(|&m| hits[m]) {
                result[m].insert((d, sym));
            }
        }
    }
    result
}

/// Symbols whose definitions reach each item position of a module:
/// `items[i]` is the set before item `i`, the last entry the module end.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReachingMap {
    pub items: Vec<BTreeSet<SymId>>,
}

struct Builder<'a> {
    cfg: Cfg,
    symbols: &'a SymbolTable,
}

impl Builder<'_> {
    fn stmt(&mut self, s: &Stmt, from: usize) -> usize {
        match s {
            Stmt::Block(v) => v.iter().fold(from, |at, s| self.stmt(s, at)),
            Stmt::If { cond: _, then, els } => {
                let test = self.cfg.add_node([]);
                self.cfg.add_edge(from, test);
                let t_end = then.iter().fold(test, |at, s| self.stmt(s, at));
                let e_end = els.iter().flatten().fold(test, |at, s| self.stmt(s, at));
                let join = self.cfg.add_node([]);
                self.cfg.add_edge(t_end, join);
                self.cfg.add_edge(e_end, join);
                join
            }
            Stmt::Assign { lhs, .. } => {
                let node = self.cfg.add_node(lhs.base.sym);
                self.cfg.add_edge(from, node);
                node
            }
            Stmt::Null => from,
        }
    }

    /// Symbols an item defines at module level.
    fn item_defs(&self, item: &Item) -> Vec<SymId> {
        match item {
            Item::Net(n) => n.name.sym.into_iter().collect(),
            Item::Localparam(l) => l.name.sym.into_iter().collect(),
            Item::Assign(a) => a.lhs.base.sym.into_iter().collect(),
            Item::Function(f) => f.name.sym.into_iter().collect(),
            Item::Gate(g) => g.terms[..g.kind.outputs(g.terms.len())].iter().filter_map(|t| t.sym).collect(),
            Item::Instance(inst) => {
                let mut v: Vec<SymId> = inst.name.sym.into_iter().collect();
                let ports = inst.module.sym.map(|m| self.symbols.get(m).params.clone()).unwrap_or_default();
                let outputs = |p: SymId| self.symbols.get(p).dir.is_some_and(|d| d != Direction::Input);
                match &inst.conns {
                    Conns::Named(c) => v.extend(
                        c.iter()
                            .filter(|(p, _)| p.sym.is_some_and(outputs))
                            .filter_map(|(_, e)| e.as_ident().and_then(|i| i.sym)),
                    ),
                    Conns::Positional(c) => v.extend(
                        ports
                            .iter()
                            .zip(c)
                            .filter(|(p, _)| outputs(**p))
                            .filter_map(|(_, e)| e.as_ident().and_then(|i| i.sym)),
                    ),
                }
                v
            }
            Item::StructVar(s) => s.name.sym.into_iter().collect(),
            Item::Typedef(_) | Item::Always(_) | Item::Initial(_) => Vec::new(),
        }
    }
}

/// Builds the module's control-flow graph (items in sequence, procedural
/// bodies spliced in with their branches, `always` bodies looping) and
/// solves it.
pub fn module_reaching(module: &Module, symbols: &SymbolTable) -> ReachingMap {
    let mut b = Builder { cfg: Cfg::default(), symbols };
    let ports = module.ports.iter().flatten().filter_map(|p| p.name.sym);
    let entry = b.cfg.add_node(ports);
    let mut points = Vec::with_capacity(module.items.len() + 1);
    let mut at = entry;
    for item in &module.items {
        let defs = b.item_defs(item);
        let node = b.cfg.add_node(defs);
        b.cfg.add_edge(at, node);
        points.push(node);
        at = match item {
            Item::Always(a) => {
                let head = b.cfg.add_node([]);
                b.cfg.add_edge(node, head);
                let end = b.stmt(&a.body, head);
                b.cfg.add_edge(end, head);
                end
            }
            Item::Initial(s) => b.stmt(s, node),
            _ => node,
        };
    }
    let exit = b.cfg.add_node([]);
    b.cfg.add_edge(at, exit);
    points.push(exit);
    let solved = reaching_definitions(&b.cfg);
    ReachingMap {
        items: points
            .into_iter()
            .map(|p| solved[p].iter().map(|&(_, sym)| sym).collect())
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_design;
    use crate::scope::check_scopes;
    use proptest::prelude::*;

    fn chain(defs: &[&[u32]]) -> Cfg {
        let mut g = Cfg::default();
        for (i, d) in defs.iter().enumerate() {
            g.add_node(d.iter().copied());
            if i > 0 {
                g.add_edge(i - 1, i);
            }
        }
        g
    }

    #[test]
    fn straight_line() {
        // a; b; a; end
        let g = chain(&[&[0], &[1], &[0], &[]]);
        let r = reaching_definitions(&g);
        assert_eq!(r[3], BTreeSet::from([(1, 1), (2, 0)]));
        assert_eq!(r, reaching_by_paths(&g));
    }

    #[test]
    fn diamond_merges_branches() {
        let mut g = Cfg::default();
        let top = g.add_node([0]);
        let left = g.add_node([1]);
        let right = g.add_node([]);
        let join = g.add_node([]);
        g.add_edge(top, left);
        g.add_edge(top, right);
        g.add_edge(left, join);
        g.add_edge(right, join);
        let r = reaching_definitions(&g);
        assert_eq!(r[join], BTreeSet::from([(top, 0), (left, 1)]));
        assert_eq!(r, reaching_by_paths(&g));
    }

    #[test]
    fn loop_carries_definitions_back() {
        let mut g = chain(&[&[], &[0], &[]]);
        g.add_edge(2, 0);
        let r = reaching_definitions(&g);
        assert_eq!(r[0], BTreeSet::from([(1, 0)]));
        assert_eq!(r, reaching_by_paths(&g));
    }

    fn arb_cfg() -> impl Strategy<Value = Cfg> {
        (1usize..=10).prop_flat_map(|n| {
            let defs = proptest::collection::vec(proptest::collection::btree_set(0u32..4, 0..3), n);
            let edges = proptest::collection::vec((0..n, 0..n), 0..(2 * n));
            (defs, edges).prop_map(|(defs, edges)| {
                let mut g = Cfg { entry: 0, succ: vec![Vec::new(); defs.len()], defs };
                for (a, b) in edges {
                    g.add_edge(a, b);
                }
                g
            })
        })
    }

    proptest! {
        #[test]
        fn worklist_matches_path_enumeration(g in arb_cfg()) {
            prop_assert_eq!(reaching_definitions(&g), reaching_by_paths(&g));
        }
    }

    #[test]
    fn module_points() {
        let src = "module m(input wire a); wire b; reg c; always @(*) begin if (a) begin c = b; end end \
                   function f(input reg x); f = x; endfunction wire d = f(a); endmodule";
        let mut d = Design::from_tree(&parse_design(src).unwrap(), Lowering::Source);
        let (t, v) = check_scopes(&mut d);
        assert!(v.is_empty());
        let m = d.modules().next().unwrap();
        let r = module_reaching(m, &t);
        let names = |i: usize| -> Vec<String> { r.items[i].iter().map(|&s| t.get(s).name.clone()).collect() };
        assert_eq!(r.items.len(), m.items.len() + 1);
        assert_eq!(names(0), vec!["a"]);
        assert_eq!(names(3), vec!["a", "b", "c"]);
        assert_eq!(names(5), vec!["a", "b", "c", "f", "d"]);
    }
}
