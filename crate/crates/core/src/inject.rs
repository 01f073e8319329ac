//! Growing a design to a token budget by injecting small generated designs.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::ast::*;
use crate::dataflow::module_reaching;
use crate::lexer::{tokenize, TokenKind};
use crate::parser::render_tokens;
use crate::pipeline::{check_lenient, check_text, generate_valid, CheckError, Exhausted, GenOptions, Rejections};
use crate::resolve::resolve_namespace_member;
use crate::scope::SymKind;
use crate::skeleton::{stream, Stream};
use crate::table::ProbabilityTable;
use crate::trainer::DEFAULT_GATE_PROBABILITY;
use crate::types::{Family, TypedDesign};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InjectKind {
    Instance,
    Call,
    Hierarchical,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KindWeights {
    pub instance: f64,
    pub call: f64,
    pub hierarchical: f64,
}

impl Default for KindWeights {
    fn default() -> Self {
        KindWeights { instance: 0.6, call: 0.2, hierarchical: 0.2 }
    }
}

impl KindWeights {
    fn pick(&self, rng: &mut Stream) -> InjectKind {
        let total = self.instance + self.call + self.hierarchical;
        let x = rng.gen::<f64>() * total;
        if x < self.instance {
            InjectKind::Instance
        } else if x < self.instance + self.call {
            InjectKind::Call
        } else {
            InjectKind::Hierarchical
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectionConfig {
    /// Token budget T.
    pub budget: usize,
    pub gate_probability: f64,
    pub weights: KindWeights,
    pub gen: GenOptions,
    /// Iterations without growth before giving up.
    pub stall_limit: u32,
    /// Failed injection attempts in a row after which the newest generated
    /// design is appended as it is.
    pub append_after: u32,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        InjectionConfig {
            budget: 150,
            gate_probability: DEFAULT_GATE_PROBABILITY,
            weights: KindWeights::default(),
            gen: GenOptions::default(),
            stall_limit: 100,
            append_after: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum InjectError {
    #[error("no compatible candidate for {0}")]
    NoCandidate(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GrowError {
    #[error("token budget must be at least 1")]
    ZeroBudget,
    #[error("no growth in {0} consecutive iterations")]
    BudgetStall(u32),
    #[error(transparent)]
    Generation(#[from] Exhausted),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortSig {
    pub name: String,
    pub dir: Direction,
    pub width: u32,
    pub family: Family,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolModule {
    pub name: String,
    pub ports: Vec<PortSig>,
    /// Index of the generated design the module came from.
    pub source: usize,
    pub consumed: bool,
}

/// Modules available for instantiation. A generated design's text joins the
/// accumulated design the first time one of its modules is injected.
#[derive(Debug, Clone, Default)]
pub struct ModulePool {
    pub modules: Vec<PoolModule>,
    sources: Vec<Option<Vec<Description>>>,
}

impl ModulePool {
    /// Adds every module of a generated design; returns the source index.
    pub fn add(&mut self, typed: &TypedDesign) -> usize {
        let source = self.sources.len();
        for m in typed.design.modules() {
            let ports = m
                .ports
                .iter()
                .flatten()
                .filter_map(|p| {
                    let c = typed.symbol_type(p.name.sym?);
                    Some(PortSig {
                        name: p.name.text(),
                        dir: p.dir,
                        width: c.width,
                        family: c.family.unwrap_or(Family::Net),
                    })
                })
                .collect();
            self.modules.push(PoolModule { name: m.name.text(), ports, source, consumed: false });
        }
        self.sources.push(Some(typed.design.items.clone()));
        source
    }

    /// Withdraws a whole source design from the pool, returning its items
    /// unless they are already part of the accumulated design.
    pub fn absorb(&mut self, source: usize) -> Option<Vec<Description>> {
        for m in self.modules.iter_mut().filter(|m| m.source == source) {
            m.consumed = true;
        }
        self.sources[source].take()
    }

    pub fn available(&self) -> impl Iterator<Item = (usize, &PoolModule)> {
        self.modules.iter().enumerate().filter(|(_, m)| !m.consumed)
    }
}

/// Shifts every minted `id_<n>` name by `offset`.
pub fn offset_names(text: &str, offset: u64) -> String {
    let tokens = tokenize(text).expect("generated text lexes");
    let renamed: Vec<(TokenKind, String)> = tokens
        .into_iter()
        .map(|t| {
            let text = match t.text.strip_prefix("id_").and_then(|n| n.parse::<u64>().ok()) {
                Some(n) if t.kind == TokenKind::Ident => format!("id_{}", n + offset),
                _ => t.text,
            };
            (t.kind, text)
        })
        .collect();
    render_tokens(renamed.iter().map(|(k, s)| (*k, s.as_str())))
}

/// One past the largest minted `id_<n>` in the design.
pub fn next_name(design: &Design) -> u64 {
    design
        .tokens()
        .iter()
        .filter(|(k, _)| *k == TokenKind::Ident)
        .filter_map(|(_, s)| s.strip_prefix("id_")?.parse::<u64>().ok())
        .map(|n| n + 1)
        .max()
        .unwrap_or(0)
}

/// A typed data symbol that reaches an injection point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Reaching {
    pub sym: SymId,
    pub width: u32,
    pub family: Family,
    /// Net or port (may be a gate terminal).
    pub net: bool,
    pub writable: bool,
}

/// Data symbols reaching each item position of module `host`.
pub fn reaching_signals(typed: &TypedDesign, host: usize) -> Vec<Vec<Reaching>> {
    let module = typed.design.modules().nth(host).expect("host module");
    let map = module_reaching(module, &typed.symbols);
    map.items.iter().map(|set| signals_in(typed, set)).collect()
}

fn signals_in(typed: &TypedDesign, set: &BTreeSet<SymId>) -> Vec<Reaching> {
    set.iter()
        .filter_map(|&s| {
            let sym = typed.symbols.get(s);
            if !sym.is_readable() {
                return None;
            }
            let c = typed.symbol_type(s);
            let family = c.family.unwrap_or(Family::Net);
            let writable = matches!(sym.kind, SymKind::Net | SymKind::Port) && sym.is_writable() && family == Family::Net;
            let net = matches!(sym.kind, SymKind::Net | SymKind::Port);
            Some(Reaching { sym: s, width: c.width, family, net, writable })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Choice {
    Gate { kind: GateKind, terms: Vec<SymId> },
    /// Pool index and (port name, connected symbol) pairs.
    Module { index: usize, conns: Vec<(String, SymId)> },
}

/// Matchings enumerated before the reservoir sample is cut off.
const MATCHING_CAP: usize = 256;

/// Whether ports `from..` can still be given distinct symbols not in `used`
/// (augmenting-path bipartite matching).
fn feasible(candidates: &[Vec<SymId>], from: usize, used: &[SymId]) -> bool {
    fn augment(
        port: usize,
        candidates: &[Vec<SymId>],
        used: &[SymId],
        owner: &mut Vec<(SymId, usize)>,
        seen: &mut Vec<SymId>,
    ) -> bool {
        for &c in &candidates[port] {
            if used.contains(&c) || seen.contains(&c) {
                continue;
            }
            seen.push(c);
            match owner.iter().position(|&(s, _)| s == c) {
                None => {
                    owner.push((c, port));
                    return true;
                }
                Some(i) => {
                    let other = owner[i].1;
                    if augment(other, candidates, used, owner, seen) {
                        let i = owner.iter().position(|&(s, p)| s == c && p == other).expect("still owned");
                        owner[i].1 = port;
                        return true;
                    }
                }
            }
        }
        false
    }
    let mut owner = Vec::new();
    (from..candidates.len()).all(|port| augment(port, candidates, used, &mut owner, &mut Vec::new()))
}

/// An assignment of distinct reaching symbols to ports, sampled uniformly
/// from (a random prefix of) the enumeration of all valid assignments.
fn match_ports(ports: &[PortSig], reach: &[Reaching], rng: &mut Stream) -> Option<Vec<SymId>> {
    let candidates: Vec<Vec<SymId>> = ports
        .iter()
        .map(|p| {
            let mut c: Vec<SymId> = reach
                .iter()
                .filter(|r| r.width == p.width && (p.dir == Direction::Input || r.writable))
                .map(|r| r.sym)
                .collect();
            c.shuffle(rng);
            c
        })
        .collect();
    if !feasible(&candidates, 0, &[]) {
        return None;
    }
    struct Search<'a> {
        candidates: &'a [Vec<SymId>],
        current: Vec<SymId>,
        chosen: Option<Vec<SymId>>,
        seen: usize,
    }
    fn go(s: &mut Search, rng: &mut Stream) {
        let i = s.current.len();
        if i == s.candidates.len() {
            s.seen += 1;
            if rng.gen_range(0..s.seen) == 0 {
                s.chosen = Some(s.current.clone());
            }
            return;
        }
        for &c in &s.candidates[i] {
            if s.seen >= MATCHING_CAP {
                return;
            }
            if s.current.contains(&c) {
                continue;
            }
            s.current.push(c);
            if feasible(s.candidates, i + 1, &s.current) {
                go(s, rng);
            }
            s.current.pop();
        }
    }
    let mut s = Search { candidates: &candidates, current: Vec::new(), chosen: None, seen: 0 };
    go(&mut s, rng);
    s.chosen
}

fn pick_gate(reach: &[Reaching], rng: &mut Stream) -> Option<Choice> {
    let scalars: Vec<&Reaching> = reach.iter().filter(|r| r.width == 1 && r.net).collect();
    let out = **scalars.iter().filter(|r| r.writable).collect::<Vec<_>>().choose(rng)?;
    let mut inputs: Vec<SymId> = scalars.iter().map(|r| r.sym).filter(|&s| s != out.sym).collect();
    inputs.shuffle(rng);
    let kind = match inputs.len() {
        0 => return None,
        1 => *[GateKind::Not, GateKind::Buf].choose(rng)?,
        _ => *GateKind::ALL.choose(rng)?,
    };
    let arity = if matches!(kind, GateKind::Not | GateKind::Buf) { 1 } else { 2 };
    let mut terms = vec![out.sym];
    terms.extend(inputs.into_iter().take(arity));
    Some(Choice::Gate { kind, terms })
}

/// Picks a gate (with probability `gate_probability`) or the first pool
/// module, in random order, whose ports can all be bound to distinct
/// reaching symbols of the same width. `excluded` holds module names
/// that would close an instantiation cycle.
pub fn pick_compatible_module_primitive_gate(
    reach: &[Reaching],
    pool: &ModulePool,
    excluded: &BTreeSet<String>,
    gate_probability: f64,
    rng: &mut Stream,
) -> Result<Choice, InjectError> {
    if rng.gen::<f64>() < gate_probability {
        if let Some(g) = pick_gate(reach, rng) {
            return Ok(g);
        }
    }
    let mut order: Vec<usize> = pool.available().map(|(i, _)| i).collect();
    order.shuffle(rng);
    for index in order {
        let m = &pool.modules[index];
        if excluded.contains(&m.name) {
            continue;
        }
        if let Some(syms) = match_ports(&m.ports, reach, rng) {
            let conns = m.ports.iter().map(|p| p.name.clone()).zip(syms).collect();
            return Ok(Choice::Module { index, conns });
        }
    }
    pick_gate(reach, rng).ok_or(InjectError::NoCandidate("instantiation"))
}

/// Modules of the design from which `target` is reachable by instantiation
/// (including `target`).
pub fn instantiators(design: &Design, target: &str) -> BTreeSet<String> {
    let mut found = BTreeSet::from([target.to_string()]);
    loop {
        let before = found.len();
        for m in design.modules() {
            let uses_found = m.items.iter().any(|i| matches!(i, Item::Instance(inst) if found.contains(&inst.module.text())));
            if uses_found {
                found.insert(m.name.text());
            }
        }
        if found.len() == before {
            return found;
        }
    }
}

fn name_of(typed: &TypedDesign, s: SymId) -> Ident {
    Ident::named(typed.symbols.get(s).name.clone())
}

fn range_for(width: u32) -> Option<(u32, u32)> {
    (width > 1).then(|| (width - 1, 0))
}

fn wire(width: u32) -> DataType {
    DataType::Explicit(DeclType { net: NetKind::Wire, signed: false, range: range_for(width) })
}

fn insert_item(design: &mut Design, host: usize, point: usize, item: Item) {
    let m = design.modules_mut().nth(host).expect("host module");
    m.items.insert(point, item);
}

/// The accumulated design with `choice` instantiated at `point` of `host`
/// and, for a pool module, its source design appended when not yet present.
pub fn inject_module(
    p: &TypedDesign,
    pool: &ModulePool,
    host: usize,
    point: usize,
    choice: &Choice,
    instance_name: String,
) -> Design {
    let mut design = p.design.clone();
    let item = match choice {
        Choice::Gate { kind, terms } => Item::Gate(Gate {
            kind: *kind,
            name: Ident::named(instance_name),
            terms: terms.iter().map(|&s| name_of(p, s)).collect(),
        }),
        Choice::Module { index, conns } => {
            let m = &pool.modules[*index];
            if let Some(items) = &pool.sources[m.source] {
                design.items.extend(items.iter().cloned());
            }
            Item::Instance(Instance {
                module: Ident::named(m.name.clone()),
                name: Ident::named(instance_name),
                conns: Conns::Named(
                    conns.iter().map(|(port, s)| (Ident::named(port.clone()), Expr::ident(name_of(p, *s)))).collect(),
                ),
            })
        }
    };
    insert_item(&mut design, host, point, item);
    design
}

impl ModulePool {
    /// Marks an injected module consumed; its source is now part of the
    /// accumulated design.
    pub fn commit(&mut self, index: usize) {
        let m = &mut self.modules[index];
        m.consumed = true;
        self.sources[m.source] = None;
    }
}

/// Declares a wire initialized with a call to a function of `host` that is
/// declared before `point`, with arguments drawn from the reaching symbols.
pub fn inject_function_call(
    p: &TypedDesign,
    host: usize,
    point: usize,
    reach: &[Reaching],
    rng: &mut Stream,
    wire_name: String,
) -> Result<Design, InjectError> {
    let module = p.design.modules().nth(host).expect("host module");
    let mut functions: Vec<SymId> = module.items[..point]
        .iter()
        .filter_map(|i| match i {
            Item::Function(f) => f.name.sym,
            _ => None,
        })
        .collect();
    functions.shuffle(rng);
    for f in functions {
        let sym = p.symbols.get(f);
        let args: Option<Vec<Expr>> = sym
            .params
            .iter()
            .map(|&param| {
                let w = p.symbol_type(param).width;
                let options: Vec<&Reaching> = reach.iter().filter(|r| r.width == w).collect();
                options.choose(rng).map(|r| Expr::ident(name_of(p, r.sym)))
            })
            .collect();
        let (Some(args), Some(ret)) = (args, sym.ret) else { continue };
        let call = Expr::Primary(Primary::Ref(Ident::named(sym.name.clone()), Access::Call(args)));
        let item = Item::Net(NetDecl {
            ty: wire(p.symbol_type(ret).width),
            name: Ident::named(wire_name),
            init: Some(call),
        });
        let mut design = p.design.clone();
        insert_item(&mut design, host, point, item);
        return Ok(design);
    }
    Err(InjectError::NoCandidate("function call"))
}

/// Writes (`assign u.m = 0`) or reads (`wire w = u.m`) an internal signal
/// of a module instance somewhere after the instance.
pub fn inject_hierarchical_ref(p: &TypedDesign, rng: &mut Stream, wire_name: String) -> Result<Design, InjectError> {
    let mut sites = Vec::new();
    for (h, m) in p.design.modules().enumerate() {
        for (j, item) in m.items.iter().enumerate() {
            let Item::Instance(inst) = item else { continue };
            let Some(s) = inst.name.sym else { continue };
            let target = p.symbols.get(s).target;
            if target.is_some_and(|t| !p.symbols.get(t).members.is_empty()) {
                sites.push((h, j, s, m.items.len()));
            }
        }
    }
    let &(host, at, inst, len) = sites.choose(rng).ok_or(InjectError::NoCandidate("hierarchical reference"))?;
    let point = rng.gen_range(at + 1..=len);
    let base = name_of(p, inst);
    let writable = |m: SymId| {
        p.symbols.get(m).kind == SymKind::Net && p.symbol_type(m).family == Some(Family::Net)
    };
    let write = rng.gen_bool(0.5)
        .then(|| resolve_namespace_member(&p.symbols, inst, true, rng).ok())
        .flatten()
        .filter(|&m| writable(m));
    let item = match write {
        Some(m) => Item::Assign(ContAssign {
            lhs: LValue { base, access: LvAccess::Member(name_of(p, m)) },
            rhs: Expr::sized(p.symbol_type(m).width, 0),
        }),
        None => {
            let m = resolve_namespace_member(&p.symbols, inst, false, rng)
                .map_err(|_| InjectError::NoCandidate("instance member"))?;
            Item::Net(NetDecl {
                ty: wire(p.symbol_type(m).width),
                name: Ident::named(wire_name),
                init: Some(Expr::Primary(Primary::Ref(base, Access::Member(name_of(p, m))))),
            })
        }
    };
    let mut design = p.design.clone();
    insert_item(&mut design, host, point, item);
    Ok(design)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InjectionCounts {
    pub modules: u32,
    pub gates: u32,
    pub calls: u32,
    pub hierarchical: u32,
}

#[derive(Debug, Clone)]
pub struct Grown {
    pub design: TypedDesign,
    pub seed: u64,
    pub iterations: u32,
    pub rejected: Rejections,
    /// Injections undone because the result failed the checker.
    pub reverted: u32,
    pub injections: InjectionCounts,
}

impl Grown {
    pub fn text(&self) -> String {
        self.design.design.to_text()
    }

    pub fn token_count(&self) -> usize {
        self.design.design.token_count()
    }

    /// No candidate was discarded and no injection undone on the way.
    pub fn first_pass_valid(&self) -> bool {
        self.rejected.total() == 0 && self.reverted == 0
    }
}

const GROW_SALT: u64 = 0x6772_6f77_5f64_6573;

struct Grower<'a> {
    cfg: &'a InjectionConfig,
    rng: Stream,
    pool: ModulePool,
    next_id: u64,
    reverted: u32,
    counts: InjectionCounts,
}

impl Grower<'_> {
    fn fresh_name(&mut self) -> String {
        self.next_id += 1;
        format!("id_{}", self.next_id - 1)
    }

    fn check(&self, text: &str) -> Result<TypedDesign, CheckError> {
        if self.cfg.gen.strict {
            check_text(text)
        } else {
            check_lenient(text)
        }
    }

    /// Checks a candidate; the accumulated design only changes when it passes.
    fn accept(&mut self, p: &mut TypedDesign, candidate: Design) -> bool {
        match self.check(&candidate.to_text()) {
            Ok(typed) => {
                *p = typed;
                true
            }
            Err(_) => {
                self.reverted += 1;
                false
            }
        }
    }

    fn points(&mut self, p: &TypedDesign) -> Vec<(usize, usize)> {
        let mut v: Vec<(usize, usize)> = p
            .design
            .modules()
            .enumerate()
            .flat_map(|(h, m)| (0..=m.items.len()).map(move |i| (h, i)))
            .collect();
        v.shuffle(&mut self.rng);
        v
    }

    fn instantiate(&mut self, p: &mut TypedDesign) -> Result<(), InjectError> {
        let hosts: Vec<String> = p.design.modules().map(|m| m.name.text()).collect();
        let reach: Vec<Vec<Vec<Reaching>>> = (0..hosts.len()).map(|h| reaching_signals(p, h)).collect();
        let excluded: Vec<BTreeSet<String>> = hosts.iter().map(|h| instantiators(&p.design, h)).collect();
        for (h, point) in self.points(p) {
            let pick = pick_compatible_module_primitive_gate(
                &reach[h][point],
                &self.pool,
                &excluded[h],
                self.cfg.gate_probability,
                &mut self.rng,
            );
            let Ok(choice) = pick else { continue };
            let name = self.fresh_name();
            let candidate = inject_module(p, &self.pool, h, point, &choice, name);
            if self.accept(p, candidate) {
                match choice {
                    Choice::Module { index, .. } => {
                        self.pool.commit(index);
                        self.counts.modules += 1;
                    }
                    Choice::Gate { .. } => self.counts.gates += 1,
                }
            }
            return Ok(());
        }
        Err(InjectError::NoCandidate("instantiation"))
    }

    fn call(&mut self, p: &mut TypedDesign) -> Result<(), InjectError> {
        for (h, point) in self.points(p) {
            let reach = reaching_signals(p, h);
            let name = self.fresh_name();
            if let Ok(candidate) = inject_function_call(p, h, point, &reach[point], &mut self.rng, name) {
                if self.accept(p, candidate) {
                    self.counts.calls += 1;
                }
                return Ok(());
            }
        }
        Err(InjectError::NoCandidate("function call"))
    }

    fn hierarchical(&mut self, p: &mut TypedDesign) -> Result<(), InjectError> {
        let name = self.fresh_name();
        let candidate = inject_hierarchical_ref(p, &mut self.rng, name)?;
        if self.accept(p, candidate) {
            self.counts.hierarchical += 1;
        }
        Ok(())
    }
}

/// Accumulates generated designs until the token budget is met: the first
/// design seeds the result, later ones join the module pool and each
/// iteration attempts one injection.
pub fn grow_design(table: &ProbabilityTable, seed: u64, cfg: &InjectionConfig) -> Result<Grown, GrowError> {
    if cfg.budget == 0 {
        return Err(GrowError::ZeroBudget);
    }
    let mut g = Grower {
        cfg,
        rng: stream(seed ^ GROW_SALT),
        pool: ModulePool::default(),
        next_id: 0,
        reverted: 0,
        counts: InjectionCounts::default(),
    };
    let mut rejected = Rejections::default();
    let mut s = seed;
    let mut p: Option<TypedDesign> = None;
    let (mut iterations, mut stall, mut failed) = (0u32, 0u32, 0u32);
    loop {
        if let Some(p) = &p {
            if p.design.token_count() >= cfg.budget {
                break;
            }
        }
        iterations += 1;
        let generated = generate_valid(table, s, cfg.gen)?;
        s = generated.next;
        rejected.add(generated.rejected);
        let renamed = offset_names(&generated.text(), g.next_id);
        g.next_id += next_name(&generated.typed.design);
        let typed = g.check(&renamed).expect("renaming keeps a typable design typable");
        let before = p.as_ref().map_or(0, |p| p.design.token_count());
        match &mut p {
            None => p = Some(typed),
            // Nothing to inject into yet: keep concatenating.
            Some(acc) if acc.design.modules().next().is_none() => {
                let mut joined = acc.design.clone();
                joined.items.extend(typed.design.items);
                g.accept(acc, joined);
            }
            Some(acc) => {
                let source = g.pool.add(&typed);
                let outcome = match cfg.weights.pick(&mut g.rng) {
                    InjectKind::Instance => g.instantiate(acc),
                    InjectKind::Call => g.call(acc),
                    InjectKind::Hierarchical => g.hierarchical(acc),
                };
                failed = if outcome.is_ok() { 0 } else { failed + 1 };
                if failed >= cfg.append_after {
                    if let Some(items) = g.pool.absorb(source) {
                        let mut joined = acc.design.clone();
                        joined.items.extend(items);
                        g.accept(acc, joined);
                    }
                    failed = 0;
                }
            }
        }
        let after = p.as_ref().map_or(0, |p| p.design.token_count());
        if after > before {
            stall = 0;
        } else {
            stall += 1;
            if stall >= cfg.stall_limit {
                return Err(GrowError::BudgetStall(stall));
            }
        }
    }
    Ok(Grown {
        design: p.expect("loop runs at least once"),
        seed,
        iterations,
        rejected,
        reverted: g.reverted,
        injections: g.counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scope::instantiation_order;

    fn typed(src: &str) -> TypedDesign {
        check_text(src).unwrap_or_else(|e| panic!("{e}\n{src}"))
    }

    fn sym(p: &TypedDesign, name: &str) -> SymId {
        p.symbols.symbols.iter().find(|s| s.name == name).unwrap().id
    }

    const HOST: &str = "module module_0(input wire [7:0] id_3, output wire [7:0] id_4); endmodule";
    const CALLEE: &str = "module module_1(input wire [7:0] a, output wire [7:0] b); assign b = a; endmodule";

    fn pool_of(src: &str) -> ModulePool {
        let mut pool = ModulePool::default();
        pool.add(&typed(src));
        pool
    }

    #[test]
    fn instantiates_a_compatible_pool_module() {
        let p = typed(HOST);
        let pool = pool_of(CALLEE);
        let reach = reaching_signals(&p, 0);
        let mut rng = stream(1);
        let choice = pick_compatible_module_primitive_gate(&reach[0], &pool, &BTreeSet::new(), 0.0, &mut rng).unwrap();
        let conns = vec![("a".to_string(), sym(&p, "id_3")), ("b".to_string(), sym(&p, "id_4"))];
        assert_eq!(choice, Choice::Module { index: 0, conns });
        let d = inject_module(&p, &pool, 0, 0, &choice, "id_9".into());
        let text = d.to_text();
        assert!(text.contains("module_1 id_9(.a(id_3), .b(id_4));"), "{text}");
        assert!(text.contains("module module_1("));
        assert!(check_text(&text).is_ok());
    }

    #[test]
    fn width_mismatch_means_no_candidate() {
        let p = typed(HOST);
        let pool = pool_of("module wide(input wire [15:0] a); endmodule");
        let reach = reaching_signals(&p, 0);
        let r = pick_compatible_module_primitive_gate(&reach[0], &pool, &BTreeSet::new(), 0.0, &mut stream(0));
        assert_eq!(r, Err(InjectError::NoCandidate("instantiation")));
    }

    #[test]
    fn gate_fallback_with_an_empty_pool() {
        let p = typed("module m(input wire a, input wire b, output wire c); endmodule");
        let reach = reaching_signals(&p, 0);
        let choice =
            pick_compatible_module_primitive_gate(&reach[0], &ModulePool::default(), &BTreeSet::new(), 0.0, &mut stream(3))
                .unwrap();
        let Choice::Gate { kind, terms } = &choice else { panic!("{choice:?}") };
        assert_eq!(terms[0], sym(&p, "c"));
        assert_eq!(terms.len(), if matches!(kind, GateKind::Not | GateKind::Buf) { 2 } else { 3 });
        let d = inject_module(&p, &ModulePool::default(), 0, 0, &choice, "g".into());
        assert!(check_text(&d.to_text()).is_ok());

        let p = typed("module m(input wire a, input wire b, output wire c); endmodule");
        let choice = Choice::Gate { kind: GateKind::And, terms: vec![sym(&p, "c"), sym(&p, "a"), sym(&p, "b")] };
        let text = inject_module(&p, &ModulePool::default(), 0, 0, &choice, "id_5".into()).to_text();
        assert!(text.contains("and id_5(c, a, b);"), "{text}");
    }

    #[test]
    fn cycle_closing_modules_are_excluded() {
        let p = typed("module a(input wire x); b u(.y(x)); endmodule module b(input wire y); endmodule");
        assert_eq!(instantiators(&p.design, "b"), BTreeSet::from(["a".to_string(), "b".to_string()]));
        let mut pool = ModulePool::default();
        pool.add(&p);
        let host_b = 1;
        let reach = reaching_signals(&p, host_b);
        let excluded = instantiators(&p.design, "b");
        let mut rng = stream(0);
        assert!(pick_compatible_module_primitive_gate(&reach[0], &pool, &excluded, 0.0, &mut rng).is_err());
    }

    #[test]
    fn function_calls() {
        let src = "module m(input wire [3:0] a); function [4:0] f(input reg [3:0] x); f = x + x; endfunction \
                   function g(); g = 1'd1; endfunction endmodule";
        let p = typed(src);
        let reach = reaching_signals(&p, 0);
        let mut rng = stream(2);
        assert_eq!(
            inject_function_call(&p, 0, 0, &reach[0], &mut rng, "w".into()),
            Err(InjectError::NoCandidate("function call"))
        );
        for seed in 0..8 {
            let d = inject_function_call(&p, 0, 2, &reach[2], &mut stream(seed), "w".into()).unwrap();
            let text = d.to_text();
            assert!(text.contains("wire [4:0] w = f(a);") || text.contains("wire w = g();"), "{text}");
            assert!(check_text(&text).is_ok(), "{text}");
        }
    }

    #[test]
    fn hierarchical_references() {
        let none = typed(HOST);
        assert_eq!(
            inject_hierarchical_ref(&none, &mut stream(0), "w".into()).unwrap_err(),
            InjectError::NoCandidate("hierarchical reference")
        );
        let src = "module c; wire [2:0] inner; endmodule module t; c u(); endmodule";
        let p = typed(src);
        let mut saw_write = false;
        for seed in 0..16 {
            let text = inject_hierarchical_ref(&p, &mut stream(seed), "w".into()).unwrap().to_text();
            saw_write |= text.contains("assign u.inner = 3'd0;");
            assert!(text.contains("u.inner"), "{text}");
            assert!(check_text(&text).is_ok(), "{text}");
        }
        assert!(saw_write);
    }

    #[test]
    fn renaming_shifts_minted_names_only() {
        let out = offset_names("module id_0(input wire id_1); wire x; endmodule", 10);
        assert!(out.starts_with("module id_10(input wire id_11);"), "{out}");
        assert!(out.contains("wire x;"));
        assert_eq!(next_name(&typed(&out).design), 12);
    }

    #[test]
    fn budget_one_returns_the_first_design() {
        let table = ProbabilityTable::uniform(1).unwrap();
        let cfg = InjectionConfig { budget: 1, ..Default::default() };
        let g = grow_design(&table, 9, &cfg).unwrap();
        assert!(g.token_count() >= 1);
        assert_eq!(g.injections, InjectionCounts::default());
        assert_eq!(grow_design(&table, 9, &InjectionConfig { budget: 0, ..cfg }).unwrap_err(), GrowError::ZeroBudget);
    }

    #[test]
    fn grown_designs_meet_the_budget_and_stay_acyclic() {
        let table = ProbabilityTable::uniform(2).unwrap();
        for seed in 0..20 {
            let g = grow_design(&table, seed, &InjectionConfig::default()).unwrap();
            assert!(g.token_count() >= 150);
            assert!(instantiation_order(&g.design.design).is_some());
            assert!(check_text(&g.text()).is_ok());
            let again = grow_design(&table, seed, &InjectionConfig::default()).unwrap();
            assert_eq!(g.text(), again.text());
        }
    }
}
