//! Naming skeletons: declarations mint fresh names, uses draw from the
//! symbols in scope with a compatible kind and direction.

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::ast::*;
use crate::scope::{check_scopes, SymKind, Symbol, SymbolTable, Violation};
use crate::skeleton::{Skeleton, Stream};

/// Chance that a use inside an initializer names the symbol being declared
/// (non-strict mode only).
pub const SELF_REFERENCE_PROB: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveFailure {
    #[error("no compatible symbol for {0}")]
    NoCandidate(&'static str),
    #[error("resolved design fails scope check: {0}")]
    Inconsistent(String),
}

/// How a symbol is driven so far. Continuous and procedural drivers never
/// mix on one symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Drive {
    #[default]
    Undriven,
    Continuous,
    Procedural,
}

#[derive(Debug, Clone)]
pub struct NamedDesign {
    pub design: Design,
    pub symbols: SymbolTable,
    /// Deliberate rule breaks (non-strict mode); empty in strict mode.
    pub violations: Vec<Violation>,
}

/// Uniformly picks a member of `instance` (a module or struct instance).
/// With `writable`, module members are limited to internal nets.
pub fn resolve_namespace_member(
    table: &SymbolTable,
    instance: SymId,
    writable: bool,
    rng: &mut Stream,
) -> Result<SymId, ResolveFailure> {
    let target = table.get(instance).target.ok_or(ResolveFailure::NoCandidate("namespace"))?;
    let members: Vec<SymId> = table
        .get(target)
        .members
        .iter()
        .copied()
        .filter(|&m| !writable || table.get(m).kind != SymKind::Port)
        .collect();
    members.choose(rng).copied().ok_or(ResolveFailure::NoCandidate("namespace member"))
}

struct Resolver<'a> {
    rng: &'a mut Stream,
    strict: bool,
    table: SymbolTable,
    drive: Vec<Drive>,
    frames: Vec<Vec<SymId>>,
    next_name: u32,
    module: Option<SymId>,
    function: Option<SymId>,
    constant: bool,
    declaring: Option<SymId>,
}

type Res<T = ()> = Result<T, ResolveFailure>;

fn set_name(id: &mut Ident, sym: &Symbol) {
    id.name = Name::Named(sym.name.clone());
}

impl Resolver<'_> {
    fn mint(&mut self, id: &mut Ident, kind: SymKind) -> SymId {
        let name = match &id.name {
            Name::Hole(_) => {
                let n = format!("id_{}", self.next_name);
                self.next_name += 1;
                n
            }
            Name::Named(n) => n.clone(),
        };
        id.name = Name::Named(name.clone());
        let s = self.table.add(name, kind, id.pos);
        self.table.get_mut(s).owner = self.module;
        self.drive.push(Drive::Undriven);
        s
    }

    fn show(&mut self, s: SymId) {
        self.frames.last_mut().unwrap().push(s);
    }

    fn visible(&self) -> impl Iterator<Item = &Symbol> + '_ {
        self.frames.iter().flatten().map(|&s| self.table.get(s))
    }

    fn pick(&mut self, cands: &[SymId]) -> Option<SymId> {
        cands.choose(self.rng).copied()
    }

    fn drive_ok(&self, s: SymId, d: Drive) -> bool {
        self.drive[s as usize] == Drive::Undriven || self.drive[s as usize] == d
    }

    fn literal(&mut self) -> Primary {
        let w = [1u32, 2, 4, 8][self.rng.gen_range(0..4)];
        Primary::Sized(format!("{w}'d{}", self.rng.gen_range(0..(1u64 << w))))
    }

    fn self_reference(&mut self, id: &mut Ident) -> bool {
        if self.strict {
            return false;
        }
        let Some(d) = self.declaring else { return false };
        if self.rng.gen_bool(SELF_REFERENCE_PROB) {
            let name = self.table.get(d).name.clone();
            id.name = Name::Named(name);
            return true;
        }
        false
    }

    fn design(&mut self, d: &mut Design) -> Res {
        self.frames.push(Vec::new());
        for item in &mut d.items {
            match item {
                Description::Module(m) => self.module(m)?,
                Description::Localparam(l) => self.localparam(l)?,
                Description::Typedef(t) => self.typedef(t),
            }
        }
        Ok(())
    }

    fn module(&mut self, m: &mut Module) -> Res {
        let ms = self.mint(&mut m.name, SymKind::Module);
        self.table.get_mut(ms).owner = None;
        self.module = Some(ms);
        self.frames.push(Vec::new());
        for port in m.ports.iter_mut().flatten() {
            let s = self.mint(&mut port.name, SymKind::Port);
            self.table.get_mut(s).dir = Some(port.dir);
            self.table.get_mut(ms).params.push(s);
            self.table.get_mut(ms).members.push(s);
            self.show(s);
        }
        for item in &mut m.items {
            self.item(item, ms)?;
        }
        self.frames.pop();
        self.module = None;
        self.show(ms);
        Ok(())
    }

    fn localparam(&mut self, l: &mut Localparam) -> Res {
        let s = self.mint(&mut l.name, SymKind::Parameter);
        self.declaring = Some(s);
        self.constant = true;
        self.expr(&mut l.value)?;
        self.constant = false;
        self.declaring = None;
        self.show(s);
        Ok(())
    }

    fn typedef(&mut self, t: &mut StructTypedef) {
        let ts = self.mint(&mut t.name, SymKind::StructType);
        for (_, name) in &mut t.members {
            let s = self.mint(name, SymKind::Variable);
            self.table.get_mut(s).owner = Some(ts);
            self.table.get_mut(ts).params.push(s);
            self.table.get_mut(ts).members.push(s);
        }
        self.show(ts);
    }

    fn item(&mut self, item: &mut Item, ms: SymId) -> Res {
        match item {
            Item::Net(n) => {
                let s = self.mint(&mut n.name, SymKind::Net);
                if let Some(init) = &mut n.init {
                    self.declaring = Some(s);
                    self.expr(init)?;
                    self.declaring = None;
                    self.drive[s as usize] = Drive::Continuous;
                }
                self.table.get_mut(ms).members.push(s);
                self.show(s);
            }
            Item::Localparam(l) => self.localparam(l)?,
            Item::Assign(a) => {
                self.lvalue(&mut a.lhs, Drive::Continuous)?;
                self.expr(&mut a.rhs)?;
            }
            Item::Always(a) => {
                if let Event::List(terms) = &mut a.event {
                    for t in terms {
                        self.signal(&mut t.signal, false)?;
                    }
                }
                self.stmt(&mut a.body)?;
            }
            Item::Initial(s) => self.stmt(s)?,
            Item::Function(f) => self.function(f)?,
            Item::Gate(g) => {
                let s = self.mint(&mut g.name, SymKind::Instance);
                self.show(s);
                let outputs = g.kind.outputs(g.terms.len());
                for (i, t) in g.terms.iter_mut().enumerate() {
                    self.signal(t, i < outputs)?;
                }
            }
            Item::Instance(inst) => self.instance(inst)?,
            Item::StructVar(v) => {
                let types: Vec<SymId> =
                    self.visible().filter(|s| s.kind == SymKind::StructType).map(|s| s.id).collect();
                let ty = self.pick(&types).ok_or(ResolveFailure::NoCandidate("struct type"))?;
                set_name(&mut v.ty, self.table.get(ty));
                let s = self.mint(&mut v.name, SymKind::Instance);
                self.table.get_mut(s).target = Some(ty);
                self.show(s);
            }
            Item::Typedef(t) => self.typedef(t),
        }
        Ok(())
    }

    /// A bare net terminal: gate terminals and event signals.
    fn signal(&mut self, id: &mut Ident, output: bool) -> Res {
        let cands: Vec<SymId> = self
            .visible()
            .filter(|s| matches!(s.kind, SymKind::Net | SymKind::Port))
            .filter(|s| !output || (s.is_writable() && self.drive_ok(s.id, Drive::Continuous)))
            .map(|s| s.id)
            .collect();
        let s = self.pick(&cands).ok_or(ResolveFailure::NoCandidate("net terminal"))?;
        if output {
            self.drive[s as usize] = Drive::Continuous;
        }
        set_name(id, self.table.get(s));
        Ok(())
    }

    fn function(&mut self, f: &mut Function) -> Res {
        let fs = self.mint(&mut f.name, SymKind::Function);
        self.frames.push(Vec::new());
        let ret = self.table.add(self.table.get(fs).name.clone(), SymKind::Variable, f.name.pos);
        self.drive.push(Drive::Procedural);
        self.table.get_mut(ret).owner = Some(fs);
        self.table.get_mut(fs).ret = Some(ret);
        self.show(ret);
        for a in &mut f.args {
            let s = self.mint(&mut a.name, SymKind::Variable);
            self.table.get_mut(s).dir = Some(Direction::Input);
            self.table.get_mut(s).owner = Some(fs);
            self.table.get_mut(fs).params.push(s);
            self.show(s);
        }
        self.function = Some(ret);
        for s in &mut f.body {
            self.stmt(s)?;
        }
        self.function = None;
        self.frames.pop();
        self.show(fs);
        Ok(())
    }

    fn instance(&mut self, inst: &mut Instance) -> Res {
        let n = inst.conns.len();
        let bare: Vec<bool> = match &inst.conns {
            Conns::Named(v) => v.iter().map(|(_, e)| e.as_ident().is_some()).collect(),
            Conns::Positional(v) => v.iter().map(|e| e.as_ident().is_some()).collect(),
        };
        let is_out = |t: &SymbolTable, p: SymId| t.get(p).dir != Some(Direction::Input);
        let named = matches!(inst.conns, Conns::Named(_));
        let modules: Vec<SymId> = self
            .visible()
            .filter(|s| s.kind == SymKind::Module)
            .filter(|s| {
                let ports = &s.params;
                if named {
                    let outs = ports.iter().filter(|&&p| is_out(&self.table, p)).count();
                    let ins = ports.len() - outs;
                    let bare_n = bare.iter().filter(|b| **b).count();
                    ports.len() >= n && n.saturating_sub(ins) <= outs.min(bare_n)
                } else {
                    n == 0
                        || (ports.len() == n
                            && ports.iter().zip(&bare).all(|(&p, &b)| b || !is_out(&self.table, p)))
                }
            })
            .map(|s| s.id)
            .collect();
        let module = self.pick(&modules).ok_or(ResolveFailure::NoCandidate("module"))?;
        set_name(&mut inst.module, self.table.get(module));
        let s = self.mint(&mut inst.name, SymKind::Instance);
        self.table.get_mut(s).target = Some(module);
        self.show(s);
        let ports = self.table.get(module).params.clone();
        let assignment: Vec<SymId> = if named {
            let outs: Vec<SymId> = ports.iter().copied().filter(|&p| is_out(&self.table, p)).collect();
            let ins: Vec<SymId> = ports.iter().copied().filter(|&p| !is_out(&self.table, p)).collect();
            let bare_idx: Vec<usize> = (0..n).filter(|&i| bare[i]).collect();
            let lo = n.saturating_sub(ins.len());
            let hi = outs.len().min(bare_idx.len()).min(n);
            let k = self.rng.gen_range(lo..=hi);
            let chosen_outs: Vec<SymId> = outs.choose_multiple(self.rng, k).copied().collect();
            let chosen_ins: Vec<SymId> = ins.choose_multiple(self.rng, n - k).copied().collect();
            let out_slots: Vec<usize> = bare_idx.choose_multiple(self.rng, k).copied().collect();
            let mut result = vec![0; n];
            for (slot, p) in out_slots.iter().zip(&chosen_outs) {
                result[*slot] = *p;
            }
            let mut rest = chosen_ins.into_iter();
            for (i, r) in result.iter_mut().enumerate() {
                if !out_slots.contains(&i) {
                    *r = rest.next().unwrap();
                }
            }
            result
        } else {
            ports
        };
        let exprs: Vec<&mut Expr> = match &mut inst.conns {
            Conns::Named(v) => v
                .iter_mut()
                .zip(&assignment)
                .map(|((port, e), &p)| {
                    port.name = Name::Named(self.table.get(p).name.clone());
                    e
                })
                .collect(),
            Conns::Positional(v) => v.iter_mut().collect(),
        };
        for (e, &p) in exprs.into_iter().zip(&assignment) {
            if is_out(&self.table, p) {
                let Expr::Primary(Primary::Ref(id, _)) = e else { unreachable!("checked bare") };
                self.signal(id, true)?;
            } else {
                self.expr(e)?;
            }
        }
        Ok(())
    }

    fn stmt(&mut self, s: &mut Stmt) -> Res {
        match s {
            Stmt::Block(v) => self.block(v),
            Stmt::If { cond, then, els } => {
                self.expr(cond)?;
                self.block(then)?;
                match els {
                    Some(e) => self.block(e),
                    None => Ok(()),
                }
            }
            Stmt::Assign { lhs, rhs, .. } => {
                self.lvalue(lhs, Drive::Procedural)?;
                self.expr(rhs)
            }
            Stmt::Null => Ok(()),
        }
    }

    fn block(&mut self, v: &mut [Stmt]) -> Res {
        self.frames.push(Vec::new());
        for s in v {
            self.stmt(s)?;
        }
        self.frames.pop();
        Ok(())
    }

    fn lvalue(&mut self, lv: &mut LValue, d: Drive) -> Res {
        if let Some(ret) = self.function {
            if matches!(lv.access, LvAccess::Member(_)) {
                return Err(ResolveFailure::NoCandidate("function-local member"));
            }
            set_name(&mut lv.base, self.table.get(ret));
            return Ok(());
        }
        if let LvAccess::Member(m) = &mut lv.access {
            // (instance, member, symbol whose drive is tracked)
            let mut pairs = Vec::new();
            for inst in self.visible().filter(|s| s.kind == SymKind::Instance) {
                let Some(t) = inst.target else { continue };
                let target = self.table.get(t);
                if target.kind == SymKind::StructType {
                    if self.drive_ok(inst.id, d) {
                        pairs.extend(target.members.iter().map(|&x| (inst.id, x, inst.id)));
                    }
                } else {
                    for &x in &target.members {
                        if self.table.get(x).kind == SymKind::Net && self.drive_ok(x, d) {
                            pairs.push((inst.id, x, x));
                        }
                    }
                }
            }
            let &(inst, member, tracked) =
                pairs.choose(self.rng).ok_or(ResolveFailure::NoCandidate("member target"))?;
            self.drive[tracked as usize] = d;
            set_name(&mut lv.base, self.table.get(inst));
            set_name(m, self.table.get(member));
            return Ok(());
        }
        let cands: Vec<SymId> = self
            .visible()
            .filter(|s| matches!(s.kind, SymKind::Net | SymKind::Port) && s.is_writable())
            .filter(|s| d == Drive::Continuous || s.dir != Some(Direction::Inout))
            .filter(|s| self.drive_ok(s.id, d))
            .map(|s| s.id)
            .collect();
        let s = self.pick(&cands).ok_or(ResolveFailure::NoCandidate("assignment target"))?;
        self.drive[s as usize] = d;
        set_name(&mut lv.base, self.table.get(s));
        Ok(())
    }

    fn expr(&mut self, e: &mut Expr) -> Res {
        match e {
            Expr::Unary(_, inner) => self.expr(inner),
            Expr::Binary(p, _, rhs) => {
                self.primary(p)?;
                self.expr(rhs)
            }
            Expr::Ternary(c, a, b) => {
                self.primary(c)?;
                self.expr(a)?;
                self.expr(b)
            }
            Expr::Primary(p) => self.primary(p),
        }
    }

    fn primary(&mut self, p: &mut Primary) -> Res {
        match p {
            Primary::Ref(id, access) => {
                if matches!(access, Access::None | Access::Select(_)) && self.self_reference(id) {
                    return Ok(());
                }
                let constant = self.constant;
                let chosen = match access {
                    Access::None | Access::Select(_) => {
                        let cands: Vec<SymId> = self
                            .visible()
                            .filter(|s| if constant { s.kind == SymKind::Parameter } else { s.is_readable() })
                            .map(|s| s.id)
                            .collect();
                        self.pick(&cands).map(|s| (s, None))
                    }
                    Access::Member(_) if !constant => {
                        let cands: Vec<SymId> = self
                            .visible()
                            .filter(|s| s.kind == SymKind::Instance)
                            .filter(|s| s.target.is_some_and(|t| !self.table.get(t).members.is_empty()))
                            .map(|s| s.id)
                            .collect();
                        match self.pick(&cands) {
                            Some(inst) => {
                                let m = resolve_namespace_member(&self.table, inst, false, self.rng)?;
                                Some((inst, Some(m)))
                            }
                            None => None,
                        }
                    }
                    Access::Call(args) if !constant => {
                        let n = args.len();
                        let cands: Vec<SymId> = self
                            .visible()
                            .filter(|s| s.kind == SymKind::Function && s.params.len() == n)
                            .map(|s| s.id)
                            .collect();
                        self.pick(&cands).map(|s| (s, None))
                    }
                    _ => None,
                };
                let Some((s, member)) = chosen else {
                    *p = self.literal();
                    return Ok(());
                };
                set_name(id, self.table.get(s));
                match access {
                    Access::Member(m) => set_name(m, self.table.get(member.unwrap())),
                    Access::Call(args) => {
                        for a in args {
                            self.expr(a)?;
                        }
                    }
                    _ => {}
                }
                Ok(())
            }
            Primary::Number(_) | Primary::Sized(_) => Ok(()),
            Primary::Paren(inner) => self.expr(inner),
            Primary::Concat(parts) => {
                for e in parts {
                    self.expr(e)?;
                }
                Ok(())
            }
        }
    }
}

/// Names every placeholder of `skeleton`, then binds the result.
pub fn resolve_scopes(skeleton: &Skeleton, rng: &mut Stream, strict: bool) -> Result<NamedDesign, ResolveFailure> {
    resolve_design(skeleton.design(), rng, strict)
}

pub fn resolve_design(mut design: Design, rng: &mut Stream, strict: bool) -> Result<NamedDesign, ResolveFailure> {
    let mut r = Resolver {
        rng,
        strict,
        table: SymbolTable::default(),
        drive: Vec::new(),
        frames: Vec::new(),
        next_name: 0,
        module: None,
        function: None,
        constant: false,
        declaring: None,
    };
    r.design(&mut design)?;
    debug_assert_eq!(r.frames.len(), 1, "unbalanced scope frames");
    let (symbols, violations) = check_scopes(&mut design);
    if strict && !violations.is_empty() {
        return Err(ResolveFailure::Inconsistent(violations[0].to_string()));
    }
    Ok(NamedDesign { design, symbols, violations })
}
