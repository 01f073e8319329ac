//! Width and net/variable inference.
//!
//! Constraint generation walks a bound design and emits width equalities,
//! successor conditions for `+`/`-`, concatenation sums and select bounds.
//! Unification solves widths with a union-find whose edges carry integer
//! offsets, so `x = y + 1` chains stay exact even before any width is known.
//! Net/variable family is solved per symbol and never flows through
//! expressions.

use std::fmt;

use thiserror::Error;

use crate::ast::*;
use crate::lexer::literal_width;
use crate::scope::{SymKind, SymbolTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TVar(pub u32);

impl fmt::Display for TVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Net,
    Variable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Concrete {
    pub family: Option<Family>,
    pub width: u32,
    pub signed: bool,
}

impl Concrete {
    pub fn bits(width: u32) -> Concrete {
        Concrete { family: None, width, signed: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    Var(TVar),
    Concrete(Concrete),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Constraint {
    Eq(Term, Term),
    /// When `antecedent` has width N, `consequent` has width N + 1.
    Cond { antecedent: TVar, consequent: TVar },
    /// Width of `result` is the sum of the part widths.
    Sum { parts: Vec<TVar>, result: TVar },
    /// Width is at least the given bound.
    MinWidth(TVar, u32),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConstraintSet {
    pub constraints: Vec<Constraint>,
    /// Net/variable requirements on symbol variables.
    pub families: Vec<(TVar, Family)>,
    pub num_vars: u32,
}

impl ConstraintSet {
    /// A set over `n` pre-existing variables (one per symbol).
    pub fn with_vars(n: u32) -> ConstraintSet {
        ConstraintSet { num_vars: n, ..Default::default() }
    }

    pub fn fresh(&mut self) -> TVar {
        self.num_vars += 1;
        TVar(self.num_vars - 1)
    }

    pub fn equate(&mut self, a: TVar, b: TVar) {
        self.constraints.push(Constraint::Eq(Term::Var(a), Term::Var(b)));
    }

    pub fn fix(&mut self, a: TVar, c: Concrete) {
        self.constraints.push(Constraint::Eq(Term::Var(a), Term::Concrete(c)));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("cannot unify width {0} with width {1}")]
    WidthMismatch(u32, u32),
    #[error("{0} must be both a net and a variable")]
    FamilyConflict(TVar),
    #[error("no positive width satisfies the constraints on {0}")]
    NoWidth(TVar),
}

/// Union-find over width classes. `offset[v]` is width(v) - width(parent).
#[derive(Debug, Clone)]
struct Widths {
    parent: Vec<u32>,
    offset: Vec<i64>,
    value: Vec<Option<i64>>,
    lower: Vec<i64>,
    signed: Vec<Option<bool>>,
}

impl Widths {
    fn new(n: usize) -> Widths {
        Widths {
            parent: (0..n as u32).collect(),
            offset: vec![0; n],
            value: vec![None; n],
            lower: vec![1; n],
            signed: vec![None; n],
        }
    }

    fn find(&mut self, v: u32) -> (u32, i64) {
        let p = self.parent[v as usize];
        if p == v {
            return (v, 0);
        }
        let (root, off) = self.find(p);
        self.parent[v as usize] = root;
        self.offset[v as usize] += off;
        (root, self.offset[v as usize])
    }

    fn set_root(&mut self, root: u32, value: i64) -> Result<(), TypeError> {
        let r = root as usize;
        match self.value[r] {
            Some(old) if old != value => {
                return Err(TypeError::WidthMismatch(old.max(0) as u32, value.max(0) as u32))
            }
            _ => {}
        }
        if value < self.lower[r] {
            return Err(TypeError::NoWidth(TVar(root)));
        }
        self.value[r] = Some(value);
        Ok(())
    }

    fn fix(&mut self, v: TVar, width: u32, signed: bool) -> Result<(), TypeError> {
        let (root, off) = self.find(v.0);
        let r = root as usize;
        self.signed[r] = Some(self.signed[r].unwrap_or(true) && signed);
        match self.value[r] {
            Some(val) if val + off != width as i64 => {
                Err(TypeError::WidthMismatch((val + off).max(0) as u32, width))
            }
            _ => self.set_root(root, width as i64 - off),
        }
    }

    /// Records width(b) = width(a) + k.
    fn relate(&mut self, a: TVar, b: TVar, k: i64) -> Result<(), TypeError> {
        let (ra, oa) = self.find(a.0);
        let (rb, ob) = self.find(b.0);
        if ra == rb {
            return if ob - oa == k { Ok(()) } else { Err(TypeError::NoWidth(b)) };
        }
        let shift = oa + k - ob;
        self.parent[rb as usize] = ra;
        self.offset[rb as usize] = shift;
        let (ra_, rb_) = (ra as usize, rb as usize);
        self.lower[ra_] = self.lower[ra_].max(self.lower[rb_] - shift);
        self.signed[ra_] = match (self.signed[ra_], self.signed[rb_]) {
            (Some(x), Some(y)) => Some(x && y),
            (x, y) => x.or(y),
        };
        let carried = self.value[rb_].map(|v| v - shift);
        if let Some(v) = carried {
            self.set_root(ra, v)?;
        } else if let Some(v) = self.value[ra_] {
            self.set_root(ra, v)?;
        }
        Ok(())
    }

    fn at_least(&mut self, v: TVar, bound: u32) -> Result<(), TypeError> {
        let (root, off) = self.find(v.0);
        let r = root as usize;
        self.lower[r] = self.lower[r].max(bound as i64 - off);
        match self.value[r] {
            Some(val) if val < self.lower[r] => Err(TypeError::NoWidth(v)),
            _ => Ok(()),
        }
    }

    fn width(&mut self, v: TVar) -> Option<i64> {
        let (root, off) = self.find(v.0);
        self.value[root as usize].map(|x| x + off)
    }

    /// Solves one sum if it has at most one unknown class. Returns whether
    /// anything changed.
    fn propagate_sum(&mut self, parts: &[TVar], result: TVar) -> Result<bool, TypeError> {
        let mut constant = 0i64;
        let mut unknown: Vec<(u32, i64)> = Vec::new();
        let mut add = |this: &mut Widths, v: TVar, sign: i64| {
            let (root, off) = this.find(v.0);
            match this.value[root as usize] {
                Some(val) => constant += sign * (val + off),
                None => {
                    constant += sign * off;
                    match unknown.iter_mut().find(|(r, _)| *r == root) {
                        Some((_, c)) => *c += sign,
                        None => unknown.push((root, sign)),
                    }
                }
            }
        };
        for &p in parts {
            add(self, p, 1);
        }
        add(self, result, -1);
        unknown.retain(|(_, c)| *c != 0);
        match unknown.as_slice() {
            [] if constant != 0 => Err(TypeError::NoWidth(result)),
            [] => Ok(false),
            [(root, coef)] => {
                if constant % coef != 0 {
                    return Err(TypeError::NoWidth(result));
                }
                self.set_root(*root, -constant / coef)?;
                Ok(true)
            }
            _ => Ok(false),
        }
    }
}

/// Solved (or partially solved) types.
#[derive(Debug, Clone)]
pub struct TypeEnvironment {
    widths: Widths,
    sums: Vec<(Vec<TVar>, TVar)>,
    families: Vec<Option<Family>>,
}

impl TypeEnvironment {
    /// The concrete term a variable resolves to, if any.
    pub fn resolve(&self, v: TVar) -> Term {
        let mut w = self.widths.clone();
        match w.width(v) {
            Some(width) => {
                let (root, _) = w.find(v.0);
                Term::Concrete(Concrete {
                    family: self.families[v.0 as usize],
                    width: width as u32,
                    signed: w.signed[root as usize].unwrap_or(false),
                })
            }
            None => Term::Var(v),
        }
    }

    pub fn width(&self, v: TVar) -> Option<u32> {
        self.widths.clone().width(v).map(|w| w as u32)
    }

    pub fn family(&self, v: TVar) -> Option<Family> {
        self.families[v.0 as usize]
    }

    pub fn num_vars(&self) -> usize {
        self.families.len()
    }

    fn propagate(&mut self) -> Result<(), TypeError> {
        loop {
            let mut changed = false;
            for (parts, result) in &self.sums {
                changed |= self.widths.propagate_sum(parts, *result)?;
            }
            if !changed {
                return Ok(());
            }
        }
    }
}

pub fn unify(cs: &ConstraintSet) -> Result<TypeEnvironment, TypeError> {
    let n = cs.num_vars as usize;
    let mut w = Widths::new(n);
    let mut sums = Vec::new();
    for c in &cs.constraints {
        match c {
            Constraint::Eq(Term::Var(a), Term::Var(b)) => w.relate(*a, *b, 0)?,
            Constraint::Eq(Term::Var(a), Term::Concrete(c)) | Constraint::Eq(Term::Concrete(c), Term::Var(a)) => {
                w.fix(*a, c.width, c.signed)?
            }
            Constraint::Eq(Term::Concrete(x), Term::Concrete(y)) => {
                if x.width != y.width {
                    return Err(TypeError::WidthMismatch(x.width, y.width));
                }
            }
            Constraint::Cond { antecedent, consequent } => w.relate(*antecedent, *consequent, 1)?,
            Constraint::Sum { parts, result } => sums.push((parts.clone(), *result)),
            Constraint::MinWidth(v, m) => w.at_least(*v, *m)?,
        }
    }
    let mut families = vec![None; n];
    let fixed = cs.constraints.iter().filter_map(|c| match c {
        Constraint::Eq(Term::Var(a), Term::Concrete(c)) | Constraint::Eq(Term::Concrete(c), Term::Var(a)) => {
            c.family.map(|f| (*a, f))
        }
        _ => None,
    });
    for (v, f) in fixed.chain(cs.families.iter().copied()) {
        let slot = &mut families[v.0 as usize];
        match slot {
            Some(old) if *old != f => return Err(TypeError::FamilyConflict(v)),
            _ => *slot = Some(f),
        }
    }
    let mut env = TypeEnvironment { widths: w, sums, families };
    env.propagate()?;
    Ok(env)
}

/// Gives every unresolved class its smallest admissible width (a lone
/// unconstrained symbol becomes a scalar) and every symbol without a family
/// requirement the net family.
pub fn complete(env: &mut TypeEnvironment) -> Result<(), TypeError> {
    for v in 0..env.families.len() as u32 {
        let (root, _) = env.widths.find(v);
        if env.widths.value[root as usize].is_none() {
            let lower = env.widths.lower[root as usize];
            env.widths.set_root(root, lower)?;
            env.propagate()?;
        }
    }
    for f in &mut env.families {
        f.get_or_insert(Family::Net);
    }
    Ok(())
}

struct Gen<'a> {
    cs: ConstraintSet,
    symbols: &'a SymbolTable,
}

fn var(id: &Ident) -> Option<TVar> {
    id.sym.map(TVar)
}

fn declared(t: &DataType) -> Option<Concrete> {
    match t {
        DataType::Hole(_) => None,
        DataType::Explicit(d) => Some(Concrete {
            family: match d.net {
                NetKind::Wire => Some(Family::Net),
                NetKind::Reg => Some(Family::Variable),
                NetKind::Logic => None,
            },
            width: d.width(),
            signed: d.signed,
        }),
    }
}

fn select_width(s: &Select) -> (u32, u32) {
    match s.lo {
        Some(lo) => (s.hi.abs_diff(lo) + 1, s.hi.max(lo).saturating_add(1)),
        None => (1, s.hi.saturating_add(1)),
    }
}

impl Gen<'_> {
    fn node(&mut self, dest: Option<TVar>) -> TVar {
        dest.unwrap_or_else(|| self.cs.fresh())
    }

    fn family(&mut self, v: Option<TVar>, f: Family) {
        if let Some(v) = v {
            self.cs.families.push((v, f));
        }
    }

    fn decl(&mut self, id: &Ident, ty: &DataType) {
        if let (Some(v), Some(c)) = (var(id), declared(ty)) {
            self.cs.fix(v, c);
        }
    }

    fn design(&mut self, d: &Design) {
        for item in &d.items {
            match item {
                Description::Module(m) => self.module(m),
                Description::Localparam(l) => self.localparam(l),
                Description::Typedef(t) => self.typedef(t),
            }
        }
    }

    fn module(&mut self, m: &Module) {
        for p in m.ports.iter().flatten() {
            self.decl(&p.name, &p.ty);
            if p.dir == Direction::Input {
                self.family(var(&p.name), Family::Net);
            }
        }
        for item in &m.items {
            self.item(item);
        }
    }

    fn localparam(&mut self, l: &Localparam) {
        let dest = var(&l.name);
        self.expr(&l.value, dest);
    }

    fn typedef(&mut self, t: &StructTypedef) {
        for (ty, name) in &t.members {
            self.decl(name, ty);
        }
    }

    fn item(&mut self, item: &Item) {
        match item {
            Item::Net(n) => {
                self.decl(&n.name, &n.ty);
                if let Some(init) = &n.init {
                    self.family(var(&n.name), Family::Net);
                    self.expr(init, var(&n.name));
                }
            }
            Item::Localparam(l) => self.localparam(l),
            Item::Assign(a) => {
                let l = self.lvalue(&a.lhs, Family::Net);
                self.expr(&a.rhs, Some(l));
            }
            Item::Always(a) => self.stmt(&a.body),
            Item::Initial(s) => self.stmt(s),
            Item::Function(f) => self.function(f),
            Item::Gate(g) => {
                let outputs = g.kind.outputs(g.terms.len());
                for (i, t) in g.terms.iter().enumerate() {
                    if let Some(v) = var(t) {
                        self.cs.fix(v, Concrete::bits(1));
                        if i < outputs {
                            self.family(Some(v), Family::Net);
                        }
                    }
                }
            }
            Item::Instance(inst) => self.instance(inst),
            Item::StructVar(_) => {}
            Item::Typedef(t) => self.typedef(t),
        }
    }

    fn function(&mut self, f: &Function) {
        let ret = f.name.sym.and_then(|s| self.symbols.get(s).ret).map(TVar);
        self.family(ret, Family::Variable);
        if let (Some(r), RetType::Explicit { signed, range }) = (ret, f.ret) {
            let width = range.map_or(1, |(a, b)| a.abs_diff(b) + 1);
            self.cs.fix(r, Concrete { family: Some(Family::Variable), width, signed });
        }
        for a in &f.args {
            self.decl(&a.name, &a.ty);
            self.family(var(&a.name), Family::Variable);
        }
        for s in &f.body {
            self.stmt(s);
        }
    }

    fn instance(&mut self, inst: &Instance) {
        let Some(module) = inst.module.sym else { return };
        let ports = &self.symbols.get(module).params;
        let pairs: Vec<(SymId, &Expr)> = match &inst.conns {
            Conns::Named(v) => v.iter().filter_map(|(p, e)| p.sym.map(|s| (s, e))).collect(),
            Conns::Positional(v) => ports.iter().copied().zip(v.iter()).collect(),
        };
        for (port, e) in pairs {
            let pv = TVar(port);
            let output = self.symbols.get(port).dir != Some(Direction::Input);
            match e.as_ident() {
                Some(id) if output => {
                    if let Some(v) = var(id) {
                        self.cs.equate(pv, v);
                        self.family(Some(v), Family::Net);
                    }
                }
                _ => {
                    self.expr(e, Some(pv));
                }
            }
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        match s {
            Stmt::Block(v) => v.iter().for_each(|s| self.stmt(s)),
            Stmt::If { cond, then, els } => {
                self.expr(cond, None);
                then.iter().for_each(|s| self.stmt(s));
                els.iter().flatten().for_each(|s| self.stmt(s));
            }
            Stmt::Assign { lhs, rhs, .. } => {
                let l = self.lvalue(lhs, Family::Variable);
                self.expr(rhs, Some(l));
            }
            Stmt::Null => {}
        }
    }

    fn lvalue(&mut self, lv: &LValue, f: Family) -> TVar {
        let l = self.cs.fresh();
        let base = var(&lv.base);
        match &lv.access {
            LvAccess::None => {
                if let Some(b) = base {
                    self.cs.equate(l, b);
                }
                self.family(base, f);
            }
            LvAccess::Select(s) => {
                let (w, min) = select_width(s);
                self.cs.fix(l, Concrete::bits(w));
                if let Some(b) = base {
                    self.cs.constraints.push(Constraint::MinWidth(b, min));
                }
                self.family(base, f);
            }
            LvAccess::Member(m) => {
                if let Some(mv) = var(m) {
                    self.cs.equate(l, mv);
                }
                let through_struct = lv
                    .base
                    .sym
                    .and_then(|s| self.symbols.get(s).target)
                    .is_some_and(|t| self.symbols.get(t).kind == SymKind::StructType);
                self.family(if through_struct { base } else { var(m) }, f);
            }
        }
        l
    }

    fn expr(&mut self, e: &Expr, dest: Option<TVar>) -> TVar {
        let node = self.node(dest);
        match e {
            Expr::Unary(op, inner) => match op {
                UnaryOp::Not | UnaryOp::Neg => {
                    self.expr(inner, Some(node));
                }
                _ => {
                    self.expr(inner, None);
                    self.cs.fix(node, Concrete::bits(1));
                }
            },
            Expr::Binary(lhs, op, rhs) => match op {
                BinOp::Add | BinOp::Sub => {
                    let a = self.primary(lhs, None);
                    let b = self.expr(rhs, None);
                    self.cs.equate(a, b);
                    self.cs.constraints.push(Constraint::Cond { antecedent: a, consequent: node });
                    self.cs.constraints.push(Constraint::Cond { antecedent: b, consequent: node });
                }
                BinOp::Mul | BinOp::And | BinOp::Or | BinOp::Xor => {
                    self.primary(lhs, Some(node));
                    self.expr(rhs, Some(node));
                }
                BinOp::LogAnd | BinOp::LogOr => {
                    self.primary(lhs, None);
                    self.expr(rhs, None);
                    self.cs.fix(node, Concrete::bits(1));
                }
                BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                    let a = self.primary(lhs, None);
                    let b = self.expr(rhs, None);
                    self.cs.equate(a, b);
                    self.cs.fix(node, Concrete::bits(1));
                }
                BinOp::Shl | BinOp::Shr => {
                    self.primary(lhs, Some(node));
                    self.expr(rhs, None);
                }
            },
            Expr::Ternary(c, a, b) => {
                self.primary(c, None);
                self.expr(a, Some(node));
                self.expr(b, Some(node));
            }
            Expr::Primary(p) => {
                self.primary(p, Some(node));
            }
        }
        node
    }

    fn primary(&mut self, p: &Primary, dest: Option<TVar>) -> TVar {
        let node = self.node(dest);
        match p {
            Primary::Ref(id, access) => match access {
                Access::None => {
                    if let Some(v) = var(id) {
                        self.cs.equate(node, v);
                    }
                }
                Access::Select(s) => {
                    let (w, min) = select_width(s);
                    self.cs.fix(node, Concrete::bits(w));
                    if let Some(v) = var(id) {
                        self.cs.constraints.push(Constraint::MinWidth(v, min));
                    }
                }
                Access::Member(m) => {
                    if let Some(v) = var(m) {
                        self.cs.equate(node, v);
                    }
                }
                Access::Call(args) => {
                    let func = id.sym.map(|s| self.symbols.get(s));
                    if let Some(r) = func.and_then(|f| f.ret) {
                        self.cs.equate(node, TVar(r));
                    }
                    let params = func.map(|f| f.params.clone()).unwrap_or_default();
                    for (i, a) in args.iter().enumerate() {
                        self.expr(a, params.get(i).map(|&p| TVar(p)));
                    }
                }
            },
            Primary::Number(_) => {}
            Primary::Sized(text) => {
                let signed = text.contains("'s") || text.contains("'S");
                if let Some(w) = literal_width(text) {
                    self.cs.fix(node, Concrete { family: None, width: w, signed });
                }
            }
            Primary::Paren(inner) => {
                self.expr(inner, Some(node));
            }
            Primary::Concat(parts) => {
                let parts = parts.iter().map(|e| self.expr(e, None)).collect();
                self.cs.constraints.push(Constraint::Sum { parts, result: node });
            }
        }
        node
    }
}

/// One variable per symbol (numbered like the symbols) plus one per
/// expression node that needs its own width.
pub fn generate_constraints(design: &Design, symbols: &SymbolTable) -> ConstraintSet {
    let mut g = Gen { cs: ConstraintSet::with_vars(symbols.len() as u32), symbols };
    g.design(design);
    g.cs
}

/// A design whose every declaration carries a concrete type.
#[derive(Debug, Clone)]
pub struct TypedDesign {
    pub design: Design,
    pub symbols: SymbolTable,
    pub env: TypeEnvironment,
}

impl TypedDesign {
    /// Final type of a data symbol.
    pub fn symbol_type(&self, s: SymId) -> Concrete {
        match self.env.resolve(TVar(s)) {
            Term::Concrete(c) => c,
            Term::Var(_) => Concrete { family: Some(Family::Net), width: 1, signed: false },
        }
    }
}

fn range_for(width: u32) -> Option<(u32, u32)> {
    (width > 1).then(|| (width - 1, 0))
}

fn decl_type(c: Concrete, net: Option<NetKind>) -> DataType {
    let net = net.unwrap_or(match c.family {
        Some(Family::Variable) => NetKind::Reg,
        _ => NetKind::Wire,
    });
    DataType::Explicit(DeclType { net, signed: c.signed, range: range_for(c.width) })
}

struct Writer<'a> {
    env: &'a TypeEnvironment,
    symbols: &'a SymbolTable,
}

impl Writer<'_> {
    fn concrete(&self, s: SymId) -> Concrete {
        match self.env.resolve(TVar(s)) {
            Term::Concrete(c) => c,
            Term::Var(_) => Concrete { family: Some(Family::Net), width: 1, signed: false },
        }
    }

    fn fill(&self, ty: &mut DataType, id: &Ident, net: Option<NetKind>) {
        if let (DataType::Hole(_), Some(s)) = (&ty, id.sym) {
            *ty = decl_type(self.concrete(s), net);
        }
    }

    fn item(&self, item: &mut Item) {
        match item {
            Item::Net(n) => self.fill(&mut n.ty, &n.name, None),
            Item::Function(f) => {
                if let (RetType::Hole(_), Some(s)) = (f.ret, f.name.sym) {
                    if let Some(r) = self.symbols.get(s).ret {
                        let c = self.concrete(r);
                        f.ret = RetType::Explicit { signed: c.signed, range: range_for(c.width) };
                    }
                }
                for a in &mut f.args {
                    self.fill(&mut a.ty, &a.name, Some(NetKind::Reg));
                }
            }
            Item::Typedef(t) => self.typedef(t),
            _ => {}
        }
    }

    fn typedef(&self, t: &mut StructTypedef) {
        for (ty, name) in &mut t.members {
            self.fill(ty, name, Some(NetKind::Logic));
        }
    }
}

/// Completes `env` with defaults and writes concrete types into every type
/// placeholder of the design.
pub fn apply_defaults(
    mut env: TypeEnvironment,
    mut design: Design,
    symbols: SymbolTable,
) -> Result<TypedDesign, TypeError> {
    complete(&mut env)?;
    let w = Writer { env: &env, symbols: &symbols };
    for d in &mut design.items {
        match d {
            Description::Module(m) => {
                for p in m.ports.iter_mut().flatten() {
                    w.fill(&mut p.ty, &p.name, None);
                }
                for item in &mut m.items {
                    w.item(item);
                }
            }
            Description::Typedef(t) => w.typedef(t),
            Description::Localparam(_) => {}
        }
    }
    Ok(TypedDesign { design, symbols, env })
}

/// Constraint generation, unification and defaulting in one step.
pub fn infer(design: Design, symbols: SymbolTable) -> Result<TypedDesign, TypeError> {
    let cs = generate_constraints(&design, &symbols);
    let env = unify(&cs)?;
    apply_defaults(env, design, symbols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_design;
    use crate::scope::check_scopes;
    use proptest::prelude::*;

    fn bound(src: &str) -> (Design, SymbolTable) {
        let mut d = Design::from_tree(&parse_design(src).unwrap(), Lowering::Source);
        let (table, violations) = check_scopes(&mut d);
        assert!(violations.is_empty(), "{violations:?}");
        (d, table)
    }

    fn sym(t: &SymbolTable, name: &str) -> TVar {
        TVar(t.symbols.iter().find(|s| s.name == name).unwrap().id)
    }

    const DECLS: &str = "module m; wire id_1; wire id_2; wire id_6;";

    fn hole_decls(d: &mut Design) {
        for m in d.modules_mut() {
            for item in &mut m.items {
                if let Item::Net(n) = item {
                    n.ty = DataType::Hole(0);
                }
            }
        }
    }

    #[test]
    fn addition_yields_three_bindings_one_operand_eq_two_conds() {
        let (mut d, t) = bound(&format!("{DECLS} assign id_6 = id_1 + id_2; endmodule"));
        hole_decls(&mut d);
        let cs = generate_constraints(&d, &t);
        let symbol = |x: &Term| matches!(x, Term::Var(v) if (v.0 as usize) < t.len());
        let (mut binding, mut operand, mut conds) = (0, 0, 0);
        for c in &cs.constraints {
            match c {
                Constraint::Eq(a, b) if symbol(a) || symbol(b) => binding += 1,
                Constraint::Eq(..) => operand += 1,
                Constraint::Cond { .. } => conds += 1,
                other => panic!("unexpected {other:?}"),
            }
        }
        assert_eq!((binding, operand, conds), (3, 1, 2));
        assert_eq!(cs.families, vec![(sym(&t, "id_6"), Family::Net)]);
    }

    #[test]
    fn declared_range_is_a_ground_fact() {
        let (d, t) = bound("module m; wire [7:0] w; endmodule");
        let cs = generate_constraints(&d, &t);
        let want = Concrete { family: Some(Family::Net), width: 8, signed: false };
        assert_eq!(cs.constraints, vec![Constraint::Eq(Term::Var(sym(&t, "w")), Term::Concrete(want))]);
    }

    #[test]
    fn addition_widens_by_one() {
        let (mut d, t) = bound(&format!("{DECLS} assign id_6 = id_1 + id_2; endmodule"));
        hole_decls(&mut d);
        let mut cs = generate_constraints(&d, &t);
        cs.fix(sym(&t, "id_1"), Concrete::bits(8));
        let env = unify(&cs).unwrap();
        assert_eq!(env.width(sym(&t, "id_2")), Some(8));
        assert_eq!(env.width(sym(&t, "id_6")), Some(9));
        // Known sum width also determines the operands.
        let mut cs = generate_constraints(&d, &t);
        cs.fix(sym(&t, "id_6"), Concrete::bits(5));
        assert_eq!(unify(&cs).unwrap().width(sym(&t, "id_1")), Some(4));
    }

    #[test]
    fn reflexive_and_conflicting_equalities() {
        let mut cs = ConstraintSet::with_vars(1);
        cs.equate(TVar(0), TVar(0));
        let env = unify(&cs).unwrap();
        assert_eq!(env.resolve(TVar(0)), Term::Var(TVar(0)));
        cs.fix(TVar(0), Concrete::bits(8));
        cs.fix(TVar(0), Concrete::bits(16));
        assert_eq!(unify(&cs).unwrap_err(), TypeError::WidthMismatch(8, 16));
    }

    #[test]
    fn wire_assigned_in_always_is_rejected() {
        for src in [
            "module m(output wire q); always @(*) q = 1; endmodule",
            "module m; wire q; initial q = 1; endmodule",
            "module m; wire q; assign q = 1; always @(*) q <= 0; endmodule",
        ] {
            let (d, t) = bound(src);
            let err = infer(d, t).unwrap_err();
            assert!(matches!(err, TypeError::FamilyConflict(_)), "{src}");
        }
        let (d, t) = bound("module m(output reg q); always @(*) q = 1; endmodule");
        assert!(infer(d, t).is_ok());
    }

    #[test]
    fn defaults_and_printing() {
        let (mut d, t) = bound("module m; wire a; reg b; wire c; always @(*) b = c + 1; endmodule");
        hole_decls(&mut d);
        let typed = infer(d, t).unwrap();
        let text = typed.design.to_text();
        assert!(text.contains("wire a;"), "{text}");
        assert!(text.contains("reg [1:0] b;"), "{text}");
        assert!(text.contains("wire c;"), "{text}");

        let (mut d, t) = bound("module m; wire v; endmodule");
        hole_decls(&mut d);
        let v = sym(&t, "v");
        let mut cs = generate_constraints(&d, &t);
        cs.fix(v, Concrete { family: Some(Family::Variable), width: 4, signed: true });
        let typed = apply_defaults(unify(&cs).unwrap(), d, t).unwrap();
        assert!(typed.design.to_text().contains("reg signed [3:0] v;"));
    }

    #[test]
    fn selects_bound_the_base_width() {
        let (mut d, t) = bound("module m; wire a; wire b; assign b = a[5:2]; endmodule");
        hole_decls(&mut d);
        let typed = infer(d, t).unwrap();
        assert_eq!(typed.symbol_type(sym(&typed.symbols, "a").0).width, 6);
        assert_eq!(typed.symbol_type(sym(&typed.symbols, "b").0).width, 4);
    }

    #[test]
    fn concatenation_sums_widths() {
        let (mut d, t) = bound("module m; wire [2:0] a; wire b; wire [4:0] c; assign c = {a, b}; endmodule");
        for m in d.modules_mut() {
            if let Item::Net(n) = &mut m.items[1] {
                n.ty = DataType::Hole(0);
            }
        }
        let typed = infer(d, t).unwrap();
        assert_eq!(typed.symbol_type(sym(&typed.symbols, "b").0).width, 2);
    }

    #[test]
    fn calls_and_instances_link_widths() {
        let src = "module c(input wire [3:0] a, output wire b); assign b = a[0]; endmodule \
                   module t; wire x; wire y; c u(.a(x), .b(y)); \
                   function f(input reg [6:0] p); f = p[0]; endfunction wire z = f(x); endmodule";
        let (mut d, t) = bound(src);
        for m in d.modules_mut().skip(1) {
            for item in &mut m.items {
                if let Item::Net(n) = item {
                    n.ty = DataType::Hole(0);
                }
            }
        }
        let err = infer(d, t).unwrap_err();
        assert!(matches!(err, TypeError::WidthMismatch(4, 7) | TypeError::WidthMismatch(7, 4)), "{err}");
    }

    fn sample_set() -> impl Strategy<Value = ConstraintSet> {
        let var = (0u32..6).prop_map(TVar);
        let width = prop_oneof![Just(1u32), Just(2), Just(4), Just(8)];
        let c = prop_oneof![
            (var.clone(), var.clone()).prop_map(|(a, b)| Constraint::Eq(Term::Var(a), Term::Var(b))),
            (var.clone(), width).prop_map(|(a, w)| Constraint::Eq(Term::Var(a), Term::Concrete(Concrete::bits(w)))),
            (var.clone(), var.clone())
                .prop_map(|(antecedent, consequent)| Constraint::Cond { antecedent, consequent }),
            (var.clone(), 1u32..10).prop_map(|(a, m)| Constraint::MinWidth(a, m)),
        ];
        proptest::collection::vec(c, 0..10)
            .prop_map(|constraints| ConstraintSet { constraints, families: vec![], num_vars: 6 })
    }

    proptest! {
        #[test]
        fn shuffling_preserves_the_solution(cs in sample_set(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut shuffled = cs.clone();
            shuffled.constraints.shuffle(&mut crate::skeleton::stream(seed));
            match (unify(&cs), unify(&shuffled)) {
                (Ok(a), Ok(b)) => for v in 0..6 {
                    prop_assert_eq!(a.width(TVar(v)), b.width(TVar(v)));
                },
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "{:?} vs {:?}", a.is_ok(), b.is_ok()),
            }
        }

        #[test]
        fn resolution_is_idempotent(cs in sample_set()) {
            if let Ok(mut env) = unify(&cs) {
                for v in 0..6 {
                    if let Term::Concrete(c) = env.resolve(TVar(v)) {
                        let mut again = cs.clone();
                        again.fix(TVar(v), c);
                        prop_assert!(unify(&again).is_ok());
                    }
                }
                if complete(&mut env).is_ok() {
                    let first: Vec<_> = (0..6).map(|v| env.resolve(TVar(v))).collect();
                    prop_assert!(complete(&mut env).is_ok());
                    let second: Vec<_> = (0..6).map(|v| env.resolve(TVar(v))).collect();
                    prop_assert_eq!(first, second);
                }
            }
        }
    }
}
