//! Symbols, name binding and scope checking.
//!
//! [`check_scopes`] binds every identifier of a named design to a symbol and
//! reports rule violations. The generator-side counterpart lives in
//! [`crate::resolve`].

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use crate::ast::*;
use crate::lexer::Pos;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum SymKind {
    Net,
    Variable,
    Parameter,
    Port,
    Function,
    Module,
    StructType,
    Instance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Symbol {
    pub id: SymId,
    pub name: String,
    pub kind: SymKind,
    pub dir: Option<Direction>,
    pub pos: Pos,
    /// Enclosing module, function or struct type.
    pub owner: Option<SymId>,
    /// Ports of a module, arguments of a function, members of a struct type.
    pub params: Vec<SymId>,
    /// Names reachable through an instance: ports and nets of a module,
    /// members of a struct type.
    pub members: Vec<SymId>,
    /// Module or struct type an instance refers to; `None` for gates.
    pub target: Option<SymId>,
    /// Return variable of a function.
    pub ret: Option<SymId>,
}

impl Symbol {
    pub fn new(id: SymId, name: String, kind: SymKind, pos: Pos) -> Symbol {
        Symbol {
            id,
            name,
            kind,
            dir: None,
            pos,
            owner: None,
            params: Vec::new(),
            members: Vec::new(),
            target: None,
            ret: None,
        }
    }

    /// Plain data signals that may appear as values.
    pub fn is_signal(&self) -> bool {
        matches!(self.kind, SymKind::Net | SymKind::Port | SymKind::Variable)
    }

    pub fn is_readable(&self) -> bool {
        self.is_signal() || self.kind == SymKind::Parameter
    }

    /// May be the target of an assignment (direction-wise).
    pub fn is_writable(&self) -> bool {
        match self.kind {
            SymKind::Net | SymKind::Variable => self.dir != Some(Direction::Input),
            SymKind::Port => self.dir != Some(Direction::Input),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolTable {
    pub symbols: Vec<Symbol>,
}

impl SymbolTable {
    pub fn get(&self, id: SymId) -> &Symbol {
        &self.symbols[id as usize]
    }

    pub fn get_mut(&mut self, id: SymId) -> &mut Symbol {
        &mut self.symbols[id as usize]
    }

    pub fn add(&mut self, name: String, kind: SymKind, pos: Pos) -> SymId {
        let id = self.symbols.len() as SymId;
        self.symbols.push(Symbol::new(id, name, kind, pos));
        id
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn modules(&self) -> impl Iterator<Item = &Symbol> {
        self.symbols.iter().filter(|s| s.kind == SymKind::Module)
    }

    pub fn by_name(&self, kind: SymKind, name: &str) -> Option<&Symbol> {
        self.symbols.iter().find(|s| s.kind == kind && s.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    Undeclared,
    Duplicate,
    WrongKind { found: SymKind },
    AssignToInput,
    SelfReference,
    NonConstant,
    UnknownPort,
    DuplicatePort,
    PortCount { expected: usize, found: usize },
    OutputNotWritable,
    ArgCount { expected: usize, found: usize },
    UnknownMember,
    NotNamespace,
    InstantiationCycle,
    ForeignAssign,
    Placeholder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub pos: Pos,
    pub name: String,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = &self.name;
        write!(f, "{}: ", self.pos)?;
        match &self.kind {
            ViolationKind::Undeclared => write!(f, "`{n}` is not declared"),
            ViolationKind::Duplicate => write!(f, "`{n}` is declared twice in the same scope"),
            ViolationKind::WrongKind { found } => write!(f, "`{n}` cannot be used here (it is a {found:?})"),
            ViolationKind::AssignToInput => write!(f, "input `{n}` is assigned"),
            ViolationKind::SelfReference => write!(f, "`{n}` refers to itself in its own initializer"),
            ViolationKind::NonConstant => write!(f, "`{n}` is not a constant"),
            ViolationKind::UnknownPort => write!(f, "no port named `{n}`"),
            ViolationKind::DuplicatePort => write!(f, "port `{n}` connected twice"),
            ViolationKind::PortCount { expected, found } => {
                write!(f, "`{n}` has {expected} ports but {found} connections")
            }
            ViolationKind::OutputNotWritable => write!(f, "output port `{n}` must connect to a writable net"),
            ViolationKind::ArgCount { expected, found } => {
                write!(f, "`{n}` takes {expected} arguments, {found} given")
            }
            ViolationKind::UnknownMember => write!(f, "no member named `{n}`"),
            ViolationKind::NotNamespace => write!(f, "`{n}` has no members"),
            ViolationKind::InstantiationCycle => write!(f, "module `{n}` instantiates itself transitively"),
            ViolationKind::ForeignAssign => write!(f, "function assigns non-local `{n}`"),
            ViolationKind::Placeholder => write!(f, "unresolved placeholder `{n}`"),
        }
    }
}

struct Binder {
    table: SymbolTable,
    violations: Vec<Violation>,
    global: HashMap<String, SymId>,
    /// Textual position of each non-module global declaration.
    global_order: HashMap<SymId, usize>,
    frames: Vec<HashMap<String, SymId>>,
    /// Textual index of the description being checked.
    position: usize,
    module: Option<SymId>,
    /// Return variable of the function whose body is being checked.
    function: Option<SymId>,
    constant: bool,
    declaring: Option<SymId>,
}

impl Binder {
    fn violation(&mut self, id: &Ident, kind: ViolationKind) {
        self.violations.push(Violation { pos: id.pos, name: id.text(), kind });
    }

    fn lookup(&self, name: &str) -> Option<SymId> {
        for frame in self.frames.iter().rev() {
            if let Some(&s) = frame.get(name) {
                return Some(s);
            }
        }
        let &s = self.global.get(name)?;
        let visible = self.table.get(s).kind == SymKind::Module
            || self.global_order.get(&s).is_some_and(|&i| i < self.position);
        visible.then_some(s)
    }

    /// Creates a symbol for a declaration without making it visible yet.
    fn new_symbol(&mut self, id: &mut Ident, kind: SymKind) -> SymId {
        if let Name::Hole(_) = id.name {
            self.violation(id, ViolationKind::Placeholder);
        }
        let s = self.table.add(id.text(), kind, id.pos);
        self.table.get_mut(s).owner = self.module;
        id.sym = Some(s);
        s
    }

    fn insert(&mut self, id: &Ident, s: SymId) {
        let name = self.table.get(s).name.clone();
        let frame = match self.frames.last_mut() {
            Some(f) => f,
            None => {
                self.global_order.insert(s, self.position);
                &mut self.global
            }
        };
        let fresh = match frame.entry(name) {
            Entry::Vacant(v) => {
                v.insert(s);
                true
            }
            Entry::Occupied(_) => false,
        };
        if !fresh {
            self.violation(id, ViolationKind::Duplicate);
        }
    }

    fn declare(&mut self, id: &mut Ident, kind: SymKind) -> SymId {
        let s = self.new_symbol(id, kind);
        self.insert(id, s);
        s
    }

    /// Binds a use. Unknown names are reported; the result is `None`.
    fn bind(&mut self, id: &mut Ident) -> Option<SymId> {
        if let Name::Hole(_) = id.name {
            self.violation(id, ViolationKind::Placeholder);
            return None;
        }
        let found = self.lookup(&id.text());
        match (found, self.declaring) {
            (None, Some(d)) if self.table.get(d).name == id.text() => {
                self.violation(id, ViolationKind::SelfReference);
                id.sym = Some(d);
                Some(d)
            }
            (None, _) => {
                self.violation(id, ViolationKind::Undeclared);
                None
            }
            (Some(s), _) => {
                id.sym = Some(s);
                Some(s)
            }
        }
    }

    fn expect_kind(&mut self, id: &Ident, s: SymId, ok: impl Fn(&Symbol) -> bool) -> bool {
        let sym = self.table.get(s);
        if ok(sym) {
            return true;
        }
        let found = sym.kind;
        self.violation(id, ViolationKind::WrongKind { found });
        false
    }

    fn member(&mut self, base: SymId, base_id: &Ident, m: &mut Ident) -> Option<SymId> {
        let Some(target) = self.table.get(base).target.filter(|_| self.table.get(base).kind == SymKind::Instance)
        else {
            self.violation(base_id, ViolationKind::NotNamespace);
            return None;
        };
        let name = m.text();
        let found = self.table.get(target).members.iter().copied().find(|&x| self.table.get(x).name == name);
        match found {
            Some(x) => {
                m.sym = Some(x);
                Some(x)
            }
            None => {
                self.violation(m, ViolationKind::UnknownMember);
                None
            }
        }
    }

    fn design(&mut self, design: &mut Design) {
        let mut module_syms = vec![None; design.items.len()];
        for (i, d) in design.items.iter_mut().enumerate() {
            if let Description::Module(m) = d {
                self.position = i;
                let s = self.declare(&mut m.name, SymKind::Module);
                self.table.get_mut(s).owner = None;
                module_syms[i] = Some(s);
            }
        }
        for (i, d) in design.items.iter_mut().enumerate() {
            self.position = i;
            match d {
                Description::Localparam(l) => self.localparam(l),
                Description::Typedef(t) => self.typedef(t),
                Description::Module(_) => {}
            }
        }
        for i in self.module_order(design, &module_syms) {
            let Description::Module(m) = &mut design.items[i] else { unreachable!() };
            self.position = i;
            self.module(m, module_syms[i].unwrap());
        }
    }

    /// Callees before callers; modules on a cycle are reported and appended
    /// in textual order.
    fn module_order(&mut self, design: &Design, module_syms: &[Option<SymId>]) -> Vec<usize> {
        let index_of: HashMap<SymId, usize> =
            module_syms.iter().enumerate().filter_map(|(i, s)| s.map(|s| (s, i))).collect();
        let mut deps: Vec<Vec<usize>> = vec![Vec::new(); design.items.len()];
        for (i, d) in design.items.iter().enumerate() {
            let Description::Module(m) = d else { continue };
            for item in &m.items {
                if let Item::Instance(inst) = item {
                    if let Some(&s) = self.global.get(&inst.module.text()) {
                        if let Some(&j) = index_of.get(&s) {
                            deps[i].push(j);
                        }
                    }
                }
            }
        }
        let mut done = vec![false; design.items.len()];
        let mut order = Vec::new();
        loop {
            let next = (0..design.items.len())
                .find(|&i| module_syms[i].is_some() && !done[i] && deps[i].iter().all(|&j| done[j]));
            match next {
                Some(i) => {
                    done[i] = true;
                    order.push(i);
                }
                None => break,
            }
        }
        for (i, d) in design.items.iter().enumerate() {
            if let (Description::Module(m), false) = (d, done[i] || module_syms[i].is_none()) {
                self.violation(&m.name, ViolationKind::InstantiationCycle);
                order.push(i);
            }
        }
        order
    }

    fn module(&mut self, m: &mut Module, ms: SymId) {
        self.module = Some(ms);
        self.frames.push(HashMap::new());
        for port in m.ports.iter_mut().flatten() {
            let s = self.declare(&mut port.name, SymKind::Port);
            self.table.get_mut(s).dir = Some(port.dir);
            let sym = self.table.get_mut(ms);
            sym.params.push(s);
            sym.members.push(s);
        }
        for item in &mut m.items {
            self.item(item, ms);
        }
        self.frames.pop();
        self.module = None;
    }

    fn localparam(&mut self, l: &mut Localparam) {
        let s = self.new_symbol(&mut l.name, SymKind::Parameter);
        self.declaring = Some(s);
        self.constant = true;
        self.expr(&mut l.value);
        self.constant = false;
        self.declaring = None;
        self.insert(&l.name, s);
    }

    fn typedef(&mut self, t: &mut StructTypedef) {
        let ts = self.new_symbol(&mut t.name, SymKind::StructType);
        self.frames.push(HashMap::new());
        for (_, name) in &mut t.members {
            let s = self.declare(name, SymKind::Variable);
            let sym = self.table.get_mut(s);
            sym.owner = Some(ts);
            let ty = self.table.get_mut(ts);
            ty.params.push(s);
            ty.members.push(s);
        }
        self.frames.pop();
        self.insert(&t.name, ts);
    }

    fn item(&mut self, item: &mut Item, ms: SymId) {
        match item {
            Item::Net(n) => {
                let s = self.new_symbol(&mut n.name, SymKind::Net);
                if let Some(init) = &mut n.init {
                    self.declaring = Some(s);
                    self.expr(init);
                    self.declaring = None;
                }
                self.insert(&n.name, s);
                self.table.get_mut(ms).members.push(s);
            }
            Item::Localparam(l) => self.localparam(l),
            Item::Assign(a) => {
                self.lvalue(&mut a.lhs);
                self.expr(&mut a.rhs);
            }
            Item::Always(a) => {
                if let Event::List(terms) = &mut a.event {
                    for t in terms {
                        if let Some(s) = self.bind(&mut t.signal) {
                            self.expect_kind(&t.signal, s, Symbol::is_signal);
                        }
                    }
                }
                self.stmt(&mut a.body);
            }
            Item::Initial(s) => self.stmt(s),
            Item::Function(f) => self.function(f),
            Item::Gate(g) => {
                self.declare(&mut g.name, SymKind::Instance);
                let outputs = g.kind.outputs(g.terms.len());
                for (i, t) in g.terms.iter_mut().enumerate() {
                    let Some(s) = self.bind(t) else { continue };
                    if i < outputs {
                        if self.expect_kind(t, s, |x| matches!(x.kind, SymKind::Net | SymKind::Port))
                            && !self.table.get(s).is_writable()
                        {
                            self.violation(t, ViolationKind::AssignToInput);
                        }
                    } else {
                        self.expect_kind(t, s, |x| matches!(x.kind, SymKind::Net | SymKind::Port));
                    }
                }
            }
            Item::Instance(inst) => self.instance(inst),
            Item::StructVar(v) => {
                let ty = self.bind(&mut v.ty);
                let ty = ty.filter(|&t| self.expect_kind(&v.ty, t, |x| x.kind == SymKind::StructType));
                let s = self.declare(&mut v.name, SymKind::Instance);
                self.table.get_mut(s).target = ty;
            }
            Item::Typedef(t) => self.typedef(t),
        }
    }

    fn function(&mut self, f: &mut Function) {
        let fs = self.new_symbol(&mut f.name, SymKind::Function);
        self.frames.push(HashMap::new());
        let ret = self.table.add(f.name.text(), SymKind::Variable, f.name.pos);
        self.table.get_mut(ret).owner = Some(fs);
        self.frames.last_mut().unwrap().insert(f.name.text(), ret);
        self.table.get_mut(fs).ret = Some(ret);
        for a in &mut f.args {
            let s = self.declare(&mut a.name, SymKind::Variable);
            let sym = self.table.get_mut(s);
            sym.dir = Some(Direction::Input);
            sym.owner = Some(fs);
            self.table.get_mut(fs).params.push(s);
        }
        self.function = Some(ret);
        for s in &mut f.body {
            self.stmt(s);
        }
        self.function = None;
        self.frames.pop();
        self.insert(&f.name, fs);
    }

    fn instance(&mut self, inst: &mut Instance) {
        let module = self.bind(&mut inst.module);
        let module = module.filter(|&m| self.expect_kind(&inst.module, m, |x| x.kind == SymKind::Module));
        let s = self.declare(&mut inst.name, SymKind::Instance);
        self.table.get_mut(s).target = module;
        let ports = module.map(|m| self.table.get(m).params.clone()).unwrap_or_default();
        match &mut inst.conns {
            Conns::Named(conns) => {
                let mut seen = Vec::new();
                for (port, e) in conns {
                    let name = port.text();
                    let found = ports.iter().copied().find(|&p| self.table.get(p).name == name);
                    match found {
                        Some(p) if seen.contains(&p) => {
                            self.violation(port, ViolationKind::DuplicatePort);
                            self.expr(e);
                        }
                        Some(p) => {
                            seen.push(p);
                            port.sym = Some(p);
                            self.connection(p, e);
                        }
                        None => {
                            if module.is_some() {
                                self.violation(port, ViolationKind::UnknownPort);
                            }
                            self.expr(e);
                        }
                    }
                }
            }
            Conns::Positional(conns) => {
                if module.is_some() && !conns.is_empty() && conns.len() != ports.len() {
                    let kind = ViolationKind::PortCount { expected: ports.len(), found: conns.len() };
                    self.violation(&inst.module, kind);
                }
                for (i, e) in conns.iter_mut().enumerate() {
                    match ports.get(i) {
                        Some(&p) => self.connection(p, e),
                        None => self.expr(e),
                    }
                }
            }
        }
    }

    fn connection(&mut self, port: SymId, e: &mut Expr) {
        if self.table.get(port).dir == Some(Direction::Input) {
            self.expr(e);
            return;
        }
        let port_name = self.table.get(port).name.clone();
        if let Expr::Primary(Primary::Ref(id, Access::None)) = e {
            if let Some(s) = self.bind(id) {
                let sym = self.table.get(s);
                if !(matches!(sym.kind, SymKind::Net | SymKind::Port) && sym.is_writable()) {
                    self.violations.push(Violation {
                        pos: id.pos,
                        name: port_name,
                        kind: ViolationKind::OutputNotWritable,
                    });
                }
            }
        } else {
            self.violations.push(Violation {
                pos: Pos::default(),
                name: port_name,
                kind: ViolationKind::OutputNotWritable,
            });
            self.expr(e);
        }
    }

    fn block(&mut self, stmts: &mut [Stmt]) {
        self.frames.push(HashMap::new());
        for s in stmts {
            self.stmt(s);
        }
        self.frames.pop();
    }

    fn stmt(&mut self, s: &mut Stmt) {
        match s {
            Stmt::Block(v) => self.block(v),
            Stmt::If { cond, then, els } => {
                self.expr(cond);
                self.block(then);
                if let Some(e) = els {
                    self.block(e);
                }
            }
            Stmt::Assign { lhs, rhs, .. } => {
                self.lvalue(lhs);
                self.expr(rhs);
            }
            Stmt::Null => {}
        }
    }

    fn lvalue(&mut self, lv: &mut LValue) {
        let Some(s) = self.bind(&mut lv.base) else { return };
        if let Some(ret) = self.function {
            if s != ret || matches!(lv.access, LvAccess::Member(_)) {
                self.violation(&lv.base, ViolationKind::ForeignAssign);
                return;
            }
        }
        let target = match &mut lv.access {
            LvAccess::Member(m) => match self.member(s, &lv.base, m) {
                Some(x) => (x, m.clone()),
                None => return,
            },
            _ => (s, lv.base.clone()),
        };
        let (x, id) = target;
        if self.expect_kind(&id, x, |y| matches!(y.kind, SymKind::Net | SymKind::Port | SymKind::Variable))
            && !self.table.get(x).is_writable()
        {
            self.violation(&id, ViolationKind::AssignToInput);
        }
    }

    fn expr(&mut self, e: &mut Expr) {
        match e {
            Expr::Unary(_, inner) => self.expr(inner),
            Expr::Binary(p, _, rhs) => {
                self.primary(p);
                self.expr(rhs);
            }
            Expr::Ternary(c, a, b) => {
                self.primary(c);
                self.expr(a);
                self.expr(b);
            }
            Expr::Primary(p) => self.primary(p),
        }
    }

    fn primary(&mut self, p: &mut Primary) {
        match p {
            Primary::Ref(id, access) => {
                let Some(s) = self.bind(id) else {
                    if let Access::Call(args) = access {
                        args.iter_mut().for_each(|a| self.expr(a));
                    }
                    return;
                };
                match access {
                    Access::None | Access::Select(_) => {
                        if self.expect_kind(id, s, Symbol::is_readable)
                            && self.constant
                            && self.table.get(s).kind != SymKind::Parameter
                        {
                            self.violation(id, ViolationKind::NonConstant);
                        }
                    }
                    Access::Member(m) => {
                        if self.constant {
                            self.violation(id, ViolationKind::NonConstant);
                        }
                        if let Some(x) = self.member(s, id, m) {
                            self.expect_kind(m, x, Symbol::is_readable);
                        }
                    }
                    Access::Call(args) => {
                        if self.constant {
                            self.violation(id, ViolationKind::NonConstant);
                        }
                        if self.expect_kind(id, s, |x| x.kind == SymKind::Function) {
                            let expected = self.table.get(s).params.len();
                            if expected != args.len() {
                                let kind = ViolationKind::ArgCount { expected, found: args.len() };
                                self.violation(id, kind);
                            }
                        }
                        args.iter_mut().for_each(|a| self.expr(a));
                    }
                }
            }
            Primary::Number(_) | Primary::Sized(_) => {}
            Primary::Paren(inner) => self.expr(inner),
            Primary::Concat(parts) => parts.iter_mut().for_each(|a| self.expr(a)),
        }
    }
}

/// Binds every identifier of `design` and collects scope violations.
pub fn check_scopes(design: &mut Design) -> (SymbolTable, Vec<Violation>) {
    let mut b = Binder {
        table: SymbolTable::default(),
        violations: Vec::new(),
        global: HashMap::new(),
        global_order: HashMap::new(),
        frames: Vec::new(),
        position: 0,
        module: None,
        function: None,
        constant: false,
        declaring: None,
    };
    b.design(design);
    (b.table, b.violations)
}

/// Modules in an order where every module follows the modules it
/// instantiates, or `None` if the instantiation graph has a cycle.
pub fn instantiation_order(design: &Design) -> Option<Vec<String>> {
    let names: Vec<String> = design.modules().map(|m| m.name.text()).collect();
    let deps: Vec<Vec<usize>> = design
        .modules()
        .map(|m| {
            m.items
                .iter()
                .filter_map(|i| match i {
                    Item::Instance(inst) => names.iter().position(|n| *n == inst.module.text()),
                    _ => None,
                })
                .collect()
        })
        .collect();
    let mut indegree: Vec<usize> = deps.iter().map(Vec::len).collect();
    let mut ready: Vec<usize> = (0..names.len()).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::new();
    while let Some(i) = ready.pop() {
        order.push(names[i].clone());
        for (j, d) in deps.iter().enumerate() {
            for &k in d {
                if k == i {
                    indegree[j] -= 1;
                    if indegree[j] == 0 {
                        ready.push(j);
                    }
                }
            }
        }
    }
    (order.len() == names.len()).then_some(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_design;

    fn violations(src: &str) -> Vec<Violation> {
        let mut d = Design::from_tree(&parse_design(src).unwrap(), Lowering::Source);
        check_scopes(&mut d).1
    }

    fn kinds(src: &str) -> Vec<ViolationKind> {
        violations(src).into_iter().map(|v| v.kind).collect()
    }

    #[test]
    fn clean_design() {
        let src = "localparam W = 3;
            module leaf(input wire [7:0] x, output wire [7:0] y); assign y = x; endmodule
            module top(input wire [7:0] a, output wire [7:0] b);
              wire [7:0] t;
              leaf u0(.x(a), .y(t));
              leaf u1(t, b);
              function [7:0] f(input reg [7:0] p); f = p + W; endfunction
              wire [7:0] z = f(u0.y);
            endmodule";
        assert_eq!(violations(src), vec![]);
    }

    #[test]
    fn undeclared_name_reports_position() {
        let v = violations("module m;\n  assign q = 1;\nendmodule");
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::Undeclared);
        assert_eq!(v[0].pos, Pos { line: 2, col: 10 });
    }

    #[test]
    fn self_reference_in_localparam() {
        assert_eq!(kinds("module m; localparam id_1 = id_1; endmodule"), vec![ViolationKind::SelfReference]);
        assert_eq!(kinds("module m; wire w = w; endmodule"), vec![ViolationKind::SelfReference]);
    }

    #[test]
    fn direction_and_kind_errors() {
        assert_eq!(
            kinds("module m(input wire a); assign a = 1; endmodule"),
            vec![ViolationKind::AssignToInput]
        );
        assert_eq!(
            kinds("module m; localparam p = 1; assign p = 1; endmodule"),
            vec![ViolationKind::WrongKind { found: SymKind::Parameter }]
        );
        assert_eq!(
            kinds("module m; wire w; localparam p = w; endmodule"),
            vec![ViolationKind::NonConstant]
        );
        assert_eq!(
            kinds("module m; wire w; wire w; endmodule"),
            vec![ViolationKind::Duplicate]
        );
    }

    #[test]
    fn later_declaration_is_not_visible() {
        assert_eq!(kinds("module m; assign w = 1; wire w; endmodule"), vec![ViolationKind::Undeclared]);
    }

    #[test]
    fn connections_and_calls() {
        let lib = "module c(input wire a, output wire b); assign b = a; endmodule ";
        assert_eq!(
            kinds(&format!("{lib} module t; wire x; c u(x); endmodule")),
            vec![ViolationKind::PortCount { expected: 2, found: 1 }]
        );
        assert_eq!(
            kinds(&format!("{lib} module t; wire x; c u(.a(x), .q(x)); endmodule")),
            vec![ViolationKind::UnknownPort]
        );
        assert_eq!(
            kinds(&format!("{lib} module t; wire x; c u(.a(x), .b(x + 1)); endmodule")),
            vec![ViolationKind::OutputNotWritable]
        );
        assert_eq!(
            kinds("module t; function f(input reg a); f = a; endfunction wire w = f(1, 2); endmodule"),
            vec![ViolationKind::ArgCount { expected: 1, found: 2 }]
        );
        assert_eq!(
            kinds("module t; wire w; function f(input reg a); w = a; endfunction endmodule"),
            vec![ViolationKind::ForeignAssign]
        );
    }

    #[test]
    fn forward_references_and_cycles() {
        assert_eq!(kinds("module a; b u(); endmodule module b; wire w; endmodule"), vec![]);
        assert_eq!(
            kinds("module a; b u(); endmodule module b; a v(); endmodule"),
            vec![ViolationKind::InstantiationCycle, ViolationKind::InstantiationCycle]
        );
        let d = Design::from_tree(
            &parse_design("module a; b u(); endmodule module b; endmodule").unwrap(),
            Lowering::Source,
        );
        assert_eq!(instantiation_order(&d), Some(vec!["b".to_string(), "a".to_string()]));
    }

    #[test]
    fn hierarchical_member_access() {
        let src = "module c; wire w; endmodule module t; c u(); assign u.w = 1; wire r = u.w; endmodule";
        assert_eq!(kinds(src), vec![]);
        let src = "module c; wire w; endmodule module t; c u(); wire r = u.z; endmodule";
        assert_eq!(kinds(src), vec![ViolationKind::UnknownMember]);
    }
}
