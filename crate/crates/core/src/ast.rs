//! Typed syntax tree for mini-Verilog designs.
//!
//! Built from a [`ParseTree`] and printed back to tokens; printing and
//! re-parsing yields the same tree shape. Identifiers and type positions may
//! be placeholders (`ID_n`, `TYPE_n`) while a design moves through the
//! generation pipeline.

use std::fmt;

use crate::grammar::Rule;
use crate::lexer::{Pos, TokenKind};
use crate::parser::{render_tokens, Node, ParseTree};

pub type SymId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Name {
    Hole(u32),
    Named(String),
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Name::Hole(n) => write!(f, "ID_{n}"),
            Name::Named(s) => f.write_str(s),
        }
    }
}

/// An identifier occurrence. `sym` is filled in by name binding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ident {
    pub name: Name,
    pub sym: Option<SymId>,
    pub pos: Pos,
}

impl Ident {
    pub fn named(name: impl Into<String>) -> Ident {
        Ident { name: Name::Named(name.into()), sym: None, pos: Pos::default() }
    }

    pub fn text(&self) -> String {
        self.name.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetKind {
    Wire,
    Reg,
    Logic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Input,
    Output,
    Inout,
}

/// Explicit `net-kind [signed] [range]` type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DeclType {
    pub net: NetKind,
    pub signed: bool,
    pub range: Option<(u32, u32)>,
}

impl DeclType {
    pub fn width(&self) -> u32 {
        match self.range {
            Some((a, b)) => a.abs_diff(b) + 1,
            None => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataType {
    Hole(u32),
    Explicit(DeclType),
}

/// Function return type: `[signed] [range]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetType {
    Hole(u32),
    Explicit { signed: bool, range: Option<(u32, u32)> },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Design {
    pub items: Vec<Description>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Description {
    Module(Module),
    Localparam(Localparam),
    Typedef(StructTypedef),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Module {
    pub name: Ident,
    pub ports: Option<Vec<Port>>,
    pub items: Vec<Item>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Port {
    pub dir: Direction,
    pub ty: DataType,
    pub name: Ident,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Item {
    Net(NetDecl),
    Localparam(Localparam),
    Assign(ContAssign),
    Always(Always),
    Initial(Stmt),
    Function(Function),
    Gate(Gate),
    Instance(Instance),
    StructVar(StructVar),
    Typedef(StructTypedef),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetDecl {
    pub ty: DataType,
    pub name: Ident,
    pub init: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Localparam {
    pub name: Ident,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContAssign {
    pub lhs: LValue,
    pub rhs: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Always {
    pub event: Event,
    pub body: Stmt,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    /// `@*`
    Star,
    /// `@(*)`
    ParenStar,
    List(Vec<EventTerm>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Pos,
    Neg,
    Any,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventTerm {
    /// Separator preceding this term: `or` when true, `,` otherwise.
    pub or_sep: bool,
    pub edge: Edge,
    pub signal: Ident,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Block(Vec<Stmt>),
    If { cond: Expr, then: Vec<Stmt>, els: Option<Vec<Stmt>> },
    Assign { lhs: LValue, nonblocking: bool, rhs: Expr },
    Null,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LValue {
    pub base: Ident,
    pub access: LvAccess,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LvAccess {
    None,
    Member(Ident),
    Select(Select),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Select {
    pub hi: u32,
    pub lo: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub ret: RetType,
    pub name: Ident,
    pub args: Vec<FuncArg>,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuncArg {
    pub ty: DataType,
    pub name: Ident,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    And,
    Or,
    Xor,
    Nand,
    Nor,
    Xnor,
    Not,
    Buf,
}

impl GateKind {
    pub const ALL: [GateKind; 8] = [
        GateKind::And,
        GateKind::Or,
        GateKind::Xor,
        GateKind::Nand,
        GateKind::Nor,
        GateKind::Xnor,
        GateKind::Not,
        GateKind::Buf,
    ];

    /// Number of leading output terminals for `n` terminals.
    pub fn outputs(self, n: usize) -> usize {
        match self {
            GateKind::Not | GateKind::Buf => n.saturating_sub(1).max(1),
            _ => 1,
        }
    }

    fn token(self) -> (TokenKind, &'static str) {
        match self {
            GateKind::And => (TokenKind::And, "and"),
            GateKind::Or => (TokenKind::Or, "or"),
            GateKind::Xor => (TokenKind::Xor, "xor"),
            GateKind::Nand => (TokenKind::Nand, "nand"),
            GateKind::Nor => (TokenKind::Nor, "nor"),
            GateKind::Xnor => (TokenKind::Xnor, "xnor"),
            GateKind::Not => (TokenKind::Not, "not"),
            GateKind::Buf => (TokenKind::Buf, "buf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gate {
    pub kind: GateKind,
    pub name: Ident,
    pub terms: Vec<Ident>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub module: Ident,
    pub name: Ident,
    pub conns: Conns,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Conns {
    Named(Vec<(Ident, Expr)>),
    Positional(Vec<Expr>),
}

impl Conns {
    pub fn len(&self) -> usize {
        match self {
            Conns::Named(v) => v.len(),
            Conns::Positional(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructVar {
    pub ty: Ident,
    pub name: Ident,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructTypedef {
    pub members: Vec<(DataType, Ident)>,
    pub name: Ident,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    And,
    Or,
    Xor,
    LogAnd,
    LogOr,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Shl,
    Shr,
}

impl BinOp {
    pub const ALL: [BinOp; 16] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::And,
        BinOp::Or,
        BinOp::Xor,
        BinOp::LogAnd,
        BinOp::LogOr,
        BinOp::Eq,
        BinOp::Ne,
        BinOp::Lt,
        BinOp::Le,
        BinOp::Gt,
        BinOp::Ge,
        BinOp::Shl,
        BinOp::Shr,
    ];

    fn token(self) -> (TokenKind, &'static str) {
        use TokenKind as T;
        match self {
            BinOp::Add => (T::Plus, "+"),
            BinOp::Sub => (T::Minus, "-"),
            BinOp::Mul => (T::Star, "*"),
            BinOp::And => (T::Amp, "&"),
            BinOp::Or => (T::Pipe, "|"),
            BinOp::Xor => (T::Caret, "^"),
            BinOp::LogAnd => (T::AmpAmp, "&&"),
            BinOp::LogOr => (T::PipePipe, "||"),
            BinOp::Eq => (T::EqEq, "=="),
            BinOp::Ne => (T::NotEq, "!="),
            BinOp::Lt => (T::Lt, "<"),
            BinOp::Le => (T::LtEq, "<="),
            BinOp::Gt => (T::Gt, ">"),
            BinOp::Ge => (T::GtEq, ">="),
            BinOp::Shl => (T::Shl, "<<"),
            BinOp::Shr => (T::Shr, ">>"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Not,
    LogNot,
    Neg,
    RedAnd,
    RedOr,
    RedXor,
}

impl UnaryOp {
    fn token(self) -> (TokenKind, &'static str) {
        use TokenKind as T;
        match self {
            UnaryOp::Not => (T::Tilde, "~"),
            UnaryOp::LogNot => (T::Bang, "!"),
            UnaryOp::Neg => (T::Minus, "-"),
            UnaryOp::RedAnd => (T::Amp, "&"),
            UnaryOp::RedOr => (T::Pipe, "|"),
            UnaryOp::RedXor => (T::Caret, "^"),
        }
    }
}

/// Expressions are right-nested: the left operand of a binary or ternary
/// operator is always a [`Primary`], matching the grammar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Unary(UnaryOp, Box<Expr>),
    Binary(Primary, BinOp, Box<Expr>),
    Ternary(Primary, Box<Expr>, Box<Expr>),
    Primary(Primary),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Primary {
    Ref(Ident, Access),
    Number(String),
    Sized(String),
    Paren(Box<Expr>),
    Concat(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Access {
    None,
    Member(Ident),
    Select(Select),
    Call(Vec<Expr>),
}

impl Expr {
    pub fn ident(id: Ident) -> Expr {
        Expr::Primary(Primary::Ref(id, Access::None))
    }

    pub fn sized(width: u32, value: u64) -> Expr {
        Expr::Primary(Primary::Sized(format!("{width}'d{value}")))
    }

    /// The bare identifier if this expression is nothing more than a name.
    pub fn as_ident(&self) -> Option<&Ident> {
        match self {
            Expr::Primary(Primary::Ref(id, Access::None)) => Some(id),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// ParseTree -> AST

/// How placeholders are recognised while lowering a tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lowering {
    /// Ordinary source: every name is concrete.
    Source,
    /// Skeletons: identifiers `ID_n` become holes and type positions are
    /// replaced by `TYPE` holes regardless of the sampled subtree.
    Skeleton,
}

struct Lower {
    mode: Lowering,
    next_type_hole: u32,
}

fn parts(node: &Node) -> (Rule, &[Node]) {
    match node {
        Node::Rule { rule, children } => (Rule::from_id(*rule).expect("rule id"), children),
        Node::Leaf(t) => panic!("expected rule node, found token {:?}", t.text),
    }
}

fn leaf_text(node: &Node) -> &str {
    &node.token().expect("token").text
}

fn number(node: &Node) -> u32 {
    let digits: String = leaf_text(node).chars().filter(|c| *c != '_').collect();
    digits.parse().unwrap_or(u32::MAX)
}

impl Lower {
    fn ident(&self, node: &Node) -> Ident {
        let tok = node.token().expect("identifier");
        let name = match self.mode {
            Lowering::Skeleton => tok
                .text
                .strip_prefix("ID_")
                .and_then(|n| n.parse().ok())
                .map(Name::Hole)
                .unwrap_or_else(|| Name::Named(tok.text.clone())),
            Lowering::Source => Name::Named(tok.text.clone()),
        };
        Ident { name, sym: None, pos: tok.pos }
    }

    fn type_hole(&mut self) -> u32 {
        let n = self.next_type_hole;
        self.next_type_hole += 1;
        n
    }

    fn list<'a>(node: &'a Node, cons: Rule, out: &mut Vec<&'a Node>) {
        let mut cur = node;
        loop {
            let (rule, kids) = parts(cur);
            if rule != cons {
                return;
            }
            out.push(&kids[0]);
            cur = &kids[1];
        }
    }

    fn design(&mut self, root: &Node) -> Design {
        let (_, kids) = parts(root);
        let mut descs = Vec::new();
        Self::list(&kids[0], Rule::DescListCons, &mut descs);
        let items = descs
            .into_iter()
            .map(|d| {
                let (rule, k) = parts(d);
                match rule {
                    Rule::DescModule => Description::Module(self.module(&k[0])),
                    Rule::DescLocalparam => Description::Localparam(self.localparam(&k[0])),
                    Rule::DescTypedef => Description::Typedef(self.typedef(&k[0])),
                    r => unreachable!("{r:?}"),
                }
            })
            .collect();
        Design { items }
    }

    fn module(&mut self, node: &Node) -> Module {
        let (_, k) = parts(node);
        let name = self.ident(&k[1]);
        let ports = match parts(&k[2]) {
            (Rule::ModulePortsList, pk) => {
                let mut v = Vec::new();
                let (rule, lk) = parts(&pk[1]);
                if rule == Rule::PortListCons {
                    v.push(self.port(&lk[0]));
                    let mut tails = Vec::new();
                    Self::list_tail(&lk[1], Rule::PortListTailCons, 1, &mut tails);
                    for t in tails {
                        v.push(self.port(t));
                    }
                }
                Some(v)
            }
            _ => None,
        };
        let mut item_nodes = Vec::new();
        Self::list(&k[4], Rule::ModuleItemsCons, &mut item_nodes);
        let items = item_nodes.into_iter().map(|n| self.item(n)).collect();
        Module { name, ports, items }
    }

    /// Collects `kids[elem]` along a `Tail ::= sep Elem Tail` chain.
    fn list_tail<'a>(node: &'a Node, cons: Rule, elem: usize, out: &mut Vec<&'a Node>) {
        let mut cur = node;
        loop {
            let (rule, kids) = parts(cur);
            if rule != cons {
                return;
            }
            out.push(&kids[elem]);
            cur = kids.last().unwrap();
        }
    }

    fn port(&mut self, node: &Node) -> Port {
        let (_, k) = parts(node);
        let dir = match parts(&k[0]).0 {
            Rule::DirInput => Direction::Input,
            Rule::DirOutput => Direction::Output,
            _ => Direction::Inout,
        };
        Port { dir, ty: self.data_type(&k[1]), name: self.ident(&k[2]) }
    }

    fn signing(node: &Node) -> bool {
        parts(node).0 == Rule::SigningSigned
    }

    fn range(node: &Node) -> Option<(u32, u32)> {
        match parts(node) {
            (Rule::RangeSome, k) => Some((number(&k[1]), number(&k[3]))),
            _ => None,
        }
    }

    fn data_type(&mut self, node: &Node) -> DataType {
        if self.mode == Lowering::Skeleton {
            return DataType::Hole(self.type_hole());
        }
        let (_, k) = parts(node);
        let net = match parts(&k[0]).0 {
            Rule::NetWire => NetKind::Wire,
            Rule::NetReg => NetKind::Reg,
            _ => NetKind::Logic,
        };
        DataType::Explicit(DeclType { net, signed: Self::signing(&k[1]), range: Self::range(&k[2]) })
    }

    fn item(&mut self, node: &Node) -> Item {
        let (rule, k) = parts(node);
        match rule {
            Rule::ItemNet => {
                let (_, n) = parts(&k[0]);
                let ty = self.data_type(&n[0]);
                let name = self.ident(&n[1]);
                let init = match parts(&n[2]) {
                    (Rule::DeclInitSome, ik) => Some(self.expr(&ik[1])),
                    _ => None,
                };
                Item::Net(NetDecl { ty, name, init })
            }
            Rule::ItemLocalparam => Item::Localparam(self.localparam(&k[0])),
            Rule::ItemAssign => {
                let (_, a) = parts(&k[0]);
                Item::Assign(ContAssign { lhs: self.lvalue(&a[1]), rhs: self.expr(&a[3]) })
            }
            Rule::ItemAlways => {
                let (_, a) = parts(&k[0]);
                let (_, ek) = parts(&a[1]);
                let event = match parts(&ek[1]) {
                    (Rule::EventBodyStar, _) => Event::Star,
                    (_, bk) => match parts(&bk[1]) {
                        (Rule::EventInnerStar, _) => Event::ParenStar,
                        (_, lk) => {
                            let mut terms = vec![self.event_term(&lk[0], false)];
                            let mut cur = &lk[1];
                            loop {
                                let (r, tk) = parts(cur);
                                match r {
                                    Rule::EventTailOr | Rule::EventTailComma => {
                                        terms.push(self.event_term(&tk[1], r == Rule::EventTailOr));
                                        cur = &tk[2];
                                    }
                                    _ => break,
                                }
                            }
                            Event::List(terms)
                        }
                    },
                };
                Item::Always(Always { event, body: self.stmt(&a[2]) })
            }
            Rule::ItemInitial => {
                let (_, a) = parts(&k[0]);
                Item::Initial(self.stmt(&a[1]))
            }
            Rule::ItemFunction => {
                let (_, f) = parts(&k[0]);
                let ret = if self.mode == Lowering::Skeleton {
                    RetType::Hole(self.type_hole())
                } else {
                    let (_, tk) = parts(&f[1]);
                    RetType::Explicit { signed: Self::signing(&tk[0]), range: Self::range(&tk[1]) }
                };
                let name = self.ident(&f[2]);
                let mut args = Vec::new();
                if let (Rule::FuncArgsCons, ak) = parts(&f[4]) {
                    let mut nodes = vec![&ak[0]];
                    Self::list_tail(&ak[1], Rule::FuncArgsTailCons, 1, &mut nodes);
                    for n in nodes {
                        let (_, a) = parts(n);
                        args.push(FuncArg { ty: self.data_type(&a[1]), name: self.ident(&a[2]) });
                    }
                }
                let body = self.stmt_list(&f[7]);
                Item::Function(Function { ret, name, args, body })
            }
            Rule::ItemGate => {
                let (_, g) = parts(&k[0]);
                let kind = match parts(&g[0]).0 {
                    Rule::GateAnd => GateKind::And,
                    Rule::GateOr => GateKind::Or,
                    Rule::GateXor => GateKind::Xor,
                    Rule::GateNand => GateKind::Nand,
                    Rule::GateNor => GateKind::Nor,
                    Rule::GateXnor => GateKind::Xnor,
                    Rule::GateNot => GateKind::Not,
                    _ => GateKind::Buf,
                };
                let mut terms = vec![self.ident(&g[3]), self.ident(&g[5])];
                let mut rest = Vec::new();
                Self::list_tail(&g[6], Rule::GateTermsCons, 1, &mut rest);
                terms.extend(rest.into_iter().map(|n| self.ident(n)));
                Item::Gate(Gate { kind, name: self.ident(&g[1]), terms })
            }
            Rule::ItemInstOrVar => {
                let (_, iv) = parts(&k[0]);
                let first = self.ident(&iv[0]);
                let name = self.ident(&iv[1]);
                match parts(&iv[2]) {
                    (Rule::InstTailVar, _) => Item::StructVar(StructVar { ty: first, name }),
                    (_, tk) => Item::Instance(Instance { module: first, name, conns: self.conns(&tk[1]) }),
                }
            }
            Rule::ItemTypedef => Item::Typedef(self.typedef(&k[0])),
            r => unreachable!("{r:?}"),
        }
    }

    fn conns(&mut self, node: &Node) -> Conns {
        match parts(node) {
            (Rule::ConnsNamed, k) => {
                let mut v = vec![(self.ident(&k[1]), self.expr(&k[3]))];
                let mut cur = &k[5];
                while let (Rule::NamedTailCons, t) = parts(cur) {
                    v.push((self.ident(&t[2]), self.expr(&t[4])));
                    cur = &t[6];
                }
                Conns::Named(v)
            }
            (Rule::ConnsPositional, k) => {
                let mut nodes = vec![&k[0]];
                Self::list_tail(&k[1], Rule::PosTailCons, 1, &mut nodes);
                Conns::Positional(nodes.into_iter().map(|n| self.expr(n)).collect())
            }
            _ => Conns::Positional(Vec::new()),
        }
    }

    fn event_term(&mut self, node: &Node, or_sep: bool) -> EventTerm {
        let (_, k) = parts(node);
        let edge = match parts(&k[0]).0 {
            Rule::EdgePos => Edge::Pos,
            Rule::EdgeNeg => Edge::Neg,
            _ => Edge::Any,
        };
        EventTerm { or_sep, edge, signal: self.ident(&k[1]) }
    }

    fn localparam(&mut self, node: &Node) -> Localparam {
        let (_, k) = parts(node);
        Localparam { name: self.ident(&k[1]), value: self.expr(&k[3]) }
    }

    fn typedef(&mut self, node: &Node) -> StructTypedef {
        let (_, k) = parts(node);
        let mut nodes = vec![&k[4]];
        Self::list(&k[5], Rule::StructMembersCons, &mut nodes);
        let members = nodes
            .into_iter()
            .map(|n| {
                let (_, m) = parts(n);
                (self.data_type(&m[0]), self.ident(&m[1]))
            })
            .collect();
        StructTypedef { members, name: self.ident(&k[7]) }
    }

    fn stmt_list(&mut self, node: &Node) -> Vec<Stmt> {
        let mut nodes = Vec::new();
        Self::list(node, Rule::StmtListCons, &mut nodes);
        nodes.into_iter().map(|n| self.stmt(n)).collect()
    }

    fn block(&mut self, node: &Node) -> Vec<Stmt> {
        let (_, k) = parts(node);
        self.stmt_list(&k[1])
    }

    fn stmt(&mut self, node: &Node) -> Stmt {
        let (rule, k) = parts(node);
        match rule {
            Rule::StmtBlock => Stmt::Block(self.stmt_list(&k[1])),
            Rule::StmtIf => {
                let cond = self.expr(&k[2]);
                let then = self.block(&k[4]);
                let els = match parts(&k[5]) {
                    (Rule::ElseSome, e) => Some(self.block(&e[1])),
                    _ => None,
                };
                Stmt::If { cond, then, els }
            }
            Rule::StmtAssign => Stmt::Assign {
                lhs: self.lvalue(&k[0]),
                nonblocking: parts(&k[1]).0 == Rule::AssignNonblocking,
                rhs: self.expr(&k[2]),
            },
            _ => Stmt::Null,
        }
    }

    fn select(node: &Node) -> Select {
        let (_, k) = parts(node);
        let first = number(&k[1]);
        match parts(&k[2]) {
            (Rule::SelectPart, t) => Select { hi: first, lo: Some(number(&t[1])) },
            _ => Select { hi: first, lo: None },
        }
    }

    fn lvalue(&mut self, node: &Node) -> LValue {
        let (_, k) = parts(node);
        let base = self.ident(&k[0]);
        let access = match parts(&k[1]) {
            (Rule::LvMember, t) => LvAccess::Member(self.ident(&t[1])),
            (Rule::LvSelect, t) => LvAccess::Select(Self::select(&t[0])),
            _ => LvAccess::None,
        };
        LValue { base, access }
    }

    fn expr(&mut self, node: &Node) -> Expr {
        let (rule, k) = parts(node);
        if rule == Rule::ExprUnary {
            let op = match parts(&k[0]).0 {
                Rule::UnNot => UnaryOp::Not,
                Rule::UnLogNot => UnaryOp::LogNot,
                Rule::UnNeg => UnaryOp::Neg,
                Rule::UnRedAnd => UnaryOp::RedAnd,
                Rule::UnRedOr => UnaryOp::RedOr,
                _ => UnaryOp::RedXor,
            };
            return Expr::Unary(op, Box::new(self.expr(&k[1])));
        }
        let prim = self.primary(&k[0]);
        match parts(&k[1]) {
            (Rule::TailBinary, t) => {
                let op = BinOp::ALL[(parts(&t[0]).0.id() - Rule::OpAdd.id()) as usize];
                Expr::Binary(prim, op, Box::new(self.expr(&t[1])))
            }
            (Rule::TailTernary, t) => {
                Expr::Ternary(prim, Box::new(self.expr(&t[1])), Box::new(self.expr(&t[3])))
            }
            _ => Expr::Primary(prim),
        }
    }

    fn primary(&mut self, node: &Node) -> Primary {
        let (rule, k) = parts(node);
        match rule {
            Rule::PrimaryRef => {
                let id = self.ident(&k[0]);
                let access = match parts(&k[1]) {
                    (Rule::PtMember, t) => Access::Member(self.ident(&t[1])),
                    (Rule::PtSelect, t) => Access::Select(Self::select(&t[0])),
                    (Rule::PtCall, t) => {
                        let mut args = Vec::new();
                        if let (Rule::CallArgsCons, a) = parts(&t[1]) {
                            let mut nodes = vec![&a[0]];
                            Self::list_tail(&a[1], Rule::CallArgsTailCons, 1, &mut nodes);
                            args = nodes.into_iter().map(|n| self.expr(n)).collect();
                        }
                        Access::Call(args)
                    }
                    _ => Access::None,
                };
                Primary::Ref(id, access)
            }
            Rule::PrimaryNumber => Primary::Number(leaf_text(&k[0]).to_string()),
            Rule::PrimarySized => Primary::Sized(leaf_text(&k[0]).to_string()),
            Rule::PrimaryParen => Primary::Paren(Box::new(self.expr(&k[1]))),
            _ => {
                let mut nodes = vec![&k[1]];
                Self::list_tail(&k[2], Rule::ConcatTailCons, 1, &mut nodes);
                Primary::Concat(nodes.into_iter().map(|n| self.expr(n)).collect())
            }
        }
    }
}

impl Design {
    /// Lowers a parse tree rooted at `Source`.
    pub fn from_tree(tree: &ParseTree, mode: Lowering) -> Design {
        Lower { mode, next_type_hole: 0 }.design(&tree.root)
    }

    pub fn modules(&self) -> impl Iterator<Item = &Module> {
        self.items.iter().filter_map(|d| match d {
            Description::Module(m) => Some(m),
            _ => None,
        })
    }

    pub fn modules_mut(&mut self) -> impl Iterator<Item = &mut Module> {
        self.items.iter_mut().filter_map(|d| match d {
            Description::Module(m) => Some(m),
            _ => None,
        })
    }

    pub fn tokens(&self) -> Vec<(TokenKind, String)> {
        let mut e = Emitter::default();
        e.design(self);
        e.out
    }

    pub fn token_count(&self) -> usize {
        self.tokens().len()
    }

    pub fn to_text(&self) -> String {
        let toks = self.tokens();
        render_tokens(toks.iter().map(|(k, s)| (*k, s.as_str())))
    }
}

// ---------------------------------------------------------------------------
// AST -> tokens

#[derive(Default)]
struct Emitter {
    out: Vec<(TokenKind, String)>,
}

impl Emitter {
    fn tok(&mut self, kind: TokenKind, text: &str) {
        self.out.push((kind, text.to_string()));
    }

    fn p(&mut self, kind: TokenKind) {
        self.tok(kind, kind.spelling());
    }

    fn ident(&mut self, id: &Ident) {
        self.out.push((TokenKind::Ident, id.text()));
    }

    fn number(&mut self, n: u32) {
        self.out.push((TokenKind::Number, n.to_string()));
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

    fn range(&mut self, range: Option<(u32, u32)>) {
        if let Some((a, b)) = range {
            self.p(TokenKind::LBracket);
            self.number(a);
            self.p(TokenKind::Colon);
            self.number(b);
            self.p(TokenKind::RBracket);
        }
    }

    fn data_type(&mut self, ty: &DataType) {
        match ty {
            DataType::Hole(n) => self.out.push((TokenKind::Ident, format!("TYPE_{n}"))),
            DataType::Explicit(t) => {
                self.p(match t.net {
                    NetKind::Wire => TokenKind::Wire,
                    NetKind::Reg => TokenKind::Reg,
                    NetKind::Logic => TokenKind::Logic,
                });
                if t.signed {
                    self.p(TokenKind::Signed);
                }
                self.range(t.range);
            }
        }
    }

    fn module(&mut self, m: &Module) {
        self.p(TokenKind::Module);
        self.ident(&m.name);
        if let Some(ports) = &m.ports {
            self.p(TokenKind::LParen);
            for (i, port) in ports.iter().enumerate() {
                if i > 0 {
                    self.p(TokenKind::Comma);
                }
                self.p(match port.dir {
                    Direction::Input => TokenKind::Input,
                    Direction::Output => TokenKind::Output,
                    Direction::Inout => TokenKind::Inout,
                });
                self.data_type(&port.ty);
                self.ident(&port.name);
            }
            self.p(TokenKind::RParen);
        }
        self.p(TokenKind::Semi);
        for item in &m.items {
            self.item(item);
        }
        self.p(TokenKind::Endmodule);
    }

    fn localparam(&mut self, l: &Localparam) {
        self.p(TokenKind::Localparam);
        self.ident(&l.name);
        self.p(TokenKind::Eq);
        self.expr(&l.value);
        self.p(TokenKind::Semi);
    }

    fn typedef(&mut self, t: &StructTypedef) {
        self.p(TokenKind::Typedef);
        self.p(TokenKind::Struct);
        self.p(TokenKind::Packed);
        self.p(TokenKind::LBrace);
        for (ty, name) in &t.members {
            self.data_type(ty);
            self.ident(name);
            self.p(TokenKind::Semi);
        }
        self.p(TokenKind::RBrace);
        self.ident(&t.name);
        self.p(TokenKind::Semi);
    }

    fn item(&mut self, item: &Item) {
        match item {
            Item::Net(n) => {
                self.data_type(&n.ty);
                self.ident(&n.name);
                if let Some(init) = &n.init {
                    self.p(TokenKind::Eq);
                    self.expr(init);
                }
                self.p(TokenKind::Semi);
            }
            Item::Localparam(l) => self.localparam(l),
            Item::Assign(a) => {
                self.p(TokenKind::Assign);
                self.lvalue(&a.lhs);
                self.p(TokenKind::Eq);
                self.expr(&a.rhs);
                self.p(TokenKind::Semi);
            }
            Item::Always(a) => {
                self.p(TokenKind::Always);
                self.p(TokenKind::At);
                match &a.event {
                    Event::Star => self.p(TokenKind::Star),
                    Event::ParenStar => {
                        self.p(TokenKind::LParen);
                        self.p(TokenKind::Star);
                        self.p(TokenKind::RParen);
                    }
                    Event::List(terms) => {
                        self.p(TokenKind::LParen);
                        for (i, t) in terms.iter().enumerate() {
                            if i > 0 {
                                self.p(if t.or_sep { TokenKind::Or } else { TokenKind::Comma });
                            }
                            match t.edge {
                                Edge::Pos => self.p(TokenKind::Posedge),
                                Edge::Neg => self.p(TokenKind::Negedge),
                                Edge::Any => {}
                            }
                            self.ident(&t.signal);
                        }
                        self.p(TokenKind::RParen);
                    }
                }
                self.stmt(&a.body);
            }
            Item::Initial(s) => {
                self.p(TokenKind::Initial);
                self.stmt(s);
            }
            Item::Function(f) => {
                self.p(TokenKind::Function);
                match f.ret {
                    RetType::Hole(n) => self.out.push((TokenKind::Ident, format!("TYPE_{n}"))),
                    RetType::Explicit { signed, range } => {
                        if signed {
                            self.p(TokenKind::Signed);
                        }
                        self.range(range);
                    }
                }
                self.ident(&f.name);
                self.p(TokenKind::LParen);
                for (i, a) in f.args.iter().enumerate() {
                    if i > 0 {
                        self.p(TokenKind::Comma);
                    }
                    self.p(TokenKind::Input);
                    self.data_type(&a.ty);
                    self.ident(&a.name);
                }
                self.p(TokenKind::RParen);
                self.p(TokenKind::Semi);
                for s in &f.body {
                    self.stmt(s);
                }
                self.p(TokenKind::Endfunction);
            }
            Item::Gate(g) => {
                let (k, t) = g.kind.token();
                self.tok(k, t);
                self.ident(&g.name);
                self.p(TokenKind::LParen);
                for (i, t) in g.terms.iter().enumerate() {
                    if i > 0 {
                        self.p(TokenKind::Comma);
                    }
                    self.ident(t);
                }
                self.p(TokenKind::RParen);
                self.p(TokenKind::Semi);
            }
            Item::Instance(inst) => {
                self.ident(&inst.module);
                self.ident(&inst.name);
                self.p(TokenKind::LParen);
                match &inst.conns {
                    Conns::Named(v) => {
                        for (i, (port, e)) in v.iter().enumerate() {
                            if i > 0 {
                                self.p(TokenKind::Comma);
                            }
                            self.p(TokenKind::Dot);
                            self.ident(port);
                            self.p(TokenKind::LParen);
                            self.expr(e);
                            self.p(TokenKind::RParen);
                        }
                    }
                    Conns::Positional(v) => {
                        for (i, e) in v.iter().enumerate() {
                            if i > 0 {
                                self.p(TokenKind::Comma);
                            }
                            self.expr(e);
                        }
                    }
                }
                self.p(TokenKind::RParen);
                self.p(TokenKind::Semi);
            }
            Item::StructVar(v) => {
                self.ident(&v.ty);
                self.ident(&v.name);
                self.p(TokenKind::Semi);
            }
            Item::Typedef(t) => self.typedef(t),
        }
    }

    fn block(&mut self, stmts: &[Stmt]) {
        self.p(TokenKind::Begin);
        for s in stmts {
            self.stmt(s);
        }
        self.p(TokenKind::End);
    }

    fn stmt(&mut self, s: &Stmt) {
        match s {
            Stmt::Block(v) => self.block(v),
            Stmt::If { cond, then, els } => {
                self.p(TokenKind::If);
                self.p(TokenKind::LParen);
                self.expr(cond);
                self.p(TokenKind::RParen);
                self.block(then);
                if let Some(e) = els {
                    self.p(TokenKind::Else);
                    self.block(e);
                }
            }
            Stmt::Assign { lhs, nonblocking, rhs } => {
                self.lvalue(lhs);
                self.p(if *nonblocking { TokenKind::LtEq } else { TokenKind::Eq });
                self.expr(rhs);
                self.p(TokenKind::Semi);
            }
            Stmt::Null => self.p(TokenKind::Semi),
        }
    }

    fn select(&mut self, s: &Select) {
        self.p(TokenKind::LBracket);
        self.number(s.hi);
        if let Some(lo) = s.lo {
            self.p(TokenKind::Colon);
            self.number(lo);
        }
        self.p(TokenKind::RBracket);
    }

    fn lvalue(&mut self, lv: &LValue) {
        self.ident(&lv.base);
        match &lv.access {
            LvAccess::None => {}
            LvAccess::Member(m) => {
                self.p(TokenKind::Dot);
                self.ident(m);
            }
            LvAccess::Select(s) => self.select(s),
        }
    }

    fn expr(&mut self, e: &Expr) {
        match e {
            Expr::Unary(op, inner) => {
                let (k, t) = op.token();
                self.tok(k, t);
                self.expr(inner);
            }
            Expr::Binary(lhs, op, rhs) => {
                self.primary(lhs);
                let (k, t) = op.token();
                self.tok(k, t);
                self.expr(rhs);
            }
            Expr::Ternary(c, a, b) => {
                self.primary(c);
                self.p(TokenKind::Question);
                self.expr(a);
                self.p(TokenKind::Colon);
                self.expr(b);
            }
            Expr::Primary(p) => self.primary(p),
        }
    }

    fn primary(&mut self, p: &Primary) {
        match p {
            Primary::Ref(id, access) => {
                self.ident(id);
                match access {
                    Access::None => {}
                    Access::Member(m) => {
                        self.p(TokenKind::Dot);
                        self.ident(m);
                    }
                    Access::Select(s) => self.select(s),
                    Access::Call(args) => {
                        self.p(TokenKind::LParen);
                        for (i, a) in args.iter().enumerate() {
                            if i > 0 {
                                self.p(TokenKind::Comma);
                            }
                            self.expr(a);
                        }
                        self.p(TokenKind::RParen);
                    }
                }
            }
            Primary::Number(s) => self.tok(TokenKind::Number, s),
            Primary::Sized(s) => self.tok(TokenKind::SizedNumber, s),
            Primary::Paren(inner) => {
                self.p(TokenKind::LParen);
                self.expr(inner);
                self.p(TokenKind::RParen);
            }
            Primary::Concat(parts) => {
                self.p(TokenKind::LBrace);
                for (i, e) in parts.iter().enumerate() {
                    if i > 0 {
                        self.p(TokenKind::Comma);
                    }
                    self.expr(e);
                }
                self.p(TokenKind::RBrace);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_design;

    const SAMPLE: &str = "
        localparam P = 4;
        typedef struct packed { logic [3:0] a; logic b; } pair_t;
        module leaf(input wire [7:0] x, output reg [7:0] y);
          always @(posedge x or negedge x) begin
            if (x[0]) begin y <= x + 8'h01; end else begin y <= {x[3:0], x[7:4]}; end
          end
        endmodule
        module top;
          wire [7:0] a = 3;
          wire [7:0] b;
          pair_t s;
          leaf u0(.x(a), .y(b));
          leaf u1(a, b);
          and g0(c, a, b, d);
          function signed [3:0] f(input reg [3:0] p, input reg q);
            f = q ? -p : ~p;
          endfunction
          initial begin s.a = f(a[3:0], 1'b1); s.b = &b; ; end
          always @* b = u0.y;
          assign u0.y = (a - b) * 2 >> 1;
        endmodule";

    #[test]
    fn print_then_reparse_is_stable() {
        let tree = parse_design(SAMPLE).unwrap();
        let design = Design::from_tree(&tree, Lowering::Source);
        let text = design.to_text();
        let tree2 = parse_design(&text).unwrap();
        assert_eq!(tree.rule_trace(), tree2.rule_trace());
        assert_eq!(Design::from_tree(&tree2, Lowering::Source).to_text(), text);
    }

    #[test]
    fn token_count_matches_lexer() {
        let tree = parse_design(SAMPLE).unwrap();
        let design = Design::from_tree(&tree, Lowering::Source);
        let n = crate::lexer::tokenize(SAMPLE).unwrap().len();
        assert_eq!(design.token_count(), n);
    }

    #[test]
    fn skeleton_lowering_makes_holes() {
        let tree = parse_design("module ID_0(input wire ID_1); wire [3:0] ID_2; endmodule").unwrap();
        let design = Design::from_tree(&tree, Lowering::Skeleton);
        let m = design.modules().next().unwrap();
        assert_eq!(m.name.name, Name::Hole(0));
        assert_eq!(m.ports.as_ref().unwrap()[0].ty, DataType::Hole(0));
        let Item::Net(n) = &m.items[0] else { panic!() };
        assert_eq!(n.ty, DataType::Hole(1));
        assert!(design.to_text().contains("TYPE_1 ID_2"));
    }

    #[test]
    fn decl_type_width() {
        let t = DeclType { net: NetKind::Wire, signed: false, range: Some((7, 0)) };
        assert_eq!(t.width(), 8);
        let t = DeclType { range: Some((0, 3)), ..t };
        assert_eq!(t.width(), 4);
    }
}
