//! The mini-Verilog grammar: nonterminals, production rules with dense
//! stable ids, and the LL(1) prediction table used by the parser.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use crate::lexer::TokenKind;

/// Identifies a rule for the grammar version named in [`GRAMMAR_VERSION`].
pub type RuleId = u16;

/// Bumped whenever rules are added, removed or reordered.
pub const GRAMMAR_VERSION: &str = "mini-verilog-1";

macro_rules! nonterminals {
    ($($nt:ident),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Nt { $($nt,)* }

        impl Nt {
            pub const ALL: &'static [Nt] = &[$(Nt::$nt,)*];

            pub fn name(self) -> &'static str {
                match self { $(Nt::$nt => stringify!($nt),)* }
            }
        }
    };
}

nonterminals! {
    Source, DescList, Description, ModuleDecl, ModulePorts, PortList, PortListTail, PortDecl,
    Direction, DataType, NetType, Signing, Range, ModuleItems, ModuleItem, NetDecl, DeclInit,
    LocalparamDecl, ContAssign, AlwaysBlock, EventCtl, EventBody, EventInner, EventListTail,
    EventTerm, Edge, InitialBlock, Stmt, Block, ElsePart, StmtList, AssignOp, LValue, LValueTail,
    Select, SelectTail, FunctionDecl, FuncType, FuncArgs, FuncArgsTail, FuncArg, GateInst,
    GateTermsTail, GateType, InstOrVar, InstTail, PortConns, NamedTail, PosTail, StructTypedef,
    StructMembers, StructMember, Expr, ExprTail, BinOp, UnaryOp, Primary, PrimaryTail, CallArgs,
    CallArgsTail, ConcatTail,
}

impl Nt {
    pub fn from_name(name: &str) -> Option<Nt> {
        Nt::ALL.iter().copied().find(|nt| nt.name() == name)
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Nt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A grammar symbol on the right-hand side of a rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sym {
    T(TokenKind),
    N(Nt),
}

macro_rules! rules {
    ($($name:ident : $lhs:ident => [$($sym:expr),* $(,)?];)*) => {
        /// Named handle for every production; `Rule::X as RuleId` is its id.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        #[repr(u16)]
        pub enum Rule { $($name,)* }

        impl Rule {
            pub const ALL: &'static [Rule] = &[$(Rule::$name,)*];
        }

        mod defs {
            use super::{Nt::*, Sym::{self, N, T}, Nt};
            use crate::lexer::TokenKind::*;
            pub(super) const RULES: &[(Nt, &[Sym])] = &[$(($lhs, &[$($sym),*]),)*];
        }
    };
}

rules! {
    SourceText: Source => [N(DescList)];
    DescListCons: DescList => [N(Description), N(DescList)];
    DescListNil: DescList => [];
    DescModule: Description => [N(ModuleDecl)];
    DescLocalparam: Description => [N(LocalparamDecl)];
    DescTypedef: Description => [N(StructTypedef)];
    ModuleDeclRule: ModuleDecl => [T(Module), T(Ident), N(ModulePorts), T(Semi), N(ModuleItems), T(Endmodule)];
    ModulePortsList: ModulePorts => [T(LParen), N(PortList), T(RParen)];
    ModulePortsNone: ModulePorts => [];
    PortListCons: PortList => [N(PortDecl), N(PortListTail)];
    PortListEmpty: PortList => [];
    PortListTailCons: PortListTail => [T(Comma), N(PortDecl), N(PortListTail)];
    PortListTailNil: PortListTail => [];
    PortDeclRule: PortDecl => [N(Direction), N(DataType), T(Ident)];
    DirInput: Direction => [T(Input)];
    DirOutput: Direction => [T(Output)];
    DirInout: Direction => [T(Inout)];
    DataTypeRule: DataType => [N(NetType), N(Signing), N(Range)];
    NetWire: NetType => [T(Wire)];
    NetReg: NetType => [T(Reg)];
    NetLogic: NetType => [T(Logic)];
    SigningSigned: Signing => [T(Signed)];
    SigningNone: Signing => [];
    RangeSome: Range => [T(LBracket), T(Number), T(Colon), T(Number), T(RBracket)];
    RangeNone: Range => [];
    ModuleItemsCons: ModuleItems => [N(ModuleItem), N(ModuleItems)];
    ModuleItemsNil: ModuleItems => [];
    ItemNet: ModuleItem => [N(NetDecl)];
    ItemLocalparam: ModuleItem => [N(LocalparamDecl)];
    ItemAssign: ModuleItem => [N(ContAssign)];
    ItemAlways: ModuleItem => [N(AlwaysBlock)];
    ItemInitial: ModuleItem => [N(InitialBlock)];
    ItemFunction: ModuleItem => [N(FunctionDecl)];
    ItemGate: ModuleItem => [N(GateInst)];
    ItemInstOrVar: ModuleItem => [N(InstOrVar)];
    ItemTypedef: ModuleItem => [N(StructTypedef)];
    NetDeclRule: NetDecl => [N(DataType), T(Ident), N(DeclInit), T(Semi)];
    DeclInitSome: DeclInit => [T(Eq), N(Expr)];
    DeclInitNone: DeclInit => [];
    LocalparamRule: LocalparamDecl => [T(Localparam), T(Ident), T(Eq), N(Expr), T(Semi)];
    ContAssignRule: ContAssign => [T(Assign), N(LValue), T(Eq), N(Expr), T(Semi)];
    AlwaysRule: AlwaysBlock => [T(Always), N(EventCtl), N(Stmt)];
    EventCtlRule: EventCtl => [T(At), N(EventBody)];
    EventBodyParen: EventBody => [T(LParen), N(EventInner), T(RParen)];
    EventBodyStar: EventBody => [T(Star)];
    EventInnerStar: EventInner => [T(Star)];
    EventInnerList: EventInner => [N(EventTerm), N(EventListTail)];
    EventTailOr: EventListTail => [T(Or), N(EventTerm), N(EventListTail)];
    EventTailComma: EventListTail => [T(Comma), N(EventTerm), N(EventListTail)];
    EventTailNil: EventListTail => [];
    EventTermRule: EventTerm => [N(Edge), T(Ident)];
    EdgePos: Edge => [T(Posedge)];
    EdgeNeg: Edge => [T(Negedge)];
    EdgeNone: Edge => [];
    InitialRule: InitialBlock => [T(Initial), N(Stmt)];
    StmtBlock: Stmt => [T(Begin), N(StmtList), T(End)];
    StmtIf: Stmt => [T(If), T(LParen), N(Expr), T(RParen), N(Block), N(ElsePart)];
    StmtAssign: Stmt => [N(LValue), N(AssignOp), N(Expr), T(Semi)];
    StmtNull: Stmt => [T(Semi)];
    BlockRule: Block => [T(Begin), N(StmtList), T(End)];
    ElseSome: ElsePart => [T(Else), N(Block)];
    ElseNone: ElsePart => [];
    StmtListCons: StmtList => [N(Stmt), N(StmtList)];
    StmtListNil: StmtList => [];
    AssignBlocking: AssignOp => [T(Eq)];
    AssignNonblocking: AssignOp => [T(LtEq)];
    LValueRule: LValue => [T(Ident), N(LValueTail)];
    LvMember: LValueTail => [T(Dot), T(Ident)];
    LvSelect: LValueTail => [N(Select)];
    LvNone: LValueTail => [];
    SelectRule: Select => [T(LBracket), T(Number), N(SelectTail), T(RBracket)];
    SelectPart: SelectTail => [T(Colon), T(Number)];
    SelectBit: SelectTail => [];
    FunctionRule: FunctionDecl => [T(Function), N(FuncType), T(Ident), T(LParen), N(FuncArgs), T(RParen), T(Semi), N(StmtList), T(Endfunction)];
    FuncTypeRule: FuncType => [N(Signing), N(Range)];
    FuncArgsCons: FuncArgs => [N(FuncArg), N(FuncArgsTail)];
    FuncArgsEmpty: FuncArgs => [];
    FuncArgsTailCons: FuncArgsTail => [T(Comma), N(FuncArg), N(FuncArgsTail)];
    FuncArgsTailNil: FuncArgsTail => [];
    FuncArgRule: FuncArg => [T(Input), N(DataType), T(Ident)];
    GateRule: GateInst => [N(GateType), T(Ident), T(LParen), T(Ident), T(Comma), T(Ident), N(GateTermsTail), T(RParen), T(Semi)];
    GateTermsCons: GateTermsTail => [T(Comma), T(Ident), N(GateTermsTail)];
    GateTermsNil: GateTermsTail => [];
    GateAnd: GateType => [T(And)];
    GateOr: GateType => [T(Or)];
    GateXor: GateType => [T(Xor)];
    GateNand: GateType => [T(Nand)];
    GateNor: GateType => [T(Nor)];
    GateXnor: GateType => [T(Xnor)];
    GateNot: GateType => [T(Not)];
    GateBuf: GateType => [T(Buf)];
    InstOrVarRule: InstOrVar => [T(Ident), T(Ident), N(InstTail)];
    InstTailPorts: InstTail => [T(LParen), N(PortConns), T(RParen), T(Semi)];
    InstTailVar: InstTail => [T(Semi)];
    ConnsNamed: PortConns => [T(Dot), T(Ident), T(LParen), N(Expr), T(RParen), N(NamedTail)];
    ConnsPositional: PortConns => [N(Expr), N(PosTail)];
    ConnsEmpty: PortConns => [];
    NamedTailCons: NamedTail => [T(Comma), T(Dot), T(Ident), T(LParen), N(Expr), T(RParen), N(NamedTail)];
    NamedTailNil: NamedTail => [];
    PosTailCons: PosTail => [T(Comma), N(Expr), N(PosTail)];
    PosTailNil: PosTail => [];
    TypedefRule: StructTypedef => [T(Typedef), T(Struct), T(Packed), T(LBrace), N(StructMember), N(StructMembers), T(RBrace), T(Ident), T(Semi)];
    StructMembersCons: StructMembers => [N(StructMember), N(StructMembers)];
    StructMembersNil: StructMembers => [];
    StructMemberRule: StructMember => [N(DataType), T(Ident), T(Semi)];
    ExprUnary: Expr => [N(UnaryOp), N(Expr)];
    ExprPrimary: Expr => [N(Primary), N(ExprTail)];
    TailBinary: ExprTail => [N(BinOp), N(Expr)];
    TailTernary: ExprTail => [T(Question), N(Expr), T(Colon), N(Expr)];
    TailNone: ExprTail => [];
    OpAdd: BinOp => [T(Plus)];
    OpSub: BinOp => [T(Minus)];
    OpMul: BinOp => [T(Star)];
    OpAnd: BinOp => [T(Amp)];
    OpOr: BinOp => [T(Pipe)];
    OpXor: BinOp => [T(Caret)];
    OpLogAnd: BinOp => [T(AmpAmp)];
    OpLogOr: BinOp => [T(PipePipe)];
    OpEq: BinOp => [T(EqEq)];
    OpNe: BinOp => [T(NotEq)];
    OpLt: BinOp => [T(Lt)];
    OpLe: BinOp => [T(LtEq)];
    OpGt: BinOp => [T(Gt)];
    OpGe: BinOp => [T(GtEq)];
    OpShl: BinOp => [T(Shl)];
    OpShr: BinOp => [T(Shr)];
    UnNot: UnaryOp => [T(Tilde)];
    UnLogNot: UnaryOp => [T(Bang)];
    UnNeg: UnaryOp => [T(Minus)];
    UnRedAnd: UnaryOp => [T(Amp)];
    UnRedOr: UnaryOp => [T(Pipe)];
    UnRedXor: UnaryOp => [T(Caret)];
    PrimaryRef: Primary => [T(Ident), N(PrimaryTail)];
    PrimaryNumber: Primary => [T(Number)];
    PrimarySized: Primary => [T(SizedNumber)];
    PrimaryParen: Primary => [T(LParen), N(Expr), T(RParen)];
    PrimaryConcat: Primary => [T(LBrace), N(Expr), N(ConcatTail), T(RBrace)];
    PtMember: PrimaryTail => [T(Dot), T(Ident)];
    PtSelect: PrimaryTail => [N(Select)];
    PtCall: PrimaryTail => [T(LParen), N(CallArgs), T(RParen)];
    PtNone: PrimaryTail => [];
    CallArgsCons: CallArgs => [N(Expr), N(CallArgsTail)];
    CallArgsEmpty: CallArgs => [];
    CallArgsTailCons: CallArgsTail => [T(Comma), N(Expr), N(CallArgsTail)];
    CallArgsTailNil: CallArgsTail => [];
    ConcatTailCons: ConcatTail => [T(Comma), N(Expr), N(ConcatTail)];
    ConcatTailNil: ConcatTail => [];
}

impl Rule {
    pub fn id(self) -> RuleId {
        self as RuleId
    }

    pub fn from_id(id: RuleId) -> Option<Rule> {
        Rule::ALL.get(id as usize).copied()
    }

    pub fn lhs(self) -> Nt {
        defs::RULES[self as usize].0
    }

    pub fn rhs(self) -> &'static [Sym] {
        defs::RULES[self as usize].1
    }
}

/// A single production `lhs ::= rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProductionRule {
    pub id: RuleId,
    pub lhs: Nt,
    pub rhs: &'static [Sym],
}

/// Token lookahead set; `Eof` stands for end of input.
type TokenSet = BTreeSet<TokenKind>;

#[derive(Debug)]
pub struct Grammar {
    rules: Vec<ProductionRule>,
    by_lhs: Vec<Vec<RuleId>>,
    nullable: Vec<bool>,
    first: Vec<TokenSet>,
    follow: Vec<TokenSet>,
    /// `predict[nt]` lists `(lookahead, rule)` pairs.
    predict: Vec<Vec<(TokenKind, RuleId)>>,
    conflicts: Vec<(Nt, TokenKind, RuleId, RuleId)>,
}

/// The process-wide grammar instance.
pub fn grammar() -> &'static Grammar {
    static GRAMMAR: OnceLock<Grammar> = OnceLock::new();
    GRAMMAR.get_or_init(Grammar::build)
}

impl Grammar {
    fn build() -> Grammar {
        let rules: Vec<ProductionRule> = Rule::ALL
            .iter()
            .map(|r| ProductionRule { id: r.id(), lhs: r.lhs(), rhs: r.rhs() })
            .collect();
        let n = Nt::ALL.len();
        let mut by_lhs = vec![Vec::new(); n];
        for r in &rules {
            by_lhs[r.lhs.index()].push(r.id);
        }

        let mut nullable = vec![false; n];
        let mut first = vec![TokenSet::new(); n];
        loop {
            let mut changed = false;
            for r in &rules {
                let (f, null) = seq_first(r.rhs, &first, &nullable);
                let lhs = r.lhs.index();
                if null && !nullable[lhs] {
                    nullable[lhs] = true;
                    changed = true;
                }
                let before = first[lhs].len();
                first[lhs].extend(f);
                changed |= first[lhs].len() != before;
            }
            if !changed {
                break;
            }
        }

        let mut follow = vec![TokenSet::new(); n];
        follow[Nt::Source.index()].insert(TokenKind::Eof);
        loop {
            let mut changed = false;
            for r in &rules {
                for (i, sym) in r.rhs.iter().enumerate() {
                    let Sym::N(b) = sym else { continue };
                    let (f, null) = seq_first(&r.rhs[i + 1..], &first, &nullable);
                    let mut add = f;
                    if null {
                        add.extend(follow[r.lhs.index()].iter().copied());
                    }
                    let before = follow[b.index()].len();
                    follow[b.index()].extend(add);
                    changed |= follow[b.index()].len() != before;
                }
            }
            if !changed {
                break;
            }
        }

        let mut predict: Vec<Vec<(TokenKind, RuleId)>> = vec![Vec::new(); n];
        let mut conflicts = Vec::new();
        for r in &rules {
            let (mut la, null) = seq_first(r.rhs, &first, &nullable);
            if null {
                la.extend(follow[r.lhs.index()].iter().copied());
            }
            let row = &mut predict[r.lhs.index()];
            for tok in la {
                if let Some(&(_, other)) = row.iter().find(|(t, _)| *t == tok) {
                    conflicts.push((r.lhs, tok, other, r.id));
                } else {
                    row.push((tok, r.id));
                }
            }
        }

        Grammar { rules, by_lhs, nullable, first, follow, predict, conflicts }
    }

    pub fn start(&self) -> Nt {
        Nt::Source
    }

    pub fn rules(&self) -> &[ProductionRule] {
        &self.rules
    }

    pub fn rule(&self, id: RuleId) -> &ProductionRule {
        &self.rules[id as usize]
    }

    pub fn num_rules(&self) -> usize {
        self.rules.len()
    }

    pub fn rules_for(&self, nt: Nt) -> &[RuleId] {
        &self.by_lhs[nt.index()]
    }

    pub fn nullable(&self, nt: Nt) -> bool {
        self.nullable[nt.index()]
    }

    pub fn first(&self, nt: Nt) -> &BTreeSet<TokenKind> {
        &self.first[nt.index()]
    }

    pub fn follow(&self, nt: Nt) -> &BTreeSet<TokenKind> {
        &self.follow[nt.index()]
    }

    /// The rule to expand `nt` with when the next token is `lookahead`.
    pub fn predict(&self, nt: Nt, lookahead: TokenKind) -> Option<RuleId> {
        self.predict[nt.index()]
            .iter()
            .find(|(t, _)| *t == lookahead)
            .map(|(_, r)| *r)
    }

    /// Tokens that may legally start `nt` in the current position.
    pub fn expected(&self, nt: Nt) -> Vec<TokenKind> {
        let mut v: Vec<_> = self.predict[nt.index()].iter().map(|(t, _)| *t).collect();
        v.sort();
        v
    }

    /// LL(1) conflicts; empty for a well-formed grammar version.
    pub fn conflicts(&self) -> &[(Nt, TokenKind, RuleId, RuleId)] {
        &self.conflicts
    }
}

fn seq_first(seq: &[Sym], first: &[TokenSet], nullable: &[bool]) -> (TokenSet, bool) {
    let mut out = TokenSet::new();
    for sym in seq {
        match sym {
            Sym::T(t) => {
                out.insert(*t);
                return (out, false);
            }
            Sym::N(nt) => {
                out.extend(first[nt.index()].iter().copied());
                if !nullable[nt.index()] {
                    return (out, false);
                }
            }
        }
    }
    (out, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grammar_is_ll1() {
        let g = grammar();
        assert!(g.conflicts().is_empty(), "conflicts: {:?}", g.conflicts());
    }

    #[test]
    fn rule_ids_are_dense() {
        let g = grammar();
        for (i, r) in g.rules().iter().enumerate() {
            assert_eq!(r.id as usize, i);
            assert_eq!(Rule::from_id(r.id).unwrap().id(), r.id);
        }
        assert!(g.num_rules() > 100);
    }

    #[test]
    fn every_nonterminal_has_a_rule() {
        let g = grammar();
        for r in g.rules() {
            for sym in r.rhs {
                if let Sym::N(nt) = sym {
                    assert!(!g.rules_for(*nt).is_empty(), "{nt} has no rules");
                }
            }
        }
        for nt in Nt::ALL {
            assert!(!g.rules_for(*nt).is_empty(), "{nt} has no rules");
        }
    }

    #[test]
    fn start_symbol_has_single_rule() {
        assert_eq!(grammar().rules_for(Nt::Source), &[Rule::SourceText.id()]);
    }

    #[test]
    fn nonterminal_names_round_trip() {
        for nt in Nt::ALL {
            assert_eq!(Nt::from_name(nt.name()), Some(*nt));
        }
        assert_eq!(Nt::from_name("Bogus"), None);
    }
}
