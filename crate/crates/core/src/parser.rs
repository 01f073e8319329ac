//! Predictive recursive-descent parser driven by the grammar's LL(1) table.
//!
//! Every internal node of the resulting [`ParseTree`] records the id of the
//! rule that expanded it, which is what the trainer counts.

use std::fmt;

use thiserror::Error;

use crate::grammar::{grammar, Nt, RuleId, Sym};
use crate::lexer::{tokenize, LexError, Pos, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Rule { rule: RuleId, children: Vec<Node> },
    Leaf(Token),
}

impl Node {
    pub fn rule(&self) -> Option<RuleId> {
        match self {
            Node::Rule { rule, .. } => Some(*rule),
            Node::Leaf(_) => None,
        }
    }

    pub fn children(&self) -> &[Node] {
        match self {
            Node::Rule { children, .. } => children,
            Node::Leaf(_) => &[],
        }
    }

    pub fn token(&self) -> Option<&Token> {
        match self {
            Node::Leaf(t) => Some(t),
            Node::Rule { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseTree {
    pub root: Node,
}

impl ParseTree {
    /// Rule ids in pre-order (the leftmost-derivation order).
    pub fn rule_trace(&self) -> Vec<RuleId> {
        let mut out = Vec::new();
        let mut stack = vec![&self.root];
        while let Some(node) = stack.pop() {
            if let Node::Rule { rule, children } = node {
                out.push(*rule);
                stack.extend(children.iter().rev());
            }
        }
        out
    }

    pub fn leaves(&self) -> Vec<&Token> {
        let mut out = Vec::new();
        let mut stack = vec![&self.root];
        while let Some(node) = stack.pop() {
            match node {
                Node::Leaf(t) => out.push(t),
                Node::Rule { children, .. } => stack.extend(children.iter().rev()),
            }
        }
        out
    }

    pub fn internal_nodes(&self) -> usize {
        self.rule_trace().len()
    }

    /// Source text with canonical whitespace.
    pub fn render(&self) -> String {
        render_tokens(self.leaves().into_iter().map(|t| (t.kind, t.text.as_str())))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct SyntaxError {
    pub pos: Pos,
    pub found: TokenKind,
    pub found_text: String,
    pub expected: Vec<TokenKind>,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: unexpected {}", self.pos, self.found)?;
        if !self.found_text.is_empty() {
            write!(f, " `{}`", self.found_text)?;
        }
        let names: Vec<_> = self.expected.iter().map(|k| k.name()).collect();
        write!(f, ", expected one of [{}]", names.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("lexical error at {0}")]
    Lex(#[from] LexError),
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
}

impl ParseError {
    pub fn pos(&self) -> Pos {
        match self {
            ParseError::Lex(e) => e.pos,
            ParseError::Syntax(e) => e.pos,
        }
    }
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
    eof: Token,
}

impl Parser {
    fn new(tokens: Vec<Token>) -> Parser {
        let pos = tokens
            .last()
            .map(|t| Pos { line: t.pos.line, col: t.pos.col + t.text.chars().count() as u32 })
            .unwrap_or(Pos { line: 1, col: 1 });
        Parser { tokens, at: 0, eof: Token { kind: TokenKind::Eof, text: String::new(), pos } }
    }

    fn peek(&self) -> &Token {
        self.tokens.get(self.at).unwrap_or(&self.eof)
    }

    fn error(&self, expected: Vec<TokenKind>) -> SyntaxError {
        let tok = self.peek();
        SyntaxError { pos: tok.pos, found: tok.kind, found_text: tok.text.clone(), expected }
    }

    fn parse_nt(&mut self, nt: Nt) -> Result<Node, SyntaxError> {
        let g = grammar();
        let rule = g
            .predict(nt, self.peek().kind)
            .ok_or_else(|| self.error(g.expected(nt)))?;
        let rhs = g.rule(rule).rhs;
        let mut children = Vec::with_capacity(rhs.len());
        for sym in rhs {
            match *sym {
                Sym::T(kind) => {
                    if self.peek().kind != kind {
                        return Err(self.error(vec![kind]));
                    }
                    children.push(Node::Leaf(self.tokens[self.at].clone()));
                    self.at += 1;
                }
                Sym::N(child) => children.push(self.parse_nt(child)?),
            }
        }
        Ok(Node::Rule { rule, children })
    }
}

/// Parses a complete design.
pub fn parse_design(text: &str) -> Result<ParseTree, ParseError> {
    parse_tokens(tokenize(text)?, Nt::Source)
}

/// Parses `tokens` as exactly one `nt`.
pub fn parse_tokens(tokens: Vec<Token>, nt: Nt) -> Result<ParseTree, ParseError> {
    let mut p = Parser::new(tokens);
    let root = p.parse_nt(nt)?;
    if p.peek().kind != TokenKind::Eof {
        return Err(p.error(vec![TokenKind::Eof]).into());
    }
    Ok(ParseTree { root })
}

/// Joins tokens into readable source text: one statement per line,
/// indentation following `module`/`function`/`begin` nesting.
pub fn render_tokens<'a>(tokens: impl IntoIterator<Item = (TokenKind, &'a str)>) -> String {
    use TokenKind::*;
    let mut out = String::new();
    let mut indent = 0usize;
    let mut line_start = true;
    let mut prev: Option<TokenKind> = None;
    let mut paren_depth = 0usize;
    let mut bracket_depth = 0usize;
    // One entry per open brace: whether it opens a struct body.
    let mut braces: Vec<bool> = Vec::new();
    for (kind, text) in tokens {
        let struct_close = kind == RBrace && braces.pop().unwrap_or(true);
        let struct_open = kind == LBrace && prev == Some(Packed);
        if matches!(kind, End | Endmodule | Endfunction) || struct_close {
            indent = indent.saturating_sub(1);
            if !line_start {
                out.push('\n');
                line_start = true;
            }
        }
        if line_start {
            for _ in 0..indent {
                out.push_str("  ");
            }
        } else {
            let in_range = bracket_depth > 0;
            let tight = matches!(kind, Semi | Comma | RParen | RBracket | RBrace)
                || (kind == Dot && prev == Some(Ident))
                || prev == Some(LBrace)
                || (in_range && (kind == Colon || prev == Some(Colon)))
                || matches!(prev, Some(LParen | LBracket | Dot | At | Tilde | Bang))
                || (kind == LParen && matches!(prev, Some(Ident | At)))
                || (kind == LBracket && prev == Some(Ident));
            if !tight {
                out.push(' ');
            }
        }
        out.push_str(text);
        line_start = false;
        match kind {
            LParen => paren_depth += 1,
            RParen => paren_depth = paren_depth.saturating_sub(1),
            LBracket => bracket_depth += 1,
            LBrace => braces.push(struct_open),
            RBracket => bracket_depth = bracket_depth.saturating_sub(1),
            _ => {}
        }
        let newline_after = match kind {
            Semi => paren_depth == 0,
            Begin | End | Endfunction => true,
            LBrace => struct_open,
            Endmodule => {
                out.push('\n');
                true
            }
            _ => false,
        };
        if matches!(kind, Module | Function | Begin) || struct_open {
            indent += 1;
        }
        if newline_after {
            out.push('\n');
            line_start = true;
        }
        prev = Some(kind);
    }
    if !line_start {
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::Rule;

    #[test]
    fn minimal_module() {
        let tree = parse_design("module m; endmodule").unwrap();
        let trace: Vec<Rule> = tree.rule_trace().into_iter().map(|r| Rule::from_id(r).unwrap()).collect();
        assert_eq!(
            trace,
            vec![
                Rule::SourceText,
                Rule::DescListCons,
                Rule::DescModule,
                Rule::ModuleDeclRule,
                Rule::ModulePortsNone,
                Rule::ModuleItemsNil,
                Rule::DescListNil,
            ]
        );
    }

    #[test]
    fn missing_semicolon_is_rejected() {
        let err = parse_design("module m endmodule").unwrap_err();
        let ParseError::Syntax(e) = err else { panic!("expected syntax error") };
        assert_eq!(e.found, TokenKind::Endmodule);
        assert_eq!(e.pos, Pos { line: 1, col: 10 });
        assert!(e.expected.contains(&TokenKind::Semi));
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        assert!(parse_design("module m; endmodule )").is_err());
    }

    #[test]
    fn render_round_trips_tokens() {
        let src = "module m(input wire [7:0] a, output reg b); always @(posedge a) begin if (a[0]) begin b <= ~a[1]; end else begin b <= 1'b0; end end endmodule";
        let tree = parse_design(src).unwrap();
        let text = tree.render();
        let again = parse_design(&text).unwrap();
        assert_eq!(tree.rule_trace(), again.rule_trace());
    }

    #[test]
    fn leaf_concatenation_matches_token_stream() {
        let src = "localparam p = 3; module m; wire w = p + 1; endmodule";
        let tree = parse_design(src).unwrap();
        let leaves: Vec<String> = tree.leaves().iter().map(|t| t.text.clone()).collect();
        let toks: Vec<String> = tokenize(src).unwrap().into_iter().map(|t| t.text).collect();
        assert_eq!(leaves, toks);
    }
}
