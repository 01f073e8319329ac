//! Tokenizer for the mini-Verilog language.
//!
//! Comments, whitespace and lines starting with a backtick (preprocessor
//! directives) are skipped. Token kinds double as the alphabet for n-gram
//! diversity measurements.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

macro_rules! token_kinds {
    (
        keywords { $($kw:ident => $kwtext:literal),* $(,)? }
        others { $($other:ident => $name:literal),* $(,)? }
    ) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
        pub enum TokenKind {
            $($kw,)*
            $($other,)*
        }

        impl TokenKind {
            pub const KEYWORDS: &'static [(&'static str, TokenKind)] = &[
                $(($kwtext, TokenKind::$kw),)*
            ];

            /// Stable name used in reports and n-gram keys.
            pub fn name(self) -> &'static str {
                match self {
                    $(TokenKind::$kw => concat!("kw_", $kwtext),)*
                    $(TokenKind::$other => $name,)*
                }
            }
        }
    };
}

token_kinds! {
    keywords {
        Module => "module", Endmodule => "endmodule", Input => "input", Output => "output",
        Inout => "inout", Wire => "wire", Reg => "reg", Logic => "logic", Signed => "signed",
        Assign => "assign", Always => "always", Initial => "initial", Begin => "begin",
        End => "end", If => "if", Else => "else", Posedge => "posedge", Negedge => "negedge",
        Or => "or", Function => "function", Endfunction => "endfunction",
        Localparam => "localparam", Typedef => "typedef", Struct => "struct", Packed => "packed",
        And => "and", Nand => "nand", Nor => "nor", Xor => "xor", Xnor => "xnor", Not => "not",
        Buf => "buf",
    }
    others {
        Ident => "identifier", Number => "number", SizedNumber => "sized_number",
        LParen => "lparen", RParen => "rparen", LBracket => "lbracket", RBracket => "rbracket",
        LBrace => "lbrace", RBrace => "rbrace", Semi => "semicolon", Colon => "colon",
        Comma => "comma", Dot => "dot", At => "at", Star => "star", Question => "question",
        Eq => "eq", LtEq => "lt_eq", Plus => "plus", Minus => "minus", Amp => "amp",
        Pipe => "pipe", Caret => "caret", Tilde => "tilde", Bang => "bang", EqEq => "eq_eq",
        NotEq => "not_eq", Lt => "lt", Gt => "gt", GtEq => "gt_eq", AmpAmp => "amp_amp",
        PipePipe => "pipe_pipe", Shl => "shl", Shr => "shr", Eof => "eof",
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl TokenKind {
    /// Source spelling of fixed-text tokens; empty for identifiers and literals.
    pub fn spelling(self) -> &'static str {
        use TokenKind::*;
        if let Some((text, _)) = TokenKind::KEYWORDS.iter().find(|(_, k)| *k == self) {
            return text;
        }
        match self {
            LParen => "(",
            RParen => ")",
            LBracket => "[",
            RBracket => "]",
            LBrace => "{",
            RBrace => "}",
            Semi => ";",
            Colon => ":",
            Comma => ",",
            Dot => ".",
            At => "@",
            Star => "*",
            Question => "?",
            Eq => "=",
            LtEq => "<=",
            Plus => "+",
            Minus => "-",
            Amp => "&",
            Pipe => "|",
            Caret => "^",
            Tilde => "~",
            Bang => "!",
            EqEq => "==",
            NotEq => "!=",
            Lt => "<",
            Gt => ">",
            GtEq => ">=",
            AmpAmp => "&&",
            PipePipe => "||",
            Shl => "<<",
            Shr => ">>",
            _ => "",
        }
    }
}

/// 1-based line/column position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{pos}: unexpected character {ch:?}")]
pub struct LexError {
    pub pos: Pos,
    pub ch: char,
}

fn keyword(word: &str) -> Option<TokenKind> {
    TokenKind::KEYWORDS
        .iter()
        .find(|(text, _)| *text == word)
        .map(|(_, kind)| *kind)
}

/// Splits `text` into tokens. The trailing `Eof` token is not included.
pub fn tokenize(text: &str) -> Result<Vec<Token>, LexError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    let mut line = 1u32;
    let mut col = 1u32;
    let mut at_line_start = true;

    macro_rules! advance {
        ($n:expr) => {
            for _ in 0..$n {
                if chars[i] == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                i += 1;
            }
        };
    }

    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        if c == '\n' {
            advance!(1);
            at_line_start = true;
            continue;
        }
        if c.is_whitespace() {
            advance!(1);
            continue;
        }
        if c == '`' && at_line_start {
            while i < chars.len() && chars[i] != '\n' {
                advance!(1);
            }
            continue;
        }
        at_line_start = false;
        if c == '/' && next == Some('/') {
            while i < chars.len() && chars[i] != '\n' {
                advance!(1);
            }
            continue;
        }
        if c == '/' && next == Some('*') {
            let start = Pos { line, col };
            advance!(2);
            loop {
                if i >= chars.len() {
                    return Err(LexError { pos: start, ch: '/' });
                }
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    advance!(2);
                    break;
                }
                advance!(1);
            }
            continue;
        }

        let pos = Pos { line, col };
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_' || chars[j] == '$') {
                j += 1;
            }
            let word: String = chars[start..j].iter().collect();
            let kind = keyword(&word).unwrap_or(TokenKind::Ident);
            advance!(j - start);
            tokens.push(Token { kind, text: word, pos });
            continue;
        }
        if c.is_ascii_digit() || (c == '\'' && next.is_some_and(is_base_char)) {
            let start = i;
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '_') {
                j += 1;
            }
            let mut kind = TokenKind::Number;
            if chars.get(j) == Some(&'\'') {
                let mut k = j + 1;
                if matches!(chars.get(k), Some('s') | Some('S')) {
                    k += 1;
                }
                if chars.get(k).copied().is_some_and(is_base_char) {
                    k += 1;
                    let digits_start = k;
                    while k < chars.len() && (chars[k].is_ascii_hexdigit() || matches!(chars[k], '_' | 'x' | 'X' | 'z' | 'Z' | '?')) {
                        k += 1;
                    }
                    if k == digits_start {
                        return Err(LexError { pos, ch: '\'' });
                    }
                    j = k;
                    kind = TokenKind::SizedNumber;
                } else {
                    return Err(LexError { pos, ch: '\'' });
                }
            }
            let word: String = chars[start..j].iter().collect();
            advance!(j - start);
            tokens.push(Token { kind, text: word, pos });
            continue;
        }

        let (kind, len) = match (c, next) {
            ('<', Some('=')) => (TokenKind::LtEq, 2),
            ('>', Some('=')) => (TokenKind::GtEq, 2),
            ('=', Some('=')) => (TokenKind::EqEq, 2),
            ('!', Some('=')) => (TokenKind::NotEq, 2),
            ('&', Some('&')) => (TokenKind::AmpAmp, 2),
            ('|', Some('|')) => (TokenKind::PipePipe, 2),
            ('<', Some('<')) => (TokenKind::Shl, 2),
            ('>', Some('>')) => (TokenKind::Shr, 2),
            ('(', _) => (TokenKind::LParen, 1),
            (')', _) => (TokenKind::RParen, 1),
            ('[', _) => (TokenKind::LBracket, 1),
            (']', _) => (TokenKind::RBracket, 1),
            ('{', _) => (TokenKind::LBrace, 1),
            ('}', _) => (TokenKind::RBrace, 1),
            (';', _) => (TokenKind::Semi, 1),
            (':', _) => (TokenKind::Colon, 1),
            (',', _) => (TokenKind::Comma, 1),
            ('.', _) => (TokenKind::Dot, 1),
            ('@', _) => (TokenKind::At, 1),
            ('*', _) => (TokenKind::Star, 1),
            ('?', _) => (TokenKind::Question, 1),
            ('=', _) => (TokenKind::Eq, 1),
            ('+', _) => (TokenKind::Plus, 1),
            ('-', _) => (TokenKind::Minus, 1),
            ('&', _) => (TokenKind::Amp, 1),
            ('|', _) => (TokenKind::Pipe, 1),
            ('^', _) => (TokenKind::Caret, 1),
            ('~', _) => (TokenKind::Tilde, 1),
            ('!', _) => (TokenKind::Bang, 1),
            ('<', _) => (TokenKind::Lt, 1),
            ('>', _) => (TokenKind::Gt, 1),
            _ => return Err(LexError { pos, ch: c }),
        };
        let word: String = chars[i..i + len].iter().collect();
        advance!(len);
        tokens.push(Token { kind, text: word, pos });
    }
    Ok(tokens)
}

fn is_base_char(c: char) -> bool {
    matches!(c, 'b' | 'B' | 'o' | 'O' | 'd' | 'D' | 'h' | 'H')
}

/// Bit width carried by a sized literal such as `8'hFF`; `None` for
/// unsized forms (`'hFF`, `42`).
pub fn literal_width(text: &str) -> Option<u32> {
    let (size, _) = text.split_once('\'')?;
    let digits: String = size.chars().filter(|c| *c != '_').collect();
    digits.parse().ok().filter(|w| *w > 0)
}
