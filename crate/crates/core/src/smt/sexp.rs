//! S-expressions with source positions, shared by the solver client and the
//! VMT reader.

use std::fmt;

use num_bigint::BigInt;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SexpKind {
    /// Plain or `|quoted|` symbol, quotes removed.
    Symbol(String),
    Numeral(BigInt),
    /// Decimal, hexadecimal or binary literal, kept verbatim.
    OtherLiteral(String),
    Keyword(String),
    Str(String),
    List(Vec<Sexp>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sexp {
    pub kind: SexpKind,
    pub line: usize,
    pub col: usize,
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
#[error("{line}:{col}: {msg}")]
pub struct SexpError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl Sexp {
    pub fn symbol(&self) -> Option<&str> {
        match &self.kind {
            SexpKind::Symbol(s) => Some(s),
            _ => None,
        }
    }

    pub fn list(&self) -> Option<&[Sexp]> {
        match &self.kind {
            SexpKind::List(l) => Some(l),
            _ => None,
        }
    }

    pub fn keyword(&self) -> Option<&str> {
        match &self.kind {
            SexpKind::Keyword(k) => Some(k),
            _ => None,
        }
    }

    pub fn is_symbol(&self, s: &str) -> bool {
        self.symbol() == Some(s)
    }

    /// Head symbol of a list.
    pub fn head(&self) -> Option<&str> {
        self.list().and_then(|l| l.first()).and_then(|h| h.symbol())
    }
}

impl fmt::Display for Sexp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            SexpKind::Symbol(s) => write!(f, "{}", crate::terms::quote_symbol(s)),
            SexpKind::Numeral(n) => write!(f, "{n}"),
            SexpKind::OtherLiteral(s) => write!(f, "{s}"),
            SexpKind::Keyword(k) => write!(f, ":{k}"),
            SexpKind::Str(s) => write!(f, "\"{}\"", s.replace('"', "\"\"")),
            SexpKind::List(items) => {
                write!(f, "(")?;
                for (i, it) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{it}")?;
                }
                write!(f, ")")
            }
        }
    }
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl Lexer<'_> {
    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while let Some(&c) = self.chars.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == ';' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn err(&self, line: usize, col: usize, msg: impl Into<String>) -> SexpError {
        SexpError {
            line,
            col,
            msg: msg.into(),
        }
    }

    fn parse(&mut self) -> Result<Option<Sexp>, SexpError> {
        self.skip_ws();
        let (line, col) = (self.line, self.col);
        let Some(&c) = self.chars.peek() else {
            return Ok(None);
        };
        let kind = match c {
            '(' => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.chars.peek() {
                        None => return Err(self.err(line, col, "unclosed parenthesis")),
                        Some(')') => {
                            self.bump();
                            break;
                        }
                        Some(_) => items.push(self.parse()?.unwrap()),
                    }
                }
                SexpKind::List(items)
            }
            ')' => return Err(self.err(line, col, "unexpected `)`")),
            '|' => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return Err(self.err(line, col, "unterminated quoted symbol")),
                        Some('|') => break,
                        Some(c) => s.push(c),
                    }
                }
                SexpKind::Symbol(s)
            }
            '"' => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return Err(self.err(line, col, "unterminated string")),
                        Some('"') => {
                            if self.chars.peek() == Some(&'"') {
                                self.bump();
                                s.push('"');
                            } else {
                                break;
                            }
                        }
                        Some(c) => s.push(c),
                    }
                }
                SexpKind::Str(s)
            }
            _ => {
                let mut s = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' || c == '"' || c == '|' {
                        break;
                    }
                    s.push(c);
                    self.bump();
                }
                if let Some(k) = s.strip_prefix(':') {
                    SexpKind::Keyword(k.to_string())
                } else if s.bytes().all(|b| b.is_ascii_digit()) {
                    SexpKind::Numeral(s.parse().unwrap())
                } else if s.starts_with('#') || (s.as_bytes()[0].is_ascii_digit()) {
                    SexpKind::OtherLiteral(s)
                } else {
                    SexpKind::Symbol(s)
                }
            }
        };
        Ok(Some(Sexp { kind, line, col }))
    }
}

/// Parses every top-level s-expression in `text`.
pub fn parse_all(text: &str) -> Result<Vec<Sexp>, SexpError> {
    let mut lx = Lexer {
        chars: text.chars().peekable(),
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    while let Some(s) = lx.parse()? {
        out.push(s);
    }
    Ok(out)
}

pub fn parse_one(text: &str) -> Result<Sexp, SexpError> {
    let mut all = parse_all(text)?;
    match all.len() {
        1 => Ok(all.pop().unwrap()),
        n => Err(SexpError {
            line: 1,
            col: 1,
            msg: format!("expected one s-expression, found {n}"),
        }),
    }
}

/// Nesting depth change contributed by `line`, ignoring parentheses inside
/// strings, quoted symbols and comments. Used to frame solver responses.
pub(crate) fn paren_balance(text: &str) -> i64 {
    let mut depth = 0i64;
    let mut in_str = false;
    let mut in_quote = false;
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if in_str {
            if c == '"' {
                if chars.peek() == Some(&'"') {
                    chars.next();
                } else {
                    in_str = false;
                }
            }
            continue;
        }
        if in_quote {
            if c == '|' {
                in_quote = false;
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '|' => in_quote = true,
            ';' => {
                for c in chars.by_ref() {
                    if c == '\n' {
                        break;
                    }
                }
            }
            '(' => depth += 1,
            ')' => depth -= 1,
            _ => {}
        }
    }
    depth
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_nested_lists_with_positions() {
        let all = parse_all("(a (b 12))\n  (c |x y|)").unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!((all[1].line, all[1].col), (2, 3));
        let inner = &all[0].list().unwrap()[1];
        assert_eq!(inner.list().unwrap()[1].kind, SexpKind::Numeral(12.into()));
        assert_eq!(all[1].list().unwrap()[1].symbol(), Some("x y"));
    }

    #[test]
    fn reports_unclosed_paren() {
        let e = parse_all("\n (a b").unwrap_err();
        assert_eq!((e.line, e.col), (2, 2));
    }

    #[test]
    fn comments_and_keywords() {
        let all = parse_all("; hi\n(! x :named foo) ; tail").unwrap();
        assert_eq!(all[0].list().unwrap()[2].keyword(), Some("named"));
    }

    #[test]
    fn balance_ignores_quoted_parens() {
        assert_eq!(paren_balance("(error \"line (3\")"), 0);
        assert_eq!(paren_balance("((x |(|)"), 1);
    }
}
