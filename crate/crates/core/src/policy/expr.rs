//! Infix access expressions.
//!
//! ```text
//! expr  := conj ( OR conj )*
//! conj  := atom ( AND atom )*
//! atom  := attribute | "(" expr ")" | <k>of "(" expr ( "," expr )* ")"
//! ```
//!
//! Chains of the same connective flatten into one gate, so `a OR b OR c` is a
//! single 1-of-3 gate. `AND`/`OR` are case-insensitive.

use super::access::{is_valid_attribute, AccessTree};
use super::PolicyError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Comma,
    And,
    Or,
    Threshold(u32),
    Attr(String),
}

fn syntax(msg: impl Into<String>) -> PolicyError {
    PolicyError::Syntax(msg.into())
}

fn lex(input: &str) -> Result<Vec<Tok>, PolicyError> {
    let mut out = Vec::new();
    let mut chars = input.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '(' => {
                chars.next();
                out.push(Tok::LParen);
            }
            ')' => {
                chars.next();
                out.push(Tok::RParen);
            }
            ',' => {
                chars.next();
                out.push(Tok::Comma);
            }
            _ => {
                let mut end = i;
                while let Some(&(j, d)) = chars.peek() {
                    if d.is_whitespace() || matches!(d, '(' | ')' | ',') {
                        break;
                    }
                    end = j + d.len_utf8();
                    chars.next();
                }
                let word = &input[i..end];
                let next_is_paren = chars.clone().find(|(_, d)| !d.is_whitespace()).map(|(_, d)| d) == Some('(');
                let tok = if word.eq_ignore_ascii_case("and") {
                    Tok::And
                } else if word.eq_ignore_ascii_case("or") {
                    Tok::Or
                } else if let Some(k) = word.strip_suffix("of").filter(|_| next_is_paren) {
                    Tok::Threshold(k.parse().map_err(|_| syntax(format!("bad threshold {word:?}")))?)
                } else if is_valid_attribute(word) {
                    Tok::Attr(word.to_owned())
                } else {
                    return Err(PolicyError::BadAttribute(word.to_owned()));
                };
                out.push(tok);
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, tok: Tok) -> Result<(), PolicyError> {
        match self.next() {
            Some(t) if t == tok => Ok(()),
            Some(t) => Err(syntax(format!("expected {tok:?}, found {t:?}"))),
            None => Err(syntax(format!("expected {tok:?}, found end of input"))),
        }
    }

    fn expr(&mut self) -> Result<AccessTree, PolicyError> {
        let mut items = vec![self.conj()?];
        while self.peek() == Some(&Tok::Or) {
            self.next();
            items.push(self.conj()?);
        }
        if items.len() == 1 {
            Ok(items.pop().expect("one item"))
        } else {
            AccessTree::or(items)
        }
    }

    fn conj(&mut self) -> Result<AccessTree, PolicyError> {
        let mut items = vec![self.atom()?];
        while self.peek() == Some(&Tok::And) {
            self.next();
            items.push(self.atom()?);
        }
        if items.len() == 1 {
            Ok(items.pop().expect("one item"))
        } else {
            AccessTree::and(items)
        }
    }

    fn atom(&mut self) -> Result<AccessTree, PolicyError> {
        match self.next() {
            Some(Tok::Attr(a)) => Ok(AccessTree::Leaf(a)),
            Some(Tok::LParen) => {
                if self.peek() == Some(&Tok::RParen) {
                    return Err(PolicyError::EmptyGate);
                }
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Threshold(k)) => {
                self.expect(Tok::LParen)?;
                if self.peek() == Some(&Tok::RParen) {
                    return Err(PolicyError::EmptyGate);
                }
                let mut children = vec![self.expr()?];
                while self.peek() == Some(&Tok::Comma) {
                    self.next();
                    children.push(self.expr()?);
                }
                self.expect(Tok::RParen)?;
                AccessTree::gate(k, children)
            }
            Some(t) => Err(syntax(format!("unexpected {t:?}"))),
            None => Err(syntax("unexpected end of input")),
        }
    }
}

pub(super) fn parse(input: &str) -> Result<AccessTree, PolicyError> {
    let toks = lex(input)?;
    if toks.is_empty() {
        return Err(PolicyError::EmptyGate);
    }
    let mut p = Parser { toks, pos: 0 };
    let tree = p.expr()?;
    if let Some(t) = p.peek() {
        return Err(syntax(format!("trailing {t:?}")));
    }
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(a: &str) -> AccessTree {
        AccessTree::Leaf(a.to_owned())
    }

    #[test]
    fn fedramp_scanner_auditor_or_federal() {
        let t = parse("(role:scanner AND cert:fedramp) OR role:auditor OR org:federal").unwrap();
        assert_eq!(
            t,
            AccessTree::Gate {
                k: 1,
                children: vec![
                    AccessTree::Gate { k: 2, children: vec![leaf("role:scanner"), leaf("cert:fedramp")] },
                    leaf("role:auditor"),
                    leaf("org:federal"),
                ]
            }
        );
    }

    #[test]
    fn threshold_syntax() {
        let t = parse("2of(a:x,b:y,c:z)").unwrap();
        assert_eq!(t, AccessTree::Gate { k: 2, children: vec![leaf("a:x"), leaf("b:y"), leaf("c:z")] });
        let nested = parse("2of(a:x, b:y OR c:z, 1of(d:w))").unwrap();
        assert!(matches!(nested, AccessTree::Gate { k: 2, ref children } if children.len() == 3));
    }

    #[test]
    fn precedence_and_binds_tighter() {
        let t = parse("a:x OR b:y and c:z").unwrap();
        assert_eq!(
            t,
            AccessTree::Gate {
                k: 1,
                children: vec![leaf("a:x"), AccessTree::Gate { k: 2, children: vec![leaf("b:y"), leaf("c:z")] }]
            }
        );
    }

    #[test]
    fn errors() {
        assert!(matches!(parse(""), Err(PolicyError::EmptyGate)));
        assert!(matches!(parse("()"), Err(PolicyError::EmptyGate)));
        assert!(matches!(parse("2of()"), Err(PolicyError::EmptyGate)));
        assert!(matches!(parse("3of(a:x, b:y)"), Err(PolicyError::BadThreshold { k: 3, n: 2 })));
        assert!(matches!(parse("0of(a:x)"), Err(PolicyError::BadThreshold { k: 0, n: 1 })));
        assert!(matches!(parse("a:x AND"), Err(PolicyError::Syntax(_))));
        assert!(matches!(parse("(a:x"), Err(PolicyError::Syntax(_))));
        assert!(matches!(parse("a:x b:y"), Err(PolicyError::Syntax(_))));
        assert!(matches!(parse("noColon"), Err(PolicyError::BadAttribute(_))));
        assert!(matches!(parse("xof(a:x)"), Err(PolicyError::Syntax(_))));
    }
}
