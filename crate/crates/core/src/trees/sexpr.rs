//! Minimal s-expression reader/writer used for model serialization.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

impl Sexp {
    pub fn atom(s: impl Into<String>) -> Self {
        Sexp::Atom(s.into())
    }

    /// Shortest representation that parses back to the same bits.
    pub fn float(v: f64) -> Self {
        Sexp::Atom(format!("{v:?}"))
    }

    pub fn list(items: Vec<Sexp>) -> Self {
        Sexp::List(items)
    }

    pub fn as_atom(&self) -> Result<&str> {
        match self {
            Sexp::Atom(a) => Ok(a),
            Sexp::List(_) => Err(Error::BadParams("expected atom, found list".into())),
        }
    }

    pub fn as_list(&self) -> Result<&[Sexp]> {
        match self {
            Sexp::List(l) => Ok(l),
            Sexp::Atom(a) => Err(Error::BadParams(format!("expected list, found {a}"))),
        }
    }

    pub fn parse<T: std::str::FromStr>(&self) -> Result<T> {
        let a = self.as_atom()?;
        a.parse().map_err(|_| Error::BadParams(format!("cannot parse atom {a}")))
    }

    pub fn parse_text(text: &str) -> Result<Sexp> {
        let tokens = tokenize(text);
        let mut pos = 0;
        let s = read(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(Error::BadParams("trailing input after s-expression".into()));
        }
        Ok(s)
    }
}

fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        match c {
            '(' | ')' => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(c.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn read(tokens: &[String], pos: &mut usize) -> Result<Sexp> {
    let tok = tokens.get(*pos).ok_or_else(|| Error::BadParams("unexpected end of s-expression".into()))?;
    *pos += 1;
    match tok.as_str() {
        "(" => {
            let mut items = Vec::new();
            loop {
                match tokens.get(*pos).map(String::as_str) {
                    Some(")") => {
                        *pos += 1;
                        return Ok(Sexp::List(items));
                    }
                    Some(_) => items.push(read(tokens, pos)?),
                    None => return Err(Error::BadParams("unbalanced parentheses".into())),
                }
            }
        }
        ")" => Err(Error::BadParams("unexpected )".into())),
        atom => Ok(Sexp::Atom(atom.to_string())),
    }
}

impl fmt::Display for Sexp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sexp::Atom(a) => f.write_str(a),
            Sexp::List(items) => {
                f.write_str("(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
        }
    }
}
