//! A small s-expression reader with source positions.

use std::fmt;

use super::SyntaxError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SexpKind {
    Atom(String),
    List(Vec<Sexp>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sexp {
    pub kind: SexpKind,
    pub line: usize,
    pub col: usize,
}

impl Sexp {
    pub fn atom(&self) -> Option<&str> {
        match &self.kind {
            SexpKind::Atom(a) => Some(a),
            SexpKind::List(_) => None,
        }
    }

    pub fn list(&self) -> Option<&[Sexp]> {
        match &self.kind {
            SexpKind::List(items) => Some(items),
            SexpKind::Atom(_) => None,
        }
    }

    /// Every atom in the tree, in textual order.
    pub fn atoms<'a>(&'a self, out: &mut Vec<&'a str>) {
        match &self.kind {
            SexpKind::Atom(a) => out.push(a),
            SexpKind::List(items) => items.iter().for_each(|s| s.atoms(out)),
        }
    }
}

impl fmt::Display for Sexp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            SexpKind::Atom(a) => f.write_str(a),
            SexpKind::List(items) => {
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

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl Reader<'_> {
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

    fn skip_trivia(&mut self) {
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

    fn error(&self, message: impl Into<String>) -> SyntaxError {
        SyntaxError::Parse {
            line: self.line,
            col: self.col,
            message: message.into(),
        }
    }

    fn read(&mut self) -> Result<Sexp, SyntaxError> {
        self.skip_trivia();
        let (line, col) = (self.line, self.col);
        match self.chars.peek().copied() {
            None => Err(self.error("unexpected end of input")),
            Some(open @ ('(' | '[')) => {
                self.bump();
                let close = if open == '(' { ')' } else { ']' };
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.chars.peek().copied() {
                        None => {
                            return Err(SyntaxError::Parse {
                                line,
                                col,
                                message: format!("unclosed '{open}'"),
                            })
                        }
                        Some(c) if c == close => {
                            self.bump();
                            break;
                        }
                        Some(c @ (')' | ']')) => {
                            return Err(self.error(format!("mismatched '{c}', expected '{close}'")))
                        }
                        Some(_) => items.push(self.read()?),
                    }
                }
                Ok(Sexp {
                    kind: SexpKind::List(items),
                    line,
                    col,
                })
            }
            Some(c @ (')' | ']')) => Err(self.error(format!("unexpected '{c}'"))),
            Some(_) => {
                let mut atom = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_whitespace() || matches!(c, '(' | ')' | '[' | ']' | ';') {
                        break;
                    }
                    atom.push(c);
                    self.bump();
                }
                Ok(Sexp {
                    kind: SexpKind::Atom(atom),
                    line,
                    col,
                })
            }
        }
    }
}

/// Reads exactly one s-expression from `source`.
pub fn read(source: &str) -> Result<Sexp, SyntaxError> {
    let mut reader = Reader {
        chars: source.chars().peekable(),
        line: 1,
        col: 1,
    };
    let sexp = reader.read()?;
    reader.skip_trivia();
    if reader.chars.peek().is_some() {
        return Err(reader.error("trailing input after program"));
    }
    Ok(sexp)
}
