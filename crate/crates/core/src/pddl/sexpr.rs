//! S-expression reader with source positions.

use super::PddlError;

#[derive(Debug, Clone, PartialEq)]
pub enum SExpr {
    Symbol { text: String, line: usize, col: usize },
    List { items: Vec<SExpr>, line: usize, col: usize },
}

impl SExpr {
    pub fn position(&self) -> (usize, usize) {
        match self {
            SExpr::Symbol { line, col, .. } | SExpr::List { line, col, .. } => (*line, *col),
        }
    }

    pub fn as_symbol(&self) -> Option<&str> {
        match self {
            SExpr::Symbol { text, .. } => Some(text),
            SExpr::List { .. } => None,
        }
    }

    pub fn as_list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List { items, .. } => Some(items),
            SExpr::Symbol { .. } => None,
        }
    }

    /// Head symbol of a list, if the list starts with one.
    pub fn head(&self) -> Option<&str> {
        self.as_list().and_then(|items| items.first()).and_then(SExpr::as_symbol)
    }

    pub(crate) fn syntax_error(&self, msg: impl Into<String>) -> PddlError {
        let (line, col) = self.position();
        PddlError::Syntax { line, col, msg: msg.into() }
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
            if c == ';' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn expr(&mut self) -> Result<SExpr, PddlError> {
        self.skip_trivia();
        let (line, col) = (self.line, self.col);
        match self.chars.peek().copied() {
            None => Err(PddlError::Syntax { line, col, msg: "unexpected end of input".into() }),
            Some(')') => Err(PddlError::Syntax { line, col, msg: "unexpected `)`".into() }),
            Some('(') => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.chars.peek() {
                        None => {
                            return Err(PddlError::Syntax {
                                line,
                                col,
                                msg: "unclosed `(`".into(),
                            })
                        }
                        Some(')') => {
                            self.bump();
                            return Ok(SExpr::List { items, line, col });
                        }
                        Some(_) => items.push(self.expr()?),
                    }
                }
            }
            Some(_) => {
                let mut text = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    text.extend(c.to_lowercase());
                    self.bump();
                }
                Ok(SExpr::Symbol { text, line, col })
            }
        }
    }
}

/// Reads exactly one top-level expression; trailing non-comment input is an error.
pub fn read_one(text: &str) -> Result<SExpr, PddlError> {
    let mut reader = Reader { chars: text.chars().peekable(), line: 1, col: 1 };
    let expr = reader.expr()?;
    reader.skip_trivia();
    if reader.chars.peek().is_some() {
        return Err(PddlError::Syntax {
            line: reader.line,
            col: reader.col,
            msg: "trailing input after top-level expression".into(),
        });
    }
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowercases_and_tracks_positions() {
        let e = read_one("; header\n(Define\n  (Foo ?X))").unwrap();
        let items = e.as_list().unwrap();
        assert_eq!(items[0].as_symbol(), Some("define"));
        assert_eq!(items[1].position(), (3, 3));
        assert_eq!(items[1].as_list().unwrap()[1].as_symbol(), Some("?x"));
    }

    #[test]
    fn unbalanced_input_reports_location() {
        match read_one("(a (b c)") {
            Err(PddlError::Syntax { line: 1, col: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match read_one("(a))") {
            Err(PddlError::Syntax { line: 1, col: 4, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
