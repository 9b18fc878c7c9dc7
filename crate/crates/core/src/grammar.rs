//! Minimal cursor for the prefix-notation grammars used by closed-form
//! expressions in problem spec files, e.g. `sum(compose(hyp(1,1), lin(0.5)), hyp(1,2))`.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrammarError {
    /// Byte offset into the source string.
    pub pos: usize,
    pub msg: String,
}

impl fmt::Display for GrammarError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at offset {}: {}", self.pos, self.msg)
    }
}

impl std::error::Error for GrammarError {}

pub struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(src: &'a str) -> Self {
        Cursor { src, pos: 0 }
    }

    pub fn error(&self, msg: impl Into<String>) -> GrammarError {
        GrammarError {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    pub fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    pub fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.rest().chars().next()
    }

    pub fn eat(&mut self, c: char) -> Result<(), GrammarError> {
        self.skip_ws();
        if self.rest().starts_with(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(self.error(format!("expected '{c}'")))
        }
    }

    /// Consume `(` if present; returns whether it was there.
    pub fn eat_opt(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.rest().starts_with(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    /// An identifier: ascii letters and underscores.
    pub fn ident(&mut self) -> Result<&'a str, GrammarError> {
        self.skip_ws();
        let rest = self.rest();
        let end = rest
            .char_indices()
            .find(|(_, c)| !(c.is_ascii_alphabetic() || *c == '_'))
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        if end == 0 {
            return Err(self.error("expected an identifier"));
        }
        let out = &rest[..end];
        self.pos += end;
        Ok(out)
    }

    /// A floating point literal, parsed at full precision.
    pub fn number(&mut self) -> Result<f64, GrammarError> {
        self.skip_ws();
        let rest = self.rest();
        let end = rest
            .char_indices()
            .find(|(i, c)| {
                !(c.is_ascii_digit()
                    || *c == '.'
                    || *c == '_'
                    || *c == 'e'
                    || *c == 'E'
                    || ((*c == '+' || *c == '-')
                        && (*i == 0 || matches!(rest.as_bytes()[*i - 1], b'e' | b'E'))))
            })
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        if end == 0 {
            return Err(self.error("expected a number"));
        }
        let text = &rest[..end];
        let value: f64 = text
            .parse()
            .map_err(|_| self.error(format!("invalid number '{text}'")))?;
        if !value.is_finite() {
            return Err(self.error(format!("number '{text}' is not finite")));
        }
        self.pos += end;
        Ok(value)
    }

    pub fn expect_end(&mut self) -> Result<(), GrammarError> {
        self.skip_ws();
        if self.pos != self.src.len() {
            return Err(self.error("trailing input"));
        }
        Ok(())
    }
}
