//! Line-oriented text formats. Floats are written with Rust's shortest
//! round-trip representation, so reading back is lossless.

pub mod checkpoint;
pub mod graph;

use std::str::FromStr;

use crate::error::{HarnessError, Result};

/// Whitespace-split line reader that skips blanks and `#` comments and
/// remembers line numbers for errors.
pub(crate) struct Lines<'a> {
    what: &'static str,
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    pub(crate) fn new(what: &'static str, text: &'a str) -> Self {
        Self { what, inner: text.lines().enumerate(), line: 0 }
    }

    pub(crate) fn next_fields(&mut self) -> Option<Vec<&'a str>> {
        for (i, raw) in self.inner.by_ref() {
            let body = raw.split('#').next().unwrap_or("").trim();
            if !body.is_empty() {
                self.line = i + 1;
                return Some(body.split_whitespace().collect());
            }
        }
        None
    }

    pub(crate) fn expect_fields(&mut self) -> Result<Vec<&'a str>> {
        self.next_fields().ok_or_else(|| self.error("unexpected end of file"))
    }

    /// Reads `key value` and parses the value.
    pub(crate) fn keyed<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let fields = self.expect_fields()?;
        if fields.len() != 2 || fields[0] != key {
            return Err(self.error(format!("expected `{key} <value>`")));
        }
        self.parse(fields[1])
    }

    pub(crate) fn parse<T: FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.error(format!("cannot parse `{s}`")))
    }

    pub(crate) fn error(&self, message: impl Into<String>) -> HarnessError {
        HarnessError::parse(self.what, self.line, message)
    }
}
