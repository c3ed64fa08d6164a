//! Canonical JSON encoding shared by every persisted artifact.
//!
//! All files written by this crate (memory banks, benchmark datasets, audit
//! lines, manifests, summaries) use the same canonical form: object keys in
//! lexicographic order, no insignificant whitespace, and floating-point
//! numbers rendered with at most nine fractional digits and no exponent
//! notation. Canonical output is a pure function of the value, which is what
//! makes byte-level determinism checks possible.

use std::fmt::Write as _;

/// Append a JSON string literal (quoted, escaped) to `out`.
pub fn push_json_str(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

/// Canonical rendering of an `f64`: fixed-point, at most nine fractional
/// digits, trailing zeros trimmed, always at least one fractional digit.
pub fn fmt_f64(x: f64) -> String {
    let mut s = format!("{x:.9}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.push('0');
    }
    // Normalize "-0.0" to "0.0" so equal values encode identically.
    if s == "-0.0" {
        s = "0.0".to_string();
    }
    s
}

/// Incremental writer for one canonical JSON object.
///
/// Callers are responsible for emitting keys in lexicographic order; the
/// writer only handles separators, quoting, and number formatting.
#[derive(Default)]
pub struct ObjWriter {
    buf: String,
    first: bool,
}

impl ObjWriter {
    pub fn new() -> Self {
        Self {
            buf: String::from("{"),
            first: true,
        }
    }

    fn key(&mut self, key: &str) {
        if !self.first {
            self.buf.push(',');
        }
        self.first = false;
        push_json_str(&mut self.buf, key);
        self.buf.push(':');
    }

    pub fn field_str(&mut self, key: &str, value: &str) -> &mut Self {
        self.key(key);
        push_json_str(&mut self.buf, value);
        self
    }

    pub fn field_f64(&mut self, key: &str, value: f64) -> &mut Self {
        self.key(key);
        self.buf.push_str(&fmt_f64(value));
        self
    }

    pub fn field_u64(&mut self, key: &str, value: u64) -> &mut Self {
        self.key(key);
        let _ = write!(self.buf, "{value}");
        self
    }

    pub fn field_bool(&mut self, key: &str, value: bool) -> &mut Self {
        self.key(key);
        self.buf.push_str(if value { "true" } else { "false" });
        self
    }

    /// Insert pre-rendered canonical JSON (array or object) under `key`.
    pub fn field_raw(&mut self, key: &str, raw: &str) -> &mut Self {
        self.key(key);
        self.buf.push_str(raw);
        self
    }

    pub fn field_str_array<'a, I: IntoIterator<Item = &'a str>>(
        &mut self,
        key: &str,
        values: I,
    ) -> &mut Self {
        self.key(key);
        self.buf.push('[');
        for (i, v) in values.into_iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            push_json_str(&mut self.buf, v);
        }
        self.buf.push(']');
        self
    }

    pub fn finish(mut self) -> String {
        self.buf.push('}');
        self.buf
    }
}

/// Render a sequence of pre-rendered canonical objects as a JSON array.
pub fn json_array<I: IntoIterator<Item = String>>(items: I) -> String {
    let mut out = String::from("[");
    for (i, item) in items.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&item);
    }
    out.push(']');
    out
}
