//! Order-invariant cache keys for tool calls.
//!
//! A call is rendered to a canonical string `tool:{k1=v1,k2=v2}` in which
//! every map, at any depth, is sorted by key. Lists keep their order. Strings
//! are NFC-normalized and the delimiter characters `\ = , { } [ ]` are
//! backslash-escaped, so distinct parameter trees never render to the same
//! string. The digest is SHA-256 over that string.

use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::model::{ParamValue, Params};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyError {
    #[error("unsupported parameter value at `{path}`")]
    UnsupportedValue { path: String },
    #[error("tool name must not be empty")]
    EmptyToolName,
}

/// Identifies one logical tool call. Equality, ordering and hashing use the
/// digest only.
#[derive(Clone)]
pub struct CacheKey {
    digest: [u8; 32],
    debug_form: String,
}

impl CacheKey {
    pub fn from_canonical(canonical: String) -> Self {
        let digest: [u8; 32] = Sha256::digest(canonical.as_bytes()).into();
        Self {
            digest,
            debug_form: canonical,
        }
    }

    pub fn digest(&self) -> &[u8; 32] {
        &self.digest
    }

    pub fn hex(&self) -> String {
        hex::encode(self.digest)
    }

    pub fn debug_form(&self) -> &str {
        &self.debug_form
    }
}

impl PartialEq for CacheKey {
    fn eq(&self, other: &Self) -> bool {
        self.digest == other.digest
    }
}

impl Eq for CacheKey {}

impl Hash for CacheKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.digest.hash(state);
    }
}

impl PartialOrd for CacheKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for CacheKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.digest.cmp(&other.digest)
    }
}

impl fmt::Debug for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CacheKey({}, {})", &self.hex()[..12], self.debug_form)
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.debug_form)
    }
}

// Keys serialize as their canonical string; the digest is recomputed on load.
impl Serialize for CacheKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.debug_form)
    }
}

impl<'de> Deserialize<'de> for CacheKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(CacheKey::from_canonical(String::deserialize(d)?))
    }
}

/// Formats a finite number in a locale-independent shortest form. Integral
/// values print without a fractional part, so `1` and `1.0` agree.
pub fn format_number(x: f64) -> Option<String> {
    if !x.is_finite() {
        return None;
    }
    if x == 0.0 {
        return Some("0".to_string());
    }
    if x.fract() == 0.0 && x.abs() < 1e15 {
        return Some(format!("{}", x as i64));
    }
    Some(format!("{x}"))
}

fn push_escaped(out: &mut String, s: &str) {
    for c in s.nfc() {
        if matches!(c, '\\' | '=' | ',' | '{' | '}' | '[' | ']') {
            out.push('\\');
        }
        out.push(c);
    }
}

fn render_value(out: &mut String, v: &ParamValue, path: &mut String) -> Result<(), KeyError> {
    match v {
        ParamValue::Null => out.push_str("null"),
        ParamValue::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        ParamValue::Int(i) => out.push_str(&i.to_string()),
        ParamValue::Float(f) => match format_number(*f) {
            Some(s) => out.push_str(&s),
            None => return Err(KeyError::UnsupportedValue { path: path.clone() }),
        },
        ParamValue::Str(s) => push_escaped(out, s),
        ParamValue::List(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let len = path.len();
                path.push_str(&format!("[{i}]"));
                render_value(out, item, path)?;
                path.truncate(len);
            }
            out.push(']');
        }
        ParamValue::Map(m) => render_map(out, m, path)?,
    }
    Ok(())
}

fn render_map(out: &mut String, m: &Params, path: &mut String) -> Result<(), KeyError> {
    let mut entries: Vec<(String, &ParamValue)> = m.iter().map(|(k, v)| (k.nfc().collect(), v)).collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    out.push('{');
    for (i, (k, v)) in entries.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        push_escaped(out, &k);
        out.push('=');
        let len = path.len();
        path.push('.');
        path.push_str(&k);
        render_value(out, v, path)?;
        path.truncate(len);
    }
    out.push('}');
    Ok(())
}

/// Renders the canonical `tool:{...}` form of a call.
pub fn canonicalize(tool_name: &str, params: &Params) -> Result<String, KeyError> {
    if tool_name.is_empty() {
        return Err(KeyError::EmptyToolName);
    }
    let mut out = String::with_capacity(tool_name.len() + 16 * params.len() + 3);
    push_escaped(&mut out, tool_name);
    out.push(':');
    render_map(&mut out, params, &mut String::new())?;
    Ok(out)
}

pub fn make_key(tool_name: &str, params: &Params) -> Result<CacheKey, KeyError> {
    canonicalize(tool_name, params).map(CacheKey::from_canonical)
}
