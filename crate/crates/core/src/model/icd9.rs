use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which ICD-9 coding system a code belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodeKind {
    Diagnosis,
    Procedure,
}

impl fmt::Display for CodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodeKind::Diagnosis => f.write_str("diagnosis"),
            CodeKind::Procedure => f.write_str("procedure"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed ICD-9 {kind} code {text:?}: {reason}")]
pub struct MalformedCode {
    pub text: String,
    pub kind: CodeKind,
    pub reason: &'static str,
}

/// A syntactically valid ICD-9-CM diagnosis or procedure code.
///
/// Diagnosis roots are three characters: three digits, `V` plus two digits,
/// or `E` plus three digits. Procedure roots are two digits. The optional
/// extension after the decimal point is one or two digits and is kept
/// verbatim, so `428.0` and `428.00` are different codes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Icd9Code {
    kind: CodeKind,
    root: String,
    sub: String,
}

impl Icd9Code {
    pub fn parse(text: &str, kind: CodeKind) -> Result<Self, MalformedCode> {
        let err = |reason| MalformedCode { text: text.to_string(), kind, reason };
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Err(err("empty code"));
        }
        let upper = trimmed.to_ascii_uppercase();
        let (prefix, body) = match (kind, upper.as_bytes()[0]) {
            (CodeKind::Diagnosis, b'V') => (Some('V'), &upper[1..]),
            (CodeKind::Diagnosis, b'E') => (Some('E'), &upper[1..]),
            _ => (None, upper.as_str()),
        };
        let root_width = match (kind, prefix) {
            (CodeKind::Procedure, _) => 2,
            (CodeKind::Diagnosis, Some('V')) => 2,
            (CodeKind::Diagnosis, _) => 3,
        };

        let (root_digits, sub_digits) = match body.split_once('.') {
            Some((r, s)) => {
                if s.is_empty() {
                    return Err(err("empty extension after decimal point"));
                }
                (r, s)
            }
            None if body.len() > root_width => body.split_at(root_width),
            None => (body, ""),
        };
        if root_digits.is_empty() {
            return Err(err("missing category digits"));
        }
        if !root_digits.bytes().all(|b| b.is_ascii_digit())
            || !sub_digits.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(err("illegal character"));
        }
        if root_digits.len() > root_width {
            return Err(err("category part too long"));
        }
        if sub_digits.len() > 2 {
            return Err(err("extension longer than two digits"));
        }

        let mut root = String::with_capacity(root_width + 1);
        if let Some(p) = prefix {
            root.push(p);
        }
        for _ in root_digits.len()..root_width {
            root.push('0');
        }
        root.push_str(root_digits);
        Ok(Self { kind, root, sub: sub_digits.to_string() })
    }

    pub fn kind(&self) -> CodeKind {
        self.kind
    }

    /// Category part, zero padded (`"724"`, `"V27"`, `"88"`).
    pub fn root(&self) -> &str {
        &self.root
    }

    /// Extension digits, possibly empty.
    pub fn sub(&self) -> &str {
        &self.sub
    }

    pub fn canonical_text(&self) -> String {
        self.to_string()
    }

    /// Stable integer identity of the code, usable as a raw categorical value.
    ///
    /// Layout: `prefix * 1_000_000 + root_number * 1000 + extension`, where the
    /// extension maps "" to 0, one digit `d` to `1 + d` and two digits `dd` to
    /// `11 + dd`. Distinct codes of the same kind always get distinct ids and
    /// every id is exactly representable as an `f64`.
    pub fn stable_id(&self) -> i64 {
        let (prefix, digits) = match self.root.as_bytes()[0] {
            b'V' => (1, &self.root[1..]),
            b'E' => (2, &self.root[1..]),
            _ => (0, self.root.as_str()),
        };
        let root_num: i64 = digits.parse().unwrap_or(0);
        let sub_num: i64 = match self.sub.len() {
            0 => 0,
            1 => 1 + self.sub.parse::<i64>().unwrap_or(0),
            _ => 11 + self.sub.parse::<i64>().unwrap_or(0),
        };
        prefix * 1_000_000 + root_num * 1000 + sub_num
    }

    /// Candidate prefixes from longest to shortest: `428.01`, `428.0`, `428`.
    pub fn prefixes(&self) -> impl Iterator<Item = String> + '_ {
        (0..=self.sub.len()).rev().map(move |k| {
            if k == 0 {
                self.root.clone()
            } else {
                format!("{}.{}", self.root, &self.sub[..k])
            }
        })
    }
}

impl fmt::Display for Icd9Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.sub.is_empty() {
            f.write_str(&self.root)
        } else {
            write!(f, "{}.{}", self.root, self.sub)
        }
    }
}

impl From<Icd9Code> for String {
    fn from(code: Icd9Code) -> Self {
        code.to_string()
    }
}

impl TryFrom<String> for Icd9Code {
    type Error = MalformedCode;

    // Serialized codes carry no kind tag; a leading root of two digits
    // followed by a dot or end marks a procedure.
    fn try_from(value: String) -> Result<Self, Self::Error> {
        let root_len = value.split('.').next().map(str::len).unwrap_or(0);
        let kind = if root_len == 2 && value.bytes().all(|b| b.is_ascii_digit() || b == b'.') {
            CodeKind::Procedure
        } else {
            CodeKind::Diagnosis
        };
        Icd9Code::parse(&value, kind)
    }
}

/// Parses a diagnosis code; shorthand for the common case.
impl FromStr for Icd9Code {
    type Err = MalformedCode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Icd9Code::parse(s, CodeKind::Diagnosis)
    }
}
