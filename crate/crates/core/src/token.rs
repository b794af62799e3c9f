//! `name{key=value,...}` token grammar shared by model and kernel specs.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Split `name{body}` into name and optional body.
pub fn split_token(s: &str) -> Result<(&str, Option<&str>)> {
    let s = s.trim();
    match s.find('{') {
        None => Ok((s, None)),
        Some(i) => {
            let body = s[i + 1..]
                .strip_suffix('}')
                .ok_or_else(|| Error::ParameterDomain(format!("unterminated parameter list in `{s}`")))?;
            Ok((s[..i].trim(), Some(body)))
        }
    }
}

/// Named numeric parameters parsed from a token body.
pub struct Params {
    owner: String,
    map: BTreeMap<String, f64>,
}

impl Params {
    pub fn new(owner: &str, body: Option<&str>) -> Result<Self> {
        let mut map = BTreeMap::new();
        if let Some(body) = body {
            for part in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                let (k, v) = part
                    .split_once('=')
                    .ok_or_else(|| Error::ParameterDomain(format!("`{part}` in `{owner}` is not key=value")))?;
                let val: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::ParameterDomain(format!("`{}` is not a number", v.trim())))?;
                if map.insert(k.trim().to_string(), val).is_some() {
                    return Err(Error::ParameterDomain(format!("duplicate parameter `{}`", k.trim())));
                }
            }
        }
        Ok(Self { owner: owner.to_string(), map })
    }

    pub fn take(&mut self, key: &str, default: Option<f64>) -> Result<f64> {
        match self.map.remove(key).or(default) {
            Some(v) => Ok(v),
            None => Err(Error::ParameterDomain(format!("`{}` requires parameter `{key}`", self.owner))),
        }
    }

    pub fn finish(self) -> Result<()> {
        match self.map.keys().next() {
            None => Ok(()),
            Some(k) => Err(Error::ParameterDomain(format!("`{}` has no parameter `{k}`", self.owner))),
        }
    }
}

/// Closest known names to `token`, best first.
pub fn suggestions(token: &str, known: &[&str]) -> Vec<String> {
    let mut scored: Vec<(usize, &str)> = known
        .iter()
        .map(|k| (strsim::levenshtein(token, k), *k))
        .filter(|(d, k)| *d <= 3 || k.starts_with(token) || token.starts_with(*k))
        .collect();
    scored.sort();
    scored.into_iter().map(|(_, k)| k.to_string()).collect()
}

pub fn unknown(token: &str, known: &[&str]) -> Error {
    Error::UnknownToken {
        token: token.to_string(),
        suggestions: suggestions(token, known),
    }
}
