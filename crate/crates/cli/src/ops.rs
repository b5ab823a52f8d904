//! Line-oriented operation scripts:
//!
//! ```text
//! # comments and blank lines are ignored
//! exclude c2
//! include c2
//! edit c3 replacement.txt
//! ```

use std::fmt;
use std::path::PathBuf;

use maod_core::ComponentId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Exclude(ComponentId),
    Include(ComponentId),
    Edit(ComponentId, PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

pub fn parse(script: &str) -> Result<Vec<Op>, ParseError> {
    let mut ops = Vec::new();
    for (i, raw) in script.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| ParseError { line: i + 1, message };
        let mut words = line.split_whitespace();
        let verb = words.next().unwrap_or_default();
        let id: ComponentId = words
            .next()
            .ok_or_else(|| err(format!("`{verb}` needs a component id")))?
            .parse()
            .map_err(|e| err(format!("{e}")))?;
        let op = match verb {
            "exclude" => Op::Exclude(id),
            "include" => Op::Include(id),
            "edit" => {
                // The path is the rest of the line, so it may contain spaces.
                let rest = line[verb.len()..].trim_start();
                let path = rest[id.as_str().len()..].trim();
                if path.is_empty() {
                    return Err(err("`edit` needs a content file".into()));
                }
                Op::Edit(id, PathBuf::from(path))
            }
            other => return Err(err(format!("unknown operation `{other}`"))),
        };
        if !matches!(op, Op::Edit(..)) && words.next().is_some() {
            return Err(err(format!("`{verb}` takes exactly one component id")));
        }
        ops.push(op);
    }
    Ok(ops)
}
