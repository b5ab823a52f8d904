//! Access to the committed sample corpus used by round-trip tests and the
//! acceptance suite. Files ending in `.email.txt` use the email profile.

use std::io;
use std::path::{Path, PathBuf};

use crate::component::Profile;

pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub name: String,
    pub profile: Profile,
    pub text: String,
}

pub fn profile_for(name: &str) -> Profile {
    if name.ends_with(".email.txt") {
        Profile::Email
    } else {
        Profile::Document
    }
}

/// All corpus documents, sorted by file name.
pub fn load(dir: &Path) -> io::Result<Vec<Document>> {
    let mut docs = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if !path.is_file() {
            continue;
        }
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_owned();
        let text = std::fs::read_to_string(&path)?;
        docs.push(Document { profile: profile_for(&name), name, text });
    }
    docs.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(docs)
}

pub fn load_default() -> io::Result<Vec<Document>> {
    load(&corpus_dir())
}
