//! Persisted surrogate documents.
//!
//! A document is JSON holding the full expansion tree (boxes, multi-index and
//! coefficient pairs) together with the input marginals, so it can be audited
//! with any text tool and re-evaluated without refitting. Floats are written
//! in shortest round-trip form, which makes reloaded predictions bitwise
//! equal to the in-process ones.

use std::path::Path;

use anyhow::{bail, Context, Result};
use asse_core::analytics::Method;
use asse_core::sse::SseTree;
use serde::{Deserialize, Serialize};

pub const FORMAT: &str = "asse-surrogate";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateDocument {
    pub format: String,
    pub version: u32,
    pub method: Method,
    pub response: String,
    pub input_names: Vec<String>,
    pub n_ed: usize,
    pub tree: SseTree,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

impl SurrogateDocument {
    pub fn new(method: Method, response: &str, input_names: Vec<String>, n_ed: usize, tree: SseTree) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            method,
            response: response.into(),
            input_names,
            n_ed,
            tree,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let header: Header = serde_json::from_str(text).context("not a surrogate document")?;
        if header.format != FORMAT {
            bail!("not a surrogate document (format `{}`)", header.format);
        }
        if header.version != VERSION {
            bail!(
                "surrogate document version {} is not supported by this build (reads version {VERSION}); \
                 refit with `asse run` to upgrade",
                header.version
            );
        }
        let doc: Self = serde_json::from_str(text).context("malformed surrogate document")?;
        if doc.tree.random_vector.as_ref().is_some_and(|rv| rv.dim() != doc.tree.dim) {
            bail!("surrogate document marginals do not match its dimension");
        }
        Ok(doc)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("loading {}", path.display()))
    }
}
