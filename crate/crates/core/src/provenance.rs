//! Provenance headers written at the top of every output artifact.

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TOOL_NAME: &str = "loskit";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_digest: String,
}

impl Provenance {
    pub fn new(seed: u64, config_text: &str) -> Self {
        Self {
            tool: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
            seed,
            config_digest: digest_hex(config_text.as_bytes()),
        }
    }

    /// `# key: value` comment lines, one per field.
    pub fn comment_header(&self) -> String {
        format!(
            "# tool: {} {}\n# seed: {}\n# config-digest: {}\n",
            self.tool, self.version, self.seed, self.config_digest
        )
    }
}

pub fn digest_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_lines() {
        let p = Provenance::new(42, "a = 1");
        let h = p.comment_header();
        assert!(h.starts_with("# tool: loskit "));
        assert!(h.contains("# seed: 42\n"));
        assert_eq!(p.config_digest.len(), 64);
        assert_eq!(p, Provenance::new(42, "a = 1"));
        assert_ne!(p.config_digest, Provenance::new(42, "a = 2").config_digest);
    }
}
