//! Reproducibility stamps embedded in every written artifact.

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Tool version, config digest, seed and creation time of an artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStamp {
    pub tool: String,
    pub version: String,
    /// Hex SHA-256 of the canonical JSON of the producing configuration.
    pub config_digest: String,
    pub seed: u64,
    /// Seconds since the Unix epoch. Honors `SOURCE_DATE_EPOCH` so that
    /// regenerated artifacts can be byte-identical.
    pub created_unix: u64,
}

impl RunStamp {
    pub fn new<C: Serialize>(config: &C, seed: u64) -> Self {
        let json = serde_json::to_vec(config).unwrap_or_default();
        let digest = Sha256::digest(&json);
        RunStamp {
            tool: "edcnet".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: digest.iter().map(|b| format!("{b:02x}")).collect(),
            seed,
            created_unix: now_unix(),
        }
    }
}

fn now_unix() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse().ok())
    {
        return t;
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_depends_on_config() {
        let a = RunStamp::new(&("a", 1), 3);
        let b = RunStamp::new(&("a", 2), 3);
        assert_ne!(a.config_digest, b.config_digest);
        assert_eq!(a.config_digest.len(), 64);
        assert_eq!(a.seed, 3);
    }
}
