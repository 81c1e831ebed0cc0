//! Stable content digests.
//!
//! Everything that ends up on disk or in a report (contract digests, class ids,
//! config digests) goes through SHA-256 so values agree across runs, platforms
//! and builds.

use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// First 64 bits of the SHA-256 of `text`, used for per-line comparison keys.
pub fn line_digest(text: &str) -> u64 {
    let out = Sha256::digest(text.as_bytes());
    let mut head = [0u8; 8];
    head.copy_from_slice(&out[..8]);
    u64::from_be_bytes(head)
}

/// Short (16 hex chars) identifier derived from a list of parts.
pub fn short_id<'a>(parts: impl IntoIterator<Item = &'a str>) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part.as_bytes());
        hasher.update([0u8]);
    }
    hex::encode(&hasher.finalize()[..8])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn short_id_separates_parts() {
        assert_ne!(short_id(["ab", "c"]), short_id(["a", "bc"]));
        assert_eq!(short_id(["x"]).len(), 16);
    }
}
