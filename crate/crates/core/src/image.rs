use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Content-addressed handle to a rendered image.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageRef {
    /// Hex SHA-256 of the image bytes.
    pub id: String,
    pub media_type: String,
    pub byte_len: u64,
}

impl ImageRef {
    pub fn for_bytes(bytes: &[u8], media_type: impl Into<String>) -> Self {
        Self {
            id: content_id(bytes),
            media_type: media_type.into(),
            byte_len: bytes.len() as u64,
        }
    }

    /// True when `bytes` hash to this reference.
    pub fn matches(&self, bytes: &[u8]) -> bool {
        self.byte_len == bytes.len() as u64 && self.id == content_id(bytes)
    }
}

pub fn content_id(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_is_recomputable() {
        let r = ImageRef::for_bytes(b"abc", "image/png");
        assert_eq!(
            r.id,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert!(r.matches(b"abc"));
        assert!(!r.matches(b"abd"));
    }
}
