use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_json<T: serde::Serialize>(value: &T) -> String {
    // Serializing plain data structures cannot fail.
    let bytes = serde_json::to_vec(value).expect("serializable value");
    sha256_hex(&bytes)
}
