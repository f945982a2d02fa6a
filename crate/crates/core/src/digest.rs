//! SHA-256 digests of canonical serializations, hex-encoded.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::embed_store::{LabeledSet, Labels};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the compact JSON form of `value`. Struct fields serialize in
/// declaration order and maps used in configs are ordered, so the text is
/// canonical.
pub fn json_digest<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_vec(value).expect("config values serialize");
    sha256_hex(&text)
}

pub fn labeled_set_digest(set: &LabeledSet) -> String {
    let mut h = Sha256::new();
    h.update(b"oswb-labeled-set-v1\0");
    h.update((set.dim() as u32).to_le_bytes());
    h.update((set.len() as u64).to_le_bytes());
    match set.labels() {
        Labels::Class { classes, .. } => {
            h.update(b"class\0");
            for name in classes.names() {
                h.update((name.len() as u32).to_le_bytes());
                h.update(name.as_bytes());
            }
        }
        Labels::Scalar { unit, .. } => {
            h.update(b"scalar\0");
            h.update(unit.as_str().as_bytes());
        }
        Labels::Angle { .. } => h.update(b"angle\0"),
        Labels::Boxes { .. } => h.update(b"boxes\0"),
    }
    for i in 0..set.len() {
        let id = &set.ids()[i];
        h.update((id.len() as u32).to_le_bytes());
        h.update(id.as_bytes());
        for v in set.vector(i) {
            h.update(v.to_le_bytes());
        }
        match set.labels() {
            Labels::Class { values, .. } => h.update((values[i] as u32).to_le_bytes()),
            Labels::Scalar { values, .. } | Labels::Angle { values } => h.update(values[i].to_le_bytes()),
            Labels::Boxes { values } => {
                h.update((values[i].len() as u32).to_le_bytes());
                for b in &values[i] {
                    for v in [b.x_min, b.y_min, b.x_max, b.y_max, b.score.unwrap_or(-1.0)] {
                        h.update(v.to_le_bytes());
                    }
                }
            }
        }
    }
    hex::encode(h.finalize())
}
