//! Password hashing and bearer tokens.

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine as _;
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use subtle::ConstantTimeEq;

pub const PBKDF2_ROUNDS: u32 = 100_000;

/// A salted PBKDF2-HMAC-SHA256 password hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PasswordHash {
    pub salt: String,
    pub rounds: u32,
    pub hash: String,
}

impl PasswordHash {
    pub fn new(password: &str) -> Self {
        let mut salt = [0u8; 16];
        OsRng.fill_bytes(&mut salt);
        PasswordHash {
            salt: URL_SAFE_NO_PAD.encode(salt),
            rounds: PBKDF2_ROUNDS,
            hash: URL_SAFE_NO_PAD.encode(derive(password, &salt, PBKDF2_ROUNDS)),
        }
    }

    /// Constant-time check of `password` against this hash.
    pub fn verify(&self, password: &str) -> bool {
        let (Ok(salt), Ok(want)) = (URL_SAFE_NO_PAD.decode(&self.salt), URL_SAFE_NO_PAD.decode(&self.hash)) else {
            return false;
        };
        let got = derive(password, &salt, self.rounds);
        got.as_slice().ct_eq(&want).into()
    }
}

fn derive(password: &str, salt: &[u8], rounds: u32) -> [u8; 32] {
    let mut out = [0u8; 32];
    pbkdf2::pbkdf2_hmac::<Sha256>(password.as_bytes(), salt, rounds, &mut out);
    out
}

/// A fresh 128-bit token, URL-safe base64.
pub fn new_token() -> String {
    let mut bytes = [0u8; 16];
    OsRng.fill_bytes(&mut bytes);
    URL_SAFE_NO_PAD.encode(bytes)
}

/// Tokens are stored by digest only.
pub fn token_digest(token: &str) -> String {
    URL_SAFE_NO_PAD.encode(Sha256::digest(token.as_bytes()))
}

pub fn secrets_equal(a: &str, b: &str) -> bool {
    a.as_bytes().ct_eq(b.as_bytes()).into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_round_trip() {
        let h = PasswordHash::new("hunter2");
        assert!(h.verify("hunter2"));
        assert!(!h.verify("hunter3"));
        assert_ne!(PasswordHash::new("hunter2").salt, h.salt);
    }

    #[test]
    fn tokens_are_128_bit() {
        let t = new_token();
        assert_eq!(URL_SAFE_NO_PAD.decode(&t).unwrap().len(), 16);
        assert_ne!(t, new_token());
        assert!(t.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_'));
    }
}
