//! Key material and primitives for the payload-encryption handshake:
//! hierarchically deterministic per-upload symmetric keys, authenticated
//! payload encryption, public-key wrapping of symmetric keys for a specific
//! buyer, and detached signatures for channel states.
//!
//! Everything here is deterministic. Keypairs derive from seeds, payload
//! nonces derive from key and plaintext, and wrap ephemerals derive from the
//! wrapped key and recipient, so whole simulation runs replay bit-identically.

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::Aes256Gcm;
use chacha20poly1305::ChaCha20Poly1305;
use hmac::{Hmac, Mac};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ledger::Address;

type HmacSha256 = Hmac<Sha256>;

const NONCE_LEN: usize = 12;
const TAG_LEN: usize = 16;
const WRAPPED_LEN: usize = 32 + 32 + TAG_LEN;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("seed must be at least 16 bytes")]
    SeedTooShort,
    #[error("unsupported encryption scheme id")]
    UnsupportedScheme,
    #[error("ciphertext failed authentication")]
    AuthenticationFailure,
    #[error("wrapped key cannot be opened with this private key")]
    UnwrapFailure,
    #[error("malformed public key encoding")]
    MalformedPublicKey,
}

/// Identifier of a payload encryption scheme. Ids are stable wire values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncryptionScheme {
    /// Authenticated stream cipher (ChaCha20-Poly1305).
    SchemeA,
    /// Authenticated block cipher (AES-256-GCM).
    SchemeB,
}

impl EncryptionScheme {
    pub fn id(&self) -> &'static str {
        match self {
            EncryptionScheme::SchemeA => "A",
            EncryptionScheme::SchemeB => "B",
        }
    }

    pub fn from_id(id: &str) -> Result<Self, CryptoError> {
        match id {
            "A" => Ok(EncryptionScheme::SchemeA),
            "B" => Ok(EncryptionScheme::SchemeB),
            _ => Err(CryptoError::UnsupportedScheme),
        }
    }
}

impl std::fmt::Display for EncryptionScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

/// Device master secret. Never serialized; the redacted Debug is deliberate.
#[derive(Clone)]
pub struct MasterKey([u8; 32]);

impl MasterKey {
    pub fn from_bytes(secret: [u8; 32]) -> Self {
        MasterKey(secret)
    }

    /// Provisioning helper: derives a master key from an RNG stream.
    pub fn generate(rng: &mut impl rand_core::RngCore) -> Self {
        let mut secret = [0u8; 32];
        rng.fill_bytes(&mut secret);
        MasterKey(secret)
    }
}

impl std::fmt::Debug for MasterKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("MasterKey(..)")
    }
}

/// One derived per-upload symmetric key.
#[derive(Clone)]
pub struct SymKey {
    key: [u8; 32],
    pub index: u64,
    pub scheme: EncryptionScheme,
}

impl SymKey {
    /// Reassembles a key from unwrapped bytes plus the payload metadata.
    pub fn from_parts(key: [u8; 32], index: u64, scheme: EncryptionScheme) -> Self {
        SymKey { key, index, scheme }
    }

    pub fn bytes(&self) -> &[u8; 32] {
        &self.key
    }
}

impl std::fmt::Debug for SymKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SymKey {{ index: {}, scheme: {} }}", self.index, self.scheme)
    }
}

fn keyed_hash(key: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut mac = <HmacSha256 as Mac>::new_from_slice(key).expect("hmac accepts any key length");
    for part in parts {
        mac.update(part);
    }
    mac.finalize().into_bytes().into()
}

/// Derives the per-upload key: `HMAC-SHA256(master, index as 8-byte BE)`.
pub fn derive_key(master: &MasterKey, index: u64, scheme: EncryptionScheme) -> SymKey {
    let key = keyed_hash(&master.0, &[&index.to_be_bytes()]);
    SymKey { key, index, scheme }
}

fn aead_encrypt(scheme: EncryptionScheme, key: &[u8; 32], nonce: &[u8], pt: &[u8]) -> Vec<u8> {
    let payload = Payload { msg: pt, aad: &[] };
    match scheme {
        EncryptionScheme::SchemeA => ChaCha20Poly1305::new(key.into())
            .encrypt(nonce.into(), payload)
            .expect("encryption is infallible for in-memory buffers"),
        EncryptionScheme::SchemeB => Aes256Gcm::new(key.into())
            .encrypt(nonce.into(), payload)
            .expect("encryption is infallible for in-memory buffers"),
    }
}

fn aead_decrypt(
    scheme: EncryptionScheme,
    key: &[u8; 32],
    nonce: &[u8],
    ct: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    let payload = Payload { msg: ct, aad: &[] };
    let out = match scheme {
        EncryptionScheme::SchemeA => ChaCha20Poly1305::new(key.into()).decrypt(nonce.into(), payload),
        EncryptionScheme::SchemeB => Aes256Gcm::new(key.into()).decrypt(nonce.into(), payload),
    };
    out.map_err(|_| CryptoError::AuthenticationFailure)
}

/// Authenticated encryption. The nonce is derived from key and plaintext
/// (each key encrypts one upload, so this stays misuse-free) and prepended
/// to the ciphertext.
pub fn encrypt(k: &SymKey, plaintext: &[u8]) -> Vec<u8> {
    let nonce_full = keyed_hash(&k.key, &[b"nonce", plaintext]);
    let nonce = &nonce_full[..NONCE_LEN];
    let mut out = Vec::with_capacity(NONCE_LEN + plaintext.len() + TAG_LEN);
    out.extend_from_slice(nonce);
    out.extend_from_slice(&aead_encrypt(k.scheme, &k.key, nonce, plaintext));
    out
}

/// Inverse of [`encrypt`]; any mutation of the ciphertext fails.
pub fn decrypt(k: &SymKey, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if ciphertext.len() < NONCE_LEN + TAG_LEN {
        return Err(CryptoError::AuthenticationFailure);
    }
    let (nonce, body) = ciphertext.split_at(NONCE_LEN);
    aead_decrypt(k.scheme, &k.key, nonce, body)
}

/// Combined key-wrapping and signing public key, hex-encoded on the wire as
/// 128 lowercase hex characters (wrap half then sign half).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PublicKey {
    wrap: [u8; 32],
    sign: [u8; 32],
}

impl PublicKey {
    pub fn to_hex(&self) -> String {
        let mut s = hex::encode(self.wrap);
        s.push_str(&hex::encode(self.sign));
        s
    }

    pub fn parse_hex(s: &str) -> Result<Self, CryptoError> {
        let bytes = hex::decode(s).map_err(|_| CryptoError::MalformedPublicKey)?;
        if bytes.len() != 64 || s.chars().any(|c| c.is_ascii_uppercase()) {
            return Err(CryptoError::MalformedPublicKey);
        }
        let mut wrap = [0u8; 32];
        let mut sign = [0u8; 32];
        wrap.copy_from_slice(&bytes[..32]);
        sign.copy_from_slice(&bytes[32..]);
        Ok(PublicKey { wrap, sign })
    }
}

/// Secret half of a keypair.
#[derive(Clone)]
pub struct PrivateKey {
    wrap: [u8; 32],
    sign: [u8; 32],
}

impl std::fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PrivateKey(..)")
    }
}

#[derive(Debug, Clone)]
pub struct KeyPair {
    pub public: PublicKey,
    pub private: PrivateKey,
}

/// Deterministically expands a seed (>= 16 bytes) into a keypair.
pub fn generate_keypair(seed: &[u8]) -> Result<KeyPair, CryptoError> {
    if seed.len() < 16 {
        return Err(CryptoError::SeedTooShort);
    }
    let wrap_secret: [u8; 32] = Sha256::new_with_prefix(b"keypair-wrap")
        .chain_update(seed)
        .finalize()
        .into();
    let sign_seed: [u8; 32] = Sha256::new_with_prefix(b"keypair-sign")
        .chain_update(seed)
        .finalize()
        .into();
    let wrap_pub = x25519_dalek::PublicKey::from(&x25519_dalek::StaticSecret::from(wrap_secret));
    let sign_pub = ed25519_dalek::SigningKey::from_bytes(&sign_seed)
        .verifying_key()
        .to_bytes();
    Ok(KeyPair {
        public: PublicKey {
            wrap: *wrap_pub.as_bytes(),
            sign: sign_pub,
        },
        private: PrivateKey {
            wrap: wrap_secret,
            sign: sign_seed,
        },
    })
}

/// A symmetric key sealed to one recipient's public key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WrappedKey {
    pub ciphertext: Vec<u8>,
    pub recipient: Address,
}

/// Seals a symmetric key to `recipient_pub`: deterministic X25519 ephemeral,
/// shared-secret KEK, then AEAD over the raw key bytes. Output length is
/// constant (80 bytes) for 32-byte keys.
pub fn wrap_key(recipient: Address, recipient_pub: &PublicKey, k: &SymKey) -> WrappedKey {
    let eph_secret: [u8; 32] = keyed_hash(
        &k.key,
        &[b"wrap-eph", &recipient_pub.wrap, &recipient.into_bytes()],
    );
    let eph_secret = x25519_dalek::StaticSecret::from(eph_secret);
    let eph_pub = x25519_dalek::PublicKey::from(&eph_secret);
    let shared = eph_secret.diffie_hellman(&x25519_dalek::PublicKey::from(recipient_pub.wrap));
    let kek = keyed_hash(
        shared.as_bytes(),
        &[b"kek", eph_pub.as_bytes(), &recipient_pub.wrap],
    );
    let body = aead_encrypt(
        EncryptionScheme::SchemeA,
        &kek,
        &[0u8; NONCE_LEN],
        &k.key,
    );
    let mut ciphertext = Vec::with_capacity(WRAPPED_LEN);
    ciphertext.extend_from_slice(eph_pub.as_bytes());
    ciphertext.extend_from_slice(&body);
    WrappedKey {
        ciphertext,
        recipient,
    }
}

/// Opens a wrapped key; returns the raw 32 key bytes.
pub fn unwrap_key(private: &PrivateKey, wrapped: &WrappedKey) -> Result<[u8; 32], CryptoError> {
    if wrapped.ciphertext.len() != WRAPPED_LEN {
        return Err(CryptoError::UnwrapFailure);
    }
    let mut eph_pub = [0u8; 32];
    eph_pub.copy_from_slice(&wrapped.ciphertext[..32]);
    let secret = x25519_dalek::StaticSecret::from(private.wrap);
    let my_pub = x25519_dalek::PublicKey::from(&secret);
    let shared = secret.diffie_hellman(&x25519_dalek::PublicKey::from(eph_pub));
    let kek = keyed_hash(shared.as_bytes(), &[b"kek", &eph_pub, my_pub.as_bytes()]);
    let out = aead_decrypt(
        EncryptionScheme::SchemeA,
        &kek,
        &[0u8; NONCE_LEN],
        &wrapped.ciphertext[32..],
    )
    .map_err(|_| CryptoError::UnwrapFailure)?;
    let mut key = [0u8; 32];
    key.copy_from_slice(&out);
    Ok(key)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; 64]);

impl Signature {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

pub fn sign(private: &PrivateKey, message: &[u8]) -> Signature {
    use ed25519_dalek::Signer;
    let key = ed25519_dalek::SigningKey::from_bytes(&private.sign);
    Signature(key.sign(message).to_bytes())
}

/// True iff the signature verifies under the key. Malformed key material
/// verifies false rather than erroring.
pub fn verify(public: &PublicKey, message: &[u8], signature: &Signature) -> bool {
    use ed25519_dalek::Verifier;
    let Ok(key) = ed25519_dalek::VerifyingKey::from_bytes(&public.sign) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
    key.verify(message, &sig).is_ok()
}
