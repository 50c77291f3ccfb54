//! Key-derivation conformance against the committed vector file (computed
//! by an independent HMAC implementation, tools/derive_key_vectors.py) plus
//! randomized tamper-detection and separation properties.

use iotmarket::crypto::{
    self, decrypt, derive_key, encrypt, generate_keypair, unwrap_key, wrap_key, EncryptionScheme,
    MasterKey, SymKey,
};
use iotmarket::ledger::Address;
use proptest::prelude::*;
use rand_core::{RngCore, SeedableRng};

#[test]
fn committed_derivation_vectors_match() {
    let data = include_str!("data/key_derivation_vectors.txt");
    let mut rows = 0;
    for line in data.lines() {
        let mut parts = line.split_whitespace();
        let master_hex = parts.next().unwrap();
        let index: u64 = parts.next().unwrap().parse().unwrap();
        let expected = parts.next().unwrap();
        let master_bytes: [u8; 32] = hex::decode(master_hex).unwrap().try_into().unwrap();
        let key = derive_key(&MasterKey::from_bytes(master_bytes), index, EncryptionScheme::SchemeA);
        assert_eq!(hex::encode(key.bytes()), expected, "row: {line}");
        rows += 1;
    }
    assert!(rows >= 30);
}

#[test]
fn ten_thousand_indices_all_distinct() {
    let master = MasterKey::from_bytes([0xAB; 32]);
    let mut seen = std::collections::HashSet::new();
    for index in 0..10_000u64 {
        let key = derive_key(&master, index, EncryptionScheme::SchemeA);
        assert!(seen.insert(*key.bytes()), "collision at index {index}");
    }
}

#[test]
fn megabyte_roundtrip_bit_identical() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let mut payload = vec![0u8; 1 << 20];
    rng.fill_bytes(&mut payload);
    for scheme in [EncryptionScheme::SchemeA, EncryptionScheme::SchemeB] {
        let key = derive_key(&MasterKey::from_bytes([1; 32]), 0, scheme);
        let ct = encrypt(&key, &payload);
        assert_eq!(decrypt(&key, &ct).unwrap(), payload);
    }
}

#[test]
fn full_handshake_pipeline_identity_across_schemes() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let buyer = generate_keypair(b"pipeline buyer seed").unwrap();
    let buyer_addr = Address::from_bytes([0x11; 20]);
    let master = MasterKey::generate(&mut rng);
    for (i, scheme) in [EncryptionScheme::SchemeA, EncryptionScheme::SchemeB]
        .into_iter()
        .enumerate()
    {
        let mut data = vec![0u8; 1000 * (i + 1)];
        rng.fill_bytes(&mut data);
        let key = derive_key(&master, i as u64, scheme);
        let blob = encrypt(&key, &data);
        let wrapped = wrap_key(buyer_addr, &buyer.public, &key);
        let opened = unwrap_key(&buyer.private, &wrapped).unwrap();
        let rebuilt = SymKey::from_parts(opened, key.index, key.scheme);
        assert_eq!(decrypt(&rebuilt, &blob).unwrap(), data);
    }
}

proptest! {
    #[test]
    fn any_single_bit_flip_fails_authentication(
        payload in proptest::collection::vec(any::<u8>(), 0..512),
        seed in any::<u64>(),
        flip in any::<proptest::sample::Index>(),
        scheme_b in any::<bool>(),
    ) {
        let scheme = if scheme_b { EncryptionScheme::SchemeB } else { EncryptionScheme::SchemeA };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let key = derive_key(&MasterKey::generate(&mut rng), 0, scheme);
        let mut ct = encrypt(&key, &payload);
        let bit = flip.index(ct.len() * 8);
        ct[bit / 8] ^= 1 << (bit % 8);
        prop_assert_eq!(decrypt(&key, &ct).unwrap_err(), crypto::CryptoError::AuthenticationFailure);
    }

    #[test]
    fn signature_rejects_any_message_bit_flip(
        msg in proptest::collection::vec(any::<u8>(), 1..256),
        flip in any::<proptest::sample::Index>(),
    ) {
        let kp = generate_keypair(b"bit flip signer seed").unwrap();
        let sig = crypto::sign(&kp.private, &msg);
        let mut tampered = msg.clone();
        let bit = flip.index(tampered.len() * 8);
        tampered[bit / 8] ^= 1 << (bit % 8);
        prop_assert!(!crypto::verify(&kp.public, &tampered, &sig));
    }
}
