//! GeoHex grid laws against the committed reference vectors and seeded
//! randomized sampling. The vector file was produced by an independent
//! implementation (tools/geohex_reference.py) and is the conformance oracle
//! for `encode`.

use iotmarket::geohex::{self, GeoCode, GeoPoint};
use rand_core::RngCore;

fn sample_point(rng: &mut rand_chacha::ChaCha8Rng) -> GeoPoint {
    let u = rng.next_u64() as f64 / u64::MAX as f64;
    let v = rng.next_u64() as f64 / u64::MAX as f64;
    GeoPoint::new(
        -geohex::MAX_LAT + 2.0 * geohex::MAX_LAT * u,
        -180.0 + 360.0 * v,
    )
}

fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand_core::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn committed_reference_vectors_match_encode_exactly() {
    let data = include_str!("data/geohex_vectors.txt");
    let mut rows = 0;
    for line in data.lines() {
        let mut parts = line.split_whitespace();
        let lat: f64 = parts.next().unwrap().parse().unwrap();
        let lon: f64 = parts.next().unwrap().parse().unwrap();
        let level: u8 = parts.next().unwrap().parse().unwrap();
        let expected = parts.next().unwrap();
        let code = geohex::encode(GeoPoint::new(lat, lon), level).unwrap();
        assert_eq!(code.as_str(), expected, "row: {line}");
        rows += 1;
    }
    assert!(rows >= 100, "vector file must hold at least 100 rows");
}

#[test]
fn length_law_randomized() {
    let mut rng = rng(1);
    for _ in 0..10_000 {
        let p = sample_point(&mut rng);
        let level = (rng.next_u32() % 16) as u8;
        let code = geohex::encode(p, level).unwrap();
        assert_eq!(code.as_str().len(), level as usize + 2);
        assert_eq!(code.level(), level);
    }
}

#[test]
fn fixed_point_law_randomized() {
    let mut rng = rng(2);
    for _ in 0..10_000 {
        let p = sample_point(&mut rng);
        let level = (rng.next_u32() % 16) as u8;
        let code = geohex::encode(p, level).unwrap();
        let cell = geohex::decode(&code).unwrap();
        assert_eq!(cell.code, code);
        let again = geohex::encode_raw(cell.center.lat, cell.center.lon, level).unwrap();
        assert_eq!(again, code, "center {:?}", cell.center);
    }
}

#[test]
fn encode_is_deterministic_across_instances() {
    let mut a = rng(3);
    for _ in 0..1_000 {
        let p = sample_point(&mut a);
        let level = (a.next_u32() % 16) as u8;
        assert_eq!(
            geohex::encode(p, level).unwrap(),
            geohex::encode(p, level).unwrap()
        );
    }
}

#[test]
fn parse_accepts_every_encoded_code() {
    let mut rng = rng(4);
    for _ in 0..2_000 {
        let p = sample_point(&mut rng);
        let level = (rng.next_u32() % 16) as u8;
        let code = geohex::encode(p, level).unwrap();
        let parsed = GeoCode::parse(code.as_str()).unwrap();
        assert_eq!(parsed, code);
    }
}
