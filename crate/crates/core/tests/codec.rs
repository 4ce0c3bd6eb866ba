mod common;

use std::path::PathBuf;

use proptest::prelude::*;
use wearsafe_core::netsim::wire::{decode_bsm, decode_frame, encode_bsm, Bsm, Frame, WireError, CRC_LEN, HEADER_LEN};
use wearsafe_core::rng::RngStream;

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/bsm_zero.bin")
}

#[test]
fn golden_zero_bsm() {
    let bytes = encode_bsm(&Bsm::zero()).unwrap();
    let path = golden_path();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &bytes).unwrap();
    }
    let golden = std::fs::read(&path).expect("golden file missing; run with UPDATE_GOLDEN=1");
    assert_eq!(bytes, golden, "encoder output drifted from the golden file");
    assert_eq!(decode_bsm(&golden).unwrap(), Bsm::zero());
}

#[test]
fn random_round_trips_are_canonical() {
    let mut rng = RngStream::derive(11, 0, "test/codec");
    for _ in 0..500 {
        let b = common::random_bsm(&mut rng);
        let bytes = encode_bsm(&b).unwrap();
        let d = decode_bsm(&bytes).unwrap();
        assert_eq!(common::quantization_error(&b, &d), None);
        assert_eq!(encode_bsm(&d).unwrap(), bytes);
    }
}

#[test]
fn every_error_class_is_reachable() {
    let good = encode_bsm(&Bsm::zero()).unwrap();
    let reseal = |mut body: Vec<u8>| {
        let crc = crc32fast::hash(&body);
        body.extend_from_slice(&crc.to_le_bytes());
        body
    };

    assert!(matches!(
        decode_frame(&good[..5]),
        Err(WireError::TruncatedFrame { .. })
    ));
    let mut v = good.clone();
    v[1] = 0;
    assert!(matches!(decode_frame(&v), Err(WireError::BadMagic(_))));
    let mut v = good.clone();
    v[2] = 2;
    assert_eq!(decode_frame(&v), Err(WireError::BadVersion(2)));
    let mut v = good.clone();
    let last = v.len() - 1;
    v[last] ^= 1;
    assert!(matches!(decode_frame(&v), Err(WireError::BadCrc { .. })));
    let mut body = good[..good.len() - CRC_LEN].to_vec();
    body[3] = 7;
    assert_eq!(decode_frame(&reseal(body)), Err(WireError::RangeViolation("msg_type")));
    let mut body = good[..good.len() - CRC_LEN].to_vec();
    body[HEADER_LEN + 32] = 0x05;
    assert!(matches!(decode_frame(&reseal(body)), Err(WireError::RangeViolation(_))));
}

#[test]
fn truncation_anywhere_never_panics() {
    let mut rng = RngStream::derive(12, 0, "test/codec");
    let bytes = encode_bsm(&common::random_bsm(&mut rng)).unwrap();
    for n in 0..bytes.len() {
        assert!(decode_frame(&bytes[..n]).is_err());
    }
    assert!(matches!(decode_frame(&bytes), Ok(Frame::Bsm(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..300)) {
        let _ = decode_frame(&bytes);
    }

    #[test]
    fn single_bit_flips_are_detected(seed in 0u64..1000, bit in 0usize..8, pos_frac in 0.0..1.0f64) {
        let mut rng = RngStream::derive(seed, 0, "test/codec-flip");
        let bytes = encode_bsm(&common::random_bsm(&mut rng)).unwrap();
        let mut v = bytes.clone();
        let pos = ((v.len() as f64 * pos_frac) as usize).min(v.len() - 1);
        v[pos] ^= 1 << bit;
        prop_assert!(decode_frame(&v).is_err());
    }
}
