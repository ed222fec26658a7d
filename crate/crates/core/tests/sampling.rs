use irv_rla::audit::sampling::{draw_position, draw_sample};
use proptest::prelude::*;
use sha2::{Digest, Sha256};

// Positions computed by a separate implementation (Python hashlib,
// arbitrary-precision integers) of the published generator.
const PILOT_SEED: &str = "9f8e7d6c5b4a39281706";
const PILOT_POSITIONS: [u64; 20] = [
    90084, 24441, 59683, 3331, 23351, 9758, 156330, 89217, 49989, 79978, 89683, 43498, 166611, 64320, 62602, 103250,
    104930, 160397, 70387, 76024,
];
const SMALL_POSITIONS: [u64; 20] = [8, 11, 11, 1, 12, 13, 8, 12, 4, 9, 10, 8, 13, 9, 2, 11, 10, 3, 11, 0];
const WIDE_POSITIONS: [u64; 5] = [
    3174536965448140706,
    15705674390610957362,
    17539099149596731100,
    10474346862864359383,
    5604233004771528681,
];

#[test]
fn matches_frozen_reference_positions() {
    for (i, &want) in PILOT_POSITIONS.iter().enumerate() {
        assert_eq!(draw_position(PILOT_SEED, i as u64 + 1, 192_000).unwrap(), want);
    }
    for (i, &want) in SMALL_POSITIONS.iter().enumerate() {
        assert_eq!(draw_position("seed", i as u64 + 1, 17).unwrap(), want);
    }
    for (i, &want) in WIDE_POSITIONS.iter().enumerate() {
        assert_eq!(
            draw_position("öffentlich", i as u64 + 1, 18_446_744_073_709_551_557).unwrap(),
            want
        );
    }
}

/// Digest mod n by Horner's rule over the bytes, in 128-bit arithmetic.
fn horner(seed: &str, index: u64, n: u64) -> u64 {
    let digest = Sha256::digest(format!("{seed},{index}").as_bytes());
    digest.iter().fold(0u128, |r, &b| (r * 256 + b as u128) % n as u128) as u64
}

proptest! {
    #[test]
    fn agrees_with_bytewise_reduction(seed in "[0-9a-f]{1,40}", index in 1u64..1_000_000, n in 1u64..u64::MAX) {
        // The rejected tail has probability below n / 2^256, so the first
        // digest is always the one used here.
        prop_assert_eq!(draw_position(&seed, index, n).unwrap(), horner(&seed, index, n));
    }
}

#[test]
fn sample_lists_are_reproducible() {
    let ids: Vec<String> = (0..192_000).map(|i| format!("vbm-{:06}", i + 1)).collect();
    let a = draw_sample(PILOT_SEED, &ids, 192_000, 0, 200).unwrap();
    let b = draw_sample(PILOT_SEED, &ids, 192_000, 0, 200).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|d| !d.phantom));
    let first: Vec<u64> = a[..20].iter().map(|d| d.position).collect();
    assert_eq!(first, PILOT_POSITIONS);
    assert_eq!(a[0].ballot_id, format!("vbm-{:06}", PILOT_POSITIONS[0] + 1));
    assert!(draw_sample(PILOT_SEED, &ids, 192_000, 200, 0).unwrap().is_empty());
    let tail = draw_sample(PILOT_SEED, &ids, 192_000, 150, 50).unwrap();
    assert_eq!(tail, a[150..]);
}

#[test]
fn positions_are_close_to_uniform() {
    let n = 10u64;
    let draws = 20_000;
    let mut counts = vec![0f64; n as usize];
    for i in 1..=draws {
        counts[draw_position("uniform", i, n).unwrap() as usize] += 1.0;
    }
    let expected = draws as f64 / n as f64;
    let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    // 9 degrees of freedom; 27.9 is the 0.999 quantile.
    assert!(chi2 < 27.9, "chi-square {chi2}");
}
