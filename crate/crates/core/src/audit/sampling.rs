//! Reproducible sampling with replacement.
//!
//! Draw `i` (1-based) hashes the UTF-8 text `"{seed},{i}"` with SHA-256,
//! reads the digest as a big-endian 256-bit integer and reduces it modulo
//! the population size `N`. Digests at or above the largest multiple of
//! `N` below 2^256 are rejected and the draw rehashes `"{seed},{i},{k}"`
//! for `k = 1, 2, ...` until one is accepted, so every position is
//! exactly equally likely.
//!
//! Positions below the number of CVRs select that CVR; the remaining
//! positions are phantom cards with ids `phantom-{position}`.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Draw {
    /// 1-based draw number.
    pub index: u64,
    /// 0-based position in the population.
    pub position: u64,
    pub ballot_id: String,
    pub phantom: bool,
}

pub const PHANTOM_PREFIX: &str = "phantom-";

pub fn phantom_id(position: u64) -> String {
    format!("{PHANTOM_PREFIX}{position}")
}

pub fn is_phantom_id(id: &str) -> bool {
    id.starts_with(PHANTOM_PREFIX)
}

fn digest(text: &str) -> BigUint {
    BigUint::from_bytes_be(&Sha256::digest(text.as_bytes()))
}

/// Population position selected by draw `index`.
pub fn draw_position(seed: &str, index: u64, population: u64) -> Result<u64> {
    if population == 0 {
        return Err(Error::Domain("cannot sample from an empty population".into()));
    }
    let n = BigUint::from(population);
    let space = BigUint::one() << 256usize;
    let limit = &space - (&space % &n);
    let mut attempt = 0u64;
    loop {
        let text = if attempt == 0 {
            format!("{seed},{index}")
        } else {
            format!("{seed},{index},{attempt}")
        };
        let value = digest(&text);
        if value < limit {
            return Ok((value % &n).to_u64().expect("residue below a u64 modulus"));
        }
        attempt += 1;
    }
}

/// Draws `count` cards, numbered from `already_drawn + 1`.
pub fn draw_sample(
    seed: &str,
    cvr_ids: &[String],
    population: u64,
    already_drawn: u64,
    count: u64,
) -> Result<Vec<Draw>> {
    if (cvr_ids.len() as u64) > population {
        return Err(Error::Validation(format!(
            "{} CVRs exceed the population of {population} cards",
            cvr_ids.len()
        )));
    }
    (already_drawn + 1..=already_drawn + count)
        .map(|index| {
            let position = draw_position(seed, index, population)?;
            let (ballot_id, phantom) = match cvr_ids.get(position as usize) {
                Some(id) => (id.clone(), false),
                None => (phantom_id(position), true),
            };
            Ok(Draw {
                index,
                position,
                ballot_id,
                phantom,
            })
        })
        .collect()
}
