//! Shared randomness: one broadcast seed expanded by a keyed generator, so
//! any two nodes that agree on the key draw identical coins without talking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn keyed(seed: u64, domain: u8, phase: u32, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8] = domain;
    key[12..16].copy_from_slice(&phase.to_le_bytes());
    key[16..24].copy_from_slice(&a.to_le_bytes());
    key[24..32].copy_from_slice(&b.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// `kappa` coins for the unordered pair {u, v}; symmetric in u and v.
pub fn pair_coins(seed: u64, phase: u32, u: usize, v: usize, kappa: usize) -> Vec<u64> {
    let (a, b) = if u <= v { (u, v) } else { (v, u) };
    let mut rng = keyed(seed, 1, phase, a as u64, b as u64);
    let mut words: Vec<u64> = (0..kappa.div_ceil(64)).map(|_| rng.gen()).collect();
    mask_tail(&mut words, kappa);
    words
}

/// Residue in [0, modulus) attached to `label` for test `j`.
pub fn label_residue(seed: u64, phase: u32, label: u32, j: usize, modulus: u64) -> u64 {
    let mut rng = keyed(seed, 2, phase, u64::from(label), j as u64);
    rng.gen_range(0..modulus)
}

pub(crate) fn mask_tail(words: &mut [u64], bits: usize) {
    if !bits.is_multiple_of(64) {
        if let Some(last) = words.last_mut() {
            *last &= (1u64 << (bits % 64)) - 1;
        }
    }
}

/// Number of parity tests for failure probability n^-c.
pub fn kappa_for(n: usize, c: usize) -> usize {
    (c * crate::network::log2_ceil(n)).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_and_deterministic() {
        assert_eq!(pair_coins(7, 3, 2, 9, 70), pair_coins(7, 3, 9, 2, 70));
        assert_ne!(pair_coins(7, 3, 2, 9, 64), pair_coins(8, 3, 2, 9, 64));
        let w = pair_coins(1, 0, 0, 1, 5);
        assert_eq!(w.len(), 1);
        assert!(w[0] < 32);
    }

    #[test]
    fn residues_in_range() {
        for j in 0..50 {
            assert!(label_residue(3, 1, 4, j, 3) < 3);
        }
    }
}
