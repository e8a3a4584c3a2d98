//! H3 universal hashing.
//!
//! A hash function in the family is a list of `n` random `m`-bit words; the
//! hash of an `n`-bit input is the XOR of the words selected by its set bits.
//! No multiplications or additions are involved. A [`H3HashFamily`] holds `k`
//! such functions and is shared by every filter of a model.
//!
//! Every function is linear over GF(2): `h(x ^ y) == h(x) ^ h(y)`. For
//! distinct inputs and a freshly drawn function, the probability that the
//! two hashes collide is exactly `2^-m`.

use rand::Rng;
use thiserror::Error;

/// Widest filter input, in bits. Filter inputs are packed into a `u64`.
pub const MAX_INPUT_BITS: usize = 64;
/// Widest address, in bits.
pub const MAX_OUTPUT_BITS: u32 = 30;

#[derive(Debug, Error, PartialEq)]
pub enum HashError {
    #[error("input bits must be in 1..={MAX_INPUT_BITS}, got {0}")]
    InputBits(usize),
    #[error("output bits must be in 1..={MAX_OUTPUT_BITS}, got {0}")]
    OutputBits(u32),
    #[error("a hash family needs at least one function")]
    NoFunctions,
    #[error("hash function {which} requested but the family has {count}")]
    NoSuchFunction { which: usize, count: usize },
    #[error("expected {expected} parameters, got {found}")]
    ParameterCount { expected: usize, found: usize },
    #[error("parameter {index} = {value} does not fit in {bits} bits")]
    ParameterRange { index: usize, value: u32, bits: u32 },
}

/// `k` H3 hash functions from `n`-bit inputs to `m`-bit addresses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct H3HashFamily {
    input_bits: usize,
    output_bits: u32,
    hash_count: usize,
    /// `hash_count` rows of `input_bits` words.
    parameters: Vec<u32>,
}

fn check_shape(input_bits: usize, output_bits: u32, hash_count: usize) -> Result<(), HashError> {
    if input_bits == 0 || input_bits > MAX_INPUT_BITS {
        return Err(HashError::InputBits(input_bits));
    }
    if output_bits == 0 || output_bits > MAX_OUTPUT_BITS {
        return Err(HashError::OutputBits(output_bits));
    }
    if hash_count == 0 {
        return Err(HashError::NoFunctions);
    }
    Ok(())
}

impl H3HashFamily {
    /// Draws `input_bits * hash_count` parameters uniformly from `[0, 2^output_bits)`.
    pub fn sample<R: Rng + ?Sized>(
        rng: &mut R,
        input_bits: usize,
        output_bits: u32,
        hash_count: usize,
    ) -> Result<Self, HashError> {
        check_shape(input_bits, output_bits, hash_count)?;
        let bound = 1u32 << output_bits;
        let parameters = (0..input_bits * hash_count)
            .map(|_| rng.random_range(0..bound))
            .collect();
        Ok(Self {
            input_bits,
            output_bits,
            hash_count,
            parameters,
        })
    }

    /// Builds a family from explicit parameters, row `i` holding function `i`.
    pub fn from_parameters(
        input_bits: usize,
        output_bits: u32,
        hash_count: usize,
        parameters: Vec<u32>,
    ) -> Result<Self, HashError> {
        check_shape(input_bits, output_bits, hash_count)?;
        let expected = input_bits * hash_count;
        if parameters.len() != expected {
            return Err(HashError::ParameterCount {
                expected,
                found: parameters.len(),
            });
        }
        if let Some((index, &value)) = parameters
            .iter()
            .enumerate()
            .find(|(_, v)| **v >> output_bits != 0)
        {
            return Err(HashError::ParameterRange {
                index,
                value,
                bits: output_bits,
            });
        }
        Ok(Self {
            input_bits,
            output_bits,
            hash_count,
            parameters,
        })
    }

    pub fn input_bits(&self) -> usize {
        self.input_bits
    }

    pub fn output_bits(&self) -> u32 {
        self.output_bits
    }

    pub fn hash_count(&self) -> usize {
        self.hash_count
    }

    /// Number of addressable slots, `2^output_bits`.
    pub fn table_size(&self) -> usize {
        1usize << self.output_bits
    }

    /// All parameters, function-major.
    pub fn parameters(&self) -> &[u32] {
        &self.parameters
    }

    /// Parameters of function `which`.
    pub fn function(&self, which: usize) -> Result<&[u32], HashError> {
        if which >= self.hash_count {
            return Err(HashError::NoSuchFunction {
                which,
                count: self.hash_count,
            });
        }
        let n = self.input_bits;
        Ok(&self.parameters[which * n..(which + 1) * n])
    }

    /// Hashes `x` with function `which`.
    ///
    /// Bit `i` of `x` (least significant first) selects parameter `i`. Bits at
    /// or above `input_bits` are ignored.
    pub fn hash(&self, which: usize, x: u64) -> Result<u32, HashError> {
        Ok(xor_fold(self.function(which)?, x))
    }

    /// Hashes `x` with every function, writing `hash_count` addresses to `out`.
    #[inline]
    pub fn hash_all(&self, x: u64, out: &mut [u32]) {
        for (row, slot) in self
            .parameters
            .chunks_exact(self.input_bits)
            .zip(out.iter_mut())
        {
            *slot = xor_fold(row, x);
        }
    }
}

#[inline]
fn xor_fold(params: &[u32], x: u64) -> u32 {
    let mut rest = if params.len() >= 64 {
        x
    } else {
        x & ((1u64 << params.len()) - 1)
    };
    let mut h = 0;
    while rest != 0 {
        h ^= params[rest.trailing_zeros() as usize];
        rest &= rest - 1;
    }
    h
}

/// Packs a slice of bits into a filter input, element `i` becoming bit `i`.
pub fn pack_bits(bits: &[bool]) -> u64 {
    debug_assert!(bits.len() <= MAX_INPUT_BITS);
    bits.iter()
        .enumerate()
        .fold(0u64, |acc, (i, &b)| acc | ((b as u64) << i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn same_seed_same_family() {
        let a = H3HashFamily::sample(&mut ChaCha8Rng::seed_from_u64(11), 28, 10, 2).unwrap();
        let b = H3HashFamily::sample(&mut ChaCha8Rng::seed_from_u64(11), 28, 10, 2).unwrap();
        assert_eq!(a, b);
        let c = H3HashFamily::sample(&mut ChaCha8Rng::seed_from_u64(12), 28, 10, 2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn one_bit_addresses() {
        let fam = H3HashFamily::sample(&mut ChaCha8Rng::seed_from_u64(3), 16, 1, 3).unwrap();
        assert!(fam.parameters().iter().all(|p| *p <= 1));
    }

    #[test]
    fn shape() {
        let fam = H3HashFamily::sample(&mut ChaCha8Rng::seed_from_u64(5), 4, 3, 6).unwrap();
        assert_eq!(fam.parameters().len(), 24);
        assert!(fam.parameters().iter().all(|p| *p < 8));
        assert_eq!(fam.table_size(), 8);
    }

    #[test]
    fn worked_example() {
        let fam = H3HashFamily::from_parameters(4, 3, 1, vec![0b001, 0b010, 0b100, 0b111]).unwrap();
        let x = pack_bits(&[true, true, false, true]);
        assert_eq!(fam.hash(0, x).unwrap(), 0b100);
    }

    #[test]
    fn zero_and_one_hot() {
        let fam = H3HashFamily::sample(&mut ChaCha8Rng::seed_from_u64(9), 12, 8, 2).unwrap();
        for which in 0..2 {
            assert_eq!(fam.hash(which, 0).unwrap(), 0);
            for j in 0..12 {
                assert_eq!(fam.hash(which, 1 << j).unwrap(), fam.function(which).unwrap()[j]);
            }
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let rng = &mut ChaCha8Rng::seed_from_u64(0);
        assert_eq!(H3HashFamily::sample(rng, 0, 4, 1), Err(HashError::InputBits(0)));
        assert_eq!(H3HashFamily::sample(rng, 65, 4, 1), Err(HashError::InputBits(65)));
        assert_eq!(H3HashFamily::sample(rng, 8, 0, 1), Err(HashError::OutputBits(0)));
        assert_eq!(H3HashFamily::sample(rng, 8, 31, 1), Err(HashError::OutputBits(31)));
        assert_eq!(H3HashFamily::sample(rng, 8, 4, 0), Err(HashError::NoFunctions));
        assert!(matches!(
            H3HashFamily::from_parameters(2, 2, 1, vec![1, 4]),
            Err(HashError::ParameterRange { index: 1, value: 4, bits: 2 })
        ));
    }

    #[test]
    fn which_out_of_range() {
        let fam = H3HashFamily::sample(&mut ChaCha8Rng::seed_from_u64(1), 4, 4, 2).unwrap();
        assert_eq!(
            fam.hash(2, 1),
            Err(HashError::NoSuchFunction { which: 2, count: 2 })
        );
    }

    #[test]
    fn full_width_inputs() {
        let fam = H3HashFamily::sample(&mut ChaCha8Rng::seed_from_u64(2), 64, 12, 1).unwrap();
        let top = 1u64 << 63;
        assert_eq!(fam.hash(0, top).unwrap(), fam.function(0).unwrap()[63]);
    }

    proptest! {
        #[test]
        fn xor_linear(seed: u64, x: u64, y: u64, n in 1usize..=64, m in 1u32..=30) {
            let fam = H3HashFamily::sample(&mut ChaCha8Rng::seed_from_u64(seed), n, m, 2).unwrap();
            for which in 0..2 {
                let hx = fam.hash(which, x).unwrap();
                let hy = fam.hash(which, y).unwrap();
                prop_assert_eq!(fam.hash(which, x ^ y).unwrap(), hx ^ hy);
                prop_assert!(hx < (1 << m));
            }
        }

        #[test]
        fn hash_all_matches_hash(seed: u64, x: u64, k in 1usize..6) {
            let fam = H3HashFamily::sample(&mut ChaCha8Rng::seed_from_u64(seed), 20, 9, k).unwrap();
            let mut out = vec![0; k];
            fam.hash_all(x, &mut out);
            for (which, h) in out.iter().enumerate() {
                prop_assert_eq!(*h, fam.hash(which, x).unwrap());
            }
        }
    }
}
