//! Named sub-seeds derived from one global seed.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the stream `name` (e.g. `"dataset"`, `"init"`), stable across
/// platforms and releases.
pub fn sub_seed(seed: u64, name: &str) -> u64 {
    let h = name
        .bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ b as u64).wrapping_mul(FNV_PRIME));
    splitmix64(seed ^ splitmix64(h))
}

/// Seed for the `index`-th item of stream `name`.
pub fn indexed_seed(seed: u64, name: &str, index: u64) -> u64 {
    splitmix64(sub_seed(seed, name) ^ splitmix64(index.wrapping_add(1)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_differ() {
        assert_ne!(sub_seed(1, "dataset"), sub_seed(1, "init"));
        assert_ne!(sub_seed(1, "dataset"), sub_seed(2, "dataset"));
        assert_ne!(indexed_seed(1, "x", 0), indexed_seed(1, "x", 1));
        assert_eq!(indexed_seed(5, "x", 3), indexed_seed(5, "x", 3));
    }
}
