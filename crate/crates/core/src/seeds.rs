//! Derivation of independent RNG seeds from a master seed.
//!
//! `derive(master, tags)` folds each tag into a 64-bit state with the
//! SplitMix64 finalizer:
//!
//! ```text
//! h = mix(master)
//! for tag in tags: h = mix(h ^ mix(word(tag)))
//! ```
//!
//! where `mix(z)` adds the golden-ratio increment `0x9E3779B97F4A7C15` and
//! applies the SplitMix64 output function, and `word(tag)` is the integer
//! itself for numeric tags or the 64-bit FNV-1a hash of the UTF-8 bytes for
//! text tags. Examples of the streams used across the crate:
//!
//! * candidate episodes: `derive(master, [generation, candidate_id])`
//! * observation noise: `derive(master, ["noise"])`
//! * optimizer sampling: `derive(master, ["cmaes"])`

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag<'a> {
    Int(u64),
    Text(&'a str),
}

impl From<u64> for Tag<'_> {
    fn from(v: u64) -> Self {
        Tag::Int(v)
    }
}

impl From<usize> for Tag<'_> {
    fn from(v: usize) -> Self {
        Tag::Int(v as u64)
    }
}

impl<'a> From<&'a str> for Tag<'a> {
    fn from(v: &'a str) -> Self {
        Tag::Text(v)
    }
}

pub fn mix(z: u64) -> u64 {
    let mut z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xCBF2_9CE4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn derive<'a, I>(master: u64, tags: I) -> u64
where
    I: IntoIterator,
    I::Item: Into<Tag<'a>>,
{
    tags.into_iter().fold(mix(master), |h, tag| {
        let word = match tag.into() {
            Tag::Int(v) => v,
            Tag::Text(s) => fnv1a(s.as_bytes()),
        };
        mix(h ^ mix(word))
    })
}

/// Seed for the episode of candidate `id` in generation `generation`.
pub fn candidate(master: u64, generation: usize, id: usize) -> u64 {
    derive(master, [generation, id])
}

pub fn noise(master: u64) -> u64 {
    derive(master, ["noise"])
}
