//! The integer-coded architecture space searched over.
//!
//! One model is described by an input resolution plus 7 blocks of 7 integer
//! codes each — 50 scalars total. A [`SearchSpace`] restricts each scalar to
//! a candidate list; the full space uses every legal code, while tests use
//! reduced spaces small enough to enumerate exhaustively.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Blocks per model.
pub const NUM_BLOCKS: usize = 7;

/// Codes per block.
pub const CODES_PER_BLOCK: usize = 7;

/// Scalars per model: resolution + 7 blocks x 7 codes.
pub const MODEL_DIMENSION: usize = 1 + NUM_BLOCKS * CODES_PER_BLOCK;

/// Width multipliers addressed by `width_code`.
pub const WIDTH_MULTIPLIERS: [f64; 4] = [0.5, 0.75, 1.0, 1.25];

/// Legal input resolutions.
pub const RESOLUTIONS: [u32; 4] = [112, 168, 196, 224];

/// One block's integer-coded hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockSpec {
    pub conv_type: u8,
    pub kernel: u8,
    pub expansion: u8,
    pub se_flag: u8,
    pub skip_flag: u8,
    pub width_code: u8,
    pub depth: u8,
}

impl BlockSpec {
    pub fn validate(&self) -> Result<()> {
        let invalid = |what: &str, value: u8| {
            Err(Error::InvalidArch(format!("{what} code {value} out of range")))
        };
        if self.conv_type > 2 {
            return invalid("conv_type", self.conv_type);
        }
        if !matches!(self.kernel, 3 | 5) {
            return invalid("kernel", self.kernel);
        }
        if !matches!(self.expansion, 1 | 3 | 6) {
            return invalid("expansion", self.expansion);
        }
        if self.se_flag > 1 {
            return invalid("se_flag", self.se_flag);
        }
        if self.skip_flag > 1 {
            return invalid("skip_flag", self.skip_flag);
        }
        if self.width_code > 3 {
            return invalid("width_code", self.width_code);
        }
        if !(1..=4).contains(&self.depth) {
            return invalid("depth", self.depth);
        }
        Ok(())
    }

    pub fn width_multiplier(&self) -> f64 {
        WIDTH_MULTIPLIERS[self.width_code as usize]
    }
}

/// A single model architecture: 50 integer scalars.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchSpec {
    pub resolution: u32,
    pub blocks: Vec<BlockSpec>,
}

impl ArchSpec {
    pub fn validate(&self) -> Result<()> {
        if !RESOLUTIONS.contains(&self.resolution) {
            return Err(Error::InvalidArch(format!(
                "resolution {} not one of {RESOLUTIONS:?}",
                self.resolution
            )));
        }
        if self.blocks.len() != NUM_BLOCKS {
            return Err(Error::InvalidArch(format!(
                "expected {NUM_BLOCKS} blocks, got {}",
                self.blocks.len()
            )));
        }
        for block in &self.blocks {
            block.validate()?;
        }
        Ok(())
    }

    /// The 50 scalars in a fixed order: resolution first, then each block's
    /// codes. Used for architectural distance and for seeding the surrogate
    /// perturbation.
    pub fn scalar_codes(&self) -> Vec<u64> {
        let mut codes = Vec::with_capacity(MODEL_DIMENSION);
        codes.push(self.resolution as u64);
        for b in &self.blocks {
            codes.extend([
                b.conv_type as u64,
                b.kernel as u64,
                b.expansion as u64,
                b.se_flag as u64,
                b.skip_flag as u64,
                b.width_code as u64,
                b.depth as u64,
            ]);
        }
        codes
    }
}

/// Fraction of the 50 scalar positions where the two architectures differ.
pub fn normalized_hamming(a: &ArchSpec, b: &ArchSpec) -> f64 {
    let (ca, cb) = (a.scalar_codes(), b.scalar_codes());
    let differing = ca.iter().zip(&cb).filter(|(x, y)| x != y).count();
    differing as f64 / MODEL_DIMENSION as f64
}

/// Per-block candidate lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockChoices {
    pub conv_types: Vec<u8>,
    pub kernels: Vec<u8>,
    pub expansions: Vec<u8>,
    pub se_flags: Vec<u8>,
    pub skip_flags: Vec<u8>,
    pub width_codes: Vec<u8>,
    pub depths: Vec<u8>,
}

impl BlockChoices {
    fn every_option() -> Self {
        BlockChoices {
            conv_types: vec![0, 1, 2],
            kernels: vec![3, 5],
            expansions: vec![1, 3, 6],
            se_flags: vec![0, 1],
            skip_flags: vec![0, 1],
            width_codes: vec![0, 1, 2, 3],
            depths: vec![1, 2, 3, 4],
        }
    }

    fn frozen() -> Self {
        BlockChoices {
            conv_types: vec![0],
            kernels: vec![3],
            expansions: vec![1],
            se_flags: vec![0],
            skip_flags: vec![0],
            width_codes: vec![2],
            depths: vec![1],
        }
    }

    fn lists(&self) -> [&Vec<u8>; CODES_PER_BLOCK] {
        [
            &self.conv_types,
            &self.kernels,
            &self.expansions,
            &self.se_flags,
            &self.skip_flags,
            &self.width_codes,
            &self.depths,
        ]
    }

    fn cardinality(&self) -> u128 {
        self.lists().iter().map(|l| l.len() as u128).product()
    }
}

/// The candidate lists each of the 50 scalars draws from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchSpace {
    pub resolutions: Vec<u32>,
    pub blocks: Vec<BlockChoices>,
}

impl SearchSpace {
    /// The complete space: every legal code everywhere.
    pub fn full() -> Self {
        SearchSpace {
            resolutions: RESOLUTIONS.to_vec(),
            blocks: vec![BlockChoices::every_option(); NUM_BLOCKS],
        }
    }

    /// A deliberately tiny space for exhaustive-enumeration tests: two
    /// resolutions, and only the first two blocks vary (kernel and
    /// expansion), giving 2 x 4 x 4 = 32 models.
    pub fn reduced() -> Self {
        let mut varying = BlockChoices::frozen();
        varying.kernels = vec![3, 5];
        varying.expansions = vec![1, 6];
        let mut blocks = vec![BlockChoices::frozen(); NUM_BLOCKS];
        blocks[0] = varying.clone();
        blocks[1] = varying;
        SearchSpace {
            resolutions: vec![112, 224],
            blocks,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidArch(reason);
        if self.resolutions.is_empty() {
            return Err(invalid("resolution candidate list is empty".to_string()));
        }
        if self.blocks.len() != NUM_BLOCKS {
            return Err(invalid(format!(
                "expected {NUM_BLOCKS} block choice sets, got {}",
                self.blocks.len()
            )));
        }
        for choices in &self.blocks {
            if choices.lists().iter().any(|l| l.is_empty()) {
                return Err(invalid("a block candidate list is empty".to_string()));
            }
        }
        // Every candidate combination must be a valid architecture.
        self.sample_at(&mut crate::rng::derive_rng(0, &[0])).validate()
    }

    /// Number of scalars a sampled model has.
    pub fn dimension(&self) -> usize {
        MODEL_DIMENSION
    }

    /// Number of distinct single models in the space.
    pub fn cardinality(&self) -> u128 {
        self.resolutions.len() as u128
            * self
                .blocks
                .iter()
                .map(BlockChoices::cardinality)
                .product::<u128>()
    }

    fn pick<T: Copy>(rng: &mut ChaCha8Rng, options: &[T]) -> T {
        options[rng.random_range(0..options.len())]
    }

    /// Uniform sample over the candidate lists.
    pub fn sample_at(&self, rng: &mut ChaCha8Rng) -> ArchSpec {
        ArchSpec {
            resolution: Self::pick(rng, &self.resolutions),
            blocks: self
                .blocks
                .iter()
                .map(|c| BlockSpec {
                    conv_type: Self::pick(rng, &c.conv_types),
                    kernel: Self::pick(rng, &c.kernels),
                    expansion: Self::pick(rng, &c.expansions),
                    se_flag: Self::pick(rng, &c.se_flags),
                    skip_flag: Self::pick(rng, &c.skip_flags),
                    width_code: Self::pick(rng, &c.width_codes),
                    depth: Self::pick(rng, &c.depths),
                })
                .collect(),
        }
    }

    /// Resamples each of the 50 scalars with probability `prob`.
    pub fn mutate_at(&self, arch: &mut ArchSpec, rng: &mut ChaCha8Rng, prob: f64) {
        if rng.random::<f64>() < prob {
            arch.resolution = Self::pick(rng, &self.resolutions);
        }
        for (block, choices) in arch.blocks.iter_mut().zip(&self.blocks) {
            let mut field = |slot: &mut u8, options: &[u8]| {
                if rng.random::<f64>() < prob {
                    *slot = Self::pick(rng, options);
                }
            };
            field(&mut block.conv_type, &choices.conv_types);
            field(&mut block.kernel, &choices.kernels);
            field(&mut block.expansion, &choices.expansions);
            field(&mut block.se_flag, &choices.se_flags);
            field(&mut block.skip_flag, &choices.skip_flags);
            field(&mut block.width_code, &choices.width_codes);
            field(&mut block.depth, &choices.depths);
        }
    }

    /// Whether every scalar of `arch` is drawn from this space's lists.
    pub fn contains(&self, arch: &ArchSpec) -> bool {
        if !self.resolutions.contains(&arch.resolution) {
            return false;
        }
        if arch.blocks.len() != self.blocks.len() {
            return false;
        }
        arch.blocks.iter().zip(&self.blocks).all(|(b, c)| {
            c.conv_types.contains(&b.conv_type)
                && c.kernels.contains(&b.kernel)
                && c.expansions.contains(&b.expansion)
                && c.se_flags.contains(&b.se_flag)
                && c.skip_flags.contains(&b.skip_flag)
                && c.width_codes.contains(&b.width_code)
                && c.depths.contains(&b.depth)
        })
    }

    /// All single models in the space, in a deterministic order. Meant for
    /// the reduced test spaces; check [`Self::cardinality`] before calling.
    pub fn enumerate(&self) -> Vec<ArchSpec> {
        let mut archs: Vec<ArchSpec> = self
            .resolutions
            .iter()
            .map(|&resolution| ArchSpec {
                resolution,
                blocks: Vec::new(),
            })
            .collect();
        for choices in &self.blocks {
            let mut block_options = Vec::new();
            for &conv_type in &choices.conv_types {
                for &kernel in &choices.kernels {
                    for &expansion in &choices.expansions {
                        for &se_flag in &choices.se_flags {
                            for &skip_flag in &choices.skip_flags {
                                for &width_code in &choices.width_codes {
                                    for &depth in &choices.depths {
                                        block_options.push(BlockSpec {
                                            conv_type,
                                            kernel,
                                            expansion,
                                            se_flag,
                                            skip_flag,
                                            width_code,
                                            depth,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
            archs = archs
                .into_iter()
                .flat_map(|arch| {
                    block_options.iter().map(move |block| {
                        let mut next = arch.clone();
                        next.blocks.push(*block);
                        next
                    })
                })
                .collect();
        }
        archs
    }
}
