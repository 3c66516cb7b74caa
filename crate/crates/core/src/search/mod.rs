//! Latency-aware ensemble architecture search.
//!
//! Candidates are small ensembles (1–3 members) of integer-coded
//! architectures. Each member gets an analytic FLOPs/latency estimate and a
//! deterministic surrogate accuracy; member accuracies combine through a
//! diversity-dependent error-shrink rule, and the scalar objective trades
//! ensemble accuracy against the slowest member's latency. Two optimizers
//! are provided: i.i.d. random sampling and a small evolutionary loop.

pub mod space;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{derive_rng, derive_seed, tag};

pub use space::{ArchSpec, BlockSpec, SearchSpace};

/// FLOPs charged per block at unit depth/expansion/width and 224 input.
pub const BASE_BLOCK_COST: f64 = 1.0e6;

/// Modeled device throughput used to convert FLOPs to milliseconds.
pub const THROUGHPUT_FLOPS_PER_MS: f64 = 1.0e7;

/// Relative latency penalty when every block carries squeeze-excitation.
const SE_LATENCY_PENALTY: f64 = 0.1;

/// Lower clamp for surrogate accuracy.
pub const SURROGATE_FLOOR: f64 = 1e-3;

/// Default exponent for the latency penalty in the reward.
pub const DEFAULT_REWARD_EXPONENT: f64 = -0.07;

/// Largest ensemble considered by the search.
pub const MAX_ENSEMBLE_SIZE: usize = 3;

const TAG_SAMPLE: u64 = tag("search-sample");
const TAG_EVOLVE: u64 = tag("search-evolve");
const TAG_SURROGATE: u64 = tag("search-surrogate");
const TAG_COMPARISON: u64 = tag("search-comparison");

/// Analytic cost model: FLOPs scale with depth, expansion, squared width
/// multiplier, squared kernel, and squared relative resolution; latency is
/// FLOPs over throughput, inflated by the share of blocks using
/// squeeze-excitation.
pub fn arch_flops_and_latency(arch: &ArchSpec) -> Result<(f64, f64)> {
    arch.validate()?;
    let resolution_factor = {
        let r = arch.resolution as f64 / 224.0;
        r * r
    };
    let mut flops = 0.0;
    let mut se_blocks = 0usize;
    for block in &arch.blocks {
        let width = block.width_multiplier();
        let kernel = block.kernel as f64;
        flops += block.depth as f64
            * block.expansion as f64
            * (width * width)
            * (kernel * kernel)
            * BASE_BLOCK_COST
            * resolution_factor;
        se_blocks += block.se_flag as usize;
    }
    let se_share = se_blocks as f64 / arch.blocks.len() as f64;
    let latency_ms = flops / THROUGHPUT_FLOPS_PER_MS * (1.0 + SE_LATENCY_PENALTY * se_share);
    Ok((flops, latency_ms))
}

/// Parameters of the deterministic accuracy surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    /// Seed for the per-architecture perturbation.
    pub seed: u64,
    /// Saturating accuracy as FLOPs grow without bound.
    pub a_max: f64,
    /// FLOPs at which the unperturbed curve reaches half of `a_max`.
    pub half_sat_flops: f64,
    /// Amplitude of the deterministic per-architecture perturbation.
    pub perturb_scale: f64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        SurrogateParams {
            seed: 0,
            a_max: 0.85,
            half_sat_flops: 2.0e7,
            perturb_scale: 0.02,
        }
    }
}

impl SurrogateParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidSurrogateParams(reason));
        if !(self.a_max > 0.0 && self.a_max < 1.0) {
            return bad(format!("a_max {} outside (0, 1)", self.a_max));
        }
        if !self.half_sat_flops.is_finite() || self.half_sat_flops <= 0.0 {
            return bad(format!("half_sat_flops {} must be positive", self.half_sat_flops));
        }
        if !self.perturb_scale.is_finite() || self.perturb_scale < 0.0 {
            return bad(format!("perturb_scale {} must be >= 0", self.perturb_scale));
        }
        Ok(())
    }
}

/// Deterministic hash of the architecture's 50 scalars, mapped to [-1, 1).
fn unit_perturbation(arch: &ArchSpec, seed: u64) -> f64 {
    let mut path = Vec::with_capacity(1 + space::MODEL_DIMENSION);
    path.push(TAG_SURROGATE);
    path.extend(arch.scalar_codes());
    let bits = derive_seed(seed, &path);
    (bits >> 11) as f64 * (0.5f64).powi(52) - 1.0
}

/// Surrogate single-model accuracy: a saturating curve in FLOPs plus a
/// seeded per-architecture perturbation, clamped to
/// [`SURROGATE_FLOOR`, `a_max`].
pub fn surrogate_accuracy(arch: &ArchSpec, params: &SurrogateParams) -> Result<f64> {
    params.validate()?;
    let (flops, _) = arch_flops_and_latency(arch)?;
    let base = params.a_max * flops / (flops + params.half_sat_flops);
    let perturbed = base + params.perturb_scale * unit_perturbation(arch, params.seed);
    Ok(perturbed.clamp(SURROGATE_FLOOR, params.a_max))
}

/// Parameters of the latency-penalized reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    pub target_latency_ms: f64,
    pub exponent: f64,
}

impl RewardParams {
    pub fn with_target(target_latency_ms: f64) -> Self {
        RewardParams {
            target_latency_ms,
            exponent: DEFAULT_REWARD_EXPONENT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.target_latency_ms.is_finite() || self.target_latency_ms <= 0.0 {
            return Err(Error::InvalidRewardParams(format!(
                "target_latency_ms {} must be positive",
                self.target_latency_ms
            )));
        }
        if !self.exponent.is_finite() || self.exponent >= 0.0 {
            return Err(Error::InvalidRewardParams(format!(
                "exponent {} must be negative",
                self.exponent
            )));
        }
        Ok(())
    }
}

/// Accuracy discounted by a power of the latency ratio:
/// `accuracy * (latency / target)^exponent`. At `latency == target` the
/// penalty factor is exactly 1.
pub fn ensemble_reward(accuracy: f64, max_latency_ms: f64, params: &RewardParams) -> Result<f64> {
    params.validate()?;
    if !max_latency_ms.is_finite() || max_latency_ms <= 0.0 {
        return Err(Error::NonPositiveLatency(max_latency_ms));
    }
    if !(0.0..=1.0).contains(&accuracy) {
        return Err(Error::InvalidRewardParams(format!(
            "accuracy {accuracy} outside [0, 1]"
        )));
    }
    Ok(accuracy * (max_latency_ms / params.target_latency_ms).powf(params.exponent))
}

/// An ensemble candidate: 1–3 member architectures.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnsembleArch {
    pub members: Vec<ArchSpec>,
}

impl EnsembleArch {
    pub fn validate(&self) -> Result<()> {
        if self.members.is_empty() || self.members.len() > MAX_ENSEMBLE_SIZE {
            return Err(Error::InvalidEnsembleSize(self.members.len()));
        }
        for member in &self.members {
            member.validate()?;
        }
        Ok(())
    }
}

/// Ensemble effective accuracy, slowest-member latency, and reward.
///
/// Member error shrinks as `1 - (1 - mean_acc) * (1 + (n-1) * rho_eff) / n`
/// where `rho_eff = 0.85 - 0.5 * d` and `d` is the mean pairwise fraction of
/// differing scalars: identical members keep most of their shared error,
/// fully distinct ones shed more of it. Sums run over sorted operands so the
/// result is bitwise independent of member order.
pub fn evaluate_ensemble(
    ensemble: &EnsembleArch,
    surrogate: &SurrogateParams,
    reward: &RewardParams,
) -> Result<(f64, f64, f64)> {
    ensemble.validate()?;
    let n = ensemble.members.len();

    let mut accuracies = Vec::with_capacity(n);
    let mut max_latency_ms = f64::NEG_INFINITY;
    for member in &ensemble.members {
        accuracies.push(surrogate_accuracy(member, surrogate)?);
        let (_, latency) = arch_flops_and_latency(member)?;
        if latency > max_latency_ms {
            max_latency_ms = latency;
        }
    }

    let accuracy = if n == 1 {
        accuracies[0]
    } else {
        accuracies.sort_by(f64::total_cmp);
        let mean_acc = accuracies.iter().sum::<f64>() / n as f64;

        let mut distances = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                distances.push(space::normalized_hamming(
                    &ensemble.members[i],
                    &ensemble.members[j],
                ));
            }
        }
        distances.sort_by(f64::total_cmp);
        let mean_distance = distances.iter().sum::<f64>() / distances.len() as f64;

        let rho_eff = 0.85 - 0.5 * mean_distance;
        let shrink = (1.0 + (n - 1) as f64 * rho_eff) / n as f64;
        1.0 - (1.0 - mean_acc) * shrink
    };

    let reward_value = ensemble_reward(accuracy, max_latency_ms, reward)?;
    Ok((accuracy, max_latency_ms, reward_value))
}

/// How candidates are proposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchStrategy {
    Random,
    Evolutionary,
}

/// Knobs of the evolutionary loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub population: usize,
    pub tournament: usize,
    pub mutation_prob: f64,
    pub elitism: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            population: 32,
            tournament: 2,
            mutation_prob: 0.1,
            elitism: 2,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidSurrogateParams(reason));
        if self.population < 2 {
            return bad(format!("population {} must be >= 2", self.population));
        }
        if self.tournament == 0 || self.tournament > self.population {
            return bad(format!(
                "tournament size {} must be in 1..={}",
                self.tournament, self.population
            ));
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return bad(format!(
                "mutation_prob {} outside [0, 1]",
                self.mutation_prob
            ));
        }
        if self.elitism >= self.population {
            return bad(format!(
                "elitism {} must be below population {}",
                self.elitism, self.population
            ));
        }
        Ok(())
    }
}

/// One scored candidate from a search run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedPoint {
    pub candidate_id: usize,
    pub ensemble_size: usize,
    pub accuracy: f64,
    pub max_latency_ms: f64,
    pub reward: f64,
}

/// Everything a search run produced: every evaluation in order, plus the
/// index of the highest-reward candidate (earliest wins ties).
#[derive(Debug, Clone)]
pub struct SearchResult {
    pub points: Vec<EvaluatedPoint>,
    pub candidates: Vec<EnsembleArch>,
    pub best_index: usize,
}

impl SearchResult {
    pub fn best_point(&self) -> &EvaluatedPoint {
        &self.points[self.best_index]
    }

    pub fn best_candidate(&self) -> &EnsembleArch {
        &self.candidates[self.best_index]
    }
}

fn sample_ensemble(space: &SearchSpace, n: usize, rng: &mut ChaCha8Rng) -> EnsembleArch {
    EnsembleArch {
        members: (0..n).map(|_| space.sample_at(rng)).collect(),
    }
}

struct Recorder<'a> {
    surrogate: &'a SurrogateParams,
    reward: &'a RewardParams,
    points: Vec<EvaluatedPoint>,
    candidates: Vec<EnsembleArch>,
}

impl Recorder<'_> {
    fn evaluate(&mut self, candidate: EnsembleArch) -> Result<f64> {
        let (accuracy, max_latency_ms, reward) =
            evaluate_ensemble(&candidate, self.surrogate, self.reward)?;
        self.points.push(EvaluatedPoint {
            candidate_id: self.points.len(),
            ensemble_size: candidate.members.len(),
            accuracy,
            max_latency_ms,
            reward,
        });
        self.candidates.push(candidate);
        Ok(reward)
    }

    fn finish(self) -> SearchResult {
        let mut best_index = 0;
        for (i, p) in self.points.iter().enumerate() {
            if p.reward > self.points[best_index].reward {
                best_index = i;
            }
        }
        SearchResult {
            points: self.points,
            candidates: self.candidates,
            best_index,
        }
    }
}

fn validate_search_inputs(space: &SearchSpace, ensemble_size: usize, budget: usize) -> Result<()> {
    space.validate()?;
    if ensemble_size == 0 || ensemble_size > MAX_ENSEMBLE_SIZE {
        return Err(Error::InvalidEnsembleSize(ensemble_size));
    }
    if budget == 0 {
        return Err(Error::BudgetTooSmall);
    }
    Ok(())
}

/// Runs a search for the best `ensemble_size`-member ensemble under the
/// given reward, spending exactly `budget` evaluations.
pub fn search(
    space: &SearchSpace,
    ensemble_size: usize,
    strategy: SearchStrategy,
    budget: usize,
    surrogate: &SurrogateParams,
    reward: &RewardParams,
    seed: u64,
) -> Result<SearchResult> {
    match strategy {
        SearchStrategy::Random => random_search(space, ensemble_size, budget, surrogate, reward, seed),
        SearchStrategy::Evolutionary => evolutionary_search(
            space,
            ensemble_size,
            budget,
            surrogate,
            reward,
            seed,
            &EvolutionConfig::default(),
        ),
    }
}

/// Budget i.i.d. uniform candidates, each drawn from its own stream keyed
/// by candidate index.
pub fn random_search(
    space: &SearchSpace,
    ensemble_size: usize,
    budget: usize,
    surrogate: &SurrogateParams,
    reward: &RewardParams,
    seed: u64,
) -> Result<SearchResult> {
    validate_search_inputs(space, ensemble_size, budget)?;
    surrogate.validate()?;
    reward.validate()?;
    let mut recorder = Recorder {
        surrogate,
        reward,
        points: Vec::with_capacity(budget),
        candidates: Vec::with_capacity(budget),
    };
    for i in 0..budget {
        let mut rng = derive_rng(seed, &[TAG_SAMPLE, i as u64]);
        let candidate = sample_ensemble(space, ensemble_size, &mut rng);
        recorder.evaluate(candidate)?;
    }
    Ok(recorder.finish())
}

/// Single-point crossover at a member boundary; with one member the child
/// is a copy of the first parent.
fn crossover(a: &EnsembleArch, b: &EnsembleArch, rng: &mut ChaCha8Rng) -> EnsembleArch {
    let n = a.members.len();
    if n == 1 {
        return a.clone();
    }
    let cut = rng.random_range(1..n);
    let mut members = a.members[..cut].to_vec();
    members.extend_from_slice(&b.members[cut..]);
    EnsembleArch { members }
}

/// Generational evolutionary loop: tournament selection, member-boundary
/// crossover, per-scalar mutation, and reward-ranked elitism. Elites carry
/// their recorded scores, so only fresh children spend budget.
pub fn evolutionary_search(
    space: &SearchSpace,
    ensemble_size: usize,
    budget: usize,
    surrogate: &SurrogateParams,
    reward: &RewardParams,
    seed: u64,
    config: &EvolutionConfig,
) -> Result<SearchResult> {
    validate_search_inputs(space, ensemble_size, budget)?;
    surrogate.validate()?;
    reward.validate()?;
    config.validate()?;

    let mut rng = derive_rng(seed, &[TAG_EVOLVE]);
    let mut recorder = Recorder {
        surrogate,
        reward,
        points: Vec::with_capacity(budget),
        candidates: Vec::with_capacity(budget),
    };

    // (candidate, reward); positions are stable within a generation.
    let mut population: Vec<(EnsembleArch, f64)> = Vec::with_capacity(config.population);
    for _ in 0..config.population.min(budget) {
        let candidate = sample_ensemble(space, ensemble_size, &mut rng);
        let r = recorder.evaluate(candidate.clone())?;
        population.push((candidate, r));
    }

    while recorder.points.len() < budget {
        let mut ranked: Vec<usize> = (0..population.len()).collect();
        ranked.sort_by(|&i, &j| {
            population[j].1.total_cmp(&population[i].1).then(i.cmp(&j))
        });

        let mut next: Vec<(EnsembleArch, f64)> = ranked
            .iter()
            .take(config.elitism)
            .map(|&i| population[i].clone())
            .collect();

        while next.len() < config.population && recorder.points.len() < budget {
            let select = |rng: &mut ChaCha8Rng| -> &EnsembleArch {
                let mut best = rng.random_range(0..population.len());
                for _ in 1..config.tournament {
                    let contender = rng.random_range(0..population.len());
                    if population[contender].1 > population[best].1 {
                        best = contender;
                    }
                }
                &population[best].0
            };
            let parent_a = select(&mut rng).clone();
            let parent_b = select(&mut rng).clone();
            let mut child = crossover(&parent_a, &parent_b, &mut rng);
            for member in &mut child.members {
                space.mutate_at(member, &mut rng, config.mutation_prob);
            }
            let r = recorder.evaluate(child.clone())?;
            next.push((child, r));
        }
        population = next;
    }
    Ok(recorder.finish())
}

/// One row of the duplicate-vs-diverse comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub strategy: String,
    pub ensemble_size: usize,
    pub accuracy: f64,
    pub max_latency_ms: f64,
    pub reward: f64,
}

/// Duplicating one strong model versus searching for diverse members.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    /// Six rows: duplicate n=1..3, then diverse n=1..3.
    pub rows: Vec<ComparisonRow>,
    /// Best diverse reward minus best duplicate reward across the rows.
    pub reward_gap: f64,
}

/// Contrasts two ways of spending an ensemble budget: replicate the single
/// best model found under the reward, or search each ensemble size for
/// diverse members. Both n=1 rows coincide by construction.
pub fn duplicate_vs_diverse_report(
    space: &SearchSpace,
    surrogate: &SurrogateParams,
    reward: &RewardParams,
    budget: usize,
    seed: u64,
) -> Result<ComparisonReport> {
    let single = evolutionary_search(
        space,
        1,
        budget,
        surrogate,
        reward,
        derive_seed(seed, &[TAG_COMPARISON, 1]),
        &EvolutionConfig::default(),
    )?;
    let best_single = single.best_candidate().members[0].clone();

    let mut rows = Vec::with_capacity(2 * MAX_ENSEMBLE_SIZE);
    for n in 1..=MAX_ENSEMBLE_SIZE {
        let duplicated = EnsembleArch {
            members: vec![best_single.clone(); n],
        };
        let (accuracy, max_latency_ms, r) = evaluate_ensemble(&duplicated, surrogate, reward)?;
        rows.push(ComparisonRow {
            strategy: "duplicate".to_string(),
            ensemble_size: n,
            accuracy,
            max_latency_ms,
            reward: r,
        });
    }
    for n in 1..=MAX_ENSEMBLE_SIZE {
        let point = if n == 1 {
            single.best_point().clone()
        } else {
            let run = evolutionary_search(
                space,
                n,
                budget,
                surrogate,
                reward,
                derive_seed(seed, &[TAG_COMPARISON, n as u64]),
                &EvolutionConfig::default(),
            )?;
            run.best_point().clone()
        };
        rows.push(ComparisonRow {
            strategy: "diverse".to_string(),
            ensemble_size: n,
            accuracy: point.accuracy,
            max_latency_ms: point.max_latency_ms,
            reward: point.reward,
        });
    }

    let best_of = |name: &str| {
        rows.iter()
            .filter(|r| r.strategy == name)
            .map(|r| r.reward)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let reward_gap = best_of("diverse") - best_of("duplicate");
    Ok(ComparisonReport { rows, reward_gap })
}

/// Writes every evaluation of a search run:
/// `candidate_id,ensemble_size,accuracy,max_latency_ms,reward`.
pub fn write_point_cloud_csv(points: &[EvaluatedPoint], path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut body = String::from("candidate_id,ensemble_size,accuracy,max_latency_ms,reward\n");
    for p in points {
        body.push_str(&format!(
            "{},{},{},{},{}\n",
            p.candidate_id, p.ensemble_size, p.accuracy, p.max_latency_ms, p.reward
        ));
    }
    file.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes the duplicate-vs-diverse table:
/// `strategy,ensemble_size,accuracy,max_latency_ms,reward`.
pub fn write_comparison_csv(report: &ComparisonReport, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut body = String::from("strategy,ensemble_size,accuracy,max_latency_ms,reward\n");
    for r in &report.rows {
        body.push_str(&format!(
            "{},{},{},{},{}\n",
            r.strategy, r.ensemble_size, r.accuracy, r.max_latency_ms, r.reward
        ));
    }
    file.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn minimal_arch() -> ArchSpec {
        ArchSpec {
            resolution: 112,
            blocks: vec![
                BlockSpec {
                    conv_type: 0,
                    kernel: 3,
                    expansion: 1,
                    se_flag: 0,
                    skip_flag: 0,
                    width_code: 0,
                    depth: 1,
                };
                space::NUM_BLOCKS
            ],
        }
    }

    #[test]
    fn cost_model_matches_hand_computation() {
        // 7 blocks, each 1 * 1 * 0.5^2 * 3^2 * 1e6, at resolution 112
        // (factor 0.25): 7 * 562_500 = 3_937_500.
        let (flops, latency) = arch_flops_and_latency(&minimal_arch()).unwrap();
        assert_eq!(flops, 3_937_500.0);
        assert_eq!(latency, 3_937_500.0 / THROUGHPUT_FLOPS_PER_MS);
    }

    #[test]
    fn resolution_doubling_quadruples_flops_exactly() {
        let mut rng = derive_rng(11, &[0]);
        let space = SearchSpace::full();
        for _ in 0..50 {
            let mut arch = space.sample_at(&mut rng);
            arch.resolution = 112;
            let (small, _) = arch_flops_and_latency(&arch).unwrap();
            arch.resolution = 224;
            let (large, _) = arch_flops_and_latency(&arch).unwrap();
            assert_eq!(large, 4.0 * small);
        }
    }

    #[test]
    fn se_blocks_inflate_latency_but_not_flops() {
        let mut plain = minimal_arch();
        let (f0, l0) = arch_flops_and_latency(&plain).unwrap();
        for b in &mut plain.blocks {
            b.se_flag = 1;
        }
        let (f1, l1) = arch_flops_and_latency(&plain).unwrap();
        assert_eq!(f0, f1);
        assert_relative_eq!(l1, l0 * 1.1, max_relative = 1e-15);
    }

    #[test]
    fn surrogate_is_monotone_in_flops_without_perturbation() {
        let params = SurrogateParams {
            perturb_scale: 0.0,
            ..SurrogateParams::default()
        };
        let space = SearchSpace::full();
        let mut rng = derive_rng(13, &[0]);
        let mut pairs: Vec<(f64, f64)> = (0..100)
            .map(|_| {
                let arch = space.sample_at(&mut rng);
                let (flops, _) = arch_flops_and_latency(&arch).unwrap();
                (flops, surrogate_accuracy(&arch, &params).unwrap())
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pairs.windows(2) {
            if w[1].0 > w[0].0 {
                assert!(
                    w[1].1 > w[0].1,
                    "accuracy not increasing: {:?} then {:?}",
                    w[0],
                    w[1]
                );
            } else {
                assert_eq!(w[1].1, w[0].1);
            }
        }
    }

    #[test]
    fn surrogate_perturbation_separates_equal_flops_archs() {
        // skip_flag does not enter the cost model, so flipping it keeps
        // FLOPs while changing the perturbation input.
        let params = SurrogateParams::default();
        let a = minimal_arch();
        let mut b = a.clone();
        b.blocks[0].skip_flag = 1;
        let (fa, _) = arch_flops_and_latency(&a).unwrap();
        let (fb, _) = arch_flops_and_latency(&b).unwrap();
        assert_eq!(fa, fb);
        let aa = surrogate_accuracy(&a, &params).unwrap();
        let ab = surrogate_accuracy(&b, &params).unwrap();
        assert_ne!(aa, ab);
        for acc in [aa, ab] {
            assert!((SURROGATE_FLOOR..=params.a_max).contains(&acc));
        }
    }

    #[test]
    fn surrogate_is_deterministic_per_seed() {
        let arch = SearchSpace::full().sample_at(&mut derive_rng(17, &[0]));
        let p1 = SurrogateParams::default();
        let p2 = SurrogateParams { seed: 1, ..p1 };
        assert_eq!(
            surrogate_accuracy(&arch, &p1).unwrap(),
            surrogate_accuracy(&arch, &p1).unwrap()
        );
        assert_ne!(
            surrogate_accuracy(&arch, &p1).unwrap(),
            surrogate_accuracy(&arch, &p2).unwrap()
        );
    }

    #[test]
    fn reward_is_exact_at_target_and_penalizes_beyond_it() {
        let params = RewardParams::with_target(25.0);
        assert_eq!(ensemble_reward(0.8, 25.0, &params).unwrap(), 0.8);
        let slower = ensemble_reward(0.8, 50.0, &params).unwrap();
        let faster = ensemble_reward(0.8, 12.5, &params).unwrap();
        assert!(slower < 0.8 && 0.8 < faster);
        // Doubling latency applies a 2^exponent factor.
        assert_relative_eq!(slower, 0.8 * 2f64.powf(-0.07), max_relative = 1e-15);
    }

    #[test]
    fn reward_rejects_bad_inputs() {
        let params = RewardParams::with_target(25.0);
        assert!(matches!(
            ensemble_reward(0.8, 0.0, &params),
            Err(Error::NonPositiveLatency(_))
        ));
        assert!(ensemble_reward(1.5, 10.0, &params).is_err());
        assert!(ensemble_reward(0.8, 10.0, &RewardParams::with_target(0.0)).is_err());
        assert!(ensemble_reward(
            0.8,
            10.0,
            &RewardParams {
                target_latency_ms: 25.0,
                exponent: 0.1
            }
        )
        .is_err());
    }

    #[test]
    fn single_member_ensemble_scores_exactly_like_the_member() {
        let sp = SurrogateParams::default();
        let rp = RewardParams::with_target(25.0);
        let arch = SearchSpace::full().sample_at(&mut derive_rng(19, &[0]));
        let single = EnsembleArch {
            members: vec![arch.clone()],
        };
        let (acc, lat, rew) = evaluate_ensemble(&single, &sp, &rp).unwrap();
        assert_eq!(acc, surrogate_accuracy(&arch, &sp).unwrap());
        assert_eq!(lat, arch_flops_and_latency(&arch).unwrap().1);
        assert_eq!(rew, ensemble_reward(acc, lat, &rp).unwrap());
    }

    #[test]
    fn duplicated_pair_gains_exactly_the_zero_distance_shrink() {
        let sp = SurrogateParams::default();
        let rp = RewardParams::with_target(25.0);
        let arch = SearchSpace::full().sample_at(&mut derive_rng(23, &[0]));
        let a = surrogate_accuracy(&arch, &sp).unwrap();
        let lat = arch_flops_and_latency(&arch).unwrap().1;
        let pair = EnsembleArch {
            members: vec![arch.clone(), arch],
        };
        let (acc, max_lat, _) = evaluate_ensemble(&pair, &sp, &rp).unwrap();
        // d = 0 so rho_eff = 0.85 and the error shrink is (1 + 0.85) / 2.
        assert_relative_eq!(acc, 1.0 - (1.0 - a) * 0.925, max_relative = 1e-15);
        assert_eq!(max_lat, lat);
        assert!(acc > a);
    }

    #[test]
    fn diverse_pairs_shed_more_error_than_duplicates() {
        let sp = SurrogateParams {
            perturb_scale: 0.0,
            ..SurrogateParams::default()
        };
        let rp = RewardParams::with_target(25.0);
        let a = minimal_arch();
        let mut far = a.clone();
        for b in &mut far.blocks {
            b.skip_flag = 1;
            b.conv_type = 2;
        }
        // Same accuracy members (identical FLOPs), different codes.
        let dup = EnsembleArch {
            members: vec![a.clone(), a.clone()],
        };
        let div = EnsembleArch {
            members: vec![a, far],
        };
        let (acc_dup, _, _) = evaluate_ensemble(&dup, &sp, &rp).unwrap();
        let (acc_div, _, _) = evaluate_ensemble(&div, &sp, &rp).unwrap();
        assert!(
            acc_div > acc_dup,
            "diverse {acc_div} should beat duplicate {acc_dup}"
        );
    }

    #[test]
    fn evaluation_is_invariant_to_member_order() {
        let sp = SurrogateParams::default();
        let rp = RewardParams::with_target(25.0);
        let space = SearchSpace::full();
        let mut rng = derive_rng(29, &[0]);
        let (a, b, c) = (
            space.sample_at(&mut rng),
            space.sample_at(&mut rng),
            space.sample_at(&mut rng),
        );
        let orders = [
            vec![a.clone(), b.clone(), c.clone()],
            vec![c.clone(), a.clone(), b.clone()],
            vec![b, c, a],
        ];
        let reference = evaluate_ensemble(
            &EnsembleArch {
                members: orders[0].clone(),
            },
            &sp,
            &rp,
        )
        .unwrap();
        for members in orders {
            let scored = evaluate_ensemble(&EnsembleArch { members }, &sp, &rp).unwrap();
            assert_eq!(scored, reference);
        }
    }

    #[test]
    fn ensemble_size_is_bounded() {
        let arch = minimal_arch();
        let sp = SurrogateParams::default();
        let rp = RewardParams::with_target(25.0);
        for n in [0usize, 4, 5] {
            let e = EnsembleArch {
                members: vec![arch.clone(); n],
            };
            assert!(matches!(
                evaluate_ensemble(&e, &sp, &rp),
                Err(Error::InvalidEnsembleSize(m)) if m == n
            ));
        }
        let space = SearchSpace::full();
        assert!(matches!(
            search(
                &space,
                4,
                SearchStrategy::Random,
                10,
                &sp,
                &rp,
                0
            ),
            Err(Error::InvalidEnsembleSize(4))
        ));
        assert!(matches!(
            search(&space, 1, SearchStrategy::Random, 0, &sp, &rp, 0),
            Err(Error::BudgetTooSmall)
        ));
    }

    #[test]
    fn searches_spend_exactly_the_budget_and_reproduce() {
        let space = SearchSpace::full();
        let sp = SurrogateParams::default();
        let rp = RewardParams::with_target(25.0);
        for strategy in [SearchStrategy::Random, SearchStrategy::Evolutionary] {
            let a = search(&space, 2, strategy, 100, &sp, &rp, 42).unwrap();
            let b = search(&space, 2, strategy, 100, &sp, &rp, 42).unwrap();
            assert_eq!(a.points.len(), 100);
            assert_eq!(a.points, b.points);
            assert_eq!(a.best_index, b.best_index);
            let best = a.best_point();
            assert!(a.points.iter().all(|p| p.reward <= best.reward));
            // Earliest index wins ties.
            assert!(a
                .points
                .iter()
                .take(a.best_index)
                .all(|p| p.reward < best.reward));
            let c = search(&space, 2, strategy, 100, &sp, &rp, 43).unwrap();
            assert_ne!(a.points, c.points);
        }
    }

    #[test]
    fn search_candidates_and_ids_line_up() {
        let space = SearchSpace::reduced();
        let sp = SurrogateParams::default();
        let rp = RewardParams::with_target(25.0);
        let run = search(&space, 2, SearchStrategy::Evolutionary, 80, &sp, &rp, 7).unwrap();
        assert_eq!(run.candidates.len(), run.points.len());
        for (i, (point, candidate)) in run.points.iter().zip(&run.candidates).enumerate() {
            assert_eq!(point.candidate_id, i);
            assert_eq!(point.ensemble_size, candidate.members.len());
            assert!(candidate.members.iter().all(|m| space.contains(m)));
            let (_, _, reward) = evaluate_ensemble(candidate, &sp, &rp).unwrap();
            assert_eq!(reward, point.reward);
        }
    }

    #[test]
    fn comparison_report_has_six_rows_and_consistent_gap() {
        let space = SearchSpace::reduced();
        let sp = SurrogateParams::default();
        let rp = RewardParams::with_target(5.0);
        let report = duplicate_vs_diverse_report(&space, &sp, &rp, 64, 3).unwrap();
        assert_eq!(report.rows.len(), 6);
        let strategies: Vec<&str> = report.rows.iter().map(|r| r.strategy.as_str()).collect();
        assert_eq!(
            strategies,
            ["duplicate", "duplicate", "duplicate", "diverse", "diverse", "diverse"]
        );
        let sizes: Vec<usize> = report.rows.iter().map(|r| r.ensemble_size).collect();
        assert_eq!(sizes, [1, 2, 3, 1, 2, 3]);
        // n=1 rows coincide: both describe the same single model.
        assert_eq!(report.rows[0].reward, report.rows[3].reward);
        let best_dup = report.rows[..3].iter().map(|r| r.reward).fold(f64::MIN, f64::max);
        let best_div = report.rows[3..].iter().map(|r| r.reward).fold(f64::MIN, f64::max);
        assert_eq!(report.reward_gap, best_div - best_dup);
    }

    #[test]
    fn point_cloud_and_comparison_csvs_have_stable_headers() {
        let dir = tempfile::tempdir().unwrap();
        let space = SearchSpace::reduced();
        let sp = SurrogateParams::default();
        let rp = RewardParams::with_target(5.0);
        let run = search(&space, 1, SearchStrategy::Random, 5, &sp, &rp, 1).unwrap();
        let cloud = dir.path().join("points.csv");
        write_point_cloud_csv(&run.points, &cloud).unwrap();
        let text = std::fs::read_to_string(&cloud).unwrap();
        assert!(text.starts_with("candidate_id,ensemble_size,accuracy,max_latency_ms,reward\n"));
        assert_eq!(text.lines().count(), 6);

        let report = duplicate_vs_diverse_report(&space, &sp, &rp, 16, 3).unwrap();
        let table = dir.path().join("table.csv");
        write_comparison_csv(&report, &table).unwrap();
        let text = std::fs::read_to_string(&table).unwrap();
        assert!(text.starts_with("strategy,ensemble_size,accuracy,max_latency_ms,reward\n"));
        assert_eq!(text.lines().count(), 7);
    }
}
