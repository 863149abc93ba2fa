//! Monte Carlo estimates of `P_z(M > x)`.
//!
//! The excursion-level simulator runs only the branching skeleton: a particle
//! at a catalyst branches or leaves, and the whole excursion that follows is
//! drawn in one categorical draw from the excursion matrix. Holding times are
//! never sampled; the event `{M > x}` does not depend on them.
//!
//! The step-level simulator moves every particle one jump at a time and serves
//! as a check on the excursion reduction and as the fallback for general walks.
//!
//! Every trial owns its own ChaCha8 stream, selected by the trial index, so
//! estimates are identical for any split of the trials across threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{CbrwError, Result};
use crate::excursion::{entry_row, excursion_matrix};
use crate::model::Model;
use crate::walk::WalkSpec;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub trials: u64,
    pub seed: u64,
    pub max_population: u64,
    pub parallel_streams: usize,
}

impl SimConfig {
    pub fn new(trials: u64, seed: u64) -> Self {
        SimConfig {
            trials,
            seed,
            max_population: 1_000_000,
            parallel_streams: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(CbrwError::Domain("trials must be at least 1".into()));
        }
        if self.max_population == 0 {
            return Err(CbrwError::Domain("max_population must be at least 1".into()));
        }
        if self.parallel_streams == 0 {
            return Err(CbrwError::Domain("parallel_streams must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Exceeded,
    DiedOut,
    /// The trial could not be decided within the population or step budget.
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailEstimate {
    pub estimate: f64,
    /// Wilson 95% interval.
    pub ci: (f64, f64),
    pub trials: u64,
    pub exceeded: u64,
    /// Censored trials are counted as not exceeding, which biases the
    /// estimate downward by at most `censored_trials / trials`.
    pub censored_trials: u64,
}

impl TailEstimate {
    pub fn stderr(&self) -> f64 {
        (self.estimate * (1.0 - self.estimate) / self.trials as f64).sqrt()
    }

    fn certain(trials: u64) -> Self {
        TailEstimate {
            estimate: 1.0,
            ci: (1.0, 1.0),
            trials,
            exceeded: trials,
            censored_trials: 0,
        }
    }
}

/// Wilson score interval for `successes` out of `n`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = z / denom * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt();
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// The random stream of one trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Cumulative weights over a small set of labelled outcomes.
#[derive(Debug, Clone)]
struct Categorical<T> {
    cumulative: Vec<f64>,
    labels: Vec<T>,
}

impl<T: Copy> Categorical<T> {
    fn new(items: impl IntoIterator<Item = (T, f64)>) -> Self {
        let mut cumulative = Vec::new();
        let mut labels = Vec::new();
        let mut acc = 0.0;
        for (label, w) in items {
            if w > 0.0 {
                acc += w;
                cumulative.push(acc);
                labels.push(label);
            }
        }
        Categorical { cumulative, labels }
    }

    /// `None` when `u` falls into the mass not covered by any item.
    fn pick(&self, u: f64) -> Option<T> {
        self.cumulative
            .iter()
            .position(|&c| u < c)
            .map(|k| self.labels[k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Landing {
    Catalyst(usize),
    Exceed,
}

#[derive(Debug, Clone)]
enum Start {
    Certain,
    Catalyst(usize),
    Entry(Categorical<Landing>),
}

/// Everything the excursion-level simulator needs at one level, precomputed.
#[derive(Debug, Clone)]
pub struct ExcursionSampler {
    start: Start,
    alpha: Vec<f64>,
    offspring_cdf: Vec<Vec<f64>>,
    above: Vec<bool>,
    /// Unlisted mass is escape: the particle is gone.
    excursions: Vec<Categorical<Landing>>,
}

impl ExcursionSampler {
    pub fn new(model: &Model, z: i64, x: i64) -> Result<Self> {
        let positions = model.positions();
        let em = excursion_matrix(&model.walk, &positions, x)?;
        let start = if x < z {
            Start::Certain
        } else if let Some(i) = model.catalysts.index_of(z) {
            Start::Catalyst(i)
        } else {
            let row = entry_row(&model.walk, &positions, x, z)?;
            Start::Entry(Categorical::new(
                row.catalysts
                    .iter()
                    .enumerate()
                    .map(|(j, &p)| (Landing::Catalyst(j), p))
                    .chain([(Landing::Exceed, row.exceed)]),
            ))
        };
        let excursions = (0..em.len())
            .map(|i| {
                Categorical::new(
                    em.a[i]
                        .iter()
                        .enumerate()
                        .map(|(j, &p)| (Landing::Catalyst(j), p))
                        .chain([(Landing::Exceed, em.b[i])]),
                )
            })
            .collect();
        let offspring_cdf = model
            .catalysts
            .iter()
            .map(|c| {
                c.offspring
                    .pmf()
                    .iter()
                    .scan(0.0, |acc, &p| {
                        *acc += p;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        Ok(ExcursionSampler {
            start,
            alpha: model.catalysts.iter().map(|c| c.alpha).collect(),
            offspring_cdf,
            above: (0..em.len()).map(|i| em.is_above(i)).collect(),
            excursions,
        })
    }

    fn draw_offspring(&self, i: usize, u: f64) -> u64 {
        let cdf = &self.offspring_cdf[i];
        cdf.iter()
            .position(|&c| u < c)
            .unwrap_or_else(|| cdf.len() - 1) as u64
    }
}

/// One trial of the branching skeleton.
pub fn simulate_indicator<R: Rng + ?Sized>(
    sampler: &ExcursionSampler,
    max_population: u64,
    rng: &mut R,
) -> Outcome {
    // (catalyst, number of particles waiting there)
    let mut stack: Vec<(usize, u64)> = Vec::new();
    let mut population: u64 = 0;
    let land = |landing: Option<Landing>, stack: &mut Vec<(usize, u64)>, population: &mut u64| match landing {
        Some(Landing::Exceed) => true,
        Some(Landing::Catalyst(j)) if sampler.above[j] => true,
        Some(Landing::Catalyst(j)) => {
            stack.push((j, 1));
            *population += 1;
            false
        }
        None => false,
    };
    match &sampler.start {
        Start::Certain => return Outcome::Exceeded,
        Start::Catalyst(i) => {
            if land(Some(Landing::Catalyst(*i)), &mut stack, &mut population) {
                return Outcome::Exceeded;
            }
        }
        Start::Entry(cat) => {
            if land(cat.pick(rng.random()), &mut stack, &mut population) {
                return Outcome::Exceeded;
            }
        }
    }

    while let Some(top) = stack.last_mut() {
        let i = top.0;
        top.1 -= 1;
        if top.1 == 0 {
            stack.pop();
        }
        population -= 1;

        if rng.random::<f64>() < sampler.alpha[i] {
            let k = sampler.draw_offspring(i, rng.random());
            if k > 0 {
                population += k;
                if population > max_population {
                    return Outcome::Censored;
                }
                stack.push((i, k));
            }
        } else if land(
            sampler.excursions[i].pick(rng.random()),
            &mut stack,
            &mut population,
        ) {
            return Outcome::Exceeded;
        } else if population > max_population {
            return Outcome::Censored;
        }
    }
    Outcome::DiedOut
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    exceeded: u64,
    censored: u64,
}

impl std::ops::Add for Tally {
    type Output = Tally;
    fn add(self, o: Tally) -> Tally {
        Tally {
            exceeded: self.exceeded + o.exceeded,
            censored: self.censored + o.censored,
        }
    }
}

fn run_trials<F>(cfg: &SimConfig, trial: F) -> Result<TailEstimate>
where
    F: Fn(&mut ChaCha8Rng) -> Outcome + Sync,
{
    cfg.validate()?;
    let streams = cfg.parallel_streams as u64;
    let chunk = cfg.trials.div_ceil(streams);
    let tally = (0..streams)
        .into_par_iter()
        .map(|s| {
            let begin = (s * chunk).min(cfg.trials);
            let end = ((s + 1) * chunk).min(cfg.trials);
            let mut t = Tally::default();
            for k in begin..end {
                let mut rng = trial_rng(cfg.seed, k);
                match trial(&mut rng) {
                    Outcome::Exceeded => t.exceeded += 1,
                    Outcome::Censored => t.censored += 1,
                    Outcome::DiedOut => {}
                }
            }
            t
        })
        .reduce(Tally::default, |a, b| a + b);
    if tally.censored == cfg.trials {
        return Err(CbrwError::AllCensored { trials: cfg.trials });
    }
    Ok(TailEstimate {
        estimate: tally.exceeded as f64 / cfg.trials as f64,
        ci: wilson_interval(tally.exceeded, cfg.trials, Z95),
        trials: cfg.trials,
        exceeded: tally.exceeded,
        censored_trials: tally.censored,
    })
}

/// Excursion-level estimate of `P_z(M > x)`.
pub fn estimate_tail(model: &Model, z: i64, x: i64, cfg: &SimConfig) -> Result<TailEstimate> {
    cfg.validate()?;
    if x < z {
        return Ok(TailEstimate::certain(cfg.trials));
    }
    let sampler = ExcursionSampler::new(model, z, x)?;
    run_trials(cfg, |rng| simulate_indicator(&sampler, cfg.max_population, rng))
}

/// Budget and truncation of the step-level simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepLimits {
    /// Total jumps over all particles of one trial.
    pub step_cap: u64,
    /// What happens to a particle that steps below this site.
    pub left_barrier: i64,
    pub below_barrier: BelowBarrier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BelowBarrier {
    /// Remove the particle; the trial is censored unless it still exceeds.
    Censor,
    /// Simple walks only. Below every catalyst a nearest-neighbour walk can
    /// next meet only the leftmost catalyst (or the level, if lower). It gets
    /// there with probability 1 when `p >= q` and `(p/q)^d` from distance `d`
    /// otherwise, so the particle is moved there or dropped without bias.
    Return,
}

/// Uniform bits for the symmetric walk, 64 jumps per draw.
struct BitBuffer {
    bits: u64,
    left: u32,
}

impl BitBuffer {
    fn next<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> bool {
        if self.left == 0 {
            self.bits = rng.next_u64();
            self.left = 64;
        }
        let b = self.bits & 1 == 1;
        self.bits >>= 1;
        self.left -= 1;
        b
    }
}

enum Stepper {
    Symmetric(BitBuffer),
    Simple { threshold: u64 },
    General(Categorical<i64>),
}

impl Stepper {
    fn new(walk: &WalkSpec) -> Self {
        match walk {
            WalkSpec::Simple { p } if *p == 0.5 => Stepper::Symmetric(BitBuffer { bits: 0, left: 0 }),
            WalkSpec::Simple { p } => Stepper::Simple {
                threshold: (p * 2f64.powi(64)) as u64,
            },
            WalkSpec::General(_) => Stepper::General(Categorical::new(walk.embedded_step_dist())),
        }
    }

    fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> i64 {
        match self {
            Stepper::Symmetric(bits) => {
                if bits.next(rng) {
                    1
                } else {
                    -1
                }
            }
            Stepper::Simple { threshold } => {
                if rng.next_u64() < *threshold {
                    1
                } else {
                    -1
                }
            }
            Stepper::General(cat) => {
                let u: f64 = rng.random();
                cat.pick(u)
                    .unwrap_or_else(|| *cat.labels.last().expect("nonempty step law"))
            }
        }
    }
}

/// One trial with every jump of every particle simulated.
pub fn simulate_steps<R: Rng + ?Sized>(
    model: &Model,
    z: i64,
    x: i64,
    limits: StepLimits,
    rng: &mut R,
) -> Outcome {
    let positions = model.positions();
    let alpha: Vec<f64> = model.catalysts.iter().map(|c| c.alpha).collect();
    let mut stepper = Stepper::new(&model.walk);
    let return_site = positions[0].min(x + 1);
    let mut stack: Vec<(i64, u64)> = vec![(z, 1)];
    let mut steps: u64 = 0;
    let mut truncated = false;

    while let Some(top) = stack.last_mut() {
        let mut pos = top.0;
        top.1 -= 1;
        if top.1 == 0 {
            stack.pop();
        }
        loop {
            if pos > x {
                return Outcome::Exceeded;
            }
            if pos < limits.left_barrier {
                match limits.below_barrier {
                    BelowBarrier::Censor => {
                        truncated = true;
                        break;
                    }
                    BelowBarrier::Return => {
                        let p = model.walk.as_simple().unwrap_or(0.5);
                        let d = (return_site - pos) as f64;
                        if p < 0.5 && rng.random::<f64>() >= (d * (p / (1.0 - p)).ln()).exp() {
                            break;
                        }
                        pos = return_site;
                        continue;
                    }
                }
            }
            if let Ok(i) = positions.binary_search(&pos) {
                if rng.random::<f64>() < alpha[i] {
                    let k = model.catalysts.get(i).offspring.sample_with(rng.random()) as u64;
                    if k > 0 {
                        stack.push((pos, k));
                    }
                    break;
                }
            }
            pos += stepper.step(rng);
            steps += 1;
            if steps > limits.step_cap {
                return Outcome::Censored;
            }
        }
    }
    if truncated {
        Outcome::Censored
    } else {
        Outcome::DiedOut
    }
}

/// Step-level estimate of `P_z(M > x)`.
pub fn estimate_tail_steps(
    model: &Model,
    z: i64,
    x: i64,
    cfg: &SimConfig,
    limits: StepLimits,
) -> Result<TailEstimate> {
    cfg.validate()?;
    if x < z {
        return Ok(TailEstimate::certain(cfg.trials));
    }
    if limits.below_barrier == BelowBarrier::Return {
        if model.walk.as_simple().is_none() {
            return Err(CbrwError::Unsupported(
                "returning particles from the barrier needs a simple walk".into(),
            ));
        }
        let lowest = model.positions()[0].min(z);
        if limits.left_barrier > lowest {
            return Err(CbrwError::Domain(format!(
                "left barrier {} must not exceed the lowest catalyst or start {lowest}",
                limits.left_barrier
            )));
        }
    }
    run_trials(cfg, |rng| simulate_steps(model, z, x, limits, rng))
}
