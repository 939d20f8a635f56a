//! Arm-selection strategies.
//!
//! The linearized policy derives ε from the clicked and non-clicked reward
//! densities and refreshes it once per batch of rounds. The baselines are
//! fixed ε-greedy, ε-beginning, ε-decreasing and an exponentiated-gradient
//! sampler over a finite set of ε values. Everything is driven by a seeded
//! ChaCha stream, so a `(seed, config, event stream)` triple always yields the
//! same decisions.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::{PiecewiseDensity, DEFAULT_THRESHOLD_ERROR};
use crate::error::{Error, Result};
use crate::reward::{build_point_series, DocId, RewardSample, StatsStore, DEFAULT_WINDOW};
use crate::utility::{
    optimize_threshold, PopulationCounts, TradeoffResult, UtilityParams, DEFAULT_FALLBACK_EPSILON,
    DEFAULT_GRID_SIZE,
};

pub type PolicyRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> PolicyRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub doc: DocId,
    pub exploratory: bool,
    pub epsilon_used: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Linearized,
    Egreedy,
    Ebeginning,
    Edecreasing,
    Eg,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Linearized,
        PolicyKind::Egreedy,
        PolicyKind::Ebeginning,
        PolicyKind::Edecreasing,
        PolicyKind::Eg,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::Linearized => "linearized",
            PolicyKind::Egreedy => "egreedy",
            PolicyKind::Ebeginning => "ebeginning",
            PolicyKind::Edecreasing => "edecreasing",
            PolicyKind::Eg => "eg",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid("policy", format!("unknown policy `{s}`")))
    }
}

/// Which branch the linearized policy's ε gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GreedyGate {
    /// `q <= ε` takes the greedy branch.
    #[default]
    Literal,
    /// `q < ε` takes the random branch, as in plain ε-greedy.
    Conventional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Fixed ε for ε-greedy and ε-beginning.
    pub epsilon: f64,
    /// Seed value of the ε-decreasing schedule.
    pub epsilon0: f64,
    /// Round count `T` for ε-beginning.
    pub horizon: u64,
    pub eg_candidates: Vec<f64>,
    pub eg_learning_rate: f64,
    /// Uniform mixing floor of the EG sampler.
    pub eg_floor: f64,
    /// Rounds between two ε refreshes of the linearized policy.
    pub batch: usize,
    pub utility: UtilityParams,
    pub threshold_error: f64,
    pub grid_size: usize,
    pub fallback_epsilon: f64,
    /// Events retained per reward sample.
    pub window: usize,
    pub gate: GreedyGate,
    /// Pins the linearized policy's ε, skipping the optimizer.
    pub epsilon_override: Option<f64>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyKind::Linearized,
            epsilon: 0.1,
            epsilon0: 1.0,
            horizon: 1000,
            eg_candidates: vec![0.01, 0.05, 0.1, 0.2, 0.5],
            eg_learning_rate: 0.1,
            eg_floor: 0.05,
            batch: 100,
            utility: UtilityParams::default(),
            threshold_error: DEFAULT_THRESHOLD_ERROR,
            grid_size: DEFAULT_GRID_SIZE,
            fallback_epsilon: DEFAULT_FALLBACK_EPSILON,
            window: DEFAULT_WINDOW,
            gate: GreedyGate::default(),
            epsilon_override: None,
        }
    }
}

fn check_probability(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("{v} is not in [0, 1]")))
    }
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("epsilon", self.epsilon)?;
        check_probability("fallback_epsilon", self.fallback_epsilon)?;
        if let Some(e) = self.epsilon_override {
            check_probability("epsilon_override", e)?;
        }
        if !(self.epsilon0 > 0.0 && self.epsilon0.is_finite()) {
            return Err(Error::invalid("epsilon0", "must be > 0"));
        }
        if self.horizon < 1 {
            return Err(Error::invalid("horizon", "must be >= 1"));
        }
        if self.batch < 1 {
            return Err(Error::invalid("batch", "must be >= 1"));
        }
        if !(self.threshold_error >= 0.0) {
            return Err(Error::invalid("threshold_error", "must be >= 0"));
        }
        self.utility.validate()?;
        if self.kind == PolicyKind::Eg {
            EgState::new(&self.eg_candidates, self.eg_learning_rate, self.eg_floor)?;
        }
        Ok(())
    }
}

/// Highest-CTR candidate outside `exclude`. Unseen documents rank at 0 and
/// ties are broken uniformly with `rng`.
pub fn greedy_select<R: Rng + ?Sized>(
    candidates: &[DocId],
    store: &StatsStore,
    exclude: &HashSet<DocId>,
    rng: &mut R,
) -> Result<DocId> {
    let mut best = f64::NEG_INFINITY;
    let mut maximizers: Vec<&DocId> = Vec::new();
    for doc in candidates.iter().filter(|d| !exclude.contains(*d)) {
        let ctr = store.ranking_ctr(doc);
        if ctr > best {
            best = ctr;
            maximizers.clear();
            maximizers.push(doc);
        } else if ctr == best {
            maximizers.push(doc);
        }
    }
    match maximizers.len() {
        0 => Err(Error::EmptyPool),
        1 => Ok(maximizers[0].clone()),
        n => Ok(maximizers[rng.gen_range(0..n)].clone()),
    }
}

fn uniform_pick<R: Rng + ?Sized>(candidates: &[DocId], rng: &mut R) -> Result<DocId> {
    if candidates.is_empty() {
        return Err(Error::EmptyPool);
    }
    Ok(candidates[rng.gen_range(0..candidates.len())].clone())
}

/// With probability ε a uniform candidate, otherwise the greedy one.
pub fn epsilon_greedy_select<R: Rng + ?Sized>(
    candidates: &[DocId],
    store: &StatsStore,
    epsilon: f64,
    rng: &mut R,
) -> Result<Decision> {
    check_probability("epsilon", epsilon)?;
    if candidates.is_empty() {
        return Err(Error::EmptyPool);
    }
    let u: f64 = rng.gen();
    let exploratory = u < epsilon;
    let doc = if exploratory {
        uniform_pick(candidates, rng)?
    } else {
        greedy_select(candidates, store, &HashSet::new(), rng)?
    };
    Ok(Decision {
        doc,
        exploratory,
        epsilon_used: epsilon,
    })
}

/// Explores uniformly during the first `ceil(ε·T)` rounds, then exploits.
pub fn epsilon_beginning_select<R: Rng + ?Sized>(
    t: u64,
    horizon: u64,
    epsilon: f64,
    candidates: &[DocId],
    store: &StatsStore,
    rng: &mut R,
) -> Result<Decision> {
    if t < 1 {
        return Err(Error::invalid("t", "rounds start at 1"));
    }
    check_probability("epsilon", epsilon)?;
    let exploration_rounds = (epsilon * horizon as f64).ceil() as u64;
    let exploratory = t <= exploration_rounds;
    let doc = if exploratory {
        uniform_pick(candidates, rng)?
    } else {
        greedy_select(candidates, store, &HashSet::new(), rng)?
    };
    Ok(Decision {
        doc,
        exploratory,
        epsilon_used: if exploratory { 1.0 } else { 0.0 },
    })
}

/// `min(1, ε0 / t)`
pub fn epsilon_decreasing_schedule(t: u64, epsilon0: f64) -> Result<f64> {
    if t < 1 {
        return Err(Error::invalid("t", "rounds start at 1"));
    }
    if !(epsilon0 > 0.0) {
        return Err(Error::invalid("epsilon0", "must be > 0"));
    }
    Ok((epsilon0 / t as f64).min(1.0))
}

/// Exponentiated-gradient sampler over a finite set of ε values.
///
/// The chosen candidate's weight is multiplied by `exp(η·reward)` after
/// feedback; sampling probabilities mix the normalized weights with a
/// uniform floor `γ`, so each stays at or above `γ/k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgState {
    candidates: Vec<f64>,
    weights: Vec<f64>,
    probabilities: Vec<f64>,
    learning_rate: f64,
    floor: f64,
}

impl EgState {
    pub fn new(candidates: &[f64], learning_rate: f64, floor: f64) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::InsufficientData("EG needs at least one ε candidate"));
        }
        for &c in candidates {
            check_probability("eg_candidates", c)?;
        }
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::invalid("eg_learning_rate", "must be >= 0"));
        }
        if !(0.0..1.0).contains(&floor) {
            return Err(Error::invalid("eg_floor", "must be in [0, 1)"));
        }
        let k = candidates.len() as f64;
        Ok(Self {
            candidates: candidates.to_vec(),
            weights: vec![1.0 / k; candidates.len()],
            probabilities: vec![1.0 / k; candidates.len()],
            learning_rate,
            floor,
        })
    }

    pub fn candidates(&self) -> &[f64] {
        &self.candidates
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Draws a candidate index according to the current probabilities.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in self.probabilities.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probabilities.len() - 1
    }

    pub fn update(&mut self, chosen: usize, reward: f64) {
        self.weights[chosen] *= (self.learning_rate * reward).exp();
        let total: f64 = self.weights.iter().sum();
        let k = self.weights.len() as f64;
        for (w, p) in self.weights.iter_mut().zip(self.probabilities.iter_mut()) {
            *w /= total;
            *p = (1.0 - self.floor) * *w + self.floor / k;
        }
    }
}

/// Outcome of one ε computation for the linearized policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonEstimate {
    pub epsilon: f64,
    /// `None` when the fallback ε was used.
    pub tradeoff: Option<TradeoffResult>,
}

fn fit_sample(sample: &RewardSample, threshold_error: f64) -> Option<PiecewiseDensity> {
    if sample.is_empty() {
        return None;
    }
    let series = build_point_series(sample).ok()?;
    PiecewiseDensity::fit(&series, threshold_error).ok()
}

/// Linearizes both samples and maximizes the utility. Falls back to
/// `config.fallback_epsilon` when either sample is empty or its density is
/// degenerate (e.g. every reward identical).
pub fn estimate_epsilon(
    clicked: &RewardSample,
    non_clicked: &RewardSample,
    config: &PolicyConfig,
) -> EpsilonEstimate {
    if let Some(epsilon) = config.epsilon_override {
        return EpsilonEstimate {
            epsilon,
            tradeoff: None,
        };
    }
    let fallback = EpsilonEstimate {
        epsilon: config.fallback_epsilon,
        tradeoff: None,
    };
    let dc = fit_sample(clicked, config.threshold_error);
    let dn = fit_sample(non_clicked, config.threshold_error);
    let counts = PopulationCounts::new(clicked.len() as u64, non_clicked.len() as u64);
    match optimize_threshold(dc.as_ref(), dn.as_ref(), &config.utility, &counts, config.grid_size)
    {
        Ok(r) => EpsilonEstimate {
            epsilon: r.epsilon,
            tradeoff: Some(r),
        },
        Err(_) => fallback,
    }
}

fn gated_pick<R: Rng + ?Sized>(
    gate: GreedyGate,
    epsilon: f64,
    candidates: &[DocId],
    store: &StatsStore,
    exclude: &HashSet<DocId>,
    rng: &mut R,
) -> Result<(DocId, bool)> {
    let q: f64 = rng.gen();
    let greedy = match gate {
        GreedyGate::Literal => q <= epsilon,
        GreedyGate::Conventional => q >= epsilon,
    };
    if greedy {
        return Ok((greedy_select(candidates, store, exclude, rng)?, false));
    }
    let pool: Vec<DocId> = candidates
        .iter()
        .filter(|d| !exclude.contains(*d))
        .cloned()
        .collect();
    Ok((uniform_pick(&pool, rng)?, true))
}

/// Recommends `n` distinct documents in one batch: ε is computed once from
/// the two samples, then every slot draws `q` and takes either the best
/// remaining document or a uniform remaining one.
pub fn linearized_select_batch<R: Rng + ?Sized>(
    n: usize,
    clicked: &RewardSample,
    non_clicked: &RewardSample,
    candidates: &[DocId],
    store: &StatsStore,
    config: &PolicyConfig,
    rng: &mut R,
) -> Result<(Vec<DocId>, EpsilonEstimate)> {
    let distinct: HashSet<&DocId> = candidates.iter().collect();
    if distinct.len() < n {
        return Err(Error::InsufficientData("fewer candidates than requested"));
    }
    let estimate = estimate_epsilon(clicked, non_clicked, config);
    let mut chosen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let (doc, _) = gated_pick(config.gate, estimate.epsilon, candidates, store, &chosen, rng)?;
        chosen.insert(doc.clone());
        out.push(doc);
    }
    Ok((out, estimate))
}

/// Online state of one policy: counters, reward samples, RNG and schedule.
#[derive(Debug, Clone)]
pub struct PolicyState {
    config: PolicyConfig,
    store: StatsStore,
    rng: PolicyRng,
    t: u64,
    epsilon: f64,
    last_estimate: Option<EpsilonEstimate>,
    last_refresh: Option<u64>,
    eg: Option<EgState>,
    eg_pending: Option<usize>,
}

impl PolicyState {
    pub fn new(config: PolicyConfig, seed: u64) -> Result<Self> {
        Self::with_rng(config, seeded_rng(seed))
    }

    pub fn with_rng(config: PolicyConfig, rng: PolicyRng) -> Result<Self> {
        config.validate()?;
        let eg = match config.kind {
            PolicyKind::Eg => Some(EgState::new(
                &config.eg_candidates,
                config.eg_learning_rate,
                config.eg_floor,
            )?),
            _ => None,
        };
        Ok(Self {
            store: StatsStore::with_window(config.window),
            rng,
            t: 0,
            epsilon: config.fallback_epsilon,
            last_estimate: None,
            last_refresh: None,
            eg,
            eg_pending: None,
            config,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn store(&self) -> &StatsStore {
        &self.store
    }

    /// Rounds served so far.
    pub fn round(&self) -> u64 {
        self.t
    }

    pub fn last_estimate(&self) -> Option<&EpsilonEstimate> {
        self.last_estimate.as_ref()
    }

    /// Round at which the linearized policy last recomputed ε.
    pub fn last_refresh(&self) -> Option<u64> {
        self.last_refresh
    }

    pub fn eg_state(&self) -> Option<&EgState> {
        self.eg.as_ref()
    }

    /// Serves one round. The linearized policy recomputes ε at rounds
    /// `1, N+1, 2N+1, …`; baselines apply their own schedule.
    pub fn refresh_and_select(&mut self, candidates: &[DocId]) -> Result<Decision> {
        if candidates.is_empty() {
            return Err(Error::EmptyPool);
        }
        self.t += 1;
        let t = self.t;
        match self.config.kind {
            PolicyKind::Linearized => {
                if (t - 1).is_multiple_of(self.config.batch as u64) {
                    let est =
                        estimate_epsilon(self.store.clicked(), self.store.non_clicked(), &self.config);
                    self.epsilon = est.epsilon;
                    self.last_estimate = Some(est);
                    self.last_refresh = Some(t);
                }
                let (doc, exploratory) = gated_pick(
                    self.config.gate,
                    self.epsilon,
                    candidates,
                    &self.store,
                    &HashSet::new(),
                    &mut self.rng,
                )?;
                Ok(Decision {
                    doc,
                    exploratory,
                    epsilon_used: self.epsilon,
                })
            }
            PolicyKind::Egreedy => {
                epsilon_greedy_select(candidates, &self.store, self.config.epsilon, &mut self.rng)
            }
            PolicyKind::Ebeginning => epsilon_beginning_select(
                t,
                self.config.horizon,
                self.config.epsilon,
                candidates,
                &self.store,
                &mut self.rng,
            ),
            PolicyKind::Edecreasing => {
                let eps = epsilon_decreasing_schedule(t, self.config.epsilon0)?;
                epsilon_greedy_select(candidates, &self.store, eps, &mut self.rng)
            }
            PolicyKind::Eg => {
                let eg = self.eg.as_ref().expect("EG state exists for EG policy");
                let idx = eg.sample(&mut self.rng);
                let eps = eg.candidates()[idx];
                self.eg_pending = Some(idx);
                epsilon_greedy_select(candidates, &self.store, eps, &mut self.rng)
            }
        }
    }

    /// Feeds back the outcome of the last decision.
    pub fn observe(&mut self, doc: &DocId, clicked: bool) {
        self.store.record_event(doc, clicked);
        if let (Some(eg), Some(idx)) = (self.eg.as_mut(), self.eg_pending.take()) {
            eg.update(idx, if clicked { 1.0 } else { 0.0 });
        }
    }
}
