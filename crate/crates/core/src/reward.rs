//! Per-document click statistics and the reward samples derived from them.
//!
//! A document's reward is its click-through rate. Every recommendation event
//! appends the displayed document's post-update CTR to either the clicked or
//! the non-clicked sample, and [`build_point_series`] turns a sample into the
//! discrete `(s_i, p_i)` points consumed by the linearizer.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of events retained per reward sample.
pub const DEFAULT_WINDOW: usize = 10_000;

/// Opaque document identifier. Cheap to clone.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DocId(Arc<str>);

impl DocId {
    pub fn new(id: impl AsRef<str>) -> Self {
        DocId(Arc::from(id.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DocId {
    fn from(s: &str) -> Self {
        DocId::new(s)
    }
}

impl From<String> for DocId {
    fn from(s: String) -> Self {
        DocId(Arc::from(s))
    }
}

/// Impression and click counters for one document.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentStats {
    pub impressions: u64,
    pub clicks: u64,
}

impl DocumentStats {
    pub fn new(impressions: u64, clicks: u64) -> Result<Self> {
        if clicks > impressions {
            return Err(Error::invalid(
                "clicks",
                format!("{clicks} clicks exceed {impressions} impressions"),
            ));
        }
        Ok(Self {
            impressions,
            clicks,
        })
    }

    /// Click-through rate, undefined for a document never displayed.
    pub fn ctr(&self) -> Option<f64> {
        (self.impressions > 0).then(|| self.clicks as f64 / self.impressions as f64)
    }

    fn record(&mut self, clicked: bool) {
        self.impressions += 1;
        if clicked {
            self.clicks += 1;
        }
    }
}

/// CTR of `stats`, failing when the document has no impressions.
pub fn ctr(doc: &DocId, stats: &DocumentStats) -> Result<f64> {
    stats
        .ctr()
        .ok_or_else(|| Error::UndefinedCtr(doc.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardLabel {
    Clicked,
    NonClicked,
}

/// A bounded multiset of CTR values observed at recommendation time.
///
/// Only the most recent `window` events are kept.
#[derive(Debug, Clone)]
pub struct RewardSample {
    label: RewardLabel,
    window: usize,
    rewards: VecDeque<f64>,
}

impl RewardSample {
    pub fn new(label: RewardLabel, window: usize) -> Self {
        Self {
            label,
            window: window.max(1),
            rewards: VecDeque::new(),
        }
    }

    /// Builds an unbounded sample from an explicit list of rewards.
    pub fn from_rewards(label: RewardLabel, rewards: impl IntoIterator<Item = f64>) -> Result<Self> {
        let rewards: VecDeque<f64> = rewards.into_iter().collect();
        if let Some(bad) = rewards.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::invalid("reward", format!("{bad} outside [0, 1]")));
        }
        Ok(Self {
            label,
            window: rewards.len().max(DEFAULT_WINDOW),
            rewards,
        })
    }

    pub fn label(&self) -> RewardLabel {
        self.label
    }

    pub fn push(&mut self, reward: f64) {
        debug_assert!((0.0..=1.0).contains(&reward));
        if self.rewards.len() == self.window {
            self.rewards.pop_front();
        }
        self.rewards.push_back(reward);
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.rewards.iter().copied()
    }
}

/// Counters for every document seen so far plus the two reward samples.
#[derive(Debug, Clone)]
pub struct StatsStore {
    docs: HashMap<DocId, DocumentStats>,
    clicked: RewardSample,
    non_clicked: RewardSample,
}

impl Default for StatsStore {
    fn default() -> Self {
        Self::with_window(DEFAULT_WINDOW)
    }
}

impl StatsStore {
    pub fn with_window(window: usize) -> Self {
        Self {
            docs: HashMap::new(),
            clicked: RewardSample::new(RewardLabel::Clicked, window),
            non_clicked: RewardSample::new(RewardLabel::NonClicked, window),
        }
    }

    /// Records one display of `doc`. Returns the document's updated CTR, which
    /// is also appended to the matching reward sample.
    pub fn record_event(&mut self, doc: &DocId, clicked: bool) -> f64 {
        let stats = self.docs.entry(doc.clone()).or_default();
        stats.record(clicked);
        let reward = stats.clicks as f64 / stats.impressions as f64;
        if clicked {
            self.clicked.push(reward);
        } else {
            self.non_clicked.push(reward);
        }
        reward
    }

    pub fn stats(&self, doc: &DocId) -> Option<&DocumentStats> {
        self.docs.get(doc)
    }

    /// Seeds counters directly, bypassing the reward samples.
    pub fn set_stats(&mut self, doc: DocId, stats: DocumentStats) {
        self.docs.insert(doc, stats);
    }

    pub fn ctr(&self, doc: &DocId) -> Result<f64> {
        match self.docs.get(doc) {
            Some(stats) => ctr(doc, stats),
            None => Err(Error::UndefinedCtr(doc.to_string())),
        }
    }

    /// CTR used for greedy ranking: never-displayed documents rank as 0.
    pub fn ranking_ctr(&self, doc: &DocId) -> f64 {
        self.docs.get(doc).and_then(DocumentStats::ctr).unwrap_or(0.0)
    }

    pub fn clicked(&self) -> &RewardSample {
        &self.clicked
    }

    pub fn non_clicked(&self) -> &RewardSample {
        &self.non_clicked
    }

    pub fn document_count(&self) -> usize {
        self.docs.len()
    }
}

/// Ordered `(s_i, p_i)` points with `s_i` strictly increasing and `Σ p_i = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSeries {
    points: Vec<(f64, f64)>,
    domain: (f64, f64),
}

impl PointSeries {
    /// Wraps raw points, checking ordering. Probabilities are not required
    /// to sum to one here so that arbitrary curves can be linearized.
    pub fn from_points(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySample);
        }
        for (i, w) in points.windows(2).enumerate() {
            if !(w[0].0 < w[1].0) {
                return Err(Error::invalid(
                    "points",
                    format!("abscissae not strictly increasing at index {}", i + 1),
                ));
            }
        }
        if points.iter().any(|(s, p)| !s.is_finite() || !p.is_finite()) {
            return Err(Error::invalid("points", "non-finite value"));
        }
        let domain = (points[0].0, points[points.len() - 1].0);
        Ok(Self { points, domain })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// `[reward_0, reward_n]` of the sample the series was built from.
    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Bins a reward sample into `max(1, d/2)` equal-width intervals over
/// `[min, max]` and emits one point per non-empty interval at its midpoint,
/// weighted by the fraction of rewards falling inside.
///
/// Intervals are half-open `[lo, hi)` except the last, which is closed.
pub fn build_point_series(sample: &RewardSample) -> Result<PointSeries> {
    let d = sample.len();
    if d == 0 {
        return Err(Error::EmptySample);
    }
    let (lo, hi) = sample
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r), hi.max(r))
        });
    if lo == hi {
        return Ok(PointSeries {
            points: vec![(lo, 1.0)],
            domain: (lo, hi),
        });
    }

    let n = (d / 2).max(1);
    let width = (hi - lo) / n as f64;
    let mut counts = vec![0usize; n];
    for r in sample.iter() {
        let idx = (((r - lo) / width).floor() as usize).min(n - 1);
        counts[idx] += 1;
    }

    let total = d as f64;
    let points = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| (lo + (i as f64 + 0.5) * width, c as f64 / total))
        .collect();
    Ok(PointSeries {
        points,
        domain: (lo, hi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(rewards: &[f64]) -> RewardSample {
        RewardSample::from_rewards(RewardLabel::Clicked, rewards.iter().copied()).unwrap()
    }

    #[test]
    fn record_event_counters() {
        let mut store = StatsStore::default();
        let a = DocId::new("a");
        assert_eq!(store.record_event(&a, true), 1.0);
        assert_eq!(store.stats(&a), Some(&DocumentStats::new(1, 1).unwrap()));

        let b = DocId::new("b");
        assert_eq!(store.record_event(&b, false), 0.0);
        assert_eq!(store.stats(&b).unwrap().impressions, 1);

        let c = DocId::new("c");
        store.set_stats(c.clone(), DocumentStats::new(9, 2).unwrap());
        let r = store.record_event(&c, true);
        assert_eq!(store.stats(&c), Some(&DocumentStats::new(10, 3).unwrap()));
        assert!((r - 0.3).abs() < 1e-15);
        assert_eq!(store.clicked().len(), 2);
        assert_eq!(store.non_clicked().len(), 1);
    }

    #[test]
    fn ctr_values() {
        let d = DocId::new("d");
        assert_eq!(ctr(&d, &DocumentStats::new(10, 3).unwrap()).unwrap(), 0.3);
        assert_eq!(ctr(&d, &DocumentStats::new(5, 0).unwrap()).unwrap(), 0.0);
        assert!(matches!(
            ctr(&d, &DocumentStats::new(0, 0).unwrap()),
            Err(Error::UndefinedCtr(_))
        ));
        assert!(DocumentStats::new(1, 2).is_err());
    }

    #[test]
    fn window_drops_oldest() {
        let mut s = RewardSample::new(RewardLabel::NonClicked, 3);
        for r in [0.1, 0.2, 0.3, 0.4] {
            s.push(r);
        }
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![0.2, 0.3, 0.4]);
    }

    #[test]
    fn point_series_two_intervals() {
        let ps = build_point_series(&sample(&[0.1, 0.2, 0.6, 0.7])).unwrap();
        let pts = ps.points();
        assert_eq!(pts.len(), 2);
        assert!((pts[0].0 - 0.25).abs() < 1e-12 && (pts[0].1 - 0.5).abs() < 1e-15);
        assert!((pts[1].0 - 0.55).abs() < 1e-12 && (pts[1].1 - 0.5).abs() < 1e-15);
        assert_eq!(ps.domain(), (0.1, 0.7));
    }

    #[test]
    fn point_series_degenerate_domain() {
        let ps = build_point_series(&sample(&[0.4, 0.4, 0.4])).unwrap();
        assert_eq!(ps.points(), &[(0.4, 1.0)]);
        let ps = build_point_series(&sample(&[0.9])).unwrap();
        assert_eq!(ps.points(), &[(0.9, 1.0)]);
    }

    #[test]
    fn point_series_empty() {
        assert!(matches!(
            build_point_series(&sample(&[])),
            Err(Error::EmptySample)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn point_series_is_a_distribution(rewards in prop::collection::vec(0.0f64..=1.0, 1..400)) {
            let ps = build_point_series(&sample(&rewards)).unwrap();
            let total: f64 = ps.points().iter().map(|p| p.1).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            let n = (rewards.len() / 2).max(1);
            prop_assert!(ps.len() <= n && n <= rewards.len());
            let (lo, hi) = ps.domain();
            for w in ps.points().windows(2) {
                prop_assert!(w[0].0 < w[1].0);
            }
            for &(s, p) in ps.points() {
                prop_assert!(s >= lo && s <= hi);
                prop_assert!(p > 0.0);
            }
        }

        #[test]
        fn ctr_matches_recount(events in prop::collection::vec((0u8..8, any::<bool>()), 0..=10_000)) {
            let mut store = StatsStore::default();
            for (doc, clicked) in &events {
                store.record_event(&DocId::new(format!("d{doc}")), *clicked);
            }
            for doc in 0u8..8 {
                let id = DocId::new(format!("d{doc}"));
                let shown = events.iter().filter(|(d, _)| *d == doc).count() as u64;
                let clicks = events.iter().filter(|(d, c)| *d == doc && *c).count() as u64;
                if shown == 0 {
                    prop_assert!(store.ctr(&id).is_err());
                } else {
                    prop_assert_eq!(store.ctr(&id).unwrap(), clicks as f64 / shown as f64);
                }
            }
        }
    }
}
