//! Threshold search over the utility function and the derived exploration rate.
//!
//! For a reward threshold `o`, `T_r(o)` and `T_s(o)` are the tail masses of
//! the clicked and non-clicked densities above `o`. The retained threshold is
//! the one maximizing the utility, and the exploration rate is `T_r(o*)`.

use serde::{Deserialize, Serialize};

use crate::density::{Line, PiecewiseDensity};
use crate::error::{Error, Result};

pub const DEFAULT_GRID_SIZE: usize = 1024;
pub const DEFAULT_FALLBACK_EPSILON: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum UtilityVariant {
    /// `a·T_r − b·T_s`
    #[default]
    #[serde(rename = "difference")]
    Difference,
    /// `T_mix · N · (a·T_r + b·T_s)` with `T_mix = p_r·T_r + p_s·T_s`
    #[serde(rename = "mixture")]
    Mixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityParams {
    pub a: f64,
    pub b: f64,
    pub variant: UtilityVariant,
}

impl Default for UtilityParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 1.0,
            variant: UtilityVariant::default(),
        }
    }
}

impl UtilityParams {
    pub fn new(a: f64, b: f64, variant: UtilityVariant) -> Result<Self> {
        let p = Self { a, b, variant };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::invalid("a", "must be a positive finite number"));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::invalid("b", "must be a positive finite number"));
        }
        Ok(())
    }
}

/// Sizes of the clicked and non-clicked populations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationCounts {
    pub clicked: u64,
    pub non_clicked: u64,
}

impl PopulationCounts {
    pub fn new(clicked: u64, non_clicked: u64) -> Self {
        Self {
            clicked,
            non_clicked,
        }
    }

    pub fn total(&self) -> u64 {
        self.clicked + self.non_clicked
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffResult {
    pub threshold: f64,
    pub epsilon: f64,
    pub utility: f64,
}

fn require_normalized(d: &PiecewiseDensity) -> Result<()> {
    if d.is_normalized() {
        Ok(())
    } else {
        Err(Error::Unnormalized)
    }
}

pub fn utility_value(
    o: f64,
    clicked: &PiecewiseDensity,
    non_clicked: &PiecewiseDensity,
    params: &UtilityParams,
    counts: &PopulationCounts,
) -> Result<f64> {
    require_normalized(clicked)?;
    require_normalized(non_clicked)?;
    if counts.total() == 0 {
        return Err(Error::InsufficientData("population is empty"));
    }
    Ok(utility_unchecked(o, clicked, non_clicked, params, counts))
}

fn utility_unchecked(
    o: f64,
    clicked: &PiecewiseDensity,
    non_clicked: &PiecewiseDensity,
    params: &UtilityParams,
    counts: &PopulationCounts,
) -> f64 {
    let t_r = clicked.tail_probability(o);
    let t_s = non_clicked.tail_probability(o);
    match params.variant {
        UtilityVariant::Difference => params.a * t_r - params.b * t_s,
        UtilityVariant::Mixture => {
            let n = counts.total() as f64;
            let p_r = counts.clicked as f64 / n;
            let p_s = counts.non_clicked as f64 / n;
            let t_mix = p_r * t_r + p_s * t_s;
            t_mix * n * (params.a * t_r + params.b * t_s)
        }
    }
}

/// Candidate thresholds: every segment boundary of both densities plus an
/// even grid over the union of their domains, sorted and deduplicated.
pub fn candidate_thresholds(
    clicked: &PiecewiseDensity,
    non_clicked: &PiecewiseDensity,
    grid_size: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid_size + 2 * (clicked.segments().len() + non_clicked.segments().len()) + 2);
    for d in [clicked, non_clicked] {
        for s in d.segments() {
            out.push(s.lower);
            out.push(s.upper);
        }
    }
    let lo = clicked.domain().0.min(non_clicked.domain().0);
    let hi = clicked.domain().1.max(non_clicked.domain().1);
    match grid_size {
        0 => {}
        1 => out.push(lo),
        g => {
            let step = (hi - lo) / (g - 1) as f64;
            out.extend((0..g).map(|i| if i == g - 1 { hi } else { lo + i as f64 * step }));
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Line of `d` in force strictly between two consecutive candidates, which
/// never straddle a segment boundary. `None` outside the domain.
fn line_between(d: &PiecewiseDensity, l: f64, r: f64) -> Option<Line> {
    let m = 0.5 * (l + r);
    let (lo, hi) = d.domain();
    if !(m > lo && m < hi) {
        return None;
    }
    let segs = d.segments();
    segs.get(segs.partition_point(|s| s.upper < m)).map(|s| s.line)
}

/// Interior local maxima of the utility between consecutive candidates.
///
/// Both tails are quadratic wherever the clamped densities are linear, so
/// the utility can peak strictly inside an interval. Its derivative is
/// `-a·f_r + b·f_s` (or the product rule on the mixture form); every
/// `+ → −` sign change is bisected to the root.
fn stationary_points(
    cands: &[f64],
    clicked: &PiecewiseDensity,
    non_clicked: &PiecewiseDensity,
    params: &UtilityParams,
    counts: &PopulationCounts,
) -> Vec<f64> {
    let n = counts.total() as f64;
    let (p_r, p_s) = (counts.clicked as f64 / n, counts.non_clicked as f64 / n);
    let mut out = Vec::new();
    for w in cands.windows(2) {
        let (l, r) = (w[0], w[1]);
        let lr = line_between(clicked, l, r);
        let ls = line_between(non_clicked, l, r);
        let f = |line: Option<Line>, x: f64| line.map_or(0.0, |ln| ln.at(x).max(0.0));
        let slope = |x: f64| {
            let (fr, fs) = (f(lr, x), f(ls, x));
            match params.variant {
                UtilityVariant::Difference => -params.a * fr + params.b * fs,
                UtilityVariant::Mixture => {
                    let (tr, ts) = (clicked.tail_probability(x), non_clicked.tail_probability(x));
                    let mix = p_r * tr + p_s * ts;
                    let score = params.a * tr + params.b * ts;
                    n * (-(p_r * fr + p_s * fs) * score - mix * (params.a * fr + params.b * fs))
                }
            }
        };

        let mut knots = vec![l, r];
        for line in [lr, ls].into_iter().flatten() {
            if line.slope != 0.0 {
                let root = -line.intercept / line.slope;
                if root > l && root < r {
                    knots.push(root);
                }
            }
        }
        knots.sort_by(f64::total_cmp);
        for k in knots.windows(2) {
            let (mut lo, mut hi) = (k[0], k[1]);
            if !(slope(lo) > 0.0 && slope(hi) < 0.0) {
                continue;
            }
            for _ in 0..64 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if slope(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(lo);
            out.push(hi);
        }
    }
    out
}

/// Maximizes the utility over [`candidate_thresholds`] plus the interior
/// stationary points between them; ties go to the smallest threshold.
pub fn optimize_threshold(
    clicked: Option<&PiecewiseDensity>,
    non_clicked: Option<&PiecewiseDensity>,
    params: &UtilityParams,
    counts: &PopulationCounts,
    grid_size: usize,
) -> Result<TradeoffResult> {
    let (clicked, non_clicked) = match (clicked, non_clicked) {
        (Some(c), Some(n)) => (c, n),
        (None, _) => return Err(Error::InsufficientData("clicked density missing")),
        (_, None) => return Err(Error::InsufficientData("non-clicked density missing")),
    };
    require_normalized(clicked)?;
    require_normalized(non_clicked)?;
    params.validate()?;
    if counts.total() == 0 {
        return Err(Error::InsufficientData("population is empty"));
    }

    let mut cands = candidate_thresholds(clicked, non_clicked, grid_size);
    let extra = stationary_points(&cands, clicked, non_clicked, params, counts);
    if !extra.is_empty() {
        cands.extend(extra);
        cands.sort_by(f64::total_cmp);
        cands.dedup();
    }
    let mut best: Option<(f64, f64)> = None;
    for o in cands {
        let uf = utility_unchecked(o, clicked, non_clicked, params, counts);
        if best.is_none_or(|(_, b)| uf > b) {
            best = Some((o, uf));
        }
    }
    let (threshold, utility) = best.expect("candidate set always holds the domain bounds");
    Ok(TradeoffResult {
        threshold,
        epsilon: exploration_rate(threshold, clicked),
        utility,
    })
}

pub fn exploration_rate(o: f64, clicked: &PiecewiseDensity) -> f64 {
    clicked.tail_probability(o)
}
