//! Piecewise-linear density estimation from discrete reward probabilities.
//!
//! Points are segmented into linear classes by incremental least squares,
//! adjacent classes are joined by liaison lines so the curve is continuous,
//! and the whole curve is rescaled to unit area. Negative fitted values are
//! treated as zero everywhere: evaluation, integration and normalization.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward::PointSeries;

/// Default segmentation threshold on the deviation error.
pub const DEFAULT_THRESHOLD_ERROR: f64 = 1e-4;

/// `y = intercept + slope * x`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub intercept: f64,
    pub slope: f64,
}

impl Line {
    pub const fn new(intercept: f64, slope: f64) -> Self {
        Self { intercept, slope }
    }

    #[inline]
    pub fn at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }

    fn scaled(&self, factor: f64) -> Self {
        Self::new(self.intercept * factor, self.slope * factor)
    }

    /// Integral of `max(0, y(x))` over `[lo, hi]`.
    pub fn positive_area(&self, lo: f64, hi: f64) -> f64 {
        if !(hi > lo) {
            return 0.0;
        }
        let (ylo, yhi) = (self.at(lo), self.at(hi));
        if ylo >= 0.0 && yhi >= 0.0 {
            0.5 * (ylo + yhi) * (hi - lo)
        } else if ylo <= 0.0 && yhi <= 0.0 {
            0.0
        } else {
            // Exactly one endpoint is positive, so the slope is non-zero.
            let root = (-self.intercept / self.slope).clamp(lo, hi);
            if ylo > 0.0 {
                0.5 * ylo * (root - lo)
            } else {
                0.5 * yhi * (hi - root)
            }
        }
    }
}

/// Ordinary least-squares line through `points`.
pub fn fit_least_squares(points: &[(f64, f64)]) -> Result<Line> {
    let mut acc = Moments::default();
    for &(x, y) in points {
        acc.push(x, y);
    }
    acc.line().ok_or(Error::DegenerateFit)
}

/// Squared distance error of `points` to `line`, normalized by `a² + 1`
/// where `a` is the intercept.
pub fn deviation_error(points: &[(f64, f64)], line: &Line) -> f64 {
    let norm = line.intercept * line.intercept + 1.0;
    points
        .iter()
        .map(|&(s, p)| {
            let r = line.at(s) - p;
            r * r / norm
        })
        .sum()
}

/// Running means and co-moments, updated one point at a time.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    mean_x: f64,
    mean_y: f64,
    cxx: f64,
    cxy: f64,
    cyy: f64,
}

impl Moments {
    fn push(&mut self, x: f64, y: f64) {
        self.n += 1;
        let n = self.n as f64;
        let dx = x - self.mean_x;
        let dy = y - self.mean_y;
        self.mean_x += dx / n;
        self.mean_y += dy / n;
        self.cxx += dx * (x - self.mean_x);
        self.cxy += dx * (y - self.mean_y);
        self.cyy += dy * (y - self.mean_y);
    }

    fn line(&self) -> Option<Line> {
        if self.n < 2 || !(self.cxx > 0.0) {
            return None;
        }
        let slope = self.cxy / self.cxx;
        Some(Line::new(self.mean_y - slope * self.mean_x, slope))
    }

    /// Deviation error of the points seen so far against their own OLS line.
    fn error(&self) -> f64 {
        match self.line() {
            Some(line) => {
                let sse = (self.cyy - self.cxy * self.cxy / self.cxx).max(0.0);
                sse / (line.intercept * line.intercept + 1.0)
            }
            None => 0.0,
        }
    }
}

/// A run of points fitting one line, spanning `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearClass {
    pub lower: f64,
    pub upper: f64,
    pub line: Line,
}

/// Line joining the right end of one class to the left end of the next.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiaisonSegment {
    pub lower: f64,
    pub upper: f64,
    pub line: Line,
}

impl LiaisonSegment {
    pub fn is_empty(&self) -> bool {
        self.lower == self.upper
    }
}

fn close_class(points: &[(f64, f64)], acc: &Moments) -> LinearClass {
    let lower = points[0].0;
    let upper = points[points.len() - 1].0;
    let line = acc
        .line()
        .unwrap_or_else(|| Line::new(points[0].1, 0.0));
    LinearClass { lower, upper, line }
}

/// Scans the series in order and splits it into linear classes.
///
/// A point joins the current class unless doing so pushes the deviation
/// error above `threshold_error`; then the class is closed without it and a
/// new class starts at that point. Whatever remains at the end forms the
/// last class. A class holding a single point is horizontal at that point.
pub fn linearize(series: &PointSeries, threshold_error: f64) -> Result<Vec<LinearClass>> {
    let points = series.points();
    if points.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(threshold_error >= 0.0) {
        return Err(Error::invalid("threshold_error", "must be >= 0"));
    }

    let mut classes = Vec::new();
    let mut start = 0;
    let mut acc = Moments::default();
    for (i, &(s, p)) in points.iter().enumerate() {
        let mut trial = acc;
        trial.push(s, p);
        if trial.error() > threshold_error {
            classes.push(close_class(&points[start..i], &acc));
            acc = Moments::default();
            acc.push(s, p);
            start = i;
        } else {
            acc = trial;
        }
    }
    classes.push(close_class(&points[start..], &acc));
    Ok(classes)
}

/// Builds the liaison between every pair of adjacent classes.
pub fn connect_classes(classes: &[LinearClass]) -> Result<Vec<LiaisonSegment>> {
    check_classes(classes)?;
    Ok(classes
        .windows(2)
        .map(|w| {
            let (x0, y0) = (w[0].upper, w[0].line.at(w[0].upper));
            let (x1, y1) = (w[1].lower, w[1].line.at(w[1].lower));
            if x1 == x0 {
                return LiaisonSegment {
                    lower: x0,
                    upper: x1,
                    line: Line::new(y0, 0.0),
                };
            }
            let slope = (y1 - y0) / (x1 - x0);
            LiaisonSegment {
                lower: x0,
                upper: x1,
                line: Line::new(y0 - slope * x0, slope),
            }
        })
        .collect())
}

fn check_classes(classes: &[LinearClass]) -> Result<()> {
    for (i, c) in classes.iter().enumerate() {
        let finite = c.lower.is_finite()
            && c.upper.is_finite()
            && c.line.intercept.is_finite()
            && c.line.slope.is_finite();
        if !finite || c.lower > c.upper {
            return Err(Error::UnorderedClasses(i));
        }
    }
    for (i, w) in classes.windows(2).enumerate() {
        if w[0].upper > w[1].lower {
            return Err(Error::UnorderedClasses(i + 1));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Class,
    Liaison,
}

/// One linear piece of a density, in domain order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub lower: f64,
    pub upper: f64,
    pub line: Line,
}

/// Continuous piecewise-linear curve made of classes and the liaisons
/// between them.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseDensity {
    classes: Vec<LinearClass>,
    liaisons: Vec<LiaisonSegment>,
    segments: Vec<Segment>,
    /// `suffix[k]` is the clamped area of `segments[k..]`.
    suffix: Vec<f64>,
    normalized: bool,
}

impl PiecewiseDensity {
    /// Assembles an unnormalized curve. `liaisons` must fill exactly the gaps
    /// between consecutive classes.
    pub fn new(classes: Vec<LinearClass>, liaisons: Vec<LiaisonSegment>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::InsufficientData("density needs at least one class"));
        }
        check_classes(&classes)?;
        if liaisons.len() != classes.len() - 1 {
            return Err(Error::invalid(
                "liaisons",
                format!(
                    "expected {} liaisons for {} classes, got {}",
                    classes.len() - 1,
                    classes.len(),
                    liaisons.len()
                ),
            ));
        }
        for (i, (w, l)) in classes.windows(2).zip(&liaisons).enumerate() {
            if l.lower != w[0].upper || l.upper != w[1].lower {
                return Err(Error::invalid(
                    "liaisons",
                    format!("liaison {i} does not fill the gap between its classes"),
                ));
            }
        }

        let mut segments = Vec::with_capacity(classes.len() + liaisons.len());
        for (i, c) in classes.iter().enumerate() {
            segments.push(Segment {
                kind: SegmentKind::Class,
                lower: c.lower,
                upper: c.upper,
                line: c.line,
            });
            if let Some(l) = liaisons.get(i) {
                segments.push(Segment {
                    kind: SegmentKind::Liaison,
                    lower: l.lower,
                    upper: l.upper,
                    line: l.line,
                });
            }
        }
        let mut suffix = vec![0.0; segments.len() + 1];
        for k in (0..segments.len()).rev() {
            let s = &segments[k];
            suffix[k] = suffix[k + 1] + s.line.positive_area(s.lower, s.upper);
        }
        Ok(Self {
            classes,
            liaisons,
            segments,
            suffix,
            normalized: false,
        })
    }

    /// Linearizes `series`, joins the classes and normalizes to unit area.
    pub fn fit(series: &PointSeries, threshold_error: f64) -> Result<Self> {
        let classes = linearize(series, threshold_error)?;
        let liaisons = connect_classes(&classes)?;
        normalize_density(classes, liaisons)
    }

    /// Rescales every coefficient by the clamped area so the curve
    /// integrates to one.
    pub fn normalize(self) -> Result<Self> {
        let area = self.area();
        if !(area > 0.0) || !area.is_finite() {
            return Err(Error::DegenerateDensity(area));
        }
        let factor = 1.0 / area;
        let classes = self
            .classes
            .iter()
            .map(|c| LinearClass {
                line: c.line.scaled(factor),
                ..*c
            })
            .collect();
        let liaisons = self
            .liaisons
            .iter()
            .map(|l| LiaisonSegment {
                line: l.line.scaled(factor),
                ..*l
            })
            .collect();
        let mut out = Self::new(classes, liaisons)?;
        out.normalized = true;
        Ok(out)
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn classes(&self) -> &[LinearClass] {
        &self.classes
    }

    pub fn liaisons(&self) -> &[LiaisonSegment] {
        &self.liaisons
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.classes[0].lower, self.classes[self.classes.len() - 1].upper)
    }

    /// Clamped area under the whole curve.
    pub fn area(&self) -> f64 {
        self.suffix[0]
    }

    /// `max(0, f(x))`, zero outside the domain.
    pub fn evaluate(&self, x: f64) -> f64 {
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) {
            return 0.0;
        }
        let k = self.segments.partition_point(|s| s.upper < x);
        self.segments
            .get(k)
            .map_or(0.0, |s| s.line.at(x).max(0.0))
    }

    /// Clamped area to the right of `o`.
    pub fn tail_probability(&self, o: f64) -> f64 {
        let (lo, hi) = self.domain();
        if o <= lo {
            return self.suffix[0].clamp(0.0, 1.0);
        }
        if o >= hi {
            return 0.0;
        }
        let k = self.segments.partition_point(|s| s.upper < o);
        let s = &self.segments[k];
        let partial = s.line.positive_area(o.max(s.lower), s.upper);
        (partial + self.suffix[k + 1]).clamp(0.0, 1.0)
    }

    /// Segment table as CSV: `kind,x_lo,x_hi,intercept,slope`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,x_lo,x_hi,intercept,slope\n");
        for s in &self.segments {
            let kind = match s.kind {
                SegmentKind::Class => "class",
                SegmentKind::Liaison => "liaison",
            };
            let _ = writeln!(
                out,
                "{kind},{},{},{},{}",
                s.lower, s.upper, s.line.intercept, s.line.slope
            );
        }
        out
    }
}

/// Assembles classes and liaisons into a unit-area density.
pub fn normalize_density(
    classes: Vec<LinearClass>,
    liaisons: Vec<LiaisonSegment>,
) -> Result<PiecewiseDensity> {
    PiecewiseDensity::new(classes, liaisons)?.normalize()
}

pub fn evaluate_density(density: &PiecewiseDensity, x: f64) -> f64 {
    density.evaluate(x)
}

pub fn tail_probability(density: &PiecewiseDensity, o: f64) -> f64 {
    density.tail_probability(o)
}
