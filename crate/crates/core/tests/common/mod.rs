//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use linbandit::density::{LinearClass, Line};
use rand::Rng;

/// Direct two-pass OLS fit; `None` when all abscissae coincide.
pub fn ols(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if points.len() < 2 || sxx == 0.0 {
        return None;
    }
    let b = sxy / sxx;
    Some((my - b * mx, b))
}

/// Squared residuals over `intercept² + 1`.
pub fn deviation(points: &[(f64, f64)], a: f64, b: f64) -> f64 {
    points
        .iter()
        .map(|&(x, y)| (a + b * x - y).powi(2))
        .sum::<f64>()
        / (a * a + 1.0)
}

/// Segment error and slope of a contiguous run under its own OLS line.
/// Single points are horizontal with zero error.
fn run_fit(points: &[(f64, f64)]) -> (f64, f64) {
    match ols(points) {
        Some((a, b)) => (deviation(points, a, b), b),
        None => (0.0, 0.0),
    }
}

/// Exhaustive contiguous segmentation: fewest classes whose error each stays
/// within `threshold`, ties broken by the least total error. Returns the
/// slope of each class.
pub fn oracle_segmentation(points: &[(f64, f64)], threshold: f64) -> Vec<f64> {
    let n = points.len();
    // best[j] = (classes, total error, previous cut) for points[..j]
    let mut best: Vec<Option<(usize, f64, usize)>> = vec![None; n + 1];
    best[0] = Some((0, 0.0, 0));
    for j in 1..=n {
        for i in 0..j {
            let Some((k, e, _)) = best[i] else { continue };
            let (err, _) = run_fit(&points[i..j]);
            if err > threshold {
                continue;
            }
            let cand = (k + 1, e + err, i);
            let better = match best[j] {
                None => true,
                Some((bk, be, _)) => cand.0 < bk || (cand.0 == bk && cand.1 < be),
            };
            if better {
                best[j] = Some(cand);
            }
        }
    }
    let mut slopes = Vec::new();
    let mut j = n;
    while j > 0 {
        let (_, _, i) = best[j].expect("single points are always feasible");
        slopes.push(run_fit(&points[i..j]).1);
        j = i;
    }
    slopes.reverse();
    slopes
}

/// Noiseless series over an integer grid made of `pieces` lines, each at
/// least four points long, with consecutive slopes and the jump at every
/// break differing by at least 0.5.
pub fn piecewise_series<R: Rng>(rng: &mut R, pieces: usize) -> (Vec<(f64, f64)>, Vec<f64>) {
    'retry: loop {
        let mut lines: Vec<(f64, f64, usize)> = Vec::new();
        for _ in 0..pieces {
            let a = rng.gen_range(-1.0..1.0);
            let b = rng.gen_range(-2.0..2.0);
            let len = rng.gen_range(4..=9);
            lines.push((a, b, len));
        }
        let mut points = Vec::new();
        let mut x = 0.0;
        for (j, &(a, b, len)) in lines.iter().enumerate() {
            if j > 0 {
                let (pa, pb, _) = lines[j - 1];
                if (b - pb).abs() < 0.5 || ((a + b * x) - (pa + pb * x)).abs() < 0.5 {
                    continue 'retry;
                }
            }
            for _ in 0..len {
                points.push((x, a + b * x));
                x += 1.0;
            }
        }
        return (points, lines.iter().map(|l| l.1).collect());
    }
}

/// Random classes over `[0, 1]`-ish supports with positive gaps between them,
/// so the joined curve is continuous. Lines may dip below zero.
pub fn random_classes<R: Rng>(rng: &mut R) -> Vec<LinearClass> {
    let k = rng.gen_range(1..=4);
    let mut x = rng.gen_range(-0.5..0.5);
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let lower = x;
        let upper = lower + rng.gen_range(0.05..0.6);
        let y0: f64 = rng.gen_range(-0.3..2.0);
        let y1: f64 = rng.gen_range(0.05..2.0);
        let (y0, y1) = if rng.gen_bool(0.5) { (y0, y1) } else { (y1, y0) };
        let slope = (y1 - y0) / (upper - lower);
        out.push(LinearClass {
            lower,
            upper,
            line: Line::new(y0 - slope * lower, slope),
        });
        x = upper + rng.gen_range(0.01..0.4);
    }
    out
}

/// `max(0, f)` of the curve formed by `classes` and straight joins between
/// consecutive class endpoints, evaluated from scratch.
pub fn raw_curve(classes: &[LinearClass], x: f64) -> f64 {
    let val = |c: &LinearClass, x: f64| c.line.intercept + c.line.slope * x;
    for (i, c) in classes.iter().enumerate() {
        if x >= c.lower && x <= c.upper {
            return val(c, x).max(0.0);
        }
        if let Some(next) = classes.get(i + 1) {
            if x > c.upper && x < next.lower {
                let (y0, y1) = (val(c, c.upper), val(next, next.lower));
                let w = (x - c.upper) / (next.lower - c.upper);
                return (y0 + w * (y1 - y0)).max(0.0);
            }
        }
    }
    0.0
}

/// Trapezoid integral of `raw_curve` on `steps` equal cells over the
/// classes' span; returns the grid and the normalized upper-tail mass at
/// every grid point.
pub fn trapezoid_tails(classes: &[LinearClass], steps: usize) -> (Vec<f64>, Vec<f64>) {
    let lo = classes[0].lower;
    let hi = classes[classes.len() - 1].upper;
    let h = (hi - lo) / steps as f64;
    let xs: Vec<f64> = (0..=steps)
        .map(|i| if i == steps { hi } else { lo + i as f64 * h })
        .collect();
    let ys: Vec<f64> = xs.iter().map(|&x| raw_curve(classes, x)).collect();
    let mut tail = vec![0.0; steps + 1];
    for i in (0..steps).rev() {
        tail[i] = tail[i + 1] + 0.5 * (ys[i] + ys[i + 1]) * (xs[i + 1] - xs[i]);
    }
    let total = tail[0];
    for t in &mut tail {
        *t /= total;
    }
    (xs, tail)
}

/// Evenly spaced points covering `[lo, hi]` inclusive.
pub fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(move |i| if i == n - 1 { hi } else { lo + i as f64 * h })
}
