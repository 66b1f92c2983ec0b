//! Separated covering nets, covering multiplicity and trailing orderings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ManifoldModel, ModelKind, Point};

/// Geodesic ball a net has to cover.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub center: Point,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub rho: f64,
    pub points: Vec<Point>,
    pub region: Region,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrailingOrdering {
    pub base: Point,
    pub order: Vec<usize>,
}

/// Stop threshold of the greedy insertion, as a fraction of `rho`.
/// Candidates sit on a grid of spacing `rho / 8`, so every point of the
/// region ends up within `rho` of the net.
const COVER_FRACTION: f64 = 0.85;

/// Region enlarged by the `2 rho` padding used on non-compact models.
pub fn working_region(model: &ManifoldModel, region: &Region, rho: f64) -> Region {
    let pad = if model.kind == ModelKind::Sphere {
        0.0
    } else {
        2.0 * rho
    };
    Region {
        center: region.center.clone(),
        radius: region.radius + pad,
    }
}

/// Normal-coordinate grid points of spacing `h` inside the ball `|ξ| <= radius`.
pub(crate) fn ball_grid(model: &ManifoldModel, center: &Point, radius: f64, h: f64) -> Vec<Point> {
    let n = model.dim;
    let lim = radius.min(model.injectivity_radius() * (1.0 - 1e-9));
    let m = (lim / h).floor() as i64;
    let side = (2 * m + 1) as usize;
    let chart = model.chart_at(center);
    let mut out = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        let xi: Vec<f64> = idx.iter().map(|&i| (i as i64 - m) as f64 * h).collect();
        if crate::geometry::norm(&xi) <= lim {
            if let Ok(p) = chart.exp(&xi) {
                out.push(p);
            }
        }
        let mut a = 0;
        loop {
            if a == n {
                return out;
            }
            idx[a] += 1;
            if idx[a] < side {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

/// Greedy farthest-point net seeded at the region center.
pub fn build_discretization(
    model: &ManifoldModel,
    rho: f64,
    region: &Region,
) -> Result<Discretization> {
    if !(rho > 0.0) {
        return Err(Error::Argument(format!("rho must be positive, got {rho}")));
    }
    if !region.radius.is_finite() || region.radius < 0.0 {
        return Err(Error::Argument("region radius must be finite".into()));
    }
    model.check_point(&region.center)?;
    // the grid is laid out in normal coordinates; widen it against the
    // metric stretch so candidate spacing stays below rho / 8 geodesically
    let stretch = match model.kind {
        ModelKind::Hyperbolic => model.sn_ratio(region.radius),
        _ => 1.0,
    };
    let h = rho / (8.0 * stretch);
    let cands = ball_grid(model, &region.center, region.radius + h, h);
    let mut points = vec![region.center.clone()];
    let mut mind: Vec<f64> = cands
        .iter()
        .map(|c| model.distance(c, &region.center))
        .collect();
    loop {
        let (best, far) =
            mind.iter()
                .enumerate()
                .fold((usize::MAX, f64::NEG_INFINITY), |acc, (i, &d)| {
                    if d > acc.1 {
                        (i, d)
                    } else {
                        acc
                    }
                });
        if best == usize::MAX || far < COVER_FRACTION * rho {
            break;
        }
        let p = cands[best].clone();
        for (m, c) in mind.iter_mut().zip(&cands) {
            let d = model.distance(c, &p);
            if d < *m {
                *m = d;
            }
        }
        points.push(p);
    }
    Ok(Discretization {
        rho,
        points,
        region: region.clone(),
    })
}

/// Largest number of net points within distance `a` of a dense test grid point.
pub fn covering_multiplicity(model: &ManifoldModel, d: &Discretization, a: f64) -> Result<usize> {
    if a < d.rho {
        return Err(Error::Argument(format!(
            "a = {a} must be >= rho = {}",
            d.rho
        )));
    }
    let grid = ball_grid(model, &d.region.center, d.region.radius, d.rho / 8.0);
    let best = grid
        .iter()
        .map(|x| {
            d.points
                .iter()
                .filter(|y| model.distance(x, y) <= a)
                .count()
        })
        .max()
        .unwrap_or(0);
    Ok(best.max(1))
}

/// Minimum pairwise distance and worst coverage distance over a test grid.
pub fn audit(model: &ManifoldModel, d: &Discretization, test_spacing: f64) -> (f64, f64) {
    let mut sep = f64::INFINITY;
    for i in 0..d.points.len() {
        for j in 0..i {
            sep = sep.min(model.distance(&d.points[i], &d.points[j]));
        }
    }
    let grid = ball_grid(model, &d.region.center, d.region.radius, test_spacing);
    let cover = grid
        .iter()
        .map(|x| {
            d.points
                .iter()
                .map(|y| model.distance(x, y))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    (sep, cover)
}

/// Distance key used for ordering; distances equal to 1e-9 count as ties.
fn tie_key(dist: f64) -> i64 {
    (dist * 1e9).round() as i64
}

/// Orders net points by distance to `base`, ties by index.
pub fn trailing_ordering(
    model: &ManifoldModel,
    d: &Discretization,
    base: &Point,
) -> Result<TrailingOrdering> {
    ordering_of(model, &d.points, base)
}

pub(crate) fn ordering_of(
    model: &ManifoldModel,
    points: &[Point],
    base: &Point,
) -> Result<TrailingOrdering> {
    if points.is_empty() {
        return Err(Error::Argument("empty net".into()));
    }
    let mut keyed: Vec<(i64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (tie_key(model.distance(p, base)), i))
        .collect();
    keyed.sort();
    Ok(TrailingOrdering {
        base: base.clone(),
        order: keyed.into_iter().map(|(_, i)| i).collect(),
    })
}

/// Writes one point per row, comma separated model coordinates.
pub fn to_rows(d: &Discretization) -> String {
    let mut s = String::new();
    for p in &d.points {
        let row: Vec<String> = p.0.iter().map(|v| format!("{v:.16e}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}
