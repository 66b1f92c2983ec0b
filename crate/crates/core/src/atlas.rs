//! Trailing families, transition-map limits, limit metrics and gluing residuals.
//!
//! Chart `i` at step `k` is the normal chart at `y_{k,i}`, the `i`-th closest
//! net point to `y_k`. Transition maps `ψ_ij,k = e_{y_{k,i}}^{-1} ∘ e_{y_{k,j}}`
//! are sampled on a cube grid over `Ω_ρ`; the sample at the largest `k` stands in
//! for the limit and the distance to the previous step is the Cauchy gap.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{ordering_of, Discretization, Region, TrailingOrdering};
use crate::error::{Error, Result};
use crate::fields::{cube_node, cube_stencil};
use crate::geometry::{norm, ManifoldModel, Point};

/// Ties in the orderings are broken by net index; recorded in reports.
pub const TIE_BREAKING: &str = "distance rounded to 1e-9, then net index";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrailingFamily {
    pub ks: Vec<i32>,
    pub base_path: Vec<Point>,
    pub points: Vec<Point>,
    pub orderings: Vec<TrailingOrdering>,
}

impl TrailingFamily {
    /// `y_{k,i}` for the `n`-th step.
    pub fn point(&self, n: usize, i: usize) -> Result<&Point> {
        let ord = self
            .orderings
            .get(n)
            .ok_or_else(|| Error::Argument(format!("no step with index {n}")))?;
        let idx = ord
            .order
            .get(i)
            .ok_or_else(|| Error::Argument(format!("chart index {i} exceeds the net")))?;
        Ok(&self.points[*idx])
    }
}

/// Orders `net` by distance from `base_path[n]` for every step `ks[n]`.
pub fn trailing_family(
    model: &ManifoldModel,
    net: &Discretization,
    base_path: &[Point],
    ks: &[i32],
) -> Result<TrailingFamily> {
    if net.points.is_empty() {
        return Err(Error::Argument("empty net".into()));
    }
    if ks.is_empty() || base_path.len() != ks.len() {
        return Err(Error::Argument(
            "base path and step list must be nonempty and of equal length".into(),
        ));
    }
    let orderings = base_path
        .iter()
        .map(|b| ordering_of(model, &net.points, b))
        .collect::<Result<_>>()?;
    Ok(TrailingFamily {
        ks: ks.to_vec(),
        base_path: base_path.to_vec(),
        points: net.points.clone(),
        orderings,
    })
}

/// Net invariant under `translation(axis, step)`: the slices `T_{step m}(D_0)`,
/// `m ∈ span`, of a square lattice `D_0` of spacing `rho / 2` in the hyperplane
/// through the origin orthogonal to `axis`, cut to `|ξ| <= cross_radius`.
pub fn invariant_net(
    model: &ManifoldModel,
    axis: usize,
    step: f64,
    rho: f64,
    span: (i32, i32),
    cross_radius: f64,
) -> Result<Discretization> {
    if axis >= model.dim || !(step > 0.0 && rho > 0.0) || span.0 > span.1 {
        return Err(Error::Argument("invalid invariant net parameters".into()));
    }
    let h = rho / 2.0;
    let m = (cross_radius / h).floor() as i64;
    let others: Vec<usize> = (0..model.dim).filter(|&a| a != axis).collect();
    let side = (2 * m + 1) as usize;
    let chart = model.chart_at(&model.origin());
    let mut slice = Vec::new();
    for mut c in 0..side.pow(others.len() as u32) {
        let mut xi = vec![0.0; model.dim];
        for &a in &others {
            xi[a] = ((c % side) as i64 - m) as f64 * h;
            c /= side;
        }
        if norm(&xi) <= cross_radius {
            slice.push(chart.exp(&xi)?);
        }
    }
    let mut points = Vec::new();
    for s in span.0..=span.1 {
        let t = model.translation(axis, step * s as f64);
        points.extend(slice.iter().map(|p| t.apply(p)));
    }
    let far = (span.0.abs().max(span.1.abs())) as f64 * step + cross_radius;
    Ok(Discretization {
        rho,
        points,
        region: Region {
            center: model.origin(),
            radius: far,
        },
    })
}

/// Cube grid `[-ρ - 2h, ρ + 2h]^N` of spacing `h = ρ / subdivisions`; nodes with
/// `|ξ| < ρ` form `Ω_ρ`, the margin keeps stencils inside the cube.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtlasGrid {
    pub rho: f64,
    pub subdivisions: usize,
}

impl AtlasGrid {
    pub fn spacing(&self) -> f64 {
        self.rho / self.subdivisions as f64
    }

    pub fn half_width(&self) -> f64 {
        self.rho + 2.0 * self.spacing()
    }

    pub fn points(&self) -> usize {
        2 * (self.subdivisions + 2) + 1
    }

    pub fn len(&self, dim: usize) -> usize {
        self.points().pow(dim as u32)
    }

    pub fn node(&self, dim: usize, i: usize) -> Vec<f64> {
        cube_node(dim, self.half_width(), self.points(), i)
    }

    pub fn inside(&self, xi: &[f64]) -> bool {
        norm(xi) < self.rho
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || self.subdivisions < 2 {
            return Err(Error::Argument(
                "atlas grid needs rho > 0 and at least 2 subdivisions".into(),
            ));
        }
        Ok(())
    }
}

impl Default for AtlasGrid {
    fn default() -> Self {
        AtlasGrid {
            rho: 0.2,
            subdivisions: 32,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TransitionLimit {
    pub i: usize,
    pub j: usize,
    pub ks: Vec<i32>,
    pub grid: AtlasGrid,
    /// Per step, `N` coordinates per node; `NaN` where the map is undefined.
    pub samples: Vec<Vec<f64>>,
    /// `max |ψ_{k_{n+1}} - ψ_{k_n}|` over `Ω_ρ` for consecutive steps.
    pub gaps: Vec<f64>,
    pub cauchy_gap: f64,
    /// `|ψ_ij,k(0)| - d(y_{k,i}, y_{k,j})` per step.
    pub origin_defects: Vec<f64>,
}

impl TransitionLimit {
    pub fn limit_samples(&self) -> &[f64] {
        self.samples.last().unwrap()
    }

    fn at(&self, n: usize, node: usize, dim: usize) -> &[f64] {
        &self.samples[n][node * dim..(node + 1) * dim]
    }
}

/// `ψ_ij,k` sampled at every step of the family.
pub fn transition_sequence(
    model: &ManifoldModel,
    family: &TrailingFamily,
    i: usize,
    j: usize,
    grid: &AtlasGrid,
) -> Result<TransitionLimit> {
    grid.validate()?;
    let dim = model.dim;
    let total = grid.len(dim);
    let reach = grid.rho + 2.0 * grid.spacing() * (dim as f64).sqrt();
    let mut samples = Vec::with_capacity(family.ks.len());
    let mut origin_defects = Vec::new();
    for n in 0..family.ks.len() {
        let (yi, yj) = (family.point(n, i)?, family.point(n, j)?);
        let d = model.distance(yi, yj);
        if d >= 2.0 * grid.rho {
            return Err(Error::Domain(format!(
                "charts {i} and {j} do not overlap at k = {} (distance {d})",
                family.ks[n]
            )));
        }
        let (ci, cj) = (model.chart_at(yi), model.chart_at(yj));
        let vals: Vec<Vec<f64>> = (0..total)
            .into_par_iter()
            .map(|node| {
                let xi = grid.node(dim, node);
                if norm(&xi) > reach {
                    return vec![f64::NAN; dim];
                }
                match cj.exp(&xi).and_then(|p| ci.log(&p)) {
                    Ok(eta) => eta,
                    Err(_) => vec![f64::NAN; dim],
                }
            })
            .collect();
        let flat: Vec<f64> = vals.into_iter().flatten().collect();
        let zero = ci.log(yj)?;
        origin_defects.push(norm(&zero) - d);
        samples.push(flat);
    }
    let mut t = TransitionLimit {
        i,
        j,
        ks: family.ks.clone(),
        grid: *grid,
        samples,
        gaps: Vec::new(),
        cauchy_gap: 0.0,
        origin_defects,
    };
    for n in 1..t.ks.len() {
        let mut g = 0.0f64;
        for node in 0..total {
            if !grid.inside(&grid.node(dim, node)) {
                continue;
            }
            let (a, b) = (t.at(n, node, dim), t.at(n - 1, node, dim));
            let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            let v = norm(&diff);
            if v.is_finite() {
                g = g.max(v);
            }
        }
        t.gaps.push(g);
    }
    t.cauchy_gap = t.gaps.last().copied().unwrap_or(0.0);
    Ok(t)
}

#[derive(Clone, Debug)]
pub struct LimitMetric {
    pub i: usize,
    pub dim: usize,
    pub grid: AtlasGrid,
    /// `N²` components per node at the largest step.
    pub samples: Vec<f64>,
    /// `max |g_k* - g_k'|` over `Ω_ρ` for the two largest steps.
    pub stability_gap: f64,
}

impl LimitMetric {
    pub fn at_node(&self, node: usize, dim: usize) -> &[f64] {
        &self.samples[node * dim * dim..(node + 1) * dim * dim]
    }

    /// Interpolated metric at `ξ`.
    pub fn at(&self, xi: &[f64], dim: usize) -> Option<Vec<f64>> {
        let st = cube_stencil(dim, self.grid.half_width(), self.grid.points(), xi)?;
        let mut g = vec![0.0; dim * dim];
        for (idx, w) in st {
            g.iter_mut()
                .zip(self.at_node(idx, dim))
                .for_each(|(a, b)| *a += w * b);
        }
        Some(g)
    }
}

/// `g_αβ(ξ) = ⟨∂_α e_y, ∂_β e_y⟩` by central differences of the chart.
fn chart_metric(model: &ManifoldModel, y: &Point, grid: &AtlasGrid) -> Vec<f64> {
    let dim = model.dim;
    let chart = model.chart_at(y);
    const STEP: f64 = 1e-5;
    (0..grid.len(dim))
        .into_par_iter()
        .map(|node| {
            let xi = grid.node(dim, node);
            let cols: Vec<Vec<f64>> = (0..dim)
                .map(|a| {
                    let mut p = xi.clone();
                    let mut q = xi.clone();
                    p[a] += STEP;
                    q[a] -= STEP;
                    match (chart.exp(&p), chart.exp(&q)) {
                        (Ok(p), Ok(q)) => {
                            p.0.iter()
                                .zip(&q.0)
                                .map(|(u, v)| (u - v) / (2.0 * STEP))
                                .collect()
                        }
                        _ => vec![f64::NAN; model.ambient_dim()],
                    }
                })
                .collect();
            let mut g = vec![0.0; dim * dim];
            for a in 0..dim {
                for b in 0..dim {
                    g[a * dim + b] = model.inner(&cols[a], &cols[b]);
                }
            }
            g
        })
        .flatten()
        .collect()
}

/// Metric of chart `i` at the largest step, with its change from the previous step.
pub fn limit_metric(
    model: &ManifoldModel,
    family: &TrailingFamily,
    i: usize,
    grid: &AtlasGrid,
) -> Result<LimitMetric> {
    grid.validate()?;
    let dim = model.dim;
    let n = family.ks.len();
    let last = chart_metric(model, family.point(n - 1, i)?, grid);
    let mut gap = 0.0f64;
    if n >= 2 {
        let prev = chart_metric(model, family.point(n - 2, i)?, grid);
        for node in 0..grid.len(dim) {
            if !grid.inside(&grid.node(dim, node)) {
                continue;
            }
            for c in 0..dim * dim {
                let v = (last[node * dim * dim + c] - prev[node * dim * dim + c]).abs();
                if v.is_finite() {
                    gap = gap.max(v);
                }
            }
        }
    }
    Ok(LimitMetric {
        i,
        dim,
        grid: *grid,
        samples: last,
        stability_gap: gap,
    })
}

/// `max |g_i - Dψᵀ (g_j ∘ ψ) Dψ|` over nodes of `Ω_ρ` mapped into `Ω_ρ`, for
/// `ψ = ψ_ji` sampled at step `n` (the last one when `None`).
pub fn compatibility_residual_at(
    gi: &LimitMetric,
    gj: &LimitMetric,
    psi: &TransitionLimit,
    n: Option<usize>,
) -> Result<f64> {
    if psi.j != gi.i || psi.i != gj.i {
        return Err(Error::Argument(format!(
            "transition ({}, {}) does not map chart {} to chart {}",
            psi.i, psi.j, gi.i, gj.i
        )));
    }
    let n = n.unwrap_or(psi.ks.len() - 1);
    if n >= psi.ks.len() {
        return Err(Error::Argument(format!("no step with index {n}")));
    }
    let grid = psi.grid;
    let dim = gi.dim;
    if gi.grid != grid || gj.grid != grid || grid.len(dim) * dim != psi.samples[n].len() {
        return Err(Error::Argument("metric and transition grids differ".into()));
    }
    let h = grid.spacing();
    let pts = grid.points();
    let strides: Vec<usize> = (0..dim).map(|a| pts.pow(a as u32)).collect();
    let res: Vec<Option<f64>> = (0..grid.len(dim))
        .into_par_iter()
        .map(|node| {
            let xi = grid.node(dim, node);
            if !grid.inside(&xi) {
                return None;
            }
            let eta = psi.at(n, node, dim);
            if !eta.iter().all(|v| v.is_finite()) || !grid.inside(eta) {
                return None;
            }
            // D[c][a] = ∂ψ^c / ∂ξ_a
            let mut d = vec![0.0; dim * dim];
            for a in 0..dim {
                let (p, q) = (
                    psi.at(n, node + strides[a], dim),
                    psi.at(n, node - strides[a], dim),
                );
                for c in 0..dim {
                    d[c * dim + a] = (p[c] - q[c]) / (2.0 * h);
                }
            }
            let g2 = gj.at(eta, dim)?;
            let g1 = gi.at_node(node, dim);
            let mut worst = 0.0f64;
            for a in 0..dim {
                for b in 0..dim {
                    let mut s = 0.0;
                    for c in 0..dim {
                        for e in 0..dim {
                            s += d[c * dim + a] * g2[c * dim + e] * d[e * dim + b];
                        }
                    }
                    worst = worst.max((g1[a * dim + b] - s).abs());
                }
            }
            Some(worst)
        })
        .collect();
    let vals: Vec<f64> = res.into_iter().flatten().collect();
    if vals.is_empty() {
        return Err(Error::Domain(format!(
            "charts {} and {} have no common grid nodes",
            gi.i, gj.i
        )));
    }
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// Residual of the gluing relation at the largest step.
pub fn compatibility_residual(
    gi: &LimitMetric,
    gj: &LimitMetric,
    psi: &TransitionLimit,
) -> Result<f64> {
    compatibility_residual_at(gi, gj, psi, None)
}

/// `max |ψ_ℓi - ψ_ℓj ∘ ψ_ji|` at the largest step, over nodes where all three maps
/// stay in `Ω_ρ`; `ψ_ℓj` is interpolated off the grid.
pub fn cocycle_defect(
    psi_li: &TransitionLimit,
    psi_lj: &TransitionLimit,
    psi_ji: &TransitionLimit,
    dim: usize,
) -> Result<f64> {
    if psi_li.j != psi_ji.j || psi_lj.j != psi_ji.i || psi_li.i != psi_lj.i {
        return Err(Error::Argument(
            "transition indices do not form a triple".into(),
        ));
    }
    let grid = psi_ji.grid;
    let n_li = psi_li.ks.len() - 1;
    let n_lj = psi_lj.ks.len() - 1;
    let n_ji = psi_ji.ks.len() - 1;
    let mut worst: Option<f64> = None;
    for node in 0..grid.len(dim) {
        let xi = grid.node(dim, node);
        if !grid.inside(&xi) {
            continue;
        }
        let eta = psi_ji.at(n_ji, node, dim);
        let direct = psi_li.at(n_li, node, dim);
        if !grid.inside(eta) || !direct.iter().all(|v| v.is_finite()) || !grid.inside(direct) {
            continue;
        }
        let Some(st) = cube_stencil(dim, grid.half_width(), grid.points(), eta) else {
            continue;
        };
        let mut comp = vec![0.0; dim];
        let mut ok = true;
        for (idx, w) in st {
            let v = psi_lj.at(n_lj, idx, dim);
            if !v.iter().all(|x| x.is_finite()) {
                ok = false;
                break;
            }
            comp.iter_mut().zip(v).for_each(|(a, b)| *a += w * b);
        }
        if !ok {
            continue;
        }
        let diff: Vec<f64> = direct.iter().zip(&comp).map(|(a, b)| a - b).collect();
        worst = Some(worst.unwrap_or(0.0).max(norm(&diff)));
    }
    worst.ok_or_else(|| Error::Domain("empty triple overlap".into()))
}

/// Parameters of a drifting-path atlas run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AtlasConfig {
    pub axis: usize,
    /// Base path `y_k = translation(axis, step k)(origin)`.
    pub step: f64,
    pub grid: AtlasGrid,
    /// Chart indices `0..charts`.
    pub charts: usize,
    pub ks: Vec<i32>,
}

impl Default for AtlasConfig {
    fn default() -> Self {
        AtlasConfig {
            axis: 0,
            step: 0.1,
            grid: AtlasGrid::default(),
            charts: 4,
            ks: vec![4, 6, 8, 10],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub i: usize,
    pub j: usize,
    pub gaps: Vec<f64>,
    pub cauchy_gap: f64,
    pub max_origin_defect: f64,
    /// Residual of `g_j` against `g_i` through `ψ_ij` at every step.
    pub residuals: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartRow {
    pub i: usize,
    pub stability_gap: f64,
    /// `max |g(0) - I|`.
    pub origin_error: f64,
    /// `max |g - metric_in_normal_coords|` over `Ω_ρ`.
    pub normal_coords_error: f64,
    pub min_eigenvalue: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CocycleRow {
    pub l: usize,
    pub j: usize,
    pub i: usize,
    pub defect: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtlasReport {
    pub model: ManifoldModel,
    pub config: AtlasConfig,
    pub tie_breaking: String,
    pub pairs: Vec<PairRow>,
    pub charts: Vec<ChartRow>,
    pub cocycles: Vec<CocycleRow>,
}

fn min_eigenvalue(g: &[f64], dim: usize) -> f64 {
    let mut a = g.to_vec();
    for _ in 0..50 {
        let mut off = 0.0;
        for p in 0..dim {
            for q in p + 1..dim {
                off += a[p * dim + q].powi(2);
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..dim {
            for q in p + 1..dim {
                let apq = a[p * dim + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * dim + q] - a[p * dim + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..dim {
                    let (akp, akq) = (a[k * dim + p], a[k * dim + q]);
                    a[k * dim + p] = c * akp - s * akq;
                    a[k * dim + q] = s * akp + c * akq;
                }
                for k in 0..dim {
                    let (apk, aqk) = (a[p * dim + k], a[q * dim + k]);
                    a[p * dim + k] = c * apk - s * aqk;
                    a[q * dim + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..dim)
        .map(|p| a[p * dim + p])
        .fold(f64::INFINITY, f64::min)
}

/// Family along `translation(axis, step k)` over an invariant net, with every pair
/// and triple of the first `charts` indices.
pub fn atlas_report(model: &ManifoldModel, cfg: &AtlasConfig) -> Result<AtlasReport> {
    cfg.grid.validate()?;
    if cfg.charts == 0
        || cfg.charts > 12
        || cfg.ks.is_empty()
        || cfg.ks.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::Argument(
            "charts must be in 1..=12 and ks nonempty and increasing".into(),
        ));
    }
    let dim = model.dim;
    let rho = cfg.grid.rho;
    let lo = cfg.ks[0] - 4;
    let hi = cfg.ks[cfg.ks.len() - 1] + 4;
    let net = invariant_net(model, cfg.axis, cfg.step, rho, (lo, hi), 2.0 * rho)?;
    let path: Vec<Point> = cfg
        .ks
        .iter()
        .map(|&k| {
            model
                .translation(cfg.axis, cfg.step * k as f64)
                .apply(&model.origin())
        })
        .collect();
    let fam = trailing_family(model, &net, &path, &cfg.ks)?;
    let metrics: Vec<LimitMetric> = (0..cfg.charts)
        .map(|i| limit_metric(model, &fam, i, &cfg.grid))
        .collect::<Result<_>>()?;
    let mut charts = Vec::new();
    for g in &metrics {
        let mut origin_error = 0.0f64;
        let mut nc = 0.0f64;
        let mut min_eig = f64::INFINITY;
        for node in 0..cfg.grid.len(dim) {
            let xi = cfg.grid.node(dim, node);
            if !cfg.grid.inside(&xi) {
                continue;
            }
            let s = g.at_node(node, dim);
            let exact = model.metric_in_normal_coords(&xi)?;
            for a in 0..dim {
                for b in 0..dim {
                    nc = nc.max((s[a * dim + b] - exact.component(a, b)).abs());
                }
            }
            min_eig = min_eig.min(min_eigenvalue(s, dim));
            if norm(&xi) == 0.0 {
                for a in 0..dim {
                    for b in 0..dim {
                        let id = if a == b { 1.0 } else { 0.0 };
                        origin_error = origin_error.max((s[a * dim + b] - id).abs());
                    }
                }
            }
        }
        charts.push(ChartRow {
            i: g.i,
            stability_gap: g.stability_gap,
            origin_error,
            normal_coords_error: nc,
            min_eigenvalue: min_eig,
        });
    }
    let mut transitions = std::collections::BTreeMap::new();
    let mut pairs = Vec::new();
    for i in 0..cfg.charts {
        for j in 0..cfg.charts {
            let t = match transition_sequence(model, &fam, i, j, &cfg.grid) {
                Ok(t) => t,
                Err(Error::Domain(_)) => continue,
                Err(e) => return Err(e),
            };
            // ψ_ij maps chart j to chart i: it glues g_j to g_i
            let residuals = (0..cfg.ks.len())
                .map(|n| {
                    if i == j {
                        Ok(0.0)
                    } else {
                        compatibility_residual_at(&metrics[j], &metrics[i], &t, Some(n))
                    }
                })
                .collect::<Result<_>>()?;
            pairs.push(PairRow {
                i,
                j,
                gaps: t.gaps.clone(),
                cauchy_gap: t.cauchy_gap,
                max_origin_defect: t.origin_defects.iter().fold(0.0, |a, b| a.max(b.abs())),
                residuals,
            });
            transitions.insert((i, j), t);
        }
    }
    let mut cocycles = Vec::new();
    for l in 0..cfg.charts {
        for j in 0..cfg.charts {
            for i in 0..cfg.charts {
                if l == j || j == i || l == i {
                    continue;
                }
                let (Some(a), Some(b), Some(c)) = (
                    transitions.get(&(l, i)),
                    transitions.get(&(l, j)),
                    transitions.get(&(j, i)),
                ) else {
                    continue;
                };
                let Ok(defect) = cocycle_defect(a, b, c, dim) else {
                    continue;
                };
                let tolerance =
                    2.0 * a.cauchy_gap.max(b.cauchy_gap).max(c.cauchy_gap) + COCYCLE_FLOOR;
                cocycles.push(CocycleRow {
                    l,
                    j,
                    i,
                    defect,
                    tolerance,
                });
            }
        }
    }
    Ok(AtlasReport {
        model: model.clone(),
        config: cfg.clone(),
        tie_breaking: TIE_BREAKING.into(),
        pairs,
        charts,
        cocycles,
    })
}

/// Interpolation and rounding allowance added to the cocycle tolerance.
pub const COCYCLE_FLOOR: f64 = 1e-6;
