//! Chart quadrature over a smooth partition of unity adapted to the support
//! hints of the integrands.
//!
//! Every hint of radius `ρ` up to the chart radius gets its own normal chart
//! with cutoff `ψ` equal to 1 on `B(c, ρ)` and 0 outside `B(c, 2ρ)`. Charts are
//! ordered finest first and chart `i` carries `ψ_i Π_{l<i} (1 - ψ_l)`. Larger
//! hints are covered by a net with `ρ = r/2` whose charts share the remaining
//! weight `Π_l (1 - ψ_l)` in proportion to their own cutoffs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Field, SupportBall};
use crate::bubbles::cutoff::Cutoff;
use crate::discretization::{build_discretization, Region};
use crate::error::{Error, Result};
use crate::geometry::{norm, Chart, ManifoldModel, ModelKind, Point};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Gauss-Legendre points per axis and cell.
    pub order: usize,
    /// Core cells per axis on a hint chart.
    pub fine_cells: usize,
    /// Core cells per axis on a covering-net chart.
    pub coarse_cells: usize,
    pub max_depth: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            order: 8,
            fine_cells: 4,
            coarse_cells: 2,
            max_depth: 30,
        }
    }
}

impl QuadratureSpec {
    pub fn with_order(order: usize) -> Self {
        QuadratureSpec {
            order,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub point: Point,
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct Quadrature {
    pub nodes: Vec<Node>,
    pub charts: usize,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Pairwise summation in index order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

struct FineChart {
    chart: Chart,
    rho: f64,
    prior: Vec<usize>,
}

struct CoarseChart {
    chart: Chart,
    nbrs: Vec<usize>,
    fine: Vec<usize>,
}

/// Partition of unity over hint charts and covering-net charts.
pub struct Partition {
    model: ManifoldModel,
    fine: Vec<FineChart>,
    coarse: Vec<CoarseChart>,
    coarse_rho: f64,
}

fn psi(rho: f64, d: f64) -> f64 {
    Cutoff { r: 2.0 * rho }.radial(d)
}

impl Partition {
    pub fn new(model: &ManifoldModel, hints: &[SupportBall]) -> Result<Self> {
        for h in hints {
            if !h.radius.is_finite() {
                return Err(Error::Argument("field support is unbounded".into()));
            }
        }
        let limit = match model.kind {
            ModelKind::Euclidean => f64::INFINITY,
            _ => model.chart_radius,
        };
        let mut order: Vec<usize> = (0..hints.len()).collect();
        order.sort_by(|&a, &b| hints[a].radius.total_cmp(&hints[b].radius).then(a.cmp(&b)));
        let mut fine: Vec<FineChart> = Vec::new();
        let mut coarse_pts: Vec<Point> = Vec::new();
        let coarse_rho = model.chart_radius / 2.0;
        for &i in &order {
            let h = &hints[i];
            if h.radius <= limit {
                let prior = fine
                    .iter()
                    .enumerate()
                    .filter(|(_, f)| {
                        model.distance(&f.chart.center, &h.center) < 2.0 * (f.rho + h.radius)
                    })
                    .map(|(l, _)| l)
                    .collect();
                fine.push(FineChart {
                    chart: model.chart_at(&h.center),
                    rho: h.radius,
                    prior,
                });
            } else {
                let net = build_discretization(
                    model,
                    coarse_rho,
                    &Region {
                        center: h.center.clone(),
                        radius: h.radius,
                    },
                )?;
                for p in net.points {
                    if !coarse_pts.iter().any(|q| model.distance(q, &p) < 1e-9) {
                        coarse_pts.push(p);
                    }
                }
            }
        }
        let zone = 2.0 * coarse_rho;
        let coarse = coarse_pts
            .iter()
            .enumerate()
            .map(|(c, p)| {
                let nbrs = coarse_pts
                    .iter()
                    .enumerate()
                    .filter(|(o, q)| *o != c && model.distance(p, q) < 2.0 * zone)
                    .map(|(o, _)| o)
                    .collect();
                let near = fine
                    .iter()
                    .enumerate()
                    .filter(|(_, f)| model.distance(&f.chart.center, p) < zone + 2.0 * f.rho)
                    .map(|(l, _)| l)
                    .collect();
                CoarseChart {
                    chart: model.chart_at(p),
                    nbrs,
                    fine: near,
                }
            })
            .collect();
        Ok(Partition {
            model: model.clone(),
            fine,
            coarse,
            coarse_rho,
        })
    }

    pub fn chart_count(&self) -> usize {
        self.fine.len() + self.coarse.len()
    }

    fn fine_weight(&self, i: usize, x: &Point, d_i: f64) -> f64 {
        let f = &self.fine[i];
        let mut w = psi(f.rho, d_i);
        for &l in &f.prior {
            if w == 0.0 {
                break;
            }
            let fl = &self.fine[l];
            w *= 1.0 - psi(fl.rho, self.model.distance(&fl.chart.center, x));
        }
        w
    }

    fn coarse_weight(&self, c: usize, x: &Point, d_c: f64) -> f64 {
        let ch = &self.coarse[c];
        let own = psi(self.coarse_rho, d_c);
        if own == 0.0 {
            return 0.0;
        }
        let mut total = own;
        for &o in &ch.nbrs {
            total += psi(
                self.coarse_rho,
                self.model.distance(&self.coarse[o].chart.center, x),
            );
        }
        let mut w = own / total;
        for &l in &ch.fine {
            let fl = &self.fine[l];
            w *= 1.0 - psi(fl.rho, self.model.distance(&fl.chart.center, x));
        }
        w
    }

    /// Weights of every chart at `x`, hint charts first.
    pub fn weights_at(&self, x: &Point) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.chart_count());
        for i in 0..self.fine.len() {
            let d = self.model.distance(&self.fine[i].chart.center, x);
            out.push(self.fine_weight(i, x, d));
        }
        for c in 0..self.coarse.len() {
            let d = self.model.distance(&self.coarse[c].chart.center, x);
            out.push(self.coarse_weight(c, x, d));
        }
        out
    }

    /// Lipschitz bounds of `exp` and `log` on a chart of radius `zone`.
    fn stretch(&self, zone: f64) -> (f64, f64) {
        match self.model.kind {
            ModelKind::Euclidean => (1.0, 1.0),
            ModelKind::Hyperbolic => (self.model.sn_ratio(zone), 1.0),
            ModelKind::Sphere => (1.0, 1.0 / self.model.sn_ratio(zone)),
        }
    }

    /// Leaf cells `(center, half-widths, order)` of a chart with plateau `rho`:
    /// a core `[-rho, rho]^N` split into `per_axis` cells per axis, single-cell
    /// shells out to `2 rho`, and refinement toward the transition annuli of
    /// the finer charts listed in `near`.
    fn cells(
        &self,
        chart: &Chart,
        rho: f64,
        per_axis: usize,
        order: usize,
        near: &[usize],
        max_depth: usize,
    ) -> Vec<(Vec<f64>, Vec<f64>, usize)> {
        let n = self.model.dim;
        let zone = 2.0 * rho;
        let (l_exp, l_log) = self.stretch(zone);
        let near: Vec<(Vec<f64>, f64)> = near
            .iter()
            .filter_map(|&l| {
                let f = &self.fine[l];
                chart.log(&f.chart.center).ok().map(|e| (e, f.rho))
            })
            .collect();
        // per-axis intervals: shell, core cells, shell
        let hc = rho / per_axis as f64;
        let mut axis: Vec<(f64, f64)> = vec![(-1.5 * rho, 0.5 * rho)];
        for i in 0..per_axis {
            axis.push((-rho + (2 * i + 1) as f64 * hc, hc));
        }
        axis.push((1.5 * rho, 0.5 * rho));
        let m = axis.len();
        let mut stack: Vec<(Vec<f64>, Vec<f64>, f64, usize)> = Vec::new();
        let mut idx = vec![0usize; n];
        'outer: loop {
            let c: Vec<f64> = idx.iter().map(|&i| axis[i].0).collect();
            let h: Vec<f64> = idx.iter().map(|&i| axis[i].1).collect();
            let hmax = h.iter().cloned().fold(0.0, f64::max);
            stack.push((c, h, hmax, 0));
            let mut a = 0;
            loop {
                if a == n {
                    break 'outer;
                }
                idx[a] += 1;
                if idx[a] < m {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
        }
        stack.reverse();
        let mut leaves = Vec::new();
        while let Some((c, h, hbase, depth)) = stack.pop() {
            let reach = norm(&h);
            let hmax = h.iter().cloned().fold(0.0, f64::max);
            if norm(&c) - reach >= zone {
                continue;
            }
            let mut split = false;
            let mut touches = false;
            let mut dead = false;
            for (e, r) in &near {
                let delta = norm(&c.iter().zip(e).map(|(a, b)| a - b).collect::<Vec<_>>());
                if (delta + reach) * l_exp < *r {
                    dead = true;
                    break;
                }
                if (delta - reach) / l_log < 2.0 * r {
                    touches = true;
                    if hmax > r / 2.0 {
                        split = true;
                    }
                }
            }
            if dead {
                continue;
            }
            if split && depth < max_depth {
                for corner in 0..(1usize << n) {
                    let cc: Vec<f64> = c
                        .iter()
                        .zip(&h)
                        .enumerate()
                        .map(|(a, (v, hh))| {
                            if corner >> a & 1 == 1 {
                                v + hh / 2.0
                            } else {
                                v - hh / 2.0
                            }
                        })
                        .collect();
                    let hh: Vec<f64> = h.iter().map(|v| v / 2.0).collect();
                    stack.push((cc, hh, hbase, depth + 1));
                }
            } else {
                let q = if touches || depth == 0 {
                    order
                } else {
                    ((order as f64 * hmax / hbase).ceil() as usize).clamp(2, order)
                };
                leaves.push((c, h, q));
            }
        }
        leaves
    }
}

enum Owner {
    Fine(usize),
    Coarse(usize),
}

impl Quadrature {
    pub fn build(
        model: &ManifoldModel,
        hints: &[SupportBall],
        spec: &QuadratureSpec,
    ) -> Result<Self> {
        if spec.order == 0 || spec.fine_cells == 0 || spec.coarse_cells == 0 {
            return Err(Error::Argument(
                "quadrature order and cell counts must be positive".into(),
            ));
        }
        let part = Partition::new(model, hints)?;
        let n = model.dim;
        let rules: Vec<(Vec<f64>, Vec<f64>)> = (0..=spec.order).map(gauss_legendre).collect();
        let mut jobs: Vec<(Owner, Vec<f64>, Vec<f64>, usize)> = Vec::new();
        for (i, f) in part.fine.iter().enumerate() {
            for (c, h, q) in part.cells(
                &f.chart,
                f.rho,
                spec.fine_cells,
                spec.order,
                &f.prior,
                spec.max_depth,
            ) {
                jobs.push((Owner::Fine(i), c, h, q));
            }
        }
        for (ci, ch) in part.coarse.iter().enumerate() {
            for (c, h, q) in part.cells(
                &ch.chart,
                part.coarse_rho,
                spec.coarse_cells,
                spec.order,
                &ch.fine,
                spec.max_depth,
            ) {
                jobs.push((Owner::Coarse(ci), c, h, q));
            }
        }
        let nodes: Vec<Vec<Node>> = jobs
            .par_iter()
            .map(|(owner, c, h, q)| {
                let q = *q;
                let (gx, gw) = &rules[q];
                let (chart, zone) = match owner {
                    Owner::Fine(i) => (&part.fine[*i].chart, 2.0 * part.fine[*i].rho),
                    Owner::Coarse(i) => (&part.coarse[*i].chart, 2.0 * part.coarse_rho),
                };
                let vol: f64 = h.iter().product();
                let mut out = Vec::new();
                let mut idx = vec![0usize; n];
                loop {
                    let xi: Vec<f64> = (0..n).map(|a| c[a] + h[a] * gx[idx[a]]).collect();
                    let r = norm(&xi);
                    if r < zone {
                        if let Ok(p) = chart.exp(&xi) {
                            let phi = match owner {
                                Owner::Fine(i) => part.fine_weight(*i, &p, r),
                                Owner::Coarse(i) => part.coarse_weight(*i, &p, r),
                            };
                            if phi != 0.0 {
                                let w: f64 = idx.iter().map(|&i| gw[i]).product::<f64>() * vol;
                                out.push(Node {
                                    point: p,
                                    weight: w * model.sqrt_det(r) * phi,
                                });
                            }
                        }
                    }
                    let mut a = 0;
                    loop {
                        if a == n {
                            return out;
                        }
                        idx[a] += 1;
                        if idx[a] < q {
                            break;
                        }
                        idx[a] = 0;
                        a += 1;
                    }
                }
            })
            .collect();
        Ok(Quadrature {
            nodes: nodes.into_iter().flatten().collect(),
            charts: part.chart_count(),
        })
    }

    /// Quadrature resolving the supports of all the given fields.
    pub fn for_fields(fields: &[&Field], spec: &QuadratureSpec) -> Result<Self> {
        let model = fields[0].model();
        let mut hints: Vec<SupportBall> = Vec::new();
        for f in fields {
            for h in f.support() {
                super::merge_hint(model, &mut hints, h.clone());
            }
        }
        Self::build(model, &hints, spec)
    }

    /// `Σ w_i f(x_i)`, evaluated in parallel and reduced in index order.
    pub fn sum<F: Fn(&Point) -> f64 + Sync + Send>(&self, f: F) -> f64 {
        let v: Vec<f64> = self
            .nodes
            .par_iter()
            .map(|n| n.weight * f(&n.point))
            .collect();
        pairwise_sum(&v)
    }
}

/// `∫ |u|^p dμ`.
pub fn lp_power(u: &Field, p: f64, spec: &QuadratureSpec) -> Result<f64> {
    if p < 1.0 {
        return Err(Error::Argument(format!("p = {p} < 1")));
    }
    if u.is_zero() {
        return Ok(0.0);
    }
    let q = Quadrature::for_fields(&[u], spec)?;
    Ok(q.sum(|x| u.value(x).abs().powf(p)))
}

pub fn lp_norm(u: &Field, p: f64, spec: &QuadratureSpec) -> Result<f64> {
    Ok(lp_power(u, p, spec)?.powf(1.0 / p))
}

/// `∫ (⟨du, dv⟩ + u v) dμ`.
pub fn h12_inner(u: &Field, v: &Field, spec: &QuadratureSpec) -> Result<f64> {
    inner_parts(u, v, spec).map(|(g, l)| g + l)
}

/// `(∫ ⟨du, dv⟩ dμ, ∫ u v dμ)`.
pub fn inner_parts(u: &Field, v: &Field, spec: &QuadratureSpec) -> Result<(f64, f64)> {
    if u.is_zero() || v.is_zero() {
        return Ok((0.0, 0.0));
    }
    let m = u.model();
    let q = Quadrature::for_fields(&[u, v], spec)?;
    let vals: Vec<(f64, f64)> = q
        .nodes
        .par_iter()
        .map(|n| {
            let (a, ga) = u.value_grad(&n.point);
            let (b, gb) = v.value_grad(&n.point);
            (n.weight * m.inner(&ga, &gb), n.weight * a * b)
        })
        .collect();
    let g: Vec<f64> = vals.iter().map(|v| v.0).collect();
    let l: Vec<f64> = vals.iter().map(|v| v.1).collect();
    Ok((pairwise_sum(&g), pairwise_sum(&l)))
}

/// Squared energy `∫ |du|² dμ`.
pub fn grad_seminorm(u: &Field, spec: &QuadratureSpec) -> Result<f64> {
    if u.is_zero() {
        return Ok(0.0);
    }
    let m = u.model();
    let q = Quadrature::for_fields(&[u], spec)?;
    Ok(q.sum(|x| {
        let (_, g) = u.value_grad(x);
        m.inner(&g, &g)
    }))
}

/// Uniform grid on `[-radius, radius]^N` with `points` samples per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefGrid {
    pub radius: f64,
    pub points: usize,
}

impl Default for RefGrid {
    fn default() -> Self {
        RefGrid {
            radius: 8.0,
            points: 33,
        }
    }
}

impl RefGrid {
    pub fn spacing(&self) -> f64 {
        2.0 * self.radius / (self.points - 1) as f64
    }

    /// Grid points in lexicographic order, last axis fastest.
    pub fn coords(&self, dim: usize) -> Vec<Vec<f64>> {
        let h = self.spacing();
        let total = self.points.pow(dim as u32);
        (0..total)
            .map(|mut i| {
                let mut c = vec![0.0; dim];
                for a in (0..dim).rev() {
                    c[a] = -self.radius + (i % self.points) as f64 * h;
                    i /= self.points;
                }
                c
            })
            .collect()
    }
}

/// Samples of `ξ ↦ 2^{-j(N-2)/2} u(e_y(2^{-j} ξ))` on the grid.
pub fn rescaled_pullback(u: &Field, y: &Point, j: i32, grid: &RefGrid) -> Result<Vec<f64>> {
    let m = u.model();
    m.check_point(y)?;
    let t = 2f64.powi(-j);
    let corner = grid.radius * (m.dim as f64).sqrt() * t;
    if grid.radius * t >= m.working_injectivity_radius() || corner >= m.injectivity_radius() {
        return Err(Error::Chart(format!(
            "grid radius {} at level {j} leaves the chart",
            grid.radius
        )));
    }
    let amp = t.powf((m.dim as f64 - 2.0) / 2.0);
    let chart = m.chart_at(y);
    let coords = grid.coords(m.dim);
    Ok(coords
        .par_iter()
        .map(|c| {
            let xi: Vec<f64> = c.iter().map(|a| a * t).collect();
            chart.exp(&xi).map(|p| amp * u.value(&p)).unwrap_or(0.0)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(6);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((s - 2.0 / 11.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn partition_sums_to_one_on_hints() {
        let m = ManifoldModel::hyperbolic(3).unwrap();
        let hints = vec![
            SupportBall {
                center: m.origin(),
                radius: 1.6,
            },
            SupportBall {
                center: m.point_from_origin(&[0.3, 0.0, 0.0]).unwrap(),
                radius: 0.01,
            },
            SupportBall {
                center: m.point_from_origin(&[0.31, 0.0, 0.0]).unwrap(),
                radius: 0.02,
            },
        ];
        let p = Partition::new(&m, &hints).unwrap();
        for xi in [
            [0.0, 0.0, 0.0],
            [0.3, 0.0, 0.0],
            [0.315, 0.01, 0.0],
            [1.2, -0.5, 0.3],
            [0.33, 0.0, 0.0],
        ] {
            let x = m.point_from_origin(&xi).unwrap();
            let s: f64 = p.weights_at(&x).iter().sum();
            assert!((s - 1.0).abs() < 1e-10, "{s} at {xi:?}");
        }
    }

    #[test]
    fn volume_of_ball() {
        // ∫ ψ over a euclidean hint with ψ = 1 on B(0, 1) and the partition
        // reducing to that single cutoff: compare with the radial integral
        let m = ManifoldModel::euclidean(3).unwrap();
        let hints = vec![SupportBall {
            center: m.origin(),
            radius: 1.0,
        }];
        let q = Quadrature::build(&m, &hints, &QuadratureSpec::with_order(10)).unwrap();
        let s = q.sum(|_| 1.0);
        let cut = Cutoff { r: 2.0 };
        let (gx, gw) = gauss_legendre(40);
        let mut radial = 0.0;
        for (a, b) in [(0.0, 1.0), (1.0, 2.0)] {
            for (x, w) in gx.iter().zip(&gw) {
                let r = 0.5 * (a + b) + 0.5 * (b - a) * x;
                radial += 0.5 * (b - a) * w * 4.0 * std::f64::consts::PI * r * r * cut.radial(r);
            }
        }
        assert!((s - radial).abs() < 1e-4 * radial, "{s} vs {radial}");
    }

    #[test]
    fn ref_grid_layout() {
        let g = RefGrid {
            radius: 1.0,
            points: 3,
        };
        let c = g.coords(2);
        assert_eq!(c.len(), 9);
        assert_eq!(c[1], vec![-1.0, 0.0]);
        assert_eq!(c[3], vec![0.0, -1.0]);
    }
}
