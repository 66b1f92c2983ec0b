//! Scalar fields with analytic values and gradients, and their sequences.

pub mod quadrature;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bubbles::cutoff::Cutoff;
use crate::bubbles::profile::Profile;
use crate::error::{Error, Result};
use crate::geometry::{norm, Chart, Isometry, ManifoldModel, ModelKind, Point};

pub use quadrature::{
    grad_seminorm, h12_inner, inner_parts, lp_norm, lp_power, rescaled_pullback, Quadrature,
    QuadratureSpec, RefGrid,
};

/// Geodesic ball outside of which a field vanishes (or which marks finer
/// structure inside a coarser hint).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportBall {
    pub center: Point,
    pub radius: f64,
}

/// `weight χ_r(ξ) profile(ξ / t)` with `ξ = e_c^{-1}(x)`.
#[derive(Clone)]
pub struct Scaled {
    pub chart: Chart,
    pub t: f64,
    pub weight: f64,
    pub cutoff: Option<Cutoff>,
    pub profile: Arc<Field>,
    reach: f64,
}

/// Rescaled pullback `χ_R(η) t^{(N-2)/2} source(e_y(t η))`, `t = 2^{-level}`,
/// living on `R^N`.
#[derive(Clone)]
pub struct Pullback {
    pub chart: Chart,
    pub level: i32,
    pub window: Cutoff,
    pub source: Arc<Field>,
}

/// `χ_radius(e_c^{-1}(x)) base(x)`.
#[derive(Clone)]
pub struct Windowed {
    pub chart: Chart,
    pub window: Cutoff,
    pub base: Arc<Field>,
}

#[derive(Clone)]
pub enum Term {
    /// Library profile, evaluated on Euclidean coordinates.
    Analytic(Profile),
    Scaled(Scaled),
    Pullback(Pullback),
    /// `base ∘ iso`.
    Shifted {
        base: Arc<Field>,
        iso: Isometry,
    },
    Windowed(Windowed),
    Sampled(Sampled),
}

/// Samples on the chart cube `[-H, H]^N` with `points` nodes per axis,
/// interpolated by tensor Catmull-Rom splines; zero outside the cube.
#[derive(Clone)]
pub struct Sampled {
    pub chart: Chart,
    pub half_width: f64,
    pub points: usize,
    /// Axis 0 varies fastest.
    pub values: Arc<Vec<f64>>,
    reach: f64,
}

/// Node `i` of the cube grid `[-H, H]^N` with `points` nodes per axis, axis 0 fastest.
pub fn cube_node(dim: usize, half_width: f64, points: usize, mut i: usize) -> Vec<f64> {
    let h = 2.0 * half_width / (points - 1) as f64;
    (0..dim)
        .map(|_| {
            let c = i % points;
            i /= points;
            -half_width + c as f64 * h
        })
        .collect()
}

fn catmull_rom(s: f64) -> ([f64; 4], [f64; 4]) {
    let (s2, s3) = (s * s, s * s * s);
    (
        [
            (-s + 2.0 * s2 - s3) / 2.0,
            (2.0 - 5.0 * s2 + 3.0 * s3) / 2.0,
            (s + 4.0 * s2 - 3.0 * s3) / 2.0,
            (s3 - s2) / 2.0,
        ],
        [
            (-1.0 + 4.0 * s - 3.0 * s2) / 2.0,
            (-10.0 * s + 9.0 * s2) / 2.0,
            (1.0 + 8.0 * s - 9.0 * s2) / 2.0,
            (3.0 * s2 - 2.0 * s) / 2.0,
        ],
    )
}

/// Catmull-Rom weights `(node index, weight)` at `ξ` on the cube grid, or `None` outside the cube.
pub fn cube_stencil(
    dim: usize,
    half_width: f64,
    points: usize,
    xi: &[f64],
) -> Option<Vec<(usize, f64)>> {
    let h = 2.0 * half_width / (points - 1) as f64;
    let last = points as i64 - 1;
    let mut base = vec![0i64; dim];
    let mut w = Vec::with_capacity(dim);
    for a in 0..dim {
        let u = (xi[a] + half_width) / h;
        if !(u >= 0.0 && u <= last as f64) {
            return None;
        }
        let i = (u.floor() as i64).min(last - 1);
        base[a] = i;
        w.push(catmull_rom(u - i as f64).0);
    }
    let mut out = Vec::with_capacity(4usize.pow(dim as u32));
    'combo: for mut o in 0..4usize.pow(dim as u32) {
        let (mut idx, mut stride, mut prod) = (0usize, 1usize, 1.0);
        for a in 0..dim {
            let d = o % 4;
            o /= 4;
            let c = base[a] - 1 + d as i64;
            if c < 0 || c > last {
                continue 'combo;
            }
            idx += c as usize * stride;
            stride *= points;
            prod *= w[a][d];
        }
        out.push((idx, prod));
    }
    Some(out)
}

impl Sampled {
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.points - 1) as f64
    }

    /// Chart coordinates of node `i`.
    pub fn node(&self, i: usize) -> Vec<f64> {
        cube_node(self.chart.model.dim, self.half_width, self.points, i)
    }

    /// Interpolated value and chart gradient.
    pub fn interpolate(&self, xi: &[f64], grad: bool) -> (f64, Vec<f64>) {
        let n = xi.len();
        let h = self.spacing();
        let last = self.points as i64 - 1;
        let mut base = vec![0i64; n];
        let mut w = Vec::with_capacity(n);
        for a in 0..n {
            let u = (xi[a] + self.half_width) / h;
            if !(u >= 0.0 && u <= last as f64) {
                return (0.0, vec![0.0; n]);
            }
            let i = (u.floor() as i64).min(last - 1);
            base[a] = i;
            w.push(catmull_rom(u - i as f64));
        }
        let mut v = 0.0;
        let mut g = vec![0.0; n];
        for mut o in 0..4usize.pow(n as u32) {
            let mut idx = 0usize;
            let mut stride = 1usize;
            let mut prod = 1.0;
            let mut offs = [0usize; 8];
            let mut inside = true;
            for a in 0..n {
                let d = o % 4;
                o /= 4;
                let c = base[a] - 1 + d as i64;
                if c < 0 || c > last {
                    inside = false;
                    break;
                }
                idx += c as usize * stride;
                stride *= self.points;
                prod *= w[a].0[d];
                if a < 8 {
                    offs[a] = d;
                }
            }
            if !inside {
                continue;
            }
            let f = self.values[idx];
            if f == 0.0 {
                continue;
            }
            v += prod * f;
            if grad {
                for (a, ga) in g.iter_mut().enumerate() {
                    let mut p = w[a].1[offs[a]] / h;
                    for (b, wb) in w.iter().enumerate() {
                        if b != a {
                            p *= wb.0[offs[b]];
                        }
                    }
                    *ga += p * f;
                }
            }
        }
        (v, g)
    }
}

#[derive(Clone)]
pub struct Field {
    model: ManifoldModel,
    terms: Vec<(f64, Term)>,
    hints: Vec<SupportBall>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("model", &self.model.kind)
            .field("terms", &self.terms.len())
            .field("hints", &self.hints.len())
            .finish()
    }
}

fn level_scale(level: i32) -> f64 {
    2f64.powi(-level)
}

/// Adds a hint unless a near-identical ball is present; near-identical balls
/// (radii within 5%, centers within 5% of the radius) collapse to the larger.
fn merge_hint(model: &ManifoldModel, out: &mut Vec<SupportBall>, h: SupportBall) {
    if !(h.radius > 0.0) {
        return;
    }
    for o in out.iter_mut() {
        let (lo, hi) = (o.radius.min(h.radius), o.radius.max(h.radius));
        if hi <= 1.05 * lo && model.distance(&o.center, &h.center) <= 0.05 * lo {
            o.radius = hi + model.distance(&o.center, &h.center);
            return;
        }
    }
    out.push(h);
}

impl Field {
    pub fn zero(model: &ManifoldModel) -> Self {
        Field {
            model: model.clone(),
            terms: Vec::new(),
            hints: Vec::new(),
        }
    }

    pub fn new(model: &ManifoldModel, terms: Vec<(f64, Term)>) -> Self {
        let mut hints = Vec::new();
        for (c, t) in &terms {
            if *c != 0.0 {
                for h in term_hints(model, t) {
                    merge_hint(model, &mut hints, h);
                }
            }
        }
        let terms = terms.into_iter().filter(|(c, _)| *c != 0.0).collect();
        Field {
            model: model.clone(),
            terms,
            hints,
        }
    }

    pub fn model(&self) -> &ManifoldModel {
        &self.model
    }

    pub fn terms(&self) -> &[(f64, Term)] {
        &self.terms
    }

    pub fn support(&self) -> &[SupportBall] {
        &self.hints
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// A library profile as a field on `R^N`.
    pub fn profile(dim: usize, p: Profile) -> Result<Self> {
        let m = ManifoldModel::euclidean(dim)?;
        Ok(Field::new(&m, vec![(1.0, Term::Analytic(p))]))
    }

    /// `self + coef * other`.
    pub fn plus(&self, coef: f64, other: &Field) -> Field {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().map(|(c, t)| (c * coef, t.clone())));
        Field::new(&self.model, terms)
    }

    pub fn with_term(&self, coef: f64, term: Term) -> Field {
        let mut terms = self.terms.clone();
        terms.push((coef, term));
        Field::new(&self.model, terms)
    }

    pub fn scaled(
        model: &ManifoldModel,
        center: &Point,
        t: f64,
        weight: f64,
        cutoff: Option<Cutoff>,
        profile: Arc<Field>,
    ) -> Result<Term> {
        if !(t > 0.0) {
            return Err(Error::Argument(format!("scale must be positive, got {t}")));
        }
        model.check_point(center)?;
        let outer = profile
            .support()
            .iter()
            .map(|h| norm(&h.center.0) + h.radius)
            .fold(0.0, f64::max);
        let mut reach = t * outer;
        if let Some(c) = cutoff {
            reach = reach.min(c.r);
        }
        if reach >= model.injectivity_radius() {
            return Err(Error::Chart(format!(
                "support radius {reach} exceeds the normal chart"
            )));
        }
        Ok(Term::Scaled(Scaled {
            chart: model.chart_at(center),
            t,
            weight,
            cutoff,
            profile,
            reach,
        }))
    }

    /// Interpolated samples on a chart cube at `center`; see [`Sampled`].
    pub fn sampled(
        model: &ManifoldModel,
        center: &Point,
        half_width: f64,
        points: usize,
        values: Vec<f64>,
    ) -> Result<Term> {
        if points < 4 || values.len() != points.pow(model.dim as u32) || model.dim > 8 {
            return Err(Error::Argument(format!(
                "{} samples do not form a grid of {points} points per axis",
                values.len()
            )));
        }
        if !(half_width > 0.0) {
            return Err(Error::Argument(format!(
                "half width must be positive, got {half_width}"
            )));
        }
        model.check_point(center)?;
        let mut s = Sampled {
            chart: model.chart_at(center),
            half_width,
            points,
            values: Arc::new(values),
            reach: 0.0,
        };
        let h = s.spacing();
        let far = (0..s.values.len())
            .filter(|&i| s.values[i] != 0.0)
            .map(|i| norm(&s.node(i)))
            .fold(0.0, f64::max);
        s.reach =
            (far + 2.0 * h * (model.dim as f64).sqrt()).min(half_width * (model.dim as f64).sqrt());
        if s.reach >= model.injectivity_radius() {
            return Err(Error::Chart(format!(
                "sample cube of reach {} exceeds the normal chart",
                s.reach
            )));
        }
        Ok(Term::Sampled(s))
    }

    /// Rescaled pullback of `source` at `(y, level)` cut to `|η| < window`.
    pub fn pullback(source: Arc<Field>, y: &Point, level: i32, window: f64) -> Result<Field> {
        let model = source.model().clone();
        let t = level_scale(level);
        if window * t >= model.working_injectivity_radius()
            || window * t >= model.injectivity_radius()
        {
            return Err(Error::Chart(format!(
                "window {window} at level {level} exceeds the chart (r(M) = {})",
                model.working_injectivity_radius()
            )));
        }
        model.check_point(y)?;
        let eu = ManifoldModel::euclidean(model.dim)?;
        let term = Term::Pullback(Pullback {
            chart: model.chart_at(y),
            level,
            window: Cutoff { r: window },
            source,
        });
        Ok(Field::new(&eu, vec![(1.0, term)]))
    }

    pub fn value(&self, x: &Point) -> f64 {
        self.terms
            .iter()
            .filter_map(|(c, t)| eval_term(t, x, false).map(|(v, _)| c * v))
            .sum()
    }

    /// Value and gradient as an ambient tangent vector at `x`.
    pub fn value_grad(&self, x: &Point) -> (f64, Vec<f64>) {
        let mut v = 0.0;
        let mut g = vec![0.0; self.model.ambient_dim()];
        for (c, t) in &self.terms {
            if let Some((tv, tg)) = eval_term(t, x, true) {
                v += c * tv;
                g.iter_mut().zip(&tg).for_each(|(a, b)| *a += c * b);
            }
        }
        (v, g)
    }
}

fn eval_term(term: &Term, x: &Point, grad: bool) -> Option<(f64, Vec<f64>)> {
    match term {
        Term::Analytic(p) => {
            let (v, g) = if grad {
                p.value_grad(&x.0)
            } else {
                (p.value(&x.0), Vec::new())
            };
            if v == 0.0 && g.iter().all(|a| *a == 0.0) {
                None
            } else {
                Some((v, g))
            }
        }
        Term::Scaled(s) => {
            let m = &s.chart.model;
            if m.distance(&s.chart.center, x) >= s.reach {
                return None;
            }
            let xi = s.chart.log(x).ok()?;
            let (c, gc) = match s.cutoff {
                Some(cut) => cut.value_grad(&xi),
                None => (1.0, vec![0.0; xi.len()]),
            };
            if c == 0.0 {
                return None;
            }
            let eta = Point(xi.iter().map(|a| a / s.t).collect());
            if !grad {
                return Some((s.weight * c * s.profile.value(&eta), Vec::new()));
            }
            let (p, gp) = s.profile.value_grad(&eta);
            let gxi: Vec<f64> = gc
                .iter()
                .zip(&gp)
                .map(|(a, b)| s.weight * (a * p + c * b / s.t))
                .collect();
            Some((s.weight * c * p, s.chart.push_gradient(&xi, x, &gxi)))
        }
        Term::Pullback(pb) => {
            let (c, gc) = pb.window.value_grad(&x.0);
            if c == 0.0 {
                return None;
            }
            let m = &pb.chart.model;
            let t = level_scale(pb.level);
            let amp = t.powf((m.dim as f64 - 2.0) / 2.0);
            let xi: Vec<f64> = x.0.iter().map(|e| e * t).collect();
            let p = pb.chart.exp(&xi).ok()?;
            if !grad {
                return Some((c * amp * pb.source.value(&p), Vec::new()));
            }
            let (q, gq) = pb.source.value_grad(&p);
            let back = pb.chart.pullback_gradient(&xi, &p, &gq);
            let g = gc
                .iter()
                .zip(&back)
                .map(|(a, b)| amp * (a * q + c * t * b))
                .collect();
            Some((c * amp * q, g))
        }
        Term::Shifted { base, iso } => {
            let y = iso.apply(x);
            if !grad {
                return Some((base.value(&y), Vec::new()));
            }
            let (v, g) = base.value_grad(&y);
            Some((v, iso.pull_vector(&g)))
        }
        Term::Windowed(w) => {
            let m = &w.chart.model;
            if m.distance(&w.chart.center, x) >= w.window.r {
                return None;
            }
            let xi = w.chart.log(x).ok()?;
            let (c, gc) = w.window.value_grad(&xi);
            if c == 0.0 {
                return None;
            }
            if !grad {
                return Some((c * w.base.value(x), Vec::new()));
            }
            let (b, gb) = w.base.value_grad(x);
            let gw: Vec<f64> = gc.iter().map(|a| a * b).collect();
            let push = w.chart.push_gradient(&xi, x, &gw);
            Some((
                c * b,
                gb.iter().zip(&push).map(|(a, p)| c * a + p).collect(),
            ))
        }
        Term::Sampled(s) => {
            if s.chart.model.distance(&s.chart.center, x) >= s.reach {
                return None;
            }
            let xi = s.chart.log(x).ok()?;
            let (v, g) = s.interpolate(&xi, grad);
            if !grad {
                return Some((v, Vec::new()));
            }
            Some((v, s.chart.push_gradient(&xi, x, &g)))
        }
    }
}

/// Lipschitz constant of `e_y` on `|ξ| <= s`.
fn exp_stretch(m: &ManifoldModel, s: f64) -> f64 {
    match m.kind {
        ModelKind::Hyperbolic => m.sn_ratio(s),
        _ => 1.0,
    }
}

/// Lipschitz constant of `e_y^{-1}` on `B(y, s)`.
fn log_stretch(m: &ManifoldModel, s: f64) -> f64 {
    match m.kind {
        ModelKind::Sphere => 1.0 / m.sn_ratio(s.min(0.999 * m.injectivity_radius())),
        _ => 1.0,
    }
}

fn term_hints(model: &ManifoldModel, term: &Term) -> Vec<SupportBall> {
    let mut out = Vec::new();
    match term {
        Term::Analytic(p) => {
            let (c, r) = p.support_ball(model.dim);
            out.push(SupportBall {
                center: Point(c),
                radius: r,
            });
        }
        Term::Scaled(s) => {
            out.push(SupportBall {
                center: s.chart.center.clone(),
                radius: s.reach,
            });
            for h in s.profile.support() {
                let xc: Vec<f64> = h.center.0.iter().map(|a| a * s.t).collect();
                let dc = norm(&xc);
                let r = s.t * h.radius;
                if dc - r >= s.reach {
                    continue;
                }
                let rm = r * exp_stretch(model, dc + r);
                if rm >= 0.999 * s.reach {
                    continue;
                }
                if let Ok(c) = s.chart.exp(&xc) {
                    out.push(SupportBall {
                        center: c,
                        radius: rm,
                    });
                }
            }
        }
        Term::Pullback(pb) => {
            let src = &pb.chart.model;
            let t = level_scale(pb.level);
            let rw = pb.window.r;
            out.push(SupportBall {
                center: Point(vec![0.0; model.dim]),
                radius: rw,
            });
            for h in pb.source.support() {
                let d = src.distance(&pb.chart.center, &h.center);
                if d - h.radius >= rw * t * exp_stretch(src, rw * t) {
                    continue;
                }
                let Ok(eta) = pb.chart.log(&h.center) else {
                    continue;
                };
                let r = h.radius * log_stretch(src, d + h.radius) / t;
                let ec: Vec<f64> = eta.iter().map(|a| a / t).collect();
                if r >= 0.999 * rw || norm(&ec) - r >= rw {
                    continue;
                }
                out.push(SupportBall {
                    center: Point(ec),
                    radius: r,
                });
            }
        }
        Term::Shifted { base, iso } => {
            for h in base.support() {
                out.push(SupportBall {
                    center: iso.apply_inverse(&h.center),
                    radius: h.radius,
                });
            }
        }
        Term::Windowed(w) => {
            let rw = w.window.r;
            out.push(SupportBall {
                center: w.chart.center.clone(),
                radius: rw,
            });
            for h in w.base.support() {
                if h.radius < 0.999 * rw
                    && model.distance(&w.chart.center, &h.center) - h.radius < rw
                {
                    out.push(h.clone());
                }
            }
        }
        Term::Sampled(s) => out.push(SupportBall {
            center: s.chart.center.clone(),
            radius: s.reach,
        }),
    }
    out
}

/// A `k`-indexed family of fields.
#[derive(Clone)]
pub struct FieldSequence {
    pub k_range: (i32, i32),
    generator: Arc<dyn Fn(i32) -> Result<Field> + Send + Sync>,
}

impl fmt::Debug for FieldSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldSequence")
            .field("k_range", &self.k_range)
            .finish()
    }
}

impl FieldSequence {
    pub fn new(
        k_range: (i32, i32),
        generator: impl Fn(i32) -> Result<Field> + Send + Sync + 'static,
    ) -> Self {
        FieldSequence {
            k_range,
            generator: Arc::new(generator),
        }
    }

    pub fn at(&self, k: i32) -> Result<Field> {
        if k < self.k_range.0 || k > self.k_range.1 {
            return Err(Error::Argument(format!(
                "k = {k} outside {:?}",
                self.k_range
            )));
        }
        (self.generator)(k)
    }

    /// Pointwise `self - other`.
    pub fn minus(&self, other: &FieldSequence) -> FieldSequence {
        let (a, b) = (self.clone(), other.clone());
        let lo = a.k_range.0.max(b.k_range.0);
        let hi = a.k_range.1.min(b.k_range.1);
        FieldSequence::new((lo, hi), move |k| Ok(a.at(k)?.plus(-1.0, &b.at(k)?)))
    }
}

/// Largest mismatch between the gradient and central differences along the
/// frame directions at `x`.
pub fn gradient_check(u: &Field, x: &Point, h: f64) -> f64 {
    let m = u.model();
    let chart = m.chart_at(x);
    let (_, g) = u.value_grad(x);
    let gc = chart.from_tangent(&g);
    let mut worst: f64 = 0.0;
    for a in 0..m.dim {
        let mut e = vec![0.0; m.dim];
        e[a] = h;
        let Ok(p) = chart.exp(&e) else { continue };
        e[a] = -h;
        let Ok(q) = chart.exp(&e) else { continue };
        let fd = (u.value(&p) - u.value(&q)) / (2.0 * h);
        worst = worst.max((fd - gc[a]).abs());
    }
    worst
}
