//! Constant-curvature manifold models of bounded geometry.
//!
//! Three models are provided: Euclidean space, the hyperbolic space in
//! hyperboloid coordinates, and the round sphere. Points are stored in
//! ambient coordinates (`N` for Euclidean, `N + 1` otherwise) and tangent
//! vectors are ambient vectors orthogonal to the point in the model's ambient
//! form (Minkowski for the hyperboloid).
//!
//! Normal charts `e_x = exp_x ∘ i_x` use the frame convention of
//! [`FrameConvention::RadialTransport`]: the standard basis at the model
//! basepoint is parallel-transported along the radial geodesic to `x`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Working injectivity radius declared for the non-compact models.
pub const NONCOMPACT_WORKING_RADIUS: f64 = 16.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Euclidean,
    Hyperbolic,
    Sphere,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameConvention {
    /// Parallel transport of the basepoint frame along the radial geodesic.
    RadialTransport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldModel {
    pub kind: ModelKind,
    pub dim: usize,
    pub curvature: f64,
    pub chart_radius: f64,
    pub frame_convention: FrameConvention,
}

/// Metric components in a normal chart.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricAtPoint {
    /// Row-major `N x N`.
    pub g: Vec<f64>,
    pub sqrt_det: f64,
}

impl MetricAtPoint {
    pub fn component(&self, a: usize, b: usize) -> f64 {
        let n = (self.g.len() as f64).sqrt() as usize;
        self.g[a * n + b]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl ManifoldModel {
    pub fn euclidean(dim: usize) -> Result<Self> {
        Self::new(ModelKind::Euclidean, dim, 0.0, 1.0)
    }

    pub fn hyperbolic(dim: usize) -> Result<Self> {
        Self::new(ModelKind::Hyperbolic, dim, -1.0, 1.0)
    }

    pub fn sphere(dim: usize) -> Result<Self> {
        Self::new(ModelKind::Sphere, dim, 1.0, 0.3)
    }

    pub fn new(kind: ModelKind, dim: usize, curvature: f64, chart_radius: f64) -> Result<Self> {
        if dim < 3 {
            return Err(Error::Argument(format!(
                "dimension must be >= 3, got {dim}"
            )));
        }
        match kind {
            ModelKind::Euclidean if curvature != 0.0 => {
                return Err(Error::Argument("euclidean model has curvature 0".into()))
            }
            ModelKind::Hyperbolic if !(curvature < 0.0) => {
                return Err(Error::Argument(
                    "hyperbolic curvature must be negative".into(),
                ))
            }
            ModelKind::Sphere if !(curvature > 0.0) => {
                return Err(Error::Argument("sphere curvature must be positive".into()))
            }
            _ => {}
        }
        let m = ManifoldModel {
            kind,
            dim,
            curvature,
            chart_radius,
            frame_convention: FrameConvention::RadialTransport,
        };
        if !(chart_radius > 0.0 && chart_radius < m.working_injectivity_radius() / 8.0) {
            return Err(Error::Argument(format!(
                "chart radius {chart_radius} must lie in (0, r(M)/8) = (0, {})",
                m.working_injectivity_radius() / 8.0
            )));
        }
        Ok(m)
    }

    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            ModelKind::Euclidean => self.dim,
            _ => self.dim + 1,
        }
    }

    /// Radius of curvature `1/sqrt|K|`; infinite for the Euclidean model.
    pub fn radius(&self) -> f64 {
        match self.kind {
            ModelKind::Euclidean => f64::INFINITY,
            _ => 1.0 / self.curvature.abs().sqrt(),
        }
    }

    pub fn injectivity_radius(&self) -> f64 {
        match self.kind {
            ModelKind::Sphere => std::f64::consts::PI * self.radius(),
            _ => f64::INFINITY,
        }
    }

    /// Injectivity radius with the finite surrogate used for the non-compact models.
    pub fn working_injectivity_radius(&self) -> f64 {
        match self.kind {
            ModelKind::Sphere => self.injectivity_radius(),
            _ => NONCOMPACT_WORKING_RADIUS,
        }
    }

    pub fn is_homogeneous_noncompact(&self) -> bool {
        self.kind != ModelKind::Sphere
    }

    pub fn origin(&self) -> Point {
        let mut c = vec![0.0; self.ambient_dim()];
        if self.kind != ModelKind::Euclidean {
            c[0] = self.radius();
        }
        Point(c)
    }

    /// Ambient bilinear form restricted to tangent vectors.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            ModelKind::Hyperbolic => dot(&a[1..], &b[1..]) - a[0] * b[0],
            _ => dot(a, b),
        }
    }

    pub fn tangent_norm(&self, v: &[f64]) -> f64 {
        self.inner(v, v).max(0.0).sqrt()
    }

    /// `sn_K(d)`: length scale of Jacobi fields orthogonal to a geodesic.
    pub fn sn(&self, d: f64) -> f64 {
        match self.kind {
            ModelKind::Euclidean => d,
            ModelKind::Hyperbolic => self.radius() * (d / self.radius()).sinh(),
            ModelKind::Sphere => self.radius() * (d / self.radius()).sin(),
        }
    }

    /// `sn_K(d) / d`, continuous at 0.
    pub fn sn_ratio(&self, d: f64) -> f64 {
        if self.kind == ModelKind::Euclidean {
            return 1.0;
        }
        let t = d / self.radius();
        if t.abs() < 1e-4 {
            let t2 = t * t;
            match self.kind {
                ModelKind::Hyperbolic => 1.0 + t2 / 6.0 + t2 * t2 / 120.0,
                _ => 1.0 - t2 / 6.0 + t2 * t2 / 120.0,
            }
        } else {
            self.sn(d) / d
        }
    }

    /// Checks the defining constraint of the model to tolerance `1e-12` (relative).
    pub fn check_point(&self, x: &Point) -> Result<()> {
        if x.0.len() != self.ambient_dim() {
            return Err(Error::Argument(format!(
                "point has {} coordinates, expected {}",
                x.0.len(),
                self.ambient_dim()
            )));
        }
        let r2 = match self.kind {
            ModelKind::Euclidean => return Ok(()),
            _ => self.radius().powi(2),
        };
        let q = match self.kind {
            ModelKind::Hyperbolic => self.inner(&x.0, &x.0) + r2,
            _ => dot(&x.0, &x.0) - r2,
        };
        let scale = r2.max(dot(&x.0, &x.0));
        if q.abs() > 1e-12 * scale || (self.kind == ModelKind::Hyperbolic && x.0[0] <= 0.0) {
            return Err(Error::Domain(format!(
                "point violates model constraint by {q:e}"
            )));
        }
        Ok(())
    }

    /// Projects ambient coordinates back onto the model.
    pub fn project(&self, mut c: Vec<f64>) -> Point {
        match self.kind {
            ModelKind::Euclidean => {}
            ModelKind::Hyperbolic => {
                let s = dot(&c[1..], &c[1..]);
                c[0] = (self.radius().powi(2) + s).sqrt();
            }
            ModelKind::Sphere => {
                let n = norm(&c);
                let r = self.radius();
                c.iter_mut().for_each(|v| *v *= r / n);
            }
        }
        Point(c)
    }

    /// Point given in normal coordinates at the model origin.
    pub fn point_from_origin(&self, xi: &[f64]) -> Result<Point> {
        self.chart_at(&self.origin()).exp(xi)
    }

    fn chord2(&self, x: &[f64], y: &[f64]) -> f64 {
        let s: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        match self.kind {
            ModelKind::Hyperbolic => {
                let d0 = x[0] - y[0];
                (s - 2.0 * d0 * d0).max(0.0)
            }
            _ => s,
        }
    }

    /// Squared ambient chord of two points at distance `d`.
    fn chord2_of(&self, d: f64) -> f64 {
        let c = match self.kind {
            ModelKind::Euclidean => d,
            ModelKind::Hyperbolic => 2.0 * self.radius() * (d / (2.0 * self.radius())).sinh(),
            ModelKind::Sphere => {
                let r = self.radius();
                if d >= std::f64::consts::PI * r {
                    return f64::INFINITY;
                }
                2.0 * r * (d / (2.0 * r)).sin()
            }
        };
        c * c
    }

    /// `d(x, y) < r` without inverse trigonometry.
    pub fn within(&self, x: &Point, y: &Point, r: f64) -> bool {
        self.chord2(&x.0, &y.0) < self.chord2_of(r)
    }

    pub fn distance(&self, x: &Point, y: &Point) -> f64 {
        let c2 = self.chord2(&x.0, &y.0);
        self.distance_from_chord2(c2)
    }

    fn distance_from_chord2(&self, c2: f64) -> f64 {
        let c = c2.sqrt();
        match self.kind {
            ModelKind::Euclidean => c,
            ModelKind::Hyperbolic => {
                let r = self.radius();
                2.0 * r * (c / (2.0 * r)).asinh()
            }
            ModelKind::Sphere => {
                let r = self.radius();
                2.0 * r * (c / (2.0 * r)).min(1.0).asin()
            }
        }
    }

    /// Parallel transport of `v ∈ T_from M` along the minimizing geodesic to `to`.
    pub fn parallel_transport(&self, from: &[f64], to: &[f64], v: &[f64]) -> Vec<f64> {
        match self.kind {
            ModelKind::Euclidean => v.to_vec(),
            ModelKind::Hyperbolic => {
                let r2 = self.radius().powi(2);
                let coef = self.inner(to, v) / (r2 - self.inner(from, to));
                v.iter()
                    .zip(from.iter().zip(to))
                    .map(|(vi, (a, b))| vi + coef * (a + b))
                    .collect()
            }
            ModelKind::Sphere => {
                let r2 = self.radius().powi(2);
                let den = r2 + dot(from, to);
                if den <= 1e-14 * r2 {
                    return v.to_vec();
                }
                let coef = dot(to, v) / den;
                v.iter()
                    .zip(from.iter().zip(to))
                    .map(|(vi, (a, b))| vi - coef * (a + b))
                    .collect()
            }
        }
    }

    /// Orthonormal frame `i_x(e_α)` at `x` under the radial-transport convention.
    pub fn frame(&self, x: &Point) -> Vec<Vec<f64>> {
        let n = self.dim;
        match self.kind {
            ModelKind::Euclidean => (0..n)
                .map(|a| {
                    let mut e = vec![0.0; n];
                    e[a] = 1.0;
                    e
                })
                .collect(),
            _ => {
                let o = self.origin();
                (0..n)
                    .map(|a| {
                        let mut e = vec![0.0; n + 1];
                        e[a + 1] = 1.0;
                        self.parallel_transport(&o.0, &x.0, &e)
                    })
                    .collect()
            }
        }
    }

    pub fn chart_at(&self, x: &Point) -> Chart {
        Chart {
            model: self.clone(),
            center: x.clone(),
            frame: self.frame(x),
        }
    }

    pub fn exp_map(&self, x: &Point, xi: &[f64]) -> Result<Point> {
        self.chart_at(x).exp(xi)
    }

    pub fn log_map(&self, x: &Point, y: &Point) -> Result<Vec<f64>> {
        self.chart_at(x).log(y)
    }

    /// Metric of the normal chart at any base point, evaluated at `ξ`.
    ///
    /// For constant curvature the radial direction has unit length and the
    /// orthogonal directions are scaled by `sn(|ξ|)/|ξ|`.
    pub fn metric_in_normal_coords(&self, xi: &[f64]) -> Result<MetricAtPoint> {
        let n = self.dim;
        let d = norm(xi);
        if d >= self.injectivity_radius() {
            return Err(Error::Domain(format!("|ξ| = {d} outside the normal chart")));
        }
        let s2 = self.sn_ratio(d).powi(2);
        let mut g = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                let delta = if a == b { 1.0 } else { 0.0 };
                let radial = if d > 0.0 {
                    xi[a] * xi[b] / (d * d)
                } else {
                    0.0
                };
                g[a * n + b] = radial + s2 * (delta - radial);
            }
        }
        Ok(MetricAtPoint {
            g,
            sqrt_det: self.sqrt_det(d),
        })
    }

    /// Volume density `√g` of a normal chart at radius `d`.
    pub fn sqrt_det(&self, d: f64) -> f64 {
        self.sn_ratio(d).powi(self.dim as i32 - 1)
    }

    /// Transition map `ψ_{yx} = e_y^{-1} ∘ e_x` on `Ω_a(x, y)`.
    pub fn transition_map(&self, x: &Point, y: &Point, xi: &[f64], a: f64) -> Result<Vec<f64>> {
        if norm(xi) >= a {
            return Err(Error::Domain(format!("|ξ| = {} outside Ω_{a}", norm(xi))));
        }
        let p = self.exp_map(x, xi)?;
        let eta = self.log_map(y, &p)?;
        if norm(&eta) >= a {
            return Err(Error::Domain("point outside the overlap Ω_a(x, y)".into()));
        }
        Ok(eta)
    }

    /// Axis transvection: translation in Euclidean space, a boost on the
    /// hyperboloid, a rotation on the sphere. Moves the origin a signed
    /// distance `t` along coordinate axis `axis`.
    pub fn translation(&self, axis: usize, t: f64) -> Isometry {
        let m = self.ambient_dim();
        let mut lin = identity(m);
        let mut shift = vec![0.0; m];
        match self.kind {
            ModelKind::Euclidean => shift[axis] = t,
            ModelKind::Hyperbolic => {
                let s = t / self.radius();
                let (ch, sh) = (s.cosh(), s.sinh());
                let a = axis + 1;
                lin[0] = ch;
                lin[a] = sh;
                lin[a * m] = sh;
                lin[a * m + a] = ch;
            }
            ModelKind::Sphere => {
                let s = t / self.radius();
                let (c, sn) = (s.cos(), s.sin());
                let a = axis + 1;
                lin[0] = c;
                lin[a] = -sn;
                lin[a * m] = sn;
                lin[a * m + a] = c;
            }
        }
        Isometry::from_parts(lin, shift)
    }

    /// Rotation by `angle` in the plane of frame axes `a`, `b` at the origin.
    pub fn rotation(&self, a: usize, b: usize, angle: f64) -> Isometry {
        let m = self.ambient_dim();
        let off = if self.kind == ModelKind::Euclidean {
            0
        } else {
            1
        };
        let (i, j) = (a + off, b + off);
        let mut lin = identity(m);
        let (c, s) = (angle.cos(), angle.sin());
        lin[i * m + i] = c;
        lin[i * m + j] = -s;
        lin[j * m + i] = s;
        lin[j * m + j] = c;
        Isometry::from_parts(lin, vec![0.0; m])
    }
}

fn identity(m: usize) -> Vec<f64> {
    let mut a = vec![0.0; m * m];
    for i in 0..m {
        a[i * m + i] = 1.0;
    }
    a
}

/// Affine ambient map `x ↦ A x + b` preserving the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Isometry {
    pub lin: Vec<f64>,
    pub inv: Vec<f64>,
    pub shift: Vec<f64>,
}

impl Isometry {
    pub fn identity(m: usize) -> Self {
        Self::from_parts(identity(m), vec![0.0; m])
    }

    fn from_parts(lin: Vec<f64>, shift: Vec<f64>) -> Self {
        let inv = invert(&lin, shift.len());
        Isometry { lin, inv, shift }
    }

    fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn apply(&self, x: &Point) -> Point {
        let m = self.dim();
        let mut out = self.shift.clone();
        for i in 0..m {
            out[i] += dot(&self.lin[i * m..(i + 1) * m], &x.0);
        }
        Point(out)
    }

    pub fn apply_inverse(&self, x: &Point) -> Point {
        let m = self.dim();
        let y: Vec<f64> = x.0.iter().zip(&self.shift).map(|(a, b)| a - b).collect();
        Point(
            (0..m)
                .map(|i| dot(&self.inv[i * m..(i + 1) * m], &y))
                .collect(),
        )
    }

    pub fn push_vector(&self, v: &[f64]) -> Vec<f64> {
        let m = self.dim();
        (0..m)
            .map(|i| dot(&self.lin[i * m..(i + 1) * m], v))
            .collect()
    }

    pub fn pull_vector(&self, v: &[f64]) -> Vec<f64> {
        let m = self.dim();
        (0..m)
            .map(|i| dot(&self.inv[i * m..(i + 1) * m], v))
            .collect()
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Isometry) -> Isometry {
        let m = self.dim();
        let mut lin = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                lin[i * m + j] = (0..m)
                    .map(|k| self.lin[i * m + k] * other.lin[k * m + j])
                    .sum();
            }
        }
        let mut shift = self.push_vector(&other.shift);
        shift.iter_mut().zip(&self.shift).for_each(|(a, b)| *a += b);
        Isometry::from_parts(lin, shift)
    }
}

/// Gauss-Jordan inverse; the matrices here are small and well conditioned.
fn invert(a: &[f64], m: usize) -> Vec<f64> {
    let mut work = a.to_vec();
    let mut inv = identity(m);
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&i, &j| work[i * m + col].abs().total_cmp(&work[j * m + col].abs()))
            .unwrap();
        if piv != col {
            for k in 0..m {
                work.swap(piv * m + k, col * m + k);
                inv.swap(piv * m + k, col * m + k);
            }
        }
        let p = work[col * m + col];
        for k in 0..m {
            work[col * m + k] /= p;
            inv[col * m + k] /= p;
        }
        for i in 0..m {
            if i != col {
                let f = work[i * m + col];
                if f != 0.0 {
                    for k in 0..m {
                        work[i * m + k] -= f * work[col * m + k];
                        inv[i * m + k] -= f * inv[col * m + k];
                    }
                }
            }
        }
    }
    inv
}

/// A normal chart `e_x` with its frame cached.
#[derive(Clone, Debug)]
pub struct Chart {
    pub model: ManifoldModel,
    pub center: Point,
    pub frame: Vec<Vec<f64>>,
}

impl Chart {
    pub fn to_tangent(&self, xi: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.model.ambient_dim()];
        for (c, e) in xi.iter().zip(&self.frame) {
            v.iter_mut().zip(e).for_each(|(vi, ei)| *vi += c * ei);
        }
        v
    }

    pub fn from_tangent(&self, v: &[f64]) -> Vec<f64> {
        self.frame.iter().map(|e| self.model.inner(v, e)).collect()
    }

    /// `e_x(ξ)`.
    pub fn exp(&self, xi: &[f64]) -> Result<Point> {
        let d = norm(xi);
        if d >= self.model.injectivity_radius() {
            return Err(Error::Domain(format!("|ξ| = {d} >= injectivity radius")));
        }
        let v = self.to_tangent(xi);
        Ok(self.exp_tangent(&v, d))
    }

    fn exp_tangent(&self, v: &[f64], d: f64) -> Point {
        let m = &self.model;
        let x = &self.center.0;
        let (cx, cv) = match m.kind {
            ModelKind::Euclidean => (1.0, 1.0),
            ModelKind::Hyperbolic => ((d / m.radius()).cosh(), m.sn_ratio(d)),
            ModelKind::Sphere => ((d / m.radius()).cos(), m.sn_ratio(d)),
        };
        let c: Vec<f64> = x.iter().zip(v).map(|(a, b)| cx * a + cv * b).collect();
        m.project(c)
    }

    /// Ambient log `exp_x^{-1}(y)` together with `d(x, y)`.
    pub fn log_tangent(&self, y: &Point) -> Result<(Vec<f64>, f64)> {
        let m = &self.model;
        let x = &self.center.0;
        let c2 = m.chord2(x, &y.0);
        let d = m.distance_from_chord2(c2);
        if m.kind == ModelKind::Sphere && d >= m.injectivity_radius() * (1.0 - 1e-12) {
            return Err(Error::Domain("point on the cut locus".into()));
        }
        let r2 = m.radius().powi(2);
        let corr = match m.kind {
            ModelKind::Euclidean => 0.0,
            ModelKind::Hyperbolic => -c2 / (2.0 * r2),
            ModelKind::Sphere => c2 / (2.0 * r2),
        };
        let scale = 1.0 / m.sn_ratio(d);
        let v =
            y.0.iter()
                .zip(x)
                .map(|(b, a)| scale * ((b - a) + corr * a))
                .collect();
        Ok((v, d))
    }

    /// `e_x^{-1}(y)` in frame coordinates.
    pub fn log(&self, y: &Point) -> Result<Vec<f64>> {
        let (v, _) = self.log_tangent(y)?;
        Ok(self.from_tangent(&v))
    }

    /// Coordinates `∂/∂ξ_α (f ∘ e_x)(ξ)` of a function whose gradient at
    /// `p = e_x(ξ)` is the tangent vector `grad`.
    pub fn pullback_gradient(&self, xi: &[f64], p: &Point, grad: &[f64]) -> Vec<f64> {
        let back = self.model.parallel_transport(&p.0, &self.center.0, grad);
        let t = self.from_tangent(&back);
        let d = norm(xi);
        if d == 0.0 {
            return t;
        }
        let sigma = self.model.sn_ratio(d);
        let tr = dot(&t, xi) / d;
        t.iter()
            .zip(xi)
            .map(|(ti, xa)| {
                let rad = tr * xa / d;
                rad + sigma * (ti - rad)
            })
            .collect()
    }

    /// Gradient at `p = e_x(ξ)` of `q ↦ F(e_x^{-1}(q))` given `c = ∇F(ξ)`.
    pub fn push_gradient(&self, xi: &[f64], p: &Point, c: &[f64]) -> Vec<f64> {
        let d = norm(xi);
        let a: Vec<f64> = if d == 0.0 {
            c.to_vec()
        } else {
            let inv_sigma = 1.0 / self.model.sn_ratio(d);
            let cr = dot(c, xi) / d;
            c.iter()
                .zip(xi)
                .map(|(ci, xa)| {
                    let rad = cr * xa / d;
                    rad + inv_sigma * (ci - rad)
                })
                .collect()
        };
        let v = self.to_tangent(&a);
        self.model.parallel_transport(&self.center.0, &p.0, &v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryCheck {
    pub name: String,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn random_ball(rng: &mut impl rand::Rng, dim: usize, r: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if norm(&v) <= 1.0 {
            return v.into_iter().map(|a| a * r).collect();
        }
    }
}

/// Largest singular value of a row-major `n × n` matrix.
fn op_norm(a: &[f64], n: usize) -> f64 {
    let mut v = vec![1.0; n];
    let mut s = 0.0;
    for _ in 0..100 {
        let av: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| a[i * n + j] * v[j]).sum())
            .collect();
        let w: Vec<f64> = (0..n)
            .map(|j| (0..n).map(|i| a[i * n + j] * av[i]).sum())
            .collect();
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        s = nw.sqrt();
        v = w.into_iter().map(|x| x / nw).collect();
    }
    s
}

/// Seeded sample audit of the chart maps: round trips, distance preservation,
/// metric at the chart origin and against the pushforward of `exp`, and
/// derivative bounds of transition maps.
pub fn geometry_suite(
    model: &ManifoldModel,
    samples: usize,
    seed: u64,
) -> Result<Vec<GeometryCheck>> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = model.dim;
    let r = model.chart_radius;
    let spread = match model.kind {
        ModelKind::Sphere => 0.9 * model.injectivity_radius(),
        _ => 2.0,
    };
    let tol = |mag: f64, t: f64| if mag > 1.0 { t * mag } else { t };
    let (mut rt, mut dp, mut g0, mut gfd, mut d1, mut d2) =
        (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut rt_ok, mut dp_ok) = (true, true);
    for _ in 0..samples {
        let x = model.point_from_origin(&random_ball(&mut rng, n, spread))?;
        let xi = random_ball(&mut rng, n, r);
        let chart = model.chart_at(&x);
        let y = chart.exp(&xi)?;
        let back = chart.log(&y)?;
        let e = norm(&back.iter().zip(&xi).map(|(a, b)| a - b).collect::<Vec<_>>());
        rt = rt.max(e);
        rt_ok &= e <= tol(norm(&xi), 1e-9);
        let e = (model.distance(&x, &y) - norm(&xi)).abs();
        dp = dp.max(e);
        dp_ok &= e <= tol(norm(&xi), 1e-9);
        let m0 = model.metric_in_normal_coords(&vec![0.0; n])?;
        for a in 0..n {
            for b in 0..n {
                let id = if a == b { 1.0 } else { 0.0 };
                g0 = g0.max((m0.component(a, b) - id).abs());
            }
        }
        g0 = g0.max((m0.sqrt_det - 1.0).abs());
        // finite-difference pushforward of exp at step 1e-4
        let h = 1e-4;
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|a| {
                let mut p = xi.clone();
                let mut q = xi.clone();
                p[a] += h;
                q[a] -= h;
                let (p, q) = (chart.exp(&p)?, chart.exp(&q)?);
                Ok(p.0
                    .iter()
                    .zip(&q.0)
                    .map(|(u, v)| (u - v) / (2.0 * h))
                    .collect())
            })
            .collect::<Result<_>>()?;
        let m = model.metric_in_normal_coords(&xi)?;
        for a in 0..n {
            for b in 0..n {
                gfd = gfd.max((model.inner(&cols[a], &cols[b]) - m.component(a, b)).abs());
            }
        }
        // transition map between charts at distance <= r / 2, on |ξ| <= r / 2
        let z = chart.exp(&random_ball(&mut rng, n, r / 2.0))?;
        let zeta = random_ball(&mut rng, n, r / 2.0);
        let psi = |v: &[f64]| model.transition_map(&x, &z, v, 2.0 * r);
        let hs = 1e-3;
        let mut jac = vec![0.0; n * n];
        for a in 0..n {
            let mut p = zeta.clone();
            let mut q = zeta.clone();
            p[a] += hs;
            q[a] -= hs;
            let (fp, fq, f0) = (psi(&p)?, psi(&q)?, psi(&zeta)?);
            for c in 0..n {
                jac[c * n + a] = (fp[c] - fq[c]) / (2.0 * hs);
                d2 = d2.max(((fp[c] - 2.0 * f0[c] + fq[c]) / (hs * hs)).abs());
            }
        }
        d1 = d1.max(op_norm(&jac, n));
    }
    let check = |name: &str, worst: f64, tolerance: f64, ok: bool| GeometryCheck {
        name: name.into(),
        worst,
        tolerance,
        passed: ok && worst.is_finite(),
    };
    Ok(vec![
        check("exp_log_round_trip", rt, 1e-9, rt_ok),
        check("distance_from_origin", dp, 1e-9, dp_ok),
        check("metric_identity_at_origin", g0, 0.0, g0 == 0.0),
        check("metric_vs_exp_pushforward", gfd, 1e-5, gfd <= 1e-5),
        check(
            "transition_first_derivative",
            d1,
            TRANSITION_BOUNDS.0,
            d1 <= TRANSITION_BOUNDS.0,
        ),
        check(
            "transition_second_derivative",
            d2,
            TRANSITION_BOUNDS.1,
            d2 <= TRANSITION_BOUNDS.1,
        ),
    ])
}

/// Model-wide bounds on `|Dψ|` (operator norm) and on pure second differences of
/// transition maps between charts at distance at most `r / 2`.
pub const TRANSITION_BOUNDS: (f64, f64) = (2.0, 4.0);
