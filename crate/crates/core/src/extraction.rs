//! Greedy bubble extraction, drift scan for shifts and the combined
//! decomposition pipeline.
//!
//! Candidates `(y, j)` are scored by the windowed cross energy
//! `∫ ψ ⟨∇P_{k'}, ∇P_{k*}⟩ dη` of the rescaled pullbacks at the two largest
//! evaluation steps, along the constant-center path `j_k = j - (k* - k)`.
//! A profile moving with that path keeps its full energy in the score while
//! fixed fields decorrelate. The search descends the dyadic levels with a
//! beam, pruned by Cauchy-Schwarz bounds computed from quadrature-node energy
//! densities.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bubbles::{separation, smooth_cutoff, CenterPath, Cutoff, ScalePath};
use crate::diagnostics::{ledgers, EnergyRow, MassRow};
use crate::discretization::{build_discretization, Discretization, Region};
use crate::error::{Error, Result};
use crate::fields::quadrature::pairwise_sum;
use crate::fields::{
    cube_node, grad_seminorm, inner_parts, lp_norm, lp_power, rescaled_pullback, Field,
    FieldSequence, Quadrature, QuadratureSpec, RefGrid, SupportBall, Term,
};
use crate::geometry::{norm, ManifoldModel, ModelKind, Point};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    pub j_max: i32,
    pub epsilon_stop: f64,
    pub gamma: f64,
    pub max_bubbles: usize,
    /// Net spacing at level `j` is `net_radius 2^{-j}`.
    pub net_radius: f64,
    pub k_eval: Vec<i32>,
    /// Score window `R_s` in rescaled coordinates.
    pub score_window: f64,
    /// Truncation radius of extracted profiles.
    pub profile_window: f64,
    /// Picks go to the finest level scoring at least `(1 - tie_slack) β`.
    pub tie_slack: f64,
    pub max_instability: f64,
    pub beam: usize,
    pub grid: RefGrid,
    pub quadrature: QuadratureSpec,
    pub score_quadrature: QuadratureSpec,
    /// Dyadic step sizes of the drift scan.
    pub shift_steps: Vec<f64>,
    /// Nodes per axis of the stabilization grids.
    pub weak_grid: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            j_max: 16,
            epsilon_stop: 0.1,
            gamma: 0.5,
            max_bubbles: 8,
            net_radius: 1.0,
            k_eval: vec![4, 6, 8, 10],
            score_window: 2.0,
            profile_window: 8.0,
            tie_slack: 0.1,
            max_instability: 0.1,
            beam: 48,
            grid: RefGrid::default(),
            quadrature: QuadratureSpec::default(),
            score_quadrature: QuadratureSpec {
                order: 4,
                fine_cells: 4,
                coarse_cells: 2,
                max_depth: 30,
            },
            shift_steps: vec![0.25, 0.5, 1.0],
            weak_grid: 65,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Argument(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if !(self.epsilon_stop > 0.0) {
            return Err(Error::Argument(format!(
                "epsilon_stop must be positive, got {}",
                self.epsilon_stop
            )));
        }
        if self.k_eval.is_empty() || self.k_eval.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument(
                "k_eval must be nonempty and increasing".into(),
            ));
        }
        if !(self.tie_slack >= 0.0 && 1.0 - self.tie_slack >= self.gamma) {
            return Err(Error::Argument(
                "tie_slack must satisfy 1 - tie_slack >= gamma".into(),
            ));
        }
        if self.weak_grid < 4 {
            return Err(Error::Argument(format!(
                "weak_grid needs at least 4 nodes per axis, got {}",
                self.weak_grid
            )));
        }
        if !(self.net_radius > 0.0 && self.score_window > 0.0 && self.profile_window > 0.0)
            || self.beam == 0
        {
            return Err(Error::Argument(
                "net radius, windows and beam must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn k_star(&self) -> i32 {
        *self.k_eval.last().unwrap()
    }

    /// Candidate net of level `j` over `region`.
    pub fn candidate_net(
        &self,
        model: &ManifoldModel,
        j: i32,
        region: &Region,
    ) -> Result<Discretization> {
        build_discretization(model, self.net_radius * 2f64.powi(-j), region)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub center: Point,
    pub level: i32,
    pub index: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractedBubble {
    pub center_path: CenterPath,
    pub scale_path: ScalePath,
    /// Accepted candidate score `β_n`.
    pub score: f64,
    /// Profile samples at the largest evaluation step.
    pub profile_samples: Vec<f64>,
    pub grid: RefGrid,
    pub profile_energy: f64,
    pub profile_mass: f64,
    pub stability: f64,
}

impl ExtractedBubble {
    pub fn center(&self) -> &Point {
        match &self.center_path {
            CenterPath::Fixed { point } => point,
            CenterPath::Drift { start, .. } => start,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProfileEstimate {
    /// `(k, samples)` for every evaluation step.
    pub samples: Vec<(i32, Vec<f64>)>,
    pub energy: f64,
    pub mass: f64,
    pub stability: f64,
    /// Truncated profile on `R^N` from the largest step.
    pub profile: Arc<Field>,
}

#[derive(Clone, Debug)]
pub struct BubbleExtraction {
    pub bubbles: Vec<ExtractedBubble>,
    pub profiles: Vec<Arc<Field>>,
    pub remainder: FieldSequence,
    pub saturated: bool,
    /// Energy of the remainder at the largest step, before and after every subtraction.
    pub residual_history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub windows: Vec<SupportBall>,
    pub energy: f64,
    pub l2: f64,
    pub mass: f64,
    pub stability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractedShift {
    pub axis: usize,
    /// Signed step; the profile is carried by `translation(axis, -step k)^{-1}`.
    pub step: f64,
    pub component: ComponentSummary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KValue {
    pub k: i32,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub model: ManifoldModel,
    pub config: ExtractionConfig,
    pub weak_limit: ComponentSummary,
    pub shift_terms: Vec<ExtractedShift>,
    pub bubbles: Vec<ExtractedBubble>,
    pub saturated: bool,
    pub residual_history: Vec<f64>,
    /// `p -> ‖u_k‖_p` of the input.
    pub input_norms: BTreeMap<String, Vec<KValue>>,
    /// `p -> ‖u_k - u - Σ W̄_k - Σ W*_k‖_p`.
    pub remainder_norms: BTreeMap<String, Vec<KValue>>,
    pub energy_ledger: Vec<EnergyRow>,
    pub mass_ledger: Vec<MassRow>,
}

/// A report together with the estimated fields.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub report: DecompositionReport,
    pub weak_limit: Field,
    pub shift_profiles: Vec<Arc<Field>>,
    pub bubble_profiles: Vec<Arc<Field>>,
    pub remainder: FieldSequence,
}

pub const NORM_EXPONENTS: [f64; 2] = [2.0, 6.0];

fn scale(j: i32) -> f64 {
    2f64.powi(-j)
}

/// `|∇_η P|² dη` relative to `|∇u|² dμ` at distance `d` from the pullback center.
fn node_factor(m: &ManifoldModel, d: f64) -> f64 {
    let n = m.dim as f64;
    match m.kind {
        ModelKind::Euclidean => 1.0,
        ModelKind::Hyperbolic => m.sn_ratio(d).powf(3.0 - n),
        ModelKind::Sphere => m
            .sn_ratio(d.min(0.999 * m.injectivity_radius()))
            .powf(1.0 - n),
    }
}

/// Bubble term `2^{j(N-2)/2} χ(e_y^{-1} x) w(2^j e_y^{-1} x)`.
pub fn bubble_term(
    model: &ManifoldModel,
    cutoff: &Cutoff,
    y: &Point,
    j: i32,
    profile: Arc<Field>,
) -> Result<Term> {
    let t = scale(j);
    Field::scaled(
        model,
        y,
        t,
        t.powf(-(model.dim as f64 - 2.0) / 2.0),
        Some(*cutoff),
        profile,
    )
}

fn grid_norm(v: &[f64]) -> f64 {
    pairwise_sum(&v.iter().map(|a| a * a).collect::<Vec<_>>()).sqrt()
}

/// Relative grid L² distance.
pub fn relative_grid_distance(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let den = grid_norm(a).max(grid_norm(b));
    if den == 0.0 {
        0.0
    } else {
        grid_norm(&diff) / den
    }
}

/// Rescaled pullbacks along `(center_path, scale_path)` at every evaluation step.
pub fn estimate_profile(
    u: &FieldSequence,
    center: &CenterPath,
    scale_path: &ScalePath,
    config: &ExtractionConfig,
) -> Result<ProfileEstimate> {
    config.validate()?;
    let ks = &config.k_eval;
    let mut samples = Vec::with_capacity(ks.len());
    let mut last = None;
    for &k in ks {
        let f = u.at(k)?;
        let m = f.model().clone();
        let y = center.at(&m, k);
        samples.push((
            k,
            rescaled_pullback(&f, &y, scale_path.at(k), &config.grid)?,
        ));
        last = Some((f, y, m));
    }
    let (f, y, _) = last.unwrap();
    let k = config.k_star();
    let profile = Arc::new(Field::pullback(
        Arc::new(f),
        &y,
        scale_path.at(k),
        config.profile_window,
    )?);
    finish_estimate(samples, profile, config)
}

fn finish_estimate(
    samples: Vec<(i32, Vec<f64>)>,
    profile: Arc<Field>,
    config: &ExtractionConfig,
) -> Result<ProfileEstimate> {
    let stability = if samples.len() >= 2 {
        let n = samples.len();
        relative_grid_distance(&samples[n - 1].1, &samples[n - 2].1)
    } else {
        0.0
    };
    let energy = grad_seminorm(&profile, &config.quadrature)?;
    let crit = 2.0 * profile.model().dim as f64 / (profile.model().dim as f64 - 2.0);
    let mass = lp_power(&profile, crit, &config.quadrature)?;
    Ok(ProfileEstimate {
        samples,
        energy,
        mass,
        stability,
        profile,
    })
}

/// Energy-density samples of a field on quadrature nodes.
struct Cloud {
    pts: Vec<Point>,
    e: Vec<f64>,
}

impl Cloud {
    fn new(f: &Field, spec: &QuadratureSpec) -> Result<Cloud> {
        if f.is_zero() {
            return Ok(Cloud {
                pts: Vec::new(),
                e: Vec::new(),
            });
        }
        let m = f.model();
        let q = Quadrature::for_fields(&[f], spec)?;
        let e: Vec<f64> = q
            .nodes
            .par_iter()
            .map(|n| {
                let (_, g) = f.value_grad(&n.point);
                n.weight * m.inner(&g, &g)
            })
            .collect();
        let (pts, e): (Vec<Point>, Vec<f64>) = q
            .nodes
            .into_iter()
            .zip(e)
            .filter(|(_, e)| *e > 0.0)
            .map(|(n, e)| (n.point, e))
            .unzip();
        Ok(Cloud { pts, e })
    }
}

#[derive(Clone)]
struct Node {
    center: Point,
    level: i32,
    index: usize,
    /// Node subsets for the two steps.
    near: [Arc<Vec<u32>>; 2],
    bound: f64,
    score: Option<f64>,
    /// Energy centroid of the scored window, in the node's rescaled chart.
    centroid: Option<Vec<f64>>,
    excluded: bool,
}

struct Scan<'a> {
    model: &'a ManifoldModel,
    cfg: &'a ExtractionConfig,
    /// Fields at `k'` and `k*`.
    fields: [Arc<Field>; 2],
    clouds: [Cloud; 2],
    dk: i32,
    cutoff_r: f64,
    exclusions: &'a [ExtractedBubble],
}

struct Scored {
    cross: f64,
    centroid: Vec<f64>,
}

impl<'a> Scan<'a> {
    fn new(
        model: &'a ManifoldModel,
        cfg: &'a ExtractionConfig,
        prev: Arc<Field>,
        star: Arc<Field>,
        dk: i32,
        exclusions: &'a [ExtractedBubble],
    ) -> Result<Self> {
        let clouds = [
            Cloud::new(&prev, &cfg.score_quadrature)?,
            Cloud::new(&star, &cfg.score_quadrature)?,
        ];
        Ok(Scan {
            model,
            cfg,
            fields: [prev, star],
            clouds,
            dk,
            cutoff_r: model.chart_radius,
            exclusions,
        })
    }

    /// Levels whose profiles are usable at every evaluation step.
    fn acceptable(&self, j: i32) -> bool {
        let k_star = self.cfg.k_star();
        self.cfg.k_eval.iter().all(|&k| {
            let t = scale(j - (k_star - k));
            t * self.cfg.profile_window < self.cutoff_r
                && t * self.cfg.grid.radius * (self.model.dim as f64).sqrt()
                    < self.model.injectivity_radius()
                && t * self.cfg.grid.radius < self.model.working_injectivity_radius()
        })
    }

    fn window_radius(&self, s: usize, j: i32) -> f64 {
        let lv = if s == 0 { j - self.dk } else { j };
        self.cfg.score_window * scale(lv)
    }

    /// Radius of the node subsets kept for the descendants of a level-`j` node.
    fn subset_radius(&self, s: usize, j: i32) -> f64 {
        1.05 * (self.window_radius(s, j) / 2.0 + self.cfg.net_radius * scale(j))
    }

    fn windowed_energy(&self, s: usize, y: &Point, j: i32, near: &[u32]) -> f64 {
        let r = self.window_radius(s, j);
        let psi = Cutoff { r };
        let c = &self.clouds[s];
        let v: Vec<f64> = near
            .iter()
            .filter_map(|&i| {
                let p = &c.pts[i as usize];
                if !self.model.within(y, p, r) {
                    return None;
                }
                let d = self.model.distance(y, p);
                Some(c.e[i as usize] * psi.radial(d) * node_factor(self.model, d))
            })
            .collect();
        pairwise_sum(&v)
    }

    fn subset(&self, s: usize, y: &Point, j: i32, parent: &[u32]) -> Vec<u32> {
        let r = self.subset_radius(s, j).max(self.window_radius(s, j));
        let c = &self.clouds[s];
        parent
            .iter()
            .copied()
            .filter(|&i| self.model.within(y, &c.pts[i as usize], r))
            .collect()
    }

    fn make_node(&self, center: Point, level: i32, index: usize, parents: [&[u32]; 2]) -> Node {
        let near = [
            Arc::new(self.subset(0, &center, level, parents[0])),
            Arc::new(self.subset(1, &center, level, parents[1])),
        ];
        let bound = (self.windowed_energy(0, &center, level, &near[0])
            * self.windowed_energy(1, &center, level, &near[1]))
        .sqrt();
        let excluded = self.excluded(&center, level);
        Node {
            center,
            level,
            index,
            near,
            bound,
            score: None,
            centroid: None,
            excluded,
        }
    }

    /// Candidates whose path does not separate from an accepted bubble.
    fn excluded(&self, y: &Point, j: i32) -> bool {
        let ks = &self.cfg.k_eval;
        let (k0, k1) = (ks[0], self.cfg.k_star());
        self.exclusions.iter().any(|b| {
            let d = self.model.distance(y, b.center());
            let jb = b.scale_path.at(k1);
            if d * 2f64.powi(j.max(jb)) < 1.0 {
                let dj = (j - jb).abs();
                let s0 = separation(
                    j - (k1 - k0),
                    b.scale_path.at(k0),
                    if dj == 0 { 0.0 } else { d },
                );
                let s1 = separation(j, jb, if dj == 0 { 0.0 } else { d });
                return !(s1 > 0.0 && s1 >= 2.0 * s0);
            }
            false
        })
    }

    /// Windowed cross energy and energy centroid at `(y, j)`.
    fn score(&self, y: &Point, j: i32) -> Result<Scored> {
        let n = self.model.dim;
        let rs = self.cfg.score_window;
        let p1 = Field::pullback(self.fields[0].clone(), y, j - self.dk, 2.0 * rs)?;
        let p2 = Field::pullback(self.fields[1].clone(), y, j, 2.0 * rs)?;
        if p1.terms().is_empty() || p2.terms().is_empty() {
            return Ok(Scored {
                cross: 0.0,
                centroid: vec![0.0; n],
            });
        }
        let mut hints = vec![SupportBall {
            center: Point(vec![0.0; n]),
            radius: rs,
        }];
        for h in p1.support().iter().chain(p2.support()) {
            if h.radius < rs && norm(&h.center.0) - h.radius < rs {
                hints.push(h.clone());
            }
        }
        let eu = p2.model().clone();
        let q = Quadrature::build(&eu, &hints, &self.cfg.score_quadrature)?;
        let psi = Cutoff { r: rs };
        let vals: Vec<[f64; 5]> = q
            .nodes
            .par_iter()
            .map(|nd| {
                let w = psi.value(&nd.point.0) * nd.weight;
                let (_, g2) = p2.value_grad(&nd.point);
                let e2: f64 = g2.iter().map(|a| a * a).sum();
                if e2 == 0.0 {
                    return [0.0; 5];
                }
                let (_, g1) = p1.value_grad(&nd.point);
                let c: f64 = g1.iter().zip(&g2).map(|(a, b)| a * b).sum();
                // the centroid uses the wider partition window so a profile filling the score window stays unbiased
                let mut out = [w * c, nd.weight * e2, 0.0, 0.0, 0.0];
                for a in 0..n.min(3) {
                    out[2 + a] = nd.weight * e2 * nd.point.0[a];
                }
                out
            })
            .collect();
        let col = |i: usize| pairwise_sum(&vals.iter().map(|v| v[i]).collect::<Vec<_>>());
        let e = col(1);
        let centroid = if e > 0.0 {
            (0..n).map(|a| col(2 + a) / e).collect()
        } else {
            vec![0.0; n]
        };
        Ok(Scored {
            cross: col(0),
            centroid,
        })
    }

    fn score_value(&self, y: &Point, j: i32) -> Result<(f64, Vec<f64>)> {
        let s = self.score(y, j)?;
        Ok((s.cross.max(0.0).sqrt(), s.centroid))
    }

    /// Level-0 candidates: a lattice restricted to the neighbourhood of the fields' supports.
    fn roots(&self) -> Vec<Point> {
        let m = self.model;
        let o = m.origin();
        let rho = self.cfg.net_radius;
        let mut balls: Vec<SupportBall> = Vec::new();
        for f in &self.fields {
            balls.extend(f.support().iter().cloned());
        }
        if balls.is_empty() {
            return Vec::new();
        }
        let reach = balls
            .iter()
            .map(|b| m.distance(&o, &b.center) + b.radius + rho)
            .fold(0.0, f64::max);
        let reach = reach
            .min(0.999 * m.injectivity_radius())
            .min(m.working_injectivity_radius());
        let stretch = match m.kind {
            ModelKind::Hyperbolic => m.sn_ratio(reach),
            _ => 1.0,
        };
        let s = 0.95 * 2.0 * rho / (m.dim as f64).sqrt() / stretch;
        let chart = m.chart_at(&o);
        let mut out = Vec::new();
        for xi in lattice(m.dim, s, reach) {
            if let Ok(p) = chart.exp(&xi) {
                if balls
                    .iter()
                    .any(|b| m.distance(&p, &b.center) < b.radius + rho)
                {
                    out.push(p);
                }
            }
        }
        out
    }

    /// Level `j + 1` lattice points within `ρ_j` of `parent`.
    fn children(&self, parent: &Point, j: i32) -> Vec<Point> {
        let m = self.model;
        let rho = self.cfg.net_radius * scale(j);
        let s = 0.95 * 2.0 * (rho / 2.0) / (m.dim as f64).sqrt();
        let chart = m.chart_at(parent);
        lattice(m.dim, s, rho)
            .into_iter()
            .filter_map(|xi| chart.exp(&xi).ok())
            .collect()
    }

    fn run(&self) -> Result<Vec<Candidate>> {
        let cfg = self.cfg;
        if self.clouds[1].pts.is_empty() {
            return Ok(Vec::new());
        }
        let all: [Vec<u32>; 2] = [
            (0..self.clouds[0].pts.len() as u32).collect(),
            (0..self.clouds[1].pts.len() as u32).collect(),
        ];
        let roots = self.roots();
        let mut level: Vec<Node> = roots
            .into_par_iter()
            .enumerate()
            .map(|(i, p)| self.make_node(p, 0, i, [&all[0], &all[1]]))
            .collect();
        let eps2 = cfg.epsilon_stop * cfg.epsilon_stop;
        const SLACK: f64 = 1.25;
        let mut beta = 0.0f64;
        let mut scored: Vec<Node> = Vec::new();
        for j in 0..=cfg.j_max {
            level.retain(|n| n.bound * SLACK >= eps2);
            if self.acceptable(j) {
                level.sort_by(|a, b| b.bound.total_cmp(&a.bound).then(a.index.cmp(&b.index)));
                let mut done = 0;
                while done < level.len() {
                    let theta = cfg.epsilon_stop.max((1.0 - cfg.tie_slack) * beta);
                    let chunk_end = (done + 8).min(level.len());
                    let th2 = theta * theta;
                    let res: Vec<Option<(f64, Vec<f64>)>> = level[done..chunk_end]
                        .par_iter()
                        .map(|n| {
                            if n.excluded || n.bound * SLACK < th2 {
                                return Ok(None);
                            }
                            self.score_value(&n.center, n.level).map(Some)
                        })
                        .collect::<Result<_>>()?;
                    for (n, s) in level[done..chunk_end].iter_mut().zip(res) {
                        if let Some((s, c)) = s {
                            beta = beta.max(s);
                            n.score = Some(s);
                            n.centroid = Some(c);
                        }
                    }
                    done = chunk_end;
                }
                let theta = cfg.epsilon_stop.max((1.0 - cfg.tie_slack) * beta);
                level.retain(|n| n.bound * SLACK >= theta * theta && n.score.is_some());
                scored.extend(level.iter().cloned());
                level.sort_by(|a, b| {
                    b.score
                        .unwrap()
                        .total_cmp(&a.score.unwrap())
                        .then(a.index.cmp(&b.index))
                });
            } else {
                level.sort_by(|a, b| b.bound.total_cmp(&a.bound).then(a.index.cmp(&b.index)));
            }
            level.truncate(cfg.beam);
            if j == cfg.j_max || level.is_empty() {
                break;
            }
            // children: lattice points owned by their nearest parent, deduplicated on a hash grid
            let pcell = 2.0 * cfg.net_radius * scale(j);
            let key_of = |p: &Point, h: f64| -> Vec<i64> {
                p.0.iter().map(|v| (v / h).floor() as i64).collect()
            };
            let mut pgrid: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
            for (pi, par) in level.iter().enumerate() {
                pgrid
                    .entry(key_of(&par.center, pcell))
                    .or_default()
                    .push(pi);
            }
            let neighbours = |key: &[i64]| -> Vec<Vec<i64>> {
                (0..3usize.pow(key.len() as u32))
                    .map(|mut o| {
                        key.iter()
                            .map(|k| {
                                let d = (o % 3) as i64 - 1;
                                o /= 3;
                                k + d
                            })
                            .collect()
                    })
                    .collect()
            };
            let mut kids: Vec<(Point, usize)> = Vec::new();
            let cell = 0.25 * cfg.net_radius * scale(j + 1);
            let mut grid: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
            for (pi, par) in level.iter().enumerate() {
                // the recentred point goes first so that the lattice duplicates around it are dropped
                let seed = par
                    .centroid
                    .as_ref()
                    .filter(|c| norm(c) > 1e-3)
                    .and_then(|c| {
                        let xi: Vec<f64> = c.iter().map(|a| a * scale(j)).collect();
                        self.model.chart_at(&par.center).exp(&xi).ok()
                    });
                let seeded = seed.is_some();
                for (ci, c) in seed
                    .into_iter()
                    .chain(self.children(&par.center, j))
                    .enumerate()
                {
                    if seeded && ci == 0 {
                        grid.entry(key_of(&c, cell)).or_default().push(kids.len());
                        kids.push((c, pi));
                        continue;
                    }
                    let own = self.model.distance(&c, &par.center);
                    let stolen = neighbours(&key_of(&c, pcell)).iter().any(|nb| {
                        pgrid.get(nb).is_some_and(|l| {
                            l.iter().any(|&o| {
                                o != pi && {
                                    let d = self.model.distance(&c, &level[o].center);
                                    d < own || (d == own && o < pi)
                                }
                            })
                        })
                    });
                    if stolen {
                        continue;
                    }
                    let key = key_of(&c, cell);
                    let dup = neighbours(&key).iter().any(|nb| {
                        grid.get(nb).is_some_and(|l| {
                            l.iter().any(|&i| self.model.within(&kids[i].0, &c, cell))
                        })
                    });
                    if !dup {
                        grid.entry(key).or_default().push(kids.len());
                        kids.push((c, pi));
                    }
                }
            }
            let parents = &level;
            level = kids
                .into_par_iter()
                .enumerate()
                .map(|(i, (c, pi))| {
                    let p = &parents[pi];
                    self.make_node(c, j + 1, i, [&p.near[0], &p.near[1]])
                })
                .collect();
        }
        let mut out: Vec<Candidate> = scored
            .into_iter()
            .map(|n| Candidate {
                center: n.center,
                level: n.level,
                index: n.index,
                score: n.score.unwrap(),
            })
            .collect();
        out.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.level.cmp(&b.level))
                .then(a.index.cmp(&b.index))
        });
        Ok(out)
    }

    /// Follows the energy centroid of the window at level `j` while the score does not drop.
    fn recenter(&self, mut y: Point, j: i32) -> Result<(Point, f64)> {
        let (mut s, mut cen) = self.score_value(&y, j)?;
        for _ in 0..6 {
            if norm(&cen) < 1e-3 {
                break;
            }
            let shift: Vec<f64> = cen.iter().map(|a| a * scale(j)).collect();
            let y2 = self.model.chart_at(&y).exp(&shift)?;
            let (s2, c2) = self.score_value(&y2, j)?;
            if s2 < s {
                break;
            }
            y = y2;
            s = s2;
            cen = c2;
        }
        Ok((y, s))
    }

    /// Moves a candidate to the energy centroid of its window, then settles on
    /// the finest level scoring within the tie slack of the best level seen.
    fn refine(&self, c: &Candidate, beta: f64) -> Result<Candidate> {
        let keep = 1.0 - self.cfg.tie_slack;
        let mut j = c.level;
        let (mut y, mut s) = self.recenter(c.center.clone(), j)?;
        // a pick one level too fine sees a truncated profile; the coarser level then scores higher
        while j > 0 && self.acceptable(j - 1) {
            let (y2, s2) = self.recenter(y.clone(), j - 1)?;
            if keep * s2 <= s {
                break;
            }
            j -= 1;
            y = y2;
            s = s2;
        }
        let beta = beta.max(s);
        while j < self.cfg.j_max && self.acceptable(j + 1) {
            let (s2, _) = self.score_value(&y, j + 1)?;
            if s2 < keep * beta {
                break;
            }
            j += 1;
            s = s2;
        }
        Ok(Candidate {
            center: y,
            level: j,
            index: c.index,
            score: s,
        })
    }
}

/// Integer lattice of spacing `s` inside the ball of radius `r`.
fn lattice(dim: usize, s: f64, r: f64) -> Vec<Vec<f64>> {
    let m = (r / s).floor() as i64;
    let side = (2 * m + 1) as usize;
    let mut out = Vec::new();
    let mut idx = vec![0usize; dim];
    loop {
        let xi: Vec<f64> = idx.iter().map(|&i| (i as i64 - m) as f64 * s).collect();
        if norm(&xi) <= r {
            out.push(xi);
        }
        let mut a = 0;
        loop {
            if a == dim {
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

fn prev_step(cfg: &ExtractionConfig) -> i32 {
    let n = cfg.k_eval.len();
    if n >= 2 {
        cfg.k_eval[n - 2]
    } else {
        cfg.k_eval[0]
    }
}

/// Ranked candidates `(y, j)` for the constant-center paths of `u`.
pub fn scan_candidates(
    u: &FieldSequence,
    config: &ExtractionConfig,
    exclusions: &[ExtractedBubble],
) -> Result<Vec<Candidate>> {
    config.validate()?;
    let k_star = config.k_star();
    let kp = prev_step(config);
    let star = Arc::new(u.at(k_star)?);
    let prev = Arc::new(u.at(kp)?);
    let model = star.model().clone();
    Scan::new(&model, config, prev, star, k_star - kp, exclusions)?.run()
}

/// Greedy extraction: scan, accept, subtract, repeat.
pub fn extract_bubbles(u: &FieldSequence, config: &ExtractionConfig) -> Result<BubbleExtraction> {
    config.validate()?;
    let ks = config.k_eval.clone();
    let k_star = config.k_star();
    let kp = prev_step(config);
    let mut fields: Vec<Arc<Field>> = ks
        .iter()
        .map(|&k| u.at(k).map(Arc::new))
        .collect::<Result<_>>()?;
    let model = fields[0].model().clone();
    let cutoff = smooth_cutoff(model.chart_radius);
    let ip = ks.iter().position(|&k| k == kp).unwrap();
    let is = ks.len() - 1;
    let mut bubbles: Vec<ExtractedBubble> = Vec::new();
    let mut profiles: Vec<Arc<Field>> = Vec::new();
    let mut subs: Vec<(Point, i32, Arc<Field>)> = Vec::new();
    let mut history = vec![grad_seminorm(&fields[is], &config.quadrature)?];
    let mut saturated = false;
    loop {
        let scan = Scan::new(
            &model,
            config,
            fields[ip].clone(),
            fields[is].clone(),
            k_star - kp,
            &bubbles,
        )?;
        let ranked = scan.run()?;
        let Some(top) = ranked.first() else { break };
        let beta = top.score;
        if beta < config.epsilon_stop {
            break;
        }
        if bubbles.len() >= config.max_bubbles {
            saturated = true;
            break;
        }
        // finest level within the tie slack, then by score
        let floor = (1.0 - config.tie_slack) * beta;
        let mut picks: Vec<&Candidate> = ranked.iter().filter(|c| c.score >= floor).collect();
        picks.sort_by(|a, b| {
            b.level
                .cmp(&a.level)
                .then(b.score.total_cmp(&a.score))
                .then(a.index.cmp(&b.index))
        });
        let mut accepted = None;
        let mut tried: Vec<(Point, i32)> = Vec::new();
        for c in picks {
            if tried.iter().any(|(p, j)| {
                *j == c.level && model.distance(p, &c.center) < config.net_radius * scale(c.level)
            }) {
                continue;
            }
            if tried.len() >= 3 {
                break;
            }
            tried.push((c.center.clone(), c.level));
            let r = scan.refine(c, beta)?;
            if r.score < config.epsilon_stop.max(config.gamma * beta)
                || scan.excluded(&r.center, r.level)
            {
                continue;
            }
            let samples: Vec<(i32, Vec<f64>)> = ks
                .iter()
                .zip(&fields)
                .map(|(&k, f)| {
                    Ok((
                        k,
                        rescaled_pullback(f, &r.center, r.level - (k_star - k), &config.grid)?,
                    ))
                })
                .collect::<Result<_>>()?;
            let profile = Arc::new(Field::pullback(
                fields[is].clone(),
                &r.center,
                r.level,
                config.profile_window,
            )?);
            let est = finish_estimate(samples, profile, config)?;
            let eps2 = config.epsilon_stop * config.epsilon_stop;
            if est.stability < config.max_instability && est.energy > eps2 * 0.98 {
                accepted = Some((r, est));
                break;
            }
        }
        let Some((c, est)) = accepted else { break };
        let offset = c.level - k_star;
        for (i, &k) in ks.iter().enumerate() {
            let term = bubble_term(&model, &cutoff, &c.center, k + offset, est.profile.clone())?;
            fields[i] = Arc::new(fields[i].with_term(-1.0, term));
        }
        subs.push((c.center.clone(), offset, est.profile.clone()));
        bubbles.push(ExtractedBubble {
            center_path: CenterPath::Fixed {
                point: c.center.clone(),
            },
            scale_path: ScalePath { slope: 1, offset },
            score: c.score,
            profile_samples: est.samples.last().unwrap().1.clone(),
            grid: config.grid,
            profile_energy: est.energy,
            profile_mass: est.mass,
            stability: est.stability,
        });
        profiles.push(est.profile);
        history.push(grad_seminorm(&fields[is], &config.quadrature)?);
    }
    let base = u.clone();
    let m2 = model.clone();
    let remainder = FieldSequence::new(u.k_range, move |k| {
        let mut f = base.at(k)?;
        for (y, off, p) in &subs {
            f = f.with_term(-1.0, bubble_term(&m2, &cutoff, y, k + off, p.clone())?);
        }
        Ok(f)
    });
    Ok(BubbleExtraction {
        bubbles,
        profiles,
        remainder,
        saturated,
        residual_history: history,
    })
}

/// Hint balls grouped into windows; groups whose windows would overlap are merged.
fn windows_of(model: &ManifoldModel, hints: &[SupportBall]) -> Vec<SupportBall> {
    let mut groups: Vec<SupportBall> = Vec::new();
    let mut sorted = hints.to_vec();
    sorted.sort_by(|a, b| b.radius.total_cmp(&a.radius));
    for h in sorted {
        groups.push(h);
        loop {
            let mut merged = false;
            'scan: for a in 0..groups.len() {
                for b in a + 1..groups.len() {
                    let d = model.distance(&groups[a].center, &groups[b].center);
                    if d < 2.0 * (groups[a].radius + groups[b].radius) {
                        let r = groups[a].radius.max(d + groups[b].radius);
                        groups[a].radius = r;
                        groups.remove(b);
                        merged = true;
                        break 'scan;
                    }
                }
            }
            if !merged {
                break;
            }
        }
    }
    groups
}

/// Nodes whose last two samples differ by at least `tol` relative are replaced by
/// averages of their settled neighbours.
fn fill_unstable(values: &mut [f64], unstable: &[bool], dim: usize, points: usize) {
    let mut open: Vec<usize> = (0..values.len()).filter(|&i| unstable[i]).collect();
    let mut settled: Vec<bool> = unstable.iter().map(|u| !u).collect();
    let neighbours = |i: usize| {
        let mut out = Vec::with_capacity(2 * dim);
        let mut stride = 1;
        for _ in 0..dim {
            let c = (i / stride) % points;
            if c > 0 {
                out.push(i - stride);
            }
            if c + 1 < points {
                out.push(i + stride);
            }
            stride *= points;
        }
        out
    };
    while !open.is_empty() {
        let mut next = Vec::new();
        let mut done = Vec::new();
        for &i in &open {
            let nb: Vec<usize> = neighbours(i).into_iter().filter(|&j| settled[j]).collect();
            if nb.is_empty() {
                next.push(i);
            } else {
                done.push((
                    i,
                    nb.iter().map(|&j| values[j]).sum::<f64>() / nb.len() as f64,
                ));
            }
        }
        if done.is_empty() {
            for i in next {
                values[i] = 0.0;
            }
            return;
        }
        for (i, v) in done {
            values[i] = v;
            settled[i] = true;
        }
        open = next;
    }
}

/// Pointwise stabilization of the last two fields on a chart grid over every
/// window of the last one; windows must carry support at every step, have few
/// unstable nodes and energy at least `epsilon_stop²`. Returns the windows, the
/// interpolated field and the worst relative difference on stable nodes.
fn stable_part(
    model: &ManifoldModel,
    fields: &[Arc<Field>],
    cfg: &ExtractionConfig,
) -> Result<(Vec<SupportBall>, Field, f64)> {
    let last = fields.last().unwrap();
    let prev = &fields[fields.len().saturating_sub(2)];
    let dim = model.dim;
    let pts = cfg.weak_grid;
    let total = pts.pow(dim as u32);
    let tol = cfg.max_instability;
    let eps2 = cfg.epsilon_stop * cfg.epsilon_stop;
    let mut keep = Vec::new();
    let mut out = Field::zero(model);
    let mut worst = 0.0f64;
    for w in windows_of(model, last.support()) {
        let matched = fields[..fields.len() - 1].iter().all(|f| {
            f.support()
                .iter()
                .any(|h| model.distance(&h.center, &w.center) < w.radius + h.radius)
        });
        if !matched {
            continue;
        }
        let half = (1.1 * w.radius).min(0.99 * model.injectivity_radius() / (dim as f64).sqrt());
        let chart = model.chart_at(&w.center);
        let samples: Vec<(f64, f64)> = (0..total)
            .into_par_iter()
            .map(|i| match chart.exp(&cube_node(dim, half, pts, i)) {
                Ok(x) => (last.value(&x), prev.value(&x)),
                Err(_) => (0.0, 0.0),
            })
            .collect();
        let unstable: Vec<bool> = samples
            .iter()
            .map(|(a, b)| (a - b).abs() > tol * a.abs().max(b.abs()))
            .collect();
        let support = samples
            .iter()
            .filter(|(a, b)| *a != 0.0 || *b != 0.0)
            .count();
        let bad = unstable.iter().filter(|u| **u).count();
        if support == 0 || bad as f64 >= tol * support as f64 {
            continue;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for ((a, b), u) in samples.iter().zip(&unstable) {
            if !u {
                num += (a - b) * (a - b);
                den += a * a;
            }
        }
        let rel = if den > 0.0 { (num / den).sqrt() } else { 0.0 };
        let mut values: Vec<f64> = samples.iter().map(|(a, _)| *a).collect();
        fill_unstable(&mut values, &unstable, dim, pts);
        let piece = Field::new(
            model,
            vec![(1.0, Field::sampled(model, &w.center, half, pts, values)?)],
        );
        if grad_seminorm(&piece, &cfg.quadrature)? < eps2 {
            continue;
        }
        worst = worst.max(rel);
        out = out.plus(1.0, &piece);
        keep.push(w);
    }
    Ok((keep, out, worst))
}

fn summarize(
    f: &Field,
    windows: Vec<SupportBall>,
    stability: f64,
    spec: &QuadratureSpec,
) -> Result<ComponentSummary> {
    let (energy, l2) = inner_parts(f, f, spec)?;
    let n = f.model().dim as f64;
    let mass = lp_power(f, 2.0 * n / (n - 2.0), spec)?;
    Ok(ComponentSummary {
        windows,
        energy,
        l2,
        mass,
        stability,
    })
}

fn shifted(model: &ManifoldModel, base: Arc<Field>, iso: crate::geometry::Isometry) -> Field {
    Field::new(model, vec![(1.0, Term::Shifted { base, iso })])
}

/// Weak limit, then shift profiles from a drift scan, then bubbles of the rest, then ledgers.
pub fn full_decompose(u: &FieldSequence, config: &ExtractionConfig) -> Result<Decomposition> {
    config.validate()?;
    let ks = config.k_eval.clone();
    let inputs: Vec<Arc<Field>> = ks
        .iter()
        .map(|&k| u.at(k).map(Arc::new))
        .collect::<Result<_>>()?;
    let model = inputs[0].model().clone();

    let (uw, weak, ustab) = stable_part(&model, &inputs, config)?;
    let weak = Arc::new(weak);
    let weak_summary = summarize(&weak, uw, ustab, &config.quadrature)?;
    let mut q: Vec<Arc<Field>> = inputs
        .iter()
        .map(|f| Arc::new(f.plus(-1.0, &weak)))
        .collect();

    let mut shift_terms = Vec::new();
    let mut shift_profiles: Vec<Arc<Field>> = Vec::new();
    let mut shift_paths: Vec<(usize, f64)> = Vec::new();
    if model.is_homogeneous_noncompact() {
        for axis in 0..model.dim {
            for &s in &config.shift_steps {
                for step in [s, -s] {
                    let f: Vec<Arc<Field>> = ks
                        .iter()
                        .zip(&q)
                        .map(|(&k, qk)| {
                            Arc::new(shifted(
                                &model,
                                qk.clone(),
                                model.translation(axis, step * k as f64),
                            ))
                        })
                        .collect();
                    let (windows, w, stab) = stable_part(&model, &f, config)?;
                    if windows.is_empty() {
                        continue;
                    }
                    let w = Arc::new(w);
                    for (i, &k) in ks.iter().enumerate() {
                        let moved =
                            shifted(&model, w.clone(), model.translation(axis, -step * k as f64));
                        q[i] = Arc::new(q[i].plus(-1.0, &moved));
                    }
                    shift_terms.push(ExtractedShift {
                        axis,
                        step,
                        component: summarize(&w, windows, stab, &config.quadrature)?,
                    });
                    shift_profiles.push(w);
                    shift_paths.push((axis, step));
                }
            }
        }
    }

    let base = u.clone();
    let weak_c = weak.clone();
    let sp = shift_profiles.clone();
    let paths = shift_paths.clone();
    let m2 = model.clone();
    let v = FieldSequence::new(u.k_range, move |k| {
        let mut f = base.at(k)?.plus(-1.0, &weak_c);
        for (w, (axis, step)) in sp.iter().zip(&paths) {
            f = f.plus(
                -1.0,
                &shifted(&m2, w.clone(), m2.translation(*axis, -step * k as f64)),
            );
        }
        Ok(f)
    });
    let ex = extract_bubbles(&v, config)?;
    let remainder = ex.remainder.clone();

    let mut input_norms = BTreeMap::new();
    let mut remainder_norms = BTreeMap::new();
    for p in NORM_EXPONENTS {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for &k in &ks {
            a.push(KValue {
                k,
                value: lp_norm(&u.at(k)?, p, &config.quadrature)?,
            });
            b.push(KValue {
                k,
                value: lp_norm(&remainder.at(k)?, p, &config.quadrature)?,
            });
        }
        input_norms.insert(format!("{p}"), a);
        remainder_norms.insert(format!("{p}"), b);
    }
    let mut report = DecompositionReport {
        model: model.clone(),
        config: config.clone(),
        weak_limit: weak_summary,
        shift_terms,
        bubbles: ex.bubbles,
        saturated: ex.saturated,
        residual_history: ex.residual_history,
        input_norms,
        remainder_norms,
        energy_ledger: Vec::new(),
        mass_ledger: Vec::new(),
    };
    let (e, m) = ledgers(&report, u, &config.quadrature)?;
    report.energy_ledger = e;
    report.mass_ledger = m;
    Ok(Decomposition {
        report,
        weak_limit: (*weak).clone(),
        shift_profiles,
        bubble_profiles: ex.profiles,
        remainder,
    })
}
