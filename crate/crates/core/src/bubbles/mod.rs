//! Cutoffs, profiles and synthesis of concentrating sequences.

pub mod cutoff;
pub mod profile;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use cutoff::{smooth_cutoff, Cutoff};
pub use profile::Profile;

use crate::error::{Error, Result};
use crate::fields::{Field, FieldSequence, Term};
use crate::geometry::{Isometry, ManifoldModel, Point};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CenterPath {
    Fixed {
        point: Point,
    },
    /// `translation(axis, step k)` applied to `start`.
    Drift {
        start: Point,
        axis: usize,
        step: f64,
    },
}

impl CenterPath {
    pub fn at(&self, model: &ManifoldModel, k: i32) -> Point {
        match self {
            CenterPath::Fixed { point } => point.clone(),
            CenterPath::Drift { start, axis, step } => {
                model.translation(*axis, step * k as f64).apply(start)
            }
        }
    }
}

/// `j_k = slope k + offset`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalePath {
    pub slope: i32,
    pub offset: i32,
}

impl ScalePath {
    pub fn at(&self, k: i32) -> i32 {
        self.slope * k + self.offset
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BubbleSpec {
    pub profile: Profile,
    pub center: CenterPath,
    pub scale: ScalePath,
    pub amplitude: f64,
}

/// Smooth field `profile(e_c^{-1}(x) / scale)` on `M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub profile: Profile,
    pub center: Point,
    pub scale: f64,
}

/// Blob profile moved by `η_k = translation(axis, -step k)`, so that
/// `W̄_k = w̄ ∘ η_k` travels a distance `step k` along `axis`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub profile: BlobSpec,
    pub axis: usize,
    pub step: f64,
}

impl ShiftSpec {
    pub fn isometry(&self, model: &ManifoldModel, k: i32) -> Isometry {
        model.translation(self.axis, -self.step * k as f64)
    }
}

impl BubbleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.scale.slope < 1 {
            return Err(Error::Argument("scale path must be increasing".into()));
        }
        Ok(())
    }
}

pub fn blob_field(model: &ManifoldModel, spec: &BlobSpec) -> Result<Field> {
    let prof = Arc::new(Field::profile(model.dim, spec.profile.clone())?);
    let term = Field::scaled(model, &spec.center, spec.scale, 1.0, None, prof)?;
    Ok(Field::new(model, vec![(1.0, term)]))
}

/// `W_k = 2^{j_k(N-2)/2} χ(e_{y_k}^{-1} x) w(2^{j_k} e_{y_k}^{-1} x)`, times the amplitude.
pub fn synth_bubble(
    model: &ManifoldModel,
    spec: &BubbleSpec,
    cutoff: &Cutoff,
    k: i32,
) -> Result<Field> {
    spec.validate()?;
    let j = spec.scale.at(k);
    let t = 2f64.powi(-j);
    let outer = spec.profile.outer_radius(model.dim);
    if t * outer >= cutoff.r {
        return Err(Error::Chart(format!(
            "profile radius {outer} at level {j} does not fit the chart radius {}",
            cutoff.r
        )));
    }
    let y = spec.center.at(model, k);
    let prof = Arc::new(Field::profile(model.dim, spec.profile.clone())?);
    let weight = spec.amplitude * t.powf(-(model.dim as f64 - 2.0) / 2.0);
    let term = Field::scaled(model, &y, t, weight, Some(*cutoff), prof)?;
    Ok(Field::new(model, vec![(1.0, term)]))
}

pub fn synth_shift(model: &ManifoldModel, spec: &ShiftSpec, k: i32) -> Result<Field> {
    let base = Arc::new(blob_field(model, &spec.profile)?);
    Ok(Field::new(
        model,
        vec![(
            1.0,
            Term::Shifted {
                base,
                iso: spec.isometry(model, k),
            },
        )],
    ))
}

/// `u + Σ W̄_k + Σ W_k`.
pub fn synth_sequence(
    model: &ManifoldModel,
    bubbles: &[BubbleSpec],
    shifts: &[ShiftSpec],
    background: &Field,
    cutoff: &Cutoff,
    k: i32,
) -> Result<Field> {
    let mut u = background.clone();
    for s in shifts {
        u = u.plus(1.0, &synth_shift(model, s, k)?);
    }
    for b in bubbles {
        u = u.plus(1.0, &synth_bubble(model, b, cutoff, k)?);
    }
    Ok(u)
}

/// `|j^A - j^B| + (2^{j^A} + 2^{j^B}) d(y^A, y^B)` at step `k`.
pub fn separation_functional(model: &ManifoldModel, a: &BubbleSpec, b: &BubbleSpec, k: i32) -> f64 {
    let (ja, jb) = (a.scale.at(k), b.scale.at(k));
    let d = model.distance(&a.center.at(model, k), &b.center.at(model, k));
    separation(ja, jb, d)
}

pub fn separation(ja: i32, jb: i32, d: f64) -> f64 {
    (ja - jb).abs() as f64 + (2f64.powi(ja) + 2f64.powi(jb)) * d
}

/// A complete synthetic corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub model: ManifoldModel,
    pub bubbles: Vec<BubbleSpec>,
    pub shifts: Vec<ShiftSpec>,
    pub backgrounds: Vec<BlobSpec>,
    pub k_range: (i32, i32),
}

impl Corpus {
    pub fn cutoff(&self) -> Cutoff {
        smooth_cutoff(self.model.chart_radius)
    }

    pub fn background(&self) -> Result<Field> {
        let mut u = Field::zero(&self.model);
        for b in &self.backgrounds {
            u = u.plus(1.0, &blob_field(&self.model, b)?);
        }
        Ok(u)
    }

    pub fn sequence(&self) -> Result<FieldSequence> {
        let bg = self.background()?;
        for b in &self.bubbles {
            b.validate()?;
        }
        let me = self.clone();
        let cut = self.cutoff();
        Ok(FieldSequence::new(self.k_range, move |k| {
            synth_sequence(&me.model, &me.bubbles, &me.shifts, &bg, &cut, k)
        }))
    }

    /// Only the `n`-th bubble, as a sequence.
    pub fn bubble_sequence(&self, n: usize) -> FieldSequence {
        let me = self.clone();
        let cut = self.cutoff();
        FieldSequence::new(self.k_range, move |k| {
            synth_bubble(&me.model, &me.bubbles[n], &cut, k)
        })
    }
}
