//! Run configuration: a single TOML file per run.

use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sobolev_profiles::atlas::AtlasConfig;
use sobolev_profiles::bubbles::{
    BlobSpec, BubbleSpec, CenterPath, Corpus, Profile, ScalePath, ShiftSpec,
};
use sobolev_profiles::extraction::ExtractionConfig;
use sobolev_profiles::fields::{QuadratureSpec, RefGrid};
use sobolev_profiles::geometry::{ManifoldModel, ModelKind};
use toml::Spanned;

use crate::error::{CliError, Result};

pub const CHECKS: [&str; 5] = ["slabs", "ao", "noconc", "vanishing", "ledgers"];
pub const FORMATS: [&str; 3] = ["json", "csv", "svg"];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    manifold: RawManifold,
    #[serde(default)]
    corpus: Option<RawCorpus>,
    #[serde(default)]
    extraction: Option<ExtractionConfig>,
    #[serde(default)]
    diagnostics: RawDiagnostics,
    #[serde(default)]
    atlas: Option<AtlasConfig>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifold {
    kind: Spanned<String>,
    #[serde(default = "default_dim")]
    dim: usize,
    curvature: Option<f64>,
    chart_radius: Option<f64>,
}

fn default_dim() -> usize {
    3
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCorpus {
    k_range: Option<Spanned<(i32, i32)>>,
    k_eval: Option<Spanned<Vec<i32>>>,
    #[serde(default)]
    bubbles: Vec<Spanned<RawBubble>>,
    #[serde(default)]
    shifts: Vec<Spanned<RawShift>>,
    #[serde(default)]
    backgrounds: Vec<Spanned<RawBlob>>,
}

fn one() -> f64 {
    1.0
}

fn one_i() -> i32 {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBubble {
    profile: Spanned<String>,
    #[serde(default = "one")]
    support: f64,
    #[serde(default = "one")]
    amplitude: f64,
    center: Option<Spanned<Vec<f64>>>,
    #[serde(default = "one_i")]
    slope: i32,
    #[serde(default)]
    offset: i32,
    #[serde(default = "one")]
    weight: f64,
    drift: Option<RawDrift>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrift {
    axis: usize,
    step: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBlob {
    profile: Spanned<String>,
    #[serde(default = "one")]
    support: f64,
    #[serde(default = "one")]
    amplitude: f64,
    center: Option<Spanned<Vec<f64>>>,
    #[serde(default = "one")]
    scale: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawShift {
    profile: Spanned<String>,
    #[serde(default = "one")]
    support: f64,
    #[serde(default = "one")]
    amplitude: f64,
    center: Option<Spanned<Vec<f64>>>,
    #[serde(default = "one")]
    scale: f64,
    axis: usize,
    step: f64,
}

impl RawShift {
    fn blob(&self) -> RawBlob {
        RawBlob {
            profile: self.profile.clone(),
            support: self.support,
            amplitude: self.amplitude,
            center: self.center.clone(),
            scale: self.scale,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiagnostics {
    checks: Option<Vec<Spanned<String>>>,
    quadrature: Option<QuadratureSpec>,
    grid: Option<RefGrid>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
    formats: Option<Vec<Spanned<String>>>,
    snapshot_extent: Option<f64>,
    snapshot_points: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    pub checks: Vec<String>,
    pub quadrature: QuadratureSpec,
    pub grid: RefGrid,
}

impl Diagnostics {
    pub fn wants(&self, check: &str) -> bool {
        self.checks.iter().any(|c| c == check)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Output {
    pub dir: PathBuf,
    pub formats: Vec<String>,
    /// Half-width of the snapshot square in normal coordinates at the origin.
    pub snapshot_extent: f64,
    pub snapshot_points: usize,
}

impl Output {
    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }
}

/// A validated configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub source: PathBuf,
    pub corpus: Corpus,
    pub extraction: ExtractionConfig,
    pub diagnostics: Diagnostics,
    pub atlas: AtlasConfig,
    pub output: Output,
}

impl RunConfig {
    pub fn model(&self) -> &ManifoldModel {
        &self.corpus.model
    }
}

struct Ctx<'a> {
    path: &'a Path,
    text: &'a str,
}

impl Ctx<'_> {
    fn line(&self, offset: usize) -> usize {
        let end = offset.min(self.text.len());
        self.text.as_bytes()[..end]
            .iter()
            .filter(|&&b| b == b'\n')
            .count()
            + 1
    }

    /// Start of the first line opening `[name]`, `[name.*]` or `[[name.*]]`; the file start otherwise.
    fn section(&self, name: &str) -> Range<usize> {
        let mut offset = 0;
        for line in self.text.split_inclusive('\n') {
            let t = line.trim_start().trim_start_matches('[').trim_start();
            if line.trim_start().starts_with('[')
                && t.strip_prefix(name)
                    .is_some_and(|r| r.trim_start().starts_with(']') || r.starts_with('.'))
            {
                return offset..offset;
            }
            offset += line.len();
        }
        0..0
    }

    fn err(&self, span: Range<usize>, message: impl Into<String>) -> CliError {
        CliError::Config {
            path: self.path.to_path_buf(),
            line: self.line(span.start),
            message: message.into(),
        }
    }
}

pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse(path, &text)
}

pub fn parse(path: &Path, text: &str) -> Result<RunConfig> {
    let ctx = Ctx { path, text };
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let span = e.span().unwrap_or(0..0);
        ctx.err(span, e.message().to_string())
    })?;

    let mspan = ctx.section("manifold");
    let m = raw.manifold;
    let kind =
        match m.kind.get_ref().as_str() {
            "euclidean" => ModelKind::Euclidean,
            "hyperbolic" => ModelKind::Hyperbolic,
            "sphere" => ModelKind::Sphere,
            other => return Err(ctx.err(
                m.kind.span(),
                format!(
                    "unknown manifold kind `{other}` (expected euclidean, hyperbolic or sphere)"
                ),
            )),
        };
    let model = {
        let base = match kind {
            ModelKind::Euclidean => ManifoldModel::euclidean(m.dim),
            ModelKind::Hyperbolic => ManifoldModel::hyperbolic(m.dim),
            ModelKind::Sphere => ManifoldModel::sphere(m.dim),
        }
        .map_err(|e| ctx.err(mspan.clone(), e.to_string()))?;
        ManifoldModel::new(
            kind,
            m.dim,
            m.curvature.unwrap_or(base.curvature),
            m.chart_radius.unwrap_or(base.chart_radius),
        )
        .map_err(|e| ctx.err(mspan.clone(), e.to_string()))?
    };
    let dim = model.dim;

    let mut extraction = raw.extraction.unwrap_or_default();
    let xspan = ctx.section("extraction");
    let corpus_raw = raw.corpus.unwrap_or_default();
    if let Some(ke) = &corpus_raw.k_eval {
        let v = ke.get_ref();
        if v.is_empty() || v.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ctx.err(ke.span(), "k_eval must be nonempty and increasing"));
        }
        extraction.k_eval = v.clone();
    }
    extraction
        .validate()
        .map_err(|e| ctx.err(xspan.clone(), e.to_string()))?;
    let k_eval = extraction.k_eval.clone();
    let k_range = match &corpus_raw.k_range {
        Some(r) => {
            let (a, b) = *r.get_ref();
            if a > b || k_eval[0] < a || *k_eval.last().unwrap() > b {
                return Err(ctx.err(
                    r.span(),
                    format!("k_range ({a}, {b}) must contain every k_eval step"),
                ));
            }
            (a, b)
        }
        None => (k_eval[0], *k_eval.last().unwrap()),
    };

    let profile = |name: &Spanned<String>, support: f64, amplitude: f64| -> Result<Profile> {
        if !(support > 0.0) {
            return Err(ctx.err(
                name.span(),
                format!("profile support must be positive, got {support}"),
            ));
        }
        Profile::from_name(name.get_ref(), support, amplitude).ok_or_else(|| {
            ctx.err(
                name.span(),
                format!(
                    "unknown profile `{}` (expected bump or aubin_talenti)",
                    name.get_ref()
                ),
            )
        })
    };
    let point = |c: &Option<Spanned<Vec<f64>>>, span: Range<usize>| -> Result<_> {
        let coords = match c {
            Some(c) if c.get_ref().len() != dim => {
                return Err(ctx.err(
                    c.span(),
                    format!("center needs {dim} coordinates, got {}", c.get_ref().len()),
                ))
            }
            Some(c) => c.get_ref().clone(),
            None => vec![0.0; dim],
        };
        let span = c.as_ref().map(|c| c.span()).unwrap_or(span);
        model
            .point_from_origin(&coords)
            .map_err(|e| ctx.err(span, e.to_string()))
    };
    let blob = |b: &RawBlob, span: Range<usize>| -> Result<BlobSpec> {
        if !(b.scale > 0.0) {
            return Err(ctx.err(span, format!("scale must be positive, got {}", b.scale)));
        }
        Ok(BlobSpec {
            profile: profile(&b.profile, b.support, b.amplitude)?,
            center: point(&b.center, span)?,
            scale: b.scale,
        })
    };

    let mut bubbles = Vec::new();
    for s in &corpus_raw.bubbles {
        let b = s.get_ref();
        if b.slope < 1 {
            return Err(ctx.err(
                s.span(),
                format!("bubble slope must be >= 1, got {}", b.slope),
            ));
        }
        let start = point(&b.center, s.span())?;
        let center = match &b.drift {
            None => CenterPath::Fixed { point: start },
            Some(d) if d.axis >= dim => {
                return Err(ctx.err(s.span(), format!("drift axis {} out of range", d.axis)))
            }
            Some(d) => CenterPath::Drift {
                start,
                axis: d.axis,
                step: d.step,
            },
        };
        bubbles.push(BubbleSpec {
            profile: profile(&b.profile, b.support, b.amplitude)?,
            center,
            scale: ScalePath {
                slope: b.slope,
                offset: b.offset,
            },
            amplitude: b.weight,
        });
    }
    let mut shifts = Vec::new();
    for s in &corpus_raw.shifts {
        let r = s.get_ref();
        if r.axis >= dim {
            return Err(ctx.err(s.span(), format!("shift axis {} out of range", r.axis)));
        }
        shifts.push(ShiftSpec {
            profile: blob(&r.blob(), s.span())?,
            axis: r.axis,
            step: r.step,
        });
    }
    if !shifts.is_empty() && model.kind == ModelKind::Sphere {
        return Err(ctx.err(
            corpus_raw.shifts[0].span(),
            "shift profiles need a non-compact homogeneous model",
        ));
    }
    let backgrounds = corpus_raw
        .backgrounds
        .iter()
        .map(|s| blob(s.get_ref(), s.span()))
        .collect::<Result<Vec<_>>>()?;
    let corpus = Corpus {
        model: model.clone(),
        bubbles,
        shifts,
        backgrounds,
        k_range,
    };

    let mut checks = Vec::new();
    match &raw.diagnostics.checks {
        None => checks.extend(CHECKS.iter().map(|s| s.to_string())),
        Some(list) => {
            for c in list {
                if !CHECKS.contains(&c.get_ref().as_str()) {
                    return Err(ctx.err(
                        c.span(),
                        format!(
                            "unknown check `{}` (expected one of {CHECKS:?})",
                            c.get_ref()
                        ),
                    ));
                }
                checks.push(c.get_ref().clone());
            }
        }
    }
    let diagnostics = Diagnostics {
        checks,
        quadrature: raw
            .diagnostics
            .quadrature
            .unwrap_or_else(|| extraction.quadrature.clone()),
        grid: raw
            .diagnostics
            .grid
            .unwrap_or_else(|| extraction.grid.clone()),
    };

    let atlas = match raw.atlas {
        Some(a) => {
            let span = ctx.section("atlas");
            if a.axis >= dim {
                return Err(ctx.err(span, format!("atlas axis {} out of range", a.axis)));
            }
            if a.charts == 0 || a.ks.is_empty() || a.ks.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ctx.err(
                    span,
                    "atlas needs at least one chart and nonempty increasing ks",
                ));
            }
            a.grid
                .validate()
                .map_err(|e| ctx.err(span, e.to_string()))?;
            a
        }
        None => AtlasConfig::default(),
    };

    let mut formats = Vec::new();
    match &raw.output.formats {
        None => formats.extend(FORMATS.iter().map(|s| s.to_string())),
        Some(list) => {
            for f in list {
                if !FORMATS.contains(&f.get_ref().as_str()) {
                    return Err(ctx.err(
                        f.span(),
                        format!(
                            "unknown format `{}` (expected one of {FORMATS:?})",
                            f.get_ref()
                        ),
                    ));
                }
                formats.push(f.get_ref().clone());
            }
        }
    }
    let output = Output {
        dir: PathBuf::from(raw.output.dir.unwrap_or_else(|| "out".into())),
        formats,
        snapshot_extent: raw.output.snapshot_extent.unwrap_or(1.0),
        snapshot_points: raw.output.snapshot_points.unwrap_or(65).max(2),
    };

    Ok(RunConfig {
        source: path.to_path_buf(),
        corpus,
        extraction,
        diagnostics,
        atlas,
        output,
    })
}
