//! Subcommand implementations. Each writes into the output directory and
//! returns the list of files it produced.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sobolev_profiles::atlas::{atlas_report, AtlasReport};
use sobolev_profiles::bubbles::{Corpus, Cutoff};
use sobolev_profiles::diagnostics::{
    ao_decay_curve, calibrate_c_hat, critical_exponent, dyadic_slab_profile, ledgers, noconc_test,
    EnergyRow, MassRow,
};
use sobolev_profiles::extraction::{full_decompose, DecompositionReport, ExtractionConfig};
use sobolev_profiles::fields::{grad_seminorm, lp_power, Field};
use sobolev_profiles::geometry::{geometry_suite, FrameConvention, GeometryCheck, ModelKind};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::output::{ensure_dir, line_plot, num, read_json, Series, Table, Written};

pub const MANIFEST: &str = "manifest.json";
pub const REPORT: &str = "report.json";
pub const ATLAS: &str = "atlas.json";
pub const VERIFY: &str = "verify.json";
pub const GEOMETRY_SAMPLES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub k: i32,
    pub file: String,
    /// `∫ |u_k|^{2*}`.
    pub mass: f64,
    /// `∫ |∇u_k|²`.
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub corpus: Corpus,
    pub cutoff: Cutoff,
    pub frame_convention: FrameConvention,
    pub extraction: ExtractionConfig,
    /// Snapshots sample the plane spanned by the first two normal coordinates at the origin.
    pub snapshot_extent: f64,
    pub snapshot_points: usize,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub samples: usize,
    pub geometry: Vec<GeometryCheck>,
    /// `(file, reloaded report equals the in-memory report and re-serializes identically)`.
    pub round_trips: Vec<(String, bool)>,
    pub passed: bool,
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    ensure_dir(&cfg.output.dir)?;
    Ok(&cfg.output.dir)
}

fn snapshot_extent(cfg: &RunConfig) -> f64 {
    let m = cfg.model();
    match m.kind {
        ModelKind::Sphere => cfg
            .output
            .snapshot_extent
            .min(0.9 * m.injectivity_radius() / 2f64.sqrt()),
        _ => cfg.output.snapshot_extent,
    }
}

fn snapshot(u: &Field, extent: f64, points: usize) -> Result<Table> {
    let m = u.model();
    let mut t = Table::new(&["x0", "x1", "value"]);
    for b in 0..points {
        for a in 0..points {
            let x0 = -extent + 2.0 * extent * a as f64 / (points - 1) as f64;
            let x1 = -extent + 2.0 * extent * b as f64 / (points - 1) as f64;
            let mut xi = vec![0.0; m.dim];
            xi[0] = x0;
            xi[1] = x1;
            let p = m.point_from_origin(&xi)?;
            t.push(vec![num(x0), num(x1), num(u.value(&p))]);
        }
    }
    Ok(t)
}

pub fn synthesize(cfg: &RunConfig, seed: u64) -> Result<Written> {
    let dir = out_dir(cfg)?;
    let mut w = Written::default();
    let u = cfg.corpus.sequence()?;
    let p = critical_exponent(cfg.model().dim);
    let q = &cfg.extraction.quadrature;
    let extent = snapshot_extent(cfg);
    let mut snaps = Vec::new();
    for &k in &cfg.extraction.k_eval {
        let f = u.at(k)?;
        let file = format!("snapshot_k{k}.csv");
        if cfg.output.wants("csv") {
            w.text(
                dir,
                &file,
                &snapshot(&f, extent, cfg.output.snapshot_points)?.render(),
            )?;
        }
        snaps.push(Snapshot {
            k,
            file,
            mass: lp_power(&f, p, q)?,
            energy: grad_seminorm(&f, q)?,
        });
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        corpus: cfg.corpus.clone(),
        cutoff: cfg.corpus.cutoff(),
        frame_convention: cfg.model().frame_convention,
        extraction: cfg.extraction.clone(),
        snapshot_extent: extent,
        snapshot_points: cfg.output.snapshot_points,
        snapshots: snaps,
    };
    w.json(dir, MANIFEST, &manifest)?;
    if cfg.output.wants("svg") {
        let series = vec![
            Series {
                label: "mass".into(),
                points: manifest
                    .snapshots
                    .iter()
                    .map(|s| (s.k as f64, s.mass))
                    .collect(),
            },
            Series {
                label: "gradient energy".into(),
                points: manifest
                    .snapshots
                    .iter()
                    .map(|s| (s.k as f64, s.energy))
                    .collect(),
            },
        ];
        w.text(
            dir,
            "corpus_norms.svg",
            &line_plot("Corpus norms", "k", "value", &series, false),
        )?;
    }
    Ok(w)
}

fn total(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a + b)
}

fn ledger_tables(energy: &[EnergyRow], mass: &[MassRow]) -> (Table, Table) {
    let mut e = Table::new(&[
        "k",
        "bubbles",
        "shifts",
        "weak_limit",
        "lhs",
        "input_gradient",
        "input_l2",
        "rhs",
        "slack",
    ]);
    for r in energy {
        e.push(vec![
            r.k.to_string(),
            num(total(&r.bubbles)),
            num(total(&r.shifts)),
            num(r.weak_limit),
            num(r.lhs),
            num(r.input_gradient),
            num(r.input_l2),
            num(r.rhs),
            num(r.slack),
        ]);
    }
    let mut m = Table::new(&[
        "k",
        "bubbles",
        "shifts",
        "weak_limit",
        "sum",
        "input",
        "ratio",
        "gap",
    ]);
    for r in mass {
        m.push(vec![
            r.k.to_string(),
            num(total(&r.bubbles)),
            num(total(&r.shifts)),
            num(r.weak_limit),
            num(r.sum),
            num(r.input),
            num(r.ratio),
            num(r.gap),
        ]);
    }
    (e, m)
}

fn write_ledgers(
    cfg: &RunConfig,
    dir: &Path,
    w: &mut Written,
    energy: &[EnergyRow],
    mass: &[MassRow],
) -> Result<()> {
    let (e, m) = ledger_tables(energy, mass);
    if cfg.output.wants("csv") {
        w.text(dir, "energy_ledger.csv", &e.render())?;
        w.text(dir, "mass_ledger.csv", &m.render())?;
    }
    if cfg.output.wants("svg") {
        let es = vec![
            Series {
                label: "profiles".into(),
                points: energy.iter().map(|r| (r.k as f64, r.lhs)).collect(),
            },
            Series {
                label: "input".into(),
                points: energy.iter().map(|r| (r.k as f64, r.rhs)).collect(),
            },
        ];
        w.text(
            dir,
            "energy_ledger.svg",
            &line_plot("Energy ledger", "k", "energy", &es, false),
        )?;
        let ms = vec![
            Series {
                label: "profiles".into(),
                points: mass.iter().map(|r| (r.k as f64, r.sum)).collect(),
            },
            Series {
                label: "input".into(),
                points: mass.iter().map(|r| (r.k as f64, r.input)).collect(),
            },
        ];
        w.text(
            dir,
            "mass_ledger.svg",
            &line_plot("Mass ledger", "k", "mass", &ms, false),
        )?;
    }
    Ok(())
}

pub fn decompose_report(cfg: &RunConfig) -> Result<DecompositionReport> {
    let u = cfg.corpus.sequence()?;
    Ok(full_decompose(&u, &cfg.extraction)?.report)
}

pub fn decompose(cfg: &RunConfig) -> Result<Written> {
    let dir = out_dir(cfg)?;
    let report = decompose_report(cfg)?;
    let mut w = Written::default();
    write_report(cfg, dir, &mut w, &report)?;
    Ok(w)
}

fn write_report(
    cfg: &RunConfig,
    dir: &Path,
    w: &mut Written,
    report: &DecompositionReport,
) -> Result<()> {
    w.json(dir, REPORT, report)?;
    if cfg.output.wants("csv") {
        let mut b = Table::new(&[
            "index",
            "slope",
            "offset",
            "center",
            "score",
            "profile_energy",
            "profile_mass",
            "stability",
        ]);
        for (n, x) in report.bubbles.iter().enumerate() {
            let c: Vec<String> = x.center().coords().iter().map(|v| num(*v)).collect();
            b.push(vec![
                n.to_string(),
                x.scale_path.slope.to_string(),
                x.scale_path.offset.to_string(),
                c.join(" "),
                num(x.score),
                num(x.profile_energy),
                num(x.profile_mass),
                num(x.stability),
            ]);
        }
        w.text(dir, "bubbles.csv", &b.render())?;
        let mut s = Table::new(&["index", "axis", "step", "energy", "l2", "mass", "stability"]);
        for (n, x) in report.shift_terms.iter().enumerate() {
            let c = &x.component;
            s.push(vec![
                n.to_string(),
                x.axis.to_string(),
                num(x.step),
                num(c.energy),
                num(c.l2),
                num(c.mass),
                num(c.stability),
            ]);
        }
        w.text(dir, "shifts.csv", &s.render())?;
        let mut h = Table::new(&["step", "residual_energy"]);
        for (n, v) in report.residual_history.iter().enumerate() {
            h.push(vec![n.to_string(), num(*v)]);
        }
        w.text(dir, "residual_history.csv", &h.render())?;
        let mut t = Table::new(&["p", "k", "input", "remainder"]);
        for (p, rows) in &report.input_norms {
            let rem = report.remainder_norms.get(p);
            for (i, kv) in rows.iter().enumerate() {
                let r = rem
                    .and_then(|r| r.get(i))
                    .map(|r| num(r.value))
                    .unwrap_or_default();
                t.push(vec![p.clone(), kv.k.to_string(), num(kv.value), r]);
            }
        }
        w.text(dir, "norms.csv", &t.render())?;
    }
    if cfg.output.wants("svg") {
        let h = vec![Series {
            label: "remainder energy".into(),
            points: report
                .residual_history
                .iter()
                .enumerate()
                .map(|(n, v)| (n as f64, *v))
                .collect(),
        }];
        w.text(
            dir,
            "residual_history.svg",
            &line_plot("Residual history", "subtraction", "energy", &h, true),
        )?;
        let mut s = Vec::new();
        for (p, rows) in &report.input_norms {
            s.push(Series {
                label: format!("input p={p}"),
                points: rows.iter().map(|r| (r.k as f64, r.value)).collect(),
            });
            if let Some(rem) = report.remainder_norms.get(p) {
                s.push(Series {
                    label: format!("remainder p={p}"),
                    points: rem.iter().map(|r| (r.k as f64, r.value)).collect(),
                });
            }
        }
        w.text(
            dir,
            "norms.svg",
            &line_plot("Input and remainder norms", "k", "norm", &s, true),
        )?;
    }
    write_ledgers(cfg, dir, w, &report.energy_ledger, &report.mass_ledger)
}

pub fn diagnose(cfg: &RunConfig, seed: u64) -> Result<Written> {
    let dir = out_dir(cfg)?;
    let mut w = Written::default();
    let d = &cfg.diagnostics;
    let csv = cfg.output.wants("csv");
    let svg = cfg.output.wants("svg");
    let model = cfg.model();
    let ks = &cfg.extraction.k_eval;
    let u = cfg.corpus.sequence()?;

    if d.wants("slabs") {
        let mut t = Table::new(&["k", "level", "mass"]);
        let mut sup = Vec::new();
        let mut tot = Vec::new();
        for &k in ks {
            let s = dyadic_slab_profile(&u.at(k)?, &d.quadrature)?;
            for (l, m) in s.levels.iter().zip(&s.masses) {
                t.push(vec![k.to_string(), l.to_string(), num(*m)]);
            }
            sup.push((k as f64, s.sup_mass));
            tot.push((k as f64, s.total));
        }
        if csv {
            w.text(dir, "slabs.csv", &t.render())?;
        }
        if svg {
            let s = vec![
                Series {
                    label: "sup slab mass".into(),
                    points: sup,
                },
                Series {
                    label: "total".into(),
                    points: tot,
                },
            ];
            w.text(
                dir,
                "slabs.svg",
                &line_plot("Dyadic slab masses", "k", "mass", &s, false),
            )?;
        }
    }

    if d.wants("ao") {
        let cut = cfg.corpus.cutoff();
        let mut t = Table::new(&["a", "b", "k", "h12_inner"]);
        let mut series = Vec::new();
        let bs = &cfg.corpus.bubbles;
        for a in 0..bs.len() {
            for b in a + 1..bs.len() {
                let curve = ao_decay_curve(model, &bs[a], &bs[b], &cut, ks, &d.quadrature)?;
                for (k, v) in ks.iter().zip(&curve) {
                    t.push(vec![a.to_string(), b.to_string(), k.to_string(), num(*v)]);
                }
                series.push(Series {
                    label: format!("({a},{b})"),
                    points: ks
                        .iter()
                        .zip(&curve)
                        .map(|(k, v)| (*k as f64, v.abs()))
                        .collect(),
                });
            }
        }
        if csv {
            w.text(dir, "ao.csv", &t.render())?;
        }
        if svg {
            w.text(
                dir,
                "ao.svg",
                &line_plot(
                    "Inner products of bubble pairs",
                    "k",
                    "|inner|",
                    &series,
                    true,
                ),
            )?;
        }
    }

    if d.wants("noconc") {
        let mut t = Table::new(&["bubble", "k", "max", "passes"]);
        let mut series = Vec::new();
        for (n, b) in cfg.corpus.bubbles.iter().enumerate() {
            let c = noconc_test(&u, &b.center, &b.scale, &d.grid, ks)?;
            for (k, v) in c.ks.iter().zip(&c.maxima) {
                t.push(vec![
                    n.to_string(),
                    k.to_string(),
                    num(*v),
                    c.passes.to_string(),
                ]);
            }
            series.push(Series {
                label: format!("bubble {n}"),
                points: c
                    .ks
                    .iter()
                    .zip(&c.maxima)
                    .map(|(k, v)| (*k as f64, *v))
                    .collect(),
            });
        }
        if csv {
            w.text(dir, "noconc.csv", &t.render())?;
        }
        if svg {
            w.text(
                dir,
                "noconc.svg",
                &line_plot(
                    "Rescaled maxima along bubble paths",
                    "k",
                    "max",
                    &series,
                    false,
                ),
            )?;
        }
    }

    if d.wants("vanishing") {
        let (a, b) = cfg.corpus.k_range;
        let fields = (a..=b)
            .map(|k| u.at(k))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if fields.len() >= 2 {
            let c = calibrate_c_hat(&fields, seed, &d.quadrature)?;
            let mut t = Table::new(&["k", "part", "ratio", "c_hat"]);
            let mut pts = Vec::new();
            for &i in &c.calibration {
                t.push(vec![
                    (a + i as i32).to_string(),
                    "calibration".into(),
                    String::new(),
                    num(c.c_hat),
                ]);
            }
            for (&i, r) in c.test.iter().zip(&c.test_ratios) {
                t.push(vec![
                    (a + i as i32).to_string(),
                    "test".into(),
                    num(*r),
                    num(c.c_hat),
                ]);
                pts.push(((a + i as i32) as f64, *r));
            }
            pts.sort_by(|x, y| x.0.total_cmp(&y.0));
            if csv {
                w.text(dir, "vanishing.csv", &t.render())?;
            }
            if svg {
                let s = vec![Series {
                    label: "test ratio".into(),
                    points: pts,
                }];
                w.text(
                    dir,
                    "vanishing.svg",
                    &line_plot("Slab inequality ratio", "k", "lhs / rhs", &s, false),
                )?;
            }
        }
    }

    if d.wants("ledgers") {
        let path = dir.join(REPORT);
        let report: DecompositionReport = if path.exists() {
            read_json(&path)?
        } else {
            let r = decompose_report(cfg)?;
            w.json(dir, REPORT, &r)?;
            r
        };
        let (e, m) = ledgers(&report, &u, &report.config.quadrature)?;
        let dw = dir.join("diagnose");
        ensure_dir(&dw)?;
        write_ledgers(cfg, &dw, &mut w, &e, &m)?;
    }
    Ok(w)
}

pub fn atlas_document(cfg: &RunConfig) -> Result<AtlasReport> {
    Ok(atlas_report(cfg.model(), &cfg.atlas)?)
}

pub fn atlas(cfg: &RunConfig) -> Result<Written> {
    let dir = out_dir(cfg)?;
    let rep = atlas_document(cfg)?;
    let mut w = Written::default();
    w.json(dir, ATLAS, &rep)?;
    let ks = &rep.config.ks;
    if cfg.output.wants("csv") {
        let mut p = Table::new(&[
            "i",
            "j",
            "k",
            "gap",
            "residual",
            "cauchy_gap",
            "max_origin_defect",
        ]);
        for r in &rep.pairs {
            for (n, k) in ks.iter().enumerate() {
                let gap = if n == 0 {
                    String::new()
                } else {
                    num(r.gaps[n - 1])
                };
                p.push(vec![
                    r.i.to_string(),
                    r.j.to_string(),
                    k.to_string(),
                    gap,
                    num(r.residuals[n]),
                    num(r.cauchy_gap),
                    num(r.max_origin_defect),
                ]);
            }
        }
        w.text(dir, "atlas_pairs.csv", &p.render())?;
        let mut c = Table::new(&[
            "i",
            "stability_gap",
            "origin_error",
            "normal_coords_error",
            "min_eigenvalue",
        ]);
        for r in &rep.charts {
            c.push(vec![
                r.i.to_string(),
                num(r.stability_gap),
                num(r.origin_error),
                num(r.normal_coords_error),
                num(r.min_eigenvalue),
            ]);
        }
        w.text(dir, "atlas_charts.csv", &c.render())?;
        let mut y = Table::new(&["l", "j", "i", "defect", "tolerance"]);
        for r in &rep.cocycles {
            y.push(vec![
                r.l.to_string(),
                r.j.to_string(),
                r.i.to_string(),
                num(r.defect),
                num(r.tolerance),
            ]);
        }
        w.text(dir, "atlas_cocycles.csv", &y.render())?;
    }
    if cfg.output.wants("svg") {
        let off: Vec<_> = rep.pairs.iter().filter(|r| r.i != r.j).collect();
        let gaps: Vec<Series> = off
            .iter()
            .map(|r| Series {
                label: format!("({},{})", r.i, r.j),
                points: ks
                    .iter()
                    .skip(1)
                    .zip(&r.gaps)
                    .map(|(k, g)| (*k as f64, *g))
                    .collect(),
            })
            .collect();
        w.text(
            dir,
            "atlas_gaps.svg",
            &line_plot("Transition gaps", "k", "gap", &gaps, true),
        )?;
        let res: Vec<Series> = off
            .iter()
            .map(|r| Series {
                label: format!("({},{})", r.i, r.j),
                points: ks
                    .iter()
                    .zip(&r.residuals)
                    .map(|(k, g)| (*k as f64, *g))
                    .collect(),
            })
            .collect();
        w.text(
            dir,
            "atlas_residuals.svg",
            &line_plot("Compatibility residuals", "k", "residual", &res, true),
        )?;
    }
    Ok(w)
}

fn round_trip<T>(path: &Path) -> Result<bool>
where
    T: Serialize + serde::de::DeserializeOwned + PartialEq,
{
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let value: T = serde_json::from_str(&text)?;
    let again = serde_json::to_string_pretty(&value)? + "\n";
    let reloaded: T = serde_json::from_str(&again)?;
    Ok(again == text && reloaded == value)
}

/// Geometry self-checks plus round trips of every report present in the output directory.
pub fn verify(cfg: &RunConfig, seed: u64) -> Result<(Written, VerifyReport)> {
    let dir = out_dir(cfg)?;
    let geometry = geometry_suite(cfg.model(), GEOMETRY_SAMPLES, seed)?;
    let mut round_trips = Vec::new();
    for name in [MANIFEST, REPORT, ATLAS] {
        let p = dir.join(name);
        if !p.exists() {
            continue;
        }
        let ok = match name {
            MANIFEST => round_trip::<Manifest>(&p)?,
            REPORT => round_trip::<DecompositionReport>(&p)?,
            _ => round_trip::<AtlasReport>(&p)?,
        };
        round_trips.push((name.to_string(), ok));
    }
    let passed = geometry.iter().all(|c| c.passed) && round_trips.iter().all(|r| r.1);
    let rep = VerifyReport {
        seed,
        samples: GEOMETRY_SAMPLES,
        geometry,
        round_trips,
        passed,
    };
    let mut w = Written::default();
    w.json(dir, VERIFY, &rep)?;
    Ok((w, rep))
}
