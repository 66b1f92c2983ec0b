use std::path::Path;

use sobolev_profiles::bubbles::CenterPath;
use sobolev_profiles::geometry::ModelKind;
use sobolev_profiles_cli::config::parse;
use sobolev_profiles_cli::CliError;

fn line_of(text: &str) -> (usize, String) {
    match parse(Path::new("run.toml"), text) {
        Err(CliError::Config { line, message, .. }) => (line, message),
        other => panic!("expected a configuration error, got {other:?}"),
    }
}

#[test]
fn minimal_config_uses_defaults() {
    let cfg = parse(Path::new("run.toml"), "[manifold]\nkind = \"hyperbolic\"\n").unwrap();
    assert_eq!(cfg.model().kind, ModelKind::Hyperbolic);
    assert_eq!(cfg.model().dim, 3);
    assert_eq!(cfg.model().curvature, -1.0);
    assert_eq!(cfg.extraction.k_eval, vec![4, 6, 8, 10]);
    assert_eq!(cfg.corpus.k_range, (4, 10));
    assert!(cfg.corpus.bubbles.is_empty());
    assert_eq!(cfg.output.formats, vec!["json", "csv", "svg"]);
}

#[test]
fn bubble_block_maps_to_spec() {
    let text = r#"
[manifold]
kind = "euclidean"

[corpus]
k_eval = [3, 5]
k_range = [2, 6]

[[corpus.bubbles]]
profile = "aubin_talenti"
support = 2.0
center = [0.1, 0.2, 0.3]
slope = 2
offset = -1
weight = 0.5
drift = { axis = 1, step = 0.25 }
"#;
    let cfg = parse(Path::new("run.toml"), text).unwrap();
    assert_eq!(cfg.extraction.k_eval, vec![3, 5]);
    assert_eq!(cfg.corpus.k_range, (2, 6));
    let b = &cfg.corpus.bubbles[0];
    assert_eq!(b.scale.at(3), 5);
    assert_eq!(b.amplitude, 0.5);
    match &b.center {
        CenterPath::Drift { start, axis, step } => {
            assert_eq!(start.coords(), &[0.1, 0.2, 0.3]);
            assert_eq!((*axis, *step), (1, 0.25));
        }
        c => panic!("unexpected path {c:?}"),
    }
}

#[test]
fn unknown_profile_is_anchored() {
    let (line, msg) =
        line_of("[manifold]\nkind = \"euclidean\"\n\n[[corpus.bubbles]]\nprofile = \"gaussian\"\n");
    assert_eq!(line, 5);
    assert!(msg.contains("gaussian"), "{msg}");
}

#[test]
fn unknown_kind_is_anchored() {
    let (line, msg) = line_of("\n[manifold]\nkind = \"torus\"\n");
    assert_eq!(line, 3);
    assert!(msg.contains("torus"));
}

#[test]
fn decreasing_k_eval_is_anchored() {
    let (line, msg) = line_of("[manifold]\nkind = \"euclidean\"\n[corpus]\nk_eval = [4, 4]\n");
    assert_eq!(line, 4);
    assert!(msg.contains("increasing"));
}

#[test]
fn empty_k_eval_is_rejected() {
    let (line, _) = line_of("[manifold]\nkind = \"euclidean\"\n[corpus]\nk_eval = []\n");
    assert_eq!(line, 4);
}

#[test]
fn k_range_must_cover_k_eval() {
    let (line, _) = line_of("[manifold]\nkind = \"euclidean\"\n[corpus]\nk_range = [5, 10]\n");
    assert_eq!(line, 4);
}

#[test]
fn unknown_key_is_anchored() {
    let (line, msg) = line_of("[manifold]\nkind = \"euclidean\"\n\n[output]\ndirectory = \"x\"\n");
    assert_eq!(line, 5);
    assert!(msg.contains("directory"));
}

#[test]
fn syntax_error_is_anchored() {
    let (line, _) = line_of("[manifold]\nkind = \"euclidean\"\ndim = = 3\n");
    assert_eq!(line, 3);
}

#[test]
fn invalid_extraction_points_at_section() {
    let (line, msg) = line_of("[manifold]\nkind = \"euclidean\"\n\n\n[extraction]\ngamma = 2.0\n");
    assert_eq!(line, 5);
    assert!(msg.contains("gamma"));
}

#[test]
fn center_dimension_is_checked() {
    let (line, msg) = line_of("[manifold]\nkind = \"euclidean\"\n[[corpus.backgrounds]]\nprofile = \"bump\"\ncenter = [1.0, 2.0]\n");
    assert_eq!(line, 5);
    assert!(msg.contains("3 coordinates"));
}

#[test]
fn chart_radius_bound_is_checked() {
    let (line, _) = line_of("[manifold]\nkind = \"sphere\"\nchart_radius = 1.0\n");
    assert_eq!(line, 1);
}

#[test]
fn unknown_check_and_format_are_anchored() {
    let (line, _) = line_of(
        "[manifold]\nkind = \"euclidean\"\n[diagnostics]\nchecks = [\"slabs\",\n  \"fourier\"]\n",
    );
    assert_eq!(line, 5);
    let (line, _) = line_of("[manifold]\nkind = \"euclidean\"\n[output]\nformats = [\"png\"]\n");
    assert_eq!(line, 4);
}

#[test]
fn shifts_need_non_compact_model() {
    let (line, _) = line_of("[manifold]\nkind = \"sphere\"\n[[corpus.shifts]]\nprofile = \"bump\"\naxis = 0\nstep = 0.5\n");
    assert_eq!(line, 3);
}
