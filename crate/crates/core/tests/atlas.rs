use proptest::prelude::*;
use sobolev_profiles::atlas::{
    atlas_report, cocycle_defect, compatibility_residual, invariant_net, limit_metric,
    trailing_family, transition_sequence, AtlasConfig, AtlasGrid, TIE_BREAKING,
};
use sobolev_profiles::error::Error;
use sobolev_profiles::geometry::{ManifoldModel, Point};

fn small() -> AtlasGrid {
    AtlasGrid {
        rho: 0.2,
        subdivisions: 8,
    }
}

fn cfg(ks: Vec<i32>) -> AtlasConfig {
    AtlasConfig {
        grid: small(),
        ks,
        ..AtlasConfig::default()
    }
}

#[test]
fn grid_layout() {
    let g = small();
    assert_eq!(g.points(), 21);
    assert_eq!(g.len(3), 21 * 21 * 21);
    assert!((g.half_width() - 0.25).abs() < 1e-15);
    assert_eq!(g.node(3, 0), vec![-0.25; 3]);
    let mid = (g.len(3) - 1) / 2;
    assert!(g.node(3, mid).iter().all(|v| v.abs() < 1e-15));
    assert!(AtlasGrid {
        rho: 0.2,
        subdivisions: 1
    }
    .validate()
    .is_err());
    assert!(AtlasGrid {
        rho: 0.0,
        subdivisions: 8
    }
    .validate()
    .is_err());
}

#[test]
fn euclidean_atlas_is_exact() {
    let m = ManifoldModel::euclidean(3).unwrap();
    let r = atlas_report(&m, &cfg(vec![4, 6, 8, 10])).unwrap();
    assert_eq!(r.tie_breaking, TIE_BREAKING);
    assert_eq!(r.pairs.len(), 16);
    for p in &r.pairs {
        assert!(p.residuals.iter().all(|v| *v <= 1e-8), "{p:?}");
        assert!(p.gaps.iter().all(|v| *v <= 1e-14), "{p:?}");
        assert!(p.max_origin_defect <= 1e-14);
        if p.i == p.j {
            assert!(p.residuals.iter().all(|v| *v == 0.0));
        }
    }
    for c in &r.charts {
        assert!(
            c.origin_error <= 1e-8 && c.normal_coords_error <= 1e-8,
            "{c:?}"
        );
        assert!((c.min_eigenvalue - 1.0).abs() <= 1e-8);
    }
    assert!(!r.cocycles.is_empty());
    for c in &r.cocycles {
        assert!(c.defect <= 1e-12, "{c:?}");
    }
}

#[test]
fn euclidean_transitions_are_translations() {
    let m = ManifoldModel::euclidean(3).unwrap();
    let net = invariant_net(&m, 0, 0.1, 0.2, (0, 14), 0.4).unwrap();
    let ks = [4, 10];
    let path: Vec<Point> = ks
        .iter()
        .map(|&k| Point(vec![0.1 * k as f64, 0.0, 0.0]))
        .collect();
    let fam = trailing_family(&m, &net, &path, &ks).unwrap();
    let t = transition_sequence(&m, &fam, 0, 2, &small()).unwrap();
    let (yi, yj) = (fam.point(1, 0).unwrap(), fam.point(1, 2).unwrap());
    let g = small();
    for node in (0..g.len(3)).step_by(97) {
        let xi = g.node(3, node);
        let s = &t.limit_samples()[node * 3..node * 3 + 3];
        if !g.inside(&xi) {
            continue;
        }
        for a in 0..3 {
            assert!((s[a] - (xi[a] + yj.0[a] - yi.0[a])).abs() < 1e-14);
        }
    }
}

#[test]
fn hyperbolic_gaps_decay_at_the_translation_rate() {
    let m = ManifoldModel::hyperbolic(3).unwrap();
    let ks: Vec<i32> = (1..=12).map(|k| 4 * k).collect();
    let r = atlas_report(
        &m,
        &AtlasConfig {
            grid: AtlasGrid {
                rho: 0.2,
                subdivisions: 4,
            },
            ks,
            ..AtlasConfig::default()
        },
    )
    .unwrap();
    let rate = (-0.4f64).exp();
    let mut off_axis = 0;
    for p in &r.pairs {
        let top = p.gaps.iter().cloned().fold(0.0, f64::max);
        if top < 1e-9 {
            // charts on the translation axis move rigidly
            continue;
        }
        off_axis += 1;
        for w in p.gaps.windows(2) {
            assert!(w[1] < w[0], "{p:?}");
        }
        let last = p.gaps[p.gaps.len() - 1] / p.gaps[p.gaps.len() - 2];
        assert!((last / rate - 1.0).abs() < 0.05, "ratio {last} vs {rate}");
        assert_eq!(p.cauchy_gap, p.gaps[p.gaps.len() - 1]);
    }
    assert!(off_axis >= 4);
}

#[test]
fn hyperbolic_charts_match_normal_coordinates() {
    let m = ManifoldModel::hyperbolic(3).unwrap();
    let r = atlas_report(&m, &cfg(vec![4, 6, 8, 10])).unwrap();
    for c in &r.charts {
        assert!(c.origin_error <= 1e-8, "{c:?}");
        assert!(c.normal_coords_error <= 1e-8, "{c:?}");
        assert!(c.stability_gap <= 1e-8);
        assert!(c.min_eigenvalue >= 1.0 - 1e-8);
    }
    for p in &r.pairs {
        assert!(p.max_origin_defect <= 1e-12);
        if p.i == p.j {
            assert_eq!(p.residuals, vec![0.0; 4]);
        }
        // central differences of spacing 0.025 on the transition
        assert!(p.residuals.iter().all(|v| *v <= 1e-5), "{p:?}");
    }
    for c in &r.cocycles {
        assert!(c.defect <= c.tolerance, "{c:?}");
    }
}

#[test]
fn transitions_preserve_distance_to_the_target_center() {
    for m in [
        ManifoldModel::hyperbolic(3).unwrap(),
        ManifoldModel::sphere(3).unwrap(),
    ] {
        let net = invariant_net(&m, 0, 0.1, 0.2, (0, 14), 0.4).unwrap();
        let ks = [6, 10];
        let path: Vec<Point> = ks
            .iter()
            .map(|&k| m.translation(0, 0.1 * k as f64).apply(&m.origin()))
            .collect();
        let fam = trailing_family(&m, &net, &path, &ks).unwrap();
        let g = small();
        for (i, j) in [(0, 1), (0, 3), (2, 1)] {
            let t = transition_sequence(&m, &fam, i, j, &g).unwrap();
            let (yi, yj) = (fam.point(1, i).unwrap(), fam.point(1, j).unwrap());
            let cj = m.chart_at(yj);
            for node in (0..g.len(3)).step_by(31) {
                let xi = g.node(3, node);
                if !g.inside(&xi) {
                    continue;
                }
                let s = &t.limit_samples()[node * 3..node * 3 + 3];
                let d = m.distance(yi, &cj.exp(&xi).unwrap());
                let r = s.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((r - d).abs() < 1e-12, "{r} vs {d}");
            }
            // origin defect |ψ(0)| - d(y_i, y_j)
            assert!(t.origin_defects.iter().all(|v| v.abs() < 1e-12));
        }
    }
}

#[test]
fn residual_api_checks_orientation() {
    let m = ManifoldModel::hyperbolic(3).unwrap();
    let net = invariant_net(&m, 0, 0.1, 0.2, (0, 14), 0.4).unwrap();
    let ks = [8, 10];
    let path: Vec<Point> = ks
        .iter()
        .map(|&k| m.translation(0, 0.1 * k as f64).apply(&m.origin()))
        .collect();
    let fam = trailing_family(&m, &net, &path, &ks).unwrap();
    let g = small();
    let (g0, g1) = (
        limit_metric(&m, &fam, 0, &g).unwrap(),
        limit_metric(&m, &fam, 1, &g).unwrap(),
    );
    let t01 = transition_sequence(&m, &fam, 0, 1, &g).unwrap();
    assert!(compatibility_residual(&g1, &g0, &t01).unwrap() <= 1e-5);
    assert!(matches!(
        compatibility_residual(&g0, &g1, &t01),
        Err(Error::Argument(_))
    ));
    let t10 = transition_sequence(&m, &fam, 1, 0, &g).unwrap();
    let t00 = transition_sequence(&m, &fam, 0, 0, &g).unwrap();
    // ψ_00 ∘ ψ_01 = ψ_01
    assert!(cocycle_defect(&t01, &t00, &t01, 3).unwrap() <= 1e-12);
    assert!(cocycle_defect(&t01, &t10, &t00, 3).is_err());
}

#[test]
fn distant_charts_do_not_overlap() {
    let m = ManifoldModel::euclidean(3).unwrap();
    let net = sobolev_profiles::discretization::Discretization {
        rho: 0.2,
        points: vec![Point(vec![0.0; 3]), Point(vec![1.0, 0.0, 0.0])],
        region: sobolev_profiles::discretization::Region {
            center: Point(vec![0.0; 3]),
            radius: 2.0,
        },
    };
    let fam = trailing_family(&m, &net, &[Point(vec![0.0; 3])], &[4]).unwrap();
    assert!(matches!(
        transition_sequence(&m, &fam, 0, 1, &small()),
        Err(Error::Domain(_))
    ));
    assert!(fam.point(0, 2).is_err() && fam.point(1, 0).is_err());
    assert!(trailing_family(&m, &net, &[], &[4]).is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    let m = ManifoldModel::euclidean(3).unwrap();
    for c in [
        AtlasConfig {
            charts: 0,
            ..cfg(vec![4])
        },
        AtlasConfig {
            charts: 13,
            ..cfg(vec![4])
        },
        cfg(vec![]),
        cfg(vec![6, 4]),
        AtlasConfig {
            grid: AtlasGrid {
                rho: 0.2,
                subdivisions: 1,
            },
            ..cfg(vec![4])
        },
    ] {
        assert!(atlas_report(&m, &c).is_err());
    }
}

#[test]
fn invariant_net_is_translation_invariant() {
    let m = ManifoldModel::hyperbolic(3).unwrap();
    let net = invariant_net(&m, 0, 0.1, 0.2, (-3, 3), 0.4).unwrap();
    let t = m.translation(0, 0.1);
    let slice = net.points.len() / 7;
    // inner slices map onto the next slice
    for p in &net.points[..6 * slice] {
        let q = t.apply(p);
        assert!(net.points.iter().any(|r| m.distance(r, &q) < 1e-12));
    }
    assert!(invariant_net(&m, 3, 0.1, 0.2, (0, 1), 0.4).is_err());
    assert!(invariant_net(&m, 0, 0.1, 0.2, (2, 1), 0.4).is_err());
}

fn sort_oracle(m: &ManifoldModel, pts: &[Point], base: &Point) -> Vec<usize> {
    let key = |i: usize| (m.distance(&pts[i], base) * 1e9).round() as i64;
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    idx.sort_by_key(|&i| (key(i), i));
    idx
}

#[test]
fn trailing_family_matches_sort_oracle_with_ties() {
    let m = ManifoldModel::hyperbolic(3).unwrap();
    let net = invariant_net(&m, 0, 0.1, 0.2, (0, 14), 0.4).unwrap();
    let ks = [4, 6, 8, 10];
    let path: Vec<Point> = ks
        .iter()
        .map(|&k| m.translation(0, 0.1 * k as f64).apply(&m.origin()))
        .collect();
    let fam = trailing_family(&m, &net, &path, &ks).unwrap();
    for (n, b) in path.iter().enumerate() {
        assert_eq!(fam.orderings[n].order, sort_oracle(&m, &net.points, b));
    }
    // the nearest point is the base itself
    assert!(m.distance(fam.point(0, 0).unwrap(), &path[0]) < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_family_orderings_match_oracle(seed in 0u64..1000, bx in -0.5f64..0.5, by in -0.5f64..0.5) {
        use rand::{Rng, SeedableRng};
        let m = ManifoldModel::hyperbolic(3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Point> = (0..30)
            .map(|_| m.point_from_origin(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0]).unwrap())
            .collect();
        let net = sobolev_profiles::discretization::Discretization {
            rho: 0.5,
            points: pts.clone(),
            region: sobolev_profiles::discretization::Region { center: m.origin(), radius: 2.0 },
        };
        let base = m.point_from_origin(&[bx, by, 0.0]).unwrap();
        let fam = trailing_family(&m, &net, &[base.clone()], &[0]).unwrap();
        prop_assert_eq!(&fam.orderings[0].order, &sort_oracle(&m, &pts, &base));
    }
}
