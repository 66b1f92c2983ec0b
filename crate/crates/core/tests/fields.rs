use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sobolev_profiles::bubbles::{
    blob_field, synth_bubble, BlobSpec, BubbleSpec, CenterPath, Cutoff, Profile, ScalePath,
};
use sobolev_profiles::fields::quadrature::{
    grad_seminorm, h12_inner, inner_parts, lp_norm, lp_power, rescaled_pullback, Partition,
    QuadratureSpec, RefGrid,
};
use sobolev_profiles::fields::{gradient_check, Field, SupportBall, Term};
use sobolev_profiles::geometry::{ManifoldModel, Point};

fn spec() -> QuadratureSpec {
    QuadratureSpec::default()
}

/// Finer hint-chart cells, needed to resolve the cutoff annulus of truncated profiles.
fn fine_spec() -> QuadratureSpec {
    QuadratureSpec {
        fine_cells: 8,
        ..QuadratureSpec::default()
    }
}

/// Composite Simpson on `[0, b]`.
fn simpson(f: impl Fn(f64) -> f64, b: f64, n: usize) -> f64 {
    let h = b / n as f64;
    let mut s = f(0.0) + f(b);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn bump_radial(r: f64, s: f64, a: f64) -> (f64, f64) {
    let q = r * r / (s * s);
    if q >= 1.0 {
        return (0.0, 0.0);
    }
    let v = a * (-1.0 / (1.0 - q)).exp();
    (v, -v / ((1.0 - q) * (1.0 - q)) * 2.0 * r / (s * s))
}

fn euclidean_bump(s: f64, a: f64) -> Field {
    Field::profile(3, Profile::bump(s, a)).unwrap()
}

#[test]
fn radial_bump_lp_matches_radial_oracle() {
    for (s, a, p) in [(1.0, 1.0, 6.0), (2.0, 0.7, 2.0), (0.5, 3.0, 3.0)] {
        let u = euclidean_bump(s, a);
        let oracle = 4.0 * PI * simpson(|r| r * r * bump_radial(r, s, a).0.powf(p), s, 20_000);
        let got = lp_power(&u, p, &spec()).unwrap();
        assert!(
            (got - oracle).abs() <= 1e-6 * oracle,
            "s={s} p={p}: {got} vs {oracle}"
        );
        let norm = lp_norm(&u, p, &spec()).unwrap();
        assert!((norm - oracle.powf(1.0 / p)).abs() <= 1e-6 * norm);
    }
}

#[test]
fn radial_bump_energy_matches_radial_oracle() {
    let (s, a) = (1.3, 0.8);
    let u = euclidean_bump(s, a);
    let oracle = 4.0 * PI * simpson(|r| r * r * bump_radial(r, s, a).1.powi(2), s, 20_000);
    let got = grad_seminorm(&u, &spec()).unwrap();
    assert!((got - oracle).abs() <= 1e-4 * oracle, "{got} vs {oracle}");
    let fine = grad_seminorm(&u, &QuadratureSpec::with_order(16)).unwrap();
    assert!((fine - oracle).abs() <= 1e-6 * oracle, "{fine} vs {oracle}");
}

#[test]
fn zero_fields_have_zero_norms() {
    let m = ManifoldModel::hyperbolic(3).unwrap();
    let z = Field::zero(&m);
    assert_eq!(lp_norm(&z, 6.0, &spec()).unwrap(), 0.0);
    assert_eq!(grad_seminorm(&z, &spec()).unwrap(), 0.0);
    let u = blob_field(
        &m,
        &BlobSpec {
            profile: Profile::bump(1.0, 1.0),
            center: m.origin(),
            scale: 0.5,
        },
    )
    .unwrap();
    let scaled = Field::zero(&m).plus(0.0, &u);
    assert_eq!(lp_norm(&scaled, 6.0, &spec()).unwrap(), 0.0);
    assert_eq!(h12_inner(&z, &u, &spec()).unwrap(), 0.0);
    assert!(lp_power(&u, 0.5, &spec()).is_err());
}

#[test]
fn critical_norms_are_scale_invariant_in_euclidean_space() {
    let m = ManifoldModel::euclidean(3).unwrap();
    let prof = Arc::new(euclidean_bump(1.0, 1.0));
    let c = Point(vec![0.3, -0.2, 0.1]);
    let at = |j: i32| {
        let t = 2f64.powi(-j);
        let term = Field::scaled(&m, &c, t, t.powf(-0.5), None, prof.clone()).unwrap();
        Field::new(&m, vec![(1.0, term)])
    };
    let (l0, g0) = (
        lp_norm(&at(0), 6.0, &spec()).unwrap(),
        grad_seminorm(&at(0), &spec()).unwrap(),
    );
    for j in [1, 3, 6, 10] {
        let u = at(j);
        let (l, g) = (
            lp_norm(&u, 6.0, &spec()).unwrap(),
            grad_seminorm(&u, &spec()).unwrap(),
        );
        assert!((l - l0).abs() <= 1e-10 * l0, "j={j}: {l} vs {l0}");
        assert!((g - g0).abs() <= 1e-10 * g0, "j={j}: {g} vs {g0}");
    }
}

#[test]
fn h12_inner_basics() {
    let m = ManifoldModel::euclidean(3).unwrap();
    let a = blob_field(
        &m,
        &BlobSpec {
            profile: Profile::bump(1.0, 1.0),
            center: Point(vec![-1.5, 0.0, 0.0]),
            scale: 1.0,
        },
    )
    .unwrap();
    let b = blob_field(
        &m,
        &BlobSpec {
            profile: Profile::bump(1.0, 1.0),
            center: Point(vec![1.5, 0.0, 0.0]),
            scale: 1.0,
        },
    )
    .unwrap();
    assert_eq!(h12_inner(&a, &b, &spec()).unwrap(), 0.0);
    let aa = h12_inner(&a, &a, &spec()).unwrap();
    let (g, l) = inner_parts(&a, &a, &spec()).unwrap();
    assert!(aa > 0.0);
    assert_eq!(aa, g + l);
    assert!((g - grad_seminorm(&a, &spec()).unwrap()).abs() <= 1e-12 * g);
    assert!((l - lp_power(&a, 2.0, &spec()).unwrap()).abs() <= 1e-12 * l);
}

/// Tensor Gauss-Legendre over a cube, with its own nodes.
fn cube_oracle(f: impl Fn(&[f64]) -> f64, half: f64, cells: usize, order: usize) -> f64 {
    let (x, w) = gl(order);
    let h = 2.0 * half / cells as f64;
    let mut nodes = Vec::new();
    for c in 0..cells {
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push((-half + h * (c as f64 + 0.5 * (xi + 1.0)), 0.5 * h * wi));
        }
    }
    let mut total = 0.0;
    for (a, wa) in &nodes {
        for (b, wb) in &nodes {
            let mut row = 0.0;
            for (c, wc) in &nodes {
                row += wc * f(&[*a, *b, *c]);
            }
            total += wa * wb * row;
        }
    }
    total
}

/// Gauss-Legendre nodes by Newton iteration on the Legendre recurrence.
fn gl(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
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

#[test]
fn overlapping_pair_matches_dense_grid_oracle() {
    let p = Profile::bump(1.0, 1.0);
    let q = Profile::affine(Profile::aubin_talenti(1.5, 0.8), vec![-0.4, 0.1, 0.0], 1.0);
    let u = Field::profile(3, p.clone()).unwrap();
    let v = Field::profile(3, q.clone()).unwrap();
    let got = h12_inner(
        &u,
        &v,
        &QuadratureSpec {
            order: 12,
            ..fine_spec()
        },
    )
    .unwrap();
    let oracle = cube_oracle(
        |x| {
            let (a, ga) = p.value_grad(x);
            let (b, gb) = q.value_grad(x);
            a * b + ga.iter().zip(&gb).map(|(s, t)| s * t).sum::<f64>()
        },
        1.0,
        16,
        10,
    );
    assert!(
        (got - oracle).abs() <= 1e-6 * oracle.abs(),
        "{got} vs {oracle}"
    );
}

#[test]
fn doubling_order_changes_norms_below_tolerance() {
    let m = ManifoldModel::hyperbolic(3).unwrap();
    let cut = Cutoff { r: m.chart_radius };
    let bubble = BubbleSpec {
        profile: Profile::bump(1.0, 1.0),
        center: CenterPath::Fixed {
            point: m.point_from_origin(&[0.2, 0.0, 0.0]).unwrap(),
        },
        scale: ScalePath {
            slope: 1,
            offset: 0,
        },
        amplitude: 1.0,
    };
    let blob = blob_field(
        &m,
        &BlobSpec {
            profile: Profile::bump(1.0, 0.5),
            center: m.origin(),
            scale: 0.8,
        },
    )
    .unwrap();
    let truncated = blob_field(
        &m,
        &BlobSpec {
            profile: Profile::aubin_talenti(1.0, 0.5),
            center: m.origin(),
            scale: 0.8,
        },
    )
    .unwrap();
    let runs = [
        (synth_bubble(&m, &bubble, &cut, 6).unwrap(), spec()),
        (blob.clone(), spec()),
        (
            blob.plus(1.0, &synth_bubble(&m, &bubble, &cut, 4).unwrap()),
            spec(),
        ),
        (truncated, fine_spec()),
    ];
    for (u, lo) in &runs {
        let hi = QuadratureSpec {
            order: 2 * lo.order,
            ..*lo
        };
        let (u, lo) = (u, *lo);
        for p in [2.0, 3.0, 6.0] {
            let (a, b) = (lp_norm(u, p, &lo).unwrap(), lp_norm(u, p, &hi).unwrap());
            assert!((a - b).abs() < 1e-6 * b, "p={p}: {a} vs {b}");
        }
        let (a, b) = (
            h12_inner(u, u, &lo).unwrap().sqrt(),
            h12_inner(u, u, &hi).unwrap().sqrt(),
        );
        println!(
            "H12 norm change under order doubling: {:.2e}",
            (a - b).abs() / b
        );
    }
}

#[test]
fn chart_and_manifold_norms_are_comparable() {
    let m = ManifoldModel::hyperbolic(3).unwrap();
    let a = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (x, w) = gl(6);
    let cells = 4;
    let h = 2.0 * a / cells as f64;
    let axis: Vec<(f64, f64)> = (0..cells)
        .flat_map(|c| {
            x.iter()
                .zip(&w)
                .map(move |(xi, wi)| (-a + h * (c as f64 + 0.5 * (xi + 1.0)), 0.5 * h * wi))
        })
        .collect();
    let bound = m.sn_ratio(a).powi(2);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..100 {
        let c: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let center = m.point_from_origin(&c).unwrap();
        let chart = m.chart_at(&center);
        let inner = chart.exp(&[0.3, -0.2, 0.1]).unwrap();
        let u = blob_field(
            &m,
            &BlobSpec {
                profile: Profile::bump(1.0, 1.0),
                center: inner,
                scale: 0.5,
            },
        )
        .unwrap();
        let manifold = lp_power(&u, 3.0, &spec()).unwrap();
        let mut coord = 0.0;
        for (p, wp) in &axis {
            for (q, wq) in &axis {
                for (r, wr) in &axis {
                    if p * p + q * q + r * r < a * a {
                        coord += wp
                            * wq
                            * wr
                            * u.value(&chart.exp(&[*p, *q, *r]).unwrap()).abs().powi(3);
                    }
                }
            }
        }
        let ratio = manifold / coord;
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    println!("chart/manifold L^3 ratio over 100 centers: [{lo:.6}, {hi:.6}], bound {bound:.6}");
    assert!(lo >= 1.0 / bound && hi <= bound, "[{lo}, {hi}]");
    assert!(hi - lo < 1e-3);
}

#[test]
fn pullback_at_level_zero_is_normal_coordinates() {
    let m = ManifoldModel::euclidean(3).unwrap();
    let y = Point(vec![0.5, -0.25, 1.0]);
    let u = blob_field(
        &m,
        &BlobSpec {
            profile: Profile::aubin_talenti(1.0, 1.0),
            center: y.clone(),
            scale: 0.7,
        },
    )
    .unwrap();
    let grid = RefGrid {
        radius: 1.0,
        points: 9,
    };
    let s = rescaled_pullback(&u, &y, 0, &grid).unwrap();
    for (c, v) in grid.coords(3).iter().zip(&s) {
        let x = Point(y.0.iter().zip(c).map(|(a, b)| a + b).collect());
        assert!((v - u.value(&x)).abs() <= 1e-14, "{c:?}");
    }
    let z = rescaled_pullback(&Field::zero(&m), &y, 5, &grid).unwrap();
    assert!(z.iter().all(|v| *v == 0.0));
}

#[test]
fn pullback_of_bubble_recovers_profile() {
    let m = ManifoldModel::hyperbolic(3).unwrap();
    let cut = Cutoff { r: m.chart_radius };
    let w = Profile::aubin_talenti(8.0, 1.0);
    let y = m.point_from_origin(&[0.4, 0.1, -0.3]).unwrap();
    let grid = RefGrid::default();
    let coords = grid.coords(3);
    for k in [4, 6, 8, 10] {
        let b = BubbleSpec {
            profile: w.clone(),
            center: CenterPath::Fixed { point: y.clone() },
            scale: ScalePath {
                slope: 1,
                offset: 0,
            },
            amplitude: 1.0,
        };
        let u = synth_bubble(&m, &b, &cut, k).unwrap();
        let s = rescaled_pullback(&u, &y, k, &grid).unwrap();
        let t = 2f64.powi(-k);
        let worst = coords
            .iter()
            .zip(&s)
            .map(|(c, v)| {
                let far: Vec<f64> = c.iter().map(|a| a * t).collect();
                (v - cut.value(&far) * w.value(c)).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst <= 1e-12, "k={k}: {worst}");
    }
    assert!(rescaled_pullback(
        &Field::zero(&m),
        &y,
        0,
        &RefGrid {
            radius: 50.0,
            points: 5
        }
    )
    .is_err());
}

#[test]
fn partition_weights_sum_to_one() {
    let m = ManifoldModel::hyperbolic(3).unwrap();
    let hints = vec![
        SupportBall {
            center: m.point_from_origin(&[0.5, 0.0, 0.0]).unwrap(),
            radius: 0.05,
        },
        SupportBall {
            center: m.origin(),
            radius: 1.2,
        },
        SupportBall {
            center: m.point_from_origin(&[0.0, 2.0, 0.0]).unwrap(),
            radius: 0.5,
        },
    ];
    let part = Partition::new(&m, &hints).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for h in &hints {
        let chart = m.chart_at(&h.center);
        for _ in 0..300 {
            let xi: Vec<f64> = (0..3)
                .map(|_| rng.gen_range(-1.0..1.0) * h.radius / 3f64.sqrt())
                .collect();
            let x = chart.exp(&xi).unwrap();
            let s: f64 = part.weights_at(&x).iter().sum();
            assert!((s - 1.0).abs() <= 1e-10, "{s}");
        }
    }
}

fn corpus_fields() -> Vec<(Field, Point, f64)> {
    let m = ManifoldModel::hyperbolic(3).unwrap();
    let cut = Cutoff { r: m.chart_radius };
    let y = m.point_from_origin(&[0.3, 0.2, -0.1]).unwrap();
    let b = BubbleSpec {
        profile: Profile::bump(1.0, 1.0),
        center: CenterPath::Fixed { point: y.clone() },
        scale: ScalePath {
            slope: 1,
            offset: 0,
        },
        amplitude: 1.0,
    };
    let bubble = synth_bubble(&m, &b, &cut, 3).unwrap();
    let at = Profile::aubin_talenti(4.0, 1.0);
    let b2 = BubbleSpec {
        profile: at,
        ..b.clone()
    };
    let wide = synth_bubble(&m, &b2, &cut, 3).unwrap();
    let base = Arc::new(
        blob_field(
            &m,
            &BlobSpec {
                profile: Profile::bump(1.0, 0.7),
                center: m.origin(),
                scale: 0.8,
            },
        )
        .unwrap(),
    );
    let shifted = Field::new(
        &m,
        vec![(
            1.0,
            Term::Shifted {
                base,
                iso: m.translation(1, -1.5),
            },
        )],
    );
    let shift_center = m.translation(1, 1.5).apply(&m.origin());
    let pts = 12;
    let vals: Vec<f64> = (0..pts * pts * pts)
        .map(|i| {
            let c = sobolev_profiles::fields::cube_node(3, 0.6, pts, i);
            Profile::bump(0.5, 1.0).value(&c)
        })
        .collect();
    let sampled = Field::new(
        &m,
        vec![(1.0, Field::sampled(&m, &y, 0.6, pts, vals).unwrap())],
    );
    let pulled = Field::pullback(Arc::new(wide.clone()), &y, 3, 3.0).unwrap();
    vec![
        (bubble.clone(), y.clone(), 0.125),
        (wide.plus(0.5, &bubble), y.clone(), 0.5),
        (shifted, shift_center, 0.8),
        (sampled, y.clone(), 0.6),
        (pulled, Point(vec![0.0; 3]), 3.0),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradients_match_finite_differences(which in 0usize..5, dir in prop::collection::vec(-1.0f64..1.0, 3), r in 0.0f64..1.0) {
        let fields = corpus_fields();
        let (u, c, radius) = &fields[which];
        let n = dir.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-9);
        let xi: Vec<f64> = dir.iter().map(|a| a / n * r * radius).collect();
        let x = u.model().chart_at(c).exp(&xi).unwrap();
        let err = gradient_check(u, &x, 1e-5);
        let (_, g) = u.value_grad(&x);
        let scale = 1.0 + u.model().tangent_norm(&g);
        prop_assert!(err <= 1e-4 * scale, "field {} at {:?}: {} (|g| = {})", which, xi, err, scale);
    }

    #[test]
    fn l2_inner_is_cauchy_schwarz(s in 0.3f64..1.5, dx in -1.0f64..1.0) {
        let m = ManifoldModel::euclidean(3).unwrap();
        let a = blob_field(&m, &BlobSpec { profile: Profile::bump(1.0, 1.0), center: m.origin(), scale: s }).unwrap();
        let b = blob_field(&m, &BlobSpec { profile: Profile::aubin_talenti(1.0, 1.0), center: Point(vec![dx, 0.0, 0.0]), scale: 1.0 }).unwrap();
        let ab = h12_inner(&a, &b, &spec()).unwrap();
        let aa = h12_inner(&a, &a, &spec()).unwrap();
        let bb = h12_inner(&b, &b, &spec()).unwrap();
        prop_assert!(aa > 0.0 && bb > 0.0);
        prop_assert!(ab * ab <= aa * bb * (1.0 + 1e-9));
    }
}
