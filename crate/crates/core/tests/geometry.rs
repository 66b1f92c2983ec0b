use proptest::prelude::*;
use sobolev_profiles::geometry::{
    geometry_suite, ManifoldModel, ModelKind, Point, TRANSITION_BOUNDS,
};
use sobolev_profiles::Error;

fn models() -> Vec<ManifoldModel> {
    vec![
        ManifoldModel::euclidean(3).unwrap(),
        ManifoldModel::hyperbolic(3).unwrap(),
        ManifoldModel::sphere(3).unwrap(),
    ]
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// RK4 for the ambient geodesic equation `x'' = -K <x', x'> x` on a unit-curvature quadric.
fn geodesic_ode(m: &ManifoldModel, x0: &[f64], v0: &[f64], t: f64, steps: usize) -> Vec<f64> {
    let sign = match m.kind {
        ModelKind::Hyperbolic => 1.0,
        ModelKind::Sphere => -1.0,
        ModelKind::Euclidean => 0.0,
    };
    let n = x0.len();
    let acc = |x: &[f64], v: &[f64]| -> Vec<f64> {
        let vv = m.inner(v, v);
        x.iter().map(|xi| sign * vv * xi).collect()
    };
    let (mut x, mut v) = (x0.to_vec(), v0.to_vec());
    let h = t / steps as f64;
    let add = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(p, q)| p + s * q).collect()
    };
    for _ in 0..steps {
        let k1x = v.clone();
        let k1v = acc(&x, &v);
        let k2x = add(&v, &k1v, h / 2.0);
        let k2v = acc(&add(&x, &k1x, h / 2.0), &k2x);
        let k3x = add(&v, &k2v, h / 2.0);
        let k3v = acc(&add(&x, &k2x, h / 2.0), &k3x);
        let k4x = add(&v, &k3v, h);
        let k4v = acc(&add(&x, &k3x, h), &k4x);
        for i in 0..n {
            x[i] += h / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
            v[i] += h / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
        }
    }
    x
}

#[test]
fn hyperbolic_exp_matches_geodesic_integration() {
    let m = ManifoldModel::hyperbolic(3).unwrap();
    for (x, xi) in [
        (m.origin(), vec![1.3, 0.0, 0.0]),
        (
            m.point_from_origin(&[0.4, -0.2, 0.7]).unwrap(),
            vec![0.3, 0.9, -0.5],
        ),
    ] {
        let chart = m.chart_at(&x);
        let t = norm(&xi);
        let unit: Vec<f64> = xi.iter().map(|v| v / t).collect();
        let v0 = chart.to_tangent(&unit);
        let oracle = geodesic_ode(&m, &x.0, &v0, t, 4000);
        let got = m.exp_map(&x, &xi).unwrap();
        let err = norm(
            &got.0
                .iter()
                .zip(&oracle)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        assert!(err < 1e-9, "exp error {err:e}");
        assert!((m.distance(&x, &got) - t).abs() < 1e-9);
        assert!(m.check_point(&got).is_ok());
    }
}

#[test]
fn sphere_exp_matches_geodesic_integration_and_arc_length() {
    let m = ManifoldModel::sphere(3).unwrap();
    let x = m.origin();
    let xi = [0.0, 0.7, 0.0];
    let v0 = m.chart_at(&x).to_tangent(&[0.0, 1.0, 0.0]);
    let oracle = geodesic_ode(&m, &x.0, &v0, 0.7, 4000);
    let y = m.exp_map(&x, &xi).unwrap();
    assert!(y.0.iter().zip(&oracle).all(|(a, b)| (a - b).abs() < 1e-10));
    let angle = y.0.iter().zip(&x.0).map(|(a, b)| a * b).sum::<f64>().acos();
    let log = m.log_map(&x, &y).unwrap();
    assert!((norm(&log) - 0.7).abs() < 1e-12 && (angle - 0.7).abs() < 1e-12);
}

#[test]
fn hyperbolic_distance_along_geodesic_is_parameter() {
    let m = ManifoldModel::hyperbolic(3).unwrap();
    let x = m.point_from_origin(&[0.2, 0.1, 0.0]).unwrap();
    let v0 = m.chart_at(&x).to_tangent(&[0.0, 0.6, 0.8]);
    for t in [0.25, 1.0, 2.5] {
        let y = Point(geodesic_ode(&m, &x.0, &v0, t, 4000));
        assert!((m.distance(&x, &y) - t).abs() < 1e-9, "t={t}");
    }
}

#[test]
fn euclidean_examples() {
    let m = ManifoldModel::euclidean(3).unwrap();
    let x = Point(vec![1.0, 2.0, 0.0]);
    assert_eq!(
        m.exp_map(&x, &[0.5, 0.0, 0.0]).unwrap(),
        Point(vec![1.5, 2.0, 0.0])
    );
    let (o, y) = (Point(vec![0.0; 3]), Point(vec![3.0, 4.0, 0.0]));
    assert_eq!(m.log_map(&o, &y).unwrap(), vec![3.0, 4.0, 0.0]);
    assert_eq!(m.distance(&o, &y), 5.0);
    assert_eq!(m.log_map(&y, &y).unwrap(), vec![0.0; 3]);
    let g = m.metric_in_normal_coords(&[2.0, -1.0, 0.3]).unwrap();
    assert_eq!(g.g, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    assert_eq!(g.sqrt_det, 1.0);
    let psi = m.transition_map(&x, &y, &[0.1, 0.0, 0.0], 10.0).unwrap();
    assert!(psi
        .iter()
        .zip([-1.9, -2.0, 0.0])
        .all(|(a, b)| (a - b).abs() < 1e-15));
}

/// Metric from the ambient pushforward of finite-difference chart tangents.
fn fd_metric(m: &ManifoldModel, xi: &[f64], h: f64) -> Vec<f64> {
    let chart = m.chart_at(&m.origin());
    let n = xi.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|a| {
            let (mut p, mut q) = (xi.to_vec(), xi.to_vec());
            p[a] += h;
            q[a] -= h;
            let (ep, eq) = (chart.exp(&p).unwrap(), chart.exp(&q).unwrap());
            ep.0.iter()
                .zip(&eq.0)
                .map(|(s, t)| (s - t) / (2.0 * h))
                .collect()
        })
        .collect();
    let mut g = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            g[a * n + b] = m.inner(&cols[a], &cols[b]);
        }
    }
    g
}

#[test]
fn hyperbolic_metric_components_match_pushforward() {
    let m = ManifoldModel::hyperbolic(3).unwrap();
    let rho = 0.8;
    let g = m.metric_in_normal_coords(&[rho, 0.0, 0.0]).unwrap();
    let fd = fd_metric(&m, &[rho, 0.0, 0.0], 1e-5);
    let tang = (rho.sinh() / rho).powi(2);
    assert!(
        (fd[0] - 1.0).abs() < 1e-8 && (fd[4] - tang).abs() < 1e-8 && (fd[8] - tang).abs() < 1e-8
    );
    for (a, b) in g.g.iter().zip(&fd) {
        assert!((a - b).abs() < 1e-8);
    }
    assert!((g.sqrt_det - tang).abs() < 1e-12);
}

#[test]
fn out_of_domain_requests_fail() {
    let s = ManifoldModel::sphere(3).unwrap();
    assert!(matches!(
        s.exp_map(&s.origin(), &[4.0, 0.0, 0.0]),
        Err(Error::Domain(_))
    ));
    assert!(matches!(
        s.metric_in_normal_coords(&[0.0, 3.5, 0.0]),
        Err(Error::Domain(_))
    ));
    let antipode = Point(s.origin().0.iter().map(|v| -v).collect());
    assert!(s.log_map(&s.origin(), &antipode).is_err());
    let h = ManifoldModel::hyperbolic(3).unwrap();
    let y = h.point_from_origin(&[3.0, 0.0, 0.0]).unwrap();
    assert!(matches!(
        h.transition_map(&h.origin(), &y, &[0.1, 0.0, 0.0], 1.0),
        Err(Error::Domain(_))
    ));
    assert!(ManifoldModel::euclidean(2).is_err());
    assert!(ManifoldModel::new(ModelKind::Sphere, 3, 1.0, 0.5).is_err());
}

#[test]
fn geometry_suite_passes_on_every_model() {
    for m in models() {
        let checks = geometry_suite(&m, 1000, 11).unwrap();
        assert_eq!(checks.len(), 6);
        for c in &checks {
            assert!(
                c.passed,
                "{:?} {}: {} > {}",
                m.kind, c.name, c.worst, c.tolerance
            );
        }
        let d1 = checks
            .iter()
            .find(|c| c.name == "transition_first_derivative")
            .unwrap();
        assert_eq!(d1.tolerance, TRANSITION_BOUNDS.0);
    }
}

#[test]
fn geometry_suite_is_seeded() {
    let m = ManifoldModel::hyperbolic(3).unwrap();
    assert_eq!(
        geometry_suite(&m, 50, 3).unwrap(),
        geometry_suite(&m, 50, 3).unwrap()
    );
}

fn model_strategy() -> impl Strategy<Value = ManifoldModel> {
    prop_oneof![
        Just(ManifoldModel::euclidean(3).unwrap()),
        Just(ManifoldModel::hyperbolic(3).unwrap()),
        Just(ManifoldModel::sphere(3).unwrap()),
    ]
}

fn vec3(r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 3)
        .prop_map(move |v| v.iter().map(|x| x * r / 3f64.sqrt()).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn exp_log_round_trip(m in model_strategy(), base in vec3(1.0), xi in vec3(1.0)) {
        let x = m.point_from_origin(&base).unwrap();
        let xi: Vec<f64> = xi.iter().map(|v| v * m.chart_radius).collect();
        let y = m.exp_map(&x, &xi).unwrap();
        prop_assert!(m.check_point(&y).is_ok());
        let back = m.log_map(&x, &y).unwrap();
        prop_assert!(back.iter().zip(&xi).all(|(a, b)| (a - b).abs() <= 1e-9));
        prop_assert!((m.distance(&x, &y) - norm(&xi)).abs() <= 1e-9);
    }

    #[test]
    fn distance_is_a_metric(m in model_strategy(), a in vec3(1.0), b in vec3(1.0), c in vec3(1.0)) {
        let (x, y, z) = (m.point_from_origin(&a).unwrap(), m.point_from_origin(&b).unwrap(), m.point_from_origin(&c).unwrap());
        prop_assert_eq!(m.distance(&x, &x), 0.0);
        prop_assert!((m.distance(&x, &y) - m.distance(&y, &x)).abs() <= 1e-12);
        prop_assert!(m.distance(&x, &z) <= m.distance(&x, &y) + m.distance(&y, &z) + 1e-9);
    }

    #[test]
    fn metric_is_symmetric_positive(m in model_strategy(), xi in vec3(1.0)) {
        let xi: Vec<f64> = xi.iter().map(|v| v * m.chart_radius).collect();
        let g = m.metric_in_normal_coords(&xi).unwrap();
        for a in 0..3 {
            prop_assert!(g.component(a, a) > 0.0);
            for b in 0..3 {
                prop_assert!((g.component(a, b) - g.component(b, a)).abs() <= 1e-14);
            }
        }
        let fd = fd_metric(&m, &xi, 1e-4);
        prop_assert!(g.g.iter().zip(&fd).all(|(p, q)| (p - q).abs() <= 1e-5));
    }

    #[test]
    fn transition_origin_has_norm_distance(m in model_strategy(), a in vec3(1.0), off in vec3(1.0)) {
        let r = m.chart_radius;
        let x = m.point_from_origin(&a).unwrap();
        let y = m.exp_map(&x, &off.iter().map(|v| v * r / 2.0).collect::<Vec<_>>()).unwrap();
        let psi0 = m.transition_map(&x, &y, &[0.0; 3], r).unwrap();
        prop_assert!((norm(&psi0) - m.distance(&x, &y)).abs() <= 1e-9);
        let id = m.transition_map(&x, &x, &[0.1 * r, 0.0, -0.2 * r], r).unwrap();
        prop_assert!((id[0] - 0.1 * r).abs() <= 1e-12 && id[1].abs() <= 1e-12 && (id[2] + 0.2 * r).abs() <= 1e-12);
    }
}
