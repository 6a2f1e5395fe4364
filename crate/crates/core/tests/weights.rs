mod common;

use std::sync::Arc;

use approx::assert_relative_eq;
use common::{basis, random_pl_path};
use delay_spde::path::Trajectory;
use delay_spde::weights::{
    b_norm, check_km_inequality, extend_hat, extend_tilde, segment_at, History, HistoryBound,
    HistoryGrid, TemporalProfile, WeightFunction,
};
use delay_spde::{Error, MildPath, SpectralField};
use proptest::prelude::*;

/// `∫_{-t}^0 g` in closed form.
fn weight_mass(w: &WeightFunction, t: f64) -> f64 {
    match *w {
        WeightFunction::Exponential { rate } => (1.0 - (-rate * t).exp()) / rate,
        WeightFunction::Constant => t,
        WeightFunction::Algebraic { exponent } if exponent == 1.0 => (1.0 + t).ln(),
        WeightFunction::Algebraic { exponent } => {
            ((1.0 + t).powf(1.0 - exponent) - 1.0) / (1.0 - exponent)
        }
    }
}

#[test]
fn k_and_m_closed_forms() {
    let weights = [
        WeightFunction::Exponential { rate: 1.0 },
        WeightFunction::Exponential { rate: 3.5 },
        WeightFunction::Constant,
        WeightFunction::Algebraic { exponent: 1.0 },
        WeightFunction::Algebraic { exponent: 2.5 },
    ];
    for w in &weights {
        for t in [0.0, 0.1, 1.0, 7.3] {
            for p in [1.0, 2.0, 4.0] {
                let mass = weight_mass(w, t).powf(1.0 / p);
                assert_relative_eq!(w.k_fn(t, p).unwrap(), 1.0 + mass, max_relative = 1e-13);
                let m = mass.max(w.companion(-t).powf(1.0 / p));
                assert_relative_eq!(w.m_fn(t, p).unwrap(), m, max_relative = 1e-13);
            }
        }
    }
    let w = WeightFunction::Exponential { rate: 1.0 };
    assert!(w.k_fn(-1.0, 2.0).is_err());
    assert!(w.m_fn(1.0, 0.5).is_err());
    assert!(WeightFunction::Exponential { rate: 0.0 }
        .validate()
        .is_err());
    assert!(WeightFunction::Algebraic { exponent: -1.0 }
        .validate()
        .is_err());
}

#[test]
fn geometric_grid_shape() {
    let g = HistoryGrid::geometric(10.0, 64, 0.01).unwrap();
    let nodes = g.nodes();
    assert_eq!(nodes.len(), 65);
    assert_eq!(nodes[0], 0.0);
    assert_eq!(*nodes.last().unwrap(), -10.0);
    assert_relative_eq!(nodes[0] - nodes[1], 0.01, max_relative = 1e-9);
    let steps: Vec<f64> = nodes.windows(2).map(|w| w[0] - w[1]).collect();
    assert!(steps.windows(2).take(62).all(|s| s[1] >= s[0]));
    assert_relative_eq!(g.weights().iter().sum::<f64>(), 10.0, max_relative = 1e-13);
    // a first step too large for the radius gives the uniform grid
    let u = HistoryGrid::geometric(1.0, 4, 0.5).unwrap();
    assert_eq!(u.nodes(), &[0.0, -0.25, -0.5, -0.75, -1.0]);
    assert!(HistoryGrid::from_nodes(vec![0.0, -1.0, -0.5]).is_err());
    assert!(HistoryGrid::from_nodes(vec![-0.1, -1.0]).is_err());
}

#[test]
fn trapezoid_weights_integrate_the_weight() {
    let w = WeightFunction::Exponential { rate: 2.0 };
    let g = HistoryGrid::geometric(12.0, 400, 1e-3).unwrap();
    let quad: f64 = g
        .nodes()
        .iter()
        .zip(g.weights())
        .map(|(t, h)| h * w.g(*t))
        .sum();
    let exact = (1.0 - (-24.0f64).exp()) / 2.0;
    assert!((quad - exact).abs() < 1e-4);
    assert!((g.weight_quadrature_error(&w) - (quad - exact).abs()).abs() < 1e-8);
}

#[test]
fn tail_radius_meets_its_target() {
    let cases = [
        (
            WeightFunction::Exponential { rate: 1.0 },
            HistoryBound::Bounded { sup: 2.0 },
        ),
        (
            WeightFunction::Constant,
            HistoryBound::ExpDecay {
                scale: 1.0,
                rate: 0.5,
            },
        ),
        (
            WeightFunction::Algebraic { exponent: 3.0 },
            HistoryBound::Bounded { sup: 1.0 },
        ),
        (
            WeightFunction::Constant,
            HistoryBound::Algebraic {
                scale: 1.0,
                exponent: 1.0,
            },
        ),
    ];
    for (w, bound) in cases {
        let r = bound.radius_for_tail(&w, 4.0, 1e-8).unwrap();
        assert!(bound.tail_mass(&w, 4.0, r) <= 1e-8);
        assert!(bound.tail_mass(&w, 4.0, 0.99 * r) > 1e-8 || r == 1.0);
    }
    // constant weight with a bounded history has infinite mass
    let bad =
        HistoryBound::Bounded { sup: 1.0 }.radius_for_tail(&WeightFunction::Constant, 4.0, 1e-8);
    assert!(matches!(bad, Err(Error::Inadmissible(_))));
}

#[test]
fn constant_history_b_norm_closed_form() {
    let b = basis(1.0, 4, 64);
    let x = SpectralField::mode(4, b.grid, 1, 1.0);
    let (p, rate) = (4.0, 1.0);
    let w = WeightFunction::Exponential { rate };
    let grid = HistoryGrid::geometric(40.0, 2000, 1e-3).unwrap();
    let seg = History::Constant(x.clone()).sample(&grid);
    let nx = b.lp_norm(&x, p).unwrap();
    let expected = nx * (1.0 + (1.0 / rate).powf(1.0 / p));
    assert_relative_eq!(
        b_norm(&seg, &b, &w, p).unwrap(),
        expected,
        max_relative = 1e-5
    );
}

#[test]
fn segments_read_the_path_then_the_history() {
    let b = basis(1.0, 3, 8);
    let shape = SpectralField::from_coeffs(vec![1.0, 2.0, -1.0], b.grid);
    let history = Arc::new(History::Separable {
        profile: TemporalProfile::Exponential { rate: 1.0 },
        shape: shape.clone(),
    });
    let path = MildPath::from_fn(0.1, 10, history.clone(), |t| {
        shape.scaled((-t).exp() * (1.0 + t)).coeffs
    })
    .unwrap();
    let grid = HistoryGrid::uniform(2.0, 20).unwrap();
    let seg = segment_at(&path, 0.5, &grid).unwrap();
    for (j, theta) in grid.nodes().iter().enumerate() {
        let s = 0.5 + theta;
        let c = if s >= 0.0 {
            // linear interpolation between path nodes; exact at the nodes
            path.eval(s).coeffs[0]
        } else {
            s.exp()
        };
        assert_relative_eq!(seg.value(j)[0], c, max_relative = 1e-12);
    }
    assert!(segment_at(&path, 1.5, &grid).is_err());

    let restart = History::Restart {
        path: Arc::new(path.clone()),
        at: 0.7,
    };
    let mut out = [0.0; 3];
    for theta in [0.0, -0.3, -0.7, -1.4] {
        restart.eval_into(theta, &mut out);
        assert_eq!(out.to_vec(), path.eval(0.7 + theta).coeffs);
    }
}

#[test]
fn tilde_and_hat_extensions() {
    let b = basis(1.0, 2, 4);
    let head = SpectralField::from_coeffs(vec![1.0, 0.5], b.grid);
    let history = History::Constant(head.clone());
    let path = MildPath::from_fn(
        0.25,
        4,
        Arc::new(History::Zero {
            modes: 2,
            spatial: b.grid,
        }),
        |t| head.scaled(1.0 - t).coeffs,
    )
    .unwrap();
    let tilde = extend_tilde(&path, &history).unwrap();
    assert_eq!(tilde.eval(-3.0).coeffs, head.coeffs);
    assert_eq!(tilde.eval(0.5).coeffs, vec![0.5, 0.25]);

    let off = MildPath::from_fn(0.25, 4, Arc::new(history.clone()), |_| vec![0.0, 0.0]).unwrap();
    assert!(matches!(
        extend_tilde(&off, &history),
        Err(Error::Consistency(_))
    ));

    let hat = extend_hat(&history, 1.0);
    assert_eq!(hat.eval(0.5).coeffs, vec![0.0, 0.0]);
    assert_eq!(hat.eval(0.0).coeffs, head.coeffs);
    assert_eq!(hat.eval(-2.0).coeffs, head.coeffs);
}

proptest! {
    #[test]
    fn weights_are_submultiplicative(
        rate in 0.01f64..5.0,
        exponent in 0.01f64..4.0,
        s in -20.0f64..0.0,
        theta in -20.0f64..0.0,
    ) {
        for w in [WeightFunction::Exponential { rate }, WeightFunction::Constant, WeightFunction::Algebraic { exponent }] {
            prop_assert!(w.submultiplicativity_defect(&[s], &[theta]) <= 1e-12);
        }
    }

    #[test]
    fn k_and_m_are_monotone(t in 0.0f64..10.0, dt in 0.0f64..10.0, p in 1.0f64..6.0) {
        let w = WeightFunction::Exponential { rate: 1.0 };
        prop_assert!(w.k_fn(t + dt, p).unwrap() >= w.k_fn(t, p).unwrap() - 1e-14);
        let c = WeightFunction::Constant;
        prop_assert!(c.m_fn(t + dt, p).unwrap() >= c.m_fn(t, p).unwrap() - 1e-14);
    }

    #[test]
    fn km_inequality_on_random_paths(stream in 1000u64..2000, p in 2.0f64..6.0) {
        let b = basis(1.0, 4, 32);
        let weight = WeightFunction::Exponential { rate: 1.0 };
        let (path, rate, t) = random_pl_path(&b, 0.05, 20, stream);
        let scale = b.lp_norm(&path.history().head(), p).unwrap();
        let grid = HistoryGrid::for_history(&weight, p, HistoryBound::ExpDecay { scale, rate }, 1.0, 1e-14, 512, 0.01).unwrap();
        let r = check_km_inequality(&path, t, p, &weight, &grid, &b, 1e-8).unwrap();
        prop_assert!(r.pass, "{:?}", r);
    }
}
