use proptest::prelude::*;

use super::*;
use crate::diff::{finite_difference_check, Tape, Tensor};
use crate::error::Error;
use crate::policy::{PolicyConfig, VelocityNetwork};
use crate::rng::{stream, SeededRng};

/// One record per `(condition, x1)`; embeddings are one-hot condition ids.
fn discrete(points: &[(usize, Vec<f64>)], freqs: &[f64], sigma: f64) -> DatasetSpec {
    let k = freqs.len();
    let d = points[0].1.len();
    DatasetSpec {
        kind: TaskKind::LeftRight,
        action_dim: d,
        embed_dim: k,
        frequencies: freqs.to_vec(),
        mode_noise: 0.0,
        path_noise: sigma,
        horizon: None,
        mode_centers: vec![vec![0.0; d]; k],
        mode_of_condition: (0..k).collect(),
        records: points
            .iter()
            .map(|(c, x1)| Demonstration {
                condition: *c,
                embedding: (0..k).map(|j| f64::from(u8::from(j == *c))).collect(),
                x1: x1.clone(),
                obs: None,
            })
            .collect(),
    }
}

/// Encoder returning a fixed mean regardless of input.
struct Fixed(Vec<f64>);

impl ConditionEncoder for Fixed {
    fn latent_dim(&self) -> usize {
        self.0.len()
    }

    fn encode_moments(&self, e: &Tensor, _: bool) -> crate::Result<(Tensor, Option<Tensor>)> {
        let rows = vec![self.0.clone(); e.rows()];
        Ok((Tensor::from_rows(&rows)?, None))
    }
}

fn column_moments(x: &Tensor, j: usize) -> (f64, f64) {
    let n = x.rows() as f64;
    let m = (0..x.rows()).map(|i| x.get(i, j)).sum::<f64>() / n;
    let v = (0..x.rows())
        .map(|i| (x.get(i, j) - m).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    (m, v.sqrt())
}

/// Two-sample Kolmogorov-Smirnov p-value (asymptotic distribution).
fn ks_p_value(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let en = (n * m / (n + m)).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    let p: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    p.clamp(0.0, 1.0)
}

/// Kernel estimate of `E[x1 − x0 | xt ≈ x]` by simulating the path.
///
/// Each support point is simulated separately with `x0` drawn from a unit
/// normal centred on the window `|xt − x| < bandwidth` and reweighted to the
/// standard source; the per-point kernel masses are then mixed by weight.
fn monte_carlo_velocity(
    support: &[(f64, f64)],
    t: f64,
    x: f64,
    n: usize,
    bandwidth: f64,
    seed: u64,
) -> f64 {
    let mut rng = SeededRng::new(seed, stream::EVAL);
    let (mut num, mut den) = (0.0, 0.0);
    for &(w, x1) in support {
        let centre = (x - t * x1) / (1.0 - t);
        let (mut mass, mut acc) = (0.0, 0.0);
        for _ in 0..n {
            let x0 = centre + rng.normal();
            let xt = t * x1 + (1.0 - t) * x0;
            if (xt - x).abs() < bandwidth {
                let iw = (-0.5 * x0 * x0 + 0.5 * (x0 - centre).powi(2)).exp();
                mass += iw;
                acc += iw * (x1 - x0);
            }
        }
        num += w * acc / n as f64;
        den += w * mass / n as f64;
    }
    assert!(den > 0.0, "no samples in the kernel window");
    num / den
}

#[test]
fn time_samples_are_uniform_and_reproducible() {
    let draw = |seed| {
        let mut rng = SeededRng::new(seed, stream::TRAIN);
        (0..100_000)
            .map(|_| sample_time(&mut rng))
            .collect::<Vec<_>>()
    };
    let a = draw(1);
    assert_eq!(a, draw(1));
    assert!(a.iter().all(|t| (0.0..=1.0).contains(t)));
    let mean = a.iter().sum::<f64>() / a.len() as f64;
    assert!((mean - 0.5).abs() < 0.01, "{mean}");
}

#[test]
fn interpolation_examples() {
    let mut rng = SeededRng::new(1, stream::TRAIN);
    let (xt, u) = interpolate(&[0.0], &[1.0], 0.5, 0.0, &mut rng).unwrap();
    assert_eq!((xt, u), (vec![0.5], vec![1.0]));
    let x0 = [0.3, -1.7];
    let x1 = [2.5, 0.4];
    assert_eq!(interpolate(&x0, &x1, 0.0, 0.0, &mut rng).unwrap().0, x0);
    assert_eq!(interpolate(&x0, &x1, 1.0, 0.0, &mut rng).unwrap().0, x1);
    assert!(matches!(
        interpolate(&x0, &[1.0], 0.5, 0.0, &mut rng),
        Err(Error::Dimension { .. })
    ));
}

#[test]
fn standard_source_moments() {
    let src = Source::standard(2);
    let e = Tensor::zeros(&[100_000, 1]);
    let x = src
        .sample(&e, &mut SeededRng::new(2, stream::TRAIN))
        .unwrap();
    for j in 0..2 {
        let (m, s) = column_moments(&x, j);
        assert!(m.abs() < 0.02 && (s - 1.0).abs() < 0.02, "{m} {s}");
    }
}

#[test]
fn cocos_source_moments() {
    let enc = Fixed(vec![0.7, -0.3]);
    let src = Source::new(SourceSpec::cocos(1.0, 0.2), Some(&enc), 2).unwrap();
    let e = Tensor::zeros(&[100_000, 3]);
    let x = src
        .sample(&e, &mut SeededRng::new(3, stream::TRAIN))
        .unwrap();
    for (j, want) in [0.7, -0.3].into_iter().enumerate() {
        let (m, s) = column_moments(&x, j);
        assert!((m - want).abs() < 0.01 && (s - 0.2).abs() < 0.01, "{m} {s}");
    }
}

#[test]
fn cocos_without_prior_strength_matches_standard() {
    let enc = Fixed(vec![1.3, -2.1]);
    let e = Tensor::zeros(&[100_000, 3]);
    let cocos = Source::new(SourceSpec::cocos(0.0, 1.0), Some(&enc), 2).unwrap();
    let standard = Source::standard(2);

    // Independent streams: a distributional test.
    let a = cocos
        .sample(&e, &mut SeededRng::new(4, stream::TRAIN))
        .unwrap();
    let b = standard
        .sample(&e, &mut SeededRng::new(5, stream::TRAIN))
        .unwrap();
    for j in 0..2 {
        let col = |x: &Tensor| (0..x.rows()).map(|i| x.get(i, j)).collect::<Vec<_>>();
        let p = ks_p_value(col(&a), col(&b));
        assert!(p > 0.01, "dimension {j}: p = {p}");
    }

    // Shared streams: the samples themselves coincide.
    let a = cocos
        .sample(&e, &mut SeededRng::new(6, stream::TRAIN))
        .unwrap();
    let b = standard
        .sample(&e, &mut SeededRng::new(6, stream::TRAIN))
        .unwrap();
    assert_eq!(a, b);
}

#[test]
fn ks_rejects_shifted_samples() {
    let mut rng = SeededRng::new(7, stream::TRAIN);
    let a: Vec<f64> = (0..20_000).map(|_| rng.normal()).collect();
    let b: Vec<f64> = (0..20_000).map(|_| rng.normal() + 0.1).collect();
    assert!(ks_p_value(a, b) < 1e-6);
}

#[test]
fn cocos_requires_an_encoder() {
    let err = Source::new(SourceSpec::cocos(1.0, 0.2), None, 2).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    assert!(sample_source(
        SourceSpec::cocos_vae(1.0),
        None,
        &[0.0],
        1,
        &mut SeededRng::new(0, 0)
    )
    .is_err());
    assert!(Source::new(SourceSpec::cocos(1.0, 0.0), Some(&Fixed(vec![0.0])), 1).is_err());
}

#[test]
fn oracle_wired_field_has_zero_loss() {
    // The embedding carries x1, so (x1 − xt)/(1 − t) recovers x1 − x0.
    let field = FnField::new(2, |t: &[f64], x: &Tensor, e: &Tensor| {
        let mut v = x.clone();
        for (i, &ti) in t.iter().enumerate() {
            for j in 0..2 {
                v.data_mut()[i * 2 + j] = (e.get(i, j) - x.get(i, j)) / (1.0 - ti);
            }
        }
        Ok(v)
    });
    let x1 = Tensor::from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0], vec![-3.0, 0.0]]).unwrap();
    let mut tape = Tape::new();
    let loss = cfmc_loss(
        &field,
        &mut tape,
        &[],
        &x1,
        &x1,
        &Source::standard(2),
        0.0,
        &mut SeededRng::new(8, stream::TRAIN),
    )
    .unwrap();
    assert!(tape.scalar(loss) < 1e-20, "{}", tape.scalar(loss));
}

#[test]
fn zero_field_on_unit_displacement_has_unit_loss() {
    let zero = FnField::new(2, |_: &[f64], x: &Tensor, _: &Tensor| {
        Ok(Tensor::zeros(x.shape()))
    });
    let rows = 16;
    let e = Tensor::zeros(&[rows, 1]);
    let rng = SeededRng::new(9, stream::TRAIN);

    // Replays the draw order to obtain x0 before building x1 = x0 + [1, 0].
    let mut peek = rng.clone();
    (0..rows).for_each(|_| {
        sample_time(&mut peek);
    });
    let mut x1 = Source::standard(2).sample(&e, &mut peek).unwrap();
    for i in 0..rows {
        x1.data_mut()[i * 2] += 1.0;
    }
    let mut rng = rng;
    let mut tape = Tape::new();
    let loss = cfmc_loss(
        &zero,
        &mut tape,
        &[],
        &e,
        &x1,
        &Source::standard(2),
        0.0,
        &mut rng,
    )
    .unwrap();
    assert!(
        (tape.scalar(loss) - 1.0).abs() < 1e-12,
        "{}",
        tape.scalar(loss)
    );
}

#[test]
fn cfmc_loss_gradient_matches_finite_differences() {
    let mut cfg = PolicyConfig::new(2, 3);
    cfg.hidden_dim = 8;
    cfg.layers = 2;
    cfg.time_dim = 4;
    let net = VelocityNetwork::new(cfg, &mut SeededRng::new(10, stream::POLICY_INIT)).unwrap();
    let e = Tensor::from_rows(&[
        vec![1.0, 0.0, 0.2],
        vec![0.0, 1.0, 0.2],
        vec![0.5, 0.5, 0.2],
    ])
    .unwrap();
    let x1 = Tensor::from_rows(&[vec![-1.0, 0.3], vec![1.0, 0.1], vec![0.0, 2.0]]).unwrap();
    let enc = Fixed(vec![0.4, -0.2]);
    let source = Source::new(SourceSpec::cocos(1.0, 0.2), Some(&enc), 2).unwrap();
    let batch = draw_path_batch(
        &source,
        &e,
        &x1,
        0.05,
        &mut SeededRng::new(10, stream::TRAIN),
    )
    .unwrap();
    let mut params = net.params().clone();
    let err = finite_difference_check(&mut params, 1e-6, |tape, vars| {
        cfmc_loss_on(&net, tape, vars, &e, &batch)
    })
    .unwrap();
    assert!(err < 1e-3, "{err}");
}

#[test]
fn euler_is_exact_on_constant_fields() {
    let c = [0.75, -2.0];
    let field = FnField::new(2, move |_: &[f64], x: &Tensor, _: &Tensor| {
        let rows = vec![c.to_vec(); x.rows()];
        Tensor::from_rows(&rows)
    });
    let x0 = Tensor::from_rows(&[vec![0.1, 0.2]]).unwrap();
    let e = Tensor::zeros(&[1, 1]);
    for steps in [1, 3, 10, 64] {
        let x = euler_integrate(&field, x0.clone(), &e, steps).unwrap();
        assert!((x.get(0, 0) - 0.85).abs() < 1e-12 && (x.get(0, 1) + 1.8).abs() < 1e-12);
    }
}

#[test]
fn euler_single_step_and_order() {
    let decay = FnField::new(1, |_: &[f64], x: &Tensor, _: &Tensor| {
        let mut v = x.clone();
        v.data_mut().iter_mut().for_each(|a| *a = -*a);
        Ok(v)
    });
    let x0 = Tensor::row(vec![1.0]);
    let e = Tensor::zeros(&[1, 1]);
    assert_eq!(
        euler_integrate(&decay, x0.clone(), &e, 1).unwrap().item(),
        0.0
    );

    let err = |steps| {
        (euler_integrate(&decay, x0.clone(), &e, steps)
            .unwrap()
            .item()
            - (-1f64).exp())
        .abs()
    };
    let mut prev = err(10);
    for steps in [20, 40, 80, 160] {
        let cur = err(steps);
        let ratio = prev / cur;
        assert!((1.8..=2.2).contains(&ratio), "{steps}: {ratio}");
        prev = cur;
    }
}

#[test]
fn euler_reports_non_finite_step() {
    let blowup = FnField::new(1, |t: &[f64], x: &Tensor, _: &Tensor| {
        let v = if t[0] >= 0.5 { f64::NAN } else { 1.0 };
        Ok(Tensor::filled(x.shape(), v))
    });
    let e = Tensor::zeros(&[1, 1]);
    let err = euler_integrate(&blowup, Tensor::row(vec![0.0]), &e, 4).unwrap_err();
    assert!(matches!(err, Error::NonFinite { step: 2, .. }), "{err:?}");
    assert!(euler_integrate(&blowup, Tensor::row(vec![0.0]), &e, 0).is_err());
}

#[test]
fn marginal_oracle_symmetry_and_endpoint() {
    let ds = discrete(&[(0, vec![-1.0]), (0, vec![1.0])], &[1.0], 0.0);
    let src = Source::standard(1);
    let u = marginal_velocity_oracle(&ds, &src, 0, 0.5, &[0.0]).unwrap();
    assert!(u[0].abs() < 1e-12);
    // Approaching +1 along xt = t·x1 (x0 = 0) the velocity tends to 1.
    let u = marginal_velocity_oracle(&ds, &src, 0, 0.999, &[0.999]).unwrap();
    assert!((u[0] - 1.0).abs() < 1e-9, "{}", u[0]);
    // At the fixed point x = 1 the only consistent source draw is x0 = 1.
    let u = marginal_velocity_oracle(&ds, &src, 0, 0.999, &[1.0]).unwrap();
    assert!(u[0].abs() < 1e-9, "{}", u[0]);
}

#[test]
fn single_action_oracle_matches_monte_carlo() {
    // xt = 1 at t = 0.5 forces x0 = 0, so u = 2.
    let ds = discrete(&[(0, vec![2.0])], &[1.0], 0.0);
    let u = marginal_velocity_oracle(&ds, &Source::standard(1), 0, 0.5, &[1.0]).unwrap()[0];
    let mc = monte_carlo_velocity(&[(1.0, 2.0)], 0.5, 1.0, 1_000_000, 0.01, 11);
    assert!((u - 2.0).abs() < 1e-12);
    assert!(
        (mc - u).abs() < 0.01 * u.abs(),
        "oracle {u}, monte carlo {mc}"
    );
}

#[test]
fn collapsed_oracle_is_zero_at_origin_for_balanced_data() {
    let ds = discrete(&[(0, vec![-1.0]), (1, vec![1.0])], &[0.5, 0.5], 0.0);
    let oracle = VelocityOracle::new(&ds, &Source::standard(1)).unwrap();
    for k in 1..100 {
        let t = k as f64 / 100.0;
        assert!(oracle.collapsed(t, &[0.0]).unwrap()[0].abs() < 1e-12);
    }
}

#[test]
fn imbalanced_collapsed_oracle_matches_monte_carlo() {
    let ds = discrete(&[(0, vec![-1.0]), (1, vec![1.0])], &[0.8, 0.2], 0.0);
    let v = collapsed_velocity_oracle(&ds, &Source::standard(1), 0.9, &[0.0]).unwrap()[0];
    // xt = 0 at t = 0.9 needs |x0| = 9, far in the source tail.
    let mc = monte_carlo_velocity(&[(0.8, -1.0), (0.2, 1.0)], 0.9, 0.0, 1_000_000, 0.005, 12);
    assert!(
        (mc - v).abs() < 0.01 * v.abs(),
        "oracle {v}, monte carlo {mc}"
    );

    let mc = monte_carlo_velocity(&[(0.8, -1.0), (0.2, 1.0)], 0.6, 0.3, 1_000_000, 0.005, 13);
    let v = collapsed_velocity_oracle(&ds, &Source::standard(1), 0.6, &[0.3]).unwrap()[0];
    // Near-cancelling mixture: tolerance is 1% of the component velocity scale.
    assert!((mc - v).abs() < 0.01 * 3.25, "oracle {v}, monte carlo {mc}");
}

#[test]
fn single_condition_collapsed_equals_marginal() {
    let ds = discrete(
        &[
            (0, vec![-1.0, 0.5]),
            (0, vec![0.3, 1.0]),
            (0, vec![2.0, -1.0]),
        ],
        &[1.0],
        0.1,
    );
    let oracle = VelocityOracle::new(&ds, &Source::standard(2)).unwrap();
    for (t, x) in [(0.2, [0.1, 0.1]), (0.7, [-0.5, 0.8]), (0.95, [1.9, -0.9])] {
        assert_eq!(
            oracle.collapsed(t, &x).unwrap(),
            oracle.marginal(0, t, &x).unwrap()
        );
    }
}

#[test]
fn oracle_degenerate_density() {
    let ds = discrete(&[(0, vec![-1.0]), (1, vec![1.0])], &[0.5, 0.5], 0.0);
    let oracle = VelocityOracle::new(&ds, &Source::standard(1)).unwrap();
    assert!(matches!(
        oracle.collapsed(1.0, &[0.3]),
        Err(Error::DegenerateDensity(_))
    ));
    assert_eq!(oracle.marginal(1, 1.0, &[1.0]).unwrap(), vec![1.0]);
    assert!(matches!(
        oracle.marginal(5, 0.5, &[0.0]),
        Err(Error::UnknownCondition(5))
    ));
}

#[test]
fn oracle_uses_the_cocos_source_mean() {
    // Single action, Cocos mean μ0, tiny path noise: u = x1 − E[x0 | xt].
    let enc = Fixed(vec![0.5]);
    let ds = discrete(&[(0, vec![1.0])], &[1.0], 0.0);
    let src = Source::new(SourceSpec::cocos(1.0, 0.2), Some(&enc), 1).unwrap();
    // xt = 0.5·1 + 0.5·x0 = 0.8 ⇒ x0 = 0.6 exactly.
    let u = marginal_velocity_oracle(&ds, &src, 0, 0.5, &[0.8]).unwrap()[0];
    assert!((u - 0.4).abs() < 1e-12, "{u}");
}

proptest! {
    #[test]
    fn path_endpoints_are_exact(
        x0 in proptest::collection::vec(-10.0f64..10.0, 1..6),
        shift in -5.0f64..5.0,
    ) {
        let x1: Vec<f64> = x0.iter().map(|v| v * 0.3 + shift).collect();
        let mut rng = SeededRng::new(0, stream::TRAIN);
        let (a, u0) = interpolate(&x0, &x1, 0.0, 0.0, &mut rng).unwrap();
        let (b, u1) = interpolate(&x0, &x1, 1.0, 0.0, &mut rng).unwrap();
        prop_assert_eq!(a, x0.clone());
        prop_assert_eq!(b, x1.clone());
        let u: Vec<f64> = x1.iter().zip(&x0).map(|(p, q)| p - q).collect();
        prop_assert_eq!(&u0, &u);
        prop_assert_eq!(u1, u);
    }

    #[test]
    fn oracle_weights_are_a_convex_combination(t in 0.01f64..0.99, x in -3.0f64..3.0) {
        // With a standard source each component's velocity is affine in x,
        // so the mixture lies between the smallest and largest component.
        let ds = discrete(&[(0, vec![-1.0]), (0, vec![0.5]), (0, vec![2.0])], &[1.0], 0.05);
        let oracle = VelocityOracle::new(&ds, &Source::standard(1)).unwrap();
        let v = oracle.marginal(0, t, &[x]).unwrap()[0];
        let s2 = (1.0 - t).powi(2) + 0.0025;
        let comps: Vec<f64> = [-1.0, 0.5, 2.0]
            .iter()
            .map(|x1| x1 - (1.0 - t) / s2 * (x - t * x1))
            .collect();
        let lo = comps.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = comps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
    }
}
