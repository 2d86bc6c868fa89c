#[path = "support/lbfp_oracle.rs"]
mod oracle;

use npis::lbfp::{build_weighted_histogram, Grid, LbfpDensity};
use npis::rng::PointStream;
use oracle::*;
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

fn case() -> impl Strategy<Value = Case> {
    (1usize..=3, 0.05f64..2.0, 1usize..40)
        .prop_flat_map(|(k, width, m)| {
            (
                Just(width),
                prop::collection::vec(-3.0f64..1.0, k),
                prop::collection::vec(1usize..7, k),
                prop::collection::vec(0.0f64..1.0, m * k),
                prop::collection::vec(0.0f64..5.0, m),
            )
        })
        .prop_map(|(width, lower, bins, unit, mut weights)| {
            let k = lower.len();
            let points = unit
                .chunks(k)
                .flat_map(|u| (0..k).map(|i| lower[i] + u[i] * bins[i] as f64 * width * 0.999_999).collect::<Vec<_>>())
                .collect();
            weights[0] += 0.5;
            Case { width, lower, bins, points, weights }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn eval_matches_direct_expansion(c in case(), probes in prop::collection::vec(-0.2f64..1.2, 30)) {
        let d = build(&c);
        let k = c.lower.len();
        for p in probes.chunks_exact(k) {
            let x: Vec<f64> = (0..k).map(|i| c.lower[i] + p[i] * c.bins[i] as f64 * c.width).collect();
            let got = d.eval(&x);
            let want = oracle(&c, &x);
            prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "x={x:?} got={got} want={want}");
        }
    }

    #[test]
    fn blend_integrates_to_one(c in case()) {
        let d = build(&c);
        prop_assert!((d.total_mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mixture_integrates_to_one(c in case(), beta in 0.0f64..0.99) {
        let d = build(&c).defensive_mixture(beta).unwrap();
        prop_assert!((d.total_mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn samples_stay_in_support_with_matching_density(c in case(), u in prop::collection::vec(0.0f64..1.0, 3 * 50)) {
        let d = build(&c);
        let k = c.lower.len();
        let support = d.grid().support();
        let mut x = vec![0.0; k];
        for v in u.chunks_exact(3) {
            let q = d.sample(&v[..k], &mut x);
            for i in 0..k {
                prop_assert!(x[i] >= support[i].0 - 1e-12 && x[i] <= support[i].1 + 1e-12);
            }
            prop_assert!((q - d.eval(&x)).abs() <= 1e-9 * q.max(1.0));
        }
    }

    #[test]
    fn sampler_is_monotone_in_first_uniform(c in case(), a in 0.0f64..1.0, b in 0.0f64..1.0, rest in prop::collection::vec(0.0f64..1.0, 2)) {
        let d = build(&c);
        let k = c.lower.len();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let mut u = vec![lo];
        u.extend_from_slice(&rest[..k - 1]);
        let mut x1 = vec![0.0; k];
        d.sample(&u, &mut x1);
        u[0] = hi;
        let mut x2 = vec![0.0; k];
        d.sample(&u, &mut x2);
        prop_assert!(x1[0] <= x2[0] + 1e-12);
    }
}

#[test]
fn continuity_across_cell_boundaries() {
    let mut s = PointStream::pseudo(8, 42);
    let c = Case {
        width: 0.3,
        lower: vec![-1.0, -0.5, 0.0],
        bins: vec![5, 4, 3],
        points: (0..300).map(|_| s.next_point()[0]).collect::<Vec<_>>(),
        weights: vec![],
    };
    let k = 3;
    let points: Vec<f64> = c
        .points
        .chunks(k)
        .flat_map(|u| (0..k).map(|i| c.lower[i] + u[i] * c.bins[i] as f64 * c.width * 0.999).collect::<Vec<_>>())
        .collect();
    let weights: Vec<f64> = (0..100).map(|i| 1.0 + (i % 7) as f64).collect();
    let d = build(&Case { points, weights, ..c.clone() });
    let delta = 1e-10;
    for j in 0..100 {
        let v = s.next_point();
        let mut x: Vec<f64> = (0..k).map(|i| c.lower[i] - 0.5 * c.width + v[i] * (c.bins[i] + 1) as f64 * c.width).collect();
        // Snap one coordinate to a node line (cell boundary).
        let i = j % k;
        let node = (v[3 + i] * (c.bins[i] + 2) as f64).floor();
        x[i] = c.lower[i] + (node - 0.5) * c.width;
        let mut a = x.clone();
        let mut b = x.clone();
        a[i] -= delta;
        b[i] += delta;
        assert!((d.eval(&a) - d.eval(&b)).abs() < 1e-8, "{x:?}");
    }
}

#[test]
fn sampler_chi_square() {
    // 48 cells in one dimension and modest grids above it.
    assert!(chi_square_passes(&random_density(1, 47, 400, 1), 100_000, 11));
    assert!(chi_square_passes(&random_density(2, 6, 400, 2), 100_000, 12));
    assert!(chi_square_passes(&random_density(3, 3, 400, 3), 100_000, 13));
    let mixed = random_density(2, 5, 50, 4).defensive_mixture(0.05).unwrap();
    assert!(chi_square_passes(&mixed, 100_000, 14));
}

#[test]
fn equal_corners_give_uniform_cell() {
    let grid = Grid::new(0.5, vec![0.0], vec![1]).unwrap();
    // All three nodes at the same height: flat over the whole support.
    let d = LbfpDensity::from_node_heights(grid, vec![1.0; 3], 1.0).unwrap();
    let (lo, hi) = d.grid().support()[0];
    let mut s = PointStream::pseudo(1, 5);
    let mut x = [0.0];
    let n = 100_000;
    let xs: Vec<f64> = (0..n)
        .map(|_| {
            d.sample(&s.next_point(), &mut x);
            x[0]
        })
        .collect();
    assert!(ks_stat(xs, |x| (x - lo) / (hi - lo)) < ks_critical(n));
}

#[test]
fn two_bin_tent_matches_analytic_cdf() {
    let (a, b) = (0.3, 0.7);
    let grid = Grid::new(1.0, vec![0.0], vec![2]).unwrap();
    let pts = [0.5, 1.5];
    let d = build_weighted_histogram(&pts, &[a, b], grid).unwrap();
    // Normalised node heights on [-0.5, 2.5]: 0, a, b, 0 with a + b = 1.
    let nodes = [(-0.5, 0.0), (0.5, a), (1.5, b), (2.5, 0.0)];
    let cdf = |x: f64| {
        let mut acc = 0.0;
        for w in nodes.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if x >= x1 {
                acc += 0.5 * (y0 + y1) * (x1 - x0);
            } else if x > x0 {
                let t = x - x0;
                acc += y0 * t + 0.5 * (y1 - y0) * t * t / (x1 - x0);
            }
        }
        acc
    };
    assert!((cdf(2.5) - 1.0).abs() < 1e-12);
    let mut s = PointStream::pseudo(1, 9);
    let mut x = [0.0];
    let n = 100_000;
    let xs: Vec<f64> = (0..n)
        .map(|_| {
            d.sample(&s.next_point(), &mut x);
            x[0]
        })
        .collect();
    assert!(ks_stat(xs, cdf) < 0.01);
}

/// Trapezoid ISE of `f` against the standard normal density on [-6, 6].
fn ise(f: impl Fn(f64) -> f64) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    let steps = 60_000;
    let dx = 12.0 / steps as f64;
    (0..=steps)
        .map(|i| {
            let x = -6.0 + i as f64 * dx;
            let e = f(x) - statrs::distribution::Continuous::pdf(&n, x);
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            w * e * e * dx
        })
        .sum()
}

#[test]
fn blend_beats_raw_histogram() {
    let mut s = PointStream::pseudo(1, 17);
    let n = 10_000;
    let pts: Vec<f64> = (0..n).map(|_| npis::rng::inv_normal_open(s.next_point()[0])).collect();
    let h = 0.4;
    let grid = Grid::centered(1, 6.0, h).unwrap();
    let (lo, _) = grid.histogram_box()[0];
    let bins = grid.bins()[0];
    let d = build_weighted_histogram(&pts, &vec![1.0; n], grid).unwrap();
    let mut counts = vec![0.0; bins];
    for &p in &pts {
        counts[((p - lo) / h).floor() as usize] += 1.0;
    }
    let raw = |x: f64| {
        let i = ((x - lo) / h).floor();
        if i < 0.0 || i as usize >= bins {
            0.0
        } else {
            counts[i as usize] / (n as f64 * h)
        }
    };
    let ise_blend = ise(|x| d.eval(&[x]));
    let ise_raw = ise(raw);
    assert!(ise_blend < ise_raw, "{ise_blend} vs {ise_raw}");
}

#[test]
fn finer_exact_histograms_reduce_ise() {
    let n = Normal::new(0.0, 1.0).unwrap();
    let exact = |h: f64| {
        let grid = Grid::centered(1, 5.0, h).unwrap();
        let bins = grid.bins()[0];
        let (lo, _) = grid.histogram_box()[0];
        let mut heights = vec![0.0; bins + 2];
        for b in 0..bins {
            let a = lo + b as f64 * h;
            heights[b + 1] = (n.cdf(a + h) - n.cdf(a)) / h;
        }
        let total: f64 = heights.iter().sum::<f64>() * h;
        LbfpDensity::from_node_heights(grid, heights, total).unwrap()
    };
    let mut last = f64::INFINITY;
    for h in [0.8, 0.4, 0.2, 0.1] {
        let d = exact(h);
        let e = ise(|x| d.eval(&[x]));
        assert!(e < last, "h={h}: {e} !< {last}");
        last = e;
    }
}
