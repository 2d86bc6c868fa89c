#![allow(dead_code, clippy::needless_range_loop)]

use npis::lbfp::{build_weighted_histogram, Grid, LbfpDensity};
use npis::rng::PointStream;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Weighted points inside a random grid.
#[derive(Debug, Clone)]
pub struct Case {
    pub width: f64,
    pub lower: Vec<f64>,
    pub bins: Vec<usize>,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn build(c: &Case) -> LbfpDensity {
    let grid = Grid::new(c.width, c.lower.clone(), c.bins.clone()).unwrap();
    build_weighted_histogram(&c.points, &c.weights, grid).unwrap()
}

/// Direct expansion of the blend from raw bin sums: heights indexed by bin,
/// zero outside the histogram, corners summed over {0,1}^k.
pub fn oracle(c: &Case, x: &[f64]) -> f64 {
    let k = c.lower.len();
    let m = c.weights.len() as f64;
    let h = c.width;
    let mut sums = std::collections::HashMap::<Vec<i64>, f64>::new();
    for (p, w) in c.points.chunks(k).zip(&c.weights) {
        let idx: Vec<i64> = (0..k).map(|i| ((p[i] - c.lower[i]) / h).floor() as i64).collect();
        *sums.entry(idx).or_default() += w;
    }
    let norm: f64 = c.weights.iter().sum::<f64>() / m;
    let height = |idx: &[i64]| sums.get(idx).copied().unwrap_or(0.0) / (m * h.powi(k as i32)) / norm;
    // Base bin: the midpoint at or below x in every coordinate.
    let mut base = vec![0i64; k];
    let mut frac = vec![0.0; k];
    for i in 0..k {
        let t = (x[i] - c.lower[i] - 0.5 * h) / h;
        base[i] = t.floor() as i64;
        frac[i] = t - t.floor();
    }
    let mut total = 0.0;
    for corner in 0..(1 << k) {
        let mut w = 1.0;
        let mut idx = base.clone();
        for i in 0..k {
            let j = (corner >> i) & 1;
            idx[i] += j as i64;
            w *= if j == 1 { frac[i] } else { 1.0 - frac[i] };
        }
        total += w * height(&idx);
    }
    total
}

/// Chi-square statistic of sample counts against exact cell masses, with
/// small cells pooled so each group expects at least five samples.
pub fn chi_square_passes(d: &LbfpDensity, n: usize, seed: u64) -> bool {
    let k = d.dim();
    let counts_dim = d.cell_counts();
    let ncell: usize = counts_dim.iter().product();
    let mut counts = vec![0usize; ncell];
    let mut s = PointStream::pseudo(k, seed);
    let mut u = vec![0.0; k];
    let mut x = vec![0.0; k];
    let support = d.grid().support();
    let h = d.grid().width();
    for _ in 0..n {
        s.next_into(&mut u);
        d.sample(&u, &mut x);
        let mut f = 0;
        for i in 0..k {
            let c = (((x[i] - support[i].0) / h).floor() as usize).min(counts_dim[i] - 1);
            f = f * counts_dim[i] + c;
        }
        counts[f] += 1;
    }
    let mut idx = vec![0usize; k];
    let mut groups: Vec<(f64, f64)> = Vec::new();
    let (mut e_acc, mut o_acc) = (0.0, 0.0);
    for f in 0..ncell {
        let mut r = f;
        for i in (0..k).rev() {
            idx[i] = r % counts_dim[i];
            r /= counts_dim[i];
        }
        let e = d.cell_mass(&idx) * n as f64;
        if e == 0.0 {
            assert_eq!(counts[f], 0, "sample in a zero-mass cell");
            continue;
        }
        e_acc += e;
        o_acc += counts[f] as f64;
        if e_acc >= 5.0 {
            groups.push((o_acc, e_acc));
            e_acc = 0.0;
            o_acc = 0.0;
        }
    }
    if e_acc > 0.0 {
        let last = groups.last_mut().unwrap();
        last.0 += o_acc;
        last.1 += e_acc;
    }
    let stat: f64 = groups.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let df = (groups.len() - 1) as f64;
    let crit = ChiSquared::new(df).unwrap().inverse_cdf(0.999);
    stat < crit
}

pub fn random_density(k: usize, bins: usize, m: usize, seed: u64) -> LbfpDensity {
    let mut s = PointStream::pseudo(k + 1, seed);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for _ in 0..m {
        let v = s.next_point();
        points.extend(v[..k].iter().map(|u| -2.0 + 4.0 * u * u));
        weights.push(v[k] * 3.0);
    }
    let grid = Grid::new(4.0 / bins as f64, vec![-2.0; k], vec![bins; k]).unwrap();
    build_weighted_histogram(&points, &weights, grid).unwrap()
}

/// Kolmogorov-Smirnov critical value at α = 0.001.
pub fn ks_critical(n: usize) -> f64 {
    1.949 / (n as f64).sqrt()
}

pub fn ks_stat(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
