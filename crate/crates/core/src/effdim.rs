//! Cumulated ANOVA variances of prefix sets and the truncation-sense
//! effective dimension.
//!
//! For a pair `(x, y)` of independent normal vectors, the product
//! `φ(x) φ(x_{1..k}, y_{k+1..d})` has mean `Γ_k + I²`. One pair serves every
//! prefix size, so the profile uses common random numbers throughout.

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::integrand::Integrand;
use crate::rng::{inv_normal_open, mix_seed, PointStream};

pub const DEFAULT_L: usize = 1 << 14;
pub const DEFAULT_GAMMA: f64 = 0.9;
const CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct EdReport {
    pub threshold: f64,
    pub samples: usize,
    /// `Γ̂_k` for `k = 1..=d`, unclamped.
    pub profile: Vec<f64>,
    pub profile_se: Vec<f64>,
    pub mean: f64,
    pub total_variance: f64,
    pub total_variance_se: f64,
    pub ed: usize,
}

impl EdReport {
    /// `Γ̂_k / σ̂²` for each prefix size.
    pub fn fractions(&self) -> Vec<f64> {
        self.profile.iter().map(|g| g / self.total_variance).collect()
    }
}

#[derive(Debug, Clone, Default)]
struct Sums {
    phi: f64,
    phi2: f64,
    phi4: f64,
    prod: Vec<f64>,
    prod2: Vec<f64>,
}

impl Sums {
    fn merge(&mut self, o: &Sums) {
        self.phi += o.phi;
        self.phi2 += o.phi2;
        self.phi4 += o.phi4;
        for (a, b) in self.prod.iter_mut().zip(&o.prod) {
            *a += b;
        }
        for (a, b) in self.prod2.iter_mut().zip(&o.prod2) {
            *a += b;
        }
    }
}

fn chunk_sums<F: Integrand>(f: &F, kmax: usize, n: usize, seed: u64) -> Sums {
    let d = f.dim();
    let mut stream = PointStream::pseudo(2 * d, seed);
    let mut scratch = f.scratch();
    let mut v = vec![0.0; 2 * d];
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut mixed = vec![0.0; d];
    let mut s = Sums {
        prod: vec![0.0; kmax],
        prod2: vec![0.0; kmax],
        ..Sums::default()
    };
    for _ in 0..n {
        stream.next_into(&mut v);
        for i in 0..d {
            x[i] = inv_normal_open(v[i]);
            y[i] = inv_normal_open(v[d + i]);
        }
        let fx = f.eval(&x, &mut scratch);
        s.phi += fx;
        s.phi2 += fx * fx;
        s.phi4 += fx * fx * fx * fx;
        mixed.copy_from_slice(&y);
        #[allow(clippy::manual_memcpy)]
        for k in 1..=kmax {
            mixed[k - 1] = x[k - 1];
            let p = if k == d { fx * fx } else { fx * f.eval(&mixed, &mut scratch) };
            s.prod[k - 1] += p;
            s.prod2[k - 1] += p * p;
        }
    }
    s
}

fn accumulate<F: Integrand>(f: &F, kmax: usize, l: usize, seed: u64, exec: Executor) -> Sums {
    let chunks = l.div_ceil(CHUNK);
    let parts = exec.map(chunks, |c| {
        let n = CHUNK.min(l - c * CHUNK);
        chunk_sums(f, kmax, n, mix_seed(seed, c as u64))
    });
    let mut total = Sums {
        prod: vec![0.0; kmax],
        prod2: vec![0.0; kmax],
        ..Sums::default()
    };
    for p in &parts {
        total.merge(p);
    }
    total
}

fn check(l: usize, d: usize) -> Result<()> {
    if l < 2 {
        return Err(Error::InvalidParameter { name: "l", reason: "must be at least 2".into() });
    }
    if d == 0 {
        return Err(Error::Domain("integrand has no coordinates".into()));
    }
    Ok(())
}

fn se(sum: f64, sum2: f64, l: f64) -> f64 {
    let m = sum / l;
    ((sum2 / l - m * m).max(0.0) / (l - 1.0)).sqrt()
}

/// `Γ̂_u` for the prefix `u = {1..k}` with its standard error.
pub fn estimate_gamma<F: Integrand>(f: &F, k: usize, l: usize, seed: u64) -> Result<(f64, f64)> {
    check(l, f.dim())?;
    if k == 0 || k > f.dim() {
        return Err(Error::InvalidParameter {
            name: "u",
            reason: format!("prefix size must be in 1..={}", f.dim()),
        });
    }
    let s = accumulate(f, k, l, seed, Executor::default());
    let lf = l as f64;
    let mean = s.phi / lf;
    Ok((s.prod[k - 1] / lf - mean * mean, se(s.prod[k - 1], s.prod2[k - 1], lf)))
}

/// Full prefix profile and the smallest `k` with `Γ̂_k ≥ γ σ̂²` (negative
/// estimates count as zero for the decision).
pub fn effective_dimension<F: Integrand>(f: &F, gamma: f64, l: usize, seed: u64, exec: Executor) -> Result<EdReport> {
    let d = f.dim();
    check(l, d)?;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            reason: format!("must lie in (0, 1), got {gamma}"),
        });
    }
    let s = accumulate(f, d, l, seed, exec);
    let lf = l as f64;
    let mean = s.phi / lf;
    let total = s.phi2 / lf - mean * mean;
    let profile: Vec<f64> = s.prod.iter().map(|p| p / lf - mean * mean).collect();
    let profile_se = s.prod.iter().zip(&s.prod2).map(|(a, b)| se(*a, *b, lf)).collect();
    let ed = profile
        .iter()
        .position(|g| g.max(0.0) >= gamma * total)
        .map_or(d, |k| k + 1);
    Ok(EdReport {
        threshold: gamma,
        samples: l,
        profile,
        profile_se,
        mean,
        total_variance: total,
        total_variance_se: se(s.phi2, s.phi4, lf),
        ed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrand::FnIntegrand;

    #[test]
    fn single_coordinate() {
        let f = FnIntegrand::new(3, |x: &[f64]| x[0]);
        let (g, _) = estimate_gamma(&f, 1, 1 << 16, 1).unwrap();
        assert!((g - 1.0).abs() < 0.05, "{g}");
    }

    #[test]
    fn additive_half() {
        let f = FnIntegrand::new(4, |x: &[f64]| x.iter().sum());
        let r = effective_dimension(&f, 0.9, 1 << 14, 2, Executor::default()).unwrap();
        let frac = r.fractions();
        assert!((frac[1] - 0.5).abs() < 0.05, "{frac:?}");
        assert_eq!(r.ed, 4);
        assert!((r.profile[3] - r.total_variance).abs() < 1e-12);
    }

    #[test]
    fn one_dimensional() {
        let f = FnIntegrand::new(1, |x: &[f64]| x[0].abs());
        let r = effective_dimension(&f, 0.9, 4096, 3, Executor::Sequential).unwrap();
        assert_eq!(r.ed, 1);
    }

    #[test]
    fn executors_agree() {
        let f = FnIntegrand::new(3, |x: &[f64]| (x[0] + 0.3 * x[1] * x[2]).exp());
        let a = effective_dimension(&f, 0.9, 5000, 4, Executor::Sequential).unwrap();
        let b = effective_dimension(&f, 0.9, 5000, 4, Executor::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn argument_checks() {
        let f = FnIntegrand::new(2, |x: &[f64]| x[0]);
        assert!(effective_dimension(&f, 1.0, 100, 1, Executor::Sequential).is_err());
        assert!(estimate_gamma(&f, 3, 100, 1).is_err());
        assert!(estimate_gamma(&f, 1, 1, 1).is_err());
    }
}
