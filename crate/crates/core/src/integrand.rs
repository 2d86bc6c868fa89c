//! Integrands `φ: R^d → [0, ∞)` over the standard normal density.

use crate::models::{Scenario, Workspace};

pub trait Integrand: Sync {
    type Scratch: Send;

    fn dim(&self) -> usize;

    fn scratch(&self) -> Self::Scratch;

    fn eval(&self, x: &[f64], scratch: &mut Self::Scratch) -> f64;
}

impl Integrand for Scenario {
    type Scratch = Workspace;

    fn dim(&self) -> usize {
        Scenario::dim(self)
    }

    fn scratch(&self) -> Workspace {
        self.workspace()
    }

    #[inline]
    fn eval(&self, x: &[f64], ws: &mut Workspace) -> f64 {
        self.phi(x, ws)
    }
}

/// Closure-backed integrand.
#[derive(Clone)]
pub struct FnIntegrand<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnIntegrand<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnIntegrand { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Integrand for FnIntegrand<F> {
    type Scratch = ();

    fn dim(&self) -> usize {
        self.dim
    }

    fn scratch(&self) {}

    #[inline]
    fn eval(&self, x: &[f64], _: &mut ()) -> f64 {
        (self.f)(x)
    }
}

/// A single-run estimate with its within-run standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    /// Sample mean and `sd / √n` of the per-sample terms.
    pub fn from_terms(terms: &[f64]) -> Estimate {
        let n = terms.len();
        if n == 0 {
            return Estimate { mean: f64::NAN, se: f64::NAN, n };
        }
        // Shifted by the first term so constant input gives an exact zero.
        let c = terms[0];
        let nf = n as f64;
        let dsum: f64 = terms.iter().map(|t| t - c).sum();
        let mean = c + dsum / nf;
        let se = if n > 1 {
            let ss: f64 = terms.iter().map(|t| (t - c) * (t - c)).sum::<f64>() - dsum * dsum / nf;
            (ss.max(0.0) / (nf - 1.0) / nf).sqrt()
        } else {
            0.0
        };
        Estimate { mean, se, n }
    }
}

/// Log of the standard normal density at `x`.
#[inline]
pub(crate) fn log_normal_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.918_938_533_204_672_7
}
