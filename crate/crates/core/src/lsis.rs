//! Least-squares importance sampling: a Gaussian mean shift on `x_u`
//! fitted by Levenberg-Marquardt on the empirical second moment.

use crate::error::{Error, Result};
use crate::integrand::{Estimate, Integrand};
use crate::npis::{default_m, Subspace, QUASI_M};
use crate::rng::{inv_normal_open, mix_seed, PointKind, PointStream};

pub const LM_ITERATIONS: usize = 10;
pub const LM_INITIAL_DAMPING: f64 = 1e-3;
/// Damping increases allowed within one iteration before the fit stops.
pub const LM_MAX_REJECTIONS: usize = 16;

/// `N(μ, I)` on `x_u`, standard normal elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftProposal {
    mu: Vec<f64>,
    u: Subspace,
}

impl DriftProposal {
    pub fn new(mu: Vec<f64>, u: Subspace) -> Result<Self> {
        if mu.len() != u.len() {
            return Err(Error::DimensionMismatch {
                expected: u.len(),
                actual: mu.len(),
            });
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::Domain("drift must be finite".into()));
        }
        Ok(DriftProposal { mu, u })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn subspace(&self) -> &Subspace {
        &self.u
    }

    /// `log p(x_u) - log q_μ(x_u) = -μ·x_u + μ·μ/2`.
    #[inline]
    pub fn log_weight(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (&i, &m) in self.u.indices().iter().zip(&self.mu) {
            s += m * (0.5 * m - x[i]);
        }
        s
    }

    /// Maps `d` uniforms to a proposal point; returns the likelihood ratio.
    #[inline]
    pub fn transform(&self, uniforms: &[f64], out: &mut [f64]) -> f64 {
        let k = self.u.len();
        for ((&i, &v), &m) in self.u.indices().iter().zip(&uniforms[..k]).zip(&self.mu) {
            out[i] = inv_normal_open(v) + m;
        }
        for (&i, &v) in self.u.complement().iter().zip(&uniforms[k..]) {
            out[i] = inv_normal_open(v);
        }
        self.log_weight(out).exp()
    }
}

/// Nominal-density sample used for fitting: `x_u` rows and integrand values.
#[derive(Debug, Clone)]
pub struct FitSample {
    xu: Vec<f64>,
    phi: Vec<f64>,
    k: usize,
}

impl FitSample {
    pub fn new(xu: Vec<f64>, phi: Vec<f64>, k: usize) -> Result<Self> {
        if k == 0 || xu.len() != phi.len() * k {
            return Err(Error::DimensionMismatch {
                expected: phi.len() * k,
                actual: xu.len(),
            });
        }
        Ok(FitSample { xu, phi, k })
    }

    /// Draws `m` points from the nominal density.
    pub fn draw<F: Integrand>(f: &F, u: &Subspace, m: usize, seed: u64) -> Result<Self> {
        let d = f.dim();
        if u.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: u.dim() });
        }
        if m < 2 {
            return Err(Error::InvalidParameter { name: "M", reason: "must be at least 2".into() });
        }
        let mut stream = PointStream::pseudo(d, seed);
        let mut scratch = f.scratch();
        let mut v = vec![0.0; d];
        let mut x = vec![0.0; d];
        let mut xu = Vec::with_capacity(m * u.len());
        let mut phi = Vec::with_capacity(m);
        for _ in 0..m {
            stream.next_into(&mut v);
            for (o, &vi) in x.iter_mut().zip(&v) {
                *o = inv_normal_open(vi);
            }
            phi.push(f.eval(&x, &mut scratch));
            xu.extend(u.indices().iter().map(|&i| x[i]));
        }
        FitSample::new(xu, phi, u.len())
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    /// `Ŝ(μ) = (1/M) Σ φ_j² p(x_u^j) / q_μ(x_u^j)`.
    pub fn objective(&self, mu: &[f64]) -> f64 {
        let mut s = 0.0;
        for (x, &p) in self.xu.chunks_exact(self.k).zip(&self.phi) {
            if p != 0.0 {
                s += p * p * log_ratio(mu, x).exp();
            }
        }
        s / self.len() as f64
    }

    /// Levenberg-Marquardt on `r_j = φ_j √(p/q_μ)` for a fixed number of
    /// iterations from `μ = 0`. Each iteration multiplies the damping by 10
    /// until a step decreases `Ŝ` and divides it by 10 after acceptance.
    pub fn fit(&self) -> Result<Vec<f64>> {
        if !self.phi.iter().any(|&p| p != 0.0) {
            return Err(Error::TrialFailure(self.len()));
        }
        let k = self.k;
        let mut mu = vec![0.0; k];
        let mut obj = self.objective(&mu);
        let mut lambda = LM_INITIAL_DAMPING;
        for _ in 0..LM_ITERATIONS {
            // Normal equations JᵀJ and Jᵀr with ∂r/∂μ = r (μ - x_u) / 2.
            let mut a = [[0.0; 3]; 3];
            let mut b = [0.0; 3];
            for (x, &p) in self.xu.chunks_exact(k).zip(&self.phi) {
                if p == 0.0 {
                    continue;
                }
                let r = p * (0.5 * log_ratio(&mu, x)).exp();
                let mut j = [0.0; 3];
                for i in 0..k {
                    j[i] = 0.5 * r * (mu[i] - x[i]);
                }
                for i in 0..k {
                    b[i] += j[i] * r;
                    for l in 0..k {
                        a[i][l] += j[i] * j[l];
                    }
                }
            }
            // Raise the damping until the step decreases the objective.
            let mut accepted = false;
            for _ in 0..LM_MAX_REJECTIONS {
                let mut damped = a;
                for i in 0..k {
                    let diag = if a[i][i] > 0.0 { a[i][i] } else { 1.0 };
                    damped[i][i] += lambda * diag;
                }
                if let Some(step) = solve(&damped, &b, k) {
                    let trial: Vec<f64> = mu.iter().zip(&step).map(|(m, s)| m - s).collect();
                    let t_obj = self.objective(&trial);
                    if t_obj.is_finite() && t_obj < obj {
                        mu = trial;
                        obj = t_obj;
                        lambda /= 10.0;
                        accepted = true;
                        break;
                    }
                }
                lambda *= 10.0;
            }
            if !accepted {
                break;
            }
        }
        Ok(mu)
    }
}

#[inline]
fn log_ratio(mu: &[f64], xu: &[f64]) -> f64 {
    mu.iter().zip(xu).map(|(m, x)| m * (0.5 * m - x)).sum()
}

/// Gaussian elimination with partial pivoting on the leading `k x k` block.
fn solve(a: &[[f64; 3]; 3], b: &[f64; 3], k: usize) -> Option<[f64; 3]> {
    let mut m = *a;
    let mut y = *b;
    for c in 0..k {
        let p = (c..k).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if !(m[p][c].abs() > 0.0) {
            return None;
        }
        m.swap(c, p);
        y.swap(c, p);
        for r in c + 1..k {
            let f = m[r][c] / m[c][c];
            for l in c..k {
                m[r][l] -= f * m[c][l];
            }
            y[r] -= f * y[c];
        }
    }
    let mut x = [0.0; 3];
    for c in (0..k).rev() {
        let s: f64 = (c + 1..k).map(|l| m[c][l] * x[l]).sum();
        x[c] = (y[c] - s) / m[c][c];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Fits a drift from `m` nominal samples.
pub fn lsis_fit<F: Integrand>(f: &F, u: &Subspace, m: usize, seed: u64) -> Result<DriftProposal> {
    let sample = FitSample::draw(f, u, m, seed)?;
    DriftProposal::new(sample.fit()?, u.clone())
}

/// Per-sample terms `φ(x) p(x_u) / q_μ(x_u)`.
pub fn lsis_terms<F: Integrand>(f: &F, proposal: &DriftProposal, n: usize, stream: &mut PointStream) -> Result<Vec<f64>> {
    let d = f.dim();
    if proposal.u.dim() != d || stream.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: if stream.dim() != d { stream.dim() } else { proposal.u.dim() },
        });
    }
    let mut scratch = f.scratch();
    let mut v = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut terms = Vec::with_capacity(n);
    for _ in 0..n {
        stream.next_into(&mut v);
        let w = proposal.transform(&v, &mut x);
        let phi = f.eval(&x, &mut scratch);
        terms.push(if phi != 0.0 { phi * w } else { 0.0 });
    }
    Ok(terms)
}

pub fn lsis_estimate<F: Integrand>(f: &F, proposal: &DriftProposal, n: usize, stream: &mut PointStream) -> Result<Estimate> {
    Ok(Estimate::from_terms(&lsis_terms(f, proposal, n, stream)?))
}

/// Empirical `E[(φw)²] - E[φw]²`, the per-sample IS variance.
pub fn second_moment_diag<F: Integrand>(f: &F, proposal: &DriftProposal, n: usize, stream: &mut PointStream) -> Result<f64> {
    let t = lsis_terms(f, proposal, n, stream)?;
    let mean = t.iter().sum::<f64>() / n as f64;
    let second = t.iter().map(|x| x * x).sum::<f64>() / n as f64;
    Ok(second - mean * mean)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsisConfig {
    pub n: usize,
    /// Fitting sample size.
    pub m: usize,
    pub stage2: PointKind,
}

impl LsisConfig {
    pub fn new(n: usize) -> Self {
        LsisConfig {
            n,
            m: default_m(n),
            stage2: PointKind::Pseudo,
        }
    }

    pub fn quasi(n: usize) -> Self {
        LsisConfig {
            n,
            m: QUASI_M,
            stage2: PointKind::ShiftedSobol,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LsisRun {
    pub estimate: Estimate,
    pub proposal: DriftProposal,
}

/// Fit and estimate with independent sub-streams derived from `seed`.
pub fn lsis<F: Integrand>(f: &F, u: &Subspace, cfg: &LsisConfig, seed: u64) -> Result<LsisRun> {
    if cfg.n == 0 {
        return Err(Error::InvalidParameter { name: "N", reason: "must be positive".into() });
    }
    let proposal = lsis_fit(f, u, cfg.m, mix_seed(seed, 1))?;
    let mut stream = PointStream::new(cfg.stage2, f.dim(), mix_seed(seed, 2))?;
    let estimate = lsis_estimate(f, &proposal, cfg.n, &mut stream)?;
    Ok(LsisRun { estimate, proposal })
}
