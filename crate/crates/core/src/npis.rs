//! Nonparametric partial importance sampling.
//!
//! Stage 1 samples a trial density that is uniform on a box over the
//! coordinates `u` and standard normal elsewhere, and turns the weighted
//! trial points into a linear blend frequency polygon estimate of the
//! `u`-marginal of the optimal proposal. Stage 2 samples `x_u` from a
//! defensive mixture of that estimate with the uniform box density, draws
//! the remaining coordinates from the nominal normal, and averages
//! `φ(x) p(x_u) / q(x_u)`.

use crate::error::{Error, Result};
use crate::integrand::{log_normal_pdf, Estimate, Integrand};
use crate::lbfp::{build_weighted_histogram, Grid, LbfpDensity, MAX_DIM};
use crate::rng::{inv_normal, inv_normal_open, mix_seed, PointKind, PointStream};

/// Ordered zero-based coordinate subset receiving importance sampling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subspace {
    indices: Vec<usize>,
    complement: Vec<usize>,
}

impl Subspace {
    pub fn new(indices: Vec<usize>, dim: usize) -> Result<Self> {
        if indices.is_empty() || indices.len() > MAX_DIM {
            return Err(Error::InvalidParameter {
                name: "u",
                reason: format!("size must be 1..={MAX_DIM}, got {}", indices.len()),
            });
        }
        if indices.len() > dim {
            return Err(Error::InvalidParameter {
                name: "u",
                reason: format!("size {} exceeds dimension {dim}", indices.len()),
            });
        }
        for (k, &i) in indices.iter().enumerate() {
            if i >= dim || indices[..k].contains(&i) {
                return Err(Error::InvalidParameter {
                    name: "u",
                    reason: format!("index {i} repeated or outside 0..{dim}"),
                });
            }
        }
        let complement = (0..dim).filter(|i| !indices.contains(i)).collect();
        Ok(Subspace { indices, complement })
    }

    /// The first `k` coordinates, as used under PCA ordering.
    pub fn leading(k: usize, dim: usize) -> Result<Self> {
        Subspace::new((0..k).collect(), dim)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.indices.len() + self.complement.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn complement(&self) -> &[usize] {
        &self.complement
    }

    /// `log p(x_u)` under the standard normal.
    #[inline]
    pub fn log_density(&self, x: &[f64]) -> f64 {
        self.indices.iter().map(|&i| log_normal_pdf(x[i])).sum()
    }
}

/// Box half-width with `P(max_j |Z_j| > ρ) = ε` over `m` standard normals.
pub fn rho_m(m: usize, eps: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidParameter {
            name: "M",
            reason: "must be at least 1".into(),
        });
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter {
            name: "eps",
            reason: format!("must lie in (0, 1), got {eps}"),
        });
    }
    // (1 - ε)^{1/m} via log1p/expm1 keeps precision for tiny ε.
    let tail = -((-eps).ln_1p() / m as f64).exp_m1();
    let level = 1.0 - 0.5 * tail;
    inv_normal(level)
}

/// Uniform on `[-ρ, ρ]^{|u|}` times standard normal on the complement.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDistribution {
    rho: f64,
    eps: f64,
    u: Subspace,
}

impl TrialDistribution {
    pub fn new(u: Subspace, m: usize, eps: f64) -> Result<Self> {
        let rho = rho_m(m, eps)?;
        Ok(TrialDistribution { rho, eps, u })
    }

    /// Trial density with an explicit half-width.
    pub fn with_rho(u: Subspace, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Domain(format!("box half-width must be positive, got {rho}")));
        }
        Ok(TrialDistribution { rho, eps: f64::NAN, u })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn subspace(&self) -> &Subspace {
        &self.u
    }

    /// Maps `d` uniforms to a trial point: the first `|u|` feed the box.
    #[inline]
    pub fn transform(&self, uniforms: &[f64], out: &mut [f64]) {
        let k = self.u.len();
        for (&i, &v) in self.u.indices.iter().zip(&uniforms[..k]) {
            out[i] = (2.0 * v - 1.0) * self.rho;
        }
        for (&i, &v) in self.u.complement.iter().zip(&uniforms[k..]) {
            out[i] = inv_normal_open(v);
        }
    }

    pub fn sample(&self, stream: &mut PointStream, out: &mut [f64]) {
        let mut v = vec![0.0; self.u.dim()];
        stream.next_into(&mut v);
        self.transform(&v, out);
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        if self.u.indices.iter().any(|&i| x[i].abs() > self.rho) {
            return 0.0;
        }
        let log_rest: f64 = self.u.complement.iter().map(|&i| log_normal_pdf(x[i])).sum();
        log_rest.exp() / (2.0 * self.rho).powi(self.u.len() as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpisConfig {
    /// Stage-2 sample count.
    pub n: usize,
    /// Stage-1 sample count.
    pub m: usize,
    pub eps: f64,
    /// Weight of the uniform component in the stage-2 mixture.
    pub beta: f64,
    pub bin_mult: f64,
    /// Stage 1 always uses pseudo-random points.
    pub stage2: PointKind,
}

pub const DEFAULT_EPS: f64 = 1e-4;
pub const DEFAULT_BETA: f64 = 0.05;
pub const QUASI_M: usize = 1024;

/// `max(256, ⌈N/4⌉)`.
pub fn default_m(n: usize) -> usize {
    256.max(n.div_ceil(4))
}

impl NpisConfig {
    pub fn new(n: usize) -> Self {
        NpisConfig {
            n,
            m: default_m(n),
            eps: DEFAULT_EPS,
            beta: DEFAULT_BETA,
            bin_mult: 1.0,
            stage2: PointKind::Pseudo,
        }
    }

    /// Shifted-Sobol stage 2 with `M = 1024` and a widened bin (`3h`, or `2h`
    /// for bimodal integrands).
    pub fn quasi(n: usize, bimodal: bool) -> Self {
        NpisConfig {
            m: QUASI_M,
            bin_mult: if bimodal { 2.0 } else { 3.0 },
            stage2: PointKind::ShiftedSobol,
            ..NpisConfig::new(n)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter { name: "N", reason: "must be positive".into() });
        }
        if self.m < 2 {
            return Err(Error::InvalidParameter { name: "M", reason: "must be at least 2".into() });
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: format!("must lie in [0, 1), got {}", self.beta),
            });
        }
        if !(self.bin_mult > 0.0 && self.bin_mult.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "hmult",
                reason: format!("must be positive, got {}", self.bin_mult),
            });
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidParameter {
                name: "eps",
                reason: format!("must lie in (0, 1), got {}", self.eps),
            });
        }
        Ok(())
    }
}

/// Asymptotically MSE-optimal bin width before the multiplier and clamping.
///
/// `variances` are the weighted variances of the `u` coordinates and
/// `means` the weighted means of the remaining coordinates.
pub fn h_opt(variances: &[f64], means: &[f64], rho: f64, m: usize) -> Result<f64> {
    let k = variances.len();
    if k == 0 || k > MAX_DIM {
        return Err(Error::Domain(format!("need 1..={MAX_DIM} variances, got {k}")));
    }
    if let Some(i) = variances.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::DegenerateProposal(i));
    }
    let h1 = 98.0 / 2880.0 * variances.iter().map(|v| 1.0 / (v * v)).sum::<f64>();
    let h2 = rho.powi(k as i32) * means.iter().map(|m| m * m).sum::<f64>().exp();
    let kf = k as f64;
    let ratio = kf * h2 * 2f64.powi(k as i32) / (4.0 * h1 * 3f64.powi(k as i32));
    let e = 1.0 / (4.0 + kf);
    Ok(ratio.powf(e) * (m as f64).powf(-e))
}

pub const MIN_BINS_PER_DIM: usize = 4;
pub const MAX_TOTAL_BINS: usize = 1 << 18;

/// Restricts `h` so a centred grid over `[-ρ, ρ]^k` has between 4 bins per
/// dimension and `2^18` bins in total.
pub fn clamp_bin_width(h: f64, rho: f64, k: usize) -> f64 {
    let hi = 2.0 * rho / MIN_BINS_PER_DIM as f64;
    let per_dim = (MAX_TOTAL_BINS as f64).powf(1.0 / k as f64).floor();
    // floor(2ρ/h) + 1 ≤ per_dim.
    let lo = 2.0 * rho / (per_dim - 1.0) * (1.0 + 1e-12);
    h.clamp(lo, hi)
}

/// Bin width from weighted trial points (`points` row-major in `u.dim()`
/// coordinates), clamped to the admissible grid range.
pub fn select_bin_width(points: &[f64], weights: &[f64], u: &Subspace, rho: f64, bin_mult: f64) -> Result<f64> {
    let d = u.dim();
    let m = weights.len();
    if points.len() != m * d {
        return Err(Error::DimensionMismatch {
            expected: m * d,
            actual: points.len(),
        });
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptyEstimate);
    }
    let mut mean = vec![0.0; d];
    for (x, &w) in points.chunks_exact(d).zip(weights) {
        if w != 0.0 {
            for (a, xi) in mean.iter_mut().zip(x) {
                *a += w * xi;
            }
        }
    }
    for a in mean.iter_mut() {
        *a /= total;
    }
    let mut var = vec![0.0; u.len()];
    for (x, &w) in points.chunks_exact(d).zip(weights) {
        if w != 0.0 {
            for (v, &i) in var.iter_mut().zip(&u.indices) {
                let c = x[i] - mean[i];
                *v += w * c * c;
            }
        }
    }
    for v in var.iter_mut() {
        *v /= total;
    }
    let means: Vec<f64> = u.complement.iter().map(|&i| mean[i]).collect();
    let h = h_opt(&var, &means, rho, m).map_err(|e| match e {
        Error::DegenerateProposal(j) => Error::DegenerateProposal(u.indices[j]),
        e => e,
    })?;
    Ok(clamp_bin_width(bin_mult * h, rho, u.len()))
}

/// Stage-1 output: the estimated proposal on `x_u`.
#[derive(Debug, Clone)]
pub struct ProposalEstimate {
    density: LbfpDensity,
    mixture: LbfpDensity,
    normalizer: f64,
    u: Subspace,
    beta: f64,
    rho: f64,
    m: usize,
}

impl ProposalEstimate {
    /// Wraps a density on `x_u` as a stage-2 proposal.
    pub fn from_density(density: LbfpDensity, u: Subspace, beta: f64, rho: f64) -> Result<Self> {
        if density.dim() != u.len() {
            return Err(Error::DimensionMismatch {
                expected: u.len(),
                actual: density.dim(),
            });
        }
        let mixture = density.defensive_mixture(beta)?;
        Ok(ProposalEstimate {
            normalizer: density.normalizer(),
            density,
            mixture,
            u,
            beta,
            rho,
            m: 0,
        })
    }

    /// The normalised blend estimate of the optimal marginal.
    pub fn density(&self) -> &LbfpDensity {
        &self.density
    }

    /// The stage-2 sampling density.
    pub fn mixture(&self) -> &LbfpDensity {
        &self.mixture
    }

    /// `(1/M) Σ ω`, itself an unbiased estimate of the integral.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn subspace(&self) -> &Subspace {
        &self.u
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn bin_width(&self) -> f64 {
        self.density.grid().width()
    }

    pub fn trial_samples(&self) -> usize {
        self.m
    }

    /// Region on which the mixture is positive.
    pub fn support(&self) -> Vec<(f64, f64)> {
        self.density.grid().support()
    }

    /// Maps `d` uniforms to a stage-2 point and returns `p(x_u) / q(x_u)`.
    #[inline]
    pub fn transform(&self, uniforms: &[f64], xu: &mut [f64], out: &mut [f64]) -> f64 {
        let k = self.u.len();
        let q = self.mixture.sample(&uniforms[..k], xu);
        for (&i, &v) in self.u.indices.iter().zip(xu.iter()) {
            out[i] = v;
        }
        for (&i, &v) in self.u.complement.iter().zip(&uniforms[k..]) {
            out[i] = inv_normal_open(v);
        }
        if q > 0.0 {
            self.u.log_density(out).exp() / q
        } else {
            // Only reachable on a measure-zero boundary with β = 0.
            0.0
        }
    }
}

/// Draws `M` trial points and builds the proposal estimate.
pub fn stage1<F: Integrand>(f: &F, u: &Subspace, cfg: &NpisConfig, seed: u64) -> Result<ProposalEstimate> {
    cfg.validate()?;
    let d = f.dim();
    if u.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: u.dim() });
    }
    let trial = TrialDistribution::new(u.clone(), cfg.m, cfg.eps)?;
    let rho = trial.rho();
    let k = u.len();
    let scale = (2.0 * rho).powi(k as i32);

    let mut stream = PointStream::pseudo(d, seed);
    let mut scratch = f.scratch();
    let mut v = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut points = Vec::with_capacity(cfg.m * d);
    let mut weights = Vec::with_capacity(cfg.m);
    for _ in 0..cfg.m {
        stream.next_into(&mut v);
        trial.transform(&v, &mut x);
        let phi = f.eval(&x, &mut scratch);
        let w = if phi > 0.0 { phi * u.log_density(&x).exp() * scale } else { 0.0 };
        points.extend_from_slice(&x);
        weights.push(w);
    }
    if !weights.iter().any(|&w| w > 0.0) {
        return Err(Error::TrialFailure(cfg.m));
    }

    let h = select_bin_width(&points, &weights, u, rho, cfg.bin_mult)?;
    let grid = Grid::centered(k, rho, h)?;
    let xu: Vec<f64> = points
        .chunks_exact(d)
        .flat_map(|p| u.indices.iter().map(move |&i| p[i]))
        .collect();
    let density = build_weighted_histogram(&xu, &weights, grid)?;
    let mut est = ProposalEstimate::from_density(density, u.clone(), cfg.beta, rho)?;
    est.m = cfg.m;
    Ok(est)
}

/// Per-sample stage-2 terms `φ(x) p(x_u) / q(x_u)`.
pub fn stage2_terms<F: Integrand>(f: &F, proposal: &ProposalEstimate, n: usize, stream: &mut PointStream) -> Result<Vec<f64>> {
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
    let mut xu = vec![0.0; proposal.u.len()];
    let mut terms = Vec::with_capacity(n);
    for _ in 0..n {
        stream.next_into(&mut v);
        let w = proposal.transform(&v, &mut xu, &mut x);
        let phi = f.eval(&x, &mut scratch);
        terms.push(if phi != 0.0 { phi * w } else { 0.0 });
    }
    Ok(terms)
}

pub fn stage2<F: Integrand>(f: &F, proposal: &ProposalEstimate, n: usize, stream: &mut PointStream) -> Result<Estimate> {
    Ok(Estimate::from_terms(&stage2_terms(f, proposal, n, stream)?))
}

/// One complete run.
#[derive(Debug, Clone)]
pub struct NpisRun {
    pub estimate: Estimate,
    pub proposal: ProposalEstimate,
}

/// Both stages with independent sub-streams derived from `seed`.
pub fn npis<F: Integrand>(f: &F, u: &Subspace, cfg: &NpisConfig, seed: u64) -> Result<NpisRun> {
    let proposal = stage1(f, u, cfg, mix_seed(seed, 1))?;
    let mut stream = PointStream::new(cfg.stage2, f.dim(), mix_seed(seed, 2))?;
    let estimate = stage2(f, &proposal, cfg.n, &mut stream)?;
    Ok(NpisRun { estimate, proposal })
}

/// NPIS with a randomly shifted Sobol stage 2.
pub fn qnpis<F: Integrand>(f: &F, u: &Subspace, cfg: &NpisConfig, seed: u64) -> Result<NpisRun> {
    let cfg = NpisConfig {
        stage2: PointKind::ShiftedSobol,
        ..*cfg
    };
    npis(f, u, &cfg, seed)
}
