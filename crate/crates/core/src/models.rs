//! Market models, payouts and the integrand `φ(x) = e^{-rT} C(S(x))`.

use crate::error::{Error, Result};
use crate::paths::{correlation_pca, equicorrelation, Construction, ConstructionKind, TimeGrid};

/// Black-Scholes dynamics with constant volatility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsModel {
    pub s0: f64,
    pub sigma: f64,
    pub r: f64,
    pub t: f64,
}

impl BsModel {
    /// `sigma = 0` is accepted so deterministic limits can be priced.
    pub fn new(s0: f64, sigma: f64, r: f64, t: f64) -> Result<Self> {
        if !(s0 > 0.0) {
            return Err(bad("S0", format!("must be positive, got {s0}")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(bad("sigma", format!("must be non-negative, got {sigma}")));
        }
        if !r.is_finite() {
            return Err(bad("r", "must be finite".into()));
        }
        if !(t > 0.0) {
            return Err(bad("T", format!("must be positive, got {t}")));
        }
        Ok(BsModel { s0, sigma, r, t })
    }

    pub fn discount(&self) -> f64 {
        (-self.r * self.t).exp()
    }
}

/// `S(t_k) = S0 exp[(r - σ²/2) t_k + σ W(t_k)]`.
pub fn bs_path(model: &BsModel, grid: &TimeGrid, w: &[f64]) -> Vec<f64> {
    let drift = model.r - 0.5 * model.sigma * model.sigma;
    grid.times()
        .iter()
        .zip(w)
        .map(|(&t, &wt)| model.s0 * (drift * t + model.sigma * wt).exp())
        .collect()
}

/// Cox-Ingersoll-Ross short rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirModel {
    pub r0: f64,
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
}

impl CirModel {
    pub fn new(r0: f64, kappa: f64, theta: f64, sigma: f64) -> Result<Self> {
        if !(r0 > 0.0) {
            return Err(bad("r0", format!("must be positive, got {r0}")));
        }
        if !(kappa >= 0.0) {
            return Err(bad("kappa", format!("must be non-negative, got {kappa}")));
        }
        if !(theta > 0.0) {
            return Err(bad("theta", format!("must be positive, got {theta}")));
        }
        if !(sigma >= 0.0) {
            return Err(bad("sigma", format!("must be non-negative, got {sigma}")));
        }
        Ok(CirModel {
            r0,
            kappa,
            theta,
            sigma,
        })
    }
}

/// Full-truncation Euler rates `r_{t_0}, ..., r_{t_{d-1}}` driven by innovations `z`.
pub fn cir_path(model: &CirModel, grid: &TimeGrid, z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != grid.steps() {
        return Err(Error::DimensionMismatch {
            expected: grid.steps(),
            actual: z.len(),
        });
    }
    let mut out = vec![0.0; z.len()];
    cir_rates(model, grid.dt(), z, &mut out);
    Ok(out)
}

#[inline]
fn cir_rates(model: &CirModel, dt: f64, z: &[f64], out: &mut [f64]) {
    let sdt = dt.sqrt();
    let mut r = model.r0;
    for (k, o) in out.iter_mut().enumerate() {
        *o = r;
        if k + 1 < z.len() {
            r += model.kappa * (model.theta - r) * dt + model.sigma * r.max(0.0).sqrt() * sdt * z[k];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Payout {
    Straddle { strike: f64 },
    AsianCall { strike: f64 },
    AsianKnockout { strike: f64, barrier: f64 },
    AsianStraddle { strike: f64 },
    BasketAverage { strike: f64 },
    BasketMax { strike: f64 },
    CirCap { strike: f64 },
}

/// What a payout is evaluated on.
#[derive(Debug, Clone, Copy)]
pub enum PayoutInput<'a> {
    Terminal(f64),
    Path(&'a [f64]),
    Basket(&'a [f64]),
    Rates { rates: &'a [f64], dt: f64 },
}

impl PayoutInput<'_> {
    fn name(&self) -> &'static str {
        match self {
            PayoutInput::Terminal(_) => "terminal",
            PayoutInput::Path(_) => "path",
            PayoutInput::Basket(_) => "basket",
            PayoutInput::Rates { .. } => "rates",
        }
    }
}

impl Payout {
    pub fn new_checked(self) -> Result<Self> {
        let k = self.strike();
        if !(k > 0.0) {
            return Err(bad("K", format!("strike must be positive, got {k}")));
        }
        if let Payout::AsianKnockout { strike, barrier } = self {
            if !(barrier > strike) {
                return Err(bad("K_ko", "knock-out level must exceed the strike".into()));
            }
        }
        Ok(self)
    }

    pub fn strike(&self) -> f64 {
        match *self {
            Payout::Straddle { strike }
            | Payout::AsianCall { strike }
            | Payout::AsianKnockout { strike, .. }
            | Payout::AsianStraddle { strike }
            | Payout::BasketAverage { strike }
            | Payout::BasketMax { strike }
            | Payout::CirCap { strike } => strike,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Payout::Straddle { .. } => "straddle",
            Payout::AsianCall { .. } => "asian",
            Payout::AsianKnockout { .. } => "asian-ko",
            Payout::AsianStraddle { .. } => "asian-straddle",
            Payout::BasketAverage { .. } => "basket-avg",
            Payout::BasketMax { .. } => "basket-max",
            Payout::CirCap { .. } => "cir-cap",
        }
    }

    /// Payouts whose optimal proposal is bimodal.
    pub fn is_bimodal(&self) -> bool {
        matches!(self, Payout::Straddle { .. } | Payout::AsianStraddle { .. })
    }
}

/// Undiscounted cashflow (for the cap, the discounted sum of caplets).
pub fn evaluate_payout(payout: &Payout, input: PayoutInput<'_>) -> Result<f64> {
    use PayoutInput::*;
    let mismatch = || Error::PayoutInput {
        payout: payout.name(),
        input: input.name(),
    };
    let v = match (*payout, input) {
        (Payout::Straddle { strike }, Terminal(s)) => (s - strike).abs(),
        (Payout::Straddle { strike }, Path(p)) => (p.last().ok_or_else(mismatch)? - strike).abs(),
        (Payout::AsianCall { strike }, Path(p)) => (mean(p) - strike).max(0.0),
        (Payout::AsianKnockout { strike, barrier }, Path(p)) => {
            let a = mean(p);
            if a < barrier {
                (a - strike).max(0.0)
            } else {
                0.0
            }
        }
        (Payout::AsianStraddle { strike }, Path(p)) => (mean(p) - strike).abs(),
        (Payout::BasketAverage { strike }, Basket(s)) => (mean(s) - strike).max(0.0),
        (Payout::BasketMax { strike }, Basket(s)) => {
            (s.iter().copied().fold(f64::NEG_INFINITY, f64::max) - strike).max(0.0)
        }
        (Payout::CirCap { strike }, Rates { rates, dt }) => cap_value(rates, dt, strike),
        _ => return Err(mismatch()),
    };
    Ok(v)
}

#[inline]
fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[inline]
fn cap_value(rates: &[f64], dt: f64, strike: f64) -> f64 {
    let mut acc = 0.0;
    let mut total = 0.0;
    for &r in rates {
        acc += r;
        if r > strike {
            total += (-dt * acc).exp() * (r - strike);
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    /// Single asset observed on a time grid.
    BlackScholes(BsModel),
    /// `assets` terminal values with common pairwise correlation `rho`.
    MultiAsset { base: BsModel, assets: usize, rho: f64 },
    Cir { model: CirModel, horizon: f64 },
}

/// A pricing problem: model, payout, time grid and path construction.
#[derive(Debug, Clone)]
pub struct Scenario {
    model: Model,
    payout: Payout,
    grid: TimeGrid,
    construction: Construction,
    drift: Vec<f64>,
    discount: f64,
}

/// Scratch buffers for integrand evaluation.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    gauss: Vec<f64>,
    values: Vec<f64>,
}

impl Scenario {
    /// `steps` is the number of time steps (ignored for multi-asset and
    /// straddle models, which use the asset count and one step respectively).
    pub fn new(model: Model, payout: Payout, steps: usize, kind: ConstructionKind) -> Result<Self> {
        let payout = payout.new_checked()?;
        let (grid, construction, drift, discount) = match model {
            Model::BlackScholes(m) => {
                let steps = if matches!(payout, Payout::Straddle { .. }) { steps.max(1) } else { steps };
                match payout {
                    Payout::Straddle { .. }
                    | Payout::AsianCall { .. }
                    | Payout::AsianKnockout { .. }
                    | Payout::AsianStraddle { .. } => {}
                    _ => return Err(Error::PayoutInput { payout: payout.name(), input: "path" }),
                }
                let grid = TimeGrid::new(steps, m.t)?;
                let c = Construction::for_grid(kind, &grid)?;
                let mu = m.r - 0.5 * m.sigma * m.sigma;
                let drift = grid.times().iter().map(|t| mu * t).collect();
                (grid, c, drift, m.discount())
            }
            Model::MultiAsset { base, assets, rho } => {
                if !matches!(payout, Payout::BasketAverage { .. } | Payout::BasketMax { .. }) {
                    return Err(Error::PayoutInput { payout: payout.name(), input: "basket" });
                }
                let grid = TimeGrid::new(assets, base.t)?;
                let c = match kind {
                    ConstructionKind::Pca => Construction::from_basis(correlation_pca(assets, rho)?),
                    ConstructionKind::RandomWalk => Construction::cholesky(&equicorrelation(assets, rho)?)?,
                };
                let mu = (base.r - 0.5 * base.sigma * base.sigma) * base.t;
                (grid, c, vec![mu; assets], base.discount())
            }
            Model::Cir { model: _, horizon } => {
                if !matches!(payout, Payout::CirCap { .. }) {
                    return Err(Error::PayoutInput { payout: payout.name(), input: "rates" });
                }
                let grid = TimeGrid::new(steps, horizon)?;
                let c = Construction::for_grid(kind, &grid)?;
                (grid, c, Vec::new(), 1.0)
            }
        };
        Ok(Scenario {
            model,
            payout,
            grid,
            construction,
            drift,
            discount,
        })
    }

    /// Nominal dimension of the normal input.
    pub fn dim(&self) -> usize {
        self.construction.dim()
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn payout(&self) -> &Payout {
        &self.payout
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn construction(&self) -> &Construction {
        &self.construction
    }

    pub fn workspace(&self) -> Workspace {
        Workspace {
            gauss: vec![0.0; self.dim()],
            values: vec![0.0; self.dim()],
        }
    }

    /// Checked evaluation of `φ(x)`.
    pub fn integrand(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(self.phi(x, &mut self.workspace()))
    }

    /// `φ(x)`; `x` must have length `dim()`.
    #[inline]
    pub fn phi(&self, x: &[f64], ws: &mut Workspace) -> f64 {
        let d = self.dim();
        ws.gauss.resize(d, 0.0);
        ws.values.resize(d, 0.0);
        self.construction.apply(x, &mut ws.gauss);
        match self.model {
            Model::BlackScholes(m) => {
                for ((v, &w), &mu) in ws.values.iter_mut().zip(&ws.gauss).zip(&self.drift) {
                    *v = m.s0 * (mu + m.sigma * w).exp();
                }
                self.discount * self.payout_on(PayoutInput::Path(&ws.values))
            }
            Model::MultiAsset { base, .. } => {
                let vol = base.sigma * base.t.sqrt();
                for ((v, &z), &mu) in ws.values.iter_mut().zip(&ws.gauss).zip(&self.drift) {
                    *v = base.s0 * (mu + vol * z).exp();
                }
                self.discount * self.payout_on(PayoutInput::Basket(&ws.values))
            }
            Model::Cir { model, .. } => {
                let dt = self.grid.dt();
                let inv = 1.0 / dt.sqrt();
                // Brownian increments back to innovations.
                let mut prev = 0.0;
                for g in ws.gauss.iter_mut() {
                    let w = *g;
                    *g = (w - prev) * inv;
                    prev = w;
                }
                cir_rates(&model, dt, &ws.gauss, &mut ws.values);
                self.payout_on(PayoutInput::Rates { rates: &ws.values, dt })
            }
        }
    }

    #[inline]
    fn payout_on(&self, input: PayoutInput<'_>) -> f64 {
        // Kind/input agreement is checked in `new`.
        evaluate_payout(&self.payout, input).unwrap_or(0.0)
    }
}

fn bad(name: &'static str, reason: String) -> Error {
    Error::InvalidParameter { name, reason }
}
