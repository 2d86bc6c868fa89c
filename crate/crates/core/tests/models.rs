use npis::harness::{plain, ScenarioKind, ScenarioSpec};
use npis::models::{
    bs_path, cir_path, evaluate_payout, BsModel, CirModel, Model, Payout, PayoutInput, Scenario,
};
use npis::paths::{ConstructionKind, TimeGrid};
use npis::rng::{inv_normal_open, PointKind, PointStream};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

fn bs_straddle(s0: f64, k: f64, sigma: f64, r: f64, t: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    let sd = sigma * t.sqrt();
    let d1 = ((s0 / k).ln() + (r + 0.5 * sigma * sigma) * t) / sd;
    let d2 = d1 - sd;
    let df = (-r * t).exp();
    let call = s0 * n.cdf(d1) - k * df * n.cdf(d2);
    let put = k * df * n.cdf(-d2) - s0 * n.cdf(-d1);
    call + put
}

fn spec(kind: ScenarioKind) -> ScenarioSpec {
    ScenarioSpec::preset(kind)
}

#[test]
fn straddle_matches_closed_form() {
    let exact = bs_straddle(100.0, 100.0, 0.3, 0.05, 1.0);
    assert!((exact - 23.58).abs() < 0.01, "{exact}");
    let scn = spec(ScenarioKind::Straddle).build(ConstructionKind::RandomWalk).unwrap();
    let e = plain(&scn, PointKind::Pseudo, 1_000_000, 1).unwrap();
    assert!((e.mean - exact).abs() < 3.0 * e.se, "{} ± {}", e.mean, e.se);
}

#[test]
fn discounted_price_is_a_martingale() {
    let model = BsModel::new(100.0, 0.3, 0.05, 1.0).unwrap();
    let grid = TimeGrid::new(1, 1.0).unwrap();
    let mut s = PointStream::pseudo(1, 9);
    let n = 1_000_000;
    let v: Vec<f64> = (0..n)
        .map(|_| {
            let w = inv_normal_open(s.next_point()[0]);
            bs_path(&model, &grid, &[w])[0] * model.discount()
        })
        .collect();
    let m = v.iter().sum::<f64>() / n as f64;
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    assert!((m - 100.0).abs() < 3.0 * sd / (n as f64).sqrt(), "{m}");
}

#[test]
fn cir_rate_mean_reverts() {
    let model = CirModel::new(0.07, 0.2, 0.075, 0.02).unwrap();
    let grid = TimeGrid::new(16, 1.0).unwrap();
    let mut s = PointStream::pseudo(16, 10);
    let n = 100_000;
    let mut z = vec![0.0; 16];
    let last: Vec<f64> = (0..n)
        .map(|_| {
            s.next_into(&mut z);
            z.iter_mut().for_each(|x| *x = inv_normal_open(*x));
            *cir_path(&model, &grid, &z).unwrap().last().unwrap()
        })
        .collect();
    let m = last.iter().sum::<f64>() / n as f64;
    let sd = (last.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let t = 15.0 / 16.0;
    let exact = 0.075 + (0.07 - 0.075) * (-0.2f64 * t).exp();
    assert!(m > 0.07 && m < 0.075, "{m}");
    assert!((m - exact).abs() < 3.0 * sd / (n as f64).sqrt(), "{m} vs {exact}");
}

#[test]
fn constructions_give_the_same_price() {
    for kind in [ScenarioKind::Asian, ScenarioKind::AsianKo, ScenarioKind::CirCap, ScenarioKind::BasketAvg] {
        let sp = spec(kind);
        let a = plain(&sp.build(ConstructionKind::RandomWalk).unwrap(), PointKind::Pseudo, 200_000, 2).unwrap();
        let b = plain(&sp.build(ConstructionKind::Pca).unwrap(), PointKind::Pseudo, 200_000, 3).unwrap();
        let se = (a.se * a.se + b.se * b.se).sqrt();
        assert!((a.mean - b.mean).abs() < 3.0 * se, "{kind:?}: {} vs {}", a.mean, b.mean);
    }
}

#[test]
fn asian_price_decreases_in_strike() {
    let mut last = f64::INFINITY;
    for k in [90.0, 100.0, 110.0, 140.0, 175.0] {
        let mut sp = spec(ScenarioKind::Asian);
        sp.strike = k;
        let scn = sp.build(ConstructionKind::Pca).unwrap();
        // Common random numbers make the ordering exact path by path.
        let e = plain(&scn, PointKind::Pseudo, 20_000, 4).unwrap();
        assert!(e.mean <= last, "K={k}");
        last = e.mean;
    }
}

#[test]
fn deterministic_basket_limit() {
    let mut sp = spec(ScenarioKind::BasketAvg);
    sp.sigma = 0.0;
    let scn = sp.build(ConstructionKind::Pca).unwrap();
    let e = plain(&scn, PointKind::Pseudo, 100, 5).unwrap();
    let fwd = 100.0 * 0.05f64.exp();
    let want = (-0.05f64).exp() * (fwd - 100.0);
    assert!((e.mean - want).abs() < 1e-9 && e.se == 0.0);
}

#[test]
fn payout_input_mismatch_is_rejected() {
    let p = Payout::AsianCall { strike: 100.0 };
    assert!(evaluate_payout(&p, PayoutInput::Terminal(100.0)).is_err());
    assert!(Payout::Straddle { strike: -1.0 }.new_checked().is_err());
    assert!(BsModel::new(100.0, -0.1, 0.05, 1.0).is_err());
    assert!(BsModel::new(100.0, 0.3, 0.05, 0.0).is_err());
}

#[test]
fn basket_and_path_dimensions() {
    let base = BsModel::new(100.0, 0.3, 0.05, 1.0).unwrap();
    let scn = Scenario::new(
        Model::MultiAsset { base, assets: 3, rho: 0.3 },
        Payout::BasketMax { strike: 150.0 },
        99,
        ConstructionKind::Pca,
    )
    .unwrap();
    assert_eq!(scn.dim(), 3);
    assert!(scn.integrand(&[0.0; 4]).is_err());
    assert!(scn.integrand(&[0.0; 3]).unwrap() >= 0.0);
}

proptest! {
    #[test]
    fn payouts_are_non_negative(
        xs in prop::collection::vec(-4.0f64..4.0, 16),
        kind in 0usize..7,
        k in 50.0f64..200.0,
    ) {
        let mut sp = spec(ScenarioKind::ALL[kind]);
        sp.strike = if sp.kind == ScenarioKind::CirCap { k / 1000.0 } else { k };
        sp.barrier = sp.barrier.max(k + 1.0);
        let scn = sp.build(ConstructionKind::Pca).unwrap();
        let v = scn.integrand(&xs[..scn.dim()]).unwrap();
        prop_assert!(v >= 0.0 && v.is_finite());
    }

    #[test]
    fn straddle_payout_symmetric(s in 0.0f64..300.0, k in 1.0f64..200.0) {
        let p = Payout::Straddle { strike: k };
        let a = evaluate_payout(&p, PayoutInput::Terminal(s)).unwrap();
        let b = evaluate_payout(&p, PayoutInput::Terminal(2.0 * k - s)).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }
}
