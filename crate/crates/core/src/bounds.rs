//! Tian-Pearl bounds and monotonic identifiability formulas for the
//! probabilities of causation PNS, PN, and PS.
//!
//! All formulas are functions of a [`DistributionPair`]: the experimental
//! causal effects `P(y_x)`, `P(y_{x'})` and the observational joint
//! `P(X, Y)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CONSISTENCY_TOL: f64 = 1e-9;
const DENOM_TOL: f64 = 1e-12;

/// 2x2 observational joint, indexed `[x][y]`.
pub type Joint = [[f64; 2]; 2];

/// Experimental and observational distributions for one (sub)population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionPair {
    /// `P(Y=1 | do(X=1))`
    pub exp_y_given_do_x1: f64,
    /// `P(Y=1 | do(X=0))`
    pub exp_y_given_do_x0: f64,
    /// `P(X=x, Y=y)`, indexed `[x][y]`
    pub obs_joint: Joint,
}

impl DistributionPair {
    pub fn p_y(&self) -> f64 {
        self.obs_joint[1][1] + self.obs_joint[0][1]
    }

    /// `P(x, y)` with `x = y = 1`.
    pub fn p_xy(&self) -> f64 {
        self.obs_joint[1][1]
    }

    pub fn p_x_y_prime(&self) -> f64 {
        self.obs_joint[1][0]
    }

    pub fn p_x_prime_y(&self) -> f64 {
        self.obs_joint[0][1]
    }

    pub fn p_x_prime_y_prime(&self) -> f64 {
        self.obs_joint[0][0]
    }

    pub fn validate(&self) -> Result<()> {
        let mut sum = 0.0;
        for row in &self.obs_joint {
            for &p in row {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidInput(format!("joint entry {p} outside [0,1]")));
                }
                sum += p;
            }
        }
        if (sum - 1.0).abs() > CONSISTENCY_TOL {
            return Err(Error::InvalidInput(format!("joint sums to {sum}, expected 1")));
        }
        for &p in [&self.exp_y_given_do_x1, &self.exp_y_given_do_x0] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!("causal effect {p} outside [0,1]")));
            }
        }
        Ok(())
    }
}

/// Which probability of causation a bound pair refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quantity {
    Pns,
    Pn,
    Ps,
}

/// A lower/upper bound pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CausationBounds {
    pub quantity: Quantity,
    pub lb: f64,
    pub ub: f64,
    /// `lb <= ub` up to tolerance; sampling noise can produce crossed
    /// bounds, which are reported rather than rejected.
    pub consistent: bool,
}

impl CausationBounds {
    fn new(quantity: Quantity, lb: f64, ub: f64) -> Self {
        CausationBounds {
            quantity,
            lb,
            ub,
            consistent: lb <= ub + CONSISTENCY_TOL,
        }
    }
}

/// Tight PNS bounds.
///
/// lb = max{0, P(y_x)-P(y_{x'}), P(y)-P(y_{x'}), P(y_x)-P(y)}
/// ub = min{P(y_x), P(y'_{x'}), P(x,y)+P(x',y'), P(y_x)-P(y_{x'})+P(x,y')+P(x',y)}
pub fn pns_bounds(dp: &DistributionPair) -> CausationBounds {
    let p_yx = dp.exp_y_given_do_x1;
    let p_yxp = dp.exp_y_given_do_x0;
    let p_y = dp.p_y();
    let lb = [0.0, p_yx - p_yxp, p_y - p_yxp, p_yx - p_y]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let ub = [
        p_yx,
        1.0 - p_yxp,
        dp.p_xy() + dp.p_x_prime_y_prime(),
        p_yx - p_yxp + dp.p_x_y_prime() + dp.p_x_prime_y(),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min);
    CausationBounds::new(Quantity::Pns, lb, ub)
}

/// Tight PN bounds; requires `P(x,y) > 0`.
pub fn pn_bounds(dp: &DistributionPair) -> Result<CausationBounds> {
    let p_xy = dp.p_xy();
    if p_xy < DENOM_TOL {
        return Err(Error::UndefinedQuantity(
            "PN conditions on (x, y) but P(x,y) = 0".into(),
        ));
    }
    let lb = (0.0f64).max((dp.p_y() - dp.exp_y_given_do_x0) / p_xy);
    let ub = (1.0f64).min((1.0 - dp.exp_y_given_do_x0 - dp.p_x_prime_y_prime()) / p_xy);
    Ok(CausationBounds::new(Quantity::Pn, lb, ub))
}

/// Tight PS bounds; requires `P(x',y') > 0`.
pub fn ps_bounds(dp: &DistributionPair) -> Result<CausationBounds> {
    let p_xpyp = dp.p_x_prime_y_prime();
    if p_xpyp < DENOM_TOL {
        return Err(Error::UndefinedQuantity(
            "PS conditions on (x', y') but P(x',y') = 0".into(),
        ));
    }
    let p_y_prime = 1.0 - dp.p_y();
    let p_yp_x = 1.0 - dp.exp_y_given_do_x1;
    let lb = (0.0f64).max((p_y_prime - p_yp_x) / p_xpyp);
    let ub = (1.0f64).min((dp.exp_y_given_do_x1 - dp.p_xy()) / p_xpyp);
    Ok(CausationBounds::new(Quantity::Ps, lb, ub))
}

/// Point estimates under monotonicity (`y'_x AND y_{x'}` impossible).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEstimates {
    pub pns: f64,
    pub pn: f64,
    pub ps: f64,
}

/// Identifiable point values when the caller asserts monotonicity.
pub fn identifiable_point_estimates(dp: &DistributionPair) -> Result<PointEstimates> {
    let p_xy = dp.p_xy();
    let p_xpyp = dp.p_x_prime_y_prime();
    if p_xy < DENOM_TOL {
        return Err(Error::UndefinedQuantity("PN undefined: P(x,y) = 0".into()));
    }
    if p_xpyp < DENOM_TOL {
        return Err(Error::UndefinedQuantity("PS undefined: P(x',y') = 0".into()));
    }
    let p_y = dp.p_y();
    Ok(PointEstimates {
        pns: dp.exp_y_given_do_x1 - dp.exp_y_given_do_x0,
        pn: (p_y - dp.exp_y_given_do_x0) / p_xy,
        ps: (dp.exp_y_given_do_x1 - p_y) / p_xpyp,
    })
}

/// One violated cross-regime compatibility inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyViolation {
    pub inequality: String,
    pub slack: f64,
}

/// Checks the compatibility constraints linking experimental and
/// observational distributions:
/// `P(x,y) <= P(y_x) <= 1 - P(x,y')` and
/// `P(x',y) <= P(y_{x'}) <= 1 - P(x',y')`.
pub fn check_consistency(dp: &DistributionPair) -> Vec<ConsistencyViolation> {
    let mut out = Vec::new();
    let checks = [
        ("P(x,y) <= P(y_x)", dp.exp_y_given_do_x1 - dp.p_xy()),
        ("P(y_x) <= 1 - P(x,y')", 1.0 - dp.p_x_y_prime() - dp.exp_y_given_do_x1),
        ("P(x',y) <= P(y_x')", dp.exp_y_given_do_x0 - dp.p_x_prime_y()),
        (
            "P(y_x') <= 1 - P(x',y')",
            1.0 - dp.p_x_prime_y_prime() - dp.exp_y_given_do_x0,
        ),
    ];
    for (name, slack) in checks {
        if slack < -CONSISTENCY_TOL {
            out.push(ConsistencyViolation {
                inequality: name.to_string(),
                slack,
            });
        }
    }
    out
}
