//! Explicit structural causal model over binary features.
//!
//! The model shape is fixed: exogenous Bernoulli variables drive binary
//! features `Z_i`, a binary treatment `X = f_X(M_X, U_X)` and a binary
//! outcome `Y = f_Y(X, M_Y, U_Y)`, where `M_X`, `M_Y` are linear
//! combinations of the features. The first `n_observed` features are
//! observable; the rest are latent confounders.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Sampling regime for a single unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Observational,
    DoX0,
    DoX1,
}

/// Metadata recorded with a generated spec.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpecMeta {
    pub seed: Option<u64>,
    pub generator_version: String,
}

/// Complete parameterization of the structural causal model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmSpec {
    pub n_features: usize,
    pub n_observed: usize,
    pub mx_coeffs: Vec<f64>,
    pub my_coeffs: Vec<f64>,
    pub c_y: f64,
    pub pz: Vec<f64>,
    pub p_ux: f64,
    pub p_uy: f64,
    #[serde(default)]
    pub meta: SpecMeta,
    /// Off by default: the printed outcome function assigns 1 on both
    /// (0,1) and (1,2); setting this makes the second interval return 0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fy_second_branch_zero: bool,
}

impl ScmSpec {
    /// Validates field lengths and probability ranges.
    pub fn validate(&self) -> Result<()> {
        if self.n_observed == 0 || self.n_observed > self.n_features {
            return Err(Error::InvalidSpec(format!(
                "n_observed {} out of range for n_features {}",
                self.n_observed, self.n_features
            )));
        }
        for (name, v) in [("mx_coeffs", &self.mx_coeffs), ("my_coeffs", &self.my_coeffs)] {
            if v.len() != self.n_features {
                return Err(Error::InvalidSpec(format!(
                    "{name} has length {}, expected {}",
                    v.len(),
                    self.n_features
                )));
            }
        }
        if self.pz.len() != self.n_features {
            return Err(Error::InvalidSpec(format!(
                "pz has length {}, expected {}",
                self.pz.len(),
                self.n_features
            )));
        }
        for &p in self.pz.iter().chain([&self.p_ux, &self.p_uy]) {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidSpec(format!("probability {p} outside [0,1]")));
            }
        }
        Ok(())
    }

    pub fn n_unobserved(&self) -> usize {
        self.n_features - self.n_observed
    }

    /// Stable identity hash over the serialized spec, used to match
    /// counters and datasets to the spec that produced them.
    pub fn identity_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut out = String::with_capacity(16);
        for b in &digest[..8] {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}

/// One draw of every exogenous variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExogenousAssignment {
    pub uz: Vec<bool>,
    pub ux: bool,
    pub uy: bool,
}

/// Result of simulating one unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitOutcome {
    pub z: Vec<bool>,
    pub x: bool,
    pub y: bool,
    pub regime: Regime,
}

/// Dot product of the feature vector with the spec's `M_X` coefficients.
pub fn compute_mx(z: &[bool], spec: &ScmSpec) -> Result<f64> {
    dot(z, &spec.mx_coeffs)
}

/// Dot product of the feature vector with the spec's `M_Y` coefficients.
pub fn compute_my(z: &[bool], spec: &ScmSpec) -> Result<f64> {
    dot(z, &spec.my_coeffs)
}

fn dot(z: &[bool], coeffs: &[f64]) -> Result<f64> {
    if z.len() != coeffs.len() {
        return Err(Error::LengthMismatch {
            expected: coeffs.len(),
            got: z.len(),
        });
    }
    Ok(z.iter()
        .zip(coeffs)
        .filter(|(&zi, _)| zi)
        .map(|(_, &c)| c)
        .sum())
}

/// Treatment assignment: 1 iff `M_X + U_X > 0.5` (strict).
pub fn eval_fx(mx_val: f64, u_x: bool) -> bool {
    mx_val + u_x as u8 as f64 > 0.5
}

/// Outcome assignment: with `v = C_Y*X + M_Y + U_Y`, returns 1 iff
/// `v` lies in (0,1) or (1,2), all inequalities strict.
pub fn eval_fy(x: bool, my_val: f64, u_y: bool, c_y: f64) -> bool {
    let v = c_y * x as u8 as f64 + my_val + u_y as u8 as f64;
    (v > 0.0 && v < 1.0) || (v > 1.0 && v < 2.0)
}

/// `eval_fy` with the spec's second-branch flag applied.
pub fn eval_fy_spec(spec: &ScmSpec, x: bool, my_val: f64, u_y: bool) -> bool {
    if spec.fy_second_branch_zero {
        let v = spec.c_y * x as u8 as f64 + my_val + u_y as u8 as f64;
        v > 0.0 && v < 1.0
    } else {
        eval_fy(x, my_val, u_y, spec.c_y)
    }
}

/// Evaluates all structural equations for one exogenous draw.
pub fn simulate_unit(spec: &ScmSpec, exo: &ExogenousAssignment, regime: Regime) -> Result<UnitOutcome> {
    if exo.uz.len() != spec.n_features {
        return Err(Error::LengthMismatch {
            expected: spec.n_features,
            got: exo.uz.len(),
        });
    }
    let z = exo.uz.clone();
    let x = match regime {
        Regime::Observational => eval_fx(compute_mx(&z, spec)?, exo.ux),
        Regime::DoX0 => false,
        Regime::DoX1 => true,
    };
    let y = eval_fy_spec(spec, x, compute_my(&z, spec)?, exo.uy);
    Ok(UnitOutcome { z, x, y, regime })
}

/// Draws a random spec: coefficients uniform over `coeff_range`,
/// Bernoulli parameters uniform over `prob_range`.
pub fn random_scm(
    seed: u64,
    n_features: usize,
    n_observed: usize,
    coeff_range: (f64, f64),
    prob_range: (f64, f64),
) -> Result<ScmSpec> {
    if coeff_range.0 >= coeff_range.1 {
        return Err(Error::InvalidRange(format!(
            "coefficient range [{}, {}] is empty",
            coeff_range.0, coeff_range.1
        )));
    }
    if prob_range.0 >= prob_range.1 || prob_range.0 < 0.0 || prob_range.1 > 1.0 {
        return Err(Error::InvalidRange(format!(
            "probability range [{}, {}] must be a nonempty subrange of [0,1]",
            prob_range.0, prob_range.1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeff = Uniform::new(coeff_range.0, coeff_range.1);
    let prob = Uniform::new(prob_range.0, prob_range.1);
    let spec = ScmSpec {
        n_features,
        n_observed,
        mx_coeffs: (0..n_features).map(|_| coeff.sample(&mut rng)).collect(),
        my_coeffs: (0..n_features).map(|_| coeff.sample(&mut rng)).collect(),
        c_y: coeff.sample(&mut rng),
        pz: (0..n_features).map(|_| prob.sample(&mut rng)).collect(),
        p_ux: prob.sample(&mut rng),
        p_uy: prob.sample(&mut rng),
        meta: SpecMeta {
            seed: Some(seed),
            generator_version: GENERATOR_VERSION.to_string(),
        },
        fy_second_branch_zero: false,
    };
    spec.validate()?;
    Ok(spec)
}

pub const GENERATOR_VERSION: &str = "scm-gen-1";

/// The reference 20-feature model: 15 observable features, all constants
/// at full printed precision.
pub fn paper_scm() -> ScmSpec {
    ScmSpec {
        n_features: 20,
        n_observed: 15,
        mx_coeffs: vec![
            0.259223510143,
            -0.658140989167,
            -0.75025831768,
            0.162906462426,
            0.652023463285,
            -0.0892939586541,
            0.421469107769,
            -0.443129684766,
            0.802624388789,
            -0.225740978499,
            0.716621631717,
            0.0650682260309,
            -0.220690334026,
            0.156355773665,
            -0.50693672491,
            -0.707060278115,
            0.418812816935,
            -0.0822118703986,
            0.769299853833,
            -0.511585391002,
        ],
        my_coeffs: vec![
            -0.792867111918,
            0.759967136147,
            0.55437722369,
            0.503970540409,
            -0.527187144651,
            0.378619988091,
            0.269255196301,
            0.671597043594,
            0.396010142274,
            0.325228576643,
            0.657808327574,
            0.801655023993,
            0.0907679484097,
            -0.0713852594543,
            -0.0691046005285,
            -0.222582013343,
            -0.848408031595,
            -0.584285069026,
            -0.324874831799,
            0.625621583197,
        ],
        c_y: -0.77953605542,
        pz: vec![
            0.352913861526,
            0.460995855543,
            0.331702473392,
            0.885505026779,
            0.017026872706,
            0.380772701708,
            0.028092602705,
            0.220819399962,
            0.617742227477,
            0.981975046713,
            0.142042291381,
            0.833602592350,
            0.882938907115,
            0.542143191999,
            0.085023436884,
            0.645357252864,
            0.863787135134,
            0.460539711624,
            0.314014079207,
            0.685879388218,
        ],
        p_ux: 0.601680857267,
        p_uy: 0.497668975278,
        meta: SpecMeta {
            seed: None,
            generator_version: "reference-constants-v1".to_string(),
        },
        fy_second_branch_zero: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_vec(n: usize, idx: &[usize]) -> Vec<bool> {
        let mut v = vec![false; n];
        for &i in idx {
            v[i] = true;
        }
        v
    }

    #[test]
    fn mx_empty_sum() {
        let spec = paper_scm();
        assert_eq!(compute_mx(&vec![false; 20], &spec).unwrap(), 0.0);
    }

    #[test]
    fn mx_single_and_pair() {
        let spec = paper_scm();
        let e1 = unit_vec(20, &[0]);
        assert_eq!(compute_mx(&e1, &spec).unwrap(), 0.259223510143);
        let e12 = unit_vec(20, &[0, 1]);
        let expected = 0.259223510143 + (-0.658140989167);
        assert!((compute_mx(&e12, &spec).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn mx_length_mismatch_rejected() {
        let spec = paper_scm();
        assert!(compute_mx(&vec![false; 19], &spec).is_err());
    }

    #[test]
    fn fx_boundary() {
        assert!(eval_fx(0.6, false));
        assert!(!eval_fx(0.5, false));
        assert!(eval_fx(-0.3, true));
    }

    #[test]
    fn fy_intervals() {
        assert!(!eval_fy(false, -0.2, false, 0.7)); // v = -0.2
        assert!(eval_fy(true, -0.2, false, 0.7)); // v = 0.5
        assert!(eval_fy(false, -0.2, true, 0.7)); // v = 0.8
        assert!(!eval_fy(true, 0.8, true, 0.7)); // v = 2.5
    }

    #[test]
    fn fy_second_interval() {
        assert!(eval_fy(false, 0.5, true, 0.0)); // v = 1.5
        assert!(!eval_fy(false, 1.0, false, 0.0)); // v = 1.0 exactly
        assert!(!eval_fy(false, 2.0, false, 0.0)); // v = 2.0
    }

    #[test]
    fn fy_flipped_second_branch() {
        let mut spec = paper_scm();
        spec.fy_second_branch_zero = true;
        // v = 1.5 falls in the second interval, now mapped to 0
        assert!(!eval_fy_spec(&spec, false, 0.5, true));
        assert!(eval_fy_spec(&spec, false, 0.5, false));
    }

    #[test]
    fn simulate_all_zero_exo() {
        let spec = paper_scm();
        let exo = ExogenousAssignment {
            uz: vec![false; 20],
            ux: false,
            uy: false,
        };
        let out = simulate_unit(&spec, &exo, Regime::Observational).unwrap();
        assert!(!out.x);
        assert!(!out.y);
        let out = simulate_unit(&spec, &exo, Regime::DoX1).unwrap();
        assert!(out.x);
        assert!(!out.y); // v = c_y = -0.7795... not in (0,2)
    }

    #[test]
    fn simulate_deterministic() {
        let spec = paper_scm();
        let exo = ExogenousAssignment {
            uz: (0..20).map(|i| i % 3 == 0).collect(),
            ux: true,
            uy: false,
        };
        let a = simulate_unit(&spec, &exo, Regime::Observational).unwrap();
        let b = simulate_unit(&spec, &exo, Regime::Observational).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn random_scm_seeded() {
        let a = random_scm(42, 20, 15, (-1.0, 1.0), (0.0, 1.0)).unwrap();
        let b = random_scm(42, 20, 15, (-1.0, 1.0), (0.0, 1.0)).unwrap();
        assert_eq!(a, b);
        let c = random_scm(43, 20, 15, (-1.0, 1.0), (0.0, 1.0)).unwrap();
        assert_ne!(a, c);
        for &w in a.mx_coeffs.iter().chain(&a.my_coeffs) {
            assert!((-1.0..=1.0).contains(&w));
        }
        for &p in a.pz.iter().chain([&a.p_ux, &a.p_uy]) {
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn random_scm_bad_range() {
        assert!(random_scm(1, 4, 2, (1.0, -1.0), (0.0, 1.0)).is_err());
        assert!(random_scm(1, 4, 2, (-1.0, 1.0), (0.5, 1.5)).is_err());
    }

    #[test]
    fn paper_constants() {
        let spec = paper_scm();
        spec.validate().unwrap();
        assert_eq!(spec.c_y, -0.77953605542);
        assert_eq!(spec.pz[0], 0.352913861526);
        assert_eq!(spec.p_uy, 0.497668975278);
        assert_eq!(spec.n_observed, 15);
        assert_eq!(spec.n_features, 20);
    }

    #[test]
    fn spec_json_roundtrip_exact() {
        let spec = random_scm(7, 20, 15, (-1.0, 1.0), (0.0, 1.0)).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: ScmSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
        // bit-exact check on the floats
        for (a, b) in spec.mx_coeffs.iter().zip(&back.mx_coeffs) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    proptest! {
        #[test]
        fn fy_boundary_sweep(base in 0u8..3, eps in 1e-9f64..1e-3) {
            let b = base as f64;
            // just above the boundary
            let above = eval_fy(false, b + eps, false, 0.0);
            // just below
            let below = eval_fy(false, b - eps, false, 0.0);
            // exactly at
            let at = eval_fy(false, b, false, 0.0);
            prop_assert!(!at || (b != 0.0 && b != 1.0 && b != 2.0));
            match base {
                0 => { prop_assert!(above); prop_assert!(!below); prop_assert!(!at); }
                1 => { prop_assert!(above); prop_assert!(below); prop_assert!(!at); }
                _ => { prop_assert!(!above); prop_assert!(below); prop_assert!(!at); }
            }
        }

        #[test]
        fn do_regime_pins_x(seed in 0u64..1000) {
            let spec = random_scm(seed, 8, 5, (-1.0, 1.0), (0.0, 1.0)).unwrap();
            let exo = ExogenousAssignment {
                uz: (0..8).map(|i| (seed >> i) & 1 == 1).collect(),
                ux: seed % 2 == 0,
                uy: seed % 3 == 0,
            };
            prop_assert!(!simulate_unit(&spec, &exo, Regime::DoX0).unwrap().x);
            prop_assert!(simulate_unit(&spec, &exo, Regime::DoX1).unwrap().x);
        }

        #[test]
        fn mx_linear_disjoint(mask_a in 0u32..(1 << 10), mask_b in 0u32..(1 << 10)) {
            let spec = random_scm(3, 10, 5, (-1.0, 1.0), (0.0, 1.0)).unwrap();
            let a = mask_a & !mask_b;
            let b = mask_b & !mask_a;
            let to_vec = |m: u32| (0..10).map(|i| (m >> i) & 1 == 1).collect::<Vec<_>>();
            let together = compute_mx(&to_vec(a | b), &spec).unwrap();
            let apart = compute_mx(&to_vec(a), &spec).unwrap() + compute_mx(&to_vec(b), &spec).unwrap();
            prop_assert!((together - apart).abs() < 1e-12);
        }
    }
}
