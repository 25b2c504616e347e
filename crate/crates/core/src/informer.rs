//! Exact ground truth from an SCM spec: per-cell PNS and distributions,
//! marginalized over the unobserved features to per-subpopulation
//! quantities with true bounds.
//!
//! A "cell" is a full assignment of all features; a subpopulation fixes
//! only the observable ones and averages the cells that complete it,
//! weighted by the exogenous Bernoulli parameters of the unobserved
//! features.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{pns_bounds, CausationBounds, DistributionPair, Joint};
use crate::error::{Error, Result};
use crate::scm::{compute_mx, compute_my, eval_fx, eval_fy_spec, ScmSpec};

/// Packed identity of the observable features. Bit `i` (little-endian)
/// carries `Z_{i+1}`, so `Z_1` is the least significant bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubpopKey(pub u32);

impl SubpopKey {
    pub fn bits(self, n_observed: usize) -> Vec<bool> {
        (0..n_observed).map(|i| (self.0 >> i) & 1 == 1).collect()
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut k = 0u32;
        for (i, &b) in bits.iter().enumerate() {
            if b {
                k |= 1 << i;
            }
        }
        SubpopKey(k)
    }
}

/// Exact distributions for one cell or subpopulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellDistributions {
    pub p_y_do_x1: f64,
    pub p_y_do_x0: f64,
    /// `P(X=x, Y=y | .)`, indexed `[x][y]`
    pub joint: Joint,
    pub pns: f64,
}

impl CellDistributions {
    pub fn distribution_pair(&self) -> DistributionPair {
        DistributionPair {
            exp_y_given_do_x1: self.p_y_do_x1,
            exp_y_given_do_x0: self.p_y_do_x0,
            obs_joint: self.joint,
        }
    }
}

/// One informer row: exact distributions plus true PNS bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InformerRow {
    pub key: SubpopKey,
    pub dist: CellDistributions,
    pub lb: f64,
    pub ub: f64,
}

/// Complete table, one row per subpopulation, ordered by key.
#[derive(Debug, Clone, PartialEq)]
pub struct InformerTable {
    pub n_observed: usize,
    pub rows: Vec<InformerRow>,
}

/// Exact PNS for a fully specified cell: the exogenous expectation of the
/// indicator that `Y` flips from 0 to 1 under the intervention.
pub fn cell_pns(spec: &ScmSpec, z: &[bool]) -> Result<f64> {
    let my = compute_my(z, spec)?;
    let mut pns = 0.0;
    for uy in [false, true] {
        let t = !eval_fy_spec(spec, false, my, uy) && eval_fy_spec(spec, true, my, uy);
        if t {
            pns += if uy { spec.p_uy } else { 1.0 - spec.p_uy };
        }
    }
    Ok(pns)
}

/// Exact `P(Y=1 | do(X=x), z)`.
pub fn cell_experimental(spec: &ScmSpec, z: &[bool], x: bool) -> Result<f64> {
    let my = compute_my(z, spec)?;
    let mut p = 0.0;
    for uy in [false, true] {
        if eval_fy_spec(spec, x, my, uy) {
            p += if uy { spec.p_uy } else { 1.0 - spec.p_uy };
        }
    }
    Ok(p)
}

/// Exact observational joint `P(X=x, Y=y | z)` by enumeration of
/// `(U_X, U_Y)`.
pub fn cell_observational_joint(spec: &ScmSpec, z: &[bool]) -> Result<Joint> {
    let mx = compute_mx(z, spec)?;
    let my = compute_my(z, spec)?;
    let mut joint = [[0.0; 2]; 2];
    for ux in [false, true] {
        let p_ux = if ux { spec.p_ux } else { 1.0 - spec.p_ux };
        let x = eval_fx(mx, ux);
        for uy in [false, true] {
            let p_uy = if uy { spec.p_uy } else { 1.0 - spec.p_uy };
            let y = eval_fy_spec(spec, x, my, uy);
            joint[x as usize][y as usize] += p_ux * p_uy;
        }
    }
    Ok(joint)
}

/// Iterates the completions of a subpopulation with their weights.
/// Completion index `i` is read as a big-endian counter over the
/// unobserved features: `s_0` is all zeros, `s_1` sets only the last
/// feature, and so on.
fn completions(spec: &ScmSpec, key: SubpopKey) -> Vec<(Vec<bool>, f64)> {
    let k = spec.n_unobserved();
    let observed = key.bits(spec.n_observed);
    (0..1usize << k)
        .map(|i| {
            let mut z = observed.clone();
            let mut w = 1.0;
            for j in 0..k {
                let bit = (i >> (k - 1 - j)) & 1 == 1;
                z.push(bit);
                let p = spec.pz[spec.n_observed + j];
                w *= if bit { p } else { 1.0 - p };
            }
            (z, w)
        })
        .collect()
}

/// Weighted average of `cell_fn` over all completions of the key.
pub fn subpop_marginalize<F>(spec: &ScmSpec, key: SubpopKey, mut cell_fn: F) -> Result<f64>
where
    F: FnMut(&[bool]) -> Result<f64>,
{
    let mut acc = 0.0;
    for (z, w) in completions(spec, key) {
        acc += w * cell_fn(&z)?;
    }
    Ok(acc)
}

/// Subpopulation-level distributions: every cell quantity averaged with
/// the completion weights.
pub fn subpop_distributions(spec: &ScmSpec, key: SubpopKey) -> Result<CellDistributions> {
    let mut p1 = 0.0;
    let mut p0 = 0.0;
    let mut joint = [[0.0; 2]; 2];
    let mut pns = 0.0;
    for (z, w) in completions(spec, key) {
        p1 += w * cell_experimental(spec, &z, true)?;
        p0 += w * cell_experimental(spec, &z, false)?;
        let j = cell_observational_joint(spec, &z)?;
        for x in 0..2 {
            for y in 0..2 {
                joint[x][y] += w * j[x][y];
            }
        }
        pns += w * cell_pns(spec, &z)?;
    }
    Ok(CellDistributions {
        p_y_do_x1: p1,
        p_y_do_x0: p0,
        joint,
        pns,
    })
}

/// True PNS bounds for a subpopulation: exact distributions fed through
/// the tight-bound formulas.
pub fn subpop_true_bounds(spec: &ScmSpec, key: SubpopKey) -> Result<CausationBounds> {
    let dist = subpop_distributions(spec, key)?;
    Ok(pns_bounds(&dist.distribution_pair()))
}

/// Rows with more observable features than this would not fit the u32
/// key or the memory budget.
const MAX_OBSERVED: usize = 22;

/// Enumerates the full table, one row per subpopulation, ordered by key.
pub fn enumerate_informer(spec: &ScmSpec) -> Result<InformerTable> {
    spec.validate()?;
    if spec.n_observed > MAX_OBSERVED {
        return Err(Error::ResourceBudget(format!(
            "2^{} informer rows exceed the supported budget (max 2^{MAX_OBSERVED})",
            spec.n_observed
        )));
    }
    let n = 1u32 << spec.n_observed;
    let rows: Result<Vec<InformerRow>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let key = SubpopKey(k);
            let dist = subpop_distributions(spec, key)?;
            let b = pns_bounds(&dist.distribution_pair());
            Ok(InformerRow {
                key,
                dist,
                lb: b.lb,
                ub: b.ub,
            })
        })
        .collect();
    Ok(InformerTable {
        n_observed: spec.n_observed,
        rows: rows?,
    })
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

impl InformerTable {
    /// Writes the table as CSV with reals at 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "key")?;
        for i in 1..=self.n_observed {
            write!(w, ",z{i}")?;
        }
        writeln!(w, ",p_y_do_x1,p_y_do_x0,p_x1y1,p_x1y0,p_x0y1,p_x0y0,pns,lb,ub")?;
        for row in &self.rows {
            write!(w, "{}", row.key.0)?;
            for b in row.key.bits(self.n_observed) {
                write!(w, ",{}", b as u8)?;
            }
            let d = &row.dist;
            writeln!(
                w,
                ",{},{},{},{},{},{},{},{},{}",
                fmt17(d.p_y_do_x1),
                fmt17(d.p_y_do_x0),
                fmt17(d.joint[1][1]),
                fmt17(d.joint[1][0]),
                fmt17(d.joint[0][1]),
                fmt17(d.joint[0][0]),
                fmt17(d.pns),
                fmt17(row.lb),
                fmt17(row.ub),
            )?;
        }
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv_path(path: &Path) -> Result<InformerTable> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let n_observed = headers.iter().filter(|h| h.starts_with('z')).count();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let get = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::InvalidInput("short informer row".into()))?
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("bad informer value: {e}")))
            };
            let key: u32 = rec
                .get(0)
                .ok_or_else(|| Error::InvalidInput("missing key".into()))?
                .parse()
                .map_err(|e| Error::InvalidInput(format!("bad key: {e}")))?;
            let base = 1 + n_observed;
            rows.push(InformerRow {
                key: SubpopKey(key),
                dist: CellDistributions {
                    p_y_do_x1: get(base)?,
                    p_y_do_x0: get(base + 1)?,
                    joint: [
                        [get(base + 5)?, get(base + 4)?],
                        [get(base + 3)?, get(base + 2)?],
                    ],
                    pns: get(base + 6)?,
                },
                lb: get(base + 7)?,
                ub: get(base + 8)?,
            });
        }
        Ok(InformerTable { n_observed, rows })
    }
}
