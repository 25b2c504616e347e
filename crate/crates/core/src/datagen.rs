//! Seeded Monte-Carlo sample generation and labeled dataset construction.
//!
//! Samples are never materialized: each one is routed into a per-key 2x2
//! counter of (x, y), which is a sufficient statistic for the bound
//! formulas. Every sample draws from its own PRNG substream (stream id =
//! sample index), so the result is independent of how the index range is
//! partitioned across workers.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{pns_bounds, DistributionPair};
use crate::error::{Error, Result};
use crate::informer::SubpopKey;
use crate::scm::{eval_fx, eval_fy_spec, ScmSpec};

pub const PRNG_ALGORITHM: &str = "chacha8/stream-per-sample/v1";

/// Which regime a counter set was generated under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegimeKind {
    /// X randomized Bernoulli(0.5), then do(X).
    Experimental,
    /// X set by the structural function.
    Observational,
}

/// Per-subpopulation 2x2 counts of (x, y) for both regimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleCounters {
    pub spec_hash: String,
    pub n_observed: usize,
    /// Indexed by key; `exp[key][x][y]`.
    pub exp: Vec<[[u64; 2]; 2]>,
    pub obs: Vec<[[u64; 2]; 2]>,
}

impl SampleCounters {
    pub fn zero(spec: &ScmSpec) -> Self {
        let n = 1usize << spec.n_observed;
        SampleCounters {
            spec_hash: spec.identity_hash(),
            n_observed: spec.n_observed,
            exp: vec![[[0; 2]; 2]; n],
            obs: vec![[[0; 2]; 2]; n],
        }
    }

    pub fn exp_total(&self, key: SubpopKey) -> u64 {
        self.exp[key.0 as usize].iter().flatten().sum()
    }

    pub fn obs_total(&self, key: SubpopKey) -> u64 {
        self.obs[key.0 as usize].iter().flatten().sum()
    }

    pub fn grand_totals(&self) -> (u64, u64) {
        let exp = self.exp.iter().flatten().flatten().sum();
        let obs = self.obs.iter().flatten().flatten().sum();
        (exp, obs)
    }
}

fn draw_sample(
    spec: &ScmSpec,
    base: &ChaCha8Rng,
    sample_index: u64,
    kind: RegimeKind,
) -> (usize, bool, bool) {
    let mut rng = base.clone();
    rng.set_stream(sample_index);
    let mut key = 0usize;
    let mut mx = 0.0;
    let mut my = 0.0;
    for i in 0..spec.n_features {
        if rng.gen::<f64>() < spec.pz[i] {
            if i < spec.n_observed {
                key |= 1 << i;
            }
            mx += spec.mx_coeffs[i];
            my += spec.my_coeffs[i];
        }
    }
    let ux = rng.gen::<f64>() < spec.p_ux;
    let uy = rng.gen::<f64>() < spec.p_uy;
    let x = match kind {
        RegimeKind::Experimental => rng.gen::<f64>() < 0.5,
        RegimeKind::Observational => eval_fx(mx, ux),
    };
    let y = eval_fy_spec(spec, x, my, uy);
    (key, x, y)
}

/// Generates `n_samples` under one regime into fresh counters.
///
/// Deterministic in (spec, seed, n_samples) regardless of worker count.
pub fn generate_counters(
    spec: &ScmSpec,
    n_samples: u64,
    kind: RegimeKind,
    seed: u64,
) -> Result<SampleCounters> {
    spec.validate()?;
    let base = ChaCha8Rng::seed_from_u64(seed);
    let n_keys = 1usize << spec.n_observed;
    let chunk = 1u64 << 16;
    let n_chunks = n_samples.div_ceil(chunk);
    let merged = (0..n_chunks)
        .into_par_iter()
        .fold(
            || vec![[[0u64; 2]; 2]; n_keys],
            |mut acc, c| {
                let start = c * chunk;
                let end = (start + chunk).min(n_samples);
                for i in start..end {
                    let (key, x, y) = draw_sample(spec, &base, i, kind);
                    acc[key][x as usize][y as usize] += 1;
                }
                acc
            },
        )
        .reduce(
            || vec![[[0u64; 2]; 2]; n_keys],
            |mut a, b| {
                for (ka, kb) in a.iter_mut().zip(&b) {
                    for x in 0..2 {
                        for y in 0..2 {
                            ka[x][y] += kb[x][y];
                        }
                    }
                }
                a
            },
        );
    let mut out = SampleCounters::zero(spec);
    match kind {
        RegimeKind::Experimental => out.exp = merged,
        RegimeKind::Observational => out.obs = merged,
    }
    Ok(out)
}

/// Audit stream: writes each sample as a CSV row `z1..z{n_observed},x,y`
/// instead of aggregating. Same substream contract as
/// [`generate_counters`], so row `i` matches the counter contribution of
/// sample `i`.
pub fn write_raw_samples<W: Write>(
    spec: &ScmSpec,
    n_samples: u64,
    kind: RegimeKind,
    seed: u64,
    mut w: W,
) -> Result<()> {
    spec.validate()?;
    let base = ChaCha8Rng::seed_from_u64(seed);
    for i in 1..=spec.n_observed {
        write!(w, "z{i},")?;
    }
    writeln!(w, "x,y")?;
    for i in 0..n_samples {
        let (key, x, y) = draw_sample(spec, &base, i, kind);
        for b in 0..spec.n_observed {
            write!(w, "{},", (key >> b) & 1)?;
        }
        writeln!(w, "{},{}", x as u8, y as u8)?;
    }
    Ok(())
}

/// Cellwise sum of two counter sets for the same spec.
pub fn merge_counters(a: &SampleCounters, b: &SampleCounters) -> Result<SampleCounters> {
    if a.spec_hash != b.spec_hash || a.n_observed != b.n_observed {
        return Err(Error::CounterMismatch(format!(
            "spec {}/{} vs {}/{}",
            a.spec_hash, a.n_observed, b.spec_hash, b.n_observed
        )));
    }
    let mut out = a.clone();
    for (dst, src) in out.exp.iter_mut().zip(&b.exp) {
        for x in 0..2 {
            for y in 0..2 {
                dst[x][y] += src[x][y];
            }
        }
    }
    for (dst, src) in out.obs.iter_mut().zip(&b.obs) {
        for x in 0..2 {
            for y in 0..2 {
                dst[x][y] += src[x][y];
            }
        }
    }
    Ok(out)
}

/// Frequency estimates for one key. Requires both experimental arms and
/// a nonzero observational total.
pub fn estimate_distributions(counters: &SampleCounters, key: SubpopKey) -> Result<DistributionPair> {
    let exp = &counters.exp[key.0 as usize];
    let obs = &counters.obs[key.0 as usize];
    let arm1 = exp[1][0] + exp[1][1];
    let arm0 = exp[0][0] + exp[0][1];
    if arm1 == 0 || arm0 == 0 {
        return Err(Error::Estimation {
            key: key.0,
            reason: "empty experimental arm".into(),
        });
    }
    let obs_total: u64 = obs.iter().flatten().sum();
    if obs_total == 0 {
        return Err(Error::Estimation {
            key: key.0,
            reason: "no observational samples".into(),
        });
    }
    let mut joint = [[0.0; 2]; 2];
    for x in 0..2 {
        for y in 0..2 {
            joint[x][y] = obs[x][y] as f64 / obs_total as f64;
        }
    }
    Ok(DistributionPair {
        exp_y_given_do_x1: exp[1][1] as f64 / arm1 as f64,
        exp_y_given_do_x0: exp[0][1] as f64 / arm0 as f64,
        obs_joint: joint,
    })
}

/// One dataset row: subpopulation features plus estimated PNS bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub key: SubpopKey,
    pub lb: f64,
    pub ub: f64,
    pub n_exp: u64,
    pub n_obs: u64,
    pub consistent: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub scm_hash: String,
    pub seed: Option<u64>,
    pub threshold: u64,
    pub n_exp_total: u64,
    pub n_obs_total: u64,
    pub generator_version: String,
    pub prng_algorithm: String,
}

/// Threshold-filtered, bound-labeled training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub n_observed: usize,
    pub records: Vec<LabeledRecord>,
    pub meta: DatasetMeta,
}

/// Keeps keys whose experimental and observational totals both reach the
/// threshold, labels them with the tight PNS bounds of their estimated
/// distributions. Keys with an empty experimental arm are dropped even
/// above threshold.
pub fn build_dataset(counters: &SampleCounters, threshold: u64, seed: Option<u64>) -> Dataset {
    let mut records = Vec::new();
    for k in 0..counters.exp.len() as u32 {
        let key = SubpopKey(k);
        let n_exp = counters.exp_total(key);
        let n_obs = counters.obs_total(key);
        if n_exp < threshold || n_obs < threshold {
            continue;
        }
        let Ok(dp) = estimate_distributions(counters, key) else {
            continue;
        };
        let b = pns_bounds(&dp);
        // sampling noise can push the raw bound expressions outside [0,1]
        records.push(LabeledRecord {
            key,
            lb: b.lb.clamp(0.0, 1.0),
            ub: b.ub.clamp(0.0, 1.0),
            n_exp,
            n_obs,
            consistent: b.consistent,
        });
    }
    let (n_exp_total, n_obs_total) = counters.grand_totals();
    Dataset {
        n_observed: counters.n_observed,
        records,
        meta: DatasetMeta {
            scm_hash: counters.spec_hash.clone(),
            seed,
            threshold,
            n_exp_total,
            n_obs_total,
            generator_version: crate::scm::GENERATOR_VERSION.to_string(),
            prng_algorithm: PRNG_ALGORITHM.to_string(),
        },
    }
}

impl SampleCounters {
    /// Reads a snapshot written by [`SampleCounters::write_csv`]. The spec
    /// is needed to size the table and stamp the identity hash.
    pub fn read_csv_path(path: &Path, spec: &ScmSpec) -> Result<SampleCounters> {
        let mut out = SampleCounters::zero(spec);
        let mut rdr = csv::Reader::from_path(path)?;
        for rec in rdr.records() {
            let rec = rec?;
            let field = |i: usize| {
                rec.get(i)
                    .ok_or_else(|| Error::InvalidInput("short counter row".into()))
            };
            let key: usize = field(0)?
                .parse()
                .map_err(|e| Error::InvalidInput(format!("bad counter key: {e}")))?;
            if key >= out.exp.len() {
                return Err(Error::InvalidInput(format!(
                    "counter key {key} out of range for n_observed {}",
                    spec.n_observed
                )));
            }
            let parse_idx = |i: usize| -> Result<usize> {
                field(i)?
                    .parse()
                    .map_err(|e| Error::InvalidInput(format!("bad counter index: {e}")))
            };
            let x = parse_idx(2)?;
            let y = parse_idx(3)?;
            if x > 1 || y > 1 {
                return Err(Error::InvalidInput("counter x/y must be 0 or 1".into()));
            }
            let count: u64 = field(4)?
                .parse()
                .map_err(|e| Error::InvalidInput(format!("bad count: {e}")))?;
            match field(1)? {
                "exp" => out.exp[key][x][y] += count,
                "obs" => out.obs[key][x][y] += count,
                other => {
                    return Err(Error::InvalidInput(format!("unknown regime {other:?}")));
                }
            }
        }
        Ok(out)
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Snapshot CSV: `key,regime,x,y,count`, zero cells omitted.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "key,regime,x,y,count")?;
        for (name, counts) in [("exp", &self.exp), ("obs", &self.obs)] {
            for (k, cell) in counts.iter().enumerate() {
                for x in 0..2 {
                    for y in 0..2 {
                        if cell[x][y] > 0 {
                            writeln!(w, "{k},{name},{x},{y},{}", cell[x][y])?;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

impl Dataset {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for i in 1..=self.n_observed {
            write!(w, "z{i}{}", if i == self.n_observed { "" } else { "," })?;
        }
        writeln!(w, ",lb,ub,n_exp,n_obs,consistent")?;
        for r in &self.records {
            for b in r.key.bits(self.n_observed) {
                write!(w, "{},", b as u8)?;
            }
            writeln!(
                w,
                "{:.16e},{:.16e},{},{},{}",
                r.lb, r.ub, r.n_exp, r.n_obs, r.consistent as u8
            )?;
        }
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))?;
        let meta_path = path.with_extension("meta.json");
        let f = std::fs::File::create(meta_path)?;
        serde_json::to_writer_pretty(f, &self.meta)?;
        Ok(())
    }

    pub fn read_csv_path(path: &Path) -> Result<Dataset> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let n_observed = headers.iter().filter(|h| h.starts_with('z')).count();
        let mut records = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let bits: Vec<bool> = (0..n_observed)
                .map(|i| rec.get(i) == Some("1"))
                .collect();
            let parse_f = |i: usize| -> Result<f64> {
                rec.get(n_observed + i)
                    .ok_or_else(|| Error::InvalidInput("short dataset row".into()))?
                    .parse()
                    .map_err(|e| Error::InvalidInput(format!("bad dataset value: {e}")))
            };
            let parse_u = |i: usize| -> Result<u64> {
                rec.get(n_observed + i)
                    .ok_or_else(|| Error::InvalidInput("short dataset row".into()))?
                    .parse()
                    .map_err(|e| Error::InvalidInput(format!("bad dataset value: {e}")))
            };
            records.push(LabeledRecord {
                key: SubpopKey::from_bits(&bits),
                lb: parse_f(0)?,
                ub: parse_f(1)?,
                n_exp: parse_u(2)?,
                n_obs: parse_u(3)?,
                consistent: rec.get(n_observed + 4) == Some("1"),
            });
        }
        let meta_path = path.with_extension("meta.json");
        let meta = if meta_path.exists() {
            serde_json::from_reader(std::fs::File::open(meta_path)?)?
        } else {
            DatasetMeta::default()
        };
        Ok(Dataset {
            n_observed,
            records,
            meta,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{paper_scm, random_scm};

    fn small_spec() -> ScmSpec {
        random_scm(31, 6, 4, (-1.0, 1.0), (0.0, 1.0)).unwrap()
    }

    #[test]
    fn zero_samples_zero_counters() {
        let spec = small_spec();
        let c = generate_counters(&spec, 0, RegimeKind::Experimental, 1).unwrap();
        assert_eq!(c.grand_totals(), (0, 0));
    }

    #[test]
    fn same_seed_same_counters() {
        let spec = small_spec();
        let a = generate_counters(&spec, 20_000, RegimeKind::Observational, 42).unwrap();
        let b = generate_counters(&spec, 20_000, RegimeKind::Observational, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn count_conservation() {
        let spec = small_spec();
        let c = generate_counters(&spec, 12_345, RegimeKind::Experimental, 7).unwrap();
        assert_eq!(c.grand_totals().0, 12_345);
    }

    #[test]
    fn degenerate_spec_single_cell() {
        let mut spec = small_spec();
        spec.p_ux = 1.0;
        spec.p_uy = 0.0;
        for p in &mut spec.pz {
            *p = if *p > 0.5 { 1.0 } else { 0.0 };
        }
        let c = generate_counters(&spec, 1000, RegimeKind::Observational, 3).unwrap();
        let nonzero: Vec<u64> = c
            .obs
            .iter()
            .flatten()
            .flatten()
            .copied()
            .filter(|&n| n > 0)
            .collect();
        assert_eq!(nonzero, vec![1000]);
    }

    #[test]
    fn merge_identity_commutative_and_split() {
        let spec = small_spec();
        let a = generate_counters(&spec, 5000, RegimeKind::Experimental, 1).unwrap();
        let b = generate_counters(&spec, 5000, RegimeKind::Observational, 2).unwrap();
        let zero = SampleCounters::zero(&spec);
        assert_eq!(merge_counters(&a, &zero).unwrap(), a);
        assert_eq!(
            merge_counters(&a, &b).unwrap(),
            merge_counters(&b, &a).unwrap()
        );
        let other = random_scm(99, 6, 4, (-1.0, 1.0), (0.0, 1.0)).unwrap();
        assert!(merge_counters(&a, &SampleCounters::zero(&other)).is_err());
    }

    #[test]
    fn worker_count_does_not_change_counters() {
        let spec = small_spec();
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = pool1.install(|| generate_counters(&spec, 100_000, RegimeKind::Experimental, 9).unwrap());
        let b = pool4.install(|| generate_counters(&spec, 100_000, RegimeKind::Experimental, 9).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn estimate_ratios() {
        let spec = small_spec();
        let mut c = SampleCounters::zero(&spec);
        c.exp[3] = [[500, 0], [0, 500]];
        c.obs[3] = [[250, 250], [250, 250]];
        let dp = estimate_distributions(&c, SubpopKey(3)).unwrap();
        assert_eq!(dp.exp_y_given_do_x1, 1.0);
        assert_eq!(dp.exp_y_given_do_x0, 0.0);
        assert_eq!(dp.obs_joint, [[0.25, 0.25], [0.25, 0.25]]);
        // scale invariance
        let mut c10 = c.clone();
        for cell in c10.exp.iter_mut().chain(c10.obs.iter_mut()) {
            for x in 0..2 {
                for y in 0..2 {
                    cell[x][y] *= 10;
                }
            }
        }
        assert_eq!(estimate_distributions(&c10, SubpopKey(3)).unwrap(), dp);
    }

    #[test]
    fn estimate_empty_arm_rejected() {
        let spec = small_spec();
        let mut c = SampleCounters::zero(&spec);
        c.exp[0] = [[0, 0], [10, 10]];
        c.obs[0] = [[5, 5], [5, 5]];
        assert!(estimate_distributions(&c, SubpopKey(0)).is_err());
    }

    #[test]
    fn dataset_threshold_and_labels() {
        let spec = small_spec();
        let e = generate_counters(&spec, 50_000, RegimeKind::Experimental, 11).unwrap();
        let o = generate_counters(&spec, 50_000, RegimeKind::Observational, 12).unwrap();
        let c = merge_counters(&e, &o).unwrap();
        let ds = build_dataset(&c, 100, Some(11));
        assert!(!ds.records.is_empty());
        for r in &ds.records {
            assert!(r.n_exp >= 100 && r.n_obs >= 100);
            assert!((0.0..=1.0).contains(&r.lb) && (0.0..=1.0).contains(&r.ub));
            // labels recomputable from counts
            let dp = estimate_distributions(&c, r.key).unwrap();
            let b = pns_bounds(&dp);
            assert_eq!(b.lb.clamp(0.0, 1.0), r.lb);
            assert_eq!(b.ub.clamp(0.0, 1.0), r.ub);
        }
        // threshold above everything: empty
        let empty = build_dataset(&c, 10_000_000, None);
        assert!(empty.records.is_empty());
    }

    #[test]
    fn counters_csv_roundtrip() {
        let spec = small_spec();
        let e = generate_counters(&spec, 10_000, RegimeKind::Experimental, 4).unwrap();
        let o = generate_counters(&spec, 10_000, RegimeKind::Observational, 5).unwrap();
        let c = merge_counters(&e, &o).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("counters.csv");
        c.write_csv_path(&path).unwrap();
        let back = SampleCounters::read_csv_path(&path, &spec).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn dataset_csv_roundtrip() {
        let spec = small_spec();
        let e = generate_counters(&spec, 20_000, RegimeKind::Experimental, 1).unwrap();
        let o = generate_counters(&spec, 20_000, RegimeKind::Observational, 2).unwrap();
        let ds = build_dataset(&merge_counters(&e, &o).unwrap(), 50, Some(1));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dataset.csv");
        ds.write_csv_path(&path).unwrap();
        let back = Dataset::read_csv_path(&path).unwrap();
        assert_eq!(back.records.len(), ds.records.len());
        for (a, b) in ds.records.iter().zip(&back.records) {
            assert_eq!(a.key, b.key);
            assert_eq!(a.lb.to_bits(), b.lb.to_bits());
            assert_eq!(a.ub.to_bits(), b.ub.to_bits());
        }
        assert_eq!(back.meta, ds.meta);
    }

    #[test]
    fn estimates_converge_to_oracle() {
        let spec = paper_scm();
        let n = 2_000_000u64;
        let e = generate_counters(&spec, n, RegimeKind::Experimental, 5).unwrap();
        let o = generate_counters(&spec, n, RegimeKind::Observational, 6).unwrap();
        let c = merge_counters(&e, &o).unwrap();
        let mut checked = 0;
        for k in 0..1u32 << spec.n_observed {
            let key = SubpopKey(k);
            if c.exp_total(key) < 20_000 || c.obs_total(key) < 20_000 {
                continue;
            }
            let est = estimate_distributions(&c, key).unwrap();
            let exact = crate::informer::subpop_distributions(&spec, key).unwrap();
            assert!((est.exp_y_given_do_x1 - exact.p_y_do_x1).abs() < 0.02);
            assert!((est.exp_y_given_do_x0 - exact.p_y_do_x0).abs() < 0.02);
            checked += 1;
        }
        assert!(checked > 0, "no key reached the sample floor");
    }
}
