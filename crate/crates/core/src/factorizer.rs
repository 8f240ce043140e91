//! Iterative resonator factorization of bound query vectors.
//!
//! Given `q = x¹ ⊙ x² ⊙ … ⊙ xᶠ` with each `xᶠ` drawn from codebook `Xᶠ`, the
//! loop keeps one estimate per factor and repeats
//!
//! 1. unbind: `x̃ⁱ = q ⊙ Π_{f≠i} x̂ᶠ`
//! 2. similarity: `αⁱ = x̃ⁱ · Xⁱ` (+ optional Gaussian noise)
//! 3. projection: `x̂ⁱ ← sign(αⁱ · (Xⁱ)ᵀ)` (+ optional Gaussian noise)
//!
//! with all factors updated from the previous iteration's estimates. The
//! product codebook of `Π Mcᶠ` vectors is never built; working storage is
//! the per-factor codebooks plus one estimate per factor.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::precision::{fake_quantize, PrecisionMode, QuantScheme};
use crate::rng::{derive_seed, rng_from_seed, SimRng};
use crate::vsa::{elem_bind, project_weights, similarity, sign, Codebook, Hypervector, ValueClass};

/// Noise levels are relative: the similarity noise has standard deviation
/// `noise_similarity · sqrt(d · Mc)` and the projection noise
/// `noise_projection · sqrt(Σ α² / Mc)`, so one setting carries across problem sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizerParams {
    pub max_iters: usize,
    pub noise_similarity: f64,
    pub noise_projection: f64,
    pub convergence_window: usize,
    pub rng_seed: u64,
    pub precision: PrecisionMode,
    pub record_trajectory: bool,
}

impl Default for FactorizerParams {
    fn default() -> Self {
        Self {
            max_iters: 200,
            noise_similarity: 0.05,
            noise_projection: 0.05,
            convergence_window: 2,
            rng_seed: crate::rng::DEFAULT_SEED,
            precision: PrecisionMode::Fp32,
            record_trajectory: false,
        }
    }
}

impl FactorizerParams {
    pub fn noiseless() -> Self {
        Self { noise_similarity: 0.0, noise_projection: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be >= 1".into()));
        }
        if self.convergence_window == 0 {
            return Err(Error::InvalidInput("convergence_window must be >= 1".into()));
        }
        for (name, v) in [("noise_similarity", self.noise_similarity), ("noise_projection", self.noise_projection)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizerResult {
    pub indices: Vec<usize>,
    /// Iteration at which the final decoding was first reached.
    pub iterations_used: usize,
    /// Iterations actually executed, including the confirmation window.
    pub iterations_run: usize,
    pub converged: bool,
    /// Per iteration, the best normalized noise-free similarity of each factor's estimate.
    pub trajectory: Option<Vec<Vec<f64>>>,
}

/// Binds the selected codevectors and flips `⌊flip·d⌋` distinct random positions.
pub fn synth_query<R: Rng + ?Sized>(
    codebooks: &[Codebook],
    indices: &[usize],
    noise_flip_fraction: f64,
    rng: &mut R,
) -> Result<Hypervector<i32>> {
    let first = codebooks.first().ok_or_else(|| Error::InvalidInput("no codebooks".into()))?;
    check_dims(codebooks.len(), indices.len())?;
    if !(0.0..0.5).contains(&noise_flip_fraction) {
        return Err(Error::InvalidInput(format!("flip fraction must be in [0, 0.5), got {noise_flip_fraction}")));
    }
    let mut q = first.row_vector(indices[0])?;
    for (cb, &j) in codebooks.iter().zip(indices).skip(1) {
        check_dims(first.dim(), cb.dim())?;
        q = elem_bind(&q, &cb.row_vector(j)?)?;
    }
    let d = q.dim();
    let flips = (noise_flip_fraction * d as f64).floor() as usize;
    if flips == 0 {
        return Ok(q);
    }
    let mut elems = q.into_vec();
    for pos in sample(rng, d, flips) {
        elems[pos] = -elems[pos];
    }
    Hypervector::with_class(elems, ValueClass::Bipolar)
}

fn check_problem(q: &Hypervector<i32>, codebooks: &[Codebook]) -> Result<()> {
    if codebooks.is_empty() {
        return Err(Error::InvalidInput("factorize needs at least one codebook".into()));
    }
    for cb in codebooks {
        check_dims(q.dim(), cb.dim())?;
    }
    Ok(())
}

fn decode(estimates: &[Vec<i32>], codebooks: &[Codebook]) -> (Vec<usize>, Vec<f64>) {
    estimates
        .iter()
        .zip(codebooks)
        .map(|(est, cb)| {
            let hv = Hypervector::with_class(est.clone(), ValueClass::Bipolar).expect("estimate is bipolar");
            let sim = similarity(&hv, cb).expect("dims checked");
            let best = argmax_abs(&sim.values);
            (best, sim.values[best].abs() / cb.dim() as f64)
        })
        .unzip()
}

/// Paired sign flips of two estimates leave their product unchanged, so a
/// factor may settle on a negated codevector; decode by magnitude.
fn argmax_abs(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in values.iter().enumerate() {
        if v.abs() > values[best].abs() {
            best = j;
        }
    }
    best
}

fn gaussian(rng: &mut SimRng, std: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * std
}

/// Runs the resonator loop until the decoded indices hold steady for
/// `convergence_window` consecutive iterations or `max_iters` is reached.
pub fn factorize(q: &Hypervector<i32>, codebooks: &[Codebook], params: &FactorizerParams) -> Result<FactorizerResult> {
    params.validate()?;
    check_problem(q, codebooks)?;
    let d = q.dim();
    let mut rng = rng_from_seed(params.rng_seed);
    let q = q.as_slice();

    // superposition start: sign of each codebook's column sums
    let mut estimates: Vec<Vec<i32>> = codebooks
        .iter()
        .map(|cb| project_weights(&vec![1.0; cb.num_codes()], cb).map(Hypervector::into_vec))
        .collect::<Result<_>>()?;

    let mut trajectory = params.record_trajectory.then(Vec::new);
    let mut last: Option<Vec<usize>> = None;
    let mut streak = 0usize;
    let mut streak_start = 0usize;
    let mut unbound = vec![0i32; d];
    let mut pre = vec![0.0f64; d];

    for t in 1..=params.max_iters {
        let mut next = Vec::with_capacity(codebooks.len());
        for (i, cb) in codebooks.iter().enumerate() {
            unbound.copy_from_slice(q);
            for (f, est) in estimates.iter().enumerate() {
                if f != i {
                    for (u, &e) in unbound.iter_mut().zip(est) {
                        *u *= e;
                    }
                }
            }
            let mut alpha: Vec<f64> = cb
                .rows()
                .map(|row| row.iter().zip(&unbound).map(|(&c, &u)| (c * u) as f64).sum())
                .collect();
            let mc = cb.num_codes() as f64;
            if params.noise_similarity > 0.0 {
                let std = params.noise_similarity * (d as f64 * mc).sqrt();
                for a in alpha.iter_mut() {
                    *a += gaussian(&mut rng, std);
                }
            }
            if params.precision != PrecisionMode::Fp32 {
                let max_abs = alpha.iter().fold(0.0f64, |m, a| m.max(a.abs()));
                fake_quantize(&mut alpha, QuantScheme::fitted(params.precision, max_abs));
            }
            pre.iter_mut().for_each(|p| *p = 0.0);
            for (row, &w) in cb.rows().zip(&alpha) {
                for (p, &c) in pre.iter_mut().zip(row) {
                    *p += w * c as f64;
                }
            }
            if params.noise_projection > 0.0 {
                let std = params.noise_projection * (alpha.iter().map(|a| a * a).sum::<f64>() / mc).sqrt();
                for p in pre.iter_mut() {
                    *p += gaussian(&mut rng, std);
                }
            }
            next.push(pre.iter().map(|&p| sign(p)).collect::<Vec<i32>>());
        }
        estimates = next;

        let (decoded, best_sims) = decode(&estimates, codebooks);
        if let Some(tr) = trajectory.as_mut() {
            tr.push(best_sims);
        }
        if last.as_ref() == Some(&decoded) {
            streak += 1;
        } else {
            streak = 1;
            streak_start = t;
        }
        last = Some(decoded);
        if streak >= params.convergence_window {
            return Ok(FactorizerResult {
                indices: last.unwrap_or_default(),
                iterations_used: streak_start,
                iterations_run: t,
                converged: true,
                trajectory,
            });
        }
    }

    Ok(FactorizerResult {
        indices: last.unwrap_or_default(),
        iterations_used: params.max_iters,
        iterations_run: params.max_iters,
        converged: false,
        trajectory,
    })
}

/// One trial of an accuracy experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub success: bool,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub trials: usize,
    pub accuracy: f64,
    pub mean_iterations: f64,
    pub p50_iterations: usize,
    pub p90_iterations: usize,
    pub p99_iterations: usize,
    pub convergence_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub summary: AccuracySummary,
    pub records: Vec<TrialRecord>,
}

impl AccuracyReport {
    /// Builds a report from trial records; record order does not matter.
    pub fn from_records(mut records: Vec<TrialRecord>) -> Self {
        records.sort_by_key(|r| r.trial);
        let n = records.len().max(1) as f64;
        let mut iters: Vec<usize> = records.iter().map(|r| r.iterations).collect();
        iters.sort_unstable();
        let pct = |p: f64| -> usize {
            if iters.is_empty() {
                0
            } else {
                iters[((p * iters.len() as f64).ceil() as usize).clamp(1, iters.len()) - 1]
            }
        };
        let summary = AccuracySummary {
            trials: records.len(),
            accuracy: records.iter().filter(|r| r.success).count() as f64 / n,
            mean_iterations: iters.iter().sum::<usize>() as f64 / n,
            p50_iterations: pct(0.5),
            p90_iterations: pct(0.9),
            p99_iterations: pct(0.99),
            convergence_rate: records.iter().filter(|r| r.converged).count() as f64 / n,
        };
        Self { summary, records }
    }

    /// CSV with columns `trial,success,iterations,converged`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r).map_err(|e| Error::InvalidInput(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.summary).expect("summary serializes")
    }
}

/// Runs trial `trial` of an experiment: fresh ground-truth indices and query
/// noise drawn from a per-trial stream, and a per-trial factorizer seed. The
/// streams depend only on `params.rng_seed` and the trial index, so two
/// experiments with the same seed see the same queries (paired trials).
pub fn run_trial(codebooks: &[Codebook], trial: usize, flip_fraction: f64, params: &FactorizerParams) -> Result<TrialRecord> {
    let mut rng = rng_from_seed(derive_seed(params.rng_seed, 2 * trial as u64));
    let truth: Vec<usize> = codebooks.iter().map(|cb| rng.random_range(0..cb.num_codes())).collect();
    let q = synth_query(codebooks, &truth, flip_fraction, &mut rng)?;
    let trial_params = FactorizerParams {
        rng_seed: derive_seed(params.rng_seed, 2 * trial as u64 + 1),
        record_trajectory: false,
        ..params.clone()
    };
    let res = factorize(&q, codebooks, &trial_params)?;
    Ok(TrialRecord {
        trial,
        success: res.indices == truth,
        iterations: res.iterations_used,
        converged: res.converged,
    })
}

pub fn accuracy_eval(codebooks: &[Codebook], trials: usize, flip_fraction: f64, params: &FactorizerParams) -> Result<AccuracyReport> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    let records = (0..trials)
        .map(|t| run_trial(codebooks, t, flip_fraction, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(AccuracyReport::from_records(records))
}

/// `factors` random codebooks of `codes` rows each, reproducible from `seed`.
pub fn random_codebooks(factors: usize, codes: usize, dim: usize, seed: u64) -> Result<Vec<Codebook>> {
    let mut rng = rng_from_seed(seed);
    (0..factors).map(|f| Codebook::random(f, codes, dim, &mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive search over every combination of codevectors: the product
    /// with the largest dot against `q`.
    fn brute_force(q: &Hypervector<i32>, codebooks: &[Codebook]) -> Vec<usize> {
        let sizes: Vec<usize> = codebooks.iter().map(Codebook::num_codes).collect();
        let total: usize = sizes.iter().product();
        let mut best = (i64::MIN, vec![]);
        for combo in 0..total {
            let mut idx = Vec::with_capacity(sizes.len());
            let mut rest = combo;
            for &s in &sizes {
                idx.push(rest % s);
                rest /= s;
            }
            let dot: i64 = (0..q.dim())
                .map(|i| {
                    let prod: i32 = codebooks.iter().zip(&idx).map(|(cb, &j)| cb.row(j)[i]).product();
                    (prod * q[i]) as i64
                })
                .sum();
            if dot > best.0 {
                best = (dot, idx);
            }
        }
        best.1
    }

    #[test]
    fn single_factor_converges_immediately() {
        let cbs = random_codebooks(1, 8, 256, 1).unwrap();
        let q = cbs[0].row_vector(3).unwrap();
        let res = factorize(&q, &cbs, &FactorizerParams::noiseless()).unwrap();
        assert_eq!(res.indices, vec![3]);
        assert!(res.converged);
        assert_eq!(res.iterations_used, 1);
    }

    #[test]
    fn synth_query_contracts() {
        let cbs = random_codebooks(2, 4, 1024, 2).unwrap();
        let mut rng = rng_from_seed(0);
        let clean = synth_query(&cbs, &[0, 0], 0.0, &mut rng).unwrap();
        assert_eq!(clean, elem_bind(&cbs[0].row_vector(0).unwrap(), &cbs[1].row_vector(0).unwrap()).unwrap());
        let noisy = synth_query(&cbs, &[0, 0], 0.1, &mut rng).unwrap();
        let diff = clean.as_slice().iter().zip(noisy.as_slice()).filter(|(a, b)| a != b).count();
        assert_eq!(diff, 102);
        assert!(matches!(synth_query(&cbs, &[0, 4], 0.0, &mut rng), Err(Error::IndexOutOfRange { index: 4, len: 4 })));
        assert!(synth_query(&cbs, &[0, 0], 0.5, &mut rng).is_err());
        assert!(synth_query(&cbs, &[0], 0.0, &mut rng).is_err());
    }

    #[test]
    fn two_factors_match_exhaustive_search() {
        let cbs = random_codebooks(2, 4, 256, 3).unwrap();
        let mut rng = rng_from_seed(5);
        for a in 0..4 {
            for b in 0..4 {
                let q = synth_query(&cbs, &[a, b], 0.0, &mut rng).unwrap();
                let oracle = brute_force(&q, &cbs);
                assert_eq!(oracle, vec![a, b]);
                let res = factorize(&q, &cbs, &FactorizerParams::default()).unwrap();
                assert_eq!(res.indices, oracle);
            }
        }
    }

    #[test]
    fn three_factor_accuracy() {
        let cbs = random_codebooks(3, 8, 1024, 4).unwrap();
        let report = accuracy_eval(&cbs, 200, 0.0, &FactorizerParams::default()).unwrap();
        assert!(report.summary.accuracy >= 0.95, "{:?}", report.summary);
    }

    #[test]
    fn single_factor_accuracy_is_perfect() {
        let cbs = random_codebooks(1, 8, 256, 6).unwrap();
        let report = accuracy_eval(&cbs, 50, 0.0, &FactorizerParams::default()).unwrap();
        assert_eq!(report.summary.accuracy, 1.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let cbs = random_codebooks(3, 8, 512, 7).unwrap();
        let q = synth_query(&cbs, &[1, 2, 3], 0.1, &mut rng_from_seed(1)).unwrap();
        let params = FactorizerParams { record_trajectory: true, ..FactorizerParams::default() };
        let a = factorize(&q, &cbs, &params).unwrap();
        let b = factorize(&q, &cbs, &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trajectory.as_ref().unwrap().len(), a.iterations_run);
    }

    #[test]
    fn accuracy_degrades_with_flips() {
        let cbs = random_codebooks(3, 8, 256, 8).unwrap();
        let params = FactorizerParams::default();
        let clean = accuracy_eval(&cbs, 200, 0.0, &params).unwrap();
        let noisy = accuracy_eval(&cbs, 200, 0.25, &params).unwrap();
        assert!(noisy.summary.accuracy <= clean.summary.accuracy);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cbs = random_codebooks(2, 4, 64, 9).unwrap();
        let q = cbs[0].row_vector(0).unwrap();
        assert!(factorize(&q, &[], &FactorizerParams::default()).is_err());
        let short = Hypervector::bipolar(vec![1; 32]).unwrap();
        assert!(matches!(factorize(&short, &cbs, &FactorizerParams::default()), Err(Error::DimensionMismatch { .. })));
        let bad = FactorizerParams { max_iters: 0, ..FactorizerParams::default() };
        assert!(factorize(&q, &cbs, &bad).is_err());
        let bad = FactorizerParams { convergence_window: 0, ..FactorizerParams::default() };
        assert!(factorize(&q, &cbs, &bad).is_err());
        assert!(accuracy_eval(&cbs, 0, 0.0, &FactorizerParams::default()).is_err());
    }

    #[test]
    fn report_serialization() {
        let report = AccuracyReport::from_records(vec![
            TrialRecord { trial: 1, success: false, iterations: 9, converged: false },
            TrialRecord { trial: 0, success: true, iterations: 3, converged: true },
        ]);
        assert_eq!(report.summary.accuracy, 0.5);
        assert_eq!(report.summary.mean_iterations, 6.0);
        assert_eq!(report.summary.p50_iterations, 3);
        assert_eq!(report.summary.p99_iterations, 9);
        let csv = report.to_csv().unwrap();
        assert_eq!(csv, "trial,success,iterations,converged\n0,true,3,true\n1,false,9,false\n");
        assert_eq!(report.summary_json()["trials"], 2);
    }
}
