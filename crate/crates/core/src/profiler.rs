//! Fitting cost coefficients from measured traces.
//!
//! Every phase of the time model is linear in its coefficients once the
//! sequence length, degree and ring bandwidth are known, so each phase is an
//! ordinary linear least-squares problem. Residuals are weighted by the
//! inverse measured time, which minimizes relative rather than absolute
//! error.

use std::collections::BTreeMap;
use std::fmt;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cost::{self, GroupLoad, RankSpan};
use crate::error::{Error, Result};
use crate::types::{ClusterSpec, CoefficientValues, CostCoefficients, SequenceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Total,
    Compute,
    Comm,
    AttnCompute,
    AttnComm,
}

impl Phase {
    pub const ALL: [Phase; 5] = [
        Phase::Total,
        Phase::Compute,
        Phase::Comm,
        Phase::AttnCompute,
        Phase::AttnComm,
    ];
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::Total => "total",
            Phase::Compute => "compute",
            Phase::Comm => "comm",
            Phase::AttnCompute => "attn_compute",
            Phase::AttnComm => "attn_comm",
        };
        f.write_str(s)
    }
}

/// One profiled measurement of a single sequence at one degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSample", into = "RawSample")]
pub struct TraceSample {
    pub length: u64,
    pub degree: usize,
    pub mask_efficiency: f64,
    pub measured_time: f64,
    pub measured_memory: Option<f64>,
    pub phase: Phase,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSample {
    length: u64,
    degree: usize,
    #[serde(default)]
    mask_efficiency: f64,
    measured_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    measured_memory: Option<f64>,
    phase: Phase,
}

impl TraceSample {
    pub fn new(
        length: u64,
        degree: usize,
        mask_efficiency: f64,
        measured_time: f64,
        phase: Phase,
    ) -> Result<Self> {
        Self::try_from(RawSample {
            length,
            degree,
            mask_efficiency,
            measured_time,
            measured_memory: None,
            phase,
        })
    }

    pub fn with_memory(mut self, memory: f64) -> Self {
        self.measured_memory = Some(memory);
        self
    }
}

impl TryFrom<RawSample> for TraceSample {
    type Error = Error;
    fn try_from(r: RawSample) -> Result<Self> {
        if r.degree == 0 {
            return Err(Error::invalid("trace sample", "degree must be >= 1"));
        }
        if r.length == 0 {
            return Err(Error::invalid("trace sample", "length must be >= 1"));
        }
        if !r.measured_time.is_finite() || r.measured_time < 0.0 {
            return Err(Error::invalid(
                "trace sample",
                "measured_time must be finite and >= 0",
            ));
        }
        if !r.mask_efficiency.is_finite() || r.mask_efficiency < 0.0 {
            return Err(Error::invalid(
                "trace sample",
                "mask_efficiency must be finite and >= 0",
            ));
        }
        if let Some(m) = r.measured_memory {
            if !m.is_finite() || m < 0.0 {
                return Err(Error::invalid(
                    "trace sample",
                    "measured_memory must be finite and >= 0",
                ));
            }
        }
        Ok(TraceSample {
            length: r.length,
            degree: r.degree,
            mask_efficiency: r.mask_efficiency,
            measured_time: r.measured_time,
            measured_memory: r.measured_memory,
            phase: r.phase,
        })
    }
}

impl From<TraceSample> for RawSample {
    fn from(s: TraceSample) -> Self {
        RawSample {
            length: s.length,
            degree: s.degree,
            mask_efficiency: s.mask_efficiency,
            measured_time: s.measured_time,
            measured_memory: s.measured_memory,
            phase: s.phase,
        }
    }
}

/// Settings for [`fit`].
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Supplies the ring bandwidth for each sample's degree.
    pub cluster: ClusterSpec,
    /// Attention share of compute when no attention-compute samples exist.
    pub attn_compute_share: f64,
    /// Attention share of communication when no attention-comm samples exist.
    pub attn_comm_share: f64,
    /// Values kept for coefficients the samples say nothing about.
    pub base: CoefficientValues,
}

impl FitOptions {
    pub fn new(cluster: ClusterSpec) -> Self {
        FitOptions {
            cluster,
            attn_compute_share: 0.5,
            attn_comm_share: 0.5,
            base: CoefficientValues::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseError {
    pub phase: Phase,
    pub samples: usize,
    /// Mean absolute percentage error as a fraction (0.05 is 5%).
    pub mape: f64,
    /// Samples left out because their measured time is zero.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub coefficients: CostCoefficients,
    /// Error on the training samples.
    pub training_error: Vec<PhaseError>,
    /// Coefficients that came out negative and were clamped to zero.
    pub clamped: Vec<String>,
    pub notes: Vec<String>,
}

const COMPUTE_NAMES: [&str; 3] = ["alpha1", "alpha2", "beta1"];
const ATTN_COMPUTE_NAMES: [&str; 3] = ["alpha1_attn", "alpha2_attn", "beta1_attn"];
const COMM_NAMES: [&str; 2] = ["alpha3", "beta2"];
const ATTN_COMM_NAMES: [&str; 2] = ["alpha3_attn", "beta2_attn"];
const TOTAL_NAMES: [&str; 5] = ["alpha1", "alpha2", "beta1", "alpha3", "beta2"];
const MEMORY_NAMES: [&str; 2] = ["mem_per_token", "mem_model_states"];

fn bandwidth(sample: &TraceSample, cluster: &ClusterSpec) -> f64 {
    cost::group_bandwidth(RankSpan::Contiguous(sample.degree), cluster)
}

fn ring<'a>(set: &[&'a TraceSample]) -> Vec<&'a TraceSample> {
    set.iter().copied().filter(|s| s.degree > 1).collect()
}

fn compute_row(s: &TraceSample) -> Vec<f64> {
    let l = s.length as f64;
    let d = s.degree as f64;
    vec![(1.0 + s.mask_efficiency) * l * l / d, l / d, 1.0]
}

fn comm_row(s: &TraceSample, cluster: &ClusterSpec) -> Vec<f64> {
    vec![s.length as f64 / bandwidth(s, cluster), 1.0]
}

/// Weighted least squares `min sum ((x . row - y) / y)^2`.
///
/// Columns are normalized before a Householder QR; a vanishing diagonal entry
/// of R names the coefficient the data cannot pin down.
fn relative_least_squares(
    rows: &[Vec<f64>],
    y: &[f64],
    names: &[&'static str],
) -> Result<Vec<f64>> {
    let cols = names.len();
    let used: Vec<usize> = (0..rows.len()).filter(|&i| y[i] > 0.0).collect();
    if used.len() < cols {
        return Err(Error::RankDeficient {
            coefficient: names[used.len()],
        });
    }
    let mut a = DMatrix::<f64>::zeros(used.len(), cols);
    let mut b = DVector::<f64>::zeros(used.len());
    for (r, &i) in used.iter().enumerate() {
        for c in 0..cols {
            a[(r, c)] = rows[i][c] / y[i];
        }
        b[r] = 1.0;
    }
    let mut scale = vec![0.0; cols];
    for c in 0..cols {
        let norm = a.column(c).norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::RankDeficient {
                coefficient: names[c],
            });
        }
        scale[c] = norm;
        a.column_mut(c).scale_mut(1.0 / norm);
    }
    let qr = a.qr();
    let r = qr.r();
    let diag_max = (0..cols).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    for i in 0..cols {
        if r[(i, i)].abs() <= 1e-9 * diag_max {
            return Err(Error::RankDeficient {
                coefficient: names[i],
            });
        }
    }
    let qtb = qr.q().transpose() * b;
    let x = r.solve_upper_triangular(&qtb).ok_or(Error::RankDeficient {
        coefficient: names[cols - 1],
    })?;
    Ok((0..cols).map(|c| x[c] / scale[c]).collect())
}

/// Fits coefficients from trace samples.
///
/// Each phase with samples is fitted on its own. Attention phases without
/// samples fall back to fixed shares of their totals. When only `total`
/// samples describe compute, the total is fitted assuming attention
/// communication is the smaller overlapped term, which makes the total linear
/// in the coefficients.
pub fn fit(samples: &[TraceSample], options: &FitOptions) -> Result<FitReport> {
    let cluster = &options.cluster;
    let mut by_phase: BTreeMap<Phase, Vec<&TraceSample>> = BTreeMap::new();
    for s in samples {
        by_phase.entry(s.phase).or_default().push(s);
    }
    let phase = |p: Phase| by_phase.get(&p).map(Vec::as_slice).unwrap_or(&[]);
    let mut v = options.base.clone();
    let mut notes = Vec::new();

    let fit_phase =
        |set: &[&TraceSample], names: &[&'static str], row: &dyn Fn(&TraceSample) -> Vec<f64>| {
            let rows: Vec<Vec<f64>> = set.iter().map(|s| row(s)).collect();
            let y: Vec<f64> = set.iter().map(|s| s.measured_time).collect();
            relative_least_squares(&rows, &y, names)
        };

    let compute = phase(Phase::Compute);
    let total = phase(Phase::Total);
    let comm = ring(phase(Phase::Comm));
    if phase(Phase::Comm).len() > comm.len() {
        notes.push(format!(
            "{} degree-1 comm samples ignored (no ring)",
            phase(Phase::Comm).len() - comm.len()
        ));
    }

    if !compute.is_empty() {
        let x = fit_phase(compute, &COMPUTE_NAMES, &compute_row)?;
        (v.alpha1, v.alpha2, v.beta1) = (x[0], x[1], x[2]);
        if !comm.is_empty() {
            let x = fit_phase(&comm, &COMM_NAMES, &|s| comm_row(s, cluster))?;
            (v.alpha3, v.beta2) = (x[0], x[1]);
        } else if phase(Phase::Comm).is_empty() {
            notes.push("no comm samples; alpha3 and beta2 kept from base".into());
        } else {
            return Err(Error::RankDeficient {
                coefficient: "alpha3",
            });
        }
    } else if !total.is_empty() {
        let keep = 1.0 - options.attn_comm_share;
        if keep <= 0.0 {
            return Err(Error::invalid(
                "fit options",
                "attn_comm_share must be < 1 to fit from total samples",
            ));
        }
        let has_ring = total.iter().any(|s| s.degree > 1);
        let names: &[&'static str] = if has_ring {
            &TOTAL_NAMES
        } else {
            &COMPUTE_NAMES
        };
        let x = fit_phase(total, names, &|s| {
            let mut r = compute_row(s);
            if has_ring {
                let ring = if s.degree > 1 { 1.0 } else { 0.0 };
                r.push(ring * s.length as f64 / bandwidth(s, cluster));
                r.push(ring);
            }
            r
        })?;
        (v.alpha1, v.alpha2, v.beta1) = (x[0], x[1], x[2]);
        if has_ring {
            v.alpha3 = x[3] / keep;
            v.beta2 = x[4] / keep;
        } else {
            notes.push("total samples all at degree 1; comm kept from base".into());
        }
        notes.push("fitted from total samples assuming attention comm is fully overlapped".into());
    } else {
        return Err(Error::RankDeficient {
            coefficient: "alpha1",
        });
    }

    let attn_compute = phase(Phase::AttnCompute);
    if attn_compute.is_empty() {
        let s = options.attn_compute_share;
        (v.alpha1_attn, v.alpha2_attn, v.beta1_attn) = (s * v.alpha1, s * v.alpha2, s * v.beta1);
    } else {
        let x = fit_phase(attn_compute, &ATTN_COMPUTE_NAMES, &compute_row)?;
        (v.alpha1_attn, v.alpha2_attn, v.beta1_attn) = (x[0], x[1], x[2]);
    }
    let attn_comm = ring(phase(Phase::AttnComm));
    if attn_comm.is_empty() {
        let s = options.attn_comm_share;
        (v.alpha3_attn, v.beta2_attn) = (s * v.alpha3, s * v.beta2);
    } else {
        let x = fit_phase(&attn_comm, &ATTN_COMM_NAMES, &|s| comm_row(s, cluster))?;
        (v.alpha3_attn, v.beta2_attn) = (x[0], x[1]);
    }

    let memory: Vec<&TraceSample> = samples
        .iter()
        .filter(|s| s.measured_memory.is_some())
        .collect();
    if !memory.is_empty() {
        // per-rank memory = len / d * mem_per_token + mem_model_states
        let rows: Vec<Vec<f64>> = memory
            .iter()
            .map(|s| vec![s.length as f64 / s.degree as f64, 1.0])
            .collect();
        let y: Vec<f64> = memory
            .iter()
            .map(|s| s.measured_memory.unwrap_or(0.0))
            .collect();
        let x = relative_least_squares(&rows, &y, &MEMORY_NAMES)?;
        (v.mem_per_token, v.mem_model_states) = (x[0], x[1]);
    }

    let mut clamped = Vec::new();
    clamp_non_negative(&mut v, &mut clamped);
    if v.alpha1_attn > v.alpha1 {
        notes.push("alpha1_attn clamped to alpha1".into());
        v.alpha1_attn = v.alpha1;
    }
    if v.alpha3_attn > v.alpha3 {
        notes.push("alpha3_attn clamped to alpha3".into());
        v.alpha3_attn = v.alpha3;
    }
    for c in &clamped {
        warn!("fitted coefficient {c} was negative; clamped to 0");
    }

    let coefficients = CostCoefficients::new(v)?;
    let training_error = predict_error(&coefficients, samples, cluster)?;
    Ok(FitReport {
        coefficients,
        training_error,
        clamped,
        notes,
    })
}

fn clamp_non_negative(v: &mut CoefficientValues, clamped: &mut Vec<String>) {
    let fields: [(&str, &mut f64); 12] = [
        ("alpha1", &mut v.alpha1),
        ("alpha2", &mut v.alpha2),
        ("beta1", &mut v.beta1),
        ("alpha3", &mut v.alpha3),
        ("beta2", &mut v.beta2),
        ("alpha1_attn", &mut v.alpha1_attn),
        ("alpha2_attn", &mut v.alpha2_attn),
        ("beta1_attn", &mut v.beta1_attn),
        ("alpha3_attn", &mut v.alpha3_attn),
        ("beta2_attn", &mut v.beta2_attn),
        ("mem_per_token", &mut v.mem_per_token),
        ("mem_model_states", &mut v.mem_model_states),
    ];
    for (name, x) in fields {
        if *x < 0.0 {
            *x = 0.0;
            clamped.push(name.to_string());
        }
    }
}

/// Model prediction for the sample's phase.
pub fn predict(coeffs: &CostCoefficients, sample: &TraceSample, cluster: &ClusterSpec) -> f64 {
    let seq = SequenceSpec::new(0, sample.length, sample.mask_efficiency)
        .expect("sample fields validated on construction");
    let t = cost::time_for_load(
        GroupLoad::of([&seq]),
        sample.degree,
        bandwidth(sample, cluster),
        coeffs,
    );
    match sample.phase {
        Phase::Total => t.total,
        Phase::Compute => t.compute,
        Phase::Comm => t.comm,
        Phase::AttnCompute => t.attn_compute,
        Phase::AttnComm => t.attn_comm,
    }
}

/// Mean absolute percentage error per phase present in `holdout`.
///
/// Samples with a zero measured time are skipped and counted.
pub fn predict_error(
    coeffs: &CostCoefficients,
    holdout: &[TraceSample],
    cluster: &ClusterSpec,
) -> Result<Vec<PhaseError>> {
    if holdout.is_empty() {
        return Err(Error::invalid(
            "holdout",
            "must contain at least one sample",
        ));
    }
    let mut acc: BTreeMap<Phase, (f64, usize, usize)> = BTreeMap::new();
    for s in holdout {
        let e = acc.entry(s.phase).or_default();
        if s.measured_time == 0.0 {
            e.2 += 1;
            continue;
        }
        let p = predict(coeffs, s, cluster);
        e.0 += (p - s.measured_time).abs() / s.measured_time;
        e.1 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(phase, (sum, n, skipped))| PhaseError {
            phase,
            samples: n,
            mape: if n > 0 { sum / n as f64 } else { 0.0 },
            skipped,
        })
        .collect())
}

/// Sample-weighted MAPE over all phases.
pub fn overall_mape(errors: &[PhaseError]) -> f64 {
    let n: usize = errors.iter().map(|e| e.samples).sum();
    if n == 0 {
        return 0.0;
    }
    errors
        .iter()
        .map(|e| e.mape * e.samples as f64)
        .sum::<f64>()
        / n as f64
}

/// A synthetic measurement campaign drawn from a known model.
#[derive(Debug, Clone)]
pub struct SyntheticTrace {
    pub lengths: Vec<u64>,
    pub degrees: Vec<usize>,
    pub mask_efficiencies: Vec<f64>,
    pub phases: Vec<Phase>,
    /// Standard deviation of the multiplicative Gaussian noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticTrace {
    /// Every combination of the grid, measured once.
    pub fn grid(&self, coeffs: &CostCoefficients, cluster: &ClusterSpec) -> Vec<TraceSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, self.noise_sigma.max(0.0)).expect("sigma >= 0");
        let mut out = Vec::new();
        for &length in &self.lengths {
            for &degree in &self.degrees {
                for &eta in &self.mask_efficiencies {
                    for &phase in &self.phases {
                        if let Some(s) = self.measure(
                            coeffs, cluster, length, degree, eta, phase, &mut rng, &noise,
                        ) {
                            out.push(s);
                        }
                    }
                }
            }
        }
        out
    }

    /// `count` samples with length, degree and mask efficiency drawn from the
    /// grid's ranges.
    pub fn random(
        &self,
        count: usize,
        coeffs: &CostCoefficients,
        cluster: &ClusterSpec,
    ) -> Vec<TraceSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, self.noise_sigma.max(0.0)).expect("sigma >= 0");
        let (lo, hi) = min_max(&self.lengths);
        let (dlo, dhi) = min_max(&self.degrees);
        let (elo, ehi) = self
            .mask_efficiencies
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
                (a.min(x), b.max(x))
            });
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let length = rng.random_range(lo..=hi);
            let degree = rng.random_range(dlo..=dhi);
            let eta = if ehi > elo {
                rng.random_range(elo..=ehi)
            } else {
                elo
            };
            let phase = self.phases[rng.random_range(0..self.phases.len())];
            if let Some(s) = self.measure(
                coeffs, cluster, length, degree, eta, phase, &mut rng, &noise,
            ) {
                out.push(s);
            }
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn measure(
        &self,
        coeffs: &CostCoefficients,
        cluster: &ClusterSpec,
        length: u64,
        degree: usize,
        eta: f64,
        phase: Phase,
        rng: &mut ChaCha8Rng,
        noise: &Normal<f64>,
    ) -> Option<TraceSample> {
        if matches!(phase, Phase::Comm | Phase::AttnComm) && degree == 1 {
            return None;
        }
        let clean = TraceSample::new(length, degree, eta, 0.0, phase).ok()?;
        let truth = predict(coeffs, &clean, cluster);
        let factor = (1.0 + noise.sample(rng)).max(0.0);
        TraceSample::new(length, degree, eta, truth * factor, phase).ok()
    }
}

fn min_max<T: Copy + Ord>(xs: &[T]) -> (T, T) {
    let lo = *xs.iter().min().expect("non-empty grid");
    let hi = *xs.iter().max().expect("non-empty grid");
    (lo, hi)
}
