//! Synthetic long-tail video workloads.
//!
//! Clip durations (seconds) are drawn from a configurable distribution,
//! optionally clipped, and scaled to token lengths. The generator is
//! ChaCha8 seeded with `seed_from_u64`, which produces the same stream on
//! every platform.
//!
//! The named presets only mimic the rough skew of public video-caption
//! datasets (most clips a few seconds long, a thin tail past a minute). They
//! are approximations, not measured data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Pareto};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::SequenceSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LengthDistribution {
    /// `ln(duration) ~ Normal(mu, sigma)`.
    Lognormal {
        mu: f64,
        sigma: f64,
    },
    Pareto {
        alpha: f64,
        x_min: f64,
    },
    /// Pick a bin by weight, then a uniform duration inside it.
    Empirical {
        bins: Vec<HistogramBin>,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EtaPolicy {
    Constant {
        value: f64,
    },
    /// Each sequence gets one modality, drawn by weight.
    Modality {
        classes: Vec<ModalityClass>,
    },
}

impl Default for EtaPolicy {
    fn default() -> Self {
        EtaPolicy::Constant { value: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalityClass {
    pub name: String,
    pub weight: f64,
    pub eta: f64,
}

/// A validated workload description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWorkload", into = "RawWorkload")]
pub struct WorkloadConfig(RawWorkload);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawWorkload {
    pub distribution: LengthDistribution,
    /// Tokens per second of video.
    pub tokens_per_second: f64,
    pub count: usize,
    #[serde(default)]
    pub eta_policy: EtaPolicy,
    pub seed: u64,
    /// Durations above this are clipped to it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_duration: Option<f64>,
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

impl TryFrom<RawWorkload> for WorkloadConfig {
    type Error = Error;
    fn try_from(r: RawWorkload) -> Result<Self> {
        WorkloadConfig::new(r)
    }
}

impl From<WorkloadConfig> for RawWorkload {
    fn from(c: WorkloadConfig) -> Self {
        c.0
    }
}

impl std::ops::Deref for WorkloadConfig {
    type Target = RawWorkload;
    fn deref(&self) -> &RawWorkload {
        &self.0
    }
}

impl WorkloadConfig {
    pub fn new(r: RawWorkload) -> Result<Self> {
        let bad = |reason: &str| Err(Error::invalid("workload", reason.to_string()));
        if r.count == 0 {
            return bad("count must be >= 1");
        }
        if !positive(r.tokens_per_second) {
            return bad("tokens_per_second must be > 0");
        }
        if let Some(m) = r.max_duration {
            if !positive(m) {
                return bad("max_duration must be > 0");
            }
        }
        match &r.distribution {
            LengthDistribution::Lognormal { mu, sigma } => {
                if !mu.is_finite() || !positive(*sigma) {
                    return bad("lognormal needs finite mu and sigma > 0");
                }
            }
            LengthDistribution::Pareto { alpha, x_min } => {
                if !(alpha.is_finite() && *alpha > 1.0) || !positive(*x_min) {
                    return bad("pareto needs alpha > 1 and x_min > 0");
                }
            }
            LengthDistribution::Empirical { bins } => {
                if bins.is_empty() {
                    return bad("empirical needs at least one bin");
                }
                for b in bins {
                    if !(b.lo.is_finite() && b.hi.is_finite() && 0.0 <= b.lo && b.lo <= b.hi) {
                        return bad("empirical bins need 0 <= lo <= hi");
                    }
                    if !(b.weight.is_finite() && b.weight >= 0.0) {
                        return bad("empirical bin weights must be >= 0");
                    }
                }
                if bins.iter().map(|b| b.weight).sum::<f64>() <= 0.0 {
                    return bad("empirical bin weights must not all be zero");
                }
            }
            LengthDistribution::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && 0.0 <= *lo && lo <= hi) {
                    return bad("uniform needs 0 <= lo <= hi");
                }
            }
        }
        match &r.eta_policy {
            EtaPolicy::Constant { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    return bad("eta must be >= 0");
                }
            }
            EtaPolicy::Modality { classes } => {
                if classes.is_empty() {
                    return bad("modality policy needs at least one class");
                }
                if classes.iter().any(|c| {
                    !(c.eta.is_finite() && c.eta >= 0.0 && c.weight.is_finite() && c.weight >= 0.0)
                }) {
                    return bad("modality classes need eta >= 0 and weight >= 0");
                }
                if classes.iter().map(|c| c.weight).sum::<f64>() <= 0.0 {
                    return bad("modality weights must not all be zero");
                }
            }
        }
        Ok(WorkloadConfig(r))
    }

    /// A named preset with `count` sequences.
    pub fn preset(name: &str, count: usize, seed: u64) -> Result<Self> {
        let preset = Preset::from_name(name)
            .ok_or_else(|| Error::invalid("workload", format!("unknown preset `{name}`")))?;
        Ok(preset.config(count, seed))
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        WorkloadConfig(RawWorkload {
            seed,
            ..self.0.clone()
        })
    }

    pub fn with_count(&self, count: usize) -> Result<Self> {
        WorkloadConfig::new(RawWorkload {
            count,
            ..self.0.clone()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Short clips with a moderate tail.
    MsrvttLike,
    InternvidLike,
    /// Heavy tail reaching a minute or more.
    OpenvidLike,
}

impl Preset {
    pub const ALL: [Preset; 3] = [
        Preset::MsrvttLike,
        Preset::InternvidLike,
        Preset::OpenvidLike,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::MsrvttLike => "msrvtt-like",
            Preset::InternvidLike => "internvid-like",
            Preset::OpenvidLike => "openvid-like",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Preset::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn config(self, count: usize, seed: u64) -> WorkloadConfig {
        let (mu, sigma, max) = match self {
            Preset::MsrvttLike => (15f64.ln(), 0.35, 32.0),
            Preset::InternvidLike => (6f64.ln(), 0.8, 64.0),
            Preset::OpenvidLike => (5f64.ln(), 1.0, 64.0),
        };
        WorkloadConfig::new(RawWorkload {
            distribution: LengthDistribution::Lognormal { mu, sigma },
            tokens_per_second: 2048.0,
            count: count.max(1),
            eta_policy: EtaPolicy::Constant { value: 0.3 },
            seed,
            max_duration: Some(max),
        })
        .expect("preset parameters are valid")
    }
}

fn pick<T>(items: &[T], weight: impl Fn(&T) -> f64, rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = items.iter().map(&weight).sum();
    let mut u = rng.random::<f64>() * total;
    for (i, it) in items.iter().enumerate() {
        let w = weight(it);
        if u < w {
            return i;
        }
        u -= w;
    }
    // rounding can leave u just past the last positive weight
    items.iter().rposition(|it| weight(it) > 0.0).unwrap_or(0)
}

/// Draws `count` sequences with ids `0..count`.
pub fn generate(config: &WorkloadConfig) -> Vec<SequenceSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut duration: Box<dyn FnMut(&mut ChaCha8Rng) -> f64> = match &config.distribution {
        LengthDistribution::Lognormal { mu, sigma } => {
            let d = LogNormal::new(*mu, *sigma).expect("validated");
            Box::new(move |r| d.sample(r))
        }
        LengthDistribution::Pareto { alpha, x_min } => {
            let d = Pareto::new(*x_min, *alpha).expect("validated");
            Box::new(move |r| d.sample(r))
        }
        LengthDistribution::Empirical { bins } => {
            let bins = bins.clone();
            Box::new(move |r| {
                let b = &bins[pick(&bins, |b| b.weight, r)];
                if b.hi > b.lo {
                    r.random_range(b.lo..b.hi)
                } else {
                    b.lo
                }
            })
        }
        LengthDistribution::Uniform { lo, hi } => {
            let (lo, hi) = (*lo, *hi);
            Box::new(move |r| if hi > lo { r.random_range(lo..=hi) } else { lo })
        }
    };
    (0..config.count)
        .map(|i| {
            let mut secs = duration(&mut rng);
            if let Some(m) = config.max_duration {
                secs = secs.min(m);
            }
            let length = ((secs * config.tokens_per_second).round() as u64).max(1);
            let eta = match &config.eta_policy {
                EtaPolicy::Constant { value } => *value,
                EtaPolicy::Modality { classes } => {
                    classes[pick(classes, |c| c.weight, &mut rng)].eta
                }
            };
            SequenceSpec::new(i as u64, length, eta).expect("length >= 1 and eta validated")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(lo: f64, hi: f64, count: usize) -> RawWorkload {
        RawWorkload {
            distribution: LengthDistribution::Uniform { lo, hi },
            tokens_per_second: 1.0,
            count,
            eta_policy: EtaPolicy::default(),
            seed: 1,
            max_duration: None,
        }
    }

    #[test]
    fn degenerate_uniform() {
        let seqs = generate(&WorkloadConfig::new(uniform(100.0, 100.0, 4)).unwrap());
        assert_eq!(seqs.len(), 4);
        assert!(seqs.iter().all(|s| s.length() == 100));
        assert_eq!(
            seqs.iter().map(|s| s.id()).collect::<Vec<_>>(),
            vec![0, 1, 2, 3]
        );
    }

    #[test]
    fn lengths_at_least_one_token() {
        let seqs = generate(&WorkloadConfig::new(uniform(0.0, 0.0, 3)).unwrap());
        assert!(seqs.iter().all(|s| s.length() == 1));
    }

    #[test]
    fn invalid_configs() {
        assert!(WorkloadConfig::new(uniform(1.0, 2.0, 0)).is_err());
        assert!(WorkloadConfig::new(uniform(3.0, 2.0, 1)).is_err());
        let mut r = uniform(1.0, 2.0, 1);
        r.distribution = LengthDistribution::Lognormal {
            mu: 1.0,
            sigma: 0.0,
        };
        assert!(WorkloadConfig::new(r.clone()).is_err());
        r.distribution = LengthDistribution::Pareto {
            alpha: 1.0,
            x_min: 1.0,
        };
        assert!(WorkloadConfig::new(r.clone()).is_err());
        r.distribution = LengthDistribution::Empirical { bins: vec![] };
        assert!(WorkloadConfig::new(r).is_err());
        let json = r#"{"distribution":{"kind":"uniform","lo":1,"hi":2},"tokens_per_second":1,"count":1,"seed":0,"colour":1}"#;
        assert!(serde_json::from_str::<WorkloadConfig>(json).is_err());
        assert!(WorkloadConfig::preset("imagenet-like", 1, 0).is_err());
    }

    #[test]
    fn same_seed_same_output() {
        let c = WorkloadConfig::preset("openvid-like", 500, 42).unwrap();
        assert_eq!(generate(&c), generate(&c));
        assert_ne!(generate(&c), generate(&c.with_seed(43)));
    }

    #[test]
    fn modality_policy_assigns_class_etas() {
        let mut r = uniform(1.0, 2.0, 200);
        r.eta_policy = EtaPolicy::Modality {
            classes: vec![
                ModalityClass {
                    name: "text".into(),
                    weight: 1.0,
                    eta: 0.0,
                },
                ModalityClass {
                    name: "video".into(),
                    weight: 1.0,
                    eta: 1.0,
                },
            ],
        };
        let seqs = generate(&WorkloadConfig::new(r).unwrap());
        let video = seqs.iter().filter(|s| s.mask_efficiency() == 1.0).count();
        assert!(seqs
            .iter()
            .all(|s| s.mask_efficiency() == 0.0 || s.mask_efficiency() == 1.0));
        assert!((50..150).contains(&video));
    }

    #[test]
    fn empirical_respects_bins() {
        let mut r = uniform(0.0, 0.0, 300);
        r.distribution = LengthDistribution::Empirical {
            bins: vec![
                HistogramBin {
                    lo: 1.0,
                    hi: 2.0,
                    weight: 3.0,
                },
                HistogramBin {
                    lo: 50.0,
                    hi: 60.0,
                    weight: 1.0,
                },
                HistogramBin {
                    lo: 99.0,
                    hi: 100.0,
                    weight: 0.0,
                },
            ],
        };
        let seqs = generate(&WorkloadConfig::new(r).unwrap());
        assert!(seqs
            .iter()
            .all(|s| (1..=2).contains(&s.length()) || (50..=60).contains(&s.length())));
    }

    #[test]
    fn clipping() {
        let mut r = uniform(10.0, 20.0, 100);
        r.max_duration = Some(12.0);
        let seqs = generate(&WorkloadConfig::new(r).unwrap());
        assert!(seqs.iter().all(|s| s.length() <= 12));
    }
}
