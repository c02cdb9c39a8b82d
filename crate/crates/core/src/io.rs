//! Versioned JSON files.
//!
//! Every file is an envelope `{"schema": ..., "version": ..., "data": ...}`.
//! Unknown fields are rejected at every level and parse errors carry the
//! line and column reported by serde_json.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::PlanOptions;
use crate::profiler::{FitReport, TraceSample};
use crate::sim::{ComparisonReport, SimReport};
use crate::types::{ClusterSpec, CostCoefficients, MicroBatch, RawPlan, SchedulePlan};
use crate::workload::WorkloadConfig;

pub const VERSION: u32 = 1;

/// A value with its own file schema.
pub trait Document: Serialize + DeserializeOwned {
    const SCHEMA: &'static str;
}

macro_rules! document {
    ($($t:ty => $name:literal),* $(,)?) => {
        $(impl Document for $t { const SCHEMA: &'static str = $name; })*
    };
}

document! {
    MicroBatch => "ringplan.batch",
    Vec<TraceSample> => "ringplan.trace",
    Vec<SchedulePlan> => "ringplan.plans",
    SimReport => "ringplan.sim_report",
    ComparisonReport => "ringplan.comparison",
    CostCoefficients => "ringplan.coefficients",
    ClusterSpec => "ringplan.cluster",
    WorkloadConfig => "ringplan.workload",
    FitReport => "ringplan.fit_report",
    PlanOptions => "ringplan.plan_options",
}

#[derive(Serialize)]
struct EnvelopeRef<'a, T> {
    schema: &'a str,
    version: u32,
    data: &'a T,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct Envelope<T> {
    schema: String,
    version: u32,
    data: T,
}

pub fn to_string<T: Document>(value: &T) -> Result<String> {
    let env = EnvelopeRef {
        schema: T::SCHEMA,
        version: VERSION,
        data: value,
    };
    serde_json::to_string_pretty(&env).map_err(|source| Error::Parse {
        context: format!("serializing {}", T::SCHEMA),
        source,
    })
}

#[derive(Deserialize)]
struct Header {
    schema: String,
    version: u32,
}

fn parse_envelope<T: DeserializeOwned>(text: &str, schema: &str, context: &str) -> Result<T> {
    let parse_err = |source| Error::Parse {
        context: context.to_string(),
        source,
    };
    // check the header first so a wrong file type is not reported as bad data
    let env: Header = serde_json::from_str(text).map_err(parse_err)?;
    if env.schema != schema {
        return Err(Error::invalid(
            "file schema",
            format!("{context}: expected `{schema}`, found `{}`", env.schema),
        ));
    }
    if env.version != VERSION {
        return Err(Error::invalid(
            "file version",
            format!("{context}: expected {VERSION}, found {}", env.version),
        ));
    }
    let env: Envelope<T> = serde_json::from_str(text).map_err(parse_err)?;
    Ok(env.data)
}

/// Parses a document; `context` names the source in error messages.
pub fn from_str<T: Document>(text: &str, context: &str) -> Result<T> {
    parse_envelope(text, T::SCHEMA, context)
}

/// Parses a plan file. Cross-group problems such as two groups sharing a
/// rank surface as [`Error::Validation`] rather than as parse errors.
pub fn plans_from_str(text: &str, context: &str) -> Result<Vec<SchedulePlan>> {
    let raw: Vec<RawPlan> = parse_envelope(text, <Vec<SchedulePlan>>::SCHEMA, context)?;
    raw.into_iter().map(SchedulePlan::try_from).collect()
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        context: format!("reading {}", path.display()),
        source,
    })
}

pub fn read<T: Document>(path: &Path) -> Result<T> {
    from_str(&read_text(path)?, &path.display().to_string())
}

pub fn read_plans(path: &Path) -> Result<Vec<SchedulePlan>> {
    plans_from_str(&read_text(path)?, &path.display().to_string())
}

pub fn write<T: Document>(path: &Path, value: &T) -> Result<()> {
    let mut text = to_string(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io {
        context: format!("writing {}", path.display()),
        source,
    })
}
