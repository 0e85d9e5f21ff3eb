//! Line-oriented run configuration.
//!
//! ```text
//! # comment
//! [grid]
//! n = 128
//! half_width = 8
//! ```
//!
//! Resolution order: the preset of the selected scenario, then the keys in
//! the file, then command-line overrides. `scenario.name` picks the preset
//! wherever it appears in the file.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cns_model::{ModelParams, PressureLaw};
use crate::estimate::harmonic::EnsembleConfig;
use crate::estimate::qg_bound::QG_BOUND_CEILING;
use crate::estimate::theorem::TheoremConfig;
use crate::harness::{InitialDataSpec, InitialKind, ScenarioName, SweepPlan};
use crate::integrator::{IntegratorConfig, Scheme};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: syntax error: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("value out of range for `{key}`: {message}")]
    OutOfRange { key: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub n: usize,
    pub half_width: f64,
    /// Dyadic range; unset ends default to the range covering the grid.
    pub j_min: Option<i32>,
    pub j_max: Option<i32>,
    /// Low/high split: block `j` is low when `2^j ≤ n0`.
    pub n0: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n: 128,
            half_width: 8.0,
            j_min: None,
            j_max: None,
            n0: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub initial: InitialDataSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    pub ensemble: EnsembleConfig,
    pub qg_bound_ceiling: f64,
    pub theorem: TheoremConfig,
    /// Set `c₁` from a half-resolution run when it is not given.
    pub calibrate_c1: bool,
    pub c1_factor: f64,
    pub damping_stride: usize,
    pub damping_source_constant: f64,
    pub damping_coverage: f64,
    pub qg_bound_stride: usize,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            ensemble: EnsembleConfig::default(),
            qg_bound_ceiling: QG_BOUND_CEILING,
            theorem: TheoremConfig::default(),
            calibrate_c1: true,
            c1_factor: 2.0,
            damping_stride: 1,
            damping_source_constant: 4.0,
            damping_coverage: 0.99,
            qg_bound_stride: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write the final state as a checkpoint.
    pub checkpoint: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("bcns_out"),
            checkpoint: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub model: ModelParams,
    pub integrator: IntegratorConfig,
    pub scenario: ScenarioConfig,
    pub estimates: EstimateConfig,
    pub output: OutputConfig,
    pub sweep: SweepPlan,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::preset(ScenarioName::TheoremLargeW)
    }
}

impl RunConfig {
    pub fn preset(name: ScenarioName) -> Self {
        let mut c = RunConfig {
            grid: GridConfig::default(),
            model: ModelParams::default(),
            integrator: IntegratorConfig::default(),
            scenario: ScenarioConfig {
                name: name.as_str().into(),
                initial: InitialDataSpec::default(),
            },
            estimates: EstimateConfig::default(),
            output: OutputConfig::default(),
            sweep: SweepPlan::default(),
        };
        match name {
            ScenarioName::TheoremLargeW => {}
            ScenarioName::LinearDispersion => {
                c.grid.n = 32;
                c.grid.half_width = 1.0;
                c.integrator.t_end = 0.1;
                c.integrator.adaptive = false;
                c.scenario.initial = InitialDataSpec {
                    kind: InitialKind::LinearProbe,
                    a_w: 0.0,
                    eps_v: 0.0,
                    eps_q: 1e-9,
                    eps_a: 1e-9,
                    band_lo: 1,
                    band_hi: 4,
                    band_coupling: 0,
                    ..InitialDataSpec::default()
                };
            }
            ScenarioName::Gamma2Cancellation => {
                c.grid.n = 64;
                c.model.law = PressureLaw::Gamma { gamma: 2.0 };
                c.integrator.t_end = 1.0;
                c.integrator.ledger_stride = 1;
            }
            ScenarioName::SmallnessViolation => {
                c.grid.n = 64;
                c.integrator.t_end = 1.0;
                c.scenario.initial.kind = InitialKind::ControlViolation;
                c.scenario.initial.sup_a = 2.0;
            }
        }
        c
    }

    /// Checks every range rule; the error names the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, message: String| {
            Err(ConfigError::OutOfRange {
                key: key.into(),
                message,
            })
        };
        let g = &self.grid;
        if g.n < 16 || !g.n.is_power_of_two() {
            return bad("grid.n", format!("must be a power of two >= 16, got {}", g.n));
        }
        if !(g.half_width > 0.0 && g.half_width.is_finite()) {
            return bad("grid.half_width", format!("must be positive, got {}", g.half_width));
        }
        if let (Some(lo), Some(hi)) = (g.j_min, g.j_max) {
            if lo > hi {
                return bad("grid.j_max", format!("j_max {hi} below j_min {lo}"));
            }
        }
        if g.n0 == 0 {
            return bad("grid.n0", "must be >= 1".into());
        }
        let m = &self.model;
        if !(m.mu > 0.0) {
            return bad("model.mu", format!("must be positive, got {}", m.mu));
        }
        if !(2.0 * m.mu + m.lambda > 0.0) {
            return bad("model.lambda", "2 mu + lambda must be positive".into());
        }
        if !(m.law.exponent() >= 1.0) {
            return bad("model.gamma", format!("must be >= 1, got {}", m.law.exponent()));
        }
        let i = &self.integrator;
        if !(i.dt_min > 0.0) {
            return bad("integrator.dt_min", format!("must be positive, got {}", i.dt_min));
        }
        if !(i.dt_init >= i.dt_min && i.dt_init <= i.dt_max) {
            return bad("integrator.dt_init", "need dt_min <= dt_init <= dt_max".into());
        }
        if !(i.cfl_safety > 0.0 && i.cfl_safety <= 1.0) {
            return bad("integrator.cfl_safety", format!("must lie in (0, 1], got {}", i.cfl_safety));
        }
        if !(i.t_end >= 0.0 && i.t_end.is_finite()) {
            return bad("integrator.t_end", format!("must be finite and >= 0, got {}", i.t_end));
        }
        if !(i.u_max > 0.0) {
            return bad("integrator.u_max", "must be positive".into());
        }
        if !(i.a_max > 0.0) {
            return bad("integrator.a_max", "must be positive".into());
        }
        if i.ledger_stride == 0 {
            return bad("integrator.ledger_stride", "must be >= 1".into());
        }
        if i.max_steps == 0 {
            return bad("integrator.max_steps", "must be >= 1".into());
        }
        if ScenarioName::parse(&self.scenario.name).is_err() {
            return bad("scenario.name", format!("unknown scenario `{}`", self.scenario.name));
        }
        let s = &self.scenario.initial;
        for (key, v) in [
            ("scenario.a_w", s.a_w),
            ("scenario.eps_v", s.eps_v),
            ("scenario.eps_q", s.eps_q),
            ("scenario.eps_a", s.eps_a),
            ("scenario.sup_a", s.sup_a),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(key, format!("must be finite and >= 0, got {v}"));
            }
        }
        if s.band_lo == 0 {
            return bad("scenario.band_lo", "must be >= 1".into());
        }
        if s.band_hi < s.band_lo {
            return bad("scenario.band_hi", "must be >= band_lo".into());
        }
        if s.band_hi as usize >= g.n / 3 {
            return bad(
                "scenario.band_hi",
                format!("mode {} is not retained on n = {}", s.band_hi, g.n),
            );
        }
        let e = &self.estimates;
        let en = &e.ensemble;
        if en.size == 0 {
            return bad("estimates.ensemble_size", "must be >= 1".into());
        }
        if en.n_coarse < 32 || !en.n_coarse.is_power_of_two() {
            return bad("estimates.n_coarse", format!("must be a power of two >= 32, got {}", en.n_coarse));
        }
        if en.n_fine < 16 || !en.n_fine.is_power_of_two() {
            return bad("estimates.n_fine", format!("must be a power of two >= 16, got {}", en.n_fine));
        }
        for (key, v) in [
            ("estimates.product_ceiling", en.product_ceiling),
            ("estimates.commutator_ceiling", en.commutator_ceiling),
            ("estimates.composition_ceiling", en.composition_ceiling),
            ("estimates.bernstein_ceiling", en.bernstein_ceiling),
            ("estimates.qg_bound_ceiling", e.qg_bound_ceiling),
            ("estimates.theorem_ceiling", e.theorem.ceiling),
            ("estimates.c0", e.theorem.c0),
            ("estimates.c1_factor", e.c1_factor),
            ("estimates.damping_source_constant", e.damping_source_constant),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(key, format!("must be positive, got {v}"));
            }
        }
        if !(e.theorem.big_c0 >= 0.0) {
            return bad("estimates.big_c0", "must be >= 0".into());
        }
        if let Some(c1) = e.theorem.c1 {
            if !(c1 > 0.0) {
                return bad("estimates.c1", format!("must be positive, got {c1}"));
            }
        }
        if !(e.damping_coverage > 0.0 && e.damping_coverage <= 1.0) {
            return bad("estimates.damping_coverage", "must lie in (0, 1]".into());
        }
        if e.damping_stride == 0 {
            return bad("estimates.damping_stride", "must be >= 1".into());
        }
        if e.qg_bound_stride == 0 {
            return bad("estimates.qg_bound_stride", "must be >= 1".into());
        }
        let sw = &self.sweep;
        if sw.a_w.iter().chain(&sw.eps).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return bad("sweep.a_w", "amplitudes must be finite and >= 0".into());
        }
        if sw.n0.contains(&0) {
            return bad("sweep.n0", "must be >= 1".into());
        }
        Ok(())
    }
}

/// Command-line values that win over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub scenario: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub n: Option<usize>,
    pub t_end: Option<f64>,
}

struct Entry {
    line: usize,
    key: String,
    value: String,
}

fn lex(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut section = String::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                line,
                message: "unterminated section header".into(),
            })?;
            let name = name.trim();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("bad section name `{name}`"),
                });
            }
            section = name.to_string();
            continue;
        }
        let (k, v) = body.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            message: format!("expected `key = value`, got `{body}`"),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                message: "missing key".into(),
            });
        }
        if section.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                message: format!("key `{k}` outside any section"),
            });
        }
        let v = v
            .strip_prefix('"')
            .and_then(|s| s.strip_suffix('"'))
            .unwrap_or(v);
        out.push(Entry {
            line,
            key: format!("{section}.{k}"),
            value: v.to_string(),
        });
    }
    Ok(out)
}

fn value<T: std::str::FromStr>(e: &Entry) -> Result<T, ConfigError> {
    e.value.parse().map_err(|_| ConfigError::Syntax {
        line: e.line,
        message: format!("cannot parse `{}` for `{}`", e.value, e.key),
    })
}

fn list<T: std::str::FromStr>(e: &Entry) -> Result<Vec<T>, ConfigError> {
    e.value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|_| ConfigError::Syntax {
                line: e.line,
                message: format!("cannot parse list item `{s}` for `{}`", e.key),
            })
        })
        .collect()
}

fn optional<T: std::str::FromStr>(e: &Entry) -> Result<Option<T>, ConfigError> {
    if e.value == "auto" || e.value.is_empty() {
        Ok(None)
    } else {
        value(e).map(Some)
    }
}

fn apply(c: &mut RunConfig, e: &Entry) -> Result<(), ConfigError> {
    let i = &mut c.integrator;
    let s = &mut c.scenario.initial;
    let est = &mut c.estimates;
    match e.key.as_str() {
        "grid.n" => c.grid.n = value(e)?,
        "grid.half_width" => c.grid.half_width = value(e)?,
        "grid.j_min" => c.grid.j_min = optional(e)?,
        "grid.j_max" => c.grid.j_max = optional(e)?,
        "grid.n0" => c.grid.n0 = value(e)?,
        "model.mu" => c.model.mu = value(e)?,
        "model.lambda" => c.model.lambda = value(e)?,
        "model.gamma" => {
            let g: f64 = value(e)?;
            c.model.law = PressureLaw::Gamma { gamma: g };
        }
        "integrator.dt_init" => i.dt_init = value(e)?,
        "integrator.dt_min" => i.dt_min = value(e)?,
        "integrator.dt_max" => i.dt_max = value(e)?,
        "integrator.cfl_safety" => i.cfl_safety = value(e)?,
        "integrator.t_end" => i.t_end = value(e)?,
        "integrator.scheme" => {
            i.scheme = match e.value.as_str() {
                "imex_euler" => Scheme::ImexEuler,
                "imex_rk2" => Scheme::ImexRk2,
                other => {
                    return Err(ConfigError::Syntax {
                        line: e.line,
                        message: format!("unknown scheme `{other}` (imex_euler or imex_rk2)"),
                    })
                }
            }
        }
        "integrator.adaptive" => i.adaptive = value(e)?,
        "integrator.u_max" => i.u_max = value(e)?,
        "integrator.a_max" => i.a_max = value(e)?,
        "integrator.linear_only" => i.linear_only = value(e)?,
        "integrator.max_steps" => i.max_steps = value(e)?,
        "integrator.ledger_stride" => i.ledger_stride = value(e)?,
        "integrator.sample_stride" => i.sample_stride = value(e)?,
        "scenario.name" => c.scenario.name = e.value.clone(),
        "scenario.kind" => {
            s.kind = InitialKind::parse(&e.value).ok_or_else(|| ConfigError::Syntax {
                line: e.line,
                message: format!("unknown initial-data kind `{}`", e.value),
            })?
        }
        "scenario.a_w" => s.a_w = value(e)?,
        "scenario.eps_v" => s.eps_v = value(e)?,
        "scenario.eps_q" => s.eps_q = value(e)?,
        "scenario.eps_a" => s.eps_a = value(e)?,
        "scenario.seed" => s.seed = value(e)?,
        "scenario.band_lo" => s.band_lo = value(e)?,
        "scenario.band_hi" => s.band_hi = value(e)?,
        "scenario.band_coupling" => s.band_coupling = value(e)?,
        "scenario.sup_a" => s.sup_a = value(e)?,
        "estimates.ensemble_size" => est.ensemble.size = value(e)?,
        "estimates.ensemble_seed" => est.ensemble.seed = value(e)?,
        "estimates.n_coarse" => est.ensemble.n_coarse = value(e)?,
        "estimates.n_fine" => est.ensemble.n_fine = value(e)?,
        "estimates.product_ceiling" => est.ensemble.product_ceiling = value(e)?,
        "estimates.commutator_ceiling" => est.ensemble.commutator_ceiling = value(e)?,
        "estimates.composition_ceiling" => est.ensemble.composition_ceiling = value(e)?,
        "estimates.bernstein_ceiling" => est.ensemble.bernstein_ceiling = value(e)?,
        "estimates.qg_bound_ceiling" => est.qg_bound_ceiling = value(e)?,
        "estimates.theorem_ceiling" => est.theorem.ceiling = value(e)?,
        "estimates.c0" => est.theorem.c0 = value(e)?,
        "estimates.big_c0" => est.theorem.big_c0 = value(e)?,
        "estimates.c1" => est.theorem.c1 = optional(e)?,
        "estimates.calibrate_c1" => est.calibrate_c1 = value(e)?,
        "estimates.c1_factor" => est.c1_factor = value(e)?,
        "estimates.damping_stride" => est.damping_stride = value(e)?,
        "estimates.damping_source_constant" => est.damping_source_constant = value(e)?,
        "estimates.damping_coverage" => est.damping_coverage = value(e)?,
        "estimates.qg_bound_stride" => est.qg_bound_stride = value(e)?,
        "output.dir" => c.output.dir = PathBuf::from(&e.value),
        "output.checkpoint" => c.output.checkpoint = value(e)?,
        "sweep.a_w" => c.sweep.a_w = list(e)?,
        "sweep.eps" => c.sweep.eps = list(e)?,
        "sweep.n0" => c.sweep.n0 = list(e)?,
        _ => {
            return Err(ConfigError::UnknownKey {
                line: e.line,
                key: e.key.clone(),
            })
        }
    }
    Ok(())
}

/// Parses and validates `text` with no overrides.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_with_overrides(text, &Overrides::default())
}

pub fn parse_with_overrides(text: &str, ov: &Overrides) -> Result<RunConfig, ConfigError> {
    let entries = lex(text)?;
    let named = ov.scenario.clone().or_else(|| {
        entries
            .iter()
            .rev()
            .find(|e| e.key == "scenario.name")
            .map(|e| e.value.clone())
    });
    let preset = match &named {
        Some(n) => ScenarioName::parse(n).map_err(|_| ConfigError::OutOfRange {
            key: "scenario.name".into(),
            message: format!("unknown scenario `{n}`"),
        })?,
        None => ScenarioName::TheoremLargeW,
    };
    let mut c = RunConfig::preset(preset);
    for e in &entries {
        apply(&mut c, e)?;
    }
    if let Some(n) = &ov.scenario {
        c.scenario.name = n.clone();
    }
    if let Some(seed) = ov.seed {
        c.scenario.initial.seed = seed;
        c.estimates.ensemble.seed = seed;
    }
    if let Some(out) = &ov.out {
        c.output.dir = out.clone();
    }
    if let Some(n) = ov.n {
        c.grid.n = n;
    }
    if let Some(t) = ov.t_end {
        c.integrator.t_end = t;
    }
    c.validate()?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.grid.n, 128);
        assert_eq!(c.grid.half_width, 8.0);
        assert_eq!(c.scenario.name, "theorem_large_w");
        assert_eq!(parse_config("# only a comment\n\n").unwrap(), c);
    }

    #[test]
    fn non_power_of_two_names_grid_n() {
        let err = parse_config("[grid]\nn = 48\n").unwrap_err();
        match &err {
            ConfigError::OutOfRange { key, .. } => assert_eq!(key, "grid.n"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("grid.n"));
    }

    #[test]
    fn errors_are_distinct() {
        assert_eq!(
            parse_config("[grid]\nn 64\n").unwrap_err(),
            ConfigError::Syntax {
                line: 2,
                message: "expected `key = value`, got `n 64`".into()
            }
        );
        assert!(matches!(
            parse_config("[grid]\nsize = 64\n").unwrap_err(),
            ConfigError::UnknownKey { line: 2, .. }
        ));
        assert!(matches!(
            parse_config("[grid]\nn = sixty\n").unwrap_err(),
            ConfigError::Syntax { line: 2, .. }
        ));
        assert!(matches!(parse_config("[grid\n").unwrap_err(), ConfigError::Syntax { line: 1, .. }));
        assert!(matches!(parse_config("n = 64\n").unwrap_err(), ConfigError::Syntax { line: 1, .. }));
        assert!(matches!(
            parse_config("[estimates]\ndamping_coverage = 1.5\n").unwrap_err(),
            ConfigError::OutOfRange { .. }
        ));
        assert!(matches!(
            parse_config("[scenario]\nname = bogus\n").unwrap_err(),
            ConfigError::OutOfRange { .. }
        ));
    }

    #[test]
    fn full_file_matches_hand_built() {
        let text = r#"
# every section
[grid]
n = 64
half_width = 4
j_min = -3
j_max = 4
n0 = 2
[model]
mu = 0.5
lambda = 0.25
gamma = 1.4
[integrator]
dt_init = 0.005
dt_min = 1e-7
dt_max = 0.02
cfl_safety = 0.4
t_end = 2.5
scheme = imex_euler
adaptive = false
u_max = 50
a_max = 0.45
linear_only = true
max_steps = 5000
ledger_stride = 3
sample_stride = 7
[scenario]
name = "gamma2_cancellation"
kind = random_band
a_w = 0.75
eps_v = 0.002
eps_q = 0.003
eps_a = 0.004
seed = 99
band_lo = 2
band_hi = 6
band_coupling = 2
sup_a = 1.5
[estimates]
ensemble_size = 20
ensemble_seed = 5
n_coarse = 32
n_fine = 64
product_ceiling = 40
commutator_ceiling = 41
composition_ceiling = 42
bernstein_ceiling = 9
qg_bound_ceiling = 80
theorem_ceiling = 90
c0 = 0.1
big_c0 = 2
c1 = 0.5
calibrate_c1 = false
c1_factor = 3
damping_stride = 2
damping_source_constant = 5
damping_coverage = 0.95
qg_bound_stride = 4
[output]
dir = /tmp/x
checkpoint = false
[sweep]
a_w = 0.5, 1, 2
eps = 1e-3
n0 = 1, 2
"#;
        let mut want = RunConfig::preset(ScenarioName::Gamma2Cancellation);
        want.grid = GridConfig {
            n: 64,
            half_width: 4.0,
            j_min: Some(-3),
            j_max: Some(4),
            n0: 2,
        };
        want.model = ModelParams {
            mu: 0.5,
            lambda: 0.25,
            law: PressureLaw::Gamma { gamma: 1.4 },
        };
        want.integrator = IntegratorConfig {
            dt_init: 0.005,
            dt_min: 1e-7,
            dt_max: 0.02,
            cfl_safety: 0.4,
            t_end: 2.5,
            scheme: Scheme::ImexEuler,
            adaptive: false,
            u_max: 50.0,
            a_max: 0.45,
            linear_only: true,
            max_steps: 5000,
            ledger_stride: 3,
            sample_stride: 7,
        };
        want.scenario = ScenarioConfig {
            name: "gamma2_cancellation".into(),
            initial: InitialDataSpec {
                kind: InitialKind::RandomBand,
                a_w: 0.75,
                eps_v: 0.002,
                eps_q: 0.003,
                eps_a: 0.004,
                seed: 99,
                band_lo: 2,
                band_hi: 6,
                band_coupling: 2,
                sup_a: 1.5,
            },
        };
        want.estimates = EstimateConfig {
            ensemble: EnsembleConfig {
                size: 20,
                seed: 5,
                n_coarse: 32,
                n_fine: 64,
                product_ceiling: 40.0,
                commutator_ceiling: 41.0,
                composition_ceiling: 42.0,
                bernstein_ceiling: 9.0,
            },
            qg_bound_ceiling: 80.0,
            theorem: TheoremConfig {
                c0: 0.1,
                big_c0: 2.0,
                c1: Some(0.5),
                ceiling: 90.0,
            },
            calibrate_c1: false,
            c1_factor: 3.0,
            damping_stride: 2,
            damping_source_constant: 5.0,
            damping_coverage: 0.95,
            qg_bound_stride: 4,
        };
        want.output = OutputConfig {
            dir: PathBuf::from("/tmp/x"),
            checkpoint: false,
        };
        want.sweep = SweepPlan {
            a_w: vec![0.5, 1.0, 2.0],
            eps: vec![1e-3],
            n0: vec![1, 2],
        };
        assert_eq!(parse_config(text).unwrap(), want);
    }

    #[test]
    fn precedence_is_preset_file_cli() {
        let text = "[scenario]\nname = smallness_violation\nseed = 3\n[integrator]\nt_end = 4\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.scenario.initial.kind, InitialKind::ControlViolation);
        assert_eq!(c.grid.n, 64);
        assert_eq!(c.scenario.initial.seed, 3);
        assert_eq!(c.integrator.t_end, 4.0);
        let ov = Overrides {
            seed: Some(11),
            n: Some(32),
            t_end: Some(0.5),
            out: Some(PathBuf::from("o")),
            scenario: None,
        };
        let c = parse_with_overrides(text, &ov).unwrap();
        assert_eq!((c.scenario.initial.seed, c.grid.n, c.integrator.t_end), (11, 32, 0.5));
        assert_eq!(c.output.dir, PathBuf::from("o"));
        let ov = Overrides {
            scenario: Some("linear_dispersion".into()),
            ..Overrides::default()
        };
        let c = parse_with_overrides("", &ov).unwrap();
        assert_eq!(c.grid.n, 32);
        assert_eq!(c.scenario.name, "linear_dispersion");
    }

    #[test]
    fn every_preset_validates() {
        for n in ScenarioName::ALL {
            RunConfig::preset(n).validate().unwrap();
        }
    }
}
