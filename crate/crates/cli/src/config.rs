//! Experiment configuration (TOML).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use asse_core::analytics::Method;
use asse_core::grid::{parse_matpower_case, InputRole, PowerSystemCase, ResModel};
use asse_core::sparse_pce::FitOptions;
use asse_core::sse::SseConfig;
use asse_core::uncertainty::{Marginal, RandomVector, SOBOL_MAX_DIM};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub name: String,
    pub role: InputRole,
    pub distribution: Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PceSection {
    pub degrees: Vec<u32>,
    pub q_norms: Vec<f64>,
}

impl Default for PceSection {
    fn default() -> Self {
        let d = FitOptions::default();
        Self {
            degrees: d.degrees,
            q_norms: d.q_norms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SseSection {
    pub n_ref_min: usize,
    pub k_max: usize,
}

impl Default for SseSection {
    fn default() -> Self {
        let d = SseConfig::default();
        Self {
            n_ref_min: d.n_ref_min,
            k_max: d.k_max,
        }
    }
}

/// Inclusive range `start, start + step, ..., ≤ stop`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NedRange {
    pub start: usize,
    pub stop: usize,
    pub step: usize,
}

impl NedRange {
    pub fn values(&self) -> Vec<usize> {
        (self.start..=self.stop).step_by(self.step.max(1)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub n_ed: NedRange,
    /// Defaults to the top-level `responses`.
    #[serde(default)]
    pub responses: Option<Vec<String>>,
}

fn default_qmc_skip() -> usize {
    1
}

fn default_quantiles() -> Vec<f64> {
    vec![0.05, 0.95]
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Relative paths resolve against the config file's directory.
    pub case: PathBuf,
    pub n_ed: usize,
    pub n_val: usize,
    /// Leading Sobol' points dropped from the experiment design.
    #[serde(default = "default_qmc_skip")]
    pub qmc_skip: usize,
    /// First Sobol' index of the validation set. Must lie past every design
    /// point so the two sets are disjoint.
    pub validation_skip: usize,
    pub methods: Vec<Method>,
    /// `Pg_<k>`, `Qg_<k>` (k = generator row, 1-based), `V_<bus>`,
    /// `theta_<bus>` or `objective`.
    pub responses: Vec<String>,
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<f64>,
    /// 0 uses every available core.
    #[serde(default)]
    pub workers: usize,
    /// When false, report CSVs also carry wall times and are no longer
    /// reproducible byte for byte.
    #[serde(default = "default_true")]
    pub deterministic: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub inputs: Vec<InputSpec>,
    #[serde(default)]
    pub res: ResModel,
    #[serde(default)]
    pub pce: PceSection,
    #[serde(default)]
    pub sse: SseSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

/// A response extracted from an OPF solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Response {
    Pg(usize),
    Qg(usize),
    Vm(usize),
    Va(usize),
    Objective,
}

impl Response {
    pub fn parse(name: &str, case: &PowerSystemCase) -> Result<Self> {
        if name == "objective" {
            return Ok(Response::Objective);
        }
        let (kind, num) = name
            .rsplit_once('_')
            .with_context(|| format!("unknown response `{name}`"))?;
        let num: usize = num.parse().with_context(|| format!("unknown response `{name}`"))?;
        let index = case.bus_index();
        let bus = || {
            index
                .get(&num)
                .copied()
                .with_context(|| format!("response `{name}`: bus {num} not in case"))
        };
        let gen = || {
            if (1..=case.generators.len()).contains(&num) {
                Ok(num - 1)
            } else {
                bail!("response `{name}`: case has {} generators", case.generators.len())
            }
        };
        Ok(match kind {
            "Pg" => Response::Pg(gen()?),
            "Qg" => Response::Qg(gen()?),
            "V" => Response::Vm(bus()?),
            "theta" => Response::Va(bus()?),
            _ => bail!("unknown response `{name}`"),
        })
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid experiment config")
    }

    /// Reads a config and resolves its case path.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.case.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.case = dir.join(&cfg.case);
            }
        }
        Ok(cfg)
    }

    pub fn random_vector(&self) -> Result<RandomVector> {
        Ok(RandomVector::new(self.inputs.iter().map(|i| i.distribution).collect())?)
    }

    pub fn roles(&self) -> Vec<InputRole> {
        self.inputs.iter().map(|i| i.role).collect()
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            degrees: self.pce.degrees.clone(),
            q_norms: self.pce.q_norms.clone(),
        }
    }

    pub fn sse_config(&self) -> SseConfig {
        SseConfig {
            n_ref_min: self.sse.n_ref_min,
            k_max: self.sse.k_max,
            fit: self.fit_options(),
        }
    }

    pub fn sweep_values(&self) -> Result<Vec<usize>> {
        let sweep = self.sweep.as_ref().context("config has no [sweep] section")?;
        let values = sweep.n_ed.values();
        if values.is_empty() || sweep.n_ed.step == 0 {
            bail!("sweep N_ED range is empty");
        }
        Ok(values)
    }

    pub fn sweep_responses(&self) -> Vec<String> {
        self.sweep
            .as_ref()
            .and_then(|s| s.responses.clone())
            .unwrap_or_else(|| self.responses.clone())
    }

    pub fn load_case(&self) -> Result<PowerSystemCase> {
        let text =
            std::fs::read_to_string(&self.case).with_context(|| format!("reading case {}", self.case.display()))?;
        Ok(parse_matpower_case(&text)?)
    }

    /// Checks everything that can be checked before any OPF is solved and
    /// returns the parsed case and responses.
    pub fn validate(&self) -> Result<(PowerSystemCase, Vec<(String, Response)>)> {
        if self.n_ed == 0 {
            bail!("n_ed must be at least 1");
        }
        if self.n_val < self.n_ed {
            bail!("n_val ({}) must be at least n_ed ({})", self.n_val, self.n_ed);
        }
        if self.inputs.is_empty() || self.inputs.len() > SOBOL_MAX_DIM {
            bail!("between 1 and {SOBOL_MAX_DIM} inputs are supported, got {}", self.inputs.len());
        }
        if self.methods.is_empty() {
            bail!("no methods selected");
        }
        if self.responses.is_empty() {
            bail!("no responses selected");
        }
        if let Some(p) = self.quantiles.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            bail!("quantile level {p} outside [0, 1]");
        }
        let max_ed = match &self.sweep {
            Some(_) => self.sweep_values()?.into_iter().max().unwrap_or(0).max(self.n_ed),
            None => self.n_ed,
        };
        if self.validation_skip < self.qmc_skip + max_ed {
            bail!(
                "validation_skip ({}) overlaps the experiment design (qmc_skip {} + up to {max_ed} points)",
                self.validation_skip,
                self.qmc_skip
            );
        }
        self.random_vector()?;
        self.fit_options().validate()?;
        self.res.validate()?;
        let case = self.load_case()?;
        let index = case.bus_index();
        for input in &self.inputs {
            if let InputRole::Load { bus } = input.role {
                if !index.contains_key(&bus) {
                    bail!("input `{}` targets bus {bus}, which is not in the case", input.name);
                }
            }
        }
        for bus in [self.res.wind.bus, self.res.pv.bus] {
            if !index.contains_key(&bus) {
                bail!("renewable plant at bus {bus}, which is not in the case");
            }
        }
        let responses = parse_responses(&self.responses, &case)?;
        parse_responses(&self.sweep_responses(), &case)?;
        Ok((case, responses))
    }
}

pub fn parse_responses(names: &[String], case: &PowerSystemCase) -> Result<Vec<(String, Response)>> {
    let mut out: Vec<(String, Response)> = Vec::new();
    for name in names {
        let r = Response::parse(name, case)?;
        if out.iter().any(|(n, _)| n == name) {
            bail!("response `{name}` listed twice");
        }
        out.push((name.clone(), r));
    }
    Ok(out)
}
