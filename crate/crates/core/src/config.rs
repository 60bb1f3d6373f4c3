//! TOML scenario documents.
//!
//! A document names a plant (power-system preset or explicit matrices), a
//! switching schedule, gains, spectra, initial conditions and integration
//! settings. Unknown keys are rejected. [`ScenarioConfig::to_canonical`]
//! emits a normal form that parses back to the same value.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::digraph::SwitchingSchedule;
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::simkit::{self, power, GainConfig, GainTable, InitialEstimates, PowerAreaParams, Scenario};
use crate::sysdecomp::Plant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub plant: PlantConfig,
    pub schedule: SwitchingSchedule,
    #[serde(default)]
    pub gains: GainsConfig,
    /// Observer spectra per block; entries are `re` or `[re, im]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectra: Option<Vec<Vec<SpectrumEntry>>>,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantConfig {
    Power {
        /// `"table1"` (four areas) or `"table2"` (eight areas); ignored when
        /// `areas` is given.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        preset: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        areas: Option<Vec<PowerAreaParams>>,
        /// `P_ij` between areas adjacent in the schedule's union graph.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coupling: Option<f64>,
        /// Explicit symmetric `P` (overrides `coupling`).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coupling_matrix: Option<Vec<Vec<f64>>>,
    },
    Matrices {
        /// Row-major `A`.
        a: Vec<Vec<f64>>,
        /// One row-major `C_i` per agent.
        c: Vec<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpectrumEntry {
    Real(f64),
    Complex([f64; 2]),
}

impl SpectrumEntry {
    pub fn value(self) -> Complex<f64> {
        match self {
            SpectrumEntry::Real(r) => Complex::new(r, 0.0),
            SpectrumEntry::Complex([re, im]) => Complex::new(re, im),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GainMode {
    #[default]
    Uniform,
    Table,
    Certified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainsConfig {
    /// Gain outside the subgraph.
    pub gamma: f64,
    pub mode: GainMode,
    /// Uniform (or adaptive starting) value of `γ_{i,k}`.
    pub initial: f64,
    /// Row-major `γ_{i,k}` table for `mode = "table"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<Vec<f64>>>,
    pub adaptive: bool,
    /// `℘`; chosen automatically when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wp: Option<f64>,
}

impl Default for GainsConfig {
    fn default() -> Self {
        Self {
            gamma: 100.0,
            mode: GainMode::Uniform,
            initial: 10.0,
            table: None,
            adaptive: false,
            wp: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    /// `χ(0)`; all ones when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi: Option<Vec<f64>>,
    /// Uniform draw range for every estimate coordinate.
    pub estimate_range: [f64; 2],
    /// Explicit flat estimates (overrides the range).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimates: Option<Vec<f64>>,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            chi: None,
            estimate_range: [-3.0, 3.0],
            estimates: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Seconds.
    pub horizon: f64,
    /// Seconds; must divide the dwell time.
    pub step: f64,
    pub decimation: usize,
    pub transform: bool,
    /// Absolute error level for the time-to-threshold metric.
    pub threshold: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            horizon: 40.0,
            step: 0.004,
            decimation: 10,
            transform: true,
            threshold: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub csv: String,
    pub summary: String,
    /// Include `γ_{i,k}` columns; defaults to on for adaptive runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<bool>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            csv: "series.csv".into(),
            summary: "summary.json".into(),
            gains: None,
        }
    }
}

fn cfg_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        message: message.into(),
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, col)
}

fn offending_key(message: &str, text: &str, span: Option<std::ops::Range<usize>>) -> String {
    if let Some(start) = message.find('`') {
        if let Some(len) = message[start + 1..].find('`') {
            return message[start + 1..start + 1 + len].to_string();
        }
    }
    span.and_then(|s| text.get(s))
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "document".into())
}

/// Parse and validate a scenario document.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
        let span = e.span();
        let message = e.message().trim().to_string();
        let key = offending_key(&message, text, span.clone());
        let location = span
            .map(|s| {
                let (l, c) = line_col(text, s.start);
                format!(" (line {l}, column {c})")
            })
            .unwrap_or_default();
        cfg_err(&key, format!("{message}{location}"))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn matrix(rows: &[Vec<f64>], key: &str) -> Result<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(cfg_err(key, "rows have different lengths"));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

fn rows_of(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ScenarioConfig {
    fn validate(&self) -> Result<()> {
        let sim = &self.simulation;
        if !(sim.horizon > 0.0) {
            return Err(cfg_err("simulation.horizon", "must be positive"));
        }
        if !(sim.step > 0.0) {
            return Err(cfg_err("simulation.step", "must be positive"));
        }
        if sim.decimation == 0 {
            return Err(cfg_err("simulation.decimation", "must be at least 1"));
        }
        simkit::steps_per_slot(self.schedule.dwell(), sim.step).map_err(|_| {
            cfg_err(
                "simulation.step",
                format!(
                    "step must divide dwell (step {}, dwell {})",
                    sim.step,
                    self.schedule.dwell()
                ),
            )
        })?;
        let g = &self.gains;
        if !(g.gamma > 0.0) {
            return Err(cfg_err("gains.gamma", "must be positive"));
        }
        if !(g.initial > 0.0) {
            return Err(cfg_err("gains.initial", "must be positive"));
        }
        if let Some(wp) = g.wp {
            if !(wp > 0.0) {
                return Err(cfg_err("gains.wp", "must be positive"));
            }
        }
        if g.mode == GainMode::Table && g.table.is_none() {
            return Err(cfg_err("gains.table", "required when mode = \"table\""));
        }
        let [lo, hi] = self.initial.estimate_range;
        if !(lo <= hi) {
            return Err(cfg_err("initial.estimate_range", "lower bound exceeds upper bound"));
        }
        let plant = self.plant()?;
        let n_ag = plant.agents();
        if self.schedule.n() != n_ag {
            return Err(cfg_err(
                "schedule.graphs",
                format!(
                    "graphs have {} nodes but the plant has {n_ag} agents",
                    self.schedule.n()
                ),
            ));
        }
        if let Some(t) = &g.table {
            let m = matrix(t, "gains.table")?;
            if m.shape() != (n_ag, n_ag) {
                return Err(cfg_err("gains.table", format!("must be {n_ag}x{n_ag}")));
            }
        }
        if let Some(chi) = &self.initial.chi {
            if chi.len() != plant.n() {
                return Err(cfg_err("initial.chi", format!("expected {} entries", plant.n())));
            }
        }
        if let Some(e) = &self.initial.estimates {
            if e.len() != plant.n() * n_ag {
                return Err(cfg_err(
                    "initial.estimates",
                    format!("expected {} entries", plant.n() * n_ag),
                ));
            }
        }
        if let Some(sp) = &self.spectra {
            if sp.len() != n_ag {
                return Err(cfg_err("spectra", format!("expected {n_ag} spectra")));
            }
        }
        Ok(())
    }

    /// Build the plant the document describes.
    pub fn plant(&self) -> Result<Plant> {
        match &self.plant {
            PlantConfig::Power {
                preset,
                areas,
                coupling,
                coupling_matrix,
            } => {
                let params = match (areas, preset.as_deref()) {
                    (Some(a), _) => a.clone(),
                    (None, Some("table1") | None) => power::table1(),
                    (None, Some("table2")) => power::table2(),
                    (None, Some(other)) => {
                        return Err(cfg_err("plant.preset", format!("unknown preset `{other}`")));
                    }
                };
                let n_a = params.len();
                let p = match (coupling_matrix, coupling) {
                    (Some(m), _) => matrix(m, "plant.coupling_matrix")?,
                    (None, Some(v)) => {
                        if self.schedule.n() != n_a {
                            return Err(cfg_err(
                                "schedule.graphs",
                                "node count differs from the number of areas",
                            ));
                        }
                        power::schedule_adjacent_coupling(&self.schedule, *v)
                    }
                    (None, None) => Mat::zeros(n_a, n_a),
                };
                power::build_power_system(&params, &p).map_err(|e| match e {
                    Error::Config { key, message } => cfg_err(&format!("plant.{key}"), message),
                    Error::Dimension(m) => cfg_err("plant.coupling_matrix", m),
                    other => other,
                })
            }
            PlantConfig::Matrices { a, c } => {
                let a = matrix(a, "plant.a")?;
                let c = c
                    .iter()
                    .enumerate()
                    .map(|(i, ci)| matrix(ci, &format!("plant.c[{i}]")))
                    .collect::<Result<Vec<_>>>()?;
                Plant::new(a, c).map_err(|e| cfg_err("plant", e.to_string()))
            }
        }
    }

    pub fn spectra(&self) -> Option<Vec<Vec<Complex<f64>>>> {
        self.spectra
            .as_ref()
            .map(|s| s.iter().map(|b| b.iter().map(|e| e.value()).collect()).collect())
    }

    /// Whether the CSV should carry gain columns.
    pub fn csv_gains(&self) -> bool {
        self.output.gains.unwrap_or(self.gains.adaptive)
    }

    pub fn to_scenario(&self) -> Result<Scenario> {
        let plant = self.plant()?;
        let n = plant.n();
        let g = &self.gains;
        let table = match g.mode {
            GainMode::Uniform => GainTable::Uniform(g.initial),
            GainMode::Table => GainTable::Explicit(matrix(g.table.as_deref().unwrap_or_default(), "gains.table")?),
            GainMode::Certified => GainTable::Certified { wp: g.wp },
        };
        let mut s = Scenario::new(plant, self.schedule.clone());
        s.gains = GainConfig {
            gamma: g.gamma,
            table,
            adaptive: g.adaptive,
        };
        s.spectra = self.spectra();
        s.chi0 = self
            .initial
            .chi
            .as_ref()
            .map_or_else(|| Vector::from_element(n, 1.0), |c| Vector::from_column_slice(c));
        s.init = match &self.initial.estimates {
            Some(e) => InitialEstimates::Explicit(e.clone()),
            None => InitialEstimates::Uniform {
                lo: self.initial.estimate_range[0],
                hi: self.initial.estimate_range[1],
            },
        };
        s.horizon = self.simulation.horizon;
        s.step = self.simulation.step;
        s.decimation = self.simulation.decimation;
        s.transformation_enabled = self.simulation.transform;
        s.validate()?;
        Ok(s)
    }

    /// Canonical TOML text.
    pub fn to_canonical(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| cfg_err("document", e.to_string()))
    }

    /// Explicit-matrix document for an arbitrary plant.
    pub fn from_plant(plant: &Plant, schedule: SwitchingSchedule) -> Self {
        Self {
            name: None,
            plant: PlantConfig::Matrices {
                a: rows_of(plant.a()),
                c: plant.c_blocks().iter().map(rows_of).collect(),
            },
            schedule,
            gains: GainsConfig::default(),
            spectra: None,
            initial: InitialConfig::default(),
            simulation: SimulationConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// Shipped four-area benchmark document.
pub const POWER4: &str = include_str!("../scenarios/power4.toml");
/// Shipped eight-area benchmark document.
pub const POWER8: &str = include_str!("../scenarios/power8.toml");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_documents_round_trip() {
        for text in [POWER4, POWER8] {
            let cfg = parse_config(text).unwrap();
            let canon = cfg.to_canonical().unwrap();
            let again = parse_config(&canon).unwrap();
            assert_eq!(cfg, again);
            assert_eq!(canon, again.to_canonical().unwrap());
        }
    }

    #[test]
    fn step_must_divide_dwell() {
        let text = POWER4.replace("step = 0.004", "step = 0.3");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("step must divide dwell"), "{err}");
    }

    #[test]
    fn unknown_key_is_named() {
        let text = format!("bogus_knob = 3\n{POWER4}");
        match parse_config(&text).unwrap_err() {
            Error::Config { key, message } => {
                assert_eq!(key, "bogus_knob");
                assert!(message.contains("line 1"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn partial_sections_take_defaults() {
        let text = POWER4.replace("initial = 10.0\nadaptive = false\nwp = 1.0\n", "");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.gains.initial, 10.0);
        assert!(!cfg.gains.adaptive);
        assert_eq!(cfg.gains.wp, None);
    }

    #[test]
    fn agent_count_mismatch() {
        let text = POWER4.replace("preset = \"table1\"", "preset = \"table2\"");
        assert!(parse_config(&text).is_err());
    }
}
