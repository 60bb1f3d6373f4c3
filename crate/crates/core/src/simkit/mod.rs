//! Scenario assembly and joint plant/observer simulation.

mod ode;
pub mod power;
mod series;

pub use ode::{rk4_step, Rk4};
pub use power::{build_power_system, PowerAreaParams};
pub use series::{metrics, Summary, TimeSeries, CONVERGENCE_RATIO};

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::certify::{self, GainSuggestion};
use crate::digraph::{self, SwitchingSchedule};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::observer::{ObserverModel, SlotGraphs};
use crate::par::*;
use crate::sysdecomp::{self, Decomposition, ObserverGains, Plant};

/// Runs whose error norm exceeds this are cut short and flagged.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Sorted eigenvalues of `a`.
pub fn spectrum(a: &Mat) -> Vec<Complex<f64>> {
    linalg::eigenvalues(a)
}

/// Where the in-subgraph gains `γ_{i,k}` come from.
#[derive(Debug, Clone, PartialEq)]
pub enum GainTable {
    /// Every `γ_{i,k}` starts at this value.
    Uniform(f64),
    /// Explicit `N×N` table indexed `(agent, block)`.
    Explicit(Mat),
    /// Certified table from [`certify::suggest_gains`]; `wp = None` picks
    /// `℘` by [`certify::choose_wp`].
    Certified { wp: Option<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainConfig {
    /// `γ`, used outside the subgraph.
    pub gamma: f64,
    pub table: GainTable,
    pub adaptive: bool,
}

impl Default for GainConfig {
    fn default() -> Self {
        Self {
            gamma: 100.0,
            table: GainTable::Uniform(10.0),
            adaptive: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialEstimates {
    /// Independent uniform draw per coordinate.
    Uniform { lo: f64, hi: f64 },
    /// Flat vector (agent-major, decomposed coordinates).
    Explicit(Vec<f64>),
    /// Every agent starts at the true decomposed state.
    Exact,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub plant: Plant,
    pub schedule: SwitchingSchedule,
    pub gains: GainConfig,
    /// Observer spectra per block; `None` uses `{-12, -13, …}`.
    pub spectra: Option<Vec<Vec<Complex<f64>>>>,
    pub chi0: Vector,
    pub init: InitialEstimates,
    pub horizon: f64,
    pub step: f64,
    /// Keep every `decimation`-th step.
    pub decimation: usize,
    pub transformation_enabled: bool,
    pub record_estimates: bool,
}

impl Scenario {
    /// Defaults around a plant and schedule: 40 s horizon, 4 ms step,
    /// ×10 decimation, `χ(0) = 1`, estimates from U[−3, 3].
    pub fn new(plant: Plant, schedule: SwitchingSchedule) -> Self {
        let n = plant.n();
        Self {
            plant,
            schedule,
            gains: GainConfig::default(),
            spectra: None,
            chi0: Vector::from_element(n, 1.0),
            init: InitialEstimates::Uniform { lo: -3.0, hi: 3.0 },
            horizon: 40.0,
            step: 0.004,
            decimation: 10,
            transformation_enabled: true,
            record_estimates: false,
        }
    }

    /// Steps per dwell slot, when the step divides the dwell time.
    pub fn steps_per_slot(&self) -> Result<usize> {
        steps_per_slot(self.schedule.dwell(), self.step)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.plant.n();
        if self.schedule.n() != self.plant.agents() {
            return Err(Error::Dimension(format!(
                "schedule has {} agents, plant has {}",
                self.schedule.n(),
                self.plant.agents()
            )));
        }
        if self.chi0.len() != n {
            return Err(Error::Dimension(format!(
                "χ(0) has {} entries, expected {n}",
                self.chi0.len()
            )));
        }
        if !(self.horizon > 0.0) || !(self.step > 0.0) || self.decimation == 0 {
            return Err(Error::Dimension("horizon, step and decimation must be positive".into()));
        }
        self.steps_per_slot()?;
        if !(self.gains.gamma > 0.0) {
            return Err(Error::InvalidGain(format!(
                "γ must be positive, got {}",
                self.gains.gamma
            )));
        }
        match &self.init {
            InitialEstimates::Uniform { lo, hi } if !(lo <= hi) => {
                return Err(Error::Dimension(format!("empty initial range [{lo}, {hi}]")));
            }
            InitialEstimates::Explicit(v) if v.len() != n * self.plant.agents() => {
                return Err(Error::Dimension(
                    "explicit initial estimates have the wrong length".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }
}

/// `τ / h` when it is an integer (to 1e−9 relative), else an error.
pub fn steps_per_slot(dwell: f64, step: f64) -> Result<usize> {
    let ratio = dwell / step;
    let k = ratio.round();
    if k < 1.0 || (ratio - k).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::Config {
            key: "step".into(),
            message: format!("step must divide dwell (step {step}, dwell {dwell})"),
        });
    }
    Ok(k as usize)
}

/// Scenario with decomposition, gains and per-graph consensus data resolved.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub model: ObserverModel,
    pub observer_gains: ObserverGains,
    pub coupling: Mat,
    pub certified: Option<GainSuggestion>,
    slot_graphs: Vec<SlotGraphs>,
    steps_per_slot: usize,
}

impl Prepared {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let dec = sysdecomp::decompose(&scenario.plant)?;
        let observer_gains = sysdecomp::design_gains(&dec, scenario.spectra.as_deref())?;
        let n_ag = dec.blocks();
        let (coupling, certified) = match &scenario.gains.table {
            GainTable::Uniform(g) => (Mat::from_element(n_ag, n_ag, *g), None),
            GainTable::Explicit(m) => {
                if m.shape() != (n_ag, n_ag) {
                    return Err(Error::Dimension("gain table must be N×N".into()));
                }
                (m.clone(), None)
            }
            GainTable::Certified { wp } => {
                let wp = match wp {
                    Some(w) => *w,
                    None => certify::choose_wp(&dec, &observer_gains, &scenario.schedule)?.wp,
                };
                let sug = certify::suggest_gains(&dec, &observer_gains, &scenario.schedule, wp)?;
                (sug.table.clone(), Some(sug))
            }
        };
        if let Some(bad) = coupling.iter().find(|g| !(**g > 0.0)) {
            return Err(Error::InvalidGain(format!("γ_ik must be positive, got {bad}")));
        }
        let model = ObserverModel::new(dec, &observer_gains, scenario.gains.gamma)?;
        let slot_graphs = scenario
            .schedule
            .library()
            .iter()
            .map(|g| SlotGraphs::new(g, scenario.transformation_enabled))
            .collect();
        let steps_per_slot = scenario.steps_per_slot()?;
        Ok(Self {
            scenario,
            model,
            observer_gains,
            coupling,
            certified,
            slot_graphs,
            steps_per_slot,
        })
    }

    pub fn decomposition(&self) -> &Decomposition {
        self.model.decomposition()
    }

    /// Initial flat estimate vector for `seed`.
    pub fn initial_estimates(&self, seed: u64) -> Vec<f64> {
        let len = self.model.state_len();
        match &self.scenario.init {
            InitialEstimates::Uniform { lo, hi } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..len)
                    .map(|_| if lo == hi { *lo } else { rng.random_range(*lo..*hi) })
                    .collect()
            }
            InitialEstimates::Explicit(v) => v.clone(),
            InitialEstimates::Exact => self.model.exact_estimates(&self.scenario.chi0),
        }
    }

    pub fn run(&self, seed: u64) -> Result<TimeSeries> {
        self.run_from(self.initial_estimates(seed))
    }

    /// Integrate plant, estimates and (when adaptive) gains jointly.
    pub fn run_from(&self, est0: Vec<f64>) -> Result<TimeSeries> {
        let sc = &self.scenario;
        let n = self.model.n();
        let n_ag = self.model.agents();
        let n_est = self.model.state_len();
        let adaptive = sc.gains.adaptive;
        if est0.len() != n_est {
            return Err(Error::Dimension("initial estimate length".into()));
        }
        let mut state = Vec::with_capacity(n + n_est + n_ag * n_ag);
        state.extend_from_slice(sc.chi0.as_slice());
        state.extend_from_slice(&est0);
        if adaptive {
            // row-major (agent, block)
            for i in 0..n_ag {
                for k in 0..n_ag {
                    state.push(self.coupling[(i, k)]);
                }
            }
        }

        let a = sc.plant.a();
        let c_blocks = sc.plant.c_blocks();
        let steps = (sc.horizon / sc.step).round() as usize;
        let mut series = TimeSeries::new(n_ag, sc.record_estimates);
        let mut rk = Rk4::new(state.len());
        let mut gam = self.coupling.clone();

        for step in 0..=steps {
            let t = step as f64 * sc.step;
            let slot = (step / self.steps_per_slot) % sc.schedule.slots();
            let sigma = sc.schedule.assignment()[slot];
            if step % sc.decimation == 0 || step == steps {
                let norms = self.error_norms(&state);
                let diverged = norms.iter().any(|e| !e.is_finite() || *e > DIVERGENCE_LIMIT);
                self.record(&mut series, t, slot, sigma, norms, &state, adaptive);
                if diverged {
                    series.diverged = true;
                    return Ok(series);
                }
            }
            if step == steps {
                break;
            }
            let sg = &self.slot_graphs[sigma];
            let mut rhs = |_t: f64, x: &[f64], dx: &mut [f64]| -> Result<()> {
                let chi = Vector::from_column_slice(&x[..n]);
                let dchi = a * &chi;
                dx[..n].copy_from_slice(dchi.as_slice());
                let outputs: Vec<Vector> = c_blocks.iter().map(|c| c * &chi).collect();
                let est = &x[n..n + n_est];
                if adaptive {
                    for i in 0..n_ag {
                        for k in 0..n_ag {
                            gam[(i, k)] = x[n + n_est + i * n_ag + k];
                        }
                    }
                }
                self.model.rhs_into(est, &gam, &outputs, sg, &mut dx[n..n + n_est])?;
                if adaptive {
                    let rate = self.model.adaptive_rate(est, sg);
                    for i in 0..n_ag {
                        for k in 0..n_ag {
                            dx[n + n_est + i * n_ag + k] = rate[(i, k)];
                        }
                    }
                }
                Ok(())
            };
            if let Err(e) = rk.step(&mut rhs, t, &mut state, sc.step) {
                match e {
                    Error::NonFinite(_) => {
                        series.diverged = true;
                        return Ok(series);
                    }
                    other => return Err(other),
                }
            }
        }
        Ok(series)
    }

    fn error_norms(&self, state: &[f64]) -> Vec<f64> {
        let n = self.model.n();
        let x = self.decomposition().to_blocks(&Vector::from_column_slice(&state[..n]));
        (0..self.model.agents())
            .map(|i| {
                let est = &state[n + i * n..n + (i + 1) * n];
                est.iter()
                    .zip(x.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &self,
        series: &mut TimeSeries,
        t: f64,
        slot: usize,
        sigma: usize,
        norms: Vec<f64>,
        state: &[f64],
        adaptive: bool,
    ) {
        let n = self.model.n();
        let n_est = self.model.state_len();
        let n_ag = self.model.agents();
        series.t.push(t);
        series.slot.push(slot);
        series.sigma.push(sigma);
        series.errors.push(norms);
        series.gains.push(if adaptive {
            state[n + n_est..n + n_est + n_ag * n_ag].to_vec()
        } else {
            self.coupling.transpose().as_slice().to_vec()
        });
        if let Some(est) = series.estimates.as_mut() {
            est.push(state[n..n + n_est].to_vec());
        }
    }
}

/// Prepare and run a scenario once.
pub fn run(s: &Scenario, seed: u64) -> Result<TimeSeries> {
    Prepared::new(s.clone())?.run(seed)
}

/// Independent runs over `seeds`, fanned out across threads when the
/// `parallel` feature is on.
pub fn run_batch(p: &Prepared, seeds: &[u64]) -> Vec<Result<TimeSeries>> {
    seeds.par_iter().map(|&s| p.run(s)).collect()
}

/// Four- or eight-area benchmark with the shipped default schedule.
pub fn power_scenario(areas: usize) -> Result<Scenario> {
    let (params, schedule) = match areas {
        4 => (power::table1(), digraph::benchmark_schedule_4()),
        8 => (power::table2(), digraph::benchmark_schedule_8()),
        other => return Err(Error::Dimension(format!("no benchmark with {other} areas"))),
    };
    let plant = build_power_system(&params, &Mat::zeros(areas, areas))?;
    Ok(Scenario::new(plant, schedule))
}
