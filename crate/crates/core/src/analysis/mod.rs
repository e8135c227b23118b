//! Experiment grids: every cell is one distillation run from a shared frozen
//! teacher, differing from its neighbours only in the axis value and seed.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::Dataset;
use crate::distill::{LossKind, WeightingMode};
use crate::error::{Error, Result};
use crate::models::{MlpSpec, ModelParams};
use crate::par::{self, Execution};
use crate::trainer::{distill_student, read_train_log, write_train_log, TrainConfig, TrainRecord};

pub const GRID_HEADER: &str = "axis_value,seed,final_val_acc";
pub const AGGREGATE_HEADER: &str = "axis_value,mean,std,n";
pub const QUARTILE_HEADER: &str = "epoch,quartile,share";

pub const DEFAULT_TPRIME_VALUES: [f64; 4] = [1.0, 2.0, 3.0, 4.0];
pub const DEFAULT_BETA_VALUES: [f64; 10] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    WeightingMode,
    EntropyTemperature,
    DkdBeta,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::WeightingMode => "weighting_mode",
            Axis::EntropyTemperature => "entropy_temperature",
            Axis::DkdBeta => "dkd_beta",
        }
    }

    /// Fewest seeds a grid on this axis accepts. The beta sweep is run at a
    /// reduced replicate count since it has ten axis values and two modes.
    pub fn min_seeds(self) -> usize {
        match self {
            Axis::DkdBeta => 3,
            _ => 5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AxisValue {
    Mode(WeightingMode),
    Real(f64),
}

impl fmt::Display for AxisValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxisValue::Mode(m) => write!(f, "{m}"),
            AxisValue::Real(x) => write!(f, "{x:?}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentGrid {
    pub base: TrainConfig,
    pub axis: Axis,
    pub values: Vec<AxisValue>,
    pub seeds: Vec<u64>,
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.values.is_empty() {
            return Err(Error::config("grid has no axis values"));
        }
        if self.seeds.len() < self.axis.min_seeds() {
            return Err(Error::config(format!(
                "{} grid needs at least {} seeds, got {}",
                self.axis.as_str(),
                self.axis.min_seeds(),
                self.seeds.len()
            )));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("grid seeds must be distinct"));
        }
        for v in &self.values {
            match (self.axis, v) {
                (Axis::WeightingMode, AxisValue::Mode(_)) => {}
                (Axis::EntropyTemperature | Axis::DkdBeta, AxisValue::Real(_)) => {}
                _ => {
                    return Err(Error::config(format!(
                        "axis value {v} does not belong on the {} axis",
                        self.axis.as_str()
                    )))
                }
            }
        }
        for (value, seed) in self.cells() {
            self.cell_config(value, seed).validate()?;
        }
        Ok(())
    }

    /// Cells in fixed order: axis values outer, seeds inner.
    pub fn cells(&self) -> Vec<(AxisValue, u64)> {
        self.values
            .iter()
            .flat_map(|&v| self.seeds.iter().map(move |&s| (v, s)))
            .collect()
    }

    pub fn cell_config(&self, value: AxisValue, seed: u64) -> TrainConfig {
        let mut c = self.base.clone();
        c.seed = seed;
        match value {
            AxisValue::Mode(m) => c.distill.weighting_mode = m,
            AxisValue::Real(x) => match self.axis {
                Axis::EntropyTemperature => c.distill.entropy_temperature = x,
                Axis::DkdBeta => c.distill.dkd_beta = x,
                Axis::WeightingMode => unreachable!("validated"),
            },
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub axis_value: AxisValue,
    pub seed: u64,
    pub final_val_acc: f64,
    pub log: Vec<TrainRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub axis_value: AxisValue,
    pub mean: f64,
    /// Population standard deviation over seeds.
    pub std: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub axis: Axis,
    pub cells: Vec<Cell>,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl GridResult {
    /// Per-axis-value statistics, recomputed from the raw cells in first-seen order.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut order: Vec<AxisValue> = Vec::new();
        for c in &self.cells {
            if !order.contains(&c.axis_value) {
                order.push(c.axis_value);
            }
        }
        order
            .into_iter()
            .map(|v| {
                let accs: Vec<f64> = self
                    .cells
                    .iter()
                    .filter(|c| c.axis_value == v)
                    .map(|c| c.final_val_acc)
                    .collect();
                let (mean, std) = mean_std(&accs);
                Aggregate {
                    axis_value: v,
                    mean,
                    std,
                    n: accs.len(),
                }
            })
            .collect()
    }

    pub fn mean_of(&self, value: AxisValue) -> Option<f64> {
        self.aggregates().into_iter().find(|a| a.axis_value == value).map(|a| a.mean)
    }

    /// Population variance of the per-axis-value means.
    pub fn across_axis_variance(&self) -> f64 {
        let means: Vec<f64> = self.aggregates().iter().map(|a| a.mean).collect();
        let (_, std) = mean_std(&means);
        std * std
    }

    /// Axis value with the highest mean accuracy; the earliest wins ties.
    pub fn best(&self) -> Option<AxisValue> {
        let aggs = self.aggregates();
        let mut best: Option<&Aggregate> = None;
        for a in &aggs {
            if best.is_none_or(|b| a.mean > b.mean) {
                best = Some(a);
            }
        }
        best.map(|a| a.axis_value)
    }

    pub fn cells_csv(&self) -> String {
        let mut out = format!("{GRID_HEADER}\n");
        for c in &self.cells {
            writeln!(out, "{},{},{:?}", c.axis_value, c.seed, c.final_val_acc).expect("write to string");
        }
        out
    }

    pub fn aggregate_csv(&self) -> String {
        let mut out = format!("{AGGREGATE_HEADER}\n");
        for a in self.aggregates() {
            writeln!(out, "{},{:?},{:?},{}", a.axis_value, a.mean, a.std, a.n).expect("write to string");
        }
        out
    }

    /// Writes `{prefix}grid.csv`, `{prefix}aggregate.csv` and one training log
    /// per cell under `{prefix}logs/`.
    pub fn write(&self, dir: &Path, prefix: &str) -> Result<()> {
        let logs = dir.join(format!("{prefix}logs"));
        fs::create_dir_all(&logs).map_err(|e| Error::io(&logs, e))?;
        let grid = dir.join(format!("{prefix}grid.csv"));
        fs::write(&grid, self.cells_csv()).map_err(|e| Error::io(&grid, e))?;
        let agg = dir.join(format!("{prefix}aggregate.csv"));
        fs::write(&agg, self.aggregate_csv()).map_err(|e| Error::io(&agg, e))?;
        for c in &self.cells {
            write_train_log(&c.log, &logs.join(format!("{}_seed{}.csv", c.axis_value, c.seed)))?;
        }
        Ok(())
    }
}

/// Shared inputs of every cell.
#[derive(Clone, Copy, Debug)]
pub struct GridInputs<'a> {
    pub teacher: Option<&'a ModelParams>,
    pub student_spec: &'a MlpSpec,
    pub train: &'a Dataset,
    pub val: &'a Dataset,
}

/// Runs every cell. Cells are independent, so `exec` only changes wall time;
/// results are gathered in cell order.
pub fn run_grid(grid: &ExperimentGrid, inputs: GridInputs<'_>, exec: Execution) -> Result<GridResult> {
    let teacher = inputs
        .teacher
        .ok_or_else(|| Error::config("experiment grid requires a teacher checkpoint"))?;
    grid.validate()?;
    let cells = par::try_map(exec, &grid.cells(), |&(value, seed)| {
        let config = grid.cell_config(value, seed);
        let out = distill_student(
            teacher,
            inputs.student_spec,
            inputs.train,
            inputs.val,
            &config,
            Execution::Sequential,
        )?;
        Ok(Cell {
            axis_value: value,
            seed,
            final_val_acc: out.final_val_accuracy(),
            log: out.log,
        })
    })?;
    Ok(GridResult { axis: grid.axis, cells })
}

pub fn run_weighting_study(
    base: &TrainConfig,
    modes: &[WeightingMode],
    seeds: &[u64],
    inputs: GridInputs<'_>,
    exec: Execution,
) -> Result<GridResult> {
    let grid = ExperimentGrid {
        base: base.clone(),
        axis: Axis::WeightingMode,
        values: modes.iter().map(|&m| AxisValue::Mode(m)).collect(),
        seeds: seeds.to_vec(),
    };
    run_grid(&grid, inputs, exec)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TPrimeReport {
    pub result: GridResult,
    pub best: f64,
}

/// T' ablation; every cell uses EA weighting.
pub fn run_tprime_ablation(
    base: &TrainConfig,
    temperatures: &[f64],
    seeds: &[u64],
    inputs: GridInputs<'_>,
    exec: Execution,
) -> Result<TPrimeReport> {
    let mut base = base.clone();
    base.distill.weighting_mode = WeightingMode::Ea;
    let grid = ExperimentGrid {
        base,
        axis: Axis::EntropyTemperature,
        values: temperatures.iter().map(|&t| AxisValue::Real(t)).collect(),
        seeds: seeds.to_vec(),
    };
    let result = run_grid(&grid, inputs, exec)?;
    let best = match result.best() {
        Some(AxisValue::Real(t)) => t,
        _ => unreachable!("grid validated non-empty"),
    };
    Ok(TPrimeReport { result, best })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BetaSweep {
    pub dkd: GridResult,
    pub ea_dkd: GridResult,
}

impl BetaSweep {
    pub fn variance_dkd(&self) -> f64 {
        self.dkd.across_axis_variance()
    }

    pub fn variance_ea_dkd(&self) -> f64 {
        self.ea_dkd.across_axis_variance()
    }

    pub fn summary_csv(&self) -> String {
        format!(
            "mode,across_beta_variance\nnone,{:?}\nea,{:?}\n",
            self.variance_dkd(),
            self.variance_ea_dkd()
        )
    }
}

/// Paired beta sweep: DKD with uniform and with EA weights, same seeds.
pub fn run_beta_sweep(
    base: &TrainConfig,
    betas: &[f64],
    seeds: &[u64],
    inputs: GridInputs<'_>,
    exec: Execution,
) -> Result<BetaSweep> {
    if base.loss_kind != LossKind::Dkd {
        return Err(Error::config("beta sweep requires loss_kind = dkd"));
    }
    let grid = |mode| {
        let mut b = base.clone();
        b.distill.weighting_mode = mode;
        ExperimentGrid {
            base: b,
            axis: Axis::DkdBeta,
            values: betas.iter().map(|&x| AxisValue::Real(x)).collect(),
            seeds: seeds.to_vec(),
        }
    };
    Ok(BetaSweep {
        dkd: run_grid(&grid(WeightingMode::None), inputs, exec)?,
        ea_dkd: run_grid(&grid(WeightingMode::Ea), inputs, exec)?,
    })
}

/// `(epoch, quartile 1..=4, share)` rows from a training log.
pub fn quartile_report(log: &[TrainRecord]) -> Vec<(usize, usize, f64)> {
    log.iter()
        .flat_map(|r| (0..4).map(move |q| (r.epoch, q + 1, r.quartile_shares[q])))
        .collect()
}

pub fn quartile_report_csv(log: &[TrainRecord]) -> String {
    let mut out = format!("{QUARTILE_HEADER}\n");
    for (e, q, s) in quartile_report(log) {
        writeln!(out, "{e},{q},{s:?}").expect("write to string");
    }
    out
}

/// Reads a training log and writes its quartile shares in long format.
pub fn quartile_report_file(log_path: &Path, out_path: &Path) -> Result<()> {
    let log = read_train_log(log_path)?;
    fs::write(out_path, quartile_report_csv(&log)).map_err(|e| Error::io(out_path, e))
}
