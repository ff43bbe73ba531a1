//! Scenario x seed sweeps and their output files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::cifar::{load_cifar10_dir, CifarError, ClassFilter};
use super::config::{ConfigError, DatasetKind, ExperimentConfig};
use crate::channel::{sample_channels, sample_disc_positions, ChannelError, ChannelSet, Point, SystemConfig};
use crate::seed::{derive_seed, purpose};
use crate::trainer::{
    partition, synthetic_blobs, train_federated, Dataset, FederatedData, FederatedSetup, Scenario, TrainerError,
    TrainingTrace,
};

pub const CSV_HEADER: [&str; 6] = ["scenario", "seed", "round", "train_loss", "test_acc", "agg_mse"];
pub const TRACES_FILE: &str = "traces.csv";
pub const SUMMARY_FILE: &str = "summary.json";
const STAGING_DIR: &str = ".staging";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Cifar(#[from] CifarError),
    #[error(transparent)]
    Trainer(#[from] TrainerError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("json output: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Network instance of `seed`: device positions are drawn from the seed's
/// geometry stream.
pub fn system_for(cfg: &ExperimentConfig, seed: u64) -> SystemConfig {
    SystemConfig {
        num_devices: cfg.devices,
        num_antennas: cfg.antennas,
        num_ris_elements: cfg.ris_elements,
        tx_power: cfg.tx_power,
        noise_power: cfg.noise_power,
        server_position: cfg.server_position.into(),
        ris_position: cfg.ris_position.into(),
        device_positions: sample_disc_positions(
            cfg.devices,
            Point::from(cfg.device_center),
            cfg.device_radius,
            derive_seed(seed, &[purpose::GEOMETRY]),
        ),
        pathloss_exponent_direct: cfg.pathloss_direct,
        pathloss_exponent_ris: cfg.pathloss_ris,
        reference_gain: cfg.reference_gain,
    }
}

pub fn setup_for(cfg: &ExperimentConfig, seed: u64) -> FederatedSetup {
    FederatedSetup {
        system: system_for(cfg, seed),
        solver: cfg.solver_options(),
        learning: cfg.learning(),
        selection_target: cfg.selection_target,
    }
}

/// Channels the trainer draws in `round` (1-based) of a run with `seed`.
pub fn round_channels(cfg: &ExperimentConfig, seed: u64, round: usize) -> Result<ChannelSet, HarnessError> {
    let system = system_for(cfg, seed);
    Ok(sample_channels(
        &system,
        derive_seed(seed, &[purpose::ROUND_CHANNELS, round as u64]),
    )?)
}

/// One row per complex entry: `link,device,row,col,re,im`. The RIS-server
/// matrix has an empty device field.
pub fn write_channels_csv<W: Write>(ch: &ChannelSet, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["link", "device", "row", "col", "re", "im"])?;
    for (link, vecs) in [("direct", &ch.direct), ("device_ris", &ch.device_to_ris)] {
        for (k, v) in vecs.iter().enumerate() {
            for (i, z) in v.iter().enumerate() {
                w.write_record([
                    link.to_string(),
                    k.to_string(),
                    i.to_string(),
                    "0".into(),
                    z.re.to_string(),
                    z.im.to_string(),
                ])?;
            }
        }
    }
    let g = &ch.ris_to_server;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let z = g[(i, j)];
            w.write_record([
                "ris_server".to_string(),
                String::new(),
                i.to_string(),
                j.to_string(),
                z.re.to_string(),
                z.im.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: PathBuf::from("<channels>"),
        source,
    })?;
    Ok(())
}

enum DataSource {
    Synthetic,
    Fixed { train: Arc<Dataset>, test: Arc<Dataset> },
}

fn data_source(cfg: &ExperimentConfig) -> Result<DataSource, HarnessError> {
    match cfg.dataset {
        DatasetKind::Synthetic => Ok(DataSource::Synthetic),
        DatasetKind::Cifar10 => {
            let dir = cfg.cifar_dir.as_deref().expect("validated config has cifar_dir");
            let filter = if cfg.cifar_multiclass {
                ClassFilter::All
            } else {
                ClassFilter::Pair(cfg.cifar_classes[0], cfg.cifar_classes[1])
            };
            let data = load_cifar10_dir(dir, filter)?;
            Ok(DataSource::Fixed {
                train: Arc::new(data.train),
                test: Arc::new(data.test),
            })
        }
    }
}

/// Data for one seed: the synthetic set is drawn from the seed, a loaded set
/// is only repartitioned.
fn data_for(source: &DataSource, cfg: &ExperimentConfig, seed: u64) -> Result<FederatedData, TrainerError> {
    let (train, test) = match source {
        DataSource::Synthetic => {
            let (a, b) = synthetic_blobs(&cfg.synthetic(), seed)?;
            (Arc::new(a), Arc::new(b))
        }
        DataSource::Fixed { train, test } => (Arc::clone(train), Arc::clone(test)),
    };
    let parts = partition(train.len(), cfg.devices, seed)?;
    FederatedData::new(train, test, parts)
}

/// Training data for `seed` as a run with `cfg` would see it.
pub fn prepare_data(cfg: &ExperimentConfig, seed: u64) -> Result<FederatedData, HarnessError> {
    Ok(data_for(&data_source(cfg)?, cfg, seed)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub scenario: Scenario,
    pub seed: u64,
    pub rounds_completed: usize,
    pub final_train_loss: Option<f64>,
    pub final_test_acc: Option<f64>,
    pub mean_agg_mse: Option<f64>,
    /// Round that failed, when the cell did not finish.
    pub failed_round: Option<usize>,
    pub error: Option<String>,
}

impl CellSummary {
    fn from_trace(trace: &TrainingTrace, failure: Option<(usize, String)>) -> Self {
        let last = trace.records.last();
        let n = trace.records.len();
        Self {
            scenario: trace.scenario,
            seed: trace.seed,
            rounds_completed: n,
            final_train_loss: last.map(|r| r.train_loss),
            final_test_acc: last.map(|r| r.test_accuracy),
            mean_agg_mse: (n > 0).then(|| trace.records.iter().map(|r| r.agg_mse).sum::<f64>() / n as f64),
            failed_round: failure.as_ref().map(|f| f.0),
            error: failure.map(|f| f.1),
        }
    }

    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub scenario: Scenario,
    pub completed_seeds: usize,
    pub median_final_train_loss: Option<f64>,
    pub median_final_test_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub traces: PathBuf,
    pub cells: Vec<CellSummary>,
    pub scenarios: Vec<ScenarioSummary>,
    pub failed_cells: usize,
}

impl RunSummary {
    /// 0 when every cell finished, 2 when some failed.
    pub fn exit_code(&self) -> i32 {
        if self.failed_cells == 0 {
            0
        } else {
            2
        }
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn write_rows(path: &Path, trace: &TrainingTrace) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
    for r in &trace.records {
        w.write_record([
            trace.scenario.name().to_string(),
            trace.seed.to_string(),
            r.round.to_string(),
            r.train_loss.to_string(),
            r.test_accuracy.to_string(),
            r.agg_mse.to_string(),
        ])?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

fn run_cell(
    cfg: &ExperimentConfig,
    data: &Result<FederatedData, TrainerError>,
    scenario: Scenario,
    seed: u64,
    staging: &Path,
) -> Result<CellSummary, HarnessError> {
    let (trace, failure) = match data {
        Ok(data) => match train_federated(&setup_for(cfg, seed), data, scenario, seed) {
            Ok(t) => (t, None),
            Err(f) => {
                let msg = f.to_string();
                (f.trace, Some((f.round, msg)))
            }
        },
        Err(e) => (
            TrainingTrace {
                scenario,
                seed,
                records: Vec::new(),
                model: crate::model::ModelVector::zeros(1, 1),
            },
            Some((0, format!("data preparation failed: {e}"))),
        ),
    };
    write_rows(&staging_path(staging, scenario, seed), &trace)?;
    let summary = CellSummary::from_trace(&trace, failure);
    match &summary.error {
        None => log::info!("{scenario} seed {seed}: {} rounds", summary.rounds_completed),
        Some(e) => log::warn!("{scenario} seed {seed}: {e}"),
    }
    Ok(summary)
}

fn staging_path(dir: &Path, scenario: Scenario, seed: u64) -> PathBuf {
    dir.join(format!("{}_{seed}.csv", scenario.name()))
}

/// Run every (scenario, seed) cell of `cfg`, writing `traces.csv` and
/// `summary.json` into `out_dir`.
///
/// Cells run concurrently and each writes its own staging file; the merged
/// CSV lists cells in config order (scenarios outer, seeds inner), so
/// reruns reproduce it byte for byte. A failing cell keeps its completed
/// rounds and is reported in the summary without stopping the sweep.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary, HarnessError> {
    cfg.validate()?;
    let source = data_source(cfg)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let staging = out_dir.join(STAGING_DIR);
    fs::create_dir_all(&staging).map_err(io_err(&staging))?;

    let data: Vec<Result<FederatedData, TrainerError>> =
        cfg.seeds.par_iter().map(|&seed| data_for(&source, cfg, seed)).collect();
    let cells: Vec<(Scenario, usize)> = cfg
        .scenarios
        .iter()
        .flat_map(|&sc| (0..cfg.seeds.len()).map(move |i| (sc, i)))
        .collect();
    let summaries: Vec<CellSummary> = cells
        .par_iter()
        .map(|&(sc, i)| run_cell(cfg, &data[i], sc, cfg.seeds[i], &staging))
        .collect::<Result<_, _>>()?;

    let traces = out_dir.join(TRACES_FILE);
    {
        let file = File::create(&traces).map_err(io_err(&traces))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{}", CSV_HEADER.join(",")).map_err(io_err(&traces))?;
        for &(sc, i) in &cells {
            let part = staging_path(&staging, sc, cfg.seeds[i]);
            let body = fs::read(&part).map_err(io_err(&part))?;
            out.write_all(&body).map_err(io_err(&traces))?;
        }
        out.flush().map_err(io_err(&traces))?;
    }
    fs::remove_dir_all(&staging).map_err(io_err(&staging))?;

    let scenarios = cfg
        .scenarios
        .iter()
        .map(|&sc| {
            let done: Vec<&CellSummary> = summaries
                .iter()
                .filter(|c| c.scenario == sc && c.succeeded())
                .collect();
            ScenarioSummary {
                scenario: sc,
                completed_seeds: done.len(),
                median_final_train_loss: median(done.iter().filter_map(|c| c.final_train_loss).collect()),
                median_final_test_acc: median(done.iter().filter_map(|c| c.final_test_acc).collect()),
            }
        })
        .collect();
    let failed_cells = summaries.iter().filter(|c| !c.succeeded()).count();
    let summary = RunSummary {
        traces: PathBuf::from(TRACES_FILE),
        cells: summaries,
        scenarios,
        failed_cells,
    };
    let path = out_dir.join(SUMMARY_FILE);
    let file = File::create(&path).map_err(io_err(&path))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &summary)?;
    Ok(summary)
}
