//! Subcommands of the `infodensity` tool: ingest, idfield, select, train,
//! evaluate, pipeline, cmi and synth.
//!
//! Every command takes a [`RunConfig`], writes its artifacts into the output
//! directory and returns what it wrote. JSON artifacts carry a hash of the
//! config, so a report can be traced back to the settings that produced it.
//! Nothing time- or host-dependent is written, which keeps reruns
//! byte-identical.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eigenphase::{self, AngleField};
use crate::error::{Error, Result};
use crate::ingest::{self, AlignPolicy, CsvSchema, FrameSet, Normalization, TimeSeriesMatrix};
use crate::metrics::{self, Denominator, EvalReport};
use crate::mutualinfo::{self, BinStrategy, MiField};
use crate::regress::{self, TrainConfig, TrainReport, VirtualSensorModel};
use crate::select::{self, CrossMiMode, Method, ModalityIdReport, ModalitySignal, SelectionResult, SufficiencyReport};
use crate::synth::{self, SynthSpec};

/// Environment variable that overrides `output_dir`.
pub const OUT_DIR_ENV: &str = "INFODENSITY_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    /// `timestamp,<sensor>,...` already on a regular grid.
    #[default]
    Wide,
    /// One reading per row, aligned on load.
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Angle,
    Mi,
}

impl std::str::FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "angle" => Ok(Measure::Angle),
            "mi" => Ok(Measure::Mi),
            other => Err(Error::Config(format!("unknown measure `{other}` (angle or mi)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmiConfig {
    /// Modality used as the input block.
    pub source: String,
    /// Modality name to sensor columns. Taken from the long CSV's modality
    /// column when left empty.
    pub modalities: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub input_format: InputFormat,
    pub schema: CsvSchema,
    /// Restrict (and order) the sensors read from the input.
    pub sensors: Option<Vec<String>>,
    pub interval_secs: i64,
    pub align: AlignPolicy,
    pub frame_len: usize,
    /// Defaults to `frame_len` (non-overlapping frames).
    pub stride: Option<usize>,
    pub bins: usize,
    pub bin_strategy: BinStrategy,
    pub method: Method,
    pub k: usize,
    /// When non-empty, `pipeline` runs once per entry instead of once at `k`.
    pub k_sweep: Vec<usize>,
    pub train: TrainConfig,
    /// Trailing fraction of rows held out for evaluation.
    pub test_fraction: f64,
    pub epsilon: f64,
    pub denominator: Denominator,
    pub cross_mi_mode: CrossMiMode,
    pub output_dir: PathBuf,
    /// Seeds the random baseline, weight initialization and batch shuffling.
    pub seed: u64,
    pub cmi: CmiConfig,
    pub synth: SynthSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            input_format: InputFormat::Wide,
            schema: CsvSchema::default(),
            sensors: None,
            interval_secs: 900,
            align: AlignPolicy::DropIncomplete,
            frame_len: 96,
            stride: None,
            bins: mutualinfo::DEFAULT_BINS,
            bin_strategy: BinStrategy::EqualWidth,
            method: Method::EigenAngle,
            k: 1,
            k_sweep: Vec::new(),
            train: TrainConfig::default(),
            test_fraction: 0.2,
            epsilon: 0.01,
            denominator: Denominator::GlobalRange,
            cross_mi_mode: CrossMiMode::Surrogate,
            output_dir: PathBuf::from("out"),
            seed: 0,
            cmi: CmiConfig::default(),
            synth: SynthSpec::default(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| config_err(format!("cannot open config {}: {e}", path.display())))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.interval_secs <= 0 {
            return Err(config_err("interval_secs must be positive"));
        }
        if self.frame_len < 2 {
            return Err(config_err("frame_len must be at least 2"));
        }
        if self.stride == Some(0) {
            return Err(config_err("stride must be at least 1"));
        }
        if self.bins < 2 {
            return Err(config_err("bins must be at least 2"));
        }
        if self.k == 0 || self.k_sweep.contains(&0) {
            return Err(config_err("k must be at least 1"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(config_err("test_fraction must lie in (0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(config_err("epsilon must be positive"));
        }
        self.train.validate()
    }

    pub fn stride(&self) -> usize {
        self.stride.unwrap_or(self.frame_len)
    }

    /// SHA-256 of the config as JSON, ignoring where outputs go.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `output_dir`, unless the environment overrides it.
    pub fn resolved_output_dir(&self) -> PathBuf {
        std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| self.output_dir.clone())
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }

    fn ks(&self) -> Vec<usize> {
        if self.k_sweep.is_empty() {
            vec![self.k]
        } else {
            self.k_sweep.clone()
        }
    }
}

/// A JSON artifact stamped with the config hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub config_hash: String,
    #[serde(flatten)]
    pub body: T,
}

struct Out {
    dir: PathBuf,
    hash: String,
}

impl Out {
    fn new(config: &RunConfig) -> Result<Self> {
        let dir = config.resolved_output_dir();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, hash: config.hash() })
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn json<T: Serialize>(&self, name: &str, body: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, &Stamped { config_hash: self.hash.clone(), body })?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestLog {
    pub rows_read: usize,
    pub rejected: usize,
    pub records: usize,
    pub sensors: Vec<String>,
    pub aligned_rows: usize,
}

struct Loaded {
    matrix: TimeSeriesMatrix,
    log: IngestLog,
    modalities: BTreeMap<String, String>,
}

fn load(config: &RunConfig) -> Result<Loaded> {
    let path = config.input.as_ref().ok_or_else(|| config_err("no input file configured"))?;
    let file = File::open(path).map_err(|e| config_err(format!("cannot open input {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    match config.input_format {
        InputFormat::Wide => {
            let mut matrix = ingest::read_wide_csv(reader)?;
            if let Some(ids) = &config.sensors {
                matrix = matrix.select(ids)?;
            }
            let log = IngestLog {
                rows_read: matrix.n_rows(),
                rejected: 0,
                records: matrix.n_rows() * matrix.n_sensors(),
                sensors: matrix.sensor_ids().to_vec(),
                aligned_rows: matrix.n_rows(),
            };
            Ok(Loaded { matrix, log, modalities: BTreeMap::new() })
        }
        InputFormat::Long => {
            let outcome = ingest::load_long_csv(reader, &config.schema)?;
            let matrix = ingest::align(&outcome.records, config.interval_secs, config.align, config.sensors.as_deref())?;
            let log = IngestLog {
                rows_read: outcome.rows_read,
                rejected: outcome.rejected,
                records: outcome.records.len(),
                sensors: matrix.sensor_ids().to_vec(),
                aligned_rows: matrix.n_rows(),
            };
            Ok(Loaded { matrix, log, modalities: ingest::modality_map(&outcome.records) })
        }
    }
}

fn load_matrix(config: &RunConfig) -> Result<TimeSeriesMatrix> {
    config.validate()?;
    Ok(load(config)?.matrix)
}

/// Chronological split into the rows used for selection and training, and
/// the trailing rows held out for evaluation.
pub fn split_holdout(matrix: &TimeSeriesMatrix, test_fraction: f64) -> Result<(TimeSeriesMatrix, TimeSeriesMatrix)> {
    let n = matrix.n_rows();
    let n_fit = (n as f64 * (1.0 - test_fraction)).round() as usize;
    if n_fit < 2 || n_fit >= n {
        return Err(Error::InsufficientData(format!("{n} rows cannot be split at test fraction {test_fraction}")));
    }
    Ok((matrix.rows(0, n_fit), matrix.rows(n_fit, n)))
}

/// Load, align and z-score; writes `matrix.csv`, `normalized.csv` and
/// `ingest_log.json`.
pub fn cmd_ingest(config: &RunConfig) -> Result<(TimeSeriesMatrix, IngestLog)> {
    config.validate()?;
    let loaded = load(config)?;
    let normalized = ingest::normalize(&loaded.matrix)?;
    let out = Out::new(config)?;
    let mut w = out.create("matrix.csv")?;
    ingest::write_wide_csv(&loaded.matrix, &mut w)?;
    w.flush()?;
    let mut w = out.create("normalized.csv")?;
    ingest::write_wide_csv(&normalized, &mut w)?;
    w.flush()?;
    out.json("ingest_log.json", &loaded.log)?;
    Ok((loaded.matrix, loaded.log))
}

#[derive(Debug, Clone, PartialEq)]
pub enum InfoDensityField {
    Angle(AngleField),
    Mi(MiField),
}

pub fn angle_field_of(matrix: &TimeSeriesMatrix, frame_len: usize, stride: usize) -> Result<AngleField> {
    let frames: Vec<FrameSet> = ingest::frame_matrix(matrix, frame_len, stride, Normalization::Zscore)?;
    let pcs = frames.iter().map(eigenphase::principal_component).collect::<Result<Vec<_>>>()?;
    for pc in pcs.iter().filter(|p| p.gap_warning) {
        log::warn!("sensor `{}`: spectral gap {:.4} is small", pc.sensor_id, pc.spectral_gap);
    }
    eigenphase::angle_field(&pcs)
}

/// Pairwise field over the selection rows; writes `field_<measure>.json` and
/// a long-form `field_<measure>.csv`.
pub fn cmd_idfield(config: &RunConfig, measure: Measure) -> Result<InfoDensityField> {
    let matrix = load_matrix(config)?;
    let (fit, _) = split_holdout(&matrix, config.test_fraction)?;
    let out = Out::new(config)?;
    match measure {
        Measure::Angle => {
            let field = angle_field_of(&fit, config.frame_len, config.stride())?;
            out.json("field_angle.json", &field.to_json())?;
            let mut w = out.create("field_angle.csv")?;
            field.write_long_csv(&mut w)?;
            w.flush()?;
            Ok(InfoDensityField::Angle(field))
        }
        Measure::Mi => {
            let field = mutualinfo::mi_field(&fit, config.bins, config.bin_strategy)?;
            out.json("field_mi.json", &field.to_json())?;
            let mut w = out.create("field_mi.csv")?;
            field.write_long_csv(&mut w)?;
            w.flush()?;
            Ok(InfoDensityField::Mi(field))
        }
    }
}

/// Ranks the sensors of `matrix` with the configured method.
pub fn select_sensors(config: &RunConfig, matrix: &TimeSeriesMatrix, k: usize) -> Result<SelectionResult> {
    match config.method {
        Method::EigenAngle => select::rank_by_angle(&angle_field_of(matrix, config.frame_len, config.stride())?, k),
        Method::MutualInfo => select::rank_by_mi(&mutualinfo::mi_field(matrix, config.bins, config.bin_strategy)?, k),
        Method::Random => select::baseline_random(matrix.sensor_ids(), k, config.seed),
        Method::Variance => select::baseline_variance(matrix, k),
        Method::Correlation => select::baseline_correlation(matrix, k),
    }
}

/// Writes `selection.json`.
pub fn cmd_select(config: &RunConfig) -> Result<SelectionResult> {
    let matrix = load_matrix(config)?;
    let (fit, _) = split_holdout(&matrix, config.test_fraction)?;
    let selection = select_sensors(config, &fit, config.k)?;
    Out::new(config)?.json("selection.json", &selection)?;
    Ok(selection)
}

fn virtual_ids(matrix: &TimeSeriesMatrix, physical: &[String]) -> Vec<String> {
    matrix.sensor_ids().iter().filter(|id| !physical.contains(id)).cloned().collect()
}

/// Fits the intra-modality model for one selection on the selection rows.
pub fn fit_imvs(config: &RunConfig, fit: &TimeSeriesMatrix, physical: &[String]) -> Result<(VirtualSensorModel, TrainReport)> {
    let virtuals = virtual_ids(fit, physical);
    if virtuals.is_empty() {
        return Err(config_err("every sensor is selected; nothing left to estimate"));
    }
    let x = fit.select(physical)?;
    let y = fit.select(&virtuals)?;
    let model = regress::build_imvs_model(physical.len(), virtuals.len(), config.seed)?;
    VirtualSensorModel::fit(&model, x.values().view(), y.values().view(), physical.to_vec(), virtuals, &config.train_config())
}

/// Scores a fitted model on held-out rows. In global-range mode the NMAE
/// denominator is the range of every sensor in `test`, so it does not change
/// with the number of physical sensors.
pub fn evaluate_model(model: &VirtualSensorModel, test: &TimeSeriesMatrix, mode: Denominator) -> Result<EvalReport> {
    let x = test.select(&model.physical_ids)?;
    let y = test.select(&model.virtual_ids)?;
    let estimate = model.predict_virtual(x.values().view())?;
    metrics::evaluate_with_range(
        y.values().view(),
        estimate.view(),
        &model.virtual_ids,
        &model.physical_ids,
        mode,
        value_range(test),
    )
}

fn value_range(m: &TimeSeriesMatrix) -> f64 {
    let v = m.values();
    v.fold(f64::NEG_INFINITY, |a, &x| a.max(x)) - v.fold(f64::INFINITY, |a, &x| a.min(x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub physical_ids: Vec<String>,
    pub virtual_ids: Vec<String>,
    pub stopping_epoch: usize,
    pub best_epoch: Option<usize>,
    pub best_val_mse: Option<f64>,
}

impl TrainSummary {
    fn new(model: &VirtualSensorModel, report: &TrainReport) -> Self {
        Self {
            physical_ids: model.physical_ids.clone(),
            virtual_ids: model.virtual_ids.clone(),
            stopping_epoch: report.stopping_epoch,
            best_epoch: report.best_epoch,
            best_val_mse: report.best_val_mse,
        }
    }
}

/// Selects `k` sensors and trains the estimator for the rest; writes
/// `selection.json`, `model.json`, `training.csv` and `training.json`.
pub fn cmd_train(config: &RunConfig) -> Result<(VirtualSensorModel, TrainReport)> {
    let matrix = load_matrix(config)?;
    let (fit, _) = split_holdout(&matrix, config.test_fraction)?;
    let selection = select_sensors(config, &fit, config.k)?;
    let (model, report) = fit_imvs(config, &fit, &selection.selected)?;
    let out = Out::new(config)?;
    out.json("selection.json", &selection)?;
    let mut w = out.create("model.json")?;
    model.save(&mut w)?;
    w.flush()?;
    let mut w = out.create("training.csv")?;
    report.write_csv(&mut w)?;
    w.flush()?;
    out.json("training.json", &TrainSummary::new(&model, &report))?;
    Ok((model, report))
}

/// Scores `model.json` from the output directory on the held-out rows;
/// writes `evaluation.csv` and `evaluation.json`.
pub fn cmd_evaluate(config: &RunConfig) -> Result<EvalReport> {
    let matrix = load_matrix(config)?;
    let (_, test) = split_holdout(&matrix, config.test_fraction)?;
    let dir = config.resolved_output_dir();
    let path = dir.join("model.json");
    let file = File::open(&path).map_err(|e| config_err(format!("cannot open model {}: {e}", path.display())))?;
    let model = VirtualSensorModel::load(BufReader::new(file))?;
    let report = evaluate_model(&model, &test, config.denominator)?;
    let out = Out::new(config)?;
    let mut w = out.create("evaluation.csv")?;
    report.write_csv(&mut w)?;
    w.flush()?;
    out.json("evaluation.json", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub k: usize,
    pub selection: SelectionResult,
    pub training: TrainSummary,
    pub evaluation: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    pub mean_mae: f64,
    pub mean_nmae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub runs: Vec<PipelineRun>,
    pub sweep: Vec<SweepPoint>,
    /// Present when more than one `k` was run.
    pub sufficiency: Option<SufficiencyReport>,
}

/// Select, train and evaluate for `k` (or each entry of `k_sweep`).
///
/// Per `k` it writes `selection_k<k>.json`, `training_k<k>.csv` and
/// `evaluation_k<k>.csv`; overall `sweep.csv` (error versus `k`) and
/// `pipeline.json`.
pub fn cmd_pipeline(config: &RunConfig) -> Result<PipelineReport> {
    config.validate()?;
    let matrix = load(config).map_err(|e| e.in_stage("ingest"))?.matrix;
    let (fit, test) = split_holdout(&matrix, config.test_fraction).map_err(|e| e.in_stage("split"))?;
    let out = Out::new(config)?;
    let mut runs = Vec::new();
    for k in config.ks() {
        let tag = format!("k={k}");
        let selection = select_sensors(config, &fit, k).map_err(|e| e.in_stage(&format!("select {tag}")))?;
        let (model, report) =
            fit_imvs(config, &fit, &selection.selected).map_err(|e| e.in_stage(&format!("train {tag}")))?;
        let evaluation =
            evaluate_model(&model, &test, config.denominator).map_err(|e| e.in_stage(&format!("evaluate {tag}")))?;
        out.json(&format!("selection_k{k}.json"), &selection)?;
        let mut w = out.create(&format!("training_k{k}.csv"))?;
        report.write_csv(&mut w)?;
        w.flush()?;
        let mut w = out.create(&format!("evaluation_k{k}.csv"))?;
        evaluation.write_csv(&mut w)?;
        w.flush()?;
        runs.push(PipelineRun { k, selection, training: TrainSummary::new(&model, &report), evaluation });
    }
    let sweep: Vec<SweepPoint> = runs
        .iter()
        .map(|r| SweepPoint { k: r.k, mean_mae: r.evaluation.average.mae, mean_nmae: r.evaluation.average.nmae })
        .collect();
    let sufficiency = if sweep.len() > 1 {
        let by_config: BTreeMap<String, f64> = sweep.iter().map(|p| (format!("k={}", p.k), p.mean_nmae)).collect();
        Some(select::sufficiency_check(&by_config, config.epsilon).map_err(|e| e.in_stage("sufficiency"))?)
    } else {
        None
    };
    let mut w = csv::Writer::from_writer(out.create("sweep.csv")?);
    w.write_record(["k", "mean_mae", "mean_nmae"])?;
    for p in &sweep {
        w.write_record([p.k.to_string(), format!("{:.6}", p.mean_mae), format!("{:.6}", p.mean_nmae)])?;
    }
    w.flush()?;
    let report = PipelineReport { runs, sweep, sufficiency };
    out.json("pipeline.json", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmiEval {
    pub modality: String,
    pub sensor_id: String,
    pub mae: f64,
    pub nmae: f64,
    pub r2: Option<f64>,
    pub stopping_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmiReport {
    pub source: String,
    /// The source against itself first, then the other modalities by name.
    pub measures: Vec<ModalityIdReport>,
    pub estimates: Vec<CmiEval>,
}

fn resolve_modalities(config: &RunConfig, from_input: &BTreeMap<String, String>) -> Result<BTreeMap<String, Vec<String>>> {
    let mut groups = config.cmi.modalities.clone();
    if groups.is_empty() {
        for (sensor, modality) in from_input {
            groups.entry(modality.clone()).or_default().push(sensor.clone());
        }
    }
    if !groups.contains_key(&config.cmi.source) {
        return Err(config_err(format!("source modality `{}` is not among the modalities", config.cmi.source)));
    }
    if groups.len() < 2 {
        return Err(config_err("cross-modality inference needs the source and at least one other modality"));
    }
    if let Some((name, _)) = groups.iter().find(|(_, cols)| cols.is_empty()) {
        return Err(config_err(format!("modality `{name}` lists no sensors")));
    }
    Ok(groups)
}

/// Cross-modality measures and estimates from the source block; writes
/// `cmi_measures.csv`, `cmi_estimates.csv` and `cmi.json`.
pub fn cmd_cmi(config: &RunConfig) -> Result<CmiReport> {
    config.validate()?;
    let loaded = load(config).map_err(|e| e.in_stage("ingest"))?;
    let groups = resolve_modalities(config, &loaded.modalities)?;
    let (fit, test) = split_holdout(&loaded.matrix, config.test_fraction)?;
    let signal = |name: &str| -> Result<ModalitySignal> {
        ModalitySignal::from_block(name, &fit.select(&groups[name])?, config.frame_len, config.stride())
    };
    let source_name = config.cmi.source.as_str();
    let source = signal(source_name).map_err(|e| e.in_stage("measures"))?;
    let mut measures = vec![select::modality_id(&source, &source, config.bins, config.bin_strategy, config.cross_mi_mode)?];
    for name in groups.keys().filter(|n| n.as_str() != source_name) {
        let other = signal(name).map_err(|e| e.in_stage("measures"))?;
        measures.push(
            select::modality_id(&source, &other, config.bins, config.bin_strategy, config.cross_mi_mode)
                .map_err(|e| e.in_stage("measures"))?,
        );
    }

    let inputs = &groups[source_name];
    let train_cfg = config.train_config();
    let mut estimates = Vec::new();
    for (name, cols) in groups.iter().filter(|(n, _)| n.as_str() != source_name) {
        for col in cols {
            let target = vec![col.clone()];
            let stage = |e: Error| e.in_stage(&format!("estimate {name}/{col}"));
            let x = fit.select(inputs).map_err(stage)?;
            let y = fit.select(&target).map_err(stage)?;
            let net = regress::build_cmi_model(inputs.len(), config.seed).map_err(stage)?;
            let (model, report) =
                VirtualSensorModel::fit(&net, x.values().view(), y.values().view(), inputs.clone(), target, &train_cfg)
                    .map_err(stage)?;
            // the denominator is the range of the target modality alone
            let truth = test.select(&model.virtual_ids).map_err(stage)?;
            let estimate = model.predict_virtual(test.select(inputs).map_err(stage)?.values().view()).map_err(stage)?;
            let eval = metrics::evaluate_with_range(
                truth.values().view(),
                estimate.view(),
                &model.virtual_ids,
                inputs,
                config.denominator,
                value_range(&test.select(cols).map_err(stage)?),
            )
            .map_err(stage)?;
            let row = &eval.rows[0];
            estimates.push(CmiEval {
                modality: name.clone(),
                sensor_id: col.clone(),
                mae: row.mae,
                nmae: row.nmae,
                r2: row.r2,
                stopping_epoch: report.stopping_epoch,
            });
        }
    }

    let out = Out::new(config)?;
    let mut w = csv::Writer::from_writer(out.create("cmi_measures.csv")?);
    w.write_record(["modality_a", "modality_b", "gamma_nats", "omega_deg", "tau"])?;
    for m in &measures {
        w.write_record([
            m.modality_a.clone(),
            m.modality_b.clone(),
            format!("{:.6}", m.gamma_nats),
            format!("{:.2}", m.omega_deg),
            format!("{:.6}", m.tau),
        ])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(out.create("cmi_estimates.csv")?);
    w.write_record(["modality", "sensor_id", "mae", "nmae"])?;
    for e in &estimates {
        w.write_record([e.modality.clone(), e.sensor_id.clone(), format!("{:.6}", e.mae), format!("{:.6}", e.nmae)])?;
    }
    w.flush()?;
    let report = CmiReport { source: source_name.to_string(), measures, estimates };
    out.json("cmi.json", &report)?;
    Ok(report)
}

/// Writes the planted-cluster field as `synth.csv` (wide) plus
/// `ground_truth.json`.
pub fn cmd_synth(config: &RunConfig) -> Result<(TimeSeriesMatrix, synth::GroundTruth)> {
    let spec = SynthSpec { seed: config.seed, ..config.synth.clone() };
    let (matrix, truth) = synth::generate(&spec).map_err(|e| match e {
        Error::Contract(msg) => Error::Config(msg),
        other => other,
    })?;
    let out = Out::new(config)?;
    let mut w = out.create("synth.csv")?;
    ingest::write_wide_csv(&matrix, &mut w)?;
    w.flush()?;
    out.json("ground_truth.json", &truth)?;
    Ok((matrix, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"frame_len": 4, "frmae_len": 5}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"));
        let err = serde_json::from_str::<RunConfig>(r#"{"train": {"epochs": 3}}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"));
    }

    #[test]
    fn validation_catches_bad_values() {
        assert!(RunConfig::default().validate().is_ok());
        for bad in [
            RunConfig { k: 0, ..RunConfig::default() },
            RunConfig { frame_len: 1, ..RunConfig::default() },
            RunConfig { test_fraction: 1.0, ..RunConfig::default() },
            RunConfig { epsilon: 0.0, ..RunConfig::default() },
            RunConfig { bins: 1, ..RunConfig::default() },
        ] {
            assert_eq!(bad.validate().unwrap_err().exit_code(), 2);
        }
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = RunConfig::default();
        let b = RunConfig { output_dir: "elsewhere".into(), ..RunConfig::default() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), RunConfig { k: 2, ..RunConfig::default() }.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn holdout_split() {
        let m = TimeSeriesMatrix::from_columns(vec!["a".into()], ndarray::Array2::zeros((10, 1)), 60).unwrap();
        let (fit, test) = split_holdout(&m, 0.2).unwrap();
        assert_eq!((fit.n_rows(), test.n_rows()), (8, 2));
        assert!(split_holdout(&m.rows(0, 2), 0.2).is_err());
    }

    #[test]
    fn cmi_needs_two_modalities() {
        let mut cfg = RunConfig::default();
        cfg.cmi.source = "pm".into();
        let one: BTreeMap<String, String> = [("s1".to_string(), "pm".to_string())].into();
        assert_eq!(resolve_modalities(&cfg, &one).unwrap_err().exit_code(), 2);
        let two: BTreeMap<String, String> =
            [("s1".to_string(), "pm".to_string()), ("s2".to_string(), "temp".to_string())].into();
        let groups = resolve_modalities(&cfg, &two).unwrap();
        assert_eq!(groups["temp"], vec!["s2".to_string()]);
    }

    #[test]
    fn measure_and_method_names() {
        assert_eq!("angle".parse::<Measure>().unwrap(), Measure::Angle);
        assert!("pca".parse::<Measure>().is_err());
        assert_eq!("mi".parse::<Method>().unwrap(), Method::MutualInfo);
    }
}
