use hkq_core::estimators::{MomentGrid, Prediction};
use hkq_core::eval::{
    check_grid_sample_size, evaluate_on, map_to_pgm, parametric_map, score_predictions, simulate_grid,
    simulate_homogeneous_raster, simulate_two_layer_phantom, write_grid_outputs, ConstantEstimator, Estimator, EvalGrid,
    MapFormat, ModelEstimator, PatchGeometry, WindowSpec,
};
use hkq_core::features::{average_features_over_frames, DEFAULT_AXIAL_SKIP, DEFAULT_LATERAL_SKIP};
use hkq_core::hk::sample_box_blocks;
use hkq_core::io::{read_envelope, read_json, sidecar_path, write_envelope, write_json, EnvelopeSidecar, SyntheticParams};
use hkq_core::nn::LossTrace;
use hkq_core::{
    make_training_set, params_from_targets, sample_hk, EnvelopeRaster, Error, EstimatorKind, FeatureVector, HkParams,
    Model, PredictOptions, Result, Skips, TrainConfig,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{create_dir, dir_manifest, file_manifest, file_name, labelled_csv, with_suffix, write_text};
use crate::{EvaluateArgs, LookupArgs, MapArgs, PredictArgs, SimulateArgs, SourceArgs, TrainArgs};

pub const RUN_CONFIG_SCHEMA_VERSION: u32 = 1;

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

fn target_params(log10_alpha: f64, k: f64, flag: &str) -> Result<HkParams> {
    if !(0.0..=1.0).contains(&k) {
        return Err(invalid(format!("--k {k} is outside [0, 1]")));
    }
    let p = params_from_targets(log10_alpha, k)?;
    if !p.in_training_box() {
        eprintln!("hkq: warning: {flag} {log10_alpha} lies outside the training box [-0.3, 1.4]");
    }
    Ok(p)
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let raster_mode = a.frames.is_some() || a.rows.is_some() || a.cols.is_some() || a.bottom_log10_alpha.is_some();
    let (raster, params) = match (a.log10_alpha, a.k) {
        (Some(la), Some(k)) => {
            let top = target_params(la, k, "--log10-alpha")?;
            if a.count.is_some() {
                return Err(invalid("--count draws random targets and cannot be combined with --log10-alpha/--k"));
            }
            if raster_mode {
                if a.n.is_some() {
                    return Err(invalid("--n applies to blocks; rasters take --frames/--rows/--cols"));
                }
                let (Some(rows), Some(cols)) = (a.rows, a.cols) else {
                    return Err(invalid("raster mode needs both --rows and --cols"));
                };
                let frames = a.frames.unwrap_or(1);
                match a.bottom_log10_alpha {
                    None => (simulate_homogeneous_raster(&top, frames, rows, cols, a.seed)?, vec![top]),
                    Some(lb) => {
                        if rows % 2 != 0 {
                            return Err(invalid(format!("two-layer rasters need an even --rows, got {rows}")));
                        }
                        let bottom = target_params(lb, k, "--bottom-log10-alpha")?;
                        let geometry = PatchGeometry { rows: rows / 2, cols };
                        let ph = simulate_two_layer_phantom(
                            top.alpha,
                            bottom.alpha,
                            top.epsilon,
                            geometry,
                            frames,
                            Skips::none(),
                            a.seed,
                        )?;
                        (ph.raster, vec![ph.top, ph.bottom])
                    }
                }
            } else {
                let n = a.n.ok_or_else(|| invalid("--n (samples per block) is required"))?;
                let block = sample_hk(&top, n, a.seed)?;
                (EnvelopeRaster::new(1, 1, n, block.into_samples())?, vec![top])
            }
        }
        (None, None) => {
            if raster_mode {
                return Err(invalid("raster mode needs --log10-alpha and --k"));
            }
            let (Some(count), Some(n)) = (a.count, a.n) else {
                return Err(invalid("give --log10-alpha and --k, or --count and --n for random targets"));
            };
            if count == 0 {
                return Err(invalid("--count must be positive"));
            }
            let blocks = sample_box_blocks(count, n, a.seed)?;
            let params = blocks.iter().map(|(p, _)| *p).collect();
            let data = blocks.into_iter().flat_map(|(_, b)| b.into_samples()).collect();
            (EnvelopeRaster::new(count, 1, n, data)?, params)
        }
        _ => return Err(invalid("--log10-alpha and --k must be given together")),
    };

    let mut side = EnvelopeSidecar::new(raster.frames(), raster.rows(), raster.cols());
    side.seed = Some(a.seed);
    side.params = params.iter().map(SyntheticParams::from).collect();
    write_envelope(&a.output, &raster, &side)?;
    let outputs = vec![file_name(&a.output), file_name(&sidecar_path(&a.output))];
    file_manifest(&a.output, "simulate", &a, outputs)
}

/// Everything that determines a trained checkpoint. The `config` object of a
/// train manifest is a valid `--config` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRunConfig {
    pub schema_version: u32,
    pub estimator: EstimatorKind,
    pub n_s: usize,
    pub records: usize,
    pub seed: u64,
    pub train: TrainConfig,
}

fn resolve_train_config(a: &TrainArgs) -> Result<TrainRunConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            let cfg: TrainRunConfig = read_json(path)?;
            if cfg.schema_version != RUN_CONFIG_SCHEMA_VERSION {
                return Err(Error::Format {
                    path: path.clone(),
                    reason: format!("unsupported schema_version {}", cfg.schema_version),
                });
            }
            cfg
        }
        None => TrainRunConfig {
            schema_version: RUN_CONFIG_SCHEMA_VERSION,
            estimator: a.estimator.ok_or_else(|| invalid("--estimator is required without --config"))?,
            n_s: a.n_s.ok_or_else(|| invalid("--n-s is required without --config"))?,
            records: hkq_core::estimators::DEFAULT_TRAINING_RECORDS,
            seed: 0,
            train: TrainConfig::default(),
        },
    };
    if let Some(v) = a.estimator {
        cfg.estimator = v;
    }
    if let Some(v) = a.n_s {
        cfg.n_s = v;
    }
    if let Some(v) = a.count {
        cfg.records = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
        cfg.train.seed = v;
    }
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = a.mc_loss_samples {
        cfg.train.mc_loss_samples = v;
    }
    if let Some(v) = a.kl_weight {
        cfg.train.kl_weight = Some(v);
    }
    if cfg.records == 0 {
        return Err(invalid("training needs at least one record"));
    }
    cfg.train.validate()?;
    Ok(cfg)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let cfg = resolve_train_config(&a)?;
    if !hkq_core::estimators::SUPPORTED_SAMPLE_SIZES.contains(&cfg.n_s) {
        eprintln!("hkq: warning: n_s = {} is not one of the standard sizes 1024, 4096, 16384, 65536", cfg.n_s);
    }
    let set = make_training_set(cfg.n_s, cfg.records, cfg.seed)?;
    if set.redraws > 0 {
        eprintln!("hkq: {} training record(s) were redrawn after non-finite features", set.redraws);
    }
    let (model, trace): (Model, LossTrace) = Model::fit(cfg.estimator, &set, &cfg.train)?;
    model.save(&a.output)?;
    let loss_path = with_suffix(&a.output, ".loss.csv");
    write_text(&loss_path, &trace.to_csv())?;
    eprintln!(
        "hkq: trained {} for n_s = {}: loss {:.6} -> {:.6}",
        cfg.estimator,
        cfg.n_s,
        trace.initial,
        trace.final_loss()
    );
    file_manifest(&a.output, "train", &cfg, vec![file_name(&a.output), file_name(&loss_path)])
}

#[derive(Serialize)]
struct SummaryRow {
    estimator: String,
    source: String,
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let models = a.model.iter().map(|p| Model::load(p)).collect::<Result<Vec<_>>>()?;
    let table = a.moment_grid.as_deref().map(MomentGrid::load).transpose()?;
    let constant = match &a.constant {
        Some(v) => Some(ConstantEstimator([v[0], v[1]])),
        None => None,
    };
    if models.is_empty() && table.is_none() && constant.is_none() && !a.oracle {
        return Err(invalid("nothing to evaluate: give --model and/or --moment-grid"));
    }
    let n_s = match (a.n_s, models.first()) {
        (Some(n), _) => n,
        (None, Some(m)) => m.n_s,
        (None, None) => return Err(invalid("--n-s is required when no model is given")),
    };
    let grid = EvalGrid::uniform(a.alpha_points, a.k_points, a.reps, n_s);
    grid.validate()?;
    let options = PredictOptions { n_draws: a.n_draws, seed: a.seed, clamp: a.clamp };

    let model_estimators: Vec<ModelEstimator> = models.iter().map(|m| ModelEstimator { model: m, options }).collect();
    let mut estimators: Vec<(String, &dyn Estimator)> = Vec::new();
    for (est, path) in model_estimators.iter().zip(&a.model) {
        estimators.push((path.display().to_string(), est));
    }
    if let Some(t) = &table {
        estimators.push((a.moment_grid.as_ref().unwrap().display().to_string(), t));
    }
    if let Some(c) = &constant {
        estimators.push(("constant".into(), c));
    }
    for (_, est) in &estimators {
        check_grid_sample_size(*est, &grid, a.force)?;
    }

    let samples = simulate_grid(&grid, a.seed)?;
    let mut results = Vec::new();
    if a.oracle {
        let preds: Vec<Prediction> = samples.truths().iter().map(|t| Prediction::point(t[0], t[1])).collect();
        results.push(("oracle (ground truth)".to_string(), score_predictions("oracle", &samples, &preds)?));
    }
    for (source, est) in &estimators {
        results.push((source.clone(), evaluate_on(*est, &samples, a.force)?));
    }

    let mut names: Vec<String> = Vec::new();
    for (_, r) in &results {
        let base = r.estimator.clone();
        let mut name = base.clone();
        let mut i = 2;
        while names.contains(&name) {
            name = format!("{base}{i}");
            i += 1;
        }
        names.push(name);
    }

    create_dir(&a.output)?;
    let mut outputs = Vec::new();
    let mut summary =
        String::from("estimator,source,n_s,cells,reps,rrmse_alpha,mae_alpha,rrmse_k,mae_k,mean_std_alpha,mean_std_k\n");
    let mut sources = Vec::new();
    for ((source, mut result), name) in results.into_iter().zip(names) {
        result.estimator = name.clone();
        outputs.extend(write_grid_outputs(&result, &a.output, a.format)?);
        let g = &result.aggregate;
        summary.push_str(&format!(
            "{name},{source},{n_s},{},{},{},{},{},{},{},{}\n",
            grid.cells(),
            grid.reps,
            g.rrmse_alpha,
            g.mae_alpha,
            g.rrmse_k,
            g.mae_k,
            g.mean_std_alpha,
            g.mean_std_k
        ));
        sources.push(SummaryRow { estimator: name, source });
    }
    write_text(&a.output.join("summary.csv"), &summary)?;
    outputs.push("summary.csv".into());
    let config = json!({
        "schema_version": RUN_CONFIG_SCHEMA_VERSION,
        "args": a,
        "grid": grid,
        "estimators": sources,
    });
    dir_manifest(&a.output, "evaluate", &config, outputs)
}

enum Source {
    Model(Model),
    Table(MomentGrid),
}

impl Source {
    fn load(a: &SourceArgs) -> Result<Source> {
        match (&a.model, &a.moment_grid) {
            (Some(p), None) => Ok(Source::Model(Model::load(p)?)),
            (None, Some(p)) => Ok(Source::Table(MomentGrid::load(p)?)),
            _ => Err(invalid("give exactly one of --model and --moment-grid")),
        }
    }

    fn check_samples(&self, retained: usize, force: bool) -> Result<()> {
        match self {
            Source::Model(m) => m.check_sample_size(retained, force),
            Source::Table(_) => Ok(()),
        }
    }

    fn with_estimator<T>(&self, a: &SourceArgs, f: impl FnOnce(&dyn Estimator) -> Result<T>) -> Result<T> {
        match self {
            Source::Model(model) => {
                let options = PredictOptions { n_draws: a.n_draws, seed: a.seed, clamp: a.clamp };
                f(&ModelEstimator { model, options })
            }
            Source::Table(t) => f(t),
        }
    }
}

/// One-row inputs are treated as already decorrelated blocks.
fn resolve_skips(a: &SourceArgs, rows: usize) -> Skips {
    let (axial, lateral) = if rows == 1 { (0, 0) } else { (DEFAULT_AXIAL_SKIP, DEFAULT_LATERAL_SKIP) };
    Skips { axial: a.axial_skip.unwrap_or(axial), lateral: a.lateral_skip.unwrap_or(lateral) }
}

#[derive(Serialize)]
struct PredictReport {
    estimator: String,
    frames: usize,
    rows: usize,
    cols: usize,
    skips: Skips,
    retained_samples_per_frame: usize,
    features: FeatureVector,
    /// Only set for the lookup baseline.
    #[serde(skip_serializing_if = "Option::is_none")]
    extrapolated: Option<bool>,
    prediction: Prediction,
}

pub fn predict(a: PredictArgs) -> Result<()> {
    let src = Source::load(&a.source)?;
    let (mut raster, _) = read_envelope(&a.source.input)?;
    if let Some(p) = &a.patch {
        raster = raster.window(p[0], p[1], p[2], p[3])?;
    }
    let skips = resolve_skips(&a.source, raster.rows());
    let retained = skips.retained(raster.rows(), raster.cols());
    src.check_samples(retained, a.source.force)?;
    let features = average_features_over_frames(&raster, skips)?;
    let (estimator, extrapolated, prediction) = match &src {
        Source::Table(t) => {
            let m = t.lookup(&features)?;
            ("moment-grid".to_string(), Some(m.extrapolated), m.prediction)
        }
        Source::Model(_) => src.with_estimator(&a.source, |e| {
            let p = e.predict_features(&[features])?.pop().expect("one prediction");
            Ok((e.name(), None, p))
        })?,
    };
    let report = PredictReport {
        estimator,
        frames: raster.frames(),
        rows: raster.rows(),
        cols: raster.cols(),
        skips,
        retained_samples_per_frame: retained,
        features,
        extrapolated,
        prediction,
    };
    write_json(&a.output, &report)?;
    let config = json!({ "schema_version": RUN_CONFIG_SCHEMA_VERSION, "args": a, "skips": skips });
    file_manifest(&a.output, "predict", &config, vec![file_name(&a.output)])
}

pub fn map(a: MapArgs) -> Result<()> {
    let src = Source::load(&a.source)?;
    let (raster, _) = read_envelope(&a.source.input)?;
    let window = WindowSpec {
        rows: a.window_rows,
        cols: a.window_cols,
        step_rows: a.step_rows.unwrap_or(a.window_rows),
        step_cols: a.step_cols.unwrap_or(a.window_cols),
    };
    if window.rows == 0 || window.cols == 0 {
        return Err(invalid("window dimensions must be positive"));
    }
    let skips = resolve_skips(&a.source, raster.rows());
    src.check_samples(skips.retained(window.rows, window.cols), a.source.force)?;
    let m = src.with_estimator(&a.source, |e| parametric_map(&raster, e, window, skips))?;

    create_dir(&a.output)?;
    let mut outputs = Vec::new();
    let layers = [
        ("mean_log10_alpha", &m.mean_log10_alpha),
        ("std_log10_alpha", &m.std_log10_alpha),
        ("mean_k", &m.mean_k),
        ("std_k", &m.std_k),
    ];
    for (name, values) in layers {
        let (ext, body) = match a.format {
            MapFormat::Csv => ("csv", labelled_csv("row\\col", &m.row_origins, &m.col_origins, values)),
            MapFormat::Pgm => ("pgm", map_to_pgm(values)),
        };
        let file = format!("{name}.{ext}");
        write_text(&a.output.join(&file), &body)?;
        outputs.push(file);
    }
    let config = json!({
        "schema_version": RUN_CONFIG_SCHEMA_VERSION,
        "args": a,
        "skips": skips,
        "window": window,
        "raster_dims": [raster.frames(), raster.rows(), raster.cols()],
        "row_origins": m.row_origins,
        "col_origins": m.col_origins,
    });
    dir_manifest(&a.output, "map", &config, outputs)
}

pub fn lookup(a: LookupArgs) -> Result<()> {
    let table = MomentGrid::build_sized(a.alpha_points, a.k_points, a.samples_per_cell, a.seed)?;
    table.save(&a.output)?;
    file_manifest(&a.output, "lookup", &a, vec![file_name(&a.output)])
}
