use std::collections::BTreeMap;
use std::path::Path;

use log::info;
use pesuff::bds::{appendix_experiment, AppendixConfig, BdsConfig};
use pesuff::dependence::EnsembleConfig;
use pesuff::dgp::{simulate, signal_to_noise, DgpKind, DgpSpec, GarchParams, SimulatedPath};
use pesuff::inference::{calibrate_independence_with, calibration_id, BootstrapConfig, IndependenceCalibration};
use pesuff::models::{self, FitResult, GpGrid, MetricsReport, ModelKind};
use pesuff::ordinal::SegmentConfig;
use pesuff::rng::{derive_seed, index_seed};
use pesuff::rvpipe;
use pesuff::stats::mean;
use pesuff::sufftest::{run_sufficiency_test, SufficiencyVerdict};
use serde::Serialize;

use crate::config::Config;
use crate::error::CliError;
use crate::output::{csv_bytes, Output, Provenance};
use crate::series::read_columns;

fn fmt(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

pub fn segment_config(cfg: &Config) -> Result<SegmentConfig, CliError> {
    Ok(SegmentConfig::new(cfg.segment.dim, cfg.segment.delay)?)
}

fn ensemble(cfg: &Config) -> EnsembleConfig {
    EnsembleConfig { replications: cfg.surrogates.replications, scheme: cfg.surrogates.scheme }
}

fn bootstrap(cfg: &Config, seed: u64) -> BootstrapConfig {
    BootstrapConfig {
        block_length: cfg.bootstrap.block_length,
        replications: cfg.bootstrap.replications,
        quantile: cfg.bootstrap.quantile,
        seed,
    }
}

fn gp_grid(cfg: &Config) -> GpGrid {
    if cfg.quick {
        GpGrid {
            lengthscales: vec![1.0, 2.0],
            noise_variances: vec![2.0, 8.0, 32.0],
            lags: (1..=3).collect(),
            ..GpGrid::default()
        }
    } else {
        GpGrid::default()
    }
}

fn calibration_seed(cfg: &Config) -> u64 {
    derive_seed(cfg.seed, "calibration")
}

/// Loads the cached fixture for series length `n`, computing and caching it
/// when `compute` is set.
fn calibration(cfg: &Config, n: usize, compute: bool) -> Result<(IndependenceCalibration, bool), CliError> {
    let seg = segment_config(cfg)?;
    let ens = ensemble(cfg);
    let c = &cfg.calibration;
    let seed = calibration_seed(cfg);
    let id = calibration_id(&seg, n, c.paths, c.quantile, &ens, c.marginal, seed);
    let dir = cfg.calibration_dir();
    let path = dir.join(format!("{id}.json"));
    if path.exists() {
        let cal = IndependenceCalibration::load(&path)?;
        if cal.matches(&seg, n, c.paths, &ens, seed) && cal.quantile == c.quantile && cal.marginal == c.marginal {
            info!("reusing calibration {id} from {}", path.display());
            return Ok((cal, true));
        }
        info!("cached calibration {} does not match; recomputing", path.display());
    }
    if !compute {
        return Err(CliError::Config(format!(
            "no independence calibration for D={}, tau={}, N={n}, {} paths in {}; run `pesuff calibrate --length {n}` with the same config first",
            seg.dim(),
            seg.delay(),
            c.paths,
            dir.display()
        )));
    }
    info!("calibrating: {} paths of length {n}", c.paths);
    let cal = calibrate_independence_with(&seg, n, c.paths, &ens, c.marginal, c.quantile, seed)?;
    std::fs::create_dir_all(&dir)?;
    cal.save(&path)?;
    Ok((cal, false))
}

/// One series under study.
struct Dataset {
    name: String,
    x: Vec<f64>,
    oracle: Option<Vec<f64>>,
    columns: BTreeMap<String, Vec<f64>>,
}

fn dgp_kind(label: &str) -> Result<DgpKind, CliError> {
    DgpKind::from_label(label).ok_or_else(|| {
        CliError::Config(format!("unknown data-generating process `{label}` (expected one of x1..x6)"))
    })
}

fn simulate_dgp(cfg: &Config, label: &str, prov: &mut Provenance) -> Result<SimulatedPath, CliError> {
    let kind = dgp_kind(label)?;
    let seed = prov.seed(format!("dgp/{}", kind.label()), derive_seed(cfg.seed, &format!("dgp/{}", kind.label())));
    let spec = DgpSpec::new(kind, seed).with_length(cfg.data.length);
    spec.validate()?;
    Ok(simulate(&spec)?)
}

fn datasets(cfg: &Config, prov: &mut Provenance) -> Result<Vec<Dataset>, CliError> {
    if let Some(input) = &cfg.data.input {
        let columns = read_columns(input)?;
        let x = columns
            .get("x")
            .cloned()
            .ok_or_else(|| CliError::Data(format!("{}: no `x` column", input.display())))?;
        let name = input.file_stem().map_or("input".into(), |s| s.to_string_lossy().into_owned());
        return Ok(vec![Dataset { name, oracle: columns.get("oracle").cloned(), x, columns }]);
    }
    if cfg.data.dgps.is_empty() {
        return Err(CliError::Config("no data: set data.dgps or data.input".into()));
    }
    cfg.data
        .dgps
        .iter()
        .map(|label| {
            let path = simulate_dgp(cfg, label, prov)?;
            Ok(Dataset {
                name: dgp_kind(label)?.label().to_string(),
                x: path.observations,
                oracle: Some(path.oracle),
                columns: BTreeMap::new(),
            })
        })
        .collect()
}

fn model_kinds(cfg: &Config) -> Result<Vec<ModelKind>, CliError> {
    cfg.models.kinds.iter().map(|k| model_kind(k)).collect()
}

fn model_kind(label: &str) -> Result<ModelKind, CliError> {
    if label == "svr" {
        return Err(CliError::Config("the svr forecaster is not available in this build".into()));
    }
    ModelKind::from_label(label)
        .ok_or_else(|| CliError::Config(format!("unknown model `{label}` (expected arma11, garch11 or gp)")))
}

fn check_split(cfg: &Config, n: usize) -> Result<(), CliError> {
    let d = &cfg.data;
    if d.gp_train_length >= d.train_length || d.train_length >= n || d.warmup >= d.train_length {
        return Err(CliError::Config(format!(
            "need warmup < gp_train_length < train_length < series length, got {} / {} / {} / {n}",
            d.warmup, d.gp_train_length, d.train_length
        )));
    }
    Ok(())
}

/// Fits `kind` on the training span of `x` and returns one-step predictions
/// for `x[warmup..]`.
fn fit_and_forecast(cfg: &Config, kind: ModelKind, x: &[f64], seed: u64) -> Result<(FitResult, Vec<f64>), CliError> {
    check_split(cfg, x.len())?;
    let d = &cfg.data;
    let fit = match kind {
        ModelKind::GpMean => {
            models::fit_with_validation(&x[..d.gp_train_length], &x[d.gp_train_length..d.train_length], &gp_grid(cfg))?
        }
        _ => models::fit(kind, &x[..d.train_length], seed)?,
    };
    if fit.model.warmup() > d.warmup {
        return Err(CliError::Config(format!("model needs {} warm-up observations, data.warmup is {}", fit.model.warmup(), d.warmup)));
    }
    let preds = fit.model.forecast(x, d.warmup)?;
    Ok((fit, preds))
}

fn out_of_sample(cfg: &Config, data: &Dataset, preds: &[f64]) -> Result<MetricsReport, CliError> {
    let (start, w) = (cfg.data.train_length, cfg.data.warmup);
    let oracle = data.oracle.as_ref().map(|o| &o[start..]);
    Ok(models::metrics(&data.x[start..], &preds[start - w..], oracle)?)
}

pub fn simulate_cmd(cfg: &Config) -> Result<(), CliError> {
    let mut prov = Provenance::new("simulate", cfg);
    let mut out = Output::create(&cfg.out_dir)?;
    for label in &cfg.data.dgps {
        let path = simulate_dgp(cfg, label, &mut prov)?;
        let mut buf = Vec::new();
        path.write_csv(&mut buf)?;
        let name = format!("{}.csv", dgp_kind(label)?.label());
        out.write(&name, &buf)?;
        println!("{name}: {} rows", path.len());
    }
    out.finish(&prov, cfg)
}

#[derive(Serialize)]
struct CalibrationSummary<'a> {
    id: String,
    critical_value: f64,
    series_length: usize,
    paths: usize,
    warnings: &'a [String],
}

pub fn calibrate_cmd(cfg: &Config) -> Result<(), CliError> {
    let mut prov = Provenance::new("calibrate", cfg);
    prov.seed("calibration", calibration_seed(cfg));
    let (cal, reused) = calibration(cfg, cfg.calibration.length, true)?;
    prov.calibration_id = Some(cal.id());
    let mut out = Output::create(&cfg.out_dir)?;
    out.write_json(
        "calibration_summary.json",
        &CalibrationSummary {
            id: cal.id(),
            critical_value: cal.critical_value,
            series_length: cal.series_length,
            paths: cal.paths,
            warnings: &cal.warnings,
        },
    )?;
    println!(
        "calibration {} ({}): critical value {:.4} from {} paths",
        cal.id(),
        if reused { "cached" } else { "computed" },
        cal.critical_value,
        cal.paths
    );
    for w in &cal.warnings {
        println!("warning: {w}");
    }
    out.finish(&prov, cfg)
}

#[derive(Serialize)]
struct FitReport<'a> {
    provenance: &'a Provenance,
    dataset: &'a str,
    model: ModelKind,
    estimates: BTreeMap<&'static str, f64>,
    fit: &'a FitResult,
    out_of_sample: MetricsReport,
}

pub fn fit_cmd(cfg: &Config) -> Result<(), CliError> {
    let mut prov = Provenance::new("fit", cfg);
    let kinds = model_kinds(cfg)?;
    let data = datasets(cfg, &mut prov)?;
    let mut out = Output::create(&cfg.out_dir)?;
    for d in &data {
        for &kind in &kinds {
            let seed = prov.seed(format!("fit/{}/{}", d.name, kind.label()), derive_seed(cfg.seed, &format!("fit/{}/{}", d.name, kind.label())));
            let (fit, preds) = fit_and_forecast(cfg, kind, &d.x, seed)?;
            let metrics = out_of_sample(cfg, d, &preds)?;
            println!(
                "{} {}: {} adjMSEratio {:.4} ({})",
                d.name,
                kind.label(),
                fit.model.estimates().iter().map(|(k, v)| format!("{k}={v:.4}")).collect::<Vec<_>>().join(" "),
                metrics.adj_mse_ratio,
                fit.convergence.message
            );
            let report = FitReport {
                provenance: &prov,
                dataset: &d.name,
                model: kind,
                estimates: fit.model.estimates().into_iter().collect(),
                fit: &fit,
                out_of_sample: metrics,
            };
            out.write_json(&format!("fit_{}_{}.json", d.name, kind.label()), &report)?;
            let w = cfg.data.warmup;
            let rows: Vec<Vec<String>> = (w..d.x.len())
                .map(|t| {
                    vec![
                        t.to_string(),
                        fmt(d.x[t]),
                        fmt(preds[t - w]),
                        d.oracle.as_ref().map(|o| fmt(o[t])).unwrap_or_default(),
                    ]
                })
                .collect();
            out.write(&format!("forecast_{}_{}.csv", d.name, kind.label()), &csv_bytes(&["t", "x", "prediction", "oracle"], &rows)?)?;
        }
    }
    out.finish(&prov, cfg)
}

/// Predictions for `x[skip..]` under the configured predictor.
fn predictor(cfg: &Config, d: &Dataset, name: &str, seed: u64) -> Result<(Vec<f64>, usize), CliError> {
    match name {
        "oracle" => d
            .oracle
            .clone()
            .map(|o| (o, 0))
            .ok_or_else(|| CliError::Config(format!("{}: the oracle predictor needs an `oracle` column", d.name))),
        "mean" => {
            let train = cfg.data.train_length.min(d.x.len());
            Ok((vec![mean(&d.x[..train]); d.x.len()], 0))
        }
        _ => {
            if let Some(col) = name.strip_prefix("column:") {
                let p = d
                    .columns
                    .get(col)
                    .cloned()
                    .ok_or_else(|| CliError::Config(format!("{}: no column `{col}`", d.name)))?;
                return Ok((p, 0));
            }
            let kind = model_kind(name)?;
            let (_, preds) = fit_and_forecast(cfg, kind, &d.x, seed)?;
            Ok((preds, cfg.data.warmup))
        }
    }
}

#[derive(Serialize)]
struct TestReport<'a> {
    provenance: &'a Provenance,
    dataset: &'a str,
    predictor: &'a str,
    skipped: usize,
    verdict: &'a SufficiencyVerdict,
}

const VERDICT_HEADER: [&str; 12] = [
    "dataset",
    "predictor",
    "n",
    "k_self",
    "k_cross",
    "difference",
    "c_independence",
    "c_difference",
    "verdict",
    "seed",
    "config_hash",
    "calibration_id",
];

fn verdict_row(dataset: &str, predictor: &str, v: &SufficiencyVerdict, seed: u64, hash: &str) -> Vec<String> {
    vec![
        dataset.into(),
        predictor.into(),
        v.series_length.to_string(),
        fmt(v.k_self),
        fmt(v.k_cross),
        fmt(v.difference),
        fmt(v.c_independence),
        opt(v.c_difference),
        v.decision.as_str().into(),
        seed.to_string(),
        hash.into(),
        v.provenance.calibration_id.clone(),
    ]
}

pub fn test_cmd(cfg: &Config) -> Result<(), CliError> {
    let mut prov = Provenance::new("test", cfg);
    let seg = segment_config(cfg)?;
    let ens = ensemble(cfg);
    let pred_name = cfg.models.predictor.clone();
    let data = datasets(cfg, &mut prov)?;
    let mut out = Output::create(&cfg.out_dir)?;
    for d in &data {
        let label = format!("test/{}/{}", d.name, pred_name);
        let seed = prov.seed(label.clone(), derive_seed(cfg.seed, &label));
        let (preds, skip) = predictor(cfg, d, &pred_name, derive_seed(seed, "fit"))?;
        let x = &d.x[skip..];
        let preds = &preds[preds.len() - x.len()..];
        let (cal, _) = calibration(cfg, x.len(), false)?;
        prov.calibration_id = Some(cal.id());
        let bcfg = bootstrap(cfg, prov.seed(format!("{label}/bootstrap"), derive_seed(seed, "bootstrap")));
        let verdict = run_sufficiency_test(x, preds, &seg, &cal, &bcfg, &ens, seed)?;
        println!(
            "{} {}: {} (K_self {:.3}, K_cross {:.3}, c_ind {:.3}, c_diff {})",
            d.name,
            pred_name,
            verdict.decision,
            verdict.k_self,
            verdict.k_cross,
            verdict.c_independence,
            verdict.c_difference.map_or("-".into(), |c| format!("{c:.3}"))
        );
        let stem = format!("test_{}_{}", d.name, pred_name.replace(':', "-"));
        out.write_json(
            &format!("{stem}.json"),
            &TestReport { provenance: &prov, dataset: &d.name, predictor: &pred_name, skipped: skip, verdict: &verdict },
        )?;
        let row = verdict_row(&d.name, &pred_name, &verdict, seed, &prov.config_hash);
        out.write(&format!("{stem}.csv"), &csv_bytes(&VERDICT_HEADER, &[row])?)?;
    }
    out.finish(&prov, cfg)
}

#[derive(Serialize)]
struct BenchRow {
    dgp: String,
    model: ModelKind,
    seed: u64,
    signal_to_noise: f64,
    estimates: BTreeMap<&'static str, f64>,
    converged: bool,
    out_of_sample: MetricsReport,
    verdict: SufficiencyVerdict,
}

#[derive(Serialize)]
struct BenchReport<'a> {
    provenance: &'a Provenance,
    rows: &'a [BenchRow],
}

pub fn bench_cmd(cfg: &Config) -> Result<(), CliError> {
    let mut prov = Provenance::new("bench", cfg);
    let seg = segment_config(cfg)?;
    let ens = ensemble(cfg);
    let kinds = model_kinds(cfg)?;
    let n_test = cfg
        .data
        .length
        .checked_sub(cfg.data.warmup)
        .ok_or_else(|| CliError::Config("data.warmup exceeds data.length".into()))?;
    prov.seed("calibration", calibration_seed(cfg));
    let (cal, _) = calibration(cfg, n_test, true)?;
    prov.calibration_id = Some(cal.id());
    let mut rows = Vec::new();
    for label in &cfg.data.dgps {
        let path = simulate_dgp(cfg, label, &mut prov)?;
        let snr = signal_to_noise(&path)?;
        let name = dgp_kind(label)?.label().to_string();
        let d = Dataset { name: name.clone(), x: path.observations, oracle: Some(path.oracle), columns: BTreeMap::new() };
        for &kind in &kinds {
            let key = format!("bench/{name}/{}", kind.label());
            let seed = prov.seed(key.clone(), derive_seed(cfg.seed, &key));
            let (fit, preds) = fit_and_forecast(cfg, kind, &d.x, derive_seed(seed, "fit"))?;
            let metrics = out_of_sample(cfg, &d, &preds)?;
            let bcfg = bootstrap(cfg, derive_seed(seed, "bootstrap"));
            let verdict = run_sufficiency_test(&d.x[cfg.data.warmup..], &preds, &seg, &cal, &bcfg, &ens, seed)?;
            println!("{name} {}: {} adjMSEratio {:.4}", kind.label(), verdict.decision, metrics.adj_mse_ratio);
            rows.push(BenchRow {
                dgp: name.clone(),
                model: kind,
                seed,
                signal_to_noise: snr,
                estimates: fit.model.estimates().into_iter().collect(),
                converged: fit.convergence.converged,
                out_of_sample: metrics,
                verdict,
            });
        }
    }
    let mut out = Output::create(&cfg.out_dir)?;
    let header = [
        "dgp",
        "model",
        "seed",
        "signal_to_noise",
        "params",
        "mse_over_sumsq",
        "adj_mse_ratio",
        "bias_ratio",
        "prediction_error_rate",
        "prediction_class",
        "k_self",
        "k_cross",
        "c_independence",
        "c_difference",
        "verdict",
        "config_hash",
        "calibration_id",
    ];
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let m = &r.out_of_sample;
            vec![
                r.dgp.clone(),
                r.model.label().into(),
                r.seed.to_string(),
                fmt(r.signal_to_noise),
                r.estimates.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";"),
                fmt(m.mse_over_sumsq),
                fmt(m.adj_mse_ratio),
                fmt(m.bias_ratio),
                opt(m.prediction_error_rate),
                m.prediction_class.map(|c| c.as_str().to_string()).unwrap_or_default(),
                fmt(r.verdict.k_self),
                fmt(r.verdict.k_cross),
                fmt(r.verdict.c_independence),
                opt(r.verdict.c_difference),
                r.verdict.decision.as_str().into(),
                prov.config_hash.clone(),
                cal.id(),
            ]
        })
        .collect();
    out.write("bench.csv", &csv_bytes(&header, &table)?)?;
    out.write_json("bench.json", &BenchReport { provenance: &prov, rows: &rows })?;
    println!("{} rows", rows.len());
    out.finish(&prov, cfg)
}

#[derive(Serialize)]
struct BdsSummaryRow {
    seed: u64,
    insignificant_fraction: f64,
    verdict: SufficiencyVerdict,
}

pub fn bds_cmd(cfg: &Config) -> Result<(), CliError> {
    let mut prov = Provenance::new("bds", cfg);
    let seg = segment_config(cfg)?;
    let ens = ensemble(cfg);
    let b = &cfg.bds;
    let garch = |p: [f64; 3]| GarchParams { alpha0: p[0], alpha1: p[1], beta1: p[2] };
    let appendix = AppendixConfig {
        truth: garch(b.truth),
        predictor: garch(b.predictor),
        length: b.length,
        bds: BdsConfig { dims: b.dims.clone(), r_multipliers: b.r_multipliers.clone() },
    };
    appendix.bds.validate()?;
    if b.seeds == 0 {
        return Err(CliError::Config("bds.seeds must be at least 1".into()));
    }
    prov.seed("calibration", calibration_seed(cfg));
    let (cal, _) = calibration(cfg, b.length, true)?;
    prov.calibration_id = Some(cal.id());
    let base = prov.seed("bds", derive_seed(cfg.seed, "bds"));
    let mut out = Output::create(&cfg.out_dir)?;
    let mut summary = Vec::new();
    for i in 0..b.seeds {
        let seed = index_seed(base, i as u64);
        let bcfg = bootstrap(cfg, derive_seed(seed, "bootstrap"));
        let report = appendix_experiment(&appendix, &seg, &cal, &bcfg, &ens, seed)?;
        let mut buf = Vec::new();
        report.table.write_csv(&mut buf)?;
        out.write(&format!("bds_table_{i}.csv"), &buf)?;
        let frac = report.table.insignificant_fraction();
        println!("seed {i}: {:.1}% of BDS cells insignificant; PE test {}", 100.0 * frac, report.verdict.decision);
        summary.push(BdsSummaryRow { seed, insignificant_fraction: frac, verdict: report.verdict });
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        provenance: &'a Provenance,
        runs: &'a [BdsSummaryRow],
    }
    out.write_json("bds_summary.json", &Summary { provenance: &prov, runs: &summary })?;
    out.finish(&prov, cfg)
}

#[derive(Serialize)]
struct RvReport<'a> {
    provenance: &'a Provenance,
    source: String,
    year: i32,
    window_start: String,
    window_end: String,
    hours: usize,
    dropped_hours: usize,
    filled_bars: usize,
    long_gaps: usize,
    train_length: usize,
    seasonal_factors: &'a BTreeMap<u8, f64>,
}

pub fn rv_cmd(cfg: &Config) -> Result<(), CliError> {
    let mut prov = Provenance::new("rv", cfg);
    let r = &cfg.rv;
    let (ticks, source) = match &r.input {
        Some(path) => (read_ticks(path)?, path.display().to_string()),
        None => {
            let seed = prov.seed("rv/synthetic", derive_seed(cfg.seed, "rv/synthetic"));
            (rvpipe::synthetic_ticks(r.year, r.synthetic_vol, r.synthetic_cycle, seed)?, "synthetic".into())
        }
    };
    let filtered = rvpipe::weekend_filter(&ticks);
    let (filled, fill) = rvpipe::fill_gaps(&filtered, rvpipe::MAX_FILL);
    let window = rvpipe::year_window(&filled, r.year)?;
    let raw = rvpipe::realized_volatility(&window)?;
    let train = r.train_length.min(raw.len());
    let des = rvpipe::deseasonalize(&raw, train)?;
    let (start, end) = rvpipe::year_bounds(r.year)?;
    let mut out = Output::create(&cfg.out_dir)?;
    let mut buf = Vec::new();
    rvpipe::write_rv_csv(&raw, &des, &mut buf)?;
    out.write(&format!("rv_{}.csv", r.year), &buf)?;
    out.write_json(
        &format!("rv_{}.json", r.year),
        &RvReport {
            provenance: &prov,
            source,
            year: r.year,
            window_start: start.to_rfc3339(),
            window_end: end.to_rfc3339(),
            hours: raw.len(),
            dropped_hours: raw.dropped_hours,
            filled_bars: fill.filled_bars,
            long_gaps: fill.long_gaps.len(),
            train_length: train,
            seasonal_factors: &des.seasonal_factors,
        },
    )?;
    println!("rv {}: {} hourly values ({} dropped, {} bars filled)", r.year, raw.len(), raw.dropped_hours, fill.filled_bars);
    out.finish(&prov, cfg)
}

fn read_ticks(path: &Path) -> Result<rvpipe::TickTable, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Config(format!("cannot open input {}: {e}", path.display())))?;
    rvpipe::TickTable::read_csv(file).map_err(|e| match e {
        pesuff::Error::Parse { line, message } => CliError::Data(format!("{}: line {line}: {message}", path.display())),
        other => other.into(),
    })
}
