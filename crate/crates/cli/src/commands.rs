//! The four subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use turbopinn::data::{mms_cloud, write_csv, CaseConfig, CaseDataset, CaseSource, MmsCase, MmsFamily, SplitConfig};
use turbopinn::network::{Checkpoint, Field, FieldNetworkSet, InputMode};
use turbopinn::physics::{RefScales, TurbConstants};
use turbopinn::report::{
    error_map, export_grid, field_grid, validation_errors, write_metrics, write_plot_script, GridSpec, GridVariable,
    MetricsEntry,
};
use turbopinn::trainer::{write_curve, StopReason, TrainError, TrainReport, Trainer};

use crate::config::{sha256_hex, GridSection, RunConfig};
use crate::error::CliError;
use crate::manifest::{CaseRecord, RunManifest};

/// Creates `dir`, refusing to reuse a non-empty one unless `force`.
pub fn prepare_out(dir: &Path, force: bool) -> Result<(), CliError> {
    if let Ok(mut entries) = fs::read_dir(dir) {
        if entries.next().is_some() && !force {
            return Err(CliError::Usage(format!(
                "{} exists and is not empty; pass --force to write into it",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Parses `S` or `LO..HI`; a range is split into `count` evenly spaced
/// values, both ends included.
pub fn parse_s_values(specs: &[String], count: usize) -> Result<Vec<f64>, CliError> {
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| CliError::Usage(format!("`{t}` is not a number")))
    };
    let mut out = Vec::new();
    for spec in specs {
        match spec.split_once("..") {
            Some((lo, hi)) => {
                let (lo, hi) = (num(lo)?, num(hi)?);
                if count < 2 || hi <= lo {
                    return Err(CliError::Usage(format!(
                        "range `{spec}` needs LO < HI and --count of at least 2"
                    )));
                }
                let step = (hi - lo) / (count - 1) as f64;
                out.extend((0..count).map(|i| if i + 1 == count { hi } else { lo + step * i as f64 }));
            }
            None => out.push(num(spec)?),
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("give at least one --s value".into()));
    }
    Ok(out)
}

/// Default split sizes, shrunk so that a cloud of `n_interior` points can
/// supply the held-out, data and collocation subsets without overlap.
fn split_for_cloud(n_interior: usize, seed: u64) -> SplitConfig {
    let d = SplitConfig::default();
    let n_val = (d.validation_fraction * n_interior as f64).round() as usize;
    let pool = n_interior - n_val;
    let n_data = d.n_data.min(pool / 2);
    SplitConfig {
        n_data,
        n_collocation: d.n_collocation.min(pool - n_data),
        seed,
        ..d
    }
}

pub struct SynthOptions {
    pub family: MmsFamily,
    pub s_values: Vec<f64>,
    pub n_cloud: usize,
    pub n_per_boundary: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub force: bool,
}

/// Writes one directory per parameter value with the sampled cloud as CSV
/// and a case file that regenerates it with exact forcing.
pub fn synth(o: &SynthOptions) -> Result<String, CliError> {
    prepare_out(&o.out, o.force)?;
    let mut manifest = RunManifest::start("synth");
    manifest.seed = Some(o.seed);
    let consts = TurbConstants::default();
    for &s in &o.s_values {
        let case = MmsCase::new(o.family, s, consts)?;
        let name = format!("{}-s{s}", o.family.name());
        let dir = o.out.join(&name);
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let cloud = mms_cloud(&case, o.n_cloud, o.n_per_boundary, o.seed);
        write_csv(&dir.join("cloud.csv"), &cloud.samples, &RefScales::default(), Some(s))?;
        let cfg = CaseConfig {
            name: name.clone(),
            source: CaseSource::Mms {
                family: o.family,
                s,
                n_cloud: o.n_cloud,
            },
            scales: RefScales::default(),
            geometry: None,
            n_per_boundary: o.n_per_boundary,
            split: split_for_cloud(o.n_cloud, o.seed),
        };
        let text = toml::to_string(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
        let case_path = dir.join("case.toml");
        fs::write(&case_path, text).map_err(|e| CliError::io(&case_path, e))?;
        manifest.add("dataset", Path::new(&name).join("cloud.csv"));
        manifest.add("case", Path::new(&name).join("case.toml"));
    }
    manifest.finish(&o.out, "ok")?;
    Ok(format!(
        "synth: {} {} case(s) -> {}",
        o.s_values.len(),
        o.family.name(),
        o.out.display()
    ))
}

pub fn build_cases(cfgs: &[CaseConfig], base: &Path, consts: &TurbConstants) -> Result<Vec<CaseDataset>, CliError> {
    cfgs.iter()
        .map(|c| c.build(base, consts).map_err(CliError::from))
        .collect()
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Flag overrides applied on top of a run file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub ablation: Option<turbopinn::loss::Ablation>,
}

pub fn load_run(path: &Path, ov: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    if let Some(w) = ov.workers {
        cfg.train.workers = w;
    }
    if let Some(a) = ov.ablation {
        cfg.train.ablation = a;
    }
    cfg.resolve_seed();
    cfg.train.validate()?;
    Ok(cfg)
}

pub struct TrainOutcome {
    pub net: FieldNetworkSet,
    pub report: TrainReport,
    pub cases: Vec<CaseDataset>,
}

/// Trains per the run file and writes the resolved config, checkpoint,
/// curve, metrics, report and manifest into `out`. A non-finite loss still
/// writes every artifact (from the last finite parameters) before failing.
pub fn train_run(
    config_path: &Path,
    cfg: &RunConfig,
    out: &Path,
    manifest: &mut RunManifest,
) -> Result<TrainOutcome, CliError> {
    let cases = build_cases(&cfg.cases, &config_dir(config_path), &cfg.train.constants)?;
    let net =
        FieldNetworkSet::init(cfg.network.for_cases(&cases), cfg.seed).map_err(|e| CliError::Usage(e.to_string()))?;

    let resolved = cfg.to_toml()?;
    let cfg_path = out.join("config.toml");
    fs::write(&cfg_path, &resolved).map_err(|e| CliError::io(&cfg_path, e))?;
    manifest.config_hash = Some(sha256_hex(&resolved));
    manifest.seed = Some(cfg.seed);
    manifest.cases = cases.iter().map(CaseRecord::of).collect();
    manifest.add("config", "config.toml");

    let mut trainer = Trainer::new(net, &cases, cfg.train.clone())?;
    let result = trainer.run();
    let report = match &result {
        Ok(r) => r.clone(),
        Err(_) => {
            let mut r = trainer.report();
            r.validation = trainer.validate()?;
            r
        }
    };

    let ck_path = out.join("model.ckpt");
    trainer
        .checkpoint()
        .save(&ck_path)
        .map_err(|e| CliError::io(&ck_path, e))?;
    manifest.add("checkpoint", "model.ckpt");
    let curve_path = out.join("curve.csv");
    write_curve(&curve_path, &report.curve).map_err(|e| CliError::io(&curve_path, e))?;
    manifest.add("curve", "curve.csv");
    write_metrics(&out.join("metrics.json"), &report.validation)?;
    manifest.add("metrics", "metrics.json");
    let report_path = out.join("report.json");
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(&report_path, text + "\n").map_err(|e| CliError::io(&report_path, e))?;
    manifest.add("report", "report.json");

    match result {
        Ok(_) => Ok(TrainOutcome {
            net: trainer.into_network(),
            report,
            cases,
        }),
        Err(e @ TrainError::NonFinite { .. }) => {
            manifest.finish(out, "non-finite")?;
            Err(e.into())
        }
        Err(e) => {
            manifest.finish(out, "failed")?;
            Err(e.into())
        }
    }
}

fn stop_text(r: &TrainReport) -> String {
    match r.stop {
        StopReason::StepsExhausted => "steps exhausted".into(),
        StopReason::Converged { step } => format!("converged at main step {step}"),
        StopReason::NonFinite { phase, step } => format!("non-finite at {phase} step {step}"),
    }
}

fn error_summary(entries: &[MetricsEntry]) -> String {
    entries
        .iter()
        .map(|e| format!("{} u {:.4} v {:.4}", e.case, e.metrics.rel_err_u, e.metrics.rel_err_v))
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn train(config_path: &Path, cfg: &RunConfig, out: &Path, force: bool) -> Result<String, CliError> {
    prepare_out(out, force)?;
    let mut manifest = RunManifest::start("train");
    let o = train_run(config_path, cfg, out, &mut manifest)?;
    manifest.finish(out, "ok")?;
    Ok(format!(
        "train {}: {} pretrain + {} main steps ({}); {} -> {}",
        cfg.name,
        o.report.pretrain_steps,
        o.report.main_steps,
        stop_text(&o.report),
        error_summary(&o.report.validation),
        out.display()
    ))
}

/// A fixed-Re network only describes the Reynolds number it was trained at.
fn check_compatible(net: &FieldNetworkSet, case: &CaseDataset) -> Result<(), CliError> {
    if net.mode() == InputMode::FixedRe {
        let trained = net.config().bounds.re.lo;
        if (trained - case.re).abs() > 1e-9 * trained.abs().max(1.0) {
            return Err(CliError::Mismatch(format!(
                "checkpoint was trained at Re = {trained} but case `{}` has Re = {}",
                case.name, case.re
            )));
        }
    }
    Ok(())
}

/// Metrics and grids for each case; file names are prefixed by case name.
fn evaluate_into(
    net: &FieldNetworkSet,
    cases: &[CaseDataset],
    grid: GridSection,
    out: &Path,
    manifest: &mut RunManifest,
) -> Result<Vec<MetricsEntry>, CliError> {
    let grids = out.join("grids");
    fs::create_dir_all(&grids).map_err(|e| CliError::io(&grids, e))?;
    let mut entries = Vec::new();
    for c in cases {
        entries.push(MetricsEntry {
            case: c.name.clone(),
            re: c.re,
            metrics: validation_errors(net, &c.validation_points, c.re)?,
        });
        let spec = GridSpec {
            nx: grid.nx,
            ny: grid.ny,
            xmin: c.domain.xmin,
            xmax: c.domain.xmax,
            ymin: c.domain.ymin,
            ymax: c.domain.ymax,
        };
        let mut maps = vec![
            field_grid(
                net,
                &spec,
                GridVariable::SpeedMagnitude,
                c.re,
                &c.scales,
                c.obstacle.as_ref(),
            )?,
            field_grid(
                net,
                &spec,
                GridVariable::Field(Field::P),
                c.re,
                &c.scales,
                c.obstacle.as_ref(),
            )?,
        ];
        maps.push(error_map(net, &c.validation_points, Field::U, &spec, c.re)?);
        for g in maps {
            let rel = Path::new("grids").join(format!("{}-{}.csv", c.name, g.variable));
            export_grid(&g, &out.join(&rel))?;
            write_plot_script(&out.join(&rel))?;
            manifest.add("grid", &rel);
            manifest.add("plot-script", rel.with_extension("py"));
        }
    }
    write_metrics(&out.join("metrics.json"), &entries)?;
    manifest.add("metrics", "metrics.json");
    Ok(entries)
}

pub struct EvalOptions {
    pub checkpoint: PathBuf,
    pub case_files: Vec<PathBuf>,
    pub grid: GridSection,
    pub out: PathBuf,
    pub force: bool,
}

pub fn eval(o: &EvalOptions) -> Result<String, CliError> {
    if o.case_files.is_empty() {
        return Err(CliError::Usage("give at least one --case file".into()));
    }
    let ck = Checkpoint::load(&o.checkpoint)?;
    let net = ck.network()?;
    let mut cfgs = Vec::new();
    let mut cases = Vec::new();
    for path in &o.case_files {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg = CaseConfig::from_toml(&text)?;
        cases.push(cfg.build(&config_dir(path), &TurbConstants::default())?);
        cfgs.push(cfg);
    }
    for c in &cases {
        check_compatible(&net, c)?;
    }
    prepare_out(&o.out, o.force)?;
    let mut manifest = RunManifest::start("eval");
    manifest.cases = cases.iter().map(CaseRecord::of).collect();
    let entries = evaluate_into(&net, &cases, o.grid, &o.out, &mut manifest)?;
    manifest.finish(&o.out, "ok")?;
    Ok(format!("eval: {} -> {}", error_summary(&entries), o.out.display()))
}

/// Row label of a sweep case relative to the training Reynolds numbers.
pub fn sweep_role(re: f64, trained: &[f64]) -> &'static str {
    let lo = trained.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = trained.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if trained.contains(&re) {
        "train"
    } else if re >= lo && re <= hi {
        "interpolation"
    } else {
        "extrapolation"
    }
}

/// Parametric training over all `cases`, then evaluation on them and on
/// `eval_cases`, summarized in `sweep.csv`.
pub fn sweep(config_path: &Path, cfg: &RunConfig, out: &Path, force: bool) -> Result<String, CliError> {
    if cfg.cases.len() < 2 {
        return Err(CliError::Usage(format!(
            "a sweep trains on at least two cases, config has {}",
            cfg.cases.len()
        )));
    }
    prepare_out(out, force)?;
    let mut manifest = RunManifest::start("sweep");
    let trained = train_run(config_path, cfg, out, &mut manifest)?;
    let extra = build_cases(&cfg.eval_cases, &config_dir(config_path), &cfg.train.constants)?;
    manifest.cases.extend(extra.iter().map(CaseRecord::of));
    let all: Vec<CaseDataset> = trained.cases.iter().cloned().chain(extra).collect();
    let eval_dir = out.join("eval");
    fs::create_dir_all(&eval_dir).map_err(|e| CliError::io(&eval_dir, e))?;
    let mut eval_manifest = RunManifest::start("sweep");
    let entries = evaluate_into(&trained.net, &all, cfg.grid, &eval_dir, &mut eval_manifest)?;
    for a in eval_manifest.artifacts {
        manifest.add(&a.kind, Path::new("eval").join(a.path));
    }
    let train_re: Vec<f64> = trained.cases.iter().map(|c| c.re).collect();
    let mut table = String::from("role,case,re,rel_err_u,rel_err_v,rel_err_p,rel_err_k,rel_err_eps\n");
    for e in &entries {
        let m = &e.metrics;
        table.push_str(&format!(
            "{},{},{:e},{:e},{:e},{:e},{:e},{:e}\n",
            sweep_role(e.re, &train_re),
            e.case,
            e.re,
            m.rel_err_u,
            m.rel_err_v,
            m.rel_err_p,
            m.rel_err_k,
            m.rel_err_eps
        ));
    }
    let table_path = out.join("sweep.csv");
    fs::write(&table_path, table).map_err(|e| CliError::io(&table_path, e))?;
    manifest.add("sweep", "sweep.csv");
    manifest.finish(out, "ok")?;
    Ok(format!(
        "sweep {}: {} -> {}",
        cfg.name,
        error_summary(&entries),
        out.display()
    ))
}
