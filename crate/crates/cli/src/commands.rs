use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ftjnf_kd::eval::{
    plot_size, plot_snr, run_size_sweep, run_snr_sweep, size_summary, snr_summary, write_jsonl, MaskModel,
    MetricResult, PesqAdapter, SizeCell, SizeReport, SnrReport, SweepOptions, TestSet,
};
use ftjnf_kd::losses::KdMethod;
use ftjnf_kd::model::{
    count_macs_per_frame, count_params, load_model, save_model, Features, FtJnfModel, ComplexMask, SizePreset,
};
use ftjnf_kd::scene::{
    generate_examples, load_example, read_manifest, save_example, FileCorpus, MixtureExample, Role,
    SceneSimulator, SnrSpec, SourceCorpus, Split, SyntheticCorpus,
};
use ftjnf_kd::trainer::{run_two_stage_kd, train_teacher, Dataset, StageOutcome};
use ftjnf_kd::signal::SAMPLE_RATE;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

type Result<T, E = CliError> = std::result::Result<T, E>;

const STAMP: &str = ".complete.json";
const MODEL_FILE: &str = "model.ftjnf";

fn digest(value: &impl Serialize) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable");
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Decides whether a step must run. Completed outputs from the same inputs
/// are kept; outputs from other inputs need `overwrite`.
fn begin(dir: &Path, key: &str, overwrite: bool) -> Result<bool> {
    let stamp = dir.join(STAMP);
    if let Ok(text) = fs::read_to_string(&stamp) {
        let done: serde_json::Value = serde_json::from_str(&text).unwrap_or_default();
        if done["inputs"] == key && !overwrite {
            log::info!("{} is complete, skipping", dir.display());
            return Ok(false);
        }
        if !overwrite {
            return Err(CliError::Config(format!(
                "{} holds results of different settings; pass --overwrite to replace them",
                dir.display()
            )));
        }
    }
    if overwrite && dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(true)
}

fn finish(dir: &Path, key: &str) -> Result<()> {
    write_json(&dir.join(STAMP), &serde_json::json!({ "inputs": key }))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(value).map_err(ftjnf_kd::Error::from)?;
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|_| CliError::Missing(format!("{} not found", path.display())))?;
    Ok(serde_json::from_slice(&bytes).map_err(ftjnf_kd::Error::from)?)
}

/// Stores the effective configuration next to the outputs.
pub fn write_run_config(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::io(&cfg.out_dir, e))?;
    let path = cfg.out_dir.join("run_config.toml");
    fs::write(&path, cfg.to_toml()).map_err(|e| CliError::io(&path, e))
}

fn data_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("data")
}

fn teacher_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("teacher")
}

fn student_dir(cfg: &RunConfig, preset: SizePreset, kd: &str) -> PathBuf {
    cfg.out_dir.join("students").join(format!("{preset}_{kd}"))
}

fn simulator(cfg: &RunConfig) -> Result<SceneSimulator> {
    Ok(SceneSimulator::new(cfg.geometry.clone(), cfg.scene.clone())?)
}

fn corpus(cfg: &RunConfig) -> Result<Box<dyn SourceCorpus>> {
    if cfg.synthetic {
        return Ok(Box::new(SyntheticCorpus::default()));
    }
    let mut records = Vec::new();
    let manifests = [
        (&cfg.paths.speech_manifest, Role::Speech),
        (&cfg.paths.noise_manifest, Role::Noise),
        (&cfg.paths.rir_manifest, Role::Rir),
    ];
    for (path, _) in &manifests {
        if let Some(p) = path {
            records.extend(read_manifest(p)?);
        }
    }
    let corpus = FileCorpus::new(records);
    for (_, role) in manifests {
        if !corpus.has(role) {
            return Err(CliError::Config(format!(
                "no {} manifest entries; set paths.{}_manifest or pass --synthetic",
                format!("{role:?}").to_lowercase(),
                format!("{role:?}").to_lowercase()
            )));
        }
    }
    Ok(Box::new(corpus))
}

/// One rendered example in a split manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ExampleEntry {
    path: PathBuf,
    seed: u64,
    snr_db: f64,
}

fn write_split(dir: &Path, name: &str, examples: &[(String, MixtureExample)], cfg: &RunConfig) -> Result<()> {
    let mut entries = Vec::new();
    for (rel, ex) in examples {
        save_example(&dir.join(rel), ex, &cfg.geometry)?;
        entries.push(ExampleEntry {
            path: PathBuf::from(rel),
            seed: ex.seed,
            snr_db: ex.snr_db,
        });
    }
    write_jsonl(&dir.join(format!("{name}.jsonl")), &entries)?;
    Ok(())
}

fn read_split(dir: &Path, name: &str) -> Result<Vec<(ExampleEntry, MixtureExample)>> {
    let path = dir.join(format!("{name}.jsonl"));
    let text = fs::read_to_string(&path).map_err(|_| {
        CliError::Missing(format!("{} not found; run `simulate` first", path.display()))
    })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let entry: ExampleEntry = serde_json::from_str(l).map_err(ftjnf_kd::Error::from)?;
            let ex = load_example(&dir.join(&entry.path))?;
            Ok((entry, ex))
        })
        .collect()
}

fn simulate_key(cfg: &RunConfig) -> String {
    digest(&serde_json::json!({
        "seed": cfg.seed,
        "synthetic": cfg.synthetic,
        "paths": [&cfg.paths.speech_manifest, &cfg.paths.noise_manifest, &cfg.paths.rir_manifest],
        "data": cfg.data,
        "geometry": cfg.geometry,
        "scene": cfg.scene,
        "snr_grid": cfg.protocol.snr_grid,
        "examples_per_snr": cfg.protocol.examples_per_snr,
        "test_seconds": cfg.protocol.example_seconds,
    }))
}

/// Renders train, validation and per-SNR test examples.
pub fn simulate(cfg: &RunConfig, overwrite: bool) -> Result<()> {
    let dir = data_dir(cfg);
    let key = simulate_key(cfg);
    if !begin(&dir, &key, overwrite)? {
        return Ok(());
    }
    let sim = simulator(cfg)?;
    let corpus = corpus(cfg)?;
    let len = (cfg.data.example_seconds * SAMPLE_RATE as f64).round() as usize;
    for (split, count) in [(Split::Train, cfg.data.train_examples), (Split::Val, cfg.data.val_examples)] {
        let ex = generate_examples(&sim, corpus.as_ref(), split, "examples", count, len, cfg.data.snr(), cfg.seed)?;
        let named: Vec<(String, MixtureExample)> =
            ex.into_iter().enumerate().map(|(i, e)| (format!("{split}/{i:05}"), e)).collect();
        write_split(&dir, &split.to_string(), &named, cfg)?;
        log::info!("wrote {} {split} examples", named.len());
    }
    let test_len = (cfg.protocol.example_seconds * SAMPLE_RATE as f64).round() as usize;
    let mut named = Vec::new();
    for &snr in &cfg.protocol.snr_grid {
        let ex = generate_examples(
            &sim,
            corpus.as_ref(),
            Split::Test,
            &format!("snr{snr}"),
            cfg.protocol.examples_per_snr,
            test_len,
            SnrSpec::Fixed(snr),
            cfg.seed,
        )?;
        named.extend(ex.into_iter().enumerate().map(|(i, e)| (format!("test/snr{snr}/{i:05}"), e)));
    }
    write_split(&dir, "test", &named, cfg)?;
    log::info!("wrote {} test examples", named.len());
    finish(&dir, &key)?;
    println!("simulated data in {}", dir.display());
    Ok(())
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let dir = data_dir(cfg);
    Ok(Dataset {
        train: read_split(&dir, "train")?.into_iter().map(|p| p.1).collect(),
        val: read_split(&dir, "val")?.into_iter().map(|p| p.1).collect(),
    })
}

fn load_test_set(cfg: &RunConfig) -> Result<TestSet> {
    let mut buckets: Vec<(f64, Vec<MixtureExample>)> = Vec::new();
    for (entry, ex) in read_split(&data_dir(cfg), "test")? {
        match buckets.iter_mut().find(|(s, _)| *s == entry.snr_db) {
            Some((_, v)) => v.push(ex),
            None => buckets.push((entry.snr_db, vec![ex])),
        }
    }
    Ok(TestSet { buckets })
}

fn data_key(cfg: &RunConfig) -> Result<String> {
    let stamp: serde_json::Value = read_json(&data_dir(cfg).join(STAMP))
        .map_err(|_| CliError::Missing("no simulated data; run `simulate` first".into()))?;
    Ok(stamp["inputs"].as_str().unwrap_or_default().to_string())
}

#[derive(Debug, Serialize, Deserialize)]
struct StageSummary {
    stage: String,
    initial_val_loss: f64,
    best_val_loss: f64,
    best_epoch: usize,
    epochs_run: usize,
    stopped_early: bool,
    engaged: Vec<String>,
}

impl From<&StageOutcome> for StageSummary {
    fn from(o: &StageOutcome) -> Self {
        Self {
            stage: o.stage.clone(),
            initial_val_loss: o.initial_val_loss,
            best_val_loss: o.best_val_loss,
            best_epoch: o.best_epoch,
            epochs_run: o.epochs_run(),
            stopped_early: o.stopped_early,
            engaged: o.engaged.iter().map(|(l, f)| format!("{}:{f:?}", l.name())).collect(),
        }
    }
}

fn meta(pairs: &[(&str, serde_json::Value)]) -> BTreeMap<String, serde_json::Value> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// Trains the teacher on the hard loss.
pub fn train_teacher_cmd(cfg: &RunConfig, overwrite: bool) -> Result<()> {
    let dir = teacher_dir(cfg);
    let key = digest(&serde_json::json!({
        "data": data_key(cfg)?,
        "preset": cfg.teacher_preset,
        "model": cfg.model,
        "train": cfg.train,
    }));
    if !begin(&dir, &key, overwrite)? {
        return Ok(());
    }
    let data = load_dataset(cfg)?;
    let mut tcfg = cfg.train.clone();
    tcfg.checkpoint_dir = Some(dir.clone());
    let out = train_teacher(&cfg.model_config(cfg.teacher_preset), &data, &tcfg)?;
    save_model(
        &out.model,
        &meta(&[("role", "teacher".into()), ("best_epoch", out.best_epoch.into())]),
        &dir.join(MODEL_FILE),
    )?;
    write_json(&dir.join("summary.json"), &StageSummary::from(&out))?;
    finish(&dir, &key)?;
    println!(
        "teacher {}: best validation loss {:.5} at epoch {}",
        cfg.teacher_preset, out.best_val_loss, out.best_epoch
    );
    Ok(())
}

fn teacher_path(cfg: &RunConfig) -> PathBuf {
    cfg.paths.teacher_model.clone().unwrap_or_else(|| teacher_dir(cfg).join(MODEL_FILE))
}

/// Two-stage distillation of the configured student.
pub fn distill(cfg: &RunConfig, overwrite: bool) -> Result<()> {
    let method = cfg.kd_method()?;
    cfg.check_taps(method)?;
    let tpath = teacher_path(cfg);
    if !tpath.exists() {
        return Err(CliError::Missing(format!(
            "teacher model {} not found; run `train-teacher` or set paths.teacher_model",
            tpath.display()
        )));
    }
    let teacher = load_model(&tpath)?.model;
    let kd_name = method.map_or("none".to_string(), |m| m.to_string());
    let dir = student_dir(cfg, cfg.preset, &kd_name);
    let key = digest(&serde_json::json!({
        "data": data_key(cfg)?,
        "teacher": teacher.checksum(),
        "preset": cfg.preset,
        "kd": kd_name,
        "model": cfg.model,
        "train": cfg.train,
    }));
    if !begin(&dir, &key, overwrite)? {
        return Ok(());
    }
    let data = load_dataset(cfg)?;
    let mut tcfg = cfg.train.clone();
    tcfg.checkpoint_dir = Some(dir.clone());
    let out = run_two_stage_kd(&teacher, &cfg.model_config(cfg.preset), method, &data, &tcfg)?;
    save_model(
        &out.student,
        &meta(&[
            ("role", "student".into()),
            ("kd", kd_name.clone().into()),
            ("teacher_checksum", out.teacher_checksum.clone().into()),
        ]),
        &dir.join(MODEL_FILE),
    )?;
    let stages: Vec<StageSummary> = out.stage1.iter().chain(std::iter::once(&out.stage2)).map(StageSummary::from).collect();
    write_json(
        &dir.join("summary.json"),
        &serde_json::json!({ "teacher_checksum": out.teacher_checksum, "stages": stages }),
    )?;
    finish(&dir, &key)?;
    println!(
        "student {} with KD {kd_name}: best hard validation loss {:.5}",
        cfg.preset, out.stage2.best_val_loss
    );
    Ok(())
}

/// A model with a report label.
struct Named {
    label: String,
    model: FtJnfModel,
}

impl MaskModel for Named {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn input_compression(&self) -> Option<f64> {
        self.model.config().input_compression
    }

    fn mask(&self, features: &Features<f32>) -> ftjnf_kd::Result<ComplexMask> {
        MaskModel::mask(&self.model, features)
    }
}

fn load_named(path: &Path, label: String) -> Result<Option<Named>> {
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(Named {
        label,
        model: load_model(path)?.model,
    }))
}

fn eval_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("eval")
}

/// Runs the SNR sweep over every trained model and the size sweep at the
/// configured SNR.
pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let test = load_test_set(cfg)?;
    let dir = eval_dir(cfg);
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let opts = SweepOptions {
        pesq: cfg.pesq_adapter.as_ref().map(PesqAdapter::new),
    };
    if opts.pesq.is_none() {
        println!("no PESQ adapter configured; PESQ is skipped");
    }

    let teacher = load_named(&teacher_path(cfg), format!("teacher {}", cfg.teacher_preset))?;
    let mut students: Vec<(SizePreset, String, Named)> = Vec::new();
    for &preset in &cfg.sweep.presets {
        for method in &cfg.sweep.methods {
            let kd = KdMethod::parse_optional(method)?.map_or("none".to_string(), |m| m.to_string());
            let path = student_dir(cfg, preset, &kd).join(MODEL_FILE);
            if let Some(m) = load_named(&path, format!("{preset} {kd}"))? {
                students.push((preset, kd, m));
            }
        }
    }
    let models: Vec<&dyn MaskModel> = teacher
        .iter()
        .map(|t| t as &dyn MaskModel)
        .chain(students.iter().map(|s| &s.2 as &dyn MaskModel))
        .collect();
    if models.is_empty() {
        return Err(CliError::Missing(format!(
            "no trained models under {}; run `train-teacher` or `distill` first",
            cfg.out_dir.display()
        )));
    }

    let rows_path = dir.join("snr.jsonl");
    let mut rows_file = fs::File::create(&rows_path).map_err(|e| CliError::io(&rows_path, e))?;
    let mut on_row = |r: &MetricResult| -> ftjnf_kd::Result<()> {
        let mut line = serde_json::to_vec(r)?;
        line.push(b'\n');
        rows_file.write_all(&line).map_err(|e| ftjnf_kd::Error::Adapter(e.to_string()))
    };
    let snr = run_snr_sweep(&models, &test, &cfg.protocol, &opts, &mut on_row)?;
    write_json(&dir.join("snr_report.json"), &snr)?;

    let teacher_cell = SizeCell {
        config: cfg.model_config(cfg.teacher_preset),
        method: None,
        model: teacher.as_ref().map(|t| t as &dyn MaskModel),
    };
    let mut cells = Vec::new();
    for &preset in &cfg.sweep.presets {
        for method in &cfg.sweep.methods {
            let kd = KdMethod::parse_optional(method)?;
            let name = kd.map_or("none".to_string(), |m| m.to_string());
            let model = students
                .iter()
                .find(|(p, k, _)| *p == preset && *k == name)
                .map(|s| &s.2 as &dyn MaskModel);
            cells.push(SizeCell {
                config: cfg.model_config(preset),
                method: kd,
                model,
            });
        }
    }
    let size = run_size_sweep(&cells, &teacher_cell, &test, cfg.sweep.snr_db, &cfg.protocol, &opts)?;
    write_json(&dir.join("size_report.json"), &size)?;
    write_jsonl(&dir.join("size.jsonl"), &size.rows)?;
    println!("{}", snr_summary(&snr));
    println!("evaluation written to {}", dir.display());
    Ok(())
}

/// Turns stored evaluation results into text and SVG plots.
pub fn report(cfg: &RunConfig) -> Result<()> {
    let eval = eval_dir(cfg);
    let snr: SnrReport = read_json(&eval.join("snr_report.json"))?;
    let size: SizeReport = read_json(&eval.join("size_report.json"))?;
    let dir = cfg.out_dir.join("report");
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut text = snr_summary(&snr);
    for metric in ["si_sdr", "pesq"] {
        if !snr.rows.iter().any(|r| r.metric == metric) {
            continue;
        }
        plot_snr(&snr, metric, &dir.join(format!("snr_{metric}.svg")))?;
        plot_size(&size, metric, &dir.join(format!("size_{metric}.svg")))?;
        text.push('\n');
        text.push_str(&size_summary(&size, metric));
    }
    let path = dir.join("summary.txt");
    fs::write(&path, &text).map_err(|e| CliError::io(&path, e))?;
    print!("{text}");
    println!("report written to {}", dir.display());
    Ok(())
}

/// One row of the parameter/MAC table.
#[derive(Debug, Clone, Serialize)]
pub struct CountRow {
    pub preset: SizePreset,
    pub f_hidden: usize,
    pub t_hidden: usize,
    pub params: usize,
    pub published_params: f64,
    pub params_delta_pct: f64,
    pub gmacs_per_frame: f64,
    pub published_gmacs: f64,
}

pub fn count_rows(cfg: &RunConfig, only: Option<SizePreset>) -> Result<Vec<CountRow>> {
    let bins = cfg.stft_frame_length / 2 + 1;
    SizePreset::ALL
        .into_iter()
        .filter(|p| only.is_none_or(|o| o == *p))
        .map(|p| {
            let mc = cfg.model_config(p);
            let params = count_params(&mc)?;
            let published = p.published();
            Ok(CountRow {
                preset: p,
                f_hidden: mc.f_hidden,
                t_hidden: mc.t_hidden,
                params,
                published_params: published.params_k * 1000.0,
                params_delta_pct: 100.0 * (params as f64 / (published.params_k * 1000.0) - 1.0),
                gmacs_per_frame: count_macs_per_frame(&mc, bins)? as f64 / 1e9,
                published_gmacs: published.gmacs,
            })
        })
        .collect()
}

pub fn count_table(rows: &[CountRow]) -> String {
    let mut s = format!(
        "{:<6} {:>5} {:>5} {:>10} {:>10} {:>8} {:>12} {:>10}\n",
        "preset", "F", "T", "params", "table", "delta", "GMAC/frame", "table GMAC"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<6} {:>5} {:>5} {:>10} {:>10.0} {:>7.2}% {:>12.5} {:>10.2}\n",
            r.preset.to_string(),
            r.f_hidden,
            r.t_hidden,
            r.params,
            r.published_params,
            r.params_delta_pct,
            r.gmacs_per_frame,
            r.published_gmacs
        ));
    }
    s
}

pub fn count_params_cmd(cfg: &RunConfig, only: Option<SizePreset>) -> Result<()> {
    print!("{}", count_table(&count_rows(cfg, only)?));
    Ok(())
}
