use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{
    Cli, Command, EvalArgs, GradcheckArgs, LocalizeArgs, LocalizerFlags, ModelFlags, RunConfig, StatsArgs,
    SynthArgs, TrainArgs,
};
use crate::datamodel::{
    compute_stats, load_manifest, parse_annotation_csv, parse_duration_csv, read_feature_file, split_records,
    ColumnMap, SegmentRecord, Split,
};
use crate::error::{Error, Result};
use crate::evaluator::evaluate;
use crate::localizer::{write_predictions, PredictionRecord};
use crate::model::forward::{AUDIO_STREAM, VISUAL_STREAM};
use crate::model::{check_model_gradients, load_checkpoint, save_checkpoint, GradCheckSetup, Variant};
use crate::model::gradcheck::GRADCHECK_TOL;
use crate::synthgen::{generate, localize_samples};
use crate::trainer::{load_samples, train};

/// Runs one parsed command line, writing human-readable output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.synth.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::config("--threads must be at least 1"));
        }
        // a second call in the same process keeps the first pool, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Synth(a) => cmd_synth(cfg, a, out),
        Command::Train(a) => cmd_train(cfg, a, out),
        Command::Eval(a) => cmd_eval(cfg, a, out),
        Command::Localize(a) => cmd_localize(cfg, a, out),
        Command::Stats(a) => cmd_stats(a, out),
        Command::Gradcheck(a) => cmd_gradcheck(cfg, cli.seed.unwrap_or(0), a, out),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn say(out: &mut dyn Write, text: impl AsRef<str>) -> Result<()> {
    writeln!(out, "{}", text.as_ref()).map_err(io_err(Path::new("<stdout>")))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

fn cmd_synth(mut cfg: RunConfig, a: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let s = &mut cfg.synth;
    if let Some(n) = a.n {
        s.n_segments = n;
    }
    if let Some(v) = &a.splits {
        let counts: [usize; 3] = v
            .as_slice()
            .try_into()
            .map_err(|_| Error::config(format!("--splits needs TRAIN,VAL,TEST, got {} values", v.len())))?;
        s.split_counts = Some(counts);
    }
    s.positive_fraction = a.positive_fraction.unwrap_or(s.positive_fraction);
    s.amplitude = a.amplitude.unwrap_or(s.amplitude);
    s.duration_s = a.duration.unwrap_or(s.duration_s);
    s.audio_dim = a.audio_dim.unwrap_or(s.audio_dim);
    s.visual_dim = a.visual_dim.unwrap_or(s.visual_dim);
    cfg.validate()?;

    let data = generate(&cfg.synth, &a.out)?;
    let counts = cfg.synth.counts();
    let positives = data.segments.iter().filter(|s| s.burst.is_some()).count();
    say(
        out,
        format!(
            "wrote {} segments (train {}, val {}, test {}; {} positive) to {}",
            data.segments.len(),
            counts[0],
            counts[1],
            counts[2],
            positives,
            a.out.display()
        ),
    )
}

fn apply_model_flags(cfg: &mut RunConfig, f: &ModelFlags) {
    let m = &mut cfg.model;
    if let Some(v) = f.variant {
        *m = m.clone().with_variant(v);
    }
    m.pooling = f.pooling.unwrap_or(m.pooling);
    m.fusion = f.fusion.unwrap_or(m.fusion);
    m.modalities = f.modalities.unwrap_or(m.modalities);
    m.hidden = f.hidden.unwrap_or(m.hidden);
    m.dropout_p = f.dropout.unwrap_or(m.dropout_p);
    m.focal_gamma = f.gamma.unwrap_or(m.focal_gamma);
    let t = &mut cfg.train;
    t.learning_rate = f.lr.unwrap_or(t.learning_rate);
    t.batch_size = f.batch_size.unwrap_or(t.batch_size);
    t.max_epochs = f.epochs.unwrap_or(t.max_epochs);
    t.early_stop_patience = f.patience.unwrap_or(t.early_stop_patience);
    if f.clip_norm.is_some() {
        t.clip_norm = f.clip_norm;
    }
}

fn apply_localizer_flags(cfg: &mut RunConfig, f: &LocalizerFlags) {
    cfg.localizer.tau = f.tau.unwrap_or(cfg.localizer.tau);
    cfg.localizer.n_bins = f.bins.unwrap_or(cfg.localizer.n_bins);
}

/// Audio and visual feature widths of the first record's feature file.
pub fn infer_feature_dims(records: &[SegmentRecord]) -> Result<(Option<usize>, Option<usize>)> {
    let Some(first) = records.first() else {
        return Ok((None, None));
    };
    let streams = read_feature_file(&first.feature_path)?;
    let dim = |name: &str| streams.iter().find(|s| s.name == name).map(|s| s.dim());
    Ok((dim(AUDIO_STREAM), dim(VISUAL_STREAM)))
}

fn cmd_train(mut cfg: RunConfig, a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    apply_model_flags(&mut cfg, &a.model);
    let records = load_manifest(&a.manifest)?;
    let (train_recs, val_recs) = (split_records(&records, Split::Train), split_records(&records, Split::Val));
    let (da, dv) = infer_feature_dims(&train_recs)?;
    cfg.model.d_audio = da.unwrap_or(cfg.model.d_audio);
    cfg.model.d_visual = dv.unwrap_or(cfg.model.d_visual);
    cfg.validate()?;
    if train_recs.is_empty() || val_recs.is_empty() {
        return Err(Error::contract(format!(
            "{} has {} train and {} val segments; both splits are required",
            a.manifest.display(),
            train_recs.len(),
            val_recs.len()
        )));
    }

    let train_set = load_samples(&train_recs, &cfg.model)?;
    let val_set = load_samples(&val_recs, &cfg.model)?;
    let mut log_err = Ok(());
    let outcome = train(&train_set, &val_set, &cfg.model, &cfg.train, |e| {
        if log_err.is_ok() {
            log_err = say(
                out,
                format!(
                    "epoch {:>3}  train_loss {:.5}  val_loss {:.5}  val_f1 {:.3}  {:.1}s",
                    e.epoch, e.train_loss, e.val_loss, e.val_f1, e.elapsed_s
                ),
            );
        }
    })?;
    log_err?;
    save_checkpoint(&a.out, &outcome.config, &outcome.params)?;
    let report_path = a.report.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".report.json");
        PathBuf::from(p)
    });
    write_json(&report_path, &outcome.report)?;
    let r = &outcome.report;
    say(
        out,
        format!(
            "best epoch {} (val_loss {:.5}), stopped by {:?}; checkpoint {}, report {}",
            r.best_epoch,
            r.best_val_loss,
            r.stop_reason,
            a.out.display(),
            report_path.display()
        ),
    )
}

fn predict_split(
    cfg: &mut RunConfig,
    checkpoint: &Path,
    manifest: &Path,
    split: Split,
    flags: &LocalizerFlags,
) -> Result<(Vec<SegmentRecord>, Vec<PredictionRecord>)> {
    apply_localizer_flags(cfg, flags);
    cfg.localizer.validate()?;
    let ckpt = load_checkpoint(checkpoint)?;
    let records = split_records(&load_manifest(manifest)?, split);
    if records.is_empty() {
        return Err(Error::contract(format!("{} has no {split} segments", manifest.display())));
    }
    let samples = load_samples(&records, &ckpt.config)?;
    let predictions = localize_samples(&ckpt.params, &ckpt.config, &samples, &cfg.localizer)?;
    Ok((records, predictions))
}

fn cmd_eval(mut cfg: RunConfig, a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let (records, predictions) = predict_split(&mut cfg, &a.checkpoint, &a.manifest, a.split, &a.localizer)?;
    let report = evaluate(&records, &predictions)?;
    let name = a.name.clone().unwrap_or_else(|| {
        a.checkpoint
            .file_stem()
            .map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned())
    });
    if let Some(path) = &a.json {
        write_json(path, &report)?;
    }
    say(out, report.render_table(&name))
}

fn cmd_localize(mut cfg: RunConfig, a: &LocalizeArgs, out: &mut dyn Write) -> Result<()> {
    let (_, predictions) = predict_split(&mut cfg, &a.checkpoint, &a.manifest, a.split, &a.localizer)?;
    write_predictions(&a.out, &predictions)?;
    let positives = predictions.iter().filter(|p| p.label == 1).count();
    say(
        out,
        format!(
            "wrote {} predictions ({} positive) to {}",
            predictions.len(),
            positives,
            a.out.display()
        ),
    )
}

fn cmd_stats(a: &StatsArgs, out: &mut dyn Write) -> Result<()> {
    let columns = ColumnMap::default().with_overrides(a.columns.iter().map(String::as_str))?;
    let mut events = Vec::new();
    for path in &a.csv {
        let parsed = parse_annotation_csv(path, &columns, a.strict)?;
        for e in &parsed.row_errors {
            say(out, format!("warning: {}:{}: {}", path.display(), e.line, e.msg))?;
        }
        events.extend(parsed.events);
    }
    if events.is_empty() {
        return say(out, "no events: the annotation files contain no valid event rows");
    }
    let durations = a.durations.as_ref().map(parse_duration_csv).transpose()?;
    let stats = compute_stats(&events, durations.as_ref())?;
    if let Some(path) = &a.json {
        write_json(path, &stats)?;
    }
    say(out, stats.render_table())
}

fn cmd_gradcheck(cfg: RunConfig, seed: u64, a: &GradcheckArgs, out: &mut dyn Write) -> Result<()> {
    cfg.model.validate()?;
    let variants: Vec<Variant> = if a.all {
        Variant::ALL.to_vec()
    } else {
        vec![a.variant.unwrap_or(Variant::Full)]
    };
    let setup = GradCheckSetup::default();
    let mut failed = Vec::new();
    for v in variants {
        let base = cfg.model.clone().with_variant(v);
        let report = check_model_gradients(&base, &setup, seed, a.corrupt.as_deref())?;
        let worst = report.worst().expect("model has parameters");
        let verdict = if report.passes(GRADCHECK_TOL) { "PASS" } else { "FAIL" };
        say(
            out,
            format!(
                "{verdict} {v:<26} worst rel err {:.3e} at {}[{}] (analytic {:.6e}, numeric {:.6e})",
                worst.max_rel_err, worst.name, worst.worst_index, worst.analytic, worst.numeric
            ),
        )?;
        if verdict == "FAIL" {
            failed.push(format!("{v} ({})", worst.name));
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::GradCheck(format!(
            "tolerance {GRADCHECK_TOL:e} exceeded by {}",
            failed.join(", ")
        )))
    }
}
