//! `eval chair`, `eval pope`, `eval winrate`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use shape_core::backend::RemoteClient;
use shape_core::eval::{
    chair_scores, judge_pair, parse_verdict, win_rate, yesno_metrics, JudgeOptions,
    JudgeOutcome,
};

use crate::commands::UsageError;
use crate::config::LoadedConfig;
use crate::persist;

fn write_outputs(out: &Option<PathBuf>, stem: &str, doc: &serde_json::Value, csv: &str) -> Result<()> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let json_path = dir.join(format!("{stem}.json"));
        let mut text = serde_json::to_string_pretty(doc)?;
        text.push('\n');
        std::fs::write(&json_path, text)
            .with_context(|| format!("writing {}", json_path.display()))?;
        let csv_path = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv_path, csv)
            .with_context(|| format!("writing {}", csv_path.display()))?;
    }
    Ok(())
}

pub struct ChairArgs {
    pub records: PathBuf,
    pub vocab: PathBuf,
    pub out: Option<PathBuf>,
}

pub fn chair(args: &ChairArgs) -> Result<()> {
    let records = persist::read_caption_records(&args.records)?;
    let vocab = persist::read_vocabulary(&args.vocab)?;
    let scores = chair_scores(&records, &vocab)?;

    let doc = serde_json::to_value(&scores)?;
    let mut csv = String::from("metric,value\n");
    let _ = writeln!(csv, "chair_i,{}", scores.chair_i);
    let _ = writeln!(csv, "chair_s,{}", scores.chair_s);
    let _ = writeln!(csv, "hallucinated_objects,{}", scores.counts.hallucinated_objects);
    let _ = writeln!(csv, "mentioned_objects,{}", scores.counts.mentioned_objects);
    let _ = writeln!(
        csv,
        "captions_with_hallucination,{}",
        scores.counts.captions_with_hallucination
    );
    let _ = writeln!(csv, "total_captions,{}", scores.counts.total_captions);
    write_outputs(&args.out, "chair", &doc, &csv)?;
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}

pub struct PopeArgs {
    pub records: PathBuf,
    pub out: Option<PathBuf>,
}

pub fn pope(args: &PopeArgs) -> Result<()> {
    let records = persist::read_yesno_records(&args.records)?;
    let metrics = yesno_metrics(&records)?;

    let doc = serde_json::json!({
        "overall": { "accuracy": metrics.overall.accuracy(), "correct": metrics.overall.correct,
                      "total": metrics.overall.total, "unparseable": metrics.overall.unparseable },
        "rand": { "accuracy": metrics.rand.accuracy(), "total": metrics.rand.total },
        "pop": { "accuracy": metrics.pop.accuracy(), "total": metrics.pop.total },
        "adv": { "accuracy": metrics.adv.accuracy(), "total": metrics.adv.total },
    });
    let mut csv = String::from("split,accuracy,correct,total,unparseable\n");
    for (name, tally) in [
        ("overall", metrics.overall),
        ("rand", metrics.rand),
        ("pop", metrics.pop),
        ("adv", metrics.adv),
    ] {
        let _ = writeln!(
            csv,
            "{name},{},{},{},{}",
            tally.accuracy(),
            tally.correct,
            tally.total,
            tally.unparseable
        );
    }
    write_outputs(&args.out, "pope", &doc, &csv)?;
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}

pub struct WinrateArgs {
    pub pairs: Option<PathBuf>,
    pub verdicts: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub no_debias: bool,
    pub out: Option<PathBuf>,
}

pub fn winrate(args: &WinrateArgs) -> Result<()> {
    let outcomes = match (&args.pairs, &args.verdicts) {
        (Some(pairs), None) => judge_pairs(pairs, args)?,
        (None, Some(verdicts)) => load_verdicts(verdicts)?,
        _ => {
            return Err(UsageError(
                "eval winrate needs exactly one of --pairs (judge live) or --verdicts (recorded)"
                    .into(),
            )
            .into())
        }
    };
    let rate = win_rate(&outcomes)?;

    let doc = serde_json::to_value(rate)?;
    let mut csv = String::from("metric,value\n");
    let _ = writeln!(csv, "win,{}", rate.win);
    let _ = writeln!(csv, "tie,{}", rate.tie);
    let _ = writeln!(csv, "loss,{}", rate.loss);
    let _ = writeln!(csv, "counted,{}", rate.counted);
    let _ = writeln!(csv, "unparseable,{}", rate.unparseable);
    write_outputs(&args.out, "winrate", &doc, &csv)?;
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}

fn judge_pairs(pairs_path: &Path, args: &WinrateArgs) -> Result<Vec<JudgeOutcome>> {
    let config_path = args.config.as_ref().ok_or_else(|| {
        UsageError("--config with a remote backend is required for live judging".into())
    })?;
    let LoadedConfig { config, .. } = crate::config::load_config(config_path)?;
    let client = RemoteClient::new(config.backend.remote_config()?)?;
    let pairs: Vec<persist::PairRow> = persist::read_jsonl_records(pairs_path)?;
    let opts = JudgeOptions {
        debias: !args.no_debias,
    };
    pairs
        .iter()
        .map(|p| Ok(judge_pair(&client, &p.question, &p.answer_a, &p.answer_b, opts)?))
        .collect()
}

fn load_verdicts(path: &Path) -> Result<Vec<JudgeOutcome>> {
    let rows: Vec<persist::VerdictRow> = persist::read_jsonl_records(path)?;
    Ok(rows
        .into_iter()
        .map(|row| match parse_verdict(&row.verdict) {
            Some(v) => JudgeOutcome::Verdict(v),
            None => JudgeOutcome::Unparseable(row.verdict),
        })
        .collect())
}
