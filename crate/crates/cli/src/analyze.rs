use std::collections::BTreeMap;
use std::fs::File;
use std::io;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Subcommand;
use serde_json::json;
use studybench_core::aggregation::{self, aggregate_categories, write_categories_csv, Category};
use studybench_core::factors::{self, Factor, StratumSpec};
use studybench_core::study::accepted_ids;
use studybench_core::validation::{self, write_verdicts_csv};
use studybench_core::{seed, stats, ImageId, StudyConfig};

use crate::{accepted_scores, load_snapshot, write_json};

#[derive(Subcommand)]
pub enum AnalyzeCommand {
    /// Verdict table as CSV: session_id,outcome,rules,diffs,intra_srocc.
    Validate {
        #[arg(long)]
        export: PathBuf,
        /// Per-rule counts on stderr.
        #[arg(long)]
        summary: bool,
    },
    /// MOS table as CSV over accepted sessions.
    Mos {
        #[arg(long)]
        export: PathBuf,
    },
    /// Category tallies and consensus tiers from a votes CSV (image_id,category).
    Categories {
        #[arg(long)]
        votes: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Inter-subject, intra-subject and gold-validation blocks as JSON.
    Consistency {
        #[arg(long)]
        export: PathBuf,
        #[arg(long, default_value_t = 25)]
        splits: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// MOS per level of one demographic factor with the others held fixed.
    Factors {
        #[arg(long)]
        export: PathBuf,
        #[arg(long)]
        vary: Factor,
        /// e.g. `age=20-30,device=desktop,distance=15-30in`
        #[arg(long, default_value = "")]
        fix: String,
        /// Comma-separated image ids; every image when omitted.
        #[arg(long, default_value = "")]
        images: String,
        #[arg(long, default_value_t = 5)]
        min_group: usize,
        /// Directory for stratum.csv and summary.json; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat threshold from a pilot CSV (image_id,score).
    Threshold {
        #[arg(long)]
        pilot: PathBuf,
    },
    /// Range and spread of a per-image score file (image_id,mos,std).
    Scores {
        #[arg(long)]
        file: PathBuf,
    },
}

pub fn run(cmd: AnalyzeCommand) -> Result<()> {
    match cmd {
        AnalyzeCommand::Validate { export, summary } => {
            let snap = load_snapshot(&export)?;
            let verdicts = snap.validate()?;
            write_verdicts_csv(io::stdout().lock(), &verdicts)?;
            if summary {
                let accepted = verdicts.iter().filter(|v| v.accepted()).count();
                eprintln!(
                    "{accepted} accepted, {} rejected",
                    verdicts.len() - accepted
                );
                for (rule, n) in validation::rule_counts(&verdicts) {
                    eprintln!("  {}: {n}", rule.as_str());
                }
            }
            Ok(())
        }
        AnalyzeCommand::Mos { export } => {
            let snap = load_snapshot(&export)?;
            let (_, scores) = accepted_scores(&snap)?;
            let table = aggregation::mos_table(&scores, &snap.config)?;
            aggregation::write_mos_csv(io::stdout().lock(), &table)?;
            Ok(())
        }
        AnalyzeCommand::Categories { votes, config } => categories(&votes, config.as_deref()),
        AnalyzeCommand::Consistency {
            export,
            splits,
            seed,
        } => consistency(&export, splits, seed),
        AnalyzeCommand::Factors {
            export,
            vary,
            fix,
            images,
            min_group,
            out,
        } => factor_analysis(&export, vary, &fix, &images, min_group, out.as_deref()),
        AnalyzeCommand::Threshold { pilot } => {
            let mut by_image: BTreeMap<ImageId, Vec<f64>> = BTreeMap::new();
            let mut rdr =
                csv::Reader::from_path(&pilot).with_context(|| pilot.display().to_string())?;
            for rec in rdr.records() {
                let rec = rec?;
                let score: f64 = rec.get(1).unwrap_or("").trim().parse()?;
                by_image
                    .entry(ImageId::new(rec.get(0).unwrap_or("").trim()))
                    .or_default()
                    .push(score);
            }
            let t = validation::derive_repeat_threshold(&by_image)?;
            println!("{t}");
            Ok(())
        }
        AnalyzeCommand::Scores { file } => {
            let f = File::open(&file).with_context(|| file.display().to_string())?;
            let summary = aggregation::summarize_score_file(f).map_err(anyhow::Error::msg)?;
            write_json(None, &summary)
        }
    }
}

fn categories(votes: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = StudyConfig::load_with_env(config)?;
    let mut by_image: BTreeMap<ImageId, Vec<Category>> = BTreeMap::new();
    let mut rdr = csv::Reader::from_path(votes).with_context(|| votes.display().to_string())?;
    for rec in rdr.records() {
        let rec = rec?;
        let cat: Category = rec
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(anyhow::Error::msg)?;
        by_image
            .entry(ImageId::new(rec.get(0).unwrap_or("").trim()))
            .or_default()
            .push(cat);
    }
    let results = by_image
        .iter()
        .map(|(id, v)| aggregate_categories(id, v, &cfg))
        .collect::<Result<Vec<_>, _>>()?;
    write_categories_csv(io::stdout().lock(), &results)?;
    Ok(())
}

fn consistency(export: &Path, splits: usize, seed: u64) -> Result<()> {
    let snap = load_snapshot(export)?;
    let (verdicts, scores) = accepted_scores(&snap)?;
    let split_half =
        stats::split_half_consistency(&scores, splits, seed::derive_str(seed, "split-half"))?;

    let intra: Vec<f64> = verdicts
        .iter()
        .filter(|v| v.accepted())
        .filter_map(|v| v.intra_srocc)
        .collect();

    let accepted = accepted_ids(&verdicts);
    let gold = aggregation::gold_scores(&snap.sessions, &accepted);
    let lab = snap.gold_lab_mos();
    let (crowd, truth): (Vec<f64>, Vec<f64>) = gold
        .iter()
        .filter_map(|(id, s)| lab.get(id).map(|l| (stats::mean(s), *l)))
        .unzip();
    let gold_block = match stats::gold_validation(&crowd, &truth) {
        Ok(g) => json!({
            "n_images": g.n,
            "pooled_srocc": g.srocc,
            "per_session_mean_srocc": if intra.is_empty() { None } else { Some(stats::mean(&intra)) },
            "mean_abs_diff": g.mean_abs_diff,
            "paired_t": g.ttest.t(),
            "p_two_tailed": g.ttest.p_two_tailed(),
            "significant_at_0_05": g.ttest.p_two_tailed() <= 0.05,
        }),
        Err(e) => json!({ "error": e.to_string() }),
    };

    let report = json!({
        "inter_subject": {
            "splits": splits,
            "mean_srocc": split_half.mean_srocc,
            "per_split": split_half.per_split,
            "images": scores.len(),
        },
        "intra_subject": {
            "sessions": intra.len(),
            "median_srocc": stats::median_lower(&intra),
        },
        "gold_validation": gold_block,
    });
    write_json(None, &report)
}

fn factor_analysis(
    export: &Path,
    vary: Factor,
    fix: &str,
    images: &str,
    min_group: usize,
    out: Option<&Path>,
) -> Result<()> {
    let snap = load_snapshot(export)?;
    let verdicts = snap.validate()?;
    let accepted = accepted_ids(&verdicts);
    let joined = factors::join_ratings(&snap.sessions, &accepted);
    let image_ids: Vec<ImageId> = images
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(ImageId::new)
        .collect();
    let spec = StratumSpec::new(vary, StratumSpec::parse_conditions(fix)?, image_ids)?;
    let result = factors::stratify(&joined, &spec, &snap.config, min_group)?;
    if result.cells.is_empty() {
        bail!("no ratings match the requested stratum");
    }
    let summary = factors::summary_table(std::slice::from_ref(&result), None)?;
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            factors::write_stratum_csv(File::create(dir.join("stratum.csv"))?, &result)?;
            write_json(
                Some(&dir.join("summary.json")),
                &json!({ "result": result, "summary": summary }),
            )?;
            for row in &summary {
                eprintln!(
                    "{} ({}): {} [{}/{} overlapping]",
                    row.factor,
                    row.fixed,
                    row.verdict.as_str(),
                    row.images_overlapping,
                    row.images_compared
                );
            }
            Ok(())
        }
        None => {
            factors::write_stratum_csv(io::stdout().lock(), &result)?;
            write_json(None, &summary)
        }
    }
}
