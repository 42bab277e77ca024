//! Implementations of the pipeline subcommands.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

use relex_core::candidates::{
    apply_negative_cap, dump_candidates, generate_candidates, generate_labeled_corpus,
    stratify_by_csd, LabeledCandidates,
};
use relex_core::corpus::{Corpus, SegmenterConfig};
use relex_core::encoding::{Tokenizer, WordTokenizer};
use relex_core::evaluation::{per_csd_breakdown, render_records, render_table, score, GoldStandard};
use relex_core::inference::{load_predictions_dir, predict, write_predictions};
use relex_core::model::{
    cross_validate, load_bundle, save_bundle, train, ReferenceEncoder, ReferenceEncoderConfig,
    SearchGrid,
};
use relex_core::schema::RelationSchema;

use crate::config::{resolve_schema, usage, EncoderSpec, ExperimentConfig, RawConfig};

fn load_corpus(dir: &Path) -> Result<Corpus> {
    let corpus = Corpus::load_dir(dir, &SegmenterConfig::default())
        .with_context(|| format!("loading corpus from {}", dir.display()))?;
    if corpus.is_empty() {
        anyhow::bail!(relex_core::corpus::CorpusError::Io {
            path: dir.display().to_string(),
            message: "no .txt/.ann document pairs found".into(),
        });
    }
    Ok(corpus)
}

fn write_provenance(dir: &Path, command: &str, raw: &RawConfig) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let body = format!(
        "command = {command}\nversion = {}\n{}",
        env!("CARGO_PKG_VERSION"),
        raw.snapshot()
    );
    std::fs::write(dir.join("provenance.txt"), body)
        .with_context(|| format!("writing provenance under {}", dir.display()))?;
    Ok(())
}

fn labeled_candidates(
    corpus: &Corpus,
    schema: &RelationSchema,
    config: &ExperimentConfig,
    max_csd: usize,
) -> Result<LabeledCandidates> {
    let mut labeled = generate_labeled_corpus(corpus, schema, max_csd)?;
    if let Some(cap) = config.negative_cap {
        labeled.set = apply_negative_cap(labeled.set, cap);
    }
    Ok(labeled)
}

/// Per-CSD positive/negative tallies plus corpus totals.
fn statistics_table(corpus: &Corpus, labeled: &LabeledCandidates) -> String {
    let gold_total: usize = corpus.docs().map(|d| d.gold_relations.len()).sum();
    let mut out = String::new();
    let _ = writeln!(out, "notes\t{}", corpus.len());
    let _ = writeln!(out, "gold_relations\t{}", gold_total);
    let _ = writeln!(out, "candidates\t{}", labeled.set.pairs.len());
    let _ = writeln!(out, "skipped_gold\t{}", labeled.skipped.len());
    let _ = writeln!(out, "csd\tpositives\tnegatives");
    for (csd, stratum) in stratify_by_csd(&labeled.set) {
        let positives = stratum.positives();
        let _ = writeln!(out, "{csd}\t{positives}\t{}", stratum.pairs.len() - positives);
    }
    out
}

pub fn cmd_candidates(config: &ExperimentConfig, raw: &RawConfig) -> Result<()> {
    let corpus = load_corpus(config.require_corpus_dir()?)?;
    let schema = resolve_schema(&config.schema)?;
    let labeled = labeled_candidates(&corpus, &schema, config, config.train.max_csd)?;

    let out_dir = config.require_output_dir()?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("candidates.tsv"), dump_candidates(&labeled.set))?;
    let stats = statistics_table(&corpus, &labeled);
    std::fs::write(out_dir.join("statistics.tsv"), &stats)?;
    if !labeled.skipped.is_empty() {
        let mut lines = String::new();
        for s in &labeled.skipped {
            let _ = writeln!(
                lines,
                "{}\t{}\t{}\t{}\t{:?}",
                s.doc_id, s.relation.arg1, s.relation.arg2, s.relation.category, s.reason
            );
        }
        std::fs::write(out_dir.join("skipped_gold.tsv"), lines)?;
    }
    write_provenance(out_dir, "candidates", raw)?;
    print!("{stats}");
    Ok(())
}

fn build_reference_encoder(
    spec: &EncoderSpec,
    tokenizer: &WordTokenizer,
    max_len: usize,
    seed: u64,
) -> Result<ReferenceEncoder> {
    match spec {
        EncoderSpec::Reference { layers, heads, hidden } => {
            Ok(ReferenceEncoder::new(ReferenceEncoderConfig {
                layers: *layers,
                heads: *heads,
                hidden: *hidden,
                feed_forward: 4 * hidden,
                vocab_size: tokenizer.vocab_size(),
                max_positions: max_len.max(16),
                seed,
            })?)
        }
        EncoderSpec::Pretrained(id) => Err(usage(format!(
            "encoder {id:?}: pretrained weights are supplied out of band via the library's \
             Encoder trait; this binary ships the built-in reference encoder \
             (reference:<layers>x<heads>x<hidden>)"
        ))),
    }
}

pub fn cmd_train(config: &ExperimentConfig, raw: &RawConfig, use_grid: bool) -> Result<()> {
    let corpus = load_corpus(config.require_corpus_dir()?)?;
    let schema = resolve_schema(&config.schema)?;
    let labeled = labeled_candidates(&corpus, &schema, config, config.train.max_csd)?;
    let tokenizer = WordTokenizer::train(
        corpus.docs().map(|d| d.text.as_str()),
        config.lowercase,
        config.min_count,
    );
    let encoder = build_reference_encoder(
        &config.encoder,
        &tokenizer,
        config.train.max_len,
        config.train.seed,
    )?;

    let bundle_dir = config.require_bundle_dir()?;
    let mut train_config = config.train.clone();
    let mut cv_lines = String::new();
    if use_grid {
        let grid = SearchGrid {
            epochs: config.epochs_grid.clone().unwrap_or_else(|| SearchGrid::standard().epochs),
            batch_sizes: config
                .batch_grid
                .clone()
                .unwrap_or_else(|| SearchGrid::standard().batch_sizes),
        };
        let outcome = cross_validate(
            &labeled.set,
            &corpus,
            &encoder,
            &tokenizer,
            &schema,
            &train_config,
            &grid,
        )?;
        let _ = writeln!(cv_lines, "epochs\tbatch_size\tmean_f1\tfold_f1");
        for cell in &outcome.table {
            let folds = cell
                .fold_f1
                .iter()
                .map(|f| format!("{f:.4}"))
                .collect::<Vec<_>>()
                .join(",");
            let _ = writeln!(
                cv_lines,
                "{}\t{}\t{:.4}\t{}",
                cell.epochs, cell.batch_size, cell.mean_f1, folds
            );
        }
        println!(
            "cross-validation selected epochs={} batch_size={}",
            outcome.best.epochs, outcome.best.batch_size
        );
        train_config = outcome.best;
    }

    let outcome = train(&labeled.set, &corpus, &encoder, &tokenizer, &schema, &train_config)?;
    save_bundle(&outcome.bundle, &tokenizer, bundle_dir)?;
    if !cv_lines.is_empty() {
        std::fs::write(bundle_dir.join("cv_table.tsv"), cv_lines)?;
    }
    let mut report = String::new();
    for group in &outcome.report.groups {
        let losses = group
            .epoch_losses
            .iter()
            .map(|l| format!("{l:.6}"))
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(
            report,
            "{}\ttrained={}\tpositives={}\tnegatives={}\tepoch_loss={losses}",
            group.key, group.trained, group.positives, group.negatives
        );
    }
    std::fs::write(bundle_dir.join("train_report.tsv"), &report)?;
    write_provenance(bundle_dir, "train", raw)?;
    print!("{report}");
    println!("bundle written to {}", bundle_dir.display());
    Ok(())
}

pub fn cmd_predict(config: &ExperimentConfig, raw: &RawConfig) -> Result<()> {
    let corpus = load_corpus(config.require_corpus_dir()?)?;
    let schema = resolve_schema(&config.schema)?;
    let (bundle, tokenizer) = load_bundle(config.require_bundle_dir()?)?;
    let bundle_config = bundle
        .config()
        .ok_or_else(|| usage("bundle contains no trained groups"))?;
    let max_csd = bundle_config.max_csd;

    let mut pairs = Vec::new();
    for doc in corpus.docs() {
        pairs.extend(generate_candidates(doc, &schema, max_csd)?.pairs);
    }
    let predictions = predict(&pairs, &corpus, &bundle, &tokenizer, &schema)?;

    let out_dir = config
        .predictions_dir
        .as_deref()
        .or(config.output_dir.as_deref())
        .ok_or_else(|| usage("predictions_dir (or output_dir) is required"))?;
    write_predictions(&predictions, corpus.docs().map(|d| d.doc_id.clone()), out_dir)?;
    write_provenance(out_dir, "predict", raw)?;
    println!(
        "{} predictions over {} candidate pairs written to {}",
        predictions.len(),
        pairs.len(),
        out_dir.display()
    );
    Ok(())
}

pub fn cmd_evaluate(
    gold_dir: &Path,
    predictions_dir: &Path,
    output_dir: Option<&Path>,
    with_csd_breakdown: bool,
    raw: &RawConfig,
) -> Result<()> {
    let corpus = load_corpus(gold_dir)?;
    let doc_ids: Vec<String> = corpus.docs().map(|d| d.doc_id.clone()).collect();
    // Documents without a prediction file contribute zero predictions; all
    // their gold relations become false negatives.
    let predictions = load_predictions_dir(predictions_dir, &doc_ids)?;
    let gold = GoldStandard::from_corpus(&corpus);
    let report = score(&gold, &predictions)?;

    let table = render_table(&report);
    print!("{table}");
    if let Some(out_dir) = output_dir {
        std::fs::create_dir_all(out_dir)?;
        std::fs::write(out_dir.join("report.txt"), &table)?;
        std::fs::write(out_dir.join("report.tsv"), render_records(&report))?;
        if with_csd_breakdown {
            let mut lines = String::from("csd\ttp\tfp\tfn\tprecision\trecall\tf1\n");
            for (csd, bucket) in per_csd_breakdown(&corpus, &predictions)? {
                let m = bucket.micro;
                let _ = writeln!(
                    lines,
                    "{csd}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}",
                    m.tp, m.fp, m.fn_, m.precision, m.recall, m.f1
                );
            }
            std::fs::write(out_dir.join("per_csd.tsv"), lines)?;
        }
        write_provenance(out_dir, "evaluate", raw)?;
    }
    Ok(())
}

pub fn cmd_experiment(config: &ExperimentConfig, raw: &RawConfig) -> Result<()> {
    let corpus = load_corpus(config.require_corpus_dir()?)?;
    let schema = resolve_schema(&config.schema)?;
    let eval_corpus = match &config.eval_corpus_dir {
        Some(dir) => load_corpus(dir)?,
        None => corpus.clone(),
    };
    let out_dir = config.require_output_dir()?;
    std::fs::create_dir_all(out_dir)?;

    let ledger_path = out_dir.join("cells.done");
    let results_path = out_dir.join("results.tsv");
    let completed: BTreeSet<String> = std::fs::read_to_string(&ledger_path)
        .map(|text| text.lines().map(str::to_string).collect())
        .unwrap_or_default();
    if !results_path.exists() {
        std::fs::write(&results_path, "strategy\tscheme\tregime\tmax_csd\tprecision\trecall\tf1\tstatus\n")?;
    }

    let tokenizer = WordTokenizer::train(
        corpus.docs().map(|d| d.text.as_str()),
        config.lowercase,
        config.min_count,
    );

    let append = |path: &Path, line: &str| -> Result<()> {
        use std::io::Write;
        let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        file.write_all(line.as_bytes())?;
        Ok(())
    };

    let mut ran = 0usize;
    let mut skipped = 0usize;
    for &strategy in &config.strategy_grid {
        for &scheme in &config.scheme_grid {
            for &regime in &config.regime_grid {
                for &max_csd in &config.max_csd_grid {
                    let cell_key = format!("{strategy}|{scheme}|{regime}|{max_csd}");
                    if completed.contains(&cell_key) {
                        skipped += 1;
                        continue;
                    }
                    let mut cell_config = config.train.clone();
                    cell_config.strategy = strategy;
                    cell_config.scheme = scheme;
                    cell_config.regime = regime;
                    cell_config.max_csd = max_csd;

                    let result = run_cell(
                        config, &cell_config, &corpus, &eval_corpus, &schema, &tokenizer,
                    );
                    let row = match result {
                        Ok((p, r, f1)) => format!(
                            "{strategy}\t{scheme}\t{regime}\t{max_csd}\t{p:.4}\t{r:.4}\t{f1:.4}\tok\n"
                        ),
                        Err(e) => {
                            let brief = e.to_string().replace(['\t', '\n'], " ");
                            format!(
                                "{strategy}\t{scheme}\t{regime}\t{max_csd}\t-\t-\t-\terror: {brief}\n"
                            )
                        }
                    };
                    append(&results_path, &row)?;
                    append(&ledger_path, &format!("{cell_key}\n"))?;
                    ran += 1;
                }
            }
        }
    }
    write_provenance(out_dir, "experiment", raw)?;
    println!(
        "experiment complete: {ran} cell(s) run, {skipped} resumed from ledger; results in {}",
        results_path.display()
    );
    print!("{}", std::fs::read_to_string(&results_path)?);
    Ok(())
}

fn run_cell(
    config: &ExperimentConfig,
    cell_config: &relex_core::model::TrainConfig,
    corpus: &Corpus,
    eval_corpus: &Corpus,
    schema: &RelationSchema,
    tokenizer: &WordTokenizer,
) -> Result<(f64, f64, f64)> {
    let labeled = labeled_candidates(corpus, schema, config, cell_config.max_csd)?;
    let encoder = build_reference_encoder(
        &config.encoder,
        tokenizer,
        cell_config.max_len,
        cell_config.seed,
    )?;
    let outcome = train(&labeled.set, corpus, &encoder, tokenizer, schema, cell_config)?;

    let mut eval_pairs = Vec::new();
    for doc in eval_corpus.docs() {
        eval_pairs.extend(generate_candidates(doc, schema, cell_config.max_csd)?.pairs);
    }
    let options = relex_core::inference::InferenceOptions {
        missing_group: relex_core::inference::MissingGroupPolicy::SkipPair,
        ..Default::default()
    };
    let predictions = relex_core::inference::predict_with(
        &eval_pairs,
        eval_corpus,
        &outcome.bundle,
        tokenizer,
        schema,
        &options,
    )?;
    let report = score(&GoldStandard::from_corpus(eval_corpus), &predictions)?;
    Ok((report.micro.precision, report.micro.recall, report.micro.f1))
}

pub fn cmd_schema(spec: &str) -> Result<()> {
    let schema = resolve_schema(spec)?;
    println!("schema: {}", schema.name());
    println!(
        "categories: {} ({})",
        schema.categories().len(),
        if schema.is_unambiguous() { "unambiguous" } else { "ambiguous" }
    );
    println!("arg1_type\targ2_type\tcategories");
    for rule in schema.rules() {
        println!(
            "{}\t{}\t{}",
            rule.arg1_type,
            rule.arg2_type,
            rule.categories.join(",")
        );
    }
    Ok(())
}
