use std::fmt::Write as _;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use eagle_core::aggregation::default_k;
use eagle_core::dump::{load_dump, write_dump, write_dump_path};
use eagle_core::harness::{
    ablate, eval_records, evaluate, format_results_table, results_csv, score_range_study,
    score_records, select_answers, sweep, tune_k, MethodResult, SweepGrid, TunedConfig,
};
use eagle_core::metrics::{reliability_bins, BinStats};
use eagle_core::toy::{
    generate_planted_dataset, sample_planted_specs, transformer_dataset, EarlyLayers,
    PlantedRecordSpec, ToyConfig, ToyTransformer,
};
use eagle_core::{
    AggregationConfig, CandidateScoreSet, Combine, Decision, DumpHeader, Error, LayerSelection,
    Result, ScoreDumpRecord,
};
use serde_json::{json, Value};

use crate::{CombineArg, Command, DecisionArg, EarlyArg, Format, GenToyArgs, MethodArgs};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Score {
            dump,
            method,
            format,
        } => {
            let (header, records) = read(&dump)?;
            let config = resolve_config(&method, header.num_layers)?;
            let scores = score_records(&records, &config, &header.score_set)?;
            let rows: Vec<_> = records.iter().zip(&scores).collect();
            emit(&match format {
                Format::Table => {
                    let width = records.iter().map(|r| r.id.len()).max().unwrap_or(0).max(2);
                    let mut out = format!("{:<width$}  {:>8}  {:>10}  correct\n", "id", "raw", "normalized");
                    for (r, c) in rows {
                        let _ = writeln!(
                            out,
                            "{:<width$}  {:>8.4}  {:>10.4}  {}",
                            r.id,
                            c.raw,
                            c.normalized,
                            label_cell(r.correct)
                        );
                    }
                    out
                }
                Format::Csv => {
                    let mut out = String::from("id,raw,normalized,correct\n");
                    for (r, c) in rows {
                        let _ = writeln!(
                            out,
                            "{},{},{},{}",
                            csv_field(&r.id),
                            c.raw,
                            c.normalized,
                            label_cell(r.correct)
                        );
                    }
                    out
                }
                Format::Json => json_lines(rows.into_iter().map(|(r, c)| {
                    json!({"id": r.id, "raw": c.raw, "normalized": c.normalized, "correct": r.correct})
                })),
            })
        }
        Command::Evaluate {
            dump,
            method,
            eval,
            reliability,
        } => {
            let (header, records) = read(&dump)?;
            let config = resolve_config(&method, header.num_layers)?;
            let result = evaluate(&records, &config, &header.score_set, eval.bins)?;
            let bins = if reliability {
                let evals = eval_records(&records, &config, &header.score_set)?;
                Some(reliability_bins(&evals, eval.bins)?)
            } else {
                None
            };
            emit(&match eval.format {
                Format::Table => {
                    let mut out = format_results_table(std::slice::from_ref(&result));
                    if let Some(bins) = &bins {
                        out.push('\n');
                        out.push_str(&bins_table(bins));
                    }
                    out
                }
                Format::Csv => {
                    let mut out = results_csv(std::slice::from_ref(&result));
                    if let Some(bins) = &bins {
                        out.push('\n');
                        out.push_str(&bins_csv(bins));
                    }
                    out
                }
                Format::Json => {
                    let mut value = result.to_json();
                    if let Some(bins) = &bins {
                        value["bins"] = bins.iter().map(bin_json).collect();
                    }
                    format!("{value}\n")
                }
            })
        }
        Command::Ablate {
            dump,
            k,
            tuned,
            eval,
        } => {
            let (header, records) = read(&dump)?;
            let k = match (k, tuned) {
                (Some(k), _) => k,
                (None, Some(path)) => load_tuned(&path, header.num_layers)?,
                (None, None) => default_k(header.num_layers),
            };
            LayerSelection::LastK(k).resolve(header.num_layers)?;
            let results = ablate(&records, &header.score_set, k, eval.bins)?;
            emit(&format_results(&results, eval.format))
        }
        Command::Sweep {
            dump,
            combine,
            decision,
            bins,
            format,
        } => {
            let (header, records) = read(&dump)?;
            let grid = sweep(&records, &header.score_set, decision.into(), combine.into(), bins)?;
            emit(&match format {
                Format::Csv => grid.to_csv(),
                Format::Table => sweep_table(&grid),
                Format::Json => json_lines(grid.cells.iter().map(|c| {
                    json!({"start": c.start, "end": c.end, "ece": c.ece, "auroc": c.auroc})
                })),
            })
        }
        Command::Tune { dump, bins, out } => {
            let (header, records) = read(&dump)?;
            let tuned = tune_k(&records, &header.score_set, bins)?;
            if let Some(path) = out {
                tuned
                    .save(&path)
                    .map_err(|e| e.context(format!("writing {}", path.display())))?;
            }
            emit(&format!(
                "{}\n",
                json!({"k": tuned.k, "num_layers": tuned.num_layers, "ece": tuned.ece})
            ))
        }
        Command::Select {
            dump,
            method,
            format,
        } => {
            let (header, records) = read(&dump)?;
            let config = resolve_config(&method, header.num_layers)?;
            let report = select_answers(&records, &config, &header.score_set)?;
            emit(&match format {
                Format::Table => {
                    let gw = report.choices.iter().map(|c| c.group.len()).max().unwrap_or(0).max(5);
                    let cw = report.choices.iter().map(|c| c.chosen_id.len()).max().unwrap_or(0).max(6);
                    let mut out = format!(
                        "{:<gw$}  {:<cw$}  {:>10}  {:>8}  {:>10}\n",
                        "group", "chosen", "candidates", "raw", "normalized"
                    );
                    for c in &report.choices {
                        let _ = writeln!(
                            out,
                            "{:<gw$}  {:<cw$}  {:>10}  {:>8.4}  {:>10.4}",
                            c.group, c.chosen_id, c.candidates, c.confidence.raw, c.confidence.normalized
                        );
                    }
                    if let (Some(sel), Some(base)) = (report.selected_accuracy, report.baseline_accuracy) {
                        let _ = writeln!(
                            out,
                            "\nselected accuracy {:.1}%  (first-candidate baseline {:.1}%)",
                            100.0 * sel,
                            100.0 * base
                        );
                    }
                    out
                }
                Format::Csv => {
                    let mut out = String::from("group,chosen_id,candidates,raw,normalized\n");
                    for c in &report.choices {
                        let _ = writeln!(
                            out,
                            "{},{},{},{},{}",
                            csv_field(&c.group),
                            csv_field(&c.chosen_id),
                            c.candidates,
                            c.confidence.raw,
                            c.confidence.normalized
                        );
                    }
                    out
                }
                Format::Json => {
                    let choices: Vec<Value> = report
                        .choices
                        .iter()
                        .map(|c| {
                            json!({
                                "group": c.group,
                                "chosen_id": c.chosen_id,
                                "candidates": c.candidates,
                                "raw": c.confidence.raw,
                                "normalized": c.confidence.normalized,
                            })
                        })
                        .collect();
                    let value = json!({
                        "choices": choices,
                        "selected_accuracy": report.selected_accuracy,
                        "baseline_accuracy": report.baseline_accuracy,
                    });
                    format!("{value}\n")
                }
            })
        }
        Command::GenToy(args) => gen_toy(args),
        Command::StudyRange {
            dumps,
            method,
            eval,
        } => {
            let mut loaded = Vec::with_capacity(dumps.len());
            for path in &dumps {
                let (header, records) = read(path)?;
                loaded.push((header.num_layers, header.score_set, records));
            }
            let layers = loaded[0].0;
            if let Some((l, ..)) = loaded.iter().find(|(l, ..)| *l != layers) {
                return Err(Error::InvalidSelection(format!(
                    "dumps disagree on layer count ({layers} vs {l})"
                )));
            }
            let config = resolve_config(&method, layers)?;
            let dumps: Vec<_> = loaded.into_iter().map(|(_, set, recs)| (set, recs)).collect();
            let results = score_range_study(&dumps, &config, eval.bins)?;
            emit(&format_results(&results, eval.format))
        }
    }
}

fn gen_toy(args: GenToyArgs) -> Result<()> {
    let score_set = CandidateScoreSet::parse_range(&args.scores)?;
    let (num_layers, records, producer) = if args.transformer {
        let config = ToyConfig {
            vocab_size: args.vocab_size,
            model_dim: args.model_dim,
            num_layers: args.layers.unwrap_or(6),
            ffn_dim: args.ffn_dim,
            seed: args.model_seed.unwrap_or(args.seed),
        };
        let producer = format!(
            "eagle gen-toy --transformer seed={} model_seed={}",
            args.seed, config.seed
        );
        let model = ToyTransformer::new(config)?;
        let records = transformer_dataset(&model, args.n, &score_set, args.seed)?;
        (model.num_layers(), records, producer)
    } else {
        let layers = args.layers.unwrap_or(8);
        let early = match args.early {
            EarlyArg::Pure => EarlyLayers::PureNoise,
            EarlyArg::Noisy => EarlyLayers::NoisySignal,
        };
        let template = PlantedRecordSpec::new(0.0, args.sigma, layers, score_set.clone())
            .with_signal_layers(args.signal_layers.unwrap_or(layers))
            .with_early_layers(early, args.early_sigma.unwrap_or(args.sigma));
        template.validate()?;
        let specs = sample_planted_specs(args.n, &template, args.seed);
        let records = generate_planted_dataset(&specs, args.seed)?;
        (layers, records, format!("eagle gen-toy --planted seed={}", args.seed))
    };
    let header = DumpHeader::new(num_layers, score_set, producer);
    match &args.out {
        Some(path) => write_dump_path(&header, &records, path)
            .map_err(|e| e.context(format!("writing {}", path.display()))),
        None => {
            let stdout = io::stdout();
            write_dump(&header, &records, BufWriter::new(stdout.lock()))?;
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<(DumpHeader, Vec<ScoreDumpRecord>)> {
    load_dump(path).map_err(|e| e.context(format!("reading {}", path.display())))
}

fn load_tuned(path: &PathBuf, num_layers: usize) -> Result<usize> {
    let tuned = TunedConfig::load(path).map_err(|e| e.context(format!("reading {}", path.display())))?;
    if tuned.num_layers != num_layers {
        return Err(Error::InvalidSelection(format!(
            "{} was tuned on {} layers but the dump has {num_layers}",
            path.display(),
            tuned.num_layers
        )));
    }
    Ok(tuned.k)
}

fn resolve_config(method: &MethodArgs, num_layers: usize) -> Result<AggregationConfig> {
    let layers = match (method.range, method.k, &method.tuned) {
        (Some((start, end)), _, _) => LayerSelection::Range { start, end },
        (None, Some(k), _) => LayerSelection::LastK(k),
        (None, None, Some(path)) => LayerSelection::LastK(load_tuned(path, num_layers)?),
        (None, None, None) => LayerSelection::LastK(default_k(num_layers)),
    };
    // Fail on a bad selection even when the dump has no records.
    layers.resolve(num_layers)?;
    Ok(AggregationConfig::eagle(1)
        .with_layers(layers)
        .with_combine(method.combine.into())
        .with_decision(method.decision.into()))
}

impl From<CombineArg> for Combine {
    fn from(c: CombineArg) -> Self {
        match c {
            CombineArg::Logits => Combine::Logits,
            CombineArg::Prob => Combine::Probs,
        }
    }
}

impl From<DecisionArg> for Decision {
    fn from(d: DecisionArg) -> Self {
        match d {
            DecisionArg::Exp => Decision::Expectation,
            DecisionArg::Max => Decision::MaxScore,
        }
    }
}

fn emit(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn format_results(results: &[MethodResult], format: Format) -> String {
    match format {
        Format::Table => format_results_table(results),
        Format::Csv => results_csv(results),
        Format::Json => json_lines(results.iter().map(MethodResult::to_json)),
    }
}

fn json_lines(values: impl Iterator<Item = Value>) -> String {
    values.map(|v| v.to_string() + "\n").collect()
}

fn label_cell(correct: Option<bool>) -> &'static str {
    match correct {
        Some(true) => "1",
        Some(false) => "0",
        None => "",
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
}

fn bins_table(bins: &[BinStats]) -> String {
    let mut out = String::from("bin  range          count  confidence  accuracy\n");
    for b in bins {
        let _ = writeln!(
            out,
            "{:>3}  [{:.2}, {:.2}{}  {:>5}  {:>10}  {:>8}",
            b.index,
            b.lower,
            b.upper,
            if b.index + 1 == bins.len() { ']' } else { ')' },
            b.count,
            opt_cell(b.mean_confidence),
            opt_cell(b.mean_accuracy)
        );
    }
    out
}

fn bins_csv(bins: &[BinStats]) -> String {
    let mut out = String::from("bin,lower,upper,count,mean_confidence,mean_accuracy\n");
    for b in bins {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            b.index,
            b.lower,
            b.upper,
            b.count,
            cell(b.mean_confidence),
            cell(b.mean_accuracy)
        );
    }
    out
}

fn bin_json(b: &BinStats) -> Value {
    json!({
        "index": b.index,
        "lower": b.lower,
        "upper": b.upper,
        "count": b.count,
        "mean_confidence": b.mean_confidence,
        "mean_accuracy": b.mean_accuracy,
    })
}

fn sweep_table(grid: &SweepGrid) -> String {
    let mut out = String::from("ECE by layer range (rows: start m, columns: end n)\n   m\\n");
    for n in 0..grid.num_layers {
        let _ = write!(out, " {n:>6}");
    }
    out.push('\n');
    for m in 0..grid.num_layers {
        let _ = write!(out, "{m:>6}");
        for n in 0..grid.num_layers {
            match grid.cell(m, n) {
                Some(c) => {
                    let _ = write!(out, " {:>6.1}", c.ece);
                }
                None => out.push_str("       "),
            }
        }
        out.push('\n');
    }
    if let Some(best) = grid.best_ece() {
        let _ = writeln!(
            out,
            "\nlowest ECE: layers {}:{}  ECE {:.1}  AUROC {:.1}",
            best.start, best.end, best.ece, best.auroc
        );
    }
    out
}
