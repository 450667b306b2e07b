use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use graphex::eval::{
    compute_metrics, exclusive_diversity, head_threshold, FixtureOracle, HeuristicOracle, HttpOracle, Judge,
    JudgmentSet, ModelRun, RelevanceOracle,
};
use graphex::model_file::leaf_block_len;
use graphex::{
    build, curate, ingest, BatchItem, CurateOptions, CurationError, CurationStatus, DefaultNormalizer, Model,
    RecommendOptions, Recommender,
};
use serde::Serialize;

use crate::args::{EvalArgs, InferArgs, StatsArgs, TrainArgs};
use crate::output::InferLine;
use crate::CliError;

fn open_input(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => CliError::Usage(format!("input not found: {}", path.display())),
        _ => CliError::Runtime(anyhow!(e).context(format!("opening {}", path.display()))),
    })
}

fn load_model(path: &Path) -> Result<Model, CliError> {
    if path.as_os_str().is_empty() {
        return Err(CliError::Usage("--model requires a path".into()));
    }
    if !path.exists() {
        return Err(CliError::Usage(format!("input not found: {}", path.display())));
    }
    graphex::load(path).with_context(|| format!("loading {}", path.display())).map_err(CliError::Runtime)
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let started = Instant::now();
    let report = ingest(&args.input).map_err(|e| match e {
        CurationError::NotFound(p) => CliError::Usage(format!("input not found: {p}")),
        other => CliError::Runtime(other.into()),
    })?;
    if !report.errors.is_empty() {
        for e in report.errors.iter().take(10) {
            log::warn!("{}: {e}", args.input.display());
        }
        if args.strict {
            return Err(CliError::Runtime(anyhow!("{} malformed rows in {}", report.errors.len(), args.input.display())));
        }
        writeln!(out, "skipped {} malformed rows", report.errors.len()).map_err(anyhow::Error::from)?;
    }

    let opts = CurateOptions {
        meta_category: args.meta_category.clone(),
        min_search: args.min_search_count,
        orientation: args.score_orientation.into(),
    };
    let curated = curate(report.rows, &opts, &DefaultNormalizer::new());
    if curated.status == CurationStatus::Vacuous {
        log::warn!("no keyphrases survived curation; the model is vacuous");
        writeln!(out, "warning: vacuous model (no keyphrases passed --min-search-count {})", args.min_search_count)
            .map_err(anyhow::Error::from)?;
    }
    let model = build(&curated.dataset);
    graphex::save(&model, &args.output).with_context(|| format!("writing {}", args.output.display()))?;

    writeln!(
        out,
        "leaves={} tokens={} keyphrases={} edges={} elapsed_ms={}",
        model.num_leaves(),
        model.vocabulary().len(),
        model.num_keyphrases(),
        model.total_edges(),
        started.elapsed().as_millis()
    )
    .map_err(anyhow::Error::from)?;
    Ok(())
}

/// Parse `item_id \t title \t leaf_category`, skipping a header line.
pub fn read_items<R: BufRead>(reader: R, source: &str) -> anyhow::Result<Vec<BatchItem>> {
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let leaf = cols.get(2).and_then(|c| c.trim().parse().ok());
        match (cols.len(), leaf) {
            (3, Some(leaf_category)) => items.push(BatchItem {
                item_id: cols[0].to_owned(),
                title: cols[1].to_owned(),
                leaf_category,
                k: None,
            }),
            _ if i == 0 => continue,
            _ => return Err(anyhow!("{source}: line {}: expected item_id, title, leaf_category", i + 1)),
        }
    }
    Ok(items)
}

pub fn cmd_infer(args: &InferArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    if args.k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let model = load_model(&args.model)?;
    let items = read_items(BufReader::new(open_input(&args.items)?), &args.items.display().to_string())?;
    let options = RecommendOptions {
        k: args.k,
        align: args.align.into(),
        max_predictions: (args.max_predictions > 0).then_some(args.max_predictions),
        min_common_tokens: args.min_common_tokens,
    };
    let rec = Recommender::new(&model).with_options(options);

    let started = Instant::now();
    let results = rec.recommend_batch(&items, args.threads);
    let elapsed = started.elapsed();

    let write_all = |w: &mut dyn Write| -> anyhow::Result<()> {
        for r in &results {
            let line = InferLine::from_result(r);
            if let Some(err) = &line.error {
                log::warn!("item {}: {err}", r.item_id);
            }
            serde_json::to_writer(&mut *w, &line)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    };
    if args.output.as_os_str() == "-" {
        write_all(stdout)?;
    } else {
        let file = File::create(&args.output).with_context(|| format!("creating {}", args.output.display()))?;
        write_all(&mut BufWriter::new(file))?;
    }

    let failed = results.iter().filter(|r| r.outcome.is_err()).count();
    let per_item = if items.is_empty() { 0.0 } else { elapsed.as_secs_f64() * 1e3 / items.len() as f64 };
    log::info!(
        "{} items ({failed} errors) in {:.1} ms, {:.4} ms/item, {} threads",
        items.len(),
        elapsed.as_secs_f64() * 1e3,
        per_item,
        args.threads
    );
    Ok(())
}

#[derive(Debug, PartialEq)]
pub enum OracleSpec {
    Fixture(String),
    Heuristic,
    Http(String),
}

impl std::str::FromStr for OracleSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "heuristic" {
            Ok(OracleSpec::Heuristic)
        } else if let Some(p) = s.strip_prefix("fixture:") {
            Ok(OracleSpec::Fixture(p.to_owned()))
        } else if let Some(u) = s.strip_prefix("http:") {
            // Accept both `http:<url>` and a bare `http://...`.
            let url = if u.starts_with("//") { s.to_owned() } else { u.to_owned() };
            Ok(OracleSpec::Http(url))
        } else {
            Err(format!("unknown oracle {s:?} (expected fixture:<path>, heuristic or http:<url>)"))
        }
    }
}

#[derive(Serialize)]
struct EvalReport<'a> {
    metrics: graphex::eval::MetricsReport,
    diversity: Option<graphex::eval::DiversityReport>,
    judgments: usize,
    oracle: &'a str,
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let oracle_spec: OracleSpec = args.oracle.parse().map_err(CliError::Usage)?;
    let mut runs = Vec::with_capacity(args.runs.len());
    for spec in &args.runs {
        let (name, path) =
            spec.split_once('=').ok_or_else(|| CliError::Usage(format!("--runs expects name=path, got {spec:?}")))?;
        let file = open_input(Path::new(path))?;
        runs.push(ModelRun::from_jsonl(name, BufReader::new(file), path).map_err(anyhow::Error::from)?);
    }

    let titles: HashMap<String, String> = match &args.items {
        Some(p) => read_items(BufReader::new(open_input(p)?), &p.display().to_string())?
            .into_iter()
            .map(|it| (it.item_id, it.title))
            .collect(),
        None => HashMap::new(),
    };

    let oracle: Box<dyn RelevanceOracle> = match &oracle_spec {
        OracleSpec::Fixture(p) => {
            open_input(Path::new(p))?;
            Box::new(FixtureOracle::load(Path::new(p)).map_err(anyhow::Error::from)?)
        }
        OracleSpec::Heuristic => Box::new(HeuristicOracle),
        OracleSpec::Http(url) => Box::new(HttpOracle::new(url.clone(), Duration::from_millis(args.oracle_timeout_ms))),
    };
    if titles.is_empty() && !matches!(oracle_spec, OracleSpec::Fixture(_)) {
        log::warn!("no --items given; the {} oracle will see empty titles", oracle.id());
    }

    let judge = Judge::new(oracle.as_ref()).with_max_in_flight(args.max_in_flight);
    let outcome = judge.judge_runs(&runs, &titles);
    if !outcome.failures.is_empty() {
        for f in outcome.failures.iter().take(10) {
            log::error!("judging {:?} / {:?}: {}", f.item_id, f.keyphrase, f.message);
        }
        return Err(CliError::Runtime(anyhow!("{} predictions could not be judged", outcome.failures.len())));
    }
    let judgments: JudgmentSet = outcome.judgments.iter().collect();

    let counts = match &args.universe {
        Some(p) => {
            let report = ingest(p).map_err(|e| match e {
                CurationError::NotFound(p) => CliError::Usage(format!("input not found: {p}")),
                other => CliError::Runtime(other.into()),
            })?;
            let curated = curate(report.rows, &CurateOptions::default(), &DefaultNormalizer::new());
            let mut best: HashMap<String, f64> = HashMap::new();
            for kp in curated.dataset.leaves.values().flatten() {
                let e = best.entry(kp.text.clone()).or_insert(f64::MIN);
                *e = e.max(kp.search);
            }
            best.into_values().collect::<Vec<_>>()
        }
        None => {
            let mut best: BTreeMap<&str, f64> = BTreeMap::new();
            for p in runs.iter().flat_map(|r| r.items.values().flatten()) {
                let e = best.entry(&p.keyphrase).or_insert(f64::MIN);
                *e = e.max(p.search);
            }
            best.into_values().collect()
        }
    };
    let threshold = head_threshold(&counts, args.head_percentile).map_err(|e| CliError::Runtime(e.into()))?;
    let metrics = compute_metrics(&runs, &judgments, threshold, &args.baseline).map_err(|e| match e {
        graphex::eval::EvalError::BaselineMissing(_) => CliError::Usage(e.to_string()),
        other => CliError::Runtime(other.into()),
    })?;
    let diversity = if runs.len() >= 2 {
        Some(exclusive_diversity(&runs, &judgments, threshold, Some(&args.baseline)).map_err(anyhow::Error::from)?)
    } else {
        None
    };

    let report = EvalReport { metrics, diversity, judgments: judgments.len(), oracle: oracle.id() };
    let file = File::create(&args.report).with_context(|| format!("creating {}", args.report.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &report).map_err(anyhow::Error::from)?;

    for m in &report.metrics.models {
        let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".to_owned(), |v| format!("{v:.4}"));
        writeln!(
            out,
            "{}\tRP={}\tHP={}\tRRR={}\tRHR={}",
            m.model,
            fmt(m.rp),
            fmt(m.hp),
            fmt(m.rrr),
            fmt(m.rhr)
        )
        .map_err(anyhow::Error::from)?;
    }
    Ok(())
}

pub fn cmd_stats(args: &StatsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let mut w = || -> io::Result<()> {
        writeln!(out, "leaf\ttokens\tedges\td_avg\tbytes")?;
        let (mut tokens, mut edges, mut bytes) = (0, 0, 0);
        for leaf in model.leaf_ids() {
            let g = model.leaf(leaf).expect("listed leaf exists");
            let s = model.degree_stats(leaf).expect("listed leaf exists");
            let b = leaf_block_len(g);
            writeln!(out, "{leaf}\t{}\t{}\t{:.3}\t{b}", s.num_tokens, s.num_edges, s.d_avg)?;
            tokens += s.num_tokens;
            edges += s.num_edges;
            bytes += b;
        }
        let d_avg = if tokens == 0 { 0.0 } else { edges as f64 / tokens as f64 };
        writeln!(out, "total\t{tokens}\t{edges}\t{d_avg:.3}\t{bytes}")?;
        let file_bytes = std::fs::metadata(&args.model).map(|m| m.len()).unwrap_or(0);
        writeln!(
            out,
            "leaves={} vocabulary={} keyphrases={} file_bytes={file_bytes}",
            model.num_leaves(),
            model.vocabulary().len(),
            model.num_keyphrases()
        )
    };
    w().map_err(|e| CliError::Runtime(e.into()))
}
