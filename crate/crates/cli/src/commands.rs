use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use compstream::engine::{self, MemoryReport, ModelState};
use compstream::eval::{run_protocol, CompressedModel, DenseModel, HashedModel, QuantizedModel};
use compstream::parallel::{process_window_parallel, throughput_bench, write_bench_csv};
use compstream::stream::{
    segment_windows, window_novelty_stats, write_novelty_csv, Ingestor, StreamSchema,
    UpdatingWindow, Vocabulary,
};
use compstream::synth::{generate, SynthConfig};
use log::info;
use serde_json::{json, Value};

use crate::config::RunConfig;

/// The dataset cut into windows, with the pretraining prefix marked.
pub struct Data {
    pub schema: StreamSchema,
    pub vocab: Vocabulary,
    pub windows: Vec<UpdatingWindow>,
    pub n_pre: usize,
    pub summary: Value,
}

impl Data {
    pub fn pre(&self) -> &[UpdatingWindow] {
        &self.windows[..self.n_pre]
    }

    pub fn stream(&self) -> &[UpdatingWindow] {
        &self.windows[self.n_pre..]
    }
}

/// Ingest the dataset, interning symbols on top of `vocab` when given so
/// unit ids agree with an existing model.
pub fn load_data(cfg: &RunConfig, vocab: Option<Vocabulary>) -> Result<Data> {
    let schema = cfg.schema()?;
    let mut vocab = vocab.unwrap_or_else(|| Vocabulary::new(schema.n_attributes()));
    ensure!(
        vocab.n_attributes() == schema.n_attributes(),
        "model has {} attributes but the schema declares {}",
        vocab.n_attributes(),
        schema.n_attributes()
    );
    let file =
        File::open(&cfg.dataset).with_context(|| format!("opening {}", cfg.dataset.display()))?;
    let mut ingestor = Ingestor::new(&schema, &mut vocab);
    let records = ingestor.ingest_reader(std::io::BufReader::new(file), cfg.has_header)?;
    let stats = ingestor.stats();
    ensure!(
        !records.is_empty(),
        "dataset {} has no usable records",
        cfg.dataset.display()
    );
    let n_records = records.len();
    let seg = segment_windows(records, cfg.window_span)?;
    let n = seg.windows.len();
    let n_pre = ((cfg.pretrain_fraction * n as f64).floor() as usize).clamp(1, n);
    let summary = json!({
        "records": n_records,
        "skipped_malformed": stats.malformed,
        "skipped_too_few_units": stats.too_few_units,
        "late_records": seg.late,
        "windows": n,
        "pretrain_windows": n_pre,
        "stream_windows": n - n_pre,
    });
    info!("{summary}");
    Ok(Data {
        schema,
        vocab,
        windows: seg.windows,
        n_pre,
        summary,
    })
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// Print to stdout; a closed pipe (e.g. `| head`) is not an error.
fn print(value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn memory_json(m: &MemoryReport) -> Value {
    json!({
        "codes": m.codes,
        "bases": m.bases,
        "assignments": m.assignments,
        "total": m.total,
        "dense_baseline": m.costly_baseline,
        "units": m.units,
        "ratio": m.ratio(),
    })
}

pub fn model_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("model.bin")
}

fn pretrain_state(cfg: &RunConfig, data: &Data) -> Result<ModelState> {
    let plans = cfg.plans(&data.schema)?;
    let (state, _) = ModelState::pretrain(data.pre(), data.vocab.clone(), &plans, cfg.engine())?;
    Ok(state)
}

/// The saved pretrained model when it matches the config and split,
/// otherwise a fresh pretraining run.
fn pretrained(cfg: &RunConfig, data: &Data) -> Result<ModelState> {
    let path = model_path(cfg);
    if path.is_file() {
        let state = engine::load(&path).with_context(|| format!("loading {}", path.display()))?;
        let cursor = data.pre().last().map(|w| w.id);
        if state.config() == &cfg.engine() && state.cursor() == cursor {
            info!("using pretrained model {}", path.display());
            let mut state = state;
            state.adopt_vocabulary(data.vocab.clone())?;
            return Ok(state);
        }
        info!(
            "{} does not match the config; pretraining again",
            path.display()
        );
    }
    pretrain_state(cfg, data)
}

pub fn inspect(cfg: &RunConfig) -> Result<()> {
    let data = load_data(cfg, None)?;
    let mut attributes = Vec::new();
    for a in data.schema.attributes() {
        let path = cfg.output_dir.join(format!("novelty_{}.csv", a.name));
        write_novelty_csv(create(&path)?, &window_novelty_stats(&data.windows, a.id))?;
        attributes.push(json!({"name": a.name, "kind": a.kind, "units": data.vocab.len(a.id)}));
    }
    let mut out = data.summary.clone();
    out["attributes"] = Value::Array(attributes);
    write_json(&cfg.output_dir.join("inspect.json"), &out)?;
    print(&out)
}

pub fn pretrain(cfg: &RunConfig) -> Result<()> {
    let data = load_data(cfg, None)?;
    let plans = cfg.plans(&data.schema)?;
    let (state, report) =
        ModelState::pretrain(data.pre(), data.vocab.clone(), &plans, cfg.engine())?;
    let path = model_path(cfg);
    engine::save(&state, &path).with_context(|| format!("saving {}", path.display()))?;
    let init: Vec<Value> = data
        .schema
        .attributes()
        .iter()
        .zip(&report.init)
        .map(|(a, r)| match (r, state.book(a.id)) {
            (Some(_), Some(book)) => json!({
                "name": a.name,
                "clusters": book.clustering().n_clusters(),
                "basis_vectors": book.bases().total_vectors(),
            }),
            _ => json!({"name": a.name, "compressed": false}),
        })
        .collect();
    let out = json!({
        "model": path,
        "windows": report.windows,
        "records": report.records,
        "cursor": state.cursor(),
        "final_epoch_loss": report.train.iter().map(|t| t.epoch_loss.last().copied()).collect::<Vec<_>>(),
        "attributes": init,
        "memory": memory_json(&state.memory_report()),
    });
    write_json(&cfg.output_dir.join("pretrain.json"), &out)?;
    print(&out)
}

pub fn stream(cfg: &RunConfig, model: Option<&Path>, save_to: Option<&Path>) -> Result<()> {
    let model = model
        .map(Path::to_path_buf)
        .unwrap_or_else(|| model_path(cfg));
    ensure!(
        model.is_file(),
        "model {} not found; run `pretrain` first",
        model.display()
    );
    let mut state = engine::load(&model).with_context(|| format!("loading {}", model.display()))?;
    let data = load_data(cfg, Some(state.vocab().clone()))?;
    state.adopt_vocabulary(data.vocab.clone())?;
    let cursor = state.cursor();
    let pending: Vec<&UpdatingWindow> = data
        .windows
        .iter()
        .filter(|w| cursor.map_or(true, |c| w.id > c))
        .collect();

    let mut log = create(&cfg.output_dir.join("windows.jsonl"))?;
    let (mut records, mut ms) = (0usize, 0.0f64);
    for w in &pending {
        let report = if cfg.workers == 1 {
            state.process_window(w)?
        } else {
            process_window_parallel(&mut state, w, cfg.workers, cfg.merge)?
        };
        records += report.records;
        ms += report.phases.total_ms();
        report.write_jsonl(&mut log)?;
    }
    log.flush()?;
    let save_to = save_to
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output_dir.join("model.streamed.bin"));
    engine::save(&state, &save_to).with_context(|| format!("saving {}", save_to.display()))?;
    print(&json!({
        "model": save_to,
        "workers": cfg.workers,
        "windows": pending.len(),
        "records": records,
        "ms_per_record": if records == 0 { 0.0 } else { ms / records as f64 },
        "cursor": state.cursor(),
        "memory": memory_json(&state.memory_report()),
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EvalModel {
    Compressed,
    DimReduct,
    Quantize,
    HashTrick,
}

pub fn eval(cfg: &RunConfig, which: EvalModel) -> Result<()> {
    let data = load_data(cfg, None)?;
    ensure!(
        !data.stream().is_empty(),
        "no windows left after pretraining; lower pretrain_fraction"
    );
    let protocol = cfg.protocol(&data.schema)?;
    let engine_cfg = cfg.engine();
    let (report, memory) = match which {
        EvalModel::Compressed => {
            let mut m = CompressedModel::new(pretrained(cfg, &data)?, cfg.workers);
            m.policy = cfg.merge;
            let r = run_protocol(data.pre(), data.stream(), &mut m, &protocol)?;
            (r, Some(m.state.memory_report()))
        }
        EvalModel::DimReduct => {
            let mut small = engine_cfg.clone();
            small.train.dim = cfg.baselines.reduced_dim;
            let mut m = DenseModel::pretrain(data.pre(), &small)?;
            (
                run_protocol(data.pre(), data.stream(), &mut m, &protocol)?,
                None,
            )
        }
        EvalModel::Quantize => {
            let mut m = QuantizedModel {
                dense: DenseModel::pretrain(data.pre(), &engine_cfg)?,
                bits: cfg.baselines.bits,
            };
            (
                run_protocol(data.pre(), data.stream(), &mut m, &protocol)?,
                None,
            )
        }
        EvalModel::HashTrick => {
            let mut m = HashedModel::pretrain(data.pre(), cfg.baselines.hash_ratio, &engine_cfg)?;
            (
                run_protocol(data.pre(), data.stream(), &mut m, &protocol)?,
                None,
            )
        }
    };
    let stem = format!("eval_{}", report.model);
    report.write_csv(create(&cfg.output_dir.join(format!("{stem}.csv")))?)?;
    let out = json!({
        "model": report.model,
        "mrr": report.mrr,
        "recall": report.recall,
        "n_queries": report.n_queries,
        "query_windows": report.query_windows,
        "dropped_unseen": report.dropped_unseen,
        "dropped_unresolved": report.dropped_unresolved,
        "model_bytes": report.model_bytes,
        "memory": memory.as_ref().map(memory_json),
    });
    write_json(&cfg.output_dir.join(format!("{stem}.json")), &out)?;
    print(&out)
}

pub fn bench(cfg: &RunConfig, ps: &[usize]) -> Result<()> {
    let data = load_data(cfg, None)?;
    ensure!(
        !data.stream().is_empty(),
        "no windows left after pretraining; lower pretrain_fraction"
    );
    let protocol = cfg.protocol(&data.schema)?;
    let state = pretrained(cfg, &data)?;
    let rows = throughput_bench(data.pre(), data.stream(), &state, ps, cfg.merge, &protocol)?;
    write_bench_csv(&rows, create(&cfg.output_dir.join("bench.csv"))?)?;
    print(&serde_json::to_value(&rows)?)
}

pub struct SynthArgs {
    pub config: SynthConfig,
    pub out: PathBuf,
    pub n_windows: i64,
}

/// Write the stream, its planted categories, and a config ready for the
/// other subcommands.
pub fn synth(args: &SynthArgs) -> Result<()> {
    if args.n_windows < 2 {
        bail!("--windows must be >= 2");
    }
    let s = generate(&args.config)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    s.write_csv(create(&args.out.join("synth.csv"))?)?;
    s.write_categories(create(&args.out.join("categories.csv"))?)?;
    write_json(
        &args.out.join("synth.resolved.json"),
        &serde_json::to_value(&args.config)?,
    )?;

    let first = s.rows.first().map_or(0, |r| r.0);
    let last = s.rows.last().map_or(0, |r| r.0);
    let span = (last - first) / args.n_windows + 1;
    let schema = args.config.schema();
    let columns = schema.columns();
    let run = json!({
        "dataset": "synth.csv",
        "has_header": true,
        "schema": {"columns": columns},
        "window_span": span,
        "pretrain_fraction": 0.5,
        "train": {"dim": 64},
        "seed": args.config.seed,
        "output_dir": "run",
    });
    write_json(&args.out.join("config.json"), &run)?;
    print(&json!({
        "records": s.rows.len(),
        "attributes": args.config.attributes,
        "units_per_attr": args.config.units_per_attr,
        "dir": args.out,
    }))
}
