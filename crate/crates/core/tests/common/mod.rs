#![allow(dead_code)]

use compstream::codebook::AttributePlan;
use compstream::engine::{EngineConfig, ModelState};
use compstream::stream::{segment_windows, Record, UpdatingWindow, Vocabulary};
use compstream::synth::{generate, SynthConfig, SynthStream};
use compstream::trainer::TrainConfig;

/// A synthetic stream split into a pretraining prefix and a streamed suffix.
pub struct Fixture {
    pub synth: SynthStream,
    pub vocab: Vocabulary,
    pub records: usize,
    pub pre: Vec<UpdatingWindow>,
    pub stream: Vec<UpdatingWindow>,
}

/// Cut the stream into `n_windows` equal spans and pretrain on the first
/// `n_pre` of them.
pub fn fixture(cfg: &SynthConfig, n_windows: i64, n_pre: usize) -> Fixture {
    let synth = generate(cfg).unwrap();
    let (_, vocab, recs) = synth.ingest().unwrap();
    let records = recs.len();
    let span = (recs.last().unwrap().timestamp - recs[0].timestamp) / n_windows + 1;
    let mut windows = segment_windows(recs, span).unwrap().windows;
    let stream = windows.split_off(n_pre);
    Fixture {
        synth,
        vocab,
        records,
        pre: windows,
        stream,
    }
}

/// Two attributes of 1000 units each, eight planted groups.
pub fn synth_config(seed: u64) -> SynthConfig {
    SynthConfig {
        groups: 8,
        attributes: 2,
        units_per_attr: 1000,
        rho: 0.1,
        records: 20_000,
        seed,
        ..SynthConfig::default()
    }
}

pub fn engine_config(seed: u64, dim: usize) -> EngineConfig {
    EngineConfig {
        train: TrainConfig {
            dim,
            ..TrainConfig::default()
        },
        seed,
        ..EngineConfig::default()
    }
}

pub fn pretrain(f: &Fixture, plans: &[AttributePlan], cfg: EngineConfig) -> ModelState {
    ModelState::pretrain(&f.pre, f.vocab.clone(), plans, cfg)
        .unwrap()
        .0
}

pub fn default_plans(n: usize) -> Vec<AttributePlan> {
    vec![AttributePlan::default(); n]
}

pub fn all_records(ws: &[UpdatingWindow]) -> Vec<Record> {
    ws.iter().flat_map(|w| w.records.iter().cloned()).collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `f` at `x` with step `h`.
pub fn numeric_grad(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub mod gradcheck;
pub mod ranking;
