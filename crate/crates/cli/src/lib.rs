//! Experiment runner behind the `dccl` binary: config expansion, the run
//! loop, and the CSV / checkpoint outputs.

pub mod config;
pub mod output;

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use dccl_core::model::checkpoint::{network_len, save_decoupled, save_network, summarize, CheckpointSummary, NetworkHeader};
use dccl_core::simnet::{run_feasibility, TrainedModel, Workbench};

use crate::config::{Plan, Study};
use crate::output::{
    feasibility_row, layer_table, metrics_row, sizes_row, spec_cost, trace_rows, write_csv, RowOutcome,
    FEASIBILITY_COLUMNS, METRICS_COLUMNS, SIZES_COLUMNS, TRACE_COLUMNS,
};

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Blank the timestamp and wall-clock columns so reruns are
    /// byte-identical.
    pub no_timestamp: bool,
    pub skip_checkpoints: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSummary {
    pub total: usize,
    pub failed: usize,
}

impl RunSummary {
    /// Only a plan in which every run failed counts as a failure.
    pub fn all_failed(&self) -> bool {
        self.total > 0 && self.failed == self.total
    }
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Execute every run of `plan`, writing into `out`:
///
/// * `config.resolved.json` — the plan with all defaults filled in;
/// * `metrics.csv` — one row per run (see [`output`] for the schema);
/// * `traces/<run_id>.csv` — per-round trace of each collaborative run;
/// * `sizes.csv` — base / decoupled / device-side sizes per distinct model;
/// * `checkpoints/<run_id>.ckpt` — trained model of each successful run;
/// * `feasibility.csv` instead of metrics for the feasibility study.
pub fn run_plan(plan: &Plan, out: &Path, opts: &RunOptions, log: &mut impl Write) -> Result<RunSummary> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join("config.resolved.json"), serde_json::to_string_pretty(plan)? + "\n")?;
    write_sizes(plan, &out.join("sizes.csv"))?;
    let mut wb = Workbench::<f64>::new();
    match plan.study {
        Study::Methods => run_methods(plan, out, opts, &mut wb, log),
        Study::Feasibility => run_feasibility_study(plan, out, &mut wb, log),
    }
}

fn run_methods(plan: &Plan, out: &Path, opts: &RunOptions, wb: &mut Workbench<f64>, log: &mut impl Write) -> Result<RunSummary> {
    let traces = out.join("traces");
    let ckpts = out.join("checkpoints");
    std::fs::create_dir_all(&traces)?;
    if !opts.skip_checkpoints {
        std::fs::create_dir_all(&ckpts)?;
    }
    let mut metrics = csv::Writer::from_path(out.join("metrics.csv"))?;
    metrics.write_record(METRICS_COLUMNS)?;
    let mut failed = 0;
    let n = plan.runs.len();
    for (i, run) in plan.runs.iter().enumerate() {
        let ts = (!opts.no_timestamp).then(now_secs);
        match wb.run(&run.config) {
            Ok(res) => {
                metrics.write_record(metrics_row(&run.id, &run.config, RowOutcome::Ok(&res.metrics), ts))?;
                if run.config.method.is_collaborative() {
                    write_csv(&traces.join(format!("{}.csv", run.id)), &TRACE_COLUMNS, &trace_rows(&res.trace))?;
                }
                if !opts.skip_checkpoints {
                    let path = ckpts.join(format!("{}.ckpt", run.id));
                    match &res.model {
                        TrainedModel::Decoupled(dm) => save_decoupled(dm, &path)?,
                        TrainedModel::Network(net) => save_network(net, &path)?,
                    }
                }
                writeln!(
                    log,
                    "[{}/{n}] {}: accuracy {:.4} (device classes {:.4}) in {:.1}s",
                    i + 1,
                    run.id,
                    res.metrics.accuracy,
                    res.metrics.acc_device_classes,
                    res.metrics.wall_seconds
                )?;
            }
            Err(e) => {
                failed += 1;
                metrics.write_record(metrics_row(&run.id, &run.config, RowOutcome::Failed(e.to_string()), ts))?;
                writeln!(log, "[{}/{n}] {}: failed: {e}", i + 1, run.id)?;
            }
        }
        metrics.flush()?;
    }
    Ok(RunSummary { total: n, failed })
}

fn run_feasibility_study(plan: &Plan, out: &Path, wb: &mut Workbench<f64>, log: &mut impl Write) -> Result<RunSummary> {
    let mut seen = BTreeSet::new();
    let mut rows = Vec::new();
    let mut failed = 0;
    for cfg in plan.configs().filter(|c| seen.insert(c.seed)) {
        match run_feasibility(wb, cfg) {
            Ok(r) => {
                writeln!(
                    log,
                    "seed {}: base {:.4}, with cloud {:.4}, with control {:.4}, without control {:.4}",
                    cfg.seed, r.base, r.with_cloud, r.with_control, r.without_control
                )?;
                rows.push(feasibility_row(cfg.seed, Ok(&r)));
            }
            Err(e) => {
                failed += 1;
                writeln!(log, "seed {}: failed: {e}", cfg.seed)?;
                rows.push(feasibility_row(cfg.seed, Err(e.to_string())));
            }
        }
    }
    write_csv(&out.join("feasibility.csv"), &FEASIBILITY_COLUMNS, &rows)?;
    Ok(RunSummary {
        total: rows.len(),
        failed,
    })
}

fn write_sizes(plan: &Plan, path: &Path) -> Result<()> {
    let mut seen = BTreeSet::new();
    let mut rows = Vec::new();
    for run in &plan.runs {
        if !seen.insert(serde_json::to_string(&run.config.model)?) {
            continue;
        }
        let dm = Workbench::<f64>::fresh_model(&run.config)?;
        rows.push(sizes_row(&run.id, &run.config, &dm.sizes(), network_len(&dm.co))?);
    }
    write_csv(path, &SIZES_COLUMNS, &rows)
}

/// Human-readable size report: per-layer tables of the base model and of
/// every part of the decoupled model, then the totals.
pub fn report_sizes(plan: &Plan, out: &mut impl Write) -> Result<()> {
    let mut seen = BTreeSet::new();
    for run in &plan.runs {
        let cfg = &run.config;
        if !seen.insert(serde_json::to_string(&cfg.model)?) {
            continue;
        }
        let dm = Workbench::<f64>::fresh_model(cfg)?;
        let l = &dm.layout;
        writeln!(out, "== {} (alpha_cl {}, alpha_co {})", run.id, cfg.model.split.alpha_cl, cfg.model.split.alpha_co)?;
        let (base_params, base_flops) = spec_cost(&cfg.model.base)?;
        layer_table(out, "base model", &cfg.model.base.input_shape, &cfg.model.base.layers)?;
        let enc_shape = l.encoder_output_shape()?;
        layer_table(out, "shared encoder", &l.input_shape, &l.encoder)?;
        layer_table(out, "cloud submodel", &enc_shape, &l.cloud)?;
        layer_table(out, "co-submodel", &enc_shape, &l.co)?;
        layer_table(out, "control model", &enc_shape, &dm.control.layer_specs())?;
        let s = dm.sizes();
        writeln!(out, "base        {base_params:>12} params {base_flops:>14} flops")?;
        writeln!(out, "decoupled   {:>12} params {:>14} flops", s.decoupled_params(), s.decoupled_flops())?;
        writeln!(out, "device-side {:>12} params {:>14} flops", s.device_params(), s.device_flops())?;
        writeln!(
            out,
            "device/base {:.4}%   co-submodel {} bytes serialized",
            100.0 * s.device_params() as f64 / base_params as f64,
            network_len(&dm.co)
        )?;
    }
    Ok(())
}

fn hex(d: &[u8]) -> String {
    d.iter().map(|b| format!("{b:02x}")).collect()
}

fn describe_network(out: &mut impl Write, name: &str, h: &NetworkHeader) -> Result<()> {
    writeln!(
        out,
        "{name}: format v{}, architecture {}, {} tensors, {} params",
        h.version,
        hex(&h.digest),
        h.shapes.len(),
        h.param_count()
    )?;
    for s in &h.shapes {
        writeln!(out, "  {s:?}")?;
    }
    Ok(())
}

pub fn inspect(path: &Path, out: &mut impl Write) -> Result<()> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    match summarize(&bytes)? {
        CheckpointSummary::Network(h) => {
            writeln!(out, "network checkpoint, {} bytes", bytes.len())?;
            describe_network(out, "network", &h)?;
        }
        CheckpointSummary::Decoupled { digest, parts } => {
            writeln!(out, "decoupled checkpoint, {} bytes, layout {}", bytes.len(), hex(&digest))?;
            for (name, h) in ["encoder", "cloud", "co", "control"].iter().zip(&parts) {
                describe_network(out, name, h)?;
            }
        }
    }
    Ok(())
}
