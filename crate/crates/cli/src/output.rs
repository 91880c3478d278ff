//! CSV reports.
//!
//! `metrics.csv` (schema `dccl-metrics/1`), one row per run:
//!
//! | column | meaning |
//! |---|---|
//! | `schema` | always `dccl-metrics/1` |
//! | `run_id` | `<method>-s<seed>[-aco<n>_<d>]` |
//! | `timestamp` | Unix seconds at row creation; blank under `--no-timestamp` |
//! | `method`, `seed` | as configured |
//! | `status` | `ok` or `error` |
//! | `error` | error message for failed runs |
//! | `accuracy` | the method's full-test accuracy (decoupled mode for decoupled models) |
//! | `acc_decoupled`, `acc_device_side`, `acc_cloud_only`, `acc_co_only` | per-mode accuracies; blank where the mode does not exist |
//! | `acc_device_classes` | accuracy on the device-class test samples |
//! | `rounds` | collaborative rounds run |
//! | `setup_bytes`, `round_bytes`, `finetune_bytes` | channel traffic of the one-time setup, of round 1 (both directions) and of finetuning |
//! | `uplink_bytes`, `downlink_bytes` | channel totals |
//! | `device_params`, `device_flops` | what the device holds / runs per inference |
//! | `cloud_params` | parameters served by the cloud |
//! | `alpha_cl`, `alpha_co` | split ratios as `n/d` |
//! | `device_classes` | device class ids joined by `;` |
//! | `wall_seconds` | run time; blank under `--no-timestamp` |
//!
//! Floats are written in Rust's shortest round-trip form, so parsing a
//! cell gives back the exact value.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use dccl_core::model::count::{layer_costs, DecoupledSizes};
use dccl_core::model::{Alpha, ModelSpec};
use dccl_core::simnet::{ExperimentConfig, FeasibilityReport, MetricsRecord, RoundTrace};

pub const METRICS_SCHEMA: &str = "dccl-metrics/1";

pub const METRICS_COLUMNS: [&str; 26] = [
    "schema",
    "run_id",
    "timestamp",
    "method",
    "seed",
    "status",
    "error",
    "accuracy",
    "acc_decoupled",
    "acc_device_side",
    "acc_cloud_only",
    "acc_co_only",
    "acc_device_classes",
    "rounds",
    "setup_bytes",
    "round_bytes",
    "finetune_bytes",
    "uplink_bytes",
    "downlink_bytes",
    "device_params",
    "device_flops",
    "cloud_params",
    "alpha_cl",
    "alpha_co",
    "device_classes",
    "wall_seconds",
];

pub const TRACE_COLUMNS: [&str; 9] = [
    "round",
    "cloud_epochs_done",
    "device_epochs_done",
    "accuracy",
    "device_side_accuracy",
    "cloud_loss",
    "device_loss",
    "uplink_bytes",
    "downlink_bytes",
];

pub const SIZES_COLUMNS: [&str; 15] = [
    "run_id",
    "alpha_cl",
    "alpha_co",
    "base_params",
    "base_flops",
    "decoupled_params",
    "decoupled_flops",
    "device_params",
    "device_flops",
    "encoder_params",
    "cloud_params",
    "co_params",
    "control_params",
    "co_bytes",
    "device_ratio",
];

pub const FEASIBILITY_COLUMNS: [&str; 7] = [
    "seed",
    "status",
    "base",
    "with_cloud",
    "with_control",
    "without_control",
    "cloud_only",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn alpha(a: Alpha) -> String {
    format!("{}/{}", a.numer(), a.denom())
}

/// Outcome of one planned run as it appears in `metrics.csv`.
pub enum RowOutcome<'a> {
    Ok(&'a MetricsRecord),
    Failed(String),
}

pub fn metrics_row(id: &str, cfg: &ExperimentConfig, outcome: RowOutcome<'_>, timestamp: Option<u64>) -> Vec<String> {
    let classes = cfg
        .data
        .device_classes
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(";");
    let mut row = vec![
        METRICS_SCHEMA.to_string(),
        id.to_string(),
        opt(timestamp),
        cfg.method.to_string(),
        cfg.seed.to_string(),
    ];
    match outcome {
        RowOutcome::Ok(m) => {
            row.extend([
                "ok".to_string(),
                String::new(),
                m.accuracy.to_string(),
                opt(m.acc_decoupled),
                opt(m.acc_device_side),
                opt(m.acc_cloud_only),
                opt(m.acc_co_only),
                m.acc_device_classes.to_string(),
                m.rounds.to_string(),
                m.setup_bytes.to_string(),
                opt(m.round_bytes),
                m.finetune_bytes.to_string(),
                m.uplink_bytes.to_string(),
                m.downlink_bytes.to_string(),
                m.device_params.to_string(),
                m.device_flops.to_string(),
                m.cloud_params.to_string(),
            ]);
            row.extend([alpha(cfg.model.split.alpha_cl), alpha(cfg.model.split.alpha_co), classes]);
            row.push(if timestamp.is_some() { m.wall_seconds.to_string() } else { String::new() });
        }
        RowOutcome::Failed(msg) => {
            row.extend(["error".to_string(), msg]);
            row.extend(std::iter::repeat_n(String::new(), 15));
            row.extend([alpha(cfg.model.split.alpha_cl), alpha(cfg.model.split.alpha_co), classes]);
            row.push(String::new());
        }
    }
    debug_assert_eq!(row.len(), METRICS_COLUMNS.len());
    row
}

pub fn trace_rows(trace: &[RoundTrace]) -> Vec<Vec<String>> {
    trace
        .iter()
        .map(|t| {
            vec![
                t.round.to_string(),
                t.cloud_epochs_done.to_string(),
                t.device_epochs_done.to_string(),
                t.accuracy.to_string(),
                opt(t.device_side_accuracy),
                t.cloud_loss.to_string(),
                t.device_loss.to_string(),
                t.uplink_bytes.to_string(),
                t.downlink_bytes.to_string(),
            ]
        })
        .collect()
}

/// Closed-form parameter/FLOP total of a spec.
pub fn spec_cost(spec: &ModelSpec) -> Result<(u64, u64)> {
    let costs = layer_costs(&spec.input_shape, &spec.layers)?;
    Ok((costs.iter().map(|c| c.params).sum(), costs.iter().map(|c| c.flops).sum()))
}

pub fn sizes_row(id: &str, cfg: &ExperimentConfig, sizes: &DecoupledSizes, co_bytes: usize) -> Result<Vec<String>> {
    let (base_params, base_flops) = spec_cost(&cfg.model.base)?;
    Ok(vec![
        id.to_string(),
        alpha(cfg.model.split.alpha_cl),
        alpha(cfg.model.split.alpha_co),
        base_params.to_string(),
        base_flops.to_string(),
        sizes.decoupled_params().to_string(),
        sizes.decoupled_flops().to_string(),
        sizes.device_params().to_string(),
        sizes.device_flops().to_string(),
        sizes.encoder_params.to_string(),
        sizes.cloud_params.to_string(),
        sizes.co_params.to_string(),
        sizes.control_params.to_string(),
        co_bytes.to_string(),
        (sizes.device_params() as f64 / base_params as f64).to_string(),
    ])
}

pub fn feasibility_row(seed: u64, r: std::result::Result<&FeasibilityReport, String>) -> Vec<String> {
    match r {
        Ok(r) => vec![
            seed.to_string(),
            "ok".to_string(),
            r.base.to_string(),
            r.with_cloud.to_string(),
            r.with_control.to_string(),
            r.without_control.to_string(),
            r.cloud_only.to_string(),
        ],
        Err(msg) => {
            let mut row = vec![seed.to_string(), format!("error: {msg}")];
            row.extend(std::iter::repeat_n(String::new(), 5));
            row
        }
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn describe(l: &dccl_core::model::LayerSpec) -> String {
    use dccl_core::model::LayerSpec::*;
    let b = |bias: bool| if bias { " +bias" } else { "" };
    match *l {
        Conv { out_channels, kernel, stride, padding, bias } => {
            format!("conv {out_channels}@{kernel}x{kernel} stride {stride} pad {padding}{}", b(bias))
        }
        Maxpool { window, stride } => format!("maxpool {window}x{window} stride {stride}"),
        Fc { out_features, bias } => format!("fc {out_features}{}", b(bias)),
        Relu => "relu".into(),
        Flatten => "flatten".into(),
    }
}

/// Per-layer table of one spec, for `report-sizes`.
pub fn layer_table(out: &mut impl Write, title: &str, input_shape: &[usize], layers: &[dccl_core::model::LayerSpec]) -> Result<(u64, u64)> {
    writeln!(out, "{title}")?;
    let costs = layer_costs(input_shape, layers)?;
    let (mut p, mut f) = (0, 0);
    for (i, (l, c)) in layers.iter().zip(&costs).enumerate() {
        if c.params == 0 && c.flops == 0 {
            continue;
        }
        writeln!(out, "  {i:>3}  {:<48} {:>12} params {:>14} flops", describe(l), c.params, c.flops)?;
        p += c.params;
        f += c.flops;
    }
    writeln!(out, "  total{:>61} params {f:>14} flops", p)?;
    Ok((p, f))
}
