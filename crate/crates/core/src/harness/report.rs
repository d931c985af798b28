//! Result rows and their CSV encodings.
//!
//! Column orders are fixed:
//!
//! * `kpi.csv`: agent, load_mbps, seed, throughput_mbps, delay_ms, drop_rate, objective
//! * `sweep.csv`: threshold, load_mbps, seeds, throughput_mbps, throughput_std, delay_ms, delay_std, drop_rate, drop_rate_std
//! * `sweep_runs.csv`: threshold, load_mbps, seed, throughput_mbps, delay_ms, drop_rate, objective
//! * `trace.csv`: step, ue, rat, q_lte, q_nr, threshold, switched
//! * `summary.csv`: agent, load_mbps, seeds, then mean and std of throughput_mbps, delay_ms, drop_rate, objective
//! * `train_log.csv`: episode, step, epsilon, threshold, to_lte, to_nr, r_in, r_ex, loss, meta_loss
//!
//! Floats are written with 6 significant digits; absent values are empty.

use std::io::{self, Write};

use super::KpiReport;
use crate::policy::StepLog;
use crate::radio::Rat;

/// Sample mean and standard deviation (n − 1); the deviation is 0 below two
/// samples.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `x` rounded to 6 significant digits, shortest form.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("valid float literal");
    format!("{rounded}")
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRow {
    pub episode: u32,
    pub step: u64,
    pub epsilon: f64,
    pub threshold: f64,
    pub to_lte: u32,
    pub to_nr: u32,
    pub r_in: f64,
    pub r_ex: Option<f64>,
    pub loss: Option<f64>,
    pub meta_loss: Option<f64>,
}

impl TrainRow {
    pub fn new(episode: u32, step: u64, log: &StepLog) -> Self {
        Self {
            episode,
            step,
            epsilon: log.epsilon,
            threshold: log.threshold,
            to_lte: log.actions[0],
            to_nr: log.actions[1],
            r_in: log.mean_intrinsic,
            r_ex: log.extrinsic,
            loss: log.loss,
            meta_loss: log.meta_loss,
        }
    }
}

/// One threshold-sweep cell; pairs are `(mean, sample std)` over seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub threshold: f64,
    pub load_mbps: f64,
    pub seeds: usize,
    pub throughput_mbps: (f64, f64),
    pub delay_ms: (f64, f64),
    pub drop_rate: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KpiSummary {
    pub agent: String,
    pub load_mbps: f64,
    pub seeds: usize,
    pub throughput_mbps: (f64, f64),
    pub delay_ms: (f64, f64),
    pub drop_rate: (f64, f64),
    pub objective: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub ue: usize,
    pub rat: Rat,
    pub q_lte: f64,
    pub q_nr: f64,
    pub threshold: f64,
    pub switched: bool,
}

pub fn write_kpi_csv<W: Write>(mut w: W, reports: &[KpiReport]) -> io::Result<()> {
    writeln!(w, "agent,load_mbps,seed,throughput_mbps,delay_ms,drop_rate,objective")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.agent,
            fmt_sig(r.load_mbps),
            r.seed,
            fmt_sig(r.throughput_mbps),
            fmt_sig(r.delay_ms),
            fmt_sig(r.drop_rate),
            fmt_sig(r.objective)
        )?;
    }
    Ok(())
}

pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(w, "threshold,load_mbps,seeds,throughput_mbps,throughput_std,delay_ms,delay_std,drop_rate,drop_rate_std")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            fmt_sig(r.threshold),
            fmt_sig(r.load_mbps),
            r.seeds,
            fmt_sig(r.throughput_mbps.0),
            fmt_sig(r.throughput_mbps.1),
            fmt_sig(r.delay_ms.0),
            fmt_sig(r.delay_ms.1),
            fmt_sig(r.drop_rate.0),
            fmt_sig(r.drop_rate.1)
        )?;
    }
    Ok(())
}

/// Per-seed rows behind a threshold sweep.
pub fn write_sweep_runs_csv<W: Write>(mut w: W, runs: &[(f64, KpiReport)]) -> io::Result<()> {
    writeln!(w, "threshold,load_mbps,seed,throughput_mbps,delay_ms,drop_rate,objective")?;
    for (th, r) in runs {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt_sig(*th),
            fmt_sig(r.load_mbps),
            r.seed,
            fmt_sig(r.throughput_mbps),
            fmt_sig(r.delay_ms),
            fmt_sig(r.drop_rate),
            fmt_sig(r.objective)
        )?;
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(mut w: W, rows: &[KpiSummary]) -> io::Result<()> {
    writeln!(
        w,
        "agent,load_mbps,seeds,throughput_mbps,throughput_std,delay_ms,delay_std,drop_rate,drop_rate_std,objective,objective_std"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.agent,
            fmt_sig(r.load_mbps),
            r.seeds,
            fmt_sig(r.throughput_mbps.0),
            fmt_sig(r.throughput_mbps.1),
            fmt_sig(r.delay_ms.0),
            fmt_sig(r.delay_ms.1),
            fmt_sig(r.drop_rate.0),
            fmt_sig(r.drop_rate.1),
            fmt_sig(r.objective.0),
            fmt_sig(r.objective.1)
        )?;
    }
    Ok(())
}

pub fn write_trace_csv<W: Write>(mut w: W, rows: &[TraceRow]) -> io::Result<()> {
    writeln!(w, "step,ue,rat,q_lte,q_nr,threshold,switched")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.step,
            r.ue,
            r.rat.as_str(),
            fmt_sig(r.q_lte),
            fmt_sig(r.q_nr),
            fmt_sig(r.threshold),
            u8::from(r.switched)
        )?;
    }
    Ok(())
}

pub fn write_train_csv<W: Write>(mut w: W, rows: &[TrainRow]) -> io::Result<()> {
    writeln!(w, "episode,step,epsilon,threshold,to_lte,to_nr,r_in,r_ex,loss,meta_loss")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.episode,
            r.step,
            fmt_sig(r.epsilon),
            fmt_sig(r.threshold),
            r.to_lte,
            r.to_nr,
            fmt_sig(r.r_in),
            opt(r.r_ex),
            opt(r.loss),
            opt(r.meta_loss)
        )?;
    }
    Ok(())
}
