//! Plain-text output files. Angles are written in degrees.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use super::compare::ComparisonTable;
use super::metrics::{CycleMetrics, Summary};
use super::scenario::ScenarioOutput;
use crate::error::Result;

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

fn num(v: f64) -> String {
    v.to_string()
}

/// Tick trace header. The fixed columns cover the knee channels; hip
/// channels, when stimulated, append their own pulse width, fitness and
/// activation columns after `path_phase` and `cycle`.
pub fn trace_header(channels: &[String]) -> Vec<String> {
    let mut h: Vec<String> = [
        "t_s", "side", "hip_q", "knee_q", "hip_qref", "knee_qref", "hip_eps", "knee_eps", "hip_tau_exo",
        "knee_tau_exo", "pw_quad", "pw_ham", "mu_quad", "mu_ham", "a_quad", "a_ham", "phase", "r_fesb",
        "path_phase", "cycle",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for c in channels.iter().skip(2) {
        h.extend([format!("pw_{c}"), format!("mu_{c}"), format!("a_{c}")]);
    }
    h
}

pub fn write_trace(out: &ScenarioOutput, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(trace_header(&out.channels))?;
    for r in &out.trace {
        let q = r.q.to_degrees();
        let qr = r.q_ref.to_degrees();
        let e = r.eps.to_degrees();
        let mut rec = vec![
            num(r.t),
            r.side.to_string(),
            num(q.hip),
            num(q.knee),
            num(qr.hip),
            num(qr.knee),
            num(e.hip),
            num(e.knee),
            num(r.tau_exo.hip),
            num(r.tau_exo.knee),
            num(r.pulse_width[0]),
            num(r.pulse_width[1]),
            num(r.mu[0]),
            num(r.mu[1]),
            num(r.activation[0]),
            num(r.activation[1]),
            r.gait_phase.as_str().to_string(),
            num(r.r_fesb.to_degrees()),
            num(r.path_phase),
            r.cycle.to_string(),
        ];
        for i in 2..r.pulse_width.len() {
            rec.extend([num(r.pulse_width[i]), num(r.mu[i]), num(r.activation[i])]);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics(metrics: &[CycleMetrics], channels: &[String], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = [
        "side",
        "cycle",
        "behavior",
        "ticks",
        "hip_rms_err",
        "knee_rms_err",
        "hip_rms_tau_exo",
        "knee_rms_tau_exo",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for prefix in ["rms_pw", "mean_mu", "gamma_st", "gamma_sw"] {
        header.extend(channels.iter().map(|c| format!("{prefix}_{c}")));
    }
    header.extend(["hip_k_st", "knee_k_st", "hip_k_sw", "knee_k_sw", "r_fesb"].map(String::from));
    w.write_record(&header)?;
    for m in metrics {
        let err = m.rms_err.to_degrees();
        let mut rec = vec![
            m.side.to_string(),
            m.cycle.to_string(),
            match m.behavior {
                crate::plant::BehaviorLabel::HighError => "high_error".into(),
                crate::plant::BehaviorLabel::LowError => "low_error".into(),
            },
            m.ticks.to_string(),
            num(err.hip),
            num(err.knee),
            num(m.rms_exo_torque.hip),
            num(m.rms_exo_torque.knee),
        ];
        for v in [&m.rms_pulse_width, &m.mean_fitness, &m.gamma_st, &m.gamma_sw] {
            rec.extend(v.iter().copied().map(num));
        }
        rec.extend([m.k_st.hip, m.k_st.knee, m.k_sw.hip, m.k_sw.knee, m.r_fesb.to_degrees()].map(num));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(summary: &Summary, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.serialize(summary)?;
    w.flush()?;
    Ok(())
}

pub fn write_comparison(table: &ComparisonTable, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "variant",
        "rms_error_deg",
        "rms_exo_torque_nm",
        "rms_pulse_width_us",
        "mean_knee_fatigue",
        "norm_error",
        "norm_robot",
        "norm_stimulation",
        "norm_fatigue",
        "cost",
    ])?;
    for r in &table.rows {
        let mut rec = vec![r.variant.to_string()];
        rec.extend(
            [
                r.raw.error,
                r.raw.robot,
                r.raw.stimulation,
                r.raw.fatigue,
                r.normalised.error,
                r.normalised.robot,
                r.normalised.stimulation,
                r.normalised.fatigue,
                r.cost,
            ]
            .map(num),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `trace.csv`, `metrics.csv` and `summary.csv` into `dir`, with an
/// optional file-name prefix. Returns the paths written.
pub fn write_outputs(out: &ScenarioOutput, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let name = |base: &str| dir.join(format!("{prefix}{base}"));
    let mut written = Vec::new();
    if !out.trace.is_empty() {
        let p = name("trace.csv");
        write_trace(out, &p)?;
        written.push(p);
    }
    let p = name("metrics.csv");
    write_metrics(&out.metrics, &out.channels, &p)?;
    written.push(p);
    let p = name("summary.csv");
    write_summary(&out.summary, &p)?;
    written.push(p);
    Ok(written)
}

