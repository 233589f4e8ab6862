use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use sepode::experiments::{Data, McSummary, RateReport, ReplicateOutcome};
use sepode::smoothing::{Observations, RepeatedObservations};
use sepode::Error;

use crate::AppError;

/// Rounds to 6 significant digits and prints the shortest decimal form.
pub fn sig6(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{v:.5e}").parse().unwrap_or(v);
    format!("{rounded}")
}

pub fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<(), AppError> {
    match path {
        Some(p) => {
            let mut f = File::create(p).map_err(|e| AppError::io(p, e))?;
            f.write_all(bytes).map_err(|e| AppError::io(p, e))
        }
        None => io::stdout().write_all(bytes).map_err(|e| AppError::Io(e.to_string())),
    }
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("in-memory CSV writer cannot fail")
}

/// `t,replicate,y1..yd,seed`, full precision so a round trip is exact.
pub fn data_csv(data: &Data, seed: u64) -> Vec<u8> {
    let d = data.dim();
    let mut w = csv_writer();
    let mut header = vec!["t".to_string(), "replicate".to_string()];
    header.extend((1..=d).map(|k| format!("y{k}")));
    header.push("seed".into());
    w.write_record(&header).unwrap();
    let mut row = |t: f64, r: usize, y: &[f64]| {
        let mut rec = vec![format!("{t}"), r.to_string()];
        rec.extend(y.iter().map(|v| format!("{v}")));
        rec.push(seed.to_string());
        w.write_record(&rec).unwrap();
    };
    match data {
        Data::Grid(o) => {
            for (i, &t) in o.times().iter().enumerate() {
                row(t, 0, o.row(i));
            }
        }
        Data::Repeated(o) => {
            for (i, &t) in o.times().iter().enumerate() {
                for (r, y) in o.replicates(i).chunks_exact(d).enumerate() {
                    row(t, r, y);
                }
            }
        }
    }
    finish(w)
}

fn bad(msg: impl Into<String>) -> AppError {
    AppError::Core(Error::InvalidArgument(msg.into()))
}

/// Parses a data CSV produced by `simulate` (or written by hand in the same
/// layout).
pub fn read_data(path: &Path, d: usize, repeated: bool, horizon: f64) -> Result<Data, AppError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => AppError::Io(format!("{}: {e}", path.display())),
        _ => bad(format!("{}: {e}", path.display())),
    })?;
    let headers = reader.headers().map_err(|e| bad(format!("data header: {e}")))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let t_col = col("t").ok_or_else(|| bad("data CSV lacks a 't' column"))?;
    let y_cols: Vec<usize> = (1..=d)
        .map(|k| col(&format!("y{k}")).ok_or_else(|| bad(format!("data CSV lacks column y{k}"))))
        .collect::<Result<_, _>>()?;
    if headers.iter().any(|h| h.trim().starts_with('y') && !y_cols.iter().any(|&c| headers[c].trim() == h.trim())) {
        return Err(bad(format!("data CSV has more than the model's {d} state columns")));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(format!("data row {}: {e}", line + 2)))?;
        let num = |c: usize| -> Result<f64, AppError> {
            rec.get(c)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| bad(format!("data row {}: column {} is not a number", line + 2, headers[c].trim())))
        };
        times.push(num(t_col)?);
        for &c in &y_cols {
            values.push(num(c)?);
        }
    }
    if times.is_empty() {
        return Err(bad("data CSV has no rows"));
    }
    if !repeated {
        return Ok(Data::Grid(Observations::new(times, values, d, horizon)?));
    }
    let mut ts: Vec<f64> = Vec::new();
    let mut blocks: Vec<Vec<f64>> = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        if ts.last() != Some(&t) {
            ts.push(t);
            blocks.push(Vec::new());
        }
        blocks.last_mut().unwrap().extend_from_slice(&values[i * d..(i + 1) * d]);
    }
    Ok(Data::Repeated(RepeatedObservations::new(ts, blocks, d, horizon)?))
}

/// `param,true,mean,sd,are_pct` plus `traj_l2` and `traj_sup` rows.
pub fn summary_csv(s: &McSummary) -> Vec<u8> {
    let mut w = csv_writer();
    w.write_record(["param", "true", "mean", "sd", "are_pct"]).unwrap();
    for p in &s.params {
        w.write_record([p.name.clone(), sig6(p.truth), sig6(p.mean), sig6(p.sd), sig6(p.are_pct)]).unwrap();
    }
    for (name, (mean, sd)) in [("traj_l2", s.traj_l2), ("traj_sup", s.traj_sup)] {
        w.write_record([name.to_string(), String::new(), sig6(mean), sig6(sd), String::new()]).unwrap();
    }
    finish(w)
}

/// One row per replicate: estimates and trajectory errors, or the failure.
pub fn replicates_csv(raw: &[ReplicateOutcome], p: usize, d: usize, q: usize) -> Vec<u8> {
    let mut w = csv_writer();
    let mut header = vec!["replicate".to_string(), "status".to_string()];
    header.extend((1..=p).map(|k| format!("theta{k}")));
    header.extend((1..=d).map(|k| format!("xi{k}")));
    header.extend((1..=q).map(|k| format!("nu{k}")));
    header.extend(["traj_l2", "traj_sup", "error"].map(String::from));
    w.write_record(&header).unwrap();
    for r in raw {
        let mut rec = vec![r.index.to_string()];
        match &r.result {
            Ok(e) => {
                rec.push(if e.nu_converged { "ok" } else { "nu-unconverged" }.into());
                rec.extend(e.theta.iter().chain(&e.xi).chain(&e.nu).map(|v| format!("{v}")));
                rec.push(format!("{}", e.traj_l2));
                rec.push(format!("{}", e.traj_sup));
                rec.push(String::new());
            }
            Err(msg) => {
                rec.push("failed".into());
                rec.extend(std::iter::repeat_n(String::new(), p + d + q + 2));
                rec.push(msg.clone());
            }
        }
        w.write_record(&rec).unwrap();
    }
    finish(w)
}

/// `n,rmse_theta,rmse_xi` per rung, then `slope,<slope>,<standard error>`.
pub fn rate_csv(r: &RateReport) -> Vec<u8> {
    let mut w = csv_writer();
    w.write_record(["n", "rmse_theta", "rmse_xi"]).unwrap();
    for rung in &r.rungs {
        w.write_record([rung.n.to_string(), sig6(rung.rmse_theta), sig6(rung.rmse_xi)]).unwrap();
    }
    w.write_record(["slope".to_string(), sig6(r.slope), sig6(r.slope_se)]).unwrap();
    finish(w)
}
