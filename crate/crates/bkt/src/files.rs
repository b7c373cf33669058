//! CSV and JSON result files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use bkt_core::inference::StepSamples;
use bkt_core::scenario::ScenarioTruth;
use bkt_core::{ModelId, ObsVec, ParamVec, StateVec};
use serde::Serialize;

use crate::AppError;

/// 17 significant digits, enough to read back the identical `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, AppError> {
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn reader(path: &Path) -> Result<csv::Reader<File>, AppError> {
    if !path.exists() {
        return Err(AppError::MissingInput(path.display().to_string()));
    }
    csv::Reader::from_path(path).map_err(|e| AppError::io(path, e))
}

fn put(w: &mut csv::Writer<BufWriter<File>>, path: &Path, row: Vec<String>) -> Result<(), AppError> {
    w.write_record(row).map_err(|e| AppError::io(path, e))
}

fn finish(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<(), AppError> {
    w.flush().map_err(|e| AppError::io(path, e))
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}{i}"))
}

fn parse_f64(path: &Path, s: &str) -> Result<f64, AppError> {
    s.trim()
        .parse()
        .map_err(|e| AppError::io(path, format!("bad number `{s}`: {e}")))
}

fn parse_usize(path: &Path, s: &str) -> Result<usize, AppError> {
    s.trim()
        .parse()
        .map_err(|e| AppError::io(path, format!("bad integer `{s}`: {e}")))
}

fn model_from_label(path: &Path, s: &str) -> Result<ModelId, AppError> {
    ModelId::new(parse_usize(path, s)?).ok_or_else(|| AppError::io(path, "model labels start at 1"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), AppError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| AppError::io(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| AppError::io(path, e))
}

/// Writes `states.csv` and `meas.csv` for one simulated run.
pub fn write_truth(dir: &Path, truth: &ScenarioTruth) -> Result<(), AppError> {
    let nx = truth.initial_state.dim();
    let np = truth.params.first().map_or(0, |p| p.dim());
    let path = dir.join("states.csv");
    let mut w = writer(&path)?;
    let mut header = vec!["k".to_string(), "model".to_string()];
    header.extend(numbered("x", nx));
    header.extend(numbered("theta", np));
    put(&mut w, &path, header)?;
    let zero = ParamVec::zeros(np);
    let rows = std::iter::once((&truth.initial_model, &truth.initial_state, &zero)).chain(
        truth
            .model_seq
            .iter()
            .zip(&truth.states)
            .zip(&truth.params)
            .map(|((m, x), p)| (m, x, p)),
    );
    for (k, (m, x, p)) in rows.enumerate() {
        let mut row = vec![k.to_string(), m.label().to_string()];
        row.extend(x.iter().map(|v| fmt_f64(*v)));
        row.extend(p.iter().map(|v| fmt_f64(*v)));
        put(&mut w, &path, row)?;
    }
    finish(w, &path)?;

    let path = dir.join("meas.csv");
    let mut w = writer(&path)?;
    let ny = truth.measurements.iter().flatten().next().map_or(0, |y| y.dim());
    let mut header = vec!["k".to_string(), "m".to_string()];
    header.extend(numbered("y", ny));
    put(&mut w, &path, header)?;
    for (k, ys) in truth.measurements.iter().enumerate() {
        for (m, y) in ys.iter().enumerate() {
            let mut row = vec![(k + 1).to_string(), (m + 1).to_string()];
            row.extend(y.iter().map(|v| fmt_f64(*v)));
            put(&mut w, &path, row)?;
        }
    }
    finish(w, &path)
}

/// Reads back what [`write_truth`] wrote.
pub fn read_truth(dir: &Path, state_dim: usize) -> Result<ScenarioTruth, AppError> {
    let path = dir.join("states.csv");
    let mut r = reader(&path)?;
    let mut models = Vec::new();
    let mut states = Vec::new();
    let mut params = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| AppError::io(&path, e))?;
        if rec.len() < 2 + state_dim || parse_usize(&path, &rec[0])? != i {
            return Err(AppError::io(&path, format!("malformed row {}", i + 1)));
        }
        models.push(model_from_label(&path, &rec[1])?);
        let vals = (2..rec.len())
            .map(|c| parse_f64(&path, &rec[c]))
            .collect::<Result<Vec<_>, _>>()?;
        states.push(StateVec(vals[..state_dim].to_vec()));
        params.push(ParamVec(vals[state_dim..].to_vec()));
    }
    if states.len() < 2 {
        return Err(AppError::io(&path, "no simulated steps"));
    }
    let horizon = states.len() - 1;

    let path = dir.join("meas.csv");
    let mut r = reader(&path)?;
    let mut measurements: Vec<Vec<ObsVec>> = vec![Vec::new(); horizon];
    for rec in r.records() {
        let rec = rec.map_err(|e| AppError::io(&path, e))?;
        let k = parse_usize(&path, &rec[0])?;
        if k == 0 || k > horizon {
            return Err(AppError::io(&path, format!("step {k} outside 1..={horizon}")));
        }
        let y = (2..rec.len())
            .map(|c| parse_f64(&path, &rec[c]))
            .collect::<Result<Vec<_>, _>>()?;
        measurements[k - 1].push(ObsVec(y));
    }
    let initial_model = models.remove(0);
    let initial_state = states.remove(0);
    params.remove(0);
    Ok(ScenarioTruth {
        initial_state,
        initial_model,
        model_seq: models,
        params,
        states,
        measurements,
    })
}

/// One estimator's per-step output.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorOutput {
    pub name: String,
    pub states: Vec<StateVec>,
    pub models: Vec<ModelId>,
}

/// Writes `estimates.csv` and `models.csv`.
pub fn write_estimates(dir: &Path, outputs: &[EstimatorOutput]) -> Result<(), AppError> {
    let nx = outputs
        .iter()
        .flat_map(|o| o.states.first())
        .next()
        .map_or(0, |x| x.dim());
    let path = dir.join("estimates.csv");
    let mut w = writer(&path)?;
    let mut header = vec!["k".to_string(), "estimator".to_string()];
    header.extend(numbered("x", nx));
    put(&mut w, &path, header)?;
    for o in outputs {
        for (k, x) in o.states.iter().enumerate() {
            let mut row = vec![(k + 1).to_string(), o.name.clone()];
            row.extend(x.iter().map(|v| fmt_f64(*v)));
            put(&mut w, &path, row)?;
        }
    }
    finish(w, &path)?;

    let path = dir.join("models.csv");
    let mut w = writer(&path)?;
    put(
        &mut w,
        &path,
        vec!["k".into(), "estimator".into(), "model".into()],
    )?;
    for o in outputs {
        for (k, m) in o.models.iter().enumerate() {
            put(
                &mut w,
                &path,
                vec![(k + 1).to_string(), o.name.clone(), m.label().to_string()],
            )?;
        }
    }
    finish(w, &path)
}

/// Reads `estimates.csv` and `models.csv`, keyed by estimator name.
pub fn read_estimates(dir: &Path) -> Result<Vec<EstimatorOutput>, AppError> {
    let mut by_name: BTreeMap<String, EstimatorOutput> = BTreeMap::new();
    let path = dir.join("estimates.csv");
    let mut r = reader(&path)?;
    for rec in r.records() {
        let rec = rec.map_err(|e| AppError::io(&path, e))?;
        let k = parse_usize(&path, &rec[0])?;
        let entry = by_name
            .entry(rec[1].to_string())
            .or_insert_with(|| EstimatorOutput {
                name: rec[1].to_string(),
                states: Vec::new(),
                models: Vec::new(),
            });
        if k != entry.states.len() + 1 {
            return Err(AppError::io(&path, format!("steps of {} out of order", &rec[1])));
        }
        let x = (2..rec.len())
            .map(|c| parse_f64(&path, &rec[c]))
            .collect::<Result<Vec<_>, _>>()?;
        entry.states.push(StateVec(x));
    }
    let path = dir.join("models.csv");
    let mut r = reader(&path)?;
    for rec in r.records() {
        let rec = rec.map_err(|e| AppError::io(&path, e))?;
        let k = parse_usize(&path, &rec[0])?;
        let entry = by_name
            .get_mut(&rec[1])
            .ok_or_else(|| AppError::io(&path, format!("no estimates for {}", &rec[1])))?;
        if k != entry.models.len() + 1 {
            return Err(AppError::io(&path, format!("steps of {} out of order", &rec[1])));
        }
        entry.models.push(model_from_label(&path, &rec[2])?);
    }
    Ok(by_name.into_values().collect())
}

/// Writes `predictive.csv`.
pub fn write_predictive(dir: &Path, means: &[Vec<f64>]) -> Result<(), AppError> {
    let path = dir.join("predictive.csv");
    let mut w = writer(&path)?;
    let ny = means.first().map_or(0, |m| m.len());
    let mut header = vec!["k".to_string()];
    header.extend(numbered("y", ny));
    put(&mut w, &path, header)?;
    for (k, m) in means.iter().enumerate() {
        let mut row = vec![(k + 1).to_string()];
        row.extend(m.iter().map(|v| fmt_f64(*v)));
        put(&mut w, &path, row)?;
    }
    finish(w, &path)
}

/// Writes `samples.csv`: every retained draw of every step.
pub fn write_samples(dir: &Path, steps: &[StepSamples]) -> Result<(), AppError> {
    let path = dir.join("samples.csv");
    let mut w = writer(&path)?;
    let (nx, np) = steps.first().map_or((0, 0), |s| (s.state_dim, s.param_dim));
    let mut header = vec![
        "k".to_string(),
        "draw".into(),
        "prev_model".into(),
        "model".into(),
    ];
    header.extend(numbered("x", nx));
    header.extend(numbered("theta", np));
    put(&mut w, &path, header)?;
    for (k, s) in steps.iter().enumerate() {
        for i in 0..s.len() {
            let mut row = vec![
                (k + 1).to_string(),
                (i + 1).to_string(),
                s.prev_models[i].label().to_string(),
                s.models[i].label().to_string(),
            ];
            row.extend(s.state(i).iter().map(|v| fmt_f64(*v)));
            row.extend(s.param(i).iter().map(|v| fmt_f64(*v)));
            put(&mut w, &path, row)?;
        }
    }
    finish(w, &path)
}
