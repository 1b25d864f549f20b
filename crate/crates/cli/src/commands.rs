use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use bao::diagnostics::{asmd_table, weight_summary, BalanceTable, Reference, ASMD_WARNING};
use bao::estimate::{prepare_balance, run_bao, run_bao_censored, MsmDesign};
use bao::panel::{write_panel, PanelDataset, PathStrata};
use bao::rng::{self, tag};
use bao::simlab::{self, figure_svg, Method, Study, StudyConfig};
use bao::tune::{tune_delta, TuningMode};
use bao::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::args::{DataArgs, DiagnoseArgs, EstimateArgs, ModeArg, SimulateArgs, TuneArgs};
use crate::config::{write_atomic, write_csv_with_config, write_json, RunConfig, DEFAULT_SEED};

fn base_config(input: &DataArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(input.config.as_deref())?;
    if input.data.is_some() {
        cfg.data = input.data.clone();
    }
    if input.seed.is_some() {
        cfg.seed = input.seed;
    }
    cfg.seed = Some(cfg.seed());
    Ok(cfg)
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let base = RunConfig::load(a.config.as_deref())?;
    let study = Study::try_from(a.study)?;
    let methods = a.methods.iter().map(|m| m.trim().parse()).collect::<Result<Vec<Method>>>()?;
    let seed = a.seed.or(base.seed).unwrap_or(DEFAULT_SEED);
    let mut config = StudyConfig::new(study, a.n, a.reps, seed, methods);
    config.bootstrap = a.bootstrap.unwrap_or(base.bao.bootstrap);
    config.bao = base.bao;
    config.bao.bootstrap = config.bootstrap;
    if let Some(name) = &base.msm {
        config.msm = Some(MsmDesign::named(name, study.periods())?);
    }
    config.validate()?;
    let echo = serde_json::to_value(&config)?;

    if let Some(path) = &a.data_out {
        let mut data = simlab::replicate_data(&config, 0)?;
        if a.censor {
            let mut stream = rng::keyed(seed, &[tag::CENSOR, u64::from(study.number()), a.n as u64, 0]);
            data = simlab::apply_mar_censoring(&data, -2.0, &mut stream)?;
        }
        write_csv_with_config(path, &echo, |w| write_panel(&data, w))?;
    }

    let report = simlab::run_replications(&config)?;
    write_csv_with_config(&a.out, &echo, |w| report.write_csv(w))?;
    if let Some(path) = &a.json {
        write_json(path, &report)?;
    }
    if let Some(dir) = &a.svg {
        let stem = format!("asmd_cv_study{}_n{}", study.number(), a.n);
        let title = format!("Study {}, n = {}, {} replicates", study.number(), a.n, a.reps);
        let comment = echo.to_string().replace("--", "- -");
        write_atomic(&dir.join(format!("{stem}.svg")), |w| {
            writeln!(w, "<!-- config: {comment} -->")?;
            w.write_all(figure_svg(&report.figure, &title).as_bytes())?;
            Ok(())
        })?;
        write_csv_with_config(&dir.join(format!("{stem}.csv")), &echo, |w| report.write_figure_csv(w))?;
    }
    Ok(())
}

pub fn tune(a: TuneArgs) -> Result<()> {
    let mut cfg = base_config(&a.input)?;
    if let Some(c) = a.candidates {
        cfg.bao.tuning.candidates = c;
    }
    if let Some(r) = a.resamples {
        cfg.bao.tuning.resamples = r;
    }
    if let Some(m) = a.mode {
        cfg.bao.tuning.mode = match m {
            ModeArg::Evaluate => TuningMode::Evaluate,
            ModeArg::Resolve => TuningMode::Resolve,
        };
    }
    let data = cfg.load_data()?;
    let spec = cfg.resolve_balance(&data, a.input.delta)?;
    let report = tune_delta(&data, &spec, &cfg.bao.tuning, &cfg.bao.ladder, &cfg.bao.solver, cfg.seed())?;
    write_json(&a.out, &json!({ "config": cfg.to_json()?, "tuning": report }))
}

fn write_weights(path: &Path, echo: &serde_json::Value, data: &PanelDataset, unit_weights: &[f64]) -> Result<()> {
    let strata = PathStrata::build(data);
    write_csv_with_config(path, echo, |w| {
        writeln!(w, "id,path,weight")?;
        for p in strata.realized_paths() {
            let members = strata.members(&p);
            let total: f64 = members.iter().map(|&i| unit_weights[i]).sum();
            if total <= 0.0 {
                continue;
            }
            for &i in members {
                writeln!(w, "{},{},{}", data.ids()[i], p, unit_weights[i] / total)?;
            }
        }
        Ok(())
    })
}

pub fn estimate(a: EstimateArgs) -> Result<()> {
    let mut cfg = base_config(&a.input)?;
    if a.msm.is_some() {
        cfg.msm = a.msm.clone();
    }
    if a.method.is_some() {
        cfg.method = a.method.clone();
    }
    if let Some(b) = a.bootstrap {
        cfg.bao.bootstrap = b;
    }
    cfg.msm.get_or_insert_with(|| "additive".into());
    cfg.method.get_or_insert_with(|| "bao".into());
    let method: Method = cfg.method.as_deref().unwrap_or_default().parse()?;
    let data = cfg.load_data()?;
    let design = MsmDesign::named(cfg.msm.as_deref().unwrap_or_default(), data.periods())?;
    let spec = cfg.resolve_balance(&data, a.input.delta)?;
    let echo = cfg.to_json()?;
    let seed = cfg.seed();

    if method != Method::Bao {
        if a.weights_out.is_some() || a.residuals_out.is_some() {
            return Err(Error::Argument("--weights-out and --residuals-out need --method bao".into()));
        }
        let out = simlab::run_method(&data, &design, method, cfg.bao.bootstrap, &cfg.bao, seed)?;
        let result = json!({
            "method": method,
            "labels": design.labels(),
            "coefficients": out.coefficients,
            "ci_lower": out.ci_lower,
            "ci_upper": out.ci_upper,
            "diagnostics": out.diagnostics,
        });
        return write_json(&a.out, &json!({ "config": echo, "result": result }));
    }

    let result = if data.has_censoring() {
        run_bao_censored(&data, &spec, &design, &cfg.bao, seed)?
    } else {
        run_bao(&data, &spec, &design, &cfg.bao, seed)?
    };
    for warning in &result.warnings {
        log::warn!("{warning}");
    }
    write_json(&a.out, &json!({ "config": echo, "result": result }))?;
    if let Some(path) = &a.weights_out {
        write_weights(path, &echo, &data, &result.unit_weights)?;
    }
    if let Some(path) = &a.residuals_out {
        let setup = prepare_balance(&data, &spec)?;
        write_csv_with_config(path, &echo, |w| setup.residuals.write_csv(data.ids(), w))?;
    }
    Ok(())
}

fn read_weights(path: &Path, data: &PanelDataset) -> Result<Vec<f64>> {
    let file = File::open(path).map_err(|e| Error::Validation(format!("cannot open {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(BufReader::new(file));
    let index: HashMap<&str, usize> = data.ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut weights = vec![0.0; data.n()];
    for (row, record) in reader.records().enumerate() {
        let parse = |message: String| Error::Parse { row: row + 1, message };
        let record = record.map_err(|e| parse(e.to_string()))?;
        let (id, w) = (record.get(0).unwrap_or_default(), record.get(2).unwrap_or_default());
        let &i = index.get(id).ok_or_else(|| parse(format!("unknown unit id {id:?}")))?;
        let w: f64 = w.trim().parse().map_err(|_| parse(format!("bad weight {w:?}")))?;
        if !w.is_finite() || w < 0.0 {
            return Err(parse(format!("weight must be finite and nonnegative, got {w}")));
        }
        weights[i] = w;
    }
    Ok(weights)
}

#[derive(Serialize)]
struct PathSummary {
    path: String,
    count: usize,
    cv: f64,
    ess: f64,
    max_weight: f64,
}

pub fn diagnose(a: DiagnoseArgs) -> Result<()> {
    let mut cfg = base_config(&a.input)?;
    let data = cfg.load_data()?;
    let spec = cfg.resolve_balance(&data, a.input.delta)?;
    let (weights, table): (Vec<f64>, BalanceTable) = match &a.weights {
        Some(path) => {
            let w = read_weights(path, &data)?;
            let setup = prepare_balance(&data, &spec)?;
            let table = asmd_table(&setup.residuals.residuals, &setup.residuals.labels, &setup.strata, &w, Reference::Unweighted);
            (w, table)
        }
        None => {
            cfg.bao.bootstrap = 0;
            let design = MsmDesign::additive(data.periods());
            let result = if data.has_censoring() {
                run_bao_censored(&data, &spec, &design, &cfg.bao, cfg.seed())?
            } else {
                run_bao(&data, &spec, &design, &cfg.bao, cfg.seed())?
            };
            (result.unit_weights, result.balance)
        }
    };
    let echo = cfg.to_json()?;
    write_csv_with_config(&a.out, &echo, |w| table.write_csv(w))?;

    let strata = PathStrata::build(&data);
    let paths: Vec<PathSummary> = strata
        .realized_paths()
        .into_iter()
        .map(|p| {
            let w: Vec<f64> = strata.members(&p).iter().map(|&i| weights[i]).collect();
            let total: f64 = w.iter().sum();
            let normalized: Vec<f64> = w.iter().map(|x| if total > 0.0 { x / total } else { f64::NAN }).collect();
            let s = weight_summary(&normalized);
            PathSummary { path: p.to_string(), count: w.len(), cv: s.cv, ess: s.ess, max_weight: s.max_weight }
        })
        .collect();
    let summary = json!({
        "config": echo,
        "paths": paths,
        "mean_pre_asmd": table.mean_pre_asmd(),
        "mean_post_asmd": table.mean_post_asmd(),
        "max_post_asmd": table.max_post_asmd(),
        "rows_above_threshold": table.above(ASMD_WARNING).count(),
        "threshold": ASMD_WARNING,
    });
    write_json(&a.summary, &summary)
}
