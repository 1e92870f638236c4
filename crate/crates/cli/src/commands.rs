use std::io::Write;
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rap_core::harness::experiment::STATIONARY_RHO;
use rap_core::harness::{f_score, run_replications, ExperimentConfig};
use rap_core::network::{estimate_network, EdgeRule, NetworkConfig};
use rap_core::simgen::{self, RegimeSpec};
use rap_core::{Family, Rap, RapState};

use crate::io::{csv_writer, fmt_float, numbered_columns, read_table, write_err};
use crate::{CliError, LearnerArgs, PresetArg};

#[allow(clippy::too_many_arguments)]
pub fn simulate(
    family: Family,
    p: usize,
    rho: f64,
    n: usize,
    preset: Option<PresetArg>,
    truth: bool,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let specs = match preset {
        Some(PresetArg::Nonstationary) => simgen::alternating_regimes(family),
        Some(PresetArg::Stationary) => vec![RegimeSpec::new(p, STATIONARY_RHO, 300, family)],
        None => vec![RegimeSpec::new(p, rho, n, family)],
    };
    for s in &specs {
        s.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = simgen::make_piecewise_stream(&specs, &mut rng)?;
    let p = specs[0].p;

    let mut w = csv_writer(out)?;
    let mut header = vec!["t".to_string(), "regime".into(), "y".into()];
    header.extend((1..=p).map(|j| format!("x{j}")));
    if truth {
        header.extend((1..=p).map(|j| format!("b{j}")));
    }
    w.write_record(&header).map_err(write_err)?;
    for (k, s) in samples.iter().enumerate() {
        let mut rec = vec![(k + 1).to_string(), s.regime_id.to_string(), fmt_float(s.y)];
        rec.extend(s.x.iter().map(|v| fmt_float(*v)));
        if truth {
            rec.extend(s.true_beta.iter().map(|v| fmt_float(*v)));
        }
        w.write_record(&rec).map_err(write_err)?;
    }
    w.flush().map_err(write_err)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn run(input: &Path, out: &Path, family: Family, l: &LearnerArgs) -> Result<(), CliError> {
    let table = read_table(input)?;
    let y_col = table
        .column("y")
        .ok_or_else(|| CliError::Data("missing column `y`".into()))?;
    let xs = numbered_columns(&table, "x")?;
    if xs.is_empty() {
        return Err(CliError::Data(
            "missing predictor columns `x1`..`xp`".into(),
        ));
    }
    let bs = numbered_columns(&table, "b")?;
    if !bs.is_empty() && bs.len() != xs.len() {
        return Err(CliError::Data(format!(
            "{} truth columns `b*` for {} predictors",
            bs.len(),
            xs.len()
        )));
    }

    let state = RapState::new(l.lambda0, l.epsilon, l.mode.into())?;
    let mut rap = Rap::new(state, family, xs.len(), l.r)?;

    let mut w = csv_writer(out)?;
    let mut header = vec!["t", "lambda", "lookahead_loss", "active_size"];
    if !bs.is_empty() {
        header.push("f_score");
    }
    w.write_record(&header).map_err(write_err)?;

    let mut losses = Vec::with_capacity(table.rows.len());
    let mut fs = Vec::new();
    for (k, row) in table.rows.iter().enumerate() {
        let x: Vec<f64> = xs.iter().map(|&c| row[c]).collect();
        let before = rap.fit().active_set.clone();
        let rec = rap
            .step(&x, row[y_col])
            .map_err(|e| CliError::Data(format!("row {}: {e}", k + 1)))?;
        let mut out_rec = vec![
            rec.t.to_string(),
            fmt_float(rec.lambda),
            fmt_float(rec.lookahead_loss),
            rec.active_size.to_string(),
        ];
        if !bs.is_empty() {
            let truth: Vec<usize> = (0..bs.len()).filter(|&j| row[bs[j]] != 0.0).collect();
            let f = f_score(&before, &truth);
            out_rec.push(fmt_float(f));
            if k > 0 {
                fs.push(f);
            }
        }
        if k > 0 {
            losses.push(rec.lookahead_loss);
        }
        w.write_record(&out_rec).map_err(write_err)?;
    }
    let mut inner = w.into_inner().map_err(write_err)?;
    // Averages start at the second row; the first is scored by the empty model.
    if !losses.is_empty() {
        writeln!(inner, "# mean_lookahead_loss,{}", fmt_float(mean(&losses))).map_err(write_err)?;
    }
    if !fs.is_empty() {
        writeln!(inner, "# mean_f_score,{}", fmt_float(mean(&fs))).map_err(write_err)?;
    }
    inner.flush().map_err(write_err)
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

#[allow(clippy::too_many_arguments)]
pub fn bench(
    preset: PresetArg,
    family: Family,
    reps: usize,
    p: usize,
    epsilon: Option<f64>,
    lambda0: Option<f64>,
    seed: u64,
    out_dir: &Path,
) -> Result<(), CliError> {
    if reps == 0 {
        return Err(CliError::Usage("--reps must be positive".into()));
    }
    let mut cfg = match preset {
        PresetArg::Stationary => ExperimentConfig::stationary(family, p),
        PresetArg::Nonstationary => ExperimentConfig::nonstationary(family),
    }
    .with_seed(seed);
    if let Some(e) = epsilon {
        cfg.epsilon = e;
    }
    if lambda0.is_some() {
        cfg.lambda0 = lambda0;
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out_dir.display())))?;

    let (summary, results) = run_replications(&cfg, reps);
    if summary.completed == 0 {
        return Err(CliError::Data(format!("all {reps} replications failed")));
    }

    let mut w = csv_writer(&out_dir.join("summary.csv"))?;
    w.write_record([
        "arm",
        "mean_loss",
        "se_loss",
        "mean_f",
        "se_f",
        "replications",
    ])
    .map_err(write_err)?;
    for a in &summary.arms {
        w.write_record([
            a.arm.name().to_string(),
            fmt_float(a.mean_loss),
            opt(a.se_loss),
            fmt_float(a.mean_f),
            opt(a.se_f),
            summary.completed.to_string(),
        ])
        .map_err(write_err)?;
    }
    w.flush().map_err(write_err)?;

    if let Some(d) = &summary.delta {
        let mut w = csv_writer(&out_dir.join("delta.csv"))?;
        w.write_record(["mean", "se", "median_abs", "median_cv_l1"])
            .map_err(write_err)?;
        w.write_record([
            fmt_float(d.mean),
            opt(d.se),
            fmt_float(d.median_abs),
            fmt_float(d.median_cv_l1),
        ])
        .map_err(write_err)?;
        w.flush().map_err(write_err)?;
    }

    let mut w = csv_writer(&out_dir.join("traces.csv"))?;
    w.write_record([
        "rep",
        "arm",
        "t",
        "lambda",
        "lookahead_loss",
        "active_size",
        "f_score",
    ])
    .map_err(write_err)?;
    for r in &results {
        for run in &r.arms {
            for rec in &run.trace {
                w.write_record([
                    r.rep.to_string(),
                    run.arm.name().to_string(),
                    rec.t.to_string(),
                    fmt_float(rec.lambda),
                    fmt_float(rec.lookahead_loss),
                    rec.active_size.to_string(),
                    opt(rec.f_score),
                ])
                .map_err(write_err)?;
            }
        }
    }
    w.flush().map_err(write_err)?;
    if summary.failed > 0 {
        eprintln!("warning: {} of {reps} replications failed", summary.failed);
    }
    Ok(())
}

pub fn network(
    input: &Path,
    out: &Path,
    lambda_out: &Path,
    stride: usize,
    and_rule: bool,
    l: &LearnerArgs,
) -> Result<(), CliError> {
    if stride == 0 {
        return Err(CliError::Usage("--stride must be positive".into()));
    }
    let table = read_table(input)?;
    let p = table.headers.len();
    if p < 3 {
        return Err(CliError::Data(format!(
            "network estimation needs at least 3 node columns, got {p}"
        )));
    }
    let constant = rap_core::network::constant_columns(&table.rows);
    if !constant.is_empty() {
        let names: Vec<&str> = constant
            .iter()
            .map(|&j| table.headers[j].as_str())
            .collect();
        return Err(CliError::Data(format!(
            "constant node columns: {}",
            names.join(", ")
        )));
    }
    let cfg = NetworkConfig {
        state: RapState::new(l.lambda0, l.epsilon, l.mode.into())?,
        r: l.r,
        stride,
        rule: if and_rule {
            EdgeRule::And
        } else {
            EdgeRule::Or
        },
    };
    let net = estimate_network(&table.rows, &cfg)?;

    let mut w = csv_writer(out)?;
    w.write_record(["t", "i", "j", "weight"])
        .map_err(write_err)?;
    for e in &net.edges {
        w.write_record([
            e.t.to_string(),
            (e.i + 1).to_string(),
            (e.j + 1).to_string(),
            fmt_float(e.weight),
        ])
        .map_err(write_err)?;
    }
    w.flush().map_err(write_err)?;

    let mut w = csv_writer(lambda_out)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=p).map(|k| format!("lambda{k}")));
    w.write_record(&header).map_err(write_err)?;
    for t in 0..table.rows.len() {
        let mut rec = vec![(t + 1).to_string()];
        rec.extend(net.lambda.iter().map(|trace| fmt_float(trace[t])));
        w.write_record(&rec).map_err(write_err)?;
    }
    w.flush().map_err(write_err)
}
