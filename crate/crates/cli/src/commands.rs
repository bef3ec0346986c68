use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use qpart::calibrate::{
    calibrate_corrected, calibrate_crude, calibrate_exact, exact_moments, lower_cutoff, upper_cutoff,
    CalibrationMethod, ModelParams, Regime, RejectionTask, TaskKind,
};
use qpart::enumerate::{count_partitions, list_partitions, EnumTable};
use qpart::sampler::{FreeSampler, Partition, RejectionSampler, RngHandle, ScanMethod, Verdict};
use qpart::special::{inv_reg_gamma_upper, limit_shape};
use qpart::validate::{run_suite, scaled_young, Suite, SuiteConfig};
use serde_json::{json, Value};
use thiserror::Error;

use crate::{
    CalibrateArgs, Command, EnumerateArgs, Format, Method, RegimeArg, RejectArgs, SampleArgs, ShapeArgs, SuiteArg,
    TaskArg, ValidateArgs,
};

const NEWTON_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] qpart::error::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            Self::Usage(_) | Self::Core(_) => 2,
            Self::Io { .. } => 3,
        }
    }
}

/// Successful runs that still report a negative outcome exit with 1.
pub enum Outcome {
    Ok,
    Negative,
}

impl Outcome {
    pub fn code(&self) -> u8 {
        match self {
            Self::Ok => 0,
            Self::Negative => 1,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

pub fn run(command: Command) -> CliResult<Outcome> {
    match command {
        Command::Calibrate(a) => calibrate(a),
        Command::Sample(a) => sample(a),
        Command::Reject(a) => reject(a),
        Command::Enumerate(a) => enumerate(a),
        Command::Validate(a) => validate(a),
        Command::Shape(a) => shape(a),
    }
}

fn emit(out: Option<&Path>, body: &str) -> CliResult<()> {
    let (label, result) = match out {
        Some(path) => (
            path.display().to_string(),
            File::create(path).and_then(|f| {
                let mut w = BufWriter::new(f);
                w.write_all(body.as_bytes())?;
                w.flush()
            }),
        ),
        None => {
            let mut w = io::stdout().lock();
            ("<stdout>".to_string(), w.write_all(body.as_bytes()).and_then(|_| w.flush()))
        }
    };
    result.map_err(|source| CliError::Io { path: label, source })
}

fn regime(r: RegimeArg) -> Regime {
    match r {
        RegimeArg::Fixed => Regime::FixedM,
        RegimeArg::Growing => Regime::GrowingM,
    }
}

fn calibration_method(m: Method) -> CalibrationMethod {
    match m {
        Method::Crude => CalibrationMethod::Crude,
        Method::Corrected => CalibrationMethod::BiasCorrected,
        Method::Exact => CalibrationMethod::NewtonExact,
    }
}

fn calibrate_with(method: Method, q: u32, n: f64, m: f64) -> CliResult<ModelParams> {
    Ok(match method {
        Method::Crude => calibrate_crude(q, n, m)?,
        Method::Corrected => calibrate_corrected(q, n, m)?,
        Method::Exact => calibrate_exact(q, n, m, NEWTON_TOL)?,
    })
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Crude => "crude",
        Method::Corrected => "corrected",
        Method::Exact => "exact",
    }
}

fn to_usize(count: u64) -> CliResult<usize> {
    usize::try_from(count).map_err(|_| CliError::Usage(format!("count {count} is too large")))
}

fn parts_json(p: &Partition) -> Value {
    json!(p.parts())
}

fn calibrate(a: CalibrateArgs) -> CliResult<Outcome> {
    let t = &a.targets;
    let params = calibrate_with(a.method, t.q, t.big_n, t.big_m)?;
    let mom = exact_moments(&params, None);
    let cutoffs = match a.delta {
        Some(delta) => {
            let l = upper_cutoff(t.q, t.big_n, t.big_m, delta, regime(a.regime))?;
            let l0 = match lower_cutoff(t.q, t.big_n, t.big_m, delta, regime(a.regime)) {
                Ok(v) => Some(v),
                Err(qpart::error::Error::InfeasibleLowerCutoff { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            Some((delta, l, l0))
        }
        None => None,
    };
    let body = match a.format {
        Format::Json => {
            let mut v = json!({
                "q": t.q,
                "N": t.big_n,
                "M": t.big_m,
                "method": method_name(a.method),
                "kappa": params.kappa,
                "gamma": params.gamma,
                "gamma0": params.gamma0(),
                "z1": params.z1(),
                "z2": params.z2,
                "moments": {
                    "mean_N": mom.en,
                    "mean_M": mom.em,
                    "var_N": mom.var_n,
                    "var_M": mom.var_m,
                    "cov_NM": mom.cov_nm,
                    "corr_NM": mom.correlation(),
                },
            });
            if let Some((delta, l, l0)) = cutoffs {
                v["cutoffs"] = json!({ "delta": delta, "L": l, "L0": l0 });
            }
            let mut s = serde_json::to_string_pretty(&v).expect("calibration report serializes");
            s.push('\n');
            s
        }
        Format::Text => {
            let mut s = String::new();
            s.push_str(&format!("q        {}\n", t.q));
            s.push_str(&format!("N        {}\n", t.big_n));
            s.push_str(&format!("M        {}\n", t.big_m));
            s.push_str(&format!("method   {}\n", method_name(a.method)));
            s.push_str(&format!("kappa    {:.10e}\n", params.kappa));
            s.push_str(&format!("gamma    {:.10e}\n", params.gamma));
            s.push_str(&format!("gamma0   {:.10e}\n", params.gamma0()));
            s.push_str(&format!("z1       {:.12}\n", params.z1()));
            s.push_str(&format!("z2       {:.10}\n", params.z2));
            s.push_str(&format!("E[N]     {:.6}\n", mom.en));
            s.push_str(&format!("E[M]     {:.6}\n", mom.em));
            s.push_str(&format!("Var N    {:.6e}\n", mom.var_n));
            s.push_str(&format!("Var M    {:.6}\n", mom.var_m));
            s.push_str(&format!("Cov      {:.6e}\n", mom.cov_nm));
            s.push_str(&format!("corr     {:.6}\n", mom.correlation()));
            if let Some((delta, l, l0)) = cutoffs {
                s.push_str(&format!("delta    {delta}\n"));
                s.push_str(&format!("L        {l}\n"));
                match l0 {
                    Some(v) => s.push_str(&format!("L0       {v}\n")),
                    None => s.push_str("L0       n/a\n"),
                }
            }
            s
        }
        Format::Csv => return Err(CliError::Usage("calibrate supports --format text or json".into())),
    };
    emit(a.output.out.as_deref(), &body)?;
    Ok(Outcome::Ok)
}

fn sample(a: SampleArgs) -> CliResult<Outcome> {
    let t = &a.targets;
    let params = calibrate_with(a.method, t.q, t.big_n, t.big_m)?;
    let l = upper_cutoff(t.q, t.big_n, t.big_m, a.delta, regime(a.regime))?;
    let sampler = FreeSampler::new(params, l)?;
    let samples = sampler.batch(to_usize(a.count)?, a.seed, ScanMethod::Thinned);
    let body = match a.format {
        Format::Csv => {
            let mut s = String::from("index,N,M,lmax,lmin,parts\n");
            for (i, p) in samples.iter().enumerate() {
                let parts: Vec<String> = p.parts().iter().map(u64::to_string).collect();
                let lmin = p.smallest().map(|v| v.to_string()).unwrap_or_default();
                s.push_str(&format!(
                    "{i},{},{},{},{lmin},{}\n",
                    p.weight(),
                    p.length(),
                    p.largest().unwrap_or(0),
                    parts.join(";")
                ));
            }
            s
        }
        Format::Json => {
            let rows: Vec<Value> = samples
                .iter()
                .map(|p| json!({ "N": p.weight(), "M": p.length(), "parts": parts_json(p) }))
                .collect();
            let v = json!({
                "q": t.q,
                "seed": a.seed,
                "L": l,
                "gamma": params.gamma,
                "z2": params.z2,
                "samples": rows,
            });
            let mut s = serde_json::to_string(&v).expect("samples serialize");
            s.push('\n');
            s
        }
        Format::Text => return Err(CliError::Usage("sample supports --format csv or json".into())),
    };
    emit(a.output.out.as_deref(), &body)?;
    Ok(Outcome::Ok)
}

fn reject(a: RejectArgs) -> CliResult<Outcome> {
    let kind = match a.task {
        Some(TaskArg::T1) => TaskKind::T1Exact,
        Some(TaskArg::T2) => TaskKind::T2MultiExact,
        Some(TaskArg::T3) => TaskKind::T3Approximate,
        None if a.theta > 1.0 => TaskKind::T3Approximate,
        None => TaskKind::T1Exact,
    };
    let task = RejectionTask::new(kind, a.q, a.n, a.m, a.theta, a.delta, a.corrected)?;
    let sampler = RejectionSampler::new(task)?;
    let mut rng = RngHandle::new(a.seed, 0).rng();
    let start = Instant::now();
    let (v, sampled) = if kind == TaskKind::T2MultiExact {
        let rec = sampler.run_multi(&mut rng);
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let sampled = !rec.hits.is_empty();
        let hits: Vec<Value> = rec
            .hits
            .iter()
            .map(|(n, p)| json!({ "n": n, "partition": parts_json(p) }))
            .collect();
        let v = json!({
            "verdict": if sampled { "sampled" } else { "void" },
            "hits": hits,
            "attempts_internal": rec.attempts_internal,
            "attempts_external": rec.attempts_external,
            "t_star": task.t_star,
            "wall_ms": wall_ms,
        });
        (v, sampled)
    } else {
        let rec = sampler.run(&mut rng);
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let v = json!({
            "verdict": rec.verdict,
            "partition": rec.partition.as_ref().map(parts_json),
            "attempts_internal": rec.attempts_internal,
            "attempts_external": rec.attempts_external,
            "t_star": task.t_star,
            "wall_ms": wall_ms,
        });
        (v, rec.verdict == Verdict::Sampled)
    };
    let mut s = serde_json::to_string(&v).expect("record serializes");
    s.push('\n');
    emit(a.output.out.as_deref(), &s)?;
    Ok(if sampled { Outcome::Ok } else { Outcome::Negative })
}

fn enumerate(a: EnumerateArgs) -> CliResult<Outcome> {
    let body = match (a.n, a.m, a.max_n, a.max_m) {
        (Some(n), Some(m), None, None) => {
            if a.count_only {
                let c = count_partitions(a.q, n, m)?;
                match a.format {
                    Format::Json => format!("{}\n", json!({ "count": c })),
                    _ => format!("{c}\n"),
                }
            } else {
                let list = list_partitions(a.q, n, m)?;
                match a.format {
                    Format::Json => {
                        let v = json!({
                            "count": list.len(),
                            "partitions": list.iter().map(parts_json).collect::<Vec<_>>(),
                        });
                        format!("{v}\n")
                    }
                    _ => {
                        let mut s = String::from("index,parts\n");
                        for (i, p) in list.iter().enumerate() {
                            let parts: Vec<String> = p.parts().iter().map(u64::to_string).collect();
                            s.push_str(&format!("{i},{}\n", parts.join(";")));
                        }
                        s
                    }
                }
            }
        }
        (None, None, Some(max_n), Some(max_m)) => {
            if a.format == Format::Json {
                return Err(CliError::Usage("count tables are written as CSV".into()));
            }
            EnumTable::build(a.q, max_n, max_m)?.to_csv()
        }
        _ => return Err(CliError::Usage("give either --n and --m, or --max-n and --max-m".into())),
    };
    emit(a.output.out.as_deref(), &body)?;
    Ok(Outcome::Ok)
}

fn validate(a: ValidateArgs) -> CliResult<Outcome> {
    let suite = match a.suite {
        SuiteArg::FixedM => Suite::FixedM,
        SuiteArg::GrowingM => Suite::GrowingM,
        SuiteArg::Uniformity => Suite::Uniformity,
        SuiteArg::Moments => Suite::Moments,
        SuiteArg::All => Suite::All,
    };
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(CliError::Usage(format!("alpha must lie in (0, 1), got {}", a.alpha)));
    }
    let needs_targets = suite != Suite::Uniformity;
    let (big_n, big_m) = match (a.big_n, a.big_m) {
        (Some(n), Some(m)) => (n, m),
        (None, None) if !needs_targets => (0.0, 0.0),
        _ => return Err(CliError::Usage("this suite needs --N and --M".into())),
    };
    let task = match (a.n, a.m) {
        (Some(n), Some(m)) => Some((n, m)),
        (None, None) => None,
        _ => return Err(CliError::Usage("give both --n and --m".into())),
    };
    if suite == Suite::Uniformity && task.is_none() {
        return Err(CliError::Usage("the uniformity suite needs --n and --m".into()));
    }
    let mut cfg = SuiteConfig::new(a.q, big_n, big_m, to_usize(a.count)?, a.seed);
    cfg.alpha = a.alpha;
    cfg.method = calibration_method(a.method);
    cfg.task = task;
    let report = run_suite(suite, &cfg)?;
    let mut s = report.to_json();
    s.push('\n');
    emit(a.output.out.as_deref(), &s)?;
    Ok(if report.all_pass() { Outcome::Ok } else { Outcome::Negative })
}

fn shape(a: ShapeArgs) -> CliResult<Outcome> {
    let t = &a.targets;
    if !(a.grid_step > 0.0) {
        return Err(CliError::Usage("--grid-step must be positive".into()));
    }
    let params = calibrate_with(a.method, t.q, t.big_n, t.big_m)?;
    let x_max = match a.x_max {
        Some(x) => x,
        None => inv_reg_gamma_upper(1.0 / t.q as f64, 1e-4)?,
    };
    let steps = (x_max / a.grid_step).floor() as usize;
    let grid: Vec<f64> = (0..=steps).map(|i| i as f64 * a.grid_step).collect();
    let l = upper_cutoff(t.q, t.big_n, t.big_m, a.delta, Regime::FixedM)?;
    let samples = FreeSampler::new(params, l)?.batch(to_usize(a.count)?, a.seed, ScanMethod::Thinned);
    let mut mean = vec![0.0; grid.len()];
    for p in &samples {
        for (acc, y) in mean.iter_mut().zip(scaled_young(p, t.q, t.big_n, t.big_m, &grid)) {
            *acc += y;
        }
    }
    let k = samples.len().max(1) as f64;
    let decimals = (-a.grid_step.log10()).ceil().max(0.0) as usize;
    let mut s = String::from("x,mean_Y,omega\n");
    for (x, m) in grid.iter().zip(&mean) {
        s.push_str(&format!("{x:.decimals$},{:.6},{:.6}\n", m / k, limit_shape(t.q, *x)?));
    }
    emit(a.output.out.as_deref(), &s)?;
    Ok(Outcome::Ok)
}
