use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use collocate::collocation::{ChartOptions, CoordinateChart, Regime, SamplingDomain, Verdict};
use collocate::experiment::{build_chart_for, write_outputs};
use collocate::{build_plant, check_integrability, expand_runs, run_all, Error, Plant};
use nalgebra::DVector;
use serde_json::{json, Value};

const EXIT_NON_INTEGRABLE: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "collocate", version, about = "Collocation checks, decoupling charts and closed-loop experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test every actuation column for integrability on a box of configurations.
    Check {
        #[arg(long)]
        model: String,
        /// Sampling box, `lo..hi` per coordinate, comma separated. Defaults to the model's domain.
        #[arg(long = "box", allow_hyphen_values = true)]
        bounds: Option<String>,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 512)]
        samples: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Model parameters: a JSON object, or a path to a JSON file.
        #[arg(long)]
        params: Option<String>,
    },
    /// Build the decoupling chart(s) at a configuration and report their residuals.
    Chart {
        #[arg(long)]
        model: String,
        /// Anchor configuration, comma separated. Defaults to the model's home.
        #[arg(long, allow_hyphen_values = true)]
        q0: Option<String>,
        /// Random configurations used to verify the force transformation.
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        params: Option<String>,
    },
    /// Run every experiment in a config file and write trajectories and summaries.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "COLLOCATE_OUT_DIR", default_value = "out")]
        out: PathBuf,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::UnknownModel(_) | Error::InvalidConfig(_) | Error::InvalidArgument(_) => EXIT_USAGE,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let result = match cli.command {
        Command::Check {
            model,
            bounds,
            tol,
            samples,
            seed,
            params,
        } => cmd_check(&model, bounds.as_deref(), tol, samples, seed, params.as_deref()),
        Command::Chart {
            model,
            q0,
            samples,
            seed,
            params,
        } => cmd_chart(&model, q0.as_deref(), samples, seed, params.as_deref()),
        Command::Simulate { config, out } => cmd_simulate(&config, &out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn emit(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("JSON values always serialize"));
}

fn load_params(model: &str, arg: Option<&str>) -> Result<Option<Value>, Failure> {
    let Some(arg) = arg else { return Ok(None) };
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).map_err(|e| usage(format!("cannot read {arg}: {e}")))?
    };
    let v: Value = serde_json::from_str(&text).map_err(|e| usage(format!("bad parameters: {e}")))?;
    // A file may hold one section per model.
    Ok(Some(v.get(model).cloned().unwrap_or(v)))
}

fn plant(model: &str, params: Option<&str>) -> Result<Plant, Failure> {
    let section = load_params(model, params)?;
    Ok(build_plant(model, section.as_ref())?)
}

fn parse_box(text: &str, n: usize) -> Result<Vec<(f64, f64)>, Failure> {
    let bounds = text
        .split(',')
        .map(|part| {
            let (lo, hi) = part
                .split_once("..")
                .ok_or_else(|| usage(format!("box entry `{part}` is not of the form lo..hi")))?;
            let lo: f64 = lo.trim().parse().map_err(|_| usage(format!("bad bound `{lo}`")))?;
            let hi: f64 = hi.trim().parse().map_err(|_| usage(format!("bad bound `{hi}`")))?;
            Ok((lo, hi))
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    if bounds.len() != n {
        return Err(usage(format!("box has {} entries, model has {n} coordinates", bounds.len())));
    }
    Ok(bounds)
}

fn parse_vector(text: &str, n: usize) -> Result<DVector<f64>, Failure> {
    let v = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| usage(format!("bad number `{s}`"))))
        .collect::<Result<Vec<_>, Failure>>()?;
    if v.len() != n {
        return Err(usage(format!("expected {n} values, got {}", v.len())));
    }
    Ok(DVector::from_vec(v))
}

fn cmd_check(
    model: &str,
    bounds: Option<&str>,
    tol: f64,
    samples: usize,
    seed: Option<u64>,
    params: Option<&str>,
) -> Result<u8, Failure> {
    let plant = plant(model, params)?;
    let bounds = match bounds {
        Some(b) => parse_box(b, plant.dof())?,
        None => plant.domain.clone(),
    };
    let mut domain = SamplingDomain::new(bounds.clone()).with_samples(samples);
    if let Some(s) = seed {
        domain = domain.with_seed(s);
    }
    let report = check_integrability(plant.actuation.as_ref(), &domain, tol)?;
    let verdict = report.verdict();
    eprintln!("{model}: {}", report.summary());
    emit(&json!({
        "model": model,
        "box": bounds,
        "verdict": verdict,
        "report": report,
    }));
    Ok(match verdict {
        Verdict::Integrable => 0,
        Verdict::NonIntegrable => EXIT_NON_INTEGRABLE,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    })
}

/// Every `k`-subset of `0..n`, in lexicographic order.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

fn candidate_charts(plant: &Plant, q0: &DVector<f64>) -> collocate::Result<Vec<CoordinateChart>> {
    let (n, m) = (plant.dof(), plant.inputs());
    if Regime::infer(n, m) != Regime::Overactuated {
        return Ok(vec![build_chart_for(plant, q0, None)?]);
    }
    let mut charts = Vec::new();
    for cols in subsets(m, n) {
        let opts = ChartOptions::default().with_selection(cols);
        match CoordinateChart::build(plant.actuation.clone(), Regime::Overactuated, q0, opts) {
            Ok(c) => charts.push(c),
            Err(Error::SingularConfiguration { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if charts.is_empty() {
        return Err(Error::SingularConfiguration { sigma_min: 0.0 });
    }
    Ok(charts)
}

/// Worst `|τ_θ − expected|` over random configurations and inputs.
fn verify(chart: &CoordinateChart, plant: &Plant, samples: usize, seed: u64) -> collocate::Result<Value> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (n, m) = (plant.dof(), plant.inputs());
    let (mut decoupling, mut power) = (0.0_f64, 0.0_f64);
    let mut used = 0;
    for _ in 0..samples {
        let q = DVector::from_iterator(n, plant.domain.iter().map(|&(lo, hi)| rng.random_range(lo..hi)));
        if plant.actuation.is_singular(&q) {
            continue;
        }
        let u = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let qdot = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let tau = chart.transform_force(&q, &u)?;
        let mut expected = DVector::zeros(n);
        let inputs = chart.chart_inputs();
        for (k, &c) in inputs.iter().enumerate() {
            expected[k] = u[c];
        }
        if !chart.redundant_inputs().is_empty() {
            let extra = chart.redundant_coupling(&q)? * u.select_rows(chart.redundant_inputs());
            for k in 0..inputs.len() {
                expected[k] += extra[k];
            }
        }
        decoupling = decoupling.max((tau - expected).amax());
        let p = chart.verify_power_invariance(&q, &qdot, &u)?;
        let p_q = qdot.dot(&(plant.actuation.matrix(&q) * &u));
        power = power.max(p / (1.0 + p_q.abs()));
        used += 1;
    }
    Ok(json!({
        "samples": used,
        "seed": seed,
        "decoupling_residual": decoupling,
        "power_residual": power,
    }))
}

fn cmd_chart(model: &str, q0: Option<&str>, samples: usize, seed: u64, params: Option<&str>) -> Result<u8, Failure> {
    let plant = plant(model, params)?;
    let q0 = match q0 {
        Some(t) => parse_vector(t, plant.dof())?,
        None => plant.home.clone(),
    };
    let charts = match candidate_charts(&plant, &q0) {
        Ok(c) => c,
        Err(Error::NotCollocated(report)) => {
            let message = format!("{model} is not collocated: {}", report.summary());
            eprintln!("{message}");
            emit(&json!({
                "model": model,
                "collocated": false,
                "message": message,
                "report": report,
            }));
            return Ok(EXIT_NON_INTEGRABLE);
        }
        Err(e) => return Err(e.into()),
    };
    let mut listed = Vec::with_capacity(charts.len());
    for chart in &charts {
        let mut v = serde_json::to_value(chart.summary(&q0)?).map_err(Error::from)?;
        v["verification"] = verify(chart, &plant, samples, seed)?;
        listed.push(v);
    }
    eprintln!("{model}: {} chart(s) at q0", listed.len());
    emit(&json!({
        "model": model,
        "collocated": true,
        "q0": q0.as_slice(),
        "charts": listed,
    }));
    Ok(0)
}

fn cmd_simulate(config: &Path, out: &Path) -> Result<u8, Failure> {
    let text = std::fs::read_to_string(config).map_err(|e| usage(format!("cannot read {}: {e}", config.display())))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| usage(format!("bad config: {e}")))?;
    let configs = expand_runs(&doc)?;
    let base = config.parent().unwrap_or(Path::new("."));
    let mut summaries = Vec::new();
    let mut failed = false;
    for (cfg, result) in configs.iter().zip(run_all(&configs, base)) {
        let name = cfg.name.clone().unwrap_or_default();
        match result {
            Ok(run) => {
                let files = write_outputs(out, &run)?;
                if let Some(f) = &run.summary.failure {
                    eprintln!("{name}: run stopped early: {f}");
                }
                let mut v = serde_json::to_value(&run.summary).map_err(Error::from)?;
                v["files"] = json!(files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>());
                summaries.push(v);
            }
            Err(e) => {
                eprintln!("{name}: {e}");
                failed = true;
                summaries.push(json!({"name": name, "error": e.to_string()}));
            }
        }
    }
    let summary = json!({"config": config.display().to_string(), "runs": summaries});
    std::fs::create_dir_all(out).map_err(Error::from)?;
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary).map_err(Error::from)?)
        .map_err(Error::from)?;
    emit(&summary);
    Ok(if failed { 1 } else { 0 })
}
