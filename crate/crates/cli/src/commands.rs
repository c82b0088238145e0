use std::fs;
use std::path::{Path, PathBuf};

use chipsim::engine::{
    phase_fractions, sweep, trace_to_jsonl, Execution, SimOptions, SweepAxis, SweepPoint,
};
use chipsim::presets::{self, BaselineRecord};
use chipsim::workload::Phase;
use chipsim::{Experiment, PlacementPolicy, SimReport};

use crate::args::{CompareArgs, ExperimentArgs, FigdataArgs, Figure, PlanArgs, RunArgs, SweepArgs};
use crate::config::{read, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::table::{self, Reference};

pub const DEFAULT_SEQ_LENS: &str = "128,256,512,1024,2048,4096";

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    let fail = |e: std::io::Error| CliError::Output {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(fail)?;
    }
    fs::write(path, contents).map_err(fail)
}

/// Loads the optional config file and lays the command-line flags over it.
pub fn resolve(args: &ExperimentArgs) -> Result<(ExperimentConfig, Experiment)> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = &args.model {
        cfg.model = Some(m.clone());
    }
    if let Some(h) = &args.hw {
        cfg.hw = Some(h.clone());
    }
    if let Some(p) = &args.policy {
        cfg.policy = Some(p.clone());
    }
    let mut e = cfg.experiment()?;
    if let Some(n) = args.prompt_tokens {
        e.workload.prompt_tokens = n;
    }
    if let Some(img) = args.image {
        e.workload.image = img;
    }
    if let Some(n) = args.output_tokens {
        e.workload.output_tokens = n;
    }
    if let Some(t) = args.tile_size {
        e.mapper.tile_size = t;
    }
    if let Some(b) = args.kv_block_tokens {
        e.mapper.kv_block_tokens = b;
    }
    if let Some(r) = args.rebalance_period {
        e.mapper.rebalance_period = r;
    }
    e.mapper
        .validate()
        .map_err(|err| CliError::schema("mapper", err))?;
    Ok((cfg, e))
}

fn out_dir(flag: &Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

pub fn summary(r: &SimReport) -> String {
    format!(
        "{} on {} ({}): {:.1} token/s, {:.3} W, {:.1} token/J, {:.3} ms end to end",
        r.model,
        r.platform,
        r.policy,
        r.throughput_token_per_s,
        r.avg_power_w,
        r.token_per_j,
        r.total_latency_ns / 1e6
    )
}

pub fn run(args: &RunArgs) -> Result<String> {
    let (cfg, e) = resolve(&args.experiment)?;
    let out = e.simulate(SimOptions { trace: args.trace })?;
    let dir = out_dir(&args.out, &cfg);
    write_file(&dir.join("report.json"), &out.report.to_json())?;
    let csv = table::to_csv(&table::REPORT_COLUMNS, &[table::report_row(&out.report)]);
    write_file(&dir.join("report.csv"), &csv)?;
    if args.trace {
        write_file(&dir.join("trace.jsonl"), &trace_to_jsonl(&out.trace))?;
    }
    Ok(summary(&out.report))
}

pub fn plan(args: &PlanArgs) -> Result<String> {
    let (cfg, e) = resolve(&args.experiment)?;
    let graph = e.graph()?;
    let plan = e.plan(&graph)?;
    let dir = out_dir(&args.out, &cfg);
    write_file(&dir.join("plan.json"), &plan.to_json())?;
    Ok(format!(
        "{} kernels mapped, plan written to {}",
        graph.len(),
        dir.join("plan.json").display()
    ))
}

pub fn sweep_cmd(args: &SweepArgs) -> Result<String> {
    let (cfg, base) = resolve(&args.experiment)?;
    let from_cfg = cfg.sweep_axis()?;
    let axis = match (&args.axis, &from_cfg) {
        (Some(a), _) => SweepAxis::parse(a).map_err(|e| CliError::schema("--axis", e))?,
        (None, Some((a, _))) => *a,
        (None, None) => SweepAxis::SeqLen,
    };
    let values = match (&args.values, from_cfg) {
        (Some(v), _) => v.clone(),
        (None, Some((_, v))) => v,
        (None, None) => DEFAULT_SEQ_LENS.to_string(),
    };
    let points = axis
        .points(&values)
        .map_err(|e| CliError::schema("--values", e))?;
    if points.is_empty() {
        return Err(CliError::EmptySweep("the sweep value list"));
    }
    let exec = if args.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let outcomes = sweep(&base, &points, exec)?;

    let dir = out_dir(&args.out, &cfg);
    let mut rows = Vec::with_capacity(outcomes.len());
    let mut failed = 0;
    for o in &outcomes {
        let label = o.point.label();
        rows.push(table::sweep_row(&label, &o.result));
        match &o.result {
            Ok(r) => write_file(
                &dir.join("points").join(format!("{label}.json")),
                &r.to_json(),
            )?,
            Err(_) => failed += 1,
        }
    }
    write_file(
        &dir.join("sweep.csv"),
        &table::to_csv(&table::sweep_columns(), &rows),
    )?;
    Ok(format!(
        "{} points, {} failed, results in {}",
        outcomes.len(),
        failed,
        dir.join("sweep.csv").display()
    ))
}

fn load_reference(name: &str) -> Result<Reference> {
    let path = Path::new(name);
    if name.ends_with(".json") || path.is_file() {
        let r = SimReport::from_json(&read(path)?)
            .map_err(|e| CliError::schema(format!("report {}", path.display()), e))?;
        return Ok(Reference::from(&r));
    }
    presets::baseline(name)
        .map(|b| Reference::from(&b))
        .map_err(|_| CliError::UnknownBaseline {
            name: name.to_string(),
            known: presets::baselines()
                .iter()
                .map(|b| b.name.as_str())
                .collect::<Vec<_>>()
                .join(", "),
        })
}

pub fn compare(args: &CompareArgs) -> Result<String> {
    let report = SimReport::from_json(&read(&args.report)?)
        .map_err(|e| CliError::schema(format!("report {}", args.report.display()), e))?;
    let reference = load_reference(&args.baseline)?;
    let csv = table::to_csv(
        &table::COMPARE_COLUMNS,
        &[table::compare_row(&report, &reference)],
    );
    match &args.out {
        Some(p) => {
            write_file(p, &csv)?;
            Ok(format!("comparison written to {}", p.display()))
        }
        None => Ok(csv.trim_end().to_string()),
    }
}

fn model_list(models: &str) -> Result<Vec<String>> {
    let list: Vec<String> = models
        .split(',')
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .map(String::from)
        .collect();
    if list.is_empty() {
        return Err(CliError::EmptySweep("the model list"));
    }
    Ok(list)
}

fn experiment_for(model: &str, policy: PlacementPolicy) -> Result<Experiment> {
    let m = presets::model(model).map_err(|e| CliError::schema("--models", e))?;
    let platform = match policy {
        PlacementPolicy::Heterogeneous => presets::heterogeneous(),
        PlacementPolicy::DramOnly => presets::dram_only(),
    };
    Ok(Experiment::new(m, platform).with_policy(policy))
}

fn status(result: &std::result::Result<SimReport, String>) -> [String; 2] {
    match result {
        Ok(_) => ["ok".into(), String::new()],
        Err(e) => ["error".into(), e.clone()],
    }
}

fn baseline_or_die(name: &str) -> BaselineRecord {
    presets::baseline(name).expect("shipped baseline")
}

pub fn figdata(args: &FigdataArgs) -> Result<String> {
    let models = model_list(&args.models)?;
    let (header, rows): (Vec<&str>, Vec<Vec<String>>) = match args.figure {
        Figure::Fig7 => {
            let jetson = baseline_or_die("jetson");
            let facil = baseline_or_die("facil");
            let mut rows = Vec::new();
            for m in &models {
                let result = experiment_for(m, PlacementPolicy::Heterogeneous)?
                    .run()
                    .map_err(|e| e.to_string());
                let mut row = vec![table::FIG7_SCHEMA.to_string(), m.clone()];
                row.extend(status(&result));
                match &result {
                    Ok(r) => row.extend([
                        r.throughput_token_per_s.to_string(),
                        r.avg_power_w.to_string(),
                        r.token_per_j.to_string(),
                        (r.throughput_token_per_s / jetson.throughput_token_per_s[1]).to_string(),
                        (r.throughput_token_per_s / facil.throughput_token_per_s[1]).to_string(),
                        (r.token_per_j / jetson.token_per_j[1]).to_string(),
                    ]),
                    Err(_) => row.extend(std::iter::repeat_n(String::new(), 6)),
                }
                rows.push(row);
            }
            (table::FIG7_COLUMNS.to_vec(), rows)
        }
        Figure::Fig9 => {
            let values = args.values.as_deref().unwrap_or(DEFAULT_SEQ_LENS);
            let points = SweepAxis::SeqLen
                .points(values)
                .map_err(|e| CliError::schema("--values", e))?;
            if points.is_empty() {
                return Err(CliError::EmptySweep("the sequence length list"));
            }
            let mut rows = Vec::new();
            for m in &models {
                let base = experiment_for(m, PlacementPolicy::Heterogeneous)?;
                for o in sweep(&base, &points, Execution::Parallel)? {
                    let SweepPoint::SeqLen(n) = o.point else {
                        unreachable!("seqlen axis")
                    };
                    let mut row = vec![table::FIG9_SCHEMA.to_string(), m.clone(), n.to_string()];
                    row.extend(status(&o.result));
                    match &o.result {
                        Ok(r) => {
                            let decode = phase_fractions(r)?
                                .get(&Phase::DecodeStep)
                                .copied()
                                .unwrap_or(0.0);
                            row.extend([
                                (r.total_latency_ns / 1e6).to_string(),
                                r.energy_per_inference_j.to_string(),
                                decode.to_string(),
                            ]);
                        }
                        Err(_) => row.extend(std::iter::repeat_n(String::new(), 3)),
                    }
                    rows.push(row);
                }
            }
            (table::FIG9_COLUMNS.to_vec(), rows)
        }
        Figure::Fig10 => {
            let mut rows = Vec::new();
            for m in &models {
                let het = experiment_for(m, PlacementPolicy::Heterogeneous)?.run();
                let dram = experiment_for(m, PlacementPolicy::DramOnly)?.run();
                let result = match (het, dram) {
                    (Ok(h), Ok(d)) => Ok((h, d)),
                    (Err(e), _) | (_, Err(e)) => Err(e.to_string()),
                };
                let mut row = vec![table::FIG10_SCHEMA.to_string(), m.clone()];
                match &result {
                    Ok((h, d)) => row.extend([
                        "ok".to_string(),
                        String::new(),
                        h.throughput_token_per_s.to_string(),
                        d.throughput_token_per_s.to_string(),
                        (h.throughput_token_per_s / d.throughput_token_per_s).to_string(),
                        h.token_per_j.to_string(),
                        d.token_per_j.to_string(),
                        (h.token_per_j / d.token_per_j).to_string(),
                    ]),
                    Err(e) => {
                        row.extend(["error".to_string(), e.clone()]);
                        row.extend(std::iter::repeat_n(String::new(), 6));
                    }
                }
                rows.push(row);
            }
            (table::FIG10_COLUMNS.to_vec(), rows)
        }
    };
    write_file(&args.out, &table::to_csv(&header, &rows))?;
    Ok(format!(
        "{} rows written to {}",
        rows.len(),
        args.out.display()
    ))
}

pub fn list_presets() -> String {
    let mut s = String::from("models:\n");
    for k in presets::MODEL_KEYS {
        s.push_str(&format!("  {k}\n"));
    }
    s.push_str("platforms:\n");
    for k in presets::PLATFORM_KEYS {
        s.push_str(&format!("  {k}\n"));
    }
    s.push_str("baselines:\n");
    for b in presets::baselines() {
        s.push_str(&format!("  {} ({})\n", b.name, b.display_name));
    }
    s.trim_end().to_string()
}
