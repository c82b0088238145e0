use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use chipsim::SimReport;
use chipsim_cli::table;

fn chipsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chipsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

const SHORT: [&str; 4] = ["--output-tokens", "16", "--prompt-tokens", "32"];

#[test]
fn run_writes_report_files_that_agree() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let mut args = vec![
        "run",
        "--model",
        "fastvlm_0_6b",
        "--hw",
        "heterogeneous",
        "--policy",
        "het",
        "--trace",
    ];
    args.extend(SHORT);
    args.extend(["--out", p(&out)]);
    let o = chipsim(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let report =
        SimReport::from_json(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.output_tokens, 16);
    assert_eq!(report.prompt_text_tokens, 32);

    let (header, rows) = csv_rows(&out.join("report.csv"));
    assert_eq!(header, table::REPORT_COLUMNS);
    assert_eq!(rows.len(), 1);
    let col = |name: &str| &rows[0][header.iter().position(|h| h == name).unwrap()];
    assert_eq!(col("schema"), table::REPORT_SCHEMA);
    assert!(rows[0].iter().skip(1).all(|v| !v.is_empty()));
    assert_eq!(
        col("throughput_token_per_s").parse::<f64>().unwrap(),
        report.throughput_token_per_s
    );
    assert_eq!(
        col("token_per_j").parse::<f64>().unwrap(),
        report.token_per_j
    );

    let trace = fs::read_to_string(out.join("trace.jsonl")).unwrap();
    assert!(trace.lines().count() > 0);
    for line in trace.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let mut args = vec![
            "sweep",
            "--model",
            "mobilevlm_1_7b",
            "--axis",
            "seqlen",
            "--values",
            "8,24",
        ];
        args.extend(["--out", p(&out)]);
        assert_eq!(code(&chipsim(&args)), 0);
        outputs.push(fs::read(out.join("sweep.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn sequential_and_parallel_sweeps_match() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (name, extra) in [("par", None), ("seq", Some("--sequential"))] {
        let out = dir.path().join(name);
        let mut args = vec![
            "sweep",
            "--model",
            "fastvlm_0_6b",
            "--axis",
            "policy",
            "--values",
            "het,dram-only",
        ];
        args.extend(SHORT);
        args.extend(["--out", p(&out)]);
        args.extend(extra);
        assert_eq!(code(&chipsim(&args)), 0);
        outputs.push(fs::read(out.join("sweep.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn config_file_with_relative_model_path() {
    let dir = tempfile::tempdir().unwrap();
    let model = chipsim::presets::model("fastvlm_0_6b").unwrap();
    fs::create_dir(dir.path().join("models")).unwrap();
    fs::write(dir.path().join("models/m.json"), model.to_json()).unwrap();
    let cfg = serde_json::json!({
        "model": "models/m.json",
        "hw": "dram-only",
        "policy": "dram-only",
        "workload": {"prompt_tokens": 16, "image": null, "output_tokens": 4},
        "out": "results"
    });
    let cfg_path = dir.path().join("exp.json");
    fs::write(&cfg_path, cfg.to_string()).unwrap();

    // run from elsewhere: paths resolve against the config's directory
    let o = chipsim(&["run", "--config", p(&cfg_path), "--output-tokens", "6"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report =
        SimReport::from_json(&fs::read_to_string(dir.path().join("results/report.json")).unwrap())
            .unwrap();
    assert_eq!(report.policy, "dram-only");
    assert_eq!(report.visual_tokens, 0);
    // the flag overrides the file
    assert_eq!(report.output_tokens, 6);
}

#[test]
fn malformed_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("exp.json");
    fs::write(&cfg_path, r#"{"model": "fastvlm_0_6b", "wrokload": {}}"#).unwrap();
    let o = chipsim(&["run", "--config", p(&cfg_path)]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("wrokload"), "{}", stderr(&o));

    let mut model: serde_json::Value =
        serde_json::from_str(&chipsim::presets::model("fastvlm_0_6b").unwrap().to_json()).unwrap();
    model["hidden_dimm"] = 1.into();
    let model_path = dir.path().join("bad_model.json");
    fs::write(&model_path, model.to_string()).unwrap();
    let o = chipsim(&["plan", "--model", p(&model_path), "--out", p(dir.path())]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("hidden_dimm"), "{}", stderr(&o));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = p(dir.path());
    assert_eq!(code(&chipsim(&["run", "--bogus-flag"])), 2);
    assert_eq!(code(&chipsim(&["run", "--image", "12by9"])), 2);
    assert_eq!(
        code(&chipsim(&["run", "--config", &format!("{d}/missing.json")])),
        3
    );
    assert_eq!(code(&chipsim(&["run", "--model", "gpt5", "--out", d])), 4);
    assert_eq!(
        code(&chipsim(&["run", "--policy", "sometimes", "--out", d])),
        4
    );
    assert_eq!(code(&chipsim(&["run", "--tile-size", "0", "--out", d])), 4);
    assert_eq!(
        code(&chipsim(&["sweep", "--axis", "voltage", "--out", d])),
        4
    );

    // a platform whose RRAM cannot hold the FFN weights fails in the mapper
    let mut hw: serde_json::Value =
        serde_json::from_str(&chipsim::presets::heterogeneous().to_json()).unwrap();
    hw["rram"]["units_per_tile"] = 1.into();
    let hw_path = dir.path().join("tiny.json");
    fs::write(&hw_path, hw.to_string()).unwrap();
    let o = chipsim(&[
        "run",
        "--model",
        "mobilevlm_3b",
        "--hw",
        p(&hw_path),
        "--out",
        d,
    ]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));

    let report = dir.path().join("r");
    let mut args = vec!["run", "--out", p(&report)];
    args.extend(SHORT);
    assert_eq!(code(&chipsim(&args)), 0);
    let rj = report.join("report.json");
    assert_eq!(
        code(&chipsim(&[
            "compare",
            "--report",
            p(&rj),
            "--baseline",
            "tpu"
        ])),
        6
    );

    let empty = dir.path().join("empty.csv");
    assert_eq!(
        code(&chipsim(&[
            "figdata",
            "--figure",
            "fig10",
            "--models",
            " , ",
            "--out",
            p(&empty)
        ])),
        7
    );
    assert!(!empty.exists());
    assert_eq!(code(&chipsim(&["sweep", "--values", ",", "--out", d])), 7);

    // the output path is an existing regular file, so a directory cannot be made
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let mut args = vec!["run", "--out"];
    let under = blocker.join("sub");
    args.push(p(&under));
    args.extend(SHORT);
    assert_eq!(code(&chipsim(&args)), 8);
}

fn write_report(dir: &Path, name: &str, tps: f64, tpj: f64) -> String {
    let base = chipsim::presets::model("fastvlm_0_6b").unwrap();
    let e = chipsim::Experiment::new(base, chipsim::presets::heterogeneous()).with_workload(
        chipsim::Workload {
            prompt_tokens: 8,
            image: None,
            output_tokens: 2,
        },
    );
    let mut r = e.run().unwrap();
    r.throughput_token_per_s = tps;
    r.token_per_j = tpj;
    let path = dir.join(name);
    fs::write(&path, r.to_json()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn compare_arithmetic() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_report(dir.path(), "a.json", 533.0, 233.0);
    let b = write_report(dir.path(), "b.json", 11.0, 19.3);

    let out = dir.path().join("cmp.csv");
    assert_eq!(
        code(&chipsim(&[
            "compare",
            "--report",
            &a,
            "--baseline",
            &b,
            "--out",
            p(&out)
        ])),
        0
    );
    let (header, rows) = csv_rows(&out);
    assert_eq!(header, table::COMPARE_COLUMNS);
    let f = |i: usize| rows[0][i].parse::<f64>().unwrap();
    assert!((f(7) - 48.454545).abs() < 1e-5 && f(7) == f(8));
    assert!((f(9) - 12.072539).abs() < 1e-5 && f(9) == f(10));

    let o = chipsim(&["compare", "--report", &a, "--baseline", &a]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8(o.stdout).unwrap();
    let row: Vec<&str> = stdout.lines().nth(1).unwrap().split(',').collect();
    for v in &row[7..] {
        assert_eq!(v.parse::<f64>().unwrap(), 1.0);
    }

    // published baselines are ranges: the low column divides by the best figure
    let jetson = chipsim::presets::baseline("jetson").unwrap();
    let o = chipsim(&["compare", "--report", &a, "--baseline", "jetson"]);
    let stdout = String::from_utf8(o.stdout).unwrap();
    let row: Vec<f64> = stdout
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .skip(3)
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(row[4], 533.0 / jetson.throughput_token_per_s[1]);
    assert_eq!(row[5], 533.0 / jetson.throughput_token_per_s[0]);
    assert!(row[4] <= row[5] && row[6] <= row[7]);
}

#[test]
fn fig9_latency_and_energy_grow_with_output_length() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig9.csv");
    let o = chipsim(&[
        "figdata",
        "--figure",
        "fig9",
        "--models",
        "fastvlm_0_6b,mobilevlm_1_7b",
        "--values",
        "16,64,256",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = csv_rows(&out);
    assert_eq!(header, table::FIG9_COLUMNS);
    assert_eq!(rows.len(), 6);
    for model in rows.chunks(3) {
        assert!(model.iter().all(|r| r[3] == "ok"));
        for pair in model.windows(2) {
            let num = |r: &Vec<String>, i: usize| r[i].parse::<f64>().unwrap();
            assert!(num(&pair[1], 5) > num(&pair[0], 5));
            assert!(num(&pair[1], 6) > num(&pair[0], 6));
            assert!(num(&pair[1], 7) > num(&pair[0], 7));
        }
    }
}

#[test]
fn fig10_ratios_match_their_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig10.csv");
    let o = chipsim(&[
        "figdata",
        "--figure",
        "fig10",
        "--models",
        "mobilevlm_3b",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = csv_rows(&out);
    assert_eq!(header, table::FIG10_COLUMNS);
    let f = |i: usize| rows[0][i].parse::<f64>().unwrap();
    assert_eq!(f(6), f(4) / f(5));
    assert_eq!(f(9), f(7) / f(8));
    // the largest model gains from moving its FFN weights to RRAM
    assert!(f(6) > 1.0 && f(9) > 1.0);
}

#[test]
fn fig7_has_one_row_per_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig7.csv");
    let o = chipsim(&[
        "figdata",
        "--figure",
        "fig7",
        "--models",
        "fastvlm_0_6b,fastvlm_1_7b",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = csv_rows(&out);
    assert_eq!(header, table::FIG7_COLUMNS);
    assert_eq!(
        rows.iter().map(|r| r[1].as_str()).collect::<Vec<_>>(),
        ["fastvlm_0_6b", "fastvlm_1_7b"]
    );
    assert!(rows
        .iter()
        .all(|r| r[2] == "ok" && r[7].parse::<f64>().unwrap() > 1.0));
}

#[test]
fn plan_is_written_and_loads() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["plan", "--model", "fastvlm_1_7b", "--out", p(dir.path())];
    args.extend(SHORT);
    assert_eq!(code(&chipsim(&args)), 0);
    let plan =
        chipsim::MappingPlan::from_json(&fs::read_to_string(dir.path().join("plan.json")).unwrap());
    assert!(plan.is_ok());
}
