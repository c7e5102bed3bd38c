use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use epcorr::bench::{
    correct_model_file, load_config, run_gp_box, run_gp_box_sweep, run_gp_quantized, run_wainwright_jordan, selftest,
    write_rows, Coupling, GpBoxConfig, GpQuantizedConfig, Graph, Method, OutputFormat, WjConfig,
};

#[derive(Parser)]
#[command(name = "epcorr", version, about = "EP/EC with cumulant corrections: benchmarks and one-shot correction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML config file (JSON if the extension is .json)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for result files; stdout when absent
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value = "csv", value_parser = ["csv", "json"])]
    format: String,
    /// Comma-separated subset of ec,ec_c,ec_eps,ec_t,ec_tc
    #[arg(long, global = true, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Comma-separated cumulant orders
    #[arg(long = "l-range", global = true, value_delimiter = ',')]
    l_range: Option<Vec<usize>>,
}

#[derive(Subcommand)]
enum Command {
    /// Wainwright–Jordan 16-spin benchmark
    Wj {
        #[arg(long, value_parser = ["full", "grid4x4"])]
        graph: Option<String>,
        #[arg(long, value_parser = ["repulsive", "mixed", "attractive"])]
        coupling: Option<String>,
        #[arg(long)]
        d_coup: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// GP-in-a-box sweep over N (or over a with --a-sweep)
    GpBox {
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        a_sweep: bool,
    },
    /// GP regression with uniform (quantization) noise
    GpQuantized,
    /// Solve EP for a JSON model file and report log Z_EP, log R and diagnostics
    Correct { model: PathBuf },
    /// Oracle-equivalence checks
    Selftest,
}

fn config_or_default<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> epcorr::Result<T> {
    match path {
        Some(p) => load_config(p),
        None => Ok(T::default()),
    }
}

fn open_out(dir: &Option<PathBuf>, name: &str) -> epcorr::Result<Box<dyn Write>> {
    match dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            Ok(Box::new(BufWriter::new(File::create(d.join(name))?)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn emit_rows<T: Serialize>(common: &Common, stem: &str, rows: &[T]) -> epcorr::Result<()> {
    let format: OutputFormat = common.format.parse()?;
    let ext = if format == OutputFormat::Csv { "csv" } else { "json" };
    let mut w = open_out(&common.out, &format!("{stem}.{ext}"))?;
    write_rows(rows, format, &mut w)?;
    w.flush()?;
    Ok(())
}

fn emit_json<T: Serialize>(common: &Common, name: &str, value: &T) -> epcorr::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| epcorr::Error::Io(e.to_string()))?;
    match &common.out {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            std::fs::write(d.join(name), text + "\n")?;
        }
        None => eprintln!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> epcorr::Result<bool> {
    let common = &cli.common;
    match cli.command {
        Command::Wj { graph, coupling, d_coup, trials } => {
            let mut cfg: WjConfig = config_or_default(&common.config)?;
            if let Some(g) = graph {
                cfg.graph = if g == "full" { Graph::Full } else { Graph::Grid4x4 };
            }
            if let Some(c) = coupling {
                cfg.coupling = match c.as_str() {
                    "repulsive" => Coupling::Repulsive,
                    "attractive" => Coupling::Attractive,
                    _ => Coupling::Mixed,
                };
            }
            cfg.d_coup = d_coup.unwrap_or(cfg.d_coup);
            cfg.trials = trials.unwrap_or(cfg.trials);
            cfg.seed = common.seed.unwrap_or(cfg.seed);
            if let Some(m) = &common.methods {
                cfg.methods = m.iter().map(|s| s.parse::<Method>()).collect::<epcorr::Result<_>>()?;
            }
            if let Some(l) = &common.l_range {
                cfg.orders = l.clone();
            }
            let report = run_wainwright_jordan(&cfg)?;
            emit_rows(common, "wj_rows", &report.rows)?;
            #[derive(Serialize)]
            struct Summary<'a> {
                config: &'a WjConfig,
                summary: &'a [epcorr::bench::SummaryRow],
            }
            emit_json(common, "wj_summary.json", &Summary { config: &report.config, summary: &report.summary })?;
        }
        Command::GpBox { a, a_sweep } => {
            let mut cfg: GpBoxConfig = config_or_default(&common.config)?;
            cfg.a = a.unwrap_or(cfg.a);
            cfg.seed = common.seed.unwrap_or(cfg.seed);
            if let Some(l) = &common.l_range {
                cfg.orders = l.clone();
            }
            if a_sweep {
                emit_rows(common, "gp_box_sweep", &run_gp_box_sweep(&cfg)?)?;
            } else {
                emit_rows(common, "gp_box", &run_gp_box(&cfg)?)?;
            }
        }
        Command::GpQuantized => {
            let mut cfg: GpQuantizedConfig = config_or_default(&common.config)?;
            cfg.seed = common.seed.unwrap_or(cfg.seed);
            if let Some(l) = &common.l_range {
                cfg.mean_orders = l.clone();
            }
            let report = run_gp_quantized(&cfg)?;
            emit_rows(common, "gp_quantized", &report.rows)?;
            let mut meta = report.clone();
            meta.rows.clear();
            emit_json(common, "gp_quantized_summary.json", &meta)?;
        }
        Command::Correct { model } => {
            let report = correct_model_file(Path::new(&model), common.l_range.as_deref())?;
            let text = serde_json::to_string_pretty(&report).map_err(|e| epcorr::Error::Io(e.to_string()))?;
            let mut w = open_out(&common.out, "correct.json")?;
            writeln!(w, "{text}")?;
            w.flush()?;
        }
        Command::Selftest => {
            let lines = selftest(common.seed.unwrap_or(0))?;
            let mut ok = true;
            for l in &lines {
                ok &= l.passed;
                println!(
                    "{} {} (error {:.3e}, tolerance {:.1e})",
                    if l.passed { "PASS" } else { "FAIL" },
                    l.name,
                    l.error,
                    l.tolerance
                );
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_into(dir: &Path, args: &[&str]) -> Vec<u8> {
        let mut full = vec!["epcorr"];
        full.extend_from_slice(args);
        let out = dir.to_str().unwrap();
        full.extend_from_slice(&["--out", out]);
        assert!(run(Cli::parse_from(full)).unwrap());
        let mut bytes = Vec::new();
        let mut names: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        for p in names {
            bytes.extend(std::fs::read(p).unwrap());
        }
        bytes
    }

    #[test]
    fn wj_output_is_reproducible() {
        let args = ["wj", "--trials", "3", "--seed", "4", "--methods", "ec,ec_c,ec_t"];
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let x = run_into(a.path(), &args);
        assert!(!x.is_empty());
        assert_eq!(x, run_into(b.path(), &args));
        let rows = std::fs::read_to_string(a.path().join("wj_rows.csv")).unwrap();
        assert_eq!(rows.lines().count(), 1 + 3 * 3);
    }

    #[test]
    fn correct_writes_json() {
        let dir = tempfile::tempdir().unwrap();
        let model = dir.path().join("m.json");
        std::fs::write(
            &model,
            r#"{"mode":"coupling","J":[[0,0.4],[0.4,0]],"sites":[{"kind":"ising"},{"kind":"ising"}]}"#,
        )
        .unwrap();
        let out = dir.path().join("out");
        let args = ["epcorr", "correct", model.to_str().unwrap(), "--out", out.to_str().unwrap(), "--l-range", "3,4"];
        assert!(run(Cli::parse_from(args)).unwrap());
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("correct.json")).unwrap()).unwrap();
        assert_eq!(v["converged"], true);
        assert!(v["log_r"].as_f64().unwrap().abs() > 0.0);
    }

    #[test]
    fn rejects_unknown_method() {
        let cli = Cli::parse_from(["epcorr", "wj", "--trials", "1", "--methods", "bp"]);
        assert!(run(cli).is_err());
    }
}
