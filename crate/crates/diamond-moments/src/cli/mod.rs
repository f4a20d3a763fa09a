//! Batch command-line front end.
//!
//! Every command is a deterministic function of the resolved configuration
//! and seed. Exit codes: 0 success, 2 configuration error, 3 not converged,
//! 4 work budget exceeded, 5 verification failure.

mod commands;
pub mod config;
pub mod output;
pub mod verify;

pub use config::{FileConfig, OutputFormat, Overrides, RunConfig};

use clap::{Parser, Subcommand};
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExitCode {
    Success = 0,
    Failure = 1,
    Config = 2,
    NotConverged = 3,
    Budget = 4,
    VerifyFailed = 5,
}

#[derive(Debug, Parser)]
#[command(name = "diamond-moments", version, about = "Critical moment recursions on diamond hierarchical lattices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// kappa_b, eta_b and the Gaussian constants for even m <= m_max.
    Constants,
    /// Write P_m, U_m, V_m as JSON (into --out, default ./pm_out) and a structure summary.
    Pm,
    /// Limit moments R^(2..m_max)(r) on the r grid.
    Limits,
    /// Variance limit R_b(r) by the ladder and by the inverse Abel function.
    Maps,
    /// Pool Monte Carlo against the exact recursion.
    Mc {
        /// Also write the final pool (binary if the extension is .bin, else CSV).
        #[arg(long = "pool-out")]
        pool_out: Option<PathBuf>,
    },
    /// Run the verification suite; writes a JSON report.
    Verify {
        /// Test hook: add one to the linear coefficient of P_m, given as b:m.
        #[arg(long = "perturb-pm", hide = true)]
        perturb_pm: Option<String>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::Pm => "pm",
            Command::Limits => "limits",
            Command::Maps => "maps",
            Command::Mc { .. } => "mc",
            Command::Verify { .. } => "verify",
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Reports go to `--out` when given, else to `stdout`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::Config as i32 } else { 0 };
        }
    };
    let cfg = match RunConfig::load(cli.command.name(), &cli.overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::Config as i32;
        }
    };
    // Reports for stdout are buffered so the worker pool owns no handle.
    let mut buf = Vec::new();
    let result = match cfg.workers {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command, &cfg, &mut buf)),
            Err(e) => Err(crate::Error::Config(e.to_string())),
        },
        None => dispatch(&cli.command, &cfg, &mut buf),
    };
    let result = result.and_then(|code| {
        stdout.write_all(&buf)?;
        stdout.flush()?;
        Ok(code)
    });
    match result {
        Ok(code) => code as i32,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from_error(&e) as i32
        }
    }
}

fn dispatch(command: &Command, cfg: &RunConfig, stdout: &mut Vec<u8>) -> crate::Result<ExitCode> {
    // pm writes files into --out; every other command writes its report there.
    let mut file;
    let out: &mut dyn Write = match (&cfg.out, command) {
        (Some(path), c) if !matches!(c, Command::Pm) => {
            file = std::io::BufWriter::new(std::fs::File::create(path)?);
            &mut file
        }
        _ => stdout,
    };
    let code = match command {
        Command::Constants => commands::constants(cfg, out),
        Command::Pm => commands::pm(cfg, out),
        Command::Limits => commands::limits(cfg, out),
        Command::Maps => commands::maps(cfg, out),
        Command::Mc { pool_out } => commands::mc(cfg, pool_out.as_deref(), out),
        Command::Verify { perturb_pm } => {
            let perturb = match perturb_pm {
                Some(text) => Some(
                    verify::Perturbation::parse(text)
                        .ok_or_else(|| crate::Error::Config(format!("--perturb-pm expects b:m, got {text}")))?,
                ),
                None => None,
            };
            commands::verify(cfg, perturb.as_ref(), out)
        }
    }?;
    out.flush()?;
    Ok(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String) {
        let mut buf = Vec::new();
        let mut full = vec!["diamond-moments"];
        full.extend_from_slice(args);
        let code = run(full, &mut buf);
        (code, String::from_utf8(buf).unwrap())
    }

    #[test]
    fn constants_command() {
        let (code, text) = run_capture(&["constants", "--b", "2", "--m-max", "4"]);
        assert_eq!(code, 0);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# diamond-moments"));
        assert_eq!(lines[1], "b,kappa,eta,m,gaussian_constant");
        assert!(lines[3].ends_with(",4,1.2000000000000000e1"), "{}", lines[3]);
        let (_, json) = run_capture(&["constants", "--b", "3", "--m-max", "4", "--format", "json"]);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!((v["rows"][1]["gaussian_constant"].as_f64().unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn config_errors_exit_2() {
        assert_eq!(run_capture(&["limits", "--b", "2", "--s", "3"]).0, 2);
        assert_eq!(run_capture(&["limits", "--bogus"]).0, 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "b = 2\nunknown_key = 1\n").unwrap();
        assert_eq!(run_capture(&["constants", "--config", path.to_str().unwrap()]).0, 2);
    }

    #[test]
    fn pm_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (code, _) = run_capture(&["pm", "--b", "2", "--m-max", "3", "--out", dir.path().to_str().unwrap()]);
        assert_eq!(code, 0);
        let text = std::fs::read_to_string(dir.path().join("p_b2_m3.json")).unwrap();
        let rec: crate::moments::PolyRecord = serde_json::from_str(&text).unwrap();
        let p = crate::moments::SparsePolynomial::from_record(&rec).unwrap();
        assert_eq!(p, *crate::moments::build_pm(2, 3).unwrap());
        let again = serde_json::to_string_pretty(&p.to_record(2, 3)).unwrap() + "\n";
        assert_eq!(again, text);
        assert!(dir.path().join("v_b2_m3.json").exists());
    }

    #[test]
    fn degenerate_mc_is_all_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "beta = 0.0\npool_size = 2000\ngenerations = 4\n").unwrap();
        let (code, text) = run_capture(&["mc", "--config", path.to_str().unwrap(), "--format", "json"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for row in v["rows"].as_array().unwrap().iter().skip(1) {
            assert_eq!(row["empirical"].as_f64().unwrap(), 0.0);
            assert_eq!(row["exact"].as_f64().unwrap(), 0.0);
        }
    }

    #[test]
    fn mc_is_deterministic() {
        let args = ["mc", "--pool-size", "5000", "--generations", "8", "--seed", "3"];
        let (c1, a) = run_capture(&args);
        let mut more = args.to_vec();
        more.extend(["--workers", "2"]);
        let (c2, b) = run_capture(&more);
        assert_eq!((c1, &a), (c2, &b));
    }

    #[test]
    fn limits_flags_rows() {
        let (code, text) = run_capture(&["limits", "--m-max", "3", "--r-min", "-6", "--r-max", "-5", "--n-max-exp", "16"]);
        assert!(code == 0 || code == 3);
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 2);
        let shift: f64 = rows[0][7].parse().unwrap();
        assert!(shift < 1e-6, "{shift}");
    }
}
