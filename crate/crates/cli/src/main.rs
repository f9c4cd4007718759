//! `quotamatch`: run, audit and generate quota-constrained assignment instances.
//!
//! Exit status is 0 on success or when an audited property holds, 2 when a
//! property is violated (the witness is printed) and 1 on any error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use quotamatch::audit::{self, AuditReport, PARETO_SEARCH_CAP};
use quotamatch::flows::integral_opt_laminar;
use quotamatch::format::{self, parse_instance, Exact, ResultFile};
use quotamatch::generate::{gen_instance, ConstraintStyle, GenParams};
use quotamatch::gps::run_gps;
use quotamatch::lottery::decompose;
use quotamatch::sdm::{random_order, run_sdm, SdmResult};
use quotamatch::{compute_opt, Error, Instance, Result};

#[derive(Parser, Debug)]
#[command(name = "quotamatch", version, about = "School choice under distributional quotas")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print OPT, the fractional maximum number of seated students.
    Opt { file: PathBuf },
    /// Serial dictatorship with dynamic menus.
    Sd {
        file: PathBuf,
        /// Comma-separated student ids; defaults to file order.
        #[arg(long, value_delimiter = ',', conflicts_with = "seed")]
        order: Option<Vec<String>>,
        /// Uniformly random order drawn from this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trace: bool,
    },
    /// Generalized probabilistic serial.
    Gps {
        file: PathBuf,
        /// Also decompose the outcome into a lottery.
        #[arg(long)]
        lottery: bool,
        #[arg(long)]
        trace: bool,
    },
    /// Decompose the assignment stored in a result file into a lottery.
    Lottery {
        file: PathBuf,
        #[arg(long = "from")]
        from: PathBuf,
    },
    /// Exact integral optimum of a laminar instance by max flow.
    Laminar { file: PathBuf },
    /// Check a property of a mechanism's outcome.
    Audit {
        file: PathBuf,
        #[arg(long, value_enum)]
        mechanism: Mechanism,
        #[arg(long, value_enum)]
        check: Check,
        #[arg(long, value_delimiter = ',')]
        order: Option<Vec<String>>,
        /// Number of random orders for the symmetry check.
        #[arg(long, default_value_t = 10_000)]
        seeds: usize,
    },
    /// Write a random instance.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        students: usize,
        #[arg(long, default_value_t = 3)]
        schools: usize,
        #[arg(long, default_value_t = 3)]
        types: usize,
        #[arg(long, default_value = "pairs")]
        style: String,
        /// Percentage of quota sides pinned to the hidden reference assignment.
        #[arg(long, default_value_t = 50)]
        tightness: u8,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mechanism {
    Sd,
    Gps,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Check {
    Feasibility,
    Pareto,
    Sp,
    Wsp,
    Envy,
    Ordinal,
    Symmetry,
}

enum Outcome {
    Done(String),
    Audited(String, bool),
}

fn resolve_order(inst: &Instance, ids: Option<&[String]>) -> Result<Vec<usize>> {
    match ids {
        None => Ok((0..inst.num_students()).collect()),
        Some(ids) => ids
            .iter()
            .map(|id| {
                inst.student_index(id.trim())
                    .ok_or_else(|| Error::Validation(format!("--order names unknown student {id:?}")))
            })
            .collect(),
    }
}

fn run_sd(inst: &Instance, order: Option<&[String]>, seed: Option<u64>) -> Result<SdmResult> {
    let order = match seed {
        Some(seed) => random_order(inst.num_students(), seed),
        None => resolve_order(inst, order)?,
    };
    run_sdm(inst, &order)
}

fn audit(inst: &Instance, mechanism: Mechanism, check: Check, order: Option<&[String]>, seeds: usize) -> Result<AuditReport> {
    let unsupported = || {
        Err(Error::Validation(format!("check {check:?} does not apply to mechanism {mechanism:?}").to_lowercase()))
    };
    match (mechanism, check) {
        (Mechanism::Sd, Check::Feasibility) => audit::check_sdm_guarantees(inst, &run_sd(inst, order, None)?),
        (Mechanism::Sd, Check::Pareto) => {
            let res = run_sd(inst, order, None)?;
            audit::check_pareto(&res.allocation, inst, &res.adjusted_quotas(inst), PARETO_SEARCH_CAP)
        }
        (Mechanism::Sd, Check::Sp) => audit::check_strategyproof(inst, &resolve_order(inst, order)?),
        (Mechanism::Sd, Check::Symmetry) => audit::check_rsd_symmetry(inst, seeds),
        (Mechanism::Sd, Check::Envy) => {
            audit::check_envy_free(&run_sd(inst, order, None)?.allocation.to_matrix(inst), inst)
        }
        (Mechanism::Sd, Check::Ordinal) => {
            audit::check_ordinal_efficiency(&run_sd(inst, order, None)?.allocation.to_matrix(inst), inst)
        }
        (Mechanism::Gps, Check::Feasibility) => {
            let res = run_gps(inst)?;
            audit::check_fractional_optimality(&res.x, inst, &res.opt)
        }
        (Mechanism::Gps, Check::Wsp) => audit::check_weak_sp(inst),
        (Mechanism::Gps, Check::Envy) => audit::check_envy_free(&run_gps(inst)?.x, inst),
        (Mechanism::Gps, Check::Ordinal) => audit::check_ordinal_efficiency(&run_gps(inst)?.x, inst),
        (Mechanism::Sd, Check::Wsp) | (Mechanism::Gps, Check::Pareto | Check::Sp | Check::Symmetry) => unsupported(),
    }
}

fn read_instance(path: &Path) -> Result<Instance> {
    parse_instance(path).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

fn execute(command: Command) -> Result<Outcome> {
    match command {
        Command::Opt { file } => {
            let inst = read_instance(&file)?;
            let opt = compute_opt(&inst)?;
            let text = serde_json::to_string_pretty(&json!({ "opt": Exact(opt) })).expect("json");
            Ok(Outcome::Done(text + "\n"))
        }
        Command::Sd { file, order, seed, trace } => {
            let inst = read_instance(&file)?;
            let res = run_sd(&inst, order.as_deref(), seed)?;
            Ok(Outcome::Done(ResultFile::from_sdm(&inst, &res, seed, trace)?.to_text()))
        }
        Command::Gps { file, lottery, trace } => {
            let inst = read_instance(&file)?;
            let res = run_gps(&inst)?;
            let lot = lottery.then(|| decompose(&res.x, &inst, &res.opt)).transpose()?;
            Ok(Outcome::Done(ResultFile::from_gps(&inst, &res, lot.as_ref(), trace)?.to_text()))
        }
        Command::Lottery { file, from } => {
            let inst = read_instance(&file)?;
            let source = ResultFile::parse(&fs::read_to_string(&from)?)?;
            let x = source.assignment_matrix(&inst)?;
            let opt = compute_opt(&inst)?;
            let lot = decompose(&x, &inst, &opt)?;
            let doc = ResultFile {
                mechanism: "lottery".into(),
                seed: None,
                order: None,
                opt: Exact(opt.clone()),
                allocation: None,
                assignment: source.assignment.clone(),
                delta: None,
                violations: None,
                trace: None,
                lottery: Some(format::lottery_entries(&inst, &lot, &opt)?),
            };
            Ok(Outcome::Done(doc.to_text()))
        }
        Command::Laminar { file } => {
            let inst = read_instance(&file)?;
            let alloc = integral_opt_laminar(&inst)?;
            let opt = compute_opt(&inst)?;
            let value = json!({
                "mechanism": "laminar",
                "opt": Exact(opt),
                "seated": alloc.regular_count(&inst),
                "allocation": alloc.0.iter().enumerate()
                    .map(|(i, &s)| (inst.student(i).id.clone(), json!(inst.school_id(s))))
                    .collect::<serde_json::Map<_, _>>(),
            });
            Ok(Outcome::Done(serde_json::to_string_pretty(&value).expect("json") + "\n"))
        }
        Command::Audit { file, mechanism, check, order, seeds } => {
            let inst = read_instance(&file)?;
            let report = audit(&inst, mechanism, check, order.as_deref(), seeds)?;
            let text = serde_json::to_string_pretty(&format::report_value(&inst, &report)).expect("json");
            Ok(Outcome::Audited(text + "\n", report.holds()))
        }
        Command::Gen { seed, students, schools, types, style, tightness, output } => {
            let style: ConstraintStyle = style.parse()?;
            let params = GenParams { seed, n_students: students, n_schools: schools, n_types: types, style, tightness };
            let inst = gen_instance(&params)?;
            fs::write(&output, format::instance_to_string(&inst))?;
            Ok(Outcome::Done(String::new()))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(Outcome::Done(text)) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Ok(Outcome::Audited(text, holds)) => {
            print!("{text}");
            if holds {
                ExitCode::SUCCESS
            } else {
                eprintln!("property violated");
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
