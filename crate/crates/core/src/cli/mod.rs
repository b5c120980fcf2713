//! The `qnnc` command-line driver.

mod footprint;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::exec::float_ref::{compare_outputs, dequantize_outputs, run_float_reference};
use crate::exec::{reference_qnn_interpreter, run_graph, run_graph_named, TensorMap};
use crate::frontend::{load_tensor_file, parse_model, parse_model_raw, save_tensor_file, write_model};
use crate::ir::{dump, Graph, RoundingMode};
use crate::pipeline::{run_pipeline, Pass, PipelineOptions};
use crate::targets::lookup_target;

pub use footprint::{footprint, FootprintReport, Fp32Comparison};

#[derive(Debug, Parser)]
#[command(name = "qnnc", version, about = "Quantized graph compiler and reference executor")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RoundingArg {
    Away,
    Even,
}

impl From<RoundingArg> for RoundingMode {
    fn from(r: RoundingArg) -> Self {
        match r {
            RoundingArg::Away => RoundingMode::ToNearestAway,
            RoundingArg::Even => RoundingMode::ToNearestEven,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DiffMode {
    Oracle,
    Fp32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compile a model to a base-op graph.
    Compile {
        model: PathBuf,
        #[arg(long, default_value = "generic")]
        target: String,
        #[arg(long, value_enum)]
        rounding: Option<RoundingArg>,
        /// Print the IR after a pass, as `after=<pass>`; repeatable.
        #[arg(long = "dump-ir", value_name = "after=PASS")]
        dump_ir: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute a compiled graph.
    Run {
        compiled: PathBuf,
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long)]
        outputs: Option<PathBuf>,
    },
    /// Compare compiled execution against the oracle or an f32 evaluation.
    Diff {
        model: PathBuf,
        #[arg(long, default_value = "generic")]
        target: String,
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long, value_enum, default_value = "oracle")]
        mode: DiffMode,
        #[arg(long, value_enum)]
        rounding: Option<RoundingArg>,
    },
    /// Report weight and peak activation memory of the compiled graph.
    Footprint {
        model: PathBuf,
        #[arg(long, default_value = "generic")]
        target: String,
        #[arg(long)]
        compare_fp32: bool,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn parse_dump_specs(specs: &[String]) -> Result<Vec<Pass>> {
    specs
        .iter()
        .map(|s| {
            let name = s.strip_prefix("after=").unwrap_or(s);
            name.parse()
        })
        .collect()
}

/// Compiles a model file, writing requested IR dumps to `dumps`.
pub fn compile_file(path: &Path, target: &str, rounding: Option<RoundingMode>, dump_after: &[Pass], dumps: &mut dyn Write) -> Result<Graph> {
    let target = lookup_target(target)?;
    let raw = parse_model_raw(&read(path)?).map_err(|e| Error::Pass {
        pass: "parse",
        source: Box::new(e),
    })?;
    let mut io_err = None;
    let g = run_pipeline(&raw, &PipelineOptions { target, rounding }, |pass, g| {
        if dump_after.contains(&pass) {
            if let Err(e) = write!(dumps, "// after {pass}\n{}", dump(g)) {
                io_err.get_or_insert(e);
            }
        }
    })?;
    match io_err {
        Some(e) => Err(e.into()),
        None => Ok(g),
    }
}

fn emit(out: &Option<PathBuf>, bytes: &[u8], stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes)?,
        None => stdout.write_all(bytes)?,
    }
    Ok(())
}

pub fn diff_report(model: &Path, target: &str, inputs: &TensorMap, mode: DiffMode, rounding: Option<RoundingMode>) -> Result<String> {
    let raw = parse_model_raw(&read(model)?)?;
    let compiled = run_pipeline(&raw, &PipelineOptions { target: lookup_target(target)?, rounding }, |_, _| {})?;
    let got = run_graph(&compiled, inputs)?;
    let mut s = String::new();
    match mode {
        DiffMode::Oracle => {
            let raw = match rounding {
                Some(m) => crate::pipeline::override_rounding(&raw, m),
                None => raw,
            };
            let want = reference_qnn_interpreter(&raw, inputs)?;
            let mut worst = 0i64;
            for ((name, a), b) in raw.output_names.iter().zip(&got).zip(&want) {
                let d = match (a.to_i64(), b.to_i64()) {
                    (Some(x), Some(y)) if a.shape() == b.shape() => x.iter().zip(&y).map(|(p, q)| (p - q).abs()).max().unwrap_or(0),
                    _ if a == b => 0,
                    _ => return Err(Error::Tensor(format!("output `{name}` differs in type or shape from the oracle"))),
                };
                worst = worst.max(d);
                s += &format!("output {name}: max_abs_diff {d}\n");
            }
            s += &format!("max_abs_diff {worst}\n");
        }
        DiffMode::Fp32 => {
            let deq = dequantize_outputs(&raw, &got)?;
            let real = run_float_reference(&raw, inputs)?;
            let mut worst = 0.0f64;
            for ((name, q), r) in raw.output_names.iter().zip(&deq).zip(&real) {
                let rep = compare_outputs(q, r)?;
                worst = worst.max(rep.max_abs_error);
                s += &format!("output {name}: max_abs_error {:.6} top1_agreement {:.4} ({} rows)\n", rep.max_abs_error, rep.top1_agreement, rep.rows);
            }
            s += &format!("max_abs_error {worst:.6}\n");
        }
    }
    Ok(s)
}

pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Compile { model, target, rounding, dump_ir, out } => {
            let passes = parse_dump_specs(&dump_ir)?;
            lookup_target(&target)?;
            let g = compile_file(&model, &target, rounding.map(Into::into), &passes, stdout)?;
            emit(&out, write_model(&g)?.as_bytes(), stdout)
        }
        Command::Run { compiled, inputs, outputs } => {
            let g = parse_model(&read(&compiled)?)?;
            let inputs = load_tensor_file(&read(&inputs)?)?;
            let outs = run_graph_named(&g, &inputs)?;
            emit(&outputs, &save_tensor_file(&outs), stdout)
        }
        Command::Diff { model, target, inputs, mode, rounding } => {
            lookup_target(&target)?;
            let inputs = load_tensor_file(&read(&inputs)?)?;
            let report = diff_report(&model, &target, &inputs, mode, rounding.map(Into::into))?;
            stdout.write_all(report.as_bytes())?;
            Ok(())
        }
        Command::Footprint { model, target, compare_fp32, format } => {
            let g = compile_file(&model, &target, None, &[], &mut std::io::sink())?;
            let r = footprint(&g, compare_fp32);
            let text = match format {
                Format::Text => r.to_text(),
                Format::Json => serde_json::to_string_pretty(&r).expect("report serializes") + "\n",
            };
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// Exit code for an error: 1 for bad invocations, 2 for failures while
/// compiling or executing.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::UnknownTarget { .. } | Error::UnknownPass { .. } => 1,
        _ => 2,
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
