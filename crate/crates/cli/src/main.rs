//! Exit codes: 0 success, 1 usage error, 2 runtime/data error.

use focusnet_cli::{cmd_eval, cmd_gen_data, cmd_train, cmd_visualize, GenConfig, RawConfig, RunConfig};
use focusnet_core::data::Split;
use std::path::Path;
use std::process::ExitCode;

const USAGE: &str = "usage: focusnet <command> ...

commands:
  gen-data  <config>                      generate a synthetic dataset
  train     <config>                      train one run
  eval      <checkpoint> <manifest> <split>   evaluate on train|val|test
  visualize <checkpoint> <image> <outdir>     write saliency mask + overlay
";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("{msg}");
            eprint!("{USAGE}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

enum Failure {
    Usage(String),
    Runtime(focusnet_core::Error),
}

impl From<focusnet_core::Error> for Failure {
    fn from(e: focusnet_core::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn run(args: &[String]) -> Result<(), Failure> {
    let usage = |msg: &str| Err(Failure::Usage(msg.to_string()));
    match args.first().map(String::as_str) {
        Some("gen-data") => {
            let [_, cfg_path] = args else {
                return usage("gen-data wants exactly one config path");
            };
            let raw = RawConfig::load(Path::new(cfg_path))?;
            let cfg = GenConfig::from_raw(&raw)?;
            cmd_gen_data(&cfg)?;
            println!(
                "wrote {} samples under {}",
                cfg.dataset.num_samples,
                cfg.output_dir.display()
            );
            Ok(())
        }
        Some("train") => {
            let [_, cfg_path] = args else {
                return usage("train wants exactly one config path");
            };
            let raw = RawConfig::load(Path::new(cfg_path))?;
            let cfg = RunConfig::from_raw(&raw)?;
            let out = cmd_train(&cfg)?;
            println!(
                "checkpoint {} (final val mAP {:.6})",
                out.checkpoint.display(),
                out.final_val_map
            );
            Ok(())
        }
        Some("eval") => {
            let [_, ckpt, manifest, split] = args else {
                return usage("eval wants <checkpoint> <manifest> <split>");
            };
            let split = Split::parse(split).map_err(|_| {
                Failure::Usage(format!("unknown split '{split}' (want train | val | test)"))
            })?;
            let out = cmd_eval(Path::new(ckpt), Path::new(manifest), split)?;
            print!("{}", out.report.to_tsv());
            println!("report: {}", out.report_tsv.display());
            Ok(())
        }
        Some("visualize") => {
            let [_, ckpt, image, outdir] = args else {
                return usage("visualize wants <checkpoint> <image> <outdir>");
            };
            let out = cmd_visualize(Path::new(ckpt), Path::new(image), Path::new(outdir))?;
            println!("{}", out.mask_pgm.display());
            println!("{}", out.overlay_ppm.display());
            Ok(())
        }
        Some(other) => usage(&format!("unknown command '{other}'")),
        None => usage("missing command"),
    }
}
