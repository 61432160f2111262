//! The `equisr` command-line tool.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::config::RunConfig;
use crate::data::{gen_synthetic, read_image, write_atomic, write_image, DatasetKind};
use crate::error::{Error, Result};
use crate::group::Image;
use crate::harness::{
    gradient_suite, load_checkpoint, sweep_with, train_to_dir, write_csv, Case, ModelSource,
    GRAD_MODULES, GRAD_SEEDS, GRAD_TOL,
};

const VERSION_LINE: &str = concat!("# equisr ", env!("CARGO_PKG_VERSION"));

#[derive(Parser, Debug)]
#[command(
    name = "equisr",
    version,
    about = "Rotation-equivariant arbitrary-scale super-resolution"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the synthetic corpus as PPM/PGM files plus a manifest CSV.
    GenData {
        /// JSON run configuration; absent keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure equivariance errors over the `eval` grid and write a sweep CSV.
    EvalEquiv {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint manifest; randomly initialized models (one per seed) when absent.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write one 8-bit error map per case, with scales in `scales.csv`.
        #[arg(long)]
        error_maps: Option<PathBuf>,
    },
    /// Train with Adam on L1 loss; writes model.json, model.bin and loss.csv.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Super-resolve one image by any real factor >= 1.
    Sr {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        scale: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference gradient checks; exits 4 if any case fails.
    Gradcheck {
        /// One of primitives, filter, encoder, inr, loss; all when absent.
        #[arg(long)]
        module: Option<String>,
    },
    /// Print (or write) the default run configuration.
    Defaults {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn extension(img: &Image) -> &'static str {
    if img.c == 1 {
        "pgm"
    } else {
        "ppm"
    }
}

fn gen_data(config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    create_dir(out)?;
    let d = &cfg.data;
    let mut manifest = format!("{VERSION_LINE}\nindex,file,kind,seed,stream,size\n");
    for i in 0..d.count {
        let img = gen_synthetic(d, i)?;
        let name = format!("img_{i:04}.{}", extension(&img));
        write_image(out.join(&name), &img)?;
        let kind = serde_json::to_value(d.kind).expect("kind serializes");
        let size = if d.kind == DatasetKind::FileDir {
            img.h
        } else {
            d.size
        };
        manifest.push_str(&format!(
            "{i},{name},{},{},{i},{size}\n",
            kind.as_str().unwrap_or(""),
            d.seed
        ));
    }
    write_atomic(&out.join("manifest.csv"), manifest.as_bytes())?;
    println!("wrote {} images to {}", d.count, out.display());
    Ok(())
}

fn eval_equiv(
    config: Option<&Path>,
    ckpt: Option<&Path>,
    out: &Path,
    maps: Option<&Path>,
) -> Result<()> {
    let cfg = load_config(config)?;
    let grid = cfg.sweep_grid()?;
    let model = ckpt.map(load_checkpoint).transpose()?;
    let source = match &model {
        Some(m) => ModelSource::Fixed(m),
        None => ModelSource::Random,
    };
    if let Some(dir) = maps {
        create_dir(dir)?;
    }
    let mut sidecar = format!(
        "{VERSION_LINE}\nfile,model,variant,t,angle_rad,scale,resolution,seed,max_abs_error\n"
    );
    let rows = sweep_with(&grid, source, |case: &Case, entry| {
        let Some(dir) = maps else { return Ok(()) };
        let variant = serde_json::to_value(case.variant).expect("variant serializes");
        let variant = variant.as_str().unwrap_or("");
        let name = format!(
            "{}_{variant}_t{}_a{:.4}_s{}_r{}_seed{}.pgm",
            case.model.name(),
            case.t,
            case.angle,
            case.scale,
            case.resolution,
            case.seed
        );
        let max = entry.error_map.data.iter().copied().fold(0.0, f64::max);
        let scaled = entry
            .error_map
            .map(|v| if max > 0.0 { v / max } else { 0.0 });
        write_image(dir.join(&name), &scaled)?;
        sidecar.push_str(&format!(
            "{name},{},{variant},{},{},{},{},{},{max:e}\n",
            case.model.name(),
            case.t,
            case.angle,
            case.scale,
            case.resolution,
            case.seed
        ));
        Ok(())
    })?;
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf)?;
    write_atomic(out, &buf)?;
    if let Some(dir) = maps {
        write_atomic(&dir.join("scales.csv"), sidecar.as_bytes())?;
    }
    for r in &rows {
        println!(
            "{} {} t={} angle={:.4} scale={} res={}: nmse {:.3e} ± {:.1e}",
            r.model, r.variant, r.t, r.angle_rad, r.scale, r.resolution, r.nmse_mean, r.nmse_std
        );
    }
    Ok(())
}

fn train(config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let model = cfg.model_config()?;
    let outcome = train_to_dir(&model, &cfg.data, &cfg.train, out)?;
    let first = outcome.losses.first().copied().unwrap_or(f64::NAN);
    let last = outcome.losses.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained {} steps: loss {first:.4} -> {last:.4}; checkpoint in {}",
        outcome.losses.len(),
        out.display()
    );
    Ok(())
}

fn sr(ckpt: &Path, input: &Path, scale: f64, out: &Path) -> Result<()> {
    let model = load_checkpoint(ckpt)?;
    let img = read_image(input)?;
    let c_in = model.config().encoder.c_in;
    if img.c != c_in {
        return Err(Error::Shape(format!(
            "{} has {} channels, model expects {c_in}",
            input.display(),
            img.c
        )));
    }
    let y = model.super_resolve(&img, scale)?;
    write_image(out, &y)?;
    println!("{}x{} -> {}x{}", img.w, img.h, y.w, y.h);
    Ok(())
}

fn gradcheck(module: Option<&str>) -> Result<bool> {
    let cases = gradient_suite(module, &GRAD_SEEDS)?;
    let mut ok = true;
    for c in &cases {
        let pass = c.passed();
        ok &= pass;
        println!(
            "{} {}/{} seed {}: max rel err {:.2e} ({} checked, {} at kinks)",
            if pass { "ok  " } else { "FAIL" },
            c.module,
            c.name,
            c.seed,
            c.report.max_rel_err,
            c.report.checked,
            c.report.skipped
        );
    }
    println!(
        "{} of {} cases within {GRAD_TOL:e}",
        cases.iter().filter(|c| c.passed()).count(),
        cases.len()
    );
    Ok(ok)
}

fn defaults(out: Option<&Path>) -> Result<()> {
    let json = RunConfig::default().to_json() + "\n";
    match out {
        Some(p) => write_atomic(p, json.as_bytes()),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::GenData { config, out } => gen_data(config.as_deref(), &out)?,
        Command::EvalEquiv {
            config,
            ckpt,
            out,
            error_maps,
        } => eval_equiv(
            config.as_deref(),
            ckpt.as_deref(),
            &out,
            error_maps.as_deref(),
        )?,
        Command::Train { config, out } => train(config.as_deref(), &out)?,
        Command::Sr {
            ckpt,
            input,
            scale,
            out,
        } => sr(&ckpt, &input, scale, &out)?,
        Command::Gradcheck { module } => {
            if !gradcheck(module.as_deref())? {
                return Ok(4);
            }
        }
        Command::Defaults { out } => defaults(out.as_deref())?,
    }
    Ok(0)
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let help = format!(
        "Configuration files are JSON; every key is optional. Defaults:\n\n{}\n\nGradient modules: {}.\n\
         Exit codes: 0 success, 1 usage or configuration, 2 I/O, 3 malformed data or checkpoint, 4 numeric failure.",
        RunConfig::default().to_json(),
        GRAD_MODULES.join(", ")
    );
    let mut cmd = Cli::command().after_long_help(help.clone());
    for name in ["gen-data", "eval-equiv", "train"] {
        cmd = cmd.mut_subcommand(name, |c| c.after_long_help(help.clone()));
    }
    let parsed = cmd
        .try_get_matches_from(args)
        .and_then(|m| Cli::from_arg_matches(&m));
    let cli = match parsed {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
