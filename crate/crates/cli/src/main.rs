use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use irt_core::autocorr::{compute_a3_with, debias, estimate_noise_and_mean};
use irt_core::forward::s3_direct_with;
use irt_core::invariant::{dft_s3, idft_s3};
use irt_core::io::{self, BasisManifest, CoefficientMeta, CsvRow, InvariantMeta, MicrographMeta};
use irt_core::metrics;
use irt_core::recover::recover;
use irt_core::simulate::{sigma_for_snr, simulate};
use irt_core::{
    phantom, BinningScheme, CoefficientVector, Error, ExperimentConfig, InvariantTensor,
    PrecomputedWeights, Result, Scale, Space, SteerableBasis,
};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Parser)]
#[command(
    name = "irt",
    version,
    about = "Rotation-invariant recovery of images from third-order statistics"
)]
struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration key, e.g. `--set seed=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective configuration.
    Config,
    /// Build the steerable basis and write its manifest.
    Basis {
        #[arg(long)]
        out: PathBuf,
    },
    /// Coefficients of a built-in test image, or random ones with `--random`.
    Coeffs {
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Phantom::Blobs)]
        image: Phantom,
        #[arg(long, conflicts_with = "image")]
        random: bool,
    },
    /// Render a noisy micrograph containing rotated copies.
    Simulate {
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        coeffs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Set the noise level from a signal-to-noise ratio instead of `sigma`.
        #[arg(long)]
        snr: Option<f64>,
    },
    /// Third-order autocorrelation of a micrograph, debiased into an invariant.
    Autocorr {
        #[arg(long)]
        micrograph: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep the raw autocorrelation without debiasing.
        #[arg(long)]
        raw: bool,
    },
    /// Invariant computed directly from coefficients.
    Invariants {
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        coeffs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write the frequency-domain tensor.
        #[arg(long)]
        frequency: bool,
        /// Relative Gaussian noise added in the offset domain.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Recover coefficients from an invariant.
    Recover {
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        invariant: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Report path; defaults to `<out>.report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compare an estimate with the reference up to rotation.
    Evaluate(EvaluateArgs),
    /// Write a 16-bit PGM of coefficients or of a micrograph.
    Render {
        #[arg(long, required_unless_present = "micrograph")]
        basis: Option<PathBuf>,
        #[arg(long, conflicts_with = "micrograph")]
        coeffs: Option<PathBuf>,
        #[arg(long)]
        micrograph: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Phantom {
    Blobs,
    Stripes,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    basis: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    estimate: PathBuf,
    /// Reference and estimated invariants for `error_s3`.
    #[arg(long, requires = "s3_estimate")]
    s3_reference: Option<PathBuf>,
    #[arg(long, requires = "s3_reference")]
    s3_estimate: Option<PathBuf>,
    /// Append a result row to this CSV file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>> {
    raw.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.to_string()))
                .ok_or_else(|| Error::Config(format!("expected KEY=VALUE, got {s:?}")))
        })
        .collect()
}

fn load_basis(path: &Path) -> Result<(BasisManifest, SteerableBasis)> {
    let manifest: BasisManifest = io::read_json(path)?;
    let basis = manifest.build()?;
    Ok((manifest, basis))
}

fn load_coeffs(path: &Path, basis: &SteerableBasis) -> Result<CoefficientVector> {
    let z = io::coefficients_of_tensor(io::TensorFile::load(path)?)?;
    if z.len() != basis.len() {
        return Err(Error::BasisMismatch(format!(
            "{} holds {} coefficients, basis has {}",
            path.display(),
            z.len(),
            basis.len()
        )));
    }
    Ok(z)
}

fn save_coeffs(path: &Path, z: &CoefficientVector, basis_path: &Path) -> Result<()> {
    io::tensor_of_coefficients(z).save(path)?;
    io::write_json(
        &io::sidecar_path(path),
        &CoefficientMeta {
            basis: basis_path.display().to_string(),
            len: z.len(),
        },
    )
}

fn load_invariant(path: &Path) -> Result<(InvariantTensor, InvariantMeta)> {
    let meta: InvariantMeta = io::read_json(&io::sidecar_path(path))?;
    let tensor = io::invariant_of_tensor(io::TensorFile::load(path)?, &meta)?;
    Ok((tensor, meta))
}

fn save_invariant(path: &Path, tensor: &InvariantTensor, meta: &InvariantMeta) -> Result<()> {
    io::tensor_of_invariant(tensor).save(path)?;
    io::write_json(&io::sidecar_path(path), meta)
}

fn to_real_offsets(t: InvariantTensor) -> Result<InvariantTensor> {
    match t.space {
        Space::RealOffsets => Ok(t),
        Space::Frequency => idft_s3(&t),
    }
}

/// The PGM plus an exact copy of the values in `<out>.irt`.
fn save_rendering(out: &Path, side: usize, values: Vec<f64>) -> Result<()> {
    io::save_pgm(out, side, side, &values)?;
    io::TensorFile::new(vec![side, side], io::Payload::F64(values))?
        .save(&io::tensor_copy_path(out))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let overrides = parse_overrides(&cli.overrides)?;
    let config = ExperimentConfig::load(cli.config.as_deref(), &overrides)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    match cli.command {
        Command::Config => print!("{}", config.render()),
        Command::Basis { out } => {
            let selection = config.selection();
            let basis = SteerableBasis::build(config.n, selection)?;
            let manifest = BasisManifest::of(&basis, selection);
            io::write_json(&out, &manifest)?;
            eprintln!(
                "basis: n={} K={} nu_max={} lambda_max={:.6}",
                basis.n(),
                basis.len(),
                basis.nu_max,
                basis.lambda_max
            );
        }
        Command::Coeffs {
            basis: bpath,
            out,
            image,
            random,
        } => {
            let (_, basis) = load_basis(&bpath)?;
            let z = if random {
                let mut rng = irt_core::rng::stream(config.seed, "coefficients", 0);
                let x: Vec<f64> = (0..basis.real_dim())
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                basis.from_real_params(&x)
            } else {
                let raster = match image {
                    Phantom::Blobs => phantom::image(basis.n()),
                    Phantom::Stripes => phantom::striped(basis.n()),
                };
                basis.expand(&raster)?
            };
            save_coeffs(&out, &z, &bpath)?;
        }
        Command::Simulate {
            basis: bpath,
            coeffs,
            out,
            snr,
        } => {
            let (_, basis) = load_basis(&bpath)?;
            let z = load_coeffs(&coeffs, &basis)?;
            let sigma = match snr {
                Some(snr) => sigma_for_snr(&z, &basis, snr)?,
                None => config.sigma,
            };
            let mg = simulate(&z, &basis, config.m, config.copies(), sigma, config.seed)?;
            io::tensor_of_micrograph(&mg).save(&out)?;
            let meta = MicrographMeta {
                m: mg.m,
                n: basis.n(),
                sigma,
                seed: config.seed,
                placements: mg.placements.clone().unwrap_or_default(),
                gamma: mg.gamma.unwrap_or(0.0),
            };
            io::write_json(&io::sidecar_path(&out), &meta)?;
            eprintln!(
                "micrograph: m={} p={} sigma={sigma:.6e}",
                mg.m,
                meta.placements.len()
            );
        }
        Command::Autocorr {
            micrograph,
            out,
            raw,
        } => {
            let mut mg = io::micrograph_of_tensor(io::TensorFile::load(&micrograph)?)?;
            let side = io::sidecar_path(&micrograph);
            let n = if side.exists() {
                let meta: MicrographMeta = io::read_json(&side)?;
                mg.gamma = Some(meta.gamma);
                meta.n
            } else {
                config.n
            };
            let a3 = compute_a3_with(&mg, n, config.a3_method)?;
            let provenance = io::micrograph_hash(&mg);
            if raw {
                let meta = InvariantMeta {
                    n,
                    space: Space::RealOffsets,
                    scale: Scale::A3Raw,
                    provenance,
                    sigma2_hat: None,
                    mean_hat: None,
                    gamma: None,
                };
                save_invariant(&out, &a3, &meta)?;
            } else {
                let gamma = mg.gamma.unwrap_or(config.gamma);
                let (sigma2, mean) = estimate_noise_and_mean(&mg)?;
                let s3 = debias(&a3, sigma2, mean, gamma)?;
                let meta = InvariantMeta {
                    n,
                    space: Space::RealOffsets,
                    scale: Scale::S3Normalized,
                    provenance,
                    sigma2_hat: Some(sigma2),
                    mean_hat: Some(mean),
                    gamma: Some(gamma),
                };
                save_invariant(&out, &s3, &meta)?;
            }
        }
        Command::Invariants {
            basis: bpath,
            coeffs,
            out,
            frequency,
            noise,
        } => {
            let (_, basis) = load_basis(&bpath)?;
            let z = load_coeffs(&coeffs, &basis)?;
            let mut s3 = s3_direct_with(&z, &basis, config.quadrature_for(basis.nu_max))?;
            if noise > 0.0 {
                s3 = s3.with_noise(noise, config.seed)?;
            }
            if frequency {
                s3 = dft_s3(&s3)?;
            }
            let meta = InvariantMeta {
                n: basis.n(),
                space: s3.space,
                scale: Scale::S3Normalized,
                provenance: "forward-model".into(),
                sigma2_hat: None,
                mean_hat: None,
                gamma: None,
            };
            save_invariant(&out, &s3, &meta)?;
        }
        Command::Recover {
            basis: bpath,
            invariant,
            out,
            report,
        } => {
            let (_, basis) = load_basis(&bpath)?;
            let (tensor, _) = load_invariant(&invariant)?;
            let target = match tensor.space {
                Space::Frequency => tensor,
                Space::RealOffsets => dft_s3(&tensor)?,
            };
            let scheme = BinningScheme::build(basis.n(), config.binning())?;
            let weights =
                PrecomputedWeights::with_quadrature(&basis, config.quadrature_for(basis.nu_max));
            let (z, rep) = recover(&target, &basis, &scheme, &weights, &config.recovery())?;
            save_coeffs(&out, &z, &bpath)?;
            let report = report.unwrap_or_else(|| {
                let mut s = out.as_os_str().to_owned();
                s.push(".report.json");
                PathBuf::from(s)
            });
            io::write_json(&report, &rep)?;
            let best = &rep.per_restart[rep.chosen];
            eprintln!(
                "recover: restart {} cost {:.6e} after {} iterations ({:?})",
                rep.chosen, best.final_cost, best.iterations, best.termination
            );
        }
        Command::Evaluate(args) => {
            let (_, basis) = load_basis(&args.basis)?;
            let z_ref = load_coeffs(&args.reference, &basis)?;
            let z_est = load_coeffs(&args.estimate, &basis)?;
            let tensors = match (&args.s3_reference, &args.s3_estimate) {
                (Some(a), Some(b)) => {
                    let a = to_real_offsets(load_invariant(a)?.0)?;
                    let b = to_real_offsets(load_invariant(b)?.0)?;
                    Some((a, b))
                }
                _ => None,
            };
            let report = metrics::evaluate(
                &z_ref,
                &z_est,
                &basis,
                tensors.as_ref().map(|(a, b)| (a, b)),
            )?;
            print_json(&report)?;
            if let Some(csv) = args.csv {
                io::append_csv(
                    &csv,
                    &CsvRow {
                        label: config.label.clone(),
                        error_s3: report.error_s3,
                        error_recon: Some(report.error_recon),
                        best_phi: Some(report.best_phi),
                        seed: config.seed,
                    },
                )?;
            }
        }
        Command::Render {
            basis,
            coeffs,
            micrograph,
            out,
        } => match (micrograph, basis, coeffs) {
            (Some(mpath), _, _) => {
                let mg = io::micrograph_of_tensor(io::TensorFile::load(&mpath)?)?;
                save_rendering(&out, mg.m, mg.pixels)?;
            }
            (None, Some(bpath), Some(cpath)) => {
                let (_, basis) = load_basis(&bpath)?;
                let image = basis.synthesize(&load_coeffs(&cpath, &basis)?)?;
                save_rendering(&out, 2 * basis.n() + 1, image.to_raster())?;
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "render needs --micrograph or both --basis and --coeffs".into(),
                ))
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let line = text
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("error: usage: {line}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
