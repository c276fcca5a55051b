//! `ehrenfest` command-line front end.
//!
//! Every subcommand writes one CSV artifact (two for `scan`). Output is
//! written to a temporary file next to the target and renamed into place, and
//! numbers use the shortest representation that parses back exactly.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::chaos::{ehrenfest_scan, ehrenfest_time, lyapunov_spectrum, EhrenfestProbe, LyapunovSettings};
use crate::ensemble::{expectation, load_samples, uniform_grid, QuadratureScheme, WavepacketSpec};
use crate::error::Error;
use crate::integrate::{integrate, IntegratorConfig, Method};
use crate::lorenz::{LorenzParams, PhasePoint};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_INSUFFICIENT_DATA: i32 = 4;
pub const EXIT_IO: i32 = 5;

pub const THREADS_ENV: &str = "EHRENFEST_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Run(err) => match err.root() {
                Error::InvalidParameter { .. } | Error::OutOfSpan { .. } | Error::Parse(_) => EXIT_USAGE,
                Error::NonFinite { .. } | Error::StepUnderflow { .. } | Error::MaxStepsExceeded { .. } => {
                    EXIT_NUMERICAL
                }
                Error::InsufficientData { .. } => EXIT_INSUFFICIENT_DATA,
                Error::Io(_) => EXIT_IO,
                Error::Node { .. } => unreachable!("root() strips node wrappers"),
            },
        }
    }
}

fn flag_for(name: &str) -> String {
    format!("--{}", name.replace('_', "-"))
}

fn usage(err: Error) -> CliError {
    match err {
        Error::InvalidParameter { name, reason } => CliError::Usage(format!("invalid value for {}: {reason}", flag_for(name))),
        other => CliError::Usage(other.to_string()),
    }
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got `{s}`"));
    }
    let mut out = [0.0; 3];
    for (slot, part) in out.iter_mut().zip(parts) {
        *slot = part.parse().map_err(|_| format!("`{part}` is not a number"))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
struct WidthList(Vec<f64>);

fn parse_list(s: &str) -> Result<WidthList, String> {
    s.split(',')
        .map(|part| part.trim().parse().map_err(|_| format!("`{part}` is not a number")))
        .collect::<Result<_, _>>()
        .map(WidthList)
}

fn parse_quadrature(s: &str) -> Result<QuadratureSpec, String> {
    let (kind, count) = s
        .split_once(':')
        .ok_or_else(|| format!("expected `gh:<order>` or `mc:<samples>`, got `{s}`"))?;
    let count: usize = count.parse().map_err(|_| format!("`{count}` is not a positive integer"))?;
    match kind {
        "gh" => Ok(QuadratureSpec::GaussHermite(count)),
        "mc" => Ok(QuadratureSpec::MonteCarlo(count)),
        _ => Err(format!("unknown quadrature `{kind}`, expected `gh` or `mc`")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum QuadratureSpec {
    GaussHermite(usize),
    MonteCarlo(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Adaptive,
    Rk4,
}

#[derive(Debug, Parser)]
#[command(name = "ehrenfest", about = "Lorenz-flow momentum observables and Ehrenfest-time experiments")]
struct Cli {
    #[command(subcommand)]
    command: SubArgs,
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
    sigma: f64,
    #[arg(long, default_value_t = 28.0, allow_hyphen_values = true)]
    tau: f64,
    #[arg(long, default_value_t = 8.0 / 3.0, allow_hyphen_values = true)]
    beta: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Adaptive)]
    method: MethodArg,
    /// Step length of the fixed RK4 method.
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    #[arg(long, default_value_t = 1e-9)]
    rel_tol: f64,
    #[arg(long, default_value_t = 1e-12)]
    abs_tol: f64,
    #[arg(long, default_value_t = IntegratorConfig::default().max_steps)]
    max_steps: usize,
    /// Defaults to 1e-12 times the integration horizon.
    #[arg(long)]
    min_step: Option<f64>,
    /// `gh:<odd order>` or `mc:<samples>`.
    #[arg(long, default_value = "gh:9", value_parser = parse_quadrature)]
    quadrature: QuadratureSpec,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum SubArgs {
    /// Classical flow f(t, p0) sampled on a uniform grid.
    Trajectory {
        #[arg(long, value_parser = parse_triple, allow_hyphen_values = true)]
        p0: [f64; 3],
        #[arg(long)]
        t_end: f64,
        #[arg(long, default_value_t = 0.01)]
        dt_out: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Packet averages, variances and standard errors of the momenta.
    Expect {
        #[arg(long, value_parser = parse_triple, allow_hyphen_values = true)]
        center: Option<[f64; 3]>,
        #[arg(long, value_parser = parse_triple, conflicts_with_all = ["dirac", "samples"])]
        widths: Option<[f64; 3]>,
        /// Use a momentum eigenstate at --center.
        #[arg(long, conflicts_with = "samples")]
        dirac: bool,
        /// CSV file with header `p1,p2,p3`.
        #[arg(long, conflicts_with = "center")]
        samples: Option<PathBuf>,
        #[arg(long)]
        t_end: f64,
        #[arg(long, default_value_t = 0.01)]
        dt_out: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Lyapunov spectrum and entropy estimate.
    Lyapunov {
        #[arg(long, value_parser = parse_triple, allow_hyphen_values = true, default_value = "1,1,1")]
        p0: [f64; 3],
        #[command(flatten)]
        lyapunov: LyapunovArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Ehrenfest time of one isotropic Gaussian packet.
    Ehrenfest {
        #[arg(long, value_parser = parse_triple, allow_hyphen_values = true)]
        center: [f64; 3],
        #[arg(long)]
        width: f64,
        #[command(flatten)]
        probe: ProbeArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Ehrenfest times over decreasing widths with the fitted growth rate.
    Scan {
        #[arg(long, value_parser = parse_triple, allow_hyphen_values = true)]
        center: [f64; 3],
        #[arg(long, value_parser = parse_list, default_value = "1e-2,1e-3,1e-4,1e-5,1e-6")]
        widths: WidthList,
        /// Fit summary; defaults to `<out stem>_fit.csv`.
        #[arg(long)]
        fit_out: Option<PathBuf>,
        #[command(flatten)]
        probe: ProbeArgs,
        #[command(flatten)]
        lyapunov: LyapunovArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug, Args)]
struct ProbeArgs {
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, default_value_t = 100.0)]
    horizon: f64,
    #[arg(long, default_value_t = 0.01)]
    probe_step: f64,
}

#[derive(Debug, Args)]
struct LyapunovArgs {
    #[arg(long, default_value_t = 100.0)]
    transient: f64,
    #[arg(long, default_value_t = 2000.0)]
    total_time: f64,
    #[arg(long, default_value_t = 1.0)]
    renorm_interval: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PacketSource {
    Gaussian { center: PhasePoint, widths: [f64; 3] },
    Dirac { center: PhasePoint },
    SamplesFile(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Trajectory {
        p0: PhasePoint,
        t_end: f64,
        dt_out: f64,
    },
    Expect {
        packet: PacketSource,
        t_end: f64,
        dt_out: f64,
    },
    Lyapunov {
        p0: PhasePoint,
        settings: LyapunovSettings,
    },
    Ehrenfest {
        center: PhasePoint,
        width: f64,
        probe: EhrenfestProbe,
    },
    Scan {
        center: PhasePoint,
        widths: Vec<f64>,
        probe: EhrenfestProbe,
        lyapunov: LyapunovSettings,
        fit_out: PathBuf,
    },
}

/// A fully resolved invocation: every default has been applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub params: LorenzParams,
    pub integrator: IntegratorConfig,
    pub scheme: QuadratureScheme,
    pub seed: u64,
    pub out: PathBuf,
}

fn default_fit_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}_fit.csv"))
}

fn positive(name: &'static str, value: f64) -> Result<f64, CliError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(CliError::Usage(format!("invalid value for {}: must be positive, got {value}", flag_for(name))))
    }
}

fn resolve_common(common: CommonArgs, horizon: f64) -> Result<(LorenzParams, IntegratorConfig, QuadratureScheme, u64, PathBuf), CliError> {
    let params = LorenzParams::new(common.sigma, common.tau, common.beta).map_err(usage)?;
    let integrator = IntegratorConfig {
        method: match common.method {
            MethodArg::Adaptive => Method::AdaptiveDopri5,
            MethodArg::Rk4 => Method::FixedRk4,
        },
        step: common.step,
        rel_tol: common.rel_tol,
        abs_tol: common.abs_tol,
        max_steps: common.max_steps,
        min_step: Some(common.min_step.unwrap_or(1e-12 * horizon)),
    };
    integrator.validate().map_err(usage)?;
    let scheme = match common.quadrature {
        QuadratureSpec::GaussHermite(order) => QuadratureScheme::GaussHermite { order },
        QuadratureSpec::MonteCarlo(samples) => QuadratureScheme::MonteCarlo {
            samples,
            seed: common.seed,
        },
    };
    scheme
        .validate()
        .map_err(|e| CliError::Usage(format!("invalid value for --quadrature: {e}")))?;
    Ok((params, integrator, scheme, common.seed, common.out))
}

fn resolve_lyapunov(args: LyapunovArgs) -> Result<LyapunovSettings, CliError> {
    let settings = LyapunovSettings {
        transient: positive("transient", args.transient)?,
        total_time: positive("total_time", args.total_time)?,
        renorm_interval: positive("renorm_interval", args.renorm_interval)?,
    };
    if settings.total_time <= settings.transient {
        return Err(CliError::Usage("invalid value for --total-time: must exceed --transient".into()));
    }
    Ok(settings)
}

fn resolve_probe(args: ProbeArgs) -> Result<EhrenfestProbe, CliError> {
    Ok(EhrenfestProbe {
        threshold: positive("delta", args.delta)?,
        horizon: positive("horizon", args.horizon)?,
        probe_step: positive("probe_step", args.probe_step)?,
        ..EhrenfestProbe::default()
    })
}

/// Parses a full argument vector (program name first).
pub fn parse_args<I, T>(argv: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.render().to_string()))?;
    let (command, common, horizon) = match cli.command {
        SubArgs::Trajectory { p0, t_end, dt_out, common } => {
            let t_end = positive("t_end", t_end)?;
            let dt_out = positive("dt_out", dt_out)?;
            (Command::Trajectory { p0: PhasePoint(p0), t_end, dt_out }, common, t_end)
        }
        SubArgs::Expect {
            center,
            widths,
            dirac,
            samples,
            t_end,
            dt_out,
            common,
        } => {
            let t_end = positive("t_end", t_end)?;
            let dt_out = positive("dt_out", dt_out)?;
            let packet = match (center, widths, dirac, samples) {
                (_, _, _, Some(path)) => PacketSource::SamplesFile(path),
                (Some(c), None, true, None) => PacketSource::Dirac { center: PhasePoint(c) },
                (Some(c), Some(w), false, None) => {
                    for v in w {
                        positive("widths", v)?;
                    }
                    PacketSource::Gaussian { center: PhasePoint(c), widths: w }
                }
                (None, _, _, None) => return Err(CliError::Usage("missing required flag --center (or --samples)".into())),
                (Some(_), None, false, None) => {
                    return Err(CliError::Usage("missing required flag --widths (or --dirac)".into()))
                }
                (Some(_), Some(_), true, None) => unreachable!("clap rejects --widths with --dirac"),
            };
            (Command::Expect { packet, t_end, dt_out }, common, t_end)
        }
        SubArgs::Lyapunov { p0, lyapunov, common } => {
            let settings = resolve_lyapunov(lyapunov)?;
            let horizon = settings.total_time;
            (Command::Lyapunov { p0: PhasePoint(p0), settings }, common, horizon)
        }
        SubArgs::Ehrenfest {
            center,
            width,
            probe,
            common,
        } => {
            let width = positive("width", width)?;
            let probe = resolve_probe(probe)?;
            let horizon = probe.horizon;
            (Command::Ehrenfest { center: PhasePoint(center), width, probe }, common, horizon)
        }
        SubArgs::Scan {
            center,
            widths,
            fit_out,
            probe,
            lyapunov,
            common,
        } => {
            let widths = widths.0;
            for &w in &widths {
                positive("widths", w)?;
            }
            if widths.windows(2).any(|w| w[1] >= w[0]) {
                return Err(CliError::Usage("invalid value for --widths: must be strictly decreasing".into()));
            }
            let probe = resolve_probe(probe)?;
            let lyapunov = resolve_lyapunov(lyapunov)?;
            let fit_out = fit_out.unwrap_or_else(|| default_fit_path(&common.out));
            let horizon = probe.horizon.max(lyapunov.total_time);
            (
                Command::Scan {
                    center: PhasePoint(center),
                    widths,
                    probe,
                    lyapunov,
                    fit_out,
                },
                common,
                horizon,
            )
        }
    };
    for (name, p) in match &command {
        Command::Trajectory { p0, .. } | Command::Lyapunov { p0, .. } => vec![("p0", *p0)],
        Command::Ehrenfest { center, .. } | Command::Scan { center, .. } => vec![("center", *center)],
        Command::Expect { packet: PacketSource::Gaussian { center, .. } | PacketSource::Dirac { center }, .. } => {
            vec![("center", *center)]
        }
        Command::Expect { .. } => vec![],
    } {
        if !p.is_finite() {
            return Err(CliError::Usage(format!("invalid value for {}: components must be finite", flag_for(name))));
        }
    }
    let (params, integrator, scheme, seed, out) = resolve_common(common, horizon)?;
    Ok(RunConfig {
        command,
        params,
        integrator,
        scheme,
        seed,
        out,
    })
}

/// Shortest decimal form that parses back to the identical `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_triple(p: &[f64; 3]) -> String {
    p.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Equivalent argument vector (without program name); every flag explicit.
    pub fn to_args(&self) -> Vec<String> {
        let mut args: Vec<String> = Vec::new();
        let mut flag = |name: &str, value: String| args.push(format!("--{name}={value}"));
        let sub;
        let mut specific: Vec<(&str, String)> = Vec::new();
        let mut switches: Vec<&str> = Vec::new();
        match &self.command {
            Command::Trajectory { p0, t_end, dt_out } => {
                sub = "trajectory";
                specific.push(("p0", fmt_triple(&p0.0)));
                specific.push(("t-end", fmt_f64(*t_end)));
                specific.push(("dt-out", fmt_f64(*dt_out)));
            }
            Command::Expect { packet, t_end, dt_out } => {
                sub = "expect";
                match packet {
                    PacketSource::Gaussian { center, widths } => {
                        specific.push(("center", fmt_triple(&center.0)));
                        specific.push(("widths", fmt_triple(widths)));
                    }
                    PacketSource::Dirac { center } => {
                        specific.push(("center", fmt_triple(&center.0)));
                        switches.push("--dirac");
                    }
                    PacketSource::SamplesFile(path) => specific.push(("samples", path.display().to_string())),
                }
                specific.push(("t-end", fmt_f64(*t_end)));
                specific.push(("dt-out", fmt_f64(*dt_out)));
            }
            Command::Lyapunov { p0, settings } => {
                sub = "lyapunov";
                specific.push(("p0", fmt_triple(&p0.0)));
                push_lyapunov(&mut specific, settings);
            }
            Command::Ehrenfest { center, width, probe } => {
                sub = "ehrenfest";
                specific.push(("center", fmt_triple(&center.0)));
                specific.push(("width", fmt_f64(*width)));
                push_probe(&mut specific, probe);
            }
            Command::Scan {
                center,
                widths,
                probe,
                lyapunov,
                fit_out,
            } => {
                sub = "scan";
                specific.push(("center", fmt_triple(&center.0)));
                specific.push(("widths", widths.iter().map(|w| fmt_f64(*w)).collect::<Vec<_>>().join(",")));
                specific.push(("fit-out", fit_out.display().to_string()));
                push_probe(&mut specific, probe);
                push_lyapunov(&mut specific, lyapunov);
            }
        }
        let method = match self.integrator.method {
            Method::AdaptiveDopri5 => "adaptive",
            Method::FixedRk4 => "rk4",
        };
        let quadrature = match self.scheme {
            QuadratureScheme::GaussHermite { order } => format!("gh:{order}"),
            QuadratureScheme::MonteCarlo { samples, .. } => format!("mc:{samples}"),
        };
        for (name, value) in specific {
            flag(name, value);
        }
        flag("sigma", fmt_f64(self.params.sigma()));
        flag("tau", fmt_f64(self.params.tau()));
        flag("beta", fmt_f64(self.params.beta()));
        flag("method", method.into());
        flag("step", fmt_f64(self.integrator.step));
        flag("rel-tol", fmt_f64(self.integrator.rel_tol));
        flag("abs-tol", fmt_f64(self.integrator.abs_tol));
        flag("max-steps", self.integrator.max_steps.to_string());
        if let Some(min_step) = self.integrator.min_step {
            flag("min-step", fmt_f64(min_step));
        }
        flag("quadrature", quadrature);
        flag("seed", self.seed.to_string());
        flag("out", self.out.display().to_string());
        let mut out = vec![sub.to_string()];
        out.extend(switches.into_iter().map(String::from));
        out.extend(args);
        out
    }
}

fn push_probe(specific: &mut Vec<(&str, String)>, probe: &EhrenfestProbe) {
    specific.push(("delta", fmt_f64(probe.threshold)));
    specific.push(("horizon", fmt_f64(probe.horizon)));
    specific.push(("probe-step", fmt_f64(probe.probe_step)));
}

fn push_lyapunov(specific: &mut Vec<(&str, String)>, settings: &LyapunovSettings) {
    specific.push(("transient", fmt_f64(settings.transient)));
    specific.push(("total-time", fmt_f64(settings.total_time)));
    specific.push(("renorm-interval", fmt_f64(settings.renorm_interval)));
}

/// Writes CSV rows to `path` via a temporary file renamed into place.
fn write_csv_atomic(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), Error> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut tmp);
        writer.write_record(header)?;
        for row in rows {
            writer.write_record(row)?;
        }
        writer.flush()?;
    }
    tmp.as_file_mut().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Executes a resolved configuration and returns a one-line summary.
pub fn run(config: &RunConfig) -> Result<String, CliError> {
    let params = &config.params;
    let cfg = &config.integrator;
    match &config.command {
        Command::Trajectory { p0, t_end, dt_out } => {
            let traj = integrate(*p0, params, *t_end, cfg)?;
            let grid = uniform_grid(*t_end, *dt_out)?;
            let rows = grid
                .iter()
                .map(|&t| {
                    let p = traj.eval(t)?;
                    Ok(vec![fmt_f64(t), fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(p[2])])
                })
                .collect::<Result<Vec<_>, Error>>()?;
            write_csv_atomic(&config.out, &["t", "p1", "p2", "p3"], &rows)?;
            Ok(format!("trajectory: {} rows, {} integrator steps -> {}", rows.len(), traj.len() - 1, config.out.display()))
        }
        Command::Expect { packet, t_end, dt_out } => {
            let spec = match packet {
                PacketSource::Gaussian { center, widths } => WavepacketSpec::gaussian(*center, *widths)?,
                PacketSource::Dirac { center } => WavepacketSpec::dirac(*center)?,
                PacketSource::SamplesFile(path) => load_samples(path)?,
            };
            let grid = uniform_grid(*t_end, *dt_out)?;
            let stats = expectation(&spec, &config.scheme, params, &grid, cfg)?;
            let rows: Vec<Vec<String>> = stats
                .iter()
                .map(|s| {
                    let mut row = vec![fmt_f64(s.time)];
                    row.extend(s.mean.0.iter().map(|v| fmt_f64(*v)));
                    row.extend(s.variance.iter().map(|v| fmt_f64(*v)));
                    row.extend(s.standard_error.iter().map(|v| fmt_f64(*v)));
                    row
                })
                .collect();
            write_csv_atomic(
                &config.out,
                &["t", "mean1", "mean2", "mean3", "var1", "var2", "var3", "se1", "se2", "se3"],
                &rows,
            )?;
            Ok(format!("expect: {} rows -> {}", rows.len(), config.out.display()))
        }
        Command::Lyapunov { p0, settings } => {
            let res = lyapunov_spectrum(*p0, params, settings, cfg)?;
            let row = vec![
                fmt_f64(res.exponents[0]),
                fmt_f64(res.exponents[1]),
                fmt_f64(res.exponents[2]),
                fmt_f64(res.ks_entropy_estimate),
                fmt_f64(res.transient_discarded),
                fmt_f64(res.total_time),
                fmt_f64(res.renorm_interval),
            ];
            write_csv_atomic(
                &config.out,
                &["lambda1", "lambda2", "lambda3", "ks_entropy", "transient", "total_time", "renorm_interval"],
                &[row],
            )?;
            Ok(format!("lyapunov: lambda_max = {:.6}, sum = {:.6}", res.exponents[0], res.sum()))
        }
        Command::Ehrenfest { center, width, probe } => {
            let res = ehrenfest_time(*center, *width, probe, params, &config.scheme, cfg)?;
            write_csv_atomic(&config.out, &["width", "ln_inv_width", "t_ehrenfest", "bounded"], &[crossing_row(res.width, res.crossing_time)])?;
            Ok(match res.crossing_time {
                Some(t) => format!("ehrenfest: width {} crosses delta {} at t = {t:.6}", res.width, res.threshold),
                None => format!("ehrenfest: width {} stays within delta {} up to t = {}", res.width, res.threshold, probe.horizon),
            })
        }
        Command::Scan {
            center,
            widths,
            probe,
            lyapunov,
            fit_out,
        } => {
            let scan = ehrenfest_scan(*center, widths, probe, params, &config.scheme, cfg, lyapunov)?;
            let rows: Vec<Vec<String>> = scan.rows.iter().map(|r| crossing_row(r.width, r.crossing_time)).collect();
            write_csv_atomic(&config.out, &["width", "ln_inv_width", "t_ehrenfest", "bounded"], &rows)?;
            write_csv_atomic(
                fit_out,
                &["fitted_slope", "lambda_max", "slope_times_lambda"],
                &[vec![
                    fmt_f64(scan.fitted_slope),
                    fmt_f64(scan.lambda_reference),
                    fmt_f64(scan.slope_times_lambda()),
                ]],
            )?;
            Ok(format!(
                "scan: slope {:.4} vs 1/lambda_max {:.4} (ratio {:.4})",
                scan.fitted_slope,
                1.0 / scan.lambda_reference,
                scan.slope_times_lambda()
            ))
        }
    }
}

fn crossing_row(width: f64, crossing: Option<f64>) -> Vec<String> {
    vec![
        fmt_f64(width),
        fmt_f64((1.0 / width).ln()),
        crossing.map(fmt_f64).unwrap_or_default(),
        crossing.is_some().to_string(),
    ]
}

fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(e) => Err(CliError::Usage(format!("{THREADS_ENV}: {e}"))),
    }
}

/// Entry point used by the binary; returns the process exit status.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    if argv.iter().skip(1).any(|a| a == "--help" || a == "-h" || a == "help" || a == "--version") {
        // let clap print help to stdout
        if let Err(e) = Cli::try_parse_from(&argv) {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    }
    let result = parse_args(&argv).and_then(|config| {
        let execute = || run(&config);
        match thread_cap()? {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("{THREADS_ENV}: {e}")))?
                .install(execute),
            None => execute(),
        }
    });
    match result {
        Ok(summary) => {
            let _ = writeln!(std::io::stderr(), "{summary}");
            EXIT_OK
        }
        Err(err) => {
            let _ = writeln!(std::io::stderr(), "error: {err}");
            err.exit_code()
        }
    }
}
