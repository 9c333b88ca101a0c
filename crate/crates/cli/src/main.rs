use std::f64::consts::FRAC_PI_2;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use xlmimo::boundary::boundary_map;
use xlmimo::detectors::Scheme;
use xlmimo::harness::{
    emit_csv, fmt_num, partition_report, preset_figure, run_experiment, wide_rows, ArrayShape,
    ExperimentKind, ExperimentOutput, ExperimentSpec, SweepVariable,
};
use xlmimo::partition::MisStrategy;
use xlmimo::scenario::Scenario;
use xlmimo::{Error, Result};

#[derive(Parser)]
#[command(name = "xlmimo", version, about = "Near-field XL-MIMO experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the scenario's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte-Carlo trials per point.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output file; stdout if absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    Upa,
    Ula,
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    MinDegree,
    MaxDegree,
}

impl From<Strategy> for MisStrategy {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::MinDegree => MisStrategy::MinDegreeGreedy,
            Strategy::MaxDegree => MisStrategy::MaxDegreeDeletion,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Single-user SNR against M (log-spaced).
    SnrCurve {
        #[arg(long, value_enum, default_value = "upa")]
        shape: Shape,
        /// User position x,y,z in metres.
        #[arg(long, value_delimiter = ',', default_values_t = [10.0, 10.0, 10.0], allow_negative_numbers = true)]
        user: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        m_min: usize,
        #[arg(long, default_value_t = 1_000_000)]
        m_max: usize,
        #[arg(long, default_value_t = 9)]
        points: usize,
        /// Largest M for which the exact element sum is evaluated.
        #[arg(long, default_value_t = 1_000_000)]
        sum_limit: usize,
    },
    /// Phase and power boundaries on the u_y = 0 plane.
    BoundaryMap {
        #[arg(long, default_value_t = 25)]
        side: usize,
        /// Elevation samples in [0, π/2).
        #[arg(long, default_value_t = 25)]
        psi_points: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [0.9, 0.95])]
        v_t: Vec<f64>,
    },
    /// VR occupancy ratio against ϖ.
    VrStats {
        #[arg(long, value_delimiter = ',')]
        m: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])]
        varpi: Vec<f64>,
    },
    /// Sum rate of one or more detectors.
    Sumrate {
        /// wa_mrc, wa_zf, wa_mmse, vr_zf, vr_mmse, up_pzf
        #[arg(long, value_delimiter = ',', default_value = "wa_zf")]
        scheme: Vec<String>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        varpi: Option<f64>,
        #[arg(long)]
        s_ovp: Option<f64>,
    },
    /// User grouping of one drop; summary on stderr.
    Partition {
        #[arg(long, value_enum, default_value = "min-degree")]
        strategy: Strategy,
    },
    /// Operation-count estimates against M.
    Complexity {
        #[arg(long, value_delimiter = ',', default_values_t = [1000, 2500, 5000, 10000, 20000, 50000, 100000])]
        m: Vec<usize>,
    },
    /// Data for one figure preset (fig5 .. fig12).
    Figure {
        #[arg(long)]
        name: String,
    },
}

fn scenario(g: &Global) -> Result<Scenario> {
    let mut sc = match &g.config {
        Some(p) => Scenario::from_file(p)?,
        None => Scenario::default_multi_user(),
    };
    if let Some(s) = g.seed {
        sc.seed = s;
    }
    Ok(sc)
}

fn prepare(g: &Global, mut spec: ExperimentSpec) -> ExperimentSpec {
    if let Some(t) = g.trials {
        spec.trials = t;
    }
    if let Some(s) = g.seed {
        spec.seed = s;
    }
    spec
}

fn report_failures(out: &ExperimentOutput) {
    if out.failures.is_empty() {
        return;
    }
    eprintln!("failed_trials={}", out.failures.len());
    for f in out.failures.iter().take(5) {
        eprintln!(
            "  sweep={} scheme={} metric={} trial={}: {}",
            f.sweep_value, f.scheme, f.metric, f.trial, f.message
        );
    }
}

fn log_spaced(lo: usize, hi: usize, n: usize) -> Result<Vec<f64>> {
    if lo == 0 || hi < lo || n == 0 {
        return Err(Error::Domain(format!("bad range {lo}..{hi} with {n} points")));
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut v: Vec<f64> = (0..n)
        .map(|i| {
            let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
            (a + (b - a) * t).exp().round()
        })
        .collect();
    v.dedup();
    Ok(v)
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::SnrCurve {
            shape,
            user,
            m_min,
            m_max,
            points,
            sum_limit,
        } => {
            if user.len() != 3 {
                return Err(Error::Domain(format!("--user needs x,y,z, got {} values", user.len())));
            }
            let (shape, grid) = match shape {
                Shape::Upa => {
                    let sides = log_spaced(
                        (m_min as f64).sqrt().round().max(1.0) as usize,
                        (m_max as f64).sqrt().round() as usize,
                        points,
                    )?;
                    (ArrayShape::Upa, sides.iter().map(|s| s * s).collect())
                }
                Shape::Ula => (ArrayShape::Ula, log_spaced(m_min, m_max, points)?),
            };
            let kind = ExperimentKind::SnrCurve {
                shape,
                user: [user[0], user[1], user[2]],
                sum_limit,
            };
            let spec = prepare(g, ExperimentSpec::new("snr-curve", scenario(g)?, kind, SweepVariable::M, grid));
            let res = run_experiment(&spec)?;
            report_failures(&res);
            writeln!(out, "M,snr_closed,snr_sum,snr_no_pol,snr_far,snr_asymptote")?;
            for r in wide_rows(&res.records) {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.sweep_value,
                    opt(r.mean("snr_closed")),
                    opt(r.mean("snr_sum")),
                    opt(r.mean("snr_no_pol")),
                    opt(r.mean("snr_far")),
                    opt(r.mean("snr_asymptote"))
                )?;
            }
        }
        Command::BoundaryMap { side, psi_points, v_t } => {
            let cfg = scenario(g)?.array.with_counts(side, side)?;
            let psi: Vec<f64> = (0..psi_points)
                .map(|j| j as f64 * FRAC_PI_2 / psi_points as f64)
                .collect();
            let points = boundary_map(&cfg, &psi, &v_t)?;
            writeln!(out, "psi_e,psi_a,u_x,u_z,phase_boundary_m,power_boundary_m,v_t")?;
            for p in points {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    fmt_num(p.psi_e),
                    fmt_num(p.psi_a),
                    fmt_num(p.u_x),
                    fmt_num(p.u_z),
                    fmt_num(p.phase_boundary_m),
                    opt(p.power_boundary_m),
                    p.v_t
                )?;
            }
        }
        Command::VrStats { m, varpi } => {
            let sc = scenario(g)?;
            let ms: Vec<f64> = if m.is_empty() {
                vec![sc.array.m() as f64]
            } else {
                m.iter().map(|&x| x as f64).collect()
            };
            let spec = ExperimentSpec::new("vr-stats", sc, ExperimentKind::Occupancy, SweepVariable::Varpi, varpi)
                .with_series(SweepVariable::M, ms);
            let res = run_experiment(&prepare(g, spec))?;
            report_failures(&res);
            writeln!(out, "varpi,M,mean_r_oc,std_r_oc,mean_members")?;
            for r in wide_rows(&res.records) {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    r.sweep_value,
                    r.series_value.unwrap_or_default(),
                    opt(r.mean("r_oc")),
                    opt(r.std("r_oc")),
                    opt(r.mean("mean_members"))
                )?;
            }
        }
        Command::Sumrate {
            scheme,
            m,
            k,
            varpi,
            s_ovp,
        } => {
            let mut sc = scenario(g)?;
            if let Some(m) = m {
                sc = sc.with_total_antennas(m)?;
            }
            sc.k = k.unwrap_or(sc.k);
            sc.varpi = varpi.unwrap_or(sc.varpi);
            sc.s_ovp = s_ovp.unwrap_or(sc.s_ovp);
            sc.validate()?;
            let schemes = scheme.iter().map(|s| Scheme::parse(s)).collect::<Result<Vec<_>>>()?;
            let header = (sc.array.m(), sc.k, sc.varpi, sc.s_ovp);
            let spec = ExperimentSpec::new(
                "sumrate",
                sc,
                ExperimentKind::SumRate,
                SweepVariable::M,
                vec![header.0 as f64],
            )
            .with_schemes(&schemes);
            let res = run_experiment(&prepare(g, spec))?;
            report_failures(&res);
            writeln!(out, "scheme,M,K,varpi,s_ovp,sum_rate_mean,sum_rate_std,failed,fallback_users")?;
            for r in wide_rows(&res.records) {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    r.scheme,
                    header.0,
                    header.1,
                    header.2,
                    header.3,
                    opt(r.mean("sum_rate")),
                    opt(r.std("sum_rate")),
                    r.failed,
                    opt(r.mean("fallback_users"))
                )?;
            }
        }
        Command::Partition { strategy } => {
            let sc = scenario(g)?;
            let rep = partition_report(&sc, sc.seed, strategy.into())?;
            rep.write_csv(&mut *out)?;
            eprintln!("{}", rep.summary());
        }
        Command::Complexity { m } => {
            let spec = ExperimentSpec::new(
                "complexity",
                scenario(g)?,
                ExperimentKind::Complexity,
                SweepVariable::M,
                m.iter().map(|&x| x as f64).collect(),
            )
            .with_schemes(&[Scheme::Zf, Scheme::VrZf, Scheme::Pzf]);
            let res = run_experiment(&prepare(g, spec))?;
            report_failures(&res);
            writeln!(out, "M,wa_zf,vr_zf,up_pzf,mean_vr_size,groups")?;
            let rows = wide_rows(&res.records);
            let at = |x: f64, s: &str, metric: &str| {
                rows.iter()
                    .find(|r| r.sweep_value == x && r.scheme == s)
                    .and_then(|r| r.mean(metric))
            };
            for &x in &m {
                let x = x as f64;
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    x,
                    opt(at(x, "wa_zf", "operations")),
                    opt(at(x, "vr_zf", "operations")),
                    opt(at(x, "up_pzf", "operations")),
                    opt(at(x, "-", "mean_vr_size")),
                    opt(at(x, "-", "groups"))
                )?;
            }
        }
        Command::Figure { name } => {
            let mut spec = preset_figure(&name)?;
            if let Some(p) = &g.config {
                spec.scenario = Scenario::from_file(p)?;
            }
            let spec = prepare(g, spec);
            let res = run_experiment(&spec)?;
            report_failures(&res);
            emit_csv(&res.records, &mut *out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| -> Result<()> {
        match &cli.global.out {
            Some(p) => {
                let mut w = BufWriter::new(File::create(p)?);
                run(cli, &mut w)?;
                w.flush()?;
            }
            None => {
                let stdout = io::stdout();
                let mut w = stdout.lock();
                run(cli, &mut w)?;
            }
        }
        Ok(())
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        // Reader went away (e.g. `| head`); nothing left to report.
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error kind={} message={msg:?}", e.kind());
            ExitCode::from(2)
        }
    }
}
