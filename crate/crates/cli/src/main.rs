//! `twoway` — command-line front end for the two-way source-channel coding
//! toolkit. Inputs are JSON files; outputs are JSON (default) or CSV.
//!
//! Exit codes: 0 success, 2 validation/parse error, 3 solver non-convergence.

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use twoway::config::{
    build_special_config, check_stationarity_conditions, theorem1_margins, ConfigError,
    SpecialConfig,
};
use twoway::rd::{conditional_rd, standard_rd, wz_rd, DistortionMatrix, RdQuery, RdResult};
use twoway::regions::{
    CorollaryKind, DistortionPair, RateSpec, RegionSolver, TheoremKind, Verdict,
};
use twoway::sim::{run_trials, scheme_example4_dueck, scheme_uncoded_map};
use twoway::twc::{proposition1_frontier, shannon_inner_frontier, RegionFrontier, SearchOptions, TwcChannel};
use twoway::{Joint, Pmf, Real};

#[derive(Parser)]
#[command(name = "twoway", version, about = "Two-way lossy source-channel coding toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Solver tolerance override.
    #[arg(long, global = true)]
    tol: Option<Real>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Standard rate-distortion function of a single source.
    Rd {
        #[arg(long)]
        source: PathBuf,
        #[arg(long = "D")]
        d: Real,
    },
    /// Wyner-Ziv RD: axis 0 is encoded, axis 1 is decoder side information.
    WzRd {
        #[arg(long)]
        source: PathBuf,
        #[arg(long = "D")]
        d: Real,
        /// Auxiliary alphabet size; defaults to |S| + 1.
        #[arg(long)]
        aux: Option<usize>,
    },
    /// Conditional RD: side information at both ends.
    CondRd {
        #[arg(long)]
        source: PathBuf,
        #[arg(long = "D")]
        d: Real,
    },
    /// Shannon inner-bound rate frontier over independent input laws.
    Capacity {
        #[arg(long)]
        channel: PathBuf,
    },
    /// Convexified inner frontier (time-sharing hull) and its symmetric rate.
    Prop1 {
        #[arg(long)]
        channel: PathBuf,
    },
    /// Stationarity and achievability margins of a canned configuration.
    ConfigCheck {
        /// Special-configuration spec (JSON).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        channel: PathBuf,
        #[arg(long)]
        source: PathBuf,
    },
    /// Feasibility of a distortion pair under one converse or achievability check.
    Region {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        channel: PathBuf,
        #[arg(long, value_enum)]
        check: CheckName,
        #[arg(long)]
        d1: Real,
        #[arg(long)]
        d2: Real,
        #[arg(long, default_value_t = 1)]
        k: u32,
        #[arg(long, default_value_t = 1)]
        n: u32,
        /// Common-part map for terminal 1 (comma-separated), thm4 only.
        #[arg(long)]
        s0_map1: Option<String>,
        #[arg(long)]
        s0_map2: Option<String>,
        /// Han joint law file, cor3 only.
        #[arg(long)]
        han_joint: Option<PathBuf>,
    },
    /// Smallest feasible d2 per d1 column (CSV: d1,d2,feasible_rate_r1,feasible_rate_r2).
    Frontier {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        channel: PathBuf,
        #[arg(long, value_enum)]
        check: CheckName,
        /// Grid as start:stop:steps.
        #[arg(long)]
        d1_grid: String,
        #[arg(long, default_value_t = 1)]
        k: u32,
        #[arg(long, default_value_t = 1)]
        n: u32,
    },
    /// Monte Carlo transmission per a JSON run spec.
    Simulate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        channel: Option<PathBuf>,
    },
    /// Reproduces the bundled paper examples and writes a summary table.
    Examples {
        /// Restrict to one example, e.g. example4.
        #[arg(long)]
        only: Option<String>,
    },
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum CheckName {
    #[value(name = "lemma1")]
    Lemma1,
    #[value(name = "lemma2")]
    Lemma2,
    #[value(name = "thm1_indep")]
    Thm1Indep,
    #[value(name = "thm2_lossless")]
    Thm2Lossless,
    #[value(name = "thm3_eqwz")]
    Thm3Eqwz,
    #[value(name = "thm4_common")]
    Thm4Common,
    #[value(name = "cor3_sscc_han")]
    Cor3SsccHan,
    #[value(name = "cor4_sscc_shannon")]
    Cor4SsccShannon,
}

enum CliError {
    Validation(String),
    NonConvergence(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::NonConvergence(_) => 3,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::NonConvergence(m) => m,
        }
    }
}

fn validation<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Validation(e.to_string())
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::NonConvergence { .. } => CliError::NonConvergence(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<twoway::regions::RegionError> for CliError {
    fn from(e: twoway::regions::RegionError) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        // Ignore the error if a pool is already installed.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("{what} {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Validation(format!("{what} {} (line {}): {e}", path.display(), e.line()))
    })
}

/// Channel files are either a builder spec (`{"name": ...}`) or a raw kernel.
#[derive(Deserialize)]
#[serde(untagged)]
enum ChannelSpec {
    Builder {
        name: String,
        #[serde(default)]
        eps1: Option<Real>,
        #[serde(default)]
        eps2: Option<Real>,
        #[serde(default)]
        noise: Option<Joint>,
    },
    Raw(TwcChannel),
}

fn load_channel(path: &Path) -> Result<TwcChannel, CliError> {
    let spec: ChannelSpec = read_json(path, "channel")?;
    match spec {
        ChannelSpec::Raw(ch) => Ok(ch),
        ChannelSpec::Builder { name, eps1, eps2, noise } => match name.as_str() {
            "additive" => TwcChannel::additive(eps1.unwrap_or(0.0), eps2.unwrap_or(0.0)).map_err(validation),
            "multiplying" => Ok(TwcChannel::multiplying()),
            "mixed" => TwcChannel::mixed(eps1.unwrap_or(0.0)).map_err(validation),
            "dueck" => {
                let noise = noise.ok_or_else(|| CliError::Validation("dueck builder needs a noise joint".into()))?;
                TwcChannel::dueck(&noise).map_err(validation)
            }
            "dueck_correlated" => Ok(TwcChannel::dueck_correlated()),
            "dueck_independent" => Ok(TwcChannel::dueck_independent()),
            other => Err(CliError::Validation(format!("unknown channel builder {other:?}"))),
        },
    }
}

fn emit(cli: &Cli, value: serde_json::Value, csv: Option<(Vec<&str>, Vec<Vec<String>>)>) -> Result<(), CliError> {
    let text = match (cli.format, csv) {
        (Format::Csv, Some((header, rows))) => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&header).map_err(validation)?;
            for row in rows {
                w.write_record(&row).map_err(validation)?;
            }
            String::from_utf8(w.into_inner().map_err(validation)?).map_err(validation)?
        }
        (Format::Csv, None) => {
            // Flatten a JSON object into key,value rows.
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["key", "value"]).map_err(validation)?;
            if let serde_json::Value::Object(map) = &value {
                for (k, v) in map {
                    w.write_record([k.as_str(), &v.to_string()]).map_err(validation)?;
                }
            }
            String::from_utf8(w.into_inner().map_err(validation)?).map_err(validation)?
        }
        _ => format!("{}\n", serde_json::to_string_pretty(&value).map_err(validation)?),
    };
    match &cli.output {
        Some(p) => fs::write(p, text).map_err(validation),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn rd_query(cli: &Cli, d: Real) -> RdQuery {
    let mut q = RdQuery::at(d).with_seed(cli.seed);
    if let Some(t) = cli.tol {
        q = q.with_tolerance(t);
    }
    q
}

fn rd_json(r: &RdResult, tol: Real) -> serde_json::Value {
    json!({
        "rate": r.rate,
        "distortion": r.distortion,
        "converged": r.converged,
        "iterations": r.iterations,
        "tolerance": tol,
    })
}

fn check_converged(r: &RdResult) -> Result<(), CliError> {
    if r.converged {
        Ok(())
    } else {
        Err(CliError::NonConvergence(format!(
            "alternating minimization stalled after {} iterations",
            r.iterations
        )))
    }
}

fn frontier_rows(f: &RegionFrontier) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let rows = f
        .points
        .iter()
        .map(|p| {
            vec![
                format!("{}", p.weight),
                format!("{}", p.rates.r1),
                format!("{}", p.rates.r2),
            ]
        })
        .collect();
    (vec!["weight", "r1", "r2"], rows)
}

fn parse_map(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(validation))
        .collect()
}

fn parse_grid(s: &str) -> Result<Vec<Real>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Validation("grid must be start:stop:steps".into()));
    }
    let start: Real = parts[0].parse().map_err(validation)?;
    let stop: Real = parts[1].parse().map_err(validation)?;
    let steps: usize = parts[2].parse().map_err(validation)?;
    if steps < 2 || stop < start {
        return Err(CliError::Validation("grid needs stop ≥ start and ≥ 2 steps".into()));
    }
    Ok((0..steps)
        .map(|i| start + (stop - start) * i as Real / (steps - 1) as Real)
        .collect())
}

fn hamming_pair(src: &Joint) -> (DistortionMatrix, DistortionMatrix) {
    let d = src.dims();
    (DistortionMatrix::hamming(d[0]), DistortionMatrix::hamming(d[1]))
}

fn region_solver(cli: &Cli, source: Joint, ch: TwcChannel, k: u32, n: u32) -> Result<RegionSolver, CliError> {
    let (d1, d2) = hamming_pair(&source);
    let opts = SearchOptions {
        seed: cli.seed,
        ..SearchOptions::default()
    };
    let rate = RateSpec::new(k, n)?;
    Ok(RegionSolver::new(source, d1, d2, ch, rate, &opts)?)
}

fn verdict_json(v: &twoway::regions::FeasibilityVerdict) -> serde_json::Value {
    serde_json::to_value(v).expect("verdict serializes")
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.cmd {
        Cmd::Rd { source, d } => {
            let p: Pmf = read_json(source, "source")?;
            let dm = DistortionMatrix::hamming(p.len());
            let q = rd_query(cli, *d);
            let r = standard_rd(&p, &dm, &q).map_err(validation)?;
            check_converged(&r)?;
            emit(cli, rd_json(&r, q.tolerance), None)
        }
        Cmd::WzRd { source, d, aux } => {
            let j: Joint = read_json(source, "source")?;
            if j.n_axes() != 2 {
                return Err(CliError::Validation("WZ source must be a bivariate joint".into()));
            }
            let dm = DistortionMatrix::hamming(j.dims()[0]);
            let aux = aux.unwrap_or(j.dims()[0] + 1);
            let q = rd_query(cli, *d);
            let r = wz_rd(&j, &dm, aux, &q).map_err(validation)?;
            check_converged(&r)?;
            emit(cli, rd_json(&r, q.tolerance), None)
        }
        Cmd::CondRd { source, d } => {
            let j: Joint = read_json(source, "source")?;
            let dm = DistortionMatrix::hamming(j.dims()[0]);
            let q = rd_query(cli, *d);
            let r = conditional_rd(&j, &dm, &q).map_err(validation)?;
            check_converged(&r)?;
            emit(cli, rd_json(&r, q.tolerance), None)
        }
        Cmd::Capacity { channel } => {
            let ch = load_channel(channel)?;
            let opts = SearchOptions {
                seed: cli.seed,
                ..SearchOptions::default()
            };
            let f = shannon_inner_frontier(&ch, &opts);
            let (h, rows) = frontier_rows(&f);
            let v = json!({
                "points": f.points,
                "symmetric_rate": f.symmetric_rate(),
                "grid_step": opts.grid_step,
            });
            emit(cli, v, Some((h, rows)))
        }
        Cmd::Prop1 { channel } => {
            let ch = load_channel(channel)?;
            let opts = SearchOptions {
                seed: cli.seed,
                ..SearchOptions::default()
            };
            let f = proposition1_frontier(&ch, &opts);
            let (h, rows) = frontier_rows(&f);
            let v = json!({
                "points": f.points,
                "symmetric_rate": f.symmetric_rate(),
                "convexified": true,
            });
            emit(cli, v, Some((h, rows)))
        }
        Cmd::ConfigCheck { input, channel, source } => {
            let kind: SpecialConfig = read_json(input, "configuration")?;
            let ch = load_channel(channel)?;
            let src: Joint = read_json(source, "source")?;
            let cfg = build_special_config(&kind, &ch, &src)?;
            let d1 = DistortionMatrix::hamming(cfg.n_shat1);
            let d2 = DistortionMatrix::hamming(cfg.n_shat2);
            let rep = theorem1_margins(&cfg, &ch, &src, &d1, &d2)?;
            let (marginals_ok, kernels_ok) = check_stationarity_conditions(&rep.pz)?;
            let v = json!({
                "residual": rep.residual,
                "stationary_marginals_ok": marginals_ok,
                "coding_kernels_ok": kernels_ok,
                "margins": rep.margins,
                "strict_margin1": rep.cond1_ok,
                "strict_margin2": rep.cond2_ok,
                "distortions": { "d1": rep.distortions.0, "d2": rep.distortions.1 },
            });
            emit(cli, v, None)
        }
        Cmd::Region {
            source,
            channel,
            check,
            d1,
            d2,
            k,
            n,
            s0_map1,
            s0_map2,
            han_joint,
        } => {
            let src: Joint = read_json(source, "source")?;
            let ch = load_channel(channel)?;
            let solver = region_solver(cli, src, ch, *k, *n)?;
            let target = DistortionPair::new(*d1, *d2)?;
            let verdict = run_check(
                &solver,
                *check,
                target,
                s0_map1.as_deref(),
                s0_map2.as_deref(),
                han_joint.as_deref(),
            )?;
            emit(cli, verdict_json(&verdict), None)
        }
        Cmd::Frontier {
            source,
            channel,
            check,
            d1_grid,
            k,
            n,
        } => {
            let src: Joint = read_json(source, "source")?;
            let ch = load_channel(channel)?;
            if matches!(check, CheckName::Thm4Common | CheckName::Cor3SsccHan) {
                return Err(CliError::Validation(
                    "frontier sweeps support the checks without extra ingredients".into(),
                ));
            }
            let solver = region_solver(cli, src, ch, *k, *n)?;
            let grid = parse_grid(d1_grid)?;
            let check = *check;
            let cols = solver.distortion_frontier(
                |s, t| {
                    run_check(s, check, t, None, None, None)
                        .map_err(|e| twoway::regions::RegionError::BadInput(e.message().to_string()))
                },
                &grid,
                1e-5,
            )?;
            let mut rows = Vec::new();
            let mut points = Vec::new();
            for (d1, d2) in cols {
                let Some(d2) = d2 else { continue };
                let v = run_check(&solver, check, DistortionPair::new(d1, d2)?, None, None, None)?;
                let (r1, r2) = v
                    .witness_rates
                    .map(|r| (r.r1, r.r2))
                    .unwrap_or((Real::NAN, Real::NAN));
                points.push(json!({ "d1": d1, "d2": d2, "feasible_rate_r1": r1, "feasible_rate_r2": r2 }));
                rows.push(vec![
                    format!("{d1}"),
                    format!("{d2}"),
                    format!("{r1}"),
                    format!("{r2}"),
                ]);
            }
            emit(
                cli,
                json!({ "points": points, "d2_tolerance": 1e-5 }),
                Some((vec!["d1", "d2", "feasible_rate_r1", "feasible_rate_r2"], rows)),
            )
        }
        Cmd::Simulate { input, source, channel } => {
            let spec: SimSpec = read_json(input, "run spec")?;
            simulate(cli, &spec, source.as_deref(), channel.as_deref())
        }
        Cmd::Examples { only } => examples(cli, only.as_deref()),
    }
}

fn run_check(
    solver: &RegionSolver,
    check: CheckName,
    target: DistortionPair,
    s0_map1: Option<&str>,
    s0_map2: Option<&str>,
    han_joint: Option<&Path>,
) -> Result<twoway::regions::FeasibilityVerdict, CliError> {
    Ok(match check {
        CheckName::Lemma1 => solver.lemma1_check(target)?,
        CheckName::Lemma2 => solver.lemma2_check(target)?,
        CheckName::Thm1Indep => solver.theorem_region(&TheoremKind::Thm1Indep, target)?,
        CheckName::Thm2Lossless => solver.theorem_region(&TheoremKind::Thm2Lossless, target)?,
        CheckName::Thm3Eqwz => solver.theorem_region(&TheoremKind::Thm3EqWz, target)?,
        CheckName::Thm4Common => {
            let m1 = parse_map(s0_map1.ok_or_else(|| CliError::Validation("thm4 needs --s0-map1".into()))?)?;
            let m2 = parse_map(s0_map2.ok_or_else(|| CliError::Validation("thm4 needs --s0-map2".into()))?)?;
            solver.theorem_region(&TheoremKind::Thm4Common { s0_map1: m1, s0_map2: m2 }, target)?
        }
        CheckName::Cor3SsccHan => {
            let path = han_joint.ok_or_else(|| CliError::Validation("cor3 needs --han-joint".into()))?;
            let j: Joint = read_json(path, "Han joint")?;
            solver.corollary_feasible(&CorollaryKind::Cor3SsccHan { han_joint: j }, target)?
        }
        CheckName::Cor4SsccShannon => solver.corollary_feasible(&CorollaryKind::Cor4SsccShannon, target)?,
    })
}

#[derive(Deserialize)]
struct SimSpec {
    scheme: String,
    #[serde(rename = "K")]
    k: usize,
    trials: usize,
    #[serde(default)]
    seed: u64,
}

fn simulate(cli: &Cli, spec: &SimSpec, source: Option<&Path>, channel: Option<&Path>) -> Result<(), CliError> {
    let (scheme, src, ch) = match spec.scheme.as_str() {
        "example4_dueck" => {
            let src = match source {
                Some(p) => read_json(p, "source")?,
                None => uniform_bit_pair(),
            };
            let ch = match channel {
                Some(p) => load_channel(p)?,
                None => TwcChannel::dueck_correlated(),
            };
            (scheme_example4_dueck(spec.k), src, ch)
        }
        "uncoded_map" => {
            let src: Joint = match source {
                Some(p) => read_json(p, "source")?,
                None => return Err(CliError::Validation("uncoded_map needs --source".into())),
            };
            let ch = match channel {
                Some(p) => load_channel(p)?,
                None => return Err(CliError::Validation("uncoded_map needs --channel".into())),
            };
            let scheme = scheme_uncoded_map(&src, &ch, spec.k).map_err(validation)?;
            (scheme, src, ch)
        }
        other => return Err(CliError::Validation(format!("unknown scheme {other:?}"))),
    };
    let (d1, d2) = hamming_pair(&src);
    let stats = run_trials(&scheme, &src, &ch, &d1, &d2, spec.k, spec.trials, spec.seed)
        .map_err(validation)?;
    emit(cli, serde_json::to_value(stats).map_err(validation)?, None)
}

fn uniform_bit_pair() -> Joint {
    let p = Pmf::bernoulli(0.5).expect("valid");
    Joint::from_product(&[&p, &p]).expect("valid")
}

/// One row of the examples summary.
struct SummaryRow {
    example: &'static str,
    quantity: &'static str,
    value: String,
    reference: &'static str,
    ok: bool,
}

fn examples(cli: &Cli, only: Option<&str>) -> Result<(), CliError> {
    let mut rows: Vec<SummaryRow> = Vec::new();
    let wanted = |name: &str| only.map_or(true, |o| o == name);

    if wanted("example2") {
        let src = triangle(0);
        let h = src.entropy() - src.marginal_pmf(1).map_err(validation)?.entropy();
        rows.push(SummaryRow {
            example: "example2",
            quantity: "H(S1|S2)",
            value: format!("{h:.6}"),
            reference: "0.666667",
            ok: (h - 2.0 / 3.0).abs() < 1e-9,
        });
        let dm = DistortionMatrix::hamming(2);
        let wz = wz_rd(&src, &dm, 3, &RdQuery::at(0.0).with_seed(cli.seed)).map_err(validation)?;
        rows.push(SummaryRow {
            example: "example2",
            quantity: "R_WZ(0)",
            value: format!("{:.6}", wz.rate),
            reference: "0.667",
            ok: (wz.rate - 2.0 / 3.0).abs() < 2e-3,
        });
        let solver = region_solver(cli, triangle(0), TwcChannel::multiplying(), 1, 1)?;
        let v = solver.corollary_feasible(&CorollaryKind::Cor4SsccShannon, DistortionPair::new(0.0, 0.0)?)?;
        rows.push(SummaryRow {
            example: "example2",
            quantity: "cor4 at (0,0)",
            value: format!("{:?}", v.verdict),
            reference: "Infeasible",
            ok: v.verdict == Verdict::Infeasible,
        });
    }

    if wanted("example3") {
        let src = triangle(2);
        let ch = TwcChannel::mixed(0.05).map_err(validation)?;
        let scheme = scheme_uncoded_map(&src, &ch, 16).map_err(validation)?;
        let (d1, d2) = hamming_pair(&src);
        let stats = run_trials(&scheme, &src, &ch, &d1, &d2, 16, 50_000, cli.seed).map_err(validation)?;
        rows.push(SummaryRow {
            example: "example3",
            quantity: "uncoded MAP (d1, d2)",
            value: format!("({:.4}, {:.4})", stats.mean_d1, stats.mean_d2),
            reference: "(0, 0.033)",
            ok: stats.mean_d1 == 0.0
                && (stats.mean_d2 - 1.0 / 30.0).abs() < 3.0 * stats.stderr_d2,
        });
    }

    if wanted("example4") {
        let ch = TwcChannel::dueck_correlated();
        let opts = SearchOptions {
            seed: cli.seed,
            ..SearchOptions::default()
        };
        let f = proposition1_frontier(&ch, &opts);
        let sym = f.symmetric_rate();
        rows.push(SummaryRow {
            example: "example4",
            quantity: "symmetric rate",
            value: format!("{sym:.4}"),
            reference: "0.9503",
            ok: (sym - 0.9503).abs() < 1e-3,
        });
        let scheme = scheme_example4_dueck(32);
        let src = uniform_bit_pair();
        let (d1, d2) = hamming_pair(&src);
        let stats = run_trials(&scheme, &src, &ch, &d1, &d2, 32, 10_000, cli.seed).map_err(validation)?;
        rows.push(SummaryRow {
            example: "example4",
            quantity: "sim block errors",
            value: format!("{}", stats.block_error_rate),
            reference: "0",
            ok: stats.block_error_rate == 0.0,
        });
    }

    if wanted("example5") {
        // Z-correlated pair (q1, a1) = (0.5, 0.1): conditional RD closed form
        // c [H_b(at) - H_b(D/c)] with c = 1 - q1 + q1 a1, at = q1 a1 / c.
        let src: Joint = Joint::new(
            vec![
                twoway::prob::Alphabet::labeled(2, "S1"),
                twoway::prob::Alphabet::labeled(2, "S2"),
            ],
            vec![0.5, 0.0, 0.05, 0.45],
        )
        .map_err(validation)?;
        let dm = DistortionMatrix::hamming(2);
        let d = 0.02;
        let r = conditional_rd(&src, &dm, &RdQuery::at(d)).map_err(validation)?;
        let c = 0.55;
        let at = 0.05 / c;
        let closed = c * (hb(at) - hb(d / c));
        rows.push(SummaryRow {
            example: "example5",
            quantity: "R_{S1|S2}(0.02)",
            value: format!("{:.6}", r.rate),
            reference: "closed form",
            ok: (r.rate - closed).abs() < 2e-3,
        });
    }

    if wanted("example7") {
        // Quaternary sources sharing a common bit: R_{Sj|S0}(D) = 1 - H_b(D).
        let p = Pmf::bernoulli(0.5).map_err(validation)?;
        let joint = Joint::from_product(&[&p, &p]).map_err(validation)?;
        let dm = DistortionMatrix::hamming(2);
        let d = 0.1;
        let r = conditional_rd(&joint, &dm, &RdQuery::at(d)).map_err(validation)?;
        let closed = 1.0 - hb(d);
        rows.push(SummaryRow {
            example: "example7",
            quantity: "R_{S|S0}(0.1)",
            value: format!("{:.6}", r.rate),
            reference: "1 - H_b(0.1)",
            ok: (r.rate - closed).abs() < 2e-3,
        });
    }

    if rows.is_empty() {
        return Err(CliError::Validation(format!(
            "unknown example filter {:?}",
            only.unwrap_or("")
        )));
    }
    let header = vec!["example", "quantity", "value", "reference", "ok"];
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.example.to_string(),
                r.quantity.to_string(),
                r.value.clone(),
                r.reference.to_string(),
                r.ok.to_string(),
            ]
        })
        .collect();
    let v = serde_json::Value::Array(
        rows.iter()
            .map(|r| {
                json!({
                    "example": r.example,
                    "quantity": r.quantity,
                    "value": r.value,
                    "reference": r.reference,
                    "ok": r.ok,
                })
            })
            .collect(),
    );
    let all_ok = rows.iter().all(|r| r.ok);
    emit(cli, v, Some((header, table)))?;
    if all_ok {
        Ok(())
    } else {
        Err(CliError::Validation("one or more example checks failed".into()))
    }
}

/// Joint with zero mass on one cell and 1/3 elsewhere.
fn triangle(zero_cell: usize) -> Joint {
    let probs: Vec<Real> = (0..4)
        .map(|i| if i == zero_cell { 0.0 } else { 1.0 / 3.0 })
        .collect();
    Joint::new(
        vec![
            twoway::prob::Alphabet::labeled(2, "S1"),
            twoway::prob::Alphabet::labeled(2, "S2"),
        ],
        probs,
    )
    .expect("valid")
}

fn hb(p: Real) -> Real {
    twoway::prob::binary_entropy(p)
}
