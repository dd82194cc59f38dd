use std::path::{Path, PathBuf};

use transitory::bandwidth::{critical_time, BandwidthQuery};
use transitory::path::{rate_workload, PathOptimizerConfig};
use transitory::queue::{fluid_workload, workload_path, QueueRealization, SamplePath};
use transitory::rare::{
    default_workload_tilts, exact_os_tail, is_os_tail, is_workload_tail, ldp_slope, mc_os_tail,
    mc_workload_tail, os_tilts, ExactOsSource, McEstimate, ProbabilitySource, QueueTemplate, SampledOsSource,
    Tilts,
};
use transitory::rate::{os_rate, rate_increments, rate_offered, rate_os, rate_os_general, Partition};
use transitory::{ArrivalKind, ArrivalModel, OrderStatMethod, RngSpec, ServiceModel};

use crate::config::{parse_arrival, parse_counts, parse_service, parse_values, ExperimentConfig};
use crate::output::{cell, Table};
use crate::{
    plot, BandwidthArgs, Cli, CliError, Command, Event, IncrementArgs, McArgs, McCommand, McMethod, Method, ModelArgs,
    OracleCommand, OsTailArgs, OutputArg, PlotArgs, RateArgs, RateCommand, SimulateArgs, SlopeArgs, Source, OUT_ENV,
};

const DEFAULT_SEED: u64 = 2024;
const DEFAULT_REPS: usize = 10_000;
const DEFAULT_N: usize = 100;

/// Config merged with global flags.
struct Ctx {
    cfg: ExperimentConfig,
    out_dir: PathBuf,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self, CliError> {
        let cfg = match &cli.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let out_dir = cli
            .out_dir
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok(Self { cfg, out_dir })
    }

    fn output(&self, arg: &OutputArg, default_name: &str) -> PathBuf {
        arg.output.clone().unwrap_or_else(|| self.out_dir.join(default_name))
    }

    fn service(&self, m: &ModelArgs) -> Result<ServiceModel, CliError> {
        match &m.service {
            Some(s) => parse_service(s).map_err(|e| bad("--service", e)),
            None => Ok(self.cfg.service_model()?.unwrap_or(ServiceModel::exponential(1.0)?)),
        }
    }

    fn arrival(&self, m: &ModelArgs) -> Result<ArrivalModel, CliError> {
        match &m.arrival {
            Some(s) => parse_arrival(s).map_err(|e| bad("--arrival", e)),
            None => Ok(self.cfg.arrival_model()?.unwrap_or_else(ArrivalModel::uniform)),
        }
    }

    fn uniform_only(&self, m: &ModelArgs, what: &str) -> Result<(), CliError> {
        if matches!(self.arrival(m)?.kind(), ArrivalKind::Uniform) {
            Ok(())
        } else {
            Err(CliError::Validation(format!("{what} supports uniform arrivals only")))
        }
    }

    fn times(&self, flag: &Option<String>) -> Result<Vec<f64>, CliError> {
        match flag {
            Some(s) => parse_values(s).map_err(|e| bad("--t", e)),
            None => self
                .cfg
                .t
                .clone()
                .map(|t| t.into_vec())
                .ok_or_else(|| CliError::Validation("no times given (use --t or config `t`)".into())),
        }
    }

    fn thresholds(&self, flag: &Option<String>, name: &str) -> Result<Vec<f64>, CliError> {
        match flag {
            Some(s) => parse_values(s).map_err(|e| bad(name, e)),
            None => self
                .cfg
                .thresholds
                .clone()
                .map(|t| t.into_vec())
                .ok_or_else(|| CliError::Validation(format!("no thresholds given (use {name} or config `thresholds`)"))),
        }
    }

    fn n_list(&self, flag: &Option<String>) -> Result<Vec<usize>, CliError> {
        match flag {
            Some(s) => parse_counts(s).map_err(|e| bad("--n", e)),
            None => Ok(self.cfg.n_list.clone().unwrap_or_else(|| vec![DEFAULT_N])),
        }
    }

    fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.cfg.seed).unwrap_or(DEFAULT_SEED)
    }

    fn reps(&self, flag: Option<usize>) -> usize {
        flag.or(self.cfg.reps).unwrap_or(DEFAULT_REPS)
    }

    fn path_cfg(&self, m: Option<usize>) -> Result<PathOptimizerConfig, CliError> {
        let cfg = match m.or(self.cfg.grid_m) {
            Some(m) => PathOptimizerConfig::with_m(m),
            None => PathOptimizerConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn bad(flag: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{flag}: {msg}"))
}

fn write(table: &Table, path: &Path) -> Result<(), CliError> {
    table.write(path)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

/// Writes the table, then reports flagged rows as non-convergence.
fn write_flagged(table: &Table, path: &Path, flagged: usize) -> Result<(), CliError> {
    write(table, path)?;
    if flagged > 0 {
        return Err(CliError::NonConvergence(format!(
            "{flagged} row(s) are upper bounds only (see {})",
            path.display()
        )));
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = Ctx::new(&cli)?;
    match cli.command {
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Rate(RateCommand::Os(a)) => rate_os_cmd(&ctx, a),
        Command::Rate(RateCommand::Offered(a)) => rate_offered_cmd(&ctx, a),
        Command::Rate(RateCommand::Workload(a)) => rate_workload_cmd(&ctx, a),
        Command::Rate(RateCommand::Increments(a)) => rate_increments_cmd(&ctx, a),
        Command::Oracle(OracleCommand::OsTail(a)) => oracle_os_tail(&ctx, a),
        Command::Mc(McCommand::Tail(a)) => mc_tail(&ctx, a),
        Command::LdpSlope(a) => slope(&ctx, a),
        Command::Bandwidth(a) => bandwidth(&ctx, a),
        Command::Plot(a) => plot_cmd(&ctx, a),
    }
}

fn simulate(ctx: &Ctx, a: SimulateArgs) -> Result<(), CliError> {
    let n = match a.n {
        Some(n) => n,
        None => ctx.n_list(&None)?[0],
    };
    if n == 0 {
        return Err(bad("--n", "must be positive"));
    }
    if a.paths == 0 || a.points < 2 {
        return Err(CliError::Validation("need --paths >= 1 and --points >= 2".into()));
    }
    let arrival = ctx.arrival(&a.model)?;
    let service = ctx.service(&a.model)?;
    let method = match a.method {
        Method::Sort => OrderStatMethod::Sort,
        Method::ExpoRatio => OrderStatMethod::ExpoRatio,
    };
    let grid = SamplePath::uniform_grid(1.0, a.points - 1);
    let fluid = fluid_workload(&arrival, 1.0 / service.mean(), &grid)?;
    let base = RngSpec::new(ctx.seed(a.seed), 0);
    let mut columns = Vec::with_capacity(a.paths);
    for i in 0..a.paths {
        let mut rng = base.substream(i as u64).rng();
        let q = QueueRealization::sample(n, &arrival, &service, method, &mut rng)?;
        let path = workload_path(&q);
        columns.push(grid.iter().map(|&s| path.eval(s)).collect::<Vec<_>>());
    }
    let mut header = vec!["t".to_string(), "fluid".to_string()];
    header.extend((1..=a.paths).map(|i| format!("w{i}")));
    let mut table = Table::with_header(header);
    for (j, &t) in grid.iter().enumerate() {
        let mut row = vec![t, fluid.values()[j]];
        row.extend(columns.iter().map(|c| c[j]));
        table.push(&row)?;
    }
    write(&table, &ctx.output(&a.out, "simulate.csv"))
}

fn rate_os_cmd(ctx: &Ctx, a: RateArgs) -> Result<(), CliError> {
    let times = ctx.times(&a.t)?;
    let xs = parse_values(&a.x).map_err(|e| bad("--x", e))?;
    let arrival = ctx.arrival(&a.model)?;
    let uniform = matches!(arrival.kind(), ArrivalKind::Uniform);
    let mut table = Table::new(&["t", "x_or_y", "rate", "argmin", "residual"]);
    for &t in &times {
        check_t(t)?;
        let zero = if uniform { t } else { arrival.quantile(t) };
        for &x in &xs {
            let r = if uniform { rate_os(t, x) } else { rate_os_general(t, x, &arrival)? };
            table.push(&[t, x, r.value, zero, r.residual])?;
        }
    }
    write(&table, &ctx.output(&a.out, "rate_os.csv"))
}

fn check_t(t: f64) -> Result<(), CliError> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(bad("--t", format!("times must lie in (0, 1], got {t}")))
    }
}

fn rate_offered_cmd(ctx: &Ctx, a: RateArgs) -> Result<(), CliError> {
    ctx.uniform_only(&a.model, "rate offered")?;
    let times = ctx.times(&a.t)?;
    let ys = parse_values(&a.x).map_err(|e| bad("--y", e))?;
    let service = ctx.service(&a.model)?;
    let mut table = Table::new(&["t", "x_or_y", "rate", "argmin", "residual"]);
    for &t in &times {
        check_t(t)?;
        for &y in &ys {
            let r = rate_offered(t, y, &service);
            let x1 = if r.is_finite() { r.optimizer.first().copied().unwrap_or(f64::INFINITY) } else { f64::INFINITY };
            table.push(&[t, y, r.value, x1, r.residual])?;
        }
    }
    write(&table, &ctx.output(&a.out, "rate_offered.csv"))
}

fn rate_workload_cmd(ctx: &Ctx, a: RateArgs) -> Result<(), CliError> {
    ctx.uniform_only(&a.model, "rate workload")?;
    let times = ctx.times(&a.t)?;
    let ys = parse_values(&a.x).map_err(|e| bad("--y", e))?;
    let service = ctx.service(&a.model)?;
    let cfg = ctx.path_cfg(a.m)?;
    let mut table = Table::new(&["t", "x_or_y", "rate", "argmin", "residual"]);
    let mut flagged = 0;
    for &t in &times {
        check_t(t)?;
        for &y in &ys {
            let r = rate_workload(t, y, &service, &cfg)?;
            flagged += usize::from(r.upper_bound_only);
            let window = if r.value.is_finite() { r.window } else { f64::INFINITY };
            let residual = if r.constraint_residual.is_finite() { r.constraint_residual } else { f64::INFINITY };
            table.push(&[t, y, r.value, window, residual.abs()])?;
        }
    }
    write_flagged(&table, &ctx.output(&a.out, "rate_workload.csv"), flagged)
}

fn rate_increments_cmd(ctx: &Ctx, a: IncrementArgs) -> Result<(), CliError> {
    let points = parse_values(&a.points).map_err(|e| bad("--points", e))?;
    let t = *points.last().ok_or_else(|| bad("--points", "empty"))?;
    let partition = Partition::new(t, points)?;
    let lln: f64 = partition.increments().iter().sum();
    let mut table = Table::new(&["t", "x_or_y", "rate", "argmin", "residual"]);
    for spec in &a.y {
        let y = parse_values(spec).map_err(|e| bad("--y", e))?;
        let r = rate_increments(&partition, &y)?;
        table.push(&[t, y.iter().sum(), r.value, lln, r.residual])?;
    }
    write(&table, &ctx.output(&a.out, "rate_increments.csv"))
}

fn oracle_os_tail(ctx: &Ctx, a: OsTailArgs) -> Result<(), CliError> {
    let ns = ctx.n_list(&a.n)?;
    let times = ctx.times(&a.t)?;
    let thresholds = ctx.thresholds(&a.a, "--a")?;
    let mut table = Table::new(&["n", "t", "threshold", "p", "neg_log_p_over_n"]);
    for &n in &ns {
        for &t in &times {
            for &x in &thresholds {
                let tp = exact_os_tail(n, t, x)?;
                let decay = if n == 0 { 0.0 } else { -tp.log_p / n as f64 };
                println!("n={n} t={} a={} p={:.6}", cell(t)?, cell(x)?, tp.p);
                table.push(&[n as f64, t, x, tp.p, decay.max(0.0)])?;
            }
        }
    }
    write(&table, &ctx.output(&a.out, "oracle_os_tail.csv"))
}

fn mc_tail(ctx: &Ctx, a: McArgs) -> Result<(), CliError> {
    let ns = ctx.n_list(&a.n)?;
    let times = ctx.times(&a.t)?;
    let thresholds = ctx.thresholds(&a.threshold, "--threshold")?;
    let reps = ctx.reps(a.reps);
    let seed = ctx.seed(a.seed);
    let service = ctx.service(&a.model)?;
    let arrival = ctx.arrival(&a.model)?;
    if a.method == McMethod::Is || a.event == Event::Os {
        ctx.uniform_only(&a.model, "importance sampling and the order-statistics event")?;
    }
    let override_tilts = |d: Tilts| Tilts {
        first: a.theta1.unwrap_or(d.first),
        rest: a.theta1_rest.unwrap_or(d.rest),
        service: a.theta2.unwrap_or(d.service),
    };
    let mut table = Table::new(&[
        "n", "t", "threshold", "method", "p_hat", "ci_lo", "ci_hi", "reps", "theta1", "theta2",
    ]);
    let method_name = match a.method {
        McMethod::Naive => "naive",
        McMethod::Is => "is",
    };
    let mut stream = 0u64;
    for &n in &ns {
        for &t in &times {
            check_t(t)?;
            for &w in &thresholds {
                let rng = RngSpec::new(seed, stream);
                stream += 1;
                let est: McEstimate = match (a.event, a.method) {
                    (Event::Workload, McMethod::Naive) => {
                        let q = QueueTemplate::new(n, arrival.clone(), service.clone())?;
                        mc_workload_tail(&q, t, w, reps, OrderStatMethod::ExpoRatio, &rng)?
                    }
                    (Event::Workload, McMethod::Is) => {
                        let q = QueueTemplate::uniform(n, service.clone())?;
                        let tilts = override_tilts(default_workload_tilts(&service, t, w));
                        is_workload_tail(&q, t, w, tilts, reps, &rng)?
                    }
                    (Event::Os, McMethod::Naive) => mc_os_tail(n, t, w, reps, OrderStatMethod::ExpoRatio, &rng)?,
                    (Event::Os, McMethod::Is) => {
                        let tilts = override_tilts(os_tilts(t, w));
                        is_os_tail(n, t, w, tilts, reps, &rng)?
                    }
                };
                let (lo, hi) = est.ci();
                let tl = est.tilts.unwrap_or_default();
                table.push_cells(vec![
                    cell(n as f64)?,
                    cell(t)?,
                    cell(w)?,
                    method_name.to_string(),
                    cell(est.p_hat)?,
                    cell(lo)?,
                    cell(hi)?,
                    cell(reps as f64)?,
                    cell(tl.first)?,
                    cell(tl.service)?,
                ]);
            }
        }
    }
    write(&table, &ctx.output(&a.out, "mc_tail.csv"))
}

fn slope(ctx: &Ctx, a: SlopeArgs) -> Result<(), CliError> {
    if a.event != "os" {
        return Err(bad("--event", format!("only `os` is supported, got `{}`", a.event)));
    }
    let ns = ctx.n_list(&a.n)?;
    let t = match a.t {
        Some(t) => t,
        None => *ctx.times(&None)?.first().ok_or_else(|| bad("--t", "missing"))?,
    };
    let x = match a.a {
        Some(x) => x,
        None => *ctx.thresholds(&None, "--a")?.first().ok_or_else(|| bad("--a", "missing"))?,
    };
    check_t(t)?;
    let rate_ref = os_rate(t, x);
    let rng = RngSpec::new(ctx.seed(a.seed), 0);
    let reps = ctx.reps(a.reps);
    let source: Box<dyn ProbabilitySource> = match a.source {
        Source::Exact => Box::new(ExactOsSource { t, a: x }),
        Source::Mc => Box::new(SampledOsSource { t, a: x, reps, rng, tilts: None }),
        Source::Is => Box::new(SampledOsSource { t, a: x, reps, rng, tilts: Some(os_tilts(t, x)) }),
    };
    let report = ldp_slope(&ns, rate_ref, source.as_ref())?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let mut table = Table::new(&["n", "neg_log_p_over_n", "rate_ref", "gap"]);
    for r in &report.rows {
        table.push(&[r.n as f64, r.decay, r.rate_ref, r.gap])?;
    }
    write(&table, &ctx.output(&a.out, "ldp_slope.csv"))
}

fn bandwidth(ctx: &Ctx, a: BandwidthArgs) -> Result<(), CliError> {
    ctx.uniform_only(&a.model, "bandwidth")?;
    let w = match a.w {
        Some(w) => w,
        None => *ctx.thresholds(&None, "--w")?.first().ok_or_else(|| bad("--w", "missing"))?,
    };
    let n = match a.n {
        Some(n) => n,
        None => ctx.n_list(&None)?[0],
    };
    let q = BandwidthQuery {
        w,
        p: a.p,
        n,
        t_grid: ctx.times(&a.t)?,
        model: ctx.service(&a.model)?,
        cfg: ctx.path_cfg(a.m)?,
    };
    q.validate()?;
    let report = critical_time(&q)?;
    let mut table = Table::new(&["t", "rate", "bound", "residual", "upper_bound_only"]);
    let mut flagged = 0;
    for r in &report.rows {
        flagged += usize::from(r.upper_bound_only);
        table.push(&[r.t, r.rate, r.bound, r.residual.abs(), f64::from(u8::from(r.upper_bound_only))])?;
    }
    println!("t_star={}", cell(report.t_star)?);
    write_flagged(&table, &ctx.output(&a.out, "bandwidth.csv"), flagged)
}

fn plot_cmd(ctx: &Ctx, a: PlotArgs) -> Result<(), CliError> {
    let default = a
        .input
        .file_stem()
        .map(|s| format!("{}.svg", s.to_string_lossy()))
        .unwrap_or_else(|| "plot.svg".into());
    let out = ctx.output(&a.out, &default);
    let svg = plot::render_csv(&a.input, &a.x, &a.y, a.group.as_deref())?;
    crate::output::write_atomic(&out, svg.as_bytes())?;
    eprintln!("wrote {}", out.display());
    Ok(())
}
