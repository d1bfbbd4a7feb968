use std::fs;
use std::path::{Path, PathBuf};

use viscoflow_core::data::{make_dataset_1d, DatasetKind, DatasetSpec, NoiseScheme, Sample1D};
use viscoflow_core::dynamics::increment_moments;
use viscoflow_core::export::{self, field, meta_line, CsvWriter, Meta};
use viscoflow_core::landscape::{
    strict_local_minima, sweep_landscape, total_variation, uniform_grid, LossMetric, SolverRoute,
};
use viscoflow_core::optimizer::{sgd_run, BasinMap, GradMode, SgdConfig, ViscousObjective};
use viscoflow_core::pde1d::{
    constant_field, solve_forward_kolmogorov_fd, solve_kolmogorov_fd, viscous_solution_analytic, Grid1D,
    TerminalCondition1D,
};
use viscoflow_core::rng::RngStream;
use viscoflow_core::sde::{estimate_u, integrate_em, SdeSpec};
use viscoflow_core::toynet::{self, parse_activation, train_seeds, Dims, TrainConfig};
use viscoflow_core::{mean_and_variance, sigmoid};

use crate::config::{FileConfig, Provenance};
use crate::params::*;
use crate::{Cli, Command, Failure, EXIT_CHECK};

struct Ctx {
    seed: u64,
    out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<u8, Failure> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let threads = cli.threads.or(file.threads()?);
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::config("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::config(format!("thread pool: {e}")))?;
    }
    let ctx = Ctx { seed: cli.seed.or(file.seed()?).unwrap_or(0), out: cli.out };
    let name = cli.command.name();
    match cli.command {
        Command::Moments(p) => moments(&ctx, p.overlay(file.section(name)?).resolved()),
        Command::FkCheck(p) => fk_check(&ctx, p.overlay(file.section(name)?).resolved()),
        Command::Landscape(p) => landscape(&ctx, p.overlay(file.section(name)?).resolved()),
        Command::Sgd(p) => sgd(&ctx, p.overlay(file.section(name)?).resolved()),
        Command::Pde(p) => {
            let mut p = p.overlay(file.section(name)?);
            if p.g.is_none() {
                p.g = Some(p.f());
            }
            pde(&ctx, p.resolved())
        }
        Command::Toynet(p) => toynet(&ctx, p.overlay(file.section(name)?).resolved()),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse<T: std::str::FromStr<Err = viscoflow_core::Error>>(s: &str) -> Result<T, Failure> {
    s.parse::<T>().map_err(Failure::from)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect(),
    }
}

fn load_dataset(kind: &str, file: &str, size: usize, seed: u64) -> Result<Vec<Sample1D>, Failure> {
    if !file.is_empty() {
        let text = fs::read_to_string(file).map_err(|e| Failure::config(format!("cannot read {file}: {e}")))?;
        let mut samples = Vec::new();
        for line in export::data_rows(&text) {
            let mut it = line.split(',');
            let (Some(y), Some(h)) = (it.next(), it.next()) else {
                return Err(Failure::config(format!("bad dataset row `{line}`")));
            };
            let (Ok(y), Ok(h)) = (y.trim().parse::<f64>(), h.trim().parse::<u8>()) else {
                if samples.is_empty() {
                    continue; // header
                }
                return Err(Failure::config(format!("bad dataset row `{line}`")));
            };
            samples.push(Sample1D::new(y, h)?);
        }
        return Ok(make_dataset_1d(&DatasetSpec::new(DatasetKind::Custom(samples), 0, seed))?);
    }
    Ok(make_dataset_1d(&DatasetSpec::new(parse::<DatasetKind>(kind)?, size, seed))?)
}

fn moments(ctx: &Ctx, p: MomentsParams) -> Result<u8, Failure> {
    let prov = Provenance::new("moments", ctx.seed, &p)?;
    let schemes = match p.scheme().as_str() {
        "all" => vec![
            NoiseScheme::Bernoulli { p: p.p() },
            NoiseScheme::Gaussian { nu: p.nu() },
            NoiseScheme::Uniform { beta: p.beta() },
            NoiseScheme::ShakeShake,
        ],
        "bernoulli" => vec![NoiseScheme::Bernoulli { p: p.p() }],
        "gaussian" => vec![NoiseScheme::Gaussian { nu: p.nu() }],
        "uniform" => vec![NoiseScheme::Uniform { beta: p.beta() }],
        "shake" | "shake-shake" => vec![NoiseScheme::ShakeShake],
        "plain" => vec![NoiseScheme::Plain],
        other => return Err(Failure::config(format!("unknown scheme `{other}`"))),
    };
    let root = RngStream::new(ctx.seed, 0);
    let mut rows = Vec::new();
    for (i, s) in schemes.iter().enumerate() {
        rows.push(increment_moments(*s, p.blocks(), p.draws(), &root.split(i as u64))?);
    }
    let mut meta = prov.meta();
    meta.push(meta_line("dt", 1.0 / p.blocks() as f64));
    meta.push(meta_line("draws", p.draws()));
    let mut w = CsvWriter::new(Vec::new(), &meta, &["scheme", "mean", "variance", "expected_variance", "pass"])?;
    for r in &rows {
        w.row(&[field(r.scheme), field(r.mean), field(r.variance), field(r.expected_variance), field(r.pass)])?;
    }
    emit(ctx.out.as_deref(), &String::from_utf8(w.finish()?).expect("utf-8"))?;
    Ok(if rows.iter().all(|r| r.pass) { 0 } else { EXIT_CHECK })
}

fn fk_check(ctx: &Ctx, p: FkParams) -> Result<u8, Failure> {
    let prov = Provenance::new("fk-check", ctx.seed, &p)?;
    let (f, eps) = (p.f(), p.eps());
    let sig = TerminalCondition1D::sigmoid();
    let grid = if p.nt() == 0 {
        Grid1D::stable(p.domain_min(), p.domain_max(), p.nx(), f.abs(), eps * eps * f * f)?
    } else {
        Grid1D::new(p.domain_min(), p.domain_max(), p.nx(), p.nt())?
    };
    let fd = solve_kolmogorov_fd(&constant_field(f), &constant_field(f), eps, &sig, &grid)?;
    let spec = SdeSpec::constant_1d(f, f, eps)?;
    let terminal = |v: &[f64]| vec![sigmoid(v[0])];
    let root = RngStream::new(ctx.seed, 0);
    let mut meta = prov.meta();
    meta.push(meta_line("fd_grid", format!("nx={} nt={}", grid.nx, grid.nt)));
    meta.push(meta_line("tolerances", "fd: |fd-analytic| <= 0.01; mc: |mc-analytic| <= 3 std_error"));
    let mut w = CsvWriter::new(Vec::new(), &meta, &["x", "analytic", "fd", "mc", "mc_std_error", "pass"])?;
    let mut all_ok = true;
    for (i, x) in linspace(p.x_min(), p.x_max(), p.x_points()).into_iter().enumerate() {
        let a = viscous_solution_analytic(f, eps, &sig, x, 0.0)?;
        let u_fd = fd.interpolate(0, x);
        let stream = root.split(i as u64);
        let state = viscoflow_core::data::FeatureState::scalar(x)?;
        let (mc, se, checked) = if p.paths() >= 2 {
            let e = estimate_u(&spec, &terminal, &state, 0.0, p.paths(), p.steps(), &stream)?;
            (e.estimate[0], e.std_error[0], true)
        } else {
            let end = integrate_em(&spec, &state, 0.0, p.steps(), &mut stream.split(0))?;
            (sigmoid(end.values()[0]), f64::INFINITY, false)
        };
        let pass = if checked {
            let mc_ok = (mc - a).abs() <= 3.0 * se + 4.0 * f64::EPSILON * a.abs().max(1.0);
            let ok = mc_ok && (u_fd - a).abs() <= 1e-2;
            all_ok &= ok;
            field(ok)
        } else {
            "skip".to_string()
        };
        w.row(&[field(x), field(a), field(u_fd), field(mc), field(se), pass])?;
    }
    emit(ctx.out.as_deref(), &String::from_utf8(w.finish()?).expect("utf-8"))?;
    Ok(if all_ok { 0 } else { EXIT_CHECK })
}

fn landscape(ctx: &Ctx, p: LandscapeParams) -> Result<u8, Failure> {
    let prov = Provenance::new("landscape", ctx.seed, &p)?;
    let data = load_dataset(&p.dataset(), &p.dataset_file(), p.size(), p.data_seed())?;
    let metric: LossMetric = parse(&p.metric())?;
    let route = match p.route().as_str() {
        "analytic" => SolverRoute::Analytic,
        "fd" => SolverRoute::Fd { x_min: p.domain_min(), x_max: p.domain_max(), nx: p.nx() },
        "mc" => SolverRoute::Mc { paths: p.paths(), steps: p.steps() },
        other => return Err(Failure::config(format!("unknown route `{other}`"))),
    };
    let fs = uniform_grid(p.f_min(), p.f_max(), p.f_step())?;
    let land = sweep_landscape(&data, &fs, &p.eps(), metric, route, ctx.seed)?;
    let mut meta = prov.meta();
    for (e, eps) in land.eps_grid.iter().enumerate() {
        let row = land.row(e);
        meta.push(meta_line(
            format!("eps {eps}"),
            format!("total_variation={} strict_minima={}", total_variation(row), strict_local_minima(row).len()),
        ));
    }
    emit(ctx.out.as_deref(), &export::landscape_csv(&land, &meta))?;
    Ok(0)
}

fn sgd(ctx: &Ctx, p: SgdParams) -> Result<u8, Failure> {
    let prov = Provenance::new("sgd", ctx.seed, &p)?;
    let data = load_dataset(&p.dataset(), &p.dataset_file(), p.size(), p.data_seed())?;
    let metric: LossMetric = parse(&p.metric())?;
    let grad: GradMode = parse(&p.grad())?;
    let cfg = SgdConfig {
        batch_size: if p.batch_size() == 0 { data.len() } else { p.batch_size() },
        learning_rate: p.lr(),
        iterations: p.iterations(),
        init_f: p.init_f(),
        seed: ctx.seed,
        grad_mode: grad,
    };
    let obj = ViscousObjective::new(p.eps(), metric, grad)?;
    let traj = sgd_run(&obj, &data, &cfg)?;
    let map = BasinMap::default_scan(&data, metric, p.basin_eps())?;
    let mut meta = prov.meta();
    let describe = |f: f64| match map.classify(f) {
        Ok(id) => format!("{id}"),
        Err(_) => "outside".to_string(),
    };
    meta.push(meta_line("init_basin", describe(cfg.init_f)));
    meta.push(meta_line("final_f", traj.final_f()));
    meta.push(meta_line("final_basin", describe(traj.final_f())));
    for id in 0..map.sinks.len() {
        let flat = map.flatness(id).map_or("none".to_string(), |v| v.to_string());
        meta.push(meta_line(format!("basin {id}"), format!("min_f={} flatness={flat}", map.minimum_f(id))));
    }
    emit(ctx.out.as_deref(), &export::trajectory_csv(&traj, &meta))?;
    if !p.basin_out().is_empty() {
        emit(Some(Path::new(&p.basin_out())), &export::basin_csv(&map, &prov.meta()))?;
    }
    Ok(0)
}

fn pde(ctx: &Ctx, p: PdeParams) -> Result<u8, Failure> {
    let prov = Provenance::new("pde", ctx.seed, &p)?;
    let (f, g, eps) = (p.f(), p.g(), p.eps());
    let terminal = match p.terminal().as_str() {
        "sigmoid" => TerminalCondition1D::sigmoid(),
        "logistic" => TerminalCondition1D::logistic(p.terminal_scale(), p.terminal_shift()),
        "constant" => TerminalCondition1D::constant(p.terminal_value()),
        other => return Err(Failure::config(format!("unknown terminal `{other}`"))),
    };
    let grid = if p.nt() == 0 {
        Grid1D::stable(p.x_min(), p.x_max(), p.nx(), f.abs(), eps * eps * g * g)?
    } else {
        Grid1D::new(p.x_min(), p.x_max(), p.nx(), p.nt())?
    };
    let (field1d, axis) = match p.direction().as_str() {
        "backward" => (solve_kolmogorov_fd(&constant_field(f), &constant_field(g), eps, &terminal, &grid)?, "t"),
        "forward" => (solve_forward_kolmogorov_fd(&constant_field(f), &constant_field(g), eps, &terminal, &grid)?, "tau"),
        other => return Err(Failure::config(format!("unknown direction `{other}`"))),
    };
    if p.t_levels() == 0 {
        return Err(Failure::config("t-levels must be >= 1"));
    }
    let mut levels: Vec<usize> = if p.t_levels() == 1 {
        vec![0]
    } else {
        (0..p.t_levels()).map(|i| ((i * grid.nt) as f64 / (p.t_levels() - 1) as f64).round() as usize).collect()
    };
    levels.dedup();
    let mut meta = prov.meta();
    meta.push(meta_line("grid", format!("nx={} nt={} dx={} dt={}", grid.nx, grid.nt, grid.dx(), grid.dt())));
    meta.push(meta_line("time_axis", axis));
    meta.push(meta_line("terminal", terminal.description()));
    emit(ctx.out.as_deref(), &export::field_csv_levels(&field1d, &levels, p.x_stride(), &meta))?;
    Ok(0)
}

fn toynet(ctx: &Ctx, p: ToynetParams) -> Result<u8, Failure> {
    let prov = Provenance::new("toynet", ctx.seed, &p)?;
    let (train_set, val_set) = toynet::builtin_noisy_dataset(p.data_seed())?;
    let activation = parse_activation(&p.activation())?;
    let dims = Dims { d: 2, n: p.width(), blocks: p.blocks(), m: 2 };
    if p.seeds().is_empty() || p.p().is_empty() {
        return Err(Failure::config("need at least one seed and one survival probability"));
    }
    if let Some(dir) = &ctx.out {
        fs::create_dir_all(dir).map_err(|e| Failure::config(format!("cannot create {}: {e}", dir.display())))?;
    }
    let meta = prov.meta();
    let mut summary_meta: Meta = meta.clone();
    let mut rows = Vec::new();
    for &surv in &p.p() {
        let cfg = TrainConfig {
            p: surv,
            epochs: p.epochs(),
            batch_size: p.batch_size(),
            learning_rate: p.lr(),
            weight_decay: p.weight_decay(),
            seed: 0,
            dims,
            activation,
        };
        // The global seed shifts every listed run seed.
        let seeds: Vec<u64> = p.seeds().iter().map(|s| ctx.seed.wrapping_add(*s)).collect();
        let results = train_seeds(&train_set, &val_set, &cfg, &seeds)?;
        let mut gaps = Vec::new();
        for (s, r) in p.seeds().iter().zip(&results) {
            let last = r.history.last().expect("initial evaluation");
            gaps.push(r.final_gap());
            rows.push(vec![
                field(surv),
                field(s),
                field(last.train_loss),
                field(last.val_loss),
                field(r.final_gap()),
                field(last.train_acc),
                field(last.val_acc),
            ]);
            if let Some(dir) = &ctx.out {
                let mut m = meta.clone();
                m.push(meta_line("p", surv));
                m.push(meta_line("run_seed", s));
                fs::write(dir.join(format!("history_p{surv}_seed{s}.csv")), export::history_csv(&r.history, &m))?;
                if p.save_checkpoints() {
                    toynet::save_checkpoint(&r.params, &dir.join(format!("params_p{surv}_seed{s}.txt")))?;
                }
            }
        }
        let (mean, var) = mean_and_variance(&gaps);
        let sd = if gaps.len() > 1 { var.sqrt() } else { 0.0 };
        summary_meta.push(meta_line(format!("p {surv}"), format!("mean_gap={mean} sample_sd_gap={sd} runs={}", gaps.len())));
    }
    let mut w = CsvWriter::new(
        Vec::new(),
        &summary_meta,
        &["p", "seed", "train_loss", "val_loss", "gap", "train_acc", "val_acc"],
    )?;
    for r in &rows {
        w.row(r)?;
    }
    let text = String::from_utf8(w.finish()?).expect("utf-8");
    match &ctx.out {
        Some(dir) => fs::write(dir.join("summary.csv"), text)?,
        None => print!("{text}"),
    }
    Ok(0)
}
