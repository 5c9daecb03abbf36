//! The five workflows behind the subcommands.

use serde_json::{json, Value};
use std::path::Path;

use lfe_core::estimator::{fit, GammaBounds, SearchConfig};
use lfe_core::inference::{
    gp_critical_values, supf_test, t_test, wald, Alternative, LinearRestriction, Parameter,
};
use lfe_core::learning::ForecastModel;
use lfe_core::montecarlo::{run_study, write_records_json, write_summary_csv, StudyConfig};
use lfe_core::panel::{load_panel_csv, simulate_dgp, write_panel_csv, CohortPanel, DgpConfig};

use crate::args::{
    parse_grid_spec, parse_levels, parse_usize_list, AlternativeArg, CritvalsArgs, EstimateArgs,
    FileConfig, GainArg, ModelArgs, PlmArg, ScenarioArg, SimulateArgs, StudyArgs, TestArgs,
    TheoryArgs, TimingArg,
};
use crate::CliError;

const DEFAULT_LEVELS: &str = "0.01,0.05,0.10";

fn draw_seed(flag: Option<u64>, cfg: &FileConfig) -> Result<u64, CliError> {
    Ok(match flag.or(cfg.u64("seed")?) {
        Some(s) => s,
        None => rand::random(),
    })
}

fn write_or_print(out: Option<&Path>, body: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, body)
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display()))),
        None => {
            println!("{body}");
            Ok(())
        }
    }
}

fn require_dir(dir: &Path) -> Result<(), CliError> {
    if !dir.is_dir() {
        return Err(CliError::input(format!(
            "output directory {} does not exist",
            dir.display()
        )));
    }
    Ok(())
}

pub fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let cfg = FileConfig::load(args.common.config.as_deref())?;
    let scenario = match args.scenario {
        Some(s) => s,
        None => match cfg.string("scenario")? {
            Some(s) => ScenarioArg::parse(&s)?,
            None => ScenarioArg::S1,
        },
    };
    let k = args.k.or(cfg.usize("k")?).unwrap_or(1);
    if k == 0 {
        return Err(CliError::input("scale factor k must be positive".into()));
    }
    let mut dgp = DgpConfig::scaled(scenario.to_core(), k);
    if let Some(n) = args.n.or(cfg.usize("n")?) {
        dgp.n = n;
    }
    if let Some(u) = args.u.or(cfg.usize("u")?) {
        dgp.u = u;
    }
    if let Some(l) = args.l.or(cfg.usize("l")?) {
        dgp.l = l;
    }
    dgp.gamma0 = args.gamma.or(cfg.f64("gamma")?).unwrap_or(dgp.gamma0);
    dgp.beta0 = args.beta.or(cfg.f64("beta")?).unwrap_or(dgp.beta0);
    dgp.gain = match args.gain {
        Some(g) => g.to_core(),
        None => match cfg.string("gain")? {
            Some(s) => GainArg::parse(&s)?.to_core(),
            None => dgp.gain,
        },
    };
    dgp.mu_y = args.mu_y.or(cfg.f64("mu_y")?).unwrap_or(dgp.mu_y);
    dgp.phi_y = args.phi_y.or(cfg.f64("phi_y")?).unwrap_or(dgp.phi_y);
    dgp.mu_x = args.mu_x.or(cfg.f64("mu_x")?).unwrap_or(dgp.mu_x);
    dgp.phi_x = args.phi_x.or(cfg.f64("phi_x")?).unwrap_or(dgp.phi_x);
    dgp.eps_sd = args.eps_sd.or(cfg.f64("eps_sd")?).unwrap_or(dgp.eps_sd);
    dgp.seed = draw_seed(args.common.seed, &cfg)?;
    let out_dir = args
        .out
        .or(cfg.path("out")?)
        .ok_or_else(|| CliError::input("an output directory is required (--out DIR)".into()))?;
    require_dir(&out_dir)?;

    let panel = simulate_dgp(&dgp)?;
    let panel_path = out_dir.join("panel.csv");
    let macro_path = out_dir.join("macro.csv");
    write_panel_csv(&panel, &panel_path, &macro_path)?;

    let sidecar = json!({
        "command": "simulate",
        "seed": dgp.seed,
        "config": dgp,
        "outputs": {
            "panel": panel_path.file_name().unwrap().to_str(),
            "macro": macro_path.file_name().unwrap().to_str(),
        },
    });
    let sidecar_path = out_dir.join("simulate.json");
    std::fs::write(&sidecar_path, format!("{:#}\n", sidecar))
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", sidecar_path.display())))?;
    println!(
        "wrote {}, {}, {}",
        panel_path.display(),
        macro_path.display(),
        sidecar_path.display()
    );
    Ok(())
}

/// Resolved model and search options plus their JSON echo.
struct ResolvedModel {
    panel: CohortPanel,
    model: ForecastModel,
    search: SearchConfig,
    echo: Value,
}

fn resolve_model(args: &ModelArgs, cfg: &FileConfig) -> Result<ResolvedModel, CliError> {
    let panel_path = args
        .panel
        .clone()
        .or(cfg.path("panel")?)
        .ok_or_else(|| CliError::input("a panel CSV is required (--panel FILE)".into()))?;
    let macro_path = args
        .macro_csv
        .clone()
        .or(cfg.path("macro")?)
        .ok_or_else(|| CliError::input("a macro CSV is required (--macro FILE)".into()))?;
    let plm = match args.plm {
        Some(p) => p,
        None => match cfg.string("plm")? {
            Some(s) => PlmArg::parse(&s)?,
            None => PlmArg::Constant,
        },
    };
    let gain = match args.gain {
        Some(g) => g,
        None => match cfg.string("gain")? {
            Some(s) => GainArg::parse(&s)?,
            None => GainArg::Baseline,
        },
    };
    let timing = match args.timing {
        Some(t) => t,
        None => match cfg.string("timing")? {
            Some(s) => TimingArg::parse(&s)?,
            None => TimingArg::OneStep,
        },
    };
    let defaults = SearchConfig::default();
    let bounds = GammaBounds {
        lo: args.gamma_min.or(cfg.f64("gamma_min")?).unwrap_or(defaults.bounds.lo),
        hi: args.gamma_max.or(cfg.f64("gamma_max")?).unwrap_or(defaults.bounds.hi),
    };
    let search = SearchConfig {
        bounds,
        grid_points: args
            .grid_points
            .or(cfg.usize("grid_points")?)
            .unwrap_or(defaults.grid_points),
        tol_gamma: args.tol.or(cfg.f64("tol")?).unwrap_or(defaults.tol_gamma),
        hessian_step: args.hessian_step.or(cfg.f64("hessian_step")?),
    };
    let panel = load_panel_csv(&panel_path, &macro_path)?;
    let model = ForecastModel::new(plm.to_core(), gain.to_core(), timing.to_core());
    let echo = json!({
        "panel": panel_path.display().to_string(),
        "macro": macro_path.display().to_string(),
        "plm": model.plm,
        "gain": model.gain,
        "timing": model.timing,
        "gamma_min": search.bounds.lo,
        "gamma_max": search.bounds.hi,
        "grid_points": search.grid_points,
        "tol": search.tol_gamma,
        "hessian_step": search.hessian_step,
    });
    Ok(ResolvedModel { panel, model, search, echo })
}

pub fn cmd_estimate(args: EstimateArgs) -> Result<(), CliError> {
    let cfg = FileConfig::load(args.common.config.as_deref())?;
    let resolved = resolve_model(&args.model, &cfg)?;
    let fit_result = fit(&resolved.panel, &resolved.model, &resolved.search)?;
    let body = json!({
        "command": "estimate",
        "config": resolved.echo,
        "result": fit_result.to_json(),
    });
    let out = args.out.or(cfg.path("out")?);
    write_or_print(out.as_deref(), &format!("{:#}\n", body))
}

/// Parsed null restriction.
enum NullSpec {
    /// Single-parameter t test.
    Single { which: Parameter, value: f64, alternative: Alternative },
    /// Joint Wald restriction on both parameters.
    Joint { beta: f64, gamma: f64 },
    /// `beta = 0`: gamma is unidentified, route to supF.
    BetaZero,
}

fn parse_null(raw: &str, alternative: Option<AlternativeArg>) -> Result<NullSpec, CliError> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    let parse_one = |part: &str| -> Result<(Parameter, &'static str, f64), CliError> {
        for op in ["<=", ">=", "="] {
            if let Some(idx) = part.find(op) {
                let name = part[..idx].trim().to_ascii_lowercase();
                let value: f64 = part[idx + op.len()..]
                    .trim()
                    .parse()
                    .map_err(|_| CliError::input(format!("null value in `{part}` is not a number")))?;
                let which = match name.as_str() {
                    "beta" => Parameter::Beta,
                    "gamma" => Parameter::Gamma,
                    other => {
                        return Err(CliError::input(format!("unknown parameter `{other}` in null")))
                    }
                };
                let op_static = match op {
                    "<=" => "<=",
                    ">=" => ">=",
                    _ => "=",
                };
                return Ok((which, op_static, value));
            }
        }
        Err(CliError::input(format!(
            "restriction `{part}` must look like beta=0.5, gamma<=1, or gamma>=2"
        )))
    };
    match parts.len() {
        1 => {
            let (which, op, value) = parse_one(parts[0])?;
            if which == Parameter::Beta && op == "=" && value == 0.0 {
                return Ok(NullSpec::BetaZero);
            }
            let implied = match op {
                "<=" => Some(Alternative::Greater),
                ">=" => Some(Alternative::Less),
                _ => None,
            };
            let alternative = match (alternative, implied) {
                (Some(AlternativeArg::Greater), Some(Alternative::Less))
                | (Some(AlternativeArg::Less), Some(Alternative::Greater))
                | (Some(AlternativeArg::TwoSided), Some(_)) => {
                    return Err(CliError::input(format!(
                        "the alternative flag contradicts the one-sided null `{raw}`"
                    )));
                }
                (Some(a), _) => match a {
                    AlternativeArg::TwoSided => Alternative::TwoSided,
                    AlternativeArg::Greater => Alternative::Greater,
                    AlternativeArg::Less => Alternative::Less,
                },
                (None, Some(side)) => side,
                (None, None) => Alternative::TwoSided,
            };
            Ok(NullSpec::Single { which, value, alternative })
        }
        2 => {
            if alternative.is_some() {
                return Err(CliError::input(
                    "joint restrictions take no alternative (the Wald test is two-sided)".into(),
                ));
            }
            let mut beta = None;
            let mut gamma = None;
            for part in parts {
                let (which, op, value) = parse_one(part)?;
                if op != "=" {
                    return Err(CliError::input(
                        "joint restrictions must use equalities".into(),
                    ));
                }
                match which {
                    Parameter::Beta => beta = Some(value),
                    Parameter::Gamma => gamma = Some(value),
                }
            }
            match (beta, gamma) {
                (Some(b), Some(g)) => Ok(NullSpec::Joint { beta: b, gamma: g }),
                _ => Err(CliError::input(
                    "a joint restriction must pin beta and gamma once each".into(),
                )),
            }
        }
        _ => Err(CliError::input("at most two restrictions are supported".into())),
    }
}

fn alternative_name(a: Alternative) -> &'static str {
    match a {
        Alternative::TwoSided => "two-sided",
        Alternative::Greater => "greater",
        Alternative::Less => "less",
    }
}

pub fn cmd_test(args: TestArgs) -> Result<(), CliError> {
    let cfg = FileConfig::load(args.common.config.as_deref())?;
    let resolved = resolve_model(&args.model, &cfg)?;
    let raw_null = args
        .null
        .clone()
        .or(cfg.string("null")?)
        .ok_or_else(|| CliError::input("a null restriction is required (--null)".into()))?;
    let null_spec = parse_null(&raw_null, args.alternative)?;
    let seed = draw_seed(args.common.seed, &cfg)?;
    let b = args.bootstrap.or(cfg.usize("bootstrap")?).unwrap_or(200);
    let supf_grid_points = args
        .supf_grid_points
        .or(cfg.usize("supf_grid_points")?)
        .unwrap_or(200);
    let gp_draws = args.gp_draws.or(cfg.usize("gp_draws")?).unwrap_or(10_000);
    let levels = parse_levels(
        &args
            .levels
            .clone()
            .or(cfg.string("levels")?)
            .unwrap_or_else(|| DEFAULT_LEVELS.into()),
    )?;

    let result = match null_spec {
        NullSpec::BetaZero => {
            let grid = resolved.search.bounds.linspace(supf_grid_points);
            let supf = supf_test(&resolved.panel, &resolved.model, &grid, b, seed)?;
            let crit = gp_critical_values(&grid, gp_draws, &levels, seed)?;
            json!({
                "test": "supf",
                "null": "beta=0",
                "f_n": supf.f_n,
                "gamma_hat": supf.gamma_hat,
                "sigma_tilde2": supf.sigma_tilde2,
                "sigma_hat2": supf.sigma_hat2,
                "p_boot": supf.p_boot,
                "bootstrap_draws": supf.b,
                "crit": crit.iter().map(|(l, v)| json!({"level": l, "value": v})).collect::<Vec<_>>(),
                "profile": supf.profile,
                "seed": seed,
            })
        }
        NullSpec::Single { which, value, alternative } => {
            let fit_result = fit(&resolved.panel, &resolved.model, &resolved.search)?;
            let (t, p) = t_test(&fit_result, which, value, alternative)?;
            json!({
                "test": "t",
                "parameter": which,
                "null": value,
                "alternative": alternative_name(alternative),
                "statistic": t,
                "p_value": p,
                "fit": fit_result.to_json(),
            })
        }
        NullSpec::Joint { beta, gamma } => {
            let fit_result = fit(&resolved.panel, &resolved.model, &resolved.search)?;
            let spec = LinearRestriction::joint(beta, gamma);
            let (w, p) = wald(&fit_result, &spec)?;
            json!({
                "test": "wald",
                "null": {"beta": beta, "gamma": gamma},
                "statistic": w,
                "dof": 2,
                "p_value": p,
                "fit": fit_result.to_json(),
            })
        }
    };
    let body = json!({
        "command": "test",
        "config": resolved.echo,
        "result": result,
    });
    let out = args.out.or(cfg.path("out")?);
    write_or_print(out.as_deref(), &format!("{:#}\n", body))
}

pub fn cmd_critvals(args: CritvalsArgs) -> Result<(), CliError> {
    let cfg = FileConfig::load(args.common.config.as_deref())?;
    let spec = args
        .grid
        .clone()
        .or(cfg.string("grid")?)
        .unwrap_or_else(|| format!("{}:10", 2.0 / 3.0));
    let (lo, hi) = parse_grid_spec(&spec)?;
    let points = args.grid_points.or(cfg.usize("grid_points")?).unwrap_or(500);
    let draws = args.draws.or(cfg.usize("draws")?).unwrap_or(10_000);
    let levels = parse_levels(
        &args
            .levels
            .clone()
            .or(cfg.string("levels")?)
            .unwrap_or_else(|| DEFAULT_LEVELS.into()),
    )?;
    let seed = draw_seed(args.common.seed, &cfg)?;
    let grid: Vec<f64> = if hi == lo {
        vec![lo]
    } else {
        let p = points.max(2);
        (0..p).map(|i| lo + (hi - lo) * i as f64 / (p - 1) as f64).collect()
    };
    let crit = gp_critical_values(&grid, draws, &levels, seed)?;
    let mut body = String::from("level,value\n");
    for (level, value) in &crit {
        body.push_str(&format!("{level},{value}\n"));
    }
    let out = args.out.clone().or(cfg.path("out")?);
    write_or_print(out.as_deref(), body.trim_end())?;
    if let Some(path) = out.map(|p| p.with_extension("json")) {
        // provenance sidecar next to the CSV
        let sidecar = json!({
            "command": "critvals",
            "seed": seed,
            "config": {"grid": spec, "grid_points": grid.len(), "draws": draws, "levels": levels},
        });
        std::fs::write(&path, format!("{:#}\n", sidecar))
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

/// Tabulates the kernel, its derivative analogue, and (optionally) the
/// limiting-Hessian entries along the gain grid.
pub fn cmd_theory(args: TheoryArgs) -> Result<(), CliError> {
    let cfg = FileConfig::load(args.common.config.as_deref())?;
    let spec = args
        .grid
        .clone()
        .or(cfg.string("grid")?)
        .unwrap_or_else(|| format!("{}:10", 2.0 / 3.0 + 1e-6));
    let (lo, hi) = parse_grid_spec(&spec)?;
    let points = args.grid_points.or(cfg.usize("grid_points")?).unwrap_or(50);
    let beta = args.beta.or(cfg.f64("beta")?);
    let lim = match beta {
        Some(_) => Some(
            lfe_core::theory::LimitParams::new(
                args.omega2.or(cfg.f64("omega2")?).unwrap_or(1.0),
                args.lambda2.or(cfg.f64("lambda2")?).unwrap_or(1.0),
            )
            .map_err(lfe_core::Error::from)?,
        ),
        None => None,
    };
    let grid: Vec<f64> = if hi == lo {
        vec![lo]
    } else {
        let p = points.max(2);
        (0..p).map(|i| lo + (hi - lo) * i as f64 / (p - 1) as f64).collect()
    };
    let mut body = String::from(if lim.is_some() {
        "gamma,phi,upsilon1,c_bb,c_bg,c_gg\n"
    } else {
        "gamma,phi,upsilon1\n"
    });
    for &g in &grid {
        let phi = lfe_core::theory::phi(g, g)?;
        let ups = lfe_core::theory::upsilon(1, g, g)?;
        match (&lim, beta) {
            (Some(lim), Some(beta)) => {
                let c = lfe_core::theory::hessian_c(
                    &lfe_core::estimator::Theta { beta, gamma: g },
                    lim,
                )?;
                body.push_str(&format!(
                    "{g},{phi},{ups},{},{},{}\n",
                    c[0][0], c[0][1], c[1][1]
                ));
            }
            _ => body.push_str(&format!("{g},{phi},{ups}\n")),
        }
    }
    let out = args.out.or(cfg.path("out")?);
    write_or_print(out.as_deref(), body.trim_end())
}

pub fn cmd_study(args: StudyArgs) -> Result<(), CliError> {
    let cfg = FileConfig::load(args.common.config.as_deref())?;
    let scenario = match args.scenario {
        Some(s) => s,
        None => match cfg.string("scenario")? {
            Some(s) => ScenarioArg::parse(&s)?,
            None => ScenarioArg::S1,
        },
    };
    let mut study = StudyConfig::new(scenario.to_core());
    if let Some(list) = args.k.clone().or(cfg.string("k")?) {
        study.k_values = parse_usize_list(&list)?;
    }
    study.replications = args.reps.or(cfg.usize("reps")?).unwrap_or(study.replications);
    study.gamma0 = args.gamma.or(cfg.f64("gamma")?).unwrap_or(study.gamma0);
    study.beta0 = args.beta.or(cfg.f64("beta")?).unwrap_or(study.beta0);
    study.gain = match args.gain {
        Some(g) => g.to_core(),
        None => match cfg.string("gain")? {
            Some(s) => GainArg::parse(&s)?.to_core(),
            None => study.gain,
        },
    };
    study.mu_y = args.mu_y.or(cfg.f64("mu_y")?).unwrap_or(study.mu_y);
    study.phi_y = args.phi_y.or(cfg.f64("phi_y")?).unwrap_or(study.phi_y);
    study.mu_x = args.mu_x.or(cfg.f64("mu_x")?).unwrap_or(study.mu_x);
    study.phi_x = args.phi_x.or(cfg.f64("phi_x")?).unwrap_or(study.phi_x);
    study.eps_sd = args.eps_sd.or(cfg.f64("eps_sd")?).unwrap_or(study.eps_sd);
    study.level = args.level.or(cfg.f64("level")?).unwrap_or(study.level);
    study.bootstrap_b = args.bootstrap.or(cfg.usize("bootstrap")?).unwrap_or(study.bootstrap_b);
    study.supf_grid_points = args
        .supf_grid_points
        .or(cfg.usize("supf_grid_points")?)
        .unwrap_or(study.supf_grid_points);
    study.search.grid_points = args
        .grid_points
        .or(cfg.usize("grid_points")?)
        .unwrap_or(study.search.grid_points);
    study.run_t_tests = !(args.skip_t || cfg.bool("skip_t")?.unwrap_or(false));
    study.run_supf = !(args.skip_supf || cfg.bool("skip_supf")?.unwrap_or(false));
    study.master_seed = draw_seed(args.common.seed, &cfg)?;
    let out_dir = args
        .out
        .or(cfg.path("out")?)
        .ok_or_else(|| CliError::input("an output directory is required (--out DIR)".into()))?;
    require_dir(&out_dir)?;
    let with_records = args.records || cfg.bool("records")?.unwrap_or(false);

    let summary = run_study(&study)?;
    let summary_path = out_dir.join("summary.csv");
    write_summary_csv(&summary, &summary_path)?;
    let mut outputs = json!({"summary": "summary.csv"});
    if with_records {
        let records_path = out_dir.join("records.json");
        write_records_json(&summary, &records_path)?;
        outputs["records"] = json!("records.json");
    }
    let sidecar = json!({
        "command": "study",
        "seed": study.master_seed,
        "config": study,
        "warnings": summary.warnings,
        "outputs": outputs,
    });
    let sidecar_path = out_dir.join("study.json");
    std::fs::write(&sidecar_path, format!("{:#}\n", sidecar))
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", sidecar_path.display())))?;

    // plain-text table on stdout
    println!("scenario  k  mean(gamma)  var(gamma)  t(gamma)  mean(beta)  var(beta)  t(beta)  supF  fail  boundary");
    let fr = |v: Option<f64>| v.map_or("     -".to_string(), |x| format!("{x:6.3}"));
    for c in &summary.cells {
        println!(
            "{:<9}{:>2}  {:>11.4}  {:>10.4}  {}  {:>10.4}  {:>9.5}  {}  {}  {:>4}  {:>8}",
            format!("{:?}", c.scenario),
            c.k,
            c.mean_gamma,
            c.var_gamma,
            fr(c.t_gamma_rate),
            c.mean_beta,
            c.var_beta,
            fr(c.t_beta_rate),
            fr(c.supf_rate),
            c.failures,
            c.boundary
        );
    }
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}
