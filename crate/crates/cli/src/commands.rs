use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rough_sabr::mc::{mc_smile, McConfig, McSmileEstimate, Scheme, StrikeFlag};
use rough_sabr::pricing::{
    bachelier_greeks, bachelier_price, bs_greeks, bs_price, implied_vol, Convention, OptionQuote,
};
use rough_sabr::sabr_formula::{rough_sabr_smile_with, SmileRequest, SmileSource, SmileTable, Strikes};
use rough_sabr::smile_ode::{g_closed_form_half, g_closed_form_zero};
use rough_sabr::{
    average_vol_u, kernel_kappa, solve_ode, BetaSpec, ForwardVarianceCurve, ModelParams,
    OdeOptions, OdeSolution,
};
use serde::Serialize;
use serde_json::json;

use crate::args::{
    ConventionArg, Format, GlobalArgs, GreeksArgs, McArgs, McOptions, ModelArgs, OdeSolveArgs,
    SchemeArg, SmileArgs, Source, StrikeArgs, ValidateArgs,
};
use crate::error::{CliError, CliResult};

struct Output {
    dir: PathBuf,
    format: Format,
}

impl Output {
    fn new(g: &GlobalArgs) -> CliResult<Self> {
        std::fs::create_dir_all(&g.out).map_err(|e| CliError::io(&g.out, e))?;
        Ok(Output {
            dir: g.out.clone(),
            format: g.format,
        })
    }

    fn write<F>(&self, name: &str, body: F) -> CliResult<PathBuf>
    where
        F: FnOnce(&mut BufWriter<File>) -> rough_sabr::Result<()>,
    {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w)?;
        w.flush().map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<PathBuf> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n")?;
            Ok(())
        })
    }
}

fn parse_beta(s: &str) -> CliResult<BetaSpec> {
    match s {
        "lognormal" => Ok(BetaSpec::Lognormal),
        "normal" => Ok(BetaSpec::Normal),
        "sqrt" => Ok(BetaSpec::power(0.5)?),
        _ => {
            let p = s
                .strip_prefix("power:")
                .and_then(|p| p.parse::<f64>().ok())
                .ok_or_else(|| {
                    CliError::usage(format!(
                        "--beta must be lognormal, normal, sqrt or power:P, got {s:?}"
                    ))
                })?;
            Ok(BetaSpec::power(p)?)
        }
    }
}

fn model(a: &ModelArgs) -> CliResult<(ModelParams, ForwardVarianceCurve)> {
    let params = ModelParams::new(a.hurst, a.eta, a.rho, parse_beta(&a.beta)?)?;
    let curve = match (&a.curve_file, a.alpha0) {
        (Some(path), _) => {
            if !path.exists() {
                return Err(CliError::usage(format!(
                    "curve file {} does not exist",
                    path.display()
                )));
            }
            ForwardVarianceCurve::from_csv_path(path)?
        }
        (None, Some(alpha0)) => ForwardVarianceCurve::classical_sabr(alpha0, a.eta)?,
        (None, None) => ForwardVarianceCurve::flat(a.xi0)?,
    };
    Ok((params, curve))
}

fn parse_yrange(spec: &str) -> CliResult<(f64, f64, usize)> {
    let bad = || CliError::usage(format!("--yrange must be lo:hi:n, got {spec:?}"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if n == 0 || !(lo.is_finite() && hi.is_finite()) || (n > 1 && !(hi > lo)) {
        return Err(bad());
    }
    Ok((lo, hi, n))
}

/// Absolute strikes for one maturity.
fn strikes_for(
    a: &StrikeArgs,
    params: &ModelParams,
    curve: &ForwardVarianceCurve,
    spot: f64,
    tau: f64,
) -> CliResult<Vec<f64>> {
    if let Some(k) = &a.strikes {
        return Ok(k.clone());
    }
    if let Some(k) = &a.logstrikes {
        return Ok(Strikes::LogStrikes(k.clone()).to_absolute(spot));
    }
    let spec = a.yrange.as_deref().unwrap_or_default();
    let (lo, hi, n) = parse_yrange(spec)?;
    if !(tau > 0.0) {
        return Err(CliError::usage(format!("requires tau > 0, got {tau}")));
    }
    let scale = average_vol_u(curve, 0.0, tau)? / kernel_kappa(params, tau)?;
    let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
    let ks: Vec<f64> = (0..n).map(|i| (lo + i as f64 * step) * scale).collect();
    Ok(Strikes::LogStrikes(ks).to_absolute(spot))
}

fn source(s: Source) -> SmileSource {
    match s {
        Source::Ode => SmileSource::NumericalOde,
        Source::Approx => SmileSource::ClosedFormApprox,
    }
}

fn ode_for(params: &ModelParams, s: SmileSource) -> CliResult<Option<OdeSolution>> {
    Ok(match s {
        SmileSource::NumericalOde => {
            Some(solve_ode(params.hurst(), params.rho(), &OdeOptions::default())?)
        }
        SmileSource::ClosedFormApprox => None,
    })
}

fn mc_config(g: &GlobalArgs, m: &McOptions, hurst: f64, horizon: f64) -> McConfig {
    let mut cfg = McConfig::desk_scale(hurst, horizon, g.seed);
    cfg.n_paths = m.paths;
    if let Some(steps) = m.steps {
        cfg.n_steps = steps;
    }
    cfg.exact_block_width = m.block_width;
    cfg.antithetic = !m.no_antithetic;
    cfg.scheme = match m.scheme {
        SchemeArg::Hybrid => Scheme::Hybrid,
        SchemeArg::Cholesky => Scheme::ExactCholesky,
    };
    cfg.fft_min_steps = m.fft_min_steps;
    cfg.threads = g.threads;
    cfg
}

fn warn_expansion(table: &SmileTable) {
    let m = &table.metadata;
    if m.eta_tau_h_warning {
        eprintln!(
            "warning: eta tau^H = {:.4} >= 1 at tau = {}, outside the formula's accuracy domain",
            m.eta_tau_h, m.tau
        );
    }
}

pub fn ode_solve(g: &GlobalArgs, a: &OdeSolveArgs) -> CliResult<()> {
    let opts = OdeOptions {
        y_max: a.ymax,
        spacing: a.spacing,
        rel_tol: a.tol,
        ..OdeOptions::default()
    };
    let sol = solve_ode(a.hurst, a.rho, &opts)?;
    let closed: Option<fn(f64, f64) -> rough_sabr::Result<f64>> = if a.hurst == 0.5 {
        Some(g_closed_form_half)
    } else if a.hurst == 0.0 {
        Some(g_closed_form_zero)
    } else {
        None
    };
    let deviation = match closed {
        Some(gc) => {
            let mut worst: f64 = 0.0;
            for (y, gn) in sol.y_grid().iter().zip(sol.g_values()) {
                worst = worst.max((gn - gc(a.rho, *y)?).abs());
            }
            Some(worst)
        }
        None => None,
    };
    let out = Output::new(g)?;
    let path = match out.format {
        Format::Csv => out.write("ode.csv", |w| sol.write_csv(w))?,
        Format::Json => {
            let rows: Vec<_> = sol.rows().collect();
            out.json(
                "ode.json",
                &json!({
                    "H": a.hurst,
                    "rho": a.rho,
                    "options": opts,
                    "max_closed_form_deviation": deviation,
                    "rows": rows,
                }),
            )?
        }
    };
    println!("grid_points: {}", sol.y_grid().len());
    println!("y_max: {}", sol.y_max());
    if let Some(d) = deviation {
        println!("max_closed_form_deviation: {d:e}");
    }
    println!("output: {}", path.display());
    Ok(())
}

pub fn smile(g: &GlobalArgs, a: &SmileArgs) -> CliResult<()> {
    let (params, curve) = model(&a.model)?;
    let strikes = strikes_for(&a.strikes, &params, &curve, a.model.spot, a.tau)?;
    let src = source(a.source);
    let sol = ode_for(&params, src)?;
    let req = SmileRequest {
        spot: a.model.spot,
        tau: a.tau,
        strikes: Strikes::Absolute(strikes),
        params,
        curve,
        atm_vol_override: a.atm_vol,
        source: src,
    };
    let table = rough_sabr_smile_with(&req, sol.as_ref())?;
    warn_expansion(&table);
    let out = Output::new(g)?;
    match out.format {
        Format::Csv => {
            out.write("smile.csv", |w| table.write_csv(w))?;
            out.write("smile.json", |w| {
                table.write_metadata_json(&mut *w)?;
                w.write_all(b"\n")?;
                Ok(())
            })?;
        }
        Format::Json => {
            out.json("smile.json", &table)?;
        }
    }
    let m = &table.metadata;
    println!("rows: {}", table.rows.len());
    println!("atm_vol: {}", m.atm_vol);
    println!("eta_tau_h: {}", m.eta_tau_h);
    println!("eta_tauH_warning: {}", m.eta_tau_h_warning);
    Ok(())
}

fn write_mc(out: &Output, est: &McSmileEstimate) -> CliResult<()> {
    match out.format {
        Format::Csv => {
            out.write("mc.csv", |w| est.write_csv(w))?;
            out.write("mc.json", |w| {
                est.write_metadata_json(&mut *w)?;
                w.write_all(b"\n")?;
                Ok(())
            })?;
        }
        Format::Json => {
            out.json("mc.json", est)?;
        }
    }
    Ok(())
}

pub fn mc(g: &GlobalArgs, a: &McArgs) -> CliResult<()> {
    let (params, curve) = model(&a.model)?;
    let strikes = strikes_for(&a.strikes, &params, &curve, a.model.spot, a.tau)?;
    let cfg = mc_config(g, &a.mc, params.hurst(), a.mc.horizon.unwrap_or(a.tau));
    let est = mc_smile(&params, &curve, a.model.spot, a.tau, &strikes, &cfg)?;
    let out = Output::new(g)?;
    write_mc(&out, &est)?;
    let flagged = est.rows.iter().filter(|r| !r.is_ok()).count();
    println!("rows: {}", est.rows.len());
    println!("flagged: {flagged}");
    println!("atm_iv: {}", est.metadata.atm_iv);
    println!("atm_iv_se: {}", est.metadata.atm_iv_se);
    println!("absorbed_fraction: {}", est.metadata.absorbed_fraction);
    Ok(())
}

#[derive(Debug, Serialize)]
struct ValidateRow {
    tau: f64,
    strike: f64,
    k: f64,
    y: f64,
    formula_iv: f64,
    formula_iv_normalized: f64,
    mc_iv: f64,
    mc_iv_se: f64,
    mc_iv_normalized: f64,
    mc_iv_normalized_se: f64,
    diff_normalized: f64,
    z: f64,
    tolerance: f64,
    within_tolerance: bool,
    in_range: bool,
    flag: StrikeFlag,
}

#[derive(Debug, Serialize)]
struct MaturitySummary {
    tau: f64,
    n_steps: usize,
    tau_steps: usize,
    strikes_in_range: usize,
    excluded: usize,
    compared: usize,
    within_tolerance: usize,
    pass_fraction: f64,
    z_within_2_fraction: f64,
    max_abs_normalized_diff: f64,
    passed: bool,
    eta_tau_h: f64,
    #[serde(rename = "eta_tauH_warning")]
    eta_tau_h_warning: bool,
    formula_atm_vol: f64,
    mc_atm_iv: f64,
    mc_atm_iv_se: f64,
    absorbed_fraction: f64,
}

fn join_rows(
    tau: f64,
    a: &ValidateArgs,
    table: &SmileTable,
    est: &McSmileEstimate,
) -> (Vec<ValidateRow>, MaturitySummary) {
    let mut rows = Vec::with_capacity(est.rows.len());
    for (f, m) in table.rows.iter().zip(&est.rows) {
        let diff = f.iv_normalized - m.iv_normalized;
        let se = m.iv_normalized_se;
        let z = if se > 0.0 {
            diff / se
        } else if diff == 0.0 {
            0.0
        } else {
            f64::NAN
        };
        let tolerance = (2.0 * se).max(a.tol_floor);
        rows.push(ValidateRow {
            tau,
            strike: m.strike,
            k: m.k,
            y: m.y,
            formula_iv: f.iv,
            formula_iv_normalized: f.iv_normalized,
            mc_iv: m.iv,
            mc_iv_se: m.iv_se,
            mc_iv_normalized: m.iv_normalized,
            mc_iv_normalized_se: se,
            diff_normalized: diff,
            z,
            tolerance,
            within_tolerance: m.is_ok() && diff.abs() <= tolerance,
            in_range: m.y.abs() <= a.ymax + 1e-12,
            flag: m.flag,
        });
    }
    let in_range: Vec<&ValidateRow> = rows.iter().filter(|r| r.in_range).collect();
    let compared: Vec<&&ValidateRow> = in_range.iter().filter(|r| r.flag == StrikeFlag::Ok).collect();
    let within = compared.iter().filter(|r| r.within_tolerance).count();
    let z_ok = compared.iter().filter(|r| r.z.abs() <= 2.0).count();
    let frac = |n: usize| {
        if compared.is_empty() {
            0.0
        } else {
            n as f64 / compared.len() as f64
        }
    };
    let max_diff = compared
        .iter()
        .map(|r| r.diff_normalized.abs())
        .fold(0.0, f64::max);
    let meta = &table.metadata;
    let pass_fraction = frac(within);
    let summary = MaturitySummary {
        tau,
        n_steps: est.metadata.n_steps,
        tau_steps: est.metadata.tau_steps,
        strikes_in_range: in_range.len(),
        excluded: in_range.len() - compared.len(),
        compared: compared.len(),
        within_tolerance: within,
        pass_fraction,
        z_within_2_fraction: frac(z_ok),
        max_abs_normalized_diff: max_diff,
        passed: !compared.is_empty() && pass_fraction >= a.pass_fraction,
        eta_tau_h: meta.eta_tau_h,
        eta_tau_h_warning: meta.eta_tau_h_warning,
        formula_atm_vol: meta.atm_vol,
        mc_atm_iv: est.metadata.atm_iv,
        mc_atm_iv_se: est.metadata.atm_iv_se,
        absorbed_fraction: est.metadata.absorbed_fraction,
    };
    (rows, summary)
}

pub fn validate(g: &GlobalArgs, a: &ValidateArgs) -> CliResult<()> {
    let (params, curve) = model(&a.model)?;
    if let Some(t) = a.tau.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(CliError::usage(format!("requires tau > 0, got {t}")));
    }
    if !(a.tol_floor >= 0.0) {
        return Err(CliError::usage(format!("--tol-floor must be >= 0, got {}", a.tol_floor)));
    }
    let spot = a.model.spot;
    let src = source(a.source);
    // every strike grid and config is checked before the first simulation
    let mut plans = Vec::with_capacity(a.tau.len());
    for &tau in &a.tau {
        let strikes = strikes_for(&a.strikes, &params, &curve, spot, tau)?;
        let cfg = mc_config(g, &a.mc, params.hurst(), a.mc.horizon.unwrap_or(tau));
        cfg.validate()?;
        cfg.steps_to(tau)?;
        plans.push((tau, strikes, cfg));
    }
    let sol = ode_for(&params, src)?;
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (tau, strikes, cfg) in plans {
        let req = SmileRequest {
            spot,
            tau,
            strikes: Strikes::Absolute(strikes.clone()),
            params: params.clone(),
            curve: curve.clone(),
            atm_vol_override: None,
            source: src,
        };
        let table = rough_sabr_smile_with(&req, sol.as_ref())?;
        warn_expansion(&table);
        let est = mc_smile(&params, &curve, spot, tau, &strikes, &cfg)?;
        let (r, s) = join_rows(tau, a, &table, &est);
        println!(
            "tau {}: pass_fraction {:.4} ({}/{} within tolerance, {} excluded), z_within_2 {:.4}, max_abs_normalized_diff {:.6}, eta_tau_h {:.4}, warning {}, passed {}",
            s.tau,
            s.pass_fraction,
            s.within_tolerance,
            s.compared,
            s.excluded,
            s.z_within_2_fraction,
            s.max_abs_normalized_diff,
            s.eta_tau_h,
            s.eta_tau_h_warning,
            s.passed
        );
        rows.extend(r);
        summaries.push((s, cfg));
    }
    let all_passed = summaries.iter().all(|(s, _)| s.passed);
    let report = json!({
        "params": params.summary(),
        "curve": curve.describe(),
        "spot": spot,
        "source": src,
        "seed": g.seed,
        "tol_floor": a.tol_floor,
        "required_pass_fraction": a.pass_fraction,
        "ymax": a.ymax,
        "passed": all_passed,
        "maturities": summaries.iter().map(|(s, cfg)| json!({"summary": s, "mc_config": cfg})).collect::<Vec<_>>(),
    });
    let out = Output::new(g)?;
    match out.format {
        Format::Csv => {
            out.write("validate.csv", |w| {
                let mut cw = csv::Writer::from_writer(w);
                for r in &rows {
                    cw.serialize(r)?;
                }
                cw.flush()?;
                Ok(())
            })?;
            out.json("validate.json", &report)?;
        }
        Format::Json => {
            let mut report = report;
            report["rows"] = serde_json::to_value(&rows).map_err(rough_sabr::Error::from)?;
            out.json("validate.json", &report)?;
        }
    }
    println!("passed: {all_passed}");
    Ok(())
}

pub fn greeks(a: &GreeksArgs) -> CliResult<()> {
    let convention = match a.convention {
        ConventionArg::Bs => Convention::BlackScholes,
        ConventionArg::Bachelier => Convention::Bachelier,
    };
    let implied = match a.price {
        Some(p) => Some(implied_vol(&OptionQuote::call(a.spot, a.strike, a.tau, p, convention))?),
        None => None,
    };
    let sigma = a
        .sigma
        .or(implied)
        .ok_or_else(|| CliError::usage("greeks requires --sigma or --price"))?;
    let (price, greeks) = match convention {
        Convention::BlackScholes => (
            bs_price(a.spot, a.strike, a.tau, sigma)?,
            bs_greeks(a.spot, a.strike, a.tau, sigma)?,
        ),
        Convention::Bachelier => (
            bachelier_price(a.spot, a.strike, a.tau, sigma)?,
            bachelier_greeks(a.spot, a.strike, a.tau, sigma)?,
        ),
    };
    let report = json!({
        "convention": match convention { Convention::BlackScholes => "black_scholes", Convention::Bachelier => "bachelier" },
        "spot": a.spot,
        "strike": a.strike,
        "tau": a.tau,
        "sigma": sigma,
        "price": price,
        "implied_vol": implied,
        "greeks": greeks,
    });
    println!("{}", serde_json::to_string_pretty(&report).map_err(rough_sabr::Error::from)?);
    Ok(())
}
