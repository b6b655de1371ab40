use std::path::{Path, PathBuf};

use rsl_core::catalog::{reference_formula, reference_names};
use rsl_core::constraints::validate_structure;
use rsl_core::dataio::{dr_features, kfold_split, load_conditions, Dataset, Metrics, TargetTransform};
use rsl_core::fatigue_baselines::{predict_dataset, BaselineOptions, Criterion};
use rsl_core::policy::PolicyParams;
use rsl_core::symlib::{evaluate, parse_infix, parse_line, render, to_line, Expression, Features, Library};
use rsl_core::trainer::{refit_structure, run_search_with, write_stats_csv};
use rsl_core::{compute_metrics, load_dataset, MaterialProperties, RunConfig};

use crate::artifacts::{config_hash, metrics_report, now_unix, write_scatter, OutDir, RunManifest};
use crate::error::{CliError, CliResult};
use crate::{BaselineArgs, CrossvalArgs, DataArgs, PredictArgs, RefitArgs, SearchArgs};

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub threads: usize,
}

impl Context {
    fn seed(&self) -> u64 {
        self.cfg.trainer.seed
    }

    fn manifest(&self, command: &str, dataset: Option<&str>, material: Option<&str>) -> RunManifest {
        RunManifest {
            command: command.into(),
            config_hash: config_hash(&self.cfg),
            seed: self.seed(),
            threads: self.threads,
            dataset: dataset.map(String::from),
            material: material.map(String::from),
            units: self.cfg.units.features.to_string(),
            timestamp_unix: now_unix(),
            artifacts: Vec::new(),
        }
    }

    fn library(&self) -> CliResult<Library> {
        Ok(self.cfg.library.build()?)
    }
}

fn material(name: &str) -> CliResult<MaterialProperties> {
    Ok(MaterialProperties::load(name)?)
}

struct Loaded {
    data: Dataset,
}

fn load_inputs(ctx: &Context, input: &DataArgs) -> CliResult<Loaded> {
    let mat = material(&input.material)?;
    let records = load_dataset(&input.data)?;
    if records.is_empty() {
        return Err(CliError::Data(format!("dataset {:?} has no records", input.data)));
    }
    let data = ctx.cfg.library.project(&Dataset::from_records(&records, &mat, ctx.cfg.units.features));
    Ok(Loaded { data })
}

struct ParsedExpr {
    expr: Expression,
    has_constants: bool,
}

/// Accepts a reference formula name, a serialized line, prefix symbols,
/// infix text, or a path to a file holding one of those.
fn parse_expression(text: &str, lib: &Library) -> CliResult<ParsedExpr> {
    let text = text.trim();
    let path = Path::new(text);
    if !text.is_empty() && path.is_file() {
        let body = std::fs::read_to_string(path)?;
        let line = body
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty() && !l.starts_with('#'))
            .ok_or_else(|| CliError::Structure(format!("{} holds no expression", path.display())))?;
        return parse_expression(line, lib);
    }
    let bad = |e: rsl_core::SymError| CliError::Structure(format!("{text:?}: {e}"));
    if let Some(expr) = reference_formula(text, lib).map_err(bad)? {
        return Ok(ParsedExpr { expr, has_constants: true });
    }
    if text.contains("tokens=") {
        let parsed = parse_line(text, lib).map_err(bad)?;
        let has_constants = parsed.constants.is_some();
        return Ok(ParsedExpr { expr: parsed.into_expression(lib).map_err(bad)?, has_constants });
    }
    if !text.is_empty() && text.split_whitespace().all(|s| lib.by_symbol(s).is_some()) {
        let seq = lib.parse_symbols(text).map_err(bad)?;
        return Ok(ParsedExpr { expr: Expression::structure(lib, seq).map_err(bad)?, has_constants: false });
    }
    let expr = parse_infix(text, lib).map_err(|e| {
        CliError::Structure(format!(
            "{text:?}: {e}; expected a reference name ({}), a tokens= line, prefix symbols or infix text",
            reference_names().join(", ")
        ))
    })?;
    Ok(ParsedExpr { expr, has_constants: true })
}

fn check_structure(ctx: &Context, expr: &Expression, lib: &Library) -> CliResult<()> {
    validate_structure(expr, lib, &ctx.cfg.constraints).map_err(|v| {
        let list: Vec<String> = v.iter().map(|x| format!("{} ({})", x, x.rule())).collect();
        CliError::Structure(format!("structure violates constraints: {}", list.join("; ")))
    })
}

fn predict_cycles(expr: &Expression, lib: &Library, features: &Features, target: TargetTransform) -> CliResult<Vec<f64>> {
    let out = evaluate(expr, lib, features).map_err(|e| CliError::Structure(e.to_string()))?;
    Ok(out.into_iter().map(|o| target.to_cycles(o)).collect())
}

fn print_metrics(label: &str, m: &Metrics) {
    println!(
        "{label}: rmse {:.4e} cycles, r2 {:.5}, within 2x {:.1}%, within 3x {:.1}%, excluded {}",
        m.rmse_cycles,
        m.r2,
        100.0 * m.frac_within_2x,
        100.0 * m.frac_within_3x,
        m.n_excluded
    );
}

pub fn search(ctx: &Context, args: &SearchArgs) -> CliResult<()> {
    let lib = ctx.library()?;
    let inp = load_inputs(ctx, &args.input)?;
    let setup = ctx.cfg.search_setup()?;
    let outcome = run_search_with(&setup, &inp.data, |s| {
        eprintln!(
            "epoch {:>3}  batch {:>6}  elites {:>4}  best rmse {:.4e}  best r2 {:.5}",
            s.epoch, s.batch_size, s.n_elite, s.best_rmse, s.best_r2
        )
    })
    .map_err(|e| match e {
        rsl_core::TrainError::InvalidConfig(m) => CliError::Config(m),
        e => CliError::Other(e.into()),
    })?;

    let mut out = OutDir::create(&ctx.out)?;
    let mut stats = Vec::new();
    write_stats_csv(&mut stats, &outcome.stats).map_err(|e| CliError::Other(e.into()))?;
    out.write("stats.csv", stats)?;

    let hof = outcome.hall_of_fame.entries();
    let mut lines = String::new();
    let mut w = out.csv("hall_of_fame.csv")?;
    w.write_record(["rank", "rmse", "r2", "reward", "expression", "serialized"])?;
    for (i, c) in hof.iter().enumerate() {
        let line = to_line(&c.expression, &lib);
        lines.push_str(&line);
        lines.push('\n');
        w.write_record([
            (i + 1).to_string(),
            c.rmse.to_string(),
            c.r2.to_string(),
            c.reward.to_string(),
            c.rendered.clone(),
            line,
        ])?;
    }
    w.flush()?;
    out.write("hall_of_fame.txt", lines)?;
    let mut ckpt = Vec::new();
    write_policy(&outcome.params, &mut ckpt)?;
    out.write("policy.ckpt", ckpt)?;

    if let Some(best) = outcome.hall_of_fame.best() {
        let pred = predict_cycles(&best.expression, &lib, &inp.data.features, ctx.cfg.units.target_transform)?;
        let m = compute_metrics(&inp.data.observed, &pred)?;
        out.write("metrics.txt", metrics_report(&m))?;
        write_scatter(&mut out, "scatter.csv", &inp.data.observed, &pred)?;
        println!("best: {}", best.rendered);
        print_metrics("best", &m);
    } else {
        println!("no finite candidate found");
    }
    out.finish(ctx.manifest("search", Some(&args.input.data), Some(&args.input.material)), &ctx.cfg)
}

fn write_policy(p: &PolicyParams, buf: &mut Vec<u8>) -> CliResult<()> {
    p.write_checkpoint(buf).map_err(|e| CliError::Other(e.into()))
}

pub fn refit(ctx: &Context, args: &RefitArgs) -> CliResult<()> {
    let lib = ctx.library()?;
    let parsed = parse_expression(&args.structure, &lib)?;
    check_structure(ctx, &parsed.expr, &lib)?;
    let inp = load_inputs(ctx, &args.input)?;
    let start = parsed.has_constants.then_some(parsed.expr.constants.as_slice());
    let fit = refit_structure(&parsed.expr, &lib, &inp.data, &ctx.cfg.fit_config(), ctx.seed(), start)
        .map_err(|e| CliError::Other(e.into()))?;
    let fitted = parsed.expr.with_constants(fit.constants.clone());
    let pred = predict_cycles(&fitted, &lib, &inp.data.features, ctx.cfg.units.target_transform)?;
    let m = compute_metrics(&inp.data.observed, &pred)?;

    let mut out = OutDir::create(&ctx.out)?;
    let rendered = render(&fitted, &lib).map_err(|e| CliError::Structure(e.to_string()))?;
    out.write("expression.txt", format!("{}\n{}\n", to_line(&fitted, &lib), rendered))?;
    out.write("fit.json", serde_json::to_string_pretty(&fit).map_err(anyhow::Error::from)? + "\n")?;
    out.write("metrics.txt", metrics_report(&m))?;
    write_scatter(&mut out, "scatter.csv", &inp.data.observed, &pred)?;
    println!("fitted: {rendered}");
    print_metrics("refit", &m);
    out.finish(ctx.manifest("refit", Some(&args.input.data), Some(&args.input.material)), &ctx.cfg)
}

pub fn predict(ctx: &Context, args: &PredictArgs) -> CliResult<()> {
    let lib = ctx.library()?;
    let parsed = parse_expression(&args.expression, &lib)?;
    if !parsed.has_constants && !parsed.expr.constants.is_empty() {
        return Err(CliError::Structure("the expression needs fitted constants to predict".into()));
    }
    let mat = material(&args.material)?;
    let conds = load_conditions(&args.conditions)?;
    let units = ctx.cfg.units.features;
    let rows: Vec<Vec<f64>> = conds
        .iter()
        .map(|c| dr_features(c.eps_a_pct, c.gamma_a_pct, c.sigma_a_mpa, c.tau_a_mpa, &mat, units).to_vec())
        .collect();
    let all = Dataset { features: Features::from_rows(&rows, 4).expect("four columns"), observed: vec![1.0; rows.len()] };
    let data = ctx.cfg.library.project(&all);
    let pred = if conds.is_empty() {
        Vec::new()
    } else {
        predict_cycles(&parsed.expr, &lib, &data.features, ctx.cfg.units.target_transform)?
    };

    let mut out = OutDir::create(&ctx.out)?;
    let mut w = out.csv("predictions.csv")?;
    w.write_record(["condition", "omega_profile", "eps_a", "gamma_a", "sigma_over_E", "tau_over_G", "nf_predicted", "flag"])?;
    for ((c, row), nf) in conds.iter().zip(&rows).zip(&pred) {
        let flag = if c.zero_load() {
            "zero_load"
        } else if !nf.is_finite() {
            "non_finite"
        } else if *nf < 0.5 {
            "out_of_range"
        } else {
            "ok"
        };
        w.write_record([
            c.condition.clone(),
            c.omega_profile.clone(),
            row[0].to_string(),
            row[1].to_string(),
            row[2].to_string(),
            row[3].to_string(),
            nf.to_string(),
            flag.to_string(),
        ])?;
        println!("{:<6} {:<20} N_f = {:.4e}  [{flag}]", c.condition, c.omega_profile, nf);
    }
    w.flush()?;
    drop(w);
    out.finish(ctx.manifest("predict", Some(&args.conditions), Some(&args.material)), &ctx.cfg)
}

pub fn baseline(ctx: &Context, args: &BaselineArgs) -> CliResult<()> {
    let criteria: Vec<Criterion> = if args.criterion == "all" {
        Criterion::ALL.to_vec()
    } else {
        vec![args.criterion.parse::<Criterion>()?]
    };
    let mat = material(&args.input.material)?;
    let records = load_dataset(&args.input.data)?;
    let observed: Vec<f64> = records.iter().map(|r| r.nf_cycles as f64).collect();
    let opts = BaselineOptions { whs_k: args.whs_k, bm_s0: args.bm_s0, ..Default::default() };

    let mut out = OutDir::create(&ctx.out)?;
    let mut summary = Vec::new();
    for c in criteria {
        let p = predict_dataset(c, &records, &mat, &opts);
        let lives = p.lives();
        let m = compute_metrics(&observed, &lives)?;
        let mut w = out.csv(&format!("predictions_{}.csv", c.name()))?;
        w.write_record([
            "index",
            "observed",
            "predicted",
            "flag",
            "max_shear_amp",
            "normal_strain_range",
            "max_normal_stress",
            "plane_angle_deg",
        ])?;
        for (i, r) in p.records.iter().enumerate() {
            let flag = match &r.outcome {
                Ok(_) => "ok".to_string(),
                Err(e) => format!("unsolved: {e}"),
            };
            w.write_record([
                i.to_string(),
                observed[i].to_string(),
                lives[i].to_string(),
                flag,
                r.plane.max_shear_amp.to_string(),
                r.plane.normal_strain_range.to_string(),
                r.plane.max_normal_stress.to_string(),
                r.plane.plane_angle_deg.to_string(),
            ])?;
        }
        w.flush()?;
        let mut report = metrics_report(&m);
        if let Some(k) = p.whs_k {
            report.push_str(&format!("whs_k = {k}\n"));
        }
        out.write(&format!("metrics_{}.txt", c.name()), report)?;
        print_metrics(c.name(), &m);
        summary.push((c, m, p.whs_k));
    }
    if summary.len() > 1 {
        let mut w = out.csv("summary.csv")?;
        w.write_record(["criterion", "rmse_cycles", "r2", "frac_within_2x", "frac_within_3x", "n_excluded", "whs_k"])?;
        for (c, m, k) in &summary {
            w.write_record([
                c.name().to_string(),
                m.rmse_cycles.to_string(),
                m.r2.to_string(),
                m.frac_within_2x.to_string(),
                m.frac_within_3x.to_string(),
                m.n_excluded.to_string(),
                k.map_or_else(String::new, |k| k.to_string()),
            ])?;
        }
        w.flush()?;
    }
    out.finish(ctx.manifest("baseline", Some(&args.input.data), Some(&args.input.material)), &ctx.cfg)
}

pub fn crossval(ctx: &Context, args: &CrossvalArgs) -> CliResult<()> {
    let lib = ctx.library()?;
    let parsed = parse_expression(&args.structure, &lib)?;
    check_structure(ctx, &parsed.expr, &lib)?;
    let inp = load_inputs(ctx, &args.input)?;
    let n = inp.data.len();
    let folds = kfold_split(n, args.k, ctx.seed())?;
    let start = parsed.has_constants.then_some(parsed.expr.constants.as_slice());
    let fit_cfg = ctx.cfg.fit_config();

    let mut pooled = vec![f64::NAN; n];
    let mut fold_of = vec![usize::MAX; n];
    let mut out = OutDir::create(&ctx.out)?;
    let mut fw = out.csv("folds.csv")?;
    fw.write_record(["fold", "n_train", "n_validation", "train_rmse", "train_r2", "constants"])?;
    for (f, fold) in folds.iter().enumerate() {
        let train = inp.data.subset(&fold.train);
        let val = inp.data.subset(&fold.validation);
        let fit = refit_structure(&parsed.expr, &lib, &train, &fit_cfg, ctx.seed(), start)
            .map_err(|e| CliError::Other(e.into()))?;
        let fitted = parsed.expr.with_constants(fit.constants.clone());
        let pred = predict_cycles(&fitted, &lib, &val.features, ctx.cfg.units.target_transform)?;
        for (&i, p) in fold.validation.iter().zip(pred) {
            pooled[i] = p;
            fold_of[i] = f;
        }
        let consts: Vec<String> = fit.constants.iter().map(f64::to_string).collect();
        fw.write_record([
            f.to_string(),
            fold.train.len().to_string(),
            fold.validation.len().to_string(),
            fit.rmse.to_string(),
            fit.r2.to_string(),
            consts.join(";"),
        ])?;
    }
    fw.flush()?;
    drop(fw);
    let m = compute_metrics(&inp.data.observed, &pooled)?;
    let mut w = out.csv("crossval.csv")?;
    w.write_record(["record", "fold", "observed", "predicted"])?;
    for i in 0..n {
        w.write_record([i.to_string(), fold_of[i].to_string(), inp.data.observed[i].to_string(), pooled[i].to_string()])?;
    }
    w.flush()?;
    drop(w);
    out.write("metrics.txt", metrics_report(&m))?;
    print_metrics(&format!("{}-fold pooled validation", args.k), &m);
    out.finish(ctx.manifest("crossval", Some(&args.input.data), Some(&args.input.material)), &ctx.cfg)
}
