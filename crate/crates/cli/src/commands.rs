use std::fs;
use std::path::{Path, PathBuf};

use poolcheck::diagnostics::{build_c, m_sparse_eigenvalues_seeded};
use poolcheck::inference::{select_alpha, selected_pooling_test, AlphaSelectionOptions};
use poolcheck::io::{load_csv, read_csv_header, read_summary, write_summary, CsvSpec};
use poolcheck::plot::LineChart;
use poolcheck::pooltest::{bias_variance_diagnostics, estimate_tau, pooling_test, rereference};
use poolcheck::regress::summarize;
use poolcheck::sim::{run_lasso_paths, run_power_study, LassoStudyOptions, Scenario, ScenarioSpec, SparsePattern};
use poolcheck::smslasso::{fit, solution_path, CvOptions, FitOptions, PenaltySpec, DEFAULT_SUPPORT_TOL};
use poolcheck::{Error, Result, SiteDataset, SiteSummary};
use serde::Serialize;
use serde_json::json;

use crate::{Cli, Command, CsvArgs, SelectionArgs};

fn emit<T: Serialize>(json: bool, value: &T) -> Result<()> {
    let text = if json {
        serde_json::to_string(value)?
    } else {
        serde_json::to_string_pretty(value)?
    };
    println!("{text}");
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn load_site(path: &Path, columns: &CsvArgs, site_id: Option<&str>) -> Result<SiteDataset> {
    let header = read_csv_header(path)?;
    let id = site_id.map_or_else(|| stem(path), String::from);
    let spec = CsvSpec::all_predictors(id, &header, &columns.response, &columns.confounds, &columns.ignore);
    load_csv(path, &spec)
}

fn load_sites(paths: &[PathBuf], columns: &CsvArgs) -> Result<Vec<SiteDataset>> {
    paths.iter().map(|p| load_site(p, columns, None)).collect()
}

fn read_summaries(paths: &[PathBuf]) -> Result<Vec<SiteSummary>> {
    paths.iter().map(|p| read_summary(p)).collect()
}

fn selection_options(args: &SelectionArgs) -> AlphaSelectionOptions {
    let mut o = AlphaSelectionOptions::default();
    o.mss.seed = args.seed;
    o.mss.n_splits = args.splits;
    o.mss.alpha_fwer = args.fwer;
    o.lasso.seed = args.seed;
    o.jaccard_threshold = args.jaccard_threshold;
    o
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    let json = cli.json;
    match &cli.command {
        Command::FitSite {
            csv,
            columns,
            site_id,
            intercept,
            out,
        } => {
            let mut data = load_site(csv, columns, site_id.as_deref())?;
            if *intercept {
                data = data.with_intercept();
            }
            let summary = summarize(&data)?;
            write_summary(&summary, out)?;
            emit(
                json,
                &json!({
                    "site_id": summary.site_id,
                    "n": summary.n,
                    "p": summary.p(),
                    "sigma_hat": summary.sigma_hat,
                    "used_conditional": summary.used_conditional,
                    "summary_file": out.display().to_string(),
                }),
            )
        }
        Command::PoolTest {
            summaries,
            significance,
            reference,
            tau,
            subset,
        } => {
            let mut s = read_summaries(summaries)?;
            if *subset {
                if let Some(bad) = s.iter().find(|x| !x.used_conditional) {
                    return Err(Error::IncompatibleSummaries(format!(
                        "--subset needs conditional covariances but site {} was fitted without confounds",
                        bad.site_id
                    )));
                }
            }
            if *reference != 0 {
                s = rereference(&s, *reference)?;
            }
            let result = pooling_test(&s, *significance, tau.as_deref())?;
            emit(json, &result)
        }
        Command::MseBounds { summaries, tau } => {
            let s = read_summaries(summaries)?;
            let tau = match tau {
                Some(t) => t.clone(),
                None => estimate_tau(&s)?,
            };
            let bounds = bias_variance_diagnostics(&s, &tau)?;
            emit(json, &json!({ "tau": tau, "bounds": bounds }))
        }
        Command::LassoFit {
            sites,
            columns,
            alpha,
            lambda,
            standardize,
            intercept,
            out,
        } => {
            let data = load_sites(sites, columns)?;
            let opts = FitOptions {
                standardize: *standardize,
                intercept: *intercept,
                ..FitOptions::default()
            };
            let f = fit(&data, &PenaltySpec::new(*lambda, *alpha)?, &opts)?;
            let m = f.coef.as_matrix();
            if let Some(path) = out {
                let mut text = String::from("site");
                for name in &data[0].feature_names {
                    text.push(',');
                    text.push_str(name);
                }
                text.push('\n');
                for (i, d) in data.iter().enumerate() {
                    text.push_str(&d.site_id);
                    for v in m.row(i).iter() {
                        text.push_str(&format!(",{v:.16e}"));
                    }
                    text.push('\n');
                }
                write_file(path, &text)?;
            }
            let stats = f.coef.support_stats(DEFAULT_SUPPORT_TOL);
            let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
            emit(
                json,
                &json!({
                    "alpha": alpha,
                    "lambda": lambda,
                    "objective": f.objective,
                    "iterations": f.iterations,
                    "converged": f.converged,
                    "residual": f.residual,
                    "intercepts": f.intercepts,
                    "support": stats,
                    "coef": rows,
                }),
            )
        }
        Command::LassoPath {
            sites,
            columns,
            alpha,
            lambda,
            n_lambdas,
            cv_folds,
            seed,
            standardize,
            intercept,
            out,
        } => {
            let data = load_sites(sites, columns)?;
            let opts = FitOptions {
                standardize: *standardize,
                intercept: *intercept,
                ..FitOptions::default()
            };
            let grid = match lambda {
                Some(g) => g.clone(),
                None => {
                    let lmax = poolcheck::smslasso::lambda_max(&data, *alpha, &opts)?;
                    poolcheck::smslasso::default_lambda_grid(lmax, *n_lambdas, 1e-3)
                }
            };
            let cv = (*cv_folds > 0).then_some(CvOptions {
                folds: *cv_folds,
                seed: *seed,
            });
            let path = solution_path(&data, *alpha, Some(grid), cv, &opts)?;
            let stats: Vec<_> = path.fits.iter().map(|f| f.support_stats(DEFAULT_SUPPORT_TOL)).collect();
            if let Some(p) = out {
                let mut text = String::from("lambda,objective,converged,s_h,s_p,cv_mean,cv_se\n");
                for (l, lam) in path.lambdas.iter().enumerate() {
                    let (m, s) = path
                        .cv
                        .as_ref()
                        .map_or((String::new(), String::new()), |c| {
                            (format!("{:.16e}", c.mean[l]), format!("{:.16e}", c.se[l]))
                        });
                    text.push_str(&format!(
                        "{lam:.16e},{:.16e},{},{},{},{m},{s}\n",
                        path.objectives[l], path.converged[l], stats[l].s_h, stats[l].s_p
                    ));
                }
                write_file(p, &text)?;
            }
            emit(
                json,
                &json!({
                    "alpha": path.alpha,
                    "lambdas": path.lambdas,
                    "objectives": path.objectives,
                    "converged": path.converged,
                    "s_h": stats.iter().map(|s| s.s_h).collect::<Vec<_>>(),
                    "s_p": stats.iter().map(|s| s.s_p).collect::<Vec<_>>(),
                    "cv": path.cv,
                    "best_lambda": path.best_lambda(),
                }),
            )
        }
        Command::SelectAlpha {
            sites,
            columns,
            selection,
        } => {
            let data = load_sites(sites, columns)?;
            let report = select_alpha(&data, selection.alpha_grid.clone(), &selection_options(selection))?;
            emit(json, &report)
        }
        Command::SelectedPoolTest {
            sites,
            columns,
            selection,
            significance,
        } => {
            let data = load_sites(sites, columns)?;
            let result = selected_pooling_test(&data, *significance, &selection_options(selection))?;
            emit(json, &result)
        }
        Command::Simulate {
            scenario,
            seed,
            replicates,
            n_grid,
            cv_folds,
            n_lambdas,
            out_dir,
        } => {
            let scenario: Scenario = scenario.parse()?;
            fs::create_dir_all(out_dir)?;
            let name = scenario.as_str();
            match scenario {
                Scenario::SharedBeta | Scenario::ConfoundedBeta => {
                    let mut spec = ScenarioSpec::new(scenario, *seed);
                    spec.replicates = *replicates;
                    if let Some(g) = n_grid {
                        spec.n_grid = g.clone();
                    }
                    let report = run_power_study(&spec)?;
                    write_file(&out_dir.join(format!("{name}_power.csv")), &report.to_csv())?;
                    let n = |r: &poolcheck::sim::PowerRow| r.n as f64;
                    let mut mse = LineChart::new("MSE of the coefficient estimate on site 1", "n per site", "MSE")
                        .series("single site", report.rows.iter().map(|r| (n(r), r.mse_single)).collect())
                        .series("pooled", report.rows.iter().map(|r| (n(r), r.mse_pooled)).collect());
                    mse.log_x = true;
                    mse.log_y = true;
                    write_file(&out_dir.join(format!("{name}_mse.svg")), &mse.to_svg())?;
                    let mut acc = LineChart::new("Acceptance rate of the pooling test", "n per site", "rate")
                        .series("accept", report.rows.iter().map(|r| (n(r), r.acceptance_rate)).collect());
                    acc.log_x = true;
                    write_file(&out_dir.join(format!("{name}_acceptance.svg")), &acc.to_svg())?;
                    emit(json, &report)
                }
                Scenario::FewShared | Scenario::MostShared => {
                    let pattern = if scenario == Scenario::FewShared {
                        SparsePattern::FewShared
                    } else {
                        SparsePattern::MostShared
                    };
                    let opts = LassoStudyOptions {
                        cv_folds: *cv_folds,
                        n_lambdas: *n_lambdas,
                        ..LassoStudyOptions::default()
                    };
                    let study = run_lasso_paths(pattern, &[0.0, 0.05, 0.95, 1.0], *seed, &opts)?;
                    write_file(&out_dir.join(format!("{name}_cv_paths.csv")), &study.to_csv())?;
                    let mut counts = String::from("alpha,always_active\n");
                    for (a, c) in &study.selection.always_active_count_by_alpha {
                        counts.push_str(&format!("{a:.16e},{c}\n"));
                    }
                    write_file(&out_dir.join(format!("{name}_alpha_counts.csv")), &counts)?;
                    let mut chart = LineChart::new("Cross-validation error along the path", "lambda", "CV error");
                    chart.log_x = true;
                    for r in &study.rows {
                        let label = if r.chosen {
                            format!("alpha={} (chosen)", r.alpha)
                        } else {
                            format!("alpha={}", r.alpha)
                        };
                        let pts = r.lambdas.iter().copied().zip(r.cv_mean.iter().copied()).collect();
                        chart = chart.series(&label, pts);
                    }
                    write_file(&out_dir.join(format!("{name}_cv_paths.svg")), &chart.to_svg())?;
                    emit(json, &study)
                }
                Scenario::Custom => Err(Error::InvalidArgument(
                    "the custom scenario is available through the library only".into(),
                )),
            }
        }
        Command::MsparseEigen {
            sites,
            columns,
            m,
            budget,
            seed,
        } => {
            let data = load_sites(sites, columns)?;
            let c = build_c(&data)?;
            let report = m_sparse_eigenvalues_seeded(&c, *m, *budget, *seed)?;
            emit(json, &report)
        }
    }
}
