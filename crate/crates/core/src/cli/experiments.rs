//! The four experiments, each returning its tables and summary in memory.

use std::sync::Arc;

use nalgebra::DVector;
use serde_json::{json, Value};

use super::config::{Experiment, RunConfig};
use super::output::{fmt_f64, RunOutput, Table};
use super::CliError;
use crate::error::PmmError;
use crate::inverse::pseudo_marginal::{
    credible_interval, pm_mcmc, AcInverseProblem, ChainParams, CoarseCache, PluginEstimator, PmChain, PmMcmcConfig,
    PnEstimator,
};
use crate::inverse::{grid_posterior, plugin_loglik, pn_loglik, GridPosterior, NoiseModel, ThetaPrior};
use crate::kernels::{Kernel, Point};
use crate::linalg::RngStream;
use crate::pmm::{convergence_experiment, solve_forward, solve_forward_shared, ForwardProblem};
use crate::problems::allen_cahn::{ac_deflated_solve, Design2D, GridSolution, DELTA_MAX, DELTA_MIN};
use crate::problems::poisson::{generate_data, uniform_grid_1d, DesignRule, Poisson1D};

// RNG stream ids; every random quantity has its own stream.
const STREAM_SAMPLES: u64 = 1;
const STREAM_DATA: u64 = 2;
const STREAM_SOLVE: u64 = 3;
const STREAM_FINE: u64 = 4;
const STREAM_PN_CHAIN: u64 = 5;
const STREAM_PLUGIN_CHAIN: u64 = 6;
const CACHE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

fn numerical(stage: &'static str) -> impl Fn(PmmError) -> CliError {
    move |source| CliError::Numerical { stage, source }
}

pub fn run_experiment(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    match cfg.experiment {
        Experiment::ForwardDemo => run_forward_demo(cfg),
        Experiment::Converge => run_converge(cfg),
        Experiment::Inverse1d => run_inverse_1d(cfg),
        Experiment::AllenCahn => run_allen_cahn(cfg),
    }
}

fn kernel_from(cfg: &RunConfig) -> Result<Kernel, CliError> {
    let ell: f64 = cfg.get("ell")?;
    let kernel = match cfg.get::<String>("kernel")?.as_str() {
        "greens" => Kernel::greens(ell, cfg.get("quadrature_nodes")?),
        _ => Kernel::sqexp(ell, 1),
    };
    kernel.map_err(numerical("kernel construction"))
}

fn design_rule(cfg: &RunConfig, ms: &[usize]) -> Result<DesignRule, CliError> {
    Ok(match cfg.get::<String>("design")?.as_str() {
        "uniform" => DesignRule::Uniform,
        _ => DesignRule::Nested { finest: *ms.last().expect("validated non-empty") },
    })
}

fn forward_choices(cfg: &RunConfig) -> Result<Value, CliError> {
    Ok(json!({
        "kernel": cfg.get::<String>("kernel")?,
        "greens_kernel_forcing_prior": "squared exponential with length-scale ell",
        "design_rule": cfg.get::<String>("design")?,
        "boundary_design": "{0, 1}",
        "jitter": "shared across the design sequence, relative to the unit-diagonal Gram",
    }))
}

pub fn run_forward_demo(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let ms: Vec<usize> = cfg.get_list("m_list")?;
    let kernel = kernel_from(cfg)?;
    let problem =
        Poisson1D::new(cfg.get("theta")?).map_err(numerical("problem setup"))?.with_design(design_rule(cfg, &ms)?);
    let eval = uniform_grid_1d(cfg.get("n_eval")?);
    let n_samples: usize = cfg.get("n_samples")?;
    let sets = ms
        .iter()
        .map(|&m| problem.observation_blocks(m, &kernel))
        .collect::<Result<Vec<_>, _>>()
        .map_err(numerical("observation blocks"))?;
    let posts = solve_forward_shared(&sets, &kernel).map_err(numerical("forward solve"))?;

    let mut header = vec!["m".to_string(), "x".to_string()];
    header.extend((1..=n_samples).map(|i| format!("sample_{i}")));
    let mut samples = Table::new(&header);
    let mut mean_cov = Table::new(&["m", "x", "mean", "var", "exact"]);
    let mut per_m = Vec::new();
    let root = RngStream::new(cfg.seed, STREAM_SAMPLES);
    for (&m, post) in ms.iter().zip(&posts) {
        let mean = post.posterior_mean(&eval).map_err(numerical("posterior mean"))?;
        let var = post.posterior_var(&eval).map_err(numerical("posterior variance"))?;
        let paths =
            post.sample_paths(&eval, n_samples, &mut root.substream(m as u64)).map_err(numerical("sampling"))?;
        for (i, x) in eval.iter().enumerate() {
            let mut row = vec![m.to_string(), fmt_f64(x.x[0])];
            row.extend(paths.iter().map(|p| fmt_f64(p[i])));
            samples.push(row);
            mean_cov.push(vec![
                m.to_string(),
                fmt_f64(x.x[0]),
                fmt_f64(mean[i]),
                fmt_f64(var[i]),
                fmt_f64(problem.exact_solution(x)),
            ]);
        }
        per_m.push(json!({
            "m": m,
            "max_variance": var.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            "jitter": post.system().jitter_used(),
        }));
    }
    Ok(RunOutput {
        tables: vec![("samples.csv".into(), samples), ("mean_cov.csv".into(), mean_cov)],
        results: json!({ "designs": per_m }),
        choices: forward_choices(cfg)?,
    })
}

pub fn run_converge(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let ms: Vec<usize> = cfg.get_list("m_list")?;
    let kernel = kernel_from(cfg)?;
    let problem =
        Poisson1D::new(cfg.get("theta")?).map_err(numerical("problem setup"))?.with_design(design_rule(cfg, &ms)?);
    let eval = uniform_grid_1d(cfg.get("n_eval")?);
    let rows = convergence_experiment(&problem, &kernel, &ms, &eval).map_err(numerical("convergence study"))?;
    let mut t = Table::new(&["m", "h", "err_l2_rel", "cov_trace"]);
    for r in &rows {
        t.push(vec![r.m.to_string(), fmt_f64(r.h), fmt_f64(r.err_l2_rel), fmt_f64(r.cov_trace)]);
    }
    let mut choices = forward_choices(cfg)?;
    choices["error_norm"] = json!("relative discrete L2 on n_eval equispaced points of [0, 1]");
    choices["fill_distance_probe"] = json!("10000 equispaced points");
    Ok(RunOutput { tables: vec![("convergence.csv".into(), t)], results: json!({ "rows": rows }), choices })
}

fn grid_summary(p: &GridPosterior) -> Value {
    json!({ "mean": p.mean(), "std": p.std(), "mode": p.mode() })
}

pub fn run_inverse_1d(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let ms: Vec<usize> = cfg.get_list("m_list")?;
    let kernel = kernel_from(cfg)?;
    let rule = design_rule(cfg, &ms)?;
    let (theta0, sigma): (f64, f64) = (cfg.get("theta0")?, cfg.get("sigma")?);
    let locs: Vec<Point> = cfg.get_list::<f64>("data_x")?.into_iter().map(Point::d1).collect();
    let (lo, hi): (f64, f64) = (cfg.get("theta_min")?, cfg.get("theta_max")?);
    let n: usize = cfg.get("grid_n")?;
    let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let prior = ThetaPrior::Uniform { lo, hi };
    let y = DVector::from_vec(
        generate_data(theta0, &locs, sigma, &mut RngStream::new(cfg.seed, STREAM_DATA))
            .map_err(numerical("data generation"))?,
    );
    let noise = NoiseModel::iid(sigma, locs.len()).map_err(numerical("noise model"))?;

    let mut pmm_t = Table::new(&["m", "theta", "density"]);
    let mut plug_t = Table::new(&["m", "theta", "density"]);
    let mut per_m = Vec::new();
    for &m in &ms {
        let forward = |theta: f64| {
            let blocks = Poisson1D::new(theta)?.with_design(rule).observation_blocks(m, &kernel)?;
            solve_forward(&blocks, &kernel)
        };
        let pmm = grid_posterior(&grid, &prior, |t| pn_loglik(&y, &forward(t)?, &locs, &noise))
            .map_err(numerical("PN grid posterior"))?;
        let plug = grid_posterior(&grid, &prior, |t| plugin_loglik(&y, &forward(t)?.posterior_mean(&locs)?, &noise))
            .map_err(numerical("plug-in grid posterior"))?;
        for (t, p) in [(&mut pmm_t, &pmm), (&mut plug_t, &plug)] {
            for (th, d) in p.theta.iter().zip(&p.density) {
                t.push(vec![m.to_string(), fmt_f64(*th), fmt_f64(*d)]);
            }
        }
        per_m.push(json!({ "m": m, "pmm": grid_summary(&pmm), "plugin": grid_summary(&plug) }));
    }
    let mut choices = forward_choices(cfg)?;
    choices["theta_prior"] = json!(format!("uniform on ({lo}, {hi})"));
    choices["data_locations"] = json!(cfg.get_list::<f64>("data_x")?);
    Ok(RunOutput {
        tables: vec![("posterior_pmm.csv".into(), pmm_t), ("posterior_plugin.csv".into(), plug_t)],
        results: json!({ "data": y.as_slice(), "designs": per_m }),
        choices,
    })
}

fn solution_table(s: &GridSolution) -> Table {
    let mut t = Table::new(&["x1", "x2", "u"]);
    for (k, p) in s.grid.nodes().iter().enumerate() {
        t.push(vec![fmt_f64(p.x[0]), fmt_f64(p.x[1]), fmt_f64(s.u_hat[k])]);
    }
    t
}

fn chain_summary(chain: &PmChain, burn_in: usize, level: f64, delta0: f64) -> Value {
    let d = chain.deltas(burn_in);
    let (lo, hi) = credible_interval(&d, level);
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    json!({
        "interval": [lo, hi],
        "width": hi - lo,
        "contains_delta0": lo <= delta0 && delta0 <= hi,
        "mean": mean,
        "acceptance_rate": chain.acceptance_rate,
        "estimator_calls": chain.estimator_calls,
        "failed_proposals": chain.failed_proposals,
    })
}

pub fn run_allen_cahn(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let delta0: f64 = cfg.get("delta0")?;
    let j0: usize = cfg.get("truth_branch")?;
    let coarse_n: usize = cfg.get("coarse_n")?;
    let sigma: f64 = cfg.get("sigma")?;
    let burn_in: usize = cfg.get("burn_in")?;
    let level: f64 = cfg.get("credible_level")?;

    let coarse0 = ac_deflated_solve(delta0, coarse_n, &mut RngStream::new(cfg.seed, STREAM_SOLVE))
        .map_err(numerical("coarse deflated solve"))?;
    let fine = ac_deflated_solve(delta0, cfg.get("fine_n")?, &mut RngStream::new(cfg.seed, STREAM_FINE))
        .map_err(numerical("fine deflated solve"))?;
    let truth = fine.get(j0 - 1).ok_or(CliError::Numerical {
        stage: "fine deflated solve",
        source: PmmError::SolutionIndexOutOfRange { index: j0, available: fine.len() },
    })?;

    let side: usize = cfg.get("obs_side")?;
    let obs_points: Vec<Point> = (1..=side)
        .flat_map(|b| (1..=side).map(move |a| Point::d2(a as f64 / (side + 1) as f64, b as f64 / (side + 1) as f64)))
        .collect();
    let mut data_rng = RngStream::new(cfg.seed, STREAM_DATA);
    let y = DVector::from_iterator(
        obs_points.len(),
        obs_points.iter().map(|p| truth.value_at(p) + sigma * data_rng.standard_normal()),
    );

    let cache = Arc::new(CoarseCache::new(coarse_n, cfg.get("cache_resolution")?, cfg.seed ^ CACHE_SALT));
    cache.prefill().map_err(numerical("coarse solution cache"))?;
    let problem = AcInverseProblem {
        design: Design2D::uniform(cfg.get("design_side")?).map_err(numerical("design"))?,
        noise: NoiseModel::iid(sigma, obs_points.len()).map_err(numerical("noise model"))?,
        obs_points,
        y,
        particles: cfg.get("particles")?,
        proposal_variance: cfg.get("proposal_variance")?,
        cache: cache.clone(),
    };
    let chain_cfg = PmMcmcConfig {
        n_steps: cfg.get("n_steps")?,
        delta_prior: ThetaPrior::Uniform { lo: DELTA_MIN, hi: DELTA_MAX },
        ell_prior: Some(ThetaPrior::HalfCauchy { scale: 1.0 }),
        n_solutions: 3,
        j_reproposal_prob: cfg.get("j_reproposal_prob")?,
        delta_step: cfg.get("delta_step")?,
        log_ell_step: cfg.get("log_ell_step")?,
        init: ChainParams { delta: cfg.get("delta_init")?, ell: cfg.get("ell_init")?, j: 1 },
    };
    let plugin_cfg = PmMcmcConfig { ell_prior: None, ..chain_cfg.clone() };
    let run_plugin: bool = cfg.get("plugin_chain")?;
    let (pn, plugin) = rayon::join(
        || pm_mcmc(&PnEstimator(&problem), &chain_cfg, &mut RngStream::new(cfg.seed, STREAM_PN_CHAIN)),
        || {
            run_plugin
                .then(|| {
                    pm_mcmc(&PluginEstimator(&problem), &plugin_cfg, &mut RngStream::new(cfg.seed, STREAM_PLUGIN_CHAIN))
                })
                .transpose()
        },
    );
    let pn = pn.map_err(numerical("pseudo-marginal chain"))?;
    let plugin = plugin.map_err(numerical("plug-in chain"))?;

    let mut chain_t = Table::new(&["chain", "step", "delta", "ell", "j", "log_estimate", "accepted"]);
    for (name, chain) in [("pn", Some(&pn)), ("plugin", plugin.as_ref())] {
        for r in chain.into_iter().flat_map(|c| &c.records) {
            chain_t.push(vec![
                name.to_string(),
                r.step.to_string(),
                fmt_f64(r.delta),
                r.ell.map(fmt_f64).unwrap_or_default(),
                r.j.to_string(),
                fmt_f64(r.log_estimate),
                u8::from(r.accepted).to_string(),
            ]);
        }
    }
    let mut tables = vec![("chain.csv".to_string(), chain_t)];
    for s in &coarse0 {
        tables.push((format!("solutions_{}.csv", s.solution_index), solution_table(s)));
    }
    let pn_sum = chain_summary(&pn, burn_in, level, delta0);
    let plugin_sum = plugin.as_ref().map(|c| chain_summary(c, burn_in, level, delta0));
    let wider = plugin_sum.as_ref().map(|p| pn_sum["width"].as_f64() >= p["width"].as_f64());
    Ok(RunOutput {
        tables,
        results: json!({
            "coarse_solutions_at_delta0": coarse0.len(),
            "fine_solutions_at_delta0": fine.len(),
            "coarse_residuals": coarse0.iter().map(|s| s.residual_norm).collect::<Vec<_>>(),
            "pn": pn_sum,
            "plugin": plugin_sum,
            "pn_at_least_as_wide": wider,
            "cached_coarse_solves": cache.solves(),
        }),
        choices: json!({
            "noise_sigma": sigma,
            "observation_lattice": format!("{side}x{side} interior points i/{}", side + 1),
            "delta0": delta0,
            "truth": format!("branch {j0} of a {}x{} finite-difference solve", truth.grid.n, truth.grid.n),
            "coarse_solver": format!("finite differences on a {coarse_n}x{coarse_n} lattice, bilinear interpolation"),
            "delta_cache_resolution": cfg.get::<f64>("cache_resolution")?,
            "latent_prior": "improper flat",
            "importance_distribution": "N(z_hat_j, proposal_variance * K(X0, X0))",
            "ell_prior": "half-Cauchy(scale 1), random walk on log ell",
            "delta_prior": format!("uniform on ({DELTA_MIN}, {DELTA_MAX})"),
            "branch_proposal": "uniform redraw with probability j_reproposal_prob",
            "branch_labels": "coarse solutions sorted by centre value",
            "plugin_chain": "coarse solver interpolated to the observations, ell fixed",
        }),
    })
}
