//! The `heat`, `hjb` and `verify` commands.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use hilbert_gfd::oracles::{verification_suite, RateCheckConfig, VerifyOptions};
use hilbert_gfd::risk::heat::{heat_exact_norm, HEAT_SOBOLEV_ORDER};
use hilbert_gfd::risk::optimal_control;
use hilbert_gfd::*;
use log::info;

use crate::config::{Experiment, RunConfig, VerifyConfig};

/// How a command finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Diverged,
    ChecksFailed,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn gfd_config(cfg: &RunConfig) -> Result<GfdConfig> {
    Ok(GfdConfig {
        iterations: cfg.iterations,
        step: StepSchedule::Constant(cfg.step),
        law: cfg.law.clone(),
        sched: PreconditionSchedule::new(cfg.lambda, SampleSizeKind::CeilKOverC(cfg.c))?,
        seed: cfg.seed,
        cadence: cfg.cadence,
    })
}

/// Uniform `grid x grid` points over a 2-d box, `t` outermost.
fn grid_points(domain: &BoxDomain, grid: usize) -> Vec<[f64; 2]> {
    let (lo, hi) = (domain.lower(), domain.upper());
    let at = |d: usize, i: usize| lo[d] + (hi[d] - lo[d]) * i as f64 / (grid - 1) as f64;
    (0..grid).flat_map(|i| (0..grid).map(move |j| [at(0, i), at(1, j)])).collect()
}

fn write_solution(dir: &Path, u: &PreBasisExpansion, pb: &PreBasis, grid: usize) -> Result<()> {
    let mut w = create(dir, "solution.csv")?;
    writeln!(w, "t,x,u")?;
    for p in grid_points(pb.domain(), grid) {
        writeln!(w, "{},{},{}", p[0], p[1], u.evaluate(pb, &p)?)?;
    }
    w.flush()?;
    Ok(())
}

fn write_meta(dir: &Path, settings: &str, rec: Option<&RunRecord>, seconds: f64) -> Result<()> {
    let mut w = create(dir, "meta.txt")?;
    w.write_all(settings.as_bytes())?;
    writeln!(w, "# runtime_seconds={seconds:.3}")?;
    if let Some(rec) = rec {
        let status = match &rec.termination {
            Termination::Completed => "completed".to_string(),
            Termination::Diverged { iteration, reason } => format!("diverged at iteration {iteration}: {reason}"),
        };
        writeln!(w, "# termination={status}")?;
        writeln!(w, "# initial_risk={}", rec.initial_risk)?;
        writeln!(w, "# final_risk={}", rec.final_risk)?;
        writeln!(w, "# max_k={}", rec.max_k)?;
    }
    w.flush()?;
    Ok(())
}

fn outcome(rec: &RunRecord) -> Outcome {
    if rec.diverged() {
        Outcome::Diverged
    } else {
        Outcome::Success
    }
}

fn optional(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn heat(cfg: &RunConfig) -> Result<Outcome> {
    let start = Instant::now();
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let mut risk = HeatRisk::new(HeatConfig {
        interior_nodes: cfg.interior_nodes,
        boundary_nodes: cfg.boundary_nodes,
        ..HeatConfig::default()
    })?;
    let mut pb = PreBasis::new(MaternParams::new(cfg.nu, cfg.eta)?, risk.domain().clone(), HEAT_SOBOLEV_ORDER, cfg.gram_nodes)?;
    let rec = run(&mut risk, &mut pb, &gfd_config(cfg)?)?;
    let norm = heat_exact_norm(risk.config().t_final);

    let mut w = create(&cfg.out, "curve.csv")?;
    writeln!(w, "n,risk,l2_error_to_exact,k_sampled,grad_norm")?;
    for r in &rec.rows {
        writeln!(w, "{},{},{},{},{}", r.n, r.risk, optional(r.monitor), r.k, r.grad_norm)?;
    }
    w.flush()?;
    if !rec.diverged() {
        write_solution(&cfg.out, &rec.final_iterate, &pb, cfg.grid)?;
        if let Some(e) = rec.final_monitor {
            info!("final L2 error {e:.6} (relative {:.6})", e / norm);
        }
    }
    write_meta(&cfg.out, &cfg.to_settings(), Some(&rec), start.elapsed().as_secs_f64())?;
    Ok(outcome(&rec))
}

pub fn hjb(cfg: &RunConfig) -> Result<Outcome> {
    let start = Instant::now();
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let mut risk = HjbRisk::new(HjbConfig {
        interior_nodes: cfg.interior_nodes,
        terminal_nodes: cfg.boundary_nodes,
        ..HjbConfig::default()
    })?;
    let params = *risk.params();
    let mut pb = PreBasis::new(MaternParams::new(cfg.nu, cfg.eta)?, risk.domain().clone(), 1, cfg.gram_nodes)?;
    let rec = run(&mut risk, &mut pb, &gfd_config(cfg)?)?;

    let mut w = create(&cfg.out, "curve.csv")?;
    writeln!(w, "n,risk,terminal_error,k_sampled")?;
    for r in &rec.rows {
        writeln!(w, "{},{},{},{}", r.n, r.risk, optional(r.monitor), r.k)?;
    }
    w.flush()?;
    if !rec.diverged() {
        write_solution(&cfg.out, &rec.final_iterate, &pb, cfg.grid)?;
        let mut w = create(&cfg.out, "control.csv")?;
        writeln!(w, "t,x,c_star")?;
        for p in grid_points(pb.domain(), cfg.grid) {
            writeln!(w, "{},{},{}", p[0], p[1], optimal_control(&rec.final_iterate, &pb, p[0], p[1], &params)?)?;
        }
        w.flush()?;
    }
    write_meta(&cfg.out, &cfg.to_settings(), Some(&rec), start.elapsed().as_secs_f64())?;
    Ok(outcome(&rec))
}

pub fn verify(cfg: &VerifyConfig) -> Result<Outcome> {
    let start = Instant::now();
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let opts = VerifyOptions {
        seed: cfg.seed,
        replications: cfg.replications,
        fourth_moment_samples: cfg.fourth_moment_samples,
        lambda: cfg.lambda,
        rate: cfg.rate.then(RateCheckConfig::default),
    };
    let rows = verification_suite(&opts)?;
    let mut w = create(&cfg.out, "checks.csv")?;
    writeln!(w, "check,statistic,threshold,pass")?;
    for r in &rows {
        writeln!(w, "{},{},{},{}", r.name, r.statistic, r.threshold, r.pass)?;
    }
    w.flush()?;
    write_meta(&cfg.out, &cfg.to_settings(), None, start.elapsed().as_secs_f64())?;
    let failed: Vec<&str> = rows.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(Outcome::Success)
    } else {
        log::warn!("failed checks: {}", failed.join(", "));
        Ok(Outcome::ChecksFailed)
    }
}

pub fn dispatch_run(cfg: &RunConfig) -> Result<Outcome> {
    match cfg.experiment {
        Experiment::Heat => heat(cfg),
        Experiment::Hjb => hjb(cfg),
        Experiment::Verify => unreachable!("verify has its own configuration"),
    }
}
