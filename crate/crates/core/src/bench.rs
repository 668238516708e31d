//! Benchmark over seeded liquidation instances, reported per asset count
//! and algorithm with seed-averaged columns.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cutplane::run_cutplane;
use crate::error::{Error, Result};
use crate::generator::{generate_instance, GeneratorSettings};
use crate::liquidation::{build_qcqp, check_optimality_activity, LiquidationParams};
use crate::sco::{run_sco, DcInstance, ScoOptions};
use crate::scobb::{run_scobb, ScobbOptions};

pub const CSV_HEADER: &str = "m,pi,delta_frac,algo,opt_val,time_s,iters,leverage_ratio,gap";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algo {
    Sco,
    Scobb,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Sco => "SCO",
            Algo::Scobb => "SCOBB",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub ms: Vec<usize>,
    /// Seeds `seed_base .. seed_base + seeds` are used for every `m`.
    pub seeds: usize,
    pub seed_base: u64,
    pub pi: f64,
    pub delta_frac: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub eps: f64,
    pub algos: Vec<Algo>,
    /// Report `time_s` as zero so reruns produce identical files.
    pub deterministic: bool,
    pub max_nodes: usize,
    pub threads: usize,
    /// Draw from the indefinite instance family.
    pub nonconvex: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            ms: vec![10, 20],
            seeds: 5,
            seed_base: 0,
            pi: 0.3,
            delta_frac: 0.8,
            rho1: 18.0,
            rho2: 18.0,
            eps: 1e-6,
            algos: vec![Algo::Sco, Algo::Scobb],
            deterministic: false,
            max_nodes: 200_000,
            threads: 1,
            nonconvex: false,
        }
    }
}

impl BenchConfig {
    pub fn settings(&self, m: usize) -> GeneratorSettings {
        if self.nonconvex {
            GeneratorSettings::nonconvex(m, self.pi, self.delta_frac, self.rho1, self.rho2)
        } else {
            GeneratorSettings::new(m, self.pi, self.delta_frac, self.rho1, self.rho2)
        }
    }
}

/// Outcome of one algorithm on one instance. Failed runs carry NaN values
/// and the error text.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRecord {
    pub m: usize,
    pub seed: u64,
    pub algo: Algo,
    pub opt_val: f64,
    pub time_s: f64,
    /// SCO iterations or SCOBB nodes processed.
    pub iters: f64,
    pub leverage_ratio: f64,
    pub gap: f64,
    pub nodes_bound_ok: Option<bool>,
    pub error: Option<String>,
}

/// Seed average for one `(m, algo)` pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub m: usize,
    pub pi: f64,
    pub delta_frac: f64,
    pub algo: Algo,
    pub opt_val: f64,
    pub time_s: f64,
    pub iters: f64,
    pub leverage_ratio: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub records: Vec<BenchRecord>,
}

fn leverage(p: &LiquidationParams, y: &[f64]) -> f64 {
    check_optimality_activity(p, y, 1e-6)
        .ok()
        .and_then(|a| a.leverage)
        .unwrap_or(f64::NAN)
}

fn failed(m: usize, seed: u64, algo: Algo, e: &Error) -> BenchRecord {
    BenchRecord {
        m,
        seed,
        algo,
        opt_val: f64::NAN,
        time_s: f64::NAN,
        iters: f64::NAN,
        leverage_ratio: f64::NAN,
        gap: f64::NAN,
        nodes_bound_ok: None,
        error: Some(e.to_string()),
    }
}

fn run_sco_pipeline(p: &LiquidationParams, cfg: &BenchConfig) -> Result<(f64, Vec<f64>, usize)> {
    let dc = DcInstance::new(build_qcqp(p)?)?;
    let cp = run_cutplane(p, &Default::default())?;
    let y0 = cp
        .feasible_point
        .ok_or_else(|| Error::Solver("cutting planes returned no feasible point".into()))?;
    let res = run_sco(&dc, &y0, &ScoOptions::with_eps(cfg.eps))?;
    if !res.trace.status.is_optimal() {
        return Err(Error::Solver(format!("SCO: {}", res.trace.status)));
    }
    let iters = res.iterations();
    Ok((res.value, res.y, iters))
}

fn bench_instance(
    p: &LiquidationParams,
    m: usize,
    seed: u64,
    cfg: &BenchConfig,
) -> Vec<BenchRecord> {
    let mut out = Vec::new();
    let mut global: Option<f64> = None;
    // SCOBB first so SCO rows can report their distance to the global value
    let mut order = cfg.algos.clone();
    order.sort_by_key(|a| match a {
        Algo::Scobb => 0,
        Algo::Sco => 1,
    });
    for algo in order {
        let start = Instant::now();
        let rec = match algo {
            Algo::Scobb => {
                let opts = ScobbOptions {
                    eps: cfg.eps,
                    max_nodes: cfg.max_nodes,
                    threads: cfg.threads,
                    sco: ScoOptions::with_eps(cfg.eps),
                    ..Default::default()
                };
                let res = build_qcqp(p)
                    .and_then(DcInstance::new)
                    .and_then(|dc| run_scobb(&dc, Some(p), &opts, None));
                match res {
                    Ok(rep) => {
                        if rep.status.is_optimal() {
                            global = Some(rep.upper);
                        }
                        BenchRecord {
                            m,
                            seed,
                            algo,
                            opt_val: rep.upper,
                            time_s: start.elapsed().as_secs_f64(),
                            iters: rep.nodes_processed as f64,
                            leverage_ratio: rep
                                .incumbent
                                .as_deref()
                                .map_or(f64::NAN, |y| leverage(p, y)),
                            gap: if rep.status.is_optimal() { rep.gap } else { f64::NAN },
                            nodes_bound_ok: Some(rep.nodes_processed as u128 <= rep.worst_case_nodes),
                            error: (!rep.status.is_optimal()).then(|| rep.status.to_string()),
                        }
                    }
                    Err(e) => failed(m, seed, algo, &e),
                }
            }
            Algo::Sco => match run_sco_pipeline(p, cfg) {
                Ok((value, y, iters)) => BenchRecord {
                    m,
                    seed,
                    algo,
                    opt_val: value,
                    time_s: start.elapsed().as_secs_f64(),
                    iters: iters as f64,
                    leverage_ratio: leverage(p, &y),
                    gap: global.map_or(f64::NAN, |g| (value - g).max(0.0)),
                    nodes_bound_ok: None,
                    error: None,
                },
                Err(e) => failed(m, seed, algo, &e),
            },
        };
        out.push(rec);
    }
    // restore the configured algorithm order
    out.sort_by_key(|r| cfg.algos.iter().position(|a| *a == r.algo));
    if cfg.deterministic {
        for r in &mut out {
            if r.time_s.is_finite() {
                r.time_s = 0.0;
            }
        }
    }
    out
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchReport> {
    if !(cfg.eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    let mut records = Vec::new();
    let mut rows = Vec::new();
    if cfg.algos.is_empty() {
        return Ok(BenchReport { rows, records });
    }
    for &m in &cfg.ms {
        let settings = cfg.settings(m);
        let mut per_m = Vec::new();
        for k in 0..cfg.seeds {
            let seed = cfg.seed_base + k as u64;
            match generate_instance(seed, &settings) {
                Ok(p) => per_m.extend(bench_instance(&p, m, seed, cfg)),
                Err(e) => per_m.extend(cfg.algos.iter().map(|&a| failed(m, seed, a, &e))),
            }
        }
        for &algo in &cfg.algos {
            let rs: Vec<&BenchRecord> = per_m.iter().filter(|r| r.algo == algo).collect();
            rows.push(BenchRow {
                m,
                pi: cfg.pi,
                delta_frac: cfg.delta_frac,
                algo,
                opt_val: mean(rs.iter().map(|r| r.opt_val)),
                time_s: mean(rs.iter().map(|r| r.time_s)),
                iters: mean(rs.iter().map(|r| r.iters)),
                leverage_ratio: mean(rs.iter().map(|r| r.leverage_ratio)),
                gap: mean(rs.iter().map(|r| r.gap)),
            });
        }
        records.extend(per_m);
    }
    Ok(BenchReport { rows, records })
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.10},{:.3},{:.1},{:.6},{:.3e}",
            r.m,
            r.pi,
            r.delta_frac,
            r.algo.name(),
            r.opt_val,
            r.time_s,
            r.iters,
            r.leverage_ratio,
            r.gap
        );
    }
    out
}

pub const RECORD_CSV_HEADER: &str = "m,seed,algo,opt_val,time_s,iters,leverage_ratio,gap";

/// One line per instance and algorithm.
pub fn records_to_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from(RECORD_CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{:.12},{:.3},{},{:.8},{:.3e}",
            r.m,
            r.seed,
            r.algo.name(),
            r.opt_val,
            r.time_s,
            r.iters,
            r.leverage_ratio,
            r.gap
        );
    }
    out
}

/// Fixed-width console rendering of the rows.
pub fn format_table(rows: &[BenchRow]) -> String {
    let mut out = format!(
        "{:>4} {:>5} {:>6} {:>6} {:>18} {:>10} {:>9} {:>10} {:>10}\n",
        "m", "pi", "d/dmax", "algo", "OptVal", "Time(s)", "Iter", "l2/e2", "Gap"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:>4} {:>5} {:>6} {:>6} {:>18.4} {:>10.3} {:>9.1} {:>10.4} {:>10.1e}",
            r.m,
            r.pi,
            r.delta_frac,
            r.algo.name(),
            r.opt_val,
            r.time_s,
            r.iters,
            r.leverage_ratio,
            r.gap
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_algo_set_gives_header_only() {
        let cfg = BenchConfig {
            algos: vec![],
            ..Default::default()
        };
        let rep = run_benchmark(&cfg).unwrap();
        assert_eq!(to_csv(&rep.rows), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn small_run_is_reproducible() {
        let cfg = BenchConfig {
            ms: vec![1],
            seeds: 2,
            deterministic: true,
            ..Default::default()
        };
        let a = to_csv(&run_benchmark(&cfg).unwrap().rows);
        let b = to_csv(&run_benchmark(&cfg).unwrap().rows);
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 3);
    }
}
