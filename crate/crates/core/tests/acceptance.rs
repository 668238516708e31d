//! Acceptance suite: each criterion prints one PASS/FAIL line with its
//! measurements and wall time, and the process exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scobb::bench::{records_to_csv, run_benchmark, to_csv, Algo, BenchConfig, BenchRecord};
use scobb::cutplane::{run_cutplane, CutPlaneOptions};
use scobb::generator::{generate_instance, GeneratorSettings};
use scobb::linalg::{cholesky_in_place, SymMatrix};
use scobb::liquidation::{
    build_qcqp, capacity_conditions, capacity_instance, shock_capacity, LiquidationParams,
};
use scobb::lowerbound::{build_lower_relaxation_mccormick, gap_bound, mccormick_bilinear, quad_overestimator};
use scobb::oracle::brute_force_oracle;
use scobb::qcqp::{is_feasible, max_violation, QcqpInstance, QuadForm};
use scobb::sco::{run_sco, DcInstance, ScoOptions};
use scobb::spectral::spectral_split;
use scobb::subsolvers::{solve_convex_qcqp, triangle2d_min, BarrierOptions, Triangle2dProblem};

const EPS: f64 = 1e-6;
const PI: f64 = 0.3;
const DELTA_FRAC: f64 = 0.8;
const RHO: f64 = 18.0;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: String) -> Self {
        Self { passed, detail }
    }
}

/// Results of criteria 7 and 8 reused by 9 and 11.
#[derive(Default)]
struct Shared {
    global_records: Vec<BenchRecord>,
    global_csv: Option<String>,
    table_csv: Option<String>,
}

fn random_sym(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> SymMatrix {
    SymMatrix::from_upper_fn(n, |_, _| rng.gen_range(-scale..scale))
}

/// Spectral norm by power iteration on `M^2`, independent of the Jacobi
/// solver under test.
fn power_norm(m: &SymMatrix) -> f64 {
    let n = m.dim();
    let unit = |w: Vec<f64>| {
        let nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        (w.into_iter().map(|x| x / nw).collect::<Vec<f64>>(), nw)
    };
    let (mut v, _) = unit((0..n).map(|i| 1.0 + 0.37 * ((i * 7919) % 13) as f64).collect());
    let mut est: f64 = 0.0;
    for _ in 0..5000 {
        let w = m.mul_vec(&m.mul_vec(&v));
        let (next_v, nw) = unit(w);
        if nw == 0.0 {
            return 0.0;
        }
        let next = nw.sqrt();
        v = next_v;
        let done = (next - est).abs() <= 1e-15 * next;
        est = next;
        if done {
            break;
        }
    }
    est
}

/// `P + tau I` admits a Cholesky factorization.
fn psd_within(p: &SymMatrix, tau: f64) -> bool {
    let n = p.dim();
    let mut a = p.as_slice().to_vec();
    for i in 0..n {
        a[i * n + i] += tau;
    }
    cholesky_in_place(&mut a, n)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_ratio: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..200 {
        let n = rng.gen_range(1..=50);
        let mut m = random_sym(&mut rng, n, 10.0);
        if rng.gen_bool(0.2) {
            // rank-deficient case: project out a random direction
            let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dd: f64 = d.iter().map(|x| x * x).sum();
            let md = m.mul_vec(&d);
            let dmd: f64 = d.iter().zip(&md).map(|(a, b)| a * b).sum();
            m = SymMatrix::from_upper_fn(n, |i, j| {
                m.get(i, j) - (md[i] * d[j] + d[i] * md[j]) / dd + dmd * d[i] * d[j] / (dd * dd)
            });
        }
        let norm = power_norm(&m);
        let split = spectral_split(&m).expect("spectral split");
        let recon = split.plus.add_scaled(-1.0, &split.minus).add_scaled(-1.0, &m);
        let err = power_norm(&recon);
        let ratio = err / (1.0 + norm);
        worst_ratio = worst_ratio.max(ratio);
        let tau = 1e-10 * norm.max(f64::MIN_POSITIVE);
        if ratio > 1e-10 || !psd_within(&split.plus, tau) || !psd_within(&split.minus, tau) {
            failures += 1;
        }
    }
    Outcome::new(
        failures == 0,
        format!("200 matrices, worst reconstruction error/(1+|M|) = {worst_ratio:.2e}, {failures} failures"),
    )
}

/// Grid minimum over the triangle with `n` steps per leg, evaluated row by
/// row; returns the minimum and the gradient bound times the cell radius.
fn triangle_grid(p: &Triangle2dProblem, n: usize) -> (f64, f64) {
    let x0 = p.x0i;
    let h = x0 / n as f64;
    let (h11, h12, h22) = (p.h[0][0], p.h[0][1], p.h[1][1]);
    let mut best = f64::INFINITY;
    for i in 0..=n {
        let y1 = -(i as f64) * h;
        // value along y2: h22 t^2 + (2 h12 y1 - b2) t + (h11 y1^2 - b1 y1)
        let a = h22;
        let b = 2.0 * h12 * y1 - p.b[1];
        let c = h11 * y1 * y1 - p.b[0] * y1;
        for j in 0..=(n - i) {
            let t = -(j as f64) * h;
            let v = (a * t + b) * t + c;
            if v < best {
                best = v;
            }
        }
    }
    let g1 = p.b[0].abs() + 2.0 * (h11.abs() + h12.abs()) * x0;
    let g2 = p.b[1].abs() + 2.0 * (h12.abs() + h22.abs()) * x0;
    let lip = (g1 * g1 + g2 * g2).sqrt();
    (best, lip * h / std::f64::consts::SQRT_2)
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut failures = 0;
    let mut worst_below: f64 = 0.0;
    for k in 0..500 {
        let x0i = rng.gen_range(0.5..2.0);
        let mut h11 = rng.gen_range(-5.0..5.0);
        let mut h12 = rng.gen_range(-5.0..5.0);
        let mut h22 = rng.gen_range(-5.0..5.0);
        match k % 5 {
            // singular curvature along a direction
            1 => {
                h11 = rng.gen_range(0.5..5.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                h22 = h12 * h12 / h11;
            }
            // zero curvature on the hypotenuse
            2 => h12 = 0.5 * (h11 + h22),
            // linear objective
            3 => {
                h11 = 0.0;
                h12 = 0.0;
                h22 = 0.0;
            }
            _ => {}
        }
        let p = Triangle2dProblem {
            h: [[h11, h12], [h12, h22]],
            b: [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)],
            x0i,
        };
        let (y, v) = triangle2d_min(&p);
        let inside = y[0] <= 0.0 && y[1] <= 0.0 && y[0] + y[1] >= -x0i * (1.0 + 1e-14);
        let (grid, err) = triangle_grid(&p, 5000);
        worst_below = worst_below.max(grid - v);
        let consistent = (p.value(y) - v).abs() <= 1e-12 * (1.0 + v.abs());
        if !(inside && consistent && v <= grid + 1e-6 && v >= grid - err) {
            failures += 1;
        }
    }
    Outcome::new(
        failures == 0,
        format!("500 problems, grid 2e-4 x0, largest improvement over grid {worst_below:.2e}, {failures} failures"),
    )
}

fn random_box(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = rng.gen_range(-2.0..2.0);
        let w: f64 = rng.gen_range(0.05..2.0);
        lo.push(a);
        hi.push(a + w);
    }
    (lo, hi)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0usize;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.gen_range(1..=6);
        let rank = rng.gen_range(1..=n);
        let rows: Vec<Vec<f64>> = (0..rank)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let a = SymMatrix::from_upper_fn(n, |i, j| rows.iter().map(|r| r[i] * r[j]).sum());
        let (lo, hi) = random_box(&mut rng, n);
        let (lin, c) = quad_overestimator(&a, &lo, &hi).expect("PSD input");
        let u: Vec<f64> = (0..n).map(|i| rng.gen_range(lo[i]..hi[i])).collect();
        let au = a.mul_vec(&u);
        let uau: f64 = u.iter().zip(&au).map(|(x, y)| x * y).sum();
        let env = mccormick_bilinear(lo[0], hi[0], lo[n - 1], hi[n - 1]);
        for _ in 0..1000 {
            let y: Vec<f64> = (0..n).map(|i| rng.gen_range(lo[i]..=hi[i])).collect();
            let q = a.quad(&y);
            let over: f64 = lin.iter().zip(&y).map(|(l, v)| l * v).sum::<f64>() + c;
            let tangent = 2.0 * au.iter().zip(&y).map(|(l, v)| l * v).sum::<f64>() - uau;
            let w = y[0] * y[n - 1];
            let gaps = [
                q - over,
                tangent - q,
                env.lower(y[0], y[n - 1]) - w,
                w - env.upper(y[0], y[n - 1]),
            ];
            for g in gaps {
                worst = worst.max(g);
                if g > 1e-12 {
                    violations += 1;
                }
            }
        }
    }
    Outcome::new(
        violations == 0,
        format!("50 boxes x 1000 points, largest violation {worst:.2e}, {violations} beyond 1e-12"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = 0;
    let mut solved = 0;
    let mut worst_ratio: f64 = 0.0;
    let opts = BarrierOptions::default();
    while solved < 50 {
        let n = rng.gen_range(2..=5);
        let (lo, hi) = random_box(&mut rng, n);
        let mid: Vec<f64> = lo.iter().zip(&hi).map(|(l, u)| 0.5 * (l + u)).collect();
        let form = |rng: &mut ChaCha8Rng| {
            let q = random_sym(rng, n, 2.0);
            let lin: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            QuadForm::new(q, lin, 0.0).expect("form")
        };
        let objective = form(&mut rng);
        let k = rng.gen_range(1..=2);
        let constraints: Vec<QuadForm> = (0..k)
            .map(|_| {
                let mut c = form(&mut rng);
                c.constant = -c.value(&mid) - rng.gen_range(0.1..1.0);
                c
            })
            .collect();
        let inst = QcqpInstance::new(objective, constraints, lo.clone(), hi.clone(), vec![]).expect("instance");
        let dc = DcInstance::new(inst).expect("split");
        let relax = build_lower_relaxation_mccormick(&dc, &lo, &hi).expect("relaxation");
        let sol = solve_convex_qcqp(&relax.instance, &opts);
        if !sol.status.is_optimal() {
            failures += 1;
            solved += 1;
            continue;
        }
        solved += 1;
        let gb = gap_bound(&dc, &lo, &hi).expect("gap bound");
        let y = &sol.y[..n];
        let obj_gap = dc.base.objective.value(y) - sol.value;
        worst_ratio = worst_ratio.max(obj_gap / (gb.objective + 1e-300));
        let mut ok = obj_gap <= gb.objective + 1e-8;
        for (c, b) in dc.base.constraints.iter().zip(&gb.constraints) {
            ok &= c.value(y) <= b + 1e-8;
        }
        if !ok {
            failures += 1;
        }
    }
    Outcome::new(
        failures == 0,
        format!("50 instances, largest objective gap / bound = {worst_ratio:.3}, {failures} failures"),
    )
}

fn nonconvex(m: usize, seed: u64) -> LiquidationParams {
    generate_instance(seed, &GeneratorSettings::nonconvex(m, PI, DELTA_FRAC, RHO, RHO)).expect("generator")
}

fn default_family(m: usize, seed: u64) -> LiquidationParams {
    generate_instance(seed, &GeneratorSettings::new(m, PI, DELTA_FRAC, RHO, RHO)).expect("generator")
}

fn criterion_5() -> Outcome {
    let mut failures = 0;
    let mut steps = 0usize;
    let mut worst_slack = f64::INFINITY;
    let mut worst_violation: f64 = 0.0;
    let runs: Vec<(usize, u64)> = (0..7)
        .map(|s| (1, s))
        .chain((0..7).map(|s| (2, s)))
        .chain((0..6).map(|s| (5, s)))
        .collect();
    for (m, seed) in runs {
        let p = nonconvex(m, seed);
        let inst = build_qcqp(&p).expect("instance");
        let dc = DcInstance::new(inst.clone()).expect("split");
        let cp = run_cutplane(&p, &CutPlaneOptions::default()).expect("cutting planes");
        let y0 = cp.feasible_point.expect("feasible start");
        let res = match run_sco(&dc, &y0, &ScoOptions::with_eps(EPS)) {
            Ok(r) => r,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        if !res.trace.status.is_optimal() {
            failures += 1;
        }
        let minus = &dc.objective_split().minus;
        let its = &res.trace.iterates;
        for w in its.windows(2) {
            steps += 1;
            let d: Vec<f64> = w[1].y.iter().zip(&w[0].y).map(|(a, b)| a - b).collect();
            let slack = (w[0].value - w[1].value) - minus.quad(&d);
            worst_slack = worst_slack.min(slack);
            if slack < -1e-8 || w[1].value > w[0].value + 1e-8 {
                failures += 1;
            }
        }
        for it in its {
            let v = max_violation(&inst, &it.y).expect("residuals");
            worst_violation = worst_violation.max(v);
            if v > 1e-8 {
                failures += 1;
            }
        }
    }
    Outcome::new(
        failures == 0,
        format!(
            "20 runs, {steps} steps, smallest descent slack {worst_slack:.2e}, largest violation {worst_violation:.2e}, {failures} failures"
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut failures = 0;
    let mut runs = 0;
    let mut worst_duality: f64 = f64::NEG_INFINITY;
    let mut cases: Vec<LiquidationParams> = Vec::new();
    for s in 0..10 {
        cases.push(default_family(1, s));
        cases.push(nonconvex(1, s));
    }
    for s in 0..5 {
        cases.push(default_family(5, s));
        cases.push(nonconvex(5, s));
        cases.push(default_family(10, s));
    }
    for p in &cases {
        runs += 1;
        let inst = build_qcqp(p).expect("instance");
        let res = match run_cutplane(p, &CutPlaneOptions::default()) {
            Ok(r) => r,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let monotone = res
            .trace
            .windows(2)
            .all(|w| w[1].0 <= w[0].0 + 1e-9 * (1.0 + w[0].0.abs()));
        let feasible = res.feasible_point.as_ref().is_some_and(|y| is_feasible(&inst, y, 0.0));
        let mut ok = monotone && feasible && res.status.is_optimal();
        if p.m == 1 {
            let res_grid = 2e-4 * p.x0[0];
            let o = brute_force_oracle(&inst, res_grid).expect("oracle");
            let primal = o.strict_value.unwrap_or(o.value);
            worst_duality = worst_duality.max(res.dual_value - primal);
            ok &= res.dual_value <= primal + 1e-5;
        }
        if !ok {
            failures += 1;
            eprintln!(
                "cutting planes m={} monotone={monotone} feasible={feasible} status={} theta={}",
                p.m, res.status, res.dual_value
            );
        }
    }
    Outcome::new(
        failures == 0,
        format!(
            "{runs} runs, largest theta - grid optimum on m=1 = {worst_duality:.2e}, {failures} failures"
        ),
    )
}

fn global_configs() -> [BenchConfig; 2] {
    let base = BenchConfig {
        pi: PI,
        delta_frac: DELTA_FRAC,
        rho1: RHO,
        rho2: RHO,
        eps: EPS,
        algos: vec![Algo::Scobb],
        deterministic: true,
        nonconvex: true,
        ..Default::default()
    };
    [
        BenchConfig {
            ms: vec![1],
            seeds: 20,
            ..base.clone()
        },
        BenchConfig {
            ms: vec![2],
            seeds: 10,
            ..base
        },
    ]
}

fn global_run() -> (Vec<BenchRecord>, String) {
    let mut records = Vec::new();
    let mut csv = String::new();
    for cfg in global_configs() {
        let rep = run_benchmark(&cfg).expect("benchmark");
        csv.push_str(&records_to_csv(&rep.records));
        records.extend(rep.records);
    }
    (records, csv)
}

fn criterion_7(shared: &mut Shared) -> Outcome {
    let (records, csv) = global_run();
    let mut failures = 0;
    let mut worst_diff: f64 = 0.0;
    for r in &records {
        let p = nonconvex(r.m, r.seed);
        let inst = build_qcqp(&p).expect("instance");
        let min_x0 = p.x0.iter().cloned().fold(f64::INFINITY, f64::min);
        let res = if r.m == 1 { 1.5e-4 } else { 8e-3 } * min_x0;
        let o = brute_force_oracle(&inst, res).expect("oracle");
        let diff = (r.opt_val - o.value).abs();
        worst_diff = worst_diff.max(diff - o.error_bound.max(1e-5));
        let ok = r.error.is_none() && diff <= o.error_bound.max(1e-5) && r.gap <= EPS;
        if !ok {
            failures += 1;
        }
    }
    shared.global_records = records;
    shared.global_csv = Some(csv);
    Outcome::new(
        failures == 0,
        format!(
            "20 m=1 and 10 m=2 instances, largest |SCOBB - grid| minus allowance {worst_diff:.2e}, {failures} failures"
        ),
    )
}

fn table_config() -> BenchConfig {
    BenchConfig {
        ms: vec![10, 20],
        seeds: 5,
        pi: PI,
        delta_frac: DELTA_FRAC,
        rho1: RHO,
        rho2: RHO,
        eps: EPS,
        algos: vec![Algo::Sco, Algo::Scobb],
        deterministic: true,
        ..Default::default()
    }
}

fn table_run() -> (Vec<BenchRecord>, String) {
    let rep = run_benchmark(&table_config()).expect("benchmark");
    let csv = format!("{}{}", to_csv(&rep.rows), records_to_csv(&rep.records));
    (rep.records, csv)
}

fn criterion_8(shared: &mut Shared) -> Outcome {
    let (records, csv) = table_run();
    let mut failures = 0;
    let mut worst_lev: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for r in records.iter().filter(|r| r.algo == Algo::Scobb) {
        let dev = (r.leverage_ratio - RHO).abs();
        worst_lev = worst_lev.max(dev);
        worst_gap = worst_gap.max(r.gap);
        if !(r.error.is_none() && r.gap <= EPS && dev <= 1e-4) {
            failures += 1;
        }
    }
    shared.table_csv = Some(csv);
    Outcome::new(
        failures == 0,
        format!(
            "m in {{10, 20}} x 5 seeds, largest gap {worst_gap:.2e}, largest |l2/e2 - 18| {worst_lev:.2e}, {failures} failures"
        ),
    )
}

fn criterion_9(shared: &mut Shared) -> Outcome {
    let runs = &shared.global_records;
    let within = runs.iter().filter(|r| r.nodes_bound_ok == Some(true)).count();
    let max_nodes = runs.iter().map(|r| r.iters).fold(0.0, f64::max);
    Outcome::new(
        !runs.is_empty() && within == runs.len(),
        format!("{within}/{} runs within the node bound, most nodes {max_nodes}", runs.len()),
    )
}

fn criterion_10() -> Outcome {
    let mut failures = 0;
    let mut checked = 0;
    let mut worst_rel: f64 = 0.0;
    let mut seed = 0u64;
    while checked < 20 && seed < 200 {
        let p = if checked % 2 == 0 {
            default_family(1, seed)
        } else {
            nonconvex(1, seed)
        };
        seed += 1;
        if !capacity_conditions(&p).iter().all(|&b| b) {
            continue;
        }
        checked += 1;
        let cap = shock_capacity(&p).expect("capacity");
        let inst = capacity_instance(&p).expect("capacity instance");
        let o = brute_force_oracle(&inst, 1e-4 * p.x0[0]).expect("oracle");
        let g_grid = -o.strict_value.unwrap_or(o.value);
        let grid_delta = (p.rho2 * p.e0 - p.l0 + g_grid) / (p.rho2 + 1.0);
        let rel = (cap.delta_max - grid_delta).abs() / cap.delta_max.abs().max(1e-12);
        worst_rel = worst_rel.max(rel);
        if !(cap.closed_form_valid && rel <= 1e-3) {
            failures += 1;
        }
    }
    Outcome::new(
        checked == 20 && failures == 0,
        format!("{checked} instances, largest relative difference {worst_rel:.2e}, {failures} failures"),
    )
}

fn criterion_11(shared: &mut Shared) -> Outcome {
    let (_, global) = global_run();
    let (_, table) = table_run();
    let same_global = shared.global_csv.as_deref() == Some(global.as_str());
    let same_table = shared.table_csv.as_deref() == Some(table.as_str());
    Outcome::new(
        same_global && same_table,
        format!(
            "criterion 7 report identical: {same_global}, criterion 8 report identical: {same_table} ({} + {} bytes)",
            global.len(),
            table.len()
        ),
    )
}

type Check = fn(&mut Shared) -> Outcome;

fn main() -> ExitCode {
    let criteria: [(&str, f64, Check); 11] = [
        ("spectral split", 5.0, |_| criterion_1()),
        ("triangle solver vs grid", 30.0, |_| criterion_2()),
        ("envelope correctness", 10.0, |_| criterion_3()),
        ("relaxation gap bound", 60.0, |_| criterion_4()),
        ("SCO descent", 120.0, |_| criterion_5()),
        ("cutting-plane dual", 60.0, |_| criterion_6()),
        ("global optimality vs grid", 600.0, criterion_7),
        ("benchmark invariants m=10,20", 600.0, criterion_8),
        ("node-count bound", f64::INFINITY, criterion_9),
        ("shock capacity closed form", 60.0, |_| criterion_10()),
        ("determinism", f64::INFINITY, criterion_11),
    ];
    let mut shared = Shared::default();
    let mut all = true;
    for (k, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = check(&mut shared);
        let secs = start.elapsed().as_secs_f64();
        let passed = out.passed && secs <= *budget;
        all &= passed;
        let limit = if budget.is_finite() {
            format!(" (limit {budget:.0} s)")
        } else {
            String::new()
        };
        println!(
            "criterion {:>2} {} {name}: {} [{secs:.1} s{limit}]",
            k + 1,
            if passed { "PASS" } else { "FAIL" },
            out.detail
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
