//! Acceptance suite: one PASS/FAIL line per criterion, with wall time
//! checked against the criterion's limit. Exits non-zero if any fails.

use std::time::{Duration, Instant};

use raretail::class_diagnostics::{classify, default_grid, strong_subexp_ratio};
use raretail::convolution_stopped_sums::{
    kesten_table, mrv_stopped_closed_form, single_big_jump_report, stopped_sum_tail,
    StoppedSumModel,
};
use raretail::large_deviations::{
    pld_fixed_n_surface, pld_random_surface, CellStatus, CountingProcess, Surface,
};
use raretail::mc::{Budget, Engine, Estimate, RngStream, UniformSource};
use raretail::rare_sets::{RareSet, RuinSetKind};
use raretail::report::Verdict;
use raretail::risk_engine::{
    calibrate_x, check_assumption_62, entrance_probability, mrv_closed_form,
    ruin_entrance_coupling, ruin_probability, theorem61_asymptote, RiskModel, Summability,
};
use raretail::scalar_laws::ScalarLaw;
use raretail::vector_laws::VectorLaw;

const SEED: u64 = 20_240_601;
const WORKERS: usize = 4;

type Member = Box<dyn Fn(&[f64], f64) -> bool>;

// Pinned tolerances.
const GRID_SCAN_DELTA: f64 = 1e-4;
const STRONG_SUBEXP_TOL: f64 = 0.05;
const SBJ_HALF_WIDTH: f64 = 0.20;
const SBJ_SINGLE_TARGET: f64 = 5e-4;
const KESTEN_C: f64 = 3.0;
const KESTEN_N: usize = 30;
const KESTEN_DOUBLING_TOL: f64 = 0.10;
const SURFACE_TOL: f64 = 0.15;
const RANDOM_SURFACE_TOL: f64 = 0.20;
const MRV_MU_TOL: f64 = 0.10;
const MRV_X: f64 = 1e3;
const ENTRANCE_TOL: f64 = 0.25;
const ENTRANCE_TARGET: f64 = 1e-3;
const REMAINDER_SHARE: f64 = 0.01;
const IDENTITY_TOL: f64 = 1e-12;
const ENGINE_EVENTS: usize = 20;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn engine() -> Engine {
    Engine::new(SEED, WORKERS).unwrap()
}

fn p2() -> ScalarLaw {
    ScalarLaw::pareto(2.0, 1.0).unwrap()
}

fn iid_p2() -> VectorLaw {
    VectorLaw::iid(p2(), 2).unwrap()
}

fn half() -> RareSet {
    RareSet::halfspace(&[0.5, 0.5], 1.0).unwrap()
}

/// `x` with `P[Y_A(X) > x] = p` for a law with a closed-form tail.
fn solve_single(v: &VectorLaw, set: &RareSet, p: f64) -> f64 {
    let (mut lo, mut hi) = (1e-3f64.ln(), 1e9f64.ln());
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if v.fa_tail_exact(set, m.exp()).unwrap().unwrap() > p {
            lo = m;
        } else {
            hi = m;
        }
    }
    (0.5 * (lo + hi)).exp()
}

fn contains_ci(e: &Estimate, v: f64) -> bool {
    e.ci95.0 <= v && v <= e.ci95.1
}

// 1. Membership through the projection against the defining inequalities.
fn projection_duality() -> Outcome {
    let mut rng = RngStream::new(SEED, 1);
    let d = 3;
    let mut bad_contains = 0;
    let mut worst_gap: f64 = 0.0;
    let n = 100_000;
    for i in 0..n {
        let mut w: Vec<f64> = (0..d).map(|_| rng.uniform() + 0.05).collect();
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= sum);
        let x: Vec<f64> = (0..d).map(|_| 5.0 * rng.uniform()).collect();
        let s = 0.05 + 4.0 * rng.uniform();
        let c = 0.2 + rng.uniform();
        // membership of z in uA, written from each set's definition
        let (set, member): (RareSet, Member) = match i % 4 {
            0 => {
                let l = w.clone();
                (
                    RareSet::halfspace(&w, c).unwrap(),
                    Box::new(move |z, u| l.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() > c * u),
                )
            }
            1 => {
                let b = w.clone();
                (
                    RareSet::orthant(&w).unwrap(),
                    Box::new(move |z, u| z.iter().zip(&b).any(|(z, b)| *z > b * u)),
                )
            }
            2 => {
                let l = w.clone();
                (
                    RareSet::ruin_translate(&w, RuinSetKind::SumNegative).unwrap(),
                    Box::new(move |z, u| {
                        l.iter().zip(z).map(|(l, z)| u * l - z).sum::<f64>() < 0.0
                    }),
                )
            }
            _ => {
                let l = w.clone();
                (
                    RareSet::ruin_translate(&w, RuinSetKind::AnyNegative).unwrap(),
                    Box::new(move |z, u| l.iter().zip(z).any(|(l, z)| u * l - z < 0.0)),
                )
            }
        };
        if set.contains(&x, s).unwrap() != member(&x, s) {
            bad_contains += 1;
        }
        // grid scan for sup{u : x ∈ uA}: coarse then fine
        let y = set.y_projection(&x).unwrap();
        let coarse = 0.01;
        let mut u = 0.0;
        while member(&x, u + coarse) {
            u += coarse;
        }
        let fine = GRID_SCAN_DELTA / 10.0;
        while member(&x, u + fine) {
            u += fine;
        }
        worst_gap = worst_gap.max((u - y).abs());
    }
    outcome(
        bad_contains == 0 && worst_gap <= GRID_SCAN_DELTA,
        format!(
            "{n} pairs, membership mismatches {bad_contains}, max |scan − Y_A| {worst_gap:.2e}"
        ),
    )
}

// 2. Class verdicts by quadrature.
fn class_chain() -> Outcome {
    let grid = default_grid();
    let p = classify(&ScalarLaw::pareto(2.5, 1.0).unwrap(), &grid).unwrap();
    let v = |r: &Option<raretail::report::TrendReport>| r.as_ref().map(|r| r.verdict);
    let pareto = [
        ("L", Some(p.long_tailed.verdict)),
        ("D", Some(p.dominated.verdict)),
        ("R", v(&p.regularly_varying)),
        ("S", v(&p.subexponential)),
        ("S*", v(&p.strong_subexponential)),
        ("S_*", p.strongly_subexponential.as_ref().map(|u| u.verdict)),
    ];
    let pareto_ok = pareto.iter().all(|(_, v)| *v == Some(Verdict::Consistent));
    let e = classify(&ScalarLaw::exponential(1.0).unwrap(), &grid).unwrap();
    let w = classify(&ScalarLaw::weibull(0.5, 1.0).unwrap(), &grid).unwrap();
    let exp_ok = e.long_tailed.verdict == Verdict::Inconsistent;
    let weib_ok = v(&w.strong_subexponential) == Some(Verdict::Consistent)
        && w.dominated.verdict == Verdict::Inconsistent;
    outcome(
        pareto_ok && exp_ok && weib_ok,
        format!(
            "Pareto(2.5) {:?}; Exp(1) L {:?}; Weibull(0.5) S* {:?} D {:?}",
            pareto
                .iter()
                .map(|(k, v)| format!("{k}:{v:?}"))
                .collect::<Vec<_>>(),
            e.long_tailed.verdict,
            v(&w.strong_subexponential),
            w.dominated.verdict
        ),
    )
}

// 3. Strong-subexponential ratio on the default grid.
fn strong_subexp() -> Outcome {
    let grid = default_grid();
    let r = strong_subexp_ratio(&ScalarLaw::pareto(2.5, 1.0).unwrap(), &grid).unwrap();
    let last = *r.ratios.last().unwrap();
    let top = *grid.last().unwrap();
    outcome(
        (last - 1.0).abs() <= STRONG_SUBEXP_TOL && r.verdict == Verdict::Consistent,
        format!("ratio {last:.4} at x = {top}, trend {:?}", r.verdict),
    )
}

// 4. Geometric stopping with splitting.
fn single_big_jump() -> Outcome {
    let model = StoppedSumModel::new(iid_p2(), ScalarLaw::geometric(0.5).unwrap()).unwrap();
    let set = half();
    let x = solve_single(&model.vlaw, &set, SBJ_SINGLE_TARGET);
    let eng = engine();
    let budget = Budget::splitting(1_000_000, 25_000, 8);
    let est = stopped_sum_tail(&model, &set, x, &eng, &budget).unwrap();
    let mean_tau = model.tau_mean().unwrap();
    let den = mean_tau * model.vlaw.fa_tail_exact(&set, x).unwrap().unwrap();
    let (r, lo, hi) = (est.value / den, est.ci95.0 / den, est.ci95.1 / den);
    let half_width = 0.5 * (hi - lo);
    let rep = single_big_jump_report(
        &model,
        &set,
        &[x / 4.0, x / 2.0, x],
        &eng,
        &Budget::crude(1000),
    )
    .unwrap();
    let pass = lo <= 1.0 && 1.0 <= hi && half_width <= SBJ_HALF_WIDTH && rep.condition.holds;
    outcome(
        pass,
        format!(
            "x = {x:.2}, ratio {r:.3} CI [{lo:.3}, {hi:.3}] half-width {half_width:.3}, stopping condition {}",
            rep.condition.holds
        ),
    )
}

// 5. Kesten table, stable under doubling.
fn kesten() -> Outcome {
    let eng = engine();
    let grid: Vec<f64> = (2..=6).map(|k| 2f64.powi(k)).collect();
    let a = kesten_table(
        &iid_p2(),
        &half(),
        KESTEN_C,
        KESTEN_N,
        &grid,
        &eng,
        &Budget::crude(200_000),
    )
    .unwrap();
    let b = kesten_table(
        &iid_p2(),
        &half(),
        KESTEN_C,
        KESTEN_N,
        &grid,
        &eng,
        &Budget::crude(400_000),
    )
    .unwrap();
    let change = (b.sup - a.sup).abs() / a.sup;
    outcome(
        a.bounded && b.bounded && change < KESTEN_DOUBLING_TOL,
        format!(
            "sup K {:.3} -> {:.3} (change {:.1}%), bounded {} / {}",
            a.sup,
            b.sup,
            100.0 * change,
            a.bounded,
            b.bounded
        ),
    )
}

fn surface_summary(s: &Surface) -> String {
    s.cells
        .iter()
        .filter(|c| c.status == CellStatus::Evaluated)
        .map(|c| format!("({},{})={:.2}", c.key, c.x_mult, c.ratio))
        .collect::<Vec<_>>()
        .join(" ")
}

fn surface_budget() -> Budget {
    Budget::splitting(200_000, 10_000, 8)
}

// 6. Fixed-n surface.
fn fixed_surface() -> Outcome {
    let s = pld_fixed_n_surface(
        &iid_p2(),
        &half(),
        &[2, 5, 10],
        &[1.0, 2.0, 4.0],
        0.9,
        &engine(),
        &surface_budget(),
    )
    .unwrap();
    outcome(
        s.within(SURFACE_TOL) && s.dev_nonincreasing_in_mult,
        format!(
            "max dev {:.3}, dev non-increasing {}; {}",
            s.max_dev,
            s.dev_nonincreasing_in_mult,
            surface_summary(&s)
        ),
    )
}

// 7. Random-sum surface: deterministic arrivals reproduce fixed-n cells.
fn random_surface() -> Outcome {
    let eng = engine();
    let b = surface_budget();
    let mults = [1.0, 2.0, 4.0];
    let fixed =
        pld_fixed_n_surface(&iid_p2(), &half(), &[2, 5, 10], &mults, 0.9, &eng, &b).unwrap();
    let det = CountingProcess::deterministic(1.0).unwrap();
    let rand = pld_random_surface(
        &iid_p2(),
        &det,
        &half(),
        &[2.5, 5.5, 10.5],
        &mults,
        0.9,
        &eng,
        &b,
    )
    .unwrap();
    let identical = fixed.cells.len() == rand.cells.len()
        && fixed
            .cells
            .iter()
            .zip(&rand.cells)
            .all(|(f, r)| f.estimate == r.estimate && f.x == r.x);
    let pois = CountingProcess::poisson(1.0).unwrap();
    let p = pld_random_surface(&iid_p2(), &pois, &half(), &[10.0], &mults, 0.9, &eng, &b).unwrap();
    outcome(
        identical && p.within(RANDOM_SURFACE_TOL),
        format!(
            "bit-identical {identical}; Poisson t=10 max dev {:.3}: {}",
            p.max_dev,
            surface_summary(&p)
        ),
    )
}

// 8. MRV closed forms.
fn mrv_closed_forms() -> Outcome {
    let v = VectorLaw::mrv(2.0, p2(), 2, vec![0.5, 0.5]).unwrap();
    let set = half();
    let eng = engine();
    let mu = v.mu_a(&set).unwrap();
    let fa = v.fa_tail_exact(&set, MRV_X).unwrap().unwrap();
    let mu_dev = (fa / p2().tail(MRV_X) - mu).abs() / mu;

    let sb = Budget::splitting(1_000_000, 20_000, 8);
    let stopped = StoppedSumModel::new(v.clone(), ScalarLaw::geometric(0.5).unwrap()).unwrap();
    let s_cf = mrv_stopped_closed_form(&stopped, &set, MRV_X).unwrap();
    let s_est = stopped_sum_tail(&stopped, &set, MRV_X, &eng, &sb).unwrap();

    let model = RiskModel::new(
        vec![0.5, 0.5],
        &[1.0, 1.0],
        0.05,
        v,
        CountingProcess::poisson(1.0).unwrap(),
        10.0,
        RuinSetKind::SumNegative,
    )
    .unwrap();
    let ruin_set = model.ruin_set().unwrap();
    let r_cf = mrv_closed_form(&model, &ruin_set, MRV_X, 10.0, &eng, &sb).unwrap();
    let r_est = ruin_probability(&model, MRV_X, 10.0, &eng, &sb).unwrap();
    let pass = mu_dev <= MRV_MU_TOL && contains_ci(&s_est, s_cf) && contains_ci(&r_est, r_cf);
    outcome(
        pass,
        format!(
            "mu dev {mu_dev:.2e}; stopped {s_cf:.3e} vs [{:.3e}, {:.3e}]; ruin {r_cf:.3e} vs [{:.3e}, {:.3e}]",
            s_est.ci95.0, s_est.ci95.1, r_est.ci95.0, r_est.ci95.1
        ),
    )
}

// 9. Entrance and ruin against the integral asymptote.
fn theorem61() -> Outcome {
    let eng = engine();
    let model = RiskModel::new(
        vec![0.5, 0.5],
        &[1.0, 1.0],
        0.05,
        iid_p2(),
        CountingProcess::poisson(1.0).unwrap(),
        10.0,
        RuinSetKind::SumNegative,
    )
    .unwrap();
    let quad = Budget::crude(1000);
    let sb = Budget::splitting(400_000, 20_000, 8);
    let set = half();
    let ruin_set = model.ruin_set().unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for t in [5.0, 10.0] {
        let xe = calibrate_x(&model, &set, t, ENTRANCE_TARGET, (1.0, 1e6), &eng, &quad).unwrap();
        let ae = theorem61_asymptote(&model, &set, xe, t, &eng, &quad).unwrap();
        let e = entrance_probability(&model, &set, xe, t, &eng, &sb).unwrap();
        let xr = calibrate_x(
            &model,
            &ruin_set,
            t,
            ENTRANCE_TARGET,
            (1.0, 1e6),
            &eng,
            &quad,
        )
        .unwrap();
        let ar = theorem61_asymptote(&model, &ruin_set, xr, t, &eng, &quad).unwrap();
        let psi = ruin_probability(&model, xr, t, &eng, &sb).unwrap();
        let coupling = ruin_entrance_coupling(&model, xr, t, &eng, 400_000).unwrap();
        let (re, rr) = (e.value / ae, psi.value / ar);
        pass &= (re - 1.0).abs() <= ENTRANCE_TOL
            && (rr - 1.0).abs() <= ENTRANCE_TOL
            && coupling.holds();
        parts.push(format!(
            "t={t}: entrance/asym {re:.3} (x={xe:.1}), ruin/asym {rr:.3} (x={xr:.1}), coupling {}/{} violations {}",
            coupling.ruin_hits, coupling.entrance_hits, coupling.violations
        ));
    }
    outcome(pass, parts.join("; "))
}

// 10. Summability machinery.
fn assumption62() -> Outcome {
    let eng = engine();
    let b = Budget::crude(100_000);
    let set = half();
    let model = RiskModel::new(
        vec![0.5, 0.5],
        &[1.0, 1.0],
        0.05,
        iid_p2(),
        CountingProcess::poisson(1.0).unwrap(),
        10.0,
        RuinSetKind::SumNegative,
    )
    .unwrap();
    let a = check_assumption_62(&model, &set, None, 10.0, 100, &eng, &b).unwrap();
    let gap = (a.partial_sum_count - a.partial_sum_epochs).abs() / a.partial_sum_count;
    let mut storm = model.clone();
    storm.arrivals = CountingProcess::deterministic(1e-6).unwrap();
    let s = check_assumption_62(&storm, &set, None, 1.0, 100, &eng, &Budget::crude(1000)).unwrap();
    let pass = a.verdict == Summability::Summable
        && a.remainder < REMAINDER_SHARE * a.partial_sum
        && gap <= IDENTITY_TOL
        && a.max_term_gap <= IDENTITY_TOL
        && s.verdict == Summability::NotSummable;
    outcome(
        pass,
        format!(
            "Poisson+Pareto {:?} (sum {:.4e}, remainder {:.2e}, ratio {:.3}); forms agree to {gap:.1e}; storm {:?} (ratio {:.2})",
            a.verdict, a.partial_sum, a.remainder, a.ratio, s.verdict, s.ratio
        ),
    )
}

// 11. Engine integrity.
fn engine_integrity() -> Outcome {
    let v = VectorLaw::iid(p2(), 2).unwrap();
    let set = half();
    let x = solve_single(&v, &set, 1e-2);
    let mut overlaps = 0;
    for k in 0..ENGINE_EVENTS {
        let eng = Engine::new(SEED + k as u64, WORKERS).unwrap();
        // 2-fold sum exceedance at the single-claim 1% level
        let stat = |p: &mut raretail::mc::PathRng| {
            let mut a = vec![0.0; 2];
            let mut b = vec![0.0; 2];
            v.sample_blocks(p, 0, &mut a);
            v.sample_blocks(p, 2, &mut b);
            Ok(set.y(&[a[0] + b[0], a[1] + b[1]]))
        };
        let xk = x * (1.0 + 0.05 * k as f64);
        let crude = eng
            .tail(0x7e00 + k as u32, xk, &Budget::crude(100_000), stat)
            .unwrap();
        let split = eng
            .tail(0x7e00 + k as u32, xk, &Budget::splitting(1, 5_000, 8), stat)
            .unwrap();
        if crude.overlaps(&split) {
            overlaps += 1;
        }
    }
    let eng = engine();
    let zero = eng.crude_event(0x7f00, 3000, |_| Ok(false)).unwrap();
    let rule3 = zero.zero_hit && zero.value == 0.0 && (zero.ci95.1 - 1.0 / 1000.0).abs() < 1e-15;
    let run = |chunk| {
        let e = Engine::with_chunk(SEED, 3, chunk).unwrap();
        e.tail(0x7f01, x, &Budget::splitting(1, 4_000, 4), |p| {
            let mut a = vec![0.0; 2];
            v.sample_blocks(p, 0, &mut a);
            Ok(set.y(&a))
        })
        .unwrap()
    };
    let identical = run(512) == run(512);
    outcome(
        overlaps == ENGINE_EVENTS && rule3 && identical,
        format!("CI overlaps {overlaps}/{ENGINE_EVENTS}; rule of three {rule3}; bit-identical rerun {identical}"),
    )
}

type Criterion = (&'static str, u64, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("projection duality", 10, projection_duality),
        ("class-diagnostic chain", 60, class_chain),
        ("strong-subexponential ratio", 30, strong_subexp),
        ("single big jump, geometric stopping", 300, single_big_jump),
        ("Kesten boundedness", 600, kesten),
        ("fixed-n large-deviation surface", 900, fixed_surface),
        ("random-sum reduction identity", 900, random_surface),
        ("regular-variation closed forms", 600, mrv_closed_forms),
        ("entrance and ruin asymptote", 600, theorem61),
        ("summability machinery", 120, assumption62),
        ("engine integrity", 300, engine_integrity),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let out = f();
        let took = start.elapsed();
        let in_time = took <= Duration::from_secs(*limit);
        let pass = out.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {id:>2} {name}: {} [{:.1}s / {limit}s{}]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            took.as_secs_f64(),
            if in_time { "" } else { ", over time" }
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
