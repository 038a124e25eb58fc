//! Dispatch from config entries to library calls, and the per-experiment
//! outcome that feeds `report.json` and `data.csv`.

use std::collections::BTreeMap;

use raretail::class_diagnostics::{classify, default_grid};
use raretail::convolution_stopped_sums::{
    kesten_table, kesten_verdict, maxsum_ratio, mrv_stopped_closed_form, nfold_ratio,
    stopped_sum_tail, stopping_condition, StoppedSumModel,
};
use raretail::large_deviations::{pld_fixed_n_surface, pld_random_surface, CellStatus, Surface};
use raretail::mc::{Budget, Engine, Estimate, PathRng, RngStream, SplittingConfig, UniformSource};
use raretail::rare_sets::{RareSet, RareSetSpec, RuinSetKind};
use raretail::report::{DataRow, TrendReport, Verdict};
use raretail::risk_engine::{
    calibrate_x, check_assumption_62, entrance_probability, mrv_closed_form,
    ruin_entrance_coupling, ruin_probability, theorem61_asymptote, weighted_sum_uniformity,
    RiskModel,
};
use raretail::scalar_laws::ScalarLaw;
use raretail::vector_laws::VectorLaw;
use raretail::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Experiment, ExperimentEntry, XSpec};

/// Largest relative gap between `P[X ∈ xA]/V̄(x)` and `μ(A)`.
pub const MU_TOL: f64 = 0.10;
/// Bracket for asymptote calibration.
pub const CALIBRATION_BRACKET: (f64, f64) = (1e-2, 1e8);
const IDENTITY_TOL: f64 = 1e-12;

type Member = Box<dyn Fn(&[f64], f64) -> bool>;

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub name: String,
    pub kind: &'static str,
    pub verdicts: BTreeMap<String, String>,
    pub estimates: usize,
    pub zero_hits: usize,
    pub zero_hit_dominated: bool,
    pub budget: Budget,
    pub result: Value,
    #[serde(skip)]
    pub rows: Vec<DataRow>,
}

struct Collector {
    name: String,
    verdicts: BTreeMap<String, String>,
    rows: Vec<DataRow>,
    estimates: usize,
    zero_hits: usize,
}

impl Collector {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            verdicts: BTreeMap::new(),
            rows: Vec::new(),
            estimates: 0,
            zero_hits: 0,
        }
    }

    fn verdict(&mut self, key: &str, v: Verdict) {
        self.verdicts.insert(key.to_string(), format!("{v:?}"));
    }

    fn check(&mut self, key: &str, ok: bool) {
        self.verdict(
            key,
            if ok {
                Verdict::Consistent
            } else {
                Verdict::Inconsistent
            },
        );
    }

    fn count(&mut self, e: &Estimate) {
        self.estimates += 1;
        if e.zero_hit {
            self.zero_hits += 1;
        }
    }

    /// Trend ratios of exactly zero come from zero-hit numerators.
    fn count_trend(&mut self, t: &TrendReport) {
        self.estimates += t.ratios.len();
        self.zero_hits += t.ratios.iter().filter(|r| **r == 0.0).count();
    }

    fn row(&self, series: impl Into<String>, index: usize) -> DataRow {
        DataRow {
            experiment: self.name.clone(),
            series: series.into(),
            index,
            ..DataRow::default()
        }
    }

    fn finish(self, kind: &'static str, budget: &Budget, result: Value) -> Outcome {
        Outcome {
            name: self.name,
            kind,
            budget: budget.clone(),
            verdicts: self.verdicts,
            zero_hit_dominated: self.estimates > 0 && 2 * self.zero_hits > self.estimates,
            estimates: self.estimates,
            zero_hits: self.zero_hits,
            result,
            rows: self.rows,
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result serializes")
}

fn ratio_ci(e: &Estimate, den: f64) -> (f64, f64, f64) {
    (e.value / den, e.ci95.0 / den, e.ci95.1 / den)
}

fn default_gamma(law: &VectorLaw) -> Result<f64> {
    let marginals: Vec<ScalarLaw> = match law {
        VectorLaw::Independent { marginals } => marginals.clone(),
        VectorLaw::Lwqd { common, .. } => vec![*common],
        VectorLaw::Mrv { radial, .. } => vec![*radial],
    };
    let mut gamma = f64::INFINITY;
    for m in &marginals {
        gamma = gamma.min(m.insensitivity()?.gamma);
    }
    Ok(gamma)
}

/// Structural checks without simulation: laws, sets, dimensions, models.
pub fn validate(exp: &Experiment) -> Result<()> {
    let dims = |law: &VectorLaw, set: &RareSetSpec| -> Result<RareSet> {
        law.validate()?;
        let s = set.build()?;
        if s.dim() != law.dim() {
            return Err(Error::DimensionMismatch {
                expected: law.dim(),
                got: s.dim(),
            });
        }
        Ok(s)
    };
    match exp {
        Experiment::ClassDiag { law, .. } => law.validate(),
        Experiment::Maxsum {
            law1, law2, set, ..
        } => {
            dims(law1, set)?;
            dims(law2, set).map(drop)
        }
        Experiment::Nfold { law, set, .. }
        | Experiment::Kesten { law, set, .. }
        | Experiment::PldFixed { law, set, .. }
        | Experiment::WeightedUniformity { law, set, .. } => dims(law, set).map(drop),
        Experiment::StoppedSum { law, tau, set, .. } => {
            dims(law, set)?;
            StoppedSumModel::new(law.clone(), *tau).map(drop)
        }
        Experiment::PldRandom {
            law, arrivals, set, ..
        } => {
            dims(law, set)?;
            arrivals.validate()
        }
        Experiment::Entrance { model, set, .. } | Experiment::Assumption62 { model, set, .. } => {
            model.validate()?;
            match set {
                Some(s) => dims(&model.claims, s).map(drop),
                None => model.ruin_set().map(drop),
            }
        }
        Experiment::Ruin { model, .. } => model.validate(),
        Experiment::ProjectionCheck { pairs, dim, delta } => {
            if *pairs == 0 || *dim == 0 || !(*delta > 0.0) {
                return Err(Error::InvalidParameter(
                    "projection check needs pairs, dim >= 1 and delta > 0".into(),
                ));
            }
            Ok(())
        }
        Experiment::EngineCheck { events, p } => {
            if *events == 0 || !(*p > 0.0 && *p < 1.0) {
                return Err(Error::InvalidParameter(
                    "engine check needs events >= 1 and 0 < p < 1".into(),
                ));
            }
            Ok(())
        }
    }
}

/// Run one entry. `budget` is already resolved and scaled; `scale` is also
/// applied to auxiliary path counts.
pub fn run_entry(
    entry: &ExperimentEntry,
    engine: &Engine,
    budget: &Budget,
    scale: f64,
) -> Result<Outcome> {
    budget.validate()?;
    validate(&entry.experiment)?;
    let mut c = Collector::new(&entry.name);
    let kind = entry.experiment.kind();
    let result = match &entry.experiment {
        Experiment::ClassDiag { law, grid } => {
            class_diag(&mut c, law, grid.clone().unwrap_or_else(default_grid))?
        }
        Experiment::Maxsum {
            law1,
            law2,
            set,
            x_grid,
        } => {
            let t = maxsum_ratio(law1, law2, &set.build()?, x_grid, engine, budget)?;
            trend(&mut c, "maxsum", t)
        }
        Experiment::Nfold {
            law,
            set,
            n,
            x_grid,
        } => {
            let t = nfold_ratio(law, &set.build()?, *n, x_grid, engine, budget)?;
            trend(&mut c, "nfold", t)
        }
        Experiment::Kesten {
            law,
            set,
            c: kc,
            n_max,
            x_grid,
            stability_factor,
            tol,
        } => {
            let set = set.build()?;
            let a = kesten_table(law, &set, *kc, *n_max, x_grid, engine, budget)?;
            c.verdict("kesten", kesten_verdict(&a));
            for (n, row) in a.k.iter().enumerate() {
                for (j, k) in row.iter().enumerate() {
                    c.estimates += 1;
                    if *k == 0.0 {
                        c.zero_hits += 1;
                    }
                    let r = DataRow {
                        x: a.x_grid[j],
                        estimate: *k,
                        method: "kesten".into(),
                        ..c.row("K", n + 1)
                    };
                    c.rows.push(r);
                }
            }
            let mut out = json!({ "table": to_value(&a) });
            if let Some(f) = stability_factor {
                let b = kesten_table(law, &set, *kc, *n_max, x_grid, engine, &budget.scaled(*f))?;
                let change = (b.sup - a.sup).abs() / a.sup;
                c.check("stability", b.bounded && change < *tol);
                out["rerun_paths"] = json!(b.paths);
                out["rerun_sup"] = json!(b.sup);
                out["sup_change"] = json!(change);
            }
            out
        }
        Experiment::StoppedSum {
            law,
            tau,
            set,
            x,
            tol,
        } => stopped_sum(&mut c, law, *tau, &set.build()?, x, *tol, engine, budget)?,
        Experiment::PldFixed {
            law,
            set,
            n_list,
            x_mults,
            gamma,
            tol,
        } => {
            let g = match gamma {
                Some(g) => *g,
                None => default_gamma(law)?,
            };
            let s = pld_fixed_n_surface(law, &set.build()?, n_list, x_mults, g, engine, budget)?;
            surface(&mut c, "n", &s, *tol);
            to_value(&s)
        }
        Experiment::PldRandom {
            law,
            arrivals,
            set,
            t_list,
            x_mults,
            gamma,
            tol,
            compare_fixed_n,
        } => {
            let g = match gamma {
                Some(g) => *g,
                None => default_gamma(law)?,
            };
            let set = set.build()?;
            let s = pld_random_surface(law, arrivals, &set, t_list, x_mults, g, engine, budget)?;
            surface(&mut c, "t", &s, *tol);
            let mut out = json!({ "surface": to_value(&s) });
            if let Some(n_list) = compare_fixed_n {
                let f = pld_fixed_n_surface(law, &set, n_list, x_mults, g, engine, budget)?;
                let identical = f.cells.len() == s.cells.len()
                    && f.cells
                        .iter()
                        .zip(&s.cells)
                        .all(|(a, b)| a.estimate == b.estimate && a.x == b.x);
                c.check("reduction", identical);
                out["fixed_n_identical"] = json!(identical);
            }
            out
        }
        Experiment::Entrance {
            model,
            set,
            x,
            t_list,
            tol,
        } => {
            let set = match set {
                Some(s) => s.build()?,
                None => model.ruin_set()?,
            };
            risk(&mut c, model, &set, x, t_list, *tol, None, engine, budget)?
        }
        Experiment::Ruin {
            model,
            x,
            t_list,
            tol,
            coupling_paths,
        } => {
            let paths = coupling_paths.map(|p| ((p as f64 * scale).round() as u64).max(1));
            risk(
                &mut c,
                model,
                &model.ruin_set()?,
                x,
                t_list,
                *tol,
                Some(paths),
                engine,
                budget,
            )?
        }
        Experiment::Assumption62 {
            model,
            set,
            c: kc,
            t_star,
            n_cap,
        } => {
            let set = match set {
                Some(s) => s.build()?,
                None => model.ruin_set()?,
            };
            let a = check_assumption_62(model, &set, *kc, *t_star, *n_cap, engine, budget)?;
            c.verdicts
                .insert("summability".into(), format!("{:?}", a.verdict));
            let gap = (a.partial_sum_count - a.partial_sum_epochs).abs()
                / a.partial_sum_count.abs().max(f64::MIN_POSITIVE);
            c.check(
                "identity",
                gap <= IDENTITY_TOL && a.max_term_gap <= IDENTITY_TOL,
            );
            for (i, term) in a.terms.iter().enumerate() {
                c.rows.push(DataRow {
                    estimate: *term,
                    method: a.numerator.clone(),
                    ..c.row("term", i + 1)
                });
            }
            let mut out = to_value(&a);
            out["identity_gap"] = json!(gap);
            out
        }
        Experiment::WeightedUniformity {
            law,
            set,
            n,
            a,
            b,
            c_samples,
            x_grid,
        } => {
            let w = weighted_sum_uniformity(
                law,
                &set.build()?,
                *n,
                *a,
                *b,
                *c_samples,
                x_grid,
                engine,
                budget,
            )?;
            c.verdict("uniformity", w.trend.verdict);
            for cell in &w.cells {
                c.count(&cell.joint);
                let r = DataRow {
                    x: cell.x,
                    target: cell.singles,
                    ratio: cell.ratio,
                    dev: cell.ratio - 1.0,
                    ..c.row(format!("draw={}", cell.draw), cell.draw)
                };
                c.rows.push(r.with_estimate(&cell.joint));
            }
            to_value(&w)
        }
        Experiment::ProjectionCheck { pairs, dim, delta } => {
            projection_check(&mut c, engine.seed(), *pairs, *dim, *delta)?
        }
        Experiment::EngineCheck { events, p } => engine_check(&mut c, engine, budget, *events, *p)?,
    };
    Ok(c.finish(kind, budget, result))
}

fn trend(c: &mut Collector, key: &str, t: TrendReport) -> Value {
    c.verdict(key, t.verdict);
    c.count_trend(&t);
    c.rows.extend(t.rows(&c.name, key));
    to_value(&t)
}

fn class_diag(c: &mut Collector, law: &ScalarLaw, grid: Vec<f64>) -> Result<Value> {
    let s = classify(law, &grid)?;
    let parts = [
        ("L", Some(&s.long_tailed)),
        ("D", Some(&s.dominated)),
        ("R", s.regularly_varying.as_ref()),
        ("S", s.subexponential.as_ref()),
        ("S*", s.strong_subexponential.as_ref()),
    ];
    for (key, t) in parts {
        if let Some(t) = t {
            c.verdict(key, t.verdict);
            c.rows.extend(t.rows(&c.name, key));
        }
    }
    if let Some(u) = &s.strongly_subexponential {
        c.verdict("S_*", u.verdict);
        for (uu, t) in &u.per_u {
            c.rows.extend(t.rows(&c.name, &format!("S_*:u={uu}")));
        }
    }
    Ok(to_value(&s))
}

fn resolve_single(law: &VectorLaw, set: &RareSet, x: &XSpec) -> Result<Vec<f64>> {
    match x {
        XSpec::Values(v) => Ok(v.clone()),
        XSpec::Target(p) => match law.fa_tail_inverse(set, *p)? {
            Some(x) => Ok(vec![x]),
            None => Err(Error::Precondition(
                "target x needs a closed-form P[X in xA]; give x values instead".into(),
            )),
        },
    }
}

#[allow(clippy::too_many_arguments)]
fn stopped_sum(
    c: &mut Collector,
    law: &VectorLaw,
    tau: ScalarLaw,
    set: &RareSet,
    x: &XSpec,
    tol: f64,
    engine: &Engine,
    budget: &Budget,
) -> Result<Value> {
    let model = StoppedSumModel::new(law.clone(), tau)?;
    let xs = resolve_single(law, set, x)?;
    if xs.is_empty() {
        return Err(Error::InvalidParameter("empty x list".into()));
    }
    let mean_tau = model.tau_mean()?;
    let mrv = matches!(law, VectorLaw::Mrv { .. });
    let mut cells = Vec::new();
    let mut closed_ok = true;
    let mut mu_dev: f64 = 0.0;
    let mut last = (f64::NAN, f64::NAN, f64::NAN);
    for (i, &xv) in xs.iter().enumerate() {
        let est = stopped_sum_tail(&model, set, xv, engine, budget)?;
        c.count(&est);
        let single = law.fa_tail(set, xv, engine, budget)?;
        let den = mean_tau * single.value;
        let (r, lo, hi) = ratio_ci(&est, den);
        last = (r, lo, hi);
        let row = DataRow {
            x: xv,
            target: den,
            ratio: r,
            dev: r - 1.0,
            ..c.row("single_big_jump", i)
        };
        c.rows.push(row.with_estimate(&est));
        let mut cell = json!({ "x": xv, "estimate": to_value(&est), "single": to_value(&single), "ratio": r, "ratio_ci": [lo, hi] });
        if mrv {
            let cf = mrv_stopped_closed_form(&model, set, xv)?;
            closed_ok &= est.ci95.0 <= cf && cf <= est.ci95.1;
            let row = DataRow {
                x: xv,
                target: cf,
                ratio: est.value / cf,
                dev: est.value / cf - 1.0,
                ..c.row("closed_form", i)
            };
            c.rows.push(row.with_estimate(&est));
            if let VectorLaw::Mrv { radial, .. } = law {
                let mu = law.mu_a(set)?;
                let dev = (single.value / radial.tail(xv) - mu).abs() / mu;
                mu_dev = mu_dev.max(dev);
                cell["closed_form"] = json!(cf);
                cell["mu_a"] = json!(mu);
                cell["mu_dev"] = json!(dev);
            }
        }
        cells.push(cell);
    }
    let (_, lo, hi) = last;
    let half_width = 0.5 * (hi - lo);
    c.verdict(
        "single_big_jump",
        if half_width > tol {
            Verdict::Inconclusive
        } else if lo <= 1.0 && 1.0 <= hi {
            Verdict::Consistent
        } else {
            Verdict::Inconsistent
        },
    );
    let mut sorted = xs.clone();
    sorted.sort_by(f64::total_cmp);
    let grid = [
        sorted[sorted.len() - 1] / 4.0,
        sorted[sorted.len() - 1] / 2.0,
        sorted[sorted.len() - 1],
    ];
    let cond = stopping_condition(&model, set, &grid, engine, &Budget::crude(budget.paths))?;
    c.check("stopping_condition", cond.holds);
    if mrv {
        c.check("closed_form", closed_ok);
        c.check("mu_a", mu_dev <= MU_TOL);
    }
    Ok(
        json!({ "mean_tau": mean_tau, "cells": cells, "last_half_width": half_width, "stopping_condition": to_value(&cond) }),
    )
}

fn surface(c: &mut Collector, key_name: &str, s: &Surface, tol: f64) {
    let live = s
        .cells
        .iter()
        .filter(|c| c.status == CellStatus::Evaluated)
        .count();
    c.verdict(
        "surface",
        if live == 0 {
            Verdict::Inconclusive
        } else if s.within(tol) && s.dev_nonincreasing_in_mult {
            Verdict::Consistent
        } else {
            Verdict::Inconsistent
        },
    );
    for (i, cell) in s.cells.iter().enumerate() {
        let mut row = DataRow {
            x: cell.x,
            threshold: cell.threshold,
            target: cell.target,
            ratio: cell.ratio,
            dev: cell.ratio - 1.0,
            ..c.row(format!("{key_name}={}", cell.key), i)
        };
        match &cell.estimate {
            Some(e) => {
                c.count(e);
                row = row.with_estimate(e);
            }
            None => row.method = "unreachable".into(),
        }
        c.rows.push(row);
    }
}

#[allow(clippy::too_many_arguments)]
fn risk(
    c: &mut Collector,
    model: &RiskModel,
    set: &RareSet,
    x: &XSpec,
    t_list: &[f64],
    tol: f64,
    ruin: Option<Option<u64>>,
    engine: &Engine,
    budget: &Budget,
) -> Result<Value> {
    let quad = Budget::crude(budget.paths);
    let mrv = matches!(model.claims, VectorLaw::Mrv { .. });
    let mut within = true;
    let mut closed_ok = true;
    let mut coupling_ok = true;
    let mut cells = Vec::new();
    let mut index = 0;
    for &t in t_list {
        let xs = match x {
            XSpec::Values(v) => v.clone(),
            XSpec::Target(p) => vec![calibrate_x(
                model,
                set,
                t,
                *p,
                CALIBRATION_BRACKET,
                engine,
                &quad,
            )?],
        };
        for xv in xs {
            let est = match ruin {
                Some(_) => ruin_probability(model, xv, t, engine, budget)?,
                None => entrance_probability(model, set, xv, t, engine, budget)?,
            };
            c.count(&est);
            let asym = theorem61_asymptote(model, set, xv, t, engine, &quad)?;
            let r = est.value / asym;
            within &= (r - 1.0).abs() <= tol;
            let row = DataRow {
                x: xv,
                threshold: t,
                target: asym,
                ratio: r,
                dev: r - 1.0,
                ..c.row(format!("t={t}"), index)
            };
            c.rows.push(row.with_estimate(&est));
            let mut cell = json!({ "t": t, "x": xv, "estimate": to_value(&est), "asymptote": asym, "ratio": r });
            if mrv {
                let cf = mrv_closed_form(model, set, xv, t, engine, &quad)?;
                closed_ok &= est.ci95.0 <= cf && cf <= est.ci95.1;
                let row = DataRow {
                    x: xv,
                    threshold: t,
                    target: cf,
                    ratio: est.value / cf,
                    dev: est.value / cf - 1.0,
                    ..c.row(format!("closed_form:t={t}"), index)
                };
                c.rows.push(row.with_estimate(&est));
                cell["closed_form"] = json!(cf);
            }
            if let Some(Some(paths)) = ruin {
                let k = ruin_entrance_coupling(model, xv, t, engine, paths)?;
                coupling_ok &= k.holds();
                cell["coupling"] = to_value(&k);
            }
            cells.push(cell);
            index += 1;
        }
    }
    c.check("asymptote", within);
    if mrv {
        c.check("closed_form", closed_ok);
    }
    if let Some(Some(_)) = ruin {
        c.check("coupling", coupling_ok);
    }
    Ok(json!({ "cells": cells }))
}

fn projection_check(
    c: &mut Collector,
    seed: u64,
    pairs: u64,
    d: usize,
    delta: f64,
) -> Result<Value> {
    let mut rng = RngStream::new(seed, raretail::mc::stream_id(0x70, 0));
    let names = ["halfspace", "orthant", "ruin_sum", "ruin_any"];
    let mut mismatches = [0u64; 4];
    let mut gaps = [0f64; 4];
    for i in 0..pairs {
        let mut w: Vec<f64> = (0..d).map(|_| rng.uniform() + 0.05).collect();
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= sum);
        let x: Vec<f64> = (0..d).map(|_| 5.0 * rng.uniform()).collect();
        let s = 0.05 + 4.0 * rng.uniform();
        let cc = 0.2 + rng.uniform();
        let k = (i % 4) as usize;
        let (set, member): (RareSet, Member) = match k {
            0 => {
                let l = w.clone();
                (
                    RareSet::halfspace(&w, cc)?,
                    Box::new(move |z, u| l.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() > cc * u),
                )
            }
            1 => {
                let b = w.clone();
                (
                    RareSet::orthant(&w)?,
                    Box::new(move |z, u| z.iter().zip(&b).any(|(z, b)| *z > b * u)),
                )
            }
            2 => {
                let l = w.clone();
                (
                    RareSet::ruin_translate(&w, RuinSetKind::SumNegative)?,
                    Box::new(move |z, u| {
                        l.iter().zip(z).map(|(l, z)| u * l - z).sum::<f64>() < 0.0
                    }),
                )
            }
            _ => {
                let l = w.clone();
                (
                    RareSet::ruin_translate(&w, RuinSetKind::AnyNegative)?,
                    Box::new(move |z, u| l.iter().zip(z).any(|(l, z)| u * l - z < 0.0)),
                )
            }
        };
        if set.contains(&x, s)? != member(&x, s) {
            mismatches[k] += 1;
        }
        let y = set.y_projection(&x)?;
        let mut u = 0.0;
        for step in [0.01, delta / 10.0] {
            while member(&x, u + step) {
                u += step;
            }
        }
        gaps[k] = gaps[k].max((u - y).abs());
    }
    for k in 0..4 {
        let row = DataRow {
            estimate: gaps[k],
            target: delta,
            dev: mismatches[k] as f64,
            method: "grid_scan".into(),
            ..c.row(names[k], k)
        };
        c.rows.push(row);
    }
    c.check("membership", mismatches.iter().all(|m| *m == 0));
    c.check("projection", gaps.iter().all(|g| *g <= delta));
    Ok(
        json!({ "pairs": pairs, "dim": d, "delta": delta, "sets": names, "mismatches": mismatches, "max_gap": gaps }),
    )
}

fn engine_check(
    c: &mut Collector,
    engine: &Engine,
    budget: &Budget,
    events: usize,
    p: f64,
) -> Result<Value> {
    let v = VectorLaw::iid(ScalarLaw::pareto(2.0, 1.0)?, 2)?;
    let set = RareSet::halfspace(&[0.5, 0.5], 1.0)?;
    let x = v.fa_tail_inverse(&set, p)?.expect("closed-form tail");
    let split_cfg = budget.splitting.clone().unwrap_or(SplittingConfig {
        n_per_level: 5000,
        ..SplittingConfig::default()
    });
    let split_budget = Budget {
        paths: 1,
        splitting: Some(split_cfg),
    };
    let crude_budget = Budget::crude(budget.paths);
    let stat = |p: &mut PathRng| {
        let mut a = vec![0.0; 2];
        let mut b = vec![0.0; 2];
        v.sample_blocks(p, 0, &mut a);
        v.sample_blocks(p, 2, &mut b);
        Ok(set.y(&[a[0] + b[0], a[1] + b[1]]))
    };
    let mut overlaps = 0;
    for k in 0..events {
        let eng = engine.reseeded(engine.seed().wrapping_add(k as u64));
        let xk = x * (1.0 + 0.05 * k as f64);
        let tag = 0x7e00 + k as u32;
        let crude = eng.tail(tag, xk, &crude_budget, stat)?;
        let split = eng.tail(tag, xk, &split_budget, stat)?;
        c.count(&crude);
        c.count(&split);
        if crude.overlaps(&split) {
            overlaps += 1;
        }
        c.rows.push(
            DataRow {
                x: xk,
                ..c.row("crude", k)
            }
            .with_estimate(&crude),
        );
        c.rows.push(
            DataRow {
                x: xk,
                ..c.row("splitting", k)
            }
            .with_estimate(&split),
        );
    }
    let zero = engine.crude_event(0x7f00, 3000, |_| Ok(false))?;
    let rule3 = zero.zero_hit && zero.value == 0.0 && (zero.ci95.1 - 1e-3).abs() < 1e-15;
    let rerun = || engine.tail(0x7f01, x, &split_budget, stat);
    let identical = rerun()? == rerun()?;
    c.check("overlap", overlaps == events);
    c.check("rule_of_three", rule3);
    c.check("rerun", identical);
    Ok(
        json!({ "x": x, "events": events, "overlaps": overlaps, "zero_hit_upper": zero.ci95.1, "bit_identical": identical }),
    )
}
