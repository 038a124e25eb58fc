//! Bundled reproduction recipes, one per acceptance check of the library.

use raretail::large_deviations::CountingProcess;
use raretail::mc::Budget;
use raretail::rare_sets::{RareSetSpec, RuinSetKind};
use raretail::risk_engine::RiskModel;
use raretail::scalar_laws::ScalarLaw;
use raretail::vector_laws::VectorLaw;

use crate::config::{Experiment, ExperimentConfig, ExperimentEntry, XSpec};

pub const PRESET_SEED: u64 = 20_240_601;

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    /// Wall-clock limit on a 4-core desktop at budget scale 1.
    pub time_limit_s: u64,
    build: fn() -> Vec<ExperimentEntry>,
}

impl Preset {
    pub fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            seed: PRESET_SEED,
            workers: None,
            chunk: None,
            budget: Budget::crude(100_000),
            out_dir: None,
            experiments: (self.build)(),
        }
    }
}

pub static PRESETS: &[Preset] = &[
    Preset {
        name: "projection_duality",
        description: "Membership via the projection Y_A against set definitions on 1e5 random pairs, with a grid-scan check of Y_A",
        time_limit_s: 10,
        build: projection_duality,
    },
    Preset {
        name: "class_chain",
        description: "Class verdicts for Pareto(2.5), Exponential(1) and Weibull(0.5) by quadrature",
        time_limit_s: 60,
        build: class_chain,
    },
    Preset {
        name: "strong_subexp_ratio",
        description: "Integrated-tail convolution ratio for Pareto(2.5) out to x = 2^17 * 8",
        time_limit_s: 30,
        build: strong_subexp,
    },
    Preset {
        name: "single_big_jump",
        description: "Geometric(0.5)-stopped sum of bivariate Pareto(2) claims against E[tau] P[X in xA] at P[X in xA] = 5e-4",
        time_limit_s: 300,
        build: single_big_jump,
    },
    Preset {
        name: "kesten_bound",
        description: "Kesten ratio table for n <= 30, c = 3, stable when the budget doubles",
        time_limit_s: 600,
        build: kesten,
    },
    Preset {
        name: "th5_1_surface",
        description: "Fixed-n large-deviation surface, n in {2, 5, 10}, x multiples {1, 2, 4} of the gamma = 0.9 threshold",
        time_limit_s: 900,
        build: fixed_surface,
    },
    Preset {
        name: "th5_2_random_sums",
        description: "Random-sum surface: unit-spaced arrivals reproduce the fixed-n cells, Poisson(1) at t = 10",
        time_limit_s: 900,
        build: random_surface,
    },
    Preset {
        name: "cor4_1_mrv",
        description: "Regular-variation closed forms for stopped sums and ruin at x = 1e3 against splitting CIs, with the mu(A) check",
        time_limit_s: 600,
        build: mrv,
    },
    Preset {
        name: "th6_1_entrance",
        description: "Entrance and ruin probabilities at asymptote level 1e-3, t in {5, 10}, with the ruin/entrance coupling",
        time_limit_s: 600,
        build: entrance,
    },
    Preset {
        name: "summability",
        description: "Summability of the delayed-arrival series for Poisson arrivals and for an arrival storm",
        time_limit_s: 120,
        build: summability,
    },
    Preset {
        name: "engine_integrity",
        description: "Crude against splitting on 20 seeded events at P = 1e-2, zero-hit reporting, bit-identical reruns",
        time_limit_s: 300,
        build: engine_integrity,
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

fn entry(name: &str, budget: Option<Budget>, experiment: Experiment) -> ExperimentEntry {
    ExperimentEntry {
        name: name.to_string(),
        budget,
        experiment,
    }
}

fn p2() -> ScalarLaw {
    ScalarLaw::pareto(2.0, 1.0).unwrap()
}

fn iid_p2() -> VectorLaw {
    VectorLaw::iid(p2(), 2).unwrap()
}

fn half() -> RareSetSpec {
    RareSetSpec::Halfspace {
        l: vec![0.5, 0.5],
        c: 1.0,
    }
}

fn poisson_model(claims: VectorLaw) -> RiskModel {
    RiskModel::new(
        vec![0.5, 0.5],
        &[1.0, 1.0],
        0.05,
        claims,
        CountingProcess::poisson(1.0).unwrap(),
        10.0,
        RuinSetKind::SumNegative,
    )
    .unwrap()
}

fn projection_duality() -> Vec<ExperimentEntry> {
    vec![entry(
        "projection",
        None,
        Experiment::ProjectionCheck {
            pairs: 100_000,
            dim: 3,
            delta: 1e-4,
        },
    )]
}

fn class_chain() -> Vec<ExperimentEntry> {
    [
        ("pareto_2_5", ScalarLaw::pareto(2.5, 1.0).unwrap()),
        ("exponential_1", ScalarLaw::exponential(1.0).unwrap()),
        ("weibull_0_5", ScalarLaw::weibull(0.5, 1.0).unwrap()),
    ]
    .into_iter()
    .map(|(n, law)| entry(n, None, Experiment::ClassDiag { law, grid: None }))
    .collect()
}

fn strong_subexp() -> Vec<ExperimentEntry> {
    vec![entry(
        "pareto_2_5",
        None,
        Experiment::ClassDiag {
            law: ScalarLaw::pareto(2.5, 1.0).unwrap(),
            grid: None,
        },
    )]
}

fn single_big_jump() -> Vec<ExperimentEntry> {
    vec![entry(
        "geometric_stop",
        Some(Budget::splitting(1_000_000, 25_000, 8)),
        Experiment::StoppedSum {
            law: iid_p2(),
            tau: ScalarLaw::geometric(0.5).unwrap(),
            set: half(),
            x: XSpec::Target(5e-4),
            tol: 0.20,
        },
    )]
}

fn kesten() -> Vec<ExperimentEntry> {
    vec![entry(
        "kesten",
        Some(Budget::crude(200_000)),
        Experiment::Kesten {
            law: iid_p2(),
            set: half(),
            c: 3.0,
            n_max: 30,
            x_grid: (2..=6).map(|k| 2f64.powi(k)).collect(),
            stability_factor: Some(2.0),
            tol: 0.10,
        },
    )]
}

fn surface_budget() -> Option<Budget> {
    Some(Budget::splitting(200_000, 10_000, 8))
}

fn fixed_surface() -> Vec<ExperimentEntry> {
    vec![entry(
        "fixed_n",
        surface_budget(),
        Experiment::PldFixed {
            law: iid_p2(),
            set: half(),
            n_list: vec![2, 5, 10],
            x_mults: vec![1.0, 2.0, 4.0],
            gamma: Some(0.9),
            tol: 0.15,
        },
    )]
}

fn random_surface() -> Vec<ExperimentEntry> {
    let mults = vec![1.0, 2.0, 4.0];
    vec![
        entry(
            "unit_spacing",
            surface_budget(),
            Experiment::PldRandom {
                law: iid_p2(),
                arrivals: CountingProcess::deterministic(1.0).unwrap(),
                set: half(),
                t_list: vec![2.5, 5.5, 10.5],
                x_mults: mults.clone(),
                gamma: Some(0.9),
                tol: 0.15,
                compare_fixed_n: Some(vec![2, 5, 10]),
            },
        ),
        entry(
            "poisson",
            surface_budget(),
            Experiment::PldRandom {
                law: iid_p2(),
                arrivals: CountingProcess::poisson(1.0).unwrap(),
                set: half(),
                t_list: vec![10.0],
                x_mults: mults,
                gamma: Some(0.9),
                tol: 0.20,
                compare_fixed_n: None,
            },
        ),
    ]
}

fn mrv() -> Vec<ExperimentEntry> {
    let v = VectorLaw::mrv(2.0, p2(), 2, vec![0.5, 0.5]).unwrap();
    let b = Some(Budget::splitting(1_000_000, 20_000, 8));
    vec![
        entry(
            "stopped",
            b.clone(),
            Experiment::StoppedSum {
                law: v.clone(),
                tau: ScalarLaw::geometric(0.5).unwrap(),
                set: half(),
                x: XSpec::Values(vec![1e3]),
                tol: 0.20,
            },
        ),
        entry(
            "ruin",
            b,
            Experiment::Ruin {
                model: poisson_model(v),
                x: XSpec::Values(vec![1e3]),
                t_list: vec![10.0],
                tol: 0.25,
                coupling_paths: None,
            },
        ),
    ]
}

fn entrance() -> Vec<ExperimentEntry> {
    let b = Some(Budget::splitting(400_000, 20_000, 8));
    vec![
        entry(
            "entrance",
            b.clone(),
            Experiment::Entrance {
                model: poisson_model(iid_p2()),
                set: Some(half()),
                x: XSpec::Target(1e-3),
                t_list: vec![5.0, 10.0],
                tol: 0.25,
            },
        ),
        entry(
            "ruin",
            b,
            Experiment::Ruin {
                model: poisson_model(iid_p2()),
                x: XSpec::Target(1e-3),
                t_list: vec![5.0, 10.0],
                tol: 0.25,
                coupling_paths: Some(400_000),
            },
        ),
    ]
}

fn summability() -> Vec<ExperimentEntry> {
    let mut storm = poisson_model(iid_p2());
    storm.arrivals = CountingProcess::deterministic(1e-6).unwrap();
    vec![
        entry(
            "poisson",
            Some(Budget::crude(100_000)),
            Experiment::Assumption62 {
                model: poisson_model(iid_p2()),
                set: Some(half()),
                c: None,
                t_star: 10.0,
                n_cap: 100,
            },
        ),
        entry(
            "storm",
            Some(Budget::crude(1000)),
            Experiment::Assumption62 {
                model: storm,
                set: Some(half()),
                c: None,
                t_star: 1.0,
                n_cap: 100,
            },
        ),
    ]
}

fn engine_integrity() -> Vec<ExperimentEntry> {
    vec![entry(
        "engine",
        Some(Budget::splitting(100_000, 5_000, 8)),
        Experiment::EngineCheck {
            events: 20,
            p: 1e-2,
        },
    )]
}
