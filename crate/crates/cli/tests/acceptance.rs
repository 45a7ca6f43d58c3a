//! Acceptance suite: one PASS/FAIL line per criterion, each with its runtime
//! budget. Runs without the libtest harness so the lines always print.

use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::time::{Duration, Instant};

use gaslight_cli::{run, Command, ScenarioConfig};
use gaslight_core::dp::enumerate_policies_oracle;
use gaslight_core::model::{Dynamics, NoiseFamily, ObservationMap, ProcessNoise, RunningCost, TerminalCost};
use gaslight_core::robustness::{
    compute_constants, lemma1_harness, lemma2_harness, paired_run, prior_gap, theorem1_bound, theorem1_harness,
    ZetaMode,
};
use gaslight_core::stats::{mix_seed, run_trials};
use gaslight_core::{
    backward_induction, scenarios, ControlPolicy, DpOptions, EffortShape, GaslightEffort, Grid, InformationState,
    SystemModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Criterion<'a> = (&'static str, Duration, Box<dyn Fn() -> Outcome + 'a>);

struct Outcome {
    passed: bool,
    detail: String,
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> gaslight_cli::Scenario {
    ScenarioConfig::load(&configs().join(name))
        .and_then(ScenarioConfig::validate)
        .unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn criterion1(dir: &Path) -> Outcome {
    let sc = load("canonical.json");
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let out = dir.join("c1");
    pool.install(|| run(Command::Simulate, &sc, &out, false)).unwrap();
    let s = read_json(&out.join("simulate.json"));
    let n = s["n_trials"].as_u64().unwrap();
    let diff = f(&s["difference"]);
    let se = f(&s["combined_std_error"]);
    Outcome {
        passed: n >= 100_000 && diff.abs() <= 4.0 * se,
        detail: format!("n={n} |direct − info_state|={:.3e} ≤ 4·{se:.3e}", diff.abs()),
    }
}

fn criterion2() -> Outcome {
    let sc = load("canonical.json");
    let model = &sc.model;
    let efforts = sc.menu.stationary_efforts(model, sc.config.t).unwrap();
    let constants = compute_constants(model, &efforts, ZetaMode::Analytic).unwrap();
    let policy = ControlPolicy::best_response(backward_induction(model, None, &sc.config.dp).unwrap());
    let seed = mix_seed(sc.config.seed, "acceptance-2");
    let l1 = lemma1_harness(model, &constants, 1000, seed).unwrap();
    let l2 = lemma2_harness(model, &constants, &efforts, 1000, seed ^ 1).unwrap();
    let t1 = theorem1_harness(model, &constants, &efforts, &policy, 1000, seed ^ 2).unwrap();
    let v = |r: &[gaslight_core::robustness::BoundRecord]| r.iter().filter(|x| !x.holds()).count();
    let (v1, v2, v3) = (v(&l1), v(&l2), v(&t1));
    let gaps = run_trials(1000, seed ^ 3, |i, rng| {
        let e = &efforts[i % efforts.len()];
        let run = paired_run(model, e, &policy, rng).unwrap();
        let d0 = prior_gap(model, e).unwrap();
        theorem1_bound(&constants, model.obs_noise(), &run.observations, e, d0)
            .unwrap()
            .max_relative_gap()
    });
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    let t1_instances = t1.iter().map(|r| r.trial).collect::<std::collections::BTreeSet<_>>().len();
    Outcome {
        passed: v1 + v2 + v3 == 0 && l1.len() >= 1000 && l2.len() >= 1000 && t1_instances >= 1000 && worst <= 1e-10,
        detail: format!(
            "violations lemma1={v1}/{} lemma2={v2}/{} theorem1={v3}/{} runs; recursion vs closed form max rel gap {worst:.1e}",
            l1.len(),
            l2.len(),
            t1_instances
        ),
    }
}

fn theorem23_rows(dir: &Path, config: &str) -> Vec<Value> {
    let sc = load(config);
    let out = dir.join(format!("c3-{config}"));
    run(Command::VerifyBounds, &sc, &out, false).unwrap();
    read_json(&out.join("bounds_summary.json"))["theorem2_3"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["certified"] == Value::Bool(true) && r["effort"] != "nominal")
        .cloned()
        .collect()
}

fn criterion3(dir: &Path) -> Outcome {
    let canonical = theorem23_rows(dir, "canonical.json");
    let wide = theorem23_rows(dir, "wide.json");
    let ok = |rows: &[Value], key: &str| rows.iter().all(|r| r[key] == Value::Bool(true));
    let passed = canonical.len() >= 10
        && wide.len() >= 10
        && ok(&canonical, "theorem2_holds")
        && ok(&canonical, "lhs_within_volume_corrected")
        && ok(&canonical, "lhs_within_stated")
        && ok(&wide, "theorem2_holds")
        && ok(&wide, "lhs_within_volume_corrected");
    let worst = canonical
        .iter()
        .chain(&wide)
        .map(|r| f(&r["lhs"]) / f(&r["theorem3_volume_corrected"]))
        .fold(0.0, f64::max);
    Outcome {
        passed,
        detail: format!(
            "{} + {} certified efforts at 10⁴ CRN trials; largest lhs / volume-corrected bound {worst:.2e}",
            canonical.len(),
            wide.len()
        ),
    }
}

fn criterion4(dir: &Path) -> Outcome {
    let sc = load("canonical.json");
    let out = dir.join("c4");
    run(Command::Stealth, &sc, &out, false).unwrap();
    let j = read_json(&out.join("stealth.json"));
    let stages: Vec<&Value> = j["candidates"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|c| c["report"]["stages"].as_array().unwrap())
        .collect();
    let chain = stages
        .iter()
        .all(|s| s["sufficient_pass"] != Value::Bool(true) || s["empirical_pass"] == Value::Bool(true));
    let failing: Vec<&str> = j["candidates"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| {
            c["report"]["stages"]
                .as_array()
                .unwrap()
                .iter()
                .any(|s| s["sufficient_pass"] == Value::Bool(false) && s["empirical_pass"] == Value::Bool(false))
        })
        .map(|c| c["id"].as_str().unwrap())
        .collect();
    Outcome {
        passed: chain && !failing.is_empty(),
        detail: format!("{} stage checks, chain holds: {chain}; failing both: {failing:?}", stages.len()),
    }
}

fn random_tiny(rng: &mut ChaCha8Rng) -> SystemModel {
    let mut spec = scenarios::tiny();
    spec.dynamics = Dynamics::Linear {
        a: rng.gen_range(-1.0..1.0),
        b: rng.gen_range(-1.0..1.0),
    };
    spec.controls = vec![vec![rng.gen_range(-1.0..0.0), rng.gen_range(0.0..1.0)]];
    spec.observation = ObservationMap::Affine {
        slope: rng.gen_range(-0.5..0.5),
        offset: rng.gen_range(0.0..1.0),
    };
    spec.running_cost = RunningCost::Quadratic {
        state_weight: rng.gen_range(0.0..1.0),
        control_weight: rng.gen_range(0.0..1.0),
    };
    spec.terminal_cost = TerminalCost::Quadratic {
        weight: rng.gen_range(0.0..1.0),
        center: rng.gen_range(-1.0..1.0),
    };
    spec.process_noise = ProcessNoise {
        half_width: 1.0,
        n_points: 9,
        family: NoiseFamily::TruncatedNormal {
            loc: 0.0,
            scale: rng.gen_range(0.2..1.0),
        },
    };
    spec.observation_noise = NoiseFamily::TruncatedNormal {
        loc: rng.gen_range(0.2..0.8),
        scale: rng.gen_range(0.15..0.6),
    };
    spec.prior = NoiseFamily::TruncatedNormal {
        loc: rng.gen_range(-0.5..0.5),
        scale: rng.gen_range(0.3..1.0),
    };
    spec.mu = rng.gen_range(0.05..1.0);
    SystemModel::new(spec).unwrap()
}

fn random_state(grid: &Grid, rng: &mut ChaCha8Rng) -> InformationState {
    InformationState::new(*grid, (0..grid.len()).map(|_| rng.gen_range(0.0..2.0)).collect()).unwrap()
}

fn criterion5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let opts = DpOptions::with_nodes(3);
    let mut worst_oracle: f64 = 0.0;
    let mut worst_homog: f64 = 0.0;
    let mut concavity_violations = 0;
    for i in 0..100 {
        let m = random_tiny(&mut rng);
        let effort = if i % 2 == 1 {
            let slope = rng.gen_range(-0.5..0.5);
            let d = EffortShape::Tilt { slope }.build(m.obs_noise()).unwrap();
            Some(GaslightEffort::new(&m, vec![d; m.horizon()], 0.01).unwrap())
        } else {
            None
        };
        let a = backward_induction(&m, effort.as_ref(), &opts).unwrap();
        let rho = InformationState::from(m.prior());
        let dp = a.value(&rho, 0).unwrap();
        let oracle = enumerate_policies_oracle(&m, effort.as_ref(), 3).unwrap();
        worst_oracle = worst_oracle.max((dp - oracle).abs() / oracle.abs().max(1.0));
        let grid = *m.state_grid();
        for k in 0..=m.horizon() {
            let s1 = random_state(&grid, &mut rng);
            let s2 = random_state(&grid, &mut rng);
            let lambda = rng.gen_range(0.1..10.0);
            let v1 = a.value(&s1, k).unwrap();
            let v2 = a.value(&s2, k).unwrap();
            let vl = a.value(&s1.scaled(lambda), k).unwrap();
            worst_homog = worst_homog.max((vl - lambda * v1).abs() / (lambda * v1).abs().max(1.0));
            let theta = rng.gen_range(0.0..1.0);
            let mix = s1.combine(theta, &s2, 1.0 - theta).unwrap();
            let vm = a.value(&mix, k).unwrap();
            if vm < theta * v1 + (1.0 - theta) * v2 - 1e-12 * vm.abs().max(1.0) {
                concavity_violations += 1;
            }
        }
    }
    Outcome {
        passed: worst_oracle <= 1e-10 && worst_homog <= 1e-12 && concavity_violations == 0,
        detail: format!(
            "100 instances: max rel DP−oracle {worst_oracle:.1e}; max homogeneity error {worst_homog:.1e}; concavity violations {concavity_violations}"
        ),
    }
}

fn criterion6(dir: &Path) -> Outcome {
    let nominal = load("nominal_only.json");
    let out = dir.join("c6-nominal");
    run(Command::Equilibrium, &nominal, &out, false).unwrap();
    let n = read_json(&out.join("equilibrium.json"));
    let nv = &n["result"]["objective"]["value"];
    let nominal_ok = f(&nv["mean"]).abs() <= 4.0 * f(&nv["std_error"]);

    let target = load("gaslight_target.json");
    let out = dir.join("c6-target");
    let report = run(Command::Equilibrium, &target, &out, false).unwrap();
    let r = &read_json(&out.join("equilibrium.json"))["result"];
    let ids: Vec<&str> = r["chosen_ids"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    let v = &r["objective"]["value"];
    let (mean, se) = (f(&v["mean"]), f(&v["std_error"]));
    let t5 = &r["theorem5"];
    let check = |name: &str| report.checks.iter().any(|c| c.name == name && c.passed);
    let passed = nominal_ok
        && target.config.t == 0.01
        && target.model.spec().running_cost == RunningCost::Zero
        && ids.iter().any(|id| *id != "nominal")
        && t5["applicable"] == Value::Bool(true)
        && t5["selected_meets_conservative"] == Value::Bool(true)
        && mean < -4.0 * se
        && check("candidate_table_consistent");
    Outcome {
        passed,
        detail: format!(
            "nominal menu ℐ={:.1e}; target selects {ids:?} with ℐ={mean:.4} (SE {se:.1e}), conservative bound {:.3e}",
            f(&nv["mean"]),
            f(&t5["conservative"])
        ),
    }
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn strip_wall_time(bytes: &[u8]) -> Value {
    let mut v: Value = serde_json::from_slice(bytes).unwrap();
    v.as_object_mut().unwrap().remove("wall_time_s");
    v
}

fn criterion7(dir: &Path) -> Outcome {
    let exe = env!("CARGO_BIN_EXE_gaslight");
    let jobs = [
        ("simulate", "tiny.json"),
        ("verify-bounds", "tiny.json"),
        ("stealth", "canonical.json"),
        ("solve", "tiny.json"),
        ("equilibrium", "gaslight_target.json"),
    ];
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for (cmd, config) in jobs {
        let runs: Vec<PathBuf> = [("1", "a"), ("4", "b")]
            .iter()
            .map(|(threads, tag)| {
                let out = dir.join(format!("c7-{cmd}-{tag}"));
                let status = Process::new(exe)
                    .args([cmd, "--config"])
                    .arg(configs().join(config))
                    .arg("--out")
                    .arg(&out)
                    .args(["--threads", threads])
                    .output()
                    .unwrap()
                    .status;
                assert_eq!(status.code(), Some(0), "{cmd} {config}");
                out
            })
            .collect();
        let (a, b) = (files(&runs[0]), files(&runs[1]));
        if a.len() != b.len() {
            mismatches.push(format!("{cmd}: file lists differ"));
            continue;
        }
        for (fa, fb) in a.iter().zip(&b) {
            let (ba, bb) = (std::fs::read(fa).unwrap(), std::fs::read(fb).unwrap());
            let same = if fa.ends_with("run_report.json") {
                strip_wall_time(&ba) == strip_wall_time(&bb)
            } else {
                ba == bb
            };
            compared += 1;
            if !same {
                mismatches.push(format!("{cmd}: {}", fa.display()));
            }
        }
    }
    Outcome {
        passed: mismatches.is_empty() && compared > 0,
        detail: format!("{compared} files compared across 1 and 4 threads; mismatches {mismatches:?}"),
    }
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let criteria: Vec<Criterion<'_>> = vec![
        ("1 cost representations agree", Duration::from_secs(120), Box::new(|| criterion1(dir))),
        ("2 lemma 1, lemma 2, theorem 1", Duration::from_secs(60), Box::new(criterion2)),
        ("3 theorems 2 and 3", Duration::from_secs(300), Box::new(|| criterion3(dir))),
        ("4 stealthiness chain", Duration::from_secs(60), Box::new(|| criterion4(dir))),
        ("5 DP equals policy enumeration", Duration::from_secs(60), Box::new(criterion5)),
        ("6 equilibrium sanity", Duration::from_secs(600), Box::new(|| criterion6(dir))),
        ("7 determinism", Duration::from_secs(600), Box::new(|| criterion7(dir))),
    ];
    let mut failed = 0;
    for (name, budget, check) in &criteria {
        let start = Instant::now();
        let o = check();
        let elapsed = start.elapsed();
        let passed = o.passed && elapsed <= *budget;
        if !passed {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {} [{:.1}s of {}s]",
            if passed { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
