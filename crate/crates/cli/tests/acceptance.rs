//! Acceptance criteria at full scale. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any of them fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use fbplab_cli::suites::{self, Check, Scale};
use fbplab_core::profile::CutSide;
use fbplab_core::rng::derive_seed;

const SEED: u64 = 1;

fn sub(k: u64) -> u64 {
    derive_seed(SEED, &[k])
}

struct Outcome {
    pass: bool,
    note: String,
}

fn judge(checks: &[Check], elapsed: Duration, budget: Option<Duration>) -> Outcome {
    let mut pass = checks.iter().all(|c| c.pass);
    let mut parts: Vec<String> = checks
        .iter()
        .map(|c| {
            let tag = if c.pass { "" } else { " FAILED" };
            format!("{} {:.3e} <= {:.3e}{tag}", c.name, c.metric, c.threshold)
        })
        .collect();
    if let Some(b) = budget {
        if elapsed > b {
            pass = false;
            parts.push(format!("over budget {}s", b.as_secs()));
        }
    }
    parts.push(format!("{:.1}s", elapsed.as_secs_f64()));
    Outcome {
        pass,
        note: parts.join("; "),
    }
}

fn timed(budget: Option<u64>, f: impl FnOnce() -> Vec<Check>) -> Outcome {
    let start = Instant::now();
    let checks = f();
    judge(&checks, start.elapsed(), budget.map(Duration::from_secs))
}

fn output_hashes(dir: &Path) -> BTreeMap<String, String> {
    let text = std::fs::read_to_string(dir.join("manifest.json")).expect("manifest");
    let m: serde_json::Value = serde_json::from_str(&text).expect("manifest json");
    m["outputs"]
        .as_array()
        .expect("outputs")
        .iter()
        .map(|o| (o["file"].as_str().unwrap().to_string(), o["sha256"].as_str().unwrap().to_string()))
        .collect()
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().expect("tempdir");
    let start = Instant::now();
    let mut hashes = Vec::new();
    let mut times = Vec::new();
    for run in ["first", "second"] {
        let t0 = Instant::now();
        let dir = tmp.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_fbplab"))
            .env("RUST_LOG", "error")
            .args(["verify", "all", "--seed", &SEED.to_string(), "--out"])
            .arg(&dir)
            .stdout(std::process::Stdio::null())
            .status()
            .expect("spawn fbplab");
        times.push(t0.elapsed().as_secs_f64());
        if status.code() != Some(0) {
            return Outcome {
                pass: false,
                note: format!("verify all exited with {status}"),
            };
        }
        let mut h = output_hashes(&dir);
        // Byte comparison of the files themselves, not only the recorded digests.
        for (file, digest) in h.iter_mut() {
            let bytes = std::fs::read(dir.join(file)).expect("output");
            digest.push_str(&format!(":{}", bytes.len()));
        }
        hashes.push(h);
    }
    let same = hashes[0] == hashes[1] && !hashes[0].is_empty();
    let budget = 30.0 * 60.0;
    Outcome {
        pass: same && times.iter().all(|&t| t < budget),
        note: format!(
            "{} outputs identical: {same}; runs {:.1}s and {:.1}s (budget {budget}s); {:.1}s",
            hashes[0].len(),
            times[0],
            times[1],
            start.elapsed().as_secs_f64()
        ),
    }
}

fn main() {
    let cut = CutSide::Right;
    let scale = Scale::Acceptance;
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut record = |k: usize, name: &'static str, o: Outcome| {
        println!("criterion {k:>2} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.note);
        results.push((k, name, o));
    };

    record(1, "stationary fixed point", timed(Some(30), || vec![suites::stationary_fixed_point(cut)]));
    let start = Instant::now();
    let [gap, mass] = suites::gap_law(cut);
    let gap_time = start.elapsed();
    record(2, "barrier gap law", judge(&[gap], gap_time, Some(Duration::from_secs(60))));
    record(3, "monotone dyadic refinement", timed(None, || vec![suites::dyadic_monotonicity(cut)]));
    record(4, "barrier mass conservation", judge(&[mass], gap_time, None));
    record(5, "order lemmas", timed(None, || vec![suites::order_properties(sub(1), cut)]));
    record(6, "relaxed solver", timed(Some(300), || suites::relaxed_solver(scale)));
    record(7, "mass-loss oracle", timed(None, || vec![suites::mass_loss_oracle(scale, sub(3))]));
    record(8, "particle hydrodynamics", timed(Some(600), || suites::particle_hydrodynamics(scale, sub(4))));
    record(9, "stochastic barrier order", timed(None, || vec![suites::particle_barrier_order(scale, sub(5))]));
    let start = Instant::now();
    let lattice = suites::mass_law(scale, sub(6));
    record(10, "total-mass law", judge(&lattice, start.elapsed(), None));
    record(11, "variant analytics", timed(None, suites::variant_analytics));
    record(12, "determinism", determinism());

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("{} of {} criteria pass", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
