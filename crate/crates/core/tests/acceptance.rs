//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line
//! each and exits nonzero when any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use clap::Parser;
use humpforge::cli::{self, Cli, CliConfig};
use humpforge::humpbuilder::{
    build_flat_hump, build_witness_stages, export_stages, import_stages, padded_sum, witness_sum, FlatHumpSpec,
    RunParams,
};
use humpforge::seqcore::{decreasing_rearrangement, embedding_constant, lp_norm, weak_lp_quasinorm};
use humpforge::subspace::{make_preset, Preset};
use humpforge::verifier::{axiom_suite, random_seq, verify, VerifyOptions};
use humpforge::{Exponent, SparseSeq};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn p(x: f64) -> Exponent {
    Exponent::new(x).unwrap()
}

fn secs(d: Duration) -> String {
    format!("{:.2} s", d.as_secs_f64())
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sorted_moduli(u: &SparseSeq) -> Vec<f64> {
    let mut m: Vec<f64> = u.entries().iter().map(|&(_, x)| x.abs()).collect();
    m.sort_by(|a, b| b.partial_cmp(a).unwrap());
    m
}

fn oracle_lp(u: &SparseSeq, q: f64) -> f64 {
    u.entries().iter().map(|&(_, x)| x.abs().powf(q)).sum::<f64>().powf(1.0 / q)
}

fn oracle_weak(u: &SparseSeq, q: f64) -> f64 {
    sorted_moduli(u)
        .iter()
        .enumerate()
        .map(|(j, x)| ((j + 1) as f64).powf(1.0 / q) * x)
        .fold(0.0, f64::max)
}

fn peak_rss_mib() -> Option<f64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kib: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kib / 1024.0)
}

fn rearrangement_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..1000 {
        let u = random_seq(&mut rng);
        ensure(u.nnz() <= 50, || format!("sample {i} has {} entries", u.nnz()))?;
        let r = decreasing_rearrangement(&u);
        ensure(r.values() == &sorted_moduli(&u)[..], || format!("sample {i} differs from the sorted moduli"))?;
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(1), || format!("took {}", secs(t)))?;
    Ok(format!("1000 vectors match exactly in {}", secs(t)))
}

fn axioms() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    for q in [1.5, 2.0, 3.0] {
        let rep = axiom_suite(p(q), 1000, 7);
        let failed: Vec<&str> = rep.items.iter().filter(|i| !i.passed).map(|i| i.name.as_str()).collect();
        ensure(failed.is_empty(), || format!("p = {q}: failed {}", failed.join(", ")))?;
        let quasi = rep.get("weak/quasi_triangle").unwrap().worst;
        ensure(quasi <= 2f64.powf(1.0 / q) + 1e-9, || format!("p = {q}: quasi-triangle ratio {quasi}"))?;
        let lo = rep.get("equiv/sandwich_lower").unwrap().worst;
        let hi = rep.get("equiv/sandwich_upper").unwrap().worst;
        ensure(lo >= 1.0 && hi <= q / (q - 1.0) + 1e-9, || format!("p = {q}: sandwich [{lo}, {hi}]"))?;
        notes.push(format!("p={q}: quasi {quasi:.4}, sandwich [{lo:.4}, {hi:.4}]"));
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(5), || format!("took {}", secs(t)))?;
    Ok(format!("{} in {}", notes.join("; "), secs(t)))
}

fn embedding() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut notes = Vec::new();
    for q in [1.5, 2.0, 3.0] {
        let mut sup = 0.0f64;
        for i in 0..10_000 {
            let len = rng.gen_range(1..=60);
            let raw: Vec<(u64, f64)> = (0..len)
                .map(|_| {
                    let mag = if rng.gen_bool(0.5) { 1.0 } else { rng.gen_range(0.0..=1.0f64).powi(3) };
                    (rng.gen_range(1..=300u64), mag * if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
                })
                .collect();
            let u = SparseSeq::from_unsorted(raw).unwrap();
            if u.is_zero() {
                continue;
            }
            let a = u.scale(1.0 / oracle_lp(&u, q));
            let w = weak_lp_quasinorm(&a, p(q));
            let wo = oracle_weak(&a, q);
            ensure((w - wo).abs() <= 1e-12 * wo.max(1.0), || format!("p = {q}, sample {i}: weak {w} vs oracle {wo}"))?;
            sup = sup.max(w);
        }
        ensure(sup <= 1.0 + 1e-12, || format!("p = {q}: sup {sup}"))?;
        let unit = SparseSeq::unit(1, 1.0).unwrap();
        let e1 = weak_lp_quasinorm(&unit, p(q)) / lp_norm(&unit, p(q));
        ensure(e1 == 1.0, || format!("p = {q}: ratio at e_1 is {e1}"))?;
        ensure(embedding_constant(p(q)) == 1.0, || "embedding_constant is not 1".into())?;
        notes.push(format!("p={q}: sup {sup:.12}"));
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(5), || format!("took {}", secs(t)))?;
    Ok(format!("{}; e_1 attains 1; {}", notes.join(", "), secs(t)))
}

fn canonical_main() -> Outcome {
    let start = Instant::now();
    let params = RunParams::new(p(2.0), 0.1, 16).unwrap();
    let basis = make_preset(Preset::Canonical, 0, None, params.p).unwrap();
    let run = build_witness_stages(&basis, &params).map_err(|e| e.to_string())?;
    ensure(run.truncated.is_none() && run.stages.len() == 16, || "run truncated".into())?;
    let report = verify(&run.stages, &params, None, VerifyOptions::default());
    let t = start.elapsed();
    let failed: Vec<&str> = report.checklist.families.iter().filter(|f| !f.passed).map(|f| f.id).collect();
    ensure(failed.is_empty(), || format!("failed families {}", failed.join(", ")))?;
    for id in ["3.1", "3.2", "3.3", "3.4", "3.5", "3.6", "3.7"] {
        ensure(report.checklist.get(id).is_some_and(|f| f.passed), || format!("family {id} missing or failed"))?;
    }
    let b = 2f64.sqrt() * (2f64.powf(1.5) + 0.1);
    let majorant_cap = 2f64.powf(1.5);
    for n in 1..=16 {
        let z = witness_sum(&run.stages, n).unwrap();
        let strong = oracle_lp(&z, 2.0);
        let floor = 0.9 * (n as f64).sqrt() - 0.1;
        ensure(strong >= floor - 1e-9, || format!("N = {n}: ||z_N||_p = {strong} below {floor}"))?;
        let weak = oracle_weak(&z, 2.0);
        ensure(weak <= b + 1e-9, || format!("N = {n}: weak norm {weak} above B = {b}"))?;
        let zt = padded_sum(&run.stages, n, params.p).unwrap();
        let wt = oracle_weak(&zt, 2.0);
        ensure(wt <= majorant_cap + 1e-9, || format!("N = {n}: padded weak norm {wt}"))?;
    }
    let last = oracle_lp(&witness_sum(&run.stages, 16).unwrap(), 2.0);
    ensure(last >= 3.5 - 1e-9, || format!("||z_16||_p = {last}"))?;
    ensure(t < Duration::from_secs(60), || format!("took {}", secs(t)))?;
    let mem = peak_rss_mib();
    if let Some(m) = mem {
        ensure(m < 1024.0, || format!("peak resident memory {m:.0} MiB"))?;
    }
    Ok(format!(
        "families pass, ||z_16||_p = {last:.6}, max weak {:.6} <= B = {b:.6}, {}, peak RSS {}",
        report.max_weak(),
        secs(t),
        mem.map_or("n/a".into(), |m| format!("{m:.0} MiB"))
    ))
}

fn canonical_decay() -> Outcome {
    let params = RunParams::new(p(2.0), 0.1, 16).unwrap();
    let basis = make_preset(Preset::Canonical, 0, None, params.p).unwrap();
    let run = build_witness_stages(&basis, &params).map_err(|e| e.to_string())?;
    let sums: Vec<SparseSeq> = (1..=16).map(|n| witness_sum(&run.stages, n).unwrap()).collect();
    let ratio = |z: &SparseSeq| oracle_weak(z, 2.0) / oracle_lp(z, 2.0);
    let (r1, r16) = (ratio(&sums[0]), ratio(&sums[15]));
    ensure(r16 <= 0.5 * r1, || format!("ratio {r16} at N = 16 vs {r1} at N = 1"))?;
    // least-squares slope of log ||z_N|| against log N
    let pts: Vec<(f64, f64)> = sums
        .iter()
        .enumerate()
        .map(|(i, z)| (((i + 1) as f64).ln(), oracle_lp(z, 2.0).ln()))
        .collect();
    let mx = pts.iter().map(|t| t.0).sum::<f64>() / 16.0;
    let my = pts.iter().map(|t| t.1).sum::<f64>() / 16.0;
    let slope = pts.iter().map(|t| (t.0 - mx) * (t.1 - my)).sum::<f64>()
        / pts.iter().map(|t| (t.0 - mx).powi(2)).sum::<f64>();
    ensure((0.425..=0.575).contains(&slope), || format!("trend exponent {slope}"))?;
    let report = verify(&run.stages, &params, None, VerifyOptions::default());
    let lib = report.trend_exponent().unwrap();
    ensure((lib - slope).abs() < 1e-12, || format!("library trend {lib} vs oracle {slope}"))?;
    Ok(format!("ratio {r1:.4} -> {r16:.4}, trend exponent {slope:.4}"))
}

fn run_args(extra: &[&str]) -> CliConfig {
    let mut argv = vec!["humpforge", "run"];
    argv.extend_from_slice(extra);
    match Cli::try_parse_from(argv).unwrap().command {
        cli::Command::Run(args) => CliConfig::from_args(&args, None).unwrap(),
        _ => unreachable!(),
    }
}

fn collect_files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn grid() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get()).to_string();
    let presets: [(&str, &str); 3] = [("canonical", "0"), ("lacunary", "0"), ("random_block", "0,1,2,3,4")];
    let mut notes = Vec::new();
    for (preset, seeds) in presets {
        let mut snapshots = Vec::new();
        for rep in 0..2 {
            let dir = tmp.path().join(format!("{preset}-{rep}"));
            let dir_s = dir.to_str().unwrap().to_string();
            let config = run_args(&[
                "--p", "1.5,2,3", "--delta", "0.1", "--stages", "10", "--preset", preset, "--seed", seeds,
                "--out-dir", &dir_s, "--jobs", &jobs,
            ]);
            let (_, cells) = cli::run(&config);
            for cell in cells {
                let cell = cell.map_err(|e| format!("{preset}: {}", e.message))?;
                let r = &cell.report;
                let failed: Vec<&str> = r.checklist.families.iter().filter(|f| !f.passed).map(|f| f.id).collect();
                ensure(failed.is_empty(), || {
                    format!("{preset} p = {} seed {}: failed {}", cell.p, cell.seed, failed.join(", "))
                })?;
                if rep == 0 {
                    if let Some(tr) = &r.truncated {
                        notes.push(format!("{preset} p={} truncated at {}/{}", cell.p, tr.completed, tr.requested));
                    }
                }
            }
            snapshots.push(collect_files(&dir));
        }
        ensure(!snapshots[0].is_empty() && snapshots[0] == snapshots[1], || format!("{preset}: reruns differ"))?;
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(300), || format!("took {}", secs(t)))?;
    let trunc = if notes.is_empty() { "no truncation".to_string() } else { notes.join(", ") };
    Ok(format!("21 cells pass, reruns byte-identical, {trunc}, {}", secs(t)))
}

fn negative_control() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let params = RunParams::new(p(2.0), 0.1, 6).unwrap();
    let basis = make_preset(Preset::Canonical, 0, None, params.p).unwrap();
    let mut stages = build_witness_stages(&basis, &params).map_err(|e| e.to_string())?.stages;
    stages[2].v = stages[2].v.scale(2.0);
    let path = tmp.path().join("stages.jsonl");
    fs::write(&path, export_stages(&stages)).unwrap();
    ensure(import_stages(&fs::read_to_string(&path).unwrap()).unwrap() == stages, || "export roundtrip".into())?;
    let out = tmp.path().join("report");
    let status = Command::new(env!("CARGO_BIN_EXE_humpforge"))
        .args(["verify", path.to_str().unwrap(), "--p", "2", "--delta", "0.1", "--out-dir", out.to_str().unwrap()])
        .output()
        .unwrap();
    let code = status.status.code();
    ensure(code.is_some_and(|c| c != 0), || format!("verify exited with {code:?}"))?;
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let failed: Vec<String> = report["checklist"]["families"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|f| f["passed"] == false)
        .map(|f| f["id"].as_str().unwrap().to_string())
        .collect();
    ensure(failed.iter().any(|f| f == "3.4") && failed.iter().any(|f| f == "3.6"), || {
        format!("flagged {}", failed.join(", "))
    })?;
    Ok(format!("verify exits {}, flags {}", code.unwrap(), failed.join(", ")))
}

fn flat_hump_case() -> Outcome {
    let basis = make_preset(Preset::Canonical, 0, None, p(2.0)).unwrap();
    let spec = FlatHumpSpec { n: 0, n_floor: 0, eps: 0.5, delta: 0.25, p: p(2.0) };
    let trace = build_flat_hump(&basis, spec).map_err(|f| f.error.to_string())?;
    ensure(trace.m == 4, || format!("m = {}", trace.m))?;
    let expect = SparseSeq::new((1..=4).map(|i| (i, 0.5)).collect()).unwrap();
    ensure(trace.u == expect, || format!("u = {:?}", trace.u))?;
    ensure(trace.w.is_zero(), || format!("w = {:?}", trace.w))?;
    ensure(trace.s_values.len() == 4, || format!("{} inner steps", trace.s_values.len()))?;
    for (i, &s) in trace.s_values.iter().enumerate() {
        let k = (i + 1) as f64;
        ensure(s == k.sqrt(), || format!("s_{} = {s}", i + 1))?;
        ensure(s >= 0.75 * k.sqrt(), || format!("s_{} = {s} below 0.75 sqrt(k)", i + 1))?;
    }
    Ok("m = 4, u = (e_1+e_2+e_3+e_4)/2, w = 0, s_k = sqrt(k)".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("rearrangement oracle", rearrangement_oracle),
        ("norm axiom suite", axioms),
        ("embedding constant", embedding),
        ("canonical construction p=2 K=16", canonical_main),
        ("ratio decay and growth trend", canonical_decay),
        ("grid robustness and reproducibility", grid),
        ("negative control", negative_control),
        ("flat-hump unit case", flat_hump_case),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {}: FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
