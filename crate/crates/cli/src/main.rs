use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use conncoord::config::{bundled, parse_config, GainCheckPolicy, ParsedConfig, ScenarioConfig};
use conncoord::output::{parse_trajectory_csv, render_svg, to_csv_string};
use conncoord::potential::{feasibility_plan, FeasibilityInputs, FeasibilityReport};
use conncoord::report::{CertificateEntry, Overrides, RunReport};
use conncoord::simulator::{monitors, simulate, Scenario};
use conncoord::verify::{lemma1_equality_case, lemma1_suite, prop2_suite, scenario_certificate};

/// Connectivity-preserving coordination of delayed multi-agent networks.
#[derive(Debug, Parser)]
#[command(name = "conncoord", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario and write CSV, report and optional SVG.
    Run {
        /// Scenario JSON file, or a bundled name (si_fig1, el_fig2).
        config: String,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Also render position and link-distance plots.
        #[arg(long)]
        svg: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Integrator step (s).
        #[arg(long)]
        step: Option<f64>,
        /// Simulated horizon (s).
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Evaluate the damping-gain certificate only.
    CheckGains {
        config: String,
        /// Print the certificate as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Search for (Q, p, Δ) satisfying the potential and delay bounds.
    Feasibility {
        config: String,
        #[arg(long)]
        json: bool,
    },
    /// Run the randomized integral-inequality suites.
    Verify {
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Config problems map to exit code 2, everything else to 1.
enum Failure {
    Usage(anyhow::Error),
    Other(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Other(e.into())
    }
}

fn load(arg: &str) -> Result<ParsedConfig, Failure> {
    let path = Path::new(arg);
    let text = if path.exists() {
        std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(Failure::Usage)?
    } else if let Some(text) = bundled(arg) {
        text.to_string()
    } else {
        return Err(Failure::Usage(anyhow::anyhow!(
            "{arg}: no such file and not a bundled scenario (si_fig1, el_fig2)"
        )));
    };
    parse_config(&text).map_err(|e| Failure::Usage(anyhow::anyhow!("{arg}: {e}")))
}

fn certificate_entry(scenario: &Scenario) -> CertificateEntry {
    match scenario_certificate(scenario) {
        Ok(cert) => CertificateEntry {
            policy: scenario.gain_check,
            certificate: Some(cert),
            error: None,
        },
        Err(e) => CertificateEntry {
            policy: scenario.gain_check,
            certificate: None,
            error: Some(e.to_string()),
        },
    }
}

fn print_certificate(entry: &CertificateEntry) {
    match (&entry.certificate, &entry.error) {
        (Some(cert), _) => {
            println!(
                "gain certificate: {} (gamma = {:.4e}, eta = {:.4e}, delta = {:.4e})",
                if cert.passed { "pass" } else { "fail" },
                cert.constants.gamma,
                cert.constants.eta,
                cert.constants.delta
            );
            for (i, (k, b)) in cert.k.iter().zip(&cert.bounds).enumerate() {
                println!("  agent {}: k = {k:.6e}  bound = {b:.6e}  {}", i + 1, if k > b { "ok" } else { "FAIL" });
            }
        }
        (None, Some(err)) => println!("gain certificate: not available ({err})"),
        (None, None) => {}
    }
}

fn write(path: &Path, contents: &str, artifacts: &mut Vec<String>) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    artifacts.push(path.display().to_string());
    Ok(())
}

fn run(
    arg: &str,
    out: &Path,
    svg: bool,
    overrides: Overrides,
) -> Result<bool, Failure> {
    let parsed = load(arg)?;
    let cfg: ScenarioConfig = parsed
        .config
        .with_overrides(overrides.seed, overrides.step, overrides.horizon)
        .map_err(|e| Failure::Usage(e.into()))?;
    let scenario = Scenario::from_config(&cfg).map_err(|e| Failure::Usage(e.into()))?;
    let mut report = RunReport::new(cfg.clone(), parsed.defaults_applied, overrides);
    report.edges = scenario.graph.pairs();
    let entry = certificate_entry(&scenario);
    print_certificate(&entry);
    let cert_passed = entry.certificate.as_ref().is_some_and(|c| c.passed);
    report.gains = Some(entry);

    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let stem = out.join(cfg.name());
    let report_path = stem.with_extension("report.json");

    if scenario.gain_check == GainCheckPolicy::Enforce && !cert_passed {
        println!("refusing to run: gain certificate does not pass (gain_check = \"enforce\")");
        report.artifacts.push(report_path.display().to_string());
        std::fs::write(&report_path, report.to_json())?;
        return Ok(false);
    }

    let started = Instant::now();
    let record = simulate(&scenario)?;
    report.runtime_seconds = Some(started.elapsed().as_secs_f64());
    let verdict = monitors(&record, &scenario.tolerances);

    let csv = to_csv_string(&record)?;
    write(&stem.with_extension("csv"), &csv, &mut report.artifacts)?;
    if svg {
        let table = parse_trajectory_csv(&csv)?;
        write(&stem.with_extension("svg"), &render_svg(&table), &mut report.artifacts)?;
    }
    report.artifacts.push(report_path.display().to_string());

    println!("V(0) = {:.6e}, max V(t) - V(0) = {:.3e}", verdict.v0, verdict.max_v_growth);
    println!("min connectivity margin = {:.6e}", verdict.min_margin);
    println!(
        "final spread = {:.6e} (tolerance {:.1e})",
        verdict.final_spread, scenario.tolerances.consensus
    );
    if let Some(t) = verdict.v_violation_time {
        println!("Lyapunov bound first exceeded at t = {t}");
    }
    if let Some(t) = verdict.margin_violation_time {
        println!("connectivity lost at t = {t}");
    }
    if let Some(a) = &verdict.abort {
        println!("aborted at t = {}: {}", a.t, a.reason);
    }
    println!("monitors: {}", if verdict.passed { "pass" } else { "fail" });
    report.passed = verdict.passed;
    report.monitors = Some(verdict);
    std::fs::write(&report_path, report.to_json())?;
    for a in &report.artifacts {
        println!("wrote {a}");
    }
    Ok(report.passed)
}

fn check_gains(arg: &str, json: bool) -> Result<bool, Failure> {
    let parsed = load(arg)?;
    let scenario = Scenario::from_config(&parsed.config).map_err(|e| Failure::Usage(e.into()))?;
    let entry = certificate_entry(&scenario);
    if json {
        println!("{}", serde_json::to_string_pretty(&entry)?);
    } else {
        print_certificate(&entry);
    }
    Ok(entry.certificate.is_some_and(|c| c.passed))
}

fn feasibility(arg: &str, json: bool) -> Result<bool, Failure> {
    let parsed = load(arg)?;
    let cfg = &parsed.config;
    let scenario = Scenario::from_config(cfg).map_err(|e| Failure::Usage(e.into()))?;
    let inputs = FeasibilityInputs {
        n_agents: scenario.n_agents(),
        dim: scenario.dim(),
        r: cfg.r,
        epsilon: cfg.epsilon,
        dbar: scenario.bounds.max(),
        ke0: scenario.kinetic_energy(&scenario.positions, &scenario.velocities),
    };
    let configured = feasibility_plan(&inputs, Some((cfg.q, cfg.p())))?;
    let searched = feasibility_plan(&inputs, None)?;
    if json {
        let both = serde_json::json!({ "inputs": inputs, "configured": configured, "search": searched });
        println!("{}", serde_json::to_string_pretty(&both)?);
    } else {
        println!("configured (Q = {}, p = {}): {}", cfg.q, cfg.p(), describe(&configured));
        println!("search: {}", describe(&searched));
    }
    Ok(searched.is_feasible())
}

fn describe(report: &FeasibilityReport) -> String {
    match report {
        FeasibilityReport::Feasible {
            q,
            p,
            delta,
            delta_max,
            gamma,
            eta,
            p_min,
            p_max,
            ..
        } => format!(
            "feasible: Q = {q:.6e}, p = {p:.6e} in ({p_min:.4e}, {p_max:.4e}), delta = {delta:.4e} (max {delta_max:.4e}), gamma = {gamma:.4e}, eta = {eta:.4e}"
        ),
        FeasibilityReport::Infeasible { violated, detail } => format!("infeasible ({violated:?}): {detail}"),
    }
}

fn verify(instances: usize, seed: u64) -> Result<bool, Failure> {
    let mut passed = true;
    for suite in [lemma1_suite(instances, seed)?, prop2_suite(instances, seed)?] {
        println!(
            "{}: {} instances, min residual/rhs = {:.3e}, failures = {} -> {}",
            suite.name,
            suite.instances,
            suite.min_normalized_residual,
            suite.failures,
            if suite.passed { "pass" } else { "fail" }
        );
        passed &= suite.passed;
    }
    let (res, bound) = lemma1_equality_case(&[1.0, -0.5], 0.1, 1e-3, 5001)?;
    let ok = res.residual.abs() <= bound;
    println!(
        "equality case: residual = {:.3e}, bound = {:.3e} -> {}",
        res.residual,
        bound,
        if ok { "pass" } else { "fail" }
    );
    Ok(passed && ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            out,
            svg,
            seed,
            step,
            horizon,
        } => run(&config, &out, svg, Overrides { seed, step, horizon }),
        Command::CheckGains { config, json } => check_gains(&config, json),
        Command::Feasibility { config, json } => feasibility(&config, json),
        Command::Verify { instances, seed } => verify(instances, seed),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
