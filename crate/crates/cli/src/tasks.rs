use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use ioss_core::checks::{check_estimate, replay_witness, CheckReport, Verdict};
use ioss_core::dynamics::{simulate, Signal, Termination};
use ioss_core::linear::{
    detectability_check, is_hurwitz, synthesize_certificate, Detectability, Mat,
};
use ioss_core::lyapunov::{exp_decay_rescale, verify_dissipation, DecayTerm, RescaleOptions};
use ioss_core::observer::{build_estimator, run_coupled, CoupledTrace};
use ioss_core::valuefn::{
    check_v0_dissipation, compute_v0, inf_convolve, DissipationBattery, GeometrySets, RectGrid,
    V0Options,
};

use crate::config::{RunConfig, WitnessBundle};

pub struct TaskOutcome {
    pub exit_code: u8,
    pub summary: String,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_report<T: Serialize>(out_dir: &Path, report: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(report)? + "\n";
    write_text(&out_dir.join("report.json"), &text)
}

pub fn run_simulate(
    config: &RunConfig,
    out_dir: &Path,
    tol_override: Option<f64>,
) -> Result<TaskOutcome> {
    let task = config.simulate.as_ref().unwrap();
    let sys = config.system.resolve()?;
    let u = match &task.u {
        Some(block) => block.to_signal()?,
        None => Signal::zero(sys.m_u),
    };
    let w = match &task.w {
        Some(block) => block.to_signal()?,
        None => Signal::zero(sys.m_w),
    };
    let opts = task.sim_options(tol_override);
    let traj = simulate(&sys, &task.x0, &u, &w, task.horizon, &opts)?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv)?;
    write_text(
        &out_dir.join("trajectory.csv"),
        std::str::from_utf8(&csv).unwrap(),
    )?;

    #[derive(Serialize)]
    struct SimReport {
        task: &'static str,
        system: String,
        termination: Termination,
        final_time: f64,
        knots: usize,
        trajectory_csv: String,
    }
    let report = SimReport {
        task: "simulate",
        system: config.system.label(),
        termination: traj.termination.clone(),
        final_time: traj.final_time(),
        knots: traj.len(),
        trajectory_csv: "trajectory.csv".into(),
    };
    write_report(out_dir, &report)?;
    let summary = match &traj.termination {
        Termination::FiniteEscape { t_esc } => format!("finite escape at t ≈ {t_esc}"),
        Termination::EnteredSet { set, t } => format!("entered {set} at t = {t}"),
        Termination::HorizonReached => format!("horizon reached at t = {}", traj.final_time()),
    };
    Ok(TaskOutcome {
        exit_code: 0,
        summary,
    })
}

fn finish_check(
    config: &RunConfig,
    out_dir: &Path,
    report: CheckReport,
    task_label: &'static str,
) -> Result<TaskOutcome> {
    #[derive(Serialize)]
    struct Output<'a> {
        task: &'static str,
        system: String,
        verdict: &'a Verdict,
        worst_margin: f64,
        battery: &'a ioss_core::checks::BatteryStats,
        #[serde(skip_serializing_if = "Option::is_none")]
        witness_file: Option<String>,
    }
    let mut witness_file = None;
    if report.verdict == Verdict::Falsified {
        let task = config.check.as_ref().unwrap();
        let bundle = WitnessBundle {
            system: config.system.clone(),
            spec: task.spec.clone(),
            battery: task.battery.clone(),
            falsify_tol: Default::default(),
            witness: report.witness.clone().expect("falsified implies witness"),
        };
        let text = serde_json::to_string_pretty(&bundle)? + "\n";
        write_text(&out_dir.join("witness.json"), &text)?;
        witness_file = Some("witness.json".into());
    }
    let out = Output {
        task: task_label,
        system: config.system.label(),
        verdict: &report.verdict,
        worst_margin: report.worst_margin,
        battery: &report.battery,
        witness_file: witness_file.clone(),
    };
    write_report(out_dir, &out)?;
    Ok(match report.verdict {
        Verdict::HoldsOnSamples => TaskOutcome {
            exit_code: 0,
            summary: format!(
                "holds on samples (worst margin {:.3e})",
                report.worst_margin
            ),
        },
        Verdict::Falsified => TaskOutcome {
            exit_code: 2,
            summary: format!(
                "falsified (worst margin {:.3e}), witness written to witness.json",
                report.worst_margin
            ),
        },
    })
}

pub fn run_check(
    config: &RunConfig,
    out_dir: &Path,
    seed: Option<u64>,
    tol_override: Option<f64>,
) -> Result<TaskOutcome> {
    let task = config.check.as_ref().unwrap();
    let sys = config.system.resolve()?;
    let battery = task.battery.to_battery(seed, tol_override);
    let report = check_estimate(&sys, &task.spec, &battery)?;
    finish_check(config, out_dir, report, "check")
}

pub fn run_replay(bundle_path: &Path, out_dir: &Path, tighten: f64) -> Result<TaskOutcome> {
    let text = fs::read_to_string(bundle_path)
        .with_context(|| format!("reading {}", bundle_path.display()))?;
    let bundle: WitnessBundle = serde_json::from_str(&text).context("parsing witness bundle")?;
    let sys = bundle.system.resolve()?;
    let battery = bundle.battery.to_battery(None, None);
    let report = replay_witness(&sys, &bundle.spec, &bundle.witness, tighten, &battery)?;

    #[derive(Serialize)]
    struct Output<'a> {
        task: &'static str,
        system: String,
        verdict: &'a Verdict,
        worst_margin: f64,
        tighten_factor: f64,
    }
    write_report(
        out_dir,
        &Output {
            task: "replay",
            system: bundle.system.label(),
            verdict: &report.verdict,
            worst_margin: report.worst_margin,
            tighten_factor: tighten,
        },
    )?;
    Ok(match report.verdict {
        Verdict::Falsified => TaskOutcome {
            exit_code: 2,
            summary: format!(
                "witness reproduces the violation at {tighten}x tighter tolerance \
                 (worst margin {:.3e})",
                report.worst_margin
            ),
        },
        Verdict::HoldsOnSamples => TaskOutcome {
            exit_code: 0,
            summary: "witness does not reproduce at tighter tolerance".into(),
        },
    })
}

pub fn run_lyapunov(config: &RunConfig, out_dir: &Path) -> Result<TaskOutcome> {
    let task = config.lyapunov.as_ref().unwrap();
    let sys = config.system.resolve()?;
    let cand = task.candidate.to_candidate()?;
    let grid = task.grid.to_grid(sys.n);
    let report = verify_dissipation(&sys, &cand, &grid)?;

    #[derive(Serialize)]
    struct Output<'a> {
        task: &'static str,
        system: String,
        candidate: String,
        verdict: &'a Verdict,
        worst_margin: f64,
        grid_points: usize,
    }
    write_report(
        out_dir,
        &Output {
            task: "lyapunov",
            system: config.system.label(),
            candidate: cand.name.clone(),
            verdict: &report.verdict,
            worst_margin: report.worst_margin,
            grid_points: report.battery.time_points,
        },
    )?;
    Ok(TaskOutcome {
        exit_code: if report.holds() { 0 } else { 2 },
        summary: format!(
            "dissipation {} (worst margin {:.3e})",
            if report.holds() {
                "holds on the grid"
            } else {
                "falsified"
            },
            report.worst_margin
        ),
    })
}

pub fn run_linear(config: &RunConfig, out_dir: &Path) -> Result<TaskOutcome> {
    let task = config.linear.as_ref().unwrap();
    let gain = task
        .l
        .as_ref()
        .map(|rows| Mat::from_rows(rows.clone()))
        .transpose()?;
    match task.mode.as_str() {
        "hurwitz" => {
            let m = match &task.m {
                Some(rows) => Mat::from_rows(rows.clone())?,
                None => config.system.resolve_linear()?.a,
            };
            let report = is_hurwitz(&m)?;
            #[derive(Serialize)]
            struct Output {
                task: &'static str,
                mode: &'static str,
                hurwitz: bool,
                degenerate: bool,
                #[serde(skip_serializing_if = "Option::is_none")]
                residual: Option<f64>,
                #[serde(skip_serializing_if = "Option::is_none")]
                note: Option<String>,
            }
            let summary = if report.hurwitz {
                "matrix is Hurwitz".to_string()
            } else if report.degenerate {
                "solver degeneracy: eigenvalue on the imaginary axis or λi + λj = 0".to_string()
            } else {
                "matrix is not Hurwitz".to_string()
            };
            write_report(
                out_dir,
                &Output {
                    task: "linear",
                    mode: "hurwitz",
                    hurwitz: report.hurwitz,
                    degenerate: report.degenerate,
                    residual: report.residual,
                    note: report.note,
                },
            )?;
            Ok(TaskOutcome {
                exit_code: 0,
                summary,
            })
        }
        "certificate" => {
            let lin = config.system.resolve_linear()?;
            let l = gain.ok_or_else(|| anyhow!("linear.l is required for certificate mode"))?;
            let cert = synthesize_certificate(&lin, &l)?;
            #[derive(Serialize)]
            struct Output {
                task: &'static str,
                mode: &'static str,
                p: Vec<Vec<f64>>,
                l: Vec<Vec<f64>>,
                sigma1_coeff: f64,
                sigma2_coeff: f64,
                k_decay: f64,
                delta: f64,
                fit_span: f64,
                fit_samples: usize,
            }
            let to_rows = |m: &Mat| -> Vec<Vec<f64>> {
                (0..m.rows)
                    .map(|i| (0..m.cols).map(|j| m.at(i, j)).collect())
                    .collect()
            };
            write_report(
                out_dir,
                &Output {
                    task: "linear",
                    mode: "certificate",
                    p: to_rows(&cert.p),
                    l: to_rows(&cert.l),
                    sigma1_coeff: cert.sigma1_coeff,
                    sigma2_coeff: cert.sigma2_coeff,
                    k_decay: cert.k_decay,
                    delta: cert.delta,
                    fit_span: cert.fit_span,
                    fit_samples: cert.fit_samples,
                },
            )?;
            Ok(TaskOutcome {
                exit_code: 0,
                summary: format!(
                    "certificate synthesized (K = {:.4}, delta = {:.4})",
                    cert.k_decay, cert.delta
                ),
            })
        }
        "detectability" => {
            let lin = config.system.resolve_linear()?;
            let verdict = detectability_check(&lin, gain.as_ref())?;
            #[derive(Serialize)]
            struct Output {
                task: &'static str,
                mode: &'static str,
                detectable: bool,
                #[serde(skip_serializing_if = "Option::is_none")]
                l: Option<Vec<Vec<f64>>>,
                #[serde(skip_serializing_if = "Option::is_none")]
                reason: Option<String>,
            }
            let (detectable, l, reason, summary) = match verdict {
                Detectability::Detectable { l, .. } => {
                    let rows = (0..l.rows)
                        .map(|i| (0..l.cols).map(|j| l.at(i, j)).collect())
                        .collect();
                    (true, Some(rows), None, "detectable".to_string())
                }
                Detectability::NotDetectable { reason } => {
                    (false, None, Some(reason.clone()), format!("not detectable: {reason}"))
                }
            };
            write_report(
                out_dir,
                &Output {
                    task: "linear",
                    mode: "detectability",
                    detectable,
                    l,
                    reason,
                },
            )?;
            Ok(TaskOutcome {
                exit_code: 0,
                summary,
            })
        }
        other => bail!("linear.mode must be hurwitz, certificate, or detectability, got {other:?}"),
    }
}

pub fn run_observe(
    config: &RunConfig,
    out_dir: &Path,
    tol_override: Option<f64>,
) -> Result<TaskOutcome> {
    let task = config.observe.as_ref().unwrap();
    let sys = config.system.resolve()?;
    let mut cand = task.candidate.to_candidate()?;
    if task.rescale {
        cand = exp_decay_rescale(&cand, &RescaleOptions::default())?;
    } else if !matches!(cand.decay, DecayTerm::Value) {
        bail!("observe: candidate is not exponential; set `rescale = true`");
    }
    let est = build_estimator(&cand)?;
    let u = match &task.u {
        Some(block) => block.to_signal()?,
        None => Signal::zero(sys.m_u),
    };
    let w = match &task.w {
        Some(block) => block.to_signal()?,
        None => Signal::zero(sys.m_w),
    };
    let mut opts = ioss_core::dynamics::SimOptions::default();
    if let Some(rt) = task.rel_tol {
        opts.rel_tol = rt;
    }
    if let Some(t) = tol_override {
        opts.rel_tol = t;
        opts.abs_tol = t * 1e-2;
    }
    let trace = run_coupled(&sys, &est, &task.x0, task.zeta0, &u, &w, task.horizon, &opts)?;
    let mut csv = Vec::new();
    trace.write_csv(&mut csv)?;
    write_text(&out_dir.join("trace.csv"), std::str::from_utf8(&csv).unwrap())?;

    // discretized contraction check on the recorded trace
    let gap_report = discrete_gap_check(&trace);
    #[derive(Serialize)]
    struct Output {
        task: &'static str,
        system: String,
        knots: usize,
        termination: Termination,
        gap_contraction_holds: bool,
        worst_gap_slack: f64,
        trace_csv: String,
    }
    write_report(
        out_dir,
        &Output {
            task: "observe",
            system: config.system.label(),
            knots: trace.times.len(),
            termination: trace.termination.clone(),
            gap_contraction_holds: gap_report.0,
            worst_gap_slack: gap_report.1,
            trace_csv: "trace.csv".into(),
        },
    )?;
    Ok(TaskOutcome {
        exit_code: if gap_report.0 { 0 } else { 2 },
        summary: format!(
            "coupled run over {} knots; gap contraction {}",
            trace.times.len(),
            if gap_report.0 { "holds" } else { "violated" }
        ),
    })
}

/// (V − p)(t_{k+1}) ≤ (V − p)(t_k)·e^{−Δt} + 10·local error at every step.
fn discrete_gap_check(trace: &CoupledTrace) -> (bool, f64) {
    let mut worst = f64::INFINITY;
    for k in 0..trace.times.len().saturating_sub(1) {
        let g0 = trace.v_values[k] - trace.p_values[k];
        let g1 = trace.v_values[k + 1] - trace.p_values[k + 1];
        let dt = trace.times[k + 1] - trace.times[k];
        let tol = 10.0 * trace.step_errors.get(k).copied().unwrap_or(0.0) + 1e-12;
        worst = worst.min(g0 * (-dt).exp() + tol - g1);
    }
    (worst >= 0.0, worst)
}

pub fn run_valuefn(config: &RunConfig, out_dir: &Path) -> Result<TaskOutcome> {
    let task = config.valuefn.as_ref().unwrap();
    let sys = config.system.resolve()?;
    let grid = RectGrid::new(task.mins.clone(), task.maxs.clone(), task.dims.clone())?;
    let geo = GeometrySets::new(&sys, task.rho.clone(), grid)?;
    let mut opts = V0Options {
        time_step: task.time_step,
        mixture_mode: task.mixture_mode,
        ..V0Options::default()
    };
    if let Some(tol) = task.tol {
        opts.tol = tol;
    }
    if let Some(ms) = task.max_sweeps {
        opts.max_sweeps = ms;
    }
    let v0 = compute_v0(&sys, &geo, &task.xi, &opts)?;
    let mut csv = Vec::new();
    v0.write_csv(&mut csv)?;
    write_text(&out_dir.join("values.csv"), std::str::from_utf8(&csv).unwrap())?;

    let envelope = match task.alpha {
        Some(alpha) => {
            let env = inf_convolve(&v0, alpha)?;
            let mut csv = Vec::new();
            env.write_csv(&mut csv)?;
            write_text(
                &out_dir.join("values_envelope.csv"),
                std::str::from_utf8(&csv).unwrap(),
            )?;
            Some("values_envelope.csv".to_string())
        }
        None => None,
    };

    let dissipation = match &task.dissipation {
        Some(block) => {
            let battery = DissipationBattery {
                seed: block.seed,
                spans: block.spans,
                horizon: block.horizon,
                ..DissipationBattery::default()
            };
            let report = check_v0_dissipation(&v0, &sys, &geo, &battery)?;
            Some((report.verdict, report.worst_margin))
        }
        None => None,
    };

    #[derive(Serialize)]
    struct Output {
        task: &'static str,
        system: String,
        nodes: usize,
        sweeps: usize,
        residual: f64,
        unreached_nodes: usize,
        max_value: f64,
        values_csv: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        envelope_csv: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        dissipation_verdict: Option<Verdict>,
        #[serde(skip_serializing_if = "Option::is_none")]
        dissipation_worst_margin: Option<f64>,
    }
    let unreached = v0
        .flags
        .iter()
        .filter(|f| **f == ioss_core::valuefn::NodeFlag::Unreached)
        .count();
    let falsified = dissipation.map(|(v, _)| v == Verdict::Falsified).unwrap_or(false);
    write_report(
        out_dir,
        &Output {
            task: "valuefn",
            system: config.system.label(),
            nodes: v0.grid.len(),
            sweeps: v0.sweeps,
            residual: v0.residual,
            unreached_nodes: unreached,
            max_value: v0.values.iter().copied().fold(0.0, f64::max),
            values_csv: "values.csv".into(),
            envelope_csv: envelope,
            dissipation_verdict: dissipation.map(|(v, _)| v),
            dissipation_worst_margin: dissipation.map(|(_, m)| m),
        },
    )?;
    Ok(TaskOutcome {
        exit_code: if falsified { 2 } else { 0 },
        summary: format!(
            "value iteration finished in {} sweeps (residual {:.3e}, {} unreached nodes)",
            v0.sweeps, v0.residual, unreached
        ),
    })
}
