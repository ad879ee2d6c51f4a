use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use fracsynth::analysis::{robust_verify, sample_delta, AnalysisError, VerificationReport, VerifyOptions};
use fracsynth::fosim::{simulate as run_simulation, SimulationConfig, SimulationError};
use fracsynth::interval::UncertainPlant;
use fracsynth::synthesis::{closed_loop, synthesize as run_synthesis, theta_of, SynthesisError, SynthesisOptions};
use fracsynth::Vector;
use serde::Serialize;

use crate::schema::{read_json, to_json, CertificateDoc, ControllerDoc, PlantDoc, Slacks};
use crate::CliError;

#[derive(Debug, Serialize)]
struct Dims {
    n: usize,
    l: usize,
    m: usize,
    nc: usize,
}

#[derive(Debug, Serialize)]
struct SynthReport<'a> {
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    failed_stage: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    best_slack: Option<f64>,
    alpha: f64,
    theta: f64,
    dims: Dims,
    #[serde(skip_serializing_if = "Option::is_none")]
    slacks: Option<Slacks>,
    #[serde(skip_serializing_if = "Option::is_none")]
    attempt: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    verification: Option<&'a VerificationReport>,
}

fn load_plant(path: &Path, canonicalize: bool) -> Result<UncertainPlant, CliError> {
    read_json::<PlantDoc>(path)?.to_plant(canonicalize)
}

fn analysis_error(e: AnalysisError) -> CliError {
    match e {
        AnalysisError::Lmi(e) => CliError::Internal(e.to_string()),
        other => CliError::Input(other.to_string()),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn synth(
    plant_path: &Path,
    canonicalize: bool,
    nc: usize,
    out: &Path,
    eps: Option<f64>,
    retries: usize,
    seed: u64,
    samples: usize,
) -> Result<(), CliError> {
    let plant = load_plant(plant_path, canonicalize)?;
    if eps.is_some_and(|e| !(e > 0.0 && e.is_finite())) {
        return Err(CliError::Input("--eps must be a positive number".into()));
    }
    let theta = theta_of(plant.alpha).map_err(|e| CliError::Input(e.to_string()))?;
    let d = plant.dims();
    let mut report = SynthReport {
        status: "ok",
        message: None,
        failed_stage: None,
        best_slack: None,
        alpha: plant.alpha,
        theta,
        dims: Dims { n: d.n, l: d.l, m: d.m, nc },
        slacks: None,
        attempt: None,
        verification: None,
    };
    let options = SynthesisOptions { eps, retries, seed, ..Default::default() };
    fs::create_dir_all(out)?;
    let (k, cert) = match run_synthesis(&plant, nc, &options) {
        Ok(found) => found,
        Err(e) => {
            let err = match &e {
                SynthesisError::Stage1Infeasible { best_slack } => {
                    (report.failed_stage, report.best_slack) = (Some(1), Some(*best_slack));
                    CliError::Infeasible(e.to_string())
                }
                SynthesisError::Stage2Infeasible { best_slack, .. } => {
                    (report.failed_stage, report.best_slack) = (Some(2), Some(*best_slack));
                    CliError::Infeasible(e.to_string())
                }
                SynthesisError::Verification(_) => CliError::Verification(e.to_string()),
                SynthesisError::Completion(_) | SynthesisError::Lmi(_) => CliError::Internal(e.to_string()),
                _ => return Err(CliError::Input(e.to_string())),
            };
            report.status = if matches!(err, CliError::Infeasible(_)) { "infeasible" } else { "failed" };
            report.message = Some(e.to_string());
            emit_report(out, &to_json(&report))?;
            return Err(err);
        }
    };

    let sweep =
        robust_verify(&plant, &k, &VerifyOptions { samples, seed, ..Default::default() }).map_err(analysis_error)?;
    fs::write(out.join("controller.json"), to_json(&ControllerDoc::from_controller(&k)))?;
    fs::write(out.join("certificate.json"), to_json(&CertificateDoc::from_certificate(&cert)))?;
    report.slacks = Some(Slacks { stage1: cert.stage1_slack, stage2: cert.stage2_slack });
    report.attempt = Some(cert.attempt);
    report.verification = Some(&sweep);
    if !sweep.all_passed() {
        report.status = "verification-failed";
    }
    emit_report(out, &to_json(&report))?;
    if sweep.all_passed() {
        Ok(())
    } else {
        Err(CliError::Verification(format!(
            "{} of {} members outside the sector",
            sweep.failed,
            sweep.failed + sweep.passed
        )))
    }
}

fn emit_report(out: &Path, json: &str) -> Result<(), CliError> {
    fs::write(out.join("report.json"), json)?;
    io::stdout().write_all(json.as_bytes())?;
    Ok(())
}

pub fn verify(
    plant_path: &Path,
    canonicalize: bool,
    controller_path: &Path,
    samples: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let plant = load_plant(plant_path, canonicalize)?;
    let k = read_json::<ControllerDoc>(controller_path)?.to_controller()?;
    let report =
        robust_verify(&plant, &k, &VerifyOptions { samples, seed, ..Default::default() }).map_err(analysis_error)?;
    let json = to_json(&report);
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), &json)?;
        fs::write(dir.join("eigenvalues.csv"), eigenvalue_csv(&report))?;
    }
    io::stdout().write_all(json.as_bytes())?;
    if report.all_passed() {
        Ok(())
    } else {
        Err(CliError::Verification(format!(
            "{} of {} members outside the sector",
            report.failed,
            report.failed + report.passed
        )))
    }
}

fn eigenvalue_csv(report: &VerificationReport) -> String {
    let mut s = String::from("re,im,member_index\n");
    for (i, spectrum) in report.eigenvalues.iter().enumerate() {
        for z in spectrum {
            writeln!(s, "{:.16e},{:.16e},{i}", z.re, z.im).expect("writing to a String");
        }
    }
    s
}

fn parse_list(flag: &str, text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| CliError::Input(format!("{flag}: `{t}`: {e}"))))
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn simulate(
    plant_path: &Path,
    canonicalize: bool,
    controller_path: &Path,
    x0: Option<&str>,
    dt: f64,
    t_final: f64,
    member: &str,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let plant = load_plant(plant_path, canonicalize)?;
    let k = read_json::<ControllerDoc>(controller_path)?.to_controller()?;
    let (a, b, c) = match member {
        "nominal" => Ok(plant.nominal()),
        "random" => plant.member(&sample_delta(plant.delta_len(), seed, 0)),
        list => plant.member(&parse_list("--member", list)?),
    }
    .map_err(|e| CliError::Input(e.to_string()))?;
    let x0 = match x0 {
        Some(text) => Vector::from_vec(parse_list("--x0", text)?),
        None => Vector::from_element(plant.dims().n, 1.0),
    };
    let a_cl = closed_loop(&a, &b, &c, &k).map_err(|e| CliError::Input(e.to_string()))?;
    let cfg = SimulationConfig { alpha: plant.alpha, dt, t_final, window: None };
    let result = run_simulation(&a_cl, plant.dims(), &k, &c, &x0, &cfg).map_err(|e| match e {
        SimulationError::Config(_) | SimulationError::Dimension(_) | SimulationError::Singular { .. } => {
            CliError::Input(e.to_string())
        }
        SimulationError::OutOfRange(_) => CliError::Internal(e.to_string()),
    })?;
    match out {
        Some(path) => result.write_csv(io::BufWriter::new(fs::File::create(path)?))?,
        None => result.write_csv(io::BufWriter::new(io::stdout().lock()))?,
    }
    Ok(())
}
