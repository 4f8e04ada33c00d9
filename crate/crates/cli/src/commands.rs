use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use ndarray::Array1;
use serde::Serialize;
use sqrtlasso::conic::{build_conic_primal, kkt_certificate, KktCertificate};
use sqrtlasso::diagnostics::{
    cbar as cone_constant, gram_matrix, restricted_eigenvalues, sparse_eigenvalue_check, ReSearchConfig,
    RestrictedEigenvalues, SparseEigenvalues,
};
use sqrtlasso::estimators::{fit_estimator, Estimate, Estimator, EstimatorKind, EstimatorSpec, SolverSettings};
use sqrtlasso::io::{read_coefficients_file, read_dataset_file};
use sqrtlasso::penalty::{calibrate, lambda_asymptotic, nu_factor, Calibration};
use sqrtlasso::simulation::{run_experiment, write_rows_csv, Correlation, DesignSpec, SummaryRow};
use sqrtlasso::{Dataset, DesignOptions, NoiseFamily, PenaltyOption, PenaltySpec, SolverKind};

use crate::args::*;
use crate::CliError;

type CmdResult = Result<(), CliError>;

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> CmdResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    match path {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| CliError::Data(format!("{}: {e}", p.display()))),
        None => {
            let mut out = io::stdout().lock();
            writeln!(out, "{text}").map_err(|e| CliError::Data(e.to_string()))
        }
    }
}

fn load(data: &DataArgs) -> Result<Dataset, CliError> {
    let opts = DesignOptions {
        normalize: !data.no_normalize,
        center: data.center,
    };
    Ok(read_dataset_file(&data.data, opts)?)
}

fn parse_families(list: &str) -> Result<Vec<NoiseFamily>, CliError> {
    list.split(',')
        .map(|s| s.trim().parse::<NoiseFamily>().map_err(|e| CliError::Usage(e.to_string())))
        .collect()
}

fn penalty_spec(option: OptionArg, family: Option<&str>, alpha: f64, c: f64, draws: usize, seed: u64) -> Result<PenaltySpec, CliError> {
    let option = match option {
        OptionArg::Asymptotic => PenaltyOption::Asymptotic,
        OptionArg::Exact => {
            let fams = parse_families(family.unwrap_or("normal"))?;
            if fams.len() != 1 {
                return Err(CliError::Usage("the exact option takes a single --family".into()));
            }
            PenaltyOption::Exact(fams[0])
        }
        OptionArg::SemiExact => PenaltyOption::SemiExact(parse_families(family.unwrap_or("t4,t8,normal"))?),
    };
    let spec = PenaltySpec { option, alpha, c, draws, seed };
    spec.validate()?;
    Ok(spec)
}

fn solver_kind(s: SolverArg) -> SolverKind {
    match s {
        SolverArg::Coordinate => SolverKind::Coordinate,
        SolverArg::FirstOrder => SolverKind::FirstOrder,
    }
}

fn settings(args: &SolverArgs) -> SolverSettings {
    let mut s = SolverSettings::default();
    s.coordinate.tol = args.tol;
    s.coordinate.max_sweeps = args.max_sweeps;
    s.first_order.gap_tol = args.gap_tol;
    s.first_order.max_iter = args.max_iter;
    s.first_order.mu0 = args.mu0;
    s
}

fn parse_indices(list: &str, p: usize) -> Result<Vec<usize>, CliError> {
    let out = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("invalid index '{}'", s.trim())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(j) = out.iter().find(|&&j| j >= p) {
        return Err(CliError::Usage(format!("index {j} out of range for {p} regressors")));
    }
    Ok(out)
}

fn parse_floats(list: &str) -> Result<Vec<f64>, CliError> {
    list.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("invalid number '{}'", s.trim())))
        })
        .collect()
}

#[derive(Serialize)]
struct Coefficient {
    name: String,
    raw: f64,
    normalized: f64,
}

fn coefficient_table(data: &Dataset, beta: &Array1<f64>) -> Vec<Coefficient> {
    let raw = data.design().to_raw_coefficients(beta);
    data.design()
        .names()
        .iter()
        .zip(raw.iter().zip(beta.iter()))
        .map(|(name, (&r, &b))| Coefficient {
            name: name.clone(),
            raw: r,
            normalized: b,
        })
        .collect()
}

fn intercept(data: &Dataset, beta: &Array1<f64>) -> Option<f64> {
    let means = data.design().column_means()?;
    let raw = data.design().to_raw_coefficients(beta);
    Some(data.y_mean().unwrap_or(0.0) - means.dot(&raw))
}

#[derive(Serialize)]
struct FitReport<'a> {
    config: &'a Cli,
    estimator: String,
    n: usize,
    p: usize,
    lambda: Option<f64>,
    solver: Option<SolverKind>,
    objective: Option<f64>,
    qhat: Option<f64>,
    iterations: Option<usize>,
    converged: bool,
    support: Vec<String>,
    support_indices: Vec<usize>,
    intercept: Option<f64>,
    coefficients: Vec<Coefficient>,
    penalized_coefficients: Option<Vec<Coefficient>>,
    rank_deficient: Option<bool>,
    sigma_hat: Option<f64>,
    unpenalized: bool,
    calibration: Option<Calibration>,
    certificate: Option<KktCertificate>,
    warnings: Vec<String>,
}

pub fn fit(cli: &Cli, args: &FitArgs) -> CmdResult {
    let data = load(&args.data)?;
    let est: Estimator = args.estimator.parse()?;
    let post = est.post || args.post;
    let mut kind = est.kind;
    let sqrt_kind = matches!(kind, EstimatorKind::SqrtLasso | EstimatorKind::SqrtLassoHalf);
    match &mut kind {
        EstimatorKind::InfeasibleLasso { sigma } => {
            *sigma = args
                .sigma
                .ok_or_else(|| CliError::Usage("infeasible-lasso needs --sigma".into()))?;
        }
        EstimatorKind::Oracle { support } => {
            let list = args
                .support
                .as_deref()
                .ok_or_else(|| CliError::Usage("oracle needs --support".into()))?;
            *support = parse_indices(list, data.p())?;
        }
        EstimatorKind::CvLasso { folds } => *folds = args.folds,
        _ => {}
    }
    if args.lambda.is_some() && !sqrt_kind {
        return Err(CliError::Usage("--lambda applies to the square-root lasso estimators only".into()));
    }
    if args.emit_conic.is_some() && !sqrt_kind {
        return Err(CliError::Usage("--emit-conic applies to the square-root lasso estimators only".into()));
    }
    let p = &args.penalty;
    let spec = EstimatorSpec {
        kind,
        penalty: penalty_spec(p.option, p.family.as_deref(), p.alpha, p.c, p.draws, args.seed)?,
        post,
        solver: solver_kind(args.solver.solver),
        seed: args.seed,
    };
    let fixed = match args.lambda {
        Some(l) if !(l >= 0.0) || !l.is_finite() => {
            return Err(CliError::Usage(format!("--lambda must be finite and >= 0, got {l}")));
        }
        Some(l) => {
            let mut cal = calibrate(data.design(), &PenaltySpec::asymptotic(p.alpha, p.c))?;
            cal.option = "fixed".into();
            cal.lambda = l;
            Some(cal)
        }
        None => None,
    };
    let out = fit_estimator(&data, &spec, &settings(&args.solver), fixed.as_ref())?;
    let penalized = out.estimate.penalized();
    let beta = out.estimate.coefficients();
    if let (Some(path), Some(fit)) = (&args.emit_conic, penalized) {
        let prob = build_conic_primal(&data, fit.lambda)?;
        let f = File::create(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        prob.write_text(BufWriter::new(f))
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    if let Some(path) = &args.coef_out {
        write_coef_csv(path, &coefficient_table(&data, beta))?;
    }
    let converged = penalized.is_none_or(|f| f.converged);
    let report = FitReport {
        config: cli,
        estimator: out.name.clone(),
        n: data.n(),
        p: data.p(),
        lambda: penalized.map(|f| f.lambda),
        solver: penalized.map(|f| f.solver),
        objective: penalized.map(|f| f.objective),
        qhat: penalized.map(|f| f.qhat),
        iterations: penalized.map(|f| f.iterations),
        converged,
        support: out.estimate.support().iter().map(|&j| data.design().names()[j].clone()).collect(),
        support_indices: out.estimate.support().to_vec(),
        intercept: intercept(&data, beta),
        coefficients: coefficient_table(&data, beta),
        penalized_coefficients: match &out.estimate {
            Estimate::Refit { penalized, .. } => Some(coefficient_table(&data, &penalized.beta)),
            _ => None,
        },
        rank_deficient: match &out.estimate {
            Estimate::Refit { refit, .. } | Estimate::Oracle(refit) => Some(refit.rank_deficient),
            Estimate::Penalized(_) => None,
        },
        sigma_hat: out.sigma_hat,
        unpenalized: out.unpenalized,
        calibration: out.calibration.clone(),
        certificate: out.certificate.clone(),
        warnings: out.warnings.clone(),
    };
    write_json(&report, args.output.as_deref())?;
    if !converged {
        return Err(CliError::NotConverged(format!(
            "{} did not converge within the iteration limit",
            out.name
        )));
    }
    Ok(())
}

fn write_coef_csv(path: &Path, table: &[Coefficient]) -> CmdResult {
    let mut text = String::from("name,raw,normalized\n");
    for c in table {
        text.push_str(&format!("{},{},{}\n", c.name, c.raw, c.normalized));
    }
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct CalibrateReport<'a> {
    config: &'a Cli,
    n: usize,
    p: usize,
    calibration: Calibration,
}

pub fn calibrate_cmd(cli: &Cli, args: &CalibrateArgs) -> CmdResult {
    let spec = penalty_spec(args.option, args.family.as_deref(), args.alpha, args.c, args.draws, args.seed)?;
    let (n, p, calibration) = match &args.data {
        Some(path) => {
            let opts = DesignOptions {
                normalize: !args.no_normalize,
                center: false,
            };
            let data = read_dataset_file(path, opts)?;
            (data.n(), data.p(), calibrate(data.design(), &spec)?)
        }
        None => {
            if args.option != OptionArg::Asymptotic {
                return Err(CliError::Usage(
                    "the exact and semi-exact options need --data; use --option asymptotic with --n and --p".into(),
                ));
            }
            let (n, p) = match (args.n, args.p) {
                (Some(n), Some(p)) => (n, p),
                _ => return Err(CliError::Usage("--n and --p are required without --data".into())),
            };
            let asym = lambda_asymptotic(n, p, args.alpha, args.c)?;
            let cal = Calibration {
                option: spec.option.to_string(),
                lambda: asym.lambda,
                alpha: args.alpha,
                c: args.c,
                draws: None,
                seed: None,
                per_family: Vec::new(),
                asymptotic_lambda: asym.lambda,
                asymptotic_bound: asym.bound,
                nu: nu_factor(n, p, args.alpha),
            };
            (n, p, cal)
        }
    };
    write_json(&CalibrateReport { config: cli, n, p, calibration }, args.output.as_deref())
}

#[derive(Serialize)]
struct SimulationSummary<'a> {
    config: &'a Cli,
    spec: &'a DesignSpec,
    estimators: &'a [String],
    summary: &'a [SummaryRow],
    implementation_choices: &'a std::collections::BTreeMap<String, String>,
    failed_fits: usize,
}

pub fn simulate(cli: &Cli, args: &SimulateArgs) -> CmdResult {
    let noise: NoiseFamily = args.noise.parse()?;
    let correlation = match args.design {
        CorrelationArg::Toeplitz => Correlation::Toeplitz { rho: args.rho },
        CorrelationArg::Equicorrelated => Correlation::Equicorrelated { rho: args.rho },
    };
    let panel = args
        .estimators
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse::<Estimator>())
        .collect::<Result<Vec<_>, _>>()?;
    let spec = DesignSpec {
        n: args.n,
        p: args.p,
        s: args.s,
        correlation,
        sigma_grid: parse_floats(&args.sigma_grid)?,
        noise,
        reps: args.reps,
        seed: args.seed,
        fix_design: args.fix_design,
        penalty: penalty_spec(args.option, args.family.as_deref(), args.alpha, args.c, args.draws, args.seed)?,
        solver: solver_kind(args.solver),
    };
    spec.validate()?;
    let report = run_experiment(&spec, &panel, &SolverSettings::default())?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Data(format!("{}: {e}", args.out.display())))?;
    let csv_path = args.out.join("results.csv");
    let f = File::create(&csv_path).map_err(|e| CliError::Data(format!("{}: {e}", csv_path.display())))?;
    write_rows_csv(&report.rows, BufWriter::new(f))?;
    let summary = SimulationSummary {
        config: cli,
        spec: &report.spec,
        estimators: &report.estimators,
        summary: &report.summary,
        implementation_choices: &report.implementation_choices,
        failed_fits: report.rows.iter().filter(|r| r.error.is_some()).count(),
    };
    write_json(&summary, Some(&args.out.join("summary.json")))
}

#[derive(Serialize)]
struct DiagnoseReport<'a> {
    config: &'a Cli,
    n: usize,
    p: usize,
    support: Vec<usize>,
    restricted_eigenvalues: RestrictedEigenvalues,
    sparse_eigenvalues: SparseEigenvalues,
    duplicate_columns: Vec<(usize, usize)>,
    note: &'static str,
}

pub fn diagnose(cli: &Cli, args: &DiagnoseArgs) -> CmdResult {
    let data = load(&args.data)?;
    let support = parse_indices(&args.support, data.p())?;
    let cbar = match args.cbar {
        Some(v) => v,
        None => cone_constant(args.c)?,
    };
    let gram = gram_matrix(data.design());
    let cfg = ReSearchConfig {
        budget: args.budget,
        polish_steps: args.polish,
        seed: args.seed,
    };
    let re = restricted_eigenvalues(&gram, &support, cbar, &cfg)?;
    let se = sparse_eigenvalue_check(&gram, &support, args.m, args.max_supports, args.seed)?;
    let report = DiagnoseReport {
        config: cli,
        n: data.n(),
        p: data.p(),
        support,
        restricted_eigenvalues: re,
        sparse_eigenvalues: se,
        duplicate_columns: data.design().duplicate_columns(),
        note: "restricted eigenvalues are minima over searched directions, so they bound the true values from above",
    };
    write_json(&report, args.output.as_deref())
}

#[derive(Serialize)]
struct CheckReport<'a> {
    config: &'a Cli,
    lambda: f64,
    objective: f64,
    certificate: KktCertificate,
    optimal: bool,
}

pub fn check(cli: &Cli, args: &CheckArgs) -> CmdResult {
    let data = load(&args.data)?;
    let column = match args.coef_scale {
        CoefScale::Normalized => "normalized",
        CoefScale::Raw => "raw",
    };
    let coef = read_coefficients_file(&args.coef, Some(column))?;
    if coef.len() != data.p() {
        return Err(CliError::Data(format!(
            "coefficient file has {} entries but the design has {} regressors",
            coef.len(),
            data.p()
        )));
    }
    if !(args.lambda >= 0.0) || !args.lambda.is_finite() {
        return Err(CliError::Usage(format!("--lambda must be finite and >= 0, got {}", args.lambda)));
    }
    let beta = match args.coef_scale {
        CoefScale::Normalized => coef,
        CoefScale::Raw => coef * data.design().column_scales(),
    };
    let certificate = kkt_certificate(&data, &beta, args.lambda)?;
    let report = CheckReport {
        config: cli,
        lambda: args.lambda,
        objective: data.sqrt_lasso_objective(&beta, args.lambda)?,
        optimal: certificate.is_optimal(1e-6, 1e-6),
        certificate,
    };
    write_json(&report, args.output.as_deref())
}
