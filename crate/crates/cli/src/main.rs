use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde_json::{json, Value};

use semiflat_core::collapse::field_io::{write_field, FieldHeader};
use semiflat_core::collapse::{newton_solve, CollapseProblem};
use semiflat_core::io::{cmat_from_json, cmat_to_json, matrix_field, rmat_from_json, rmat_to_json, FamilyFile};
use semiflat_core::lattice::integer_determinant;
use semiflat_core::period::{gauss_manin_constancy, semiflat_fiber_forms};
use semiflat_core::semiflat::{verify, Check, VerifyOptions};
use semiflat_core::{
    compute_period, eval_ddbar_eta, eval_eta, frobenius_normal_form, gtz_convert_any, hermitian_metric,
    run_collapse_experiment, symplectic_normalize, Error, ExperimentConfig, FiberTwoForm, HolomorphicLatticeFamily,
    LatticeBasis, ModelSpec, SemiFlatPotential, SkewForm,
};

#[derive(Parser, Debug)]
#[command(name = "semiflat-collapse", version, about = "Period maps, semi-flat metrics and collapsing Monge-Ampère experiments")]
struct Cli {
    /// Output file (stdout when omitted; the field file for `solve`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Seed for randomized sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (all cores by default).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Symplectic normalization (and the integral normal form when Q is integral).
    NormalForm {
        /// JSON file with a skew matrix (bare, or under the key `q`).
        #[arg(long)]
        q: PathBuf,
    },
    /// Period matrix and flat fiber metric of a lattice.
    Period {
        /// JSON file with the n×2n complex lattice matrix (bare, or under `lattice`).
        #[arg(long)]
        lattice: PathBuf,
        /// Polarization; the standard form when omitted.
        #[arg(long)]
        q: Option<PathBuf>,
    },
    /// Conversion to the `(R₀, Z₀, Δ)` convention.
    Gtz {
        #[arg(long)]
        lattice: PathBuf,
        #[arg(long)]
        q: Option<PathBuf>,
    },
    /// Constancy of the lattice-frame coefficients of the semi-flat fiber forms.
    GmCheck {
        #[arg(long)]
        family: PathBuf,
        #[arg(long, default_value_t = 9)]
        grid: usize,
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
        /// Multiply the fiber forms by `1 + c|y|²`, which breaks closedness.
        #[arg(long, default_value_t = 0.0)]
        twist: f64,
    },
    /// Numerical checks of the semi-flat potential.
    Verify {
        #[arg(long)]
        family: PathBuf,
        /// Comma-separated subset of: scaling, rescaling, fiber-block, zero-section,
        /// finite-difference, pluriharmonic, semipositive, deck.
        #[arg(long)]
        checks: Option<String>,
        #[arg(long, default_value_t = 9)]
        grid: usize,
        #[arg(long, default_value_t = 1e-3)]
        h: f64,
        #[arg(long, default_value_t = 6561)]
        max_points: usize,
    },
    /// Potential and its complex Hessian at one point.
    Eval {
        #[arg(long)]
        family: PathBuf,
        /// `(y₁, …, y_m, z₁, …, z_n)` with entries like `0.1+0.2i`.
        #[arg(long)]
        point: String,
    },
    /// Solves the Monge-Ampère problem for one value of t.
    Solve {
        /// Experiment config file; its `model` and `solver` sections are used.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Model description (overrides the config's model).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        nb: Option<usize>,
        #[arg(long)]
        nf: Option<usize>,
    },
    /// Solves for every t in the list and reports the diagnostics.
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        nb: Option<usize>,
        #[arg(long)]
        nf: Option<usize>,
        /// Comma-separated t values (overrides the config).
        #[arg(long)]
        t_list: Option<String>,
        /// Skip the half-resolution refinement runs.
        #[arg(long)]
        no_refine: bool,
    },
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonConvergence { .. } | Error::LostPositivity { .. } | Error::IterationLimit { .. } => 3,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 2, message: e.to_string() }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure { code: 2, message: format!("json: {e}") }
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure { code: 2, message: msg.into() }
}

/// What a command produced: a document plus the exit code it implies.
struct Outcome {
    value: Value,
    csv: Option<Vec<u8>>,
    code: u8,
}

impl Outcome {
    fn ok(value: Value) -> Self {
        Outcome { value, csv: None, code: 0 }
    }
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn read_form(path: &Path) -> Result<SkewForm, Failure> {
    let v = read_json(path)?;
    Ok(SkewForm::detect(rmat_from_json(matrix_field(&v, "q"))?)?)
}

fn read_lattice(path: &Path) -> Result<LatticeBasis, Failure> {
    let v = read_json(path)?;
    Ok(LatticeBasis::new(cmat_from_json(matrix_field(&v, "lattice"))?)?)
}

fn form_or_standard(q: &Option<PathBuf>, n: usize) -> Result<SkewForm, Failure> {
    match q {
        Some(p) => read_form(p),
        None => Ok(SkewForm::standard(n)),
    }
}

fn read_family(path: &Path) -> Result<FamilyFile, Failure> {
    Ok(serde_json::from_value(read_json(path)?)?)
}

fn potential(file: &FamilyFile) -> Result<SemiFlatPotential, Failure> {
    Ok(SemiFlatPotential::new(Arc::new(file.family()?), &file.form()?)?)
}

fn parse_point(text: &str) -> Result<Vec<Complex64>, Failure> {
    text.trim()
        .trim_start_matches('(')
        .trim_end_matches(')')
        .split(',')
        .map(|s| {
            let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
            Complex64::from_str(&s).map_err(|_| invalid(format!("cannot parse complex number `{s}`")))
        })
        .collect()
}

fn complex_json(v: &[Complex64]) -> Value {
    Value::Array(v.iter().map(|z| json!([z.re, z.im])).collect())
}

fn int_rows<T: Copy + Into<i128>>(m: &nalgebra::DMatrix<T>) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|r| Value::Array((0..m.ncols()).map(|c| json!(m[(r, c)].into() as i64)).collect()))
            .collect(),
    )
}

fn normal_form(q: &Path) -> Result<Outcome, Failure> {
    let q = read_form(q)?;
    let s = symplectic_normalize(&q)?;
    let mut out = json!({
        "n": q.n(),
        "S": rmat_to_json(s.matrix()),
        "residual": s.residual(&q),
        "integral": q.is_integral(),
    });
    if q.is_integral() {
        let f = frobenius_normal_form(&q)?;
        let a = f.a.map(|x| x as i128);
        out["frobenius"] = json!({
            "A": int_rows(&f.a),
            "divisors": f.divisors,
            "transformed": int_rows(&f.transformed(&q)?.map(|x| x as i64)),
            "det_A": integer_determinant(&a)? as i64,
        });
    }
    Ok(Outcome::ok(out))
}

fn period(lattice: &Path, q: &Option<PathBuf>) -> Result<Outcome, Failure> {
    let t = read_lattice(lattice)?;
    let q = form_or_standard(q, t.n())?;
    let s = symplectic_normalize(&q)?;
    let p = compute_period(&t, &s)?;
    let h = hermitian_metric(&t, &q)?;
    Ok(Outcome::ok(json!({
        "R": cmat_to_json(&p.r),
        "Z": cmat_to_json(&p.z),
        "H": cmat_to_json(&h.h),
        "S": rmat_to_json(s.matrix()),
        "residuals": {
            "factorization": p.factorization_residual,
            "normalizer": s.residual(&q),
            "inverse_metric_formulas": h.formula_gap,
        },
    })))
}

fn gtz(lattice: &Path, q: &Option<PathBuf>) -> Result<Outcome, Failure> {
    let t = read_lattice(lattice)?;
    let q = form_or_standard(q, t.n())?;
    let (data, basis, form) = gtz_convert_any(&t, &q)?;
    let mut v = serde_json::to_value(&data)?;
    v["lattice"] = cmat_to_json(basis.matrix());
    v["q"] = rmat_to_json(form.matrix());
    Ok(Outcome::ok(v))
}

fn gm_check(family: &Path, grid: usize, tolerance: f64, twist: f64) -> Result<Outcome, Failure> {
    let file = read_family(family)?;
    let fam = file.family()?;
    let q = file.form()?;
    let points = fam.base().grid(grid);
    let forms = semiflat_fiber_forms(&fam, &q);
    let twisted = |y: &[Complex64]| -> semiflat_core::Result<FiberTwoForm> {
        let w: f64 = y.iter().map(|v| v.norm_sqr()).sum();
        Ok(forms(y)?.scaled(1.0 + twist * w))
    };
    let report = gauss_manin_constancy(&fam, twisted, &points, tolerance)?;
    let mut v = serde_json::to_value(&report)?;
    v["q"] = rmat_to_json(q.matrix());
    let code = if report.constant { 0 } else { 2 };
    Ok(Outcome { value: v, csv: None, code })
}

fn verify_cmd(
    family: &Path,
    checks: &Option<String>,
    grid: usize,
    h: f64,
    max_points: usize,
    seed: u64,
) -> Result<Outcome, Failure> {
    let pot = potential(&read_family(family)?)?;
    let checks = match checks {
        Some(list) => list.split(',').map(Check::from_str).collect::<semiflat_core::Result<Vec<_>>>()?,
        None => Check::ALL.to_vec(),
    };
    let opts = VerifyOptions { checks, grid, h, max_points, seed };
    let report = verify(&pot, &opts)?;
    let code = if report.passed() { 0 } else { 2 };
    Ok(Outcome { value: serde_json::to_value(&report)?, csv: None, code })
}

fn eval_cmd(family: &Path, point: &str) -> Result<Outcome, Failure> {
    let pot = potential(&read_family(family)?)?;
    let p = parse_point(point)?;
    let (m, n) = (pot.m(), pot.n());
    if p.len() != m + n {
        return Err(invalid(format!("point needs {m} base and {n} fiber coordinates, got {}", p.len())));
    }
    let (y, z) = p.split_at(m);
    let form = eval_ddbar_eta(&pot, y, z)?;
    Ok(Outcome::ok(json!({
        "y": complex_json(y),
        "z": complex_json(z),
        "eta": eval_eta(&pot, y, z)?,
        "ddbar_eta": cmat_to_json(&form.coeffs),
        "min_eigenvalue": form.min_eigenvalue(),
    })))
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig, Failure> {
    match path {
        Some(p) => Ok(serde_json::from_value(read_json(p)?)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn solve_cmd(
    config: &Option<PathBuf>,
    model: &Option<PathBuf>,
    t: f64,
    nb: Option<usize>,
    nf: Option<usize>,
    out: &Option<PathBuf>,
) -> Result<Outcome, Failure> {
    let mut cfg = load_config(config)?;
    if let Some(p) = model {
        cfg.model = serde_json::from_value::<ModelSpec>(read_json(p)?)?;
    }
    cfg.solver.nb = nb.unwrap_or(cfg.solver.nb);
    cfg.solver.nf = nf.unwrap_or(cfg.solver.nf);
    cfg.solver.t_list = vec![t];
    cfg.solver.validate()?;
    let fibration = cfg.model.build()?;
    let grid = fibration.grid(cfg.solver.nb, cfg.solver.nf)?;
    let problem = CollapseProblem::ricci_flat(&fibration, &grid, t)?;
    let sol = newton_solve(&problem, &cfg.solver)?;
    let mut report = json!({
        "t": t,
        "model": cfg.model,
        "solve": sol.report,
        "density": problem.density,
        "sup_phi": sol.sup_norm(),
    });
    if let Some(path) = out {
        let header = FieldHeader {
            name: "phi".into(),
            dims: vec![(grid.nb + 1) as u64, (grid.nb + 1) as u64, grid.nf as u64, grid.nf as u64],
            axes: ["y1", "y2", "a", "b"].map(String::from).to_vec(),
            metadata: json!({ "t": t, "base": grid.base, "model": cfg.model, "solve": sol.report }),
        };
        write_field(path, &header, &sol.phi)?;
        report["field"] = json!(path.display().to_string());
    }
    Ok(Outcome::ok(report))
}

fn experiment_cmd(
    config: &Option<PathBuf>,
    nb: Option<usize>,
    nf: Option<usize>,
    t_list: &Option<String>,
    no_refine: bool,
) -> Result<Outcome, Failure> {
    let mut cfg = load_config(config)?;
    cfg.solver.nb = nb.unwrap_or(cfg.solver.nb);
    cfg.solver.nf = nf.unwrap_or(cfg.solver.nf);
    if let Some(list) = t_list {
        cfg.solver.t_list = list
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| invalid(format!("bad t value `{s}`"))))
            .collect::<Result<_, _>>()?;
    }
    if no_refine {
        cfg.diagnostics.refine = false;
    }
    let model = cfg.model.build()?;
    let report = run_collapse_experiment(&model, &cfg)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    let code = if report.rows.iter().any(|r| !r.converged) {
        3
    } else if report.passed() {
        0
    } else {
        2
    };
    Ok(Outcome { value: serde_json::to_value(&report)?, csv: Some(csv), code })
}

/// Two-column `key,value` rendering of a JSON document.
fn flatten_csv(value: &Value) -> Result<Vec<u8>, Failure> {
    fn walk(prefix: &str, v: &Value, rows: &mut Vec<(String, String)>) {
        match v {
            Value::Object(map) => {
                for (k, x) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, x, rows);
                }
            }
            Value::Array(items) => {
                for (i, x) in items.iter().enumerate() {
                    walk(&format!("{prefix}[{i}]"), x, rows);
                }
            }
            Value::String(s) => rows.push((prefix.to_string(), s.clone())),
            other => rows.push((prefix.to_string(), other.to_string())),
        }
    }
    let mut rows = Vec::new();
    walk("", value, &mut rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["key", "value"]).map_err(|e| invalid(e.to_string()))?;
    for (k, v) in rows {
        w.write_record([k, v]).map_err(|e| invalid(e.to_string()))?;
    }
    w.into_inner().map_err(|e| invalid(e.to_string()))
}

fn emit(outcome: &Outcome, format: Format, out: Option<&Path>) -> Result<(), Failure> {
    let bytes = match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&outcome.value)?;
            s.push('\n');
            s.into_bytes()
        }
        Format::Csv => match &outcome.csv {
            Some(c) => c.clone(),
            None => flatten_csv(&outcome.value)?,
        },
    };
    match out {
        Some(path) => std::fs::write(path, bytes)?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(invalid("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global().map_err(|e| invalid(e.to_string()))?;
    }
    let outcome = match &cli.command {
        Command::NormalForm { q } => normal_form(q)?,
        Command::Period { lattice, q } => period(lattice, q)?,
        Command::Gtz { lattice, q } => gtz(lattice, q)?,
        Command::GmCheck { family, grid, tolerance, twist } => gm_check(family, *grid, *tolerance, *twist)?,
        Command::Verify { family, checks, grid, h, max_points } => {
            verify_cmd(family, checks, *grid, *h, *max_points, cli.seed)?
        }
        Command::Eval { family, point } => eval_cmd(family, point)?,
        Command::Solve { config, model, t, nb, nf } => {
            let outcome = solve_cmd(config, model, *t, *nb, *nf, &cli.out)?;
            // `--out` names the field file here, so the report goes to stdout
            emit(&outcome, cli.format, None)?;
            return Ok(outcome.code);
        }
        Command::Experiment { config, nb, nf, t_list, no_refine } => experiment_cmd(config, *nb, *nf, t_list, *no_refine)?,
    };
    emit(&outcome, cli.format, cli.out.as_deref())?;
    Ok(outcome.code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
