//! `nldelay`: scenario-driven front end.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 numerical error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use nldelay::asymptotics::{drift_identity_residual, TiltedLawConstants};
use nldelay::dde::{characteristic_delta, dominant_root};
use nldelay::lattice::solve_lattice;
use nldelay::output::{format_number, round_json};
use nldelay::simulator::simulate_ensemble;
use nldelay::verify::{self, GofTolerances, Recentring};
use nldelay::{
    stats, AsymptoticConstants, EnsembleResult, EnsembleSpec, Error, Model, Overrides, RatePolicy, RecentringPath,
    Scenario,
};

const TOOL: &str = "nldelay";
const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "nldelay", version, about = "Non-local diffusion with time delay: constants, simulation, verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Asymptotic constants Γ, K, D₀, Σ and the spectral split of Σ.
    Constants(Common),
    /// Dominant characteristic root of the hyperbolic delay equation.
    DdeGamma(Common),
    /// Ensemble of terminal values at the probe times (CSV).
    Simulate(Common),
    /// Exact lattice law at the probe times (CSV).
    Lattice(Common),
    /// Gaussian goodness of fit of the rescaled ensemble.
    VerifyClt(CltArgs),
    /// Law of large numbers across probe times.
    VerifyLln(Common),
    /// Monte Carlo versus lattice oracle.
    VerifyLattice(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Comma-separated probe times.
    #[arg(long, value_delimiter = ',')]
    probes: Option<Vec<f64>>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RecentringArg {
    /// `(X(t) − Kt)/√t`
    Drift,
    /// `(X(t) + H(t))/√t`
    Path,
}

#[derive(Args)]
struct CltArgs {
    #[command(flatten)]
    common: Common,
    /// Writes the rescaled samples of the last probe as CSV.
    #[arg(long)]
    z_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "drift")]
    recentring: RecentringArg,
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

type Outcome = Result<bool, Failure>;

struct Loaded {
    scenario: Scenario,
    model: Model,
}

fn load(c: &Common) -> Result<Loaded, Failure> {
    let base = Scenario::load(&c.scenario)?;
    let scenario = base.with_overrides(&Overrides {
        seed: c.seed,
        n: c.n,
        horizon: c.horizon,
        probes: c.probes.clone(),
        workers: c.workers,
    })?;
    let model = scenario.build()?;
    Ok(Loaded { scenario, model })
}

fn header(command: &str, s: &Scenario) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("tool".into(), json!(TOOL));
    m.insert("version".into(), json!(VERSION));
    m.insert("command".into(), json!(command));
    m.insert("scenario".into(), json!(s.name));
    m.insert("scenario_hash".into(), json!(s.hash()));
    m
}

fn csv_preamble(command: &str, s: &Scenario) -> String {
    format!(
        "# tool={TOOL} version={VERSION} command={command} scenario_hash={} seed={} n={}\n",
        s.hash(),
        s.run.seed,
        s.run.n
    )
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Config(format!("writing output: {e}"));
    match path {
        None => {
            std::io::stdout().write_all(text.as_bytes()).map_err(io)?;
            Ok(())
        }
        Some(p) => {
            let dir = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
            tmp.write_all(text.as_bytes()).map_err(io)?;
            tmp.flush().map_err(io)?;
            tmp.persist(p).map_err(|e| io(e.error))?;
            Ok(())
        }
    }
}

fn write_json(path: Option<&Path>, mut v: Value) -> Result<(), Failure> {
    round_json(&mut v);
    let mut text = serde_json::to_string_pretty(&v).expect("json serialises");
    text.push('\n');
    write_output(path, &text)
}

fn ensemble(l: &Loaded) -> Result<EnsembleResult, Failure> {
    let probes = l.scenario.probes();
    Ok(simulate_ensemble(&EnsembleSpec {
        q: &l.model.measure,
        policy: &l.model.policy,
        init: &l.model.initial,
        probes: &probes,
        n: l.scenario.run.n,
        seed: l.scenario.run.seed,
        workers: l.scenario.run.workers,
        sampler: l.scenario.sampler(),
    })?)
}

fn constants(c: &Common) -> Outcome {
    let l = load(c)?;
    let (q, p) = (&l.model.measure, &l.model.policy);
    let k = AsymptoticConstants::compute(q, p)?;
    let tilted = TiltedLawConstants::compute(q, p)?;
    let mut out = header("constants", &l.scenario);
    out.insert("constants".into(), k.to_json());
    out.insert(
        "sqrt_Sigma_diag".into(),
        json!((0..k.dim()).map(|i| k.sigma[(i, i)].sqrt()).collect::<Vec<_>>()),
    );
    out.insert("drift_identity_residual".into(), json!(drift_identity_residual(q, p, &k)?));
    out.insert(
        "tilted_law".into(),
        json!({
            "K": tilted.drift.iter().copied().collect::<Vec<_>>(),
            "one_minus_lambda_mean_theta": tilted.one_minus_lambda_mean_theta,
            "covariance_max_abs_diff": (&tilted.covariance - &k.sigma).amax(),
        }),
    );
    if let RatePolicy::Hyperbolic(h) = p {
        out.insert("gamma".into(), json!(h.gamma()));
    }
    write_json(c.out.as_deref(), Value::Object(out))?;
    Ok(true)
}

fn dde_gamma(c: &Common) -> Outcome {
    let l = load(c)?;
    let RatePolicy::Hyperbolic(h) = &l.model.policy else {
        return Err(Failure::Config("dde-gamma needs a hyperbolic rate".into()));
    };
    let gamma = dominant_root(h.kernel())?;
    let mut out = header("dde-gamma", &l.scenario);
    out.insert("a".into(), json!(h.a()));
    out.insert("b".into(), json!(h.b()));
    out.insert("kernel_mass".into(), json!(h.kernel().mass()));
    out.insert("gamma".into(), json!(gamma));
    out.insert("delta_at_gamma".into(), json!(characteristic_delta(gamma, h.kernel())?));
    write_json(c.out.as_deref(), Value::Object(out))?;
    Ok(true)
}

fn simulate(c: &Common) -> Outcome {
    let l = load(c)?;
    let e = ensemble(&l)?;
    let mut text = csv_preamble("simulate", &l.scenario);
    let mut cols = vec!["trajectory".to_string()];
    for &t in &e.probes {
        if e.dim == 1 {
            cols.push(format_number(t));
        } else {
            cols.extend((0..e.dim).map(|d| format!("{}:{d}", format_number(t))));
        }
    }
    text.push_str(&cols.join(","));
    text.push('\n');
    for i in 0..e.n {
        let mut row = vec![i.to_string()];
        for p in 0..e.probes.len() {
            row.extend(e.value(i, p).iter().map(|&x| format_number(x)));
        }
        text.push_str(&row.join(","));
        text.push('\n');
    }
    write_output(c.out.as_deref(), &text)?;
    Ok(true)
}

fn lattice_init(l: &Loaded) -> Result<&nldelay::LatticeLaw, Failure> {
    l.model
        .lattice_initial
        .as_ref()
        .ok_or_else(|| Failure::Config("scenario is not lattice-admissible (atomic integer jumps and initial law)".into()))
}

fn lattice(c: &Common) -> Outcome {
    let l = load(c)?;
    let init = lattice_init(&l)?;
    let probes = l.scenario.probes();
    let ev = solve_lattice(&l.model.measure, &l.model.policy, init, l.scenario.horizon(), l.scenario.run.lattice_step)?;
    let dim = ev.dim();
    let mut text = csv_preamble("lattice", &l.scenario);
    let mut cols = vec!["t".to_string()];
    cols.extend((0..dim).map(|d| format!("x{d}")));
    cols.push("mass".into());
    text.push_str(&cols.join(","));
    text.push('\n');
    for &t in &probes {
        let law = ev.marginal_law(t)?;
        for (pt, w) in &law.points {
            let mut row = vec![format_number(t)];
            row.extend(pt.iter().map(|x| x.to_string()));
            row.push(format_number(*w));
            text.push_str(&row.join(","));
            text.push('\n');
        }
    }
    write_output(c.out.as_deref(), &text)?;
    Ok(true)
}

fn write_z(path: &Path, l: &Loaded, t: f64, z: &[f64], dim: usize) -> Result<(), Failure> {
    let mut text = csv_preamble("verify-clt", &l.scenario);
    text.push_str(&format!("# t={}\n", format_number(t)));
    text.push_str(&(0..dim).map(|d| format!("z{d}")).collect::<Vec<_>>().join(","));
    text.push('\n');
    for row in z.chunks(dim) {
        text.push_str(&row.iter().map(|&x| format_number(x)).collect::<Vec<_>>().join(","));
        text.push('\n');
    }
    write_output(Some(path), &text)
}

fn verify_clt(a: &CltArgs) -> Outcome {
    let c = &a.common;
    let l = load(c)?;
    let (q, p) = (&l.model.measure, &l.model.policy);
    let k = AsymptoticConstants::compute(q, p)?;
    let law = k.limit_law();
    let e = ensemble(&l)?;
    let drift: Vec<f64> = k.drift.iter().copied().collect();
    let path;
    let recentring = match a.recentring {
        RecentringArg::Drift => Recentring::Drift(&drift),
        RecentringArg::Path => {
            path = RecentringPath::compute(q, p, k.delay_weight, l.scenario.horizon(), None)?;
            Recentring::Path(&path)
        }
    };
    let mut tol = GofTolerances::new(k.dim());
    tol.ks_slack = l.scenario.run.ks_slack;
    tol.kernel_tol = l.scenario.run.kernel_tol;
    let spacing = l.scenario.lattice_spacing(&l.model);
    let profile = verify::selfsimilar_profile(&e, recentring, &law, &tol, spacing)?;
    if let Some(zp) = &a.z_out {
        let last = e.probes.len() - 1;
        let t = e.probes[last];
        let x = e.at_probe(last);
        let z = match recentring {
            Recentring::Drift(kk) => verify::rescale(&x, t, kk),
            Recentring::Path(h) => verify::recentre_by_path(&x, t, h)?,
        };
        write_z(zp, &l, t, &z, e.dim)?;
    }
    let pass = profile.reports.iter().all(|r| r.pass) && profile.non_increasing;
    let mut out = header("verify-clt", &l.scenario);
    out.insert("seed".into(), json!(e.seed));
    out.insert("n".into(), json!(e.n));
    out.insert(
        "recentring".into(),
        json!(match a.recentring {
            RecentringArg::Drift => "drift",
            RecentringArg::Path => "path",
        }),
    );
    out.insert("constants".into(), k.to_json());
    out.insert("profile".into(), serde_json::to_value(&profile).expect("report serialises"));
    out.insert("pass".into(), json!(pass));
    write_json(c.out.as_deref(), Value::Object(out))?;
    Ok(pass)
}

fn verify_lln(c: &Common) -> Outcome {
    let l = load(c)?;
    let k = AsymptoticConstants::compute(&l.model.measure, &l.model.policy)?;
    let e = ensemble(&l)?;
    let drift: Vec<f64> = k.drift.iter().copied().collect();
    let diag: Vec<f64> = (0..k.dim()).map(|i| k.sigma[(i, i)]).collect();
    let report = verify::check_lln(&e, &drift, &diag);
    let mut out = header("verify-lln", &l.scenario);
    out.insert("seed".into(), json!(e.seed));
    out.insert("n".into(), json!(e.n));
    out.insert("K".into(), json!(drift));
    out.insert("report".into(), serde_json::to_value(&report).expect("report serialises"));
    out.insert("pass".into(), json!(report.pass));
    write_json(c.out.as_deref(), Value::Object(out))?;
    Ok(report.pass)
}

fn verify_lattice(c: &Common) -> Outcome {
    let l = load(c)?;
    let init = lattice_init(&l)?;
    let ev = solve_lattice(&l.model.measure, &l.model.policy, init, l.scenario.horizon(), l.scenario.run.lattice_step)?;
    let e = ensemble(&l)?;
    let tol = l.scenario.run.tv_tolerance;
    let mut probes = Vec::new();
    let mut pass = true;
    for (p, &t) in e.probes.iter().enumerate() {
        let law = ev.marginal_law(t)?;
        let x = e.at_probe(p);
        let tv = verify::compare_lattice(&x, &law);
        let exact_mean = law.mean();
        let mut means_ok = true;
        let mut mc_mean = Vec::new();
        let mut se = Vec::new();
        for d in 0..e.dim {
            let col = e.coordinate(p, d);
            let m = stats::mean(&col);
            let s = stats::std_error(&col);
            means_ok &= (m - exact_mean[d]).abs() <= 3.0 * s + 1e-12;
            mc_mean.push(m);
            se.push(s);
        }
        let ok = tv <= tol && means_ok;
        pass &= ok;
        probes.push(json!({
            "t": t,
            "total_variation": tv,
            "tolerance": tol,
            "sampling_noise_scale": verify::multinomial_tv_bound(&law, e.n),
            "mc_mean": mc_mean,
            "lattice_mean": exact_mean,
            "mc_std_error": se,
            "means_within_3se": means_ok,
            "pass": ok,
        }));
    }
    let mut out = header("verify-lattice", &l.scenario);
    out.insert("seed".into(), json!(e.seed));
    out.insert("n".into(), json!(e.n));
    out.insert("lattice_max_mass_defect".into(), json!(ev.max_mass_defect()));
    out.insert("probes".into(), Value::Array(probes));
    out.insert("pass".into(), json!(pass));
    write_json(c.out.as_deref(), Value::Object(out))?;
    Ok(pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Constants(c) => constants(c),
        Command::DdeGamma(c) => dde_gamma(c),
        Command::Simulate(c) => simulate(c),
        Command::Lattice(c) => lattice(c),
        Command::VerifyClt(a) => verify_clt(a),
        Command::VerifyLln(c) => verify_lln(c),
        Command::VerifyLattice(c) => verify_lattice(c),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("{TOOL}: verification failed");
            ExitCode::from(1)
        }
        Err(Failure::Config(m)) => {
            eprintln!("{TOOL}: configuration error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("{TOOL}: numerical error: {m}");
            ExitCode::from(3)
        }
    }
}
