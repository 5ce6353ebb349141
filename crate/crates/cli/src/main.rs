use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use tribc::channels::{make_example1, Example1Params};
use tribc::coset_sim::{simulate_example1, stats_csv, SimConfig};
use tribc::entropy::{binary_entropy, info_quantity, InfoExpr};
use tribc::gelfand_pinsker::{alpha_t, alpha_tr, prop1_refute, GPInstance, GPSearch, Prop1Outcome};
use tribc::regions::{
    corollary1_window, lemma1_point, lemma3_audit, region_member, RateTriple, RegionKind, TestChannel,
    COROLLARY1_PRINTED_HIGH, DEFAULT_TOL,
};
use tribc::{Error, JointPmf};

#[derive(Parser)]
#[command(name = "tribc", version, about = "Rate regions and coding experiments for three-receiver broadcast channels")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Machine-readable output instead of the human summary.
    #[arg(long, global = true, value_enum)]
    emit: Option<Emit>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Emit {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Information quantities of a joint pmf, e.g. `I(A;B|C)`.
    Entropy {
        /// Joint pmf JSON file.
        #[arg(long, required_unless_present = "binary")]
        pmf: Option<PathBuf>,
        /// Expression to evaluate; repeatable.
        #[arg(long = "expr")]
        exprs: Vec<String>,
        /// Binary entropy of this probability.
        #[arg(long)]
        binary: Option<f64>,
    },
    /// The delta window on which Marton's region falls short of capacity.
    Corollary1 {
        #[arg(long)]
        delta1: f64,
        #[arg(long)]
        tau: f64,
    },
    /// Gelfand-Pinsker capacity with and without state at the receiver.
    Gp {
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = GPSearch::default().restarts)]
        restarts: usize,
    },
    /// Membership of a rate triple for one test channel.
    Region {
        #[arg(long, value_parser = parse_kind)]
        kind: RegionKind,
        #[arg(long)]
        test_channel: PathBuf,
        /// Rate triple `R1,R2,R3`.
        #[arg(long, required_unless_present = "lemma1", conflicts_with = "lemma1")]
        point: Option<String>,
        /// Use the exact linear-coding point of the Example-1 channel.
        #[arg(long)]
        lemma1: bool,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Monte Carlo block-error rates of the coset-code scheme.
    Simulate {
        /// SimConfig JSON file. `--seed`, when given, replaces its seed.
        #[arg(long)]
        config: PathBuf,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact infeasibility certificate over the 256 encoder maps.
    Prop1 {
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        eps: f64,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Structure of a test channel that carries users 2 and 3 at capacity.
    Audit {
        #[arg(long)]
        test_channel: PathBuf,
        /// JSON object of rate-variable values.
        #[arg(long)]
        rates: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
}

fn parse_kind(s: &str) -> Result<RegionKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Schema(_) | Error::Json(_) | Error::Io(_) => 2,
            Error::Domain(_) | Error::Precondition(_) => 3,
            Error::Cap(_) => 4,
        };
        Failure { code, msg: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::Io(e).into()
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure { code: 2, msg: format!("csv: {e}") }
    }
}

type Outcome = Result<(), Failure>;

/// Six significant digits.
fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&mag) {
        return format!("{x:.5e}");
    }
    let prec = (5 - mag).max(0) as usize;
    let s = format!("{x:.prec$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn write_out(path: Option<&Path>, text: &str) -> Outcome {
    match path {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn print_json(v: serde_json::Value) {
    println!("{v}");
}

fn entropy(cli: &Cli, pmf: Option<&Path>, exprs: &[String], binary: Option<f64>) -> Outcome {
    let mut rows: Vec<(String, f64)> = Vec::new();
    if let Some(p) = binary {
        rows.push((format!("h_b({p})"), binary_entropy(p)?));
    }
    if let Some(path) = pmf {
        let joint = JointPmf::from_json(&fs::read_to_string(path)?)?;
        for e in exprs {
            let expr = InfoExpr::parse(e)?;
            rows.push((expr.to_string(), info_quantity(&joint, &expr)?));
        }
    }
    match cli.emit {
        Some(Emit::Json) => {
            print_json(json!(rows.iter().map(|(e, v)| json!({"expr": e, "value": v})).collect::<Vec<_>>()))
        }
        Some(Emit::Csv) => {
            let mut w = csv::Writer::from_writer(io::stdout());
            w.write_record(["expr", "value"])?;
            for (e, v) in &rows {
                w.write_record([e.clone(), format!("{v:?}")])?;
            }
            w.flush()?;
        }
        None => rows.iter().for_each(|(e, v)| println!("{e} = {}", sig6(*v))),
    }
    Ok(())
}

fn corollary1(cli: &Cli, delta1: f64, tau: f64) -> Outcome {
    let (low, high) = corollary1_window(delta1, tau)?;
    let contains = low < COROLLARY1_PRINTED_HIGH && COROLLARY1_PRINTED_HIGH <= high;
    match cli.emit {
        Some(Emit::Json) => print_json(json!({
            "low": low, "high": high, "printed_high": COROLLARY1_PRINTED_HIGH, "contains_printed_window": contains,
        })),
        Some(Emit::Csv) => {
            println!("low,high,printed_high,contains_printed_window");
            println!("{low:?},{high:?},{COROLLARY1_PRINTED_HIGH:?},{contains}");
        }
        None => {
            println!("low  = {} (tau*delta1)", sig6(low));
            println!("high = {} (h_b(delta) = (1 + h_b(low)) / 2)", sig6(high));
            println!(
                "note: the printed upper endpoint is {COROLLARY1_PRINTED_HIGH}; the derived window ({}, {}) {} ({}, {COROLLARY1_PRINTED_HIGH})",
                sig6(low),
                sig6(high),
                if contains { "contains" } else { "does not contain" },
                sig6(low),
            );
        }
    }
    Ok(())
}

fn gp(cli: &Cli, tau: f64, delta: f64, eps: f64, restarts: usize) -> Outcome {
    let inst = GPInstance::new(tau, delta, eps)?;
    let search = GPSearch { restarts, seed: cli.seed, ..GPSearch::default() };
    let t = alpha_t(&inst, &search)?;
    let tr = alpha_tr(&inst)?;
    let gap = tr - t.value;
    match cli.emit {
        Some(Emit::Json) => {
            print_json(json!({"alpha_t": t.value, "alpha_tr": tr, "gap": gap, "converged": t.converged}))
        }
        Some(Emit::Csv) => {
            println!("tau,delta,eps,alpha_t,alpha_tr,gap,converged,seed");
            println!("{tau:?},{delta:?},{eps:?},{:?},{tr:?},{gap:?},{},{}", t.value, t.converged, cli.seed);
        }
        None => {
            println!("alpha_T   = {}", sig6(t.value));
            println!("alpha_TR  = {}", sig6(tr));
            println!("gap       = {}", sig6(gap));
            println!("converged = {}", t.converged);
        }
    }
    Ok(())
}

/// Crossovers of an Example-1 channel, read from the all-zero input.
fn example1_params(test: &TestChannel) -> Result<Example1Params, Failure> {
    let ch = &test.channel;
    let not_ex1 = || Failure { code: 3, msg: "precondition failed: --lemma1 needs an Example-1 channel".into() };
    if ch.input_size != 8 || ch.output_sizes != [2, 2, 2] {
        return Err(not_ex1());
    }
    let d: Vec<f64> = (0..3).map(|k| ch.marginal(k)[0][1]).collect();
    let params = Example1Params::new(test.tau, d[0], d[1], d[2])?;
    let rebuilt = make_example1(params)?;
    if rebuilt.transition.iter().zip(&ch.transition).any(|(a, b)| (a - b).abs() > 1e-12) || rebuilt.cost != ch.cost {
        return Err(not_ex1());
    }
    Ok(params)
}

fn region(cli: &Cli, kind: RegionKind, file: &Path, point: Option<&str>, lemma1: bool, tol: f64) -> Outcome {
    let test = TestChannel::from_json_file(file)?;
    let p: RateTriple = if lemma1 {
        let e = example1_params(&test)?;
        lemma1_point(e.tau, e.delta1, e.delta2, e.delta3)?
    } else {
        point.expect("clap requires --point without --lemma1").parse()?
    };
    let member = region_member(kind, &test, p, tol)?;
    let point_text = format!("{:?},{:?},{:?}", p.r1, p.r2, p.r3);
    match cli.emit {
        Some(Emit::Json) => print_json(json!({
            "region": kind.name(), "point": [p.r1, p.r2, p.r3], "member": member, "tol": tol, "seed": cli.seed,
        })),
        Some(Emit::Csv) => {
            let mut w = csv::Writer::from_writer(io::stdout());
            w.write_record(["region", "point", "member", "tol", "seed"])?;
            w.write_record([kind.name().to_string(), point_text, member.to_string(), format!("{tol:?}"), cli.seed.to_string()])?;
            w.flush()?;
        }
        None => println!("region={kind} point=({}, {}, {}) member={member}", sig6(p.r1), sig6(p.r2), sig6(p.r3)),
    }
    Ok(())
}

fn seed_given() -> bool {
    std::env::args().any(|a| a == "--seed" || a.starts_with("--seed="))
}

fn simulate(cli: &Cli, config: &Path, out: Option<&Path>) -> Outcome {
    let mut cfg: SimConfig = serde_json::from_str(&fs::read_to_string(config)?).map_err(Error::from)?;
    if seed_given() {
        cfg.seed = cli.seed;
    }
    let stats = simulate_example1(&cfg)?;
    match cli.emit {
        Some(Emit::Json) => {
            let text = serde_json::to_string(&stats).map_err(Error::from)?;
            write_out(out, &format!("{text}\n"))
        }
        _ => write_out(out, &stats_csv(&stats)),
    }
}

fn prop1(cli: &Cli, tau: f64, delta: f64, eps: f64, out: Option<&Path>, tol: f64) -> Outcome {
    let inst = GPInstance::new(tau, delta, eps)?;
    match prop1_refute(&inst, tol)? {
        Prop1Outcome::Refuted(cert) => match cli.emit {
            Some(Emit::Json) => {
                let text = serde_json::to_string(&cert).map_err(Error::from)?;
                write_out(out, &format!("{text}\n"))
            }
            _ => write_out(out, &cert.to_csv()),
        },
        Prop1Outcome::Counterexample { z, pmf } => {
            println!("{}", serde_json::to_string(&pmf).map_err(Error::from)?);
            Err(Failure { code: 1, msg: format!("encoder map z={z:08b} admits a pmf meeting every condition") })
        }
    }
}

fn audit(cli: &Cli, file: &Path, rates: &Path, tol: f64) -> Outcome {
    let test = TestChannel::from_json_file(file)?;
    let rates: BTreeMap<String, f64> = serde_json::from_str(&fs::read_to_string(rates)?).map_err(Error::from)?;
    let report = lemma3_audit(&test, &rates, tol)?;
    match cli.emit {
        Some(Emit::Json) => print_json(serde_json::to_value(&report).map_err(Error::from)?),
        Some(Emit::Csv) => {
            let mut w = csv::Writer::from_writer(io::stdout());
            w.write_record(["item", "label", "value", "target", "holds"])?;
            for c in &report.checks {
                let holds = c.holds.map_or("skip".to_string(), |h| h.to_string());
                w.write_record([c.item.to_string(), c.label.clone(), format!("{:?}", c.value), format!("{:?}", c.target), holds])?;
            }
            w.flush()?;
        }
        None => {
            print!("{report}");
            println!("all items hold: {}", report.all_pass());
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Failure { code: 2, msg: format!("thread pool: {e}") })?;
    }
    match &cli.command {
        Command::Entropy { pmf, exprs, binary } => entropy(cli, pmf.as_deref(), exprs, *binary),
        Command::Corollary1 { delta1, tau } => corollary1(cli, *delta1, *tau),
        Command::Gp { tau, delta, eps, restarts } => gp(cli, *tau, *delta, *eps, *restarts),
        Command::Region { kind, test_channel, point, lemma1, tol } => {
            region(cli, *kind, test_channel, point.as_deref(), *lemma1, *tol)
        }
        Command::Simulate { config, out } => simulate(cli, config, out.as_deref()),
        Command::Prop1 { tau, delta, eps, out, tol } => prop1(cli, *tau, *delta, *eps, out.as_deref(), *tol),
        Command::Audit { test_channel, rates, tol } => audit(cli, test_channel, rates, *tol),
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("tribc: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
