//! `projlat`: command-line access to the projection-lattice toolkit.
//!
//! Operators are read and written as JSON objects
//! `{"shape": [n1, ...], "blocks": [[[[re, im], ...], ...], ...]}`.
//! Exit codes: 0 success, 2 invalid input, 3 invariant or verification
//! failure, 4 budget or capacity exceeded.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use projlat::algebra::{
    partial_isometry, validate_projection, AlgebraShape, CentralProjection, GrassmannSignature,
    Operator, Projection,
};
use projlat::halmos::{distance_via_halmos, halmos_decompose, principal_angles};
use projlat::linalg::Tolerance;
use projlat::paths::{geodesic_eval, geodesic_through, midpoint_from_unitary, sample_midpoints, sharp_relation, triangle_relation};
use projlat::sampling::{random_projection, rng_from_seed};
use projlat::suite::{run_all, SuiteConfig};
use projlat::symmetry::{
    apply_factorization, factorize, file_oracle, induce_oracle, probe_name, random_factorization,
    t2_eval, verify_factorization, Factorization, MapOracle,
};
use projlat::{Error, Result};

#[derive(Parser)]
#[command(name = "projlat", version, about = "Projections in finite-dimensional von Neumann algebras: angles, paths and lattice maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Two-projection canonical form, principal angles and distance
    Halmos { p: PathBuf, q: PathBuf },
    /// Point γ(θ) of the unique path from p to q through the midpoint p0
    Geodesic {
        p: PathBuf,
        q: PathBuf,
        p0: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        theta: f64,
    },
    /// Midpoints of p and q, from a corner unitary or sampled
    Midpoint(MidpointArgs),
    /// Central witness r of the triangle relation, or "none"
    Triangle { p: PathBuf, q: PathBuf },
    /// Whether p1 ♯ p2 holds
    Sharp { p1: PathBuf, p2: PathBuf },
    /// Recover the normal form of a map from its probes
    Factorize {
        #[command(flatten)]
        oracle: OracleArgs,
        /// Query budget; defaults to 10 (B + Σ n²)
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Check a normal form against a map
    Verify {
        factorization: PathBuf,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Extension of a map to an arbitrary projection of the source algebra
    Extend {
        e: PathBuf,
        #[command(flatten)]
        oracle: OracleArgs,
    },
    /// Record the probe pairs a builtin map answers during recovery
    Probes {
        #[arg(long)]
        builtin: String,
        #[arg(long)]
        dir: PathBuf,
        /// Also record the probes needed to extend the map to this projection
        #[arg(long)]
        extend: Option<PathBuf>,
    },
    /// Haar-random projection with the given shape and ranks
    Gen {
        #[arg(long, value_delimiter = ',')]
        shape: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        ranks: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the property suite
    Selftest {
        /// Cap on trials per criterion (default: full counts)
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct MidpointArgs {
    p: PathBuf,
    q: PathBuf,
    /// Unitary of the corner pMp; requires p ⊥ q
    #[arg(long, conflicts_with = "sample", required_unless_present = "sample")]
    unitary: Option<PathBuf>,
    /// Partial isometry with v v* = p, v* v = q (default: built from spectral bases)
    #[arg(long, requires = "unitary")]
    v: Option<PathBuf>,
    /// Number of Haar-random midpoints to draw
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct OracleArgs {
    /// Directory of <name>.in.json / <name>.out.json probe pairs
    #[arg(long)]
    oracle_dir: Option<PathBuf>,
    /// Builtin map `<kind>:<shape>/<ranks>[@seed]`, kind one of
    /// identity, complement, transpose, random
    #[arg(long)]
    builtin: Option<String>,
}

fn tolerance() -> Result<Tolerance> {
    let read = |key: &str, default: f64| -> Result<f64> {
        match std::env::var(key) {
            Ok(v) => v
                .parse()
                .map_err(|_| Error::InvalidInput(format!("{key}={v} is not a number"))),
            Err(_) => Ok(default),
        }
    };
    let d = Tolerance::default();
    Tolerance::new(read("PROJLAT_TOL_RANK", d.rank_rel)?, read("PROJLAT_TOL_EQ", d.eq_abs)?)
}

fn read_operator(path: &Path) -> Result<Operator> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    Operator::from_json(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn read_projection(path: &Path, tol: &Tolerance) -> Result<Projection> {
    validate_projection(&read_operator(path)?, tol)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn parse_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| Error::InvalidInput(format!("bad number {x:?} in {s:?}"))))
        .collect()
}

/// `<kind>:<shape>/<ranks>[@seed]`.
fn builtin(spec: &str, tol: &Tolerance) -> Result<(Factorization, GrassmannSignature)> {
    let bad = || Error::InvalidInput(format!("builtin map {spec:?} is not <kind>:<shape>/<ranks>[@seed]"));
    let (kind, rest) = spec.split_once(':').ok_or_else(bad)?;
    let (body, seed) = match rest.split_once('@') {
        Some((b, s)) => (b, s.parse::<u64>().map_err(|_| bad())?),
        None => (rest, 0),
    };
    let (shape, ranks) = body.split_once('/').ok_or_else(bad)?;
    let shape = AlgebraShape::new(parse_list(shape)?)?;
    let sig = GrassmannSignature::new(shape.clone(), parse_list(ranks)?)?;
    let id = Factorization::identity(&shape);
    let f = match kind {
        "identity" => id,
        "complement" => Factorization::new(id.block_maps().to_vec(), CentralProjection::none(&shape), tol)?,
        "transpose" => {
            let maps = id.block_maps().iter().cloned().map(|mut m| {
                m.antilinear = true;
                m
            });
            Factorization::new(maps.collect(), id.r().clone(), tol)?
        }
        "random" => random_factorization(&shape, false, &mut rng_from_seed(seed)),
        _ => return Err(Error::InvalidInput(format!("unknown builtin kind {kind:?}"))),
    };
    Ok((f, sig))
}

fn oracle(args: &OracleArgs, tol: &Tolerance) -> Result<MapOracle> {
    match (&args.oracle_dir, &args.builtin) {
        (Some(dir), _) => file_oracle(dir, tol),
        (None, Some(spec)) => {
            let (f, sig) = builtin(spec, tol)?;
            induce_oracle(&f, &sig, tol)
        }
        (None, None) => Err(Error::InvalidInput("need --oracle-dir or --builtin".into())),
    }
}

fn json(x: impl Into<serde_json::Value>) -> String {
    x.into().to_string()
}

fn halmos(p: &Path, q: &Path, tol: &Tolerance) -> Result<()> {
    let (p, q) = (read_projection(p, tol)?, read_projection(q, tol)?);
    let h = halmos_decompose(&p, &q, tol)?;
    for (key, op) in [
        ("p_and_q", h.p_and_q.op()),
        ("p_and_qperp", h.p_and_qperp.op()),
        ("pperp_and_q", h.pperp_and_q.op()),
        ("pperp_and_qperp", h.pperp_and_qperp.op()),
        ("e1", h.e1.op()),
        ("e2", h.e2.op()),
        ("v", &h.v),
        ("a", &h.a),
        ("b", &h.b),
    ] {
        println!("{key}={}", op.to_json());
    }
    println!("angles={}", json(principal_angles(&h)));
    println!("distance={}", json(distance_via_halmos(&h)));
    println!("PASS");
    Ok(())
}

fn midpoint(args: &MidpointArgs, tol: &Tolerance) -> Result<()> {
    let (p, q) = (read_projection(&args.p, tol)?, read_projection(&args.q, tol)?);
    if let Some(path) = &args.unitary {
        let u = read_operator(path)?;
        let v = match &args.v {
            Some(path) => read_operator(path)?,
            None => partial_isometry(&p, &q)?,
        };
        println!("{}", midpoint_from_unitary(&p, &q, &v, &u, tol)?.to_json());
    } else {
        let n = args.sample.unwrap_or(1);
        let points = sample_midpoints(&p, &q, n, &mut rng_from_seed(args.seed), tol)?;
        let ops: Vec<String> = points.iter().map(|m| m.to_json()).collect();
        println!("[{}]", ops.join(","));
    }
    Ok(())
}

fn verify(path: &Path, args: &OracleArgs, trials: usize, seed: u64, tol: &Tolerance) -> Result<bool> {
    let text = fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    let f = Factorization::from_json(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    let (max_residual, checked) = match &args.oracle_dir {
        // a directory only answers its own probes, so check every stored pair
        Some(dir) => {
            let mut worst: f64 = 0.0;
            let mut count = 0;
            for (input, output) in probe_pairs(dir, tol)? {
                let got = apply_factorization(&f, &input, tol)?;
                worst = worst.max((got.op() - output.op()).norm());
                count += 1;
            }
            (worst, count)
        }
        None => {
            let mut o = oracle(args, tol)?;
            (verify_factorization(&mut o, &f, trials, seed, tol)?.max_residual, trials)
        }
    };
    let pass = max_residual <= projlat::symmetry::FACTOR_TOL;
    println!("trials={checked}");
    println!("max_residual={max_residual:e}");
    println!("{}", if pass { "PASS" } else { "FAIL" });
    Ok(pass)
}

fn probe_pairs(dir: &Path, tol: &Tolerance) -> Result<Vec<(Projection, Projection)>> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".in.json"))
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|input| {
            let output = PathBuf::from(input.to_string_lossy().replace(".in.json", ".out.json"));
            Ok((read_projection(&input, tol)?, read_projection(&output, tol)?))
        })
        .collect()
}

fn record_probes(spec: &str, dir: &Path, extend: Option<&Path>, tol: &Tolerance) -> Result<()> {
    let (f, sig) = builtin(spec, tol)?;
    fs::create_dir_all(dir)?;
    let target = f.image_signature(&sig)?;
    let (g, t, out_dir) = (f.clone(), *tol, dir.to_path_buf());
    let mut seen: Vec<Projection> = Vec::new();
    let mut recorder = MapOracle::new(sig, target, move |p: &Projection| {
        let out = apply_factorization(&g, p, &t)?;
        if !seen.iter().any(|s| (s.op() - p.op()).norm() <= 1e-12) {
            let stem = out_dir.join(probe_name(seen.len()));
            fs::write(stem.with_extension("in.json"), p.to_json())?;
            fs::write(stem.with_extension("out.json"), out.to_json())?;
            seen.push(p.clone());
        }
        Ok(out)
    });
    factorize(&mut recorder, tol)?;
    if let Some(path) = extend {
        t2_eval(&mut recorder, &read_projection(path, tol)?, tol)?;
    }
    println!("probes={}", recorder.calls());
    println!("dir={}", dir.display());
    Ok(())
}

fn selftest(trials: Option<usize>, seed: u64, tol: &Tolerance) -> bool {
    let reports = run_all(&SuiteConfig { seed, trials, tol: *tol });
    for r in &reports {
        println!("{r}");
    }
    let pass = reports.iter().all(|r| r.pass());
    println!("{}", if pass { "PASS" } else { "FAIL" });
    pass
}

/// Returns whether the command's own check passed.
fn dispatch(cmd: Command) -> Result<bool> {
    let tol = tolerance()?;
    match cmd {
        Command::Halmos { p, q } => halmos(&p, &q, &tol)?,
        Command::Geodesic { p, q, p0, theta } => {
            let (p, q, p0) = (read_projection(&p, &tol)?, read_projection(&q, &tol)?, read_projection(&p0, &tol)?);
            let frame = geodesic_through(&p, &q, &p0, &tol)?;
            println!("{}", geodesic_eval(&frame, theta, &tol)?.to_json());
        }
        Command::Midpoint(args) => midpoint(&args, &tol)?,
        Command::Triangle { p, q } => {
            let (p, q) = (read_projection(&p, &tol)?, read_projection(&q, &tol)?);
            match triangle_relation(&p, &q, &tol)? {
                Some(w) => println!("{}", w.r.mask_string()),
                None => println!("none"),
            }
        }
        Command::Sharp { p1, p2 } => {
            let (p1, p2) = (read_projection(&p1, &tol)?, read_projection(&p2, &tol)?);
            println!("{}", sharp_relation(&p1, &p2, &tol)?);
        }
        Command::Factorize { oracle: args, budget } => {
            let mut o = oracle(&args, &tol)?;
            if let Some(b) = budget {
                o = o.with_budget(b);
            }
            let rec = factorize(&mut o, &tol)?;
            println!("{}", rec.factorization.to_json());
            eprintln!("calls={} alternatives={}", rec.calls, json(rec.alternatives));
        }
        Command::Verify { factorization, oracle: args, trials, seed } => {
            return verify(&factorization, &args, trials, seed, &tol);
        }
        Command::Extend { e, oracle: args } => {
            let mut o = oracle(&args, &tol)?;
            let e = validate_projection(&read_operator(&e)?, &tol)?;
            println!("{}", t2_eval(&mut o, &e, &tol)?.to_json());
        }
        Command::Probes { builtin, dir, extend } => record_probes(&builtin, &dir, extend.as_deref(), &tol)?,
        Command::Gen { shape, ranks, seed } => {
            let sig = GrassmannSignature::new(AlgebraShape::new(shape)?, ranks)?;
            println!("{}", random_projection(&sig, seed).to_json());
        }
        Command::Selftest { trials, seed } => return Ok(selftest(trials, seed, &tol)),
    }
    Ok(true)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvariantViolation(_) | Error::InconsistentOracle(_) => 3,
        Error::Capacity(_) | Error::BudgetExceeded { .. } => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
