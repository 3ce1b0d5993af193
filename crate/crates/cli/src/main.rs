use std::fmt::Display;
use std::fs;
use std::io::{self, BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;

use cipherdb_cloud::{load_store, save_store, EncryptedStore};
use cipherdb_core::corpus::{self, DiffOutcome, DIFFERENTIAL_SCALE, DIFFERENTIAL_SEED, DIFFERENTIAL_SQL};
use cipherdb_core::dataset::{self, DatasetSpec};
use cipherdb_core::keyring::KeyRing;
use cipherdb_core::lab::{self, attack, bench, dist, noise};
use cipherdb_core::manifest::{Manifest, OWNER_PRINCIPAL};
use cipherdb_core::opea::DomainKey;
use cipherdb_core::owner::Owner;
use cipherdb_core::rng::{self, CipherRng};
use cipherdb_core::translator::render_plan;
use cipherdb_core::ResultTable;

#[derive(Parser)]
#[command(name = "cipherdb", version, about = "Encrypted SQL workbench")]
struct Cli {
    /// Directory holding the encrypted store.
    #[arg(long, global = true, default_value = "store")]
    store: PathBuf,
    /// Owner key file.
    #[arg(long, global = true, default_value = "keys.toml")]
    keys: PathBuf,
    /// Schema and domain manifest.
    #[arg(long, global = true, default_value = "manifest.toml")]
    manifest: PathBuf,
    /// Seed for every random choice; fresh entropy when omitted.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplerKind {
    Uniform,
    Normal,
}

#[derive(Subcommand)]
enum Command {
    /// Derive a key ring for the manifest and write it to --keys.
    Keygen {
        #[arg(long)]
        force: bool,
    },
    /// Generate the synthetic supplier dataset as CSV plus its manifest.
    GenData {
        #[arg(long, default_value_t = DIFFERENTIAL_SCALE)]
        scale: f64,
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Encrypt a CSV directory into the store.
    Encrypt {
        #[arg(long, default_value = "data")]
        data: PathBuf,
    },
    /// Print the ciphertext SQL a statement translates to.
    Translate {
        sql: String,
        #[arg(long, default_value = OWNER_PRINCIPAL)]
        principal: String,
    },
    /// Run one statement against the store and print decrypted rows.
    Query {
        sql: String,
        #[arg(long, default_value = OWNER_PRINCIPAL)]
        principal: String,
        /// Print per-stage timings to stderr.
        #[arg(long)]
        timings: bool,
    },
    /// Read statements from stdin, one per `;`.
    Shell {
        #[arg(long, default_value = OWNER_PRINCIPAL)]
        principal: String,
    },
    /// Run a statement corpus through the encrypted and reference pipelines.
    Diff {
        /// Corpus file with `-- name:` entries; the shipped corpus by default.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = DIFFERENTIAL_SCALE)]
        scale: f64,
        #[arg(long, default_value_t = DIFFERENTIAL_SEED)]
        data_seed: u64,
    },
    /// Plaintext and ciphertext histograms with per-partition uniformity tests.
    SimDist {
        #[arg(long, default_value_t = 16)]
        t: u64,
        #[arg(long, default_value_t = 256)]
        r: u32,
        #[arg(long, value_enum, default_value_t = SamplerKind::Uniform)]
        sampler: SamplerKind,
        #[arg(long)]
        mean: Option<f64>,
        #[arg(long)]
        sd: Option<f64>,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Write plain.csv, cipher.csv and partitions.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Play the ordered chosen-ciphertext game against a small key.
    AttackOcca {
        #[arg(long, default_value_t = 2000)]
        trials: u64,
        #[arg(long, default_value_t = 10)]
        t: u64,
        #[arg(long, default_value_t = 1)]
        r: u32,
        #[arg(long, default_value_t = 100)]
        sigma: u64,
    },
    /// Measure how often a decrypted sum is off by one.
    Noise {
        #[arg(long, default_value_t = 100)]
        t: u64,
        #[arg(long, default_value_t = 8)]
        r: u32,
        #[arg(long, default_value_t = 2)]
        terms: u64,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
    },
    /// Time encrypt, decrypt and comparison on one domain.
    Bench {
        #[arg(long, default_value_t = 100_000)]
        t: u64,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
    },
}

/// Fewer draws make the per-partition tests meaningless.
const MIN_SAMPLES: usize = 10_000;
const MIN_TRIALS: u64 = 1000;

enum Failure {
    Usage(String),
    Data(String),
    Mismatch(usize),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Mismatch(_) => 3,
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn data(context: impl Display) -> impl FnOnce(String) -> Failure {
    move |e| Failure::Data(format!("{context}: {e}"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) | Failure::Data(m) => eprintln!("error: {m}"),
                Failure::Mismatch(n) => eprintln!("{n} statement(s) disagree with the reference executor"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Keygen { force } => keygen(cli, *force),
        Command::GenData { scale, out } => gen_data(cli, *scale, out),
        Command::Encrypt { data: dir } => encrypt(cli, dir),
        Command::Translate { sql, principal } => {
            let mut owner = owner(cli)?;
            let mut timings = Vec::new();
            let (_, t) = owner.prepare(sql, principal, &mut timings).map_err(|e| Failure::Data(format!("{}: {e}", e.stage())))?;
            print!("{}", render_plan(&t.plan));
            Ok(())
        }
        Command::Query { sql, principal, timings } => {
            let mut owner = owner(cli)?;
            let mut store = open_store(cli)?;
            execute(cli, &mut owner, &mut store, sql, principal, *timings)
        }
        Command::Shell { principal } => shell(cli, principal),
        Command::Diff { corpus, scale, data_seed } => diff(cli, corpus.as_deref(), *scale, *data_seed),
        Command::SimDist { t, r, sampler, mean, sd, samples, out } => {
            if *t == 0 {
                return Err(Failure::Usage("--t must be positive".into()));
            }
            if *samples < MIN_SAMPLES {
                return Err(Failure::Usage(format!("--samples must be at least {MIN_SAMPLES}")));
            }
            let sampler = match sampler {
                SamplerKind::Uniform => dist::Sampler::Uniform,
                SamplerKind::Normal => {
                    let dist::Sampler::Normal { mean: m0, sd: s0 } = dist::Sampler::skewed(*t) else { unreachable!() };
                    let sd = sd.unwrap_or(s0);
                    if !(sd.is_finite() && sd > 0.0) {
                        return Err(Failure::Usage("--sd must be positive".into()));
                    }
                    dist::Sampler::Normal { mean: mean.unwrap_or(m0), sd }
                }
            };
            let cfg = dist::DistConfig::new(*t, *r, sampler, *samples, seed_or(cli, 1));
            let report = dist::simulate(&cfg).map_err(|e| Failure::Data(e.to_string()))?;
            if let Some(dir) = out {
                fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
                for (name, text) in [
                    ("plain.csv", lab::to_csv(&report.plain)),
                    ("cipher.csv", lab::to_csv(&report.cipher)),
                    ("partitions.csv", lab::to_csv(&report.partitions)),
                ] {
                    let path = dir.join(name);
                    fs::write(&path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
                }
            }
            match cli.format {
                Format::Table => println!("{}", report.summary()),
                Format::Csv => print!("{}", lab::to_csv(&report.partitions)),
            }
            Ok(())
        }
        Command::AttackOcca { trials, t, r, sigma } => {
            if *trials < MIN_TRIALS {
                return Err(Failure::Usage(format!("--trials must be at least {MIN_TRIALS}")));
            }
            let key = DomainKey::from_parts(vec![*r; (*t as usize) * 5], (*sigma).into(), *t)
                .map_err(|e| Failure::Usage(format!("key: {e}")))?;
            let report = attack::run_game(&key, *trials, seed_or(cli, 1)).map_err(|e| Failure::Data(e.to_string()))?;
            match cli.format {
                Format::Table => println!("{}", report.summary()),
                Format::Csv => print!("{}", lab::to_csv(&[report])),
            }
            Ok(())
        }
        Command::Noise { t, r, terms, trials } => {
            if *t == 0 || *terms == 0 || *trials == 0 {
                return Err(Failure::Usage("--t, --terms and --trials must be positive".into()));
            }
            let cfg = noise::NoiseConfig { t: *t, r: *r, terms: *terms, trials: *trials, seed: seed_or(cli, 1) };
            let report = noise::probe(&cfg).map_err(|e| Failure::Data(e.to_string()))?;
            match cli.format {
                Format::Table => println!("{}", report.summary()),
                Format::Csv => {
                    let headers = ["decryption", "offset", "count", "share"].map(String::from);
                    let mut cells = Vec::new();
                    for (kind, counts) in [("standard_below", &report.below), ("extended_above", &report.above)] {
                        for (offset, c) in counts.iter().enumerate() {
                            let share = *c as f64 / report.trials as f64;
                            cells.push(vec![kind.to_string(), offset.to_string(), c.to_string(), share.to_string()]);
                        }
                    }
                    print!("{}", csv_text(&headers, &cells));
                }
            }
            Ok(())
        }
        Command::Bench { t, n } => {
            if *t == 0 || *n == 0 {
                return Err(Failure::Usage("--t and --n must be positive".into()));
            }
            let seed = seed_or(cli, 1);
            let key = bench::bench_key(*t, seed).map_err(|e| Failure::Data(e.to_string()))?;
            let rows = bench::run(&key, *n, seed).map_err(|e| Failure::Data(e.to_string()))?;
            match cli.format {
                Format::Table => {
                    let headers = ["op", "t", "n", "median_ns", "p90_ns", "p99_ns", "mean_ns"].map(String::from);
                    let cells: Vec<Vec<String>> = rows
                        .iter()
                        .map(|r| {
                            vec![
                                r.op.to_string(),
                                r.t.to_string(),
                                r.n.to_string(),
                                r.median_ns.to_string(),
                                r.p90_ns.to_string(),
                                r.p99_ns.to_string(),
                                format!("{:.1}", r.mean_ns),
                            ]
                        })
                        .collect();
                    print!("{}", aligned(&headers, &cells));
                }
                Format::Csv => print!("{}", lab::to_csv(&rows)),
            }
            Ok(())
        }
    }
}

fn seed_or(cli: &Cli, default: u64) -> u64 {
    cli.seed.unwrap_or(default)
}

fn cipher_rng(cli: &Cli) -> CipherRng {
    match cli.seed {
        Some(s) => rng::seeded(s),
        None => CipherRng::from_rng(&mut rand::rng()),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn load_manifest(cli: &Cli) -> Result<Manifest> {
    Manifest::from_toml(&read(&cli.manifest)?).map_err(|e| data(cli.manifest.display())(e.to_string()))
}

fn owner(cli: &Cli) -> Result<Owner> {
    let manifest = load_manifest(cli)?;
    let keys = KeyRing::from_toml(&read(&cli.keys)?).map_err(|e| data(cli.keys.display())(e.to_string()))?;
    keys.check_manifest(&manifest).map_err(|e| data(cli.keys.display())(e.to_string()))?;
    Ok(Owner::new(manifest, keys, cipher_rng(cli)))
}

fn open_store(cli: &Cli) -> Result<EncryptedStore> {
    load_store(&cli.store).map_err(|e| data(cli.store.display())(e.to_string()))
}

fn keygen(cli: &Cli, force: bool) -> Result<()> {
    if cli.keys.exists() && !force {
        return Err(Failure::Usage(format!("{} exists; pass --force to replace it", cli.keys.display())));
    }
    let manifest = load_manifest(cli)?;
    let master = KeyRing::generate_master(&mut cipher_rng(cli));
    let keys = KeyRing::derive(master, &manifest).map_err(|e| Failure::Data(e.to_string()))?;
    fs::write(&cli.keys, keys.to_toml()).map_err(|e| data(cli.keys.display())(e.to_string()))?;
    println!("wrote {} ({} domains)", cli.keys.display(), manifest.domains.len());
    Ok(())
}

fn gen_data(cli: &Cli, scale: f64, out: &Path) -> Result<()> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Failure::Usage("--scale must be positive".into()));
    }
    let spec = DatasetSpec { scale, seed: seed_or(cli, DIFFERENTIAL_SEED) };
    let db = dataset::generate(&spec);
    dataset::write_csv_dir(out, &dataset::manifest(&spec), &db).map_err(|e| Failure::Data(e.to_string()))?;
    let manifest_path = out.join("manifest.toml");
    fs::write(&manifest_path, dataset::manifest_toml(&spec)).map_err(|e| data(manifest_path.display())(e.to_string()))?;
    for (name, rows) in &db {
        println!("{name}: {} rows", rows.len());
    }
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

fn encrypt(cli: &Cli, dir: &Path) -> Result<()> {
    let mut owner = owner(cli)?;
    let db = dataset::read_csv_dir(dir, owner.manifest()).map_err(|e| Failure::Data(e.to_string()))?;
    let start = Instant::now();
    let store = owner.encrypt_database(&db).map_err(|e| Failure::Data(e.to_string()))?;
    save_store(&store, &cli.store).map_err(|e| data(cli.store.display())(e.to_string()))?;
    let rows: usize = db.values().map(Vec::len).sum();
    println!("encrypted {} tables, {rows} rows in {:.2?} into {}", db.len(), start.elapsed(), cli.store.display());
    Ok(())
}

fn execute(cli: &Cli, owner: &mut Owner, store: &mut EncryptedStore, sql: &str, principal: &str, timings: bool) -> Result<()> {
    let out = owner.run(store, sql, principal).map_err(|e| Failure::Data(format!("{}: {e}", e.stage())))?;
    if timings {
        for (stage, d) in &out.timings {
            eprintln!("{stage:>9}: {d:.2?}");
        }
    }
    if let Some(table) = &out.result {
        print!("{}", format_result(table, cli.format));
    }
    if let Some(n) = out.affected {
        save_store(store, &cli.store).map_err(|e| data(cli.store.display())(e.to_string()))?;
        println!("{n} row(s) affected");
    }
    Ok(())
}

fn shell(cli: &Cli, principal: &str) -> Result<()> {
    let mut owner = owner(cli)?;
    let mut store = open_store(cli)?;
    let stdin = io::stdin();
    let interactive = stdin.is_terminal();
    let mut buf = String::new();
    let prompt = |cont: bool| {
        if interactive {
            print!("{}", if cont { "      -> " } else { "cipherdb> " });
            let _ = io::stdout().flush();
        }
    };
    prompt(false);
    for line in stdin.lock().lines() {
        let line = line.map_err(|e| Failure::Data(format!("stdin: {e}")))?;
        if buf.is_empty() && matches!(line.trim(), ".quit" | ".exit" | "\\q") {
            break;
        }
        if line.trim_start().starts_with("--") {
            prompt(!buf.is_empty());
            continue;
        }
        buf.push_str(&line);
        buf.push('\n');
        while let Some(end) = buf.find(';') {
            let stmt: String = buf.drain(..=end).collect();
            if stmt.trim() == ";" {
                continue;
            }
            // Errors are reported and the session continues.
            if let Err(Failure::Data(m) | Failure::Usage(m)) = execute(cli, &mut owner, &mut store, &stmt, principal, false) {
                eprintln!("error: {m}");
            }
        }
        if buf.trim().is_empty() {
            buf.clear();
        }
        prompt(!buf.is_empty());
    }
    if !buf.trim().is_empty() {
        return Err(Failure::Usage("unterminated statement at end of input".into()));
    }
    Ok(())
}

fn diff(cli: &Cli, corpus_path: Option<&Path>, scale: f64, data_seed: u64) -> Result<()> {
    let text = match corpus_path {
        Some(p) => read(p)?,
        None => DIFFERENTIAL_SQL.to_string(),
    };
    let entries = corpus::parse_corpus(&text);
    if entries.is_empty() {
        return Err(Failure::Usage("corpus has no `-- name:` entries".into()));
    }
    let spec = DatasetSpec { scale, seed: data_seed };
    let mut db = dataset::generate(&spec);
    let mut owner = Owner::new(dataset::manifest(&spec), keyring_for(cli, &spec)?, cipher_rng(cli));
    let mut store = owner.encrypt_database(&db).map_err(|e| Failure::Data(e.to_string()))?;
    let reports = corpus::run_differential(&mut owner, &mut store, &mut db, &entries);

    let headers = ["name", "status", "precision", "recall", "ms", "detail"].map(String::from);
    let cells: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let (p, rc) = r.precision_recall();
            let detail = match &r.outcome {
                DiffOutcome::Query(c) if !c.exact() => format!("{c:?}"),
                DiffOutcome::Mutation { expected, actual, table_matches } if !r.passed() => {
                    format!("affected {actual} vs {expected}, table matches: {table_matches}")
                }
                DiffOutcome::Error(m) => m.clone(),
                _ => String::new(),
            };
            vec![
                r.name.clone(),
                if r.passed() { "ok" } else { "MISMATCH" }.to_string(),
                format!("{p:.4}"),
                format!("{rc:.4}"),
                r.elapsed.as_millis().to_string(),
                detail,
            ]
        })
        .collect();
    match cli.format {
        Format::Table => print!("{}", aligned(&headers, &cells)),
        Format::Csv => print!("{}", csv_text(&headers, &cells)),
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    if cli.format == Format::Table {
        println!("{} of {} statements agree", reports.len() - failed, reports.len());
    }
    if failed > 0 {
        return Err(Failure::Mismatch(failed));
    }
    Ok(())
}

/// Keys from --keys when the file exists, otherwise derived from the seed.
fn keyring_for(cli: &Cli, spec: &DatasetSpec) -> Result<KeyRing> {
    let manifest = dataset::manifest(spec);
    if cli.keys.exists() {
        let keys = KeyRing::from_toml(&read(&cli.keys)?).map_err(|e| data(cli.keys.display())(e.to_string()))?;
        if keys.check_manifest(&manifest).is_ok() {
            return Ok(keys);
        }
    }
    let master = KeyRing::generate_master(&mut cipher_rng(cli));
    KeyRing::derive(master, &manifest).map_err(|e| Failure::Data(e.to_string()))
}

fn format_result(table: &ResultTable, format: Format) -> String {
    let cells: Vec<Vec<String>> = table.rows.iter().map(|r| r.iter().map(ToString::to_string).collect()).collect();
    match format {
        Format::Table => {
            let mut s = aligned(&table.headers, &cells);
            s.push_str(&format!("({} row{})\n", cells.len(), if cells.len() == 1 { "" } else { "s" }));
            s
        }
        Format::Csv => csv_text(&table.headers, &cells),
    }
}

fn aligned(headers: &[String], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let parts: Vec<String> = cells.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect();
        parts.join(" | ").trim_end().to_string() + "\n"
    };
    let mut out = line(headers);
    out.push_str(&(width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-") + "\n"));
    for row in rows {
        out.push_str(&line(row));
    }
    out
}

fn csv_text(headers: &[String], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(headers).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
}
