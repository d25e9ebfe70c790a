use clap::{Parser, Subcommand};
use qdesigns::fields::{FieldTower, Level, TowerSpec};
use qdesigns::gadgets::{self, AbsorberFlip, ExchangeBudget, ExchangeGadget};
use qdesigns::lattice;
use qdesigns::pipeline::{self, PipelineConfig};
use qdesigns::qsystem;
use qdesigns::subspace::gaussian_binomial;
use qdesigns::template::{self, TemplateParams, TemplateState};
use qdesigns::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "qdesigns", about = "Subspace design toolkit", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Gaussian binomial [n k]_q.
    Gaussian { n: u64, k: u64, q: u64 },
    /// Necessary divisibility conditions for an (n,s,r,λ)_q design.
    Divisibility { n: u32, s: u32, r: u32, lambda: u64, q: u32 },
    /// Inclusion matrix side and |det| on an (r+s)-space.
    Kantor { q: u32, r: u32, s: u32 },
    /// Local decoding gadget in q-system text.
    Decode { q: u32, r: u32, s: u32 },
    /// Subspace exchange gadgets.
    Exchange {
        #[command(subcommand)]
        cmd: ExchangeCmd,
    },
    /// Absorber flips.
    Absorber {
        #[command(subcommand)]
        cmd: AbsorberCmd,
    },
    /// Algebraic templates.
    Template {
        #[command(subcommand)]
        cmd: TemplateCmd,
    },
    /// Runs the pipeline up to the nibble and prints that stage.
    Nibble {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Runs the staged pipeline and writes the JSON report.
    Pipeline {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Checks a block multiset (q-system text) for the design property.
    Verify {
        blocks: PathBuf,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        s: u32,
        #[arg(long)]
        r: u32,
        #[arg(long)]
        lambda: u64,
        #[arg(long)]
        simple: bool,
    },
}

#[derive(Subcommand)]
enum ExchangeCmd {
    Build {
        q: u32,
        s: u32,
        r: u32,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    Verify { file: PathBuf },
}

#[derive(Subcommand)]
enum AbsorberCmd {
    /// Builds an absorber from random L-independent parameters.
    Build {
        #[arg(long, default_value = "2^1:2:2")]
        tower: TowerSpec,
        #[arg(long, default_value_t = 2)]
        s: u32,
        #[arg(long, default_value_t = 1)]
        r: u32,
        #[arg(long, default_value_t = 1)]
        u: u32,
        #[arg(long, default_value_t = 1)]
        d: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    Verify { file: PathBuf },
}

#[derive(Subcommand)]
enum TemplateCmd {
    Sample {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    Verify { file: PathBuf },
}

fn read(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => Ok(std::fs::write(p, text)?),
        None => {
            print!("{}", text);
            Ok(())
        }
    }
}

fn json<T: Serialize>(x: &T) -> String {
    serde_json::to_string_pretty(x).expect("reports serialize") + "\n"
}

fn config(path: &Path) -> Result<PipelineConfig> {
    serde_json::from_str(&read(path)?).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })
}

fn absorber_build(tower: TowerSpec, s: u32, r: u32, u: u32, d: u32, seed: u64) -> Result<AbsorberFlip> {
    let t = FieldTower::new(tower)?;
    let n = gadgets::generic_matrix(&t, Level::L, s as usize, r as usize, d, 0)?;
    let xstar = gadgets::find_partner(&t, &n, u, d, true).or_else(|_| gadgets::find_partner(&t, &n, u, d, false))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ksize = t.kfield().order();
    for _ in 0..10_000 {
        let all: Vec<u32> = (0..r + u).map(|_| rng.gen_range(0..ksize)).collect();
        if t.l_dim(&all) == (r + u) as usize {
            return gadgets::build_absorber(&t, &n, &xstar, &all[..r as usize], &all[r as usize..]);
        }
    }
    Err(Error::Process("no L-independent parameters found".into()))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Gaussian { n, k, q } => println!("{}", gaussian_binomial(n, k, q)),
        Cmd::Divisibility { n, s, r, lambda, q } => {
            let rep = lattice::divisibility_check(n, s, r, lambda, q)?;
            print!("{}", json(&rep));
            return Ok(rep.pass);
        }
        Cmd::Kantor { q, r, s } => {
            let (m, delta) = lattice::kantor(q, r, s)?;
            println!("{}", json(&serde_json::json!({ "side": m.side(), "delta": delta.to_string() })).trim_end());
        }
        Cmd::Decode { q, r, s } => print!("{}", lattice::local_decode(q, r, s)?.to_text()),
        Cmd::Exchange { cmd } => match cmd {
            ExchangeCmd::Build { q, s, r, output } => {
                let g = gadgets::build_exchange(q, s, r, ExchangeBudget::default())?;
                emit(&g.to_text(), output.as_deref())?;
            }
            ExchangeCmd::Verify { file } => {
                let rep = gadgets::verify_exchange(&ExchangeGadget::from_text(&read(&file)?)?)?;
                print!("{}", json(&rep));
                return Ok(rep.pass);
            }
        },
        Cmd::Absorber { cmd } => match cmd {
            AbsorberCmd::Build { tower, s, r, u, d, seed, output } => {
                emit(&absorber_build(tower, s, r, u, d, seed)?.to_text(), output.as_deref())?;
            }
            AbsorberCmd::Verify { file } => {
                let a = AbsorberFlip::from_text(&read(&file)?)?;
                let rep = gadgets::verify_absorber(&FieldTower::new(a.spec)?, &a)?;
                print!("{}", json(&rep));
                return Ok(rep.pass);
            }
        },
        Cmd::Template { cmd } => match cmd {
            TemplateCmd::Sample { config: path, seed, output } => {
                let p: TemplateParams = config(&path)?.template_params(seed);
                emit(&template::sample_template(&p)?.to_text(), output.as_deref())?;
            }
            TemplateCmd::Verify { file } => {
                let rep = template::verify_template(&TemplateState::from_text(&read(&file)?)?)?;
                print!("{}", json(&rep));
                return Ok(rep.pass);
            }
        },
        Cmd::Nibble { config: path, seed } => {
            let mut c = config(&path)?;
            c.budgets.stop_after = Some("nibble".into());
            c.budgets.plain_shortcut = false;
            let rep = pipeline::run_pipeline(&c, seed)?;
            let last = rep.stages.last().expect("at least one stage runs");
            print!("{}", json(last));
            return Ok(last.name == "nibble" && last.status == "pass");
        }
        Cmd::Pipeline { config: path, seed, output } => {
            let rep = pipeline::run_pipeline(&config(&path)?, seed)?;
            emit(&(rep.to_json() + "\n"), output.as_deref())?;
            return Ok(rep.success);
        }
        Cmd::Verify { blocks, n, s, r, lambda, simple } => {
            let phi = qsystem::parse(&read(&blocks)?)?;
            if phi.n() != n || phi.k() != s {
                return Err(Error::InvalidParameter(format!("file holds {}-spaces of F_q^{}, expected {}-spaces of F_q^{}", phi.k(), phi.n(), s, n)));
            }
            let list = pipeline::blocks_from_qsystem(&phi)?;
            let rep = pipeline::verify_design(&list, phi.q(), n, s, r, lambda, simple)?;
            print!("{}", json(&rep));
            return Ok(rep.pass);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(2)
        }
    }
}
