//! `veilsum`: run scenarios, verify transcripts offline, replay compromises
//! and dump the ledger.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use veilsum::actors::World;
use veilsum::adversary::{self, Target};
use veilsum::ledger::{RecordKind, SessionId};
use veilsum::scenario::ScenarioConfig;
use veilsum::transcript::{self, Transcript};
use veilsum::Profile;

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_ABORTED: u8 = 2;

#[derive(Parser)]
#[command(
    name = "veilsum",
    version,
    about = "Privacy-preserving aggregate asset verification simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario and write its transcript.
    ///
    /// Exits 0 when every session completed, 2 if any session was aborted,
    /// 1 on configuration errors.
    Run {
        scenario: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the key-size profile (default: config, then VEILSUM_PROFILE, then test).
        #[arg(long)]
        profile: Option<Profile>,
        /// Transcript path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check every record, signature, fingerprint and proof in a transcript.
    Verify { transcript: PathBuf },
    /// Replay a compromise of one entity (or all of them) against a transcript.
    Attack {
        transcript: PathBuf,
        /// relayer, zkpsp, operator, source:<id> or all.
        #[arg(long)]
        target: String,
    },
    /// Print ledger records from a transcript.
    Dump {
        transcript: PathBuf,
        #[arg(long)]
        kind: Option<RecordKind>,
        #[arg(long)]
        session: Option<String>,
        /// One line per record: height, kind, session, author.
        #[arg(long)]
        summary: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            seed,
            profile,
            out,
        } => cmd_run(&scenario, seed, profile, out.as_deref()),
        Command::Verify { transcript } => cmd_verify(&transcript),
        Command::Attack { transcript, target } => cmd_attack(&transcript, &target),
        Command::Dump {
            transcript,
            kind,
            session,
            summary,
        } => cmd_dump(&transcript, kind, session, summary),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn cmd_run(
    path: &Path,
    seed: Option<u64>,
    profile: Option<Profile>,
    out: Option<&Path>,
) -> Result<u8> {
    let mut config = ScenarioConfig::from_toml(&read(path)?).context("invalid scenario")?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if profile.is_some() {
        config.profile = profile;
    }
    let mut world = World::build(&config).context("invalid scenario")?;
    world.run();
    let text = Transcript::from_world(&world).render();
    match out {
        Some(p) => fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?,
        None => io::stdout().write_all(text.as_bytes())?,
    }

    let profile = world.profile();
    if !profile.is_production() {
        eprintln!("profile: {profile} (non-production key sizes)");
    }
    for u in world.users() {
        for s in u.results() {
            let status = match (s.outcome, s.aborted) {
                (Some(o), _) => o.to_string(),
                (None, true) => "aborted".to_string(),
                (None, false) => "no decision".to_string(),
            };
            eprintln!("{} session {}: {status}", u.entity(), s.session_id);
        }
    }
    Ok(if world.aborted_sessions() > 0 {
        EXIT_ABORTED
    } else {
        EXIT_OK
    })
}

fn cmd_verify(path: &Path) -> Result<u8> {
    match transcript::verify(&read(path)?) {
        Ok(report) => {
            println!(
                "ok: {} records, {} sessions, {} aborted, {} decisions",
                report.records,
                report.sessions,
                report.aborted,
                report.decisions.len()
            );
            Ok(EXIT_OK)
        }
        Err(e) => {
            eprintln!("verification failed: {e}");
            Ok(EXIT_ERROR)
        }
    }
}

fn describe(view: &adversary::EntityView) -> Vec<String> {
    let list = |items: Vec<String>| {
        if items.is_empty() {
            "none".to_string()
        } else {
            items.join(", ")
        }
    };
    let short = |token: &str| token[..12.min(token.len())].to_string();
    vec![
        format!(
            "private keys: {}",
            list(
                view.private_keys_held
                    .iter()
                    .map(|k| format!("{k:?}"))
                    .collect()
            )
        ),
        format!("tokens seen: {}", view.caddr_tokens.len()),
        format!("ciphertexts held: {}", view.held_ciphertexts.len()),
        format!(
            "account amounts: {}",
            list(
                view.plaintext_amounts
                    .iter()
                    .map(|(t, a, v)| format!("{v} ({a}, token {})", short(t)))
                    .collect()
            )
        ),
        format!(
            "totals: {}",
            list(
                view.exact_totals
                    .iter()
                    .map(|(t, v)| format!("{v} (token {})", short(t)))
                    .collect()
            )
        ),
        format!(
            "addresses: {}",
            list(
                view.plain_addresses
                    .iter()
                    .map(|(t, a)| format!("{a} (token {})", short(t)))
                    .collect()
            )
        ),
        format!(
            "interval labels: {}",
            list(
                view.interval_labels
                    .iter()
                    .map(|(t, v)| format!("{v:?} (token {})", short(t)))
                    .collect()
            )
        ),
    ]
}

fn cmd_attack(path: &Path, target: &str) -> Result<u8> {
    let text = read(path)?;
    let transcript = match Transcript::parse(&text) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read transcript: {e}");
            return Ok(EXIT_ERROR);
        }
    };
    let targets = if target == "all" {
        Target::all_in(&transcript)
    } else {
        match target.parse::<Target>() {
            Ok(t) if transcript.entity(&t.entity()).is_some() => vec![t],
            Ok(t) => {
                eprintln!("target {t} does not appear in this transcript");
                return Ok(EXIT_ERROR);
            }
            Err(e) => {
                eprintln!("{e}");
                return Ok(EXIT_ERROR);
            }
        }
    };

    let mut ok = true;
    for t in targets {
        let view = adversary::compromise(&transcript, &t);
        println!("target: {t}");
        for line in describe(&view) {
            println!("  {line}");
        }
        match adversary::assert_view_bounds(&t, &view) {
            Ok(()) => println!("  bounds: ok"),
            Err(violations) => {
                ok = false;
                for v in violations {
                    println!("  bounds: VIOLATED {v}");
                }
            }
        }
        match adversary::attempt_linkage(&view) {
            None => println!("  linkage: none"),
            Some(claim) => {
                ok = false;
                let what = if claim.is_total {
                    "total"
                } else {
                    "account amount"
                };
                println!("  linkage: {} -> {what} {}", claim.address, claim.amount);
            }
        }
    }
    let gaps = adversary::completeness_audit(&transcript);
    for g in &gaps {
        println!(
            "audit gap: {} {} calls={} logged={}",
            g.entity, g.operation, g.calls, g.logged
        );
    }
    Ok(if ok && gaps.is_empty() {
        EXIT_OK
    } else {
        EXIT_ERROR
    })
}

fn cmd_dump(
    path: &Path,
    kind: Option<RecordKind>,
    session: Option<String>,
    summary: bool,
) -> Result<u8> {
    let transcript = match Transcript::parse(&read(path)?) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read transcript: {e}");
            return Ok(EXIT_ERROR);
        }
    };
    let session = session
        .map(|s| SessionId::try_from(s).map_err(|e| anyhow::anyhow!("invalid session id: {e}")))
        .transpose()?;
    let mut stdout = io::stdout().lock();
    for r in &transcript.records {
        if kind.is_some_and(|k| k != r.kind()) || session.is_some_and(|s| s != r.session_id()) {
            continue;
        }
        if summary {
            writeln!(
                stdout,
                "{:>5} {:<18} {} {}",
                r.height(),
                r.kind(),
                r.session_id(),
                r.author()
            )?;
        } else {
            writeln!(stdout, "{}", serde_json::to_string(&r.to_line())?)?;
        }
    }
    Ok(EXIT_OK)
}
