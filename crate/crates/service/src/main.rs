use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use irv_rla::audit::risk::{parse_ratio, KaplanMarkov};
use irv_rla::audit::{AuditMode, AuditSpec, MvrRecord, Reading, Session};
use irv_rla::cvr::{parse_canonical, parse_raire_legacy, read_file, to_canonical_string};
use irv_rla::raire::{generate_assertions, DifficultyMeasure, GenerationConfig};
use irv_rla::tree::{export_trees, verify_assertion_set};
use irv_rla::{tabulate, AssertionSet, CandidateId, Contest, TiePolicy, Verdict, VerifyOptions, VoteRecord};
use irv_rla_service::api::{router, AppState};
use irv_rla_service::report;

#[derive(Parser)]
#[command(
    name = "irv-rla",
    version,
    about = "Risk-limiting audits for instant runoff contests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the elimination order and winner.
    Tabulate {
        #[command(flatten)]
        cvr: CvrArgs,
        /// Stop with an error on a tied elimination instead of dropping the lowest id.
        #[arg(long)]
        strict_ties: bool,
    },
    /// Generate an assertion set certifying the reported winner.
    Generate {
        #[command(flatten)]
        cvr: CvrArgs,
        #[arg(long, default_value_t = 0.05)]
        risk_limit: f64,
        #[arg(long, default_value = "comparison")]
        mode: AuditMode,
        #[arg(long, value_enum, default_value_t = Measure::SampleSize)]
        measure: Measure,
        /// Assumed one-vote overstatement rate when scoring difficulty.
        #[arg(long, default_value_t = 0.0)]
        error_rate: f64,
        /// Cards in the population; defaults to the CVR file's card bound.
        #[arg(long)]
        population: Option<u64>,
        /// Reported winner, when the CVR file does not name one.
        #[arg(long)]
        winner: Option<u32>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check that an assertion set rules out every other winner.
    Verify {
        #[command(flatten)]
        cvr: CvrArgs,
        assertions: PathBuf,
        #[arg(long, default_value_t = VerifyOptions::default().max_candidates)]
        max_candidates: usize,
    },
    /// Export the pruned elimination trees.
    Trees {
        #[command(flatten)]
        cvr: CvrArgs,
        assertions: PathBuf,
        /// Graphviz output instead of the text document.
        #[arg(long)]
        dot: bool,
    },
    /// Convert a legacy RAIRE file to the canonical CVR format.
    Convert {
        input: PathBuf,
        /// Contest to extract; the first one by default.
        #[arg(long)]
        contest: Option<String>,
        /// Reported winner to record.
        #[arg(long)]
        winner: Option<u32>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run an audit stored under a data directory.
    Audit {
        #[arg(long, default_value = "audits", global = true)]
        data_dir: PathBuf,
        #[command(subcommand)]
        action: AuditAction,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long, default_value = "audits")]
        data_dir: PathBuf,
    },
}

#[derive(Args)]
struct CvrArgs {
    /// CVR file.
    cvr: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Canonical)]
    format: Format,
    /// Contest to read from a legacy file.
    #[arg(long)]
    contest: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Canonical,
    RaireLegacy,
}

#[derive(Clone, Copy, ValueEnum)]
enum Measure {
    SampleSize,
    InverseMargin,
}

#[derive(Subcommand)]
enum AuditAction {
    /// Start an audit and draw the initial sample.
    Init {
        #[arg(long)]
        cvr: PathBuf,
        #[arg(long)]
        assertions: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        risk_limit: f64,
        #[arg(long, default_value = "comparison")]
        mode: AuditMode,
        /// Public random seed.
        #[arg(long)]
        seed: String,
        #[arg(long)]
        population: Option<u64>,
        #[arg(long, default_value_t = 0.0)]
        error_rate: f64,
        /// Risk-function padding, e.g. `1/10`.
        #[arg(long)]
        padding: Option<String>,
        /// Initial draws; the planning estimate by default.
        #[arg(long)]
        draws: Option<u64>,
    },
    /// Draw more ballots.
    Draw {
        id: String,
        /// Draws to add; the suggested next round by default.
        #[arg(long)]
        count: Option<u64>,
    },
    /// Enter manual readings.
    Enter {
        id: String,
        /// JSON array of records `{"ballot_id", "reading": {"kind": "ranking", "ranking": [...]}}`.
        #[arg(long, conflicts_with_all = ["ballot", "ranking", "not_found"])]
        file: Option<PathBuf>,
        #[arg(long, required_unless_present = "file")]
        ballot: Option<String>,
        /// Comma-separated candidate ids; empty for a blank card.
        #[arg(long, conflicts_with = "not_found")]
        ranking: Option<String>,
        #[arg(long)]
        not_found: bool,
        /// Record an independent second reading.
        #[arg(long)]
        second: bool,
    },
    /// Print the audit snapshot as JSON.
    Status { id: String },
    /// Write the HTML report.
    Report {
        id: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Stop sampling and escalate to a full hand count.
    Escalate { id: String },
    /// List audits in the data directory.
    List,
}

fn load(args: &CvrArgs) -> Result<(Contest, Vec<VoteRecord>)> {
    let text = read_file(&args.cvr)?;
    Ok(match args.format {
        Format::Canonical => parse_canonical(&text)?,
        Format::RaireLegacy => parse_raire_legacy(&text, args.contest.as_deref())?,
    })
}

fn load_assertions(contest: &Contest, path: &Path) -> Result<AssertionSet> {
    Ok(AssertionSet::parse(&read_file(path)?, contest)?)
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn name(contest: &Contest, c: CandidateId) -> String {
    contest
        .name_of(c)
        .map_or_else(|| c.to_string(), |n| format!("{n} ({c})"))
}

fn parse_ranking(text: &str) -> Result<Vec<CandidateId>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map(CandidateId)
                .with_context(|| format!("bad candidate id {s:?}"))
        })
        .collect()
}

fn open(data_dir: &Path, id: &str) -> Result<Session> {
    let dir = data_dir.join(id);
    if !dir.join(irv_rla::audit::session::LOG_FILE).is_file() {
        bail!("no audit {id} under {}", data_dir.display());
    }
    Ok(Session::open(&dir)?)
}

fn print_status(session: &Session) -> Result<()> {
    let audit = session.audit();
    println!("audit {} ({})", session.id(), audit.status());
    for a in audit.snapshot()?.assertions {
        println!(
            "  {:>2} p = {:<12.6} {} {}",
            a.index,
            a.p_value,
            if a.confirmed { "confirmed" } else { "open     " },
            a.explanation
        );
    }
    let pending = audit.pending();
    if !pending.is_empty() {
        println!("pending ballots: {}", pending.join(" "));
    }
    Ok(())
}

fn run_audit(data_dir: &Path, action: AuditAction) -> Result<()> {
    match action {
        AuditAction::Init {
            cvr,
            assertions,
            risk_limit,
            mode,
            seed,
            population,
            error_rate,
            padding,
            draws,
        } => {
            let cvr_text = read_file(&cvr)?;
            let assertion_text = read_file(&assertions)?;
            let (contest, _) = parse_canonical(&cvr_text)?;
            let mut spec = AuditSpec::new(risk_limit, mode, seed, population.unwrap_or(contest.card_upper_bound));
            spec.error_rate = error_rate;
            if let Some(p) = padding {
                spec.risk = KaplanMarkov::with_padding(parse_ratio(&p)?)?;
            }
            let session = Session::create(data_dir, spec, &cvr_text, &assertion_text, draws)?;
            println!("{}", session.id());
            print_status(&session)
        }
        AuditAction::Draw { id, count } => {
            let mut session = open(data_dir, &id)?;
            let count = match count {
                Some(c) => c,
                None => match session.audit().next_round()?.draws() {
                    Some(n) => n,
                    None => bail!("no attainable sample size; pass --count"),
                },
            };
            for d in session.draw(count)? {
                println!("{:>6} {}", d.index, d.ballot_id);
            }
            Ok(())
        }
        AuditAction::Enter {
            id,
            file,
            ballot,
            ranking,
            not_found,
            second,
        } => {
            let mut session = open(data_dir, &id)?;
            let records: Vec<MvrRecord> = match (file, ballot) {
                (Some(f), _) => serde_json::from_str(&read_file(&f)?).context("reading MVR records")?,
                (None, Some(ballot_id)) => {
                    let reading = if not_found {
                        Reading::NotFound
                    } else {
                        Reading::ranking(parse_ranking(ranking.as_deref().unwrap_or(""))?)
                    };
                    vec![MvrRecord { ballot_id, reading }]
                }
                (None, None) => bail!("give --file or --ballot"),
            };
            if second {
                for r in records {
                    let id = r.ballot_id.clone();
                    let ok = session.second_entry(r)?;
                    println!(
                        "{id}: {}",
                        if ok {
                            "matches first entry"
                        } else {
                            "DIFFERS from first entry"
                        }
                    );
                }
            } else {
                session.enter(records)?;
            }
            print_status(&session)
        }
        AuditAction::Status { id } => {
            let session = open(data_dir, &id)?;
            let view = serde_json::json!({
                "schema": irv_rla_service::SCHEMA,
                "id": session.id(),
                "log_head": session.log_head(),
                "snapshot": session.audit().snapshot()?,
            });
            println!("{}", serde_json::to_string_pretty(&view)?);
            Ok(())
        }
        AuditAction::Report { id, output } => {
            let session = open(data_dir, &id)?;
            let html = report::render(session.id(), session.log_head(), session.audit())?;
            emit(&html, output.as_deref())
        }
        AuditAction::Escalate { id } => {
            let mut session = open(data_dir, &id)?;
            session.escalate()?;
            print_status(&session)
        }
        AuditAction::List => {
            for id in Session::list(data_dir)? {
                println!("{id}");
            }
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Tabulate { cvr, strict_ties } => {
            let (contest, records) = load(&cvr)?;
            let policy = if strict_ties {
                TiePolicy::ErrorOnTie
            } else {
                TiePolicy::LowestIdEliminated
            };
            let result = tabulate(&contest, &records, policy)?;
            for (round, tally) in result.round_tallies.iter().enumerate() {
                let counts: Vec<String> = tally.iter().map(|(c, n)| format!("{c}:{n}")).collect();
                println!("round {}: {}", round + 1, counts.join(" "));
            }
            let order: Vec<String> = result.order.iter().map(|&c| name(&contest, c)).collect();
            println!("eliminated: {}", order.join(", "));
            println!("winner: {}", name(&contest, result.winner));
            if !result.tie_rounds.is_empty() {
                eprintln!("warning: ties broken by lowest id in rounds {:?}", result.tie_rounds);
            }
            Ok(())
        }
        Command::Generate {
            cvr,
            risk_limit,
            mode,
            measure,
            error_rate,
            population,
            winner,
            output,
        } => {
            let (mut contest, records) = load(&cvr)?;
            if let Some(w) = winner {
                contest.reported_winner = Some(CandidateId(w));
            }
            if contest.reported_winner.is_none() {
                let w = tabulate(&contest, &records, TiePolicy::default())?.winner;
                eprintln!("no reported winner given; certifying the tabulated winner {w}");
                contest.reported_winner = Some(w);
            }
            let mut config = GenerationConfig::new(mode, risk_limit);
            config.error_rate = error_rate;
            config.population = population;
            config.measure = match measure {
                Measure::SampleSize => DifficultyMeasure::SampleSize,
                Measure::InverseMargin => DifficultyMeasure::InverseMargin,
            };
            let g = generate_assertions(&contest, &records, &config)?;
            eprintln!(
                "{} assertions, difficulty {:.1}, {} nodes searched, {} trimmed",
                g.set.len(),
                g.difficulty,
                g.nodes,
                g.trimmed
            );
            for line in g.set.explanations() {
                eprintln!("  {line}");
            }
            emit(&g.set.to_file_string(), output.as_deref())
        }
        Command::Verify {
            cvr,
            assertions,
            max_candidates,
        } => {
            let (contest, _) = load(&cvr)?;
            let set = load_assertions(&contest, &assertions)?;
            match verify_assertion_set(&contest, &set, VerifyOptions { max_candidates })? {
                Verdict::Certified => {
                    println!("certified: every other winner is ruled out");
                    Ok(())
                }
                Verdict::Failure(orders) => {
                    for o in &orders {
                        let o: Vec<String> = o.iter().map(|c| c.to_string()).collect();
                        println!("unpruned: {}", o.join(" "));
                    }
                    bail!("{} elimination orders are not ruled out", orders.len())
                }
            }
        }
        Command::Trees { cvr, assertions, dot } => {
            let (contest, _) = load(&cvr)?;
            let set = load_assertions(&contest, &assertions)?;
            let doc = export_trees(&contest, &set, &[], VerifyOptions::default())?;
            print!("{}", if dot { doc.to_dot() } else { doc.to_text() });
            Ok(())
        }
        Command::Convert {
            input,
            contest,
            winner,
            output,
        } => {
            let (mut c, records) = parse_raire_legacy(&read_file(&input)?, contest.as_deref())?;
            if let Some(w) = winner {
                c.reported_winner = Some(CandidateId(w));
            }
            emit(&to_canonical_string(&c, &records)?, output.as_deref())
        }
        Command::Audit { data_dir, action } => run_audit(&data_dir, action),
        Command::Serve { bind, data_dir } => {
            std::fs::create_dir_all(&data_dir).with_context(|| format!("creating {}", data_dir.display()))?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&bind).await?;
                log::info!("listening on {bind}, data in {}", data_dir.display());
                axum::serve(listener, router(AppState::new(data_dir))).await?;
                Ok(())
            })
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
