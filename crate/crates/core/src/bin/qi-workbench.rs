use std::error::Error;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use qi_workbench::corpus::Corpus;
use qi_workbench::domain::{BandMap, Metric};
use qi_workbench::eval::{
    agreement, agreement_csv, ai_rater_pairs, calibrate, calibration_csv, calibration_items, calibration_svg, check_edges,
    default_edges, interrater_pairs, AgreementKind, AgreementMode, CiMethod,
};
use qi_workbench::gateway::{gateway_from_spec, RetryPolicy};
use qi_workbench::ledger::{los_fixture, readmission_fixture, Ledger};
use qi_workbench::pipeline::{load_results, run_cohort, CohortFilter, PipelineConfig, QuoteMode};
use qi_workbench::service::{read_annotations, serve, AppState, Store, Tokens};
use qi_workbench::synth::{generate, SynthConfig};
use qi_workbench::themes::{assign, collect_factors, populate, propose_themes, tally, tally_csv, tally_svg, LeanLookup, LlmStrategy, Strategy};

type Res = Result<(), Box<dyn Error>>;

#[derive(Parser)]
#[command(version, about = "QI factor-discovery workbench")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum FilterArg {
    /// The metric's default cohort criteria.
    Default,
    /// Every bundle of the metric.
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fixture {
    Los,
    Readm,
}

#[derive(Clone, Copy, ValueEnum)]
enum LedgerView {
    Heatmap,
    Svg,
    Sheet,
    Grid,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic corpus with ground-truth sidecars.
    Synth {
        #[arg(long)]
        metric: Metric,
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the three-stage pipeline over a corpus.
    Run {
        #[arg(long)]
        metric: Metric,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value_t = FilterArg::Default)]
        filter: FilterArg,
        /// `mock` or `live:MODEL_ID`.
        #[arg(long, default_value = "mock")]
        backend: String,
        #[arg(long, default_value_t = 4)]
        concurrency: usize,
        /// Fail encounters with any quote that is not verbatim.
        #[arg(long)]
        strict_quotes: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// AI-rater and inter-rater agreement.
    Evaluate {
        /// Directory written by `run`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        /// Patient-clustered bootstrap instead of Wilson intervals.
        #[arg(long)]
        bootstrap: bool,
    },
    /// Mean Likert per confidence bin.
    Calibrate {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        metric: Metric,
        /// Comma-separated bin edges; defaults per metric.
        #[arg(long, value_delimiter = ',')]
        edges: Option<Vec<u8>>,
        #[arg(long)]
        bootstrap: bool,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Cluster factor reasons into themes and tally them.
    Themes {
        #[arg(long)]
        run: PathBuf,
        /// `exact` or `live:MODEL_ID`.
        #[arg(long, default_value = "exact")]
        strategy: String,
        #[arg(long, default_value_t = 15)]
        max_themes: usize,
        /// JSON object mapping theme name to Lean category.
        #[arg(long)]
        lean: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Inspect a spec ledger.
    Ledger {
        #[arg(long, conflicts_with = "fixture")]
        file: Option<PathBuf>,
        #[arg(long, value_enum)]
        fixture: Option<Fixture>,
        #[arg(long, value_enum, default_value_t = LedgerView::Heatmap)]
        view: LedgerView,
        /// Round for `--view sheet`; defaults to the latest.
        #[arg(long)]
        round: Option<u32>,
    },
    /// Serve the annotation API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        tokens: PathBuf,
    },
}

fn policy(concurrency: usize) -> RetryPolicy {
    RetryPolicy {
        max_concurrency: concurrency,
        ..RetryPolicy::default()
    }
}

fn write_or_print(text: &str, path: Option<&Path>) -> Res {
    match path {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Cmd) -> Res {
    match cmd {
        Cmd::Synth { metric, n, seed, out } => {
            let s = generate(&SynthConfig::new(metric, n, seed), &out)?;
            eprintln!("wrote {} encounters to {}", s.corpus.len(), out.display());
        }
        Cmd::Run {
            metric,
            corpus,
            filter,
            backend,
            concurrency,
            strict_quotes,
            out,
        } => {
            let corpus = Corpus::load_dir(&corpus)?;
            let (gateway, model) = gateway_from_spec(&backend)?;
            let mut config = PipelineConfig::new(metric, model);
            config.quote_mode = if strict_quotes { QuoteMode::Strict } else { QuoteMode::Flag };
            let filter = match filter {
                FilterArg::Default => CohortFilter::default_for(metric),
                FilterArg::All => CohortFilter {
                    metric: Some(metric),
                    ..CohortFilter::default()
                },
            };
            let result = run_cohort(&corpus, &filter, &config, &gateway, &policy(concurrency))?;
            result.write_dir(&out)?;
            println!("{}", serde_json::to_string(&result.summary)?);
        }
        Cmd::Evaluate {
            run,
            annotations,
            bootstrap,
        } => {
            let results = load_results(&run)?;
            let anns = read_annotations(&annotations)?;
            let ci = if bootstrap { CiMethod::bootstrap() } else { CiMethod::Analytic };
            let ai = ai_rater_pairs(&results, &anns, &BandMap::default())?;
            let ir = interrater_pairs(&anns);
            let mut reports = Vec::new();
            for (kind, pairs) in [(AgreementKind::AiRater, &ai), (AgreementKind::InterRater, &ir)] {
                if pairs.is_empty() {
                    eprintln!("no {kind:?} pairs");
                    continue;
                }
                for mode in [AgreementMode::Exact, AgreementMode::WithinOne] {
                    reports.push(agreement(pairs, mode, kind, ci)?);
                }
            }
            print!("{}", agreement_csv(&reports));
        }
        Cmd::Calibrate {
            run,
            annotations,
            metric,
            edges,
            bootstrap,
            svg,
        } => {
            let results = load_results(&run)?;
            let anns = read_annotations(&annotations)?;
            let edges = edges.unwrap_or_else(|| default_edges(metric));
            check_edges(&edges)?;
            let ci = if bootstrap { CiMethod::bootstrap() } else { CiMethod::Analytic };
            let bins = calibrate(&calibration_items(&results, &anns)?, &edges, ci)?;
            print!("{}", calibration_csv(&bins));
            if let Some(p) = svg {
                write_or_print(&calibration_svg(&bins, &format!("{metric} calibration")), Some(&p))?;
            }
        }
        Cmd::Themes {
            run,
            strategy,
            max_themes,
            lean,
            svg,
        } => {
            let results = load_results(&run)?;
            let factors = collect_factors(&results);
            let reasons: Vec<&str> = factors.iter().map(|(_, r)| r.as_str()).collect();
            let llm;
            let strategy = if strategy == "exact" {
                Strategy::Exact
            } else {
                llm = gateway_from_spec(&strategy)?;
                Strategy::Llm(LlmStrategy {
                    gateway: &llm.0,
                    model_id: llm.1.clone(),
                    policy: policy(1),
                    max_themes,
                })
            };
            let themes = propose_themes(&reasons, &strategy)?;
            let mut themes = populate(&themes, &assign(&factors, &themes, &strategy)?);
            if let Some(p) = lean {
                LeanLookup::load(&p)?.apply(&mut themes);
            }
            let tallies = tally(&themes);
            print!("{}", tally_csv(&tallies));
            if let Some(p) = svg {
                write_or_print(&tally_svg(&tallies, "Factor themes"), Some(&p))?;
            }
        }
        Cmd::Ledger {
            file,
            fixture,
            view,
            round,
        } => {
            let ledger = match (file, fixture) {
                (Some(p), _) => Ledger::load(&p)?,
                (None, Some(Fixture::Readm)) => readmission_fixture(),
                (None, _) => los_fixture(),
            };
            let text = match view {
                LedgerView::Heatmap => ledger.heatmap()?.to_csv(),
                LedgerView::Svg => ledger.heatmap()?.to_svg("Spec changes by round"),
                LedgerView::Sheet => ledger.spec_sheet(round.or(ledger.last_round()).ok_or("ledger has no rounds")?),
                LedgerView::Grid => serde_json::to_string_pretty(&ledger.grid())? + "\n",
            };
            write_or_print(&text, None)?;
        }
        Cmd::Serve { port, data, tokens } => {
            let (store, replay) = Store::open(&data)?;
            if replay.dropped_bytes > 0 {
                eprintln!("discarded {} bytes of a torn annotation record", replay.dropped_bytes);
            }
            eprintln!(
                "{} cases, {} annotation records; listening on port {port}",
                store.case_count(),
                replay.annotations.len()
            );
            let state = Arc::new(AppState {
                store,
                tokens: Tokens::load(&tokens)?,
            });
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(SocketAddr::from(([0, 0, 0, 0], port)), state))?;
        }
    }
    Ok(())
}
