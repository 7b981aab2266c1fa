//! Thin command-line front end; all logic lives in the library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use redbench::cli::{
    self, RunConfig, DEFAULT_BUSIEST_WEEK_K, DEFAULT_TEMPLATE_RULE, DEFAULT_USERS_PER_BUCKET,
};
use redbench::synth_trace::SynthSpec;

#[derive(Parser)]
#[command(
    name = "redbench",
    version,
    about = "Map query-log traces onto a support benchmark's query pool, preserving repetition, join complexity, and scanset structure"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan and validate a SQL query pool; export its index
    Index {
        /// Pool root directory (one statement per .sql file)
        #[arg(long)]
        pool: PathBuf,
        /// Regex over file stems; capture group 1 is the template id
        #[arg(long, default_value = DEFAULT_TEMPLATE_RULE)]
        template_rule: String,
        /// Drop templates with inconsistent join counts instead of failing
        #[arg(long)]
        quarantine: bool,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply the elimination rules and busiest-week reduction to a trace
    Prefilter {
        /// Trace CSV
        #[arg(long)]
        trace: PathBuf,
        /// Keep at most this many queries of each user's busiest week
        #[arg(long, default_value_t = DEFAULT_BUSIEST_WEEK_K)]
        busiest_week_k: usize,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic trace with an exact repetition rate
    Synth(SynthArgs),
    /// Run the whole pipeline: prefilter, sample users, map workloads, report
    Generate {
        /// Trace CSV
        #[arg(long)]
        trace: PathBuf,
        /// Pool root directory
        #[arg(long)]
        pool: PathBuf,
        /// Regex over file stems; capture group 1 is the template id
        #[arg(long, default_value = DEFAULT_TEMPLATE_RULE)]
        template_rule: String,
        /// Keep at most this many queries of each user's busiest week
        #[arg(long, default_value_t = DEFAULT_BUSIEST_WEEK_K)]
        busiest_week_k: usize,
        /// Representatives per repetition bucket
        #[arg(long, default_value_t = DEFAULT_USERS_PER_BUCKET)]
        users_per_bucket: usize,
        /// Global seed; every random choice derives from it
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Drop templates with inconsistent join counts instead of failing
        #[arg(long)]
        quarantine: bool,
        /// Also write concatenated .sql playback files
        #[arg(long)]
        emit_sql: bool,
        /// Also write per-workload join-complexity series CSVs
        #[arg(long)]
        emit_plot_data: bool,
    },
    /// Recompute fidelity reports from generate's intermediate files
    Report {
        /// The trace the workloads were generated from
        #[arg(long)]
        trace: PathBuf,
        /// Pool index CSV (from `index` or a `generate` run)
        #[arg(long)]
        index: PathBuf,
        /// Directory of workload manifests
        #[arg(long)]
        workloads: PathBuf,
        /// Busiest-week cap used when the workloads were generated
        #[arg(long, default_value_t = DEFAULT_BUSIEST_WEEK_K)]
        busiest_week_k: usize,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SynthArgs {
    /// Output trace CSV path
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    users: usize,
    #[arg(long, default_value_t = 40)]
    queries_per_user: usize,
    /// Target repetition rate (rate * queries_per_user must be integral)
    #[arg(long, default_value_t = 0.5)]
    target_rate: f64,
    #[arg(long, default_value_t = 1)]
    join_min: u32,
    #[arg(long, default_value_t = 4)]
    join_max: u32,
    #[arg(long, default_value_t = 40)]
    table_universe: usize,
    /// Extra cached-SELECT noise rows, as a fraction of queries_per_user
    #[arg(long, default_value_t = 0.0)]
    cached_fraction: f64,
    /// Extra non-SELECT noise rows, as a fraction of queries_per_user
    #[arg(long, default_value_t = 0.0)]
    non_select_fraction: f64,
    #[arg(long, default_value_t = 1)]
    week_span: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Prefix for generated user ids
    #[arg(long, default_value = "u")]
    user_prefix: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("REDBENCH_LOG", "warn"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> redbench::Result<()> {
    match cli.command {
        Command::Index {
            pool,
            template_rule,
            quarantine,
            out,
        } => {
            let index = cli::cmd_index(&pool, &template_rule, quarantine, &out)?;
            println!(
                "indexed {} template(s), {} instance(s); join range [{}, {}]",
                index.template_count(),
                index.instance_count(),
                index.pool_min_joins(),
                index.pool_max_joins()
            );
        }
        Command::Prefilter {
            trace,
            busiest_week_k,
            out,
        } => {
            let stats = cli::cmd_prefilter(&trace, busiest_week_k, &out)?;
            println!(
                "kept {} record(s) across {} user(s) of {} input record(s)",
                stats.surviving_records, stats.surviving_users, stats.input_records
            );
        }
        Command::Synth(args) => {
            let spec = SynthSpec {
                users: args.users,
                queries_per_user: args.queries_per_user,
                target_rate: args.target_rate,
                join_range: (args.join_min, args.join_max),
                table_universe: args.table_universe,
                cached_fraction: args.cached_fraction,
                non_select_fraction: args.non_select_fraction,
                week_span: args.week_span,
                seed: args.seed,
                user_prefix: args.user_prefix,
            };
            let rows = cli::cmd_synth(&spec, &args.out)?;
            println!("wrote {rows} row(s) to {}", args.out.display());
        }
        Command::Generate {
            trace,
            pool,
            template_rule,
            busiest_week_k,
            users_per_bucket,
            seed,
            out,
            quarantine,
            emit_sql,
            emit_plot_data,
        } => {
            let config = RunConfig {
                trace,
                pool,
                template_rule,
                busiest_week_k,
                users_per_bucket,
                seed,
                out,
                quarantine,
                emit_sql,
                emit_plot_data,
            };
            let outcome = cli::cmd_generate(&config)?;
            println!(
                "generated {} workload(s); overall fallback fraction {:.4}",
                outcome.workloads, outcome.summary.overall_fallback_fraction
            );
            for w in &outcome.warnings {
                println!("warning: {w}");
            }
        }
        Command::Report {
            trace,
            index,
            workloads,
            busiest_week_k,
            out,
        } => {
            let summary = cli::cmd_report(&trace, &index, &workloads, busiest_week_k, &out)?;
            println!(
                "reported {} workload(s); overall fallback fraction {:.4}",
                summary.workload_count, summary.overall_fallback_fraction
            );
        }
    }
    Ok(())
}
