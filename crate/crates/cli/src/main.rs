//! `rmbench`: specify tasks as reward machines, attach them to gridworlds,
//! train tabular learners, and compare against exact solutions.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rmbench_core::algos::AlgoKind;
use rmbench_core::dsl::{parse_rm, serialize_rm};
use rmbench_core::envs::{craft_tasks, office_tasks, EnvId, GridEnv, Legend};
use rmbench_core::experiment::{
    first_reach, run_experiment, RunConfig, TaskSelection,
};
use rmbench_core::mdprm::Mdprm;
use rmbench_core::oracle::{optimal_avg_reward, shortest_accepting_tour};
use rmbench_core::rm::RmStateId;
use rmbench_core::shaping::{rm_value_iteration, shaped};

#[derive(Parser)]
#[command(name = "rmbench", version, about = "Reward-machine benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train learners and emit percentile learning curves.
    Run(RunArgs),
    /// Parse and validate a .rm machine file.
    Validate {
        /// Machine file to check.
        file: PathBuf,
    },
    /// Print machine-state values, potentials, and the shaped edge table.
    Shape {
        /// Machine file to shape.
        file: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Print the exact per-task optimum (tour length, average reward per
    /// step) computed by value iteration.
    Oracle(OracleArgs),
    /// List the built-in tasks.
    Tasks {
        /// List the task library.
        #[arg(long, default_value_t = true)]
        list: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_parser = parse_env)]
    env: EnvId,
    /// Map file; defaults to the built-in office map or generated craft maps.
    #[arg(long)]
    map: Option<PathBuf>,
    /// `all` or a comma-separated list of 1-based task numbers.
    #[arg(long, default_value = "all")]
    tasks: String,
    #[arg(long, value_parser = parse_algo)]
    algo: AlgoKind,
    /// Train on potential-shaped machines.
    #[arg(long)]
    rs: bool,
    #[arg(long, default_value_t = 30)]
    trials: usize,
    #[arg(long, default_value_t = 200_000)]
    steps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    q_init: f64,
    #[arg(long, default_value_t = 1.0)]
    rplus: f64,
    #[arg(long, default_value_t = -1.0)]
    rminus: f64,
    /// Keep options that stay in the same machine state.
    #[arg(long)]
    no_prune_self_loops: bool,
    /// Keep options that enter failure terminals.
    #[arg(long)]
    no_prune_bad: bool,
    #[arg(long, default_value_t = 1000)]
    window: usize,
    #[arg(long, default_value_t = 100)]
    eval_every: usize,
    #[arg(long, default_value_t = 1000)]
    max_episode_steps: usize,
    #[arg(long, default_value_t = 2000)]
    greedy_every: usize,
    /// Number of generated craft maps; trials cycle over them.
    #[arg(long, default_value_t = 10)]
    craft_maps: usize,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a gnuplot script next to the CSV.
    #[arg(long)]
    gnuplot_stub: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, value_parser = parse_env)]
    env: EnvId,
    /// 1-based task number; all tasks when omitted.
    #[arg(long)]
    task: Option<usize>,
    #[arg(long)]
    map: Option<PathBuf>,
    /// Craft map seed used when no map file is given.
    #[arg(long, default_value_t = 0)]
    map_seed: u64,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long, default_value_t = 10_000)]
    cap: usize,
}

fn parse_env(s: &str) -> Result<EnvId, String> {
    match s {
        "office" => Ok(EnvId::Office),
        "craft" => Ok(EnvId::Craft),
        other => Err(format!("unknown env `{other}` (office|craft)")),
    }
}

fn parse_algo(s: &str) -> Result<AlgoKind, String> {
    s.parse()
}

fn parse_tasks(s: &str) -> Result<TaskSelection> {
    if s == "all" {
        return Ok(TaskSelection::All);
    }
    let numbers = s
        .split(',')
        .map(|part| part.trim().parse::<usize>().map_err(|_| anyhow!("bad task list `{s}`")))
        .collect::<Result<Vec<_>>>()?;
    Ok(TaskSelection::Subset(numbers))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Validate { file } => cmd_validate(&file),
        Command::Shape { file, gamma, tol } => cmd_shape(&file, gamma, tol),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Tasks { .. } => cmd_tasks(),
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut cfg = RunConfig::new(args.env, args.algo);
    cfg.map_path = args.map;
    cfg.tasks = parse_tasks(&args.tasks)?;
    cfg.rs = args.rs;
    cfg.trials = args.trials;
    cfg.total_steps = args.steps;
    cfg.seed = args.seed;
    cfg.eval_every = args.eval_every;
    cfg.window = args.window;
    cfg.max_episode_steps = args.max_episode_steps;
    cfg.greedy_every = args.greedy_every;
    cfg.craft_maps = args.craft_maps;
    cfg.learner.gamma = args.gamma;
    cfg.learner.alpha = args.alpha;
    cfg.learner.epsilon = args.epsilon;
    cfg.learner.q0 = args.q_init;
    cfg.learner.rplus = args.rplus;
    cfg.learner.rminus = args.rminus;
    cfg.learner.prune_self_loops = !args.no_prune_self_loops;
    cfg.learner.prune_bad = !args.no_prune_bad;
    cfg.out = args.out.clone();

    let out = run_experiment(&cfg)?;
    let last_online = out.online.last().expect("at least one point");
    let last_greedy = out.greedy.last().expect("at least one point");
    println!(
        "{} on {} ({} trials, {} steps): final online median {:.4}, final greedy median {:.4}",
        cfg.algo, cfg.env, cfg.trials, cfg.total_steps, last_online.p50, last_greedy.p50
    );
    for threshold in [0.6, 0.9] {
        match first_reach(&out.greedy, threshold) {
            Some(step) => println!("greedy median reached {threshold} at step {step}"),
            None => println!("greedy median never reached {threshold}"),
        }
    }
    if let Some(out_path) = &cfg.out {
        println!("curve written to {}", out_path.display());
        if args.gnuplot_stub {
            let gp = out_path.with_extension("gp");
            let script = format!(
                "set datafile separator ','\n\
                 set xlabel 'training steps'\n\
                 set ylabel 'normalized avg reward per step'\n\
                 plot '{}' using 1:3 with lines title 'median', \\\n\
                 \t'' using 1:2 with lines dashtype 2 title 'p25', \\\n\
                 \t'' using 1:4 with lines dashtype 2 title 'p75'\n",
                out_path.display()
            );
            std::fs::write(&gp, script).with_context(|| format!("writing {}", gp.display()))?;
            println!("gnuplot stub written to {}", gp.display());
        }
    }
    Ok(())
}

fn cmd_validate(file: &PathBuf) -> Result<()> {
    let text =
        std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    match parse_rm(&text) {
        Ok(m) => {
            println!(
                "OK: {} propositions, {} interior states, {} terminals, {} edges",
                m.props().len(),
                m.n_interior(),
                m.n_terminal(),
                m.edges().len()
            );
            Ok(())
        }
        Err(e) => {
            eprintln!("{}: {e}", file.display());
            std::process::exit(1);
        }
    }
}

fn cmd_shape(file: &PathBuf, gamma: f64, tol: f64) -> Result<()> {
    let text =
        std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let m = parse_rm(&text).map_err(|e| anyhow!("{}: {e}", file.display()))?;
    let pot = rm_value_iteration(&m, gamma, tol)?;
    let shaped_m = shaped(&m, gamma, tol)?;

    println!("state v* phi");
    for i in 0..m.n_interior() {
        let u = RmStateId::Interior(i as u8);
        println!("{} {:.6} {:.6}", m.interior_name(i), pot.v_star(u), pot.potential(u));
    }
    for i in 0..m.n_terminal() {
        println!("{} {:.6} {:.6}", m.terminal_info(i).name, 0.0, 0.0);
    }
    println!();
    println!("source target guard reward shaped");
    for (edge, shaped_edge) in m.edges().iter().zip(shaped_m.edges()) {
        let guard = match &edge.guard {
            rmbench_core::rm::Guard::When(f) => {
                format!("\"{}\"", rmbench_core::dsl::format_formula(f, m.props()))
            }
            rmbench_core::rm::Guard::Otherwise => "otherwise".to_string(),
        };
        println!(
            "{} {} {} {:.6} {:.6}",
            m.state_name(edge.source),
            m.state_name(edge.target),
            guard,
            edge.reward,
            shaped_edge.reward
        );
    }
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    let env = match (&args.map, args.env) {
        (Some(path), env_id) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let map = rmbench_core::envs::load_map(&text, &Legend::for_env(env_id))?;
            GridEnv::new(std::sync::Arc::new(map))
        }
        (None, EnvId::Office) => GridEnv::office_default(),
        (None, EnvId::Craft) => {
            let map = rmbench_core::envs::generate_craft_map(
                args.map_seed,
                &rmbench_core::envs::CraftGenParams::default(),
            )?;
            GridEnv::new(std::sync::Arc::new(map))
        }
    };
    let library = match args.env {
        EnvId::Office => office_tasks(),
        EnvId::Craft => craft_tasks(),
    };
    let selected: Vec<_> = match args.task {
        Some(n) => {
            let idx = n.checked_sub(1).ok_or_else(|| anyhow!("tasks are numbered from 1"))?;
            let task = library.get(idx).ok_or_else(|| anyhow!("task {n} does not exist"))?;
            vec![task.clone()]
        }
        None => library,
    };
    let tasks: Vec<Mdprm> = selected
        .iter()
        .map(|t| Mdprm::from_task(t, env.clone(), args.gamma))
        .collect::<Result<_, _>>()?;
    let report = optimal_avg_reward(&tasks, args.cap)?;
    println!("task tour_length optimal_avg_reward_per_step");
    for (i, (spec, opt)) in selected.iter().zip(&report.per_task).enumerate() {
        debug_assert_eq!(shortest_accepting_tour(&tasks[i]), Some(opt.length));
        println!(
            "{}:{} {} {:.6}",
            spec.number, spec.name, opt.length, opt.avg_reward_per_step
        );
    }
    println!("aggregate {:.6}", report.aggregate);
    Ok(())
}

fn cmd_tasks() -> Result<()> {
    println!("office:");
    for t in office_tasks() {
        println!(
            "  {} {} ({} states, {} edges)",
            t.number,
            t.name,
            t.rm.n_interior() + t.rm.n_terminal(),
            t.rm.edges().len()
        );
    }
    println!("craft:");
    for t in craft_tasks() {
        println!(
            "  {} {} ({} states, {} edges)",
            t.number,
            t.name,
            t.rm.n_interior() + t.rm.n_terminal(),
            t.rm.edges().len()
        );
    }
    println!();
    println!("canonical form of office task 1:");
    print!("{}", serialize_rm(&office_tasks()[0].rm));
    Ok(())
}
