use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use urbanrl_core::agents::{GaussianPolicy, QTable};
use urbanrl_core::analysis::{
    mean, monthly_profile_csv, reward_diff, transfer_score, transfer_scores_csv, weight_intersection,
    weight_sweep, weight_sweep_csv, RewardDiff,
};
use urbanrl_core::data::{city_preset, generate_synthetic, load_forcing_csv, presets_report};
use urbanrl_core::env::{default_controller, normalize_city, KELVIN_OFFSET};
use urbanrl_core::policy_io::{load_mlp, ArtifactController};
use urbanrl_core::train::{evaluate, EvalReport, TrainedAgent};
use urbanrl_core::{
    Action, AgentKind, Controller, DiscreteAction, DqnAgent, FixedController, ForcingSeries, HvacEnv,
    HvacSetpoints, Intersection, KeyValues, PolicyArtifact, RunConfig, SacAgent, Settings,
    SyntheticClimateSpec, TermTrace, TransferMatrix,
};

use crate::{Cli, Command, ForcingArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(urbanrl_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_config() => 1,
            CliError::Core(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => e.fmt(f),
        }
    }
}

impl From<urbanrl_core::Error> for CliError {
    fn from(e: urbanrl_core::Error) -> Self {
        CliError::Core(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(urbanrl_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn load_settings(cli: &Cli, w: Option<f64>) -> Result<Settings> {
    let mut kv = match &cli.config {
        Some(path) => KeyValues::load(path)?,
        None => KeyValues::default(),
    };
    if !cli.overrides.is_empty() {
        kv = kv.merged(KeyValues::from_overrides(&cli.overrides)?);
    }
    let mut settings = Settings::from_key_values(kv)?;
    if let Some(w) = w {
        settings.episode.reward = settings.episode.reward.with_weight(w);
        settings.episode.validate()?;
    }
    Ok(settings)
}

struct Forcings {
    train: Arc<ForcingSeries>,
    eval: Arc<ForcingSeries>,
    city: Option<String>,
}

impl ForcingArgs {
    fn city(&self) -> Option<String> {
        self.city.as_deref().map(normalize_city)
    }

    fn resolve(&self, steps: usize) -> Result<Forcings> {
        let city = self.city();
        let preset = city.as_deref().map(city_preset).transpose()?;
        let train = match (&self.forcing, &preset) {
            (Some(path), _) => load_forcing_csv(path)?,
            (None, Some(p)) => p.train_forcing(steps)?,
            (None, None) => return Err(usage("give --city or --forcing")),
        };
        let train = Arc::new(train);
        let eval = match (&self.eval_forcing, &preset) {
            (Some(path), _) => Arc::new(load_forcing_csv(path)?),
            (None, Some(p)) if self.forcing.is_none() => Arc::new(p.eval_forcing(steps)?),
            _ => Arc::clone(&train),
        };
        Ok(Forcings { train, eval, city })
    }

    /// Only the evaluation series is needed.
    fn resolve_eval(&self, steps: usize) -> Result<Forcings> {
        if let (None, Some(path)) = (&self.forcing, &self.eval_forcing) {
            let eval = Arc::new(load_forcing_csv(path)?);
            return Ok(Forcings {
                train: Arc::clone(&eval),
                eval,
                city: self.city(),
            });
        }
        self.resolve(steps)
    }
}

#[allow(clippy::large_enum_variant)]
enum Policy {
    Default,
    Agent(TrainedAgent),
    Artifact(PolicyArtifact),
}

impl Policy {
    fn load(spec: &str, settings: &Settings) -> Result<Self> {
        if spec == "default" {
            return Ok(Policy::Default);
        }
        let path = Path::new(spec);
        if path.is_dir() {
            let kind = if path.join("policy.mlp").exists() {
                AgentKind::Sac
            } else if path.join("qnet.mlp").exists() {
                AgentKind::Dqn
            } else if path.join("qtable.txt").exists() {
                AgentKind::QLearning
            } else {
                return Err(usage(format!(
                    "{}: no policy.mlp, qnet.mlp or qtable.txt in checkpoint directory",
                    path.display()
                )));
            };
            return Ok(Policy::Agent(TrainedAgent::load_checkpoint(kind, path, settings)?));
        }
        match path.extension().and_then(|e| e.to_str()) {
            Some("sacpolicy") => Ok(Policy::Artifact(PolicyArtifact::load(path)?)),
            Some("mlp") => {
                let net = load_mlp(path)?;
                if net.out_dim() == DiscreteAction::COUNT {
                    Ok(Policy::Agent(TrainedAgent::Dqn(DqnAgent::with_network(settings.dqn, net, 0)?)))
                } else {
                    let policy = GaussianPolicy::new(net, settings.sac.log_std_min, settings.sac.log_std_max)?;
                    let mut agent = SacAgent::new(settings.sac, 0)?;
                    *agent.policy_mut() = policy;
                    Ok(Policy::Agent(TrainedAgent::Sac(agent)))
                }
            }
            _ => {
                let table = QTable::load(path, DiscreteAction::COUNT)?;
                let agent = urbanrl_core::QLearningAgent::from_table(table, settings.qlearning, 0);
                Ok(Policy::Agent(TrainedAgent::QLearning(agent)))
            }
        }
    }

    fn controller(self, city: Option<&str>, deterministic: bool, seed: u64) -> Result<Box<dyn Controller>> {
        Ok(match self {
            Policy::Default => {
                let city = city.ok_or_else(|| usage("`--policy default` needs --city"))?;
                Box::new(FixedController::new(default_controller(city)?, "default"))
            }
            Policy::Agent(TrainedAgent::Sac(mut a)) => {
                a.deterministic_eval = deterministic;
                a.reseed(seed);
                Box::new(TrainedAgent::Sac(a))
            }
            Policy::Agent(a) => Box::new(a),
            Policy::Artifact(mut art) => {
                art.deterministic = deterministic;
                Box::new(ArtifactController::new(art, ChaCha8Rng::seed_from_u64(seed)))
            }
        })
    }
}

fn baseline_report(city: &str, settings: &Settings, forcing: Arc<ForcingSeries>) -> Result<EvalReport> {
    let mut base = FixedController::new(default_controller(city)?, "default");
    Ok(evaluate(&mut base, &settings.building, forcing, &settings.episode, 1)?)
}

/// Episode-averaged difference against a deterministic baseline episode.
fn averaged_diff(report: &EvalReport, base: &TermTrace, settings: &Settings) -> Result<RewardDiff> {
    let diffs = report
        .traces
        .iter()
        .map(|t| reward_diff(t, base, &settings.episode.reward))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let r: Vec<f64> = diffs.iter().map(|d| d.r_diff).collect();
    let monthly = (0..diffs[0].monthly.len())
        .map(|m| mean(&diffs.iter().map(|d| d.monthly[m]).collect::<Vec<_>>()))
        .collect();
    Ok(RewardDiff {
        r_diff: mean(&r),
        monthly,
    })
}

pub fn run(cli: Cli) -> Result<()> {
    let out = cli.out.clone();
    match &cli.command {
        Command::Train {
            agent,
            forcing,
            episodes,
            seed,
            w,
        } => {
            let kind: AgentKind = agent.parse()?;
            let mut settings = load_settings(&cli, *w)?;
            if let Some(n) = episodes {
                settings.episodes = *n;
            }
            let f = forcing.resolve(settings.episode.episode_steps)?;
            let config = RunConfig {
                agent: kind,
                settings,
                train_forcing: f.train,
                eval_forcing: f.eval,
                seed: *seed,
            };
            eprintln!(
                "training {kind} for {} episodes ({} steps), seed {seed}",
                config.settings.episodes,
                config.total_steps()
            );
            let run = urbanrl_core::train_run(&config, &mut |rec| {
                eprintln!(
                    "episode {:>3}  mean_reward {:>10.5}  return {:>12.3}",
                    rec.episode, rec.mean_reward, rec.ret
                );
            })?;
            for p in run.write_outputs(&out)? {
                println!("wrote {}", p.display());
            }
            if let Some(e) = &run.log.eval {
                println!(
                    "eval mean_reward {} std {} over {} episodes",
                    e.mean_reward, e.std_reward, e.episodes
                );
            }
            println!("wall_seconds {:.1}", run.log.wall_seconds);
        }
        Command::Evaluate {
            policy,
            forcing,
            episodes,
            seed,
            w,
            deterministic,
        } => {
            let settings = load_settings(&cli, *w)?;
            let f = forcing.resolve_eval(settings.episode.episode_steps)?;
            let mut ctrl =
                Policy::load(policy, &settings)?.controller(f.city.as_deref(), *deterministic, *seed)?;
            let report = evaluate(
                ctrl.as_mut(),
                &settings.building,
                Arc::clone(&f.eval),
                &settings.episode,
                *episodes,
            )?;
            write_file(&out.join("eval_report.csv"), &report.to_csv())?;
            println!("{} mean_reward {} std {}", ctrl.name(), report.mean_reward, report.std_reward);
            if let Some(city) = &f.city {
                let base = baseline_report(city, &settings, f.eval)?;
                let diff = averaged_diff(&report, &base.traces[0], &settings)?;
                write_file(&out.join("monthly_profile.csv"), &monthly_profile_csv(&diff))?;
                println!("r_diff vs {city} default {}", diff.r_diff);
            }
        }
        Command::Sweep {
            policy,
            baseline_city,
            forcing,
            w,
            points,
        } => {
            let settings = load_settings(&cli, *w)?;
            let mut forcing = forcing.clone();
            if forcing.city.is_none() {
                forcing.city = baseline_city.clone();
            }
            let base_city = baseline_city
                .as_deref()
                .map(normalize_city)
                .or_else(|| forcing.city())
                .ok_or_else(|| usage("give --baseline-city or --city"))?;
            let f = forcing.resolve_eval(settings.episode.episode_steps)?;
            let mut ctrl = Policy::load(policy, &settings)?.controller(Some(&base_city), true, 0)?;
            let rl = evaluate(
                ctrl.as_mut(),
                &settings.building,
                Arc::clone(&f.eval),
                &settings.episode,
                1,
            )?;
            let base = baseline_report(&base_city, &settings, f.eval)?;
            let cfg = &settings.episode.reward;
            let sweep = weight_sweep(&rl.traces[0], &base.traces[0], cfg, *points)?;
            write_file(&out.join("weight_sweep.csv"), &weight_sweep_csv(&sweep))?;
            match weight_intersection(&rl.traces[0], &base.traces[0], cfg)? {
                Intersection::At(w) => println!("w* {w}"),
                Intersection::None => println!("w* none"),
                Intersection::Everywhere => println!("w* everywhere"),
            }
        }
        Command::Transfer { policies, episodes, w } => {
            let settings = load_settings(&cli, *w)?;
            let mut pairs = Vec::new();
            for p in policies {
                let (city, path) = p
                    .split_once('=')
                    .ok_or_else(|| usage(format!("expected CITY=PATH, got `{p}`")))?;
                let city = normalize_city(city);
                city_preset(&city)?;
                if pairs.iter().any(|(c, _): &(String, String)| *c == city) {
                    return Err(usage(format!("city `{city}` given twice")));
                }
                pairs.push((city, path.to_string()));
            }
            if pairs.len() < 2 {
                return Err(usage("transfer needs policies from at least two cities"));
            }
            let steps = settings.episode.episode_steps;
            let cities: Vec<String> = pairs.iter().map(|(c, _)| c.clone()).collect();
            let mut forcings = Vec::new();
            for c in &cities {
                forcings.push(Arc::new(city_preset(c)?.eval_forcing(steps)?));
            }
            let mut rewards = Vec::new();
            for (model, path) in &pairs {
                let mut row = Vec::new();
                for (c, forcing) in cities.iter().zip(&forcings) {
                    let mut ctrl = Policy::load(path, &settings)?.controller(Some(c), true, 0)?;
                    let r = evaluate(ctrl.as_mut(), &settings.building, Arc::clone(forcing), &settings.episode, *episodes)?;
                    eprintln!("{model} model in {c}: {}", r.mean_reward);
                    row.push(r.mean_reward);
                }
                rewards.push(row);
            }
            let mut baseline = Vec::new();
            for (c, forcing) in cities.iter().zip(&forcings) {
                baseline.push(baseline_report(c, &settings, Arc::clone(forcing))?.mean_reward);
            }
            let matrix = TransferMatrix::new(cities.clone(), cities, rewards, Some(baseline))?;
            let scores = transfer_score(&matrix)?;
            write_file(&out.join("transfer_matrix.csv"), &matrix.to_csv())?;
            write_file(&out.join("transfer_scores.csv"), &transfer_scores_csv(&scores))?;
            for s in &scores {
                println!("{} {}", s.model, s.total);
            }
        }
        Command::Export { policy, name } => {
            let settings = load_settings(&cli, None)?;
            let spec = policy.to_string_lossy();
            let artifact = match Policy::load(&spec, &settings)? {
                Policy::Agent(a) => a
                    .artifact()
                    .ok_or_else(|| usage(format!("{spec}: only SAC policies can be exported")))?,
                Policy::Artifact(a) => a,
                Policy::Default => return Err(usage("the default controller has no network to export")),
            };
            let path = out.join(name);
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            }
            artifact.save(&path)?;
            println!("wrote {}", path.display());
        }
        Command::Simulate {
            forcing,
            controller,
            steps,
            w,
        } => {
            let mut settings = load_settings(&cli, *w)?;
            let f = forcing.resolve_eval(steps.unwrap_or(settings.episode.episode_steps))?;
            if let Some(n) = steps {
                settings.episode.episode_steps = *n;
            }
            let setpoints = parse_controller(controller, f.city.as_deref())?;
            let mut env = HvacEnv::new(settings.building.clone(), f.eval, settings.episode)?;
            let mut csv = String::from(
                "step,t_canopy_k,t_indoor_k,f_cool_wm2,f_heat_wm2,energy_term,comfort_term,reward\n",
            );
            let mut obs = env.reset();
            let mut rewards = Vec::new();
            loop {
                let step = env.cursor();
                let o = env.step(Action::Setpoints(setpoints))?;
                csv.push_str(&format!(
                    "{step},{},{},{},{},{},{},{}\n",
                    obs.t_canopy_k,
                    o.observation.t_indoor_k,
                    o.fluxes.f_cool_wm2,
                    o.fluxes.f_heat_wm2,
                    o.energy_term,
                    o.comfort_term,
                    o.reward
                ));
                rewards.push(o.reward);
                obs = o.observation;
                if o.done {
                    break;
                }
            }
            write_file(&out.join("trajectory.csv"), &csv)?;
            println!("mean_reward {}", mean(&rewards));
        }
        Command::GenForcing {
            city,
            steps,
            seed,
            mean_k,
            annual_k,
            diurnal_k,
            noise_k,
            lag_steps,
            name,
        } => {
            let city = city.as_deref().map(normalize_city);
            let mut spec = match &city {
                Some(c) => city_preset(c)?.climate,
                None => {
                    let missing = [
                        ("--mean-k", mean_k.is_none()),
                        ("--annual-k", annual_k.is_none()),
                        ("--diurnal-k", diurnal_k.is_none()),
                        ("--noise-k", noise_k.is_none()),
                    ];
                    if let Some((flag, _)) = missing.iter().find(|(_, m)| *m) {
                        return Err(usage(format!("without --city, {flag} is required")));
                    }
                    SyntheticClimateSpec {
                        mean_k: 0.0,
                        annual_amplitude_k: 0.0,
                        diurnal_amplitude_k: 0.0,
                        noise_std_k: 0.0,
                        inner_node_lag_steps: 0,
                        seed: 0,
                    }
                }
            };
            if let Some(v) = mean_k {
                spec.mean_k = *v;
            }
            if let Some(v) = annual_k {
                spec.annual_amplitude_k = *v;
            }
            if let Some(v) = diurnal_k {
                spec.diurnal_amplitude_k = *v;
            }
            if let Some(v) = noise_k {
                spec.noise_std_k = *v;
            }
            if let Some(v) = lag_steps {
                spec.inner_node_lag_steps = *v;
            }
            if let Some(v) = seed {
                spec.seed = *v;
            }
            let series = generate_synthetic(&spec, *steps)?;
            let file = name.clone().unwrap_or_else(|| {
                format!("{}_seed{}.csv", city.as_deref().unwrap_or("synthetic"), spec.seed)
            });
            write_file(&out.join(PathBuf::from(file)), &series.to_csv())?;
        }
        Command::Presets => print!("{}", presets_report()),
    }
    Ok(())
}

fn parse_controller(spec: &str, city: Option<&str>) -> Result<HvacSetpoints> {
    match spec {
        "default" => {
            let city = city.ok_or_else(|| usage("`--controller default` needs --city"))?;
            Ok(default_controller(city)?)
        }
        "off" => Ok(HvacEnv::INITIAL_SETPOINTS),
        _ => {
            let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
            let values: Vec<f64> = parts.iter().filter_map(|p| p.parse().ok()).collect();
            if parts.len() != 3 || values.len() != 3 {
                return Err(usage(format!(
                    "controller must be `default`, `off` or `AC_C,HEAT_C,VENT`, got `{spec}`"
                )));
            }
            Ok(HvacSetpoints {
                t_max_k: values[0] + KELVIN_OFFSET,
                t_min_k: values[1] + KELVIN_OFFSET,
                vent_ach: values[2],
            })
        }
    }
}
