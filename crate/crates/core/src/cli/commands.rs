use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, SimulatorKind, UserPool};
use super::plot::{line_chart, Series};
use super::Cli;
use crate::agents::{train_agent, GreedyPolicy, PopPolicy, RandomPolicy, TrainReport, ValueHyper};
use crate::data::{
    chronological_holdout, ingest_file, save_dataset, split_users, Dataset, RatingFormat, Split,
};
use crate::error::{Error, Result};
use crate::eval::{
    eval_population, evaluate, gamma_sweep, neumaier_sum, sweep_csv, EvalPopulation, EvalReport, MetricSummary,
    CSV_HEADER,
};
use crate::oracle::{relative_performance, verdict};
use crate::persist::read_file;
use crate::simulator::{Environment, MatrixFactorization, State, SyntheticEnv};

const DATASET_FILE: &str = "dataset.bin";
const SIMULATOR_FILE: &str = "simulator.bin";
const GREEDY_FILE: &str = "agent_greedyrm.bin";
const DQNR_FILE: &str = "agent_dqnr.bin";

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum PolicyChoice {
    Random,
    Pop,
    Greedyrm,
    Dqnr,
}

impl PolicyChoice {
    const ALL: [PolicyChoice; 4] = [PolicyChoice::Random, PolicyChoice::Pop, PolicyChoice::Greedyrm, PolicyChoice::Dqnr];

    fn slug(self) -> &'static str {
        match self {
            PolicyChoice::Random => "random",
            PolicyChoice::Pop => "pop",
            PolicyChoice::Greedyrm => "greedyrm",
            PolicyChoice::Dqnr => "dqnr",
        }
    }
}

/// Git-style digest of named inputs: each contributes its name and a
/// `blob <len>\0` header followed by its bytes.
pub fn inputs_digest(inputs: &[(&str, &[u8])]) -> String {
    let mut h = Sha256::new();
    for (name, bytes) in inputs {
        h.update(name.as_bytes());
        h.update([0u8]);
        h.update(format!("blob {}\0", bytes.len()).as_bytes());
        h.update(bytes);
    }
    hex::encode(h.finalize())
}

enum Sim {
    Mf(MatrixFactorization<f64>),
    Synthetic(SyntheticEnv<f64>),
}

impl Sim {
    fn env(&self) -> &dyn Environment<f64> {
        match self {
            Sim::Mf(m) => m,
            Sim::Synthetic(s) => s,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Sim::Mf(_) => "matrix-factorization",
            Sim::Synthetic(_) => "synthetic",
        }
    }
}

/// Inputs read by one command, kept for the report digest.
#[derive(Default)]
struct Inputs(Vec<(String, Vec<u8>)>);

impl Inputs {
    fn read(&mut self, path: &Path, name: &str) -> Result<Vec<u8>> {
        let bytes = read_file(path)?;
        self.0.push((name.to_string(), bytes.clone()));
        Ok(bytes)
    }
}

pub struct Context {
    pub cfg: ExperimentConfig,
    base_dir: PathBuf,
    out: PathBuf,
}

impl Context {
    pub fn load(cli: &Cli) -> Result<Self> {
        let (mut cfg, base_dir) = match &cli.config {
            Some(p) => {
                let (cfg, _) = ExperimentConfig::load(p)?;
                let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (cfg, dir)
            }
            None => (ExperimentConfig::default(), PathBuf::new()),
        };
        if let Some(s) = cli.seed {
            cfg.override_seed(s);
        }
        Ok(Context {
            cfg,
            base_dir,
            out: cli.out.clone(),
        })
    }

    fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        std::fs::create_dir_all(&self.out)?;
        std::fs::write(self.out_path(name), bytes)?;
        Ok(())
    }

    fn write_json(&self, name: &str, v: &Value) -> Result<()> {
        let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))?;
        s.push('\n');
        self.write(name, s)
    }

    /// Config echo attached to every report: the effective config, the
    /// published reference values next to the ones used here, and a digest
    /// of the config plus every input file.
    fn echo(&self, inputs: &Inputs) -> Value {
        let cfg = serde_json::to_value(&self.cfg).expect("config serializes");
        let cfg_text = cfg.to_string();
        let mut named: Vec<(&str, &[u8])> = vec![("config", cfg_text.as_bytes())];
        named.extend(inputs.0.iter().map(|(n, b)| (n.as_str(), b.as_slice())));
        let a = &self.cfg.agent;
        json!({
            "experiment": cfg,
            "reference_values": {
                "agent.dim": { "used": a.dim, "reference": 64 },
                "agent.history_window": { "used": a.history_window, "reference": 200 },
                "agent.gamma": { "used": a.gamma, "reference": 0.95 },
                "agent.batch_size": { "used": a.batch_size, "reference": 256 },
                "agent.grad_clip": { "used": a.grad_clip, "reference": 5.0 },
                "simulator.mf.dim": { "used": self.cfg.simulator.mf.dim, "reference": 64 },
                "split": {
                    "used": [self.cfg.split.train, self.cfg.split.validation, self.cfg.split.test],
                    "reference": [0.85, 0.05, 0.10]
                },
                "eval.horizon": { "used": self.cfg.eval.horizon, "reference": 40 }
            },
            "inputs_sha256": inputs_digest(&named),
        })
    }

    fn load_dataset(&self, inputs: &mut Inputs) -> Result<Dataset> {
        let path = self.out_path(DATASET_FILE);
        if !path.exists() {
            return Err(Error::Format(format!("{} not found; run `ingest` first", path.display())));
        }
        let bytes = inputs.read(&path, DATASET_FILE)?;
        crate::data::decode_dataset(&bytes)
    }

    fn split(&self, ds: &Dataset) -> Result<Split> {
        split_users(ds.num_users(), self.cfg.split.fractions(), self.cfg.split.seed)
    }

    fn synthetic_env(&self) -> Result<SyntheticEnv<f64>> {
        SyntheticEnv::new(self.cfg.simulator.synthetic.config(self.cfg.scale))
            .map_err(|e| Error::Config(e.to_string()))
    }

    fn load_sim(&self, ds: &Dataset, inputs: &mut Inputs) -> Result<Sim> {
        let sim = match self.cfg.simulator.kind {
            SimulatorKind::Mf => {
                let bytes = inputs.read(&self.out_path(SIMULATOR_FILE), SIMULATOR_FILE)?;
                Sim::Mf(MatrixFactorization::from_bytes(&bytes)?)
            }
            SimulatorKind::Synthetic => Sim::Synthetic(self.synthetic_env()?),
        };
        let env = sim.env();
        if env.num_users() != ds.num_users() || env.num_items() != ds.num_items {
            return Err(Error::Format(format!(
                "simulator covers {} users x {} items but the dataset has {} x {}; rerun the earlier stages",
                env.num_users(),
                env.num_items(),
                ds.num_users(),
                ds.num_items
            )));
        }
        Ok(sim)
    }

    fn load_agent(&self, name: &str, inputs: &mut Inputs) -> Result<crate::ValueModel> {
        let bytes = inputs.read(&self.out_path(name), name)?;
        crate::ValueModel::from_bytes(&bytes)
    }

    /// Evaluation users (sorted ids) with their warm-up prefixes.
    fn population(&self, ds: &Dataset, split: &Split, cap: Option<usize>) -> EvalPopulation<f64> {
        let mut users = match self.cfg.eval.users {
            UserPool::Test => split.test.clone(),
            UserPool::All => (0..ds.num_users()).collect(),
        };
        users.sort_unstable();
        let mut pop = eval_population(ds, &users, self.cfg.eval.warmup);
        if let Some(c) = cap {
            pop.users.truncate(c);
        }
        pop
    }

    pub fn ingest(
        &self,
        input: Option<&Path>,
        format: Option<RatingFormat>,
        k_core: Option<usize>,
        stdout: &mut dyn Write,
    ) -> Result<()> {
        let mut inputs = Inputs::default();
        let ds = match self.cfg.simulator.kind {
            SimulatorKind::Synthetic if input.is_none() => {
                let s = &self.cfg.simulator.synthetic;
                self.synthetic_env()?.logged_dataset(s.history_len, s.log_seed)?
            }
            _ => {
                let path = match input {
                    Some(p) => p.to_path_buf(),
                    None => self.cfg.resolve_dataset_path(&self.base_dir)?,
                };
                let format = format.unwrap_or(self.cfg.dataset.format);
                let k = k_core.unwrap_or(self.cfg.dataset.k_core);
                inputs.read(&path, "ratings")?;
                ingest_file(&path, format, k, self.cfg.scale)?
            }
        };
        std::fs::create_dir_all(&self.out)?;
        save_dataset(&ds, &self.out_path(DATASET_FILE))?;
        let stats = ds.stats();
        self.write("stats.txt", format!("{stats}\n"))?;
        self.write_json("stats.json", &json!({ "stats": stats, "config": self.echo(&inputs) }))?;
        writeln!(stdout, "{stats}")?;
        Ok(())
    }

    pub fn train_sim(&self, stdout: &mut dyn Write) -> Result<()> {
        if self.cfg.simulator.kind == SimulatorKind::Synthetic {
            writeln!(stdout, "synthetic simulator is fully defined by the config; nothing to train")?;
            return Ok(());
        }
        let mut inputs = Inputs::default();
        let ds = self.load_dataset(&mut inputs)?;
        let mf = &self.cfg.simulator.mf;
        let (fit, held) = chronological_holdout(&ds, mf.holdout);
        let mut hyper = mf.hyper();

        let mut tuning = Vec::new();
        if mf.tune {
            let (inner, val) = holdout_triples(&fit, mf.holdout);
            let grid: Vec<(f64, f64)> = mf
                .lr_grid
                .iter()
                .flat_map(|&lr| mf.l2_grid.iter().map(move |&l2| (lr, l2)))
                .collect();
            let scores: Vec<f64> = grid
                .par_iter()
                .map(|&(lr, l2)| {
                    let h = crate::simulator::MfHyper { lr, l2, ..hyper };
                    // a diverged grid point is simply not selected
                    MatrixFactorization::<f64>::train(&inner, ds.num_users(), ds.num_items, ds.scale, &h)
                        .and_then(|m| m.rmse(&val))
                        .unwrap_or(f64::INFINITY)
                })
                .collect();
            let best = (0..grid.len())
                .min_by(|&a, &b| scores[a].total_cmp(&scores[b]))
                .ok_or_else(|| Error::Config("empty tuning grid".into()))?;
            if !scores[best].is_finite() {
                return Err(Error::NonFinite {
                    context: "simulator tuning: every grid point diverged".into(),
                });
            }
            (hyper.lr, hyper.l2) = grid[best];
            tuning = grid
                .iter()
                .zip(&scores)
                .map(|(&(lr, l2), &rmse)| json!({ "lr": lr, "l2": l2, "validation_rmse": finite_or_null(rmse) }))
                .collect();
        }

        let model = MatrixFactorization::<f64>::train(&fit, ds.num_users(), ds.num_items, ds.scale, &hyper)?;
        let rmse = model.rmse(&held)?;
        self.write(SIMULATOR_FILE, model.to_bytes())?;
        let row = format!("matrix-factorization,{},{},{},{},{rmse:.6}", hyper.dim, hyper.lr, hyper.l2, hyper.epochs);
        self.write("sim_rmse.csv", format!("{RMSE_HEADER}\n{row}\n"))?;
        self.write_json(
            "train_sim.json",
            &json!({
                "simulator": "matrix-factorization",
                "hyper": hyper,
                "rmse": rmse,
                "n_fit": fit.len(),
                "n_heldout": held.len(),
                "tuning": tuning,
                "config": self.echo(&inputs),
            }),
        )?;
        writeln!(stdout, "{RMSE_HEADER}\n{row}")?;
        Ok(())
    }

    pub fn eval_sim(&self, stdout: &mut dyn Write) -> Result<()> {
        let mut inputs = Inputs::default();
        let ds = self.load_dataset(&mut inputs)?;
        let sim = self.load_sim(&ds, &mut inputs)?;
        let (rmse, n) = sequential_rmse(sim.env(), &ds, self.cfg.simulator.mf.holdout)?;
        let row = format!("{},{rmse:.6},{n}", sim.name());
        self.write("sim_eval.csv", format!("simulator,rmse,n_heldout\n{row}\n"))?;
        self.write_json(
            "sim_eval.json",
            &json!({ "simulator": sim.name(), "rmse": rmse, "n_heldout": n, "config": self.echo(&inputs) }),
        )?;
        writeln!(stdout, "simulator,rmse,n_heldout\n{row}")?;
        Ok(())
    }

    pub fn train_agent(&self, stdout: &mut dyn Write) -> Result<()> {
        let mut inputs = Inputs::default();
        let mut ds = self.load_dataset(&mut inputs)?;
        let split = self.split(&ds)?;
        ds.set_training_users(&split.train);
        let a = &self.cfg.agent;
        let mut base = a.hyper(0.0);

        let mut tuning = Vec::new();
        if a.tune {
            let sim = self.load_sim(&ds, &mut inputs)?;
            let mut val_users = split.validation.clone();
            val_users.sort_unstable();
            let pop = eval_population(&ds, &val_users, self.cfg.eval.warmup);
            if pop.users.is_empty() {
                return Err(Error::Config("no validation user has enough history to tune on".into()));
            }
            let mut best: Option<(f64, f64, f64)> = None;
            for &lr in &a.lr_grid {
                for &wd in &a.weight_decay_grid {
                    let h = ValueHyper { lr, weight_decay: wd, ..base };
                    let rw = match train_agent::<f64>(&ds, &split.train, &h) {
                        Ok((m, _)) => {
                            let p = GreedyPolicy::new("GreedyRM", m);
                            let r = evaluate(&p, sim.env(), &pop, self.cfg.eval.horizon, &self.cfg.eval.seeds[..1], self.cfg.eval.mask_seen)?;
                            r.rw.mean
                        }
                        Err(Error::NonFinite { .. }) => f64::NEG_INFINITY,
                        Err(e) => return Err(e),
                    };
                    tuning.push(json!({ "lr": lr, "weight_decay": wd, "validation_rw": finite_or_null(rw) }));
                    if rw.is_finite() && best.is_none_or(|b| rw > b.2) {
                        best = Some((lr, wd, rw));
                    }
                }
            }
            let (lr, wd, _) = best.ok_or_else(|| Error::NonFinite {
                context: "agent tuning: every grid point diverged".into(),
            })?;
            base.lr = lr;
            base.weight_decay = wd;
        }

        let mut summary = Vec::new();
        for (name, file, gamma) in [("GreedyRM", GREEDY_FILE, 0.0), ("DQNR", DQNR_FILE, a.gamma)] {
            let hyper = ValueHyper { gamma, ..base };
            let (model, report) = train_agent::<f64>(&ds, &split.train, &hyper)?;
            self.write(file, model.to_bytes())?;
            writeln!(
                stdout,
                "{name}: gamma={gamma} final loss {:.6} ({} batches)",
                report.epoch_losses.last().copied().unwrap_or(f64::NAN),
                report.batches
            )?;
            summary.push(json!({ "agent": name, "file": file, "hyper": hyper, "training": report_json(&report) }));
        }
        self.write_json(
            "train_agent.json",
            &json!({ "agents": summary, "tuning": tuning, "config": self.echo(&inputs) }),
        )?;
        Ok(())
    }

    pub fn evaluate(&self, policies: Option<&[PolicyChoice]>, stdout: &mut dyn Write) -> Result<()> {
        let mut inputs = Inputs::default();
        let mut ds = self.load_dataset(&mut inputs)?;
        let split = self.split(&ds)?;
        ds.set_training_users(&split.train);
        let sim = self.load_sim(&ds, &mut inputs)?;
        let env = sim.env();
        let pop = self.population(&ds, &split, self.cfg.eval.max_users);
        let e = &self.cfg.eval;

        let chosen = policies.unwrap_or(&PolicyChoice::ALL);
        let mut reports: Vec<(PolicyChoice, EvalReport)> = Vec::new();
        for &p in chosen {
            let r = match p {
                PolicyChoice::Random => {
                    evaluate(&RandomPolicy { num_items: ds.num_items }, env, &pop, e.horizon, &e.seeds, e.mask_seen)?
                }
                PolicyChoice::Pop => {
                    let pol = PopPolicy { popularity: ds.item_popularity.clone() };
                    evaluate(&pol, env, &pop, e.horizon, &e.seeds, e.mask_seen)?
                }
                PolicyChoice::Greedyrm => {
                    let pol = GreedyPolicy::new("GreedyRM", self.load_agent(GREEDY_FILE, &mut inputs)?);
                    evaluate(&pol, env, &pop, e.horizon, &e.seeds, e.mask_seen)?
                }
                PolicyChoice::Dqnr => {
                    let pol = GreedyPolicy::new("DQNR", self.load_agent(DQNR_FILE, &mut inputs)?);
                    evaluate(&pol, env, &pop, e.horizon, &e.seeds, e.mask_seen)?
                }
            };
            reports.push((p, r));
        }
        let echo = self.echo(&inputs);
        let mut csv = format!("{CSV_HEADER}\n");
        for (p, mut r) in reports {
            r.config = echo.clone();
            self.write_json(&format!("eval_{}.json", p.slug()), &serde_json::to_value(&r).expect("report serializes"))?;
            csv.push_str(&r.csv_row());
            csv.push('\n');
        }
        self.write("eval.csv", &csv)?;
        write!(stdout, "{csv}")?;
        Ok(())
    }

    pub fn validate(&self, stdout: &mut dyn Write) -> Result<()> {
        let mut inputs = Inputs::default();
        let ds = self.load_dataset(&mut inputs)?;
        let split = self.split(&ds)?;
        let sim = self.load_sim(&ds, &mut inputs)?;
        let o = &self.cfg.oracle;
        let pop = self.population(&ds, &split, o.max_users);
        let starts: Vec<State<f64>> = pop.users.iter().map(|u| State::new(u.user, u.warmup.clone())).collect();
        let mut report = relative_performance(sim.env(), &starts, o.horizon, &o.k_values, o.k_ref, self.cfg.eval.mask_seen)?;
        if !report.relative.is_finite() {
            return Err(Error::NonFinite { context: "relative performance".into() });
        }
        report.seed = Some(self.cfg.split.seed);
        report.config = self.echo(&inputs);
        self.write_json("oracle.json", &serde_json::to_value(&report).expect("report serializes"))?;

        let reference = report.mean_rewards[&o.k_ref.to_string()];
        let mut csv = String::from("k,mean_reward,relative_to_k_ref\n");
        for &k in &report.k_values {
            let m = report.mean_rewards[&k.to_string()];
            let rel = if reference == 0.0 { 1.0 } else { m / reference };
            csv.push_str(&format!("{k},{m:.6},{rel:.6}\n"));
        }
        self.write("oracle.csv", &csv)?;
        writeln!(
            stdout,
            "relative performance (greedy / beam@{}) over {} users, T={}: {:.4}",
            o.k_ref,
            starts.len(),
            o.horizon,
            report.relative
        )?;
        writeln!(stdout, "verdict: {}", verdict(report.relative))?;
        Ok(())
    }

    pub fn sweep_gamma(&self, stdout: &mut dyn Write) -> Result<()> {
        let mut inputs = Inputs::default();
        let mut ds = self.load_dataset(&mut inputs)?;
        let split = self.split(&ds)?;
        ds.set_training_users(&split.train);
        let sim = self.load_sim(&ds, &mut inputs)?;
        let pop = self.population(&ds, &split, self.cfg.eval.max_users);
        let (e, s) = (&self.cfg.eval, &self.cfg.sweep);

        // per gamma: pooled episode RW and per-training-seed means
        let mut pooled: Vec<Vec<f64>> = vec![Vec::new(); s.gammas.len()];
        let mut seed_means: Vec<Vec<f64>> = vec![Vec::new(); s.gammas.len()];
        for &seed in &s.train_seeds {
            let train = |g: f64| {
                let h = ValueHyper { seed, ..self.cfg.agent.hyper(g) };
                train_agent::<f64>(&ds, &split.train, &h).map(|(m, _)| m)
            };
            let rows = gamma_sweep(train, sim.env(), &pop, &s.gammas, e.horizon, &e.seeds, e.mask_seen)?;
            for (j, (_, r)) in rows.into_iter().enumerate() {
                seed_means[j].push(r.rw.mean);
                pooled[j].extend(r.episode_rw);
            }
        }
        let summary: Vec<(f64, MetricSummary)> =
            s.gammas.iter().zip(&pooled).map(|(&g, xs)| (g, MetricSummary::of(xs))).collect();
        let csv = sweep_csv(&summary);
        self.write("sweep_gamma.csv", &csv)?;
        let rows: Vec<Value> = summary
            .iter()
            .zip(&seed_means)
            .map(|((g, m), per_seed)| json!({ "gamma": g, "rw": m, "per_seed_rw_mean": per_seed }))
            .collect();
        self.write_json(
            "sweep_gamma.json",
            &json!({ "horizon": e.horizon, "rows": rows, "train_seeds": s.train_seeds, "config": self.echo(&inputs) }),
        )?;
        if s.plot {
            let y: Vec<f64> = summary.iter().map(|(_, m)| m.mean).collect();
            let se: Vec<f64> = summary
                .iter()
                .zip(&pooled)
                .map(|((_, m), xs)| m.std / (xs.len().max(1) as f64).sqrt())
                .collect();
            let svg = line_chart(
                "Cumulative reward vs discount factor",
                "gamma",
                &format!("RW@{}", e.horizon),
                &Series { x: &s.gammas, y: &y, err: Some(&se) },
            );
            self.write("sweep_gamma.svg", svg)?;
        }
        write!(stdout, "{csv}")?;
        Ok(())
    }
}

const RMSE_HEADER: &str = "simulator,dim,lr,l2,epochs,rmse";

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn report_json(r: &TrainReport) -> Value {
    json!({ "epoch_losses": r.epoch_losses, "batches": r.batches, "target_syncs": r.target_syncs })
}

/// Chronological holdout over `(user, item, rating)` triples that are grouped
/// by user in time order (as produced by `chronological_holdout`).
fn holdout_triples(
    triples: &[(usize, usize, f64)],
    fraction: f64,
) -> (Vec<(usize, usize, f64)>, Vec<(usize, usize, f64)>) {
    let mut fit = Vec::with_capacity(triples.len());
    let mut held = Vec::new();
    for run in triples.chunk_by(|a, b| a.0 == b.0) {
        let len = run.len();
        let n_hold = if len < 2 {
            0
        } else {
            ((len as f64 * fraction).round() as usize).clamp(1, len - 1)
        };
        fit.extend_from_slice(&run[..len - n_hold]);
        held.extend_from_slice(&run[len - n_hold..]);
    }
    (fit, held)
}

/// RMSE of the environment's rating for each held-out interaction given the
/// user's logged prefix before it.
fn sequential_rmse(env: &dyn Environment<f64>, ds: &Dataset, fraction: f64) -> Result<(f64, usize)> {
    let per_user: Vec<(f64, usize)> = ds
        .users
        .par_iter()
        .map(|h| {
            let len = h.len();
            if len < 2 {
                return (0.0, 0);
            }
            let n_hold = ((len as f64 * fraction).round() as usize).clamp(1, len - 1);
            let mut state = State::new(
                h.user,
                h.interactions[..len - n_hold].iter().map(|x| (x.item, x.rating)).collect(),
            );
            let mut sq = Vec::with_capacity(n_hold);
            for x in &h.interactions[len - n_hold..] {
                let e = env.rate(&state, x.item) - x.rating;
                sq.push(e * e);
                state.events.push((x.item, x.rating));
            }
            (neumaier_sum(sq), n_hold)
        })
        .collect();
    let n: usize = per_user.iter().map(|p| p.1).sum();
    if n == 0 {
        return Err(Error::InvalidArgument("no held-out interactions to score".into()));
    }
    let rmse = (neumaier_sum(per_user.iter().map(|p| p.0)) / n as f64).sqrt();
    if !rmse.is_finite() {
        return Err(Error::NonFinite { context: "simulator RMSE".into() });
    }
    Ok((rmse, n))
}
