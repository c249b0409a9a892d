use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::report::{
    AssetRecord, AttackRecord, AttackRow, LedgerRecord, NodeRecord, ProxyRecord, RunReport, ScanRecord, StateError,
};
use super::scenario::{AssetSpec, AttackSpec, Scenario, ScriptAction};
use super::HarnessError;
use crate::asset_manager::{AssetManager, ManagerError, QueryResult};
use crate::config::Config;
use crate::digest::DigestBuilder;
use crate::identification::{
    characterize, classify, confident_class, AnswerLevel, AttributeAnswer, ClassCatalog, IdentityRegistry,
    Observation, ResolutionKind,
};
use crate::ledger::{connect, reversion_rate, run_attack, AttackParams, LedgerError, LedgerNode, NodeId};
use crate::metadata::{EventDraft, EventKind, MetadataBundle, ProxyLocator};
use crate::proxy::{instantiate_proxy, Certification, DataProxy, QualityOfData, Trigger};
use crate::Tick;

const MAX_QUIESCENCE_ROUNDS: u64 = 1_000;

/// Answers a class would give, taken from its own attribute likelihoods
/// and snapped to the nearest verbal level.
fn typical_answers(catalog: &ClassCatalog, spec: &AssetSpec) -> Vec<AttributeAnswer> {
    let entry = catalog
        .classes()
        .iter()
        .find(|c| c.label == spec.class)
        .expect("validated class");
    catalog
        .questions()
        .iter()
        .zip(&entry.likelihoods)
        .map(|(q, &l)| {
            let level = spec.answers.get(&q.id).copied().unwrap_or_else(|| {
                AnswerLevel::ALL
                    .into_iter()
                    .filter_map(|a| a.weight().map(|w| (a, (w - l).abs())))
                    .min_by(|x, y| x.1.total_cmp(&y.1))
                    .map(|(a, _)| a)
                    .expect("levels exist")
            });
            AttributeAnswer::new(q.id.clone(), level)
        })
        .collect()
}

fn noise_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().cholesky().map_or_else(
        || DMatrix::from_diagonal(&m.diagonal().map(|v| v.max(0.0).sqrt())),
        |c| c.l(),
    )
}

fn gaussian(rng: &mut ChaCha8Rng, factor: &DMatrix<f64>) -> DVector<f64> {
    let z = DVector::from_fn(factor.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    factor * z
}

/// Ground truth behind one proxy.
struct Tracked {
    name: String,
    identity_id: String,
    minted_at: Tick,
    truth: DVector<f64>,
    q_factor: DMatrix<f64>,
    r_factor: DMatrix<f64>,
    sq_error: Vec<f64>,
    samples: u64,
    steps: u64,
}

struct Run<'a> {
    scenario: &'a Scenario,
    config: &'a Config,
    rng: ChaCha8Rng,
    registry: IdentityRegistry,
    manager: AssetManager,
    tracked: Vec<Tracked>,
    /// Asset name to identity id, fixed at the first scan.
    ids: BTreeMap<String, String>,
    scans: Vec<ScanRecord>,
    events: Vec<String>,
}

impl Run<'_> {
    fn name_of(&self, identity_id: &str) -> String {
        self.ids
            .iter()
            .find(|(_, v)| v.as_str() == identity_id)
            .map_or_else(|| identity_id.to_string(), |(k, _)| k.clone())
    }

    fn scan(&mut self, t: Tick, spec: &AssetSpec) -> Result<(), HarnessError> {
        let answers = typical_answers(&self.config.catalog, spec);
        let posterior = classify(&answers, &self.config.catalog).map_err(|e| HarnessError::Runtime(e.to_string()))?;
        let class = match confident_class(&posterior, self.scenario.min_confidence) {
            Ok(c) => c.to_string(),
            Err(e) => {
                self.events.push(format!("t={t} scan {}: unclassified ({e})", spec.name));
                return Ok(());
            }
        };
        let confidence = posterior.top().1;
        let Some(schema) = self.config.schemas.get(&class) else {
            self.events
                .push(format!("t={t} scan {}: classified as {class}, which has no schema", spec.name));
            return Ok(());
        };
        if class != spec.class {
            self.events
                .push(format!("t={t} scan {}: classified as {class}, expected {}", spec.name, spec.class));
            return Ok(());
        }
        let noise = self.scenario.scan_noise;
        let obs: Observation = schema
            .features
            .iter()
            .map(|d| {
                let z: f64 = self.rng.sample(StandardNormal);
                let v = (spec.features[&d.name] + noise * d.sigma * z).clamp(d.min, d.max);
                (d.name.clone(), v)
            })
            .collect();
        let fv = characterize(&self.config.schemas, &class, &obs).map_err(|e| HarnessError::Runtime(e.to_string()))?;
        let res = self
            .registry
            .mint_or_resolve(&fv, self.scenario.match_threshold, t)
            .map_err(|e| HarnessError::Runtime(e.to_string()))?;
        let id = res.identity.id().to_string();

        match self.ids.get(&spec.name) {
            Some(prev) if *prev != id => {
                return Err(HarnessError::Invariant {
                    tick: t,
                    label: format!("identity law: {} resolved to {id}, first seen as {prev}", spec.name),
                })
            }
            None if res.kind == ResolutionKind::Resolved => {
                return Err(HarnessError::Invariant {
                    tick: t,
                    label: format!("cross-resolution: {} resolved to {id} of {}", spec.name, self.name_of(&id)),
                })
            }
            _ => {}
        }

        let outcome = match res.kind {
            ResolutionKind::Minted => "minted",
            ResolutionKind::Resolved => "resolved",
        };
        self.scans.push(ScanRecord {
            tick: t,
            asset: spec.name.clone(),
            predicted_class: class.clone(),
            confidence,
            outcome: outcome.to_string(),
            identity_id: id.clone(),
            distance: res.distance,
        });

        if res.kind == ResolutionKind::Resolved {
            self.events.push(format!("t={t} scan {}: resolved {id}", spec.name));
            return Ok(());
        }
        let proxy = self.make_proxy(spec)?;
        let g = self.config.models.get(&class).expect("validated model");
        let mut truth = g.prior_mean.clone();
        for (i, s) in g.model.states.iter().enumerate() {
            if let Some(v) = spec.features.get(&s.name) {
                truth[i] = *v;
            }
        }
        let mut bundle = MetadataBundle::new();
        bundle
            .append(
                EventDraft::new(EventKind::Acquisition, &spec.owner).with("asset", &spec.name),
                t,
            )
            .map_err(|e| HarnessError::Runtime(e.to_string()))?;
        let locator = ProxyLocator::new(format!("proxy://{id}")).map_err(|e| HarnessError::Runtime(e.to_string()))?;
        let n_states = g.model.n_states();
        self.tracked.push(Tracked {
            name: spec.name.clone(),
            identity_id: id.clone(),
            minted_at: t,
            truth,
            q_factor: noise_factor(&g.model.q),
            r_factor: noise_factor(&g.model.r),
            sq_error: vec![0.0; n_states],
            samples: 0,
            steps: 0,
        });
        self.manager
            .register(res.identity, bundle, proxy, locator, &spec.owner, spec.node)
            .map_err(|e| HarnessError::Runtime(format!("minting {}: {e}", spec.name)))?;
        self.ids.insert(spec.name.clone(), id.clone());
        self.events
            .push(format!("t={t} scan {}: minted {id} for {} at n{}", spec.name, spec.owner, spec.node));
        Ok(())
    }

    fn make_proxy(&self, spec: &AssetSpec) -> Result<DataProxy, HarnessError> {
        let rt = |e: crate::proxy::ProxyError| HarnessError::Runtime(format!("proxy for {}: {e}", spec.name));
        let mut proxy = instantiate_proxy(&self.config.models, &spec.class).map_err(rt)?;
        if let Some(bounds) = self.scenario.qod.get(&spec.class) {
            proxy
                .set_qod(QualityOfData::from_named(proxy.model(), bounds).map_err(rt)?)
                .map_err(rt)?;
        }
        if self.scenario.adapt_policies {
            proxy = proxy.adapt_model();
        }
        for tr in &spec.triggers {
            proxy
                .add_trigger(Trigger {
                    variable: tr.variable.clone(),
                    threshold: tr.threshold,
                    direction: tr.direction,
                })
                .map_err(rt)?;
        }
        Ok(proxy)
    }

    fn step_proxies(&mut self, t: Tick) -> Result<(), HarnessError> {
        for k in 0..self.tracked.len() {
            if self.tracked[k].minted_at >= t {
                continue;
            }
            let id = self.tracked[k].identity_id.clone();
            let name = self.tracked[k].name.clone();
            let proxy = self.manager.proxy_mut(&id).expect("registered");
            let model = proxy.model().clone();
            let tr = &mut self.tracked[k];
            let w = gaussian(&mut self.rng, &tr.q_factor);
            tr.truth = &model.a * &tr.truth + w;
            // sampling phase counts from the first step after minting
            let measurement = if proxy.is_sample_due(t - tr.minted_at - 1) {
                let v = gaussian(&mut self.rng, &tr.r_factor);
                let y = &model.c * &tr.truth + v;
                tr.samples += 1;
                Some(proxy.policy().active_channels().iter().map(|&c| y[c]).collect::<Vec<_>>())
            } else {
                None
            };
            proxy
                .step_estimate(t, measurement.as_deref())
                .map_err(|e| HarnessError::Runtime(format!("t={t} proxy {name}: {e}")))?;
            tr.steps += 1;
            for (i, e) in tr.sq_error.iter_mut().enumerate() {
                let d = proxy.state().x_hat[i] - tr.truth[i];
                *e += d * d;
            }
            let snapshot = proxy.snapshot();
            let drafts = proxy.evaluate_triggers("proxy");
            self.manager
                .update_state(&id, snapshot)
                .map_err(|e| HarnessError::Runtime(e.to_string()))?;
            for d in drafts {
                let what = format!(
                    "{} {} {}",
                    d.payload.get("variable").map_or("", String::as_str),
                    d.payload.get("direction").map_or("", String::as_str),
                    d.payload.get("threshold").map_or("", String::as_str)
                );
                self.manager
                    .record_event(&id, d, t)
                    .map_err(|e| HarnessError::Runtime(format!("t={t} trigger on {name}: {e}")))?;
                self.events.push(format!("t={t} trigger {name}: {what}"));
            }
        }
        Ok(())
    }

    fn anchor(&mut self, t: Tick) -> Result<(), HarnessError> {
        let n = self.scenario.network.nodes;
        for (k, tr) in self.tracked.iter().enumerate() {
            if tr.minted_at >= t {
                continue;
            }
            let node = (t as usize + k) % n;
            match self.manager.anchor(&tr.identity_id, node) {
                Ok(_) | Err(ManagerError::UnknownAsset(_)) => {}
                Err(e) => return Err(HarnessError::Runtime(format!("t={t} anchoring {}: {e}", tr.name))),
            }
        }
        Ok(())
    }

    fn lifecycle(&mut self, t: Tick, spec: &AssetSpec) -> Result<(), HarnessError> {
        let Some(id) = self.ids.get(&spec.name).cloned() else {
            return Ok(());
        };
        for ev in spec.events.iter().filter(|e| e.tick == t) {
            let mut d = EventDraft::new(ev.kind, &ev.actor);
            for (k, v) in &ev.fields {
                d = d.with(k, v);
            }
            self.manager
                .record_event(&id, d, t)
                .map_err(|e| HarnessError::Runtime(format!("t={t} event on {}: {e}", spec.name)))?;
            self.events
                .push(format!("t={t} event {}: {} by {}", spec.name, ev.kind, ev.actor));
        }
        Ok(())
    }

    fn script(&mut self, t: Tick, action: &ScriptAction) {
        let asset = action.asset();
        let Some(id) = self.ids.get(asset).cloned() else {
            self.events.push(format!("t={t} {}: {asset} is not minted yet", verb(action)));
            return;
        };
        let line = match action {
            ScriptAction::Grant {
                owner,
                user,
                scope,
                ..
            } => {
                let names: Vec<String> = scope.iter().map(ToString::to_string).collect();
                let r = self.manager.grant(owner, user, &id, scope.iter().copied(), t);
                format!("GRANT {owner} -> {user} {asset} {{{}}}: {}", names.join(","), ok_or(r.map(|_| ())))
            }
            ScriptAction::Revoke { owner, user, .. } => {
                let r = self.manager.revoke(owner, user, &id, t);
                format!("REVOKE {owner} -> {user} {asset}: {}", ok_or(r))
            }
            ScriptAction::Query { user, request, .. } => {
                let outcome = match self.manager.query(user, &id, *request, t) {
                    Ok(QueryResult::Sequence(s)) => match &s.bundle {
                        Some(b) => format!("sequence with {} events", b.len()),
                        None => "sequence".to_string(),
                    },
                    Ok(QueryResult::ProxyHandle(h)) => format!("handle {}", h.handle_id),
                    Ok(QueryResult::Denied(r)) => format!("denied ({r})"),
                    Err(e) => format!("error ({e})"),
                };
                format!("QUERY {user} {asset} {request}: {outcome}")
            }
            ScriptAction::Transfer {
                owner,
                new_owner,
                node,
                ..
            } => {
                let node = node.unwrap_or(self.scenario.network.serving);
                let r = self.manager.transfer(owner, new_owner, &id, node, t);
                format!("TRANSFER {owner} -> {new_owner} {asset} at n{node}: {}", ok_or(r.map(|_| ())))
            }
        };
        self.events.push(format!("t={t} {line}"));
    }

    fn settle_tick(&mut self, t: Tick) {
        let out = self.manager.tick(t);
        for (id, from, to) in out.confirmed_transfers {
            let name = self.name_of(&id);
            self.events
                .push(format!("t={t} transfer of {name} confirmed: {from} -> {to}"));
        }
        if out.revoked_grants > 0 {
            self.events
                .push(format!("t={t} revoked {} grant(s) of former owners", out.revoked_grants));
        }
        for h in out.invalidated_handles {
            self.events.push(format!("t={t} handle {h} invalidated"));
        }
    }
}

fn verb(a: &ScriptAction) -> &'static str {
    match a {
        ScriptAction::Grant { .. } => "GRANT",
        ScriptAction::Revoke { .. } => "REVOKE",
        ScriptAction::Query { .. } => "QUERY",
        ScriptAction::Transfer { .. } => "TRANSFER",
    }
}

fn ok_or(r: Result<(), ManagerError>) -> String {
    match r {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("error ({e})"),
    }
}

pub fn attack_table(spec: &AttackSpec, base_seed: u64) -> Result<AttackRecord, HarnessError> {
    let mut rows = Vec::new();
    for &fraction in &spec.fractions {
        let mut reports = Vec::new();
        for i in 0..spec.seeds {
            let mut p = AttackParams::new(fraction, spec.rounds, base_seed.wrapping_add(i));
            p.honest_count = spec.honest_nodes;
            reports.push(run_attack(&p).map_err(|e| HarnessError::Runtime(e.to_string()))?);
        }
        let reversions = reports.iter().filter(|r| r.success).count() as u64;
        rows.push(AttackRow {
            fraction,
            runs: spec.seeds,
            reversions,
            rate: reversion_rate(&reports),
        });
    }
    let monotone = rows.windows(2).all(|w| w[0].rate <= w[1].rate);
    Ok(AttackRecord {
        rounds: spec.rounds,
        honest_nodes: spec.honest_nodes,
        rows,
        monotone,
    })
}

fn build_network(s: &Scenario) -> Vec<LedgerNode> {
    let cfg = s.consensus.to_config();
    let mut nodes: Vec<LedgerNode> = (0..s.network.nodes)
        .map(|i| LedgerNode::new(NodeId(i as u32), cfg.clone(), s.seed))
        .collect();
    connect(&mut nodes, &s.network.topology.edges(s.network.nodes));
    nodes
}

/// Executes a validated scenario against `config`.
pub fn execute(scenario: &Scenario, config: &Config) -> Result<RunReport, HarnessError> {
    scenario.validate(config)?;
    let manager = AssetManager::new(build_network(scenario), scenario.network.serving)
        .map_err(|e| HarnessError::Validation(e.to_string()))?;
    let mut run = Run {
        scenario,
        config,
        rng: ChaCha8Rng::seed_from_u64(scenario.seed),
        registry: IdentityRegistry::default(),
        manager,
        tracked: Vec::new(),
        ids: BTreeMap::new(),
        scans: Vec::new(),
        events: Vec::new(),
    };

    let mut script = scenario.script.iter().peekable();
    for t in 0..scenario.ticks {
        for spec in &scenario.assets {
            if spec.scans.contains(&t) {
                run.scan(t, spec)?;
            }
            run.lifecycle(t, spec)?;
        }
        run.step_proxies(t)?;
        run.anchor(t)?;
        while let Some(step) = script.next_if(|s| s.tick == t) {
            run.script(t, &step.action);
        }
        run.manager.gossip();
        run.settle_tick(t);
    }

    let mut frames_sent = 0;
    let mut rounds = 0;
    while rounds < MAX_QUIESCENCE_ROUNDS {
        let stats = run.manager.gossip();
        rounds += 1;
        frames_sent += stats.frames_sent as u64;
        if stats.frames_sent == 0 {
            break;
        }
    }

    let nodes: Vec<NodeRecord> = run
        .manager
        .network()
        .iter()
        .map(|n| {
            let set = n.confirmed_set();
            let mut b = DigestBuilder::new("confirmed-set");
            for d in &set {
                b.digest(d);
            }
            NodeRecord {
                node: n.id().to_string(),
                transactions: n.dag().len() - 1,
                confirmed: set.len(),
                confirmed_digest: b.finish().to_hex(),
            }
        })
        .collect();
    let honest: Vec<&NodeRecord> = nodes.iter().collect();
    let converged = honest
        .windows(2)
        .all(|w| w[0].confirmed_digest == w[1].confirmed_digest && w[0].transactions == w[1].transactions);

    let mut assets = Vec::new();
    for spec in &scenario.assets {
        let Some(id) = run.ids.get(&spec.name) else {
            continue;
        };
        let a = run.manager.asset(id).expect("registered");
        let valid = a.bundle.verify().is_valid();
        if !valid {
            return Err(HarnessError::Invariant {
                tick: scenario.ticks,
                label: format!("provenance of {} does not verify", spec.name),
            });
        }
        assets.push(AssetRecord {
            asset: spec.name.clone(),
            identity_id: id.clone(),
            owner: run.manager.owner_of(id),
            events: a.bundle.len(),
            bundle_valid: valid,
            sequence_digest: a.sequence_digest().to_hex(),
        });
    }

    let mut proxies = Vec::new();
    for tr in &run.tracked {
        let p = &run.manager.asset(&tr.identity_id).expect("registered").proxy;
        let certified = match p.certify() {
            Ok(Certification::Certified { steady_stddevs }) => Some(steady_stddevs),
            _ => None,
        };
        let model = p.model();
        proxies.push(ProxyRecord {
            asset: tr.name.clone(),
            period: p.policy().period(),
            active_channels: p
                .policy()
                .active_channels()
                .iter()
                .map(|&c| model.channels[c].clone())
                .collect(),
            samples: tr.samples,
            steps: tr.steps,
            states: model
                .states
                .iter()
                .enumerate()
                .map(|(i, s)| StateError {
                    name: s.name.clone(),
                    rms_error: if tr.steps == 0 {
                        0.0
                    } else {
                        (tr.sq_error[i] / tr.steps as f64).sqrt()
                    },
                    certified_stddev: certified.as_ref().map(|c| c[i]),
                    bound: p.qod().max_stddev[i],
                })
                .collect(),
        });
    }

    let attack = scenario
        .attack
        .as_ref()
        .map(|a| attack_table(a, scenario.seed))
        .transpose()?;

    Ok(RunReport {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        ticks: scenario.ticks,
        scans: run.scans,
        assets,
        proxies,
        ledger: LedgerRecord {
            nodes,
            converged,
            quiescence_rounds: rounds,
            frames_sent,
        },
        attack,
        events: run.events,
        audit: run.manager.audit().to_vec(),
    })
}

/// Loads, validates and executes the scenario at `path`. A bundled
/// scenario name may stand in for a path.
pub fn run_scenario(path: &Path, seed: Option<u64>) -> Result<RunReport, HarnessError> {
    let (mut scenario, base) = Scenario::load(path)?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    let config = scenario.load_config(base.as_deref())?;
    execute(&scenario, &config)
}

impl From<LedgerError> for HarnessError {
    fn from(e: LedgerError) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}
