use cpsseq::asset_manager::{serve, AssetManager, WireResponse, WireStatus};
use cpsseq::config::Config;
use cpsseq::harness::{execute, run_scenario, HarnessError, RunReport, Scenario, ATTACK_SWEEP, TENANT_KEYS};
use cpsseq::identification::{characterize, IdentityRegistry, Observation};
use cpsseq::ledger::{ConsensusConfig, LedgerNode, NodeId};
use cpsseq::metadata::{EventDraft, EventKind, MetadataBundle, ProxyLocator};
use cpsseq::proxy::{instantiate_proxy, ModelRegistry};

fn tenant_keys() -> Scenario {
    Scenario::from_toml_str(TENANT_KEYS).unwrap()
}

#[test]
fn zero_tick_scenario_is_empty() {
    let mut s = tenant_keys();
    s.ticks = 0;
    let r = execute(&s, &Config::bundled()).unwrap();
    assert!(r.scans.is_empty());
    assert!(r.assets.is_empty());
    assert!(r.events.is_empty());
    assert!(r.audit.is_empty());
    assert!(r.ledger.nodes.iter().all(|n| n.transactions == 0 && n.confirmed == 0));
    assert!(r.ledger.converged);
}

#[test]
fn seed_changes_the_run_but_not_the_story() {
    let mut s = tenant_keys();
    let a = execute(&s, &Config::bundled()).unwrap();
    s.seed += 1;
    let b = execute(&s, &Config::bundled()).unwrap();
    assert_ne!(a.to_text(), b.to_text());
    assert_eq!(a.assets.len(), b.assets.len());
    assert_eq!(
        a.assets.iter().map(|x| &x.owner).collect::<Vec<_>>(),
        b.assets.iter().map(|x| &x.owner).collect::<Vec<_>>()
    );
}

#[test]
fn rescans_keep_their_identity() {
    let mut s = tenant_keys();
    s.ticks = 120;
    for a in &mut s.assets {
        a.scans = (0..6).map(|k| k * 20 + a.scans[0]).collect();
    }
    let r = execute(&s, &Config::bundled()).unwrap();
    for asset in &s.assets {
        let ids: std::collections::BTreeSet<_> = r
            .scans
            .iter()
            .filter(|x| x.asset == asset.name)
            .map(|x| x.identity_id.clone())
            .collect();
        assert_eq!(ids.len(), 1, "{}", asset.name);
    }
    assert_eq!(r.scans.len(), 12);
}

#[test]
fn colliding_assets_abort_with_a_label() {
    let mut s = tenant_keys();
    let wear = s.assets[0].features["wear_index"];
    s.assets[1].features.insert("wear_index".into(), wear);
    match execute(&s, &Config::bundled()) {
        Err(HarnessError::Invariant { tick, label }) => {
            assert_eq!(tick, 1);
            assert!(label.contains("cross-resolution"), "{label}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn report_survives_a_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_scenario(std::path::Path::new("tenant-keys"), None).unwrap();
    r.write(dir.path()).unwrap();
    let back = RunReport::read(dir.path()).unwrap();
    assert_eq!(back.to_text(), r.to_text());
    let text = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert_eq!(text, r.to_text());
}

#[test]
fn scenario_files_resolve_relative_catalogs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cat.toml"), cpsseq::config::BUNDLED_CATALOG).unwrap();
    let text = TENANT_KEYS.replace("adapt_policies = true", "adapt_policies = true\ncatalog = \"cat.toml\"");
    let path = dir.path().join("s.toml");
    std::fs::write(&path, text).unwrap();
    let from_file = run_scenario(&path, None).unwrap();
    let bundled = execute(&tenant_keys(), &Config::bundled()).unwrap();
    assert_eq!(from_file.to_text(), bundled.to_text());
}

#[test]
fn missing_scenario_is_a_validation_error() {
    let err = run_scenario(std::path::Path::new("/definitely/not/here.toml"), None).unwrap_err();
    assert!(err.is_validation());
}

#[test]
fn small_attack_sweep_runs() {
    let mut s = Scenario::from_toml_str(ATTACK_SWEEP).unwrap();
    let a = s.attack.as_mut().unwrap();
    a.rounds = 300;
    a.seeds = 3;
    let r = execute(&s, &Config::bundled()).unwrap();
    let table = r.attack.as_ref().unwrap();
    assert_eq!(table.rows.len(), 5);
    assert!(table.rows.iter().all(|row| row.runs == 3));
    assert!(r.to_text().contains("[attack]"));
}

fn managed_key() -> (AssetManager, String) {
    let cfg = ConsensusConfig {
        confirmation_threshold: 2,
        ..ConsensusConfig::default()
    };
    let mut m = AssetManager::new(vec![LedgerNode::new(NodeId(0), cfg, 3)], 0).unwrap();
    let config = Config::bundled();
    let obs = Observation::new()
        .with("cut_depth_1", 5.0)
        .with("cut_depth_2", 5.0)
        .with("cut_depth_3", 5.0)
        .with("cut_depth_4", 5.0)
        .with("cut_depth_5", 5.0)
        .with("wear_index", 0.2)
        .with("material_score", 0.5);
    let fv = characterize(&config.schemas, "key", &obs).unwrap();
    let identity = IdentityRegistry::default().mint_or_resolve(&fv, 3.0, 0).unwrap().identity;
    let id = identity.id().to_string();
    let proxy = instantiate_proxy(&ModelRegistry::with_builtin(), "key").unwrap();
    let mut bundle = MetadataBundle::new();
    bundle.append(EventDraft::new(EventKind::Acquisition, "o1"), 0).unwrap();
    m.register(identity, bundle, proxy, ProxyLocator::new("proxy://k").unwrap(), "o1", 0)
        .unwrap();
    for t in 1..4 {
        m.record_event(&id, EventDraft::new(EventKind::Maintenance, "o1"), t).unwrap();
    }
    (m, id)
}

#[test]
fn jsonl_protocol_serves_each_verb() {
    let (mut m, id) = managed_key();
    let input = format!(
        r#"{{"verb":"GRANT","owner":"o1","user":"u1","identity":"{id}","scope":["MetadataRead"]}}
{{"verb":"QUERY","user":"u1","identity":"{id}","request":"Metadata"}}
{{"verb":"QUERY","user":"u1","identity":"{id}","request":"ProxyStream"}}
{{"verb":"QUERY","user":"o1","identity":"{id}","request":"ProxyStream"}}
{{"verb":"REVOKE","owner":"o1","user":"u1","identity":"{id}"}}
{{"verb":"QUERY","user":"u1","identity":"nope","request":"Identity"}}
{{"verb":"TRANSFER","owner":"o1","new_owner":"o2","identity":"{id}"}}
{{"verb":"DELETE"}}
"#
    );
    let out = serve(&mut m, &input, 5);
    let resp: Vec<WireResponse> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let statuses: Vec<WireStatus> = resp.iter().map(|r| r.status).collect();
    use WireStatus::*;
    assert_eq!(statuses, vec![Ok, Ok, Denied, Ok, Ok, Error, Ok, Error]);
    assert_eq!(resp[1].payload["events"].as_array().unwrap().len(), 4);
    assert_eq!(resp[3].payload["handle_id"], 1);
    assert!(resp[6].payload["tx_id"].as_str().unwrap().len() == 64);
    assert!(resp[7].payload["error"].as_str().unwrap().contains("malformed"));
}
