mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use maod_core::gateway::{
    reprompt_component, reprompt_request, roles, GatewayError, ModelGateway, ModelParams, VendorMetadata,
};
use maod_core::{decompose, ComponentId, Profile};
use support::capture;

fn acme() -> VendorMetadata {
    let mut meta = VendorMetadata::new("acme", "engine", "heat", "tests.capture");
    meta.extra_keys.insert("max_tokens".into(), "acme_limit".into());
    meta
}

fn gateway_with_capture() -> (ModelGateway, Arc<capture::Log>) {
    let log = Arc::new(capture::Log::default());
    let gateway = ModelGateway::with_mock();
    gateway.register_constructor("tests.capture", capture::constructor(log.clone()));
    gateway.register_vendor(acme()).unwrap();
    (gateway, log)
}

#[test]
fn adapter_sees_only_vendor_key_names() {
    let (gateway, log) = gateway_with_capture();
    let mut params = ModelParams::new("acme", "a-1", 0.7);
    params.extras.insert("max_tokens".into(), "64".into());
    let handle = gateway.create_model(&params).unwrap();
    handle.generate("hi", &[]).unwrap();

    let want: BTreeSet<&str> = ["engine", "heat", "acme_limit"].into();
    for seen in log.constructed.lock().unwrap().iter().chain(log.requests.lock().unwrap().iter()) {
        let keys: BTreeSet<&str> = seen.keys().map(String::as_str).collect();
        assert_eq!(keys, want);
        assert_eq!(seen["engine"], "a-1");
        assert_eq!(seen["acme_limit"], "64");
    }
}

#[test]
fn undeclared_extra_is_rejected() {
    let (gateway, _) = gateway_with_capture();
    let mut params = ModelParams::new("acme", "a-1", 0.7);
    params.extras.insert("top_p".into(), "0.9".into());
    assert!(matches!(gateway.create_model(&params), Err(GatewayError::ModelInitializationError(_))));
}

#[test]
fn constructions_equal_distinct_cache_keys() {
    let (gateway, log) = gateway_with_capture();
    let grid: Vec<ModelParams> = ["a-1", "a-2"]
        .iter()
        .flat_map(|m| [0.0, 0.5, 0.5, 1.0].map(|t| ModelParams::new("acme", *m, t)))
        .chain([ModelParams::mock("echo-1"), ModelParams::mock("echo-1"), ModelParams::mock("rewrite-1")])
        .collect();
    let mut keys = BTreeSet::new();
    for p in grid.iter().chain(grid.iter()) {
        keys.insert(gateway.create_model(p).unwrap().cache_key().clone());
    }
    assert_eq!(gateway.constructed_count(), keys.len() as u64);
    assert_eq!(keys.len(), 6 + 2);
    assert_eq!(log.constructed.lock().unwrap().len(), 6);
}

#[test]
fn concurrent_creation_builds_each_key_once() {
    let (gateway, _) = gateway_with_capture();
    let gateway = Arc::new(gateway);
    let threads: Vec<_> = (0..8)
        .map(|i| {
            let g = gateway.clone();
            std::thread::spawn(move || {
                (0..50)
                    .map(|j| {
                        g.create_model(&ModelParams::new("acme", format!("m{}", (i + j) % 5), 0.2)).unwrap().serial()
                    })
                    .collect::<Vec<_>>()
            })
        })
        .collect();
    let mut by_serial = BTreeMap::new();
    for t in threads {
        for s in t.join().unwrap() {
            *by_serial.entry(s).or_insert(0) += 1;
        }
    }
    assert_eq!(by_serial.len(), 5);
    assert_eq!(gateway.constructed_count(), 5);
}

#[test]
fn unregistered_vendor_fails_initialization() {
    let gateway = ModelGateway::with_mock();
    let err = gateway.create_model(&ModelParams::new("nobody", "x", 0.1)).unwrap_err();
    assert!(matches!(err, GatewayError::ModelInitializationError(_)));

    let (gateway, _) = gateway_with_capture();
    gateway.create_model(&ModelParams::new("acme", "a-1", 0.1)).unwrap();
    gateway.unregister_vendor("acme");
    assert!(matches!(
        gateway.create_model(&ModelParams::new("acme", "a-1", 0.1)),
        Err(GatewayError::ModelInitializationError(_))
    ));
}

#[test]
fn temperature_bounds() {
    let gateway = ModelGateway::with_mock();
    for t in [-0.1, 2.01, f64::NAN] {
        assert!(gateway.create_model(&ModelParams::new("mock", "echo-1", t)).is_err(), "{t}");
    }
    for t in [0.0, 2.0] {
        assert!(gateway.create_model(&ModelParams::new("mock", "echo-1", t)).is_ok());
    }
}

#[test]
fn vendor_file_registers_new_vendor_without_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vendors.json");
    std::fs::write(
        &path,
        r#"[{"vendor_id":"alt","model_name_key":"m","temperature_key":"t","module_path":"maod.providers.mock"}]"#,
    )
    .unwrap();
    let gateway = ModelGateway::with_mock();
    for meta in maod_core::gateway::load_vendor_file(&path).unwrap() {
        gateway.register_vendor(meta).unwrap();
    }
    let handle = gateway.create_model(&ModelParams::new("alt", "rewrite-1", 0.3)).unwrap();
    assert_eq!(handle.generate("x", &[]).unwrap(), "[rewritten] x");
    assert_eq!(handle.vendor_params().keys().collect::<Vec<_>>(), ["m", "t"]);
}

#[test]
fn reprompt_context_is_linked_components_then_instruction() {
    let r = decompose("# Title\n\nFirst.\n\n## Sub\n\nSecond.\n", Profile::Document).unwrap();
    let target = ComponentId::from_ordinal(4);
    let (prompt, context) = reprompt_request(&r, &target, "shorter").unwrap();
    assert_eq!(prompt, "Second.");
    let roles_seen: Vec<&str> = context.iter().map(|m| m.role.as_str()).collect();
    assert_eq!(roles_seen, [roles::SYSTEM, roles::LINKED, roles::INSTRUCTION]);
    assert_eq!(context[1].text, "# Title");

    let gateway = ModelGateway::with_mock();
    let handle = gateway.create_model(&ModelParams::mock("rewrite-1")).unwrap();
    assert_eq!(reprompt_component(&handle, &r, &target, "").unwrap(), "[rewritten] Second.");
    let fail = gateway.create_model(&ModelParams::mock("fail-1")).unwrap();
    assert!(matches!(reprompt_component(&fail, &r, &target, ""), Err(GatewayError::ProviderFailure(_))));
}
