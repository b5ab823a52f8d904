//! Vendor-agnostic model access.
//!
//! Vendors are described by [`VendorMetadata`]: which parameter names their
//! API expects and which adapter constructor (`module_path`) builds clients
//! for them. [`ModelGateway::create_model`] translates standard
//! [`ModelParams`] into vendor keys. Each distinct parameter set constructs
//! its adapter once; later calls reuse the cached [`ModelHandle`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::component::{topological_order, ComponentId, DecomposedResponse};

pub const MOCK_VENDOR: &str = "mock";
pub const MOCK_MODULE_PATH: &str = "maod.providers.mock";
pub const REWRITE_MARKER: &str = "[rewritten] ";

/// Environment variable naming an optional JSON vendor registry file.
pub const VENDORS_PATH_ENV: &str = "MAOD_VENDORS_PATH";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("vendor {0:?} is already registered")]
    DuplicateVendor(String),
    #[error("invalid vendor metadata: {0}")]
    InvalidMetadata(String),
    #[error("model initialization failed: {0}")]
    ModelInitializationError(String),
    #[error("provider failure: {0}")]
    ProviderFailure(String),
    #[error("unknown component {0}")]
    UnknownComponent(ComponentId),
    #[error("cannot build reprompt context: {0}")]
    InvalidResponse(String),
}

/// How one vendor names its parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VendorMetadata {
    pub vendor_id: String,
    pub model_name_key: String,
    pub temperature_key: String,
    pub module_path: String,
    /// Standard extra parameter name -> vendor parameter name.
    #[serde(default)]
    pub extra_keys: BTreeMap<String, String>,
}

impl VendorMetadata {
    pub fn new(
        vendor_id: impl Into<String>,
        model_name_key: impl Into<String>,
        temperature_key: impl Into<String>,
        module_path: impl Into<String>,
    ) -> Self {
        VendorMetadata {
            vendor_id: vendor_id.into(),
            model_name_key: model_name_key.into(),
            temperature_key: temperature_key.into(),
            module_path: module_path.into(),
            extra_keys: BTreeMap::new(),
        }
    }

    pub fn mock() -> Self {
        VendorMetadata::new(MOCK_VENDOR, "model", "temperature", MOCK_MODULE_PATH)
    }

    fn check(&self) -> Result<(), GatewayError> {
        let named = [
            ("vendor_id", &self.vendor_id),
            ("model_name_key", &self.model_name_key),
            ("temperature_key", &self.temperature_key),
            ("module_path", &self.module_path),
        ];
        for (field, value) in named {
            if value.trim().is_empty() {
                return Err(GatewayError::InvalidMetadata(format!("{field} is empty")));
            }
        }
        for (standard, vendor) in &self.extra_keys {
            if standard.trim().is_empty() || vendor.trim().is_empty() {
                return Err(GatewayError::InvalidMetadata("extra_keys entries must be non-empty".into()));
            }
        }
        Ok(())
    }
}

/// Reads a JSON list of [`VendorMetadata`].
pub fn load_vendor_file(path: &Path) -> Result<Vec<VendorMetadata>, GatewayError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| GatewayError::InvalidMetadata(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| GatewayError::InvalidMetadata(format!("{}: {e}", path.display())))
}

/// Standard, vendor-neutral model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub vendor_id: String,
    pub model_name: String,
    pub temperature: f64,
    #[serde(default)]
    pub extras: BTreeMap<String, String>,
}

impl ModelParams {
    pub fn new(vendor_id: impl Into<String>, model_name: impl Into<String>, temperature: f64) -> Self {
        ModelParams { vendor_id: vendor_id.into(), model_name: model_name.into(), temperature, extras: BTreeMap::new() }
    }

    pub fn mock(model_name: &str) -> Self {
        ModelParams::new(MOCK_VENDOR, model_name, 0.0)
    }

    pub fn label(&self) -> String {
        format!("{}/{}", self.vendor_id, self.model_name)
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams::mock("echo-1")
    }
}

/// Parameters as a vendor expects them: vendor key -> value.
pub type VendorParams = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey {
    pub vendor_id: String,
    pub model_name: String,
    pub params: String,
}

/// One role-tagged entry of conversation or reprompt context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextMessage {
    pub role: String,
    pub text: String,
}

impl ContextMessage {
    pub fn new(role: impl Into<String>, text: impl Into<String>) -> Self {
        ContextMessage { role: role.into(), text: text.into() }
    }
}

/// What an adapter receives for one call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerateRequest<'a> {
    pub params: &'a VendorParams,
    pub prompt: &'a str,
    pub context: &'a [ContextMessage],
}

/// A vendor client.
pub trait ModelAdapter: Send + Sync {
    fn generate(&self, request: GenerateRequest<'_>) -> Result<String, GatewayError>;
}

/// Builds an adapter from vendor-keyed parameters.
pub type AdapterConstructor =
    Arc<dyn Fn(&VendorMetadata, &VendorParams) -> Result<Arc<dyn ModelAdapter>, GatewayError> + Send + Sync>;

/// A cached, shareable model client.
#[derive(Clone)]
pub struct ModelHandle {
    serial: u64,
    key: CacheKey,
    params: Arc<VendorParams>,
    adapter: Arc<dyn ModelAdapter>,
}

impl ModelHandle {
    pub fn cache_key(&self) -> &CacheKey {
        &self.key
    }

    /// Distinct per constructed adapter; equal for cache hits.
    pub fn serial(&self) -> u64 {
        self.serial
    }

    /// `vendor/model`, used as provenance for generated content.
    pub fn label(&self) -> String {
        format!("{}/{}", self.key.vendor_id, self.key.model_name)
    }

    pub fn vendor_params(&self) -> &VendorParams {
        &self.params
    }

    pub fn generate(&self, prompt: &str, context: &[ContextMessage]) -> Result<String, GatewayError> {
        self.adapter.generate(GenerateRequest { params: &self.params, prompt, context })
    }
}

impl PartialEq for ModelHandle {
    fn eq(&self, other: &Self) -> bool {
        self.serial == other.serial && Arc::ptr_eq(&self.adapter, &other.adapter)
    }
}

impl fmt::Debug for ModelHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelHandle").field("serial", &self.serial).field("key", &self.key).finish()
    }
}

/// Vendor registry, adapter catalog and model cache.
pub struct ModelGateway {
    vendors: RwLock<HashMap<String, VendorMetadata>>,
    constructors: RwLock<HashMap<String, AdapterConstructor>>,
    cache: Mutex<HashMap<CacheKey, ModelHandle>>,
    constructed: AtomicU64,
}

impl Default for ModelGateway {
    fn default() -> Self {
        Self::empty()
    }
}

impl ModelGateway {
    /// A gateway with no vendors and no adapter constructors.
    pub fn empty() -> Self {
        ModelGateway {
            vendors: RwLock::new(HashMap::new()),
            constructors: RwLock::new(HashMap::new()),
            cache: Mutex::new(HashMap::new()),
            constructed: AtomicU64::new(0),
        }
    }

    /// A gateway with the in-repo mock provider registered.
    pub fn with_mock() -> Self {
        let gateway = Self::empty();
        gateway.register_constructor(MOCK_MODULE_PATH, Arc::new(mock_constructor));
        gateway.register_vendor(VendorMetadata::mock()).expect("fresh registry");
        gateway
    }

    pub fn register_constructor(&self, module_path: impl Into<String>, constructor: AdapterConstructor) {
        self.constructors.write().expect("constructor lock").insert(module_path.into(), constructor);
    }

    pub fn register_vendor(&self, meta: VendorMetadata) -> Result<(), GatewayError> {
        meta.check()?;
        let mut vendors = self.vendors.write().expect("vendor lock");
        if vendors.contains_key(&meta.vendor_id) {
            return Err(GatewayError::DuplicateVendor(meta.vendor_id));
        }
        vendors.insert(meta.vendor_id.clone(), meta);
        Ok(())
    }

    /// Removes a vendor and evicts its cached handles.
    pub fn unregister_vendor(&self, vendor_id: &str) -> Option<VendorMetadata> {
        let removed = self.vendors.write().expect("vendor lock").remove(vendor_id);
        self.cache.lock().expect("cache lock").retain(|k, _| k.vendor_id != vendor_id);
        removed
    }

    pub fn vendor(&self, vendor_id: &str) -> Option<VendorMetadata> {
        self.vendors.read().expect("vendor lock").get(vendor_id).cloned()
    }

    pub fn vendor_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.vendors.read().expect("vendor lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Number of adapters built so far (cache misses).
    pub fn constructed_count(&self) -> u64 {
        self.constructed.load(Ordering::SeqCst)
    }

    /// Translates `params` into the vendor's own key names.
    pub fn translate(meta: &VendorMetadata, params: &ModelParams) -> Result<VendorParams, GatewayError> {
        if params.model_name.trim().is_empty() {
            return Err(GatewayError::ModelInitializationError("model_name is empty".into()));
        }
        if !params.temperature.is_finite() || !(0.0..=2.0).contains(&params.temperature) {
            return Err(GatewayError::ModelInitializationError(format!(
                "temperature {} outside [0, 2]",
                params.temperature
            )));
        }
        let mut out = VendorParams::new();
        out.insert(meta.model_name_key.clone(), params.model_name.clone());
        out.insert(meta.temperature_key.clone(), params.temperature.to_string());
        for (name, value) in &params.extras {
            let key = meta.extra_keys.get(name).ok_or_else(|| {
                GatewayError::ModelInitializationError(format!(
                    "vendor {:?} does not accept parameter {name:?}",
                    meta.vendor_id
                ))
            })?;
            out.insert(key.clone(), value.clone());
        }
        Ok(out)
    }

    /// Returns the cached handle for `params`, constructing it on first use.
    pub fn create_model(&self, params: &ModelParams) -> Result<ModelHandle, GatewayError> {
        let meta = self.vendor(&params.vendor_id).ok_or_else(|| {
            GatewayError::ModelInitializationError(format!("vendor {:?} is not registered", params.vendor_id))
        })?;
        let vendor_params = Self::translate(&meta, params)?;
        let key = CacheKey {
            vendor_id: meta.vendor_id.clone(),
            model_name: params.model_name.clone(),
            params: serde_json::to_string(&vendor_params).expect("string map serializes"),
        };

        // Held across construction so concurrent misses build one adapter.
        let mut cache = self.cache.lock().expect("cache lock");
        if let Some(handle) = cache.get(&key) {
            return Ok(handle.clone());
        }
        let constructor =
            self.constructors.read().expect("constructor lock").get(&meta.module_path).cloned().ok_or_else(|| {
                GatewayError::ModelInitializationError(format!("no adapter registered at {:?}", meta.module_path))
            })?;
        let adapter = constructor(&meta, &vendor_params).map_err(|e| match e {
            GatewayError::ModelInitializationError(_) => e,
            other => GatewayError::ModelInitializationError(other.to_string()),
        })?;
        let serial = self.constructed.fetch_add(1, Ordering::SeqCst) + 1;
        let handle = ModelHandle { serial, key: key.clone(), params: Arc::new(vendor_params), adapter };
        cache.insert(key, handle.clone());
        Ok(handle)
    }

    pub fn generate(
        &self,
        handle: &ModelHandle,
        prompt: &str,
        context: &[ContextMessage],
    ) -> Result<String, GatewayError> {
        handle.generate(prompt, context)
    }
}

/// Role names used in reprompt context.
pub mod roles {
    pub const SYSTEM: &str = "system";
    pub const LINKED: &str = "linked_component";
    pub const INSTRUCTION: &str = "instruction";
    pub const USER: &str = "user";
    pub const ASSISTANT: &str = "assistant";
}

const REPROMPT_SYSTEM: &str = "Rewrite the component given as the prompt. Return only its replacement content.";

/// Prompt and context sent to regenerate one component: the component's
/// content is the prompt; linked components (in topological order) and the
/// instruction travel as context. No conversation history is included.
pub fn reprompt_request(
    response: &DecomposedResponse,
    id: &ComponentId,
    instruction: &str,
) -> Result<(String, Vec<ContextMessage>), GatewayError> {
    let target = response.component(id).ok_or_else(|| GatewayError::UnknownComponent(id.clone()))?;
    let order = topological_order(response).map_err(|e| GatewayError::InvalidResponse(e.to_string()))?;

    let mut context = vec![ContextMessage::new(roles::SYSTEM, REPROMPT_SYSTEM)];
    for linked in order.iter().filter(|o| target.links.iter().any(|l| &l.target == *o)) {
        if let Some(c) = response.component(linked) {
            context.push(ContextMessage::new(roles::LINKED, c.content.clone()));
        }
    }
    if !instruction.is_empty() {
        context.push(ContextMessage::new(roles::INSTRUCTION, instruction));
    }
    Ok((target.content.clone(), context))
}

/// Regenerates one component and returns only its replacement content.
pub fn reprompt_component(
    handle: &ModelHandle,
    response: &DecomposedResponse,
    id: &ComponentId,
    instruction: &str,
) -> Result<String, GatewayError> {
    let (prompt, context) = reprompt_request(response, id, instruction)?;
    handle.generate(&prompt, &context)
}

// ---------------------------------------------------------------------------
// Mock provider
// ---------------------------------------------------------------------------

/// Deterministic in-repo models. `echo-1` returns the prompt and `rewrite-1`
/// returns it behind [`REWRITE_MARKER`]. `fail-1` always fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockModel {
    Echo,
    Rewrite,
    Fail,
}

impl MockModel {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "echo-1" => Some(MockModel::Echo),
            "rewrite-1" => Some(MockModel::Rewrite),
            "fail-1" => Some(MockModel::Fail),
            _ => None,
        }
    }
}

#[derive(Debug)]
pub struct MockAdapter {
    model: MockModel,
}

impl MockAdapter {
    pub fn new(model: MockModel) -> Self {
        MockAdapter { model }
    }
}

impl ModelAdapter for MockAdapter {
    fn generate(&self, request: GenerateRequest<'_>) -> Result<String, GatewayError> {
        match self.model {
            MockModel::Echo => Ok(request.prompt.to_owned()),
            MockModel::Rewrite => Ok(format!("{REWRITE_MARKER}{}", request.prompt)),
            MockModel::Fail => Err(GatewayError::ProviderFailure("mock provider configured to fail".into())),
        }
    }
}

fn mock_constructor(meta: &VendorMetadata, params: &VendorParams) -> Result<Arc<dyn ModelAdapter>, GatewayError> {
    let name = params
        .get(&meta.model_name_key)
        .ok_or_else(|| GatewayError::ModelInitializationError("model name missing".into()))?;
    let model = MockModel::from_name(name)
        .ok_or_else(|| GatewayError::ModelInitializationError(format!("mock provider has no model {name:?}")))?;
    Ok(Arc::new(MockAdapter::new(model)))
}
