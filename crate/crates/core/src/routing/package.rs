use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{OlsrParams, OlsrPlugin, RouteTable, RoutingError, RoutingPlugin, StaticRouting};
use crate::link::NodeId;
use crate::sim::SeededRng;

/// Lifecycle step run by the harness when a package starts or stops on a
/// node. Written as `start_daemon`, `stop_daemon`, `flush_routes` or
/// `log:<text>` in manifests.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HookDescriptor {
    StartDaemon,
    StopDaemon,
    FlushRoutes,
    Log(String),
}

impl FromStr for HookDescriptor {
    type Err = RoutingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "start_daemon" => Ok(HookDescriptor::StartDaemon),
            "stop_daemon" => Ok(HookDescriptor::StopDaemon),
            "flush_routes" => Ok(HookDescriptor::FlushRoutes),
            _ => match s.strip_prefix("log:") {
                Some(text) => Ok(HookDescriptor::Log(text.to_string())),
                None => Err(RoutingError::Manifest(format!("unknown hook {s:?}"))),
            },
        }
    }
}

impl fmt::Display for HookDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HookDescriptor::StartDaemon => f.write_str("start_daemon"),
            HookDescriptor::StopDaemon => f.write_str("stop_daemon"),
            HookDescriptor::FlushRoutes => f.write_str("flush_routes"),
            HookDescriptor::Log(t) => write!(f, "log:{t}"),
        }
    }
}

/// Everything a factory gets to build one node's daemon.
#[derive(Clone, Debug)]
pub struct PluginContext {
    pub node: NodeId,
    pub address: Ipv4Addr,
    pub rng: SeededRng,
    pub params: BTreeMap<String, f64>,
    /// Only meaningful to the static protocol.
    pub static_routes: RouteTable,
}

pub type PluginFactory = Arc<dyn Fn(&PluginContext) -> Result<Box<dyn RoutingPlugin>, RoutingError> + Send + Sync>;

#[derive(Clone)]
pub struct RoutingPackage {
    pub name: String,
    pub version: String,
    pub protocol: String,
    pub params: BTreeMap<String, f64>,
    pub start: Vec<HookDescriptor>,
    pub stop: Vec<HookDescriptor>,
    pub factory: PluginFactory,
}

impl fmt::Debug for RoutingPackage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RoutingPackage")
            .field("name", &self.name)
            .field("version", &self.version)
            .field("protocol", &self.protocol)
            .field("params", &self.params)
            .field("start", &self.start)
            .field("stop", &self.stop)
            .finish_non_exhaustive()
    }
}

fn olsr_factory() -> PluginFactory {
    Arc::new(|ctx: &PluginContext| {
        let params = OlsrParams::from_map(&ctx.params)?;
        Ok(Box::new(OlsrPlugin::new(ctx.address, params, ctx.rng.clone())) as Box<dyn RoutingPlugin>)
    })
}

fn static_factory() -> PluginFactory {
    Arc::new(|ctx: &PluginContext| {
        if let Some(key) = ctx.params.keys().next() {
            return Err(RoutingError::InvalidParameter {
                key: key.clone(),
                reason: "static routing takes no parameters".into(),
            });
        }
        Ok(Box::new(StaticRouting::new(ctx.static_routes.clone())) as Box<dyn RoutingPlugin>)
    })
}

fn builtin_factory(protocol: &str) -> Result<PluginFactory, RoutingError> {
    match protocol {
        "olsr" => Ok(olsr_factory()),
        "static" => Ok(static_factory()),
        other => Err(RoutingError::UnknownProtocol(other.to_string())),
    }
}

impl RoutingPackage {
    pub fn new(name: impl Into<String>, version: impl Into<String>, protocol: impl Into<String>, factory: PluginFactory) -> Self {
        RoutingPackage {
            name: name.into(),
            version: version.into(),
            protocol: protocol.into(),
            params: BTreeMap::new(),
            start: vec![HookDescriptor::StartDaemon],
            stop: vec![HookDescriptor::StopDaemon, HookDescriptor::FlushRoutes],
            factory,
        }
    }

    pub fn olsr() -> Self {
        RoutingPackage::new("olsr", "1.0", "olsr", olsr_factory())
    }

    pub fn static_routes() -> Self {
        RoutingPackage::new("static", "1.0", "static", static_factory())
    }

    pub fn from_manifest(m: &PackageManifest) -> Result<Self, RoutingError> {
        if m.name.trim().is_empty() {
            return Err(RoutingError::Manifest("empty package name".into()));
        }
        let mut pkg = RoutingPackage::new(&m.name, &m.version, &m.protocol, builtin_factory(&m.protocol)?);
        pkg.params = m.params.clone();
        if !m.start.is_empty() {
            pkg.start = m.start.iter().map(|s| s.parse()).collect::<Result<_, _>>()?;
        }
        if !m.stop.is_empty() {
            pkg.stop = m.stop.iter().map(|s| s.parse()).collect::<Result<_, _>>()?;
        }
        if pkg.protocol == "olsr" {
            OlsrParams::from_map(&pkg.params)?;
        }
        Ok(pkg)
    }

    /// Builds a daemon with the package defaults overridden by `ctx.params`.
    pub fn instantiate(&self, ctx: &PluginContext) -> Result<Box<dyn RoutingPlugin>, RoutingError> {
        let mut merged = self.params.clone();
        merged.extend(ctx.params.iter().map(|(k, v)| (k.clone(), *v)));
        let ctx = PluginContext {
            params: merged,
            ..ctx.clone()
        };
        (self.factory)(&ctx)
    }
}

/// On-disk description of an importable routing package.
///
/// ```json
/// {"name": "olsr-fast", "version": "0.1", "protocol": "olsr",
///  "params": {"hello_interval_s": 1.0, "neighbor_hold_s": 3.0}}
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackageManifest {
    pub name: String,
    pub version: String,
    pub protocol: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub start: Vec<String>,
    #[serde(default)]
    pub stop: Vec<String>,
}

impl PackageManifest {
    pub fn from_json(text: &str) -> Result<Self, RoutingError> {
        serde_json::from_str(text).map_err(|e| RoutingError::Manifest(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PackageHandle(pub usize);

#[derive(Clone, Debug, Default)]
pub struct PackageRegistry {
    packages: Vec<RoutingPackage>,
}

impl PackageRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry holding the bundled `olsr` and `static` packages.
    pub fn with_builtins() -> Self {
        let mut r = PackageRegistry::new();
        r.register(RoutingPackage::olsr()).expect("fresh registry");
        r.register(RoutingPackage::static_routes()).expect("fresh registry");
        r
    }

    pub fn register(&mut self, pkg: RoutingPackage) -> Result<PackageHandle, RoutingError> {
        if self.packages.iter().any(|p| p.name == pkg.name) {
            return Err(RoutingError::DuplicatePackage(pkg.name));
        }
        self.packages.push(pkg);
        Ok(PackageHandle(self.packages.len() - 1))
    }

    pub fn handle(&self, name: &str) -> Result<PackageHandle, RoutingError> {
        self.packages
            .iter()
            .position(|p| p.name == name)
            .map(PackageHandle)
            .ok_or_else(|| RoutingError::UnknownPackage(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<&RoutingPackage, RoutingError> {
        self.handle(name).map(|h| &self.packages[h.0])
    }

    pub fn package(&self, h: PackageHandle) -> &RoutingPackage {
        &self.packages[h.0]
    }

    pub fn names(&self) -> Vec<&str> {
        self.packages.iter().map(|p| p.name.as_str()).collect()
    }
}
