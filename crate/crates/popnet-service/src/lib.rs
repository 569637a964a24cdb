//! Per-PoP HTTP management endpoints.
//!
//! Every PoP in a topology can declare an `endpoint`, and [`start_endpoints`]
//! turns each declaration into its own TCP listener serving an IaaS-style
//! REST surface over one shared [`PlatformState`]. The listener a request
//! arrives on *is* its authorization scope: a PoP's endpoint only ever
//! operates on that PoP's instances and stacks, so tenant isolation needs no
//! credentials — a request simply cannot name a foreign resource into
//! existence. Platform-wide read-outs (`/platform/stats`, `/pops`) and the
//! cross-PoP chain routes are served identically by every endpoint.
//!
//! Concurrency model: all handlers funnel into a single [`parking_lot::Mutex`]
//! around the platform. A mutating request takes the lock, performs its whole
//! transaction, and releases it before the response is written. The guard is
//! not `Send`, so holding it across an `await` is a compile error — requests
//! can serialize on the platform but never wedge it across network waits.
//!
//! Startup is all-or-nothing: every listener is bound before any of them
//! serves a request, and a single failed bind (port already taken, bad
//! address) abandons the whole platform with an error naming the PoP.

mod heat;

use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use std::collections::BTreeMap;
use std::net::SocketAddr;
use tokio::sync::watch;
use tokio::task::JoinHandle;

use popnet_core::ids::PopName;
use popnet_core::platform::PlatformState;

pub use heat::{
    AllocateRequest, AllocateResponse, ChainRequest, ErrorBody, HeatLike, PopSummary,
    TrafficQuery, DEFAULT_ENDPOINT_TYPE,
};

/// The platform handle shared by every endpoint (and by in-process callers
/// such as the CLI's ticker).
pub type SharedPlatform = Arc<Mutex<PlatformState>>;

/// Wraps a freshly built platform for serving.
pub fn shared(platform: PlatformState) -> SharedPlatform {
    Arc::new(Mutex::new(platform))
}

/// Errors surfaced while turning endpoint declarations into live listeners.
#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("PoP `{0}` declares no management endpoint")]
    MissingEndpoint(PopName),

    #[error("PoP `{pop}` requests unknown endpoint type `{type_name}`")]
    UnknownEndpointType { pop: PopName, type_name: String },

    #[error("cannot bind `{addr}` for PoP `{pop}`: {source}")]
    Bind {
        pop: PopName,
        addr: String,
        #[source]
        source: std::io::Error,
    },

    #[error("`{0}` is already registered")]
    DuplicateRegistration(String),
}

/// A flavour of management surface a PoP can declare. The built-in
/// [`HeatLike`] type serves the stack/instance REST API; alternative types
/// plug in through [`EndpointRegistry::register`].
pub trait EndpointType: Send + Sync {
    /// Name matched against the `type` field of an endpoint declaration.
    fn name(&self) -> &'static str;

    /// Builds the router served on `pop`'s listener.
    fn router(&self, pop: &PopName, platform: SharedPlatform) -> axum::Router;
}

/// Named endpoint types, looked up while starting a platform.
#[derive(Clone)]
pub struct EndpointRegistry {
    types: BTreeMap<String, Arc<dyn EndpointType>>,
}

impl EndpointRegistry {
    /// An empty registry. Most callers want [`EndpointRegistry::builtin`].
    pub fn new() -> Self {
        Self {
            types: BTreeMap::new(),
        }
    }

    /// The registry with the built-in `heat-like` type.
    pub fn builtin() -> Self {
        let mut registry = Self::new();
        registry
            .register(Arc::new(HeatLike))
            .expect("built-in endpoint types have unique names");
        registry
    }

    /// Adds an endpoint type. Names must be unique.
    pub fn register(&mut self, endpoint_type: Arc<dyn EndpointType>) -> Result<(), ServiceError> {
        let name = endpoint_type.name().to_owned();
        if self.types.contains_key(&name) {
            return Err(ServiceError::DuplicateRegistration(name));
        }
        self.types.insert(name, endpoint_type);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Arc<dyn EndpointType>> {
        self.types.get(name)
    }

    /// Registered type names in lexicographic order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.types.keys().map(String::as_str)
    }
}

impl Default for EndpointRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

/// One live listener: which PoP it serves and the address it actually bound
/// (resolving port 0 to the ephemeral port the OS picked).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundEndpoint {
    pub pop: PopName,
    pub addr: SocketAddr,
}

/// Handle over a running set of endpoints.
///
/// Dropping the handle leaves the serve tasks running on their runtime; call
/// [`ServiceHandle::shutdown`] to stop them gracefully (in-flight requests
/// complete, then the sockets close).
#[derive(Debug)]
pub struct ServiceHandle {
    endpoints: Vec<BoundEndpoint>,
    stop: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
}

impl ServiceHandle {
    /// The bound listeners, in PoP name order.
    pub fn endpoints(&self) -> &[BoundEndpoint] {
        &self.endpoints
    }

    /// Address of one PoP's listener.
    pub fn addr_of(&self, pop: &PopName) -> Option<SocketAddr> {
        self.endpoints
            .iter()
            .find(|e| &e.pop == pop)
            .map(|e| e.addr)
    }

    /// Stops every listener and waits for the serve tasks to finish.
    pub async fn shutdown(self) {
        let _ = self.stop.send(true);
        for task in self.tasks {
            let _ = task.await;
        }
    }
}

/// Binds and serves one listener per PoP.
///
/// Every PoP must declare an endpoint of a registered type. All listeners are
/// bound up front; only once each socket is held does serving begin, so a
/// clashing port fails the whole startup with [`ServiceError::Bind`] naming
/// the PoP and no half-started platform is left behind.
pub async fn start_endpoints(
    platform: SharedPlatform,
    registry: &EndpointRegistry,
) -> Result<ServiceHandle, ServiceError> {
    // Snapshot the plan first: the platform lock must never be held across
    // an await, and binding below does await.
    let plan: Vec<_> = {
        let state = platform.lock();
        state
            .topology()
            .pops()
            .map(|p| (p.name.clone(), p.endpoint.clone()))
            .collect()
    };

    let mut pending = Vec::new();
    for (pop, decl) in plan {
        let decl = decl.ok_or_else(|| ServiceError::MissingEndpoint(pop.clone()))?;
        let endpoint_type =
            registry
                .get(&decl.type_name)
                .cloned()
                .ok_or_else(|| ServiceError::UnknownEndpointType {
                    pop: pop.clone(),
                    type_name: decl.type_name.clone(),
                })?;
        let addr = format!("{}:{}", decl.bind, decl.port);
        let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|source| {
            ServiceError::Bind {
                pop: pop.clone(),
                addr: addr.clone(),
                source,
            }
        })?;
        let local_addr = listener.local_addr().map_err(|source| ServiceError::Bind {
            pop: pop.clone(),
            addr,
            source,
        })?;
        let router = endpoint_type.router(&pop, Arc::clone(&platform));
        pending.push((pop, local_addr, listener, router));
    }

    let (stop, _) = watch::channel(false);
    let mut endpoints = Vec::new();
    let mut tasks = Vec::new();
    for (pop, addr, listener, router) in pending {
        let mut stopped = stop.subscribe();
        tasks.push(tokio::spawn(async move {
            let quiesce = async move {
                // Closed sender counts as a stop signal too.
                let _ = stopped.wait_for(|stop| *stop).await;
            };
            if let Err(err) = axum::serve(listener, router)
                .with_graceful_shutdown(quiesce)
                .await
            {
                eprintln!("endpoint on {addr} exited with error: {err}");
            }
        }));
        endpoints.push(BoundEndpoint { pop, addr });
    }

    Ok(ServiceHandle {
        endpoints,
        stop,
        tasks,
    })
}

/// Advances the platform clock in real time: every `period` of wall time the
/// virtual clock moves by `period` worth of seconds and usage is sampled.
/// Used by long-running servers; simulations drive [`PlatformState::tick`]
/// directly instead. Abort the returned handle to stop ticking.
pub fn spawn_wall_clock_ticker(platform: SharedPlatform, period: Duration) -> JoinHandle<()> {
    tokio::spawn(async move {
        let mut interval = tokio::time::interval(period);
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        // The first tick of an interval fires immediately; skip it so the
        // clock starts moving one full period after spawn.
        interval.tick().await;
        loop {
            interval.tick().await;
            let dt_s = period.as_secs_f64();
            // An error here means the platform is gone; stop quietly.
            if platform.lock().tick(dt_s).is_err() {
                break;
            }
        }
    })
}
