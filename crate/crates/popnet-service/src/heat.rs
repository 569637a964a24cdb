//! The built-in `heat-like` endpoint: stack- and instance-lifecycle REST
//! routes in the style of an orchestration API.
//!
//! Route map (every PoP's listener serves the same shape):
//!
//! | Method & path                 | Meaning                                   |
//! |-------------------------------|-------------------------------------------|
//! | `POST /stacks`                | create a stack on this PoP                |
//! | `GET /stacks`                 | list this PoP's stacks                    |
//! | `GET /stacks/{id}`            | read one stack                            |
//! | `DELETE /stacks/{id}`         | tear a stack down                         |
//! | `POST /instances`             | allocate a single instance on this PoP    |
//! | `GET /instances`              | list this PoP's instances                 |
//! | `GET /instances/{id}`         | read one instance                         |
//! | `DELETE /instances/{id}`      | release one instance                      |
//! | `GET /instances/{id}/stats`   | usage history and current limit           |
//! | `GET /pops`                   | every PoP's capacity ledger (global)      |
//! | `GET /platform/stats`         | platform-wide snapshot (global)           |
//! | `POST /chains`                | install a service chain (global)          |
//! | `GET /chains`                 | list chains (global)                      |
//! | `GET /chains/{id}`            | read one chain (global)                   |
//! | `DELETE /chains/{id}`         | remove a chain (global)                   |
//! | `GET /chains/{id}/traffic`    | walk a payload along a chain (global)     |
//!
//! Scoping rule: stack and instance routes answer only for resources hosted
//! on the listener's own PoP; everything else is a 404, indistinguishable
//! from a resource that never existed. Chains span PoPs by nature, so chain
//! routes — like the global read-outs — behave identically on every
//! listener.
//!
//! Status codes: 201 created, 200 read, 204 deleted, 404 unknown resource,
//! 409 admission rejection or chain conflict, 400 malformed request. Every
//! error body carries a machine-readable `reason` code plus a human-readable
//! `message`.

use std::collections::BTreeMap;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use popnet_core::error::Error as CoreError;
use popnet_core::ids::{ChainId, InstanceId, PopName, StackId};
use popnet_core::model::{AllocationResult, RejectReason};
use popnet_core::platform::DEFAULT_IMAGE;
use popnet_core::topology::EndpointDecl;
use popnet_core::{ComputeInstance, PathMetric, PopLedger, ResourceRequest, StackTemplate};

use crate::{EndpointType, SharedPlatform};

pub use popnet_core::topology::DEFAULT_ENDPOINT_TYPE;

/// The default endpoint type, named `heat-like` in topology documents.
pub struct HeatLike;

impl EndpointType for HeatLike {
    fn name(&self) -> &'static str {
        DEFAULT_ENDPOINT_TYPE
    }

    fn router(&self, pop: &PopName, platform: SharedPlatform) -> Router {
        router(pop.clone(), platform)
    }
}

/// Everything a handler needs: which PoP this listener fronts, and the
/// shared platform. Cloned per request by axum.
#[derive(Clone)]
struct PopContext {
    pop: PopName,
    platform: SharedPlatform,
}

fn router(pop: PopName, platform: SharedPlatform) -> Router {
    let ctx = PopContext { pop, platform };
    Router::new()
        .route("/stacks", get(list_stacks).post(create_stack))
        .route("/stacks/{id}", get(get_stack).delete(delete_stack))
        .route("/instances", get(list_instances).post(create_instance))
        .route(
            "/instances/{id}",
            get(get_instance).delete(delete_instance),
        )
        .route("/instances/{id}/stats", get(instance_stats))
        .route("/pops", get(list_pops))
        .route("/platform/stats", get(platform_stats))
        .route("/chains", get(list_chains).post(create_chain))
        .route("/chains/{id}", get(get_chain).delete(delete_chain))
        .route("/chains/{id}/traffic", get(chain_traffic))
        .with_state(ctx)
}

/// Body of `POST /instances`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocateRequest {
    pub cpu_cus: u64,
    #[serde(default)]
    pub memory_mb: u64,
    #[serde(default)]
    pub storage_gb: u64,
    /// Workload image; defaults to the platform's stress image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    /// CPU demand in [0, 1]; defaults to a fully busy workload.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand: Option<f64>,
}

/// Body of a successful `POST /instances`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AllocateResponse {
    pub instance: ComputeInstance,
    /// Limits of other instances this admission re-priced.
    pub updated_fractions: BTreeMap<InstanceId, f64>,
}

/// Body of `POST /chains`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainRequest {
    pub hops: Vec<InstanceId>,
    #[serde(default)]
    pub metric: PathMetric,
}

/// Query string of `GET /chains/{id}/traffic`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrafficQuery {
    pub mbits: f64,
}

/// One row of `GET /pops`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopSummary {
    pub name: PopName,
    pub model: String,
    pub instance_count: usize,
    pub ledger: PopLedger,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<EndpointDecl>,
}

/// Wire shape of every error response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    /// Machine-readable code (`cpu_exhausted`, `not_found`, ...).
    pub reason: String,
    pub message: String,
    /// For stack admission rejections: the resource that did not fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource: Option<String>,
}

/// A failed request: status code plus the machine-readable body.
#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, reason: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                reason: reason.to_owned(),
                message: message.into(),
                resource: None,
            },
        }
    }

    fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", what)
    }

    fn malformed(rejection: JsonRejection) -> Self {
        Self::new(
            StatusCode::BAD_REQUEST,
            "invalid_request",
            rejection.body_text(),
        )
    }

    fn bad_query(rejection: QueryRejection) -> Self {
        Self::new(
            StatusCode::BAD_REQUEST,
            "invalid_request",
            rejection.body_text(),
        )
    }

    /// An admission rejection. These are successful *decisions*, reported
    /// with a conflict status so clients can tell "would not fit" (409,
    /// retry elsewhere) from "does not exist" (404).
    fn rejection(reason: RejectReason, resource: Option<String>) -> Self {
        let status = match reason {
            RejectReason::UnknownPop => StatusCode::NOT_FOUND,
            _ => StatusCode::CONFLICT,
        };
        let message = match reason {
            RejectReason::CpuExhausted => "not enough free CPU compute units",
            RejectReason::MemoryExhausted => "not enough free memory",
            RejectReason::StorageExhausted => "not enough free storage",
            RejectReason::UnknownPop => "no such PoP",
        };
        Self {
            status,
            body: ErrorBody {
                reason: reason.code().to_owned(),
                message: message.to_owned(),
                resource,
            },
        }
    }
}

impl From<CoreError> for ApiError {
    fn from(err: CoreError) -> Self {
        let (status, reason) = match &err {
            CoreError::UnknownPop(_)
            | CoreError::UnknownInstance(_)
            | CoreError::UnknownChain(_)
            | CoreError::UnknownStack(_)
            | CoreError::UnknownNode(_) => (StatusCode::NOT_FOUND, "not_found"),
            CoreError::NoPath { .. } => (StatusCode::CONFLICT, "no_path"),
            CoreError::VlanExhausted => (StatusCode::CONFLICT, "vlan_exhausted"),
            CoreError::ChainConflict(_) => (StatusCode::CONFLICT, "chain_conflict"),
            CoreError::InvalidRequest(_) | CoreError::InvalidConfig(_) => {
                (StatusCode::BAD_REQUEST, "invalid_request")
            }
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, reason, err.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

// ---------------------------------------------------------------------------
// Stacks
// ---------------------------------------------------------------------------

async fn create_stack(
    State(ctx): State<PopContext>,
    payload: Result<Json<StackTemplate>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(template) = payload.map_err(ApiError::malformed)?;
    let outcome = ctx.platform.lock().create_stack(&ctx.pop, &template)?;
    match outcome {
        popnet_core::StackOutcome::Created(record) => {
            Ok((StatusCode::CREATED, Json(record)).into_response())
        }
        popnet_core::StackOutcome::Rejected { reason, resource } => {
            Err(ApiError::rejection(reason, Some(resource)))
        }
    }
}

async fn list_stacks(State(ctx): State<PopContext>) -> Response {
    let state = ctx.platform.lock();
    let stacks: Vec<_> = state.stacks_in(&ctx.pop).cloned().collect();
    Json(stacks).into_response()
}

async fn get_stack(State(ctx): State<PopContext>, Path(id): Path<StackId>) -> ApiResult<Response> {
    let state = ctx.platform.lock();
    let stack = state
        .stack(&id)
        .filter(|s| s.pop == ctx.pop)
        .ok_or_else(|| ApiError::not_found(format!("no stack `{id}` on this endpoint")))?;
    Ok(Json(stack.clone()).into_response())
}

async fn delete_stack(
    State(ctx): State<PopContext>,
    Path(id): Path<StackId>,
) -> ApiResult<StatusCode> {
    // The core treats a stack on a foreign PoP as unknown, which is exactly
    // the isolation contract of this endpoint.
    ctx.platform.lock().delete_stack(&ctx.pop, &id)?;
    Ok(StatusCode::NO_CONTENT)
}

// ---------------------------------------------------------------------------
// Instances
// ---------------------------------------------------------------------------

async fn create_instance(
    State(ctx): State<PopContext>,
    payload: Result<Json<AllocateRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(body) = payload.map_err(ApiError::malformed)?;
    let request = ResourceRequest {
        cpu_cus: body.cpu_cus,
        memory_mb: body.memory_mb,
        storage_gb: body.storage_gb,
    };
    let image = body.image.unwrap_or_else(|| DEFAULT_IMAGE.to_owned());
    let demand = body.demand.unwrap_or(1.0);
    let result = ctx.platform.lock().allocate(&ctx.pop, request, image, demand)?;
    match result {
        AllocationResult::Accepted { instance, outcome } => {
            let response = AllocateResponse {
                instance,
                updated_fractions: outcome.updated_fractions,
            };
            Ok((StatusCode::CREATED, Json(response)).into_response())
        }
        AllocationResult::Rejected { reason } => Err(ApiError::rejection(reason, None)),
    }
}

async fn list_instances(State(ctx): State<PopContext>) -> Response {
    let state = ctx.platform.lock();
    let instances: Vec<_> = state.instances_in(&ctx.pop).cloned().collect();
    Json(instances).into_response()
}

async fn get_instance(
    State(ctx): State<PopContext>,
    Path(id): Path<InstanceId>,
) -> ApiResult<Response> {
    let state = ctx.platform.lock();
    let instance = state
        .instance(&id)
        .filter(|i| i.pop == ctx.pop)
        .ok_or_else(|| ApiError::not_found(format!("no instance `{id}` on this endpoint")))?;
    Ok(Json(instance.clone()).into_response())
}

async fn delete_instance(
    State(ctx): State<PopContext>,
    Path(id): Path<InstanceId>,
) -> ApiResult<StatusCode> {
    let mut state = ctx.platform.lock();
    let owned = state.instance(&id).is_some_and(|i| i.pop == ctx.pop);
    if !owned {
        return Err(ApiError::not_found(format!(
            "no instance `{id}` on this endpoint"
        )));
    }
    state.release(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn instance_stats(
    State(ctx): State<PopContext>,
    Path(id): Path<InstanceId>,
) -> ApiResult<Response> {
    let state = ctx.platform.lock();
    let owned = state.instance(&id).is_some_and(|i| i.pop == ctx.pop);
    if !owned {
        return Err(ApiError::not_found(format!(
            "no instance `{id}` on this endpoint"
        )));
    }
    let stats = state.instance_stats(&id)?;
    Ok(Json(stats).into_response())
}

// ---------------------------------------------------------------------------
// Global read-outs and chains (identical on every listener)
// ---------------------------------------------------------------------------

async fn list_pops(State(ctx): State<PopContext>) -> Response {
    let state = ctx.platform.lock();
    let stats = state.platform_stats();
    let summaries: Vec<PopSummary> = stats
        .pops
        .into_iter()
        .map(|(name, pop_stats)| {
            let endpoint = state
                .topology()
                .pop(&name)
                .and_then(|info| info.endpoint.clone());
            PopSummary {
                name,
                model: pop_stats.model_kind,
                instance_count: pop_stats.instance_count,
                ledger: pop_stats.ledger,
                endpoint,
            }
        })
        .collect();
    Json(summaries).into_response()
}

async fn platform_stats(State(ctx): State<PopContext>) -> Response {
    Json(ctx.platform.lock().platform_stats()).into_response()
}

async fn create_chain(
    State(ctx): State<PopContext>,
    payload: Result<Json<ChainRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(body) = payload.map_err(ApiError::malformed)?;
    let chain = ctx.platform.lock().set_chain(&body.hops, body.metric)?;
    Ok((StatusCode::CREATED, Json(chain)).into_response())
}

async fn list_chains(State(ctx): State<PopContext>) -> Response {
    let state = ctx.platform.lock();
    let chains: Vec<_> = state.chains().cloned().collect();
    Json(chains).into_response()
}

async fn get_chain(State(ctx): State<PopContext>, Path(id): Path<ChainId>) -> ApiResult<Response> {
    let state = ctx.platform.lock();
    let chain = state
        .chain(&id)
        .ok_or_else(|| ApiError::not_found(format!("no chain `{id}`")))?;
    Ok(Json(chain.clone()).into_response())
}

async fn delete_chain(
    State(ctx): State<PopContext>,
    Path(id): Path<ChainId>,
) -> ApiResult<StatusCode> {
    ctx.platform.lock().remove_chain(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn chain_traffic(
    State(ctx): State<PopContext>,
    Path(id): Path<ChainId>,
    query: Result<Query<TrafficQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(params) = query.map_err(ApiError::bad_query)?;
    let report = ctx.platform.lock().simulate_traffic(&id, params.mbits)?;
    Ok(Json(report).into_response())
}
