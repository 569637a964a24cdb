//! Blocking HTTP client for the management endpoints, plus the CLI's
//! error-to-exit-code split.
//!
//! Every operational verb goes through the endpoints — the CLI never reaches
//! into platform internals. Cross-PoP discovery works the same way: `/pops`
//! (served identically everywhere) names each PoP's listener, and verbs that
//! take a bare instance id probe each listener until one owns it.

use std::time::Duration;

use reqwest::blocking::{Client as HttpClient, RequestBuilder, Response};
use reqwest::StatusCode;
use serde::Serialize;

use popnet_core::topology::EndpointDecl;
use popnet_service::{ErrorBody, PopSummary};

/// Why a command failed, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Exit 1 — the platform understood the request and refused it:
    /// admission rejections, unknown ids, chain conflicts.
    Domain(String),
    /// Exit 2 — the request never reached a decision: bad arguments,
    /// malformed files, or no platform listening.
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Usage(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Domain(message) | CliError::Usage(message) => message,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Maps a core error onto an exit code: malformed inputs are usage errors,
/// everything the platform decided against is a domain error.
pub fn core_error(err: popnet_core::Error) -> CliError {
    use popnet_core::Error;
    match &err {
        Error::InvalidConfig(_)
        | Error::InvalidRequest(_)
        | Error::TopologyParse(_)
        | Error::TopologyInvalid(_)
        | Error::ScenarioParse(_)
        | Error::Scenario { .. }
        | Error::UnknownModel(_)
        | Error::DuplicateRegistration(_)
        | Error::Io(_) => CliError::Usage(err.to_string()),
        _ => CliError::Domain(err.to_string()),
    }
}

/// The dialable URL of a declared endpoint. Wildcard binds are dialled via
/// loopback.
pub fn endpoint_url(decl: &EndpointDecl) -> String {
    let host = match decl.bind.as_str() {
        "0.0.0.0" | "::" => "127.0.0.1",
        other => other,
    };
    format!("http://{host}:{}", decl.port)
}

pub struct Client {
    http: HttpClient,
    base: String,
}

impl Client {
    /// A client rooted at the base endpoint (any PoP's listener works).
    pub fn new(base: &str) -> Self {
        let http = HttpClient::builder()
            .timeout(Duration::from_secs(10))
            .build()
            .expect("default client configuration is valid");
        Self {
            http,
            base: base.trim_end_matches('/').to_owned(),
        }
    }

    pub fn base_url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub fn get(&self, url: &str) -> CliResult<Response> {
        self.send(self.http.get(url))
    }

    /// GET that treats 404 as "not here" instead of an error, for probing
    /// listeners when only an id is known.
    pub fn try_get(&self, url: &str) -> CliResult<Option<Response>> {
        let response = self.http.get(url).send().map_err(connect_error)?;
        if response.status() == StatusCode::NOT_FOUND {
            return Ok(None);
        }
        check(response).map(Some)
    }

    /// DELETE with the same probing semantics as [`Client::try_get`].
    pub fn try_delete(&self, url: &str) -> CliResult<Option<Response>> {
        let response = self.http.delete(url).send().map_err(connect_error)?;
        if response.status() == StatusCode::NOT_FOUND {
            return Ok(None);
        }
        check(response).map(Some)
    }

    pub fn delete(&self, url: &str) -> CliResult<Response> {
        self.send(self.http.delete(url))
    }

    pub fn post_json<T: Serialize>(&self, url: &str, body: &T) -> CliResult<Response> {
        self.send(self.http.post(url).json(body))
    }

    fn send(&self, request: RequestBuilder) -> CliResult<Response> {
        let response = request.send().map_err(connect_error)?;
        check(response)
    }

    /// Every PoP's summary, fetched from the base endpoint.
    pub fn pops(&self) -> CliResult<Vec<PopSummary>> {
        let response = self.get(&self.base_url("/pops"))?;
        response.json().map_err(garbled)
    }

    /// The listener URL of one named PoP.
    pub fn endpoint_of(&self, pops: &[PopSummary], pop: &str) -> CliResult<String> {
        let summary = pops
            .iter()
            .find(|p| p.name.as_str() == pop)
            .ok_or_else(|| CliError::Domain(format!("unknown PoP `{pop}`")))?;
        let decl = summary
            .endpoint
            .as_ref()
            .ok_or_else(|| CliError::Domain(format!("PoP `{pop}` declares no endpoint")))?;
        Ok(endpoint_url(decl))
    }

    /// URLs of every PoP's listener, in PoP name order.
    pub fn all_endpoints(&self, pops: &[PopSummary]) -> Vec<(String, String)> {
        pops.iter()
            .filter_map(|p| {
                let decl = p.endpoint.as_ref()?;
                Some((p.name.as_str().to_owned(), endpoint_url(decl)))
            })
            .collect()
    }
}

fn connect_error(err: reqwest::Error) -> CliError {
    CliError::Usage(format!(
        "cannot reach the platform ({err}); start one with `popnet up --topology ...`"
    ))
}

fn garbled(err: reqwest::Error) -> CliError {
    CliError::Usage(format!("malformed response from the platform: {err}"))
}

/// Turns error statuses into [`CliError`], preserving the machine-readable
/// reason code the endpoint sent.
fn check(response: Response) -> CliResult<Response> {
    let status = response.status();
    if status.is_success() {
        return Ok(response);
    }
    let body: ErrorBody = response.json().unwrap_or_else(|_| ErrorBody {
        reason: "unknown".to_owned(),
        message: format!("endpoint answered {status}"),
        resource: None,
    });
    let mut message = format!("{}: {}", body.reason, body.message);
    if let Some(resource) = &body.resource {
        message.push_str(&format!(" (resource `{resource}`)"));
    }
    if status == StatusCode::BAD_REQUEST {
        Err(CliError::Usage(message))
    } else {
        Err(CliError::Domain(message))
    }
}
