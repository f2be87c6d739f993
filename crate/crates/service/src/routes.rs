use std::net::{IpAddr, SocketAddr};
use std::sync::Arc;

use axum::extract::rejection::QueryRejection;
use axum::extract::{ConnectInfo, FromRequestParts, Query, Request, State};
use axum::http::header::{ACCEPT, AUTHORIZATION, RETRY_AFTER};
use axum::http::request::Parts;
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use helios_core::{Channel, Counts, RgbSetting};
use serde::Serialize;

use crate::html;
use crate::log::Endpoint;
use crate::state::{AppState, MeasureError};

type Shared = Arc<AppState>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    retry_after: Option<u64>,
    html: bool,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            retry_after: None,
            html: false,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn with_html(mut self, html: bool) -> Self {
        self.html = html;
        self
    }

    fn from_measure(e: MeasureError, state: &AppState) -> Self {
        match e {
            MeasureError::Busy(_) => {
                let secs = state.queue_timeout().as_secs_f64().ceil().max(1.0) as u64;
                ApiError {
                    retry_after: Some(secs),
                    ..Self::new(StatusCode::SERVICE_UNAVAILABLE, e.to_string())
                }
            }
            MeasureError::Log(e) => {
                tracing::error!("log append failed: {e}");
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
            }
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut resp = if self.html {
            (self.status, Html(html::error(self.status.as_u16(), &self.message))).into_response()
        } else {
            (self.status, Json(ErrorBody { error: &self.message })).into_response()
        };
        if let Some(secs) = self.retry_after {
            resp.headers_mut().insert(RETRY_AFTER, HeaderValue::from(secs));
        }
        resp
    }
}

/// Hashed identity of the caller.
pub struct ClientId(pub String);

impl FromRequestParts<Shared> for ClientId {
    type Rejection = std::convert::Infallible;

    async fn from_request_parts(parts: &mut Parts, state: &Shared) -> Result<Self, Self::Rejection> {
        let forwarded = state
            .trust_forwarded_for
            .then(|| parts.headers.get("x-forwarded-for"))
            .flatten()
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.split(',').next())
            .and_then(|v| v.trim().parse::<IpAddr>().ok());
        let peer = parts.extensions.get::<ConnectInfo<SocketAddr>>().map(|c| c.0.ip());
        Ok(ClientId(state.client_id(forwarded.or(peer))))
    }
}

type Params = Result<Query<Vec<(String, String)>>, QueryRejection>;

fn parse_level(params: &[(String, String)], key: &str) -> Result<f64, ApiError> {
    match params.iter().find(|(k, _)| k == key) {
        None => Ok(0.0),
        Some((_, raw)) => raw
            .trim()
            .parse::<f64>()
            .map_err(|_| ApiError::bad_request(format!("{key}: `{raw}` is not a number"))),
    }
}

fn parse_setting(params: Params, keys: &[&str]) -> Result<(RgbSetting, bool), ApiError> {
    let Query(params) = params.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let mut levels = [0.0; 3];
    for (i, key) in ["R", "G", "B"].iter().enumerate() {
        if keys.contains(key) {
            levels[i] = parse_level(&params, key)?;
        }
    }
    let any = params.iter().any(|(k, _)| keys.contains(&k.as_str()));
    Ok((RgbSetting::from_array(levels), any))
}

fn wants_html(headers: &HeaderMap) -> bool {
    headers
        .get_all(ACCEPT)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .any(|v| v.contains("text/html"))
}

#[derive(Serialize)]
pub struct ApiBody {
    #[serde(rename = "in")]
    pub input: RgbSetting,
    pub out: Counts,
}

#[derive(Serialize)]
struct GmIn {
    #[serde(rename = "G")]
    g: f64,
}

#[derive(Serialize)]
struct GmOut {
    #[serde(rename = "515nm")]
    w515: u16,
}

#[derive(Serialize)]
struct GmBody {
    #[serde(rename = "in")]
    input: GmIn,
    out: GmOut,
}

async fn api(State(state): State<Shared>, ClientId(id): ClientId, params: Params) -> Result<Json<ApiBody>, ApiError> {
    let (setting, _) = parse_setting(params, &["R", "G", "B"])?;
    let reading = state
        .measure(setting, Endpoint::Api, id)
        .await
        .map_err(|e| ApiError::from_measure(e, &state))?;
    Ok(Json(ApiBody {
        input: setting,
        out: reading.counts,
    }))
}

async fn gm(
    State(state): State<Shared>,
    ClientId(id): ClientId,
    headers: HeaderMap,
    params: Params,
) -> Result<Response, ApiError> {
    let html = wants_html(&headers);
    let (setting, any) = parse_setting(params, &["G"]).map_err(|e| e.with_html(html))?;
    if html && !any {
        return Ok(Html(html::green_machine(setting, None)).into_response());
    }
    let reading = state
        .measure(setting, Endpoint::Gm, id)
        .await
        .map_err(|e| ApiError::from_measure(e, &state).with_html(html))?;
    let count = reading.count(Channel::W515);
    if html {
        return Ok(Html(html::green_machine(setting, Some(count))).into_response());
    }
    Ok(Json(GmBody {
        input: GmIn { g: setting.g() },
        out: GmOut { w515: count },
    })
    .into_response())
}

async fn rgb(
    State(state): State<Shared>,
    ClientId(id): ClientId,
    headers: HeaderMap,
    params: Params,
) -> Result<Response, ApiError> {
    let html = wants_html(&headers);
    let (setting, any) = parse_setting(params, &["R", "G", "B"]).map_err(|e| e.with_html(html))?;
    if html && !any {
        return Ok(Html(html::rgb_machine(setting, None)).into_response());
    }
    let reading = state
        .measure(setting, Endpoint::Rgb, id)
        .await
        .map_err(|e| ApiError::from_measure(e, &state).with_html(html))?;
    if html {
        return Ok(Html(html::rgb_machine(setting, Some(&reading.counts))).into_response());
    }
    Ok(Json(ApiBody {
        input: setting,
        out: reading.counts,
    })
    .into_response())
}

async fn stats(State(state): State<Shared>) -> Result<Response, ApiError> {
    let stats = state
        .reader()
        .stats()
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(stats).into_response())
}

async fn index() -> Html<String> {
    Html(html::index())
}

async fn require_token(State(state): State<Shared>, req: Request, next: Next) -> Response {
    let Some(token) = state.token.as_deref() else {
        return next.run(req).await;
    };
    let bearer = req
        .headers()
        .get(AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|t| t == token);
    let query = req
        .uri()
        .query()
        .unwrap_or("")
        .split('&')
        .any(|kv| kv.strip_prefix("token=") == Some(token));
    if bearer || query {
        next.run(req).await
    } else {
        ApiError::new(StatusCode::UNAUTHORIZED, "missing or invalid token").into_response()
    }
}

/// The HTTP surface. Without a static directory `/` serves a link page.
pub fn router(state: Shared, static_dir: Option<&std::path::Path>) -> Router {
    let api = Router::new()
        .route("/api", get(api))
        .route("/gm", get(gm))
        .route("/rgb", get(rgb))
        .route("/stats", get(stats))
        .route_layer(middleware::from_fn_with_state(Arc::clone(&state), require_token));
    let app = match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api.route("/", get(index)),
    };
    app.with_state(state)
}
