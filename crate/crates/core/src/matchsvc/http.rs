//! JSON-over-HTTP front end.
//!
//! ```text
//! GET    /pool                           card pool with hero eligibility
//! GET    /agents                         registered agent names
//! POST   /sessions                       CreateSession -> View
//! GET    /sessions/{id}/view?since=&wait_ms=   View, long-polling past `since`
//! POST   /sessions/{id}/act              {"action": id} -> View
//! GET    /sessions/{id}/replay           replay text
//! GET    /decks?owner=                   [SavedDeck]
//! POST   /decks                          SavedDeck -> SavedDeck
//! GET    /decks/{owner}/{name}           SavedDeck
//! DELETE /decks/{owner}/{name}
//! ```
//!
//! Errors come back as `{"error": text}`; illegal actions add `"legal_actions"`.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use super::{CreateSession, MatchService, SavedDeck, ServiceError};
use crate::engine::{ActionId, CardId, Hero};

/// Longest accepted long-poll wait.
const MAX_WAIT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActRequest {
    pub action: ActionId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub legal_actions: Option<Vec<ActionId>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolCard {
    pub id: CardId,
    pub name: String,
    pub cost: u8,
    pub attack: u8,
    pub health: u8,
    pub kind: String,
    pub max_copies: u8,
    pub heroes: Vec<Hero>,
}

#[derive(Debug, Deserialize)]
struct ViewQuery {
    since: Option<u64>,
    wait_ms: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct OwnerQuery {
    owner: String,
}

struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            ServiceError::UnknownSession(_) | ServiceError::UnknownDeck(_) | ServiceError::UnknownAgent(_) => {
                StatusCode::NOT_FOUND
            }
            ServiceError::Illegal { .. }
            | ServiceError::Terminal
            | ServiceError::NotYourTurn
            | ServiceError::DuplicateDeck(_) => StatusCode::CONFLICT,
            ServiceError::Deck(_) | ServiceError::Policy(_) | ServiceError::Engine(_) => StatusCode::BAD_REQUEST,
            ServiceError::AgentStuck | ServiceError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let legal_actions = match &self.0 {
            ServiceError::Illegal { legal, .. } => Some(legal.clone()),
            _ => None,
        };
        (status, Json(ErrorBody { error: self.0.to_string(), legal_actions })).into_response()
    }
}

type Svc = State<Arc<MatchService>>;

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(ServiceError::Io(std::io::Error::other(e.to_string()))))?
        .map_err(ApiError)
}

async fn pool(State(svc): Svc) -> Json<Vec<PoolCard>> {
    let cards = svc
        .engine()
        .pool()
        .cards()
        .iter()
        .map(|c| PoolCard {
            id: c.id,
            name: c.name.clone(),
            cost: c.cost,
            attack: c.attack,
            health: c.health,
            kind: format!("{:?}", c.kind).to_lowercase(),
            max_copies: c.max_copies,
            heroes: Hero::ALL.into_iter().filter(|&h| c.restriction.allows(h)).collect(),
        })
        .collect();
    Json(cards)
}

async fn agents(State(svc): Svc) -> Json<Vec<String>> {
    Json(svc.agent_names())
}

async fn create(State(svc): Svc, Json(req): Json<CreateSession>) -> Result<Response, ApiError> {
    let view = blocking(move || svc.create_session(&req)).await?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn view(State(svc): Svc, Path(id): Path<String>, Query(q): Query<ViewQuery>) -> Result<Response, ApiError> {
    let view = blocking(move || match q.since {
        Some(since) => svc.wait_view(&id, since, Duration::from_millis(q.wait_ms.unwrap_or(0)).min(MAX_WAIT)),
        None => svc.get_view(&id),
    })
    .await?;
    Ok(Json(view).into_response())
}

async fn act(State(svc): Svc, Path(id): Path<String>, Json(req): Json<ActRequest>) -> Result<Response, ApiError> {
    let view = blocking(move || svc.submit_action(&id, req.action)).await?;
    Ok(Json(view).into_response())
}

async fn replay(State(svc): Svc, Path(id): Path<String>) -> Result<Response, ApiError> {
    let r = svc.export_replay(&id)?;
    Ok(([("content-type", "text/plain; charset=utf-8")], r.to_text()).into_response())
}

async fn list_decks(State(svc): Svc, Query(q): Query<OwnerQuery>) -> Json<Vec<SavedDeck>> {
    Json(svc.list_decks(&q.owner))
}

async fn save_deck(State(svc): Svc, Json(deck): Json<SavedDeck>) -> Result<Response, ApiError> {
    let saved = svc.save_deck(deck)?;
    Ok((StatusCode::CREATED, Json(saved)).into_response())
}

async fn get_deck(State(svc): Svc, Path((owner, name)): Path<(String, String)>) -> Result<Response, ApiError> {
    Ok(Json(svc.get_deck(&owner, &name)?).into_response())
}

async fn delete_deck(State(svc): Svc, Path((owner, name)): Path<(String, String)>) -> Result<Response, ApiError> {
    svc.delete_deck(&owner, &name)?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

pub fn router(svc: Arc<MatchService>) -> Router {
    Router::new()
        .route("/pool", get(pool))
        .route("/agents", get(agents))
        .route("/sessions", post(create))
        .route("/sessions/{id}/view", get(view))
        .route("/sessions/{id}/act", post(act))
        .route("/sessions/{id}/replay", get(replay))
        .route("/decks", get(list_decks).post(save_deck))
        .route("/decks/{owner}/{name}", get(get_deck).delete(delete_deck))
        .with_state(svc)
}

/// Serve until the process is stopped.
pub async fn serve(svc: Arc<MatchService>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(svc)).await
}
