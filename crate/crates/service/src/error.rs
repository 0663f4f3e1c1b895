use promptsteer_core::analytics::AnalyticsError;
use promptsteer_core::genetics::GeneticsError;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("session `{0}` not found")]
    SessionNotFound(String),
    #[error("session `{0}` already exists")]
    SessionExists(String),
    #[error("image `{0}` not found")]
    ImageNotFound(String),
    #[error("no route for `{0}`")]
    RouteNotFound(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    UnknownIndividual(String),
    #[error("an evolve step is already running for this session")]
    EvolveInProgress,
    #[error("ballot targets generation {submitted} but the session is at {current}")]
    StaleGeneration { submitted: u64, current: u64 },
    #[error("no completed iteration to freeze yet")]
    NoIterations,
    #[error("backend unhealthy: {0}")]
    BackendUnhealthy(String),
    #[error("render failed for `{individual}`: {reason}")]
    Render { individual: String, reason: String },
    #[error("storage: {0}")]
    Storage(String),
}

impl ServiceError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::SessionNotFound(_) => "session_not_found",
            ServiceError::SessionExists(_) => "session_exists",
            ServiceError::ImageNotFound(_) => "image_not_found",
            ServiceError::RouteNotFound(_) => "route_not_found",
            ServiceError::Validation(_) => "invalid_request",
            ServiceError::UnknownIndividual(_) => "unknown_individual",
            ServiceError::EvolveInProgress => "evolve_in_progress",
            ServiceError::StaleGeneration { .. } => "stale_generation",
            ServiceError::NoIterations => "no_iterations",
            ServiceError::BackendUnhealthy(_) => "backend_unhealthy",
            ServiceError::Render { .. } => "render_failed",
            ServiceError::Storage(_) => "storage_failure",
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            ServiceError::SessionNotFound(_)
            | ServiceError::ImageNotFound(_)
            | ServiceError::RouteNotFound(_) => 404,
            ServiceError::Validation(_) => 400,
            ServiceError::UnknownIndividual(_) | ServiceError::NoIterations => 422,
            ServiceError::SessionExists(_)
            | ServiceError::EvolveInProgress
            | ServiceError::StaleGeneration { .. } => 409,
            ServiceError::BackendUnhealthy(_) => 503,
            ServiceError::Render { .. } => 502,
            ServiceError::Storage(_) => 500,
        }
    }

    pub fn problem(&self) -> Problem {
        Problem {
            kind: format!("urn:promptsteer:problem:{}", self.code()),
            title: self.code().replace('_', " "),
            status: self.status(),
            detail: self.to_string(),
            code: self.code().to_string(),
        }
    }
}

/// Problem-details body (`application/problem+json`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct Problem {
    #[serde(rename = "type")]
    pub kind: String,
    pub title: String,
    pub status: u16,
    pub detail: String,
    pub code: String,
}

impl From<AnalyticsError> for ServiceError {
    fn from(e: AnalyticsError) -> Self {
        match e {
            AnalyticsError::NotFound(id) => ServiceError::SessionNotFound(id),
            AnalyticsError::InvalidSessionId(id) => {
                ServiceError::Validation(format!("invalid session id `{id}`"))
            }
            other => ServiceError::Storage(other.to_string()),
        }
    }
}

impl From<GeneticsError> for ServiceError {
    fn from(e: GeneticsError) -> Self {
        match e {
            GeneticsError::UnknownIndividual(_) => ServiceError::UnknownIndividual(e.to_string()),
            GeneticsError::NoIterations => ServiceError::NoIterations,
            other => ServiceError::Validation(other.to_string()),
        }
    }
}
