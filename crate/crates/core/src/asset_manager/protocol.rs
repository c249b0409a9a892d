//! Line-delimited JSON front end for the manager.
//!
//! ```text
//! {"verb":"GRANT","owner":"o1","user":"u1","identity":"key-000001","scope":["MetadataRead"]}
//! {"verb":"QUERY","user":"u1","identity":"key-000001","request":"Metadata"}
//! ```
//!
//! Each request line yields one response line with a `status` of `ok`,
//! `denied` or `error` and a verb-specific `payload`.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{AssetManager, ManagerError, QueryResult, Request, Scope};
use crate::Tick;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verb", rename_all = "UPPERCASE")]
pub enum WireRequest {
    Grant {
        owner: String,
        user: String,
        identity: String,
        scope: Vec<Scope>,
    },
    Revoke {
        owner: String,
        user: String,
        identity: String,
    },
    Query {
        user: String,
        identity: String,
        request: Request,
    },
    Transfer {
        owner: String,
        new_owner: String,
        identity: String,
        #[serde(default)]
        node: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WireStatus {
    Ok,
    Denied,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub status: WireStatus,
    pub payload: Value,
}

impl WireResponse {
    fn ok(payload: Value) -> Self {
        WireResponse {
            status: WireStatus::Ok,
            payload,
        }
    }

    fn error(e: impl std::fmt::Display) -> Self {
        WireResponse {
            status: WireStatus::Error,
            payload: json!({ "error": e.to_string() }),
        }
    }
}

fn execute(m: &mut AssetManager, req: WireRequest, now: Tick) -> Result<WireResponse, ManagerError> {
    Ok(match req {
        WireRequest::Grant {
            owner,
            user,
            identity,
            scope,
        } => {
            let g = m.grant(&owner, &user, &identity, scope, now)?;
            WireResponse::ok(serde_json::to_value(g).expect("grant serializes"))
        }
        WireRequest::Revoke { owner, user, identity } => {
            m.revoke(&owner, &user, &identity, now)?;
            WireResponse::ok(json!({ "user": user, "identity": identity }))
        }
        WireRequest::Query {
            user,
            identity,
            request,
        } => match m.query(&user, &identity, request, now)? {
            QueryResult::Sequence(s) => WireResponse::ok(json!({
                "identity": s.identity,
                "proxy_locator": s.proxy_locator,
                "sequence_digest": s.sequence_digest.to_hex(),
                "events": s.bundle.as_ref().map(|b| b.events().to_vec()),
                "current_state": s.bundle.as_ref().map(|b| b.current_state().clone()),
            })),
            QueryResult::ProxyHandle(h) => WireResponse::ok(serde_json::to_value(h).expect("handle serializes")),
            QueryResult::Denied(r) => WireResponse {
                status: WireStatus::Denied,
                payload: json!({ "reason": r.to_string() }),
            },
        },
        WireRequest::Transfer {
            owner,
            new_owner,
            identity,
            node,
        } => {
            let node = node.unwrap_or(m.serving);
            let tx = m.transfer(&owner, &new_owner, &identity, node, now)?;
            WireResponse::ok(json!({ "tx_id": tx.tx_id.to_hex(), "node": node }))
        }
    })
}

/// Handles one request line and returns the response line (without newline).
pub fn handle_line(m: &mut AssetManager, line: &str, now: Tick) -> String {
    let resp = match serde_json::from_str::<WireRequest>(line) {
        Err(e) => WireResponse::error(format!("malformed request: {e}")),
        Ok(req) => execute(m, req, now).unwrap_or_else(WireResponse::error),
    };
    serde_json::to_string(&resp).expect("response serializes")
}

/// Handles every non-blank line of `input`.
pub fn serve(m: &mut AssetManager, input: &str, now: Tick) -> String {
    let mut out = String::new();
    for line in input.lines().filter(|l| !l.trim().is_empty()) {
        out.push_str(&handle_line(m, line, now));
        out.push('\n');
    }
    out
}
