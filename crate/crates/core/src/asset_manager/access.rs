use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scope {
    IdentityRead,
    MetadataRead,
    ProxyStream,
}

impl Scope {
    pub const ALL: [Scope; 3] = [Scope::IdentityRead, Scope::MetadataRead, Scope::ProxyStream];
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Scope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scope::ALL
            .into_iter()
            .find(|x| x.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown scope `{s}`"))
    }
}

/// What a user asks the manager for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Request {
    Identity,
    Metadata,
    ProxyStream,
}

impl Request {
    pub const ALL: [Request; 3] = [Request::Identity, Request::Metadata, Request::ProxyStream];

    /// Scopes that each, on their own, authorize this request.
    ///
    /// | request     | authorized by                  |
    /// |-------------|--------------------------------|
    /// | Identity    | IdentityRead or MetadataRead   |
    /// | Metadata    | MetadataRead                   |
    /// | ProxyStream | ProxyStream                    |
    pub fn satisfied_by(self) -> &'static [Scope] {
        match self {
            Request::Identity => &[Scope::IdentityRead, Scope::MetadataRead],
            Request::Metadata => &[Scope::MetadataRead],
            Request::ProxyStream => &[Scope::ProxyStream],
        }
    }

    pub fn allowed(self, scope: &BTreeSet<Scope>) -> bool {
        self.satisfied_by().iter().any(|s| scope.contains(s))
    }
}

impl fmt::Display for Request {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Request {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Request::ALL
            .into_iter()
            .find(|x| x.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown request `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessGrant {
    pub owner_id: String,
    pub user_id: String,
    pub identity_id: String,
    pub scope: BTreeSet<Scope>,
    pub granted_at: Tick,
    pub revoked: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DenyReason {
    InsufficientScope { request: Request },
    NoGrant,
    GrantRevoked,
    /// The grant was issued by someone who no longer owns the asset.
    StaleGrant,
    /// The asset has no confirmed owner yet.
    Unconfirmed,
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DenyReason::InsufficientScope { request } => write!(f, "insufficient scope for {request}"),
            DenyReason::NoGrant => f.write_str("no grant"),
            DenyReason::GrantRevoked => f.write_str("grant revoked"),
            DenyReason::StaleGrant => f.write_str("grant issued by a former owner"),
            DenyReason::Unconfirmed => f.write_str("ownership not confirmed"),
        }
    }
}

/// Decides a request from the caller's relation to the asset. `owner` is the
/// confirmed owner, if any; `grant` the caller's grant, if any.
pub fn decide(
    user_id: &str,
    owner: Option<&str>,
    grant: Option<&AccessGrant>,
    request: Request,
) -> Result<(), DenyReason> {
    let Some(owner) = owner else {
        return Err(DenyReason::Unconfirmed);
    };
    if owner == user_id {
        return Ok(());
    }
    let grant = grant.ok_or(DenyReason::NoGrant)?;
    if grant.revoked {
        return Err(DenyReason::GrantRevoked);
    }
    if grant.owner_id != owner {
        return Err(DenyReason::StaleGrant);
    }
    if request.allowed(&grant.scope) {
        Ok(())
    } else {
        Err(DenyReason::InsufficientScope { request })
    }
}
