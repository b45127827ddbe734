//! Session-scoped token vault with boundary-gated restoration and an
//! append-only audit log.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use once_cell::sync::Lazy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::category::PrivacyCategory;
use crate::error::{Error, Result};

static TOKEN_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"\[TOKEN_([0-9a-f]+)\]").unwrap());

pub const TOKEN_HEX_LEN: usize = 5;

/// Pipeline boundary where content is released or restored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Boundary {
    Ingress,
    Retrieval,
    Memory,
    Planning,
    ToolExec,
    Logging,
}

impl Boundary {
    pub const ALL: [Boundary; 6] = [
        Boundary::Ingress,
        Boundary::Retrieval,
        Boundary::Memory,
        Boundary::Planning,
        Boundary::ToolExec,
        Boundary::Logging,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Boundary::Ingress => "INGRESS",
            Boundary::Retrieval => "RETRIEVAL",
            Boundary::Memory => "MEMORY",
            Boundary::Planning => "PLANNING",
            Boundary::ToolExec => "TOOL_EXEC",
            Boundary::Logging => "LOGGING",
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RestorationPolicy {
    None,
    Late,
    Early,
}

impl RestorationPolicy {
    pub const ALL: [RestorationPolicy; 3] =
        [RestorationPolicy::None, RestorationPolicy::Late, RestorationPolicy::Early];

    pub fn as_str(self) -> &'static str {
        match self {
            RestorationPolicy::None => "NONE",
            RestorationPolicy::Late => "LATE",
            RestorationPolicy::Early => "EARLY",
        }
    }

    pub fn allows(self, b: Boundary) -> bool {
        match self {
            RestorationPolicy::None => false,
            RestorationPolicy::Late => b == Boundary::ToolExec,
            RestorationPolicy::Early => {
                matches!(b, Boundary::Memory | Boundary::Planning | Boundary::ToolExec)
            }
        }
    }
}

impl fmt::Display for RestorationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RestorationPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RestorationPolicy::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown restoration policy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SessionId(pub u64);

/// Opaque secret issued with a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Credential(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorizationContext {
    pub boundary: Boundary,
    pub session: SessionId,
    pub credential: Credential,
    pub policy: RestorationPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AuditOutcome {
    Stored,
    Restored,
    Denied,
    Expired,
    Leaked,
}

impl AuditOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            AuditOutcome::Stored => "STORED",
            AuditOutcome::Restored => "RESTORED",
            AuditOutcome::Denied => "DENIED",
            AuditOutcome::Expired => "EXPIRED",
            AuditOutcome::Leaked => "LEAKED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub tick: u64,
    pub session: u64,
    pub token: String,
    pub boundary: Option<Boundary>,
    pub outcome: AuditOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VaultEntry {
    pub token_id: String,
    pub original: String,
    pub category: PrivacyCategory,
    pub session: SessionId,
    pub created_tick: u64,
}

pub fn token_text(id: &str) -> String {
    format!("[TOKEN_{id}]")
}

/// Token occurrences in `text` as `(char start, char end, id)`.
pub fn find_tokens(text: &str) -> Vec<(usize, usize, String)> {
    let idx = crate::text::CharIndex::new(text);
    TOKEN_RE
        .captures_iter(text)
        .map(|c| {
            let m = c.get(0).unwrap();
            (idx.char_of(m.start()), idx.char_of(m.end()), c[1].to_string())
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Vault {
    entries: HashMap<String, VaultEntry>,
    by_value: HashMap<(SessionId, PrivacyCategory, String), String>,
    sessions: BTreeMap<SessionId, (bool, Credential)>,
    seed: u64,
    audit: Vec<AuditEvent>,
    rng: ChaCha8Rng,
    tick: u64,
    next_session: u64,
    hex_len: usize,
}

impl Vault {
    pub fn new(seed: u64) -> Self {
        Self::with_token_len(seed, TOKEN_HEX_LEN)
    }

    /// Vault whose token ids are `hex_len` hex digits long.
    pub fn with_token_len(seed: u64, hex_len: usize) -> Self {
        Vault {
            entries: HashMap::new(),
            by_value: HashMap::new(),
            sessions: BTreeMap::new(),
            seed,
            audit: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            tick: 0,
            next_session: 1,
            hex_len,
        }
    }

    pub fn open_session(&mut self) -> SessionId {
        let id = SessionId(self.next_session);
        self.next_session += 1;
        let cred = Credential(crate::benchgen::mix(self.seed, 0x5E55, id.0));
        self.sessions.insert(id, (true, cred));
        id
    }

    /// The credential issued to `session`, if the session exists.
    pub fn credential(&self, session: SessionId) -> Option<Credential> {
        self.sessions.get(&session).map(|s| s.1)
    }

    /// Authorization context carrying the session's own credential.
    pub fn context(&self, boundary: Boundary, session: SessionId, policy: RestorationPolicy) -> AuthorizationContext {
        AuthorizationContext {
            boundary,
            session,
            credential: self.credential(session).unwrap_or(Credential(0)),
            policy,
        }
    }

    fn log(&mut self, session: SessionId, token: &str, boundary: Option<Boundary>, outcome: AuditOutcome) {
        self.tick += 1;
        self.audit.push(AuditEvent {
            tick: self.tick,
            session: session.0,
            token: token.to_string(),
            boundary,
            outcome,
        });
    }

    fn is_active(&self, s: SessionId) -> bool {
        self.sessions.get(&s).map(|x| x.0).unwrap_or(false)
    }

    fn namespace(&self) -> u64 {
        16u64.saturating_pow(self.hex_len as u32)
    }

    /// Stores `original` and returns its token id. Repeated values in one
    /// session share a token.
    pub fn store(&mut self, original: &str, category: PrivacyCategory, session: SessionId) -> Result<String> {
        if !self.is_active(session) {
            return Err(Error::UnknownSession(session.0));
        }
        let key = (session, category, original.to_string());
        if let Some(t) = self.by_value.get(&key) {
            return Ok(t.clone());
        }
        if self.entries.len() as u64 >= self.namespace() {
            return Err(Error::NamespaceExhausted);
        }
        let id = loop {
            let v: u64 = self.rng.gen_range(0..self.namespace());
            let id = format!("{:0width$x}", v, width = self.hex_len);
            if !self.entries.contains_key(&id) {
                break id;
            }
        };
        self.entries.insert(
            id.clone(),
            VaultEntry {
                token_id: id.clone(),
                original: original.to_string(),
                category,
                session,
                created_tick: self.tick + 1,
            },
        );
        self.by_value.insert(key, id.clone());
        self.log(session, &id, None, AuditOutcome::Stored);
        Ok(id)
    }

    pub fn authorize(&self, ctx: &AuthorizationContext) -> bool {
        ctx.policy.allows(ctx.boundary)
            && self.is_active(ctx.session)
            && self.credential(ctx.session) == Some(ctx.credential)
    }

    /// Appends a LEAKED event observed by the pipeline simulator. `label`
    /// names the exposed span and never carries its value.
    pub fn record_leak(&mut self, session: SessionId, label: &str, boundary: Boundary) {
        self.log(session, label, Some(boundary), AuditOutcome::Leaked);
    }

    pub fn entry(&self, id: &str) -> Option<&VaultEntry> {
        self.entries.get(id)
    }

    /// Replaces authorized token occurrences with their originals. Every
    /// occurrence produces exactly one RESTORED or DENIED event.
    pub fn restore_entities(&mut self, text: &str, ctx: &AuthorizationContext) -> String {
        self.restore_traced(text, ctx).0
    }

    /// Like `restore_entities`, also returning each occurrence's token id
    /// and whether it was restored.
    pub fn restore_traced(&mut self, text: &str, ctx: &AuthorizationContext) -> (String, Vec<(String, bool)>) {
        let allowed = self.authorize(ctx);
        let mut edits = Vec::new();
        let mut outcomes = Vec::new();
        for (start, end, id) in find_tokens(text) {
            let original = self
                .entries
                .get(&id)
                .filter(|e| allowed && e.session == ctx.session)
                .map(|e| e.original.clone());
            match original {
                Some(o) => {
                    self.log(ctx.session, &id, Some(ctx.boundary), AuditOutcome::Restored);
                    edits.push((start, end, o));
                    outcomes.push((id, true));
                }
                None => {
                    self.log(ctx.session, &id, Some(ctx.boundary), AuditOutcome::Denied);
                    outcomes.push((id, false));
                }
            }
        }
        let out = crate::text::apply_edits(text, &edits).expect("token matches are disjoint");
        (out, outcomes)
    }

    /// Destroys all mappings of `session`. Later restores are denied.
    pub fn expire_session(&mut self, session: SessionId) -> Result<usize> {
        if !self.sessions.contains_key(&session) {
            return Err(Error::UnknownSession(session.0));
        }
        if let Some(st) = self.sessions.get_mut(&session) {
            st.0 = false;
        }
        let mut ids: Vec<String> = self
            .entries
            .values()
            .filter(|e| e.session == session)
            .map(|e| e.token_id.clone())
            .collect();
        ids.sort_by_key(|id| self.entries[id].created_tick);
        for id in &ids {
            self.entries.remove(id);
            self.log(session, id, None, AuditOutcome::Expired);
        }
        self.by_value.retain(|k, _| k.0 != session);
        Ok(ids.len())
    }

    pub fn audit(&self) -> &[AuditEvent] {
        &self.audit
    }

    pub fn live_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn outcome_count(&self, outcome: AuditOutcome) -> usize {
        self.audit.iter().filter(|e| e.outcome == outcome).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn ctx(v: &Vault, b: Boundary, s: SessionId, p: RestorationPolicy) -> AuthorizationContext {
        v.context(b, s, p)
    }

    #[test]
    fn store_issues_five_hex_digits() {
        let mut v = Vault::new(17);
        let s = v.open_session();
        let id = v.store("NZ3812745", PrivacyCategory::NationalId, s).unwrap();
        assert_eq!(id.len(), 5);
        assert!(id.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
        assert_eq!(v.audit()[0].outcome, AuditOutcome::Stored);
    }

    #[test]
    fn repeated_value_reuses_token() {
        let mut v = Vault::new(1);
        let s = v.open_session();
        let a = v.store("x", PrivacyCategory::Account, s).unwrap();
        let b = v.store("x", PrivacyCategory::Account, s).unwrap();
        assert_eq!(a, b);
        assert_eq!(v.outcome_count(AuditOutcome::Stored), 1);
    }

    #[test]
    fn policy_matrix() {
        let mut v = Vault::new(1);
        let s = v.open_session();
        use Boundary::*;
        use RestorationPolicy::*;
        for b in Boundary::ALL {
            assert!(!v.authorize(&ctx(&v, b, s, None)));
            assert_eq!(v.authorize(&ctx(&v, b, s, Late)), b == ToolExec);
            assert_eq!(v.authorize(&ctx(&v, b, s, Early)), matches!(b, Memory | Planning | ToolExec));
        }
        v.expire_session(s).unwrap();
        assert!(!v.authorize(&ctx(&v, ToolExec, s, Late)));
    }

    #[test]
    fn late_restores_only_at_tool() {
        let mut v = Vault::new(3);
        let s = v.open_session();
        let id = v.store("NZ3812745", PrivacyCategory::NationalId, s).unwrap();
        let text = format!("verify {}", token_text(&id));
        assert_eq!(v.restore_entities(&text, &ctx(&v, Boundary::Memory, s, RestorationPolicy::Late)), text);
        assert_eq!(
            v.restore_entities(&text, &ctx(&v, Boundary::ToolExec, s, RestorationPolicy::Late)),
            "verify NZ3812745"
        );
        let outcomes: Vec<_> = v.audit().iter().map(|e| e.outcome).collect();
        assert_eq!(outcomes, vec![AuditOutcome::Stored, AuditOutcome::Denied, AuditOutcome::Restored]);
    }

    #[test]
    fn cross_session_and_expired_tokens_are_denied() {
        let mut v = Vault::new(5);
        let s1 = v.open_session();
        let s2 = v.open_session();
        let id = v.store("secret", PrivacyCategory::Person, s1).unwrap();
        let t = token_text(&id);
        let (c1, c2) = (ctx(&v, Boundary::ToolExec, s1, RestorationPolicy::Late), ctx(&v, Boundary::ToolExec, s2, RestorationPolicy::Late));
        assert_eq!(v.restore_entities(&t, &c2), t);
        assert_eq!(v.expire_session(s1).unwrap(), 1);
        assert_eq!(v.restore_entities(&t, &c1), t);
        assert_eq!(v.live_entries(), 0);
        assert_eq!(v.outcome_count(AuditOutcome::Expired), 1);
        assert_eq!(v.outcome_count(AuditOutcome::Denied), 2);
    }

    #[test]
    fn wrong_credential_is_refused() {
        let mut v = Vault::new(8);
        let s = v.open_session();
        let other = v.open_session();
        let mut c = ctx(&v, Boundary::Memory, s, RestorationPolicy::Early);
        assert!(v.authorize(&c));
        c.credential = v.credential(other).unwrap();
        assert!(!v.authorize(&c));
        c.credential = Credential(0);
        assert!(!v.authorize(&c));
    }

    #[test]
    fn store_after_expiry_fails() {
        let mut v = Vault::new(8);
        let s = v.open_session();
        v.expire_session(s).unwrap();
        assert!(v.store("x", PrivacyCategory::Person, s).is_err());
    }

    #[test]
    fn expiring_empty_session_is_harmless() {
        let mut v = Vault::new(5);
        let s = v.open_session();
        assert_eq!(v.expire_session(s).unwrap(), 0);
        assert!(v.expire_session(SessionId(99)).is_err());
    }

    #[test]
    fn namespace_exhaustion_is_reported() {
        let mut v = Vault::with_token_len(9, 1);
        let s = v.open_session();
        let mut ids = HashSet::new();
        for i in 0..16 {
            ids.insert(v.store(&format!("v{i}"), PrivacyCategory::Account, s).unwrap());
        }
        assert_eq!(ids.len(), 16);
        assert!(matches!(v.store("v16", PrivacyCategory::Account, s), Err(Error::NamespaceExhausted)));
    }

    #[test]
    fn events_reconcile_with_occurrences() {
        let mut v = Vault::new(11);
        let s = v.open_session();
        let a = token_text(&v.store("a", PrivacyCategory::Person, s).unwrap());
        let b = token_text(&v.store("b", PrivacyCategory::Person, s).unwrap());
        let text = format!("{a} {b} {a} [TOKEN_fffff]");
        let mut occurrences = 0;
        for b in Boundary::ALL {
            for p in RestorationPolicy::ALL {
                v.restore_entities(&text, &ctx(&v, b, s, p));
                occurrences += 4;
            }
        }
        let r = v.outcome_count(AuditOutcome::Restored);
        let d = v.outcome_count(AuditOutcome::Denied);
        assert_eq!(r + d, occurrences);
        let ticks: Vec<u64> = v.audit().iter().map(|e| e.tick).collect();
        assert!(ticks.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn same_seed_same_tokens() {
        let run = || {
            let mut v = Vault::new(42);
            let s = v.open_session();
            (0..20).map(|i| v.store(&i.to_string(), PrivacyCategory::Account, s).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    proptest::proptest! {
        #[test]
        fn every_occurrence_is_audited(
            values in proptest::collection::vec("[A-Z]{2}[0-9]{4,7}", 1..8),
            picks in proptest::collection::vec((0usize..8, 0usize..6, 0usize..3), 1..20),
        ) {
            let mut v = Vault::new(23);
            let s = v.open_session();
            let ids: Vec<String> = values.iter().map(|x| v.store(x, PrivacyCategory::NationalId, s).unwrap()).collect();
            let mut occurrences = 0;
            for (i, b, p) in picks {
                let id = &ids[i % ids.len()];
                let text = format!("{} and {} then {}", token_text(id), token_text(id), token_text("fffff"));
                occurrences += 3;
                let policy = RestorationPolicy::ALL[p];
                let boundary = Boundary::ALL[b];
                let out = v.restore_entities(&text, &ctx(&v, boundary, s, policy));
                if policy.allows(boundary) {
                    let original = &values[i % ids.len()];
                    proptest::prop_assert_eq!(out, format!("{original} and {original} then {}", token_text("fffff")));
                } else {
                    proptest::prop_assert_eq!(out, text);
                }
            }
            let audited = v.outcome_count(AuditOutcome::Restored) + v.outcome_count(AuditOutcome::Denied);
            proptest::prop_assert_eq!(audited, occurrences);
        }
    }
}
