//! Length-prefixed text framing for gossip.
//!
//! Each transaction travels as `<len>:<payload>,` where `<len>` is the byte
//! length of `<payload>` in decimal. The payload is one `field=value` line per
//! field, in this fixed order:
//!
//! ```text
//! tx_id, kind, identity_id, sequence_digest, proxy_locator, owner_id,
//! prior, parent_a, parent_b, issuer, timestamp
//! ```
//!
//! Digests are lowercase hex. Absent optional fields have an empty value.
//! Backslashes and newlines inside values are escaped as `\\` and `\n`.

use super::tx::{NodeId, Transaction, TxKind};
use crate::digest::Digest;

const FIELDS: [&str; 11] = [
    "tx_id",
    "kind",
    "identity_id",
    "sequence_digest",
    "proxy_locator",
    "owner_id",
    "prior",
    "parent_a",
    "parent_b",
    "issuer",
    "timestamp",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("bad frame at byte {offset}: {message}")]
    Frame { offset: usize, message: String },
    #[error("bad record: {0}")]
    Record(String),
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\n', "\\n")
}

fn unescape(s: &str) -> Result<String, WireError> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('n') => out.push('\n'),
            other => return Err(WireError::Record(format!("bad escape `\\{}`", other.unwrap_or(' ')))),
        }
    }
    Ok(out)
}

pub fn encode_tx(tx: &Transaction) -> String {
    let opt = |v: &Option<String>| v.as_deref().map(escape).unwrap_or_default();
    let values = [
        tx.tx_id.to_hex(),
        tx.kind.as_str().to_string(),
        escape(&tx.identity_id),
        tx.sequence_digest.to_hex(),
        opt(&tx.proxy_locator),
        opt(&tx.owner_id),
        tx.prior.map(|p| p.to_hex()).unwrap_or_default(),
        tx.parents[0].to_hex(),
        tx.parents[1].to_hex(),
        tx.issuer.0.to_string(),
        tx.timestamp.to_string(),
    ];
    let payload: String = FIELDS
        .iter()
        .zip(values.iter())
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect();
    format!("{}:{},", payload.len(), payload)
}

pub fn encode_batch(txs: &[Transaction]) -> String {
    txs.iter().map(encode_tx).collect()
}

fn decode_payload(payload: &str) -> Result<Transaction, WireError> {
    let lines: Vec<&str> = payload.strip_suffix('\n').unwrap_or(payload).split('\n').collect();
    if lines.len() != FIELDS.len() {
        return Err(WireError::Record(format!("expected {} fields, got {}", FIELDS.len(), lines.len())));
    }
    let mut values = Vec::with_capacity(FIELDS.len());
    for (line, field) in lines.iter().zip(FIELDS) {
        let value = line
            .strip_prefix(field)
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| WireError::Record(format!("expected field `{field}`")))?;
        values.push(value);
    }
    let digest = |s: &str| s.parse::<Digest>().map_err(|e| WireError::Record(e.to_string()));
    let opt = |s: &str| -> Result<Option<String>, WireError> {
        if s.is_empty() {
            Ok(None)
        } else {
            unescape(s).map(Some)
        }
    };
    let number = |s: &str| s.parse::<u64>().map_err(|e| WireError::Record(format!("`{s}`: {e}")));
    Ok(Transaction {
        tx_id: digest(values[0])?,
        kind: TxKind::parse(values[1]).ok_or_else(|| WireError::Record(format!("unknown kind `{}`", values[1])))?,
        identity_id: unescape(values[2])?,
        sequence_digest: digest(values[3])?,
        proxy_locator: opt(values[4])?,
        owner_id: opt(values[5])?,
        prior: if values[6].is_empty() { None } else { Some(digest(values[6])?) },
        parents: [digest(values[7])?, digest(values[8])?],
        issuer: NodeId(
            u32::try_from(number(values[9])?).map_err(|_| WireError::Record("issuer out of range".into()))?,
        ),
        timestamp: number(values[10])?,
    })
}

/// Splits a stream into records. A bad record does not stop decoding; a
/// bad frame does, since the following boundaries are then unknown.
pub fn decode_stream(stream: &str) -> Vec<Result<Transaction, WireError>> {
    let mut out = Vec::new();
    let mut rest = stream;
    let mut offset = 0;
    while !rest.is_empty() {
        let frame_err = |message: &str| WireError::Frame {
            offset,
            message: message.to_string(),
        };
        let Some(colon) = rest.find(':') else {
            out.push(Err(frame_err("missing length prefix")));
            break;
        };
        let Ok(len) = rest[..colon].parse::<usize>() else {
            out.push(Err(frame_err("length is not a number")));
            break;
        };
        let start = colon + 1;
        let end = start + len;
        if rest.as_bytes().get(end) != Some(&b',') {
            out.push(Err(frame_err("length does not match payload")));
            break;
        }
        out.push(decode_payload(&rest[start..end]));
        offset += end + 1;
        rest = &rest[end + 1..];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::tx::TxContents;
    use proptest::prelude::*;

    fn sample(identity: &str, owner: Option<&str>, ts: u64) -> Transaction {
        let g = Transaction::genesis();
        Transaction::seal(TxContents {
            kind: TxKind::OwnershipTransfer,
            identity_id: identity.into(),
            sequence_digest: Digest::from_bytes([3; 32]),
            proxy_locator: None,
            owner_id: owner.map(str::to_string),
            prior: Some(g.tx_id),
            parents: [g.tx_id, Digest::from_bytes([1; 32])],
            issuer: NodeId(4),
            timestamp: ts,
        })
    }

    #[test]
    fn frame_layout() {
        let s = encode_tx(&Transaction::genesis());
        let (len, rest) = s.split_once(':').unwrap();
        assert_eq!(len.parse::<usize>().unwrap() + 1, rest.len());
        assert!(rest.ends_with("\n,"));
        assert!(rest.starts_with("tx_id="));
    }

    #[test]
    fn batch_round_trip() {
        let txs = vec![Transaction::genesis(), sample("key-000001", Some("o2"), 5)];
        let back: Vec<_> = decode_stream(&encode_batch(&txs)).into_iter().map(Result::unwrap).collect();
        assert_eq!(back, txs);
    }

    #[test]
    fn bad_record_is_isolated_and_bad_frame_stops() {
        let good = encode_tx(&sample("a", None, 1));
        let bad_kind = encode_tx(&sample("b", None, 2)).replace("kind=transfer", "kind=transfxr");
        let out = decode_stream(&format!("{good}{bad_kind}{good}"));
        assert_eq!(out.len(), 3);
        assert!(out[0].is_ok() && out[1].is_err() && out[2].is_ok());
        let out = decode_stream(&format!("{good}99:{good}"));
        assert_eq!(out.len(), 2);
        assert!(matches!(out[1], Err(WireError::Frame { .. })));
    }

    proptest! {
        #[test]
        fn arbitrary_strings_round_trip(identity in ".*", owner in proptest::option::of(".+"), ts in any::<u64>()) {
            let tx = sample(&identity, owner.as_deref(), ts);
            let back = decode_stream(&encode_tx(&tx));
            prop_assert_eq!(back.len(), 1);
            prop_assert_eq!(back[0].as_ref().unwrap(), &tx);
        }
    }
}
