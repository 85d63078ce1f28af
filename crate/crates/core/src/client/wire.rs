//! Wire format shared by the stdio host and the HTTP services.
//!
//! A message is UTF-8 text, one `key=value` per line, `type=` first. Binary
//! values are standard base64. On stdio each message travels in a frame:
//! `BE4(length) || body`, at most 1 MiB.

use std::io::{self, Read, Write};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use thiserror::Error;

use crate::hashchain::Timestamp;
use crate::tee::{RateProof, RateProofRequest};

pub const MAX_FRAME_LEN: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame is truncated")]
    Truncated,
    #[error("frame of {0} bytes exceeds the limit")]
    Oversized(usize),
    #[error("trailing bytes after frame")]
    Trailing,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn encode_frame(body: &[u8]) -> Result<Vec<u8>, FrameError> {
    if body.len() > MAX_FRAME_LEN {
        return Err(FrameError::Oversized(body.len()));
    }
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body);
    Ok(out)
}

/// Parses a buffer holding exactly one frame.
pub fn decode_frame(bytes: &[u8]) -> Result<&[u8], FrameError> {
    let Some((len, body)) = bytes.split_first_chunk::<4>() else {
        return Err(FrameError::Truncated);
    };
    let len = u32::from_be_bytes(*len) as usize;
    if len > MAX_FRAME_LEN {
        return Err(FrameError::Oversized(len));
    }
    match body.len().cmp(&len) {
        std::cmp::Ordering::Less => Err(FrameError::Truncated),
        std::cmp::Ordering::Greater => Err(FrameError::Trailing),
        std::cmp::Ordering::Equal => Ok(body),
    }
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>, FrameError> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..])? {
            0 if got == 0 => return Ok(None),
            0 => return Err(FrameError::Truncated),
            n => got += n,
        }
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_LEN {
        return Err(FrameError::Oversized(len));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FrameError::Truncated,
        _ => FrameError::Io(e),
    })?;
    Ok(Some(body))
}

pub fn write_frame<W: Write>(w: &mut W, body: &[u8]) -> Result<(), FrameError> {
    w.write_all(&encode_frame(body)?)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("message is not UTF-8")]
    NotUtf8,
    #[error("line {0:?} is not key=value")]
    BadLine(String),
    #[error("first line must be type=...")]
    MissingType,
    #[error("duplicate key {0:?}")]
    DuplicateKey(String),
    #[error("missing field {0:?}")]
    Missing(&'static str),
    #[error("field {0:?} is malformed")]
    BadField(&'static str),
    #[error("unknown message type {0:?}")]
    UnknownType(String),
}

impl WireError {
    pub fn code(&self) -> &'static str {
        match self {
            WireError::UnknownType(_) => "UNKNOWN_MESSAGE_TYPE",
            _ => "MALFORMED_MESSAGE",
        }
    }
}

/// An untyped `key=value` message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fields {
    pub kind: String,
    pairs: Vec<(String, String)>,
}

impl Fields {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            pairs: Vec::new(),
        }
    }

    /// Adds a field. Keys and values must not contain line breaks, and keys
    /// must not contain `=`.
    pub fn put(mut self, key: &str, value: impl ToString) -> Self {
        let value = value.to_string();
        debug_assert!(!key.contains(['=', '\n', '\r']) && !value.contains(['\n', '\r']));
        self.pairs.push((key.to_owned(), value));
        self
    }

    pub fn put_bytes(self, key: &str, value: &[u8]) -> Self {
        self.put(key, B64.encode(value))
    }

    pub fn put_opt<T: ToString>(self, key: &str, value: Option<T>) -> Self {
        match value {
            Some(v) => self.put(key, v),
            None => self,
        }
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &'static str) -> Result<&str, WireError> {
        self.get(key).ok_or(WireError::Missing(key))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &'static str) -> Result<T, WireError> {
        self.require(key)?.parse().map_err(|_| WireError::BadField(key))
    }

    pub fn parse_opt<T: std::str::FromStr>(&self, key: &'static str) -> Result<Option<T>, WireError> {
        self.get(key)
            .map(|v| v.parse().map_err(|_| WireError::BadField(key)))
            .transpose()
    }

    pub fn bytes(&self, key: &'static str) -> Result<Vec<u8>, WireError> {
        B64.decode(self.require(key)?)
            .map_err(|_| WireError::BadField(key))
    }

    pub fn bytes_opt(&self, key: &'static str) -> Result<Option<Vec<u8>>, WireError> {
        match self.get(key) {
            Some(_) => self.bytes(key).map(Some),
            None => Ok(None),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("type={}\n", self.kind);
        for (k, v) in &self.pairs {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out.into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let text = std::str::from_utf8(bytes).map_err(|_| WireError::NotUtf8)?;
        let mut lines = text.lines().filter(|l| !l.is_empty());
        let kind = match lines.next().and_then(|l| l.split_once('=')) {
            Some(("type", kind)) if !kind.is_empty() => kind.to_owned(),
            _ => return Err(WireError::MissingType),
        };
        let mut pairs: Vec<(String, String)> = Vec::new();
        for line in lines {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| WireError::BadLine(line.chars().take(64).collect()))?;
            if k == "type" || pairs.iter().any(|(seen, _)| seen == k) {
                return Err(WireError::DuplicateKey(k.to_owned()));
            }
            pairs.push((k.to_owned(), v.to_owned()));
        }
        Ok(Self { kind, pairs })
    }
}

pub const VISIT_REQUEST: &str = "VISIT_REQUEST";
pub const VISIT_RESPONSE: &str = "VISIT_RESPONSE";
pub const PRUNE_GLOBAL: &str = "PRUNE_GLOBAL";
pub const PRUNE_RESPONSE: &str = "PRUNE_RESPONSE";
pub const ERROR: &str = "ERROR";

/// A failure reported to the peer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorReply {
    pub code: String,
    pub detail: String,
}

impl ErrorReply {
    pub fn new(code: &str, detail: impl ToString) -> Self {
        Self {
            code: code.to_owned(),
            detail: detail.to_string().replace(['\n', '\r'], " "),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    VisitRequest {
        request: RateProofRequest,
        reply_url: String,
    },
    VisitResponse(Result<RateProof, ErrorReply>),
    PruneGlobal {
        prune_point: Timestamp,
    },
    /// `Ok(true)` if the list was pruned, `Ok(false)` if already pruned
    /// at or after the requested point.
    PruneResponse(Result<bool, ErrorReply>),
    Error(ErrorReply),
}

fn put_error(f: Fields, e: &ErrorReply) -> Fields {
    f.put("error", &e.code).put("detail", &e.detail)
}

fn get_error(f: &Fields) -> Result<ErrorReply, WireError> {
    Ok(ErrorReply {
        code: f.require("error")?.to_owned(),
        detail: f.get("detail").unwrap_or_default().to_owned(),
    })
}

pub fn request_fields(kind: &str, req: &RateProofRequest) -> Fields {
    Fields::new(kind)
        .put("t", req.t)
        .put("t_s", req.t_s)
        .put("k", req.k)
        .put("name", &req.list_name)
        .put_opt("pk", req.server_pk.as_deref().map(|b| B64.encode(b)))
        .put_opt("sig", req.server_sig.as_deref().map(|b| B64.encode(b)))
        .put_opt("t_p", req.prune_point)
        .put_bytes("nonce", &req.nonce)
}

pub fn request_from_fields(f: &Fields) -> Result<RateProofRequest, WireError> {
    let name = f.require("name")?.to_owned();
    Ok(RateProofRequest {
        t: Timestamp(f.parse("t")?),
        t_s: Timestamp(f.parse("t_s")?),
        k: f.parse("k")?,
        list_name: name,
        server_pk: f.bytes_opt("pk")?,
        server_sig: f.bytes_opt("sig")?,
        prune_point: f.parse_opt::<i32>("t_p")?.map(Timestamp),
        nonce: f
            .bytes("nonce")?
            .try_into()
            .map_err(|_| WireError::BadField("nonce"))?,
    })
}

impl Message {
    pub fn to_fields(&self) -> Fields {
        match self {
            Message::VisitRequest { request, reply_url } => {
                request_fields(VISIT_REQUEST, request).put("reply_url", reply_url)
            }
            Message::VisitResponse(Ok(proof)) => {
                Fields::new(VISIT_RESPONSE).put_bytes("proof", &proof.to_bytes())
            }
            Message::VisitResponse(Err(e)) => put_error(Fields::new(VISIT_RESPONSE), e),
            Message::PruneGlobal { prune_point } => {
                Fields::new(PRUNE_GLOBAL).put("t_p", prune_point)
            }
            Message::PruneResponse(Ok(pruned)) => Fields::new(PRUNE_RESPONSE)
                .put("status", if *pruned { "pruned" } else { "unchanged" }),
            Message::PruneResponse(Err(e)) => put_error(Fields::new(PRUNE_RESPONSE), e),
            Message::Error(e) => put_error(Fields::new(ERROR), e),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        self.to_fields().encode()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let f = Fields::decode(bytes)?;
        Ok(match f.kind.as_str() {
            VISIT_REQUEST => Message::VisitRequest {
                request: request_from_fields(&f)?,
                reply_url: f.get("reply_url").unwrap_or_default().to_owned(),
            },
            VISIT_RESPONSE => Message::VisitResponse(match f.get("proof") {
                Some(_) => Ok(RateProof::from_bytes(&f.bytes("proof")?)
                    .map_err(|_| WireError::BadField("proof"))?),
                None => Err(get_error(&f)?),
            }),
            PRUNE_GLOBAL => Message::PruneGlobal {
                prune_point: Timestamp(f.parse("t_p")?),
            },
            PRUNE_RESPONSE => Message::PruneResponse(match f.get("status") {
                Some("pruned") => Ok(true),
                Some("unchanged") => Ok(false),
                Some(_) => return Err(WireError::BadField("status")),
                None => Err(get_error(&f)?),
            }),
            ERROR => Message::Error(get_error(&f)?),
            other => return Err(WireError::UnknownType(other.to_owned())),
        })
    }
}
