//! Blocking HTTP/1.1 over a plain `TcpStream`, one request per connection.
//! Written by hand so the byte counts are exactly what crossed the socket.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HttpError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed HTTP response: {0}")]
    Malformed(&'static str),
}

/// One request/response pair and its on-the-wire size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exchange {
    pub status: u16,
    pub body: Vec<u8>,
    /// Request line, headers and body as written.
    pub bytes_sent: usize,
    /// Status line, headers and body as read.
    pub bytes_received: usize,
}

#[derive(Debug, Clone)]
pub struct HttpClient {
    pub addr: SocketAddr,
    pub timeout: Duration,
}

impl HttpClient {
    pub fn new(addr: SocketAddr) -> Self {
        Self {
            addr,
            timeout: Duration::from_secs(10),
        }
    }

    pub fn get(&self, path: &str) -> Result<Exchange, HttpError> {
        self.send("GET", path, None)
    }

    pub fn post(&self, path: &str, body: &[u8]) -> Result<Exchange, HttpError> {
        self.send("POST", path, Some(body))
    }

    fn send(&self, method: &str, path: &str, body: Option<&[u8]>) -> Result<Exchange, HttpError> {
        // Only the headers HTTP/1.1 requires, plus the body length.
        let mut request = format!("{method} {path} HTTP/1.1\r\nHost: {}\r\n", self.addr).into_bytes();
        if let Some(b) = body {
            request.extend_from_slice(format!("Content-Length: {}\r\n", b.len()).as_bytes());
        }
        request.extend_from_slice(b"Connection: close\r\n\r\n");
        if let Some(b) = body {
            request.extend_from_slice(b);
        }

        let mut stream = TcpStream::connect_timeout(&self.addr, self.timeout)?;
        stream.set_read_timeout(Some(self.timeout))?;
        stream.write_all(&request)?;
        let mut response = Vec::new();
        stream.read_to_end(&mut response)?;
        let (status, body) = parse_response(&response)?;
        Ok(Exchange {
            status,
            body,
            bytes_sent: request.len(),
            bytes_received: response.len(),
        })
    }
}

fn parse_response(raw: &[u8]) -> Result<(u16, Vec<u8>), HttpError> {
    let end = raw
        .windows(4)
        .position(|w| w == b"\r\n\r\n")
        .ok_or(HttpError::Malformed("no end of headers"))?;
    let head = std::str::from_utf8(&raw[..end]).map_err(|_| HttpError::Malformed("headers"))?;
    let mut lines = head.split("\r\n");
    let status = lines
        .next()
        .and_then(|l| l.split(' ').nth(1))
        .and_then(|s| s.parse().ok())
        .ok_or(HttpError::Malformed("status line"))?;
    let body = &raw[end + 4..];
    let length = lines
        .filter_map(|l| l.split_once(':'))
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .map(|(_, v)| v.trim().parse::<usize>())
        .transpose()
        .map_err(|_| HttpError::Malformed("content-length"))?;
    match length {
        Some(n) if n > body.len() => Err(HttpError::Malformed("short body")),
        Some(n) => Ok((status, body[..n].to_vec())),
        None => Ok((status, body.to_vec())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_length_delimited_body() {
        let raw = b"HTTP/1.1 403 Forbidden\r\ncontent-length: 3\r\n\r\nabc";
        assert_eq!(parse_response(raw).unwrap(), (403, b"abc".to_vec()));
        assert!(parse_response(b"HTTP/1.1 200 OK\r\ncontent-length: 9\r\n\r\nabc").is_err());
        assert!(parse_response(b"garbage").is_err());
    }
}
