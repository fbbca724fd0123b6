//! Blocking client for the memcached text protocol.
//!
//! Only the commands the algorithm needs are spoken: `get` (with several keys
//! for a multiget), `set`, `add`, `incr`, `delete` and `flush_all`. Values
//! are stored with flags 0 and exptime 0, i.e. without a TTL.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::{Mutex, MutexGuard};
use std::time::Duration;

use super::{Cache, CacheError, CacheKey, CacheValue};

const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

struct Conn {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Conn {
    fn open(addr: &str, timeout: Duration) -> std::io::Result<Conn> {
        let sock = addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::NotFound, "no address"))?;
        let stream = TcpStream::connect_timeout(&sock, timeout)?;
        stream.set_read_timeout(Some(timeout))?;
        stream.set_write_timeout(Some(timeout))?;
        stream.set_nodelay(true)?;
        Ok(Conn {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
        })
    }

    fn line(&mut self) -> Result<String, CacheError> {
        let mut buf = Vec::new();
        let n = self.reader.read_until(b'\n', &mut buf)?;
        if n == 0 {
            return Err(std::io::Error::from(std::io::ErrorKind::UnexpectedEof).into());
        }
        if !buf.ends_with(b"\r\n") {
            return Err(CacheError::Protocol("response line not terminated by CRLF".into()));
        }
        buf.truncate(buf.len() - 2);
        String::from_utf8(buf).map_err(|_| CacheError::Protocol("non UTF-8 response line".into()))
    }

    fn data_block(&mut self, len: usize) -> Result<Vec<u8>, CacheError> {
        let mut buf = vec![0u8; len + 2];
        self.reader.read_exact(&mut buf)?;
        if &buf[len..] != b"\r\n" {
            return Err(CacheError::Protocol("data block not terminated by CRLF".into()));
        }
        buf.truncate(len);
        Ok(buf)
    }

    /// Reads `VALUE` blocks up to `END`.
    fn values(&mut self) -> Result<HashMap<String, Vec<u8>>, CacheError> {
        let mut out = HashMap::new();
        loop {
            let line = self.line()?;
            if line == "END" {
                return Ok(out);
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some("VALUE"), Some(key), Some(_flags), Some(len)) => {
                    let len: usize = len
                        .parse()
                        .map_err(|_| CacheError::Protocol(format!("bad VALUE line `{line}`")))?;
                    let key = key.to_owned();
                    let data = self.data_block(len)?;
                    out.insert(key, data);
                }
                _ => return Err(unexpected(&line)),
            }
        }
    }
}

fn unexpected(line: &str) -> CacheError {
    CacheError::Protocol(format!("unexpected response `{line}`"))
}

pub struct MemcachedCache {
    addr: String,
    timeout: Duration,
    conn: Mutex<Option<Conn>>,
}

impl std::fmt::Debug for MemcachedCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MemcachedCache").field("addr", &self.addr).finish()
    }
}

impl MemcachedCache {
    /// Connects eagerly so that an unreachable server is reported up front.
    pub fn connect(addr: impl Into<String>) -> Result<Self, CacheError> {
        Self::connect_with_timeout(addr, DEFAULT_TIMEOUT)
    }

    pub fn connect_with_timeout(addr: impl Into<String>, timeout: Duration) -> Result<Self, CacheError> {
        let addr = addr.into();
        let conn = Conn::open(&addr, timeout)?;
        Ok(MemcachedCache {
            addr,
            timeout,
            conn: Mutex::new(Some(conn)),
        })
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    /// Runs one request/response exchange; a transport failure drops the
    /// connection so the next call reconnects.
    fn exchange<T>(
        &self,
        request: &[u8],
        read: impl FnOnce(&mut Conn) -> Result<T, CacheError>,
    ) -> Result<T, CacheError> {
        let mut guard: MutexGuard<'_, Option<Conn>> = self.conn.lock().unwrap_or_else(|e| e.into_inner());
        if guard.is_none() {
            *guard = Some(Conn::open(&self.addr, self.timeout)?);
        }
        let conn = guard.as_mut().expect("connection present");
        let result = conn
            .writer
            .write_all(request)
            .map_err(CacheError::from)
            .and_then(|_| read(conn));
        if matches!(result, Err(ref e) if e.is_io()) {
            *guard = None;
        }
        result
    }

    fn store(&self, verb: &str, key: &CacheKey, value: &[u8]) -> Result<bool, CacheError> {
        let mut req = format!("{verb} {key} 0 0 {}\r\n", value.len()).into_bytes();
        req.extend_from_slice(value);
        req.extend_from_slice(b"\r\n");
        self.exchange(&req, |c| {
            let line = c.line()?;
            match line.as_str() {
                "STORED" => Ok(true),
                "NOT_STORED" => Ok(false),
                _ => Err(unexpected(&line)),
            }
        })
    }
}

impl Cache for MemcachedCache {
    fn get(&self, key: &CacheKey) -> Result<Option<CacheValue>, CacheError> {
        Ok(self.multiget(std::slice::from_ref(key))?.pop().flatten())
    }

    fn multiget(&self, keys: &[CacheKey]) -> Result<Vec<Option<CacheValue>>, CacheError> {
        if keys.is_empty() {
            return Ok(Vec::new());
        }
        let mut req = String::from("get");
        for k in keys {
            req.push(' ');
            req.push_str(k.as_str());
        }
        req.push_str("\r\n");
        let found = self.exchange(req.as_bytes(), Conn::values)?;
        Ok(keys.iter().map(|k| found.get(k.as_str()).cloned()).collect())
    }

    fn set(&self, key: &CacheKey, value: &[u8]) -> Result<(), CacheError> {
        if self.store("set", key, value)? {
            Ok(())
        } else {
            Err(CacheError::Protocol("set answered NOT_STORED".into()))
        }
    }

    fn add(&self, key: &CacheKey, value: &[u8]) -> Result<bool, CacheError> {
        self.store("add", key, value)
    }

    fn increment(&self, key: &CacheKey) -> Result<Option<u64>, CacheError> {
        let req = format!("incr {key} 1\r\n");
        self.exchange(req.as_bytes(), |c| {
            let line = c.line()?;
            if line == "NOT_FOUND" {
                return Ok(None);
            }
            if line.starts_with("CLIENT_ERROR") {
                return Err(CacheError::NonNumeric);
            }
            line.parse().map(Some).map_err(|_| unexpected(&line))
        })
    }

    fn delete(&self, key: &CacheKey) -> Result<bool, CacheError> {
        let req = format!("delete {key}\r\n");
        self.exchange(req.as_bytes(), |c| {
            let line = c.line()?;
            match line.as_str() {
                "DELETED" => Ok(true),
                "NOT_FOUND" => Ok(false),
                _ => Err(unexpected(&line)),
            }
        })
    }

    fn flush_all(&self) -> Result<(), CacheError> {
        self.exchange(b"flush_all\r\n", |c| {
            let line = c.line()?;
            if line == "OK" {
                Ok(())
            } else {
                Err(unexpected(&line))
            }
        })
    }
}
