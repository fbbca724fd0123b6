//! A small memcached text-protocol server backed by [`MemoryCache`], for
//! exercising [`MemcachedCache`](super::MemcachedCache) without a real
//! memcached.

use std::io::{self, BufRead, BufReader, ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use super::{Cache, CacheConfig, CacheError, CacheKey, MemoryCache};
use crate::clock::SystemClock;

const POLL: Duration = Duration::from_millis(50);

pub struct FakeMemcached {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
    store: Arc<MemoryCache>,
}

impl FakeMemcached {
    /// Binds an ephemeral localhost port and starts serving.
    pub fn start() -> io::Result<Self> {
        let store = Arc::new(MemoryCache::new(CacheConfig::default(), Arc::new(SystemClock::new())));
        Self::start_with(store)
    }

    pub fn start_with(store: Arc<MemoryCache>) -> io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let acceptor = {
            let stop = stop.clone();
            let store = store.clone();
            std::thread::spawn(move || accept_loop(listener, store, stop))
        };
        Ok(FakeMemcached {
            addr,
            stop,
            acceptor: Some(acceptor),
            store,
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn store(&self) -> &Arc<MemoryCache> {
        &self.store
    }
}

impl Drop for FakeMemcached {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Release);
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

fn accept_loop(listener: TcpListener, store: Arc<MemoryCache>, stop: Arc<AtomicBool>) {
    let mut workers = Vec::new();
    while !stop.load(Ordering::Acquire) {
        match listener.accept() {
            Ok((stream, _)) => {
                let store = store.clone();
                let stop = stop.clone();
                workers.push(std::thread::spawn(move || {
                    let _ = serve(stream, &store, &stop);
                }));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(5)),
            Err(_) => break,
        }
    }
    for w in workers {
        let _ = w.join();
    }
}

struct Session<'a> {
    reader: BufReader<TcpStream>,
    stop: &'a AtomicBool,
}

impl Session<'_> {
    /// `Ok(None)` on EOF or shutdown.
    fn line(&mut self) -> io::Result<Option<Vec<u8>>> {
        let mut buf = Vec::new();
        loop {
            if self.stop.load(Ordering::Acquire) {
                return Ok(None);
            }
            match self.reader.read_until(b'\n', &mut buf) {
                Ok(0) => return Ok(None),
                Ok(_) if buf.ends_with(b"\n") => {
                    while matches!(buf.last(), Some(b'\n' | b'\r')) {
                        buf.pop();
                    }
                    return Ok(Some(buf));
                }
                Ok(_) => continue,
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => continue,
                Err(e) => return Err(e),
            }
        }
    }

    fn block(&mut self, len: usize) -> io::Result<Option<Vec<u8>>> {
        let mut buf = vec![0u8; len + 2];
        let mut filled = 0;
        while filled < buf.len() {
            if self.stop.load(Ordering::Acquire) {
                return Ok(None);
            }
            match self.reader.read(&mut buf[filled..]) {
                Ok(0) => return Ok(None),
                Ok(n) => filled += n,
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => continue,
                Err(e) => return Err(e),
            }
        }
        buf.truncate(len);
        Ok(Some(buf))
    }
}

fn serve(stream: TcpStream, store: &MemoryCache, stop: &AtomicBool) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(POLL))?;
    let mut out = stream.try_clone()?;
    let mut session = Session {
        reader: BufReader::new(stream),
        stop,
    };
    while let Some(line) = session.line()? {
        let line = String::from_utf8_lossy(&line).into_owned();
        let parts: Vec<&str> = line.split(' ').filter(|s| !s.is_empty()).collect();
        let reply = match parts.as_slice() {
            ["get" | "gets", keys @ ..] if !keys.is_empty() => get(store, keys),
            [verb @ ("set" | "add"), key, _flags, _exptime, len] => {
                let Ok(len) = len.parse::<usize>() else {
                    out.write_all(b"CLIENT_ERROR bad data chunk\r\n")?;
                    continue;
                };
                let Some(data) = session.block(len)? else { break };
                match CacheKey::new(*key) {
                    Err(_) => b"CLIENT_ERROR bad key\r\n".to_vec(),
                    Ok(key) => {
                        let stored = if *verb == "set" {
                            store.set(&key, &data).map(|_| true)
                        } else {
                            store.add(&key, &data)
                        };
                        match stored {
                            Ok(true) => b"STORED\r\n".to_vec(),
                            Ok(false) => b"NOT_STORED\r\n".to_vec(),
                            Err(_) => b"SERVER_ERROR store failed\r\n".to_vec(),
                        }
                    }
                }
            }
            ["incr", key, "1"] => match CacheKey::new(*key).map(|k| store.increment(&k)) {
                Ok(Ok(Some(v))) => format!("{v}\r\n").into_bytes(),
                Ok(Ok(None)) => b"NOT_FOUND\r\n".to_vec(),
                Ok(Err(CacheError::NonNumeric)) => {
                    b"CLIENT_ERROR cannot increment or decrement non-numeric value\r\n".to_vec()
                }
                _ => b"CLIENT_ERROR bad command line format\r\n".to_vec(),
            },
            ["delete", key] => match CacheKey::new(*key).map(|k| store.delete(&k)) {
                Ok(Ok(true)) => b"DELETED\r\n".to_vec(),
                Ok(Ok(false)) => b"NOT_FOUND\r\n".to_vec(),
                _ => b"CLIENT_ERROR bad command line format\r\n".to_vec(),
            },
            ["flush_all", ..] => {
                let _ = store.flush_all();
                b"OK\r\n".to_vec()
            }
            ["version"] => b"VERSION fake-1.0\r\n".to_vec(),
            ["quit"] => break,
            _ => b"ERROR\r\n".to_vec(),
        };
        out.write_all(&reply)?;
    }
    Ok(())
}

fn get(store: &MemoryCache, keys: &[&str]) -> Vec<u8> {
    let mut reply = Vec::new();
    for k in keys {
        let Ok(key) = CacheKey::new(*k) else { continue };
        if let Ok(Some(v)) = store.get(&key) {
            reply.extend_from_slice(format!("VALUE {k} 0 {}\r\n", v.len()).as_bytes());
            reply.extend_from_slice(&v);
            reply.extend_from_slice(b"\r\n");
        }
    }
    reply.extend_from_slice(b"END\r\n");
    reply
}
