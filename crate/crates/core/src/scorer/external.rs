//! Client for scorer backends running as child processes.
//!
//! Each backend process handles requests serially; the pool pipelines up to
//! `window` requests per process and matches responses back by id, so a
//! backend may answer out of order.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use base64::Engine as _;
use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::protocol::{ImageMode, Request, Response, PROTOCOL_VERSION};
use super::ImageRef;
use crate::dataset::encode_png;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalConfig {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    pub workers: usize,
    pub image_mode: ImageMode,
    /// Maximum requests in flight per process.
    pub window: usize,
}

impl ExternalConfig {
    pub fn new(command: Vec<String>) -> Self {
        ExternalConfig {
            command,
            workers: 1,
            image_mode: ImageMode::Path,
            window: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.command.is_empty() || self.command[0].trim().is_empty() {
            return Err(Error::Config("external scorer command is empty".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("external scorer needs at least one worker".into()));
        }
        if self.window == 0 {
            return Err(Error::Config("request window must be at least 1".into()));
        }
        Ok(())
    }
}

struct Backend {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    alive: bool,
}

impl Backend {
    fn spawn(config: &ExternalConfig) -> Result<(Backend, String)> {
        let mut child = Command::new(&config.command[0])
            .args(&config.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Backend(format!("cannot start {:?}: {e}", config.command[0])))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut backend = Backend {
            child,
            stdin,
            stdout,
            alive: true,
        };
        let name = backend.handshake(config.image_mode)?;
        Ok((backend, name))
    }

    fn handshake(&mut self, mode: ImageMode) -> Result<String> {
        self.send(&Request::Hello {
            version: PROTOCOL_VERSION,
            image_mode: mode,
        })?;
        self.flush()?;
        match self.receive()? {
            Response::Hello { version, name } if version == PROTOCOL_VERSION => Ok(name),
            Response::Hello { version, .. } => {
                self.alive = false;
                Err(Error::Config(format!(
                    "scorer speaks protocol version {version}, expected {PROTOCOL_VERSION}"
                )))
            }
            Response::Fatal { message } => {
                self.alive = false;
                Err(Error::Backend(message))
            }
            other => {
                self.alive = false;
                Err(Error::Backend(format!("unexpected handshake reply {other:?}")))
            }
        }
    }

    fn send(&mut self, request: &Request) -> Result<()> {
        self.stdin
            .write_all(request.to_line().as_bytes())
            .map_err(|e| self.broken(format!("write failed: {e}")))
    }

    fn flush(&mut self) -> Result<()> {
        self.stdin
            .flush()
            .map_err(|e| self.broken(format!("write failed: {e}")))
    }

    fn receive(&mut self) -> Result<Response> {
        let mut line = String::new();
        loop {
            line.clear();
            let n = self
                .stdout
                .read_line(&mut line)
                .map_err(|e| self.broken(format!("read failed: {e}")))?;
            if n == 0 {
                let status = self.child.try_wait().ok().flatten();
                return Err(self.broken(match status {
                    Some(s) => format!("scorer process exited ({s})"),
                    None => "scorer process closed its output".to_string(),
                }));
            }
            if !line.trim().is_empty() {
                break;
            }
        }
        Response::parse(line.trim_end())
            .map_err(|e| self.broken(format!("malformed response {:?}: {e}", line.trim_end())))
    }

    fn broken(&mut self, message: String) -> Error {
        self.alive = false;
        Error::Backend(message)
    }

    /// Sends `requests` and returns one outcome per request, in input order.
    /// A returned `Err` means the process itself failed.
    fn run(&mut self, requests: Vec<(u64, Request)>, window: usize) -> Result<Vec<Result<f64>>> {
        if !self.alive {
            return Err(Error::Backend("scorer process is not running".into()));
        }
        let total = requests.len();
        let mut outcomes: Vec<Option<Result<f64>>> = (0..total).map(|_| None).collect();
        let mut pending: HashMap<u64, usize> = HashMap::new();
        let mut queue = requests.into_iter().enumerate();
        let mut done = 0;
        while done < total {
            while pending.len() < window {
                let Some((pos, (id, request))) = queue.next() else { break };
                self.send(&request)?;
                pending.insert(id, pos);
            }
            self.flush()?;
            match self.receive()? {
                Response::Result { id, score } => {
                    let pos = self.take_pending(&mut pending, id)?;
                    outcomes[pos] = Some(match score {
                        Some(s) if s.is_finite() => Ok(s),
                        Some(s) => Err(Error::InvalidScore(s)),
                        None => Err(Error::InvalidScore(f64::NAN)),
                    });
                }
                Response::Error {
                    id: Some(id),
                    message,
                } => {
                    let pos = self.take_pending(&mut pending, id)?;
                    outcomes[pos] = Some(Err(Error::Backend(message)));
                }
                Response::Error { id: None, message } | Response::Fatal { message } => {
                    return Err(self.broken(message));
                }
                Response::Hello { .. } => {
                    return Err(self.broken("unexpected hello during scoring".into()));
                }
            }
            done += 1;
        }
        Ok(outcomes.into_iter().map(|o| o.expect("every request answered")).collect())
    }

    fn take_pending(&mut self, pending: &mut HashMap<u64, usize>, id: u64) -> Result<usize> {
        match pending.remove(&id) {
            Some(pos) => Ok(pos),
            None => Err(self.broken(format!("response for unknown request id {id}"))),
        }
    }

    fn shutdown(&mut self) {
        if self.alive {
            let _ = self.send(&Request::Bye);
            let _ = self.flush();
        }
        let deadline = Instant::now() + Duration::from_secs(5);
        loop {
            match self.child.try_wait() {
                Ok(Some(status)) => {
                    if !status.success() {
                        debug!("scorer process exited with {status}");
                    }
                    return;
                }
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
                _ => {
                    warn!("scorer process did not exit after bye; killing it");
                    let _ = self.child.kill();
                    let _ = self.child.wait();
                    return;
                }
            }
        }
    }
}

/// A pool of identical backend processes.
pub(crate) struct ExternalPool {
    name: String,
    config: ExternalConfig,
    workers: Vec<Mutex<Backend>>,
    next_worker: AtomicUsize,
    next_id: AtomicU64,
    scratch: tempfile::TempDir,
}

impl ExternalPool {
    pub(crate) fn spawn(config: &ExternalConfig) -> Result<Self> {
        config.validate()?;
        let scratch = tempfile::Builder::new().prefix("stairward-").tempdir()?;
        let mut workers = Vec::with_capacity(config.workers);
        let mut name = String::new();
        for _ in 0..config.workers {
            let (backend, reported) = Backend::spawn(config)?;
            if name.is_empty() {
                name = reported;
            }
            workers.push(Mutex::new(backend));
        }
        Ok(ExternalPool {
            name,
            config: config.clone(),
            workers,
            next_worker: AtomicUsize::new(0),
            next_id: AtomicU64::new(1),
            scratch,
        })
    }

    /// Name reported by the backend at handshake.
    pub(crate) fn reported_name(&self) -> &str {
        &self.name
    }

    pub(crate) fn score_batch(&self, pairs: &[(&str, &ImageRef)]) -> Result<Vec<f64>> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let mut temp_files = Vec::new();
        let mut requests = Vec::with_capacity(pairs.len());
        for (index, (prompt, image)) in pairs.iter().enumerate() {
            let id = self.next_id.fetch_add(1, Ordering::Relaxed);
            let request = self
                .build_request(id, prompt, image, &mut temp_files)
                .map_err(|e| Error::BatchElement {
                    index,
                    source: Box::new(e),
                })?;
            requests.push((index, id, request));
        }

        let n = self.workers.len();
        let first = self.next_worker.fetch_add(1, Ordering::Relaxed);
        let mut shares: Vec<Vec<(usize, u64, Request)>> = (0..n).map(|_| Vec::new()).collect();
        for (i, req) in requests.into_iter().enumerate() {
            shares[(first + i) % n].push(req);
        }

        let run_share = |worker: usize, share: Vec<(usize, u64, Request)>| {
            let indices: Vec<usize> = share.iter().map(|r| r.0).collect();
            let mut backend = self.workers[worker].lock().unwrap_or_else(|p| p.into_inner());
            let outcome = backend.run(share.into_iter().map(|(_, id, r)| (id, r)).collect(), self.config.window);
            (indices, outcome)
        };

        let busy: Vec<(usize, Vec<(usize, u64, Request)>)> = shares
            .into_iter()
            .enumerate()
            .filter(|(_, s)| !s.is_empty())
            .collect();
        let results: Vec<(Vec<usize>, Result<Vec<Result<f64>>>)> = if busy.len() == 1 {
            busy.into_iter().map(|(w, s)| run_share(w, s)).collect()
        } else {
            thread::scope(|scope| {
                let handles: Vec<_> = busy
                    .into_iter()
                    .map(|(w, s)| scope.spawn(move || run_share(w, s)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("scorer worker thread panicked"))
                    .collect()
            })
        };

        for path in temp_files {
            let _ = fs::remove_file(path);
        }

        let mut scores: Vec<Option<Result<f64>>> = (0..pairs.len()).map(|_| None).collect();
        for (indices, outcome) in results {
            match outcome {
                Ok(values) => {
                    for (i, v) in indices.into_iter().zip(values) {
                        scores[i] = Some(v);
                    }
                }
                Err(e) => {
                    let msg = match e {
                        Error::Backend(m) => m,
                        other => other.to_string(),
                    };
                    for i in indices {
                        scores[i] = Some(Err(Error::Backend(msg.clone())));
                    }
                }
            }
        }
        scores
            .into_iter()
            .enumerate()
            .map(|(index, s)| {
                s.expect("every index assigned").map_err(|e| Error::BatchElement {
                    index,
                    source: Box::new(e),
                })
            })
            .collect()
    }

    fn build_request(
        &self,
        id: u64,
        prompt: &str,
        image: &ImageRef,
        temp_files: &mut Vec<PathBuf>,
    ) -> Result<Request> {
        let (image_path, image_b64) = match self.config.image_mode {
            ImageMode::Path => {
                let path = match image.source_path() {
                    Some(p) if image.is_whole() => fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf()),
                    _ => {
                        let p = self.scratch.path().join(format!("req-{id}.png"));
                        fs::write(&p, encode_png(image.raster())?)?;
                        temp_files.push(p.clone());
                        p
                    }
                };
                (Some(path.to_string_lossy().into_owned()), None)
            }
            ImageMode::Inline => {
                let png = encode_png(image.raster())?;
                (None, Some(base64::engine::general_purpose::STANDARD.encode(png)))
            }
        };
        Ok(Request::Score {
            id,
            prompt: prompt.to_string(),
            image_path,
            image_b64,
        })
    }
}

impl Drop for ExternalPool {
    fn drop(&mut self) {
        for worker in &self.workers {
            let mut backend = worker.lock().unwrap_or_else(|p| p.into_inner());
            backend.shutdown();
        }
    }
}
