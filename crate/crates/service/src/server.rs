//! TCP transport: one session per connection, latest-wins live solving.
//!
//! Each connection runs three kinds of threads. A reader turns frames into
//! events, the connection worker owns the session and the socket's write
//! half, and every live solve runs on its own thread with a cancel flag.
//! Any applied command cancels the running solve; solve results are only
//! streamed when their revision is still the current one.

use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Sender};
use std::sync::Arc;
use std::thread;

use devnet::QuadNet;

use crate::protocol::{decode_command, encode, read_frame, write_frame, Channel, Command, Frame, GeometryUpdate, ReportSummary, ServerMessage};
use crate::session::{Effect, Refusal, Session, SolveOutcome};

enum Event {
    Frame(Vec<u8>),
    Oversized(usize),
    Closed,
    Solved { revision: u64, result: Result<Option<SolveOutcome>, String> },
}

/// Accepts connections forever, serving each on its own thread.
pub fn serve(listener: TcpListener) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        thread::spawn(move || {
            let _ = handle_connection(stream);
        });
    }
    Ok(())
}

/// Binds `addr` and serves on a background thread; returns the bound address.
pub fn spawn(addr: impl ToSocketAddrs) -> io::Result<SocketAddr> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    thread::spawn(move || serve(listener));
    Ok(local)
}

/// Serves one client until it disconnects.
pub fn handle_connection(stream: TcpStream) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let (tx, rx) = channel();
    let mut reader = stream.try_clone()?;
    let reader_tx = tx.clone();
    thread::spawn(move || loop {
        let event = match read_frame(&mut reader) {
            Ok(Frame::Message(bytes)) => Event::Frame(bytes),
            Ok(Frame::Oversized(len)) => Event::Oversized(len),
            Ok(Frame::Closed) | Err(_) => Event::Closed,
        };
        let closed = matches!(event, Event::Closed);
        if reader_tx.send(event).is_err() || closed {
            break;
        }
    });

    let mut conn = Connection::new(stream, tx);
    let result = (|| {
        for event in &rx {
            match event {
                Event::Frame(bytes) => conn.on_frame(&bytes)?,
                Event::Oversized(len) => {
                    conn.send(&ServerMessage::ProtocolError { message: format!("frame of {len} bytes exceeds the limit") })?
                }
                Event::Closed => break,
                Event::Solved { revision, result } => conn.on_solved(revision, result)?,
            }
        }
        Ok(())
    })();
    conn.cancel_live();
    result
}

struct Connection {
    stream: TcpStream,
    events: Sender<Event>,
    session: Session,
    geometry: bool,
    diagnostics: bool,
    /// Whether the client asked for live solving of the current state.
    live: bool,
    cancel: Option<Arc<AtomicBool>>,
    streamed: Option<QuadNet>,
}

impl Connection {
    fn new(stream: TcpStream, events: Sender<Event>) -> Connection {
        Connection {
            stream,
            events,
            session: Session::new(),
            geometry: true,
            diagnostics: false,
            live: false,
            cancel: None,
            streamed: None,
        }
    }

    fn send(&mut self, msg: &ServerMessage) -> io::Result<()> {
        write_frame(&mut self.stream, &encode(msg))
    }

    fn on_frame(&mut self, bytes: &[u8]) -> io::Result<()> {
        let cmd = match decode_command(bytes) {
            Ok(cmd) => cmd,
            Err(e) => return self.send(&ServerMessage::ProtocolError { message: e.to_string() }),
        };
        if let Command::Subscribe { channels } = &cmd {
            self.geometry = channels.contains(&Channel::Geometry);
            self.diagnostics = channels.contains(&Channel::Diagnostics);
            let revision = self.session.revision();
            return self.send(&ServerMessage::Ack { revision, command: cmd.name().into() });
        }
        let command = cmd.name().to_string();
        let effect = match self.session.apply(&cmd) {
            Ok(effect) => effect,
            Err(Refusal::Stale { current }) => {
                return self.send(&ServerMessage::Rejected {
                    revision: current,
                    command,
                    reason: format!("revision {} is stale", cmd.revision().unwrap_or_default()),
                })
            }
            Err(Refusal::Invalid(message)) => {
                let revision = self.session.revision();
                return self.send(&ServerMessage::Error { revision, command, message });
            }
        };
        self.cancel_live();
        let revision = self.session.revision();
        self.send(&ServerMessage::Ack { revision, command })?;
        match effect {
            Effect::StopLive => {
                self.live = false;
                self.streamed = None;
            }
            Effect::LiveSolve => self.live = true,
            Effect::CommitSolve => {
                self.live = false;
                return self.commit();
            }
            Effect::None => {}
        }
        if self.live {
            self.start_live();
        }
        Ok(())
    }

    fn cancel_live(&mut self) {
        if let Some(flag) = self.cancel.take() {
            flag.store(true, Ordering::Relaxed);
        }
    }

    fn start_live(&mut self) {
        let Some(job) = self.session.job() else { return };
        let flag = Arc::new(AtomicBool::new(false));
        self.cancel = Some(flag.clone());
        let events = self.events.clone();
        thread::spawn(move || {
            let result = job.run(&flag);
            let _ = events.send(Event::Solved { revision: job.revision, result });
        });
    }

    /// Runs a committing solve to completion on the worker.
    fn commit(&mut self) -> io::Result<()> {
        let revision = self.session.revision();
        let Some(job) = self.session.job() else { return Ok(()) };
        match job.run(&AtomicBool::new(false)) {
            Ok(Some(outcome)) => {
                self.session.commit(&outcome);
                self.stream_outcome(&outcome)
            }
            Ok(None) => Ok(()),
            Err(message) => self.send(&ServerMessage::Error { revision, command: "solve".into(), message }),
        }
    }

    fn on_solved(&mut self, revision: u64, result: Result<Option<SolveOutcome>, String>) -> io::Result<()> {
        if revision != self.session.revision() {
            return Ok(());
        }
        self.cancel = None;
        match result {
            Ok(Some(outcome)) => self.stream_outcome(&outcome),
            Ok(None) => Ok(()),
            Err(message) => self.send(&ServerMessage::Error { revision, command: "solve".into(), message }),
        }
    }

    fn stream_outcome(&mut self, outcome: &SolveOutcome) -> io::Result<()> {
        let report = ReportSummary::from(&outcome.report);
        if self.geometry {
            let update = geometry_update(self.streamed.as_ref(), outcome, report);
            self.streamed = Some(outcome.net.clone());
            self.send(&ServerMessage::Geometry(update))?;
        }
        if self.diagnostics || !report.converged {
            let message = if report.converged {
                "converged".to_string()
            } else {
                format!("not converged: constraint norm {:e} after {} outer iterations", report.constraint_norm, report.outer_iters)
            };
            self.send(&ServerMessage::Diagnostics { revision: outcome.revision, message, report })?;
        }
        Ok(())
    }
}

/// Positions that changed since `previous`, or everything with the cells
/// when there is no previous geometry of the same topology.
pub fn geometry_update(previous: Option<&QuadNet>, outcome: &SolveOutcome, report: ReportSummary) -> GeometryUpdate {
    let net = &outcome.net;
    let previous = previous.filter(|p| p.same_topology(net));
    let delta = net
        .positions()
        .iter()
        .enumerate()
        .filter(|(v, p)| previous.is_none_or(|prev| prev.position(*v) != **p))
        .map(|(v, p)| (v, [p.x, p.y, p.z]))
        .collect();
    GeometryUpdate {
        revision: outcome.revision,
        vertex_count: net.vertex_count(),
        full: previous.is_none(),
        cells: previous.is_none().then(|| net.cells().to_vec()),
        delta,
        report,
        rulings: outcome.rulings.clone(),
        normals: outcome.normals.clone(),
    }
}
