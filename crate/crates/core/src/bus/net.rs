//! TCP transport: a thread-per-connection server in front of a [`Bus`] and
//! a client that speaks the same frames.

use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde_json::Value;

use super::wire::{read_frame, write_frame, Frame, Op};
use super::{Ack, Bus, BusError, BusHandle, Envelope, Subscription};

const IDLE_POLL: Duration = Duration::from_millis(200);

pub struct BusServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    conns: Arc<Mutex<Vec<TcpStream>>>,
    accept: Option<JoinHandle<()>>,
}

impl BusServer {
    pub fn bind(addr: impl ToSocketAddrs, bus: Bus) -> Result<Self, BusError> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let conns: Arc<Mutex<Vec<TcpStream>>> = Arc::default();
        let accept = {
            let (stop, conns) = (stop.clone(), conns.clone());
            thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let _ = stream.set_nodelay(true);
                    if let Ok(c) = stream.try_clone() {
                        let mut list = conns.lock().unwrap_or_else(|p| p.into_inner());
                        list.push(c);
                    }
                    let (bus, stop) = (bus.clone(), stop.clone());
                    thread::spawn(move || {
                        let _ = serve(stream, &bus, &stop);
                    });
                }
            })
        };
        Ok(Self {
            addr,
            stop,
            conns,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the accept loop ends.
    pub fn join(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    /// Stops accepting and closes every open connection.
    pub fn shutdown(&mut self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        let _ = TcpStream::connect(self.addr);
        for c in self.conns.lock().unwrap_or_else(|p| p.into_inner()).drain(..) {
            let _ = c.shutdown(Shutdown::Both);
        }
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for BusServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn serve(stream: TcpStream, bus: &Bus, stop: &AtomicBool) -> Result<(), BusError> {
    let mut reader = stream.try_clone()?;
    let mut writer = stream;
    while let Some(frame) = read_frame(&mut reader)? {
        match frame.op {
            Op::Publish => {
                let reply = match bus.publish(&frame.topic, frame.payload.unwrap_or(Value::Null)) {
                    Ok(ack) => Frame {
                        seq: Some(ack.seq),
                        published_at: Some(ack.published_at),
                        ..Frame::new(Op::Ack, frame.topic)
                    },
                    Err(e) => Frame::error(frame.topic, e),
                };
                write_frame(&mut writer, &reply)?;
            }
            Op::Subscribe => {
                let patterns: Vec<&str> = frame.topic.split(',').map(str::trim).collect();
                let sub = match bus.subscribe(&patterns, frame.seq.unwrap_or(1)) {
                    Ok(s) => s,
                    Err(e) => {
                        write_frame(&mut writer, &Frame::error(frame.topic, e))?;
                        continue;
                    }
                };
                write_frame(&mut writer, &Frame::new(Op::Ack, frame.topic.clone()))?;
                return stream_deliveries(sub, reader, writer, stop);
            }
            Op::Deliver | Op::Ack => {
                write_frame(&mut writer, &Frame::error(frame.topic, "unexpected op"))?;
            }
        }
    }
    Ok(())
}

/// A subscribed connection only sends; a watcher thread notices when the
/// client hangs up.
fn stream_deliveries(
    sub: Subscription,
    mut reader: TcpStream,
    mut writer: TcpStream,
    stop: &AtomicBool,
) -> Result<(), BusError> {
    let closed = Arc::new(AtomicBool::new(false));
    {
        let closed = closed.clone();
        thread::spawn(move || {
            while let Ok(Some(_)) = read_frame(&mut reader) {}
            closed.store(true, Ordering::SeqCst);
        });
    }
    loop {
        match sub.recv_timeout(IDLE_POLL)? {
            Some(e) => {
                let f = Frame {
                    seq: Some(e.seq),
                    payload: Some(e.payload),
                    published_at: Some(e.published_at),
                    ..Frame::new(Op::Deliver, e.topic)
                };
                write_frame(&mut writer, &f)?;
            }
            None if closed.load(Ordering::SeqCst) || stop.load(Ordering::SeqCst) => return Ok(()),
            None => {}
        }
    }
}

/// Client side of [`BusServer`]. Publishes share one connection, each
/// subscription gets its own.
pub struct RemoteBus {
    addr: SocketAddr,
    conn: Mutex<Option<TcpStream>>,
}

impl RemoteBus {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, BusError> {
        let addr = addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| BusError::Protocol("no address".into()))?;
        let stream = Self::dial(addr)?;
        Ok(Self {
            addr,
            conn: Mutex::new(Some(stream)),
        })
    }

    fn dial(addr: SocketAddr) -> Result<TcpStream, BusError> {
        let s = TcpStream::connect(addr)?;
        s.set_nodelay(true)?;
        Ok(s)
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    fn request(stream: &mut TcpStream, frame: &Frame) -> Result<Frame, BusError> {
        write_frame(stream, frame)?;
        read_frame(stream)?.ok_or(BusError::Closed)
    }
}

fn ack_of(reply: Frame) -> Result<Ack, BusError> {
    if let Some(e) = reply.error {
        return Err(BusError::Remote(e));
    }
    match (reply.op, reply.seq, reply.published_at) {
        (Op::Ack, Some(seq), Some(published_at)) => Ok(Ack { seq, published_at }),
        _ => Err(BusError::Protocol(format!("unexpected reply {:?}", reply.op))),
    }
}

impl BusHandle for RemoteBus {
    /// One reconnect attempt on a broken connection. A publish whose ack
    /// was lost may therefore be stored twice, which at-least-once allows.
    fn publish(&self, topic: &str, payload: Value) -> Result<Ack, BusError> {
        let frame = Frame {
            payload: Some(payload),
            ..Frame::new(Op::Publish, topic)
        };
        let mut conn = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        for attempt in 0..2 {
            if conn.is_none() {
                *conn = Some(Self::dial(self.addr)?);
            }
            match Self::request(conn.as_mut().expect("just dialed"), &frame) {
                Ok(reply) => return ack_of(reply),
                Err(e @ (BusError::Io(_) | BusError::Closed)) => {
                    *conn = None;
                    if attempt == 1 {
                        return Err(e);
                    }
                }
                Err(e) => return Err(e),
            }
        }
        unreachable!("loop returns on the second attempt")
    }

    fn subscribe(&self, patterns: &[&str], from_seq: u64) -> Result<Subscription, BusError> {
        let mut stream = Self::dial(self.addr)?;
        let frame = Frame {
            seq: Some(from_seq),
            ..Frame::new(Op::Subscribe, patterns.join(","))
        };
        let reply = Self::request(&mut stream, &frame)?;
        if let Some(e) = reply.error {
            return Err(BusError::Remote(e));
        }
        let (tx, rx) = mpsc::channel();
        let mut reader = stream.try_clone()?;
        thread::spawn(move || {
            while let Ok(Some(f)) = read_frame(&mut reader) {
                if f.op != Op::Deliver {
                    continue;
                }
                let env = Envelope {
                    topic: f.topic,
                    seq: f.seq.unwrap_or(0),
                    payload: f.payload.unwrap_or(Value::Null),
                    published_at: f.published_at.unwrap_or(0),
                };
                if tx.send(env).is_err() {
                    break;
                }
            }
        });
        Ok(Subscription::new(rx, Some(Box::new(CloseOnDrop(stream)))))
    }
}

struct CloseOnDrop(TcpStream);

impl Drop for CloseOnDrop {
    fn drop(&mut self) {
        let _ = self.0.shutdown(Shutdown::Both);
    }
}
