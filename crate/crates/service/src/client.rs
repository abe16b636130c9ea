//! Blocking client for scripts and tests.

use std::io;
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use crate::protocol::{decode_server_message, encode, read_frame, write_frame, Command, Frame, ServerMessage};

pub struct Client {
    stream: TcpStream,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Client> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Client { stream })
    }

    pub fn send(&mut self, cmd: &Command) -> io::Result<()> {
        write_frame(&mut self.stream, &encode(cmd))
    }

    /// Sends raw bytes as one frame, valid or not.
    pub fn send_raw(&mut self, payload: &[u8]) -> io::Result<()> {
        write_frame(&mut self.stream, payload)
    }

    /// Waits up to `timeout` for the next message.
    pub fn recv(&mut self, timeout: Duration) -> io::Result<ServerMessage> {
        self.stream.set_read_timeout(Some(timeout))?;
        match read_frame(&mut self.stream)? {
            Frame::Message(bytes) => {
                decode_server_message(&bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
            }
            Frame::Oversized(len) => Err(io::Error::new(io::ErrorKind::InvalidData, format!("oversized frame {len}"))),
            Frame::Closed => Err(io::Error::new(io::ErrorKind::UnexpectedEof, "server closed the connection")),
        }
    }

    /// Reads messages until one satisfies `pred`, returning all of them.
    pub fn recv_until(
        &mut self,
        timeout: Duration,
        mut pred: impl FnMut(&ServerMessage) -> bool,
    ) -> io::Result<Vec<ServerMessage>> {
        let mut seen = Vec::new();
        loop {
            let msg = self.recv(timeout)?;
            let done = pred(&msg);
            seen.push(msg);
            if done {
                return Ok(seen);
            }
        }
    }

    /// Sends `cmd` and returns its reply, skipping streamed messages.
    pub fn request(&mut self, cmd: &Command, timeout: Duration) -> io::Result<ServerMessage> {
        self.send(cmd)?;
        let mut seen = self.recv_until(timeout, is_reply)?;
        Ok(seen.pop().expect("recv_until returns the matching message"))
    }
}

/// Whether `msg` answers a command rather than streaming a solve.
pub fn is_reply(msg: &ServerMessage) -> bool {
    matches!(
        msg,
        ServerMessage::Ack { .. }
            | ServerMessage::Rejected { .. }
            | ServerMessage::Error { .. }
            | ServerMessage::ProtocolError { .. }
    )
}
