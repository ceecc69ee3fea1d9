//! Half-duplex serial servo bus: frame codec and a simulated four-servo chain.
//!
//! Wire format (all frames, instruction and status alike):
//!
//! ```text
//! 0xFF 0xFF id length instruction params... checksum
//! length   = params.len() + 2
//! checksum = !(id + length + instruction + sum(params)) mod 256
//! ```
//!
//! Status replies carry the servo's error flags in the instruction slot.
//! Register addresses follow the vendor's memory table: goal position at
//! 0x2A, goal speed at 0x2E, present position at 0x38, all 2 bytes little-endian.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transmission::{ServoRole, TICK_MAX, TICK_MIN};

pub const BROADCAST_ID: u8 = 0xFE;
pub const MAX_PARAMS: usize = 250;

pub const INST_PING: u8 = 0x01;
pub const INST_READ: u8 = 0x02;
pub const INST_WRITE: u8 = 0x03;
pub const INST_SYNC_WRITE: u8 = 0x83;

pub const REG_GOAL_POSITION: u8 = 0x2A;
pub const REG_GOAL_SPEED: u8 = 0x2E;
pub const REG_PRESENT_POSITION: u8 = 0x38;

/// Status error flag for an instruction the servo cannot carry out.
pub const STATUS_INSTRUCTION_ERROR: u8 = 0x08;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("header_error: expected FF FF, found {0:02X} {1:02X}")]
    Header(u8, u8),
    #[error("incomplete: need {needed} bytes, have {have}")]
    Incomplete { needed: usize, have: usize },
    #[error("checksum_error: expected {expected:02X}, actual {actual:02X}")]
    Checksum { expected: u8, actual: u8 },
    #[error("length_error: {0}")]
    Length(String),
    #[error("invalid_frame: {0}")]
    Invalid(String),
}

impl FrameError {
    /// Short machine-readable name.
    pub fn kind(&self) -> &'static str {
        match self {
            FrameError::Header(..) => "header_error",
            FrameError::Incomplete { .. } => "incomplete",
            FrameError::Checksum { .. } => "checksum_error",
            FrameError::Length(_) => "length_error",
            FrameError::Invalid(_) => "invalid_frame",
        }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, FrameError::Incomplete { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServoFrame {
    pub id: u8,
    pub instruction: u8,
    pub params: Vec<u8>,
}

impl ServoFrame {
    pub fn new(id: u8, instruction: u8, params: Vec<u8>) -> Result<Self, FrameError> {
        if id > BROADCAST_ID {
            return Err(FrameError::Invalid(format!("id {id} is reserved")));
        }
        if params.len() > MAX_PARAMS {
            return Err(FrameError::Length(format!("{} params exceed {MAX_PARAMS}", params.len())));
        }
        Ok(Self {
            id,
            instruction,
            params,
        })
    }

    pub fn ping(id: u8) -> Self {
        Self::new(id, INST_PING, vec![]).expect("ping frame is valid")
    }

    pub fn read(id: u8, address: u8, len: u8) -> Self {
        Self::new(id, INST_READ, vec![address, len]).expect("read frame is valid")
    }

    pub fn write_goal(id: u8, ticks: u16) -> Self {
        let [lo, hi] = ticks.to_le_bytes();
        Self::new(id, INST_WRITE, vec![REG_GOAL_POSITION, lo, hi]).expect("write frame is valid")
    }

    /// Goal positions for several servos in one broadcast frame.
    pub fn sync_write_goals(goals: &[(u8, u16)]) -> Result<Self, FrameError> {
        let mut params = vec![REG_GOAL_POSITION, 2];
        for &(id, ticks) in goals {
            params.push(id);
            params.extend_from_slice(&ticks.to_le_bytes());
        }
        Self::new(BROADCAST_ID, INST_SYNC_WRITE, params)
    }

    pub fn status(id: u8, error: u8, params: Vec<u8>) -> Self {
        Self::new(id, error, params).expect("status frame is valid")
    }

    pub fn checksum(&self) -> u8 {
        checksum(self.id, (self.params.len() + 2) as u8, self.instruction, &self.params)
    }

    pub fn encode(&self) -> Vec<u8> {
        encode_frame(self.id, self.instruction, &self.params).expect("constructed frames are valid")
    }
}

impl fmt::Display for ServoFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&to_hex(&self.encode()))
    }
}

fn checksum(id: u8, length: u8, instruction: u8, params: &[u8]) -> u8 {
    let sum = params
        .iter()
        .fold(id.wrapping_add(length).wrapping_add(instruction), |acc, b| acc.wrapping_add(*b));
    !sum
}

pub fn encode_frame(id: u8, instruction: u8, params: &[u8]) -> Result<Vec<u8>, FrameError> {
    let frame = ServoFrame::new(id, instruction, params.to_vec())?;
    let length = (params.len() + 2) as u8;
    let mut out = Vec::with_capacity(params.len() + 6);
    out.extend_from_slice(&[0xFF, 0xFF, id, length, instruction]);
    out.extend_from_slice(params);
    out.push(frame.checksum());
    Ok(out)
}

/// Parses exactly one frame occupying the whole buffer.
pub fn decode_frame(bytes: &[u8]) -> Result<ServoFrame, FrameError> {
    if bytes.len() >= 2 && (bytes[0] != 0xFF || bytes[1] != 0xFF) {
        return Err(FrameError::Header(bytes[0], bytes[1]));
    }
    if bytes.len() == 1 && bytes[0] != 0xFF {
        return Err(FrameError::Header(bytes[0], 0));
    }
    if bytes.len() < 4 {
        return Err(FrameError::Incomplete {
            needed: 6,
            have: bytes.len(),
        });
    }
    let length = bytes[3] as usize;
    if !(2..=MAX_PARAMS + 2).contains(&length) {
        return Err(FrameError::Length(format!("length byte {length} outside [2, {}]", MAX_PARAMS + 2)));
    }
    let total = length + 4;
    if bytes.len() < total {
        return Err(FrameError::Incomplete {
            needed: total,
            have: bytes.len(),
        });
    }
    if bytes.len() > total {
        return Err(FrameError::Length(format!(
            "length byte implies {total} bytes, buffer holds {}",
            bytes.len()
        )));
    }
    let id = bytes[2];
    let instruction = bytes[4];
    let params = &bytes[5..total - 1];
    let expected = checksum(id, length as u8, instruction, params);
    let actual = bytes[total - 1];
    if expected != actual {
        return Err(FrameError::Checksum { expected, actual });
    }
    ServoFrame::new(id, instruction, params.to_vec())
}

pub fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02X}")).collect::<Vec<_>>().join(" ")
}

/// Hex bytes separated by optional whitespace.
pub fn parse_hex(line: &str) -> Result<Vec<u8>, String> {
    let compact: String = line.split_whitespace().collect();
    hex::decode(&compact).map_err(|e| format!("bad hex: {e}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimServo {
    pub id: u8,
    pub role: ServoRole,
    /// Kept fractional so slow speeds still integrate; reported rounded.
    position: f64,
    pub goal: u16,
    /// ticks per second
    pub speed: f64,
}

impl SimServo {
    pub fn new(id: u8, role: ServoRole, position: u16, speed: f64) -> Self {
        let p = position.min(TICK_MAX as u16);
        Self {
            id,
            role,
            position: p as f64,
            goal: p,
            speed,
        }
    }

    pub fn position(&self) -> u16 {
        self.position.round() as u16
    }

    fn register(&self, address: u8) -> Option<u8> {
        let word = |v: u16, offset: u8| v.to_le_bytes()[offset as usize];
        match address {
            a if (REG_GOAL_POSITION..REG_GOAL_POSITION + 2).contains(&a) => Some(word(self.goal, a - REG_GOAL_POSITION)),
            a if (REG_GOAL_SPEED..REG_GOAL_SPEED + 2).contains(&a) => {
                Some(word(self.speed.round().clamp(0.0, u16::MAX as f64) as u16, a - REG_GOAL_SPEED))
            }
            a if (REG_PRESENT_POSITION..REG_PRESENT_POSITION + 2).contains(&a) => {
                Some(word(self.position(), a - REG_PRESENT_POSITION))
            }
            _ => None,
        }
    }

    /// Applies a register write; only whole goal-position or goal-speed words are writable.
    fn write(&mut self, address: u8, data: &[u8]) -> bool {
        if data.len() != 2 {
            return false;
        }
        let value = u16::from_le_bytes([data[0], data[1]]);
        match address {
            REG_GOAL_POSITION => {
                self.goal = value.clamp(TICK_MIN as u16, TICK_MAX as u16);
                true
            }
            REG_GOAL_SPEED => {
                self.speed = value as f64;
                true
            }
            _ => false,
        }
    }

    fn advance(&mut self, dt: f64) {
        let goal = self.goal as f64;
        let reach = self.speed * dt;
        let delta = goal - self.position;
        if delta.abs() <= reach {
            self.position = goal;
        } else {
            self.position += reach.copysign(delta);
        }
        self.position = self.position.clamp(TICK_MIN as f64, TICK_MAX as f64);
    }
}

pub const DEFAULT_SIM_SPEED: f64 = 500.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimBus {
    pub servos: Vec<SimServo>,
}

impl SimBus {
    /// Four servos with IDs 1 to 4 parked at `center`.
    pub fn four(center: u16) -> Self {
        Self {
            servos: ServoRole::ALL
                .iter()
                .enumerate()
                .map(|(i, role)| SimServo::new(i as u8 + 1, *role, center, DEFAULT_SIM_SPEED))
                .collect(),
        }
    }

    pub fn servo(&self, id: u8) -> Option<&SimServo> {
        self.servos.iter().find(|s| s.id == id)
    }

    fn servo_mut(&mut self, id: u8) -> Option<&mut SimServo> {
        self.servos.iter_mut().find(|s| s.id == id)
    }
}

pub fn sim_bus_step(bus: &mut SimBus, dt: f64) -> Result<(), String> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(format!("time step {dt} must be positive"));
    }
    for s in &mut bus.servos {
        s.advance(dt);
    }
    Ok(())
}

/// Executes one instruction frame. `None` means no servo answered: a
/// broadcast, or an id nobody on the bus owns.
pub fn bus_transaction(bus: &mut SimBus, frame: &ServoFrame) -> Option<ServoFrame> {
    if frame.id == BROADCAST_ID {
        if frame.instruction == INST_SYNC_WRITE {
            sync_write(bus, &frame.params);
        } else if frame.instruction == INST_WRITE && frame.params.len() >= 3 {
            let ids: Vec<u8> = bus.servos.iter().map(|s| s.id).collect();
            for id in ids {
                if let Some(s) = bus.servo_mut(id) {
                    s.write(frame.params[0], &frame.params[1..]);
                }
            }
        }
        return None;
    }
    let servo = bus.servo_mut(frame.id)?;
    let id = servo.id;
    let reply = match frame.instruction {
        INST_PING => ServoFrame::status(id, 0, vec![]),
        INST_READ if frame.params.len() == 2 => {
            let (address, len) = (frame.params[0], frame.params[1]);
            let data: Option<Vec<u8>> = (0..len).map(|k| servo.register(address.wrapping_add(k))).collect();
            match data {
                Some(d) if address.checked_add(len).is_some() => ServoFrame::status(id, 0, d),
                _ => ServoFrame::status(id, STATUS_INSTRUCTION_ERROR, vec![]),
            }
        }
        INST_WRITE if !frame.params.is_empty() => {
            let ok = servo.write(frame.params[0], &frame.params[1..]);
            ServoFrame::status(id, if ok { 0 } else { STATUS_INSTRUCTION_ERROR }, vec![])
        }
        _ => ServoFrame::status(id, STATUS_INSTRUCTION_ERROR, vec![]),
    };
    Some(reply)
}

fn sync_write(bus: &mut SimBus, params: &[u8]) {
    if params.len() < 2 {
        return;
    }
    let (address, len) = (params[0], params[1] as usize);
    if len == 0 {
        return;
    }
    for chunk in params[2..].chunks(len + 1) {
        if chunk.len() == len + 1 {
            if let Some(s) = bus.servo_mut(chunk[0]) {
                s.write(address, &chunk[1..]);
            }
        }
    }
}
