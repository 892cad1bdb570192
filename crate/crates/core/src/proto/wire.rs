use std::io::{self, Read};

use thiserror::Error;

use crate::model::FeatureMask;
use crate::Scalar;

pub const REQUEST_MAGIC: &[u8; 4] = b"UFSG";
pub const PROTOCOL_VERSION: u8 = 1;
pub const REQUEST_HEADER_LEN: usize = 8;
pub const RESPONSE_HEADER_LEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("empty feature mask")]
    ZeroMask,
    #[error("truncated frame: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("{0} trailing bytes after frame")]
    Trailing(usize),
    #[error("signature dim {0} exceeds 65535")]
    Oversize(usize),
    #[error("unknown status {0}")]
    BadStatus(u8),
    #[error("response count {count} inconsistent with status {status}")]
    BadCount { status: u8, count: u16 },
}

impl WireError {
    /// Distinct small code per error kind, for logs.
    pub fn code(&self) -> u8 {
        match self {
            WireError::BadMagic => 1,
            WireError::BadVersion(_) => 2,
            WireError::ZeroMask => 3,
            WireError::Truncated { .. } => 4,
            WireError::Trailing(_) => 5,
            WireError::Oversize(_) => 6,
            WireError::BadStatus(_) => 7,
            WireError::BadCount { .. } => 8,
        }
    }

    /// Every request decoding failure is answered with "bad frame".
    pub fn status(&self) -> Status {
        Status::BadFrame
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Status {
    Ok = 0,
    BadFrame = 1,
    DimMismatch = 2,
    ServerError = 3,
}

impl Status {
    pub fn from_u8(v: u8) -> Result<Self, WireError> {
        Ok(match v {
            0 => Status::Ok,
            1 => Status::BadFrame,
            2 => Status::DimMismatch,
            3 => Status::ServerError,
            other => return Err(WireError::BadStatus(other)),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignatureRequest {
    pub version: u8,
    /// Informational only; scoring ignores it.
    pub mask: u8,
    pub values: Vec<f32>,
}

impl SignatureRequest {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreResponse {
    pub version: u8,
    pub status: Status,
    pub scores: Vec<f32>,
}

impl ScoreResponse {
    pub fn ok(scores: Vec<f32>) -> Self {
        Self {
            version: PROTOCOL_VERSION,
            status: Status::Ok,
            scores,
        }
    }

    pub fn error(status: Status) -> Self {
        Self {
            version: PROTOCOL_VERSION,
            status,
            scores: Vec::new(),
        }
    }
}

/// Rounds a score to f32 and keeps it inside the open unit interval.
pub fn to_wire_score<T: Scalar>(p: T) -> f32 {
    let v = p.as_f32();
    v.max(f32::MIN_POSITIVE).min(f32::one_below())
}

fn frame(header: [u8; 4], body: &[u8; 4], values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * values.len());
    out.extend_from_slice(&header);
    out.extend_from_slice(body);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Values are rounded to f32; `mask` must be nonempty.
pub fn encode_request<T: Scalar>(sig: &[T], mask: FeatureMask) -> Result<Vec<u8>, WireError> {
    if mask.is_empty() {
        return Err(WireError::ZeroMask);
    }
    let dim = u16::try_from(sig.len()).map_err(|_| WireError::Oversize(sig.len()))?;
    let values: Vec<f32> = sig.iter().map(|v| v.as_f32()).collect();
    let [d0, d1] = dim.to_le_bytes();
    Ok(frame(*REQUEST_MAGIC, &[PROTOCOL_VERSION, mask.bits(), d0, d1], &values))
}

fn check_request_header(h: &[u8]) -> Result<(u8, usize), WireError> {
    if &h[..4] != REQUEST_MAGIC {
        return Err(WireError::BadMagic);
    }
    if h[4] != PROTOCOL_VERSION {
        return Err(WireError::BadVersion(h[4]));
    }
    if h[5] == 0 {
        return Err(WireError::ZeroMask);
    }
    Ok((h[5], u16::from_le_bytes([h[6], h[7]]) as usize))
}

fn read_f32s(payload: &[u8]) -> Vec<f32> {
    payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

/// Parses exactly one request frame; trailing bytes are an error.
pub fn decode_request(bytes: &[u8]) -> Result<SignatureRequest, WireError> {
    if bytes.len() < REQUEST_HEADER_LEN {
        let k = bytes.len().min(4);
        if bytes[..k] != REQUEST_MAGIC[..k] {
            return Err(WireError::BadMagic);
        }
        return Err(WireError::Truncated {
            need: REQUEST_HEADER_LEN,
            have: bytes.len(),
        });
    }
    let (mask, dim) = check_request_header(&bytes[..REQUEST_HEADER_LEN])?;
    let need = REQUEST_HEADER_LEN + 4 * dim;
    if bytes.len() < need {
        return Err(WireError::Truncated {
            need,
            have: bytes.len(),
        });
    }
    if bytes.len() > need {
        return Err(WireError::Trailing(bytes.len() - need));
    }
    Ok(SignatureRequest {
        version: PROTOCOL_VERSION,
        mask,
        values: read_f32s(&bytes[REQUEST_HEADER_LEN..]),
    })
}

pub fn encode_response(resp: &ScoreResponse) -> Vec<u8> {
    let scores: &[f32] = if resp.status == Status::Ok { &resp.scores } else { &[] };
    let [c0, c1] = (scores.len().min(u16::MAX as usize) as u16).to_le_bytes();
    let mut out = Vec::with_capacity(4 + 4 * scores.len());
    out.extend_from_slice(&[resp.version, resp.status as u8, c0, c1]);
    for v in scores {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn check_response_header(h: &[u8]) -> Result<(u8, Status, usize), WireError> {
    if h[0] != PROTOCOL_VERSION {
        return Err(WireError::BadVersion(h[0]));
    }
    let status = Status::from_u8(h[1])?;
    let count = u16::from_le_bytes([h[2], h[3]]);
    if status != Status::Ok && count != 0 {
        return Err(WireError::BadCount { status: h[1], count });
    }
    Ok((h[0], status, count as usize))
}

pub fn decode_response(bytes: &[u8]) -> Result<ScoreResponse, WireError> {
    if bytes.len() < RESPONSE_HEADER_LEN {
        return Err(WireError::Truncated {
            need: RESPONSE_HEADER_LEN,
            have: bytes.len(),
        });
    }
    let (version, status, count) = check_response_header(&bytes[..RESPONSE_HEADER_LEN])?;
    let need = RESPONSE_HEADER_LEN + 4 * count;
    if bytes.len() < need {
        return Err(WireError::Truncated {
            need,
            have: bytes.len(),
        });
    }
    if bytes.len() > need {
        return Err(WireError::Trailing(bytes.len() - need));
    }
    Ok(ScoreResponse {
        version,
        status,
        scores: read_f32s(&bytes[RESPONSE_HEADER_LEN..]),
    })
}

/// Fills `buf` completely; returns how many bytes were read before EOF.
fn read_full(r: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(n)
}

/// Outcome of reading one frame from a stream.
#[derive(Debug)]
pub enum Frame<T> {
    /// Peer closed cleanly on a frame boundary.
    Closed,
    Ok(T),
    Bad(WireError),
}

/// Reads one request frame from a byte stream.
pub fn read_request(r: &mut impl Read) -> io::Result<Frame<SignatureRequest>> {
    let mut header = [0u8; REQUEST_HEADER_LEN];
    let n = read_full(r, &mut header)?;
    if n == 0 {
        return Ok(Frame::Closed);
    }
    if n < REQUEST_HEADER_LEN {
        return Ok(Frame::Bad(match decode_request(&header[..n]) {
            Err(e) => e,
            Ok(_) => unreachable!("short header cannot decode"),
        }));
    }
    let (mask, dim) = match check_request_header(&header) {
        Ok(v) => v,
        Err(e) => return Ok(Frame::Bad(e)),
    };
    let mut payload = vec![0u8; 4 * dim];
    let got = read_full(r, &mut payload)?;
    if got < payload.len() {
        return Ok(Frame::Bad(WireError::Truncated {
            need: REQUEST_HEADER_LEN + payload.len(),
            have: REQUEST_HEADER_LEN + got,
        }));
    }
    Ok(Frame::Ok(SignatureRequest {
        version: PROTOCOL_VERSION,
        mask,
        values: read_f32s(&payload),
    }))
}

pub fn read_response(r: &mut impl Read) -> io::Result<Frame<ScoreResponse>> {
    let mut header = [0u8; RESPONSE_HEADER_LEN];
    let n = read_full(r, &mut header)?;
    if n == 0 {
        return Ok(Frame::Closed);
    }
    if n < RESPONSE_HEADER_LEN {
        return Ok(Frame::Bad(WireError::Truncated {
            need: RESPONSE_HEADER_LEN,
            have: n,
        }));
    }
    let (version, status, count) = match check_response_header(&header) {
        Ok(v) => v,
        Err(e) => return Ok(Frame::Bad(e)),
    };
    let mut payload = vec![0u8; 4 * count];
    let got = read_full(r, &mut payload)?;
    if got < payload.len() {
        return Ok(Frame::Bad(WireError::Truncated {
            need: RESPONSE_HEADER_LEN + payload.len(),
            have: RESPONSE_HEADER_LEN + got,
        }));
    }
    Ok(Frame::Ok(ScoreResponse {
        version,
        status,
        scores: read_f32s(&payload),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_signature_frame() {
        let f = encode_request(&[0.0f64, 0.0], FeatureMask::single(0)).unwrap();
        assert_eq!(f.len(), 16);
        assert_eq!(&f[..4], b"UFSG");
        assert_eq!(f[4], PROTOCOL_VERSION);
        assert_eq!(f[5], 1);
        assert_eq!(&f[6..8], &[2, 0]);
        assert!(f[8..].iter().all(|b| *b == 0));
    }

    #[test]
    fn empty_mask_and_oversize_refused() {
        assert_eq!(encode_request(&[1.0f64], FeatureMask::EMPTY), Err(WireError::ZeroMask));
        let big = vec![0.0f32; 65536];
        assert_eq!(encode_request(&big, FeatureMask::single(0)), Err(WireError::Oversize(65536)));
        assert!(encode_request(&vec![0.0f32; 65535], FeatureMask::single(0)).is_ok());
    }

    #[test]
    fn malformed_requests() {
        let good = encode_request(&[1.0f32, 2.0, 3.0], FeatureMask::single(1)).unwrap();
        let mut bad = good.clone();
        bad[0] ^= 0xff;
        assert_eq!(decode_request(&bad), Err(WireError::BadMagic));
        let mut v = good.clone();
        v[4] = 9;
        assert_eq!(decode_request(&v), Err(WireError::BadVersion(9)));
        let mut m = good.clone();
        m[5] = 0;
        assert_eq!(decode_request(&m), Err(WireError::ZeroMask));
        assert!(matches!(decode_request(&good[..good.len() - 1]), Err(WireError::Truncated { .. })));
        assert!(matches!(decode_request(&good[..5]), Err(WireError::Truncated { .. })));
        assert_eq!(decode_request(b"XY"), Err(WireError::BadMagic));
        let mut t = good.clone();
        t.push(0);
        assert_eq!(decode_request(&t), Err(WireError::Trailing(1)));
        let codes: std::collections::BTreeSet<u8> = [
            WireError::BadMagic,
            WireError::BadVersion(0),
            WireError::ZeroMask,
            WireError::Truncated { need: 0, have: 0 },
            WireError::Trailing(0),
        ]
        .iter()
        .map(|e| e.code())
        .collect();
        assert_eq!(codes.len(), 5);
    }

    #[test]
    fn nan_payload_is_transported() {
        let f = encode_request(&[f32::NAN, f32::INFINITY], FeatureMask::single(0)).unwrap();
        let r = decode_request(&f).unwrap();
        assert!(r.values[0].is_nan());
        assert_eq!(r.values[1], f32::INFINITY);
    }

    #[test]
    fn error_responses_carry_no_scores() {
        let e = encode_response(&ScoreResponse::error(Status::DimMismatch));
        assert_eq!(e, vec![PROTOCOL_VERSION, 2, 0, 0]);
        assert_eq!(decode_response(&e).unwrap().status, Status::DimMismatch);
        assert!(matches!(
            decode_response(&[PROTOCOL_VERSION, 1, 1, 0, 0, 0, 0, 0]),
            Err(WireError::BadCount { .. })
        ));
        assert_eq!(decode_response(&[PROTOCOL_VERSION, 7, 0, 0]), Err(WireError::BadStatus(7)));
    }

    #[test]
    fn wire_scores_stay_open() {
        assert!(to_wire_score(1.0f64) < 1.0);
        assert!(to_wire_score(0.0f64) > 0.0);
        assert_eq!(to_wire_score(0.5f64), 0.5);
    }

    #[test]
    fn concatenated_frames_split_unambiguously() {
        let a = encode_request(&[1.0f32], FeatureMask::single(0)).unwrap();
        let b = encode_request(&[2.0f32, 3.0], FeatureMask::single(1)).unwrap();
        let mut stream = std::io::Cursor::new([a, b].concat());
        let mut got = Vec::new();
        loop {
            match read_request(&mut stream).unwrap() {
                Frame::Ok(r) => got.push(r.values),
                Frame::Closed => break,
                Frame::Bad(e) => panic!("{e}"),
            }
        }
        assert_eq!(got, vec![vec![1.0], vec![2.0, 3.0]]);
    }

    proptest! {
        #[test]
        fn request_roundtrip_bits(bits in prop::collection::vec(any::<u32>(), 0..64), mask in 1u8..) {
            let values: Vec<f32> = bits.iter().map(|b| f32::from_bits(*b)).collect();
            let frame = encode_request(&values, FeatureMask::from_bits(mask)).unwrap();
            prop_assert_eq!(frame.len(), 8 + 4 * values.len());
            let back = decode_request(&frame).unwrap();
            prop_assert_eq!(back.mask, mask);
            let back_bits: Vec<u32> = back.values.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(back_bits, bits);
        }

        #[test]
        fn response_roundtrip_bits(bits in prop::collection::vec(any::<u32>(), 0..64)) {
            let resp = ScoreResponse::ok(bits.iter().map(|b| f32::from_bits(*b)).collect());
            let back = decode_response(&encode_response(&resp)).unwrap();
            prop_assert_eq!(back.status, Status::Ok);
            let back_bits: Vec<u32> = back.scores.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(back_bits, bits);
        }

        #[test]
        fn decode_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
            let _ = decode_request(&bytes);
            let _ = decode_response(&bytes);
        }
    }
}
