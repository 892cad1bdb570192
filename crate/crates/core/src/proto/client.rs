use std::io::Write;
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use log::info;

use crate::model::{Encoder, FeatureMask, FeatureSet, Signature};
use crate::{Error, Result, Scalar};

use super::wire::{encode_request, read_response, Frame, ScoreResponse, Status, WireError};

/// One sequential connection to a scoring server. No retries.
pub struct Client {
    stream: TcpStream,
}

impl Client {
    pub fn connect(endpoint: impl ToSocketAddrs) -> Result<Self> {
        let stream = TcpStream::connect(endpoint)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(Duration::from_secs(60)))?;
        Ok(Self { stream })
    }

    /// Sends a pre-encoded frame and reads the response.
    pub fn send_frame(&mut self, frame: &[u8]) -> Result<ScoreResponse> {
        self.stream.write_all(frame)?;
        match read_response(&mut self.stream)? {
            Frame::Ok(r) => Ok(r),
            Frame::Bad(e) => Err(e.into()),
            Frame::Closed => Err(Error::Wire(WireError::Truncated { need: 4, have: 0 })),
        }
    }

    pub fn score<T: Scalar>(&mut self, sig: &Signature<T>, mask: FeatureMask) -> Result<Vec<f32>> {
        let resp = self.send_frame(&encode_request(&sig.values, mask)?)?;
        match resp.status {
            Status::Ok => Ok(resp.scores),
            other => Err(Error::Status(other as u8)),
        }
    }
}

/// Encodes the masked features locally, sends the merged signature as a
/// single frame and returns the server's scores.
pub fn client_query<T: Scalar>(
    features: &FeatureSet<'_, T>,
    mask: FeatureMask,
    encoder: &Encoder<T>,
    endpoint: impl ToSocketAddrs,
) -> Result<Vec<f32>> {
    let sig = encoder.encode(features, mask)?;
    info!("query mask {} ({} values)", encoder.mask_label(mask), sig.values.len());
    Client::connect(endpoint)?.score(&sig, mask)
}
